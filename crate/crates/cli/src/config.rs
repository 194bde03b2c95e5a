//! Run configuration read from a TOML file.
//!
//! Relative paths are resolved against the directory holding the config.

use crate::error::CliError;
use epicount::forecast::ScoringRule;
use epicount::io::{self, CountsFormat};
use epicount::model::ComponentSpec;
use epicount::simulation::AggregateAxis;
use epicount::{
    Family, FitOptions, InterceptKind, ModelSpec, RegionGraph, SurveillanceCounts, WeightKind,
    WeightSpec,
};
use serde::Deserialize;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: Option<DataConfig>,
    pub model: Option<ModelConfig>,
    #[serde(default)]
    pub fit: FitConfig,
    pub predict: Option<PredictConfig>,
    #[serde(default)]
    pub scoring: ScoringConfig,
    #[serde(default)]
    pub test: TestConfig,
    pub simulate: Option<SimulateConfig>,
    #[serde(default)]
    pub pit: PitConfig,
    #[serde(skip)]
    base: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Wide,
    Long,
}

impl From<Format> for CountsFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Wide => CountsFormat::Wide,
            Format::Long => CountsFormat::Long,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjacencyFormat {
    /// `region_a,region_b` rows.
    #[default]
    Edges,
    /// Square 0/1 matrix with region ids on both axes.
    Matrix,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub counts: PathBuf,
    #[serde(default)]
    pub format: Option<Format>,
    pub offsets: Option<PathBuf>,
    pub adjacency: Option<PathBuf>,
    #[serde(default)]
    pub adjacency_format: AdjacencyFormat,
    #[serde(default)]
    pub covariates: BTreeMap<String, PathBuf>,
}

/// One model component. A section that is present is included unless it
/// says `include = false`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentConfig {
    #[serde(default = "yes")]
    pub include: bool,
    #[serde(default)]
    pub intercept: InterceptKind,
    #[serde(default)]
    pub trend: bool,
    #[serde(default)]
    pub harmonics: usize,
    #[serde(default = "default_period")]
    pub period: f64,
    #[serde(default)]
    pub covariates: Vec<String>,
}

fn yes() -> bool {
    true
}

fn default_period() -> f64 {
    52.0
}

impl ComponentConfig {
    fn to_spec(&self) -> ComponentSpec {
        ComponentSpec {
            include: self.include,
            intercept: self.intercept,
            trend: self.trend,
            harmonics: self.harmonics,
            period: self.period,
            covariates: self.covariates.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightKindName {
    #[default]
    FirstOrder,
    PowerLaw,
    OrderFactor,
    Uniform,
    Fixed,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsConfig {
    #[serde(default)]
    pub kind: WeightKindName,
    #[serde(default)]
    pub normalized: bool,
    /// Highest separately weighted order (order factor only).
    pub max_order: Option<u32>,
    /// Square matrix file, rows are sources (fixed weights only).
    pub matrix: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub family: Family,
    pub endemic: Option<ComponentConfig>,
    pub autoregressive: Option<ComponentConfig>,
    pub spatiotemporal: Option<ComponentConfig>,
    #[serde(default)]
    pub weights: WeightsConfig,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub max_iter: Option<usize>,
    pub score_tol: Option<f64>,
    pub rel_tol: Option<f64>,
    pub max_halvings: Option<usize>,
    pub max_step: Option<f64>,
}

impl FitConfig {
    pub fn options(&self) -> FitOptions {
        let d = FitOptions::default();
        FitOptions {
            max_iter: self.max_iter.unwrap_or(d.max_iter),
            score_tol: self.score_tol.unwrap_or(d.score_tol),
            rel_tol: self.rel_tol.unwrap_or(d.rel_tol),
            max_halvings: self.max_halvings.unwrap_or(d.max_halvings),
            max_step: self.max_step.unwrap_or(d.max_step),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictConfig {
    pub start: usize,
    pub end: Option<usize>,
    #[serde(default)]
    pub refit: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoringConfig {
    /// Truncation tolerance of the ranked probability score.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_epsilon() -> f64 {
    epicount::forecast::RPS_EPSILON
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self {
            epsilon: default_epsilon(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestConfig {
    #[serde(default = "default_permutations")]
    pub permutations: usize,
    pub seed: Option<u64>,
    #[serde(default = "default_rule")]
    pub rule: ScoringRule,
}

fn default_permutations() -> usize {
    epicount::forecast::DEFAULT_PERMUTATIONS
}

fn default_rule() -> ScoringRule {
    ScoringRule::Log
}

impl Default for TestConfig {
    fn default() -> Self {
        Self {
            permutations: default_permutations(),
            seed: None,
            rule: default_rule(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub t0: usize,
    pub horizon: usize,
    pub paths: usize,
    pub seed: Option<u64>,
    #[serde(default = "default_axis")]
    pub aggregate: AggregateAxis,
}

fn default_axis() -> AggregateAxis {
    AggregateAxis::Time
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PitConfig {
    #[serde(default = "default_bins")]
    pub bins: usize,
}

fn default_bins() -> usize {
    10
}

impl Default for PitConfig {
    fn default() -> Self {
        Self {
            bins: default_bins(),
        }
    }
}

/// Panel and graph assembled from the config.
pub struct Inputs {
    pub data: SurveillanceCounts,
    pub graph: Option<RegionGraph>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = io::read_text(path)?;
        let mut cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        cfg.base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    fn section<'a, T>(&self, s: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
        s.as_ref()
            .ok_or_else(|| CliError::Input(format!("config has no [{name}] section")))
    }

    pub fn data_config(&self) -> Result<&DataConfig, CliError> {
        self.section(&self.data, "data")
    }

    pub fn predict_config(&self) -> Result<&PredictConfig, CliError> {
        self.section(&self.predict, "predict")
    }

    pub fn simulate_config(&self) -> Result<&SimulateConfig, CliError> {
        self.section(&self.simulate, "simulate")
    }

    /// Region ids in counts-file order.
    pub fn region_ids(&self, format: Option<Format>) -> Result<Vec<String>, CliError> {
        let d = self.data_config()?;
        let fmt = format.or(d.format).unwrap_or(Format::Wide);
        Ok(io::read_counts(&self.resolve(&d.counts), fmt.into())?.0)
    }

    /// Graph from the adjacency file, matched to `ids` when given. Prints a
    /// warning for duplicate edge rows.
    pub fn graph(&self, ids: Option<&[String]>) -> Result<RegionGraph, CliError> {
        let d = self.data_config()?;
        let path = d
            .adjacency
            .as_ref()
            .ok_or_else(|| CliError::Input("config [data] has no adjacency file".into()))?;
        let path = self.resolve(path);
        match d.adjacency_format {
            AdjacencyFormat::Matrix => Ok(io::read_adjacency_matrix(&path, ids)?),
            AdjacencyFormat::Edges => {
                let (g, dup) = io::read_edge_list(&path, ids)?;
                if dup > 0 {
                    eprintln!(
                        "warning: {}: ignored {dup} duplicate edge row(s)",
                        path.display()
                    );
                }
                Ok(g)
            }
        }
    }

    pub fn inputs(&self, format: Option<Format>, need_graph: bool) -> Result<Inputs, CliError> {
        let d = self.data_config()?;
        let fmt = format.or(d.format).unwrap_or(Format::Wide);
        let (ids, counts) = io::read_counts(&self.resolve(&d.counts), fmt.into())?;
        let mut data = SurveillanceCounts::new(ids.clone(), counts)?;
        if let Some(p) = &d.offsets {
            data = data.with_offsets(io::read_panel(&self.resolve(p), &ids)?)?;
        }
        for (name, p) in &d.covariates {
            data = data.with_covariate(name.clone(), io::read_panel(&self.resolve(p), &ids)?)?;
        }
        let graph = if need_graph || d.adjacency.is_some() {
            Some(self.graph(Some(&ids))?)
        } else {
            None
        };
        Ok(Inputs { data, graph })
    }

    pub fn model(&self, ids: &[String]) -> Result<ModelSpec, CliError> {
        let m = self.section(&self.model, "model")?;
        let comp = |c: &Option<ComponentConfig>| {
            c.as_ref()
                .map_or_else(ComponentSpec::excluded, ComponentConfig::to_spec)
        };
        let w = &m.weights;
        let kind = match w.kind {
            WeightKindName::FirstOrder => WeightKind::FirstOrder,
            WeightKindName::PowerLaw => WeightKind::PowerLaw,
            WeightKindName::Uniform => WeightKind::Uniform,
            WeightKindName::OrderFactor => WeightKind::OrderFactor {
                max_order: w.max_order.ok_or_else(|| {
                    CliError::Input(
                        "order_factor weights need `max_order` in [model.weights]".into(),
                    )
                })?,
            },
            WeightKindName::Fixed => {
                let p = w.matrix.as_ref().ok_or_else(|| {
                    CliError::Input("fixed weights need a `matrix` file in [model.weights]".into())
                })?;
                WeightKind::Fixed {
                    matrix: io::read_matrix(&self.resolve(p), ids)?,
                }
            }
        };
        Ok(ModelSpec {
            endemic: comp(&m.endemic),
            autoregressive: comp(&m.autoregressive),
            spatiotemporal: comp(&m.spatiotemporal),
            weights: WeightSpec::new(kind, w.normalized),
            family: m.family,
        })
    }
}
