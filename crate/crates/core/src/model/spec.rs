use crate::error::{Error, Result};
use crate::graph::RegionGraph;
use crate::model::data::SurveillanceCounts;
use crate::model::family::Family;
use crate::scalar::Scalar;
use crate::weights::WeightSpec;
use serde::{Deserialize, Serialize};

/// The three additive parts of the conditional mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    /// `ν_it e_it`
    Endemic,
    /// `λ_it Y_{i,t-1}`
    Autoregressive,
    /// `φ_it Σ_j w_ji Y_{j,t-1}`
    Spatiotemporal,
}

impl Component {
    pub const ALL: [Component; 3] = [
        Component::Endemic,
        Component::Autoregressive,
        Component::Spatiotemporal,
    ];

    /// Prefix used in parameter names.
    pub fn prefix(self) -> &'static str {
        match self {
            Component::Endemic => "end",
            Component::Autoregressive => "ar",
            Component::Spatiotemporal => "ne",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterceptKind {
    /// One intercept shared by all regions.
    #[default]
    Common,
    /// One fixed intercept per region, no common intercept.
    PerRegionFixed,
    /// Common intercept plus iid normal region effects.
    PerRegionRandom,
}

/// Log-linear predictor of one component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSpec {
    pub include: bool,
    pub intercept: InterceptKind,
    pub trend: bool,
    /// Number of sine/cosine pairs.
    pub harmonics: usize,
    /// Period of the fundamental frequency, in time steps.
    pub period: f64,
    pub covariates: Vec<String>,
}

impl Default for ComponentSpec {
    fn default() -> Self {
        Self {
            include: false,
            intercept: InterceptKind::Common,
            trend: false,
            harmonics: 0,
            period: 52.0,
            covariates: Vec::new(),
        }
    }
}

impl ComponentSpec {
    pub fn excluded() -> Self {
        Self::default()
    }

    /// Included component with a common intercept only.
    pub fn intercept_only() -> Self {
        Self {
            include: true,
            ..Self::default()
        }
    }

    pub fn with_intercept(mut self, kind: InterceptKind) -> Self {
        self.intercept = kind;
        self
    }

    pub fn with_trend(mut self) -> Self {
        self.trend = true;
        self
    }

    pub fn with_harmonics(mut self, s: usize) -> Self {
        self.harmonics = s;
        self
    }

    pub fn with_period(mut self, period: f64) -> Self {
        self.period = period;
        self
    }

    pub fn with_covariate(mut self, name: impl Into<String>) -> Self {
        self.covariates.push(name.into());
        self
    }

    pub fn has_common_intercept(&self) -> bool {
        self.intercept != InterceptKind::PerRegionFixed
    }

    /// Names of the design-row columns in order.
    pub fn column_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        if self.has_common_intercept() {
            names.push("(Intercept)".to_string());
        }
        if self.trend {
            names.push("t".to_string());
        }
        for s in 1..=self.harmonics {
            names.push(format!("sin({s}*w*t)"));
            names.push(format!("cos({s}*w*t)"));
        }
        names.extend(self.covariates.iter().cloned());
        names
    }

    pub fn n_columns(&self) -> usize {
        usize::from(self.has_common_intercept())
            + usize::from(self.trend)
            + 2 * self.harmonics
            + self.covariates.len()
    }

    fn validate(&self, component: Component) -> Result<()> {
        if !(self.period > 0.0) {
            return Err(Error::invalid(format!(
                "{} component: period must be positive",
                component.prefix()
            )));
        }
        Ok(())
    }
}

/// Full model configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec<F> {
    pub endemic: ComponentSpec,
    pub autoregressive: ComponentSpec,
    pub spatiotemporal: ComponentSpec,
    pub weights: WeightSpec<F>,
    pub family: Family,
}

impl<F: Scalar> ModelSpec<F> {
    /// Endemic intercept only, Poisson.
    pub fn endemic_only(family: Family) -> Self {
        Self {
            endemic: ComponentSpec::intercept_only(),
            autoregressive: ComponentSpec::excluded(),
            spatiotemporal: ComponentSpec::excluded(),
            weights: WeightSpec::first_order(true),
            family,
        }
    }

    /// Intercepts in all three components with the given weights.
    pub fn all_intercepts(weights: WeightSpec<F>, family: Family) -> Self {
        Self {
            endemic: ComponentSpec::intercept_only(),
            autoregressive: ComponentSpec::intercept_only(),
            spatiotemporal: ComponentSpec::intercept_only(),
            weights,
            family,
        }
    }

    pub fn component(&self, c: Component) -> &ComponentSpec {
        match c {
            Component::Endemic => &self.endemic,
            Component::Autoregressive => &self.autoregressive,
            Component::Spatiotemporal => &self.spatiotemporal,
        }
    }

    pub fn component_mut(&mut self, c: Component) -> &mut ComponentSpec {
        match c {
            Component::Endemic => &mut self.endemic,
            Component::Autoregressive => &mut self.autoregressive,
            Component::Spatiotemporal => &mut self.spatiotemporal,
        }
    }

    pub fn has_epidemic(&self) -> bool {
        self.autoregressive.include || self.spatiotemporal.include
    }

    /// Structural checks against data and graph.
    pub fn validate(
        &self,
        data: &SurveillanceCounts<F>,
        graph: Option<&RegionGraph>,
    ) -> Result<()> {
        if !self.endemic.include {
            return Err(Error::invalid(
                "the endemic component must be included (the mean would otherwise vanish)",
            ));
        }
        for c in Component::ALL {
            let comp = self.component(c);
            comp.validate(c)?;
            if comp.include {
                for name in &comp.covariates {
                    if !data.covariates().contains_key(name) {
                        return Err(Error::UnknownCovariate {
                            name: name.clone(),
                            available: data.covariate_names(),
                        });
                    }
                }
            }
        }
        if self.spatiotemporal.include {
            let graph = graph.ok_or_else(|| {
                Error::invalid("the spatio-temporal component requires a region graph")
            })?;
            if graph.region_ids() != data.region_ids() {
                return Err(Error::invalid(
                    "region ids of the graph and the counts disagree (order matters)",
                ));
            }
            self.weights.validate(graph)?;
        } else if self.weights.is_estimable() {
            return Err(Error::invalid(
                "estimable weights require the spatio-temporal component",
            ));
        }
        Ok(())
    }
}
