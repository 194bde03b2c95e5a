use crate::config::{Format, RunConfig};
use crate::error::CliError;
use epicount::forecast::{MeanScores, ScoringRule};
use epicount::io::{self, PredictionRow};
use epicount::model::{Component, InterceptKind, Layout};
use epicount::simulation::{final_size_summary, AggregateAxis, FinalSizeSummary};
use epicount::{
    aggregate_paths, fit_random_effects, one_step_ahead, permutation_test, pit_histogram,
    simulate_paths, weights, FitResult, ModelSpec, PermutationResult, RandomEffectsSpec,
    ScoreTable,
};
use ndarray::s;
use serde::Serialize;
use std::path::Path;

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(epicount::Error::from)?;
    text.push('\n');
    Ok(io::write_text(path, &text)?)
}

fn has_random_effects(spec: &ModelSpec) -> bool {
    Component::ALL.into_iter().any(|c| {
        let comp = spec.component(c);
        comp.include && comp.intercept == InterceptKind::PerRegionRandom
    })
}

pub fn orders(cfg: &RunConfig, fmt: Option<Format>, out: &Path) -> Result<(), CliError> {
    let ids = cfg.region_ids(fmt)?;
    let graph = cfg.graph(Some(&ids))?;
    Ok(io::write_orders(out, &graph)?)
}

#[derive(Serialize)]
struct Convergence {
    converged: bool,
}

/// Written in place of the fit document when the optimizer fails.
#[derive(Serialize)]
struct FitFailure<'a> {
    convergence: Convergence,
    error: &'a str,
}

pub fn fit(
    cfg: &RunConfig,
    fmt: Option<Format>,
    out: &Path,
    weights_out: Option<&Path>,
    allow_nonconverged: bool,
) -> Result<(), CliError> {
    let inputs = cfg.inputs(fmt, false)?;
    let spec = cfg.model(inputs.data.region_ids())?;
    let options = cfg.fit.options();
    let graph = inputs.graph.as_ref();
    let result = if has_random_effects(&spec) {
        fit_random_effects(
            &spec,
            &inputs.data,
            graph,
            &RandomEffectsSpec::from_model(&spec),
            &options,
        )
    } else {
        epicount::fit(&spec, &inputs.data, graph, None, &options)
    };
    let fitted = match result {
        Ok(f) => f,
        Err(e) if !e.is_input_error() => {
            let msg = e.to_string();
            write_json(
                out,
                &FitFailure {
                    convergence: Convergence { converged: false },
                    error: &msg,
                },
            )?;
            return Err(CliError::Numerical(msg));
        }
        Err(e) => return Err(e.into()),
    };
    let mut json = fitted.to_json()?;
    json.push('\n');
    io::write_text(out, &json)?;
    if let Some(path) = weights_out {
        write_weights(&fitted, inputs.data.region_ids(), graph, path)?;
    }
    println!(
        "loglik {} after {} iterations, converged: {}",
        fitted.loglik, fitted.iterations, fitted.converged
    );
    if !fitted.converged && !allow_nonconverged {
        return Err(CliError::NotConverged(format!(
            "optimizer did not converge (score norm {:e}); diagnostics written to {}",
            fitted.final_score_norm,
            out.display()
        )));
    }
    Ok(())
}

fn write_weights(
    fitted: &FitResult,
    ids: &[String],
    graph: Option<&epicount::RegionGraph>,
    path: &Path,
) -> Result<(), CliError> {
    let graph = match graph {
        Some(g) if fitted.spec.spatiotemporal.include => g,
        _ => {
            return Err(CliError::Input(
                "a weight matrix needs a spatio-temporal component and an adjacency file".into(),
            ))
        }
    };
    let params = fitted
        .spec
        .weights
        .param_names()
        .iter()
        .map(|n| fitted.theta_hat.get(n))
        .collect::<epicount::Result<Vec<f64>>>()?;
    let w = weights::weight_matrix(&fitted.spec.weights, &params, graph)?;
    Ok(io::write_matrix(path, ids, &w)?)
}

pub fn predict(
    cfg: &RunConfig,
    fmt: Option<Format>,
    out: &Path,
    allow_nonconverged: bool,
) -> Result<(), CliError> {
    let inputs = cfg.inputs(fmt, false)?;
    let spec = cfg.model(inputs.data.region_ids())?;
    if has_random_effects(&spec) {
        return Err(CliError::Input(
            "rolling forecasts use fixed-effect fits; use per_region_fixed instead of per_region_random".into(),
        ));
    }
    let p = cfg.predict_config()?;
    let end = p.end.unwrap_or(inputs.data.n_times());
    let forecasts = one_step_ahead(
        &spec,
        &inputs.data,
        inputs.graph.as_ref(),
        p.start,
        end,
        p.refit,
        &cfg.fit.options(),
    )?;
    let dists: Vec<_> = forecasts.iter().map(|f| f.dist).collect();
    let table = ScoreTable::against(&dists, &inputs.data, cfg.scoring.epsilon)?;
    io::write_scores(out, inputs.data.region_ids(), &table.records)?;
    let m = table.means();
    println!(
        "{} targets; mean logS {} RPS {} DSS {}",
        table.len(),
        m.log_s,
        m.rps,
        m.dss
    );
    let failed: Vec<usize> = {
        let mut t: Vec<usize> = forecasts
            .iter()
            .filter(|f| !f.fit_converged)
            .map(|f| f.dist.time)
            .collect();
        t.dedup();
        t
    };
    if !failed.is_empty() && !allow_nonconverged {
        return Err(CliError::NotConverged(format!(
            "fits for forecast times {failed:?} did not converge; predictions written to {}",
            out.display()
        )));
    }
    Ok(())
}

fn target(ids: &[String], r: &PredictionRow) -> String {
    format!(
        "(region {}, time {}, y {})",
        ids[r.dist.region], r.dist.time, r.y
    )
}

/// Paired files must list the same targets in the same order.
fn check_aligned(
    ids: &[String],
    a: &[PredictionRow],
    b: &[PredictionRow],
    names: (&Path, &Path),
) -> Result<(), CliError> {
    let same = |x: &PredictionRow, y: &PredictionRow| {
        x.dist.region == y.dist.region && x.dist.time == y.dist.time && x.y == y.y
    };
    if let Some(k) = a.iter().zip(b).position(|(x, y)| !same(x, y)) {
        return Err(CliError::Input(format!(
            "targets are misaligned at row {}: {} has {}, {} has {}",
            k + 1,
            names.0.display(),
            target(ids, &a[k]),
            names.1.display(),
            target(ids, &b[k])
        )));
    }
    if a.len() != b.len() {
        let (longer, rows, k) = if a.len() > b.len() {
            (names.0, a, b.len())
        } else {
            (names.1, b, a.len())
        };
        return Err(CliError::Input(format!(
            "{} has {} targets and {} has {}; first unmatched target is row {} of {}: {}",
            names.0.display(),
            a.len(),
            names.1.display(),
            b.len(),
            k + 1,
            longer.display(),
            target(ids, &rows[k])
        )));
    }
    Ok(())
}

/// Scores recomputed from `(y, mu, psi)`.
fn rescore(rows: &[PredictionRow], eps: f64) -> Result<ScoreTable, CliError> {
    let dists: Vec<_> = rows.iter().map(|r| r.dist).collect();
    let ys: Vec<u64> = rows.iter().map(|r| r.y).collect();
    Ok(ScoreTable::score(&dists, &ys, eps)?)
}

#[derive(Serialize)]
struct FileScores {
    file: String,
    means: MeanScores<f64>,
}

#[derive(Serialize)]
struct ScoreSummary {
    epsilon: f64,
    targets: usize,
    files: Vec<FileScores>,
    /// First file minus second file.
    difference: Option<MeanScores<f64>>,
}

pub fn score(
    cfg: &RunConfig,
    fmt: Option<Format>,
    files: &[std::path::PathBuf],
    out: &Path,
) -> Result<(), CliError> {
    let ids = cfg.region_ids(fmt)?;
    let eps = cfg.scoring.epsilon;
    let rows: Vec<Vec<PredictionRow>> = files
        .iter()
        .map(|f| io::read_predictions(f, &ids))
        .collect::<epicount::Result<_>>()?;
    if rows.len() == 2 {
        check_aligned(&ids, &rows[0], &rows[1], (&files[0], &files[1]))?;
    }
    let means: Vec<MeanScores<f64>> = rows
        .iter()
        .map(|r| rescore(r, eps).map(|t| t.means()))
        .collect::<Result<_, _>>()?;
    let difference = (means.len() == 2).then(|| MeanScores {
        log_s: means[0].log_s - means[1].log_s,
        rps: means[0].rps - means[1].rps,
        dss: means[0].dss - means[1].dss,
    });
    let summary = ScoreSummary {
        epsilon: eps,
        targets: rows[0].len(),
        files: files
            .iter()
            .zip(means)
            .map(|(f, m)| FileScores {
                file: f.display().to_string(),
                means: m,
            })
            .collect(),
        difference,
    };
    write_json(out, &summary)
}

fn score_column(rows: &[PredictionRow], rule: ScoringRule, eps: f64) -> Result<Vec<f64>, CliError> {
    let k = match rule {
        ScoringRule::Log => 0,
        ScoringRule::Rps => 1,
        ScoringRule::Dss => 2,
    };
    if rows.iter().all(|r| r.scores.is_some()) {
        return Ok(rows.iter().map(|r| r.scores.unwrap()[k]).collect());
    }
    Ok(rescore(rows, eps)?.column(rule))
}

#[derive(Serialize)]
struct TestReport {
    rule: ScoringRule,
    targets: usize,
    #[serde(flatten)]
    result: PermutationResult,
}

pub fn test(
    cfg: &RunConfig,
    fmt: Option<Format>,
    a: &Path,
    b: &Path,
    out: &Path,
    seed: Option<u64>,
    permutations: Option<usize>,
) -> Result<(), CliError> {
    let seed = seed.or(cfg.test.seed).ok_or_else(|| {
        CliError::Input("the permutation test needs a seed (`test.seed` or --seed)".into())
    })?;
    let ids = cfg.region_ids(fmt)?;
    let ra = io::read_predictions(a, &ids)?;
    let rb = io::read_predictions(b, &ids)?;
    check_aligned(&ids, &ra, &rb, (a, b))?;
    let rule = cfg.test.rule;
    let eps = cfg.scoring.epsilon;
    let sa = score_column(&ra, rule, eps)?;
    let sb = score_column(&rb, rule, eps)?;
    let result = permutation_test(
        &sa,
        &sb,
        permutations.unwrap_or(cfg.test.permutations),
        seed,
    )?;
    println!("p = {} (seed {seed})", result.p_value);
    write_json(
        out,
        &TestReport {
            rule,
            targets: sa.len(),
            result,
        },
    )
}

#[derive(Serialize)]
struct AggregateOut {
    region: Option<String>,
    time: Option<usize>,
    mean: f64,
    variance: f64,
    observed: Option<u64>,
    #[serde(rename = "RPS")]
    rps: Option<f64>,
    #[serde(rename = "DSS")]
    dss: Option<f64>,
}

#[derive(Serialize)]
struct SimulationSummary {
    seed: u64,
    t0: usize,
    horizon: usize,
    paths: usize,
    final_size: FinalSizeSummary,
    aggregate: AggregateAxis,
    rows: Vec<AggregateOut>,
}

pub fn simulate(
    cfg: &RunConfig,
    fmt: Option<Format>,
    fit_path: &Path,
    out: &Path,
    summary: &Path,
    seed: Option<u64>,
) -> Result<(), CliError> {
    let sc = cfg.simulate_config()?;
    let seed = seed.or(sc.seed).ok_or_else(|| {
        CliError::Input("simulation needs a seed (`simulate.seed` or --seed)".into())
    })?;
    let fitted = FitResult::from_json(&io::read_text(fit_path)?)
        .map_err(|e| CliError::Input(format!("{}: {e}", fit_path.display())))?;
    let inputs = cfg.inputs(fmt, false)?;
    let layout = &fitted.theta_hat.layout;
    let data = inputs.data.with_trend_centre(layout.trend_centre);
    let expected = Layout::new(&fitted.spec, data.region_ids(), layout.trend_centre);
    if expected.names() != layout.names() {
        return Err(CliError::Input(format!(
            "{} was fitted on different regions or a different model than the configured data",
            fit_path.display()
        )));
    }
    let bundle = simulate_paths(
        &fitted,
        &data,
        inputs.graph.as_ref(),
        sc.t0,
        sc.horizon,
        sc.paths,
        seed,
    )?;
    io::write_paths(out, &bundle)?;

    let end = sc.t0 + sc.horizon;
    let observed =
        (end <= data.n_times()).then(|| data.counts().slice(s![.., sc.t0..end]).to_owned());
    let rows = aggregate_paths(&bundle, sc.aggregate, observed.as_ref())?
        .into_iter()
        .map(|r| AggregateOut {
            region: r.region.map(|i| data.region_ids()[i].clone()),
            time: r.step.map(|h| sc.t0 + h),
            mean: r.mean,
            variance: r.variance,
            observed: r.observed,
            rps: r.rps,
            dss: r.dss,
        })
        .collect();
    let final_size = final_size_summary(&bundle);
    println!(
        "{} paths, final size mean {} (95% range {} to {}), seed {seed}",
        sc.paths, final_size.mean, final_size.q025, final_size.q975
    );
    write_json(
        summary,
        &SimulationSummary {
            seed,
            t0: sc.t0,
            horizon: sc.horizon,
            paths: sc.paths,
            final_size,
            aggregate: sc.aggregate,
            rows,
        },
    )
}

pub fn pit(
    cfg: &RunConfig,
    fmt: Option<Format>,
    predictions: &Path,
    out: &Path,
    bins: Option<usize>,
) -> Result<(), CliError> {
    let ids = cfg.region_ids(fmt)?;
    let rows = io::read_predictions(predictions, &ids)?;
    let dists: Vec<_> = rows.iter().map(|r| r.dist).collect();
    let ys: Vec<u64> = rows.iter().map(|r| r.y).collect();
    let hist = pit_histogram(&dists, &ys, bins.unwrap_or(cfg.pit.bins))?;
    if hist.n_skipped > 0 {
        eprintln!(
            "warning: {} observation(s) had zero predictive probability and were skipped",
            hist.n_skipped
        );
    }
    Ok(io::write_pit(out, &hist)?)
}
