//! Acceptance checks. Run with `cargo test -p epicount-cli --test acceptance`;
//! pass criterion numbers (`-- 5 6`) to run a subset.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use common::*;
use epicount::forecast::{spectral_radius, transition_matrix, PredictiveDistribution, RPS_EPSILON};
use epicount::inference::loglik;
use epicount::model::{conditional_mean, Layout};
use epicount::simulation::{draw_count, simulate_with};
use epicount::weights::weight_matrix;
use epicount::{
    dawid_sebastiani_score, fit, log_score, permutation_test, pit_histogram,
    ranked_probability_score, simulate_panel, wald_ci, Family, FitOptions, ModelSpec,
    ParameterVector, RegionGraph, SurveillanceCounts, WeightSpec,
};
use ndarray::{array, Array2};
use rand::Rng;
use statrs::distribution::{DiscreteCDF, NegativeBinomial, Poisson};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

type Criterion = (u32, &'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn gradient_hessian() -> Outcome {
    let start = Instant::now();
    let mut rng = rng(101);
    let (mut worst_s, mut worst_h, mut draws) = (0.0f64, 0.0f64, 0);
    let mut families = [0usize; 2];
    for draw in 0..14 {
        let n = rng.random_range(3..7);
        let extra = rng.random_range(0..n);
        let graph = random_graph(&mut rng, n, extra);
        for kind in weight_kinds(&graph, &mut rng) {
            let family = if draw % 2 == 0 {
                Family::Poisson
            } else {
                Family::NegBin
            };
            families[draw % 2] += 1;
            let inst = random_instance(&mut rng, n, 14, kind, family, graph.clone());
            let (s, h) = finite_difference_errors(&inst);
            worst_s = worst_s.max(s);
            worst_h = worst_h.max(h);
            draws += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        draws >= 50
            && families.iter().all(|&f| f > 0)
            && worst_s < 1e-5
            && worst_h < 1e-5
            && secs < 120.0,
        format!(
            "{draws} draws, max rel err score {worst_s:.1e}, information {worst_h:.1e}, {secs:.1}s"
        ),
    )
}

fn likelihood_oracle() -> Outcome {
    let mut rng = rng(102);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let n = rng.random_range(2..6);
        let graph = random_graph(&mut rng, n, 2);
        let kinds = weight_kinds(&graph, &mut rng);
        let kind = kinds[rng.random_range(0..kinds.len())].clone();
        let family = if rng.random_bool(0.5) {
            Family::Poisson
        } else {
            Family::NegBin
        };
        let n_t = rng.random_range(5..31);
        let inst = random_instance(&mut rng, n, n_t, kind, family, graph);
        let got = loglik(&inst.spec, &inst.theta, &inst.data, Some(&inst.graph)).unwrap();
        let want = oracle_loglik(
            &inst.spec,
            &inst.theta,
            &inst.data,
            Some(inst.graph.adjacency()),
        );
        worst = worst.max((got - want).abs());
    }
    outcome(
        worst < 1e-10,
        format!("10 instances, max |diff| {worst:.1e}"),
    )
}

fn weight_limits() -> Outcome {
    let mut rng = rng(103);
    let (mut worst_pl, mut worst_uniform) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let n = rng.random_range(2..12);
        let extra = rng.random_range(0..n);
        let graph = random_graph(&mut rng, n, extra);
        let steep = weight_matrix(&WeightSpec::power_law(true), &[50f64.ln()], &graph).unwrap();
        let first = weight_matrix(&WeightSpec::first_order(true), &[], &graph).unwrap();
        worst_pl = worst_pl.max((&steep - &first).iter().fold(0.0, |m, v| m.max(v.abs())));
        let flat = weight_matrix(&WeightSpec::power_law(false), &[0f64.ln()], &graph).unwrap();
        for ((j, i), w) in flat.indexed_iter() {
            let want = if i == j { 0.0 } else { 1.0 };
            worst_uniform = worst_uniform.max((w - want).abs());
        }
    }
    outcome(
        worst_pl < 1e-8 && worst_uniform == 0.0,
        format!("20 graphs, d = 50 vs first order {worst_pl:.1e}, d = 0 vs all ones {worst_uniform:.1e}"),
    )
}

fn orders_oracle() -> Outcome {
    let mut rng = rng(104);
    let mut mismatches = 0;
    for _ in 0..100 {
        let n = rng.random_range(1..=12);
        let p = rng.random_range(0.05..0.6);
        let mut edges = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                if rng.random_bool(p) {
                    edges.push((a, b));
                }
            }
        }
        let ids = (0..n).map(|i| format!("v{i}")).collect();
        let graph = RegionGraph::from_edges(ids, &edges).unwrap();
        let want = floyd_warshall(graph.adjacency());
        for (j, row) in want.iter().enumerate() {
            mismatches += row
                .iter()
                .enumerate()
                .filter(|&(i, &o)| graph.order(j, i) != o)
                .count();
        }
    }
    outcome(
        mismatches == 0,
        format!("100 graphs, {mismatches} mismatched pairs"),
    )
}

/// Normalized power-law NegBin model on an 8 x 8 lattice with d = 1.8.
fn power_law_replicate(seed: u64, n_t: usize) -> (ModelSpec, SurveillanceCounts, RegionGraph) {
    let graph = RegionGraph::lattice(8, 8);
    let n = graph.len();
    let spec = ModelSpec::all_intercepts(WeightSpec::power_law(true), Family::NegBin);
    let start = SurveillanceCounts::new(
        graph.region_ids().to_vec(),
        Array2::from_elem((n, n_t), 5u64),
    )
    .unwrap();
    let mut theta =
        ParameterVector::zeros(Layout::new(&spec, start.region_ids(), start.trend_centre()));
    for (name, v) in [
        ("end.(Intercept)", 1.0),
        ("ar.(Intercept)", 0.4f64.ln()),
        ("ne.(Intercept)", 0.3f64.ln()),
        ("psi", 0.1f64.ln()),
        ("d", 1.8f64.ln()),
    ] {
        theta.set(name, v).unwrap();
    }
    let data = simulate_panel(&spec, &theta, &start, Some(&graph), seed).unwrap();
    (spec, data, graph)
}

fn parameter_recovery() -> Outcome {
    let start = Instant::now();
    let (mut covered, mut converged) = (0, 0);
    for r in 0..20 {
        let (spec, data, graph) = power_law_replicate(5000 + r, 300);
        let f = fit(&spec, &data, Some(&graph), None, &FitOptions::default()).unwrap();
        converged += usize::from(f.converged);
        let (lo, hi) = wald_ci(&f, "d", 0.95).unwrap();
        covered += usize::from(f.converged && lo <= 1.8 && 1.8 <= hi);
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        covered >= 16 && secs < 1200.0,
        format!("{covered}/20 intervals cover d = 1.8, {converged}/20 converged, {secs:.1}s"),
    )
}

fn model_discrimination() -> Outcome {
    let mut wins = 0;
    for r in 0..50 {
        let (spec, data, graph) = power_law_replicate(6000 + r, 300);
        let opts = FitOptions::default();
        let pl = fit(&spec, &data, Some(&graph), None, &opts).unwrap();
        let fo_spec = ModelSpec {
            weights: WeightSpec::first_order(true),
            ..spec
        };
        let fo = fit(&fo_spec, &data, Some(&graph), None, &opts).unwrap();
        wins += usize::from(pl.converged && pl.aic.unwrap() < fo.aic.unwrap());
    }
    outcome(
        wins >= 45,
        format!("power law has lower AIC in {wins}/50 replicates"),
    )
}

fn brute_force_rps(family: Family, mu: f64, psi: f64, y: u64) -> f64 {
    let k_max = (10.0 * mu + 500.0).ceil() as u64;
    let cdf: Box<dyn Fn(u64) -> f64> = match family {
        Family::Poisson => {
            let d = Poisson::new(mu).unwrap();
            Box::new(move |k| d.cdf(k))
        }
        Family::NegBin => {
            let r = 1.0 / psi;
            let d = NegativeBinomial::new(r, r / (r + mu)).unwrap();
            Box::new(move |k| d.cdf(k))
        }
    };
    (0..=k_max)
        .map(|k| {
            let ind = if y <= k { 1.0 } else { 0.0 };
            (cdf(k) - ind).powi(2)
        })
        .sum()
}

fn random_target(rng: &mut impl Rng, mu_range: (f64, f64)) -> (Family, f64, f64) {
    let mu = rng.random_range(mu_range.0.ln()..mu_range.1.ln()).exp();
    if rng.random_bool(0.3) {
        (Family::Poisson, mu, 0.0)
    } else {
        (Family::NegBin, mu, rng.random_range(-6.0..0.0f64).exp())
    }
}

fn rps_truncation() -> Outcome {
    let mut rng = rng(107);
    let mut worst = 0.0f64;
    for k in 0..1000 {
        let (family, mu, psi) = random_target(&mut rng, (0.05, 200.0));
        let y = if k % 2 == 0 {
            draw_count(family, mu, psi, &mut rng).unwrap()
        } else {
            rng.random_range(0..(3.0 * mu) as u64 + 10)
        };
        let p = PredictiveDistribution::new(family, mu, psi, 0, 1).unwrap();
        let got = ranked_probability_score(&p, y, RPS_EPSILON);
        worst = worst.max((got - brute_force_rps(family, mu, psi, y)).abs());
    }
    outcome(
        worst < 1e-6,
        format!("1000 instances, max |diff| {worst:.1e}"),
    )
}

fn score_propriety() -> Outcome {
    let mut rng = rng(108);
    let n = 5000;
    let (mut truth, mut off) = ([0.0f64; 3], [0.0f64; 3]);
    for _ in 0..n {
        let (family, mu, psi) = random_target(&mut rng, (0.5, 50.0));
        let y = draw_count(family, mu, psi, &mut rng).unwrap();
        let p = PredictiveDistribution::new(family, mu, psi, 0, 1).unwrap();
        let q = PredictiveDistribution::new(family, 1.5 * mu, psi, 0, 1).unwrap();
        for (acc, d) in [(&mut truth, &p), (&mut off, &q)] {
            acc[0] += log_score(d, y) / n as f64;
            acc[1] += ranked_probability_score(d, y, RPS_EPSILON) / n as f64;
            acc[2] += dawid_sebastiani_score(d, y) / n as f64;
        }
    }
    outcome(
        (0..3).all(|k| truth[k] < off[k]),
        format!(
            "logS {:.4} < {:.4}, RPS {:.4} < {:.4}, DSS {:.4} < {:.4}",
            truth[0], off[0], truth[1], off[1], truth[2], off[2]
        ),
    )
}

fn ks_uniform(mut p: Vec<f64>) -> f64 {
    p.sort_by(f64::total_cmp);
    let n = p.len() as f64;
    p.iter()
        .enumerate()
        .map(|(i, &v)| ((i + 1) as f64 / n - v).max(v - i as f64 / n))
        .fold(0.0, f64::max)
}

fn permutation_calibration() -> Outcome {
    let mut rng = rng(109);
    let mut pvals = Vec::with_capacity(1000);
    for r in 0..1000u64 {
        let n = 40;
        let base: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..3.0)).collect();
        let a: Vec<f64> = base
            .iter()
            .map(|b| b + rng.random_range(0.0..1.0))
            .collect();
        let b: Vec<f64> = base
            .iter()
            .map(|b| b + rng.random_range(0.0..1.0))
            .collect();
        pvals.push(permutation_test(&a, &b, 999, r).unwrap().p_value);
    }
    let ks = ks_uniform(pvals);
    let same: Vec<f64> = (0..30).map(|_| rng.random_range(0.0..5.0)).collect();
    let p_same = permutation_test(&same, &same, 999, 7).unwrap().p_value;
    outcome(
        ks < 0.06 && p_same == 1.0,
        format!("KS {ks:.4} over 1000 p-values, identical inputs p = {p_same}"),
    )
}

fn pit_calibration() -> Outcome {
    let mut rng = rng(110);
    let mut preds = Vec::new();
    let mut obs = Vec::new();
    for k in 0..5000 {
        let (family, mu, psi) = random_target(&mut rng, (0.2, 60.0));
        preds.push(PredictiveDistribution::new(family, mu, psi, 0, k + 1).unwrap());
        obs.push(draw_count(family, mu, psi, &mut rng).unwrap());
    }
    let h = pit_histogram(&preds, &obs, 10).unwrap();
    let (lo, hi) = h
        .heights
        .iter()
        .fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
    outcome(
        lo >= 0.85 && hi <= 1.15,
        format!("heights within [{lo:.3}, {hi:.3}]"),
    )
}

fn simulation_consistency() -> Outcome {
    let graph = RegionGraph::lattice(3, 3);
    let n = graph.len();
    let n_paths = 50_000;
    let mut worst = 0.0f64;
    for (family, psi) in [(Family::Poisson, 0.0f64), (Family::NegBin, 0.2)] {
        let spec = ModelSpec::all_intercepts(WeightSpec::power_law(true), family);
        let start = SurveillanceCounts::new(
            graph.region_ids().to_vec(),
            Array2::from_elem((n, 10), 4u64),
        )
        .unwrap();
        let mut theta =
            ParameterVector::zeros(Layout::new(&spec, start.region_ids(), start.trend_centre()));
        theta.set("end.(Intercept)", 1.2).unwrap();
        theta.set("ar.(Intercept)", 0.5f64.ln()).unwrap();
        theta.set("ne.(Intercept)", 0.2f64.ln()).unwrap();
        theta.set("d", 1.5f64.ln()).unwrap();
        if family == Family::NegBin {
            theta.set("psi", psi.ln()).unwrap();
        }
        let data = simulate_panel(&spec, &theta, &start, Some(&graph), 11).unwrap();
        let mu = conditional_mean(&spec, &theta, &data, Some(&graph), 10).unwrap();
        let bundle = simulate_with(&spec, &theta, &data, Some(&graph), 9, 1, n_paths, 12).unwrap();
        for i in 0..n {
            let xs: Vec<f64> = (0..n_paths)
                .map(|p| bundle.paths[[p, i, 0]] as f64)
                .collect();
            let nf = n_paths as f64;
            let m = xs.iter().sum::<f64>() / nf;
            let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (nf - 1.0);
            let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / nf;
            let true_var = mu[i] * (1.0 + psi * mu[i]);
            worst = worst.max((m - mu[i]).abs() / (v / nf).sqrt());
            worst = worst.max((v - true_var).abs() / ((m4 - v * v) / nf).sqrt());
        }
    }
    outcome(
        worst < 4.0,
        format!("largest deviation {worst:.2} Monte-Carlo standard errors"),
    )
}

fn dominant_eigenvalue() -> Outcome {
    let mut rng = rng(112);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let graph = random_graph(&mut rng, 10, 6);
        let kinds = weight_kinds(&graph, &mut rng);
        let kind = kinds[rng.random_range(0..kinds.len())].clone();
        let inst = random_instance(&mut rng, 10, 8, kind, Family::NegBin, graph);
        let m =
            transition_matrix(&inst.spec, &inst.theta, &inst.data, Some(&inst.graph), 5).unwrap();
        let got = spectral_radius(&m, 1e-12, 100_000).unwrap();
        let dense = nalgebra::DMatrix::from_fn(10, 10, |r, c| m[[r, c]]);
        let want = dense
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        worst = worst.max((got - want).abs());
    }
    let hand: f64 = spectral_radius(&array![[0.3, 0.1], [0.1, 0.3]], 1e-14, 10_000).unwrap();
    outcome(
        worst < 1e-8 && (hand - 0.4).abs() < 1e-12,
        format!("20 matrices, max |diff| {worst:.1e}; 2x2 case {hand}"),
    )
}

fn cli_determinism() -> Outcome {
    let dir = tempfile::TempDir::new().unwrap();
    let base = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data/synthetic")
        .canonicalize()
        .unwrap();
    let mut text = std::fs::read_to_string(base.join("config.toml")).unwrap();
    for f in ["counts.csv", "population.csv", "adjacency.csv"] {
        text = text.replace(
            &format!("\"{f}\""),
            &format!("\"{}\"", base.join(f).display()),
        );
    }
    text = text.replace(
        "start = 105\nrefit = false",
        "start = 130\nend = 140\nrefit = true",
    );
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, text).unwrap();
    let c = cfg.to_str().unwrap();
    let runs: [(&[&str], &[&str]); 7] = [
        (&["orders", "--out", "orders.csv"], &["orders.csv"]),
        (
            &["fit", "--out", "fit.json", "--weights-out", "w.csv"],
            &["fit.json", "w.csv"],
        ),
        (&["predict", "--out", "p.csv"], &["p.csv"]),
        (&["score", "p.csv", "--out", "s.json"], &["s.json"]),
        (&["test", "p.csv", "p.csv", "--out", "t.json"], &["t.json"]),
        (
            &[
                "simulate",
                "--fit",
                "fit.json",
                "--out",
                "paths.csv",
                "--summary",
                "sim.json",
            ],
            &["paths.csv", "sim.json"],
        ),
        (&["pit", "p.csv", "--out", "pit.csv"], &["pit.csv"]),
    ];
    let pass = |threads: &str| -> Vec<Vec<u8>> {
        let mut outputs = Vec::new();
        for (args, files) in &runs {
            let status = Command::new(env!("CARGO_BIN_EXE_epicount"))
                .current_dir(dir.path())
                .args(["-c", c, "--threads", threads])
                .args(*args)
                .output()
                .unwrap()
                .status;
            assert!(status.success(), "{args:?} failed");
            for f in *files {
                outputs.push(std::fs::read(dir.path().join(f)).unwrap());
            }
        }
        outputs
    };
    let first = pass("1");
    let second = pass("3");
    let differing = first.iter().zip(&second).filter(|(a, b)| a != b).count();
    outcome(
        differing == 0,
        format!(
            "7 commands, {} output files, {differing} differ between runs",
            first.len()
        ),
    )
}

fn main() {
    let criteria: [Criterion; 13] = [
        (1, "gradient and information", gradient_hessian),
        (2, "likelihood oracle", likelihood_oracle),
        (3, "weight limits", weight_limits),
        (4, "neighbourhood orders", orders_oracle),
        (5, "parameter recovery", parameter_recovery),
        (6, "model discrimination", model_discrimination),
        (7, "RPS truncation", rps_truncation),
        (8, "score propriety", score_propriety),
        (9, "permutation test calibration", permutation_calibration),
        (10, "PIT calibration", pit_calibration),
        (11, "simulation consistency", simulation_consistency),
        (12, "dominant eigenvalue", dominant_eigenvalue),
        (13, "CLI determinism", cli_determinism),
    ];
    let selected: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for (k, name, check) in criteria {
        if !selected.is_empty() && !selected.contains(&k) {
            continue;
        }
        let start = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        failed += usize::from(!result.pass);
        println!(
            "criterion {k:>2} {}: {name}: {} ({:.1}s)",
            if result.pass { "PASS" } else { "FAIL" },
            result.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
