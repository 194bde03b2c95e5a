use epicount::simulation::{draw_count, path_rng};
use epicount::Family;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use tempfile::TempDir;

fn synthetic() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/synthetic")
}

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_epicount"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// The reference config with absolute data paths, passed through `edit`.
fn config(dir: &Path, edit: impl Fn(String) -> String) -> PathBuf {
    let base = synthetic().canonicalize().unwrap();
    let text = fs::read_to_string(base.join("config.toml")).unwrap();
    let text = ["counts.csv", "population.csv", "adjacency.csv"]
        .iter()
        .fold(text, |t, f| {
            t.replace(
                &format!("\"{f}\""),
                &format!("\"{}\"", base.join(f).display()),
            )
        });
    let path = dir.join("run.toml");
    fs::write(&path, edit(text)).unwrap();
    path
}

#[test]
fn fit_reproduces_golden_loglik() {
    let dir = TempDir::new().unwrap();
    let cfg = synthetic().join("config.toml");
    let o = run(
        dir.path(),
        &["-c", cfg.to_str().unwrap(), "fit", "--out", "fit.json"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let fit = json(&dir.path().join("fit.json"));
    let golden = json(&synthetic().join("golden_fit.json"));
    let (a, b) = (
        fit["loglik"].as_f64().unwrap(),
        golden["loglik"].as_f64().unwrap(),
    );
    assert!((a - b).abs() < 1e-6, "{a} vs golden {b}");
    assert_eq!(fit["convergence"]["converged"], true);
}

#[test]
fn fit_writes_weight_matrix_rows_summing_to_one() {
    let dir = TempDir::new().unwrap();
    let cfg = synthetic().join("config.toml");
    let o = run(
        dir.path(),
        &[
            "-c",
            cfg.to_str().unwrap(),
            "fit",
            "--out",
            "f.json",
            "--weights-out",
            "w.csv",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("w.csv")).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 16);
    for row in rows {
        let s: f64 = row
            .split(',')
            .skip(1)
            .map(|v| v.parse::<f64>().unwrap())
            .sum();
        assert!((s - 1.0).abs() < 1e-12);
    }
}

#[test]
fn every_command_is_byte_identical_on_rerun() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), |t| {
        t.replace(
            "start = 105\nrefit = false",
            "start = 140\nend = 146\nrefit = true",
        )
        .replace("paths = 1000", "paths = 200")
    });
    let c = cfg.to_str().unwrap();
    let runs: Vec<(Vec<&str>, Vec<&str>)> = vec![
        (vec!["orders", "--out", "orders.csv"], vec!["orders.csv"]),
        (
            vec!["fit", "--out", "fit.json", "--weights-out", "w.csv"],
            vec!["fit.json", "w.csv"],
        ),
        (vec!["predict", "--out", "p.csv"], vec!["p.csv"]),
        (vec!["score", "p.csv", "--out", "s.json"], vec!["s.json"]),
        (
            vec!["test", "p.csv", "p.csv", "--out", "t.json"],
            vec!["t.json"],
        ),
        (
            vec![
                "simulate",
                "--fit",
                "fit.json",
                "--out",
                "paths.csv",
                "--summary",
                "sim.json",
            ],
            vec!["paths.csv", "sim.json"],
        ),
        (vec!["pit", "p.csv", "--out", "pit.csv"], vec!["pit.csv"]),
    ];
    let mut first = Vec::new();
    for (args, outputs) in &runs {
        let o = run(dir.path(), &[&["-c", c][..], args].concat());
        assert!(o.status.success(), "{args:?}: {}", stderr(&o));
        for f in outputs {
            first.push(fs::read(dir.path().join(f)).unwrap());
        }
    }
    let mut second = Vec::new();
    for (args, outputs) in &runs {
        // a different thread count must not change anything
        let o = run(
            dir.path(),
            &[&["-c", c, "--threads", "2"][..], args].concat(),
        );
        assert!(o.status.success(), "{args:?}: {}", stderr(&o));
        for f in outputs {
            second.push(fs::read(dir.path().join(f)).unwrap());
        }
    }
    assert_eq!(first.len(), second.len());
    for (k, (a, b)) in first.iter().zip(&second).enumerate() {
        assert!(a == b, "output {k} differs between runs");
    }
}

#[test]
fn missing_covariate_file_is_named() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), |t| {
        t.replace(
            "adjacency_format = \"edges\"",
            "adjacency_format = \"edges\"\n\n[data.covariates]\nvacc = \"no_such_vacc.csv\"",
        )
    });
    let o = run(
        dir.path(),
        &["-c", cfg.to_str().unwrap(), "fit", "--out", "fit.json"],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("no_such_vacc.csv"), "{}", stderr(&o));
}

#[test]
fn nonconvergence_exits_2_with_diagnostics() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), |t| {
        t.replace("[predict]", "[fit]\nmax_iter = 1\n\n[predict]")
    });
    let c = cfg.to_str().unwrap();
    let o = run(dir.path(), &["-c", c, "fit", "--out", "fit.json"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert_eq!(
        json(&dir.path().join("fit.json"))["convergence"]["converged"],
        false
    );
    let o = run(
        dir.path(),
        &["-c", c, "fit", "--out", "fit.json", "--allow-nonconverged"],
    );
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn test_against_itself_gives_p_one() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), |t| t.replace("start = 105", "start = 150"));
    let c = cfg.to_str().unwrap();
    assert!(run(dir.path(), &["-c", c, "predict", "--out", "p.csv"])
        .status
        .success());
    let o = run(
        dir.path(),
        &["-c", c, "test", "p.csv", "p.csv", "--out", "t.json"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let t = json(&dir.path().join("t.json"));
    assert_eq!(t["p_value"].as_f64(), Some(1.0));
    assert_eq!(t["seed"].as_u64(), Some(1));
}

#[test]
fn stochastic_commands_require_a_seed() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), |t| {
        t.replace("seed = 1\n", "").replace("seed = 2024\n", "")
    });
    let c = cfg.to_str().unwrap();
    assert!(run(dir.path(), &["-c", c, "predict", "--out", "p.csv"])
        .status
        .success());
    let o = run(
        dir.path(),
        &["-c", c, "test", "p.csv", "p.csv", "--out", "t.json"],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("seed"));
    let o = run(
        dir.path(),
        &[
            "-c", c, "test", "p.csv", "p.csv", "--out", "t.json", "--seed", "9",
        ],
    );
    assert!(o.status.success());
    assert_eq!(json(&dir.path().join("t.json"))["seed"].as_u64(), Some(9));
}

#[test]
fn misaligned_score_files_report_first_mismatch() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), |t| t.replace("start = 105", "start = 150"));
    let c = cfg.to_str().unwrap();
    assert!(run(dir.path(), &["-c", c, "predict", "--out", "p.csv"])
        .status
        .success());
    let text = fs::read_to_string(dir.path().join("p.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let mut swapped = lines.clone();
    swapped.swap(3, 4);
    fs::write(dir.path().join("q.csv"), swapped.join("\n")).unwrap();
    for cmd in ["score", "test"] {
        let args = match cmd {
            "score" => vec!["-c", c, "score", "p.csv", "q.csv", "--out", "x.json"],
            _ => vec!["-c", c, "test", "p.csv", "q.csv", "--out", "x.json"],
        };
        let o = run(dir.path(), &args);
        assert_eq!(o.status.code(), Some(1));
        let e = stderr(&o);
        assert!(
            e.contains("row 3") && e.contains("r0c2") && e.contains("r0c3"),
            "{e}"
        );
    }
    let short = lines[..lines.len() - 1].join("\n");
    fs::write(dir.path().join("short.csv"), short).unwrap();
    let o = run(
        dir.path(),
        &["-c", c, "score", "p.csv", "short.csv", "--out", "x.json"],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(
        stderr(&o).contains("first unmatched target"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn simulate_final_sizes_are_finite() {
    let dir = TempDir::new().unwrap();
    let cfg = synthetic().join("config.toml");
    let c = cfg.to_str().unwrap();
    let golden = synthetic().join("golden_fit.json");
    let o = run(
        dir.path(),
        &[
            "-c",
            c,
            "simulate",
            "--fit",
            golden.to_str().unwrap(),
            "--out",
            "paths.csv",
            "--summary",
            "s.json",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let s = json(&dir.path().join("s.json"));
    assert_eq!(s["paths"].as_u64(), Some(1000));
    assert_eq!(s["horizon"].as_u64(), Some(20));
    assert_eq!(s["seed"].as_u64(), Some(2024));
    for k in ["mean", "q025", "median", "q975"] {
        let v = s["final_size"][k].as_f64().unwrap();
        assert!(v.is_finite() && v > 0.0, "{k} = {v}");
    }
    let rows = fs::read_to_string(dir.path().join("paths.csv"))
        .unwrap()
        .lines()
        .count();
    assert_eq!(rows, 1 + 1000 * 16 * 20);
}

#[test]
fn pit_of_self_drawn_observations_is_flat() {
    let dir = TempDir::new().unwrap();
    let cfg = synthetic().join("config.toml");
    let ids: Vec<String> = (0..4)
        .flat_map(|r| (0..4).map(move |c| format!("r{r}c{c}")))
        .collect();
    let mut text = String::from("region,time,y,mu,psi\n");
    for k in 0..5000 {
        let mu = 0.5 + (k % 37) as f64;
        let psi = [0.0, 0.2, 1.0][k % 3];
        let family = if psi == 0.0 {
            Family::Poisson
        } else {
            Family::NegBin
        };
        let y = draw_count(family, mu, psi, &mut path_rng(77, k)).unwrap();
        text.push_str(&format!("{},{},{y},{mu},{psi}\n", ids[k % 16], 1 + k / 16));
    }
    fs::write(dir.path().join("self.csv"), text).unwrap();
    let o = run(
        dir.path(),
        &[
            "-c",
            cfg.to_str().unwrap(),
            "pit",
            "self.csv",
            "--out",
            "pit.csv",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let out = fs::read_to_string(dir.path().join("pit.csv")).unwrap();
    let heights: Vec<f64> = out
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(heights.len(), 10);
    assert!(
        heights.iter().all(|h| (0.85..=1.15).contains(h)),
        "{heights:?}"
    );
}

fn orders_config(dir: &Path, regions: &[&str], edges: &str) -> PathBuf {
    let header = std::iter::once("time")
        .chain(regions.iter().copied())
        .collect::<Vec<_>>()
        .join(",");
    let row = std::iter::once("1")
        .chain(regions.iter().map(|_| "0"))
        .collect::<Vec<_>>()
        .join(",");
    fs::write(dir.join("counts.csv"), format!("{header}\n{row}\n")).unwrap();
    fs::write(dir.join("edges.csv"), format!("region_a,region_b\n{edges}")).unwrap();
    let cfg = dir.join("orders.toml");
    fs::write(
        &cfg,
        "[data]\ncounts = \"counts.csv\"\nadjacency = \"edges.csv\"\n",
    )
    .unwrap();
    cfg
}

#[test]
fn orders_of_a_path() {
    let dir = TempDir::new().unwrap();
    let cfg = orders_config(dir.path(), &["a", "b", "c", "d"], "a,b\nb,c\nc,d\n");
    let o = run(
        dir.path(),
        &["-c", cfg.to_str().unwrap(), "orders", "--out", "o.csv"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        fs::read_to_string(dir.path().join("o.csv")).unwrap(),
        "region,a,b,c,d\na,0,1,2,3\nb,1,0,1,2\nc,2,1,0,1\nd,3,2,1,0\n"
    );
}

#[test]
fn orders_without_edges_are_empty_cells() {
    let dir = TempDir::new().unwrap();
    let cfg = orders_config(dir.path(), &["a", "b"], "");
    let o = run(
        dir.path(),
        &["-c", cfg.to_str().unwrap(), "orders", "--out", "o.csv"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        fs::read_to_string(dir.path().join("o.csv")).unwrap(),
        "region,a,b\na,0,\nb,,0\n"
    );
}

#[test]
fn duplicate_edges_warn() {
    let dir = TempDir::new().unwrap();
    let cfg = orders_config(dir.path(), &["a", "b", "c"], "a,b\nb,a\nb,c\n");
    let o = run(
        dir.path(),
        &["-c", cfg.to_str().unwrap(), "orders", "--out", "o.csv"],
    );
    assert!(o.status.success());
    assert!(stderr(&o).contains("duplicate"), "{}", stderr(&o));
    assert_eq!(
        fs::read_to_string(dir.path().join("o.csv")).unwrap(),
        "region,a,b,c\na,0,1,2\nb,1,0,1\nc,2,1,0\n"
    );
}

#[test]
fn malformed_counts_report_file_and_line() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("counts.csv"), "time,a,b\n1,3,4\n2,x,1\n").unwrap();
    fs::write(dir.path().join("edges.csv"), "region_a,region_b\na,b\n").unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(
        &cfg,
        "[data]\ncounts = \"counts.csv\"\nadjacency = \"edges.csv\"\n",
    )
    .unwrap();
    let o = run(
        dir.path(),
        &["-c", cfg.to_str().unwrap(), "orders", "--out", "o.csv"],
    );
    assert_eq!(o.status.code(), Some(1));
    let e = stderr(&o);
    assert!(e.contains("counts.csv:3"), "{e}");
}

#[test]
fn long_format_flag_reads_long_counts() {
    let dir = TempDir::new().unwrap();
    fs::write(
        dir.path().join("counts.csv"),
        "region,time,count\nb,1,0\na,1,2\nb,2,1\na,2,3\n",
    )
    .unwrap();
    fs::write(dir.path().join("edges.csv"), "region_a,region_b\na,b\n").unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(
        &cfg,
        "[data]\ncounts = \"counts.csv\"\nadjacency = \"edges.csv\"\n",
    )
    .unwrap();
    let c = cfg.to_str().unwrap();
    assert_eq!(
        run(dir.path(), &["-c", c, "orders", "--out", "o.csv"])
            .status
            .code(),
        Some(1)
    );
    let o = run(
        dir.path(),
        &["-c", c, "--format", "long", "orders", "--out", "o.csv"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    // region order follows first appearance in the counts file
    assert_eq!(
        fs::read_to_string(dir.path().join("o.csv")).unwrap(),
        "region,b,a\nb,0,1\na,1,0\n"
    );
}
