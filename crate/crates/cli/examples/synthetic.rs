//! Regenerates the bundled synthetic dataset:
//! `cargo run -p epicount-cli --example synthetic -- data/synthetic`.
//!
//! A 4 x 4 lattice observed weekly for three years, with population
//! offsets, yearly seasonality and normalized power-law spread.

use epicount::io;
use epicount::model::Layout;
use epicount::simulation::simulate_panel;
use epicount::{
    ComponentSpec, Family, ModelSpec, ParameterVector, RegionGraph, SurveillanceCounts, WeightSpec,
};
use ndarray::Array2;
use std::path::PathBuf;

const SEED: u64 = 20_240_101;
const WEEKS: usize = 156;

fn main() -> epicount::Result<()> {
    let dir = PathBuf::from(
        std::env::args()
            .nth(1)
            .unwrap_or_else(|| "data/synthetic".into()),
    );
    std::fs::create_dir_all(&dir).map_err(|source| epicount::Error::Io {
        path: dir.display().to_string(),
        source,
    })?;

    let graph = RegionGraph::lattice(4, 4);
    let ids = graph.region_ids().to_vec();
    let n = ids.len();

    // population shares between 3% and 10%, growing 0.2% a year
    let raw: Vec<f64> = (0..n).map(|i| 3.0 + ((i * 7) % 8) as f64).collect();
    let total: f64 = raw.iter().sum();
    let offsets = Array2::from_shape_fn((n, WEEKS), |(i, t)| {
        raw[i] / total * (1.0 + 0.002 * t as f64 / 52.0)
    });
    let mut start = Array2::<u64>::zeros((n, WEEKS));
    for i in 0..n {
        start[[i, 0]] = 2 + (i % 3) as u64;
    }
    let template = SurveillanceCounts::new(ids.clone(), start)?.with_offsets(offsets.clone())?;

    let spec = ModelSpec {
        endemic: ComponentSpec::intercept_only().with_harmonics(1),
        autoregressive: ComponentSpec::intercept_only(),
        spatiotemporal: ComponentSpec::intercept_only(),
        weights: WeightSpec::power_law(true),
        family: Family::NegBin,
    };
    let layout = Layout::new(&spec, &ids, template.trend_centre());
    let mut theta = ParameterVector::zeros(layout);
    for (name, value) in [
        ("end.(Intercept)", 4.0),
        ("end.sin(1*w*t)", 0.6),
        ("end.cos(1*w*t)", 0.3),
        ("ar.(Intercept)", 0.3f64.ln()),
        ("ne.(Intercept)", 0.25f64.ln()),
        ("d", 1.8f64.ln()),
        ("psi", 0.1f64.ln()),
    ] {
        theta.set(name, value)?;
    }
    let data = simulate_panel(&spec, &theta, &template, Some(&graph), SEED)?;

    io::write_counts_wide(&dir.join("counts.csv"), &ids, data.counts())?;
    io::write_panel(&dir.join("population.csv"), &ids, &offsets)?;
    let mut edges = String::from("region_a,region_b\n");
    for a in 0..n {
        for b in a + 1..n {
            if graph.adjacency()[[a, b]] {
                edges.push_str(&format!("{},{}\n", ids[a], ids[b]));
            }
        }
    }
    io::write_text(&dir.join("adjacency.csv"), &edges)?;
    println!("wrote {} regions x {WEEKS} weeks to {}", n, dir.display());
    Ok(())
}
