//! CSV ingestion and export.
//!
//! Region order always follows the counts file; every other input is
//! matched to it by region id. Floats are written in shortest round-trip
//! form, so re-reading an output reproduces the exact values.

use crate::error::{Error, Result};
use crate::forecast::{PitHistogram, PredictiveDistribution, ScoreRecord};
use crate::graph::RegionGraph;
use crate::model::family::Family;
use crate::simulation::SimulationBundle;
use ndarray::Array2;
use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::Write;
use std::path::Path;

/// Layout of a counts file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CountsFormat {
    /// `time,<region>,<region>,...`, one row per time point.
    Wide,
    /// `region,time,count`, one row per cell.
    Long,
}

fn path_str(path: &Path) -> String {
    path.display().to_string()
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path_str(path),
        source,
    })?;
    Ok(csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(file))
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|source| Error::Io {
        path: path_str(path),
        source,
    })?;
    Ok(csv::Writer::from_writer(file))
}

struct Rows {
    path: String,
    header: Vec<String>,
    rows: Vec<(usize, Vec<String>)>,
}

impl Rows {
    fn read(path: &Path) -> Result<Self> {
        let mut rdr = reader(path)?;
        let p = path_str(path);
        let header = rdr
            .headers()
            .map_err(|e| parse_err(&p, 1, e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map_or(0, |pos| pos.line() as usize);
                parse_err(&p, line, e.to_string())
            })?;
            let line = rec.position().map_or(0, |pos| pos.line() as usize);
            rows.push((line, rec.iter().map(str::to_string).collect()));
        }
        Ok(Self {
            path: p,
            header,
            rows,
        })
    }

    fn err(&self, line: usize, msg: impl Into<String>) -> Error {
        parse_err(&self.path, line, msg.into())
    }

    fn column(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| self.err(1, format!("missing column `{name}`")))
    }
}

fn parse_err(path: &str, line: usize, msg: String) -> Error {
    Error::Parse {
        path: path.to_string(),
        line,
        msg,
    }
}

fn parse<T: std::str::FromStr>(rows: &Rows, line: usize, what: &str, s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| rows.err(line, format!("cannot parse {what} from `{s}`")))
}

/// Checks that the header's region columns are a permutation of `ids` and
/// returns, for each header column after the first, its position in `ids`.
fn match_regions(rows: &Rows, columns: &[String], ids: &[String]) -> Result<Vec<usize>> {
    let index: HashMap<&str, usize> = ids
        .iter()
        .enumerate()
        .map(|(k, s)| (s.as_str(), k))
        .collect();
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(columns.len());
    for c in columns {
        let k = *index
            .get(c.as_str())
            .ok_or_else(|| rows.err(1, format!("region `{c}` is not in the counts file")))?;
        if !seen.insert(k) {
            return Err(rows.err(1, format!("region `{c}` appears twice")));
        }
        out.push(k);
    }
    if let Some(missing) = ids.iter().enumerate().find(|(k, _)| !seen.contains(k)) {
        return Err(rows.err(1, format!("region `{}` is missing", missing.1)));
    }
    Ok(out)
}

type WideCells = (Vec<String>, Vec<Vec<String>>, Vec<usize>);

/// Wide table (`time,<ids>`) with consecutive times `1..=T`; returns the
/// header region ids, the region x time matrix of raw cells and the file
/// line of each time.
fn read_wide_cells(rows: &Rows) -> Result<WideCells> {
    if rows.header.len() < 2 {
        return Err(rows.err(
            1,
            "expected a `time` column followed by one column per region",
        ));
    }
    let regions: Vec<String> = rows.header[1..].to_vec();
    let mut cells = vec![Vec::with_capacity(rows.rows.len()); regions.len()];
    for (k, (line, rec)) in rows.rows.iter().enumerate() {
        let t: usize = parse(rows, *line, "time", &rec[0])?;
        if t != k + 1 {
            return Err(rows.err(*line, format!("expected time {}, found {t}", k + 1)));
        }
        if rec.len() != rows.header.len() {
            return Err(rows.err(
                *line,
                format!("expected {} fields, found {}", rows.header.len(), rec.len()),
            ));
        }
        for (r, v) in rec[1..].iter().enumerate() {
            cells[r].push(v.clone());
        }
    }
    if rows.rows.is_empty() {
        return Err(rows.err(1, "no time points"));
    }
    Ok((regions, cells, rows.rows.iter().map(|(l, _)| *l).collect()))
}

/// Reads a counts file; the region order of the file becomes the canonical
/// order.
pub fn read_counts(path: &Path, format: CountsFormat) -> Result<(Vec<String>, Array2<u64>)> {
    let rows = Rows::read(path)?;
    match format {
        CountsFormat::Wide => {
            let (ids, cells, lines) = read_wide_cells(&rows)?;
            let mut set = BTreeSet::new();
            if let Some(dup) = ids.iter().find(|id| !set.insert(id.as_str())) {
                return Err(rows.err(1, format!("region `{dup}` appears twice")));
            }
            let n_t = cells[0].len();
            let mut y = Array2::zeros((ids.len(), n_t));
            for (i, col) in cells.iter().enumerate() {
                for (t, v) in col.iter().enumerate() {
                    y[[i, t]] = parse(&rows, lines[t], "a nonnegative count", v)?;
                }
            }
            Ok((ids, y))
        }
        CountsFormat::Long => {
            let (rc, tc, cc) = (
                rows.column("region")?,
                rows.column("time")?,
                rows.column("count")?,
            );
            let mut ids: Vec<String> = Vec::new();
            let mut index = HashMap::new();
            let mut cells: HashMap<(usize, usize), (usize, u64)> = HashMap::new();
            let mut n_t = 0;
            for (line, rec) in &rows.rows {
                let id = rec[rc].clone();
                let i = *index.entry(id.clone()).or_insert_with(|| {
                    ids.push(id);
                    ids.len() - 1
                });
                let t: usize = parse(&rows, *line, "time", &rec[tc])?;
                if t == 0 {
                    return Err(rows.err(*line, "times start at 1"));
                }
                let y: u64 = parse(&rows, *line, "a nonnegative count", &rec[cc])?;
                if let Some((first, _)) = cells.insert((i, t), (*line, y)) {
                    return Err(rows.err(
                        *line,
                        format!("duplicate cell (already given on line {first})"),
                    ));
                }
                n_t = n_t.max(t);
            }
            if ids.is_empty() {
                return Err(rows.err(1, "no counts"));
            }
            let mut y = Array2::zeros((ids.len(), n_t));
            for i in 0..ids.len() {
                for t in 1..=n_t {
                    let (_, v) = cells.get(&(i, t)).ok_or_else(|| {
                        rows.err(
                            0,
                            format!("missing count for region `{}` at time {t}", ids[i]),
                        )
                    })?;
                    y[[i, t - 1]] = *v;
                }
            }
            Ok((ids, y))
        }
    }
}

/// Reads a wide real-valued panel (offsets, covariates) and reorders its
/// columns to `ids`. It may cover more times than the counts.
pub fn read_panel(path: &Path, ids: &[String]) -> Result<Array2<f64>> {
    let rows = Rows::read(path)?;
    let (regions, cells, lines) = read_wide_cells(&rows)?;
    let pos = match_regions(&rows, &regions, ids)?;
    let n_t = cells[0].len();
    let mut m = Array2::zeros((ids.len(), n_t));
    for (c, col) in cells.iter().enumerate() {
        for (t, v) in col.iter().enumerate() {
            let x: f64 = parse(&rows, lines[t], "a number", v)?;
            if !x.is_finite() {
                return Err(rows.err(lines[t], format!("non-finite value `{v}`")));
            }
            m[[pos[c], t]] = x;
        }
    }
    Ok(m)
}

/// Square table with region ids on the header row and the first column.
fn read_square(rows: &Rows, ids: Option<&[String]>) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let cols: Vec<String> = rows.header.iter().skip(1).cloned().collect();
    let ids: Vec<String> = ids.map_or_else(|| cols.clone(), <[String]>::to_vec);
    let col_pos = match_regions(rows, &cols, &ids)?;
    let row_ids: Vec<String> = rows.rows.iter().map(|(_, r)| r[0].clone()).collect();
    let row_pos = match_regions(rows, &row_ids, &ids)
        .map_err(|_| rows.err(1, "row labels must list the same regions as the header"))?;
    let n = ids.len();
    let mut cells = vec![vec![String::new(); n]; n];
    for (r, (line, rec)) in rows.rows.iter().enumerate() {
        if rec.len() != n + 1 {
            return Err(rows.err(
                *line,
                format!("expected {} fields, found {}", n + 1, rec.len()),
            ));
        }
        for (c, v) in rec[1..].iter().enumerate() {
            cells[row_pos[r]][col_pos[c]] = v.clone();
        }
    }
    Ok((ids, cells))
}

/// Full 0/1 adjacency matrix with region-id header row and column.
pub fn read_adjacency_matrix(path: &Path, ids: Option<&[String]>) -> Result<RegionGraph> {
    let rows = Rows::read(path)?;
    let (ids, cells) = read_square(&rows, ids)?;
    let n = ids.len();
    let mut adj = Array2::from_elem((n, n), false);
    for i in 0..n {
        for j in 0..n {
            adj[[i, j]] = match cells[i][j].as_str() {
                "1" => true,
                "0" => false,
                other => {
                    return Err(rows.err(
                        0,
                        format!(
                            "adjacency entry ({}, {}) must be 0 or 1, found `{other}`",
                            ids[i], ids[j]
                        ),
                    ))
                }
            };
        }
    }
    RegionGraph::new(ids, adj)
}

/// Edge list `region_a,region_b`. Without `ids` the regions are taken in
/// order of first appearance. Returns the graph and the number of duplicate
/// rows that were dropped.
pub fn read_edge_list(path: &Path, ids: Option<&[String]>) -> Result<(RegionGraph, usize)> {
    let rows = Rows::read(path)?;
    let (ac, bc) = (rows.column("region_a")?, rows.column("region_b")?);
    let mut names: Vec<String> = ids.map_or_else(Vec::new, <[String]>::to_vec);
    let mut index: HashMap<String, usize> = names
        .iter()
        .enumerate()
        .map(|(k, s)| (s.clone(), k))
        .collect();
    let mut edges = Vec::new();
    let mut seen = BTreeSet::new();
    let mut duplicates = 0;
    for (line, rec) in &rows.rows {
        let mut pos = [0usize; 2];
        for (slot, c) in [ac, bc].into_iter().enumerate() {
            let id = &rec[c];
            pos[slot] = match index.get(id) {
                Some(&k) => k,
                None if ids.is_some() => {
                    return Err(rows.err(*line, format!("region `{id}` is not in the counts file")))
                }
                None => {
                    names.push(id.clone());
                    index.insert(id.clone(), names.len() - 1);
                    names.len() - 1
                }
            };
        }
        if pos[0] == pos[1] {
            return Err(rows.err(*line, format!("self-loop on region `{}`", rec[ac])));
        }
        let key = (pos[0].min(pos[1]), pos[0].max(pos[1]));
        if seen.insert(key) {
            edges.push(key);
        } else {
            duplicates += 1;
        }
    }
    Ok((RegionGraph::from_edges(names, &edges)?, duplicates))
}

/// Square real matrix with region-id header row and column, reordered to
/// `ids` (rows are sources for weight matrices).
pub fn read_matrix(path: &Path, ids: &[String]) -> Result<Array2<f64>> {
    let rows = Rows::read(path)?;
    let (ids, cells) = read_square(&rows, Some(ids))?;
    let n = ids.len();
    let mut m = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            m[[i, j]] = parse(&rows, 0, "a number", &cells[i][j])?;
        }
    }
    Ok(m)
}

fn flush(mut w: csv::Writer<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|source| Error::Io {
        path: path_str(path),
        source,
    })
}

fn write_square<T>(
    path: &Path,
    ids: &[String],
    m: &Array2<T>,
    cell: impl Fn(&T) -> String,
) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(std::iter::once("region").chain(ids.iter().map(String::as_str)))?;
    for (i, id) in ids.iter().enumerate() {
        let row: Vec<String> = std::iter::once(id.clone())
            .chain(m.row(i).iter().map(&cell))
            .collect();
        w.write_record(&row)?;
    }
    flush(w, path)
}

/// Neighbourhood orders; unreachable pairs are empty cells.
pub fn write_orders(path: &Path, graph: &RegionGraph) -> Result<()> {
    write_square(path, graph.region_ids(), graph.orders(), |o| {
        o.map_or_else(String::new, |v| v.to_string())
    })
}

/// Any region x region matrix (rows are sources for weights).
pub fn write_matrix(path: &Path, ids: &[String], m: &Array2<f64>) -> Result<()> {
    write_square(path, ids, m, |v| v.to_string())
}

/// Wide counts file (`time,<ids>`).
pub fn write_counts_wide(path: &Path, ids: &[String], y: &Array2<u64>) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(std::iter::once("time").chain(ids.iter().map(String::as_str)))?;
    for t in 0..y.ncols() {
        let row: Vec<String> = std::iter::once((t + 1).to_string())
            .chain(y.column(t).iter().map(u64::to_string))
            .collect();
        w.write_record(&row)?;
    }
    flush(w, path)
}

/// Wide real panel (`time,<ids>`).
pub fn write_panel(path: &Path, ids: &[String], m: &Array2<f64>) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(std::iter::once("time").chain(ids.iter().map(String::as_str)))?;
    for t in 0..m.ncols() {
        let row: Vec<String> = std::iter::once((t + 1).to_string())
            .chain(m.column(t).iter().map(f64::to_string))
            .collect();
        w.write_record(&row)?;
    }
    flush(w, path)
}

const SCORE_HEADER: [&str; 8] = ["region", "time", "y", "mu", "psi", "logS", "RPS", "DSS"];

/// Predictions with their scores, one row per target.
pub fn write_scores(path: &Path, ids: &[String], records: &[ScoreRecord<f64>]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(SCORE_HEADER)?;
    for r in records {
        w.write_record([
            ids[r.region].clone(),
            r.time.to_string(),
            r.y.to_string(),
            r.mu.to_string(),
            r.psi.to_string(),
            r.log_s.to_string(),
            r.rps.to_string(),
            r.dss.to_string(),
        ])?;
    }
    flush(w, path)
}

/// One row of a predictions file.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub dist: PredictiveDistribution<f64>,
    pub y: u64,
    /// Scores when the file carries them.
    pub scores: Option<[f64; 3]>,
}

/// Reads a predictions or scores file (`region,time,y,mu,psi` plus optional
/// `logS,RPS,DSS`). `psi = 0` means Poisson. Regions are mapped to `ids`.
pub fn read_predictions(path: &Path, ids: &[String]) -> Result<Vec<PredictionRow>> {
    let rows = Rows::read(path)?;
    let cols: Vec<usize> = SCORE_HEADER[..5]
        .iter()
        .map(|c| rows.column(c))
        .collect::<Result<_>>()?;
    let score_cols: Option<Vec<usize>> = SCORE_HEADER[5..]
        .iter()
        .map(|c| rows.header.iter().position(|h| h == c))
        .collect();
    let index: HashMap<&str, usize> = ids
        .iter()
        .enumerate()
        .map(|(k, s)| (s.as_str(), k))
        .collect();
    let mut out = Vec::with_capacity(rows.rows.len());
    for (line, rec) in &rows.rows {
        let region = *index
            .get(rec[cols[0]].as_str())
            .ok_or_else(|| rows.err(*line, format!("unknown region `{}`", rec[cols[0]])))?;
        let time: usize = parse(&rows, *line, "time", &rec[cols[1]])?;
        let y: u64 = parse(&rows, *line, "a nonnegative count", &rec[cols[2]])?;
        let mu: f64 = parse(&rows, *line, "mu", &rec[cols[3]])?;
        let psi: f64 = parse(&rows, *line, "psi", &rec[cols[4]])?;
        let family = if psi == 0.0 {
            Family::Poisson
        } else {
            Family::NegBin
        };
        let dist = PredictiveDistribution::new(family, mu, psi, region, time)
            .map_err(|e| rows.err(*line, e.to_string()))?;
        let scores = match &score_cols {
            Some(c) => Some([
                parse(&rows, *line, "logS", &rec[c[0]])?,
                parse(&rows, *line, "RPS", &rec[c[1]])?,
                parse(&rows, *line, "DSS", &rec[c[2]])?,
            ]),
            None => None,
        };
        out.push(PredictionRow { dist, y, scores });
    }
    Ok(out)
}

/// PIT histogram as `lower,upper,height`.
pub fn write_pit(path: &Path, pit: &PitHistogram<f64>) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["lower", "upper", "height"])?;
    for (k, h) in pit.heights.iter().enumerate() {
        w.write_record([
            pit.edges[k].to_string(),
            pit.edges[k + 1].to_string(),
            h.to_string(),
        ])?;
    }
    flush(w, path)
}

/// Simulated paths in long form: `path,region,time,count` with absolute
/// times `t0 + 1 ..= t0 + H` and 1-based path numbers.
pub fn write_paths(path: &Path, bundle: &SimulationBundle) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["path", "region", "time", "count"])?;
    for p in 0..bundle.n_paths() {
        for (i, id) in bundle.region_ids.iter().enumerate() {
            for h in 0..bundle.horizon {
                w.write_record([
                    (p + 1).to_string(),
                    id.clone(),
                    (bundle.t0 + h + 1).to_string(),
                    bundle.paths[[p, i, h]].to_string(),
                ])?;
            }
        }
    }
    flush(w, path)
}

/// Writes `text` to `path`, mapping failures to [`Error::Io`].
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = File::create(path).map_err(|source| Error::Io {
        path: path_str(path),
        source,
    })?;
    f.write_all(text.as_bytes()).map_err(|source| Error::Io {
        path: path_str(path),
        source,
    })
}

/// Reads a whole text file, mapping failures to [`Error::Io`].
pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path_str(path),
        source,
    })
}
