//! Region adjacency and the neighbourhood-order metric derived from it.
//!
//! Two regions are k-th order neighbours when the shortest route between them
//! crosses k borders. Disconnected pairs carry [`UNREACHABLE`], which every
//! weight law maps to zero interaction.

use crate::error::{Error, Result};
use ndarray::Array2;
use std::collections::VecDeque;

/// Neighbourhood order of a pair of regions; `None` when they are disconnected.
pub type Order = Option<u32>;

pub const UNREACHABLE: Order = None;

/// Adjacency structure of the study regions plus its shortest-path orders.
///
/// Regions are identified by position; labels only matter for I/O.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionGraph {
    region_ids: Vec<String>,
    adjacency: Array2<bool>,
    orders: Array2<Order>,
}

impl RegionGraph {
    pub fn new(region_ids: Vec<String>, adjacency: Array2<bool>) -> Result<Self> {
        if adjacency.nrows() != region_ids.len() || adjacency.ncols() != region_ids.len() {
            return Err(Error::invalid(format!(
                "adjacency is {}x{} but {} region ids were given",
                adjacency.nrows(),
                adjacency.ncols(),
                region_ids.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for id in &region_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::invalid(format!("duplicate region id `{id}`")));
            }
        }
        let orders = compute_orders(&adjacency)?;
        Ok(Self {
            region_ids,
            adjacency,
            orders,
        })
    }

    /// Builds a graph from undirected edges given as position pairs.
    pub fn from_edges(region_ids: Vec<String>, edges: &[(usize, usize)]) -> Result<Self> {
        let n = region_ids.len();
        let mut adjacency = Array2::from_elem((n, n), false);
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::invalid(format!(
                    "edge ({a}, {b}) out of range for {n} regions"
                )));
            }
            if a == b {
                return Err(Error::SelfLoop(a));
            }
            adjacency[[a, b]] = true;
            adjacency[[b, a]] = true;
        }
        Self::new(region_ids, adjacency)
    }

    /// Rows x cols rook-adjacency lattice with ids `r{row}c{col}`.
    pub fn lattice(rows: usize, cols: usize) -> Self {
        let ids = (0..rows)
            .flat_map(|r| (0..cols).map(move |c| format!("r{r}c{c}")))
            .collect();
        let mut edges = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                let k = r * cols + c;
                if c + 1 < cols {
                    edges.push((k, k + 1));
                }
                if r + 1 < rows {
                    edges.push((k, k + cols));
                }
            }
        }
        Self::from_edges(ids, &edges).expect("lattice is a valid graph")
    }

    pub fn len(&self) -> usize {
        self.region_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.region_ids.is_empty()
    }

    pub fn region_ids(&self) -> &[String] {
        &self.region_ids
    }

    pub fn adjacency(&self) -> &Array2<bool> {
        &self.adjacency
    }

    pub fn orders(&self) -> &Array2<Order> {
        &self.orders
    }

    pub fn order(&self, from: usize, to: usize) -> Order {
        self.orders[[from, to]]
    }

    /// Number of first-order neighbours of region `j`.
    pub fn degree(&self, j: usize) -> usize {
        self.adjacency.row(j).iter().filter(|&&a| a).count()
    }

    /// Largest finite neighbourhood order; 0 for a single region.
    pub fn max_finite_order(&self) -> u32 {
        self.orders.iter().filter_map(|o| *o).max().unwrap_or(0)
    }
}

/// All-pairs neighbourhood orders by breadth-first search from every node.
pub fn compute_orders(adjacency: &Array2<bool>) -> Result<Array2<Order>> {
    let n = adjacency.nrows();
    if adjacency.ncols() != n {
        return Err(Error::invalid("adjacency matrix must be square"));
    }
    if n == 0 {
        return Err(Error::invalid("at least one region is required"));
    }
    for i in 0..n {
        if adjacency[[i, i]] {
            return Err(Error::SelfLoop(i));
        }
        for j in (i + 1)..n {
            if adjacency[[i, j]] != adjacency[[j, i]] {
                return Err(Error::AsymmetricAdjacency { row: i, col: j });
            }
        }
    }
    let neighbours: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| adjacency[[i, j]]).collect())
        .collect();
    let mut orders = Array2::from_elem((n, n), UNREACHABLE);
    let mut queue = VecDeque::with_capacity(n);
    for source in 0..n {
        orders[[source, source]] = Some(0);
        queue.clear();
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            let next = orders[[source, u]].unwrap() + 1;
            for &v in &neighbours[u] {
                if orders[[source, v]].is_none() {
                    orders[[source, v]] = Some(next);
                    queue.push_back(v);
                }
            }
        }
    }
    Ok(orders)
}
