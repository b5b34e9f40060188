//! Chimera graphs: an `rows x cols` grid of `K_{c,c}` unit cells.
//!
//! Vertices are numbered cell-major (row, then column). Inside a cell the `c`
//! vertically coupled vertices come first, then the `c` horizontally coupled
//! ones:
//!
//! ```text
//! id = ((row * cols + col) * 2 + side) * c + k
//! ```
//!
//! A vertical vertex couples to all horizontal vertices of its cell and to the
//! vertical vertex with the same `k` in the cells above and below. A horizontal
//! vertex couples to the horizontal vertex with the same `k` in the cells to the
//! left and right. Masking keeps the original ids.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TopologyError {
    #[error("chimera dimensions must be positive, got {rows}x{cols} cells of K_{{{half},{half}}}")]
    ZeroDimension {
        rows: usize,
        cols: usize,
        half: usize,
    },
    #[error("vertex {0} is not part of the graph")]
    UnknownVertex(usize),
    #[error("graph description, line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Which half of a unit cell a vertex belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    /// Couples to the cells above and below.
    Vertical = 0,
    /// Couples to the cells left and right.
    Horizontal = 1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VertexCoord {
    pub row: usize,
    pub col: usize,
    pub side: Side,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChimeraGraph {
    rows: usize,
    cols: usize,
    half: usize,
    active: Vec<bool>,
    /// Edges between active vertices, `(u, v)` with `u < v`, sorted.
    edges: Vec<(usize, usize)>,
}

/// The elimination order used by the exact solver together with the size of
/// the largest bag it produces (the eliminated vertex plus its neighbours at
/// elimination time).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreewidthBound {
    pub width: usize,
    pub order: Vec<usize>,
}

impl ChimeraGraph {
    /// Builds the ideal (fully functional) graph.
    pub fn new(rows: usize, cols: usize, half: usize) -> Result<Self, TopologyError> {
        if rows == 0 || cols == 0 || half == 0 {
            return Err(TopologyError::ZeroDimension { rows, cols, half });
        }
        let mut g = ChimeraGraph {
            rows,
            cols,
            half,
            active: vec![true; 2 * half * rows * cols],
            edges: Vec::new(),
        };
        g.edges = g.ideal_edges().collect();
        g.edges.sort_unstable();
        Ok(g)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Half-cell size `c`.
    pub fn half(&self) -> usize {
        self.half
    }

    /// Vertex count of the ideal graph, `2 c L L'`.
    pub fn num_vertices(&self) -> usize {
        self.active.len()
    }

    pub fn num_active(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn is_active(&self, v: usize) -> bool {
        self.active.get(v).copied().unwrap_or(false)
    }

    pub fn is_ideal(&self) -> bool {
        self.active.iter().all(|&a| a)
    }

    pub fn active_vertices(&self) -> impl Iterator<Item = usize> + '_ {
        self.active
            .iter()
            .enumerate()
            .filter_map(|(v, &a)| a.then_some(v))
    }

    pub fn inactive_vertices(&self) -> Vec<usize> {
        self.active
            .iter()
            .enumerate()
            .filter_map(|(v, &a)| (!a).then_some(v))
            .collect()
    }

    pub fn vertex(&self, row: usize, col: usize, side: Side, k: usize) -> usize {
        debug_assert!(row < self.rows && col < self.cols && k < self.half);
        ((row * self.cols + col) * 2 + side as usize) * self.half + k
    }

    pub fn coord(&self, v: usize) -> VertexCoord {
        let k = v % self.half;
        let rest = v / self.half;
        let side = if rest % 2 == 0 {
            Side::Vertical
        } else {
            Side::Horizontal
        };
        let cell = rest / 2;
        VertexCoord {
            row: cell / self.cols,
            col: cell % self.cols,
            side,
            k,
        }
    }

    /// All couplers of the ideal graph, intra-cell first per cell.
    fn ideal_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let (rows, cols, c) = (self.rows, self.cols, self.half);
        (0..rows).flat_map(move |row| {
            (0..cols).flat_map(move |col| {
                let intra = (0..c).flat_map(move |a| {
                    (0..c).map(move |b| {
                        (
                            self.vertex(row, col, Side::Vertical, a),
                            self.vertex(row, col, Side::Horizontal, b),
                        )
                    })
                });
                let down = (0..c).filter(move |_| row + 1 < rows).map(move |k| {
                    (
                        self.vertex(row, col, Side::Vertical, k),
                        self.vertex(row + 1, col, Side::Vertical, k),
                    )
                });
                let right = (0..c).filter(move |_| col + 1 < cols).map(move |k| {
                    (
                        self.vertex(row, col, Side::Horizontal, k),
                        self.vertex(row, col + 1, Side::Horizontal, k),
                    )
                });
                intra.chain(down).chain(right)
            })
        })
    }

    /// Edge count of the ideal graph, `c^2 L L' + c (L (L'-1) + L' (L-1))`.
    pub fn ideal_edge_count(rows: usize, cols: usize, half: usize) -> usize {
        half * half * rows * cols + half * (rows * (cols - 1) + cols * (rows - 1))
    }

    /// Returns a copy with the given vertices (and their couplers) removed.
    /// Already inactive vertices are accepted and stay inactive.
    pub fn with_mask(&self, inactive: &[usize]) -> Result<Self, TopologyError> {
        let mut active = self.active.clone();
        for &v in inactive {
            if v >= active.len() {
                return Err(TopologyError::UnknownVertex(v));
            }
            active[v] = false;
        }
        let edges = self
            .edges
            .iter()
            .copied()
            .filter(|&(u, v)| active[u] && active[v])
            .collect();
        Ok(ChimeraGraph {
            rows: self.rows,
            cols: self.cols,
            half: self.half,
            active,
            edges,
        })
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        let key = if u < v { (u, v) } else { (v, u) };
        self.edges.binary_search(&key).is_ok()
    }

    /// Neighbour lists over active vertices, indexed by vertex id.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_vertices()];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        adj
    }

    /// Two-colouring of the ideal graph: 0 or 1.
    pub fn sublattice(&self, v: usize) -> usize {
        let c = self.coord(v);
        (c.side as usize) ^ ((c.row + c.col) & 1)
    }

    /// Splits the active vertices into the two colour classes, each in
    /// ascending id order.
    pub fn bipartition(&self) -> (Vec<usize>, Vec<usize>) {
        self.active_vertices()
            .partition(|&v| self.sublattice(v) == 0)
    }

    /// `c * min(L, L') + 1` and a column (or row) sweep order attaining it on
    /// the ideal graph. For masked graphs the same value is an upper bound.
    pub fn treewidth_bound(&self) -> TreewidthBound {
        let c = self.half;
        let mut order = Vec::with_capacity(self.num_vertices());
        if self.rows <= self.cols {
            for col in 0..self.cols {
                for side in [Side::Vertical, Side::Horizontal] {
                    for row in 0..self.rows {
                        order.extend((0..c).map(|k| self.vertex(row, col, side, k)));
                    }
                }
            }
        } else {
            for row in 0..self.rows {
                for side in [Side::Horizontal, Side::Vertical] {
                    for col in 0..self.cols {
                        order.extend((0..c).map(|k| self.vertex(row, col, side, k)));
                    }
                }
            }
        }
        order.retain(|&v| self.active[v]);
        TreewidthBound {
            width: c * self.rows.min(self.cols) + 1,
            order,
        }
    }

    /// Simulates vertex elimination with fill-in and returns the largest bag
    /// (eliminated vertex plus its remaining neighbours).
    pub fn elimination_bag_size(&self, order: &[usize]) -> usize {
        let mut adj: Vec<BTreeSet<usize>> = self
            .adjacency()
            .into_iter()
            .map(|n| n.into_iter().collect())
            .collect();
        let mut eliminated = vec![false; self.num_vertices()];
        let mut widest = 0;
        for &v in order {
            let nb: Vec<usize> = adj[v].iter().copied().filter(|&u| !eliminated[u]).collect();
            widest = widest.max(nb.len() + 1);
            for (i, &a) in nb.iter().enumerate() {
                for &b in &nb[i + 1..] {
                    adj[a].insert(b);
                    adj[b].insert(a);
                }
            }
            eliminated[v] = true;
        }
        widest
    }
}

impl fmt::Display for ChimeraGraph {
    /// Graph description file: `chimera L Lp c`, then one inactive vertex id
    /// per line.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "chimera {} {} {}", self.rows, self.cols, self.half)?;
        for v in self.inactive_vertices() {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}

impl FromStr for ChimeraGraph {
    type Err = TopologyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut lines = s
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (line, header) = lines.next().ok_or(TopologyError::Parse {
            line: 1,
            msg: "empty description".into(),
        })?;
        let [rows, cols, half] = parse_chimera_header(header, line)?;
        let graph = ChimeraGraph::new(rows, cols, half)?;
        let mut inactive = Vec::new();
        for (line, l) in lines {
            let v: usize = l.parse().map_err(|_| TopologyError::Parse {
                line,
                msg: format!("expected a vertex id, got {l:?}"),
            })?;
            inactive.push(v);
        }
        graph.with_mask(&inactive)
    }
}

/// Parses `chimera L Lp c` (trailing tokens are left to the caller).
pub(crate) fn parse_chimera_header(header: &str, line: usize) -> Result<[usize; 3], TopologyError> {
    let mut tok = header.split_whitespace();
    if tok.next() != Some("chimera") {
        return Err(TopologyError::Parse {
            line,
            msg: "header must start with `chimera`".into(),
        });
    }
    let mut dims = [0usize; 3];
    for d in &mut dims {
        *d = tok
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| TopologyError::Parse {
                line,
                msg: "expected `chimera L Lp c`".into(),
            })?;
    }
    Ok(dims)
}
