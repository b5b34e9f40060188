//! Random spin-glass instances with couplings `J_ij = n / r`.
//!
//! All coupling and field values are stored as integer numerators over the
//! common denominator `r` (the range), so every energy is an exact rational and
//! ground-state matching never depends on floating point.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use thiserror::Error;

use crate::rng::{self, RNG_ID};
use crate::topology::{parse_chimera_header, ChimeraGraph, TopologyError};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum InstanceError {
    #[error("range must be at least 1")]
    ZeroRange,
    #[error("expected {expected} spins, got {got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("spin values must be +1 or -1")]
    InvalidSpin,
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("instance file, line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// An exact energy `numerator / denominator`.
#[derive(Debug, Clone, Copy)]
pub struct Energy {
    pub numerator: i64,
    pub denominator: u32,
}

impl Energy {
    pub fn new(numerator: i64, denominator: u32) -> Self {
        Energy {
            numerator,
            denominator,
        }
    }

    pub fn to_f64(self) -> f64 {
        self.numerator as f64 / self.denominator as f64
    }
}

impl PartialEq for Energy {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Energy {}

impl PartialOrd for Energy {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Energy {
    fn cmp(&self, other: &Self) -> Ordering {
        let a = self.numerator as i128 * other.denominator as i128;
        let b = other.numerator as i128 * self.denominator as i128;
        a.cmp(&b)
    }
}

impl fmt::Display for Energy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.numerator, self.denominator)
    }
}

/// Spins `±1` on the active vertices, in ascending vertex id order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SpinConfig(pub Vec<i8>);

/// Per-vertex relabelling `a_i = ±1`, laid out like [`SpinConfig`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gauge(pub Vec<i8>);

impl Gauge {
    pub fn identity(graph: &ChimeraGraph) -> Self {
        Gauge(vec![1; graph.num_active()])
    }

    /// Applies the relabelling to a configuration: `s_i -> a_i s_i`.
    pub fn apply_to(&self, cfg: &SpinConfig) -> SpinConfig {
        SpinConfig(self.0.iter().zip(&cfg.0).map(|(a, s)| a * s).collect())
    }
}

/// i.i.d. uniform signs on the active vertices.
pub fn random_gauge(graph: &ChimeraGraph, seed: u64) -> Gauge {
    let mut rng = rng::stream(seed, 0);
    Gauge(
        (0..graph.num_active())
            .map(|_| if rng.gen::<bool>() { 1 } else { -1 })
            .collect(),
    )
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProblemInstance {
    graph: ChimeraGraph,
    range: u32,
    /// Numerators aligned with `graph.edges()`.
    couplings: Vec<i32>,
    /// Field numerators per vertex id (zero on inactive vertices).
    fields: Vec<i32>,
    seed: u64,
}

impl ProblemInstance {
    /// Builds an instance from explicit numerators. `couplings` follows
    /// `graph.edges()`; `fields` is indexed by vertex id.
    pub fn from_parts(
        graph: ChimeraGraph,
        range: u32,
        couplings: Vec<i32>,
        fields: Vec<i32>,
        seed: u64,
    ) -> Result<Self, InstanceError> {
        if range == 0 {
            return Err(InstanceError::ZeroRange);
        }
        if couplings.len() != graph.num_edges() {
            return Err(InstanceError::SizeMismatch {
                expected: graph.num_edges(),
                got: couplings.len(),
            });
        }
        if fields.len() != graph.num_vertices() {
            return Err(InstanceError::SizeMismatch {
                expected: graph.num_vertices(),
                got: fields.len(),
            });
        }
        Ok(ProblemInstance {
            graph,
            range,
            couplings,
            fields,
            seed,
        })
    }

    /// Every coupling set to `n` (for example `n = r` for a ferromagnet).
    pub fn uniform(graph: ChimeraGraph, range: u32, n: i32) -> Result<Self, InstanceError> {
        let couplings = vec![n; graph.num_edges()];
        let fields = vec![0; graph.num_vertices()];
        Self::from_parts(graph, range, couplings, fields, 0)
    }

    pub fn graph(&self) -> &ChimeraGraph {
        &self.graph
    }

    pub fn range(&self) -> u32 {
        self.range
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn couplings(&self) -> &[i32] {
        &self.couplings
    }

    pub fn fields(&self) -> &[i32] {
        &self.fields
    }

    pub fn num_spins(&self) -> usize {
        self.graph.num_active()
    }

    /// Iterates `(u, v, n)` over the couplers.
    pub fn bonds(&self) -> impl Iterator<Item = (usize, usize, i32)> + '_ {
        self.graph
            .edges()
            .iter()
            .zip(&self.couplings)
            .map(|(&(u, v), &n)| (u, v, n))
    }

    /// `-sum h_i s_i - sum J_ij s_i s_j`.
    pub fn energy(&self, cfg: &SpinConfig) -> Result<Energy, InstanceError> {
        let table = self.coupling_table();
        if cfg.0.len() != table.len() {
            return Err(InstanceError::SizeMismatch {
                expected: table.len(),
                got: cfg.0.len(),
            });
        }
        if cfg.0.iter().any(|&s| s != 1 && s != -1) {
            return Err(InstanceError::InvalidSpin);
        }
        Ok(Energy::new(table.energy_numerator(&cfg.0), self.range))
    }

    pub fn apply_gauge(&self, gauge: &Gauge) -> Result<Self, InstanceError> {
        let n = self.graph.num_active();
        if gauge.0.len() != n {
            return Err(InstanceError::SizeMismatch {
                expected: n,
                got: gauge.0.len(),
            });
        }
        let mut sign = vec![1i32; self.graph.num_vertices()];
        for (v, &a) in self.graph.active_vertices().zip(&gauge.0) {
            sign[v] = a as i32;
        }
        let couplings = self
            .bonds()
            .map(|(u, v, j)| sign[u] * sign[v] * j)
            .collect();
        let fields = self.fields.iter().zip(&sign).map(|(h, a)| h * a).collect();
        Ok(ProblemInstance {
            couplings,
            fields,
            ..self.clone()
        })
    }

    /// Compact adjacency used by the solvers.
    pub fn coupling_table(&self) -> CouplingTable {
        CouplingTable::new(self)
    }
}

/// Draws every coupler uniformly from the `2r` values `{-r..-1, 1..r}`; all
/// fields are zero.
pub fn generate_instance(
    graph: &ChimeraGraph,
    range: u32,
    seed: u64,
) -> Result<ProblemInstance, InstanceError> {
    if range == 0 {
        return Err(InstanceError::ZeroRange);
    }
    let r = range as i32;
    let mut rng = rng::stream(seed, 0);
    let couplings = (0..graph.num_edges())
        .map(|_| {
            let idx = rng.gen_range(0..2 * r);
            if idx < r {
                idx - r
            } else {
                idx - r + 1
            }
        })
        .collect();
    ProblemInstance::from_parts(
        graph.clone(),
        range,
        couplings,
        vec![0; graph.num_vertices()],
        seed,
    )
}

/// Active spins in compressed sparse-row form.
///
/// Site `i` is the `i`-th active vertex in ascending id order, matching the
/// layout of [`SpinConfig`].
#[derive(Debug, Clone)]
pub struct CouplingTable {
    pub range: u32,
    pub vertex_of: Vec<usize>,
    pub offsets: Vec<usize>,
    pub neighbors: Vec<u32>,
    pub weights: Vec<i32>,
    pub fields: Vec<i32>,
    /// Sublattice 0 then sublattice 1, ascending within each.
    pub sweep_order: Vec<u32>,
    /// Undirected bonds `(i, j, n)` with `i < j` in site indices.
    pub bonds: Vec<(u32, u32, i32)>,
}

impl CouplingTable {
    fn new(inst: &ProblemInstance) -> Self {
        let graph = inst.graph();
        let vertex_of: Vec<usize> = graph.active_vertices().collect();
        let mut site_of = vec![u32::MAX; graph.num_vertices()];
        for (i, &v) in vertex_of.iter().enumerate() {
            site_of[v] = i as u32;
        }
        let n = vertex_of.len();
        let mut lists: Vec<Vec<(u32, i32)>> = vec![Vec::new(); n];
        let mut bonds = Vec::with_capacity(graph.num_edges());
        for (u, v, j) in inst.bonds() {
            let (a, b) = (site_of[u], site_of[v]);
            lists[a as usize].push((b, j));
            lists[b as usize].push((a, j));
            bonds.push((a.min(b), a.max(b), j));
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut neighbors = Vec::new();
        let mut weights = Vec::new();
        offsets.push(0);
        for list in &lists {
            for &(b, j) in list {
                neighbors.push(b);
                weights.push(j);
            }
            offsets.push(neighbors.len());
        }
        let (a, b) = graph.bipartition();
        let sweep_order = a.into_iter().chain(b).map(|v| site_of[v]).collect();
        CouplingTable {
            range: inst.range(),
            fields: vertex_of.iter().map(|&v| inst.fields()[v]).collect(),
            vertex_of,
            offsets,
            neighbors,
            weights,
            sweep_order,
            bonds,
        }
    }

    pub fn len(&self) -> usize {
        self.vertex_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertex_of.is_empty()
    }

    pub fn neighbors_of(&self, site: usize) -> impl Iterator<Item = (usize, i32)> + '_ {
        let range = self.offsets[site]..self.offsets[site + 1];
        self.neighbors[range.clone()]
            .iter()
            .zip(&self.weights[range])
            .map(|(&j, &w)| (j as usize, w))
    }

    /// Local field numerator `h_i + sum_j n_ij s_j`.
    #[inline]
    pub fn local_field(&self, site: usize, spins: &[i8]) -> i32 {
        let range = self.offsets[site]..self.offsets[site + 1];
        let mut f = self.fields[site];
        for (&j, &w) in self.neighbors[range.clone()]
            .iter()
            .zip(&self.weights[range])
        {
            f += w * spins[j as usize] as i32;
        }
        f
    }

    /// `r` times the energy of `spins`.
    pub fn energy_numerator(&self, spins: &[i8]) -> i64 {
        let bond: i64 = self
            .bonds
            .iter()
            .map(|&(i, j, w)| (w * spins[i as usize] as i32 * spins[j as usize] as i32) as i64)
            .sum();
        let field: i64 = self
            .fields
            .iter()
            .zip(spins)
            .map(|(&h, &s)| (h * s as i32) as i64)
            .sum();
        -bond - field
    }

    /// `sum_j |n_ij| + |h_i|`, the largest possible `|local field|` at a site.
    pub fn abs_weight(&self, site: usize) -> i32 {
        self.fields[site].abs()
            + self.weights[self.offsets[site]..self.offsets[site + 1]]
                .iter()
                .map(|w| w.abs())
                .sum::<i32>()
    }

    pub fn max_abs_weight(&self) -> i32 {
        (0..self.len())
            .map(|i| self.abs_weight(i))
            .max()
            .unwrap_or(0)
    }
}

impl fmt::Display for ProblemInstance {
    /// Instance file: `instance chimera L Lp c r seed rng=<id>`, then
    /// `mask v`, `h v m` (nonzero fields only) and `e u v n` lines.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let g = &self.graph;
        writeln!(
            f,
            "instance chimera {} {} {} {} {} rng={}",
            g.rows(),
            g.cols(),
            g.half(),
            self.range,
            self.seed,
            RNG_ID
        )?;
        for v in g.inactive_vertices() {
            writeln!(f, "mask {v}")?;
        }
        for (v, &h) in self.fields.iter().enumerate() {
            if h != 0 {
                writeln!(f, "h {v} {h}")?;
            }
        }
        for (u, v, n) in self.bonds() {
            writeln!(f, "e {u} {v} {n}")?;
        }
        Ok(())
    }
}

impl FromStr for ProblemInstance {
    type Err = InstanceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = |line: usize, msg: String| InstanceError::Parse { line, msg };
        let mut lines = s
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hline, header) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
        let rest = header
            .strip_prefix("instance ")
            .ok_or_else(|| err(hline, "header must start with `instance chimera`".into()))?;
        let tokens: Vec<&str> = rest.split_whitespace().collect();
        if tokens.len() != 7 {
            return Err(err(
                hline,
                "expected `instance chimera L Lp c r seed rng=<id>`".into(),
            ));
        }
        let [rows, cols, half] = parse_chimera_header(&tokens[..4].join(" "), hline)
            .map_err(|_| err(hline, "malformed chimera dimensions".into()))?;
        let range: u32 = tokens[4]
            .parse()
            .ok()
            .filter(|&r| r > 0)
            .ok_or_else(|| err(hline, format!("bad range {:?}", tokens[4])))?;
        let seed: u64 = tokens[5]
            .parse()
            .map_err(|_| err(hline, format!("bad seed {:?}", tokens[5])))?;
        match tokens[6].strip_prefix("rng=") {
            Some(id) if id == RNG_ID => {}
            _ => return Err(err(hline, format!("unsupported generator {:?}", tokens[6]))),
        }
        let ideal = ChimeraGraph::new(rows, cols, half)?;

        let mut mask = Vec::new();
        let mut fields = vec![0i32; ideal.num_vertices()];
        let mut edges: Vec<(usize, (usize, usize), i32)> = Vec::new();
        let r = range as i32;
        for (line, l) in lines {
            let tok: Vec<&str> = l.split_whitespace().collect();
            let nums: Option<Vec<i64>> = tok[1..].iter().map(|t| t.parse().ok()).collect();
            let nums = nums.ok_or_else(|| err(line, format!("non-numeric field in {l:?}")))?;
            match (tok[0], nums.as_slice()) {
                ("mask", &[v]) => mask.push(v as usize),
                ("h", &[v, m]) => {
                    let v = v as usize;
                    if v >= fields.len() {
                        return Err(err(line, format!("unknown vertex {v}")));
                    }
                    if m.unsigned_abs() > range as u64 {
                        return Err(err(line, format!("field numerator {m} outside range")));
                    }
                    fields[v] = m as i32;
                }
                ("e", &[u, v, n]) => {
                    if n == 0 || n.unsigned_abs() > range as u64 {
                        return Err(err(line, format!("coupling numerator {n} not in ±1..±{r}")));
                    }
                    let (u, v) = (u as usize, v as usize);
                    edges.push((line, (u.min(v), u.max(v)), n as i32));
                }
                _ => return Err(err(line, format!("unrecognised record {l:?}"))),
            }
        }
        let graph = ideal.with_mask(&mask)?;
        for v in graph.inactive_vertices() {
            if fields[v] != 0 {
                return Err(err(hline, format!("field on masked vertex {v}")));
            }
        }
        let index: HashMap<(usize, usize), usize> = graph
            .edges()
            .iter()
            .enumerate()
            .map(|(i, &e)| (e, i))
            .collect();
        let mut couplings = vec![0i32; graph.num_edges()];
        for (line, e, n) in edges {
            let &i = index
                .get(&e)
                .ok_or_else(|| err(line, format!("edge {e:?} is not in the graph")))?;
            if couplings[i] != 0 {
                return Err(err(line, format!("duplicate edge {e:?}")));
            }
            couplings[i] = n;
        }
        if let Some(i) = couplings.iter().position(|&n| n == 0) {
            return Err(err(
                hline,
                format!("missing coupling for edge {:?}", graph.edges()[i]),
            ));
        }
        ProblemInstance::from_parts(graph, range, couplings, fields, seed)
    }
}
