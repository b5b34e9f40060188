//! Exact ground-state energies.
//!
//! [`ground_energy_dp`] is a min-sum transfer-matrix sweep across the Chimera
//! grid. The state is the set of spins that couple across the current sweep
//! line (`c * min(L, L')` of them); spins coupling along the line are
//! minimised out with a chain recursion inside each line.
//! [`ground_energy_bruteforce`] enumerates all configurations and is the
//! reference for it.

use std::collections::HashMap;

use thiserror::Error;

use crate::instances::{Energy, ProblemInstance};
use crate::topology::Side;

/// Largest brute-force problem.
pub const MAX_BRUTEFORCE_SPINS: usize = 30;

/// Largest sweep state (`2^bits` table entries) accepted by default.
pub const DEFAULT_MAX_STATE_BITS: usize = 22;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExactError {
    #[error("{spins} spins is too many for exhaustive search (max {max})")]
    TooManySpins { spins: usize, max: usize },
    #[error("sweep state of {bits} spins exceeds the budget of {max}")]
    BudgetExceeded { bits: usize, max: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    BruteForce,
    Dp,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::BruteForce => "bruteforce",
            Method::Dp => "dp",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    pub energy: Energy,
    pub degeneracy: Option<u64>,
    pub method: Method,
}

/// Exhaustive minimum over all `2^N` configurations (Gray-code order), with
/// optional counting of minimising configurations.
pub fn ground_energy_bruteforce(
    inst: &ProblemInstance,
    count_degeneracy: bool,
) -> Result<GroundTruth, ExactError> {
    let table = inst.coupling_table();
    let n = table.len();
    if n > MAX_BRUTEFORCE_SPINS {
        return Err(ExactError::TooManySpins {
            spins: n,
            max: MAX_BRUTEFORCE_SPINS,
        });
    }
    let mut spins = vec![1i8; n];
    let mut field: Vec<i32> = (0..n).map(|i| table.local_field(i, &spins)).collect();
    let mut energy = table.energy_numerator(&spins);
    let mut best = energy;
    let mut count = 1u64;
    for step in 1u64..(1u64 << n) {
        let site = step.trailing_zeros() as usize;
        let s = spins[site] as i32;
        energy += 2 * (s * field[site]) as i64;
        spins[site] = -spins[site];
        for (j, w) in table.neighbors_of(site) {
            field[j] -= 2 * w * s;
        }
        if energy < best {
            best = energy;
            count = 1;
        } else if energy == best {
            count += 1;
        }
    }
    Ok(GroundTruth {
        energy: Energy::new(best, inst.range()),
        degeneracy: count_degeneracy.then_some(count),
        method: Method::BruteForce,
    })
}

pub fn ground_energy_dp(inst: &ProblemInstance) -> Result<GroundTruth, ExactError> {
    ground_energy_dp_with_budget(inst, DEFAULT_MAX_STATE_BITS)
}

/// Transfer-matrix ground state. Refuses when the sweep state would need more
/// than `max_state_bits` spins.
pub fn ground_energy_dp_with_budget(
    inst: &ProblemInstance,
    max_state_bits: usize,
) -> Result<GroundTruth, ExactError> {
    let sweep = Sweep::new(inst);
    let bits = sweep.half * sweep.line_len;
    if bits > max_state_bits {
        return Err(ExactError::BudgetExceeded {
            bits,
            max: max_state_bits,
        });
    }
    let best = sweep.run();
    Ok(GroundTruth {
        energy: Energy::new(best as i64, inst.range()),
        degeneracy: None,
        method: Method::Dp,
    })
}

/// The grid seen as `lines` consecutive sweep lines of `line_len` cells each.
/// "Cross" spins couple to the same position in the neighbouring lines,
/// "chain" spins couple along the line.
struct Sweep {
    half: usize,
    lines: usize,
    line_len: usize,
    /// `cross[j][p * c + k]`: bond between line `j` and `j + 1`.
    cross: Vec<Vec<i32>>,
    /// `chain[j][p * c + k]`: bond between positions `p` and `p + 1` of line `j`.
    chain: Vec<Vec<i32>>,
    /// `local[j][p][chain_bits << c | cross_bits]`: intra-cell bonds and fields.
    local: Vec<Vec<Vec<i32>>>,
}

#[inline]
fn spin(bits: usize, k: usize) -> i32 {
    1 - 2 * ((bits >> k) & 1) as i32
}

impl Sweep {
    fn new(inst: &ProblemInstance) -> Self {
        let g = inst.graph();
        let c = g.half();
        let transposed = g.rows() > g.cols();
        let (lines, line_len) = if transposed {
            (g.rows(), g.cols())
        } else {
            (g.cols(), g.rows())
        };
        let (cross_side, chain_side) = if transposed {
            (Side::Vertical, Side::Horizontal)
        } else {
            (Side::Horizontal, Side::Vertical)
        };
        let cell = |j: usize, p: usize| if transposed { (j, p) } else { (p, j) };
        let vtx = |j: usize, p: usize, side: Side, k: usize| {
            let (row, col) = cell(j, p);
            g.vertex(row, col, side, k)
        };
        let bonds: HashMap<(usize, usize), i32> =
            inst.bonds().map(|(u, v, n)| ((u, v), n)).collect();
        let bond = |a: usize, b: usize| -> i32 { *bonds.get(&(a.min(b), a.max(b))).unwrap_or(&0) };
        let fields = inst.fields();

        let mut cross = vec![vec![0; c * line_len]; lines];
        let mut chain = vec![vec![0; c * line_len]; lines];
        let mut local = vec![vec![vec![0; 1 << (2 * c)]; line_len]; lines];
        for j in 0..lines {
            for p in 0..line_len {
                for k in 0..c {
                    if j + 1 < lines {
                        cross[j][p * c + k] =
                            bond(vtx(j, p, cross_side, k), vtx(j + 1, p, cross_side, k));
                    }
                    if p + 1 < line_len {
                        chain[j][p * c + k] =
                            bond(vtx(j, p, chain_side, k), vtx(j, p + 1, chain_side, k));
                    }
                }
                let chain_v: Vec<usize> = (0..c).map(|k| vtx(j, p, chain_side, k)).collect();
                let cross_v: Vec<usize> = (0..c).map(|k| vtx(j, p, cross_side, k)).collect();
                let intra: Vec<Vec<i32>> = chain_v
                    .iter()
                    .map(|&a| cross_v.iter().map(|&b| bond(a, b)).collect())
                    .collect();
                for (idx, e) in local[j][p].iter_mut().enumerate() {
                    let (lb, rb) = (idx >> c, idx & ((1 << c) - 1));
                    let mut acc = 0;
                    for a in 0..c {
                        acc -= fields[chain_v[a]] * spin(lb, a);
                        acc -= fields[cross_v[a]] * spin(rb, a);
                        for b in 0..c {
                            acc -= intra[a][b] * spin(lb, a) * spin(rb, b);
                        }
                    }
                    *e = acc;
                }
            }
        }
        Sweep {
            half: c,
            lines,
            line_len,
            cross,
            chain,
            local,
        }
    }

    fn run(&self) -> i32 {
        let width = self.half * self.line_len;
        let mut front = vec![0i32; 1 << width];
        for j in 0..self.lines {
            if j > 0 {
                for (b, &w) in self.cross[j - 1].iter().enumerate() {
                    butterfly(&mut front, b, w);
                }
            }
            let line = self.line_minimum(j);
            for (f, l) in front.iter_mut().zip(&line) {
                *f += l;
            }
        }
        front.into_iter().min().unwrap_or(0)
    }

    /// Minimum over the chain spins of line `j`, for every cross
    /// configuration of that line.
    fn line_minimum(&self, j: usize) -> Vec<i32> {
        let c = self.half;
        let mask = (1usize << c) - 1;
        let local = &self.local[j];
        // Index layout: cross bits of positions 0..=p, then the chain bits of p.
        let mut table: Vec<i32> = local[0].clone();
        for p in 1..self.line_len {
            let low = c * p;
            for k in 0..c {
                butterfly(&mut table, low + k, self.chain[j][(p - 1) * c + k]);
            }
            let last = p + 1 == self.line_len;
            let out_len = if last {
                1 << (low + c)
            } else {
                1 << (low + 2 * c)
            };
            let mut next = vec![i32::MAX; out_len];
            for chain_bits in 0..=mask {
                for cross_bits in 0..=mask {
                    let e = local[p][chain_bits << c | cross_bits];
                    let dst_base =
                        cross_bits << low | if last { 0 } else { chain_bits << (low + c) };
                    let src_base = chain_bits << low;
                    for x in 0..1usize << low {
                        let v = table[src_base | x] + e;
                        let d = &mut next[dst_base | x];
                        if v < *d {
                            *d = v;
                        }
                    }
                }
            }
            table = next;
        }
        if self.line_len == 1 {
            // Layout is still cross bits then chain bits; fold the chain.
            let mut out = vec![i32::MAX; 1 << c];
            for (idx, &v) in table.iter().enumerate() {
                let d = &mut out[idx & mask];
                *d = (*d).min(v);
            }
            table = out;
        }
        table
    }
}

/// Replaces the spin at `bit` by a neighbour coupled with numerator `w`,
/// minimising over the old spin.
fn butterfly(table: &mut [i32], bit: usize, w: i32) {
    let stride = 1usize << bit;
    for base in (0..table.len()).step_by(stride << 1) {
        for x in base..base + stride {
            let up = table[x];
            let down = table[x | stride];
            // energy -w s t with s the old spin, t the new one
            table[x] = (up - w).min(down + w);
            table[x | stride] = (up + w).min(down - w);
        }
    }
}
