//! Simulated quantum annealing: discrete-time path-integral Monte Carlo of the
//! transverse-field Ising model at constant temperature.
//!
//! A run keeps `P` coupled replicas (slices) of the classical lattice. Each
//! sweep does one Metropolis pass over all (slice, site) pairs followed by one
//! cluster pass along imaginary time. The transverse field `A` falls linearly
//! to zero while the problem scale `B` rises linearly to `B_final`.
//!
//! Run `j` draws from stream `j` of the seed: one 64-bit word per (slice, site)
//! whose low bit is the initial spin, then one uniform per Metropolis proposal,
//! then the cluster pass draws. With `P = 1` this is exactly lane 0 of SA word
//! `j` at inverse temperature `beta * B(t)`.

use rand::{Rng as _, RngCore};
use thiserror::Error;

use crate::instances::{CouplingTable, ProblemInstance};
use crate::rng::{self, Rng};
use crate::sa::{boltzmann, AcceptanceTable, RunBatch, ZERO_DELTA_ACCEPT};

pub const DEFAULT_SLICES: u32 = 64;
pub const DEFAULT_BETA: f64 = 10.0;
pub const DEFAULT_A_INIT: f64 = 2.5;
pub const DEFAULT_B_FINAL: f64 = 1.0;
/// Lower clamp on the transverse field, keeps `J_perp` finite at `A = 0`.
pub const DEFAULT_EPSILON: f64 = 1e-8;

#[derive(Debug, Error, PartialEq)]
pub enum SqaError {
    #[error("annealing time must be at least one sweep")]
    ZeroSweeps,
    #[error("at least one time slice is required")]
    ZeroSlices,
    #[error("inverse temperature must be positive, got {0}")]
    BadBeta(f64),
    #[error("transverse field must start positive with more than one slice, got {0}")]
    BadField(f64),
    #[error("field clamp must be positive, got {0}")]
    BadEpsilon(f64),
    #[error("problem scale must be non-negative, got {0}")]
    BadScale(f64),
    #[error("run count must be positive")]
    NoRuns,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SqaSchedule {
    pub a_init: f64,
    pub b_final: f64,
    /// Annealing time in sweeps (MCS).
    pub sweeps: u32,
    pub slices: u32,
    pub beta: f64,
    pub epsilon: f64,
}

impl SqaSchedule {
    pub fn new(sweeps: u32) -> Self {
        SqaSchedule {
            a_init: DEFAULT_A_INIT,
            b_final: DEFAULT_B_FINAL,
            sweeps,
            slices: DEFAULT_SLICES,
            beta: DEFAULT_BETA,
            epsilon: DEFAULT_EPSILON,
        }
    }

    pub fn validate(&self) -> Result<(), SqaError> {
        if self.sweeps == 0 {
            return Err(SqaError::ZeroSweeps);
        }
        if self.slices == 0 {
            return Err(SqaError::ZeroSlices);
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(SqaError::BadBeta(self.beta));
        }
        if self.slices > 1 && !(self.a_init > 0.0) {
            return Err(SqaError::BadField(self.a_init));
        }
        if !(self.epsilon > 0.0) {
            return Err(SqaError::BadEpsilon(self.epsilon));
        }
        if !(self.b_final >= 0.0) {
            return Err(SqaError::BadScale(self.b_final));
        }
        Ok(())
    }

    /// Schedule fraction of sweep `k`, from 0 to 1 inclusive; a single sweep
    /// sits at the end of the schedule.
    pub fn fraction(&self, k: u32) -> f64 {
        if self.sweeps <= 1 {
            1.0
        } else {
            k as f64 / (self.sweeps - 1) as f64
        }
    }

    pub fn a_at(&self, k: u32) -> f64 {
        (self.a_init * (1.0 - self.fraction(k))).max(self.epsilon)
    }

    pub fn b_at(&self, k: u32) -> f64 {
        self.b_final * self.fraction(k)
    }

    pub fn params_at(&self, k: u32) -> SliceParams {
        SliceParams::new(self.beta, self.a_at(k), self.b_at(k), self.slices)
    }
}

/// `J_perp = -(P / 2 beta) ln tanh(beta A / P)`.
pub fn j_perp(beta: f64, a: f64, slices: u32) -> f64 {
    let p = slices as f64;
    -(p / (2.0 * beta)) * (beta * a / p).tanh().ln()
}

/// Per-sweep constants of the Trotterised action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SliceParams {
    pub slices: u32,
    /// `(beta / P) * B`, multiplying classical energies of a slice.
    pub beta_spatial: f64,
    /// `(beta / P) * J_perp`, the ferromagnetic coupling between slices.
    pub k_perp: f64,
}

impl SliceParams {
    pub fn new(beta: f64, a: f64, b: f64, slices: u32) -> Self {
        let p = slices as f64;
        let k_perp = if slices > 1 {
            beta / p * j_perp(beta, a, slices)
        } else {
            0.0
        };
        SliceParams {
            slices,
            beta_spatial: beta / p * b,
            k_perp,
        }
    }
}

/// Acceptance for a single-site move with classical `m = s * field` and
/// imaginary-time term `t = s * (s_prev + s_next)`.
struct MoveTable {
    spatial: AcceptanceTable,
    /// `t = -2` and `t = +2` rows, indexed by `m + max`.
    time: [Vec<f64>; 2],
    max: i32,
}

impl MoveTable {
    fn new(params: &SliceParams, range: u32, max: i32) -> Self {
        let row = |t: f64| {
            (-max..=max)
                .map(|m| boltzmann(params.beta_spatial, m, range, 2.0 * params.k_perp * t))
                .collect()
        };
        MoveTable {
            spatial: AcceptanceTable::new(params.beta_spatial, range, max),
            time: [row(-2.0), row(2.0)],
            max,
        }
    }

    #[inline]
    fn accepts(&self, m: i32, t: i32, u: f64) -> bool {
        match t {
            0 => self.spatial.accepts(m, u),
            t => u < self.time[(t > 0) as usize][(m + self.max) as usize],
        }
    }
}

/// Spins of all slices of one run, indexed `[slice][site]`, periodic in the
/// slice index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorldLine {
    pub slices: usize,
    pub sites: usize,
    pub spins: Vec<i8>,
}

impl WorldLine {
    pub fn slice(&self, k: usize) -> &[i8] {
        &self.spins[k * self.sites..(k + 1) * self.sites]
    }

    pub fn get(&self, k: usize, site: usize) -> i8 {
        self.spins[k * self.sites + site]
    }

    /// All slices identical.
    pub fn is_locked(&self) -> bool {
        (1..self.slices).all(|k| self.slice(k) == self.slice(0))
    }

    /// Lowest classical energy numerator over slices.
    pub fn min_energy_numerator(&self, table: &CouplingTable) -> i64 {
        (0..self.slices)
            .map(|k| table.energy_numerator(self.slice(k)))
            .min()
            .expect("at least one slice")
    }
}

/// Bernoulli(q) cut decisions for bonds between equal slices. Small `q` is
/// sampled through geometric gaps, one draw per cut.
struct CutSampler {
    q: f64,
    ln_keep: f64,
    gap: u64,
}

impl CutSampler {
    const DIRECT_ABOVE: f64 = 0.25;

    fn new(q: f64, rng: &mut Rng) -> Self {
        let mut s = CutSampler {
            q,
            ln_keep: (-q).ln_1p(),
            gap: 0,
        };
        if q < Self::DIRECT_ABOVE {
            s.gap = s.draw_gap(rng);
        }
        s
    }

    fn draw_gap(&self, rng: &mut Rng) -> u64 {
        let u: f64 = rng.gen();
        let g = (-u).ln_1p() / self.ln_keep;
        if g.is_finite() && g < u64::MAX as f64 {
            g as u64
        } else {
            u64::MAX
        }
    }

    #[inline]
    fn next(&mut self, rng: &mut Rng) -> bool {
        if self.q >= Self::DIRECT_ABOVE {
            return rng.gen::<f64>() < self.q;
        }
        if self.gap == 0 {
            self.gap = self.draw_gap(rng);
            true
        } else {
            self.gap -= 1;
            false
        }
    }
}

#[inline]
fn ring_next(k: usize, p: usize) -> usize {
    if k + 1 == p {
        0
    } else {
        k + 1
    }
}

struct PathIntegral<'a> {
    table: &'a CouplingTable,
    world: WorldLine,
    /// Local field of every (slice, site), kept current under flips.
    fields: Vec<i32>,
    max: i32,
}

impl<'a> PathIntegral<'a> {
    fn random(table: &'a CouplingTable, slices: usize, rng: &mut Rng) -> Self {
        let sites = table.len();
        let spins: Vec<i8> = (0..slices * sites)
            .map(|_| if rng.next_u64() & 1 == 1 { 1 } else { -1 })
            .collect();
        let fields = spins
            .chunks(sites.max(1))
            .flat_map(|slice| (0..sites).map(|i| table.local_field(i, slice)))
            .collect();
        PathIntegral {
            table,
            world: WorldLine {
                slices,
                sites,
                spins,
            },
            fields,
            max: table.max_abs_weight(),
        }
    }

    #[inline]
    fn flip(&mut self, k: usize, site: usize) {
        let n = self.world.sites;
        let s = -self.world.spins[k * n + site];
        self.world.spins[k * n + site] = s;
        let t = self.table;
        let (lo, hi) = (t.offsets[site], t.offsets[site + 1]);
        let fields = &mut self.fields[k * n..(k + 1) * n];
        let d = 2 * s as i32;
        for (&j, &w) in t.neighbors[lo..hi].iter().zip(&t.weights[lo..hi]) {
            fields[j as usize] += d * w;
        }
    }

    fn sweep(&mut self, params: &SliceParams, rng: &mut Rng) {
        self.metropolis_pass(params, rng);
        if self.world.slices > 1 {
            self.cluster_pass(params, rng);
        }
    }

    fn metropolis_pass(&mut self, params: &SliceParams, rng: &mut Rng) {
        let moves = MoveTable::new(params, self.table.range, self.max);
        let (p, n) = (self.world.slices, self.world.sites);
        for k in 0..p {
            let (prev, next) = (if k == 0 { p - 1 } else { k - 1 }, ring_next(k, p));
            for &site in &self.table.sweep_order {
                let site = site as usize;
                let u: f64 = rng.gen();
                let s = self.world.spins[k * n + site];
                let m = s as i32 * self.fields[k * n + site];
                let t = if p > 1 {
                    s as i32
                        * (self.world.spins[prev * n + site] + self.world.spins[next * n + site])
                            as i32
                } else {
                    0
                };
                if moves.accepts(m, t, u) {
                    self.flip(k, site);
                }
            }
        }
    }

    /// Per site: bond equal neighbouring slices with probability
    /// `1 - exp(-2 K)`, then flip each cluster by Metropolis on its classical
    /// energy change.
    fn cluster_pass(&mut self, params: &SliceParams, rng: &mut Rng) {
        let (p, n) = (self.world.slices, self.world.sites);
        let mut cuts = CutSampler::new((-2.0 * params.k_perp).exp(), rng);
        let probs: Vec<f64> = (1..=p as i32 * self.max)
            .map(|m| boltzmann(params.beta_spatial, m, self.table.range, 0.0))
            .collect();
        let accepts = |m: i32, u: f64| match m {
            m if m < 0 => true,
            0 => u < ZERO_DELTA_ACCEPT,
            m => u < probs[(m - 1) as usize],
        };
        let mut cut = vec![false; p];
        let mut m = vec![0i32; p];
        for &site in &self.table.sweep_order {
            let site = site as usize;
            // cut[k]: no bond between slices k and k + 1
            for k in 0..p {
                let a = self.world.spins[k * n + site];
                let b = self.world.spins[ring_next(k, p) * n + site];
                cut[k] = a != b || cuts.next(rng);
                m[k] = a as i32 * self.fields[k * n + site];
            }
            let Some(last_cut) = cut.iter().rposition(|&c| c) else {
                if accepts(m.iter().sum(), rng.gen()) {
                    for k in 0..p {
                        self.flip(k, site);
                    }
                }
                continue;
            };
            // clusters run from just after one cut to the next cut, inclusive
            let mut start = ring_next(last_cut, p);
            loop {
                let mut end = start;
                let mut total = m[end];
                while !cut[end] {
                    end = ring_next(end, p);
                    total += m[end];
                }
                if accepts(total, rng.gen()) {
                    let mut k = start;
                    loop {
                        self.flip(k, site);
                        if k == end {
                            break;
                        }
                        k = ring_next(k, p);
                    }
                }
                if end == last_cut {
                    break;
                }
                start = ring_next(end, p);
            }
        }
    }
}

/// Final worldline of run `run`.
pub fn sqa_worldline(
    table: &CouplingTable,
    sched: &SqaSchedule,
    seed: u64,
    run: usize,
) -> WorldLine {
    let mut rng = rng::stream(seed, run as u64);
    let mut pi = PathIntegral::random(table, sched.slices as usize, &mut rng);
    for k in 0..sched.sweeps {
        pi.sweep(&sched.params_at(k), &mut rng);
    }
    pi.world
}

/// Runs the sampler at fixed parameters for `sweeps` sweeps from a random
/// worldline (run `run` of `seed`).
pub fn sample_frozen(
    table: &CouplingTable,
    params: &SliceParams,
    sweeps: u32,
    seed: u64,
    run: usize,
) -> WorldLine {
    let mut rng = rng::stream(seed, run as u64);
    let mut pi = PathIntegral::random(table, params.slices as usize, &mut rng);
    for _ in 0..sweeps {
        pi.sweep(params, &mut rng);
    }
    pi.world
}

/// `n_runs` independent annealing runs; each reports the lowest slice energy.
pub fn sqa_run(
    inst: &ProblemInstance,
    sched: &SqaSchedule,
    n_runs: usize,
    seed: u64,
) -> Result<RunBatch, SqaError> {
    sched.validate()?;
    if n_runs == 0 {
        return Err(SqaError::NoRuns);
    }
    let table = inst.coupling_table();
    let energies = (0..n_runs)
        .map(|run| sqa_worldline(&table, sched, seed, run).min_energy_numerator(&table))
        .collect();
    Ok(RunBatch {
        range: inst.range(),
        sweeps: sched.sweeps,
        seed,
        energies,
        spin_updates: n_runs as u64 * sqa_effort(sched, table.len()).spin_updates,
    })
}

/// Work of one run, in sweeps and in attempted single-spin updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Effort {
    pub mcs: u64,
    pub spin_updates: u64,
}

pub fn sqa_effort(sched: &SqaSchedule, n: usize) -> Effort {
    let mcs = sched.sweeps as u64;
    Effort {
        mcs,
        spin_updates: mcs * n as u64 * sched.slices as u64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::ground_energy_dp;
    use crate::instances::generate_instance;
    use crate::sa::{scalar_lane_with, SuccessEstimate};
    use crate::topology::ChimeraGraph;

    fn ferro_cell() -> ProblemInstance {
        ProblemInstance::uniform(ChimeraGraph::new(1, 1, 4).unwrap(), 1, 1).unwrap()
    }

    #[test]
    fn schedule_endpoints() {
        let s = SqaSchedule::new(11);
        assert_eq!(s.b_at(0), 0.0);
        assert_eq!(s.b_at(10), 1.0);
        assert!((s.a_at(5) - 1.25).abs() < 1e-12);
        assert_eq!(s.a_at(10), DEFAULT_EPSILON);
        assert_eq!(SqaSchedule::new(1).b_at(0), 1.0);
        assert!(s.params_at(10).k_perp.is_finite());
    }

    #[test]
    fn j_perp_limits() {
        // strong field: weak inter-slice coupling, and vice versa
        assert!(j_perp(10.0, 1e3, 64) < 1e-12);
        assert!(j_perp(10.0, 1e-8, 64) > 50.0);
        let (beta, a, p) = (2.0, 0.7, 8);
        let want = -(p as f64) / (2.0 * beta) * (beta * a / p as f64).tanh().ln();
        assert_eq!(j_perp(beta, a, p), want);
    }

    #[test]
    fn validation() {
        let ok = SqaSchedule::new(10);
        assert!(ok.validate().is_ok());
        assert_eq!(
            SqaSchedule { sweeps: 0, ..ok }.validate(),
            Err(SqaError::ZeroSweeps)
        );
        assert_eq!(
            SqaSchedule { slices: 0, ..ok }.validate(),
            Err(SqaError::ZeroSlices)
        );
        assert_eq!(
            SqaSchedule { a_init: 0.0, ..ok }.validate(),
            Err(SqaError::BadField(0.0))
        );
        assert!(SqaSchedule {
            a_init: 0.0,
            slices: 1,
            ..ok
        }
        .validate()
        .is_ok());
        assert_eq!(
            SqaSchedule { beta: -1.0, ..ok }.validate(),
            Err(SqaError::BadBeta(-1.0))
        );
        assert_eq!(sqa_run(&ferro_cell(), &ok, 0, 1), Err(SqaError::NoRuns));
    }

    #[test]
    fn single_slice_is_simulated_annealing() {
        let g = ChimeraGraph::new(2, 2, 4).unwrap();
        for seed in 0..4 {
            let inst = generate_instance(&g, 3, seed).unwrap();
            let table = inst.coupling_table();
            let sched = SqaSchedule {
                slices: 1,
                sweeps: 40,
                beta: 3.0,
                ..SqaSchedule::new(40)
            };
            let betas: Vec<f64> = (0..sched.sweeps)
                .map(|k| sched.params_at(k).beta_spatial)
                .collect();
            for run in 0..3 {
                let w = sqa_worldline(&table, &sched, seed, run);
                let sa = scalar_lane_with(&table, &betas, seed, run, 0);
                assert_eq!(w.slice(0), &sa.0[..]);
            }
        }
    }

    #[test]
    fn effort_accounting() {
        let s = SqaSchedule::new(4000);
        assert_eq!(
            sqa_effort(&s, 128),
            Effort {
                mcs: 4000,
                spin_updates: 32_768_000
            }
        );
        let one = SqaSchedule { slices: 1, ..s };
        assert_eq!(sqa_effort(&one, 128).spin_updates, 128 * 4000);
        let double = SqaSchedule { slices: 128, ..s };
        assert_eq!(sqa_effort(&double, 128).spin_updates, 2 * 32_768_000);
        assert_eq!(sqa_effort(&double, 128).mcs, 4000);
    }

    #[test]
    fn ferromagnetic_cell_is_solved() {
        let inst = ferro_cell();
        let truth = ground_energy_dp(&inst).unwrap();
        let batch = sqa_run(&inst, &SqaSchedule::new(1000), 1024, 5).unwrap();
        let est = SuccessEstimate::from_counts(batch.hits(&truth), batch.n_runs());
        assert!(est.s >= 0.99, "s = {}", est.s);
        assert_eq!(batch.spin_updates, 1024 * 1000 * 8 * 64);
    }

    #[test]
    fn never_below_ground_state_and_deterministic() {
        let g = ChimeraGraph::new(2, 2, 4).unwrap();
        let inst = generate_instance(&g, 1, 3).unwrap();
        let truth = ground_energy_dp(&inst).unwrap();
        let sched = SqaSchedule {
            slices: 8,
            ..SqaSchedule::new(50)
        };
        let a = sqa_run(&inst, &sched, 40, 9).unwrap();
        assert_eq!(a, sqa_run(&inst, &sched, 40, 9).unwrap());
        assert!(a.energies.iter().all(|&e| e >= truth.energy.numerator));
        assert_ne!(a, sqa_run(&inst, &sched, 40, 10).unwrap());
    }

    #[test]
    fn strong_field_decouples_slices() {
        let table = ferro_cell().coupling_table();
        let params = SliceParams::new(DEFAULT_BETA, 1e3, 1.0, 8);
        let runs = 10_000;
        let (mut sum, mut sq) = (0.0, 0.0);
        for run in 0..runs {
            let w = sample_frozen(&table, &params, 20, 11, run);
            let x = (w.get(0, 0) * w.get(1, 0)) as f64;
            sum += x;
            sq += x * x;
        }
        let n = runs as f64;
        let mean = sum / n;
        let sigma = ((sq / n - mean * mean) / n).sqrt();
        assert!(mean.abs() < 3.0 * sigma, "corr {mean} sigma {sigma}");
    }

    #[test]
    fn weak_field_locks_slices() {
        let table = ferro_cell().coupling_table();
        let sched = SqaSchedule {
            a_init: DEFAULT_EPSILON,
            slices: 16,
            ..SqaSchedule::new(200)
        };
        let runs = 1000;
        let locked = (0..runs)
            .filter(|&run| sqa_worldline(&table, &sched, 12, run).is_locked())
            .count();
        assert!(locked as f64 >= 0.99 * runs as f64, "{locked} of {runs}");
    }

    fn two_spin() -> ProblemInstance {
        let g = ChimeraGraph::new(1, 1, 1).unwrap();
        ProblemInstance::from_parts(g, 2, vec![-1], vec![1, 0], 0).unwrap()
    }

    /// Exact worldline distribution of classes `class(state)` by enumeration.
    fn exact_histogram(
        table: &CouplingTable,
        params: &SliceParams,
        bins: usize,
        class: impl Fn(&[i8]) -> usize,
    ) -> Vec<f64> {
        let p = params.slices as usize;
        let n = table.len();
        let mut hist = vec![0.0; bins];
        for bits in 0u32..1 << (p * n) {
            let spins: Vec<i8> = (0..p * n)
                .map(|i| if bits >> i & 1 == 1 { 1 } else { -1 })
                .collect();
            let mut action = 0.0;
            for k in 0..p {
                let e =
                    table.energy_numerator(&spins[k * n..(k + 1) * n]) as f64 / table.range as f64;
                action += params.beta_spatial * e;
                for i in 0..n {
                    action -=
                        params.k_perp * (spins[k * n + i] * spins[(k + 1) % p * n + i]) as f64;
                }
            }
            hist[class(&spins)] += (-action).exp();
        }
        let z: f64 = hist.iter().sum();
        hist.iter().map(|w| w / z).collect()
    }

    fn chi_square_ok(
        table: &CouplingTable,
        params: &SliceParams,
        runs: usize,
        bins: usize,
        class: impl Fn(&[i8]) -> usize + Copy,
    ) {
        let p = params.slices;
        let want = exact_histogram(table, params, bins, class);
        let mut got = vec![0usize; bins];
        for run in 0..runs {
            got[class(&sample_frozen(table, params, 30, 21, run).spins)] += 1;
        }
        let (mut chi2, mut df) = (0.0, 0usize);
        for (w, &g) in want.iter().zip(&got) {
            let expected = w * runs as f64;
            if expected >= 5.0 {
                chi2 += (g as f64 - expected).powi(2) / expected;
                df += 1;
            }
        }
        let df = (df - 1) as f64;
        assert!(
            chi2 < df + 3.0 * (2.0 * df).sqrt(),
            "P={p}: chi2 {chi2} df {df}"
        );
    }

    #[test]
    fn frozen_sampler_matches_exact_distribution() {
        let table = two_spin().coupling_table();
        let state = |spins: &[i8]| {
            spins
                .iter()
                .enumerate()
                .filter(|(_, &s)| s == 1)
                .fold(0usize, |acc, (i, _)| acc | 1 << i)
        };
        for &(p, a) in &[(2, 0.8), (4, 0.5), (4, 2.0)] {
            let bins = 1 << (2 * p);
            chi_square_ok(
                &table,
                &SliceParams::new(1.5, a, 1.0, p),
                40_000,
                bins,
                state,
            );
        }
        // P = 8: slices with aligned spins and slices with the first spin up
        let coarse = |spins: &[i8]| {
            let aligned = spins.chunks(2).filter(|s| s[0] == s[1]).count();
            let up = spins.chunks(2).filter(|s| s[0] == 1).count();
            aligned * 9 + up
        };
        chi_square_ok(
            &table,
            &SliceParams::new(1.5, 0.6, 1.0, 8),
            40_000,
            81,
            coarse,
        );
    }
}
