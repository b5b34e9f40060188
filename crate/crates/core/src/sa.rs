//! Simulated annealing with Metropolis sweeps under a linear inverse
//! temperature ramp.
//!
//! Runs are grouped in words of 64. Every word owns one random stream: first
//! `N` 64-bit draws give the initial spins of all 64 lanes (bit set = spin up),
//! then one uniform per (sweep, site) is shared by the 64 lanes. The scalar
//! kernel replays that stream for a single lane; the multispin kernel updates
//! all lanes at once with bit-sliced arithmetic. Both take their acceptance
//! decisions from the same [`AcceptanceTable`], so they agree bit for bit.
//!
//! Sites are visited sublattice by sublattice, in ascending order within each.

use rand::{Rng as _, RngCore};
use thiserror::Error;

use crate::exact::GroundTruth;
use crate::instances::{CouplingTable, Energy, ProblemInstance, SpinConfig};
use crate::rng::{self, Rng};

/// Proposal order, logged with every run.
pub const PROPOSAL_ORDER: &str = "sublattice-typewriter";

pub const REPLICAS_PER_WORD: usize = 64;

#[derive(Debug, Error, PartialEq)]
pub enum SaError {
    #[error("annealing time must be at least one sweep")]
    ZeroSweeps,
    #[error("inverse temperatures must satisfy 0 < beta_init <= beta_final, got {0} -> {1}")]
    BadSchedule(f64, f64),
    #[error("run count must be positive")]
    NoRuns,
    #[error("batch and ground truth belong to different instances")]
    InstanceMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaSchedule {
    pub beta_init: f64,
    pub beta_final: f64,
    /// Annealing time in sweeps (MCS).
    pub sweeps: u32,
}

impl SaSchedule {
    /// `beta: 0.1 -> 3r`.
    pub fn for_range(range: u32, sweeps: u32) -> Self {
        SaSchedule {
            beta_init: 0.1,
            beta_final: 3.0 * range as f64,
            sweeps,
        }
    }

    pub fn validate(&self) -> Result<(), SaError> {
        if self.sweeps == 0 {
            return Err(SaError::ZeroSweeps);
        }
        if !(self.beta_init > 0.0 && self.beta_final >= self.beta_init) {
            return Err(SaError::BadSchedule(self.beta_init, self.beta_final));
        }
        Ok(())
    }

    /// Inverse temperature of sweep `k`; endpoints inclusive, a single sweep
    /// runs at `beta_final`.
    pub fn beta_at(&self, k: u32) -> f64 {
        if self.sweeps <= 1 {
            return self.beta_final;
        }
        let x = k as f64 / (self.sweeps - 1) as f64;
        self.beta_init + (self.beta_final - self.beta_init) * x
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Kernel {
    Multispin,
    Scalar,
}

impl Kernel {
    pub fn as_str(self) -> &'static str {
        match self {
            Kernel::Multispin => "multispin",
            Kernel::Scalar => "scalar",
        }
    }
}

/// Final energies of a batch of independent annealing runs on one instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunBatch {
    pub range: u32,
    pub sweeps: u32,
    pub seed: u64,
    /// Energy numerators (over `range`), one per run.
    pub energies: Vec<i64>,
    /// Attempted single-spin updates over the whole batch.
    pub spin_updates: u64,
}

impl RunBatch {
    pub fn n_runs(&self) -> usize {
        self.energies.len()
    }

    pub fn hits(&self, truth: &GroundTruth) -> usize {
        self.energies
            .iter()
            .filter(|&&e| Energy::new(e, self.range) == truth.energy)
            .count()
    }
}

/// Metropolis acceptance for `ΔE = 2 m / r` with `m = s_i * local_field`:
/// always for `m < 0`, `exp(-beta ΔE)` for `m > 0`, and probability 1/2 for
/// `m = 0`. The tie rule keeps detailed balance and stops zero-field spins from
/// flipping deterministically every sweep, which otherwise traps balanced
/// configurations of a unit cell forever.
#[derive(Debug, Clone)]
pub struct AcceptanceTable {
    /// `probs[m - 1]` for `m = 1..=max`, non-increasing by construction.
    probs: Vec<f64>,
}

pub(crate) const ZERO_DELTA_ACCEPT: f64 = 0.5;

impl AcceptanceTable {
    pub fn new(beta: f64, range: u32, max: i32) -> Self {
        let mut probs: Vec<f64> = (1..=max.max(1))
            .map(|m| boltzmann(beta, m, range, 0.0))
            .collect();
        for i in 1..probs.len() {
            probs[i] = probs[i].min(probs[i - 1]);
        }
        AcceptanceTable { probs }
    }

    #[inline]
    pub fn accepts(&self, m: i32, u: f64) -> bool {
        match m {
            m if m < 0 => true,
            0 => u < ZERO_DELTA_ACCEPT,
            m => u < self.probs[(m - 1) as usize],
        }
    }

    /// Smallest positive `m` that rejects `u` (`max + 1` if none does).
    #[inline]
    fn first_rejecting(&self, u: f64) -> i32 {
        self.probs.partition_point(|&p| p > u) as i32 + 1
    }
}

/// `exp(-(beta * 2m / r + extra))`, the one Boltzmann factor formula shared by
/// the annealers.
#[inline]
pub(crate) fn boltzmann(beta: f64, m: i32, range: u32, extra: f64) -> f64 {
    (-(beta * (2 * m) as f64 / range as f64 + extra)).exp()
}

/// One Metropolis sweep on a single configuration, drawing one uniform per
/// site from `rng`.
pub fn metropolis_sweep(
    table: &CouplingTable,
    spins: &mut [i8],
    acc: &AcceptanceTable,
    rng: &mut Rng,
) {
    for &site in &table.sweep_order {
        let site = site as usize;
        let u: f64 = rng.gen();
        let m = spins[site] as i32 * table.local_field(site, spins);
        if acc.accepts(m, u) {
            spins[site] = -spins[site];
        }
    }
}

fn word_stream(seed: u64, word: usize) -> Rng {
    rng::stream(seed, word as u64)
}

/// Initial lane configurations of a word: bit `lane` of draw `i` is site `i`.
fn initial_words(n: usize, rng: &mut Rng) -> Vec<u64> {
    (0..n).map(|_| rng.next_u64()).collect()
}

/// Scalar reference: anneals lane `lane` of word `word`.
pub fn scalar_lane(
    table: &CouplingTable,
    sched: &SaSchedule,
    seed: u64,
    word: usize,
    lane: usize,
) -> SpinConfig {
    let betas: Vec<f64> = (0..sched.sweeps).map(|k| sched.beta_at(k)).collect();
    scalar_lane_with(table, &betas, seed, word, lane)
}

/// Scalar kernel driven by an explicit per-sweep inverse temperature sequence.
pub fn scalar_lane_with(
    table: &CouplingTable,
    betas: &[f64],
    seed: u64,
    word: usize,
    lane: usize,
) -> SpinConfig {
    let mut rng = word_stream(seed, word);
    let mut spins: Vec<i8> = initial_words(table.len(), &mut rng)
        .into_iter()
        .map(|w| if w >> lane & 1 == 1 { 1 } else { -1 })
        .collect();
    let max = table.max_abs_weight();
    for &beta in betas {
        let acc = AcceptanceTable::new(beta, table.range, max);
        metropolis_sweep(table, &mut spins, &acc, &mut rng);
    }
    SpinConfig(spins)
}

/// Bit-sliced lattice for 64 simultaneous replicas.
struct Multispin<'a> {
    table: &'a CouplingTable,
    abs_w: Vec<u32>,
    neg: Vec<u64>,
    /// Per site: `|h|` and the spin bit pattern that leaves the field unsatisfied.
    field_abs: Vec<u32>,
    field_unsat: Vec<u64>,
    total: Vec<i32>,
    slices: usize,
    all_unit: bool,
}

impl<'a> Multispin<'a> {
    fn new(table: &'a CouplingTable) -> Self {
        let abs_w: Vec<u32> = table.weights.iter().map(|w| w.unsigned_abs()).collect();
        let neg = table
            .weights
            .iter()
            .map(|&w| if w < 0 { !0 } else { 0 })
            .collect();
        let field_abs: Vec<u32> = table.fields.iter().map(|h| h.unsigned_abs()).collect();
        // spin up (bit 1) satisfies h > 0
        let field_unsat = table
            .fields
            .iter()
            .map(|&h| if h > 0 { !0 } else { 0 })
            .collect();
        let total: Vec<i32> = (0..table.len()).map(|i| table.abs_weight(i)).collect();
        let max = total.iter().copied().max().unwrap_or(0).max(1) as u32;
        let slices = (32 - max.leading_zeros()) as usize;
        let all_unit = abs_w.iter().all(|&w| w == 1) && field_abs.iter().all(|&h| h == 0);
        Multispin {
            table,
            abs_w,
            neg,
            field_abs,
            field_unsat,
            total,
            slices,
            all_unit,
        }
    }

    /// Bit-sliced weight of unsatisfied terms at `site`, one counter per lane.
    #[inline]
    fn unsatisfied(&self, site: usize, spins: &[u64], acc: &mut [u64; 8]) {
        *acc = [0; 8];
        let k = self.slices;
        let me = spins[site];
        let t = self.table;
        let range = t.offsets[site]..t.offsets[site + 1];
        if self.all_unit {
            for e in range {
                let mut carry = me ^ spins[t.neighbors[e] as usize] ^ self.neg[e];
                for slot in acc.iter_mut().take(k) {
                    let s = *slot ^ carry;
                    carry &= *slot;
                    *slot = s;
                }
            }
            return;
        }
        for e in range {
            let m = me ^ spins[t.neighbors[e] as usize] ^ self.neg[e];
            add_masked(acc, k, self.abs_w[e], m);
        }
        if self.field_abs[site] != 0 {
            let m = !(me ^ self.field_unsat[site]);
            add_masked(acc, k, self.field_abs[site], m);
        }
    }

    fn anneal_word(&self, sched: &SaSchedule, seed: u64, word: usize) -> Vec<u64> {
        let mut rng = word_stream(seed, word);
        let mut spins = initial_words(self.table.len(), &mut rng);
        let max = self.table.max_abs_weight();
        let mut unsat = [0u64; 8];
        for k in 0..sched.sweeps {
            let acc = AcceptanceTable::new(sched.beta_at(k), self.table.range, max);
            for &site in &self.table.sweep_order {
                let site = site as usize;
                let u: f64 = rng.gen();
                // accept iff m = S - 2U < m*, i.e. U >= floor((S - m*) / 2) + 1
                let total = self.total[site];
                let m_star = acc.first_rejecting(u);
                let need = (total - m_star).div_euclid(2) + 1;
                // lanes with m = 0 sit at U = S / 2 and follow the tie rule
                let drop_ties = total % 2 == 0 && u >= ZERO_DELTA_ACCEPT;
                let flip = if need > total {
                    0
                } else if need <= 0 && !drop_ties {
                    !0
                } else {
                    self.unsatisfied(site, &spins, &mut unsat);
                    let mut f = at_least(&unsat, self.slices, need.max(0) as u32);
                    if drop_ties {
                        f &= !equal_to(&unsat, self.slices, (total / 2) as u32);
                    }
                    f
                };
                spins[site] ^= flip;
            }
        }
        spins
    }
}

#[inline]
fn add_masked(acc: &mut [u64; 8], k: usize, w: u32, m: u64) {
    let mut carry = 0u64;
    for (b, slot) in acc.iter_mut().enumerate().take(k) {
        let a = if w >> b & 1 == 1 { m } else { 0 };
        let x = *slot ^ a;
        let s = x ^ carry;
        carry = (*slot & a) | (carry & x);
        *slot = s;
    }
}

/// Lanes whose bit-sliced counter is `>= t`.
#[inline]
fn at_least(acc: &[u64; 8], k: usize, t: u32) -> u64 {
    let mut gt = 0u64;
    let mut eq = !0u64;
    for b in (0..k).rev() {
        if t >> b & 1 == 1 {
            eq &= acc[b];
        } else {
            gt |= eq & acc[b];
            eq &= !acc[b];
        }
    }
    gt | eq
}

/// Lanes whose bit-sliced counter equals `t`.
#[inline]
fn equal_to(acc: &[u64; 8], k: usize, t: u32) -> u64 {
    let mut eq = !0u64;
    for (b, &slot) in acc.iter().enumerate().take(k) {
        eq &= if t >> b & 1 == 1 { slot } else { !slot };
    }
    eq
}

/// Lane `lane` of a word of spin bits.
pub fn lane_config(words: &[u64], lane: usize) -> SpinConfig {
    SpinConfig(
        words
            .iter()
            .map(|w| if w >> lane & 1 == 1 { 1 } else { -1 })
            .collect(),
    )
}

/// Multispin kernel: final spin words (one per site) for word `word`.
pub fn multispin_word(
    table: &CouplingTable,
    sched: &SaSchedule,
    seed: u64,
    word: usize,
) -> Vec<u64> {
    Multispin::new(table).anneal_word(sched, seed, word)
}

/// Anneals `n_runs` independent replicas; with the multispin kernel the run
/// count is rounded up to a multiple of 64.
pub fn sa_run(
    inst: &ProblemInstance,
    sched: &SaSchedule,
    n_runs: usize,
    seed: u64,
    kernel: Kernel,
) -> Result<RunBatch, SaError> {
    sched.validate()?;
    if n_runs == 0 {
        return Err(SaError::NoRuns);
    }
    let table = inst.coupling_table();
    let words = n_runs.div_ceil(REPLICAS_PER_WORD);
    let energies: Vec<i64> = match kernel {
        Kernel::Multispin => {
            let ms = Multispin::new(&table);
            let mut out = Vec::with_capacity(words * REPLICAS_PER_WORD);
            for w in 0..words {
                let spins = ms.anneal_word(sched, seed, w);
                for lane in 0..REPLICAS_PER_WORD {
                    out.push(table.energy_numerator(&lane_config(&spins, lane).0));
                }
            }
            out
        }
        Kernel::Scalar => (0..n_runs)
            .map(|run| {
                let cfg = scalar_lane(
                    &table,
                    sched,
                    seed,
                    run / REPLICAS_PER_WORD,
                    run % REPLICAS_PER_WORD,
                );
                table.energy_numerator(&cfg.0)
            })
            .collect(),
    };
    let spin_updates = energies.len() as u64 * sched.sweeps as u64 * table.len() as u64;
    Ok(RunBatch {
        range: inst.range(),
        sweeps: sched.sweeps,
        seed,
        energies,
        spin_updates,
    })
}

/// Success probability with a 95% Wilson score interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuccessEstimate {
    pub hits: usize,
    pub runs: usize,
    pub s: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

const Z95: f64 = 1.959_963_984_540_054;

impl SuccessEstimate {
    pub fn from_counts(hits: usize, runs: usize) -> Self {
        let n = runs as f64;
        let p = hits as f64 / n;
        let z2 = Z95 * Z95;
        let denom = 1.0 + z2 / n;
        let center = (p + z2 / (2.0 * n)) / denom;
        let half = Z95 / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
        SuccessEstimate {
            hits,
            runs,
            s: p,
            ci_lo: (center - half).max(0.0),
            ci_hi: (center + half).min(1.0),
        }
    }
}

pub fn estimate_success(batch: &RunBatch, truth: &GroundTruth) -> Result<SuccessEstimate, SaError> {
    if batch.energies.is_empty() {
        return Err(SaError::NoRuns);
    }
    // a run below the exact minimum proves the two refer to different instances
    let mismatch = truth.energy.denominator != batch.range
        || batch
            .energies
            .iter()
            .any(|&e| Energy::new(e, batch.range) < truth.energy);
    if mismatch {
        return Err(SaError::InstanceMismatch);
    }
    Ok(SuccessEstimate::from_counts(
        batch.hits(truth),
        batch.n_runs(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{ground_energy_dp, Method};
    use crate::instances::generate_instance;
    use crate::topology::ChimeraGraph;

    fn ferro_cell() -> ProblemInstance {
        ProblemInstance::uniform(ChimeraGraph::new(1, 1, 4).unwrap(), 1, 1).unwrap()
    }

    fn truth(e: i64, r: u32) -> GroundTruth {
        GroundTruth {
            energy: Energy::new(e, r),
            degeneracy: None,
            method: Method::Dp,
        }
    }

    #[test]
    fn schedule_is_linear_and_validated() {
        let s = SaSchedule::for_range(7, 5);
        assert_eq!(s.beta_at(0), 0.1);
        assert_eq!(s.beta_at(4), 21.0);
        assert!((s.beta_at(2) - 10.55).abs() < 1e-12);
        assert_eq!(SaSchedule::for_range(1, 1).beta_at(0), 3.0);
        assert_eq!(
            SaSchedule::for_range(1, 0).validate(),
            Err(SaError::ZeroSweeps)
        );
        let bad = SaSchedule {
            beta_init: 2.0,
            beta_final: 1.0,
            sweeps: 10,
        };
        assert!(matches!(bad.validate(), Err(SaError::BadSchedule(..))));
    }

    #[test]
    fn acceptance_table_thresholds() {
        let t = AcceptanceTable::new(0.7, 3, 12);
        for m in -12..=12 {
            for &u in &[0.0, 1e-9, 0.01, 0.2, 0.5, 0.9, 0.999_999] {
                let by_threshold = if m == 0 {
                    u < 0.5
                } else {
                    m < t.first_rejecting(u)
                };
                assert_eq!(t.accepts(m, u), by_threshold, "m={m} u={u}");
            }
        }
    }

    #[test]
    fn bit_sliced_counter() {
        let mut acc = [0u64; 8];
        let masks = [0b1011u64, 0b0110, 0b1111, 0b0001];
        let weights = [3u32, 5, 1, 7];
        for (&m, &w) in masks.iter().zip(&weights) {
            add_masked(&mut acc, 5, w, m);
        }
        for lane in 0..4 {
            let want: u32 = masks
                .iter()
                .zip(&weights)
                .filter(|(m, _)| *m >> lane & 1 == 1)
                .map(|(_, w)| w)
                .sum();
            let got: u32 = (0..5).map(|b| ((acc[b] >> lane & 1) as u32) << b).sum();
            assert_eq!(got, want);
            for t in 0..20 {
                assert_eq!(at_least(&acc, 5, t) >> lane & 1 == 1, want >= t);
                assert_eq!(equal_to(&acc, 5, t) >> lane & 1 == 1, want == t);
            }
        }
    }

    #[test]
    fn multispin_matches_scalar_lanes() {
        let g = ChimeraGraph::new(2, 2, 4).unwrap();
        for (r, seed) in [(1, 3u64), (3, 4), (7, 5)] {
            let inst = generate_instance(&g, r, seed).unwrap();
            let table = inst.coupling_table();
            let sched = SaSchedule::for_range(r, 25);
            let words = multispin_word(&table, &sched, seed, 1);
            for lane in [0, 7, 31, 63] {
                assert_eq!(
                    lane_config(&words, lane),
                    scalar_lane(&table, &sched, seed, 1, lane)
                );
            }
        }
    }

    #[test]
    fn easy_instance_is_solved() {
        let inst = ferro_cell();
        let batch = sa_run(
            &inst,
            &SaSchedule::for_range(1, 100),
            1024,
            1,
            Kernel::Multispin,
        )
        .unwrap();
        let est = estimate_success(&batch, &truth(-16, 1)).unwrap();
        assert!(est.s >= 0.99, "s = {}", est.s);
    }

    #[test]
    fn runs_never_beat_ground_state_and_are_reproducible() {
        let g = ChimeraGraph::new(2, 2, 4).unwrap();
        let inst = generate_instance(&g, 3, 9).unwrap();
        let gt = ground_energy_dp(&inst).unwrap();
        let sched = SaSchedule::for_range(3, 30);
        let a = sa_run(&inst, &sched, 100, 17, Kernel::Multispin).unwrap();
        let b = sa_run(&inst, &sched, 100, 17, Kernel::Multispin).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n_runs(), 128);
        assert!(a.energies.iter().all(|&e| Energy::new(e, 3) >= gt.energy));
        assert_eq!(a.spin_updates, 128 * 30 * 32);

        let s = sa_run(&inst, &sched, 100, 17, Kernel::Scalar).unwrap();
        assert_eq!(s.n_runs(), 100);
        assert_eq!(s.energies[..], a.energies[..100]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let inst = ferro_cell();
        assert_eq!(
            sa_run(&inst, &SaSchedule::for_range(1, 0), 64, 0, Kernel::Scalar),
            Err(SaError::ZeroSweeps)
        );
        assert_eq!(
            sa_run(&inst, &SaSchedule::for_range(1, 5), 0, 0, Kernel::Scalar),
            Err(SaError::NoRuns)
        );
    }

    #[test]
    fn success_monotone_in_annealing_time() {
        // ferromagnetic cell, 10^4 runs, allowing 3 sigma noise
        let inst = ferro_cell();
        let gt = truth(-16, 1);
        let mut prev: Option<SuccessEstimate> = None;
        for t_a in [1, 10, 100, 1000] {
            let runs = if t_a == 1000 { 1024 } else { 10_048 };
            let batch = sa_run(
                &inst,
                &SaSchedule::for_range(1, t_a),
                runs,
                5,
                Kernel::Multispin,
            )
            .unwrap();
            let est = estimate_success(&batch, &gt).unwrap();
            if let Some(p) = prev {
                let sigma = (p.s * (1.0 - p.s) / p.runs as f64
                    + est.s * (1.0 - est.s) / est.runs as f64)
                    .sqrt();
                assert!(est.s + 3.0 * sigma >= p.s, "t_a={t_a}: {} < {}", est.s, p.s);
            }
            prev = Some(est);
        }
    }

    #[test]
    fn wilson_interval() {
        let zero = SuccessEstimate::from_counts(0, 1000);
        assert_eq!(zero.s, 0.0);
        assert!(zero.ci_hi > 0.0);
        assert_eq!(SuccessEstimate::from_counts(1000, 1000).s, 1.0);
        // closed form at z = 1.96: center 0.5, half width
        // 1.96 / (1 + 1.96^2/1000) * sqrt(0.25/1000 + 1.96^2/4e6)
        let half = Z95 / (1.0 + Z95 * Z95 / 1000.0) * (0.25f64 / 1000.0 + Z95 * Z95 / 4.0e6).sqrt();
        let half_frozen = 0.030_934;
        assert!((half - half_frozen).abs() < 5e-6);
        let e = SuccessEstimate::from_counts(500, 1000);
        assert_eq!(e.s, 0.5);
        assert!((e.ci_lo - 0.469_07).abs() < 1e-4 && (e.ci_hi - 0.530_93).abs() < 1e-4);
    }

    #[test]
    fn mismatched_truth_is_rejected() {
        let inst = ferro_cell();
        let batch = sa_run(
            &inst,
            &SaSchedule::for_range(1, 50),
            64,
            2,
            Kernel::Multispin,
        )
        .unwrap();
        assert_eq!(
            estimate_success(&batch, &truth(-8, 1)),
            Err(SaError::InstanceMismatch)
        );
        assert_eq!(
            estimate_success(&batch, &truth(-16, 3)),
            Err(SaError::InstanceMismatch)
        );
    }
}
