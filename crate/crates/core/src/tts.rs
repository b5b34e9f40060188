//! Time-to-solution statistics.
//!
//! Success probabilities become repetition counts `R = ceil(ln(1-p)/ln(1-s))`
//! and total efforts `R * t_a`. Instances that never succeed, or need more
//! repetitions than the cap, are censored: they sort above every finite value
//! and are never given a number.

use std::cmp::Ordering;

use rand::Rng as _;
use thiserror::Error;

use crate::rng;

pub const DEFAULT_TARGET: f64 = 0.99;
/// Repetitions per gauge.
pub const DEFAULT_MAX_REPETITIONS: u64 = 10_000;
pub const BOOTSTRAP_RESAMPLES: usize = 1000;

#[derive(Debug, Error, PartialEq)]
pub enum TtsError {
    #[error("probability {0} outside its valid range")]
    BadProbability(f64),
    #[error("no values")]
    Empty,
    #[error("quantile {0} outside (0, 100)")]
    BadQuantile(f64),
    #[error("every point of the curve is censored")]
    AllCensored,
    #[error("no wall-clock entry for N = {0}")]
    UnknownSize(usize),
    #[error("at least one gauge (programming cycle) is required")]
    ZeroGauges,
    #[error("at least one repetition is required")]
    ZeroRepetitions,
    #[error("annealing time must be positive, got {0}")]
    BadTime(f64),
}

/// A time to solution, or the marker for an instance never solved within the
/// repetition cap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tts {
    Finite(f64),
    Censored,
}

impl Tts {
    pub fn value(self) -> Option<f64> {
        match self {
            Tts::Finite(v) => Some(v),
            Tts::Censored => None,
        }
    }

    pub fn is_censored(self) -> bool {
        self == Tts::Censored
    }

    /// Total order with censored values above everything.
    pub fn total_cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Tts::Finite(a), Tts::Finite(b)) => a.total_cmp(b),
            (Tts::Finite(_), Tts::Censored) => Ordering::Less,
            (Tts::Censored, Tts::Finite(_)) => Ordering::Greater,
            (Tts::Censored, Tts::Censored) => Ordering::Equal,
        }
    }

    pub fn map(self, f: impl FnOnce(f64) -> f64) -> Tts {
        match self {
            Tts::Finite(v) => Tts::Finite(f(v)),
            Tts::Censored => Tts::Censored,
        }
    }
}

fn check_probability(x: f64) -> Result<(), TtsError> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(TtsError::BadProbability(x))
    }
}

/// Repetitions needed to succeed at least once with probability `p`; `None`
/// when censored (`s = 0`, or more than `cap` repetitions).
pub fn repetitions_needed(s: f64, p: f64, cap: Option<u64>) -> Result<Option<u64>, TtsError> {
    check_probability(s)?;
    if !(p > 0.0 && p < 1.0) {
        return Err(TtsError::BadProbability(p));
    }
    if s == 0.0 {
        return Ok(None);
    }
    let r = if s == 1.0 {
        1.0
    } else {
        // slack absorbs rounding in ratios that are integers in exact arithmetic
        ((-p).ln_1p() / (-s).ln_1p() - 1e-9).ceil().max(1.0)
    };
    let cap = cap.map_or(f64::INFINITY, |c| c as f64);
    Ok((r <= cap).then_some(r as u64))
}

/// `1 - (prod (1 - s_g))^(1/G)`.
pub fn gauge_mean_success(s: &[f64]) -> Result<f64, TtsError> {
    if s.is_empty() {
        return Err(TtsError::Empty);
    }
    let mut log_fail = 0.0;
    for &sg in s {
        check_probability(sg)?;
        log_fail += (-sg).ln_1p();
    }
    Ok(1.0 - (log_fail / s.len() as f64).exp())
}

/// `R * t_a` in the units of `t_a`.
pub fn total_effort(s: f64, p: f64, t_a: f64, cap: Option<u64>) -> Result<Tts, TtsError> {
    if !(t_a > 0.0) {
        return Err(TtsError::BadTime(t_a));
    }
    Ok(match repetitions_needed(s, p, cap)? {
        Some(r) => Tts::Finite(r as f64 * t_a),
        None => Tts::Censored,
    })
}

/// Per-gauge outcomes of one instance at one annealing time.
#[derive(Debug, Clone, PartialEq)]
pub struct SuccessStats {
    pub instance_id: String,
    pub solver: String,
    pub t_a: f64,
    /// `(hits, runs)` per gauge.
    pub gauges: Vec<(u64, u64)>,
    /// Repetition cap per gauge.
    pub r_max: u64,
}

impl SuccessStats {
    pub fn success_per_gauge(&self) -> Vec<f64> {
        self.gauges
            .iter()
            .map(|&(h, n)| if n == 0 { 0.0 } else { h as f64 / n as f64 })
            .collect()
    }

    pub fn mean_success(&self) -> Result<f64, TtsError> {
        gauge_mean_success(&self.success_per_gauge())
    }

    /// Total cap over all gauges.
    pub fn cap(&self) -> u64 {
        self.r_max.saturating_mul(self.gauges.len() as u64)
    }

    pub fn tts(&self, p: f64) -> Result<Tts, TtsError> {
        total_effort(self.mean_success()?, p, self.t_a, Some(self.cap()))
    }
}

fn check_quantile(q: f64) -> Result<(), TtsError> {
    if q > 0.0 && q < 100.0 {
        Ok(())
    } else {
        Err(TtsError::BadQuantile(q))
    }
}

fn rank(q: f64, n: usize) -> usize {
    ((q / 100.0 * n as f64).ceil() as usize).clamp(1, n) - 1
}

/// Nearest-rank element of a non-empty slice under `cmp` (reorders `values`).
pub(crate) fn nearest_rank<T: Copy>(
    values: &mut [T],
    q: f64,
    cmp: impl Fn(&T, &T) -> Ordering,
) -> T {
    let k = rank(q, values.len());
    *values.select_nth_unstable_by(k, cmp).1
}

/// 95% percentile-bootstrap bounds of the nearest-rank quantile.
pub(crate) fn bootstrap_bounds<T: Copy>(
    values: &[T],
    q: f64,
    resamples: usize,
    seed: u64,
    cmp: impl Fn(&T, &T) -> Ordering + Copy,
) -> (T, T) {
    let n = values.len();
    let mut rng = rng::stream(seed, 0);
    let mut sample = values.to_vec();
    let mut boot: Vec<T> = (0..resamples.max(1))
        .map(|_| {
            for slot in sample.iter_mut() {
                *slot = values[rng.gen_range(0..n)];
            }
            nearest_rank(&mut sample, q, cmp)
        })
        .collect();
    (
        nearest_rank(&mut boot, 2.5, cmp),
        nearest_rank(&mut boot, 97.5, cmp),
    )
}

pub(crate) fn check_quantile_input<T>(values: &[T], q: f64) -> Result<(), TtsError> {
    check_quantile(q)?;
    if values.is_empty() {
        return Err(TtsError::Empty);
    }
    Ok(())
}

/// Nearest-rank quantile `q` (percent); censored when the rank lands on a
/// censored entry.
pub fn quantile(values: &[Tts], q: f64) -> Result<Tts, TtsError> {
    check_quantile_input(values, q)?;
    Ok(nearest_rank(&mut values.to_vec(), q, Tts::total_cmp))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantileEstimate {
    pub q: f64,
    pub value: Tts,
    pub ci_lo: Tts,
    pub ci_hi: Tts,
}

/// Quantile with a 95% percentile-bootstrap interval over `resamples`
/// resamples drawn from `seed`.
pub fn quantile_ci(
    values: &[Tts],
    q: f64,
    resamples: usize,
    seed: u64,
) -> Result<QuantileEstimate, TtsError> {
    let value = quantile(values, q)?;
    let (ci_lo, ci_hi) = bootstrap_bounds(values, q, resamples, seed, Tts::total_cmp);
    Ok(QuantileEstimate {
        q,
        value,
        ci_lo,
        ci_hi,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub t_a: f64,
    pub effort: QuantileEstimate,
}

/// Quantile effort against annealing time for one problem size.
#[derive(Debug, Clone, PartialEq)]
pub struct EffortCurve {
    pub n: usize,
    pub points: Vec<CurvePoint>,
}

/// Builds the curve from per-instance efforts at each grid point.
pub fn effort_curve(
    n: usize,
    grid: &[(f64, Vec<Tts>)],
    q: f64,
    seed: u64,
) -> Result<EffortCurve, TtsError> {
    if grid.is_empty() {
        return Err(TtsError::Empty);
    }
    let mut points = grid
        .iter()
        .map(|(t_a, values)| {
            Ok(CurvePoint {
                t_a: *t_a,
                effort: quantile_ci(
                    values,
                    q,
                    BOOTSTRAP_RESAMPLES,
                    rng::derive_seed(seed, &[t_a.to_bits()]),
                )?,
            })
        })
        .collect::<Result<Vec<_>, TtsError>>()?;
    points.sort_by(|a, b| a.t_a.total_cmp(&b.t_a));
    Ok(EffortCurve { n, points })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridPosition {
    Interior,
    /// Minimum at the shortest annealing time; the optimum may be shorter.
    Shortest,
    /// Minimum at the longest annealing time; the optimum may be longer.
    Longest,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Envelope {
    pub t_a_opt: f64,
    pub effort: QuantileEstimate,
    pub position: GridPosition,
}

impl Envelope {
    pub fn at_boundary(&self) -> bool {
        self.position != GridPosition::Interior
    }
}

/// Minimum of the curve over its grid (the shorter time wins ties).
pub fn optimal_envelope(curve: &EffortCurve) -> Result<Envelope, TtsError> {
    if curve.points.is_empty() {
        return Err(TtsError::Empty);
    }
    let (idx, best) = curve
        .points
        .iter()
        .enumerate()
        .filter(|(_, p)| !p.effort.value.is_censored())
        .min_by(|a, b| {
            a.1.effort
                .value
                .total_cmp(&b.1.effort.value)
                .then(a.0.cmp(&b.0))
        })
        .ok_or(TtsError::AllCensored)?;
    let position = if idx == 0 {
        GridPosition::Shortest
    } else if idx + 1 == curve.points.len() {
        GridPosition::Longest
    } else {
        GridPosition::Interior
    };
    Ok(Envelope {
        t_a_opt: best.t_a,
        effort: best.effort,
        position,
    })
}

/// Device time per size: programming time `t_p` and anneal plus readout time
/// `t_r` per repetition.
#[derive(Debug, Clone, PartialEq)]
pub struct WallClockModel {
    /// `(N, t_p in ms, t_r in µs)`, ascending in `N`.
    pub table: Vec<(usize, f64, f64)>,
    pub provenance: &'static str,
}

impl WallClockModel {
    /// The D-Wave Two timings per problem size.
    pub fn dw2() -> Self {
        WallClockModel {
            table: vec![
                (8, 14.7, 51.0),
                (16, 14.8, 53.0),
                (31, 14.8, 57.9),
                (47, 14.9, 60.6),
                (70, 15.0, 64.5),
                (94, 15.2, 68.3),
                (126, 15.6, 73.1),
                (158, 15.5, 78.0),
                (198, 15.5, 80.8),
                (238, 15.7, 83.5),
                (284, 15.8, 83.6),
                (332, 16.0, 87.1),
                (385, 16.6, 87.1),
                (439, 16.6, 90.4),
                (503, 16.6, 90.5),
            ],
            provenance: "modeled, not measured",
        }
    }

    pub fn lookup(&self, n: usize) -> Result<(f64, f64), TtsError> {
        self.table
            .iter()
            .find(|row| row.0 == n)
            .map(|&(_, tp, tr)| (tp, tr))
            .ok_or(TtsError::UnknownSize(n))
    }
}

/// `G * t_p(N) + R * t_r(N)` in seconds.
pub fn wallclock(n: usize, r: u64, g: u64, model: &WallClockModel) -> Result<f64, TtsError> {
    if g == 0 {
        return Err(TtsError::ZeroGauges);
    }
    if r == 0 {
        return Err(TtsError::ZeroRepetitions);
    }
    let (tp, tr) = model.lookup(n)?;
    Ok(g as f64 * tp * 1e-3 + r as f64 * tr * 1e-6)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TtsRow {
    pub n: usize,
    pub q: f64,
    pub t_a_opt: Option<f64>,
    pub effort: QuantileEstimate,
}

/// Optimal-time quantile efforts of one solver over sizes and quantiles.
#[derive(Debug, Clone, PartialEq)]
pub struct TtsTable {
    pub solver: String,
    pub r: u32,
    pub rows: Vec<TtsRow>,
}

impl TtsTable {
    pub fn new(solver: impl Into<String>, r: u32) -> Self {
        TtsTable {
            solver: solver.into(),
            r,
            rows: Vec::new(),
        }
    }

    /// Adds the envelope of `curve`; an all-censored curve becomes a censored
    /// row without an optimal time.
    pub fn push_curve(&mut self, curve: &EffortCurve, q: f64) -> Result<(), TtsError> {
        let (t_a_opt, effort) = match optimal_envelope(curve) {
            Ok(env) => (Some(env.t_a_opt), env.effort),
            Err(TtsError::AllCensored) => (
                None,
                QuantileEstimate {
                    q,
                    value: Tts::Censored,
                    ci_lo: Tts::Censored,
                    ci_hi: Tts::Censored,
                },
            ),
            Err(e) => return Err(e),
        };
        self.rows.push(TtsRow {
            n: curve.n,
            q,
            t_a_opt,
            effort,
        });
        self.rows
            .sort_by(|a, b| a.n.cmp(&b.n).then(a.q.total_cmp(&b.q)));
        Ok(())
    }

    pub fn get(&self, n: usize, q: f64) -> Option<&TtsRow> {
        self.rows.iter().find(|row| row.n == n && row.q == q)
    }
}
