//! Speedup statistics between a classical-role solver `C` and a device-role
//! solver `Q`: the ratio of quantiles (RofQ) and quantiles of per-instance
//! ratios (QofR), with optional correction for hardware that grows with `N`.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use thiserror::Error;

use crate::rng;
use crate::tts::{self, Tts, TtsError, TtsTable, BOOTSTRAP_RESAMPLES};

#[derive(Debug, Error, PartialEq)]
pub enum SpeedupError {
    #[error("tables cover different sizes or quantiles")]
    GridMismatch,
    #[error("tables use different coupling ranges ({0} vs {1})")]
    RangeMismatch(u32, u32),
    #[error("instance {0} has no partner")]
    Unpaired(String),
    #[error("instance {0} appears twice")]
    Duplicate(String),
    #[error("problem size {n} must lie in 1..={m}")]
    BadSize { m: usize, n: usize },
    #[error("replica count must be positive")]
    ZeroReplicas,
    #[error(transparent)]
    Tts(#[from] TtsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Statistic {
    RatioOfQuantiles,
    QuantilesOfRatio,
}

impl Statistic {
    pub fn as_str(self) -> &'static str {
        match self {
            Statistic::RatioOfQuantiles => "RofQ",
            Statistic::QuantilesOfRatio => "QofR",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Correction {
    /// `floor(M / N)` whole copies of the problem on the device.
    Floor,
    /// `M / N`.
    Smooth,
}

/// Factor applied to every speedup value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    None,
    PerSite { m: usize },
    Floor { m: usize },
}

impl Normalization {
    pub fn label(self) -> &'static str {
        match self {
            Normalization::None => "none",
            Normalization::PerSite { .. } => "per-site",
            Normalization::Floor { .. } => "floor",
        }
    }

    pub fn machine_size(self) -> Option<usize> {
        match self {
            Normalization::None => None,
            Normalization::PerSite { m } | Normalization::Floor { m } => Some(m),
        }
    }

    pub fn factor(self, n: usize) -> Result<f64, SpeedupError> {
        match self {
            Normalization::None => Ok(1.0),
            Normalization::PerSite { m } => parallel_correction(m, n, Correction::Smooth),
            Normalization::Floor { m } => parallel_correction(m, n, Correction::Floor),
        }
    }
}

pub fn parallel_correction(m: usize, n: usize, mode: Correction) -> Result<f64, SpeedupError> {
    if n == 0 || n > m {
        return Err(SpeedupError::BadSize { m, n });
    }
    Ok(match mode {
        Correction::Floor => (m / n) as f64,
        Correction::Smooth => m as f64 / n as f64,
    })
}

/// Repetitions per replica when `c` replicas of an instance run side by side.
pub fn replica_repetitions(r: u64, c: u64) -> Result<u64, SpeedupError> {
    if c == 0 {
        return Err(SpeedupError::ZeroReplicas);
    }
    Ok(r.div_ceil(c))
}

/// A speedup value. `ZeroPlus` and `Infinite` stand for pairs where only the
/// device or only the classical solver was censored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpeedupValue {
    ZeroPlus,
    Finite(f64),
    Infinite,
    Censored,
}

impl SpeedupValue {
    pub fn value(self) -> Option<f64> {
        match self {
            SpeedupValue::Finite(v) => Some(v),
            _ => None,
        }
    }

    fn rank(self) -> u8 {
        match self {
            SpeedupValue::ZeroPlus => 0,
            SpeedupValue::Finite(_) => 1,
            SpeedupValue::Infinite => 2,
            SpeedupValue::Censored => 3,
        }
    }

    pub fn total_cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (SpeedupValue::Finite(a), SpeedupValue::Finite(b)) => a.total_cmp(b),
            _ => self.rank().cmp(&other.rank()),
        }
    }

    pub fn is_sentinel(self) -> bool {
        matches!(self, SpeedupValue::ZeroPlus | SpeedupValue::Infinite)
    }
}

/// `C / Q * factor`; `None` when both are censored.
pub fn pair_ratio(c: Tts, q: Tts, factor: f64) -> Option<SpeedupValue> {
    match (c, q) {
        (Tts::Finite(a), Tts::Finite(b)) => Some(SpeedupValue::Finite(a / b * factor)),
        (Tts::Finite(_), Tts::Censored) => Some(SpeedupValue::ZeroPlus),
        (Tts::Censored, Tts::Finite(_)) => Some(SpeedupValue::Infinite),
        (Tts::Censored, Tts::Censored) => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedupPoint {
    pub n: usize,
    pub s: SpeedupValue,
    pub ci_lo: SpeedupValue,
    pub ci_hi: SpeedupValue,
    /// Instance pairs left out of this point.
    pub excluded: usize,
}

/// Finite-difference slope of `ln S` against `sqrt(N)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Slope {
    pub n_from: usize,
    pub n_to: usize,
    pub slope: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeedupCurve {
    pub classical: String,
    pub device: String,
    pub statistic: Statistic,
    pub q: f64,
    pub normalization: Normalization,
    pub points: Vec<SpeedupPoint>,
}

impl SpeedupCurve {
    /// Slopes between consecutive sizes where both values are finite.
    pub fn log_slopes(&self) -> Vec<Slope> {
        log_slopes(&self.points)
    }
}

pub fn log_slopes(points: &[SpeedupPoint]) -> Vec<Slope> {
    points
        .windows(2)
        .filter_map(|w| {
            let (a, b) = (w[0].s.value()?, w[1].s.value()?);
            let dx = (w[1].n as f64).sqrt() - (w[0].n as f64).sqrt();
            Some(Slope {
                n_from: w[0].n,
                n_to: w[1].n,
                slope: (b.ln() - a.ln()) / dx,
            })
        })
        .collect()
}

/// Ratio of quantiles, `[T_C]_q / [T_Q]_q` per size. The interval combines
/// the two bootstrap intervals, `C_lo / Q_hi` to `C_hi / Q_lo`.
pub fn speedup_ratio_of_quantiles(
    classical: &TtsTable,
    device: &TtsTable,
    q: f64,
    normalization: Normalization,
) -> Result<SpeedupCurve, SpeedupError> {
    if classical.r != device.r {
        return Err(SpeedupError::RangeMismatch(classical.r, device.r));
    }
    let sizes = |t: &TtsTable| {
        t.rows
            .iter()
            .filter(|r| r.q == q)
            .map(|r| r.n)
            .collect::<Vec<_>>()
    };
    let ns = sizes(classical);
    if ns != sizes(device) || ns.is_empty() {
        return Err(SpeedupError::GridMismatch);
    }
    let points = ns
        .iter()
        .map(|&n| {
            let c = classical.get(n, q).expect("size listed").effort;
            let d = device.get(n, q).expect("size listed").effort;
            let f = normalization.factor(n)?;
            let s = match (c.value, d.value) {
                (Tts::Finite(a), Tts::Finite(b)) => SpeedupValue::Finite(a / b * f),
                _ => SpeedupValue::Censored,
            };
            let bound = |num: Tts, den: Tts| match s {
                SpeedupValue::Censored => SpeedupValue::Censored,
                _ => pair_ratio(num, den, f).unwrap_or(SpeedupValue::Censored),
            };
            Ok(SpeedupPoint {
                n,
                s,
                ci_lo: bound(c.ci_lo, d.ci_hi),
                ci_hi: bound(c.ci_hi, d.ci_lo),
                excluded: 0,
            })
        })
        .collect::<Result<Vec<_>, SpeedupError>>()?;
    Ok(SpeedupCurve {
        classical: classical.solver.clone(),
        device: device.solver.clone(),
        statistic: Statistic::RatioOfQuantiles,
        q,
        normalization,
        points,
    })
}

/// Time to solution of one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceTts {
    pub id: String,
    pub n: usize,
    pub tts: Tts,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceRatio {
    pub id: String,
    pub n: usize,
    /// `None` when neither solver solved the instance.
    pub ratio: Option<SpeedupValue>,
}

fn index_by_id(v: &[InstanceTts]) -> Result<BTreeMap<&str, &InstanceTts>, SpeedupError> {
    let mut map = BTreeMap::new();
    for t in v {
        if map.insert(t.id.as_str(), t).is_some() {
            return Err(SpeedupError::Duplicate(t.id.clone()));
        }
    }
    Ok(map)
}

/// Per-instance ratios `T_C / T_Q * factor(N)`, paired by id, sorted by
/// `(N, id)`.
pub fn instance_ratios(
    classical: &[InstanceTts],
    device: &[InstanceTts],
    normalization: Normalization,
) -> Result<Vec<InstanceRatio>, SpeedupError> {
    let c = index_by_id(classical)?;
    let d = index_by_id(device)?;
    if let Some(id) = d.keys().find(|id| !c.contains_key(*id)) {
        return Err(SpeedupError::Unpaired(id.to_string()));
    }
    let mut out = c
        .iter()
        .map(|(id, ct)| {
            let dt = d
                .get(id)
                .ok_or_else(|| SpeedupError::Unpaired(id.to_string()))?;
            if dt.n != ct.n {
                return Err(SpeedupError::Unpaired(id.to_string()));
            }
            Ok(InstanceRatio {
                id: id.to_string(),
                n: ct.n,
                ratio: pair_ratio(ct.tts, dt.tts, normalization.factor(ct.n)?),
            })
        })
        .collect::<Result<Vec<_>, SpeedupError>>()?;
    out.sort_by(|a, b| a.n.cmp(&b.n).then_with(|| a.id.cmp(&b.id)));
    Ok(out)
}

/// What to do with pairs where exactly one solver was censored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CensoredPairs {
    /// Keep them as `0+` / `inf` sentinels.
    Sentinel,
    /// Leave them out and count them.
    Drop,
}

/// Per-instance results of one solver.
#[derive(Debug, Clone, Copy)]
pub struct Role<'a> {
    pub solver: &'a str,
    pub tts: &'a [InstanceTts],
}

/// Quantiles of per-instance ratios, with a bootstrap interval over
/// instances. Pairs censored on both sides are always left out and counted.
pub fn speedup_quantiles_of_ratio(
    classical: Role<'_>,
    device: Role<'_>,
    q: f64,
    normalization: Normalization,
    policy: CensoredPairs,
    seed: u64,
) -> Result<SpeedupCurve, SpeedupError> {
    let ratios = instance_ratios(classical.tts, device.tts, normalization)?;
    let mut by_n: BTreeMap<usize, (Vec<SpeedupValue>, usize)> = BTreeMap::new();
    for r in &ratios {
        let entry = by_n.entry(r.n).or_default();
        match r.ratio {
            Some(v) if policy == CensoredPairs::Drop && v.is_sentinel() => entry.1 += 1,
            Some(v) => entry.0.push(v),
            None => entry.1 += 1,
        }
    }
    let points = by_n
        .into_iter()
        .map(|(n, (mut values, excluded))| {
            if values.is_empty() {
                return Ok(SpeedupPoint {
                    n,
                    s: SpeedupValue::Censored,
                    ci_lo: SpeedupValue::Censored,
                    ci_hi: SpeedupValue::Censored,
                    excluded,
                });
            }
            tts::check_quantile_input(&values, q)?;
            let s = tts::nearest_rank(&mut values, q, SpeedupValue::total_cmp);
            let seed = rng::derive_seed(seed, &[n as u64]);
            let (ci_lo, ci_hi) = tts::bootstrap_bounds(
                &values,
                q,
                BOOTSTRAP_RESAMPLES,
                seed,
                SpeedupValue::total_cmp,
            );
            Ok(SpeedupPoint {
                n,
                s,
                ci_lo,
                ci_hi,
                excluded,
            })
        })
        .collect::<Result<Vec<_>, SpeedupError>>()?;
    Ok(SpeedupCurve {
        classical: classical.solver.to_string(),
        device: device.solver.to_string(),
        statistic: Statistic::QuantilesOfRatio,
        q,
        normalization,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tts::{QuantileEstimate, TtsRow};
    use proptest::prelude::*;

    fn table(solver: &str, efforts: &[(usize, f64)]) -> TtsTable {
        let rows = efforts
            .iter()
            .map(|&(n, e)| TtsRow {
                n,
                q: 50.0,
                t_a_opt: Some(1.0),
                effort: QuantileEstimate {
                    q: 50.0,
                    value: Tts::Finite(e),
                    ci_lo: Tts::Finite(e * 0.5),
                    ci_hi: if e > 1e5 {
                        Tts::Censored
                    } else {
                        Tts::Finite(e * 2.0)
                    },
                },
            })
            .collect();
        TtsTable {
            solver: solver.into(),
            r: 1,
            rows,
        }
    }

    fn sizes() -> Vec<(usize, f64)> {
        vec![(8, 10.0), (32, 40.0), (72, 300.0), (128, 2000.0)]
    }

    #[test]
    fn self_comparison_is_one() {
        let t = table("sa", &sizes());
        let c = speedup_ratio_of_quantiles(&t, &t, 50.0, Normalization::None).unwrap();
        assert!(c.points.iter().all(|p| p.s == SpeedupValue::Finite(1.0)));
        assert_eq!(c.points[0].ci_lo, SpeedupValue::Finite(0.25));
        assert_eq!(c.points[0].ci_hi, SpeedupValue::Finite(4.0));
        let per =
            speedup_ratio_of_quantiles(&t, &t, 50.0, Normalization::PerSite { m: 512 }).unwrap();
        for p in &per.points {
            assert!((p.s.value().unwrap() - 512.0 / p.n as f64).abs() < 1e-12);
        }
        assert_eq!(per.normalization.machine_size(), Some(512));
    }

    #[test]
    fn mismatched_tables_are_rejected() {
        let a = table("sa", &sizes());
        let b = table("sqa", &sizes()[..3]);
        assert_eq!(
            speedup_ratio_of_quantiles(&a, &b, 50.0, Normalization::None),
            Err(SpeedupError::GridMismatch)
        );
        let c = TtsTable { r: 3, ..a.clone() };
        assert_eq!(
            speedup_ratio_of_quantiles(&a, &c, 50.0, Normalization::None),
            Err(SpeedupError::RangeMismatch(1, 3))
        );
    }

    #[test]
    fn censored_quantile_gives_censored_point() {
        let a = table("sa", &sizes());
        let mut b = table("sqa", &sizes());
        b.rows[1].effort.value = Tts::Censored;
        let c = speedup_ratio_of_quantiles(&a, &b, 50.0, Normalization::None).unwrap();
        assert_eq!(c.points[1].s, SpeedupValue::Censored);
        // an open-ended device interval leaves only a 0+ lower bound
        let big = table("sqa", &[(8, 1e6)]);
        let small = table("sa", &[(8, 1.0)]);
        let c = speedup_ratio_of_quantiles(&small, &big, 50.0, Normalization::None).unwrap();
        assert_eq!(c.points[0].ci_lo, SpeedupValue::ZeroPlus);
    }

    fn instances(values: &[(usize, Tts)], prefix: &str) -> Vec<InstanceTts> {
        values
            .iter()
            .enumerate()
            .map(|(i, &(n, tts))| InstanceTts {
                id: format!("{prefix}{i}"),
                n,
                tts,
            })
            .collect()
    }

    #[test]
    fn constant_ratio_quantiles() {
        let c = instances(
            &[
                (8, Tts::Finite(6.0)),
                (8, Tts::Finite(9.0)),
                (32, Tts::Finite(12.0)),
            ],
            "i",
        );
        let d = instances(
            &[
                (8, Tts::Finite(2.0)),
                (8, Tts::Finite(3.0)),
                (32, Tts::Finite(4.0)),
            ],
            "i",
        );
        for q in [10.0, 50.0, 90.0] {
            let curve = speedup_quantiles_of_ratio(
                Role {
                    solver: "sa",
                    tts: &c,
                },
                Role {
                    solver: "sqa",
                    tts: &d,
                },
                q,
                Normalization::Floor { m: 64 },
                CensoredPairs::Sentinel,
                0,
            )
            .unwrap();
            assert_eq!(curve.points[0].s, SpeedupValue::Finite(3.0 * 8.0));
            assert_eq!(curve.points[1].s, SpeedupValue::Finite(3.0 * 2.0));
        }
    }

    #[test]
    fn median_of_three_ratios() {
        let c = instances(
            &[
                (8, Tts::Finite(3.0)),
                (8, Tts::Finite(1.0)),
                (8, Tts::Finite(2.0)),
            ],
            "i",
        );
        let d = instances(&[(8, Tts::Finite(1.0)); 3], "i");
        let curve = speedup_quantiles_of_ratio(
            Role {
                solver: "a",
                tts: &c,
            },
            Role {
                solver: "b",
                tts: &d,
            },
            50.0,
            Normalization::None,
            CensoredPairs::Sentinel,
            0,
        )
        .unwrap();
        assert_eq!(curve.points[0].s, SpeedupValue::Finite(2.0));
    }

    #[test]
    fn censored_pairs_policies() {
        let c = instances(
            &[
                (8, Tts::Finite(1.0)),
                (8, Tts::Finite(1.0)),
                (8, Tts::Censored),
                (8, Tts::Censored),
            ],
            "i",
        );
        let d = instances(
            &[
                (8, Tts::Finite(1.0)),
                (8, Tts::Censored),
                (8, Tts::Finite(1.0)),
                (8, Tts::Censored),
            ],
            "i",
        );
        let ratios = instance_ratios(&c, &d, Normalization::None).unwrap();
        let got: Vec<_> = ratios.iter().map(|r| r.ratio).collect();
        assert_eq!(
            got,
            vec![
                Some(SpeedupValue::Finite(1.0)),
                Some(SpeedupValue::ZeroPlus),
                Some(SpeedupValue::Infinite),
                None
            ]
        );
        let keep = speedup_quantiles_of_ratio(
            Role {
                solver: "a",
                tts: &c,
            },
            Role {
                solver: "b",
                tts: &d,
            },
            99.0,
            Normalization::None,
            CensoredPairs::Sentinel,
            0,
        )
        .unwrap();
        assert_eq!(keep.points[0].s, SpeedupValue::Infinite);
        assert_eq!(keep.points[0].excluded, 1);
        let low = speedup_quantiles_of_ratio(
            Role {
                solver: "a",
                tts: &c,
            },
            Role {
                solver: "b",
                tts: &d,
            },
            1.0,
            Normalization::None,
            CensoredPairs::Sentinel,
            0,
        )
        .unwrap();
        assert_eq!(low.points[0].s, SpeedupValue::ZeroPlus);
        let drop = speedup_quantiles_of_ratio(
            Role {
                solver: "a",
                tts: &c,
            },
            Role {
                solver: "b",
                tts: &d,
            },
            99.0,
            Normalization::None,
            CensoredPairs::Drop,
            0,
        )
        .unwrap();
        assert_eq!(drop.points[0].s, SpeedupValue::Finite(1.0));
        assert_eq!(drop.points[0].excluded, 3);
    }

    #[test]
    fn unpaired_instances_are_rejected() {
        let c = instances(&[(8, Tts::Finite(1.0)), (8, Tts::Finite(1.0))], "i");
        let d = instances(&[(8, Tts::Finite(1.0))], "i");
        assert_eq!(
            instance_ratios(&c, &d, Normalization::None),
            Err(SpeedupError::Unpaired("i1".into()))
        );
        assert_eq!(
            instance_ratios(&d, &c, Normalization::None),
            Err(SpeedupError::Unpaired("i1".into()))
        );
        let dup = vec![c[0].clone(), c[0].clone()];
        assert_eq!(
            instance_ratios(&dup, &c, Normalization::None),
            Err(SpeedupError::Duplicate("i0".into()))
        );
    }

    #[test]
    fn correction_examples() {
        assert_eq!(parallel_correction(512, 503, Correction::Floor), Ok(1.0));
        assert_eq!(parallel_correction(512, 8, Correction::Floor), Ok(64.0));
        assert_eq!(
            parallel_correction(512, 503, Correction::Smooth),
            Ok(512.0 / 503.0)
        );
        assert_eq!(
            parallel_correction(512, 513, Correction::Floor),
            Err(SpeedupError::BadSize { m: 512, n: 513 })
        );
        assert_eq!(replica_repetitions(7, 4), Ok(2));
        assert_eq!(replica_repetitions(8, 4), Ok(2));
        assert_eq!(replica_repetitions(7, 0), Err(SpeedupError::ZeroReplicas));
    }

    #[test]
    fn degenerate_distributions_agree() {
        // every instance at a size has the same time for each solver
        let mut c = Vec::new();
        let mut d = Vec::new();
        let mut ct = Vec::new();
        let mut dt = Vec::new();
        for (k, &(n, e)) in sizes().iter().enumerate() {
            for i in 0..5 {
                c.push(InstanceTts {
                    id: format!("{k}-{i}"),
                    n,
                    tts: Tts::Finite(e),
                });
                d.push(InstanceTts {
                    id: format!("{k}-{i}"),
                    n,
                    tts: Tts::Finite(e.sqrt()),
                });
            }
            ct.push((n, e));
            dt.push((n, e.sqrt()));
        }
        let rofq = speedup_ratio_of_quantiles(
            &table("c", &ct),
            &table("d", &dt),
            50.0,
            Normalization::None,
        )
        .unwrap();
        let qofr = speedup_quantiles_of_ratio(
            Role {
                solver: "c",
                tts: &c,
            },
            Role {
                solver: "d",
                tts: &d,
            },
            50.0,
            Normalization::None,
            CensoredPairs::Sentinel,
            1,
        )
        .unwrap();
        for (a, b) in rofq.points.iter().zip(&qofr.points) {
            assert_eq!(a.s, b.s);
        }
    }

    #[test]
    fn fixed_time_denominator_bounds_envelope_speedup() {
        let classical = table("sa", &sizes());
        let envelope = table("sqa", &[(8, 20.0), (32, 90.0), (72, 500.0), (128, 4000.0)]);
        // a fixed long anneal can only cost as much or more than the optimum
        let fixed = table(
            "sqa",
            &[(8, 4000.0), (32, 4000.0), (72, 4000.0), (128, 8000.0)],
        );
        let env =
            speedup_ratio_of_quantiles(&classical, &envelope, 50.0, Normalization::None).unwrap();
        let fix =
            speedup_ratio_of_quantiles(&classical, &fixed, 50.0, Normalization::None).unwrap();
        for (e, f) in env.points.iter().zip(&fix.points) {
            assert!(f.s.value().unwrap() <= e.s.value().unwrap());
        }
        assert!(fix.log_slopes()[0].slope > env.log_slopes()[0].slope);
    }

    proptest! {
        #[test]
        fn slope_signs_survive_constant_normalization(
            values in prop::collection::vec(0.01f64..1e4, 2..8),
            k in 0.001f64..1e3,
        ) {
            let points: Vec<SpeedupPoint> = values
                .iter()
                .enumerate()
                .map(|(i, &v)| SpeedupPoint {
                    n: 8 * (i + 1) * (i + 1),
                    s: SpeedupValue::Finite(v),
                    ci_lo: SpeedupValue::Finite(v),
                    ci_hi: SpeedupValue::Finite(v),
                    excluded: 0,
                })
                .collect();
            let scaled: Vec<SpeedupPoint> = points
                .iter()
                .map(|p| SpeedupPoint { s: SpeedupValue::Finite(p.s.value().unwrap() * k), ..*p })
                .collect();
            for (a, b) in log_slopes(&points).iter().zip(log_slopes(&scaled)) {
                prop_assert!((a.slope - b.slope).abs() < 1e-6 * (1.0 + a.slope.abs()));
                if a.slope.abs() > 1e-6 {
                    prop_assert_eq!(a.slope > 0.0, b.slope > 0.0);
                }
            }
        }
    }
}
