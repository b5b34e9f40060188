//! Turns the run log into TTS and speedup tables.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use anneal_bench::rng::{derive_seed, label};
use anneal_bench::speedup::{
    self, CensoredPairs, InstanceTts, Normalization, Role, SpeedupCurve, SpeedupValue, Statistic,
};
use anneal_bench::tts::{
    effort_curve, optimal_envelope, EffortCurve, GridPosition, SuccessStats, Tts, TtsError, TtsRow,
    TtsTable,
};

use crate::config::{AnalysisConfig, EffortUnit};
use crate::error::CliError;
use crate::store::{
    self, CurveRecord, InstanceTtsRecord, RatioRecord, RunRecord, SlopeRecord, SpeedupRecord,
    TtsRecord,
};

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisOptions {
    pub p_target: f64,
    pub r_max: u64,
    pub quantiles: Vec<f64>,
    pub unit: EffortUnit,
    pub updates_per_second: f64,
    pub seed: u64,
}

impl From<&AnalysisConfig> for AnalysisOptions {
    fn from(c: &AnalysisConfig) -> Self {
        AnalysisOptions {
            p_target: c.p_target,
            r_max: c.r_max,
            quantiles: c.quantiles.clone(),
            unit: c.effort,
            updates_per_second: c.updates_per_second,
            seed: c.seed,
        }
    }
}

fn tts_err(e: TtsError) -> CliError {
    CliError::Failed(e.to_string())
}

/// All gauge blocks of one instance at one annealing time.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceRuns {
    pub id: String,
    pub n: usize,
    /// `(hits, runs)` in gauge order.
    pub gauges: Vec<(u64, u64)>,
    pub mcs: u64,
    pub spin_updates: u64,
}

impl InstanceRuns {
    fn effort_per_run(&self, opts: &AnalysisOptions) -> f64 {
        match opts.unit {
            EffortUnit::Mcs => self.mcs as f64,
            EffortUnit::SpinUpdates => self.spin_updates as f64,
            EffortUnit::Seconds => self.spin_updates as f64 / opts.updates_per_second,
        }
    }

    pub fn stats(&self, solver: &str, opts: &AnalysisOptions) -> SuccessStats {
        SuccessStats {
            instance_id: self.id.clone(),
            solver: solver.to_string(),
            t_a: self.effort_per_run(opts),
            gauges: self.gauges.clone(),
            r_max: opts.r_max,
        }
    }

    pub fn tts(&self, solver: &str, opts: &AnalysisOptions) -> Result<Tts, CliError> {
        self.stats(solver, opts).tts(opts.p_target).map_err(tts_err)
    }
}

/// Runs of one solver at one coupling range.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolverRuns {
    pub params: String,
    /// `N -> t_a -> blocks` sorted by instance id.
    pub by_size: BTreeMap<usize, BTreeMap<u32, Vec<InstanceRuns>>>,
}

/// The run log grouped by `(solver, r)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunLog {
    pub groups: BTreeMap<(String, u32), SolverRuns>,
}

impl RunLog {
    pub fn from_records(records: &[RunRecord]) -> Result<Self, CliError> {
        let mut blocks: BTreeMap<(String, u32, usize, u32, String), Vec<&RunRecord>> =
            BTreeMap::new();
        let mut params: BTreeMap<(String, u32), &str> = BTreeMap::new();
        for rec in records {
            let key = (rec.solver.clone(), rec.r);
            match params.get(&key) {
                Some(p) if *p != rec.params => {
                    return Err(CliError::invalid(format!(
                        "solver {} at r={} was run with two parameter sets: {p:?} and {:?}",
                        rec.solver, rec.r, rec.params
                    )))
                }
                Some(_) => {}
                None => {
                    params.insert(key, &rec.params);
                }
            }
            blocks
                .entry((
                    rec.solver.clone(),
                    rec.r,
                    rec.n,
                    rec.t_a,
                    rec.instance_id.clone(),
                ))
                .or_default()
                .push(rec);
        }
        let mut log = RunLog::default();
        for ((solver, r, n, t_a, id), mut recs) in blocks {
            recs.sort_by_key(|rec| rec.gauge);
            if recs.windows(2).any(|w| w[0].gauge == w[1].gauge) {
                return Err(CliError::invalid(format!(
                    "{id}: duplicate gauge block for {solver} at t_a={t_a}"
                )));
            }
            if recs
                .iter()
                .any(|rec| rec.n_runs == 0 || rec.hits > rec.n_runs)
            {
                return Err(CliError::invalid(format!(
                    "{id}: inconsistent hit counts for {solver} at t_a={t_a}"
                )));
            }
            let group = log.groups.entry((solver.clone(), r)).or_default();
            group.params = params[&(solver, r)].to_string();
            group
                .by_size
                .entry(n)
                .or_default()
                .entry(t_a)
                .or_default()
                .push(InstanceRuns {
                    id,
                    n,
                    gauges: recs.iter().map(|rec| (rec.hits, rec.n_runs)).collect(),
                    mcs: recs[0].mcs,
                    spin_updates: recs[0].spin_updates,
                });
        }
        Ok(log)
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        Self::from_records(&store::read(path)?)
    }

    pub fn group(&self, solver: &str, r: u32) -> Result<&SolverRuns, CliError> {
        self.groups
            .get(&(solver.to_string(), r))
            .ok_or_else(|| CliError::invalid(format!("no runs for solver {solver} at r={r}")))
    }

    pub fn ranges(&self, solver: &str) -> Vec<u32> {
        self.groups
            .keys()
            .filter(|(s, _)| s == solver)
            .map(|(_, r)| *r)
            .collect()
    }
}

fn curve_seed(opts: &AnalysisOptions, solver: &str, r: u32, n: usize, q: f64) -> u64 {
    derive_seed(opts.seed, &[label(solver), r as u64, n as u64, q.to_bits()])
}

impl SolverRuns {
    /// Per-instance efforts at every grid point for size `n`.
    pub fn grid(
        &self,
        solver: &str,
        n: usize,
        opts: &AnalysisOptions,
    ) -> Result<Vec<(f64, Vec<Tts>)>, CliError> {
        self.by_size[&n]
            .iter()
            .map(|(&t_a, blocks)| {
                let v = blocks
                    .iter()
                    .map(|o| o.tts(solver, opts))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok((t_a as f64, v))
            })
            .collect()
    }

    pub fn curve(
        &self,
        solver: &str,
        r: u32,
        n: usize,
        q: f64,
        opts: &AnalysisOptions,
    ) -> Result<EffortCurve, CliError> {
        effort_curve(
            n,
            &self.grid(solver, n, opts)?,
            q,
            curve_seed(opts, solver, r, n, q),
        )
        .map_err(tts_err)
    }

    pub fn instance_tts(
        &self,
        solver: &str,
        n: usize,
        t_a: u32,
        opts: &AnalysisOptions,
    ) -> Result<Vec<InstanceTts>, CliError> {
        let blocks = self.by_size[&n].get(&t_a).ok_or_else(|| {
            CliError::invalid(format!("{solver} has no runs at t_a={t_a} for N={n}"))
        })?;
        blocks
            .iter()
            .map(|o| {
                Ok(InstanceTts {
                    id: o.id.clone(),
                    n,
                    tts: o.tts(solver, opts)?,
                })
            })
            .collect()
    }
}

fn position_label(p: GridPosition) -> &'static str {
    match p {
        GridPosition::Interior => "interior",
        GridPosition::Shortest => "shortest",
        GridPosition::Longest => "longest",
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TtsOutput {
    pub instances: Vec<InstanceTtsRecord>,
    pub curves: Vec<CurveRecord>,
    pub envelopes: Vec<TtsRecord>,
}

pub fn tts_tables(log: &RunLog, opts: &AnalysisOptions) -> Result<TtsOutput, CliError> {
    let unit = opts.unit.as_str().to_string();
    let mut out = TtsOutput::default();
    for ((solver, r), runs) in &log.groups {
        for (&n, by_t) in &runs.by_size {
            for (&t_a, blocks) in by_t {
                for o in blocks {
                    let stats = o.stats(solver, opts);
                    let tts = stats.tts(opts.p_target).map_err(tts_err)?;
                    out.instances.push(InstanceTtsRecord {
                        solver: solver.clone(),
                        r: *r,
                        n,
                        instance_id: o.id.clone(),
                        t_a,
                        gauges: o.gauges.len(),
                        hits: o.gauges.iter().map(|g| g.0).sum(),
                        runs: o.gauges.iter().map(|g| g.1).sum(),
                        success: stats.mean_success().map_err(tts_err)?,
                        tts: tts.value(),
                        censored: tts.is_censored(),
                        unit: unit.clone(),
                    });
                }
            }
            for &q in &opts.quantiles {
                let curve = runs.curve(solver, *r, n, q, opts)?;
                for p in &curve.points {
                    out.curves.push(CurveRecord {
                        solver: solver.clone(),
                        r: *r,
                        n,
                        q,
                        t_a: p.t_a as u32,
                        effort: p.effort.value.value(),
                        ci_lo: p.effort.ci_lo.value(),
                        ci_hi: p.effort.ci_hi.value(),
                        censored: p.effort.value.is_censored(),
                        unit: unit.clone(),
                    });
                }
                let row = match optimal_envelope(&curve) {
                    Ok(env) => TtsRecord {
                        solver: solver.clone(),
                        r: *r,
                        n,
                        q,
                        t_a_opt: Some(env.t_a_opt as u32),
                        position: position_label(env.position).to_string(),
                        effort: env.effort.value.value(),
                        ci_lo: env.effort.ci_lo.value(),
                        ci_hi: env.effort.ci_hi.value(),
                        censored: false,
                        unit: unit.clone(),
                    },
                    Err(TtsError::AllCensored) => TtsRecord {
                        solver: solver.clone(),
                        r: *r,
                        n,
                        q,
                        t_a_opt: None,
                        position: "censored".to_string(),
                        effort: None,
                        ci_lo: None,
                        ci_hi: None,
                        censored: true,
                        unit: unit.clone(),
                    },
                    Err(e) => return Err(tts_err(e)),
                };
                out.envelopes.push(row);
            }
        }
    }
    Ok(out)
}

pub fn write_tts(out: &TtsOutput, dir: &Path) -> Result<(), CliError> {
    store::write(&dir.join("instance_tts.csv"), &out.instances)?;
    store::write(&dir.join("curves.csv"), &out.curves)?;
    store::write(&dir.join("tts.csv"), &out.envelopes)
}

/// Which annealing time a role uses at each size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaChoice {
    /// The minimum of the quantile curve at each size.
    Optimal,
    Fixed(u32),
}

impl fmt::Display for TaChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TaChoice::Optimal => write!(f, "opt"),
            TaChoice::Fixed(t) => write!(f, "{t}"),
        }
    }
}

impl FromStr for TaChoice {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        if s == "opt" {
            return Ok(TaChoice::Optimal);
        }
        match s.parse::<u32>() {
            Ok(t) if t > 0 => Ok(TaChoice::Fixed(t)),
            _ => Err(CliError::invalid(format!(
                "annealing time must be `opt` or a positive integer, got {s:?}"
            ))),
        }
    }
}

pub fn parse_normalization(s: &str) -> Result<Normalization, CliError> {
    let bad = || {
        CliError::invalid(format!(
            "normalization must be none, per-site:M or floor:M, got {s:?}"
        ))
    };
    if s == "none" {
        return Ok(Normalization::None);
    }
    let (kind, m) = s.split_once(':').ok_or_else(bad)?;
    let m: usize = m.parse().ok().filter(|&m| m > 0).ok_or_else(bad)?;
    match kind {
        "per-site" => Ok(Normalization::PerSite { m }),
        "floor" => Ok(Normalization::Floor { m }),
        _ => Err(bad()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeedupOptions {
    pub classical: String,
    pub device: String,
    pub classical_t_a: TaChoice,
    pub device_t_a: TaChoice,
    pub statistics: Vec<Statistic>,
    pub normalization: Normalization,
    pub policy: CensoredPairs,
}

impl SpeedupOptions {
    pub fn new(classical: &str, device: &str) -> Self {
        SpeedupOptions {
            classical: classical.to_string(),
            device: device.to_string(),
            classical_t_a: TaChoice::Optimal,
            device_t_a: TaChoice::Optimal,
            statistics: vec![Statistic::RatioOfQuantiles, Statistic::QuantilesOfRatio],
            normalization: Normalization::None,
            policy: CensoredPairs::Sentinel,
        }
    }
}

/// Quantile table of one role, at its optimal or fixed annealing time.
pub fn role_table(
    runs: &SolverRuns,
    solver: &str,
    r: u32,
    choice: TaChoice,
    q: f64,
    opts: &AnalysisOptions,
) -> Result<TtsTable, CliError> {
    let mut table = TtsTable::new(solver, r);
    for &n in runs.by_size.keys() {
        let curve = runs.curve(solver, r, n, q, opts)?;
        match choice {
            TaChoice::Optimal => table.push_curve(&curve, q).map_err(tts_err)?,
            TaChoice::Fixed(t) => {
                let point = curve
                    .points
                    .iter()
                    .find(|p| p.t_a == t as f64)
                    .ok_or_else(|| {
                        CliError::invalid(format!("{solver} has no runs at t_a={t} for N={n}"))
                    })?;
                table.rows.push(TtsRow {
                    n,
                    q,
                    t_a_opt: Some(t as f64),
                    effort: point.effort,
                });
            }
        }
    }
    Ok(table)
}

/// Per-instance efforts of one role; an optimal choice takes the curve
/// minimum at each size (the longest time when every point is censored).
pub fn role_instances(
    runs: &SolverRuns,
    solver: &str,
    r: u32,
    choice: TaChoice,
    q: f64,
    opts: &AnalysisOptions,
) -> Result<Vec<InstanceTts>, CliError> {
    let mut out = Vec::new();
    for (&n, by_t) in &runs.by_size {
        let t_a = match choice {
            TaChoice::Fixed(t) => t,
            TaChoice::Optimal => match optimal_envelope(&runs.curve(solver, r, n, q, opts)?) {
                Ok(env) => env.t_a_opt as u32,
                Err(TtsError::AllCensored) => *by_t.keys().last().expect("grid is never empty"),
                Err(e) => return Err(tts_err(e)),
            },
        };
        out.extend(runs.instance_tts(solver, n, t_a, opts)?);
    }
    Ok(out)
}

pub fn value_label(v: SpeedupValue) -> String {
    match v {
        SpeedupValue::ZeroPlus => "0+".to_string(),
        SpeedupValue::Finite(x) => format!("{x}"),
        SpeedupValue::Infinite => "inf".to_string(),
        SpeedupValue::Censored => String::new(),
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpeedupOutput {
    pub curves: Vec<(u32, SpeedupCurve)>,
    pub rows: Vec<SpeedupRecord>,
    pub slopes: Vec<SlopeRecord>,
    pub ratios: Vec<RatioRecord>,
}

fn curve_rows(r: u32, c: &SpeedupCurve, sopts: &SpeedupOptions) -> Vec<SpeedupRecord> {
    c.points
        .iter()
        .map(|p| SpeedupRecord {
            statistic: c.statistic.as_str().to_string(),
            q: c.q,
            r,
            n: p.n,
            s: value_label(p.s),
            ci_lo: value_label(p.ci_lo),
            ci_hi: value_label(p.ci_hi),
            censored: p.s == SpeedupValue::Censored,
            normalization: c.normalization.label().to_string(),
            m: c.normalization.machine_size(),
            classical: c.classical.clone(),
            classical_t_a: sopts.classical_t_a.to_string(),
            device: c.device.clone(),
            device_t_a: sopts.device_t_a.to_string(),
            excluded: p.excluded,
        })
        .collect()
}

pub fn speedup_tables(
    log: &RunLog,
    opts: &AnalysisOptions,
    sopts: &SpeedupOptions,
) -> Result<SpeedupOutput, CliError> {
    let device_ranges = log.ranges(&sopts.device);
    let ranges: Vec<u32> = log
        .ranges(&sopts.classical)
        .into_iter()
        .filter(|r| device_ranges.contains(r))
        .collect();
    if ranges.is_empty() {
        return Err(CliError::invalid(format!(
            "no coupling range has runs for both {} and {}",
            sopts.classical, sopts.device
        )));
    }
    let sp = |e: speedup::SpeedupError| CliError::Failed(e.to_string());
    let mut out = SpeedupOutput::default();
    for r in ranges {
        let c_runs = log.group(&sopts.classical, r)?;
        let d_runs = log.group(&sopts.device, r)?;
        for &stat in &sopts.statistics {
            for &q in &opts.quantiles {
                let curve = match stat {
                    Statistic::RatioOfQuantiles => {
                        let ct =
                            role_table(c_runs, &sopts.classical, r, sopts.classical_t_a, q, opts)?;
                        let dt = role_table(d_runs, &sopts.device, r, sopts.device_t_a, q, opts)?;
                        speedup::speedup_ratio_of_quantiles(&ct, &dt, q, sopts.normalization)
                            .map_err(sp)?
                    }
                    Statistic::QuantilesOfRatio => {
                        let ci = role_instances(
                            c_runs,
                            &sopts.classical,
                            r,
                            sopts.classical_t_a,
                            q,
                            opts,
                        )?;
                        let di =
                            role_instances(d_runs, &sopts.device, r, sopts.device_t_a, q, opts)?;
                        let ratios =
                            speedup::instance_ratios(&ci, &di, sopts.normalization).map_err(sp)?;
                        let by_id = |v: &[InstanceTts]| {
                            v.iter()
                                .map(|t| (t.id.clone(), t.tts))
                                .collect::<BTreeMap<_, _>>()
                        };
                        let (cm, dm) = (by_id(&ci), by_id(&di));
                        out.ratios.extend(ratios.iter().map(|x| RatioRecord {
                            q,
                            r,
                            n: x.n,
                            instance_id: x.id.clone(),
                            classical: sopts.classical.clone(),
                            device: sopts.device.clone(),
                            classical_tts: cm[&x.id].value(),
                            device_tts: dm[&x.id].value(),
                            ratio: x.ratio.map(value_label).unwrap_or_default(),
                        }));
                        speedup::speedup_quantiles_of_ratio(
                            Role {
                                solver: &sopts.classical,
                                tts: &ci,
                            },
                            Role {
                                solver: &sopts.device,
                                tts: &di,
                            },
                            q,
                            sopts.normalization,
                            sopts.policy,
                            derive_seed(opts.seed, &[label(stat.as_str()), r as u64, q.to_bits()]),
                        )
                        .map_err(sp)?
                    }
                };
                out.rows.extend(curve_rows(r, &curve, sopts));
                out.slopes
                    .extend(curve.log_slopes().iter().map(|s| SlopeRecord {
                        statistic: stat.as_str().to_string(),
                        q,
                        r,
                        classical_t_a: sopts.classical_t_a.to_string(),
                        device_t_a: sopts.device_t_a.to_string(),
                        n_from: s.n_from,
                        n_to: s.n_to,
                        slope: s.slope,
                    }));
                out.curves.push((r, curve));
            }
        }
    }
    Ok(out)
}

pub fn write_speedup(out: &SpeedupOutput, dir: &Path) -> Result<(), CliError> {
    store::write(&dir.join("speedup.csv"), &out.rows)?;
    store::write(&dir.join("speedup_slopes.csv"), &out.slopes)?;
    store::write(&dir.join("ratios.csv"), &out.ratios)
}
