//! Instance generation, exact solving and annealing sweeps.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use anneal_bench::exact::{self, ExactError, GroundTruth, Method};
use anneal_bench::instances::{generate_instance, random_gauge, Energy, Gauge, ProblemInstance};
use anneal_bench::rng::{derive_seed, label};
use anneal_bench::sa::{sa_run, Kernel, RunBatch};
use anneal_bench::sqa::sqa_run;
use anneal_bench::topology::ChimeraGraph;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::config::{BenchmarkConfig, SaConfig, SqaConfig};
use crate::error::{CliError, Outcome};
use crate::store::{self, GroundTruthRecord, ManifestRecord, RunRecord};

/// Largest instance solved by exhaustive search (which also counts ground
/// states) rather than the sweep.
pub const BRUTEFORCE_SPINS: usize = 16;

/// Tasks computed between two appends to the run log.
const CHUNK: usize = 32;

pub fn instance_id(cells: usize, l: usize, lp: usize, r: u32, idx: usize) -> String {
    format!("c{cells}-L{l}x{lp}-r{r}-{idx:04}")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Writes every instance file and the manifest.
pub fn generate(cfg: &BenchmarkConfig) -> Result<Vec<ManifestRecord>, CliError> {
    let dir = cfg.instance_dir();
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let mut manifest = Vec::new();
    for &[l, lp] in &cfg.sizes {
        let graph =
            ChimeraGraph::new(l, lp, cfg.cells).map_err(|e| CliError::invalid(e.to_string()))?;
        for &r in &cfg.ranges {
            for idx in 0..cfg.instances {
                let id = instance_id(cfg.cells, l, lp, r, idx);
                let seed = derive_seed(
                    cfg.seed,
                    &[
                        label("instance"),
                        l as u64,
                        lp as u64,
                        cfg.cells as u64,
                        r as u64,
                        idx as u64,
                    ],
                );
                let inst = generate_instance(&graph, r, seed)
                    .map_err(|e| CliError::invalid(e.to_string()))?;
                let text = inst.to_string();
                let rel = format!("instances/{id}.txt");
                let path = cfg.output_dir.join(&rel);
                fs::write(&path, &text).map_err(|e| CliError::io(&path, e))?;
                manifest.push(ManifestRecord {
                    instance_id: id,
                    path: rel,
                    n: inst.num_spins(),
                    r,
                    seed,
                    sha256: sha256_hex(text.as_bytes()),
                });
            }
        }
    }
    store::write(&cfg.manifest_path(), &manifest)?;
    Ok(manifest)
}

/// Reads an instance listed in the manifest, checking its hash.
pub fn load_instance(root: &Path, rec: &ManifestRecord) -> Result<ProblemInstance, CliError> {
    let path = root.join(&rec.path);
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    if sha256_hex(text.as_bytes()) != rec.sha256 {
        return Err(CliError::data(
            &path,
            "contents do not match the manifest hash",
        ));
    }
    text.parse().map_err(|e| CliError::data(&path, e))
}

pub fn read_instance_file(path: &Path) -> Result<ProblemInstance, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    text.parse().map_err(|e| CliError::data(path, e))
}

pub fn solve(inst: &ProblemInstance, max_state_bits: usize) -> Result<GroundTruth, ExactError> {
    if inst.num_spins() <= BRUTEFORCE_SPINS {
        exact::ground_energy_bruteforce(inst, true)
    } else {
        exact::ground_energy_dp_with_budget(inst, max_state_bits)
    }
}

pub fn truth_record(id: &str, inst: &ProblemInstance, gt: &GroundTruth) -> GroundTruthRecord {
    GroundTruthRecord {
        instance_id: id.to_string(),
        n: inst.num_spins(),
        r: inst.range(),
        energy_numerator: gt.energy.numerator,
        energy_denominator: gt.energy.denominator,
        method: gt.method.as_str().to_string(),
        degeneracy: gt.degeneracy,
    }
}

pub fn record_truth(rec: &GroundTruthRecord) -> Result<GroundTruth, CliError> {
    let method = match rec.method.as_str() {
        "bruteforce" => Method::BruteForce,
        "dp" => Method::Dp,
        other => return Err(CliError::invalid(format!("unknown exact method {other:?}"))),
    };
    if rec.energy_denominator == 0 {
        return Err(CliError::invalid(format!(
            "{}: zero energy denominator",
            rec.instance_id
        )));
    }
    Ok(GroundTruth {
        energy: Energy::new(rec.energy_numerator, rec.energy_denominator),
        degeneracy: rec.degeneracy,
        method,
    })
}

fn manifest(cfg: &BenchmarkConfig) -> Result<Vec<ManifestRecord>, CliError> {
    store::read(&cfg.manifest_path())
}

fn known_truths(path: &Path) -> Result<BTreeMap<String, GroundTruth>, CliError> {
    store::read_or_empty::<GroundTruthRecord>(path)?
        .iter()
        .map(|r| Ok((r.instance_id.clone(), record_truth(r)?)))
        .collect()
}

/// Appends ground truth for every manifest instance that lacks it. Instances
/// beyond the exact budget are skipped and counted.
pub fn solve_exact(cfg: &BenchmarkConfig) -> Result<Outcome, CliError> {
    let gt_path = cfg.ground_truth_path();
    let known = known_truths(&gt_path)?;
    let todo: Vec<ManifestRecord> = manifest(cfg)?
        .into_iter()
        .filter(|m| !known.contains_key(&m.instance_id))
        .collect();
    let solved = todo
        .par_iter()
        .map(|m| {
            let inst = load_instance(&cfg.output_dir, m)?;
            Ok(solve(&inst, cfg.exact.max_state_bits)
                .ok()
                .map(|gt| truth_record(&m.instance_id, &inst, &gt)))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let skipped = solved.iter().filter(|s| s.is_none()).count();
    let rows: Vec<GroundTruthRecord> = solved.into_iter().flatten().collect();
    store::append(&gt_path, &rows)?;
    if skipped > 0 {
        eprintln!("solve-exact: {skipped} instance(s) exceed the exact budget");
    }
    Ok(Outcome::from_skipped(skipped))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Solver {
    Sa(SaConfig),
    Sqa(SqaConfig),
}

impl Solver {
    pub fn name(&self) -> &'static str {
        match self {
            Solver::Sa(_) => "sa",
            Solver::Sqa(_) => "sqa",
        }
    }

    pub fn grid(&self) -> &[u32] {
        match self {
            Solver::Sa(c) => &c.t_a,
            Solver::Sqa(c) => &c.t_a,
        }
    }

    pub fn params(&self, range: u32) -> String {
        match self {
            Solver::Sa(c) => c.params(range),
            Solver::Sqa(c) => c.params(),
        }
    }

    fn anneal(
        &self,
        inst: &ProblemInstance,
        t_a: u32,
        runs: usize,
        seed: u64,
    ) -> Result<RunBatch, CliError> {
        match self {
            Solver::Sa(c) => sa_run(
                inst,
                &c.schedule(inst.range(), t_a),
                runs,
                seed,
                Kernel::from(c.kernel),
            )
            .map_err(|e| CliError::invalid(format!("sa: {e}"))),
            Solver::Sqa(c) => sqa_run(inst, &c.schedule(t_a), runs, seed)
                .map_err(|e| CliError::invalid(format!("sqa: {e}"))),
        }
    }
}

pub fn solvers(cfg: &BenchmarkConfig) -> Vec<Solver> {
    let mut out = Vec::new();
    if let Some(sa) = &cfg.sa {
        out.push(Solver::Sa(sa.clone()));
    }
    if let Some(sqa) = &cfg.sqa {
        out.push(Solver::Sqa(sqa.clone()));
    }
    out
}

/// Gauge 0 is the identity; later gauges are random.
pub fn gauge_for(seed: u64, id: &str, graph: &ChimeraGraph, g: usize) -> Gauge {
    if g == 0 {
        Gauge::identity(graph)
    } else {
        random_gauge(
            graph,
            derive_seed(seed, &[label("gauge"), label(id), g as u64]),
        )
    }
}

pub fn run_seed(seed: u64, id: &str, solver: &str, t_a: u32, g: usize) -> u64 {
    derive_seed(
        seed,
        &[label("run"), label(id), label(solver), t_a as u64, g as u64],
    )
}

/// One gauge block of runs for one instance.
#[derive(Debug, Clone)]
pub struct Task<'a> {
    pub id: &'a str,
    pub inst: &'a ProblemInstance,
    pub truth: &'a GroundTruth,
    pub solver: &'a Solver,
    pub t_a: u32,
    pub gauge: usize,
}

impl Task<'_> {
    pub fn key(&self) -> (String, String, u32, usize) {
        (
            self.id.to_string(),
            self.solver.name().to_string(),
            self.t_a,
            self.gauge,
        )
    }

    pub fn run(&self, seed: u64, runs: usize) -> Result<RunRecord, CliError> {
        let gauge = gauge_for(seed, self.id, self.inst.graph(), self.gauge);
        let gauged = self
            .inst
            .apply_gauge(&gauge)
            .map_err(|e| CliError::Failed(e.to_string()))?;
        let rs = run_seed(seed, self.id, self.solver.name(), self.t_a, self.gauge);
        let batch = self.solver.anneal(&gauged, self.t_a, runs, rs)?;
        let n_runs = batch.n_runs() as u64;
        Ok(RunRecord {
            instance_id: self.id.to_string(),
            n: self.inst.num_spins(),
            r: self.inst.range(),
            solver: self.solver.name().to_string(),
            params: self.solver.params(self.inst.range()),
            t_a: self.t_a,
            gauge: self.gauge,
            n_runs,
            hits: batch.hits(self.truth) as u64,
            mcs: self.t_a as u64,
            spin_updates: batch.spin_updates / n_runs,
            seed: rs,
        })
    }
}

/// Runs tasks in order on `workers` threads, appending to `log` every
/// [`CHUNK`] tasks. Tasks already keyed in the log are skipped; at most
/// `limit` new tasks are run. Returns the number of tasks left undone.
pub fn execute(
    tasks: &[Task<'_>],
    log: &Path,
    seed: u64,
    runs: usize,
    workers: Option<usize>,
    limit: Option<usize>,
) -> Result<usize, CliError> {
    let done: BTreeSet<_> = store::read_or_empty::<RunRecord>(log)?
        .iter()
        .map(RunRecord::key)
        .collect();
    let pending: Vec<&Task> = tasks.iter().filter(|t| !done.contains(&t.key())).collect();
    let take = limit.unwrap_or(usize::MAX).min(pending.len());
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        builder = builder.num_threads(w.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Failed(e.to_string()))?;
    pool.install(|| {
        for chunk in pending[..take].chunks(CHUNK) {
            let rows = chunk
                .par_iter()
                .map(|t| t.run(seed, runs))
                .collect::<Result<Vec<_>, CliError>>()?;
            store::append(log, &rows)?;
        }
        Ok::<(), CliError>(())
    })?;
    Ok(pending.len() - take)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SweepOptions {
    pub workers: Option<usize>,
    /// Stop after this many new tasks.
    pub limit: Option<usize>,
}

/// Every (instance, solver, t_a, gauge) block of the configuration.
pub fn sweep(cfg: &BenchmarkConfig, opts: SweepOptions) -> Result<Outcome, CliError> {
    let manifest = manifest(cfg)?;
    let mut truths = known_truths(&cfg.ground_truth_path())?;
    let mut instances = Vec::with_capacity(manifest.len());
    let mut skipped = 0;
    for m in &manifest {
        let inst = load_instance(&cfg.output_dir, m)?;
        if !truths.contains_key(&m.instance_id) {
            match solve(&inst, cfg.exact.max_state_bits) {
                Ok(gt) => {
                    truths.insert(m.instance_id.clone(), gt);
                }
                Err(_) => {
                    skipped += 1;
                    continue;
                }
            }
        }
        instances.push((m.instance_id.as_str(), inst));
    }
    if skipped > 0 {
        eprintln!("sweep: skipped {skipped} instance(s) without ground truth");
    }
    let solvers = solvers(cfg);
    let mut tasks = Vec::new();
    for (id, inst) in &instances {
        for solver in &solvers {
            for &t_a in solver.grid() {
                for gauge in 0..cfg.gauges {
                    tasks.push(Task {
                        id,
                        inst,
                        truth: &truths[*id],
                        solver,
                        t_a,
                        gauge,
                    });
                }
            }
        }
    }
    let left = execute(
        &tasks,
        &cfg.runs_path(),
        cfg.seed,
        cfg.runs_per_gauge,
        opts.workers,
        opts.limit,
    )?;
    if left > 0 {
        eprintln!("sweep: {left} task(s) remain; rerun to resume");
    }
    Ok(Outcome::from_skipped(skipped + left))
}

/// Inputs of the single-instance `anneal` command.
#[derive(Debug, Clone)]
pub struct AnnealJob {
    pub instance: PathBuf,
    pub solver: Solver,
    pub runs: usize,
    pub gauges: usize,
    pub seed: u64,
    pub ground_truth: Option<PathBuf>,
    pub max_state_bits: usize,
    pub log: PathBuf,
}

pub fn anneal(job: &AnnealJob) -> Result<Outcome, CliError> {
    let inst = read_instance_file(&job.instance)?;
    let id = job
        .instance
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| CliError::invalid("instance path has no file name"))?
        .to_string();
    let truth = match &job.ground_truth {
        Some(path) => known_truths(path)?.remove(&id).ok_or_else(|| {
            CliError::invalid(format!("{}: no ground truth for {id}", path.display()))
        })?,
        None => solve(&inst, job.max_state_bits)
            .map_err(|e| CliError::invalid(format!("{id}: {e}; pass --ground-truth")))?,
    };
    let mut tasks = Vec::new();
    for &t_a in job.solver.grid() {
        for gauge in 0..job.gauges {
            tasks.push(Task {
                id: &id,
                inst: &inst,
                truth: &truth,
                solver: &job.solver,
                t_a,
                gauge,
            });
        }
    }
    execute(&tasks, &job.log, job.seed, job.runs, None, None)?;
    Ok(Outcome::Complete)
}
