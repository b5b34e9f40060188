use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use anneal_bench_cli::analysis::{self, AnalysisOptions, RunLog, SpeedupOptions};
use anneal_bench_cli::pipeline::{self, SweepOptions};
use anneal_bench_cli::store::{self, GroundTruthRecord, RunRecord};
use anneal_bench_cli::{BenchmarkConfig, Outcome};

const BIN: &str = env!("CARGO_BIN_EXE_anneal-bench");

fn config(dir: &Path) -> BenchmarkConfig {
    let text = format!(
        r#"
output_dir = "{}"
seed = 5
sizes = [[1, 1], [1, 2]]
instances = 4
gauges = 2
runs_per_gauge = 64
[sa]
t_a = [1, 4, 16]
[sqa]
t_a = [4, 16]
slices = 8
[analysis]
quantiles = [50, 90]
"#,
        dir.join("out").display()
    );
    let cfg: BenchmarkConfig = toml::from_str(&text).unwrap();
    cfg.validate().unwrap();
    cfg
}

fn write_config(dir: &Path, cfg: &BenchmarkConfig) -> PathBuf {
    let path = dir.join("bench.toml");
    fs::write(&path, toml::to_string(cfg).unwrap()).unwrap();
    path
}

fn prepared() -> (tempfile::TempDir, BenchmarkConfig) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    pipeline::generate(&cfg).unwrap();
    assert_eq!(pipeline::solve_exact(&cfg).unwrap(), Outcome::Complete);
    (dir, cfg)
}

fn bytes(p: &Path) -> Vec<u8> {
    fs::read(p).unwrap()
}

#[test]
fn generate_is_deterministic_and_creates_directories() {
    let (_dir, cfg) = prepared();
    let first = bytes(&cfg.manifest_path());
    let m = pipeline::generate(&cfg).unwrap();
    assert_eq!(m.len(), 2 * 4);
    assert_eq!(bytes(&cfg.manifest_path()), first);
    for rec in &m {
        let inst = pipeline::load_instance(&cfg.output_dir, rec).unwrap();
        assert_eq!(inst.num_spins(), rec.n);
        assert_eq!(inst.seed(), rec.seed);
    }
    let truths: Vec<GroundTruthRecord> = store::read(&cfg.ground_truth_path()).unwrap();
    assert_eq!(truths.len(), m.len());
    assert!(truths
        .iter()
        .all(|t| t.method == "bruteforce" && t.degeneracy.unwrap() >= 2));
}

#[test]
fn interrupted_sweep_resumes_to_the_same_log() {
    let (_dir, cfg) = prepared();
    pipeline::sweep(&cfg, SweepOptions::default()).unwrap();
    let whole = bytes(&cfg.runs_path());
    fs::remove_file(cfg.runs_path()).unwrap();
    let mut outcome = Outcome::Partial { skipped: 1 };
    let mut steps = 0;
    while outcome != Outcome::Complete {
        outcome = pipeline::sweep(
            &cfg,
            SweepOptions {
                workers: None,
                limit: Some(7),
            },
        )
        .unwrap();
        steps += 1;
    }
    assert!(steps > 2);
    assert_eq!(bytes(&cfg.runs_path()), whole);
    assert_eq!(
        pipeline::sweep(&cfg, SweepOptions::default()).unwrap(),
        Outcome::Complete
    );
    assert_eq!(bytes(&cfg.runs_path()), whole);
    let rows: Vec<RunRecord> = store::read(&cfg.runs_path()).unwrap();
    assert_eq!(rows.len(), 8 * (3 + 2) * 2);
}

#[test]
fn worker_count_does_not_change_the_log() {
    let (_dir, cfg) = prepared();
    pipeline::sweep(
        &cfg,
        SweepOptions {
            workers: Some(1),
            limit: None,
        },
    )
    .unwrap();
    let one = bytes(&cfg.runs_path());
    fs::remove_file(cfg.runs_path()).unwrap();
    pipeline::sweep(
        &cfg,
        SweepOptions {
            workers: Some(4),
            limit: None,
        },
    )
    .unwrap();
    assert_eq!(bytes(&cfg.runs_path()), one);
}

#[test]
fn sweep_solves_missing_ground_truth_inline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    pipeline::generate(&cfg).unwrap();
    assert_eq!(
        pipeline::sweep(&cfg, SweepOptions::default()).unwrap(),
        Outcome::Complete
    );
    let mut tight = cfg.clone();
    tight.exact.max_state_bits = 1;
    tight.sizes.push([2, 2]);
    pipeline::generate(&tight).unwrap();
    assert_eq!(
        pipeline::sweep(&tight, SweepOptions::default()).unwrap(),
        Outcome::Partial { skipped: 4 }
    );
}

#[test]
fn analysis_is_byte_identical_across_invocations() {
    let (dir, cfg) = prepared();
    pipeline::sweep(&cfg, SweepOptions::default()).unwrap();
    let path = write_config(dir.path(), &cfg);
    let mut outputs = Vec::new();
    for run in 0..2 {
        let out = dir.path().join(format!("a{run}"));
        for mode in ["tts", "speedup"] {
            let status = Command::new(BIN)
                .args(["analyze", "--mode", mode, "--config"])
                .arg(&path)
                .arg("--out")
                .arg(&out)
                .status()
                .unwrap();
            assert_eq!(status.code(), Some(0), "analyze --mode {mode}");
        }
        let mut files: Vec<_> = fs::read_dir(&out)
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        files.sort();
        outputs.push(
            files
                .iter()
                .map(|f| (f.file_name().unwrap().to_owned(), bytes(f)))
                .collect::<Vec<_>>(),
        );
    }
    assert_eq!(outputs[0].len(), 6);
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn self_comparison_gives_unit_speedup() {
    let (_dir, cfg) = prepared();
    pipeline::sweep(&cfg, SweepOptions::default()).unwrap();
    let log = RunLog::read(&cfg.runs_path()).unwrap();
    let opts = AnalysisOptions::from(&cfg.analysis);
    let out = analysis::speedup_tables(&log, &opts, &SpeedupOptions::new("sa", "sa")).unwrap();
    assert!(!out.rows.is_empty());
    for row in &out.rows {
        if row.statistic == "RofQ" || !row.censored {
            assert!(row.s == "1" || row.censored, "{row:?}");
        }
    }
    assert!(out.slopes.iter().all(|s| s.slope == 0.0));
}

#[test]
fn exit_codes() {
    let (dir, cfg) = prepared();
    let path = write_config(dir.path(), &cfg);
    let code = |args: &[&str]| Command::new(BIN).args(args).output().unwrap().status.code();
    let p = path.to_str().unwrap();

    assert_eq!(code(&["sweep", "--config", p, "--limit", "3"]), Some(3));
    assert_eq!(code(&["sweep", "--config", p, "--workers", "2"]), Some(0));

    let mut bad = cfg.clone();
    bad.sa.as_mut().unwrap().beta_init = -1.0;
    let bad_path = dir.path().join("bad.toml");
    fs::write(&bad_path, toml::to_string(&bad).unwrap()).unwrap();
    assert_eq!(
        code(&["sweep", "--config", bad_path.to_str().unwrap()]),
        Some(2)
    );
    assert_eq!(
        code(&[
            "analyze",
            "--config",
            p,
            "--mode",
            "speedup",
            "--normalization",
            "x"
        ]),
        Some(2)
    );
    assert_eq!(
        code(&[
            "analyze",
            "--config",
            p,
            "--mode",
            "tts",
            "--runs",
            "/nonexistent.csv"
        ]),
        Some(1)
    );

    let inst = cfg.output_dir.join("instances/c4-L1x1-r1-0000.txt");
    let log = dir.path().join("single.csv");
    let anneal = |solver: &str| {
        code(&[
            "anneal",
            "--instance",
            inst.to_str().unwrap(),
            "--solver",
            solver,
            "--t-a",
            "1,8",
            "--runs",
            "64",
            "--slices",
            "4",
            "--log",
            log.to_str().unwrap(),
        ])
    };
    assert_eq!(anneal("sa"), Some(0));
    assert_eq!(anneal("sqa"), Some(0));
    let rows: Vec<RunRecord> = store::read(&log).unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows
        .iter()
        .all(|r| r.instance_id == "c4-L1x1-r1-0000" && r.n_runs == 64));
    assert_eq!(rows[3].spin_updates, 8 * 8 * 4);
    assert_eq!(anneal("sa"), Some(0));
    assert_eq!(store::read::<RunRecord>(&log).unwrap().len(), 4);
}

#[test]
fn report_delegates_to_python() {
    let code = |python: &str| {
        Command::new(BIN)
            .args([
                "report", "--python", python, "fig1", "--in", "x.csv", "--out", "y.png",
            ])
            .output()
            .unwrap()
    };
    let echo = code("echo");
    assert_eq!(echo.status.code(), Some(0));
    assert_eq!(
        String::from_utf8_lossy(&echo.stdout),
        "-m anneal_reports fig1 --in x.csv --out y.png\n"
    );
    assert_eq!(code("false").status.code(), Some(1));
    assert_eq!(code("/nonexistent/python").status.code(), Some(1));
}
