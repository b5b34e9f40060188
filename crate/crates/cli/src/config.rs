//! Benchmark configuration, read from TOML.
//!
//! ```toml
//! output_dir = "out"
//! seed = 1
//! sizes = [[2, 2], [4, 4]]   # (L, L') cell grids
//! cells = 4                   # half cell size c
//! ranges = [1]
//! instances = 100
//! gauges = 1
//! runs_per_gauge = 1024
//!
//! [sa]
//! t_a = [1, 2, 4, 8]
//!
//! [sqa]
//! t_a = [100, 1000]
//! slices = 64
//!
//! [analysis]
//! quantiles = [50, 90]
//! ```

use std::path::{Path, PathBuf};

use anneal_bench::exact::DEFAULT_MAX_STATE_BITS;
use anneal_bench::sa::{Kernel, SaSchedule, PROPOSAL_ORDER};
use anneal_bench::sqa::{self, SqaSchedule};
use anneal_bench::tts::{DEFAULT_MAX_REPETITIONS, DEFAULT_TARGET};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    pub sizes: Vec<[usize; 2]>,
    #[serde(default = "default_cells")]
    pub cells: usize,
    #[serde(default = "default_ranges")]
    pub ranges: Vec<u32>,
    #[serde(default = "default_instances")]
    pub instances: usize,
    #[serde(default = "default_one")]
    pub gauges: usize,
    #[serde(default = "default_runs")]
    pub runs_per_gauge: usize,
    #[serde(default)]
    pub exact: ExactConfig,
    pub sa: Option<SaConfig>,
    pub sqa: Option<SqaConfig>,
    #[serde(default)]
    pub analysis: AnalysisConfig,
}

fn default_cells() -> usize {
    4
}
fn default_ranges() -> Vec<u32> {
    vec![1]
}
fn default_instances() -> usize {
    1000
}
fn default_one() -> usize {
    1
}
fn default_runs() -> usize {
    1024
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExactConfig {
    #[serde(default = "default_state_bits")]
    pub max_state_bits: usize,
}

fn default_state_bits() -> usize {
    DEFAULT_MAX_STATE_BITS
}

impl Default for ExactConfig {
    fn default() -> Self {
        ExactConfig {
            max_state_bits: DEFAULT_MAX_STATE_BITS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelName {
    Multispin,
    Scalar,
}

impl From<KernelName> for Kernel {
    fn from(k: KernelName) -> Self {
        match k {
            KernelName::Multispin => Kernel::Multispin,
            KernelName::Scalar => Kernel::Scalar,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaConfig {
    pub t_a: Vec<u32>,
    #[serde(default = "default_beta_init")]
    pub beta_init: f64,
    /// Defaults to `3 r`.
    pub beta_final: Option<f64>,
    #[serde(default = "default_kernel")]
    pub kernel: KernelName,
}

fn default_beta_init() -> f64 {
    0.1
}
fn default_kernel() -> KernelName {
    KernelName::Multispin
}

impl SaConfig {
    pub fn schedule(&self, range: u32, sweeps: u32) -> SaSchedule {
        let base = SaSchedule::for_range(range, sweeps);
        SaSchedule {
            beta_init: self.beta_init,
            beta_final: self.beta_final.unwrap_or(base.beta_final),
            sweeps,
        }
    }

    pub fn params(&self, range: u32) -> String {
        let s = self.schedule(range, 1);
        format!(
            "beta_init={};beta_final={};kernel={};order={}",
            s.beta_init,
            s.beta_final,
            Kernel::from(self.kernel).as_str(),
            PROPOSAL_ORDER
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SqaConfig {
    pub t_a: Vec<u32>,
    #[serde(default = "default_slices")]
    pub slices: u32,
    #[serde(default = "default_sqa_beta")]
    pub beta: f64,
    #[serde(default = "default_a_init")]
    pub a_init: f64,
    #[serde(default = "default_b_final")]
    pub b_final: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_slices() -> u32 {
    sqa::DEFAULT_SLICES
}
fn default_sqa_beta() -> f64 {
    sqa::DEFAULT_BETA
}
fn default_a_init() -> f64 {
    sqa::DEFAULT_A_INIT
}
fn default_b_final() -> f64 {
    sqa::DEFAULT_B_FINAL
}
fn default_epsilon() -> f64 {
    sqa::DEFAULT_EPSILON
}

impl SqaConfig {
    pub fn schedule(&self, sweeps: u32) -> SqaSchedule {
        SqaSchedule {
            a_init: self.a_init,
            b_final: self.b_final,
            sweeps,
            slices: self.slices,
            beta: self.beta,
            epsilon: self.epsilon,
        }
    }

    pub fn params(&self) -> String {
        format!(
            "P={};beta={};A_init={};B_final={};epsilon={}",
            self.slices, self.beta, self.a_init, self.b_final, self.epsilon
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EffortUnit {
    Mcs,
    SpinUpdates,
    Seconds,
}

impl EffortUnit {
    pub fn as_str(self) -> &'static str {
        match self {
            EffortUnit::Mcs => "mcs",
            EffortUnit::SpinUpdates => "spin-updates",
            EffortUnit::Seconds => "seconds",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(default = "default_target")]
    pub p_target: f64,
    /// Repetition cap per gauge.
    #[serde(default = "default_r_max")]
    pub r_max: u64,
    #[serde(default = "default_quantiles")]
    pub quantiles: Vec<f64>,
    #[serde(default = "default_unit")]
    pub effort: EffortUnit,
    /// Converts spin updates to seconds.
    #[serde(default = "default_updates_per_second")]
    pub updates_per_second: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_target() -> f64 {
    DEFAULT_TARGET
}
fn default_r_max() -> u64 {
    DEFAULT_MAX_REPETITIONS
}
fn default_quantiles() -> Vec<f64> {
    vec![50.0]
}
fn default_unit() -> EffortUnit {
    EffortUnit::Mcs
}
fn default_updates_per_second() -> f64 {
    1e9
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            p_target: DEFAULT_TARGET,
            r_max: DEFAULT_MAX_REPETITIONS,
            quantiles: default_quantiles(),
            effort: EffortUnit::Mcs,
            updates_per_second: default_updates_per_second(),
            seed: 0,
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.p_target > 0.0 && self.p_target < 1.0) {
            return Err(CliError::invalid(format!(
                "p_target must lie in (0, 1), got {}",
                self.p_target
            )));
        }
        if self.r_max == 0 {
            return Err(CliError::invalid("r_max must be positive"));
        }
        if self.quantiles.is_empty() || self.quantiles.iter().any(|&q| !(q > 0.0 && q < 100.0)) {
            return Err(CliError::invalid(
                "quantiles must be a non-empty list inside (0, 100)",
            ));
        }
        if !(self.updates_per_second > 0.0) {
            return Err(CliError::invalid("updates_per_second must be positive"));
        }
        Ok(())
    }
}

impl BenchmarkConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let cfg: BenchmarkConfig = toml::from_str(&text)
            .map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every parameter against the owning module before any work.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.sizes.is_empty() || self.sizes.iter().any(|s| s[0] == 0 || s[1] == 0) {
            return Err(CliError::invalid(
                "sizes must be a non-empty list of positive [L, L'] pairs",
            ));
        }
        if self.cells == 0 {
            return Err(CliError::invalid("cells must be positive"));
        }
        if self.ranges.is_empty() || self.ranges.contains(&0) {
            return Err(CliError::invalid(
                "ranges must be a non-empty list of positive integers",
            ));
        }
        if self.instances == 0 || self.gauges == 0 || self.runs_per_gauge == 0 {
            return Err(CliError::invalid(
                "instances, gauges and runs_per_gauge must be positive",
            ));
        }
        if self.sa.is_none() && self.sqa.is_none() {
            return Err(CliError::invalid(
                "configure at least one of [sa] and [sqa]",
            ));
        }
        let grid_ok = |g: &[u32]| !g.is_empty() && !g.contains(&0);
        if let Some(sa) = &self.sa {
            if !grid_ok(&sa.t_a) {
                return Err(CliError::invalid(
                    "sa.t_a must be a non-empty list of positive sweep counts",
                ));
            }
            for &r in &self.ranges {
                sa.schedule(r, 1)
                    .validate()
                    .map_err(|e| CliError::invalid(format!("sa: {e}")))?;
            }
        }
        if let Some(sqa) = &self.sqa {
            if !grid_ok(&sqa.t_a) {
                return Err(CliError::invalid(
                    "sqa.t_a must be a non-empty list of positive sweep counts",
                ));
            }
            sqa.schedule(1)
                .validate()
                .map_err(|e| CliError::invalid(format!("sqa: {e}")))?;
        }
        self.analysis.validate()
    }

    pub fn instance_dir(&self) -> PathBuf {
        self.output_dir.join("instances")
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.output_dir.join("manifest.csv")
    }

    pub fn ground_truth_path(&self) -> PathBuf {
        self.output_dir.join("ground_truth.csv")
    }

    pub fn runs_path(&self) -> PathBuf {
        self.output_dir.join("runs.csv")
    }

    pub fn analysis_dir(&self) -> PathBuf {
        self.output_dir.join("analysis")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
output_dir = "out"
sizes = [[2, 2]]
[sa]
t_a = [1, 10]
"#;

    #[test]
    fn defaults_fill_in() {
        let cfg: BenchmarkConfig = toml::from_str(MINIMAL).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.cells, 4);
        assert_eq!(cfg.ranges, vec![1]);
        assert_eq!(cfg.instances, 1000);
        assert_eq!(cfg.analysis.p_target, 0.99);
        assert_eq!(cfg.analysis.r_max, 10_000);
        let sa = cfg.sa.as_ref().unwrap();
        assert_eq!(sa.schedule(7, 5).beta_final, 21.0);
        assert_eq!(
            sa.params(1),
            "beta_init=0.1;beta_final=3;kernel=multispin;order=sublattice-typewriter"
        );
    }

    #[test]
    fn invalid_parameters_are_caught() {
        let bad = |extra: &str| {
            let cfg: BenchmarkConfig = toml::from_str(&format!("{MINIMAL}{extra}")).unwrap();
            cfg.validate().unwrap_err()
        };
        assert!(matches!(bad("beta_init = -1.0\n"), CliError::Validation(_)));
        assert!(matches!(
            bad("[sqa]\nt_a = [1]\na_init = 0.0\n"),
            CliError::Validation(_)
        ));
        assert!(matches!(
            bad("[analysis]\np_target = 1.0\n"),
            CliError::Validation(_)
        ));
        assert!(toml::from_str::<BenchmarkConfig>(&format!("{MINIMAL}bogus = 1\n")).is_err());
    }
}
