//! Versioned CSV tables.
//!
//! Every file begins with a `#schema=<name>/v<k>` line followed by a header
//! row. Empty cells mean "no value" (a censored effort, an unknown
//! degeneracy).

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub trait Table: Serialize + DeserializeOwned {
    const SCHEMA: &'static str;
}

fn schema_line<T: Table>() -> String {
    format!("#schema={}", T::SCHEMA)
}

fn to_csv<T: Table>(rows: &[T], header: bool) -> Result<Vec<u8>, CliError> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(header)
        .from_writer(Vec::new());
    for row in rows {
        w.serialize(row)
            .map_err(|e| CliError::Failed(e.to_string()))?;
    }
    if header && rows.is_empty() {
        return Ok(header_only::<T>());
    }
    w.into_inner().map_err(|e| CliError::Failed(e.to_string()))
}

// csv only learns the header from the first record; fall back to the field
// names of a deserialize-only probe.
fn header_only<T: Table>() -> Vec<u8> {
    struct Names(Vec<&'static str>);
    impl<'de> serde::Deserializer<'de> for &mut Names {
        type Error = serde::de::value::Error;
        fn deserialize_any<V: serde::de::Visitor<'de>>(
            self,
            _: V,
        ) -> Result<V::Value, Self::Error> {
            Err(serde::de::Error::custom("probe"))
        }
        fn deserialize_struct<V: serde::de::Visitor<'de>>(
            self,
            _: &'static str,
            fields: &'static [&'static str],
            _: V,
        ) -> Result<V::Value, Self::Error> {
            self.0 = fields.to_vec();
            Err(serde::de::Error::custom("probe"))
        }
        serde::forward_to_deserialize_any! {
            bool i8 i16 i32 i64 u8 u16 u32 u64 f32 f64 char str string bytes byte_buf
            option unit unit_struct newtype_struct seq tuple tuple_struct map enum
            identifier ignored_any
        }
    }
    let mut names = Names(Vec::new());
    let _ = T::deserialize(&mut names);
    let mut line = names.0.join(",").into_bytes();
    line.push(b'\n');
    line
}

/// Reads all rows, checking the schema line.
pub fn read<T: Table>(path: &Path) -> Result<Vec<T>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let (first, body) = text.split_once('\n').unwrap_or((text.as_str(), ""));
    if first.trim_end() != schema_line::<T>() {
        return Err(CliError::data(
            path,
            format!("expected {:?}, found {:?}", schema_line::<T>(), first),
        ));
    }
    csv::Reader::from_reader(body.as_bytes())
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| CliError::data(path, e))
}

/// Like [`read`], but a missing file reads as empty.
pub fn read_or_empty<T: Table>(path: &Path) -> Result<Vec<T>, CliError> {
    if path.exists() {
        read(path)
    } else {
        Ok(Vec::new())
    }
}

/// Replaces the file atomically.
pub fn write<T: Table>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut bytes = schema_line::<T>().into_bytes();
    bytes.push(b'\n');
    bytes.extend(to_csv(rows, true)?);
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let tmp = path.with_extension("csv.tmp");
    fs::write(&tmp, &bytes).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

/// Appends rows in one write, creating the file (schema and header) first if
/// needed.
pub fn append<T: Table>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    if !path.exists() {
        return write(path, rows);
    }
    if rows.is_empty() {
        return Ok(());
    }
    let bytes = to_csv(rows, false)?;
    let mut f = OpenOptions::new()
        .append(true)
        .open(path)
        .map_err(|e| CliError::io(path, e))?;
    f.write_all(&bytes).map_err(|e| CliError::io(path, e))?;
    f.sync_data().map_err(|e| CliError::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub instance_id: String,
    /// Relative to the output directory.
    pub path: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub r: u32,
    pub seed: u64,
    pub sha256: String,
}

impl Table for ManifestRecord {
    const SCHEMA: &'static str = "manifest/v1";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRecord {
    pub instance_id: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub r: u32,
    pub energy_numerator: i64,
    pub energy_denominator: u32,
    pub method: String,
    pub degeneracy: Option<u64>,
}

impl Table for GroundTruthRecord {
    const SCHEMA: &'static str = "ground_truth/v1";
}

/// One gauge block of annealing runs. `mcs` and `spin_updates` are per run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub instance_id: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub r: u32,
    pub solver: String,
    pub params: String,
    pub t_a: u32,
    pub gauge: usize,
    pub n_runs: u64,
    pub hits: u64,
    pub mcs: u64,
    pub spin_updates: u64,
    pub seed: u64,
}

impl RunRecord {
    pub fn key(&self) -> (String, String, u32, usize) {
        (
            self.instance_id.clone(),
            self.solver.clone(),
            self.t_a,
            self.gauge,
        )
    }
}

impl Table for RunRecord {
    const SCHEMA: &'static str = "runs/v1";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceTtsRecord {
    pub solver: String,
    pub r: u32,
    #[serde(rename = "N")]
    pub n: usize,
    pub instance_id: String,
    pub t_a: u32,
    pub gauges: usize,
    pub hits: u64,
    pub runs: u64,
    pub success: f64,
    pub tts: Option<f64>,
    pub censored: bool,
    pub unit: String,
}

impl Table for InstanceTtsRecord {
    const SCHEMA: &'static str = "instance_tts/v1";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRecord {
    pub solver: String,
    pub r: u32,
    #[serde(rename = "N")]
    pub n: usize,
    pub q: f64,
    pub t_a: u32,
    pub effort: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    pub censored: bool,
    pub unit: String,
}

impl Table for CurveRecord {
    const SCHEMA: &'static str = "curves/v1";
}

/// Envelope row; `position` says whether the optimum sits inside the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TtsRecord {
    pub solver: String,
    pub r: u32,
    #[serde(rename = "N")]
    pub n: usize,
    pub q: f64,
    pub t_a_opt: Option<u32>,
    pub position: String,
    pub effort: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    pub censored: bool,
    pub unit: String,
}

impl Table for TtsRecord {
    const SCHEMA: &'static str = "tts/v1";
}

/// Speedup values are numbers, `0+`, `inf`, or empty when undetermined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedupRecord {
    pub statistic: String,
    pub q: f64,
    pub r: u32,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "S")]
    pub s: String,
    pub ci_lo: String,
    pub ci_hi: String,
    pub censored: bool,
    pub normalization: String,
    #[serde(rename = "M")]
    pub m: Option<usize>,
    pub classical: String,
    pub classical_t_a: String,
    pub device: String,
    pub device_t_a: String,
    pub excluded: usize,
}

impl Table for SpeedupRecord {
    const SCHEMA: &'static str = "speedup/v1";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeRecord {
    pub statistic: String,
    pub q: f64,
    pub r: u32,
    pub classical_t_a: String,
    pub device_t_a: String,
    pub n_from: usize,
    pub n_to: usize,
    pub slope: f64,
}

impl Table for SlopeRecord {
    const SCHEMA: &'static str = "speedup_slopes/v1";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioRecord {
    pub q: f64,
    pub r: u32,
    #[serde(rename = "N")]
    pub n: usize,
    pub instance_id: String,
    pub classical: String,
    pub device: String,
    pub classical_tts: Option<f64>,
    pub device_tts: Option<f64>,
    pub ratio: String,
}

impl Table for RatioRecord {
    const SCHEMA: &'static str = "ratios/v1";
}
