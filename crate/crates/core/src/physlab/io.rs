//! CSV + JSON sidecar persistence.
//!
//! The CSV header is the schema names followed by `y`; each cell is written
//! with 17 significant digits so every `f64` reads back bit-exact. Everything
//! else lives in `<name>.meta.json` next to the CSV.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    Dataset, NoiseSpec, PhysError, SamplingRanges, ScenarioId, ScenarioSpec, ShmFrequency,
    SnrSummary,
};
use crate::exprtree::VariableSchema;

pub const TARGET_COLUMN: &str = "y";
const META_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetMeta {
    pub column: String,
    pub unit: String,
    pub description: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub format_version: u32,
    pub scenario: ScenarioId,
    pub shm_frequency: ShmFrequency,
    pub ground_truth: String,
    pub schema: VariableSchema,
    pub target: TargetMeta,
    pub derived: Vec<(String, String)>,
    pub ranges: SamplingRanges,
    pub noise: NoiseSpec,
    pub seed: u64,
    pub n_samples: usize,
    pub snr_db: super::Snr,
    pub feature_snr_db: Vec<super::Snr>,
}

impl DatasetMeta {
    pub fn from_dataset(d: &Dataset) -> Self {
        Self {
            format_version: META_VERSION,
            scenario: d.scenario.id,
            shm_frequency: d.scenario.shm_frequency,
            ground_truth: d.scenario.ground_truth_string(),
            schema: d.scenario.schema.clone(),
            target: TargetMeta {
                column: TARGET_COLUMN.to_string(),
                unit: d.scenario.target_unit.clone(),
                description: d.scenario.target_description.clone(),
            },
            derived: d.scenario.derived.clone(),
            ranges: d.ranges,
            noise: d.noise,
            seed: d.seed,
            n_samples: d.len(),
            snr_db: d.snr.target,
            feature_snr_db: d.snr.features.clone(),
        }
    }
}

/// `data.csv` -> `data.meta.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

/// Formats `v` with 17 significant digits, in positional notation when the
/// decimal exponent is in `[-5, 16)` and scientific notation otherwise.
pub fn format_f64_17(v: f64) -> String {
    let sci = format!("{v:.16e}");
    let exp: i32 = sci
        .rsplit_once('e')
        .and_then(|(_, e)| e.parse().ok())
        .unwrap_or(0);
    if v == 0.0 || !(-5..16).contains(&exp) {
        if v == 0.0 {
            return if v.is_sign_negative() {
                "-0.0".into()
            } else {
                "0.0".into()
            };
        }
        return sci;
    }
    format!("{v:.prec$}", prec = (16 - exp) as usize)
}

pub fn write_dataset(d: &Dataset, path: impl AsRef<Path>) -> Result<(), PhysError> {
    let path = path.as_ref();
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(BufWriter::new(File::create(path)?));
    let mut header: Vec<&str> = d.schema().names().iter().map(String::as_str).collect();
    header.push(TARGET_COLUMN);
    w.write_record(&header)?;
    for (row, y) in d.x.iter().zip(&d.y) {
        let cells = row
            .iter()
            .chain(std::iter::once(y))
            .map(|v| format_f64_17(*v));
        w.write_record(cells)?;
    }
    w.flush()?;

    let meta = DatasetMeta::from_dataset(d);
    let json = serde_json::to_string_pretty(&meta).map_err(|e| PhysError::Meta(e.to_string()))?;
    std::fs::write(sidecar_path(path), json + "\n")?;
    Ok(())
}

pub fn read_meta(csv_path: &Path) -> Result<DatasetMeta, PhysError> {
    let text = std::fs::read_to_string(sidecar_path(csv_path))?;
    serde_json::from_str(&text).map_err(|e| PhysError::Meta(e.to_string()))
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset, PhysError> {
    let path = path.as_ref();
    let meta = read_meta(path)?;
    if meta.format_version != META_VERSION {
        return Err(PhysError::Meta(format!(
            "unsupported format_version {}",
            meta.format_version
        )));
    }
    let scenario = ScenarioSpec::with_shm_frequency(meta.scenario, meta.shm_frequency);
    if scenario.schema.names() != meta.schema.names() {
        return Err(PhysError::Meta(format!(
            "schema {:?} does not match scenario {}",
            meta.schema.names(),
            meta.scenario
        )));
    }

    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)?;
    let mut records = r.records();
    let header = records
        .next()
        .ok_or_else(|| PhysError::MalformedHeader("empty file".into()))??;
    let mut expected: Vec<&str> = meta.schema.names().iter().map(String::as_str).collect();
    expected.push(TARGET_COLUMN);
    let found: Vec<&str> = header.iter().collect();
    if found != expected {
        let reason = if !found.contains(&TARGET_COLUMN) {
            format!("missing `{TARGET_COLUMN}` column in {found:?}")
        } else {
            format!("expected {expected:?}, found {found:?}")
        };
        return Err(PhysError::MalformedHeader(reason));
    }

    let width = expected.len();
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (i, rec) in records.enumerate() {
        let rec = rec?;
        let line = i + 2;
        if rec.len() != width {
            return Err(PhysError::RaggedRow {
                line,
                expected: width,
                found: rec.len(),
            });
        }
        let mut row = Vec::with_capacity(width);
        for (j, cell) in rec.iter().enumerate() {
            let v: f64 = cell
                .trim()
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| PhysError::NonNumeric {
                    line,
                    column: expected[j].to_string(),
                    value: cell.to_string(),
                })?;
            row.push(v);
        }
        y.push(row.pop().expect("width >= 1"));
        x.push(row);
    }
    if y.len() != meta.n_samples {
        return Err(PhysError::Meta(format!(
            "sidecar declares {} rows, CSV has {}",
            meta.n_samples,
            y.len()
        )));
    }

    let mut scenario = scenario;
    scenario.schema = meta.schema;
    Ok(Dataset {
        x,
        y,
        scenario,
        ranges: meta.ranges,
        noise: meta.noise,
        seed: meta.seed,
        snr: SnrSummary {
            target: meta.snr_db,
            features: meta.feature_snr_db,
        },
    })
}
