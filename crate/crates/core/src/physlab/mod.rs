//! Synthetic physics datasets: free fall, simple harmonic motion, and a
//! damped electromagnetic wave.
//!
//! Each row samples five independent parameters uniformly (mass, a
//! characteristic length, a height, a damping coefficient, and a time bounded
//! by the free-fall time from the sampled height), evaluates the scenario's
//! ground-truth equation, and optionally adds zero-mean Gaussian noise scaled
//! to each signal's standard deviation.
//!
//! Sampling uses ChaCha8, whose output stream is specified independently of
//! platform, so a seed reproduces the same bytes everywhere.

mod io;
mod scenario;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{format_f64_17, read_dataset, sidecar_path, write_dataset, DatasetMeta};
pub use scenario::{ScenarioId, ScenarioSpec, ShmFrequency, G};

#[derive(Debug, Error)]
pub enum PhysError {
    #[error("degenerate sampling range for {name}: [{min}, {max}]")]
    DegenerateRange {
        name: &'static str,
        min: f64,
        max: f64,
    },
    #[error("n_samples must be at least 1")]
    NoSamples,
    #[error("invalid noise level {0}")]
    InvalidNoise(f64),
    #[error("need two series of equal length >= 2 (got {0} and {1})")]
    LengthMismatch(usize, usize),
    #[error("clean signal has zero variance")]
    ZeroSignalVariance,
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("line {line}: expected {expected} cells, found {found}")]
    RaggedRow {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}, column `{column}`: `{value}` is not a finite number")]
    NonNumeric {
        line: usize,
        column: String,
        value: String,
    },
    #[error("sidecar metadata: {0}")]
    Meta(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    fn check(&self, name: &'static str) -> Result<(), PhysError> {
        if self.min.is_finite() && self.max.is_finite() && self.min < self.max {
            Ok(())
        } else {
            Err(PhysError::DegenerateRange {
                name,
                min: self.min,
                max: self.max,
            })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingRanges {
    pub mass_kg: Range,
    pub char_length_m: Range,
    pub initial_height_m: Range,
    pub damping_kg_per_s: Range,
    pub n_samples: usize,
    /// Cap on time re-draws per row; see [`generate`].
    pub max_steps: usize,
}

impl Default for SamplingRanges {
    fn default() -> Self {
        Self {
            mass_kg: Range::new(0.1, 10.0),
            char_length_m: Range::new(0.01, 0.5),
            initial_height_m: Range::new(1.0, 100.0),
            damping_kg_per_s: Range::new(0.0, 1.0),
            n_samples: 500,
            max_steps: 1000,
        }
    }
}

impl SamplingRanges {
    pub fn with_samples(n_samples: usize) -> Self {
        Self {
            n_samples,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), PhysError> {
        self.mass_kg.check("mass_kg")?;
        self.char_length_m.check("char_length_m")?;
        self.initial_height_m.check("initial_height_m")?;
        self.damping_kg_per_s.check("damping_kg_per_s")?;
        if self.initial_height_m.min < 0.0 {
            return Err(PhysError::DegenerateRange {
                name: "initial_height_m",
                min: self.initial_height_m.min,
                max: self.initial_height_m.max,
            });
        }
        if self.n_samples == 0 {
            return Err(PhysError::NoSamples);
        }
        Ok(())
    }

    /// Free-fall time from `height`, the upper bound for the time column.
    pub fn time_bound(height: f64) -> f64 {
        (2.0 * height / G).sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseTarget {
    Features,
    Target,
    Both,
    None,
}

impl NoiseTarget {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Features => "features",
            Self::Target => "target",
            Self::Both => "both",
            Self::None => "none",
        }
    }

    fn touches_features(self) -> bool {
        matches!(self, Self::Features | Self::Both)
    }

    fn touches_target(self) -> bool {
        matches!(self, Self::Target | Self::Both)
    }
}

impl std::str::FromStr for NoiseTarget {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [Self::Features, Self::Target, Self::Both, Self::None]
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| {
                format!("unknown noise target `{s}` (expected features, target, both, or none)")
            })
    }
}

/// Gaussian noise with standard deviation `level * std(clean signal)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub level: f64,
    pub target: NoiseTarget,
}

impl NoiseSpec {
    pub const fn new(level: f64, target: NoiseTarget) -> Self {
        Self { level, target }
    }

    pub const fn none() -> Self {
        Self {
            level: 0.0,
            target: NoiseTarget::None,
        }
    }

    /// 1% on the target, the default for benchmark datasets.
    pub const fn baseline() -> Self {
        Self {
            level: 0.01,
            target: NoiseTarget::Target,
        }
    }

    pub fn validate(&self) -> Result<(), PhysError> {
        if self.level.is_finite() && self.level >= 0.0 {
            Ok(())
        } else {
            Err(PhysError::InvalidNoise(self.level))
        }
    }

    /// Within the 0 to 5% band used for robustness runs.
    pub fn is_target_baseline(&self) -> bool {
        (0.0..=0.05).contains(&self.level)
    }
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self::baseline()
    }
}

/// Signal-to-noise ratio, or the marker for a signal without noise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Snr {
    Db(f64),
    Noiseless,
}

impl Snr {
    pub fn db(self) -> Option<f64> {
        match self {
            Snr::Db(v) => Some(v),
            Snr::Noiseless => None,
        }
    }
}

impl Serialize for Snr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Snr::Db(v) => s.serialize_f64(*v),
            Snr::Noiseless => s.serialize_str("noiseless"),
        }
    }
}

impl<'de> Deserialize<'de> for Snr {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Snr::Db(v)),
            Raw::Text(s) if s == "noiseless" => Ok(Snr::Noiseless),
            Raw::Text(s) => Err(serde::de::Error::custom(format!("bad SNR value `{s}`"))),
        }
    }
}

/// Population variance.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

pub fn std_dev(xs: &[f64]) -> f64 {
    variance(xs).sqrt()
}

/// `10 log10(var(clean) / var(noisy - clean))`.
pub fn snr_db(clean: &[f64], noisy: &[f64]) -> Result<Snr, PhysError> {
    if clean.len() != noisy.len() || clean.len() < 2 {
        return Err(PhysError::LengthMismatch(clean.len(), noisy.len()));
    }
    let residual: Vec<f64> = noisy.iter().zip(clean).map(|(n, c)| n - c).collect();
    let noise_var = variance(&residual);
    if noise_var == 0.0 {
        return Ok(Snr::Noiseless);
    }
    let signal_var = variance(clean);
    if signal_var == 0.0 {
        return Err(PhysError::ZeroSignalVariance);
    }
    Ok(Snr::Db(10.0 * (signal_var / noise_var).log10()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnrSummary {
    pub target: Snr,
    pub features: Vec<Snr>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    /// Row-major predictor matrix, `n_samples` rows by `schema.len()` columns.
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub scenario: ScenarioSpec,
    pub ranges: SamplingRanges,
    pub noise: NoiseSpec,
    pub seed: u64,
    pub snr: SnrSummary,
}

impl Dataset {
    pub fn schema(&self) -> &crate::exprtree::VariableSchema {
        &self.scenario.schema
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Column-major copy of the predictor matrix.
    pub fn columns(&self) -> Vec<Vec<f64>> {
        let m = self.schema().len();
        (0..m)
            .map(|j| self.x.iter().map(|row| row[j]).collect())
            .collect()
    }
}

/// Stream used for row sampling; noise draws from its own stream so the clean
/// rows of a seed do not depend on the noise settings.
const SAMPLING_STREAM: u64 = 0;
const NOISE_STREAM: u64 = 1;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn uniform(rng: &mut ChaCha8Rng, r: Range) -> f64 {
    rng.random_range(r.min..=r.max)
}

/// Draws the five parameter slots of one row. The time slot is drawn on
/// `[0, time_bound(max height)]` and re-drawn until it falls under the
/// row's own bound, at most `max_steps` times, then clamped.
fn sample_row(rng: &mut ChaCha8Rng, ranges: &SamplingRanges) -> [f64; 5] {
    let mass = uniform(rng, ranges.mass_kg);
    let length = uniform(rng, ranges.char_length_m);
    let height = uniform(rng, ranges.initial_height_m);
    let damping = uniform(rng, ranges.damping_kg_per_s);
    let bound = SamplingRanges::time_bound(height);
    let global = SamplingRanges::time_bound(ranges.initial_height_m.max);
    let mut t = bound;
    for _ in 0..ranges.max_steps.max(1) {
        let draw = rng.random_range(0.0..=global);
        if draw <= bound {
            t = draw;
            break;
        }
    }
    [mass, length, height, damping, t.min(bound)]
}

fn add_noise(values: &mut [f64], level: f64, rng: &mut ChaCha8Rng) {
    let sigma = level * std_dev(values);
    if sigma == 0.0 {
        return;
    }
    let normal = Normal::new(0.0, sigma).expect("sigma is finite and positive");
    for v in values.iter_mut() {
        *v += normal.sample(rng);
    }
}

/// Generates a dataset; deterministic for a fixed seed.
pub fn generate(
    scenario: &ScenarioSpec,
    ranges: &SamplingRanges,
    noise: NoiseSpec,
    seed: u64,
) -> Result<Dataset, PhysError> {
    ranges.validate()?;
    noise.validate()?;
    let mut rng = stream_rng(seed, SAMPLING_STREAM);
    let clean_x: Vec<Vec<f64>> = (0..ranges.n_samples)
        .map(|_| sample_row(&mut rng, ranges).to_vec())
        .collect();
    let clean_y: Vec<f64> = clean_x
        .iter()
        .map(|row| scenario.gt_tree.evaluate(row).value)
        .collect();

    let m = scenario.schema.len();
    let mut noise_rng = stream_rng(seed, NOISE_STREAM);
    let mut columns: Vec<Vec<f64>> = (0..m)
        .map(|j| clean_x.iter().map(|r| r[j]).collect())
        .collect();
    let mut feature_snr = vec![Snr::Noiseless; m];
    if noise.target.touches_features() && noise.level > 0.0 {
        for (j, col) in columns.iter_mut().enumerate() {
            let clean = col.clone();
            add_noise(col, noise.level, &mut noise_rng);
            feature_snr[j] = snr_or_noiseless(&clean, col);
        }
    }
    let mut y = clean_y.clone();
    let mut target_snr = Snr::Noiseless;
    if noise.target.touches_target() && noise.level > 0.0 {
        add_noise(&mut y, noise.level, &mut noise_rng);
        target_snr = snr_or_noiseless(&clean_y, &y);
    }
    let x = (0..ranges.n_samples)
        .map(|i| columns.iter().map(|c| c[i]).collect())
        .collect();

    Ok(Dataset {
        x,
        y,
        scenario: scenario.clone(),
        ranges: *ranges,
        noise,
        seed,
        snr: SnrSummary {
            target: target_snr,
            features: feature_snr,
        },
    })
}

fn snr_or_noiseless(clean: &[f64], noisy: &[f64]) -> Snr {
    // A single row or a constant column has no measurable SNR.
    snr_db(clean, noisy).unwrap_or(Snr::Noiseless)
}
