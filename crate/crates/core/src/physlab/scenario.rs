use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::exprtree::{parse, render, ExpressionTree, VariableSchema};

/// Standard gravity in m/s².
pub const G: f64 = 9.81;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioId {
    DropBall,
    Shm,
    EmWave,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 3] = [Self::DropBall, Self::Shm, Self::EmWave];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::DropBall => "drop_ball",
            Self::Shm => "shm",
            Self::EmWave => "em_wave",
        }
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| format!("unknown scenario `{s}` (expected drop_ball, shm, or em_wave)"))
    }
}

/// Frequency term of the harmonic oscillator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShmFrequency {
    /// `cos(sqrt(k/m) t + phi)`, the physical angular frequency.
    #[default]
    Angular,
    /// `cos((k/m) t + phi)`, for strict replication of the displayed form.
    Ratio,
}

/// One synthetic physics experiment: its columns, ground truth, and the
/// natural-language description handed to the critic.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioSpec {
    pub id: ScenarioId,
    pub shm_frequency: ShmFrequency,
    pub gt_tree: ExpressionTree,
    pub schema: VariableSchema,
    pub description: String,
    pub target_unit: String,
    pub target_description: String,
    /// How quantities that are not columns were derived, for the sidecar.
    pub derived: Vec<(String, String)>,
}

struct Column {
    name: &'static str,
    unit: &'static str,
    description: &'static str,
}

const fn col(name: &'static str, unit: &'static str, description: &'static str) -> Column {
    Column {
        name,
        unit,
        description,
    }
}

impl ScenarioSpec {
    pub fn new(id: ScenarioId) -> Self {
        Self::with_shm_frequency(id, ShmFrequency::default())
    }

    pub fn with_shm_frequency(id: ScenarioId, shm_frequency: ShmFrequency) -> Self {
        // Every scenario has five columns, one per sampled parameter slot
        // (mass, length, height, damping, time), named by their role.
        let (columns, gt, description, target_unit, target_description, derived) = match id {
            ScenarioId::DropBall => (
                [
                    col("m", "kg", "mass of the ball"),
                    col("l", "m", "radius of the ball"),
                    col("h", "m", "height the ball is dropped from"),
                    col("b", "kg/s", "linear drag coefficient"),
                    col("t", "s", "time since release"),
                ],
                "(2 * 9.81 * h) ^ 0.5",
                "A ball is dropped from rest at height h near the Earth's surface under \
                 constant gravity g = 9.81 m/s^2. The target is the speed it reaches when it \
                 has fallen the full height.",
                "m/s",
                "impact speed of the ball",
                vec![("g".to_string(), "9.81 m/s^2".to_string())],
            ),
            ScenarioId::Shm => (
                [
                    col("m", "kg", "mass attached to the spring"),
                    col("A", "m", "oscillation amplitude"),
                    col("k", "kg/s^2", "spring constant"),
                    col("phi", "rad", "phase offset"),
                    col("t", "s", "time"),
                ],
                match shm_frequency {
                    ShmFrequency::Angular => "A * cos((k / m) ^ 0.5 * t + phi)",
                    ShmFrequency::Ratio => "A * cos(k / m * t + phi)",
                },
                "A mass on an ideal spring oscillates without friction. The target is the \
                 displacement of the mass from equilibrium at time t.",
                "m",
                "displacement from equilibrium",
                vec![],
            ),
            ScenarioId::EmWave => (
                [
                    col("m", "kg", "oscillator mass setting the angular frequency"),
                    col("x", "m", "fixed observation position along the wave"),
                    col(
                        "k",
                        "kg/s^2",
                        "oscillator stiffness setting the angular frequency",
                    ),
                    col("b", "kg/s", "damping coefficient of the medium"),
                    col("t", "s", "time"),
                ],
                "exp(-(b / m) * t / 2) * cos((k / m) ^ 0.5 / 1 * x - (k / m) ^ 0.5 * t)",
                "A damped plane electromagnetic wave is observed at a fixed position x. The \
                 field amplitude decays exponentially in time while it oscillates. The target \
                 is the field strength normalised by its initial amplitude.",
                "1",
                "electric field normalised by its initial amplitude E0",
                vec![
                    ("E0".to_string(), "1 (target is E / E0)".to_string()),
                    ("alpha".to_string(), "b / m, in 1/s".to_string()),
                    ("omega".to_string(), "(k / m) ^ 0.5, in rad/s".to_string()),
                    (
                        "c_norm".to_string(),
                        "1 m/s (normalised wave speed)".to_string(),
                    ),
                    ("k_wave".to_string(), "omega / c_norm, in rad/m".to_string()),
                ],
            ),
        };
        let schema = VariableSchema::new(
            columns.iter().map(|c| c.name.to_string()).collect(),
            columns.iter().map(|c| c.unit.to_string()).collect(),
            columns.iter().map(|c| c.description.to_string()).collect(),
        )
        .expect("built-in schema is valid");
        let gt_tree = parse(gt, &schema).expect("built-in ground truth parses");
        Self {
            id,
            shm_frequency,
            gt_tree,
            schema,
            description: description.to_string(),
            target_unit: target_unit.to_string(),
            target_description: target_description.to_string(),
            derived,
        }
    }

    pub fn ground_truth_string(&self) -> String {
        render(&self.gt_tree, &self.schema).expect("ground truth uses schema variables")
    }

    /// One line per column: `name [unit]: description`.
    pub fn variable_descriptions(&self) -> String {
        let mut lines: Vec<String> = self
            .schema
            .names()
            .iter()
            .zip(self.schema.units())
            .zip(self.schema.descriptions())
            .map(|((n, u), d)| format!("- {n} [{u}]: {d}"))
            .collect();
        lines.push(format!(
            "- y [{}]: {}",
            self.target_unit, self.target_description
        ));
        lines.join("\n")
    }
}
