//! Scenario files (JSON, schema version 1). Agent ids are 1-based here and converted to 0-based
//! on resolution.

use std::path::{Path, PathBuf};

use netguard_core::consensus::{AttackKind, AttackModel};
use netguard_core::detect::{Assumption, InputSign};
use netguard_core::numerics::{Matrix, Tolerance, Vector};
use netguard_core::serde_util::matrix::from_rows;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Validate,
    Analyze,
    Simulate,
    Detect,
    Identify,
    LocalIdentify,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Validate => "validate",
            Mode::Analyze => "analyze",
            Mode::Simulate => "simulate",
            Mode::Detect => "detect",
            Mode::Identify => "identify",
            Mode::LocalIdentify => "local-identify",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSource {
    Rows { rows: Vec<Vec<f64>> },
    /// Text file of whitespace- or comma-separated rows (`#` comments), or a JSON array of rows.
    File { file: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttackSpecKind {
    Constant { value: f64 },
    Exponential { z: f64, u0: f64 },
    StateFeedback { gain: Vec<f64>, offset: f64 },
    Sequence { values: Vec<f64> },
    InitialOffset { value: f64 },
    /// Uniform on `[-scale, scale]` (or `[min, max]` when given) at every step, from the scenario seed.
    Random {
        #[serde(default = "one")]
        scale: f64,
        #[serde(default)]
        min: Option<f64>,
        #[serde(default)]
        max: Option<f64>,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    /// 1-based agent id.
    pub agent: usize,
    #[serde(flatten)]
    pub kind: AttackSpecKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSpec {
    /// 1-based misbehaving agents.
    pub inputs: Vec<usize>,
    /// 1-based observer; its in-neighbors and itself are measured.
    pub observer: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSpec {
    #[serde(default)]
    pub pairs: Vec<PairSpec>,
    /// Every `(K, j)` with `|K|` equal to this and `j` outside `K`.
    #[serde(default)]
    pub all_pairs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecompositionSpec {
    pub a_d: Vec<Vec<f64>>,
    pub delta: Vec<Vec<f64>>,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSpec {
    /// 1-based target agent.
    pub target: usize,
    /// 1-based candidate set the filter belongs to.
    pub candidate: Vec<usize>,
    pub f: Vec<Vec<f64>>,
    pub e: Vec<Vec<f64>>,
    pub m: Vec<Vec<f64>>,
    pub h: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterBankSpec {
    /// 1-based agents read by the observer, in filter input order.
    pub observed: Vec<usize>,
    pub generators: Vec<FilterSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationMode {
    /// Certify the given `[u_min, u_max]`.
    #[default]
    Range,
    /// Search the smallest `alpha` with `u_min = eps * alpha * u_max`.
    Alpha,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalSpec {
    /// 1-based block index into `partition`.
    pub block: usize,
    pub k: usize,
    #[serde(default = "one")]
    pub x0_bound: f64,
    pub u_min: f64,
    pub u_max: f64,
    #[serde(default = "positive")]
    pub sign: InputSign,
    /// 1-based misbehaving set assumed for certification; defaults to the attacked agents.
    #[serde(default)]
    pub hypothesis: Option<Vec<usize>>,
    #[serde(default)]
    pub calibration: CalibrationMode,
    #[serde(default)]
    pub decomposition: Option<DecompositionSpec>,
    #[serde(default)]
    pub filters: Option<FilterBankSpec>,
}

fn positive() -> InputSign {
    InputSign::Positive
}

fn default_horizon() -> usize {
    30
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    #[serde(default)]
    pub mode: Option<Mode>,
    pub matrix: MatrixSource,
    #[serde(default)]
    pub normalize_rows: bool,
    #[serde(default)]
    pub attacks: Vec<AttackSpec>,
    /// 1-based observer.
    #[serde(default)]
    pub observer: Option<usize>,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default)]
    pub initial_state: Option<Vec<f64>>,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub assumption: Option<Assumption>,
    /// 1-based blocks.
    #[serde(default)]
    pub partition: Option<Vec<Vec<usize>>>,
    #[serde(default)]
    pub local: Option<LocalSpec>,
    #[serde(default)]
    pub analysis: Option<AnalysisSpec>,
    /// Rank tolerance; overrides `NETGUARD_TOL`.
    #[serde(default)]
    pub tolerance: Option<f64>,
    /// Residual level above which the detection filter raises an alarm.
    #[serde(default)]
    pub detection_floor: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

/// Scenario with the matrix loaded, ids converted to 0-based and randomness drawn.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub scenario: Scenario,
    pub matrix: Matrix,
    pub attacks: Vec<AttackModel>,
    pub initial_state: Vector,
    pub observer: Option<usize>,
    pub tol: Tolerance,
    pub seed: u64,
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Scenario(msg.into())
}

pub fn parse_matrix_text(text: &str) -> Result<Matrix, CliError> {
    let trimmed = text.trim_start();
    let rows: Vec<Vec<f64>> = if trimmed.starts_with('[') {
        serde_json::from_str(trimmed).map_err(|e| bad(format!("matrix JSON: {e}")))?
    } else {
        let mut rows = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let row = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|t| !t.is_empty())
                .map(|t| t.parse::<f64>().map_err(|e| bad(format!("line {}: {t:?}: {e}", ln + 1))))
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(row);
        }
        rows
    };
    from_rows(&rows).map_err(bad)
}

pub fn load_matrix_file(path: &Path) -> Result<Matrix, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    parse_matrix_text(&text)
}

/// Converts 1-based ids to 0-based, rejecting ids outside `1..=n`.
pub fn zero_based(ids: &[usize], n: usize, what: &str) -> Result<Vec<usize>, CliError> {
    ids.iter()
        .map(|&i| {
            if i == 0 || i > n {
                Err(bad(format!("{what}: agent {i} outside 1..={n}")))
            } else {
                Ok(i - 1)
            }
        })
        .collect()
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| bad(format!("scenario: {e}")))?;
        if s.schema_version != SCHEMA_VERSION {
            return Err(bad(format!("schema_version {} unsupported (expected {SCHEMA_VERSION})", s.schema_version)));
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<(Self, PathBuf), CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((Self::from_json(&text)?, base))
    }

    /// The matrix, read relative to `base` and optionally row-normalized.
    pub fn load_matrix(&self, base: &Path) -> Result<Matrix, CliError> {
        let mut matrix = match &self.matrix {
            MatrixSource::Rows { rows } => from_rows(rows).map_err(bad)?,
            MatrixSource::File { file } => load_matrix_file(&base.join(file))?,
        };
        if self.normalize_rows {
            for mut r in matrix.row_iter_mut() {
                let s: f64 = r.sum();
                if s > 0.0 {
                    r /= s;
                }
            }
        }
        Ok(matrix)
    }

    /// Loads the matrix relative to `base`, validates ids and draws the seeded randomness.
    pub fn resolve(self, base: &Path, command: Mode, seed_override: Option<u64>) -> Result<Resolved, CliError> {
        if let Some(mode) = self.mode {
            if mode != command {
                return Err(bad(format!("scenario mode {} does not match command {}", mode.name(), command.name())));
            }
        }
        let matrix = self.load_matrix(base)?;
        let n = matrix.nrows();
        if n == 0 || matrix.ncols() != n {
            return Err(bad(format!("matrix is {}x{}, expected square", n, matrix.ncols())));
        }
        if self.horizon == 0 {
            return Err(bad("horizon must be at least 1"));
        }
        let observer = match self.observer {
            Some(j) => Some(zero_based(&[j], n, "observer")?[0]),
            None => None,
        };
        let seed = seed_override.unwrap_or(self.seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let initial_state = match &self.initial_state {
            Some(v) if v.len() == n => Vector::from_column_slice(v),
            Some(v) => return Err(bad(format!("initial_state has {} entries for {n} agents", v.len()))),
            None => Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)),
        };
        let mut attacks = Vec::with_capacity(self.attacks.len());
        for spec in &self.attacks {
            let agent = zero_based(&[spec.agent], n, "attack")?[0];
            let kind = match &spec.kind {
                AttackSpecKind::Constant { value } => AttackKind::Constant { value: *value },
                AttackSpecKind::Exponential { z, u0 } => AttackKind::Exponential { z: *z, u0: *u0 },
                AttackSpecKind::StateFeedback { gain, offset } => {
                    if gain.len() != n {
                        return Err(bad(format!("state_feedback gain has {} entries for {n} agents", gain.len())));
                    }
                    AttackKind::StateFeedback { gain: gain.clone(), offset: *offset }
                }
                AttackSpecKind::Sequence { values } => AttackKind::Sequence { values: values.clone() },
                AttackSpecKind::InitialOffset { value } => AttackKind::InitialOffset { value: *value },
                AttackSpecKind::Random { scale, min, max } => {
                    let (lo, hi) = (min.unwrap_or(-scale), max.unwrap_or(*scale));
                    if lo.is_nan() || hi.is_nan() || lo >= hi {
                        return Err(bad(format!("random attack range [{lo}, {hi}] is empty")));
                    }
                    AttackKind::Sequence { values: (0..self.horizon).map(|_| rng.random_range(lo..hi)).collect() }
                }
            };
            attacks.push(AttackModel::new(agent, kind));
        }
        let tol = match self.tolerance {
            Some(t) if t > 0.0 && t.is_finite() => Tolerance::with_rank(t),
            Some(t) => return Err(bad(format!("tolerance {t} must be positive"))),
            None => Tolerance::from_env(),
        };
        Ok(Resolved { scenario: self, matrix, attacks, initial_state, observer, tol, seed })
    }
}

impl Resolved {
    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn require_observer(&self) -> Result<usize, CliError> {
        self.observer.ok_or_else(|| bad("scenario needs an observer"))
    }

    pub fn attacked_agents(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.attacks.iter().map(|a| a.agent).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn partition(&self) -> Result<Vec<Vec<usize>>, CliError> {
        let p = self.scenario.partition.as_ref().ok_or_else(|| bad("local identification needs a partition"))?;
        p.iter().map(|b| zero_based(b, self.n(), "partition")).collect()
    }
}
