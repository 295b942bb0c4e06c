//! Emotion sets, correlation priors and pair weights.
//!
//! Every prior is a symmetric `n x n` matrix in `[0, 1]` with a unit diagonal,
//! obtained by mapping a correlation-like quantity in `[-1, 1]` through
//! `v -> (v + 1) / 2`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Inputs outside `[-1, 1]` by at most this much are clamped before projection.
pub const PROJECTION_TOLERANCE: f64 = 1e-9;

/// The eleven emotions annotated in SemEval 2018 Task 1 E-c, in file order.
pub const SEMEVAL_EMOTIONS: [&str; 11] = [
    "anger",
    "anticipation",
    "disgust",
    "fear",
    "joy",
    "love",
    "optimism",
    "pessimism",
    "sadness",
    "surprise",
    "trust",
];

/// Default Plutchik wheel angles in degrees. Basic emotions sit every 45
/// degrees; the three dyads sit at the short-arc midpoint of their parts.
pub const DEFAULT_WHEEL_ANGLES: [(&str, f64); 11] = [
    ("joy", 0.0),
    ("trust", 45.0),
    ("fear", 90.0),
    ("surprise", 135.0),
    ("sadness", 180.0),
    ("disgust", 225.0),
    ("anger", 270.0),
    ("anticipation", 315.0),
    ("love", 22.5),
    ("optimism", 337.5),
    ("pessimism", 247.5),
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabelError {
    #[error("an emotion set needs at least 2 emotions, got {0}")]
    TooFewEmotions(usize),
    #[error("emotion name {0:?} is empty or not lowercase")]
    InvalidName(String),
    #[error("duplicate emotion name {0:?}")]
    DuplicateName(String),
    #[error("unknown emotion {0:?}")]
    UnknownEmotion(String),
    #[error("emotion {0:?} has no wheel angle")]
    MissingAngle(String),
    #[error("value {0} is outside [-1, 1]")]
    OutOfRange(f64),
    #[error("label matrix needs at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("label matrix row {row} has {found} columns, expected {expected}")]
    RaggedLabels {
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error("label value {value} at row {row}, column {col} is not 0 or 1")]
    NonBinary { row: usize, col: usize, value: u8 },
    #[error("invalid correlation prior: {0}")]
    InvalidPrior(String),
    #[error("cannot read wheel angles: {0}")]
    AngleFile(String),
}

pub type Result<T, E = LabelError> = std::result::Result<T, E>;

/// Ordered emotion names with optional wheel angles (degrees).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmotionSet {
    names: Vec<String>,
    angles: Vec<Option<f64>>,
}

impl EmotionSet {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.len() < 2 {
            return Err(LabelError::TooFewEmotions(names.len()));
        }
        for (i, name) in names.iter().enumerate() {
            if name.trim().is_empty() || name.trim() != name || *name != name.to_lowercase() {
                return Err(LabelError::InvalidName(name.clone()));
            }
            if names[..i].contains(name) {
                return Err(LabelError::DuplicateName(name.clone()));
            }
        }
        let angles = vec![None; names.len()];
        Ok(Self { names, angles })
    }

    /// The canonical 11-emotion SemEval set with default wheel angles.
    pub fn semeval() -> Self {
        Self::new(SEMEVAL_EMOTIONS)
            .expect("canonical set is valid")
            .with_default_angles()
    }

    /// Assigns [`DEFAULT_WHEEL_ANGLES`] to every emotion that has one.
    pub fn with_default_angles(mut self) -> Self {
        for (name, deg) in DEFAULT_WHEEL_ANGLES {
            if let Some(i) = self.index_of(name) {
                self.angles[i] = Some(deg);
            }
        }
        self
    }

    /// Overrides angles from a name -> degrees map. Unknown names are an error.
    pub fn with_angles(mut self, angles: &BTreeMap<String, f64>) -> Result<Self> {
        for (name, &deg) in angles {
            let i = self
                .index_of(name)
                .ok_or_else(|| LabelError::UnknownEmotion(name.clone()))?;
            self.angles[i] = Some(deg);
        }
        Ok(self)
    }

    /// Reads `emotion = degrees` lines (TOML key-value syntax).
    pub fn with_angle_file(self, path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| LabelError::AngleFile(e.to_string()))?;
        let angles = parse_angles(&text)?;
        self.with_angles(&angles)
    }

    /// Restricts to the named emotions, keeping their angles, in the given order.
    pub fn subset(&self, names: &[&str]) -> Result<Self> {
        let mut out = Self::new(names.iter().copied())?;
        for (k, name) in names.iter().enumerate() {
            let i = self
                .index_of(name)
                .ok_or_else(|| LabelError::UnknownEmotion(name.to_string()))?;
            out.angles[k] = self.angles[i];
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn angle(&self, i: usize) -> Option<f64> {
        self.angles[i]
    }

    pub fn angles(&self) -> &[Option<f64>] {
        &self.angles
    }

    /// Reorders emotions so that new position `k` holds old emotion `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            names: perm.iter().map(|&i| self.names[i].clone()).collect(),
            angles: perm.iter().map(|&i| self.angles[i]).collect(),
        }
    }
}

impl fmt::Display for EmotionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.names.join(","))
    }
}

pub fn parse_angles(text: &str) -> Result<BTreeMap<String, f64>> {
    toml::from_str(text).map_err(|e| LabelError::AngleFile(e.to_string()))
}

/// Maps `[-1, 1]` affinely onto `[0, 1]`.
pub fn project_to_unit_interval(v: f64) -> Result<f64> {
    if !(v >= -1.0 - PROJECTION_TOLERANCE && v <= 1.0 + PROJECTION_TOLERANCE) {
        return Err(LabelError::OutOfRange(v));
    }
    Ok((v.clamp(-1.0, 1.0) + 1.0) / 2.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorMode {
    #[serde(alias = "1", alias = "one")]
    ConstantOne,
    #[serde(alias = "rho")]
    EmpiricalRho,
    #[serde(alias = "theta")]
    WheelTheta,
}

impl fmt::Display for PriorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PriorMode::ConstantOne => "1",
            PriorMode::EmpiricalRho => "rho",
            PriorMode::WheelTheta => "theta",
        })
    }
}

/// Symmetric `n x n` matrix in `[0, 1]` with unit diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationPrior {
    mode: PriorMode,
    n: usize,
    matrix: Vec<f64>,
}

impl CorrelationPrior {
    /// Validates a row-major matrix.
    pub fn from_matrix(mode: PriorMode, n: usize, matrix: Vec<f64>) -> Result<Self> {
        if matrix.len() != n * n {
            return Err(LabelError::InvalidPrior(format!(
                "{} entries for n = {n}",
                matrix.len()
            )));
        }
        for i in 0..n {
            if matrix[i * n + i] != 1.0 {
                return Err(LabelError::InvalidPrior(format!("diagonal entry {i} is not 1")));
            }
            for j in 0..n {
                let v = matrix[i * n + j];
                if !(0.0..=1.0).contains(&v) {
                    return Err(LabelError::InvalidPrior(format!("entry ({i}, {j}) = {v}")));
                }
                if v != matrix[j * n + i] {
                    return Err(LabelError::InvalidPrior(format!("asymmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self { mode, n, matrix })
    }

    pub fn constant_one(n: usize) -> Self {
        Self {
            mode: PriorMode::ConstantOne,
            n,
            matrix: vec![1.0; n * n],
        }
    }

    pub fn mode(&self) -> PriorMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.n + j]
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    /// Applies the same permutation to both axes.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n;
        let mut m = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                m[a * n + b] = self.get(perm[a], perm[b]);
            }
        }
        Self {
            mode: self.mode,
            n,
            matrix: m,
        }
    }
}

fn validate_labels(labels: &[Vec<u8>]) -> Result<usize> {
    let n = labels.first().map_or(0, Vec::len);
    for (row, r) in labels.iter().enumerate() {
        if r.len() != n {
            return Err(LabelError::RaggedLabels {
                row,
                found: r.len(),
                expected: n,
            });
        }
        if let Some((col, &value)) = r.iter().enumerate().find(|(_, &v)| v > 1) {
            return Err(LabelError::NonBinary { row, col, value });
        }
    }
    Ok(n)
}

/// Pearson correlation between columns of a real matrix, in `[-1, 1]`.
/// Columns with zero variance correlate 0 with everything else; the diagonal is 1.
pub fn pearson_matrix(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.first().map_or(0, Vec::len);
    let m = rows.len() as f64;
    let means: Vec<f64> = (0..n)
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / m)
        .collect();
    let mut cov = vec![0.0; n * n];
    for r in rows {
        for i in 0..n {
            let di = r[i] - means[i];
            for j in i..n {
                cov[i * n + j] += di * (r[j] - means[j]);
            }
        }
    }
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        out[i * n + i] = 1.0;
        for j in i + 1..n {
            let denom = (cov[i * n + i] * cov[j * n + j]).sqrt();
            let v = if denom > 0.0 {
                (cov[i * n + j] / denom).clamp(-1.0, 1.0)
            } else {
                0.0
            };
            out[i * n + j] = v;
            out[j * n + i] = v;
        }
    }
    out
}

/// Empirical label correlation ρ of a binary `m x n` label matrix, projected to `[0, 1]`.
pub fn empirical_correlation(labels: &[Vec<u8>]) -> Result<CorrelationPrior> {
    if labels.len() < 2 {
        return Err(LabelError::TooFewRows(labels.len()));
    }
    let n = validate_labels(labels)?;
    let real: Vec<Vec<f64>> = labels
        .iter()
        .map(|r| r.iter().map(|&v| f64::from(v)).collect())
        .collect();
    let matrix = pearson_matrix(&real)
        .into_iter()
        .map(project_to_unit_interval)
        .collect::<Result<Vec<_>>>()?;
    CorrelationPrior::from_matrix(PriorMode::EmpiricalRho, n, matrix)
}

/// Projected cosine of the wheel-angle difference between two emotions.
pub fn wheel_cosine(set: &EmotionSet, i: usize, j: usize) -> Result<f64> {
    let angle = |k: usize| {
        set.angle(k)
            .ok_or_else(|| LabelError::MissingAngle(set.name(k).to_string()))
    };
    let (a, b) = (angle(i)?, angle(j)?);
    if i == j {
        return Ok(1.0);
    }
    project_to_unit_interval((a - b).to_radians().cos())
}

/// Wheel prior θ for every pair of the set.
pub fn wheel_prior(set: &EmotionSet) -> Result<CorrelationPrior> {
    let n = set.len();
    let mut matrix = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = wheel_cosine(set, i, j)?;
            matrix[i * n + j] = v;
            matrix[j * n + i] = v;
        }
    }
    CorrelationPrior::from_matrix(PriorMode::WheelTheta, n, matrix)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightMode {
    ConstantOne,
    FromPrior,
}

/// Inter-group weights `f` and intra-group weights `f'`.
#[derive(Clone, Debug, PartialEq)]
pub struct PairWeights {
    n: usize,
    inter: Vec<f64>,
    intra: Vec<f64>,
}

impl PairWeights {
    pub fn ones(n: usize) -> Self {
        Self {
            n,
            inter: vec![1.0; n * n],
            intra: vec![1.0; n * n],
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `f[i][j]`, applied to present/absent pairs.
    pub fn inter(&self, i: usize, j: usize) -> f64 {
        self.inter[i * self.n + j]
    }

    /// `f'[i][j]`, applied to same-group pairs.
    pub fn intra(&self, i: usize, j: usize) -> f64 {
        self.intra[i * self.n + j]
    }
}

/// `f = 1 - c` and `f' = c`, or all ones.
pub fn pair_weights(prior: &CorrelationPrior, mode: WeightMode) -> PairWeights {
    let n = prior.len();
    match mode {
        WeightMode::ConstantOne => PairWeights::ones(n),
        WeightMode::FromPrior => PairWeights {
            n,
            inter: prior.matrix().iter().map(|c| 1.0 - c).collect(),
            intra: prior.matrix().to_vec(),
        },
    }
}
