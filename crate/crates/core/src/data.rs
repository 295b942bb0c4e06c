//! SemEval E-c TSV ingestion and synthetic correlated multi-label data.

use std::fmt;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::labels::{EmotionSet, LabelError, SEMEVAL_EMOTIONS};

/// Eigenvalues of a target correlation matrix may dip this far below zero.
pub const PSD_TOLERANCE: f64 = 1e-6;
const SYMMETRY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}: file is empty, a header row is required")]
    MissingHeader(String),
    #[error("{file}: header has no column for emotion {emotion:?}")]
    MissingColumn { file: String, emotion: String },
    #[error("{file}: header must start with ID and Tweet columns")]
    BadHeader { file: String },
    #[error("{file}: row {row}, column {column:?}: label {value:?} is not 0 or 1")]
    NonBinary {
        file: String,
        row: usize,
        column: String,
        value: String,
    },
    #[error("{file}: row {row} has {found} fields, expected {expected}")]
    Arity {
        file: String,
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error("{0}: no examples")]
    Empty(String),
    #[error("target correlation matrix is not positive semidefinite (smallest eigenvalue {0})")]
    NotPsd(f64),
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Labels(#[from] LabelError),
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Dev,
    Test,
}

impl SplitName {
    pub fn file_name(self) -> &'static str {
        match self {
            SplitName::Train => "train.tsv",
            SplitName::Dev => "dev.tsv",
            SplitName::Test => "test.tsv",
        }
    }
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitName::Train => "train",
            SplitName::Dev => "dev",
            SplitName::Test => "test",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledExample {
    pub id: String,
    pub text: String,
    /// One 0/1 entry per emotion, in the emotion set's order.
    pub labels: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetSplit {
    pub name: SplitName,
    pub examples: Vec<LabeledExample>,
}

impl DatasetSplit {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn labels(&self) -> Vec<Vec<u8>> {
        self.examples.iter().map(|e| e.labels.clone()).collect()
    }

    pub fn texts(&self) -> Vec<&str> {
        self.examples.iter().map(|e| e.text.as_str()).collect()
    }

    /// Concatenation of two splits under a new name.
    pub fn concat(&self, other: &DatasetSplit, name: SplitName) -> DatasetSplit {
        let mut examples = self.examples.clone();
        examples.extend(other.examples.iter().cloned());
        DatasetSplit { name, examples }
    }
}

/// Train, dev and test splits of one dataset.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    pub train: DatasetSplit,
    pub dev: DatasetSplit,
    pub test: DatasetSplit,
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Parses E-c TSV text. Emotion columns are matched by header name.
pub fn parse_semeval_tsv(
    content: &str,
    file: &str,
    name: SplitName,
    set: &EmotionSet,
) -> Result<DatasetSplit> {
    let mut lines = content.lines();
    let header = lines
        .next()
        .ok_or_else(|| DataError::MissingHeader(file.to_string()))?;
    let columns: Vec<&str> = header.split('\t').collect();
    if columns.len() < 2
        || !columns[0].trim().eq_ignore_ascii_case("id")
        || !columns[1].trim().eq_ignore_ascii_case("tweet")
    {
        return Err(DataError::BadHeader {
            file: file.to_string(),
        });
    }
    let positions = set
        .names()
        .iter()
        .map(|emotion| {
            columns
                .iter()
                .position(|c| c.trim().eq_ignore_ascii_case(emotion))
                .ok_or_else(|| DataError::MissingColumn {
                    file: file.to_string(),
                    emotion: emotion.clone(),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut examples = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = i + 2;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != columns.len() {
            return Err(DataError::Arity {
                file: file.to_string(),
                row,
                found: fields.len(),
                expected: columns.len(),
            });
        }
        let labels = positions
            .iter()
            .map(|&p| match fields[p].trim() {
                "0" => Ok(0),
                "1" => Ok(1),
                other => Err(DataError::NonBinary {
                    file: file.to_string(),
                    row,
                    column: columns[p].trim().to_string(),
                    value: other.to_string(),
                }),
            })
            .collect::<Result<Vec<u8>>>()?;
        examples.push(LabeledExample {
            id: fields[0].to_string(),
            text: fields[1].to_string(),
            labels,
        });
    }
    if examples.is_empty() {
        return Err(DataError::Empty(file.to_string()));
    }
    Ok(DatasetSplit { name, examples })
}

pub fn load_semeval_tsv(path: &Path, name: SplitName, set: &EmotionSet) -> Result<DatasetSplit> {
    let content = std::fs::read_to_string(path).map_err(io_error(path))?;
    parse_semeval_tsv(&content, &path.display().to_string(), name, set)
}

/// Emotion column names of an E-c TSV header, in file order.
pub fn read_header_emotions(path: &Path) -> Result<Vec<String>> {
    let content = std::fs::read_to_string(path).map_err(io_error(path))?;
    let file = path.display().to_string();
    let header = content
        .lines()
        .next()
        .ok_or_else(|| DataError::MissingHeader(file.clone()))?;
    let columns: Vec<&str> = header.split('\t').map(str::trim).collect();
    if columns.len() < 4
        || !columns[0].eq_ignore_ascii_case("id")
        || !columns[1].eq_ignore_ascii_case("tweet")
    {
        return Err(DataError::BadHeader { file });
    }
    Ok(columns[2..].iter().map(|c| c.to_lowercase()).collect())
}

/// Loads `train.tsv`, `dev.tsv` and `test.tsv` from a directory.
pub fn load_dataset_dir(dir: &Path, set: &EmotionSet) -> Result<Dataset> {
    let load = |name: SplitName| load_semeval_tsv(&dir.join(name.file_name()), name, set);
    Ok(Dataset {
        train: load(SplitName::Train)?,
        dev: load(SplitName::Dev)?,
        test: load(SplitName::Test)?,
    })
}

/// Renders a split in the E-c TSV schema.
pub fn to_semeval_tsv(split: &DatasetSplit, set: &EmotionSet) -> String {
    let mut out = String::from("ID\tTweet");
    for name in set.names() {
        out.push('\t');
        out.push_str(name);
    }
    out.push('\n');
    for e in &split.examples {
        out.push_str(&e.id);
        out.push('\t');
        out.push_str(&e.text);
        for l in &e.labels {
            out.push('\t');
            out.push_str(if *l == 1 { "1" } else { "0" });
        }
        out.push('\n');
    }
    out
}

pub fn write_semeval_tsv(path: &Path, split: &DatasetSplit, set: &EmotionSet) -> Result<()> {
    std::fs::write(path, to_semeval_tsv(split, set)).map_err(io_error(path))
}

pub fn write_dataset_dir(dir: &Path, data: &Dataset, set: &EmotionSet) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(io_error(dir))?;
    for split in [&data.train, &data.dev, &data.test] {
        write_semeval_tsv(&dir.join(split.name.file_name()), split, set)?;
    }
    Ok(())
}

/// Parameters of the latent-Gaussian threshold generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    /// Emotion names; defaults to the first `n` SemEval emotions.
    #[serde(default)]
    pub emotions: Option<Vec<String>>,
    pub n: usize,
    pub m: usize,
    /// Row-major `n x n` latent correlation.
    pub target_correlation: Vec<Vec<f64>>,
    pub rates: Vec<f64>,
    #[serde(default = "default_vocab_per_emotion")]
    pub vocabulary_per_emotion: usize,
    #[serde(default)]
    pub noise_rate: f64,
    /// Tokens per generated text.
    #[serde(default = "default_text_length")]
    pub text_length: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_vocab_per_emotion() -> usize {
    10
}

fn default_text_length() -> usize {
    8
}

impl SyntheticSpec {
    /// Independent emotions at the given rate.
    pub fn independent(n: usize, m: usize, rate: f64, seed: u64) -> Self {
        let target_correlation = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self {
            emotions: None,
            n,
            m,
            target_correlation,
            rates: vec![rate; n],
            vocabulary_per_emotion: default_vocab_per_emotion(),
            noise_rate: 0.0,
            text_length: default_text_length(),
            seed,
        }
    }

    /// Sets the symmetric latent correlation of one pair.
    pub fn with_pair(mut self, i: usize, j: usize, c: f64) -> Self {
        self.target_correlation[i][j] = c;
        self.target_correlation[j][i] = c;
        self
    }

    pub fn emotion_set(&self) -> Result<EmotionSet> {
        match &self.emotions {
            Some(names) => {
                if names.len() != self.n {
                    return Err(DataError::InvalidSpec(format!(
                        "{} emotion names for n = {}",
                        names.len(),
                        self.n
                    )));
                }
                Ok(EmotionSet::new(names.clone())?.with_default_angles())
            }
            None if self.n <= SEMEVAL_EMOTIONS.len() => {
                Ok(EmotionSet::new(SEMEVAL_EMOTIONS[..self.n].iter().copied())?
                    .with_default_angles())
            }
            None => Err(DataError::InvalidSpec(format!(
                "n = {} needs explicit emotion names",
                self.n
            ))),
        }
    }

    pub fn target_flat(&self) -> Vec<f64> {
        self.target_correlation.iter().flatten().copied().collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(DataError::InvalidSpec(m));
        let n = self.n;
        if n < 2 {
            return bad(format!("n = {n}, need at least 2 emotions"));
        }
        if self.m < 10 {
            return bad(format!("m = {} is too small to split", self.m));
        }
        if self.rates.len() != n || self.rates.iter().any(|r| !(*r > 0.0 && *r < 1.0)) {
            return bad("rates must be n values in (0, 1)".into());
        }
        if !(0.0..=1.0).contains(&self.noise_rate) {
            return bad("noise rate must lie in [0, 1]".into());
        }
        if self.vocabulary_per_emotion == 0 || self.text_length == 0 {
            return bad("vocabulary and text length must be positive".into());
        }
        let c = &self.target_correlation;
        if c.len() != n || c.iter().any(|r| r.len() != n) {
            return bad("target correlation must be n x n".into());
        }
        for i in 0..n {
            if (c[i][i] - 1.0).abs() > SYMMETRY_TOLERANCE {
                return bad(format!("diagonal entry {i} is {}, expected 1", c[i][i]));
            }
            for j in 0..n {
                if !(-1.0..=1.0).contains(&c[i][j]) {
                    return bad(format!("entry ({i}, {j}) = {} outside [-1, 1]", c[i][j]));
                }
                if (c[i][j] - c[j][i]).abs() > SYMMETRY_TOLERANCE {
                    return bad(format!("entries ({i}, {j}) and ({j}, {i}) differ"));
                }
            }
        }
        Ok(())
    }
}

/// Symmetric square root of a correlation matrix, erroring when it is not PSD.
pub fn correlation_sqrt(c: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = c.len();
    let m = DMatrix::from_fn(n, n, |i, j| c[i][j]);
    let eig = SymmetricEigen::new(m);
    let min = eig.eigenvalues.min();
    if min < -PSD_TOLERANCE {
        return Err(DataError::NotPsd(min));
    }
    let roots = DVector::from_iterator(n, eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()));
    let v = &eig.eigenvectors;
    Ok(v * DMatrix::from_diagonal(&roots) * v.transpose())
}

pub fn emotion_token(emotion: usize, k: usize) -> String {
    format!("e{emotion}w{k}")
}

pub fn noise_token(k: usize) -> String {
    format!("noise{k}")
}

/// Samples a labeled dataset and splits it 70/10/20.
///
/// Labels threshold a latent Gaussian with the target correlation at the
/// quantiles matching the marginal rates. Each text token is noise with
/// probability `noise_rate`, otherwise a private token of a random present
/// emotion; texts without emotions are all noise.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let n = spec.n;
    let root = correlation_sqrt(&spec.target_correlation)?;
    let normal = Normal::standard();
    let thresholds: Vec<f64> = spec
        .rates
        .iter()
        .map(|&r| normal.inverse_cdf(1.0 - r))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut examples = Vec::with_capacity(spec.m);
    let width = spec.m.to_string().len();
    for idx in 0..spec.m {
        let g = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let z = &root * g;
        let labels: Vec<u8> = (0..n).map(|i| u8::from(z[i] > thresholds[i])).collect();
        let present: Vec<usize> = (0..n).filter(|&i| labels[i] == 1).collect();
        let tokens: Vec<String> = (0..spec.text_length)
            .map(|_| {
                if present.is_empty() || rng.random::<f64>() < spec.noise_rate {
                    noise_token(rng.random_range(0..spec.vocabulary_per_emotion))
                } else {
                    let e = present[rng.random_range(0..present.len())];
                    emotion_token(e, rng.random_range(0..spec.vocabulary_per_emotion))
                }
            })
            .collect();
        examples.push(LabeledExample {
            id: format!("syn-{idx:0width$}"),
            text: tokens.join(" "),
            labels,
        });
    }
    examples.shuffle(&mut rng);
    let n_train = spec.m * 7 / 10;
    let n_dev = spec.m / 10;
    let test = examples.split_off(n_train + n_dev);
    let dev = examples.split_off(n_train);
    Ok(Dataset {
        train: DatasetSplit {
            name: SplitName::Train,
            examples,
        },
        dev: DatasetSplit {
            name: SplitName::Dev,
            examples: dev,
        },
        test: DatasetSplit {
            name: SplitName::Test,
            examples: test,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::pearson_matrix;

    fn all_labels(d: &Dataset) -> Vec<Vec<f64>> {
        [&d.train, &d.dev, &d.test]
            .iter()
            .flat_map(|s| s.examples.iter())
            .map(|e| e.labels.iter().map(|&v| f64::from(v)).collect())
            .collect()
    }

    #[test]
    fn tsv_parse_remaps_by_header() {
        let set = EmotionSet::new(["anger", "joy"]).unwrap();
        let text = "ID\tTweet\tjoy\tanger\n1\thi there\t1\t0\n2\t  spaced  \t0\t1\n";
        let split = parse_semeval_tsv(text, "mem", SplitName::Train, &set).unwrap();
        assert_eq!(split.examples[0].labels, vec![0, 1]);
        assert_eq!(split.examples[1].labels, vec![1, 0]);
        assert_eq!(split.examples[1].text, "  spaced  ");
    }

    #[test]
    fn tsv_errors() {
        let set = EmotionSet::new(["anger", "joy"]).unwrap();
        let parse = |t: &str| parse_semeval_tsv(t, "f", SplitName::Dev, &set);
        assert!(matches!(
            parse("ID\tTweet\tanger\n1\tx\t1\n"),
            Err(DataError::MissingColumn { emotion, .. }) if emotion == "joy"
        ));
        match parse("ID\tTweet\tanger\tjoy\n1\tx\t1\t0\n2\ty\t0\t2\n") {
            Err(DataError::NonBinary { row, column, value, .. }) => {
                assert_eq!((row, column.as_str(), value.as_str()), (3, "joy", "2"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse("ID\tTweet\tanger\tjoy\n1\tx\tt\t1\t0\n"),
            Err(DataError::Arity { row: 2, found: 5, .. })
        ));
        assert!(matches!(parse(""), Err(DataError::MissingHeader(_))));
        assert!(matches!(parse("ID\tTweet\tanger\tjoy\n"), Err(DataError::Empty(_))));
    }

    #[test]
    fn tsv_round_trip() {
        let spec = SyntheticSpec::independent(3, 50, 0.4, 2);
        let set = spec.emotion_set().unwrap();
        let d = generate_synthetic(&spec).unwrap();
        let text = to_semeval_tsv(&d.dev, &set);
        let back = parse_semeval_tsv(&text, "x", SplitName::Dev, &set).unwrap();
        assert_eq!(back, d.dev);
    }

    #[test]
    fn synthetic_is_reproducible_and_split() {
        let spec = SyntheticSpec::independent(4, 200, 0.3, 9);
        let a = generate_synthetic(&spec).unwrap();
        assert_eq!(a, generate_synthetic(&spec).unwrap());
        assert_eq!((a.train.len(), a.dev.len(), a.test.len()), (140, 20, 40));
        let other = generate_synthetic(&SyntheticSpec { seed: 10, ..spec }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn independent_labels_are_uncorrelated() {
        let d = generate_synthetic(&SyntheticSpec::independent(4, 2000, 0.5, 1)).unwrap();
        let r = pearson_matrix(&all_labels(&d));
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert!(r[i * 4 + j].abs() < 0.1, "{i},{j}: {}", r[i * 4 + j]);
                }
            }
        }
    }

    #[test]
    fn correlated_pair_co_occurs() {
        let spec = SyntheticSpec::independent(3, 2000, 0.5, 4).with_pair(0, 1, 0.9);
        let r = pearson_matrix(&all_labels(&generate_synthetic(&spec).unwrap()));
        assert!(r[1] >= 0.6, "{}", r[1]);
    }

    #[test]
    fn non_psd_rejected() {
        let spec = SyntheticSpec::independent(3, 100, 0.5, 0)
            .with_pair(0, 1, 0.9)
            .with_pair(1, 2, 0.9)
            .with_pair(0, 2, -0.9);
        assert!(matches!(generate_synthetic(&spec), Err(DataError::NotPsd(_))));
    }

    #[test]
    fn full_noise_texts() {
        let spec = SyntheticSpec {
            noise_rate: 1.0,
            ..SyntheticSpec::independent(3, 100, 0.5, 0)
        };
        let d = generate_synthetic(&spec).unwrap();
        assert!(d
            .train
            .examples
            .iter()
            .all(|e| e.text.split(' ').all(|t| t.starts_with("noise"))));
    }

    #[test]
    fn sqrt_squares_back() {
        let c = vec![vec![1.0, 0.5], vec![0.5, 1.0]];
        let r = correlation_sqrt(&c).unwrap();
        let back = &r * &r;
        assert!((back[(0, 1)] - 0.5).abs() < 1e-12);
        assert!((back[(1, 1)] - 1.0).abs() < 1e-12);
    }
}
