//! Training protocol: seeded mini-batch Adam on the combined objective,
//! early stopping on dev Jaccard, and retraining on train+dev.

use std::path::{Path, PathBuf};

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, Dataset, DatasetSplit, SplitName};
use crate::graph::Graph;
use crate::labels::{
    empirical_correlation, pearson_matrix, wheel_prior, CorrelationPrior, EmotionSet, LabelError,
    PriorMode, SEMEVAL_EMOTIONS,
};
use crate::losses::{LossConfig, LossError, Objective};
use crate::metrics::{evaluate, EvaluationReport, MetricsError, DEFAULT_THRESHOLD};
use crate::model::{EmotionModel, EncoderConfig, MemoHead, ModelError, ModelKind, ModelSpec};
use crate::optim::Adam;
use crate::pool::map_parallel;
use crate::tensor::TensorError;
use crate::text::{TokenSequence, VocabConfig, Vocabulary};

const PREDICT_CHUNK: usize = 64;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot read config {path}: {message}")]
    ConfigFile { path: PathBuf, message: String },
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Divergence { epoch: usize, loss: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Labels(#[from] LabelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T, E = TrainError> = std::result::Result<T, E>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKind,
    pub memo_head: MemoHead,
    pub head_hidden: Option<usize>,
    /// Emotion names in label order; defaults to the eleven SemEval emotions.
    pub emotions: Option<Vec<String>>,
    /// TOML file of `emotion = degrees` wheel angles.
    pub angles_file: Option<PathBuf>,
    pub max_piece_length: usize,
    pub min_word_count: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        let vocab = VocabConfig::default();
        Self {
            kind: ModelKind::Demux,
            memo_head: MemoHead::NewClassifier,
            head_hidden: None,
            emotions: None,
            angles_file: None,
            max_piece_length: vocab.max_piece_length,
            min_word_count: vocab.min_word_count,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seeds: Vec<u64>,
    /// Retrain on train+dev for the median best epoch before testing.
    pub retrain: bool,
    pub threshold: f64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 50,
            patience: 5,
            seeds: (0..10).collect(),
            retrain: true,
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelSection,
    pub loss: LossConfig,
    pub encoder: EncoderConfig,
    pub trainer: TrainerConfig,
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| TrainError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| TrainError::ConfigFile {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_toml(&text).map_err(|e| TrainError::ConfigFile {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.trainer;
        if t.patience == 0 {
            return Err(TrainError::Config("patience must be at least 1".into()));
        }
        if t.seeds.is_empty() {
            return Err(TrainError::Config("at least one seed is required".into()));
        }
        if t.batch_size == 0 || t.max_epochs == 0 {
            return Err(TrainError::Config(
                "batch size and max epochs must be positive".into(),
            ));
        }
        if !(t.learning_rate > 0.0 && t.learning_rate.is_finite()) {
            return Err(TrainError::Config("learning rate must be positive".into()));
        }
        if !(t.threshold > 0.0 && t.threshold < 1.0) {
            return Err(TrainError::Config("threshold must lie in (0, 1)".into()));
        }
        self.encoder.validate()?;
        self.loss.validate(self.model_spec(0).has_representations())?;
        Ok(())
    }

    pub fn model_spec(&self, seed: u64) -> ModelSpec {
        ModelSpec {
            kind: self.model.kind,
            memo_head: self.model.memo_head,
            encoder: EncoderConfig {
                seed,
                ..self.encoder
            },
            head_hidden: self.model.head_hidden,
        }
    }

    pub fn vocab_config(&self) -> VocabConfig {
        VocabConfig {
            max_piece_length: self.model.max_piece_length,
            min_word_count: self.model.min_word_count,
        }
    }

    /// Emotion set with wheel angles from the angle file or the defaults.
    pub fn emotion_set(&self) -> Result<EmotionSet> {
        let set = match &self.model.emotions {
            Some(names) => EmotionSet::new(names.clone())?,
            None => EmotionSet::new(SEMEVAL_EMOTIONS)?,
        };
        Ok(match &self.model.angles_file {
            Some(path) => set.with_angle_file(path)?,
            None => set.with_default_angles(),
        })
    }
}

/// Outcome of feeding one epoch's dev score to [`EarlyStopping`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Patience-based stopping on strict improvement of a score. Epochs are 1-based.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<f64>,
    best_epoch: usize,
    epoch: usize,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience: patience.max(1),
            best: None,
            best_epoch: 0,
            epoch: 0,
            stale: 0,
        }
    }

    pub fn observe(&mut self, score: f64) -> StopDecision {
        self.epoch += 1;
        if self.best.is_none_or(|b| score > b) {
            self.best = Some(score);
            self.best_epoch = self.epoch;
            self.stale = 0;
            return StopDecision::Improved;
        }
        self.stale += 1;
        if self.stale >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }
}

/// Lower median; `None` for an empty list.
pub fn lower_median(values: &[usize]) -> Option<usize> {
    let mut v = values.to_vec();
    v.sort_unstable();
    v.get(v.len().checked_sub(1)? / 2).copied()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_jaccard: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub model: EmotionModel,
    pub best_epoch: usize,
    pub stopped_epoch: usize,
    pub dev_report: EvaluationReport,
    pub history: Vec<EpochRecord>,
}

struct Prepared {
    seqs: Vec<TokenSequence>,
    labels: Vec<Vec<u8>>,
}

fn prepare(model: &EmotionModel, split: &DatasetSplit) -> Result<Prepared> {
    let n = model.emotions().len();
    let max = model.spec().encoder.max_len;
    let mut seqs = Vec::with_capacity(split.len());
    for e in &split.examples {
        if e.labels.len() != n {
            return Err(TrainError::Config(format!(
                "example {} has {} labels, expected {n}",
                e.id,
                e.labels.len()
            )));
        }
        let s = model.prepare(&e.text);
        if s.len() > max {
            return Err(ModelError::Text(crate::text::TextError::SequenceTooLong {
                len: s.len(),
                max,
            })
            .into());
        }
        seqs.push(s);
    }
    Ok(Prepared {
        seqs,
        labels: split.labels(),
    })
}

/// Probabilities for pre-tokenized sequences.
fn predict_seqs(model: &EmotionModel, seqs: &[TokenSequence]) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(seqs.len());
    for chunk in seqs.chunks(PREDICT_CHUNK) {
        let mut g = Graph::new();
        let p = model.params().bind(&mut g, false);
        for s in chunk {
            let f = model.forward(&mut g, &p, s)?;
            out.push(g.value(f.probs).data().to_vec());
        }
    }
    Ok(out)
}

/// Probabilities for every example of a split.
pub fn predict_split(model: &EmotionModel, split: &DatasetSplit) -> Result<Vec<Vec<f64>>> {
    let prepared = prepare(model, split)?;
    predict_seqs(model, &prepared.seqs)
}

pub fn evaluate_split(
    model: &EmotionModel,
    split: &DatasetSplit,
    threshold: f64,
) -> Result<EvaluationReport> {
    let probs = predict_split(model, split)?;
    Ok(evaluate(&split.labels(), &probs, threshold)?)
}

fn build_objective(
    config: &TrainConfig,
    set: &EmotionSet,
    train: &DatasetSplit,
) -> Result<Objective> {
    let labels = train.labels();
    let prior_for = |mode: PriorMode| -> std::result::Result<CorrelationPrior, String> {
        match mode {
            PriorMode::EmpiricalRho => empirical_correlation(&labels).map_err(|e| e.to_string()),
            PriorMode::WheelTheta => wheel_prior(set).map_err(|e| e.to_string()),
            PriorMode::ConstantOne => Ok(CorrelationPrior::constant_one(set.len())),
        }
    };
    Ok(Objective::new(config.loss, set.len(), prior_for)?)
}

fn fresh_model(
    config: &TrainConfig,
    set: &EmotionSet,
    train: &DatasetSplit,
    seed: u64,
) -> Result<EmotionModel> {
    let vocab = Vocabulary::build_with(&train.texts(), set, config.vocab_config());
    Ok(EmotionModel::new(config.model_spec(seed), set.clone(), vocab)?)
}

/// One pass over the training data in seeded random order; returns the mean batch loss.
fn run_epoch(
    model: &mut EmotionModel,
    opt: &mut Adam,
    objective: &Objective,
    data: &Prepared,
    batch_size: usize,
    rng: &mut ChaCha8Rng,
    epoch: usize,
) -> Result<f64> {
    let mut order: Vec<usize> = (0..data.seqs.len()).collect();
    order.shuffle(rng);
    let mut total = 0.0;
    let mut batches = 0;
    for batch in order.chunks(batch_size) {
        let mut g = Graph::new();
        let p = model.params().bind(&mut g, true);
        let mut losses = Vec::with_capacity(batch.len());
        for &i in batch {
            let out = model.forward(&mut g, &p, &data.seqs[i])?;
            let reps = out.emotion_reps.as_deref();
            losses.push(objective.example_loss(&mut g, &data.labels[i], out.probs, reps)?);
        }
        let stacked = g.stack(&losses)?;
        let loss = g.mean(stacked);
        let value = g.item(loss);
        if !value.is_finite() {
            return Err(TrainError::Divergence { epoch, loss: value });
        }
        g.backward(loss)?;
        let grads = model.params().gradients(&g, &p);
        if grads.iter().flatten().any(|v| !v.is_finite()) {
            return Err(TrainError::Divergence {
                epoch,
                loss: f64::NAN,
            });
        }
        opt.step(model.params_mut(), &grads);
        total += value;
        batches += 1;
    }
    Ok(total / batches.max(1) as f64)
}

fn shuffle_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_ba7c4e5)
}

/// Trains with early stopping on dev Jaccard and returns the best-epoch model.
pub fn train(
    config: &TrainConfig,
    train_split: &DatasetSplit,
    dev_split: &DatasetSplit,
    set: &EmotionSet,
    seed: u64,
) -> Result<TrainedModel> {
    config.validate()?;
    let mut model = fresh_model(config, set, train_split, seed)?;
    let objective = build_objective(config, set, train_split)?;
    let train_data = prepare(&model, train_split)?;
    let dev_data = prepare(&model, dev_split)?;
    let t = &config.trainer;
    let mut opt = Adam::new(t.learning_rate, model.params());
    let mut rng = shuffle_rng(seed);
    let mut stopper = EarlyStopping::new(t.patience);
    let mut best = model.params().clone();
    let mut best_report = None;
    let mut history = Vec::new();
    for epoch in 1..=t.max_epochs {
        let loss = run_epoch(
            &mut model,
            &mut opt,
            &objective,
            &train_data,
            t.batch_size,
            &mut rng,
            epoch,
        )?;
        let probs = predict_seqs(&model, &dev_data.seqs)?;
        let report = evaluate(&dev_data.labels, &probs, t.threshold)?;
        debug!(
            "seed {seed} epoch {epoch}: loss {loss:.5} dev jaccard {:.4}",
            report.jaccard
        );
        history.push(EpochRecord {
            epoch,
            train_loss: loss,
            dev_jaccard: Some(report.jaccard),
        });
        match stopper.observe(report.jaccard) {
            StopDecision::Improved => {
                best = model.params().clone();
                best_report = Some(report);
            }
            StopDecision::Continue => {}
            StopDecision::Stop => break,
        }
    }
    model.set_params(best)?;
    info!(
        "seed {seed}: best epoch {} of {}, dev jaccard {:.4}",
        stopper.best_epoch(),
        stopper.epoch(),
        stopper.best().unwrap_or(f64::NAN)
    );
    Ok(TrainedModel {
        model,
        best_epoch: stopper.best_epoch(),
        stopped_epoch: stopper.epoch(),
        dev_report: best_report.expect("at least one epoch runs"),
        history,
    })
}

/// Trains on `data` for exactly the lower median of `epochs`, without early stopping.
pub fn retrain_full(
    config: &TrainConfig,
    epochs: &[usize],
    data: &DatasetSplit,
    set: &EmotionSet,
    seed: u64,
) -> Result<(EmotionModel, Vec<EpochRecord>)> {
    config.validate()?;
    let count = lower_median(epochs)
        .ok_or_else(|| TrainError::Config("retraining needs at least one epoch count".into()))?;
    let mut model = fresh_model(config, set, data, seed)?;
    let objective = build_objective(config, set, data)?;
    let prepared = prepare(&model, data)?;
    let t = &config.trainer;
    let mut opt = Adam::new(t.learning_rate, model.params());
    let mut rng = shuffle_rng(seed);
    let mut history = Vec::with_capacity(count);
    for epoch in 1..=count {
        let loss = run_epoch(
            &mut model,
            &mut opt,
            &objective,
            &prepared,
            t.batch_size,
            &mut rng,
            epoch,
        )?;
        history.push(EpochRecord {
            epoch,
            train_loss: loss,
            dev_jaccard: None,
        });
    }
    Ok((model, history))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Sample mean and unbiased standard deviation (0 for a single value).
    pub fn of(values: &[f64]) -> Self {
        let m = values.len() as f64;
        let mean = values.iter().sum::<f64>() / m;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
        };
        Self { mean, std }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub jaccard: MeanStd,
    pub micro_f1: MeanStd,
    pub macro_f1: MeanStd,
    pub per_emotion_f1: Vec<MeanStd>,
}

impl MetricSummary {
    pub fn of(reports: &[&EvaluationReport]) -> Self {
        let col = |f: &dyn Fn(&EvaluationReport) -> f64| {
            MeanStd::of(&reports.iter().map(|r| f(r)).collect::<Vec<_>>())
        };
        let n = reports.first().map_or(0, |r| r.per_emotion_f1.len());
        Self {
            jaccard: col(&|r| r.jaccard),
            micro_f1: col(&|r| r.micro_f1),
            macro_f1: col(&|r| r.macro_f1),
            per_emotion_f1: (0..n).map(|j| col(&|r| r.per_emotion_f1[j])).collect(),
        }
    }
}

/// Outcome of one seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub best_epoch: usize,
    pub stopped_epoch: usize,
    pub dev: EvaluationReport,
    pub test: EvaluationReport,
    /// Pearson correlation of dev predicted probabilities, row-major `n x n`.
    pub dev_prediction_correlation: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seeds: Vec<SeedResult>,
    /// Epochs used when retraining on train+dev, if enabled.
    pub retrain_epochs: Option<usize>,
    pub dev: MetricSummary,
    pub test: MetricSummary,
}

impl RunResult {
    pub fn from_seeds(seeds: Vec<SeedResult>, retrain_epochs: Option<usize>) -> Self {
        let dev: Vec<_> = seeds.iter().map(|s| &s.dev).collect();
        let test: Vec<_> = seeds.iter().map(|s| &s.test).collect();
        Self {
            dev: MetricSummary::of(&dev),
            test: MetricSummary::of(&test),
            seeds,
            retrain_epochs,
        }
    }

    /// Mean over seeds of the row-major dev prediction correlation.
    pub fn mean_prediction_correlation(&self) -> Vec<f64> {
        let len = self.seeds[0].dev_prediction_correlation.len();
        let mut acc = vec![0.0; len];
        for s in &self.seeds {
            for (a, v) in acc.iter_mut().zip(&s.dev_prediction_correlation) {
                *a += v;
            }
        }
        acc.iter().map(|a| a / self.seeds.len() as f64).collect()
    }
}

/// Frobenius distance between two equally sized matrices.
pub fn frobenius_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// First phase of a seed: early-stopped training plus dev diagnostics.
#[derive(Clone, Debug)]
pub struct SeedTraining {
    pub trained: TrainedModel,
    pub dev_prediction_correlation: Vec<f64>,
}

pub fn train_seed(
    config: &TrainConfig,
    data: &Dataset,
    set: &EmotionSet,
    seed: u64,
) -> Result<SeedTraining> {
    let trained = train(config, &data.train, &data.dev, set, seed)?;
    let probs = predict_split(&trained.model, &data.dev)?;
    Ok(SeedTraining {
        dev_prediction_correlation: pearson_matrix(&probs),
        trained,
    })
}

/// Second phase of a seed: the model used for testing and its test report.
pub fn finish_seed(
    config: &TrainConfig,
    data: &Dataset,
    set: &EmotionSet,
    training: SeedTraining,
    seed: u64,
    retrain_epochs: Option<usize>,
) -> Result<(SeedResult, EmotionModel)> {
    let model = match retrain_epochs {
        Some(epochs) => {
            let full = data.train.concat(&data.dev, SplitName::Train);
            retrain_full(config, &[epochs], &full, set, seed)?.0
        }
        None => training.trained.model,
    };
    let test = evaluate_split(&model, &data.test, config.trainer.threshold)?;
    Ok((
        SeedResult {
            seed,
            best_epoch: training.trained.best_epoch,
            stopped_epoch: training.trained.stopped_epoch,
            dev: training.trained.dev_report,
            test,
            dev_prediction_correlation: training.dev_prediction_correlation,
        },
        model,
    ))
}

/// Runs every configured seed on up to `threads` workers. Returns the
/// aggregated result and each seed's final model.
pub fn run_seeds(
    config: &TrainConfig,
    data: &Dataset,
    set: &EmotionSet,
    threads: usize,
) -> Result<(RunResult, Vec<EmotionModel>)> {
    config.validate()?;
    let seeds = &config.trainer.seeds;
    let phase1: Vec<SeedTraining> = map_parallel(seeds, threads, |_, &s| {
        train_seed(config, data, set, s)
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let best: Vec<usize> = phase1.iter().map(|t| t.trained.best_epoch).collect();
    let retrain = if config.trainer.retrain {
        lower_median(&best)
    } else {
        None
    };
    let jobs: Vec<(u64, SeedTraining)> = seeds.iter().copied().zip(phase1).collect();
    let finished: Vec<(SeedResult, EmotionModel)> =
        map_parallel(&jobs, threads, |_, (s, t)| {
            finish_seed(config, data, set, t.clone(), *s, retrain)
        })
        .into_iter()
        .collect::<Result<_>>()?;
    let (results, models): (Vec<_>, Vec<_>) = finished.into_iter().unzip();
    Ok((RunResult::from_seeds(results, retrain), models))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn early_stopping_trace() {
        let mut s = EarlyStopping::new(5);
        let trace = [0.50, 0.51, 0.51, 0.50, 0.50, 0.50, 0.50, 0.50];
        let mut stopped = None;
        for (i, &v) in trace.iter().enumerate() {
            if s.observe(v) == StopDecision::Stop {
                stopped = Some(i + 1);
                break;
            }
        }
        assert_eq!(stopped, Some(7));
        assert_eq!(s.best_epoch(), 2);
    }

    #[test]
    fn improving_never_stops() {
        let mut s = EarlyStopping::new(1);
        for i in 0..50 {
            assert_eq!(s.observe(i as f64), StopDecision::Improved);
        }
    }

    #[test]
    fn median_examples() {
        assert_eq!(lower_median(&[4, 6, 5]), Some(5));
        assert_eq!(lower_median(&[4]), Some(4));
        assert_eq!(lower_median(&[3, 9]), Some(3));
        assert_eq!(lower_median(&[]), None);
    }

    #[test]
    fn mean_std_unbiased() {
        let m = MeanStd::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean, 2.5);
        assert!((m.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::default();
        c.validate().unwrap();
        c.trainer.patience = 0;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::default();
        c.model.kind = ModelKind::Memo;
        c.loss.local_group = crate::losses::LocalGroup::Intra;
        c.loss.family = crate::losses::LossFamily::CosineRepresentations;
        assert!(c.validate().is_err());
        c.trainer.seeds.clear();
        assert!(c.validate().is_err());
    }

    #[test]
    fn config_toml_round_trip() {
        let text = r#"
            [model]
            kind = "memo"
            [loss]
            local_group = "intra"
            family = "exp"
            [encoder]
            dim = 16
            [trainer]
            seeds = [1, 2]
            patience = 3
        "#;
        let c = TrainConfig::from_toml(text).unwrap();
        assert_eq!(c.model.kind, ModelKind::Memo);
        assert_eq!(c.encoder.dim, 16);
        assert_eq!(c.trainer.seeds, vec![1, 2]);
        assert_eq!(TrainConfig::from_toml(&c.to_toml()).unwrap(), c);
        assert!(TrainConfig::from_toml("[trainer]\nbogus = 1").is_err());
    }
}
