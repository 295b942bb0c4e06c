//! Ablation grids over model and loss axes, significance tests between
//! runs, and deterministic CSV/JSON reports.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use log::{info, warn};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::data::Dataset;
use crate::labels::{EmotionSet, PriorMode, WeightMode};
use crate::losses::{GlobalPrior, LocalGroup, LossConfig, LossFamily};
use crate::model::{EncoderConfig, ModelKind};
use crate::pool::map_parallel;
use crate::train::{
    finish_seed, lower_median, train_seed, MeanStd, MetricSummary, ModelSection, RunResult,
    SeedTraining, TrainConfig, TrainError, TrainerConfig,
};

pub const SKIP_COSINE: &str = "skipped: cosine family requires per-emotion representations";
pub const SKIP_GLOBAL: &str = "skipped: global loss requires per-emotion representations";

#[derive(Debug, Error)]
pub enum GridError {
    #[error("invalid grid: {0}")]
    Spec(String),
    #[error("need at least 2 seeds per side, got {a} and {b}")]
    InsufficientSeeds { a: usize, b: usize },
    #[error("nothing to report")]
    EmptyReport,
    #[error("cannot write report {path}: {message}")]
    Write { path: String, message: String },
}

/// One grid row: a model paired with a loss configuration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridCell {
    pub model: ModelKind,
    pub loss: LossConfig,
}

impl GridCell {
    pub fn new(
        model: ModelKind,
        group: LocalGroup,
        weights: PriorMode,
        family: LossFamily,
        global: GlobalPrior,
    ) -> Self {
        let mut loss = LossConfig {
            local_group: group,
            family,
            global_prior: global,
            ..LossConfig::default()
        };
        set_weights(&mut loss, weights);
        Self { model, loss }
    }

    pub fn weights(&self) -> PriorMode {
        match self.loss.weight_mode {
            WeightMode::ConstantOne => PriorMode::ConstantOne,
            WeightMode::FromPrior => self.loss.weight_prior,
        }
    }

    /// Stable identifier such as `demux/intra/rho/exp/G-none`.
    pub fn fingerprint(&self) -> String {
        let g = &self.loss;
        let group = match g.local_group {
            LocalGroup::None => "none".to_string(),
            other => other.to_string(),
        };
        let global = match g.global_prior {
            GlobalPrior::None => "none".to_string(),
            other => other.to_string(),
        };
        format!(
            "{}/{group}/{}/{}/G-{global}",
            self.model,
            self.weights(),
            g.family
        )
    }

    /// Reason the cell cannot run, if any.
    pub fn skip_reason(&self) -> Option<&'static str> {
        if self.model != ModelKind::Memo {
            return None;
        }
        if self.loss.local_group != LocalGroup::None
            && self.loss.family == LossFamily::CosineRepresentations
        {
            return Some(SKIP_COSINE);
        }
        if self.loss.global_prior != GlobalPrior::None {
            return Some(SKIP_GLOBAL);
        }
        None
    }

    pub fn config(&self, base: &TrainConfig) -> TrainConfig {
        let mut cfg = base.clone();
        cfg.model.kind = self.model;
        cfg.loss = LossConfig {
            alpha: base.loss.alpha,
            beta: base.loss.beta,
            ..self.loss
        };
        cfg
    }
}

impl fmt::Display for GridCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.fingerprint())
    }
}

fn set_weights(loss: &mut LossConfig, weights: PriorMode) {
    match weights {
        PriorMode::ConstantOne => loss.weight_mode = WeightMode::ConstantOne,
        prior => {
            loss.weight_mode = WeightMode::FromPrior;
            loss.weight_prior = prior;
        }
    }
}

/// Axes expanded Cartesian-style, in the listed order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridAxes {
    pub models: Vec<ModelKind>,
    pub local_groups: Vec<LocalGroup>,
    pub weights: Vec<PriorMode>,
    pub families: Vec<LossFamily>,
    pub global_priors: Vec<GlobalPrior>,
}

impl Default for GridAxes {
    fn default() -> Self {
        Self {
            models: vec![ModelKind::Demux, ModelKind::Memo],
            local_groups: vec![
                LocalGroup::None,
                LocalGroup::Inter,
                LocalGroup::Intra,
                LocalGroup::Both,
            ],
            weights: vec![
                PriorMode::ConstantOne,
                PriorMode::EmpiricalRho,
                PriorMode::WheelTheta,
            ],
            families: vec![LossFamily::ExpPredictions, LossFamily::CosineRepresentations],
            global_priors: vec![GlobalPrior::None, GlobalPrior::EmpiricalRho, GlobalPrior::WheelTheta],
        }
    }
}

impl GridAxes {
    /// Cartesian product. Weight and family axes collapse when there is no
    /// local loss, so duplicate cells are dropped.
    pub fn expand(&self) -> Vec<GridCell> {
        let mut seen = HashSet::new();
        let mut cells = Vec::new();
        for &model in &self.models {
            for &group in &self.local_groups {
                for &weights in &self.weights {
                    for &family in &self.families {
                        for &global in &self.global_priors {
                            let cell = if group == LocalGroup::None {
                                GridCell::new(
                                    model,
                                    group,
                                    PriorMode::ConstantOne,
                                    LossFamily::ExpPredictions,
                                    global,
                                )
                            } else {
                                GridCell::new(model, group, weights, family, global)
                            };
                            if seen.insert(cell.fingerprint()) {
                                cells.push(cell);
                            }
                        }
                    }
                }
            }
        }
        cells
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridPreset {
    /// 24 Demux rows: baseline, global-only, local exp and cos blocks, combined.
    DemuxAblation,
    /// 10 MEmo rows: baseline and the local exp block.
    MemoAblation,
}

impl GridPreset {
    pub fn cells(self) -> Vec<GridCell> {
        match self {
            GridPreset::DemuxAblation => demux_ablation_grid(),
            GridPreset::MemoAblation => memo_ablation_grid(),
        }
    }
}

const GROUPS: [LocalGroup; 3] = [LocalGroup::Inter, LocalGroup::Intra, LocalGroup::Both];
const WEIGHTS: [PriorMode; 3] = [
    PriorMode::ConstantOne,
    PriorMode::EmpiricalRho,
    PriorMode::WheelTheta,
];

fn local_block(model: ModelKind, family: LossFamily) -> Vec<GridCell> {
    WEIGHTS
        .iter()
        .flat_map(|&w| {
            GROUPS
                .iter()
                .map(move |&g| GridCell::new(model, g, w, family, GlobalPrior::None))
        })
        .collect()
}

/// Baseline, global-only rows, exponential and cosine local rows, then the
/// combined local+global rows.
pub fn demux_ablation_grid() -> Vec<GridCell> {
    use GlobalPrior as G;
    use LocalGroup as L;
    use LossFamily as F;
    use PriorMode as P;
    let d = ModelKind::Demux;
    let mut cells = vec![
        GridCell::new(d, L::None, P::ConstantOne, F::ExpPredictions, G::None),
        GridCell::new(d, L::None, P::ConstantOne, F::ExpPredictions, G::EmpiricalRho),
        GridCell::new(d, L::None, P::ConstantOne, F::ExpPredictions, G::WheelTheta),
    ];
    cells.extend(local_block(d, F::ExpPredictions));
    cells.extend(local_block(d, F::CosineRepresentations));
    cells.extend([
        GridCell::new(d, L::Intra, P::ConstantOne, F::ExpPredictions, G::EmpiricalRho),
        GridCell::new(d, L::Intra, P::EmpiricalRho, F::ExpPredictions, G::EmpiricalRho),
        GridCell::new(d, L::Both, P::WheelTheta, F::ExpPredictions, G::EmpiricalRho),
    ]);
    cells
}

pub fn memo_ablation_grid() -> Vec<GridCell> {
    let m = ModelKind::Memo;
    let mut cells = vec![GridCell::new(
        m,
        LocalGroup::None,
        PriorMode::ConstantOne,
        LossFamily::ExpPredictions,
        GlobalPrior::None,
    )];
    cells.extend(local_block(m, LossFamily::ExpPredictions));
    cells
}

/// A sweep file: a `[grid]` section plus the base training sections.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub grid: GridFileAxes,
    pub model: ModelSection,
    pub loss: LossConfig,
    pub encoder: EncoderConfig,
    pub trainer: TrainerConfig,
}

/// `[grid]` section: a preset, or list-valued axes (unset axes take defaults).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridFileAxes {
    pub preset: Option<GridPreset>,
    pub models: Option<Vec<ModelKind>>,
    pub local_groups: Option<Vec<LocalGroup>>,
    pub weights: Option<Vec<PriorMode>>,
    pub families: Option<Vec<LossFamily>>,
    pub global_priors: Option<Vec<GlobalPrior>>,
}

impl GridSpec {
    pub fn from_toml(text: &str) -> Result<Self, GridError> {
        toml::from_str(text).map_err(|e| GridError::Spec(e.to_string()))
    }

    pub fn base_config(&self) -> TrainConfig {
        TrainConfig {
            model: self.model.clone(),
            loss: self.loss,
            encoder: self.encoder,
            trainer: self.trainer.clone(),
        }
    }

    pub fn cells(&self) -> Result<Vec<GridCell>, GridError> {
        let g = &self.grid;
        let has_axes = g.models.is_some()
            || g.local_groups.is_some()
            || g.weights.is_some()
            || g.families.is_some()
            || g.global_priors.is_some();
        if let Some(preset) = g.preset {
            if has_axes {
                return Err(GridError::Spec("a preset cannot be combined with axes".into()));
            }
            return Ok(preset.cells());
        }
        let d = GridAxes::default();
        let axes = GridAxes {
            models: g.models.clone().unwrap_or(d.models),
            local_groups: g.local_groups.clone().unwrap_or(d.local_groups),
            weights: g.weights.clone().unwrap_or(d.weights),
            families: g.families.clone().unwrap_or(d.families),
            global_priors: g.global_priors.clone().unwrap_or(d.global_priors),
        };
        let cells = axes.expand();
        if cells.is_empty() {
            return Err(GridError::Spec("grid has no cells".into()));
        }
        Ok(cells)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum CellStatus {
    Done(RunResult),
    Skipped(String),
    Failed { message: String, diverged: bool },
}

impl CellStatus {
    pub fn label(&self) -> String {
        match self {
            CellStatus::Done(_) => "ok".to_string(),
            CellStatus::Skipped(reason) => reason.clone(),
            CellStatus::Failed { message, .. } => format!("failed: {message}"),
        }
    }

    pub fn result(&self) -> Option<&RunResult> {
        match self {
            CellStatus::Done(r) => Some(r),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellResult {
    pub cell: GridCell,
    pub status: CellStatus,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridOutcome {
    pub cells: Vec<CellResult>,
    /// Early-stopped training runs performed (seeds times runnable cells).
    pub training_runs: usize,
    /// Additional train+dev retraining runs.
    pub retrain_runs: usize,
}

impl GridOutcome {
    pub fn any_diverged(&self) -> bool {
        self.cells
            .iter()
            .any(|c| matches!(c.status, CellStatus::Failed { diverged: true, .. }))
    }
}

fn failure(e: &TrainError) -> CellStatus {
    CellStatus::Failed {
        message: e.to_string(),
        diverged: matches!(e, TrainError::Divergence { .. }),
    }
}

/// Runs every cell for every seed of `base` on up to `threads` workers.
/// Invalid cells are skipped and failing cells are reported, never aborting the sweep.
pub fn run_grid(
    cells: &[GridCell],
    base: &TrainConfig,
    data: &Dataset,
    set: &EmotionSet,
    threads: usize,
) -> GridOutcome {
    let seeds = &base.trainer.seeds;
    let mut status: Vec<Option<CellStatus>> = vec![None; cells.len()];
    let configs: Vec<TrainConfig> = cells.iter().map(|c| c.config(base)).collect();
    for (i, cell) in cells.iter().enumerate() {
        if let Some(reason) = cell.skip_reason() {
            warn!("{cell}: {reason}");
            status[i] = Some(CellStatus::Skipped(reason.to_string()));
        } else if let Err(e) = configs[i].validate() {
            status[i] = Some(failure(&e));
        }
    }
    let jobs: Vec<(usize, u64)> = (0..cells.len())
        .filter(|&i| status[i].is_none())
        .flat_map(|i| seeds.iter().map(move |&s| (i, s)))
        .collect();
    info!("grid: {} cells, {} training runs", cells.len(), jobs.len());
    let phase1 = map_parallel(&jobs, threads, |_, &(i, s)| {
        train_seed(&configs[i], data, set, s)
    });
    let training_runs = jobs.len();

    let mut per_cell: Vec<Vec<(u64, SeedTraining)>> = vec![Vec::new(); cells.len()];
    for ((i, s), r) in jobs.iter().zip(phase1) {
        match r {
            Ok(t) => per_cell[*i].push((*s, t)),
            Err(e) => {
                if status[*i].is_none() {
                    warn!("{}: {e}", cells[*i]);
                    status[*i] = Some(failure(&e));
                }
            }
        }
    }
    let retrain: Vec<Option<usize>> = (0..cells.len())
        .map(|i| {
            if !configs[i].trainer.retrain || per_cell[i].is_empty() {
                return None;
            }
            let best: Vec<usize> = per_cell[i].iter().map(|(_, t)| t.trained.best_epoch).collect();
            lower_median(&best)
        })
        .collect();
    let jobs2: Vec<(usize, u64, SeedTraining)> = per_cell
        .into_iter()
        .enumerate()
        .filter(|(i, _)| status[*i].is_none())
        .flat_map(|(i, v)| v.into_iter().map(move |(s, t)| (i, s, t)))
        .collect();
    let retrain_runs = jobs2.iter().filter(|(i, _, _)| retrain[*i].is_some()).count();
    let phase2 = map_parallel(&jobs2, threads, |_, (i, s, t)| {
        finish_seed(&configs[*i], data, set, t.clone(), *s, retrain[*i]).map(|(r, _)| r)
    });
    let mut finished: Vec<Vec<_>> = vec![Vec::new(); cells.len()];
    for ((i, _, _), r) in jobs2.iter().zip(phase2) {
        match r {
            Ok(seed) => finished[*i].push(seed),
            Err(e) => {
                if status[*i].is_none() {
                    status[*i] = Some(failure(&e));
                }
            }
        }
    }
    let results = cells
        .iter()
        .enumerate()
        .map(|(i, cell)| {
            let status = status[i].take().unwrap_or_else(|| {
                CellStatus::Done(RunResult::from_seeds(
                    std::mem::take(&mut finished[i]),
                    retrain[i],
                ))
            });
            CellResult { cell: *cell, status }
        })
        .collect();
    GridOutcome {
        cells: results,
        training_runs,
        retrain_runs,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Dev,
    Test,
}

/// Two-sample pooled-variance t-test of one metric.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricComparison {
    pub metric: String,
    pub mean_a: f64,
    pub mean_b: f64,
    pub mean_difference: f64,
    pub t: f64,
    pub p_value: f64,
    /// Both samples have zero variance.
    pub degenerate: bool,
}

/// Pooled-variance t statistic and two-sided p-value.
pub fn pooled_t_test(a: &[f64], b: &[f64]) -> Result<MetricComparison, GridError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(GridError::InsufficientSeeds {
            a: a.len(),
            b: b.len(),
        });
    }
    let (sa, sb) = (MeanStd::of(a), MeanStd::of(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let df = na + nb - 2.0;
    let pooled = ((na - 1.0) * sa.std.powi(2) + (nb - 1.0) * sb.std.powi(2)) / df;
    let se = (pooled * (1.0 / na + 1.0 / nb)).sqrt();
    let diff = sa.mean - sb.mean;
    let (t, p, degenerate) = if se == 0.0 {
        if diff == 0.0 {
            (0.0, 1.0, true)
        } else {
            (diff.signum() * f64::INFINITY, 0.0, true)
        }
    } else {
        let t = diff / se;
        let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
        (t, (2.0 * dist.sf(t.abs())).min(1.0), false)
    };
    Ok(MetricComparison {
        metric: String::new(),
        mean_a: sa.mean,
        mean_b: sb.mean,
        mean_difference: diff,
        t,
        p_value: p,
        degenerate,
    })
}

/// Per-metric comparison of two runs on one split.
pub fn summarize(
    a: &RunResult,
    b: &RunResult,
    split: Split,
) -> Result<Vec<MetricComparison>, GridError> {
    type Getter = fn(&crate::metrics::EvaluationReport) -> f64;
    let metrics: [(&str, Getter); 3] = [
        ("jaccard", |r| r.jaccard),
        ("micro_f1", |r| r.micro_f1),
        ("macro_f1", |r| r.macro_f1),
    ];
    metrics
        .iter()
        .map(|(name, get)| {
            let pick = |r: &RunResult| -> Vec<f64> {
                r.seeds
                    .iter()
                    .map(|s| match split {
                        Split::Dev => get(&s.dev),
                        Split::Test => get(&s.test),
                    })
                    .collect()
            };
            let mut c = pooled_t_test(&pick(a), &pick(b))?;
            c.metric = name.to_string();
            Ok(c)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Serialize)]
struct MetricCells {
    mean: Option<f64>,
    std: Option<f64>,
}

impl From<Option<MeanStd>> for MetricCells {
    fn from(m: Option<MeanStd>) -> Self {
        Self {
            mean: m.map(|m| m.mean),
            std: m.map(|m| m.std),
        }
    }
}

#[derive(Serialize)]
struct EmotionCells {
    emotion: String,
    dev_f1_mean: Option<f64>,
    test_f1_mean: Option<f64>,
}

#[derive(Serialize)]
struct ReportRow {
    cell: String,
    model: String,
    local_group: String,
    weights: String,
    family: String,
    global_prior: String,
    status: String,
    seeds: usize,
    retrain_epochs: Option<usize>,
    dev_jaccard: MetricCells,
    dev_micro_f1: MetricCells,
    dev_macro_f1: MetricCells,
    test_jaccard: MetricCells,
    test_micro_f1: MetricCells,
    test_macro_f1: MetricCells,
    per_emotion: Vec<EmotionCells>,
}

fn report_rows(cells: &[CellResult], set: &EmotionSet) -> Vec<ReportRow> {
    cells
        .iter()
        .map(|c| {
            let r = c.status.result();
            let pick = |f: fn(&MetricSummary) -> MeanStd, test: bool| {
                MetricCells::from(r.map(|r| f(if test { &r.test } else { &r.dev })))
            };
            let per_emotion = set
                .names()
                .iter()
                .enumerate()
                .map(|(j, name)| EmotionCells {
                    emotion: name.clone(),
                    dev_f1_mean: r.map(|r| r.dev.per_emotion_f1[j].mean),
                    test_f1_mean: r.map(|r| r.test.per_emotion_f1[j].mean),
                })
                .collect();
            ReportRow {
                cell: c.cell.fingerprint(),
                model: c.cell.model.to_string(),
                local_group: c.cell.loss.local_group.to_string(),
                weights: c.cell.weights().to_string(),
                family: c.cell.loss.family.to_string(),
                global_prior: c.cell.loss.global_prior.to_string(),
                status: c.status.label(),
                seeds: r.map_or(0, |r| r.seeds.len()),
                retrain_epochs: r.and_then(|r| r.retrain_epochs),
                dev_jaccard: pick(|s| s.jaccard, false),
                dev_micro_f1: pick(|s| s.micro_f1, false),
                dev_macro_f1: pick(|s| s.macro_f1, false),
                test_jaccard: pick(|s| s.jaccard, true),
                test_micro_f1: pick(|s| s.micro_f1, true),
                test_macro_f1: pick(|s| s.macro_f1, true),
                per_emotion,
            }
        })
        .collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!("{v:.6}"))
}

/// Renders one row per cell, in cell order.
pub fn render_report(
    cells: &[CellResult],
    set: &EmotionSet,
    format: ReportFormat,
) -> Result<String, GridError> {
    if cells.is_empty() {
        return Err(GridError::EmptyReport);
    }
    let rows = report_rows(cells, set);
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(&rows).expect("rows serialize");
            s.push('\n');
            Ok(s)
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let mut header: Vec<String> = [
                "cell",
                "model",
                "local_group",
                "weights",
                "family",
                "global_prior",
                "status",
                "seeds",
                "retrain_epochs",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect();
            for split in ["dev", "test"] {
                for m in ["jaccard", "micro_f1", "macro_f1"] {
                    header.push(format!("{split}_{m}_mean"));
                    header.push(format!("{split}_{m}_std"));
                }
            }
            for split in ["dev", "test"] {
                for name in set.names() {
                    header.push(format!("{split}_f1_{name}"));
                }
            }
            let csv_err = |e: csv::Error| GridError::Write {
                path: "<memory>".into(),
                message: e.to_string(),
            };
            w.write_record(&header).map_err(csv_err)?;
            for r in rows {
                let mut rec = vec![
                    r.cell,
                    r.model,
                    r.local_group,
                    r.weights,
                    r.family,
                    r.global_prior,
                    r.status,
                    r.seeds.to_string(),
                    r.retrain_epochs.map_or_else(String::new, |e| e.to_string()),
                ];
                for m in [
                    &r.dev_jaccard,
                    &r.dev_micro_f1,
                    &r.dev_macro_f1,
                    &r.test_jaccard,
                    &r.test_micro_f1,
                    &r.test_macro_f1,
                ] {
                    rec.push(fmt_opt(m.mean));
                    rec.push(fmt_opt(m.std));
                }
                rec.extend(r.per_emotion.iter().map(|e| fmt_opt(e.dev_f1_mean)));
                rec.extend(r.per_emotion.iter().map(|e| fmt_opt(e.test_f1_mean)));
                w.write_record(&rec).map_err(csv_err)?;
            }
            let bytes = w.into_inner().map_err(|e| GridError::Write {
                path: "<memory>".into(),
                message: e.to_string(),
            })?;
            Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
        }
    }
}

pub fn emit_report(
    cells: &[CellResult],
    set: &EmotionSet,
    format: ReportFormat,
    path: &Path,
) -> Result<(), GridError> {
    let text = render_report(cells, set, format)?;
    std::fs::write(path, text).map_err(|e| GridError::Write {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}
