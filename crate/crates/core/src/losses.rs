//! Training objectives as graph nodes.
//!
//! * binary cross-entropy over per-emotion probabilities,
//! * the global loss pulling pairwise cosine similarities of per-emotion
//!   representations toward a fixed prior,
//! * local losses over the present (`P`) / absent (`N`) split of the gold
//!   labels, in `inter`, `intra` and `both` variants, with either the
//!   exponential family on predictions or the cosine family on
//!   representations,
//! * the mixture `(1 - alpha) * bce + alpha * local + beta * global`.
//!
//! A local term whose pair set is empty is 0. `intra` halves the sum of its
//! N-part and P-part even when one of them is empty. `both` averages `inter`
//! and `intra` only when both are defined, and otherwise equals whichever one
//! is defined.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Graph, Var};
use crate::labels::{CorrelationPrior, PairWeights, PriorMode, WeightMode};
use crate::tensor::{Tensor, TensorError};

/// BCE clamps probabilities into `[PROB_CLAMP, 1 - PROB_CLAMP]`.
pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("length mismatch: {labels} labels vs {outputs} outputs")]
    LengthMismatch { labels: usize, outputs: usize },
    #[error("invalid loss configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T, E = LossError> = std::result::Result<T, E>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LocalGroup {
    #[default]
    None,
    Inter,
    Intra,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LossFamily {
    /// `S = e^(r_i - r_j)`, `D = e^(r_i + r_j)` on output probabilities.
    #[default]
    #[serde(alias = "exp")]
    ExpPredictions,
    /// `S = cossim`, `D = -cossim` on per-emotion representations.
    #[serde(alias = "cos", alias = "cosine")]
    CosineRepresentations,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GlobalPrior {
    #[default]
    None,
    #[serde(alias = "rho")]
    EmpiricalRho,
    #[serde(alias = "theta")]
    WheelTheta,
}

impl GlobalPrior {
    pub fn prior_mode(self) -> Option<PriorMode> {
        match self {
            GlobalPrior::None => None,
            GlobalPrior::EmpiricalRho => Some(PriorMode::EmpiricalRho),
            GlobalPrior::WheelTheta => Some(PriorMode::WheelTheta),
        }
    }
}

impl fmt::Display for LocalGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LocalGroup::None => "-",
            LocalGroup::Inter => "inter",
            LocalGroup::Intra => "intra",
            LocalGroup::Both => "both",
        })
    }
}

impl fmt::Display for LossFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossFamily::ExpPredictions => "exp",
            LossFamily::CosineRepresentations => "cos",
        })
    }
}

impl fmt::Display for GlobalPrior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GlobalPrior::None => "-",
            GlobalPrior::EmpiricalRho => "rho",
            GlobalPrior::WheelTheta => "theta",
        })
    }
}

fn default_alpha() -> f64 {
    0.2
}

fn default_beta() -> f64 {
    0.1
}

fn default_weight_prior() -> PriorMode {
    PriorMode::EmpiricalRho
}

fn default_weight_mode() -> WeightMode {
    WeightMode::ConstantOne
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub local_group: LocalGroup,
    pub family: LossFamily,
    #[serde(default = "default_weight_mode")]
    pub weight_mode: WeightMode,
    /// Prior used for `f`, `f'` when `weight_mode` is `from-prior`.
    #[serde(default = "default_weight_prior")]
    pub weight_prior: PriorMode,
    pub global_prior: GlobalPrior,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            local_group: LocalGroup::None,
            family: LossFamily::ExpPredictions,
            weight_mode: default_weight_mode(),
            weight_prior: default_weight_prior(),
            global_prior: GlobalPrior::None,
            alpha: default_alpha(),
            beta: default_beta(),
        }
    }
}

impl LossConfig {
    /// Whether this configuration needs one representation vector per emotion.
    pub fn needs_representations(&self) -> bool {
        (self.local_group != LocalGroup::None && self.family == LossFamily::CosineRepresentations)
            || self.global_prior != GlobalPrior::None
    }

    /// Checks ranges, and that representation-based terms are only requested
    /// when the model provides per-emotion representations.
    pub fn validate(&self, has_representations: bool) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(LossError::Config(format!("alpha {} is outside [0, 1]", self.alpha)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(LossError::Config(format!("beta {} must be >= 0", self.beta)));
        }
        if self.weight_prior == PriorMode::ConstantOne {
            return Err(LossError::Config(
                "weight prior must be empirical-rho or wheel-theta".into(),
            ));
        }
        if !has_representations {
            if self.local_group != LocalGroup::None
                && self.family == LossFamily::CosineRepresentations
            {
                return Err(LossError::Config(
                    "cosine family requires per-emotion representations".into(),
                ));
            }
            if self.global_prior != GlobalPrior::None {
                return Err(LossError::Config(
                    "global loss requires per-emotion representations".into(),
                ));
            }
        }
        Ok(())
    }

    /// Short label such as `intra rho exp | G theta`.
    pub fn label(&self) -> String {
        let local = match self.local_group {
            LocalGroup::None => "-".to_string(),
            g => {
                let w = match self.weight_mode {
                    WeightMode::ConstantOne => "1".to_string(),
                    WeightMode::FromPrior => self.weight_prior.to_string(),
                };
                format!("{g} {w} {}", self.family)
            }
        };
        format!("{local} | G {}", self.global_prior)
    }
}

/// Indices of present and absent emotions of a gold label vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelPartition {
    pub present: Vec<usize>,
    pub absent: Vec<usize>,
}

impl LabelPartition {
    pub fn from_labels(y: &[u8]) -> Self {
        let (present, absent) = (0..y.len()).partition(|&i| y[i] == 1);
        Self { present, absent }
    }
}

/// What a local loss is computed on.
#[derive(Clone, Copy, Debug)]
pub enum LocalTarget<'a> {
    /// Probability vector of length n.
    Predictions(Var),
    /// One vector per emotion.
    Representations(&'a [Var]),
}

fn check_len(labels: usize, outputs: usize) -> Result<()> {
    if labels != outputs {
        return Err(LossError::LengthMismatch { labels, outputs });
    }
    Ok(())
}

/// Mean over emotions of `-[y ln p + (1 - y) ln(1 - p)]`, with `p` clamped.
pub fn bce_loss(g: &mut Graph, y: &[u8], probs: Var) -> Result<Var> {
    check_len(y.len(), g.value(probs).len())?;
    let shape = g.shape(probs).to_vec();
    let yt = Tensor::new(shape.clone(), y.iter().map(|&v| f64::from(v)).collect())?;
    let nt = Tensor::new(shape, y.iter().map(|&v| 1.0 - f64::from(v)).collect())?;
    let p = g.clamp(probs, PROB_CLAMP, 1.0 - PROB_CLAMP);
    let ln_p = g.ln(p);
    let neg_p = g.neg(p);
    let q = g.offset(neg_p, 1.0);
    let ln_q = g.ln(q);
    let yv = g.constant(yt);
    let nv = g.constant(nt);
    let a = g.mul(yv, ln_p)?;
    let b = g.mul(nv, ln_q)?;
    let s = g.add(a, b)?;
    let m = g.mean(s);
    Ok(g.neg(m))
}

/// `1/(n^2 - n) * sum_{i != j} (cossim(h_i, h_j) - c_ij)^2`.
pub fn global_cosine_loss(g: &mut Graph, reps: &[Var], prior: &CorrelationPrior) -> Result<Var> {
    let n = reps.len();
    check_len(prior.len(), n)?;
    if n < 2 {
        return Err(LossError::Config("global loss needs at least 2 emotions".into()));
    }
    let mut terms = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let cos = g.cosine_similarity(reps[i], reps[j])?;
            let d = g.offset(cos, -prior.get(i, j));
            terms.push(g.mul(d, d)?);
        }
    }
    // the summand is symmetric: each unordered pair stands for two ordered ones
    let stacked = g.stack(&terms)?;
    let s = g.sum(stacked);
    Ok(g.scale(s, 2.0 / (n * n - n) as f64))
}

/// Per-emotion scalar handles for the exp family.
fn prediction_scalars(g: &mut Graph, probs: Var) -> Result<Vec<Var>> {
    (0..g.value(probs).len())
        .map(|i| g.select(probs, i).map_err(LossError::from))
        .collect()
}

enum Resolved<'a> {
    Exp(Vec<Var>),
    Cos(&'a [Var]),
}

impl Resolved<'_> {
    fn len(&self) -> usize {
        match self {
            Resolved::Exp(v) => v.len(),
            Resolved::Cos(v) => v.len(),
        }
    }

    /// `S(r_i, r_j)`.
    fn similarity(&self, g: &mut Graph, i: usize, j: usize) -> Result<Var> {
        Ok(match self {
            Resolved::Exp(r) => {
                let d = g.sub(r[i], r[j])?;
                g.exp(d)
            }
            Resolved::Cos(h) => g.cosine_similarity(h[i], h[j])?,
        })
    }

    /// `D(r_i, r_j)` when `negated` is false, `D(-r_i, -r_j)` otherwise.
    fn distance(&self, g: &mut Graph, i: usize, j: usize, negated: bool) -> Result<Var> {
        Ok(match self {
            Resolved::Exp(r) => {
                let s = g.add(r[i], r[j])?;
                let s = if negated { g.neg(s) } else { s };
                g.exp(s)
            }
            Resolved::Cos(h) => {
                let c = g.cosine_similarity(h[i], h[j])?;
                g.neg(c)
            }
        })
    }
}

fn weighted_mean(g: &mut Graph, terms: &[Var], weights: Vec<f64>) -> Result<Var> {
    let count = terms.len() as f64;
    let stacked = g.stack(terms)?;
    let w = g.constant(Tensor::vector(weights));
    let prod = g.mul(stacked, w)?;
    let s = g.sum(prod);
    Ok(g.scale(s, 1.0 / count))
}

fn inter_term(
    g: &mut Graph,
    part: &LabelPartition,
    r: &Resolved<'_>,
    weights: &PairWeights,
) -> Result<Option<Var>> {
    if part.present.is_empty() || part.absent.is_empty() {
        return Ok(None);
    }
    let mut terms = Vec::new();
    let mut w = Vec::new();
    for &i in &part.absent {
        for &j in &part.present {
            terms.push(r.similarity(g, i, j)?);
            w.push(weights.inter(i, j));
        }
    }
    weighted_mean(g, &terms, w).map(Some)
}

fn group_pairs(
    g: &mut Graph,
    group: &[usize],
    r: &Resolved<'_>,
    weights: &PairWeights,
    negated: bool,
) -> Result<Option<Var>> {
    if group.len() < 2 {
        return Ok(None);
    }
    let mut terms = Vec::new();
    let mut w = Vec::new();
    for (a, &i) in group.iter().enumerate() {
        for &j in &group[..a] {
            terms.push(r.distance(g, i, j, negated)?);
            w.push(weights.intra(i, j));
        }
    }
    weighted_mean(g, &terms, w).map(Some)
}

fn intra_term(
    g: &mut Graph,
    part: &LabelPartition,
    r: &Resolved<'_>,
    weights: &PairWeights,
) -> Result<Option<Var>> {
    let absent = group_pairs(g, &part.absent, r, weights, false)?;
    let present = group_pairs(g, &part.present, r, weights, true)?;
    let sum = match (absent, present) {
        (None, None) => return Ok(None),
        (Some(a), None) => a,
        (None, Some(p)) => p,
        (Some(a), Some(p)) => g.add(a, p)?,
    };
    Ok(Some(g.scale(sum, 0.5)))
}

/// Local loss for one example. `group` must not be [`LocalGroup::None`].
pub fn local_loss(
    g: &mut Graph,
    y: &[u8],
    target: LocalTarget<'_>,
    group: LocalGroup,
    family: LossFamily,
    weights: &PairWeights,
) -> Result<Var> {
    let resolved = match (family, target) {
        (LossFamily::ExpPredictions, LocalTarget::Predictions(p)) => {
            Resolved::Exp(prediction_scalars(g, p)?)
        }
        (LossFamily::CosineRepresentations, LocalTarget::Representations(h)) => Resolved::Cos(h),
        (LossFamily::CosineRepresentations, LocalTarget::Predictions(_)) => {
            return Err(LossError::Config(
                "cosine family requires per-emotion representations".into(),
            ))
        }
        (LossFamily::ExpPredictions, LocalTarget::Representations(_)) => {
            return Err(LossError::Config(
                "exponential family operates on predicted probabilities".into(),
            ))
        }
    };
    check_len(y.len(), resolved.len())?;
    check_len(weights.len(), resolved.len())?;
    let part = LabelPartition::from_labels(y);
    let term = match group {
        LocalGroup::None => {
            return Err(LossError::Config("local loss requested with group none".into()))
        }
        LocalGroup::Inter => inter_term(g, &part, &resolved, weights)?,
        LocalGroup::Intra => intra_term(g, &part, &resolved, weights)?,
        LocalGroup::Both => {
            let inter = inter_term(g, &part, &resolved, weights)?;
            let intra = intra_term(g, &part, &resolved, weights)?;
            match (inter, intra) {
                (Some(a), Some(b)) => {
                    let s = g.add(a, b)?;
                    Some(g.scale(s, 0.5))
                }
                (a, b) => a.or(b),
            }
        }
    };
    Ok(term.unwrap_or_else(|| g.scalar(0.0)))
}

/// The label-correlation-aware loss: inter-group, exponential, unit weights.
pub fn lca_loss(g: &mut Graph, y: &[u8], probs: Var) -> Result<Var> {
    let n = y.len();
    local_loss(
        g,
        y,
        LocalTarget::Predictions(probs),
        LocalGroup::Inter,
        LossFamily::ExpPredictions,
        &PairWeights::ones(n),
    )
}

/// `(1 - alpha) * bce + alpha * local + beta * global`; absent terms count as 0.
pub fn combined_loss(
    g: &mut Graph,
    bce: Var,
    local: Option<Var>,
    global: Option<Var>,
    alpha: f64,
    beta: f64,
) -> Result<Var> {
    let mut total = g.scale(bce, 1.0 - alpha);
    if let Some(l) = local {
        let t = g.scale(l, alpha);
        total = g.add(total, t)?;
    }
    if let Some(gl) = global {
        let t = g.scale(gl, beta);
        total = g.add(total, t)?;
    }
    Ok(total)
}

/// Everything needed to build the training loss of one example.
#[derive(Clone, Debug)]
pub struct Objective {
    pub config: LossConfig,
    pub weights: PairWeights,
    pub global_prior: Option<CorrelationPrior>,
}

impl Objective {
    /// `priors` supplies the empirical and wheel priors on demand.
    pub fn new(
        config: LossConfig,
        n: usize,
        prior_for: impl Fn(PriorMode) -> std::result::Result<CorrelationPrior, String>,
    ) -> Result<Self> {
        let weights = match (config.local_group, config.weight_mode) {
            (LocalGroup::None, _) | (_, WeightMode::ConstantOne) => PairWeights::ones(n),
            (_, WeightMode::FromPrior) => {
                let prior = prior_for(config.weight_prior).map_err(LossError::Config)?;
                crate::labels::pair_weights(&prior, WeightMode::FromPrior)
            }
        };
        let global_prior = match config.global_prior.prior_mode() {
            Some(mode) => Some(prior_for(mode).map_err(LossError::Config)?),
            None => None,
        };
        Ok(Self {
            config,
            weights,
            global_prior,
        })
    }

    /// Builds the combined loss of one example.
    pub fn example_loss(
        &self,
        g: &mut Graph,
        y: &[u8],
        probs: Var,
        reps: Option<&[Var]>,
    ) -> Result<Var> {
        let cfg = &self.config;
        let bce = bce_loss(g, y, probs)?;
        let local = match cfg.local_group {
            LocalGroup::None => None,
            group => {
                let target = match cfg.family {
                    LossFamily::ExpPredictions => LocalTarget::Predictions(probs),
                    LossFamily::CosineRepresentations => LocalTarget::Representations(
                        reps.ok_or_else(|| {
                            LossError::Config(
                                "cosine family requires per-emotion representations".into(),
                            )
                        })?,
                    ),
                };
                Some(local_loss(g, y, target, group, cfg.family, &self.weights)?)
            }
        };
        let global = match &self.global_prior {
            None => None,
            Some(prior) => {
                let reps = reps.ok_or_else(|| {
                    LossError::Config("global loss requires per-emotion representations".into())
                })?;
                Some(global_cosine_loss(g, reps, prior)?)
            }
        };
        combined_loss(g, bce, local, global, cfg.alpha, cfg.beta)
    }
}
