//! Toy transformer encoder and the two prompt-based classifiers.
//!
//! *Demux* puts every emotion name in front of the text and classifies
//! emotion `i` from the average output embedding of its name's subtokens
//! through one shared two-layer network. *MEmo* prepends a mask prompt and
//! classifies all emotions jointly from the mask embedding, either through a
//! new two-layer classifier or through an MLM-style decoder whose logits are
//! read at each emotion's whole-word token.

use std::fmt;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Graph, Reduction, Var};
use crate::labels::EmotionSet;
use crate::params::{Bound, ParamId, ParamStore};
use crate::tensor::{Tensor, TensorError};
use crate::text::{encode_memo, DemuxPrompt, TextError, TokenSequence, Vocabulary, MASK_ID};

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("emotion {0:?} has no whole-word vocabulary entry for the MLM head")]
    MissingWholeWord(String),
    #[error("span ({start}, {len}) is out of bounds for a sequence of {seq_len} tokens")]
    SpanOutOfBounds {
        start: usize,
        len: usize,
        seq_len: usize,
    },
    #[error("sequence has no valid mask position")]
    MissingMask,
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    #[default]
    Demux,
    Memo,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Demux => "demux",
            ModelKind::Memo => "memo",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MemoHead {
    #[default]
    NewClassifier,
    MlmAnalog,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub layers: usize,
    pub heads: usize,
    pub dim: usize,
    pub ff_dim: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            layers: 2,
            heads: 2,
            dim: 32,
            ff_dim: 64,
            max_len: 64,
            seed: 0,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0
            || self.heads == 0
            || self.dim == 0
            || self.ff_dim == 0
            || self.max_len == 0
        {
            return Err(ModelError::Config("encoder sizes must be positive".into()));
        }
        if self.dim % self.heads != 0 {
            return Err(ModelError::Config(format!(
                "dimension {} is not divisible by {} heads",
                self.dim, self.heads
            )));
        }
        Ok(())
    }
}

/// Everything that determines a model's architecture.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub memo_head: MemoHead,
    pub encoder: EncoderConfig,
    /// Hidden width of the classification networks; defaults to the encoder dimension.
    pub head_hidden: Option<usize>,
}

impl ModelSpec {
    pub fn has_representations(&self) -> bool {
        self.kind == ModelKind::Demux
    }
}

#[derive(Clone, Copy, Debug)]
struct Linear {
    w: ParamId,
    b: ParamId,
}

impl Linear {
    fn new(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let w = store.add_uniform(format!("{name}.w"), &[fan_in, fan_out], fan_in, rng);
        let b = store.add_uniform(format!("{name}.b"), &[fan_out], fan_in, rng);
        Self { w, b }
    }

    fn apply(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let y = g.matmul(x, p[self.w])?;
        Ok(g.add_bias(y, p[self.b])?)
    }
}

#[derive(Clone, Copy, Debug)]
struct Norm {
    gamma: ParamId,
    beta: ParamId,
}

impl Norm {
    fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        let gamma = store.add(format!("{name}.gamma"), Tensor::filled(&[dim], 1.0));
        let beta = store.add(format!("{name}.beta"), Tensor::zeros(&[dim]));
        Self { gamma, beta }
    }

    fn apply(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        Ok(g.layer_norm(x, p[self.gamma], p[self.beta], LN_EPS)?)
    }
}

#[derive(Clone, Debug)]
struct Block {
    query: Linear,
    key: Linear,
    value: Linear,
    out: Linear,
    norm1: Norm,
    ff1: Linear,
    ff2: Linear,
    norm2: Norm,
}

#[derive(Clone, Debug)]
enum Head {
    /// Shared `NN: R^d -> R` applied to each emotion representation.
    PerEmotion { hidden: Linear, out: Linear },
    /// `NN: R^d -> R^n` on the mask embedding.
    Joint { hidden: Linear, out: Linear },
    /// Transform, then tied-embedding logits plus a vocabulary bias.
    Mlm {
        transform: Linear,
        bias: ParamId,
        emotion_tokens: Vec<usize>,
    },
}

/// Sinusoidal position encodings, `[len, dim]`.
pub fn position_encoding(len: usize, dim: usize) -> Tensor {
    let mut data = vec![0.0; len * dim];
    for pos in 0..len {
        for i in 0..dim {
            let rate = 10000f64.powf((2 * (i / 2)) as f64 / dim as f64);
            let angle = pos as f64 / rate;
            data[pos * dim + i] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    Tensor::matrix(len, dim, data).expect("valid shape")
}

/// Graph handles for one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardOutput {
    /// Probability vector of length n.
    pub probs: Var,
    /// One `[d]` vector per emotion (Demux).
    pub emotion_reps: Option<Vec<Var>>,
    /// The `[d]` mask embedding (MEmo).
    pub mask_rep: Option<Var>,
}

/// Plain-value model output.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelOutput {
    pub probs: Vec<f64>,
    pub emotion_reps: Option<Vec<Vec<f64>>>,
    pub mask_rep: Option<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct EmotionModel {
    spec: ModelSpec,
    emotions: EmotionSet,
    vocab: Vocabulary,
    params: ParamStore,
    embed: ParamId,
    blocks: Vec<Block>,
    head: Head,
    prompt: Option<DemuxPrompt>,
    positions: Tensor,
}

impl EmotionModel {
    /// Initializes parameters from `spec.encoder.seed`.
    pub fn new(spec: ModelSpec, emotions: EmotionSet, vocab: Vocabulary) -> Result<Self> {
        spec.encoder.validate()?;
        let enc = spec.encoder;
        let d = enc.dim;
        let hidden = spec.head_hidden.unwrap_or(d);
        if hidden == 0 {
            return Err(ModelError::Config("head hidden width must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(enc.seed);
        let mut params = ParamStore::new();
        // one-hot inputs have unit fan-in
        let embed = params.add_uniform("encoder.embed", &[vocab.len(), d], 1, &mut rng);
        let blocks = (0..enc.layers)
            .map(|l| {
                let p = format!("encoder.layer{l}");
                Block {
                    query: Linear::new(&mut params, &format!("{p}.query"), d, d, &mut rng),
                    key: Linear::new(&mut params, &format!("{p}.key"), d, d, &mut rng),
                    value: Linear::new(&mut params, &format!("{p}.value"), d, d, &mut rng),
                    out: Linear::new(&mut params, &format!("{p}.attn_out"), d, d, &mut rng),
                    norm1: Norm::new(&mut params, &format!("{p}.norm1"), d),
                    ff1: Linear::new(&mut params, &format!("{p}.ff1"), d, enc.ff_dim, &mut rng),
                    ff2: Linear::new(&mut params, &format!("{p}.ff2"), enc.ff_dim, d, &mut rng),
                    norm2: Norm::new(&mut params, &format!("{p}.norm2"), d),
                }
            })
            .collect();
        let n = emotions.len();
        let (head, prompt) = match (spec.kind, spec.memo_head) {
            (ModelKind::Demux, _) => (
                Head::PerEmotion {
                    hidden: Linear::new(&mut params, "head.hidden", d, hidden, &mut rng),
                    out: Linear::new(&mut params, "head.out", hidden, 1, &mut rng),
                },
                Some(DemuxPrompt::new(&vocab, &emotions)?),
            ),
            (ModelKind::Memo, MemoHead::NewClassifier) => (
                Head::Joint {
                    hidden: Linear::new(&mut params, "head.hidden", d, hidden, &mut rng),
                    out: Linear::new(&mut params, "head.out", hidden, n, &mut rng),
                },
                None,
            ),
            (ModelKind::Memo, MemoHead::MlmAnalog) => {
                let emotion_tokens = emotions
                    .names()
                    .iter()
                    .map(|name| {
                        vocab
                            .whole_word_id(name)
                            .map(|id| id as usize)
                            .ok_or_else(|| ModelError::MissingWholeWord(name.clone()))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let transform = Linear::new(&mut params, "head.transform", d, d, &mut rng);
                let bias = params.add("head.vocab_bias", Tensor::zeros(&[vocab.len()]));
                (
                    Head::Mlm {
                        transform,
                        bias,
                        emotion_tokens,
                    },
                    None,
                )
            }
        };
        let positions = position_encoding(enc.max_len, d);
        Ok(Self {
            spec,
            emotions,
            vocab,
            params,
            embed,
            blocks,
            head,
            prompt,
            positions,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn emotions(&self) -> &EmotionSet {
        &self.emotions
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn set_params(&mut self, params: ParamStore) -> Result<()> {
        self.params
            .load_values(&params)
            .map_err(ModelError::Checkpoint)
    }

    /// Zeroes the final classification layer so every probability is 0.5.
    pub fn zero_head(&mut self) {
        let ids: Vec<ParamId> = match &self.head {
            Head::PerEmotion { out, .. } | Head::Joint { out, .. } => vec![out.w, out.b],
            Head::Mlm {
                transform, bias, ..
            } => vec![transform.w, transform.b, *bias],
        };
        for id in ids {
            self.params.get_mut(id).data_mut().fill(0.0);
        }
    }

    /// Tokenizes one input text for this model's formulation.
    pub fn prepare(&self, text: &str) -> TokenSequence {
        match &self.prompt {
            Some(p) => p.encode(&self.vocab, text),
            None => encode_memo(&self.vocab, text),
        }
    }

    /// Per-token output embeddings, `[len, d]`.
    pub fn encode(&self, g: &mut Graph, p: &Bound, ids: &[u32]) -> Result<Var> {
        let max = self.spec.encoder.max_len;
        if ids.len() > max {
            return Err(TextError::SequenceTooLong {
                len: ids.len(),
                max,
            }
            .into());
        }
        if ids.is_empty() {
            return Err(ModelError::Config("empty token sequence".into()));
        }
        let d = self.spec.encoder.dim;
        let heads = self.spec.encoder.heads;
        let dh = d / heads;
        let rows: Vec<usize> = ids.iter().map(|&i| i as usize).collect();
        let emb = g.gather_rows(p[self.embed], &rows)?;
        let pe = Tensor::matrix(
            ids.len(),
            d,
            self.positions.data()[..ids.len() * d].to_vec(),
        )?;
        let pe = g.constant(pe);
        let mut x = g.add(emb, pe)?;
        let scale = 1.0 / (dh as f64).sqrt();
        for block in &self.blocks {
            let q = block.query.apply(g, p, x)?;
            let k = block.key.apply(g, p, x)?;
            let v = block.value.apply(g, p, x)?;
            let mut ctx = Vec::with_capacity(heads);
            for h in 0..heads {
                let qh = g.slice_cols(q, h * dh, dh)?;
                let kh = g.slice_cols(k, h * dh, dh)?;
                let vh = g.slice_cols(v, h * dh, dh)?;
                let kt = g.transpose(kh)?;
                let scores = g.matmul(qh, kt)?;
                let scores = g.scale(scores, scale);
                let attn = g.softmax_rows(scores);
                ctx.push(g.matmul(attn, vh)?);
            }
            let ctx = if heads == 1 { ctx[0] } else { g.concat_cols(&ctx)? };
            let attn_out = block.out.apply(g, p, ctx)?;
            let res = g.add(x, attn_out)?;
            x = block.norm1.apply(g, p, res)?;
            let f = block.ff1.apply(g, p, x)?;
            let f = g.gelu(f);
            let f = block.ff2.apply(g, p, f)?;
            let res = g.add(x, f)?;
            x = block.norm2.apply(g, p, res)?;
        }
        Ok(x)
    }

    /// Per-emotion heads over span-averaged embeddings.
    pub fn demux_predict(
        &self,
        g: &mut Graph,
        p: &Bound,
        embeddings: Var,
        spans: &[(usize, usize)],
    ) -> Result<ForwardOutput> {
        let Head::PerEmotion { hidden, out } = &self.head else {
            return Err(ModelError::Config("model is not a Demux model".into()));
        };
        let seq_len = g.shape(embeddings)[0];
        if spans.len() != self.emotions.len() {
            return Err(ModelError::Config(format!(
                "{} spans for {} emotions",
                spans.len(),
                self.emotions.len()
            )));
        }
        let mut reps = Vec::with_capacity(spans.len());
        for &(start, len) in spans {
            if len == 0 || start + len > seq_len {
                return Err(ModelError::SpanOutOfBounds {
                    start,
                    len,
                    seq_len,
                });
            }
            let idx: Vec<usize> = (start..start + len).collect();
            let rows = g.gather_rows(embeddings, &idx)?;
            reps.push(g.reduce_axis(Reduction::Mean, rows, 0)?);
        }
        let stacked = g.stack(&reps)?;
        let z = hidden.apply(g, p, stacked)?;
        let z = g.tanh(z);
        let logits = out.apply(g, p, z)?;
        let logits = g.reshape(logits, vec![reps.len()])?;
        let probs = g.sigmoid(logits);
        Ok(ForwardOutput {
            probs,
            emotion_reps: Some(reps),
            mask_rep: None,
        })
    }

    /// Joint head over the mask embedding.
    pub fn memo_predict(
        &self,
        g: &mut Graph,
        p: &Bound,
        embeddings: Var,
        mask_position: usize,
    ) -> Result<ForwardOutput> {
        if mask_position >= g.shape(embeddings)[0] {
            return Err(ModelError::MissingMask);
        }
        let h = g.gather_rows(embeddings, &[mask_position])?;
        let n = self.emotions.len();
        let logits = match &self.head {
            Head::Joint { hidden, out } => {
                let z = hidden.apply(g, p, h)?;
                let z = g.tanh(z);
                out.apply(g, p, z)?
            }
            Head::Mlm {
                transform,
                bias,
                emotion_tokens,
            } => {
                let t = transform.apply(g, p, h)?;
                let t = g.tanh(t);
                let et = g.transpose(p[self.embed])?;
                let vocab_logits = g.matmul(t, et)?;
                let vocab_logits = g.add_bias(vocab_logits, p[*bias])?;
                let column = g.transpose(vocab_logits)?;
                let picked = g.gather_rows(column, emotion_tokens)?;
                g.transpose(picked)?
            }
            Head::PerEmotion { .. } => {
                return Err(ModelError::Config("model is not a MEmo model".into()))
            }
        };
        let logits = g.reshape(logits, vec![n])?;
        let probs = g.sigmoid(logits);
        let mask_rep = g.reshape(h, vec![self.spec.encoder.dim])?;
        Ok(ForwardOutput {
            probs,
            emotion_reps: None,
            mask_rep: Some(mask_rep),
        })
    }

    /// Full forward pass of one tokenized example.
    pub fn forward(&self, g: &mut Graph, p: &Bound, seq: &TokenSequence) -> Result<ForwardOutput> {
        let x = self.encode(g, p, &seq.ids)?;
        match self.spec.kind {
            ModelKind::Demux => self.demux_predict(g, p, x, &seq.emotion_spans),
            ModelKind::Memo => {
                let pos = seq.mask_position.ok_or(ModelError::MissingMask)?;
                if seq.ids.get(pos) != Some(&MASK_ID) {
                    return Err(ModelError::MissingMask);
                }
                self.memo_predict(g, p, x, pos)
            }
        }
    }

    /// Forward pass without gradient tracking.
    pub fn predict(&self, text: &str) -> Result<ModelOutput> {
        Ok(self.predict_batch(&[text])?.remove(0))
    }

    pub fn predict_batch(&self, texts: &[&str]) -> Result<Vec<ModelOutput>> {
        let mut g = Graph::new();
        let p = self.params.bind(&mut g, false);
        texts
            .iter()
            .map(|t| {
                let seq = self.prepare(t);
                let out = self.forward(&mut g, &p, &seq)?;
                Ok(ModelOutput {
                    probs: g.value(out.probs).data().to_vec(),
                    emotion_reps: out.emotion_reps.map(|r| {
                        r.iter().map(|&v| g.value(v).data().to_vec()).collect()
                    }),
                    mask_rep: out.mask_rep.map(|v| g.value(v).data().to_vec()),
                })
            })
            .collect()
    }

    /// Writes `model.toml`, `vocab.txt` and `params.txt` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let io = |e: std::io::Error| ModelError::Checkpoint(e.to_string());
        std::fs::create_dir_all(dir).map_err(io)?;
        let meta = CheckpointMeta {
            model: self.spec,
            emotions: self.emotions.clone(),
        };
        let text = toml::to_string(&meta).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        std::fs::write(dir.join("model.toml"), text).map_err(io)?;
        self.vocab.save(&dir.join("vocab.txt")).map_err(io)?;
        std::fs::write(dir.join("params.txt"), self.params.to_text()).map_err(io)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let io = |e: std::io::Error| ModelError::Checkpoint(e.to_string());
        let text = std::fs::read_to_string(dir.join("model.toml")).map_err(io)?;
        let meta: CheckpointMeta =
            toml::from_str(&text).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        let vocab = Vocabulary::load(&dir.join("vocab.txt"))?;
        let mut model = Self::new(meta.model, meta.emotions, vocab)?;
        let params_text = std::fs::read_to_string(dir.join("params.txt")).map_err(io)?;
        let params = ParamStore::from_text(&params_text).map_err(ModelError::Checkpoint)?;
        model.set_params(params)?;
        Ok(model)
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointMeta {
    model: ModelSpec,
    emotions: EmotionSet,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec(kind: ModelKind) -> ModelSpec {
        ModelSpec {
            kind,
            memo_head: MemoHead::NewClassifier,
            encoder: EncoderConfig {
                layers: 2,
                heads: 2,
                dim: 8,
                ff_dim: 16,
                max_len: 40,
                seed: 7,
            },
            head_hidden: None,
        }
    }

    fn setup(kind: ModelKind) -> EmotionModel {
        let set = EmotionSet::semeval();
        let vocab = Vocabulary::build(&["happy happy day", "sad sad night"], &set, 4);
        EmotionModel::new(small_spec(kind), set, vocab).unwrap()
    }

    #[test]
    fn encoder_output_shape_and_determinism() {
        let m = setup(ModelKind::Demux);
        let seq = m.prepare("happy day");
        let run = || {
            let mut g = Graph::new();
            let p = m.params().bind(&mut g, false);
            let x = m.encode(&mut g, &p, &seq.ids).unwrap();
            g.value(x).clone()
        };
        let a = run();
        assert_eq!(a.shape(), &[seq.len(), 8]);
        assert_eq!(a, run());
        let again = setup(ModelKind::Demux);
        assert_eq!(again.params(), m.params());
    }

    #[test]
    fn swapping_tokens_changes_outputs() {
        let m = setup(ModelKind::Demux);
        let a = m.prepare("happy day");
        let b = m.prepare("day happy");
        let run = |ids: &[u32]| {
            let mut g = Graph::new();
            let p = m.params().bind(&mut g, false);
            let x = m.encode(&mut g, &p, ids).unwrap();
            g.value(x).clone()
        };
        let (xa, xb) = (run(&a.ids), run(&b.ids));
        // the multiset of tokens is unchanged; only positions differ
        let last = a.len() - 2;
        assert_ne!(xa.row(last), xb.row(last - 1));
        assert_ne!(xa, xb);
    }

    #[test]
    fn overlong_sequence_rejected() {
        let m = setup(ModelKind::Memo);
        let seq = m.prepare(&"happy ".repeat(60));
        let mut g = Graph::new();
        let p = m.params().bind(&mut g, false);
        assert!(matches!(
            m.forward(&mut g, &p, &seq),
            Err(ModelError::Text(TextError::SequenceTooLong { .. }))
        ));
    }

    #[test]
    fn demux_span_averaging() {
        let m = setup(ModelKind::Demux);
        let mut g = Graph::new();
        let p = m.params().bind(&mut g, false);
        let emb = g.constant(
            Tensor::from_rows(&[
                vec![1.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
                vec![3.0, 4.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
                vec![5.0, -6.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            ])
            .unwrap(),
        );
        let mut spans = vec![(0, 2)];
        spans.extend(std::iter::repeat((2, 1)).take(10));
        let out = m.demux_predict(&mut g, &p, emb, &spans).unwrap();
        let reps = out.emotion_reps.unwrap();
        assert_eq!(reps.len(), 11);
        assert_eq!(&g.value(reps[0]).data()[..2], &[2.0, 3.0]);
        assert_eq!(g.value(reps[1]).data(), g.value(emb).row(2));

        let mut bad = spans.clone();
        bad[3] = (2, 5);
        assert!(matches!(
            m.demux_predict(&mut g, &p, emb, &bad),
            Err(ModelError::SpanOutOfBounds { .. })
        ));
    }

    #[test]
    fn zero_heads_give_half() {
        for (kind, head) in [
            (ModelKind::Demux, MemoHead::NewClassifier),
            (ModelKind::Memo, MemoHead::NewClassifier),
            (ModelKind::Memo, MemoHead::MlmAnalog),
        ] {
            let set = EmotionSet::semeval();
            let vocab = Vocabulary::build(&["happy happy day"], &set, 4);
            let mut spec = small_spec(kind);
            spec.memo_head = head;
            let mut m = EmotionModel::new(spec, set, vocab).unwrap();
            m.zero_head();
            let out = m.predict("happy day").unwrap();
            assert_eq!(out.probs, vec![0.5; 11]);
            assert_eq!(out.emotion_reps.is_some(), kind == ModelKind::Demux);
            assert_eq!(out.mask_rep.is_some(), kind == ModelKind::Memo);
        }
    }

    #[test]
    fn memo_heads_differ() {
        let set = EmotionSet::semeval();
        let vocab = Vocabulary::build(&["happy happy day"], &set, 4);
        let mut spec = small_spec(ModelKind::Memo);
        let a = EmotionModel::new(spec, set.clone(), vocab.clone()).unwrap();
        spec.memo_head = MemoHead::MlmAnalog;
        let b = EmotionModel::new(spec, set, vocab).unwrap();
        let (pa, pb) = (a.predict("happy").unwrap(), b.predict("happy").unwrap());
        assert_eq!(pa.probs.len(), 11);
        assert_eq!(pb.probs.len(), 11);
        assert_eq!(pa.mask_rep, pb.mask_rep);
        assert_ne!(pa.probs, pb.probs);
    }

    #[test]
    fn mlm_head_needs_whole_words() {
        let set = EmotionSet::new(["deep sorrow", "joy"]).unwrap();
        let vocab = Vocabulary::build(&["x"], &set, 4);
        let mut spec = small_spec(ModelKind::Memo);
        spec.memo_head = MemoHead::MlmAnalog;
        assert!(matches!(
            EmotionModel::new(spec, set.clone(), vocab.clone()),
            Err(ModelError::MissingWholeWord(name)) if name == "deep sorrow"
        ));
        // Demux still yields exactly one representation per emotion
        let m = EmotionModel::new(small_spec(ModelKind::Demux), set, vocab).unwrap();
        let out = m.predict("x").unwrap();
        assert_eq!(out.emotion_reps.unwrap().len(), 2);
    }

    #[test]
    fn probabilities_strictly_inside_unit_interval() {
        for kind in [ModelKind::Demux, ModelKind::Memo] {
            let m = setup(kind);
            let out = m.predict("happy sad happy night").unwrap();
            assert!(out.probs.iter().all(|&p| p > 0.0 && p < 1.0));
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = setup(ModelKind::Memo);
        m.save(dir.path()).unwrap();
        let back = EmotionModel::load(dir.path()).unwrap();
        assert_eq!(back.params(), m.params());
        assert_eq!(back.predict("sad day").unwrap(), m.predict("sad day").unwrap());
    }

    #[test]
    fn encoder_config_validation() {
        let bad = EncoderConfig {
            dim: 10,
            heads: 3,
            ..EncoderConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(EncoderConfig::default().validate().is_ok());
    }
}
