use proptest::prelude::*;

use emocorr::data::{
    generate_synthetic, parse_semeval_tsv, to_semeval_tsv, DatasetSplit, LabeledExample,
    SplitName, SyntheticSpec,
};
use emocorr::graph::Graph;
use emocorr::labels::{
    empirical_correlation, pair_weights, project_to_unit_interval, wheel_cosine,
    CorrelationPrior, EmotionSet, PairWeights, PriorMode, WeightMode, SEMEVAL_EMOTIONS,
};
use emocorr::losses::{global_cosine_loss, local_loss, LocalGroup, LocalTarget, LossFamily};
use emocorr::metrics::evaluate;
use emocorr::model::{EmotionModel, EncoderConfig, MemoHead, ModelKind, ModelSpec};
use emocorr::tensor::Tensor;
use emocorr::text::{encode_memo, DemuxPrompt, Vocabulary, MASK_ID, UNK_ID};
use emocorr::train::{EarlyStopping, StopDecision};

const GROUPS: [LocalGroup; 3] = [LocalGroup::Inter, LocalGroup::Intra, LocalGroup::Both];

fn labels_and_probs(n: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = (Vec<u8>, Vec<f64>)> {
    n.prop_flat_map(|n| {
        (
            prop::collection::vec(0u8..=1, n),
            prop::collection::vec(0.0f64..=1.0, n),
        )
    })
}

fn prior_from(n: usize, upper: &[f64]) -> CorrelationPrior {
    let mut m = vec![1.0; n * n];
    let mut k = 0;
    for i in 0..n {
        for j in i + 1..n {
            m[i * n + j] = upper[k];
            m[j * n + i] = upper[k];
            k += 1;
        }
    }
    CorrelationPrior::from_matrix(PriorMode::EmpiricalRho, n, m).unwrap()
}

fn exp_local(y: &[u8], p: &[f64], group: LocalGroup, w: &PairWeights) -> f64 {
    let mut g = Graph::new();
    let v = g.constant(Tensor::vector(p.to_vec()));
    let l = local_loss(&mut g, y, LocalTarget::Predictions(v), group, LossFamily::ExpPredictions, w)
        .unwrap();
    g.item(l)
}

fn binary_matrix(rows: usize, cols: usize) -> impl Strategy<Value = Vec<Vec<u8>>> {
    prop::collection::vec(prop::collection::vec(0u8..=1, cols), rows)
}

proptest! {
    #[test]
    fn exp_local_losses_are_finite_and_nonnegative((y, p) in labels_and_probs(1..=11)) {
        for group in GROUPS {
            let v = exp_local(&y, &p, group, &PairWeights::ones(y.len()));
            prop_assert!(v.is_finite() && v >= 0.0);
        }
    }

    #[test]
    fn local_losses_are_invariant_to_emotion_permutation(
        (y, p, upper, perm) in (2usize..=7).prop_flat_map(|n| (
            prop::collection::vec(0u8..=1, n),
            prop::collection::vec(0.0f64..=1.0, n),
            prop::collection::vec(0.0f64..=1.0, n * (n - 1) / 2),
            Just((0..n).collect::<Vec<_>>()).prop_shuffle(),
        ))
    ) {
        let n = y.len();
        let prior = prior_from(n, &upper);
        let w = pair_weights(&prior, WeightMode::FromPrior);
        let wp = pair_weights(&prior.permuted(&perm), WeightMode::FromPrior);
        let yp: Vec<u8> = perm.iter().map(|&i| y[i]).collect();
        let pp: Vec<f64> = perm.iter().map(|&i| p[i]).collect();
        for group in GROUPS {
            let a = exp_local(&y, &p, group, &w);
            let b = exp_local(&yp, &pp, group, &wp);
            prop_assert!((a - b).abs() < 1e-12, "{group:?}: {a} vs {b}");
        }
    }

    #[test]
    fn inter_loss_decreases_when_a_present_probability_rises(
        (y, p) in labels_and_probs(2..=8),
        bump in 0.01f64..0.5,
    ) {
        prop_assume!(y.contains(&1) && y.contains(&0));
        let i = y.iter().position(|&v| v == 1).unwrap();
        let mut raised = p.clone();
        raised[i] = (p[i] + bump).min(1.0);
        let w = PairWeights::ones(y.len());
        prop_assert!(
            exp_local(&y, &raised, LocalGroup::Inter, &w)
                <= exp_local(&y, &p, LocalGroup::Inter, &w) + 1e-15
        );
    }

    #[test]
    fn global_loss_vanishes_for_parallel_representations_under_unit_prior(
        base in prop::collection::vec(0.1f64..2.0, 4),
        scales in prop::collection::vec(0.1f64..5.0, 2..6),
    ) {
        let mut g = Graph::new();
        let reps: Vec<_> = scales
            .iter()
            .map(|s| g.constant(Tensor::vector(base.iter().map(|b| b * s).collect())))
            .collect();
        let l = global_cosine_loss(&mut g, &reps, &CorrelationPrior::constant_one(reps.len())).unwrap();
        prop_assert!(g.item(l).abs() < 1e-20);
    }

    #[test]
    fn cosine_similarity_stays_in_range(
        a in prop::collection::vec(-1e3f64..1e3, 1..8),
        k in -1e3f64..1e3,
    ) {
        let b: Vec<f64> = a.iter().map(|v| v * k).collect();
        let mut g = Graph::new();
        let (va, vb) = (g.constant(Tensor::vector(a)), g.constant(Tensor::vector(b)));
        let c = g.cosine_similarity(va, vb).unwrap();
        let c = g.item(c);
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&c));
    }

    #[test]
    fn metrics_stay_in_unit_interval(
        (gold, probs) in (1usize..15, 1usize..8).prop_flat_map(|(m, n)| (
            binary_matrix(m, n),
            prop::collection::vec(prop::collection::vec(0.0f64..=1.0, n), m),
        ))
    ) {
        let r = evaluate(&gold, &probs, 0.5).unwrap();
        for v in [r.jaccard, r.micro_f1, r.macro_f1].into_iter().chain(r.per_emotion_f1) {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn perfect_predictions_score_one_when_every_column_is_nonempty(
        gold in (1usize..15, 1usize..8).prop_flat_map(|(m, n)| binary_matrix(m, n))
    ) {
        let n = gold[0].len();
        prop_assume!((0..n).all(|j| gold.iter().any(|r| r[j] == 1)));
        let probs: Vec<Vec<f64>> = gold.iter().map(|r| r.iter().map(|&v| f64::from(v)).collect()).collect();
        let r = evaluate(&gold, &probs, 0.5).unwrap();
        prop_assert_eq!(r.jaccard, 1.0);
        prop_assert_eq!(r.micro_f1, 1.0);
        prop_assert_eq!(r.macro_f1, 1.0);
    }

    #[test]
    fn metrics_ignore_row_order(
        (gold, probs, perm) in (1usize..12, 1usize..6).prop_flat_map(|(m, n)| (
            binary_matrix(m, n),
            prop::collection::vec(prop::collection::vec(0.0f64..=1.0, n), m),
            Just((0..m).collect::<Vec<_>>()).prop_shuffle(),
        ))
    ) {
        let a = evaluate(&gold, &probs, 0.5).unwrap();
        let gp: Vec<_> = perm.iter().map(|&i| gold[i].clone()).collect();
        let pp: Vec<_> = perm.iter().map(|&i| probs[i].clone()).collect();
        let b = evaluate(&gp, &pp, 0.5).unwrap();
        prop_assert!((a.jaccard - b.jaccard).abs() < 1e-12);
        prop_assert!((a.micro_f1 - b.micro_f1).abs() < 1e-12);
        prop_assert!((a.macro_f1 - b.macro_f1).abs() < 1e-12);
    }

    #[test]
    fn empirical_correlation_is_a_valid_prior(
        labels in (2usize..30, 1usize..7).prop_flat_map(|(m, n)| binary_matrix(m, n))
    ) {
        let prior = empirical_correlation(&labels).unwrap();
        let n = prior.len();
        for i in 0..n {
            prop_assert_eq!(prior.get(i, i), 1.0);
            for j in 0..n {
                prop_assert_eq!(prior.get(i, j), prior.get(j, i));
                prop_assert!((0.0..=1.0).contains(&prior.get(i, j)));
            }
        }
    }

    #[test]
    fn projection_preserves_order(a in -1.0f64..=1.0, b in -1.0f64..=1.0) {
        let (pa, pb) = (project_to_unit_interval(a).unwrap(), project_to_unit_interval(b).unwrap());
        prop_assert_eq!(a.partial_cmp(&b), pa.partial_cmp(&pb));
    }

    #[test]
    fn prior_weights_sum_to_one(
        (n, upper) in (2usize..8).prop_flat_map(|n| (Just(n), prop::collection::vec(0.0f64..=1.0, n * (n - 1) / 2)))
    ) {
        let w = pair_weights(&prior_from(n, &upper), WeightMode::FromPrior);
        for i in 0..n {
            for j in 0..n {
                prop_assert!((w.inter(i, j) + w.intra(i, j) - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn wheel_cosine_is_rotation_invariant(
        angles in prop::collection::vec(0.0f64..360.0, 3),
        shift in -720.0f64..720.0,
    ) {
        let names = ["a", "b", "c"];
        let with = |offset: f64| {
            let map = names.iter().zip(&angles).map(|(n, a)| (n.to_string(), a + offset)).collect();
            EmotionSet::new(names).unwrap().with_angles(&map).unwrap()
        };
        let (s0, s1) = (with(0.0), with(shift));
        for i in 0..3 {
            for j in 0..3 {
                prop_assert!((wheel_cosine(&s0, i, j).unwrap() - wheel_cosine(&s1, i, j).unwrap()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn prompts_keep_emotions_known_and_spans_ordered(
        subset in prop::sample::subsequence(SEMEVAL_EMOTIONS.to_vec(), 2..=11),
        text in "[a-z ]{0,40}",
        piece in 1usize..6,
    ) {
        let set = EmotionSet::new(subset.iter().copied()).unwrap();
        let vocab = Vocabulary::build(&[text.as_str()], &set, piece);
        let prompt = DemuxPrompt::new(&vocab, &set).unwrap();
        let seq = prompt.encode(&vocab, &text);
        prop_assert_eq!(seq.emotion_spans.len(), set.len());
        let mut end = 1;
        for &(start, len) in &seq.emotion_spans {
            prop_assert!(len > 0 && start >= end);
            end = start + len;
            prop_assert!(seq.ids[start..end].iter().all(|&id| id != UNK_ID));
        }
        prop_assert!(end < seq.ids.len());
        let memo = encode_memo(&vocab, &text);
        prop_assert_eq!(memo.ids.iter().filter(|&&id| id == MASK_ID).count(), 1);
        prop_assert_eq!(memo.ids[memo.mask_position.unwrap()], MASK_ID);
    }

    #[test]
    fn early_stopping_tracks_the_maximum(scores in prop::collection::vec(0.0f64..1.0, 1..40), patience in 1usize..6) {
        let mut stop = EarlyStopping::new(patience);
        let mut seen = Vec::new();
        for &s in &scores {
            seen.push(s);
            if stop.observe(s) == StopDecision::Stop {
                break;
            }
        }
        let max = seen.iter().copied().fold(f64::MIN, f64::max);
        prop_assert_eq!(stop.best(), Some(max));
        prop_assert_eq!(seen[stop.best_epoch() - 1], max);
        prop_assert_eq!(seen.iter().position(|&s| s == max), Some(stop.best_epoch() - 1));
    }

    #[test]
    fn semeval_tsv_round_trips(
        rows in prop::collection::vec(("[a-z][a-z ]{0,30}", prop::collection::vec(0u8..=1, 11)), 1..10)
    ) {
        let set = EmotionSet::semeval();
        let split = DatasetSplit {
            name: SplitName::Dev,
            examples: rows
                .into_iter()
                .enumerate()
                .map(|(i, (text, labels))| LabeledExample { id: format!("r{i}"), text, labels })
                .collect(),
        };
        let parsed = parse_semeval_tsv(&to_semeval_tsv(&split, &set), "dev.tsv", SplitName::Dev, &set).unwrap();
        prop_assert_eq!(parsed, split);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn synthetic_generation_is_reproducible(seed in any::<u64>(), c in -0.9f64..0.9) {
        let spec = SyntheticSpec::independent(4, 60, 0.3, seed).with_pair(0, 1, c);
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        prop_assert_eq!(a.train, b.train);
        prop_assert_eq!(a.dev, b.dev);
        prop_assert_eq!(a.test, b.test);
    }

    #[test]
    fn model_forward_is_bit_identical(seed in any::<u64>(), text in "[a-z ]{1,30}", memo in any::<bool>()) {
        let set = EmotionSet::semeval().subset(&["anger", "joy", "fear"]).unwrap();
        let vocab = Vocabulary::build(&[text.as_str()], &set, 4);
        let spec = ModelSpec {
            kind: if memo { ModelKind::Memo } else { ModelKind::Demux },
            memo_head: MemoHead::MlmAnalog,
            encoder: EncoderConfig { layers: 1, heads: 2, dim: 8, ff_dim: 16, max_len: 64, seed },
            head_hidden: None,
        };
        let model = EmotionModel::new(spec, set, vocab).unwrap();
        let a = model.predict(&text).unwrap();
        let b = model.predict(&text).unwrap();
        prop_assert_eq!(a.probs.iter().map(|p| p.to_bits()).collect::<Vec<_>>(),
                        b.probs.iter().map(|p| p.to_bits()).collect::<Vec<_>>());
    }
}

/// Label correlation implied by thresholding a bivariate normal with latent correlation `r`,
/// by trapezoid integration of `P(Z1 > a, Z2 > b)`.
fn thresholded_phi(r: f64, rate1: f64, rate2: f64) -> f64 {
    use statrs::distribution::{Continuous, ContinuousCDF, Normal};
    let z = Normal::standard();
    let (a, b) = (z.inverse_cdf(1.0 - rate1), z.inverse_cdf(1.0 - rate2));
    let s = (1.0 - r * r).sqrt();
    let steps = 20_000;
    let h = (9.0 - a) / steps as f64;
    let f = |x: f64| z.pdf(x) * (1.0 - z.cdf((b - r * x) / s));
    let mut p11 = 0.5 * (f(a) + f(9.0));
    for k in 1..steps {
        p11 += f(a + k as f64 * h);
    }
    p11 *= h;
    (p11 - rate1 * rate2) / (rate1 * (1.0 - rate1) * rate2 * (1.0 - rate2)).sqrt()
}

#[test]
fn synthetic_label_correlations_converge_to_thresholded_targets() {
    let mut spec = SyntheticSpec::independent(4, 10_000, 0.3, 77)
        .with_pair(0, 1, 0.9)
        .with_pair(2, 3, -0.8);
    spec.rates = vec![0.3, 0.3, 0.5, 0.4];
    let d = generate_synthetic(&spec).unwrap();
    let labels: Vec<Vec<f64>> = [&d.train, &d.dev, &d.test]
        .iter()
        .flat_map(|s| s.examples.iter())
        .map(|e| e.labels.iter().map(|&v| f64::from(v)).collect())
        .collect();
    let rho = emocorr::labels::pearson_matrix(&labels);
    for i in 0..4 {
        for j in i + 1..4 {
            let expected = thresholded_phi(spec.target_correlation[i][j], spec.rates[i], spec.rates[j]);
            let got = rho[i * 4 + j];
            assert!((got - expected).abs() < 0.05, "({i},{j}): {got} vs {expected}");
        }
    }
}
