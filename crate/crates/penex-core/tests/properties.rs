//! Property tests for the structural invariants: translation behavior of
//! margins, boundedness of the tape reductions, dataset transforms, clip
//! modes, boosting weight normalization, and the inconsistency probe.

use proptest::prelude::*;

use penex_core::boost::{samme_round, RoundOutcome};
use penex_core::data::{flip_labels, gen_blobs, split};
use penex_core::losses::{self, margin, softmax_probs_scaled};
use penex_core::metrics::{argmax_row, brier};
use penex_core::model::{forward_graph, ModelSpec, Parameters};
use penex_core::optim::{ClipMode, OptimSpec, Optimizer};
use penex_core::tape::Tape;
use penex_core::verify::conf_penalty_minimizer;

fn logits_strategy(n: usize, k: usize, bound: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-bound..bound, n * k)
}

fn labels_strategy(n: usize, k: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0..k, n)
}

proptest! {
    #[test]
    fn log_sum_exp_lies_between_max_and_max_plus_log_k(
        logits in logits_strategy(4, 3, 50.0),
    ) {
        let tape = Tape::new();
        let x = tape.constant(logits.clone(), 4, 3).unwrap();
        let lse = x.log_sum_exp().unwrap();
        let values = lse.data();
        for (row, &v) in logits.chunks_exact(3).zip(values.iter()) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(v >= max - 1e-12);
            prop_assert!(v <= max + (3.0f64).ln() + 1e-12);
        }
    }

    #[test]
    fn margins_are_translation_invariant(
        logits in logits_strategy(4, 3, 30.0),
        labels in labels_strategy(4, 3),
        shift in -20.0f64..20.0,
    ) {
        let base = margin(&logits, 3, &labels).unwrap();
        let shifted_logits: Vec<f64> = logits
            .chunks_exact(3)
            .flat_map(|row| row.iter().map(move |&v| v + shift))
            .collect();
        let shifted = margin(&shifted_logits, 3, &labels).unwrap();
        for (a, b) in base.iter().zip(&shifted) {
            prop_assert!((a - b).abs() < 1e-9, "margin moved from {a} to {b}");
        }
    }

    #[test]
    fn positive_rescaling_preserves_the_argmax(
        logits in logits_strategy(3, 4, 30.0),
        scale in 0.01f64..100.0,
    ) {
        let probs = softmax_probs_scaled(&logits, 4, scale);
        for (row, prow) in logits.chunks_exact(4).zip(probs.chunks_exact(4)) {
            let direct = argmax_row(row);
            prop_assert_eq!(argmax_row(prow), direct);
            let total: f64 = prow.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn every_loss_is_finite_on_bounded_logits(
        raw in logits_strategy(4, 3, 30.0),
        labels in labels_strategy(4, 3),
    ) {
        let tape = Tape::new();
        let logits = tape.constant(raw, 4, 3).unwrap();
        let values = [
            losses::ex_loss(&logits, &labels, 0.4).unwrap().value().unwrap(),
            losses::penex_loss(&logits, &labels, 0.4, 0.1).unwrap().value().unwrap(),
            losses::cross_entropy(&logits, &labels).unwrap().value().unwrap(),
            losses::label_smoothing_loss(&logits, &labels, 0.1).unwrap().value().unwrap(),
            losses::confidence_penalty_loss(&logits, &labels, 0.3).unwrap().value().unwrap(),
            losses::focal_loss(&logits, &labels, 2.0).unwrap().value().unwrap(),
            losses::conex_sq_penalty_loss(&logits, &labels, 0.5, 0.5, false)
                .unwrap()
                .value()
                .unwrap(),
            losses::conex_aug_lagrangian_loss(&logits, &labels, 0.5, 0.5, 0.2, false)
                .unwrap()
                .value()
                .unwrap(),
        ];
        for v in values {
            prop_assert!(v.is_finite(), "loss value {v}");
        }
    }

    #[test]
    fn brier_score_stays_in_range(
        raw in logits_strategy(5, 3, 20.0),
        labels in labels_strategy(5, 3),
    ) {
        let probs = softmax_probs_scaled(&raw, 3, 1.0);
        let b = brier(&probs, 3, &labels).unwrap();
        prop_assert!((0.0..=2.0).contains(&b), "brier {b}");
    }

    #[test]
    fn value_clipping_bounds_every_coordinate(
        grads in prop::collection::vec(-100.0f64..100.0, 12),
        cap in 0.01f64..10.0,
    ) {
        let mut spec = OptimSpec::sgd(0.1);
        spec.grad_clip_value = Some(cap);
        spec.clip_mode = ClipMode::Value;
        let optim = Optimizer::<f64>::new(spec).unwrap();
        let mut buckets = vec![grads[..5].to_vec(), grads[5..].to_vec()];
        optim.clip_gradients(&mut buckets);
        for g in buckets.iter().flatten() {
            prop_assert!(g.abs() <= cap + 1e-12);
        }
    }

    #[test]
    fn norm_clipping_bounds_the_global_norm(
        grads in prop::collection::vec(-100.0f64..100.0, 12),
        cap in 0.01f64..10.0,
    ) {
        let mut spec = OptimSpec::sgd(0.1);
        spec.grad_clip_value = Some(cap);
        spec.clip_mode = ClipMode::GlobalNorm;
        let optim = Optimizer::<f64>::new(spec).unwrap();
        let mut buckets = vec![grads[..5].to_vec(), grads[5..].to_vec()];
        optim.clip_gradients(&mut buckets);
        let norm: f64 = buckets.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
        prop_assert!(norm <= cap * (1.0 + 1e-9));
    }

    #[test]
    fn flipped_labels_never_keep_their_original_class(
        fraction in 0.05f64..1.0,
        seed in 0u64..500,
    ) {
        let data = gen_blobs(40, 3, 2, 1.0, 7).unwrap();
        let flipped = flip_labels(&data, fraction, seed).unwrap();
        let expected = (fraction * 40.0).floor() as usize;
        let changed = data
            .labels
            .iter()
            .zip(&flipped.labels)
            .filter(|(a, b)| a != b)
            .count();
        // An exact count proves no flipped row kept its class: a kept
        // class would make the count fall short.
        prop_assert_eq!(changed, expected);
        prop_assert!(flipped.labels.iter().all(|&l| l < 3));
    }

    #[test]
    fn split_partitions_every_row(
        ratio in 0.1f64..0.9,
        seed in 0u64..500,
    ) {
        let data = gen_blobs(30, 3, 2, 1.0, 11).unwrap();
        let (train, val) = split(&data, ratio, seed).unwrap();
        prop_assert_eq!(train.len() + val.len(), 30);
        prop_assert_eq!(train.len(), (ratio * 30.0).ceil() as usize);

        let mut rows: Vec<Vec<u64>> = Vec::new();
        for part in [&train, &val] {
            for i in 0..part.len() {
                let mut row: Vec<u64> = part.row(i).iter().map(|v| v.to_bits()).collect();
                row.push(part.labels[i] as u64);
                rows.push(row);
            }
        }
        rows.sort();
        let mut original: Vec<Vec<u64>> = (0..30)
            .map(|i| {
                let mut row: Vec<u64> = data.row(i).iter().map(|v| v.to_bits()).collect();
                row.push(data.labels[i] as u64);
                row
            })
            .collect();
        original.sort();
        prop_assert_eq!(rows, original);
    }

    #[test]
    fn boosting_reweight_stays_on_the_simplex(seed in 0u64..200) {
        let data = gen_blobs(24, 3, 2, 1.4, seed).unwrap();
        let weights = vec![1.0 / 24.0; 24];
        match samme_round(&data, &weights).unwrap() {
            RoundOutcome::Accepted(round) => {
                let total: f64 = round.weights.iter().sum();
                prop_assert!((total - 1.0).abs() < 1e-9);
                prop_assert!(round.weights.iter().all(|&w| w > 0.0));
            }
            RoundOutcome::Rejected { epsilon } => {
                prop_assert!(epsilon >= 2.0 / 3.0 - 1e-12);
            }
        }
    }

    #[test]
    fn entropy_penalty_moves_the_minimizer_for_skewed_distributions(
        p0 in 0.55f64..0.95,
        lambda in 0.05f64..2.0,
    ) {
        let probs = [p0, 1.0 - p0];
        let m = conf_penalty_minimizer(&probs, lambda).unwrap();
        prop_assert!((m[0] - p0).abs() > 1e-4, "minimizer stayed at {p0} under lambda {lambda}");
        prop_assert!(m[0] < p0, "penalty should pull the top class down");
    }

    #[test]
    fn dropout_rescales_or_zeroes_forward_activations(
        seed in 0u64..100,
    ) {
        use rand::SeedableRng;
        let spec = ModelSpec {
            input_dim: 2,
            hidden_dims: vec![6],
            num_classes: 2,
            dropout_p: 0.5,
            conex_hard: false,
        };
        let params = penex_core::model::init_model::<f64>(&spec, seed).unwrap();
        let batch = [0.3, -0.7, 1.1, 0.4];
        let tape = Tape::new();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let (logits, _) =
            forward_graph(&spec, &params, &tape, &batch, 2, Some(&mut rng)).unwrap();
        for v in logits.data() {
            prop_assert!(v.is_finite());
        }
        let replay: Parameters<f64> = params.clone();
        let tape2 = Tape::new();
        let mut rng2 = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let (logits2, _) =
            forward_graph(&spec, &replay, &tape2, &batch, 2, Some(&mut rng2)).unwrap();
        prop_assert_eq!(logits.data(), logits2.data());
    }
}
