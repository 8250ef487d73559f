//! Tape gradients against central finite differences for every loss, on
//! random parameter points of a small two-layer network.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use penex_core::losses::{
    conex_aug_lagrangian_loss, conex_sq_penalty_loss, confidence_penalty_loss, cross_entropy,
    ex_loss, focal_loss, label_smoothing_loss, penex_loss,
};
use penex_core::model::{forward_graph, init_model, ModelSpec, Parameters};
use penex_core::tape::{Tape, Tensor};
use penex_core::verify::fd_gradient;

const H: f64 = 1e-6;
const REL_TOL: f64 = 1e-4;
const POINTS: usize = 100;

#[derive(Clone, Copy)]
enum Loss {
    Ex,
    Penex,
    Ce,
    Smoothing,
    ConfPenalty,
    Focal,
    SqPenalty,
    SqPenaltyConventional,
    AugLagrangian,
    HardConstraint,
}

const ALL_LOSSES: [Loss; 10] = [
    Loss::Ex,
    Loss::Penex,
    Loss::Ce,
    Loss::Smoothing,
    Loss::ConfPenalty,
    Loss::Focal,
    Loss::SqPenalty,
    Loss::SqPenaltyConventional,
    Loss::AugLagrangian,
    Loss::HardConstraint,
];

fn loss_graph(loss: Loss, logits: &Tensor<f64>, labels: &[usize]) -> Tensor<f64> {
    match loss {
        Loss::Ex | Loss::HardConstraint => ex_loss(logits, labels, 0.4).unwrap(),
        Loss::Penex => penex_loss(logits, labels, 0.4, 0.07).unwrap(),
        Loss::Ce => cross_entropy(logits, labels).unwrap(),
        Loss::Smoothing => label_smoothing_loss(logits, labels, 0.1).unwrap(),
        Loss::ConfPenalty => confidence_penalty_loss(logits, labels, 0.3).unwrap(),
        Loss::Focal => focal_loss(logits, labels, 2.0).unwrap(),
        Loss::SqPenalty => conex_sq_penalty_loss(logits, labels, 0.5, 0.5, false).unwrap(),
        Loss::SqPenaltyConventional => {
            conex_sq_penalty_loss(logits, labels, 0.5, 0.5, true).unwrap()
        }
        Loss::AugLagrangian => {
            conex_aug_lagrangian_loss(logits, labels, 0.5, 0.5, 0.2, false).unwrap()
        }
    }
}

fn model_for(loss: Loss) -> ModelSpec {
    ModelSpec {
        input_dim: 2,
        hidden_dims: vec![4],
        num_classes: 3,
        dropout_p: 0.0,
        conex_hard: matches!(loss, Loss::HardConstraint),
    }
}

fn loss_value(
    loss: Loss,
    spec: &ModelSpec,
    params: &Parameters<f64>,
    batch: &[f64],
    labels: &[usize],
    n: usize,
) -> f64 {
    let tape = Tape::new();
    let (logits, _) = forward_graph(spec, params, &tape, batch, n, None).unwrap();
    loss_graph(loss, &logits, labels).value().unwrap()
}

fn tape_gradient(
    loss: Loss,
    spec: &ModelSpec,
    params: &Parameters<f64>,
    batch: &[f64],
    labels: &[usize],
    n: usize,
) -> Vec<f64> {
    let tape = Tape::new();
    let (logits, leaves) = forward_graph(spec, params, &tape, batch, n, None).unwrap();
    loss_graph(loss, &logits, labels).backward().unwrap();
    leaves.iter().flat_map(|l| l.grad().unwrap()).collect()
}

fn perturb(params: &mut Parameters<f64>, rng: &mut ChaCha8Rng) {
    for layer in &mut params.layers {
        for v in layer.weight.iter_mut().chain(layer.bias.iter_mut()) {
            *v += rng.gen::<f64>() - 0.5;
        }
    }
}

#[test]
fn tape_gradients_match_central_differences() {
    let started = std::time::Instant::now();
    let n = 5;
    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    let batch: Vec<f64> = (0..n * 2).map(|_| 2.0 * rng.gen::<f64>() - 1.0).collect();
    let labels = vec![0, 1, 2, 1, 0];

    let mut worst: f64 = 0.0;
    for loss in ALL_LOSSES {
        let spec = model_for(loss);
        for point in 0..POINTS {
            let mut params = init_model::<f64>(&spec, point as u64).unwrap();
            perturb(&mut params, &mut rng);

            let analytic = tape_gradient(loss, &spec, &params, &batch, &labels, n);
            let numeric = fd_gradient(&params, H, |p| {
                Ok(loss_value(loss, &spec, p, &batch, &labels, n))
            })
            .unwrap();
            assert_eq!(analytic.len(), numeric.len());

            for (a, f) in analytic.iter().zip(&numeric) {
                let rel = (a - f).abs() / a.abs().max(f.abs()).max(1e-4);
                worst = worst.max(rel);
                assert!(
                    rel < REL_TOL,
                    "relative error {rel} at point {point} (analytic {a}, numeric {f})"
                );
            }
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 30.0, "gradient check took {elapsed}s");
    println!("worst relative error {worst:.3e} in {elapsed:.2}s");
}
