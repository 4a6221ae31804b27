//! Helpers shared by the integration test targets.

#![allow(dead_code)]

use rdbalance::balance::balanced_direction;
use rdbalance::optim::PlainDescent;
use rdbalance::problems::{Batch, ImbalancedQuadratic, Problem};
use rdbalance::solution1::{
    solution1_step, weights_of, TrajectoryState, DEFAULT_BETA, DEFAULT_GAMMA,
};
use rdbalance::solution2::solution2_step;
use rdbalance::ParamVector;
use serde::Deserialize;

pub const GOLDEN_TOL: f64 = 1e-12;
const ALPHA: f64 = 0.1;

#[derive(Deserialize)]
struct Golden {
    solution1: Solution1Fixture,
    solution2: Solution2Fixture,
}

#[derive(Deserialize)]
struct Solution1Fixture {
    losses: [f64; 2],
    renorm: f64,
    direction: [f64; 2],
    theta1: [f64; 2],
    losses1: [f64; 2],
    delta: [f64; 2],
    xi1: [f64; 2],
    w1: [f64; 2],
}

#[derive(Deserialize)]
struct Solution2Fixture {
    gram: [f64; 3],
    kkt_lambda: f64,
    raw: [f64; 2],
    weights: [f64; 2],
    renorm: f64,
    direction: [f64; 2],
    theta1: [f64; 2],
}

/// A named quantity: (name, implementation, fixture).
pub type Comparison = (&'static str, Vec<f64>, Vec<f64>);

fn golden() -> Golden {
    toml::from_str(include_str!("../fixtures/golden_step.toml")).expect("golden fixture parses")
}

/// The 2-parameter quadratic of the fixture script.
fn fixture() -> ImbalancedQuadratic {
    ImbalancedQuadratic::new(1.0, 4.0, vec![1.0, 0.0], vec![0.0, 1.0], 0.5).unwrap()
}

/// One trajectory-weighted step from the origin.
pub fn solution1() -> Vec<Comparison> {
    let g = golden().solution1;
    let p = fixture();
    let theta = ParamVector::zeros(2);
    let state = TrajectoryState::new([0.0, 0.0], DEFAULT_BETA, DEFAULT_GAMMA).unwrap();
    let batch = Batch::empty(0);
    let step = solution1_step(&p, &batch, &theta, &state, &mut PlainDescent, ALPHA, true).unwrap();
    let (losses, grads) = p.eval_with_grads(&theta, &batch).unwrap();
    let direction = balanced_direction(&step.record.weights, &losses, &grads).unwrap();
    let w1 = weights_of(&step.state);
    vec![
        (
            "losses",
            vec![losses.rate, losses.distortion],
            g.losses.to_vec(),
        ),
        ("renorm", vec![step.record.renorm.unwrap()], vec![g.renorm]),
        ("direction", direction, g.direction.to_vec()),
        ("theta1", step.theta.to_vec(), g.theta1.to_vec()),
        (
            "losses1",
            vec![step.next_losses.rate, step.next_losses.distortion],
            g.losses1.to_vec(),
        ),
        ("delta", step.delta.to_vec(), g.delta.to_vec()),
        ("xi1", step.state.xi().to_vec(), g.xi1.to_vec()),
        ("w1", vec![w1.rate(), w1.distortion()], g.w1.to_vec()),
    ]
}

/// One QP-weighted step from the origin.
pub fn solution2() -> Vec<Comparison> {
    let g = golden().solution2;
    let p = fixture();
    let theta = ParamVector::zeros(2);
    let batch = Batch::empty(0);
    let step = solution2_step(&p, &batch, &theta, &mut PlainDescent, ALPHA, true).unwrap();
    assert!(!step.record.fallback, "fixture gram matrix is regular");
    let (losses, grads) = p.eval_with_grads(&theta, &batch).unwrap();
    let direction = balanced_direction(&step.record.weights, &losses, &grads).unwrap();
    let w = step.record.weights;
    vec![
        (
            "gram",
            vec![step.gram.q11, step.gram.q22, step.gram.q12],
            g.gram.to_vec(),
        ),
        (
            "kkt_lambda",
            vec![step.record.kkt_lambda.unwrap()],
            vec![g.kkt_lambda],
        ),
        (
            "raw",
            step.record.raw_weights.unwrap().to_vec(),
            g.raw.to_vec(),
        ),
        (
            "weights",
            vec![w.rate(), w.distortion()],
            g.weights.to_vec(),
        ),
        ("renorm", vec![step.record.renorm.unwrap()], vec![g.renorm]),
        ("direction", direction, g.direction.to_vec()),
        ("theta1", step.theta.to_vec(), g.theta1.to_vec()),
    ]
}

/// Largest absolute deviation over a set of comparisons.
pub fn max_deviation(items: &[Comparison]) -> f64 {
    items
        .iter()
        .flat_map(|(name, got, want)| {
            assert_eq!(got.len(), want.len(), "{name}");
            got.iter().zip(want).map(|(a, b)| (a - b).abs())
        })
        .fold(0.0, f64::max)
}
