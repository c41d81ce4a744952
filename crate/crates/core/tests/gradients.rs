//! Softmax and gradient checks against oracles written independently of the
//! library: high-precision reference values and central finite differences of
//! directly coded objectives.

use peaklab::estimators::{
    cmrt_gradient, exact_expected_reward, exact_reward_gradient, CmrtParams,
};
use peaklab::policy::softmax;
use peaklab::{PolicyLogits, RewardSpec, RngStream, SampleBatch, TokenId};
use rand::Rng;

mod common;

use common::{central_difference, distinct, max_abs_diff};

const FD_TOL: f64 = 1e-6;

fn random_instance(rng: &mut RngStream) -> (Vec<f64>, Vec<f64>) {
    let n = 2 + (rng.uniform() * 9.0) as usize;
    let theta = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
    let r = (0..n).map(|_| rng.random_range(-1.0..2.0)).collect();
    (theta, r)
}

#[test]
fn softmax_matches_high_precision_reference() {
    let p = softmax(&[1.25, -0.75, 3.5, 0.125, -2.0]).unwrap();
    let reference = [
        0.091_020_816_522_136_33,
        0.012_318_327_984_451_076,
        0.863_581_462_771_687_0,
        0.029_550_132_664_883_204,
        0.003_529_260_056_842_350_6,
    ];
    for (got, want) in p.probs().iter().zip(reference) {
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }
}

#[test]
fn softmax_matches_pairwise_oracle() {
    let mut rng = RngStream::new(100);
    for _ in 0..100 {
        let (theta, _) = random_instance(&mut rng);
        let p = softmax(&theta).unwrap();
        for i in 0..theta.len() {
            assert!((p.probs()[i] - common::prob(&theta, i)).abs() < 1e-14);
        }
    }
}

#[test]
fn log_prob_gradient_matches_finite_differences() {
    let mut rng = RngStream::new(101);
    for _ in 0..100 {
        let (theta, _) = random_instance(&mut rng);
        let y = (rng.uniform() * theta.len() as f64) as usize;
        let dist = PolicyLogits::new(theta.clone()).unwrap().to_distribution();
        let g = dist.log_prob_gradient(TokenId(y)).unwrap();
        let fd = central_difference(&theta, |t| common::prob(t, y).ln());
        assert!(max_abs_diff(g.as_slice(), &fd) < FD_TOL);
    }
}

#[test]
fn exact_reward_gradient_matches_finite_differences() {
    let mut rng = RngStream::new(102);
    for _ in 0..100 {
        let (theta, r) = random_instance(&mut rng);
        let dist = PolicyLogits::new(theta.clone()).unwrap().to_distribution();
        let spec = RewardSpec::table(r.clone()).unwrap();
        let g = exact_reward_gradient(&dist, &spec).unwrap();
        let fd = central_difference(&theta, |t| common::expected_reward(t, &r));
        assert!(max_abs_diff(g.as_slice(), &fd) < FD_TOL);
        let big_r = exact_expected_reward(&dist, &spec).unwrap();
        assert!((big_r - common::expected_reward(&theta, &r)).abs() < 1e-12);
    }
}

#[test]
fn cmrt_gradient_matches_finite_differences() {
    let mut rng = RngStream::new(103);
    for _ in 0..100 {
        let (theta, r) = random_instance(&mut rng);
        let n = theta.len();
        let k = 1 + (rng.uniform() * 6.0) as usize;
        let tokens: Vec<usize> = (0..k).map(|_| (rng.uniform() * n as f64) as usize).collect();
        let alpha = rng.random_range(0.005..1.5);
        let support = distinct(&tokens);
        let dist = PolicyLogits::new(theta.clone()).unwrap().to_distribution();
        let batch = SampleBatch::new(tokens.iter().map(|&t| TokenId(t)).collect()).unwrap();
        let spec = RewardSpec::table(r.clone()).unwrap();
        let g = cmrt_gradient(&dist, &batch, &spec, CmrtParams::new(alpha, true).unwrap()).unwrap();
        let fd = central_difference(&theta, |t| common::rtilde(t, &support, &r, alpha));
        assert!(max_abs_diff(g.as_slice(), &fd) < FD_TOL);
    }
}
