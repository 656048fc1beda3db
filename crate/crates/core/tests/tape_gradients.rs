use std::sync::Arc;

use approx::assert_abs_diff_eq;
use hiermem::numerics::{elu, grad_check, leaky_relu, sigmoid, softmax, Tape, Tensor, Var};
use hiermem::{Error, Result};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    // Values are pushed away from 0 and +-1 so that kinked primitives
    // (leaky ReLU, ELU, clamp) are differentiable inside the probe radius.
    let data = (0..n)
        .map(|_| {
            let mut x: f64 = rng.random_range(-2.0..2.0);
            for kink in [-1.0, 0.0, 1.0] {
                if (x - kink).abs() < 0.02 {
                    x += 0.05;
                }
            }
            x
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Contracts `v` with fixed random weights so the whole Jacobian is probed.
fn project(t: &mut Tape, v: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = random(&mut rng, t.shape(v));
    let w = t.constant(w);
    let p = t.mul(v, w)?;
    t.sum(p)
}

fn check(params: Vec<Tensor>, f: impl Fn(&mut Tape, &[Var]) -> Result<Var>) {
    let report = grad_check(&params, 1e-6, |t, v| {
        let out = f(t, v)?;
        project(t, out, 99)
    })
    .unwrap();
    assert!(report.max_relative_error < 1e-5, "{report:?}");
}

fn offsets_for(rng: &mut ChaCha8Rng, total: usize) -> Vec<usize> {
    let mut offsets = vec![0];
    let mut at = 0;
    while at < total {
        at = (at + rng.random_range(1..=3)).min(total);
        offsets.push(at);
    }
    offsets
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn every_primitive_matches_finite_differences(r in 1usize..5, c in 1usize..5, k in 1usize..4, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random(&mut rng, &[r, c]);
        let b = random(&mut rng, &[r, c]);
        let row = random(&mut rng, &[c]);
        let col = random(&mut rng, &[r]);
        let left = random(&mut rng, &[r, k]);
        let right = random(&mut rng, &[k, c]);
        let right_t = random(&mut rng, &[c, k]);
        let vec_k = random(&mut rng, &[k]);

        check(vec![left.clone(), right], |t, v| t.matmul(v[0], v[1]));
        check(vec![left.clone(), right_t], |t, v| t.matmul_t(v[0], v[1]));
        check(vec![left, vec_k], |t, v| t.matmul(v[0], v[1]));
        check(vec![a.clone(), b.clone()], |t, v| t.add(v[0], v[1]));
        check(vec![a.clone(), b.clone()], |t, v| t.sub(v[0], v[1]));
        check(vec![a.clone(), b.clone()], |t, v| t.mul(v[0], v[1]));
        check(vec![a.clone(), row], |t, v| t.add_row(v[0], v[1]));
        check(vec![a.clone(), col], |t, v| t.mul_col(v[0], v[1]));
        check(vec![a.clone()], |t, v| t.scale(v[0], -1.7));
        check(vec![a.clone()], |t, v| t.add_scalar(v[0], 0.3));
        check(vec![a.clone()], |t, v| t.reshape(v[0], &[r * c]));
        check(vec![a.clone(), b.clone()], |t, v| t.concat(&[v[0], v[1]]));
        check(vec![a.clone()], |t, v| t.slice_cols(v[0], c / 2, c));
        check(vec![a.clone()], |t, v| t.softmax_rows(v[0]));
        check(vec![a.clone()], |t, v| t.leaky_relu(v[0], 0.2));
        check(vec![a.clone()], |t, v| t.elu(v[0]));
        check(vec![a.clone()], |t, v| t.sigmoid(v[0]));
        check(vec![a.clone()], |t, v| t.log_sigmoid(v[0]));
        check(vec![a.clone()], |t, v| t.clamp(v[0], -1.0, 1.0));
        check(vec![a.clone(), b.clone()], |t, v| t.row_dot(v[0], v[1]));
        check(vec![a.clone()], |t, v| t.sum(v[0]));
        check(vec![a.clone()], |t, v| t.mean(v[0]));
        check(vec![a.clone(), b.clone()], |t, v| t.mean_of(&[v[0], v[1]]));

        let idx: Arc<[usize]> = (0..r + 2).map(|_| rng.random_range(0..r)).collect();
        check(vec![a.clone()], |t, v| t.gather_rows(v[0], idx.clone()));

        let labels: Arc<[usize]> = (0..r).map(|_| rng.random_range(0..c)).collect();
        check(vec![a.clone()], |t, v| t.cross_entropy(v[0], labels.clone()));

        let flat = random(&mut rng, &[r * c]);
        let offsets: Arc<[usize]> = offsets_for(&mut rng, r * c).into();
        check(vec![flat.clone()], |t, v| t.segment_softmax(v[0], offsets.clone()));

        let index: Arc<[usize]> = (0..r * c).map(|_| rng.random_range(0..r)).collect();
        check(vec![a, flat], |t, v| t.segment_weighted_sum(v[0], v[1], index.clone(), offsets.clone()));
    }

    #[test]
    fn softmax_is_a_shift_invariant_distribution(v in prop::collection::vec(-50.0f64..50.0, 1..10), shift in -500.0f64..500.0) {
        let p = softmax(&v);
        let shifted: Vec<f64> = v.iter().map(|x| x + shift).collect();
        let q = softmax(&shifted);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(p.iter().all(|&x| x >= 0.0));
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() < 1e-9);
        }
        let argmax = |w: &[f64]| w.iter().enumerate().fold(0, |best, (i, &x)| if x > w[best] { i } else { best });
        prop_assert_eq!(argmax(&p), argmax(&q));
    }
}

#[test]
fn identity_matmul_concat_and_head_mean() {
    let mut t = Tape::new();
    let i2 = t.constant(Tensor::identity(2));
    let x = t.constant(Tensor::vector(vec![3.0, -4.0]));
    let y = t.matmul(i2, x).unwrap();
    assert_eq!(t.value(y).data(), &[3.0, -4.0]);

    let a = t.constant(Tensor::vector(vec![1.0, 2.0]));
    let b = t.constant(Tensor::vector(vec![3.0]));
    let ab = t.concat(&[a, b]).unwrap();
    assert_eq!(t.value(ab).shape(), &[3]);
    assert_eq!(t.value(ab).data(), &[1.0, 2.0, 3.0]);

    let h = Tensor::matrix(2, 2, vec![0.5, 1.5, -2.0, 0.25]).unwrap();
    let heads: Vec<Var> = (0..4).map(|_| t.constant(h.clone())).collect();
    let m = t.mean_of(&heads).unwrap();
    assert_eq!(t.value(m), &h);
}

#[test]
fn shape_mismatch_names_both_shapes() {
    let mut t = Tape::new();
    let a = t.constant(Tensor::zeros(&[2, 3]));
    let b = t.constant(Tensor::zeros(&[2, 3]));
    let err = t.matmul(a, b).unwrap_err();
    assert!(matches!(err, Error::Dimension { .. }));
    assert!(err.to_string().contains("[2, 3]"));
}

#[test]
fn softmax_reference_values() {
    assert_eq!(softmax(&[0.0, 0.0]), vec![0.5, 0.5]);
    let p = softmax(&[1.0, 2.0, 3.0]);
    for (x, want) in p.iter().zip([0.09003, 0.24473, 0.66524]) {
        assert_abs_diff_eq!(*x, want, epsilon = 5e-6);
    }
    assert_eq!(softmax(&[1000.0, 1000.0]), vec![0.5, 0.5]);
}

#[test]
fn scalar_activation_reference_values() {
    assert_eq!(leaky_relu(-1.0, 0.2), -0.2);
    assert_eq!(sigmoid(0.0), 0.5);
    assert_abs_diff_eq!(elu(-1.0), (-1.0f64).exp() - 1.0, epsilon = 1e-15);
    assert_abs_diff_eq!(elu(-1.0), -0.63212, epsilon = 5e-6);
    assert_abs_diff_eq!(elu(-40.0), -1.0, epsilon = 1e-12);
}

#[test]
fn backward_visits_each_op_once_and_skips_constants() {
    let mut t = Tape::new();
    let x = t.param(Tensor::scalar(2.0));
    let c = t.constant(Tensor::scalar(5.0));
    let cc = t.mul(c, c).unwrap();
    let y = t.mul(x, x).unwrap();
    let z = t.add(y, cc).unwrap();
    let g = t.backward(z).unwrap();
    assert_eq!(g.visited(), 2);
    assert_eq!(g.get(x).unwrap().item(), 4.0);
    assert!(g.get(c).is_none());
    // A second pass starts from fresh accumulators.
    assert_eq!(t.backward(z).unwrap().get(x).unwrap().item(), 4.0);
}

#[test]
fn non_finite_values_are_rejected() {
    assert!(Tensor::new(vec![1], vec![f64::NAN]).is_err());
    let mut t = Tape::new();
    let x = t.constant(Tensor::scalar(1e300));
    assert!(matches!(t.mul(x, x), Err(Error::Numeric(_))));
}
