mod common;

use common::fd;
use nbest_core::tensor::{Gradients, Graph, ParamStore, Tensor, TensorError};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;

#[test]
fn every_operation_matches_finite_differences() {
    let mut rng = StdRng::seed_from_u64(2024);
    for case in fd::catalog() {
        for _ in 0..100 {
            let err = fd::relative_error(&case, &mut rng);
            assert!(err < 1e-4, "{}: relative error {err}", case.name);
        }
    }
}

#[test]
fn linear_loss_gradient_is_input() {
    let mut store = ParamStore::new();
    let w = store.add("w", Tensor::matrix(3, 1, vec![0.2, -0.4, 1.0]).unwrap());
    let unused = store.add("unused", Tensor::vector(vec![1.0, 2.0]));
    let mut g = Graph::new();
    let x = g.constant(Tensor::matrix(1, 3, vec![1.5, -2.0, 0.25]).unwrap());
    let wn = g.param(&store, w);
    let y = g.matmul(x, wn).unwrap();
    let loss = g.sum(y);
    g.backward(loss).unwrap();
    let mut grads = Gradients::zeros_like(&store);
    g.accumulate_param_grads(&mut grads);
    assert_eq!(grads.get(w), &[1.5, -2.0, 0.25]);
    assert_eq!(grads.get(unused), &[0.0, 0.0]);
}

#[test]
fn backward_from_non_scalar_is_rejected() {
    let mut g = Graph::new();
    let x = g.variable(Tensor::vector(vec![1.0, 2.0]));
    let y = g.scale(x, 2.0);
    assert!(matches!(g.backward(y), Err(TensorError::Contract(_))));
}

#[test]
fn fully_masked_softmax_row_is_rejected() {
    let mut g = Graph::new();
    let x = g.variable(Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap());
    assert!(g.softmax(x, Some(&[false, false])).is_err());
}

proptest! {
    #[test]
    fn softmax_rows_sum_to_one(
        rows in 1usize..6,
        data in proptest::collection::vec(-1e3f64..1e3, 48),
    ) {
        let cols = 48 / rows.max(1);
        let mut g = Graph::new();
        let x = g.constant(Tensor::matrix(rows, cols, data[..rows * cols].to_vec()).unwrap());
        let y = g.softmax(x, None).unwrap();
        for r in 0..rows {
            let row = g.value(y).row(r);
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(row.iter().all(|v| v.is_finite() && *v >= 0.0));
        }
    }

    #[test]
    fn operations_stay_finite_on_bounded_inputs(
        data in proptest::collection::vec(-1e3f64..1e3, 16),
    ) {
        let mut g = Graph::new();
        let x = g.variable(Tensor::matrix(4, 4, data).unwrap());
        let gamma = g.constant(Tensor::vector(vec![1.0; 4]));
        let beta = g.constant(Tensor::vector(vec![0.0; 4]));
        let n = g.layer_norm(x, gamma, beta).unwrap();
        let t = g.tanh(x);
        let s = g.softmax(x, None).unwrap();
        let m = g.matmul(s, t).unwrap();
        let a = g.add(m, n).unwrap();
        let p = g.softmax(a, None).unwrap();
        let loss = g.nll(p, &[0, 1, 2, 3]).unwrap();
        g.backward(loss).unwrap();
        prop_assert!(g.value(loss).is_finite());
        prop_assert!(g.grad(x).unwrap().iter().all(|v| v.is_finite()));
    }
}
