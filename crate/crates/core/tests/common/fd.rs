//! Central finite-difference gradient oracle over the tape operations.

use nbest_core::nn::scaled_dot_product_attention;
use nbest_core::tensor::{Graph, NodeId, Tensor};
use rand::rngs::StdRng;
use rand::Rng;

pub const STEP: f64 = 1e-5;

type Build = fn(&mut Graph, &[NodeId]) -> NodeId;
type Inputs = fn(&mut StdRng) -> Vec<Tensor>;

pub struct Case {
    pub name: &'static str,
    build: Build,
    inputs: Inputs,
}

fn rand_matrix(rng: &mut StdRng, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.random_range(-2.0..2.0)).collect();
    Tensor::matrix(rows, cols, data).unwrap()
}

/// Values bounded away from zero so a ±STEP probe never crosses a kink.
fn rand_off_zero(rng: &mut StdRng, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| {
            let m = rng.random_range(0.1..2.0);
            if rng.random::<bool>() {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::matrix(rows, cols, data).unwrap()
}

fn dims(rng: &mut StdRng) -> (usize, usize, usize) {
    (rng.random_range(1..5), rng.random_range(1..5), rng.random_range(1..5))
}

/// `sum(f(inputs) ⊙ r)` with a fixed random `r`, so every output entry
/// contributes a distinct weight.
fn loss_of(case: &Case, inputs: &[Tensor], weights: Option<&Tensor>) -> (f64, Vec<Vec<f64>>, Tensor) {
    let mut g = Graph::new();
    let ids: Vec<NodeId> = inputs.iter().map(|t| g.variable(t.clone())).collect();
    let out = (case.build)(&mut g, &ids);
    let r = match weights {
        Some(w) => w.clone(),
        None => {
            let v = g.value(out);
            let data = (0..v.len())
                .map(|i| ((i * 7919 % 13) as f64 - 6.0) / 3.0 + 0.05)
                .collect();
            Tensor::new(vec![v.rows(), v.cols()], data).unwrap()
        }
    };
    let rn = g.constant(r.clone());
    let prod = g.mul(out, rn).unwrap();
    let loss = g.sum(prod);
    g.backward(loss).unwrap();
    let grads = ids
        .iter()
        .map(|&i| {
            g.grad(i)
                .map(|x| x.to_vec())
                .unwrap_or_else(|| vec![0.0; g.value(i).len()])
        })
        .collect();
    (g.scalar(loss), grads, r)
}

/// Worst relative error between the tape gradient and central differences
/// over all inputs of one random instance.
pub fn relative_error(case: &Case, rng: &mut StdRng) -> f64 {
    let inputs = (case.inputs)(rng);
    let (_, analytic, r) = loss_of(case, &inputs, None);
    let mut worst: f64 = 0.0;
    for (i, input) in inputs.iter().enumerate() {
        let mut numeric = vec![0.0; input.len()];
        for (j, slot) in numeric.iter_mut().enumerate() {
            let mut plus = inputs.clone();
            plus[i].data_mut()[j] += STEP;
            let mut minus = inputs.clone();
            minus[i].data_mut()[j] -= STEP;
            let lp = loss_of(case, &plus, Some(&r)).0;
            let lm = loss_of(case, &minus, Some(&r)).0;
            *slot = (lp - lm) / (2.0 * STEP);
        }
        let diff: f64 = analytic[i]
            .iter()
            .zip(&numeric)
            .map(|(a, n)| (a - n) * (a - n))
            .sum::<f64>()
            .sqrt();
        let na = analytic[i].iter().map(|a| a * a).sum::<f64>().sqrt();
        let nn = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
        let scale = na.max(nn).max(1e-6);
        worst = worst.max(diff / scale);
    }
    worst
}

pub fn catalog() -> Vec<Case> {
    vec![
        Case {
            name: "matmul",
            build: |g, x| g.matmul(x[0], x[1]).unwrap(),
            inputs: |rng| {
                let (m, k, n) = dims(rng);
                vec![rand_matrix(rng, m, k), rand_matrix(rng, k, n)]
            },
        },
        Case {
            name: "matmul_nt",
            build: |g, x| g.matmul_nt(x[0], x[1]).unwrap(),
            inputs: |rng| {
                let (m, k, n) = dims(rng);
                vec![rand_matrix(rng, m, k), rand_matrix(rng, n, k)]
            },
        },
        Case {
            name: "add",
            build: |g, x| g.add(x[0], x[1]).unwrap(),
            inputs: |rng| {
                let (m, n, _) = dims(rng);
                vec![rand_matrix(rng, m, n), rand_matrix(rng, m, n)]
            },
        },
        Case {
            name: "add_bias",
            build: |g, x| g.add_bias(x[0], x[1]).unwrap(),
            inputs: |rng| {
                let (m, n, _) = dims(rng);
                vec![rand_matrix(rng, m, n), rand_matrix(rng, 1, n)]
            },
        },
        Case {
            name: "mul",
            build: |g, x| g.mul(x[0], x[1]).unwrap(),
            inputs: |rng| {
                let (m, n, _) = dims(rng);
                vec![rand_matrix(rng, m, n), rand_matrix(rng, m, n)]
            },
        },
        Case {
            name: "mul_self",
            build: |g, x| g.mul(x[0], x[0]).unwrap(),
            inputs: |rng| {
                let (m, n, _) = dims(rng);
                vec![rand_matrix(rng, m, n)]
            },
        },
        Case {
            name: "scale",
            build: |g, x| g.scale(x[0], -1.7),
            inputs: |rng| {
                let (m, n, _) = dims(rng);
                vec![rand_matrix(rng, m, n)]
            },
        },
        Case {
            name: "relu",
            build: |g, x| g.relu(x[0]),
            inputs: |rng| {
                let (m, n, _) = dims(rng);
                vec![rand_off_zero(rng, m, n)]
            },
        },
        Case {
            name: "tanh",
            build: |g, x| g.tanh(x[0]),
            inputs: |rng| {
                let (m, n, _) = dims(rng);
                vec![rand_matrix(rng, m, n)]
            },
        },
        Case {
            name: "softmax",
            build: |g, x| g.softmax(x[0], None).unwrap(),
            inputs: |rng| {
                let (m, n, _) = dims(rng);
                vec![rand_matrix(rng, m, n + 1)]
            },
        },
        Case {
            name: "softmax_masked",
            build: |g, x| {
                let v = g.value(x[0]);
                let c = v.cols();
                let keep: Vec<bool> = (0..v.len()).map(|i| i % c == 0 || i % 3 != 1).collect();
                g.softmax(x[0], Some(&keep)).unwrap()
            },
            inputs: |rng| {
                let (m, n, _) = dims(rng);
                vec![rand_matrix(rng, m, n + 2)]
            },
        },
        Case {
            name: "layer_norm",
            build: |g, x| g.layer_norm(x[0], x[1], x[2]).unwrap(),
            inputs: |rng| {
                let (m, n, _) = dims(rng);
                let n = n + 1;
                vec![rand_matrix(rng, m, n), rand_matrix(rng, 1, n), rand_matrix(rng, 1, n)]
            },
        },
        Case {
            name: "embedding",
            build: |g, x| {
                let rows = g.value(x[0]).rows();
                let ids: Vec<usize> = (0..5).map(|i| (i * 3 + 1) % rows).collect();
                g.embedding(x[0], &ids).unwrap()
            },
            inputs: |rng| {
                let (v, d, _) = dims(rng);
                vec![rand_matrix(rng, v + 1, d)]
            },
        },
        Case {
            name: "concat_rows",
            build: |g, x| g.concat_rows(&[x[0], x[1], x[0]]).unwrap(),
            inputs: |rng| {
                let (a, b, c) = dims(rng);
                vec![rand_matrix(rng, a, c), rand_matrix(rng, b, c)]
            },
        },
        Case {
            name: "concat_cols",
            build: |g, x| g.concat_cols(&[x[0], x[1]]).unwrap(),
            inputs: |rng| {
                let (a, b, r) = dims(rng);
                vec![rand_matrix(rng, r, a), rand_matrix(rng, r, b)]
            },
        },
        Case {
            name: "slice_cols",
            build: |g, x| {
                let c = g.value(x[0]).cols();
                g.slice_cols(x[0], 1, c).unwrap()
            },
            inputs: |rng| {
                let (r, c, _) = dims(rng);
                vec![rand_matrix(rng, r, c + 1)]
            },
        },
        Case {
            name: "gather_rows",
            build: |g, x| {
                let r = g.value(x[0]).rows();
                g.gather_rows(x[0], &[r - 1, 0, r - 1]).unwrap()
            },
            inputs: |rng| {
                let (r, c, _) = dims(rng);
                vec![rand_matrix(rng, r, c)]
            },
        },
        Case {
            name: "gather_cols",
            build: |g, x| {
                let c = g.value(x[0]).cols();
                g.gather_cols(x[0], &[Some(c - 1), None, Some(0), Some(c - 1)]).unwrap()
            },
            inputs: |rng| {
                let (r, c, _) = dims(rng);
                vec![rand_matrix(rng, r, c)]
            },
        },
        Case {
            name: "sum",
            build: |g, x| g.sum(x[0]),
            inputs: |rng| {
                let (r, c, _) = dims(rng);
                vec![rand_matrix(rng, r, c)]
            },
        },
        Case {
            name: "mean_rows",
            build: |g, x| g.mean_rows(x[0]),
            inputs: |rng| {
                let (r, c, _) = dims(rng);
                vec![rand_matrix(rng, r, c)]
            },
        },
        Case {
            name: "nll",
            build: |g, x| {
                let v = g.value(x[0]);
                let c = v.cols();
                let targets: Vec<usize> = (0..v.rows()).map(|r| (r * 2 + 1) % c).collect();
                g.nll(x[0], &targets).unwrap()
            },
            inputs: |rng| {
                let (r, c, _) = dims(rng);
                let data = (0..r * (c + 1)).map(|_| rng.random_range(0.05..1.0)).collect();
                vec![Tensor::matrix(r, c + 1, data).unwrap()]
            },
        },
        Case {
            name: "softmax_nll",
            build: |g, x| {
                let p = g.softmax(x[0], None).unwrap();
                let rows = g.value(p).rows();
                let targets: Vec<usize> = (0..rows).map(|r| r % 2).collect();
                g.nll(p, &targets).unwrap()
            },
            inputs: |rng| {
                let (r, c, _) = dims(rng);
                vec![rand_matrix(rng, r, c + 2)]
            },
        },
        Case {
            name: "attention",
            build: |g, x| scaled_dot_product_attention(g, x[0], x[1], x[2], None).unwrap().0,
            inputs: |rng| {
                let (tq, tk, d) = dims(rng);
                vec![
                    rand_matrix(rng, tq, d),
                    rand_matrix(rng, tk, d),
                    rand_matrix(rng, tk, 3),
                ]
            },
        },
        Case {
            name: "two_layer_network",
            // x [2,3] fixed input; W1 [3,4] + b1 [4] + W2 [4,1] = 20 parameters.
            build: |g, x| {
                let input = g.constant(Tensor::matrix(2, 3, vec![0.5, -1.0, 2.0, 1.5, 0.3, -0.7]).unwrap());
                let h = g.matmul(input, x[0]).unwrap();
                let h = g.add_bias(h, x[1]).unwrap();
                let h = g.tanh(h);
                g.matmul(h, x[2]).unwrap()
            },
            inputs: |rng| vec![rand_matrix(rng, 3, 4), rand_matrix(rng, 1, 4), rand_matrix(rng, 4, 1)],
        },
    ]
}
