//! Random gradient-check instances for every graph op.

use phasekit::tensor::{Graph, ParamStore, RunRng, Tensor, TensorError, Var};
use rand::Rng;

use super::gradcheck::max_grad_error;

fn rand_tensor(rng: &mut RunRng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

/// Values bounded away from zero, for ops with a kink at the origin.
fn rand_away_from_zero(rng: &mut RunRng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let mag = rng.gen_range(0.05..1.0);
            if rng.gen_bool(0.5) { mag } else { -mag }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

fn rand_mask(rng: &mut RunRng, b: usize, t: usize) -> Vec<f64> {
    let mut mask = Vec::with_capacity(b * t);
    for _ in 0..b {
        let len = rng.gen_range(1..=t);
        mask.extend((0..t).map(|i| if i < len { 1.0 } else { 0.0 }));
    }
    mask
}

/// Scalar projection `sum(out . r)` with fixed random weights `r`.
fn project(g: &mut Graph, out: Var, weights: &Tensor) -> Result<Var, TensorError> {
    let n = g.value(out).numel();
    let flat = g.reshape(out, &[1, n])?;
    let r = g.input(weights.clone());
    let dot = g.matmul(flat, r)?;
    Ok(g.sum(dot))
}

fn weights_for(rng: &mut RunRng, n: usize) -> Tensor {
    rand_tensor(rng, &[n, 1], 1.0)
}

pub const OP_NAMES: &[&str] = &[
    "matmul", "add", "tanh", "sigmoid", "relu", "embedding_gather", "mean_pool", "max_pool", "first_pool", "concat",
    "dropout", "softmax_cross_entropy", "mse", "sum", "scale", "reshape", "rnn_forward", "rnn_reverse",
];

/// Runs `instances` random gradient checks of `op`; returns the worst error.
pub fn check_op(op: &str, instances: usize, seed: u64) -> Result<f64, TensorError> {
    let mut rng = RunRng::seed(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let b = rng.gen_range(1..4);
        let t = rng.gen_range(1..5);
        let d = rng.gen_range(1..5);
        let h = rng.gen_range(1..4);
        let mut store = ParamStore::new();
        let err = match op {
            "matmul" => {
                let lead = rng.gen_range(1..4);
                store.insert("a", rand_tensor(&mut rng, &[lead, d, h + 1], 1.0));
                store.insert("b", rand_tensor(&mut rng, &[h + 1, t], 1.0));
                let w = weights_for(&mut rng, lead * d * t);
                max_grad_error(&mut store, |g, s| {
                    let a = g.param(s, s.id("a").unwrap());
                    let bb = g.param(s, s.id("b").unwrap());
                    let out = g.matmul(a, bb)?;
                    project(g, out, &w)
                })?
            }
            "add" => {
                store.insert("a", rand_tensor(&mut rng, &[b, t, d], 1.0));
                store.insert("b", rand_tensor(&mut rng, &[t, d], 1.0));
                let w = weights_for(&mut rng, b * t * d);
                max_grad_error(&mut store, |g, s| {
                    let a = g.param(s, s.id("a").unwrap());
                    let bb = g.param(s, s.id("b").unwrap());
                    let out = g.add(a, bb)?;
                    project(g, out, &w)
                })?
            }
            "tanh" | "sigmoid" | "relu" | "scale" | "sum" | "reshape" => {
                let x = if op == "relu" { rand_away_from_zero(&mut rng, &[b, d]) } else { rand_tensor(&mut rng, &[b, d], 2.0) };
                store.insert("x", x);
                let w = weights_for(&mut rng, b * d);
                let c: f64 = rng.gen_range(-2.0..2.0);
                let name = op.to_string();
                max_grad_error(&mut store, |g, s| {
                    let x = g.param(s, s.id("x").unwrap());
                    let out = match name.as_str() {
                        "tanh" => g.tanh(x),
                        "sigmoid" => g.sigmoid(x),
                        "relu" => g.relu(x),
                        "scale" => g.scale(x, c),
                        "sum" => {
                            let t = g.tanh(x);
                            let s = g.sum(t);
                            return Ok(g.scale(s, c));
                        }
                        _ => g.reshape(x, &[d, b])?,
                    };
                    project(g, out, &w)
                })?
            }
            "embedding_gather" => {
                let vocab = rng.gen_range(2..7);
                store.insert("table", rand_tensor(&mut rng, &[vocab, d], 0.5));
                let idx: Vec<usize> = (0..b * t).map(|_| rng.gen_range(0..vocab)).collect();
                let w = weights_for(&mut rng, b * t * d);
                max_grad_error(&mut store, |g, s| {
                    let table = g.param(s, s.id("table").unwrap());
                    let out = g.embedding_gather(table, &idx, &[b, t])?;
                    project(g, out, &w)
                })?
            }
            "mean_pool" | "max_pool" | "first_pool" => {
                store.insert("x", rand_tensor(&mut rng, &[b, t, d], 1.0));
                let mask = rand_mask(&mut rng, b, t);
                let w = weights_for(&mut rng, b * d);
                let name = op.to_string();
                max_grad_error(&mut store, |g, s| {
                    let x = g.param(s, s.id("x").unwrap());
                    let out = match name.as_str() {
                        "mean_pool" => g.mean_pool(x, &mask)?,
                        "max_pool" => g.max_pool(x, &mask)?,
                        _ => g.first_pool(x)?,
                    };
                    project(g, out, &w)
                })?
            }
            "concat" => {
                store.insert("p", rand_tensor(&mut rng, &[b, t, d], 1.0));
                store.insert("q", rand_tensor(&mut rng, &[b, t, h], 1.0));
                let w = weights_for(&mut rng, b * t * (d + h));
                max_grad_error(&mut store, |g, s| {
                    let p = g.param(s, s.id("p").unwrap());
                    let q = g.param(s, s.id("q").unwrap());
                    let out = g.concat(&[p, q])?;
                    project(g, out, &w)
                })?
            }
            "dropout" => {
                store.insert("x", rand_tensor(&mut rng, &[b, d], 1.0));
                let w = weights_for(&mut rng, b * d);
                let drop_seed: u64 = rng.gen();
                max_grad_error(&mut store, |g, s| {
                    let mut drop_rng = RunRng::seed(drop_seed);
                    let x = g.param(s, s.id("x").unwrap());
                    let out = g.dropout(x, 0.3, &mut drop_rng)?;
                    project(g, out, &w)
                })?
            }
            "softmax_cross_entropy" => {
                let k = rng.gen_range(2..6);
                let n = rng.gen_range(1..5);
                store.insert("logits", rand_tensor(&mut rng, &[n, k], 2.0));
                let mut labels: Vec<Option<usize>> =
                    (0..n).map(|_| if rng.gen_bool(0.8) { Some(rng.gen_range(0..k)) } else { None }).collect();
                labels[0] = Some(rng.gen_range(0..k));
                max_grad_error(&mut store, |g, s| {
                    let l = g.param(s, s.id("logits").unwrap());
                    g.softmax_cross_entropy(l, &labels)
                })?
            }
            "mse" => {
                store.insert("pred", rand_tensor(&mut rng, &[b, 1], 2.0));
                let target: Vec<f64> = (0..b).map(|_| rng.gen_range(-2.0..2.0)).collect();
                max_grad_error(&mut store, |g, s| {
                    let p = g.param(s, s.id("pred").unwrap());
                    g.mse(p, &target)
                })?
            }
            "rnn_forward" | "rnn_reverse" => {
                store.insert("x", rand_tensor(&mut rng, &[b, t, d], 1.0));
                store.insert("w_ih", rand_tensor(&mut rng, &[d, h], 0.8));
                store.insert("w_hh", rand_tensor(&mut rng, &[h, h], 0.8));
                store.insert("bias", rand_tensor(&mut rng, &[h], 0.3));
                let mask = rand_mask(&mut rng, b, t);
                let w = weights_for(&mut rng, b * t * h);
                let reverse = op == "rnn_reverse";
                max_grad_error(&mut store, |g, s| {
                    let x = g.param(s, s.id("x").unwrap());
                    let wi = g.param(s, s.id("w_ih").unwrap());
                    let wh = g.param(s, s.id("w_hh").unwrap());
                    let bias = g.param(s, s.id("bias").unwrap());
                    let out = g.rnn(x, wi, wh, bias, &mask, reverse)?;
                    project(g, out, &w)
                })?
            }
            other => panic!("no gradient case for op {other}"),
        };
        worst = worst.max(err);
    }
    Ok(worst)
}
