mod common;

use common::gradcheck::max_grad_error;
use common::opcases::{check_op, OP_NAMES};
use phasekit::tensor::{Graph, ParamStore, RunRng, Tensor};
use rand::Rng;

#[test]
fn every_op_matches_finite_differences() {
    for (i, op) in OP_NAMES.iter().enumerate() {
        let err = check_op(op, 20, 100 + i as u64).unwrap();
        assert!(err < 1e-4, "{op}: max relative error {err:e}");
    }
}

#[test]
fn matmul_3x4_by_4x2_within_1e6() {
    let mut rng = RunRng::seed(5);
    let mut store = ParamStore::new();
    let a: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let b: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let r: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
    store.insert("a", Tensor::new(vec![3, 4], a).unwrap());
    store.insert("b", Tensor::new(vec![4, 2], b).unwrap());
    let err = max_grad_error(&mut store, |g, s| {
        let a = g.param(s, s.id("a").unwrap());
        let b = g.param(s, s.id("b").unwrap());
        let out = g.matmul(a, b)?;
        let flat = g.reshape(out, &[1, 6])?;
        let w = g.input(Tensor::new(vec![6, 1], r.clone()).unwrap());
        let dot = g.matmul(flat, w)?;
        Ok(g.sum(dot))
    })
    .unwrap();
    assert!(err < 1e-6, "matmul relative error {err:e}");
}

#[test]
fn two_layer_mlp_loss_matches_finite_differences() {
    let mut rng = RunRng::seed(11);
    let mut store = ParamStore::new();
    let mut rand = |shape: Vec<usize>| {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.gen_range(-0.7..0.7)).collect()).unwrap()
    };
    store.insert("w1", rand(vec![5, 6]));
    store.insert("b1", rand(vec![6]));
    store.insert("w2", rand(vec![6, 3]));
    store.insert("b2", rand(vec![3]));
    let x = rand(vec![4, 5]);
    let err = max_grad_error(&mut store, |g, s| {
        let x = g.input(x.clone());
        let w1 = g.param(s, s.id("w1").unwrap());
        let b1 = g.param(s, s.id("b1").unwrap());
        let w2 = g.param(s, s.id("w2").unwrap());
        let b2 = g.param(s, s.id("b2").unwrap());
        let h = g.matmul(x, w1)?;
        let h = g.add(h, b1)?;
        let h = g.tanh(h);
        let o = g.matmul(h, w2)?;
        let o = g.add(o, b2)?;
        g.softmax_cross_entropy(o, &[Some(0), Some(2), Some(1), Some(2)])
    })
    .unwrap();
    assert!(err < 1e-4, "mlp relative error {err:e}");
}

#[test]
fn sum_gives_unit_gradients_and_accumulates() {
    let mut store = ParamStore::new();
    let id = store.insert("w", Tensor::new(vec![2, 3], vec![0.5; 6]).unwrap());
    for expected in [1.0, 2.0] {
        let mut g = Graph::new(true);
        let w = g.param(&store, id);
        let loss = g.sum(w);
        g.backward(loss, &mut store).unwrap();
        assert!(store.get(id).grad.as_ref().unwrap().data().iter().all(|&v| v == expected));
    }
}

#[test]
fn encoder_head_composites_match_finite_differences() {
    let dir = tempfile::tempdir().unwrap();
    let result = common::composite::check_composite(20, 3, dir.path()).unwrap();
    assert_eq!(result.instances, 20);
    assert!(result.worst < 1e-4, "{}: {:e}", result.worst_case, result.worst);
}
