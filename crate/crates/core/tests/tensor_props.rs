use phasekit::tensor::{Graph, RunRng, Tensor};
use proptest::prelude::*;

fn cross_entropy(logits: Vec<f64>, classes: usize, labels: &[Option<usize>]) -> f64 {
    let rows = logits.len() / classes;
    let mut g = Graph::new(false);
    let x = g.input(Tensor::new(vec![rows, classes], logits).unwrap());
    let loss = g.softmax_cross_entropy(x, labels).unwrap();
    g.value(loss).item()
}

proptest! {
    #[test]
    fn cross_entropy_is_nonnegative(classes in 2usize..6, rows in 1usize..5, seed in any::<u64>()) {
        use rand::Rng;
        let mut rng = RunRng::seed(seed);
        let logits: Vec<f64> = (0..rows * classes).map(|_| rng.gen_range(-20.0..20.0)).collect();
        let labels: Vec<Option<usize>> = (0..rows).map(|_| Some(rng.gen_range(0..classes))).collect();
        prop_assert!(cross_entropy(logits, classes, &labels) >= 0.0);
    }

    #[test]
    fn cross_entropy_zero_iff_label_probability_one(classes in 2usize..6, label in 0usize..6, margin in 1.0f64..30.0) {
        let label = label % classes;
        let mut logits = vec![0.0; classes];
        logits[label] = 1000.0;
        prop_assert_eq!(cross_entropy(logits.clone(), classes, &[Some(label)]), 0.0);
        logits[label] = margin;
        prop_assert!(cross_entropy(logits, classes, &[Some(label)]) > 0.0);
    }

    #[test]
    fn forward_ops_are_deterministic_given_rng(seed in any::<u64>(), p in 0.0f64..0.9) {
        let run = || {
            let mut rng = RunRng::seed(seed);
            let mut g = Graph::new(true);
            let x = g.input(Tensor::new(vec![2, 3, 4], (0..24).map(|i| i as f64 * 0.1 - 1.0).collect()).unwrap());
            let h = g.tanh(x);
            let d = g.dropout(h, p, &mut rng).unwrap();
            let pooled = g.max_pool(d, &[1.0, 1.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
            g.value(pooled).data().to_vec()
        };
        prop_assert_eq!(run(), run());
    }
}
