//! Gradient checks of the full encoder plus head over random architectures.

use std::path::Path;

use phasekit::corpus::{generate_synthetic_suite, Split, SynthParams};
use phasekit::model::{forward_with, Batch, ClassifierKind, EncoderSpec, ModelAssembly, Pooling, SentEnc};
use phasekit::pipeline::{build_vocab_for_tasks, preprocess, PreprocessOptions};
use phasekit::tensor::RunRng;
use rand::seq::SliceRandom;
use rand::Rng;

use super::gradcheck::max_grad_error;

pub struct CompositeResult {
    pub instances: usize,
    pub worst: f64,
    pub worst_case: String,
}

/// Checks `instances` random (encoder, pooling, classifier, task) combinations
/// on tiny dimensions, cycling through every task type.
pub fn check_composite(instances: usize, seed: u64, dir: &Path) -> Result<CompositeResult, String> {
    let params = SynthParams { vocab_size: 40, num_triggers: 5, min_len: 2, max_len: 4, intermediate_train: 8, target_train: 8, eval_size: 4, aux_train: 8, aux_eval: 4, num_choices: 3 };
    let suite = generate_synthetic_suite(seed, &params, dir).map_err(|e| e.to_string())?;
    let descs: Vec<_> = suite.descriptors.iter().collect();
    let vocab = build_vocab_for_tasks(descs.iter().copied(), 12).map_err(|e| e.to_string())?;
    let opts = PreprocessOptions::new(8, None);
    let mut rng = RunRng::seed(seed);
    let mut result = CompositeResult { instances: 0, worst: 0.0, worst_case: String::new() };
    for i in 0..instances {
        let desc = descs[i % descs.len()];
        let spec = EncoderSpec {
            embedding_dim: rng.gen_range(2..4),
            sent_enc: *[SentEnc::None, SentEnc::BowFf, SentEnc::Rnn].choose(&mut rng).unwrap(),
            hidden_dim: rng.gen_range(2..4),
            bidirectional: rng.gen_bool(0.5),
            pooling: *[Pooling::Mean, Pooling::Max, Pooling::First].choose(&mut rng).unwrap(),
            dropout: 0.0,
            ..EncoderSpec::default()
        };
        let classifier = if rng.gen_bool(0.5) { ClassifierKind::LogReg } else { ClassifierKind::Mlp { hidden: 3 } };
        let mut model = ModelAssembly::build(&spec, &vocab, &[desc], classifier, &mut rng).map_err(|e| e.to_string())?;
        let data = preprocess(desc, Split::Train, &vocab, &opts).map_err(|e| e.to_string())?.0;
        let n = rng.gen_range(2..4);
        let refs: Vec<_> = data.examples.iter().take(n).collect();
        let batch = Batch::new(&refs).map_err(|e| e.to_string())?;
        let arch = model.arch.clone();
        let err = max_grad_error(&mut model.params, |g, s| {
            let out = forward_with(&arch, s, g, desc, &batch, &mut RunRng::seed(0)).expect("forward pass");
            Ok(out.loss.expect("labelled batch"))
        })
        .map_err(|e| e.to_string())?;
        result.instances += 1;
        if err >= result.worst {
            result.worst = err;
            result.worst_case = format!("{} {:?}/{:?}/{:?}", desc.name, spec.sent_enc, spec.pooling, classifier);
        }
    }
    Ok(result)
}
