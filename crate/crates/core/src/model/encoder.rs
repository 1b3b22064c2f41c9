use std::collections::HashMap;

use rand::Rng;

use super::{Architecture, Batch, EncoderSpec, InputModule, ModelError, Pooling, SentEnc};
use crate::pipeline::Vocabulary;
use crate::tensor::{Graph, ParamStore, RunRng, Tensor, Var};

pub(crate) const EMBEDDINGS: &str = "encoder.embeddings";
const FF_W: &str = "encoder.ff.w";
const FF_B: &str = "encoder.ff.b";

fn rnn_names(dir: &str) -> [String; 3] {
    [format!("encoder.rnn_{dir}.w_ih"), format!("encoder.rnn_{dir}.w_hh"), format!("encoder.rnn_{dir}.b")]
}

pub(crate) fn uniform(rng: &mut RunRng, shape: Vec<usize>, limit: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-limit..=limit)).collect()).expect("shape matches data")
}

pub(crate) fn xavier(rng: &mut RunRng, fan_in: usize, fan_out: usize) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    uniform(rng, vec![fan_in, fan_out], limit)
}

fn read_embedding_file(path: &std::path::Path, dim: usize) -> Result<HashMap<String, Vec<f64>>, ModelError> {
    let text = std::fs::read_to_string(path).map_err(|source| ModelError::EmbeddingIo { path: path.to_path_buf(), source })?;
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let mut parts = line.split_whitespace();
        let Some(token) = parts.next() else { continue };
        let values = parts
            .map(|v| v.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| ModelError::EmbeddingParse { path: path.to_path_buf(), line: i + 1, message: e.to_string() })?;
        if values.len() != dim {
            return Err(ModelError::EmbeddingDim { path: path.to_path_buf(), line: i + 1, expected: dim, found: values.len() });
        }
        out.entry(token.to_string()).or_insert(values);
    }
    Ok(out)
}

pub(crate) fn init_encoder(spec: &EncoderSpec, vocab: &Vocabulary, params: &mut ParamStore, rng: &mut RunRng) -> Result<(), ModelError> {
    let d = spec.embedding_dim;
    let mut table = uniform(rng, vec![vocab.len(), d], 0.05);
    if let InputModule::EmbeddingFile(path) = &spec.input_module {
        let vectors = read_embedding_file(path, d)?;
        let mut found = 0;
        for (i, tok) in vocab.tokens().iter().enumerate() {
            if let Some(v) = vectors.get(tok) {
                table.data_mut()[i * d..(i + 1) * d].copy_from_slice(v);
                found += 1;
            }
        }
        log::info!("loaded {found} of {} vocabulary vectors from {}", vocab.len(), path.display());
    }
    params.insert(EMBEDDINGS, table);
    match spec.sent_enc {
        SentEnc::None => {}
        SentEnc::BowFf => {
            params.insert(FF_W, xavier(rng, d, spec.hidden_dim));
            params.insert(FF_B, Tensor::zeros(vec![spec.hidden_dim]));
        }
        SentEnc::Rnn => {
            let dirs: &[&str] = if spec.bidirectional { &["fwd", "bwd"] } else { &["fwd"] };
            let h = spec.hidden_dim;
            for dir in dirs {
                let [wi, wh, b] = rnn_names(dir);
                params.insert(wi, xavier(rng, d, h));
                params.insert(wh, xavier(rng, h, h));
                params.insert(b, Tensor::zeros(vec![h]));
            }
        }
    }
    Ok(())
}

fn param(g: &mut Graph, store: &ParamStore, name: &str) -> Result<Var, ModelError> {
    let id = store.id(name).ok_or_else(|| ModelError::InvalidSpec(format!("missing parameter {name}")))?;
    Ok(g.param(store, id))
}

fn feedforward(g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var, ModelError> {
    let (w, b) = (param(g, store, FF_W)?, param(g, store, FF_B)?);
    let h = g.matmul(x, w)?;
    let h = g.add(h, b)?;
    Ok(g.tanh(h))
}

fn embed(arch: &Architecture, store: &ParamStore, g: &mut Graph, batch: &Batch, rng: &mut RunRng) -> Result<Var, ModelError> {
    let table = param(g, store, EMBEDDINGS)?;
    let emb = g.embedding_gather(table, &batch.ids, &[batch.rows(), batch.seq_len])?;
    Ok(g.dropout(emb, arch.encoder.dropout, rng)?)
}

fn recurrent(store: &ParamStore, g: &mut Graph, spec: &EncoderSpec, x: Var, mask: &[f64]) -> Result<Var, ModelError> {
    let [wi, wh, b] = rnn_names("fwd");
    let (wi, wh, b) = (param(g, store, &wi)?, param(g, store, &wh)?, param(g, store, &b)?);
    let fwd = g.rnn(x, wi, wh, b, mask, false)?;
    if !spec.bidirectional {
        return Ok(fwd);
    }
    let [wi, wh, b] = rnn_names("bwd");
    let (wi, wh, b) = (param(g, store, &wi)?, param(g, store, &wh)?, param(g, store, &b)?);
    let bwd = g.rnn(x, wi, wh, b, mask, true)?;
    Ok(g.concat(&[fwd, bwd])?)
}

/// Per-token states `[rows, seq_len, output_dim]`.
pub fn encode_tokens(arch: &Architecture, store: &ParamStore, g: &mut Graph, batch: &Batch, rng: &mut RunRng) -> Result<Var, ModelError> {
    let emb = embed(arch, store, g, batch, rng)?;
    let states = match arch.encoder.sent_enc {
        SentEnc::None => emb,
        SentEnc::BowFf => feedforward(g, store, emb)?,
        SentEnc::Rnn => recurrent(store, g, &arch.encoder, emb, &batch.mask)?,
    };
    Ok(g.dropout(states, arch.encoder.dropout, rng)?)
}

fn pool(g: &mut Graph, pooling: Pooling, x: Var, mask: &[f64]) -> Result<Var, ModelError> {
    Ok(match pooling {
        Pooling::Mean => g.mean_pool(x, mask)?,
        Pooling::Max => g.max_pool(x, mask)?,
        Pooling::First => g.first_pool(x)?,
    })
}

/// Sentence representations `[rows, output_dim]`.
pub fn encode_sentences(arch: &Architecture, store: &ParamStore, g: &mut Graph, batch: &Batch, rng: &mut RunRng) -> Result<Var, ModelError> {
    let spec = &arch.encoder;
    let rep = match spec.sent_enc {
        SentEnc::None => {
            let emb = embed(arch, store, g, batch, rng)?;
            pool(g, spec.pooling, emb, &batch.mask)?
        }
        SentEnc::BowFf => {
            let emb = embed(arch, store, g, batch, rng)?;
            let pooled = pool(g, spec.pooling, emb, &batch.mask)?;
            feedforward(g, store, pooled)?
        }
        SentEnc::Rnn => {
            let emb = embed(arch, store, g, batch, rng)?;
            let states = recurrent(store, g, spec, emb, &batch.mask)?;
            pool(g, spec.pooling, states, &batch.mask)?
        }
    };
    Ok(g.dropout(rep, spec.dropout, rng)?)
}
