use std::path::{Path, PathBuf};

use super::{IndexedDataset, IndexedExample, IndexedTarget, PipelineError, FORMAT_VERSION};
use crate::codec::{seal, unseal, write_atomic, DecodeError, Reader, Writer};
use crate::corpus::Split;

const MAGIC: &[u8; 8] = b"PKINDEX\0";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheStatus {
    Hit,
    Miss,
    Disabled,
}

fn entry_paths(fingerprint: &str, dir: &Path) -> (PathBuf, PathBuf) {
    (dir.join(format!("{fingerprint}.idx")), dir.join(format!("{fingerprint}.meta")))
}

fn split_code(split: Split) -> u8 {
    match split {
        Split::Train => 0,
        Split::Val => 1,
        Split::Test => 2,
    }
}

fn encode(ds: &IndexedDataset) -> Vec<u8> {
    let mut w = Writer::new();
    w.str(&ds.task);
    w.u8(split_code(ds.split));
    w.str(&ds.fingerprint);
    w.len(ds.max_seq_len);
    w.len(ds.examples.len());
    for ex in &ds.examples {
        w.len(ex.sequences.len());
        for seq in &ex.sequences {
            w.u32s(seq);
        }
        match &ex.target {
            None => w.u8(0),
            Some(IndexedTarget::Label(l)) => {
                w.u8(1);
                w.u32(*l);
            }
            Some(IndexedTarget::Value(v)) => {
                w.u8(2);
                w.f64(*v);
            }
            Some(IndexedTarget::Choice(c)) => {
                w.u8(3);
                w.u32(*c);
            }
            Some(IndexedTarget::Tags(t)) => {
                w.u8(4);
                w.u32s(t);
            }
        }
    }
    seal(MAGIC, FORMAT_VERSION, &w.into_bytes())
}

fn decode(bytes: &[u8]) -> Result<IndexedDataset, DecodeError> {
    let mut r = Reader::new(unseal(bytes, MAGIC, FORMAT_VERSION)?);
    let task = r.str()?;
    let split = match r.u8()? {
        0 => Split::Train,
        1 => Split::Val,
        2 => Split::Test,
        s => return Err(DecodeError::Invalid(format!("bad split code {s}"))),
    };
    let fingerprint = r.str()?;
    let max_seq_len = r.len()?;
    let n = r.len()?;
    let mut examples = Vec::with_capacity(n);
    for _ in 0..n {
        let k = r.len()?;
        let sequences = (0..k).map(|_| r.u32s()).collect::<Result<_, _>>()?;
        let target = match r.u8()? {
            0 => None,
            1 => Some(IndexedTarget::Label(r.u32()?)),
            2 => Some(IndexedTarget::Value(r.f64()?)),
            3 => Some(IndexedTarget::Choice(r.u32()?)),
            4 => Some(IndexedTarget::Tags(r.u32s()?)),
            t => return Err(DecodeError::Invalid(format!("bad target tag {t}"))),
        };
        examples.push(IndexedExample { sequences, target });
    }
    r.finish()?;
    Ok(IndexedDataset { task, split, fingerprint, max_seq_len, examples })
}

/// Writes the entry atomically, plus a readable `.meta` listing the
/// fingerprint inputs.
pub fn cache_store(ds: &IndexedDataset, meta: &str, dir: &Path) -> Result<(), PipelineError> {
    let (idx, meta_path) = entry_paths(&ds.fingerprint, dir);
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| PipelineError::Io { path, source }
    };
    write_atomic(&meta_path, meta.as_bytes()).map_err(io(&meta_path))?;
    write_atomic(&idx, &encode(ds)).map_err(io(&idx))?;
    Ok(())
}

/// Returns the stored dataset, or `None` on a miss. Corrupt entries are
/// removed and reported as misses.
pub fn cache_load(fingerprint: &str, dir: &Path) -> Option<IndexedDataset> {
    let (idx, meta) = entry_paths(fingerprint, dir);
    let bytes = std::fs::read(&idx).ok()?;
    match decode(&bytes) {
        Ok(ds) if ds.fingerprint == fingerprint => Some(ds),
        outcome => {
            let reason = match outcome {
                Err(e) => e.to_string(),
                Ok(_) => "fingerprint mismatch".to_string(),
            };
            log::warn!("evicting corrupt cache entry {}: {reason}", idx.display());
            let _ = std::fs::remove_file(&idx);
            let _ = std::fs::remove_file(&meta);
            None
        }
    }
}
