use indexmap::IndexMap;

use super::{Tensor, TensorError};
use crate::codec::{self, DecodeError, Reader, Writer};

const PARAMS_MAGIC: &[u8; 8] = b"PKPARAMS";
pub const PARAMS_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub requires_grad: bool,
    pub grad: Option<Tensor>,
}

/// Named parameters in insertion order. Cloning produces a fully independent
/// deep copy.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Parameter>,
    index: IndexMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        if let Some(&i) = self.index.get(&name) {
            self.params[i].value = value;
            self.params[i].grad = None;
            return ParamId(i);
        }
        self.index.insert(name.clone(), self.params.len());
        self.params.push(Parameter { name, value, requires_grad: true, grad: None });
        ParamId(self.params.len() - 1)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&Parameter> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total scalar count across parameters whose name starts with `prefix`.
    pub fn count_scalars(&self, prefix: &str) -> usize {
        self.params.iter().filter(|p| p.name.starts_with(prefix)).map(|p| p.value.numel()).sum()
    }

    pub fn set_requires_grad(&mut self, pred: impl Fn(&str) -> bool) {
        for p in &mut self.params {
            p.requires_grad = pred(&p.name);
        }
    }

    pub(crate) fn accumulate_grad(&mut self, id: ParamId, g: &[f64]) -> Result<(), TensorError> {
        let p = &mut self.params[id.0];
        if !p.requires_grad {
            return Ok(());
        }
        if g.len() != p.value.numel() {
            return Err(super::shape_err("accumulate_grad", format!("{} for {}", g.len(), p.name)));
        }
        let grad = p.grad.get_or_insert_with(|| Tensor::zeros(p.value.shape().to_vec()));
        grad.data_mut().iter_mut().zip(g).for_each(|(a, b)| *a += b);
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad = None;
        }
    }

    /// Versioned flat records: name, shape, raw values.
    pub fn to_bytes(&self) -> Vec<u8> {
        codec::seal(PARAMS_MAGIC, PARAMS_FORMAT_VERSION, &self.encode_payload())
    }

    pub(crate) fn encode_payload(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.encode(&mut w);
        w.into_bytes()
    }

    pub(crate) fn encode(&self, w: &mut Writer) {
        w.len(self.params.len());
        for p in &self.params {
            w.str(&p.name);
            w.len(p.value.shape().len());
            for &d in p.value.shape() {
                w.len(d);
            }
            w.u8(p.requires_grad as u8);
            w.f64s(p.value.data());
        }
    }

    pub(crate) fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let n = r.len()?;
        let mut store = ParamStore::new();
        for _ in 0..n {
            let name = r.str()?;
            let ndim = r.len()?;
            let shape = (0..ndim).map(|_| r.len()).collect::<Result<Vec<_>, _>>()?;
            let requires_grad = r.u8()? != 0;
            let data = r.f64s()?;
            let value = Tensor::new(shape, data).map_err(|e| DecodeError::Invalid(e.to_string()))?;
            let id = store.insert(name, value);
            store.get_mut(id).requires_grad = requires_grad;
        }
        Ok(store)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let payload = codec::unseal(bytes, PARAMS_MAGIC, PARAMS_FORMAT_VERSION)?;
        let mut r = Reader::new(payload);
        let store = Self::decode(&mut r)?;
        r.finish()?;
        Ok(store)
    }

    /// Hex SHA-256 over names, shapes, and values of parameters matching `prefix`.
    pub fn checksum(&self, prefix: &str) -> String {
        let mut w = Writer::new();
        for p in self.params.iter().filter(|p| p.name.starts_with(prefix)) {
            w.str(&p.name);
            for &d in p.value.shape() {
                w.len(d);
            }
            w.f64s(p.value.data());
        }
        codec::sha256_hex(&w.into_bytes())
    }
}
