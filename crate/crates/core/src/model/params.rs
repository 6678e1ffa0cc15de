//! Named parameter tensors and their gradients.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::ModelError;
use crate::rng::SplitMix64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// A row-major matrix. Vectors are stored with `rows = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

#[derive(Clone, Copy, Debug)]
pub enum Init {
    Zeros,
    Uniform(f64),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParameterStore {
    tensors: Vec<Tensor>,
    index: BTreeMap<String, ParamId>,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, rows: usize, cols: usize, init: Init, rng: &mut SplitMix64) -> ParamId {
        assert!(!self.index.contains_key(name), "duplicate parameter {name}");
        let data = match init {
            Init::Zeros => vec![0.0; rows * cols],
            Init::Uniform(a) => (0..rows * cols).map(|_| rng.uniform(-a, a)).collect(),
        };
        let id = ParamId(self.tensors.len());
        self.tensors.push(Tensor { name: name.to_string(), rows, cols, data });
        self.index.insert(name.to_string(), id);
        id
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.iter().map(|t| t.name.as_str())
    }

    pub fn n_values(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|x| x.is_finite()))
    }

    /// Writes named tensors as little-endian f32 with shape headers.
    ///
    /// ```text
    /// "WSPK" version:u32 count:u32
    /// per tensor: name_len:u32 name rows:u32 cols:u32 f32[rows*cols]
    /// ```
    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let mut out = Vec::new();
        out.extend_from_slice(b"WSPK");
        out.extend_from_slice(&1u32.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.extend_from_slice(&(t.rows as u32).to_le_bytes());
            out.extend_from_slice(&(t.cols as u32).to_le_bytes());
            for x in &t.data {
                out.extend_from_slice(&(*x as f32).to_le_bytes());
            }
        }
        let mut f = std::fs::File::create(path)?;
        f.write_all(&out)?;
        Ok(())
    }

    /// Overwrites every tensor of `self` from a checkpoint; names and
    /// shapes must match exactly.
    pub fn load_into(&mut self, path: &Path) -> Result<(), ModelError> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        let bad = |m: &str| ModelError::Checkpoint(m.to_string());
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8], ModelError> {
            let s = buf.get(pos..pos + n).ok_or_else(|| bad("truncated file"))?;
            pos += n;
            Ok(s)
        };
        if take(4)? != b"WSPK" {
            return Err(bad("bad magic"));
        }
        let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().unwrap()) as usize;
        if u32_at(take(4)?) != 1 {
            return Err(bad("unsupported version"));
        }
        let count = u32_at(take(4)?);
        if count != self.tensors.len() {
            return Err(bad(&format!("checkpoint has {count} tensors, model has {}", self.tensors.len())));
        }
        let mut loaded: Vec<(String, usize, usize, Vec<f64>)> = Vec::with_capacity(count);
        for _ in 0..count {
            let len = u32_at(take(4)?);
            let name = String::from_utf8(take(len)?.to_vec()).map_err(|_| bad("bad tensor name"))?;
            let rows = u32_at(take(4)?);
            let cols = u32_at(take(4)?);
            let raw = take(rows * cols * 4)?;
            let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect();
            loaded.push((name, rows, cols, data));
        }
        for (name, rows, cols, data) in loaded {
            let id = self.id(&name).ok_or_else(|| bad(&format!("unknown tensor {name}")))?;
            let t = &mut self.tensors[id.0];
            if (t.rows, t.cols) != (rows, cols) {
                return Err(bad(&format!("tensor {name} is {rows}x{cols}, model expects {}x{}", t.rows, t.cols)));
            }
            t.data = data;
        }
        Ok(())
    }

    /// Rounds every value through f32, as a save/load cycle would.
    pub fn round_to_f32(&mut self) {
        for t in &mut self.tensors {
            for x in &mut t.data {
                *x = *x as f32 as f64;
            }
        }
    }
}

/// Dense gradients, one buffer per parameter tensor.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub grads: Vec<Vec<f64>>,
    /// Whether the loss reached the parameter at all.
    pub touched: Vec<bool>,
}

impl Gradients {
    pub fn zeros(store: &ParameterStore) -> Self {
        Self {
            grads: store.tensors().iter().map(|t| vec![0.0; t.data.len()]).collect(),
            touched: vec![false; store.len()],
        }
    }

    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.grads[id.0]
    }

    pub fn global_norm(&self) -> f64 {
        self.grads.iter().flatten().map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, c: f64) {
        for g in self.grads.iter_mut().flatten() {
            *g *= c;
        }
    }

    /// Parameters the loss does not depend on.
    pub fn detached<'a>(&self, store: &'a ParameterStore) -> Vec<&'a str> {
        store.tensors().iter().zip(&self.touched).filter(|(_, t)| !**t).map(|(p, _)| p.name.as_str()).collect()
    }
}
