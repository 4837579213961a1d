use crate::hashing::ContentHasher;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const PARAMS_FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum NumericsError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("cache is stale: produced by parameter generation {cache}, parameters are at {params}")]
    StaleCache { cache: u64, params: u64 },
    #[error("tau must lie in (0, 1) (got {0})")]
    Tau(f64),
    #[error("content hash mismatch: stored {stored}, computed {computed}")]
    HashMismatch { stored: String, computed: String },
    #[error("unsupported parameter file version {0}")]
    Version(u32),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Named parameter arrays with an immutable shape manifest.
///
/// `generation` increments on every mutation so activation caches can
/// detect that they were produced from older parameters.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ParamSet {
    tensors: Vec<Tensor>,
    #[serde(skip)]
    generation: u64,
}

impl PartialEq for ParamSet {
    fn eq(&self, other: &Self) -> bool {
        self.tensors == other.tensors
    }
}

#[derive(Serialize, Deserialize)]
struct ParamFile {
    version: u32,
    manifest: Vec<(String, Vec<usize>)>,
    hash: String,
    tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn new(tensors: Vec<Tensor>) -> Result<Self, NumericsError> {
        for t in &tensors {
            if t.shape.iter().product::<usize>() != t.data.len() {
                return Err(NumericsError::Shape(format!("{} has shape {:?} but {} values", t.name, t.shape, t.data.len())));
            }
            if t.data.iter().any(|x| !x.is_finite()) {
                return Err(NumericsError::NonFinite("parameters"));
            }
        }
        Ok(Self { tensors, generation: 0 })
    }

    pub fn zeros_like(&self) -> Self {
        let tensors = self
            .tensors
            .iter()
            .map(|t| Tensor { name: t.name.clone(), shape: t.shape.clone(), data: vec![0.0; t.data.len()] })
            .collect();
        Self { tensors, generation: 0 }
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensor(&self, i: usize) -> &[f64] {
        &self.tensors[i].data
    }

    /// Mutable access to one tensor; bumps the generation.
    pub fn tensor_mut(&mut self, i: usize) -> &mut [f64] {
        self.generation += 1;
        &mut self.tensors[i].data
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn manifest(&self) -> Vec<(String, Vec<usize>)> {
        self.tensors.iter().map(|t| (t.name.clone(), t.shape.clone())).collect()
    }

    pub fn num_params(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.tensors.len() == other.tensors.len()
            && self.tensors.iter().zip(&other.tensors).all(|(a, b)| a.shape == b.shape)
    }

    pub fn check_same_shape(&self, other: &Self) -> Result<(), NumericsError> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(NumericsError::Shape(format!("{:?} vs {:?}", self.manifest(), other.manifest())))
        }
    }

    /// All values in manifest order.
    pub fn flat(&self) -> Vec<f64> {
        self.tensors.iter().flat_map(|t| t.data.iter().copied()).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.tensors.iter().flat_map(|t| t.data.iter())
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.generation += 1;
        self.tensors.iter_mut().flat_map(|t| t.data.iter_mut())
    }

    pub fn get_flat(&self, mut i: usize) -> f64 {
        for t in &self.tensors {
            if i < t.data.len() {
                return t.data[i];
            }
            i -= t.data.len();
        }
        panic!("flat index out of range")
    }

    pub fn set_flat(&mut self, mut i: usize, value: f64) {
        self.generation += 1;
        for t in &mut self.tensors {
            if i < t.data.len() {
                t.data[i] = value;
                return;
            }
            i -= t.data.len();
        }
        panic!("flat index out of range")
    }

    /// `self += scale * other`.
    pub fn axpy(&mut self, scale: f64, other: &Self) {
        debug_assert!(self.same_shape(other));
        for (a, b) in self.iter_mut().zip(other.iter()) {
            *a += scale * b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.iter_mut().for_each(|x| *x *= s);
    }

    pub fn all_finite(&self) -> bool {
        self.iter().all(|x| x.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.iter().zip(other.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn content_hash(&self) -> String {
        let mut h = ContentHasher::new();
        for t in &self.tensors {
            h.str(&t.name).u64(t.shape.len() as u64);
            for d in &t.shape {
                h.u64(*d as u64);
            }
            h.f64s(&t.data);
        }
        h.finish()
    }

    pub fn to_json(&self) -> String {
        let file = ParamFile {
            version: PARAMS_FORMAT_VERSION,
            manifest: self.manifest(),
            hash: self.content_hash(),
            tensors: self.tensors.clone(),
        };
        serde_json::to_string(&file).expect("params serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, NumericsError> {
        let file: ParamFile = serde_json::from_str(text)?;
        if file.version != PARAMS_FORMAT_VERSION {
            return Err(NumericsError::Version(file.version));
        }
        let p = Self::new(file.tensors)?;
        if p.manifest() != file.manifest {
            return Err(NumericsError::Shape("manifest disagrees with tensors".into()));
        }
        let computed = p.content_hash();
        if computed != file.hash {
            return Err(NumericsError::HashMismatch { stored: file.hash, computed });
        }
        Ok(p)
    }

    pub fn save(&self, path: &Path) -> Result<(), NumericsError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NumericsError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ParamSet {
        ParamSet::new(vec![
            Tensor { name: "w".into(), shape: vec![2, 2], data: vec![0.1, -0.2, 1.0 / 3.0, 4.0] },
            Tensor { name: "b".into(), shape: vec![2], data: vec![1e-300, -0.0] },
        ])
        .unwrap()
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let p = sample();
        let q = ParamSet::from_json(&p.to_json()).unwrap();
        assert_eq!(p, q);
        assert_eq!(p.content_hash(), q.content_hash());
    }

    #[test]
    fn tampering_is_detected() {
        let text = sample().to_json().replace("4.0", "5.0");
        assert!(matches!(ParamSet::from_json(&text), Err(NumericsError::HashMismatch { .. })));
    }

    #[test]
    fn shape_and_finiteness_checked() {
        let bad = Tensor { name: "w".into(), shape: vec![3], data: vec![0.0; 2] };
        assert!(matches!(ParamSet::new(vec![bad]), Err(NumericsError::Shape(_))));
        let nan = Tensor { name: "w".into(), shape: vec![1], data: vec![f64::NAN] };
        assert!(matches!(ParamSet::new(vec![nan]), Err(NumericsError::NonFinite(_))));
    }

    #[test]
    fn flat_indexing() {
        let mut p = sample();
        assert_eq!(p.get_flat(4), 1e-300);
        let g = p.generation();
        p.set_flat(0, 7.0);
        assert_eq!(p.tensor(0)[0], 7.0);
        assert!(p.generation() > g);
    }
}
