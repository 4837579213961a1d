//! Fixed-shape feedforward networks: affine + tanh hidden layers, linear head.

use super::params::{NumericsError, ParamSet, Tensor};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mlp {
    /// Layer widths including input and output, e.g. `[70, 64, 64, 10]`.
    pub sizes: Vec<usize>,
}

/// Activations retained by a forward pass.
#[derive(Clone, Debug)]
pub struct Cache {
    generation: u64,
    pub batch: usize,
    /// `acts[0]` is the input, `acts[l]` the output of layer `l - 1`.
    pub acts: Vec<Vec<f64>>,
}

impl Cache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("at least the input")
    }
}

/// Row-major `c = a · b (+ c if accumulate)` with explicit strides for a and b.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], rsa: isize, csa: isize, b: &[f64], rsb: isize, csb: isize, c: &mut [f64], accumulate: bool) {
    debug_assert!(c.len() >= m * n);
    // SAFETY: the strides describe in-bounds views of `a` (m×k), `b` (k×n)
    // and the row-major `c` (m×n); callers derive them from the same
    // dimensions used to size the slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            if accumulate { 1.0 } else { 0.0 },
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl Mlp {
    pub fn new(input: usize, hidden: &[usize], output: usize) -> Self {
        let mut sizes = vec![input];
        sizes.extend_from_slice(hidden);
        sizes.push(output);
        Self { sizes }
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("non-empty sizes")
    }

    pub fn layers(&self) -> usize {
        self.sizes.len() - 1
    }

    /// Uniform ±1/√fan_in initialization for weights and biases.
    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamSet {
        let mut tensors = Vec::new();
        for l in 0..self.layers() {
            let (fan_in, out) = (self.sizes[l], self.sizes[l + 1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let mut draw = |n: usize| (0..n).map(|_| rng.random_range(-bound..=bound)).collect::<Vec<f64>>();
            tensors.push(Tensor { name: format!("l{l}.weight"), shape: vec![out, fan_in], data: draw(out * fan_in) });
            tensors.push(Tensor { name: format!("l{l}.bias"), shape: vec![out], data: draw(out) });
        }
        ParamSet::new(tensors).expect("initialized parameters are well-formed")
    }

    pub fn zeros(&self) -> ParamSet {
        let mut tensors = Vec::new();
        for l in 0..self.layers() {
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            tensors.push(Tensor { name: format!("l{l}.weight"), shape: vec![o, i], data: vec![0.0; o * i] });
            tensors.push(Tensor { name: format!("l{l}.bias"), shape: vec![o], data: vec![0.0; o] });
        }
        ParamSet::new(tensors).expect("zero parameters are well-formed")
    }

    fn check_params(&self, p: &ParamSet) -> Result<(), NumericsError> {
        let ok = p.tensors().len() == 2 * self.layers()
            && (0..self.layers()).all(|l| {
                p.tensors()[2 * l].shape == [self.sizes[l + 1], self.sizes[l]]
                    && p.tensors()[2 * l + 1].shape == [self.sizes[l + 1]]
            });
        if ok {
            Ok(())
        } else {
            Err(NumericsError::Shape(format!("parameters {:?} do not fit layer sizes {:?}", p.manifest(), self.sizes)))
        }
    }

    /// Forward pass over `batch` row-major inputs.
    pub fn forward_batch(&self, p: &ParamSet, x: &[f64], batch: usize) -> Result<Cache, NumericsError> {
        self.check_params(p)?;
        if x.len() != batch * self.input_dim() {
            return Err(NumericsError::Shape(format!("input has {} values, expected {batch}×{}", x.len(), self.input_dim())));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(NumericsError::NonFinite("input"));
        }
        let mut acts = Vec::with_capacity(self.sizes.len());
        acts.push(x.to_vec());
        for l in 0..self.layers() {
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            let (w, b) = (p.tensor(2 * l), p.tensor(2 * l + 1));
            let mut z = Vec::with_capacity(batch * o);
            for _ in 0..batch {
                z.extend_from_slice(b);
            }
            // z (batch×o) += h (batch×i) · Wᵀ (i×o)
            gemm(batch, i, o, &acts[l], i as isize, 1, w, 1, i as isize, &mut z, true);
            if l + 1 < self.layers() {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(z);
        }
        Ok(Cache { generation: p.generation(), batch, acts })
    }

    pub fn forward(&self, p: &ParamSet, x: &[f64]) -> Result<(Vec<f64>, Cache), NumericsError> {
        let cache = self.forward_batch(p, x, 1)?;
        Ok((cache.output().to_vec(), cache))
    }

    /// Outputs only.
    pub fn predict_batch(&self, p: &ParamSet, x: &[f64], batch: usize) -> Result<Vec<f64>, NumericsError> {
        Ok(self.forward_batch(p, x, batch)?.acts.pop().expect("output layer"))
    }

    /// Gradients of a loss with respect to every parameter, given the
    /// loss gradient at the outputs of the cached forward pass.
    pub fn backward(&self, p: &ParamSet, cache: &Cache, grad_out: &[f64]) -> Result<ParamSet, NumericsError> {
        self.check_params(p)?;
        if cache.generation != p.generation() || cache.acts.len() != self.sizes.len() {
            return Err(NumericsError::StaleCache { cache: cache.generation, params: p.generation() });
        }
        let n = cache.batch;
        if grad_out.len() != n * self.output_dim() {
            return Err(NumericsError::Shape(format!("output gradient has {} values, expected {n}×{}", grad_out.len(), self.output_dim())));
        }
        let mut grads = p.zeros_like();
        let mut delta = grad_out.to_vec();
        for l in (0..self.layers()).rev() {
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            // dW (o×i) = deltaᵀ (o×n) · h (n×i)
            gemm(o, n, i, &delta, 1, o as isize, &cache.acts[l], i as isize, 1, grads.tensor_mut(2 * l), false);
            let db = grads.tensor_mut(2 * l + 1);
            for row in delta.chunks_exact(o) {
                for (g, d) in db.iter_mut().zip(row) {
                    *g += d;
                }
            }
            if l > 0 {
                // dh (n×i) = delta (n×o) · W (o×i), then through tanh.
                let mut dh = vec![0.0; n * i];
                gemm(n, o, i, &delta, o as isize, 1, p.tensor(2 * l), i as isize, 1, &mut dh, false);
                for (d, h) in dh.iter_mut().zip(&cache.acts[l]) {
                    *d *= 1.0 - h * h;
                }
                delta = dh;
            }
        }
        Ok(grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::microworld::sim::rng_from;

    /// Straightforward scalar re-implementation used as an oracle.
    fn naive_forward(m: &Mlp, p: &ParamSet, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        for l in 0..m.layers() {
            let (i, o) = (m.sizes[l], m.sizes[l + 1]);
            let (w, b) = (p.tensor(2 * l), p.tensor(2 * l + 1));
            let mut z = vec![0.0; o];
            for r in 0..o {
                let mut acc = b[r];
                for c in 0..i {
                    acc += w[r * i + c] * h[c];
                }
                z[r] = if l + 1 < m.layers() { acc.tanh() } else { acc };
            }
            h = z;
        }
        h
    }

    #[test]
    fn zero_params_give_zero_output() {
        let m = Mlp::new(4, &[8], 3);
        let (y, _) = m.forward(&m.zeros(), &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(y, vec![0.0; 3]);
    }

    #[test]
    fn identity_linear_layer() {
        let m = Mlp::new(3, &[], 3);
        let mut p = m.zeros();
        for k in 0..3 {
            p.tensor_mut(0)[k * 3 + k] = 1.0;
        }
        assert_eq!(m.forward(&p, &[0.5, -1.0, 2.0]).unwrap().0, vec![0.5, -1.0, 2.0]);
    }

    #[test]
    fn matches_naive_implementation() {
        let mut rng = rng_from(1);
        for trial in 0..20 {
            let m = Mlp::new(5 + trial % 3, &[7, 6], 4);
            let p = m.init(&mut rng);
            let n = 9;
            let x: Vec<f64> = (0..n * m.input_dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
            let out = m.predict_batch(&p, &x, n).unwrap();
            for r in 0..n {
                let want = naive_forward(&m, &p, &x[r * m.input_dim()..(r + 1) * m.input_dim()]);
                for (a, b) in out[r * 4..(r + 1) * 4].iter().zip(&want) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn linear_layer_sum_loss_gradient() {
        let m = Mlp::new(3, &[], 2);
        let mut rng = rng_from(2);
        let p = m.init(&mut rng);
        let x = [0.3, -0.7, 1.1];
        let (_, cache) = m.forward(&p, &x).unwrap();
        let g = m.backward(&p, &cache, &[1.0, 1.0]).unwrap();
        assert_eq!(g.tensor(0), &[0.3, -0.7, 1.1, 0.3, -0.7, 1.1]);
        assert_eq!(g.tensor(1), &[1.0, 1.0]);
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let m = Mlp::new(3, &[4], 2);
        let p = m.init(&mut rng_from(3));
        let (_, cache) = m.forward(&p, &[1.0, 2.0, 3.0]).unwrap();
        let g = m.backward(&p, &cache, &[0.0, 0.0]).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn errors() {
        let m = Mlp::new(3, &[4], 2);
        let mut p = m.init(&mut rng_from(4));
        assert!(matches!(m.forward(&p, &[1.0]), Err(NumericsError::Shape(_))));
        assert!(matches!(m.forward(&p, &[1.0, f64::NAN, 0.0]), Err(NumericsError::NonFinite(_))));
        let (_, cache) = m.forward(&p, &[1.0, 2.0, 3.0]).unwrap();
        p.tensor_mut(0)[0] += 1.0;
        assert!(matches!(m.backward(&p, &cache, &[1.0, 1.0]), Err(NumericsError::StaleCache { .. })));
    }
}
