//! Dense rectifier networks with one input skip connection.
//!
//! Weights are stored row-major as `[out x in]`; a batch is a row-major
//! `[batch x width]` matrix.

use rand::Rng;

use super::Real;
use crate::error::{Result, SisError};

#[derive(Debug, Clone)]
pub struct Mlp<T: Real> {
    dims: Vec<usize>,
    skip_at: Option<usize>,
    weights: Vec<Vec<T>>,
    biases: Vec<Vec<T>>,
    version: u64,
}

impl<T: Real> PartialEq for Mlp<T> {
    fn eq(&self, other: &Self) -> bool {
        self.dims == other.dims
            && self.skip_at == other.skip_at
            && self.weights == other.weights
            && self.biases == other.biases
    }
}

/// Activations saved by [`Mlp::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct MlpCache<T: Real> {
    version: u64,
    batch: usize,
    /// Input matrix of each layer (after the skip concatenation).
    inputs: Vec<Vec<T>>,
}

impl<T: Real> MlpCache<T> {
    pub fn batch(&self) -> usize {
        self.batch
    }
}

/// Parameter gradients, shaped like the network.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads<T: Real> {
    pub weights: Vec<Vec<T>>,
    pub biases: Vec<Vec<T>>,
}

impl<T: Real> MlpGrads<T> {
    pub fn clear(&mut self) {
        for t in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            t.iter_mut().for_each(|v| *v = T::ZERO);
        }
    }

    /// Gradient tensors in parameter order (weight, bias per layer).
    pub fn tensors(&self) -> Vec<&[T]> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
            .collect()
    }

    pub fn scale(&mut self, s: T) {
        for t in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            t.iter_mut().for_each(|v| *v *= s);
        }
    }
}

fn validate_dims(dims: &[usize], skip_at: Option<usize>) -> Result<()> {
    if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
        return Err(SisError::Config(format!("invalid layer dims {dims:?}")));
    }
    if let Some(s) = skip_at {
        if s == 0 || s >= dims.len() - 1 {
            return Err(SisError::Config(format!(
                "skip layer {s} outside 1..{}",
                dims.len() - 1
            )));
        }
    }
    Ok(())
}

impl<T: Real> Mlp<T> {
    /// Uniform weights with bound 1 / sqrt(3 fan_in), zero biases; the output
    /// layer's weights are scaled by 0.1. Wider (Kaiming) bounds trained
    /// markedly slower on the super-resolution task.
    pub fn new<R: Rng + ?Sized>(
        dims: &[usize],
        skip_at: Option<usize>,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(dims, skip_at)?;
        let last = net.n_layers() - 1;
        for l in 0..net.n_layers() {
            let fan_in = net.layer_in_width(l);
            let mut bound = (1.0 / (3.0 * fan_in as f64)).sqrt();
            if l == last {
                bound *= 0.1;
            }
            for w in &mut net.weights[l] {
                *w = T::from_f64(rng.gen_range(-bound..bound));
            }
        }
        Ok(net)
    }

    pub fn zeros(dims: &[usize], skip_at: Option<usize>) -> Result<Self> {
        validate_dims(dims, skip_at)?;
        let mut net = Mlp {
            dims: dims.to_vec(),
            skip_at,
            weights: Vec::new(),
            biases: Vec::new(),
            version: 0,
        };
        for l in 0..net.n_layers() {
            net.weights
                .push(vec![T::ZERO; net.layer_in_width(l) * dims[l + 1]]);
            net.biases.push(vec![T::ZERO; dims[l + 1]]);
        }
        Ok(net)
    }

    pub fn from_parts(
        dims: &[usize],
        skip_at: Option<usize>,
        weights: Vec<Vec<T>>,
        biases: Vec<Vec<T>>,
    ) -> Result<Self> {
        let template = Self::zeros(dims, skip_at)?;
        let shapes_ok = weights.len() == template.weights.len()
            && biases.len() == template.biases.len()
            && weights
                .iter()
                .zip(&template.weights)
                .all(|(a, b)| a.len() == b.len())
            && biases
                .iter()
                .zip(&template.biases)
                .all(|(a, b)| a.len() == b.len());
        if !shapes_ok {
            return Err(SisError::Dimension(
                "parameter shapes do not match layer dims".into(),
            ));
        }
        if weights
            .iter()
            .chain(&biases)
            .flatten()
            .any(|v| !v.is_finite())
        {
            return Err(SisError::Numerical("non-finite parameter".into()));
        }
        Ok(Mlp {
            weights,
            biases,
            ..template
        })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn skip_at(&self) -> Option<usize> {
        self.skip_at
    }

    pub fn n_layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn input_width(&self) -> usize {
        self.dims[0]
    }

    pub fn output_width(&self) -> usize {
        self.dims[self.dims.len() - 1]
    }

    /// Input width of layer `l`, including the skip concatenation.
    pub fn layer_in_width(&self, l: usize) -> usize {
        self.dims[l]
            + if self.skip_at == Some(l) {
                self.dims[0]
            } else {
                0
            }
    }

    /// Incremented on every parameter mutation; caches from older
    /// versions are rejected by [`Mlp::backward`].
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn weight(&self, l: usize) -> &[T] {
        &self.weights[l]
    }

    pub fn bias(&self, l: usize) -> &[T] {
        &self.biases[l]
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().chain(&self.biases).map(Vec::len).sum()
    }

    pub fn param_names(&self, prefix: &str) -> Vec<String> {
        (0..self.n_layers())
            .flat_map(|l| {
                [
                    format!("{prefix}layer{l}.weight"),
                    format!("{prefix}layer{l}.bias"),
                ]
            })
            .collect()
    }

    pub fn tensors(&self) -> Vec<&[T]> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        self.version += 1;
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w.as_mut_slice(), b.as_mut_slice()])
            .collect()
    }

    pub fn zero_grads(&self) -> MlpGrads<T> {
        MlpGrads {
            weights: self
                .weights
                .iter()
                .map(|w| vec![T::ZERO; w.len()])
                .collect(),
            biases: self.biases.iter().map(|b| vec![T::ZERO; b.len()]).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.weights
            .iter()
            .chain(&self.biases)
            .flatten()
            .all(|v| v.is_finite())
    }

    pub fn cast<U: Real>(&self) -> Mlp<U> {
        let conv = |t: &Vec<Vec<T>>| -> Vec<Vec<U>> {
            t.iter()
                .map(|v| v.iter().map(|x| U::from_f64(x.to_f64())).collect())
                .collect()
        };
        Mlp {
            dims: self.dims.clone(),
            skip_at: self.skip_at,
            weights: conv(&self.weights),
            biases: conv(&self.biases),
            version: 0,
        }
    }

    fn check_input(&self, x: &[T], batch: usize) -> Result<()> {
        if x.len() != batch * self.input_width() {
            return Err(SisError::Dimension(format!(
                "input has {} values, expected {} x {}",
                x.len(),
                batch,
                self.input_width()
            )));
        }
        Ok(())
    }

    /// Applies layer `l` to `input` (`batch x in_l`), returning
    /// `batch x out_l` with the rectifier applied on hidden layers.
    fn layer(&self, l: usize, input: &[T], batch: usize) -> Vec<T> {
        let (inw, out) = (self.layer_in_width(l), self.dims[l + 1]);
        let mut y = Vec::with_capacity(batch * out);
        for _ in 0..batch {
            y.extend_from_slice(&self.biases[l]);
        }
        T::gemm_raw(
            batch,
            inw,
            out,
            T::ONE,
            input,
            inw,
            1,
            &self.weights[l],
            1,
            inw,
            T::ONE,
            &mut y,
            out,
            1,
        );
        if l + 1 < self.n_layers() {
            for v in &mut y {
                if !(*v > T::ZERO) {
                    *v = T::ZERO;
                }
            }
        }
        y
    }

    fn concat_input(&self, h: &[T], x: &[T], batch: usize, hw: usize) -> Vec<T> {
        let xw = self.input_width();
        let mut out = Vec::with_capacity(batch * (hw + xw));
        for r in 0..batch {
            out.extend_from_slice(&h[r * hw..(r + 1) * hw]);
            out.extend_from_slice(&x[r * xw..(r + 1) * xw]);
        }
        out
    }

    fn run(&self, x: &[T], batch: usize, mut keep: Option<&mut Vec<Vec<T>>>) -> Result<Vec<T>> {
        self.check_input(x, batch)?;
        let mut h = x.to_vec();
        for l in 0..self.n_layers() {
            if self.skip_at == Some(l) {
                h = self.concat_input(&h, x, batch, self.dims[l]);
            }
            let y = self.layer(l, &h, batch);
            if let Some(k) = keep.as_deref_mut() {
                k.push(std::mem::replace(&mut h, y));
            } else {
                h = y;
            }
        }
        if h.iter().any(|v| !v.is_finite()) {
            return Err(SisError::Numerical("non-finite network output".into()));
        }
        Ok(h)
    }

    /// Forward pass without keeping activations.
    pub fn predict(&self, x: &[T], batch: usize) -> Result<Vec<T>> {
        self.run(x, batch, None)
    }

    /// Forward pass returning the output and the cache for [`Mlp::backward`].
    pub fn forward(&self, x: &[T], batch: usize) -> Result<(Vec<T>, MlpCache<T>)> {
        let mut inputs = Vec::with_capacity(self.n_layers());
        let y = self.run(x, batch, Some(&mut inputs))?;
        Ok((
            y,
            MlpCache {
                version: self.version,
                batch,
                inputs,
            },
        ))
    }

    /// Reverse pass: accumulates parameter gradients into `grads` and, if
    /// requested, returns the gradient with respect to the input batch.
    pub fn backward(
        &self,
        cache: &MlpCache<T>,
        d_out: &[T],
        grads: &mut MlpGrads<T>,
        want_input_grad: bool,
    ) -> Result<Option<Vec<T>>> {
        if cache.version != self.version {
            return Err(SisError::StaleCache);
        }
        let batch = cache.batch;
        if d_out.len() != batch * self.output_width() {
            return Err(SisError::Dimension(format!(
                "output gradient has {} values, expected {}",
                d_out.len(),
                batch * self.output_width()
            )));
        }
        let xw = self.input_width();
        let mut dx = if want_input_grad {
            Some(vec![T::ZERO; batch * xw])
        } else {
            None
        };
        let mut delta = d_out.to_vec();
        for l in (0..self.n_layers()).rev() {
            let (inw, out) = (self.layer_in_width(l), self.dims[l + 1]);
            let a = &cache.inputs[l];
            T::gemm_raw(
                out,
                batch,
                inw,
                T::ONE,
                &delta,
                1,
                out,
                a,
                inw,
                1,
                T::ONE,
                &mut grads.weights[l],
                inw,
                1,
            );
            let db = &mut grads.biases[l];
            for r in 0..batch {
                for (j, g) in db.iter_mut().enumerate() {
                    *g += delta[r * out + j];
                }
            }
            if l == 0 && dx.is_none() {
                break;
            }
            let mut da = vec![T::ZERO; batch * inw];
            T::gemm_raw(
                batch,
                out,
                inw,
                T::ONE,
                &delta,
                out,
                1,
                &self.weights[l],
                inw,
                1,
                T::ZERO,
                &mut da,
                inw,
                1,
            );
            if l == 0 {
                if let Some(dx) = dx.as_mut() {
                    dx.iter_mut().zip(&da).for_each(|(d, v)| *d += *v);
                }
                break;
            }
            let hw = self.dims[l];
            if self.skip_at == Some(l) {
                if let Some(dx) = dx.as_mut() {
                    for r in 0..batch {
                        for c in 0..xw {
                            dx[r * xw + c] += da[r * inw + hw + c];
                        }
                    }
                }
            }
            let mut next = vec![T::ZERO; batch * hw];
            for r in 0..batch {
                for c in 0..hw {
                    // The previous layer's rectified output sits in the first
                    // hw columns of this layer's input.
                    if a[r * inw + c] > T::ZERO {
                        next[r * hw + c] = da[r * inw + c];
                    }
                }
            }
            delta = next;
        }
        Ok(dx)
    }
}
