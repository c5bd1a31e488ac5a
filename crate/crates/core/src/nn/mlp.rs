//! Dense ReLU network with manual reverse-mode gradients.
//!
//! Hidden layers use ReLU, the output layer is linear. Batches are row-major
//! matrices with one example per row.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::Deserialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Prng, Vector};
use crate::scalar::Scalar;

static NEXT_VERSION: AtomicU64 = AtomicU64::new(1);

fn fresh_version() -> u64 {
    NEXT_VERSION.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    /// `out × in`
    pub w: Matrix<T>,
    pub b: Vec<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn in_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.w.rows()
    }
}

#[derive(Debug, Clone)]
pub struct Mlp<T> {
    layers: Vec<Dense<T>>,
    pub seed: u64,
    pub trained_epochs: usize,
    // parameter snapshot id, refreshed on every mutable access
    version: u64,
}

impl<T: Scalar> PartialEq for Mlp<T> {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
            && self.seed == other.seed
            && self.trained_epochs == other.trained_epochs
    }
}

/// Activations saved by a forward pass for the matching backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    version: u64,
    /// Input of each layer (post-ReLU for hidden layers).
    inputs: Vec<Matrix<T>>,
}

/// Gradients with the same layout as the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads<T> {
    pub dw: Vec<Matrix<T>>,
    pub db: Vec<Vec<T>>,
}

impl<T: Scalar> MlpGrads<T> {
    pub fn zeros_like(m: &Mlp<T>) -> Self {
        MlpGrads {
            dw: m.layers.iter().map(|l| Matrix::zeros(l.out_dim(), l.in_dim())).collect(),
            db: m.layers.iter().map(|l| vec![T::zero(); l.out_dim()]).collect(),
        }
    }

    pub fn slices(&self) -> Vec<&[T]> {
        let mut out = Vec::with_capacity(2 * self.dw.len());
        for (w, b) in self.dw.iter().zip(&self.db) {
            out.push(w.as_slice());
            out.push(b.as_slice());
        }
        out
    }

    pub fn flatten(&self) -> Vec<T> {
        self.slices().concat()
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.dw.iter_mut().zip(&other.dw) {
            for (x, &y) in a.as_mut_slice().iter_mut().zip(b.as_slice()) {
                *x += y;
            }
        }
        for (a, b) in self.db.iter_mut().zip(&other.db) {
            for (x, &y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 {
        return Err(Error::BadDims(format!(
            "need at least input and output sizes, got {dims:?}"
        )));
    }
    if dims.contains(&0) {
        return Err(Error::BadDims(format!("zero-width layer in {dims:?}")));
    }
    Ok(())
}

impl<T: Scalar> Mlp<T> {
    /// Glorot-uniform weights (bound `sqrt(6 / (fan_in + fan_out))`) and zero biases.
    pub fn init(dims: &[usize], seed: u64) -> Result<Self> {
        validate_dims(dims)?;
        let mut rng = Prng::new(seed);
        let layers = dims
            .windows(2)
            .map(|pair| {
                let (fan_in, fan_out) = (pair[0], pair[1]);
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let values = rng
                    .uniform(-bound, bound, fan_in * fan_out)
                    .into_iter()
                    .map(T::lit)
                    .collect();
                Dense {
                    w: Matrix::from_vec(fan_out, fan_in, values).expect("sized"),
                    b: vec![T::zero(); fan_out],
                }
            })
            .collect();
        Ok(Mlp {
            layers,
            seed,
            trained_epochs: 0,
            version: fresh_version(),
        })
    }

    pub fn from_layers(layers: Vec<Dense<T>>, seed: u64) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::BadDims("no layers".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::BadDims(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    pair[0].out_dim(),
                    i + 1,
                    pair[1].in_dim()
                )));
            }
        }
        for l in &layers {
            if l.b.len() != l.out_dim() {
                return Err(Error::BadDims("bias length differs from layer width".into()));
            }
            if l.b.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("bias".into()));
            }
        }
        Ok(Mlp {
            layers,
            seed,
            trained_epochs: 0,
            version: fresh_version(),
        })
    }

    /// Exact identity map `x -> x` of width `d` through three layers:
    /// `[I; -I]`, `I`, `[I, -I]` with hidden width `2d`.
    pub fn identity(d: usize) -> Self {
        let mut w1 = Matrix::zeros(2 * d, d);
        let mut w3 = Matrix::zeros(d, 2 * d);
        for i in 0..d {
            w1[(i, i)] = T::one();
            w1[(d + i, i)] = -T::one();
            w3[(i, i)] = T::one();
            w3[(i, d + i)] = -T::one();
        }
        let layers = vec![
            Dense { w: w1, b: vec![T::zero(); 2 * d] },
            Dense { w: Matrix::identity(2 * d), b: vec![T::zero(); 2 * d] },
            Dense { w: w3, b: vec![T::zero(); d] },
        ];
        Self::from_layers(layers, 0).expect("identity layers chain")
    }

    pub fn layers(&self) -> &[Dense<T>] {
        &self.layers
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.layers.iter().map(Dense::out_dim));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").out_dim()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.as_slice().len() + l.b.len()).sum()
    }

    /// Parameter tensors in `w0, b0, w1, b1, ...` order. Invalidates outstanding caches.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [T]> {
        self.version = fresh_version();
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for l in &mut self.layers {
            out.push(l.w.as_mut_slice());
            out.push(l.b.as_mut_slice());
        }
        out
    }

    pub fn flatten_params(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(l.w.as_slice());
            out.extend_from_slice(&l.b);
        }
        out
    }

    pub fn set_flat_params(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                flat.len()
            )));
        }
        let mut offset = 0;
        for s in self.param_slices_mut() {
            s.copy_from_slice(&flat[offset..offset + s.len()]);
            offset += s.len();
        }
        Ok(())
    }

    pub fn forward(&self, x: &[T]) -> Result<Vector<T>> {
        let batch = Matrix::from_vec(1, x.len(), x.to_vec())?;
        Ok(Vector(self.forward_batch(&batch)?.0.into_vec()))
    }

    /// Forward pass over a batch (one row per example).
    pub fn forward_batch(&self, x: &Matrix<T>) -> Result<(Matrix<T>, ForwardCache<T>)> {
        if x.cols() != self.input_dim() {
            return Err(Error::dim("network input", self.input_dim(), x.cols()));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut current = x.clone();
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            let mut out = affine(layer, &current);
            if li != last {
                for v in out.as_mut_slice() {
                    if !(*v > T::zero()) {
                        *v = T::zero();
                    }
                }
            }
            inputs.push(current);
            current = out;
        }
        Ok((
            current,
            ForwardCache {
                version: self.version,
                inputs,
            },
        ))
    }

    /// Smallest `|pre-activation|` over all hidden units and batch rows.
    pub fn min_relu_margin(&self, x: &Matrix<T>) -> Result<T> {
        if x.cols() != self.input_dim() {
            return Err(Error::dim("network input", self.input_dim(), x.cols()));
        }
        let mut margin = T::infinity();
        let mut current = x.clone();
        for layer in &self.layers[..self.layers.len() - 1] {
            let mut z = affine(layer, &current);
            for v in z.as_mut_slice() {
                margin = margin.min(v.abs());
                if !(*v > T::zero()) {
                    *v = T::zero();
                }
            }
            current = z;
        }
        Ok(margin)
    }

    /// Reverse pass: parameter gradients and `dL/dx` for upstream gradient `dy`.
    pub fn backward(&self, cache: &ForwardCache<T>, dy: &Matrix<T>) -> Result<(MlpGrads<T>, Matrix<T>)> {
        if cache.version != self.version || cache.inputs.len() != self.layers.len() {
            return Err(Error::StaleCache);
        }
        let batch = cache.inputs[0].rows();
        if dy.shape() != (batch, self.output_dim()) {
            return Err(Error::ShapeMismatch(format!(
                "upstream gradient {:?}, expected {:?}",
                dy.shape(),
                (batch, self.output_dim())
            )));
        }
        let mut grads = MlpGrads::zeros_like(self);
        let mut dz = dy.clone();
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let a = &cache.inputs[li];
            let (out_dim, in_dim) = (layer.out_dim(), layer.in_dim());
            let dw = &mut grads.dw[li];
            let db = &mut grads.db[li];
            let mut da = Matrix::zeros(batch, in_dim);
            for r in 0..batch {
                let dz_row = dz.row(r);
                let a_row = a.row(r);
                let da_row = da.row_mut(r);
                for o in 0..out_dim {
                    let g = dz_row[o];
                    if g == T::zero() {
                        continue;
                    }
                    db[o] += g;
                    axpy(g, a_row, dw.row_mut(o));
                    axpy(g, layer.w.row(o), da_row);
                }
            }
            if li > 0 {
                // ReLU gate: the stored input is the post-activation of layer li-1
                for (g, &act) in da.as_mut_slice().iter_mut().zip(a.as_slice()) {
                    if !(act > T::zero()) {
                        *g = T::zero();
                    }
                }
            }
            dz = da;
        }
        Ok((grads, dz))
    }

    pub fn to_json_value(&self) -> Value {
        let weights: Vec<Vec<f64>> = self
            .layers
            .iter()
            .map(|l| l.w.as_slice().iter().map(|v| v.to_f64_lossy()).collect())
            .collect();
        let biases: Vec<Vec<f64>> = self
            .layers
            .iter()
            .map(|l| l.b.iter().map(|v| v.to_f64_lossy()).collect())
            .collect();
        json!({
            "layer_dims": self.layer_dims(),
            "weights": weights,
            "biases": biases,
            "activation": "relu",
            "output_activation": "linear",
            "seed": self.seed,
            "trained_epochs": self.trained_epochs,
        })
    }

    pub fn from_json_value(v: &Value) -> Result<Self> {
        #[derive(Deserialize)]
        struct Raw {
            layer_dims: Vec<usize>,
            weights: Vec<Vec<f64>>,
            biases: Vec<Vec<f64>>,
            activation: String,
            output_activation: String,
            seed: u64,
            trained_epochs: usize,
        }
        let raw: Raw = serde_json::from_value(v.clone())?;
        if raw.activation != "relu" || raw.output_activation != "linear" {
            return Err(Error::BadDims(format!(
                "unsupported activations {}/{}",
                raw.activation, raw.output_activation
            )));
        }
        validate_dims(&raw.layer_dims)?;
        let n = raw.layer_dims.len() - 1;
        if raw.weights.len() != n || raw.biases.len() != n {
            return Err(Error::BadDims("layer count differs from layer_dims".into()));
        }
        let mut layers = Vec::with_capacity(n);
        for i in 0..n {
            let (fan_in, fan_out) = (raw.layer_dims[i], raw.layer_dims[i + 1]);
            let w = Matrix::from_vec(
                fan_out,
                fan_in,
                raw.weights[i].iter().map(|&x| T::lit(x)).collect(),
            )?;
            layers.push(Dense {
                w,
                b: raw.biases[i].iter().map(|&x| T::lit(x)).collect(),
            });
        }
        let mut m = Self::from_layers(layers, raw.seed)?;
        m.trained_epochs = raw.trained_epochs;
        Ok(m)
    }
}

#[inline]
fn axpy<T: Scalar>(a: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// `x · Wᵀ + b`, accumulated over inputs in order for each output.
fn affine<T: Scalar>(layer: &Dense<T>, x: &Matrix<T>) -> Matrix<T> {
    let wt = layer.w.transpose();
    let out_dim = layer.out_dim();
    let mut out = Matrix::zeros(x.rows(), out_dim);
    for r in 0..x.rows() {
        let o = out.row_mut(r);
        o.copy_from_slice(&layer.b);
        for (i, &xi) in x.row(r).iter().enumerate() {
            if xi == T::zero() {
                continue;
            }
            axpy(xi, wt.row(i), o);
        }
    }
    out
}
