//! Two-layer perceptron block with layer normalization, plus its exact
//! backward pass.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Variance floor inside the layer-norm square root. Small enough that
/// normalized activations have unit variance to well under 1e-6.
const LN_EPS: f64 = 1e-8;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Truncated-normal initialization: draws with |x| > 2*sigma are
    /// rejected, sigma = 1/sqrt(fan_in).
    pub fn truncated_normal(rows: usize, cols: usize, rng: &mut impl Rng) -> Self {
        let sigma = 1.0 / (cols as f64).sqrt();
        let normal = Normal::new(0.0, sigma).expect("sigma is positive");
        let data = (0..rows * cols)
            .map(|_| loop {
                let x = normal.sample(rng);
                if x.abs() <= 2.0 * sigma {
                    break x;
                }
            })
            .collect();
        Matrix { rows, cols, data }
    }

    #[inline]
    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (r, slot) in out.iter_mut().enumerate() {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            let mut acc = 0.0;
            for (w, v) in row.iter().zip(x) {
                acc += w * v;
            }
            *slot = acc;
        }
    }

    /// `out += self^T * dy`
    #[inline]
    fn matvec_transpose_add(&self, dy: &[f64], out: &mut [f64]) {
        debug_assert_eq!(dy.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (r, &d) in dy.iter().enumerate() {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            for (slot, w) in out.iter_mut().zip(row) {
                *slot += w * d;
            }
        }
    }

    /// `self += dy * x^T`
    #[inline]
    fn add_outer(&mut self, dy: &[f64], x: &[f64]) {
        debug_assert_eq!(dy.len(), self.rows);
        debug_assert_eq!(x.len(), self.cols);
        for (r, &d) in dy.iter().enumerate() {
            let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
            for (slot, v) in row.iter_mut().zip(x) {
                *slot += d * v;
            }
        }
    }
}

/// dense -> relu -> dense -> relu -> layer norm (scale, offset).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpBlock {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
    pub ln_scale: Vec<f64>,
    pub ln_offset: Vec<f64>,
}

/// Intermediate activations needed by the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct MlpCache {
    pub x: Vec<f64>,
    pub a1: Vec<f64>,
    pub a2: Vec<f64>,
    pub xhat: Vec<f64>,
    pub inv_std: f64,
}

impl MlpBlock {
    pub fn new_zero(in_width: usize, hidden: usize) -> Self {
        MlpBlock {
            w1: Matrix::zeros(hidden, in_width),
            b1: vec![0.0; hidden],
            w2: Matrix::zeros(hidden, hidden),
            b2: vec![0.0; hidden],
            ln_scale: vec![0.0; hidden],
            ln_offset: vec![0.0; hidden],
        }
    }

    /// Fresh block: truncated-normal weights, zero biases, identity norm.
    pub fn init(in_width: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        MlpBlock {
            w1: Matrix::truncated_normal(hidden, in_width, rng),
            b1: vec![0.0; hidden],
            w2: Matrix::truncated_normal(hidden, hidden, rng),
            b2: vec![0.0; hidden],
            ln_scale: vec![1.0; hidden],
            ln_offset: vec![0.0; hidden],
        }
    }

    pub fn in_width(&self) -> usize {
        self.w1.cols
    }

    pub fn out_width(&self) -> usize {
        self.w2.rows
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_cached(x).0
    }

    pub(crate) fn forward_cached(&self, x: &[f64]) -> (Vec<f64>, MlpCache) {
        let h = self.out_width();
        let mut a1 = vec![0.0; h];
        self.w1.matvec(x, &mut a1);
        for (v, b) in a1.iter_mut().zip(&self.b1) {
            *v = (*v + b).max(0.0);
        }
        let mut a2 = vec![0.0; h];
        self.w2.matvec(&a1, &mut a2);
        for (v, b) in a2.iter_mut().zip(&self.b2) {
            *v = (*v + b).max(0.0);
        }

        let mean = a2.iter().sum::<f64>() / h as f64;
        let var = a2.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / h as f64;
        let inv_std = 1.0 / (var + LN_EPS).sqrt();
        let xhat: Vec<f64> = a2.iter().map(|v| (v - mean) * inv_std).collect();
        let y: Vec<f64> = xhat
            .iter()
            .zip(&self.ln_scale)
            .zip(&self.ln_offset)
            .map(|((xh, s), o)| xh * s + o)
            .collect();
        (
            y,
            MlpCache {
                x: x.to_vec(),
                a1,
                a2,
                xhat,
                inv_std,
            },
        )
    }

    /// Accumulate parameter gradients into `grads` and return dL/dx.
    pub(crate) fn backward(&self, cache: &MlpCache, dy: &[f64], grads: &mut MlpBlock) -> Vec<f64> {
        let h = self.out_width();
        debug_assert_eq!(dy.len(), h);

        // Layer norm.
        let mut dxhat = vec![0.0; h];
        for i in 0..h {
            grads.ln_scale[i] += dy[i] * cache.xhat[i];
            grads.ln_offset[i] += dy[i];
            dxhat[i] = dy[i] * self.ln_scale[i];
        }
        let mean_dxhat = dxhat.iter().sum::<f64>() / h as f64;
        let mean_dxhat_xhat = dxhat
            .iter()
            .zip(&cache.xhat)
            .map(|(d, xh)| d * xh)
            .sum::<f64>()
            / h as f64;
        let mut dz2 = vec![0.0; h];
        for i in 0..h {
            let da2 =
                cache.inv_std * (dxhat[i] - mean_dxhat - cache.xhat[i] * mean_dxhat_xhat);
            dz2[i] = if cache.a2[i] > 0.0 { da2 } else { 0.0 };
        }

        // Second dense layer.
        grads.w2.add_outer(&dz2, &cache.a1);
        for (g, d) in grads.b2.iter_mut().zip(&dz2) {
            *g += d;
        }
        let mut da1 = vec![0.0; h];
        self.w2.matvec_transpose_add(&dz2, &mut da1);
        let dz1: Vec<f64> = da1
            .iter()
            .zip(&cache.a1)
            .map(|(d, a)| if *a > 0.0 { *d } else { 0.0 })
            .collect();

        // First dense layer.
        grads.w1.add_outer(&dz1, &cache.x);
        for (g, d) in grads.b1.iter_mut().zip(&dz1) {
            *g += d;
        }
        let mut dx = vec![0.0; self.in_width()];
        self.w1.matvec_transpose_add(&dz1, &mut dx);
        dx
    }

    pub(crate) fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            &mut self.w1.data,
            &mut self.b1,
            &mut self.w2.data,
            &mut self.b2,
            &mut self.ln_scale,
            &mut self.ln_offset,
        ]
    }

    pub(crate) fn param_slices(&self) -> Vec<&[f64]> {
        vec![
            &self.w1.data,
            &self.b1,
            &self.w2.data,
            &self.b2,
            &self.ln_scale,
            &self.ln_offset,
        ]
    }
}
