//! The EQL network: bias-free dense projections interleaved with the
//! activation block, followed by a linear scalar head.
//!
//! For depth `n` the weights are `W1 (g × input_dim)`, `W2..Wn (g × h)` and
//! the head `W(n+1) (1 × h)`. Each weight carries a mask bit; a cleared bit
//! means the weight is frozen at exactly zero.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{EqlError, Result};
use crate::funcset::{unary_unchecked, FuncKind, FuncLayout};
use crate::scalar::Scalar;

pub const DEFAULT_DEPTH: usize = 2;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(EqlError::Dimension {
                what: "matrix data",
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// `self · v`
    fn mul_vec(&self, v: &[T], out: &mut Vec<T>) {
        out.clear();
        out.extend((0..self.rows).map(|r| {
            let mut acc = T::zero();
            for (w, x) in self.row(r).iter().zip(v) {
                acc += *w * *x;
            }
            acc
        }));
    }
}

/// Learnable state of an EQL network.
#[derive(Debug, Clone, PartialEq)]
pub struct EqlParams<T> {
    layout: FuncLayout,
    units: Vec<(FuncKind, usize)>,
    input_dim: usize,
    weights: Vec<Matrix<T>>,
    masks: Vec<Vec<bool>>,
}

/// Pre- and post-activation vectors of one EQL layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace<T> {
    pub g: Vec<T>,
    pub h: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace<T> {
    pub layers: Vec<LayerTrace<T>>,
    pub y_hat: T,
}

/// Gradients with the same shapes as the weights of [`EqlParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub mats: Vec<Matrix<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(p: &EqlParams<T>) -> Self {
        Gradients {
            mats: p
                .weights
                .iter()
                .map(|m| Matrix::zeros(m.rows, m.cols))
                .collect(),
        }
    }

    pub fn fill_zero(&mut self) {
        for m in &mut self.mats {
            m.data.iter_mut().for_each(|v| *v = T::zero());
        }
    }
}

/// Zero-fraction statistics after thresholding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsityReport {
    pub threshold: f64,
    /// Zero-valued weights over all weights.
    pub sparsity: f64,
    /// Per-matrix zero fractions, `W1` first, head last.
    pub per_matrix: Vec<f64>,
    pub zero_weights: usize,
    pub total_weights: usize,
    pub mae_before_phase2: Option<f64>,
    pub mae_after_phase2: Option<f64>,
}

fn shapes_for(layout: &FuncLayout, input_dim: usize, depth: usize) -> Vec<(usize, usize)> {
    let (g, h) = (layout.g_dim(), layout.h_dim());
    let mut shapes = vec![(g, input_dim)];
    shapes.extend(std::iter::repeat_n((g, h), depth - 1));
    shapes.push((1, h));
    shapes
}

/// Number of weights of a bias-free EQL net: `d·g + (n−1)·h·g + h`.
pub fn weight_count(layout: &FuncLayout, input_dim: usize, depth: usize) -> usize {
    shapes_for(layout, input_dim, depth)
        .iter()
        .map(|(r, c)| r * c)
        .sum()
}

impl<T: Scalar> EqlParams<T> {
    /// Two-layer network with Xavier-uniform weights.
    pub fn init(input_dim: usize, layout: FuncLayout, seed: u64) -> Result<Self> {
        Self::init_with_depth(input_dim, layout, DEFAULT_DEPTH, seed)
    }

    /// Each matrix is drawn i.i.d. from `U[−√(6/(fan_in+fan_out)), +√(…)]`,
    /// in order `W1, W2, …, head`, from one ChaCha8 stream seeded by `seed`.
    pub fn init_with_depth(
        input_dim: usize,
        layout: FuncLayout,
        depth: usize,
        seed: u64,
    ) -> Result<Self> {
        if input_dim == 0 {
            return Err(EqlError::Config("input_dim must be at least 1".into()));
        }
        if depth == 0 {
            return Err(EqlError::Config("depth must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights: Vec<Matrix<T>> = shapes_for(&layout, input_dim, depth)
            .into_iter()
            .map(|(rows, cols)| {
                let limit = (6.0 / (rows + cols) as f64).sqrt();
                let data = (0..rows * cols)
                    .map(|_| T::of(rng.gen_range(-limit..=limit)))
                    .collect();
                Matrix { rows, cols, data }
            })
            .collect();
        let masks = weights.iter().map(|m| vec![true; m.data.len()]).collect();
        Ok(EqlParams {
            units: layout.units(),
            layout,
            input_dim,
            weights,
            masks,
        })
    }

    /// Assemble from explicit matrices, checking shapes against the layout
    /// and that masked entries are zero.
    pub fn from_parts(
        layout: FuncLayout,
        input_dim: usize,
        weights: Vec<Matrix<T>>,
        masks: Vec<Vec<bool>>,
    ) -> Result<Self> {
        if weights.len() < 2 {
            return Err(EqlError::Config(
                "need at least one hidden projection and a head".into(),
            ));
        }
        let expected = shapes_for(&layout, input_dim, weights.len() - 1);
        if masks.len() != weights.len() {
            return Err(EqlError::Dimension {
                what: "mask count",
                expected: weights.len(),
                got: masks.len(),
            });
        }
        for (i, ((m, mask), want)) in weights.iter().zip(&masks).zip(&expected).enumerate() {
            if m.shape() != *want {
                return Err(EqlError::Config(format!(
                    "matrix {} has shape {:?}, layout implies {:?}",
                    i + 1,
                    m.shape(),
                    want
                )));
            }
            if mask.len() != m.data.len() {
                return Err(EqlError::Dimension {
                    what: "mask length",
                    expected: m.data.len(),
                    got: mask.len(),
                });
            }
            if m.data.iter().zip(mask).any(|(w, keep)| !keep && *w != T::zero()) {
                return Err(EqlError::Config(format!(
                    "matrix {} has a nonzero frozen weight",
                    i + 1
                )));
            }
        }
        Ok(EqlParams {
            units: layout.units(),
            layout,
            input_dim,
            weights,
            masks,
        })
    }

    /// All-zero weights with every mask set; handy for hand-wired networks.
    pub fn zeros(input_dim: usize, layout: FuncLayout, depth: usize) -> Self {
        let weights: Vec<Matrix<T>> = shapes_for(&layout, input_dim, depth)
            .into_iter()
            .map(|(r, c)| Matrix::zeros(r, c))
            .collect();
        let masks = weights.iter().map(|m| vec![true; m.data.len()]).collect();
        EqlParams {
            units: layout.units(),
            layout,
            input_dim,
            weights,
            masks,
        }
    }

    pub fn layout(&self) -> &FuncLayout {
        &self.layout
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// Number of EQL layers (head excluded).
    pub fn depth(&self) -> usize {
        self.weights.len() - 1
    }

    pub fn weights(&self) -> &[Matrix<T>] {
        &self.weights
    }

    pub fn masks(&self) -> &[Vec<bool>] {
        &self.masks
    }

    pub fn weight_count(&self) -> usize {
        self.weights.iter().map(|m| m.data.len()).sum()
    }

    /// `(kind, first g index)` per unit of every layer.
    pub fn units(&self) -> &[(FuncKind, usize)] {
        &self.units
    }

    /// Set one weight; refuses to touch a frozen position.
    pub fn set_weight(&mut self, matrix: usize, r: usize, c: usize, value: T) -> Result<()> {
        let m = &mut self.weights[matrix];
        let idx = r * m.cols + c;
        if !self.masks[matrix][idx] {
            return Err(EqlError::Contract(format!(
                "weight ({r}, {c}) of matrix {} is frozen",
                matrix + 1
            )));
        }
        m.data[idx] = value;
        Ok(())
    }

    /// Mutable access to weights and masks together, for the optimizer.
    pub(crate) fn weights_and_masks_mut(&mut self) -> (&mut [Matrix<T>], &[Vec<bool>]) {
        (&mut self.weights, &self.masks)
    }

    pub fn to_f64(&self) -> EqlParams<f64> {
        EqlParams {
            layout: self.layout.clone(),
            units: self.units.clone(),
            input_dim: self.input_dim,
            weights: self
                .weights
                .iter()
                .map(|m| Matrix {
                    rows: m.rows,
                    cols: m.cols,
                    data: m.data.iter().map(|v| v.as_f64()).collect(),
                })
                .collect(),
            masks: self.masks.clone(),
        }
    }

    fn activate(&self, g: &[T], h: &mut Vec<T>) {
        h.clear();
        h.extend(self.units.iter().map(|&(kind, i)| {
            if kind.is_binary() {
                g[i] * g[i + 1]
            } else {
                unary_unchecked(kind, g[i]).0
            }
        }));
    }

    pub fn forward(&self, x: &[T]) -> Result<ForwardTrace<T>> {
        if x.len() != self.input_dim {
            return Err(EqlError::Dimension {
                what: "input vector",
                expected: self.input_dim,
                got: x.len(),
            });
        }
        let depth = self.depth();
        let mut layers = Vec::with_capacity(depth);
        for l in 0..depth {
            let input = if l == 0 { x } else { layers.last().map(|t: &LayerTrace<T>| t.h.as_slice()).expect("previous layer") };
            let mut g = Vec::new();
            self.weights[l].mul_vec(input, &mut g);
            let mut h = Vec::new();
            self.activate(&g, &mut h);
            layers.push(LayerTrace { g, h });
        }
        let mut out = Vec::with_capacity(1);
        self.weights[depth].mul_vec(&layers[depth - 1].h, &mut out);
        Ok(ForwardTrace {
            y_hat: out[0],
            layers,
        })
    }

    /// Forward pass returning only the prediction.
    pub fn predict(&self, x: &[T]) -> Result<T> {
        Ok(self.forward(x)?.y_hat)
    }

    /// Gradients of `dl_dyhat · ŷ` with respect to every weight.
    pub fn backward(&self, trace: &ForwardTrace<T>, x: &[T], dl_dyhat: T) -> Result<Gradients<T>> {
        let mut grads = Gradients::zeros_like(self);
        self.backward_into(trace, x, dl_dyhat, &mut grads)?;
        Ok(grads)
    }

    /// Like [`backward`](Self::backward) but adds into `grads`.
    pub fn backward_into(
        &self,
        trace: &ForwardTrace<T>,
        x: &[T],
        dl_dyhat: T,
        grads: &mut Gradients<T>,
    ) -> Result<()> {
        let depth = self.depth();
        if x.len() != self.input_dim {
            return Err(EqlError::Dimension {
                what: "input vector",
                expected: self.input_dim,
                got: x.len(),
            });
        }
        if trace.layers.len() != depth {
            return Err(EqlError::Dimension {
                what: "trace layers",
                expected: depth,
                got: trace.layers.len(),
            });
        }
        if grads.mats.len() != self.weights.len() {
            return Err(EqlError::Dimension {
                what: "gradient matrices",
                expected: self.weights.len(),
                got: grads.mats.len(),
            });
        }

        let head = &self.weights[depth];
        let h_last = &trace.layers[depth - 1].h;
        for (gw, h) in grads.mats[depth].data.iter_mut().zip(h_last) {
            *gw += dl_dyhat * *h;
        }
        let mut dh: Vec<T> = head.data.iter().map(|w| dl_dyhat * *w).collect();
        let mut dg = vec![T::zero(); self.layout.g_dim()];

        for l in (0..depth).rev() {
            let g = &trace.layers[l].g;
            for (j, &(kind, i)) in self.units.iter().enumerate() {
                if kind.is_binary() {
                    dg[i] = dh[j] * g[i + 1];
                    dg[i + 1] = dh[j] * g[i];
                } else {
                    dg[i] = dh[j] * unary_unchecked(kind, g[i]).1;
                }
            }
            let input: &[T] = if l == 0 { x } else { &trace.layers[l - 1].h };
            let gm = &mut grads.mats[l];
            for (r, d) in dg.iter().enumerate() {
                if *d == T::zero() {
                    continue;
                }
                let row = &mut gm.data[r * gm.cols..(r + 1) * gm.cols];
                for (gw, xi) in row.iter_mut().zip(input) {
                    *gw += *d * *xi;
                }
            }
            if l > 0 {
                let w = &self.weights[l];
                dh.iter_mut().for_each(|v| *v = T::zero());
                for (r, d) in dg.iter().enumerate() {
                    if *d == T::zero() {
                        continue;
                    }
                    for (acc, wv) in dh.iter_mut().zip(w.row(r)) {
                        *acc += *d * *wv;
                    }
                }
            }
        }
        Ok(())
    }

    /// `(global, per-matrix)` fraction of zero-valued weights.
    pub fn sparsity(&self) -> (f64, Vec<f64>) {
        let per: Vec<f64> = self
            .weights
            .iter()
            .map(|m| zero_count(m) as f64 / m.data.len() as f64)
            .collect();
        let zeros: usize = self.weights.iter().map(zero_count).sum();
        (zeros as f64 / self.weight_count() as f64, per)
    }

    pub fn sparsity_report(&self, threshold: f64) -> SparsityReport {
        let (sparsity, per_matrix) = self.sparsity();
        SparsityReport {
            threshold,
            sparsity,
            per_matrix,
            zero_weights: self.weights.iter().map(zero_count).sum(),
            total_weights: self.weight_count(),
            mae_before_phase2: None,
            mae_after_phase2: None,
        }
    }

    /// Zero and freeze every weight with `|w| < tau`.
    pub fn threshold_in_place(&mut self, tau: T) -> SparsityReport {
        assert!(tau >= T::zero(), "threshold must be non-negative");
        for (m, mask) in self.weights.iter_mut().zip(&mut self.masks) {
            for (w, keep) in m.data.iter_mut().zip(mask.iter_mut()) {
                if w.abs() < tau {
                    *w = T::zero();
                    *keep = false;
                }
            }
        }
        self.sparsity_report(tau.as_f64())
    }

    pub fn threshold(&self, tau: T) -> (Self, SparsityReport) {
        let mut p = self.clone();
        let report = p.threshold_in_place(tau);
        (p, report)
    }

    /// Smallest threshold reaching global sparsity `>= target`, taken as the
    /// order statistic of `|w|`.
    pub fn tau_for_sparsity(&self, target: f64) -> T {
        assert!((0.0..=1.0).contains(&target), "target sparsity must lie in [0, 1]");
        let n = self.weight_count();
        let needed = (target * n as f64 - 1e-9).ceil().max(0.0) as usize;
        if needed == 0 {
            return T::zero();
        }
        let mut mags: Vec<T> = self
            .weights
            .iter()
            .flat_map(|m| m.data.iter().map(|w| w.abs()))
            .collect();
        mags.sort_by(|a, b| a.partial_cmp(b).expect("finite weights"));
        let a = mags[needed.min(n) - 1];
        if a == T::zero() {
            // existing zeros already reach the target
            T::zero()
        } else {
            next_above(a)
        }
    }
}

fn zero_count<T: Scalar>(m: &Matrix<T>) -> usize {
    m.data.iter().filter(|w| **w == T::zero()).count()
}

/// A value strictly greater than positive `a`, at most two ulps above it.
fn next_above<T: Scalar>(a: T) -> T {
    let up = a + a * T::epsilon();
    debug_assert!(up > a);
    up
}
