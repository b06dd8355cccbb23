//! Dense row-major `f64` tensors and the differentiable primitives the model
//! is assembled from.
//!
//! Each primitive comes with a hand-derived backward function. The model code
//! in [`crate::model`] calls the slice kernels at the bottom of this file
//! directly so it can reuse buffers, but it performs exactly the same
//! arithmetic and is checked against these tensor-level routines.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    #[serde(skip)]
    grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::InvalidTensor(format!(
                "shape {shape:?} needs {numel} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor {
            shape,
            data,
            grad: None,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; numel],
            grad: None,
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
            grad: None,
        }
    }

    /// Build a matrix from equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidTensor("ragged rows".into()));
        }
        Tensor::new(vec![rows.len(), cols], rows.concat())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(1)
    }

    /// Number of columns of a matrix; a vector is treated as a single row.
    pub fn cols(&self) -> usize {
        match self.shape.len() {
            0 => 1,
            1 => self.shape[0],
            _ => self.shape[1..].iter().product(),
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols() + c]
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    /// Gradient accumulator, allocated as zeros on first use.
    pub fn grad_mut(&mut self) -> &mut [f64] {
        let n = self.data.len();
        self.grad.get_or_insert_with(|| vec![0.0; n])
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.fill(0.0);
        }
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
            grad: None,
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn transpose(&self) -> Result<Tensor> {
        if self.shape.len() != 2 {
            return Err(Error::InvalidTensor(format!(
                "transpose needs a matrix, got {:?}",
                self.shape
            )));
        }
        let (r, c) = (self.shape[0], self.shape[1]);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Tensor::new(vec![c, r], out)
    }

    fn as_matrix_dims(&self, op: &'static str, other: &Tensor) -> Result<(usize, usize)> {
        match self.shape.len() {
            1 => Ok((1, self.shape[0])),
            2 => Ok((self.shape[0], self.shape[1])),
            _ => Err(Error::ShapeMismatch {
                op,
                left: self.shape.clone(),
                right: other.shape.clone(),
            }),
        }
    }
}

/// `a[m×k] · b[k×n]`. Adds `m·k·n` to the multiply-accumulate counter.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = a.as_matrix_dims("matmul", b)?;
    let (k2, n) = b.as_matrix_dims("matmul", a)?;
    if k != k2 || b.shape.len() != 2 {
        return Err(Error::ShapeMismatch {
            op: "matmul",
            left: a.shape.clone(),
            right: b.shape.clone(),
        });
    }
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        vec_mat_acc(
            &a.data[i * k..(i + 1) * k],
            &b.data,
            n,
            &mut out[i * n..(i + 1) * n],
        );
    }
    Tensor::new(vec![m, n], out)
}

/// Gradients of `matmul` with respect to both operands given the upstream
/// gradient `dout[m×n]`.
pub fn matmul_backward(a: &Tensor, b: &Tensor, dout: &Tensor) -> Result<(Tensor, Tensor)> {
    let (m, k) = a.as_matrix_dims("matmul_backward", b)?;
    let n = b.cols();
    if dout.numel() != m * n {
        return Err(Error::ShapeMismatch {
            op: "matmul_backward",
            left: vec![m, n],
            right: dout.shape.clone(),
        });
    }
    let mut da = vec![0.0; m * k];
    let mut db = vec![0.0; k * n];
    for i in 0..m {
        let g = &dout.data[i * n..(i + 1) * n];
        mat_vec_acc(&b.data, n, g, &mut da[i * k..(i + 1) * k]);
        outer_acc(&a.data[i * k..(i + 1) * k], g, &mut db);
    }
    Ok((
        Tensor::new(a.shape.clone(), da)?,
        Tensor::new(b.shape.clone(), db)?,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation's output `y`.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn activation(x: &Tensor, kind: Activation) -> Tensor {
    x.map(|v| kind.apply(v))
}

pub fn activation_backward(y: &Tensor, dy: &Tensor, kind: Activation) -> Result<Tensor> {
    if y.shape != dy.shape {
        return Err(Error::ShapeMismatch {
            op: "activation_backward",
            left: y.shape.clone(),
            right: dy.shape.clone(),
        });
    }
    let data = y
        .data
        .iter()
        .zip(&dy.data)
        .map(|(&y, &g)| g * kind.derivative_from_output(y))
        .collect();
    Tensor::new(y.shape.clone(), data)
}

/// Softmax over a vector, optionally restricted to the positions where
/// `mask` is true. Masked positions come out exactly zero.
pub fn softmax(x: &Tensor, mask: Option<&[bool]>) -> Result<Tensor> {
    if let Some(m) = mask {
        if m.len() != x.numel() {
            return Err(Error::ShapeMismatch {
                op: "softmax",
                left: x.shape.clone(),
                right: vec![m.len()],
            });
        }
    }
    let mut out = vec![0.0; x.numel()];
    softmax_into(&x.data, mask, &mut out)?;
    Tensor::new(x.shape.clone(), out)
}

/// Given softmax output `y` and upstream `dy`, returns the gradient w.r.t.
/// the logits. Masked positions (where `y` is zero) receive zero gradient.
pub fn softmax_backward(y: &Tensor, dy: &Tensor) -> Result<Tensor> {
    if y.shape != dy.shape {
        return Err(Error::ShapeMismatch {
            op: "softmax_backward",
            left: y.shape.clone(),
            right: dy.shape.clone(),
        });
    }
    let mut dx = vec![0.0; y.numel()];
    softmax_backward_into(&y.data, &dy.data, &mut dx);
    Tensor::new(y.shape.clone(), dx)
}

// ---------------------------------------------------------------------------
// Slice kernels. Every kernel that performs a multiply-accumulate loop
// reports its work to the thread-local counters.
// ---------------------------------------------------------------------------

const F64_BYTES: u64 = std::mem::size_of::<f64>() as u64;

/// `out[j] += Σ_i x[i]·w[i, j]` for a row-major `w` with `cols` columns.
#[inline]
pub(crate) fn vec_mat_acc(x: &[f64], w: &[f64], cols: usize, out: &mut [f64]) {
    debug_assert_eq!(w.len(), x.len() * cols);
    debug_assert_eq!(out.len(), cols);
    for (xi, wrow) in x.iter().zip(w.chunks_exact(cols)) {
        if *xi == 0.0 {
            continue;
        }
        for (o, wv) in out.iter_mut().zip(wrow) {
            *o += xi * wv;
        }
    }
    let macs = (x.len() * cols) as u64;
    stats::record(macs, (macs + x.len() as u64) * F64_BYTES);
}

/// `dx[i] += Σ_j w[i, j]·dy[j]`.
#[inline]
pub(crate) fn mat_vec_acc(w: &[f64], cols: usize, dy: &[f64], dx: &mut [f64]) {
    debug_assert_eq!(w.len(), dx.len() * cols);
    for (d, wrow) in dx.iter_mut().zip(w.chunks_exact(cols)) {
        *d += wrow.iter().zip(dy).map(|(a, b)| a * b).sum::<f64>();
    }
    let macs = (dx.len() * cols) as u64;
    stats::record(macs, (macs + dy.len() as u64) * F64_BYTES);
}

/// `dw[i, j] += x[i]·dy[j]`.
#[inline]
pub(crate) fn outer_acc(x: &[f64], dy: &[f64], dw: &mut [f64]) {
    let cols = dy.len();
    debug_assert_eq!(dw.len(), x.len() * cols);
    for (xi, drow) in x.iter().zip(dw.chunks_exact_mut(cols)) {
        if *xi == 0.0 {
            continue;
        }
        for (d, g) in drow.iter_mut().zip(dy) {
            *d += xi * g;
        }
    }
    let macs = (x.len() * cols) as u64;
    stats::record(macs, 2 * macs * F64_BYTES);
}

pub(crate) fn softmax_into(x: &[f64], mask: Option<&[bool]>, out: &mut [f64]) -> Result<()> {
    let live = |i: usize| mask.is_none_or(|m| m[i]);
    let max = (0..x.len())
        .filter(|&i| live(i))
        .map(|i| x[i])
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::EmptyAttentionSupport);
    }
    let mut total = 0.0;
    for i in 0..x.len() {
        out[i] = if live(i) { (x[i] - max).exp() } else { 0.0 };
        total += out[i];
    }
    for v in out.iter_mut() {
        *v /= total;
    }
    Ok(())
}

pub(crate) fn softmax_backward_into(y: &[f64], dy: &[f64], dx: &mut [f64]) {
    let inner: f64 = y.iter().zip(dy).map(|(a, b)| a * b).sum();
    for ((d, &yv), &g) in dx.iter_mut().zip(y).zip(dy) {
        *d = yv * (g - inner);
    }
}

/// `log Σ exp(x)` computed with max-subtraction.
pub(crate) fn log_sum_exp(x: &[f64]) -> f64 {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Index of the largest value; ties resolve to the lowest index.
pub(crate) fn argmax(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in x.iter().enumerate() {
        if v > x[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(
            shape.to_vec(),
            (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    fn triple_loop(a: &Tensor, b: &Tensor) -> Vec<f64> {
        let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0;
                for p in 0..k {
                    s += a.at(i, p) * b.at(p, j);
                }
                out[i * n + j] = s;
            }
        }
        out
    }

    #[test]
    fn new_rejects_wrong_length() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
    }

    #[test]
    fn matmul_identity_and_dot() {
        let eye = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let col = Tensor::from_rows(&[vec![3.0], vec![4.0]]).unwrap();
        assert_eq!(matmul(&eye, &col).unwrap().data(), &[3.0, 4.0]);

        let row = Tensor::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let out = matmul(&row, &col).unwrap();
        assert_eq!(out.shape(), &[1, 1]);
        assert_eq!(out.data(), &[11.0]);
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random(&[3, 4], &mut rng);
        let b = random(&[4, 2], &mut rng);
        let got = matmul(&a, &b).unwrap();
        for (g, w) in got.data().iter().zip(triple_loop(&a, &b)) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[2, 3]);
        let msg = matmul(&a, &b).unwrap_err().to_string();
        assert!(msg.contains("[2, 3]"), "{msg}");
    }

    #[test]
    fn matmul_counts_m_k_n() {
        let a = Tensor::zeros(&[3, 5]).map(|_| 1.0);
        let b = Tensor::zeros(&[5, 7]);
        let (_, s) = stats::measure(|| matmul(&a, &b).unwrap());
        assert_eq!(s.mul_add_count, 3 * 5 * 7);
    }

    #[test]
    fn matmul_is_associative() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random(&[4, 4], &mut rng);
        let b = random(&[4, 4], &mut rng);
        let c = random(&[4, 4], &mut rng);
        let left = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
        let right = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
        for (l, r) in left.data().iter().zip(right.data()) {
            assert!((l - r).abs() < 1e-9);
        }
    }

    #[test]
    fn activations_at_zero_and_symmetry() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert_eq!(Activation::Tanh.apply(0.0), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let x: f64 = rng.gen_range(-10.0..10.0);
            assert!((sigmoid(x) + sigmoid(-x) - 1.0).abs() < 1e-15);
            assert!(sigmoid(x) > 0.0 && sigmoid(x) < 1.0);
            assert!(x.tanh().abs() < 1.0);
        }
        assert!(sigmoid(-800.0).is_finite());
        assert!(sigmoid(800.0).is_finite());
    }

    #[test]
    fn softmax_examples() {
        let s = softmax(&Tensor::vector(vec![0.0, 0.0]), None).unwrap();
        assert_eq!(s.data(), &[0.5, 0.5]);
        let s = softmax(&Tensor::vector(vec![1000.0, 1000.0]), None).unwrap();
        assert_eq!(s.data(), &[0.5, 0.5]);

        let e = std::f64::consts::E;
        let s = softmax(
            &Tensor::vector(vec![1.0, 2.0, 3.0]),
            Some(&[true, true, false]),
        )
        .unwrap();
        assert!((s.data()[0] - 1.0 / (1.0 + e)).abs() < 1e-15);
        assert!((s.data()[1] - e / (1.0 + e)).abs() < 1e-15);
        assert_eq!(s.data()[2], 0.0);
    }

    #[test]
    fn softmax_all_masked_is_error() {
        let err = softmax(&Tensor::vector(vec![1.0, 2.0]), Some(&[false, false])).unwrap_err();
        assert_eq!(err.to_string(), "empty attention support");
    }

    #[test]
    fn argmax_ties_pick_lowest() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }

    #[test]
    fn log_sum_exp_is_stable() {
        let v = log_sum_exp(&[1000.0, 1000.0]);
        assert!((v - (1000.0 + 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn transpose_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random(&[3, 5], &mut rng);
        assert_eq!(a.transpose().unwrap().transpose().unwrap(), a);
    }

    #[test]
    fn grad_slot_mirrors_shape() {
        let mut t = Tensor::zeros(&[2, 3]);
        assert!(t.grad().is_none());
        t.grad_mut()[4] = 1.5;
        assert_eq!(t.grad().unwrap().len(), 6);
        t.zero_grad();
        assert!(t.grad().unwrap().iter().all(|&g| g == 0.0));
    }
}
