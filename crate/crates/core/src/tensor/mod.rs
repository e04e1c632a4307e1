//! Dense f64 tensors and the reverse-mode tape built on them.
//!
//! Shapes are `[]` (scalar), `[n]` (vector) or `[r, c]` (matrix, row-major).
//! Anything higher-rank is out of scope for this crate.

mod fd;
mod kernels;
mod tape;

pub use fd::finite_diff_grad;
pub use kernels::matmul_into;
pub use tape::{Gradients, Tape, TensorId};

use crate::error::{Result, SrxError};
use rand::Rng;

/// Dense tensor value, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn scalar(v: f64) -> Self {
        Tensor { shape: vec![], data: vec![v] }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor { shape: vec![data.len()], data }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(SrxError::shape(format!(
                "matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Tensor { shape: vec![rows, cols], data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(SrxError::shape("from_rows needs at least one row"));
        }
        let cols = rows[0].len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(SrxError::shape("from_rows got ragged rows"));
        }
        let data = rows.iter().flatten().copied().collect();
        Tensor::matrix(rows.len(), cols, data)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor { shape: shape.to_vec(), data: vec![0.0; shape.iter().product()] }
    }

    pub fn filled(shape: &[usize], v: f64) -> Self {
        Tensor { shape: shape.to_vec(), data: vec![v; shape.iter().product()] }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Self {
        let n: usize = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: (0..n).map(&mut f).collect() }
    }

    /// i.i.d. U(lo, hi) entries drawn from `rng` in index order.
    pub fn uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut impl Rng) -> Self {
        Tensor::from_fn(shape, |_| rng.gen_range(lo..hi))
    }

    /// Weight init for a `rows x cols` matrix applied as `x * W`:
    /// uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) with fan_in = rows.
    pub fn fan_in_uniform(rows: usize, cols: usize, rng: &mut impl Rng) -> Self {
        let lim = 1.0 / (rows as f64).sqrt();
        Tensor::uniform(&[rows, cols], -lim, lim, rng)
    }

    pub fn eye(n: usize) -> Self {
        Tensor::from_fn(&[n, n], |i| if i / n == i % n { 1.0 } else { 0.0 })
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.shape.is_empty()
    }

    pub fn as_scalar(&self) -> Result<f64> {
        if self.is_scalar() {
            Ok(self.data[0])
        } else {
            Err(SrxError::shape(format!("expected scalar, got shape {:?}", self.shape)))
        }
    }

    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            s => Err(SrxError::shape(format!("expected matrix, got shape {s:?}"))),
        }
    }

    /// 2-D element access. Debug-checked only; callers validate shape first.
    pub fn at(&self, r: usize, c: usize) -> f64 {
        debug_assert_eq!(self.rank(), 2);
        self.data[r * self.shape[1] + c]
    }

    /// Row `r` of a matrix as a slice.
    pub fn row(&self, r: usize) -> &[f64] {
        debug_assert_eq!(self.rank(), 2);
        let c = self.shape[1];
        &self.data[r * c..(r + 1) * c]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Largest absolute elementwise difference; shapes must already match.
pub fn max_abs_diff(a: &Tensor, b: &Tensor) -> f64 {
    debug_assert_eq!(a.shape(), b.shape());
    a.data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Relative error with an absolute floor, symmetric in its arguments.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn shapes_and_access() {
        let s = Tensor::scalar(3.5);
        assert!(s.is_scalar());
        assert_eq!(s.as_scalar().unwrap(), 3.5);

        let v = Tensor::vector(vec![1.0, 2.0]);
        assert_eq!(v.shape(), &[2]);
        assert!(v.as_scalar().is_err());

        let m = Tensor::matrix(2, 3, vec![1., 2., 3., 4., 5., 6.]).unwrap();
        assert_eq!(m.at(1, 2), 6.0);
        assert_eq!(m.row(0), &[1., 2., 3.]);
        assert!(Tensor::matrix(2, 3, vec![1.0]).is_err());
    }

    #[test]
    fn from_rows_rejects_ragged() {
        assert!(Tensor::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(Tensor::from_rows(&[]).is_err());
    }

    #[test]
    fn uniform_is_seed_stable() {
        let a = Tensor::uniform(&[3, 4], -1.0, 1.0, &mut rng::stream(9, 0));
        let b = Tensor::uniform(&[3, 4], -1.0, 1.0, &mut rng::stream(9, 0));
        assert_eq!(a, b);
        assert!(a.data().iter().all(|v| (-1.0..1.0).contains(v)));
    }

    #[test]
    fn rel_err_floors_near_zero() {
        assert!(rel_err(0.0, 1e-9) < 1e-2);
        assert!((rel_err(2.0, 1.0) - 0.5).abs() < 1e-12);
    }
}
