//! Minimal dense row-major matrices and the vector helpers the model needs.

use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Scalar> Matrix<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![F::zero(); rows * cols],
        }
    }

    /// Build from a generator, visiting entries row-major. The visit order
    /// is part of the determinism contract for random initialization.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> F) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<F>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[F] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [F] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    /// `out = self * x`.
    pub fn matvec(&self, x: &[F], out: &mut [F]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for r in 0..self.rows {
            out[r] = dot(self.row(r), x);
        }
    }

    /// `out += self^T * x`.
    pub fn tr_matvec_add(&self, x: &[F], out: &mut [F]) {
        debug_assert_eq!(x.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for r in 0..self.rows {
            let xr = x[r];
            for (o, &w) in out.iter_mut().zip(self.row(r)) {
                *o = *o + xr * w;
            }
        }
    }

    /// Rank-one update `self += a * b^T`.
    pub fn add_outer(&mut self, a: &[F], b: &[F]) {
        debug_assert_eq!(a.len(), self.rows);
        debug_assert_eq!(b.len(), self.cols);
        for r in 0..self.rows {
            let ar = a[r];
            for (w, &bv) in self.row_mut(r).iter_mut().zip(b) {
                *w = *w + ar * bv;
            }
        }
    }
}

pub fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = F::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc = acc + x * y;
    }
    acc
}

pub fn add_assign<F: Scalar>(dst: &mut [F], src: &[F]) {
    debug_assert_eq!(dst.len(), src.len());
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = *d + s;
    }
}

/// An affine map `y = W x + b` with `W` of shape `out x in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Affine<F> {
    pub weight: Matrix<F>,
    pub bias: Vec<F>,
}

impl<F: Scalar> Affine<F> {
    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Affine {
            weight: Matrix::zeros(out_dim, in_dim),
            bias: vec![F::zero(); out_dim],
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn apply(&self, x: &[F], out: &mut [F]) {
        self.weight.matvec(x, out);
        for (o, &b) in out.iter_mut().zip(&self.bias) {
            *o = *o + b;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matvec_small() {
        let m = Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let mut out = vec![0.0; 2];
        m.matvec(&[1.0, 0.0, -1.0], &mut out);
        assert_eq!(out, vec![-2.0, -2.0]);
    }

    #[test]
    fn transpose_matvec_accumulates() {
        let m = Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let mut out = vec![10.0, 20.0];
        m.tr_matvec_add(&[1.0, 1.0], &mut out);
        assert_eq!(out, vec![14.0, 26.0]);
    }

    #[test]
    fn outer_product_update() {
        let mut m = Matrix::zeros(2, 2);
        m.add_outer(&[1.0, 2.0], &[3.0, 4.0]);
        assert_eq!(m.data(), &[3.0, 4.0, 6.0, 8.0]);
    }

    #[test]
    fn affine_applies_bias() {
        let mut a = Affine::zeros(2, 2);
        a.bias = vec![0.5, -0.5];
        let mut out = vec![0.0; 2];
        a.apply(&[1.0, 1.0], &mut out);
        assert_eq!(out, vec![0.5, -0.5]);
    }
}
