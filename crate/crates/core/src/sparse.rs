//! Compressed sparse row storage for complex matrices.

use std::ops::Range;

use num_complex::Complex64 as C64;

const ZERO: C64 = C64::new(0.0, 0.0);

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Csr {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<C64>,
}

impl Csr {
    /// Duplicates are summed, exact zeros dropped.
    pub fn from_triplets(nrows: usize, ncols: usize, mut t: Vec<(usize, usize, C64)>) -> Self {
        t.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut merged: Vec<(usize, usize, C64)> = Vec::with_capacity(t.len());
        for (r, c, v) in t {
            debug_assert!(r < nrows && c < ncols);
            match merged.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => merged.push((r, c, v)),
            }
        }
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut cols = Vec::with_capacity(merged.len());
        let mut vals = Vec::with_capacity(merged.len());
        for (r, c, v) in merged {
            if v != ZERO {
                row_ptr[r + 1] += 1;
                cols.push(c);
                vals.push(v);
            }
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Csr { nrows, ncols, row_ptr, cols, vals }
    }

    pub fn zero(nrows: usize, ncols: usize) -> Self {
        Self::from_triplets(nrows, ncols, Vec::new())
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[span.clone()].iter().copied().zip(self.vals[span].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.nrows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.cols[span.clone()].binary_search(&c) {
            Ok(k) => self.vals[span.start + k],
            Err(_) => ZERO,
        }
    }

    pub fn adjoint(&self) -> Self {
        let t = self.triplets().map(|(r, c, v)| (c, r, v.conj())).collect();
        Self::from_triplets(self.ncols, self.nrows, t)
    }

    pub fn scale(&self, s: C64) -> Self {
        let t = self.triplets().map(|(r, c, v)| (r, c, v * s)).collect();
        Self::from_triplets(self.nrows, self.ncols, t)
    }

    /// `self * other`.
    pub fn compose(&self, other: &Csr) -> Self {
        assert_eq!(self.ncols, other.nrows, "inner dimensions differ");
        let mut t = Vec::new();
        for r in 0..self.nrows {
            for (k, a) in self.row(r) {
                for (c, b) in other.row(k) {
                    t.push((r, c, a * b));
                }
            }
        }
        Self::from_triplets(self.nrows, other.ncols, t)
    }

    /// `self + s * other`.
    pub fn axpy(&self, s: C64, other: &Csr) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols), "shape mismatch");
        let mut t: Vec<_> = self.triplets().collect();
        t.extend(other.triplets().map(|(r, c, v)| (r, c, v * s)));
        Self::from_triplets(self.nrows, self.ncols, t)
    }

    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![ZERO; self.nrows];
        self.apply_acc(x, C64::new(1.0, 0.0), &mut y);
        y
    }

    /// `y += s * A x`.
    pub fn apply_acc(&self, x: &[C64], s: C64, y: &mut [C64]) {
        debug_assert_eq!(x.len(), self.ncols);
        for (r, yr) in y.iter_mut().enumerate().take(self.nrows) {
            let mut acc = ZERO;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            *yr += s * acc;
        }
    }

    /// `out += s * A * m` for a row-major `ncols(A) x width` block `m`.
    pub fn mul_dense_acc(&self, m: &[C64], width: usize, s: C64, out: &mut [C64]) {
        for r in 0..self.nrows {
            let dst = &mut out[r * width..(r + 1) * width];
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let a = self.vals[k] * s;
                let c = self.cols[k];
                let src = &m[c * width..(c + 1) * width];
                for (d, x) in dst.iter_mut().zip(src) {
                    *d += a * x;
                }
            }
        }
    }

    /// As [`Csr::mul_dense_acc`], restricted to output rows `rows` and the
    /// columns `cols` of `m` and `out`.
    pub fn mul_window_acc(&self, m: &[C64], width: usize, s: C64, out: &mut [C64], rows: Range<usize>, cols: Range<usize>) {
        for r in rows {
            let dst = &mut out[r * width + cols.start..r * width + cols.end];
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let a = self.vals[k] * s;
                let c = self.cols[k];
                let src = &m[c * width + cols.start..c * width + cols.end];
                for (d, x) in dst.iter_mut().zip(src) {
                    *d += a * x;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    #[test]
    fn triplets_merge_and_drop_zeros() {
        let m = Csr::from_triplets(2, 2, vec![(0, 1, c(1.0)), (0, 1, c(2.0)), (1, 0, c(1.0)), (1, 0, c(-1.0))]);
        assert_eq!(m.nnz(), 1);
        assert_eq!(m.get(0, 1), c(3.0));
        assert_eq!(m.get(1, 0), ZERO);
    }

    #[test]
    fn compose_matches_dense() {
        let a = Csr::from_triplets(2, 3, vec![(0, 0, c(1.0)), (0, 2, C64::new(0.0, 1.0)), (1, 1, c(2.0))]);
        let b = Csr::from_triplets(3, 2, vec![(0, 1, c(1.0)), (2, 0, c(3.0)), (1, 1, c(-1.0))]);
        let p = a.compose(&b);
        assert_eq!(p.get(0, 0), C64::new(0.0, 3.0));
        assert_eq!(p.get(0, 1), c(1.0));
        assert_eq!(p.get(1, 1), c(-2.0));
        let x = vec![c(1.0), c(2.0)];
        let y = p.apply(&x);
        assert_eq!(y[0], C64::new(2.0, 3.0));
        assert_eq!(y[1], c(-4.0));
    }

    #[test]
    fn dense_block_product() {
        let a = Csr::from_triplets(2, 2, vec![(0, 1, c(2.0)), (1, 0, c(1.0))]);
        let m = vec![c(1.0), c(2.0), c(3.0), c(4.0)];
        let mut out = vec![ZERO; 4];
        a.mul_dense_acc(&m, 2, c(1.0), &mut out);
        assert_eq!(out, vec![c(6.0), c(8.0), c(1.0), c(2.0)]);
        let mut part = vec![ZERO; 4];
        a.mul_window_acc(&m, 2, c(1.0), &mut part, 0..1, 1..2);
        assert_eq!(part, vec![ZERO, c(8.0), ZERO, ZERO]);
    }
}
