//! Banded LU with partial pivoting (LINPACK-style storage: multipliers are
//! never swapped after the step that created them).

use crate::error::{Error, Result};
use num_complex::ComplexFloat;

#[derive(Clone, Debug)]
pub struct BandMatrix<T> {
    n: usize,
    kl: usize,
    ku: usize,
    // row-major, row i holds columns i-kl ..= i+ku+kl (room for pivot fill-in)
    data: Vec<T>,
}

impl<T: ComplexFloat<Real = f64>> BandMatrix<T> {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let w = 2 * kl + ku + 1;
        BandMatrix { n, kl, ku, data: vec![T::zero(); n * w] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn width(&self) -> usize {
        2 * self.kl + self.ku + 1
    }

    #[inline]
    fn pos(&self, i: usize, j: usize) -> usize {
        i * self.width() + (j + self.kl - i)
    }

    pub fn in_band(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && j + self.kl >= i && j <= i + self.ku
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        if self.in_band(i, j) {
            self.data[self.pos(i, j)]
        } else {
            T::zero()
        }
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        assert!(self.in_band(i, j), "({i},{j}) outside band");
        let p = self.pos(i, j);
        self.data[p] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: T) {
        assert!(self.in_band(i, j), "({i},{j}) outside band");
        let p = self.pos(i, j);
        self.data[p] = self.data[p] + v;
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.n];
        for (i, yi) in y.iter_mut().enumerate() {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku).min(self.n - 1);
            let mut acc = T::zero();
            for j in lo..=hi {
                acc = acc + self.data[self.pos(i, j)] * x[j];
            }
            *yi = acc;
        }
        y
    }

    pub fn factor(mut self) -> Result<BandedLu<T>> {
        let n = self.n;
        let (kl, ku) = (self.kl, self.ku);
        let mut piv = vec![0usize; n];
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = self.data[self.pos(k, k)].abs();
            for i in k + 1..=last_row {
                let a = self.data[self.pos(i, k)].abs();
                if a > best {
                    best = a;
                    p = i;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(Error::SingularSolve(k));
            }
            piv[k] = p;
            let last_col = (k + ku + kl).min(n - 1);
            if p != k {
                for j in k..=last_col {
                    let (a, b) = (self.pos(k, j), self.pos(p, j));
                    self.data.swap(a, b);
                }
            }
            let pivot = self.data[self.pos(k, k)];
            for i in k + 1..=last_row {
                let pik = self.pos(i, k);
                let l = self.data[pik] / pivot;
                self.data[pik] = l;
                if l == T::zero() {
                    continue;
                }
                for j in k + 1..=last_col {
                    let (a, b) = (self.pos(i, j), self.pos(k, j));
                    self.data[a] = self.data[a] - l * self.data[b];
                }
            }
        }
        Ok(BandedLu { m: self, piv })
    }
}

#[derive(Clone, Debug)]
pub struct BandedLu<T> {
    m: BandMatrix<T>,
    piv: Vec<usize>,
}

impl<T: ComplexFloat<Real = f64>> BandedLu<T> {
    pub fn n(&self) -> usize {
        self.m.n
    }

    pub fn solve_in_place(&self, b: &mut [T]) {
        let m = &self.m;
        let n = m.n;
        assert_eq!(b.len(), n);
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk == T::zero() {
                continue;
            }
            for i in k + 1..=(k + m.kl).min(n - 1) {
                b[i] = b[i] - m.data[m.pos(i, k)] * bk;
            }
        }
        for i in (0..n).rev() {
            let mut acc = b[i];
            for j in i + 1..=(i + m.ku + m.kl).min(n - 1) {
                acc = acc - m.data[m.pos(i, j)] * b[j];
            }
            b[i] = acc / m.data[m.pos(i, i)];
        }
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Thomas algorithm for a (complex) symmetric tridiagonal system without
/// pivoting; only safe for diagonally dominant matrices.
pub fn solve_sym_tridiagonal<T: ComplexFloat<Real = f64>>(diag: &[T], off: &[T], rhs: &[T]) -> Result<Vec<T>> {
    let n = diag.len();
    let mut c = vec![T::zero(); n];
    let mut x = rhs.to_vec();
    let mut piv = diag[0];
    for i in 0..n {
        if i > 0 {
            piv = diag[i] - off[i - 1] * c[i - 1];
            x[i] = x[i] - off[i - 1] * x[i - 1];
        }
        if piv.abs() == 0.0 || !piv.abs().is_finite() {
            return Err(Error::SingularSolve(i));
        }
        if i + 1 < n {
            c[i] = off[i] / piv;
        }
        x[i] = x[i] / piv;
    }
    for i in (0..n.saturating_sub(1)).rev() {
        x[i] = x[i] - c[i] * x[i + 1];
    }
    Ok(x)
}
