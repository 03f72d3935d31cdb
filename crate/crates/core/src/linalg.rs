//! Small linear solvers used by the Newton iterations of the cell problems.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Row-major dense square matrix.
#[derive(Debug, Clone)]
pub struct DenseMatrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Real> DenseMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![T::zero(); n * n] }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.n + j] = self.data[i * self.n + j] + v;
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        (0..self.n)
            .map(|i| {
                self.data[i * self.n..(i + 1) * self.n]
                    .iter()
                    .zip(x)
                    .map(|(&a, &b)| a * b)
                    .sum()
            })
            .collect()
    }

    /// Solves `A x = b` by LU with partial pivoting; consumes the matrix.
    pub fn solve(mut self, b: &[T]) -> Result<Vec<T>> {
        let n = self.n;
        if b.len() != n {
            return Err(Error::SizeMismatch { expected: n, got: b.len() });
        }
        let mut x = b.to_vec();
        let a = &mut self.data;
        for k in 0..n {
            let (piv, pmax) = (k..n)
                .map(|i| (i, a[i * n + k].abs()))
                .fold((k, T::zero()), |(bi, bv), (i, v)| if v > bv { (i, v) } else { (bi, bv) });
            if pmax == T::zero() || !pmax.is_finite() {
                return Err(Error::Domain(format!("singular matrix at column {k}")));
            }
            if piv != k {
                for j in 0..n {
                    a.swap(k * n + j, piv * n + j);
                }
                x.swap(k, piv);
            }
            let d = a[k * n + k];
            for i in (k + 1)..n {
                let f = a[i * n + k] / d;
                if f == T::zero() {
                    continue;
                }
                a[i * n + k] = f;
                for j in (k + 1)..n {
                    a[i * n + j] = a[i * n + j] - f * a[k * n + j];
                }
                x[i] = x[i] - f * x[k];
            }
        }
        for k in (0..n).rev() {
            let s: T = ((k + 1)..n).map(|j| a[k * n + j] * x[j]).sum();
            x[k] = (x[k] - s) / a[k * n + k];
        }
        Ok(x)
    }
}

/// Periodic tridiagonal matrix: row `i` couples `i-1`, `i`, `i+1` (indices mod n).
#[derive(Debug, Clone)]
pub struct CyclicTridiagonal<T> {
    pub lower: Vec<T>,
    pub diag: Vec<T>,
    pub upper: Vec<T>,
}

impl<T: Real> CyclicTridiagonal<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            lower: vec![T::zero(); n],
            diag: vec![T::zero(); n],
            upper: vec![T::zero(); n],
        }
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        let n = x.len();
        (0..n)
            .map(|i| self.lower[i] * x[(i + n - 1) % n] + self.diag[i] * x[i] + self.upper[i] * x[(i + 1) % n])
            .collect()
    }

    /// Sherman–Morrison reduction to two Thomas solves. Intended for strictly
    /// diagonally dominant systems.
    pub fn solve(&self, rhs: &[T]) -> Result<Vec<T>> {
        let n = self.diag.len();
        if rhs.len() != n {
            return Err(Error::SizeMismatch { expected: n, got: rhs.len() });
        }
        let alpha = self.upper[n - 1]; // row n-1, column 0
        let beta = self.lower[0]; // row 0, column n-1
        let gamma = -self.diag[0];
        let mut diag = self.diag.clone();
        diag[0] = diag[0] - gamma;
        diag[n - 1] = diag[n - 1] - alpha * beta / gamma;
        let x = thomas(&self.lower, &diag, &self.upper, rhs)?;
        let mut u = vec![T::zero(); n];
        u[0] = gamma;
        u[n - 1] = alpha;
        let z = thomas(&self.lower, &diag, &self.upper, &u)?;
        let fact = (x[0] + beta * x[n - 1] / gamma) / (T::one() + z[0] + beta * z[n - 1] / gamma);
        Ok(x.iter().zip(&z).map(|(&xi, &zi)| xi - fact * zi).collect())
    }
}

fn thomas<T: Real>(lower: &[T], diag: &[T], upper: &[T], rhs: &[T]) -> Result<Vec<T>> {
    let n = diag.len();
    let mut c = vec![T::zero(); n];
    let mut d = vec![T::zero(); n];
    let mut denom = diag[0];
    if denom == T::zero() {
        return Err(Error::Domain("zero pivot in tridiagonal solve".into()));
    }
    c[0] = upper[0] / denom;
    d[0] = rhs[0] / denom;
    for i in 1..n {
        denom = diag[i] - lower[i] * c[i - 1];
        if denom == T::zero() || !denom.is_finite() {
            return Err(Error::Domain(format!("zero pivot in tridiagonal solve at row {i}")));
        }
        c[i] = if i + 1 < n { upper[i] / denom } else { T::zero() };
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / denom;
    }
    let mut x = vec![T::zero(); n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_solve_roundtrip() {
        let mut a = DenseMatrix::<f64>::zeros(3);
        let vals = [[0.0, 2.0, 1.0], [1.0, 1.0, 0.0], [3.0, 0.0, 4.0]];
        for (i, row) in vals.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                a.add(i, j, v);
            }
        }
        let x = [1.0, -2.0, 0.5];
        let b = a.mul_vec(&x);
        let got = a.solve(&b).unwrap();
        for (g, e) in got.iter().zip(&x) {
            assert!((g - e).abs() < 1e-12);
        }
    }

    #[test]
    fn cyclic_tridiagonal_matches_dense() {
        let n = 9;
        let mut m = CyclicTridiagonal::<f64>::zeros(n);
        for i in 0..n {
            m.lower[i] = -1.0 - 0.1 * i as f64;
            m.upper[i] = -0.5;
            m.diag[i] = 3.0 + 0.2 * i as f64;
        }
        let x: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let b = m.mul_vec(&x);
        let got = m.solve(&b).unwrap();
        for (g, e) in got.iter().zip(&x) {
            assert!((g - e).abs() < 1e-12, "{g} vs {e}");
        }
    }
}
