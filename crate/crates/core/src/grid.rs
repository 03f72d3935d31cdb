//! Periodic grid functions on the unit torus.

use crate::error::{Error, Result};
use crate::scalar::{max_of, min_of, sup_abs, Real};

/// Smallest admissible grid.
pub const MIN_NODES: usize = 8;

/// A 1-periodic function sampled at the nodes `j/n`, `j = 0..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction<T> {
    values: Vec<T>,
}

impl<T: Real> GridFunction<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.len() < MIN_NODES {
            return Err(Error::Domain(format!(
                "grid needs at least {MIN_NODES} nodes, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite value at node {i}")));
        }
        Ok(Self { values })
    }

    pub fn zeros(n: usize) -> Result<Self> {
        Self::new(vec![T::zero(); n])
    }

    pub fn constant(n: usize, c: T) -> Result<Self> {
        Self::new(vec![c; n])
    }

    /// Samples `f` at the nodes.
    pub fn from_fn(n: usize, f: impl Fn(T) -> T) -> Result<Self> {
        let h = Self::spacing_for(n);
        Self::new((0..n).map(|j| f(T::from_usize_lossy(j) * h)).collect())
    }

    fn spacing_for(n: usize) -> T {
        T::one() / T::from_usize_lossy(n.max(1))
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn spacing(&self) -> T {
        Self::spacing_for(self.n())
    }

    #[inline]
    pub fn node(&self, j: usize) -> T {
        T::from_usize_lossy(j) * self.spacing()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    /// Value at node `j` taken modulo `n`.
    #[inline]
    pub fn at(&self, j: isize) -> T {
        let n = self.n() as isize;
        self.values[j.rem_euclid(n) as usize]
    }

    pub fn mean(&self) -> T {
        self.values.iter().copied().sum::<T>() / T::from_usize_lossy(self.n())
    }

    /// `v(j) = u(j + k)`; exact, no interpolation.
    pub fn shifted(&self, k: isize) -> Self {
        let values = (0..self.n() as isize).map(|j| self.at(j + k)).collect();
        Self { values }
    }

    pub fn sup_norm(&self) -> T {
        sup_abs(&self.values)
    }

    pub fn max(&self) -> T {
        max_of(&self.values)
    }

    pub fn min(&self) -> T {
        min_of(&self.values)
    }

    pub fn osc(&self) -> T {
        self.max() - self.min()
    }

    /// Nearest-neighbour Lipschitz constant `max |u(j+1) - u(j)| / h`.
    pub fn lipschitz(&self) -> T {
        let n = self.n() as isize;
        (0..n)
            .map(|j| (self.at(j + 1) - self.at(j)).abs())
            .fold(T::zero(), T::max)
            / self.spacing()
    }

    /// Hölder quotient `max |u(i) - u(j)| / d(i,j)^gamma` over all pairs, with the
    /// periodic distance `d`.
    pub fn holder_quotient(&self, gamma: T) -> T {
        let n = self.n();
        let h = self.spacing();
        let mut best = T::zero();
        for i in 0..n {
            for j in (i + 1)..n {
                let k = (j - i).min(n - (j - i));
                let d = T::from_usize_lossy(k) * h;
                let q = (self.values[i] - self.values[j]).abs() / d.powf(gamma);
                best = best.max(q);
            }
        }
        best
    }

    /// Every `stride`-th node, e.g. to restrict a fine solution to a coarse grid.
    pub fn restrict(&self, stride: usize) -> Result<Self> {
        if stride == 0 || self.n() % stride != 0 {
            return Err(Error::Domain(format!(
                "stride {stride} does not divide grid size {}",
                self.n()
            )));
        }
        Self::new(self.values.iter().step_by(stride).copied().collect())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Result<Self> {
        Self::new(self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.n() != other.n() {
            return Err(Error::SizeMismatch {
                expected: self.n(),
                got: other.n(),
            });
        }
        Self::new(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }
}

/// `true` when `n` is a power of two (required by the spectral paths).
pub fn is_power_of_two(n: usize) -> bool {
    n != 0 && n & (n - 1) == 0
}
