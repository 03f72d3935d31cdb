//! FFT-based tools on the unit torus: the spectral fractional Laplacian,
//! band-limited interpolation, and circulant products.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::{is_power_of_two, GridFunction};
use crate::scalar::Real;

fn plans<T: Real>(n: usize) -> (Arc<dyn Fft<T>>, Arc<dyn Fft<T>>) {
    let mut planner = FftPlanner::new();
    (planner.plan_fft_forward(n), planner.plan_fft_inverse(n))
}

/// Signed frequency of DFT index `j` for a length-`n` transform.
#[inline]
pub fn frequency(j: usize, n: usize) -> isize {
    if j <= n / 2 {
        j as isize
    } else {
        j as isize - n as isize
    }
}

fn forward<T: Real>(u: &[T]) -> Vec<Complex<T>> {
    let (fwd, _) = plans::<T>(u.len());
    let mut buf: Vec<Complex<T>> = u.iter().map(|&v| Complex::new(v, T::zero())).collect();
    fwd.process(&mut buf);
    buf
}

fn inverse_real<T: Real>(mut spec: Vec<Complex<T>>) -> Vec<T> {
    let n = spec.len();
    let (_, inv) = plans::<T>(n);
    inv.process(&mut spec);
    let scale = T::one() / T::from_usize_lossy(n);
    spec.into_iter().map(|c| c.re * scale).collect()
}

fn check_pow2(n: usize) -> Result<()> {
    if is_power_of_two(n) {
        Ok(())
    } else {
        Err(Error::Domain(format!("spectral path needs a power-of-two grid, got {n}")))
    }
}

/// Fourier multiplier `(2π|k|)^σ` of `(-Δ)^{σ/2}` on the unit torus.
pub fn flap_symbol<T: Real>(k: isize, sigma: T) -> T {
    if k == 0 {
        T::zero()
    } else {
        (T::two_pi() * T::from_usize_lossy(k.unsigned_abs())).powf(sigma)
    }
}

/// `(-Δ)^{σ/2} u` through the discrete Fourier transform. The output has zero mean.
pub fn spectral_flap<T: Real>(u: &GridFunction<T>, sigma: T) -> Result<GridFunction<T>> {
    let n = u.n();
    check_pow2(n)?;
    let mut spec = forward(u.values());
    for (j, c) in spec.iter_mut().enumerate() {
        *c = *c * flap_symbol(frequency(j, n), sigma);
    }
    GridFunction::new(inverse_real(spec))
}

/// Solves `(-Δ)^{σ/2} ψ = f` for zero-mean `f`; the returned `ψ` has zero mean.
pub fn spectral_inverse_flap<T: Real>(f: &GridFunction<T>, sigma: T) -> Result<GridFunction<T>> {
    let n = f.n();
    check_pow2(n)?;
    let mean = f.mean();
    let limit = T::c(1e-12) * f.sup_norm().max(T::min_positive_value());
    if mean.abs() > limit {
        return Err(Error::Fredholm {
            mean: mean.to_f64_lossy(),
            limit: limit.to_f64_lossy(),
        });
    }
    let mut spec = forward(f.values());
    spec[0] = Complex::new(T::zero(), T::zero());
    for (j, c) in spec.iter_mut().enumerate().skip(1) {
        *c = *c / flap_symbol(frequency(j, n), sigma);
    }
    GridFunction::new(inverse_real(spec))
}

/// Band-limited (trigonometric) interpolant of a grid function; evaluates the
/// profile and its derivative anywhere on the line.
#[derive(Debug, Clone)]
pub struct TrigSeries<T> {
    /// (frequency, coefficient) pairs with `u(y) = Σ c_k e^{2πiky}`.
    modes: Vec<(isize, Complex<T>)>,
}

impl<T: Real> TrigSeries<T> {
    pub fn from_grid(u: &GridFunction<T>) -> Result<Self> {
        let n = u.n();
        check_pow2(n)?;
        let spec = forward(u.values());
        let scale = T::one() / T::from_usize_lossy(n);
        let cutoff = T::c(1e-15) * spec.iter().fold(T::zero(), |m, c| m.max(c.norm())) ;
        let mut modes = Vec::new();
        for (j, &c) in spec.iter().enumerate() {
            if c.norm() <= cutoff {
                continue;
            }
            let k = frequency(j, n);
            if 2 * k.unsigned_abs() == n {
                // Nyquist: split evenly between ±n/2 so the interpolant stays real.
                let half = c * scale * T::c(0.5);
                modes.push((k, half));
                modes.push((-k, half));
            } else {
                modes.push((k, c * scale));
            }
        }
        Ok(Self { modes })
    }

    pub fn value(&self, y: T) -> T {
        self.modes
            .iter()
            .map(|&(k, c)| {
                let th = T::two_pi() * T::from_isize(k).unwrap() * y;
                c.re * th.cos() - c.im * th.sin()
            })
            .sum()
    }

    pub fn derivative(&self, y: T) -> T {
        self.modes
            .iter()
            .map(|&(k, c)| {
                let w = T::two_pi() * T::from_isize(k).unwrap();
                let th = w * y;
                -w * (c.re * th.sin() + c.im * th.cos())
            })
            .sum()
    }
}

/// Periodic correlation `c_i = Σ_r w_r u_{i+r}` evaluated by FFT.
#[derive(Clone)]
pub struct Circulant<T> {
    n: usize,
    /// `conj(ŵ)/n`
    symbol: Vec<Complex<T>>,
    fwd: Arc<dyn Fft<T>>,
    inv: Arc<dyn Fft<T>>,
}

impl<T> std::fmt::Debug for Circulant<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Circulant").field("n", &self.n).finish()
    }
}

impl<T: Real> Circulant<T> {
    pub fn new(weights: &[T]) -> Self {
        let n = weights.len();
        let (fwd, inv) = plans::<T>(n);
        let mut buf: Vec<Complex<T>> = weights.iter().map(|&v| Complex::new(v, T::zero())).collect();
        fwd.process(&mut buf);
        let scale = T::one() / T::from_usize_lossy(n);
        let symbol = buf.into_iter().map(|c| c.conj() * scale).collect();
        Self { n, symbol, fwd, inv }
    }

    pub fn apply(&self, u: &[T], out: &mut [T]) {
        let mut buf: Vec<Complex<T>> = u.iter().map(|&v| Complex::new(v, T::zero())).collect();
        self.fwd.process(&mut buf);
        for (b, s) in buf.iter_mut().zip(&self.symbol) {
            *b = *b * *s;
        }
        self.inv.process(&mut buf);
        for (o, b) in out.iter_mut().zip(buf) {
            *o = b.re;
        }
    }
}
