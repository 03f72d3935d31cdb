//! One-dimensional quadrature: Gauss–Legendre rules, adaptive Gauss–Kronrod,
//! and the periodic trapezoidal rule.

use crate::scalar::Real;

/// Gauss–Kronrod 7/15 abscissae on [0,1] (symmetric rule, nonnegative half).
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_0,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct Quadrature<T> {
    pub value: T,
    pub error: T,
    pub converged: bool,
}

fn gk15<T: Real>(f: &impl Fn(T) -> T, a: T, b: T) -> (T, T) {
    let half = T::c(0.5);
    let center = half * (a + b);
    let radius = half * (b - a);
    let fc = f(center);
    let mut kronrod = fc * T::c(WGK[7]);
    let mut gauss = fc * T::c(WG[3]);
    for (i, (&x, &w)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let dx = radius * T::c(x);
        let s = f(center - dx) + f(center + dx);
        kronrod = kronrod + s * T::c(w);
        if i % 2 == 1 {
            gauss = gauss + s * T::c(WG[i / 2]);
        }
    }
    let value = kronrod * radius;
    let error = ((kronrod - gauss) * radius).abs();
    (value, error)
}

/// Adaptive Gauss–Kronrod (G7/K15) on `[a, b]` by global bisection of the worst panel.
pub fn integrate<T: Real>(f: impl Fn(T) -> T, a: T, b: T, abs_tol: T, rel_tol: T) -> Quadrature<T> {
    const MAX_PANELS: usize = 2000;
    let (v, e) = gk15(&f, a, b);
    let mut panels = vec![(a, b, v, e)];
    loop {
        let value: T = panels.iter().map(|p| p.2).sum();
        let error: T = panels.iter().map(|p| p.3).sum();
        let target = abs_tol.max(rel_tol * value.abs());
        if error <= target {
            return Quadrature { value, error, converged: true };
        }
        if panels.len() >= MAX_PANELS {
            return Quadrature { value, error, converged: false };
        }
        let (worst, _) = panels
            .iter()
            .enumerate()
            .fold((0, T::neg_infinity()), |(bi, be), (i, p)| if p.3 > be { (i, p.3) } else { (bi, be) });
        let (pa, pb, _, _) = panels[worst];
        let mid = T::c(0.5) * (pa + pb);
        if mid <= pa || mid >= pb {
            return Quadrature { value, error, converged: false };
        }
        panels.swap_remove(worst);
        let (v1, e1) = gk15(&f, pa, mid);
        let (v2, e2) = gk15(&f, mid, pb);
        panels.push((pa, mid, v1, e1));
        panels.push((mid, pb, v2, e2));
    }
}

/// Gauss–Legendre nodes and weights on [-1, 1], computed by Newton iteration on
/// the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = nf * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Fixed Gauss–Legendre rule mapped to arbitrary intervals.
#[derive(Debug, Clone)]
pub struct GaussRule<T> {
    nodes: Vec<T>,
    weights: Vec<T>,
}

impl<T: Real> GaussRule<T> {
    pub fn new(points: usize) -> Self {
        let (x, w) = gauss_legendre(points);
        Self {
            nodes: x.into_iter().map(T::c).collect(),
            weights: w.into_iter().map(T::c).collect(),
        }
    }

    pub fn integrate(&self, f: impl Fn(T) -> T, a: T, b: T) -> T {
        let half = T::c(0.5);
        let c = half * (a + b);
        let r = half * (b - a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(c + r * x))
            .sum::<T>()
            * r
    }
}

/// Periodic trapezoidal rule over [0, 1) with `n` points; spectrally accurate
/// for smooth periodic integrands.
pub fn periodic_trapezoid<T: Real>(f: impl Fn(T) -> T, n: usize) -> T {
    let h = T::one() / T::from_usize_lossy(n);
    (0..n).map(|j| f(T::from_usize_lossy(j) * h)).sum::<T>() * h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_exact_for_polynomials() {
        let rule = GaussRule::<f64>::new(8);
        let v = rule.integrate(|x| x.powi(15) + 3.0 * x * x, 0.0, 2.0);
        assert!((v - (2f64.powi(16) / 16.0 + 8.0)).abs() < 1e-9);
        let (_, w) = gauss_legendre(5);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn adaptive_handles_endpoint_singularity() {
        let q = integrate(|x: f64| x.powf(-0.5), 0.0, 1.0, 1e-10, 1e-12);
        assert!(q.converged);
        assert!((q.value - 2.0).abs() < 1e-8);
    }

    #[test]
    fn trapezoid_is_spectral_for_trig() {
        let v = periodic_trapezoid(|y: f64| 1.0 / (2.0 + (std::f64::consts::TAU * y).cos()), 64);
        assert!((v - 1.0 / 3f64.sqrt()).abs() < 1e-14);
    }
}
