//! Evaluation of the nonlocal operator `I(u, x)`, its localized pieces, and the
//! expansion remainder `J`.

use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::kernels::{
    antisymmetric_moment, antisymmetric_moment_origin, hat_weights, inner_second_moment, KernelSpec, QuadratureTable,
};
use crate::quad::integrate;
use crate::scalar::Real;
use crate::spectral::TrigSeries;

pub use crate::spectral::spectral_flap;

fn check_table<T: Real>(n: usize, k: &KernelSpec<T>, table: &QuadratureTable<T>) -> Result<()> {
    if table.n() != n {
        return Err(Error::SizeMismatch { expected: table.n(), got: n });
    }
    if table.sigma() != k.sigma() {
        return Err(Error::Domain(format!(
            "table built for sigma = {}, kernel has sigma = {}",
            table.sigma(),
            k.sigma()
        )));
    }
    Ok(())
}

/// `x ↦ I(u, x)` at every node.
pub fn eval_operator<T: Real>(u: &GridFunction<T>, k: &KernelSpec<T>, table: &QuadratureTable<T>) -> Result<GridFunction<T>> {
    check_table(u.n(), k, table)?;
    table.apply(u)
}

/// Quadratic model `φ(x + z) = φ(x) + p z + q z²/2` of a test function at `x`.
#[derive(Debug, Clone, Copy)]
pub struct LocalModel<T> {
    pub gradient: T,
    pub hessian: T,
}

#[derive(Debug, Clone, Copy)]
pub struct LocalizedSplit<T> {
    pub delta: T,
    /// `I[B_δ](φ, x)`
    pub inner: T,
    /// `I[B_δ^c](u, p, x)`
    pub outer: T,
    pub gradient_used: T,
}

/// Splits `I` at node `node` into the part on `B_δ`, computed from the local
/// model `phi`, and the part on its complement, computed from the grid values of
/// `u` with compensator `p·z` on `B \ B_δ` when σ ≥ 1.
pub fn eval_localized<T: Real>(
    u: &GridFunction<T>,
    phi: LocalModel<T>,
    p: T,
    node: usize,
    delta: T,
    k: &KernelSpec<T>,
    table: &QuadratureTable<T>,
) -> Result<LocalizedSplit<T>> {
    check_table(u.n(), k, table)?;
    let n = u.n();
    let h = u.spacing();
    if node >= n {
        return Err(Error::Domain(format!("node {node} outside grid of {n} nodes")));
    }
    if !(delta >= h) {
        return Err(Error::Domain(format!("delta = {delta} is below one grid cell h = {h}")));
    }
    if !(delta < T::c(0.5)) {
        return Err(Error::Domain(format!("delta = {delta} must be below 1/2")));
    }
    let half = T::c(0.5);
    let mut inner = half * phi.hessian * inner_second_moment(k, delta);
    if !k.compensated() {
        inner = inner + phi.gradient * antisymmetric_moment_origin(k, delta);
    }

    let reach = T::from_usize_lossy(table.image_budget());
    let (pos, neg) = hat_weights(k, h, delta, reach);
    let i = node as isize;
    let ui = u.values()[node];
    let mut outer = T::zero();
    for (j, (&wp, &wn)) in pos.iter().zip(&neg).enumerate().skip(1) {
        let j = j as isize;
        outer = outer + wp * (u.at(i + j) - ui) + wn * (u.at(i - j) - ui);
    }
    let share = QuadratureTable::tail_share(k, n, table.image_budget());
    for r in 1..n as isize {
        outer = outer + share * (u.at(i + r) - ui);
    }
    if k.compensated() {
        outer = outer - p * antisymmetric_moment(k, delta, T::one());
    }
    Ok(LocalizedSplit {
        delta,
        inner,
        outer,
        gradient_used: p,
    })
}

/// Value of the remainder `J` with its quadrature diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct Remainder<T> {
    pub value: T,
    pub error: T,
    pub converged: bool,
}

/// `J(ψ_ε, x) = ∫ δ_{1/ε}(ψ, x/ε, ξ)(k̄(εξ) − k̄(0))|ξ|^{-1-σ} dξ`, where
/// `δ_e(ψ, y, ξ) = ψ(y+ξ) − ψ(y) − 1_{|ξ|<e}ψ'(y)ξ` (indicator only for σ ≥ 1).
///
/// `ψ` is evaluated through its band-limited interpolant. The integral is
/// taken with adaptive Gauss–Kronrod on `(0, 1]` and on unit panels up to `2/ε`;
/// the rest is bounded by `4|ψ|_∞ sup|k̄| (2/ε)^{-σ}/σ` and reported in `error`.
pub fn corrector_remainder_j<T: Real>(psi: &GridFunction<T>, k: &KernelSpec<T>, eps: T, x: T) -> Result<Remainder<T>> {
    if !(eps > T::zero() && eps <= T::one()) {
        return Err(Error::Domain(format!("scale eps must lie in (0,1], got {eps}")));
    }
    let profile = TrigSeries::from_grid(psi)?;
    let y = x / eps;
    let (py, dpy) = (profile.value(y), profile.derivative(y));
    let sigma = k.sigma();
    let k0 = k.kbar(T::zero());
    let cut = T::one() / eps;
    let comp = k.compensated();
    let delta_e = |xi: T| {
        let mut d = profile.value(y + xi) - py;
        if comp && xi.abs() < cut {
            d = d - dpy * xi;
        }
        d
    };
    let integrand = |xi: T| {
        if xi <= T::zero() {
            return T::zero();
        }
        let w = xi.powf(-(T::one() + sigma));
        (delta_e(xi) * (k.kbar(eps * xi) - k0) + delta_e(-xi) * (k.kbar(-eps * xi) - k0)) * w
    };
    let abs_tol = T::c(1e-10);
    let first = integrate(integrand, T::zero(), T::one(), abs_tol, T::c(1e-10));
    let mut value = first.value;
    let mut error = first.error;
    let mut converged = first.converged;
    let panels = (T::c(2.0) * cut).ceil().to_usize().unwrap_or(1).max(1);
    let panel_tol = abs_tol / T::from_usize_lossy(panels);
    for j in 1..panels {
        let a = T::from_usize_lossy(j);
        let q = integrate(integrand, a, a + T::one(), panel_tol, T::c(1e-10));
        value = value + q.value;
        error = error + q.error;
        converged &= q.converged;
    }
    let outer = T::from_usize_lossy(panels);
    let psi_sup = psi.sup_norm();
    let ksup = (1..=64)
        .map(|j| T::from_usize_lossy(j) / T::c(8.0))
        .map(|z| k.kbar(z).abs().max(k.kbar(-z).abs()))
        .fold(k0.abs(), T::max);
    error = error + T::c(4.0) * psi_sup * ksup * outer.powf(-sigma) / sigma;
    Ok(Remainder { value, error, converged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::periodized_weights;
    use std::f64::consts::{PI, TAU};

    #[test]
    fn constants_map_to_zero() {
        let k = KernelSpec::constant(1.0f64).unwrap();
        let t = periodized_weights(&k, 32, 4).unwrap();
        let u = GridFunction::constant(32, 5.0).unwrap();
        assert!(eval_operator(&u, &k, &t).unwrap().values().iter().all(|&v| v == 0.0));
        assert!(eval_operator(&GridFunction::constant(16, 1.0).unwrap(), &k, &t).is_err());
    }

    #[test]
    fn inner_of_quadratic_model() {
        let k = KernelSpec::constant(1.0f64).unwrap();
        let t = periodized_weights(&k, 64, 4).unwrap();
        let u = GridFunction::zeros(64).unwrap();
        let model = LocalModel { gradient: 0.0, hessian: 1.0 };
        let s = eval_localized(&u, model, 0.0, 0, 0.125, &k, &t).unwrap();
        assert!((s.inner - 0.125 / PI).abs() < 1e-13);
        assert!(eval_localized(&u, model, 0.0, 0, 0.001, &k, &t).is_err());
    }

    #[test]
    fn symmetric_outer_ignores_gradient() {
        let k = KernelSpec::constant(1.5f64).unwrap();
        let t = periodized_weights(&k, 64, 4).unwrap();
        let u = GridFunction::from_fn(64, |y: f64| (TAU * y).sin()).unwrap();
        let m = LocalModel { gradient: TAU, hessian: 0.0 };
        let a = eval_localized(&u, m, 0.0, 3, 0.1, &k, &t).unwrap();
        let b = eval_localized(&u, m, 10.0, 3, 0.1, &k, &t).unwrap();
        assert_eq!(a.outer, b.outer);
    }

    #[test]
    fn split_is_additive_for_smooth_data() {
        for &sigma in &[0.5f64, 1.0, 1.5] {
            let k = KernelSpec::tilt(sigma, 0.5).unwrap();
            let n = 1024;
            let t = periodized_weights(&k, n, 4).unwrap();
            let u = GridFunction::from_fn(n, |y: f64| (TAU * y).cos()).unwrap();
            let full = eval_operator(&u, &k, &t).unwrap();
            let node = 100;
            let y = u.node(node);
            let model = LocalModel { gradient: -TAU * (TAU * y).sin(), hessian: -TAU * TAU * (TAU * y).cos() };
            let s = eval_localized(&u, model, model.gradient, node, 0.05, &k, &t).unwrap();
            let gap = (s.inner + s.outer - full.values()[node]).abs();
            assert!(gap < 0.05 * TAU.powf(sigma), "sigma {sigma}: gap {gap}");
        }
    }

    #[test]
    fn remainder_vanishes_for_constant_density() {
        let k = KernelSpec::constant(1.0f64).unwrap();
        let psi = GridFunction::from_fn(16, |y: f64| (TAU * y).sin()).unwrap();
        let r = corrector_remainder_j(&psi, &k, 0.1, 0.0).unwrap();
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn remainder_tends_to_minus_drift_times_gradient() {
        let k = KernelSpec::tilt(1.0f64, 0.5).unwrap();
        let psi = GridFunction::from_fn(16, |y: f64| (TAU * y).sin()).unwrap();
        let r = corrector_remainder_j(&psi, &k, 1e-3, 0.0).unwrap();
        // b = 1/π and ψ'(0) = 2π
        assert!((r.value + 2.0).abs() < 5e-3, "{}", r.value);
    }
}
