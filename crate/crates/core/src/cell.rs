//! Cell problems in the fast variable with frozen `(x, p, l)`:
//!
//! * σ < 1: `−a l + H(x, y, p + ψ') = c`
//! * σ = 1: `−a l + a(−Δ)^{1/2}ψ + a b ψ' + H(x, y, p + ψ') = c`
//! * σ > 1: `−a l + a(−Δ)^{σ/2}ψ + H(x, y, p) = c`
//!
//! The ergodic constant `c = H̄(x, p, l)` is approximated by vanishing
//! discount (`δψ` added on the left) or by long-time averaging.

use rayon::prelude::*;

use crate::coefficients::Coefficient;
use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::hamiltonians::{Flux, HamiltonianSpec};
use crate::kernels::{drift_vector, periodized_weights, KernelSpec, QuadratureTable};
use crate::linalg::{CyclicTridiagonal, DenseMatrix};
use crate::scalar::{max_of, min_of, sup_abs, Real};
use crate::spectral::{spectral_flap, spectral_inverse_flap};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    BelowOne,
    EqualOne,
    AboveOne,
}

impl Regime {
    pub fn of<T: Real>(sigma: T) -> Self {
        if sigma < T::one() {
            Regime::BelowOne
        } else if sigma == T::one() {
            Regime::EqualOne
        } else {
            Regime::AboveOne
        }
    }
}

/// Frozen slow variables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellParams<T> {
    pub x: T,
    pub p: T,
    pub l: T,
}

/// Data shared by every cell problem of one model.
#[derive(Debug, Clone)]
pub struct CellModel<T> {
    pub sigma: T,
    /// Drift `b` entering the σ = 1 cell problem.
    pub drift: T,
    pub a: Coefficient<T>,
    pub hamiltonian: HamiltonianSpec<T>,
}

impl<T: Real> CellModel<T> {
    /// Reads σ and, when σ = 1, the drift from the kernel.
    pub fn new(a: Coefficient<T>, hamiltonian: HamiltonianSpec<T>, kernel: &KernelSpec<T>) -> Result<Self> {
        let drift = if kernel.sigma() == T::one() {
            drift_vector(kernel, T::c(1e-10))?.b
        } else {
            T::zero()
        };
        Ok(Self {
            sigma: kernel.sigma(),
            drift,
            a,
            hamiltonian,
        })
    }

    pub fn regime(&self) -> Regime {
        Regime::of(self.sigma)
    }
}

#[derive(Debug, Clone)]
pub struct CellConfig<T> {
    pub n: usize,
    /// Decreasing discount factors.
    pub deltas: Vec<T>,
    pub tol: T,
    pub max_newton: usize,
    pub image_budget: usize,
}

/// `0.1, 0.05, …` halving down to and including `1e-3`.
pub fn default_deltas<T: Real>() -> Vec<T> {
    let mut v = Vec::new();
    let mut d = 0.1f64;
    while d > 1e-3 {
        v.push(T::c(d));
        d *= 0.5;
    }
    v.push(T::c(1e-3));
    v
}

impl<T: Real> Default for CellConfig<T> {
    fn default() -> Self {
        Self {
            n: 256,
            deltas: default_deltas(),
            tol: T::c(1e-10),
            max_newton: 200,
            image_budget: 4,
        }
    }
}

/// One rung of the discount ladder.
#[derive(Debug, Clone)]
pub struct DiscountStep<T> {
    pub delta: T,
    /// `min_y −δψ^δ`
    pub lower: T,
    /// `max_y −δψ^δ`
    pub upper: T,
    pub newton_iterations: usize,
    pub residual: T,
}

#[derive(Debug, Clone)]
pub struct CellSolution<T> {
    pub params: CellParams<T>,
    /// Midpoint of `[min −δψ^δ, max −δψ^δ]` at the smallest δ.
    pub h_bar: T,
    /// Width of that interval.
    pub spread: T,
    pub history: Vec<DiscountStep<T>>,
    /// Corrector `ψ^δ − ψ^δ(0)` at the smallest δ.
    pub psi: GridFunction<T>,
    /// `δ sup|ψ^δ|` at the smallest δ.
    pub discounted_sup: T,
}

/// Discrete cell operator `G_δ(ψ)`.
struct CellOperator<T> {
    regime: Regime,
    n: usize,
    h: T,
    x: T,
    y: Vec<T>,
    a: Vec<T>,
    p: T,
    l: T,
    drift: T,
    table: Option<QuadratureTable<T>>,
    hamiltonian: HamiltonianSpec<T>,
    flux: Flux<T>,
}

impl<T: Real> CellOperator<T> {
    fn new(model: &CellModel<T>, params: CellParams<T>, n: usize, image_budget: usize) -> Result<Self> {
        let regime = model.regime();
        let h = T::one() / T::from_usize_lossy(n);
        let y: Vec<T> = (0..n).map(|i| T::from_usize_lossy(i) * h).collect();
        let a: Vec<T> = y.iter().map(|&yi| model.a.eval(params.x, yi)).collect();
        if let Some(i) = a.iter().position(|&v| !(v > T::zero())) {
            return Err(Error::Domain(format!("a({}, {}) = {} is not positive", params.x, y[i], a[i])));
        }
        let table = match regime {
            Regime::BelowOne => None,
            _ => Some(periodized_weights(&KernelSpec::constant(model.sigma)?, n, image_budget)?),
        };
        let flux = if model.hamiltonian.godunov_coefficient().is_some() {
            Flux::Godunov
        } else {
            Flux::LaxFriedrichs(model.hamiltonian.dp_sup(params.p.abs() + T::c(4.0), 32))
        };
        Ok(Self {
            regime,
            n,
            h,
            x: params.x,
            y,
            a,
            p: params.p,
            l: params.l,
            drift: model.drift,
            table,
            hamiltonian: model.hamiltonian.clone(),
            flux,
        })
    }

    fn ensure_theta(&mut self, psi: &[T]) {
        if let Flux::LaxFriedrichs(theta) = &mut self.flux {
            let n = self.n;
            let needed = (0..n)
                .map(|i| {
                    let q = self.p + (psi[(i + 1) % n] - psi[(i + n - 1) % n]) / (self.h + self.h);
                    self.hamiltonian.dp(self.x, self.y[i], q).abs()
                })
                .fold(T::zero(), T::max);
            if needed > *theta {
                *theta = needed * T::c(1.25);
            }
        }
    }

    /// `G_δ(ψ)` into `out`; returns the largest diagonal rate `∂G_i/∂ψ_i − δ`.
    fn residual(&self, psi: &[T], delta: T, out: &mut [T]) -> T {
        let n = self.n;
        let h = self.h;
        let mut nonlocal = vec![T::zero(); n];
        let mut tail = T::zero();
        if let Some(t) = &self.table {
            t.apply_into(psi, &mut nonlocal);
            tail = t.tail_mass();
        }
        let mut rate = T::zero();
        for i in 0..n {
            let back = (psi[i] - psi[(i + n - 1) % n]) / h;
            let fwd = (psi[(i + 1) % n] - psi[i]) / h;
            let ai = self.a[i];
            let mut g = delta * psi[i] - ai * self.l;
            let mut r = ai * tail;
            match self.regime {
                Regime::AboveOne => {
                    g = g - ai * nonlocal[i] + self.hamiltonian.eval(self.x, self.y[i], self.p);
                }
                Regime::EqualOne | Regime::BelowOne => {
                    if self.regime == Regime::EqualOne {
                        let b = self.drift;
                        let upwind = if b > T::zero() { back } else { fwd };
                        g = g - ai * nonlocal[i] + ai * b * upwind;
                        r = r + ai * b.abs() / h;
                    }
                    let f = self.hamiltonian.flux(self.flux, self.x, self.y[i], self.p + back, self.p + fwd);
                    g = g + f.value;
                    r = r + (f.d_minus - f.d_plus) / h;
                }
            }
            out[i] = g;
            rate = rate.max(r);
        }
        rate
    }

    fn flux_derivatives(&self, psi: &[T], i: usize) -> (T, T) {
        let n = self.n;
        let h = self.h;
        let back = (psi[i] - psi[(i + n - 1) % n]) / h;
        let fwd = (psi[(i + 1) % n] - psi[i]) / h;
        let f = self.hamiltonian.flux(self.flux, self.x, self.y[i], self.p + back, self.p + fwd);
        (f.d_minus, f.d_plus)
    }

    /// Newton direction `J⁻¹ G`.
    fn newton_direction(&self, psi: &[T], delta: T, g: &[T]) -> Result<Vec<T>> {
        let n = self.n;
        let h = self.h;
        match self.regime {
            Regime::BelowOne => {
                let mut m = CyclicTridiagonal::zeros(n);
                for i in 0..n {
                    let (dm, dp) = self.flux_derivatives(psi, i);
                    m.diag[i] = delta + (dm - dp) / h;
                    m.lower[i] = -dm / h;
                    m.upper[i] = dp / h;
                }
                m.solve(g)
            }
            Regime::EqualOne | Regime::AboveOne => {
                let table = self.table.as_ref().expect("nonlocal regimes carry a table");
                let w = table.weights();
                let tail = table.tail_mass();
                let mut m = DenseMatrix::zeros(n);
                for i in 0..n {
                    let ai = self.a[i];
                    m.add(i, i, delta + ai * tail);
                    for (r, &wr) in w.iter().enumerate().skip(1) {
                        m.add(i, (i + r) % n, -ai * wr);
                    }
                    if self.regime == Regime::EqualOne {
                        let b = self.drift;
                        if b > T::zero() {
                            m.add(i, i, ai * b / h);
                            m.add(i, (i + n - 1) % n, -ai * b / h);
                        } else if b < T::zero() {
                            m.add(i, i, -ai * b / h);
                            m.add(i, (i + 1) % n, ai * b / h);
                        }
                        let (dm, dp) = self.flux_derivatives(psi, i);
                        m.add(i, i, (dm - dp) / h);
                        m.add(i, (i + n - 1) % n, -dm / h);
                        m.add(i, (i + 1) % n, dp / h);
                    }
                }
                m.solve(g)
            }
        }
    }

    /// Damped Newton on `G_δ(ψ) = 0` from `psi`.
    fn newton(&mut self, psi: &mut Vec<T>, delta: T, tol: T, max_iter: usize) -> Result<(usize, T)> {
        let n = self.n;
        let mut g = vec![T::zero(); n];
        let mut trial_g = vec![T::zero(); n];
        self.ensure_theta(psi);
        let mut rate = self.residual(psi, delta, &mut g);
        let mut norm = sup_abs(&g);
        let scale = T::one() + self.l.abs() + self.hamiltonian.eval(self.x, T::zero(), self.p).abs();
        // Rounding in G is of order ε·(δ + rate)·|ψ|; asking for less cannot succeed.
        let target = |rate: T, psi: &[T]| tol * scale + T::c(64.0) * T::epsilon() * (delta + rate) * sup_abs(psi);
        for it in 0..max_iter {
            if norm <= target(rate, psi) {
                return Ok((it, norm));
            }
            let dir = self.newton_direction(psi, delta, &g)?;
            let mut step = T::one();
            let mut accepted = false;
            for _ in 0..40 {
                let trial: Vec<T> = psi.iter().zip(&dir).map(|(&v, &d)| v - step * d).collect();
                let trial_rate = self.residual(&trial, delta, &mut trial_g);
                let tn = sup_abs(&trial_g);
                if tn.is_finite() && tn < norm {
                    *psi = trial;
                    rate = trial_rate;
                    std::mem::swap(&mut g, &mut trial_g);
                    norm = tn;
                    accepted = true;
                    break;
                }
                step = step * T::c(0.5);
            }
            if !accepted {
                return Err(Error::NotConverged {
                    what: format!("cell Newton at delta = {delta}: line search stalled"),
                    residual: norm.to_f64_lossy(),
                    iterations: it,
                });
            }
            let before = self.flux;
            self.ensure_theta(psi);
            if self.flux != before {
                rate = self.residual(psi, delta, &mut g);
                norm = sup_abs(&g);
            }
        }
        if norm <= target(rate, psi) {
            Ok((max_iter, norm))
        } else {
            Err(Error::NotConverged {
                what: format!("cell Newton at delta = {delta}"),
                residual: norm.to_f64_lossy(),
                iterations: max_iter,
            })
        }
    }
}

/// Solves the discounted problems along `cfg.deltas` with warm starts and
/// reports `[min −δψ^δ, max −δψ^δ]` per δ.
pub fn vanishing_discount_sweep<T: Real>(
    model: &CellModel<T>,
    params: CellParams<T>,
    cfg: &CellConfig<T>,
) -> Result<CellSolution<T>> {
    if cfg.deltas.is_empty() {
        return Err(Error::Domain("discount ladder is empty".into()));
    }
    if cfg.deltas.iter().any(|&d| !(d > T::zero())) || cfg.deltas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Domain("discount factors must be positive and decreasing".into()));
    }
    let mut op = CellOperator::new(model, params, cfg.n, cfg.image_budget)?;
    let n = cfg.n;
    let mut g = vec![T::zero(); n];
    op.residual(&vec![T::zero(); n], T::zero(), &mut g);
    let mean0 = g.iter().copied().sum::<T>() / T::from_usize_lossy(n);
    let mut psi = vec![-mean0 / cfg.deltas[0]; n];
    let mut history = Vec::with_capacity(cfg.deltas.len());
    let mut prev_delta = cfg.deltas[0];
    for &delta in &cfg.deltas {
        let mean = psi.iter().copied().sum::<T>() / T::from_usize_lossy(n);
        let shift = mean * (prev_delta / delta - T::one());
        for v in psi.iter_mut() {
            *v = *v + shift;
        }
        let (iterations, residual) = op.newton(&mut psi, delta, cfg.tol, cfg.max_newton)?;
        let scaled: Vec<T> = psi.iter().map(|&v| -delta * v).collect();
        history.push(DiscountStep {
            delta,
            lower: min_of(&scaled),
            upper: max_of(&scaled),
            newton_iterations: iterations,
            residual,
        });
        prev_delta = delta;
    }
    let last = history.last().expect("nonempty ladder");
    let delta = last.delta;
    let psi0 = psi[0];
    Ok(CellSolution {
        params,
        h_bar: T::c(0.5) * (last.lower + last.upper),
        spread: last.upper - last.lower,
        discounted_sup: delta * sup_abs(&psi),
        psi: GridFunction::new(psi.iter().map(|&v| v - psi0).collect())?,
        history: history.clone(),
    })
}

/// Long-time estimate with its error bar.
#[derive(Debug, Clone, Copy)]
pub struct LongTimeEstimate<T> {
    /// Mean over `y` of `−v(y, T)/T`.
    pub h_bar: T,
    /// Change of the estimate between `T/10` and `T`.
    pub error: T,
    pub steps: usize,
}

/// Marches `v_t + G_0(v) = 0`, `v(0) = 0`, explicitly up to `t_max`.
pub fn long_time_average<T: Real>(
    model: &CellModel<T>,
    params: CellParams<T>,
    n: usize,
    t_max: T,
    image_budget: usize,
) -> Result<LongTimeEstimate<T>> {
    if !(t_max > T::zero()) {
        return Err(Error::Domain(format!("horizon must be positive, got {t_max}")));
    }
    let mut op = CellOperator::new(model, params, n, image_budget)?;
    let mut v = vec![T::zero(); n];
    let mut g = vec![T::zero(); n];
    let mut t = T::zero();
    let mut steps = 0usize;
    let checkpoint = t_max / T::c(10.0);
    let mut early = None;
    let nf = T::from_usize_lossy(n);
    let estimate = |v: &[T], t: T| -v.iter().copied().sum::<T>() / (nf * t);
    while t < t_max {
        op.ensure_theta(&v);
        let rate = op.residual(&v, T::zero(), &mut g);
        let target = if early.is_none() { checkpoint } else { t_max };
        let mut dt = if rate > T::zero() { T::c(0.9) / rate } else { target - t };
        let landing = dt >= target - t;
        if landing {
            dt = target - t;
        }
        for (vi, gi) in v.iter_mut().zip(&g) {
            *vi = *vi - dt * *gi;
        }
        steps += 1;
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { step: steps });
        }
        t = if landing { target } else { t + dt };
        if landing && early.is_none() {
            early = Some(estimate(&v, t));
        }
    }
    let h_bar = estimate(&v, t_max);
    Ok(LongTimeEstimate {
        h_bar,
        error: (h_bar - early.expect("checkpoint reached")).abs(),
        steps,
    })
}

/// Solves `(−Δ)^{σ/2}ψ = f` spectrally and normalizes `ψ(0) = 0`.
pub fn spectral_cell_above_one<T: Real>(f: &GridFunction<T>, sigma: T) -> Result<GridFunction<T>> {
    if !(sigma > T::one() && sigma < T::c(2.0)) {
        return Err(Error::Domain(format!("spectral cell solve needs 1 < sigma < 2, got {sigma}")));
    }
    let psi = spectral_inverse_flap(f, sigma)?;
    let p0 = psi.values()[0];
    psi.map(|v| v - p0)
}

/// Right-hand side `(H̄ + a l − H(x, y, p))/a` of the σ > 1 cell problem.
pub fn above_one_rhs<T: Real>(model: &CellModel<T>, params: CellParams<T>, h_bar: T, n: usize) -> Result<GridFunction<T>> {
    GridFunction::from_fn(n, |y| {
        let a = model.a.eval(params.x, y);
        (h_bar + a * params.l - model.hamiltonian.eval(params.x, y, params.p)) / a
    })
}

/// Regularity measures of one corrector, each normalized by the size of the data.
#[derive(Debug, Clone)]
pub struct RegularityMeasures<T> {
    pub params: CellParams<T>,
    /// `δ|ψ^δ|_∞ / (1 + |l| + |p|^m)`
    pub discounted: T,
    /// `osc ψ / (1 + |p| + |l|^{1/m})`
    pub oscillation: T,
    /// `Lip ψ / (1 + |l| + |p|^m)`
    pub lipschitz: T,
    /// `(γ, [ψ]_γ)` for γ in {1/4, 1/2, 3/4}.
    pub holder: Vec<(T, T)>,
    /// `sup|(−Δ)^{1/2}ψ| / (1 + |l| + |p|^m)^m`, σ = 1 only.
    pub half_laplacian: Option<T>,
}

#[derive(Debug, Clone)]
pub struct RegularityReport<T> {
    pub rows: Vec<RegularityMeasures<T>>,
    /// Messages for measures whose largest value exceeds twice the smallest one.
    pub growth_flags: Vec<String>,
}

/// Measures of a family of corrector solutions across `(p, l)`.
pub fn regularity_audit<T: Real>(model: &CellModel<T>, solutions: &[CellSolution<T>]) -> Result<RegularityReport<T>> {
    let m = model.hamiltonian.m;
    let mut rows = Vec::with_capacity(solutions.len());
    for s in solutions {
        let CellParams { p, l, .. } = s.params;
        let big = T::one() + l.abs() + p.abs().powf(m);
        let small = T::one() + p.abs() + l.abs().powf(T::one() / m);
        let half_laplacian = if model.regime() == Regime::EqualOne && s.psi.n().is_power_of_two() {
            Some(spectral_flap(&s.psi, T::one())?.sup_norm() / big.powf(m))
        } else {
            None
        };
        rows.push(RegularityMeasures {
            params: s.params,
            discounted: s.discounted_sup / big,
            oscillation: s.psi.osc() / small,
            lipschitz: s.psi.lipschitz() / big,
            holder: [0.25, 0.5, 0.75]
                .iter()
                .map(|&g| (T::c(g), s.psi.holder_quotient(T::c(g))))
                .collect(),
            half_laplacian,
        });
    }
    let mut growth_flags = Vec::new();
    let mut check = |name: &str, vals: Vec<T>| {
        let hi = max_of(&vals);
        let lo = min_of(&vals);
        if vals.len() > 1 && hi > T::c(2.0) * lo.max(T::c(1e-12)) && hi > T::c(1e-9) {
            growth_flags.push(format!("{name}: normalized measure ranges over [{lo:e}, {hi:e}]"));
        }
    };
    check("discounted", rows.iter().map(|r| r.discounted).collect());
    check("oscillation", rows.iter().map(|r| r.oscillation).collect());
    check("lipschitz", rows.iter().map(|r| r.lipschitz).collect());
    Ok(RegularityReport { rows, growth_flags })
}

/// Discount sweeps over many `(x, p, l)` in parallel, in input order.
pub fn sweep_many<T: Real>(
    model: &CellModel<T>,
    params: &[CellParams<T>],
    cfg: &CellConfig<T>,
) -> Vec<Result<CellSolution<T>>> {
    params
        .par_iter()
        .map(|&p| vanishing_discount_sweep(model, p, cfg))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eikonal() -> CellModel<f64> {
        let h = HamiltonianSpec::power_law(Coefficient::Constant(1.0), Coefficient::CosY, 2.0).unwrap();
        CellModel {
            sigma: 0.5,
            drift: 0.0,
            a: Coefficient::Constant(1.0),
            hamiltonian: h,
        }
    }

    #[test]
    fn ladder() {
        let d: Vec<f64> = default_deltas();
        assert_eq!(d[0], 0.1);
        assert_eq!(*d.last().unwrap(), 1e-3);
        assert!(d.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn eikonal_flat_part() {
        // |p|² − cos(2πy) has H̄ = 1 for |p| ≤ 2√2/π.
        let cfg = CellConfig { n: 128, ..Default::default() };
        let s = vanishing_discount_sweep(&eikonal(), CellParams { x: 0.0, p: 0.3, l: 0.0 }, &cfg).unwrap();
        assert!((s.h_bar - 1.0).abs() < 2e-2, "{}", s.h_bar);
        assert!(s.history.iter().all(|h| h.lower <= h.upper));
    }

    #[test]
    fn above_one_matches_weighted_average() {
        let h = HamiltonianSpec::power_law(Coefficient::Constant(1.0), Coefficient::CosY, 2.0).unwrap();
        let model = CellModel {
            sigma: 1.5,
            drift: 0.0,
            a: Coefficient::TwoPlusCosY,
            hamiltonian: h,
        };
        let cfg = CellConfig { n: 64, ..Default::default() };
        let s = vanishing_discount_sweep(&model, CellParams { x: 0.0, p: 1.0, l: 0.0 }, &cfg).unwrap();
        let exact = 3.0 - 3f64.sqrt();
        assert!((s.h_bar - exact).abs() < 1e-2);
        let last = s.history.last().unwrap();
        assert!(last.lower <= exact + 1e-9 && exact <= last.upper + 1e-9);
    }

    #[test]
    fn spectral_corrector_solves_equation() {
        let f = GridFunction::from_fn(64, |y: f64| (std::f64::consts::TAU * y).cos()).unwrap();
        let psi = spectral_cell_above_one(&f, 1.5).unwrap();
        assert_eq!(psi.values()[0], 0.0);
        let back = spectral_flap(&psi, 1.5).unwrap();
        let gap = back.zip_map(&f, |a, b| a - b).unwrap().sup_norm();
        assert!(gap < 1e-12);
    }
}
