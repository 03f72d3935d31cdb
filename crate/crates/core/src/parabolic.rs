//! Monotone explicit time stepping for the oscillating problem
//! `u_t − a(x, x/ε) I(u) + H(x, x/ε, Du) = 0` and the effective problem
//! `u_t + H̄(x, Du, I u) = 0`; barriers, time sup-convolution, and the Hölder
//! exponent `α₀`.

use std::fmt;
use std::sync::Arc;

use crate::coefficients::Coefficient;
use crate::effective::{EffectiveSource, PreparedEffective};
use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::hamiltonians::{Flux, FluxValue, HamiltonianSpec};
use crate::kernels::{periodized_weights, KernelSpec, QuadratureTable};
use crate::scalar::{sup_abs, Real};

/// Initial data `u0` on the torus.
#[derive(Clone)]
pub enum InitialData<T> {
    /// `sin(2πx)`
    Sine,
    /// `cos(2πx)`
    Cosine,
    Constant(T),
    Custom {
        name: String,
        f: Arc<dyn Fn(T) -> T + Send + Sync>,
    },
}

impl<T: Real> InitialData<T> {
    pub fn custom(name: &str, f: impl Fn(T) -> T + Send + Sync + 'static) -> Self {
        Self::Custom {
            name: name.to_string(),
            f: Arc::new(f),
        }
    }

    pub fn eval(&self, x: T) -> T {
        match self {
            Self::Sine => (T::two_pi() * x).sin(),
            Self::Cosine => (T::two_pi() * x).cos(),
            Self::Constant(c) => *c,
            Self::Custom { f, .. } => f(x),
        }
    }

    pub fn sample(&self, n: usize) -> Result<GridFunction<T>> {
        GridFunction::from_fn(n, |x| self.eval(x))
    }
}

impl<T: fmt::Debug> fmt::Debug for InitialData<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Sine => write!(f, "sin"),
            Self::Cosine => write!(f, "cos"),
            Self::Constant(c) => write!(f, "constant({c:?})"),
            Self::Custom { name, .. } => write!(f, "{name}"),
        }
    }
}

/// Which equation is marched.
#[derive(Clone, Debug)]
pub enum ProblemKind<T> {
    /// `ε = 1/k`.
    Oscillating { k: usize },
    Effective(EffectiveSource<T>),
}

#[derive(Clone, Debug)]
pub struct ParabolicProblem<T> {
    pub kind: ProblemKind<T>,
    pub a: Coefficient<T>,
    pub hamiltonian: HamiltonianSpec<T>,
    pub kernel: KernelSpec<T>,
    pub u0: GridFunction<T>,
    pub horizon: T,
}

impl<T: Real> ParabolicProblem<T> {
    pub fn eps(&self) -> Option<T> {
        match self.kind {
            ProblemKind::Oscillating { k } => Some(T::one() / T::from_usize_lossy(k)),
            ProblemKind::Effective(_) => None,
        }
    }
}

/// How the numerical Hamiltonian is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FluxChoice<T> {
    /// Godunov when `H` is a power law with `b ≥ 0`, Lax–Friedrichs otherwise.
    Auto,
    Godunov,
    LaxFriedrichs(T),
}

#[derive(Debug, Clone)]
pub struct SolverConfig<T> {
    pub n: usize,
    pub cfl_safety: T,
    pub flux: FluxChoice<T>,
    /// Number of equally spaced output times after `t = 0`.
    pub snapshots: usize,
    /// Forces this step size; a step violating the CFL bound is an error.
    pub fixed_dt: Option<T>,
    pub image_budget: usize,
    pub max_steps: usize,
}

impl<T: Real> Default for SolverConfig<T> {
    fn default() -> Self {
        Self {
            n: 256,
            cfl_safety: T::c(0.9),
            flux: FluxChoice::Auto,
            snapshots: 10,
            fixed_dt: None,
            image_budget: 4,
            max_steps: 5_000_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory<T> {
    pub times: Vec<T>,
    pub snapshots: Vec<GridFunction<T>>,
    pub sup_norm_track: Vec<T>,
    /// `sup |u_t|` at the step that reached each snapshot.
    pub residual_track: Vec<T>,
    pub steps: usize,
    pub dt_min: T,
    pub dt_max: T,
}

impl<T: Real> Trajectory<T> {
    pub fn last(&self) -> &GridFunction<T> {
        self.snapshots.last().expect("trajectory has the initial snapshot")
    }
}

enum Dynamics<T> {
    Oscillating {
        a: Vec<T>,
        x: Vec<T>,
        y: Vec<T>,
        hamiltonian: HamiltonianSpec<T>,
        flux: Flux<T>,
    },
    Effective(PreparedEffective<T>),
}

/// Spatial operator `F(u)` with `u_t + F(u) = 0`, shared by the solver and the
/// barrier construction.
pub(crate) struct Stepper<T> {
    n: usize,
    h: T,
    table: QuadratureTable<T>,
    dynamics: Dynamics<T>,
    coefficient_a: Coefficient<T>,
}

impl<T: Real> Stepper<T> {
    pub(crate) fn new(problem: &ParabolicProblem<T>, cfg: &SolverConfig<T>) -> Result<Self> {
        let n = cfg.n;
        if problem.u0.n() != n {
            return Err(Error::SizeMismatch { expected: n, got: problem.u0.n() });
        }
        let h = T::one() / T::from_usize_lossy(n);
        let x: Vec<T> = (0..n).map(|i| T::from_usize_lossy(i) * h).collect();
        let table = periodized_weights(&problem.kernel, n, cfg.image_budget)?;
        let dynamics = match &problem.kind {
            ProblemKind::Oscillating { k } => {
                if *k == 0 {
                    return Err(Error::Domain("eps = 1/k needs k >= 1".into()));
                }
                if n < 16 * k {
                    return Err(Error::Domain(format!(
                        "grid of {n} nodes does not resolve eps = 1/{k}; need n >= {}",
                        16 * k
                    )));
                }
                let kf = T::from_usize_lossy(*k);
                let y: Vec<T> = x.iter().map(|&xi| (kf * xi).fract()).collect();
                let a: Vec<T> = x.iter().zip(&y).map(|(&xi, &yi)| problem.a.eval(xi, yi)).collect();
                let flux = resolve_flux(&problem.hamiltonian, cfg.flux, &problem.u0)?;
                Dynamics::Oscillating {
                    a,
                    x,
                    y,
                    hamiltonian: problem.hamiltonian.clone(),
                    flux,
                }
            }
            ProblemKind::Effective(source) => Dynamics::Effective(source.prepare(&x)?),
        };
        Ok(Self {
            n,
            h,
            table,
            dynamics,
            coefficient_a: problem.a.clone(),
        })
    }

    /// Writes `F(u)` into `out` and returns the largest monotonicity rate
    /// `|∂F_i/∂u_i|`, the quantity the CFL bound controls.
    pub(crate) fn operator(&mut self, u: &[T], nonlocal: &mut [T], out: &mut [T]) -> Result<T> {
        self.table.apply_into(u, nonlocal);
        let n = self.n;
        let h = self.h;
        let tail = self.table.tail_mass();
        let mut rate = T::zero();
        match &mut self.dynamics {
            Dynamics::Oscillating {
                a,
                x,
                y,
                hamiltonian,
                flux,
            } => {
                if let Flux::LaxFriedrichs(theta) = flux {
                    let needed = (0..n)
                        .map(|i| {
                            let qbar = (u[(i + 1) % n] - u[(i + n - 1) % n]) / (h + h);
                            hamiltonian.dp(x[i], y[i], qbar).abs()
                        })
                        .fold(T::zero(), T::max);
                    if needed > *theta {
                        *theta = needed * T::c(1.25);
                    }
                }
                for i in 0..n {
                    let (qm, qp) = slopes(u, i, h);
                    let f = hamiltonian.flux(*flux, x[i], y[i], qm, qp);
                    out[i] = -a[i] * nonlocal[i] + f.value;
                    rate = rate.max(a[i] * tail + (f.d_minus - f.d_plus) / h);
                }
            }
            Dynamics::Effective(prep) => {
                for i in 0..n {
                    let (qm, qp) = slopes(u, i, h);
                    let (f, dl) = prep.flux(i, qm, qp, nonlocal[i])?;
                    out[i] = f.value;
                    rate = rate.max(dl.abs() * tail + (f.d_minus - f.d_plus) / h);
                }
            }
        }
        Ok(rate)
    }

    /// `sup |F(u)|` with the fast variable ranging over the whole `n`-grid
    /// instead of `x/ε`; independent of ε.
    pub(crate) fn residual_all_y(&mut self, u: &[T]) -> Result<T> {
        let n = self.n;
        let mut nonlocal = vec![T::zero(); n];
        let mut out = vec![T::zero(); n];
        if let Dynamics::Oscillating {
            x,
            hamiltonian,
            flux,
            ..
        } = &self.dynamics
        {
            self.table.apply_into(u, &mut nonlocal);
            let h = self.h;
            let mut sup = T::zero();
            for j in 0..n {
                let yj = T::from_usize_lossy(j) * h;
                for i in 0..n {
                    let (qm, qp) = slopes(u, i, h);
                    let aij = self.coefficient_a.eval(x[i], yj);
                    let f: FluxValue<T> = hamiltonian.flux(*flux, x[i], yj, qm, qp);
                    sup = sup.max((-aij * nonlocal[i] + f.value).abs());
                }
            }
            return Ok(sup);
        }
        self.operator(u, &mut nonlocal, &mut out)?;
        Ok(sup_abs(&out))
    }
}

#[inline]
fn slopes<T: Real>(u: &[T], i: usize, h: T) -> (T, T) {
    let n = u.len();
    let ui = u[i];
    ((ui - u[(i + n - 1) % n]) / h, (u[(i + 1) % n] - ui) / h)
}

fn resolve_flux<T: Real>(h: &HamiltonianSpec<T>, choice: FluxChoice<T>, u0: &GridFunction<T>) -> Result<Flux<T>> {
    match choice {
        FluxChoice::Godunov => {
            if h.godunov_coefficient().is_none() {
                return Err(Error::Domain(
                    "Godunov flux needs a power-law Hamiltonian with nonnegative coefficient".into(),
                ));
            }
            Ok(Flux::Godunov)
        }
        FluxChoice::LaxFriedrichs(theta) => Ok(Flux::LaxFriedrichs(theta)),
        FluxChoice::Auto => {
            if h.godunov_coefficient().is_some() {
                Ok(Flux::Godunov)
            } else {
                let r = T::c(2.0) * (u0.lipschitz() + T::one());
                Ok(Flux::LaxFriedrichs(h.dp_sup(r, 32)))
            }
        }
    }
}

/// Explicit Euler `u^{k+1} = u^k − dt F(u^k)` with
/// `dt · sup_i |∂F_i/∂u_i| ≤ cfl_safety`, landing exactly on the snapshot times.
pub fn solve<T: Real>(problem: &ParabolicProblem<T>, cfg: &SolverConfig<T>) -> Result<Trajectory<T>> {
    if !(problem.horizon > T::zero()) {
        return Err(Error::Domain(format!("horizon must be positive, got {}", problem.horizon)));
    }
    if !(cfg.cfl_safety > T::zero() && cfg.cfl_safety <= T::one()) {
        return Err(Error::Domain(format!("cfl_safety must lie in (0,1], got {}", cfg.cfl_safety)));
    }
    let snapshots = cfg.snapshots.max(1);
    let mut stepper = Stepper::new(problem, cfg)?;
    let n = cfg.n;
    let big_t = problem.horizon;
    let mut u = problem.u0.values().to_vec();
    let mut nonlocal = vec![T::zero(); n];
    let mut f = vec![T::zero(); n];
    let mut traj = Trajectory {
        times: vec![T::zero()],
        snapshots: vec![problem.u0.clone()],
        sup_norm_track: vec![problem.u0.sup_norm()],
        residual_track: vec![T::zero()],
        steps: 0,
        dt_min: T::infinity(),
        dt_max: T::zero(),
    };
    let mut t = T::zero();
    let mut next = 1usize;
    let target = |k: usize| big_t * T::from_usize_lossy(k) / T::from_usize_lossy(snapshots);
    while next <= snapshots {
        if traj.steps >= cfg.max_steps {
            return Err(Error::NotConverged {
                what: "time stepping exceeded the step budget".into(),
                residual: (big_t - t).to_f64_lossy(),
                iterations: traj.steps,
            });
        }
        let rate = stepper.operator(&u, &mut nonlocal, &mut f)?;
        let remaining = target(next) - t;
        let mut dt = match cfg.fixed_dt {
            Some(dt) => {
                let value = dt * rate;
                if value > cfg.cfl_safety {
                    return Err(Error::Cfl {
                        step: traj.steps,
                        value: value.to_f64_lossy(),
                        limit: cfg.cfl_safety.to_f64_lossy(),
                    });
                }
                dt
            }
            None => {
                if rate > T::zero() {
                    cfg.cfl_safety / rate
                } else {
                    remaining
                }
            }
        };
        let landing = dt >= remaining * (T::one() - T::c(1e-12));
        if landing {
            dt = remaining;
        }
        for (ui, fi) in u.iter_mut().zip(&f) {
            *ui = *ui - dt * *fi;
        }
        traj.steps += 1;
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: traj.steps });
        }
        traj.dt_min = traj.dt_min.min(dt);
        traj.dt_max = traj.dt_max.max(dt);
        if landing {
            t = target(next);
            let snap = GridFunction::new(u.clone())?;
            traj.times.push(t);
            traj.sup_norm_track.push(snap.sup_norm());
            traj.residual_track.push(sup_abs(&f));
            traj.snapshots.push(snap);
            next += 1;
        } else {
            t = t + dt;
        }
    }
    Ok(traj)
}

/// Discrete mollification of `u` with the bump `exp(−1/(1−r²))` of radius `h`.
pub fn mollify<T: Real>(u: &GridFunction<T>, h: T) -> Result<GridFunction<T>> {
    let dx = u.spacing();
    let reach = (h / dx).floor().to_isize().unwrap_or(0);
    let mut w = Vec::new();
    for j in -reach..=reach {
        let r = T::from_isize(j).unwrap() * dx / h;
        let v = if r.abs() < T::one() { (-T::one() / (T::one() - r * r)).exp() } else { T::zero() };
        w.push((j, v));
    }
    let total: T = w.iter().map(|&(_, v)| v).sum();
    let n = u.n() as isize;
    GridFunction::new(
        (0..n)
            .map(|i| w.iter().map(|&(j, v)| v * u.at(i + j)).sum::<T>() / total)
            .collect(),
    )
}

/// `sup_{|j h| ≤ r} sup_i |u(i + j) − u(i)|`.
pub fn sampled_modulus<T: Real>(u: &GridFunction<T>, r: T) -> T {
    let reach = (r / u.spacing() + T::c(1e-9)).floor().to_isize().unwrap_or(0);
    let n = u.n() as isize;
    let mut best = T::zero();
    for j in 1..=reach.min(n / 2) {
        for i in 0..n {
            best = best.max((u.at(i + j) - u.at(i)).abs());
        }
    }
    best
}

/// Time-affine envelopes `u0^h ± (ω0(h) + C(h) t)` enclosing the discrete solution.
#[derive(Debug, Clone)]
pub struct Barrier<T> {
    pub radius: T,
    pub mollified: GridFunction<T>,
    pub omega0: T,
    /// `sup |F(u0^h)|` over the slow and the whole fast grid.
    pub c_h: T,
}

impl<T: Real> Barrier<T> {
    pub fn upper(&self, t: T) -> GridFunction<T> {
        let s = self.omega0 + self.c_h * t;
        self.mollified.map(|v| v + s).expect("finite envelope")
    }

    pub fn lower(&self, t: T) -> GridFunction<T> {
        let s = self.omega0 + self.c_h * t;
        self.mollified.map(|v| v - s).expect("finite envelope")
    }
}

pub fn barrier_bounds<T: Real>(problem: &ParabolicProblem<T>, cfg: &SolverConfig<T>, h: T) -> Result<Barrier<T>> {
    if !(h > T::zero() && h <= T::one()) {
        return Err(Error::Domain(format!("mollification radius must lie in (0,1], got {h}")));
    }
    let mollified = mollify(&problem.u0, h)?;
    let omega0 = sampled_modulus(&problem.u0, h);
    let mut stepper = Stepper::new(problem, cfg)?;
    let c_h = stepper.residual_all_y(mollified.values())?;
    Ok(Barrier {
        radius: h,
        mollified,
        omega0,
        c_h,
    })
}

/// `t ↦ inf_h {2ω0(h) + C(h) t}` over a family of mollification radii.
#[derive(Debug, Clone)]
pub struct BarrierModulus<T> {
    pub terms: Vec<(T, T, T)>,
}

impl<T: Real> BarrierModulus<T> {
    pub fn build(problem: &ParabolicProblem<T>, cfg: &SolverConfig<T>, radii: &[T]) -> Result<Self> {
        let mut stepper = Stepper::new(problem, cfg)?;
        let mut terms = Vec::with_capacity(radii.len());
        for &h in radii {
            let m = mollify(&problem.u0, h)?;
            let c_h = stepper.residual_all_y(m.values())?;
            terms.push((h, sampled_modulus(&problem.u0, h), c_h));
        }
        Ok(Self { terms })
    }

    pub fn eval(&self, t: T) -> T {
        self.terms
            .iter()
            .map(|&(_, w, c)| T::c(2.0) * w + c * t)
            .fold(T::infinity(), T::min)
    }
}

/// `t ↦ sup_x |u(x,t) − u0(x)|` on the recorded times.
pub fn initial_layer_modulus<T: Real>(traj: &Trajectory<T>, u0: &GridFunction<T>) -> Result<Vec<(T, T)>> {
    traj.times
        .iter()
        .zip(&traj.snapshots)
        .map(|(&t, s)| {
            let d = s.zip_map(u0, |a, b| a - b)?;
            Ok((t, d.sup_norm()))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SupConvolution<T> {
    /// `values[j][i]` at time index `j`, node `i`.
    pub values: Vec<Vec<T>>,
    /// Per-node Lipschitz constant in time of the regularized values.
    pub lipschitz: Vec<T>,
    /// `4|u|_∞/√γ`
    pub bound: T,
    /// `2√(osc/γ)` plus the grid term `max Δt/γ`.
    pub sharp_bound: T,
}

/// `ū(x,t) = max_s {u(x,s) − (s−t)²/γ}` over the recorded times. Only `s` with
/// `(s−t)² ≤ γ·osc_x u` can win, which bounds the search window.
pub fn sup_convolution_time<T: Real>(times: &[T], rows: &[GridFunction<T>], gamma: T) -> Result<SupConvolution<T>> {
    if !(gamma > T::zero()) {
        return Err(Error::Domain(format!("gamma must be positive, got {gamma}")));
    }
    if times.len() != rows.len() || rows.is_empty() {
        return Err(Error::SizeMismatch { expected: times.len(), got: rows.len() });
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("times must increase strictly".into()));
    }
    let n = rows[0].n();
    if let Some(r) = rows.iter().find(|r| r.n() != n) {
        return Err(Error::SizeMismatch { expected: n, got: r.n() });
    }
    let nt = times.len();
    let mut values = vec![vec![T::zero(); n]; nt];
    let mut lipschitz = vec![T::zero(); n];
    let mut sup = T::zero();
    let mut max_osc = T::zero();
    for i in 0..n {
        let col: Vec<T> = rows.iter().map(|r| r.values()[i]).collect();
        let hi = col.iter().copied().fold(T::neg_infinity(), T::max);
        let lo = col.iter().copied().fold(T::infinity(), T::min);
        let osc = hi - lo;
        sup = sup.max(hi.abs()).max(lo.abs());
        max_osc = max_osc.max(osc);
        let window = (gamma * osc).sqrt() * (T::one() + T::c(1e-12)) + T::c(1e-12);
        let mut start = 0usize;
        for (j, &t) in times.iter().enumerate() {
            while times[start] < t - window {
                start += 1;
            }
            let mut best = T::neg_infinity();
            let mut s = start;
            while s < nt && times[s] <= t + window {
                let d = times[s] - t;
                best = best.max(col[s] - d * d / gamma);
                s += 1;
            }
            values[j][i] = best;
        }
        for j in 1..nt {
            let slope = (values[j][i] - values[j - 1][i]).abs() / (times[j] - times[j - 1]);
            lipschitz[i] = lipschitz[i].max(slope);
        }
    }
    let max_dt = times.windows(2).map(|w| w[1] - w[0]).fold(T::zero(), T::max);
    Ok(SupConvolution {
        values,
        lipschitz,
        bound: T::c(4.0) * sup / gamma.sqrt(),
        sharp_bound: T::c(2.0) * (max_osc / gamma).sqrt() + max_dt / gamma,
    })
}

/// Hölder exponent `α₀(n, σ, m)` for `0 < σ ≤ 1`.
pub fn holder_exponent_alpha0<T: Real>(n: T, sigma: T, m: T) -> Result<T> {
    let one = T::one();
    let two = T::c(2.0);
    if !(n > T::zero()) {
        return Err(Error::Domain(format!("structure exponent n must be positive, got {n}")));
    }
    if !(m > one) {
        return Err(Error::Domain(format!("exponent m must exceed 1, got {m}")));
    }
    if !(sigma > T::zero() && sigma <= one) {
        return Err(Error::Domain(format!("order sigma must lie in (0,1], got {sigma}")));
    }
    let base = one - one / (n * m);
    let alt = if sigma == one {
        T::c(1.5) - T::c(0.5) * (one + two / n).sqrt()
    } else {
        let kappa = T::c(4.0) * sigma / (one - sigma);
        (two + sigma - ((two - sigma).powi(2) + T::c(8.0) / (n * (two + kappa))).sqrt()) / two
    };
    Ok(base.max(alt))
}
