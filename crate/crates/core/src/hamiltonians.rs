//! Hamiltonians `H(x, y, p)`, monotone numerical fluxes, sampled structural
//! audits and the coercivity certificate.

use std::fmt;
use std::sync::Arc;

use num_rational::Ratio;
use rayon::prelude::*;

use crate::coefficients::Coefficient;
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone)]
pub enum HamiltonianKind<T> {
    /// `b(x,y)|p|^m − f(x,y)`
    PowerLaw { b: Coefficient<T>, f: Coefficient<T> },
    Custom {
        name: String,
        eval: Arc<dyn Fn(T, T, T) -> T + Send + Sync>,
    },
}

/// `H(x, y, p)` together with the constants claimed for the structural assumptions.
#[derive(Clone)]
pub struct HamiltonianSpec<T> {
    pub kind: HamiltonianKind<T>,
    /// Superlinearity exponent, `m > 1`.
    pub m: T,
    /// Claimed `b0` in `μH(p/μ) − H(p) ≥ (1−μ)(b0|p|^m − C0)`.
    pub b0: T,
    pub c0: T,
    /// Claimed Lipschitz constant for the σ = 1 regularity condition.
    pub lipschitz: Option<T>,
    /// `C1` with `ω(r) ≤ C1·r` for `r ≥ 1`.
    pub modulus_scale: T,
    pub periodic_in_y: bool,
}

impl<T: Real> HamiltonianSpec<T> {
    /// `b|p|^m − f` with the claims `b0 = (m−1)·min b` and `C0 = sup|f|`, which
    /// hold for this family.
    pub fn power_law(b: Coefficient<T>, f: Coefficient<T>, m: T) -> Result<Self> {
        if !(m > T::one()) {
            return Err(Error::Domain(format!("exponent m must exceed 1, got {m}")));
        }
        let (b_min, _) = b.range(64);
        let c0 = f.sup_abs(64);
        Ok(Self {
            kind: HamiltonianKind::PowerLaw { b, f },
            m,
            b0: (m - T::one()) * b_min,
            c0,
            lipschitz: None,
            modulus_scale: T::one(),
            periodic_in_y: true,
        })
    }

    pub fn custom(
        name: &str,
        m: T,
        b0: T,
        c0: T,
        eval: impl Fn(T, T, T) -> T + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(m > T::one()) {
            return Err(Error::Domain(format!("exponent m must exceed 1, got {m}")));
        }
        Ok(Self {
            kind: HamiltonianKind::Custom {
                name: name.to_string(),
                eval: Arc::new(eval),
            },
            m,
            b0,
            c0,
            lipschitz: None,
            modulus_scale: T::one(),
            periodic_in_y: true,
        })
    }

    pub fn with_claims(mut self, b0: T, c0: T) -> Self {
        self.b0 = b0;
        self.c0 = c0;
        self
    }

    #[inline]
    pub fn eval(&self, x: T, y: T, p: T) -> T {
        match &self.kind {
            HamiltonianKind::PowerLaw { b, f } => b.eval(x, y) * p.abs().powf(self.m) - f.eval(x, y),
            HamiltonianKind::Custom { eval, .. } => eval(x, y, p),
        }
    }

    /// `∂H/∂p`, analytic for the power law and a central difference otherwise.
    #[inline]
    pub fn dp(&self, x: T, y: T, p: T) -> T {
        match &self.kind {
            HamiltonianKind::PowerLaw { b, .. } => {
                if p == T::zero() {
                    T::zero()
                } else {
                    b.eval(x, y) * self.m * p.abs().powf(self.m - T::one()) * p.signum()
                }
            }
            HamiltonianKind::Custom { eval, .. } => {
                let eta = T::c(1e-6) * (T::one() + p.abs());
                (eval(x, y, p + eta) - eval(x, y, p - eta)) / (eta + eta)
            }
        }
    }

    /// Whether `H(x, y, ·)` does not depend on `y`.
    pub fn y_independent(&self) -> bool {
        match &self.kind {
            HamiltonianKind::PowerLaw { b, f } => !b.depends_on_y() && !f.depends_on_y(),
            HamiltonianKind::Custom { .. } => false,
        }
    }

    /// Coefficient `b` when `H` is a power law with `b ≥ 0`, the case the Godunov
    /// flux is written for.
    pub fn godunov_coefficient(&self) -> Option<&Coefficient<T>> {
        match &self.kind {
            HamiltonianKind::PowerLaw { b, .. } if b.range(64).0 >= T::zero() => Some(b),
            _ => None,
        }
    }

    /// `sup_{x,y} |H(x, y, 0)|` on a `k × k` grid.
    pub fn sup_at_zero(&self, k: usize) -> T {
        grid2(k)
            .into_iter()
            .map(|(x, y)| self.eval(x, y, T::zero()).abs())
            .fold(T::zero(), T::max)
    }

    /// `sup |∂H/∂p|` over `|p| ≤ r` on a sample grid; the Lax–Friedrichs θ.
    pub fn dp_sup(&self, r: T, k: usize) -> T {
        let ps = linspace(-r, r, 2 * k + 1);
        grid2(k)
            .into_iter()
            .flat_map(|(x, y)| ps.iter().map(move |&p| (x, y, p)))
            .map(|(x, y, p)| self.dp(x, y, p).abs())
            .fold(T::zero(), T::max)
    }
}

impl<T: Real> fmt::Display for HamiltonianSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            HamiltonianKind::PowerLaw { b, f: g } => write!(f, "b_pow_m_minus_f(b={b}, f={g}, m={})", self.m),
            HamiltonianKind::Custom { name, .. } => write!(f, "{name}"),
        }
    }
}

impl<T: fmt::Debug> fmt::Debug for HamiltonianSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            HamiltonianKind::PowerLaw { b, f: g } => write!(f, "HamiltonianSpec(b={b:?}, f={g:?}")?,
            HamiltonianKind::Custom { name, .. } => write!(f, "HamiltonianSpec({name}")?,
        }
        write!(f, ", m={:?}, b0={:?}, C0={:?})", self.m, self.b0, self.c0)
    }
}

fn linspace<T: Real>(a: T, b: T, k: usize) -> Vec<T> {
    if k <= 1 {
        return vec![a];
    }
    let step = (b - a) / T::from_usize_lossy(k - 1);
    (0..k).map(|i| a + T::from_usize_lossy(i) * step).collect()
}

fn grid2<T: Real>(k: usize) -> Vec<(T, T)> {
    let h = T::one() / T::from_usize_lossy(k.max(1));
    (0..k)
        .flat_map(|i| (0..k).map(move |j| (T::from_usize_lossy(i) * h, T::from_usize_lossy(j) * h)))
        .collect()
}

/// Numerical flux value and its partial derivatives in the one-sided slopes.
#[derive(Debug, Clone, Copy)]
pub struct FluxValue<T> {
    pub value: T,
    pub d_minus: T,
    pub d_plus: T,
}

/// Godunov flux of `b|q|^m` (`b ≥ 0`) from backward slope `qm` and forward slope `qp`.
#[inline]
pub fn godunov_power<T: Real>(b: T, m: T, qm: T, qp: T) -> FluxValue<T> {
    let sm = qm.max(T::zero());
    let sp = (-qp).max(T::zero());
    if sm >= sp && sm > T::zero() {
        FluxValue {
            value: b * sm.powf(m),
            d_minus: b * m * sm.powf(m - T::one()),
            d_plus: T::zero(),
        }
    } else if sp > T::zero() {
        FluxValue {
            value: b * sp.powf(m),
            d_minus: T::zero(),
            d_plus: -b * m * sp.powf(m - T::one()),
        }
    } else {
        FluxValue {
            value: T::zero(),
            d_minus: T::zero(),
            d_plus: T::zero(),
        }
    }
}

/// Lax–Friedrichs flux `H(q̄) − θ(qp − qm)/2`; monotone when `θ ≥ sup|H'|`.
/// `h` returns `(H(q), H'(q))`.
#[inline]
pub fn lax_friedrichs<T: Real>(h: impl Fn(T) -> (T, T), theta: T, qm: T, qp: T) -> FluxValue<T> {
    let half = T::c(0.5);
    let (v, dv) = h(half * (qm + qp));
    FluxValue {
        value: v - half * theta * (qp - qm),
        d_minus: half * dv + half * theta,
        d_plus: half * dv - half * theta,
    }
}

/// Choice of monotone numerical Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Flux<T> {
    Godunov,
    LaxFriedrichs(T),
}

impl<T: Real> HamiltonianSpec<T> {
    /// Numerical Hamiltonian at `(x, y)` from the one-sided slopes.
    #[inline]
    pub fn flux(&self, flux: Flux<T>, x: T, y: T, qm: T, qp: T) -> FluxValue<T> {
        match (flux, &self.kind) {
            (Flux::Godunov, HamiltonianKind::PowerLaw { b, f }) => {
                let mut v = godunov_power(b.eval(x, y), self.m, qm, qp);
                v.value = v.value - f.eval(x, y);
                v
            }
            (Flux::LaxFriedrichs(theta), _) => {
                lax_friedrichs(|q| (self.eval(x, y, q), self.dp(x, y, q)), theta, qm, qp)
            }
            (Flux::Godunov, HamiltonianKind::Custom { .. }) => {
                // Godunov is only written for the power law; fall back to LF with a local θ.
                let r = qm.abs().max(qp.abs());
                let theta = self.dp(x, y, r).abs().max(self.dp(x, y, -r).abs());
                lax_friedrichs(|q| (self.eval(x, y, q), self.dp(x, y, q)), theta, qm, qp)
            }
        }
    }
}

/// Sample sizes and ranges for the audits.
#[derive(Debug, Clone)]
pub struct SampleBudget<T> {
    pub p_max: T,
    /// Nodes per axis for `μ`, `p`, and `y`.
    pub nodes: usize,
    /// `x` nodes; 1 suffices for `x`-independent data.
    pub x_nodes: usize,
    /// Radii `R` probed by the regularity audit.
    pub radii: Vec<T>,
}

impl<T: Real> Default for SampleBudget<T> {
    fn default() -> Self {
        Self {
            p_max: T::c(10.0),
            nodes: 64,
            x_nodes: 4,
            radii: [1.0, 2.0, 4.0, 8.0, 16.0].into_iter().map(T::c).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SuperlinearityAudit<T> {
    pub worst_slack: T,
    /// `(x, y, p, μ)` at the worst slack.
    pub witness: (T, T, T, T),
    pub samples: usize,
}

impl<T: Real> SuperlinearityAudit<T> {
    pub fn passed(&self) -> bool {
        self.worst_slack >= -T::c(1e-10) * (T::one() + self.witness.2.abs().powi(2))
    }
}

/// Minimum over the sample of `μH(x,y,p/μ) − H(x,y,p) − (1−μ)(b0|p|^m − C0)`.
pub fn audit_superlinearity<T: Real>(h: &HamiltonianSpec<T>, budget: &SampleBudget<T>) -> SuperlinearityAudit<T> {
    let k = budget.nodes.max(2);
    let mus: Vec<T> = (1..=k).map(|i| T::from_usize_lossy(i) / T::from_usize_lossy(k + 1)).collect();
    let ps = linspace(-budget.p_max, budget.p_max, k);
    let ys = linspace(T::zero(), T::one() - T::one() / T::from_usize_lossy(k), k);
    let xs = linspace(T::zero(), T::one() - T::one() / T::from_usize_lossy(budget.x_nodes.max(1)), budget.x_nodes.max(1));
    let per_mu: Vec<(T, (T, T, T, T))> = mus
        .par_iter()
        .map(|&mu| {
            let mut best = (T::infinity(), (T::zero(), T::zero(), T::zero(), mu));
            for &x in &xs {
                for &y in &ys {
                    for &p in &ps {
                        let slack = mu * h.eval(x, y, p / mu)
                            - h.eval(x, y, p)
                            - (T::one() - mu) * (h.b0 * p.abs().powf(h.m) - h.c0);
                        if slack < best.0 {
                            best = (slack, (x, y, p, mu));
                        }
                    }
                }
            }
            best
        })
        .collect();
    let (worst_slack, witness) = per_mu
        .into_iter()
        .fold((T::infinity(), (T::zero(), T::zero(), T::zero(), T::zero())), |acc, v| {
            if v.0 < acc.0 {
                v
            } else {
                acc
            }
        });
    SuperlinearityAudit {
        worst_slack,
        witness,
        samples: k * k * k * xs.len(),
    }
}

/// Empirical increment constants at one radius `R`.
#[derive(Debug, Clone, Copy)]
pub struct RegularityRow<T> {
    pub radius: T,
    /// `sup |∂_x H| / (1 + R^m)`
    pub x_constant: T,
    /// `sup |∂_y H| / (1 + R^m)`
    pub y_constant: T,
    /// `sup |∂_p H| / (1 + R^{m−1})`
    pub p_constant: T,
}

#[derive(Debug, Clone)]
pub struct RegularityAudit<T> {
    pub rows: Vec<RegularityRow<T>>,
    /// Smallest `L` consistent with every sampled increment.
    pub lipschitz: T,
    /// Set when a claimed `L` is exceeded: `(R, measured)`.
    pub violation: Option<(T, T)>,
}

/// Finite-difference probes of the Lipschitz-type bounds over `|p| ≤ R` for each
/// radius in the budget.
pub fn audit_regularity<T: Real>(h: &HamiltonianSpec<T>, budget: &SampleBudget<T>) -> RegularityAudit<T> {
    let k = budget.nodes.max(2);
    let eta = T::c(1e-6);
    let pts = grid2::<T>(k);
    let rows: Vec<RegularityRow<T>> = budget
        .radii
        .iter()
        .map(|&r| {
            let ps = linspace(-r, r - eta, k);
            let (mut cx, mut cy, mut cp) = (T::zero(), T::zero(), T::zero());
            for &(x, y) in &pts {
                for &p in &ps {
                    let base = h.eval(x, y, p);
                    cx = cx.max((h.eval(x + eta, y, p) - base).abs() / eta);
                    cy = cy.max((h.eval(x, y + eta, p) - base).abs() / eta);
                    cp = cp.max((h.eval(x, y, p + eta) - base).abs() / eta);
                }
            }
            let big = T::one() + r.powf(h.m);
            let small = T::one() + r.powf(h.m - T::one());
            RegularityRow {
                radius: r,
                x_constant: cx / big,
                y_constant: cy / big,
                p_constant: cp / small,
            }
        })
        .collect();
    let lipschitz = rows
        .iter()
        .map(|row| row.x_constant.max(row.y_constant).max(row.p_constant))
        .fold(T::zero(), T::max);
    let violation = h.lipschitz.and_then(|l| {
        rows.iter()
            .map(|row| (row.radius, row.x_constant.max(row.y_constant).max(row.p_constant)))
            .find(|&(_, v)| v > l)
    });
    RegularityAudit { rows, lipschitz, violation }
}

/// Smallest `C` with `|H| ≤ C(1 + |p|^m)` on the sample. The `p` sample covers
/// `[−P_max, P_max]` and a geometric range far beyond it.
pub fn growth_bound<T: Real>(h: &HamiltonianSpec<T>, budget: &SampleBudget<T>) -> T {
    let k = budget.nodes.max(2);
    let mut ps = linspace(-budget.p_max, budget.p_max, 2 * k + 1);
    let mut r = budget.p_max;
    for _ in 0..20 {
        r = r * T::c(2.0);
        ps.push(r);
        ps.push(-r);
    }
    grid2::<T>(k)
        .par_iter()
        .map(|&(x, y)| {
            ps.iter()
                .map(|&p| h.eval(x, y, p).abs() / (T::one() + p.abs().powf(h.m)))
                .fold(T::zero(), T::max)
        })
        .collect::<Vec<T>>()
        .into_iter()
        .fold(T::zero(), T::max)
}

/// `sup_{|p| ≤ 2} (−H)`, the constant making the coercivity bound hold on the ball.
pub fn small_gradient_deficit<T: Real>(h: &HamiltonianSpec<T>, budget: &SampleBudget<T>) -> T {
    let ps = linspace(-T::c(2.0), T::c(2.0), 2 * budget.nodes.max(2) + 1);
    grid2::<T>(budget.nodes.max(2))
        .into_iter()
        .flat_map(|(x, y)| ps.iter().map(move |&p| (x, y, p)))
        .map(|(x, y, p)| -h.eval(x, y, p))
        .fold(T::neg_infinity(), T::max)
}

/// Coercivity `H ≥ C̃(|p|^m + 1) − K`.
#[derive(Debug, Clone, Copy)]
pub struct CoercivityCertificate<T> {
    pub c_m: T,
    pub cap_c_m: T,
    pub c_tilde: T,
    pub k: T,
    /// The large-gradient part of the bound is derived for `|p|` above this.
    pub valid_above: T,
}

/// Assembles the certificate from `b0`, `C0`, the growth constant `C_grow`, and
/// `K_small = sup_{|p|≤2}(−H)`.
///
/// For `|p| > 2` one has `H ≥ b0 c_m|p|^m − B|p| + C0` with
/// `B = b0 C_m + 2 C_grow + C0` (`2 C_grow` bounds `−H` on the unit sphere).
/// Taking `C̃ = b0 c_m / 2`, the worst case of `−C̃ r^m + B r` is attained at
/// `r* = (B/(m C̃))^{1/(m−1)}`.
pub fn coercivity_constants<T: Real>(m: T, b0: T, c0: T, c_grow: T, k_small: T) -> Result<CoercivityCertificate<T>> {
    if !(m > T::one()) {
        return Err(Error::Domain(format!("exponent m must exceed 1, got {m}")));
    }
    if !(b0 > T::zero()) {
        return Err(Error::Domain(format!("b0 must be positive, got {b0}")));
    }
    let (c_m, cap_c_m) = endpoint_bounds(m);
    let c_tilde = b0 * c_m / T::c(2.0);
    let b = b0 * cap_c_m + T::c(2.0) * c_grow + c0;
    let r_star = (b / (m * c_tilde)).powf(T::one() / (m - T::one()));
    let k_large = b * r_star * (T::one() - T::one() / m) + c_tilde - c0;
    let k_ball = k_small + c_tilde * (T::one() + T::c(2.0).powf(m));
    Ok(CoercivityCertificate {
        c_m,
        cap_c_m,
        c_tilde,
        k: k_large.max(k_ball).max(T::zero()),
        valid_above: T::c(2.0),
    })
}

/// `c_m = (1/2)/((1/4)^{1−m} − 1)` and `C_m = (3/4)/((1/2)^{1−m} − 1)`.
pub fn endpoint_bounds<T: Real>(m: T) -> (T, T) {
    let one = T::one();
    let c_m = T::c(0.5) / (T::c(0.25).powf(one - m) - one);
    let cap = T::c(0.75) / (T::c(0.5).powf(one - m) - one);
    (c_m, cap)
}

/// [`endpoint_bounds`] as exact rationals for integer `m ≥ 2`.
pub fn endpoint_bounds_exact(m: u32) -> Result<(Ratio<i64>, Ratio<i64>)> {
    if !(2..=31).contains(&m) {
        return Err(Error::Domain(format!("exact bounds need an integer exponent in [2, 31], got {m}")));
    }
    let four = 4i64.pow(m - 1);
    let two = 2i64.pow(m - 1);
    Ok((Ratio::new(1, 2 * (four - 1)), Ratio::new(3, 4 * (two - 1))))
}
