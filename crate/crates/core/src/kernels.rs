//! Interaction kernels `K(z) = k̄(z)|z|^{-1-σ}`: normalization, audits, the
//! σ = 1 drift, and the periodized monotone quadrature table.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use statrs::function::gamma::gamma;

use crate::coefficients::Coefficient;
use crate::error::{Error, Result};
use crate::grid::{GridFunction, MIN_NODES};
use crate::quad::{integrate, GaussRule};
use crate::scalar::Real;
use crate::spectral::Circulant;

/// Nodes per unit length used by the kernel audits unless overridden.
pub const AUDIT_PER_UNIT: usize = 4096;

/// Normalizing constant `C_{1,σ}` making `k̄ ≡ C_{1,σ}` the fractional Laplacian
/// with multiplier `(2π|k|)^σ`.
pub fn normalizing_constant<T: Real>(sigma: T) -> Result<T> {
    let s = sigma.to_f64_lossy();
    if !(s > 0.0 && s < 2.0) {
        return Err(Error::Domain(format!("order sigma must lie in (0,2), got {s}")));
    }
    let c = s * 2f64.powf(s - 1.0) * gamma((1.0 + s) / 2.0)
        / (std::f64::consts::PI.sqrt() * gamma(1.0 - s / 2.0));
    Ok(T::c(c))
}

/// Shape of `k̄`. Built-in shapes are multiples of `C_{1,σ}`.
#[derive(Clone)]
pub enum KernelDensity<T> {
    Constant,
    /// `C(1 + s·z)` on `|z| ≤ 1`, `C` outside.
    Tilt(T),
    /// `C(1 + s·z|z|)` on `|z| ≤ 1`, `C` outside.
    QuadraticTilt(T),
    /// `C(1 + s·sign(z)/(1 + |ln|z||))` on `0 < |z| ≤ 1`, `C` elsewhere. Its
    /// modulus at the origin decays only logarithmically.
    LogTilt(T),
    /// Piecewise linear through `(z_i, k_i)`, held constant outside the table.
    Tabulated { z: Vec<T>, k: Vec<T>, source: String },
    Custom {
        name: String,
        f: Arc<dyn Fn(T) -> T + Send + Sync>,
    },
}

/// Order and density of the interaction kernel.
#[derive(Clone)]
pub struct KernelSpec<T> {
    sigma: T,
    scale: T,
    density: KernelDensity<T>,
    symmetric: bool,
}

impl<T: Real> KernelSpec<T> {
    fn built_in(sigma: T, density: KernelDensity<T>, symmetric: bool) -> Result<Self> {
        let scale = normalizing_constant(sigma)?;
        Ok(Self {
            sigma,
            scale,
            density,
            symmetric,
        })
    }

    /// The fractional Laplacian `k̄ ≡ C_{1,σ}`.
    pub fn constant(sigma: T) -> Result<Self> {
        Self::built_in(sigma, KernelDensity::Constant, true)
    }

    pub fn tilt(sigma: T, slope: T) -> Result<Self> {
        Self::built_in(sigma, KernelDensity::Tilt(slope), slope == T::zero())
    }

    pub fn quadratic_tilt(sigma: T, slope: T) -> Result<Self> {
        Self::built_in(sigma, KernelDensity::QuadraticTilt(slope), slope == T::zero())
    }

    pub fn log_tilt(sigma: T, slope: T) -> Result<Self> {
        Self::built_in(sigma, KernelDensity::LogTilt(slope), slope == T::zero())
    }

    /// Tabulated density; `z` must be strictly increasing. Symmetry is detected
    /// by sampling.
    pub fn tabulated(sigma: T, z: Vec<T>, k: Vec<T>, source: &str) -> Result<Self> {
        normalizing_constant(sigma)?;
        if z.len() != k.len() {
            return Err(Error::SizeMismatch { expected: z.len(), got: k.len() });
        }
        if z.len() < 2 {
            return Err(Error::Domain("tabulated kernel needs at least two rows".into()));
        }
        if z.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("tabulated kernel abscissae must increase strictly".into()));
        }
        if z.iter().chain(&k).any(|v| !v.is_finite()) {
            return Err(Error::Domain("tabulated kernel has non-finite entries".into()));
        }
        let mut spec = Self {
            sigma,
            scale: T::one(),
            density: KernelDensity::Tabulated {
                z,
                k,
                source: source.to_string(),
            },
            symmetric: false,
        };
        spec.symmetric = spec.detect_symmetry();
        Ok(spec)
    }

    /// Arbitrary density; `symmetric` is a hint the caller vouches for.
    pub fn custom(sigma: T, name: &str, symmetric: bool, f: impl Fn(T) -> T + Send + Sync + 'static) -> Result<Self> {
        normalizing_constant(sigma)?;
        Ok(Self {
            sigma,
            scale: T::one(),
            density: KernelDensity::Custom {
                name: name.to_string(),
                f: Arc::new(f),
            },
            symmetric,
        })
    }

    fn detect_symmetry(&self) -> bool {
        let h = T::one() / T::from_usize_lossy(AUDIT_PER_UNIT);
        (1..=8 * AUDIT_PER_UNIT).all(|j| {
            let z = T::from_usize_lossy(j) * h;
            self.kbar(z) == self.kbar(-z)
        })
    }

    #[inline]
    pub fn sigma(&self) -> T {
        self.sigma
    }

    #[inline]
    pub fn symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn density(&self) -> &KernelDensity<T> {
        &self.density
    }

    /// Whether the gradient compensator on the unit ball is part of the operator.
    #[inline]
    pub fn compensated(&self) -> bool {
        self.sigma >= T::one()
    }

    pub fn cutoff_note(&self) -> &'static str {
        if self.compensated() {
            "compensator 1_B<Du,z> active (sigma >= 1)"
        } else {
            "compensator dropped (sigma < 1)"
        }
    }

    /// The density `k̄(z)`.
    #[inline]
    pub fn kbar(&self, z: T) -> T {
        let one = T::one();
        let inside = z.abs() <= one;
        match &self.density {
            KernelDensity::Constant => self.scale,
            KernelDensity::Tilt(s) => {
                if inside {
                    self.scale * (one + *s * z)
                } else {
                    self.scale
                }
            }
            KernelDensity::QuadraticTilt(s) => {
                if inside {
                    self.scale * (one + *s * z * z.abs())
                } else {
                    self.scale
                }
            }
            KernelDensity::LogTilt(s) => {
                if inside && z != T::zero() {
                    self.scale * (one + *s * z.signum() / (one + z.abs().ln().abs()))
                } else {
                    self.scale
                }
            }
            KernelDensity::Tabulated { z: zs, k, .. } => interpolate(zs, k, z),
            KernelDensity::Custom { f, .. } => f(z),
        }
    }

    /// `K(z) = k̄(z)|z|^{-1-σ}` for `z ≠ 0`.
    #[inline]
    pub fn density_at(&self, z: T) -> T {
        self.kbar(z) * z.abs().powf(-(T::one() + self.sigma))
    }

    /// Sampled modulus `ω̄` at the origin on the default audit resolution.
    pub fn omega_bar(&self) -> OmegaBar<T> {
        OmegaBar::sample(self, AUDIT_PER_UNIT, T::c(8.0))
    }
}

impl<T: Real> fmt::Display for KernelSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.density {
            KernelDensity::Constant => write!(f, "constant"),
            KernelDensity::Tilt(s) => write!(f, "tilt({s})"),
            KernelDensity::QuadraticTilt(s) => write!(f, "quadratic_tilt({s})"),
            KernelDensity::LogTilt(s) => write!(f, "log_tilt({s})"),
            KernelDensity::Tabulated { source, .. } => write!(f, "csv({source})"),
            KernelDensity::Custom { name, .. } => write!(f, "{name}"),
        }
    }
}

impl<T: fmt::Debug> fmt::Debug for KernelSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let density = match &self.density {
            KernelDensity::Constant => "constant".to_string(),
            KernelDensity::Tilt(s) => format!("tilt({s:?})"),
            KernelDensity::QuadraticTilt(s) => format!("quadratic_tilt({s:?})"),
            KernelDensity::LogTilt(s) => format!("log_tilt({s:?})"),
            KernelDensity::Tabulated { source, .. } => format!("csv({source})"),
            KernelDensity::Custom { name, .. } => name.clone(),
        };
        f.debug_struct("KernelSpec")
            .field("sigma", &self.sigma)
            .field("density", &density)
            .field("symmetric", &self.symmetric)
            .finish()
    }
}

fn interpolate<T: Real>(zs: &[T], ks: &[T], z: T) -> T {
    let last = zs.len() - 1;
    if z <= zs[0] {
        return ks[0];
    }
    if z >= zs[last] {
        return ks[last];
    }
    let i = zs.partition_point(|&v| v <= z) - 1;
    let t = (z - zs[i]) / (zs[i + 1] - zs[i]);
    ks[i] + t * (ks[i + 1] - ks[i])
}

/// `ω̄(t) = sup_{|z| ≤ t} |k̄(z) − k̄(0)|` on a fixed sample set, so the
/// estimate is nondecreasing in `t` by construction.
#[derive(Debug, Clone)]
pub struct OmegaBar<T> {
    radii: Vec<T>,
    running_max: Vec<T>,
}

impl<T: Real> OmegaBar<T> {
    /// Samples a uniform grid with `per_unit` nodes per unit on `[-reach, reach]`
    /// together with 64 points per dyadic shell down to `2^-120`.
    pub fn sample(k: &KernelSpec<T>, per_unit: usize, reach: T) -> Self {
        let k0 = k.kbar(T::zero());
        let h = T::one() / T::from_usize_lossy(per_unit.max(1));
        let count = (reach / h).ceil().to_usize().unwrap_or(0);
        let mut pts: Vec<T> = (1..=count).map(|j| T::from_usize_lossy(j) * h).collect();
        for shell in 0..120 {
            let base = T::c(0.5f64.powi(shell + 1));
            for i in 0..64 {
                pts.push(base * (T::one() + T::from_usize_lossy(i) / T::c(64.0)));
            }
        }
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        pts.dedup();
        let mut running_max = Vec::with_capacity(pts.len());
        let mut best = T::zero();
        for &r in &pts {
            best = best.max((k.kbar(r) - k0).abs()).max((k.kbar(-r) - k0).abs());
            running_max.push(best);
        }
        Self { radii: pts, running_max }
    }

    pub fn eval(&self, t: T) -> T {
        let i = self.radii.partition_point(|&r| r <= t);
        if i == 0 {
            T::zero()
        } else {
            self.running_max[i - 1]
        }
    }

    /// `∫_0^1 ω̄(r)/r dr`, summed exactly for the sampled step function over
    /// dyadic shells, with a ratio test on the trailing shells.
    pub fn dini_integral(&self) -> DiniIntegral<T> {
        let mut shells = Vec::with_capacity(120);
        for s in 0..120 {
            let hi = T::c(0.5f64.powi(s));
            let lo = T::c(0.5f64.powi(s + 1));
            shells.push(self.log_integral(lo, hi));
        }
        let value: T = shells.iter().rev().copied().sum();
        let tail_shells = &shells[shells.len() - 11..];
        let last = *tail_shells.last().unwrap();
        if tail_shells.iter().all(|&v| v == T::zero()) {
            return DiniIntegral { value, tail: T::zero(), finite: true };
        }
        let first = tail_shells[0];
        let ratio = if first > T::zero() {
            (last / first).powf(T::c(0.1))
        } else {
            T::one()
        };
        let finite = ratio < T::c(0.95);
        let tail = if finite { last * ratio / (T::one() - ratio) } else { T::infinity() };
        DiniIntegral { value, tail, finite }
    }

    fn log_integral(&self, lo: T, hi: T) -> T {
        let start = self.radii.partition_point(|&r| r <= lo);
        let mut acc = T::zero();
        let mut left = lo;
        let mut level = self.eval(lo);
        for i in start..self.radii.len() {
            let r = self.radii[i];
            if r >= hi {
                break;
            }
            acc = acc + level * (r / left).ln();
            left = r;
            level = self.running_max[i];
        }
        acc + level * (hi / left).ln()
    }
}

/// Outcome of the Dini-type test `∫_0^1 ω̄(r)/r dr < ∞`.
#[derive(Debug, Clone, Copy)]
pub struct DiniIntegral<T> {
    /// Sum over the sampled shells down to `2^-120`.
    pub value: T,
    /// Geometric estimate of the remaining mass; infinite when divergent.
    pub tail: T,
    pub finite: bool,
}

/// `ω̄(t)` for a single radius; the sample includes the endpoints `±t`.
pub fn modulus_omega_bar<T: Real>(k: &KernelSpec<T>, t: T) -> T {
    let t = t.max(T::zero());
    let k0 = k.kbar(T::zero());
    let ends = (k.kbar(t) - k0).abs().max((k.kbar(-t) - k0).abs());
    OmegaBar::sample(k, AUDIT_PER_UNIT, t).eval(t).max(ends)
}

/// Sample resolutions for [`audit_ellipticity`].
#[derive(Debug, Clone, Copy)]
pub struct AuditGrid {
    /// Coefficient nodes per unit in each of `x` and `y`.
    pub coefficient_nodes: usize,
    pub kernel_per_unit: usize,
    /// Half width of the kernel sample window.
    pub kernel_reach: f64,
}

impl Default for AuditGrid {
    fn default() -> Self {
        Self {
            coefficient_nodes: 256,
            kernel_per_unit: AUDIT_PER_UNIT,
            kernel_reach: 8.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EllipticityAudit<T> {
    /// Largest `a0` with `a0 ≤ a ≤ 1/a0` on the sample (≤ 0 when `a` is not positive).
    pub a0: T,
    pub a_min: T,
    pub a_max: T,
    /// Sample point where `a` is smallest.
    pub a_witness: (T, T),
    pub kbar_sup: T,
    pub kbar_min: T,
    pub kbar_at_zero: T,
    pub normalizing_constant: T,
    pub dini: Option<DiniIntegral<T>>,
    pub failures: Vec<String>,
}

impl<T: Real> EllipticityAudit<T> {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Checks positivity and bounds of `a`, boundedness and positivity of `k̄`,
/// `k̄(0) = C_{1,σ}`, and for nonsymmetric σ = 1 kernels the Dini condition on ω̄.
pub fn audit_ellipticity<T: Real>(a: &Coefficient<T>, k: &KernelSpec<T>, grid: AuditGrid) -> EllipticityAudit<T> {
    let mut failures = Vec::new();
    let na = grid.coefficient_nodes.max(1);
    let ha = T::one() / T::from_usize_lossy(na);
    let mut a_min = T::infinity();
    let mut a_max = T::neg_infinity();
    let mut a_witness = (T::zero(), T::zero());
    for i in 0..na {
        for j in 0..na {
            let (x, y) = (T::from_usize_lossy(i) * ha, T::from_usize_lossy(j) * ha);
            let v = a.eval(x, y);
            if !(v >= a_min) {
                a_min = v;
                a_witness = (x, y);
            }
            a_max = a_max.max(v);
        }
    }
    let a0 = if a_min > T::zero() { a_min.min(T::one() / a_max) } else { a_min };
    if !(a_min > T::zero()) {
        failures.push(format!(
            "coefficient a = {a_min:e} is not positive at (x, y) = ({}, {})",
            a_witness.0, a_witness.1
        ));
    }

    let hk = T::one() / T::from_usize_lossy(grid.kernel_per_unit.max(1));
    let reach = (T::c(grid.kernel_reach) / hk).ceil().to_usize().unwrap_or(0);
    let mut kbar_sup = T::zero();
    let mut kbar_min = T::infinity();
    for j in 0..=reach {
        let z = T::from_usize_lossy(j) * hk;
        for v in [k.kbar(z), k.kbar(-z)] {
            if !v.is_finite() {
                kbar_sup = T::infinity();
            } else {
                kbar_sup = kbar_sup.max(v.abs());
            }
            kbar_min = kbar_min.min(v);
        }
    }
    if !kbar_sup.is_finite() {
        failures.push("kernel density is unbounded or non-finite on the audit grid".into());
    }
    if kbar_min < T::zero() {
        failures.push(format!("kernel density takes the negative value {kbar_min:e}"));
    }
    let k0 = k.kbar(T::zero());
    if !(k0 > T::zero()) {
        failures.push(format!("kernel density at the origin is {k0:e}, must be positive"));
    }
    let cn = normalizing_constant(k.sigma()).unwrap_or(T::nan());
    if (k0 - cn).abs() > T::c(1e-6) * cn {
        failures.push(format!(
            "kernel density at the origin {k0:e} differs from the normalizing constant {cn:e}"
        ));
    }
    let dini = if k.sigma() == T::one() && !k.symmetric() {
        let d = OmegaBar::sample(k, grid.kernel_per_unit, T::one()).dini_integral();
        if !d.finite {
            failures.push(format!(
                "nonsymmetric sigma = 1 kernel: integral of omega_bar(r)/r over (0,1) diverges (partial sum {:e})",
                d.value
            ));
        }
        Some(d)
    } else {
        None
    };
    EllipticityAudit {
        a0,
        a_min,
        a_max,
        a_witness,
        kbar_sup,
        kbar_min,
        kbar_at_zero: k0,
        normalizing_constant: cn,
        dini,
        failures,
    }
}

/// The σ = 1 drift `b = ∫_0^1 (k̄(z) − k̄(−z))/z dz`.
#[derive(Debug, Clone)]
pub struct DriftVector<T> {
    pub b: T,
    /// Truncation radii `ρ_k = 2^-k` used, decreasing.
    pub rho_sequence: Vec<T>,
    pub converged: bool,
    /// Magnitude of the last increment `b(ρ_k) − b(ρ_{k-1})`.
    pub residual: T,
}

pub fn drift_vector<T: Real>(k: &KernelSpec<T>, tol: T) -> Result<DriftVector<T>> {
    if k.sigma() != T::one() {
        return Err(Error::Domain(format!("drift is defined for sigma = 1 only, got {}", k.sigma())));
    }
    if k.symmetric() {
        return Ok(DriftVector {
            b: T::zero(),
            rho_sequence: vec![T::one()],
            converged: true,
            residual: T::zero(),
        });
    }
    const MAX_HALVINGS: i32 = 80;
    let integrand = |z: T| (k.kbar(z) - k.kbar(-z)) / z;
    let mut b = T::zero();
    let mut rho_sequence = vec![T::one()];
    let mut residual = T::infinity();
    let mut quad_ok = true;
    for j in 1..=MAX_HALVINGS {
        let hi = T::c(0.5f64.powi(j - 1));
        let lo = T::c(0.5f64.powi(j));
        let q = integrate(integrand, lo, hi, tol * T::c(1e-3), T::c(1e-13));
        quad_ok &= q.converged;
        b = b + q.value;
        residual = q.value.abs();
        rho_sequence.push(lo);
        if j > 2 && residual < tol {
            return Ok(DriftVector {
                b,
                rho_sequence,
                converged: quad_ok,
                residual,
            });
        }
    }
    Ok(DriftVector {
        b,
        rho_sequence,
        converged: false,
        residual,
    })
}

const PANEL_POINTS: usize = 8;
const INNER_POINTS: usize = 16;

/// Kernel mass carried by the linear hat centred at `±j·h`, restricted to
/// `lower ≤ |z| ≤ reach`; `pos[j]`, `neg[j]` for `j = 0..=reach/h`.
pub(crate) fn hat_weights<T: Real>(k: &KernelSpec<T>, h: T, lower: T, reach: T) -> (Vec<T>, Vec<T>) {
    let rule = GaussRule::<T>::new(PANEL_POINTS);
    let jmax = (reach / h).round().to_usize().unwrap_or(0);
    let per_offset: Vec<(T, T)> = (0..=jmax)
        .into_par_iter()
        .map(|j| {
            let center = T::from_usize_lossy(j) * h;
            let mut acc = (T::zero(), T::zero());
            for (a, b) in [(center - h, center), (center, center + h)] {
                let a = a.max(lower);
                let b = b.min(reach);
                if b <= a {
                    continue;
                }
                let hat = |z: T| T::one() - ((z - center) / h).abs();
                let w = |z: T| hat(z) * z.powf(-(T::one() + k.sigma()));
                acc.0 = acc.0 + rule.integrate(|z| w(z) * k.kbar(z), a, b);
                acc.1 = acc.1 + rule.integrate(|z| w(z) * k.kbar(-z), a, b);
            }
            acc
        })
        .collect();
    per_offset.into_iter().unzip()
}

/// `∫_0^h (k̄(z) + k̄(−z)) z^{1−σ} dz`, the second moment of the singular cell.
pub(crate) fn inner_second_moment<T: Real>(k: &KernelSpec<T>, h: T) -> T {
    let rule = GaussRule::<T>::new(INNER_POINTS);
    let e = T::c(2.0) - k.sigma();
    let inv = T::one() / e;
    let g = |s: T| {
        let z = h * s.powf(inv);
        k.kbar(z) + k.kbar(-z)
    };
    h.powf(e) * inv * rule.integrate(g, T::zero(), T::one())
}

/// `∫_a^b (k̄(z) − k̄(−z)) z^{−σ} dz` for `0 < a ≤ b`, Gauss–Legendre on dyadic panels.
pub(crate) fn antisymmetric_moment<T: Real>(k: &KernelSpec<T>, a: T, b: T) -> T {
    if k.symmetric() || b <= a {
        return T::zero();
    }
    let rule = GaussRule::<T>::new(INNER_POINTS);
    let sigma = k.sigma();
    let d = |z: T| (k.kbar(z) - k.kbar(-z)) * z.powf(-sigma);
    let mut acc = T::zero();
    let mut lo = a;
    while lo < b {
        let hi = (lo * T::c(2.0)).min(b);
        acc = acc + rule.integrate(d, lo, hi);
        lo = hi;
    }
    acc
}

/// `∫_0^h (k̄(z) − k̄(−z)) z^{−σ} dz` for σ < 1, through `z = h s^{1/(1−σ)}`.
pub(crate) fn antisymmetric_moment_origin<T: Real>(k: &KernelSpec<T>, h: T) -> T {
    if k.symmetric() {
        return T::zero();
    }
    let rule = GaussRule::<T>::new(INNER_POINTS);
    let e = T::one() - k.sigma();
    let inv = T::one() / e;
    let d = |s: T| {
        let z = h * s.powf(inv);
        k.kbar(z) - k.kbar(-z)
    };
    h.powf(e) * inv * rule.integrate(d, T::zero(), T::one())
}

/// Coefficient of `u'(x)` left by the antisymmetric part of `K` once the
/// singular cell is replaced by a second difference: the compensator over
/// `h < |z| < 1` when σ ≥ 1, the first moment of the singular cell when σ < 1.
pub(crate) fn drift_coefficient<T: Real>(k: &KernelSpec<T>, h: T) -> T {
    if k.compensated() {
        -antisymmetric_moment(k, h, T::one())
    } else {
        antisymmetric_moment_origin(k, h)
    }
}

/// Monotone periodized quadrature for `I` on an `n`-node torus grid:
/// `(I_h u)_i = Σ_r W_r (u_{i+r} − u_i)`.
#[derive(Debug, Clone)]
pub struct QuadratureTable<T> {
    n: usize,
    sigma: T,
    image_budget: usize,
    base: Vec<T>,
    compensator: T,
    with_compensator: bool,
    weights: Vec<T>,
    tail_mass: T,
    circulant: Option<Circulant<T>>,
}

/// Grids up to this size use the direct O(n²) sum.
const DIRECT_LIMIT: usize = 64;

impl<T: Real> QuadratureTable<T> {
    fn assemble(n: usize, sigma: T, image_budget: usize, base: Vec<T>, compensator: T, with_compensator: bool) -> Self {
        let h = T::one() / T::from_usize_lossy(n);
        let mut weights = base.clone();
        if with_compensator {
            if compensator > T::zero() {
                weights[1] = weights[1] + compensator / h;
            } else if compensator < T::zero() {
                weights[n - 1] = weights[n - 1] - compensator / h;
            }
        }
        let tail_mass = weights.iter().copied().sum();
        let circulant = (n > DIRECT_LIMIT).then(|| Circulant::new(&weights));
        Self {
            n,
            sigma,
            image_budget,
            base,
            compensator,
            with_compensator,
            weights,
            tail_mass,
            circulant,
        }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sigma(&self) -> T {
        self.sigma
    }

    /// Periods of the kernel summed on each side.
    pub fn image_budget(&self) -> usize {
        self.image_budget
    }

    /// Share of the analytic far-field mass added to every nonzero offset.
    pub(crate) fn tail_share(k: &KernelSpec<T>, n: usize, image_budget: usize) -> T {
        let reach = T::from_usize_lossy(image_budget);
        let tail = (k.kbar(reach) + k.kbar(-reach)) * reach.powf(-k.sigma()) / k.sigma();
        tail / T::from_usize_lossy(n - 1)
    }

    /// Weights by periodic offset `r = 0..n` (`W_0 = 0`), first-order term included.
    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// Weights of the symmetric and second-difference part only.
    pub fn base_weights(&self) -> &[T] {
        &self.base
    }

    /// Coefficient `c` of the first-order term `c·u'`, applied by upwinding.
    pub fn compensator_coeff(&self) -> T {
        self.compensator
    }

    pub fn has_compensator(&self) -> bool {
        self.with_compensator
    }

    /// Same table with the first-order term switched on or off.
    pub fn with_compensator(&self, on: bool) -> Self {
        Self::assemble(self.n, self.sigma, self.image_budget, self.base.clone(), self.compensator, on)
    }

    /// `Σ_r W_r`, the diagonal magnitude used by the CFL bound.
    pub fn tail_mass(&self) -> T {
        self.tail_mass
    }

    pub fn apply(&self, u: &GridFunction<T>) -> Result<GridFunction<T>> {
        if u.n() != self.n {
            return Err(Error::SizeMismatch { expected: self.n, got: u.n() });
        }
        let mut out = vec![T::zero(); self.n];
        self.apply_into(u.values(), &mut out);
        GridFunction::new(out)
    }

    /// Same as [`apply`](Self::apply) on raw slices of length `n`.
    pub fn apply_into(&self, u: &[T], out: &mut [T]) {
        let base = u[0];
        let v: Vec<T> = u.iter().map(|&x| x - base).collect();
        match &self.circulant {
            Some(c) => c.apply(&v, out),
            None => self.correlate_direct(&v, out),
        }
        for (o, &vi) in out.iter_mut().zip(&v) {
            *o = *o - self.tail_mass * vi;
        }
    }

    /// O(n²) evaluation, free of FFT rounding.
    pub fn apply_direct(&self, u: &[T], out: &mut [T]) {
        let base = u[0];
        let v: Vec<T> = u.iter().map(|&x| x - base).collect();
        self.correlate_direct(&v, out);
        for (o, &vi) in out.iter_mut().zip(&v) {
            *o = *o - self.tail_mass * vi;
        }
    }

    fn correlate_direct(&self, v: &[T], out: &mut [T]) {
        let n = self.n;
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = T::zero();
            for r in 1..n {
                acc = acc + self.weights[r] * v[(i + r) % n];
            }
            *o = acc;
        }
    }
}

/// Builds the quadrature table for `k` on an `n`-node grid, summing
/// `image_budget` periods of the kernel on each side and spreading the analytic
/// remainder evenly over the nonzero offsets.
pub fn periodized_weights<T: Real>(k: &KernelSpec<T>, n: usize, image_budget: usize) -> Result<QuadratureTable<T>> {
    if n < MIN_NODES {
        return Err(Error::Domain(format!("quadrature table needs n >= {MIN_NODES}, got {n}")));
    }
    if image_budget == 0 {
        return Err(Error::Domain("image budget must be at least 1".into()));
    }
    let h = T::one() / T::from_usize_lossy(n);
    let reach = T::from_usize_lossy(image_budget);
    let (pos, neg) = hat_weights(k, h, h, reach);
    let mut base = vec![T::zero(); n];
    for (j, (&wp, &wn)) in pos.iter().zip(&neg).enumerate().skip(1) {
        base[j % n] = base[j % n] + wp;
        base[(n - j % n) % n] = base[(n - j % n) % n] + wn;
    }
    let inner = inner_second_moment(k, h) / (T::c(2.0) * h * h);
    base[1] = base[1] + inner;
    base[n - 1] = base[n - 1] + inner;
    let share = QuadratureTable::tail_share(k, n, image_budget);
    for w in base.iter_mut().skip(1) {
        *w = *w + share;
    }
    base[0] = T::zero();
    if let Some(r) = base.iter().position(|w| *w < T::zero()) {
        return Err(Error::Domain(format!(
            "negative quadrature weight at offset {r}; the kernel density must be nonnegative"
        )));
    }
    let c = drift_coefficient(k, h);
    Ok(QuadratureTable::assemble(n, k.sigma(), image_budget, base, c, true))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{PI, TAU};

    #[test]
    fn normalizing_constant_values() {
        assert!((normalizing_constant(1.0f64).unwrap() - 1.0 / PI).abs() < 1e-14);
        assert!((normalizing_constant(0.5f64).unwrap() - 0.199_471_140_2).abs() < 1e-9);
        assert!((normalizing_constant(1.5f64).unwrap() - 0.299_206_710_3).abs() < 1e-9);
        assert!(normalizing_constant(2.0f64).is_err());
        assert!(normalizing_constant(0.0f64).is_err());
    }

    #[test]
    fn omega_bar_of_tilt() {
        let c = 1.0 / PI;
        let k = KernelSpec::tilt(1.0f64, 0.5).unwrap();
        assert!((modulus_omega_bar(&k, 0.4) - 0.2 * c).abs() < 1e-12);
        assert_eq!(modulus_omega_bar(&KernelSpec::constant(1.0f64).unwrap(), 0.3), 0.0);
        let d = k.omega_bar().dini_integral();
        assert!(d.finite);
        assert!((d.value - c / 2.0).abs() < 1e-4, "{}", d.value);
    }

    #[test]
    fn log_tilt_fails_dini() {
        let k = KernelSpec::log_tilt(1.0f64, 0.5).unwrap();
        assert!(!k.omega_bar().dini_integral().finite);
        let audit = audit_ellipticity(&Coefficient::Constant(1.0), &k, AuditGrid::default());
        assert!(!audit.passed());
    }

    #[test]
    fn ellipticity_of_two_plus_cos() {
        let k = KernelSpec::constant(1.5f64).unwrap();
        let audit = audit_ellipticity(&Coefficient::TwoPlusCosY, &k, AuditGrid::default());
        assert!(audit.passed(), "{:?}", audit.failures);
        assert!((audit.a0 - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn ellipticity_failures_carry_witness() {
        let k = KernelSpec::constant(1.0f64).unwrap();
        let a = Coefficient::custom("hole", true, |x: f64, y: f64| if x == 0.5 && y == 0.25 { 0.0 } else { 1.0 });
        let audit = audit_ellipticity(&a, &k, AuditGrid::default());
        assert!(!audit.passed());
        assert_eq!(audit.a_witness, (0.5, 0.25));
        let flat = KernelSpec::custom(1.0f64, "zero_at_origin", true, |z: f64| z.abs().min(1.0)).unwrap();
        let audit = audit_ellipticity(&Coefficient::Constant(1.0), &flat, AuditGrid::default());
        assert!(audit.failures.iter().any(|f| f.contains("origin")));
    }

    #[test]
    fn drift_examples() {
        let c = 1.0 / PI;
        let b = drift_vector(&KernelSpec::tilt(1.0f64, 0.5).unwrap(), 1e-10).unwrap();
        assert!(b.converged);
        assert!((b.b - c).abs() < 1e-8);
        let q = drift_vector(&KernelSpec::quadratic_tilt(1.0f64, 0.5).unwrap(), 1e-10).unwrap();
        assert!((q.b - c / 2.0).abs() < 1e-8);
        assert_eq!(drift_vector(&KernelSpec::constant(1.0f64).unwrap(), 1e-10).unwrap().b, 0.0);
        assert!(drift_vector(&KernelSpec::constant(1.5f64).unwrap(), 1e-10).is_err());
    }

    #[test]
    fn constants_are_annihilated() {
        for &n in &[16usize, 128] {
            let t = periodized_weights(&KernelSpec::tilt(1.0f64, 0.5).unwrap(), n, 4).unwrap();
            let u = GridFunction::constant(n, 5.0).unwrap();
            assert!(t.apply(&u).unwrap().values().iter().all(|&v| v == 0.0));
            assert!(t.weights().iter().all(|&w| w >= 0.0));
        }
    }

    #[test]
    fn eigenfunction_identity() {
        for &sigma in &[0.5f64, 1.0, 1.5] {
            let k = KernelSpec::constant(sigma).unwrap();
            let t = periodized_weights(&k, 512, 8).unwrap();
            let u = GridFunction::from_fn(512, |y: f64| (TAU * y).cos()).unwrap();
            let v = t.apply(&u).unwrap();
            let lam = TAU.powf(sigma);
            let err = v
                .values()
                .iter()
                .zip(u.values())
                .map(|(a, b)| (a + lam * b).abs())
                .fold(0.0, f64::max);
            assert!(err / lam < 2e-2, "sigma {sigma}: relative error {}", err / lam);
        }
    }

    #[test]
    fn tail_mass_scales_like_n_to_sigma() {
        let k = KernelSpec::constant(1.5f64).unwrap();
        let a = periodized_weights(&k, 256, 4).unwrap().tail_mass();
        let b = periodized_weights(&k, 512, 4).unwrap().tail_mass();
        assert!((b / a - 2f64.powf(1.5)).abs() < 0.05, "{}", b / a);
    }

    #[test]
    fn fft_and_direct_paths_agree() {
        let k = KernelSpec::tilt(1.0f64, 0.5).unwrap();
        let t = periodized_weights(&k, 128, 4).unwrap();
        let u: Vec<f64> = (0..128).map(|i| ((i * i) as f64 * 0.01).sin()).collect();
        let (mut a, mut b) = (vec![0.0; 128], vec![0.0; 128]);
        t.apply_into(&u, &mut a);
        t.apply_direct(&u, &mut b);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9 * t.tail_mass());
        }
    }

    #[test]
    fn tabulated_kernel_matches_constant() {
        let c = normalizing_constant(1.0f64).unwrap();
        let k = KernelSpec::tabulated(1.0, vec![-2.0, 0.0, 2.0], vec![c, c, c], "flat.csv").unwrap();
        assert!(k.symmetric());
        assert_eq!(k.kbar(0.7), c);
        assert_eq!(format!("{k}"), "csv(flat.csv)");
    }
}
