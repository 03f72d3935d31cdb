//! Effective Hamiltonian `H̄(x, p, l)`: the closed form for σ > 1, tables built
//! from cell solves, property audits, and the per-node flux used by the
//! effective parabolic problem.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::cell::{long_time_average, vanishing_discount_sweep, CellConfig, CellModel, CellParams, Regime};
use crate::coefficients::Coefficient;
use crate::error::{Error, Result};
use crate::hamiltonians::{godunov_power, lax_friedrichs, FluxValue, HamiltonianKind, HamiltonianSpec};
use crate::quad::{integrate, periodic_trapezoid};
use crate::scalar::Real;

/// Nodes of the periodic trapezoid rule in the fast variable.
pub const FORMULA_NODES: usize = 1024;

/// `H̄(x, p, l) = A(x)(∫H(x,y,p)/a(x,y) dy − l)` with `A = (∫1/a)^{-1}`.
#[derive(Debug, Clone)]
pub struct FormulaAboveOne<T> {
    pub a: Coefficient<T>,
    pub hamiltonian: HamiltonianSpec<T>,
    pub nodes: usize,
}

impl<T: Real> FormulaAboveOne<T> {
    pub fn new(a: Coefficient<T>, hamiltonian: HamiltonianSpec<T>) -> Result<Self> {
        let (lo, _) = a.range(256);
        if !(lo > T::zero()) {
            return Err(Error::Domain(format!("a must be positive, sampled minimum {lo}")));
        }
        Ok(Self {
            a,
            hamiltonian,
            nodes: FORMULA_NODES,
        })
    }

    /// Harmonic mean `A(x)` of `a(x, ·)`.
    pub fn weight(&self, x: T) -> T {
        T::one() / periodic_trapezoid(|y| T::one() / self.a.eval(x, y), self.nodes)
    }

    pub fn value(&self, x: T, p: T, l: T) -> T {
        let avg = periodic_trapezoid(|y| self.hamiltonian.eval(x, y, p) / self.a.eval(x, y), self.nodes);
        self.weight(x) * (avg - l)
    }

    /// `(A, A∫b/a, A∫f/a)` when `H` is a power law, so that
    /// `H̄ = c1|p|^m − c0 − A l`.
    fn power_coefficients(&self, x: T) -> Option<(T, T, T)> {
        match &self.hamiltonian.kind {
            HamiltonianKind::PowerLaw { b, f } => {
                let w = self.weight(x);
                let cb = periodic_trapezoid(|y| b.eval(x, y) / self.a.eval(x, y), self.nodes);
                let cf = periodic_trapezoid(|y| f.eval(x, y) / self.a.eval(x, y), self.nodes);
                Some((w, w * cb, w * cf))
            }
            HamiltonianKind::Custom { .. } => None,
        }
    }
}

pub fn explicit_formula_above_one<T: Real>(a: &Coefficient<T>, h: &HamiltonianSpec<T>, x: T, p: T, l: T) -> Result<T> {
    Ok(FormulaAboveOne::new(a.clone(), h.clone())?.value(x, p, l))
}

/// `H̄(p)` for `H = |p|² − cos(2πy)`, `a = 1`, `l = 0`, σ < 1: equal to 1 on
/// `|p| ≤ 2√2/π`, otherwise the root `c` of `∫√(c + cos 2πy) dy = |p|`.
pub fn eikonal_oracle<T: Real>(p: T) -> T {
    let p = p.abs();
    let threshold = T::c(2.0) * T::c(2.0).sqrt() / T::PI();
    if p <= threshold {
        return T::one();
    }
    let mean_root = |c: T| {
        integrate(
            |y: T| (c + (T::two_pi() * y).cos()).max(T::zero()).sqrt(),
            T::zero(),
            T::one(),
            T::c(1e-13),
            T::c(1e-13),
        )
        .value
    };
    let (mut lo, mut hi) = (T::one(), p * p + T::c(2.0));
    for _ in 0..200 {
        let mid = T::c(0.5) * (lo + hi);
        if mean_root(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= T::epsilon() * hi {
            break;
        }
    }
    T::c(0.5) * (lo + hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Formula,
    Discount,
    LongTime,
    Failed,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Formula => "formula",
            Provenance::Discount => "discount",
            Provenance::LongTime => "long_time",
            Provenance::Failed => "failed",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "formula" => Provenance::Formula,
            "discount" => Provenance::Discount,
            "long_time" => Provenance::LongTime,
            "failed" => Provenance::Failed,
            _ => return None,
        })
    }
}

/// Axes of a table.
#[derive(Debug, Clone, PartialEq)]
pub struct TableAxes<T> {
    pub x: Vec<T>,
    pub p: Vec<T>,
    pub l: Vec<T>,
}

impl<T: Real> Default for TableAxes<T> {
    fn default() -> Self {
        Self {
            x: vec![T::zero()],
            p: (0..=8).map(|i| T::c(0.25 * i as f64)).collect(),
            l: [-1.0, -0.5, 0.0, 0.5, 1.0].iter().map(|&v| T::c(v)).collect(),
        }
    }
}

impl<T: Real> TableAxes<T> {
    fn validate(&self) -> Result<()> {
        for (name, axis) in [("x", &self.x), ("p", &self.p), ("l", &self.l)] {
            if axis.is_empty() {
                return Err(Error::Domain(format!("{name} axis is empty")));
            }
            if axis.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::Domain(format!("{name} axis must increase strictly")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.x.len() * self.p.len() * self.l.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn points(&self) -> Vec<CellParams<T>> {
        let mut v = Vec::with_capacity(self.len());
        for &x in &self.x {
            for &p in &self.p {
                for &l in &self.l {
                    v.push(CellParams { x, p, l });
                }
            }
        }
        v
    }
}

/// `H̄` on a product grid in `(x, p, l)`, stored with `l` fastest.
/// A single `x` node means the data do not depend on `x`.
#[derive(Debug, Clone)]
pub struct EffectiveTable<T> {
    pub axes: TableAxes<T>,
    pub values: Vec<T>,
    pub errors: Vec<T>,
    pub provenance: Vec<Provenance>,
}

/// How table entries are computed.
#[derive(Debug, Clone)]
pub enum TableSource<T> {
    Formula(FormulaAboveOne<T>),
    Discount { model: CellModel<T>, cfg: CellConfig<T> },
    LongTime { model: CellModel<T>, n: usize, t_max: T, image_budget: usize },
}

impl<T: Real> TableSource<T> {
    /// The source a model calls for: closed form above one, discount otherwise.
    pub fn for_model(model: CellModel<T>, cfg: CellConfig<T>) -> Result<Self> {
        if model.regime() == Regime::AboveOne {
            Ok(TableSource::Formula(FormulaAboveOne::new(model.a, model.hamiltonian)?))
        } else {
            Ok(TableSource::Discount { model, cfg })
        }
    }
}

/// Fills a table in parallel. Entries whose solve fails are kept with
/// provenance `failed` and value NaN; `failures` lists them.
pub fn tabulate<T: Real>(source: &TableSource<T>, axes: TableAxes<T>) -> Result<(EffectiveTable<T>, Vec<String>)> {
    axes.validate()?;
    let points = axes.points();
    let results: Vec<Result<(T, T, Provenance)>> = points
        .par_iter()
        .map(|&c| match source {
            TableSource::Formula(f) => Ok((f.value(c.x, c.p, c.l), T::zero(), Provenance::Formula)),
            TableSource::Discount { model, cfg } => {
                let s = vanishing_discount_sweep(model, c, cfg)?;
                Ok((s.h_bar, T::c(0.5) * s.spread, Provenance::Discount))
            }
            TableSource::LongTime {
                model,
                n,
                t_max,
                image_budget,
            } => {
                let e = long_time_average(model, c, *n, *t_max, *image_budget)?;
                Ok((e.h_bar, e.error, Provenance::LongTime))
            }
        })
        .collect();
    let mut values = Vec::with_capacity(points.len());
    let mut errors = Vec::with_capacity(points.len());
    let mut provenance = Vec::with_capacity(points.len());
    let mut failures = Vec::new();
    for (c, r) in points.iter().zip(results) {
        match r {
            Ok((v, e, pr)) => {
                values.push(v);
                errors.push(e);
                provenance.push(pr);
            }
            Err(err) => {
                failures.push(format!("x = {}, p = {}, l = {}: {err}", c.x, c.p, c.l));
                values.push(T::nan());
                errors.push(T::nan());
                provenance.push(Provenance::Failed);
            }
        }
    }
    Ok((
        EffectiveTable {
            axes,
            values,
            errors,
            provenance,
        },
        failures,
    ))
}

/// Bracket of `v` on `axis`: `(i, weight of i+1)`.
fn bracket<T: Real>(axis: &[T], v: T) -> Option<(usize, T)> {
    let n = axis.len();
    if n == 1 {
        return (v == axis[0]).then_some((0, T::zero()));
    }
    let span = axis[n - 1] - axis[0];
    let slack = T::c(1e-12) * span;
    if v < axis[0] - slack || v > axis[n - 1] + slack {
        return None;
    }
    let v = v.max(axis[0]).min(axis[n - 1]);
    let i = match axis.iter().position(|&a| a > v) {
        Some(0) => 0,
        Some(j) => j - 1,
        None => n - 2,
    };
    let i = i.min(n - 2);
    Some((i, (v - axis[i]) / (axis[i + 1] - axis[i])))
}

impl<T: Real> EffectiveTable<T> {
    #[inline]
    fn index(&self, ix: usize, ip: usize, il: usize) -> usize {
        (ix * self.axes.p.len() + ip) * self.axes.l.len() + il
    }

    pub fn get(&self, ix: usize, ip: usize, il: usize) -> T {
        self.values[self.index(ix, ip, il)]
    }

    /// Multilinear interpolation.
    pub fn query(&self, x: T, p: T, l: T) -> Result<T> {
        let hull = || Error::OutOfHull {
            x: x.to_f64_lossy(),
            p: p.to_f64_lossy(),
            l: l.to_f64_lossy(),
        };
        let bx = if self.axes.x.len() == 1 { Some((0, T::zero())) } else { bracket(&self.axes.x, x) };
        let (ix, wx) = bx.ok_or_else(hull)?;
        let (ip, wp) = bracket(&self.axes.p, p).ok_or_else(hull)?;
        let (il, wl) = bracket(&self.axes.l, l).ok_or_else(hull)?;
        let mut acc = T::zero();
        for (dx, fx) in [(0, T::one() - wx), (1, wx)] {
            if fx == T::zero() {
                continue;
            }
            for (dp, fp) in [(0, T::one() - wp), (1, wp)] {
                if fp == T::zero() {
                    continue;
                }
                for (dl, fl) in [(0, T::one() - wl), (1, wl)] {
                    if fl == T::zero() {
                        continue;
                    }
                    let k = self.index(ix + dx, ip + dp, il + dl);
                    if self.provenance[k] == Provenance::Failed {
                        return Err(Error::Domain(format!(
                            "table entry at x = {}, p = {}, l = {} failed to compute",
                            self.axes.x[ix + dx],
                            self.axes.p[ip + dp],
                            self.axes.l[il + dl]
                        )));
                    }
                    acc = acc + fx * fp * fl * self.values[k];
                }
            }
        }
        Ok(acc)
    }

    fn axis_slope(&self, axis: usize) -> T {
        let (nx, np, nl) = (self.axes.x.len(), self.axes.p.len(), self.axes.l.len());
        let mut best = T::zero();
        for ix in 0..nx {
            for ip in 0..np {
                for il in 0..nl {
                    let (jx, jp, jl, step) = match axis {
                        0 if ix + 1 < nx => (ix + 1, ip, il, self.axes.x[ix + 1] - self.axes.x[ix]),
                        1 if ip + 1 < np => (ix, ip + 1, il, self.axes.p[ip + 1] - self.axes.p[ip]),
                        2 if il + 1 < nl => (ix, ip, il + 1, self.axes.l[il + 1] - self.axes.l[il]),
                        _ => continue,
                    };
                    let d = (self.get(jx, jp, jl) - self.get(ix, ip, il)).abs() / step;
                    if d.is_finite() {
                        best = best.max(d);
                    }
                }
            }
        }
        best
    }

    /// Largest node-to-node slope in `p`; the exact Lipschitz constant in `p` of the interpolant.
    pub fn p_slope_sup(&self) -> T {
        self.axis_slope(1)
    }

    pub fn l_slope_sup(&self) -> T {
        self.axis_slope(2)
    }

    pub fn x_slope_sup(&self) -> T {
        self.axis_slope(0)
    }

    pub fn to_csv(&self, header_comments: &[String]) -> String {
        let mut s = String::new();
        for c in header_comments {
            let _ = writeln!(s, "# {c}");
        }
        s.push_str("x,p,l,H_bar,err,provenance\n");
        for (ix, &x) in self.axes.x.iter().enumerate() {
            for (ip, &p) in self.axes.p.iter().enumerate() {
                for (il, &l) in self.axes.l.iter().enumerate() {
                    let k = self.index(ix, ip, il);
                    let _ = writeln!(
                        s,
                        "{x:e},{p:e},{l:e},{:e},{:e},{}",
                        self.values[k],
                        self.errors[k],
                        self.provenance[k].as_str()
                    );
                }
            }
        }
        s
    }

    pub fn save_csv(&self, path: &Path, header_comments: &[String]) -> Result<()> {
        std::fs::write(path, self.to_csv(header_comments))?;
        Ok(())
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        let mut header_seen = false;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !header_seen {
                if line != "x,p,l,H_bar,err,provenance" {
                    return Err(Error::Domain(format!("line {}: unexpected header {line:?}", lineno + 1)));
                }
                header_seen = true;
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(Error::Domain(format!("line {}: expected 6 fields, got {}", lineno + 1, f.len())));
            }
            let num = |s: &str| -> Result<T> {
                s.trim()
                    .parse::<f64>()
                    .map(T::c)
                    .map_err(|e| Error::Domain(format!("line {}: {s:?}: {e}", lineno + 1)))
            };
            let prov = Provenance::parse(f[5].trim())
                .ok_or_else(|| Error::Domain(format!("line {}: unknown provenance {:?}", lineno + 1, f[5])))?;
            rows.push((num(f[0])?, num(f[1])?, num(f[2])?, num(f[3])?, num(f[4])?, prov));
        }
        if rows.is_empty() {
            return Err(Error::Domain("table has no rows".into()));
        }
        let axis = |sel: fn(&(T, T, T, T, T, Provenance)) -> T| {
            let mut v: Vec<T> = rows.iter().map(sel).collect();
            v.sort_by(|a, b| a.partial_cmp(b).expect("finite axis values"));
            v.dedup();
            v
        };
        let axes = TableAxes {
            x: axis(|r| r.0),
            p: axis(|r| r.1),
            l: axis(|r| r.2),
        };
        if axes.len() != rows.len() {
            return Err(Error::Domain(format!(
                "rows do not form a product grid: {} rows for {} x {} x {} axes",
                rows.len(),
                axes.x.len(),
                axes.p.len(),
                axes.l.len()
            )));
        }
        let mut table = EffectiveTable {
            values: vec![T::nan(); axes.len()],
            errors: vec![T::nan(); axes.len()],
            provenance: vec![Provenance::Failed; axes.len()],
            axes,
        };
        for r in rows {
            let find = |axis: &[T], v: T| axis.iter().position(|&a| a == v).expect("value taken from axis");
            let k = table.index(find(&table.axes.x, r.0), find(&table.axes.p, r.1), find(&table.axes.l, r.2));
            table.values[k] = r.3;
            table.errors[k] = r.4;
            table.provenance[k] = r.5;
        }
        Ok(table)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }
}

/// Claims checked by [`audit_properties`].
#[derive(Debug, Clone, Copy)]
pub struct PropertyClaims<T> {
    /// `sup a`, the claimed Lipschitz constant in `l`.
    pub a_sup: T,
    /// `(b0', C')` with `H̄ ≥ b0'|p|^m − C' − sup a·|l|`.
    pub coercivity: Option<(T, T)>,
    pub m: T,
}

#[derive(Debug, Clone)]
pub struct PropertyAudit<T> {
    pub l_slope: T,
    pub p_slope: T,
    pub x_slope: T,
    pub violations: Vec<String>,
}

impl<T: Real> PropertyAudit<T> {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Monotonicity and Lipschitz bound in `l`, and coercivity in `p` up to the
/// `sup a·|l|` shift, each allowing for the per-entry error bars.
pub fn audit_properties<T: Real>(table: &EffectiveTable<T>, claims: &PropertyClaims<T>) -> PropertyAudit<T> {
    let ax = &table.axes;
    let mut violations = Vec::new();
    let slack = T::c(1e-9);
    for ix in 0..ax.x.len() {
        for ip in 0..ax.p.len() {
            for il in 0..ax.l.len() {
                let k = table.index(ix, ip, il);
                if table.provenance[k] == Provenance::Failed {
                    violations.push(format!("entry x = {}, p = {}, l = {} is missing", ax.x[ix], ax.p[ip], ax.l[il]));
                    continue;
                }
                if il + 1 < ax.l.len() {
                    let j = table.index(ix, ip, il + 1);
                    let (v0, v1) = (table.values[k], table.values[j]);
                    let err = table.errors[k] + table.errors[j] + slack;
                    let dl = ax.l[il + 1] - ax.l[il];
                    if v1 > v0 + err {
                        violations.push(format!(
                            "increasing in l at x = {}, p = {}: H({}) = {v0:e} < H({}) = {v1:e}",
                            ax.x[ix],
                            ax.p[ip],
                            ax.l[il],
                            ax.l[il + 1]
                        ));
                    }
                    if (v0 - v1).abs() > claims.a_sup * dl + err {
                        violations.push(format!(
                            "slope in l {:e} exceeds sup a = {:e} at x = {}, p = {}, l = {}",
                            (v0 - v1).abs() / dl,
                            claims.a_sup,
                            ax.x[ix],
                            ax.p[ip],
                            ax.l[il]
                        ));
                    }
                }
                if let Some((b, c)) = claims.coercivity {
                    let floor = b * ax.p[ip].abs().powf(claims.m) - c - claims.a_sup * ax.l[il].abs();
                    if table.values[k] + table.errors[k] + slack < floor {
                        violations.push(format!(
                            "coercivity fails at x = {}, p = {}, l = {}: {:e} < {floor:e}",
                            ax.x[ix], ax.p[ip], ax.l[il], table.values[k]
                        ));
                    }
                }
            }
        }
    }
    PropertyAudit {
        l_slope: table.l_slope_sup(),
        p_slope: table.p_slope_sup(),
        x_slope: table.x_slope_sup(),
        violations,
    }
}

/// Effective Hamiltonian driving the homogenized equation.
#[derive(Debug, Clone)]
pub enum EffectiveSource<T> {
    Formula(FormulaAboveOne<T>),
    Table(EffectiveTable<T>),
}

enum Prepared<T> {
    Power { weight: Vec<T>, c1: Vec<T>, c0: Vec<T>, m: T },
    Formula { formula: FormulaAboveOne<T>, weight: Vec<T> },
    Table { table: EffectiveTable<T>, theta: T, l_slope: T },
}

/// [`EffectiveSource`] with per-node data cached on a grid.
pub struct PreparedEffective<T> {
    x: Vec<T>,
    inner: Prepared<T>,
}

impl<T: Real> EffectiveSource<T> {
    pub fn prepare(&self, x: &[T]) -> Result<PreparedEffective<T>> {
        let inner = match self {
            EffectiveSource::Formula(f) => {
                if f.power_coefficients(T::zero()).is_some_and(|(_, c1, _)| c1 >= T::zero()) {
                    let mut weight = Vec::with_capacity(x.len());
                    let mut c1 = Vec::with_capacity(x.len());
                    let mut c0 = Vec::with_capacity(x.len());
                    let same = !f.a.depends_on_x()
                        && matches!(&f.hamiltonian.kind, HamiltonianKind::PowerLaw { b, f } if !b.depends_on_x() && !f.depends_on_x());
                    let first = f.power_coefficients(x[0]).expect("power law");
                    for &xi in x {
                        let (w, a1, a0) = if same { first } else { f.power_coefficients(xi).expect("power law") };
                        if a1 < T::zero() {
                            return Err(Error::Domain("effective coefficient of |p|^m is negative".into()));
                        }
                        weight.push(w);
                        c1.push(a1);
                        c0.push(a0);
                    }
                    Prepared::Power {
                        weight,
                        c1,
                        c0,
                        m: f.hamiltonian.m,
                    }
                } else {
                    Prepared::Formula {
                        formula: f.clone(),
                        weight: x.iter().map(|&xi| f.weight(xi)).collect(),
                    }
                }
            }
            EffectiveSource::Table(t) => {
                if t.provenance.contains(&Provenance::Failed) {
                    return Err(Error::Domain("effective table has failed entries".into()));
                }
                Prepared::Table {
                    table: t.clone(),
                    theta: t.p_slope_sup(),
                    l_slope: t.l_slope_sup(),
                }
            }
        };
        Ok(PreparedEffective { x: x.to_vec(), inner })
    }
}

impl<T: Real> PreparedEffective<T> {
    /// Monotone numerical `H̄` at node `i` and `∂H̄/∂l` (a bound for tables).
    pub fn flux(&self, i: usize, qm: T, qp: T, l: T) -> Result<(FluxValue<T>, T)> {
        let x = self.x[i];
        match &self.inner {
            Prepared::Power { weight, c1, c0, m } => {
                let mut f = godunov_power(c1[i], *m, qm, qp);
                f.value = f.value - c0[i] - weight[i] * l;
                Ok((f, -weight[i]))
            }
            Prepared::Formula { formula, weight } => {
                let h = |q: T| {
                    let eta = T::c(1e-6) * (T::one() + q.abs());
                    let v = formula.value(x, q, l);
                    let dv = (formula.value(x, q + eta, l) - formula.value(x, q - eta, l)) / (eta + eta);
                    (v, dv)
                };
                let r = qm.abs().max(qp.abs());
                let theta = h(r).1.abs().max(h(-r).1.abs());
                Ok((lax_friedrichs(h, theta, qm, qp), -weight[i]))
            }
            Prepared::Table { table, theta, l_slope } => {
                let qbar = T::c(0.5) * (qm + qp);
                let v = table.query(x, qbar, l)?;
                let half = T::c(0.5);
                let value = v - half * *theta * (qp - qm);
                Ok((
                    FluxValue {
                        value,
                        d_minus: half * *theta,
                        d_plus: -half * *theta,
                    },
                    -*l_slope,
                ))
            }
        }
    }
}
