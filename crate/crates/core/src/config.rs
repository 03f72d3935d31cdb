//! Line-oriented run configuration: `section.key = value`, `#` comments.
//!
//! Every key has an explicit default, unknown keys are rejected with the
//! nearest valid name, and all problems in a file are reported together.
//! [`RunConfig::emit`] writes a text that parses back to the same value.

use std::collections::BTreeSet;
use std::path::Path;

use crate::cell::{CellConfig, CellModel};
use crate::coefficients::Coefficient;
use crate::effective::TableAxes;
use crate::error::{Error, Result};
use crate::grid::is_power_of_two;
use crate::hamiltonians::HamiltonianSpec;
use crate::homogenize::{SweepConfig, SweepProblem};
use crate::kernels::{audit_ellipticity, AuditGrid, KernelSpec};
use crate::parabolic::{FluxChoice, InitialData, SolverConfig};

/// A value that can appear on the right of `=`.
pub trait ConfigValue: Sized {
    fn parse_value(s: &str) -> std::result::Result<Self, String>;
    fn emit_value(&self) -> String;
}

impl ConfigValue for f64 {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        let v: f64 = s.trim().parse().map_err(|_| format!("expected a number, got {s:?}"))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(format!("expected a finite number, got {s:?}"))
        }
    }

    fn emit_value(&self) -> String {
        format!("{self:e}")
    }
}

impl ConfigValue for usize {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        s.trim().parse().map_err(|_| format!("expected a nonnegative integer, got {s:?}"))
    }

    fn emit_value(&self) -> String {
        self.to_string()
    }
}

impl ConfigValue for String {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        Ok(s.trim().to_string())
    }

    fn emit_value(&self) -> String {
        self.clone()
    }
}

impl<V: ConfigValue> ConfigValue for Vec<V> {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        if s.trim().is_empty() {
            return Ok(Vec::new());
        }
        s.split(',').map(V::parse_value).collect()
    }

    fn emit_value(&self) -> String {
        self.iter().map(V::emit_value).collect::<Vec<_>>().join(", ")
    }
}

/// A number or `auto`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Auto(pub Option<f64>);

impl ConfigValue for Auto {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        if s.trim() == "auto" {
            Ok(Auto(None))
        } else {
            f64::parse_value(s).map(|v| Auto(Some(v))).map_err(|e| format!("{e} or `auto`"))
        }
    }

    fn emit_value(&self) -> String {
        match self.0 {
            Some(v) => v.emit_value(),
            None => "auto".into(),
        }
    }
}

macro_rules! sections {
    ($( $sec:ident : $ty_name:ident { $( $key:ident : $ty:ty = $def:expr, )* } )*) => {
        $(
            #[derive(Debug, Clone, PartialEq)]
            pub struct $ty_name { $( pub $key: $ty, )* }

            impl Default for $ty_name {
                fn default() -> Self {
                    Self { $( $key: $def, )* }
                }
            }
        )*

        #[derive(Debug, Clone, PartialEq, Default)]
        pub struct RunConfig { $( pub $sec: $ty_name, )* }

        impl RunConfig {
            pub const SECTIONS: &'static [&'static str] = &[$( stringify!($sec) ),*];

            pub fn keys(section: &str) -> Option<&'static [&'static str]> {
                match section {
                    $( stringify!($sec) => Some(&[$( stringify!($key) ),*]), )*
                    _ => None,
                }
            }

            fn set_raw(&mut self, section: &str, key: &str, value: &str) -> std::result::Result<(), String> {
                match (section, key) {
                    $( $( (stringify!($sec), stringify!($key)) => {
                        self.$sec.$key = <$ty as ConfigValue>::parse_value(value)?;
                        Ok(())
                    } )* )*
                    _ => Err(format!("unknown key {section}.{key}")),
                }
            }

            /// `(section.key, value)` pairs in declaration order.
            pub fn entries(&self) -> Vec<(String, String)> {
                let mut v = Vec::new();
                $( $( v.push((
                    concat!(stringify!($sec), ".", stringify!($key)).to_string(),
                    ConfigValue::emit_value(&self.$sec.$key),
                )); )* )*
                v
            }
        }
    };
}

sections! {
    kernel: KernelSection {
        sigma: f64 = 1.5,
        density: String = "constant".into(),
        slope: f64 = 0.5,
        csv_path: String = String::new(),
        image_budget: usize = 4,
    }
    coefficient_a: CoefficientSection {
        form: String = "two_plus_cos_y".into(),
    }
    hamiltonian: HamiltonianSection {
        b: String = "constant(1)".into(),
        f: String = "cos_y".into(),
        m: f64 = 2.0,
        b0: Auto = Auto(None),
        c0: Auto = Auto(None),
        structure_n: f64 = 1.0,
    }
    grid: GridSection {
        n: usize = 256,
        k: usize = 4,
        horizon: f64 = 0.2,
        initial: String = "sin".into(),
        snapshots: usize = 10,
        cfl_safety: f64 = 0.9,
        flux: String = "auto".into(),
        theta: Auto = Auto(None),
        fixed_dt: Auto = Auto(None),
    }
    cell: CellSection {
        n: usize = 256,
        delta_max: f64 = 0.1,
        delta_min: f64 = 1e-3,
        tol: f64 = 1e-10,
        max_newton: usize = 200,
        method: String = "discount".into(),
        t_max: f64 = 50.0,
        x: f64 = 0.0,
        p: f64 = 1.0,
        l: f64 = 0.0,
        table_x: Vec<f64> = vec![0.0],
        table_p: Vec<f64> = (0..=8).map(|i| 0.25 * i as f64).collect(),
        table_l: Vec<f64> = vec![-1.0, -0.5, 0.0, 0.5, 1.0],
    }
    sweep: SweepSection {
        ks: Vec<usize> = vec![4, 8, 16],
        n: usize = 1024,
        horizon: f64 = 0.2,
        initial: String = "sin".into(),
        snapshots: usize = 20,
        cell_n: usize = 128,
        corrector_stride: usize = 64,
    }
    output: OutputSection {
        dir: String = "out".into(),
    }
}

fn nearest<'a>(word: &str, candidates: impl IntoIterator<Item = &'a str>) -> Option<&'a str> {
    candidates
        .into_iter()
        .map(|c| (strsim::levenshtein(word, c), c))
        .filter(|&(d, c)| d <= 3.max(c.len() / 2))
        .min()
        .map(|(_, c)| c)
}

fn parse_initial(s: &str) -> Option<InitialData<f64>> {
    match s.trim() {
        "sin" => Some(InitialData::Sine),
        "cos" => Some(InitialData::Cosine),
        other => match Coefficient::<f64>::parse(other)? {
            Coefficient::Constant(c) => Some(InitialData::Constant(c)),
            _ => None,
        },
    }
}

impl RunConfig {
    /// Parses and validates; every problem found is listed in the error.
    pub fn parse_str(text: &str) -> Result<Self> {
        Self::parse_with_overrides(text, &[])
    }

    /// As [`RunConfig::parse_str`], then applies `section.key=value` overrides
    /// before validating.
    pub fn parse_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut errors = Vec::new();
        let mut seen = BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let lineno = i + 1;
            let Some((lhs, rhs)) = line.split_once('=') else {
                errors.push(format!("line {lineno}: expected `section.key = value`, got {line:?}"));
                continue;
            };
            if let Err(e) = cfg.apply(lhs.trim(), rhs) {
                errors.push(format!("line {lineno}: {e}"));
                continue;
            }
            if !seen.insert(lhs.trim().to_string()) {
                errors.push(format!("line {lineno}: key {} set twice", lhs.trim()));
            }
        }
        for o in overrides {
            match o.split_once('=') {
                Some((lhs, rhs)) => {
                    if let Err(e) = cfg.apply(lhs.trim(), rhs) {
                        errors.push(format!("--set {o}: {e}"));
                    }
                }
                None => errors.push(format!("--set {o}: expected section.key=value")),
            }
        }
        errors.extend(cfg.validate());
        if errors.is_empty() {
            Ok(cfg)
        } else {
            Err(Error::Config(errors))
        }
    }

    pub fn parse_file(path: &Path) -> Result<Self> {
        Self::load(Some(path), &[])
    }

    /// Defaults when `path` is `None`.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(path) => std::fs::read_to_string(path).map_err(|e| {
                std::io::Error::new(e.kind(), format!("cannot read config {}: {e}", path.display()))
            })?,
            None => String::new(),
        };
        Self::parse_with_overrides(&text, overrides)
    }

    /// Sets `section.key` from text, suggesting the nearest name for typos.
    pub fn apply(&mut self, name: &str, value: &str) -> std::result::Result<(), String> {
        let Some((section, key)) = name.split_once('.') else {
            return Err(format!("key {name:?} is not of the form section.key"));
        };
        let Some(keys) = Self::keys(section) else {
            let hint = nearest(section, Self::SECTIONS.iter().copied())
                .map(|s| format!("; did you mean section `{s}`?"))
                .unwrap_or_default();
            return Err(format!("unknown section `{section}` in key `{name}`{hint}"));
        };
        if !keys.contains(&key) {
            let hint = nearest(key, keys.iter().copied())
                .map(|k| format!("; did you mean `{section}.{k}`?"))
                .unwrap_or_default();
            return Err(format!("unknown key `{name}`{hint}"));
        }
        self.set_raw(section, key, value).map_err(|e| format!("{name}: {e}"))
    }

    /// Text that parses back to `self`.
    pub fn emit(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }

    /// `key = value` lines for CSV headers. The output section is left out so
    /// that the same run written to two places gives identical files.
    pub fn header_comments(&self) -> Vec<String> {
        self.entries()
            .into_iter()
            .filter(|(k, _)| !k.starts_with("output."))
            .map(|(k, v)| format!("{k} = {v}"))
            .collect()
    }

    /// Semantic checks, including the ellipticity audit of nonsymmetric
    /// order-one kernels.
    pub fn validate(&self) -> Vec<String> {
        let mut e = Vec::new();
        let k = &self.kernel;
        if !(k.sigma > 0.0 && k.sigma < 2.0) {
            e.push(format!("kernel.sigma must lie in (0,2), got {}", k.sigma));
        }
        if !["constant", "tilt", "quadratic_tilt", "log_tilt", "csv"].contains(&k.density.as_str()) {
            e.push(format!(
                "kernel.density must be one of constant, tilt, quadratic_tilt, log_tilt, csv; got {:?}",
                k.density
            ));
        }
        if k.density == "csv" && k.csv_path.is_empty() {
            e.push("kernel.csv_path is required when kernel.density = csv".into());
        }
        if k.image_budget == 0 {
            e.push("kernel.image_budget must be at least 1".into());
        }
        let a = Coefficient::<f64>::parse(&self.coefficient_a.form);
        if a.is_none() {
            e.push(format!("coefficient_a.form: unknown coefficient {:?}", self.coefficient_a.form));
        }
        let h = &self.hamiltonian;
        for (name, v) in [("hamiltonian.b", &h.b), ("hamiltonian.f", &h.f)] {
            if Coefficient::<f64>::parse(v).is_none() {
                e.push(format!("{name}: unknown coefficient {v:?}"));
            }
        }
        if !(h.m > 1.0) {
            e.push(format!("hamiltonian.m must exceed 1, got {}", h.m));
        }
        if !(h.structure_n > 0.0) {
            e.push(format!("hamiltonian.structure_n must be positive, got {}", h.structure_n));
        }
        let g = &self.grid;
        let pow2 = |name: &str, n: usize, e: &mut Vec<String>| {
            if n < 8 || !is_power_of_two(n) {
                e.push(format!("{name} must be a power of two >= 8, got {n}"));
            }
        };
        pow2("grid.n", g.n, &mut e);
        if g.k > 0 && g.n < 16 * g.k {
            e.push(format!("grid.n = {} does not resolve eps = 1/{}; need n >= {}", g.n, g.k, 16 * g.k));
        }
        if !(g.horizon > 0.0) {
            e.push(format!("grid.horizon must be positive, got {}", g.horizon));
        }
        if parse_initial(&g.initial).is_none() {
            e.push(format!("grid.initial must be sin, cos or constant(c); got {:?}", g.initial));
        }
        if g.snapshots == 0 {
            e.push("grid.snapshots must be at least 1".into());
        }
        if !(g.cfl_safety > 0.0 && g.cfl_safety <= 1.0) {
            e.push(format!("grid.cfl_safety must lie in (0,1], got {}", g.cfl_safety));
        }
        match g.flux.as_str() {
            "auto" | "godunov" => {}
            "lax_friedrichs" => {
                if g.theta.0.is_none_or(|t| !(t > 0.0)) {
                    e.push("grid.theta must be a positive number for lax_friedrichs".into());
                }
            }
            other => e.push(format!("grid.flux must be auto, godunov or lax_friedrichs; got {other:?}")),
        }
        if let Some(dt) = g.fixed_dt.0 {
            if !(dt > 0.0) {
                e.push(format!("grid.fixed_dt must be positive or auto, got {dt}"));
            }
        }
        let c = &self.cell;
        pow2("cell.n", c.n, &mut e);
        if !(c.delta_min > 0.0 && c.delta_min <= c.delta_max) {
            e.push(format!(
                "cell deltas need 0 < delta_min <= delta_max, got {} and {}",
                c.delta_min, c.delta_max
            ));
        }
        if !(c.tol > 0.0) {
            e.push(format!("cell.tol must be positive, got {}", c.tol));
        }
        if !["discount", "long_time"].contains(&c.method.as_str()) {
            e.push(format!("cell.method must be discount or long_time, got {:?}", c.method));
        }
        if !(c.t_max > 0.0) {
            e.push(format!("cell.t_max must be positive, got {}", c.t_max));
        }
        for (name, axis) in [("cell.table_x", &c.table_x), ("cell.table_p", &c.table_p), ("cell.table_l", &c.table_l)] {
            if axis.is_empty() || axis.windows(2).any(|w| !(w[1] > w[0])) {
                e.push(format!("{name} must be a nonempty increasing list"));
            }
        }
        let s = &self.sweep;
        if s.ks.is_empty() || s.ks[0] == 0 || s.ks.windows(2).any(|w| w[1] <= w[0]) {
            e.push("sweep.ks must be an increasing list of positive integers".into());
        }
        pow2("sweep.n", s.n, &mut e);
        pow2("sweep.cell_n", s.cell_n, &mut e);
        if !(s.horizon > 0.0) {
            e.push(format!("sweep.horizon must be positive, got {}", s.horizon));
        }
        if parse_initial(&s.initial).is_none() {
            e.push(format!("sweep.initial must be sin, cos or constant(c); got {:?}", s.initial));
        }
        if s.snapshots == 0 || s.corrector_stride == 0 {
            e.push("sweep.snapshots and sweep.corrector_stride must be at least 1".into());
        }
        if self.output.dir.is_empty() {
            e.push("output.dir must not be empty".into());
        }
        if e.is_empty() && self.kernel.sigma == 1.0 {
            match (self.kernel_spec(), a) {
                (Ok(kernel), Some(a)) if !kernel.symmetric() => {
                    let audit = audit_ellipticity(&a, &kernel, AuditGrid::default());
                    if !audit.passed() {
                        e.push(format!(
                            "kernel: ellipticity audit failed for the order-one nonsymmetric kernel: {}",
                            audit.failures.join("; ")
                        ));
                    }
                }
                (Err(err), _) => e.push(format!("kernel: {err}")),
                _ => {}
            }
        }
        e
    }

    pub fn kernel_spec(&self) -> Result<KernelSpec<f64>> {
        let k = &self.kernel;
        match k.density.as_str() {
            "constant" => KernelSpec::constant(k.sigma),
            "tilt" => KernelSpec::tilt(k.sigma, k.slope),
            "quadratic_tilt" => KernelSpec::quadratic_tilt(k.sigma, k.slope),
            "log_tilt" => KernelSpec::log_tilt(k.sigma, k.slope),
            "csv" => {
                let text = std::fs::read_to_string(&k.csv_path)?;
                let (z, v) = parse_kernel_csv(&text)?;
                KernelSpec::tabulated(k.sigma, z, v, &k.csv_path)
            }
            other => Err(Error::Domain(format!("unknown kernel density {other:?}"))),
        }
    }

    pub fn coefficient_a(&self) -> Result<Coefficient<f64>> {
        Coefficient::parse(&self.coefficient_a.form)
            .ok_or_else(|| Error::Domain(format!("unknown coefficient {:?}", self.coefficient_a.form)))
    }

    pub fn hamiltonian_spec(&self) -> Result<HamiltonianSpec<f64>> {
        let h = &self.hamiltonian;
        let coef = |s: &str| Coefficient::parse(s).ok_or_else(|| Error::Domain(format!("unknown coefficient {s:?}")));
        let mut spec = HamiltonianSpec::power_law(coef(&h.b)?, coef(&h.f)?, h.m)?;
        if let Some(b0) = h.b0.0 {
            spec.b0 = b0;
        }
        if let Some(c0) = h.c0.0 {
            spec.c0 = c0;
        }
        Ok(spec)
    }

    pub fn initial_data(&self, sweep: bool) -> Result<InitialData<f64>> {
        let s = if sweep { &self.sweep.initial } else { &self.grid.initial };
        parse_initial(s).ok_or_else(|| Error::Domain(format!("unknown initial data {s:?}")))
    }

    pub fn solver_config(&self) -> SolverConfig<f64> {
        let g = &self.grid;
        SolverConfig {
            n: g.n,
            cfl_safety: g.cfl_safety,
            flux: match g.flux.as_str() {
                "godunov" => FluxChoice::Godunov,
                "lax_friedrichs" => FluxChoice::LaxFriedrichs(g.theta.0.unwrap_or(1.0)),
                _ => FluxChoice::Auto,
            },
            snapshots: g.snapshots,
            fixed_dt: g.fixed_dt.0,
            image_budget: self.kernel.image_budget,
            ..SolverConfig::default()
        }
    }

    pub fn deltas(&self) -> Vec<f64> {
        let mut v = Vec::new();
        let mut d = self.cell.delta_max;
        while d > self.cell.delta_min {
            v.push(d);
            d *= 0.5;
        }
        v.push(self.cell.delta_min);
        v
    }

    pub fn cell_config(&self) -> CellConfig<f64> {
        CellConfig {
            n: self.cell.n,
            deltas: self.deltas(),
            tol: self.cell.tol,
            max_newton: self.cell.max_newton,
            image_budget: self.kernel.image_budget,
        }
    }

    pub fn cell_model(&self) -> Result<CellModel<f64>> {
        CellModel::new(self.coefficient_a()?, self.hamiltonian_spec()?, &self.kernel_spec()?)
    }

    pub fn table_axes(&self) -> TableAxes<f64> {
        TableAxes {
            x: self.cell.table_x.clone(),
            p: self.cell.table_p.clone(),
            l: self.cell.table_l.clone(),
        }
    }

    pub fn sweep_problem(&self) -> Result<SweepProblem<f64>> {
        Ok(SweepProblem {
            a: self.coefficient_a()?,
            hamiltonian: self.hamiltonian_spec()?,
            kernel: self.kernel_spec()?,
            u0: self.initial_data(true)?,
            horizon: self.sweep.horizon,
        })
    }

    pub fn sweep_config(&self) -> SweepConfig<f64> {
        let base = SweepConfig::<f64>::default();
        SweepConfig {
            n: self.sweep.n,
            ks: self.sweep.ks.clone(),
            solver: SolverConfig {
                snapshots: self.sweep.snapshots,
                ..self.solver_config()
            },
            cell: CellConfig {
                n: self.sweep.cell_n,
                ..self.cell_config()
            },
            corrector_stride: self.sweep.corrector_stride,
            ..base
        }
    }
}

/// Two-column `z,k` file with a header row.
pub fn parse_kernel_csv(text: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut z = Vec::new();
    let mut k = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#')) {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 2 {
            return Err(Error::Domain(format!("kernel csv line {}: expected 2 fields", i + 1)));
        }
        match (f[0].parse::<f64>(), f[1].parse::<f64>()) {
            (Ok(a), Ok(b)) => {
                z.push(a);
                k.push(b);
            }
            _ if z.is_empty() && k.is_empty() && i == 0 => continue,
            _ => return Err(Error::Domain(format!("kernel csv line {}: not numeric", i + 1))),
        }
    }
    Ok((z, k))
}
