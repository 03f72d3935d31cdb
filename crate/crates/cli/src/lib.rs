//! Command dispatch for the `nlhj` binary.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use nlhj::cell::{long_time_average, vanishing_discount_sweep, CellParams, Regime};
use nlhj::config::RunConfig;
use nlhj::effective::{audit_properties, tabulate, EffectiveSource, FormulaAboveOne, PropertyClaims, TableSource};
use nlhj::hamiltonians::{
    audit_regularity, audit_superlinearity, coercivity_constants, endpoint_bounds_exact, growth_bound,
    small_gradient_deficit, SampleBudget,
};
use nlhj::homogenize::{convergence_rates, run_sweep};
use nlhj::kernels::{audit_ellipticity, drift_vector, AuditGrid};
use nlhj::parabolic::{holder_exponent_alpha0, solve, ParabolicProblem, ProblemKind};
use nlhj::{csv, Error};

#[derive(Debug, Parser)]
#[command(name = "nlhj", version, about = "Periodic homogenization of nonlocal Hamilton-Jacobi equations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Configuration file; defaults are used when absent.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, overriding `output.dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Run even when an assumption audit fails.
    #[arg(long, global = true)]
    pub force: bool,
    /// Worker threads; affects speed only.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// `section.key=value` override, repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Run every assumption audit.
    Audit,
    /// Print the order-one drift.
    Drift,
    /// Solve one cell problem at `cell.x, cell.p, cell.l`.
    Cell,
    /// Tabulate the effective Hamiltonian.
    Effective,
    /// Run one parabolic problem (`grid.k = 0` selects the homogenized one).
    Solve,
    /// Run the convergence sweep over `sweep.ks`.
    Homogenize,
    /// Print the Hölder exponent and coercivity constants.
    Constants,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Audit => "audit",
            Command::Drift => "drift",
            Command::Cell => "cell",
            Command::Effective => "effective",
            Command::Solve => "solve",
            Command::Homogenize => "homogenize",
            Command::Constants => "constants",
        }
    }

    fn gated(self) -> bool {
        matches!(self, Command::Cell | Command::Effective | Command::Solve | Command::Homogenize)
    }
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config(_) | Error::Audit(_) | Error::Domain(_) => EXIT_VALIDATION,
            Error::Io(_) => EXIT_IO,
            _ => EXIT_NUMERICAL,
        };
        CliError::new(code, e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::new(EXIT_IO, e.to_string())
    }
}

type CliResult = std::result::Result<(), CliError>;

/// Loads the configuration and runs the command, writing the report to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> CliResult {
    let mut cfg = RunConfig::load(cli.config.as_deref(), &cli.sets)?;
    if let Some(dir) = &cli.out {
        cfg.output.dir = dir.to_string_lossy().into_owned();
    }
    dispatch(cli.command, &cfg, cli.force, out)
}

pub fn dispatch(command: Command, cfg: &RunConfig, force: bool, out: &mut dyn Write) -> CliResult {
    if command.gated() {
        let failures = audit(cfg, &mut std::io::sink())?;
        if !failures.is_empty() {
            if !force {
                return Err(CliError::new(
                    EXIT_VALIDATION,
                    format!("assumption audit failed (use --force to run anyway):\n{}", failures.join("\n")),
                ));
            }
            writeln!(out, "warning: running despite failed audits: {}", failures.join("; "))?;
        }
    }
    match command {
        Command::Audit => {
            let failures = audit(cfg, out)?;
            if failures.is_empty() {
                writeln!(out, "all audits passed")?;
                Ok(())
            } else {
                Err(CliError::new(EXIT_VALIDATION, format!("audit failed:\n{}", failures.join("\n"))))
            }
        }
        Command::Drift => drift(cfg, out),
        Command::Cell => cell(cfg, out),
        Command::Effective => effective(cfg, out),
        Command::Solve => solve_one(cfg, out),
        Command::Homogenize => homogenize(cfg, out),
        Command::Constants => constants(cfg, out),
    }
}

fn output_path(cfg: &RunConfig, name: &str) -> std::result::Result<PathBuf, CliError> {
    let dir = Path::new(&cfg.output.dir);
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::new(EXIT_IO, format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir.join(name))
}

fn headers(cfg: &RunConfig, command: Command) -> Vec<String> {
    let mut h = vec![format!("command = {}", command.name())];
    h.extend(cfg.header_comments());
    h
}


/// Writes one line per audit and returns the failures.
fn audit(cfg: &RunConfig, out: &mut dyn Write) -> std::result::Result<Vec<String>, CliError> {
    let mut failures = Vec::new();
    let a = cfg.coefficient_a()?;
    let kernel = cfg.kernel_spec()?;
    let h = cfg.hamiltonian_spec()?;

    let ell = audit_ellipticity(&a, &kernel, AuditGrid::default());
    writeln!(
        out,
        "ellipticity: a0 = {:e}, a in [{:e}, {:e}], kbar in [{:e}, {:e}], kbar(0) = {:e} (C = {:e}){}",
        ell.a0,
        ell.a_min,
        ell.a_max,
        ell.kbar_min,
        ell.kbar_sup,
        ell.kbar_at_zero,
        ell.normalizing_constant,
        ell.dini.as_ref().map(|d| format!(", dini integral {:e}", d.value)).unwrap_or_default()
    )?;
    failures.extend(ell.failures.iter().map(|f| format!("ellipticity: {f}")));

    let b = SampleBudget::default();
    let sup = audit_superlinearity(&h, &b);
    writeln!(
        out,
        "superlinearity: b0 = {:e}, C0 = {:e}, worst slack {:e} at (x, y, p, mu) = {:?} over {} samples",
        h.b0, h.c0, sup.worst_slack, sup.witness, sup.samples
    )?;
    if !sup.passed() {
        failures.push(format!(
            "superlinearity: claimed b0 = {}, C0 = {} violated, slack {:e} at {:?}",
            h.b0, h.c0, sup.worst_slack, sup.witness
        ));
    }

    let reg = audit_regularity(&h, &b);
    writeln!(out, "regularity: empirical Lipschitz constant {:e}", reg.lipschitz)?;
    if let Some((r, v)) = reg.violation {
        failures.push(format!("regularity: claimed constant exceeded at R = {r}: {v:e}"));
    }

    if Regime::of(kernel.sigma()) == Regime::EqualOne {
        let d = drift_vector(&kernel, 1e-10)?;
        writeln!(out, "drift: b = {:e} (converged: {})", d.b, d.converged)?;
        if !d.converged {
            failures.push(format!("drift: integral did not converge (last increment {:e})", d.residual));
        }
    }
    Ok(failures)
}

fn drift(cfg: &RunConfig, out: &mut dyn Write) -> CliResult {
    let kernel = cfg.kernel_spec()?;
    let d = drift_vector(&kernel, 1e-10)?;
    writeln!(out, "b = {:.5}", d.b)?;
    writeln!(out, "b (full) = {:e}", d.b)?;
    writeln!(out, "converged = {}, last increment = {:e}, halvings = {}", d.converged, d.residual, d.rho_sequence.len() - 1)?;
    if d.converged {
        Ok(())
    } else {
        Err(CliError::new(EXIT_NUMERICAL, "drift integral did not converge"))
    }
}

fn cell(cfg: &RunConfig, out: &mut dyn Write) -> CliResult {
    let model = cfg.cell_model()?;
    let params = CellParams {
        x: cfg.cell.x,
        p: cfg.cell.p,
        l: cfg.cell.l,
    };
    let hdr = headers(cfg, Command::Cell);
    if cfg.cell.method == "long_time" {
        let est = long_time_average(&model, params, cfg.cell.n, cfg.cell.t_max, cfg.kernel.image_budget)?;
        writeln!(out, "H_bar = {:e}", est.h_bar)?;
        writeln!(out, "error = {:e}, steps = {}", est.error, est.steps)?;
        return Ok(());
    }
    let sol = vanishing_discount_sweep(&model, params, &cfg.cell_config())?;
    writeln!(out, "H_bar = {:e}", sol.h_bar)?;
    writeln!(out, "spread = {:e}", sol.spread)?;
    writeln!(out, "delta sup|psi| = {:e}", sol.discounted_sup)?;
    for step in &sol.history {
        writeln!(
            out,
            "delta = {:e}: [{:e}, {:e}] in {} Newton steps, residual {:e}",
            step.delta, step.lower, step.upper, step.newton_iterations, step.residual
        )?;
    }
    csv::write(&output_path(cfg, "cell_report.csv")?, &csv::cell_report_csv(model.sigma, std::slice::from_ref(&sol), &hdr)?)?;
    csv::write(&output_path(cfg, "cell_history.csv")?, &csv::cell_history_csv(&sol, &hdr))?;
    csv::write(&output_path(cfg, "cell_corrector.csv")?, &csv::corrector_csv(&sol, &hdr))?;
    Ok(())
}

fn table_source(cfg: &RunConfig) -> std::result::Result<TableSource<f64>, CliError> {
    let model = cfg.cell_model()?;
    Ok(match (model.regime(), cfg.cell.method.as_str()) {
        (Regime::AboveOne, _) => TableSource::Formula(FormulaAboveOne::new(model.a, model.hamiltonian)?),
        (_, "long_time") => TableSource::LongTime {
            model,
            n: cfg.cell.n,
            t_max: cfg.cell.t_max,
            image_budget: cfg.kernel.image_budget,
        },
        _ => TableSource::Discount {
            model,
            cfg: cfg.cell_config(),
        },
    })
}

fn effective(cfg: &RunConfig, out: &mut dyn Write) -> CliResult {
    let source = table_source(cfg)?;
    let (table, failures) = tabulate(&source, cfg.table_axes())?;
    let a = cfg.coefficient_a()?;
    let claims = PropertyClaims {
        a_sup: a.range(256).1,
        coercivity: None,
        m: cfg.hamiltonian.m,
    };
    let props = audit_properties(&table, &claims);
    writeln!(
        out,
        "table: {} entries; slopes l {:e}, p {:e}, x {:e}",
        table.values.len(),
        props.l_slope,
        props.p_slope,
        props.x_slope
    )?;
    for v in &props.violations {
        writeln!(out, "property violation: {v}")?;
    }
    for f in &failures {
        writeln!(out, "failed entry: {f}")?;
    }
    let path = output_path(cfg, "effective.csv")?;
    table.save_csv(&path, &headers(cfg, Command::Effective))?;
    writeln!(out, "wrote {}", path.display())?;
    if !failures.is_empty() {
        return Err(CliError::new(EXIT_NUMERICAL, format!("{} table entries failed", failures.len())));
    }
    if !props.passed() {
        return Err(CliError::new(EXIT_VALIDATION, "effective Hamiltonian property audit failed"));
    }
    Ok(())
}

fn solve_one(cfg: &RunConfig, out: &mut dyn Write) -> CliResult {
    let solver = cfg.solver_config();
    let kind = if cfg.grid.k > 0 {
        ProblemKind::Oscillating { k: cfg.grid.k }
    } else {
        let source = table_source(cfg)?;
        ProblemKind::Effective(match source {
            TableSource::Formula(f) => EffectiveSource::Formula(f),
            other => {
                let (table, failures) = tabulate(&other, cfg.table_axes())?;
                if !failures.is_empty() {
                    return Err(CliError::new(
                        EXIT_NUMERICAL,
                        format!("effective table incomplete:\n{}", failures.join("\n")),
                    ));
                }
                EffectiveSource::Table(table)
            }
        })
    };
    let problem = ParabolicProblem {
        kind,
        a: cfg.coefficient_a()?,
        hamiltonian: cfg.hamiltonian_spec()?,
        kernel: cfg.kernel_spec()?,
        u0: cfg.initial_data(false)?.sample(solver.n)?,
        horizon: cfg.grid.horizon,
    };
    let traj = solve(&problem, &solver)?;
    let last = traj.last();
    writeln!(out, "steps = {}, dt in [{:e}, {:e}]", traj.steps, traj.dt_min, traj.dt_max)?;
    writeln!(out, "sup|u(T)| = {:e}, max u(T) = {:e}, min u(T) = {:e}", last.sup_norm(), last.max(), last.min())?;
    let hdr = headers(cfg, Command::Solve);
    let path = output_path(cfg, "trajectory.csv")?;
    csv::write(&path, &csv::trajectory_csv(&traj, &hdr))?;
    csv::write(
        &output_path(cfg, "trajectory_summary.csv")?,
        &csv::trajectory_summary_csv(&traj, &problem.u0, &hdr)?,
    )?;
    writeln!(out, "wrote {}", path.display())?;
    Ok(())
}

fn homogenize(cfg: &RunConfig, out: &mut dyn Write) -> CliResult {
    let report = run_sweep(&cfg.sweep_problem()?, &cfg.sweep_config())?;
    let hdr = headers(cfg, Command::Homogenize);
    for row in &report.rows {
        match (&row.error, &row.failure) {
            (Some(e), _) => writeln!(
                out,
                "eps = 1/{}: error {:e}{}",
                row.k,
                e,
                row.rate.map(|r| format!(", rate {r:.3}")).unwrap_or_default()
            )?,
            (None, Some(f)) => writeln!(out, "eps = 1/{}: failed: {f}", row.k)?,
            (None, None) => writeln!(out, "eps = 1/{}: no error recorded", row.k)?,
        }
    }
    let pairs: Vec<(f64, f64)> = report.rows.iter().filter_map(|r| r.error.map(|e| (r.eps, e))).collect();
    if pairs.len() >= 3 {
        let (eps, errs): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        if let Ok(fit) = convergence_rates(&eps, &errs) {
            writeln!(out, "fitted rate {:.4} (log residual {:e})", fit.rate, fit.residual)?;
        }
    }
    let path = output_path(cfg, "sweep.csv")?;
    csv::write(&path, &report.to_csv(&hdr))?;
    let hom = output_path(cfg, "snapshots.csv")?;
    csv::write(&hom, &csv::sweep_snapshots_csv(&report, &hdr))?;
    writeln!(out, "wrote {} and {}", path.display(), hom.display())?;
    let failed = report.rows.iter().filter(|r| r.failure.is_some()).count();
    if failed > 0 {
        return Err(CliError::new(EXIT_NUMERICAL, format!("{failed} sweep rows failed")));
    }
    Ok(())
}

fn constants(cfg: &RunConfig, out: &mut dyn Write) -> CliResult {
    let h = cfg.hamiltonian_spec()?;
    let (n, sigma, m) = (cfg.hamiltonian.structure_n, cfg.kernel.sigma, cfg.hamiltonian.m);
    let alpha = holder_exponent_alpha0(n, sigma, m)?;
    writeln!(out, "(n, sigma, m) = ({n}, {sigma}, {m})")?;
    writeln!(out, "alpha0 = {alpha:.5}")?;
    writeln!(out, "alpha0 (full) = {alpha:e}")?;
    if m.fract() == 0.0 && (2.0..=31.0).contains(&m) {
        let (c, cap) = endpoint_bounds_exact(m as u32)?;
        writeln!(out, "c_m = {c}")?;
        writeln!(out, "C_m = {cap}")?;
    }
    let b = SampleBudget::default();
    let c_grow = growth_bound(&h, &b);
    let k_small = small_gradient_deficit(&h, &b);
    let cert = coercivity_constants(m, h.b0, h.c0, c_grow, k_small)?;
    writeln!(out, "c_m (float) = {:e}, C_m (float) = {:e}", cert.c_m, cert.cap_c_m)?;
    writeln!(out, "b0 = {:e}, C0 = {:e}, C_grow = {:e}, K_small = {:e}", h.b0, h.c0, c_grow, k_small)?;
    writeln!(
        out,
        "coercivity: H >= {:e}(|p|^m + 1) - {:e}, large-gradient part for |p| > {}",
        cert.c_tilde, cert.k, cert.valid_above
    )?;
    Ok(())
}
