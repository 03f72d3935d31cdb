//! ε-sweeps: oscillating solutions against the effective solution, observed
//! rates, and corrector reconstruction.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;

use crate::cell::{above_one_rhs, vanishing_discount_sweep, CellConfig, CellModel, CellParams, Regime};
use crate::coefficients::Coefficient;
use crate::effective::{tabulate, EffectiveSource, FormulaAboveOne, TableAxes, TableSource};
use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::hamiltonians::HamiltonianSpec;
use crate::kernels::{periodized_weights, KernelSpec};
use crate::parabolic::{
    initial_layer_modulus, solve, BarrierModulus, InitialData, ParabolicProblem, ProblemKind, SolverConfig, Trajectory,
};
use crate::scalar::Real;
use crate::spectral::{spectral_inverse_flap, TrigSeries};

/// Data of the family `u_t − a(x, x/ε) I(u) + H(x, x/ε, Du) = 0`.
#[derive(Debug, Clone)]
pub struct SweepProblem<T> {
    pub a: Coefficient<T>,
    pub hamiltonian: HamiltonianSpec<T>,
    pub kernel: KernelSpec<T>,
    pub u0: InitialData<T>,
    pub horizon: T,
}

#[derive(Debug, Clone)]
pub struct SweepConfig<T> {
    /// Comparison grid; an ε run uses the smallest multiple `n·2^j ≥ 16k`.
    pub n: usize,
    /// `ε = 1/k`, increasing `k`.
    pub ks: Vec<usize>,
    pub solver: SolverConfig<T>,
    /// Cell solver for tabulated `H̄` and σ ≤ 1 correctors.
    pub cell: CellConfig<T>,
    pub barrier_radii: Vec<T>,
    pub table_p_nodes: usize,
    pub table_l_nodes: usize,
    /// Nodes per fast period for the σ > 1 corrector.
    pub corrector_nodes: usize,
    /// Every `corrector_stride`-th comparison node gets a σ ≤ 1 corrector solve.
    pub corrector_stride: usize,
}

impl<T: Real> Default for SweepConfig<T> {
    fn default() -> Self {
        Self {
            n: 1024,
            ks: vec![4, 8, 16],
            solver: SolverConfig {
                snapshots: 20,
                ..SolverConfig::default()
            },
            cell: CellConfig {
                n: 128,
                ..CellConfig::default()
            },
            barrier_radii: [1.0 / 64.0, 1.0 / 32.0, 1.0 / 16.0, 1.0 / 8.0, 1.0 / 4.0]
                .iter()
                .map(|&v| T::c(v))
                .collect(),
            table_p_nodes: 17,
            table_l_nodes: 9,
            corrector_nodes: 64,
            corrector_stride: 64,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepRow<T> {
    pub eps: T,
    pub k: usize,
    pub n: usize,
    /// Smallest step used.
    pub dt: T,
    /// `max_t sup_x |u^ε − ū|` on the comparison nodes and recorded times.
    pub error: Option<T>,
    /// `log(e_{i−1}/e_i)/log(ε_{i−1}/ε_i)`; absent on the first row.
    pub rate: Option<T>,
    pub corrector: Option<CorrectorReport<T>>,
    pub seconds: f64,
    pub layer: Vec<(T, T)>,
    /// Final oscillating solution restricted to the comparison grid.
    pub final_state: Option<GridFunction<T>>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SweepReport<T> {
    pub rows: Vec<SweepRow<T>>,
    pub effective: Trajectory<T>,
    pub barrier: BarrierModulus<T>,
    pub sigma: T,
}

impl<T: Real> SweepReport<T> {
    pub fn errors(&self) -> Vec<Option<T>> {
        self.rows.iter().map(|r| r.error).collect()
    }

    pub fn to_csv(&self, header_comments: &[String]) -> String {
        let mut s = String::new();
        for c in header_comments {
            let _ = writeln!(s, "# {c}");
        }
        for r in &self.rows {
            if let Some(f) = &r.failure {
                let _ = writeln!(s, "# eps = {:e} failed: {f}", r.eps);
            }
        }
        s.push_str("eps,n,dt,error,rate,corrector_residual,seconds\n");
        let opt = |v: Option<T>| v.map(|v| format!("{v:e}")).unwrap_or_else(|| "nan".into());
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:e},{},{:e},{},{},{},{:e}",
                r.eps,
                r.n,
                r.dt,
                opt(r.error),
                opt(r.rate),
                opt(r.corrector.as_ref().map(|c| c.residual_sup)),
                r.seconds
            );
        }
        s
    }
}

fn grid_for(n: usize, k: usize) -> usize {
    let mut m = n;
    while m < 16 * k {
        m *= 2;
    }
    m
}

fn effective_source<T: Real>(problem: &SweepProblem<T>, cfg: &SweepConfig<T>) -> Result<EffectiveSource<T>> {
    let model = CellModel::new(problem.a.clone(), problem.hamiltonian.clone(), &problem.kernel)?;
    if model.regime() == Regime::AboveOne {
        return Ok(EffectiveSource::Formula(FormulaAboveOne::new(
            problem.a.clone(),
            problem.hamiltonian.clone(),
        )?));
    }
    // Box from a priori bounds: slopes and operator values of u0, doubled.
    let u0 = problem.u0.sample(cfg.n)?;
    let table = periodized_weights(&problem.kernel, cfg.n, cfg.solver.image_budget)?;
    let iu = table.apply(&u0)?;
    let p_max = T::c(2.0) * u0.lipschitz() + T::one();
    let l_max = T::c(2.0) * iu.sup_norm() + T::one();
    let lin = |lo: T, hi: T, k: usize| -> Vec<T> {
        (0..k)
            .map(|i| lo + (hi - lo) * T::from_usize_lossy(i) / T::from_usize_lossy(k - 1))
            .collect()
    };
    let x_dep = problem.a.depends_on_x()
        || match &problem.hamiltonian.kind {
            crate::hamiltonians::HamiltonianKind::PowerLaw { b, f } => b.depends_on_x() || f.depends_on_x(),
            crate::hamiltonians::HamiltonianKind::Custom { .. } => true,
        };
    let axes = TableAxes {
        x: if x_dep { lin(T::zero(), T::one(), 9) } else { vec![T::zero()] },
        p: lin(-p_max, p_max, cfg.table_p_nodes.max(2)),
        l: lin(-l_max, l_max, cfg.table_l_nodes.max(2)),
    };
    let (t, failures) = tabulate(&TableSource::Discount { model, cfg: cfg.cell.clone() }, axes)?;
    if !failures.is_empty() {
        return Err(Error::NotConverged {
            what: format!("effective table: {}", failures.join("; ")),
            residual: f64::NAN,
            iterations: 0,
        });
    }
    Ok(EffectiveSource::Table(t))
}

/// Runs the effective problem and every ε in parallel; failures are recorded per row.
pub fn run_sweep<T: Real>(problem: &SweepProblem<T>, cfg: &SweepConfig<T>) -> Result<SweepReport<T>> {
    if cfg.ks.is_empty() || cfg.ks.windows(2).any(|w| w[1] <= w[0]) || cfg.ks[0] == 0 {
        return Err(Error::Domain("sweep needs increasing k >= 1 (decreasing eps = 1/k)".into()));
    }
    let sigma = problem.kernel.sigma();
    let source = effective_source(problem, cfg)?;
    let solver = SolverConfig {
        n: cfg.n,
        ..cfg.solver.clone()
    };
    let u0 = problem.u0.sample(cfg.n)?;
    let effective_problem = ParabolicProblem {
        kind: ProblemKind::Effective(source.clone()),
        a: problem.a.clone(),
        hamiltonian: problem.hamiltonian.clone(),
        kernel: problem.kernel.clone(),
        u0: u0.clone(),
        horizon: problem.horizon,
    };
    let effective = solve(&effective_problem, &solver)?;
    let barrier_problem = ParabolicProblem {
        kind: ProblemKind::Oscillating { k: 1 },
        ..effective_problem.clone()
    };
    let barrier = BarrierModulus::build(&barrier_problem, &solver, &cfg.barrier_radii)?;

    let mut rows: Vec<SweepRow<T>> = cfg
        .ks
        .par_iter()
        .map(|&k| one_eps(problem, cfg, &source, &effective, k))
        .collect();
    for i in 1..rows.len() {
        if let (Some(e0), Some(e1)) = (rows[i - 1].error, rows[i].error) {
            let ratio = (rows[i - 1].eps / rows[i].eps).ln();
            rows[i].rate = Some((e0 / e1).ln() / ratio);
        }
    }
    Ok(SweepReport {
        rows,
        effective,
        barrier,
        sigma,
    })
}

fn one_eps<T: Real>(
    problem: &SweepProblem<T>,
    cfg: &SweepConfig<T>,
    source: &EffectiveSource<T>,
    effective: &Trajectory<T>,
    k: usize,
) -> SweepRow<T> {
    let start = Instant::now();
    let eps = T::one() / T::from_usize_lossy(k);
    let n = grid_for(cfg.n, k);
    let mut row = SweepRow {
        eps,
        k,
        n,
        dt: T::nan(),
        error: None,
        rate: None,
        corrector: None,
        seconds: 0.0,
        layer: Vec::new(),
        final_state: None,
        failure: None,
    };
    let result = (|| -> Result<()> {
        let fine = ParabolicProblem {
            kind: ProblemKind::Oscillating { k },
            a: problem.a.clone(),
            hamiltonian: problem.hamiltonian.clone(),
            kernel: problem.kernel.clone(),
            u0: problem.u0.sample(n)?,
            horizon: problem.horizon,
        };
        let solver = SolverConfig { n, ..cfg.solver.clone() };
        let traj = solve(&fine, &solver)?;
        row.dt = traj.dt_min;
        let stride = n / cfg.n;
        let coarse: Vec<GridFunction<T>> = traj
            .snapshots
            .iter()
            .map(|s| s.restrict(stride))
            .collect::<Result<_>>()?;
        let mut err = T::zero();
        for (a, b) in coarse.iter().zip(&effective.snapshots) {
            err = err.max(a.zip_map(b, |x, y| x - y)?.sup_norm());
        }
        row.error = Some(err);
        let coarse_u0 = problem.u0.sample(cfg.n)?;
        let coarse_traj = Trajectory {
            snapshots: coarse.clone(),
            ..traj.clone()
        };
        row.layer = initial_layer_modulus(&coarse_traj, &coarse_u0)?;
        let last = coarse.last().expect("initial snapshot present").clone();
        let u_bar = effective.last();
        let model = CellModel::new(problem.a.clone(), problem.hamiltonian.clone(), &problem.kernel)?;
        let report = match source {
            EffectiveSource::Formula(formula) => {
                let m = cfg.corrector_nodes;
                let provider = |_: usize, c: CellParams<T>| {
                    let h_bar = formula.value(c.x, c.p, c.l);
                    spectral_inverse_flap(&above_one_rhs(&model, c, h_bar, m)?, problem.kernel.sigma())
                };
                corrector_reconstruction(&last, u_bar, provider, eps, &problem.kernel, cfg.solver.image_budget, 1)?
            }
            EffectiveSource::Table(_) => {
                let provider = |_: usize, c: CellParams<T>| {
                    let s = vanishing_discount_sweep(&model, c, &cfg.cell)?;
                    let mean = s.psi.mean();
                    s.psi.map(|v| v - mean)
                };
                corrector_reconstruction(
                    &last,
                    u_bar,
                    provider,
                    eps,
                    &problem.kernel,
                    cfg.solver.image_budget,
                    cfg.corrector_stride.max(1),
                )?
            }
        };
        row.corrector = Some(report);
        row.final_state = Some(last);
        Ok(())
    })();
    if let Err(e) = result {
        row.failure = Some(e.to_string());
    }
    row.seconds = start.elapsed().as_secs_f64();
    row
}

#[derive(Debug, Clone)]
pub struct CorrectorReport<T> {
    /// `1 ∨ σ`
    pub exponent: T,
    /// `sup |u^ε − ū − ε^{1∨σ} ψ(·/ε)|` over the sampled nodes.
    pub residual_sup: T,
    /// `sup |u^ε − ū|` over the same nodes.
    pub gap_sup: T,
    pub nodes: Vec<usize>,
}

/// Compares `u^ε` with `ū + ε^{1∨σ} ψ(x/ε)`, where `ψ` at node `i` is the
/// corrector frozen at `(x_i, Dū(x_i), Iū(x_i))` returned by `psi`. Every
/// `stride`-th node is used.
pub fn corrector_reconstruction<T: Real>(
    u_eps: &GridFunction<T>,
    u_bar: &GridFunction<T>,
    psi: impl Fn(usize, CellParams<T>) -> Result<GridFunction<T>> + Sync,
    eps: T,
    kernel: &KernelSpec<T>,
    image_budget: usize,
    stride: usize,
) -> Result<CorrectorReport<T>> {
    let n = u_bar.n();
    if u_eps.n() != n {
        return Err(Error::SizeMismatch { expected: n, got: u_eps.n() });
    }
    if stride == 0 {
        return Err(Error::Domain("stride must be positive".into()));
    }
    let exponent = T::one().max(kernel.sigma());
    let scale = eps.powf(exponent);
    let table = periodized_weights(kernel, n, image_budget)?;
    let iu = table.apply(u_bar)?;
    let h = u_bar.spacing();
    let nodes: Vec<usize> = (0..n).step_by(stride).collect();
    let per_node: Vec<Result<(T, T)>> = nodes
        .par_iter()
        .map(|&i| {
            let x = u_bar.node(i);
            let ii = i as isize;
            let p = (u_bar.at(ii + 1) - u_bar.at(ii - 1)) / (h + h);
            let c = CellParams { x, p, l: iu.values()[i] };
            let profile = TrigSeries::from_grid(&psi(i, c)?)?;
            let y = (x / eps).fract();
            let gap = u_eps.values()[i] - u_bar.values()[i];
            Ok(((gap - scale * profile.value(y)).abs(), gap.abs()))
        })
        .collect();
    let mut residual_sup = T::zero();
    let mut gap_sup = T::zero();
    for r in per_node {
        let (r, g) = r?;
        residual_sup = residual_sup.max(r);
        gap_sup = gap_sup.max(g);
    }
    Ok(CorrectorReport {
        exponent,
        residual_sup,
        gap_sup,
        nodes,
    })
}

/// Least-squares fit of `log e = rate·log ε + c`.
#[derive(Debug, Clone, Copy)]
pub struct RateFit<T> {
    pub rate: T,
    /// Root mean square of the fit residuals in `log e`.
    pub residual: T,
}

pub fn convergence_rates<T: Real>(eps: &[T], errors: &[T]) -> Result<RateFit<T>> {
    if eps.len() != errors.len() {
        return Err(Error::SizeMismatch { expected: eps.len(), got: errors.len() });
    }
    if eps.len() < 3 {
        return Err(Error::Domain(format!("rate fit needs at least 3 points, got {}", eps.len())));
    }
    if eps.iter().chain(errors).any(|&v| !(v > T::zero())) {
        return Err(Error::Domain("rate fit needs positive eps and errors".into()));
    }
    let xs: Vec<T> = eps.iter().map(|v| v.ln()).collect();
    let ys: Vec<T> = errors.iter().map(|v| v.ln()).collect();
    let k = T::from_usize_lossy(xs.len());
    let mx = xs.iter().copied().sum::<T>() / k;
    let my = ys.iter().copied().sum::<T>() / k;
    let sxx: T = xs.iter().map(|&x| (x - mx) * (x - mx)).sum();
    let sxy: T = xs.iter().zip(&ys).map(|(&x, &y)| (x - mx) * (y - my)).sum();
    let rate = sxy / sxx;
    let c = my - rate * mx;
    let ss: T = xs.iter().zip(&ys).map(|(&x, &y)| (y - rate * x - c).powi(2)).sum();
    Ok(RateFit {
        rate,
        residual: (ss / k).sqrt(),
    })
}
