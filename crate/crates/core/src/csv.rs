//! CSV emission: header comments, a mandatory header row, and numbers in
//! shortest round-trip scientific notation.

use std::fmt::Write as _;
use std::path::Path;

use crate::cell::CellSolution;
use crate::error::Result;
use crate::grid::GridFunction;
use crate::homogenize::SweepReport;
use crate::parabolic::{initial_layer_modulus, Trajectory};
use crate::scalar::Real;
use crate::spectral::spectral_flap;

fn comments(out: &mut String, header_comments: &[String]) {
    for c in header_comments {
        let _ = writeln!(out, "# {c}");
    }
}

/// Long format `t,x,u`, one row per recorded time and node.
pub fn trajectory_csv<T: Real>(traj: &Trajectory<T>, header_comments: &[String]) -> String {
    let mut s = String::new();
    comments(&mut s, header_comments);
    s.push_str("t,x,u\n");
    for (t, snap) in traj.times.iter().zip(&traj.snapshots) {
        for (i, u) in snap.values().iter().enumerate() {
            let _ = writeln!(s, "{t:e},{:e},{u:e}", snap.node(i));
        }
    }
    s
}

/// `t,sup_norm,initial_layer` with the layer measured against `u0`.
pub fn trajectory_summary_csv<T: Real>(
    traj: &Trajectory<T>,
    u0: &GridFunction<T>,
    header_comments: &[String],
) -> Result<String> {
    let layer = initial_layer_modulus(traj, u0)?;
    let mut s = String::new();
    comments(&mut s, header_comments);
    s.push_str("t,sup_norm,initial_layer\n");
    for ((t, snap), (_, w)) in traj.times.iter().zip(&traj.snapshots).zip(&layer) {
        let _ = writeln!(s, "{t:e},{:e},{w:e}", snap.sup_norm());
    }
    Ok(s)
}

/// `x,p,l,sigma,H_bar,spread,osc,lip,flap_sup`, one row per solution. The last
/// three describe the corrector: oscillation, discrete Lipschitz constant and
/// `sup|(−Δ)^{1/2}ψ|`.
pub fn cell_report_csv<T: Real>(sigma: T, solutions: &[CellSolution<T>], header_comments: &[String]) -> Result<String> {
    let mut s = String::new();
    comments(&mut s, header_comments);
    s.push_str("x,p,l,sigma,H_bar,spread,osc,lip,flap_sup\n");
    for sol in solutions {
        let flap = spectral_flap(&sol.psi, T::one())?.sup_norm();
        let q = sol.params;
        let _ = writeln!(
            s,
            "{:e},{:e},{:e},{sigma:e},{:e},{:e},{:e},{:e},{flap:e}",
            q.x,
            q.p,
            q.l,
            sol.h_bar,
            sol.spread,
            sol.psi.osc(),
            sol.psi.lipschitz()
        );
    }
    Ok(s)
}

/// Long format `eps,t,x,u`: the homogenized trajectory with `eps = 0`, then the
/// final state of every oscillating run on the comparison nodes.
pub fn sweep_snapshots_csv<T: Real>(report: &SweepReport<T>, header_comments: &[String]) -> String {
    let mut s = String::new();
    comments(&mut s, header_comments);
    s.push_str("eps,t,x,u\n");
    for (t, snap) in report.effective.times.iter().zip(&report.effective.snapshots) {
        for (i, u) in snap.values().iter().enumerate() {
            let _ = writeln!(s, "0e0,{t:e},{:e},{u:e}", snap.node(i));
        }
    }
    let horizon = report.effective.times.last().copied().unwrap_or_else(T::zero);
    for row in &report.rows {
        if let Some(f) = &row.final_state {
            for (i, u) in f.values().iter().enumerate() {
                let _ = writeln!(s, "{:e},{horizon:e},{:e},{u:e}", row.eps, f.node(i));
            }
        }
    }
    s
}

/// Discount ladder `delta,lower,upper,newton_iterations,residual`.
pub fn cell_history_csv<T: Real>(sol: &CellSolution<T>, header_comments: &[String]) -> String {
    let mut s = String::new();
    comments(&mut s, header_comments);
    s.push_str("delta,lower,upper,newton_iterations,residual\n");
    for h in &sol.history {
        let _ = writeln!(
            s,
            "{:e},{:e},{:e},{},{:e}",
            h.delta, h.lower, h.upper, h.newton_iterations, h.residual
        );
    }
    s
}

/// Corrector profile `y,psi`.
pub fn corrector_csv<T: Real>(sol: &CellSolution<T>, header_comments: &[String]) -> String {
    let mut s = String::new();
    comments(&mut s, header_comments);
    s.push_str("y,psi\n");
    for (i, v) in sol.psi.values().iter().enumerate() {
        let _ = writeln!(s, "{:e},{v:e}", sol.psi.node(i));
    }
    s
}

pub fn write(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content).map_err(|e| {
        std::io::Error::new(e.kind(), format!("cannot write {}: {e}", path.display())).into()
    })
}
