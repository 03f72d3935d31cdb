//! Acceptance criteria. Each test prints one `PASS`/`FAIL` line and then asserts.

use std::f64::consts::{PI, TAU};

use nlhj::cell::{vanishing_discount_sweep, CellConfig, CellModel, CellParams};
use nlhj::effective::{audit_properties, eikonal_oracle, tabulate, PropertyClaims, TableAxes, TableSource};
use nlhj::hamiltonians::endpoint_bounds_exact;
use nlhj::homogenize::{run_sweep, SweepConfig, SweepProblem};
use nlhj::kernels::{drift_vector, periodized_weights};
use nlhj::nonlocal::corrector_remainder_j;
use nlhj::parabolic::{
    holder_exponent_alpha0, solve, sup_convolution_time, InitialData, ParabolicProblem, ProblemKind, SolverConfig,
};
use nlhj::spectral::spectral_flap;
use nlhj::{Coefficient, GridFunction, HamiltonianSpec, KernelSpec};
use num_rational::Ratio;
use rand::{Rng, SeedableRng};

fn verdict(id: u32, pass: bool, detail: String) -> bool {
    println!("criterion {id:>2}: {} {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}

fn model_h() -> HamiltonianSpec<f64> {
    HamiltonianSpec::power_law(Coefficient::Constant(1.0), Coefficient::CosY, 2.0).unwrap()
}

#[test]
fn criterion_01_eigenfunction_identity() {
    let n = 512;
    let u = GridFunction::from_fn(n, |y: f64| (TAU * y).cos()).unwrap();
    let mut worst_quad = 0.0f64;
    let mut worst_spec = 0.0f64;
    for &sigma in &[0.5, 1.0, 1.5] {
        let lam = TAU.powf(sigma);
        let k = KernelSpec::constant(sigma).unwrap();
        let t = periodized_weights(&k, n, 8).unwrap();
        let v = t.apply(&u).unwrap();
        let e = v.values().iter().zip(u.values()).map(|(a, b)| (a + lam * b).abs()).fold(0.0, f64::max);
        worst_quad = worst_quad.max(e / lam);
        let s = spectral_flap(&u, sigma).unwrap();
        let e = s.values().iter().zip(u.values()).map(|(a, b)| (a - lam * b).abs()).fold(0.0, f64::max);
        worst_spec = worst_spec.max(e / lam);
    }
    let pass = worst_quad <= 2e-2 && worst_spec <= 1e-10;
    assert!(verdict(
        1,
        pass,
        format!("quadrature rel err {worst_quad:.3e} (<= 2e-2), spectral {worst_spec:.3e} (<= 1e-10)")
    ));
}

#[test]
fn criterion_02_drift_oracle() {
    let tilt: f64 = drift_vector(&KernelSpec::tilt(1.0, 0.5).unwrap(), 1e-10).unwrap().b;
    let sym: f64 = drift_vector(&KernelSpec::constant(1.0).unwrap(), 1e-10).unwrap().b;
    let quad: f64 = drift_vector(&KernelSpec::quadratic_tilt(1.0, 0.5).unwrap(), 1e-10).unwrap().b;
    let (e1, e2, e3) = ((tilt - 1.0 / PI).abs(), sym.abs(), (quad - 0.5 / PI).abs());
    let pass = e1 <= 1e-6 && e2 <= 1e-12 && e3 <= 1e-6;
    assert!(verdict(2, pass, format!("tilt {e1:.2e}, symmetric {e2:.2e}, quadratic {e3:.2e}")));
}

#[test]
fn criterion_03_eikonal_cell() {
    let model = CellModel {
        sigma: 0.5,
        drift: 0.0,
        a: Coefficient::Constant(1.0),
        hamiltonian: model_h(),
    };
    let cfg = CellConfig::default();
    assert_eq!(cfg.n, 256);
    assert_eq!(*cfg.deltas.last().unwrap(), 1e-3);
    let at = |p: f64| vanishing_discount_sweep(&model, CellParams { x: 0.0, p, l: 0.0 }, &cfg).unwrap().h_bar;
    let e0 = (at(0.0) - 1.0).abs();
    let e1 = (at(0.45) - 1.0).abs();
    let mut e2 = 0.0f64;
    for &p in &[1.2, 1.5, 2.0] {
        e2 = e2.max((at(p) - eikonal_oracle(p)).abs());
    }
    let pass = e0 <= 5e-3 && e1 <= 5e-3 && e2 <= 1e-2;
    assert!(verdict(
        3,
        pass,
        format!("p=0: {e0:.2e}, p=0.45: {e1:.2e} (<= 5e-3); beyond threshold {e2:.2e} (<= 1e-2)")
    ));
}

#[test]
fn criterion_04_fredholm_oracle() {
    let model = CellModel {
        sigma: 1.5,
        drift: 0.0,
        a: Coefficient::TwoPlusCosY,
        hamiltonian: model_h(),
    };
    let s = vanishing_discount_sweep(&model, CellParams { x: 0.0, p: 1.0, l: 0.0 }, &CellConfig::default()).unwrap();
    let exact = 3.0 - 3f64.sqrt();
    let last = s.history.last().unwrap();
    let err = (s.h_bar - exact).abs();
    let inside = last.lower <= exact && exact <= last.upper;
    let pass = err <= 1e-2 && (s.h_bar - 1.2679).abs() <= 1e-2 && inside;
    assert!(verdict(
        4,
        pass,
        format!(
            "H_bar {:.6} vs {exact:.6}: err {err:.2e}; spread [{:.6}, {:.6}]",
            s.h_bar, last.lower, last.upper
        )
    ));
}

#[test]
fn criterion_05_constant_a_shift() {
    let a0 = 2.0;
    let mut worst = f64::NEG_INFINITY;
    let mut pass = true;
    for kernel in [
        KernelSpec::constant(0.5).unwrap(),
        KernelSpec::tilt(1.0, 0.5).unwrap(),
        KernelSpec::constant(1.5).unwrap(),
    ] {
        let model = CellModel::new(Coefficient::Constant(a0), model_h(), &kernel).unwrap();
        let cfg = CellConfig { n: 128, ..CellConfig::default() };
        for &p in &[0.0, 1.0] {
            let base = vanishing_discount_sweep(&model, CellParams { x: 0.0, p, l: 0.0 }, &cfg).unwrap();
            for &l in &[-1.0, 1.0] {
                let s = vanishing_discount_sweep(&model, CellParams { x: 0.0, p, l }, &cfg).unwrap();
                let gap = (s.h_bar - base.h_bar + a0 * l).abs();
                let allowed = 2.0 * s.spread.max(base.spread);
                worst = worst.max(gap - allowed);
                pass &= gap <= allowed;
            }
        }
    }
    assert!(verdict(5, pass, format!("max(gap - 2*spread) = {worst:.3e} (<= 0)")));
}

#[test]
fn criterion_06_monotone_in_l() {
    let mut violations = 0usize;
    let mut worst = f64::NEG_INFINITY;
    let axes = TableAxes {
        x: vec![0.0],
        p: vec![0.0, 0.5, 1.0, 1.5],
        l: vec![-1.0, -0.5, 0.0, 0.5, 1.0],
    };
    for kernel in [
        KernelSpec::constant(0.5).unwrap(),
        KernelSpec::tilt(1.0, 0.5).unwrap(),
        KernelSpec::constant(1.5).unwrap(),
    ] {
        let model = CellModel::new(Coefficient::TwoPlusCosY, model_h(), &kernel).unwrap();
        let cfg = CellConfig { n: 128, ..CellConfig::default() };
        for source in [
            TableSource::for_model(model.clone(), cfg.clone()).unwrap(),
            TableSource::Discount { model, cfg },
        ] {
            let (t, failures) = tabulate(&source, axes.clone()).unwrap();
            assert!(failures.is_empty(), "{failures:?}");
            for ip in 0..axes.p.len() {
                for il in 0..axes.l.len() - 1 {
                    let rise = t.get(0, ip, il + 1) - t.get(0, ip, il);
                    worst = worst.max(rise);
                    if rise > 1e-8 {
                        violations += 1;
                    }
                }
            }
            let audit = audit_properties(
                &t,
                &PropertyClaims {
                    a_sup: 3.0,
                    coercivity: None,
                    m: 2.0,
                },
            );
            assert!(audit.passed(), "{:?}", audit.violations);
        }
    }
    assert!(verdict(
        6,
        violations == 0,
        format!("{violations} violations; largest rise in l {worst:.3e} (<= 1e-8)")
    ));
}

fn oscillating(u0: GridFunction<f64>, k: usize, kernel: KernelSpec<f64>, horizon: f64) -> ParabolicProblem<f64> {
    ParabolicProblem {
        kind: ProblemKind::Oscillating { k },
        a: Coefficient::TwoPlusCosY,
        hamiltonian: model_h(),
        kernel,
        u0,
        horizon,
    }
}

fn random_data(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let c: Vec<(f64, f64)> = (0..4).map(|_| (rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5))).collect();
    (0..n)
        .map(|i| {
            let x = i as f64 / n as f64;
            c.iter()
                .enumerate()
                .map(|(j, &(a, b))| a * (TAU * (j + 1) as f64 * x).cos() + b * (TAU * (j + 1) as f64 * x).sin())
                .sum()
        })
        .collect()
}

#[test]
fn criterion_07_maximum_bound_and_comparison() {
    let n = 128;
    let horizon = 0.2;
    let mut rng = rand::rngs::StdRng::seed_from_u64(7);
    let mut bound_ok = true;
    let mut order_ok = true;
    let mut worst_bound = f64::NEG_INFINITY;
    let mut worst_order = f64::NEG_INFINITY;
    let kernels = [
        KernelSpec::constant(0.5).unwrap(),
        KernelSpec::tilt(1.0, 0.5).unwrap(),
        KernelSpec::constant(1.5).unwrap(),
    ];
    for pair in 0..10 {
        let kernel = kernels[pair % 3].clone();
        let u = random_data(&mut rng, n);
        let bump = random_data(&mut rng, n);
        let shift = bump.iter().cloned().fold(f64::INFINITY, f64::min);
        let v: Vec<f64> = u.iter().zip(&bump).map(|(a, b)| a + b - shift + 0.05).collect();
        let pu = oscillating(GridFunction::new(u).unwrap(), 4, kernel.clone(), horizon);
        let pv = oscillating(GridFunction::new(v).unwrap(), 4, kernel, horizon);
        let adaptive = SolverConfig { n, snapshots: 10, ..SolverConfig::default() };
        let du = solve(&pu, &adaptive).unwrap().dt_min;
        let dv = solve(&pv, &adaptive).unwrap().dt_min;
        let cfg = SolverConfig {
            fixed_dt: Some(0.5 * du.min(dv)),
            ..adaptive
        };
        let tu = solve(&pu, &cfg).unwrap();
        let tv = solve(&pv, &cfg).unwrap();
        for (p, t) in [(&pu, &tu), (&pv, &tv)] {
            let h0 = p.hamiltonian.sup_at_zero(64);
            for (time, s) in t.times.iter().zip(&t.sup_norm_track) {
                let excess = s - (p.u0.sup_norm() + h0 * time + 1e-8);
                worst_bound = worst_bound.max(excess);
                bound_ok &= excess <= 0.0;
            }
        }
        for (a, b) in tu.snapshots.iter().zip(&tv.snapshots) {
            for (x, y) in a.values().iter().zip(b.values()) {
                worst_order = worst_order.max(x - y);
                order_ok &= x <= y;
            }
        }
    }
    assert!(verdict(
        7,
        bound_ok && order_ok,
        format!("bound excess {worst_bound:.3e} (<= 0); max(u - v) {worst_order:.3e} (<= 0) over 10 pairs")
    ));
}

#[test]
fn criterion_08_homogenization_sweep() {
    let problem = SweepProblem {
        a: Coefficient::TwoPlusCosY,
        hamiltonian: model_h(),
        kernel: KernelSpec::constant(1.5).unwrap(),
        u0: InitialData::Sine,
        horizon: 0.2,
    };
    let cfg = SweepConfig::default();
    let report = run_sweep(&problem, &cfg).unwrap();
    let errors: Vec<f64> = report.rows.iter().map(|r| r.error.expect("run succeeded")).collect();
    let decreasing = errors.windows(2).all(|w| w[1] < w[0]);

    let control = SweepProblem {
        a: Coefficient::Constant(2.0),
        hamiltonian: HamiltonianSpec::power_law(Coefficient::Constant(1.0), Coefficient::CosX, 2.0).unwrap(),
        ..problem
    };
    let report = run_sweep(&control, &cfg).unwrap();
    let ctrl: Vec<f64> = report.rows.iter().map(|r| r.error.expect("run succeeded")).collect();
    let spread = ctrl.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - ctrl.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(verdict(
        8,
        decreasing && spread <= 1e-6,
        format!("errors {errors:?} strictly decreasing: {decreasing}; control spread {spread:.2e} (<= 1e-6)")
    ));
}

#[test]
fn criterion_09_remainder_claim() {
    let psi = GridFunction::from_fn(64, |y: f64| (TAU * y).sin()).unwrap();
    let tilt = KernelSpec::tilt(1.0, 0.5).unwrap();
    let b = drift_vector(&tilt, 1e-10).unwrap().b;
    let j1 = corrector_remainder_j(&psi, &tilt, 1e-3, 0.0).unwrap().value;
    let target = b * TAU;
    let e1 = (j1 - target).abs();
    let j_half = corrector_remainder_j(&psi, &KernelSpec::tilt(0.5, 0.5).unwrap(), 1e-3, 0.0).unwrap().value;
    let pass = e1 <= 5e-2 && j_half.abs() <= 5e-2;
    assert!(verdict(
        9,
        pass,
        format!("sigma=1: J = {j1:.5}, b*Dpsi = {target:.5}, |J - b*Dpsi| = {e1:.3e} (<= 5e-2); sigma=0.5: |J| = {:.3e} (<= 5e-2)", j_half.abs())
    ));
}

#[test]
fn criterion_10_sup_convolution() {
    let n = 64;
    let u0 = GridFunction::from_fn(n, |x: f64| 1.5 * (TAU * x).sin()).unwrap();
    let p = oscillating(u0, 2, KernelSpec::constant(0.5).unwrap(), 0.5);
    let traj = solve(&p, &SolverConfig { n, snapshots: 50, ..SolverConfig::default() }).unwrap();
    let mut pass = true;
    let mut detail = String::new();
    for &gamma in &[0.01, 0.1, 1.0] {
        let sc = sup_convolution_time(&traj.times, &traj.snapshots, gamma).unwrap();
        let mut above = true;
        let mut exact = true;
        for (j, &t) in traj.times.iter().enumerate() {
            for i in 0..n {
                let v = sc.values[j][i];
                above &= v >= traj.snapshots[j].values()[i];
                let brute = traj
                    .times
                    .iter()
                    .zip(&traj.snapshots)
                    .map(|(&s, row)| row.values()[i] - (s - t) * (s - t) / gamma)
                    .fold(f64::NEG_INFINITY, f64::max);
                exact &= brute == v;
            }
        }
        let lip = sc.lipschitz.iter().cloned().fold(0.0, f64::max);
        let ok = above && exact && lip <= sc.bound;
        pass &= ok;
        detail += &format!("gamma {gamma}: lip {lip:.3} <= {:.3}, above {above}, exact {exact}; ", sc.bound);
    }
    assert!(verdict(10, pass, detail));
}

#[test]
fn criterion_11_closed_form_constants() {
    let a1: f64 = holder_exponent_alpha0(1.0, 1.0, 2.0).unwrap();
    let a2: f64 = holder_exponent_alpha0(2.0, 1.0, 2.0).unwrap();
    let (c2, cap) = endpoint_bounds_exact(2).unwrap();
    let pass = (a1 - 0.63397).abs() <= 1e-5
        && (a2 - 0.79289).abs() <= 1e-5
        && c2 == Ratio::new(1, 6)
        && cap == Ratio::new(3, 4);
    assert!(verdict(11, pass, format!("alpha0(1,1,2) = {a1:.6}, alpha0(2,1,2) = {a2:.6}, c_2 = {c2}, C_2 = {cap}")));
}

#[test]
fn criterion_12_corrector_ansatz() {
    let problem = SweepProblem {
        a: Coefficient::TwoPlusCosY,
        hamiltonian: model_h(),
        kernel: KernelSpec::constant(1.5).unwrap(),
        u0: InitialData::Sine,
        horizon: 0.2,
    };
    let cfg = SweepConfig {
        ks: vec![16],
        ..SweepConfig::default()
    };
    let report = run_sweep(&problem, &cfg).unwrap();
    let c = report.rows[0].corrector.as_ref().expect("corrector computed");
    assert!(verdict(
        12,
        c.residual_sup < c.gap_sup,
        format!("sup|r| = {:.4e} < sup|u_eps - u_bar| = {:.4e}", c.residual_sup, c.gap_sup)
    ));
}
