use nlhj::cell::{long_time_average, vanishing_discount_sweep, CellConfig, CellModel, CellParams};
use nlhj::effective::{audit_properties, tabulate, FormulaAboveOne, PropertyClaims, TableAxes, TableSource};
use nlhj::{Coefficient, HamiltonianSpec, KernelSpec};

fn model(sigma: f64, kernel: KernelSpec<f64>, a: Coefficient<f64>) -> CellModel<f64> {
    assert_eq!(kernel.sigma(), sigma);
    let h = HamiltonianSpec::power_law(Coefficient::Constant(1.0), Coefficient::CosY, 2.0).unwrap();
    CellModel::new(a, h, &kernel).unwrap()
}

fn cfg(n: usize) -> CellConfig<f64> {
    CellConfig { n, ..CellConfig::default() }
}

fn params(p: f64, l: f64) -> CellParams<f64> {
    CellParams { x: 0.0, p, l }
}

#[test]
fn discount_bracket_tightens_along_the_ladder() {
    let cases = [
        model(0.5, KernelSpec::tilt(0.5, 0.5).unwrap(), Coefficient::TwoPlusCosY),
        model(1.0, KernelSpec::tilt(1.0, 0.5).unwrap(), Coefficient::TwoPlusCosY),
        model(1.5, KernelSpec::constant(1.5).unwrap(), Coefficient::TwoPlusCosY),
    ];
    let c = cfg(128);
    for m in &cases {
        for p in [0.0, 0.7] {
            let sol = vanishing_discount_sweep(m, params(p, 0.3), &c).unwrap();
            for w in sol.history.windows(2) {
                let (s0, s1) = (w[0].upper - w[0].lower, w[1].upper - w[1].lower);
                assert!(s1 <= s0 + c.tol, "sigma {}: spread {s1} after {s0}", m.sigma);
            }
        }
    }
}

#[test]
fn symmetric_order_one_kernel_has_no_drift() {
    let m = model(1.0, KernelSpec::constant(1.0).unwrap(), Coefficient::TwoPlusCosY);
    assert_eq!(m.drift, 0.0);
    let tilted = model(1.0, KernelSpec::tilt(1.0, 0.5).unwrap(), Coefficient::TwoPlusCosY);
    let forced = CellModel { drift: 0.0, ..tilted.clone() };
    let c = cfg(128);
    let a = vanishing_discount_sweep(&m, params(0.5, 0.0), &c).unwrap();
    let b = vanishing_discount_sweep(&forced, params(0.5, 0.0), &c).unwrap();
    assert!((a.h_bar - b.h_bar).abs() <= 1e-12, "{} vs {}", a.h_bar, b.h_bar);
    let with_drift = vanishing_discount_sweep(&tilted, params(0.5, 0.0), &c).unwrap();
    assert!(with_drift.h_bar.is_finite());
}

#[test]
fn discount_and_long_time_agree() {
    let cases = [
        (model(0.5, KernelSpec::constant(0.5).unwrap(), Coefficient::TwoPlusCosY), 0.3),
        (model(1.0, KernelSpec::tilt(1.0, 0.5).unwrap(), Coefficient::TwoPlusCosY), 0.5),
        (model(1.5, KernelSpec::constant(1.5).unwrap(), Coefficient::TwoPlusCosY), 1.0),
    ];
    for (m, p) in &cases {
        let disc = vanishing_discount_sweep(m, params(*p, 0.0), &cfg(128)).unwrap();
        let lt = long_time_average(m, params(*p, 0.0), 128, 200.0, 4).unwrap();
        let gap = (disc.h_bar - lt.h_bar).abs();
        assert!(
            gap <= disc.spread + lt.error,
            "sigma {}: discount {} ± {}, long time {} ± {}",
            m.sigma,
            disc.h_bar,
            disc.spread,
            lt.h_bar,
            lt.error
        );
    }
}

#[test]
fn formula_and_discount_agree_above_one() {
    let m = model(1.5, KernelSpec::constant(1.5).unwrap(), Coefficient::TwoPlusCosY);
    let formula = FormulaAboveOne::new(m.a.clone(), m.hamiltonian.clone()).unwrap();
    for (p, l) in [(0.0, 0.0), (0.5, -1.0), (1.0, 0.0), (1.5, 1.0)] {
        let disc = vanishing_discount_sweep(&m, params(p, l), &cfg(128)).unwrap();
        let f = formula.value(0.0, p, l);
        assert!((f - disc.h_bar).abs() <= disc.spread + 1e-2, "({p},{l}): {f} vs {}", disc.h_bar);
    }
}

#[test]
fn formula_table_is_affine_in_l_for_constant_a_and_coercive() {
    let a0 = 1.7;
    let m = model(1.5, KernelSpec::constant(1.5).unwrap(), Coefficient::Constant(a0));
    let source = TableSource::Formula(FormulaAboveOne::new(m.a.clone(), m.hamiltonian.clone()).unwrap());
    let axes = TableAxes::<f64>::default();
    let (table, failures) = tabulate(&source, axes.clone()).unwrap();
    assert!(failures.is_empty());
    let il0 = axes.l.iter().position(|&l| l == 0.0).unwrap();
    for ip in 0..axes.p.len() {
        for (il, &l) in axes.l.iter().enumerate() {
            let shifted = table.get(0, ip, il0) - a0 * l;
            assert!((table.get(0, ip, il) - shifted).abs() <= 1e-12);
        }
    }
    let audit = audit_properties(
        &table,
        &PropertyClaims {
            a_sup: a0,
            coercivity: Some((1.0, 1.0)),
            m: 2.0,
        },
    );
    assert!(audit.passed(), "{:?}", audit.violations);
}
