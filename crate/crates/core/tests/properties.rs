use nlhj::config::{Auto, RunConfig};
use nlhj::hamiltonians::{
    audit_superlinearity, coercivity_constants, growth_bound, small_gradient_deficit, SampleBudget,
};
use nlhj::kernels::{drift_vector, normalizing_constant, periodized_weights};
use nlhj::nonlocal::eval_operator;
use nlhj::parabolic::{solve, sup_convolution_time, ParabolicProblem, ProblemKind, SolverConfig};
use nlhj::{Coefficient, GridFunction, HamiltonianSpec, KernelSpec};
use proptest::prelude::*;

fn smooth(n: usize, coeffs: &[(f64, f64)]) -> GridFunction<f64> {
    GridFunction::from_fn(n, |x: f64| {
        coeffs
            .iter()
            .enumerate()
            .map(|(j, &(c, s))| {
                let w = 2.0 * std::f64::consts::PI * (j + 1) as f64 * x;
                c * w.cos() + s * w.sin()
            })
            .sum()
    })
    .unwrap()
}

fn kernel(sigma: f64, shape: usize, slope: f64) -> KernelSpec<f64> {
    match shape {
        0 => KernelSpec::constant(sigma),
        1 => KernelSpec::tilt(sigma, slope),
        _ => KernelSpec::quadratic_tilt(sigma, slope),
    }
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn operator_annihilates_constants(
        sigma in 0.1f64..1.9,
        shape in 0usize..3,
        slope in -0.9f64..0.9,
        log_n in 4u32..8,
        c in -5.0f64..5.0,
    ) {
        let k = kernel(sigma, shape, slope);
        let n = 1usize << log_n;
        let table = periodized_weights(&k, n, 4).unwrap();
        let u = GridFunction::constant(n, c).unwrap();
        let out = eval_operator(&u, &k, &table).unwrap();
        let scale = table.weights().iter().map(|w| w.abs()).sum::<f64>() * c.abs().max(1.0);
        prop_assert!(out.sup_norm() <= 1e-13 * scale, "{} vs scale {scale}", out.sup_norm());
    }

    #[test]
    fn operator_is_monotone(
        sigma in 0.2f64..1.8,
        shape in 0usize..3,
        slope in -0.9f64..0.9,
        u in prop::collection::vec(-1.0f64..1.0, 32),
        bump in prop::collection::vec(0.0f64..1.0, 32),
        i in 0usize..32,
    ) {
        let k = kernel(sigma, shape, slope);
        let table = periodized_weights(&k, 32, 4).unwrap();
        let mut v = u.clone();
        for (j, b) in bump.iter().enumerate() {
            if j != i {
                v[j] += b;
            }
        }
        let lu = eval_operator(&GridFunction::new(u).unwrap(), &k, &table).unwrap();
        let lv = eval_operator(&GridFunction::new(v).unwrap(), &k, &table).unwrap();
        prop_assert!(lu.values()[i] <= lv.values()[i] + 1e-12);
    }

    #[test]
    fn compensator_is_inert_for_symmetric_kernels(
        sigma in 1.0f64..1.9,
        coeffs in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..6),
    ) {
        let k = KernelSpec::constant(sigma).unwrap();
        let table = periodized_weights(&k, 64, 4).unwrap();
        let u = smooth(64, &coeffs);
        let with = table.with_compensator(true).apply(&u).unwrap();
        let without = table.with_compensator(false).apply(&u).unwrap();
        let gap = with.zip_map(&without, |a, b| a - b).unwrap().sup_norm();
        prop_assert!(gap <= 1e-12 * (1.0 + with.sup_norm()), "gap {gap}");
    }

    #[test]
    fn drift_is_linear_in_the_antisymmetric_part(s in 0.05f64..0.45, width in 0.2f64..2.0) {
        let c = normalizing_constant(1.0f64).unwrap();
        let odd = move |z: f64| z * (-(z / width).powi(2)).exp();
        let k1 = KernelSpec::custom(1.0, "odd", false, move |z| c * (1.0 + s * odd(z))).unwrap();
        let k2 = KernelSpec::custom(1.0, "odd2", false, move |z| c * (1.0 + 2.0 * s * odd(z))).unwrap();
        let b1 = drift_vector(&k1, 1e-11).unwrap().b;
        let b2 = drift_vector(&k2, 1e-11).unwrap().b;
        prop_assert!((b2 - 2.0 * b1).abs() <= 1e-8 * (1.0 + b1.abs()), "{b1} {b2}");
    }

    #[test]
    fn power_law_claims_pass_superlinearity(b in 0.3f64..3.0, m in 1.3f64..3.0) {
        let h = HamiltonianSpec::power_law(Coefficient::Constant(b), Coefficient::CosY, m).unwrap();
        let budget = SampleBudget { nodes: 24, x_nodes: 1, ..SampleBudget::default() };
        let audit = audit_superlinearity(&h, &budget);
        prop_assert!(audit.passed(), "slack {} at {:?}", audit.worst_slack, audit.witness);
    }

    #[test]
    fn coercivity_certificate_holds_on_samples(b in 0.3f64..3.0, m in 1.3f64..3.0) {
        let h = HamiltonianSpec::power_law(Coefficient::Constant(b), Coefficient::CosY, m).unwrap();
        let budget = SampleBudget { nodes: 24, x_nodes: 1, ..SampleBudget::default() };
        let cert = coercivity_constants(m, h.b0, h.c0, growth_bound(&h, &budget), small_gradient_deficit(&h, &budget)).unwrap();
        for i in 1..=200 {
            let p = 2.0 + (budget.p_max - 2.0) * i as f64 / 200.0;
            for y in [0.0, 0.25, 0.5, 0.75] {
                for q in [p, -p] {
                    let lhs = h.eval(0.0, y, q);
                    let rhs = cert.c_tilde * (q.abs().powf(m) + 1.0) - cert.k;
                    prop_assert!(lhs >= rhs - 1e-9, "H({q}) = {lhs} < {rhs}");
                }
            }
        }
    }

    #[test]
    fn sup_convolution_grows_with_gamma(
        rows in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 8), 6),
        g1 in 0.01f64..1.0,
        factor in 1.0f64..10.0,
    ) {
        let times: Vec<f64> = (0..rows.len()).map(|j| 0.1 * j as f64).collect();
        let grids: Vec<GridFunction<f64>> = rows.into_iter().map(|r| GridFunction::new(r).unwrap()).collect();
        let a = sup_convolution_time(&times, &grids, g1).unwrap();
        let b = sup_convolution_time(&times, &grids, g1 * factor).unwrap();
        for (ra, rb) in a.values.iter().zip(&b.values) {
            for (x, y) in ra.iter().zip(rb) {
                prop_assert!(x <= y);
            }
        }
    }

    #[test]
    fn config_round_trips(
        sigma in 0.05f64..1.95,
        density in 0usize..4,
        slope in -0.9f64..0.9,
        log_n in 6u32..11,
        snapshots in 1usize..40,
        b0 in prop::option::of(0.1f64..2.0),
        ps in prop::collection::btree_set(0i32..40, 1..6),
    ) {
        let mut cfg = RunConfig::default();
        cfg.kernel.sigma = sigma;
        cfg.kernel.density = ["constant", "tilt", "quadratic_tilt", "log_tilt"][density].into();
        cfg.kernel.slope = slope;
        cfg.grid.n = 1 << log_n;
        cfg.grid.k = cfg.grid.n / 64;
        cfg.grid.snapshots = snapshots;
        cfg.hamiltonian.b0 = Auto(b0);
        cfg.cell.table_p = ps.into_iter().map(|p| p as f64 / 7.0).collect();
        let text = cfg.emit();
        prop_assert_eq!(RunConfig::parse_str(&text).unwrap(), cfg);
    }
}

fn comparison_problem(u0: GridFunction<f64>, sigma: f64) -> ParabolicProblem<f64> {
    ParabolicProblem {
        kind: ProblemKind::Oscillating { k: 2 },
        a: Coefficient::TwoPlusCosY,
        hamiltonian: HamiltonianSpec::power_law(Coefficient::Constant(1.0), Coefficient::CosY, 2.0).unwrap(),
        kernel: KernelSpec::tilt(sigma, 0.5).unwrap(),
        u0,
        horizon: 0.02,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn ordered_data_stay_ordered(
        sigma in prop::sample::select(vec![0.5f64, 1.0, 1.5]),
        base in prop::collection::vec((-0.5f64..0.5, -0.5f64..0.5), 1..4),
        lift in prop::collection::vec((-0.3f64..0.3, -0.3f64..0.3), 1..4),
        shift in 0.0f64..0.3,
    ) {
        let u0 = smooth(32, &base);
        let raw = smooth(32, &lift);
        let gap = raw.min();
        let v0 = u0.zip_map(&raw, |u, r| u + r - gap + shift).unwrap();
        let cfg = SolverConfig { n: 32, snapshots: 5, ..SolverConfig::default() };
        let du = solve(&comparison_problem(u0.clone(), sigma), &cfg).unwrap().dt_min;
        let dv = solve(&comparison_problem(v0.clone(), sigma), &cfg).unwrap().dt_min;
        let fixed = SolverConfig { fixed_dt: Some(0.5 * du.min(dv)), ..cfg };
        let tu = solve(&comparison_problem(u0, sigma), &fixed).unwrap();
        let tv = solve(&comparison_problem(v0, sigma), &fixed).unwrap();
        for (a, b) in tu.snapshots.iter().zip(&tv.snapshots) {
            for (x, y) in a.values().iter().zip(b.values()) {
                prop_assert!(x <= &(y + 1e-12), "{x} > {y}");
            }
        }
    }
}
