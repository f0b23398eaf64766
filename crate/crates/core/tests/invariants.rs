use proptest::prelude::*;

use rds_dichotomy::cli::{ExperimentConfig, InjectedPath, Kappa, ModelChoice};
use rds_dichotomy::cocycle::{compose_discrete, discretize, ContinuousCocycle, DiscreteCocycle};
use rds_dichotomy::dichotomy::{
    autonomous_certificate, discrete_constant_certificate, projection_distance, verify_dichotomy,
    CocycleRef, DichotomyCertificate, TimeKind, VerifyWindow,
};
use rds_dichotomy::greens::{Admissibility, ForcingSequence};
use rds_dichotomy::linalg::{op_norm, Mat, Vector};
use rds_dichotomy::noise::{
    noise_bounds, ou_identity_residual, ou_value, sample_wiener_path, shift_path, KappaFn,
    NoiseSignal, SamplePath, TimeGrid,
};
use rds_dichotomy::robustness::{delta_threshold, robust_constants, robust_dichotomy_discrete};
use rds_dichotomy::sde_bridge::{
    forward_transform, inverse_transform, transform, NoiseShape, StratonovichSpec,
};
use std::sync::Arc;

const H: f64 = 1.0 / 32.0;

fn time_varying(a: [f64; 4], b: f64) -> ContinuousCocycle {
    ContinuousCocycle::new(2, move |t| {
        Mat::from_row_slice(2, 2, &[a[0] + b * t.sin(), a[1], a[2], a[3] + b * (2.0 * t).cos()])
    })
}

fn entries() -> impl Strategy<Value = [f64; 4]> {
    prop::array::uniform4(-1.5..1.5f64)
}

/// `diag(μ)` conjugated by a shear: non-normal but well conditioned.
fn hyperbolic_matrix(mu: [f64; 2], shear: f64) -> Mat {
    let s = Mat::from_row_slice(2, 2, &[1.0, shear, 0.0, 1.0]);
    let s_inv = Mat::from_row_slice(2, 2, &[1.0, -shear, 0.0, 1.0]);
    s * Mat::from_diagonal(&Vector::from_vec(mu.to_vec())) * s_inv
}

fn exponent() -> impl Strategy<Value = f64> {
    prop_oneof![-2.0..-0.3f64, 0.3..2.0f64]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn shift_group_law(seed in 0u64..1000, a in -64i64..64, b in -64i64..64) {
        let grid = TimeGrid::new(-8.0, 8.0, 1.0 / 16.0).unwrap();
        let p = sample_wiener_path(&grid, seed);
        let (ta, tb) = (a as f64 / 16.0, b as f64 / 16.0);
        prop_assume!((a + b).abs() < 128 && b.abs() < 128);
        let twice = shift_path(&shift_path(&p, ta).unwrap(), tb);
        let once = shift_path(&p, ta + tb);
        if let (Ok(twice), Ok(once)) = (twice, once) {
            for t in twice.grid().times() {
                if let Some(v) = once.at(t) {
                    prop_assert!((twice.at(t).unwrap() - v).abs() <= 1e-12 * (1.0 + v.abs()));
                }
            }
        }
    }

    #[test]
    fn shift_then_integrate_equals_direct(seed in 0u64..1000, k in 0i64..64) {
        let grid = TimeGrid::new(-40.0, 4.0, 1.0 / 16.0).unwrap();
        let p = sample_wiener_path(&grid, seed);
        let t = k as f64 / 16.0;
        let direct = ou_value(&p, t, 1e-9).unwrap();
        let shifted = ou_value(&shift_path(&p, t).unwrap(), 0.0, 1e-9).unwrap();
        prop_assert!((direct - shifted).abs() < 1e-9, "{direct} {shifted}");
    }

    #[test]
    fn ou_identity_on_smooth_paths(freq in 0.2..2.0f64, phase in 0.0..6.3f64) {
        let res = |h: f64| {
            let g = TimeGrid::new(-40.0, 4.0, h).unwrap();
            let p = SamplePath::from_fn(&g, "smooth", |s| (freq * s + phase).sin() - phase.sin());
            ou_identity_residual(&p, &TimeGrid::new(-2.0, 4.0, h).unwrap(), 1e-10).unwrap()
        };
        prop_assert!(res(H) <= H);
        prop_assert!(res(H / 2.0) <= H / 2.0);
    }

    #[test]
    fn noise_bounds_survive_refinement(freq in 0.2..2.0f64, phase in 0.0..6.3f64) {
        let f = move |s: f64| (freq * s + phase).sin() - phase.sin();
        let bounds = |h: f64| {
            let g = TimeGrid::new(-40.0, 4.0, h).unwrap();
            let p = SamplePath::from_fn(&g, "smooth", f);
            noise_bounds(&p, &KappaFn::Rational, &TimeGrid::new(-2.0, 4.0, h).unwrap()).unwrap()
        };
        let (coarse, fine) = (bounds(H), bounds(H / 2.0));
        // modulus of continuity of κz* and (κ−κ̇)z* over one cell
        let slack = 4.0 * H * (1.0 + freq);
        prop_assert!(fine.m1 >= coarse.m1 - slack);
        prop_assert!(fine.m2 >= coarse.m2 - slack);
    }

    #[test]
    fn cocycle_law_and_identity(a in entries(), b in -0.5..0.5f64, t in 0.0..2.0f64, s in 0.0..2.0f64) {
        let c = time_varying(a, b).with_max_step(1.0 / 64.0);
        prop_assert_eq!(c.propagator(0.3, 0.0).unwrap(), Mat::identity(2, 2));
        let whole = c.evolution(t + s, 0.0).unwrap();
        let split = c.evolution(t + s, s).unwrap() * c.evolution(s, 0.0).unwrap();
        prop_assert!(op_norm(&(&whole - &split)) <= 1e-7 * (1.0 + op_norm(&whole)));
    }

    #[test]
    fn integration_is_linear(a in entries(), x in prop::array::uniform2(-2.0..2.0f64),
                             y in prop::array::uniform2(-2.0..2.0f64), al in -2.0..2.0f64, be in -2.0..2.0f64) {
        let c = time_varying(a, 0.3);
        let (x, y) = (Vector::from_vec(x.to_vec()), Vector::from_vec(y.to_vec()));
        let lhs = c.integrate(0.0, 1.5, &(&x * al + &y * be)).unwrap();
        let rhs = c.integrate(0.0, 1.5, &x).unwrap() * al + c.integrate(0.0, 1.5, &y).unwrap() * be;
        prop_assert!((&lhs - &rhs).norm() <= 1e-10 * (1.0 + lhs.norm()));
    }

    #[test]
    fn discretize_compose_consistency(a in entries(), n in 1i64..4) {
        let c = time_varying(a, 0.2);
        let composed = compose_discrete(&discretize(&c), n).unwrap();
        let direct = c.propagator(0.0, n as f64).unwrap();
        prop_assert!(op_norm(&(&composed - &direct)) <= n as f64 * 1e-7 * (1.0 + op_norm(&direct)));
    }

    #[test]
    fn autonomous_certificates_are_consistent(mu in prop::array::uniform2(exponent()), shear in -1.0..1.0f64) {
        let a = hyperbolic_matrix(mu, shear);
        let cert = autonomous_certificate(&a).unwrap();
        let ps = cert.stable_at(0.0).unwrap();
        let pu = cert.unstable_at(0.0).unwrap();
        prop_assert!(op_norm(&(&ps * &ps - &ps)) < 1e-9);
        prop_assert!(op_norm(&(&ps + &pu - Mat::identity(2, 2))) < 1e-9);
        prop_assert_eq!(projection_distance(&cert, &cert, [0.0, 1.0, 2.5]).unwrap(), 0.0);
        let slack = if shear == 0.0 { 1.05 } else { 1.5 };
        let report = verify_dichotomy(
            CocycleRef::Continuous(&ContinuousCocycle::autonomous(a)),
            &cert,
            VerifyWindow { start: -2.0, end: 2.0, spacing: 0.25 },
            slack,
        ).unwrap();
        prop_assert!(report.pass, "{:?}", report.failures());
    }

    #[test]
    fn normal_matrices_verify_with_tight_slack(mu in prop::array::uniform2(exponent()), angle in 0.0..3.2f64) {
        let r = Mat::from_row_slice(2, 2, &[angle.cos(), -angle.sin(), angle.sin(), angle.cos()]);
        let a = &r * Mat::from_diagonal(&Vector::from_vec(mu.to_vec())) * r.transpose();
        let cert = autonomous_certificate(&a).unwrap();
        let report = verify_dichotomy(
            CocycleRef::Continuous(&ContinuousCocycle::autonomous(a)),
            &cert,
            VerifyWindow { start: -2.0, end: 2.0, spacing: 0.25 },
            1.05,
        ).unwrap();
        prop_assert!(report.pass, "{:?}", report.failures());
    }

    #[test]
    fn gamma_contracts_and_solutions_satisfy_the_equation(
        eps in 0.0..0.1f64,
        xs in prop::collection::vec(-1.0..1.0f64, 2 * 41),
        ys in prop::collection::vec(-1.0..1.0f64, 2 * 41),
        fs in prop::collection::vec(-1.0..1.0f64, 2 * 41),
    ) {
        let saddle = Mat::from_diagonal(&Vector::from_vec(vec![0.5, 2.0]));
        let a = DiscreteCocycle::constant(saddle.clone());
        let cert = discrete_constant_certificate(&saddle, 0.0).unwrap();
        let b = DiscreteCocycle::from_fn(2, move |n| {
            Mat::from_row_slice(2, 2, &[0.0, -eps, eps * (n as f64).cos(), 0.0])
        });
        let op = Admissibility::new(&a, &cert, &b, -20, 20).unwrap();
        let rho = op.contraction_factor();
        let vecs = |v: &[f64]| v.chunks(2).map(|c| Vector::from_column_slice(c)).collect::<Vec<_>>();
        let mut f = ForcingSequence::zeros(-20, 20, 2);
        f.values = vecs(&fs);
        let (x, y) = (vecs(&xs), vecs(&ys));
        let gx = op.gamma_apply(&f, &x).unwrap();
        let gy = op.gamma_apply(&f, &y).unwrap();
        let sup = |u: &[Vector], v: &[Vector]| u.iter().zip(v).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max);
        prop_assert!(sup(&gx, &gy) <= rho * sup(&x, &y) + 1e-12);
        let sol = op.bounded_solution(&f, 1e-10, None).unwrap();
        prop_assert!(sol.equation_residual < 1e-8, "{}", sol.equation_residual);
        let alpha = cert.exponent;
        let q = (-alpha).exp();
        let a_priori = cert.bound * f.sup_norm() * (1.0 + q) / ((1.0 - q) * (1.0 - rho));
        prop_assert!(sol.sup_norm() <= a_priori * (1.0 + 1e-9));
    }

    #[test]
    fn robust_constants_monotone_in_delta(k in 1.0..3.0f64, alpha in 0.1..2.0f64, u in 0.0..1.0f64, v in 0.0..1.0f64) {
        let limit = 0.99 * delta_threshold(alpha).unwrap();
        let (d1, d2) = (limit * u.min(v), limit * u.max(v));
        let (c1, c2) = (robust_constants(k, alpha, d1).unwrap(), robust_constants(k, alpha, d2).unwrap());
        prop_assert!(c2.alpha_tilde <= c1.alpha_tilde);
        prop_assert!(c2.m >= c1.m);
        let c0 = robust_constants(k, alpha, 0.0).unwrap();
        prop_assert_eq!((c0.alpha_tilde, c0.beta_tilde, c0.m, c0.rho), (alpha, alpha, k, 0.0));
    }

    #[test]
    fn emitted_discrete_certificates_verify(eps in 0.0..0.08f64, freq in 0.1..3.0f64) {
        let base = DiscreteCocycle::constant(Mat::from_element(1, 1, 0.5));
        let cert = DichotomyCertificate::constant(TimeKind::Discrete, Mat::identity(1, 1), 1.0, 2f64.ln()).unwrap();
        let psi = DiscreteCocycle::from_fn(1, move |n| Mat::from_element(1, 1, 0.5 + eps * (freq * n as f64).sin()));
        let r = robust_dichotomy_discrete(&base, &cert, &psi, -10, 10).unwrap();
        prop_assert!(r.verification.pass, "{:?}", r.verification.failures());
    }

    #[test]
    fn transform_inverts_pointwise(seed in 0u64..500, eta in 0.0..1.0f64,
                                   ys in prop::collection::vec(-3.0..3.0f64, 8)) {
        let spec = StratonovichSpec::new(
            Mat::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -1.0]),
            Arc::new(|y: &Vector| Vector::zeros(y.len())),
            Arc::new(|y: &Vector| Mat::zeros(y.len(), y.len())),
            eta,
            KappaFn::Rational,
            NoiseShape::Position,
        ).unwrap();
        let signal = NoiseSignal::sample(seed, KappaFn::Rational, -2.0, 2.0, H, 1e-9).unwrap();
        let ode = transform(&spec, &signal).unwrap();
        let traj: Vec<(f64, Vector)> = ys
            .chunks(2)
            .enumerate()
            .map(|(i, c)| (-1.0 + 0.5 * i as f64, Vector::from_column_slice(c)))
            .collect();
        let back = inverse_transform(&forward_transform(&traj, &ode), &ode);
        for ((_, y), (_, z)) in traj.iter().zip(&back) {
            prop_assert!((y - z).norm() <= 4.0 * f64::EPSILON * y.norm());
        }
    }
}

fn config_strategy() -> impl Strategy<Value = ExperimentConfig> {
    let grid = prop::collection::btree_set(0u32..1000, 1..6).prop_map(|s| {
        s.into_iter().rev().map(|k| k as f64 / 1000.0).collect::<Vec<f64>>()
    });
    (
        any::<u64>(),
        (-50.0..-0.5f64, 0.5..50.0f64, 1u32..8),
        (1e-14..1e-3f64, 1e-14..1e-3f64, 1e-3..0.5f64),
        prop_oneof![Just(Kappa::Rational), (0.01..10.0f64).prop_map(Kappa::Constant)],
        grid,
        (2usize..100_000, 0.0..1.0f64, 0.0..1.0f64, -0.5..0.5f64),
        prop::sample::select(vec![InjectedPath::Wiener, InjectedPath::Zero, InjectedPath::Linear, InjectedPath::Sine]),
        prop::sample::select(vec![ModelChoice::Cubic, ModelChoice::Additive, ModelChoice::Both]),
        (1usize..16, 0.01..5.0f64, -20.0..20.0f64, 0.01..2.0f64),
        prop::option::of(prop::array::uniform4(-3.0..3.0f64)),
        prop::option::of("[a-z][a-z0-9_/]{0,12}"),
    )
        .prop_map(|(seed, (lo, hi, hk), (tol, tail, vt), kappa, eta_grid, (paths, sb, sp, se), inj, model, (n, damp, fl, rad), m, out)| {
            let matrix = m.map(|e| Mat::from_row_slice(2, 2, &e));
            ExperimentConfig {
                command: None,
                seed,
                t_min: lo,
                t_max: hi,
                h: 1.0 / (1u64 << hk) as f64,
                tol,
                tail_tol: tail,
                kappa,
                eta_grid,
                paths,
                variance_tol: vt,
                injected_path: inj,
                scalar_base: sb,
                scalar_perturbed: sp,
                saddle_eps: se,
                matrix_perturbed: matrix.as_ref().map(|a| a * 1.01),
                matrix,
                model,
                radius: rad,
                n_modes: n,
                damping: damp,
                f_linear: fl,
                out,
                ..ExperimentConfig::default()
            }
        })
}

proptest! {
    #[test]
    fn config_round_trips(cfg in config_strategy()) {
        cfg.validate().unwrap();
        let text = cfg.to_config_string();
        prop_assert_eq!(ExperimentConfig::parse(&text).unwrap(), cfg);
    }
}
