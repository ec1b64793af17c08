use mdcert_core::lmi::{assemble_centralized_sc, assemble_distributed_convex, DistributedMultipliers};
use mdcert_core::sdp::sweep::{run_sweep, EtaGrid, RowStatus, SweepConfig, SweepMode};
use mdcert_core::sdp::*;
use mdcert_core::{Error, ProblemClass, SymMatrix};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sc(kappa_f: f64, kappa_phi: f64) -> ProblemClass {
    ProblemClass::from_conditions(kappa_f, kappa_phi).unwrap()
}

fn cvx(l_f: f64, kappa_phi: f64) -> ProblemClass {
    ProblemClass::from_params(0.0, l_f, 1.0, kappa_phi).unwrap()
}

fn block(f0: &[f64], fj: &[&[f64]], dim: usize) -> AffineBlock {
    AffineBlock {
        f0: SymMatrix::new(dim, f0).unwrap(),
        fj: fj.iter().map(|f| SymMatrix::new(dim, f).unwrap()).collect(),
    }
}

#[test]
fn solver_diagonal_example() {
    let map = AffineMatrixMap::new(
        vec![VarSign::Nonnegative],
        vec![block(&[-1.0, 0.0, 0.0, 0.0], &[&[1.0, 0.0, 0.0, -1.0]], 2)],
    )
    .unwrap();
    let v = solve_feasibility(&map, 1e-9, 4000).unwrap();
    assert!(v.is_feasible());
    let y = v.y.unwrap();
    assert!(y[0] >= 0.0);
    assert!(v.margin <= -1e-9);
    assert!((v.margin - map.max_eigenvalue(&y).unwrap()).abs() < 1e-15);
    // The optimum is y = 1/2 with margin -1/2.
    assert!((v.margin + 0.5).abs() < 1e-6, "{}", v.margin);
}

#[test]
fn solver_constant_block_is_infeasible() {
    let map = AffineMatrixMap::new(Vec::new(), vec![block(&[1.0], &[], 1)]).unwrap();
    let v = solve_feasibility(&map, 1e-9, 4000).unwrap();
    assert_eq!(v.status, FeasibilityStatus::Infeasible);
    assert_eq!(v.margin, 1.0);
}

#[test]
fn solver_centralized_example() {
    let pc = ProblemClass::from_params(1.0, 3.0, 1.0, 2.0).unwrap();
    let map = AffineMatrixMap::from_probe(vec![VarSign::Nonnegative; 2], |y| {
        Ok(vec![assemble_centralized_sc(&pc, 0.9, 0.5, y[0], y[1])?])
    })
    .unwrap();
    let v = solve_feasibility(&map, 1e-9, 4000).unwrap();
    assert!(v.is_feasible());
    assert!(v.y.unwrap().iter().all(|&s| s >= 0.0));
}

#[test]
fn solver_rejects_malformed_maps() {
    assert!(AffineMatrixMap::new(vec![VarSign::Free], vec![block(&[1.0], &[], 1)]).is_err());
    assert!(AffineMatrixMap::new(Vec::new(), Vec::new()).is_err());
}

#[test]
fn analytic_certificate_examples() {
    let c = analytic_certificate(&ProblemClass::from_params(1.0, 3.0, 1.0, 2.0).unwrap()).unwrap();
    assert!((c.eta - 0.5).abs() < 1e-15);
    assert!((c.sigma_f - 0.5).abs() < 1e-15);
    assert!((c.sigma_phi - 1.125).abs() < 1e-12);
    assert!((c.rho - 0.8125).abs() < 1e-15);
    assert!(c.residual <= 1e-8);
    assert!((analytic_rho(&sc(1.0, 2.0)) - 0.75).abs() < 1e-15);

    let limit = analytic_certificate(&sc(3.0, 1.0)).unwrap();
    assert!((limit.rho - 0.25).abs() < 1e-15);
    assert_eq!(limit.limit_surrogate_kappa_phi, Some(1.0 + LIMIT_SURROGATE_OFFSET));
    assert!(limit.residual <= 1e-8);
    assert!(limit.recompute_residual(&sc(3.0, 1.0)).unwrap() <= 1e-8);
}

#[test]
fn analytic_certificates_are_feasible_on_a_grid() {
    for kf in [1.5, 2.0, 3.0, 5.0, 10.0] {
        for kp in [1.25, 2.0, 5.0] {
            let c = analytic_certificate(&sc(kf, kp)).unwrap();
            assert!(c.residual <= 1e-8, "kf {kf} kp {kp}: {}", c.residual);
        }
    }
}

#[test]
fn min_rho_examples() {
    let opts = EngineOptions::default();
    let c = min_rho_centralized(&sc(3.0, 2.0), None, &opts).unwrap();
    assert!(c.rho <= 0.8125 + 1e-4, "{}", c.rho);
    assert!(c.recompute_residual(&sc(3.0, 2.0)).unwrap() <= -opts.delta / 2.0);
    let c = min_rho_centralized(&sc(2.0, 2.0), None, &opts).unwrap();
    assert!(c.rho <= 7.0 / 9.0 + 1e-4, "{}", c.rho);
    let c = min_rho_centralized(&sc(3.0, 1.0 + 1e-6), None, &opts).unwrap();
    assert!((c.rho - 0.25).abs() <= 2e-4, "{}", c.rho);
}

#[test]
fn gradient_descent_limit() {
    let opts = EngineOptions::default();
    for kf in [2.0, 3.0, 10.0] {
        let c = min_rho_centralized(&sc(kf, 1.0), None, &opts).unwrap();
        let gd = ((kf - 1.0) / (kf + 1.0)).powi(2);
        assert!((c.rho - gd).abs() <= 2e-4, "kf {kf}: {} vs {gd}", c.rho);
    }
}

#[test]
fn unstable_fixed_step_has_no_certificate() {
    let opts = EngineOptions::default();
    match min_rho_centralized(&sc(3.0, 2.0), Some(50.0), &opts) {
        Err(Error::NoCertificate(m)) => assert!(m.contains("no exponential certificate found")),
        other => panic!("unexpected {other:?}"),
    }
}

fn feasible_at(pc: &ProblemClass, rho: f64, eta: f64) -> bool {
    let map = AffineMatrixMap::from_probe(vec![VarSign::Nonnegative; 2], |y| {
        Ok(vec![assemble_centralized_sc(pc, rho, eta, y[0], y[1])?])
    })
    .unwrap();
    solve_feasibility(&map, 1e-9, 4000).unwrap().is_feasible()
}

#[test]
fn bisection_lands_on_the_scanned_boundary() {
    let opts = EngineOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..50 {
        let pc = sc(rng.gen_range(1.2..10.0), rng.gen_range(1.1..5.0));
        let eta = analytic_certificate(&pc).unwrap().eta * rng.gen_range(0.5..1.0);
        let c = min_rho_centralized(&pc, Some(eta), &opts).unwrap();
        // Scan upward in steps of 1e-4 from below the certified rate.
        let start = c.rho - 5e-4;
        let boundary = (0..=10)
            .map(|j| start + j as f64 * 1e-4)
            .find(|&r| feasible_at(&pc, r, eta))
            .expect("scan never became feasible");
        assert!(
            (boundary - c.rho).abs() <= 1e-4 + opts.rho_width,
            "trial {trial}: bisection {} vs scan {boundary}",
            c.rho
        );
    }
}

#[test]
fn certification_is_deterministic() {
    let opts = EngineOptions::default();
    let pc = sc(2.0, 2.0);
    let grid = log_grid(0.05, 1.0, 6).unwrap();
    let a = min_rho_distributed(&pc, 0.3, &grid, &opts).unwrap();
    let b = min_rho_distributed(&pc, 0.3, &grid, &opts).unwrap();
    assert_eq!(a, b);
    let a = min_rho_centralized(&sc(4.0, 3.0), None, &opts).unwrap();
    let b = min_rho_centralized(&sc(4.0, 3.0), None, &opts).unwrap();
    assert_eq!(a, b);
}

#[test]
fn convex_centralized_matches_closed_form() {
    // With mu_f = 0 the best eps at step eta is eta - L_f eta^2 / (2 mu_phi).
    let opts = EngineOptions::default();
    for (l_f, kp) in [(1.0, 2.0), (2.0, 1.5), (0.5, 3.0)] {
        let pc = cvx(l_f, kp);
        for frac in [0.2, 0.5, 1.0, 1.5] {
            let eta = frac / l_f;
            let c = max_eps_centralized_at(&pc, eta, &opts).unwrap().unwrap();
            let exact = eta - l_f * eta * eta / 2.0;
            assert!((c.eps - exact).abs() <= 1e-4 * (1.0 + exact), "L {l_f} eta {eta}: {} vs {exact}", c.eps);
            assert!(c.recompute_residual(&pc).unwrap() <= opts.convex_tolerance);
        }
    }
}

#[test]
fn convex_centralized_grid_best() {
    let opts = EngineOptions::default();
    let pc = cvx(1.0, 1.0);
    let grid = log_grid(0.1, 1.9, 12).unwrap();
    let best = max_eps_centralized(&pc, &grid, &opts).unwrap();
    assert!(best.eps > 0.0);
    // Past the best step-size the certified eps does not grow.
    let profile = max_eps_centralized_profile(&pc, &grid, &opts).unwrap();
    let eps: Vec<f64> = profile.iter().map(|c| c.as_ref().map_or(0.0, |c| c.eps)).collect();
    let k = grid.iter().position(|&e| e == best.eta).unwrap();
    for w in eps[k..].windows(2) {
        assert!(w[1] <= w[0] + 1e-6, "{eps:?}");
    }
}

#[test]
fn distributed_certificates_round_trip() {
    let opts = EngineOptions::default();
    let pc = sc(2.0, 2.0);
    for lambda in [0.0, 0.4472135954999579] {
        let c = min_rho_distributed(&pc, lambda, &default_eta_grid(&pc), &opts).unwrap();
        assert!(c.rho < 1.0);
        let r = c.recompute_residuals(&pc, lambda).unwrap();
        assert!(r[0].max(r[1]) <= -opts.delta / 2.0, "{r:?}");
        assert!(c.vars.p.min_eigenvalue() >= opts.delta_p / 2.0);
        assert!((c.vars.p.trace() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn distributed_rate_curve_has_interior_minimum_and_worsens_with_lambda() {
    let opts = EngineOptions::default();
    let pc = sc(2.0, 2.0);
    let grid = default_eta_grid(&pc);
    let best = |lambda: f64| -> (usize, f64) {
        let prof = min_rho_distributed_profile(&pc, lambda, &grid, &opts).unwrap();
        prof.iter()
            .enumerate()
            .map(|(i, c)| (i, c.as_ref().map_or(1.0, |c| c.rho)))
            .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a })
    };
    let (i5, _) = best(0.5);
    assert!(i5 > 0 && i5 < grid.len() - 1);
    assert!(best(0.3).1 <= best(0.7).1);
}

#[test]
fn sweep_single_cell_equals_direct_call() {
    let opts = EngineOptions::default();
    let pc = sc(2.0, 2.0);
    let cfg = SweepConfig {
        mode: SweepMode::DistributedSc,
        kappa_f: vec![2.0],
        kappa_phi: vec![2.0],
        lambda: vec![0.3],
        eta1: Some(EtaGrid::Values(vec![0.4])),
        optimize_eta1: false,
    };
    let rows = run_sweep(&cfg, &opts).unwrap();
    assert_eq!(rows.len(), 1);
    let direct = min_rho_distributed_at(&pc, 0.3, 0.4, &opts).unwrap().unwrap();
    assert_eq!(rows[0].rate, direct.rho);
    assert_eq!(rows[0].status, RowStatus::Certified);
}

#[test]
fn convex_distributed_lmi_has_no_certificate_for_nonunit_mirror_condition() {
    let opts = EngineOptions::default();
    let grid = log_grid(1e-2, 2.0, 8).unwrap();
    for (kp, lambda) in [(2.0, 0.0), (2.0, 0.2), (1.0 + 1e-6, 0.2), (1.0, 0.2)] {
        match max_eps_distributed(&cvx(1.0, kp), lambda, &grid, &opts) {
            Err(Error::NoCertificate(_)) => {}
            other => panic!("kappa_phi {kp} lambda {lambda}: {other:?}"),
        }
    }
    // Euclidean geometry on a perfectly mixing network is the one certified case.
    let c = max_eps_distributed(&cvx(1.0, 1.0), 0.0, &grid, &opts).unwrap();
    assert!(c.eps > 0.0);
    assert!(c.recompute_residuals(&cvx(1.0, 1.0), 0.0).unwrap().iter().all(|&r| r <= opts.convex_tolerance));
}

fn vars(eta1: f64, p: f64, q: f64, s: [f64; 3], sigma: [f64; 3]) -> DistributedMultipliers {
    DistributedMultipliers {
        eta1,
        p: SymMatrix::new(2, &[p, q, q, 1.0 - p]).unwrap(),
        sigma_eq: SymMatrix::new(2, &[s[0], s[1], s[1], s[2]]).unwrap(),
        sigma_f: sigma[0],
        sigma_phi: sigma[1],
        sigma_lambda: sigma[2],
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    /// At unit rate the consensus block has no Lyapunov term on `z`, and the
    /// mirror-map constraint alone makes the `(z, x)` minor indefinite unless
    /// `sigma_phi = 0`; every candidate with `eps > 0` is therefore rejected.
    #[test]
    fn convex_distributed_blocks_reject_positive_eps(
        kp in 1.01f64..10.0,
        lambda in 0.0f64..0.99,
        eta1 in 0.0f64..3.0,
        p in 0.01f64..0.99,
        qf in -0.99f64..0.99,
        s in prop::array::uniform3(-10.0f64..10.0),
        sigma in prop::array::uniform3(0.0f64..10.0),
        eps in 1e-6f64..2.0,
    ) {
        let pc = cvx(1.0, kp);
        let q = qf * (p * (1.0 - p)).sqrt();
        let v = vars(eta1, p, q, s, sigma);
        let m2 = assemble_distributed_convex(2, &pc, lambda, eps, &v).unwrap();
        let zz = m2.get(0, 0);
        let expected = sigma[2] * lambda * lambda - sigma[1] / (1.0 + kp);
        prop_assert!((zz - expected).abs() <= 1e-12 * (1.0 + expected.abs()));
        let det = zz * m2.get(2, 2) - m2.get(0, 2) * m2.get(0, 2);
        if sigma[1] > 1e-6 && zz <= 0.0 {
            prop_assert!(det < 0.0);
        }
        let worst = assemble_distributed_convex(1, &pc, lambda, eps, &v).unwrap().max_eigenvalue()
            .max(m2.max_eigenvalue());
        prop_assert!(worst > 0.0);
    }
}
