use proptest::prelude::*;
use sphere_mv::kernels::coefficients;
use sphere_mv::meanfield::{entropy, gamma_sharp, interaction_energy};
use sphere_mv::solver::{mode_seed, residual};
use sphere_mv::{
    bifurcation_points, find_transition, free_energy, gibbs_fixed_point, trace_branch, Error, KernelSpec, SolverConfig,
    TransitionType, ZonalDensity,
};

fn small() -> SolverConfig {
    SolverConfig { k_max: 24, order: 40, ..SolverConfig::default() }
}

#[test]
fn uniform_state_is_a_fixed_point_for_every_gamma() {
    let cfg = small();
    let w = coefficients(&KernelSpec::onsager(3).unwrap(), cfg.k_max).unwrap();
    let uniform = ZonalDensity::uniform(cfg.basis(3).unwrap());
    for gamma in [0.1, 5.0, 50.0] {
        assert!(residual(&w, gamma, &uniform).unwrap() < 1e-14);
        let fp = gibbs_fixed_point(&w, gamma, &uniform, &cfg).unwrap();
        assert!(fp.density.anisotropy() < 1e-12);
        assert!(entropy(&fp.density).abs() < 1e-14);
    }
}

#[test]
fn fixed_points_satisfy_the_tolerance_and_lower_the_energy() {
    let cfg = small();
    let spec = KernelSpec::transformer(4, 1.0).unwrap();
    let w = coefficients(&spec, cfg.k_max).unwrap();
    let g1 = bifurcation_points(&w).unwrap().points[0].gamma;
    let seed = mode_seed(cfg.basis(4).unwrap(), 1, 1.0, 0.05).unwrap();
    let fp = gibbs_fixed_point(&w, 1.5 * g1, &seed, &cfg).unwrap();
    assert!(fp.residual <= cfg.tol);
    assert!(residual(&w, 1.5 * g1, &fp.density).unwrap() <= 2.0 * cfg.tol);
    assert!(fp.energy_not_increased);
    let e = free_energy(&w, &fp.density, 1.5 * g1).unwrap();
    assert!((e.free_energy - (e.entropy / e.gamma + e.interaction)).abs() < 1e-14);
    assert!((e.interaction - interaction_energy(&w, &fp.density).unwrap()).abs() < 1e-15);
    let uniform = free_energy(&w, &ZonalDensity::uniform(cfg.basis(4).unwrap()), 1.5 * g1).unwrap();
    assert!(e.free_energy < uniform.free_energy);
    assert!((fp.density.mass() - 1.0).abs() < 1e-13);
}

#[test]
fn non_convergence_returns_the_best_iterate() {
    let cfg = SolverConfig { max_iters: 3, ..small() };
    let w = coefficients(&KernelSpec::onsager(3).unwrap(), cfg.k_max).unwrap();
    let seed = mode_seed(cfg.basis(3).unwrap(), 2, 1.0, 0.05).unwrap();
    match gibbs_fixed_point(&w, 12.0, &seed, &cfg) {
        Err(Error::NotConverged(fp)) => {
            assert!(fp.residual > cfg.tol && fp.iterations <= 3);
            assert!((fp.density.mass() - 1.0).abs() < 1e-13);
        }
        other => panic!("expected NotConverged, got {other:?}"),
    }
}

#[test]
fn stable_kernels_have_no_transition() {
    let cfg = small();
    let w = coefficients(&KernelSpec::custom_fn(3, |t| t * t, None).unwrap(), cfg.k_max).unwrap();
    assert!(matches!(bifurcation_points(&w), Err(Error::StableKernel { .. })));
    assert!(gamma_sharp(&w).is_err());
    let report = find_transition(&w, None, &cfg).unwrap();
    assert_eq!(report.kind, TransitionType::None);
    assert!(report.gamma_c_bracket.is_none());
}

#[test]
fn branch_amplitude_grows_with_distance_from_bifurcation() {
    let cfg = small();
    let w = coefficients(&KernelSpec::transformer(3, 1.0).unwrap(), cfg.k_max).unwrap();
    let g1 = bifurcation_points(&w).unwrap().points[0].gamma;
    let grid: Vec<f64> = (0..6).map(|i| g1 * (1.05 + 0.1 * i as f64)).collect();
    let trace = trace_branch(&w, 1, &grid, &cfg).unwrap();
    assert!(trace.diagnostic.is_none(), "{:?}", trace.diagnostic);
    assert_eq!(trace.points.len(), grid.len());
    let amps: Vec<f64> = trace.points.iter().map(|p| p.mode_amplitude.abs()).collect();
    assert!(amps.windows(2).all(|a| a[0] < a[1]), "{amps:?}");
    assert!(trace.points.iter().all(|p| p.residual <= cfg.tol));
    let csv = trace.to_csv();
    assert_eq!(csv.lines().count(), grid.len() + 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn bifurcation_points_are_sorted_and_match_coefficients(beta in 0.2f64..4.0, n in 3usize..8) {
        let w = coefficients(&KernelSpec::transformer(n, beta).unwrap(), 12).unwrap();
        let b = bifurcation_points(&w).unwrap();
        prop_assert!(b.points.windows(2).all(|p| p[0].gamma <= p[1].gamma));
        for p in &b.points {
            prop_assert!((p.gamma * w.coeffs[p.k] + 1.0).abs() < 1e-13);
        }
        prop_assert!((gamma_sharp(&w).unwrap().gamma_sharp - b.points[0].gamma).abs() < 1e-12 * b.points[0].gamma);
    }

    #[test]
    fn entropy_is_nonnegative(a in -1.0f64..1.0, b in -1.0f64..1.0, n in 3usize..7) {
        let basis = SolverConfig { k_max: 8, order: 16, ..SolverConfig::default() }.basis(n).unwrap();
        let rho = ZonalDensity::gibbs(basis, &[(1, a), (2, b)]).unwrap();
        prop_assert!(entropy(&rho) >= -1e-14);
        prop_assert!((rho.mass() - 1.0).abs() < 1e-13);
    }
}
