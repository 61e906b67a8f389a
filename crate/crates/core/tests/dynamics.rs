use photon_lattice::integrator::{integrate, IntegratorConfig};
use photon_lattice::model::{intensity_source_rate, total_intensity};
use photon_lattice::observables::{
    draw_initial_condition, ensemble_stats, quadrature_histogram, window_stats, EnsembleConfig, IcMode,
};
use photon_lattice::stability::{analyze, solve_steady_state};
use photon_lattice::{ChainParams, Complex, FieldState};

fn reference(n: usize) -> ChainParams {
    ChainParams::new(n).with_nonlinearity(1.0).with_drive(10.0)
}

/// Largest `|I(b) − I(a) − ∫_a^b S dt| / ((b − a)·max(1, I(a)))` over unit
/// windows, with the budget integral taken by Simpson's rule on the sample
/// grid.
fn worst_balance_rate(params: &ChainParams, ic: &FieldState, t_end: f64, h: f64, rel_tol: f64) -> f64 {
    let cfg = IntegratorConfig {
        sample_interval: h,
        t_end,
        ..IntegratorConfig::default()
    }
    .with_tolerances(rel_tol, rel_tol * 1e-2)
    .with_full_field(true);
    let traj = integrate(params, ic, &cfg).unwrap();
    let fields: Vec<&[Complex]> = (0..traj.len()).map(|k| traj.field_at(k).unwrap()).collect();
    let s: Vec<f64> = fields.iter().map(|f| intensity_source_rate(f, params)).collect();
    let i: Vec<f64> = fields
        .iter()
        .map(|f| total_intensity(&FieldState::new(f.to_vec())))
        .collect();
    let per = (1.0 / h).round() as usize;
    assert_eq!(per % 2, 0);
    let mut worst: f64 = 0.0;
    let mut a = 0;
    while a + per < fields.len() {
        let integral: f64 = (a..a + per)
            .step_by(2)
            .map(|j| h / 3.0 * (s[j] + 4.0 * s[j + 1] + s[j + 2]))
            .sum();
        let r = (i[a + per] - i[a] - integral).abs() / (per as f64 * h) / i[a].max(1.0);
        worst = worst.max(r);
        a += per;
    }
    worst
}

#[test]
fn intensity_budget_closes_along_trajectories() {
    let rel_tol = 1e-8;
    for (k, (n, u, p)) in [(12, 1.0, 10.0), (60, 1.0, 10.0), (25, 2.0, 5.0)].into_iter().enumerate() {
        let params = ChainParams::new(n).with_nonlinearity(u).with_drive(p);
        let ic = draw_initial_condition(IcMode::Random, 21, k as u64, n, 1.0);
        let worst = worst_balance_rate(&params, &ic, 20.0, 0.002, rel_tol);
        assert!(worst <= 100.0 * rel_tol, "N={n}: {worst:e}");
    }
}

#[test]
fn tightening_tolerance_converges_on_a_stable_run() {
    let params = ChainParams::new(10).with_nonlinearity(0.5).with_drive(3.0);
    let ic = FieldState::zeros(10);
    let at = |rtol: f64| {
        let cfg = IntegratorConfig::default().with_t_end(50.0).with_tolerances(rtol, rtol * 1e-2);
        *integrate(&params, &ic, &cfg).unwrap().alpha_last.last().unwrap()
    };
    let coarse = at(1e-6);
    let mid = at(1e-8);
    let fine = at(1e-10);
    assert!((coarse - fine).norm() <= 1e-5, "{}", (coarse - fine).norm());
    assert!((mid - fine).norm() <= (coarse - fine).norm());
}

#[test]
fn stable_reference_chain_settles() {
    let params = reference(20);
    let cfg = IntegratorConfig::default().with_t_end(2000.0);
    let traj = integrate(&params, &FieldState::zeros(20), &cfg).unwrap();
    let w = window_stats(&traj, 500.0, 1500.0).unwrap();
    assert!(w.variance.sqrt() < 0.05);
    // settles onto the fixed point found by the steady-state solver
    let ss = solve_steady_state(&params, None).unwrap().ensure_converged().unwrap();
    let end = traj.alpha_last.last().unwrap();
    assert!((end.norm() - ss.alpha[19].norm()).abs() < 1e-3);
}

#[test]
fn long_reference_chain_is_chaotic() {
    let ens = EnsembleConfig {
        n_realizations: 2,
        ..EnsembleConfig::default()
    };
    let stats = ensemble_stats(&reference(100), &ens, &IntegratorConfig::default()).unwrap();
    assert!(stats.sigma > 0.05, "sigma {}", stats.sigma);
}

#[test]
fn random_starts_agree_with_zero_start_below_threshold() {
    let params = ChainParams::new(8).with_nonlinearity(0.5).with_drive(4.0);
    let base = EnsembleConfig {
        transient_time: 300.0,
        window_time: 100.0,
        ..EnsembleConfig::default()
    };
    let int_cfg = IntegratorConfig::default();
    let zero = ensemble_stats(
        &params,
        &EnsembleConfig {
            n_realizations: 1,
            ic_mode: IcMode::Zero,
            ..base.clone()
        },
        &int_cfg,
    )
    .unwrap();
    let random = ensemble_stats(&params, &base, &int_cfg).unwrap();
    assert_eq!(random.n_effective, 16);
    assert!((random.mean_abs - zero.mean_abs).abs() < 1e-6);
    assert!(random.sigma < 1e-6 && zero.sigma < 1e-6);
}

#[test]
fn histograms_separate_fixed_points_from_chaos() {
    let params = |n| ChainParams::new(n).with_nonlinearity(0.5).with_drive(10.0);
    // the short chain relaxes slowly (growth rate ≈ −4e-3), so wait it out
    let cfg = IntegratorConfig::default().with_t_end(8000.0);
    let short = integrate(&params(10), &FieldState::zeros(10), &cfg).unwrap();
    let h = quadrature_histogram(&short, 40, 7000.0).unwrap();
    assert_eq!(h.total() as usize, short.sample_times.iter().filter(|t| **t > 7000.0 + 1e-9).count());
    // one cluster: the whole post-transient cloud sits inside a tiny box
    assert!(h.x_range.1 - h.x_range.0 < 1e-4 && h.p_range.1 - h.p_range.0 < 1e-4, "{h:?}");

    let cfg = IntegratorConfig::default().with_t_end(1000.0);
    let long = integrate(&params(70), &FieldState::zeros(70), &cfg).unwrap();
    let h = quadrature_histogram(&long, 40, 300.0).unwrap();
    assert!(h.occupied_bins() > 100, "{} bins", h.occupied_bins());
    assert!(h.max_count() < h.total() / 10);
    let span = |r: (f64, f64)| r.1 - r.0;
    assert!(span(h.x_range) > 0.1 && span(h.x_range) < 10.0);
    assert!(span(h.p_range) > 0.1 && span(h.p_range) < 10.0);
}

#[test]
fn perturbations_of_a_stable_fixed_point_decay() {
    let params = ChainParams::new(10).with_nonlinearity(1.0).with_drive(10.0);
    let (ss, spectrum) = analyze(&params, None).unwrap();
    assert!(spectrum.max_im < -1e-3);
    let kick = draw_initial_condition(IcMode::Random, 4, 0, 10, 1e-3);
    let start = FieldState::new(ss.alpha.iter().zip(&kick.amplitudes).map(|(a, d)| a + d).collect());
    let cfg = IntegratorConfig::default().with_t_end(8000.0);
    let traj = integrate(&params, &start, &cfg).unwrap();
    let w = window_stats(&traj, 7000.0, 1000.0).unwrap();
    assert!(w.variance.sqrt() < 1e-10);
    assert!((w.mean - ss.alpha[9].norm()).abs() < 1e-9);
}

#[test]
fn amplitude_rescaling_is_a_symmetry() {
    // β = λα solves the equations with U/λ² and λp
    let lambda = 2.0;
    let params = ChainParams::new(9).with_nonlinearity(0.7).with_drive(3.0).with_detuning(0.2);
    let scaled = params.clone().with_nonlinearity(0.7 / (lambda * lambda)).with_drive(3.0 * lambda);
    let ic = draw_initial_condition(IcMode::Random, 8, 0, 9, 1.0);
    let ic_scaled = FieldState::new(ic.amplitudes.iter().map(|a| a * lambda).collect());
    let cfg = IntegratorConfig::default()
        .with_t_end(20.0)
        .with_tolerances(1e-11, 1e-13)
        .with_full_field(true);
    let a = integrate(&params, &ic, &cfg).unwrap();
    let b = integrate(&scaled, &ic_scaled, &cfg).unwrap();
    assert_eq!(a.len(), b.len());
    for k in 0..a.len() {
        for (x, y) in a.field_at(k).unwrap().iter().zip(b.field_at(k).unwrap()) {
            assert!((x * lambda - y).norm() < 1e-7, "k={k}");
        }
    }
}
