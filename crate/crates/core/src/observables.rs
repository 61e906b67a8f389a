//! Randomized initial conditions, time-window statistics, ensemble
//! aggregation and phase-space views of the output field `α_N`.

use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::integrator::{integrate_observed, IntegratorConfig, Trajectory};
use crate::model::{ChainParams, Complex, FieldState};
use crate::seed::{derive_seed, stream, REALIZATION_TAG};

/// Slack when deciding whether a grid time falls inside a window.
const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IcMode {
    Zero,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub n_realizations: usize,
    pub master_seed: u64,
    pub ic_mode: IcMode,
    /// Radius `r₀` of the complex disc initial amplitudes are drawn from.
    pub ic_radius: f64,
    pub transient_time: f64,
    pub window_time: f64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            n_realizations: 16,
            master_seed: 0,
            ic_mode: IcMode::Random,
            ic_radius: 1.0,
            transient_time: 500.0,
            window_time: 1500.0,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_realizations == 0 {
            return Err(invalid("n_realizations", "must be at least 1"));
        }
        if !(self.window_time.is_finite() && self.window_time > 0.0) {
            return Err(invalid("window_time", "must be positive"));
        }
        if !(self.transient_time.is_finite() && self.transient_time >= 0.0) {
            return Err(invalid("transient_time", "must be non-negative"));
        }
        if !(self.ic_radius.is_finite() && self.ic_radius >= 0.0) {
            return Err(invalid("ic_radius", "must be non-negative"));
        }
        Ok(())
    }

    /// Integration horizon covering transient and window.
    pub fn horizon(&self) -> f64 {
        self.transient_time + self.window_time
    }
}

/// Initial condition for realization `index`. Random amplitudes are uniform
/// on the complex disc of radius `radius`, drawn site by site from the
/// realization's own stream.
pub fn draw_initial_condition(
    mode: IcMode,
    master_seed: u64,
    index: u64,
    n_sites: usize,
    radius: f64,
) -> FieldState {
    match mode {
        IcMode::Zero => FieldState::zeros(n_sites),
        IcMode::Random => {
            let mut rng = stream(master_seed, REALIZATION_TAG, index);
            let amplitudes = (0..n_sites)
                .map(|_| {
                    let r = radius * rng.random::<f64>().sqrt();
                    let phase = 2.0 * PI * rng.random::<f64>();
                    Complex::from_polar(r, phase)
                })
                .collect();
            FieldState::new(amplitudes)
        }
    }
}

/// Running mean/variance of `|α_N|` over the window `(t_start, t_stop]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowAccumulator {
    t_start: f64,
    t_stop: f64,
    count: usize,
    mean: f64,
    m2: f64,
}

impl WindowAccumulator {
    pub fn new(transient_time: f64, window_time: f64) -> Self {
        Self {
            t_start: transient_time,
            t_stop: transient_time + window_time,
            count: 0,
            mean: 0.0,
            m2: 0.0,
        }
    }

    #[inline]
    pub fn push(&mut self, t: f64, value: f64) {
        if t <= self.t_start + TIME_EPS || t > self.t_stop + TIME_EPS {
            return;
        }
        self.count += 1;
        let delta = value - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (value - self.mean);
    }

    pub fn finish(&self) -> WindowStats {
        WindowStats {
            mean: self.mean,
            variance: if self.count > 0 {
                (self.m2 / self.count as f64).max(0.0)
            } else {
                0.0
            },
            n_samples: self.count,
        }
    }
}

/// Time mean and (population) variance of `|α_N|` over one window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowStats {
    pub mean: f64,
    pub variance: f64,
    pub n_samples: usize,
}

pub fn window_stats(traj: &Trajectory, transient_time: f64, window_time: f64) -> Result<WindowStats> {
    let required = transient_time + window_time;
    if traj.end_time() + TIME_EPS < required {
        return Err(Error::WindowTooShort {
            required,
            available: traj.end_time(),
        });
    }
    let mut acc = WindowAccumulator::new(transient_time, window_time);
    for (t, a) in traj.sample_times.iter().zip(&traj.alpha_last) {
        acc.push(*t, a.norm());
    }
    let stats = acc.finish();
    if stats.n_samples == 0 {
        return Err(Error::WindowTooShort {
            required,
            available: traj.end_time(),
        });
    }
    Ok(stats)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationStats {
    pub index: u64,
    pub seed: u64,
    pub time_mean: f64,
    pub time_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    /// `⟨|α_N|⟩`, pooled over window samples and realizations.
    pub mean_abs: f64,
    /// `Σ = sqrt(⟨|α_N|²⟩ − ⟨|α_N|⟩²)` over the same pool.
    pub sigma: f64,
    pub per_realization: Vec<RealizationStats>,
    pub n_effective: usize,
    pub n_failed: usize,
}

impl EnsembleStats {
    /// Pools per-realization window moments with equal weights (every
    /// realization contributes the same number of samples).
    pub fn from_realizations(per_realization: Vec<RealizationStats>, n_failed: usize) -> Result<Self> {
        let n = per_realization.len();
        if n == 0 {
            return Err(Error::AllRealizationsFailed { attempted: n_failed });
        }
        let nf = n as f64;
        let mean_abs = per_realization.iter().map(|r| r.time_mean).sum::<f64>() / nf;
        let within = per_realization.iter().map(|r| r.time_variance).sum::<f64>() / nf;
        let between = per_realization
            .iter()
            .map(|r| (r.time_mean - mean_abs).powi(2))
            .sum::<f64>()
            / nf;
        Ok(Self {
            mean_abs,
            sigma: (within + between).max(0.0).sqrt(),
            per_realization,
            n_effective: n,
            n_failed,
        })
    }
}

/// Integrates realization `index` and returns its window statistics.
pub fn run_realization(
    params: &ChainParams,
    ens: &EnsembleConfig,
    int_cfg: &IntegratorConfig,
    index: u64,
) -> Result<RealizationStats> {
    let seed = derive_seed(ens.master_seed, REALIZATION_TAG, index);
    let ic = draw_initial_condition(ens.ic_mode, ens.master_seed, index, params.n_sites, ens.ic_radius);
    let cfg = IntegratorConfig {
        t_end: ens.horizon(),
        ..int_cfg.clone()
    };
    let mut acc = WindowAccumulator::new(ens.transient_time, ens.window_time);
    integrate_observed(params, &ic, &cfg, |_, t, field| {
        acc.push(t, field[field.len() - 1].norm());
    })?;
    let stats = acc.finish();
    Ok(RealizationStats {
        index,
        seed,
        time_mean: stats.mean,
        time_variance: stats.variance,
    })
}

/// Runs `n_realizations` independent trajectories in parallel and pools
/// their window statistics. Realizations that blow up are excluded and
/// counted in `n_failed`.
pub fn ensemble_stats(
    params: &ChainParams,
    ens: &EnsembleConfig,
    int_cfg: &IntegratorConfig,
) -> Result<EnsembleStats> {
    params.validate()?;
    ens.validate()?;
    let outcomes: Vec<Result<RealizationStats>> = (0..ens.n_realizations as u64)
        .into_par_iter()
        .map(|index| run_realization(params, ens, int_cfg, index))
        .collect();
    let mut ok = Vec::with_capacity(outcomes.len());
    let mut n_failed = 0;
    for outcome in outcomes {
        match outcome {
            Ok(stats) => ok.push(stats),
            Err(err @ (Error::NonFinite { .. } | Error::StepUnderflow { .. })) => {
                log::warn!("N = {}: realization excluded: {err}", params.n_sites);
                n_failed += 1;
            }
            Err(other) => return Err(other),
        }
    }
    EnsembleStats::from_realizations(ok, n_failed)
}

/// `X = 2 Re α_N`, `P = 2 Im α_N` on the trajectory's grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSeries {
    pub times: Vec<f64>,
    pub x: Vec<f64>,
    pub p: Vec<f64>,
}

impl QuadratureSeries {
    pub fn from_trajectory(traj: &Trajectory) -> Self {
        Self {
            times: traj.sample_times.clone(),
            x: traj.alpha_last.iter().map(|a| 2.0 * a.re).collect(),
            p: traj.alpha_last.iter().map(|a| 2.0 * a.im).collect(),
        }
    }
}

/// Counts on a `bins × bins` grid over `(X, P)`; `counts[ix * bins + ip]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram2d {
    pub bins: usize,
    pub x_range: (f64, f64),
    pub p_range: (f64, f64),
    pub counts: Vec<u64>,
}

impl Histogram2d {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn count(&self, ix: usize, ip: usize) -> u64 {
        self.counts[ix * self.bins + ip]
    }

    pub fn occupied_bins(&self) -> usize {
        self.counts.iter().filter(|c| **c > 0).count()
    }

    pub fn max_count(&self) -> u64 {
        self.counts.iter().copied().max().unwrap_or(0)
    }
}

/// Span of the observed values, widened to at least `2·1e-6·max(1, |centre|)`
/// so that a converged fixed point lands in the central bins.
fn padded_range(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let lo = values.clone().fold(f64::INFINITY, f64::min);
    let hi = values.fold(f64::NEG_INFINITY, f64::max);
    let centre = 0.5 * (lo + hi);
    let floor = 1e-6 * centre.abs().max(1.0);
    if hi - lo < 2.0 * floor {
        (centre - floor, centre + floor)
    } else {
        (lo, hi)
    }
}

fn bin_of(value: f64, (lo, hi): (f64, f64), bins: usize) -> usize {
    let f = (value - lo) / (hi - lo);
    ((f * bins as f64).floor() as isize).clamp(0, bins as isize - 1) as usize
}

/// Histogram of the post-transient `(X, P)` samples of a trajectory.
pub fn quadrature_histogram(traj: &Trajectory, bins: usize, transient_time: f64) -> Result<Histogram2d> {
    if bins < 2 {
        return Err(invalid("bins", "need at least 2 bins per axis"));
    }
    let quad = QuadratureSeries::from_trajectory(traj);
    let kept: Vec<usize> = (0..quad.times.len())
        .filter(|&k| quad.times[k] > transient_time + TIME_EPS)
        .collect();
    if kept.is_empty() {
        return Err(Error::WindowTooShort {
            required: transient_time,
            available: traj.end_time(),
        });
    }
    let x_range = padded_range(kept.iter().map(|&k| quad.x[k]));
    let p_range = padded_range(kept.iter().map(|&k| quad.p[k]));
    let mut counts = vec![0u64; bins * bins];
    for &k in &kept {
        let ix = bin_of(quad.x[k], x_range, bins);
        let ip = bin_of(quad.p[k], p_range, bins);
        counts[ix * bins + ip] += 1;
    }
    Ok(Histogram2d {
        bins,
        x_range,
        p_range,
        counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::{integrate, InitialCondition};
    use approx::assert_relative_eq;

    fn synthetic(times: Vec<f64>, f: impl Fn(f64) -> Complex) -> Trajectory {
        Trajectory {
            alpha_last: times.iter().map(|t| f(*t)).collect(),
            sample_times: times,
            full_field: None,
            params: ChainParams::new(1),
            ic: InitialCondition::Custom,
        }
    }

    fn grid(t_end: f64, dt: f64) -> Vec<f64> {
        let n = (t_end / dt).round() as usize;
        (0..=n).map(|k| k as f64 * dt).collect()
    }

    #[test]
    fn zero_mode_is_all_zeros() {
        let s = draw_initial_condition(IcMode::Zero, 1, 2, 9, 1.0);
        assert!(s.amplitudes.iter().all(|a| a.norm() == 0.0));
    }

    #[test]
    fn random_draws_fill_the_unit_disc() {
        let draws: Vec<Complex> = (0..1000)
            .flat_map(|i| draw_initial_condition(IcMode::Random, 42, i, 100, 1.0).amplitudes)
            .collect();
        assert_eq!(draws.len(), 100_000);
        assert!(draws.iter().all(|a| a.norm() <= 1.0));
        let m2 = draws.iter().map(|a| a.norm_sqr()).sum::<f64>() / draws.len() as f64;
        assert!((m2 - 0.5).abs() < 0.005, "E|α|² = {m2}");
    }

    #[test]
    fn random_draws_are_reproducible() {
        let a = draw_initial_condition(IcMode::Random, 9, 3, 12, 0.7);
        let b = draw_initial_condition(IcMode::Random, 9, 3, 12, 0.7);
        let c = draw_initial_condition(IcMode::Random, 9, 4, 12, 0.7);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn constant_signal_has_zero_variance() {
        let traj = synthetic(grid(30.0, 0.1), |_| Complex::new(0.0, 2.5));
        let s = window_stats(&traj, 10.0, 20.0).unwrap();
        assert_relative_eq!(s.mean, 2.5, epsilon = 1e-14);
        assert!(s.variance < 1e-20);
        assert_eq!(s.n_samples, 200);
    }

    #[test]
    fn sinusoid_moments() {
        let omega = 2.0 * PI / 5.0;
        let traj = synthetic(grid(120.0, 0.01), |t| Complex::new(5.0 + (omega * t).sin(), 0.0));
        let s = window_stats(&traj, 20.0, 100.0).unwrap();
        assert!((s.mean - 5.0).abs() < 1e-3);
        assert!((s.variance - 0.5).abs() < 1e-3);
    }

    #[test]
    fn short_trajectory_is_rejected() {
        let traj = synthetic(grid(10.0, 0.1), |_| Complex::new(1.0, 0.0));
        assert!(matches!(
            window_stats(&traj, 5.0, 10.0),
            Err(Error::WindowTooShort { .. })
        ));
    }

    #[test]
    fn single_zero_ic_realization_matches_window_stats() {
        let params = ChainParams::new(6).with_nonlinearity(1.0).with_drive(4.0);
        let ens = EnsembleConfig {
            n_realizations: 1,
            ic_mode: IcMode::Zero,
            transient_time: 40.0,
            window_time: 60.0,
            ..EnsembleConfig::default()
        };
        let int_cfg = IntegratorConfig::default();
        let stats = ensemble_stats(&params, &ens, &int_cfg).unwrap();
        let traj = integrate(&params, &FieldState::zeros(6), &int_cfg.clone().with_t_end(100.0)).unwrap();
        let w = window_stats(&traj, 40.0, 60.0).unwrap();
        assert_eq!(stats.mean_abs, w.mean);
        assert_eq!(stats.sigma, w.variance.sqrt());
        assert_eq!(stats.n_effective, 1);
    }

    #[test]
    fn pooling_is_permutation_invariant() {
        let mk = |i: u64, m: f64, v: f64| RealizationStats {
            index: i,
            seed: i,
            time_mean: m,
            time_variance: v,
        };
        let a = vec![mk(0, 1.0, 0.1), mk(1, 2.0, 0.0), mk(2, 1.5, 0.3)];
        let mut b = a.clone();
        b.reverse();
        let sa = EnsembleStats::from_realizations(a, 0).unwrap();
        let sb = EnsembleStats::from_realizations(b, 0).unwrap();
        assert_relative_eq!(sa.mean_abs, sb.mean_abs, epsilon = 1e-15);
        assert_relative_eq!(sa.sigma, sb.sigma, epsilon = 1e-15);
        // pooled variance = mean within + spread of means
        let expected = ((0.1 + 0.0 + 0.3) / 3.0 + (0.25 + 0.25 + 0.0) / 3.0f64).sqrt();
        assert_relative_eq!(sa.sigma, expected, epsilon = 1e-14);
        assert!(matches!(
            EnsembleStats::from_realizations(vec![], 4),
            Err(Error::AllRealizationsFailed { attempted: 4 })
        ));
    }

    #[test]
    fn histogram_counts_every_post_transient_sample() {
        let traj = synthetic(grid(50.0, 0.1), |t| Complex::from_polar(1.0, t));
        let h = quadrature_histogram(&traj, 16, 10.0).unwrap();
        assert_eq!(h.total(), 400);
        assert!(h.occupied_bins() > 16);
        assert!(quadrature_histogram(&traj, 1, 10.0).is_err());
    }

    #[test]
    fn fixed_point_histogram_is_a_single_cluster() {
        let traj = synthetic(grid(50.0, 0.1), |_| Complex::new(0.3, -0.4));
        let h = quadrature_histogram(&traj, 20, 10.0).unwrap();
        assert_eq!(h.max_count(), h.total());
    }

    #[test]
    fn quadratures_follow_the_sign_convention() {
        let traj = synthetic(vec![0.0, 1.0], |_| Complex::new(0.25, -1.5));
        let q = QuadratureSeries::from_trajectory(&traj);
        assert_eq!(q.x, vec![0.5, 0.5]);
        assert_eq!(q.p, vec![-3.0, -3.0]);
    }
}
