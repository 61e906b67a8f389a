//! Chain-length sweeps, threshold detection and decay-law fits.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::integrator::IntegratorConfig;
use crate::model::ChainParams;
use crate::observables::{ensemble_stats, EnsembleConfig, EnsembleStats};

pub fn check_grid(grid: &[usize]) -> Result<()> {
    if grid.is_empty() {
        return Err(invalid("n_grid", "must not be empty"));
    }
    if grid[0] == 0 || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("n_grid", "lengths must be positive and strictly increasing"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepEntry {
    pub n_sites: usize,
    pub outcome: Result<EnsembleStats>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LengthSweepResult {
    pub entries: Vec<SweepEntry>,
    pub params: ChainParams,
    pub grid: Vec<usize>,
}

impl LengthSweepResult {
    /// `(N, ⟨|α_N|⟩)` for every successful entry.
    pub fn mean_points(&self) -> Vec<(f64, f64)> {
        self.successful()
            .map(|(n, s)| (n as f64, s.mean_abs))
            .collect()
    }

    /// `(N, Σ)` for every successful entry.
    pub fn sigma_points(&self) -> Vec<(usize, f64)> {
        self.successful().map(|(n, s)| (n, s.sigma)).collect()
    }

    pub fn successful(&self) -> impl Iterator<Item = (usize, &EnsembleStats)> {
        self.entries
            .iter()
            .filter_map(|e| e.outcome.as_ref().ok().map(|s| (e.n_sites, s)))
    }
}

/// Ensemble statistics for every length in `n_grid`. Failures are kept per
/// entry; the sweep itself only fails on invalid input.
pub fn length_sweep(
    base: &ChainParams,
    n_grid: &[usize],
    ens: &EnsembleConfig,
    int_cfg: &IntegratorConfig,
) -> Result<LengthSweepResult> {
    check_grid(n_grid)?;
    base.resized(n_grid[0]).validate()?;
    ens.validate()?;
    int_cfg.validate()?;
    let entries = n_grid
        .par_iter()
        .map(|&n| SweepEntry {
            n_sites: n,
            outcome: ensemble_stats(&base.resized(n), ens, int_cfg),
        })
        .collect();
    Ok(LengthSweepResult {
        entries,
        params: base.clone(),
        grid: n_grid.to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdConfig {
    pub sigma_star: f64,
    /// Bisect between the last stable grid point and the first crossing.
    pub refine: bool,
    /// Keep scanning after the onset for a sustained return below `σ*`.
    /// `None` enables this exactly when the chain has bulk loss.
    pub track_collapse: Option<bool>,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self {
            sigma_star: 0.05,
            refine: false,
            track_collapse: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPoint {
    pub n_sites: usize,
    pub mean_abs: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    /// Smallest scanned length with `Σ > σ*`.
    pub n_t: Option<usize>,
    /// Smallest length beyond `n_t` where `Σ ≤ σ*` holds at two consecutive
    /// grid points.
    pub n_t_end: Option<usize>,
    pub sigma_star: f64,
    pub grid: Vec<usize>,
    /// Every length actually evaluated, in increasing order.
    pub evaluated: Vec<ThresholdPoint>,
    pub refined: bool,
}

impl ThresholdReport {
    pub fn n_t(&self) -> Result<usize> {
        self.n_t.ok_or(Error::NoThresholdInRange)
    }
}

/// Onset and collapse lengths read off a `(N, Σ)` sequence sorted by `N`.
pub fn locate_threshold(points: &[(usize, f64)], sigma_star: f64) -> (Option<usize>, Option<usize>) {
    let Some(onset) = points.iter().position(|(_, s)| *s > sigma_star) else {
        return (None, None);
    };
    let collapse = points[onset + 1..]
        .windows(2)
        .find(|w| w[0].1 <= sigma_star && w[1].1 <= sigma_star)
        .map(|w| w[0].0);
    (Some(points[onset].0), collapse)
}

/// Scans `n_scan` in order, evaluating ensembles lazily so that the scan can
/// stop as soon as the answer is known.
pub fn detect_threshold(
    base: &ChainParams,
    n_scan: &[usize],
    ens: &EnsembleConfig,
    int_cfg: &IntegratorConfig,
    cfg: &ThresholdConfig,
) -> Result<ThresholdReport> {
    check_grid(n_scan)?;
    base.resized(n_scan[0]).validate()?;
    ens.validate()?;
    int_cfg.validate()?;
    let track_collapse = cfg.track_collapse.unwrap_or(base.kappa_bulk > 0.0);
    let evaluate = |n: usize| -> Option<ThresholdPoint> {
        match ensemble_stats(&base.resized(n), ens, int_cfg) {
            Ok(s) => Some(ThresholdPoint {
                n_sites: n,
                mean_abs: s.mean_abs,
                sigma: s.sigma,
            }),
            Err(err) => {
                log::warn!("threshold scan: N = {n} skipped: {err}");
                None
            }
        }
    };

    let mut evaluated: Vec<ThresholdPoint> = Vec::new();
    let mut n_t = None;
    let mut n_t_end = None;
    for &n in n_scan {
        if let Some(point) = evaluate(n) {
            evaluated.push(point);
        }
        let seq: Vec<(usize, f64)> = evaluated.iter().map(|p| (p.n_sites, p.sigma)).collect();
        (n_t, n_t_end) = locate_threshold(&seq, cfg.sigma_star);
        if n_t.is_some() && (!track_collapse || n_t_end.is_some()) {
            break;
        }
    }

    let mut refined = false;
    if cfg.refine {
        if let Some(hi0) = n_t {
            let below = evaluated
                .iter()
                .filter(|p| p.n_sites < hi0)
                .map(|p| p.n_sites)
                .max();
            if let Some(mut lo) = below {
                let mut hi = hi0;
                while hi - lo > 1 {
                    let mid = lo + (hi - lo) / 2;
                    match evaluate(mid) {
                        Some(p) => {
                            evaluated.push(p);
                            if p.sigma > cfg.sigma_star {
                                hi = mid;
                            } else {
                                lo = mid;
                            }
                        }
                        None => break,
                    }
                }
                n_t = Some(hi);
                refined = true;
                evaluated.sort_by_key(|p| p.n_sites);
            }
        }
    }

    Ok(ThresholdReport {
        n_t,
        n_t_end,
        sigma_star: cfg.sigma_star,
        grid: n_scan.to_vec(),
        evaluated,
        refined,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecayModel {
    /// `y = A·N^b`
    Power,
    /// `y = A·e^{−cN}`
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub model: DecayModel,
    /// Power exponent `b`, or decay rate `c`.
    pub exponent_or_rate: f64,
    pub prefactor: f64,
    /// Coefficient of determination in the linearized coordinates.
    pub r_squared: f64,
    pub n_points: usize,
}

impl ScalingFit {
    pub fn predict(&self, n: f64) -> f64 {
        match self.model {
            DecayModel::Power => self.prefactor * n.powf(self.exponent_or_rate),
            DecayModel::Exponential => self.prefactor * (-self.exponent_or_rate * n).exp(),
        }
    }
}

/// Ordinary least squares of `ln y` against `ln N` (power) or `N`
/// (exponential).
pub fn fit_decay(points: &[(f64, f64)], model: DecayModel) -> Result<ScalingFit> {
    if points.len() < 3 {
        return Err(Error::TooFewPoints {
            needed: 3,
            got: points.len(),
        });
    }
    if points.iter().any(|(n, y)| !(y.is_finite() && *y > 0.0 && n.is_finite())) {
        return Err(Error::DegenerateData("values must be finite and positive".into()));
    }
    if model == DecayModel::Power && points.iter().any(|(n, _)| *n <= 0.0) {
        return Err(Error::DegenerateData("power-law regressor must be positive".into()));
    }
    let xs: Vec<f64> = points
        .iter()
        .map(|(n, _)| match model {
            DecayModel::Power => n.ln(),
            DecayModel::Exponential => *n,
        })
        .collect();
    let ys: Vec<f64> = points.iter().map(|(_, y)| y.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx <= f64::EPSILON * mx.abs().max(1.0) * k {
        return Err(Error::DegenerateData("regressor has no spread".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r_squared = if syy <= f64::MIN_POSITIVE {
        1.0
    } else {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    };
    Ok(ScalingFit {
        model,
        exponent_or_rate: match model {
            DecayModel::Power => slope,
            DecayModel::Exponential => -slope,
        },
        prefactor: intercept.exp(),
        r_squared,
        n_points: points.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayClass {
    Ballistic,
    PowerLaw,
    Exponential,
    Inconclusive,
}

impl DecayClass {
    pub fn as_str(self) -> &'static str {
        match self {
            DecayClass::Ballistic => "ballistic",
            DecayClass::PowerLaw => "power_law",
            DecayClass::Exponential => "exponential",
            DecayClass::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifyConfig {
    pub ballistic_exponent: f64,
    pub min_r_squared: f64,
    pub margin: f64,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        Self {
            ballistic_exponent: 0.05,
            min_r_squared: 0.9,
            margin: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayClassification {
    pub class: DecayClass,
    pub power: Option<ScalingFit>,
    pub exponential: Option<ScalingFit>,
}

/// The decision rule on a pair of fits.
pub fn decide(power: &ScalingFit, exponential: &ScalingFit, cfg: &ClassifyConfig) -> DecayClass {
    if power.exponent_or_rate.abs() < cfg.ballistic_exponent {
        return DecayClass::Ballistic;
    }
    let (winner, best, other) = if power.r_squared >= exponential.r_squared {
        (DecayClass::PowerLaw, power.r_squared, exponential.r_squared)
    } else {
        (DecayClass::Exponential, exponential.r_squared, power.r_squared)
    };
    if best >= cfg.min_r_squared && best - other >= cfg.margin {
        winner
    } else {
        DecayClass::Inconclusive
    }
}

/// Fits both laws and classifies. Fewer than four points, or a length span
/// below a factor of two, is inconclusive.
pub fn classify_decay(points: &[(f64, f64)], cfg: &ClassifyConfig) -> DecayClassification {
    let power = fit_decay(points, DecayModel::Power).ok();
    let exponential = fit_decay(points, DecayModel::Exponential).ok();
    let (lo, hi) = points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (n, _)| (lo.min(*n), hi.max(*n)));
    let enough = points.len() >= 4 && lo > 0.0 && hi >= 2.0 * lo;
    let class = match (&power, &exponential) {
        (Some(p), Some(e)) if enough => decide(p, e, cfg),
        _ => DecayClass::Inconclusive,
    };
    DecayClassification {
        class,
        power,
        exponential,
    }
}

/// `(N, ⟨|α_N|⟩)` of the sweep restricted to `N > n_t`: the branch beyond
/// the instability.
pub fn branch_beyond(sweep: &LengthSweepResult, n_t: usize) -> Vec<(f64, f64)> {
    sweep
        .mean_points()
        .into_iter()
        .filter(|(n, _)| *n > n_t as f64)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingAxis {
    Nonlinearity,
    Drive,
    KappaBulk,
}

impl ScalingAxis {
    pub fn apply(self, base: &ChainParams, value: f64) -> ChainParams {
        let mut p = base.clone();
        match self {
            ScalingAxis::Nonlinearity => p.nonlinearity = value,
            ScalingAxis::Drive => p.drive = value,
            ScalingAxis::KappaBulk => p.kappa_bulk = value,
        }
        p
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ScalingAxis::Nonlinearity => "u",
            ScalingAxis::Drive => "p",
            ScalingAxis::KappaBulk => "kappa_bulk",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdScaling {
    pub axis: ScalingAxis,
    pub entries: Vec<(f64, Result<ThresholdReport>)>,
    /// Power law `N_t ∝ value^b` (U and p axes, at least three thresholds).
    pub fit: Option<ScalingFit>,
}

impl ThresholdScaling {
    pub fn thresholds(&self) -> Vec<(f64, Option<usize>)> {
        self.entries
            .iter()
            .map(|(v, r)| (*v, r.as_ref().ok().and_then(|r| r.n_t)))
            .collect()
    }
}

pub fn threshold_scaling(
    base: &ChainParams,
    axis: ScalingAxis,
    values: &[f64],
    n_scan: &[usize],
    ens: &EnsembleConfig,
    int_cfg: &IntegratorConfig,
    cfg: &ThresholdConfig,
) -> Result<ThresholdScaling> {
    if values.is_empty() || values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("values", "must be non-empty and strictly increasing"));
    }
    let entries: Vec<(f64, Result<ThresholdReport>)> = values
        .par_iter()
        .map(|&v| (v, detect_threshold(&axis.apply(base, v), n_scan, ens, int_cfg, cfg)))
        .collect();
    let fit = match axis {
        ScalingAxis::KappaBulk => None,
        _ => {
            let pts: Vec<(f64, f64)> = entries
                .iter()
                .filter_map(|(v, r)| {
                    r.as_ref().ok().and_then(|r| r.n_t).map(|n| (*v, n as f64))
                })
                .collect();
            fit_decay(&pts, DecayModel::Power).ok()
        }
    };
    Ok(ThresholdScaling { axis, entries, fit })
}
