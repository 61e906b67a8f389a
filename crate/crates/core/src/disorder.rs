//! On-site disorder: sampling, configuration-averaged sweeps and the
//! (U, W) phase scan.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::integrator::IntegratorConfig;
use crate::model::ChainParams;
use crate::observables::{ensemble_stats, EnsembleConfig, EnsembleStats};
use crate::scaling::{
    check_grid, classify_decay, ClassifyConfig, DecayClass, LengthSweepResult, ScalingFit, SweepEntry,
};
use crate::seed::{derive_seed, stream, DISORDER_TAG};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisorderConfig {
    pub width: f64,
    pub n_configs: usize,
    pub master_seed: u64,
}

impl Default for DisorderConfig {
    fn default() -> Self {
        Self {
            width: 0.0,
            n_configs: 128,
            master_seed: 0,
        }
    }
}

impl DisorderConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.width.is_finite() && self.width >= 0.0) {
            return Err(invalid("width", "must be finite and non-negative"));
        }
        if self.n_configs == 0 {
            return Err(invalid("n_configs", "must be at least 1"));
        }
        Ok(())
    }
}

/// `n` independent uniform shifts in `[−W, W]` for configuration
/// `config_index`. Longer chains extend shorter ones: the first `n` entries
/// do not depend on `n`.
pub fn sample_disorder(width: f64, master_seed: u64, config_index: u64, n: usize) -> Vec<f64> {
    if width == 0.0 {
        return vec![0.0; n];
    }
    let mut rng = stream(master_seed, DISORDER_TAG, config_index);
    (0..n).map(|_| rng.random_range(-width..=width)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigResult {
    pub config_index: u64,
    pub seed: u64,
    pub stats: EnsembleStats,
}

/// Statistics of `⟨|α_N|⟩` across disorder configurations at one length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigAverage {
    pub mean_abs: f64,
    pub median_abs: f64,
    /// `exp(mean(ln⟨|α_N|⟩))`.
    pub log_mean_abs: f64,
    /// Standard error of `mean(ln⟨|α_N|⟩)`; zero with one configuration.
    pub log_std_error: f64,
    /// Σ pooled over every window sample of every configuration.
    pub sigma: f64,
    pub per_config: Vec<ConfigResult>,
    pub n_failed_configs: usize,
}

impl ConfigAverage {
    pub fn from_configs(per_config: Vec<ConfigResult>, n_failed_configs: usize) -> Result<Self> {
        let n = per_config.len();
        if n == 0 {
            return Err(Error::AllRealizationsFailed {
                attempted: n_failed_configs,
            });
        }
        let nf = n as f64;
        let means: Vec<f64> = per_config.iter().map(|c| c.stats.mean_abs).collect();
        let mean_abs = means.iter().sum::<f64>() / nf;
        let mut sorted = means.clone();
        sorted.sort_by(f64::total_cmp);
        let median_abs = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        };
        let logs: Vec<f64> = means.iter().map(|m| m.ln()).collect();
        let log_mean = logs.iter().sum::<f64>() / nf;
        let log_std_error = if n > 1 {
            let var = logs.iter().map(|l| (l - log_mean).powi(2)).sum::<f64>() / (nf - 1.0);
            (var / nf).sqrt()
        } else {
            0.0
        };
        let within = per_config.iter().map(|c| c.stats.sigma.powi(2)).sum::<f64>() / nf;
        let between = means.iter().map(|m| (m - mean_abs).powi(2)).sum::<f64>() / nf;
        Ok(Self {
            mean_abs,
            median_abs,
            log_mean_abs: log_mean.exp(),
            log_std_error,
            sigma: (within + between).sqrt(),
            per_config,
            n_failed_configs,
        })
    }

    /// Flattens into ensemble form: arithmetic mean, pooled Σ, all
    /// realizations. A single configuration is returned unchanged.
    pub fn to_ensemble_stats(&self) -> EnsembleStats {
        if let [only] = self.per_config.as_slice() {
            return only.stats.clone();
        }
        let per_realization: Vec<_> = self
            .per_config
            .iter()
            .flat_map(|c| c.stats.per_realization.iter().cloned())
            .collect();
        EnsembleStats {
            mean_abs: self.mean_abs,
            sigma: self.sigma,
            n_effective: per_realization.len(),
            n_failed: self.per_config.iter().map(|c| c.stats.n_failed).sum(),
            per_realization,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisorderedEntry {
    pub n_sites: usize,
    pub outcome: Result<ConfigAverage>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisorderedSweep {
    pub width: f64,
    pub entries: Vec<DisorderedEntry>,
    pub params: ChainParams,
    pub grid: Vec<usize>,
}

impl DisorderedSweep {
    /// `(N, arithmetic config mean)` for every successful entry.
    pub fn mean_points(&self) -> Vec<(f64, f64)> {
        self.entries
            .iter()
            .filter_map(|e| e.outcome.as_ref().ok().map(|a| (e.n_sites as f64, a.mean_abs)))
            .collect()
    }

    pub fn to_length_sweep(&self) -> LengthSweepResult {
        LengthSweepResult {
            entries: self
                .entries
                .iter()
                .map(|e| SweepEntry {
                    n_sites: e.n_sites,
                    outcome: e.outcome.as_ref().map(ConfigAverage::to_ensemble_stats).map_err(Clone::clone),
                })
                .collect(),
            params: self.params.clone(),
            grid: self.grid.clone(),
        }
    }
}

fn config_average(
    params: &ChainParams,
    dis: &DisorderConfig,
    ens: &EnsembleConfig,
    int_cfg: &IntegratorConfig,
) -> Result<ConfigAverage> {
    let n = params.n_sites;
    // Zero width: every configuration is the clean chain.
    let n_configs = if dis.width == 0.0 { 1 } else { dis.n_configs };
    let outcomes: Vec<(u64, Result<EnsembleStats>)> = (0..n_configs as u64)
        .into_par_iter()
        .map(|k| {
            let shifts = sample_disorder(dis.width, dis.master_seed, k, n);
            (k, ensemble_stats(&params.clone().with_site_shifts(shifts), ens, int_cfg))
        })
        .collect();
    let mut ok = Vec::with_capacity(outcomes.len());
    let mut n_failed = 0;
    for (k, outcome) in outcomes {
        match outcome {
            Ok(stats) => ok.push(ConfigResult {
                config_index: k,
                seed: derive_seed(dis.master_seed, DISORDER_TAG, k),
                stats,
            }),
            Err(err @ Error::AllRealizationsFailed { .. }) => {
                log::warn!("N = {n}, W = {}: configuration {k} excluded: {err}", dis.width);
                n_failed += 1;
            }
            Err(other) => return Err(other),
        }
    }
    ConfigAverage::from_configs(ok, n_failed)
}

pub fn disordered_sweep(
    base: &ChainParams,
    n_grid: &[usize],
    dis: &DisorderConfig,
    ens: &EnsembleConfig,
    int_cfg: &IntegratorConfig,
) -> Result<DisorderedSweep> {
    check_grid(n_grid)?;
    base.resized(n_grid[0]).validate()?;
    dis.validate()?;
    ens.validate()?;
    int_cfg.validate()?;
    let entries = n_grid
        .par_iter()
        .map(|&n| DisorderedEntry {
            n_sites: n,
            outcome: config_average(&base.resized(n), dis, ens, int_cfg),
        })
        .collect();
    Ok(DisorderedSweep {
        width: dis.width,
        entries,
        params: base.clone(),
        grid: n_grid.to_vec(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Diffusive,
    Insulating,
    Inconclusive,
}

impl Phase {
    /// Power-law and length-independent transport both count as conducting.
    pub fn from_decay(class: DecayClass) -> Self {
        match class {
            DecayClass::PowerLaw | DecayClass::Ballistic => Phase::Diffusive,
            DecayClass::Exponential => Phase::Insulating,
            DecayClass::Inconclusive => Phase::Inconclusive,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Diffusive => "diffusive",
            Phase::Insulating => "insulating",
            Phase::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseCell {
    pub u: f64,
    pub w: f64,
    pub classification: Phase,
    pub decay_class: DecayClass,
    pub power: Option<ScalingFit>,
    pub exponential: Option<ScalingFit>,
    pub n_points: usize,
}

impl PhaseCell {
    pub fn from_points(u: f64, w: f64, points: &[(f64, f64)], cfg: &ClassifyConfig) -> Self {
        let c = classify_decay(points, cfg);
        Self {
            u,
            w,
            classification: Phase::from_decay(c.class),
            decay_class: c.class,
            power: c.power,
            exponential: c.exponential,
            n_points: points.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseScanEntry {
    pub u: f64,
    pub w: f64,
    pub cell: Result<PhaseCell>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseScanConfig {
    pub n_grid: Vec<usize>,
    pub n_configs: usize,
    pub master_seed: u64,
    pub classify: ClassifyConfig,
}

/// Classifies every `(U, W)` cell from its configuration-averaged sweep.
/// Cells are returned row-major in `U`.
pub fn phase_scan(
    base: &ChainParams,
    u_grid: &[f64],
    w_grid: &[f64],
    cfg: &PhaseScanConfig,
    ens: &EnsembleConfig,
    int_cfg: &IntegratorConfig,
) -> Result<Vec<PhaseScanEntry>> {
    if u_grid.is_empty() || w_grid.is_empty() {
        return Err(invalid("grid", "U and W grids must be non-empty"));
    }
    check_grid(&cfg.n_grid)?;
    let cells: Vec<(f64, f64)> = u_grid
        .iter()
        .flat_map(|&u| w_grid.iter().map(move |&w| (u, w)))
        .collect();
    Ok(cells
        .par_iter()
        .map(|&(u, w)| {
            let dis = DisorderConfig {
                width: w,
                n_configs: cfg.n_configs,
                master_seed: cfg.master_seed,
            };
            let cell = disordered_sweep(&base.clone().with_nonlinearity(u), &cfg.n_grid, &dis, ens, int_cfg)
                .and_then(|sweep| {
                    let pts = sweep.mean_points();
                    if pts.is_empty() {
                        Err(Error::AllRealizationsFailed {
                            attempted: cfg.n_grid.len(),
                        })
                    } else {
                        Ok(PhaseCell::from_points(u, w, &pts, &cfg.classify))
                    }
                });
            PhaseScanEntry { u, w, cell }
        })
        .collect())
}

/// Fraction of insulating cells among those with `lo ≤ W < hi`, or `None`
/// when the bin is empty.
pub fn insulating_fraction(cells: &[PhaseCell], lo: f64, hi: f64) -> Option<f64> {
    let in_bin: Vec<&PhaseCell> = cells.iter().filter(|c| c.w >= lo && c.w < hi).collect();
    if in_bin.is_empty() {
        return None;
    }
    let ins = in_bin.iter().filter(|c| c.classification == Phase::Insulating).count();
    Some(ins as f64 / in_bin.len() as f64)
}
