//! Resolved run parameters: defaults, `key = value` files and flag overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use photon_lattice::integrator::IntegratorConfig;
use photon_lattice::observables::{EnsembleConfig, IcMode};
use photon_lattice::scaling::{ScalingAxis, ThresholdConfig};
use photon_lattice::stability::{NewtonConfig, ScanConfig};
use photon_lattice::ChainParams;

use crate::CliError;

/// Every key accepted in config files and as `--flag` (with `-` for `_`).
pub const KEYS: &[&str] = &[
    "sites",
    "hopping",
    "u",
    "p",
    "delta",
    "kappa",
    "kappa_bulk",
    "t_end",
    "rtol",
    "atol",
    "max_step",
    "initial_step",
    "sample_interval",
    "ic",
    "ic_radius",
    "realizations",
    "seed",
    "transient",
    "window",
    "sigma_star",
    "refine",
    "axis",
    "values",
    "widths",
    "configs",
    "u_grid",
    "w_grid",
    "bins",
    "newton_max_iter",
    "ramp_steps",
    "relax_time",
    "stop_on_failure",
    "spectrum",
    "out",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub sites: Vec<usize>,
    pub hopping: f64,
    pub u: f64,
    pub p: f64,
    pub delta: f64,
    pub kappa: f64,
    pub kappa_bulk: f64,
    pub t_end: f64,
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
    pub initial_step: f64,
    pub sample_interval: f64,
    pub ic: IcMode,
    pub ic_radius: f64,
    pub realizations: usize,
    pub seed: u64,
    pub transient: f64,
    pub window: f64,
    pub sigma_star: f64,
    pub refine: bool,
    pub axis: Option<ScalingAxis>,
    pub values: Vec<f64>,
    pub widths: Vec<f64>,
    pub configs: usize,
    pub u_grid: Vec<f64>,
    pub w_grid: Vec<f64>,
    pub bins: usize,
    pub newton_max_iter: usize,
    pub ramp_steps: usize,
    pub relax_time: f64,
    pub stop_on_failure: bool,
    pub spectrum: bool,
    pub out: PathBuf,
}

impl Default for Settings {
    fn default() -> Self {
        let int = IntegratorConfig::default();
        let ens = EnsembleConfig::default();
        let newton = NewtonConfig::default();
        Self {
            sites: vec![20],
            hopping: 1.0,
            u: 1.0,
            p: 10.0,
            delta: 0.0,
            kappa: 1.0,
            kappa_bulk: 0.0,
            t_end: int.t_end,
            rtol: int.rel_tol,
            atol: int.abs_tol,
            max_step: int.max_step,
            initial_step: int.initial_step,
            sample_interval: int.sample_interval,
            ic: ens.ic_mode,
            ic_radius: ens.ic_radius,
            realizations: ens.n_realizations,
            seed: ens.master_seed,
            transient: ens.transient_time,
            window: ens.window_time,
            sigma_star: ThresholdConfig::default().sigma_star,
            refine: false,
            axis: None,
            values: Vec::new(),
            widths: vec![0.0],
            configs: 128,
            u_grid: Vec::new(),
            w_grid: Vec::new(),
            bins: 50,
            newton_max_iter: newton.max_iterations,
            ramp_steps: newton.drive_ramp_steps,
            relax_time: newton.relax_time,
            stop_on_failure: true,
            spectrum: false,
            out: PathBuf::from("."),
        }
    }
}

fn bad_value(key: &str, value: &str, why: impl std::fmt::Display) -> CliError {
    CliError::Usage(format!("invalid value `{value}` for `{key}`: {why}"))
}

fn scalar<T: FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    value.trim().parse().map_err(|e| bad_value(key, value, e))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value.trim() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(bad_value(key, value, "expected true or false")),
    }
}

/// `start:stop:step` (inclusive), a comma list, or a single value.
pub fn parse_usize_grid(key: &str, value: &str) -> Result<Vec<usize>, CliError> {
    let value = value.trim();
    if let Some((start, rest)) = value.split_once(':') {
        let (stop, step) = rest
            .split_once(':')
            .ok_or_else(|| bad_value(key, value, "range needs start:stop:step"))?;
        let start: usize = scalar(key, start)?;
        let stop: usize = scalar(key, stop)?;
        let step: usize = scalar(key, step)?;
        if step == 0 || stop < start {
            return Err(bad_value(key, value, "need step > 0 and stop ≥ start"));
        }
        return Ok((start..=stop).step_by(step).collect());
    }
    value.split(',').map(|v| scalar(key, v)).collect()
}

pub fn parse_f64_grid(key: &str, value: &str) -> Result<Vec<f64>, CliError> {
    let value = value.trim();
    if value.is_empty() {
        return Ok(Vec::new());
    }
    if let Some((start, rest)) = value.split_once(':') {
        let (stop, step) = rest
            .split_once(':')
            .ok_or_else(|| bad_value(key, value, "range needs start:stop:step"))?;
        let start: f64 = scalar(key, start)?;
        let stop: f64 = scalar(key, stop)?;
        let step: f64 = scalar(key, step)?;
        if !(step > 0.0) || !(stop >= start) {
            return Err(bad_value(key, value, "need step > 0 and stop ≥ start"));
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize;
        return Ok((0..=count).map(|k| start + k as f64 * step).collect());
    }
    value.split(',').map(|v| scalar(key, v)).collect()
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl Settings {
    /// Applies one `key = value` assignment. Hyphens in `key` are accepted
    /// in place of underscores.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let key = key.trim().replace('-', "_");
        let k = key.as_str();
        match k {
            "sites" => self.sites = parse_usize_grid(k, value)?,
            "hopping" => self.hopping = scalar(k, value)?,
            "u" => self.u = scalar(k, value)?,
            "p" => self.p = scalar(k, value)?,
            "delta" => self.delta = scalar(k, value)?,
            "kappa" => self.kappa = scalar(k, value)?,
            "kappa_bulk" => self.kappa_bulk = scalar(k, value)?,
            "t_end" => self.t_end = scalar(k, value)?,
            "rtol" => self.rtol = scalar(k, value)?,
            "atol" => self.atol = scalar(k, value)?,
            "max_step" => self.max_step = scalar(k, value)?,
            "initial_step" => self.initial_step = scalar(k, value)?,
            "sample_interval" => self.sample_interval = scalar(k, value)?,
            "ic" => {
                self.ic = match value.trim() {
                    "zero" => IcMode::Zero,
                    "random" => IcMode::Random,
                    _ => return Err(bad_value(k, value, "expected zero or random")),
                }
            }
            "ic_radius" => self.ic_radius = scalar(k, value)?,
            "realizations" => self.realizations = scalar(k, value)?,
            "seed" => self.seed = scalar(k, value)?,
            "transient" => self.transient = scalar(k, value)?,
            "window" => self.window = scalar(k, value)?,
            "sigma_star" => self.sigma_star = scalar(k, value)?,
            "refine" => self.refine = parse_bool(k, value)?,
            "axis" => {
                self.axis = match value.trim() {
                    "" | "none" => None,
                    "u" => Some(ScalingAxis::Nonlinearity),
                    "p" => Some(ScalingAxis::Drive),
                    "kappa_bulk" | "kappa-bulk" => Some(ScalingAxis::KappaBulk),
                    _ => return Err(bad_value(k, value, "expected u, p or kappa_bulk")),
                }
            }
            "values" => self.values = parse_f64_grid(k, value)?,
            "widths" => self.widths = parse_f64_grid(k, value)?,
            "configs" => self.configs = scalar(k, value)?,
            "u_grid" => self.u_grid = parse_f64_grid(k, value)?,
            "w_grid" => self.w_grid = parse_f64_grid(k, value)?,
            "bins" => self.bins = scalar(k, value)?,
            "newton_max_iter" => self.newton_max_iter = scalar(k, value)?,
            "ramp_steps" => self.ramp_steps = scalar(k, value)?,
            "relax_time" => self.relax_time = scalar(k, value)?,
            "stop_on_failure" => self.stop_on_failure = parse_bool(k, value)?,
            "spectrum" => self.spectrum = parse_bool(k, value)?,
            "out" => self.out = PathBuf::from(value.trim()),
            _ => return Err(CliError::Usage(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Canonical `key → value` strings; feeding them back through
    /// [`Settings::apply`] reproduces `self` exactly.
    pub fn to_pairs(&self) -> BTreeMap<String, String> {
        let ic = match self.ic {
            IcMode::Zero => "zero",
            IcMode::Random => "random",
        };
        let pairs: Vec<(&str, String)> = vec![
            ("sites", join(&self.sites)),
            ("hopping", self.hopping.to_string()),
            ("u", self.u.to_string()),
            ("p", self.p.to_string()),
            ("delta", self.delta.to_string()),
            ("kappa", self.kappa.to_string()),
            ("kappa_bulk", self.kappa_bulk.to_string()),
            ("t_end", self.t_end.to_string()),
            ("rtol", self.rtol.to_string()),
            ("atol", self.atol.to_string()),
            ("max_step", self.max_step.to_string()),
            ("initial_step", self.initial_step.to_string()),
            ("sample_interval", self.sample_interval.to_string()),
            ("ic", ic.to_string()),
            ("ic_radius", self.ic_radius.to_string()),
            ("realizations", self.realizations.to_string()),
            ("seed", self.seed.to_string()),
            ("transient", self.transient.to_string()),
            ("window", self.window.to_string()),
            ("sigma_star", self.sigma_star.to_string()),
            ("refine", self.refine.to_string()),
            ("axis", self.axis.map_or("none", ScalingAxis::as_str).to_string()),
            ("values", join(&self.values)),
            ("widths", join(&self.widths)),
            ("configs", self.configs.to_string()),
            ("u_grid", join(&self.u_grid)),
            ("w_grid", join(&self.w_grid)),
            ("bins", self.bins.to_string()),
            ("newton_max_iter", self.newton_max_iter.to_string()),
            ("ramp_steps", self.ramp_steps.to_string()),
            ("relax_time", self.relax_time.to_string()),
            ("stop_on_failure", self.stop_on_failure.to_string()),
            ("spectrum", self.spectrum.to_string()),
            ("out", self.out.display().to_string()),
        ];
        pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    pub fn apply_config_text(&mut self, text: &str, origin: &Path) -> Result<(), CliError> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Usage(format!("{}:{}: expected `key = value`", origin.display(), lineno + 1))
            })?;
            self.apply(key, value)
                .map_err(|e| CliError::Usage(format!("{}:{}: {e}", origin.display(), lineno + 1)))?;
        }
        Ok(())
    }

    pub fn chain(&self, n_sites: usize) -> ChainParams {
        ChainParams::new(n_sites)
            .with_hopping(self.hopping)
            .with_nonlinearity(self.u)
            .with_drive(self.p)
            .with_detuning(self.delta)
            .with_kappa(self.kappa)
            .with_kappa_bulk(self.kappa_bulk)
    }

    pub fn integrator(&self) -> IntegratorConfig {
        IntegratorConfig {
            rel_tol: self.rtol,
            abs_tol: self.atol,
            initial_step: self.initial_step,
            max_step: self.max_step,
            sample_interval: self.sample_interval,
            t_end: self.t_end,
            record_full_field: false,
        }
    }

    pub fn ensemble(&self) -> EnsembleConfig {
        EnsembleConfig {
            n_realizations: self.realizations,
            master_seed: self.seed,
            ic_mode: self.ic,
            ic_radius: self.ic_radius,
            transient_time: self.transient,
            window_time: self.window,
        }
    }

    pub fn threshold(&self) -> ThresholdConfig {
        ThresholdConfig {
            sigma_star: self.sigma_star,
            refine: self.refine,
            track_collapse: None,
        }
    }

    pub fn scan(&self) -> ScanConfig {
        ScanConfig {
            newton: NewtonConfig {
                max_iterations: self.newton_max_iter,
                drive_ramp_steps: self.ramp_steps,
                relax_time: self.relax_time,
                ..NewtonConfig::default()
            },
            stop_on_failure: self.stop_on_failure,
        }
    }
}

/// Reads a flat `key = value` file (blank lines and `#` comments allowed).
pub fn load_config(path: &Path, settings: &mut Settings) -> Result<(), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    settings.apply_config_text(&text, path)
}
