//! Command-line front end: argument and config parsing, the worker pool,
//! and CSV/JSON artifacts.

pub mod commands;
pub mod output;
pub mod settings;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use commands::Run;
use output::RunManifest;
use settings::{load_config, Settings};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_IO: i32 = 3;

pub const THREADS_ENV: &str = "PHOTON_LATTICE_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Numerical(photon_lattice::Error),
    #[error("i/o: {0}")]
    Io(String),
}

impl From<photon_lattice::Error> for CliError {
    fn from(err: photon_lattice::Error) -> Self {
        use photon_lattice::Error as E;
        match err {
            E::InvalidParameter { .. } | E::DimensionMismatch { .. } | E::BondOutOfRange { .. } => {
                CliError::Usage(err.to_string())
            }
            other => CliError::Numerical(other),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Numerical(_) => EXIT_NUMERICAL,
            CliError::Io(_) => EXIT_IO,
        }
    }
}

macro_rules! option_flags {
    ($($field:ident : $help:literal),* $(,)?) => {
        /// Options shared by every subcommand. Each overrides the config
        /// key of the same name.
        #[derive(Debug, Clone, Default, Args)]
        pub struct Opts {
            /// Flat `key = value` config file.
            #[arg(long, value_name = "PATH")]
            pub config: Option<PathBuf>,
            /// Reuse the resolved parameters of an earlier run.
            #[arg(long, value_name = "PATH")]
            pub manifest: Option<PathBuf>,
            $(
                #[arg(long, help = $help, allow_hyphen_values = true)]
                pub $field: Option<String>,
            )*
        }

        impl Opts {
            fn overrides(&self) -> Vec<(&'static str, &str)> {
                let mut v = Vec::new();
                $( if let Some(x) = &self.$field { v.push((stringify!($field), x.as_str())); } )*
                v
            }
        }
    };
}

option_flags! {
    sites: "Chain length(s): N, a,b,c or start:stop:step",
    hopping: "Hopping J",
    u: "Kerr nonlinearity U",
    p: "Drive amplitude p on site 1",
    delta: "Detuning of drive from cavity frequency",
    kappa: "Loss rate on the two boundary sites",
    kappa_bulk: "Loss rate on interior sites",
    t_end: "Integration horizon (simulate)",
    rtol: "Relative integrator tolerance",
    atol: "Absolute integrator tolerance",
    max_step: "Largest integrator step",
    initial_step: "First trial step",
    sample_interval: "Output sampling interval",
    ic: "Initial condition: zero or random",
    ic_radius: "Radius of the random initial-condition disc",
    realizations: "Realizations per ensemble",
    seed: "Master seed",
    transient: "Discarded transient time",
    window: "Averaging window length",
    sigma_star: "Variance threshold for instability",
    refine: "Bisect the threshold to unit resolution",
    axis: "Threshold scaling axis: u, p or kappa_bulk",
    values: "Axis values for threshold scaling",
    widths: "Disorder widths W",
    configs: "Disorder configurations per point",
    u_grid: "U values for the phase diagram",
    w_grid: "W values for the phase diagram",
    bins: "Histogram bins per quadrature axis",
    newton_max_iter: "Newton iteration cap",
    ramp_steps: "Drive-continuation steps",
    relax_time: "Relaxation time before a Newton retry",
    stop_on_failure: "Stop a stability scan at the first Newton failure",
    spectrum: "Also write the full spectrum (stability)",
    out: "Output directory",
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate one trajectory and write its last-site time series.
    Simulate(Opts),
    /// Ensemble statistics of the output field over a range of chain lengths.
    Sweep(Opts),
    /// Locate the instability threshold length (optionally per axis value).
    Threshold(Opts),
    /// Threshold lengths along an axis plus a power-law fit.
    ThresholdScaling(Opts),
    /// Steady states and linear growth rates along a length scan.
    Stability(Opts),
    /// Configuration-averaged sweeps for one or more disorder widths.
    Disorder(Opts),
    /// Transport classification over a (U, W) grid.
    PhaseDiagram(Opts),
}

#[derive(Debug, Parser)]
#[command(name = "photon-lattice", version, about = "Driven-dissipative nonlinear cavity chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

fn resolve(opts: &Opts) -> Result<Settings, CliError> {
    let mut settings = Settings::default();
    if let Some(path) = &opts.manifest {
        for (k, v) in RunManifest::read(path)?.parameters {
            settings.apply(&k, &v)?;
        }
    }
    if let Some(path) = &opts.config {
        load_config(path, &mut settings)?;
    }
    for (k, v) in opts.overrides() {
        settings.apply(k, v)?;
    }
    Ok(settings)
}

fn thread_pool() -> Result<rayon::ThreadPool, CliError> {
    let n = match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse::<usize>()
            .map_err(|_| CliError::Usage(format!("{THREADS_ENV} must be a non-negative integer, got `{v}`")))?,
        _ => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot build worker pool: {e}")))
}

fn execute(name: &str, opts: &Opts) -> Result<i32, CliError> {
    let settings = resolve(opts)?;
    std::fs::create_dir_all(&settings.out)
        .map_err(|e| CliError::Io(format!("{}: {e}", settings.out.display())))?;
    let started_at = chrono::Utc::now().to_rfc3339();
    let mut run = Run::new(settings);
    let pool = thread_pool()?;
    pool.install(|| match name {
        "simulate" => commands::simulate(&mut run),
        "sweep" => commands::sweep(&mut run),
        "threshold" => commands::threshold(&mut run, false),
        "threshold-scaling" => commands::threshold(&mut run, true),
        "stability" => commands::stability(&mut run),
        "disorder" => commands::disorder(&mut run),
        "phase-diagram" => commands::phase_diagram(&mut run),
        _ => unreachable!("clap only yields known subcommands"),
    })?;
    let exit_code = if run.partial_failure { EXIT_NUMERICAL } else { EXIT_OK };
    let manifest = RunManifest {
        command: name.to_string(),
        parameters: run.settings.to_pairs(),
        master_seed: run.settings.seed,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        started_at,
        finished_at: chrono::Utc::now().to_rfc3339(),
        outputs: run
            .outputs
            .iter()
            .filter_map(|p| p.file_name().map(|f| f.to_string_lossy().into_owned()))
            .collect(),
        warnings: run.warnings.clone(),
        exit_code,
        summary: run.summary.clone(),
    };
    manifest.write(&run.settings.out)?;
    Ok(exit_code)
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code: 0 success, 1 usage error, 2 numerical failure, 3 I/O
/// failure.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let (name, opts) = match &cli.command {
        Command::Simulate(o) => ("simulate", o),
        Command::Sweep(o) => ("sweep", o),
        Command::Threshold(o) => ("threshold", o),
        Command::ThresholdScaling(o) => ("threshold-scaling", o),
        Command::Stability(o) => ("stability", o),
        Command::Disorder(o) => ("disorder", o),
        Command::PhaseDiagram(o) => ("phase-diagram", o),
    };
    match execute(name, opts) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("photon-lattice {name}: {err}");
            if let CliError::Usage(_) = err {
                eprintln!("usage: photon-lattice <simulate|sweep|threshold|threshold-scaling|stability|disorder|phase-diagram> [--key value ...]");
            }
            err.exit_code()
        }
    }
}
