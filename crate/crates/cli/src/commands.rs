use std::path::PathBuf;

use serde_json::json;

use photon_lattice::disorder::{disordered_sweep, phase_scan, DisorderConfig, PhaseCell, PhaseScanConfig};
use photon_lattice::integrator::integrate;
use photon_lattice::observables::{draw_initial_condition, quadrature_histogram, window_stats};
use photon_lattice::scaling::{
    branch_beyond, classify_decay, detect_threshold, length_sweep, locate_threshold, threshold_scaling,
    ClassifyConfig, DecayClassification, ScalingAxis, ThresholdReport,
};
use photon_lattice::stability::stability_scan;

use crate::output::{num, opt_int, opt_num, Table, WarningCounts};
use crate::settings::Settings;
use crate::CliError;

/// State shared by a command while it runs.
pub struct Run {
    pub settings: Settings,
    pub outputs: Vec<PathBuf>,
    pub warnings: WarningCounts,
    pub summary: serde_json::Value,
    /// Set when some unit of work failed numerically but outputs were still
    /// written for the rest.
    pub partial_failure: bool,
}

impl Run {
    pub fn new(settings: Settings) -> Self {
        Self {
            settings,
            outputs: Vec::new(),
            warnings: WarningCounts::default(),
            summary: serde_json::Value::Null,
            partial_failure: false,
        }
    }

    fn table(&self, name: &str, header: &[&str]) -> Result<Table, CliError> {
        Table::create(&self.settings.out, name, header)
    }

    fn done(&mut self, table: Table) -> Result<(), CliError> {
        self.outputs.push(table.finish()?);
        Ok(())
    }

    fn single_length(&self) -> Result<usize, CliError> {
        match self.settings.sites.as_slice() {
            [n] => Ok(*n),
            _ => Err(CliError::Usage("this command takes a single --sites value".into())),
        }
    }
}

const FIT_COLUMNS: [&str; 7] = [
    "classification",
    "power_exponent",
    "power_prefactor",
    "power_r2",
    "exp_rate",
    "exp_prefactor",
    "exp_r2",
];

fn fit_fields(c: &DecayClassification) -> Vec<String> {
    vec![
        c.class.as_str().to_string(),
        opt_num(c.power.map(|f| f.exponent_or_rate)),
        opt_num(c.power.map(|f| f.prefactor)),
        opt_num(c.power.map(|f| f.r_squared)),
        opt_num(c.exponential.map(|f| f.exponent_or_rate)),
        opt_num(c.exponential.map(|f| f.prefactor)),
        opt_num(c.exponential.map(|f| f.r_squared)),
    ]
}

pub fn simulate(run: &mut Run) -> Result<(), CliError> {
    let s = run.settings.clone();
    let n = run.single_length()?;
    let params = s.chain(n);
    let ic = draw_initial_condition(s.ic, s.seed, 0, n, s.ic_radius);
    let traj = integrate(&params, &ic, &s.integrator())?;

    let mut t = run.table("trajectory.csv", &["t", "re_alpha_N", "im_alpha_N", "abs_alpha_N"])?;
    for (time, a) in traj.sample_times.iter().zip(&traj.alpha_last) {
        t.row([num(*time), num(a.re), num(a.im), num(a.norm())])?;
    }
    run.done(t)?;

    if s.t_end > s.transient {
        let w = window_stats(&traj, s.transient, s.t_end - s.transient)?;
        let hist = quadrature_histogram(&traj, s.bins, s.transient)?;
        let mut h = run.table("histogram.csv", &["x_center", "p_center", "count"])?;
        let (dx, dp) = (
            (hist.x_range.1 - hist.x_range.0) / hist.bins as f64,
            (hist.p_range.1 - hist.p_range.0) / hist.bins as f64,
        );
        for ix in 0..hist.bins {
            for ip in 0..hist.bins {
                h.row([
                    num(hist.x_range.0 + (ix as f64 + 0.5) * dx),
                    num(hist.p_range.0 + (ip as f64 + 0.5) * dp),
                    hist.count(ix, ip).to_string(),
                ])?;
            }
        }
        run.done(h)?;
        println!("N = {n}: <|alpha_N|> = {:.6}, sigma = {:.3e} over ({}, {}]", w.mean, w.variance.sqrt(), s.transient, s.t_end);
        run.summary = json!({
            "mean_abs_alpha_N": w.mean,
            "sigma": w.variance.sqrt(),
            "window_samples": w.n_samples,
        });
    } else {
        log::warn!("t_end ≤ transient: no window statistics or histogram");
    }
    Ok(())
}

pub fn sweep(run: &mut Run) -> Result<(), CliError> {
    let s = run.settings.clone();
    let result = length_sweep(&s.chain(1), &s.sites, &s.ensemble(), &s.integrator())?;

    let mut t = run.table("sweep.csv", &["N", "mean_abs_alpha_N", "sigma", "n_realizations", "n_failed"])?;
    for entry in &result.entries {
        match &entry.outcome {
            Ok(st) => {
                run.warnings.failed_realizations += st.n_failed;
                t.row([
                    entry.n_sites.to_string(),
                    num(st.mean_abs),
                    num(st.sigma),
                    st.n_effective.to_string(),
                    st.n_failed.to_string(),
                ])?;
            }
            Err(err) => {
                log::error!("N = {}: {err}", entry.n_sites);
                run.warnings.failed_entries += 1;
                run.partial_failure = true;
            }
        }
    }
    run.done(t)?;

    let (n_t, n_t_end) = locate_threshold(&result.sigma_points(), s.sigma_star);
    if let Some(n_t) = n_t {
        let branch = branch_beyond(&result, n_t);
        let c = classify_decay(&branch, &ClassifyConfig::default());
        let mut header = vec!["N_t"];
        header.extend(FIT_COLUMNS);
        header.push("n_points");
        let mut f = run.table("sweep_fit.csv", &header)?;
        let mut row = vec![n_t.to_string()];
        row.extend(fit_fields(&c));
        row.push(branch.len().to_string());
        f.row(row)?;
        run.done(f)?;
    }
    println!("N_t = {}, N_t_end = {}", opt_int(n_t), opt_int(n_t_end));
    run.summary = json!({ "n_t": n_t, "n_t_end": n_t_end, "sigma_star": s.sigma_star });
    Ok(())
}

fn threshold_rows(run: &mut Run, rows: &[(Option<ScalingAxis>, f64, &ThresholdReport)]) -> Result<(), CliError> {
    let mut t = run.table("threshold.csv", &["axis", "value", "N_t", "N_t_end", "sigma_star", "refined"])?;
    let mut pts = run.table("threshold_points.csv", &["axis", "value", "N", "mean_abs_alpha_N", "sigma"])?;
    for (axis, value, report) in rows {
        let axis = axis.map_or("none", ScalingAxis::as_str);
        t.row([
            axis.to_string(),
            num(*value),
            opt_int(report.n_t),
            opt_int(report.n_t_end),
            num(report.sigma_star),
            report.refined.to_string(),
        ])?;
        for p in &report.evaluated {
            pts.row([axis.to_string(), num(*value), p.n_sites.to_string(), num(p.mean_abs), num(p.sigma)])?;
        }
        println!("{axis} = {value}: N_t = {}, N_t_end = {}", opt_int(report.n_t), opt_int(report.n_t_end));
    }
    run.done(t)?;
    run.done(pts)
}

/// Single detection without `axis`; a scaling study with it.
pub fn threshold(run: &mut Run, require_axis: bool) -> Result<(), CliError> {
    let s = run.settings.clone();
    let base = s.chain(1);
    let Some(axis) = s.axis else {
        if require_axis {
            return Err(CliError::Usage("threshold-scaling needs --axis and --values".into()));
        }
        let report = detect_threshold(&base, &s.sites, &s.ensemble(), &s.integrator(), &s.threshold())?;
        let value = 0.0;
        threshold_rows(run, &[(None, value, &report)])?;
        run.summary = json!({ "n_t": report.n_t, "n_t_end": report.n_t_end });
        return Ok(());
    };
    if s.values.is_empty() {
        return Err(CliError::Usage("--axis needs --values".into()));
    }
    let scaling = threshold_scaling(&base, axis, &s.values, &s.sites, &s.ensemble(), &s.integrator(), &s.threshold())?;
    let mut rows = Vec::new();
    for (v, r) in &scaling.entries {
        match r {
            Ok(report) => rows.push((Some(axis), *v, report)),
            Err(err) => {
                log::error!("{} = {v}: {err}", axis.as_str());
                run.warnings.failed_entries += 1;
                run.partial_failure = true;
            }
        }
    }
    threshold_rows(run, &rows)?;
    let mut f = run.table("threshold_fit.csv", &["axis", "exponent", "prefactor", "r2", "n_points"])?;
    if let Some(fit) = scaling.fit {
        f.row([
            axis.as_str().to_string(),
            num(fit.exponent_or_rate),
            num(fit.prefactor),
            num(fit.r_squared),
            fit.n_points.to_string(),
        ])?;
    }
    run.done(f)?;
    run.summary = json!({
        "thresholds": scaling.thresholds(),
        "fit": scaling.fit,
    });
    Ok(())
}

pub fn stability(run: &mut Run) -> Result<(), CliError> {
    let s = run.settings.clone();
    let entries = stability_scan(&s.chain(1), &s.sites, &s.scan())?;
    let mut t = run.table(
        "stability.csv",
        &["N", "max_im_E", "converged", "residual_norm", "newton_iterations", "abs_alpha_N"],
    )?;
    let mut spectrum = if s.spectrum {
        Some(run.table("spectrum.csv", &["N", "re_E", "im_E"])?)
    } else {
        None
    };
    let mut converged = 0;
    for e in &entries {
        let ok = e.steady.converged && e.spectrum.is_some();
        if ok {
            converged += 1;
        } else {
            run.warnings.nonconverged_newton += 1;
        }
        t.row([
            e.n_sites.to_string(),
            opt_num(e.spectrum.as_ref().map(|sp| sp.max_im)),
            ok.to_string(),
            num(e.steady.residual_norm),
            e.steady.newton_iterations.to_string(),
            num(e.steady.alpha.last().map_or(f64::NAN, |a| a.norm())),
        ])?;
        if let (Some(table), Some(sp)) = (spectrum.as_mut(), e.spectrum.as_ref()) {
            for ev in &sp.eigenvalues {
                table.row([e.n_sites.to_string(), num(ev.re), num(ev.im)])?;
            }
        }
    }
    run.done(t)?;
    if let Some(table) = spectrum {
        run.done(table)?;
    }
    if converged < entries.len() {
        run.partial_failure = true;
    }
    println!("{converged} of {} lengths converged", entries.len());
    Ok(())
}

pub fn disorder(run: &mut Run) -> Result<(), CliError> {
    let s = run.settings.clone();
    let base = s.chain(1);
    let mut t = run.table(
        "disorder.csv",
        &[
            "W",
            "N",
            "mean_abs_alpha_N",
            "median_abs_alpha_N",
            "log_mean_abs_alpha_N",
            "log_std_error",
            "sigma",
            "n_configs",
            "n_failed_configs",
        ],
    )?;
    let mut per = run.table("disorder_configs.csv", &["W", "N", "config", "seed", "mean_abs_alpha_N", "sigma"])?;
    let mut header = vec!["W"];
    header.extend(FIT_COLUMNS);
    header.push("n_points");
    let mut fits = run.table("disorder_fit.csv", &header)?;
    for &w in &s.widths {
        let dis = DisorderConfig {
            width: w,
            n_configs: s.configs,
            master_seed: s.seed,
        };
        let sweep = disordered_sweep(&base, &s.sites, &dis, &s.ensemble(), &s.integrator())?;
        for e in &sweep.entries {
            match &e.outcome {
                Ok(a) => {
                    run.warnings.failed_configs += a.n_failed_configs;
                    run.warnings.failed_realizations += a.per_config.iter().map(|c| c.stats.n_failed).sum::<usize>();
                    t.row([
                        num(w),
                        e.n_sites.to_string(),
                        num(a.mean_abs),
                        num(a.median_abs),
                        num(a.log_mean_abs),
                        num(a.log_std_error),
                        num(a.sigma),
                        a.per_config.len().to_string(),
                        a.n_failed_configs.to_string(),
                    ])?;
                    for c in &a.per_config {
                        per.row([
                            num(w),
                            e.n_sites.to_string(),
                            c.config_index.to_string(),
                            c.seed.to_string(),
                            num(c.stats.mean_abs),
                            num(c.stats.sigma),
                        ])?;
                    }
                }
                Err(err) => {
                    log::error!("W = {w}, N = {}: {err}", e.n_sites);
                    run.warnings.failed_entries += 1;
                    run.partial_failure = true;
                }
            }
        }
        let pts = sweep.mean_points();
        let c = classify_decay(&pts, &ClassifyConfig::default());
        println!("W = {w}: {}", c.class.as_str());
        let mut row = vec![num(w)];
        row.extend(fit_fields(&c));
        row.push(pts.len().to_string());
        fits.row(row)?;
    }
    run.done(t)?;
    run.done(per)?;
    run.done(fits)
}

pub fn phase_diagram(run: &mut Run) -> Result<(), CliError> {
    let s = run.settings.clone();
    if s.u_grid.is_empty() || s.w_grid.is_empty() {
        return Err(CliError::Usage("phase-diagram needs --u-grid and --w-grid".into()));
    }
    let cfg = PhaseScanConfig {
        n_grid: s.sites.clone(),
        n_configs: s.configs,
        master_seed: s.seed,
        classify: ClassifyConfig::default(),
    };
    let cells = phase_scan(&s.chain(1), &s.u_grid, &s.w_grid, &cfg, &s.ensemble(), &s.integrator())?;
    let mut t = run.table(
        "phase.csv",
        &["U", "W", "classification", "power_exponent", "power_r2", "exp_rate", "exp_r2", "n_points"],
    )?;
    for entry in &cells {
        match &entry.cell {
            Ok(PhaseCell {
                u,
                w,
                classification,
                power,
                exponential,
                n_points,
                ..
            }) => t.row([
                num(*u),
                num(*w),
                classification.as_str().to_string(),
                opt_num(power.map(|f| f.exponent_or_rate)),
                opt_num(power.map(|f| f.r_squared)),
                opt_num(exponential.map(|f| f.exponent_or_rate)),
                opt_num(exponential.map(|f| f.r_squared)),
                n_points.to_string(),
            ])?,
            Err(err) => {
                log::error!("U = {}, W = {}: {err}", entry.u, entry.w);
                run.warnings.failed_entries += 1;
                run.partial_failure = true;
            }
        }
    }
    run.done(t)
}
