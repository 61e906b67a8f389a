//! Adaptive Dormand–Prince 5(4) integration with PI step-size control and
//! 4th-order continuous extension for uniform-grid sampling.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{rhs_into, ChainParams, Complex, FieldState};

/// Smallest step the controller accepts before giving up.
pub const MIN_STEP: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub initial_step: f64,
    pub max_step: f64,
    pub sample_interval: f64,
    pub t_end: f64,
    /// Keep every site's amplitude at each sample, not only the last site.
    pub record_full_field: bool,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            initial_step: 1e-3,
            max_step: 0.1,
            sample_interval: 0.1,
            t_end: 2000.0,
            record_full_field: false,
        }
    }
}

impl IntegratorConfig {
    pub fn with_t_end(mut self, t_end: f64) -> Self {
        self.t_end = t_end;
        self
    }

    pub fn with_tolerances(mut self, rel_tol: f64, abs_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self.abs_tol = abs_tol;
        self
    }

    pub fn with_full_field(mut self, on: bool) -> Self {
        self.record_full_field = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rel_tol", self.rel_tol),
            ("abs_tol", self.abs_tol),
            ("initial_step", self.initial_step),
            ("max_step", self.max_step),
            ("sample_interval", self.sample_interval),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(invalid(name, format!("must be positive, got {value}")));
            }
        }
        if !(self.t_end.is_finite() && self.sample_interval <= self.t_end) {
            return Err(invalid("t_end", "must be finite and at least one sample interval"));
        }
        Ok(())
    }

    /// Number of sample intervals covering `[0, t_end]`.
    pub fn n_intervals(&self) -> usize {
        (self.t_end / self.sample_interval - 1e-9).ceil() as usize
    }
}

/// How the initial condition of a trajectory was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InitialCondition {
    Zero,
    Random { seed: u64, radius: f64 },
    Custom,
}

/// Samples of one integrated trajectory on the grid `t_k = k·Δt_s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub sample_times: Vec<f64>,
    pub alpha_last: Vec<Complex>,
    /// Row-major `samples × n_sites` when recorded.
    pub full_field: Option<Vec<Complex>>,
    pub params: ChainParams,
    pub ic: InitialCondition,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.sample_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_times.is_empty()
    }

    pub fn end_time(&self) -> f64 {
        self.sample_times.last().copied().unwrap_or(0.0)
    }

    /// Full field at sample `k`, when recorded.
    pub fn field_at(&self, k: usize) -> Option<&[Complex]> {
        let n = self.params.n_sites;
        self.full_field.as_ref().map(|f| &f[k * n..(k + 1) * n])
    }
}

// Dormand–Prince 5(4) tableau.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const PI_BETA: f64 = 0.04;
const PI_ALPHA: f64 = 0.2 - 0.75 * PI_BETA;

/// Result of one attempted step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub new_state: FieldState,
    /// Scaled RMS error norm; the step is acceptable when `≤ 1`.
    pub error_estimate: f64,
    pub h_next: f64,
    pub accepted: bool,
}

/// Reusable stage storage plus controller memory for one trajectory.
#[derive(Debug, Clone)]
pub struct Stepper {
    n: usize,
    k: [Vec<Complex>; 7],
    y_stage: Vec<Complex>,
    y_new: Vec<Complex>,
    dense: [Vec<Complex>; 5],
    fsal_valid: bool,
    err_prev: f64,
    rejected_last: bool,
}

impl Stepper {
    pub fn new(n: usize) -> Self {
        let z = || vec![Complex::new(0.0, 0.0); n];
        Self {
            n,
            k: std::array::from_fn(|_| z()),
            y_stage: z(),
            y_new: z(),
            dense: std::array::from_fn(|_| z()),
            fsal_valid: false,
            err_prev: 1e-4,
            rejected_last: false,
        }
    }

    /// Evaluates stage `dst` from the preceding stages with weights `coeffs`.
    fn stage(&mut self, params: &ChainParams, y: &[Complex], h: f64, dst: usize, coeffs: &[f64]) {
        let (done, rest) = self.k.split_at_mut(dst);
        for (i, slot) in self.y_stage.iter_mut().enumerate() {
            let mut acc = Complex::new(0.0, 0.0);
            for (a, k) in coeffs.iter().zip(done.iter()) {
                acc += *a * k[i];
            }
            *slot = y[i] + h * acc;
        }
        rhs_into(params, &self.y_stage, &mut rest[0]);
    }

    /// Attempts a step of size `h` from `y`. On acceptance the candidate is
    /// left in `self.y_new` and the dense-output coefficients are filled.
    /// Returns `(error_norm, h_next, accepted)`.
    fn attempt(
        &mut self,
        params: &ChainParams,
        y: &[Complex],
        h: f64,
        cfg: &IntegratorConfig,
    ) -> (f64, f64, bool) {
        let n = self.n;
        if !self.fsal_valid {
            rhs_into(params, y, &mut self.k[0]);
            self.fsal_valid = true;
        }
        self.stage(params, y, h, 1, &[A21]);
        self.stage(params, y, h, 2, &[A31, A32]);
        self.stage(params, y, h, 3, &[A41, A42, A43]);
        self.stage(params, y, h, 4, &[A51, A52, A53, A54]);
        self.stage(params, y, h, 5, &[A61, A62, A63, A64, A65]);
        for i in 0..n {
            self.y_new[i] = y[i]
                + h * (A71 * self.k[0][i]
                    + A73 * self.k[2][i]
                    + A74 * self.k[3][i]
                    + A75 * self.k[4][i]
                    + A76 * self.k[5][i]);
        }
        rhs_into(params, &self.y_new, &mut self.k[6]);

        let mut sum = 0.0;
        for i in 0..n {
            let e = h
                * (E1 * self.k[0][i]
                    + E3 * self.k[2][i]
                    + E4 * self.k[3][i]
                    + E5 * self.k[4][i]
                    + E6 * self.k[5][i]
                    + E7 * self.k[6][i]);
            let scale = cfg.abs_tol + cfg.rel_tol * y[i].norm().max(self.y_new[i].norm());
            sum += (e.re / scale).powi(2) + (e.im / scale).powi(2);
        }
        let err = (sum / (2 * n).max(1) as f64).sqrt();

        if !err.is_finite() {
            return (f64::INFINITY, h * FAC_MIN, false);
        }
        if err <= 1.0 {
            let err_c = err.max(1e-10);
            let mut fac = SAFETY * err_c.powf(-PI_ALPHA) * self.err_prev.powf(PI_BETA);
            fac = fac.clamp(FAC_MIN, FAC_MAX);
            if self.rejected_last {
                fac = fac.min(1.0);
            }
            self.err_prev = err_c;
            self.rejected_last = false;
            (err, (h * fac).min(cfg.max_step), true)
        } else {
            let fac = (SAFETY * err.powf(-0.2)).max(FAC_MIN);
            self.rejected_last = true;
            (err, h * fac, false)
        }
    }

    fn fill_dense(&mut self, y: &[Complex], h: f64) {
        for i in 0..self.n {
            let dy = self.y_new[i] - y[i];
            let bspl = h * self.k[0][i] - dy;
            self.dense[0][i] = y[i];
            self.dense[1][i] = dy;
            self.dense[2][i] = bspl;
            self.dense[3][i] = dy - h * self.k[6][i] - bspl;
            self.dense[4][i] = h
                * (D1 * self.k[0][i]
                    + D3 * self.k[2][i]
                    + D4 * self.k[3][i]
                    + D5 * self.k[4][i]
                    + D6 * self.k[5][i]
                    + D7 * self.k[6][i]);
        }
    }

    /// Interpolated site `i` at fraction `theta ∈ [0, 1]` of the last step.
    #[inline]
    fn interpolate(&self, i: usize, theta: f64) -> Complex {
        let t1 = 1.0 - theta;
        let d = &self.dense;
        d[0][i] + theta * (d[1][i] + t1 * (d[2][i] + theta * (d[3][i] + t1 * d[4][i])))
    }

    fn commit(&mut self) {
        self.k.swap(0, 6);
    }
}

/// A single embedded step of size `h` from `state`.
///
/// A rejected step returns the input state unchanged with `h_next < h`.
pub fn step(
    params: &ChainParams,
    state: &FieldState,
    h: f64,
    cfg: &IntegratorConfig,
) -> Result<StepOutcome> {
    if !(h > 0.0) {
        return Err(invalid("h", "step size must be positive"));
    }
    state.check_consistent(params)?;
    let mut stepper = Stepper::new(params.n_sites);
    if !state.is_finite() {
        return Err(Error::NonFinite {
            last_good_time: state.time,
        });
    }
    let (err, h_next, accepted) = stepper.attempt(params, &state.amplitudes, h, cfg);
    let new_state = if accepted {
        FieldState {
            amplitudes: stepper.y_new.clone(),
            time: state.time + h,
        }
    } else {
        state.clone()
    };
    Ok(StepOutcome {
        new_state,
        error_estimate: err,
        h_next,
        accepted,
    })
}

/// Integrates from `ic` over `[ic.time, ic.time + t_end]`, calling `observe`
/// with `(k, t_k, field)` at every grid time `t_k = ic.time + k·Δt_s`,
/// including `k = 0`. Returns the final state.
pub fn integrate_observed<F>(
    params: &ChainParams,
    ic: &FieldState,
    cfg: &IntegratorConfig,
    mut observe: F,
) -> Result<FieldState>
where
    F: FnMut(usize, f64, &[Complex]),
{
    params.validate()?;
    cfg.validate()?;
    ic.check_consistent(params)?;
    if !ic.is_finite() {
        return Err(Error::NonFinite {
            last_good_time: ic.time,
        });
    }
    let n = params.n_sites;
    let t0 = ic.time;
    let n_intervals = cfg.n_intervals();
    let t_stop = t0 + n_intervals as f64 * cfg.sample_interval;

    let mut y = ic.amplitudes.clone();
    let mut t = t0;
    let mut h = cfg.initial_step.min(cfg.max_step);
    let mut stepper = Stepper::new(n);
    let mut buffer = vec![Complex::new(0.0, 0.0); n];

    observe(0, t0, &y);
    let mut next_k = 1usize;

    while next_k <= n_intervals {
        let h_try = h.min(t_stop - t).max(MIN_STEP);
        let (err, h_next, accepted) = stepper.attempt(params, &y, h_try, cfg);
        if !err.is_finite() && h_next < MIN_STEP {
            return Err(Error::NonFinite { last_good_time: t });
        }
        if !accepted {
            if h_next < MIN_STEP {
                return Err(Error::StepUnderflow { time: t, step: h_next });
            }
            h = h_next;
            continue;
        }
        if stepper.y_new.iter().any(|a| !(a.re.is_finite() && a.im.is_finite())) {
            return Err(Error::NonFinite { last_good_time: t });
        }
        stepper.fill_dense(&y, h_try);
        let t_new = if t_stop - (t + h_try) < MIN_STEP { t_stop } else { t + h_try };
        while next_k <= n_intervals {
            let tk = t0 + next_k as f64 * cfg.sample_interval;
            if tk > t_new + 1e-12 * t_new.abs().max(1.0) {
                break;
            }
            if next_k == n_intervals && t_new == t_stop {
                observe(next_k, tk, &stepper.y_new);
            } else {
                let theta = ((tk - t) / h_try).clamp(0.0, 1.0);
                for (i, slot) in buffer.iter_mut().enumerate() {
                    *slot = stepper.interpolate(i, theta);
                }
                observe(next_k, tk, &buffer);
            }
            next_k += 1;
        }
        std::mem::swap(&mut y, &mut stepper.y_new);
        stepper.commit();
        t = t_new;
        h = h_next;
    }

    Ok(FieldState {
        amplitudes: y,
        time: t,
    })
}

/// Integrates and records the trajectory on the uniform sample grid.
pub fn integrate(
    params: &ChainParams,
    ic: &FieldState,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    integrate_labelled(params, ic, cfg, InitialCondition::Custom)
}

pub fn integrate_labelled(
    params: &ChainParams,
    ic: &FieldState,
    cfg: &IntegratorConfig,
    label: InitialCondition,
) -> Result<Trajectory> {
    let capacity = cfg.n_intervals() + 1;
    let mut sample_times = Vec::with_capacity(capacity);
    let mut alpha_last = Vec::with_capacity(capacity);
    let mut full = cfg
        .record_full_field
        .then(|| Vec::with_capacity(capacity * params.n_sites));
    integrate_observed(params, ic, cfg, |_, t, field| {
        sample_times.push(t);
        alpha_last.push(field[field.len() - 1]);
        if let Some(f) = full.as_mut() {
            f.extend_from_slice(field);
        }
    })?;
    Ok(Trajectory {
        sample_times,
        alpha_last,
        full_field: full,
        params: params.clone(),
        ic: label,
    })
}
