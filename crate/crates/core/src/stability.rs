//! Fixed points of the mean-field flow and their linear stability.
//!
//! Steady states are found by damped Newton iteration on the `2N` real
//! equations `Re/Im dα/dt = 0`, globalized by continuation in the drive and
//! in the chain length. Small excitations `δα_j = e^{−iEt}U_j + e^{iE*t}V_j*`
//! around a fixed point obey `E ψ = A ψ` with `ψ = (U_1, V_1, …, U_N, V_N)`;
//! the fixed point is unstable once some `Im E > 0`.
//!
//! Writing the linearized flow as `dδ/dt = a·δ + b·δ*`, the per-site blocks of
//! `A` are `i·[[a, b], [b*, a*]]`, so `E = iλ` for every eigenvalue `λ` of the
//! real Jacobian and `max Im E` is that Jacobian's spectral abscissa.

use nalgebra::{DMatrix, DVector, Schur};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{integrate_observed, IntegratorConfig};
use crate::model::{rhs_into, ChainParams, Complex, FieldState};

const I: Complex = Complex::new(0.0, 1.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewtonConfig {
    pub max_iterations: usize,
    /// Number of equal increments when ramping the drive up from zero.
    pub drive_ramp_steps: usize,
    /// Residual target relative to `max(1, p/J)`.
    pub rel_tol: f64,
    /// When continuation stalls (e.g. at a fold of a bistable branch), the
    /// dynamics are integrated for this long from the last iterate and Newton
    /// restarts from there. Zero disables the fallback.
    pub relax_time: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            drive_ramp_steps: 10,
            rel_tol: 1e-10,
            relax_time: 400.0,
        }
    }
}

impl NewtonConfig {
    pub fn tolerance(&self, params: &ChainParams) -> f64 {
        self.rel_tol * (params.drive / params.hopping).max(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    pub alpha: Vec<Complex>,
    /// Max-norm of `dα/dt` at `alpha`.
    pub residual_norm: f64,
    pub params: ChainParams,
    pub converged: bool,
    pub newton_iterations: usize,
}

impl SteadyState {
    pub fn ensure_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NotConverged {
                iterations: self.newton_iterations,
                residual: self.residual_norm,
            })
        }
    }

    pub fn occupation(&self, site: usize) -> f64 {
        self.alpha[site].norm_sqr()
    }

    pub fn as_state(&self) -> FieldState {
        FieldState::new(self.alpha.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BdgSpectrum {
    pub eigenvalues: Vec<Complex>,
    pub max_im: f64,
    pub matrix_dim: usize,
}

fn to_real(alpha: &[Complex]) -> DVector<f64> {
    DVector::from_iterator(alpha.len() * 2, alpha.iter().flat_map(|a| [a.re, a.im]))
}

fn to_complex(x: &DVector<f64>) -> Vec<Complex> {
    x.as_slice()
        .chunks_exact(2)
        .map(|c| Complex::new(c[0], c[1]))
        .collect()
}

fn residual(params: &ChainParams, alpha: &[Complex], buf: &mut [Complex]) -> DVector<f64> {
    rhs_into(params, alpha, buf);
    to_real(buf)
}

/// `(∂f/∂α, ∂f/∂α*)` for the on-site part of `dα_i/dt`.
#[inline]
fn onsite_derivatives(params: &ChainParams, site: usize, a: Complex) -> (Complex, Complex) {
    let u = params.nonlinearity;
    let da = Complex::new(-0.5 * params.loss_rate(site), -params.site_detuning(site))
        - I * (4.0 * u * a.norm_sqr());
    let db = -I * (2.0 * u) * a * a;
    (da, db)
}

/// Writes the real 2×2 block of `d(Re f, Im f)/d(Re α, Im α)` for
/// `df = a·dα + b·dα*`.
#[inline]
fn put_block(m: &mut DMatrix<f64>, row: usize, col: usize, a: Complex, b: Complex) {
    let s = a + b;
    let d = a - b;
    m[(row, col)] = s.re;
    m[(row, col + 1)] = -d.im;
    m[(row + 1, col)] = s.im;
    m[(row + 1, col + 1)] = d.re;
}

/// Real `2N × 2N` Jacobian of the flow in `(Re α_1, Im α_1, …)` coordinates.
pub fn flow_jacobian(params: &ChainParams, alpha: &[Complex]) -> DMatrix<f64> {
    let n = params.n_sites;
    let hop = Complex::new(0.0, -params.hopping);
    let zero = Complex::new(0.0, 0.0);
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        let (da, db) = onsite_derivatives(params, i, alpha[i]);
        put_block(&mut m, 2 * i, 2 * i, da, db);
        if i > 0 {
            put_block(&mut m, 2 * i, 2 * (i - 1), hop, zero);
        }
        if i + 1 < n {
            put_block(&mut m, 2 * i, 2 * (i + 1), hop, zero);
        }
    }
    m
}

/// Exact steady state of the linear chain (`U = 0`) by a complex
/// tridiagonal (Thomas) solve. Nonlinearity in `params` is ignored.
pub fn linear_steady_state(params: &ChainParams) -> Result<Vec<Complex>> {
    params.validate()?;
    let n = params.n_sites;
    let off = Complex::new(0.0, -params.hopping);
    let diag: Vec<Complex> = (0..n)
        .map(|i| Complex::new(-0.5 * params.loss_rate(i), -params.site_detuning(i)))
        .collect();
    // M α = i p e_1
    let mut c_prime = vec![Complex::new(0.0, 0.0); n];
    let mut d_prime = vec![Complex::new(0.0, 0.0); n];
    let mut pivot = diag[0];
    if pivot.norm() == 0.0 {
        return Err(Error::DegenerateData("singular linear chain".into()));
    }
    c_prime[0] = off / pivot;
    d_prime[0] = I * params.drive / pivot;
    for i in 1..n {
        pivot = diag[i] - off * c_prime[i - 1];
        if pivot.norm() == 0.0 {
            return Err(Error::DegenerateData("singular linear chain".into()));
        }
        c_prime[i] = off / pivot;
        d_prime[i] = (-off * d_prime[i - 1]) / pivot;
    }
    let mut alpha = vec![Complex::new(0.0, 0.0); n];
    alpha[n - 1] = d_prime[n - 1];
    for i in (0..n - 1).rev() {
        alpha[i] = d_prime[i] - c_prime[i] * alpha[i + 1];
    }
    Ok(alpha)
}

/// Damped Newton iteration from `start`.
fn newton(params: &ChainParams, start: &[Complex], cfg: &NewtonConfig) -> SteadyState {
    let n = params.n_sites;
    let tol = cfg.tolerance(params);
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    let mut x = to_real(start);
    let mut f = residual(params, start, &mut buf);
    let mut iterations = 0;
    let mut converged = f.amax() <= tol;

    while !converged && iterations < cfg.max_iterations {
        iterations += 1;
        let alpha = to_complex(&x);
        let jac = flow_jacobian(params, &alpha);
        let Some(dx) = jac.lu().solve(&(-&f)) else {
            break;
        };
        let norm0 = f.norm();
        let mut lambda = 1.0;
        let mut accepted = None;
        while lambda >= 1e-8 {
            let x_try = &x + lambda * &dx;
            let f_try = residual(params, &to_complex(&x_try), &mut buf);
            if f_try.iter().all(|v| v.is_finite()) && f_try.norm() < (1.0 - 1e-4 * lambda) * norm0 {
                accepted = Some((x_try, f_try));
                break;
            }
            lambda *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            break;
        };
        x = x_new;
        f = f_new;
        converged = f.amax() <= tol;
    }

    SteadyState {
        alpha: to_complex(&x),
        residual_norm: f.amax(),
        params: params.clone(),
        converged,
        newton_iterations: iterations,
    }
}

/// Integrates the flow for `cfg.relax_time` from `start`, then runs Newton.
fn relax_then_newton(params: &ChainParams, start: &[Complex], cfg: &NewtonConfig) -> Option<SteadyState> {
    if cfg.relax_time <= 0.0 {
        return None;
    }
    let int_cfg = IntegratorConfig {
        sample_interval: cfg.relax_time,
        ..IntegratorConfig::default().with_t_end(cfg.relax_time)
    };
    let relaxed = integrate_observed(params, &FieldState::new(start.to_vec()), &int_cfg, |_, _, _| {}).ok()?;
    Some(newton(params, &relaxed.amplitudes, cfg))
}

/// Ramps the drive from `p = 0` (where `α = 0` is exact) up to its target,
/// halving the increment whenever a Newton solve fails.
fn drive_continuation(params: &ChainParams, cfg: &NewtonConfig) -> SteadyState {
    let target = params.drive;
    let base_step = target / cfg.drive_ramp_steps.max(1) as f64;
    let min_step = base_step / 1024.0;
    let mut current = vec![Complex::new(0.0, 0.0); params.n_sites];
    let mut p = 0.0;
    let mut step = base_step;
    let mut total_iterations = 0;
    let mut last = None;

    while p < target {
        let p_next = (p + step).min(target);
        let stage = ChainParams {
            drive: p_next,
            ..params.clone()
        };
        let solved = newton(&stage, &current, cfg);
        total_iterations += solved.newton_iterations;
        if solved.converged {
            current.clone_from(&solved.alpha);
            p = p_next;
            step = (step * 2.0).min(base_step);
            last = Some(solved);
        } else if step > min_step {
            step *= 0.5;
        } else {
            let relaxed = relax_then_newton(params, &current, cfg);
            last = Some(match relaxed {
                Some(r) if r.converged => r,
                _ => solved,
            });
            break;
        }
    }

    let mut result = match last {
        Some(ss) if ss.params.drive == target || !ss.converged => ss,
        // target == 0: the origin is the fixed point
        _ => newton(params, &current, cfg),
    };
    result.params = params.clone();
    result.newton_iterations = total_iterations.max(result.newton_iterations);
    result
}

/// Steady state of the chain. With a guess, Newton starts from it directly;
/// otherwise the drive is ramped up from zero. The returned state carries
/// `converged = false` when the tolerance was not met; see
/// [`SteadyState::ensure_converged`].
pub fn solve_steady_state(params: &ChainParams, guess: Option<&FieldState>) -> Result<SteadyState> {
    solve_steady_state_with(params, guess, &NewtonConfig::default())
}

pub fn solve_steady_state_with(
    params: &ChainParams,
    guess: Option<&FieldState>,
    cfg: &NewtonConfig,
) -> Result<SteadyState> {
    params.validate()?;
    match guess {
        Some(g) => {
            g.check_consistent(params)?;
            Ok(newton(params, &g.amplitudes, cfg))
        }
        None => Ok(drive_continuation(params, cfg)),
    }
}

/// Linearization matrix `A` around a converged fixed point, ordered
/// `(U_1, V_1, U_2, V_2, …)`.
pub fn assemble_bdg(params: &ChainParams, ss: &SteadyState) -> Result<DMatrix<Complex>> {
    if !ss.converged {
        return Err(Error::NotConvergedInput);
    }
    let n = params.n_sites;
    if ss.alpha.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: ss.alpha.len(),
        });
    }
    let j = Complex::new(params.hopping, 0.0);
    let mut m = DMatrix::from_element(2 * n, 2 * n, Complex::new(0.0, 0.0));
    for s in 0..n {
        let (da, db) = onsite_derivatives(params, s, ss.alpha[s]);
        let (u, v) = (2 * s, 2 * s + 1);
        m[(u, u)] = I * da;
        m[(u, v)] = I * db;
        m[(v, u)] = I * db.conj();
        m[(v, v)] = I * da.conj();
        for nb in [s.wrapping_sub(1), s + 1] {
            if nb < n {
                m[(u, 2 * nb)] = j;
                m[(v, 2 * nb + 1)] = -j;
            }
        }
    }
    Ok(m)
}

fn schur_iterations(dim: usize) -> usize {
    (200 * dim).max(1000)
}

/// All eigenvalues of a (non-Hermitian) linearization matrix and the largest
/// imaginary part among them.
pub fn growth_rate(matrix: &DMatrix<Complex>) -> Result<BdgSpectrum> {
    let dim = matrix.nrows();
    if dim == 0 || dim != matrix.ncols() {
        return Err(Error::EigenFailure);
    }
    let schur = Schur::try_new(matrix.clone(), f64::EPSILON, schur_iterations(dim))
        .ok_or(Error::EigenFailure)?;
    let (_, t) = schur.unpack();
    let eigenvalues: Vec<Complex> = (0..dim).map(|k| t[(k, k)]).collect();
    if eigenvalues.iter().any(|e| !(e.re.is_finite() && e.im.is_finite())) {
        return Err(Error::EigenFailure);
    }
    let max_im = eigenvalues
        .iter()
        .map(|e| e.im)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(BdgSpectrum {
        eigenvalues,
        max_im,
        matrix_dim: dim,
    })
}

/// Largest real part among the eigenvalues of a real matrix.
pub fn spectral_abscissa(matrix: &DMatrix<f64>) -> Result<f64> {
    let dim = matrix.nrows();
    let schur = Schur::try_new(matrix.clone(), f64::EPSILON, schur_iterations(dim))
        .ok_or(Error::EigenFailure)?;
    let eig = schur.complex_eigenvalues();
    let abscissa = eig.iter().map(|e| e.re).fold(f64::NEG_INFINITY, f64::max);
    if abscissa.is_finite() {
        Ok(abscissa)
    } else {
        Err(Error::EigenFailure)
    }
}

/// Steady state plus its spectrum in one call.
pub fn analyze(params: &ChainParams, guess: Option<&FieldState>) -> Result<(SteadyState, BdgSpectrum)> {
    let ss = solve_steady_state(params, guess)?.ensure_converged()?;
    let spectrum = growth_rate(&assemble_bdg(params, &ss)?)?;
    Ok((ss, spectrum))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    pub newton: NewtonConfig,
    /// Stop at the first length where Newton fails instead of restarting
    /// from a fresh drive ramp.
    pub stop_on_failure: bool,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            newton: NewtonConfig::default(),
            stop_on_failure: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanEntry {
    pub n_sites: usize,
    pub steady: SteadyState,
    /// `None` when the steady state did not converge or the eigen-solve failed.
    pub spectrum: Option<BdgSpectrum>,
}

/// Continuation in chain length: the fixed point at `N` seeds `N + 1` (new
/// site starting at zero). Entries are reported only at `n_grid` lengths.
pub fn stability_scan(base: &ChainParams, n_grid: &[usize], cfg: &ScanConfig) -> Result<Vec<ScanEntry>> {
    if n_grid.is_empty() || n_grid.windows(2).any(|w| w[0] >= w[1]) || n_grid[0] == 0 {
        return Err(crate::error::invalid("n_grid", "must be non-empty, positive and strictly increasing"));
    }
    base.resized(n_grid[0]).validate()?;
    let mut entries = Vec::with_capacity(n_grid.len());
    let mut previous: Option<SteadyState> = None;

    for &n in n_grid {
        let mut current = previous.take();
        let mut failed = false;
        match current.as_ref().map(|ss| ss.alpha.len()) {
            Some(mut len) if len < n => {
                while len < n {
                    len += 1;
                    let params = base.resized(len);
                    let mut guess = current.as_ref().map(|s| s.alpha.clone()).unwrap_or_default();
                    guess.resize(len, Complex::new(0.0, 0.0));
                    let mut solved = newton(&params, &guess, &cfg.newton);
                    if !solved.converged {
                        if let Some(r) = relax_then_newton(&params, &guess, &cfg.newton) {
                            if r.converged {
                                solved = r;
                            }
                        }
                    }
                    failed = !solved.converged;
                    current = Some(solved);
                    if failed {
                        break;
                    }
                }
            }
            _ => {
                let solved = drive_continuation(&base.resized(n), &cfg.newton);
                failed = !solved.converged;
                current = Some(solved);
            }
        }
        let mut steady = current.expect("a solve was attempted");
        if failed && steady.alpha.len() != n {
            // the chain stopped growing early; report a failed entry at n
            steady = SteadyState {
                params: base.resized(n),
                alpha: {
                    let mut a = steady.alpha.clone();
                    a.resize(n, Complex::new(0.0, 0.0));
                    a
                },
                ..steady
            };
        }
        if failed && !cfg.stop_on_failure {
            let retry = drive_continuation(&base.resized(n), &cfg.newton);
            if retry.converged {
                steady = retry;
                failed = false;
            }
        }
        let spectrum = if failed {
            None
        } else {
            assemble_bdg(&steady.params, &steady)
                .and_then(|m| growth_rate(&m))
                .ok()
        };
        entries.push(ScanEntry {
            n_sites: n,
            steady: steady.clone(),
            spectrum,
        });
        if failed {
            if cfg.stop_on_failure {
                break;
            }
            previous = None;
        } else {
            previous = Some(steady);
        }
    }
    Ok(entries)
}
