//! Chain parameterization and the mean-field equations of motion.
//!
//! Every site `i` carries a complex field amplitude `α_i` evolving as
//!
//! ```text
//! dα_i/dt = −(γ_i/2 + i(δ + ξ_i)) α_i − iJ (α_{i−1} + α_{i+1}) − 2iU |α_i|² α_i − ip·[i = 1]
//! ```
//!
//! where `γ_i = κ` on the two boundary sites and `γ_i = κ_bulk` in the bulk.
//! Time is measured in units of `1/J`. A single-site chain has one loss
//! channel `κ/2` (not doubled) plus the drive.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub type Complex = Complex64;

const I: Complex = Complex::new(0.0, 1.0);

/// All model constants for one chain instance, in units of the hopping `J`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainParams {
    pub n_sites: usize,
    pub hopping: f64,
    pub nonlinearity: f64,
    pub drive: f64,
    pub detuning: f64,
    pub kappa: f64,
    pub kappa_bulk: f64,
    /// Per-site detuning shifts `ξ_i`; all zeros for a clean chain.
    pub site_shifts: Vec<f64>,
}

impl ChainParams {
    /// A clean, undriven, linear chain with `J = κ = 1`.
    pub fn new(n_sites: usize) -> Self {
        Self {
            n_sites,
            hopping: 1.0,
            nonlinearity: 0.0,
            drive: 0.0,
            detuning: 0.0,
            kappa: 1.0,
            kappa_bulk: 0.0,
            site_shifts: vec![0.0; n_sites],
        }
    }

    pub fn with_nonlinearity(mut self, u: f64) -> Self {
        self.nonlinearity = u;
        self
    }

    pub fn with_drive(mut self, p: f64) -> Self {
        self.drive = p;
        self
    }

    pub fn with_detuning(mut self, delta: f64) -> Self {
        self.detuning = delta;
        self
    }

    pub fn with_kappa(mut self, kappa: f64) -> Self {
        self.kappa = kappa;
        self
    }

    pub fn with_kappa_bulk(mut self, kappa_bulk: f64) -> Self {
        self.kappa_bulk = kappa_bulk;
        self
    }

    pub fn with_hopping(mut self, j: f64) -> Self {
        self.hopping = j;
        self
    }

    pub fn with_site_shifts(mut self, shifts: Vec<f64>) -> Self {
        self.site_shifts = shifts;
        self
    }

    /// Same physical constants on a chain of a different length. Disorder
    /// shifts are dropped (a new length needs a new disorder draw).
    pub fn resized(&self, n_sites: usize) -> Self {
        Self {
            n_sites,
            site_shifts: vec![0.0; n_sites],
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_sites == 0 {
            return Err(invalid("n_sites", "must be at least 1"));
        }
        if !(self.hopping.is_finite() && self.hopping > 0.0) {
            return Err(invalid("hopping", "must be finite and positive"));
        }
        let non_negative = [
            ("nonlinearity", self.nonlinearity),
            ("drive", self.drive),
            ("kappa", self.kappa),
            ("kappa_bulk", self.kappa_bulk),
        ];
        for (name, value) in non_negative {
            if !(value.is_finite() && value >= 0.0) {
                return Err(invalid(name, format!("must be finite and non-negative, got {value}")));
            }
        }
        if !self.detuning.is_finite() {
            return Err(invalid("detuning", "must be finite"));
        }
        if self.site_shifts.len() != self.n_sites {
            return Err(invalid(
                "site_shifts",
                format!("length {} does not match {} sites", self.site_shifts.len(), self.n_sites),
            ));
        }
        if self.site_shifts.iter().any(|x| !x.is_finite()) {
            return Err(invalid("site_shifts", "entries must be finite"));
        }
        Ok(())
    }

    /// Loss rate `γ_i` acting on site `i` (0-based).
    #[inline]
    pub fn loss_rate(&self, site: usize) -> f64 {
        if site == 0 || site + 1 == self.n_sites {
            self.kappa
        } else {
            self.kappa_bulk
        }
    }

    /// Total detuning `δ + ξ_i` on site `i` (0-based).
    #[inline]
    pub fn site_detuning(&self, site: usize) -> f64 {
        self.detuning + self.site_shifts[site]
    }
}

/// Field amplitudes of every site at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldState {
    pub amplitudes: Vec<Complex>,
    pub time: f64,
}

impl FieldState {
    pub fn zeros(n_sites: usize) -> Self {
        Self {
            amplitudes: vec![Complex::new(0.0, 0.0); n_sites],
            time: 0.0,
        }
    }

    pub fn new(amplitudes: Vec<Complex>) -> Self {
        Self {
            amplitudes,
            time: 0.0,
        }
    }

    pub fn n_sites(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_finite(&self) -> bool {
        self.amplitudes.iter().all(|a| a.re.is_finite() && a.im.is_finite())
    }

    pub fn check_consistent(&self, params: &ChainParams) -> Result<()> {
        if self.amplitudes.len() != params.n_sites {
            return Err(Error::DimensionMismatch {
                expected: params.n_sites,
                got: self.amplitudes.len(),
            });
        }
        Ok(())
    }
}

/// Writes `dα/dt` for every site into `out`.
///
/// `alpha` and `out` must both have length `params.n_sites`.
pub fn rhs_into(params: &ChainParams, alpha: &[Complex], out: &mut [Complex]) {
    let n = params.n_sites;
    debug_assert_eq!(alpha.len(), n);
    debug_assert_eq!(out.len(), n);
    let j = params.hopping;
    let two_u = 2.0 * params.nonlinearity;
    for i in 0..n {
        let a = alpha[i];
        let mut neighbours = Complex::new(0.0, 0.0);
        if i > 0 {
            neighbours += alpha[i - 1];
        }
        if i + 1 < n {
            neighbours += alpha[i + 1];
        }
        let linear = Complex::new(-0.5 * params.loss_rate(i), -params.site_detuning(i)) * a;
        // −iJ·nb − 2iU|a|²a = −i (J·nb + 2U|a|²a)
        let coherent = j * neighbours + two_u * a.norm_sqr() * a;
        out[i] = linear - I * coherent;
    }
    if n > 0 {
        out[0] -= I * params.drive;
    }
}

/// `dα/dt` for the given state.
pub fn rhs(state: &FieldState, params: &ChainParams) -> Vec<Complex> {
    let mut out = vec![Complex::new(0.0, 0.0); params.n_sites];
    rhs_into(params, &state.amplitudes, &mut out);
    out
}

/// `Σ_i |α_i|²`.
pub fn total_intensity(state: &FieldState) -> f64 {
    state.amplitudes.iter().map(|a| a.norm_sqr()).sum()
}

/// Intensity change rate due to losses and drive alone:
/// `−κ(|α_1|²+|α_N|²) − κ_bulk Σ_bulk |α_i|² − 2p Im α_1`.
pub fn intensity_source_rate(alpha: &[Complex], params: &ChainParams) -> f64 {
    let loss: f64 = alpha
        .iter()
        .enumerate()
        .map(|(i, a)| params.loss_rate(i) * a.norm_sqr())
        .sum();
    let drive = alpha.first().map_or(0.0, |a| 2.0 * params.drive * a.im);
    -loss - drive
}

/// `2 Re⟨α, dα/dt⟩` minus the loss/drive budget. Hopping and Kerr terms
/// conserve the total intensity, so this vanishes identically.
pub fn intensity_balance_residual(state: &FieldState, params: &ChainParams) -> f64 {
    let deriv = rhs(state, params);
    let d_intensity: f64 = state
        .amplitudes
        .iter()
        .zip(&deriv)
        .map(|(a, d)| 2.0 * (a.conj() * d).re)
        .sum();
    d_intensity - intensity_source_rate(&state.amplitudes, params)
}

/// Photon current `2J Im(α_i* α_{i+1})` across the bond between sites
/// `bond` and `bond + 1` (1-based, `1 ≤ bond ≤ N−1`).
pub fn photon_current(state: &FieldState, params: &ChainParams, bond: usize) -> Result<f64> {
    let n = params.n_sites;
    if bond == 0 || bond >= n || state.amplitudes.len() != n {
        return Err(Error::BondOutOfRange { bond, n_sites: n });
    }
    let left = state.amplitudes[bond - 1];
    let right = state.amplitudes[bond];
    Ok(2.0 * params.hopping * (left.conj() * right).im)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex {
        Complex::new(re, im)
    }

    fn random_state(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> FieldState {
        FieldState::new(
            (0..n)
                .map(|_| c(rng.random_range(-scale..scale), rng.random_range(-scale..scale)))
                .collect(),
        )
    }

    fn random_params(rng: &mut ChaCha8Rng, n: usize) -> ChainParams {
        ChainParams::new(n)
            .with_hopping(rng.random_range(0.2..2.0))
            .with_nonlinearity(rng.random_range(0.0..3.0))
            .with_drive(rng.random_range(0.0..20.0))
            .with_detuning(rng.random_range(-2.0..2.0))
            .with_kappa(rng.random_range(0.0..2.0))
            .with_kappa_bulk(rng.random_range(0.0..0.5))
            .with_site_shifts((0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    #[test]
    fn undriven_zero_state_is_fixed() {
        let params = ChainParams::new(3).with_nonlinearity(2.7);
        let d = rhs(&FieldState::zeros(3), &params);
        assert!(d.iter().all(|z| *z == c(0.0, 0.0)));
    }

    #[test]
    fn single_site_at_rest_feels_only_the_drive() {
        let params = ChainParams::new(1).with_drive(5.0).with_nonlinearity(3.3);
        let d = rhs(&FieldState::zeros(1), &params);
        assert_eq!(d, vec![c(0.0, -5.0)]);
    }

    #[test]
    fn zero_state_gives_pure_drive_vector() {
        let params = ChainParams::new(6).with_drive(2.5).with_nonlinearity(1.0);
        let d = rhs(&FieldState::zeros(6), &params);
        assert_eq!(d[0], c(0.0, -2.5));
        assert!(d[1..].iter().all(|z| *z == c(0.0, 0.0)));
    }

    #[test]
    fn two_site_hand_evaluation() {
        // α = (1, i), J = 1, U = 0.5, p = 0, κ = 1, δ = 0.
        // site 1: −(1/2)(1) − i(i) − 2i(0.5)(1)(1) = −0.5 + 1 − i  = 0.5 − i
        // site 2: −(1/2)(i) − i(1) − 2i(0.5)(1)(i)  = −0.5i − i + 1 = 1 − 1.5i
        let params = ChainParams::new(2).with_nonlinearity(0.5);
        let d = rhs(&FieldState::new(vec![c(1.0, 0.0), c(0.0, 1.0)]), &params);
        assert_relative_eq!(d[0].re, 0.5, epsilon = 1e-15);
        assert_relative_eq!(d[0].im, -1.0, epsilon = 1e-15);
        assert_relative_eq!(d[1].re, 1.0, epsilon = 1e-15);
        assert_relative_eq!(d[1].im, -1.5, epsilon = 1e-15);
    }

    #[test]
    fn bulk_loss_only_on_interior_sites() {
        let params = ChainParams::new(3).with_kappa(0.0).with_kappa_bulk(0.4).with_hopping(1e-300);
        let state = FieldState::new(vec![c(1.0, 0.0); 3]);
        let d = rhs(&state, &params);
        assert_relative_eq!(d[0].re, 0.0, epsilon = 1e-15);
        assert_relative_eq!(d[1].re, -0.2, epsilon = 1e-15);
        assert_relative_eq!(d[2].re, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn disorder_shifts_reach_boundary_sites() {
        let params = ChainParams::new(2)
            .with_kappa(0.0)
            .with_hopping(1e-300)
            .with_site_shifts(vec![0.3, -0.7]);
        let d = rhs(&FieldState::new(vec![c(1.0, 0.0); 2]), &params);
        assert_relative_eq!(d[0].im, -0.3, epsilon = 1e-15);
        assert_relative_eq!(d[1].im, 0.7, epsilon = 1e-15);
    }

    #[test]
    fn total_intensity_examples() {
        assert_eq!(total_intensity(&FieldState::zeros(4)), 0.0);
        assert_eq!(total_intensity(&FieldState::new(vec![c(3.0, 4.0)])), 25.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let state = random_state(&mut rng, 37, 3.0);
        let mut naive = 0.0;
        for a in &state.amplitudes {
            naive += a.re * a.re + a.im * a.im;
        }
        assert_relative_eq!(total_intensity(&state), naive, max_relative = 1e-12);
    }

    #[test]
    fn balance_residual_vanishes_at_single_site_steady_state() {
        let params = ChainParams::new(1).with_drive(5.0);
        let state = FieldState::new(vec![c(0.0, -10.0)]);
        assert!(rhs(&state, &params)[0].norm() < 1e-12);
        assert!(intensity_balance_residual(&state, &params).abs() < 1e-12);
        assert_eq!(intensity_balance_residual(&FieldState::zeros(5), &ChainParams::new(5)), 0.0);
    }

    #[test]
    fn balance_residual_vanishes_for_random_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..100 {
            let params = random_params(&mut rng, 10);
            let state = random_state(&mut rng, 10, 4.0);
            let d = intensity_balance_residual(&state, &params);
            assert!(d.abs() <= 1e-9 * total_intensity(&state).max(1.0), "residual {d}");
        }
    }

    #[test]
    fn linear_chain_rhs_is_affine() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let params = random_params(&mut rng, 8).with_nonlinearity(0.0).with_kappa_bulk(0.0);
        let x = random_state(&mut rng, 8, 1.0);
        let y = random_state(&mut rng, 8, 1.0);
        let (a, b) = (0.7, -1.9);
        let combo = FieldState::new(
            x.amplitudes.iter().zip(&y.amplitudes).map(|(p, q)| a * p + b * q).collect(),
        );
        let (fc, fx, fy) = (rhs(&combo, &params), rhs(&x, &params), rhs(&y, &params));
        let drive = rhs(&FieldState::zeros(8), &params);
        for i in 0..8 {
            let defect = fc[i] - a * fx[i] - b * fy[i] + (a + b - 1.0) * drive[i];
            assert!(defect.norm() < 1e-12, "site {i}: {defect}");
        }
    }

    #[test]
    fn current_examples() {
        let params = ChainParams::new(2);
        let flat = FieldState::new(vec![c(0.8, 0.0), c(0.8, 0.0)]);
        assert_eq!(photon_current(&flat, &params, 1).unwrap(), 0.0);
        let twisted = FieldState::new(vec![c(1.0, 0.0), c(0.0, 1.0)]);
        assert_relative_eq!(photon_current(&twisted, &params, 1).unwrap(), 2.0);
        assert!(matches!(
            photon_current(&twisted, &params, 2),
            Err(Error::BondOutOfRange { bond: 2, .. })
        ));
        assert!(photon_current(&twisted, &params, 0).is_err());
    }

    #[test]
    fn validation_rejects_bad_params() {
        assert!(ChainParams::new(0).validate().is_err());
        assert!(ChainParams::new(3).with_hopping(0.0).validate().is_err());
        assert!(ChainParams::new(3).with_drive(-1.0).validate().is_err());
        assert!(ChainParams::new(3).with_kappa(f64::NAN).validate().is_err());
        assert!(ChainParams::new(3).with_site_shifts(vec![0.0; 2]).validate().is_err());
        assert!(ChainParams::new(3).with_detuning(-4.0).validate().is_ok());
    }
}
