//! Link metrics: SINR, spectral efficiency, BPSK error probability and the
//! closed-form bounds used as analytic overlays.
//!
//! SNR values are linear throughout; dB conversion belongs to the caller.

use std::f64::consts::{LOG2_E, SQRT_2};

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::CMatrix;

/// Transmit power split and noise level of one SNR point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    /// Total-power-to-noise ratio `P_s / N_o`.
    pub snr: f64,
    /// Per-user power `P_s / K`.
    pub rho: f64,
    pub noise_power: f64,
}

impl LinkBudget {
    pub fn new(rho: f64, noise_power: f64, users: usize) -> Result<Self> {
        if !(rho > 0.0 && noise_power > 0.0) || users == 0 {
            return Err(Error::Argument(format!(
                "link budget needs positive power and noise, got rho = {rho}, N_o = {noise_power}"
            )));
        }
        Ok(Self {
            snr: rho * users as f64 / noise_power,
            rho,
            noise_power,
        })
    }

    /// Unit total power `P_s = 1`, so `N_o = 1/snr` and `ρ = 1/K`.
    pub fn from_snr(snr: f64, users: usize) -> Result<Self> {
        if !(snr > 0.0 && snr.is_finite()) {
            return Err(Error::Argument(format!("snr must be positive, got {snr}")));
        }
        Self::new(1.0 / users as f64, 1.0 / snr, users)
    }
}

/// `ρ|s|² / (ρ Σ|i_m|² + ‖w‖² N_o)`.
pub fn per_user_sinr(
    signal_gain: Complex64,
    interference_gains: &[Complex64],
    budget: &LinkBudget,
    combiner_norm_sq: f64,
) -> Result<f64> {
    if !(budget.noise_power > 0.0) {
        return Err(Error::Argument("noise power must be positive".into()));
    }
    let interference: f64 = interference_gains.iter().map(|g| g.norm_sqr()).sum();
    Ok(budget.rho * signal_gain.norm_sqr()
        / (budget.rho * interference + combiner_norm_sq * budget.noise_power))
}

/// Per-user SINR from the `K × K` composite gain matrix `G[k][m]` (user `k`
/// receiving stream `m`).
pub fn sinr_from_gains(
    gains: &CMatrix,
    budget: &LinkBudget,
    combiner_norm_sq: &[f64],
) -> Result<Vec<f64>> {
    let k = gains.nrows();
    if gains.ncols() != k || combiner_norm_sq.len() != k {
        return Err(Error::Dimension(format!(
            "composite gains {:?} with {} combiners",
            gains.shape(),
            combiner_norm_sq.len()
        )));
    }
    let mut interference = Vec::with_capacity(k.saturating_sub(1));
    (0..k)
        .map(|user| {
            interference.clear();
            interference.extend((0..k).filter(|&m| m != user).map(|m| gains[(user, m)]));
            per_user_sinr(
                gains[(user, user)],
                &interference,
                budget,
                combiner_norm_sq[user],
            )
        })
        .collect()
}

/// `Σ_k log₂(1 + SINR_k)` in bits/s/Hz.
pub fn spectral_efficiency_instant(sinr_values: &[f64]) -> Result<f64> {
    if let Some(bad) = sinr_values.iter().find(|s| !(**s >= 0.0)) {
        return Err(Error::Argument(format!(
            "SINR must be nonnegative, got {bad}"
        )));
    }
    Ok(sinr_values.iter().map(|s| s.ln_1p() * LOG2_E).sum())
}

/// Per-path power gain `M N_r (K-1) / (L K²)` shared by the bounds below.
fn coding_gain(m: usize, n_r: usize, k: usize, l: usize) -> f64 {
    let (m, n_r, k, l) = (m as f64, n_r as f64, k as f64, l as f64);
    m * n_r * (k - 1.0) / (l * k * k)
}

/// Sum-rate bound `Σ_k Σ_l log₂(1 + snr M N_r (K-1) |α_{k,l}|² / (L K²))`.
///
/// The `(K-1)` factor makes this zero for a single user.
pub fn se_bound(gains_sq: &[Vec<f64>], m: usize, n_r: usize, k: usize, l: usize, snr: f64) -> f64 {
    let g = snr * coding_gain(m, n_r, k, l);
    gains_sq
        .iter()
        .flatten()
        .map(|a| (g * a).ln_1p() * LOG2_E)
        .sum()
}

/// Low-SNR per-user rate `(M N_r / K²)(K-1) snr log₂e`.
pub fn se_low_snr(m: usize, n_r: usize, k: usize, snr: f64) -> f64 {
    let kf = k as f64;
    (m * n_r) as f64 / (kf * kf) * (kf - 1.0) * snr * LOG2_E
}

/// Large-array per-user rate `log₂(1 + snr M N_r)`.
pub fn se_massive_mimo(m: usize, n_r: usize, snr: f64) -> f64 {
    (snr * (m * n_r) as f64).ln_1p() * LOG2_E
}

/// `γ_k = Σ_l snr M N_r (K-1) |α_{k,l}|² / (L K²)`.
pub fn effective_snr(
    gains_sq_k: &[f64],
    m: usize,
    n_r: usize,
    k: usize,
    l: usize,
    snr: f64,
) -> Result<f64> {
    if gains_sq_k.is_empty() {
        return Err(Error::Argument(
            "effective SNR needs at least one path".into(),
        ));
    }
    Ok(snr * coding_gain(m, n_r, k, l) * gains_sq_k.iter().sum::<f64>())
}

/// Gaussian tail probability `Q(x) = erfc(x/√2)/2`.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / SQRT_2)
}

/// High-SNR average BER bound `(snr r)^(-d)` with diversity `d = L` and
/// coding gain `r = M N_r (K-1) / (L K²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawBound {
    pub value: f64,
    pub diversity: f64,
    pub coding_gain: f64,
}

impl PowerLawBound {
    /// `K < 2` zeroes the coding gain and the bound becomes infinite.
    pub fn is_degenerate(&self) -> bool {
        !(self.coding_gain > 0.0)
    }
}

pub fn ber_bound(m: usize, n_r: usize, k: usize, l: usize, snr: f64) -> PowerLawBound {
    let r = coding_gain(m, n_r, k, l);
    PowerLawBound {
        value: (snr * r).powf(-(l as f64)),
        diversity: l as f64,
        coding_gain: r,
    }
}

/// Aggregated statistics of one SNR grid point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRecord {
    pub snr_db: f64,
    pub se_mean: f64,
    pub se_stderr: f64,
    pub ber_mean: f64,
    pub ber_stderr: f64,
    pub sinr_per_user: Vec<f64>,
    pub ber_per_user: Vec<f64>,
    /// Mean of the sum-rate bound over the trials' path gains.
    pub se_bound: f64,
    pub ber_bound: f64,
    pub trials: u64,
    pub singular_trials: u64,
}
