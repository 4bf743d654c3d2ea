//! The hybrid precoder: photonic analog stage, per-chain modulator weights and
//! the ZF/MMSE digital baseband stage.
//!
//! The analog stage spreads every RF chain over all optical carriers of the
//! plan. Carrier `c` has its own `M × N_r` block of constant-modulus weights
//! (column `n` steered at the chain's user, evaluated at `λ_c`), an optical
//! splitter divides the chain's power evenly across the `C` carriers, and the
//! photodetected carriers superpose at the user. Stacked, the analog stage is
//! the `(M·C) × N_r` matrix
//!
//! ```text
//! A = [F_1; F_2; ...; F_C] · diag(f_OAWG) / √C
//! ```
//!
//! With a single carrier this is the usual `F_RF · diag(f)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::arrays::{steering, ula_steering, ArrayGeometry, CarrierPlan};
use crate::channel::{ChannelRealization, PathSet};
use crate::error::{Error, Result};
use crate::{CMatrix, CVector};

/// Effective channels whose singular-value spread falls below this ratio are
/// treated as rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrecoderKind {
    #[default]
    Zf,
    Mmse,
}

/// Constant-modulus photonic beamformer, one `M × N_r` block per carrier.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotonicBeamformer {
    blocks: Vec<CMatrix>,
}

impl PhotonicBeamformer {
    pub fn from_blocks(blocks: Vec<CMatrix>) -> Result<Self> {
        let first = blocks
            .first()
            .ok_or_else(|| Error::Argument("beamformer needs at least one carrier block".into()))?
            .shape();
        if blocks.iter().any(|b| b.shape() != first) {
            return Err(Error::Dimension("carrier blocks differ in shape".into()));
        }
        Ok(Self { blocks })
    }

    pub fn blocks(&self) -> &[CMatrix] {
        &self.blocks
    }

    pub fn carriers(&self) -> usize {
        self.blocks.len()
    }

    pub fn antennas(&self) -> usize {
        self.blocks[0].nrows()
    }

    pub fn chains(&self) -> usize {
        self.blocks[0].ncols()
    }

    /// Stacked analog stage `[F_1; ...; F_C] diag(f) / √C`.
    pub fn analog_stage(&self, f_oawg: &CVector) -> Result<CMatrix> {
        if f_oawg.len() != self.chains() {
            return Err(Error::Dimension(format!(
                "{} modulator weights for {} chains",
                f_oawg.len(),
                self.chains()
            )));
        }
        let m = self.antennas();
        let split = 1.0 / (self.carriers() as f64).sqrt();
        let mut out = CMatrix::zeros(m * self.carriers(), self.chains());
        for (c, block) in self.blocks.iter().enumerate() {
            let mut rows = out.rows_mut(c * m, m);
            for (n, w) in f_oawg.iter().enumerate() {
                rows.set_column(n, &(block.column(n) * (*w * split)));
            }
        }
        Ok(out)
    }

    /// Largest deviation of any entry modulus from `1/√M`.
    pub fn modulus_deviation(&self) -> f64 {
        let target = 1.0 / (self.antennas() as f64).sqrt();
        self.blocks
            .iter()
            .flat_map(|b| b.iter())
            .map(|v| (v.norm() - target).abs())
            .fold(0.0, f64::max)
    }
}

/// Round-robin map from RF chain to user.
pub fn carrier_assignment(chains: usize, users: usize) -> Result<Vec<usize>> {
    if users == 0 || chains < users {
        return Err(Error::Configuration(format!(
            "need K <= N_r with K >= 1, got K = {users}, N_r = {chains}"
        )));
    }
    Ok((0..chains).map(|n| n % users).collect())
}

/// Steers chain `n` toward the strongest path of user `assignment[n]`, once per
/// carrier wavelength of `plan`.
pub fn build_photonic_beamformer(
    paths: &PathSet,
    tx: &ArrayGeometry,
    plan: &CarrierPlan,
    assignment: &[usize],
) -> Result<PhotonicBeamformer> {
    let users = paths.num_users();
    if assignment.len() < users {
        return Err(Error::Configuration(format!(
            "need K <= N_r, got K = {users}, N_r = {}",
            assignment.len()
        )));
    }
    if let Some(&bad) = assignment.iter().find(|&&k| k >= users) {
        return Err(Error::Configuration(format!(
            "chain assigned to user {bad}, but only {users} users exist"
        )));
    }
    if let Some(k) = (0..users).find(|k| !assignment.contains(k)) {
        return Err(Error::Configuration(format!("user {k} has no RF chain")));
    }
    let targets: Vec<_> = assignment
        .iter()
        .map(|&k| {
            let user = &paths.users[k];
            user.paths[user.strongest()]
        })
        .collect();
    let blocks = plan
        .wavelengths()
        .iter()
        .map(|&lambda| {
            let columns: Vec<CVector> = targets
                .iter()
                .map(|p| steering(p.aod_azimuth, p.aod_elevation, lambda, tx))
                .collect();
            CMatrix::from_columns(&columns)
        })
        .collect();
    PhotonicBeamformer::from_blocks(blocks)
}

/// Equal-magnitude modulator weights `√(K/N_r)`, so `‖A‖_F² = K`.
pub fn build_oawg_weights(beamformer: &PhotonicBeamformer, users: usize) -> CVector {
    let chains = beamformer.chains();
    let w = (users as f64 / chains as f64).sqrt();
    CVector::from_element(chains, Complex64::new(w, 0.0))
}

/// Receive combiners: `[1]` for single-antenna users, otherwise the receive
/// steering vector of the user's strongest path.
pub fn default_combiners(paths: &PathSet, rx: &ArrayGeometry, lambda: f64) -> Result<Vec<CVector>> {
    paths
        .users
        .iter()
        .map(|user| {
            if rx.elements() == 1 {
                Ok(CVector::from_element(1, Complex64::new(1.0, 0.0)))
            } else {
                ula_steering(user.paths[user.strongest()].aoa, lambda, rx)
            }
        })
        .collect()
}

/// `K × N_r` effective channel seen by the baseband precoder.
///
/// Entry `(k, n)` is `Σ_c w_kᴴ H_k^(c) F_c[:, n] f_n / √C`: each carrier block
/// propagates through that carrier's channel.
pub fn effective_channel(
    channel: &ChannelRealization,
    combiners: &[CVector],
    beamformer: &PhotonicBeamformer,
    f_oawg: &CVector,
) -> Result<CMatrix> {
    if f_oawg.len() != beamformer.chains() {
        return Err(Error::Dimension(format!(
            "{} modulator weights for {} chains",
            f_oawg.len(),
            beamformer.chains()
        )));
    }
    if channel.num_carriers() < beamformer.carriers() {
        return Err(Error::Dimension(format!(
            "beamformer uses {} carriers, channel has {}",
            beamformer.carriers(),
            channel.num_carriers()
        )));
    }
    let split = 1.0 / (beamformer.carriers() as f64).sqrt();
    let mut out = CMatrix::zeros(channel.num_users(), beamformer.chains());
    for (c, block) in beamformer.blocks().iter().enumerate() {
        let rows = channel.combined_rows(combiners, c)?;
        if rows.ncols() != block.nrows() {
            return Err(Error::Dimension(format!(
                "channel has {} transmit antennas, beamformer {}",
                rows.ncols(),
                block.nrows()
            )));
        }
        out += rows * block;
    }
    for (n, w) in f_oawg.iter().enumerate() {
        let scaled = out.column(n) * (*w * split);
        out.set_column(n, &scaled);
    }
    Ok(out)
}

fn check_rank(h: &CMatrix) -> Result<()> {
    let (k, n) = h.shape();
    if k == 0 || k > n {
        return Err(Error::SingularChannel { ratio: 0.0 });
    }
    let s = h.singular_values();
    let max = s.max();
    let ratio = if max > 0.0 { s.min() / max } else { 0.0 };
    if !(ratio > RANK_TOLERANCE) {
        return Err(Error::SingularChannel { ratio });
    }
    Ok(())
}

/// Zero-forcing baseband precoder, the right pseudoinverse
/// `h_pᴴ (h_p h_pᴴ)⁻¹`. With `h_pᴴ = QR` this is `Q R⁻ᴴ`, which keeps
/// `h_p F_BB` closer to the identity than the SVD route on ill-conditioned
/// channels.
pub fn zf_baseband(h_p: &CMatrix) -> Result<CMatrix> {
    check_rank(h_p)?;
    let k = h_p.nrows();
    let qr = h_p.adjoint().qr();
    let r_inv_h = qr
        .r()
        .adjoint()
        .solve_lower_triangular(&CMatrix::identity(k, k))
        .ok_or(Error::SingularChannel { ratio: 0.0 })?;
    Ok(qr.q() * r_inv_h)
}

/// Regularised precoder `h_pᴴ (h_p h_pᴴ + (‖w‖²/snr) I)⁻¹`.
pub fn mmse_baseband(h_p: &CMatrix, snr: f64, combiner_norm_sq: f64) -> Result<CMatrix> {
    if !(snr > 0.0 && snr.is_finite()) {
        return Err(Error::Argument(format!("snr must be positive, got {snr}")));
    }
    if !(combiner_norm_sq > 0.0) {
        return Err(Error::Argument(format!(
            "combiner norm must be positive, got {combiner_norm_sq}"
        )));
    }
    let load = combiner_norm_sq / snr;
    let (k, n) = h_p.shape();
    if k <= n {
        let svd = h_p.clone().svd(true, true);
        let (u, v_t) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
        let gains = CMatrix::from_diagonal(&CVector::from_iterator(
            svd.singular_values.len(),
            svd.singular_values
                .iter()
                .map(|&x| Complex64::new(x / (x * x + load), 0.0)),
        ));
        Ok(v_t.adjoint() * gains * u.adjoint())
    } else {
        let mut gram = h_p * h_p.adjoint();
        for i in 0..k {
            gram[(i, i)] += load;
        }
        let inv = gram
            .cholesky()
            .ok_or_else(|| Error::Argument("regularised Gram matrix is not definite".into()))?
            .inverse();
        Ok(h_p.adjoint() * inv)
    }
}

/// The full hybrid precoder.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderSet {
    pub f_rof: PhotonicBeamformer,
    pub f_oawg: CVector,
    /// `N_r × K` digital baseband precoder.
    pub f_bb: CMatrix,
    pub combiners: Vec<CVector>,
    /// Gram scaling `σ` of `F_BBᴴ F_BB = σ I`.
    pub sigma: f64,
}

impl PrecoderSet {
    /// Assembles a set with `σ = N_r`.
    pub fn new(
        f_rof: PhotonicBeamformer,
        f_oawg: CVector,
        f_bb: CMatrix,
        combiners: Vec<CVector>,
    ) -> Result<Self> {
        if f_bb.nrows() != f_rof.chains() || f_oawg.len() != f_rof.chains() {
            return Err(Error::Dimension(format!(
                "baseband precoder has {} rows and {} modulator weights for {} chains",
                f_bb.nrows(),
                f_oawg.len(),
                f_rof.chains()
            )));
        }
        let sigma = f_rof.chains() as f64;
        Ok(Self {
            f_rof,
            f_oawg,
            f_bb,
            combiners,
            sigma,
        })
    }

    pub fn chains(&self) -> usize {
        self.f_rof.chains()
    }

    pub fn users(&self) -> usize {
        self.f_bb.ncols()
    }

    pub fn analog_stage(&self) -> CMatrix {
        self.f_rof
            .analog_stage(&self.f_oawg)
            .expect("shapes checked on construction")
    }

    /// `(M·C) × K` composite transmit precoder.
    pub fn composite(&self) -> CMatrix {
        self.analog_stage() * &self.f_bb
    }

    /// `‖F_BBᴴ F_BB − σ I‖_F`.
    pub fn gram_deviation(&self) -> f64 {
        let k = self.users();
        (self.f_bb.adjoint() * &self.f_bb - CMatrix::identity(k, k).scale(self.sigma)).norm()
    }
}

/// `tr(F_BBᴴ F_BB) / K`, the best scalar fit of `F_BBᴴ F_BB ≈ σ I`.
pub fn gram_sigma(f_bb: &CMatrix) -> f64 {
    f_bb.norm_squared() / f_bb.ncols() as f64
}

/// Rescales `F_BB` so the composite precoder carries `N_r·K` total power.
pub fn normalize_total_power(set: PrecoderSet) -> Result<PrecoderSet> {
    let norm = set.composite().norm();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::DegeneratePrecoder);
    }
    let target = ((set.chains() * set.users()) as f64).sqrt();
    let beta = target / norm;
    let mut out = set;
    if beta != 1.0 {
        out.f_bb *= Complex64::new(beta, 0.0);
    }
    Ok(out)
}

/// Fully digital precoder on the stacked channel, scaled to `chains·K` power.
pub fn optimal_full_digital(
    h_stack: &CMatrix,
    kind: PrecoderKind,
    snr: f64,
    chains: usize,
) -> Result<CMatrix> {
    let f = match kind {
        PrecoderKind::Zf => zf_baseband(h_stack)?,
        PrecoderKind::Mmse => mmse_baseband(h_stack, snr, 1.0)?,
    };
    let norm = f.norm();
    if !(norm > 0.0) {
        return Err(Error::DegeneratePrecoder);
    }
    let target = ((chains * h_stack.nrows()) as f64).sqrt();
    Ok(f * Complex64::new(target / norm, 0.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residual {
    /// `‖F_opt − A F_BB‖_F²`.
    pub residual: f64,
    /// `|√(N_r K) − √(σ K)|²`.
    pub lower_bound: f64,
    /// `‖F_BBᴴ F_BB − σ I‖_F`; the bound only applies when this is small.
    pub gram_deviation: f64,
}

/// Distance from the fully digital reference to the hybrid factorisation.
pub fn precoder_residual(f_opt: &CMatrix, set: &PrecoderSet) -> Result<Residual> {
    let composite = set.composite();
    if composite.shape() != f_opt.shape() {
        return Err(Error::Dimension(format!(
            "reference precoder is {:?}, hybrid composite is {:?}",
            f_opt.shape(),
            composite.shape()
        )));
    }
    let k = set.users() as f64;
    let n_r = set.chains() as f64;
    let gap = (n_r * k).sqrt() - (set.sigma * k).sqrt();
    Ok(Residual {
        residual: (f_opt - composite).norm_squared(),
        lower_bound: gap * gap,
        gram_deviation: set.gram_deviation(),
    })
}
