//! Random propagation paths and the narrowband geometric channel built from
//! them, evaluated once per optical carrier.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::arrays::{steering, ula_steering, ArrayGeometry, ArrayKind, CarrierPlan};
use crate::error::{Error, Result};
use crate::{CMatrix, CVector};

/// Distribution of the complex path gains `α`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainModel {
    /// i.i.d. circularly-symmetric `CN(0, 1)`.
    #[default]
    Rayleigh,
    /// Unit modulus with a uniform random phase (pure line of sight).
    UnitModulus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "RawPath", into = "RawPath")]
pub struct Path {
    pub gain: Complex64,
    pub aod_azimuth: f64,
    /// Departure elevation; only meaningful for planar arrays.
    pub aod_elevation: f64,
    pub aoa: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPath {
    re: f64,
    im: f64,
    aod_az: f64,
    aod_el: f64,
    aoa: f64,
}

impl From<RawPath> for Path {
    fn from(r: RawPath) -> Self {
        Path {
            gain: Complex64::new(r.re, r.im),
            aod_azimuth: r.aod_az,
            aod_elevation: r.aod_el,
            aoa: r.aoa,
        }
    }
}

impl From<Path> for RawPath {
    fn from(p: Path) -> Self {
        RawPath {
            re: p.gain.re,
            im: p.gain.im,
            aod_az: p.aod_azimuth,
            aod_el: p.aod_elevation,
            aoa: p.aoa,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserPaths {
    pub paths: Vec<Path>,
}

impl UserPaths {
    /// Index of the path with the largest `|α|²`.
    pub fn strongest(&self) -> usize {
        self.paths
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.gain.norm_sqr().total_cmp(&b.1.gain.norm_sqr()))
            .map(|(i, _)| i)
            .expect("a user has at least one path")
    }

    pub fn gains_sq(&self) -> Vec<f64> {
        self.paths.iter().map(|p| p.gain.norm_sqr()).collect()
    }
}

/// Per-user propagation paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathSet {
    pub users: Vec<UserPaths>,
}

impl PathSet {
    pub fn new(users: Vec<UserPaths>) -> Result<Self> {
        if users.is_empty() {
            return Err(Error::Argument("a path set needs at least one user".into()));
        }
        if let Some(k) = users.iter().position(|u| u.paths.is_empty()) {
            return Err(Error::Argument(format!("user {k} has no paths")));
        }
        Ok(Self { users })
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    /// `|α_{k,l}|²` for every user and path.
    pub fn gains_sq(&self) -> Vec<Vec<f64>> {
        self.users.iter().map(UserPaths::gains_sq).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("path sets always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let set: PathSet =
            serde_json::from_str(text).map_err(|e| Error::Serialization(e.to_string()))?;
        PathSet::new(set.users)
    }
}

/// Draws `users × paths_per_user` paths.
///
/// Azimuths and arrival angles are uniform on `[0, 2π]`; for planar arrays the
/// departure elevation is uniform on `[-π/2, π/2]`. Per path the stream is
/// consumed as: gain, azimuth, elevation (USPA only), arrival angle.
pub fn sample_paths<R: Rng + ?Sized>(
    rng: &mut R,
    users: usize,
    paths_per_user: usize,
    kind: ArrayKind,
    gains: GainModel,
) -> Result<PathSet> {
    if users < 1 || paths_per_user < 1 {
        return Err(Error::Argument(format!(
            "need at least one user and one path, got K = {users}, L = {paths_per_user}"
        )));
    }
    let users = (0..users)
        .map(|_| {
            let paths = (0..paths_per_user)
                .map(|_| {
                    let gain = match gains {
                        GainModel::Rayleigh => {
                            let re: f64 = rng.sample(StandardNormal);
                            let im: f64 = rng.sample(StandardNormal);
                            Complex64::new(re, im) * FRAC_1_SQRT_2
                        }
                        GainModel::UnitModulus => {
                            Complex64::from_polar(1.0, rng.random_range(0.0..2.0 * PI))
                        }
                    };
                    let aod_azimuth = rng.random_range(0.0..=2.0 * PI);
                    let aod_elevation = match kind {
                        ArrayKind::Ula => 0.0,
                        ArrayKind::Uspa => rng.random_range(-FRAC_PI_2..=FRAC_PI_2),
                    };
                    let aoa = rng.random_range(0.0..=2.0 * PI);
                    Path {
                        gain,
                        aod_azimuth,
                        aod_elevation,
                        aoa,
                    }
                })
                .collect();
            UserPaths { paths }
        })
        .collect();
    Ok(PathSet { users })
}

/// `√(M N / L_k) Σ_l α a_r(θ) a_t(φ)ᴴ` for every user, at wavelength `lambda`.
/// The receive array must be a ULA; with one antenna `a_r` is the scalar 1.
pub fn geometric_channel(
    paths: &PathSet,
    tx: &ArrayGeometry,
    rx: &ArrayGeometry,
    lambda: f64,
) -> Result<Vec<CMatrix>> {
    if rx.kind() != ArrayKind::Ula {
        return Err(Error::Dimension(
            "receive arrays are modelled as ULAs".into(),
        ));
    }
    let (m, n) = (tx.elements(), rx.elements());
    Ok(paths
        .users
        .iter()
        .map(|user| {
            let scale = ((m * n) as f64 / user.paths.len() as f64).sqrt();
            let mut h = CMatrix::zeros(n, m);
            for p in &user.paths {
                let a_r = ula_steering(p.aoa, lambda, rx).expect("receiver is a ULA");
                let a_t = steering(p.aod_azimuth, p.aod_elevation, lambda, tx);
                h += (a_r * a_t.adjoint()) * (p.gain * scale);
            }
            h
        })
        .collect())
}

/// Single-cluster Saleh-Valenzuela channel toward single-antenna users from a
/// square planar array: `√(M/L) Σ_l α a_t(az, el)ᴴ`, one `1 × M` row per user.
pub fn sv_single_cluster_channel(
    paths: &PathSet,
    tx: &ArrayGeometry,
    rx: &ArrayGeometry,
    lambda: f64,
) -> Result<Vec<CMatrix>> {
    if tx.kind() != ArrayKind::Uspa {
        return Err(Error::GeometryKind {
            expected: ArrayKind::Uspa.name(),
            found: tx.kind().name(),
        });
    }
    if rx.elements() != 1 {
        return Err(Error::Unsupported(format!(
            "single-cluster channel assumes single-antenna users, got N = {}",
            rx.elements()
        )));
    }
    let m = tx.elements();
    Ok(paths
        .users
        .iter()
        .map(|user| {
            let scale = (m as f64 / user.paths.len() as f64).sqrt();
            let row = user.paths.iter().fold(CVector::zeros(m), |acc, p| {
                let a_t = steering(p.aod_azimuth, p.aod_elevation, lambda, tx);
                acc + a_t.map(|v| v.conj()) * (p.gain * scale)
            });
            CMatrix::from_row_slice(1, m, row.as_slice())
        })
        .collect())
}

/// Channel matrices `H_k^(n)` for every user and carrier, sharing one path set.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// Indexed `[user][carrier]`, each `N × M`.
    pub matrices: Vec<Vec<CMatrix>>,
    pub paths: PathSet,
}

impl ChannelRealization {
    /// Re-evaluates the steering vectors at every carrier wavelength.
    pub fn build(
        paths: PathSet,
        tx: &ArrayGeometry,
        rx: &ArrayGeometry,
        plan: &CarrierPlan,
    ) -> Result<Self> {
        let per_carrier = plan
            .wavelengths()
            .iter()
            .map(|&lambda| geometric_channel(&paths, tx, rx, lambda))
            .collect::<Result<Vec<_>>>()?;
        let matrices = (0..paths.num_users())
            .map(|k| per_carrier.iter().map(|c| c[k].clone()).collect())
            .collect();
        Ok(Self { matrices, paths })
    }

    pub fn num_users(&self) -> usize {
        self.matrices.len()
    }

    pub fn num_carriers(&self) -> usize {
        self.matrices.first().map_or(0, Vec::len)
    }

    /// `K × M` matrix whose row `k` is `w_kᴴ H_k^(carrier)`.
    pub fn combined_rows(&self, combiners: &[CVector], carrier: usize) -> Result<CMatrix> {
        if combiners.len() != self.num_users() {
            return Err(Error::Dimension(format!(
                "{} combiners for {} users",
                combiners.len(),
                self.num_users()
            )));
        }
        let m = self.matrices[0][carrier].ncols();
        let mut out = CMatrix::zeros(self.num_users(), m);
        for (k, (user, w)) in self.matrices.iter().zip(combiners).enumerate() {
            let h = &user[carrier];
            if w.len() != h.nrows() {
                return Err(Error::Dimension(format!(
                    "user {k}: combiner of length {} for {} receive antennas",
                    w.len(),
                    h.nrows()
                )));
            }
            out.set_row(k, &(w.adjoint() * h));
        }
        Ok(out)
    }
}

/// `‖H Hᴴ / M − I_K‖_F` for a stacked `K × M` channel.
pub fn orthogonality_defect(h: &CMatrix) -> Result<f64> {
    let (k, m) = h.shape();
    if k > m {
        return Err(Error::Dimension(format!(
            "orthogonality defect needs K <= M, got K = {k}, M = {m}"
        )));
    }
    let gram = (h * h.adjoint()).unscale(m as f64) - CMatrix::identity(k, k);
    Ok(gram.norm())
}
