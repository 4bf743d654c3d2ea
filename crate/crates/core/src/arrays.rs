//! Array geometry, steering vectors and the photonic/RF array gains.
//!
//! All phases are referenced to element index 0, so element `m` of a uniform
//! linear array carries the phase `m * (2π/λ) * d * sin(φ)`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::CVector;

/// Below this value of `|sin(π d x / λ)|` the Dirichlet ratio is replaced by
/// the direct phasor sum.
const DIRICHLET_GUARD: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArrayKind {
    Ula,
    Uspa,
}

impl ArrayKind {
    pub fn name(self) -> &'static str {
        match self {
            ArrayKind::Ula => "ULA",
            ArrayKind::Uspa => "USPA",
        }
    }
}

/// Antenna array layout: `elements` antennas spaced `spacing` meters apart.
/// A USPA is laid out as a `√M × √M` square.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGeometry", into = "RawGeometry")]
pub struct ArrayGeometry {
    kind: ArrayKind,
    elements: usize,
    spacing: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGeometry {
    kind: ArrayKind,
    elements: usize,
    spacing: f64,
}

impl TryFrom<RawGeometry> for ArrayGeometry {
    type Error = Error;

    fn try_from(raw: RawGeometry) -> Result<Self> {
        ArrayGeometry::new(raw.kind, raw.elements, raw.spacing)
    }
}

impl From<ArrayGeometry> for RawGeometry {
    fn from(g: ArrayGeometry) -> Self {
        RawGeometry {
            kind: g.kind,
            elements: g.elements,
            spacing: g.spacing,
        }
    }
}

impl ArrayGeometry {
    pub fn new(kind: ArrayKind, elements: usize, spacing: f64) -> Result<Self> {
        if elements == 0 {
            return Err(Error::Geometry("element count must be at least 1".into()));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::Geometry(format!(
                "element spacing must be positive, got {spacing}"
            )));
        }
        if kind == ArrayKind::Uspa && exact_sqrt(elements).is_none() {
            return Err(Error::Geometry(format!(
                "a USPA needs a perfect-square element count, got {elements}"
            )));
        }
        Ok(Self {
            kind,
            elements,
            spacing,
        })
    }

    pub fn ula(elements: usize, spacing: f64) -> Result<Self> {
        Self::new(ArrayKind::Ula, elements, spacing)
    }

    pub fn uspa(elements: usize, spacing: f64) -> Result<Self> {
        Self::new(ArrayKind::Uspa, elements, spacing)
    }

    pub fn kind(&self) -> ArrayKind {
        self.kind
    }

    pub fn elements(&self) -> usize {
        self.elements
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Side length of a square array (`√M`); `M` for a ULA.
    pub fn side(&self) -> usize {
        match self.kind {
            ArrayKind::Ula => self.elements,
            ArrayKind::Uspa => exact_sqrt(self.elements).expect("validated on construction"),
        }
    }
}

fn exact_sqrt(n: usize) -> Option<usize> {
    let r = (n as f64).sqrt().round() as usize;
    (r * r == n).then_some(r)
}

/// The optical carriers driving the photonic beamformer.
///
/// `xi[n]` is the subcarrier-to-carrier ratio and `frac_bw[n]` the fractional
/// bandwidth of carrier `n`; `xi[n]` must lie within `1 ± frac_bw[n] / 2`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(try_from = "RawPlan")]
pub struct CarrierPlan {
    wavelengths: Vec<f64>,
    xi: Vec<f64>,
    frac_bw: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPlan {
    wavelengths: Vec<f64>,
    #[serde(default)]
    xi: Option<Vec<f64>>,
    #[serde(default)]
    frac_bw: Option<Vec<f64>>,
}

impl TryFrom<RawPlan> for CarrierPlan {
    type Error = Error;

    fn try_from(raw: RawPlan) -> Result<Self> {
        let n = raw.wavelengths.len();
        CarrierPlan::new(
            raw.wavelengths,
            raw.xi.unwrap_or_else(|| vec![1.0; n]),
            raw.frac_bw.unwrap_or_else(|| vec![0.0; n]),
        )
    }
}

impl CarrierPlan {
    pub fn new(wavelengths: Vec<f64>, xi: Vec<f64>, frac_bw: Vec<f64>) -> Result<Self> {
        if wavelengths.is_empty() {
            return Err(Error::Argument(
                "a carrier plan needs at least one carrier".into(),
            ));
        }
        if xi.len() != wavelengths.len() || frac_bw.len() != wavelengths.len() {
            return Err(Error::Dimension(format!(
                "carrier plan lists {} wavelengths, {} ratios and {} bandwidths",
                wavelengths.len(),
                xi.len(),
                frac_bw.len()
            )));
        }
        for (n, ((&lambda, &ratio), &bw)) in wavelengths.iter().zip(&xi).zip(&frac_bw).enumerate() {
            if !(lambda > 0.0 && lambda.is_finite()) {
                return Err(Error::Argument(format!(
                    "carrier {n}: wavelength must be positive, got {lambda}"
                )));
            }
            if !(0.0..2.0).contains(&bw) {
                return Err(Error::Argument(format!(
                    "carrier {n}: fractional bandwidth must lie in [0, 2), got {bw}"
                )));
            }
            // One ulp of slack so that ratios built as 1 ± b/2 are accepted.
            let slack = 4.0 * f64::EPSILON;
            if ratio < 1.0 - bw / 2.0 - slack || ratio > 1.0 + bw / 2.0 + slack {
                return Err(Error::Argument(format!(
                    "carrier {n}: ratio {ratio} outside [1 - b/2, 1 + b/2] for b = {bw}"
                )));
            }
        }
        Ok(Self {
            wavelengths,
            xi,
            frac_bw,
        })
    }

    /// Narrowband carriers steered exactly at their own frequency (`ξ = 1`).
    pub fn narrowband(wavelengths: Vec<f64>) -> Result<Self> {
        let n = wavelengths.len();
        Self::new(wavelengths, vec![1.0; n], vec![0.0; n])
    }

    /// `count` carriers sharing one wavelength.
    pub fn shared(wavelength: f64, count: usize) -> Result<Self> {
        Self::narrowband(vec![wavelength; count])
    }

    pub fn len(&self) -> usize {
        self.wavelengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wavelengths.is_empty()
    }

    pub fn wavelengths(&self) -> &[f64] {
        &self.wavelengths
    }

    pub fn xi(&self) -> &[f64] {
        &self.xi
    }

    pub fn frac_bw(&self) -> &[f64] {
        &self.frac_bw
    }

    /// Wavelength of the first carrier.
    pub fn reference_wavelength(&self) -> f64 {
        self.wavelengths[0]
    }

    /// The single-carrier plan made of the first carrier only.
    pub fn first_carrier(&self) -> Self {
        Self {
            wavelengths: vec![self.wavelengths[0]],
            xi: vec![self.xi[0]],
            frac_bw: vec![self.frac_bw[0]],
        }
    }
}

impl Serialize for CarrierPlan {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("CarrierPlan", 3)?;
        st.serialize_field("wavelengths", &self.wavelengths)?;
        st.serialize_field("xi", &self.xi)?;
        st.serialize_field("frac_bw", &self.frac_bw)?;
        st.end()
    }
}

/// Beam focus `φ_o` and the user's actual departure angle `φ`, both in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamFocus {
    focus_angle: f64,
    user_angle: f64,
}

impl BeamFocus {
    pub fn new(focus_angle: f64, user_angle: f64) -> Result<Self> {
        for (name, a) in [("focus", focus_angle), ("user", user_angle)] {
            if !(-PI..=PI).contains(&a) {
                return Err(Error::Argument(format!("{name} angle {a} outside [-π, π]")));
            }
        }
        Ok(Self {
            focus_angle,
            user_angle,
        })
    }

    pub fn focus_angle(&self) -> f64 {
        self.focus_angle
    }

    pub fn user_angle(&self) -> f64 {
        self.user_angle
    }
}

/// ULA response toward `phi`: element `m` is `exp(j m (2π/λ) d sin φ) / √M`.
pub fn ula_steering(phi: f64, lambda: f64, geom: &ArrayGeometry) -> Result<CVector> {
    if geom.kind != ArrayKind::Ula {
        return Err(Error::GeometryKind {
            expected: ArrayKind::Ula.name(),
            found: geom.kind.name(),
        });
    }
    let m = geom.elements;
    let step = 2.0 * PI / lambda * geom.spacing * phi.sin();
    let scale = 1.0 / (m as f64).sqrt();
    Ok(CVector::from_fn(m, |i, _| {
        Complex64::from_polar(scale, i as f64 * step)
    }))
}

/// USPA response: element `(p, q)`, stored at `p * √M + q`, carries the phase
/// `(2π/λ) d (p sin(az) sin(el) + q cos(el))`.
pub fn uspa_steering(
    azimuth: f64,
    elevation: f64,
    lambda: f64,
    geom: &ArrayGeometry,
) -> Result<CVector> {
    if geom.kind != ArrayKind::Uspa {
        return Err(Error::GeometryKind {
            expected: ArrayKind::Uspa.name(),
            found: geom.kind.name(),
        });
    }
    let side = geom.side();
    let k = 2.0 * PI / lambda * geom.spacing;
    let row_step = k * azimuth.sin() * elevation.sin();
    let col_step = k * elevation.cos();
    let scale = 1.0 / (geom.elements as f64).sqrt();
    Ok(CVector::from_fn(geom.elements, |i, _| {
        let (p, q) = (i / side, i % side);
        Complex64::from_polar(scale, p as f64 * row_step + q as f64 * col_step)
    }))
}

/// Steering vector for either geometry; `elevation` is ignored by a ULA.
pub fn steering(azimuth: f64, elevation: f64, lambda: f64, geom: &ArrayGeometry) -> CVector {
    match geom.kind {
        ArrayKind::Ula => ula_steering(azimuth, lambda, geom),
        ArrayKind::Uspa => uspa_steering(azimuth, elevation, lambda, geom),
    }
    .expect("kind matched")
}

/// Beam-squint offset `ξ sin(φ) - sin(φ_o)`.
pub fn squint_offset(focus: &BeamFocus, xi_n: f64) -> f64 {
    xi_n * focus.user_angle.sin() - focus.focus_angle.sin()
}

/// `Σ_{m<M} exp(j m ψ)`, closed form away from the kernel singularity.
fn phasor_sum(elements: usize, psi: f64) -> Complex64 {
    let half = 0.5 * psi;
    let denom = half.sin();
    if denom.abs() > DIRICHLET_GUARD {
        let m = elements as f64;
        let magnitude = (m * half).sin() / denom;
        Complex64::from_polar(magnitude, (m - 1.0) * half)
    } else {
        (0..elements)
            .map(|i| Complex64::from_polar(1.0, i as f64 * psi))
            .sum()
    }
}

/// Photonic beamformer gain: the `M × N_r` phasor sum normalised by `√(M N_r)`.
pub fn photonic_array_gain(
    offsets: &[f64],
    geom: &ArrayGeometry,
    plan: &CarrierPlan,
) -> Result<f64> {
    if offsets.len() != plan.len() {
        return Err(Error::Dimension(format!(
            "{} squint offsets for {} carriers",
            offsets.len(),
            plan.len()
        )));
    }
    let total: Complex64 = offsets
        .iter()
        .zip(plan.wavelengths())
        .map(|(&x, &lambda)| phasor_sum(geom.elements, 2.0 * PI / lambda * geom.spacing * x))
        .sum();
    Ok(total.norm() / ((geom.elements * plan.len()) as f64).sqrt())
}

/// Single-carrier RF beamformer gain `|Σ_m exp(j m (2π/λ) d x)| / √M`.
pub fn rf_array_gain(offset: f64, geom: &ArrayGeometry, lambda: f64) -> f64 {
    let psi = 2.0 * PI / lambda * geom.spacing * offset;
    phasor_sum(geom.elements, psi).norm() / (geom.elements as f64).sqrt()
}

/// Small-offset lower bound on the photonic gain, `|√(N_r/M) (1 + j (M-1) 2π d x / λ)|`.
///
/// Assumes every carrier sees the same gain, so only the first carrier's
/// wavelength enters.
pub fn photonic_gain_lower_bound(offset: f64, geom: &ArrayGeometry, plan: &CarrierPlan) -> f64 {
    let m = geom.elements as f64;
    let lambda = plan.reference_wavelength();
    let imag = (m - 1.0) * 2.0 * PI / lambda * geom.spacing * offset;
    (plan.len() as f64 / m).sqrt() * Complex64::new(1.0, imag).norm()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamPatternRow {
    pub angle: f64,
    pub photonic: f64,
    pub rf: f64,
    pub bound: f64,
}

/// Photonic and RF gains over `angle_grid` for a beam focused at `focus`.
///
/// Each carrier's offset uses the plan's `ξ_n`; the RF column uses the single
/// wavelength `rf_lambda`. The bound column evaluates
/// [`photonic_gain_lower_bound`] at the first carrier's offset.
pub fn beam_pattern_sweep(
    angle_grid: &[f64],
    focus: f64,
    geom: &ArrayGeometry,
    plan: &CarrierPlan,
    rf_lambda: f64,
) -> Result<Vec<BeamPatternRow>> {
    if angle_grid.is_empty() {
        return Err(Error::Argument(
            "beam pattern needs a nonempty angle grid".into(),
        ));
    }
    let mut offsets = vec![0.0; plan.len()];
    angle_grid
        .iter()
        .map(|&angle| {
            let beam = BeamFocus::new(focus, angle)?;
            for (x, &xi) in offsets.iter_mut().zip(plan.xi()) {
                *x = squint_offset(&beam, xi);
            }
            Ok(BeamPatternRow {
                angle,
                photonic: photonic_array_gain(&offsets, geom, plan)?,
                rf: rf_array_gain(squint_offset(&beam, 1.0), geom, rf_lambda),
                bound: photonic_gain_lower_bound(offsets[0], geom, plan),
            })
        })
        .collect()
}

/// Width of the contiguous lobe around the maximum of `gains` where the
/// amplitude gain stays at or above `peak / √2`. Crossings are located by
/// linear interpolation; a lobe reaching the grid edge is clipped there.
pub fn half_power_beamwidth(angles: &[f64], gains: &[f64]) -> Result<f64> {
    if angles.len() != gains.len() || angles.len() < 2 {
        return Err(Error::Dimension(format!(
            "beamwidth needs matching grids of at least two points, got {} and {}",
            angles.len(),
            gains.len()
        )));
    }
    let (peak_idx, &peak) = gains
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty");
    let level = peak * FRAC_1_SQRT_2;
    let crossing = |inside: usize, outside: usize| {
        let (g0, g1) = (gains[inside], gains[outside]);
        let t = (g0 - level) / (g0 - g1);
        angles[inside] + t * (angles[outside] - angles[inside])
    };

    let left = (0..peak_idx)
        .rev()
        .find(|&i| gains[i] < level)
        .map_or(angles[0], |i| crossing(i + 1, i));
    let right = (peak_idx + 1..gains.len())
        .find(|&i| gains[i] < level)
        .map_or(angles[angles.len() - 1], |i| crossing(i - 1, i));
    Ok(right - left)
}
