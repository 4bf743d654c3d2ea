//! Seeded Monte-Carlo engine for the spectral-efficiency / BER experiments.
//!
//! Trial `t` of a run draws everything (paths, bits, noise) from its own
//! ChaCha stream `(seed, t)`, so a trial's outcome does not depend on which
//! worker ran it. Outcomes are collected in trial order and reduced
//! sequentially, which makes every record independent of the worker count.
//! The same stream index is reused at every SNR point, so all grid points see
//! the same channel draws.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arrays::{ArrayGeometry, ArrayKind, CarrierPlan};
use crate::channel::{orthogonality_defect, sample_paths, ChannelRealization, GainModel};
use crate::error::{Error, Result};
use crate::metrics::{self, LinkBudget, MetricsRecord};
use crate::precoding::{
    build_oawg_weights, build_photonic_beamformer, carrier_assignment, default_combiners,
    effective_channel, mmse_baseband, normalize_total_power, zf_baseband, PrecoderKind,
    PrecoderSet,
};
use crate::{CMatrix, CVector};

pub type TrialRng = ChaCha12Rng;

/// Independent stream for one trial: the seed selects the key, the trial
/// index selects the ChaCha stream.
pub fn rng_substream(seed: u64, trial_index: u64) -> TrialRng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(trial_index);
    rng
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Beamformer {
    /// Every RF chain spread over all optical carriers with modulator weights.
    #[default]
    RofMulticarrier,
    /// One wavelength (the plan's first), no modulator stage.
    RfSinglecarrier,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Experiment {
    /// SE/BER Monte-Carlo sweep over the SNR grid.
    #[default]
    Sweep,
    /// Photonic vs RF beam pattern; angles in radians.
    BeamPattern {
        focus: f64,
        start: f64,
        stop: f64,
        step: f64,
    },
    /// Sweep plus channel-orthogonality and large-array rate comparison.
    MassiveMimo,
}

/// Everything that determines a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub geometry: ArrayGeometry,
    /// Receive antennas per user.
    pub n: usize,
    pub k: usize,
    pub l: usize,
    pub plan: CarrierPlan,
    pub snr_grid_db: Vec<f64>,
    pub trials: u64,
    pub seed: u64,
    pub precoder: PrecoderKind,
    pub beamformer: Beamformer,
    pub bits_per_trial: u64,
    pub gain_model: GainModel,
    /// Also run the RF single-carrier arm with the same seed.
    pub compare_rf: bool,
    pub experiment: Experiment,
}

impl ScenarioConfig {
    pub fn m(&self) -> usize {
        self.geometry.elements()
    }

    /// RF chains, one per optical carrier.
    pub fn n_r(&self) -> usize {
        self.plan.len()
    }

    /// Carriers entering the analytic gains: `N_r` for the photonic arm, 1 for RF.
    pub fn effective_carriers(&self) -> usize {
        match self.beamformer {
            Beamformer::RofMulticarrier => self.n_r(),
            Beamformer::RfSinglecarrier => 1,
        }
    }

    /// Receive ULA with the transmit element spacing.
    pub fn rx_geometry(&self) -> ArrayGeometry {
        ArrayGeometry::ula(self.n, self.geometry.spacing()).expect("n validated")
    }

    pub fn with_beamformer(&self, beamformer: Beamformer) -> Self {
        Self {
            beamformer,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (m, n_r, k) = (self.m(), self.n_r(), self.k);
        let bad = |msg: String| Err(Error::Configuration(msg));
        if k < 1 {
            return bad("k: at least one user is required".into());
        }
        if self.l < 1 {
            return bad("l: at least one path per user is required".into());
        }
        if self.n < 1 {
            return bad("n: at least one receive antenna is required".into());
        }
        if k > n_r {
            return bad(format!(
                "k: constraint K ≤ N_r violated (K = {k}, N_r = {n_r})"
            ));
        }
        if n_r > m {
            return bad(format!(
                "plan: constraint N_r ≤ M violated (N_r = {n_r}, M = {m})"
            ));
        }
        if self.trials < 1 {
            return bad("trials: at least one trial is required".into());
        }
        if self.snr_grid_db.is_empty() {
            return bad("snr_grid_db: grid must not be empty".into());
        }
        if let Some(v) = self.snr_grid_db.iter().find(|v| !v.is_finite()) {
            return bad(format!("snr_grid_db: non-finite entry {v}"));
        }
        match self.experiment {
            Experiment::Sweep | Experiment::MassiveMimo => {
                if self.n != 1 {
                    return bad(format!(
                        "n: BER experiments use single-antenna users, got N = {}",
                        self.n
                    ));
                }
                if self.bits_per_trial < 1 {
                    return bad("bits_per_trial: at least one bit per trial is required".into());
                }
            }
            Experiment::BeamPattern {
                focus,
                start,
                stop,
                step,
            } => {
                if self.geometry.kind() != ArrayKind::Ula {
                    return bad("geometry: beam patterns are computed for ULAs".into());
                }
                let in_range = |a: f64| (-std::f64::consts::PI..=std::f64::consts::PI).contains(&a);
                if !(step > 0.0)
                    || !(start <= stop)
                    || ![focus, start, stop].into_iter().all(in_range)
                {
                    return bad(format!(
                        "experiment: invalid angle sweep start={start} stop={stop} step={step} focus={focus}"
                    ));
                }
            }
        }
        Ok(())
    }
}

/// One channel draw pushed through the full precoding chain.
#[derive(Debug, Clone)]
pub struct Link {
    pub channel: ChannelRealization,
    /// Power-normalised precoder.
    pub precoder: PrecoderSet,
    /// `K × N_r` effective channel `h_p`.
    pub effective: CMatrix,
    /// `K × K` composite gains `h_p F_BB`.
    pub gains: CMatrix,
    pub combiner_norm_sq: Vec<f64>,
}

/// Draws a channel from `rng` and builds the arm's precoder.
///
/// A rank-deficient effective channel surfaces as [`Error::SingularChannel`].
pub fn build_link<R: Rng + ?Sized>(config: &ScenarioConfig, snr: f64, rng: &mut R) -> Result<Link> {
    let tx = config.geometry;
    let rx = config.rx_geometry();
    let k = config.k;
    let paths = sample_paths(rng, k, config.l, tx.kind(), config.gain_model)?;
    let plan: CarrierPlan = match config.beamformer {
        Beamformer::RofMulticarrier => config.plan.clone(),
        Beamformer::RfSinglecarrier => config.plan.first_carrier(),
    };
    let channel = ChannelRealization::build(paths, &tx, &rx, &plan)?;
    let combiners = default_combiners(&channel.paths, &rx, plan.reference_wavelength())?;
    let combiner_norm_sq: Vec<f64> = combiners.iter().map(|w| w.norm_squared()).collect();

    let assignment = carrier_assignment(config.n_r(), k)?;
    let beamformer = build_photonic_beamformer(&channel.paths, &tx, &plan, &assignment)?;
    let f_oawg = match config.beamformer {
        Beamformer::RofMulticarrier => build_oawg_weights(&beamformer, k),
        Beamformer::RfSinglecarrier => {
            CVector::from_element(beamformer.chains(), Complex64::new(1.0, 0.0))
        }
    };
    let effective = effective_channel(&channel, &combiners, &beamformer, &f_oawg)?;
    let f_bb = match config.precoder {
        PrecoderKind::Zf => zf_baseband(&effective)?,
        PrecoderKind::Mmse => mmse_baseband(&effective, snr, combiner_norm_sq[0])?,
    };
    let precoder = normalize_total_power(PrecoderSet::new(beamformer, f_oawg, f_bb, combiners)?)?;
    let gains = &effective * &precoder.f_bb;
    Ok(Link {
        channel,
        precoder,
        effective,
        gains,
        combiner_norm_sq,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub se: f64,
    pub bit_errors: u64,
    pub bits: u64,
    pub user_errors: Vec<u64>,
    pub sinr: Vec<f64>,
    /// Sum-rate bound evaluated on this trial's path gains.
    pub se_bound: f64,
    pub singular: bool,
}

impl TrialOutcome {
    fn singular(users: usize) -> Self {
        Self {
            se: 0.0,
            bit_errors: 0,
            bits: 0,
            user_errors: vec![0; users],
            sinr: vec![0.0; users],
            se_bound: 0.0,
            singular: true,
        }
    }
}

/// Sends `symbols` BPSK symbols per user through the composite gains and
/// counts per-user errors of the coherent ML detector.
///
/// Each symbol period draws the `K` bits, then per user the complex noise
/// `CN(0, ‖w_k‖² N_o)`. The detector aligns by the known `G[k][k]` and
/// decides on the sign of the real part.
pub fn bpsk_errors<R: Rng + ?Sized>(
    rng: &mut R,
    gains: &CMatrix,
    budget: &LinkBudget,
    combiner_norm_sq: &[f64],
    symbols: u64,
) -> Vec<u64> {
    let k = gains.nrows();
    let amp = budget.rho.sqrt();
    let scaled = gains.map(|g| g * amp);
    let sigma: Vec<f64> = combiner_norm_sq
        .iter()
        .map(|w| (w * budget.noise_power / 2.0).sqrt())
        .collect();
    let align: Vec<Complex64> = (0..k).map(|u| gains[(u, u)].conj()).collect();
    let mut bits = vec![1.0f64; k];
    let mut errors = vec![0u64; k];
    for _ in 0..symbols {
        for b in bits.iter_mut() {
            *b = if rng.random::<bool>() { 1.0 } else { -1.0 };
        }
        for user in 0..k {
            let mut r = Complex64::new(0.0, 0.0);
            for (m, &b) in bits.iter().enumerate() {
                r += scaled[(user, m)] * b;
            }
            let nr: f64 = rng.sample(StandardNormal);
            let ni: f64 = rng.sample(StandardNormal);
            r += Complex64::new(nr, ni) * sigma[user];
            let decided = if (align[user] * r).re >= 0.0 {
                1.0
            } else {
                -1.0
            };
            if decided != bits[user] {
                errors[user] += 1;
            }
        }
    }
    errors
}

/// One trial at linear SNR `snr`: channel, precoder, SINR, rate and BPSK errors.
pub fn run_trial<R: Rng + ?Sized>(
    config: &ScenarioConfig,
    snr: f64,
    rng: &mut R,
) -> Result<TrialOutcome> {
    let link = match build_link(config, snr, rng) {
        Ok(link) => link,
        Err(Error::SingularChannel { .. }) => return Ok(TrialOutcome::singular(config.k)),
        Err(e) => return Err(e),
    };
    let budget = LinkBudget::from_snr(snr, config.k)?;
    let sinr = metrics::sinr_from_gains(&link.gains, &budget, &link.combiner_norm_sq)?;
    let se = metrics::spectral_efficiency_instant(&sinr)?;
    let user_errors = bpsk_errors(
        rng,
        &link.gains,
        &budget,
        &link.combiner_norm_sq,
        config.bits_per_trial,
    );
    let se_bound = metrics::se_bound(
        &link.channel.paths.gains_sq(),
        config.m(),
        config.effective_carriers(),
        config.k,
        config.l,
        snr,
    );
    Ok(TrialOutcome {
        se,
        bit_errors: user_errors.iter().sum(),
        bits: config.bits_per_trial * config.k as u64,
        user_errors,
        sinr,
        se_bound,
        singular: false,
    })
}

/// Neumaier-compensated running sum.
#[derive(Default)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

fn aggregate(config: &ScenarioConfig, snr_db: f64, outcomes: &[TrialOutcome]) -> MetricsRecord {
    let k = config.k;
    let ok: Vec<&TrialOutcome> = outcomes.iter().filter(|o| !o.singular).collect();
    let n = ok.len();
    let snr = db_to_linear(snr_db);

    let mut se_sum = CompensatedSum::default();
    let mut bound_sum = CompensatedSum::default();
    let mut sinr_sum: Vec<CompensatedSum> = (0..k).map(|_| CompensatedSum::default()).collect();
    let mut user_errors = vec![0u64; k];
    let (mut errors, mut bits) = (0u64, 0u64);
    for o in &ok {
        se_sum.add(o.se);
        bound_sum.add(o.se_bound);
        for (acc, &s) in sinr_sum.iter_mut().zip(&o.sinr) {
            acc.add(s);
        }
        for (acc, &e) in user_errors.iter_mut().zip(&o.user_errors) {
            *acc += e;
        }
        errors += o.bit_errors;
        bits += o.bits;
    }
    let mean = |s: &CompensatedSum| if n > 0 { s.value() / n as f64 } else { 0.0 };
    let se_mean = mean(&se_sum);
    let se_stderr = if n > 1 {
        let mut ss = CompensatedSum::default();
        for o in &ok {
            ss.add((o.se - se_mean).powi(2));
        }
        (ss.value() / (n - 1) as f64 / n as f64).sqrt()
    } else {
        0.0
    };
    let ber_mean = if bits > 0 {
        errors as f64 / bits as f64
    } else {
        0.0
    };
    let ber_stderr = if bits > 0 {
        (ber_mean * (1.0 - ber_mean) / bits as f64).sqrt()
    } else {
        0.0
    };
    let user_bits = n as u64 * config.bits_per_trial;
    MetricsRecord {
        snr_db,
        se_mean,
        se_stderr,
        ber_mean,
        ber_stderr,
        sinr_per_user: sinr_sum.iter().map(mean).collect(),
        ber_per_user: user_errors
            .iter()
            .map(|&e| {
                if user_bits > 0 {
                    e as f64 / user_bits as f64
                } else {
                    0.0
                }
            })
            .collect(),
        se_bound: mean(&bound_sum),
        ber_bound: metrics::ber_bound(config.m(), config.effective_carriers(), k, config.l, snr)
            .value,
        trials: config.trials,
        singular_trials: (outcomes.len() - n) as u64,
    }
}

fn with_pool<T: Send>(workers: usize, job: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == 0 {
        return Ok(job());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Configuration(format!("workers: cannot start thread pool: {e}")))?;
    Ok(pool.install(job))
}

/// Runs every trial at every SNR grid point on the global thread pool.
pub fn run_sweep(config: &ScenarioConfig) -> Result<Vec<MetricsRecord>> {
    run_sweep_with_workers(config, 0)
}

/// As [`run_sweep`] on a dedicated pool of `workers` threads (0 = global
/// pool). The worker count never changes the output.
pub fn run_sweep_with_workers(
    config: &ScenarioConfig,
    workers: usize,
) -> Result<Vec<MetricsRecord>> {
    config.validate()?;
    with_pool(workers, || {
        config
            .snr_grid_db
            .iter()
            .map(|&snr_db| {
                let snr = db_to_linear(snr_db);
                let outcomes = (0..config.trials)
                    .into_par_iter()
                    .map(|t| run_trial(config, snr, &mut rng_substream(config.seed, t)))
                    .collect::<Result<Vec<_>>>()?;
                Ok(aggregate(config, snr_db, &outcomes))
            })
            .collect()
    })?
}

/// Negated least-squares slope of `log10(BER)` against `snr_db / 10` over the
/// records inside `window_db` (inclusive) with nonzero BER.
pub fn diversity_slope(records: &[MetricsRecord], window_db: (f64, f64)) -> Result<f64> {
    let pts: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| r.snr_db >= window_db.0 && r.snr_db <= window_db.1 && r.ber_mean > 0.0)
        .map(|r| (r.snr_db / 10.0, r.ber_mean.log10()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::Estimation(format!(
            "need at least two points with nonzero BER in [{}, {}] dB, found {}",
            window_db.0,
            window_db.1,
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Estimation("all window points share one SNR".into()));
    }
    Ok(-sxy / sxx)
}

/// Mean `‖H Hᴴ/M − I‖_F` over the run's channel draws (first carrier). Uses
/// the same streams as [`run_sweep`], so the draws match the sweep's.
pub fn mean_orthogonality_defect(config: &ScenarioConfig, workers: usize) -> Result<f64> {
    config.validate()?;
    let tx = config.geometry;
    let rx = config.rx_geometry();
    let plan = config.plan.first_carrier();
    let defects = with_pool(workers, || {
        (0..config.trials)
            .into_par_iter()
            .map(|t| {
                let mut rng = rng_substream(config.seed, t);
                let paths =
                    sample_paths(&mut rng, config.k, config.l, tx.kind(), config.gain_model)?;
                let combiners = default_combiners(&paths, &rx, plan.reference_wavelength())?;
                let channel = ChannelRealization::build(paths, &tx, &rx, &plan)?;
                orthogonality_defect(&channel.combined_rows(&combiners, 0)?)
            })
            .collect::<Result<Vec<f64>>>()
    })??;
    let mut sum = CompensatedSum::default();
    defects.iter().for_each(|&d| sum.add(d));
    Ok(sum.value() / defects.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ScenarioConfig {
        let lambda = 10.70e-3;
        ScenarioConfig {
            geometry: ArrayGeometry::uspa(16, lambda / 2.0).unwrap(),
            n: 1,
            k: 3,
            l: 1,
            plan: CarrierPlan::shared(lambda, 3).unwrap(),
            snr_grid_db: vec![0.0, 10.0],
            trials: 50,
            seed: 42,
            precoder: PrecoderKind::Zf,
            beamformer: Beamformer::RofMulticarrier,
            bits_per_trial: 20,
            gain_model: GainModel::Rayleigh,
            compare_rf: false,
            experiment: Experiment::Sweep,
        }
    }

    #[test]
    fn substreams_are_reproducible_and_distinct() {
        let draw = |s, i| {
            let mut r = rng_substream(s, i);
            (0..1000).map(|_| r.random::<u64>()).collect::<Vec<_>>()
        };
        assert_eq!(draw(42, 0), draw(42, 0));
        assert_ne!(draw(42, 0), draw(42, 1));
        assert_ne!(draw(42, 5), draw(43, 5));
    }

    #[test]
    fn validation_messages_name_fields() {
        let mut c = small_config();
        c.k = 4;
        let err = c.validate().unwrap_err().to_string();
        assert!(err.contains("K ≤ N_r"), "{err}");
        let mut c = small_config();
        c.snr_grid_db.clear();
        assert!(c
            .validate()
            .unwrap_err()
            .to_string()
            .contains("snr_grid_db"));
        let mut c = small_config();
        c.trials = 0;
        assert!(c.validate().is_err());
        let mut c = small_config();
        c.n = 2;
        assert!(c.validate().is_err());
        let mut c = small_config();
        c.plan = CarrierPlan::shared(1e-2, 17).unwrap();
        c.k = 3;
        assert!(c.validate().unwrap_err().to_string().contains("N_r ≤ M"));
    }

    #[test]
    fn noiseless_zf_has_no_errors() {
        let c = small_config();
        let mut rng = rng_substream(1, 0);
        let out = run_trial(&c, 1e12, &mut rng).unwrap();
        assert!(!out.singular);
        assert_eq!(out.bit_errors, 0);
        assert_eq!(out.bits, 60);
    }

    #[test]
    fn zero_gain_gives_coin_flips() {
        let mut rng = rng_substream(3, 0);
        let g = CMatrix::zeros(1, 1);
        let budget = LinkBudget::from_snr(1.0, 1).unwrap();
        let n = 200_000u64;
        let e = bpsk_errors(&mut rng, &g, &budget, &[1.0], n)[0] as f64 / n as f64;
        let sd = (0.25 / n as f64).sqrt();
        assert!((e - 0.5).abs() < 3.0 * sd, "{e}");
    }

    #[test]
    fn single_trial_sweep_matches_trial() {
        let mut c = small_config();
        c.trials = 1;
        c.snr_grid_db = vec![10.0];
        let rec = &run_sweep(&c).unwrap()[0];
        let out = run_trial(&c, 10.0, &mut rng_substream(c.seed, 0)).unwrap();
        assert_eq!(rec.se_mean, out.se);
        assert_eq!(rec.se_stderr, 0.0);
        assert_eq!(rec.ber_mean, out.bit_errors as f64 / out.bits as f64);
        assert_eq!(rec.sinr_per_user, out.sinr);
        assert_eq!(rec.trials, 1);
    }

    #[test]
    fn sweep_is_reproducible_across_worker_counts() {
        let c = small_config();
        let a = run_sweep_with_workers(&c, 1).unwrap();
        let b = run_sweep_with_workers(&c, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, run_sweep(&c).unwrap());
    }

    #[test]
    fn slope_of_exact_power_law() {
        let mk = |snr_db: f64, l: usize| {
            let v = metrics::ber_bound(16, 3, 3, l, db_to_linear(snr_db)).value;
            MetricsRecord {
                snr_db,
                se_mean: 0.0,
                se_stderr: 0.0,
                ber_mean: v,
                ber_stderr: 0.0,
                sinr_per_user: vec![],
                ber_per_user: vec![],
                se_bound: 0.0,
                ber_bound: v,
                trials: 1,
                singular_trials: 0,
            }
        };
        for l in [1usize, 2] {
            let recs: Vec<_> = [20.0, 25.0, 30.0, 35.0, 40.0]
                .iter()
                .map(|&s| mk(s, l))
                .collect();
            let d = diversity_slope(&recs, (20.0, 40.0)).unwrap();
            assert!((d - l as f64).abs() < 1e-9, "{d}");
        }
        let one = vec![mk(20.0, 1)];
        assert!(matches!(
            diversity_slope(&one, (20.0, 40.0)),
            Err(Error::Estimation(_))
        ));
    }

    #[test]
    fn rf_arm_uses_one_carrier() {
        let c = small_config().with_beamformer(Beamformer::RfSinglecarrier);
        let link = build_link(&c, 10.0, &mut rng_substream(7, 0)).unwrap();
        assert_eq!(link.precoder.f_rof.carriers(), 1);
        assert_eq!(c.effective_carriers(), 1);
        let rof = build_link(&small_config(), 10.0, &mut rng_substream(7, 0)).unwrap();
        assert_eq!(rof.precoder.f_rof.carriers(), 3);
    }
}
