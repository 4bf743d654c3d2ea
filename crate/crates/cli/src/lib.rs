//! Batch front-end for `rofhp`: scenario files, named presets, CSV and
//! manifest output.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rofhp_core::arrays::{beam_pattern_sweep, BeamPatternRow};
use rofhp_core::metrics::{se_low_snr, se_massive_mimo};
use rofhp_core::montecarlo::{db_to_linear, mean_orthogonality_defect, run_sweep_with_workers};
use rofhp_core::{
    ArrayGeometry, Beamformer, CarrierPlan, Experiment, GainModel, MetricsRecord, PrecoderKind,
    ScenarioConfig,
};
use serde::Serialize;
use serde_json::{Map, Value};

pub const METRICS_HEADER: &str =
    "snr_db,se_mean,se_stderr,ber_mean,ber_stderr,se_bound_eq13,ber_bound_eq18,trials,singular_trials";
pub const BEAM_HEADER: &str = "angle_rad,gain_photonic,gain_rf,gain_bound";
pub const ASYMPTOTICS_HEADER: &str =
    "snr_db,se_per_user,se_large_array,se_low_snr,orthogonality_defect";

pub const PRESETS: [&str; 4] = ["fig3", "fig4-se", "fig4-ber", "massive-mimo"];

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("invalid scenario: {0}")]
    Validation(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<rofhp_core::Error> for CliError {
    fn from(e: rofhp_core::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

const MM: f64 = 1e-3;
const FIG3_WAVELENGTHS_MM: [f64; 4] = [10.70, 7.1, 4.99, 4.10];
const SHARED_WAVELENGTH_MM: f64 = 10.70;

/// Inclusive grid `start, start + step, …, stop`.
pub fn grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step).round() as usize;
    (0..=n).map(|i| start + i as f64 * step).collect()
}

fn fig4(snr_grid_db: Vec<f64>) -> ScenarioConfig {
    let lambda = SHARED_WAVELENGTH_MM * MM;
    ScenarioConfig {
        geometry: ArrayGeometry::uspa(16, lambda / 2.0).expect("square"),
        n: 1,
        k: 3,
        l: 1,
        plan: CarrierPlan::shared(lambda, 3).expect("positive"),
        snr_grid_db,
        trials: 100_000,
        seed: 42,
        precoder: PrecoderKind::Zf,
        beamformer: Beamformer::RofMulticarrier,
        bits_per_trial: 100,
        gain_model: GainModel::Rayleigh,
        compare_rf: true,
        experiment: Experiment::Sweep,
    }
}

/// Built-in scenario by name.
pub fn preset(name: &str) -> Result<ScenarioConfig, CliError> {
    let config = match name {
        "fig3" => {
            let wavelengths: Vec<f64> = FIG3_WAVELENGTHS_MM.iter().map(|w| w * MM).collect();
            let d = wavelengths[0] / 2.0;
            let half = std::f64::consts::FRAC_PI_2;
            ScenarioConfig {
                geometry: ArrayGeometry::ula(16, d).expect("positive"),
                n: 1,
                k: 1,
                l: 1,
                plan: CarrierPlan::narrowband(wavelengths).expect("positive"),
                snr_grid_db: vec![0.0],
                trials: 1,
                seed: 42,
                precoder: PrecoderKind::Zf,
                beamformer: Beamformer::RofMulticarrier,
                bits_per_trial: 100,
                gain_model: GainModel::Rayleigh,
                compare_rf: false,
                experiment: Experiment::BeamPattern {
                    focus: 0.0,
                    start: -half,
                    stop: half,
                    step: 0.1f64.to_radians(),
                },
            }
        }
        "fig4-se" => fig4(grid(-10.0, 30.0, 5.0)),
        "fig4-ber" => fig4(grid(0.0, 40.0, 5.0)),
        "massive-mimo" => {
            let lambda = SHARED_WAVELENGTH_MM * MM;
            ScenarioConfig {
                geometry: ArrayGeometry::uspa(1024, lambda / 2.0).expect("square"),
                plan: CarrierPlan::shared(lambda, 4).expect("positive"),
                snr_grid_db: grid(-10.0, 20.0, 5.0),
                trials: 100,
                gain_model: GainModel::UnitModulus,
                compare_rf: false,
                experiment: Experiment::MassiveMimo,
                ..fig4(Vec::new())
            }
        }
        other => {
            return Err(CliError::Usage(format!(
                "unknown preset {other:?} (expected one of {})",
                PRESETS.join(", ")
            )))
        }
    };
    Ok(config)
}

/// A scenario file resolved against its preset.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub preset: Option<String>,
    pub output: Option<PathBuf>,
}

const CONFIG_KEYS: [&str; 14] = [
    "geometry",
    "n",
    "k",
    "l",
    "plan",
    "snr_grid_db",
    "trials",
    "seed",
    "precoder",
    "beamformer",
    "bits_per_trial",
    "gain_model",
    "compare_rf",
    "experiment",
];

/// Resolves scenario JSON text. Explicit fields override the preset's; with
/// no preset every field is required. `preset_override` replaces the file's
/// `preset` key.
pub fn parse_scenario_str(text: &str, preset_override: Option<&str>) -> Result<Scenario, CliError> {
    let doc: Value = serde_json::from_str(text)
        .map_err(|e| CliError::Usage(format!("malformed scenario document: {e}")))?;
    let Value::Object(fields) = doc else {
        return Err(CliError::Usage(
            "scenario document must be a JSON object".into(),
        ));
    };
    let mut preset_name = None;
    let mut output = None;
    let mut overrides = Map::new();
    for (key, value) in fields {
        match key.as_str() {
            "preset" => match value {
                Value::String(s) => preset_name = Some(s),
                Value::Null => {}
                _ => return Err(CliError::Validation("preset: expected a string".into())),
            },
            "output" => match value {
                Value::String(s) => output = Some(PathBuf::from(s)),
                Value::Null => {}
                _ => {
                    return Err(CliError::Validation(
                        "output: expected a path string".into(),
                    ))
                }
            },
            k if CONFIG_KEYS.contains(&k) => {
                overrides.insert(key, value);
            }
            _ => return Err(CliError::Validation(format!("{key}: unknown field"))),
        }
    }
    if let Some(p) = preset_override {
        preset_name = Some(p.to_string());
    }
    let mut merged = match &preset_name {
        Some(name) => match serde_json::to_value(preset(name)?) {
            Ok(Value::Object(map)) => map,
            _ => unreachable!("config serializes to an object"),
        },
        None => Map::new(),
    };
    merged.extend(overrides);
    let config: ScenarioConfig = serde_json::from_value(Value::Object(merged))
        .map_err(|e| CliError::Validation(e.to_string()))?;
    config.validate()?;
    Ok(Scenario {
        config,
        preset: preset_name,
        output,
    })
}

pub fn parse_scenario(path: &Path, preset_override: Option<&str>) -> Result<Scenario, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    parse_scenario_str(&text, preset_override)
}

fn num(out: &mut String, v: f64) {
    write!(out, "{v:.16e}").expect("string write");
}

pub fn format_metrics_csv(records: &[MetricsRecord]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in records {
        for v in [
            r.snr_db,
            r.se_mean,
            r.se_stderr,
            r.ber_mean,
            r.ber_stderr,
            r.se_bound,
            r.ber_bound,
        ] {
            num(&mut out, v);
            out.push(',');
        }
        writeln!(out, "{},{}", r.trials, r.singular_trials).expect("string write");
    }
    out
}

pub fn format_beam_csv(rows: &[BeamPatternRow]) -> String {
    let mut out = String::from(BEAM_HEADER);
    out.push('\n');
    for r in rows {
        num(&mut out, r.angle);
        for v in [r.photonic, r.rf, r.bound] {
            out.push(',');
            num(&mut out, v);
        }
        out.push('\n');
    }
    out
}

/// Simulated per-user rate next to the large-array and low-SNR expressions.
#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticsRow {
    pub snr_db: f64,
    pub se_per_user: f64,
    pub se_large_array: f64,
    pub se_low_snr: f64,
    pub orthogonality_defect: f64,
}

pub fn format_asymptotics_csv(rows: &[AsymptoticsRow]) -> String {
    let mut out = String::from(ASYMPTOTICS_HEADER);
    out.push('\n');
    for r in rows {
        num(&mut out, r.snr_db);
        for v in [
            r.se_per_user,
            r.se_large_array,
            r.se_low_snr,
            r.orthogonality_defect,
        ] {
            out.push(',');
            num(&mut out, v);
        }
        out.push('\n');
    }
    out
}

fn write_file(path: &Path, body: &str) -> Result<(), CliError> {
    fs::write(path, body).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

pub fn emit_csv(records: &[MetricsRecord], path: &Path) -> Result<(), CliError> {
    write_file(path, &format_metrics_csv(records))
}

pub fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// `dir/stem.ext` → `dir/stem-suffix.ext`.
pub fn sibling_path(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy())
        .unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}-{suffix}.{}", ext.to_string_lossy()),
        None => format!("{stem}-{suffix}"),
    };
    path.with_file_name(name)
}

#[derive(Debug, Serialize)]
pub struct RunManifest<'a> {
    pub artifact: &'static str,
    pub version: &'static str,
    pub preset: Option<&'a str>,
    pub seed: u64,
    pub config: &'a ScenarioConfig,
    pub wall_clock_seconds: f64,
    pub singular_trials: u64,
}

fn write_manifest(
    path: &Path,
    scenario: &Scenario,
    config: &ScenarioConfig,
    started: Instant,
    singular_trials: u64,
) -> Result<(), CliError> {
    let manifest = RunManifest {
        artifact: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        preset: scenario.preset.as_deref(),
        seed: config.seed,
        config,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        singular_trials,
    };
    let body = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_file(&manifest_path(path), &(body + "\n"))
}

/// Per-run overrides coming from the command line.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub trials: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: usize,
}

/// Runs a resolved scenario and writes its CSV files (each with a manifest).
/// Returns the paths of the CSV files written.
pub fn run(scenario: &Scenario, opts: &RunOptions) -> Result<Vec<PathBuf>, CliError> {
    let started = Instant::now();
    let mut config = scenario.config.clone();
    if let Some(seed) = opts.seed {
        config.seed = seed;
    }
    if let Some(trials) = opts.trials {
        config.trials = trials;
    }
    config.validate()?;
    let out = opts
        .out
        .clone()
        .or_else(|| scenario.output.clone())
        .ok_or_else(|| {
            CliError::Usage("no output path (use --out or the `output` field)".into())
        })?;

    let mut written = Vec::new();
    let singular = |records: &[MetricsRecord]| records.iter().map(|r| r.singular_trials).sum();
    match config.experiment {
        Experiment::BeamPattern {
            focus,
            start,
            stop,
            step,
        } => {
            let angles = grid(start, stop, step);
            let rows = beam_pattern_sweep(
                &angles,
                focus,
                &config.geometry,
                &config.plan,
                config.plan.reference_wavelength(),
            )?;
            write_file(&out, &format_beam_csv(&rows))?;
            write_manifest(&out, scenario, &config, started, 0)?;
            written.push(out);
        }
        Experiment::Sweep | Experiment::MassiveMimo => {
            let records = run_sweep_with_workers(&config, opts.workers)?;
            emit_csv(&records, &out)?;
            write_manifest(&out, scenario, &config, started, singular(&records))?;
            written.push(out.clone());

            if config.compare_rf && config.beamformer == Beamformer::RofMulticarrier {
                let rf = config.with_beamformer(Beamformer::RfSinglecarrier);
                let rf_records = run_sweep_with_workers(&rf, opts.workers)?;
                let rf_out = sibling_path(&out, "rf");
                emit_csv(&rf_records, &rf_out)?;
                write_manifest(&rf_out, scenario, &rf, started, singular(&rf_records))?;
                written.push(rf_out);
            }

            if config.experiment == Experiment::MassiveMimo {
                let defect = mean_orthogonality_defect(&config, opts.workers)?;
                let rows = asymptotics(&config, &records, defect);
                let asym_out = sibling_path(&out, "asymptotics");
                write_file(&asym_out, &format_asymptotics_csv(&rows))?;
                write_manifest(&asym_out, scenario, &config, started, singular(&records))?;
                written.push(asym_out);
            }
        }
    }
    Ok(written)
}

pub fn asymptotics(
    config: &ScenarioConfig,
    records: &[MetricsRecord],
    defect: f64,
) -> Vec<AsymptoticsRow> {
    let (m, n_r, k) = (config.m(), config.effective_carriers(), config.k);
    records
        .iter()
        .map(|r| {
            let snr = db_to_linear(r.snr_db);
            AsymptoticsRow {
                snr_db: r.snr_db,
                se_per_user: r.se_mean / k as f64,
                se_large_array: se_massive_mimo(m, n_r, snr),
                se_low_snr: se_low_snr(m, n_r, k, snr),
                orthogonality_defect: defect,
            }
        })
        .collect()
}
