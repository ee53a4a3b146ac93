//! Config files, output tables and run manifests for the command-line tool.
//!
//! Configs are TOML with the unit in every key name. Tables are CSV with
//! floats written in shortest round-trip form, so they parse back exactly.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::atom_model::{AtomicConstants, LowerLevelDecay};
use crate::error::{Error, Result};
use crate::propagate::{DEFAULT_LATTICE_STEP, DEFAULT_SLICES};
use crate::sweep::{
    quadrature_scan, run_sweep, single_point_covariance, DriveSetting, NoiseSpectrumPoint, SweepConfig,
};
use crate::trace_analysis::{calibrate, extract_extrema, Extrema, HomodyneTrace, ShotReference};

pub const SIMULATE_FILE: &str = "noise_vs_detuning.csv";
pub const QUADSWEEP_FILE: &str = "quadrature_sweep.csv";
pub const ANALYZE_FILE: &str = "trace_summary.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const OUT_DIR_ENV: &str = "PSR_NOISE_OUT_DIR";

pub const SIMULATE_COLUMNS: [&str; 10] = [
    "detuning_MHz",
    "omega_MHz",
    "C",
    "gamma_over_Gamma",
    "power_mW",
    "v_min_dB",
    "v_max_dB",
    "theta_min_rad",
    "contrast_dB",
    "error",
];

/// Physical constants as stored in the constants file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsFile {
    pub linewidth_mhz: f64,
    pub hyperfine_split_mhz: f64,
    pub wavelength_nm: f64,
    pub g_factor_ground: f64,
    pub g_factor_excited_1: f64,
    pub g_factor_excited_2: f64,
}

impl Default for ConstantsFile {
    fn default() -> Self {
        let c = AtomicConstants::default();
        ConstantsFile {
            linewidth_mhz: AtomicConstants::LINEWIDTH_MHZ,
            hyperfine_split_mhz: AtomicConstants::HYPERFINE_SPLIT_MHZ,
            wavelength_nm: 795.0,
            g_factor_ground: c.g_factors[0],
            g_factor_excited_1: c.g_factors[1],
            g_factor_excited_2: c.g_factors[2],
        }
    }
}

impl ConstantsFile {
    pub fn atomic(&self) -> Result<AtomicConstants> {
        for (path, v) in [
            ("constants.linewidth_mhz", self.linewidth_mhz),
            ("constants.hyperfine_split_mhz", self.hyperfine_split_mhz),
            ("constants.wavelength_nm", self.wavelength_nm),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(config_error(path, "must be finite and > 0"));
            }
        }
        Ok(AtomicConstants {
            gamma_natural: 2.0 * std::f64::consts::PI * self.linewidth_mhz * 1e6,
            hyperfine_split: self.hyperfine_split_mhz / self.linewidth_mhz,
            g_factors: [self.g_factor_ground, self.g_factor_excited_1, self.g_factor_excited_2],
        })
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    detuning: RawDetuning,
    #[serde(default)]
    drive: RawDrive,
    #[serde(default)]
    medium: RawMedium,
    #[serde(default)]
    analysis: RawAnalysis,
    #[serde(default)]
    numerics: RawNumerics,
    constants_file: Option<PathBuf>,
    constants: Option<ConstantsFile>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDetuning {
    values_mhz: Option<Vec<f64>>,
    start_mhz: Option<f64>,
    stop_mhz: Option<f64>,
    step_mhz: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDrive {
    rabi_gamma: Option<Vec<f64>>,
    power_mw: Option<Vec<f64>>,
    cross_section_cm2: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMedium {
    #[serde(default)]
    cooperativity: Vec<f64>,
    #[serde(default)]
    gamma_over_gamma: Vec<f64>,
    b_field_gamma: Option<f64>,
    n_slices: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAnalysis {
    omega_mhz: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNumerics {
    lattice_step: Option<f64>,
    lower_level: Option<String>,
}

fn config_error(path: &str, reason: impl Into<String>) -> Error {
    Error::Config { path: path.to_string(), reason: reason.into() }
}

/// Key in the config file that holds a [`SweepConfig`] field.
fn config_key(field: &str) -> &'static str {
    match field {
        "detunings" => "detuning",
        "powers_or_rabis" => "drive",
        "cooperativities" => "medium.cooperativity",
        "gammas" => "medium.gamma_over_gamma",
        "omega_analysis" => "analysis.omega_mhz",
        "b_field" => "medium.b_field_gamma",
        "n_slices" => "medium.n_slices",
        "cross_section_cm2" => "drive.cross_section_cm2",
        "lattice_step" => "numerics.lattice_step",
        _ => "constants",
    }
}

/// Parses a sweep config. `base` resolves a relative `constants_file`.
pub fn parse_config(text: &str, base: Option<&Path>) -> Result<(SweepConfig, ConstantsFile)> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let reason = e.message().to_string();
        config_error("<root>", match e.span() {
            Some(span) => format!("{reason} (at byte {})", span.start),
            None => reason,
        })
    })?;

    let constants = match (&raw.constants, &raw.constants_file) {
        (Some(_), Some(_)) => return Err(config_error("constants", "give either `constants` or `constants_file`")),
        (Some(c), None) => c.clone(),
        (None, Some(file)) => {
            let path = match base {
                Some(b) if file.is_relative() => b.join(file),
                _ => file.clone(),
            };
            read_constants(&path)?
        }
        (None, None) => ConstantsFile::default(),
    };

    let detunings = match (&raw.detuning.values_mhz, raw.detuning.start_mhz, raw.detuning.stop_mhz, raw.detuning.step_mhz)
    {
        (Some(v), None, None, None) => v.clone(),
        (None, Some(start), Some(stop), Some(step)) => detuning_range(start, stop, step)?,
        (None, None, None, None) => Vec::new(),
        _ => {
            return Err(config_error(
                "detuning",
                "give either `values_mhz` or all of `start_mhz`, `stop_mhz`, `step_mhz`",
            ))
        }
    };
    let drives = match (&raw.drive.rabi_gamma, &raw.drive.power_mw) {
        (Some(_), Some(_)) => return Err(config_error("drive", "give either `rabi_gamma` or `power_mw`")),
        (Some(r), None) => r.iter().map(|&v| DriveSetting::Rabi(v)).collect(),
        (None, Some(p)) => p.iter().map(|&v| DriveSetting::PowerMw(v)).collect(),
        (None, None) => Vec::new(),
    };
    let lower_level = match raw.numerics.lower_level.as_deref() {
        None | Some("reservoir") => LowerLevelDecay::Reservoir,
        Some("recycle") => LowerLevelDecay::Recycle,
        Some(other) => {
            return Err(config_error("numerics.lower_level", format!("expected `reservoir` or `recycle`, got `{other}`")))
        }
    };
    let defaults = SweepConfig::default();
    let config = SweepConfig {
        detunings_mhz: detunings,
        drives,
        cooperativities: raw.medium.cooperativity,
        gammas: raw.medium.gamma_over_gamma,
        omega_analysis_mhz: raw.analysis.omega_mhz.unwrap_or(defaults.omega_analysis_mhz),
        b_field: raw.medium.b_field_gamma.unwrap_or(0.0),
        n_slices: raw.medium.n_slices.unwrap_or(DEFAULT_SLICES),
        cross_section_cm2: raw.drive.cross_section_cm2.unwrap_or(defaults.cross_section_cm2),
        lattice_step: raw.numerics.lattice_step.unwrap_or(DEFAULT_LATTICE_STEP),
        lower_level,
        constants: constants.atomic()?,
    };
    validate_config(&config)?;
    Ok((config, constants))
}

/// Re-validates a (possibly edited) config, reporting config-file key paths.
pub fn validate_config(config: &SweepConfig) -> Result<()> {
    config.validate().map_err(|e| match e {
        Error::InvalidParameter { name, reason } => config_error(config_key(name), format!("`{name}` {reason}")),
        other => other,
    })
}

fn detuning_range(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !start.is_finite() || !stop.is_finite() {
        return Err(config_error("detuning.step_mhz", "need finite bounds and step > 0"));
    }
    if stop < start {
        return Err(config_error("detuning.stop_mhz", "must be >= start_mhz"));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    if n > 1_000_000 {
        return Err(config_error("detuning.step_mhz", "too many points"));
    }
    // start + k·step, not an accumulated sum, so the grid is exact at integers
    Ok((0..=n).map(|k| start + step * k as f64).collect())
}

pub fn read_config(path: &Path) -> Result<(SweepConfig, ConstantsFile)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, path.parent())
}

pub fn read_constants(path: &Path) -> Result<ConstantsFile> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| config_error("constants_file", format!("{}: {}", path.display(), e.message())))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub tool_version: String,
    pub timestamp: String,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn new(config_bytes: &[u8], outputs: Vec<PathBuf>) -> Self {
        RunManifest {
            config_hash: hash_bytes(config_bytes),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            outputs,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }
}

pub fn hash_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Shortest representation that parses back to the same f64.
fn num(v: f64) -> String {
    format!("{v:?}")
}

fn create(path: &Path) -> Result<csv::Writer<fs::File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

pub fn write_noise_table(path: &Path, rows: &[NoiseSpectrumPoint]) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(SIMULATE_COLUMNS)?;
    for r in rows {
        w.write_record([
            num(r.detuning_mhz),
            num(r.omega_mhz),
            num(r.cooperativity),
            num(r.gamma),
            num(r.power_mw),
            num(r.v_min_db),
            num(r.v_max_db),
            num(r.theta_min),
            num(r.contrast()),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads back a table written by [`write_noise_table`].
pub fn read_noise_table(path: &Path) -> Result<Vec<NoiseSpectrumPoint>> {
    let mut r = csv::Reader::from_path(path)?;
    if r.headers()?.iter().ne(SIMULATE_COLUMNS) {
        return Err(Error::TraceFormat(format!("{}: unexpected header", path.display())));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let f = |i: usize| -> Result<f64> {
            rec[i].parse().map_err(|_| Error::TraceFormat(format!("column {} is not a number: {}", SIMULATE_COLUMNS[i], &rec[i])))
        };
        let power = f(4)?;
        let error = if rec[9].is_empty() { None } else { Some(rec[9].to_string()) };
        rows.push(NoiseSpectrumPoint {
            detuning_mhz: f(0)?,
            omega_mhz: f(1)?,
            cooperativity: f(2)?,
            gamma: f(3)?,
            power_mw: power,
            rabi: f64::NAN,
            v_min_db: f(5)?,
            v_max_db: f(6)?,
            theta_min: f(7)?,
            error,
        });
    }
    Ok(rows)
}

/// Directory for outputs: the flag, else the environment, else `out`.
pub fn resolve_out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("out"))
}

pub struct SimulateOutput {
    pub table: PathBuf,
    pub manifest: PathBuf,
    pub rows: Vec<NoiseSpectrumPoint>,
}

pub fn cmd_simulate(config_path: &Path, out_dir: &Path, slices: Option<usize>) -> Result<SimulateOutput> {
    let bytes = fs::read(config_path).map_err(|e| Error::io(config_path, e))?;
    let (mut config, _) = read_config(config_path)?;
    if let Some(n) = slices {
        config.n_slices = n;
        validate_config(&config)?;
    }
    let rows = run_sweep(&config)?;
    let table = out_dir.join(SIMULATE_FILE);
    write_noise_table(&table, &rows)?;
    let manifest = out_dir.join(MANIFEST_FILE);
    RunManifest::new(&bytes, vec![table.clone()]).write(&manifest)?;
    Ok(SimulateOutput { table, manifest, rows })
}

pub fn cmd_quadsweep(
    config_path: &Path,
    detuning_mhz: f64,
    points: usize,
    out_dir: &Path,
    slices: Option<usize>,
) -> Result<PathBuf> {
    let bytes = fs::read(config_path).map_err(|e| Error::io(config_path, e))?;
    let (mut config, _) = read_config(config_path)?;
    if let Some(n) = slices {
        config.n_slices = n;
    }
    if !detuning_mhz.is_finite() {
        return Err(config_error("detuning", "must be finite"));
    }
    // only the first entry of each list is used
    config.detunings_mhz = vec![detuning_mhz];
    validate_config(&config)?;
    let v = single_point_covariance(&config, detuning_mhz)?;
    let table = out_dir.join(QUADSWEEP_FILE);
    let mut w = create(&table)?;
    w.write_record(["theta_rad", "v_dB"])?;
    for (theta, db) in quadrature_scan(&v, points) {
        w.write_record([num(theta), num(db)])?;
    }
    w.flush().map_err(|e| Error::io(&table, e))?;
    let mut hashed = bytes;
    hashed.extend_from_slice(format!("\ndetuning_mhz={}\npoints={points}\n", num(detuning_mhz)).as_bytes());
    RunManifest::new(&hashed, vec![table.clone()]).write(&out_dir.join(MANIFEST_FILE))?;
    Ok(table)
}

/// One row of the analysis summary.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceSummary {
    pub file: PathBuf,
    pub detuning_mhz: Option<f64>,
    pub result: std::result::Result<Extrema, String>,
}

pub fn analyze_traces(trace_dir: &Path, shot_path: &Path) -> Result<Vec<TraceSummary>> {
    let shot = ShotReference::read(shot_path)?;
    let shot_canon = fs::canonicalize(shot_path).ok();
    let mut files: Vec<PathBuf> = fs::read_dir(trace_dir)
        .map_err(|e| Error::io(trace_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("csv" | "tsv" | "txt")))
        .filter(|p| fs::canonicalize(p).ok() != shot_canon)
        .collect();
    files.sort();
    Ok(files
        .par_iter()
        .map(|file| {
            let parsed = HomodyneTrace::read(file);
            let detuning_mhz = parsed.as_ref().ok().and_then(|t| t.detuning_mhz);
            let result = parsed
                .and_then(|t| calibrate(&t, &shot))
                .and_then(|c| extract_extrema(&c))
                .map_err(|e| e.to_string());
            TraceSummary { file: file.clone(), detuning_mhz, result }
        })
        .collect())
}

pub const ANALYZE_COLUMNS: [&str; 9] =
    ["detuning_MHz", "min_dB", "max_dB", "contrast_dB", "fit_rms", "raw_min_dB", "raw_max_dB", "flag", "file"];

pub fn cmd_analyze(trace_dir: &Path, shot_path: &Path, out_dir: &Path) -> Result<(PathBuf, Vec<TraceSummary>)> {
    let summary = analyze_traces(trace_dir, shot_path)?;
    let table = out_dir.join(ANALYZE_FILE);
    let mut w = create(&table)?;
    w.write_record(ANALYZE_COLUMNS)?;
    let mut hashed: BTreeMap<String, String> = BTreeMap::new();
    hashed.insert("shot".into(), hash_bytes(&fs::read(shot_path).map_err(|e| Error::io(shot_path, e))?));
    for s in &summary {
        let name = s.file.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        if let Ok(bytes) = fs::read(&s.file) {
            hashed.insert(name.clone(), hash_bytes(&bytes));
        }
        let det = s.detuning_mhz.map(num).unwrap_or_default();
        let record = match &s.result {
            Ok(e) => {
                let mut flags = Vec::new();
                if e.fallback {
                    flags.push("fit_failed_raw_extrema");
                }
                if e.heisenberg_warning {
                    flags.push("below_uncertainty_bound");
                }
                [
                    det,
                    num(e.min_db),
                    num(e.max_db),
                    num(e.contrast_db()),
                    e.fit.map(|f| num(f.rms)).unwrap_or_default(),
                    num(e.raw_min_db),
                    num(e.raw_max_db),
                    flags.join(";"),
                    name,
                ]
            }
            Err(msg) => [det, String::new(), String::new(), String::new(), String::new(), String::new(), String::new(), format!("error: {msg}"), name],
        };
        w.write_record(record)?;
    }
    w.flush().map_err(|e| Error::io(&table, e))?;
    let mut digest_input = Vec::new();
    for (k, v) in &hashed {
        writeln!(digest_input, "{k} {v}").expect("writing to a vec");
    }
    RunManifest::new(&digest_input, vec![table.clone()]).write(&out_dir.join(MANIFEST_FILE))?;
    Ok((table, summary))
}

/// Constants as `name,value,unit` lines.
pub fn constants_table(c: &ConstantsFile) -> Result<String> {
    let atomic = c.atomic()?;
    let rows = [
        ("linewidth", num(c.linewidth_mhz), "MHz"),
        ("gamma_natural", num(atomic.gamma_natural), "rad/s"),
        ("hyperfine_split", num(c.hyperfine_split_mhz), "MHz"),
        ("hyperfine_split", num(atomic.hyperfine_split), "Gamma"),
        ("wavelength", num(c.wavelength_nm), "nm"),
        ("g_factor_ground", num(c.g_factor_ground), ""),
        ("g_factor_excited_1", num(c.g_factor_excited_1), ""),
        ("g_factor_excited_2", num(c.g_factor_excited_2), ""),
        ("default_analysis_frequency", num(SweepConfig::default().omega_analysis_mhz), "MHz"),
    ];
    let mut out = String::from("name,value,unit\n");
    for (name, value, unit) in rows {
        out.push_str(&format!("{name},{value},{unit}\n"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG2_LIKE: &str = r#"
[detuning]
start_mhz = -100.0
stop_mhz = 100.0
step_mhz = 50.0

[drive]
rabi_gamma = [30.0]

[medium]
cooperativity = [100.0, 900.0, 1700.0]
gamma_over_gamma = [0.1, 0.01, 0.001, 0.0001]
b_field_gamma = 0.0
"#;

    #[test]
    fn parses_grid_config() {
        let (c, k) = parse_config(FIG2_LIKE, None).unwrap();
        assert_eq!(c.detunings_mhz, vec![-100.0, -50.0, 0.0, 50.0, 100.0]);
        assert_eq!(c.cooperativities.len() * c.gammas.len(), 12);
        assert_eq!(c.omega_analysis_mhz, 1.4);
        assert_eq!(k, ConstantsFile::default());
        assert_eq!(c.constants, AtomicConstants::default());
    }

    #[test]
    fn empty_detunings_name_the_field() {
        let text = FIG2_LIKE.replace("start_mhz = -100.0\nstop_mhz = 100.0\nstep_mhz = 50.0", "values_mhz = []");
        let err = parse_config(&text, None).unwrap_err().to_string();
        assert!(err.contains("detunings"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = parse_config("[medium]\ncooperativty = [1.0]\n", None).unwrap_err().to_string();
        assert!(err.contains("cooperativty"), "{err}");
    }

    #[test]
    fn conflicting_drive_keys_are_rejected() {
        let text = FIG2_LIKE.replace("rabi_gamma = [30.0]", "rabi_gamma = [30.0]\npower_mw = [10.0]");
        let err = parse_config(&text, None).unwrap_err().to_string();
        assert!(err.contains("drive"), "{err}");
    }

    #[test]
    fn float_formatting_round_trips() {
        for v in [0.1, 1.0 / 3.0, -1e-300, 6.02214076e23, f64::MIN_POSITIVE, 123456789.123456789] {
            assert_eq!(num(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }

    #[test]
    fn out_dir_flag_wins_over_default() {
        assert_eq!(resolve_out_dir(Some(PathBuf::from("x"))), PathBuf::from("x"));
    }

    #[test]
    fn constants_table_lists_the_wavelength() {
        let t = constants_table(&ConstantsFile::default()).unwrap();
        assert!(t.contains("wavelength,795.0,nm"));
        assert!(t.contains("hyperfine_split,815.0,MHz"));
    }
}
