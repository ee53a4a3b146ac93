//! Reduction of measured homodyne traces: noise power against an
//! uncalibrated phase-sweep coordinate, referred to a shot-noise level.
//!
//! The quadrature variance is sinusoidal in linear power, so the fit is
//! P(x) = a + b cos(2 s x + c) in SQL units with s free. For fixed s the
//! model is linear in (a, b cos c, b sin c); s itself is found by a scan,
//! a golden-section bracket and a few Gauss-Newton steps on all four
//! parameters.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};

use crate::error::{Error, Result};
pub use crate::propagate::to_db;

pub const MIN_SAMPLES: usize = 16;

/// Relative tolerance for matching rbw and center frequency.
const METADATA_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct HomodyneTrace {
    /// (sweep coordinate, noise power in dBm).
    samples: Vec<(f64, f64)>,
    pub rbw_hz: f64,
    pub center_freq_hz: f64,
    pub n_averages: u32,
    pub detuning_mhz: Option<f64>,
}

impl HomodyneTrace {
    pub fn new(samples: Vec<(f64, f64)>, rbw_hz: f64, center_freq_hz: f64, n_averages: u32) -> Result<Self> {
        if samples.len() < MIN_SAMPLES {
            return Err(Error::TooFewSamples(samples.len()));
        }
        if !(rbw_hz > 0.0) || !rbw_hz.is_finite() {
            return Err(Error::param("rbw", "must be finite and > 0"));
        }
        if !center_freq_hz.is_finite() {
            return Err(Error::param("center_freq", "must be finite"));
        }
        if samples.iter().any(|(x, p)| !x.is_finite() || !p.is_finite()) {
            return Err(Error::TraceFormat("non-finite sample".into()));
        }
        Ok(HomodyneTrace { samples, rbw_hz, center_freq_hz, n_averages, detuning_mhz: None })
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    /// Reads the delimited-text format: `#`-prefixed `key = value` metadata
    /// lines (rbw_hz, center_freq_hz, averages, detuning_mhz), one header
    /// line, then two columns (sweep coordinate, power in dBm), separated by
    /// commas or tabs.
    pub fn parse(text: &str) -> Result<Self> {
        let (meta, rows) = parse_delimited(text)?;
        let rbw = required(&meta, "rbw_hz")?;
        let center = required(&meta, "center_freq_hz")?;
        let averages = meta.get("averages").map(|v| *v as u32).unwrap_or(1);
        let mut trace = HomodyneTrace::new(rows, rbw, center, averages)?;
        trace.detuning_mhz = meta.get("detuning_mhz").copied();
        Ok(trace)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        HomodyneTrace::parse(&text)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShotReference {
    pub mean_dbm: f64,
    pub uncertainty_db: f64,
    pub rbw_hz: f64,
    pub center_freq_hz: f64,
}

impl ShotReference {
    pub fn new(mean_dbm: f64, uncertainty_db: f64, rbw_hz: f64, center_freq_hz: f64) -> Result<Self> {
        if !mean_dbm.is_finite() {
            return Err(Error::param("mean_dbm", "must be finite"));
        }
        if !(uncertainty_db >= 0.0) {
            return Err(Error::param("uncertainty_db", "must be >= 0"));
        }
        Ok(ShotReference { mean_dbm, uncertainty_db, rbw_hz, center_freq_hz })
    }

    /// Same file format as a trace. `mean_dbm` and `uncertainty_db` may be
    /// given as metadata; otherwise they are the mean (in linear power) and
    /// the standard deviation (in dB) of the samples.
    pub fn parse(text: &str) -> Result<Self> {
        let (meta, rows) = parse_delimited(text)?;
        let rbw = required(&meta, "rbw_hz")?;
        let center = required(&meta, "center_freq_hz")?;
        let mean = match meta.get("mean_dbm") {
            Some(&m) => m,
            None if rows.is_empty() => return Err(Error::TraceFormat("shot file has no samples and no mean_dbm".into())),
            None => {
                let lin = rows.iter().map(|(_, p)| from_db(*p)).sum::<f64>() / rows.len() as f64;
                to_db(lin)
            }
        };
        let uncertainty = match meta.get("uncertainty_db") {
            Some(&u) => u,
            None if rows.len() > 1 => {
                let m = rows.iter().map(|r| r.1).sum::<f64>() / rows.len() as f64;
                (rows.iter().map(|r| (r.1 - m).powi(2)).sum::<f64>() / (rows.len() - 1) as f64).sqrt()
            }
            None => 0.0,
        };
        ShotReference::new(mean, uncertainty, rbw, center)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ShotReference::parse(&text)
    }
}

/// Trace in dB relative to shot noise.
#[derive(Clone, Debug, PartialEq)]
pub struct CalibratedTrace {
    pub coords: Vec<f64>,
    pub db: Vec<f64>,
    /// Half-width of the calibration band, carried over from the shot reference.
    pub uncertainty_db: f64,
    pub detuning_mhz: Option<f64>,
}

impl CalibratedTrace {
    /// Builds a calibrated trace directly, e.g. from simulated data.
    pub fn new(coords: Vec<f64>, db: Vec<f64>, uncertainty_db: f64) -> Result<Self> {
        if coords.len() != db.len() {
            return Err(Error::TraceFormat("coordinate and value counts differ".into()));
        }
        if coords.len() < MIN_SAMPLES {
            return Err(Error::TooFewSamples(coords.len()));
        }
        Ok(CalibratedTrace { coords, db, uncertainty_db, detuning_mhz: None })
    }

    pub fn linear(&self) -> Vec<f64> {
        self.db.iter().map(|&v| from_db(v)).collect()
    }
}

pub fn calibrate(trace: &HomodyneTrace, shot: &ShotReference) -> Result<CalibratedTrace> {
    let close = |a: f64, b: f64| (a - b).abs() <= METADATA_TOLERANCE * a.abs().max(b.abs());
    if !close(trace.rbw_hz, shot.rbw_hz) {
        return Err(Error::MetadataMismatch(format!("rbw {} Hz vs {} Hz", trace.rbw_hz, shot.rbw_hz)));
    }
    if !close(trace.center_freq_hz, shot.center_freq_hz) {
        return Err(Error::MetadataMismatch(format!(
            "center frequency {} Hz vs {} Hz",
            trace.center_freq_hz, shot.center_freq_hz
        )));
    }
    Ok(CalibratedTrace {
        coords: trace.samples.iter().map(|s| s.0).collect(),
        db: trace.samples.iter().map(|s| s.1 - shot.mean_dbm).collect(),
        uncertainty_db: shot.uncertainty_db,
        detuning_mhz: trace.detuning_mhz,
    })
}

/// P(x) = a + b cos(2 s x + c), b ≥ 0, c in (-π, π].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SinusoidFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub s: f64,
    /// Root-mean-square residual in SQL units.
    pub rms: f64,
}

impl SinusoidFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.a + self.b * (2.0 * self.s * x + self.c).cos()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Extrema {
    pub min_db: f64,
    pub max_db: f64,
    pub fit: Option<SinusoidFit>,
    pub raw_min_db: f64,
    pub raw_max_db: f64,
    /// The fit failed and min/max are the raw sample extrema.
    pub fallback: bool,
    /// min·max below the uncertainty bound (in linear units).
    pub heisenberg_warning: bool,
}

impl Extrema {
    pub fn contrast_db(&self) -> f64 {
        self.max_db - self.min_db
    }
}

pub fn extract_extrema(trace: &CalibratedTrace) -> Result<Extrema> {
    if trace.coords.len() < MIN_SAMPLES {
        return Err(Error::TooFewSamples(trace.coords.len()));
    }
    let raw_min_db = trace.db.iter().copied().fold(f64::INFINITY, f64::min);
    let raw_max_db = trace.db.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let p = trace.linear();
    let fit = fit_sinusoid(&trace.coords, &p).filter(|f| f.a - f.b > 0.0 && f.a.is_finite() && f.b.is_finite());
    let (min_db, max_db, fallback) = match &fit {
        Some(f) => (to_db(f.a - f.b), to_db(f.a + f.b), false),
        None => (raw_min_db, raw_max_db, true),
    };
    Ok(Extrema {
        min_db,
        max_db,
        fit,
        raw_min_db,
        raw_max_db,
        fallback,
        heisenberg_warning: min_db + max_db < 0.0,
    })
}

/// Least-squares sinusoid; `None` when the data cannot constrain it.
pub fn fit_sinusoid(x: &[f64], p: &[f64]) -> Option<SinusoidFit> {
    let n = x.len();
    if n < 4 || n != p.len() {
        return None;
    }
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if !(span > 0.0) {
        return None;
    }
    let x0 = 0.5 * (lo + hi);
    let xc: Vec<f64> = x.iter().map(|v| v - x0).collect();

    // One period of cos(2 s x) is π/s; the trace must hold at least one and
    // be sampled at better than Nyquist.
    let s_lo = PI / span;
    let s_hi = PI * (n - 1) as f64 / (2.0 * span);
    if s_hi <= s_lo {
        return None;
    }
    // phase across the trace moves by < 0.1 rad between scan points
    let ds = 0.05 / span;
    let count = ((s_hi - s_lo) / ds).ceil() as usize + 1;
    let scan: Vec<(f64, f64)> = (0..count)
        .map(|k| {
            let s = (s_lo + k as f64 * ds).min(s_hi);
            (s, linear_fit(&xc, p, s).map(|f| f.1).unwrap_or(f64::INFINITY))
        })
        .collect();
    let best = (0..scan.len()).min_by(|&i, &j| scan[i].1.total_cmp(&scan[j].1))?;
    if !scan[best].1.is_finite() {
        return None;
    }
    let a = scan[best.saturating_sub(1)].0;
    let b = scan[(best + 1).min(scan.len() - 1)].0;
    let s = golden_section(|s| linear_fit(&xc, p, s).map(|f| f.1).unwrap_or(f64::INFINITY), a, b);

    let (lin, _) = linear_fit(&xc, p, s)?;
    let params = gauss_newton(&xc, p, Vector4::new(lin[0], lin[1], lin[2], s));
    let [a0, u, v, s] = [params[0], params[1], params[2], params[3]];
    let b = u.hypot(v);
    // u cos φ + v sin φ = b cos(φ - atan2(v, u)); shift the phase back to x
    let mut c = -v.atan2(u) - 2.0 * s * x0;
    c = c.rem_euclid(2.0 * PI);
    if c > PI {
        c -= 2.0 * PI;
    }
    let fit = SinusoidFit { a: a0, b, c, s, rms: 0.0 };
    let ssr: f64 = x.iter().zip(p).map(|(&xi, &pi)| (fit.eval(xi) - pi).powi(2)).sum();
    Some(SinusoidFit { rms: (ssr / n as f64).sqrt(), ..fit })
}

/// Linear least squares in (a, u, v) for a + u cos(2 s x) + v sin(2 s x).
fn linear_fit(x: &[f64], p: &[f64], s: f64) -> Option<(Vector3<f64>, f64)> {
    let mut ata = Matrix3::zeros();
    let mut atb = Vector3::zeros();
    for (&xi, &pi) in x.iter().zip(p) {
        let (sn, cs) = (2.0 * s * xi).sin_cos();
        let row = Vector3::new(1.0, cs, sn);
        ata += row * row.transpose();
        atb += row * pi;
    }
    let sol = ata.cholesky()?.solve(&atb);
    let ssr = x
        .iter()
        .zip(p)
        .map(|(&xi, &pi)| {
            let (sn, cs) = (2.0 * s * xi).sin_cos();
            (sol[0] + sol[1] * cs + sol[2] * sn - pi).powi(2)
        })
        .sum();
    Some((sol, ssr))
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-15 * (a.abs() + b.abs()) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Refines (a, u, v, s); keeps the start if a step fails to reduce the residual.
fn gauss_newton(x: &[f64], p: &[f64], start: Vector4<f64>) -> Vector4<f64> {
    let ssr = |q: &Vector4<f64>| -> f64 {
        x.iter()
            .zip(p)
            .map(|(&xi, &pi)| {
                let (sn, cs) = (2.0 * q[3] * xi).sin_cos();
                (q[0] + q[1] * cs + q[2] * sn - pi).powi(2)
            })
            .sum()
    };
    let mut q = start;
    let mut current = ssr(&q);
    for _ in 0..20 {
        let mut jtj = Matrix4::zeros();
        let mut jtr = Vector4::zeros();
        for (&xi, &pi) in x.iter().zip(p) {
            let (sn, cs) = (2.0 * q[3] * xi).sin_cos();
            let r = q[0] + q[1] * cs + q[2] * sn - pi;
            let j = Vector4::new(1.0, cs, sn, 2.0 * xi * (q[2] * cs - q[1] * sn));
            jtj += j * j.transpose();
            jtr += j * r;
        }
        let Some(chol) = jtj.cholesky() else { break };
        let next = q - chol.solve(&jtr);
        let value = ssr(&next);
        if !(value < current) {
            break;
        }
        let done = (next - q).norm() <= 1e-15 * q.norm();
        q = next;
        current = value;
        if done {
            break;
        }
    }
    q
}

pub fn from_db(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

type Metadata = BTreeMap<String, f64>;

fn required(meta: &Metadata, key: &str) -> Result<f64> {
    meta.get(key).copied().ok_or_else(|| Error::TraceFormat(format!("missing metadata `{key}`")))
}

fn parse_delimited(text: &str) -> Result<(Metadata, Vec<(f64, f64)>)> {
    let mut meta = Metadata::new();
    let mut body = String::new();
    for line in text.lines() {
        let t = line.trim();
        if let Some(rest) = t.strip_prefix('#') {
            if let Some((k, v)) = rest.split_once(['=', ':']) {
                let key = k.trim().to_ascii_lowercase();
                let value = v.trim().parse::<f64>().map_err(|_| {
                    Error::TraceFormat(format!("metadata `{key}` is not a number: {}", v.trim()))
                })?;
                meta.insert(key, value);
            }
        } else if !t.is_empty() {
            body.push_str(t);
            body.push('\n');
        }
    }
    let delimiter = if body.lines().next().is_some_and(|h| h.contains('\t')) { b'\t' } else { b',' };
    let mut reader = csv::ReaderBuilder::new().delimiter(delimiter).trim(csv::Trim::All).from_reader(body.as_bytes());
    if reader.headers()?.len() < 2 {
        return Err(Error::TraceFormat("expected two columns: sweep coordinate and power".into()));
    }
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let field = |i: usize| -> Result<f64> {
            record
                .get(i)
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| Error::TraceFormat(format!("data row {} column {} is not a number", line + 1, i + 1)))
        };
        rows.push((field(0)?, field(1)?));
    }
    Ok((meta, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn synthetic(a: f64, b: f64, c: f64, s: f64, n: usize, span: f64, offset: f64) -> CalibratedTrace {
        let coords: Vec<f64> = (0..n).map(|k| offset + span * k as f64 / n as f64).collect();
        let db = coords.iter().map(|&x| to_db(a + b * (2.0 * s * x + c).cos())).collect();
        CalibratedTrace::new(coords, db, 0.0).unwrap()
    }

    #[test]
    fn recovers_textbook_sinusoid() {
        let t = synthetic(1.0, 0.1, 0.0, 1.0, 100, 2.0 * PI, 0.0);
        let e = extract_extrema(&t).unwrap();
        assert!(!e.fallback);
        assert_abs_diff_eq!(e.min_db, 10.0 * 0.9f64.log10(), epsilon = 1e-6);
        assert_abs_diff_eq!(e.max_db, 10.0 * 1.1f64.log10(), epsilon = 1e-6);
        assert_abs_diff_eq!(e.min_db, -0.4576, epsilon = 1e-4);
        assert_abs_diff_eq!(e.max_db, 0.4139, epsilon = 1e-4);
        let f = e.fit.unwrap();
        assert_abs_diff_eq!(f.s, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(f.c, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn flat_trace_has_no_contrast() {
        let t = CalibratedTrace::new((0..40).map(|k| k as f64).collect(), vec![0.3; 40], 0.0).unwrap();
        let e = extract_extrema(&t).unwrap();
        assert_abs_diff_eq!(e.min_db, 0.3, epsilon = 1e-9);
        assert_abs_diff_eq!(e.max_db, 0.3, epsilon = 1e-9);
        assert!(e.fit.unwrap().b < 1e-9);
    }

    #[test]
    fn calibration_subtracts_shot_level() {
        let samples: Vec<(f64, f64)> = (0..20).map(|k| (k as f64, -80.0)).collect();
        let trace = HomodyneTrace::new(samples, 1e5, 1.4e6, 512).unwrap();
        let shot = ShotReference::new(-80.0, 0.2, 1e5, 1.4e6).unwrap();
        let cal = calibrate(&trace, &shot).unwrap();
        assert!(cal.db.iter().all(|&v| v == 0.0));
        assert_eq!(cal.uncertainty_db, 0.2);
        assert_abs_diff_eq!(from_db(3.0103), 2.0, epsilon = 1e-4);
    }

    #[test]
    fn metadata_mismatch_is_rejected() {
        let samples: Vec<(f64, f64)> = (0..20).map(|k| (k as f64, -80.0)).collect();
        let trace = HomodyneTrace::new(samples, 1e5, 1.4e6, 512).unwrap();
        let shot = ShotReference::new(-80.0, 0.2, 3e5, 1.4e6).unwrap();
        assert!(matches!(calibrate(&trace, &shot), Err(Error::MetadataMismatch(_))));
        let shot = ShotReference::new(-80.0, 0.2, 1e5, 2.0e6).unwrap();
        assert!(matches!(calibrate(&trace, &shot), Err(Error::MetadataMismatch(_))));
    }

    #[test]
    fn short_traces_are_rejected() {
        let samples: Vec<(f64, f64)> = (0..15).map(|k| (k as f64, -80.0)).collect();
        assert!(matches!(HomodyneTrace::new(samples, 1e5, 1.4e6, 1), Err(Error::TooFewSamples(15))));
    }

    #[test]
    fn parses_tab_and_comma_files() {
        let mut text = String::from("# rbw_hz = 100000\n# center_freq_hz = 1.4e6\n# averages = 512\n# detuning_mhz = -20\nsweep,noise_dbm\n");
        for k in 0..20 {
            text.push_str(&format!("{k},{}\n", -80.0 + 0.1 * k as f64));
        }
        let t = HomodyneTrace::parse(&text).unwrap();
        assert_eq!(t.samples().len(), 20);
        assert_eq!(t.n_averages, 512);
        assert_eq!(t.detuning_mhz, Some(-20.0));
        let tabbed = text.replace(',', "\t");
        assert_eq!(HomodyneTrace::parse(&tabbed).unwrap(), t);
        assert!(HomodyneTrace::parse("sweep,noise\n1,2\n").is_err());
    }

    #[test]
    fn shot_file_statistics() {
        let text = "# rbw_hz = 1e5\n# center_freq_hz = 1.4e6\nsweep,noise_dbm\n0,-80\n1,-80\n";
        let s = ShotReference::parse(text).unwrap();
        assert_abs_diff_eq!(s.mean_dbm, -80.0, epsilon = 1e-12);
        assert_eq!(s.uncertainty_db, 0.0);
        let text = "# rbw_hz = 1e5\n# center_freq_hz = 1.4e6\n# mean_dbm = -81.5\n# uncertainty_db = 0.2\nsweep,noise_dbm\n";
        let s = ShotReference::parse(text).unwrap();
        assert_eq!((s.mean_dbm, s.uncertainty_db), (-81.5, 0.2));
    }

    #[test]
    fn sub_heisenberg_extrema_warn() {
        let t = synthetic(0.5, 0.1, 0.3, 1.0, 64, 2.0 * PI, 0.0);
        assert!(extract_extrema(&t).unwrap().heisenberg_warning);
        let t = synthetic(2.0, 1.0, 0.3, 1.0, 64, 2.0 * PI, 0.0);
        assert!(!extract_extrema(&t).unwrap().heisenberg_warning);
    }

    #[test]
    fn noisy_fit_falls_back_when_model_goes_negative() {
        // alternating samples cannot be fit below Nyquist
        let coords: Vec<f64> = (0..32).map(|k| k as f64).collect();
        let db: Vec<f64> = (0..32).map(|k| if k % 2 == 0 { 5.0 } else { -20.0 }).collect();
        let t = CalibratedTrace::new(coords, db, 0.0).unwrap();
        let e = extract_extrema(&t).unwrap();
        if e.fallback {
            assert_eq!((e.min_db, e.max_db), (-20.0, 5.0));
        }
        assert!(e.min_db <= e.max_db);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn fit_recovers_parameters(
            a in 0.5f64..3.0,
            frac in 0.0f64..0.9,
            c in -3.0f64..3.0,
            s in 0.3f64..2.0,
            periods in 1.2f64..5.0,
            offset in -10.0f64..10.0,
            n in 40usize..200,
        ) {
            let b = a * frac;
            let span = periods * PI / s;
            let t = synthetic(a, b, c, s, n, span, offset);
            let e = extract_extrema(&t).unwrap();
            prop_assert!(!e.fallback);
            prop_assert!((e.min_db - to_db(a - b)).abs() < 1e-6);
            prop_assert!((e.max_db - to_db(a + b)).abs() < 1e-6);
            prop_assert!(e.min_db <= e.max_db);
            for &v in &t.db {
                prop_assert!(e.min_db <= v + 1e-9);
            }
        }

        #[test]
        fn refit_is_idempotent(
            a in 0.5f64..3.0,
            frac in 0.05f64..0.9,
            c in -3.0f64..3.0,
            s in 0.3f64..2.0,
            n in 40usize..120,
        ) {
            let t = synthetic(a, a * frac, c, s, n, 3.0 * PI / s, 0.7);
            let f1 = extract_extrema(&t).unwrap().fit.unwrap();
            let again = synthetic(f1.a, f1.b, f1.c, f1.s, n, 3.0 * PI / s, 0.7);
            let f2 = extract_extrema(&again).unwrap().fit.unwrap();
            prop_assert!((f1.a - f2.a).abs() < 1e-9);
            prop_assert!((f1.b - f2.b).abs() < 1e-9);
            prop_assert!((f1.s - f2.s).abs() < 1e-9);
            let dc = (f1.c - f2.c).rem_euclid(2.0 * PI);
            prop_assert!(dc.min(2.0 * PI - dc) < 1e-9);
        }
    }
}
