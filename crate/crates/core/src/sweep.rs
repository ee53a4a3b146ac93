//! Parameter sweeps over detuning, drive strength, cooperativity and γ.
//!
//! Points that share (γ, drive, detuning) share one lazily filled response
//! table, so a list of cooperativities costs little more than the largest
//! one. Groups run in parallel; rows come back in config order.

use rayon::prelude::*;

use crate::atom_model::{build_basis, dipole_matrices, AtomModel, AtomicConstants, DriveParams, LowerLevelDecay};
use crate::error::{Error, Result};
use crate::propagate::{
    min_max_noise, power_from_rabi, propagate_with_table, quadrature_noise, rabi_from_power, to_db,
    FieldCovariance, MediumParams, ResponseTable, CALIBRATION_CROSS_SECTION_CM2, DEFAULT_LATTICE_STEP,
    DEFAULT_SLICES, MAX_SLICE_DEVIATION,
};

/// Drive strength of one sweep axis entry.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DriveSetting {
    /// Rabi frequency in units of Γ.
    Rabi(f64),
    /// Beam power in mW, converted with the configured cross-section.
    PowerMw(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub detunings_mhz: Vec<f64>,
    pub drives: Vec<DriveSetting>,
    pub cooperativities: Vec<f64>,
    /// Units of Γ.
    pub gammas: Vec<f64>,
    pub omega_analysis_mhz: f64,
    /// Zeeman scale in units of Γ.
    pub b_field: f64,
    pub n_slices: usize,
    pub cross_section_cm2: f64,
    pub lattice_step: f64,
    pub lower_level: LowerLevelDecay,
    pub constants: AtomicConstants,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            detunings_mhz: Vec::new(),
            drives: Vec::new(),
            cooperativities: Vec::new(),
            gammas: Vec::new(),
            omega_analysis_mhz: 1.4,
            b_field: 0.0,
            n_slices: DEFAULT_SLICES,
            cross_section_cm2: CALIBRATION_CROSS_SECTION_CM2,
            lattice_step: DEFAULT_LATTICE_STEP,
            lower_level: LowerLevelDecay::default(),
            constants: AtomicConstants::default(),
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        fn non_empty<T>(name: &'static str, v: &[T]) -> Result<()> {
            if v.is_empty() {
                return Err(Error::param(name, "must not be empty"));
            }
            Ok(())
        }
        non_empty("detunings", &self.detunings_mhz)?;
        non_empty("powers_or_rabis", &self.drives)?;
        non_empty("cooperativities", &self.cooperativities)?;
        non_empty("gammas", &self.gammas)?;
        if self.detunings_mhz.iter().any(|d| !d.is_finite()) {
            return Err(Error::param("detunings", "must be finite"));
        }
        if self.detunings_mhz.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::param("detunings", "must be strictly increasing"));
        }
        for d in &self.drives {
            let v = match *d {
                DriveSetting::Rabi(r) => r,
                DriveSetting::PowerMw(p) => p,
            };
            if !v.is_finite() || v < 0.0 {
                return Err(Error::param("powers_or_rabis", format!("must be finite and >= 0, got {v}")));
            }
        }
        if self.cooperativities.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::param("cooperativities", "must be finite and >= 0"));
        }
        if self.gammas.iter().any(|g| !g.is_finite() || *g <= 0.0) {
            return Err(Error::param("gammas", "must be finite and > 0"));
        }
        if !self.omega_analysis_mhz.is_finite() || self.omega_analysis_mhz < 0.0 {
            return Err(Error::param("omega_analysis", "must be finite and >= 0"));
        }
        if !self.b_field.is_finite() {
            return Err(Error::param("b_field", "must be finite"));
        }
        if self.n_slices == 0 {
            return Err(Error::param("n_slices", "must be >= 1"));
        }
        if !(self.cross_section_cm2 > 0.0) || !self.cross_section_cm2.is_finite() {
            return Err(Error::param("cross_section_cm2", "must be finite and > 0"));
        }
        if !(self.lattice_step > 0.0) || self.lattice_step > 1.0 {
            return Err(Error::param("lattice_step", "must be in (0, 1]"));
        }
        self.constants.validate()
    }

    pub fn len(&self) -> usize {
        self.detunings_mhz.len() * self.drives.len() * self.cooperativities.len() * self.gammas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// (Rabi in Γ, power in mW) for a drive entry.
    pub fn resolve_drive(&self, drive: DriveSetting) -> Result<(f64, f64)> {
        let gn = self.constants.gamma_natural;
        match drive {
            DriveSetting::Rabi(r) => Ok((r, power_from_rabi(r, self.cross_section_cm2, gn)?)),
            DriveSetting::PowerMw(p) => Ok((rabi_from_power(p, self.cross_section_cm2, gn)?, p)),
        }
    }

    pub fn model(&self) -> Result<AtomModel> {
        let basis = build_basis();
        AtomModel::rb87_d1_with(&self.constants, &basis, &dipole_matrices(&basis), self.lower_level)
    }
}

/// One output row.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSpectrumPoint {
    pub detuning_mhz: f64,
    pub omega_mhz: f64,
    pub cooperativity: f64,
    pub gamma: f64,
    pub power_mw: f64,
    pub rabi: f64,
    pub v_min_db: f64,
    pub v_max_db: f64,
    pub theta_min: f64,
    pub error: Option<String>,
}

impl NoiseSpectrumPoint {
    pub fn contrast(&self) -> f64 {
        contrast(self.v_min_db, self.v_max_db)
    }
}

pub fn contrast(v_min_db: f64, v_max_db: f64) -> f64 {
    v_max_db - v_min_db
}

struct Group {
    gamma: f64,
    drive: DriveSetting,
    detuning_mhz: f64,
}

/// Runs the full grid. Rows are ordered γ, drive, C, detuning (outermost
/// first), so each (γ, drive, C) curve is a contiguous block.
pub fn run_sweep(config: &SweepConfig) -> Result<Vec<NoiseSpectrumPoint>> {
    config.validate()?;
    let model = config.model()?;
    let groups: Vec<Group> = config
        .gammas
        .iter()
        .flat_map(|&gamma| {
            config.drives.iter().flat_map(move |&drive| {
                config.detunings_mhz.iter().map(move |&detuning_mhz| Group { gamma, drive, detuning_mhz })
            })
        })
        .collect();
    let results: Vec<Vec<NoiseSpectrumPoint>> =
        groups.par_iter().map(|g| run_group(config, &model, g)).collect();

    let (nd, nc, nr) = (config.detunings_mhz.len(), config.cooperativities.len(), config.drives.len());
    let mut rows = Vec::with_capacity(config.len());
    for gi in 0..config.gammas.len() {
        for ri in 0..nr {
            for ci in 0..nc {
                for di in 0..nd {
                    rows.push(results[(gi * nr + ri) * nd + di][ci].clone());
                }
            }
        }
    }
    Ok(rows)
}

fn run_group(config: &SweepConfig, model: &AtomModel, g: &Group) -> Vec<NoiseSpectrumPoint> {
    let consts = &config.constants;
    let omega_mhz = config.omega_analysis_mhz;
    let blank = |c: f64, rabi: f64, power: f64, err: String| NoiseSpectrumPoint {
        detuning_mhz: g.detuning_mhz,
        omega_mhz,
        cooperativity: c,
        gamma: g.gamma,
        power_mw: power,
        rabi,
        v_min_db: f64::NAN,
        v_max_db: f64::NAN,
        theta_min: f64::NAN,
        error: Some(err),
    };
    let (rabi, power) = match config.resolve_drive(g.drive) {
        Ok(v) => v,
        Err(e) => return config.cooperativities.iter().map(|&c| blank(c, f64::NAN, f64::NAN, e.to_string())).collect(),
    };
    let drive = DriveParams {
        rabi,
        detuning: consts.mhz_to_gamma(g.detuning_mhz),
        zeeman_shift: config.b_field,
        analysis_freq: consts.mhz_to_gamma(omega_mhz),
    };
    let mut table = match ResponseTable::new(model, &drive, g.gamma, config.lattice_step) {
        Ok(t) => t,
        Err(e) => return config.cooperativities.iter().map(|&c| blank(c, rabi, power, e.to_string())).collect(),
    };
    config
        .cooperativities
        .iter()
        .map(|&c| {
            let medium = MediumParams { cooperativity: c, n_slices: config.n_slices, gamma: g.gamma };
            match propagate_with_table(&mut table, &medium, MAX_SLICE_DEVIATION) {
                Ok(r) => {
                    let e = min_max_noise(&r.covariance);
                    NoiseSpectrumPoint {
                        detuning_mhz: g.detuning_mhz,
                        omega_mhz,
                        cooperativity: c,
                        gamma: g.gamma,
                        power_mw: power,
                        rabi,
                        v_min_db: to_db(e.v_min),
                        v_max_db: to_db(e.v_max),
                        theta_min: e.theta_min,
                        error: None,
                    }
                }
                Err(e) => blank(c, rabi, power, e.to_string()),
            }
        })
        .collect()
}

/// Output covariance for the first point of a config (γ, drive and C taken
/// from the first list entries) at the given detuning.
pub fn single_point_covariance(config: &SweepConfig, detuning_mhz: f64) -> Result<FieldCovariance> {
    config.validate()?;
    let model = config.model()?;
    let (rabi, _) = config.resolve_drive(config.drives[0])?;
    let consts = &config.constants;
    let drive = DriveParams {
        rabi,
        detuning: consts.mhz_to_gamma(detuning_mhz),
        zeeman_shift: config.b_field,
        analysis_freq: consts.mhz_to_gamma(config.omega_analysis_mhz),
    };
    let gamma = config.gammas[0];
    let medium = MediumParams { cooperativity: config.cooperativities[0], n_slices: config.n_slices, gamma };
    if medium.cooperativity == 0.0 {
        return Ok(FieldCovariance::vacuum());
    }
    let mut table = ResponseTable::new(&model, &drive, gamma, config.lattice_step)?;
    Ok(propagate_with_table(&mut table, &medium, MAX_SLICE_DEVIATION)?.covariance)
}

/// V(θ) in dB at `points` evenly spaced angles covering [0, π].
pub fn quadrature_scan(v: &FieldCovariance, points: usize) -> Vec<(f64, f64)> {
    let points = points.max(2);
    (0..points)
        .map(|k| {
            let theta = std::f64::consts::PI * k as f64 / (points - 1) as f64;
            (theta, to_db(quadrature_noise(v, theta)))
        })
        .collect()
}
