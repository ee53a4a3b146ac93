//! The 13-state Zeeman model of the 87Rb D1 line (F_g = 2 -> F_e = 1, 2).
//!
//! Everything here is in units of the natural linewidth Γ. The model is a
//! plain bag of matrices so that the solver modules can also run reduced
//! level schemes (the two-level oracles in the tests use this).

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::angmom::{dipole_element, AngularQuantum, HalfInt};
use crate::error::{Error, Result};
use crate::liouvillian::Dissipation;

pub type C64 = Complex64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Level {
    G2,
    E1,
    E2,
}

impl Level {
    pub fn f(self) -> i32 {
        match self {
            Level::G2 | Level::E2 => 2,
            Level::E1 => 1,
        }
    }

    pub fn is_excited(self) -> bool {
        !matches!(self, Level::G2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ZeemanState {
    pub level: Level,
    pub m: i32,
}

/// Ordered basis: G2 m=-2..2, E1 m=-1..1, E2 m=-2..2.
#[derive(Clone, Debug, PartialEq)]
pub struct ZeemanBasis {
    states: Vec<ZeemanState>,
}

impl ZeemanBasis {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[ZeemanState] {
        &self.states
    }

    pub fn index(&self, level: Level, m: i32) -> Option<usize> {
        self.states.iter().position(|s| s.level == level && s.m == m)
    }

    pub fn ground(&self) -> impl Iterator<Item = usize> + '_ {
        self.states.iter().enumerate().filter(|(_, s)| !s.level.is_excited()).map(|(i, _)| i)
    }

    pub fn excited(&self) -> impl Iterator<Item = usize> + '_ {
        self.states.iter().enumerate().filter(|(_, s)| s.level.is_excited()).map(|(i, _)| i)
    }
}

pub fn build_basis() -> ZeemanBasis {
    let states = [Level::G2, Level::E1, Level::E2]
        .into_iter()
        .flat_map(|level| {
            let f = level.f();
            (-f..=f).map(move |m| ZeemanState { level, m })
        })
        .collect();
    ZeemanBasis { states }
}

/// Drive settings, all in units of Γ.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DriveParams {
    /// Rabi frequency of the x-polarized drive.
    pub rabi: f64,
    /// Laser detuning from the F_g=2 -> F_e=1 resonance (positive = blue).
    pub detuning: f64,
    /// Linear Zeeman scale μ_B B / ħΓ; multiplied by g_F m per sublevel.
    pub zeeman_shift: f64,
    /// Sideband (analysis) frequency of the noise spectrum.
    pub analysis_freq: f64,
}

impl DriveParams {
    pub fn validate(&self) -> Result<()> {
        if !self.rabi.is_finite() || self.rabi < 0.0 {
            return Err(Error::param("rabi", format!("must be finite and >= 0, got {}", self.rabi)));
        }
        if !self.detuning.is_finite() {
            return Err(Error::param("detuning", "must be finite"));
        }
        if !self.zeeman_shift.is_finite() {
            return Err(Error::param("zeeman_shift", "must be finite"));
        }
        if !self.analysis_freq.is_finite() || self.analysis_freq < 0.0 {
            return Err(Error::param("analysis_freq", "must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Natural linewidth and excited-state hyperfine splitting.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AtomicConstants {
    /// Γ in rad/s.
    pub gamma_natural: f64,
    /// F_e=1 to F_e=2 separation in units of Γ.
    pub hyperfine_split: f64,
    /// Landé g_F for G2, E1, E2.
    pub g_factors: [f64; 3],
}

impl AtomicConstants {
    pub const LINEWIDTH_MHZ: f64 = 6.0;
    pub const HYPERFINE_SPLIT_MHZ: f64 = 815.0;

    pub fn linewidth_mhz(&self) -> f64 {
        self.gamma_natural / (2.0 * PI * 1e6)
    }

    /// Converts a cyclic frequency in MHz to units of Γ.
    pub fn mhz_to_gamma(&self, mhz: f64) -> f64 {
        mhz / self.linewidth_mhz()
    }

    pub fn gamma_to_mhz(&self, value: f64) -> f64 {
        value * self.linewidth_mhz()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_natural > 0.0) {
            return Err(Error::param("gamma_natural", "must be > 0"));
        }
        if !(self.hyperfine_split > 0.0) {
            return Err(Error::param("hyperfine_split", "must be > 0"));
        }
        Ok(())
    }

    fn g_factor(&self, level: Level) -> f64 {
        match level {
            Level::G2 => self.g_factors[0],
            Level::E1 => self.g_factors[1],
            Level::E2 => self.g_factors[2],
        }
    }
}

impl Default for AtomicConstants {
    fn default() -> Self {
        AtomicConstants {
            gamma_natural: 2.0 * PI * Self::LINEWIDTH_MHZ * 1e6,
            hyperfine_split: Self::HYPERFINE_SPLIT_MHZ / Self::LINEWIDTH_MHZ,
            g_factors: [0.5, -1.0 / 6.0, 1.0 / 6.0],
        }
    }
}

/// Spherical components D_q (q = -1, 0, +1) of the raising part of the
/// dipole operator: `D_q[(e, g)]` couples ground column g to excited row e.
#[derive(Clone, Debug, PartialEq)]
pub struct DipoleMatrices {
    q: [DMatrix<f64>; 3],
}

impl DipoleMatrices {
    pub fn new(minus: DMatrix<f64>, pi: DMatrix<f64>, plus: DMatrix<f64>) -> Self {
        DipoleMatrices { q: [minus, pi, plus] }
    }

    pub fn get(&self, q: i32) -> &DMatrix<f64> {
        &self.q[(q + 1) as usize]
    }

    pub fn dim(&self) -> usize {
        self.q[0].nrows()
    }

    /// Raising operator for light polarized along x.
    pub fn linear_x(&self) -> DMatrix<C64> {
        ((self.get(-1) - self.get(1)) / 2f64.sqrt()).map(C64::from)
    }

    /// Raising operator for light polarized along y.
    pub fn linear_y(&self) -> DMatrix<C64> {
        ((self.get(-1) + self.get(1)) / 2f64.sqrt()).map(|v| C64::new(0.0, v))
    }

    /// Sum over q of D_q D_q^T (diagonal on the excited states).
    pub fn decay_sum(&self) -> DMatrix<f64> {
        self.q.iter().map(|d| d * d.transpose()).fold(DMatrix::zeros(self.dim(), self.dim()), |a, b| a + b)
    }

    /// All elements with flipped sign.
    pub fn negated(&self) -> Self {
        DipoleMatrices { q: self.q.clone().map(|d| -d) }
    }
}

/// Dipole matrices of the 13-state model, scaled so that the total decay
/// rate of every excited sublevel, into both ground hyperfine levels, is one.
/// Only the F_g=2 part is kept, so the excited-diagonal of `decay_sum` is the
/// branching ratio into F_g=2 (5/6 for F_e=1, 1/2 for F_e=2).
pub fn dipole_matrices(basis: &ZeemanBasis) -> DipoleMatrices {
    let n = basis.len();
    let scale = (crate::angmom::ELECTRON_J.doubled() as f64 + 1.0).sqrt();
    let mut q = [DMatrix::zeros(n, n), DMatrix::zeros(n, n), DMatrix::zeros(n, n)];
    for (e, se) in basis.states().iter().enumerate().filter(|(_, s)| s.level.is_excited()) {
        for (g, sg) in basis.states().iter().enumerate().filter(|(_, s)| !s.level.is_excited()) {
            let qq = se.m - sg.m;
            if qq.abs() > 1 {
                continue;
            }
            let ground = AngularQuantum::new(HalfInt::int(sg.level.f()), HalfInt::int(sg.m))
                .expect("basis states are valid");
            let excited = AngularQuantum::new(HalfInt::int(se.level.f()), HalfInt::int(se.m))
                .expect("basis states are valid");
            let value = dipole_element(ground, excited, qq).expect("selection rule holds");
            q[(qq + 1) as usize][(e, g)] = scale * value;
        }
    }
    let [minus, pi, plus] = q;
    DipoleMatrices::new(minus, pi, plus)
}

/// A driven multilevel atom: static level energies, drive and probe couplings
/// and its dissipative channels.
#[derive(Clone, Debug)]
pub struct AtomModel {
    /// Energies at zero detuning and zero field (Γ units).
    offsets: DVector<f64>,
    /// 1 for excited states, 0 for ground states.
    excited: DVector<f64>,
    /// g_F m per state.
    zeeman: DVector<f64>,
    drive: DMatrix<C64>,
    probe: DMatrix<C64>,
    dissipation: Dissipation,
}

impl AtomModel {
    /// The 87Rb D1 F_g=2 -> F_e=1,2 scheme with the given constants; decay
    /// into F_g=1 goes to a dark reservoir.
    pub fn rb87_d1(consts: &AtomicConstants) -> Result<Self> {
        let basis = build_basis();
        Self::rb87_d1_with(consts, &basis, &dipole_matrices(&basis), LowerLevelDecay::Reservoir)
    }

    /// As [`AtomModel::rb87_d1`] with caller-supplied dipole matrices and
    /// treatment of the F_g=1 branch.
    pub fn rb87_d1_with(
        consts: &AtomicConstants,
        basis: &ZeemanBasis,
        dipoles: &DipoleMatrices,
        lower: LowerLevelDecay,
    ) -> Result<Self> {
        consts.validate()?;
        let n = basis.len();
        let dim = n + lower.extra_states();
        let pad = |values: Vec<f64>| DVector::from_iterator(dim, values.into_iter().chain(std::iter::repeat(0.0)).take(dim));
        let offsets = pad(
            basis.states().iter().map(|s| if s.level == Level::E2 { consts.hyperfine_split } else { 0.0 }).collect(),
        );
        let excited = pad(basis.states().iter().map(|s| if s.level.is_excited() { 1.0 } else { 0.0 }).collect());
        let zeeman = pad(basis.states().iter().map(|s| consts.g_factor(s.level) * s.m as f64).collect());
        let grow = |m: DMatrix<C64>| {
            let mut out = DMatrix::zeros(dim, dim);
            out.view_mut((0, 0), (n, n)).copy_from(&m);
            out
        };
        Ok(AtomModel {
            offsets,
            excited,
            zeeman,
            drive: grow(dipoles.linear_x()),
            probe: grow(dipoles.linear_y()),
            dissipation: decay_channels(basis, dipoles, lower)?,
        })
    }

    /// A generic model. `drive` and `probe` are raising operators (excited
    /// rows, ground columns).
    pub fn custom(
        offsets: DVector<f64>,
        excited: DVector<f64>,
        zeeman: DVector<f64>,
        drive: DMatrix<C64>,
        probe: DMatrix<C64>,
        dissipation: Dissipation,
    ) -> Result<Self> {
        let n = offsets.len();
        if excited.len() != n || zeeman.len() != n || drive.shape() != (n, n) || probe.shape() != (n, n)
        {
            return Err(Error::param("model", "inconsistent dimensions"));
        }
        if dissipation.dim() != n {
            return Err(Error::param("model", "dissipation dimension does not match"));
        }
        Ok(AtomModel { offsets, excited, zeeman, drive, probe, dissipation })
    }

    /// F=0 -> F'=1 reduction: ground state 0, excited m=-1,0,+1 at 1,2,3,
    /// driven on the π line, probed on σ±, each excited state decaying to
    /// the ground state at unit rate.
    pub fn f0_f1_pi() -> Self {
        let n = 4;
        let raising = |e: usize| {
            let mut m = DMatrix::<C64>::zeros(n, n);
            m[(e, 0)] = C64::from(1.0);
            m
        };
        let drive = raising(2);
        let probe = (raising(1) + raising(3)) * C64::new(0.0, 1.0 / 2f64.sqrt());
        let jumps = (1..4).map(|e| raising(e).transpose()).collect();
        let mut refill = DMatrix::zeros(n, n);
        refill[(0, 0)] = C64::from(1.0);
        let dissipation = Dissipation::new(jumps, refill).expect("valid refill");
        AtomModel {
            offsets: DVector::zeros(n),
            excited: DVector::from_column_slice(&[0.0, 1.0, 1.0, 1.0]),
            zeeman: DVector::from_column_slice(&[0.0, -1.0, 0.0, 1.0]),
            drive,
            probe,
            dissipation,
        }
    }

    pub fn dim(&self) -> usize {
        self.offsets.len()
    }

    /// Detunings at which the drive is resonant with an excited level.
    pub fn resonances(&self) -> Vec<f64> {
        let mut out: Vec<f64> = (0..self.dim()).filter(|&i| self.excited[i] > 0.0).map(|i| self.offsets[i]).collect();
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    pub fn drive_coupling(&self) -> &DMatrix<C64> {
        &self.drive
    }

    pub fn probe_coupling(&self) -> &DMatrix<C64> {
        &self.probe
    }

    pub fn dissipation(&self) -> &Dissipation {
        &self.dissipation
    }

    /// Rotating-frame Hamiltonian for a real drive amplitude:
    /// diag(offset - detuning * excited + zeeman_shift * g_F m) - (Ω/2)(A_x + A_x†).
    pub fn hamiltonian(&self, drive: &DriveParams) -> DMatrix<C64> {
        let n = self.dim();
        let mut h = -(&self.drive + self.drive.adjoint()) * C64::from(drive.rabi / 2.0);
        for i in 0..n {
            h[(i, i)] += C64::from(
                self.offsets[i] - drive.detuning * self.excited[i] + drive.zeeman_shift * self.zeeman[i],
            );
        }
        h
    }
}

/// Rotating-frame Hamiltonian of the 13-state model (see [`AtomModel::hamiltonian`]).
pub fn hamiltonian(basis: &ZeemanBasis, drive: &DriveParams, consts: &AtomicConstants) -> Result<DMatrix<C64>> {
    drive.validate()?;
    let model = AtomModel::rb87_d1_with(consts, basis, &dipole_matrices(basis), LowerLevelDecay::Recycle)?;
    Ok(model.hamiltonian(drive))
}

/// What happens to atoms that decay into the F_g=1 level, which the light
/// does not address.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum LowerLevelDecay {
    /// They sit in one extra dark state until transit replaces them.
    #[default]
    Reservoir,
    /// They are returned at once, isotropically, to F_g=2.
    Recycle,
}

impl LowerLevelDecay {
    fn extra_states(self) -> usize {
        match self {
            LowerLevelDecay::Reservoir => 1,
            LowerLevelDecay::Recycle => 0,
        }
    }
}

/// Spontaneous emission channels: coherent decay into F_g=2 through the D_q,
/// plus the branch into F_g=1 handled as `lower` says. Transit refills F_g=2
/// isotropically.
pub fn decay_channels(basis: &ZeemanBasis, dipoles: &DipoleMatrices, lower: LowerLevelDecay) -> Result<Dissipation> {
    let n = basis.len();
    let dim = n + lower.extra_states();
    let grow = |m: DMatrix<f64>| {
        let mut out = DMatrix::<C64>::zeros(dim, dim);
        out.view_mut((0, 0), (n, n)).copy_from(&m.map(C64::from));
        out
    };
    let mut jumps: Vec<DMatrix<C64>> = (-1..=1).map(|q| grow(dipoles.get(q).transpose())).collect();
    let ground: Vec<usize> = basis.ground().collect();
    let branching = dipoles.decay_sum();
    for e in basis.excited() {
        let lost = 1.0 - branching[(e, e)];
        if lost <= 1e-14 {
            continue;
        }
        match lower {
            LowerLevelDecay::Reservoir => {
                let mut jump = DMatrix::zeros(dim, dim);
                jump[(n, e)] = C64::from(lost.sqrt());
                jumps.push(jump);
            }
            LowerLevelDecay::Recycle => {
                let amplitude = (lost / ground.len() as f64).sqrt();
                for &g in &ground {
                    let mut jump = DMatrix::zeros(dim, dim);
                    jump[(g, e)] = C64::from(amplitude);
                    jumps.push(jump);
                }
            }
        }
    }
    let mut refill = DMatrix::zeros(dim, dim);
    for &g in &ground {
        refill[(g, g)] = C64::from(1.0 / ground.len() as f64);
    }
    Dissipation::new(jumps, refill)
}
