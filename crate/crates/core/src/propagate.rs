//! Propagation of the drive and of the orthogonally polarized vacuum through
//! the sample.
//!
//! The drive is a classical x-polarized field whose complex amplitude obeys
//! dΩ/dC = 2i⟨A_x†⟩. The y-polarized sideband pair at ±ω is a two-mode
//! Gaussian channel: per unit cooperativity its quadratures q = (X, Y) obey
//! dq/dC = K q + noise, with K and the noise matrix N fixed by the local
//! atomic steady state. Quadratures are referred to the local drive phase.
//!
//! Because the local response depends only on |Ω|, it is tabulated lazily on
//! a lattice in ln|Ω| and reused for every cooperativity of a sweep.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix2, Matrix4};
use num_complex::Complex64;

use crate::atom_model::{AtomModel, DriveParams};
use crate::error::{Error, Result};
use crate::langevin::{resolvent_lu, twice_diffusion, DiffusionMatrix};
use crate::liouvillian::{
    add_coherent_sector, bar, build_drift, finish_density, null_dimension, solve_sector_steady_state,
    vec_index, vectorize, DensityMatrix, DriftGenerator, Sector,
};

type C64 = Complex64;

const I: C64 = C64::new(0.0, 1.0);

pub const DEFAULT_SLICES: usize = 32;
pub const DEFAULT_LATTICE_STEP: f64 = 0.05;
pub const MAX_SLICE_DEVIATION: f64 = 0.1;
pub const HEISENBERG_TOLERANCE: f64 = 1e-9;
pub const CONVERGENCE_TOLERANCE: f64 = 1e-4;

const HBAR: f64 = 1.054_571_817e-34;
const EPSILON_0: f64 = 8.854_187_812_8e-12;
const SPEED_OF_LIGHT: f64 = 299_792_458.0;
const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
const BOHR_RADIUS: f64 = 5.291_772_109_03e-11;

/// Reduced D1 dipole ⟨J=1/2‖er‖J'=1/2⟩ of 87Rb in C·m.
pub const D1_REDUCED_DIPOLE: f64 = 2.9931 * ELEMENTARY_CHARGE * BOHR_RADIUS;

/// Drive calibration: this power and cross-section give this Rabi frequency.
pub const CALIBRATION_POWER_MW: f64 = 10.0;
pub const CALIBRATION_CROSS_SECTION_CM2: f64 = 1e-3;
pub const CALIBRATION_RABI: f64 = 30.0;

fn positive(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(Error::param(name, format!("must be finite and > 0, got {value}")))
    }
}

/// C = η L ω μ² / (2 ε₀ Γ c ħ) with μ the reduced D1 dipole.
pub fn cooperativity_from_physical(
    density_cm3: f64,
    length_cm: f64,
    wavelength_nm: f64,
    gamma_natural: f64,
) -> Result<f64> {
    let eta = positive("density", density_cm3)? * 1e6;
    let length = positive("length", length_cm)? * 1e-2;
    let omega = 2.0 * PI * SPEED_OF_LIGHT / (positive("wavelength", wavelength_nm)? * 1e-9);
    let gamma = positive("gamma_natural", gamma_natural)?;
    Ok(eta * length * omega * D1_REDUCED_DIPOLE.powi(2) / (2.0 * EPSILON_0 * gamma * SPEED_OF_LIGHT * HBAR))
}

pub fn reduced_optical_density(cooperativity: f64) -> f64 {
    4.0 * cooperativity
}

pub fn cooperativity_from_optical_density(optical_density: f64) -> f64 {
    optical_density / 4.0
}

/// μE/ħΓ for a plane wave of the given power over the given area.
pub fn plane_wave_rabi(power_mw: f64, cross_section_cm2: f64, gamma_natural: f64) -> f64 {
    let intensity = power_mw * 1e-3 / (cross_section_cm2 * 1e-4);
    let field = (2.0 * intensity / (SPEED_OF_LIGHT * EPSILON_0)).sqrt();
    D1_REDUCED_DIPOLE * field / (HBAR * gamma_natural)
}

fn calibration_scale() -> f64 {
    let gamma = crate::atom_model::AtomicConstants::default().gamma_natural;
    CALIBRATION_RABI / plane_wave_rabi(CALIBRATION_POWER_MW, CALIBRATION_CROSS_SECTION_CM2, gamma)
}

/// Ω/Γ of the drive, ∝ √(power / area), pinned to the calibration point.
pub fn rabi_from_power(power_mw: f64, cross_section_cm2: f64, gamma_natural: f64) -> Result<f64> {
    if !power_mw.is_finite() || power_mw < 0.0 {
        return Err(Error::param("power", format!("must be finite and >= 0, got {power_mw}")));
    }
    positive("cross_section", cross_section_cm2)?;
    positive("gamma_natural", gamma_natural)?;
    Ok(calibration_scale() * plane_wave_rabi(power_mw, cross_section_cm2, gamma_natural))
}

/// Inverse of [`rabi_from_power`].
pub fn power_from_rabi(rabi: f64, cross_section_cm2: f64, gamma_natural: f64) -> Result<f64> {
    if !rabi.is_finite() || rabi < 0.0 {
        return Err(Error::param("rabi", format!("must be finite and >= 0, got {rabi}")));
    }
    let unit = rabi_from_power(1.0, cross_section_cm2, gamma_natural)?;
    Ok((rabi / unit).powi(2))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MediumParams {
    pub cooperativity: f64,
    pub n_slices: usize,
    /// Transit (refill) rate in units of Γ.
    pub gamma: f64,
}

impl MediumParams {
    pub fn validate(&self) -> Result<()> {
        if !self.cooperativity.is_finite() || self.cooperativity < 0.0 {
            return Err(Error::param("cooperativity", "must be finite and >= 0"));
        }
        if self.n_slices == 0 {
            return Err(Error::param("n_slices", "must be >= 1"));
        }
        positive("gamma", self.gamma)?;
        Ok(())
    }

    pub fn slice_cooperativity(&self) -> f64 {
        self.cooperativity / self.n_slices as f64
    }

    /// Off-resonant optical pumping scale Ω²/δ² (units of Γ), a diagnostic.
    pub fn pumping_rate(rabi: f64, detuning: f64) -> f64 {
        rabi * rabi / (detuning * detuning)
    }
}

/// Symmetrized quadrature covariance, vacuum = identity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldCovariance {
    v: Matrix2<f64>,
}

impl FieldCovariance {
    pub fn new(v: Matrix2<f64>) -> Result<Self> {
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::param("covariance", "entries must be finite"));
        }
        if (v[(0, 1)] - v[(1, 0)]).abs() > 1e-12 * v.norm().max(1.0) {
            return Err(Error::param("covariance", "must be symmetric"));
        }
        let sym = (v + v.transpose()) * 0.5;
        if sym[(0, 0)] <= 0.0 || sym.determinant() <= 0.0 {
            return Err(Error::param("covariance", "must be positive definite"));
        }
        Ok(FieldCovariance { v: sym })
    }

    pub fn vacuum() -> Self {
        FieldCovariance { v: Matrix2::identity() }
    }

    pub fn matrix(&self) -> &Matrix2<f64> {
        &self.v
    }

    pub fn det(&self) -> f64 {
        self.v.determinant()
    }

    fn from_spectral(p: &Matrix2<C64>) -> Result<Self> {
        let re = p.map(|z| z.re);
        let det = re.determinant();
        if det < 1.0 - HEISENBERG_TOLERANCE {
            return Err(Error::Unphysical { det });
        }
        FieldCovariance::new((re + re.transpose()) * 0.5)
    }
}

/// V(θ) = uᵀ v u with u = (cos θ, sin θ).
pub fn quadrature_noise(v: &FieldCovariance, theta: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    let m = &v.v;
    c * c * m[(0, 0)] + 2.0 * s * c * m[(0, 1)] + s * s * m[(1, 1)]
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseExtrema {
    pub v_min: f64,
    pub v_max: f64,
    /// Angle of the minimum in [0, π).
    pub theta_min: f64,
}

pub fn min_max_noise(v: &FieldCovariance) -> NoiseExtrema {
    let m = &v.v;
    let mean = 0.5 * (m[(0, 0)] + m[(1, 1)]);
    let half_diff = 0.5 * (m[(0, 0)] - m[(1, 1)]);
    let radius = half_diff.hypot(m[(0, 1)]);
    let theta_min = if radius == 0.0 {
        0.0
    } else {
        // V(θ) = mean + radius cos(2θ − ψ)
        let psi = m[(0, 1)].atan2(half_diff);
        (0.5 * (psi + PI)).rem_euclid(PI)
    };
    NoiseExtrema { v_min: mean - radius, v_max: mean + radius, theta_min }
}

pub fn to_db(v: f64) -> f64 {
    10.0 * v.log10()
}

/// Per-unit-cooperativity response of the medium at one drive amplitude.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalResponse {
    /// d ln Ω / dC.
    pub absorption: C64,
    /// Quadrature drift K (includes the drive-phase frame rotation).
    pub generator: Matrix2<C64>,
    /// Hermitian quadrature noise matrix N.
    pub noise: Matrix2<C64>,
}

impl LocalResponse {
    pub fn transparent() -> Self {
        LocalResponse { absorption: C64::from(0.0), generator: Matrix2::zeros(), noise: Matrix2::zeros() }
    }

    fn lerp(&self, other: &Self, t: f64) -> Self {
        let (a, b) = (1.0 - t, t);
        LocalResponse {
            absorption: self.absorption * a + other.absorption * b,
            generator: self.generator * C64::from(a) + other.generator * C64::from(b),
            noise: self.noise * C64::from(a) + other.noise * C64::from(b),
        }
    }
}

/// Gaussian channel of one slice: P ↦ T P T† + N.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SliceChannel {
    pub transfer: Matrix2<C64>,
    pub noise: Matrix2<C64>,
}

impl SliceChannel {
    pub fn apply(&self, p: &Matrix2<C64>) -> Matrix2<C64> {
        self.transfer * p * self.transfer.adjoint() + self.noise
    }
}

fn spectral_norm(m: &Matrix2<C64>) -> f64 {
    let g = m.adjoint() * m;
    let (a, d, b) = (g[(0, 0)].re, g[(1, 1)].re, g[(0, 1)].norm());
    (0.5 * (a + d) + (0.25 * (a - d) * (a - d) + b * b).sqrt()).max(0.0).sqrt()
}

fn hermitize(m: &Matrix2<C64>) -> Matrix2<C64> {
    (m + m.adjoint()) * C64::from(0.5)
}

/// Exact channel for a constant response over `dc` (Van Loan).
fn channel(response: &LocalResponse, dc: f64) -> (SliceChannel, f64) {
    let k = response.generator * C64::from(dc);
    let mut block = Matrix4::<C64>::zeros();
    block.fixed_view_mut::<2, 2>(0, 0).copy_from(&k);
    block.fixed_view_mut::<2, 2>(0, 2).copy_from(&(response.noise * C64::from(dc)));
    block.fixed_view_mut::<2, 2>(2, 2).copy_from(&(-k.adjoint()));
    let z = block.exp();
    let transfer: Matrix2<C64> = z.fixed_view::<2, 2>(0, 0).into_owned();
    let noise = hermitize(&(z.fixed_view::<2, 2>(0, 2) * transfer.adjoint()));
    let deviation = spectral_norm(&(transfer - Matrix2::identity()));
    (SliceChannel { transfer, noise }, deviation)
}

/// Channel of a slice of cooperativity `dc`; rejects slices with
/// ‖T − I‖ > [`MAX_SLICE_DEVIATION`].
pub fn slice_transfer(response: &LocalResponse, dc: f64) -> Result<SliceChannel> {
    if !dc.is_finite() || dc < 0.0 {
        return Err(Error::param("dc", "must be finite and >= 0"));
    }
    let (ch, deviation) = channel(response, dc);
    if deviation > MAX_SLICE_DEVIATION {
        return Err(Error::SliceTooThick { deviation, limit: MAX_SLICE_DEVIATION });
    }
    Ok(ch)
}

/// Ω after a slice: Ω_in exp(dc · 2i⟨A_x†⟩/Ω_in).
pub fn mean_field_step(model: &AtomModel, rabi_in: f64, rho: &DensityMatrix, dc: f64) -> C64 {
    rabi_in * (absorption_rate(model, rho.matrix(), rabi_in) * dc).exp()
}

fn absorption_rate(model: &AtomModel, rho: &DMatrix<C64>, rabi: f64) -> C64 {
    if rabi == 0.0 {
        return C64::from(0.0);
    }
    let coherence = (rho * model.drive_coupling().adjoint()).trace();
    I * 2.0 * coherence / rabi
}

/// Local response from a steady state, its generator and diffusion, using
/// the full operator space.
pub fn local_response(
    model: &AtomModel,
    gen: &DriftGenerator,
    rho: &DensityMatrix,
    diffusion: &DiffusionMatrix,
    rabi: f64,
    omega: f64,
) -> Result<LocalResponse> {
    let sector = Sector::full(gen.dim());
    assemble_response(model, &sector, &gen.regularized(), &diffusion.twice(), rho.matrix(), rabi, omega)
}

fn assemble_response(
    model: &AtomModel,
    sector: &Sector,
    a_reg: &DMatrix<C64>,
    two_d: &DMatrix<C64>,
    rho: &DMatrix<C64>,
    rabi: f64,
    omega: f64,
) -> Result<LocalResponse> {
    let n = sector.n();
    let k = sector.len();
    let ay = model.probe_coupling();
    let ay_dag = ay.adjoint();
    // A_y† = Σ a_μ s_μ
    let a = sector.restrict_vector(&vectorize(&ay.map(|z| z.conj())));
    let c = sector.restrict_vector(&vectorize(&(rho * ay - ay * rho)));
    let d = sector.restrict_vector(&vectorize(&(rho * &ay_dag - &ay_dag * rho)));
    let bar_pos: Vec<usize> =
        sector.indices().iter().map(|&mu| sector.position(bar(n, mu)).expect("sector is adjoint-closed")).collect();

    let lu = resolvent_lu(&a_reg.transpose(), omega)?;
    let y_plus = lu.solve(&a).expect("checked pivots");
    // (A − iω)ᵀ is the adjoint-conjugate of (A + iω)ᵀ
    let pa = DVector::from_iterator(k, bar_pos.iter().map(|&b| a[b].conj()));
    let z = lu.solve(&pa).expect("checked pivots");
    let y_minus = DVector::from_iterator(k, bar_pos.iter().map(|&b| z[b].conj()));

    let (alpha_p, beta_p) = (y_plus.dot(&c), y_plus.dot(&d));
    let (alpha_m, beta_m) = (y_minus.dot(&c), y_minus.dot(&d));
    let m1 = Matrix2::new(-alpha_p, -beta_p, -beta_m.conj(), -alpha_m.conj());

    let absorption = absorption_rate(model, rho, rabi);
    let kq = Matrix2::new(C64::from(1.0), C64::from(1.0), -I, I);
    let kq_inv = Matrix2::new(C64::from(0.5), I * 0.5, C64::from(0.5), -I * 0.5);
    let rotation = Matrix2::new(C64::from(0.0), C64::from(1.0), C64::from(-1.0), C64::from(0.0));
    let generator = kq * m1 * kq_inv + rotation * C64::from(absorption.im);

    // noise coefficient vectors of (b(ω), b†(−ω)) and of the same pair at −ω
    let conj_bar = |y: &DVector<C64>| DVector::from_iterator(k, bar_pos.iter().map(|&b| I * y[b].conj()));
    let v = [&y_plus * -I, conj_bar(&y_minus)];
    let w = [&y_minus * -I, conj_bar(&y_plus)];
    let dv = [two_d * &v[0], two_d * &v[1]];
    let dw = [two_d * &w[0], two_d * &w[1]];
    let q = Matrix2::from_fn(|i, j| (v[i].dot(&dw[j]) + w[j].dot(&dv[i])) * 0.5);
    let noise = hermitize(&(kq * q * kq.transpose()));

    Ok(LocalResponse { absorption, generator, noise })
}

/// Evaluates the local response of one model at fixed detuning, field, γ and
/// ω, for any drive amplitude, on the invariant operator sector.
#[derive(Clone, Debug)]
pub struct ResponseSolver<'m> {
    model: &'m AtomModel,
    drive: DriveParams,
    gamma: f64,
    sector: Sector,
    base: DMatrix<C64>,
    refill: DVector<C64>,
}

impl<'m> ResponseSolver<'m> {
    pub fn new(model: &'m AtomModel, drive: &DriveParams, gamma: f64) -> Result<Self> {
        drive.validate()?;
        if !gamma.is_finite() || gamma < 0.0 {
            return Err(Error::param("gamma", "must be finite and >= 0"));
        }
        let n = model.dim();
        let probe = vectorize(&model.probe_coupling().map(|z| z.conj()));
        let seeds: Vec<usize> = (0..n * n).filter(|&mu| probe[mu] != C64::from(0.0)).collect();
        // the drive and the dissipators fix the pattern; diagonal terms add no edges
        let pattern = build_drift(&model.hamiltonian(&DriveParams { rabi: 1.0, ..*drive }), model.dissipation(), 1.0)?;
        let sector = Sector::closure(n, &[pattern.matrix()], &seeds);
        let bare = build_drift(&DMatrix::zeros(n, n), model.dissipation(), gamma)?;
        Ok(ResponseSolver {
            model,
            drive: *drive,
            gamma,
            base: sector.restrict_matrix(bare.matrix()),
            refill: sector.restrict_vector(bare.refill_vector()),
            sector,
        })
    }

    pub fn sector(&self) -> &Sector {
        &self.sector
    }

    pub fn steady_state(&self, rabi: f64) -> Result<(DMatrix<C64>, DensityMatrix)> {
        let drive = DriveParams { rabi, ..self.drive };
        let h = self.model.hamiltonian(&drive);
        let mut l = self.base.clone();
        add_coherent_sector(&mut l, &h, &self.sector);
        let x = match solve_sector_steady_state(&l, &self.sector, &self.refill) {
            Ok(x) => x,
            Err(Error::RankDeficient { .. }) => {
                let full = build_drift(&h, self.model.dissipation(), self.gamma)?;
                return Err(Error::RankDeficient { null_dim: null_dimension(full.matrix()) });
            }
            Err(e) => return Err(e),
        };
        Ok((l, finish_density(&self.sector.embed(&x), self.sector.n())?))
    }

    pub fn evaluate(&self, rabi: f64) -> Result<LocalResponse> {
        let (l, rho) = self.steady_state(rabi)?;
        let two_d = twice_diffusion(&l, &self.sector, rho.matrix());
        let mut a_reg = l;
        let n = self.sector.n();
        for d in 0..n {
            if let Some(col) = self.sector.position(vec_index(n, d, d)) {
                for row in 0..a_reg.nrows() {
                    a_reg[(row, col)] -= self.refill[row];
                }
            }
        }
        assemble_response(self.model, &self.sector, &a_reg, &two_d, rho.matrix(), rabi, self.drive.analysis_freq)
    }
}

/// Lazily filled table of local responses at |Ω| = Ω_in e^{−k h}, frozen
/// below the weak-field floor where the response no longer depends on Ω.
#[derive(Clone, Debug)]
pub struct ResponseTable<'m> {
    solver: ResponseSolver<'m>,
    rabi_in: f64,
    step: f64,
    last: usize,
    nodes: Vec<Option<LocalResponse>>,
    evaluations: usize,
}

impl<'m> ResponseTable<'m> {
    pub fn new(model: &'m AtomModel, drive: &DriveParams, gamma: f64, step: f64) -> Result<Self> {
        positive("lattice_step", step)?;
        let solver = ResponseSolver::new(model, drive, gamma)?;
        let last = if drive.rabi == 0.0 {
            0
        } else {
            let offset = model
                .resonances()
                .iter()
                .map(|r| (drive.detuning - r).abs())
                .fold(f64::INFINITY, f64::min)
                .min(1e6);
            let floor = 0.01 * (gamma.max(1e-6) * (0.25 + offset * offset)).sqrt();
            ((drive.rabi.ln() - floor.ln()) / step).ceil().max(0.0) as usize
        };
        Ok(ResponseTable { solver, rabi_in: drive.rabi, step, last, nodes: vec![None; last + 1], evaluations: 0 })
    }

    /// Same drive on a lattice of half the spacing, reusing computed nodes.
    pub fn refined(&self) -> Self {
        let last = 2 * self.last;
        let mut nodes = vec![None; last + 1];
        for (k, node) in self.nodes.iter().enumerate() {
            nodes[2 * k] = *node;
        }
        ResponseTable {
            solver: self.solver.clone(),
            rabi_in: self.rabi_in,
            step: self.step / 2.0,
            last,
            nodes,
            evaluations: 0,
        }
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn rabi_in(&self) -> f64 {
        self.rabi_in
    }

    /// Number of node evaluations performed by this table.
    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    fn node(&mut self, k: usize) -> Result<LocalResponse> {
        let k = k.min(self.last);
        if let Some(r) = self.nodes[k] {
            return Ok(r);
        }
        let rabi = if self.rabi_in == 0.0 { 0.0 } else { self.rabi_in * (-(k as f64) * self.step).exp() };
        let r = self.solver.evaluate(rabi)?;
        self.evaluations += 1;
        self.nodes[k] = Some(r);
        Ok(r)
    }

    /// Response at ln|Ω| = `u`, linear in between nodes.
    pub fn at(&mut self, u: f64) -> Result<LocalResponse> {
        if self.rabi_in == 0.0 {
            return self.node(0);
        }
        let x = ((self.rabi_in.ln() - u) / self.step).max(0.0);
        if x >= self.last as f64 {
            return self.node(self.last);
        }
        let k = x.floor() as usize;
        let t = x - k as f64;
        let lo = self.node(k)?;
        if t < 1e-12 {
            return Ok(lo);
        }
        Ok(lo.lerp(&self.node(k + 1)?, t))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PropagationResult {
    pub covariance: FieldCovariance,
    /// Complex drive amplitude at the exit, in the input phase reference.
    pub output_rabi: C64,
    pub steps: usize,
}

/// Folds the slice channels over the sample. `thinness` caps ‖T − I‖ per
/// step; steps are also capped at C/n_slices and at one lattice spacing of
/// drive attenuation.
pub fn propagate_with_table(
    table: &mut ResponseTable,
    medium: &MediumParams,
    thinness: f64,
) -> Result<PropagationResult> {
    medium.validate()?;
    let total = medium.cooperativity;
    let mut p = Matrix2::<C64>::identity();
    let mut u = if table.rabi_in > 0.0 { table.rabi_in.ln() } else { f64::NEG_INFINITY };
    let mut phase = 0.0;
    let mut c = 0.0;
    let mut steps = 0;
    while total - c > 1e-12 * total {
        let r0 = table.at(u)?;
        let mut dc = (total - c).min(medium.slice_cooperativity());
        let norm = spectral_norm(&r0.generator);
        if norm > 0.0 {
            dc = dc.min(thinness / norm);
        }
        if r0.absorption.re < 0.0 {
            dc = dc.min(table.step / -r0.absorption.re);
        }
        loop {
            let rm = table.at(u + 0.5 * dc * r0.absorption.re)?;
            let (ch, deviation) = channel(&rm, dc);
            if deviation > thinness.min(MAX_SLICE_DEVIATION) && dc > 1e-9 * total {
                dc *= 0.5;
                continue;
            }
            p = hermitize(&ch.apply(&p));
            u = (u + dc * rm.absorption.re).min(u);
            phase += dc * rm.absorption.im;
            c += dc;
            steps += 1;
            break;
        }
        let det = p.map(|z| z.re).determinant();
        if det < 1.0 - HEISENBERG_TOLERANCE {
            return Err(Error::Unphysical { det });
        }
    }
    let output_rabi = if u.is_finite() { C64::from_polar(u.exp(), phase) } else { C64::from(0.0) };
    Ok(PropagationResult { covariance: FieldCovariance::from_spectral(&p)?, output_rabi, steps })
}

/// Output covariance for one parameter point at the default lattice.
pub fn propagate_covariance(model: &AtomModel, drive: &DriveParams, medium: &MediumParams) -> Result<FieldCovariance> {
    medium.validate()?;
    if medium.cooperativity == 0.0 {
        drive.validate()?;
        return Ok(FieldCovariance::vacuum());
    }
    let mut table = ResponseTable::new(model, drive, medium.gamma, DEFAULT_LATTICE_STEP)?;
    Ok(propagate_with_table(&mut table, medium, MAX_SLICE_DEVIATION)?.covariance)
}
