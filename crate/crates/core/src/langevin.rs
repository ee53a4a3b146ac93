//! Langevin force correlations (generalized Einstein relation) and the
//! frequency-domain fluctuation spectrum around a steady state.
//!
//! Operators are indexed as in [`crate::liouvillian`]: s_μ = |c⟩⟨r| for
//! μ = (r, c). Forces obey ⟨F_μ(t) F_ν(t')⟩ = 2 D_μν δ(t − t').

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::liouvillian::{pivot_ratio, vec_index, vectorize, DensityMatrix, DriftGenerator, Sector};

type C64 = Complex64;

#[derive(Clone, Debug, PartialEq)]
pub struct DiffusionMatrix {
    d: DMatrix<C64>,
}

impl DiffusionMatrix {
    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.d
    }

    /// 2D, the force correlation matrix.
    pub fn twice(&self) -> DMatrix<C64> {
        &self.d * C64::from(2.0)
    }
}

/// 2D_μν = ⟨L†(s_μ s_ν)⟩ − ⟨L†(s_μ) s_ν⟩ − ⟨s_μ L†(s_ν)⟩.
pub fn diffusion_matrix(gen: &DriftGenerator, rho: &DensityMatrix) -> Result<DiffusionMatrix> {
    let n = gen.dim();
    if rho.dim() != n {
        return Err(Error::param("rho", "dimension does not match the generator"));
    }
    let residual = (gen.matrix() * vectorize(rho.matrix())).norm();
    let tolerance = 1e-9 * gen.matrix().norm().max(1.0);
    if residual > tolerance {
        return Err(Error::NotSteady { residual, tolerance });
    }
    let sector = Sector::full(n);
    let two_d = twice_diffusion(gen.matrix(), &sector, rho.matrix());
    Ok(DiffusionMatrix { d: two_d * C64::from(0.5) })
}

/// 2D on a sector. `l` is the generator restricted to `sector`, which must be
/// closed under its sparsity pattern.
pub(crate) fn twice_diffusion(l: &DMatrix<C64>, sector: &Sector, rho: &DMatrix<C64>) -> DMatrix<C64> {
    let n = sector.n();
    let k = sector.len();
    let idx = sector.indices();
    let zero = C64::from(0.0);

    // T_μν = δ_{r c'} (𝕃ρ)_{r' c}
    let rho_s = sector.restrict_vector(&vectorize(rho));
    let l_rho = sector.embed(&(l * &rho_s));
    let mut out = DMatrix::from_fn(k, k, |i, j| {
        let (r, c) = (idx[i] % n, idx[i] / n);
        let (rp, cp) = (idx[j] % n, idx[j] / n);
        if r == cp {
            l_rho[vec_index(n, rp, c)]
        } else {
            zero
        }
    });

    // (𝕃G)_μν = Σ_c 𝕃_{μ,(c',c)} ρ_{r' c}
    for j in 0..k {
        let (rp, cp) = (idx[j] % n, idx[j] / n);
        for c in 0..n {
            let coef = rho[(rp, c)];
            if coef == zero {
                continue;
            }
            if let Some(kp) = sector.position(vec_index(n, cp, c)) {
                for i in 0..k {
                    out[(i, j)] -= l[(i, kp)] * coef;
                }
            }
        }
    }
    // (G𝕃^T)_μν = Σ_r'' ρ_{r'' c} 𝕃_{ν,(r'',r)}
    for i in 0..k {
        let (r, c) = (idx[i] % n, idx[i] / n);
        for rpp in 0..n {
            let coef = rho[(rpp, c)];
            if coef == zero {
                continue;
            }
            if let Some(kp) = sector.position(vec_index(n, rpp, r)) {
                for j in 0..k {
                    out[(i, j)] -= l[(j, kp)] * coef;
                }
            }
        }
    }
    out
}

/// Equal-time covariance ⟨s_μ s_ν⟩ − ⟨s_μ⟩⟨s_ν⟩.
pub fn equal_time_covariance(rho: &DensityMatrix) -> DMatrix<C64> {
    let n = rho.dim();
    let m = rho.matrix();
    let v = vectorize(m);
    DMatrix::from_fn(n * n, n * n, |mu, nu| {
        let (r, c) = (mu % n, mu / n);
        let (rp, cp) = (nu % n, nu / n);
        let product = if r == cp { m[(rp, c)] } else { C64::from(0.0) };
        product - v[mu] * v[nu]
    })
}

/// LU of a regularized resolvent matrix, rejecting near-singular ones.
pub(crate) fn resolvent_lu(
    a: &DMatrix<C64>,
    omega: f64,
) -> Result<nalgebra::LU<C64, nalgebra::Dyn, nalgebra::Dyn>> {
    let mut m = a.clone();
    for i in 0..m.nrows() {
        m[(i, i)] += C64::new(0.0, omega);
    }
    let lu = m.lu();
    let ratio = pivot_ratio(lu.u().diagonal().iter());
    if ratio < 1e-12 {
        return Err(Error::SingularResolvent { omega, pivot_ratio: ratio });
    }
    Ok(lu)
}

/// S(ω) = R(ω) 2D R(−ω)^T with R(ω) = (A + iω)^{-1}, A the generator with
/// its trace mode regularized away. S_μν(ω) is the spectrum of
/// ⟨δs_μ(ω) δs_ν(−ω)⟩.
pub fn fluctuation_spectrum(gen: &DriftGenerator, d: &DiffusionMatrix, omega: f64) -> Result<DMatrix<C64>> {
    if !omega.is_finite() {
        return Err(Error::param("omega", "must be finite"));
    }
    let a = gen.regularized();
    let n2 = a.nrows();
    let eye = DMatrix::<C64>::identity(n2, n2);
    let plus = resolvent_lu(&a, omega)?.solve(&eye).expect("checked pivots");
    let minus = resolvent_lu(&a, -omega)?.solve(&eye).expect("checked pivots");
    Ok(plus * d.twice() * minus.transpose())
}

/// ∫ S(ω) dω/2π over |ω| ≤ `cutoff`, plus the 2D/(π·cutoff) tail of the
/// asymptotic 2D/ω² decay. Gauss–Legendre panels in t with ω = tan t.
pub fn integrate_spectrum(
    gen: &DriftGenerator,
    d: &DiffusionMatrix,
    cutoff: f64,
    panels: usize,
) -> Result<DMatrix<C64>> {
    if !(cutoff > 0.0) || panels == 0 {
        return Err(Error::param("cutoff", "cutoff and panel count must be positive"));
    }
    let (nodes, weights) = gauss_legendre(8);
    let t_max = cutoff.atan();
    let width = 2.0 * t_max / panels as f64;
    let two_d = d.twice();
    let mut total = DMatrix::<C64>::zeros(two_d.nrows(), two_d.ncols());
    for p in 0..panels {
        let mid = -t_max + (p as f64 + 0.5) * width;
        for (x, w) in nodes.iter().zip(&weights) {
            let t = mid + 0.5 * width * x;
            let jac = 1.0 / t.cos().powi(2);
            let s = fluctuation_spectrum(gen, d, t.tan())?;
            total += s * C64::from(0.5 * width * w * jac / (2.0 * PI));
        }
    }
    Ok(total + two_d * C64::from(1.0 / (PI * cutoff)))
}

/// Nodes and weights on [-1, 1].
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = Vec::with_capacity(order);
    let mut weights = Vec::with_capacity(order);
    for i in 0..order {
        let mut x = (PI * (i as f64 + 0.75) / (order as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=order {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if order == 0 { 1.0 } else { p1 };
            dp = order as f64 * (x * p - p0) / (x * x - 1.0);
            let step = p / dp;
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        nodes.push(x);
        weights.push(2.0 / ((1.0 - x * x) * dp * dp));
    }
    (nodes, weights)
}

/// Vector of a basis operator's expectation values under `rho`.
pub fn expectations(rho: &DensityMatrix) -> DVector<C64> {
    vectorize(rho.matrix())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atom_model::{AtomModel, AtomicConstants, DriveParams};
    use crate::liouvillian::{bar, build_drift, steady_state, Dissipation};
    use approx::assert_abs_diff_eq;

    fn drive(rabi: f64, detuning: f64) -> DriveParams {
        DriveParams { rabi, detuning, zeeman_shift: 0.0, analysis_freq: 0.0 }
    }

    fn setup(model: &AtomModel, rabi: f64, det: f64, gamma: f64) -> (DriftGenerator, DensityMatrix, DMatrix<C64>) {
        let h = model.hamiltonian(&drive(rabi, det));
        let gen = build_drift(&h, model.dissipation(), gamma).unwrap();
        let rho = steady_state(&gen).unwrap();
        (gen, rho, h)
    }

    fn basis_op(n: usize, mu: usize) -> DMatrix<C64> {
        let (r, c) = (mu % n, mu / n);
        let mut m = DMatrix::zeros(n, n);
        m[(c, r)] = C64::from(1.0);
        m
    }

    /// Heisenberg-picture generator written directly on operators.
    fn adjoint_generator(x: &DMatrix<C64>, h: &DMatrix<C64>, diss: &Dissipation, gamma: f64) -> DMatrix<C64> {
        let i = C64::new(0.0, 1.0);
        let mut out = (h * x - x * h) * i;
        for l in diss.jumps() {
            let ldl = l.adjoint() * l;
            out += l.adjoint() * x * l - (&ldl * x + x * &ldl) * C64::from(0.5);
        }
        let n = x.nrows();
        out += (DMatrix::identity(n, n) * (diss.refill() * x).trace() - x) * C64::from(gamma);
        out
    }

    #[test]
    fn einstein_relation_matches_operator_algebra() {
        let model = AtomModel::f0_f1_pi();
        let gamma = 0.05;
        let (gen, rho, h) = setup(&model, 1.3, -0.7, gamma);
        let d = diffusion_matrix(&gen, &rho).unwrap().twice();
        let n = 4;
        let expect = |x: &DMatrix<C64>| (rho.matrix() * x).trace();
        for mu in 0..n * n {
            for nu in 0..n * n {
                let (sm, sn) = (basis_op(n, mu), basis_op(n, nu));
                let lm = adjoint_generator(&sm, &h, model.dissipation(), gamma);
                let ln = adjoint_generator(&sn, &h, model.dissipation(), gamma);
                let prod = adjoint_generator(&(&sm * &sn), &h, model.dissipation(), gamma);
                let oracle = expect(&prod) - expect(&(&lm * &sn)) - expect(&(&sm * &ln));
                assert_abs_diff_eq!(d[(mu, nu)].re, oracle.re, epsilon = 1e-12);
                assert_abs_diff_eq!(d[(mu, nu)].im, oracle.im, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn two_level_closed_forms() {
        let model = AtomModel::f0_f1_pi();
        for gamma in [0.0, 0.05] {
            let (gen, rho, _) = setup(&model, 2.0, 0.5, gamma);
            let d = diffusion_matrix(&gen, &rho).unwrap().twice();
            let (pg, pe) = (rho.population(0), rho.population(2));
            // σ = |g⟩⟨e0| is s_(e0, g); σ† is s_(g, e0)
            let sigma = vec_index(4, 2, 0);
            let sigma_dag = vec_index(4, 0, 2);
            assert_abs_diff_eq!(d[(sigma, sigma_dag)].re, 1.0 + gamma * (1.0 + pg), epsilon = 1e-12);
            assert_abs_diff_eq!(d[(sigma_dag, sigma)].re, gamma * pe, epsilon = 1e-12);
            assert_abs_diff_eq!(d[(sigma, sigma_dag)].im, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn no_dissipation_no_noise() {
        let n = 3;
        let diss = Dissipation::new(vec![], {
            let mut r = DMatrix::zeros(n, n);
            r[(0, 0)] = C64::from(1.0);
            r
        })
        .unwrap();
        let mut h = DMatrix::<C64>::zeros(n, n);
        h[(1, 1)] = C64::from(0.4);
        let gen = build_drift(&h, &diss, 0.0).unwrap();
        let mut rho = DMatrix::zeros(n, n);
        rho[(0, 0)] = C64::from(1.0);
        let rho = DensityMatrix::new(rho).unwrap();
        let d = diffusion_matrix(&gen, &rho).unwrap();
        assert_eq!(d.matrix().norm(), 0.0);
    }

    #[test]
    fn identity_pairs_carry_no_noise() {
        let model = AtomModel::rb87_d1(&AtomicConstants::default()).unwrap();
        let (gen, rho, _) = setup(&model, 30.0, -8.3, 0.01);
        let d = diffusion_matrix(&gen, &rho).unwrap();
        let n = model.dim();
        let ones = vectorize(&DMatrix::identity(n, n));
        assert_abs_diff_eq!((d.matrix().transpose() * &ones).norm(), 0.0, epsilon = 1e-11);
        assert_abs_diff_eq!((d.matrix() * &ones).norm(), 0.0, epsilon = 1e-11);
    }

    #[test]
    fn rejects_non_steady_state() {
        let model = AtomModel::f0_f1_pi();
        let (gen, _, _) = setup(&model, 1.0, 0.0, 0.1);
        let mut m = DMatrix::zeros(4, 4);
        m[(2, 2)] = C64::from(1.0);
        let excited = DensityMatrix::new(m).unwrap();
        assert!(matches!(diffusion_matrix(&gen, &excited), Err(Error::NotSteady { .. })));
    }

    #[test]
    fn spectrum_adjoint_symmetry() {
        let model = AtomModel::f0_f1_pi();
        let (gen, rho, _) = setup(&model, 1.5, 0.3, 0.1);
        let d = diffusion_matrix(&gen, &rho).unwrap();
        let s = fluctuation_spectrum(&gen, &d, 0.7).unwrap();
        let n2 = 16;
        for mu in 0..n2 {
            for nu in 0..n2 {
                let lhs = s[(mu, nu)].conj();
                let rhs = s[(bar(4, nu), bar(4, mu))];
                assert_abs_diff_eq!((lhs - rhs).norm(), 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn spectrum_decays_as_inverse_square() {
        let model = AtomModel::f0_f1_pi();
        let (gen, rho, _) = setup(&model, 1.5, 0.3, 0.1);
        let d = diffusion_matrix(&gen, &rho).unwrap();
        let far = fluctuation_spectrum(&gen, &d, 1e4).unwrap() * C64::from(1e8);
        assert_abs_diff_eq!((far - d.twice()).norm(), 0.0, epsilon = 1e-3 * d.twice().norm());
    }

    #[test]
    fn spectrum_scales_with_linewidth() {
        // doubling every rate (Γ, γ, ω) halves S
        let model = AtomModel::f0_f1_pi();
        let (gen, rho, h) = setup(&model, 1.5, 0.3, 0.1);
        let d = diffusion_matrix(&gen, &rho).unwrap();
        let s1 = fluctuation_spectrum(&gen, &d, 0.4).unwrap();

        let jumps: Vec<_> = model.dissipation().jumps().iter().map(|l| l * C64::from(2f64.sqrt())).collect();
        let fast = Dissipation::new(jumps, model.dissipation().refill().clone()).unwrap();
        let gen2 = build_drift(&(h * C64::from(2.0)), &fast, 0.2).unwrap();
        let rho2 = steady_state(&gen2).unwrap();
        let d2 = diffusion_matrix(&gen2, &rho2).unwrap();
        let s2 = fluctuation_spectrum(&gen2, &d2, 0.8).unwrap();
        assert_abs_diff_eq!((s2 * C64::from(2.0) - &s1).norm(), 0.0, epsilon = 1e-12 * s1.norm().max(1.0));
    }

    #[test]
    fn spectral_integral_gives_equal_time_moments() {
        let model = AtomModel::f0_f1_pi();
        let (gen, rho, _) = setup(&model, 1.5, 0.3, 0.1);
        let d = diffusion_matrix(&gen, &rho).unwrap();
        let integral = integrate_spectrum(&gen, &d, 1e3, 400).unwrap();
        let moments = equal_time_covariance(&rho);
        let err = (&integral - &moments).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(err < 1e-4, "max deviation {err}");
    }

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        let (x, w) = gauss_legendre(8);
        let integral: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert_abs_diff_eq!(integral, 2.0 / 15.0, epsilon = 1e-14);
        assert_abs_diff_eq!(w.iter().sum::<f64>(), 2.0, epsilon = 1e-14);
    }
}
