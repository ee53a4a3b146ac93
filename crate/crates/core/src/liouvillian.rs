//! Master-equation generator (coherent drive, spontaneous emission, transit
//! refill) and its steady state.
//!
//! Density matrices are vectorized column-major: element (r, c) of an n×n
//! matrix sits at index `r + n*c`. With the operator basis s_μ = |c⟩⟨r| for
//! μ = (r, c) one has ⟨s_μ⟩ = ρ_rc, so the same matrix also acts as the
//! Heisenberg drift of the vector of basis operators.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

type C64 = Complex64;

const I: C64 = C64::new(0.0, 1.0);

pub fn vec_index(n: usize, row: usize, col: usize) -> usize {
    row + n * col
}

/// Index of the adjoint basis operator: s_μ† = s_bar(μ).
pub fn bar(n: usize, mu: usize) -> usize {
    let (r, c) = (mu % n, mu / n);
    c + n * r
}

pub fn vectorize(m: &DMatrix<C64>) -> DVector<C64> {
    DVector::from_column_slice(m.as_slice())
}

pub fn unvectorize(v: &DVector<C64>, n: usize) -> DMatrix<C64> {
    DMatrix::from_column_slice(n, n, v.as_slice())
}

fn is_hermitian(m: &DMatrix<C64>, tol: f64) -> bool {
    (m - m.adjoint()).norm() <= tol * m.norm().max(1.0)
}

/// Jump operators (rates folded in) and the normalized refill state.
#[derive(Clone, Debug)]
pub struct Dissipation {
    jumps: Vec<DMatrix<C64>>,
    refill: DMatrix<C64>,
    /// Σ_L D[L] as a superoperator.
    lindblad: DMatrix<C64>,
}

impl Dissipation {
    pub fn new(jumps: Vec<DMatrix<C64>>, refill: DMatrix<C64>) -> Result<Self> {
        let n = refill.nrows();
        if refill.ncols() != n || jumps.iter().any(|l| l.shape() != (n, n)) {
            return Err(Error::param("dissipation", "operators must be square and of equal size"));
        }
        if !is_hermitian(&refill, 1e-12) || (refill.trace() - C64::from(1.0)).norm() > 1e-12 {
            return Err(Error::param("refill", "must be a unit-trace Hermitian matrix"));
        }
        let n2 = n * n;
        let eye = DMatrix::<C64>::identity(n, n);
        let mut lindblad = DMatrix::zeros(n2, n2);
        let mut total = DMatrix::<C64>::zeros(n, n);
        for l in &jumps {
            lindblad += l.map(|z| z.conj()).kronecker(l);
            total += l.adjoint() * l;
        }
        lindblad -= (eye.kronecker(&total) + total.transpose().kronecker(&eye)) * C64::from(0.5);
        Ok(Dissipation { jumps, refill, lindblad })
    }

    pub fn dim(&self) -> usize {
        self.refill.nrows()
    }

    pub fn jumps(&self) -> &[DMatrix<C64>] {
        &self.jumps
    }

    pub fn refill(&self) -> &DMatrix<C64> {
        &self.refill
    }

    /// Superoperator of the jump channels alone.
    pub fn superoperator(&self) -> &DMatrix<C64> {
        &self.lindblad
    }
}

/// Linear generator 𝕃 with dρ/dt = 𝕃 vec(ρ).
#[derive(Clone, Debug)]
pub struct DriftGenerator {
    matrix: DMatrix<C64>,
    n: usize,
    refill: DVector<C64>,
}

impl DriftGenerator {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn refill_vector(&self) -> &DVector<C64> {
        &self.refill
    }

    pub fn apply(&self, rho: &DMatrix<C64>) -> DMatrix<C64> {
        unvectorize(&(&self.matrix * vectorize(rho)), self.n)
    }

    /// 𝕃 - vec(ρ_iso) vec(I)^T: invertible whenever the steady state is
    /// unique, and equal to 𝕃 on traceless vectors.
    pub fn regularized(&self) -> DMatrix<C64> {
        let mut a = self.matrix.clone();
        for d in 0..self.n {
            let col = vec_index(self.n, d, d);
            for row in 0..a.nrows() {
                a[(row, col)] -= self.refill[row];
            }
        }
        a
    }
}

/// Assembles −i[H,ρ] + Σ D[L]ρ + γ(ρ_iso Tr ρ − ρ).
pub fn build_drift(h: &DMatrix<C64>, dissipation: &Dissipation, gamma: f64) -> Result<DriftGenerator> {
    let n = dissipation.dim();
    if h.shape() != (n, n) {
        return Err(Error::param("hamiltonian", "dimension does not match the dissipator"));
    }
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(Error::param("gamma", format!("must be finite and >= 0, got {gamma}")));
    }
    let asym = (h - h.adjoint()).norm();
    if asym > 1e-12 * h.norm().max(1.0) {
        return Err(Error::NonHermitian(asym));
    }
    let mut matrix = dissipation.lindblad.clone();
    add_coherent(&mut matrix, h, n);
    let refill = vectorize(&dissipation.refill);
    add_refill(&mut matrix, &refill, n, gamma);
    Ok(DriftGenerator { matrix, n, refill })
}

fn add_coherent(matrix: &mut DMatrix<C64>, h: &DMatrix<C64>, n: usize) {
    for c in 0..n {
        for r in 0..n {
            let mu = vec_index(n, r, c);
            for k in 0..n {
                matrix[(mu, vec_index(n, k, c))] -= I * h[(r, k)];
                matrix[(mu, vec_index(n, r, k))] += I * h[(k, c)];
            }
        }
    }
}

/// Adds −i[H, ·] restricted to `sector` to the restricted matrix `m`.
pub(crate) fn add_coherent_sector(m: &mut DMatrix<C64>, h: &DMatrix<C64>, sector: &Sector) {
    let n = sector.n();
    let zero = C64::from(0.0);
    for (i, &mu) in sector.indices().iter().enumerate() {
        let (r, c) = (mu % n, mu / n);
        for k in 0..n {
            if h[(r, k)] != zero {
                if let Some(j) = sector.position(vec_index(n, k, c)) {
                    m[(i, j)] -= I * h[(r, k)];
                }
            }
            if h[(k, c)] != zero {
                if let Some(j) = sector.position(vec_index(n, r, k)) {
                    m[(i, j)] += I * h[(k, c)];
                }
            }
        }
    }
}

fn add_refill(matrix: &mut DMatrix<C64>, refill: &DVector<C64>, n: usize, gamma: f64) {
    if gamma == 0.0 {
        return;
    }
    let g = C64::from(gamma);
    for d in 0..n {
        let col = vec_index(n, d, d);
        for row in 0..n * n {
            matrix[(row, col)] += g * refill[row];
        }
    }
    for mu in 0..n * n {
        matrix[(mu, mu)] -= g;
    }
}

/// A set of vectorized indices closed under the generator's sparsity pattern
/// (in both directions) and under the adjoint map.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sector {
    n: usize,
    indices: Vec<usize>,
    position: Vec<Option<usize>>,
}

impl Sector {
    pub fn full(n: usize) -> Self {
        Self::from_indices(n, (0..n * n).collect())
    }

    fn from_indices(n: usize, mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        let mut position = vec![None; n * n];
        for (k, &mu) in indices.iter().enumerate() {
            position[mu] = Some(k);
        }
        Sector { n, indices, position }
    }

    /// Connected component of `seeds` and all diagonal entries over the union
    /// of the nonzero patterns of `patterns`.
    pub fn closure(n: usize, patterns: &[&DMatrix<C64>], seeds: &[usize]) -> Self {
        let n2 = n * n;
        let mut adjacency = vec![Vec::new(); n2];
        for p in patterns {
            for col in 0..n2 {
                for row in 0..n2 {
                    if row != col && p[(row, col)] != C64::from(0.0) {
                        adjacency[row].push(col);
                        adjacency[col].push(row);
                    }
                }
            }
        }
        for mu in 0..n2 {
            adjacency[mu].push(bar(n, mu));
        }
        let mut seen = vec![false; n2];
        let mut queue: VecDeque<usize> = (0..n).map(|d| vec_index(n, d, d)).chain(seeds.iter().copied()).collect();
        while let Some(mu) = queue.pop_front() {
            if std::mem::replace(&mut seen[mu], true) {
                continue;
            }
            queue.extend(adjacency[mu].iter().copied().filter(|&nu| !seen[nu]));
        }
        Self::from_indices(n, (0..n2).filter(|&mu| seen[mu]).collect())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn position(&self, mu: usize) -> Option<usize> {
        self.position[mu]
    }

    pub fn restrict_matrix(&self, m: &DMatrix<C64>) -> DMatrix<C64> {
        let k = self.len();
        DMatrix::from_fn(k, k, |i, j| m[(self.indices[i], self.indices[j])])
    }

    pub fn restrict_vector(&self, v: &DVector<C64>) -> DVector<C64> {
        DVector::from_iterator(self.len(), self.indices.iter().map(|&mu| v[mu]))
    }

    pub fn embed(&self, v: &DVector<C64>) -> DVector<C64> {
        let mut full = DVector::zeros(self.n * self.n);
        for (k, &mu) in self.indices.iter().enumerate() {
            full[mu] = v[k];
        }
        full
    }

    /// Norm of the part of `v` that lies outside the sector.
    pub fn leakage(&self, v: &DVector<C64>) -> f64 {
        v.iter()
            .enumerate()
            .filter(|(mu, _)| self.position[*mu].is_none())
            .map(|(_, z)| z.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }
}

/// A validated density matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    rho: DMatrix<C64>,
}

impl DensityMatrix {
    pub fn new(rho: DMatrix<C64>) -> Result<Self> {
        let n = rho.nrows();
        if rho.ncols() != n {
            return Err(Error::param("rho", "must be square"));
        }
        let asym = (&rho - rho.adjoint()).norm();
        if asym > 1e-12 {
            return Err(Error::NonHermitian(asym));
        }
        let trace = rho.trace();
        if (trace - C64::from(1.0)).norm() > 1e-12 {
            return Err(Error::param("rho", format!("trace {trace} differs from 1")));
        }
        let min_eig = rho.clone().symmetric_eigenvalues().min();
        if min_eig < -1e-10 {
            return Err(Error::param("rho", format!("negative eigenvalue {min_eig}")));
        }
        Ok(DensityMatrix { rho })
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.rho
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn population(&self, i: usize) -> f64 {
        self.rho[(i, i)].re
    }

    /// Tr(ρ X).
    pub fn expect(&self, x: &DMatrix<C64>) -> C64 {
        (&self.rho * x).trace()
    }
}

/// Steady state of `gen`, solved on the sector connected to the populations.
pub fn steady_state(gen: &DriftGenerator) -> Result<DensityMatrix> {
    let sector = Sector::closure(gen.n, &[&gen.matrix], &[]);
    let a = sector.restrict_matrix(&gen.matrix);
    let x = solve_sector_steady_state(&a, &sector, &sector.restrict_vector(&gen.refill)).map_err(|e| match e {
        Error::RankDeficient { .. } => Error::RankDeficient { null_dim: null_dimension(&gen.matrix) },
        other => other,
    })?;
    let rho = finish_density(&sector.embed(&x), gen.n)?;
    let residual = (&gen.matrix * vectorize(rho.matrix())).norm();
    let tolerance = 1e-10 * gen.matrix.norm().max(1.0);
    if residual > tolerance {
        return Err(Error::NotSteady { residual, tolerance });
    }
    Ok(rho)
}

/// Solves (A - v 1^T) x = -v for the sector-restricted generator `a`.
pub(crate) fn solve_sector_steady_state(
    a: &DMatrix<C64>,
    sector: &Sector,
    refill: &DVector<C64>,
) -> Result<DVector<C64>> {
    let mut m = a.clone();
    for d in 0..sector.n() {
        if let Some(col) = sector.position(vec_index(sector.n(), d, d)) {
            for row in 0..m.nrows() {
                m[(row, col)] -= refill[row];
            }
        }
    }
    let lu = m.lu();
    if pivot_ratio(lu.u().diagonal().iter()) < 1e-12 {
        return Err(Error::RankDeficient { null_dim: 0 });
    }
    lu.solve(&(-refill)).ok_or(Error::RankDeficient { null_dim: 0 })
}

pub(crate) fn pivot_ratio<'a>(diag: impl Iterator<Item = &'a C64>) -> f64 {
    let (lo, hi) = diag.fold((f64::INFINITY, 0.0f64), |(lo, hi), z| (lo.min(z.norm()), hi.max(z.norm())));
    if hi == 0.0 {
        0.0
    } else {
        lo / hi
    }
}

/// Hermitizes and trace-normalizes a vectorized steady state.
pub(crate) fn finish_density(x: &DVector<C64>, n: usize) -> Result<DensityMatrix> {
    let m = unvectorize(x, n);
    let mut rho = (&m + m.adjoint()) * C64::from(0.5);
    let trace = rho.trace().re;
    rho /= C64::from(trace);
    DensityMatrix::new(rho)
}

/// Number of singular values of `m` below 1e-9 of the largest.
pub fn null_dimension(m: &DMatrix<C64>) -> usize {
    let sv = m.clone().singular_values();
    let max = sv.max();
    sv.iter().filter(|&&s| s <= 1e-9 * max.max(1e-300)).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atom_model::{AtomModel, AtomicConstants, DriveParams};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn drive(rabi: f64, detuning: f64) -> DriveParams {
        DriveParams { rabi, detuning, zeeman_shift: 0.0, analysis_freq: 0.0 }
    }

    fn rb_generator(rabi: f64, detuning: f64, gamma: f64) -> (AtomModel, DriftGenerator) {
        let model = AtomModel::rb87_d1(&AtomicConstants::default()).unwrap();
        let gen = build_drift(&model.hamiltonian(&drive(rabi, detuning)), model.dissipation(), gamma).unwrap();
        (model, gen)
    }

    fn two_level_pi(rabi: f64, detuning: f64, gamma: f64) -> DriftGenerator {
        let model = AtomModel::f0_f1_pi();
        build_drift(&model.hamiltonian(&drive(rabi, detuning)), model.dissipation(), gamma).unwrap()
    }

    fn random_hermitian(n: usize, seed: &[f64]) -> DMatrix<C64> {
        let m = DMatrix::from_fn(n, n, |i, j| {
            let k = (i * n + j) % seed.len();
            C64::new(seed[k] * (1.0 + i as f64), seed[(k + 1) % seed.len()] * (j as f64 - 2.0))
        });
        (&m + m.adjoint()) * C64::from(0.5)
    }

    #[test]
    fn isotropic_ground_is_stationary_without_drive() {
        let (model, gen) = rb_generator(0.0, 3.0, 0.1);
        let out = gen.apply(model.dissipation().refill());
        assert_abs_diff_eq!(out.norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn trace_preservation_and_hermiticity() {
        let (model, gen) = rb_generator(30.0, -10.0, 0.01);
        let n = model.dim();
        let ones = vectorize(&DMatrix::identity(n, n));
        let left = gen.matrix().transpose() * &ones;
        assert_abs_diff_eq!(left.norm(), 0.0, epsilon = 1e-12);
        for s in 0..10 {
            let seed: Vec<f64> = (0..7).map(|k| ((k * 37 + s * 11) % 17) as f64 / 17.0 - 0.5).collect();
            let rho = random_hermitian(n, &seed);
            let out = gen.apply(&rho);
            assert_abs_diff_eq!(out.trace().norm(), 0.0, epsilon = 1e-11);
            assert_abs_diff_eq!((&out - out.adjoint()).norm(), 0.0, epsilon = 1e-11);
        }
    }

    #[test]
    fn excited_population_decays_at_unit_rate() {
        let model = AtomModel::rb87_d1(&AtomicConstants::default()).unwrap();
        let n = model.dim();
        let h = DMatrix::zeros(n, n);
        let gen = build_drift(&h, model.dissipation(), 0.0).unwrap();
        // an excited population flows out at rate 1
        let mu = vec_index(n, 9, 9);
        assert_abs_diff_eq!(gen.matrix()[(mu, mu)].re, -1.0, epsilon = 1e-14);
        // with H = 0 the populations form a closed block
        let pops: Vec<usize> = (0..n).map(|d| vec_index(n, d, d)).collect();
        let block = DMatrix::from_fn(n, n, |i, j| gen.matrix()[(pops[i], pops[j])].re);
        let values = block.complex_eigenvalues();
        assert!(values.iter().any(|z| (z - C64::from(-1.0)).norm() < 1e-10));
    }

    #[test]
    fn spectrum_has_no_growing_modes() {
        for (rabi, det, gamma) in [(30.0, -8.0, 0.01), (2.0, 0.5, 0.1), (5.0, 130.0, 1e-3)] {
            let (_, gen) = rb_generator(rabi, det, gamma);
            let values = gen.matrix().clone().schur().eigenvalues().unwrap();
            assert!(values.iter().all(|z| z.re <= 1e-9), "{rabi} {det} {gamma}");
        }
    }

    #[test]
    fn rejects_non_hermitian_hamiltonian() {
        let model = AtomModel::rb87_d1(&AtomicConstants::default()).unwrap();
        let n = model.dim();
        let mut h = DMatrix::<C64>::zeros(n, n);
        h[(0, 5)] = C64::from(1.0);
        assert!(matches!(build_drift(&h, model.dissipation(), 0.1), Err(Error::NonHermitian(_))));
        assert!(build_drift(&DMatrix::zeros(n, n), model.dissipation(), -1.0).is_err());
    }

    #[test]
    fn undriven_steady_state_is_isotropic() {
        let (_, gen) = rb_generator(0.0, 0.0, 0.01);
        let rho = steady_state(&gen).unwrap();
        for g in 0..5 {
            assert_abs_diff_eq!(rho.population(g), 0.2, epsilon = 1e-10);
        }
    }

    #[test]
    fn driven_populations_are_reflection_symmetric() {
        let (model, gen) = rb_generator(30.0, -10.0, 0.01);
        let rho = steady_state(&gen).unwrap();
        let pairs = [(0, 4), (1, 3), (5, 7), (8, 12), (9, 11)];
        for (a, b) in pairs {
            assert_abs_diff_eq!(rho.population(a), rho.population(b), epsilon = 1e-10);
        }
        let total: f64 = (0..model.dim()).map(|i| rho.population(i)).sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn two_level_saturation() {
        for (rabi, det) in [(1.0, 0.0), (3.0, -2.0), (0.4, 5.0), (10.0, 1.5)] {
            let gen = two_level_pi(rabi, det, 0.0);
            let rho = steady_state(&gen).unwrap();
            let expected = (rabi * rabi / 4.0) / (det * det + 0.25 + rabi * rabi / 2.0);
            assert_abs_diff_eq!(rho.population(2), expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn degenerate_point_reports_null_space() {
        let (_, gen) = rb_generator(0.0, 0.0, 0.0);
        match steady_state(&gen) {
            Err(Error::RankDeficient { null_dim }) => assert!(null_dim > 1, "{null_dim}"),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn sector_is_the_even_block() {
        let (model, gen) = rb_generator(30.0, -10.0, 0.01);
        let n = model.dim();
        let a = vectorize(&model.probe_coupling().adjoint().transpose());
        let seeds: Vec<usize> = (0..n * n).filter(|&mu| a[mu] != C64::from(0.0)).collect();
        let sector = Sector::closure(n, &[gen.matrix()], &seeds);
        let basis = crate::atom_model::build_basis();
        let parity = |i: usize| {
            let s = basis.states()[i];
            s.m + if s.level.is_excited() { 1 } else { 0 }
        };
        // even coherences among the 13 bright states, plus the reservoir population
        let expected: Vec<usize> = (0..n * n)
            .filter(|&mu| {
                let (r, c) = (mu % n, mu / n);
                match (r < 13, c < 13) {
                    (true, true) => (parity(r) - parity(c)).rem_euclid(2) == 0,
                    (false, false) => r == c,
                    _ => false,
                }
            })
            .collect();
        assert_eq!(sector.indices(), expected.as_slice());
        assert_eq!(sector.len(), 85 + (n - 13));
        for &mu in sector.indices() {
            assert!(sector.position(bar(n, mu)).is_some());
        }
        // the full steady state lives in the sector
        let rho = steady_state(&gen).unwrap();
        assert_eq!(sector.leakage(&vectorize(rho.matrix())), 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn steady_state_is_physical(rabi in 0.1f64..60.0, det in -50.0f64..200.0, lg in -4.0f64..0.0) {
            let (_, gen) = rb_generator(rabi, det, 10f64.powf(lg));
            let rho = steady_state(&gen).unwrap();
            let min = rho.matrix().clone().symmetric_eigenvalues().min();
            prop_assert!(min >= -1e-10);
            prop_assert!((rho.matrix().trace().re - 1.0).abs() < 1e-12);
        }
    }
}
