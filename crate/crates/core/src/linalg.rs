//! Dense inner-product-space primitives: vectors, Hermitian operators,
//! orthogonal projections and spectra.
//!
//! Everything is stored over `Complex64`. A real space is a complex space
//! whose data happens to have zero imaginary parts; [`Field`] records which
//! one the caller declared.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{FramexError, Result};

pub type C64 = Complex64;
pub type Vector = DVector<C64>;
pub type Matrix = DMatrix<C64>;

/// Hermitian defect tolerance, relative to the operator scale.
pub const TAU_HERM: f64 = 1e-9;
/// Allowed negative eigenvalue, relative to the operator norm.
pub const TAU_PSD: f64 = 1e-9;
/// Generic numerical tolerance, relative to the operator norm.
pub const TAU_NUM: f64 = 1e-9;
/// Gram-Schmidt drops a vector whose residual falls below this times the
/// largest input norm.
pub const TAU_RANKDROP: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    #[default]
    Real,
    Complex,
}

pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn real_vector(entries: &[f64]) -> Vector {
    Vector::from_iterator(entries.len(), entries.iter().map(|&x| C64::new(x, 0.0)))
}

/// Standard basis vector `e_i` of length `dim`.
pub fn unit(dim: usize, i: usize) -> Vector {
    let mut v = Vector::zeros(dim);
    v[i] = C64::new(1.0, 0.0);
    v
}

/// ⟨x, y⟩, linear in the first slot.
pub fn inner(x: &Vector, y: &Vector) -> C64 {
    y.dotc(x)
}

pub fn norm(x: &Vector) -> f64 {
    x.norm()
}

/// Matrix of pairwise inner products, `G[(i, j)] = ⟨x_i, x_j⟩`.
pub fn gram(vectors: &[Vector]) -> Result<Matrix> {
    let n = vectors.len();
    if let Some(first) = vectors.first() {
        check_dims(vectors, first.len())?;
    }
    let mut g = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = inner(&vectors[i], &vectors[j]);
            g[(i, j)] = v;
            g[(j, i)] = v.conj();
        }
    }
    Ok(g)
}

pub(crate) fn check_dims(vectors: &[Vector], dim: usize) -> Result<()> {
    for v in vectors {
        if v.len() != dim {
            return Err(FramexError::DimensionMismatch {
                expected: dim,
                found: v.len(),
            });
        }
    }
    Ok(())
}

/// `v v*` as a plain matrix.
pub fn outer(v: &Vector) -> Matrix {
    v * v.adjoint()
}

/// `u v*` as a plain matrix.
pub fn outer2(u: &Vector, v: &Vector) -> Matrix {
    u * v.adjoint()
}

pub fn identity(dim: usize) -> Matrix {
    Matrix::identity(dim, dim)
}

fn frobenius(m: &Matrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Largest entrywise modulus of `M − M*`.
pub fn hermitian_defect(m: &Matrix) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn hermitian_part(m: &Matrix) -> Matrix {
    (m + m.adjoint()).scale(0.5)
}

fn check_square(m: &Matrix) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(FramexError::DimensionMismatch {
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    Ok(())
}

fn check_hermitian(m: &Matrix) -> Result<()> {
    check_square(m)?;
    let defect = hermitian_defect(m);
    if defect > TAU_HERM * frobenius(m).max(f64::MIN_POSITIVE) {
        return Err(FramexError::NotHermitian(defect));
    }
    Ok(())
}

/// Ascending eigenvalues of the Hermitian part of `m`, without validation.
pub fn eigvalsh(m: &Matrix) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let h = hermitian_part(m);
    let mut vals: Vec<f64> = SymmetricEigen::new(h).eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| a.total_cmp(b));
    vals
}

/// Ascending eigenvalues with matching eigenvector columns. Ties keep the
/// solver's original column order.
pub fn eigh(m: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    check_hermitian(m)?;
    let n = m.nrows();
    if n == 0 {
        return Ok((Vec::new(), Matrix::zeros(0, 0)));
    }
    let eig = SymmetricEigen::new(hermitian_part(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .total_cmp(&eig.eigenvalues[b])
            .then(a.cmp(&b))
    });
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = Matrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vecs.set_column(k, &eig.eigenvectors.column(i));
    }
    Ok((vals, vecs))
}

/// Ascending spectrum of a Hermitian matrix.
pub fn spectrum_of(m: &Matrix) -> Result<Vec<f64>> {
    check_hermitian(m)?;
    Ok(eigvalsh(m))
}

/// (λ_min, λ_max) of the Hermitian part.
pub fn extreme_eigs(m: &Matrix) -> (f64, f64) {
    let vals = eigvalsh(m);
    match (vals.first(), vals.last()) {
        (Some(&lo), Some(&hi)) => (lo, hi),
        _ => (0.0, 0.0),
    }
}

/// Operator norm of a Hermitian matrix (largest eigenvalue modulus).
pub fn hermitian_norm(m: &Matrix) -> f64 {
    let (lo, hi) = extreme_eigs(m);
    lo.abs().max(hi.abs())
}

/// Operator norm of an arbitrary square matrix.
pub fn spectral_norm(m: &Matrix) -> f64 {
    let (_, hi) = extreme_eigs(&(m.adjoint() * m));
    hi.max(0.0).sqrt()
}

/// Inverse of a Hermitian positive definite matrix through its
/// eigendecomposition.
pub fn hpd_inverse(m: &Matrix) -> Result<Matrix> {
    let (vals, vecs) = eigh(m)?;
    let top = vals.last().copied().unwrap_or(0.0);
    if vals.first().is_none_or(|&lo| lo <= 0.0 || lo <= 1e-300 * top) {
        return Err(FramexError::NotAFrame {
            lower: vals.first().copied().unwrap_or(0.0),
            upper: top,
        });
    }
    let n = vals.len();
    let mut scaled = vecs.clone();
    for (k, &lam) in vals.iter().enumerate() {
        let s = C64::new(1.0 / lam, 0.0);
        for i in 0..n {
            scaled[(i, k)] *= s;
        }
    }
    Ok(hermitian_part(&(scaled * vecs.adjoint())))
}

/// Hermitian positive semidefinite operator with cached trace, norm and
/// spectrum.
#[derive(Clone, Debug)]
pub struct PsdOperator {
    matrix: Matrix,
    trace: f64,
    opnorm: f64,
    spectrum: Vec<f64>,
}

impl PsdOperator {
    pub fn new(matrix: Matrix) -> Result<Self> {
        check_hermitian(&matrix)?;
        let matrix = hermitian_part(&matrix);
        let spectrum = eigvalsh(&matrix);
        let opnorm = spectrum
            .iter()
            .fold(0.0_f64, |acc, &v| acc.max(v.abs()));
        let lo = spectrum.first().copied().unwrap_or(0.0);
        if lo < -TAU_PSD * opnorm {
            return Err(FramexError::NotPsd(lo));
        }
        let trace = matrix.diagonal().iter().map(|z| z.re).sum();
        Ok(PsdOperator {
            matrix,
            trace,
            opnorm,
            spectrum,
        })
    }

    pub fn zero(dim: usize) -> Self {
        PsdOperator {
            matrix: Matrix::zeros(dim, dim),
            trace: 0.0,
            opnorm: 0.0,
            spectrum: vec![0.0; dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        PsdOperator {
            matrix: identity(dim),
            trace: dim as f64,
            opnorm: if dim > 0 { 1.0 } else { 0.0 },
            spectrum: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> Matrix {
        self.matrix
    }

    pub fn trace(&self) -> f64 {
        self.trace
    }

    pub fn opnorm(&self) -> f64 {
        self.opnorm
    }

    pub fn spectrum(&self) -> &[f64] {
        &self.spectrum
    }

    pub fn lambda_min(&self) -> f64 {
        self.spectrum.first().copied().unwrap_or(0.0)
    }

    pub fn lambda_max(&self) -> f64 {
        self.spectrum.last().copied().unwrap_or(0.0)
    }

    /// `s·T` for `s ≥ 0`.
    pub fn scaled(&self, s: f64) -> Self {
        assert!(s >= 0.0, "negative scale on a PSD operator");
        PsdOperator {
            matrix: self.matrix.scale(s),
            trace: self.trace * s,
            opnorm: self.opnorm * s,
            spectrum: self.spectrum.iter().map(|v| v * s).collect(),
        }
    }

    pub fn apply(&self, x: &Vector) -> Vector {
        &self.matrix * x
    }

    /// `P T P` as a matrix.
    pub fn compress(&self, p: &Projection) -> Matrix {
        p.matrix() * &self.matrix * p.matrix()
    }

    /// `tr(P T P)`.
    pub fn compressed_trace(&self, p: &Projection) -> f64 {
        // tr(PTP) = Σ_k ⟨T u_k, u_k⟩ over an orthonormal basis of the range.
        p.basis()
            .iter()
            .map(|u| inner(&(&self.matrix * u), u).re)
            .sum()
    }

    /// Sum of operators, revalidated.
    pub fn sum<'a>(dim: usize, ops: impl IntoIterator<Item = &'a PsdOperator>) -> Result<Self> {
        let mut m = Matrix::zeros(dim, dim);
        for op in ops {
            if op.dim() != dim {
                return Err(FramexError::DimensionMismatch {
                    expected: dim,
                    found: op.dim(),
                });
            }
            m += &op.matrix;
        }
        PsdOperator::new(m)
    }
}

/// Spectrum of a PSD operator, ascending.
pub fn spectrum(op: &PsdOperator) -> Vec<f64> {
    op.spectrum.clone()
}

/// The operator `x ↦ ⟨x, v⟩ v`.
pub fn rank_one(v: &Vector) -> Result<PsdOperator> {
    let nrm2 = v.norm_squared();
    if nrm2 == 0.0 {
        return Err(FramexError::ZeroVector);
    }
    let dim = v.len();
    let mut spectrum = vec![0.0; dim];
    spectrum[dim - 1] = nrm2;
    Ok(PsdOperator {
        matrix: outer(v),
        trace: nrm2,
        opnorm: nrm2,
        spectrum,
    })
}

/// Orthogonal projection, stored through an orthonormal basis of its range.
#[derive(Clone, Debug)]
pub struct Projection {
    dim: usize,
    basis: Vec<Vector>,
    matrix: Matrix,
}

impl Projection {
    pub fn zero(dim: usize) -> Self {
        Projection {
            dim,
            basis: Vec::new(),
            matrix: Matrix::zeros(dim, dim),
        }
    }

    pub fn full(dim: usize) -> Self {
        Projection {
            dim,
            basis: (0..dim).map(|i| unit(dim, i)).collect(),
            matrix: identity(dim),
        }
    }

    fn from_orthonormal(dim: usize, basis: Vec<Vector>) -> Self {
        let mut matrix = Matrix::zeros(dim, dim);
        for u in &basis {
            matrix += outer(u);
        }
        Projection { dim, basis, matrix }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[Vector] {
        &self.basis
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn apply(&self, x: &Vector) -> Vector {
        let mut out = Vector::zeros(self.dim);
        for u in &self.basis {
            out += u * inner(x, u);
        }
        out
    }

    /// Projection onto the orthogonal complement of the range.
    pub fn complement(&self) -> Self {
        let mut basis = self.basis.clone();
        let start = basis.len();
        // Take the coordinate vector with the largest residual each round; the
        // best one always has residual norm at least (k/dim)^{1/2}.
        while basis.len() < self.dim {
            let best = (0..self.dim)
                .filter_map(|i| {
                    let e = unit(self.dim, i);
                    let mut r = e.clone();
                    for u in &basis {
                        r -= u * inner(&e, u);
                    }
                    Some((r.norm(), i))
                })
                .max_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
            match best {
                Some((_, i)) => match orthonormal_residual(&unit(self.dim, i), &basis, 1e-8) {
                    Some(u) => basis.push(u),
                    None => break,
                },
                None => break,
            }
        }
        Projection::from_orthonormal(self.dim, basis.split_off(start))
    }

    /// Projection onto the closed span of both ranges.
    pub fn join(&self, other: &Projection) -> Self {
        let mut all = self.basis.clone();
        all.extend(other.basis.iter().cloned());
        project_onto(self.dim, &all)
    }

    /// ‖P² − P‖ and ‖P − P*‖ (entrywise max) for diagnostics.
    pub fn defects(&self) -> (f64, f64) {
        let sq = &self.matrix * &self.matrix - &self.matrix;
        let idem = sq.iter().fold(0.0_f64, |a, z| a.max(z.norm()));
        (idem, hermitian_defect(&self.matrix))
    }
}

/// Residual of `v` against an orthonormal list, normalised, or `None` if the
/// residual norm is at most `threshold`. Two Gram-Schmidt passes.
fn orthonormal_residual(v: &Vector, basis: &[Vector], threshold: f64) -> Option<Vector> {
    let mut r = v.clone();
    for _ in 0..2 {
        for u in basis {
            let c = inner(&r, u);
            r -= u * c;
        }
    }
    let nr = r.norm();
    if nr <= threshold {
        None
    } else {
        Some(r.unscale(nr))
    }
}

/// Projection onto the span of `vectors` (zero projection when empty).
pub fn project_onto(dim: usize, vectors: &[Vector]) -> Projection {
    let max_norm = vectors.iter().map(|v| v.norm()).fold(0.0_f64, f64::max);
    let threshold = TAU_RANKDROP * max_norm;
    let mut basis: Vec<Vector> = Vec::new();
    for v in vectors {
        assert_eq!(v.len(), dim, "project_onto: dimension mismatch");
        if basis.len() == dim {
            break;
        }
        if let Some(u) = orthonormal_residual(v, &basis, threshold) {
            basis.push(u);
        }
    }
    Projection::from_orthonormal(dim, basis)
}

/// Checked variant of [`project_onto`].
pub fn try_project_onto(dim: usize, vectors: &[Vector]) -> Result<Projection> {
    check_dims(vectors, dim)?;
    Ok(project_onto(dim, vectors))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SandwichReport {
    /// (‖P T P‖ · ‖P⊥ T P⊥‖)^{1/2}
    pub c_m: f64,
    /// Extremal eigenvalues of `T − P T P − P⊥ T P⊥`.
    pub deviation_min: f64,
    pub deviation_max: f64,
    pub holds: bool,
}

/// Bound on the off-diagonal blocks of `T` relative to the split `M ⊕ M⊥`.
pub fn sandwich_bound(op: &PsdOperator, p: &Projection) -> Result<SandwichReport> {
    if p.dim() != op.dim() {
        return Err(FramexError::DimensionMismatch {
            expected: op.dim(),
            found: p.dim(),
        });
    }
    let q = p.complement();
    let inside = op.compress(p);
    let outside = op.compress(&q);
    let c_m = (hermitian_norm(&inside) * hermitian_norm(&outside)).sqrt();
    let dev = op.matrix() - &inside - &outside;
    let (lo, hi) = extreme_eigs(&dev);
    let slack = TAU_NUM * op.opnorm().max(f64::MIN_POSITIVE);
    Ok(SandwichReport {
        c_m,
        deviation_min: lo,
        deviation_max: hi,
        holds: lo >= -c_m - slack && hi <= c_m + slack,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_vec(rng: &mut ChaCha8Rng, d: usize) -> Vector {
        Vector::from_fn(d, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    fn rand_psd(rng: &mut ChaCha8Rng, d: usize) -> PsdOperator {
        let mut m = Matrix::zeros(d, d);
        for _ in 0..d {
            m += outer(&rand_vec(rng, d));
        }
        PsdOperator::new(m).unwrap()
    }

    fn max_entry(m: &Matrix) -> f64 {
        m.iter().fold(0.0, |a, z| a.max(z.norm()))
    }

    #[test]
    fn gram_of_onb_is_identity() {
        let g = gram(&[unit(2, 0), unit(2, 1)]).unwrap();
        assert!(max_entry(&(g - identity(2))) == 0.0);
    }

    #[test]
    fn gram_of_repeated_vector_is_all_ones() {
        let g = gram(&[unit(2, 0), unit(2, 0)]).unwrap();
        assert!(g.iter().all(|z| *z == C64::new(1.0, 0.0)));
    }

    #[test]
    fn gram_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let vs: Vec<Vector> = (0..3).map(|_| rand_vec(&mut rng, 4)).collect();
        let g = gram(&vs).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let mut s = C64::new(0.0, 0.0);
                for k in 0..4 {
                    s += vs[i][k] * vs[j][k].conj();
                }
                assert!((g[(i, j)] - s).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn gram_rejects_mixed_dims() {
        assert!(matches!(
            gram(&[unit(2, 0), unit(3, 0)]),
            Err(FramexError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn rank_one_examples() {
        let t = rank_one(&unit(3, 0)).unwrap();
        let mut expect = Matrix::zeros(3, 3);
        expect[(0, 0)] = C64::new(1.0, 0.0);
        assert_eq!(t.matrix(), &expect);

        let h = std::f64::consts::FRAC_1_SQRT_2;
        let t = rank_one(&real_vector(&[h, h])).unwrap();
        assert!(t.matrix().iter().all(|z| (z.re - 0.5).abs() < 1e-15 && z.im == 0.0));

        assert!(matches!(rank_one(&Vector::zeros(2)), Err(FramexError::ZeroVector)));
    }

    #[test]
    fn rank_one_trace_is_norm_squared() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v = rand_vec(&mut rng, 5);
        let t = rank_one(&v).unwrap();
        let diag: f64 = t.matrix().diagonal().iter().map(|z| z.re).sum();
        assert!((t.trace() - v.norm_squared()).abs() < 1e-12);
        assert!((diag - v.norm_squared()).abs() < 1e-12);
    }

    #[test]
    fn spectrum_examples() {
        assert_eq!(spectrum(&PsdOperator::identity(4)), vec![1.0; 4]);
        let mut m = Matrix::zeros(2, 2);
        m[(0, 0)] = C64::new(2.0, 0.0);
        m[(1, 1)] = C64::new(1.0, 0.0);
        let s = spectrum(&PsdOperator::new(m).unwrap());
        assert!((s[0] - 1.0).abs() < 1e-15 && (s[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn spectrum_sums_to_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = rand_psd(&mut rng, 6);
        let s = spectrum(&t);
        assert!(s.windows(2).all(|w| w[0] <= w[1]));
        assert!(s[0] >= -TAU_PSD * t.opnorm());
        assert!((s.iter().sum::<f64>() - t.trace()).abs() < 1e-9 * t.opnorm());
    }

    #[test]
    fn eigh_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let t = rand_psd(&mut rng, 5);
        let (vals, vecs) = eigh(t.matrix()).unwrap();
        let d = Matrix::from_diagonal(&Vector::from_iterator(5, vals.iter().map(|&v| C64::new(v, 0.0))));
        let back = &vecs * d * vecs.adjoint();
        assert!(max_entry(&(back - t.matrix())) < 1e-9 * t.opnorm());
    }

    #[test]
    fn non_hermitian_rejected() {
        let mut m = Matrix::zeros(2, 2);
        m[(0, 1)] = C64::new(1.0, 0.0);
        assert!(matches!(spectrum_of(&m), Err(FramexError::NotHermitian(_))));
        assert!(matches!(PsdOperator::new(m), Err(FramexError::NotHermitian(_))));
    }

    #[test]
    fn indefinite_rejected() {
        let mut m = identity(2);
        m[(1, 1)] = C64::new(-1.0, 0.0);
        assert!(matches!(PsdOperator::new(m), Err(FramexError::NotPsd(_))));
    }

    #[test]
    fn projection_examples() {
        let p = project_onto(3, &[unit(3, 0)]);
        assert_eq!(p.apply(&unit(3, 0)), unit(3, 0));
        assert_eq!(p.apply(&unit(3, 1)).norm(), 0.0);

        let a = project_onto(2, &[unit(2, 0), unit(2, 0) + unit(2, 1)]);
        let b = project_onto(2, &[unit(2, 0), unit(2, 1)]);
        assert!(max_entry(&(a.matrix() - b.matrix())) < 1e-15);

        assert_eq!(project_onto(4, &[]).rank(), 0);
    }

    #[test]
    fn random_projection_is_idempotent_and_selfadjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let vs: Vec<Vector> = (0..3).map(|_| rand_vec(&mut rng, 5)).collect();
        let p = project_onto(5, &vs);
        assert_eq!(p.rank(), 3);
        let (idem, herm) = p.defects();
        assert!(idem < 1e-9 && herm < 1e-9);
        let q = p.complement();
        assert_eq!(q.rank(), 2);
        assert!(max_entry(&(p.matrix() + q.matrix() - identity(5))) < 1e-12);
    }

    #[test]
    fn dependent_vectors_are_dropped() {
        let v = real_vector(&[1.0, 2.0, 0.0]);
        let p = project_onto(3, &[v.clone(), v.scale(3.0), Vector::zeros(3)]);
        assert_eq!(p.rank(), 1);
    }

    #[test]
    fn sandwich_identity_and_projection() {
        let p = project_onto(3, &[unit(3, 0), unit(3, 2)]);
        let r = sandwich_bound(&PsdOperator::identity(3), &p).unwrap();
        assert!((r.c_m - 1.0).abs() < 1e-15);
        assert!(r.deviation_min.abs() < 1e-15 && r.deviation_max.abs() < 1e-15);

        let t = PsdOperator::new(p.matrix().clone()).unwrap();
        let r = sandwich_bound(&t, &p).unwrap();
        assert!(r.deviation_min.abs() < 1e-14 && r.deviation_max.abs() < 1e-14 && r.holds);
    }

    #[test]
    fn sandwich_random_within_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for d in 2..=6 {
            let t = rand_psd(&mut rng, d);
            let k = rng.random_range(1..d);
            let vs: Vec<Vector> = (0..k).map(|_| rand_vec(&mut rng, d)).collect();
            let p = project_onto(d, &vs);
            let r = sandwich_bound(&t, &p).unwrap();
            assert!(r.holds, "{r:?}");
        }
    }

    #[test]
    fn hpd_inverse_inverts() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let t = rand_psd(&mut rng, 4);
        let inv = hpd_inverse(t.matrix()).unwrap();
        assert!(max_entry(&(inv * t.matrix() - identity(4))) < 1e-8);
    }
}
