//! Frames, Hermitian projections and unitaries.
//!
//! A frame is a `k x n` complex matrix with orthonormal rows. Its Gram matrix
//! `F* F` is the orthogonal projection onto the row space, a point of the
//! Grassmannian `{P Hermitian : P^2 = P, tr P = k}`. The left action of `U(k)`
//! moves a frame inside its fiber and leaves the Gram projection fixed.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{FrameError, Result};
use crate::polytope::NormVector;
use crate::rng;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;

/// Acceptance tolerance for stored invariants.
pub const TOL_ALG: f64 = 1e-9;

const PHASE_PIVOT: f64 = 1e-8;
const TIE_GAP: f64 = 1e-12;

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Largest entry modulus.
pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

pub fn hermitian_residual(m: &CMat) -> f64 {
    if m.nrows() != m.ncols() {
        return f64::INFINITY;
    }
    max_abs(&(m - m.adjoint()))
}

/// Real diagonal matrix as a complex matrix.
pub fn diag(values: &[f64]) -> CMat {
    let n = values.len();
    CMat::from_fn(n, n, |i, j| if i == j { c(values[i]) } else { C64::new(0.0, 0.0) })
}

/// Multiply a vector by the unit scalar that makes its first significant
/// entry real and positive.
pub fn fix_phase(v: &mut [C64]) {
    if let Some(z) = v.iter().find(|z| z.norm() >= PHASE_PIVOT).copied() {
        let phase = z.conj() / z.norm();
        for x in v.iter_mut() {
            *x *= phase;
        }
    }
}

/// Eigendecomposition of a Hermitian matrix with eigenvalues in descending
/// order (ties by original index) and phase-fixed eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: CMat,
}

pub fn hermitian_eigen(h: &CMat) -> HermitianEigen {
    let n = h.nrows();
    if n == 0 {
        return HermitianEigen {
            values: Vec::new(),
            vectors: CMat::zeros(0, 0),
        };
    }
    // symmetrize so the solver never sees a slightly non-Hermitian input
    let sym = (h + h.adjoint()) * c(0.5);
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut vectors = CMat::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        values.push(eig.eigenvalues[src]);
        let mut col: Vec<C64> = eig.eigenvectors.column(src).iter().copied().collect();
        fix_phase(&mut col);
        for (i, z) in col.into_iter().enumerate() {
            vectors[(i, dst)] = z;
        }
    }
    HermitianEigen { values, vectors }
}

/// Orthonormalize the rows of `m` (modified Gram-Schmidt, two passes); each
/// pivot is the positive real row norm.
pub fn orthonormalize_rows(m: &CMat) -> CMat {
    let (k, n) = m.shape();
    let mut q = m.clone();
    for i in 0..k {
        for _pass in 0..2 {
            for j in 0..i {
                let proj: C64 = (0..n).map(|t| q[(i, t)] * q[(j, t)].conj()).sum();
                for t in 0..n {
                    let qj = q[(j, t)];
                    q[(i, t)] -= proj * qj;
                }
            }
        }
        let norm = q.row(i).norm();
        for t in 0..n {
            q[(i, t)] /= norm;
        }
    }
    q
}

/// A normalized tight frame: `k x n`, `F F* = I_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    matrix: CMat,
}

impl Frame {
    pub fn new(matrix: CMat) -> Result<Self> {
        let (k, n) = matrix.shape();
        if k > n {
            return Err(FrameError::BadDimensions(format!("k = {k} exceeds n = {n}")));
        }
        let residual = tightness_residual(&matrix);
        if residual > TOL_ALG {
            return Err(FrameError::FrameInvariantViolated { residual });
        }
        Ok(Frame { matrix })
    }

    pub(crate) fn from_matrix_unchecked(matrix: CMat) -> Self {
        Frame { matrix }
    }

    /// `[I_k | 0]`.
    pub fn standard(n: usize, k: usize) -> Self {
        Frame {
            matrix: CMat::from_fn(k, n, |i, j| if i == j { c(1.0) } else { c(0.0) }),
        }
    }

    pub fn n(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn k(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMat {
        self.matrix
    }

    pub fn tightness_residual(&self) -> f64 {
        tightness_residual(&self.matrix)
    }

    /// Frobenius distance to another frame of the same shape.
    pub fn distance(&self, other: &Frame) -> f64 {
        (&self.matrix - &other.matrix).norm()
    }
}

fn tightness_residual(m: &CMat) -> f64 {
    let k = m.nrows();
    max_abs(&(m * m.adjoint() - CMat::identity(k, k)))
}

/// Orthogonal projection of rank `k`, a point of `Gr_k(C^n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMatrix {
    matrix: CMat,
    rank: usize,
}

impl ProjectionMatrix {
    pub fn new(matrix: CMat) -> Result<Self> {
        let rank = validate_projection(&matrix, TOL_ALG)?;
        Ok(ProjectionMatrix { matrix, rank })
    }

    pub(crate) fn from_matrix_unchecked(matrix: CMat, rank: usize) -> Self {
        ProjectionMatrix { matrix, rank }
    }

    /// `Diag(chi_u)` for a set `u` of coordinates.
    pub fn coordinate(n: usize, support: &[usize]) -> Self {
        let mut values = vec![0.0; n];
        for &j in support {
            values[j] = 1.0;
        }
        ProjectionMatrix {
            matrix: diag(&values),
            rank: support.len(),
        }
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMat {
        self.matrix
    }

    pub fn distance(&self, other: &ProjectionMatrix) -> f64 {
        (&self.matrix - &other.matrix).norm()
    }

    pub fn idempotency_residual(&self) -> f64 {
        max_abs(&(&self.matrix * &self.matrix - &self.matrix))
    }

    /// Orthonormal basis of the range, as the columns of an `n x k` matrix.
    pub fn range_basis(&self) -> CMat {
        let eig = hermitian_eigen(&self.matrix);
        eig.vectors.columns(0, self.rank).into_owned()
    }
}

fn validate_projection(m: &CMat, tol: f64) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(FrameError::NotAProjection(format!(
            "shape {}x{} is not square",
            m.nrows(),
            m.ncols()
        )));
    }
    let herm = hermitian_residual(m);
    if herm > tol {
        return Err(FrameError::NotAProjection(format!("Hermitian residual {herm:e}")));
    }
    let idem = max_abs(&(m * m - m));
    if idem > tol {
        return Err(FrameError::NotAProjection(format!("idempotency residual {idem:e}")));
    }
    let trace = m.trace();
    let rank = trace.re.round();
    if (trace.re - rank).abs() > tol || trace.im.abs() > tol || rank < 0.0 {
        return Err(FrameError::TraceNotIntegral { trace: trace.re });
    }
    Ok(rank as usize)
}

/// Element of `U(k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryMatrix {
    matrix: CMat,
}

impl UnitaryMatrix {
    pub fn new(matrix: CMat) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(FrameError::DimensionMismatch("unitary must be square".into()));
        }
        let residual = tightness_residual(&matrix);
        if residual > TOL_ALG {
            return Err(FrameError::FrameInvariantViolated { residual });
        }
        Ok(UnitaryMatrix { matrix })
    }

    pub(crate) fn from_matrix_unchecked(matrix: CMat) -> Self {
        UnitaryMatrix { matrix }
    }

    pub fn identity(k: usize) -> Self {
        UnitaryMatrix {
            matrix: CMat::identity(k, k),
        }
    }

    /// `Diag(e^{i theta_1}, ..., e^{i theta_k})`.
    pub fn phases(thetas: &[f64]) -> Self {
        let k = thetas.len();
        UnitaryMatrix {
            matrix: CMat::from_fn(k, k, |i, j| {
                if i == j {
                    C64::from_polar(1.0, thetas[i])
                } else {
                    c(0.0)
                }
            }),
        }
    }

    /// Haar-distributed unitary.
    pub fn random<R: rand::Rng>(k: usize, rng: &mut R) -> Self {
        UnitaryMatrix {
            matrix: orthonormalize_rows(&rng::gaussian_matrix(k, k, rng)),
        }
    }

    pub fn k(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }
}

/// The bundle map `F -> F* F`.
pub fn gram_projection(frame: &Frame) -> Result<ProjectionMatrix> {
    let residual = frame.tightness_residual();
    if residual > TOL_ALG {
        return Err(FrameError::FrameInvariantViolated { residual });
    }
    let m = frame.matrix();
    let p = m.adjoint() * m;
    Ok(ProjectionMatrix::from_matrix_unchecked(p, frame.k()))
}

/// A frame whose Gram projection is `p`: the rows are the conjugated
/// eigenvectors for the `k` eigenvalues nearest 1, each phase-fixed.
pub fn factor_projection(p: &ProjectionMatrix) -> Result<Frame> {
    let k = validate_projection(p.matrix(), TOL_ALG)?;
    let n = p.n();
    let eig = hermitian_eigen(p.matrix());
    let mut f = CMat::zeros(k, n);
    for i in 0..k {
        let mut row: Vec<C64> = eig.vectors.column(i).iter().map(|z| z.conj()).collect();
        fix_phase(&mut row);
        for (j, z) in row.into_iter().enumerate() {
            f[(i, j)] = z;
        }
    }
    Ok(Frame::from_matrix_unchecked(f))
}

pub fn unitary_act(u: &UnitaryMatrix, frame: &Frame) -> Result<Frame> {
    if u.k() != frame.k() {
        return Err(FrameError::DimensionMismatch(format!(
            "unitary is {0}x{0}, frame has k = {1}",
            u.k(),
            frame.k()
        )));
    }
    Ok(Frame::from_matrix_unchecked(u.matrix() * frame.matrix()))
}

/// Projection onto the top-`k` eigenspace of a Hermitian matrix.
pub fn nearest_projection(h: &CMat, k: usize) -> Result<ProjectionMatrix> {
    let n = h.nrows();
    if h.ncols() != n || k > n {
        return Err(FrameError::DimensionMismatch(format!(
            "{}x{} matrix, rank {k}",
            h.nrows(),
            h.ncols()
        )));
    }
    let residual = hermitian_residual(h);
    if residual > TOL_ALG {
        return Err(FrameError::NotHermitian { residual });
    }
    let eig = hermitian_eigen(h);
    if k > 0 && k < n && eig.values[k - 1] - eig.values[k] <= TIE_GAP {
        return Err(FrameError::EigenvalueTie {
            upper: eig.values[k - 1],
            lower: eig.values[k],
        });
    }
    let v = eig.vectors.columns(0, k);
    let p = v * v.adjoint();
    Ok(ProjectionMatrix::from_matrix_unchecked(p, k))
}

/// Haar-random frame: orthonormalized Gaussian rows.
pub fn random_frame(n: usize, k: usize, seed: u64) -> Frame {
    assert!(k <= n, "random_frame needs k <= n");
    let mut rng = rng::stream(seed, "random_frame", ((n as u64) << 32) | k as u64);
    Frame::from_matrix_unchecked(orthonormalize_rows(&rng::gaussian_matrix(k, n, &mut rng)))
}

pub fn random_projection(n: usize, k: usize, seed: u64) -> ProjectionMatrix {
    let frame = random_frame(n, k, seed);
    let m = frame.matrix();
    ProjectionMatrix::from_matrix_unchecked(m.adjoint() * m, k)
}

/// Squared column norms `(|f_1|^2, ..., |f_n|^2)`.
pub fn column_norms(frame: &Frame) -> NormVector {
    let d = frame
        .matrix()
        .column_iter()
        .map(|col| col.norm_squared())
        .collect();
    NormVector::from_parts_unchecked(frame.k(), d)
}

/// `M = U diag(s) V*` for a square `M`, singular values descending.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: CMat,
    pub singular_values: Vec<f64>,
    pub v: CMat,
}

/// SVD of a square matrix from the eigendecomposition of `M* M`.
/// Singular values below `1e-7 * s_max` are only resolved to that absolute
/// accuracy; their `U` columns complete an orthonormal basis. (nalgebra's
/// complex SVD returns wrong factors for a small fraction of inputs.)
pub fn svd_square(m: &CMat) -> Svd {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "svd_square needs a square matrix");
    let eig = hermitian_eigen(&(m.adjoint() * m));
    let singular_values: Vec<f64> = eig.values.iter().map(|&x| x.max(0.0).sqrt()).collect();
    let floor = singular_values.first().copied().unwrap_or(0.0) * 1e-7;
    let mv = m * &eig.vectors;
    let mut u = CMat::zeros(n, n);
    let mut basis = 0;
    for i in 0..n {
        let mut placed = singular_values[i] > floor
            && place_orthonormal(&mut u, i, mv.column(i).unscale(singular_values[i]));
        while !placed && basis < n {
            let mut e = DVector::zeros(n);
            e[basis] = c(1.0);
            basis += 1;
            placed = place_orthonormal(&mut u, i, e);
        }
    }
    Svd {
        u,
        singular_values,
        v: eig.vectors,
    }
}

/// Orthogonalize `col` against the first `i` columns of `u` (two passes) and
/// store it normalized as column `i`, unless it is nearly dependent.
fn place_orthonormal(u: &mut CMat, i: usize, mut col: DVector<C64>) -> bool {
    for _ in 0..2 {
        for j in 0..i {
            let proj = u.column(j).dotc(&col);
            col -= u.column(j) * proj;
        }
    }
    let norm = col.norm();
    if norm < 1e-6 {
        return false;
    }
    u.set_column(i, &col.unscale(norm));
    true
}

/// Unitary polar factor `W` of a square matrix `M = W H`.
pub fn polar_unitary(m: &CMat) -> CMat {
    let svd = svd_square(m);
    svd.u * svd.v.adjoint()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn frame(rows: usize, cols: usize, values: &[f64]) -> Frame {
        Frame::new(CMat::from_row_iterator(rows, cols, values.iter().map(|&x| c(x)))).unwrap()
    }

    #[test]
    fn gram_of_identity_block() {
        let f = Frame::standard(4, 2);
        let p = gram_projection(&f).unwrap();
        assert!(max_abs(&(p.matrix() - diag(&[1.0, 1.0, 0.0, 0.0]))) == 0.0);
        assert_eq!(p.rank(), 2);
    }

    #[test]
    fn gram_of_rank_one_outer_product() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let p = gram_projection(&frame(1, 2, &[s, s])).unwrap();
        for z in p.matrix().iter() {
            assert!((z - c(0.5)).norm() < 1e-15);
        }
    }

    #[test]
    fn gram_of_random_frame_is_projection() {
        let f = random_frame(5, 2, 11);
        let p = gram_projection(&f).unwrap();
        assert!(p.idempotency_residual() <= 1e-12);
        assert!((p.matrix().trace() - c(2.0)).norm() <= 1e-12);
        let norms = column_norms(&f);
        for j in 0..5 {
            assert!((p.matrix()[(j, j)].re - norms.d()[j]).abs() <= 1e-12);
        }
    }

    #[test]
    fn gram_rejects_non_tight_matrix() {
        let bad = Frame::from_matrix_unchecked(CMat::from_element(1, 2, c(1.0)));
        assert!(matches!(
            gram_projection(&bad),
            Err(FrameError::FrameInvariantViolated { .. })
        ));
    }

    #[test]
    fn factor_diagonal_projection() {
        let p = ProjectionMatrix::coordinate(4, &[0, 1]);
        let f = factor_projection(&p).unwrap();
        assert_eq!(f.k(), 2);
        for i in 0..2 {
            assert!(f.matrix()[(i, 2)].norm() < 1e-15 && f.matrix()[(i, 3)].norm() < 1e-15);
        }
        assert!(gram_projection(&f).unwrap().distance(&p) < 1e-14);
    }

    #[test]
    fn factor_round_trip_random() {
        for seed in 0..20 {
            let p = random_projection(6, 3, seed);
            let f = factor_projection(&p).unwrap();
            assert!(f.tightness_residual() < 1e-12);
            assert!(max_abs(&(gram_projection(&f).unwrap().matrix() - p.matrix())) < 1e-10);
        }
    }

    #[test]
    fn non_idempotent_is_rejected() {
        let err = ProjectionMatrix::new(diag(&[0.5; 4])).unwrap_err();
        assert!(matches!(err, FrameError::NotAProjection(_)));
        let forged = ProjectionMatrix::from_matrix_unchecked(diag(&[0.5; 4]), 2);
        assert!(matches!(factor_projection(&forged), Err(FrameError::NotAProjection(_))));
    }

    #[test]
    fn unitary_action_preserves_gram_and_norms() {
        let f = random_frame(5, 2, 3);
        assert_eq!(unitary_act(&UnitaryMatrix::identity(2), &f).unwrap(), f);
        let phases = UnitaryMatrix::phases(&[0.3, -1.7]);
        let g = unitary_act(&phases, &f).unwrap();
        let p = gram_projection(&f).unwrap();
        assert!(max_abs(&(gram_projection(&g).unwrap().matrix() - p.matrix())) <= 1e-12);
        let mut rng = rng::stream(3, "u", 0);
        let u = UnitaryMatrix::random(2, &mut rng);
        let h = unitary_act(&u, &f).unwrap();
        assert!(max_abs(&(gram_projection(&h).unwrap().matrix() - p.matrix())) <= 1e-12);
        let (a, b) = (column_norms(&f), column_norms(&h));
        for j in 0..5 {
            assert!((a.d()[j] - b.d()[j]).abs() <= 1e-12);
        }
        assert!(matches!(
            unitary_act(&UnitaryMatrix::identity(3), &f),
            Err(FrameError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn nearest_projection_cases() {
        let p = random_projection(5, 2, 9);
        let q = nearest_projection(p.matrix(), 2).unwrap();
        assert!(q.distance(&p) < 1e-12);

        let q = nearest_projection(&diag(&[0.9, 0.6, 0.4, 0.1]), 2).unwrap();
        assert!(max_abs(&(q.matrix() - diag(&[1.0, 1.0, 0.0, 0.0]))) < 1e-14);

        let mut rng = rng::stream(9, "perturb", 0);
        let h = p.matrix() + rng::hermitian_direction(5, &mut rng) * c(1e-3);
        let q = nearest_projection(&h, 2).unwrap();
        let dist = q.distance(&p);
        assert!(dist < 5e-3 && dist > 0.0, "distance {dist}");
    }

    #[test]
    fn nearest_projection_errors() {
        assert!(matches!(
            nearest_projection(&diag(&[1.0, 0.5, 0.5, 0.0]), 2),
            Err(FrameError::EigenvalueTie { .. })
        ));
        let mut h = diag(&[1.0, 0.0]);
        h[(0, 1)] = c(0.3);
        assert!(matches!(nearest_projection(&h, 1), Err(FrameError::NotHermitian { .. })));
    }

    #[test]
    fn random_frame_contracts() {
        let empty = random_frame(4, 0, 1);
        assert_eq!(empty.k(), 0);
        assert_eq!(max_abs(gram_projection(&empty).unwrap().matrix()), 0.0);

        assert_eq!(random_frame(6, 3, 42), random_frame(6, 3, 42));
        for seed in 0..10 {
            assert!(random_frame(6, 3, seed).tightness_residual() <= 1e-12);
        }
    }

    #[test]
    fn column_norms_sum_to_k() {
        let f = Frame::standard(4, 2);
        assert_eq!(column_norms(&f).d(), &[1.0, 1.0, 0.0, 0.0]);
        let g = random_frame(7, 3, 5);
        let s: f64 = column_norms(&g).d().iter().sum();
        assert!((s - 3.0).abs() < 1e-10);
    }

    #[test]
    fn eigenvalues_sorted_and_phases_fixed() {
        let p = random_projection(5, 2, 1);
        let eig = hermitian_eigen(p.matrix());
        assert!(eig.values.windows(2).all(|w| w[0] >= w[1]));
        for col in eig.vectors.column_iter() {
            let first = col.iter().find(|z| z.norm() >= PHASE_PIVOT).unwrap();
            assert!(first.im.abs() < 1e-14 && first.re > 0.0);
        }
    }

    fn arb_shape() -> impl Strategy<Value = (usize, usize)> {
        (1usize..=8).prop_flat_map(|n| (Just(n), 0..=n))
    }

    proptest! {
        #[test]
        fn factoring_inverts_gram((n, k) in arb_shape(), seed in any::<u64>()) {
            let p = random_projection(n, k, seed);
            let f = factor_projection(&p).unwrap();
            prop_assert!(f.tightness_residual() <= 1e-10);
            prop_assert!(gram_projection(&f).unwrap().distance(&p) <= 1e-10);
            prop_assert!(nearest_projection(p.matrix(), k).unwrap().distance(&p) <= 1e-10);
        }

        #[test]
        fn svd_reconstructs_and_is_unitary(n in 1usize..=7, rank in 0usize..=7, seed in any::<u64>()) {
            let rank = rank.min(n);
            // products of orthonormal bases: clustered singular values near 1,
            // plus exact zeros when rank < n
            let mut rng = crate::rng::stream(seed, "svd", 0);
            let a = crate::rng::gaussian_matrix(n, rank, &mut rng);
            let b = random_frame(n + 1, n, seed).matrix() * random_frame(n + 1, n, seed ^ 1).matrix().adjoint();
            for (m, tol) in [(&a * a.adjoint(), 1e-6), (b, 1e-10)] {
                let svd = svd_square(&m);
                let s = CMat::from_diagonal(&DVector::from_iterator(n, svd.singular_values.iter().map(|&x| c(x))));
                let scale = 1.0 + max_abs(&m);
                prop_assert!(max_abs(&(&svd.u * s * svd.v.adjoint() - &m)) <= tol * scale);
                prop_assert!(max_abs(&(svd.u.adjoint() * &svd.u - CMat::identity(n, n))) <= 1e-10);
                prop_assert!(max_abs(&(svd.v.adjoint() * &svd.v - CMat::identity(n, n))) <= 1e-10);
                prop_assert!(svd.singular_values.windows(2).all(|w| w[0] >= w[1]));
                let w = polar_unitary(&m);
                prop_assert!(max_abs(&(w.adjoint() * &w - CMat::identity(n, n))) <= 1e-10);
            }
        }

        #[test]
        fn unitary_action_keeps_the_gram_projection((n, k) in arb_shape(), seed in any::<u64>()) {
            let f = random_frame(n, k, seed);
            let u = UnitaryMatrix::random(k, &mut crate::rng::stream(seed, "unitary", 0));
            let g = unitary_act(&u, &f).unwrap();
            prop_assert!(gram_projection(&g).unwrap().distance(&gram_projection(&f).unwrap()) <= 1e-10);
            let norms = column_norms(&g);
            for (a, b) in norms.d().iter().zip(column_norms(&f).d()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }
}
