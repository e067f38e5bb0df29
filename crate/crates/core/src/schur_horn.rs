//! Projections with a prescribed diagonal, and frames with prescribed
//! column norms built from them.
//!
//! The construction starts at the coordinate projection onto the `k` largest
//! targets and applies real plane rotations. Every rotation pairs the first
//! coordinate whose diagonal entry is above its target with the first one
//! below its target and lands one of the two exactly on target; the other one
//! never overshoots. Coordinates are fixed one at a time, so at most `n - 1`
//! rotations are needed.
//!
//! Two facts keep every rotation admissible. The principal block on the
//! not-yet-fixed coordinates stays diagonal (a rotation only couples the pair
//! it acts on, and one of the pair is fixed afterwards). And every coordinate
//! above target started in the top-`k` set, so its target is at least the
//! target of any coordinate below target. Both requested diagonal values
//! therefore lie between the current pair of diagonal entries.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{FrameError, Result};
use crate::hermitian::{self, c, CMat, Frame, ProjectionMatrix, UnitaryMatrix};
use crate::polytope::NormVector;
use crate::rng;

const FIX_TOL: f64 = 1e-13;

/// Result of the rotation chain.
#[derive(Debug, Clone)]
pub struct DiagonalSynthesis {
    pub projection: ProjectionMatrix,
    pub rotations: usize,
}

/// Move `d` onto the exact polytope: clamp to `[0, 1]` and spread the
/// (tolerance-sized) sum defect over the entries that have room.
fn repaired_targets(d: &NormVector) -> Vec<f64> {
    let mut t: Vec<f64> = d.d().iter().map(|x| x.clamp(0.0, 1.0)).collect();
    let mut defect = d.k() as f64 - t.iter().sum::<f64>();
    for x in t.iter_mut() {
        if defect == 0.0 {
            break;
        }
        let step = if defect > 0.0 {
            defect.min(1.0 - *x)
        } else {
            defect.max(-*x)
        };
        *x += step;
        defect -= step;
    }
    t
}

/// Indices of the `k` largest targets, ties broken by index.
fn top_k(targets: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..targets.len()).collect();
    order.sort_by(|&a, &b| targets[b].total_cmp(&targets[a]));
    order.truncate(k);
    order
}

/// Givens-chain construction; see the module docs.
pub fn synthesize_diagonal(d: &NormVector) -> Result<DiagonalSynthesis> {
    let n = d.n();
    let targets = repaired_targets(d);
    let mut m = DMatrix::<f64>::zeros(n, n);
    for i in top_k(&targets, d.k()) {
        m[(i, i)] = 1.0;
    }
    let mut rotations = 0;
    loop {
        let over = (0..n).find(|&i| m[(i, i)] > targets[i] + FIX_TOL);
        let under = (0..n).find(|&j| m[(j, j)] < targets[j] - FIX_TOL);
        let (i, j) = match (over, under) {
            (None, None) => break,
            (Some(i), Some(j)) => (i, j),
            (Some(x), None) | (None, Some(x)) => {
                return Err(FrameError::NumericalStall {
                    residual: (m[(x, x)] - targets[x]).abs(),
                })
            }
        };
        if rotations >= n {
            return Err(FrameError::NumericalStall {
                residual: (m[(i, i)] - targets[i]).abs(),
            });
        }
        let (pi, pj) = (m[(i, i)], m[(j, j)]);
        let new_i = if pi - targets[i] <= targets[j] - pj {
            targets[i]
        } else {
            pi + pj - targets[j]
        };
        let cos2 = ((new_i - pj) / (pi - pj)).clamp(0.0, 1.0);
        rotate(&mut m, i, j, cos2.sqrt(), (1.0 - cos2).sqrt());
        rotations += 1;
    }
    let projection = ProjectionMatrix::from_matrix_unchecked(m.map(c), d.k());
    Ok(DiagonalSynthesis {
        projection,
        rotations,
    })
}

/// `M <- G M G^T` for the rotation `G` acting on coordinates `(i, j)`.
fn rotate(m: &mut DMatrix<f64>, i: usize, j: usize, cos: f64, sin: f64) {
    let n = m.nrows();
    for col in 0..n {
        let (a, b) = (m[(i, col)], m[(j, col)]);
        m[(i, col)] = cos * a + sin * b;
        m[(j, col)] = -sin * a + cos * b;
    }
    for row in 0..n {
        let (a, b) = (m[(row, i)], m[(row, j)]);
        m[(row, i)] = cos * a + sin * b;
        m[(row, j)] = -sin * a + cos * b;
    }
}

/// A projection of trace `k` whose diagonal is `d`.
pub fn construct_projection_with_diagonal(d: &NormVector) -> Result<ProjectionMatrix> {
    synthesize_diagonal(d).map(|s| s.projection)
}

/// A frame with squared column norms `d`, moved by a Haar unitary drawn
/// from `seed`.
pub fn construct_frame(d: &NormVector, seed: u64) -> Result<Frame> {
    let p = construct_projection_with_diagonal(d)?;
    let base = hermitian::factor_projection(&p)?;
    let mut rng = rng::stream(seed, "construct_frame", d.n() as u64);
    let u = UnitaryMatrix::random(d.k(), &mut rng);
    hermitian::unitary_act(&u, &base)
}

#[derive(Debug, Clone, Serialize)]
pub struct MembershipReport {
    pub tight_residual: f64,
    pub norm_residuals: Vec<f64>,
    pub max_norm_residual: f64,
    pub passed: bool,
}

/// Residuals of `F F* = I_k` and `|f_j|^2 = d_j`.
pub fn verify_membership(frame: &Frame, d: &NormVector, tol: f64) -> Result<MembershipReport> {
    if frame.n() != d.n() || frame.k() != d.k() {
        return Err(FrameError::DimensionMismatch(format!(
            "frame is {}x{}, d has n = {} and k = {}",
            frame.k(),
            frame.n(),
            d.n(),
            d.k()
        )));
    }
    let m: &CMat = frame.matrix();
    let tight_residual = hermitian::max_abs(&(m * m.adjoint() - CMat::identity(d.k(), d.k())));
    let norm_residuals: Vec<f64> = m
        .column_iter()
        .zip(d.d())
        .map(|(col, target)| (col.norm_squared() - target).abs())
        .collect();
    let max_norm_residual = norm_residuals.iter().fold(0.0_f64, |a, &b| a.max(b));
    Ok(MembershipReport {
        tight_residual,
        passed: tight_residual <= tol && max_norm_residual <= tol,
        norm_residuals,
        max_norm_residual,
    })
}
