//! Critical sets of the energy `f = |mu - d|^2` and their stable manifolds.
//!
//! At a critical point `P` the shift `a = mu(P) - d` is constant on the blocks
//! of a set partition, `P` is block diagonal along it, and block `B_i` carries
//! a projection of some rank `c_i` with diagonal `d_j + alpha_i`. Summing that
//! diagonal gives `alpha_i = (c_i - sum_{B_i} d_j) / |B_i|`, so a descriptor is
//! determined by the partition and the capacities. The complex codimension of
//! the stratum is the Morse index of the height function `h_a` along the
//! critical set, `sum_{i<j} c_i (|B_j| - c_j)` with blocks in decreasing
//! level order.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{FrameError, Result};
use crate::hermitian::{self, CMat, ProjectionMatrix, UnitaryMatrix, C64};
use crate::polytope::{NormVector, TOL_POLY};
use crate::rng;
use crate::schur_horn;

/// Largest `n` accepted by [`enumerate_strata`].
pub const MAX_ENUM_N: usize = 9;
/// Largest `n` accepted by [`hessian_index_oracle`].
pub const MAX_HESSIAN_N: usize = 6;
/// Minimum gap between the levels of distinct blocks.
pub const LEVEL_SEPARATION: f64 = 1e-9;

const HESSIAN_STEP: f64 = 1e-2;
const HESSIAN_REL_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratumDescriptor {
    /// 0-based coordinates of each block, blocks in decreasing level order.
    pub blocks: Vec<Vec<usize>>,
    pub capacities: Vec<usize>,
    pub levels: Vec<f64>,
    pub a: Vec<f64>,
    pub codim_complex: usize,
}

impl StratumDescriptor {
    pub fn multiplicities(&self) -> Vec<usize> {
        self.blocks.iter().map(Vec::len).collect()
    }

    /// Level `|a|^2` of `f` on the critical set.
    pub fn energy_level(&self) -> f64 {
        self.a.iter().map(|x| x * x).sum()
    }

    pub fn is_zero_shift(&self) -> bool {
        self.blocks.len() == 1
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }
}

/// `sum_{i<j} c_i (m_j - c_j)`.
pub fn stratum_codim(m: &[usize], caps: &[usize]) -> Result<usize> {
    if m.len() != caps.len() {
        return Err(FrameError::BadComposition(format!(
            "{} multiplicities, {} capacities",
            m.len(),
            caps.len()
        )));
    }
    if let Some(i) = (0..m.len()).find(|&i| caps[i] > m[i]) {
        return Err(FrameError::BadComposition(format!(
            "capacity {} exceeds multiplicity {} in block {i}",
            caps[i], m[i]
        )));
    }
    let mut codim = 0;
    let mut above = 0;
    for (&mj, &cj) in m.iter().zip(caps) {
        codim += above * (mj - cj);
        above += cj;
    }
    Ok(codim)
}

/// Restricted growth strings of length `n`: `labels[j]` is the block of `j`.
fn set_partitions(n: usize) -> Vec<Vec<usize>> {
    fn extend(prefix: &mut Vec<usize>, max: usize, n: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        for label in 0..=max + 1 {
            if prefix.is_empty() && label > 0 {
                break;
            }
            prefix.push(label);
            let next_max = if prefix.len() == 1 { 0 } else { max.max(label) };
            extend(prefix, next_max, n, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if n == 0 {
        return out;
    }
    extend(&mut Vec::with_capacity(n), 0, n, &mut out);
    out
}

/// Capacity vectors `0 <= c_i <= m_i` with `sum c_i = k`.
fn compositions(m: &[usize], k: usize) -> Vec<Vec<usize>> {
    fn extend(m: &[usize], left: usize, room: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        let i = cur.len();
        if i == m.len() {
            if left == 0 {
                out.push(cur.clone());
            }
            return;
        }
        let room = room - m[i];
        let lo = left.saturating_sub(room);
        for ci in lo..=m[i].min(left) {
            cur.push(ci);
            extend(m, left - ci, room, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    extend(m, k, m.iter().sum(), &mut Vec::new(), &mut out);
    out
}

fn descriptor_for(d: &[f64], blocks: &[Vec<usize>], caps: &[usize]) -> Option<StratumDescriptor> {
    let levels: Vec<f64> = blocks
        .iter()
        .zip(caps)
        .map(|(b, &ci)| (ci as f64 - b.iter().map(|&j| d[j]).sum::<f64>()) / b.len() as f64)
        .collect();
    let feasible = blocks.iter().zip(&levels).all(|(b, &alpha)| {
        b.iter()
            .all(|&j| d[j] + alpha >= -TOL_POLY && d[j] + alpha <= 1.0 + TOL_POLY)
    });
    if !feasible {
        return None;
    }
    let mut order: Vec<usize> = (0..blocks.len()).collect();
    order.sort_by(|&x, &y| levels[y].total_cmp(&levels[x]));
    if order
        .windows(2)
        .any(|w| levels[w[0]] - levels[w[1]] <= LEVEL_SEPARATION)
    {
        return None;
    }
    let blocks: Vec<Vec<usize>> = order.iter().map(|&i| blocks[i].clone()).collect();
    let capacities: Vec<usize> = order.iter().map(|&i| caps[i]).collect();
    let mut levels: Vec<f64> = order.iter().map(|&i| levels[i]).collect();
    if blocks.len() == 1 {
        // sum(d) = k up to rounding; the open stratum has shift exactly 0
        levels[0] = 0.0;
    }
    let mut a = vec![0.0; d.len()];
    for (b, &alpha) in blocks.iter().zip(&levels) {
        for &j in b {
            a[j] = alpha;
        }
    }
    let m: Vec<usize> = blocks.iter().map(Vec::len).collect();
    let codim_complex = stratum_codim(&m, &capacities).ok()?;
    Some(StratumDescriptor {
        blocks,
        capacities,
        levels,
        a,
        codim_complex,
    })
}

/// All critical-set descriptors of `f` for `d`, sorted by energy level.
pub fn enumerate_strata(d: &NormVector) -> Result<Vec<StratumDescriptor>> {
    let n = d.n();
    if n > MAX_ENUM_N {
        return Err(FrameError::TooLarge(format!(
            "stratum enumeration is limited to n <= {MAX_ENUM_N}, got {n}"
        )));
    }
    let values = d.d();
    let k = d.k();
    let mut out: Vec<StratumDescriptor> = set_partitions(n)
        .into_par_iter()
        .flat_map_iter(|labels| {
            let count = labels.iter().max().map_or(0, |m| m + 1);
            let mut blocks = vec![Vec::new(); count];
            for (j, &l) in labels.iter().enumerate() {
                blocks[l].push(j);
            }
            let m: Vec<usize> = blocks.iter().map(Vec::len).collect();
            compositions(&m, k)
                .into_iter()
                .filter_map(move |caps| descriptor_for(values, &blocks, &caps))
                .collect::<Vec<_>>()
        })
        .collect();
    // (blocks, capacities) determine a, and a determines them back, so
    // there are no duplicates to merge
    out.sort_by(|x, y| {
        x.energy_level()
            .total_cmp(&y.energy_level())
            .then(x.codim_complex.cmp(&y.codim_complex))
            .then_with(|| x.blocks.cmp(&y.blocks))
            .then_with(|| x.capacities.cmp(&y.capacities))
    });
    Ok(out)
}

/// Smallest codimension among strata with `a != 0`; `None` when the only
/// critical set is `mu^{-1}(d)` itself.
pub fn min_positive_codim(d: &NormVector) -> Result<Option<usize>> {
    Ok(enumerate_strata(d)?
        .iter()
        .filter(|s| !s.is_zero_shift())
        .map(|s| s.codim_complex)
        .min())
}

fn check_descriptor(desc: &StratumDescriptor, d: &NormVector) -> Result<()> {
    let n = d.n();
    let mut seen = vec![false; n];
    for &j in desc.blocks.iter().flatten() {
        if j >= n || seen[j] {
            return Err(FrameError::InfeasibleDescriptor(format!(
                "blocks {:?} are not a partition of 0..{n}",
                desc.blocks
            )));
        }
        seen[j] = true;
    }
    if seen.iter().any(|s| !s) || desc.capacities.len() != desc.blocks.len() {
        return Err(FrameError::InfeasibleDescriptor(format!(
            "blocks {:?} with capacities {:?}",
            desc.blocks, desc.capacities
        )));
    }
    if desc.capacities.iter().sum::<usize>() != d.k() {
        return Err(FrameError::InfeasibleDescriptor(format!(
            "capacities {:?} do not sum to k = {}",
            desc.capacities,
            d.k()
        )));
    }
    match descriptor_for(d.d(), &desc.blocks, &desc.capacities) {
        Some(fresh) if fresh.blocks == desc.blocks => Ok(()),
        _ => Err(FrameError::InfeasibleDescriptor(format!(
            "blocks {:?} with capacities {:?} are not a critical set for d = {:?}",
            desc.blocks,
            desc.capacities,
            d.d()
        ))),
    }
}

/// A point of the critical set: block diagonal along the descriptor, block
/// `i` a rank-`c_i` projection with diagonal `d_j + alpha_i`, moved by a
/// random torus element and a random relabeling inside each block.
pub fn critical_manifold_point(desc: &StratumDescriptor, d: &NormVector, seed: u64) -> Result<ProjectionMatrix> {
    check_descriptor(desc, d)?;
    let n = d.n();
    let mut rng = rng::stream(seed, "critical_manifold_point", n as u64);
    let mut out = CMat::zeros(n, n);
    for ((block, &ci), &alpha) in desc.blocks.iter().zip(&desc.capacities).zip(&desc.levels) {
        let mut order = block.clone();
        order.shuffle(&mut rng);
        let targets: Vec<f64> = order.iter().map(|&j| (d.d()[j] + alpha).clamp(0.0, 1.0)).collect();
        let sub = NormVector::new(targets, ci).map_err(|e| FrameError::InfeasibleDescriptor(e.to_string()))?;
        let q = schur_horn::construct_projection_with_diagonal(&sub)?;
        let thetas: Vec<f64> = (0..order.len())
            .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
            .collect();
        let t = UnitaryMatrix::phases(&thetas);
        let q = t.matrix() * q.matrix() * t.matrix().adjoint();
        for (r, &i) in order.iter().enumerate() {
            for (s, &j) in order.iter().enumerate() {
                out[(i, j)] = q[(r, s)];
            }
        }
    }
    Ok(ProjectionMatrix::from_matrix_unchecked(out, d.k()))
}

/// Real orthonormal basis (for `tr(XY)`) of the tangent space at `P`:
/// `X = V Z W* + W Z* V*` with `Z` running over `E_ab / sqrt 2` and
/// `i E_ab / sqrt 2`, where `V`, `W` span the range and kernel.
pub fn tangent_basis(p: &ProjectionMatrix) -> Vec<CMat> {
    let n = p.n();
    let k = p.rank();
    let eig = hermitian::hermitian_eigen(p.matrix());
    let v = eig.vectors.columns(0, k);
    let w = eig.vectors.columns(k, n - k);
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let mut basis = Vec::with_capacity(2 * k * (n - k));
    for a in 0..k {
        for b in 0..(n - k) {
            for unit in [C64::new(scale, 0.0), C64::new(0.0, scale)] {
                let half = v.column(a) * w.column(b).adjoint() * unit;
                basis.push(&half + half.adjoint());
            }
        }
    }
    basis
}

/// `t -> h_a(exp(t Omega) P exp(-t Omega))` with `Omega = [X, P]`, the
/// geodesic through `P` with velocity `X`.
struct GeodesicHeight {
    values: Vec<f64>,
    vectors: CMat,
    rotated: CMat,
    a: Vec<f64>,
}

impl GeodesicHeight {
    fn new(p: &CMat, x: &CMat, a: &[f64]) -> Self {
        let omega = x * p - p * x;
        // i * Omega is Hermitian
        let eig = hermitian::hermitian_eigen(&(omega * C64::new(0.0, 1.0)));
        let rotated = eig.vectors.adjoint() * p * &eig.vectors;
        GeodesicHeight {
            values: eig.values,
            vectors: eig.vectors,
            rotated,
            a: a.to_vec(),
        }
    }

    fn at(&self, t: f64) -> f64 {
        // exp(t Omega) = V diag(exp(-i t lambda)) V*
        let n = self.values.len();
        let phase: Vec<C64> = self.values.iter().map(|l| C64::from_polar(1.0, -t * l)).collect();
        let inner = CMat::from_fn(n, n, |i, j| phase[i] * self.rotated[(i, j)] * phase[j].conj());
        let moved = &self.vectors * inner * self.vectors.adjoint();
        (0..n).map(|j| self.a[j] * moved[(j, j)].re).sum()
    }

    /// Second derivative at 0: central differences with one Richardson step.
    fn second_derivative(&self) -> f64 {
        let h0 = self.at(0.0);
        let central = |eps: f64| (self.at(eps) - 2.0 * h0 + self.at(-eps)) / (eps * eps);
        let coarse = central(HESSIAN_STEP);
        let fine = central(HESSIAN_STEP / 2.0);
        (4.0 * fine - coarse) / 3.0
    }
}

/// Finite-difference Hessian of `h_a` at `P` in the basis of
/// [`tangent_basis`].
pub fn height_hessian(p: &ProjectionMatrix, a: &[f64]) -> Vec<Vec<f64>> {
    let basis = tangent_basis(p);
    let dim = basis.len();
    let pm = p.matrix();
    let q = |x: &CMat| GeodesicHeight::new(pm, x, a).second_derivative();
    let mut hess = vec![vec![0.0; dim]; dim];
    for i in 0..dim {
        hess[i][i] = q(&basis[i]);
        for j in 0..i {
            let plus = q(&(&basis[i] + &basis[j]));
            let minus = q(&(&basis[i] - &basis[j]));
            let v = (plus - minus) / 4.0;
            hess[i][j] = v;
            hess[j][i] = v;
        }
    }
    hess
}

/// Morse index of `h_a` at a point of the critical set, in complex
/// dimensions, from the eigenvalues of a finite-difference Hessian.
pub fn hessian_index_oracle(desc: &StratumDescriptor, d: &NormVector, seed: u64) -> Result<usize> {
    if d.n() > MAX_HESSIAN_N {
        return Err(FrameError::TooLarge(format!(
            "Hessian oracle is limited to n <= {MAX_HESSIAN_N}, got {}",
            d.n()
        )));
    }
    let p = critical_manifold_point(desc, d, seed)?;
    let hess = height_hessian(&p, &desc.a);
    let dim = hess.len();
    if dim == 0 {
        return Ok(0);
    }
    let m = nalgebra::DMatrix::from_fn(dim, dim, |i, j| hess[i][j]);
    let eigenvalues = nalgebra::SymmetricEigen::new(m).eigenvalues;
    let largest = eigenvalues.iter().fold(0.0_f64, |acc, l| acc.max(l.abs()));
    let threshold = HESSIAN_REL_THRESHOLD * largest;
    let mut negative = 0;
    for &l in eigenvalues.iter() {
        if l < -threshold {
            negative += 1;
        } else if l.abs() > threshold * 1e-2 && l.abs() <= threshold {
            return Err(FrameError::AmbiguousEigenvalue { value: l });
        }
    }
    Ok(negative / 2)
}

/// Whether `dim(range P ∩ span(blocks 1..j)) = c_1 + ... + c_j` for every
/// prefix `j`. The intersection dimension is the number of eigenvalues of
/// the principal submatrix of `P` on the prefix that are at least `1 - tol`.
pub fn stable_manifold_membership(p: &ProjectionMatrix, desc: &StratumDescriptor, tol: f64) -> bool {
    let m = p.matrix();
    let mut coords: Vec<usize> = Vec::new();
    let mut expected = 0;
    for (block, &ci) in desc.blocks.iter().zip(&desc.capacities) {
        coords.extend(block);
        expected += ci;
        let sub = CMat::from_fn(coords.len(), coords.len(), |i, j| m[(coords[i], coords[j])]);
        let eig = hermitian::hermitian_eigen(&sub);
        let dim = eig.values.iter().filter(|&&l| l >= 1.0 - tol).count();
        if dim != expected {
            return false;
        }
    }
    true
}

/// The shift `a^tau = (a_{tau(1)}, ..., a_{tau(n)})`, which is the shift of
/// the corresponding stratum for `d^tau`.
pub fn relabeled(desc: &StratumDescriptor, tau: &[usize]) -> Vec<f64> {
    tau.iter().map(|&t| desc.a[t]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use crate::flow::{self, energy, is_critical, FlowConfig, FlowOutcome};
    use crate::polytope::{sample_boundary, sample_hypothesis, sample_polytope, uniform_d};

    fn nv(d: &[f64], k: usize) -> NormVector {
        NormVector::new(d.to_vec(), k).unwrap()
    }

    fn find<'a>(strata: &'a [StratumDescriptor], a: &[f64]) -> Option<&'a StratumDescriptor> {
        strata
            .iter()
            .find(|s| s.a.iter().zip(a).all(|(x, y)| (x - y).abs() <= 1e-12))
    }

    /// Independent enumeration: every `a` taking its values on the level
    /// sets of a labeling, tested by the definition of a critical set.
    fn brute_force_shifts(d: &NormVector) -> Vec<(Vec<f64>, usize)> {
        let n = d.n();
        let mut found: Vec<(Vec<f64>, usize)> = Vec::new();
        // labels in 0..n for each coordinate, capacities in 0..=n per label
        let mut labels = vec![0usize; n];
        loop {
            let used: Vec<usize> = {
                let mut u: Vec<usize> = labels.clone();
                u.sort();
                u.dedup();
                u
            };
            if used.iter().enumerate().all(|(i, &l)| i == l) {
                let blocks: Vec<Vec<usize>> = used
                    .iter()
                    .map(|&l| (0..n).filter(|&j| labels[j] == l).collect())
                    .collect();
                let mut caps = vec![0usize; blocks.len()];
                loop {
                    if caps.iter().sum::<usize>() == d.k() {
                        let alpha: Vec<f64> = blocks
                            .iter()
                            .zip(&caps)
                            .map(|(b, &ci)| {
                                (ci as f64 - b.iter().map(|&j| d.d()[j]).sum::<f64>()) / b.len() as f64
                            })
                            .collect();
                        let ok = blocks.iter().zip(&alpha).all(|(b, &al)| {
                            b.iter().all(|&j| {
                                let v = d.d()[j] + al;
                                (-1e-9..=1.0 + 1e-9).contains(&v)
                            })
                        });
                        let distinct = (0..alpha.len())
                            .all(|i| (0..i).all(|j| (alpha[i] - alpha[j]).abs() > 1e-9));
                        if ok && distinct {
                            let mut a = vec![0.0; n];
                            for (b, &al) in blocks.iter().zip(&alpha) {
                                for &j in b {
                                    a[j] = if blocks.len() == 1 { 0.0 } else { al };
                                }
                            }
                            // index: pairs (higher level, lower level)
                            let mut codim = 0;
                            for i in 0..blocks.len() {
                                for j in 0..blocks.len() {
                                    if alpha[i] > alpha[j] {
                                        codim += caps[i] * (blocks[j].len() - caps[j]);
                                    }
                                }
                            }
                            // several labelings give the same partition
                            if !found.iter().any(|(b, _)| b == &a) {
                                found.push((a, codim));
                            }
                        }
                    }
                    let mut i = 0;
                    while i < caps.len() && caps[i] == blocks[i].len() {
                        caps[i] = 0;
                        i += 1;
                    }
                    if i == caps.len() {
                        break;
                    }
                    caps[i] += 1;
                }
            }
            let mut i = 0;
            while i < n && labels[i] == n - 1 {
                labels[i] = 0;
                i += 1;
            }
            if i == n {
                break;
            }
            labels[i] += 1;
        }
        found
    }

    #[test]
    fn partition_counts_are_bell_numbers() {
        let bell = [1usize, 2, 5, 15, 52, 203, 877, 4140, 21147];
        for (n, &b) in (1..=9).zip(&bell) {
            assert_eq!(set_partitions(n).len(), b);
        }
    }

    #[test]
    fn codim_examples() {
        assert_eq!(stratum_codim(&[4], &[2]).unwrap(), 0);
        assert_eq!(stratum_codim(&[2, 2], &[1, 1]).unwrap(), 1);
        assert_eq!(stratum_codim(&[2, 2], &[2, 0]).unwrap(), 4);
        assert!(matches!(stratum_codim(&[2, 2], &[3, 0]), Err(FrameError::BadComposition(_))));
        assert!(matches!(stratum_codim(&[2], &[1, 1]), Err(FrameError::BadComposition(_))));
    }

    #[test]
    fn two_block_codim_formula() {
        for n in 1..=8usize {
            for k in 0..=n {
                for m in 0..=n {
                    for cap in 0..=m.min(k) {
                        if k - cap > n - m {
                            continue;
                        }
                        // E_1 of dimension m meeting V in dimension cap
                        let expected = cap * (n + cap - k - m);
                        assert_eq!(stratum_codim(&[m, n - m], &[cap, k - cap]).unwrap(), expected);
                        // the same stratum seen from E = E_2
                        assert_eq!(
                            stratum_codim(&[n - m, m], &[k - cap, cap]).unwrap(),
                            (k - cap) * (m - cap)
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn vertex_target_strata() {
        let d = nv(&[1.0, 1.0, 0.0, 0.0], 2);
        let strata = enumerate_strata(&d).unwrap();
        let s = find(&strata, &[-0.5, -0.5, 0.5, 0.5]).expect("codim-1 stratum");
        assert_eq!(s.blocks, vec![vec![2, 3], vec![0, 1]]);
        assert_eq!(s.capacities, vec![1, 1]);
        assert_eq!(s.levels, vec![0.5, -0.5]);
        assert_eq!(s.codim_complex, 1);
        assert!((s.energy_level() - 1.0).abs() < 1e-15);
        let s = find(&strata, &[-1.0, -1.0, 1.0, 1.0]).expect("codim-4 stratum");
        assert_eq!(s.blocks, vec![vec![2, 3], vec![0, 1]]);
        assert_eq!(s.capacities, vec![2, 0]);
        assert_eq!(s.codim_complex, 4);
        assert!((s.energy_level() - 4.0).abs() < 1e-15);
        assert_eq!(min_positive_codim(&d).unwrap(), Some(1));
    }

    #[test]
    fn uniform_target_has_no_codim_one_stratum() {
        let d = uniform_d(4, 2).unwrap();
        let strata = enumerate_strata(&d).unwrap();
        assert!(strata.iter().all(|s| s.codim_complex != 1));
        assert!(min_positive_codim(&d).unwrap().unwrap() >= 2);
    }

    #[test]
    fn pinned_target_has_a_codim_one_stratum() {
        let third = 1.0 / 3.0;
        let d = nv(&[third, third, third, 1.0], 2);
        // fails the hypothesis, and here a codim-1 stratum exists:
        // blocks {1,2} (level 1/6) above {0,3} (level -1/6)
        assert_eq!(min_positive_codim(&d).unwrap(), Some(1));
        let strata = enumerate_strata(&d).unwrap();
        let s = strata.iter().find(|s| s.codim_complex == 1).unwrap();
        assert_eq!(s.multiplicities(), vec![2, 2]);
        assert_eq!(s.capacities, vec![1, 1]);
    }

    #[test]
    fn matches_brute_force_enumeration() {
        let mut rng = rng::stream(3, "strata-brute", 0);
        for trial in 0..24 {
            let n = 2 + trial % 4;
            let k = 1 + (trial / 4) % (n - 1);
            let d = if trial % 2 == 0 {
                sample_polytope(n, k, &mut rng).unwrap()
            } else {
                sample_boundary(n, k, &mut rng).unwrap()
            };
            let strata = enumerate_strata(&d).unwrap();
            let mut expected = brute_force_shifts(&d);
            let mut got: Vec<(Vec<f64>, usize)> = strata.iter().map(|s| (s.a.clone(), s.codim_complex)).collect();
            let key = |x: &(Vec<f64>, usize), y: &(Vec<f64>, usize)| {
                x.0.iter()
                    .zip(&y.0)
                    .map(|(p, q)| p.total_cmp(q))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            };
            expected.sort_by(key);
            got.sort_by(key);
            assert_eq!(got.len(), expected.len(), "{d:?}");
            for (g, e) in got.iter().zip(&expected) {
                assert_eq!(g.1, e.1, "{d:?}");
                assert!(g.0.iter().zip(&e.0).all(|(x, y)| (x - y).abs() < 1e-12), "{d:?}");
            }
        }
    }

    #[test]
    fn descriptor_invariants() {
        let mut rng = rng::stream(5, "strata-invariants", 0);
        for trial in 0..30 {
            let n = 1 + trial % 6;
            let k = (trial / 6) % (n + 1);
            let d = sample_polytope(n, k, &mut rng).unwrap();
            let strata = enumerate_strata(&d).unwrap();
            let zero: Vec<_> = strata.iter().filter(|s| s.a.iter().all(|&x| x == 0.0)).collect();
            assert_eq!(zero.len(), 1, "{d:?}");
            assert_eq!(zero[0].codim_complex, 0);
            for s in &strata {
                assert!(s.a.iter().sum::<f64>().abs() < 1e-12);
                assert_eq!(s.capacities.iter().sum::<usize>(), k);
                assert!(s.levels.windows(2).all(|w| w[0] > w[1]));
                for (b, &ci) in s.blocks.iter().zip(&s.capacities) {
                    assert!(ci <= b.len());
                }
                if !s.is_zero_shift() {
                    assert!(s.codim_complex > 0, "{d:?} {s:?}");
                }
            }
        }
    }

    #[test]
    fn enumeration_guards() {
        let d = uniform_d(10, 5).unwrap();
        assert!(matches!(enumerate_strata(&d), Err(FrameError::TooLarge(_))));
        let d = uniform_d(9, 4).unwrap();
        assert!(!enumerate_strata(&d).unwrap().is_empty());
    }

    #[test]
    fn enumeration_is_permutation_equivariant() {
        let mut rng = rng::stream(8, "strata-perm", 0);
        for trial in 0..10 {
            let n = 3 + trial % 3;
            let d = sample_polytope(n, 1 + trial % (n - 1), &mut rng).unwrap();
            let mut tau: Vec<usize> = (0..n).collect();
            tau.shuffle(&mut rng);
            let base = enumerate_strata(&d).unwrap();
            let moved = enumerate_strata(&d.permuted(&tau)).unwrap();
            assert_eq!(base.len(), moved.len());
            for s in &base {
                let target = relabeled(s, &tau);
                let hit = find(&moved, &target).expect("relabeled stratum");
                assert_eq!(hit.codim_complex, s.codim_complex);
            }
        }
    }

    #[test]
    fn critical_points_sit_at_their_level() {
        let mut rng = rng::stream(9, "strata-critical", 0);
        for trial in 0..12 {
            let n = 2 + trial % 4;
            let d = sample_polytope(n, 1 + trial % (n - 1), &mut rng).unwrap();
            for (idx, s) in enumerate_strata(&d).unwrap().iter().enumerate() {
                let p = critical_manifold_point(s, &d, idx as u64).unwrap();
                assert!(p.idempotency_residual() <= 1e-10);
                let (critical, a) = is_critical(&p, &d, 1e-9);
                assert!(critical, "{d:?} {s:?}");
                assert!(a.iter().zip(&s.a).all(|(x, y)| (x - y).abs() <= 1e-10));
                assert!((energy(&p, &d).unwrap() - s.energy_level()).abs() <= 1e-10);
                assert!(stable_manifold_membership(&p, s, 1e-8));
            }
        }
    }

    #[test]
    fn critical_point_examples() {
        let d = nv(&[1.0, 1.0, 0.0, 0.0], 2);
        let strata = enumerate_strata(&d).unwrap();
        let s = find(&strata, &[-0.5, -0.5, 0.5, 0.5]).unwrap();
        let p = critical_manifold_point(s, &d, 1).unwrap();
        for j in 0..4 {
            assert!((p.matrix()[(j, j)].re - 0.5).abs() < 1e-12);
        }
        for (i, j) in [(0, 2), (0, 3), (1, 2), (1, 3)] {
            assert!(p.matrix()[(i, j)].norm() < 1e-15);
        }
        assert!((energy(&p, &d).unwrap() - 1.0).abs() < 1e-12);

        let s = find(&strata, &[-1.0, -1.0, 1.0, 1.0]).unwrap();
        let p = critical_manifold_point(s, &d, 1).unwrap();
        assert!(hermitian::max_abs(&(p.matrix() - hermitian::diag(&[0.0, 0.0, 1.0, 1.0]))) < 1e-15);
        assert!((energy(&p, &d).unwrap() - 4.0).abs() < 1e-12);

        let zero = strata.iter().find(|s| s.is_zero_shift()).unwrap();
        let p = critical_manifold_point(zero, &d, 1).unwrap();
        assert!(energy(&p, &d).unwrap() < 1e-20);

        let bogus = StratumDescriptor {
            blocks: vec![vec![0, 1], vec![2, 3]],
            capacities: vec![0, 2],
            levels: vec![-1.0, 1.0],
            a: vec![-1.0, -1.0, 1.0, 1.0],
            codim_complex: 0,
        };
        assert!(matches!(
            critical_manifold_point(&bogus, &d, 1),
            Err(FrameError::InfeasibleDescriptor(_))
        ));
    }

    #[test]
    fn flow_stops_on_critical_sets() {
        let d = nv(&[1.0, 1.0, 0.0, 0.0], 2);
        let strata = enumerate_strata(&d).unwrap();
        let s = find(&strata, &[-0.5, -0.5, 0.5, 0.5]).unwrap();
        let p0 = critical_manifold_point(s, &d, 4).unwrap();
        assert!(flow::tangent_norm(&flow::riemannian_grad_energy(&p0, &d).unwrap()) < 1e-12);
        let (_, trace) = flow::retract_to_level(&p0, &d, &FlowConfig::default()).unwrap();
        match trace.outcome {
            FlowOutcome::CriticalPointReached { a } => {
                assert!(a.iter().zip(&s.a).all(|(x, y)| (x - y).abs() < 1e-12));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn stable_manifold_examples() {
        let d = nv(&[1.0, 1.0, 0.0, 0.0], 2);
        let strata = enumerate_strata(&d).unwrap();
        let s = find(&strata, &[-0.5, -0.5, 0.5, 0.5]).unwrap();
        let p = ProjectionMatrix::coordinate(4, &[0, 1]);
        assert!(!stable_manifold_membership(&p, s, 1e-8));
        let p = hermitian::random_projection(4, 2, 12);
        for s in strata.iter().filter(|s| !s.is_zero_shift()) {
            assert!(!stable_manifold_membership(&p, s, 1e-8), "{s:?}");
        }
        let zero = strata.iter().find(|s| s.is_zero_shift()).unwrap();
        assert!(stable_manifold_membership(&p, zero, 1e-8));
    }

    #[test]
    fn tangent_basis_is_orthonormal_and_tangent() {
        let p = hermitian::random_projection(5, 2, 3);
        let basis = tangent_basis(&p);
        assert_eq!(basis.len(), 12);
        let pm = p.matrix();
        for (i, x) in basis.iter().enumerate() {
            assert!(hermitian::max_abs(&(x * pm + pm * x - x)) < 1e-12);
            for (j, y) in basis.iter().enumerate() {
                let ip = (x * y).trace().re;
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((ip - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn hessian_index_examples() {
        let d = nv(&[1.0, 1.0, 0.0, 0.0], 2);
        let strata = enumerate_strata(&d).unwrap();
        let s = find(&strata, &[-0.5, -0.5, 0.5, 0.5]).unwrap();
        assert_eq!(hessian_index_oracle(s, &d, 0).unwrap(), 1);
        let s = find(&strata, &[-1.0, -1.0, 1.0, 1.0]).unwrap();
        assert_eq!(hessian_index_oracle(s, &d, 0).unwrap(), 4);
        let zero = strata.iter().find(|s| s.is_zero_shift()).unwrap();
        assert_eq!(hessian_index_oracle(zero, &d, 0).unwrap(), 0);
        let big = uniform_d(7, 3).unwrap();
        let s = &enumerate_strata(&big).unwrap()[0];
        assert!(matches!(hessian_index_oracle(s, &big, 0), Err(FrameError::TooLarge(_))));
    }

    #[test]
    fn hessian_index_equals_codim() {
        let mut rng = rng::stream(21, "strata-hessian", 0);
        for trial in 0..8 {
            let n = 3 + trial % 3;
            let k = 1 + (trial / 3) % (n - 1);
            let d = if trial % 2 == 0 {
                sample_polytope(n, k, &mut rng).unwrap()
            } else {
                sample_boundary(n, k, &mut rng).unwrap()
            };
            for s in enumerate_strata(&d).unwrap() {
                for seed in 0..3 {
                    let index = hessian_index_oracle(&s, &d, seed).unwrap();
                    assert_eq!(index, s.codim_complex, "{d:?} {s:?}");
                }
            }
        }
    }

    #[test]
    fn hypothesis_forces_codim_at_least_two() {
        let mut rng = rng::stream(4, "strata-hypothesis", 0);
        for (n, k) in [(4, 2), (5, 2), (6, 3)] {
            for _ in 0..10 {
                let d = sample_hypothesis(n, k, &mut rng).unwrap().unwrap();
                assert!(min_positive_codim(&d).unwrap().unwrap() >= 2, "{d:?}");
            }
        }
    }

    fn arb_small_d() -> impl Strategy<Value = NormVector> {
        (1usize..=6, any::<u64>(), any::<bool>()).prop_flat_map(|(n, seed, interior)| {
            (0..=n).prop_map(move |k| {
                let mut rng = crate::rng::stream(seed, "prop-strata", k as u64);
                if interior {
                    sample_polytope(n, k, &mut rng).unwrap()
                } else {
                    sample_boundary(n, k, &mut rng).unwrap()
                }
            })
        })
    }

    proptest! {
        #[test]
        fn descriptors_are_consistent(d in arb_small_d()) {
            let strata = enumerate_strata(&d).unwrap();
            prop_assert_eq!(strata.iter().filter(|s| s.is_zero_shift()).count(), 1);
            for s in &strata {
                prop_assert_eq!(s.capacities.iter().sum::<usize>(), d.k());
                prop_assert_eq!(s.codim_complex, stratum_codim(&s.multiplicities(), &s.capacities).unwrap());
                prop_assert!(s.levels.windows(2).all(|w| w[0] - w[1] > LEVEL_SEPARATION));
                for ((block, &cap), &level) in s.blocks.iter().zip(&s.capacities).zip(&s.levels) {
                    prop_assert!(cap <= block.len());
                    let filled: f64 = block.iter().map(|&j| d.d()[j] + s.a[j]).sum();
                    prop_assert!((filled - cap as f64).abs() <= 1e-9);
                    prop_assert!(block.iter().all(|&j| s.a[j] == level));
                }
            }
        }
    }
}
