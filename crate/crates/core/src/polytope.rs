//! Norm vectors and the polytope `{d : 0 <= d_j <= 1, sum d_j = k}` of
//! squared column norms that tight frames can realize.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{FrameError, Result};

/// Membership tolerance.
pub const TOL_POLY: f64 = 1e-9;

const MAX_SUBSETS: u128 = 1_000_000;
const SAMPLE_RETRIES: usize = 100_000;

/// Prescribed squared column norms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormVector {
    k: usize,
    d: Vec<f64>,
}

impl NormVector {
    pub fn new(d: Vec<f64>, k: usize) -> Result<Self> {
        if !in_polytope(&d, k, TOL_POLY) {
            let sum: f64 = d.iter().sum();
            return Err(FrameError::NotInPolytope(format!(
                "d = {d:?} (sum {sum}) with k = {k}"
            )));
        }
        Ok(NormVector { k, d })
    }

    /// Like [`NormVector::new`], with `k` taken as the rounded sum.
    pub fn infer(d: Vec<f64>) -> Result<Self> {
        let sum: f64 = d.iter().sum();
        if !sum.is_finite() || sum < -0.5 {
            return Err(FrameError::NotInPolytope(format!("d = {d:?}")));
        }
        Self::new(d, sum.round() as usize)
    }

    pub(crate) fn from_parts_unchecked(k: usize, d: Vec<f64>) -> Self {
        NormVector { k, d }
    }

    pub fn n(&self) -> usize {
        self.d.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d(&self) -> &[f64] {
        &self.d
    }

    /// `d^tau = (d_{tau(1)}, ..., d_{tau(n)})`.
    pub fn permuted(&self, tau: &[usize]) -> NormVector {
        NormVector {
            k: self.k,
            d: tau.iter().map(|&t| self.d[t]).collect(),
        }
    }
}

pub fn in_polytope(d: &[f64], k: usize, tol: f64) -> bool {
    let sum: f64 = d.iter().sum();
    d.iter().all(|&x| x.is_finite() && x >= -tol && x <= 1.0 + tol) && (sum - k as f64).abs() <= tol
}

/// Sum of the `n - k` smallest entries; the minimum over all `(n-k)`-subsets.
pub fn min_subset_sum(d: &NormVector) -> f64 {
    let mut sorted = d.d.clone();
    sorted.sort_by(f64::total_cmp);
    sorted[..d.n() - d.k()].iter().sum()
}

/// Every `n - k` entries sum to at least 1 (boundary counts as satisfied).
pub fn satisfies_hypothesis(d: &NormVector) -> bool {
    min_subset_sum(d) >= 1.0 - TOL_POLY
}

fn binomial(n: usize, r: usize) -> u128 {
    let r = r.min(n - r);
    (0..r).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Exhaustive form of [`satisfies_hypothesis`]: checks every `(n-k)`-subset.
pub fn brute_force_hypothesis(d: &NormVector) -> Result<bool> {
    let (n, r) = (d.n(), d.n() - d.k());
    let count = binomial(n, r);
    if count > MAX_SUBSETS {
        return Err(FrameError::TooLarge(format!("C({n}, {r}) = {count} subsets")));
    }
    fn walk(d: &[f64], start: usize, left: usize, acc: f64) -> bool {
        if left == 0 {
            return acc >= 1.0 - TOL_POLY;
        }
        (start..=d.len() - left).all(|i| walk(d, i + 1, left - 1, acc + d[i]))
    }
    Ok(walk(&d.d, 0, r, 0.0))
}

/// The constant vector `(k/n, ..., k/n)`.
pub fn uniform_d(n: usize, k: usize) -> Result<NormVector> {
    if n == 0 || k > n {
        return Err(FrameError::BadDimensions(format!("n = {n}, k = {k}")));
    }
    Ok(NormVector {
        k,
        d: vec![k as f64 / n as f64; n],
    })
}

/// Rejection sample from the polytope: a flat Dirichlet point scaled by `k`,
/// rejected while some entry exceeds 1. For `k > n/2` the complement
/// `1 - d'` of a sample `d'` with `n - k` is returned instead, which keeps the
/// acceptance rate reasonable.
pub fn sample_polytope<R: Rng>(n: usize, k: usize, rng: &mut R) -> Result<NormVector> {
    if n == 0 || k > n {
        return Err(FrameError::BadDimensions(format!("n = {n}, k = {k}")));
    }
    if 2 * k > n {
        let inner = sample_polytope(n, n - k, rng)?;
        return Ok(NormVector {
            k,
            d: inner.d.iter().map(|x| 1.0 - x).collect(),
        });
    }
    if k == 0 {
        return Ok(NormVector { k, d: vec![0.0; n] });
    }
    for _ in 0..SAMPLE_RETRIES {
        let e: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
        let total: f64 = e.iter().sum();
        let d: Vec<f64> = e.iter().map(|x| x / total * k as f64).collect();
        if d.iter().all(|&x| x <= 1.0) {
            return Ok(NormVector { k, d });
        }
    }
    Err(FrameError::TooLarge(format!(
        "no polytope sample for n = {n}, k = {k} after {SAMPLE_RETRIES} draws"
    )))
}

/// Polytope sample with some entries pinned to exactly 0 or 1.
pub fn sample_boundary<R: Rng>(n: usize, k: usize, rng: &mut R) -> Result<NormVector> {
    if n == 0 || k > n {
        return Err(FrameError::BadDimensions(format!("n = {n}, k = {k}")));
    }
    let ones = rng.random_range(0..=k.min(n.div_ceil(3)));
    let zeros = rng.random_range(0..=(n - k).min(n.div_ceil(3)));
    let zeros = if ones + zeros == 0 && n > k { 1 } else { zeros };
    let rest = n - ones - zeros;
    let inner = if rest > 0 {
        sample_polytope(rest, k - ones, rng)?.d
    } else {
        Vec::new()
    };
    let mut d: Vec<f64> = std::iter::repeat_n(1.0, ones)
        .chain(std::iter::repeat_n(0.0, zeros))
        .chain(inner)
        .collect();
    // Fisher-Yates so the pinned entries land anywhere
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        d.swap(i, j);
    }
    Ok(NormVector { k, d })
}

/// Sample satisfying the hypothesis: a point on a random ray from the
/// barycenter `k/n`, drawn uniformly from the part of the ray where the
/// hypothesis holds. Returns `None` when no such point exists
/// (`k < 2` or `k > n - 2`).
pub fn sample_hypothesis<R: Rng>(n: usize, k: usize, rng: &mut R) -> Result<Option<NormVector>> {
    let center = uniform_d(n, k)?;
    if !satisfies_hypothesis(&center) {
        return Ok(None);
    }
    let target = sample_polytope(n, k, rng)?;
    let mix = |t: f64| NormVector {
        k,
        d: center
            .d
            .iter()
            .zip(&target.d)
            .map(|(c, x)| (1.0 - t) * c + t * x)
            .collect(),
    };
    // The feasible set along the ray is an interval [0, t*] because the
    // minimal subset sum is concave.
    let holds = |t: f64| min_subset_sum(&mix(t)) >= 1.0;
    let t_star = if holds(1.0) {
        1.0
    } else {
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if holds(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    let t = rng.random::<f64>() * t_star;
    Ok(Some(mix(t)))
}
