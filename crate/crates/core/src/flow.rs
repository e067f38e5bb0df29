//! The diagonal moment map on the Grassmannian, height functions, the energy
//! `f(P) = |mu(P) - d|^2` and its gradient flow.
//!
//! Tangent vectors at `P` are the Hermitian `X` with `XP + PX = X`; the metric
//! is `<X, Y> = tr(XY)`. The flow is discretized as projected gradient descent
//! with an Armijo line search, retracting onto the Grassmannian after every
//! step through the top-`k` eigenspace. A damped Gauss-Newton direction for
//! `mu(P) = d` can replace the gradient; it uses the same line search and
//! retraction and is much faster near singular points of the level set.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{FrameError, Result};
use crate::hermitian::{self, c, diag, CMat, ProjectionMatrix, TOL_ALG};
use crate::polytope::NormVector;
use crate::rng;

const JITTER: f64 = 1e-10;
const JITTER_ATTEMPTS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlowMethod {
    /// Steepest descent on `f`.
    Gradient,
    /// `X = -dmu* (dmu dmu* + |r| I)^{-1} r` with `r = mu(P) - d`.
    GaussNewton,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub method: FlowMethod,
    pub step0: f64,
    pub max_iter: usize,
    /// Success once `f <= f_tol`.
    pub f_tol: f64,
    /// Critical once `|grad f| <= grad_tol` while `f > f_tol`.
    pub grad_tol: f64,
    pub backtrack_factor: f64,
    pub max_backtracks: usize,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    /// Factor applied to the last accepted step to get the next trial step.
    pub growth: f64,
    pub max_step: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            method: FlowMethod::Gradient,
            step0: 0.5,
            max_iter: 5000,
            f_tol: 1e-12,
            grad_tol: 1e-9,
            backtrack_factor: 0.5,
            max_backtracks: 60,
            armijo: 1e-4,
            growth: 2.0,
            max_step: 1e30,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.step0,
            self.f_tol,
            self.grad_tol,
            self.backtrack_factor,
            self.armijo,
            self.max_step,
        ];
        if positive.iter().any(|x| !(*x > 0.0)) || self.backtrack_factor >= 1.0 || self.growth < 1.0 {
            return Err(FrameError::BadDimensions(format!("invalid flow config {self:?}")));
        }
        if self.max_iter == 0 || self.max_backtracks == 0 {
            return Err(FrameError::BadDimensions("iteration budgets must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlowStep {
    pub iter: usize,
    pub f: f64,
    pub grad_norm: f64,
    /// Step length that produced this iterate (0 for the start).
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind")]
pub enum FlowOutcome {
    Converged,
    CriticalPointReached { a: Vec<f64> },
    IterationLimit,
}

#[derive(Debug, Clone, Serialize)]
pub struct FlowTrace {
    pub iterates: Vec<FlowStep>,
    pub outcome: FlowOutcome,
}

impl FlowTrace {
    pub fn final_f(&self) -> f64 {
        self.iterates.last().map_or(f64::NAN, |s| s.f)
    }

    pub fn is_monotone(&self) -> bool {
        self.iterates.windows(2).all(|w| w[1].f <= w[0].f)
    }

    /// `iter,f,gradnorm,step` rows, floats in shortest round-trip form.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,f,gradnorm,step\n");
        for s in &self.iterates {
            out.push_str(&format!("{},{:?},{:?},{:?}\n", s.iter, s.f, s.grad_norm, s.step));
        }
        out
    }
}

fn check_dims(p: &ProjectionMatrix, len: usize, what: &str) -> Result<()> {
    if p.n() != len {
        return Err(FrameError::DimensionMismatch(format!(
            "projection is {0}x{0}, {what} has length {len}",
            p.n()
        )));
    }
    Ok(())
}

/// Diagonal of `P`.
pub fn moment_map(p: &ProjectionMatrix) -> Result<Vec<f64>> {
    let m = p.matrix();
    let worst = (0..p.n()).map(|j| m[(j, j)].im.abs()).fold(0.0, f64::max);
    if worst > TOL_ALG {
        return Err(FrameError::NotHermitian { residual: worst });
    }
    Ok((0..p.n()).map(|j| m[(j, j)].re).collect())
}

fn diagonal(p: &ProjectionMatrix) -> Vec<f64> {
    (0..p.n()).map(|j| p.matrix()[(j, j)].re).collect()
}

/// `h_a(P) = tr(P Diag(a))`.
pub fn height(p: &ProjectionMatrix, a: &[f64]) -> Result<f64> {
    check_dims(p, a.len(), "a")?;
    Ok(diagonal(p).iter().zip(a).map(|(x, y)| x * y).sum())
}

/// `|mu(P) - d|^2`.
pub fn energy(p: &ProjectionMatrix, d: &NormVector) -> Result<f64> {
    check_dims(p, d.n(), "d")?;
    Ok(energy_unchecked(p, d.d()))
}

fn energy_unchecked(p: &ProjectionMatrix, d: &[f64]) -> f64 {
    diagonal(p).iter().zip(d).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Tangent projection of the ambient gradient `G = 2 Diag(mu - d)`:
/// `X = P G (I - P) + (I - P) G P`.
pub fn riemannian_grad_energy(p: &ProjectionMatrix, d: &NormVector) -> Result<CMat> {
    check_dims(p, d.n(), "d")?;
    Ok(grad_unchecked(p, d.d()))
}

fn grad_unchecked(p: &ProjectionMatrix, d: &[f64]) -> CMat {
    let shift: Vec<f64> = diagonal(p).iter().zip(d).map(|(x, y)| 2.0 * (x - y)).collect();
    moment_adjoint(p, &shift)
}

/// `dmu*(b) = P B (I - P) + (I - P) B P` with `B = Diag(b)`.
fn moment_adjoint(p: &ProjectionMatrix, b: &[f64]) -> CMat {
    let n = p.n();
    let pm = p.matrix();
    let q = CMat::identity(n, n) - pm;
    let pbq = pm * diag(b) * &q;
    let adj = pbq.adjoint();
    pbq + adj
}

/// Damped Gauss-Newton direction for `mu(P) = d`. The normal matrix
/// `dmu dmu*` is `2 (Diag(mu) - |P|^2)` with the square taken entrywise.
fn gauss_newton_direction(p: &ProjectionMatrix, d: &[f64]) -> CMat {
    let n = p.n();
    let m = p.matrix();
    let r: Vec<f64> = diagonal(p).iter().zip(d).map(|(x, y)| x - y).collect();
    let damping = r.iter().map(|x| x * x).sum::<f64>().sqrt();
    let normal = DMatrix::<f64>::from_fn(n, n, |j, l| {
        let base = if j == l { 2.0 * m[(j, j)].re + damping } else { 0.0 };
        base - 2.0 * m[(j, l)].norm_sqr()
    });
    let rhs = DVector::from_column_slice(&r);
    let y = match normal.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => match normal.lu().solve(&rhs) {
            Some(y) => y,
            None => return -moment_adjoint(p, &r),
        },
    };
    -moment_adjoint(p, y.as_slice())
}

/// `sqrt(tr(X^2))` for Hermitian `X`.
pub fn tangent_norm(x: &CMat) -> f64 {
    x.norm()
}

/// Tangent projection `P Y (I - P) + (I - P) Y P` of a Hermitian `Y`.
pub fn project_to_tangent(p: &ProjectionMatrix, y: &CMat) -> CMat {
    let n = p.n();
    let pm = p.matrix();
    let q = CMat::identity(n, n) - pm;
    let a = pm * y * &q;
    let b = &q * y * pm;
    a + b
}

/// `nearest_projection` with jitter-and-retry on eigenvalue ties.
pub fn retract(h: &CMat, k: usize, salt: u64) -> Result<ProjectionMatrix> {
    let mut last = match hermitian::nearest_projection(h, k) {
        Ok(p) => return Ok(p),
        Err(e @ FrameError::EigenvalueTie { .. }) => e,
        Err(e) => return Err(e),
    };
    for attempt in 0..JITTER_ATTEMPTS {
        let mut rng = rng::stream(salt, "retraction-jitter", attempt as u64);
        let noise = rng::hermitian_direction(h.nrows(), &mut rng) * c(JITTER);
        match hermitian::nearest_projection(&(h + noise), k) {
            Ok(p) => return Ok(p),
            Err(e @ FrameError::EigenvalueTie { .. }) => last = e,
            Err(e) => return Err(e),
        }
    }
    Err(last)
}

/// Flow `P0` down `f` until it reaches `mu^{-1}(d)` (up to `f_tol`), stalls at
/// a critical point of positive level, or runs out of iterations.
pub fn retract_to_level(
    p0: &ProjectionMatrix,
    d: &NormVector,
    cfg: &FlowConfig,
) -> Result<(ProjectionMatrix, FlowTrace)> {
    cfg.validate()?;
    check_dims(p0, d.n(), "d")?;
    if p0.rank() != d.k() {
        return Err(FrameError::DimensionMismatch(format!(
            "projection has rank {}, d sums to {}",
            p0.rank(),
            d.k()
        )));
    }
    let k = d.k();
    let mut p = p0.clone();
    let mut f = energy_unchecked(&p, d.d());
    let mut x = grad_unchecked(&p, d.d());
    let mut g = tangent_norm(&x);
    let mut iterates = vec![FlowStep {
        iter: 0,
        f,
        grad_norm: g,
        step: 0.0,
    }];
    let mut eta = cfg.step0;
    for iter in 1..=cfg.max_iter {
        if f <= cfg.f_tol {
            return Ok((p, FlowTrace { iterates, outcome: FlowOutcome::Converged }));
        }
        if g <= cfg.grad_tol {
            let a = diagonal(&p).iter().zip(d.d()).map(|(x, y)| x - y).collect();
            let outcome = FlowOutcome::CriticalPointReached { a };
            return Ok((p, FlowTrace { iterates, outcome }));
        }
        let (direction, mut trial) = match cfg.method {
            FlowMethod::Gradient => (-&x, eta),
            FlowMethod::GaussNewton => (gauss_newton_direction(&p, d.d()), 1.0),
        };
        // directional derivative of f along the search direction
        let mut slope = (&x * &direction).trace().re;
        let direction = if slope < 0.0 {
            direction
        } else {
            slope = -g * g;
            -&x
        };
        let mut accepted = None;
        for _ in 0..cfg.max_backtracks {
            let candidate = retract(&(p.matrix() + &direction * c(trial)), k, iter as u64)?;
            let f_new = energy_unchecked(&candidate, d.d());
            if f_new <= f + cfg.armijo * trial * slope && f_new < f {
                accepted = Some((candidate, f_new));
                break;
            }
            trial *= cfg.backtrack_factor;
        }
        let Some((candidate, f_new)) = accepted else {
            // no decrease is achievable in floating point
            return Ok((p, FlowTrace { iterates, outcome: FlowOutcome::IterationLimit }));
        };
        p = candidate;
        f = f_new;
        x = grad_unchecked(&p, d.d());
        g = tangent_norm(&x);
        iterates.push(FlowStep {
            iter,
            f,
            grad_norm: g,
            step: trial,
        });
        eta = (trial * cfg.growth).min(cfg.max_step);
    }
    let outcome = if f <= cfg.f_tol {
        FlowOutcome::Converged
    } else {
        FlowOutcome::IterationLimit
    };
    Ok((p, FlowTrace { iterates, outcome }))
}

/// Whether `P` commutes with `Diag(mu(P) - d)`, i.e. the gradient vanishes.
/// Returns the shift `a = mu(P) - d` in either case.
pub fn is_critical(p: &ProjectionMatrix, d: &NormVector, tol: f64) -> (bool, Vec<f64>) {
    let a: Vec<f64> = diagonal(p).iter().zip(d.d()).map(|(x, y)| x - y).collect();
    let m = p.matrix();
    let n = p.n();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in 0..n {
            worst = worst.max(m[(i, j)].norm() * (a[j] - a[i]).abs());
        }
    }
    (worst <= tol, a)
}

/// Check that `sigma` (0-based images) is a permutation of `0..n`.
pub fn validate_permutation(sigma: &[usize], n: usize) -> Result<()> {
    if sigma.len() != n {
        return Err(FrameError::BadPermutation(format!("length {} for n = {n}", sigma.len())));
    }
    let mut seen = vec![false; n];
    for &s in sigma {
        if s >= n || seen[s] {
            return Err(FrameError::BadPermutation(format!("{sigma:?}")));
        }
        seen[s] = true;
    }
    Ok(())
}

pub fn invert_permutation(sigma: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; sigma.len()];
    for (i, &s) in sigma.iter().enumerate() {
        inv[s] = i;
    }
    inv
}

/// `g P g*` with `g e_j = e_{sigma(j)}`.
pub fn conjugate_by_permutation(p: &ProjectionMatrix, sigma: &[usize]) -> Result<ProjectionMatrix> {
    validate_permutation(sigma, p.n())?;
    let m = p.matrix();
    let mut out = CMat::zeros(p.n(), p.n());
    for i in 0..p.n() {
        for j in 0..p.n() {
            out[(sigma[i], sigma[j])] = m[(i, j)];
        }
    }
    Ok(ProjectionMatrix::from_matrix_unchecked(out, p.rank()))
}
