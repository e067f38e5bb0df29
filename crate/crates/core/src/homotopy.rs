//! Paths and loops in level sets of the moment map, and winding invariants.
//!
//! Paths are built in the Grassmannian along geodesics (principal angles) and
//! pushed onto `mu^{-1}(d)` by the gradient flow of the energy. Loops are
//! contracted by coning them off to their first sample along geodesics and
//! retracting the whole grid. None of this proves anything about homotopy
//! groups; the winding numbers of relative phases are the actual invariants
//! on the circle and torus fibers where they apply.

use std::f64::consts::{PI, TAU};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{FrameError, Result};
use crate::flow::{self, FlowConfig, FlowMethod, FlowOutcome};
use crate::hermitian::{self, c, CMat, Frame, ProjectionMatrix, UnitaryMatrix, C64};
use crate::polytope::NormVector;
use crate::rng;
use crate::schur_horn::{self, verify_membership};

/// Distance from `pi / 2` at which principal angles count as the cut locus.
pub const CUT_MARGIN: f64 = 1e-6;
/// Largest wrapped phase step accepted when unwrapping.
pub const MAX_PHASE_STEP: f64 = 0.9 * PI;

const ZERO_ENTRY: f64 = 1e-9;
const CLOSED_TOL: f64 = 1e-9;
const ROW_CLOSED_TOL: f64 = 1e-6;
const EIGEN_MIX: [f64; 4] = [0.618_033_988_749_894_9, 0.377_964_473_009_227_2, 1.732_050_807_568_877_2, 2.645_751_311_064_590_6];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HomotopyConfig {
    /// Geodesic samples `T` per path (and per loop).
    pub samples: usize,
    /// Contraction steps `S`.
    pub grid: usize,
    pub step_cap: f64,
    pub path_tol: f64,
    pub retries: usize,
    pub flow: FlowConfig,
}

impl Default for HomotopyConfig {
    fn default() -> Self {
        HomotopyConfig {
            samples: 32,
            grid: 32,
            step_cap: 0.5,
            path_tol: 1e-6,
            retries: 3,
            flow: FlowConfig {
                method: FlowMethod::GaussNewton,
                ..FlowConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProjectionPath {
    pub samples: Vec<ProjectionMatrix>,
    pub d: Option<NormVector>,
    /// `max sqrt(f)` over the samples, when `d` is known.
    pub max_level_residual: Option<f64>,
    pub max_step: f64,
}

impl ProjectionPath {
    pub fn new(samples: Vec<ProjectionMatrix>) -> Self {
        let max_step = max_consecutive(&samples, ProjectionMatrix::distance);
        ProjectionPath {
            samples,
            d: None,
            max_level_residual: None,
            max_step,
        }
    }

    pub fn on_level(samples: Vec<ProjectionMatrix>, d: &NormVector) -> Result<Self> {
        let mut path = Self::new(samples);
        let mut worst = 0.0_f64;
        for p in &path.samples {
            worst = worst.max(flow::energy(p, d)?.sqrt());
        }
        path.d = Some(d.clone());
        path.max_level_residual = Some(worst);
        Ok(path)
    }

    pub fn is_closed(&self, tol: f64) -> bool {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => a.distance(b) <= tol,
            _ => false,
        }
    }
}

fn max_consecutive<T>(items: &[T], dist: impl Fn(&T, &T) -> f64) -> f64 {
    items.windows(2).map(|w| dist(&w[0], &w[1])).fold(0.0, f64::max)
}

/// The Grassmannian geodesic between two projections, through principal
/// vectors: `Y(t) = Y0 cos(t theta) + Q sin(t theta)`.
#[derive(Debug, Clone)]
pub struct Geodesic {
    start: ProjectionMatrix,
    end: ProjectionMatrix,
    y0: CMat,
    q: CMat,
    angles: Vec<f64>,
}

impl Geodesic {
    pub fn new(p0: &ProjectionMatrix, p1: &ProjectionMatrix) -> Result<Self> {
        if p0.n() != p1.n() || p0.rank() != p1.rank() {
            return Err(FrameError::DimensionMismatch(format!(
                "geodesic between Gr_{}(C^{}) and Gr_{}(C^{})",
                p0.rank(),
                p0.n(),
                p1.rank(),
                p1.n()
            )));
        }
        let (n, k) = (p0.n(), p0.rank());
        let v0 = p0.range_basis();
        let v1 = p1.range_basis();
        let (y0, y1, cosines) = if k == 0 {
            (CMat::zeros(n, 0), CMat::zeros(n, 0), Vec::new())
        } else {
            let svd = hermitian::svd_square(&(v0.adjoint() * &v1));
            (&v0 * svd.u, &v1 * svd.v, svd.singular_values)
        };
        let mut q = CMat::zeros(n, k);
        let mut angles = Vec::with_capacity(k);
        for i in 0..k {
            let cos = cosines[i].min(1.0);
            let residual = y1.column(i) - y0.column(i) * c(cos);
            let sin = residual.norm();
            let angle = sin.atan2(cos);
            if angle >= PI / 2.0 - CUT_MARGIN {
                return Err(FrameError::CutLocus { angle });
            }
            if sin > 0.0 {
                q.set_column(i, &residual.unscale(sin));
            }
            angles.push(angle);
        }
        Ok(Geodesic {
            start: p0.clone(),
            end: p1.clone(),
            y0,
            q,
            angles,
        })
    }

    /// The point at parameter `t` in `[0, 1]`; the endpoints are returned
    /// exactly.
    pub fn at(&self, t: f64) -> ProjectionMatrix {
        if t <= 0.0 {
            return self.start.clone();
        }
        if t >= 1.0 {
            return self.end.clone();
        }
        let mut y = self.y0.clone();
        for (i, &theta) in self.angles.iter().enumerate() {
            let col = self.y0.column(i) * c((t * theta).cos()) + self.q.column(i) * c((t * theta).sin());
            y.set_column(i, &col);
        }
        ProjectionMatrix::from_matrix_unchecked(&y * y.adjoint(), self.start.rank())
    }

    pub fn principal_angles(&self) -> &[f64] {
        &self.angles
    }
}

/// `T + 1` samples of the geodesic from `P0` to `P1`.
pub fn geodesic_path(p0: &ProjectionMatrix, p1: &ProjectionMatrix, t: usize) -> Result<ProjectionPath> {
    if t == 0 {
        return Err(FrameError::BadDimensions("a path needs at least one step".into()));
    }
    let g = Geodesic::new(p0, p1)?;
    let samples = (0..=t).map(|i| g.at(i as f64 / t as f64)).collect();
    Ok(ProjectionPath::new(samples))
}

/// Retract onto `mu^{-1}(d)`, mapping flow outcomes to errors.
pub fn retract_strict(p: &ProjectionMatrix, d: &NormVector, cfg: &FlowConfig) -> Result<ProjectionMatrix> {
    let (q, trace) = flow::retract_to_level(p, d, cfg)?;
    match trace.outcome {
        FlowOutcome::Converged => Ok(q),
        FlowOutcome::CriticalPointReached { .. } => Err(FrameError::RetractionHitCriticalStratum {
            level: trace.final_f(),
        }),
        FlowOutcome::IterationLimit => Err(FrameError::RetractionDidNotConverge {
            level: trace.final_f(),
        }),
    }
}

/// Point of `mu^{-1}(d)`: a Haar-random projection pushed down the flow.
pub fn random_level_point(d: &NormVector, seed: u64, cfg: &FlowConfig) -> Result<ProjectionMatrix> {
    let mut last = None;
    for attempt in 0..8 {
        let start = hermitian::random_projection(d.n(), d.k(), rng::derive_seed(seed, "level-point", attempt));
        match retract_strict(&start, d, cfg) {
            Ok(p) => return Ok(p),
            Err(e) => last = Some(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

/// Frame in `F^d`: a random level point with a Haar-random fiber coordinate.
pub fn random_level_frame(d: &NormVector, seed: u64, cfg: &FlowConfig) -> Result<Frame> {
    let p = random_level_point(d, seed, cfg)?;
    let base = hermitian::factor_projection(&p)?;
    let mut rng = rng::stream(seed, "level-frame", d.n() as u64);
    hermitian::unitary_act(&UnitaryMatrix::random(d.k(), &mut rng), &base)
}

/// Orthonormal pair of random tangent directions at `P` (metric `tr(XY)`).
fn tangent_pair(p: &ProjectionMatrix, seed: u64) -> (CMat, CMat) {
    let mut rng = rng::stream(seed, "tangent-pair", p.n() as u64);
    let x1 = flow::project_to_tangent(p, &rng::hermitian_direction(p.n(), &mut rng));
    let x1 = x1.unscale(flow::tangent_norm(&x1));
    let x2 = flow::project_to_tangent(p, &rng::hermitian_direction(p.n(), &mut rng));
    let overlap = (&x1 * &x2).trace().re;
    let x2 = x2 - &x1 * c(overlap);
    let x2 = x2.unscale(flow::tangent_norm(&x2));
    (x1, x2)
}

/// Closed loop in `mu^{-1}(d)`: a circle of the given radius in a random
/// tangent plane at a random level point, reprojected and retracted. The
/// last sample repeats the first.
pub fn random_level_loop(d: &NormVector, radius: f64, samples: usize, seed: u64, cfg: &FlowConfig) -> Result<ProjectionPath> {
    let base = random_level_point(d, seed, cfg)?;
    let (x1, x2) = tangent_pair(&base, seed);
    let mut out = Vec::with_capacity(samples + 1);
    for t in 0..samples {
        let theta = TAU * t as f64 / samples as f64;
        let h = base.matrix() + (&x1 * c(theta.cos()) + &x2 * c(theta.sin())) * c(radius);
        let p = flow::retract(&h, d.k(), rng::derive_seed(seed, "loop-sample", t as u64))?;
        out.push(retract_strict(&p, d, cfg)?);
    }
    out.push(out[0].clone());
    ProjectionPath::on_level(out, d)
}

/// Eigendecomposition `U = V Diag(e^{i phi}) V*` of a unitary, through the
/// commuting Hermitian pair `(U + U*)/2`, `(U - U*)/2i`.
fn unitary_log(u: &CMat) -> Result<(CMat, Vec<f64>)> {
    let k = u.nrows();
    let re = (u + u.adjoint()) * c(0.5);
    let im = (u - u.adjoint()) * C64::new(0.0, -0.5);
    let mut worst = f64::INFINITY;
    for gamma in EIGEN_MIX {
        let eig = hermitian::hermitian_eigen(&(&re + &im * c(gamma)));
        let v = eig.vectors;
        let phases: Vec<f64> = (0..k)
            .map(|i| (v.column(i).adjoint() * u * v.column(i))[(0, 0)].arg())
            .collect();
        let rebuilt = &v * CMat::from_diagonal(&phases.iter().map(|&p| C64::from_polar(1.0, p)).collect::<Vec<_>>().into()) * v.adjoint();
        let residual = hermitian::max_abs(&(rebuilt - u));
        if residual <= 1e-10 {
            return Ok((v, phases));
        }
        worst = worst.min(residual);
    }
    Err(FrameError::NumericalStall { residual: worst })
}

/// Frames along a path in `F^d` together with the projection path below it.
#[derive(Debug, Clone)]
pub struct ConnectionReport {
    pub frames: Vec<Frame>,
    pub projections: ProjectionPath,
    /// Index of the first frame of the final fiber segment.
    pub fiber_start: usize,
    pub max_membership_residual: f64,
    pub max_frame_step: f64,
    pub attempts: usize,
    pub success: bool,
}

fn connect_projections(
    p0: &ProjectionMatrix,
    p1: &ProjectionMatrix,
    d: &NormVector,
    cfg: &HomotopyConfig,
    attempt: usize,
    seed: u64,
) -> Result<Vec<ProjectionMatrix>> {
    let t = cfg.samples.max(1);
    let raw: Vec<ProjectionMatrix> = if attempt == 0 {
        geodesic_path(p0, p1, t)?.samples
    } else {
        // detour through a jittered midpoint
        let mut rng = rng::stream(seed, "connect-jitter", attempt as u64);
        let mid = (p0.matrix() + p1.matrix()) * c(0.5) + rng::hermitian_direction(d.n(), &mut rng) * c(0.2);
        let w = flow::retract(&mid, d.k(), seed ^ attempt as u64)?;
        let half = t.div_ceil(2);
        let mut first = geodesic_path(p0, &w, half)?.samples;
        let second = geodesic_path(&w, p1, half)?.samples;
        first.extend(second.into_iter().skip(1));
        first
    };
    let last = raw.len() - 1;
    raw.into_par_iter()
        .enumerate()
        .map(|(i, p)| {
            if i == 0 || i == last {
                Ok(p)
            } else {
                retract_strict(&p, d, &cfg.flow)
            }
        })
        .collect()
}

/// Path in `F^d` from `F0` to `F1`: a retracted geodesic between the Gram
/// projections, lifted with polar alignment, then a one-parameter subgroup
/// of `U(k)` inside the last fiber.
pub fn connect_frames(f0: &Frame, f1: &Frame, d: &NormVector, cfg: &HomotopyConfig, seed: u64) -> Result<ConnectionReport> {
    for (index, f) in [f0, f1].into_iter().enumerate() {
        let report = verify_membership(f, d, cfg.path_tol)?;
        if !report.passed {
            return Err(FrameError::NotInFiber {
                index,
                reason: format!(
                    "tightness {:e}, norm residual {:e}",
                    report.tight_residual, report.max_norm_residual
                ),
            });
        }
    }
    let p0 = hermitian::gram_projection(f0)?;
    let p1 = hermitian::gram_projection(f1)?;
    let mut attempt = 0;
    let projections = loop {
        match connect_projections(&p0, &p1, d, cfg, attempt, seed) {
            Ok(path) => break path,
            Err(FrameError::RetractionHitCriticalStratum { .. } | FrameError::CutLocus { .. })
                if attempt < cfg.retries =>
            {
                attempt += 1
            }
            Err(e) => return Err(e),
        }
    };

    let mut frames = vec![f0.clone()];
    for p in &projections[1..] {
        let prev = frames.last().expect("nonempty");
        let raw = hermitian::factor_projection(p)?;
        let w = hermitian::polar_unitary(&(prev.matrix() * raw.matrix().adjoint()));
        frames.push(Frame::from_matrix_unchecked(w * raw.matrix()));
    }
    let fiber_start = frames.len() - 1;
    let end = frames.last().expect("nonempty").clone();
    let gap = f1.matrix() * end.matrix().adjoint();
    let (v, phases) = unitary_log(&gap)?;
    let spread: f64 = phases.iter().map(|p| p * p).sum::<f64>().sqrt();
    let steps = ((2.0 * spread / cfg.step_cap).ceil() as usize).max(1);
    for s in 1..steps {
        let frac = s as f64 / steps as f64;
        let diag: Vec<C64> = phases.iter().map(|&p| C64::from_polar(1.0, frac * p)).collect();
        let u = &v * CMat::from_diagonal(&diag.into()) * v.adjoint();
        frames.push(hermitian::unitary_act(&UnitaryMatrix::from_matrix_unchecked(u), &end)?);
    }
    frames.push(f1.clone());

    let mut max_membership_residual = 0.0_f64;
    for f in &frames {
        let r = verify_membership(f, d, cfg.path_tol)?;
        max_membership_residual = max_membership_residual.max(r.tight_residual).max(r.max_norm_residual);
    }
    let max_frame_step = max_consecutive(&frames, Frame::distance);
    let projections = ProjectionPath::on_level(projections, d)?;
    let success = max_membership_residual <= cfg.path_tol && max_frame_step <= cfg.step_cap && projections.max_step <= cfg.step_cap;
    Ok(ConnectionReport {
        frames,
        projections,
        fiber_start,
        max_membership_residual,
        max_frame_step,
        attempts: attempt + 1,
        success,
    })
}

/// One grid point of a contraction.
#[derive(Debug, Clone)]
pub enum GridPoint {
    Retracted(ProjectionMatrix),
    Critical { level: f64 },
    Stalled { level: f64 },
    CutLocus { angle: f64 },
    Failed(String),
}

impl GridPoint {
    pub fn projection(&self) -> Option<&ProjectionMatrix> {
        match self {
            GridPoint::Retracted(p) => Some(p),
            _ => None,
        }
    }

    pub fn status(&self) -> &'static str {
        match self {
            GridPoint::Retracted(_) => "converged",
            GridPoint::Critical { .. } => "critical",
            GridPoint::Stalled { .. } => "stalled",
            GridPoint::CutLocus { .. } => "cut_locus",
            GridPoint::Failed(_) => "failed",
        }
    }
}

#[derive(Debug, Clone)]
pub struct HomotopyReport {
    /// `grid[s][t]`: row 0 is the loop, row `S` the basepoint.
    pub grid: Vec<Vec<GridPoint>>,
    pub success: bool,
    pub max_level_residual: f64,
    pub critical_hits: usize,
    pub max_row_gap: f64,
    pub max_row_step: f64,
    pub max_closure_gap: f64,
}

/// Cone the loop off to `loop[0]` along geodesics and retract the grid.
pub fn contract_loop(path: &ProjectionPath, d: &NormVector, cfg: &HomotopyConfig) -> Result<HomotopyReport> {
    let samples = &path.samples;
    if samples.len() < 2 || !path.is_closed(CLOSED_TOL) {
        return Err(FrameError::NotClosed(format!(
            "first and last samples differ by {:e}",
            match (samples.first(), samples.last()) {
                (Some(a), Some(b)) => a.distance(b),
                _ => f64::INFINITY,
            }
        )));
    }
    let base = &samples[0];
    let s_max = cfg.grid.max(1);
    let columns: Vec<Vec<GridPoint>> = samples
        .par_iter()
        .map(|target| {
            let geo = match Geodesic::new(base, target) {
                Ok(g) => g,
                Err(FrameError::CutLocus { angle }) => {
                    let mut col = vec![GridPoint::CutLocus { angle }; s_max + 1];
                    col[0] = GridPoint::Retracted(target.clone());
                    col[s_max] = GridPoint::Retracted(base.clone());
                    return col;
                }
                Err(e) => return vec![GridPoint::Failed(e.to_string()); s_max + 1],
            };
            (0..=s_max)
                .map(|s| {
                    if s == 0 {
                        return GridPoint::Retracted(target.clone());
                    }
                    if s == s_max {
                        return GridPoint::Retracted(base.clone());
                    }
                    let p = geo.at(1.0 - s as f64 / s_max as f64);
                    match flow::retract_to_level(&p, d, &cfg.flow) {
                        Ok((q, trace)) => match trace.outcome {
                            FlowOutcome::Converged => GridPoint::Retracted(q),
                            FlowOutcome::CriticalPointReached { .. } => GridPoint::Critical { level: trace.final_f() },
                            FlowOutcome::IterationLimit => GridPoint::Stalled { level: trace.final_f() },
                        },
                        Err(e) => GridPoint::Failed(e.to_string()),
                    }
                })
                .collect()
        })
        .collect();
    let t_len = samples.len();
    let grid: Vec<Vec<GridPoint>> = (0..=s_max)
        .map(|s| (0..t_len).map(|t| columns[t][s].clone()).collect())
        .collect();

    let mut critical_hits = 0;
    let mut all_converged = true;
    let mut max_level_residual = 0.0_f64;
    for point in grid.iter().flatten() {
        match point {
            GridPoint::Retracted(p) => max_level_residual = max_level_residual.max(flow::energy(p, d)?.sqrt()),
            GridPoint::Critical { level } => {
                critical_hits += 1;
                all_converged = false;
                max_level_residual = max_level_residual.max(level.sqrt());
            }
            GridPoint::Stalled { level } => {
                all_converged = false;
                max_level_residual = max_level_residual.max(level.sqrt());
            }
            _ => all_converged = false,
        }
    }
    let (mut max_row_gap, mut max_row_step, mut max_closure_gap) = (0.0_f64, 0.0_f64, 0.0_f64);
    if all_converged {
        let proj = |s: usize, t: usize| grid[s][t].projection().expect("converged");
        for s in 0..=s_max {
            max_closure_gap = max_closure_gap.max(proj(s, 0).distance(proj(s, t_len - 1)));
            for t in 0..t_len {
                if t + 1 < t_len {
                    max_row_step = max_row_step.max(proj(s, t).distance(proj(s, t + 1)));
                }
                if s < s_max {
                    max_row_gap = max_row_gap.max(proj(s, t).distance(proj(s + 1, t)));
                }
            }
        }
    }
    let collapsed = grid[s_max]
        .iter()
        .all(|g| g.projection().is_some_and(|p| p.distance(base) <= ROW_CLOSED_TOL));
    let success = all_converged
        && collapsed
        && max_closure_gap <= ROW_CLOSED_TOL
        && max_row_gap <= cfg.step_cap
        && max_row_step <= cfg.step_cap;
    Ok(HomotopyReport {
        grid,
        success,
        max_level_residual,
        critical_hits,
        max_row_gap,
        max_row_step,
        max_closure_gap,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WindingInvariant {
    pub components: Vec<i64>,
}

/// Net number of turns of a cyclic sequence of phases. The step from the
/// last sample back to the first is included, so a repeated endpoint adds
/// nothing.
pub fn unwrap_winding(phases: &[f64]) -> Result<i64> {
    let len = phases.len();
    let mut total = 0.0;
    for i in 0..len {
        let step = wrap(phases[(i + 1) % len] - phases[i]);
        if step.abs() >= MAX_PHASE_STEP {
            return Err(FrameError::UndersampledLoop { index: i, step });
        }
        total += step;
    }
    let turns = (total / TAU).round();
    if (total - turns * TAU).abs() > 0.01 {
        return Err(FrameError::NotClosed(format!("total phase {total}")));
    }
    Ok(turns as i64)
}

fn wrap(x: f64) -> f64 {
    let y = x.rem_euclid(TAU);
    if y > PI {
        y - TAU
    } else {
        y
    }
}

/// Winding of `arg(f_2 / f_1)` along a loop of `1 x 2` frames.
pub fn winding_cp1(frames: &[Frame]) -> Result<WindingInvariant> {
    if frames.is_empty() {
        return Err(FrameError::NotClosed("empty loop".into()));
    }
    let mut phases = Vec::with_capacity(frames.len());
    for (index, f) in frames.iter().enumerate() {
        if f.n() != 2 || f.k() != 1 {
            return Err(FrameError::DimensionMismatch(format!(
                "winding_cp1 needs 1x2 frames, sample {index} is {}x{}",
                f.k(),
                f.n()
            )));
        }
        let (a, b) = (f.matrix()[(0, 0)], f.matrix()[(0, 1)]);
        if a.norm() < ZERO_ENTRY || b.norm() < ZERO_ENTRY {
            return Err(FrameError::ZeroEntry { index });
        }
        phases.push((b * a.conj()).arg());
    }
    Ok(WindingInvariant {
        components: vec![unwrap_winding(&phases)?],
    })
}

/// The unit vector `v` with `P = e_4 e_4* + v v*`, phase fixed so `v_1 > 0`,
/// for a projection in `mu^{-1}((1/3, 1/3, 1/3, 1))`.
pub fn torus_line(p: &ProjectionMatrix, index: usize) -> Result<[C64; 3]> {
    let not_in = |reason: String| FrameError::NotInFiber { index, reason };
    if p.n() != 4 || p.rank() != 2 {
        return Err(not_in(format!("expected a rank-2 projection on C^4, got rank {} on C^{}", p.rank(), p.n())));
    }
    let m = p.matrix();
    let e4_residual = (0..4)
        .map(|i| (m[(i, 3)] - c(if i == 3 { 1.0 } else { 0.0 })).norm())
        .fold(0.0, f64::max);
    if e4_residual > 1e-8 {
        return Err(not_in(format!("P e_4 differs from e_4 by {e4_residual:e}")));
    }
    let rest = CMat::from_fn(3, 3, |i, j| m[(i, j)]);
    let col = (0..3)
        .max_by(|&a, &b| rest.column(a).norm().total_cmp(&rest.column(b).norm()))
        .expect("three columns");
    let v = rest.column(col).unscale(rest.column(col).norm());
    if v[0].norm() < ZERO_ENTRY {
        return Err(FrameError::ZeroEntry { index });
    }
    let phase = v[0].conj() / v[0].norm();
    let v = [v[0] * phase, v[1] * phase, v[2] * phase];
    let target = 1.0 / 3.0_f64.sqrt();
    for (i, z) in v.iter().enumerate() {
        if (z.norm() - target).abs() > 1e-6 {
            return Err(not_in(format!("|v_{}| = {} instead of 1/sqrt(3)", i + 1, z.norm())));
        }
    }
    Ok(v)
}

/// Windings of `arg(v_2 / v_1)` and `arg(v_3 / v_1)` along a loop in
/// `mu^{-1}((1/3, 1/3, 1/3, 1))`.
pub fn torus_invariant(samples: &[ProjectionMatrix]) -> Result<WindingInvariant> {
    if samples.is_empty() {
        return Err(FrameError::NotClosed("empty loop".into()));
    }
    let mut second = Vec::with_capacity(samples.len());
    let mut third = Vec::with_capacity(samples.len());
    for (index, p) in samples.iter().enumerate() {
        let v = torus_line(p, index)?;
        second.push((v[1] / v[0]).arg());
        third.push((v[2] / v[0]).arg());
    }
    Ok(WindingInvariant {
        components: vec![unwrap_winding(&second)?, unwrap_winding(&third)?],
    })
}

/// `e_4 e_4* + v v*` for a unit `v` in the first three coordinates.
pub fn torus_projection(v: [C64; 3]) -> ProjectionMatrix {
    let mut u = CMat::zeros(4, 2);
    for i in 0..3 {
        u[(i, 0)] = v[i];
    }
    u[(3, 1)] = c(1.0);
    ProjectionMatrix::from_matrix_unchecked(&u * u.adjoint(), 2)
}

#[derive(Debug, Clone, Serialize)]
pub struct FiberReport {
    pub retractions: usize,
    pub converged: usize,
    pub max_converged_distance: f64,
    pub frames: usize,
    pub max_right_block: f64,
    pub max_unitarity_residual: f64,
    pub passed: bool,
}

/// The level set over `(1, 1, 0, 0)` is the single point `Diag(1,1,0,0)`
/// and the frames over it are `U [I_2 | 0]`.
pub fn verify_point_fiber(seed: u64) -> Result<FiberReport> {
    let d = NormVector::new(vec![1.0, 1.0, 0.0, 0.0], 2)?;
    let point = ProjectionMatrix::coordinate(4, &[0, 1]);
    // the minimum is degenerate, so distance ~ f^(1/4)
    let cfg = FlowConfig {
        f_tol: 1e-28,
        grad_tol: 1e-30,
        ..FlowConfig::default()
    };
    let outcomes: Vec<Result<Option<f64>>> = (0..50u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, "point-fiber-retraction", i);
            let start = point.matrix() + rng::hermitian_direction(4, &mut rng) * c(0.5);
            let p0 = flow::retract(&start, 2, i)?;
            let (p, trace) = flow::retract_to_level(&p0, &d, &cfg)?;
            Ok(matches!(trace.outcome, FlowOutcome::Converged).then(|| p.distance(&point)))
        })
        .collect();
    let mut converged = 0;
    let mut max_converged_distance = 0.0_f64;
    for o in outcomes {
        if let Some(dist) = o? {
            converged += 1;
            max_converged_distance = max_converged_distance.max(dist);
        }
    }
    let mut max_right_block = 0.0_f64;
    let mut max_unitarity_residual = 0.0_f64;
    for i in 0..50u64 {
        let f = schur_horn::construct_frame(&d, rng::derive_seed(seed, "point-fiber-frame", i))?;
        let m = f.matrix();
        let right = CMat::from_fn(2, 2, |r, s| m[(r, s + 2)]);
        let left = CMat::from_fn(2, 2, |r, s| m[(r, s)]);
        max_right_block = max_right_block.max(hermitian::max_abs(&right));
        max_unitarity_residual =
            max_unitarity_residual.max(hermitian::max_abs(&(&left * left.adjoint() - CMat::identity(2, 2))));
    }
    Ok(FiberReport {
        retractions: 50,
        converged,
        max_converged_distance,
        frames: 50,
        max_right_block,
        max_unitarity_residual,
        passed: converged > 0 && max_converged_distance <= 1e-6 && max_right_block <= 1e-9 && max_unitarity_residual <= 1e-9,
    })
}

/// The loop `F(theta) = (1, e^{i w theta}) / sqrt 2` with `samples` points
/// over one period (endpoint not repeated).
pub fn cp1_loop(winding: i64, samples: usize) -> Vec<Frame> {
    (0..samples)
        .map(|t| {
            let theta = TAU * t as f64 / samples as f64;
            let s = std::f64::consts::FRAC_1_SQRT_2;
            Frame::from_matrix_unchecked(CMat::from_row_slice(
                1,
                2,
                &[c(s), C64::from_polar(s, winding as f64 * theta)],
            ))
        })
        .collect()
}

/// The loop `v(theta) = (1, e^{i w2 theta}, e^{i w3 theta}) / sqrt 3` in the
/// level set over `(1/3, 1/3, 1/3, 1)`.
pub fn torus_loop(w2: i64, w3: i64, samples: usize) -> Vec<ProjectionMatrix> {
    let s = 1.0 / 3.0_f64.sqrt();
    (0..samples)
        .map(|t| {
            let theta = TAU * t as f64 / samples as f64;
            torus_projection([
                c(s),
                C64::from_polar(s, w2 as f64 * theta),
                C64::from_polar(s, w3 as f64 * theta),
            ])
        })
        .collect()
}
