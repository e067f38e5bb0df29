//! The acceptance suite: ten criteria with fixed seeds, shared by the
//! `frametop acceptance` subcommand and the `acceptance` test target.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{FrameError, Result};
use crate::flow::{self, FlowConfig, FlowOutcome};
use crate::hermitian::{self, c, ProjectionMatrix};
use crate::homotopy::{self, HomotopyConfig, ProjectionPath};
use crate::polytope::{self, NormVector};
use crate::rng;
use crate::schur_horn;
use crate::strata;

/// Seed used when none is given.
pub const DEFAULT_SEED: u64 = 20_240_601;

#[derive(Debug, Clone, Serialize)]
pub struct CriterionResult {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!(
            "criterion {:>2} {:<20} {}  ({:.1} s) {}",
            self.id,
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.seconds,
            self.detail
        )
    }
}

/// `(id, name)` of every criterion.
pub const CRITERIA: [(u8, &str); 10] = [
    (1, "frame-synthesis"),
    (2, "hypothesis-check"),
    (3, "strata-negative"),
    (4, "strata-positive"),
    (5, "strata-codim"),
    (6, "retraction"),
    (7, "point-fiber"),
    (8, "simply-connected"),
    (9, "winding"),
    (10, "covariance"),
];

/// Whether criterion `(id, name)` is selected by `filters` (ids or name
/// prefixes; an empty filter selects everything).
pub fn selected(id: u8, name: &str, filters: &[String]) -> bool {
    filters.is_empty()
        || filters
            .iter()
            .any(|f| f.parse::<u8>().is_ok_and(|n| n == id) || name.starts_with(f.as_str()))
}

pub fn run(filters: &[String], seed: u64) -> Vec<CriterionResult> {
    CRITERIA
        .iter()
        .filter(|(id, name)| selected(*id, name, filters))
        .map(|&(id, _)| run_criterion(id, seed))
        .collect()
}

pub fn run_criterion(id: u8, seed: u64) -> CriterionResult {
    let name = CRITERIA
        .iter()
        .find(|(i, _)| *i == id)
        .map_or("unknown", |(_, n)| n);
    let start = Instant::now();
    let outcome = match id {
        1 => frame_synthesis(seed),
        2 => hypothesis_check(seed),
        3 => strata_negative(),
        4 => strata_positive(seed),
        5 => strata_codim(seed),
        6 => retraction(seed),
        7 => point_fiber(seed),
        8 => simply_connected(seed),
        9 => winding(),
        10 => covariance(seed),
        _ => Err(FrameError::BadDimensions(format!("no criterion {id}"))),
    };
    let seconds = start.elapsed().as_secs_f64();
    let (passed, detail) = match outcome {
        Ok(v) => v,
        Err(e) => (false, format!("error {}: {e}", e.kind())),
    };
    CriterionResult {
        id,
        name,
        passed,
        detail,
        seconds,
    }
}

type Verdict = Result<(bool, String)>;

fn frame_synthesis(seed: u64) -> Verdict {
    let start = Instant::now();
    let worst: Vec<(f64, f64)> = (0..1000u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, "acceptance-synthesis", i);
            let n = 4 + (i % 9) as usize;
            let k = rng.random_range(1..n);
            let d = polytope::sample_polytope(n, k, &mut rng)?;
            let f = schur_horn::construct_frame(&d, rng::derive_seed(seed, "acceptance-frame", i))?;
            let r = schur_horn::verify_membership(&f, &d, 1e-9)?;
            Ok((r.tight_residual, r.max_norm_residual))
        })
        .collect::<Result<_>>()?;
    let elapsed = start.elapsed().as_secs_f64();
    let tight = worst.iter().map(|w| w.0).fold(0.0, f64::max);
    let norms = worst.iter().map(|w| w.1).fold(0.0, f64::max);
    Ok((
        tight <= 1e-9 && norms <= 1e-9 && elapsed <= 30.0,
        format!("1000 frames, max tightness {tight:.2e}, max norm residual {norms:.2e}, {elapsed:.2} s"),
    ))
}

fn hypothesis_check(seed: u64) -> Verdict {
    let disagreements: usize = (0..10_000u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, "acceptance-hypothesis", i);
            let n = rng.random_range(1..=12);
            let k = rng.random_range(0..=n);
            let d = match i % 3 {
                0 => polytope::sample_polytope(n, k, &mut rng)?,
                1 => polytope::sample_boundary(n, k, &mut rng)?,
                _ => match polytope::sample_hypothesis(n, k, &mut rng)? {
                    Some(d) => d,
                    None => polytope::sample_polytope(n, k, &mut rng)?,
                },
            };
            let fast = polytope::satisfies_hypothesis(&d);
            Ok(usize::from(fast != polytope::brute_force_hypothesis(&d)?))
        })
        .collect::<Result<Vec<usize>>>()?
        .into_iter()
        .sum();
    let mut grid_errors = Vec::new();
    for n in 1..=10 {
        for k in 0..=n {
            let expected = k >= 2 && k + 2 <= n;
            if polytope::satisfies_hypothesis(&polytope::uniform_d(n, k)?) != expected {
                grid_errors.push((n, k));
            }
        }
    }
    Ok((
        disagreements == 0 && grid_errors.is_empty(),
        format!(
            "{disagreements} disagreements in 10000 vectors; uniform grid mismatches {grid_errors:?}"
        ),
    ))
}

fn strata_negative() -> Verdict {
    let d = NormVector::new(vec![1.0, 1.0, 0.0, 0.0], 2)?;
    let strata = strata::enumerate_strata(&d)?;
    let target = [-0.5, -0.5, 0.5, 0.5];
    let hit = strata
        .iter()
        .find(|s| s.a.iter().zip(&target).all(|(x, y)| (x - y).abs() <= 1e-12));
    let min = strata::min_positive_codim(&d)?;
    let ok = hit.is_some_and(|s| {
        s.capacities == [1, 1] && s.codim_complex == 1 && (s.energy_level() - 1.0).abs() <= 1e-12
    }) && min == Some(1);
    Ok((
        ok,
        format!(
            "{} descriptors; target {}; min positive codim {min:?}",
            strata.len(),
            match hit {
                Some(s) => format!("c = {:?}, codim {}, level {}", s.capacities, s.codim_complex, s.energy_level()),
                None => "missing".into(),
            }
        ),
    ))
}

fn strata_positive(seed: u64) -> Verdict {
    let mut summary = Vec::new();
    let mut ok = true;
    for (n, k) in [(4usize, 2usize), (5, 2), (6, 3)] {
        let mins: Vec<Option<usize>> = (0..100u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = rng::stream(seed, "acceptance-prop41", (n as u64) << 32 | i);
                let d = polytope::sample_hypothesis(n, k, &mut rng)?
                    .ok_or_else(|| FrameError::NotInPolytope(format!("no hypothesis points in ({n},{k})")))?;
                strata::min_positive_codim(&d)
            })
            .collect::<Result<_>>()?;
        let worst = mins.iter().flatten().min().copied();
        ok &= worst.is_none_or(|m| m >= 2);
        summary.push(format!("({n},{k}): min codim {worst:?}"));
    }
    Ok((ok, format!("300 hypothesis vectors; {}", summary.join(", "))))
}

fn strata_codim(seed: u64) -> Verdict {
    let mut pairs = Vec::new();
    for n in 1..=5usize {
        for k in 0..=n {
            for i in 0..20u64 {
                pairs.push((n, k, i));
            }
        }
    }
    let results: Vec<(usize, usize)> = pairs
        .into_par_iter()
        .map(|(n, k, i)| {
            let mut rng = rng::stream(seed, "acceptance-hessian", ((n * 16 + k) as u64) << 32 | i);
            let d = if i % 2 == 0 {
                polytope::sample_polytope(n, k, &mut rng)?
            } else {
                polytope::sample_boundary(n, k, &mut rng)?
            };
            let mut checked = 0;
            let mut mismatches = 0;
            for (j, s) in strata::enumerate_strata(&d)?.iter().enumerate() {
                let mut index = None;
                for attempt in 0..3 {
                    match strata::hessian_index_oracle(s, &d, rng::derive_seed(seed, "hessian", (j * 3 + attempt) as u64)) {
                        Ok(v) => {
                            index = Some(v);
                            break;
                        }
                        Err(FrameError::AmbiguousEigenvalue { .. }) => continue,
                        Err(e) => return Err(e),
                    }
                }
                checked += 1;
                if index != Some(s.codim_complex) {
                    mismatches += 1;
                }
            }
            Ok((checked, mismatches))
        })
        .collect::<Result<_>>()?;
    let checked: usize = results.iter().map(|r| r.0).sum();
    let mismatches: usize = results.iter().map(|r| r.1).sum();

    let mut two_block_cases = 0;
    let mut two_block_failures = 0;
    for n in 1..=8usize {
        for k in 0..=n {
            for m in 0..=n {
                for cap in 0..=m.min(k) {
                    if k - cap > n - m {
                        continue;
                    }
                    two_block_cases += 1;
                    let formula = cap * (n + cap - k - m);
                    if strata::stratum_codim(&[m, n - m], &[cap, k - cap])? != formula
                        || strata::stratum_codim(&[n - m, m], &[k - cap, cap])? != (k - cap) * (m - cap)
                    {
                        two_block_failures += 1;
                    }
                }
            }
        }
    }
    Ok((
        mismatches == 0 && two_block_failures == 0,
        format!(
            "{checked} descriptors, {mismatches} Hessian mismatches; two-block formula {two_block_failures} failures in {two_block_cases} cases"
        ),
    ))
}

fn retraction(seed: u64) -> Verdict {
    let d = polytope::uniform_d(5, 2)?;
    let cfg = FlowConfig::default();
    let runs: Vec<(bool, bool, usize)> = (0..100u64)
        .into_par_iter()
        .map(|i| {
            let p0 = hermitian::random_projection(5, 2, rng::derive_seed(seed, "acceptance-retraction", i));
            let (_, trace) = flow::retract_to_level(&p0, &d, &cfg)?;
            let converged = trace.outcome == FlowOutcome::Converged && trace.final_f() <= 1e-12;
            Ok((converged, trace.is_monotone(), trace.iterates.len() - 1))
        })
        .collect::<Result<_>>()?;
    let converged = runs.iter().filter(|r| r.0).count();
    let monotone = runs.iter().all(|r| r.1);
    let max_iter = runs.iter().map(|r| r.2).max().unwrap_or(0);

    // finite differences of f along retracted tangent directions
    let eps = 1e-6;
    let mut worst_fd = 0.0_f64;
    for i in 0..100u64 {
        let mut rng = rng::stream(seed, "acceptance-fd", i);
        let n = rng.random_range(2..=6);
        let k = rng.random_range(1..n);
        let d = polytope::sample_polytope(n, k, &mut rng)?;
        let p = hermitian::random_projection(n, k, rng.random());
        let t = flow::project_to_tangent(&p, &rng::hermitian_direction(n, &mut rng));
        let t = t.unscale(flow::tangent_norm(&t));
        let x = flow::riemannian_grad_energy(&p, &d)?;
        let predicted = (&x * &t).trace().re;
        let moved = flow::retract(&(p.matrix() + &t * c(eps)), k, i)?;
        let fd = (flow::energy(&moved, &d)? - flow::energy(&p, &d)?) / eps;
        worst_fd = worst_fd.max((fd - predicted).abs());
    }
    Ok((
        converged >= 99 && monotone && worst_fd <= 1e-4,
        format!(
            "{converged}/100 converged (max {max_iter} iterations), monotone {monotone}, finite-difference gap {worst_fd:.2e}"
        ),
    ))
}

fn point_fiber(seed: u64) -> Verdict {
    let r = homotopy::verify_point_fiber(seed)?;
    Ok((
        r.passed,
        format!(
            "{}/{} converged, max distance {:.2e}; {} frames, right block {:.2e}, unitarity {:.2e}",
            r.converged, r.retractions, r.max_converged_distance, r.frames, r.max_right_block, r.max_unitarity_residual
        ),
    ))
}

fn simply_connected(seed: u64) -> Verdict {
    let cfg = HomotopyConfig::default();
    let mut ok = true;
    let mut parts = Vec::new();
    for (n, k) in [(4usize, 2usize), (5, 2)] {
        let d = polytope::uniform_d(n, k)?;
        let label = (n as u64) << 32;
        let loops: Vec<bool> = (0..20u64)
            .map(|i| {
                let s = rng::derive_seed(seed, "acceptance-loop", label | i);
                let path = homotopy::random_level_loop(&d, 0.2, cfg.samples, s, &cfg.flow)?;
                Ok(homotopy::contract_loop(&path, &d, &cfg)?.success)
            })
            .collect::<Result<_>>()?;
        let connects: Vec<bool> = (0..20u64)
            .map(|i| {
                let s = rng::derive_seed(seed, "acceptance-connect", label | i);
                let f0 = homotopy::random_level_frame(&d, s, &cfg.flow)?;
                let f1 = homotopy::random_level_frame(&d, s ^ 0x5555, &cfg.flow)?;
                match homotopy::connect_frames(&f0, &f1, &d, &cfg, s) {
                    Ok(r) => Ok(r.success && r.frames[0] == f0 && *r.frames.last().expect("frames") == f1),
                    Err(FrameError::RetractionHitCriticalStratum { .. } | FrameError::CutLocus { .. }) => Ok(false),
                    Err(e) => Err(e),
                }
            })
            .collect::<Result<_>>()?;
        let contracted = loops.iter().filter(|&&b| b).count();
        let connected = connects.iter().filter(|&&b| b).count();
        ok &= contracted >= 19 && connected >= 19;
        parts.push(format!("({n},{k}): {contracted}/20 loops contracted, {connected}/20 pairs connected"));
    }
    Ok((ok, parts.join("; ")))
}

fn winding() -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for (w, expected) in [(1, 1), (0, 0), (2, 2)] {
        let got = homotopy::winding_cp1(&homotopy::cp1_loop(w, 64))?.components;
        ok &= got == [expected];
        parts.push(format!("cp1 {got:?}"));
    }
    for ((w2, w3), expected) in [((1, 0), [1, 0]), ((1, 1), [1, 1]), ((0, 0), [0, 0])] {
        let samples = homotopy::torus_loop(w2, w3, 64);
        // torus_invariant checks |v_i| = 1/sqrt 3 at every sample
        let got = homotopy::torus_invariant(&samples)?.components;
        ok &= got == expected;
        parts.push(format!("torus {got:?}"));
    }
    let d = polytope::uniform_d(2, 1)?;
    let mut samples: Vec<ProjectionMatrix> = homotopy::cp1_loop(1, 32)
        .iter()
        .map(hermitian::gram_projection)
        .collect::<Result<_>>()?;
    samples.push(samples[0].clone());
    let report = homotopy::contract_loop(&ProjectionPath::on_level(samples, &d)?, &d, &HomotopyConfig::default())?;
    ok &= !report.success;
    parts.push(format!("circle generator contracted: {}", report.success));
    Ok((ok, parts.join(", ")))
}

fn covariance(seed: u64) -> Verdict {
    let mut worst_mu = 0.0_f64;
    let mut worst_h = 0.0_f64;
    for i in 0..1000u64 {
        let mut rng = rng::stream(seed, "acceptance-covariance", i);
        let n = rng.random_range(1..=8);
        let k = rng.random_range(0..=n);
        let p = hermitian::random_projection(n, k, rng.random());
        let mut sigma: Vec<usize> = (0..n).collect();
        sigma.shuffle(&mut rng);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let moved = flow::conjugate_by_permutation(&p, &sigma)?;
        let mu = flow::moment_map(&p)?;
        let mu_moved = flow::moment_map(&moved)?;
        let inverse = flow::invert_permutation(&sigma);
        for (m, &s) in inverse.iter().enumerate() {
            worst_mu = worst_mu.max((mu_moved[m] - mu[s]).abs());
        }
        let a_sigma: Vec<f64> = sigma.iter().map(|&s| a[s]).collect();
        worst_h = worst_h.max((flow::height(&p, &a_sigma)? - flow::height(&moved, &a)?).abs());
    }
    Ok((
        worst_mu <= 1e-12 && worst_h <= 1e-12,
        format!("1000 samples, moment map gap {worst_mu:.2e}, height gap {worst_h:.2e}"),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn filters() {
        assert!(selected(3, "strata-negative", &[]));
        assert!(selected(3, "strata-negative", &["strata".into()]));
        assert!(selected(5, "strata-codim", &["5".into()]));
        assert!(!selected(6, "retraction", &["strata".into(), "1".into()]));
        let picked: Vec<u8> = CRITERIA
            .iter()
            .filter(|(id, name)| selected(*id, name, &["strata".into()]))
            .map(|c| c.0)
            .collect();
        assert_eq!(picked, vec![3, 4, 5]);
    }

    #[test]
    fn cheap_criteria_pass() {
        for id in [3, 9] {
            let r = run_criterion(id, DEFAULT_SEED);
            assert!(r.passed, "{}", r.line());
        }
    }

    #[test]
    fn unknown_criterion_fails() {
        assert!(!run_criterion(42, 0).passed);
    }
}
