use alloc::collections::BTreeMap;
use alloc::vec::Vec;
#[allow(unused_imports)] // float methods are inherent once std is linked
use num_traits::Float;

use super::LocalizationError;
use crate::geometry::{orient, Point2};
use crate::ranging::TdoaSet;
use crate::AnchorId;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Converged once an accepted step is shorter than this, metres.
    pub step_tolerance_m: f64,
    /// Extra undamped steps after convergence, each kept only if it lowers
    /// the cost.
    pub polish_iterations: usize,
    pub initial_damping: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { max_iterations: 50, step_tolerance_m: 1e-3, polish_iterations: 8, initial_damping: 1e-3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Solution {
    pub position: Point2,
    pub iterations: usize,
    /// False when the iteration limit was hit first.
    pub converged: bool,
    pub rms_residual_cm: f64,
}

struct Problem {
    initiator: Point2,
    /// Responder position and range difference in metres.
    rows: Vec<(Point2, f64)>,
}

impl Problem {
    fn residuals(&self, x: Point2) -> impl Iterator<Item = f64> + '_ {
        let d0 = x.distance(self.initiator);
        self.rows.iter().map(move |&(a, rd)| rd - (x.distance(a) - d0))
    }

    fn cost(&self, x: Point2) -> f64 {
        self.residuals(x).map(|r| r * r).sum()
    }

    /// Normal equations `JᵀJ` and `Jᵀr` at `x`.
    fn normal(&self, x: Point2) -> ([f64; 3], [f64; 2]) {
        let unit = |a: Point2| {
            let d = x - a;
            let n = d.norm();
            if n > 1e-12 { d * (1.0 / n) } else { Point2::default() }
        };
        let u0 = unit(self.initiator);
        let d0 = x.distance(self.initiator);
        let (mut h, mut g) = ([0.0; 3], [0.0; 2]);
        for &(a, rd) in &self.rows {
            // r = rd - (|x-a| - |x-a0|), dr/dx = -(u_a - u_0)
            let ua = unit(a);
            let j = [u0.x - ua.x, u0.y - ua.y];
            let r = rd - (x.distance(a) - d0);
            h[0] += j[0] * j[0];
            h[1] += j[0] * j[1];
            h[2] += j[1] * j[1];
            g[0] += j[0] * r;
            g[1] += j[1] * r;
        }
        (h, g)
    }
}

/// Solves `(H + λ·diag(H)) δ = -g`.
fn damped_step(h: [f64; 3], g: [f64; 2], lambda: f64) -> Option<Point2> {
    let a = h[0] * (1.0 + lambda);
    let d = h[2] * (1.0 + lambda);
    let b = h[1];
    let det = a * d - b * b;
    if !(det.abs() > 1e-300) {
        return None;
    }
    let dx = -(d * g[0] - b * g[1]) / det;
    let dy = -(a * g[1] - b * g[0]) / det;
    Some(Point2::new(dx, dy)).filter(|s| s.is_finite())
}

/// Levenberg-Marquardt on the hyperbolic range-difference residuals.
pub fn solve_tdoa(
    set: &TdoaSet,
    anchors: &BTreeMap<AnchorId, Point2>,
    initial: Point2,
    config: &SolverConfig,
) -> Result<Solution, LocalizationError> {
    if set.measurements.len() < 3 {
        return Err(LocalizationError::UnderDetermined(set.measurements.len()));
    }
    let initiator = *anchors.get(&set.initiator_id).ok_or(LocalizationError::UnknownAnchor(set.initiator_id))?;
    let mut rows = Vec::with_capacity(set.measurements.len());
    for m in &set.measurements {
        let a = *anchors.get(&m.responder_id).ok_or(LocalizationError::UnknownAnchor(m.responder_id))?;
        if !m.range_diff.is_finite() {
            return Err(LocalizationError::NonFinite);
        }
        rows.push((a, m.range_diff / 100.0));
    }
    if !initial.is_finite() {
        return Err(LocalizationError::NonFinite);
    }
    let pts: Vec<Point2> = core::iter::once(initiator).chain(rows.iter().map(|r| r.0)).collect();
    if all_collinear(&pts) {
        return Err(LocalizationError::Collinear);
    }
    let problem = Problem { initiator, rows };

    let mut x = initial;
    let mut cost = problem.cost(x);
    let mut lambda = config.initial_damping;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iterations {
        iterations += 1;
        let (h, g) = problem.normal(x);
        let mut accepted = None;
        // Raise the damping until the step lowers the cost.
        for _ in 0..32 {
            let Some(step) = damped_step(h, g, lambda) else {
                lambda *= 10.0;
                continue;
            };
            let c = problem.cost(x + step);
            if c <= cost {
                accepted = Some((step, c));
                lambda = (lambda * 0.1).max(1e-12);
                break;
            }
            lambda *= 10.0;
        }
        let Some((step, c)) = accepted else {
            // No descent direction left: at a minimum up to rounding.
            converged = true;
            break;
        };
        x = x + step;
        cost = c;
        if step.norm() < config.step_tolerance_m {
            converged = true;
            break;
        }
    }
    if converged {
        for _ in 0..config.polish_iterations {
            let (h, g) = problem.normal(x);
            let Some(step) = damped_step(h, g, 0.0) else { break };
            let c = problem.cost(x + step);
            if !(c <= cost) {
                break;
            }
            x = x + step;
            cost = c;
            if step.norm() < 1e-12 {
                break;
            }
        }
    }
    let rms = (cost / problem.rows.len() as f64).sqrt() * 100.0;
    Ok(Solution { position: x, iterations, converged, rms_residual_cm: rms })
}

fn all_collinear(pts: &[Point2]) -> bool {
    let scale = pts.iter().map(|p| p.distance(pts[0])).fold(0.0, f64::max);
    if scale == 0.0 {
        return true;
    }
    let tol = 1e-9 * scale * scale;
    let far = pts.iter().copied().max_by(|a, b| a.distance(pts[0]).total_cmp(&b.distance(pts[0]))).unwrap();
    pts.iter().all(|&p| orient(pts[0], far, p).abs() <= tol)
}
