//! Safeguarded fixed-step gradient descent shared by the convex fusion solvers.

use serde::{Deserialize, Serialize};

use crate::error::{Result, UhcError};
use crate::label_model::StopReason;

/// Step-size schedule and stopping rule for gradient-descent fusion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CESolverConfig {
    pub step_size: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub objective_tol: f64,
}

impl Default for CESolverConfig {
    fn default() -> Self {
        Self { step_size: 0.1, max_iters: 3000, grad_tol: 1e-7, objective_tol: 1e-10 }
    }
}

impl CESolverConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.step_size > 0.0 && self.max_iters > 0 && self.grad_tol > 0.0 && self.objective_tol > 0.0;
        if ok {
            Ok(())
        } else {
            Err(UhcError::invalid("solver settings must all be positive"))
        }
    }
}

pub(crate) struct DescentOutcome {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    pub stop: StopReason,
}

const SUCCESSES_BEFORE_GROWTH: usize = 5;
const MIN_STEP: f64 = 1e-16;

fn inf_norm(g: &[f64]) -> f64 {
    g.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Minimise `eval` from `x0`. `eval(x, grad)` writes the gradient into `grad`
/// and returns the objective.
///
/// A step that increases the objective is rejected and the step halved; after
/// five accepted steps in a row the step doubles again, capped at the
/// configured size. Accepted iterates are therefore monotone.
pub(crate) fn minimise<F>(x0: Vec<f64>, config: &CESolverConfig, mut eval: F) -> DescentOutcome
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0;
    let mut grad = vec![0.0; n];
    let mut f = eval(&x, &mut grad);
    let mut trial = vec![0.0; n];
    let mut trial_grad = vec![0.0; n];
    let mut step = config.step_size;
    let mut streak = 0;
    let mut stop = StopReason::MaxIterations;
    let mut iterations = 0;

    while iterations < config.max_iters {
        if inf_norm(&grad) < config.grad_tol {
            stop = StopReason::GradientTolerance;
            break;
        }
        iterations += 1;
        for ((t, xi), gi) in trial.iter_mut().zip(&x).zip(&grad) {
            *t = xi - step * gi;
        }
        let f_trial = eval(&trial, &mut trial_grad);
        if !(f_trial <= f) {
            step *= 0.5;
            streak = 0;
            if step < MIN_STEP {
                stop = StopReason::StepTolerance;
                break;
            }
            continue;
        }
        let decrease = f - f_trial;
        std::mem::swap(&mut x, &mut trial);
        std::mem::swap(&mut grad, &mut trial_grad);
        f = f_trial;
        streak += 1;
        if streak >= SUCCESSES_BEFORE_GROWTH {
            step = (step * 2.0).min(config.step_size);
            streak = 0;
        }
        if inf_norm(&grad) < config.grad_tol {
            stop = StopReason::GradientTolerance;
            break;
        }
        if decrease < config.objective_tol {
            stop = StopReason::ObjectiveStall;
            break;
        }
    }
    DescentOutcome { grad_norm: inf_norm(&grad), x, objective: f, iterations, stop }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_converges() {
        let cfg = CESolverConfig::default();
        let out = minimise(vec![3.0, -2.0], &cfg, |x, g| {
            g[0] = 2.0 * (x[0] - 1.0);
            g[1] = 8.0 * (x[1] + 0.5);
            (x[0] - 1.0).powi(2) + 4.0 * (x[1] + 0.5).powi(2)
        });
        assert!((out.x[0] - 1.0).abs() < 1e-4);
        assert!((out.x[1] + 0.5).abs() < 1e-4);
        assert_ne!(out.stop, StopReason::MaxIterations);
    }

    #[test]
    fn oversized_step_is_halved() {
        let cfg = CESolverConfig { step_size: 1.0, ..Default::default() };
        // curvature 50: a unit step overshoots
        let out = minimise(vec![1.0], &cfg, |x, g| {
            g[0] = 50.0 * x[0];
            25.0 * x[0] * x[0]
        });
        assert!(out.x[0].abs() < 1e-4);
    }

    #[test]
    fn rejects_nonpositive_settings() {
        assert!(CESolverConfig { step_size: 0.0, ..Default::default() }.validate().is_err());
        assert!(CESolverConfig { max_iters: 0, ..Default::default() }.validate().is_err());
    }
}
