//! Cross-entropy fusion over subset-normalised labels.
//!
//! With `q = softmax(u)` the generalised cross-entropy becomes
//!
//! ```text
//! J(u) = sum_i [ m_i * lse_{L_i}(u) - sum_{l in L_i} P_li u_l ],   m_i = sum_{l in L_i} P_li
//! ```
//!
//! a sum of log-sum-exps and linear terms, hence convex and invariant to
//! adding a constant to every `u_l`.

use crate::error::Result;
use crate::fusion::descent::{minimise, CESolverConfig};
use crate::label_model::{
    softmax_in_place, Diagnostics, FusedLabel, FusionKind, PredictionProfile, SolverWarning,
};

fn group_lse(u: &[f64], members: &[usize]) -> f64 {
    let max = members.iter().map(|&l| u[l]).fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = members.iter().map(|&l| (u[l] - max).exp()).sum();
    max + sum.ln()
}

pub fn ce_objective(u: &[f64], profile: &PredictionProfile) -> f64 {
    let mut total = 0.0;
    for i in 0..profile.num_classifiers() {
        let members = profile.members(i);
        let lse = group_lse(u, members);
        let col = profile.p().column(i);
        for &l in members {
            total -= col[l] * (u[l] - lse);
        }
    }
    total
}

/// Objective and gradient in one pass; the gradient is written into `grad`.
pub fn ce_objective_and_gradient(u: &[f64], profile: &PredictionProfile, grad: &mut [f64]) -> f64 {
    let mut scratch = vec![0.0; u.len()];
    objective_and_gradient(u, profile, grad, &mut scratch)
}

/// As [`ce_objective_and_gradient`], with caller-provided scratch of length
/// `u.len()` so each exponential is computed once.
fn objective_and_gradient(u: &[f64], profile: &PredictionProfile, grad: &mut [f64], scratch: &mut [f64]) -> f64 {
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut total = 0.0;
    for i in 0..profile.num_classifiers() {
        let members = profile.members(i);
        let col = profile.p().column(i);
        let max = members.iter().map(|&l| u[l]).fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        let mut mass = 0.0;
        for &l in members {
            let e = (u[l] - max).exp();
            scratch[l] = e;
            sum += e;
            mass += col[l];
        }
        let lse = max + sum.ln();
        let scale = mass / sum;
        for &l in members {
            grad[l] += scale * scratch[l] - col[l];
            total -= col[l] * (u[l] - lse);
        }
    }
    total
}

pub fn ce_gradient(u: &[f64], profile: &PredictionProfile) -> Vec<f64> {
    let mut grad = vec![0.0; u.len()];
    ce_objective_and_gradient(u, profile, &mut grad);
    grad
}

/// Minimise the convex cross-entropy objective by safeguarded gradient
/// descent from `u = 0` and return `q = softmax(u)`.
pub fn fuse_ce(profile: &PredictionProfile, config: &CESolverConfig) -> Result<FusedLabel> {
    config.validate()?;
    let l_count = profile.num_classes();
    let mut scratch = vec![0.0; l_count];
    let out = minimise(vec![0.0; l_count], config, |u, g| objective_and_gradient(u, profile, g, &mut scratch));
    let mut u = out.x;
    let mean = u.iter().sum::<f64>() / l_count as f64;
    u.iter_mut().for_each(|x| *x -= mean);
    softmax_in_place(&mut u);
    let mut warnings = Vec::new();
    if !profile.overlap_connected() {
        warnings.push(SolverWarning::DisconnectedOverlap);
    }
    Ok(FusedLabel {
        q: u,
        method: FusionKind::Ce,
        diagnostics: Diagnostics {
            iterations: out.iterations,
            final_objective: out.objective,
            converged: out.stop.is_converged(),
            stop_reason: out.stop,
            grad_norm: Some(out.grad_norm),
            zero_denominators: 0,
            projections_applied: 0,
            warnings,
        },
    })
}
