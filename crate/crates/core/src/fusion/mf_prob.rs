//! Masked rank-1 factorisation of the probability profile, `M ⊙ P ≈ M ⊙ (u vᵀ)`,
//! with `u` on the simplex and `v ≥ 0`, solved by alternating least squares.

use serde::{Deserialize, Serialize};

use crate::error::{Result, UhcError};
use crate::label_model::{Diagnostics, FusedLabel, FusionKind, PredictionProfile, SolverWarning, StopReason};

/// Termination rule for the alternating solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ALSConfig {
    pub rmse_tol: f64,
    pub max_iters: usize,
}

impl Default for ALSConfig {
    fn default() -> Self {
        Self { rmse_tol: 1e-3, max_iters: 3000 }
    }
}

impl ALSConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rmse_tol > 0.0 && self.max_iters > 0 {
            Ok(())
        } else {
            Err(UhcError::invalid("ALS tolerance and iteration cap must be positive"))
        }
    }
}

/// `‖M ⊙ (P − u vᵀ)‖_F²`.
pub fn mfp_objective(u: &[f64], v: &[f64], profile: &PredictionProfile) -> f64 {
    let mut total = 0.0;
    for (i, &vi) in v.iter().enumerate() {
        let col = profile.p().column(i);
        for &l in profile.members(i) {
            let r = col[l] - u[l] * vi;
            total += r * r;
        }
    }
    total
}

/// Result of running the alternating sweeps, with per-sweep objectives.
#[derive(Debug, Clone)]
pub struct AlsRun {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub sweeps: usize,
    pub stop: StopReason,
    /// Objective after each completed sweep.
    pub objective_trace: Vec<f64>,
    pub zero_denominators: usize,
    pub projections_applied: usize,
}

pub(crate) fn rmse_change(old_u: &[f64], new_u: &[f64], old_v: &[f64], new_v: &[f64]) -> f64 {
    let sq: f64 = old_u
        .iter()
        .zip(new_u)
        .chain(old_v.iter().zip(new_v))
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    (sq / (old_u.len() + old_v.len()) as f64).sqrt()
}

/// Alternating sweeps from `v = 1`: closed-form `u`, non-negativity
/// projection, renormalise `u` to unit sum, then closed-form `v` with
/// projection. Stops when the RMSE between successive `(u, v)` drops below
/// the tolerance or the sweep cap is reached.
pub fn mf_prob_als(profile: &PredictionProfile, config: &ALSConfig) -> AlsRun {
    mf_prob_als_from(profile, config, &vec![1.0; profile.num_classifiers()])
}

/// [`mf_prob_als`] from a caller-chosen starting `v`.
///
/// # Panics
/// If `v0` does not have one entry per classifier.
pub fn mf_prob_als_from(profile: &PredictionProfile, config: &ALSConfig, v0: &[f64]) -> AlsRun {
    let l_count = profile.num_classes();
    assert_eq!(v0.len(), profile.num_classifiers(), "one starting scale per classifier");
    let p = profile.p();
    let m = profile.mask();
    let mut u = vec![1.0 / l_count as f64; l_count];
    let mut v = v0.to_vec();
    let mut zero_denominators = 0;
    let mut projections_applied = 0;
    let mut trace = Vec::new();
    let mut stop = StopReason::MaxIterations;
    let mut sweeps = 0;

    while sweeps < config.max_iters {
        sweeps += 1;
        let old_u = u.clone();
        let old_v = v.clone();

        for (j, uj) in u.iter_mut().enumerate() {
            let (mut num, mut den) = (0.0, 0.0);
            for (i, &vi) in v.iter().enumerate() {
                let mji = m.get(j, i);
                num += mji * p.get(j, i) * vi;
                den += mji * vi * vi;
            }
            if den > 0.0 {
                let raw = num / den;
                if raw < 0.0 {
                    projections_applied += 1;
                }
                *uj = raw.max(0.0);
            } else {
                zero_denominators += 1;
            }
        }
        let total: f64 = u.iter().sum();
        if !(total > 0.0) {
            return AlsRun {
                u: vec![1.0 / l_count as f64; l_count],
                v,
                sweeps,
                stop: StopReason::Degenerate,
                objective_trace: trace,
                zero_denominators,
                projections_applied,
            };
        }
        u.iter_mut().for_each(|x| *x /= total);

        for (i, vi) in v.iter_mut().enumerate() {
            let col = p.column(i);
            let (mut num, mut den) = (0.0, 0.0);
            for &l in profile.members(i) {
                num += col[l] * u[l];
                den += u[l] * u[l];
            }
            if den > 0.0 {
                let raw = num / den;
                if raw < 0.0 {
                    projections_applied += 1;
                }
                *vi = raw.max(0.0);
            } else {
                zero_denominators += 1;
            }
        }

        trace.push(mfp_objective(&u, &v, profile));
        if rmse_change(&old_u, &u, &old_v, &v) < config.rmse_tol {
            stop = StopReason::Converged;
            break;
        }
    }
    AlsRun { u, v, sweeps, stop, objective_trace: trace, zero_denominators, projections_applied }
}

/// Probability-space factorisation fusion; `q` is the factor `u`.
pub fn fuse_mf_prob(profile: &PredictionProfile, config: &ALSConfig) -> Result<FusedLabel> {
    config.validate()?;
    let run = mf_prob_als(profile, config);
    let mut warnings = Vec::new();
    if run.stop == StopReason::Degenerate {
        warnings.push(SolverWarning::DegenerateFactor);
    }
    let objective = *run.objective_trace.last().unwrap_or(&f64::NAN);
    Ok(FusedLabel {
        method: FusionKind::MfProb,
        diagnostics: Diagnostics {
            iterations: run.sweeps,
            final_objective: objective,
            converged: run.stop.is_converged(),
            stop_reason: run.stop,
            grad_norm: None,
            zero_denominators: run.zero_denominators,
            projections_applied: run.projections_applied,
            warnings,
        },
        q: run.u,
    })
}
