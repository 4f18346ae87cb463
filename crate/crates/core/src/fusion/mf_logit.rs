//! Rank-1 factorisation in logit space with a per-classifier shift:
//!
//! ```text
//! minimise ‖M ⊙ (Z − u vᵀ − 1 cᵀ)‖_F² + λ(‖u‖² + ‖v‖²)   s.t. v ≥ 0
//! ```
//!
//! Two variants: `v` free (alternating least squares over `u`, `v`, `c`) and
//! `v` fixed to ones (convex in `(u, c)`, solved by gradient descent without
//! regularisation).

use serde::{Deserialize, Serialize};

use crate::error::{Result, UhcError};
use crate::fusion::descent::{minimise, CESolverConfig};
use crate::fusion::mf_prob::{rmse_change, AlsRun};
use crate::label_model::{
    softmax_in_place, Diagnostics, FusedLabel, FusionKind, Matrix, PredictionProfile, SolverWarning, StopReason,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleVariant {
    FreeV,
    FixedV,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogitMFConfig {
    pub lambda: f64,
    pub rmse_tol: f64,
    pub max_iters: usize,
    pub variant: ScaleVariant,
    /// Gradient-descent schedule for the fixed-scale variant. Same step rule
    /// as the cross-entropy solver with a tighter objective-change stop.
    pub descent: CESolverConfig,
}

impl Default for LogitMFConfig {
    fn default() -> Self {
        Self {
            lambda: 0.01,
            rmse_tol: 1e-3,
            max_iters: 3000,
            variant: ScaleVariant::FreeV,
            descent: CESolverConfig { objective_tol: 1e-14, ..CESolverConfig::default() },
        }
    }
}

impl LogitMFConfig {
    pub fn fixed() -> Self {
        Self { variant: ScaleVariant::FixedV, ..Self::default() }
    }

    pub fn free(lambda: f64) -> Self {
        Self { lambda, variant: ScaleVariant::FreeV, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) {
            return Err(UhcError::invalid("lambda must be non-negative"));
        }
        if !(self.rmse_tol > 0.0) || self.max_iters == 0 {
            return Err(UhcError::invalid("ALS tolerance and iteration cap must be positive"));
        }
        self.descent.validate()
    }
}

/// Full objective with explicit shift `c`.
pub fn mfl_objective(u: &[f64], v: &[f64], c: &[f64], z: &Matrix, mask: &Matrix, lambda: f64) -> f64 {
    let mut total = 0.0;
    for i in 0..z.cols() {
        let (zc, mc) = (z.column(i), mask.column(i));
        for l in 0..z.rows() {
            if mc[l] != 0.0 {
                let r = zc[l] - u[l] * v[i] - c[i];
                total += r * r;
            }
        }
    }
    total + lambda * (sq_norm(u) + sq_norm(v))
}

fn sq_norm(x: &[f64]) -> f64 {
    x.iter().map(|a| a * a).sum()
}

/// Shift minimising the objective for fixed `u` and `v`: the masked column
/// mean of `Z − u vᵀ`.
pub fn optimal_shift(u: &[f64], v: &[f64], z: &Matrix, mask: &Matrix) -> Vec<f64> {
    (0..z.cols())
        .map(|i| {
            let (zc, mc) = (z.column(i), mask.column(i));
            let (mut sum, mut count) = (0.0, 0.0);
            for l in 0..z.rows() {
                sum += mc[l] * (zc[l] - u[l] * v[i]);
                count += mc[l];
            }
            if count > 0.0 {
                sum / count
            } else {
                0.0
            }
        })
        .collect()
}

/// Objective with the shift eliminated: each classifier contributes the
/// squared norm of its masked residual `z_i − u v_i` after removing its mean.
pub fn eliminate_c_objective(u: &[f64], v: &[f64], z: &Matrix, mask: &Matrix, lambda: f64) -> f64 {
    let mut total = 0.0;
    let mut residual = Vec::with_capacity(z.rows());
    for i in 0..z.cols() {
        residual.clear();
        let (zc, mc) = (z.column(i), mask.column(i));
        for l in 0..z.rows() {
            if mc[l] != 0.0 {
                residual.push(zc[l] - u[l] * v[i]);
            }
        }
        if residual.is_empty() {
            continue;
        }
        let mean = residual.iter().sum::<f64>() / residual.len() as f64;
        total += residual.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>();
    }
    total + lambda * (sq_norm(u) + sq_norm(v))
}

/// Alternating sweeps over `u`, `v` (projected to `v ≥ 0`) and `c`, starting
/// from `v = 1` and `c` at the masked column means of `Z`.
pub fn mf_logit_als(profile: &PredictionProfile, lambda: f64, rmse_tol: f64, max_iters: usize) -> (AlsRun, Vec<f64>) {
    let (l_count, n) = (profile.num_classes(), profile.num_classifiers());
    let z = profile.z();
    let m = profile.mask();
    let mut c = optimal_shift(&vec![0.0; l_count], &vec![0.0; n], z, m);
    let mut v = vec![1.0; n];
    let mut u = vec![0.0; l_count];
    let mut zero_denominators = 0;
    let mut projections_applied = 0;
    let mut trace = Vec::new();
    let mut stop = StopReason::MaxIterations;
    let mut sweeps = 0;

    while sweeps < max_iters {
        sweeps += 1;
        let old_u = u.clone();
        let old_v = v.clone();

        for (j, uj) in u.iter_mut().enumerate() {
            let (mut num, mut den) = (0.0, lambda);
            for i in 0..n {
                let mji = m.get(j, i);
                num += mji * (z.get(j, i) - c[i]) * v[i];
                den += mji * v[i] * v[i];
            }
            if den > 0.0 {
                *uj = num / den;
            } else {
                zero_denominators += 1;
            }
        }
        for (i, vi) in v.iter_mut().enumerate() {
            let (zc, mc) = (z.column(i), m.column(i));
            let (mut num, mut den) = (0.0, lambda);
            for l in 0..l_count {
                num += mc[l] * (zc[l] - c[i]) * u[l];
                den += mc[l] * u[l] * u[l];
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
        c = optimal_shift(&u, &v, z, m);

        trace.push(mfl_objective(&u, &v, &c, z, m, lambda));
        if rmse_change(&old_u, &u, &old_v, &v) < rmse_tol {
            stop = StopReason::Converged;
            break;
        }
    }
    let run = AlsRun { u, v, sweeps, stop, objective_trace: trace, zero_denominators, projections_applied };
    (run, c)
}

/// Unregularised fixed-scale objective `‖M ⊙ (Z − u 1ᵀ − 1 cᵀ)‖²` over the
/// stacked variable `x = [u; c]`, with its gradient.
pub fn fixed_v_objective_and_gradient(x: &[f64], profile: &PredictionProfile, grad: &mut [f64]) -> f64 {
    let l_count = profile.num_classes();
    let (u, c) = x.split_at(l_count);
    let (gu, gc) = grad.split_at_mut(l_count);
    gu.iter_mut().for_each(|g| *g = 0.0);
    gc.iter_mut().for_each(|g| *g = 0.0);
    let z = profile.z();
    let mut total = 0.0;
    for (i, &ci) in c.iter().enumerate() {
        let zc = z.column(i);
        for &l in profile.members(i) {
            let r = zc[l] - u[l] - ci;
            total += r * r;
            gu[l] -= 2.0 * r;
            gc[i] -= 2.0 * r;
        }
    }
    total
}

pub fn fixed_v_objective(u: &[f64], c: &[f64], profile: &PredictionProfile) -> f64 {
    let mut x = u.to_vec();
    x.extend_from_slice(c);
    let mut g = vec![0.0; x.len()];
    fixed_v_objective_and_gradient(&x, profile, &mut g)
}

fn centre(u: &mut [f64]) {
    let mean = u.iter().sum::<f64>() / u.len() as f64;
    u.iter_mut().for_each(|x| *x -= mean);
}

/// Logit-space factorisation fusion; `q = softmax(u)`.
pub fn fuse_mf_logit(profile: &PredictionProfile, config: &LogitMFConfig) -> Result<FusedLabel> {
    config.validate()?;
    let mut warnings = Vec::new();
    match config.variant {
        ScaleVariant::FreeV => {
            if config.lambda == 0.0 {
                warnings.push(SolverWarning::UnregularisedFreeScale);
            }
            let (run, _c) = mf_logit_als(profile, config.lambda, config.rmse_tol, config.max_iters);
            let mut q = run.u;
            softmax_in_place(&mut q);
            Ok(FusedLabel {
                q,
                method: FusionKind::MfLogitFree,
                diagnostics: Diagnostics {
                    iterations: run.sweeps,
                    final_objective: *run.objective_trace.last().unwrap_or(&f64::NAN),
                    converged: run.stop.is_converged(),
                    stop_reason: run.stop,
                    grad_norm: None,
                    zero_denominators: run.zero_denominators,
                    projections_applied: run.projections_applied,
                    warnings,
                },
            })
        }
        ScaleVariant::FixedV => {
            let l_count = profile.num_classes();
            let n = profile.num_classifiers();
            let mut x0 = vec![0.0; l_count];
            x0.extend(optimal_shift(&vec![0.0; l_count], &vec![0.0; n], profile.z(), profile.mask()));
            let out = minimise(x0, &config.descent, |x, g| fixed_v_objective_and_gradient(x, profile, g));
            let mut u = out.x;
            u.truncate(l_count);
            centre(&mut u);
            softmax_in_place(&mut u);
            if !profile.overlap_connected() {
                warnings.push(SolverWarning::DisconnectedOverlap);
            }
            Ok(FusedLabel {
                q: u,
                method: FusionKind::MfLogitFixed,
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
    }
}
