//! Brute-force references for small instances.
//!
//! Nothing here calls into the solver code: objectives are re-derived from
//! the raw profile matrices with plain loops so that agreement between the
//! two paths is evidence rather than tautology.

use crate::error::{Result, UhcError};
use crate::label_model::{Matrix, PredictionProfile};

/// Simplex grid resolution and zoom schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    /// Points per simplex edge on the coarse pass.
    pub resolution: usize,
    /// Each round searches a window of one previous cell at 10x finer spacing.
    pub refinement_rounds: usize,
}

impl GridSpec {
    /// 200 per edge up to three classes, 60 for four.
    pub fn for_classes(classes: usize) -> Self {
        let resolution = if classes <= 3 { 200 } else { 60 };
        Self { resolution, refinement_rounds: 2 }
    }

    /// Spacing of the finest grid searched.
    pub fn final_spacing(&self) -> f64 {
        1.0 / self.resolution as f64 / 10f64.powi(self.refinement_rounds as i32)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridMinimum {
    pub q: Vec<f64>,
    pub objective: f64,
    /// Spacing of the finest grid that produced `q`.
    pub spacing: f64,
}

const MAX_GRID_CLASSES: usize = 4;

/// Generalised cross-entropy evaluated directly on `q`.
pub fn oracle_ce_objective(q: &[f64], profile: &PredictionProfile) -> f64 {
    let p = profile.p();
    let m = profile.mask();
    let mut total = 0.0;
    for i in 0..m.cols() {
        let mut group = 0.0;
        for l in 0..m.rows() {
            if m.get(l, i) > 0.5 {
                group += q[l];
            }
        }
        for l in 0..m.rows() {
            if m.get(l, i) > 0.5 && p.get(l, i) > 0.0 {
                let ratio = q[l] / group;
                if ratio <= 0.0 {
                    return f64::INFINITY;
                }
                total -= p.get(l, i) * ratio.ln();
            }
        }
    }
    total
}

/// Plain cross-entropy against zero-filled columns.
pub fn oracle_sd_objective(q: &[f64], profile: &PredictionProfile) -> f64 {
    let p = profile.p();
    let mut total = 0.0;
    for i in 0..p.cols() {
        for l in 0..p.rows() {
            let target = p.get(l, i);
            if target > 0.0 {
                if q[l] <= 0.0 {
                    return f64::INFINITY;
                }
                total -= target * q[l].ln();
            }
        }
    }
    total
}

fn enumerate_coarse(classes: usize, resolution: usize, visit: &mut dyn FnMut(&[f64])) {
    fn rec(prefix: &mut Vec<usize>, remaining: usize, slots: usize, res: usize, visit: &mut dyn FnMut(&[f64])) {
        if slots == 1 {
            prefix.push(remaining);
            let q: Vec<f64> = prefix.iter().map(|&k| k as f64 / res as f64).collect();
            visit(&q);
            prefix.pop();
            return;
        }
        for k in 0..=remaining {
            prefix.push(k);
            rec(prefix, remaining - k, slots - 1, res, visit);
            prefix.pop();
        }
    }
    rec(&mut Vec::with_capacity(classes), resolution, classes, resolution, visit);
}

fn enumerate_window(centre: &[f64], spacing: f64, half_width: i64, visit: &mut dyn FnMut(&[f64])) {
    let free = centre.len() - 1;
    let mut offsets = vec![-half_width; free];
    loop {
        let mut q = Vec::with_capacity(centre.len());
        let mut sum = 0.0;
        let mut feasible = true;
        for (k, &off) in offsets.iter().enumerate() {
            let x = centre[k] + off as f64 * spacing;
            if x < 0.0 {
                feasible = false;
            }
            sum += x;
            q.push(x);
        }
        let last = 1.0 - sum;
        if feasible && last >= -1e-15 {
            q.push(last.max(0.0));
            visit(&q);
        }
        // odometer increment
        let mut k = 0;
        loop {
            if k == free {
                return;
            }
            offsets[k] += 1;
            if offsets[k] <= half_width {
                break;
            }
            offsets[k] = -half_width;
            k += 1;
        }
    }
}

fn grid_minimise(
    classes: usize,
    grid: &GridSpec,
    objective: &dyn Fn(&[f64]) -> f64,
) -> Result<GridMinimum> {
    if classes > MAX_GRID_CLASSES {
        return Err(UhcError::UnsupportedSize(format!(
            "grid oracle supports at most {MAX_GRID_CLASSES} classes, got {classes}"
        )));
    }
    if grid.resolution < 2 {
        return Err(UhcError::invalid("grid resolution must be at least 2"));
    }
    let mut best_q = vec![1.0 / classes as f64; classes];
    let mut best = objective(&best_q);
    if classes == 1 {
        return Ok(GridMinimum { q: best_q, objective: best, spacing: 0.0 });
    }
    enumerate_coarse(classes, grid.resolution, &mut |q| {
        let f = objective(q);
        if f < best {
            best = f;
            best_q = q.to_vec();
        }
    });
    let mut spacing = 1.0 / grid.resolution as f64;
    for _ in 0..grid.refinement_rounds {
        spacing /= 10.0;
        let centre = best_q.clone();
        enumerate_window(&centre, spacing, 10, &mut |q| {
            let f = objective(q);
            if f < best {
                best = f;
                best_q = q.to_vec();
            }
        });
    }
    Ok(GridMinimum { q: best_q, objective: best, spacing })
}

/// Grid minimiser of the generalised cross-entropy over the simplex.
pub fn grid_min_ce(profile: &PredictionProfile, grid: &GridSpec) -> Result<GridMinimum> {
    grid_minimise(profile.num_classes(), grid, &|q| oracle_ce_objective(q, profile))
}

/// Grid minimiser of the zero-filled cross-entropy over the simplex.
pub fn grid_min_sd(profile: &PredictionProfile, grid: &GridSpec) -> Result<GridMinimum> {
    grid_minimise(profile.num_classes(), grid, &|q| oracle_sd_objective(q, profile))
}

/// Naive re-evaluation of `‖M ⊙ (Z − u vᵀ − 1 cᵀ)‖² + λ(‖u‖² + ‖v‖²)`.
///
/// With `c = 0` and `λ = 0` this is also the probability-space objective.
pub fn exhaustive_mf_check(u: &[f64], v: &[f64], c: &[f64], z: &Matrix, mask: &Matrix, lambda: f64) -> Result<f64> {
    if z.rows() > 10 || z.cols() > 10 {
        return Err(UhcError::UnsupportedSize("exhaustive check limited to 10x10".into()));
    }
    let mut residual = 0.0;
    for l in 0..z.rows() {
        for i in 0..z.cols() {
            let fitted = u[l] * v[i];
            let diff = mask.get(l, i) * (z.get(l, i) - fitted - c[i]);
            residual += diff * diff;
        }
    }
    let mut reg = 0.0;
    for x in u.iter().chain(v) {
        reg += x * x;
    }
    Ok(residual + lambda * reg)
}
