//! Zero-fill standard distillation baseline.

use crate::label_model::{Diagnostics, FusedLabel, FusionKind, PredictionProfile};

/// Average of the zero-filled probability columns.
///
/// This is the closed-form minimiser over the simplex of the summed
/// cross-entropy against every classifier when undefined classes are treated
/// as probability zero.
pub fn fuse_sd(profile: &PredictionProfile) -> FusedLabel {
    let (l_count, n) = (profile.num_classes(), profile.num_classifiers());
    let mut q = vec![0.0; l_count];
    for i in 0..n {
        for (qi, p) in q.iter_mut().zip(profile.p().column(i)) {
            *qi += p;
        }
    }
    let inv = 1.0 / n as f64;
    q.iter_mut().for_each(|x| *x *= inv);
    let objective = zero_fill_cross_entropy(&q, profile);
    FusedLabel { q, method: FusionKind::Sd, diagnostics: Diagnostics::closed_form(objective) }
}

/// Summed cross-entropy between zero-filled columns and `q`.
pub fn zero_fill_cross_entropy(q: &[f64], profile: &PredictionProfile) -> f64 {
    let mut total = 0.0;
    for i in 0..profile.num_classifiers() {
        for (&p, &qv) in profile.p().column(i).iter().zip(q) {
            if p > 0.0 {
                total -= p * qv.ln();
            }
        }
    }
    total
}
