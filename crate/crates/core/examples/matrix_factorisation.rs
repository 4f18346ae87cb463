//! Watch the alternating least-squares solvers converge: the objective after
//! every sweep, and the fitted per-classifier scales `v`.
//!
//!     cargo run --example matrix_factorisation

use uhc::fusion::{mf_logit_als, mf_prob_als, ALSConfig};
use uhc::{build_profile, ClassSubset, ClassUniverse, HCPrediction};

fn main() -> uhc::Result<()> {
    let universe = ClassUniverse::new(["a", "b", "c", "d", "e"])?;
    let predictions = vec![
        HCPrediction::from_logits(ClassSubset::new(5, [0, 1, 2])?, vec![2.0, 0.5, -1.0])?,
        HCPrediction::from_logits(ClassSubset::new(5, [1, 2, 3, 4])?, vec![1.5, -0.5, 0.0, -2.0])?,
        HCPrediction::from_logits(ClassSubset::new(5, [0, 4])?, vec![3.0, -1.0])?,
    ];
    let profile = build_profile(&predictions, &universe, 3.0)?;

    let run = mf_prob_als(&profile, &ALSConfig::default());
    println!("probability space: {} sweeps, stop {:?}", run.sweeps, run.stop);
    for (k, f) in run.objective_trace.iter().enumerate().take(8) {
        println!("  sweep {:>2}  objective {f:.6e}", k + 1);
    }
    println!("  u = {:?}\n  v = {:?}", rounded(&run.u), rounded(&run.v));

    let (run, c) = mf_logit_als(&profile, 0.01, 1e-3, 3000);
    println!("logit space (free v, lambda 0.01): {} sweeps, stop {:?}", run.sweeps, run.stop);
    println!("  final objective {:.6e}", run.objective_trace.last().copied().unwrap_or(f64::NAN));
    println!("  u = {:?}\n  v = {:?}\n  c = {:?}", rounded(&run.u), rounded(&run.v), rounded(&c));
    Ok(())
}

fn rounded(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| (v * 1e4).round() / 1e4).collect()
}
