//! When every classifier's output is the restriction of one distribution,
//! cross-entropy and both scale-free factorisations recover it; SD does not.
//! The grid oracle confirms the cross-entropy optimum independently.
//!
//!     cargo run --example consistent_recovery

use uhc::fusion::{fuse_ce, fuse_mf_logit, fuse_mf_prob, fuse_sd, ALSConfig, CESolverConfig, LogitMFConfig};
use uhc::oracle::{grid_min_ce, GridSpec};
use uhc::{build_profile, restrict, ClassSubset, ClassUniverse, HCPrediction};

fn main() -> uhc::Result<()> {
    let truth = [0.4, 0.3, 0.2, 0.1];
    let universe = ClassUniverse::new(["a", "b", "c", "d"])?;
    let predictions = [vec![0, 1, 2], vec![1, 2, 3]]
        .into_iter()
        .map(|members| {
            let subset = ClassSubset::new(4, members)?;
            let p = restrict(&truth, &subset)?;
            HCPrediction::from_probs(subset, p)
        })
        .collect::<uhc::Result<Vec<_>>>()?;
    let profile = build_profile(&predictions, &universe, 1.0)?;

    let report = |name: &str, q: &[f64]| {
        let err = q.iter().zip(&truth).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        println!("{name:<8} {:?}  max error {err:.2e}", q.iter().map(|x| (x * 1e4).round() / 1e4).collect::<Vec<_>>());
    };
    report("sd", &fuse_sd(&profile).q);
    report("ce", &fuse_ce(&profile, &CESolverConfig::default())?.q);
    report("mf-p", &fuse_mf_prob(&profile, &ALSConfig::default())?.q);
    report("mf-lf", &fuse_mf_logit(&profile, &LogitMFConfig::fixed())?.q);
    report("oracle", &grid_min_ce(&profile, &GridSpec::for_classes(4))?.q);
    Ok(())
}
