//! Fuse three classifiers with different class sets into one label over
//! the union, with every method.
//!
//!     cargo run --example fuse_predictions

use uhc::{build_profile, ClassSubset, ClassUniverse, Fusion, HCPrediction};

fn main() -> uhc::Result<()> {
    let universe = ClassUniverse::new(["bird", "cat", "dog", "fox"])?;
    let hc = |labels: &[&str], probs: Vec<f64>| -> uhc::Result<HCPrediction> {
        HCPrediction::from_probs(ClassSubset::from_labels(&universe, labels)?, probs)
    };
    let predictions = vec![
        hc(&["cat", "dog"], vec![0.7, 0.3])?,
        hc(&["dog", "fox"], vec![0.6, 0.4])?,
        hc(&["bird", "cat", "fox"], vec![0.1, 0.6, 0.3])?,
    ];
    let profile = build_profile(&predictions, &universe, 1.0)?;

    println!("{:<6} {}", "method", universe.labels().iter().map(|l| format!("{l:>7}")).collect::<String>());
    for name in ["sd", "ce", "mf-p", "mf-lv", "mf-lf"] {
        let fused = Fusion::from_name(name, 0.01)?.fuse(&profile)?;
        let row: String = fused.q.iter().map(|q| format!("{q:>7.3}")).collect();
        println!("{name:<6} {row}   ({} iterations, {:?})", fused.diagnostics.iterations, fused.diagnostics.stop_reason);
    }
    Ok(())
}
