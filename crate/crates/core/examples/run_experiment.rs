//! A small end-to-end comparison of fusion methods against the supervised
//! reference, configured from TOML.
//!
//!     cargo run --release --example run_experiment

use uhc::experiment::{run_experiment, ExperimentConfig};

const CONFIG: &str = r#"
trials = 2
seed = 3
methods = ["sd", "sd-bs", "ce-e", "mf-p-e", "mf-lf-bs", "spv"]

[world]
classes = 6
transfer_size = 1500

[hcs]
count = 4
min_classes = 2
max_classes = 4
"#;

fn main() -> uhc::Result<()> {
    let config = ExperimentConfig::from_toml_str(CONFIG)?;
    let report = run_experiment(&config)?;
    print!("{}", report.table());
    let t = &report.trials[0];
    println!("trial 0 shared artifacts: {:?}", t.artifacts);
    for (family, d) in &t.diagnostics {
        println!("{family:<6} mean iterations {:>8.1}, converged {:.1}%", d.mean_iterations, 100.0 * d.converged_fraction);
    }
    Ok(())
}
