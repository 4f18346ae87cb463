//! Sweep the distillation temperature and print the accuracy series as CSV.
//!
//!     cargo run --release --example sensitivity_sweep

use uhc::experiment::{run_sweep, ExperimentConfig, SensitivitySpec, SweepAxis};

fn main() -> uhc::Result<()> {
    let config = ExperimentConfig::from_toml_str(
        r#"
        trials = 2
        methods = ["sd", "ce-e", "mf-lf-e"]
        world.classes = 5
        world.transfer_size = 1000
        hcs.count = 3
        "#,
    )?;
    let report = run_sweep(&config, &SensitivitySpec::with_defaults(SweepAxis::Temperature))?;
    print!("{}", report.to_csv());
    Ok(())
}
