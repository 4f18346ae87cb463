//! Inject parameter noise into a source classifier until it reaches a target
//! accuracy on the adjustment set.
//!
//!     cargo run --release --example degrade_hc

use uhc::bench::{degrade_to_accuracy, generate_world, train_hcs, HCConfigSpec, HCMode, WorldSpec};
use uhc::trainer::TrainConfig;

fn main() -> uhc::Result<()> {
    let world = generate_world(&WorldSpec { classes: 5, separation: 2.0, seed: 4, ..Default::default() })?;
    let spec = HCConfigSpec { count: 1, mode: HCMode::CompletelyOverlapping, seed: 4, ..Default::default() };
    let hc = train_hcs(&world, &spec, &TrainConfig::default())?.classifiers.remove(0);
    let (x, y): (Vec<_>, Vec<_>) = world.adjustment.iter().map(|s| (s.features.clone(), s.class)).unzip();
    println!("initial accuracy {:.3}", hc.accuracy(&x, &y));
    for target in [0.9, 0.7, 0.5, 0.3] {
        let d = degrade_to_accuracy(&hc, target, &x, &y, 1)?;
        println!("target {target:.1}: accuracy {:.3} at noise scale {:.4}", d.accuracy, d.noise_scale);
    }
    Ok(())
}
