//! Build a small world, train source classifiers on class subsets, fuse their
//! transfer-set predictions and train one classifier over all classes, by
//! soft labels, balanced soft labels and direct backpropagation.
//!
//!     cargo run --release --example train_unified

use uhc::bench::{generate_world, train_hcs, HCConfigSpec, WorldSpec};
use uhc::fusion::{fuse_ce, CESolverConfig};
use uhc::trainer::{compute_balance_weights, train_bp, train_soft, BpMethod, SoftmaxModel, TrainConfig};
use uhc::build_profile;

fn main() -> uhc::Result<()> {
    let world = generate_world(&WorldSpec { classes: 6, transfer_size: 2000, seed: 11, ..Default::default() })?;
    let hcs = train_hcs(&world, &HCConfigSpec { count: 4, seed: 11, ..Default::default() }, &TrainConfig::default())?;
    for (i, hc) in hcs.classifiers.iter().enumerate() {
        println!("hc {i}: classes {:?}, accuracy {:.3}", hc.subset.members(), hcs.accuracy(i, &world.test));
    }

    let profiles = world
        .transfer
        .iter()
        .map(|s| {
            let preds: Vec<_> = (0..hcs.classifiers.len()).map(|i| hcs.predict(i, s)).collect();
            build_profile(&preds, &world.universe, 3.0)
        })
        .collect::<uhc::Result<Vec<_>>>()?;
    let labels = profiles.iter().map(|p| fuse_ce(p, &CESolverConfig::default())).collect::<uhc::Result<Vec<_>>>()?;

    let features: Vec<Vec<f64>> = world.transfer.iter().map(|s| s.features.clone()).collect();
    let (test_x, test_y): (Vec<_>, Vec<_>) = world.test.iter().map(|s| (s.features.clone(), s.class)).unzip();
    let init = SoftmaxModel::random(6, world.spec.dim, 0.01, 1);
    let cfg = TrainConfig { seed: 1, ..Default::default() };

    let e = train_soft(&init, &features, &labels, &cfg, None)?;
    let weights = compute_balance_weights(&labels)?;
    let bs = train_soft(&init, &features, &labels, &cfg, Some(&weights))?;
    let bp = train_bp(&init, &features, &profiles, BpMethod::Ce, &cfg)?;
    println!("ce-e  accuracy {:.3}", e.model.accuracy(&test_x, &test_y));
    println!("ce-bs accuracy {:.3}", bs.model.accuracy(&test_x, &test_y));
    println!("ce-bp accuracy {:.3}", bp.model.accuracy(&test_x, &test_y));
    Ok(())
}
