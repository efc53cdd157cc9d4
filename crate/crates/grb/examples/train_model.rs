//! Train a model from the zoo and report per-difficulty accuracy.
//!
//! Run with: `cargo run --release --example train_model [arch]`
//! where `arch` is one of gcn, sgc, tagcn, appnp, gin, sage (default gcn).

use grb::eval::subset_accuracy;
use grb::models::{Arch, ModelSpec};
use grb::prep::{degree_split, Difficulty, SplitConfig};
use grb::train::{train_with_log, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let arch = std::env::args()
        .nth(1)
        .and_then(|s| Arch::parse(&s))
        .unwrap_or(Arch::Gcn);
    let g = grb::synth::toy(7);
    let split = degree_split(&g, &SplitConfig::default().with_seed(7))?;

    let spec = ModelSpec::new(arch).with_hidden(vec![32, 32]).with_layer_norm();
    let cfg = TrainConfig {
        max_epochs: 300,
        ..TrainConfig::default()
    }
    .with_seed(1);
    let started = std::time::Instant::now();
    let (model, log) = train_with_log(&spec, &g, &split, &cfg, None)?;
    println!(
        "trained {} for {} epochs in {:.1}s (best val acc {:.3})",
        spec.id(),
        log.len(),
        started.elapsed().as_secs_f64(),
        log.iter().map(|e| e.val_acc).fold(0.0, f64::max),
    );

    let preds = model.predict(&g)?;
    for d in Difficulty::ALL {
        let mask = split.test_subset(d);
        let acc = subset_accuracy(&preds, g.labels(), &mask)?;
        println!("  test-{} accuracy: {:.2}%", d.letter(), acc * 100.0);
    }

    let path = std::env::temp_dir().join(format!("{}.grbm", spec.id()));
    grb::models::save_checkpoint(&model, &path)?;
    let reloaded = grb::models::load_checkpoint(&path)?;
    assert_eq!(reloaded.predict(&g)?, preds);
    println!("checkpoint round-trip verified at {}", path.display());
    Ok(())
}
