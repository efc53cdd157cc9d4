//! Compare a vanilla model against an adversarially trained one under the
//! same injection attack.
//!
//! Run with: `cargo run --release --example adversarial_training`

use grb::attack::{apply_attack, AttackContext};
use grb::eval::subset_accuracy;
use grb::models::{Arch, ModelSpec};
use grb::prep::{budget_preset, degree_split, Difficulty, Scenario, SplitConfig};
use grb::train::{adversarial_train, at_preset, train, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let raw = grb::synth::toy(7);
    let g = raw
        .with_features(grb::prep::standardize_arctan(raw.features())?)
        .unwrap();
    let split = degree_split(&g, &SplitConfig::default().with_seed(7))?;
    let spec = ModelSpec::new(Arch::Gcn).with_hidden(vec![32]);
    let cfg = TrainConfig {
        max_epochs: 200,
        ..TrainConfig::default()
    }
    .with_seed(4);

    let vanilla = train(&spec, &g, &split, &cfg)?;
    let at = at_preset("toy")?;
    let at_cfg = TrainConfig {
        max_epochs: 320,
        ..cfg.clone()
    };
    let hardened = adversarial_train(&spec, &g, &split, &at_cfg, &at)?;
    let surrogate = train(&spec, &g, &split, &cfg.clone().with_seed(1000))?;

    let targets = split.test_full();
    let masked = {
        let mut m = split.test_full();
        m.extend_from_slice(&split.val);
        g.with_labels_masked(&m)
    };
    let acc = |model: &grb::models::TrainedModel, graph: &grb::graph::GraphBundle| {
        subset_accuracy(&model.predict(graph).unwrap(), g.labels(), &targets).unwrap()
    };
    let clean_v = acc(&vanilla, &g);
    let clean_h = acc(&hardened, &g);
    println!("clean accuracy: vanilla {:.2}%, hardened {:.2}%", clean_v * 100.0, clean_h * 100.0);

    let preset = budget_preset("toy", Scenario::Injection)?;
    let budget = preset.budget(Difficulty::Full);
    let mut drops = (0.0, 0.0);
    let seeds = 5;
    for seed in 0..seeds {
        let ctx = AttackContext::new(&surrogate, &masked, &targets, budget.clone(), seed);
        let result = grb::attack::inject_fgsm(&ctx, 0.05, 100)?;
        let perturbed = apply_attack(&g, &result.payload)?;
        drops.0 += clean_v - acc(&vanilla, &perturbed);
        drops.1 += clean_h - acc(&hardened, &perturbed);
    }
    println!(
        "mean drop over {seeds} attack seeds: vanilla {:.2} points, hardened {:.2} points",
        drops.0 / seeds as f64 * 100.0,
        drops.1 / seeds as f64 * 100.0
    );
    Ok(())
}
