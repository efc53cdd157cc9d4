//! Run every injection attack against a surrogate and transfer the
//! perturbed graphs to an independently trained defense.
//!
//! Run with: `cargo run --release --example injection_attack`

use grb::attack::{apply_attack, check_budget, AttackContext};
use grb::eval::{run_attack, subset_accuracy, AttackKind};
use grb::models::{Arch, ModelSpec};
use grb::prep::{budget_preset, degree_split, Difficulty, Scenario, SplitConfig};
use grb::train::{train, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let raw = grb::synth::toy(7);
    let g = raw
        .with_features(grb::prep::standardize_arctan(raw.features())?)
        .unwrap();
    let split = degree_split(&g, &SplitConfig::default().with_seed(7))?;
    let cfg = TrainConfig {
        max_epochs: 200,
        ..TrainConfig::default()
    };
    let spec = ModelSpec::new(Arch::Gcn).with_hidden(vec![32]);
    let surrogate = train(&spec, &g, &split, &cfg.clone().with_seed(1))?;
    let defense = train(&spec.clone().with_layer_norm(), &g, &split, &cfg.clone().with_seed(2))?;

    let targets = split.test_full();
    // the attacker sees the graph with test and validation labels withheld
    let masked = {
        let mut m = split.test_full();
        m.extend_from_slice(&split.val);
        g.with_labels_masked(&m)
    };
    let clean = subset_accuracy(&defense.predict(&g)?, g.labels(), &targets)?;
    println!("defense clean accuracy on test-F: {:.2}%\n", clean * 100.0);

    let preset = budget_preset("toy", Scenario::Injection)?;
    let budget = preset.budget(Difficulty::Full);
    let attacks = [
        ("rnd", AttackKind::InjectRnd),
        ("fgsm", AttackKind::InjectFgsm { step: 0.05, iters: 80 }),
        ("pgd", AttackKind::InjectPgd { step: 0.05, iters: 80 }),
        ("speit", AttackKind::InjectSpeit { step: 0.05, iters: 80 }),
        (
            "tdgia",
            AttackKind::InjectTdgia { step: 0.05, iters: 80, batch: 3, lambda: 0.5 },
        ),
    ];
    for (name, kind) in attacks {
        let ctx = AttackContext::new(&surrogate, &masked, &targets, budget.clone(), 11);
        let result = run_attack(&kind, &ctx)?;
        let report = check_budget(&g, &result, &budget);
        assert!(report.passes(), "{name} violated its budget: {:?}", report.violations);
        let perturbed = apply_attack(&g, &result.payload)?;
        let acc = subset_accuracy(&defense.predict(&perturbed)?, g.labels(), &targets)?;
        println!(
            "{name:>6}: defense accuracy {:.2}% (drop {:+.2}), budget ok, surrogate agreement {:.3}",
            acc * 100.0,
            (clean - acc) * 100.0,
            result.surrogate_accuracy_after
        );
    }
    Ok(())
}
