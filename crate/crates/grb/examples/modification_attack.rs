//! Run the modification attacks (heuristic rewiring, the dense
//! adjacency-gradient attack, and structural-plus-feature PGD).
//!
//! Run with: `cargo run --release --example modification_attack`

use grb::attack::{apply_attack, check_budget, AttackContext};
use grb::eval::{run_attack, subset_accuracy, AttackKind};
use grb::models::{Arch, ModelSpec};
use grb::prep::{degree_split, AttackBudget, SplitConfig};
use grb::train::{train, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let raw = grb::synth::toy(3);
    let g = raw
        .with_features(grb::prep::standardize_arctan(raw.features())?)
        .unwrap();
    let split = degree_split(&g, &SplitConfig::default().with_seed(3))?;
    let cfg = TrainConfig {
        max_epochs: 200,
        ..TrainConfig::default()
    };
    let spec = ModelSpec::new(Arch::Gcn).with_hidden(vec![32]);
    let surrogate = train(&spec, &g, &split, &cfg.clone().with_seed(1))?;
    let defense = train(&spec, &g, &split, &cfg.clone().with_seed(9))?;

    let targets = split.test_full();
    let masked = {
        let mut m = split.test_full();
        m.extend_from_slice(&split.val);
        g.with_labels_masked(&m)
    };
    let clean = subset_accuracy(&defense.predict(&g)?, g.labels(), &targets)?;
    println!(
        "defense clean accuracy on test-F: {:.2}%  (|E| = {}, budget 8% of edges)\n",
        clean * 100.0,
        g.num_edges()
    );

    let budget = AttackBudget::modification(0.08, -1.0, 1.0);
    let attacks = [
        ("rnd-mod", AttackKind::ModifyRnd),
        ("dice", AttackKind::ModifyDice),
        ("flip", AttackKind::ModifyFlip),
        ("fga", AttackKind::ModifyFga { recompute_every: 10, dense_limit: 20_000 }),
        ("pgd-mod", AttackKind::ModifyPgd { step: 0.05, iters: 40 }),
    ];
    for (name, kind) in attacks {
        let ctx = AttackContext::new(&surrogate, &masked, &targets, budget.clone(), 5);
        let result = run_attack(&kind, &ctx)?;
        let report = check_budget(&g, &result, &budget);
        assert!(report.passes(), "{name} violated its budget: {:?}", report.violations);
        let perturbed = apply_attack(&g, &result.payload)?;
        let acc = subset_accuracy(&defense.predict(&perturbed)?, g.labels(), &targets)?;
        let edits = match &result.payload {
            grb::attack::AttackPayload::Modification { edits, .. } => edits.len(),
            _ => 0,
        };
        println!(
            "{name:>8}: {edits} edits, defense accuracy {:.2}% (drop {:+.2}){}",
            acc * 100.0,
            (clean - acc) * 100.0,
            if result.budget_exhausted { " [ran out of eligible edits]" } else { "" }
        );
    }
    Ok(())
}
