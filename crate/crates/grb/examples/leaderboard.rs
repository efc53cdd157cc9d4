//! Run a small attack-by-defense matrix and render the leaderboard.
//!
//! Run with: `cargo run --release --example leaderboard`

use grb::eval::{emit_leaderboard, run_matrix, AttackKind, AttackSpec, Defense, EmitFormat, MatrixConfig};
use grb::models::{Arch, ModelSpec};
use grb::prep::{budget_preset, degree_split, Difficulty, Scenario, SplitConfig};
use grb::train::{adversarial_train, at_preset, train, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let g = grb::synth::toy(7);
    let split = degree_split(&g, &SplitConfig::default().with_seed(7))?;
    let cfg = TrainConfig {
        max_epochs: 200,
        ..TrainConfig::default()
    };

    let surrogate = train(&ModelSpec::new(Arch::Gcn).with_hidden(vec![32]), &g, &split, &cfg.clone().with_seed(100))?;
    let gcn = train(&ModelSpec::new(Arch::Gcn).with_hidden(vec![32]), &g, &split, &cfg.clone().with_seed(1))?;
    let gcn_ln = train(
        &ModelSpec::new(Arch::Gcn).with_hidden(vec![32]).with_layer_norm(),
        &g,
        &split,
        &cfg.clone().with_seed(2),
    )?;
    let at_cfg = TrainConfig { max_epochs: 300, ..cfg.clone() }.with_seed(3);
    let gcn_at = adversarial_train(
        &ModelSpec::new(Arch::Gcn).with_hidden(vec![32]),
        &g,
        &split,
        &at_cfg,
        &at_preset("toy")?,
    )?;
    let svd_base = train(&ModelSpec::new(Arch::Gcn).with_hidden(vec![32]), &g, &split, &cfg.clone().with_seed(4))?;

    let attacks = vec![
        AttackSpec { id: "rnd".into(), kind: AttackKind::InjectRnd },
        AttackSpec { id: "fgsm".into(), kind: AttackKind::InjectFgsm { step: 0.05, iters: 60 } },
        AttackSpec {
            id: "tdgia".into(),
            kind: AttackKind::InjectTdgia { step: 0.05, iters: 60, batch: 3, lambda: 0.5 },
        },
    ];
    let defenses = vec![
        Defense::plain("gcn", gcn),
        Defense::plain("gcn+ln", gcn_ln),
        Defense::plain("gcn+at", gcn_at),
        Defense::with_svd("gcn+svd", svd_base, 64),
    ];
    let preset = budget_preset("toy", Scenario::Injection)?;
    let lb = run_matrix(
        &g,
        &split,
        &surrogate,
        &attacks,
        &defenses,
        &|d: Difficulty| preset.budget(d),
        &MatrixConfig { repeats: 3, base_seed: 0, jobs: 0 },
    )?;
    println!("{}", emit_leaderboard(&lb, EmitFormat::Markdown)?);
    println!("defense ranking: {:?}", lb.defenses);
    println!("attack ranking:  {:?}", lb.attacks);
    Ok(())
}
