//! Verify the reverse-mode tape against finite differences for every
//! architecture, with and without layer norm.
//!
//! Run with: `cargo run --release --example gradient_check`

use grb::models::{Arch, ModelSpec};
use grb::train::feature_grad_check;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let g = grb::synth::two_cluster(8, 5, 0.5, 3);
    println!("finite-difference check on an 8-node graph, loss w.r.t. features\n");
    let mut worst = 0.0f64;
    for arch in Arch::ALL {
        for ln in [false, true] {
            let mut spec = ModelSpec::new(arch).with_hidden(vec![6]).with_dropout(0.0);
            if ln {
                spec = spec.with_layer_norm();
            }
            let err = feature_grad_check(&spec, &g, 11)?;
            worst = worst.max(err);
            println!(
                "{:>6}{}  max relative error {:.3e}",
                arch.name(),
                if ln { "+ln" } else { "   " },
                err
            );
        }
    }
    println!("\nworst case {worst:.3e} (threshold 1e-4)");
    assert!(worst < 1e-4);
    Ok(())
}
