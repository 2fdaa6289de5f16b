//! Print the learning-rate schedules of both training recipes, at paper
//! scale and desk scale.
//!
//! `cargo run -p wsnet --example lr_schedule`

use wsnet::training::{normal_recipe, pretrained_recipe};

fn main() {
    for (name, plan) in [
        ("normal", normal_recipe()),
        ("pretrained", pretrained_recipe()),
    ] {
        println!("== {name} recipe: {} iterations ==", plan.total_iterations());
        for p in &plan.phases {
            println!(
                "  phase: {} iters, trainable {:?}, {} warmup events",
                p.iterations,
                p.trainable,
                p.events.len()
            );
        }
        let total = plan.total_iterations();
        for i in (0..total).step_by(total / 24) {
            let lr = plan.lr_at(i);
            let bars = (lr / 3e-4 * 56.0) as usize;
            println!("  {i:>7}  {lr:.2e}  {}", "#".repeat(bars));
        }
    }

    let scaled = pretrained_recipe().scaled(0.01);
    println!(
        "scaled by 0.01: {} iterations, phase lengths {:?}",
        scaled.total_iterations(),
        scaled.phases.iter().map(|p| p.iterations).collect::<Vec<_>>()
    );
}
