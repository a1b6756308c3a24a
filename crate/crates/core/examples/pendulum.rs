//! Synthetic pendulum: kernel Koopman spectrum against exact DMD, and
//! single-frame summaries of the second eigenfunction.
//!
//! `cargo run --release --example pendulum -- [epsilon]`

use kto_core::kernels::median_pairwise_distance;
use kto_core::summarize::{summarize_all, OptimizeConfig, StartPolicy};
use kto_core::synth::horizontal_centroid;
use kto_core::{exact_dmd, fit, render_pendulum, KernelSpec, OperatorKind, PairedDataset, PendulumConfig};

fn main() -> kto_core::Result<()> {
    let epsilon: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0.1);

    let cfg = PendulumConfig::default();
    let frames = render_pendulum(&cfg)?;
    let pairs = PairedDataset::from_trajectory(&frames, 1)?;
    let sigma = median_pairwise_distance(pairs.x(), 500);
    println!("sigma {sigma:.1}");

    let dec = fit(&pairs, KernelSpec::gaussian(sigma)?, epsilon, OperatorKind::Koopman, Some(8))?;
    for (i, l) in dec.eigenvalues().iter().enumerate() {
        println!("kernel lambda_{} = {:.5} {:+.5}i", i + 1, l.re, l.im);
    }
    let dmd = exact_dmd(&pairs, None, 1e-10)?;
    for (i, l) in dmd.eigenvalues.iter().take(8).enumerate() {
        println!("dmd    lambda_{} = {:.5} {:+.5}i", i + 1, l.re, l.im);
    }

    let bounds = OptimizeConfig::with_bounds(Some((0.0, 255.0)));
    let centre = (cfg.width - 1) as f64 / 2.0;
    for s in &summarize_all(&dec, &[2], StartPolicy::BestObserved, &bounds)? {
        for r in [&s.min, &s.max] {
            let cx = horizontal_centroid(&r.x_star, cfg.width) - centre;
            println!(
                "{:?}: phi_2 = {:.4} after {} steps, blob displacement {cx:+.2} px",
                r.direction, r.value, r.iterations
            );
        }
    }
    Ok(())
}
