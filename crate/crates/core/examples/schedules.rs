//! Discrete transition schedules and their one-step posteriors.

use scenediff::graph_diffusion::{build_schedule, model_posterior, true_posterior, KernelKind, DEFAULT_LEAK};

fn main() -> scenediff::Result<()> {
    let (steps, k) = (10, 3);
    for kernel in [KernelKind::IndependentMask, KernelKind::Uniform] {
        let s = build_schedule(steps, k, kernel, DEFAULT_LEAK)?;
        println!("{kernel:?}: states 0..{k} real, {} empty, {} mask", s.empty_state(), s.mask_state());
        for t in [1, steps / 2, steps] {
            let col: Vec<String> = s.qbar(t).column(0).iter().map(|p| format!("{p:.3}")).collect();
            println!("  Q̄_{t:<2} column of state 0: [{}]", col.join(", "));
        }
    }

    let s = build_schedule(steps, k, KernelKind::IndependentMask, DEFAULT_LEAK)?;
    let mask = s.mask_state();
    println!("q(x_4 | x_5 = mask, x0 = 1) = {:.4?}", true_posterior(mask, 1, 5, &s)?);
    let prediction = [0.7, 0.2, 0.1, 0.0];
    println!("p(x_4 | x_5 = mask) = {:.4?}", model_posterior(mask, &prediction, 5, &s)?);
    let dump = s.dump();
    println!("terminal digest {}", dump.qbar_terminal_sha256);
    Ok(())
}
