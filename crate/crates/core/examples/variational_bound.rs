//! Monte Carlo variational bound of the graph prior for exact and uniform
//! denoisers.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use scenediff::datagen::toy_support;
use scenediff::graph_diffusion::{
    bound_terms, variational_bound, EmpiricalDenoiser, GraphSchedule, KernelKind, LossWeights, ScheduleOptions,
    UniformDenoiser,
};
use scenediff::scene::SceneConfig;

fn main() -> scenediff::Result<()> {
    let config = SceneConfig::desk_default();
    let bundle = toy_support(&config, 0)?;
    let spaces = config.spaces();
    let schedule = Arc::new(GraphSchedule::new(50, spaces, KernelKind::IndependentMask, ScheduleOptions::default())?);
    let exact = EmpiricalDenoiser::new(&bundle.graphs, Arc::clone(&schedule))?;
    let uniform = UniformDenoiser { spaces };
    let weights = LossWeights::default();

    let graph = &bundle.graphs[0];
    let terms = bound_terms(&exact, graph, None, &schedule, &mut ChaCha8Rng::seed_from_u64(1), 4)?;
    println!("exact denoiser terms [C, F, E]: {terms:.4?}");
    for (name, den) in [("exact", &exact as &dyn scenediff::graph_diffusion::GraphDenoiser), ("uniform", &uniform)] {
        let b = variational_bound(den, graph, None, &schedule, &weights, &mut ChaCha8Rng::seed_from_u64(1), 4)?;
        println!("{name:>8}: bound {b:.3} nats");
    }
    Ok(())
}
