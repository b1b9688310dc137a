//! Gaussian layout diffusion conditioned on a semantic graph.

use std::sync::Arc;

use scenediff::datagen::toy_support;
use scenediff::layout_diffusion::{
    build_gaussian_schedule, forward_sample_layout, reverse_sample_layout, simple_loss, ExactEpsDenoiser,
    ZeroEpsDenoiser,
};
use scenediff::rng::stream_rng;
use scenediff::scene::{derive_semantic_graph, LayoutMatrix, SceneConfig};

fn main() -> scenediff::Result<()> {
    let config = SceneConfig::desk_default();
    let bundle = toy_support(&config, 0)?;
    let schedule = Arc::new(build_gaussian_schedule(10)?);
    println!("alpha_bar: {:.4?}", schedule.alpha_bar);

    let dataset = bundle
        .scenes
        .iter()
        .map(|s| {
            let g = derive_semantic_graph(s, &bundle.codebook, &config)?;
            Ok((g, bundle.stats.standardize(&LayoutMatrix::from_scene(s))))
        })
        .collect::<scenediff::Result<Vec<_>>>()?;
    let denoiser = ExactEpsDenoiser::new(dataset.clone(), Arc::clone(&schedule))?;

    let mut rng = stream_rng(3, 0);
    let (noisy, _) = forward_sample_layout(&dataset[0].1, 5, &schedule, &mut rng)?;
    println!("noised first row at t = 5: {:.3?}", noisy.rows[0]);

    let graph = &dataset[0].0;
    for i in 0..3 {
        let layout = reverse_sample_layout(&denoiser, graph, &schedule, &bundle.stats, &mut stream_rng(3, i + 1), None)?;
        for (j, row) in layout.rows.iter().enumerate() {
            println!(
                "sample {i} {:>10}: at ({:.2}, {:.2}, {:.2}) facing {:.2} rad",
                config.category_name(graph.categories[j]),
                row[0],
                row[1],
                row[2],
                row[7].atan2(row[6])
            );
        }
    }

    let exact = simple_loss(&denoiser, &dataset, &schedule, 500, &mut stream_rng(3, 99))?;
    let zero = simple_loss(&ZeroEpsDenoiser, &dataset, &schedule, 500, &mut stream_rng(3, 99))?;
    println!("simple loss: exact {exact:.4}, zero predictor {zero:.4}");
    Ok(())
}
