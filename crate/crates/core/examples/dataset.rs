//! Procedural dataset bundles: generation, disk roundtrip and a rendered
//! scene.

use scenediff::datagen::{generate_dataset, DatagenOptions};
use scenediff::io::{load_bundle, save_bundle};
use scenediff::scene::SceneConfig;
use scenediff::svg::render_svg;

fn main() -> scenediff::Result<()> {
    let config = SceneConfig::desk_default();
    let options = DatagenOptions {
        num_scenes: 50,
        ..DatagenOptions::default()
    };
    let bundle = generate_dataset(&config, &options, 11)?;
    println!(
        "{} scenes, {} distinct graphs, {} library assets",
        bundle.scenes.len(),
        bundle.graph_frequencies().len(),
        bundle.library.len()
    );
    for text in bundle.instruction_texts.iter().take(5) {
        println!("  {text}");
    }

    let dir = std::env::temp_dir().join("scenediff-dataset");
    save_bundle(&bundle, &dir)?;
    let back = load_bundle(&dir, true)?;
    assert_eq!(back.scenes, bundle.scenes);
    std::fs::write(dir.join("scene0.svg"), render_svg(&bundle.scenes[0], &config))?;
    println!("bundle and scene0.svg in {}", dir.display());
    Ok(())
}
