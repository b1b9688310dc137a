//! Completion, rearrangement and stylization with frozen graph entries.

use scenediff::datagen::toy_support;
use scenediff::instruction::parse_instruction;
use scenediff::pipeline::{GenerationConfig, Synthesizer};
use scenediff::rng::stream_rng;
use scenediff::scene::{Scene, SceneConfig};

fn show(label: &str, scene: &Scene, config: &SceneConfig) {
    println!("{label}:");
    for o in &scene.objects {
        println!(
            "  {:>10} at ({:5.2}, {:5.2}) r {:5.2} codes {:?}",
            config.category_name(o.category),
            o.location[0],
            o.location[1],
            o.rotation,
            o.codes
        );
    }
}

fn main() -> scenediff::Result<()> {
    let config = SceneConfig::desk_default();
    let bundle = toy_support(&config, 0)?;
    let synth = Synthesizer::new(&bundle, GenerationConfig::default())?;
    let scene = &bundle.scenes[0];
    show("source", scene, &config);

    let partial = Scene::new("partial", scene.objects[..1].to_vec());
    let done = synth.complete(&partial, None, &mut stream_rng(5, 0))?;
    show("completed from the first object", &done.scene, &config);

    let instr = parse_instruction("Place a nightstand closely to the left of a bed.", &config)?;
    let moved = synth.rearrange(scene, Some(&instr), &mut stream_rng(5, 1))?;
    show("rearranged", &moved.scene, &config);

    let restyled = synth.stylize(scene, None, &mut stream_rng(5, 2))?;
    show("stylized", &restyled.scene, &config);
    Ok(())
}
