//! iRecall, graph TV and style match over a batch of generated scenes.

use scenediff::datagen::{generate_dataset, DatagenOptions};
use scenediff::eval::{irecall, style_match_rate_where, tv_distance, EvalReport};
use scenediff::pipeline::{GenerationConfig, Synthesizer};
use scenediff::rng::stream_rng;
use scenediff::scene::SceneConfig;

fn main() -> scenediff::Result<()> {
    let config = SceneConfig::desk_default();
    let options = DatagenOptions {
        num_scenes: 80,
        ..DatagenOptions::default()
    };
    let bundle = generate_dataset(&config, &options, 3)?;
    let synth = Synthesizer::new(&bundle, GenerationConfig::default())?;
    let mut report = EvalReport::new(synth.config())?;

    let instructions: Vec<_> = bundle
        .distinct_instructions()
        .into_iter()
        .filter(|i| !i.triplets.is_empty())
        .take(20)
        .collect();
    let mut scenes = Vec::new();
    for (i, instr) in instructions.iter().enumerate() {
        scenes.push(synth.generate(Some(instr), &mut stream_rng(8, i as u64))?.scene);
    }
    report.irecall = Some(irecall(&scenes, &instructions)?);
    report.num_scenes = scenes.len();
    report.num_required_triplets = instructions.iter().map(|i| i.triplets.len()).sum();

    // Style match for the first styled instruction, if any.
    if let Some((idx, style)) = instructions.iter().enumerate().find_map(|(i, x)| x.style.clone().map(|s| (i, s))) {
        if style.codes.iter().all(Option::is_some) {
            let target: Vec<usize> = style.codes.iter().flatten().copied().collect();
            let rate = style_match_rate_where(&scenes[idx..=idx], &target, &bundle.codebook, |o| style.applies_to(o.category))?;
            report.style_match = Some(rate);
        }
    }

    let graphs = (0..300)
        .map(|i| Ok(synth.unconditional(&mut stream_rng(9, i))?.graph))
        .collect::<scenediff::Result<Vec<_>>>()?;
    report.tv = Some(tv_distance(&graphs, &bundle.graph_frequencies())?);
    report.num_tv_samples = graphs.len();
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}
