//! Command-line front end.
//!
//! Exit codes: 0 on success, 2 on invalid input, 3 when an instruction or
//! frozen condition cannot be satisfied by the dataset, 1 otherwise.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::datagen::{generate_dataset, toy_support, DatagenOptions, DatasetBundle};
use crate::error::{Error, Result};
use crate::eval::{fingerprint, triplet_counts, tv_distance, EvalReport};
use crate::graph_diffusion::{GraphSchedule, GuidanceConfig, KernelKind, ScheduleOptions};
use crate::instruction::{parse_instruction, Instruction};
use crate::io::{load_bundle, parse_scene_or_batch, save_bundle, SceneBatch, SceneJson, SCHEMA_VERSION};
use crate::pipeline::{GenerationConfig, Synthesis, Synthesizer};
use crate::rng::stream_rng;
use crate::scene::{Scene, SceneConfig};
use crate::svg::render_svg;

/// Stream offset separating the unconditional evaluation batch from the
/// conditional one.
const TV_STREAM: u64 = 1 << 32;

#[derive(Debug, Parser)]
#[command(name = "scenediff", version, about = "Instruction-driven indoor scene synthesis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a procedural dataset bundle to a directory.
    MakeDataset(MakeDatasetArgs),
    /// Generate scenes from an instruction.
    Generate(GenerateArgs),
    /// Add objects to a partial scene.
    Complete(SceneTaskArgs),
    /// Re-place the objects of a scene.
    Rearrange(SceneTaskArgs),
    /// Change the appearance of a scene's objects.
    Stylize(SceneTaskArgs),
    /// Generate scenes without an instruction.
    Uncond(CommonArgs),
    /// Report iRecall, graph TV and style match on generated scenes.
    Eval(GenerateArgs),
    /// Draw a scene as a top-down SVG.
    RenderSvg(RenderArgs),
    /// Print the per-step transition parameters of the graph schedules.
    ScheduleDump(ScheduleArgs),
}

#[derive(Debug, Args)]
struct SeedArg {
    #[arg(long, env = "SCENEDIFF_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct MakeDatasetArgs {
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    seed: SeedArg,
    /// Number of scenes (ignored with --toy).
    #[arg(long, default_value_t = 200)]
    n: usize,
    /// Write the 20-graph toy support instead of a random dataset.
    #[arg(long)]
    toy: bool,
}

#[derive(Debug, Args)]
struct CommonArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[command(flatten)]
    seed: SeedArg,
    #[arg(long, default_value_t = 100)]
    t_graph: usize,
    #[arg(long, default_value_t = 10)]
    t_layout: usize,
    #[arg(long, default_value_t = 0.0)]
    guidance: f64,
    #[arg(long, default_value = "independent-mask")]
    kernel: String,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    n: usize,
    /// Reject unknown JSON fields.
    #[arg(long)]
    strict: bool,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, default_value = "")]
    instruction: String,
}

#[derive(Debug, Args)]
struct SceneTaskArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, default_value = "")]
    instruction: String,
    /// Input scene JSON (a single scene or a batch; the first scene is used).
    #[arg(long)]
    scene: PathBuf,
}

#[derive(Debug, Args)]
struct RenderArgs {
    #[arg(long)]
    scene: PathBuf,
    /// Bundle whose category names are used; defaults to the built-in
    /// vocabulary.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ScheduleArgs {
    #[arg(long, default_value_t = 100)]
    t_graph: usize,
    #[arg(long, default_value = "independent-mask")]
    kernel: String,
    #[arg(long, default_value_t = crate::graph_diffusion::DEFAULT_LEAK)]
    leak: f64,
    #[arg(long)]
    freeze_empty: bool,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Unsatisfiable { .. } => 3,
        Error::Invalid(_)
        | Error::DimensionMismatch { .. }
        | Error::OutOfRange { .. }
        | Error::Parse(_)
        | Error::UnknownVocabulary(_)
        | Error::Json(_)
        | Error::Unsupported(_) => 2,
        Error::ImpossiblePosterior(_) | Error::Io(_) => 1,
    }
}

/// Runs the CLI on explicit arguments (the first is the program name) and
/// returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::MakeDataset(a) => make_dataset(a),
        Command::Generate(a) => {
            let (bundle, synth) = load(&a.common)?;
            let instr = instruction(&a.instruction, &bundle.config)?;
            batch(&a.common, &bundle, "generate", Some(&a.instruction), |rng| synth.generate(instr.as_ref(), rng))
        }
        Command::Uncond(a) => {
            let (bundle, synth) = load(&a)?;
            batch(&a, &bundle, "uncond", None, |rng| synth.unconditional(rng))
        }
        Command::Complete(a) => scene_task(a, "complete", |s, scene, i, rng| s.complete(scene, i, rng)),
        Command::Rearrange(a) => scene_task(a, "rearrange", |s, scene, i, rng| s.rearrange(scene, i, rng)),
        Command::Stylize(a) => scene_task(a, "stylize", |s, scene, i, rng| s.stylize(scene, i, rng)),
        Command::Eval(a) => eval(a),
        Command::RenderSvg(a) => {
            let config = match &a.dataset {
                Some(d) => load_bundle(d, false)?.config,
                None => SceneConfig::desk_default(),
            };
            let scene = parse_scene_or_batch(&fs::read_to_string(&a.scene)?, &config, false)?;
            emit(a.out.as_deref(), &render_svg(&scene, &config))
        }
        Command::ScheduleDump(a) => schedule_dump(a),
    }
}

fn make_dataset(a: MakeDatasetArgs) -> Result<()> {
    let config = SceneConfig::desk_default();
    let bundle = if a.toy {
        toy_support(&config, a.seed.seed)?
    } else {
        let options = DatagenOptions {
            num_scenes: a.n,
            ..DatagenOptions::default()
        };
        generate_dataset(&config, &options, a.seed.seed)?
    };
    save_bundle(&bundle, &a.out)?;
    eprintln!("wrote {} scenes to {}", bundle.scenes.len(), a.out.display());
    Ok(())
}

fn generation_config(a: &CommonArgs) -> Result<GenerationConfig> {
    let config = GenerationConfig {
        t_graph: a.t_graph,
        t_layout: a.t_layout,
        kernel: a.kernel.parse()?,
        guidance: GuidanceConfig::with_scale(a.guidance),
        seed: a.seed.seed,
        ..GenerationConfig::default()
    };
    config.validate()?;
    Ok(config)
}

fn load(a: &CommonArgs) -> Result<(DatasetBundle, Synthesizer)> {
    let config = generation_config(a)?;
    let bundle = load_bundle(&a.dataset, a.strict)?;
    let synth = Synthesizer::new(&bundle, config)?;
    Ok((bundle, synth))
}

fn instruction(text: &str, config: &SceneConfig) -> Result<Option<Instruction>> {
    if text.trim().is_empty() {
        return Ok(None);
    }
    Ok(Some(parse_instruction(text, config)?))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn emit_json(out: Option<&Path>, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    emit(out, &text)
}

fn batch(
    a: &CommonArgs,
    bundle: &DatasetBundle,
    task: &str,
    instruction: Option<&str>,
    mut sample: impl FnMut(&mut rand_chacha::ChaCha8Rng) -> Result<Synthesis>,
) -> Result<()> {
    let mut scenes = Vec::with_capacity(a.n);
    for i in 0..a.n {
        let mut rng = stream_rng(a.seed.seed, i as u64);
        let s = sample(&mut rng)?;
        scenes.push(SceneJson::from_scene(&s.scene, &bundle.config, true)?);
    }
    let out = SceneBatch {
        schema_version: SCHEMA_VERSION,
        task: task.to_string(),
        seed: a.seed.seed,
        instruction: instruction.filter(|t| !t.trim().is_empty()).map(str::to_string),
        scenes,
    };
    emit_json(a.out.as_deref(), &out)
}

fn scene_task(
    a: SceneTaskArgs,
    task: &str,
    run: impl Fn(&Synthesizer, &Scene, Option<&Instruction>, &mut rand_chacha::ChaCha8Rng) -> Result<Synthesis>,
) -> Result<()> {
    let (bundle, synth) = load(&a.common)?;
    let instr = instruction(&a.instruction, &bundle.config)?;
    let scene = parse_scene_or_batch(&fs::read_to_string(&a.scene)?, &bundle.config, a.common.strict)?;
    batch(&a.common, &bundle, task, Some(&a.instruction), |rng| run(&synth, &scene, instr.as_ref(), rng))
}

fn eval(a: GenerateArgs) -> Result<()> {
    let (bundle, synth) = load(&a.common)?;
    let instructions: Vec<Instruction> = match instruction(&a.instruction, &bundle.config)? {
        Some(i) => vec![i],
        None => bundle
            .distinct_instructions()
            .into_iter()
            .filter(|i| !i.is_unconditional())
            .collect(),
    };
    let mut report = EvalReport::new(&(synth.config(), &bundle.config, bundle.seed))?;
    let n = a.common.n;
    let (mut hit, mut required) = (0, 0);
    let (mut style_hit, mut style_total) = (0, 0);
    if !instructions.is_empty() {
        for i in 0..n {
            let instr = &instructions[i % instructions.len()];
            let mut rng = stream_rng(a.common.seed.seed, i as u64);
            let s = synth.generate(Some(instr), &mut rng)?;
            let (h, r) = triplet_counts(&s.scene, instr);
            hit += h;
            required += r;
            if let Some(style) = &instr.style {
                for o in s.scene.objects.iter().filter(|o| style.applies_to(o.category)) {
                    style_total += 1;
                    style_hit += usize::from(o.codes.as_deref().is_some_and(|c| style.accepts(c)));
                }
            }
        }
        report.num_scenes = n;
    }
    report.num_required_triplets = required;
    report.irecall = (required > 0).then(|| hit as f64 / required as f64);
    report.style_match = (style_total > 0).then(|| style_hit as f64 / style_total as f64);

    let mut graphs = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = stream_rng(a.common.seed.seed, TV_STREAM + i as u64);
        graphs.push(synth.unconditional(&mut rng)?.graph);
    }
    if !graphs.is_empty() {
        report.tv = Some(tv_distance(&graphs, &bundle.graph_frequencies())?);
        report.num_tv_samples = graphs.len();
    }
    emit_json(a.common.out.as_deref(), &report)
}

#[derive(Serialize)]
struct ScheduleReport {
    schema_version: u32,
    fingerprint: String,
    category: crate::graph_diffusion::ScheduleDump,
    code: crate::graph_diffusion::ScheduleDump,
    relation: crate::graph_diffusion::ScheduleDump,
}

fn schedule_dump(a: ScheduleArgs) -> Result<()> {
    let config = match &a.dataset {
        Some(d) => load_bundle(d, false)?.config,
        None => SceneConfig::desk_default(),
    };
    let kernel: KernelKind = a.kernel.parse()?;
    let options = ScheduleOptions {
        leak: a.leak,
        freeze_empty: a.freeze_empty,
    };
    let s = GraphSchedule::new(a.t_graph, config.spaces(), kernel, options)?;
    let (category, code, relation) = (s.category.dump(), s.code.dump(), s.relation.dump());
    let report = ScheduleReport {
        schema_version: SCHEMA_VERSION,
        fingerprint: fingerprint(&(&category, &code, &relation))?,
        category,
        code,
        relation,
    };
    emit_json(a.out.as_deref(), &report)
}
