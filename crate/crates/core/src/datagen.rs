//! Procedural scene datasets with relations placed by construction.
//!
//! Objects are placed one at a time relative to an already placed anchor so
//! that a sampled target relation holds. Every pair is then required to sit
//! at least [`DatagenOptions::min_margin`] away from any rule boundary, which
//! keeps relations stable under the small noise of layout sampling.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instruction::{instruction_matches, render_instruction, style_holds, Instruction, StyleConstraint, Triplet};
use crate::layout_diffusion::LayoutStats;
use crate::pipeline::{LibraryEntry, ObjectLibrary};
use crate::quantizer::{fit_codebook, Codebook};
use crate::relation::{relation_between, relation_margin, RelationLabel, RelationThresholds};
use crate::rng::{split_seed, stream_rng};
use crate::scene::{derive_semantic_graph, pad_graph, LayoutMatrix, ObjectInstance, Scene, SceneConfig, SemanticGraph};

const STREAM_LAYOUT: u64 = 1;
const STREAM_FEATURES: u64 = 2;
const STREAM_INSTRUCTIONS: u64 = 3;
const STREAM_PROTOTYPES: u64 = 4;
const STREAM_CODEBOOK: u64 = 5;

const PLACEMENT_TRIES: usize = 60;
const SCENE_TRIES: usize = 500;

/// Labels that placement can target directly. `below` arises as the
/// inverse of `above` when pairs are read in the other direction.
const TARGETS: [RelationLabel; 10] = [
    RelationLabel::Above,
    RelationLabel::LeftOf,
    RelationLabel::RightOf,
    RelationLabel::InFrontOf,
    RelationLabel::Behind,
    RelationLabel::CloselyLeftOf,
    RelationLabel::CloselyRightOf,
    RelationLabel::CloselyInFrontOf,
    RelationLabel::CloselyBehind,
    RelationLabel::None,
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatagenOptions {
    pub num_scenes: usize,
    pub min_objects: usize,
    /// Probability that a scene mixes styles instead of using one.
    pub mixed_style_prob: f64,
    /// Probability that a scene's instruction carries a style sentence.
    pub style_instruction_prob: f64,
    pub feature_noise: f64,
    pub kmeans_iters: usize,
    pub min_margin: f64,
}

impl Default for DatagenOptions {
    fn default() -> Self {
        DatagenOptions {
            num_scenes: 200,
            min_objects: 3,
            mixed_style_prob: 0.3,
            style_instruction_prob: 0.25,
            feature_noise: 0.03,
            kmeans_iters: 50,
            min_margin: 0.1,
        }
    }
}

/// A dataset with everything the synthesizer needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetBundle {
    pub config: SceneConfig,
    pub seed: u64,
    /// Scenes in canonical object order.
    pub scenes: Vec<Scene>,
    /// Padded graphs, one per scene.
    pub graphs: Vec<SemanticGraph>,
    pub instructions: Vec<Instruction>,
    pub instruction_texts: Vec<String>,
    pub codebook: Codebook,
    pub library: ObjectLibrary,
    pub stats: LayoutStats,
}

impl DatasetBundle {
    /// Rebuilds graphs and statistics from scenes and checks instructions.
    pub fn assemble(
        config: SceneConfig,
        seed: u64,
        scenes: Vec<Scene>,
        instructions: Vec<Instruction>,
        codebook: Codebook,
        library: ObjectLibrary,
    ) -> Result<Self> {
        config.validate()?;
        if scenes.len() != instructions.len() {
            return Err(Error::DimensionMismatch {
                expected: scenes.len(),
                found: instructions.len(),
            });
        }
        let mut graphs = Vec::with_capacity(scenes.len());
        for s in &scenes {
            s.validate(&config)?;
            graphs.push(pad_graph(&derive_semantic_graph(s, &codebook, &config)?, config.max_objects)?);
        }
        let layouts: Vec<LayoutMatrix> = scenes.iter().map(LayoutMatrix::from_scene).collect();
        let stats = LayoutStats::from_layouts(&layouts)?;
        let instruction_texts = instructions
            .iter()
            .enumerate()
            .map(|(i, instr)| render_instruction(instr, &config, split_seed(seed, i as u64)))
            .collect();
        let bundle = DatasetBundle {
            config,
            seed,
            scenes,
            graphs,
            instructions,
            instruction_texts,
            codebook,
            library,
            stats,
        };
        bundle.validate()?;
        Ok(bundle)
    }

    /// Checks graphs against their scenes and instructions against graphs.
    pub fn validate(&self) -> Result<()> {
        if self.scenes.len() != self.graphs.len() || self.scenes.len() != self.instructions.len() {
            return Err(Error::invalid("bundle lists differ in length"));
        }
        for (i, (s, g)) in self.scenes.iter().zip(&self.graphs).enumerate() {
            let derived = pad_graph(&derive_semantic_graph(s, &self.codebook, &self.config)?, self.config.max_objects)?;
            if &derived != g {
                return Err(Error::invalid(format!("stored graph {i} differs from its scene")));
            }
            if !instruction_matches(g, &self.instructions[i])? {
                return Err(Error::invalid(format!("instruction {i} does not hold in its scene")));
            }
        }
        Ok(())
    }

    /// Distinct graphs with their relative frequencies, in first-seen order.
    pub fn graph_frequencies(&self) -> Vec<(SemanticGraph, f64)> {
        let mut index: HashMap<&SemanticGraph, usize> = HashMap::new();
        let mut out: Vec<(SemanticGraph, f64)> = Vec::new();
        for g in &self.graphs {
            match index.get(g) {
                Some(&i) => out[i].1 += 1.0,
                None => {
                    index.insert(g, out.len());
                    out.push((g.clone(), 1.0));
                }
            }
        }
        let n = self.graphs.len() as f64;
        for (_, f) in &mut out {
            *f /= n;
        }
        out
    }

    /// Distinct instructions, in first-seen order.
    pub fn distinct_instructions(&self) -> Vec<Instruction> {
        let mut out: Vec<Instruction> = Vec::new();
        for i in &self.instructions {
            if !out.contains(i) {
                out.push(i.clone());
            }
        }
        out
    }
}

/// Nominal extents (width, depth, height) of a category.
fn nominal_size(name: &str, index: usize) -> [f64; 3] {
    match name {
        "bed" => [2.0, 1.6, 0.5],
        "nightstand" => [0.45, 0.4, 0.55],
        "wardrobe" => [1.2, 0.6, 2.0],
        "desk" => [1.2, 0.6, 0.75],
        "chair" => [0.5, 0.5, 0.9],
        "lamp" => [0.3, 0.3, 0.5],
        "shelf" => [0.8, 0.3, 1.2],
        "ottoman" => [0.5, 0.5, 0.45],
        _ => {
            let k = (index % 5) as f64;
            [0.5 + 0.15 * k, 0.4 + 0.1 * k, 0.5 + 0.2 * k]
        }
    }
}

fn sector_angle(label: RelationLabel) -> Option<f64> {
    use std::f64::consts::{FRAC_PI_2, PI};
    use RelationLabel as L;
    match label {
        L::RightOf | L::CloselyRightOf => Some(0.0),
        L::InFrontOf | L::CloselyInFrontOf => Some(FRAC_PI_2),
        L::LeftOf | L::CloselyLeftOf => Some(PI),
        L::Behind | L::CloselyBehind => Some(-FRAC_PI_2),
        _ => None,
    }
}

fn is_close(label: RelationLabel) -> bool {
    use RelationLabel as L;
    matches!(label, L::CloselyLeftOf | L::CloselyRightOf | L::CloselyInFrontOf | L::CloselyBehind)
}

/// Places a new object of `category` so that `relation_between(new, anchor)`
/// is `label`.
fn place<R: Rng + ?Sized>(anchor: &ObjectInstance, label: RelationLabel, category: usize, size: [f64; 3], rng: &mut R) -> ObjectInstance {
    let [ax, ay, az] = anchor.location;
    let rotation = rng.random_range(-2..=1) as f64 * std::f64::consts::FRAC_PI_2 + rng.random_range(-0.1..0.1);
    let location = if label == RelationLabel::Above {
        let reach = 0.25 * anchor.size[0].min(anchor.size[1]);
        let gap = rng.random_range(0.1..0.3);
        [
            ax + rng.random_range(-reach..reach),
            ay + rng.random_range(-reach..reach),
            az + (anchor.size[2] + size[2]) / 2.0 + gap,
        ]
    } else {
        let (angle, d) = match sector_angle(label) {
            Some(a) if is_close(label) => (a + rng.random_range(-0.35..0.35), rng.random_range(0.55..0.85)),
            Some(a) => (a + rng.random_range(-0.35..0.35), rng.random_range(1.4..2.6)),
            None => (rng.random_range(-std::f64::consts::PI..std::f64::consts::PI), rng.random_range(3.4..4.5)),
        };
        [ax + d * angle.cos(), ay + d * angle.sin(), size[2] / 2.0]
    };
    ObjectInstance::new(category, location, size, rotation, Vec::new())
}

fn margins_ok(objects: &[ObjectInstance], new: &ObjectInstance, min_margin: f64) -> bool {
    let th = RelationThresholds::default();
    objects
        .iter()
        .all(|o| relation_margin(new, o, &th) >= min_margin && relation_margin(o, new, &th) >= min_margin)
}

fn is_stacked(o: &ObjectInstance) -> bool {
    o.location[2] > o.size[2] / 2.0 + 1e-9
}

fn jittered_size<R: Rng + ?Sized>(config: &SceneConfig, category: usize, rng: &mut R) -> [f64; 3] {
    let base = nominal_size(config.category_name(category), category);
    base.map(|s| s * rng.random_range(0.95..1.05))
}

/// Places objects of the given categories with random targets. Returns
/// `None` when some object cannot be placed with enough margin.
fn random_layout<R: Rng + ?Sized>(config: &SceneConfig, categories: &[usize], min_margin: f64, rng: &mut R) -> Option<Vec<ObjectInstance>> {
    let first = categories[0];
    let size = jittered_size(config, first, rng);
    let mut objects = vec![ObjectInstance::new(first, [0.0, 0.0, size[2] / 2.0], size, 0.0, Vec::new())];
    let mut carrying = vec![false];
    for &c in &categories[1..] {
        let size = jittered_size(config, c, rng);
        let mut placed = None;
        for _ in 0..PLACEMENT_TRIES {
            let a = rng.random_range(0..objects.len());
            let label = TARGETS[rng.random_range(0..TARGETS.len())];
            if label == RelationLabel::Above && (carrying[a] || is_stacked(&objects[a])) {
                continue;
            }
            let o = place(&objects[a], label, c, size, rng);
            if margins_ok(&objects, &o, min_margin) {
                placed = Some((a, label, o));
                break;
            }
        }
        let (a, label, o) = placed?;
        if label == RelationLabel::Above {
            carrying[a] = true;
        }
        objects.push(o);
        carrying.push(false);
    }
    Some(objects)
}

/// Per-(style, chunk) feature prototypes, pairwise at least 1 apart.
fn prototypes(config: &SceneConfig, num_styles: usize, seed: u64) -> Vec<Vec<Vec<f64>>> {
    let mut rng = stream_rng(seed, STREAM_PROTOTYPES);
    let dim = config.feature_dim / config.codes_per_object;
    let mut flat: Vec<Vec<f64>> = Vec::new();
    while flat.len() < num_styles * config.codes_per_object {
        let p: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
        if flat.iter().all(|q| q.iter().zip(&p).map(|(a, b)| (a - b).powi(2)).sum::<f64>() >= 1.0) {
            flat.push(p);
        }
    }
    flat.chunks(config.codes_per_object).map(<[Vec<f64>]>::to_vec).collect()
}

fn feature_for<R: Rng + ?Sized>(protos: &[Vec<Vec<f64>>], style: usize, category: usize, noise: f64, rng: &mut R) -> Vec<f64> {
    let mut f = Vec::new();
    for chunk in &protos[style] {
        let bump = category % chunk.len();
        for (i, &x) in chunk.iter().enumerate() {
            let e: f64 = rng.sample(StandardNormal);
            f.push(x + if i == bump { 0.05 } else { 0.0 } + noise * e);
        }
    }
    f
}

fn num_styles(config: &SceneConfig) -> Result<usize> {
    let s = (config.codebook_size / config.codes_per_object).min(4);
    if s < 2 {
        return Err(Error::invalid("codebook too small for two styles"));
    }
    Ok(s)
}

/// Fits the codebook, assigns asset ids and builds the library.
fn finish(
    config: &SceneConfig,
    seed: u64,
    options: &DatagenOptions,
    mut scenes: Vec<Scene>,
) -> Result<(Vec<Scene>, Codebook, ObjectLibrary)> {
    let features: Vec<Vec<f64>> = scenes.iter().flat_map(|s| s.objects.iter().map(|o| o.feature.clone())).collect();
    let codebook = fit_codebook(
        &features,
        config.codebook_size,
        config.codes_per_object,
        options.kmeans_iters,
        split_seed(seed, STREAM_CODEBOOK),
    )?;
    let mut entries = Vec::new();
    for s in &mut scenes {
        for o in &mut s.objects {
            let id = format!("{}-{:05}", config.category_name(o.category), entries.len());
            o.asset_id = id.clone();
            entries.push(LibraryEntry {
                asset_id: id,
                category: o.category,
                feature: o.feature.clone(),
            });
        }
        *s = s.canonicalized();
    }
    Ok((scenes, codebook, ObjectLibrary::new(entries)))
}

/// Samples a random dataset. Each scene has between `min_objects` and the
/// config's object limit, distinct categories where possible, and a 1–2
/// triplet instruction read off its own relations.
pub fn generate_dataset(config: &SceneConfig, options: &DatagenOptions, seed: u64) -> Result<DatasetBundle> {
    config.validate()?;
    if config.max_objects < options.min_objects || options.min_objects < 2 || options.num_scenes == 0 {
        return Err(Error::invalid(format!(
            "infeasible dataset: {} scenes with {}..={} objects",
            options.num_scenes, options.min_objects, config.max_objects
        )));
    }
    let styles = num_styles(config)?;
    let protos = prototypes(config, styles, seed);
    let mut layout_rng = stream_rng(seed, STREAM_LAYOUT);
    let mut feature_rng = stream_rng(seed, STREAM_FEATURES);
    let mut scenes = Vec::with_capacity(options.num_scenes);
    for idx in 0..options.num_scenes {
        let n = layout_rng.random_range(options.min_objects..=config.max_objects);
        let mut objects = None;
        for _ in 0..SCENE_TRIES {
            let categories = sample_categories(config.num_categories(), n, &mut layout_rng);
            objects = random_layout(config, &categories, options.min_margin, &mut layout_rng);
            if objects.is_some() {
                break;
            }
        }
        let mut objects = objects.ok_or_else(|| Error::invalid("could not place objects with the requested margin"))?;
        let room_style = feature_rng.random_range(0..styles);
        let mixed = feature_rng.random::<f64>() < options.mixed_style_prob;
        for o in &mut objects {
            let style = if mixed { feature_rng.random_range(0..styles) } else { room_style };
            o.feature = feature_for(&protos, style, o.category, options.feature_noise, &mut feature_rng);
        }
        scenes.push(Scene::new(format!("scene-{idx:05}"), objects));
    }
    let (scenes, codebook, library) = finish(config, seed, options, scenes)?;

    let mut rng = stream_rng(seed, STREAM_INSTRUCTIONS);
    let mut instructions = Vec::with_capacity(scenes.len());
    for s in &scenes {
        let g = pad_graph(&derive_semantic_graph(s, &codebook, config)?, config.max_objects)?;
        instructions.push(scene_instruction(&g, s.objects.len(), options.style_instruction_prob, &mut rng));
    }
    DatasetBundle::assemble(config.clone(), seed, scenes, instructions, codebook, library)
}

fn sample_categories<R: Rng + ?Sized>(k: usize, n: usize, rng: &mut R) -> Vec<usize> {
    let mut all: Vec<usize> = (0..k).collect();
    all.shuffle(rng);
    let mut out: Vec<usize> = all.into_iter().take(n).collect();
    while out.len() < n {
        out.push(rng.random_range(0..k));
    }
    out
}

fn scene_instruction<R: Rng + ?Sized>(g: &SemanticGraph, n: usize, style_prob: f64, rng: &mut R) -> Instruction {
    let wanted = rng.random_range(1..=2usize);
    let mut triplets: Vec<Triplet> = Vec::new();
    let mut pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (0..n).filter(move |&b| b != a).map(move |b| (a, b))).collect();
    pairs.shuffle(rng);
    for (a, b) in pairs {
        let rel = g.relation(a, b).expect("real nodes have relations");
        let t = Triplet::new(g.categories[a], rel, g.categories[b]);
        if !triplets.contains(&t) {
            triplets.push(t);
        }
        if triplets.len() == wanted {
            break;
        }
    }
    let mut instr = Instruction::from_triplets(triplets);
    if rng.random::<f64>() < style_prob {
        let j = rng.random_range(0..n);
        let style = StyleConstraint {
            category: Some(g.categories[j]),
            codes: g.codes_of(j).iter().map(|&c| Some(c)).collect(),
        };
        if style_holds(g, &style) {
            instr = instr.with_style(style);
        }
    }
    instr
}

/// Triplets of the toy support as `(subject, relation, object)` category
/// indices; each appears in two scene variants.
const TOY_TRIPLETS: [(usize, RelationLabel, usize); 10] = [
    (1, RelationLabel::CloselyLeftOf, 0),
    (4, RelationLabel::InFrontOf, 3),
    (5, RelationLabel::Above, 1),
    (2, RelationLabel::RightOf, 0),
    (6, RelationLabel::Behind, 3),
    (7, RelationLabel::CloselyInFrontOf, 0),
    (5, RelationLabel::Above, 3),
    (4, RelationLabel::CloselyRightOf, 3),
    (2, RelationLabel::None, 4),
    (1, RelationLabel::CloselyBehind, 2),
];

const TOY_THIRD: [RelationLabel; 4] = [
    RelationLabel::Behind,
    RelationLabel::LeftOf,
    RelationLabel::InFrontOf,
    RelationLabel::RightOf,
];

/// A small bundle with exactly 20 distinct graphs (two three-object variants
/// per triplet of a fixed list), each repeated 1–4 times with small jitter.
/// Needs at least 8 categories and 3 slots.
pub fn toy_support(config: &SceneConfig, seed: u64) -> Result<DatasetBundle> {
    config.validate()?;
    if config.num_categories() < 8 || config.max_objects < 3 {
        return Err(Error::invalid("the toy support needs 8 categories and 3 slots"));
    }
    let options = DatagenOptions::default();
    let styles = num_styles(config)?;
    let protos = prototypes(config, styles, seed);
    let mut rng = stream_rng(seed, STREAM_LAYOUT);
    let mut feature_rng = stream_rng(seed, STREAM_FEATURES);
    let mut scenes = Vec::new();
    let mut instructions = Vec::new();
    for (i, &(subj, rel, obj)) in TOY_TRIPLETS.iter().enumerate() {
        for variant in 0..2 {
            let motif = 2 * i + variant;
            let third = (0..config.num_categories())
                .map(|k| (obj + 1 + i + 3 * variant + k) % config.num_categories())
                .find(|c| *c != subj && *c != obj)
                .expect("enough categories");
            let style = (i + variant) % styles;
            let base = toy_layout(config, (subj, rel, obj), third, motif, options.min_margin, &mut rng)?;
            let count = 1 + motif % 4;
            for r in 0..count {
                let mut objects = if r == 0 { base.clone() } else { jitter(&base, &mut rng) };
                for o in &mut objects {
                    o.feature = feature_for(&protos, style, o.category, options.feature_noise, &mut feature_rng);
                }
                scenes.push(Scene::new(format!("toy-{motif:02}-{r}"), objects));
                instructions.push(Instruction::from_triplets(vec![Triplet::new(subj, rel, obj)]));
            }
        }
    }
    let (scenes, codebook, library) = finish(config, seed, &options, scenes)?;
    let bundle = DatasetBundle::assemble(config.clone(), seed, scenes, instructions, codebook, library)?;
    let support = bundle.graph_frequencies().len();
    if support != 2 * TOY_TRIPLETS.len() {
        return Err(Error::invalid(format!("toy support has {support} graphs instead of 20")));
    }
    Ok(bundle)
}

fn toy_layout<R: Rng + ?Sized>(
    config: &SceneConfig,
    (subj, rel, obj): (usize, RelationLabel, usize),
    third: usize,
    motif: usize,
    min_margin: f64,
    rng: &mut R,
) -> Result<Vec<ObjectInstance>> {
    let labels = [TOY_THIRD[motif % 4], TOY_THIRD[(motif + 1) % 4], TOY_THIRD[(motif + 2) % 4], TOY_THIRD[(motif + 3) % 4]];
    for label in labels {
        for _ in 0..PLACEMENT_TRIES {
            let size = nominal_size(config.category_name(obj), obj);
            let anchor = ObjectInstance::new(obj, [0.0, 0.0, size[2] / 2.0], size, 0.0, Vec::new());
            let s = place(&anchor, rel, subj, nominal_size(config.category_name(subj), subj), rng);
            if !margins_ok(std::slice::from_ref(&anchor), &s, min_margin) || relation_between(&s, &anchor) != rel {
                continue;
            }
            let t = place(&anchor, label, third, nominal_size(config.category_name(third), third), rng);
            let placed = vec![anchor, s];
            if margins_ok(&placed, &t, min_margin) {
                let mut objects = placed;
                objects.push(t);
                return Ok(objects);
            }
        }
    }
    Err(Error::invalid(format!("could not place toy motif {motif}")))
}

/// Small perturbation of a layout that keeps every relation.
fn jitter<R: Rng + ?Sized>(base: &[ObjectInstance], rng: &mut R) -> Vec<ObjectInstance> {
    loop {
        let objects: Vec<ObjectInstance> = base
            .iter()
            .map(|o| {
                let mut o = o.clone();
                o.location[0] += rng.random_range(-0.02..0.02);
                o.location[1] += rng.random_range(-0.02..0.02);
                o.rotation = crate::scene::normalize_angle(o.rotation + rng.random_range(-0.02..0.02));
                o
            })
            .collect();
        let same = (0..base.len()).all(|a| {
            (0..base.len()).all(|b| a == b || relation_between(&objects[a], &objects[b]) == relation_between(&base[a], &base[b]))
        });
        if same {
            return objects;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn placement_realizes_targets() {
        let config = SceneConfig::desk_default();
        let mut rng = stream_rng(3, 0);
        let anchor = ObjectInstance::new(0, [0.0, 0.0, 0.25], [2.0, 1.6, 0.5], 0.0, Vec::new());
        for label in TARGETS {
            for _ in 0..50 {
                let o = place(&anchor, label, 5, nominal_size(config.category_name(5), 5), &mut rng);
                assert_eq!(relation_between(&o, &anchor), label);
            }
        }
    }

    #[test]
    fn small_dataset_is_self_consistent() {
        let config = SceneConfig::desk_default();
        let options = DatagenOptions {
            num_scenes: 12,
            ..DatagenOptions::default()
        };
        let a = generate_dataset(&config, &options, 11).unwrap();
        a.validate().unwrap();
        assert_eq!(a.scenes.len(), 12);
        assert!(a.scenes.iter().all(|s| (3..=6).contains(&s.objects.len())));
        let b = generate_dataset(&config, &options, 11).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn toy_support_has_twenty_graphs() {
        let bundle = toy_support(&SceneConfig::desk_default(), 0).unwrap();
        let freq = bundle.graph_frequencies();
        assert_eq!(freq.len(), 20);
        assert!((freq.iter().map(|(_, f)| f).sum::<f64>() - 1.0).abs() < 1e-12);
        for instr in bundle.distinct_instructions() {
            let n = freq.iter().filter(|(g, _)| instruction_matches(g, &instr).unwrap()).count();
            assert!(n >= 2);
        }
    }
}
