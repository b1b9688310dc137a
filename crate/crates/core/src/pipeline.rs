//! Two-stage synthesis: a semantic graph from the graph prior, then a
//! layout for that graph, then assets retrieved per object.
//!
//! The zero-shot tasks reuse the same samplers with frozen entries: a mask
//! marks an unknown attribute, a clean value a fixed one.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::DatasetBundle;
use crate::error::{Error, Result};
use crate::graph_diffusion::{
    reverse_sample, EmpiricalDenoiser, GraphSchedule, GuidanceConfig, KernelKind, ScheduleOptions, DEFAULT_LEAK,
};
use crate::instruction::{instruction_matches, Instruction};
use crate::layout_diffusion::{
    reverse_sample_layout, ExactEpsDenoiser, GaussianSchedule, LayoutStats,
};
use crate::quantizer::Codebook;
use crate::relation::edge_index;
use crate::scene::{
    derive_semantic_graph, layout_row, normalize_angle, LayoutMatrix, ObjectInstance, Scene, SceneConfig,
    SemanticGraph, VarKind, LAYOUT_DIM,
};

/// Smallest extent assigned to a generated object.
const MIN_SIZE: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub t_graph: usize,
    pub t_layout: usize,
    pub kernel: KernelKind,
    pub leak: f64,
    pub freeze_empty: bool,
    pub guidance: GuidanceConfig,
    /// Slot count; `None` uses the scene config's object limit.
    pub n_max: Option<usize>,
    pub seed: u64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            t_graph: 100,
            t_layout: 10,
            kernel: KernelKind::IndependentMask,
            leak: DEFAULT_LEAK,
            freeze_empty: false,
            guidance: GuidanceConfig::default(),
            n_max: None,
            seed: 0,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_graph == 0 || self.t_layout == 0 {
            return Err(Error::invalid("step counts must be at least 1"));
        }
        if !(self.leak.is_finite() && self.leak >= 0.0) {
            return Err(Error::invalid("leak must be finite and non-negative"));
        }
        self.guidance.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LibraryEntry {
    pub asset_id: String,
    pub category: usize,
    pub feature: Vec<f64>,
}

/// Asset database searched by category and feature.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ObjectLibrary {
    pub entries: Vec<LibraryEntry>,
}

impl ObjectLibrary {
    pub fn new(entries: Vec<LibraryEntry>) -> Self {
        ObjectLibrary { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn validate(&self, config: &SceneConfig) -> Result<()> {
        for e in &self.entries {
            if e.category >= config.num_categories() {
                return Err(Error::OutOfRange {
                    label: e.category,
                    size: config.num_categories(),
                });
            }
            if e.feature.len() != config.feature_dim {
                return Err(Error::DimensionMismatch {
                    expected: config.feature_dim,
                    found: e.feature.len(),
                });
            }
        }
        Ok(())
    }
}

/// Asset of `category` whose feature is closest to the decoded codes; ties
/// go to the lowest asset id.
pub fn retrieve_object(category: usize, codes: &[usize], codebook: &Codebook, library: &ObjectLibrary) -> Result<String> {
    let target = codebook.decode(codes)?;
    let mut best: Option<(f64, &str)> = None;
    for e in library.entries.iter().filter(|e| e.category == category) {
        if e.feature.len() != target.len() {
            return Err(Error::DimensionMismatch {
                expected: target.len(),
                found: e.feature.len(),
            });
        }
        let d: f64 = e.feature.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum();
        let better = match best {
            None => true,
            Some((bd, bid)) => d < bd || (d == bd && e.asset_id.as_str() < bid),
        };
        if better {
            best = Some((d, &e.asset_id));
        }
    }
    best.map(|(_, id)| id.to_string())
        .ok_or_else(|| Error::invalid(format!("object library has no entry of category {category}")))
}

/// A synthesized scene together with the semantic graph it was decoded from.
#[derive(Clone, Debug, PartialEq)]
pub struct Synthesis {
    pub scene: Scene,
    /// Padded graph returned by the graph sampler.
    pub graph: SemanticGraph,
}

/// Exact denoisers and schedules built from one dataset bundle.
pub struct Synthesizer {
    scene_config: SceneConfig,
    config: GenerationConfig,
    codebook: Codebook,
    library: ObjectLibrary,
    stats: LayoutStats,
    n_max: usize,
    graph_schedule: Arc<GraphSchedule>,
    layout_schedule: Arc<GaussianSchedule>,
    graph_denoiser: EmpiricalDenoiser,
    layout_denoiser: ExactEpsDenoiser,
}

impl std::fmt::Debug for Synthesizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Synthesizer")
            .field("config", &self.config)
            .field("graph_support", &self.graph_denoiser.support().len())
            .finish()
    }
}

impl Synthesizer {
    pub fn new(bundle: &DatasetBundle, config: GenerationConfig) -> Result<Self> {
        config.validate()?;
        let scene_config = bundle.config.clone();
        let n_max = config.n_max.unwrap_or(scene_config.max_objects);
        if n_max != scene_config.max_objects {
            return Err(Error::invalid(format!(
                "slot count {n_max} differs from the dataset's object limit {}",
                scene_config.max_objects
            )));
        }
        if bundle.scenes.is_empty() {
            return Err(Error::invalid("dataset bundle has no scenes"));
        }
        let options = ScheduleOptions {
            leak: config.leak,
            freeze_empty: config.freeze_empty,
        };
        let graph_schedule = Arc::new(GraphSchedule::new(config.t_graph, scene_config.spaces(), config.kernel, options)?);
        let layout_schedule = Arc::new(GaussianSchedule::cosine(config.t_layout));
        let graph_denoiser = EmpiricalDenoiser::new(&bundle.graphs, Arc::clone(&graph_schedule))?;
        let mut layouts = Vec::with_capacity(bundle.scenes.len());
        for scene in &bundle.scenes {
            let g = derive_semantic_graph(scene, &bundle.codebook, &scene_config)?;
            layouts.push((g, bundle.stats.standardize(&LayoutMatrix::from_scene(scene))));
        }
        let layout_denoiser = ExactEpsDenoiser::new(layouts, Arc::clone(&layout_schedule))?;
        bundle.library.validate(&scene_config)?;
        Ok(Synthesizer {
            scene_config,
            config,
            codebook: bundle.codebook.clone(),
            library: bundle.library.clone(),
            stats: bundle.stats.clone(),
            n_max,
            graph_schedule,
            layout_schedule,
            graph_denoiser,
            layout_denoiser,
        })
    }

    pub fn config(&self) -> &GenerationConfig {
        &self.config
    }

    pub fn scene_config(&self) -> &SceneConfig {
        &self.scene_config
    }

    pub fn graph_denoiser(&self) -> &EmpiricalDenoiser {
        &self.graph_denoiser
    }

    pub fn graph_schedule(&self) -> &GraphSchedule {
        &self.graph_schedule
    }

    fn check_instruction<'a>(&self, instr: Option<&'a Instruction>) -> Result<Option<&'a Instruction>> {
        match instr {
            Some(i) if !i.is_unconditional() => {
                i.validate(&self.scene_config)?;
                Ok(Some(i))
            }
            _ => Ok(None),
        }
    }

    fn sample_graph<R: Rng + ?Sized>(
        &self,
        instr: Option<&Instruction>,
        frozen: Option<&SemanticGraph>,
        rng: &mut R,
    ) -> Result<SemanticGraph> {
        let aligned;
        let denoiser = match frozen {
            Some(f) if f.categories.iter().any(|&c| c != f.spaces.mask(VarKind::Category)) => {
                aligned = self.graph_denoiser.aligned_to(f)?;
                &aligned
            }
            _ => &self.graph_denoiser,
        };
        reverse_sample(denoiser, instr, &self.config.guidance, &self.graph_schedule, self.n_max, rng, frozen)
    }

    fn build_object(&self, category: usize, codes: &[usize], row: &[f64; LAYOUT_DIM]) -> Result<ObjectInstance> {
        let mut o = ObjectInstance::new(
            category,
            [row[0], row[1], row[2]],
            [row[3].max(MIN_SIZE), row[4].max(MIN_SIZE), row[5].max(MIN_SIZE)],
            row[7].atan2(row[6]),
            Vec::new(),
        );
        o.codes = Some(codes.to_vec());
        o.asset_id = retrieve_object(category, codes, &self.codebook, &self.library)?;
        Ok(o)
    }

    /// Samples a scene, optionally conditioned on an instruction.
    pub fn generate<R: Rng + ?Sized>(&self, instr: Option<&Instruction>, rng: &mut R) -> Result<Synthesis> {
        self.complete(&Scene::new("generated", Vec::new()), instr, rng)
    }

    pub fn unconditional<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Synthesis> {
        self.generate(None, rng)
    }

    /// Semantic graph of a scene in its own object order.
    pub fn scene_graph(&self, scene: &Scene) -> Result<SemanticGraph> {
        for o in &scene.objects {
            o.validate(&self.scene_config)?;
        }
        if scene.objects.len() > self.n_max {
            return Err(Error::invalid(format!(
                "scene has {} objects, more than the {} slots",
                scene.objects.len(),
                self.n_max
            )));
        }
        derive_semantic_graph(scene, &self.codebook, &self.scene_config)
    }

    /// Adds objects to a partial scene. Existing objects are kept exactly.
    pub fn complete<R: Rng + ?Sized>(&self, partial: &Scene, instr: Option<&Instruction>, rng: &mut R) -> Result<Synthesis> {
        let instr = self.check_instruction(instr)?;
        let k = partial.objects.len();
        let known = self.scene_graph(partial)?;
        let spaces = known.spaces;
        let mut frozen = SemanticGraph::all_mask(spaces, self.n_max);
        copy_nodes(&known, &mut frozen, true, true);
        if k == self.n_max {
            if let Some(i) = instr {
                if !instruction_matches(&frozen, i)? {
                    return Err(Error::unsatisfiable(
                        "completion",
                        "every slot is taken and the scene does not satisfy the instruction",
                    ));
                }
            }
            return Ok(Synthesis {
                scene: partial.clone(),
                graph: frozen,
            });
        }
        let graph = self.sample_graph(instr, (k > 0).then_some(&frozen), rng)?;
        let compact = graph.compact();
        if compact.num_nodes() == 0 {
            return Err(Error::invalid("sampled graph has no objects"));
        }
        let frozen_rows: Vec<Option<[f64; LAYOUT_DIM]>> = (0..compact.num_nodes())
            .map(|j| (j < k).then(|| self.stats.standardize_row(&layout_row(&partial.objects[j]))))
            .collect();
        let layout = reverse_sample_layout(
            &self.layout_denoiser,
            &compact,
            &self.layout_schedule,
            &self.stats,
            rng,
            (k > 0).then_some(frozen_rows.as_slice()),
        )?;
        let mut objects = partial.objects.clone();
        for j in k..compact.num_nodes() {
            objects.push(self.build_object(compact.categories[j], compact.codes_of(j), &layout.rows[j])?);
        }
        Ok(Synthesis {
            scene: Scene::new(partial.id.clone(), objects),
            graph,
        })
    }

    /// Regenerates relations and placement while keeping every object's
    /// category, appearance, asset and size.
    pub fn rearrange<R: Rng + ?Sized>(&self, scene: &Scene, instr: Option<&Instruction>, rng: &mut R) -> Result<Synthesis> {
        let instr = self.check_instruction(instr)?;
        let known = self.scene_graph(scene)?;
        let k = known.num_nodes();
        if k == 0 {
            return Err(Error::invalid("cannot rearrange an empty scene"));
        }
        let mut frozen = empty_padded(&known, self.n_max);
        copy_nodes(&known, &mut frozen, true, false);
        let graph = self.sample_graph(instr, Some(&frozen), rng)?;
        let compact = graph.compact();
        let layout = reverse_sample_layout(&self.layout_denoiser, &compact, &self.layout_schedule, &self.stats, rng, None)?;
        let objects = scene
            .objects
            .iter()
            .zip(&layout.rows)
            .map(|(o, row)| {
                let mut o = o.clone();
                o.location = [row[0], row[1], row[2]];
                o.rotation = normalize_angle(row[7].atan2(row[6]));
                o
            })
            .collect();
        Ok(Synthesis {
            scene: Scene::new(scene.id.clone(), objects),
            graph,
        })
    }

    /// Regenerates appearance codes only; categories, relations and layout
    /// are kept and assets are retrieved again for the new codes.
    pub fn stylize<R: Rng + ?Sized>(&self, scene: &Scene, instr: Option<&Instruction>, rng: &mut R) -> Result<Synthesis> {
        let instr = self.check_instruction(instr)?;
        let known = self.scene_graph(scene)?;
        let k = known.num_nodes();
        if k == 0 {
            return Err(Error::invalid("cannot stylize an empty scene"));
        }
        let mut frozen = empty_padded(&known, self.n_max);
        copy_nodes(&known, &mut frozen, false, true);
        let graph = self.sample_graph(instr, Some(&frozen), rng)?;
        let mut objects = Vec::with_capacity(k);
        for (j, o) in scene.objects.iter().enumerate() {
            let mut o = o.clone();
            let codes = graph.codes_of(j).to_vec();
            o.asset_id = retrieve_object(o.category, &codes, &self.codebook, &self.library)?;
            o.feature = Vec::new();
            o.codes = Some(codes);
            objects.push(o);
        }
        Ok(Synthesis {
            scene: Scene::new(scene.id.clone(), objects),
            graph,
        })
    }
}

/// Padded graph whose slots beyond `known` are empty and whose remaining
/// entries are masked.
fn empty_padded(known: &SemanticGraph, n_max: usize) -> SemanticGraph {
    let spaces = known.spaces;
    let k = known.num_nodes();
    let mut g = SemanticGraph::all_mask(spaces, n_max);
    let nf = spaces.codes_per_object;
    for j in k..n_max {
        g.categories[j] = spaces.empty(VarKind::Category);
        g.codes[j * nf..(j + 1) * nf].fill(spaces.empty(VarKind::Code));
        for i in 0..n_max {
            if i != j {
                let e = edge_index(n_max, i.min(j), i.max(j));
                g.relations[e] = spaces.empty(VarKind::Relation);
            }
        }
    }
    g
}

/// Copies categories of `known` into the leading slots of `frozen`, plus
/// codes and/or relations when requested.
fn copy_nodes(known: &SemanticGraph, frozen: &mut SemanticGraph, codes: bool, relations: bool) {
    let k = known.num_nodes();
    let n = frozen.num_nodes();
    let nf = known.spaces.codes_per_object;
    frozen.categories[..k].copy_from_slice(&known.categories);
    if codes {
        frozen.codes[..k * nf].copy_from_slice(&known.codes);
    }
    if relations {
        for a in 0..k {
            for b in (a + 1)..k {
                frozen.relations[edge_index(n, a, b)] = known.edge(a, b);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn codebook() -> Codebook {
        Codebook::new(vec![vec![0.0, 0.0], vec![1.0, 1.0]], 1).unwrap()
    }

    fn entry(id: &str, category: usize, feature: [f64; 2]) -> LibraryEntry {
        LibraryEntry {
            asset_id: id.into(),
            category,
            feature: feature.to_vec(),
        }
    }

    #[test]
    fn retrieval_picks_nearest_then_lowest_id() {
        let lib = ObjectLibrary::new(vec![
            entry("b", 0, [1.0, 1.0]),
            entry("c", 0, [0.5, 0.5]),
            entry("z", 1, [1.0, 1.0]),
        ]);
        assert_eq!(retrieve_object(0, &[1], &codebook(), &lib).unwrap(), "b");
        let tie = ObjectLibrary::new(vec![entry("q", 0, [0.0, 1.0]), entry("p", 0, [1.0, 0.0])]);
        assert_eq!(retrieve_object(0, &[0], &codebook(), &tie).unwrap(), "p");
        assert!(retrieve_object(2, &[0], &codebook(), &lib).is_err());
    }
}
