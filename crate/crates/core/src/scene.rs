//! Scenes, semantic graphs, and the slot bookkeeping shared by both
//! diffusion stages.
//!
//! Labels are zero-based. For a variable with `K` real values the state
//! space has `K + 2` entries: `0..K` are real values, `K` is the empty state
//! used for padded slots and `K + 1` is the absorbing mask state.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantizer::Codebook;
use crate::relation::{edge_count, edge_index, extract_relations, RelationLabel, NUM_RELATIONS};

/// One furniture item. Sizes are full extents (width, depth, height) in
/// meters; rotation is about the vertical axis in `[-π, π)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectInstance {
    pub category: usize,
    pub location: [f64; 3],
    pub size: [f64; 3],
    pub rotation: f64,
    #[serde(default)]
    pub feature: Vec<f64>,
    /// Quantized feature codes. When present they take precedence over
    /// `feature` for graph derivation.
    #[serde(default)]
    pub codes: Option<Vec<usize>>,
    #[serde(default)]
    pub asset_id: String,
}

impl ObjectInstance {
    pub fn new(category: usize, location: [f64; 3], size: [f64; 3], rotation: f64, feature: Vec<f64>) -> Self {
        ObjectInstance {
            category,
            location,
            size,
            rotation: normalize_angle(rotation),
            feature,
            codes: None,
            asset_id: String::new(),
        }
    }

    pub fn with_asset(mut self, asset_id: impl Into<String>) -> Self {
        self.asset_id = asset_id.into();
        self
    }

    pub fn validate(&self, config: &SceneConfig) -> Result<()> {
        if self.category >= config.num_categories() {
            return Err(Error::OutOfRange {
                label: self.category,
                size: config.num_categories(),
            });
        }
        if !self.size.iter().all(|s| *s > 0.0 && s.is_finite()) {
            return Err(Error::invalid(format!("object sizes must be positive, got {:?}", self.size)));
        }
        if !self.location.iter().all(|x| x.is_finite()) {
            return Err(Error::invalid("non-finite object location"));
        }
        if !(-std::f64::consts::PI..std::f64::consts::PI).contains(&self.rotation) {
            return Err(Error::invalid(format!("rotation {} outside [-pi, pi)", self.rotation)));
        }
        if let Some(codes) = &self.codes {
            if codes.len() != config.codes_per_object {
                return Err(Error::DimensionMismatch {
                    expected: config.codes_per_object,
                    found: codes.len(),
                });
            }
            if let Some(&c) = codes.iter().find(|&&c| c >= config.codebook_size) {
                return Err(Error::OutOfRange {
                    label: c,
                    size: config.codebook_size,
                });
            }
        } else if self.feature.len() != config.feature_dim {
            return Err(Error::DimensionMismatch {
                expected: config.feature_dim,
                found: self.feature.len(),
            });
        }
        Ok(())
    }
}

/// Wraps an angle into `[-π, π)`.
pub fn normalize_angle(r: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let mut a = (r + PI).rem_euclid(TAU) - PI;
    if a >= PI {
        a -= TAU;
    }
    a
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub id: String,
    pub objects: Vec<ObjectInstance>,
}

impl Scene {
    pub fn new(id: impl Into<String>, objects: Vec<ObjectInstance>) -> Self {
        Scene {
            id: id.into(),
            objects,
        }
    }

    pub fn validate(&self, config: &SceneConfig) -> Result<()> {
        if self.objects.is_empty() || self.objects.len() > config.max_objects {
            return Err(Error::invalid(format!(
                "scene '{}' has {} objects, expected 1..={}",
                self.id,
                self.objects.len(),
                config.max_objects
            )));
        }
        self.objects.iter().try_for_each(|o| o.validate(config))
    }

    /// Copy of the scene with objects in canonical order.
    pub fn canonicalized(&self) -> Scene {
        let order = canonical_order(self);
        Scene {
            id: self.id.clone(),
            objects: order.iter().map(|&i| self.objects[i].clone()).collect(),
        }
    }
}

/// Vocabulary and size limits shared by every component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub category_names: Vec<String>,
    pub num_relations: usize,
    pub codebook_size: usize,
    pub codes_per_object: usize,
    pub max_objects: usize,
    pub feature_dim: usize,
}

impl SceneConfig {
    /// Small bedroom vocabulary used by the procedural datasets.
    pub fn desk_default() -> Self {
        SceneConfig {
            category_names: ["bed", "nightstand", "wardrobe", "desk", "chair", "lamp", "shelf", "ottoman"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            num_relations: NUM_RELATIONS,
            codebook_size: 16,
            codes_per_object: 4,
            max_objects: 6,
            feature_dim: 16,
        }
    }

    pub fn num_categories(&self) -> usize {
        self.category_names.len()
    }

    pub fn category_index(&self, name: &str) -> Option<usize> {
        let name = name.trim();
        self.category_names.iter().position(|c| c.eq_ignore_ascii_case(name))
    }

    pub fn category_name(&self, index: usize) -> &str {
        &self.category_names[index]
    }

    pub fn spaces(&self) -> GraphSpaces {
        GraphSpaces {
            categories: self.num_categories(),
            codes: self.codebook_size,
            relations: self.num_relations,
            codes_per_object: self.codes_per_object,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.category_names.is_empty()
            || self.codebook_size == 0
            || self.codes_per_object == 0
            || self.max_objects == 0
            || self.feature_dim == 0
        {
            return Err(Error::invalid("all scene config counts must be at least 1"));
        }
        if self.num_relations != NUM_RELATIONS {
            return Err(Error::invalid(format!(
                "relation vocabulary has {NUM_RELATIONS} labels, config says {}",
                self.num_relations
            )));
        }
        if self.feature_dim % self.codes_per_object != 0 {
            return Err(Error::invalid(format!(
                "feature dimension {} is not divisible by {} codes",
                self.feature_dim, self.codes_per_object
            )));
        }
        for (i, name) in self.category_names.iter().enumerate() {
            let lower = name.to_ascii_lowercase();
            if lower.trim().is_empty() || lower.contains('.') || lower.contains(" and ") {
                return Err(Error::invalid(format!("category name '{name}' is not usable in instructions")));
            }
            if self.category_names[..i].iter().any(|o| o.eq_ignore_ascii_case(name)) {
                return Err(Error::invalid(format!("duplicate category name '{name}'")));
            }
        }
        Ok(())
    }
}

/// Real-value counts of the three graph variables.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GraphSpaces {
    pub categories: usize,
    pub codes: usize,
    pub relations: usize,
    pub codes_per_object: usize,
}

/// The three categorical variable kinds of a semantic graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum VarKind {
    Category,
    Code,
    Relation,
}

impl VarKind {
    pub const ALL: [VarKind; 3] = [VarKind::Category, VarKind::Code, VarKind::Relation];
}

impl GraphSpaces {
    pub fn real(&self, kind: VarKind) -> usize {
        match kind {
            VarKind::Category => self.categories,
            VarKind::Code => self.codes,
            VarKind::Relation => self.relations,
        }
    }

    pub fn empty(&self, kind: VarKind) -> usize {
        self.real(kind)
    }

    pub fn mask(&self, kind: VarKind) -> usize {
        self.real(kind) + 1
    }

    pub fn states(&self, kind: VarKind) -> usize {
        self.real(kind) + 2
    }
}

/// Categorical semantic graph: node categories, per-node code sequences and
/// upper-triangular relations. A padded graph is one whose node count is the
/// configured slot count.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SemanticGraph {
    pub spaces: GraphSpaces,
    pub categories: Vec<usize>,
    /// Row-major `n × codes_per_object`.
    pub codes: Vec<usize>,
    /// Upper-triangular, see [`edge_index`].
    pub relations: Vec<usize>,
}

pub type PaddedGraph = SemanticGraph;

impl SemanticGraph {
    /// Graph of `n` slots with every entry set to `state(kind)`.
    pub fn filled(spaces: GraphSpaces, n: usize, state: impl Fn(VarKind) -> usize) -> Self {
        SemanticGraph {
            spaces,
            categories: vec![state(VarKind::Category); n],
            codes: vec![state(VarKind::Code); n * spaces.codes_per_object],
            relations: vec![state(VarKind::Relation); edge_count(n)],
        }
    }

    pub fn all_mask(spaces: GraphSpaces, n: usize) -> Self {
        Self::filled(spaces, n, |k| spaces.mask(k))
    }

    pub fn num_nodes(&self) -> usize {
        self.categories.len()
    }

    pub fn codes_of(&self, node: usize) -> &[usize] {
        let nf = self.spaces.codes_per_object;
        &self.codes[node * nf..(node + 1) * nf]
    }

    pub fn entries(&self, kind: VarKind) -> &[usize] {
        match kind {
            VarKind::Category => &self.categories,
            VarKind::Code => &self.codes,
            VarKind::Relation => &self.relations,
        }
    }

    pub fn entries_mut(&mut self, kind: VarKind) -> &mut Vec<usize> {
        match kind {
            VarKind::Category => &mut self.categories,
            VarKind::Code => &mut self.codes,
            VarKind::Relation => &mut self.relations,
        }
    }

    /// Stored relation state for `j < k`.
    pub fn edge(&self, j: usize, k: usize) -> usize {
        self.relations[edge_index(self.num_nodes(), j, k)]
    }

    /// Relation label with `j` as subject, any `j != k`; `None` for empty
    /// or mask states.
    pub fn relation(&self, j: usize, k: usize) -> Option<RelationLabel> {
        let (a, b) = if j < k { (j, k) } else { (k, j) };
        let label = RelationLabel::from_index(self.edge(a, b))?;
        Some(if j < k { label } else { label.inverse() })
    }

    pub fn is_empty_node(&self, node: usize) -> bool {
        self.categories[node] == self.spaces.empty(VarKind::Category)
    }

    pub fn num_real_nodes(&self) -> usize {
        (0..self.num_nodes()).filter(|&j| !self.is_empty_node(j)).count()
    }

    pub fn has_mask(&self) -> bool {
        VarKind::ALL
            .iter()
            .any(|&k| self.entries(k).iter().any(|&x| x == self.spaces.mask(k)))
    }

    /// Checks label ranges and the empty-node convention. Mask states are
    /// rejected unless `allow_mask`.
    pub fn validate(&self, allow_mask: bool) -> Result<()> {
        let n = self.num_nodes();
        if self.codes.len() != n * self.spaces.codes_per_object {
            return Err(Error::DimensionMismatch {
                expected: n * self.spaces.codes_per_object,
                found: self.codes.len(),
            });
        }
        if self.relations.len() != edge_count(n) {
            return Err(Error::DimensionMismatch {
                expected: edge_count(n),
                found: self.relations.len(),
            });
        }
        for kind in VarKind::ALL {
            let limit = if allow_mask {
                self.spaces.states(kind)
            } else {
                self.spaces.states(kind) - 1
            };
            if let Some(&x) = self.entries(kind).iter().find(|&&x| x >= limit) {
                return Err(Error::OutOfRange { label: x, size: limit });
            }
        }
        if allow_mask {
            return Ok(());
        }
        for j in 0..n {
            let empty = self.is_empty_node(j);
            let code_empty = self.spaces.empty(VarKind::Code);
            if self.codes_of(j).iter().any(|&c| (c == code_empty) != empty) {
                return Err(Error::invalid(format!("node {j} violates the empty-node convention on codes")));
            }
            for k in (j + 1)..n {
                let edge_empty = self.edge(j, k) == self.spaces.empty(VarKind::Relation);
                if edge_empty != (empty || self.is_empty_node(k)) {
                    return Err(Error::invalid(format!("edge ({j},{k}) violates the empty-node convention")));
                }
            }
        }
        Ok(())
    }

    /// Drops empty slots, keeping the relative order of real nodes.
    pub fn compact(&self) -> SemanticGraph {
        let keep: Vec<usize> = (0..self.num_nodes()).filter(|&j| !self.is_empty_node(j)).collect();
        self.select_nodes(&keep)
    }

    /// Subgraph over the given nodes in the given order. Relations are
    /// re-oriented where the order of a pair flips.
    pub fn select_nodes(&self, nodes: &[usize]) -> SemanticGraph {
        let n = nodes.len();
        let mut out = SemanticGraph::filled(self.spaces, n, |k| self.spaces.empty(k));
        for (new, &old) in nodes.iter().enumerate() {
            out.categories[new] = self.categories[old];
            let nf = self.spaces.codes_per_object;
            out.codes[new * nf..(new + 1) * nf].copy_from_slice(self.codes_of(old));
        }
        for a in 0..n {
            for b in (a + 1)..n {
                let (ja, jb) = (nodes[a], nodes[b]);
                let state = if ja < jb {
                    self.edge(ja, jb)
                } else {
                    invert_relation_state(self.edge(jb, ja))
                };
                out.relations[edge_index(n, a, b)] = state;
            }
        }
        out
    }
}

/// Applies the relation inverse to a real relation state; empty and mask
/// states pass through.
pub fn invert_relation_state(state: usize) -> usize {
    match RelationLabel::from_index(state) {
        Some(label) => label.inverse().index(),
        None => state,
    }
}

/// Derives the semantic graph of a scene in its current object order.
pub fn derive_semantic_graph(scene: &Scene, codebook: &Codebook, config: &SceneConfig) -> Result<SemanticGraph> {
    let spaces = config.spaces();
    if codebook.codes_per_feature() != config.codes_per_object {
        return Err(Error::DimensionMismatch {
            expected: config.codes_per_object,
            found: codebook.codes_per_feature(),
        });
    }
    let n = scene.objects.len();
    let mut graph = SemanticGraph::filled(spaces, n, |k| spaces.empty(k));
    for (j, obj) in scene.objects.iter().enumerate() {
        if obj.category >= spaces.categories {
            return Err(Error::OutOfRange {
                label: obj.category,
                size: spaces.categories,
            });
        }
        graph.categories[j] = obj.category;
        let codes = match &obj.codes {
            Some(c) => {
                if c.len() != spaces.codes_per_object {
                    return Err(Error::DimensionMismatch {
                        expected: spaces.codes_per_object,
                        found: c.len(),
                    });
                }
                c.clone()
            }
            None => codebook.encode(&obj.feature)?,
        };
        let nf = spaces.codes_per_object;
        graph.codes[j * nf..(j + 1) * nf].copy_from_slice(&codes);
    }
    let relations = extract_relations(scene);
    graph.relations = relations.labels().iter().map(|r| r.index()).collect();
    Ok(graph)
}

/// Appends empty slots up to `max_nodes`.
pub fn pad_graph(graph: &SemanticGraph, max_nodes: usize) -> Result<SemanticGraph> {
    let n = graph.num_nodes();
    if n > max_nodes {
        return Err(Error::invalid(format!("graph has {n} nodes, more than the {max_nodes} slots")));
    }
    let spaces = graph.spaces;
    let mut out = SemanticGraph::filled(spaces, max_nodes, |k| spaces.empty(k));
    out.categories[..n].copy_from_slice(&graph.categories);
    out.codes[..graph.codes.len()].copy_from_slice(&graph.codes);
    for j in 0..n {
        for k in (j + 1)..n {
            out.relations[edge_index(max_nodes, j, k)] = graph.edge(j, k);
        }
    }
    Ok(out)
}

/// Moves the attributes of slot `j` to slot `perm[j]`. Relations whose
/// endpoint order flips are stored as their inverse.
pub fn permute_graph(graph: &SemanticGraph, perm: &[usize]) -> Result<SemanticGraph> {
    let n = graph.num_nodes();
    check_permutation(perm, n)?;
    let mut inverse = vec![0; n];
    for (old, &new) in perm.iter().enumerate() {
        inverse[new] = old;
    }
    Ok(graph.select_nodes(&inverse))
}

pub(crate) fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    if perm.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: perm.len(),
        });
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || seen[p] {
            return Err(Error::invalid(format!("{perm:?} is not a permutation of 0..{n}")));
        }
        seen[p] = true;
    }
    Ok(())
}

/// Original object indices listed in canonical order: by category, then
/// location `(x, y, z)` lexicographically, then asset id, then original
/// position.
pub fn canonical_order(scene: &Scene) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scene.objects.len()).collect();
    order.sort_by(|&a, &b| {
        let (oa, ob) = (&scene.objects[a], &scene.objects[b]);
        oa.category
            .cmp(&ob.category)
            .then_with(|| {
                oa.location
                    .iter()
                    .zip(ob.location.iter())
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| *o != Ordering::Equal)
                    .unwrap_or(Ordering::Equal)
            })
            .then_with(|| oa.asset_id.cmp(&ob.asset_id))
    });
    order
}

/// Number of layout columns: location (3), size (3), cos r, sin r.
pub const LAYOUT_DIM: usize = 8;

/// Per-object layout rows `(t_x, t_y, t_z, s_x, s_y, s_z, cos r, sin r)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayoutMatrix {
    pub rows: Vec<[f64; LAYOUT_DIM]>,
}

impl LayoutMatrix {
    pub fn zeros(n: usize) -> Self {
        LayoutMatrix {
            rows: vec![[0.0; LAYOUT_DIM]; n],
        }
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn from_scene(scene: &Scene) -> Self {
        LayoutMatrix {
            rows: scene.objects.iter().map(layout_row).collect(),
        }
    }
}

pub fn layout_row(o: &ObjectInstance) -> [f64; LAYOUT_DIM] {
    let (sin, cos) = o.rotation.sin_cos();
    [
        o.location[0],
        o.location[1],
        o.location[2],
        o.size[0],
        o.size[1],
        o.size[2],
        cos,
        sin,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantizer::Codebook;

    fn config() -> SceneConfig {
        SceneConfig {
            codebook_size: 2,
            codes_per_object: 1,
            feature_dim: 1,
            max_objects: 4,
            ..SceneConfig::desk_default()
        }
    }

    fn codebook() -> Codebook {
        Codebook::new(vec![vec![0.0], vec![1.0]], 1).unwrap()
    }

    fn floor_obj(cat: usize, x: f64, y: f64) -> ObjectInstance {
        ObjectInstance::new(cat, [x, y, 0.3], [0.5, 0.5, 0.6], 0.0, vec![0.0])
    }

    #[test]
    fn bed_and_nightstand_graph() {
        let cfg = config();
        let scene = Scene::new(
            "s",
            vec![floor_obj(1, -2.0, 0.0), floor_obj(0, 0.0, 0.0)],
        );
        let g = derive_semantic_graph(&scene, &codebook(), &cfg).unwrap();
        assert_eq!(g.relations, vec![RelationLabel::LeftOf.index()]);
        assert_eq!(g.relation(1, 0), Some(RelationLabel::RightOf));
    }

    #[test]
    fn single_object_has_no_edges_and_far_pair_is_none() {
        let cfg = config();
        let g = derive_semantic_graph(&Scene::new("a", vec![floor_obj(0, 0.0, 0.0)]), &codebook(), &cfg).unwrap();
        assert_eq!(g.num_nodes(), 1);
        assert!(g.relations.is_empty());
        let far = Scene::new("b", vec![floor_obj(0, 0.0, 0.0), floor_obj(1, 5.0, 0.0)]);
        let g = derive_semantic_graph(&far, &codebook(), &cfg).unwrap();
        assert_eq!(g.relations, vec![RelationLabel::None.index()]);
    }

    #[test]
    fn feature_dimension_mismatch_is_an_error() {
        let cfg = config();
        let mut o = floor_obj(0, 0.0, 0.0);
        o.feature = vec![0.0, 1.0];
        assert!(derive_semantic_graph(&Scene::new("x", vec![o]), &codebook(), &cfg).is_err());
    }

    #[test]
    fn padding() {
        let cfg = config();
        let scene = Scene::new(
            "s",
            vec![floor_obj(0, 0.0, 0.0), floor_obj(1, 2.0, 0.0), floor_obj(2, 0.0, 2.0)],
        );
        let g = derive_semantic_graph(&scene, &codebook(), &cfg).unwrap();
        let p = pad_graph(&g, 4).unwrap();
        assert!(p.is_empty_node(3));
        assert_eq!(p.codes_of(3), &[cfg.spaces().empty(VarKind::Code)]);
        let e = cfg.spaces().empty(VarKind::Relation);
        assert_eq!((0..3).filter(|&j| p.edge(j, 3) == e).count(), 3);
        for j in 0..3 {
            for k in (j + 1)..3 {
                assert_eq!(p.edge(j, k), g.edge(j, k));
            }
        }
        p.validate(false).unwrap();
        assert_eq!(pad_graph(&p, 4).unwrap(), p);
        assert_eq!(pad_graph(&g, 3).unwrap(), g);
        let five = pad_graph(&p, 5).unwrap();
        assert!(pad_graph(&five, 4).is_err());
        assert_eq!(p.compact(), g);
    }

    #[test]
    fn swapping_two_slots_inverts_their_relation() {
        let cfg = config();
        let scene = Scene::new("s", vec![floor_obj(0, -2.0, 0.0), floor_obj(1, 0.0, 0.0)]);
        let g = derive_semantic_graph(&scene, &codebook(), &cfg).unwrap();
        assert_eq!(g.edge(0, 1), RelationLabel::LeftOf.index());
        let swapped = permute_graph(&g, &[1, 0]).unwrap();
        assert_eq!(swapped.edge(0, 1), RelationLabel::RightOf.index());
        assert_eq!(swapped.categories, vec![1, 0]);
        assert_eq!(permute_graph(&swapped, &[1, 0]).unwrap(), g);
        assert_eq!(permute_graph(&g, &[0, 1]).unwrap(), g);
        assert!(permute_graph(&g, &[0, 0]).is_err());
        assert!(permute_graph(&g, &[0]).is_err());
    }

    #[test]
    fn canonical_order_sorts_by_category_then_position_then_id() {
        let a = floor_obj(1, 1.0, 0.0).with_asset("a");
        let b = floor_obj(1, 0.0, 0.0).with_asset("b");
        let c = floor_obj(0, 5.0, 0.0).with_asset("c");
        let scene = Scene::new("s", vec![a.clone(), b.clone(), c.clone()]);
        assert_eq!(canonical_order(&scene), vec![2, 1, 0]);
        let sorted = Scene::new("s", vec![c, b, a]);
        assert_eq!(canonical_order(&sorted), vec![0, 1, 2]);
        let d1 = floor_obj(0, 0.0, 0.0).with_asset("z");
        let d2 = floor_obj(0, 0.0, 0.0).with_asset("y");
        assert_eq!(canonical_order(&Scene::new("d", vec![d1, d2])), vec![1, 0]);
    }

    #[test]
    fn angles_wrap_into_half_open_interval() {
        use std::f64::consts::PI;
        assert_eq!(normalize_angle(PI), -PI);
        assert!((normalize_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert_eq!(normalize_angle(0.25), 0.25);
    }
}
