//! Clean-graph predictors: the exact empirical-Bayes denoiser and simple
//! baselines.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::instruction::{instruction_matches_unchecked, Instruction};
use crate::scene::{GraphSpaces, SemanticGraph, VarKind};

use super::embedding::EmbeddedGraph;
use super::schedule::GraphSchedule;

/// Cap on node-alignment variants generated per dataset graph when the
/// denoiser is aligned to a partially frozen graph.
pub const MAX_VARIANTS: usize = 64;

/// Per-entry distributions over clean values `0..=K` (real values, then
/// empty). Never carries mass on the mask state.
#[derive(Clone, Debug, PartialEq)]
pub struct SlotDistributions {
    pub spaces: GraphSpaces,
    pub num_nodes: usize,
    data: [Vec<f64>; 3],
}

fn kind_index(kind: VarKind) -> usize {
    match kind {
        VarKind::Category => 0,
        VarKind::Code => 1,
        VarKind::Relation => 2,
    }
}

impl SlotDistributions {
    pub fn zeros(spaces: GraphSpaces, num_nodes: usize) -> Self {
        let shape = SemanticGraph::filled(spaces, num_nodes, |_| 0);
        let data = VarKind::ALL.map(|k| vec![0.0; shape.entries(k).len() * (spaces.real(k) + 1)]);
        SlotDistributions {
            spaces,
            num_nodes,
            data,
        }
    }

    pub fn width(&self, kind: VarKind) -> usize {
        self.spaces.real(kind) + 1
    }

    pub fn num_entries(&self, kind: VarKind) -> usize {
        self.data[kind_index(kind)].len() / self.width(kind)
    }

    pub fn get(&self, kind: VarKind, entry: usize) -> &[f64] {
        let w = self.width(kind);
        &self.data[kind_index(kind)][entry * w..(entry + 1) * w]
    }

    pub fn get_mut(&mut self, kind: VarKind, entry: usize) -> &mut [f64] {
        let w = self.width(kind);
        &mut self.data[kind_index(kind)][entry * w..(entry + 1) * w]
    }

    /// Checks that every distribution is finite, non-negative and sums to 1.
    pub fn validate(&self) -> Result<()> {
        for kind in VarKind::ALL {
            for e in 0..self.num_entries(kind) {
                let p = self.get(kind, e);
                let total: f64 = p.iter().sum();
                if p.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || (total - 1.0).abs() > 1e-9 {
                    return Err(Error::invalid(format!("{kind:?} entry {e} is not a distribution")));
                }
            }
        }
        Ok(())
    }
}

/// Predicts per-entry clean-value distributions from a noisy graph state.
pub trait GraphDenoiser: Send + Sync {
    fn spaces(&self) -> GraphSpaces;

    fn predict(&self, state: &SemanticGraph, instr: Option<&Instruction>, t: usize) -> Result<SlotDistributions>;

    /// Prediction from a Gaussian-embedded state; only needed by the
    /// Gaussian-embedding kernel.
    fn predict_embedded(&self, _state: &EmbeddedGraph, _instr: Option<&Instruction>, _t: usize) -> Result<SlotDistributions> {
        Err(Error::Unsupported("this denoiser has no embedded-state prediction".into()))
    }
}

/// Predicts the uniform distribution over clean values for every entry.
#[derive(Clone, Copy, Debug)]
pub struct UniformDenoiser {
    pub spaces: GraphSpaces,
}

impl GraphDenoiser for UniformDenoiser {
    fn spaces(&self) -> GraphSpaces {
        self.spaces
    }

    fn predict(&self, state: &SemanticGraph, _instr: Option<&Instruction>, _t: usize) -> Result<SlotDistributions> {
        let mut out = SlotDistributions::zeros(self.spaces, state.num_nodes());
        for kind in VarKind::ALL {
            let w = out.width(kind);
            for e in 0..out.num_entries(kind) {
                out.get_mut(kind, e).fill(1.0 / w as f64);
            }
        }
        Ok(out)
    }

    fn predict_embedded(&self, state: &EmbeddedGraph, instr: Option<&Instruction>, t: usize) -> Result<SlotDistributions> {
        let shape = SemanticGraph::filled(self.spaces, state.num_nodes, |_| 0);
        self.predict(&shape, instr, t)
    }
}

/// Exact posterior mean of the clean graph under the empirical distribution
/// of a finite dataset. Conditioning on an instruction restricts the
/// dataset to graphs that satisfy it.
pub struct EmpiricalDenoiser {
    schedule: Arc<GraphSchedule>,
    graphs: Vec<SemanticGraph>,
    weights: Vec<f64>,
    /// Per kind: `(T + 1) × S × S` table of `ln Q̄_t[x_t, x_0]`.
    ln_qbar: [Vec<f64>; 3],
    filters: Mutex<HashMap<Instruction, Arc<Vec<usize>>>>,
}

impl std::fmt::Debug for EmpiricalDenoiser {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EmpiricalDenoiser")
            .field("support", &self.graphs.len())
            .finish()
    }
}

impl EmpiricalDenoiser {
    /// Builds the denoiser from padded clean graphs; duplicates are merged
    /// into weights.
    pub fn new(dataset: &[SemanticGraph], schedule: Arc<GraphSchedule>) -> Result<Self> {
        let mut index: HashMap<&SemanticGraph, usize> = HashMap::new();
        let mut graphs = Vec::new();
        let mut weights = Vec::new();
        for g in dataset {
            match index.get(g) {
                Some(&i) => weights[i] += 1.0,
                None => {
                    index.insert(g, graphs.len());
                    graphs.push(g.clone());
                    weights.push(1.0);
                }
            }
        }
        Self::from_weighted(graphs, weights, schedule)
    }

    pub fn from_weighted(graphs: Vec<SemanticGraph>, weights: Vec<f64>, schedule: Arc<GraphSchedule>) -> Result<Self> {
        if graphs.is_empty() {
            return Err(Error::invalid("empirical denoiser needs a non-empty dataset"));
        }
        if graphs.len() != weights.len() || weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::invalid("weights must be positive, one per graph"));
        }
        let n = graphs[0].num_nodes();
        for g in &graphs {
            if g.spaces != schedule.spaces {
                return Err(Error::invalid("dataset graph spaces differ from the schedule"));
            }
            if g.num_nodes() != n {
                return Err(Error::invalid("all dataset graphs must be padded to the same slot count"));
            }
            g.validate(false)?;
        }
        let ln_qbar = VarKind::ALL.map(|kind| {
            let s = schedule.get(kind);
            let m = s.num_states();
            let mut table = Vec::with_capacity((s.steps + 1) * m * m);
            for t in 0..=s.steps {
                let q = s.qbar(t);
                for x_t in 0..m {
                    for x0 in 0..m {
                        table.push(q.prob(x_t, x0).ln());
                    }
                }
            }
            table
        });
        Ok(EmpiricalDenoiser {
            schedule,
            graphs,
            weights,
            ln_qbar,
            filters: Mutex::new(HashMap::new()),
        })
    }

    pub fn support(&self) -> &[SemanticGraph] {
        &self.graphs
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn num_slots(&self) -> usize {
        self.graphs[0].num_nodes()
    }

    pub fn schedule(&self) -> &Arc<GraphSchedule> {
        &self.schedule
    }

    /// Indices of support graphs satisfying the instruction.
    pub fn matching(&self, instr: Option<&Instruction>) -> Result<Arc<Vec<usize>>> {
        let instr = match instr {
            Some(i) if !i.is_unconditional() => i,
            _ => return Ok(Arc::new((0..self.graphs.len()).collect())),
        };
        let mut cache = self.filters.lock().expect("filter cache lock");
        if let Some(hit) = cache.get(instr) {
            return Ok(Arc::clone(hit));
        }
        let idx: Vec<usize> = (0..self.graphs.len())
            .filter(|&i| instruction_matches_unchecked(&self.graphs[i], instr))
            .collect();
        if idx.is_empty() {
            return Err(Error::unsatisfiable(
                "instruction-filter",
                "no dataset graph satisfies the instruction",
            ));
        }
        let idx = Arc::new(idx);
        cache.insert(instr.clone(), Arc::clone(&idx));
        Ok(idx)
    }

    /// Normalized posterior weights `(support index, weight)` over the
    /// matching graphs given the noisy state at step `t`.
    pub fn posterior_weights(&self, state: &SemanticGraph, instr: Option<&Instruction>, t: usize) -> Result<Vec<(usize, f64)>> {
        if t > self.schedule.steps() {
            return Err(Error::invalid(format!("step {t} outside 0..={}", self.schedule.steps())));
        }
        if state.num_nodes() != self.num_slots() || state.spaces != self.schedule.spaces {
            return Err(Error::invalid("state shape differs from the dataset graphs"));
        }
        let idx = self.matching(instr)?;
        let mut logw: Vec<f64> = idx.iter().map(|&i| self.log_likelihood(state, i, t, false)).collect();
        if logw.iter().all(|l| *l == f64::NEG_INFINITY) {
            // No matching graph can produce the state. Keep the graphs that
            // disagree on the fewest entries and score the rest of the
            // entries; this only happens after per-entry sampling combined
            // incompatible values.
            let misses: Vec<usize> = idx.iter().map(|&i| self.impossible_entries(state, i, t)).collect();
            let best = *misses.iter().min().expect("non-empty");
            log::debug!("denoiser fallback at t = {t}: {best} impossible entries");
            logw = idx
                .iter()
                .zip(&misses)
                .map(|(&i, &m)| {
                    if m == best {
                        self.log_likelihood(state, i, t, true)
                    } else {
                        f64::NEG_INFINITY
                    }
                })
                .collect();
        }
        let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut out: Vec<(usize, f64)> = idx
            .iter()
            .zip(&logw)
            .map(|(&i, &l)| (i, self.weights[i] * (l - max).exp()))
            .filter(|(_, w)| *w > 0.0)
            .collect();
        let total: f64 = out.iter().map(|(_, w)| w).sum();
        for (_, w) in &mut out {
            *w /= total;
        }
        Ok(out)
    }

    fn ln_q(&self, kind: VarKind, t: usize, x_t: usize, x0: usize) -> f64 {
        let m = self.schedule.spaces.states(kind);
        self.ln_qbar[kind_index(kind)][(t * m + x_t) * m + x0]
    }

    fn log_likelihood(&self, state: &SemanticGraph, i: usize, t: usize, skip_impossible: bool) -> f64 {
        let g = &self.graphs[i];
        let mut total = 0.0;
        for kind in VarKind::ALL {
            for (&x_t, &x0) in state.entries(kind).iter().zip(g.entries(kind)) {
                let l = self.ln_q(kind, t, x_t, x0);
                if l == f64::NEG_INFINITY {
                    if skip_impossible {
                        continue;
                    }
                    return l;
                }
                total += l;
            }
        }
        total
    }

    fn impossible_entries(&self, state: &SemanticGraph, i: usize, t: usize) -> usize {
        let g = &self.graphs[i];
        VarKind::ALL
            .iter()
            .map(|&kind| {
                state
                    .entries(kind)
                    .iter()
                    .zip(g.entries(kind))
                    .filter(|(&x_t, &x0)| self.ln_q(kind, t, x_t, x0) == f64::NEG_INFINITY)
                    .count()
            })
            .sum()
    }

    fn marginals(&self, weights: &[(usize, f64)]) -> SlotDistributions {
        let mut out = SlotDistributions::zeros(self.schedule.spaces, self.num_slots());
        for &(i, w) in weights {
            let g = &self.graphs[i];
            for kind in VarKind::ALL {
                for (e, &x0) in g.entries(kind).iter().enumerate() {
                    out.get_mut(kind, e)[x0] += w;
                }
            }
        }
        out
    }

    /// Posterior weights for a Gaussian-embedded state.
    pub fn posterior_weights_embedded(
        &self,
        state: &EmbeddedGraph,
        instr: Option<&Instruction>,
        t: usize,
    ) -> Result<Vec<(usize, f64)>> {
        let gs = self
            .schedule
            .category
            .gaussian
            .as_ref()
            .ok_or_else(|| Error::Unsupported("schedule is not a Gaussian-embedding kernel".into()))?;
        if state.num_nodes != self.num_slots() {
            return Err(Error::invalid("state shape differs from the dataset graphs"));
        }
        let idx = self.matching(instr)?;
        let ab = gs.alpha_bar(t);
        let scale = ab.sqrt() / (1.0 - ab);
        let logw: Vec<f64> = idx
            .iter()
            .map(|&i| {
                let g = &self.graphs[i];
                let dot: f64 = VarKind::ALL
                    .iter()
                    .map(|&kind| {
                        g.entries(kind)
                            .iter()
                            .enumerate()
                            .map(|(e, &x0)| state.get(kind, e)[x0])
                            .sum::<f64>()
                    })
                    .sum();
                self.weights[i].ln() + scale * dot
            })
            .collect();
        let w = crate::layout_diffusion::softmax(&logw);
        Ok(idx.iter().copied().zip(w).filter(|(_, w)| *w > 0.0).collect())
    }

    /// Denoiser over a dataset of node-aligned variants of every support
    /// graph: frozen slots (non-mask categories in `frozen`) are filled with
    /// same-category nodes of the graph, the remaining nodes keep their
    /// relative order in the free slots. Each variant carries the full
    /// weight of its source graph.
    pub fn aligned_to(&self, frozen: &SemanticGraph) -> Result<EmpiricalDenoiser> {
        let n = self.num_slots();
        if frozen.num_nodes() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: frozen.num_nodes(),
            });
        }
        let mask = frozen.spaces.mask(VarKind::Category);
        let fixed: Vec<usize> = (0..n).filter(|&j| frozen.categories[j] != mask).collect();
        let free: Vec<usize> = (0..n).filter(|&j| frozen.categories[j] == mask).collect();
        if fixed.is_empty() {
            return Self::from_weighted(self.graphs.clone(), self.weights.clone(), Arc::clone(&self.schedule));
        }
        let mut index: HashMap<SemanticGraph, usize> = HashMap::new();
        let mut graphs = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        for (g, &w) in self.graphs.iter().zip(&self.weights) {
            let mut assignments = Vec::new();
            assign_slots(g, frozen, &fixed, &mut vec![false; n], &mut Vec::new(), &mut assignments);
            for chosen in assignments {
                // chosen[i] = source node placed in slot fixed[i].
                let mut order = vec![usize::MAX; n];
                for (&slot, &src) in fixed.iter().zip(&chosen) {
                    order[slot] = src;
                }
                let rest: Vec<usize> = {
                    let mut r: Vec<usize> = (0..n).filter(|s| !chosen.contains(s)).collect();
                    r.sort_by_key(|&s| g.is_empty_node(s));
                    r
                };
                for (&slot, &src) in free.iter().zip(&rest) {
                    order[slot] = src;
                }
                let variant = g.select_nodes(&order);
                match index.get(&variant) {
                    Some(&i) => weights[i] += w,
                    None => {
                        index.insert(variant.clone(), graphs.len());
                        graphs.push(variant);
                        weights.push(w);
                    }
                }
            }
        }
        if graphs.is_empty() {
            return Err(Error::unsatisfiable(
                "frozen-alignment",
                "no dataset graph contains the frozen objects",
            ));
        }
        Self::from_weighted(graphs, weights, Arc::clone(&self.schedule))
    }
}

fn assign_slots(
    g: &SemanticGraph,
    frozen: &SemanticGraph,
    fixed: &[usize],
    used: &mut Vec<bool>,
    current: &mut Vec<usize>,
    out: &mut Vec<Vec<usize>>,
) {
    if out.len() >= MAX_VARIANTS {
        return;
    }
    let depth = current.len();
    if depth == fixed.len() {
        out.push(current.clone());
        return;
    }
    let want = frozen.categories[fixed[depth]];
    for s in 0..g.num_nodes() {
        if used[s] || g.categories[s] != want {
            continue;
        }
        used[s] = true;
        current.push(s);
        assign_slots(g, frozen, fixed, used, current, out);
        current.pop();
        used[s] = false;
    }
}

impl GraphDenoiser for EmpiricalDenoiser {
    fn spaces(&self) -> GraphSpaces {
        self.schedule.spaces
    }

    fn predict(&self, state: &SemanticGraph, instr: Option<&Instruction>, t: usize) -> Result<SlotDistributions> {
        let w = self.posterior_weights(state, instr, t)?;
        Ok(self.marginals(&w))
    }

    fn predict_embedded(&self, state: &EmbeddedGraph, instr: Option<&Instruction>, t: usize) -> Result<SlotDistributions> {
        let w = self.posterior_weights_embedded(state, instr, t)?;
        Ok(self.marginals(&w))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph_diffusion::schedule::{KernelKind, ScheduleOptions};
    use crate::instruction::Triplet;
    use crate::relation::RelationLabel;

    fn spaces() -> GraphSpaces {
        GraphSpaces {
            categories: 3,
            codes: 2,
            relations: 11,
            codes_per_object: 1,
        }
    }

    fn two_node(a: usize, b: usize, code: usize, rel: RelationLabel) -> SemanticGraph {
        let mut g = SemanticGraph::filled(spaces(), 2, |_| 0);
        g.categories = vec![a, b];
        g.codes = vec![code, code];
        g.relations = vec![rel.index()];
        g
    }

    fn schedule() -> Arc<GraphSchedule> {
        Arc::new(GraphSchedule::new(10, spaces(), KernelKind::IndependentMask, ScheduleOptions::default()).unwrap())
    }

    #[test]
    fn all_mask_gives_dataset_marginals() {
        let data = vec![
            two_node(0, 1, 0, RelationLabel::LeftOf),
            two_node(0, 1, 1, RelationLabel::LeftOf),
            two_node(0, 2, 1, RelationLabel::Above),
            two_node(0, 2, 1, RelationLabel::Above),
        ];
        let den = EmpiricalDenoiser::new(&data, schedule()).unwrap();
        let state = SemanticGraph::all_mask(spaces(), 2);
        let p = den.predict(&state, None, 10).unwrap();
        p.validate().unwrap();
        assert!((p.get(VarKind::Category, 1)[1] - 0.5).abs() < 1e-12);
        assert!((p.get(VarKind::Category, 1)[2] - 0.5).abs() < 1e-12);
        assert!((p.get(VarKind::Code, 0)[1] - 0.75).abs() < 1e-12);

        let instr = Instruction::from_triplets(vec![Triplet::new(0, RelationLabel::LeftOf, 1)]);
        let p = den.predict(&state, Some(&instr), 10).unwrap();
        assert!((p.get(VarKind::Code, 0)[0] - 0.5).abs() < 1e-12);
        assert!((p.get(VarKind::Category, 1)[1] - 1.0).abs() < 1e-12);

        let none = Instruction::from_triplets(vec![Triplet::new(2, RelationLabel::Below, 1)]);
        assert!(matches!(den.predict(&state, Some(&none), 10), Err(Error::Unsatisfiable { .. })));
    }

    #[test]
    fn single_graph_predicts_point_masses() {
        let g = two_node(2, 0, 1, RelationLabel::Behind);
        let den = EmpiricalDenoiser::new(std::slice::from_ref(&g), schedule()).unwrap();
        let p = den.predict(&SemanticGraph::all_mask(spaces(), 2), None, 4).unwrap();
        assert_eq!(p.get(VarKind::Relation, 0)[RelationLabel::Behind.index()], 1.0);
    }

    #[test]
    fn alignment_moves_frozen_category_first() {
        let g = two_node(0, 1, 0, RelationLabel::LeftOf);
        let den = EmpiricalDenoiser::new(std::slice::from_ref(&g), schedule()).unwrap();
        let mut frozen = SemanticGraph::all_mask(spaces(), 2);
        frozen.categories[0] = 1;
        let aligned = den.aligned_to(&frozen).unwrap();
        assert_eq!(aligned.support().len(), 1);
        let v = &aligned.support()[0];
        assert_eq!(v.categories, vec![1, 0]);
        assert_eq!(v.relation(1, 0), Some(RelationLabel::LeftOf));
        frozen.categories[0] = 2;
        assert!(den.aligned_to(&frozen).is_err());
    }
}
