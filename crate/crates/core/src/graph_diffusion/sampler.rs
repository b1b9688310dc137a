//! Forward corruption and the reverse chain over semantic graphs.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instruction::Instruction;
use crate::relation::edge_index;
use crate::rng::sample_index;
use crate::scene::{SemanticGraph, VarKind};

use super::denoiser::{GraphDenoiser, SlotDistributions};
use super::embedding::reverse_sample_embedded;
use super::posterior::fill_unnormalized;
use super::schedule::{GraphSchedule, KernelKind, MaskSchedule};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GuidanceConfig {
    pub scale: f64,
    /// Fraction of training examples whose instruction is dropped; kept for
    /// reporting, the exact denoisers need no training.
    pub uncond_dropout: f64,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        GuidanceConfig {
            scale: 0.0,
            uncond_dropout: 0.2,
        }
    }
}

impl GuidanceConfig {
    pub fn with_scale(scale: f64) -> Self {
        GuidanceConfig {
            scale,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale.is_finite() && self.scale >= 0.0) {
            return Err(Error::invalid(format!("guidance scale must be finite and >= 0, got {}", self.scale)));
        }
        if !(0.0..=1.0).contains(&self.uncond_dropout) {
            return Err(Error::invalid("unconditional dropout must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// `(1 + s)·p_cond − s·p_uncond`, negatives clamped to zero, renormalized.
pub fn apply_cfg(p_cond: &[f64], p_uncond: &[f64], scale: f64) -> Result<Vec<f64>> {
    if p_cond.len() != p_uncond.len() {
        return Err(Error::DimensionMismatch {
            expected: p_cond.len(),
            found: p_uncond.len(),
        });
    }
    if scale == 0.0 || p_cond == p_uncond {
        return Ok(p_cond.to_vec());
    }
    let raw: Vec<f64> = p_cond
        .iter()
        .zip(p_uncond)
        .map(|(c, u)| ((1.0 + scale) * c - scale * u).max(0.0))
        .collect();
    let total: f64 = raw.iter().sum();
    if total <= 0.0 {
        return Err(Error::ImpossiblePosterior("guided distribution is all zero".into()));
    }
    Ok(raw.into_iter().map(|x| x / total).collect())
}

/// Draws `x_t ~ Q̄_t[·, x0]`.
pub fn forward_sample<R: Rng + ?Sized>(x0: usize, t: usize, schedule: &MaskSchedule, rng: &mut R) -> Result<usize> {
    schedule.check_step(t, true)?;
    schedule.check_state(x0)?;
    if t == 0 {
        return Ok(x0);
    }
    Ok(sample_index(&schedule.qbar(t).column(x0), rng).expect("columns sum to one"))
}

fn sample_not_mask<R: Rng + ?Sized>(x0: usize, t: usize, schedule: &MaskSchedule, rng: &mut R) -> usize {
    let mut col = schedule.qbar(t).column(x0);
    col[schedule.mask_state()] = 0.0;
    sample_index(&col, rng).unwrap_or(x0)
}

/// Corrupts a clean graph to step `t` under the schedule's kernel.
pub fn forward_sample_graph<R: Rng + ?Sized>(
    graph: &SemanticGraph,
    t: usize,
    schedule: &GraphSchedule,
    rng: &mut R,
) -> Result<SemanticGraph> {
    let mut out = graph.clone();
    match schedule.kernel {
        KernelKind::IndependentMask | KernelKind::Uniform => {
            for kind in VarKind::ALL {
                let s = schedule.get(kind);
                for x in out.entries_mut(kind).iter_mut() {
                    *x = forward_sample(*x, t, s, rng)?;
                }
            }
        }
        KernelKind::JointMask => {
            schedule.category.check_step(t, true)?;
            let n = graph.num_nodes();
            let nf = graph.spaces.codes_per_object;
            let cat = &schedule.category;
            let masked: Vec<bool> = (0..n)
                .map(|j| rng.random::<f64>() < cat.qbar(t).prob(cat.mask_state(), graph.categories[j]))
                .collect();
            for j in 0..n {
                for (kind, e) in std::iter::once((VarKind::Category, j)).chain((0..nf).map(|m| (VarKind::Code, j * nf + m))) {
                    let s = schedule.get(kind);
                    let x0 = graph.entries(kind)[e];
                    out.entries_mut(kind)[e] = if masked[j] {
                        s.mask_state()
                    } else {
                        sample_not_mask(x0, t, s, rng)
                    };
                }
            }
            let s = &schedule.relation;
            for a in 0..n {
                for b in (a + 1)..n {
                    let e = edge_index(n, a, b);
                    out.relations[e] = if masked[a] || masked[b] {
                        s.mask_state()
                    } else {
                        sample_not_mask(graph.relations[e], t, s, rng)
                    };
                }
            }
        }
        KernelKind::GaussianEmbedding => {
            return Err(Error::Unsupported(
                "the Gaussian-embedding kernel has continuous states; use EmbeddedGraph::noised".into(),
            ))
        }
    }
    Ok(out)
}

/// One reverse step of a single entry: draw a clean value from the
/// prediction restricted to values that can produce `x_t`, then draw
/// `x_{t-1}` from the true posterior. Averaged over the clean draw this is
/// exactly the model posterior.
fn step_entry<R: Rng + ?Sized>(
    s: &MaskSchedule,
    x_t: usize,
    p: &[f64],
    t: usize,
    forbid_mask: bool,
    scratch: &mut Vec<f64>,
    rng: &mut R,
) -> Result<usize> {
    let qbar = s.qbar(t);
    scratch.clear();
    scratch.extend(p.iter().enumerate().map(|(x0, &w)| if qbar.prob(x_t, x0) > 0.0 { w } else { 0.0 }));
    let x0 = match sample_index(scratch, rng) {
        Some(x0) => x0,
        None => {
            log::debug!("prediction has no mass on values consistent with state {x_t} at t = {t}");
            for (x0, w) in scratch.iter_mut().enumerate() {
                *w = if qbar.prob(x_t, x0) > 0.0 { 1.0 } else { 0.0 };
            }
            sample_index(scratch, rng).ok_or_else(|| {
                Error::ImpossiblePosterior(format!("state {x_t} is unreachable from every clean value"))
            })?
        }
    };
    scratch.clear();
    scratch.resize(s.num_states(), 0.0);
    fill_unnormalized(scratch, x_t, x0, t, s);
    if forbid_mask {
        scratch[s.mask_state()] = 0.0;
    }
    sample_index(scratch, rng).ok_or_else(|| Error::ImpossiblePosterior(format!("no successor for state {x_t} at t = {t}")))
}

fn guided_prediction(
    denoiser: &dyn GraphDenoiser,
    state: &SemanticGraph,
    instr: Option<&Instruction>,
    guidance: &GuidanceConfig,
    t: usize,
) -> Result<SlotDistributions> {
    let mut p = denoiser.predict(state, instr, t)?;
    if instr.is_some() && guidance.scale > 0.0 {
        let pu = denoiser.predict(state, None, t)?;
        for kind in VarKind::ALL {
            for e in 0..p.num_entries(kind) {
                let mixed = apply_cfg(p.get(kind, e), pu.get(kind, e), guidance.scale)?;
                p.get_mut(kind, e).copy_from_slice(&mixed);
            }
        }
    }
    Ok(p)
}

fn is_frozen(frozen: Option<&SemanticGraph>, kind: VarKind, e: usize) -> bool {
    frozen.is_some_and(|f| f.entries(kind)[e] != f.spaces.mask(kind))
}

/// Samples a mask-free graph of `n_max` slots. Non-mask entries of `frozen`
/// are held at their values throughout.
pub fn reverse_sample<R: Rng + ?Sized>(
    denoiser: &dyn GraphDenoiser,
    instr: Option<&Instruction>,
    guidance: &GuidanceConfig,
    schedule: &GraphSchedule,
    n_max: usize,
    rng: &mut R,
    frozen: Option<&SemanticGraph>,
) -> Result<SemanticGraph> {
    guidance.validate()?;
    let spaces = schedule.spaces;
    if denoiser.spaces() != spaces {
        return Err(Error::invalid("denoiser and schedule disagree on the state spaces"));
    }
    if let Some(f) = frozen {
        if f.num_nodes() != n_max || f.spaces != spaces {
            return Err(Error::invalid("frozen graph shape differs from the sampled graph"));
        }
        f.validate(true)?;
    }
    let instr = instr.filter(|i| !i.is_unconditional());
    if schedule.kernel == KernelKind::GaussianEmbedding {
        return reverse_sample_embedded(denoiser, instr, guidance, schedule, n_max, rng, frozen);
    }
    let mut state = match frozen {
        Some(f) => f.clone(),
        None => SemanticGraph::all_mask(spaces, n_max),
    };
    if schedule.kernel == KernelKind::Uniform {
        for kind in VarKind::ALL {
            let mask = spaces.mask(kind);
            for x in state.entries_mut(kind).iter_mut().filter(|x| **x == mask) {
                *x = rng.random_range(0..=spaces.real(kind));
            }
        }
    }
    let mut scratch = Vec::new();
    for t in (1..=schedule.steps()).rev() {
        let p = guided_prediction(denoiser, &state, instr, guidance, t)?;
        if t == 1 {
            return decode_final(&state, &p, true, schedule, rng, frozen);
        }
        state = match schedule.kernel {
            KernelKind::JointMask => joint_step(&state, &p, t, schedule, rng, frozen, &mut scratch)?,
            _ => {
                let mut next = state.clone();
                for kind in VarKind::ALL {
                    let s = schedule.get(kind);
                    for (e, &x_t) in state.entries(kind).iter().enumerate() {
                        if !is_frozen(frozen, kind, e) {
                            next.entries_mut(kind)[e] = step_entry(s, x_t, p.get(kind, e), t, false, &mut scratch, rng)?;
                        }
                    }
                }
                next
            }
        };
    }
    unreachable!("the loop returns at t = 1")
}

fn joint_step<R: Rng + ?Sized>(
    state: &SemanticGraph,
    p: &SlotDistributions,
    t: usize,
    schedule: &GraphSchedule,
    rng: &mut R,
    frozen: Option<&SemanticGraph>,
    scratch: &mut Vec<f64>,
) -> Result<SemanticGraph> {
    let spaces = state.spaces;
    let n = state.num_nodes();
    let nf = spaces.codes_per_object;
    let cat = &schedule.category;
    let mask_c = cat.mask_state();
    // Probability that a masked node was already unmasked one step earlier,
    // for a real clean value (the same for every real value).
    let stay = cat.q(t).prob(mask_c, mask_c) * cat.qbar(t - 1).prob(mask_c, 0) / cat.qbar(t).prob(mask_c, 0);
    let unmask_prob = 1.0 - stay;
    let was_masked: Vec<bool> = state.categories.iter().map(|&c| c == mask_c).collect();
    let mut next = state.clone();
    for j in 0..n {
        let node_reveal = was_masked[j] && !is_frozen(frozen, VarKind::Category, j) && rng.random::<f64>() < unmask_prob;
        let entries = std::iter::once((VarKind::Category, j)).chain((0..nf).map(|m| (VarKind::Code, j * nf + m)));
        for (kind, e) in entries {
            if is_frozen(frozen, kind, e) {
                continue;
            }
            let s = schedule.get(kind);
            let x_t = state.entries(kind)[e];
            next.entries_mut(kind)[e] = if was_masked[j] && x_t == s.mask_state() {
                if node_reveal {
                    step_entry(s, x_t, p.get(kind, e), t, true, scratch, rng)?
                } else {
                    x_t
                }
            } else {
                step_entry(s, x_t, p.get(kind, e), t, false, scratch, rng)?
            };
        }
    }
    let s = &schedule.relation;
    for a in 0..n {
        for b in (a + 1)..n {
            let e = edge_index(n, a, b);
            if is_frozen(frozen, VarKind::Relation, e) {
                continue;
            }
            let x_t = state.relations[e];
            next.relations[e] = if x_t == s.mask_state() && (was_masked[a] || was_masked[b]) {
                if next.categories[a] != mask_c && next.categories[b] != mask_c {
                    step_entry(s, x_t, p.get(VarKind::Relation, e), t, true, scratch, rng)?
                } else {
                    x_t
                }
            } else {
                step_entry(s, x_t, p.get(VarKind::Relation, e), t, false, scratch, rng)?
            };
        }
    }
    Ok(next)
}

/// Final clean draw. Categories are drawn first; codes and edges are then
/// restricted to the empty-node convention. With `use_state`, clean values
/// that cannot produce the step-1 state are excluded where possible.
pub(crate) fn decode_final<R: Rng + ?Sized>(
    state: &SemanticGraph,
    p: &SlotDistributions,
    use_state: bool,
    schedule: &GraphSchedule,
    rng: &mut R,
    frozen: Option<&SemanticGraph>,
) -> Result<SemanticGraph> {
    let spaces = state.spaces;
    let n = state.num_nodes();
    let nf = spaces.codes_per_object;
    let mut out = state.clone();
    let draw = |kind: VarKind, e: usize, allowed: &dyn Fn(usize) -> bool, rng: &mut R| -> usize {
        let s = schedule.get(kind);
        let x_t = state.entries(kind)[e];
        let probs = p.get(kind, e);
        let consistent = |x0: usize| !use_state || s.qbar(1).prob(x_t, x0) > 0.0;
        let tiers: [&dyn Fn(usize) -> f64; 3] = [
            &|x0| if allowed(x0) && consistent(x0) { probs[x0] } else { 0.0 },
            &|x0| if allowed(x0) { probs[x0] } else { 0.0 },
            &|x0| if allowed(x0) { 1.0 } else { 0.0 },
        ];
        for (level, weight) in tiers.iter().enumerate() {
            let w: Vec<f64> = (0..probs.len()).map(weight).collect();
            if let Some(x) = sample_index(&w, rng) {
                if level > 0 {
                    log::debug!("final decode relaxed to level {level} for {kind:?} entry {e}");
                }
                return x;
            }
        }
        unreachable!("every entry allows at least one clean value")
    };
    let empty_c = spaces.empty(VarKind::Category);
    for j in 0..n {
        if !is_frozen(frozen, VarKind::Category, j) {
            out.categories[j] = draw(VarKind::Category, j, &|_| true, rng);
        }
    }
    for j in 0..n {
        let empty = out.categories[j] == empty_c;
        let code_empty = spaces.empty(VarKind::Code);
        for m in 0..nf {
            let e = j * nf + m;
            if !is_frozen(frozen, VarKind::Code, e) {
                out.codes[e] = draw(VarKind::Code, e, &|x| (x == code_empty) == empty, rng);
            }
        }
    }
    let rel_empty = spaces.empty(VarKind::Relation);
    for a in 0..n {
        for b in (a + 1)..n {
            let e = edge_index(n, a, b);
            if is_frozen(frozen, VarKind::Relation, e) {
                continue;
            }
            let empty = out.categories[a] == empty_c || out.categories[b] == empty_c;
            out.relations[e] = draw(VarKind::Relation, e, &|x| (x == rel_empty) == empty, rng);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph_diffusion::denoiser::EmpiricalDenoiser;
    use crate::graph_diffusion::schedule::ScheduleOptions;
    use crate::relation::RelationLabel;
    use crate::scene::GraphSpaces;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    #[test]
    fn cfg_examples() {
        assert_eq!(apply_cfg(&[0.8, 0.2], &[0.5, 0.5], 0.0).unwrap(), vec![0.8, 0.2]);
        assert_eq!(apply_cfg(&[0.3, 0.7], &[0.3, 0.7], 4.0).unwrap(), vec![0.3, 0.7]);
        let g = apply_cfg(&[0.8, 0.2], &[0.5, 0.5], 1.0).unwrap();
        assert_eq!(g, vec![1.0, 0.0]);
        assert!(apply_cfg(&[0.0, 0.0], &[0.5, 0.5], 2.0).is_err());
    }

    fn spaces() -> GraphSpaces {
        GraphSpaces {
            categories: 3,
            codes: 4,
            relations: 11,
            codes_per_object: 2,
        }
    }

    fn sample_graph() -> SemanticGraph {
        let mut g = SemanticGraph::filled(spaces(), 3, |k| spaces().empty(k));
        g.categories = vec![0, 2, 3];
        g.codes = vec![1, 3, 0, 0, 4, 4];
        g.relations = vec![RelationLabel::Behind.index(), 11, 11];
        g
    }

    #[test]
    fn single_graph_is_reproduced_by_every_mask_kernel() {
        let g = sample_graph();
        g.validate(false).unwrap();
        for kernel in KernelKind::ALL {
            let opts = ScheduleOptions {
                leak: 0.0,
                freeze_empty: false,
            };
            let sched = Arc::new(GraphSchedule::new(12, spaces(), kernel, opts).unwrap());
            let den = EmpiricalDenoiser::new(std::slice::from_ref(&g), sched.clone()).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            for _ in 0..20 {
                let out = reverse_sample(&den, None, &GuidanceConfig::default(), &sched, 3, &mut rng, None).unwrap();
                assert_eq!(out, g, "{kernel:?}");
            }
        }
    }

    #[test]
    fn frozen_entries_are_kept() {
        let g = sample_graph();
        let sched = Arc::new(GraphSchedule::new(10, spaces(), KernelKind::IndependentMask, ScheduleOptions::default()).unwrap());
        let den = EmpiricalDenoiser::new(std::slice::from_ref(&g), sched.clone()).unwrap();
        let mut frozen = SemanticGraph::all_mask(spaces(), 3);
        frozen.categories[0] = 0;
        frozen.codes[0] = 1;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let out = reverse_sample(&den, None, &GuidanceConfig::default(), &sched, 3, &mut rng, Some(&frozen)).unwrap();
        assert_eq!(out.categories[0], 0);
        assert_eq!(out.codes[0], 1);
        assert!(!out.has_mask());
    }

    #[test]
    fn forward_sampling_edges() {
        let s = crate::graph_diffusion::schedule::build_schedule(5, 3, KernelKind::IndependentMask, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(forward_sample(2, 0, &s, &mut rng).unwrap(), 2);
        assert_eq!(forward_sample(4, 3, &s, &mut rng).unwrap(), 4);
        assert_eq!(forward_sample(1, 5, &s, &mut rng).unwrap(), 4);
        assert!(forward_sample(1, 6, &s, &mut rng).is_err());
    }
}
