//! Monte Carlo estimate of the weighted variational bound of the graph prior.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instruction::Instruction;
use crate::scene::{SemanticGraph, VarKind};

use super::denoiser::GraphDenoiser;
use super::embedding::EmbeddedGraph;
use super::posterior::{model_posterior, true_posterior};
use super::sampler::forward_sample_graph;
use super::schedule::{GraphSchedule, KernelKind};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_f: f64,
    pub lambda_e: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_f: 1.0,
            lambda_e: 10.0,
        }
    }
}

impl LossWeights {
    /// Category term only; used to inspect the terms separately.
    pub fn categories_only() -> Self {
        LossWeights {
            lambda_f: 0.0,
            lambda_e: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_f.is_finite() && self.lambda_f >= 0.0 && self.lambda_e.is_finite() && self.lambda_e >= 0.0) {
            return Err(Error::invalid("loss weights must be finite and non-negative"));
        }
        Ok(())
    }

    fn of(&self, kind: VarKind) -> f64 {
        match kind {
            VarKind::Category => 1.0,
            VarKind::Code => self.lambda_f,
            VarKind::Relation => self.lambda_e,
        }
    }
}

fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(a, _)| **a > 0.0)
        .map(|(a, b)| if *b > 0.0 { a * (a / b).ln() } else { f64::INFINITY })
        .sum()
}

/// Per-kind bound terms `[category, code, relation]`, each summed over
/// steps `1..=T` and entries and averaged over `n_mc` draws.
pub fn bound_terms<R: Rng + ?Sized>(
    denoiser: &dyn GraphDenoiser,
    graph: &SemanticGraph,
    instr: Option<&Instruction>,
    schedule: &GraphSchedule,
    rng: &mut R,
    n_mc: usize,
) -> Result<[f64; 3]> {
    if n_mc == 0 {
        return Err(Error::invalid("n_mc must be at least 1"));
    }
    graph.validate(false)?;
    let mut terms = [0.0; 3];
    for _ in 0..n_mc {
        for t in 1..=schedule.steps() {
            let step = if schedule.kernel == KernelKind::GaussianEmbedding {
                gaussian_terms(denoiser, graph, instr, schedule, t, rng)?
            } else {
                discrete_terms(denoiser, graph, instr, schedule, t, rng)?
            };
            for (acc, v) in terms.iter_mut().zip(step) {
                *acc += v;
            }
        }
    }
    Ok(terms.map(|v| v / n_mc as f64))
}

fn discrete_terms<R: Rng + ?Sized>(
    denoiser: &dyn GraphDenoiser,
    graph: &SemanticGraph,
    instr: Option<&Instruction>,
    schedule: &GraphSchedule,
    t: usize,
    rng: &mut R,
) -> Result<[f64; 3]> {
    let state = forward_sample_graph(graph, t, schedule, rng)?;
    let p = denoiser.predict(&state, instr, t)?;
    let mut out = [0.0; 3];
    for (k, kind) in VarKind::ALL.into_iter().enumerate() {
        let s = schedule.get(kind);
        for (e, (&x_t, &x0)) in state.entries(kind).iter().zip(graph.entries(kind)).enumerate() {
            let model = model_posterior(x_t, p.get(kind, e), t, s)?;
            out[k] += if t == 1 {
                -model[x0].ln()
            } else {
                kl(&true_posterior(x_t, x0, t, s)?, &model)
            };
        }
    }
    Ok(out)
}

fn gaussian_terms<R: Rng + ?Sized>(
    denoiser: &dyn GraphDenoiser,
    graph: &SemanticGraph,
    instr: Option<&Instruction>,
    schedule: &GraphSchedule,
    t: usize,
    rng: &mut R,
) -> Result<[f64; 3]> {
    let gs = schedule
        .category
        .gaussian
        .as_ref()
        .ok_or_else(|| Error::Unsupported("schedule is not a Gaussian-embedding kernel".into()))?;
    let state = EmbeddedGraph::noised(graph, t, gs, rng);
    let p = denoiser.predict_embedded(&state, instr, t)?;
    // Both posteriors share the variance β̃_t and differ in mean by
    // c0·(onehot(x0) − p), so the KL is a scaled squared distance.
    let (ab, ab_prev, beta) = (gs.alpha_bar(t), gs.alpha_bar(t - 1), gs.beta(t));
    let c0 = ab_prev.sqrt() * beta / (1.0 - ab);
    let mut out = [0.0; 3];
    for (k, kind) in VarKind::ALL.into_iter().enumerate() {
        for (e, &x0) in graph.entries(kind).iter().enumerate() {
            let pe = p.get(kind, e);
            out[k] += if t == 1 {
                -pe[x0].ln()
            } else {
                let d2: f64 = pe
                    .iter()
                    .enumerate()
                    .map(|(i, v)| (if i == x0 { 1.0 } else { 0.0 } - v).powi(2))
                    .sum();
                c0 * c0 * d2 / (2.0 * gs.beta_tilde(t))
            };
        }
    }
    Ok(out)
}

/// `L^C + λ_f·L^F + λ_e·L^E`, each term the sum of per-step KL divergences
/// between true and model posteriors plus the reconstruction negative
/// log-likelihood at `t = 1`. The constant prior term is left out.
pub fn variational_bound<R: Rng + ?Sized>(
    denoiser: &dyn GraphDenoiser,
    graph: &SemanticGraph,
    instr: Option<&Instruction>,
    schedule: &GraphSchedule,
    weights: &LossWeights,
    rng: &mut R,
    n_mc: usize,
) -> Result<f64> {
    weights.validate()?;
    let terms = bound_terms(denoiser, graph, instr, schedule, rng, n_mc)?;
    Ok(VarKind::ALL.into_iter().zip(terms).map(|(k, v)| weights.of(k) * v).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph_diffusion::denoiser::{EmpiricalDenoiser, UniformDenoiser};
    use crate::graph_diffusion::schedule::ScheduleOptions;
    use crate::scene::GraphSpaces;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn spaces() -> GraphSpaces {
        GraphSpaces {
            categories: 2,
            codes: 2,
            relations: 11,
            codes_per_object: 1,
        }
    }

    fn graph(c: usize) -> SemanticGraph {
        let mut g = SemanticGraph::filled(spaces(), 2, |_| 0);
        g.categories = vec![c, 1];
        g.codes = vec![c, 0];
        g.relations = vec![3];
        g
    }

    #[test]
    fn exact_single_graph_bound_vanishes() {
        let opts = ScheduleOptions {
            leak: 0.0,
            freeze_empty: false,
        };
        let sched = Arc::new(GraphSchedule::new(6, spaces(), KernelKind::IndependentMask, opts).unwrap());
        let g = graph(0);
        let den = EmpiricalDenoiser::new(std::slice::from_ref(&g), sched.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b = variational_bound(&den, &g, None, &sched, &LossWeights::default(), &mut rng, 3).unwrap();
        assert!(b.abs() <= 1e-9, "{b}");
    }

    #[test]
    fn uniform_denoiser_bound_is_positive_and_weights_combine() {
        let sched = Arc::new(GraphSchedule::new(6, spaces(), KernelKind::IndependentMask, ScheduleOptions::default()).unwrap());
        let g = graph(1);
        let den = UniformDenoiser { spaces: spaces() };
        let w = LossWeights::default();
        let terms = bound_terms(&den, &g, None, &sched, &mut ChaCha8Rng::seed_from_u64(4), 2).unwrap();
        assert!(terms.iter().all(|v| *v > 0.0));
        let b = variational_bound(&den, &g, None, &sched, &w, &mut ChaCha8Rng::seed_from_u64(4), 2).unwrap();
        assert!((b - (terms[0] + terms[1] + 10.0 * terms[2])).abs() < 1e-9);
        let c = variational_bound(&den, &g, None, &sched, &LossWeights::categories_only(), &mut ChaCha8Rng::seed_from_u64(4), 2).unwrap();
        assert!((c - terms[0]).abs() < 1e-9);
    }
}
