//! Gaussian-embedding kernel: every categorical entry is a one-hot vector
//! over its `K + 1` clean values (real values and empty), diffused with the
//! same variance-preserving Gaussian process as layouts.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::instruction::Instruction;
use crate::layout_diffusion::GaussianSchedule;
use crate::scene::{GraphSpaces, SemanticGraph, VarKind};

use super::denoiser::{GraphDenoiser, SlotDistributions};
use super::sampler::{apply_cfg, decode_final, GuidanceConfig};
use super::schedule::GraphSchedule;

/// Continuous state of a graph under the Gaussian-embedding kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddedGraph {
    pub spaces: GraphSpaces,
    pub num_nodes: usize,
    data: [Vec<f64>; 3],
}

fn slot(kind: VarKind) -> usize {
    match kind {
        VarKind::Category => 0,
        VarKind::Code => 1,
        VarKind::Relation => 2,
    }
}

impl EmbeddedGraph {
    pub fn zeros(spaces: GraphSpaces, num_nodes: usize) -> Self {
        let shape = SemanticGraph::filled(spaces, num_nodes, |_| 0);
        EmbeddedGraph {
            spaces,
            num_nodes,
            data: VarKind::ALL.map(|k| vec![0.0; shape.entries(k).len() * (spaces.real(k) + 1)]),
        }
    }

    pub fn width(&self, kind: VarKind) -> usize {
        self.spaces.real(kind) + 1
    }

    pub fn num_entries(&self, kind: VarKind) -> usize {
        self.data[slot(kind)].len() / self.width(kind)
    }

    pub fn get(&self, kind: VarKind, entry: usize) -> &[f64] {
        let w = self.width(kind);
        &self.data[slot(kind)][entry * w..(entry + 1) * w]
    }

    pub fn get_mut(&mut self, kind: VarKind, entry: usize) -> &mut [f64] {
        let w = self.width(kind);
        &mut self.data[slot(kind)][entry * w..(entry + 1) * w]
    }

    /// Forward sample `√ᾱ_t onehot(G) + √(1-ᾱ_t) ε` of a clean graph.
    pub fn noised<R: Rng + ?Sized>(graph: &SemanticGraph, t: usize, schedule: &GaussianSchedule, rng: &mut R) -> Self {
        let mut out = EmbeddedGraph::zeros(graph.spaces, graph.num_nodes());
        for kind in VarKind::ALL {
            for (e, &x0) in graph.entries(kind).iter().enumerate() {
                noise_entry(out.get_mut(kind, e), x0, schedule.alpha_bar(t), rng);
            }
        }
        out
    }
}

fn noise_entry<R: Rng + ?Sized>(v: &mut [f64], x0: usize, alpha_bar: f64, rng: &mut R) {
    let (a, b) = (alpha_bar.sqrt(), (1.0 - alpha_bar).sqrt());
    for (i, x) in v.iter_mut().enumerate() {
        let e: f64 = rng.sample(StandardNormal);
        *x = if i == x0 { a } else { 0.0 } + b * e;
    }
}

/// Isotropic Gaussian over one embedded entry.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPosterior {
    pub mean: Vec<f64>,
    pub var: f64,
}

fn posterior_coefficients(t: usize, schedule: &GaussianSchedule) -> (f64, f64) {
    let (ab, ab_prev, beta) = (schedule.alpha_bar(t), schedule.alpha_bar(t - 1), schedule.beta(t));
    let c0 = ab_prev.sqrt() * beta / (1.0 - ab);
    let ct = (1.0 - beta).sqrt() * (1.0 - ab_prev) / (1.0 - ab);
    (c0, ct)
}

fn check_step(t: usize, schedule: &GaussianSchedule) -> Result<()> {
    if t == 0 || t > schedule.steps {
        return Err(Error::invalid(format!("step {t} outside 1..={}", schedule.steps)));
    }
    Ok(())
}

/// `q(x_{t-1} | x_t, x_0)` for one embedded entry with clean value `x0`.
pub fn gaussian_true_posterior(x_t: &[f64], x0: usize, t: usize, schedule: &GaussianSchedule) -> Result<GaussianPosterior> {
    check_step(t, schedule)?;
    if x0 >= x_t.len() {
        return Err(Error::OutOfRange {
            label: x0,
            size: x_t.len(),
        });
    }
    let (c0, ct) = posterior_coefficients(t, schedule);
    let mean = x_t
        .iter()
        .enumerate()
        .map(|(i, x)| ct * x + if i == x0 { c0 } else { 0.0 })
        .collect();
    Ok(GaussianPosterior {
        mean,
        var: schedule.beta_tilde(t),
    })
}

/// Model step with the predicted clean distribution `p_x0` plugged in for
/// the one-hot clean value; the mean is linear in the clean vector, so this
/// is the mean of the mixture of true posteriors.
pub fn gaussian_model_posterior(x_t: &[f64], p_x0: &[f64], t: usize, schedule: &GaussianSchedule) -> Result<GaussianPosterior> {
    check_step(t, schedule)?;
    if p_x0.len() != x_t.len() {
        return Err(Error::DimensionMismatch {
            expected: x_t.len(),
            found: p_x0.len(),
        });
    }
    let (c0, ct) = posterior_coefficients(t, schedule);
    Ok(GaussianPosterior {
        mean: x_t.iter().zip(p_x0).map(|(x, p)| ct * x + c0 * p).collect(),
        var: schedule.beta_tilde(t),
    })
}

/// `p(x_0 = k | x_t)` for one entry with prior `prior`.
pub fn class_posterior(x_t: &[f64], prior: &[f64], t: usize, schedule: &GaussianSchedule) -> Result<Vec<f64>> {
    check_step(t, schedule)?;
    if prior.len() != x_t.len() {
        return Err(Error::DimensionMismatch {
            expected: x_t.len(),
            found: prior.len(),
        });
    }
    let ab = schedule.alpha_bar(t);
    let scale = ab.sqrt() / (1.0 - ab);
    let logw: Vec<f64> = prior
        .iter()
        .zip(x_t)
        .map(|(p, x)| if *p > 0.0 { p.ln() + scale * x } else { f64::NEG_INFINITY })
        .collect();
    Ok(crate::layout_diffusion::softmax(&logw))
}

/// Reverse chain of the Gaussian-embedding kernel. Frozen entries are
/// re-noised from their clean values at every step.
pub fn reverse_sample_embedded<R: Rng + ?Sized>(
    denoiser: &dyn GraphDenoiser,
    instr: Option<&Instruction>,
    guidance: &GuidanceConfig,
    schedule: &GraphSchedule,
    n_max: usize,
    rng: &mut R,
    frozen: Option<&SemanticGraph>,
) -> Result<SemanticGraph> {
    let gs = schedule
        .category
        .gaussian
        .as_ref()
        .ok_or_else(|| Error::Unsupported("schedule is not a Gaussian-embedding kernel".into()))?;
    let spaces = schedule.spaces;
    let mut state = EmbeddedGraph::zeros(spaces, n_max);
    for kind in VarKind::ALL {
        for e in 0..state.num_entries(kind) {
            for x in state.get_mut(kind, e) {
                *x = rng.sample(StandardNormal);
            }
        }
    }
    let clamp = |state: &mut EmbeddedGraph, t: usize, rng: &mut R| {
        if let Some(f) = frozen {
            for kind in VarKind::ALL {
                let mask = spaces.mask(kind);
                for (e, &v) in f.entries(kind).iter().enumerate() {
                    if v != mask {
                        noise_entry(state.get_mut(kind, e), v, gs.alpha_bar(t), rng);
                    }
                }
            }
        }
    };
    clamp(&mut state, gs.steps, rng);
    let conditional = instr.filter(|i| !i.is_unconditional());
    let mut last: Option<SlotDistributions> = None;
    for t in (1..=gs.steps).rev() {
        let mut p = denoiser.predict_embedded(&state, conditional, t)?;
        if let (Some(_), true) = (conditional, guidance.scale > 0.0) {
            let pu = denoiser.predict_embedded(&state, None, t)?;
            for kind in VarKind::ALL {
                for e in 0..p.num_entries(kind) {
                    let mixed = apply_cfg(p.get(kind, e), pu.get(kind, e), guidance.scale)?;
                    p.get_mut(kind, e).copy_from_slice(&mixed);
                }
            }
        }
        if t == 1 {
            last = Some(p);
            break;
        }
        let sigma = gs.beta_tilde(t).sqrt();
        for kind in VarKind::ALL {
            for e in 0..state.num_entries(kind) {
                let post = gaussian_model_posterior(state.get(kind, e), p.get(kind, e), t, gs)?;
                for (x, m) in state.get_mut(kind, e).iter_mut().zip(post.mean) {
                    *x = m + sigma * rng.sample::<f64, _>(StandardNormal);
                }
            }
        }
        clamp(&mut state, t - 1, rng);
    }
    let p = last.expect("at least one step");
    // The final mean is the predicted clean distribution itself; decode it
    // with the empty-node convention, keeping frozen entries.
    let mut base = SemanticGraph::all_mask(spaces, n_max);
    if let Some(f) = frozen {
        base = f.clone();
    }
    decode_final(&base, &p, false, schedule, rng, frozen)
}
