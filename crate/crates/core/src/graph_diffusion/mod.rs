//! Discrete diffusion over semantic graphs.

mod bound;
mod denoiser;
mod embedding;
mod posterior;
mod sampler;
mod schedule;

pub use bound::{bound_terms, variational_bound, LossWeights};
pub use denoiser::{EmpiricalDenoiser, GraphDenoiser, SlotDistributions, UniformDenoiser, MAX_VARIANTS};
pub use embedding::{
    class_posterior, gaussian_model_posterior, gaussian_true_posterior, reverse_sample_embedded, EmbeddedGraph,
    GaussianPosterior,
};
pub use posterior::{model_posterior, true_posterior};
pub use sampler::{apply_cfg, forward_sample, forward_sample_graph, reverse_sample, GuidanceConfig};
pub use schedule::{
    build_schedule, build_schedule_with, GraphSchedule, KernelKind, MaskSchedule, ScheduleDump, ScheduleOptions,
    Transition, DEFAULT_LEAK,
};
