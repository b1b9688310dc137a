//! Transition schedules for one categorical variable.
//!
//! States are `0..K` (real), `K` (empty) and `K + 1` (mask). Matrices are
//! column-stochastic: `prob(to, from)` is the probability of moving from
//! `from` to `to` in one step (or `t` steps for the cumulative matrices).

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scene::{GraphSpaces, VarKind};

use crate::layout_diffusion::GaussianSchedule;

pub const DEFAULT_LEAK: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    /// Every entry is masked independently; small uniform leak among real
    /// values.
    IndependentMask,
    /// No mask state; entries drift towards the uniform distribution over
    /// real and empty values.
    Uniform,
    /// Per-variable matrices as `IndependentMask`, but one mask event per
    /// node masks its category, codes and incident edges together.
    JointMask,
    /// One-hot vectors diffused with Gaussian noise.
    GaussianEmbedding,
}

impl KernelKind {
    pub const ALL: [KernelKind; 4] = [
        KernelKind::IndependentMask,
        KernelKind::Uniform,
        KernelKind::JointMask,
        KernelKind::GaussianEmbedding,
    ];

    pub fn uses_mask(self) -> bool {
        matches!(self, KernelKind::IndependentMask | KernelKind::JointMask)
    }
}

impl std::str::FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "independent-mask" | "mask" => Ok(KernelKind::IndependentMask),
            "uniform" => Ok(KernelKind::Uniform),
            "joint-mask" => Ok(KernelKind::JointMask),
            "gaussian-embedding" | "gaussian" => Ok(KernelKind::GaussianEmbedding),
            other => Err(Error::invalid(format!("unknown kernel '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleOptions {
    pub leak: f64,
    /// Keep the empty state out of the forward process entirely.
    pub freeze_empty: bool,
}

impl Default for ScheduleOptions {
    fn default() -> Self {
        ScheduleOptions {
            leak: DEFAULT_LEAK,
            freeze_empty: false,
        }
    }
}

/// Square column-stochastic matrix over the `K + 2` states.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    n: usize,
    data: Vec<f64>,
}

impl Transition {
    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Transition { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn prob(&self, to: usize, from: usize) -> f64 {
        self.data[to * self.n + from]
    }

    fn set(&mut self, to: usize, from: usize, p: f64) {
        self.data[to * self.n + from] = p;
    }

    pub fn column(&self, from: usize) -> Vec<f64> {
        (0..self.n).map(|to| self.prob(to, from)).collect()
    }

    /// `self · other` (apply `other` first).
    pub fn matmul(&self, other: &Transition) -> Transition {
        let n = self.n;
        let mut out = Transition {
            n,
            data: vec![0.0; n * n],
        };
        for i in 0..n {
            for k in 0..n {
                let a = self.prob(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other.prob(k, j);
                }
            }
        }
        out
    }

    pub fn as_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.n).map(<[f64]>::to_vec).collect()
    }
}

/// Per-step parameters and matrices for one variable kind.
#[derive(Clone, Debug)]
pub struct MaskSchedule {
    pub steps: usize,
    pub num_real: usize,
    pub kernel: KernelKind,
    pub options: ScheduleOptions,
    /// Index `t - 1` holds step `t`.
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    q: Vec<Transition>,
    /// Index `t` holds `Q̄_t`, with `Q̄_0 = I`.
    qbar: Vec<Transition>,
    /// Present for the Gaussian-embedding kernel.
    pub gaussian: Option<GaussianSchedule>,
}

impl MaskSchedule {
    pub fn empty_state(&self) -> usize {
        self.num_real
    }

    pub fn mask_state(&self) -> usize {
        self.num_real + 1
    }

    pub fn num_states(&self) -> usize {
        self.num_real + 2
    }

    /// One-step matrix `Q_t`, `1 <= t <= T`.
    pub fn q(&self, t: usize) -> &Transition {
        &self.q[t - 1]
    }

    /// Cumulative matrix `Q̄_t`, `0 <= t <= T`.
    pub fn qbar(&self, t: usize) -> &Transition {
        &self.qbar[t]
    }

    pub(crate) fn check_step(&self, t: usize, allow_zero: bool) -> Result<()> {
        let lo = usize::from(!allow_zero);
        if t < lo || t > self.steps {
            return Err(Error::invalid(format!("step {t} outside {lo}..={}", self.steps)));
        }
        Ok(())
    }

    pub(crate) fn check_state(&self, x: usize) -> Result<()> {
        if x >= self.num_states() {
            return Err(Error::OutOfRange {
                label: x,
                size: self.num_states(),
            });
        }
        Ok(())
    }
}

/// Reproducibility record of a schedule: per-step parameters and a digest
/// of the terminal cumulative matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleDump {
    pub steps: usize,
    pub num_real: usize,
    pub kernel: KernelKind,
    pub leak: f64,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub qbar_terminal_sha256: String,
}

impl MaskSchedule {
    pub fn dump(&self) -> ScheduleDump {
        let mut h = Sha256::new();
        for row in self.qbar(self.steps).as_rows() {
            for x in row {
                h.update(x.to_le_bytes());
            }
        }
        ScheduleDump {
            steps: self.steps,
            num_real: self.num_real,
            kernel: self.kernel,
            leak: self.options.leak,
            alpha: self.alpha.clone(),
            beta: self.beta.clone(),
            gamma: self.gamma.clone(),
            qbar_terminal_sha256: hex::encode(h.finalize()),
        }
    }
}

pub fn build_schedule(steps: usize, num_real: usize, kernel: KernelKind, leak: f64) -> Result<MaskSchedule> {
    build_schedule_with(
        steps,
        num_real,
        kernel,
        ScheduleOptions {
            leak,
            ..ScheduleOptions::default()
        },
    )
}

pub fn build_schedule_with(
    steps: usize,
    num_real: usize,
    kernel: KernelKind,
    options: ScheduleOptions,
) -> Result<MaskSchedule> {
    if steps == 0 || num_real == 0 {
        return Err(Error::invalid("schedules need T >= 1 and K >= 1"));
    }
    if !(options.leak >= 0.0 && options.leak.is_finite()) {
        return Err(Error::invalid(format!("leak must be finite and >= 0, got {}", options.leak)));
    }
    let k = num_real;
    let n = k + 2;
    let (empty, mask) = (k, k + 1);
    let mut alpha = Vec::with_capacity(steps);
    let mut beta = Vec::with_capacity(steps);
    let mut gamma = Vec::with_capacity(steps);
    let mut q = Vec::with_capacity(steps);
    for t in 1..=steps {
        let remaining = (steps - t + 1) as f64;
        let mut m = Transition {
            n,
            data: vec![0.0; n * n],
        };
        let (a, b, g) = match kernel {
            KernelKind::Uniform | KernelKind::GaussianEmbedding => {
                let a = (remaining - 1.0) / remaining;
                let b = (1.0 - a) / (k + 1) as f64;
                for from in 0..=k {
                    for to in 0..=k {
                        m.set(to, from, b + if to == from { a } else { 0.0 });
                    }
                }
                (a, b, 0.0)
            }
            KernelKind::IndependentMask | KernelKind::JointMask => {
                let g = 1.0 / remaining;
                let b = (1.0 - g) * options.leak / k as f64;
                let a = 1.0 - g - k as f64 * b;
                if a < -1e-15 {
                    return Err(Error::invalid(format!(
                        "leak {} makes alpha negative at step {t}",
                        options.leak
                    )));
                }
                let a = a.max(0.0);
                for from in 0..k {
                    for to in 0..k {
                        m.set(to, from, b + if to == from { a } else { 0.0 });
                    }
                    m.set(mask, from, g);
                }
                if options.freeze_empty {
                    m.set(empty, empty, 1.0);
                } else {
                    m.set(empty, empty, 1.0 - g);
                    m.set(mask, empty, g);
                }
                (a, b, g)
            }
        };
        m.set(mask, mask, 1.0);
        alpha.push(a);
        beta.push(b);
        gamma.push(g);
        q.push(m);
    }
    let mut qbar = vec![Transition::identity(n)];
    for step in &q {
        let next = step.matmul(qbar.last().expect("non-empty"));
        qbar.push(next);
    }
    let gaussian = (kernel == KernelKind::GaussianEmbedding).then(|| GaussianSchedule::cosine(steps));
    Ok(MaskSchedule {
        steps,
        num_real,
        kernel,
        options,
        alpha,
        beta,
        gamma,
        q,
        qbar,
        gaussian,
    })
}

/// The three per-kind schedules of a semantic graph.
#[derive(Clone, Debug)]
pub struct GraphSchedule {
    pub kernel: KernelKind,
    pub spaces: GraphSpaces,
    pub category: MaskSchedule,
    pub code: MaskSchedule,
    pub relation: MaskSchedule,
}

impl GraphSchedule {
    pub fn new(steps: usize, spaces: GraphSpaces, kernel: KernelKind, options: ScheduleOptions) -> Result<Self> {
        Ok(GraphSchedule {
            kernel,
            spaces,
            category: build_schedule_with(steps, spaces.categories, kernel, options)?,
            code: build_schedule_with(steps, spaces.codes, kernel, options)?,
            relation: build_schedule_with(steps, spaces.relations, kernel, options)?,
        })
    }

    pub fn steps(&self) -> usize {
        self.category.steps
    }

    pub fn get(&self, kind: VarKind) -> &MaskSchedule {
        match kind {
            VarKind::Category => &self.category,
            VarKind::Code => &self.code,
            VarKind::Relation => &self.relation,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_step_hand_product() {
        let s = build_schedule(2, 2, KernelKind::IndependentMask, 0.0).unwrap();
        let q1 = s.qbar(1);
        assert_eq!(q1.prob(0, 0), 0.5);
        assert_eq!(q1.prob(3, 0), 0.5);
        assert_eq!(q1.prob(1, 0), 0.0);
        assert_eq!(q1.prob(2, 2), 0.5);
        let q2 = s.qbar(2);
        for from in 0..4 {
            assert_eq!(q2.prob(3, from), 1.0);
        }
    }

    #[test]
    fn columns_are_stochastic_and_mask_absorbs() {
        for kernel in KernelKind::ALL {
            for &(t, k, leak) in &[(1, 1, 0.0), (5, 3, 0.01), (13, 7, 0.3), (100, 16, 0.01)] {
                let s = build_schedule(t, k, kernel, leak).unwrap();
                for step in 1..=t {
                    for m in [s.q(step), s.qbar(step)] {
                        for from in 0..k + 2 {
                            let total: f64 = m.column(from).iter().sum();
                            assert!((total - 1.0).abs() < 1e-12);
                        }
                        assert_eq!(m.prob(k + 1, k + 1), 1.0);
                    }
                    let chained = s.q(step).matmul(s.qbar(step - 1));
                    for to in 0..k + 2 {
                        for from in 0..k + 2 {
                            assert!((chained.prob(to, from) - s.qbar(step).prob(to, from)).abs() < 1e-12);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn terminal_is_all_mask() {
        let s = build_schedule(100, 8, KernelKind::IndependentMask, DEFAULT_LEAK).unwrap();
        for from in 0..10 {
            assert!(s.qbar(100).prob(9, from) >= 0.999);
        }
        let at_half = s.qbar(50).prob(9, 0);
        assert!((at_half - 0.5).abs() < 1e-12);
    }

    #[test]
    fn uniform_terminal_is_exactly_uniform() {
        let s = build_schedule(10, 3, KernelKind::Uniform, 0.0).unwrap();
        for from in 0..4 {
            for to in 0..4 {
                assert!((s.qbar(10).prob(to, from) - 0.25).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn excessive_leak_is_rejected() {
        assert!(build_schedule(4, 3, KernelKind::IndependentMask, 1.5).is_err());
        assert!(build_schedule(0, 3, KernelKind::IndependentMask, 0.0).is_err());
    }

    #[test]
    fn frozen_empty_never_masks() {
        let opts = ScheduleOptions {
            leak: 0.0,
            freeze_empty: true,
        };
        let s = build_schedule_with(5, 2, KernelKind::IndependentMask, opts).unwrap();
        assert_eq!(s.qbar(5).prob(2, 2), 1.0);
    }
}
