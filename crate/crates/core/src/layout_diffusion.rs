//! Variance-preserving Gaussian diffusion over per-object layout rows,
//! conditioned on a semantic graph through an ε-predictor.
//!
//! Layouts are diffused in standardized coordinates (per-column z-scores);
//! rotation is carried as `(cos r, sin r)` and projected back onto the unit
//! circle after sampling.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{LayoutMatrix, SemanticGraph, LAYOUT_DIM};

/// Offset of the cosine schedule.
const COSINE_OFFSET: f64 = 0.008;
const MAX_BETA: f64 = 0.999;
/// Cap on node alignments considered per dataset layout.
pub const MAX_ALIGNMENTS: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianSchedule {
    pub steps: usize,
    /// Index `t`, with `alpha_bar[0] = 1`.
    pub alpha_bar: Vec<f64>,
    /// Index `t - 1`.
    pub beta: Vec<f64>,
    /// Posterior variance, index `t - 1`.
    pub beta_tilde: Vec<f64>,
}

impl GaussianSchedule {
    /// Cosine schedule. Per-step betas are clipped to `(0, 0.999]` and the
    /// cumulative products recomputed from the clipped values so that
    /// `ᾱ_t = ᾱ_{t-1}(1 - β_t)` holds exactly.
    pub fn cosine(steps: usize) -> Self {
        let f = |t: usize| {
            let x = (t as f64 / steps as f64 + COSINE_OFFSET) / (1.0 + COSINE_OFFSET) * PI / 2.0;
            x.cos().powi(2)
        };
        let mut alpha_bar = vec![1.0];
        let mut beta = Vec::with_capacity(steps);
        let mut beta_tilde = Vec::with_capacity(steps);
        for t in 1..=steps {
            let raw = 1.0 - f(t) / f(t - 1);
            let b = raw.clamp(f64::MIN_POSITIVE, MAX_BETA);
            let prev = alpha_bar[t - 1];
            let cur = prev * (1.0 - b);
            beta.push(b);
            beta_tilde.push((1.0 - prev) / (1.0 - cur) * b);
            alpha_bar.push(cur);
        }
        GaussianSchedule {
            steps,
            alpha_bar,
            beta,
            beta_tilde,
        }
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t - 1]
    }

    pub fn beta_tilde(&self, t: usize) -> f64 {
        self.beta_tilde[t - 1]
    }
}

pub fn build_gaussian_schedule(steps: usize) -> Result<GaussianSchedule> {
    if steps == 0 {
        return Err(Error::invalid("gaussian schedule needs at least one step"));
    }
    Ok(GaussianSchedule::cosine(steps))
}

pub fn rotation_encode(r: f64) -> [f64; 2] {
    let (s, c) = r.sin_cos();
    [c, s]
}

pub fn rotation_decode(pair: [f64; 2]) -> Result<f64> {
    if pair[0] == 0.0 && pair[1] == 0.0 {
        return Err(Error::invalid("cannot decode a rotation from the zero vector"));
    }
    Ok(crate::scene::normalize_angle(pair[1].atan2(pair[0])))
}

/// Per-column means and standard deviations used for z-scoring.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayoutStats {
    pub mean: [f64; LAYOUT_DIM],
    pub std: [f64; LAYOUT_DIM],
}

impl LayoutStats {
    /// Population statistics over all rows. Columns with (near) zero spread
    /// get a unit scale.
    pub fn from_layouts(layouts: &[LayoutMatrix]) -> Result<Self> {
        let rows: Vec<&[f64; LAYOUT_DIM]> = layouts.iter().flat_map(|l| l.rows.iter()).collect();
        if rows.is_empty() {
            return Err(Error::invalid("layout statistics need at least one row"));
        }
        let n = rows.len() as f64;
        let mut mean = [0.0; LAYOUT_DIM];
        let mut std = [0.0; LAYOUT_DIM];
        for c in 0..LAYOUT_DIM {
            mean[c] = rows.iter().map(|r| r[c]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r[c] - mean[c]).powi(2)).sum::<f64>() / n;
            std[c] = if var.sqrt() < 1e-12 { 1.0 } else { var.sqrt() };
        }
        Ok(LayoutStats { mean, std })
    }

    pub fn identity() -> Self {
        LayoutStats {
            mean: [0.0; LAYOUT_DIM],
            std: [1.0; LAYOUT_DIM],
        }
    }

    pub fn standardize_row(&self, row: &[f64; LAYOUT_DIM]) -> [f64; LAYOUT_DIM] {
        std::array::from_fn(|c| (row[c] - self.mean[c]) / self.std[c])
    }

    pub fn standardize(&self, layout: &LayoutMatrix) -> LayoutMatrix {
        LayoutMatrix {
            rows: layout.rows.iter().map(|r| self.standardize_row(r)).collect(),
        }
    }

    pub fn destandardize(&self, layout: &LayoutMatrix) -> LayoutMatrix {
        LayoutMatrix {
            rows: layout
                .rows
                .iter()
                .map(|r| std::array::from_fn(|c| r[c] * self.std[c] + self.mean[c]))
                .collect(),
        }
    }
}

fn gaussian_matrix<R: Rng + ?Sized>(n: usize, rng: &mut R) -> LayoutMatrix {
    LayoutMatrix {
        rows: (0..n).map(|_| std::array::from_fn(|_| rng.sample(StandardNormal))).collect(),
    }
}

/// Returns `(L_t, ε)` with `L_t = √ᾱ_t L_0 + √(1-ᾱ_t) ε`.
pub fn forward_sample_layout<R: Rng + ?Sized>(
    l0: &LayoutMatrix,
    t: usize,
    schedule: &GaussianSchedule,
    rng: &mut R,
) -> Result<(LayoutMatrix, LayoutMatrix)> {
    if t > schedule.steps {
        return Err(Error::invalid(format!("step {t} outside 0..={}", schedule.steps)));
    }
    let eps = gaussian_matrix(l0.num_rows(), rng);
    if t == 0 {
        return Ok((l0.clone(), eps));
    }
    Ok((noised(l0, &eps, schedule.alpha_bar(t)), eps))
}

fn noised(l0: &LayoutMatrix, eps: &LayoutMatrix, alpha_bar: f64) -> LayoutMatrix {
    let (a, b) = (alpha_bar.sqrt(), (1.0 - alpha_bar).sqrt());
    LayoutMatrix {
        rows: l0
            .rows
            .iter()
            .zip(&eps.rows)
            .map(|(x, e)| std::array::from_fn(|c| a * x[c] + b * e[c]))
            .collect(),
    }
}

/// Noise predictor conditioned on a compact (empty-free) semantic graph
/// whose nodes correspond to layout rows.
pub trait EpsDenoiser: Send + Sync {
    fn predict(&self, l_t: &LayoutMatrix, t: usize, graph: &SemanticGraph) -> Result<LayoutMatrix>;
}

/// Predicts zero noise everywhere.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroEpsDenoiser;

impl EpsDenoiser for ZeroEpsDenoiser {
    fn predict(&self, l_t: &LayoutMatrix, _t: usize, _graph: &SemanticGraph) -> Result<LayoutMatrix> {
        Ok(LayoutMatrix::zeros(l_t.num_rows()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MatchPolicy {
    /// Categories, codes and relations equal up to node permutation.
    Full,
    /// Codes ignored.
    CategoriesAndRelations,
    /// Only the category multiset.
    CategoryMultiset,
}

impl MatchPolicy {
    pub const LADDER: [MatchPolicy; 3] = [
        MatchPolicy::Full,
        MatchPolicy::CategoriesAndRelations,
        MatchPolicy::CategoryMultiset,
    ];
}

/// Dataset layouts aligned to one query graph.
#[derive(Clone, Debug)]
pub struct MatchedLayouts {
    pub policy: MatchPolicy,
    /// `(log weight, standardized layout in query node order)`.
    pub layouts: Vec<(f64, LayoutMatrix)>,
}

/// Bayes-optimal ε-predictor under the empirical mixture of dataset layouts
/// whose graphs match the query.
pub struct ExactEpsDenoiser {
    schedule: Arc<GaussianSchedule>,
    entries: Vec<(SemanticGraph, LayoutMatrix)>,
    by_categories: HashMap<Vec<usize>, Vec<usize>>,
    cache: Mutex<HashMap<SemanticGraph, Arc<MatchedLayouts>>>,
}

impl std::fmt::Debug for ExactEpsDenoiser {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExactEpsDenoiser")
            .field("entries", &self.entries.len())
            .finish()
    }
}

impl ExactEpsDenoiser {
    /// `dataset` holds compact graphs with standardized layouts (one row per
    /// node, in node order).
    pub fn new(dataset: Vec<(SemanticGraph, LayoutMatrix)>, schedule: Arc<GaussianSchedule>) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::invalid("layout denoiser needs a non-empty dataset"));
        }
        let mut by_categories: HashMap<Vec<usize>, Vec<usize>> = HashMap::new();
        for (i, (g, l)) in dataset.iter().enumerate() {
            if g.num_nodes() != l.num_rows() {
                return Err(Error::DimensionMismatch {
                    expected: g.num_nodes(),
                    found: l.num_rows(),
                });
            }
            by_categories.entry(sorted(&g.categories)).or_default().push(i);
        }
        Ok(ExactEpsDenoiser {
            schedule,
            entries: dataset,
            by_categories,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn schedule(&self) -> &GaussianSchedule {
        &self.schedule
    }

    /// Matching layouts for `graph`, walking the fallback ladder.
    pub fn matches(&self, graph: &SemanticGraph) -> Result<Arc<MatchedLayouts>> {
        if let Some(hit) = self.cache.lock().expect("cache lock").get(graph) {
            return Ok(Arc::clone(hit));
        }
        let candidates = self.by_categories.get(&sorted(&graph.categories));
        let mut found = None;
        if let Some(candidates) = candidates {
            for policy in MatchPolicy::LADDER {
                let mut layouts = Vec::new();
                for &i in candidates {
                    let (g, l) = &self.entries[i];
                    let aligns = alignments(graph, g, policy, MAX_ALIGNMENTS);
                    let w = -(aligns.len() as f64).ln();
                    for a in aligns {
                        layouts.push((
                            w,
                            LayoutMatrix {
                                rows: a.iter().map(|&src| l.rows[src]).collect(),
                            },
                        ));
                    }
                }
                if !layouts.is_empty() {
                    if policy != MatchPolicy::Full {
                        log::warn!("layout denoiser fell back to {policy:?} matching");
                    }
                    found = Some(MatchedLayouts { policy, layouts });
                    break;
                }
            }
        }
        let matched = Arc::new(found.ok_or_else(|| {
            Error::unsatisfiable("layout-match", "no dataset layout has the requested category multiset")
        })?);
        self.cache
            .lock()
            .expect("cache lock")
            .insert(graph.clone(), Arc::clone(&matched));
        Ok(matched)
    }

    /// Normalized posterior weights of the matched layouts given `L_t`.
    pub fn posterior_weights(&self, l_t: &LayoutMatrix, t: usize, matched: &MatchedLayouts) -> Vec<f64> {
        let ab = self.schedule.alpha_bar(t);
        let (sa, var) = (ab.sqrt(), 1.0 - ab);
        let logw: Vec<f64> = matched
            .layouts
            .iter()
            .map(|(w, l)| {
                let d2: f64 = l_t
                    .rows
                    .iter()
                    .zip(&l.rows)
                    .flat_map(|(x, y)| x.iter().zip(y).map(move |(a, b)| (a - sa * b).powi(2)))
                    .sum();
                w - d2 / (2.0 * var)
            })
            .collect();
        softmax(&logw)
    }
}

impl EpsDenoiser for ExactEpsDenoiser {
    fn predict(&self, l_t: &LayoutMatrix, t: usize, graph: &SemanticGraph) -> Result<LayoutMatrix> {
        if t == 0 || t > self.schedule.steps {
            return Err(Error::invalid(format!("step {t} outside 1..={}", self.schedule.steps)));
        }
        if l_t.num_rows() != graph.num_nodes() {
            return Err(Error::DimensionMismatch {
                expected: graph.num_nodes(),
                found: l_t.num_rows(),
            });
        }
        let matched = self.matches(graph)?;
        let w = self.posterior_weights(l_t, t, &matched);
        let ab = self.schedule.alpha_bar(t);
        let (sa, sb) = (ab.sqrt(), (1.0 - ab).sqrt());
        let mut out = LayoutMatrix::zeros(l_t.num_rows());
        for (wi, (_, l)) in w.iter().zip(&matched.layouts) {
            if *wi == 0.0 {
                continue;
            }
            for (o, r) in out.rows.iter_mut().zip(&l.rows) {
                for c in 0..LAYOUT_DIM {
                    o[c] += wi * r[c];
                }
            }
        }
        for (o, x) in out.rows.iter_mut().zip(&l_t.rows) {
            for c in 0..LAYOUT_DIM {
                o[c] = (x[c] - sa * o[c]) / sb;
            }
        }
        Ok(out)
    }
}

fn sorted(v: &[usize]) -> Vec<usize> {
    let mut s = v.to_vec();
    s.sort_unstable();
    s
}

pub(crate) fn softmax(logw: &[f64]) -> Vec<f64> {
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return vec![1.0 / logw.len() as f64; logw.len()];
    }
    let w: Vec<f64> = logw.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

/// Node maps `query node -> candidate node` under which the candidate graph
/// equals the query graph (per policy). At most `cap` are returned.
pub fn alignments(query: &SemanticGraph, candidate: &SemanticGraph, policy: MatchPolicy, cap: usize) -> Vec<Vec<usize>> {
    let n = query.num_nodes();
    let mut out = Vec::new();
    if candidate.num_nodes() != n {
        return out;
    }
    let mut map = Vec::with_capacity(n);
    let mut used = vec![false; n];
    extend_alignment(query, candidate, policy, cap, &mut map, &mut used, &mut out);
    out
}

fn extend_alignment(
    q: &SemanticGraph,
    c: &SemanticGraph,
    policy: MatchPolicy,
    cap: usize,
    map: &mut Vec<usize>,
    used: &mut [bool],
    out: &mut Vec<Vec<usize>>,
) {
    if out.len() >= cap {
        return;
    }
    let a = map.len();
    if a == q.num_nodes() {
        out.push(map.clone());
        return;
    }
    for b in 0..c.num_nodes() {
        if used[b] || q.categories[a] != c.categories[b] {
            continue;
        }
        if policy == MatchPolicy::Full && q.codes_of(a) != c.codes_of(b) {
            continue;
        }
        if policy != MatchPolicy::CategoryMultiset
            && map
                .iter()
                .enumerate()
                .any(|(pa, &pb)| q.relation(pa, a) != c.relation(pb, b))
        {
            continue;
        }
        used[b] = true;
        map.push(b);
        extend_alignment(q, c, policy, cap, map, used, out);
        map.pop();
        used[b] = false;
    }
}

/// Frozen layout rows for inpainting: `rows[j] = Some(standardized row)`.
pub type FrozenRows = [Option<[f64; LAYOUT_DIM]>];

/// Runs the reverse chain in standardized coordinates and returns the raw
/// final matrix (no rotation projection).
pub fn reverse_sample_standardized<R: Rng + ?Sized>(
    denoiser: &dyn EpsDenoiser,
    graph: &SemanticGraph,
    schedule: &GaussianSchedule,
    rng: &mut R,
    frozen: Option<&FrozenRows>,
) -> Result<LayoutMatrix> {
    if graph.has_mask() || (0..graph.num_nodes()).any(|j| graph.is_empty_node(j)) {
        return Err(Error::invalid("layout sampling needs a compact, mask-free graph"));
    }
    let n = graph.num_nodes();
    if let Some(f) = frozen {
        if f.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: f.len(),
            });
        }
    }
    let clamp = |l: &mut LayoutMatrix, t: usize, rng: &mut R| {
        if let Some(f) = frozen {
            let ab = schedule.alpha_bar(t);
            for (row, fr) in l.rows.iter_mut().zip(f) {
                if let Some(x) = fr {
                    for c in 0..LAYOUT_DIM {
                        let e: f64 = rng.sample(StandardNormal);
                        row[c] = ab.sqrt() * x[c] + (1.0 - ab).sqrt() * e;
                    }
                }
            }
        }
    };
    let mut l = gaussian_matrix(n, rng);
    clamp(&mut l, schedule.steps, rng);
    for t in (1..=schedule.steps).rev() {
        let eps = denoiser.predict(&l, t, graph)?;
        let (beta, ab) = (schedule.beta(t), schedule.alpha_bar(t));
        let coef = beta / (1.0 - ab).sqrt();
        let scale = 1.0 / (1.0 - beta).sqrt();
        let sigma = schedule.beta_tilde(t).sqrt();
        for (row, e) in l.rows.iter_mut().zip(&eps.rows) {
            for c in 0..LAYOUT_DIM {
                let mu = (row[c] - coef * e[c]) * scale;
                row[c] = if t > 1 {
                    mu + sigma * rng.sample::<f64, _>(StandardNormal)
                } else {
                    mu
                };
            }
        }
        clamp(&mut l, t - 1, rng);
    }
    if !l.rows.iter().flatten().all(|x| x.is_finite()) {
        return Err(Error::invalid("layout sampling produced non-finite values"));
    }
    Ok(l)
}

/// Samples a layout for a compact graph and returns it in scene units with
/// unit-norm rotation columns.
pub fn reverse_sample_layout<R: Rng + ?Sized>(
    denoiser: &dyn EpsDenoiser,
    graph: &SemanticGraph,
    schedule: &GaussianSchedule,
    stats: &LayoutStats,
    rng: &mut R,
    frozen: Option<&FrozenRows>,
) -> Result<LayoutMatrix> {
    let raw = reverse_sample_standardized(denoiser, graph, schedule, rng, frozen)?;
    let mut out = stats.destandardize(&raw);
    for row in &mut out.rows {
        let norm = row[6].hypot(row[7]);
        if norm > 0.0 {
            row[6] /= norm;
            row[7] /= norm;
        } else {
            row[6] = 1.0;
            row[7] = 0.0;
        }
    }
    Ok(out)
}

/// Monte Carlo estimate of `E ||ε - ε̂||²`, averaged per coordinate, with
/// `t` uniform on `1..=T`. `dataset` holds compact graphs with standardized
/// layouts.
pub fn simple_loss<R: Rng + ?Sized>(
    denoiser: &dyn EpsDenoiser,
    dataset: &[(SemanticGraph, LayoutMatrix)],
    schedule: &GaussianSchedule,
    n_samples: usize,
    rng: &mut R,
) -> Result<f64> {
    if n_samples == 0 || dataset.is_empty() {
        return Err(Error::invalid("simple loss needs samples and a dataset"));
    }
    let mut total = 0.0;
    for _ in 0..n_samples {
        let (g, l0) = &dataset[rng.random_range(0..dataset.len())];
        let t = rng.random_range(1..=schedule.steps);
        let (l_t, eps) = forward_sample_layout(l0, t, schedule, rng)?;
        let pred = denoiser.predict(&l_t, t, g)?;
        let se: f64 = eps
            .rows
            .iter()
            .zip(&pred.rows)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)))
            .sum();
        total += se / (l0.num_rows() * LAYOUT_DIM).max(1) as f64;
    }
    Ok(total / n_samples as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::GraphSpaces;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn graph(categories: Vec<usize>) -> SemanticGraph {
        let spaces = GraphSpaces {
            categories: 3,
            codes: 2,
            relations: 11,
            codes_per_object: 1,
        };
        let n = categories.len();
        let mut g = SemanticGraph::filled(spaces, n, |_| 0);
        g.categories = categories;
        g.relations = (0..g.relations.len()).map(|i| i % 11).collect();
        g
    }

    #[test]
    fn cosine_schedule_endpoints() {
        let s10 = build_gaussian_schedule(10).unwrap();
        assert_eq!(s10.alpha_bar(0), 1.0);
        assert!(s10.alpha_bar(10) <= 1e-2);
        assert!(build_gaussian_schedule(100).unwrap().alpha_bar(100) <= 1e-4);
        for t in [1, 2, 7, 10, 50, 999, 1000] {
            let s = build_gaussian_schedule(t).unwrap();
            assert!(s.alpha_bar.windows(2).all(|w| w[1] < w[0]), "T = {t}");
            assert!(s.beta.iter().all(|b| *b > 0.0 && *b < 1.0));
        }
    }

    #[test]
    fn rotation_codec() {
        for r in [0.0, PI / 2.0, -PI, 1.0, -2.5] {
            let back = rotation_decode(rotation_encode(r)).unwrap();
            assert!((back - r).abs() < 1e-12);
        }
        assert_eq!(rotation_decode([2.0, 0.0]).unwrap(), 0.0);
        assert!(rotation_decode([0.0, 0.0]).is_err());
    }

    #[test]
    fn single_layout_inverts_the_noise() {
        let sched = Arc::new(build_gaussian_schedule(10).unwrap());
        let g = graph(vec![0, 1]);
        let mut l0 = LayoutMatrix::zeros(2);
        l0.rows[0][0] = 0.7;
        l0.rows[1][5] = -1.2;
        let den = ExactEpsDenoiser::new(vec![(g.clone(), l0.clone())], sched.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (lt, eps) = forward_sample_layout(&l0, 6, &sched, &mut rng).unwrap();
        let pred = den.predict(&lt, 6, &g).unwrap();
        for (a, b) in eps.rows.iter().flatten().zip(pred.rows.iter().flatten()) {
            assert!((a - b).abs() < 1e-9);
        }
        let out = reverse_sample_standardized(&den, &g, &sched, &mut rng, None).unwrap();
        for (a, b) in out.rows.iter().flatten().zip(l0.rows.iter().flatten()) {
            assert!((a - b).abs() < 1e-2);
        }
    }

    #[test]
    fn alignment_respects_relations() {
        let a = graph(vec![0, 0, 1]);
        let b = a.select_nodes(&[1, 0, 2]);
        let found = alignments(&a, &b, MatchPolicy::Full, 64);
        assert!(found.contains(&vec![1, 0, 2]));
        for map in &found {
            assert_eq!(b.select_nodes(map), a);
        }
        let c = graph(vec![0, 1, 1]);
        assert!(alignments(&a, &c, MatchPolicy::CategoryMultiset, 64).is_empty());
    }

    #[test]
    fn missing_category_multiset_is_an_error() {
        let sched = Arc::new(build_gaussian_schedule(4).unwrap());
        let den = ExactEpsDenoiser::new(vec![(graph(vec![0]), LayoutMatrix::zeros(1))], sched).unwrap();
        let q = graph(vec![1]);
        assert!(matches!(
            den.predict(&LayoutMatrix::zeros(1), 2, &q),
            Err(Error::Unsatisfiable { .. })
        ));
    }

    #[test]
    fn stats_roundtrip() {
        let l = LayoutMatrix {
            rows: vec![[1.0, 2.0, 3.0, 1.0, 1.0, 1.0, 1.0, 0.0], [3.0, 2.0, 5.0, 2.0, 1.0, 1.0, 0.0, 1.0]],
        };
        let st = LayoutStats::from_layouts(std::slice::from_ref(&l)).unwrap();
        assert_eq!(st.std[1], 1.0);
        let back = st.destandardize(&st.standardize(&l));
        for (a, b) in back.rows.iter().flatten().zip(l.rows.iter().flatten()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
