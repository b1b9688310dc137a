//! Product quantization of object features with one shared codebook.
//!
//! A `d`-dimensional feature is split into `n_f` contiguous chunks of
//! `d / n_f` values; each chunk is replaced by the index of its nearest
//! centroid.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{sample_index, stream_rng};

/// Number of k-means++ restarts; the lowest-error run is kept.
const RESTARTS: u64 = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    entries: Vec<Vec<f64>>,
    codes_per_feature: usize,
}

impl Codebook {
    pub fn new(entries: Vec<Vec<f64>>, codes_per_feature: usize) -> Result<Self> {
        if entries.is_empty() || codes_per_feature == 0 {
            return Err(Error::invalid("codebook needs at least one entry and one code per feature"));
        }
        let dim = entries[0].len();
        if dim == 0 {
            return Err(Error::invalid("codebook entries must be non-empty"));
        }
        for e in &entries {
            if e.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: e.len(),
                });
            }
            if !e.iter().all(|x| x.is_finite()) {
                return Err(Error::invalid("codebook entries must be finite"));
            }
        }
        Ok(Codebook {
            entries,
            codes_per_feature,
        })
    }

    pub fn entries(&self) -> &[Vec<f64>] {
        &self.entries
    }

    pub fn size(&self) -> usize {
        self.entries.len()
    }

    pub fn codes_per_feature(&self) -> usize {
        self.codes_per_feature
    }

    pub fn chunk_dim(&self) -> usize {
        self.entries[0].len()
    }

    pub fn feature_dim(&self) -> usize {
        self.chunk_dim() * self.codes_per_feature
    }

    fn check_dim(&self, feature: &[f64]) -> Result<()> {
        if feature.len() != self.feature_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.feature_dim(),
                found: feature.len(),
            });
        }
        Ok(())
    }

    /// Nearest centroid of one chunk and its squared distance. Ties go to
    /// the lowest index.
    pub fn nearest(&self, chunk: &[f64]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (i, c) in self.entries.iter().enumerate() {
            let d = sq_dist(chunk, c);
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }

    pub fn encode(&self, feature: &[f64]) -> Result<Vec<usize>> {
        self.check_dim(feature)?;
        Ok(feature.chunks(self.chunk_dim()).map(|c| self.nearest(c).0).collect())
    }

    pub fn decode(&self, codes: &[usize]) -> Result<Vec<f64>> {
        if codes.len() != self.codes_per_feature {
            return Err(Error::DimensionMismatch {
                expected: self.codes_per_feature,
                found: codes.len(),
            });
        }
        let mut out = Vec::with_capacity(self.feature_dim());
        for &c in codes {
            let entry = self.entries.get(c).ok_or(Error::OutOfRange {
                label: c,
                size: self.size(),
            })?;
            out.extend_from_slice(entry);
        }
        Ok(out)
    }

    /// Sum over all chunks of all features of the squared distance to the
    /// nearest centroid.
    pub fn reconstruction_error(&self, features: &[Vec<f64>]) -> Result<f64> {
        let mut total = 0.0;
        for f in features {
            self.check_dim(f)?;
            total += f.chunks(self.chunk_dim()).map(|c| self.nearest(c).1).sum::<f64>();
        }
        Ok(total)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Fits a shared codebook of `size` centroids with seeded k-means++ and at
/// most `iters` Lloyd iterations per restart.
pub fn fit_codebook(
    features: &[Vec<f64>],
    size: usize,
    codes_per_feature: usize,
    iters: usize,
    seed: u64,
) -> Result<Codebook> {
    if features.is_empty() {
        return Err(Error::invalid("cannot fit a codebook on zero features"));
    }
    if size == 0 || codes_per_feature == 0 {
        return Err(Error::invalid("codebook size and codes per feature must be positive"));
    }
    let d = features[0].len();
    if d == 0 || d % codes_per_feature != 0 {
        return Err(Error::invalid(format!(
            "feature dimension {d} is not divisible by {codes_per_feature}"
        )));
    }
    if let Some(f) = features.iter().find(|f| f.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: f.len(),
        });
    }
    let chunk = d / codes_per_feature;
    let points: Vec<&[f64]> = features.iter().flat_map(|f| f.chunks(chunk)).collect();

    let mut best: Option<(f64, Vec<Vec<f64>>)> = None;
    for restart in 0..RESTARTS {
        let mut rng = stream_rng(seed, restart);
        let centroids = lloyd(&points, kmeans_pp(&points, size, &mut rng), iters);
        let err: f64 = points
            .iter()
            .map(|p| centroids.iter().map(|c| sq_dist(p, c)).fold(f64::INFINITY, f64::min))
            .sum();
        if best.as_ref().is_none_or(|(e, _)| err < *e) {
            best = Some((err, centroids));
        }
    }
    Codebook::new(best.expect("at least one restart").1, codes_per_feature)
}

fn kmeans_pp<R: Rng>(points: &[&[f64]], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut centroids: Vec<Vec<f64>> = vec![points[rng.random_range(0..points.len())].to_vec()];
    let mut dist: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        // With fewer distinct points than centroids the remaining ones
        // duplicate an existing point; they simply stay unused.
        let next = sample_index(&dist, rng).unwrap_or(0);
        let c = points[next].to_vec();
        for (d, p) in dist.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn lloyd(points: &[&[f64]], mut centroids: Vec<Vec<f64>>, iters: usize) -> Vec<Vec<f64>> {
    let dim = centroids[0].len();
    let mut assign = vec![usize::MAX; points.len()];
    for _ in 0..iters {
        let mut changed = false;
        for (a, p) in assign.iter_mut().zip(points) {
            let mut best = (0, f64::INFINITY);
            for (i, c) in centroids.iter().enumerate() {
                let d = sq_dist(p, c);
                if d < best.1 {
                    best = (i, d);
                }
            }
            if *a != best.0 {
                *a = best.0;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; centroids.len()];
        let mut counts = vec![0usize; centroids.len()];
        for (&a, p) in assign.iter().zip(points) {
            counts[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(p.iter()) {
                *s += x;
            }
        }
        for ((c, s), &n) in centroids.iter_mut().zip(sums).zip(&counts) {
            if n > 0 {
                *c = s.into_iter().map(|x| x / n as f64).collect();
            }
        }
    }
    centroids
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_clusters_on_a_line() {
        let data: Vec<Vec<f64>> = [0.0, 1.0, 10.0, 11.0].iter().map(|&x| vec![x]).collect();
        let cb = fit_codebook(&data, 2, 1, 50, 7).unwrap();
        let mut c: Vec<f64> = cb.entries().iter().map(|e| e[0]).collect();
        c.sort_by(f64::total_cmp);
        assert_eq!(c, vec![0.5, 10.5]);
        assert_eq!(cb.reconstruction_error(&data).unwrap(), 4.0 * 0.25);
    }

    #[test]
    fn distinct_points_are_reproduced_exactly() {
        let data: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let cb = fit_codebook(&data, 4, 1, 50, 1).unwrap();
        assert_eq!(cb.reconstruction_error(&data).unwrap(), 0.0);
    }

    #[test]
    fn ties_pick_lowest_index() {
        let cb = Codebook::new(vec![vec![9.0], vec![9.0], vec![0.0], vec![5.0], vec![9.0], vec![4.0]], 1).unwrap();
        // 4.5 is equidistant from entries 3 (5.0) and 5 (4.0).
        assert_eq!(cb.encode(&[4.5]).unwrap(), vec![3]);
    }

    #[test]
    fn decode_rejects_out_of_range() {
        let cb = Codebook::new(vec![vec![0.0], vec![1.0]], 2).unwrap();
        assert_eq!(cb.decode(&[1, 0]).unwrap(), vec![1.0, 0.0]);
        assert!(matches!(cb.decode(&[2, 0]), Err(Error::OutOfRange { .. })));
        assert!(cb.encode(&[0.0]).is_err());
    }

    #[test]
    fn fit_is_deterministic() {
        let data: Vec<Vec<f64>> = (0..40).map(|i| vec![(i % 7) as f64, (i % 3) as f64 * 0.5]).collect();
        let a = fit_codebook(&data, 3, 2, 50, 11).unwrap();
        let b = fit_codebook(&data, 3, 2, 50, 11).unwrap();
        assert_eq!(a, b);
    }
}
