//! View-dependent spatial relations between furniture boxes.
//!
//! Eleven labels are derived from the ground-plane bearing of the subject
//! relative to the object, their ground distance, and a vertical-separation
//! test. Vertical relations take precedence, then `none` (far apart), then
//! the close band, then the far band.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{ObjectInstance, Scene};

/// Number of relation labels.
pub const NUM_RELATIONS: usize = 11;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum RelationLabel {
    LeftOf,
    RightOf,
    InFrontOf,
    Behind,
    CloselyLeftOf,
    CloselyRightOf,
    CloselyInFrontOf,
    CloselyBehind,
    Above,
    Below,
    None,
}

impl RelationLabel {
    pub const ALL: [RelationLabel; NUM_RELATIONS] = [
        RelationLabel::LeftOf,
        RelationLabel::RightOf,
        RelationLabel::InFrontOf,
        RelationLabel::Behind,
        RelationLabel::CloselyLeftOf,
        RelationLabel::CloselyRightOf,
        RelationLabel::CloselyInFrontOf,
        RelationLabel::CloselyBehind,
        RelationLabel::Above,
        RelationLabel::Below,
        RelationLabel::None,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RelationLabel::LeftOf => "left of",
            RelationLabel::RightOf => "right of",
            RelationLabel::InFrontOf => "in front of",
            RelationLabel::Behind => "behind",
            RelationLabel::CloselyLeftOf => "closely left of",
            RelationLabel::CloselyRightOf => "closely right of",
            RelationLabel::CloselyInFrontOf => "closely in front of",
            RelationLabel::CloselyBehind => "closely behind",
            RelationLabel::Above => "above",
            RelationLabel::Below => "below",
            RelationLabel::None => "none",
        }
    }

    /// The label of the same pair with subject and object swapped.
    pub fn inverse(self) -> Self {
        use RelationLabel::*;
        match self {
            LeftOf => RightOf,
            RightOf => LeftOf,
            InFrontOf => Behind,
            Behind => InFrontOf,
            CloselyLeftOf => CloselyRightOf,
            CloselyRightOf => CloselyLeftOf,
            CloselyInFrontOf => CloselyBehind,
            CloselyBehind => CloselyInFrontOf,
            Above => Below,
            Below => Above,
            None => None,
        }
    }
}

/// Free-function form of [`RelationLabel::inverse`].
pub fn inverse_relation(rel: RelationLabel) -> RelationLabel {
    rel.inverse()
}

impl fmt::Display for RelationLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RelationLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase();
        Self::ALL
            .iter()
            .copied()
            .find(|r| r.as_str() == norm)
            .ok_or_else(|| Error::UnknownVocabulary(s.to_string()))
    }
}

impl TryFrom<String> for RelationLabel {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<RelationLabel> for String {
    fn from(r: RelationLabel) -> String {
        r.as_str().to_string()
    }
}

/// Distance bands in meters. `close` bounds the closely-* band (inclusive),
/// `far` bounds the far band (inclusive); beyond `far` the label is `none`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelationThresholds {
    pub close: f64,
    pub far: f64,
}

impl Default for RelationThresholds {
    fn default() -> Self {
        RelationThresholds {
            close: 1.0,
            far: 3.0,
        }
    }
}

/// Ground-plane direction sector of a displacement `(dx, dy)` from object to
/// subject. Evaluated with exact comparisons equivalent to the bearing rules
/// `θ = atan2(dy, dx)`:
///
/// * right: `-π/4 ≤ θ < π/4`
/// * front: `π/4 ≤ θ < 3π/4`
/// * left:  `θ ≥ 3π/4` or `θ < -3π/4`
/// * behind: `-3π/4 ≤ θ < -π/4`
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Sector {
    Left,
    Right,
    Front,
    Behind,
}

fn sector(dx: f64, dy: f64) -> Sector {
    if dx == 0.0 && dy == 0.0 {
        // atan2(0, 0) = 0
        return Sector::Right;
    }
    if dx > 0.0 && -dx <= dy && dy < dx {
        Sector::Right
    } else if dy > 0.0 && -dy < dx && dx <= dy {
        Sector::Front
    } else if dy < 0.0 && dy <= dx && dx < -dy {
        Sector::Behind
    } else {
        Sector::Left
    }
}

/// Whether `point` (ground coordinates) lies inside the rotated ground
/// footprint of `object`, boundary included.
pub fn inside_footprint(point: [f64; 2], object: &ObjectInstance) -> bool {
    let (dx, dy) = (point[0] - object.location[0], point[1] - object.location[1]);
    let (sin, cos) = object.rotation.sin_cos();
    let lx = dx * cos + dy * sin;
    let ly = -dx * sin + dy * cos;
    lx.abs() <= object.size[0] / 2.0 && ly.abs() <= object.size[1] / 2.0
}

fn ground(o: &ObjectInstance) -> [f64; 2] {
    [o.location[0], o.location[1]]
}

fn vertical_overlap(subject: &ObjectInstance, object: &ObjectInstance) -> bool {
    inside_footprint(ground(subject), object) || inside_footprint(ground(object), subject)
}

/// Ground distance between two object centers.
pub fn ground_distance(subject: &ObjectInstance, object: &ObjectInstance) -> f64 {
    (subject.location[0] - object.location[0]).hypot(subject.location[1] - object.location[1])
}

/// Bearing of the subject seen from the object, in `(-π, π]`.
pub fn bearing(subject: &ObjectInstance, object: &ObjectInstance) -> f64 {
    let theta = (subject.location[1] - object.location[1]).atan2(subject.location[0] - object.location[0]);
    if theta == -std::f64::consts::PI {
        std::f64::consts::PI
    } else {
        theta
    }
}

pub fn relation_between(subject: &ObjectInstance, object: &ObjectInstance) -> RelationLabel {
    relation_between_with(subject, object, &RelationThresholds::default())
}

pub fn relation_between_with(
    subject: &ObjectInstance,
    object: &ObjectInstance,
    thresholds: &RelationThresholds,
) -> RelationLabel {
    let half_heights = (subject.size[2] + object.size[2]) / 2.0;
    let dz = subject.location[2] - object.location[2];
    if dz > half_heights && vertical_overlap(subject, object) {
        return RelationLabel::Above;
    }
    if -dz > half_heights && vertical_overlap(subject, object) {
        return RelationLabel::Below;
    }

    let dx = subject.location[0] - object.location[0];
    let dy = subject.location[1] - object.location[1];
    let d = dx.hypot(dy);
    if d > thresholds.far {
        return RelationLabel::None;
    }
    let close = d <= thresholds.close;
    match (sector(dx, dy), close) {
        (Sector::Left, true) => RelationLabel::CloselyLeftOf,
        (Sector::Right, true) => RelationLabel::CloselyRightOf,
        (Sector::Front, true) => RelationLabel::CloselyInFrontOf,
        (Sector::Behind, true) => RelationLabel::CloselyBehind,
        (Sector::Left, false) => RelationLabel::LeftOf,
        (Sector::Right, false) => RelationLabel::RightOf,
        (Sector::Front, false) => RelationLabel::InFrontOf,
        (Sector::Behind, false) => RelationLabel::Behind,
    }
}

/// Smallest distance of a pair's geometry to a decision boundary that
/// could change its label. Stacked pairs are measured against the vertical
/// separation rule and the footprint edges; planar pairs against the
/// distance bands, the bearing sector edges (as arc length at the pair's
/// distance) and the vertical rule.
///
/// Pairs with a large margin keep their label under small perturbations.
pub fn relation_margin(subject: &ObjectInstance, object: &ObjectInstance, thresholds: &RelationThresholds) -> f64 {
    use std::f64::consts::FRAC_PI_4;
    let half_heights = (subject.size[2] + object.size[2]) / 2.0;
    let dz = (subject.location[2] - object.location[2]).abs();
    let vertical = (dz - half_heights).abs();
    let footprint_margin = |p: [f64; 2], o: &ObjectInstance| {
        let (dx, dy) = (p[0] - o.location[0], p[1] - o.location[1]);
        let (sin, cos) = o.rotation.sin_cos();
        let lx = dx * cos + dy * sin;
        let ly = -dx * sin + dy * cos;
        // Positive inside the footprint, negative outside.
        (o.size[0] / 2.0 - lx.abs()).min(o.size[1] / 2.0 - ly.abs())
    };
    let inside = footprint_margin(ground(subject), object).max(footprint_margin(ground(object), subject));
    if dz > half_heights && inside >= 0.0 {
        return vertical.min(inside);
    }

    let d = ground_distance(subject, object);
    let mut margin = if d > thresholds.far {
        d - thresholds.far
    } else {
        (d - thresholds.close).abs().min(thresholds.far - d)
    };
    if d <= thresholds.far {
        let theta = bearing(subject, object);
        let edges = [-3.0 * FRAC_PI_4, -FRAC_PI_4, FRAC_PI_4, 3.0 * FRAC_PI_4];
        let angular = edges.iter().map(|e| (theta - e).abs()).fold(f64::INFINITY, f64::min);
        margin = margin.min(angular * d);
    }
    if dz > half_heights {
        margin = margin.min(-inside);
    } else {
        margin = margin.min(vertical);
    }
    margin
}

/// Relations of all ordered pairs `j < k` of a scene, stored upper-triangular.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelationMatrix {
    n: usize,
    labels: Vec<RelationLabel>,
}

/// Row-major index of the upper-triangular entry `(j, k)`, `j < k < n`.
pub fn edge_index(n: usize, j: usize, k: usize) -> usize {
    debug_assert!(j < k && k < n);
    j * n - j * (j + 1) / 2 + (k - j - 1)
}

/// Number of upper-triangular entries for `n` nodes.
pub fn edge_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

impl RelationMatrix {
    pub fn from_labels(n: usize, labels: Vec<RelationLabel>) -> Result<Self> {
        if labels.len() != edge_count(n) {
            return Err(Error::DimensionMismatch {
                expected: edge_count(n),
                found: labels.len(),
            });
        }
        Ok(RelationMatrix { n, labels })
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn num_edges(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[RelationLabel] {
        &self.labels
    }

    /// Relation with `j` as subject and `k` as object, for any `j != k`.
    pub fn get(&self, j: usize, k: usize) -> RelationLabel {
        assert!(j != k, "no self relations");
        if j < k {
            self.labels[edge_index(self.n, j, k)]
        } else {
            self.labels[edge_index(self.n, k, j)].inverse()
        }
    }
}

pub fn extract_relations(scene: &Scene) -> RelationMatrix {
    extract_relations_with(scene, &RelationThresholds::default())
}

pub fn extract_relations_with(scene: &Scene, thresholds: &RelationThresholds) -> RelationMatrix {
    let n = scene.objects.len();
    let mut labels = Vec::with_capacity(edge_count(n));
    for j in 0..n {
        for k in (j + 1)..n {
            labels.push(relation_between_with(&scene.objects[j], &scene.objects[k], thresholds));
        }
    }
    RelationMatrix { n, labels }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obj(x: f64, y: f64, z: f64, size: [f64; 3]) -> ObjectInstance {
        ObjectInstance::new(0, [x, y, z], size, 0.0, vec![])
    }

    fn floor(x: f64, y: f64) -> ObjectInstance {
        obj(x, y, 0.25, [0.5, 0.5, 0.5])
    }

    #[test]
    fn nightstand_left_of_bed() {
        let bed = obj(0.0, 0.0, 0.3, [2.0, 1.6, 0.6]);
        let nightstand = obj(-2.0, 0.0, 0.3, [0.5, 0.5, 0.6]);
        assert_eq!(relation_between(&nightstand, &bed), RelationLabel::LeftOf);
        assert_eq!(relation_between(&bed, &nightstand), RelationLabel::RightOf);
    }

    #[test]
    fn reference_cases() {
        let o = floor(0.0, 0.0);
        assert_eq!(relation_between(&floor(2.0, 0.0), &o), RelationLabel::RightOf);
        assert_eq!(relation_between(&floor(0.0, 0.5), &o), RelationLabel::CloselyInFrontOf);
        assert_eq!(relation_between(&floor(5.0, 0.0), &o), RelationLabel::None);
        let lamp = obj(0.1, 0.0, 2.0, [0.3, 0.3, 0.3]);
        assert_eq!(relation_between(&lamp, &o), RelationLabel::Above);
        assert_eq!(relation_between(&o, &lamp), RelationLabel::Below);
    }

    #[test]
    fn distance_boundaries_are_inclusive() {
        let o = floor(0.0, 0.0);
        assert_eq!(relation_between(&floor(1.0, 0.0), &o), RelationLabel::CloselyRightOf);
        assert_eq!(relation_between(&floor(3.0, 0.0), &o), RelationLabel::RightOf);
        assert_eq!(relation_between(&floor(3.0 + 1e-9, 0.0), &o), RelationLabel::None);
    }

    #[test]
    fn sector_boundaries_follow_inequalities() {
        let o = floor(0.0, 0.0);
        // θ = π/4 belongs to front, θ = -π/4 to right
        assert_eq!(relation_between(&floor(1.5, 1.5), &o), RelationLabel::InFrontOf);
        assert_eq!(relation_between(&floor(1.5, -1.5), &o), RelationLabel::RightOf);
        // θ = 3π/4 belongs to left, θ = -3π/4 to behind
        assert_eq!(relation_between(&floor(-1.5, 1.5), &o), RelationLabel::LeftOf);
        assert_eq!(relation_between(&floor(-1.5, -1.5), &o), RelationLabel::Behind);
    }

    #[test]
    fn vertical_separation_without_overlap_falls_through() {
        let o = floor(0.0, 0.0);
        let high = obj(2.0, 0.0, 3.0, [0.3, 0.3, 0.3]);
        assert_eq!(relation_between(&high, &o), RelationLabel::RightOf);
    }

    #[test]
    fn inverse_is_involution() {
        for r in RelationLabel::ALL {
            assert_eq!(r.inverse().inverse(), r);
            assert_eq!(r.as_str().parse::<RelationLabel>().unwrap(), r);
        }
        assert_eq!(inverse_relation(RelationLabel::None), RelationLabel::None);
    }

    #[test]
    fn edge_indexing_is_dense() {
        let n = 5;
        let mut seen = vec![false; edge_count(n)];
        for j in 0..n {
            for k in (j + 1)..n {
                seen[edge_index(n, j, k)] = true;
            }
        }
        assert!(seen.into_iter().all(|s| s));
    }

    #[test]
    fn extract_relation_counts() {
        let mut scene = Scene::new("s", vec![floor(0.0, 0.0)]);
        assert_eq!(extract_relations(&scene).num_edges(), 0);
        scene.objects.push(floor(2.0, 0.0));
        scene.objects.push(floor(0.0, 2.0));
        let m = extract_relations(&scene);
        assert_eq!(m.num_edges(), 3);
        assert_eq!(m.get(1, 0), RelationLabel::RightOf);
        assert_eq!(m.get(0, 1), RelationLabel::LeftOf);
    }
}
