//! Metrics over synthesized scenes.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::instruction::{Instruction, Triplet};
use crate::quantizer::Codebook;
use crate::relation::{extract_relations, RelationMatrix};
use crate::scene::{ObjectInstance, Scene};

/// Label attached to the style metric in reports.
pub const STYLE_METRIC: &str = "code-signature match rate (stands in for an embedding-similarity score)";

fn triplet_satisfied(scene: &Scene, relations: &RelationMatrix, t: &Triplet) -> bool {
    let objs = &scene.objects;
    (0..objs.len()).any(|a| {
        objs[a].category == t.subject
            && (0..objs.len()).any(|b| b != a && objs[b].category == t.object && relations.get(a, b) == t.relation)
    })
}

/// Satisfied and required triplet counts for one scene, with relations
/// re-extracted from geometry. A triplet holds if any pair of objects with
/// the right categories has the relation.
pub fn triplet_counts(scene: &Scene, instr: &Instruction) -> (usize, usize) {
    let relations = extract_relations(scene);
    let hit = instr
        .triplets
        .iter()
        .filter(|t| triplet_satisfied(scene, &relations, t))
        .count();
    (hit, instr.triplets.len())
}

/// Fraction of required triplets found in the scenes.
pub fn irecall(scenes: &[Scene], instructions: &[Instruction]) -> Result<f64> {
    if scenes.len() != instructions.len() {
        return Err(Error::DimensionMismatch {
            expected: scenes.len(),
            found: instructions.len(),
        });
    }
    let (mut hit, mut required) = (0, 0);
    for (s, i) in scenes.iter().zip(instructions) {
        let (h, r) = triplet_counts(s, i);
        hit += h;
        required += r;
    }
    if required == 0 {
        return Err(Error::invalid("no triplets to recall"));
    }
    Ok(hit as f64 / required as f64)
}

/// Total-variation distance between the empirical distribution of
/// `samples` and a reference distribution given as `(item, weight)`;
/// weights are normalized and repeated items merged.
pub fn tv_distance<T: Hash + Eq + Clone>(samples: &[T], reference: &[(T, f64)]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid("no samples"));
    }
    let total: f64 = reference.iter().map(|(_, w)| *w).sum();
    if reference.iter().any(|(_, w)| !(w.is_finite() && *w >= 0.0)) || total <= 0.0 {
        return Err(Error::invalid("reference weights must be non-negative with positive total"));
    }
    let mut diff: HashMap<&T, f64> = HashMap::new();
    for (item, w) in reference {
        *diff.entry(item).or_default() -= w / total;
    }
    let inc = 1.0 / samples.len() as f64;
    for s in samples {
        *diff.entry(s).or_default() += inc;
    }
    // Map order varies between processes; sum in a fixed order so the
    // result is bit-reproducible.
    let mut terms: Vec<f64> = diff.values().map(|d| d.abs()).collect();
    terms.sort_by(f64::total_cmp);
    Ok((0.5 * terms.iter().sum::<f64>()).min(1.0))
}

fn object_codes(o: &ObjectInstance, codebook: &Codebook) -> Result<Vec<usize>> {
    match &o.codes {
        Some(c) => Ok(c.clone()),
        None => codebook.encode(&o.feature),
    }
}

/// Fraction of objects whose code sequence equals `target`. Objects
/// without stored codes are encoded with `codebook`.
pub fn style_match_rate(scenes: &[Scene], target: &[usize], codebook: &Codebook) -> Result<f64> {
    style_match_rate_where(scenes, target, codebook, |_| true)
}

/// As [`style_match_rate`], counting only objects accepted by `filter`.
pub fn style_match_rate_where(
    scenes: &[Scene],
    target: &[usize],
    codebook: &Codebook,
    filter: impl Fn(&ObjectInstance) -> bool,
) -> Result<f64> {
    if target.len() != codebook.codes_per_feature() {
        return Err(Error::DimensionMismatch {
            expected: codebook.codes_per_feature(),
            found: target.len(),
        });
    }
    if let Some(&c) = target.iter().find(|&&c| c >= codebook.size()) {
        return Err(Error::OutOfRange {
            label: c,
            size: codebook.size(),
        });
    }
    let (mut hit, mut total) = (0usize, 0usize);
    for o in scenes.iter().flat_map(|s| &s.objects).filter(|o| filter(o)) {
        total += 1;
        if object_codes(o, codebook)? == target {
            hit += 1;
        }
    }
    if total == 0 {
        return Err(Error::invalid("no objects to score"));
    }
    Ok(hit as f64 / total as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub irecall: Option<f64>,
    pub tv: Option<f64>,
    pub style_match: Option<f64>,
    pub style_metric: String,
    pub num_scenes: usize,
    pub num_required_triplets: usize,
    pub num_tv_samples: usize,
    pub config_fingerprint: String,
}

impl EvalReport {
    pub fn new(config: &impl Serialize) -> Result<Self> {
        Ok(EvalReport {
            irecall: None,
            tv: None,
            style_match: None,
            style_metric: STYLE_METRIC.to_string(),
            num_scenes: 0,
            num_required_triplets: 0,
            num_tv_samples: 0,
            config_fingerprint: fingerprint(config)?,
        })
    }
}

/// SHA-256 of the JSON serialization, hex encoded.
pub fn fingerprint(value: &impl Serialize) -> Result<String> {
    let bytes = serde_json::to_vec(value)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}
