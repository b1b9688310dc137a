//! JSON files: scenes, generated batches and dataset bundle directories.
//!
//! Parsing is lenient by default (unknown fields are ignored). Strict mode
//! rejects unknown fields and checks stored relations against geometry.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::datagen::DatasetBundle;
use crate::error::{Error, Result};
use crate::instruction::Instruction;
use crate::layout_diffusion::LayoutStats;
use crate::pipeline::ObjectLibrary;
use crate::quantizer::Codebook;
use crate::relation::{extract_relations, RelationLabel};
use crate::scene::{ObjectInstance, Scene, SceneConfig};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectJson {
    pub category: String,
    pub category_id: usize,
    pub t: [f64; 3],
    pub s: [f64; 3],
    pub r: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub codes: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asset_id: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelationJson {
    pub i: usize,
    pub j: usize,
    pub label: RelationLabel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneJson {
    pub schema_version: u32,
    pub id: String,
    pub objects: Vec<ObjectJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relations: Option<Vec<RelationJson>>,
}

const SCENE_KEYS: &[&str] = &["schema_version", "id", "objects", "relations"];
const OBJECT_KEYS: &[&str] = &["category", "category_id", "t", "s", "r", "feature", "codes", "asset_id"];
const RELATION_KEYS: &[&str] = &["i", "j", "label"];

impl SceneJson {
    pub fn from_scene(scene: &Scene, config: &SceneConfig, with_relations: bool) -> Result<Self> {
        let objects = scene
            .objects
            .iter()
            .map(|o| {
                if o.category >= config.num_categories() {
                    return Err(Error::OutOfRange {
                        label: o.category,
                        size: config.num_categories(),
                    });
                }
                Ok(ObjectJson {
                    category: config.category_name(o.category).to_string(),
                    category_id: o.category,
                    t: o.location,
                    s: o.size,
                    r: o.rotation,
                    feature: (!o.feature.is_empty()).then(|| o.feature.clone()),
                    codes: o.codes.clone(),
                    asset_id: (!o.asset_id.is_empty()).then(|| o.asset_id.clone()),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let relations = with_relations.then(|| {
            let m = extract_relations(scene);
            let n = scene.objects.len();
            (0..n)
                .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
                .map(|(i, j)| RelationJson { i, j, label: m.get(i, j) })
                .collect()
        });
        Ok(SceneJson {
            schema_version: SCHEMA_VERSION,
            id: scene.id.clone(),
            objects,
            relations,
        })
    }

    pub fn to_scene(&self, config: &SceneConfig, strict: bool) -> Result<Scene> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::invalid(format!("unsupported schema version {}", self.schema_version)));
        }
        let mut objects = Vec::with_capacity(self.objects.len());
        for o in &self.objects {
            match config.category_index(&o.category) {
                Some(c) if c == o.category_id => {}
                _ => {
                    return Err(Error::invalid(format!(
                        "category '{}' does not match category id {}",
                        o.category, o.category_id
                    )))
                }
            }
            let obj = ObjectInstance {
                category: o.category_id,
                location: o.t,
                size: o.s,
                rotation: o.r,
                feature: o.feature.clone().unwrap_or_default(),
                codes: o.codes.clone(),
                asset_id: o.asset_id.clone().unwrap_or_default(),
            };
            obj.validate(config)?;
            objects.push(obj);
        }
        let scene = Scene::new(self.id.clone(), objects);
        if strict {
            if let Some(rels) = &self.relations {
                let m = extract_relations(&scene);
                for r in rels {
                    if r.i >= r.j || r.j >= scene.objects.len() || m.get(r.i, r.j) != r.label {
                        return Err(Error::invalid(format!(
                            "stored relation ({}, {}, {}) does not match the geometry",
                            r.i, r.j, r.label
                        )));
                    }
                }
            }
        }
        Ok(scene)
    }
}

fn check_keys(value: &Value, allowed: &[&str], what: &str) -> Result<()> {
    if let Value::Object(map) = value {
        if let Some(k) = map.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(Error::invalid(format!("unknown field '{k}' in {what}")));
        }
    }
    Ok(())
}

fn check_scene_value(value: &Value) -> Result<()> {
    check_keys(value, SCENE_KEYS, "scene")?;
    if let Some(Value::Array(objs)) = value.get("objects") {
        objs.iter().try_for_each(|o| check_keys(o, OBJECT_KEYS, "object"))?;
    }
    if let Some(Value::Array(rels)) = value.get("relations") {
        rels.iter().try_for_each(|r| check_keys(r, RELATION_KEYS, "relation"))?;
    }
    Ok(())
}

pub fn parse_scene(text: &str, config: &SceneConfig, strict: bool) -> Result<Scene> {
    let value: Value = serde_json::from_str(text)?;
    if strict {
        check_scene_value(&value)?;
    }
    let json: SceneJson = serde_json::from_value(value)?;
    json.to_scene(config, strict)
}

pub fn scene_to_string(scene: &Scene, config: &SceneConfig, with_relations: bool) -> Result<String> {
    Ok(serde_json::to_string_pretty(&SceneJson::from_scene(scene, config, with_relations)?)?)
}

/// A batch of generated scenes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneBatch {
    pub schema_version: u32,
    pub task: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instruction: Option<String>,
    pub scenes: Vec<SceneJson>,
}

impl SceneBatch {
    pub fn scenes(&self, config: &SceneConfig, strict: bool) -> Result<Vec<Scene>> {
        self.scenes.iter().map(|s| s.to_scene(config, strict)).collect()
    }
}

/// Reads a single scene or the first scene of a batch.
pub fn parse_scene_or_batch(text: &str, config: &SceneConfig, strict: bool) -> Result<Scene> {
    let value: Value = serde_json::from_str(text)?;
    if value.get("scenes").is_some() {
        let batch: SceneBatch = serde_json::from_value(value)?;
        batch
            .scenes(config, strict)?
            .into_iter()
            .next()
            .ok_or_else(|| Error::invalid("scene batch is empty"))
    } else {
        parse_scene(text, config, strict)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ScenesFile {
    schema_version: u32,
    entries: Vec<ScenesEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ScenesEntry {
    scene: SceneJson,
    instruction: Instruction,
    text: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ConfigFile {
    schema_version: u32,
    seed: u64,
    scene: SceneConfig,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

/// Writes `scenes.json`, `codebook.json`, `library.json`, `stats.json` and
/// `config.json` into `dir`, creating it if needed.
pub fn save_bundle(bundle: &DatasetBundle, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let entries = bundle
        .scenes
        .iter()
        .zip(&bundle.instructions)
        .zip(&bundle.instruction_texts)
        .map(|((s, i), t)| {
            Ok(ScenesEntry {
                scene: SceneJson::from_scene(s, &bundle.config, false)?,
                instruction: i.clone(),
                text: t.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_json(
        &dir.join("scenes.json"),
        &ScenesFile {
            schema_version: SCHEMA_VERSION,
            entries,
        },
    )?;
    write_json(&dir.join("codebook.json"), &bundle.codebook)?;
    write_json(&dir.join("library.json"), &bundle.library)?;
    write_json(&dir.join("stats.json"), &bundle.stats)?;
    write_json(
        &dir.join("config.json"),
        &ConfigFile {
            schema_version: SCHEMA_VERSION,
            seed: bundle.seed,
            scene: bundle.config.clone(),
        },
    )
}

/// Reads a bundle directory. Graphs are re-derived from the scenes, and the
/// stored statistics must agree with a recomputation.
pub fn load_bundle(dir: &Path, strict: bool) -> Result<DatasetBundle> {
    let config: ConfigFile = read_json(&dir.join("config.json"))?;
    if config.schema_version != SCHEMA_VERSION {
        return Err(Error::invalid(format!("unsupported schema version {}", config.schema_version)));
    }
    let scenes_file: ScenesFile = read_json(&dir.join("scenes.json"))?;
    let raw: Codebook = read_json(&dir.join("codebook.json"))?;
    let codebook = Codebook::new(raw.entries().to_vec(), raw.codes_per_feature())?;
    let library: ObjectLibrary = read_json(&dir.join("library.json"))?;
    let stats: LayoutStats = read_json(&dir.join("stats.json"))?;
    let mut scenes = Vec::with_capacity(scenes_file.entries.len());
    let mut instructions = Vec::with_capacity(scenes_file.entries.len());
    for e in &scenes_file.entries {
        scenes.push(e.scene.to_scene(&config.scene, strict)?);
        instructions.push(e.instruction.clone());
    }
    let bundle = DatasetBundle::assemble(config.scene, config.seed, scenes, instructions, codebook, library)?;
    let close = bundle
        .stats
        .mean
        .iter()
        .chain(&bundle.stats.std)
        .zip(stats.mean.iter().chain(&stats.std))
        .all(|(a, b)| (a - b).abs() <= 1e-12);
    if !close {
        return Err(Error::invalid("stats.json disagrees with the scenes"));
    }
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scene() -> Scene {
        let mut a = ObjectInstance::new(0, [0.1, 0.2, 0.25], [2.0, 1.6, 0.5], 0.3, vec![0.5; 16]).with_asset("bed-1");
        a.codes = None;
        let mut b = ObjectInstance::new(5, [0.0, 0.1, 0.9], [0.3, 0.3, 0.5], -1.0, Vec::new());
        b.codes = Some(vec![1, 2, 3, 4]);
        Scene::new("s0", vec![a, b])
    }

    #[test]
    fn scene_roundtrip_is_identity() {
        let config = SceneConfig::desk_default();
        let s = scene();
        let text = scene_to_string(&s, &config, true).unwrap();
        assert_eq!(parse_scene(&text, &config, true).unwrap(), s);
        assert_eq!(parse_scene(&text, &config, false).unwrap(), s);
    }

    #[test]
    fn strict_mode_rejects_unknown_fields() {
        let config = SceneConfig::desk_default();
        let mut v: Value = serde_json::from_str(&scene_to_string(&scene(), &config, false).unwrap()).unwrap();
        v["objects"][0]["colour"] = Value::from("red");
        let text = v.to_string();
        assert!(parse_scene(&text, &config, false).is_ok());
        assert!(parse_scene(&text, &config, true).is_err());
    }

    #[test]
    fn mismatched_category_is_rejected() {
        let config = SceneConfig::desk_default();
        let mut v: Value = serde_json::from_str(&scene_to_string(&scene(), &config, false).unwrap()).unwrap();
        v["objects"][0]["category"] = Value::from("lamp");
        assert!(parse_scene(&v.to_string(), &config, false).is_err());
    }
}
