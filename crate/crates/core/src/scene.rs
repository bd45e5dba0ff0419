//! Symbolic scenes: the ground truth that oracle estimators read.
//!
//! A scene is a flat list of objects, each with a class, a typed attribute
//! map, a 3-D position and a detection score. Spatial relations are decided
//! from positions: axis 0 is the viewer's x (left/right), axis 1 is depth
//! (front = smaller depth); superlatives use Euclidean distance over all
//! three coordinates with ties broken by lower object id.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use thiserror::Error;

use crate::vocab::{ConceptKind, ConceptVocabulary, UnsupportedConcept};

#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    pub id: usize,
    pub class: String,
    /// property type -> canonical value.
    pub attributes: BTreeMap<String, String>,
    pub position: [f64; 3],
    /// Detection confidence in [0, 1]; ground truth objects carry 1.0.
    pub score: f64,
}

impl SceneObject {
    pub fn attribute(&self, property_type: &str) -> Option<&str> {
        self.attributes.get(property_type).map(String::as_str)
    }
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub objects: Vec<SceneObject>,
    pub vocabulary: Arc<ConceptVocabulary>,
}

impl Scene {
    pub fn new(vocabulary: Arc<ConceptVocabulary>, objects: Vec<SceneObject>) -> Self {
        Scene {
            objects,
            vocabulary,
        }
    }

    /// Test/fixture helper: objects given as (class, attribute pairs,
    /// position), ids assigned in order, scores 1.0.
    pub fn from_parts(
        vocabulary: Arc<ConceptVocabulary>,
        parts: &[(&str, &[(&str, &str)], [f64; 3])],
    ) -> Self {
        let objects = parts
            .iter()
            .enumerate()
            .map(|(id, (class, attrs, position))| SceneObject {
                id,
                class: class.to_string(),
                attributes: attrs
                    .iter()
                    .map(|(t, v)| (t.to_string(), v.to_string()))
                    .collect(),
                position: *position,
                score: 1.0,
            })
            .collect();
        Scene::new(vocabulary, objects)
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn object(&self, id: usize) -> &SceneObject {
        &self.objects[id]
    }
}

pub fn distance(a: &SceneObject, b: &SceneObject) -> f64 {
    a.position
        .iter()
        .zip(&b.position)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Location-based relation between two distinct objects. Equal coordinates
/// make both directions false.
pub fn spatial_relation(
    a: &SceneObject,
    b: &SceneObject,
    name: &str,
) -> Result<bool, UnsupportedConcept> {
    match name {
        "left" => Ok(a.position[0] < b.position[0]),
        "right" => Ok(a.position[0] > b.position[0]),
        "front" => Ok(a.position[1] < b.position[1]),
        "behind" => Ok(a.position[1] > b.position[1]),
        other => Err(UnsupportedConcept::new(ConceptKind::Relation, other)),
    }
}

pub fn is_geometric_relation(name: &str) -> bool {
    matches!(name, "left" | "right" | "front" | "behind")
}

/// True iff `candidate` attains the minimum (closest) or maximum (farthest)
/// distance to `reference` among all objects other than the reference; ties
/// go to the lower object id.
pub fn superlative_relation(
    candidate: &SceneObject,
    reference: &SceneObject,
    name: &str,
    all_objects: &[SceneObject],
) -> Result<bool, UnsupportedConcept> {
    let closest = match name {
        "closest" => true,
        "farthest" => false,
        other => return Err(UnsupportedConcept::new(ConceptKind::Relation, other)),
    };
    let winner = all_objects
        .iter()
        .filter(|o| o.id != reference.id)
        .min_by(|a, b| {
            let (da, db) = (distance(a, reference), distance(b, reference));
            let ord = if closest {
                da.total_cmp(&db)
            } else {
                db.total_cmp(&da)
            };
            ord.then(a.id.cmp(&b.id))
        });
    Ok(winner.map_or(false, |w| w.id == candidate.id))
}

// ---------------------------------------------------------------------------
// Scene generation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct SceneGenParams {
    /// Inclusive object-count range.
    pub n_objects: (usize, usize),
    pub min_separation: f64,
    /// (x, y, z) sampling intervals.
    pub bounds: [(f64, f64); 3],
}

impl Default for SceneGenParams {
    fn default() -> Self {
        SceneGenParams {
            n_objects: (3, 8),
            min_separation: 0.4,
            bounds: [(-3.0, 3.0), (-3.0, 3.0), (0.0, 1.0)],
        }
    }
}

impl SceneGenParams {
    pub fn with_objects(mut self, lo: usize, hi: usize) -> Self {
        self.n_objects = (lo, hi);
        self
    }
}

#[derive(Debug, Error)]
pub enum SceneGenError {
    #[error("vocabulary has no classes to sample from")]
    EmptyVocabulary,
    #[error("could not place object {index} after {attempts} attempts")]
    PlacementFailure { index: usize, attempts: usize },
}

const PLACEMENT_ATTEMPTS: usize = 200;

/// Deterministic scene sampling: classes uniform, one value per property
/// type (forced to the class name when the class doubles as a value of that
/// type, as CLEVR shapes do), positions pairwise separated by at least
/// `min_separation`.
pub fn generate_scene(
    seed: u64,
    vocabulary: Arc<ConceptVocabulary>,
    params: &SceneGenParams,
) -> Result<Scene, SceneGenError> {
    let classes: Vec<&String> = vocabulary.classes().iter().collect();
    if classes.is_empty() {
        return Err(SceneGenError::EmptyVocabulary);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = params.n_objects;
    let n = if lo >= hi { lo } else { rng.gen_range(lo..=hi) };

    let mut objects: Vec<SceneObject> = Vec::with_capacity(n);
    for id in 0..n {
        let mut position = None;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let candidate = [
                rng.gen_range(params.bounds[0].0..=params.bounds[0].1),
                rng.gen_range(params.bounds[1].0..=params.bounds[1].1),
                rng.gen_range(params.bounds[2].0..=params.bounds[2].1),
            ];
            let clear = objects.iter().all(|o| {
                let d: f64 = o
                    .position
                    .iter()
                    .zip(&candidate)
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum();
                d.sqrt() >= params.min_separation
            });
            if clear {
                position = Some(candidate);
                break;
            }
        }
        let Some(position) = position else {
            return Err(SceneGenError::PlacementFailure {
                index: id,
                attempts: PLACEMENT_ATTEMPTS,
            });
        };
        let class = (*classes[rng.gen_range(0..classes.len())]).clone();
        let mut attributes = BTreeMap::new();
        for ptype in vocabulary.property_types() {
            let values: Vec<&String> = vocabulary
                .values_of(ptype)
                .expect("listed property type")
                .iter()
                .collect();
            if values.is_empty() {
                continue;
            }
            let value = if values.iter().any(|v| **v == class) {
                class.clone()
            } else {
                (*values[rng.gen_range(0..values.len())]).clone()
            };
            attributes.insert(ptype.to_string(), value);
        }
        objects.push(SceneObject {
            id,
            class,
            attributes,
            position,
            score: 1.0,
        });
    }
    Ok(Scene::new(vocabulary, objects))
}

// ---------------------------------------------------------------------------
// JSON format (CLEVR compatible, with an extension form)
// ---------------------------------------------------------------------------

#[derive(Debug, Error)]
pub enum SceneParseError {
    #[error("scene json malformed: {0}")]
    Json(#[from] serde_json::Error),
    #[error("scene json malformed: {0}")]
    Shape(String),
    #[error("scene i/o failed: {0}")]
    Io(#[from] std::io::Error),
}

const CLEVR_ATTRS: [&str; 4] = ["shape", "color", "material", "size"];

impl Scene {
    /// Objects with `shape`/`color`/`material`/`size` keys parse as CLEVR
    /// records (`3d_coords` positions, class = shape); objects with a
    /// `class` key use the extension form `{class, attributes, position,
    /// score}`. Unknown keys are ignored.
    pub fn from_json(
        value: &Value,
        vocabulary: Arc<ConceptVocabulary>,
    ) -> Result<Self, SceneParseError> {
        let objs = value
            .get("objects")
            .and_then(Value::as_array)
            .ok_or_else(|| SceneParseError::Shape("missing 'objects' array".to_string()))?;
        let mut objects = Vec::with_capacity(objs.len());
        for (id, obj) in objs.iter().enumerate() {
            objects.push(parse_object(id, obj)?);
        }
        Ok(Scene::new(vocabulary, objects))
    }

    pub fn to_json(&self) -> Value {
        let objects: Vec<Value> = self.objects.iter().map(object_to_json).collect();
        json!({ "objects": objects })
    }

    pub fn load(path: &Path, vocabulary: Arc<ConceptVocabulary>) -> Result<Self, SceneParseError> {
        let text = std::fs::read_to_string(path)?;
        let value: Value = serde_json::from_str(&text)?;
        Scene::from_json(&value, vocabulary)
    }

    pub fn save(&self, path: &Path) -> Result<(), SceneParseError> {
        std::fs::write(path, serde_json::to_string_pretty(&self.to_json())?)?;
        Ok(())
    }
}

/// Parse a `{scenes: [...]}` collection (the CLEVR scene-file layout), a
/// bare array, or a single scene object.
pub fn parse_scene_set(
    value: &Value,
    vocabulary: &Arc<ConceptVocabulary>,
) -> Result<Vec<Scene>, SceneParseError> {
    let list: Vec<&Value> = if let Some(scenes) = value.get("scenes").and_then(Value::as_array) {
        scenes.iter().collect()
    } else if let Some(array) = value.as_array() {
        array.iter().collect()
    } else {
        vec![value]
    };
    list.into_iter()
        .map(|v| Scene::from_json(v, Arc::clone(vocabulary)))
        .collect()
}

fn parse_object(id: usize, obj: &Value) -> Result<SceneObject, SceneParseError> {
    let position = read_position(obj)?;
    let score = obj.get("score").and_then(Value::as_f64).unwrap_or(1.0);
    if !(0.0..=1.0).contains(&score) {
        return Err(SceneParseError::Shape(format!(
            "object {id}: score {score} outside [0, 1]"
        )));
    }
    if let Some(class) = obj.get("class").and_then(Value::as_str) {
        let mut attributes = BTreeMap::new();
        if let Some(map) = obj.get("attributes").and_then(Value::as_object) {
            for (k, v) in map {
                let v = v.as_str().ok_or_else(|| {
                    SceneParseError::Shape(format!("object {id}: attribute '{k}' not a string"))
                })?;
                attributes.insert(k.clone(), v.to_string());
            }
        }
        return Ok(SceneObject {
            id,
            class: class.to_string(),
            attributes,
            position,
            score,
        });
    }
    let shape = obj.get("shape").and_then(Value::as_str).ok_or_else(|| {
        SceneParseError::Shape(format!("object {id}: neither 'class' nor 'shape' present"))
    })?;
    let mut attributes = BTreeMap::new();
    for key in CLEVR_ATTRS {
        if let Some(v) = obj.get(key).and_then(Value::as_str) {
            attributes.insert(key.to_string(), v.to_string());
        }
    }
    Ok(SceneObject {
        id,
        class: shape.to_string(),
        attributes,
        position,
        score,
    })
}

fn read_position(obj: &Value) -> Result<[f64; 3], SceneParseError> {
    let coords = obj
        .get("3d_coords")
        .or_else(|| obj.get("position"))
        .and_then(Value::as_array)
        .ok_or_else(|| SceneParseError::Shape("object missing 3d_coords/position".to_string()))?;
    if coords.len() != 3 {
        return Err(SceneParseError::Shape(format!(
            "position has {} coordinates, expected 3",
            coords.len()
        )));
    }
    let mut out = [0.0; 3];
    for (i, c) in coords.iter().enumerate() {
        out[i] = c
            .as_f64()
            .ok_or_else(|| SceneParseError::Shape("non-numeric coordinate".to_string()))?;
    }
    Ok(out)
}

fn object_to_json(o: &SceneObject) -> Value {
    let clevr_form = o.attribute("shape") == Some(o.class.as_str())
        && o.attributes
            .keys()
            .all(|k| CLEVR_ATTRS.contains(&k.as_str()));
    if clevr_form {
        let mut map = serde_json::Map::new();
        for key in CLEVR_ATTRS {
            if let Some(v) = o.attribute(key) {
                map.insert(key.to_string(), json!(v));
            }
        }
        map.insert("3d_coords".to_string(), json!(o.position));
        Value::Object(map)
    } else {
        json!({
            "class": o.class,
            "attributes": o.attributes,
            "position": o.position,
            "score": o.score,
        })
    }
}
