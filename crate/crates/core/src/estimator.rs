//! Visual estimator suites: the five basic procedures behind the answering
//! engine (detect class, check property, query property, set property,
//! check relation), with vocabulary introspection.
//!
//! [`OracleEstimators`] answers from scene ground truth. [`NoisyEstimators`]
//! wraps any suite and perturbs replies with per-procedure error rates;
//! every perturbation is a pure function of (seed, query), so replies are
//! reproducible regardless of call order or interleaving, and every reply
//! reports whether it was perturbed.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{CompareMode, RelationSpec};
use crate::scene::{is_geometric_relation, spatial_relation, superlative_relation, Scene};
use crate::vocab::{
    ConceptKind, ConceptVocabulary, UnsupportedConcept, CLASS_QUERY, COUNT_SET_PROPERTY,
    UNCONSTRAINED_CLASS,
};

/// One detected object with its confidence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub object: usize,
    pub score: f64,
}

/// An estimator reply: the value plus whether noise touched it.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate<T> {
    pub value: T,
    pub perturbed: bool,
}

impl<T> Estimate<T> {
    pub fn exact(value: T) -> Self {
        Estimate {
            value,
            perturbed: false,
        }
    }

    fn noisy(value: T) -> Self {
        Estimate {
            value,
            perturbed: true,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EstimatorError {
    #[error(transparent)]
    Unsupported(#[from] UnsupportedConcept),
    /// The property type is supported but this object carries no value for
    /// it (possible only in hand-built scenes with partial attributes).
    #[error("object {object} has no '{property_type}' attribute")]
    MissingAttribute {
        object: usize,
        property_type: String,
    },
}

pub type EstimatorResult<T> = Result<Estimate<T>, EstimatorError>;

/// Concepts a suite can evaluate; synonyms are pre-expanded into the sets.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SupportedConcepts {
    pub classes: BTreeSet<String>,
    pub property_values: BTreeSet<String>,
    pub property_types: BTreeSet<String>,
    pub set_properties: BTreeSet<String>,
    pub relations: BTreeSet<String>,
}

impl SupportedConcepts {
    /// What an oracle over `vocab`-grounded scenes can evaluate: every
    /// class (plus superordinate groups), every property value and type,
    /// the class query, set cardinality, and those vocabulary relations
    /// that have a geometric meaning over positions.
    pub fn for_oracle(vocab: &ConceptVocabulary) -> Self {
        let mut s = SupportedConcepts::default();
        s.classes.extend(vocab.classes().iter().cloned());
        s.classes.extend(vocab.taxonomy().keys().cloned());
        for values in vocab.property_types().filter_map(|t| vocab.values_of(t)) {
            s.property_values.extend(values.iter().cloned());
        }
        s.property_types
            .extend(vocab.property_types().map(str::to_string));
        s.property_types.insert(CLASS_QUERY.to_string());
        s.set_properties.insert(COUNT_SET_PROPERTY.to_string());
        s.relations.extend(
            vocab
                .relations()
                .iter()
                .filter(|r| {
                    is_geometric_relation(r) || r.as_str() == "closest" || r.as_str() == "farthest"
                })
                .cloned(),
        );
        // Surface forms resolve to whatever their canonical form supports.
        for (surface, target) in vocab.synonyms() {
            if s.classes.contains(target) || target == UNCONSTRAINED_CLASS {
                s.classes.insert(surface.clone());
            }
            if s.property_values.contains(target) {
                s.property_values.insert(surface.clone());
            }
            if s.property_types.contains(target) {
                s.property_types.insert(surface.clone());
            }
            if s.relations.contains(target) {
                s.relations.insert(surface.clone());
            }
        }
        s
    }

    pub fn supports_class(&self, name: &str) -> bool {
        name == UNCONSTRAINED_CLASS || self.classes.contains(name)
    }

    pub fn supports_relation(&self, spec: &RelationSpec) -> Option<UnsupportedConcept> {
        match spec {
            RelationSpec::Spatial(name) | RelationSpec::Superlative(name) => {
                if self.relations.contains(name) {
                    None
                } else {
                    Some(UnsupportedConcept::new(ConceptKind::Relation, name))
                }
            }
            RelationSpec::PropertyCompare { property_type, .. } => {
                if self.property_types.contains(property_type) {
                    None
                } else {
                    Some(UnsupportedConcept::new(
                        ConceptKind::PropertyType,
                        property_type,
                    ))
                }
            }
        }
    }
}

/// The five basic procedures, plus introspection.
pub trait EstimatorSuite {
    /// Objects of `class`, ranked by descending score (ties by id).
    /// Superordinate classes expand to their member classes.
    fn detect(&self, class: &str) -> EstimatorResult<Vec<Detection>>;

    /// Does `object` carry property `value`?
    fn has_property(&self, object: usize, value: &str) -> EstimatorResult<bool>;

    /// The object's value of `property_type` ([`CLASS_QUERY`] for its class).
    fn query_property(&self, object: usize, property_type: &str) -> EstimatorResult<String>;

    /// A property of a whole object set ("number" -> cardinality).
    fn set_property(&self, name: &str, objects: &[usize]) -> EstimatorResult<String>;

    /// Does `subject` stand in the relation to `object`?
    fn relation(&self, subject: usize, object: usize, spec: &RelationSpec)
        -> EstimatorResult<bool>;

    fn support(&self) -> &SupportedConcepts;

    fn vocabulary(&self) -> &ConceptVocabulary;
}

// ---------------------------------------------------------------------------
// Oracle
// ---------------------------------------------------------------------------

/// Ground-truth estimators over a symbolic scene.
pub struct OracleEstimators<'a> {
    scene: &'a Scene,
    support: SupportedConcepts,
}

pub fn oracle_estimators(scene: &Scene) -> OracleEstimators<'_> {
    OracleEstimators {
        support: SupportedConcepts::for_oracle(&scene.vocabulary),
        scene,
    }
}

impl<'a> OracleEstimators<'a> {
    fn object(&self, id: usize) -> Result<&crate::scene::SceneObject, EstimatorError> {
        self.scene.objects.get(id).ok_or_else(|| {
            EstimatorError::Unsupported(UnsupportedConcept::new(
                ConceptKind::Class,
                &format!("object #{id}"),
            ))
        })
    }
}

impl<'a> EstimatorSuite for OracleEstimators<'a> {
    fn detect(&self, class: &str) -> EstimatorResult<Vec<Detection>> {
        let vocab = &self.scene.vocabulary;
        let canonical = vocab.canonical(class);
        let mut hits: Vec<Detection> = if canonical == UNCONSTRAINED_CLASS {
            self.scene
                .objects
                .iter()
                .map(|o| Detection {
                    object: o.id,
                    score: o.score,
                })
                .collect()
        } else {
            if !self.support.supports_class(canonical) {
                return Err(UnsupportedConcept::new(ConceptKind::Class, class).into());
            }
            let wanted = vocab.expand_superordinate(canonical);
            self.scene
                .objects
                .iter()
                .filter(|o| wanted.contains(&o.class))
                .map(|o| Detection {
                    object: o.id,
                    score: o.score,
                })
                .collect()
        };
        hits.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.object.cmp(&b.object)));
        Ok(Estimate::exact(hits))
    }

    fn has_property(&self, object: usize, value: &str) -> EstimatorResult<bool> {
        let vocab = &self.scene.vocabulary;
        let canonical = vocab.canonical(value);
        let Some(ptype) = vocab.type_of_value(canonical) else {
            return Err(UnsupportedConcept::new(ConceptKind::Property, value).into());
        };
        let obj = self.object(object)?;
        Ok(Estimate::exact(obj.attribute(ptype) == Some(canonical)))
    }

    fn query_property(&self, object: usize, property_type: &str) -> EstimatorResult<String> {
        let vocab = &self.scene.vocabulary;
        let canonical = vocab.canonical(property_type);
        let obj = self.object(object)?;
        if canonical == CLASS_QUERY {
            return Ok(Estimate::exact(obj.class.clone()));
        }
        if !vocab.is_property_type(canonical) {
            return Err(UnsupportedConcept::new(ConceptKind::PropertyType, property_type).into());
        }
        match obj.attribute(canonical) {
            Some(v) => Ok(Estimate::exact(v.to_string())),
            None => Err(EstimatorError::MissingAttribute {
                object,
                property_type: canonical.to_string(),
            }),
        }
    }

    fn set_property(&self, name: &str, objects: &[usize]) -> EstimatorResult<String> {
        if name == COUNT_SET_PROPERTY {
            Ok(Estimate::exact(objects.len().to_string()))
        } else {
            Err(UnsupportedConcept::new(ConceptKind::SetProperty, name).into())
        }
    }

    fn relation(
        &self,
        subject: usize,
        object: usize,
        spec: &RelationSpec,
    ) -> EstimatorResult<bool> {
        let vocab = &self.scene.vocabulary;
        let subj = self.object(subject)?;
        let obj = self.object(object)?;
        match spec {
            RelationSpec::Spatial(name) => {
                let canonical = vocab.canonical(name);
                if !self.support.relations.contains(canonical) {
                    return Err(UnsupportedConcept::new(ConceptKind::Relation, name).into());
                }
                if is_geometric_relation(canonical) {
                    Ok(Estimate::exact(spatial_relation(subj, obj, canonical)?))
                } else {
                    Ok(Estimate::exact(superlative_relation(
                        subj,
                        obj,
                        canonical,
                        &self.scene.objects,
                    )?))
                }
            }
            RelationSpec::Superlative(name) => {
                let canonical = vocab.canonical(name);
                if !self.support.relations.contains(canonical) {
                    return Err(UnsupportedConcept::new(ConceptKind::Relation, name).into());
                }
                Ok(Estimate::exact(superlative_relation(
                    subj,
                    obj,
                    canonical,
                    &self.scene.objects,
                )?))
            }
            RelationSpec::PropertyCompare {
                property_type,
                mode,
            } => {
                let a = self.query_property(subject, property_type)?;
                let b = self.query_property(object, property_type)?;
                let same = a.value == b.value;
                Ok(Estimate::exact(match mode {
                    CompareMode::Same => same,
                    CompareMode::Different => !same,
                }))
            }
        }
    }

    fn support(&self) -> &SupportedConcepts {
        &self.support
    }

    fn vocabulary(&self) -> &ConceptVocabulary {
        &self.scene.vocabulary
    }
}

// ---------------------------------------------------------------------------
// Calibrated noise
// ---------------------------------------------------------------------------

/// Per-procedure error rates. Property flips are keyed by property type;
/// absent types use the default rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorModel {
    #[serde(default)]
    pub detect_miss: f64,
    #[serde(default)]
    pub property_flip: BTreeMap<String, f64>,
    #[serde(default)]
    pub default_property_flip: f64,
    #[serde(default)]
    pub relation_flip: f64,
}

impl ErrorModel {
    pub fn zero() -> Self {
        ErrorModel {
            detect_miss: 0.0,
            property_flip: BTreeMap::new(),
            default_property_flip: 0.0,
            relation_flip: 0.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.detect_miss == 0.0
            && self.default_property_flip == 0.0
            && self.relation_flip == 0.0
            && self.property_flip.values().all(|r| *r == 0.0)
    }

    pub fn flip_rate(&self, property_type: &str) -> f64 {
        self.property_flip
            .get(property_type)
            .copied()
            .unwrap_or(self.default_property_flip)
    }

    pub fn load(path: &Path) -> Result<Self, ErrorModelIoError> {
        let text = std::fs::read_to_string(path)?;
        let model: ErrorModel = serde_json::from_str(&text)?;
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<(), ErrorModelIoError> {
        let all = [
            self.detect_miss,
            self.default_property_flip,
            self.relation_flip,
        ];
        let rates = all.iter().chain(self.property_flip.values());
        for r in rates {
            if !(0.0..=1.0).contains(r) {
                return Err(ErrorModelIoError::BadRate(*r));
            }
        }
        Ok(())
    }
}

impl Default for ErrorModel {
    fn default() -> Self {
        ErrorModel::zero()
    }
}

#[derive(Debug, Error)]
pub enum ErrorModelIoError {
    #[error("error model i/o failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("error model parse failed: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("rate {0} outside [0, 1]")]
    BadRate(f64),
}

/// Noise wrapper around any estimator suite.
pub struct NoisyEstimators<'a> {
    base: &'a dyn EstimatorSuite,
    model: ErrorModel,
    seed: u64,
}

pub fn noisy_estimators<'a>(
    base: &'a dyn EstimatorSuite,
    model: ErrorModel,
    seed: u64,
) -> NoisyEstimators<'a> {
    NoisyEstimators { base, model, seed }
}

impl<'a> NoisyEstimators<'a> {
    /// Deterministic per-query randomness: an FNV-1a fingerprint of the
    /// query keys a fresh stream, so outcomes are independent of call order.
    fn rng(&self, parts: &[&str]) -> ChaCha8Rng {
        let mut h: u64 = 0xcbf29ce484222325 ^ self.seed;
        for part in parts {
            for b in part.as_bytes() {
                h ^= u64::from(*b);
                h = h.wrapping_mul(0x100000001b3);
            }
            h ^= 0xff;
            h = h.wrapping_mul(0x100000001b3);
        }
        ChaCha8Rng::seed_from_u64(h)
    }

    fn draw(&self, rate: f64, parts: &[&str]) -> Option<ChaCha8Rng> {
        if rate <= 0.0 {
            return None;
        }
        let mut rng = self.rng(parts);
        if rng.gen::<f64>() < rate {
            Some(rng)
        } else {
            None
        }
    }

    /// A uniformly chosen wrong value, if any alternative exists.
    fn wrong_value(
        &self,
        rng: &mut ChaCha8Rng,
        property_type: &str,
        correct: &str,
    ) -> Option<String> {
        let vocab = self.base.vocabulary();
        let pool: Vec<&String> = if property_type == CLASS_QUERY {
            vocab.classes().iter().filter(|c| *c != correct).collect()
        } else {
            vocab
                .values_of(property_type)?
                .iter()
                .filter(|v| *v != correct)
                .collect()
        };
        if pool.is_empty() {
            None
        } else {
            Some(pool[rng.gen_range(0..pool.len())].clone())
        }
    }
}

impl<'a> EstimatorSuite for NoisyEstimators<'a> {
    fn detect(&self, class: &str) -> EstimatorResult<Vec<Detection>> {
        let base = self.base.detect(class)?;
        let mut perturbed = base.perturbed;
        let kept: Vec<Detection> = base
            .value
            .into_iter()
            .filter(|d| {
                let missed = self
                    .draw(
                        self.model.detect_miss,
                        &["detect", class, &d.object.to_string()],
                    )
                    .is_some();
                perturbed |= missed;
                !missed
            })
            .collect();
        Ok(Estimate {
            value: kept,
            perturbed,
        })
    }

    fn has_property(&self, object: usize, value: &str) -> EstimatorResult<bool> {
        let base = self.base.has_property(object, value)?;
        let canonical = self.base.vocabulary().canonical(value).to_string();
        let ptype = self
            .base
            .vocabulary()
            .type_of_value(&canonical)
            .unwrap_or("")
            .to_string();
        let rate = self.model.flip_rate(&ptype);
        match self.draw(rate, &["has_property", &object.to_string(), &canonical]) {
            Some(_) => Ok(Estimate::noisy(!base.value)),
            None => Ok(base),
        }
    }

    fn query_property(&self, object: usize, property_type: &str) -> EstimatorResult<String> {
        let base = self.base.query_property(object, property_type)?;
        let canonical = self.base.vocabulary().canonical(property_type).to_string();
        let rate = self.model.flip_rate(&canonical);
        match self.draw(rate, &["query_property", &object.to_string(), &canonical]) {
            Some(mut rng) => match self.wrong_value(&mut rng, &canonical, &base.value) {
                Some(wrong) => Ok(Estimate::noisy(wrong)),
                None => Ok(base),
            },
            None => Ok(base),
        }
    }

    fn set_property(&self, name: &str, objects: &[usize]) -> EstimatorResult<String> {
        // Counting happens over already-detected objects; noise enters
        // through detection and the per-object procedures.
        self.base.set_property(name, objects)
    }

    fn relation(
        &self,
        subject: usize,
        object: usize,
        spec: &RelationSpec,
    ) -> EstimatorResult<bool> {
        let base = self.base.relation(subject, object, spec)?;
        let name = spec.name_tokens(false).join(" ");
        let key = ["relation", &subject.to_string(), &object.to_string(), &name];
        match self.draw(self.model.relation_flip, &key) {
            Some(_) => Ok(Estimate::noisy(!base.value)),
            None => Ok(base),
        }
    }

    fn support(&self) -> &SupportedConcepts {
        self.base.support()
    }

    fn vocabulary(&self) -> &ConceptVocabulary {
        self.base.vocabulary()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{generate_scene, SceneGenParams};
    use std::sync::Arc;

    fn fixture() -> Scene {
        let vocab = Arc::new(ConceptVocabulary::clevr());
        Scene::from_parts(
            vocab,
            &[
                (
                    "sphere",
                    &[
                        ("shape", "sphere"),
                        ("color", "red"),
                        ("material", "rubber"),
                        ("size", "small"),
                    ],
                    [1.0, 0.0, 0.0],
                ),
                (
                    "cube",
                    &[
                        ("shape", "cube"),
                        ("color", "blue"),
                        ("material", "metal"),
                        ("size", "large"),
                    ],
                    [2.0, 1.0, 0.0],
                ),
            ],
        )
    }

    #[test]
    fn detect_unconstrained_returns_all() {
        let vocab = Arc::new(ConceptVocabulary::clevr());
        let scene =
            generate_scene(11, vocab, &SceneGenParams::default().with_objects(5, 5)).unwrap();
        let est = oracle_estimators(&scene);
        assert_eq!(est.detect("object").unwrap().value.len(), 5);
        assert_eq!(est.detect("thing").unwrap().value.len(), 5);
    }

    #[test]
    fn query_reads_attributes_back() {
        let scene = fixture();
        let est = oracle_estimators(&scene);
        assert_eq!(est.query_property(0, "color").unwrap().value, "red");
        assert_eq!(est.query_property(1, "shape").unwrap().value, "cube");
        assert_eq!(est.query_property(1, CLASS_QUERY).unwrap().value, "cube");
        assert!(est.has_property(0, "red").unwrap().value);
        assert!(!est.has_property(0, "blue").unwrap().value);
        // Synonyms resolve before evaluation.
        assert!(est.has_property(0, "tiny").unwrap().value);
    }

    #[test]
    fn unknown_relation_is_reported_not_guessed() {
        let scene = fixture();
        let est = oracle_estimators(&scene);
        let err = est
            .relation(0, 1, &RelationSpec::spatial("in between"))
            .unwrap_err();
        assert_eq!(
            err,
            EstimatorError::Unsupported(UnsupportedConcept::new(
                ConceptKind::Relation,
                "in between"
            ))
        );
    }

    #[test]
    fn superordinate_expansion_in_detect() {
        let vocab = ConceptVocabulary::new(
            ["horse", "dog"].map(String::from),
            BTreeMap::new(),
            [],
            BTreeMap::new(),
            BTreeMap::from([(
                "animal".to_string(),
                BTreeSet::from(["horse".to_string(), "dog".to_string()]),
            )]),
        )
        .unwrap();
        let scene = Scene::from_parts(
            Arc::new(vocab),
            &[("horse", &[], [0.0; 3]), ("dog", &[], [1.0, 0.0, 0.0])],
        );
        let est = oracle_estimators(&scene);
        assert_eq!(est.detect("animal").unwrap().value.len(), 2);
        let err = est.detect("vehicle").unwrap_err();
        assert_eq!(
            err,
            EstimatorError::Unsupported(UnsupportedConcept::new(ConceptKind::Class, "vehicle"))
        );
    }

    #[test]
    fn set_property_counts() {
        let scene = fixture();
        let est = oracle_estimators(&scene);
        assert_eq!(est.set_property("number", &[0, 1]).unwrap().value, "2");
        assert!(est.set_property("area", &[0]).is_err());
    }

    #[test]
    fn zero_noise_matches_oracle_exactly() {
        let scene = fixture();
        let oracle = oracle_estimators(&scene);
        let noisy = noisy_estimators(&oracle, ErrorModel::zero(), 9);
        for obj in 0..2 {
            for value in ["red", "blue", "metal", "small"] {
                assert_eq!(
                    noisy.has_property(obj, value).unwrap(),
                    oracle.has_property(obj, value).unwrap()
                );
            }
            for t in ["color", "material", "size", "shape"] {
                assert_eq!(
                    noisy.query_property(obj, t).unwrap(),
                    oracle.query_property(obj, t).unwrap()
                );
            }
        }
        assert_eq!(
            noisy.detect("object").unwrap(),
            oracle.detect("object").unwrap()
        );
    }

    #[test]
    fn full_miss_rate_drops_everything() {
        let scene = fixture();
        let oracle = oracle_estimators(&scene);
        let model = ErrorModel {
            detect_miss: 1.0,
            ..ErrorModel::zero()
        };
        let noisy = noisy_estimators(&oracle, model, 3);
        let detections = noisy.detect("object").unwrap();
        assert!(detections.value.is_empty());
        assert!(detections.perturbed);
    }

    #[test]
    fn noise_is_deterministic_per_query() {
        let scene = fixture();
        let oracle = oracle_estimators(&scene);
        let model = ErrorModel {
            default_property_flip: 0.5,
            ..ErrorModel::zero()
        };
        let noisy = noisy_estimators(&oracle, model, 42);
        let first = noisy.query_property(0, "color").unwrap();
        for _ in 0..5 {
            assert_eq!(noisy.query_property(0, "color").unwrap(), first);
        }
    }

    #[test]
    fn observed_flip_fraction_tracks_rate() {
        let vocab = Arc::new(ConceptVocabulary::clevr());
        let scene =
            generate_scene(5, vocab, &SceneGenParams::default().with_objects(8, 8)).unwrap();
        let oracle = oracle_estimators(&scene);
        let model = ErrorModel {
            property_flip: BTreeMap::from([("color".to_string(), 0.02)]),
            ..ErrorModel::zero()
        };
        // 10,000 distinct queries via distinct seeds over the 8 objects.
        let mut flipped = 0u32;
        let total = 10_000;
        for i in 0..total {
            let noisy = noisy_estimators(&oracle, model.clone(), i as u64);
            let reply = noisy.query_property((i % 8) as usize, "color").unwrap();
            if reply.perturbed {
                flipped += 1;
            }
        }
        let fraction = f64::from(flipped) / f64::from(total as u32);
        assert!((fraction - 0.02).abs() < 0.005, "fraction {fraction}");
    }
}
