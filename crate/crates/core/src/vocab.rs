//! Concept vocabulary: object classes, typed property values, relation names,
//! synonym normalization and a superordinate taxonomy.
//!
//! All engine components share one vocabulary. Concepts outside it are legal
//! in a question graph (they surface as `UnsupportedConcept` at answer time),
//! but the vocabulary is the source of truth for what the estimators support.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The literal class name meaning "any object".
pub const UNCONSTRAINED_CLASS: &str = "object";

/// Reserved query-property name that returns an object's class.
pub const CLASS_QUERY: &str = "type";

/// The one supported set property: cardinality of the satisfying set.
pub const COUNT_SET_PROPERTY: &str = "number";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VocabError {
    #[error("synonym target '{0}' is itself a synonym (chains are not allowed)")]
    SynonymChain(String),
    #[error("property value '{value}' appears under both '{first}' and '{second}'")]
    AmbiguousValue {
        value: String,
        first: String,
        second: String,
    },
    #[error("taxonomy entry '{group}' references unknown class '{class}'")]
    TaxonomyUnknownClass { group: String, class: String },
    #[error("taxonomy entry '{0}' is empty")]
    EmptyTaxonomyGroup(String),
}

/// Kinds of concepts a vocabulary (and an estimator suite) knows about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConceptKind {
    Class,
    Property,
    PropertyType,
    SetProperty,
    Relation,
}

impl fmt::Display for ConceptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ConceptKind::Class => "class",
            ConceptKind::Property => "property",
            ConceptKind::PropertyType => "property type",
            ConceptKind::SetProperty => "set property",
            ConceptKind::Relation => "relation",
        };
        f.write_str(s)
    }
}

/// Signal raised when a question names a concept no estimator can evaluate.
/// Its display form is the engine's limitation answer.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[error("Unknown {kind} '{name}'")]
pub struct UnsupportedConcept {
    pub kind: ConceptKind,
    pub name: String,
}

impl UnsupportedConcept {
    pub fn new(kind: ConceptKind, name: &str) -> Self {
        UnsupportedConcept {
            kind,
            name: name.to_string(),
        }
    }
}

/// Immutable concept vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptVocabulary {
    classes: BTreeSet<String>,
    /// property type -> set of value names; values are disjoint across types.
    property_types: BTreeMap<String, BTreeSet<String>>,
    relations: BTreeSet<String>,
    /// surface form -> canonical form; targets are never themselves keys.
    synonyms: BTreeMap<String, String>,
    /// superordinate class -> member classes.
    taxonomy: BTreeMap<String, BTreeSet<String>>,
    /// value -> owning property type (derived, rebuilt on construction).
    #[serde(skip)]
    value_types: BTreeMap<String, String>,
}

impl ConceptVocabulary {
    pub fn new(
        classes: impl IntoIterator<Item = String>,
        property_types: BTreeMap<String, BTreeSet<String>>,
        relations: impl IntoIterator<Item = String>,
        synonyms: BTreeMap<String, String>,
        taxonomy: BTreeMap<String, BTreeSet<String>>,
    ) -> Result<Self, VocabError> {
        let mut v = ConceptVocabulary {
            classes: classes.into_iter().collect(),
            property_types,
            relations: relations.into_iter().collect(),
            synonyms,
            taxonomy,
            value_types: BTreeMap::new(),
        };
        v.rebuild_index()?;
        Ok(v)
    }

    fn rebuild_index(&mut self) -> Result<(), VocabError> {
        self.value_types.clear();
        for (ptype, values) in &self.property_types {
            for value in values {
                if let Some(prev) = self.value_types.insert(value.clone(), ptype.clone()) {
                    return Err(VocabError::AmbiguousValue {
                        value: value.clone(),
                        first: prev,
                        second: ptype.clone(),
                    });
                }
            }
        }
        for (surface, target) in &self.synonyms {
            if surface != target && self.synonyms.contains_key(target) {
                return Err(VocabError::SynonymChain(target.clone()));
            }
        }
        for (group, members) in &self.taxonomy {
            if members.is_empty() {
                return Err(VocabError::EmptyTaxonomyGroup(group.clone()));
            }
            for class in members {
                if !self.classes.contains(class) {
                    return Err(VocabError::TaxonomyUnknownClass {
                        group: group.clone(),
                        class: class.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn classes(&self) -> &BTreeSet<String> {
        &self.classes
    }

    pub fn relations(&self) -> &BTreeSet<String> {
        &self.relations
    }

    pub fn property_types(&self) -> impl Iterator<Item = &str> {
        self.property_types.keys().map(String::as_str)
    }

    pub fn values_of(&self, property_type: &str) -> Option<&BTreeSet<String>> {
        self.property_types.get(property_type)
    }

    /// The property type a (canonical) value belongs to, if any.
    pub fn type_of_value(&self, value: &str) -> Option<&str> {
        self.value_types.get(value).map(String::as_str)
    }

    pub fn synonyms(&self) -> &BTreeMap<String, String> {
        &self.synonyms
    }

    pub fn taxonomy(&self) -> &BTreeMap<String, BTreeSet<String>> {
        &self.taxonomy
    }

    /// Resolve a surface form to its canonical form (identity when unknown).
    pub fn canonical<'a>(&'a self, form: &'a str) -> &'a str {
        self.synonyms.get(form).map(String::as_str).unwrap_or(form)
    }

    pub fn is_class(&self, name: &str) -> bool {
        self.classes.contains(name)
    }

    pub fn is_relation(&self, name: &str) -> bool {
        self.relations.contains(name)
    }

    pub fn is_property_type(&self, name: &str) -> bool {
        self.property_types.contains_key(name)
    }

    pub fn is_superordinate(&self, class: &str) -> bool {
        self.taxonomy.contains_key(class)
    }

    /// Expand a superordinate class to its member classes. Non-superordinate
    /// classes expand to themselves, so the result is never empty.
    pub fn expand_superordinate(&self, class: &str) -> BTreeSet<String> {
        match self.taxonomy.get(class) {
            Some(members) => members.clone(),
            None => BTreeSet::from([class.to_string()]),
        }
    }

    pub fn load(path: &Path) -> Result<Self, VocabIoError> {
        let text = std::fs::read_to_string(path)?;
        let mut v: ConceptVocabulary = serde_json::from_str(&text)?;
        v.rebuild_index()?;
        Ok(v)
    }

    pub fn save(&self, path: &Path) -> Result<(), VocabIoError> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    /// The CLEVR concept inventory: 3 shapes, 8 colors, 2 materials, 2 sizes,
    /// 4 spatial relations, plus the dataset's standard synonym table.
    pub fn clevr() -> Self {
        let classes = ["cube", "sphere", "cylinder"].map(String::from);
        let mut types = BTreeMap::new();
        types.insert(
            "color".to_string(),
            [
                "gray", "red", "blue", "green", "brown", "purple", "cyan", "yellow",
            ]
            .map(String::from)
            .into(),
        );
        types.insert(
            "material".to_string(),
            ["rubber", "metal"].map(String::from).into(),
        );
        types.insert(
            "size".to_string(),
            ["small", "large"].map(String::from).into(),
        );
        types.insert(
            "shape".to_string(),
            ["cube", "sphere", "cylinder"].map(String::from).into(),
        );
        let relations = ["left", "right", "front", "behind"].map(String::from);
        let synonyms: BTreeMap<String, String> = [
            ("ball", "sphere"),
            ("block", "cube"),
            ("big", "large"),
            ("tiny", "small"),
            ("metallic", "metal"),
            ("shiny", "metal"),
            ("matte", "rubber"),
            ("thing", UNCONSTRAINED_CLASS),
        ]
        .into_iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect();
        ConceptVocabulary::new(classes, types, relations, synonyms, BTreeMap::new())
            .expect("clevr vocabulary is well formed")
    }

    /// CLEVR inventory extended with superlative relations and a small
    /// real-world block (classes, a taxonomy group, one extra relation), used
    /// by scene generation and the elaboration fixtures.
    pub fn clevr_extended() -> Self {
        let mut v = Self::clevr();
        v.relations.insert("closest".to_string());
        v.relations.insert("farthest".to_string());
        v
    }
}

#[derive(Debug, Error)]
pub enum VocabIoError {
    #[error("vocabulary i/o failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("vocabulary parse failed: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Invalid(#[from] VocabError),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clevr_inventory_counts() {
        let v = ConceptVocabulary::clevr();
        assert_eq!(v.classes().len(), 3);
        assert_eq!(v.relations().len(), 4);
        // 8 colors + 2 materials + 2 sizes (shape values mirror the classes).
        let non_shape: usize = v
            .property_types()
            .filter(|t| *t != "shape")
            .map(|t| v.values_of(t).unwrap().len())
            .sum();
        assert_eq!(non_shape, 12);
    }

    #[test]
    fn synonyms_resolve_one_step() {
        let v = ConceptVocabulary::clevr();
        assert_eq!(v.canonical("ball"), "sphere");
        assert_eq!(v.canonical("sphere"), "sphere");
        assert_eq!(v.canonical("metallic"), "metal");
    }

    #[test]
    fn synonym_chain_rejected() {
        let synonyms: BTreeMap<String, String> = [("a", "b"), ("b", "c")]
            .into_iter()
            .map(|(x, y)| (x.to_string(), y.to_string()))
            .collect();
        let err = ConceptVocabulary::new(
            ["c".to_string()],
            BTreeMap::new(),
            [],
            synonyms,
            BTreeMap::new(),
        )
        .unwrap_err();
        assert_eq!(err, VocabError::SynonymChain("b".to_string()));
    }

    #[test]
    fn values_disjoint_across_types() {
        let mut types = BTreeMap::new();
        types.insert("color".to_string(), BTreeSet::from(["red".to_string()]));
        types.insert("flavor".to_string(), BTreeSet::from(["red".to_string()]));
        let err =
            ConceptVocabulary::new([], types, [], BTreeMap::new(), BTreeMap::new()).unwrap_err();
        assert!(matches!(err, VocabError::AmbiguousValue { .. }));
    }

    #[test]
    fn superordinate_expansion() {
        let taxonomy = BTreeMap::from([(
            "animal".to_string(),
            BTreeSet::from(["horse".to_string(), "dog".to_string(), "cat".to_string()]),
        )]);
        let v = ConceptVocabulary::new(
            ["horse", "dog", "cat"].map(String::from),
            BTreeMap::new(),
            [],
            BTreeMap::new(),
            taxonomy,
        )
        .unwrap();
        assert_eq!(
            v.expand_superordinate("animal"),
            BTreeSet::from(["horse".to_string(), "dog".to_string(), "cat".to_string()])
        );
        assert_eq!(
            v.expand_superordinate("horse"),
            BTreeSet::from(["horse".to_string()])
        );
        assert!(!v.expand_superordinate("unknown").is_empty());
        // A group covering the whole inventory expands to every class.
        let mut taxonomy = v.taxonomy().clone();
        taxonomy.insert("thing".to_string(), v.classes().clone());
        let v = ConceptVocabulary::new(
            v.classes().iter().cloned(),
            BTreeMap::new(),
            [],
            BTreeMap::new(),
            taxonomy,
        )
        .unwrap();
        assert_eq!(v.expand_superordinate("thing").len(), 3);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.json");
        let v = ConceptVocabulary::clevr_extended();
        v.save(&path).unwrap();
        let back = ConceptVocabulary::load(&path).unwrap();
        assert_eq!(v, back);
        assert_eq!(back.type_of_value("cyan"), Some("color"));
    }

    #[test]
    fn taxonomy_members_must_be_classes() {
        let taxonomy = BTreeMap::from([(
            "animal".to_string(),
            BTreeSet::from(["unicorn".to_string()]),
        )]);
        let err = ConceptVocabulary::new(
            ["horse".to_string()],
            BTreeMap::new(),
            [],
            BTreeMap::new(),
            taxonomy,
        )
        .unwrap_err();
        assert!(matches!(err, VocabError::TaxonomyUnknownClass { .. }));
    }
}
