//! Core library for UnCoRd-style question answering over symbolic scenes.
//!
//! Structured questions (CLEVR-style functional programs, serialized token
//! sequences, or question-graph files) are compiled into a question-graph
//! representation and answered by a recursive assignment search that invokes
//! pluggable visual estimators. Oracle estimators read scene ground truth;
//! a noise wrapper perturbs them deterministically for error-budget studies.

pub mod answer;
pub mod brute;
pub mod clevr;
pub mod datagen;
pub mod engine;
pub mod estimator;
pub mod eval;
pub mod graph;
pub mod scene;
pub mod tokens;
pub mod vocab;

pub use graph::{
    validate_graph, AnswerSpec, CompareMode, CompareOp, Edge, Node, NodeId, NodeKind, Quantifier,
    QuantityCompare, QuestionGraph, RelationSpec, RequirementBundle, ValidationReport,
};
pub use tokens::{deserialize_tokens, repair_tokens, serialize_graph, TokenSequence};
pub use vocab::{
    ConceptKind, ConceptVocabulary, CLASS_QUERY, COUNT_SET_PROPERTY, UNCONSTRAINED_CLASS,
};
