//! Answer values, the shared normalization table, and question families.

use serde::{Deserialize, Serialize};

use crate::graph::{AnswerSpec, QuestionGraph};
use crate::vocab::ConceptVocabulary;

/// A short answer: yes/no, a count, or an attribute value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AnswerValue {
    Bool(bool),
    Count(usize),
    Value(String),
}

impl AnswerValue {
    /// Canonical answer string: "yes"/"no" for booleans, decimal digits for
    /// counts, lowercase canonical concept names for values.
    pub fn normalized(&self, vocab: &ConceptVocabulary) -> String {
        match self {
            AnswerValue::Bool(true) => "yes".to_string(),
            AnswerValue::Bool(false) => "no".to_string(),
            AnswerValue::Count(n) => n.to_string(),
            AnswerValue::Value(v) => vocab.canonical(&v.to_lowercase()).to_string(),
        }
    }
}

/// Normalize free-form answer text (an answer key, a typed expectation) with
/// the same table the engine and interpreter use.
pub fn normalize_answer_text(text: &str, vocab: &ConceptVocabulary) -> String {
    let t = text.trim().to_lowercase();
    match t.as_str() {
        "true" => "yes".to_string(),
        "false" => "no".to_string(),
        _ => vocab.canonical(&t).to_string(),
    }
}

/// The question families of the evaluation breakdown, plus the elemental
/// bucket used by dataset enhancement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionFamily {
    Exist,
    Count,
    CompareNumbers,
    QueryAttribute,
    CompareAttribute,
    Elemental,
}

impl QuestionFamily {
    pub const EVAL_FAMILIES: [QuestionFamily; 5] = [
        QuestionFamily::Exist,
        QuestionFamily::Count,
        QuestionFamily::CompareNumbers,
        QuestionFamily::QueryAttribute,
        QuestionFamily::CompareAttribute,
    ];

    /// Classified from the graph's answer spec, not from question text, so
    /// it works for any input format.
    pub fn classify(graph: &QuestionGraph) -> QuestionFamily {
        match graph.answer_spec() {
            AnswerSpec::Existence => QuestionFamily::Exist,
            AnswerSpec::SetProperty { .. } => QuestionFamily::Count,
            AnswerSpec::QuantityCompare { .. } => QuestionFamily::CompareNumbers,
            AnswerSpec::QueryProperty { .. } => QuestionFamily::QueryAttribute,
            AnswerSpec::CompareEdge { .. } => QuestionFamily::CompareAttribute,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            QuestionFamily::Exist => "Exist",
            QuestionFamily::Count => "Count",
            QuestionFamily::CompareNumbers => "Compare Numbers",
            QuestionFamily::QueryAttribute => "Query Attribute",
            QuestionFamily::CompareAttribute => "Compare Attribute",
            QuestionFamily::Elemental => "Elemental",
        }
    }
}

impl std::fmt::Display for QuestionFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Node;
    use crate::vocab::UNCONSTRAINED_CLASS;

    #[test]
    fn normalization_table() {
        let vocab = ConceptVocabulary::clevr();
        assert_eq!(AnswerValue::Bool(true).normalized(&vocab), "yes");
        assert_eq!(AnswerValue::Count(12).normalized(&vocab), "12");
        assert_eq!(
            AnswerValue::Value("Metallic".to_string()).normalized(&vocab),
            "metal"
        );
        assert_eq!(normalize_answer_text(" Ball ", &vocab), "sphere");
    }

    #[test]
    fn classification_from_answer_spec() {
        let count = QuestionGraph::single(Node::regular(0, UNCONSTRAINED_CLASS).with_count());
        assert_eq!(QuestionFamily::classify(&count), QuestionFamily::Count);
        let exist = QuestionGraph::single(Node::regular(0, "sphere"));
        assert_eq!(QuestionFamily::classify(&exist), QuestionFamily::Exist);
        let query = QuestionGraph::single(Node::regular(0, "sphere").with_query("color"));
        assert_eq!(
            QuestionFamily::classify(&query),
            QuestionFamily::QueryAttribute
        );
    }
}
