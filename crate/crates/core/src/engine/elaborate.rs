//! Elaboration templates and alternative suggestions.
//!
//! Full answers are rendered deterministically from the search outcome:
//! quantifier failures use the "There are not enough ..." template, missing
//! classes get "There is no <class>" plus a relaxed retry ("The boat is
//! behind a boat"), and superordinate answers carry a subclass note.

use crate::engine::search::{Diagnostic, DiagnosticKind};
use crate::graph::{NodeId, QuestionGraph, RelationSpec};

/// Naive pluralization with an exception list.
pub fn pluralize(word: &str) -> String {
    const IRREGULAR: [(&str, &str); 10] = [
        ("person", "people"),
        ("man", "men"),
        ("woman", "women"),
        ("child", "children"),
        ("foot", "feet"),
        ("tooth", "teeth"),
        ("mouse", "mice"),
        ("goose", "geese"),
        ("sheep", "sheep"),
        ("fish", "fish"),
    ];
    for (s, p) in IRREGULAR {
        if word == s {
            return p.to_string();
        }
    }
    if word.ends_with('s')
        || word.ends_with('x')
        || word.ends_with('z')
        || word.ends_with("ch")
        || word.ends_with("sh")
    {
        return format!("{word}es");
    }
    if word.len() > 1 && word.ends_with('y') {
        let stem = &word[..word.len() - 1];
        if !stem.ends_with(|c: char| "aeiou".contains(c)) {
            return format!("{stem}ies");
        }
    }
    format!("{word}s")
}

/// Human rendering of a relation between a subject and an object.
pub fn relation_text(spec: &RelationSpec) -> String {
    match spec {
        RelationSpec::Spatial(name) => match name.as_str() {
            "left" => "left of".to_string(),
            "right" => "right of".to_string(),
            "front" => "in front of".to_string(),
            other => other.replace('_', " "),
        },
        RelationSpec::Superlative(name) => match name.as_str() {
            "closest" => "closest to".to_string(),
            "farthest" => "farthest from".to_string(),
            other => other.replace('_', " "),
        },
        RelationSpec::PropertyCompare {
            property_type,
            mode,
        } => match mode {
            crate::graph::CompareMode::Same => format!("of the same {property_type} as"),
            crate::graph::CompareMode::Different => format!("of a different {property_type} than"),
        },
    }
}

/// Space-joined property words followed by the class, e.g. "orange kite".
pub fn described_class(properties: &[String], class: &str) -> String {
    let mut parts: Vec<&str> = properties.iter().map(String::as_str).collect();
    parts.push(class);
    parts.join(" ")
}

/// The "There are not enough purple spheres (failed due to a red sphere)"
/// template for a failed `all` (or `exactly n`) assertion.
pub fn quantifier_failure_text(graph: &QuestionGraph, diag: &Diagnostic) -> String {
    let node = graph.node(NodeId(diag.node));
    let described = described_class(&node.asserted_properties, &pluralize(&node.class));
    match &diag.witness {
        Some(w) => format!(
            "There are not enough {described} (failed due to a {} {})",
            w.actual.as_deref().unwrap_or(&w.failed_requirement),
            node.class
        ),
        None => match (diag.expected, diag.found) {
            (Some(e), Some(f)) if e != f => {
                format!("There are not enough {described} (expected {e}, found {f})")
            }
            _ => format!("There are not enough {described}"),
        },
    }
}

/// The leading failure report for a not-grounded answer.
pub fn failure_report(graph: &QuestionGraph, diag: &Diagnostic) -> String {
    let node = graph.node(NodeId(diag.node));
    match diag.kind {
        DiagnosticKind::NoDetection => format!("There is no {}", node.class),
        DiagnosticKind::PropertiesEmptied | DiagnosticKind::RelationsFailed => format!(
            "There is no {}",
            described_class(&node.base_properties, &node.class)
        ),
        DiagnosticKind::QuantifierMismatch => quantifier_failure_text(graph, diag),
        DiagnosticKind::CandidateLimit => {
            format!("Search stopped: {}", diag.message)
        }
    }
}

/// The limitation phrase used as the short answer of a not-grounded
/// value question: "no bottle", "no valid orange kite".
pub fn failure_short(graph: &QuestionGraph, diag: &Diagnostic) -> String {
    let node = graph.node(NodeId(diag.node));
    match diag.kind {
        DiagnosticKind::NoDetection => format!("no {}", node.class),
        DiagnosticKind::PropertiesEmptied | DiagnosticKind::RelationsFailed => format!(
            "no valid {}",
            described_class(&node.base_properties, &node.class)
        ),
        DiagnosticKind::QuantifierMismatch => format!(
            "no valid {}",
            described_class(&node.asserted_properties, &node.class)
        ),
        DiagnosticKind::CandidateLimit => "search limit exceeded".to_string(),
    }
}

/// "There is a yellow kite": the nearest candidate's actual property.
pub fn nearest_candidate_text(graph: &QuestionGraph, diag: &Diagnostic) -> Option<String> {
    let witness = diag.witness.as_ref()?;
    let node = graph.node(NodeId(diag.node));
    let described = match &witness.actual {
        Some(actual) => format!("{actual} {}", node.class),
        None => witness.class.clone(),
    };
    Some(format!("There is a {described}"))
}

/// "The boat is behind a boat": re-grounded statement after a class wildcard,
/// rendered for the first edge at the relaxed node.
pub fn retry_statement(
    graph: &QuestionGraph,
    relaxed: NodeId,
    found_class: &str,
) -> Option<String> {
    let (_, edge) = graph.edges_at(relaxed).next()?;
    let rel = relation_text(&edge.relation);
    if edge.from == relaxed {
        // subject is the other endpoint; the found object fills our slot
        let subject = &graph.node(edge.to).class;
        Some(format!("The {subject} is {rel} a {found_class}"))
    } else {
        let object = &graph.node(edge.from).class;
        Some(format!("The {found_class} is {rel} a {object}"))
    }
}

/// "where horse is a subclass of animal".
pub fn subclass_note(member_class: &str, superordinate: &str) -> String {
    format!("where {member_class} is a subclass of {superordinate}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Progress {
    Root,
    NonRoot,
}

/// Whether the failure locus is the root (asserted) node or a presupposed
/// one; existence questions failing at the root are plain "no" answers,
/// failures elsewhere are not-grounded.
pub fn failure_progress(graph: &QuestionGraph, diag: &Diagnostic) -> Progress {
    if NodeId(diag.node) == graph.root {
        Progress::Root
    } else {
        Progress::NonRoot
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pluralization_rules() {
        assert_eq!(pluralize("sphere"), "spheres");
        assert_eq!(pluralize("boat"), "boats");
        assert_eq!(pluralize("box"), "boxes");
        assert_eq!(pluralize("brush"), "brushes");
        assert_eq!(pluralize("person"), "people");
        assert_eq!(pluralize("butterfly"), "butterflies");
        assert_eq!(pluralize("day"), "days");
    }

    #[test]
    fn relation_rendering() {
        assert_eq!(relation_text(&RelationSpec::spatial("behind")), "behind");
        assert_eq!(relation_text(&RelationSpec::spatial("left")), "left of");
        assert_eq!(
            relation_text(&RelationSpec::spatial("walking_towards")),
            "walking towards"
        );
        assert_eq!(
            relation_text(&RelationSpec::Superlative("closest".to_string())),
            "closest to"
        );
    }
}
