//! The answering engine: recursive assignment search guided by the question
//! graph, quantifier enforcement, answer extraction, and elaboration.
//!
//! Every input yields an [`AnswerRecord`]; limitations are answers too
//! (an unsupported concept reports "Unknown relation '...'", a question not
//! grounded in the scene reports what was missing and suggests
//! alternatives).

pub mod elaborate;
pub mod search;

use serde_json::{json, Value};

use crate::answer::QuestionFamily;
use crate::estimator::EstimatorSuite;
use crate::graph::{AnswerSpec, NodeId, Quantifier, QuestionGraph};
use crate::vocab::{ConceptKind, UnsupportedConcept, CLASS_QUERY, UNCONSTRAINED_CLASS};

pub use search::{
    find_assignments, Assignment, AssignmentOutcome, Binding, Diagnostic, DiagnosticKind,
    Requirement, TraceStep, Witness,
};

use search::{Recorder, Search, Stop};

#[derive(Debug, Clone)]
pub struct AnswerConfig {
    /// Include the full step trace in serialized output.
    pub verbose: bool,
    /// Per-node candidate cap; exceeding it stops the search.
    pub max_candidates: usize,
    pub max_alternatives: usize,
}

impl Default for AnswerConfig {
    fn default() -> Self {
        AnswerConfig {
            verbose: false,
            max_candidates: 10_000,
            max_alternatives: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AnswerStatus {
    Answered,
    UnsupportedConcept(UnsupportedConcept),
    NotGrounded { node: usize },
    Ambiguous,
}

impl AnswerStatus {
    pub fn label(&self) -> &'static str {
        match self {
            AnswerStatus::Answered => "answered",
            AnswerStatus::UnsupportedConcept(_) => "unsupported_concept",
            AnswerStatus::NotGrounded { .. } => "not_grounded",
            AnswerStatus::Ambiguous => "ambiguous",
        }
    }
}

/// Everything elaboration needs beyond the short answer.
#[derive(Debug, Clone, Default)]
pub struct AnswerDetail {
    pub diagnostics: Vec<Diagnostic>,
    pub alternatives: Vec<String>,
    pub notes: Vec<String>,
    /// Set when the answer node's class was a superordinate group: the
    /// full answer then reads "The <f> of the <class>: <value>, where ...".
    pub expanded_answer: Option<ExpandedAnswer>,
    /// Intermediate values of a comparison answer.
    pub comparison: Option<(String, String)>,
    /// A failed all/exactly assertion at the root (a plain "no", elaborated).
    pub root_quantifier_failure: Option<Diagnostic>,
}

#[derive(Debug, Clone)]
pub struct ExpandedAnswer {
    pub queried: String,
    pub superordinate: String,
    pub member_class: String,
}

#[derive(Debug, Clone)]
pub struct AnswerRecord {
    pub short: String,
    pub full: String,
    pub status: AnswerStatus,
    pub trace: Vec<TraceStep>,
    pub detail: AnswerDetail,
}

impl AnswerRecord {
    pub fn family_of(graph: &QuestionGraph) -> QuestionFamily {
        QuestionFamily::classify(graph)
    }

    /// `{short, full, status, trace:[...]}`; the trace is emitted only when
    /// requested.
    pub fn to_json(&self, include_trace: bool) -> Value {
        let mut obj = json!({
            "short": self.short,
            "full": self.full,
            "status": self.status.label(),
        });
        if let AnswerStatus::UnsupportedConcept(u) = &self.status {
            obj["unsupported"] = json!({"kind": u.kind, "name": u.name});
        }
        if let AnswerStatus::NotGrounded { node } = &self.status {
            obj["failed_node"] = json!(node);
        }
        if include_trace {
            obj["trace"] = serde_json::to_value(&self.trace).expect("trace serializes");
        }
        obj
    }

    /// Number of trace steps whose estimator reply was perturbed by noise.
    pub fn perturbed_calls(&self) -> usize {
        self.trace.iter().filter(|t| t.note == "perturbed").count()
    }

    fn new(short: String, status: AnswerStatus) -> Self {
        AnswerRecord {
            short,
            full: String::new(),
            status,
            trace: Vec::new(),
            detail: AnswerDetail::default(),
        }
    }
}

/// Render the full (elaborated) answer from a record's parts. Deterministic
/// and pure; `answer` uses it to fill `full`.
pub fn elaborate(record: &AnswerRecord, graph: &QuestionGraph) -> String {
    match &record.status {
        AnswerStatus::UnsupportedConcept(_) => record.short.clone(),
        AnswerStatus::NotGrounded { .. } => {
            let mut parts: Vec<String> = Vec::new();
            if let Some(diag) = record.detail.diagnostics.first() {
                parts.push(elaborate::failure_report(graph, diag));
            }
            parts.extend(record.detail.alternatives.iter().cloned());
            if parts.is_empty() {
                record.short.clone()
            } else {
                parts.join(". ")
            }
        }
        AnswerStatus::Answered | AnswerStatus::Ambiguous => {
            if let Some(diag) = &record.detail.root_quantifier_failure {
                return elaborate::quantifier_failure_text(graph, diag);
            }
            if let Some(exp) = &record.detail.expanded_answer {
                return format!(
                    "The {} of the {}: {}, {}",
                    exp.queried,
                    exp.superordinate,
                    record.short,
                    elaborate::subclass_note(&exp.member_class, &exp.superordinate)
                );
            }
            let mut suffix: Vec<String> = Vec::new();
            if let Some((a, b)) = &record.detail.comparison {
                suffix.push(format!("{a} vs {b}"));
            }
            suffix.extend(record.detail.notes.iter().cloned());
            if suffix.is_empty() {
                record.short.clone()
            } else {
                format!("{} ({})", record.short, suffix.join("; "))
            }
        }
    }
}

/// Answer a question graph with the given estimator suite.
pub fn answer(graph: &QuestionGraph, est: &dyn EstimatorSuite, cfg: &AnswerConfig) -> AnswerRecord {
    let mut record = answer_inner(graph, est, cfg);
    record.full = elaborate(&record, graph);
    record
}

fn answer_inner(
    graph: &QuestionGraph,
    est: &dyn EstimatorSuite,
    cfg: &AnswerConfig,
) -> AnswerRecord {
    // The engine accepts any graph whose validation has no errors; a graph
    // that fails even that is reported, not processed.
    let report = crate::graph::validate_graph(graph, est.vocabulary());
    if report.has_errors() {
        let first = report.errors().next().expect("has_errors");
        return AnswerRecord::new(
            format!("invalid question ({})", first.rule),
            AnswerStatus::NotGrounded { node: 0 },
        );
    }

    if let Some(unsupported) = concept_precheck(graph, est) {
        return AnswerRecord::new(
            unsupported.to_string(),
            AnswerStatus::UnsupportedConcept(unsupported),
        );
    }

    let mut rec = Recorder::new(est);
    let spec = graph.answer_spec();
    let result = match spec {
        AnswerSpec::Existence => existence_answer(graph, &mut rec, cfg),
        AnswerSpec::QueryProperty { node } => query_answer(graph, &mut rec, cfg, node),
        AnswerSpec::SetProperty { node } => count_answer(graph, &mut rec, cfg, node),
        AnswerSpec::QuantityCompare { node } => compare_counts_answer(graph, &mut rec, cfg, node),
        AnswerSpec::CompareEdge { edge } => compare_edge_answer(graph, &mut rec, cfg, edge),
    };
    let mut record = match result {
        Ok(record) => record,
        Err(Stop::Unsupported(u)) => {
            AnswerRecord::new(u.to_string(), AnswerStatus::UnsupportedConcept(u))
        }
        Err(Stop::CandidateLimit { node, count }) => {
            let mut r = AnswerRecord::new(
                "search limit exceeded".to_string(),
                AnswerStatus::NotGrounded { node },
            );
            r.detail.diagnostics.push(Diagnostic {
                node,
                kind: DiagnosticKind::CandidateLimit,
                message: format!("candidate limit exceeded: {count} candidates"),
                witness: None,
                expected: None,
                found: None,
            });
            r
        }
    };
    record.trace = rec.trace;
    record
}

/// Every concept the graph names, in serialization order, checked against
/// the suite's supported vocabulary. Unknown concepts become the answer.
fn concept_precheck(graph: &QuestionGraph, est: &dyn EstimatorSuite) -> Option<UnsupportedConcept> {
    let support = est.support();
    let traversal = graph.traversal();
    for step in &traversal.steps {
        match step {
            crate::graph::TraversalStep::Visit(id) => {
                let node = graph.node(*id);
                match &node.kind {
                    crate::graph::NodeKind::Regular => {
                        if !support.supports_class(&node.class) {
                            return Some(UnsupportedConcept::new(ConceptKind::Class, &node.class));
                        }
                    }
                    crate::graph::NodeKind::SuperNode(alts) => {
                        for alt in alts {
                            if !support.supports_class(&alt.class) {
                                return Some(UnsupportedConcept::new(
                                    ConceptKind::Class,
                                    &alt.class,
                                ));
                            }
                            for p in &alt.properties {
                                if !support.property_values.contains(p) {
                                    return Some(UnsupportedConcept::new(ConceptKind::Property, p));
                                }
                            }
                        }
                    }
                }
                for p in node.base_properties.iter().chain(&node.asserted_properties) {
                    if !support.property_values.contains(p) {
                        return Some(UnsupportedConcept::new(ConceptKind::Property, p));
                    }
                }
                if let Some(f) = &node.query_property {
                    if f != CLASS_QUERY && !support.property_types.contains(f) {
                        return Some(UnsupportedConcept::new(ConceptKind::PropertyType, f));
                    }
                }
                if let Some(g) = &node.set_query {
                    if !support.set_properties.contains(g) {
                        return Some(UnsupportedConcept::new(ConceptKind::SetProperty, g));
                    }
                }
            }
            crate::graph::TraversalStep::Descend { edge, .. }
            | crate::graph::TraversalStep::BackRef { edge, .. } => {
                if let Some(u) = support.supports_relation(&graph.edges[*edge].relation) {
                    return Some(u);
                }
            }
            _ => {}
        }
    }
    None
}

// ---------------------------------------------------------------------------
// Per-answer-spec handlers
// ---------------------------------------------------------------------------

fn existence_answer(
    graph: &QuestionGraph,
    rec: &mut Recorder<'_>,
    cfg: &AnswerConfig,
) -> Result<AnswerRecord, Stop> {
    let mut search = Search::new(
        graph,
        rec,
        cfg.max_candidates,
        graph.root,
        Requirement::One,
        None,
        &Assignment::default(),
    );
    search.run()?;
    if search.complete > 0 {
        let mut record = AnswerRecord::new("yes".to_string(), AnswerStatus::Answered);
        let first = search.first.clone().expect("complete implies first");
        record.detail.notes = success_notes(graph, rec, &first)?;
        return Ok(record);
    }
    let diagnostics = search.failure_diagnostics();
    let first_diag = diagnostics.first().cloned();
    match first_diag {
        Some(diag) if elaborate::failure_progress(graph, &diag) == elaborate::Progress::NonRoot => {
            let mut record = AnswerRecord::new(
                "no".to_string(),
                AnswerStatus::NotGrounded { node: diag.node },
            );
            record.detail.alternatives = suggest_alternatives(graph, &diag, rec, cfg)?;
            record.detail.diagnostics = diagnostics;
            Ok(record)
        }
        Some(diag) => {
            let mut record = AnswerRecord::new("no".to_string(), AnswerStatus::Answered);
            if diag.kind == DiagnosticKind::QuantifierMismatch {
                record.detail.root_quantifier_failure = Some(diag.clone());
            }
            record.detail.diagnostics = diagnostics;
            Ok(record)
        }
        None => Ok(AnswerRecord::new("no".to_string(), AnswerStatus::Answered)),
    }
}

fn query_answer(
    graph: &QuestionGraph,
    rec: &mut Recorder<'_>,
    cfg: &AnswerConfig,
    node: NodeId,
) -> Result<AnswerRecord, Stop> {
    let f = graph
        .node(node)
        .query_property
        .clone()
        .expect("answer spec says f is set");
    let mut search = Search::new(
        graph,
        rec,
        cfg.max_candidates,
        node,
        Requirement::EntireSet,
        None,
        &Assignment::default(),
    );
    search.run()?;
    let bindings = search.focus_values.clone();
    if bindings.is_empty() {
        let diagnostics = search.failure_diagnostics();
        drop(search);
        return not_grounded(graph, diagnostics, rec, cfg);
    }
    let first = search.first.clone().expect("bindings imply a completion");
    drop(search);
    let mut values: Vec<String> = Vec::new();
    for obj in &bindings {
        if let Some(v) = rec.query_property(node.0, *obj, &f)? {
            if !values.contains(&v) {
                values.push(v);
            }
        }
    }
    let Some(short) = values.first().cloned() else {
        // Bound objects carry no value of the queried type.
        let mut record = AnswerRecord::new(
            format!("no {f} value for the {}", graph.node(node).class),
            AnswerStatus::NotGrounded { node: node.0 },
        );
        record.detail.diagnostics.push(Diagnostic {
            node: node.0,
            kind: DiagnosticKind::PropertiesEmptied,
            message: format!("objects lack the '{f}' attribute"),
            witness: None,
            expected: None,
            found: None,
        });
        return Ok(record);
    };
    let ambiguous = values.len() > 1;
    let status = if ambiguous {
        AnswerStatus::Ambiguous
    } else {
        AnswerStatus::Answered
    };
    let mut record = AnswerRecord::new(short, status);
    if ambiguous {
        record
            .detail
            .notes
            .push(format!("ambiguous: {} possible answers", values.len()));
    }
    let vocab = rec.suite().vocabulary();
    let node_class = vocab.canonical(&graph.node(node).class).to_string();
    if vocab.is_superordinate(&node_class) {
        if let Some(member_class) = rec.query_property(node.0, bindings[0], CLASS_QUERY)? {
            record.detail.expanded_answer = Some(ExpandedAnswer {
                queried: f.clone(),
                superordinate: node_class,
                member_class,
            });
        }
    }
    let mut notes = success_notes(graph, rec, &first)?;
    notes.retain(|n| {
        record.detail.expanded_answer.as_ref().map_or(true, |e| {
            !n.contains(&format!("subclass of {}", e.superordinate))
        })
    });
    record.detail.notes.extend(notes);
    Ok(record)
}

fn count_answer(
    graph: &QuestionGraph,
    rec: &mut Recorder<'_>,
    cfg: &AnswerConfig,
    node: NodeId,
) -> Result<AnswerRecord, Stop> {
    let g = graph
        .node(node)
        .set_query
        .clone()
        .expect("answer spec says g is set");
    let (members, grounded) = valid_set(graph, rec, cfg, node, None)?;
    match grounded {
        Grounding::Ok => {
            let count = rec.set_property(node.0, &g, &members)?;
            let mut record = AnswerRecord::new(count, AnswerStatus::Answered);
            record.detail.notes = membership_notes(graph, rec, node, &members)?;
            Ok(record)
        }
        Grounding::Failed(search_diags) => {
            let diag = search_diags
                .first()
                .cloned()
                .expect("failed grounding carries a diagnostic");
            let mut record = AnswerRecord::new(
                elaborate::failure_short(graph, &diag),
                AnswerStatus::NotGrounded { node: diag.node },
            );
            record.detail.alternatives = suggest_alternatives(graph, &diag, rec, cfg)?;
            record.detail.diagnostics = search_diags;
            Ok(record)
        }
    }
}

fn compare_counts_answer(
    graph: &QuestionGraph,
    rec: &mut Recorder<'_>,
    cfg: &AnswerConfig,
    node: NodeId,
) -> Result<AnswerRecord, Stop> {
    let qc = graph
        .node(node)
        .quantity_compare
        .expect("answer spec says compare is set");
    let comp_a = edge_component(graph, node);
    let comp_b = edge_component(graph, qc.other);
    let (set_a, ground_a) = valid_set(graph, rec, cfg, node, Some(&comp_a))?;
    let (set_b, ground_b) = valid_set(graph, rec, cfg, qc.other, Some(&comp_b))?;
    for grounding in [ground_a, ground_b] {
        if let Grounding::Failed(diags) = grounding {
            let diag = diags.first().cloned().expect("diagnostic present");
            let mut record = AnswerRecord::new(
                elaborate::failure_short(graph, &diag),
                AnswerStatus::NotGrounded { node: diag.node },
            );
            record.detail.alternatives = suggest_alternatives(graph, &diag, rec, cfg)?;
            record.detail.diagnostics = diags;
            return Ok(record);
        }
    }
    let (a, b) = (set_a.len(), set_b.len());
    let yes = match qc.op {
        crate::graph::CompareOp::Same => a == b,
        crate::graph::CompareOp::Greater => a > b,
        crate::graph::CompareOp::Fewer => a < b,
    };
    let mut record = AnswerRecord::new(
        if yes { "yes" } else { "no" }.to_string(),
        AnswerStatus::Answered,
    );
    record.detail.comparison = Some((a.to_string(), b.to_string()));
    Ok(record)
}

fn compare_edge_answer(
    graph: &QuestionGraph,
    rec: &mut Recorder<'_>,
    cfg: &AnswerConfig,
    edge: usize,
) -> Result<AnswerRecord, Stop> {
    let spec = graph.edges[edge].clone();
    let mut search = Search::new(
        graph,
        rec,
        cfg.max_candidates,
        spec.from,
        Requirement::EntireSet,
        None,
        &Assignment::default(),
    );
    search.run()?;
    if search.complete == 0 {
        let diagnostics = search.failure_diagnostics();
        drop(search);
        return not_grounded(graph, diagnostics, rec, cfg);
    }
    let assignments = search.all.clone();
    drop(search);
    let mut outcomes: Vec<bool> = Vec::new();
    let mut first_pair: Option<(usize, usize)> = None;
    let mut seen: Vec<(usize, usize)> = Vec::new();
    for a in &assignments {
        let (Some(from_obj), Some(to_obj)) = (a.single(spec.from), a.single(spec.to)) else {
            continue;
        };
        if seen.contains(&(from_obj, to_obj)) {
            continue;
        }
        seen.push((from_obj, to_obj));
        // Unlike relation constraints, the compared references may resolve
        // to one and the same object (trivially equal under Same).
        let holds = rec
            .relation(spec.from.0, to_obj, from_obj, &spec.relation)?
            .unwrap_or(false);
        if first_pair.is_none() {
            first_pair = Some((from_obj, to_obj));
        }
        if !outcomes.contains(&holds) {
            outcomes.push(holds);
        }
    }
    let Some((from_obj, to_obj)) = first_pair else {
        return not_grounded(graph, Vec::new(), rec, cfg);
    };
    let yes = outcomes.first().copied().unwrap_or(false);
    let ambiguous = outcomes.len() > 1;
    let mut record = AnswerRecord::new(
        if yes { "yes" } else { "no" }.to_string(),
        if ambiguous {
            AnswerStatus::Ambiguous
        } else {
            AnswerStatus::Answered
        },
    );
    if ambiguous {
        record
            .detail
            .notes
            .push("ambiguous: the compared objects are not unique".to_string());
    }
    if let crate::graph::RelationSpec::PropertyCompare { property_type, .. } = &spec.relation {
        let a = rec.query_property(spec.from.0, from_obj, property_type)?;
        let b = rec.query_property(spec.to.0, to_obj, property_type)?;
        if let (Some(a), Some(b)) = (a, b) {
            record.detail.comparison = Some((a, b));
        }
    }
    Ok(record)
}

// ---------------------------------------------------------------------------
// Shared pieces
// ---------------------------------------------------------------------------

enum Grounding {
    Ok,
    Failed(Vec<Diagnostic>),
}

/// Distinct valid bindings of `focus` (within `included`, when given).
/// When the set is empty, presupposed nodes are checked on their own to
/// distinguish "a count of zero" from "the question is not grounded".
fn valid_set(
    graph: &QuestionGraph,
    rec: &mut Recorder<'_>,
    cfg: &AnswerConfig,
    focus: NodeId,
    included: Option<&[NodeId]>,
) -> Result<(Vec<usize>, Grounding), Stop> {
    let mut search = Search::new(
        graph,
        rec,
        cfg.max_candidates,
        focus,
        Requirement::EntireSet,
        included,
        &Assignment::default(),
    );
    search.run()?;
    let members = search.focus_values.clone();
    if !members.is_empty() {
        return Ok((members, Grounding::Ok));
    }
    // Nothing bound: can the rest of the question ground at all?
    let rest: Vec<NodeId> = match included {
        Some(nodes) => nodes.iter().copied().filter(|n| *n != focus).collect(),
        None => graph
            .nodes
            .iter()
            .map(|n| n.id)
            .filter(|n| *n != focus)
            .collect(),
    };
    if rest.is_empty() {
        return Ok((members, Grounding::Ok));
    }
    let mut rest_search = Search::new(
        graph,
        rec,
        cfg.max_candidates,
        rest[0],
        Requirement::One,
        Some(&rest),
        &Assignment::default(),
    );
    rest_search.run()?;
    if rest_search.complete > 0 {
        Ok((members, Grounding::Ok))
    } else {
        let diags = rest_search.failure_diagnostics();
        if diags.is_empty() {
            Ok((members, Grounding::Ok))
        } else {
            Ok((members, Grounding::Failed(diags)))
        }
    }
}

/// Not-grounded record from a finished, assignment-less search.
fn not_grounded(
    graph: &QuestionGraph,
    diagnostics: Vec<Diagnostic>,
    rec: &mut Recorder<'_>,
    cfg: &AnswerConfig,
) -> Result<AnswerRecord, Stop> {
    let diag = diagnostics.first().cloned().unwrap_or(Diagnostic {
        node: graph.root.0,
        kind: DiagnosticKind::RelationsFailed,
        message: "no valid assignment".to_string(),
        witness: None,
        expected: None,
        found: None,
    });
    let mut record = AnswerRecord::new(
        elaborate::failure_short(graph, &diag),
        AnswerStatus::NotGrounded { node: diag.node },
    );
    record.detail.alternatives = suggest_alternatives(graph, &diag, rec, cfg)?;
    record.detail.diagnostics = diagnostics;
    Ok(record)
}

/// Alternative statements for a failed grounding: wildcard a missing class
/// and re-ground ("The boat is behind a boat"), or report the nearest
/// candidate ("There is a yellow kite").
fn suggest_alternatives(
    graph: &QuestionGraph,
    diag: &Diagnostic,
    rec: &mut Recorder<'_>,
    cfg: &AnswerConfig,
) -> Result<Vec<String>, Stop> {
    let mut out: Vec<String> = Vec::new();
    match diag.kind {
        DiagnosticKind::NoDetection => {
            let mut relaxed = graph.clone();
            relaxed.nodes[diag.node].class = UNCONSTRAINED_CLASS.to_string();
            let mut retry = Search::new(
                &relaxed,
                rec,
                cfg.max_candidates,
                NodeId(diag.node),
                Requirement::One,
                None,
                &Assignment::default(),
            );
            retry.run()?;
            if let Some(first) = retry.first {
                if let Some(obj) = first.single(NodeId(diag.node)) {
                    let found_class = rec
                        .query_property(diag.node, obj, CLASS_QUERY)?
                        .unwrap_or_else(|| UNCONSTRAINED_CLASS.to_string());
                    if let Some(statement) =
                        elaborate::retry_statement(graph, NodeId(diag.node), &found_class)
                    {
                        out.push(statement);
                    }
                }
            }
        }
        DiagnosticKind::PropertiesEmptied => {
            if let Some(statement) = elaborate::nearest_candidate_text(graph, diag) {
                out.push(statement);
            }
        }
        _ => {}
    }
    out.truncate(cfg.max_alternatives);
    Ok(out)
}

/// Notes derived from the first complete assignment: vacuous quantifiers
/// and superordinate expansions.
fn success_notes(
    graph: &QuestionGraph,
    rec: &mut Recorder<'_>,
    first: &Assignment,
) -> Result<Vec<String>, Stop> {
    let vocab = rec.suite().vocabulary();
    let mut notes = Vec::new();
    for (id, binding) in &first.bindings {
        let node = graph.node(NodeId(*id));
        match binding {
            Binding::Many(set) if set.is_empty() && node.quantifier != Quantifier::Exists => {
                notes.push(format!("no {} found", node.class));
            }
            Binding::One(obj) => {
                let class = vocab.canonical(&node.class).to_string();
                if vocab.is_superordinate(&class) {
                    if let Some(member) = rec.query_property(*id, *obj, CLASS_QUERY)? {
                        let note = elaborate::subclass_note(&member, &class);
                        if !notes.contains(&note) {
                            notes.push(note);
                        }
                    }
                }
            }
            _ => {}
        }
    }
    Ok(notes)
}

/// Subclass notes for a counted set over a superordinate class.
fn membership_notes(
    graph: &QuestionGraph,
    rec: &mut Recorder<'_>,
    node: NodeId,
    members: &[usize],
) -> Result<Vec<String>, Stop> {
    let vocab = rec.suite().vocabulary();
    let class = vocab.canonical(&graph.node(node).class).to_string();
    let mut notes = Vec::new();
    if vocab.is_superordinate(&class) {
        for obj in members {
            if let Some(member) = rec.query_property(node.0, *obj, CLASS_QUERY)? {
                let note = elaborate::subclass_note(&member, &class);
                if !notes.contains(&note) {
                    notes.push(note);
                }
            }
        }
    }
    Ok(notes)
}

/// Node set reachable from `start` over relation edges only (compare links
/// join the question's two counted branches without mixing their searches).
fn edge_component(graph: &QuestionGraph, start: NodeId) -> Vec<NodeId> {
    let mut seen = vec![false; graph.nodes.len()];
    let mut stack = vec![start];
    seen[start.0] = true;
    while let Some(at) = stack.pop() {
        for (_, edge) in graph.edges_at(at) {
            let other = edge.other(at);
            if other.0 < graph.nodes.len() && !seen[other.0] {
                seen[other.0] = true;
                stack.push(other);
            }
        }
    }
    (0..graph.nodes.len())
        .filter(|i| seen[*i])
        .map(NodeId)
        .collect()
}
