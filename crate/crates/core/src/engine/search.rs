//! Backtracking assignment search over the question graph.
//!
//! Nodes are processed in DFS order. Plain (existential) nodes branch over
//! ranked candidates; quantified (all / exactly-n) nodes never branch: they
//! are checked once every edge neighbor is bound, binding their whole
//! satisfying set. Estimator calls go through a memoizing recorder, so each
//! distinct invocation happens (and is traced) exactly once.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::estimator::{Detection, EstimatorError, EstimatorSuite};
use crate::graph::{CompareMode, Edge, NodeId, NodeKind, Quantifier, QuestionGraph, RelationSpec};
use crate::vocab::UnsupportedConcept;

/// One invocation of a basic procedure, in invocation order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceStep {
    pub node: Option<usize>,
    pub procedure: &'static str,
    pub inputs: Vec<String>,
    pub outcome: String,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub note: String,
}

/// A binding of graph nodes to scene objects. Plain nodes bind one object;
/// quantified nodes bind their whole satisfying set.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Assignment {
    pub bindings: BTreeMap<usize, Binding>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Binding {
    One(usize),
    Many(Vec<usize>),
}

impl Assignment {
    pub fn single(&self, node: NodeId) -> Option<usize> {
        match self.bindings.get(&node.0) {
            Some(Binding::One(o)) => Some(*o),
            _ => None,
        }
    }
}

/// How many valid assignments the caller needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Requirement {
    /// Short-circuit at the first complete assignment.
    One,
    /// Stop once this many complete assignments exist.
    AtLeast(usize),
    /// The focus node's base set must contain exactly `n` satisfying members.
    ExactBase(u32),
    /// Every member of the focus node's base set must satisfy it.
    AllBase,
    /// Enumerate every valid binding of the focus node (counting, number
    /// comparison, answer extraction).
    EntireSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticKind {
    /// detect() produced nothing for the node's class.
    NoDetection,
    /// Detections existed but the property filters removed them all.
    PropertiesEmptied,
    /// Candidates survived filtering but every one failed a relation.
    RelationsFailed,
    /// An all/exactly-n check failed.
    QuantifierMismatch,
    /// The per-node candidate limit stopped the search.
    CandidateLimit,
}

/// Why (part of) the search failed, attributed to one node.
#[derive(Debug, Clone, Serialize)]
pub struct Diagnostic {
    pub node: usize,
    pub kind: DiagnosticKind,
    pub message: String,
    /// Nearest candidate that failed: (object, what failed, its actual value).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub found: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Witness {
    pub object: usize,
    pub failed_requirement: String,
    /// The witness's own value of the failed property's type, when readable.
    pub actual: Option<String>,
    pub class: String,
}

/// Search result: assignments found (per the requirement), quantifier
/// satisfaction, and failure diagnostics for elaboration.
#[derive(Debug, Clone)]
pub struct AssignmentOutcome {
    pub assignments: Vec<Assignment>,
    pub satisfied: bool,
    pub diagnostics: Vec<Diagnostic>,
}

/// Hard stops that abort the search entirely.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Stop {
    Unsupported(UnsupportedConcept),
    CandidateLimit { node: usize, count: usize },
}

// ---------------------------------------------------------------------------
// Memoizing estimator recorder
// ---------------------------------------------------------------------------

pub(crate) struct Recorder<'a> {
    est: &'a dyn EstimatorSuite,
    pub trace: Vec<TraceStep>,
    detect: BTreeMap<String, Result<Vec<Detection>, Stop>>,
    has: BTreeMap<(usize, String), Result<bool, Stop>>,
    query: BTreeMap<(usize, String), Result<Option<String>, Stop>>,
    relation: BTreeMap<(usize, usize, String), Result<Option<bool>, Stop>>,
}

impl<'a> Recorder<'a> {
    pub fn new(est: &'a dyn EstimatorSuite) -> Self {
        Recorder {
            est,
            trace: Vec::new(),
            detect: BTreeMap::new(),
            has: BTreeMap::new(),
            query: BTreeMap::new(),
            relation: BTreeMap::new(),
        }
    }

    pub fn suite(&self) -> &'a dyn EstimatorSuite {
        self.est
    }

    fn push(
        &mut self,
        node: Option<usize>,
        procedure: &'static str,
        inputs: Vec<String>,
        outcome: String,
        perturbed: bool,
    ) {
        self.trace.push(TraceStep {
            node,
            procedure,
            inputs,
            outcome,
            note: if perturbed {
                "perturbed".to_string()
            } else {
                String::new()
            },
        });
    }

    /// Ranked detections for a class, re-sorted (score desc, id asc) so the
    /// search order never depends on suite-internal tie-breaking.
    pub fn detect(&mut self, node: usize, class: &str) -> Result<Vec<Detection>, Stop> {
        if let Some(hit) = self.detect.get(class) {
            return hit.clone();
        }
        let result = match self.est.detect(class) {
            Ok(mut estimate) => {
                estimate
                    .value
                    .sort_by(|a, b| b.score.total_cmp(&a.score).then(a.object.cmp(&b.object)));
                self.push(
                    Some(node),
                    "detect",
                    vec![class.to_string()],
                    format!("{} objects", estimate.value.len()),
                    estimate.perturbed,
                );
                Ok(estimate.value)
            }
            Err(EstimatorError::Unsupported(u)) => Err(Stop::Unsupported(u)),
            Err(EstimatorError::MissingAttribute { .. }) => Ok(Vec::new()),
        };
        self.detect.insert(class.to_string(), result.clone());
        result
    }

    pub fn has_property(&mut self, node: usize, object: usize, value: &str) -> Result<bool, Stop> {
        let key = (object, value.to_string());
        if let Some(hit) = self.has.get(&key) {
            return hit.clone();
        }
        let result = match self.est.has_property(object, value) {
            Ok(estimate) => {
                self.push(
                    Some(node),
                    "has_property",
                    vec![object.to_string(), value.to_string()],
                    estimate.value.to_string(),
                    estimate.perturbed,
                );
                Ok(estimate.value)
            }
            Err(EstimatorError::Unsupported(u)) => Err(Stop::Unsupported(u)),
            Err(EstimatorError::MissingAttribute { .. }) => Ok(false),
        };
        self.has.insert(key, result.clone());
        result
    }

    /// None means the object genuinely lacks the attribute.
    pub fn query_property(
        &mut self,
        node: usize,
        object: usize,
        property_type: &str,
    ) -> Result<Option<String>, Stop> {
        let key = (object, property_type.to_string());
        if let Some(hit) = self.query.get(&key) {
            return hit.clone();
        }
        let result = match self.est.query_property(object, property_type) {
            Ok(estimate) => {
                self.push(
                    Some(node),
                    "query_property",
                    vec![object.to_string(), property_type.to_string()],
                    estimate.value.clone(),
                    estimate.perturbed,
                );
                Ok(Some(estimate.value))
            }
            Err(EstimatorError::Unsupported(u)) => Err(Stop::Unsupported(u)),
            Err(EstimatorError::MissingAttribute { .. }) => Ok(None),
        };
        self.query.insert(key, result.clone());
        result
    }

    pub fn set_property(
        &mut self,
        node: usize,
        name: &str,
        objects: &[usize],
    ) -> Result<String, Stop> {
        match self.est.set_property(name, objects) {
            Ok(estimate) => {
                self.push(
                    Some(node),
                    "set_property",
                    vec![name.to_string(), format!("{} objects", objects.len())],
                    estimate.value.clone(),
                    estimate.perturbed,
                );
                Ok(estimate.value)
            }
            Err(EstimatorError::Unsupported(u)) => Err(Stop::Unsupported(u)),
            Err(e @ EstimatorError::MissingAttribute { .. }) => Err(Stop::Unsupported(
                UnsupportedConcept::new(crate::vocab::ConceptKind::SetProperty, &e.to_string()),
            )),
        }
    }

    /// Relation check; None when an endpoint lacks the compared attribute
    /// (the constraint then fails without being an error).
    pub fn relation(
        &mut self,
        node: usize,
        subject: usize,
        object: usize,
        spec: &RelationSpec,
    ) -> Result<Option<bool>, Stop> {
        // Property comparisons run through query_property on both endpoints.
        if let RelationSpec::PropertyCompare {
            property_type,
            mode,
        } = spec
        {
            let a = self.query_property(node, subject, property_type)?;
            let b = self.query_property(node, object, property_type)?;
            return Ok(match (a, b) {
                (Some(a), Some(b)) => Some(match mode {
                    CompareMode::Same => a == b,
                    CompareMode::Different => a != b,
                }),
                _ => None,
            });
        }
        let key = (subject, object, spec.name_tokens(false).join(" "));
        if let Some(hit) = self.relation.get(&key) {
            return hit.clone();
        }
        let result = match self.est.relation(subject, object, spec) {
            Ok(estimate) => {
                self.push(
                    Some(node),
                    "relation",
                    vec![subject.to_string(), object.to_string(), key.2.clone()],
                    estimate.value.to_string(),
                    estimate.perturbed,
                );
                Ok(Some(estimate.value))
            }
            Err(EstimatorError::Unsupported(u)) => Err(Stop::Unsupported(u)),
            Err(EstimatorError::MissingAttribute { .. }) => Ok(None),
        };
        self.relation.insert(key, result.clone());
        result
    }
}

// ---------------------------------------------------------------------------
// The search itself
// ---------------------------------------------------------------------------

#[derive(Default, Clone)]
pub(crate) struct NodeStats {
    pub visited: bool,
    pub detect_count: Option<usize>,
    pub after_props: Option<usize>,
    pub ever_bound: bool,
    pub prop_witness: Option<Witness>,
    pub relation_witness: Option<Witness>,
    pub quantifier_fail: Option<Diagnostic>,
}

pub(crate) struct Search<'g, 'e, 'b> {
    graph: &'g QuestionGraph,
    rec: &'b mut Recorder<'e>,
    max_candidates: usize,
    /// Positions actually searched (a component, or everything).
    order: Vec<NodeId>,
    /// node id -> position in `order` at which its quantified check runs.
    eval_at: Vec<Option<usize>>,
    bindings: Vec<Option<Binding>>,
    prebound: Vec<bool>,
    focus: NodeId,
    requirement: Requirement,
    limit: usize,
    pub complete: usize,
    pub first: Option<Assignment>,
    /// Distinct focus bindings in order of first appearance.
    pub focus_values: Vec<usize>,
    /// Every complete assignment (enumeration mode only).
    pub all: Vec<Assignment>,
    pub stats: Vec<NodeStats>,
}

enum Flow {
    Continue,
    Done,
}

impl<'g, 'e, 'b> Search<'g, 'e, 'b> {
    /// `included`: DFS-ordered node subset to search (None = whole graph).
    pub fn new(
        graph: &'g QuestionGraph,
        rec: &'b mut Recorder<'e>,
        max_candidates: usize,
        focus: NodeId,
        requirement: Requirement,
        included: Option<&[NodeId]>,
        partial: &Assignment,
    ) -> Self {
        let full_order = graph.dfs_order();
        let order: Vec<NodeId> = match included {
            Some(subset) => full_order
                .iter()
                .copied()
                .filter(|n| subset.contains(n))
                .collect(),
            None => full_order,
        };
        let n = graph.nodes.len();
        let mut bindings: Vec<Option<Binding>> = vec![None; n];
        let mut prebound = vec![false; n];
        for (id, b) in &partial.bindings {
            if *id < n {
                bindings[*id] = Some(b.clone());
                prebound[*id] = true;
            }
        }
        // Quantified nodes are checked at the latest position among
        // themselves and their edge neighbors.
        let mut eval_at: Vec<Option<usize>> = vec![None; n];
        let pos_of = |id: NodeId| order.iter().position(|x| *x == id);
        for node in &graph.nodes {
            if node.quantifier == Quantifier::Exists || prebound[node.id.0] {
                continue;
            }
            let Some(own) = pos_of(node.id) else { continue };
            let mut at = own;
            for (_, edge) in graph.edges_at(node.id) {
                if edge.answer_bearing {
                    continue;
                }
                if let Some(p) = pos_of(edge.other(node.id)) {
                    at = at.max(p);
                }
            }
            eval_at[node.id.0] = Some(at);
        }
        let limit = match requirement {
            Requirement::One => 1,
            Requirement::AtLeast(n) => n.max(1),
            _ => usize::MAX,
        };
        Search {
            graph,
            rec,
            max_candidates,
            order,
            eval_at,
            bindings,
            prebound,
            focus,
            requirement,
            limit,
            complete: 0,
            first: None,
            focus_values: Vec::new(),
            all: Vec::new(),
            stats: vec![NodeStats::default(); n],
        }
    }

    pub fn run(&mut self) -> Result<(), Stop> {
        // Edges between prebound nodes are not revisited by the walk.
        for edge in &self.graph.edges {
            if edge.answer_bearing {
                continue;
            }
            if self.prebound[edge.from.0] && self.prebound[edge.to.0] {
                let (Some(f), Some(t)) =
                    (self.single_binding(edge.from), self.single_binding(edge.to))
                else {
                    continue;
                };
                if self.check_edge_pair(edge, t, f)? != Some(true) {
                    return Ok(());
                }
            }
        }
        self.step(0).map(|_| ())
    }

    fn single_binding(&self, node: NodeId) -> Option<usize> {
        match &self.bindings[node.0] {
            Some(Binding::One(o)) => Some(*o),
            _ => None,
        }
    }

    fn is_quantified(&self, node: NodeId) -> bool {
        self.graph.node(node).quantifier != Quantifier::Exists && !self.prebound[node.0]
    }

    fn record_complete(&mut self) -> Flow {
        self.complete += 1;
        let assignment = Assignment {
            bindings: self
                .bindings
                .iter()
                .enumerate()
                .filter_map(|(id, b)| b.clone().map(|b| (id, b)))
                .collect(),
        };
        if let Some(Binding::One(obj)) = assignment.bindings.get(&self.focus.0) {
            if !self.focus_values.contains(obj) {
                self.focus_values.push(*obj);
            }
        }
        if self.first.is_none() {
            self.first = Some(assignment.clone());
        }
        if self.requirement == Requirement::EntireSet && self.all.len() < 100_000 {
            self.all.push(assignment);
        }
        if self.complete >= self.limit {
            Flow::Done
        } else {
            Flow::Continue
        }
    }

    fn step(&mut self, pos: usize) -> Result<Flow, Stop> {
        if pos == self.order.len() {
            return Ok(self.record_complete());
        }
        let node = self.order[pos];
        if self.prebound[node.0] {
            return self.after_binding(pos, node);
        }
        if self.is_quantified(node) {
            if self.eval_at[node.0] != Some(pos) {
                // Deferred: checked once its last neighbor binds.
                return self.step(pos + 1);
            }
            return match self.quantified_check(node)? {
                Some(set) => {
                    self.bindings[node.0] = Some(Binding::Many(set));
                    let flow = self.step(pos + 1)?;
                    self.bindings[node.0] = None;
                    Ok(flow)
                }
                None => Ok(Flow::Continue),
            };
        }

        let candidates = self.candidates(node)?;
        if candidates.len() > self.max_candidates {
            return Err(Stop::CandidateLimit {
                node: node.0,
                count: candidates.len(),
            });
        }
        for candidate in candidates {
            if !self.edges_hold(node, candidate)? {
                continue;
            }
            self.bindings[node.0] = Some(Binding::One(candidate));
            self.stats[node.0].ever_bound = true;
            let flow = self.after_binding(pos, node)?;
            self.bindings[node.0] = None;
            if matches!(flow, Flow::Done) {
                return Ok(Flow::Done);
            }
        }
        Ok(Flow::Continue)
    }

    /// Run the quantified checks scheduled for this position, then recurse.
    fn after_binding(&mut self, pos: usize, node: NodeId) -> Result<Flow, Stop> {
        let triggered: Vec<NodeId> = self
            .graph
            .nodes
            .iter()
            .map(|n| n.id)
            .filter(|id| *id != node && self.is_quantified(*id) && self.eval_at[id.0] == Some(pos))
            .collect();
        let mut bound: Vec<NodeId> = Vec::new();
        let mut all_ok = true;
        for q in triggered {
            match self.quantified_check(q)? {
                Some(set) => {
                    self.bindings[q.0] = Some(Binding::Many(set));
                    bound.push(q);
                }
                None => {
                    all_ok = false;
                    break;
                }
            }
        }
        let flow = if all_ok {
            self.step(pos + 1)?
        } else {
            Flow::Continue
        };
        for q in bound {
            self.bindings[q.0] = None;
        }
        Ok(flow)
    }

    /// Ranked candidate objects for a plain node: detections filtered by the
    /// node's property requirements (or its alternatives' bundles).
    fn candidates(&mut self, node: NodeId) -> Result<Vec<usize>, Stop> {
        let spec = self.graph.node(node);
        let stats = &mut self.stats[node.0];
        stats.visited = true;
        let mut ranked: Vec<Detection> = Vec::new();
        match &spec.kind {
            NodeKind::Regular => {
                ranked = self.rec.detect(node.0, &spec.class)?;
            }
            NodeKind::SuperNode(alternatives) => {
                for alt in alternatives {
                    let detections = self.rec.detect(node.0, &alt.class)?;
                    'obj: for d in detections {
                        for p in &alt.properties {
                            if !self.rec.has_property(node.0, d.object, p)? {
                                continue 'obj;
                            }
                        }
                        if !ranked.iter().any(|r| r.object == d.object) {
                            ranked.push(d);
                        }
                    }
                }
                ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.object.cmp(&b.object)));
            }
        }
        let detect_count = ranked.len();
        self.stats[node.0].detect_count.get_or_insert(detect_count);

        let mut kept = Vec::with_capacity(ranked.len());
        'candidate: for d in ranked {
            for p in spec.base_properties.iter().chain(&spec.asserted_properties) {
                if !self.rec.has_property(node.0, d.object, p)? {
                    if self.stats[node.0].prop_witness.is_none() {
                        let witness = self.witness(node, d.object, p)?;
                        self.stats[node.0].prop_witness = Some(witness);
                    }
                    continue 'candidate;
                }
            }
            kept.push(d.object);
        }
        self.stats[node.0].after_props.get_or_insert(kept.len());
        Ok(kept)
    }

    /// Build a witness for a failed property: the candidate's own value of
    /// the property's type, when the vocabulary knows the type.
    fn witness(&mut self, node: NodeId, object: usize, property: &str) -> Result<Witness, Stop> {
        let vocab = self.rec.suite().vocabulary();
        let canonical = vocab.canonical(property).to_string();
        let actual = match vocab.type_of_value(&canonical) {
            Some(ptype) => {
                let ptype = ptype.to_string();
                self.rec.query_property(node.0, object, &ptype)?
            }
            None => None,
        };
        let class = self
            .rec
            .query_property(node.0, object, crate::vocab::CLASS_QUERY)?
            .unwrap_or_else(|| "object".to_string());
        Ok(Witness {
            object,
            failed_requirement: property.to_string(),
            actual,
            class,
        })
    }

    /// All non-answer-bearing edges between `node` (bound to `candidate`)
    /// and already-bound single neighbors.
    fn edges_hold(&mut self, node: NodeId, candidate: usize) -> Result<bool, Stop> {
        for (i, edge) in self.graph.edges.iter().enumerate() {
            if edge.answer_bearing || !edge.touches(node) {
                continue;
            }
            let other = edge.other(node);
            let Some(other_obj) = self.single_binding(other) else {
                continue; // unbound or quantified: checked elsewhere
            };
            if other_obj == candidate {
                // Relation endpoints are distinct objects.
                self.note_relation_witness(node, candidate, i)?;
                return Ok(false);
            }
            let (subject, object) = if edge.to == node {
                (candidate, other_obj)
            } else {
                (other_obj, candidate)
            };
            let edge = edge.clone();
            if self.rec.relation(node.0, subject, object, &edge.relation)? != Some(true) {
                self.note_relation_witness(node, candidate, i)?;
                return Ok(false);
            }
        }
        Ok(true)
    }

    fn note_relation_witness(
        &mut self,
        node: NodeId,
        candidate: usize,
        edge: usize,
    ) -> Result<(), Stop> {
        if self.stats[node.0].relation_witness.is_some() {
            return Ok(());
        }
        let class = self
            .rec
            .query_property(node.0, candidate, crate::vocab::CLASS_QUERY)?
            .unwrap_or_else(|| "object".to_string());
        let tokens = self.graph.edges[edge].relation.name_tokens(false).join(" ");
        self.stats[node.0].relation_witness = Some(Witness {
            object: candidate,
            failed_requirement: tokens,
            actual: None,
            class,
        });
        Ok(())
    }

    /// Evaluate an all/exactly-n node against its bound neighbors. Returns
    /// the satisfying member set on success, None on failure (with a
    /// diagnostic recorded).
    fn quantified_check(&mut self, node: NodeId) -> Result<Option<Vec<usize>>, Stop> {
        let spec = self.graph.node(node).clone();
        self.stats[node.0].visited = true;
        let detections = self.rec.detect(node.0, &spec.class)?;
        self.stats[node.0]
            .detect_count
            .get_or_insert(detections.len());
        let mut base: Vec<usize> = Vec::new();
        'member: for d in detections {
            for p in &spec.base_properties {
                if !self.rec.has_property(node.0, d.object, p)? {
                    continue 'member;
                }
            }
            base.push(d.object);
        }
        self.stats[node.0].after_props.get_or_insert(base.len());

        let mut passing: Vec<usize> = Vec::new();
        let mut first_fail: Option<Witness> = None;
        'check: for &member in &base {
            for p in &spec.asserted_properties {
                if !self.rec.has_property(node.0, member, p)? {
                    if first_fail.is_none() {
                        first_fail = Some(self.witness(node, member, p)?);
                    }
                    continue 'check;
                }
            }
            if !self.edges_hold_for_member(node, member, &mut first_fail)? {
                continue 'check;
            }
            passing.push(member);
        }

        let (ok, expected) = match spec.quantifier {
            Quantifier::All => (passing.len() == base.len(), base.len()),
            Quantifier::Exactly(n) => (passing.len() == n as usize, n as usize),
            Quantifier::Exists => (!passing.is_empty(), 1),
        };
        if ok {
            self.stats[node.0].ever_bound = true;
            Ok(Some(passing))
        } else {
            if self.stats[node.0].quantifier_fail.is_none() {
                let message = match spec.quantifier {
                    Quantifier::All => format!(
                        "{} of {} {} satisfy the assertion",
                        passing.len(),
                        base.len(),
                        plural_word(&spec.class)
                    ),
                    _ => format!("expected {}, found {}", expected, passing.len()),
                };
                self.stats[node.0].quantifier_fail = Some(Diagnostic {
                    node: node.0,
                    kind: DiagnosticKind::QuantifierMismatch,
                    message,
                    witness: first_fail,
                    expected: Some(expected),
                    found: Some(passing.len()),
                });
            }
            Ok(None)
        }
    }

    fn edges_hold_for_member(
        &mut self,
        node: NodeId,
        member: usize,
        first_fail: &mut Option<Witness>,
    ) -> Result<bool, Stop> {
        for edge in self.graph.edges.clone() {
            if edge.answer_bearing || !edge.touches(node) {
                continue;
            }
            let other = edge.other(node);
            let Some(other_obj) = self.single_binding(other) else {
                continue;
            };
            let holds = if other_obj == member {
                false
            } else {
                let (subject, object) = if edge.to == node {
                    (member, other_obj)
                } else {
                    (other_obj, member)
                };
                self.rec.relation(node.0, subject, object, &edge.relation)? == Some(true)
            };
            if !holds {
                if first_fail.is_none() {
                    let class = self
                        .rec
                        .query_property(node.0, member, crate::vocab::CLASS_QUERY)?
                        .unwrap_or_else(|| "object".to_string());
                    *first_fail = Some(Witness {
                        object: member,
                        failed_requirement: edge.relation.name_tokens(false).join(" "),
                        actual: None,
                        class,
                    });
                }
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Check one edge between two already-bound objects.
    fn check_edge_pair(
        &mut self,
        edge: &Edge,
        to_obj: usize,
        from_obj: usize,
    ) -> Result<Option<bool>, Stop> {
        if to_obj == from_obj {
            return Ok(Some(false));
        }
        let edge = edge.clone();
        self.rec
            .relation(edge.to.0, to_obj, from_obj, &edge.relation)
    }

    /// The failure locus: the first node in DFS order that never bound,
    /// with the reason derived from its stats.
    pub fn failure_diagnostics(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        for node in &self.order {
            let s = &self.stats[node.0];
            if !s.visited || s.ever_bound {
                continue;
            }
            if let Some(q) = &s.quantifier_fail {
                out.push(q.clone());
                continue;
            }
            let spec = self.graph.node(*node);
            let (kind, witness) = if s.detect_count == Some(0) {
                (DiagnosticKind::NoDetection, None)
            } else if s.after_props == Some(0) {
                (DiagnosticKind::PropertiesEmptied, s.prop_witness.clone())
            } else {
                (DiagnosticKind::RelationsFailed, s.relation_witness.clone())
            };
            out.push(Diagnostic {
                node: node.0,
                kind,
                message: format!("no valid assignment for node {} ({})", node.0, spec.class),
                witness,
                expected: None,
                found: None,
            });
        }
        out
    }
}

fn plural_word(word: &str) -> String {
    crate::engine::elaborate::pluralize(word)
}

/// Find valid assignments for a question graph, starting from `focus`.
/// `partial` pre-binds nodes; `need` sets how many assignments to look for.
/// `ExactBase`/`AllBase` override the focus node's quantifier.
pub fn find_assignments(
    graph: &QuestionGraph,
    focus: NodeId,
    partial: &Assignment,
    est: &dyn EstimatorSuite,
    need: Requirement,
) -> Result<(AssignmentOutcome, Vec<TraceStep>), UnsupportedConcept> {
    let altered;
    let graph = match need {
        Requirement::AllBase => {
            let mut g = graph.clone();
            g.nodes[focus.0].quantifier = Quantifier::All;
            altered = g;
            &altered
        }
        Requirement::ExactBase(n) => {
            let mut g = graph.clone();
            g.nodes[focus.0].quantifier = Quantifier::Exactly(n);
            altered = g;
            &altered
        }
        _ => graph,
    };
    let need = match need {
        Requirement::AllBase | Requirement::ExactBase(_) => Requirement::One,
        other => other,
    };
    let mut rec = Recorder::new(est);
    let mut search = Search::new(graph, &mut rec, 10_000, focus, need, None, partial);
    let result = search.run();
    let satisfied = search.complete > 0;
    let assignments = if need == Requirement::EntireSet {
        search.all.clone()
    } else {
        search.first.clone().into_iter().collect()
    };
    let diagnostics = if satisfied {
        Vec::new()
    } else {
        search.failure_diagnostics()
    };
    match result {
        Ok(()) => Ok((
            AssignmentOutcome {
                assignments,
                satisfied,
                diagnostics,
            },
            rec.trace,
        )),
        Err(Stop::Unsupported(u)) => Err(u),
        Err(Stop::CandidateLimit { node, count }) => Ok((
            AssignmentOutcome {
                assignments: Vec::new(),
                satisfied: false,
                diagnostics: vec![Diagnostic {
                    node,
                    kind: DiagnosticKind::CandidateLimit,
                    message: format!("candidate limit exceeded: {count} candidates"),
                    witness: None,
                    expected: None,
                    found: None,
                }],
            },
            rec.trace,
        )),
    }
}
