//! The question-graph intermediate representation.
//!
//! A question is a directed graph: nodes are object slots carrying class,
//! property, quantifier and query requirements; edges are relations between
//! slots. Exactly one answer spec (a queried property `f`, a set property
//! `g`, a quantity comparison, or an answer-bearing comparison edge) may be
//! present; with none, the graph is a pure existence question.
//!
//! Edge direction follows the relation's reference: an edge `from -> to`
//! with relation `r` asserts that the `to` object stands in relation `r`
//! to the `from` object ("to is r of from").

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::vocab::{ConceptVocabulary, CLASS_QUERY, COUNT_SET_PROPERTY, UNCONSTRAINED_CLASS};

/// Index of a node within its graph (dense, 0-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// How many objects a node requires.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub enum Quantifier {
    /// At least one (the default).
    #[default]
    Exists,
    /// Every base-set member must satisfy the node's assertions.
    All,
    /// Exactly `n` base-set members must satisfy the node's assertions.
    Exactly(u32),
}

/// Comparison operator for quantity-relative links.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompareOp {
    Same,
    Greater,
    Fewer,
}

impl CompareOp {
    pub fn token(self) -> &'static str {
        match self {
            CompareOp::Same => "same",
            CompareOp::Greater => "greater",
            CompareOp::Fewer => "fewer",
        }
    }

    pub fn from_token(tok: &str) -> Option<Self> {
        match tok {
            "same" => Some(CompareOp::Same),
            "greater" => Some(CompareOp::Greater),
            "fewer" => Some(CompareOp::Fewer),
            _ => None,
        }
    }
}

/// Quantity of this node's valid set compared against another node's.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct QuantityCompare {
    pub other: NodeId,
    pub op: CompareOp,
}

/// One disjunct of a SuperNode: a class plus extra property requirements.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RequirementBundle {
    pub class: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub properties: Vec<String>,
}

/// Regular object slot, or a disjunction of requirement bundles.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Regular,
    SuperNode(Vec<RequirementBundle>),
}

/// Whether a property comparison demands equal or differing values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompareMode {
    Same,
    Different,
}

/// The relation carried by an edge.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum RelationSpec {
    /// Location-based relation, e.g. "left", "behind". Also the catch-all
    /// for unknown relation names (reported as unsupported at answer time).
    Spatial(String),
    /// Both endpoints' values of `property_type` compared under `mode`.
    PropertyCompare {
        property_type: String,
        mode: CompareMode,
    },
    /// Relation over the whole object set, e.g. "closest".
    Superlative(String),
}

/// Superlative relation names recognized by the token grammar.
pub const SUPERLATIVE_NAMES: [&str; 2] = ["closest", "farthest"];

impl RelationSpec {
    pub fn spatial(name: &str) -> Self {
        RelationSpec::Spatial(name.to_string())
    }

    pub fn compare(property_type: &str, mode: CompareMode) -> Self {
        RelationSpec::PropertyCompare {
            property_type: property_type.to_string(),
            mode,
        }
    }

    /// Name tokens as used in the serialized form (direction not included).
    pub fn name_tokens(&self, answer_bearing: bool) -> Vec<String> {
        match self {
            RelationSpec::Spatial(name) | RelationSpec::Superlative(name) => vec![name.clone()],
            RelationSpec::PropertyCompare {
                property_type,
                mode,
            } => {
                let head = match (mode, answer_bearing) {
                    (CompareMode::Same, false) => "same",
                    (CompareMode::Different, false) => "different",
                    (CompareMode::Same, true) => "query_same",
                    (CompareMode::Different, true) => "query_different",
                };
                vec![head.to_string(), property_type.clone()]
            }
        }
    }
}

/// Directed relation between two nodes. `answer_bearing` marks the single
/// comparison edge whose outcome is the question's yes/no answer.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Edge {
    pub from: NodeId,
    pub to: NodeId,
    pub relation: RelationSpec,
    pub answer_bearing: bool,
}

impl Edge {
    pub fn new(from: NodeId, to: NodeId, relation: RelationSpec) -> Self {
        Edge {
            from,
            to,
            relation,
            answer_bearing: false,
        }
    }

    pub fn other(&self, node: NodeId) -> NodeId {
        if self.from == node {
            self.to
        } else {
            self.from
        }
    }

    pub fn touches(&self, node: NodeId) -> bool {
        self.from == node || self.to == node
    }
}

/// One object slot of the question.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    /// Canonical class name; [`UNCONSTRAINED_CLASS`] means any object.
    pub class: String,
    /// Properties restricting the node's base set.
    pub base_properties: Vec<String>,
    /// Properties asserted over the quantified set (e.g. "are all the boats
    /// white": white is asserted, not a base restriction).
    pub asserted_properties: Vec<String>,
    /// `f`: queried property type. [`CLASS_QUERY`] queries the object class.
    pub query_property: Option<String>,
    /// `g`: queried set property ("number" is supported).
    pub set_query: Option<String>,
    pub quantifier: Quantifier,
    pub quantity_compare: Option<QuantityCompare>,
}

impl Node {
    pub fn regular(id: usize, class: &str) -> Self {
        Node {
            id: NodeId(id),
            kind: NodeKind::Regular,
            class: class.to_string(),
            base_properties: Vec::new(),
            asserted_properties: Vec::new(),
            query_property: None,
            set_query: None,
            quantifier: Quantifier::Exists,
            quantity_compare: None,
        }
    }

    pub fn super_node(id: usize, alternatives: Vec<RequirementBundle>) -> Self {
        Node {
            kind: NodeKind::SuperNode(alternatives),
            ..Node::regular(id, UNCONSTRAINED_CLASS)
        }
    }

    pub fn with_properties(mut self, props: &[&str]) -> Self {
        self.base_properties = props.iter().map(|p| p.to_string()).collect();
        self
    }

    pub fn with_asserted(mut self, props: &[&str]) -> Self {
        self.asserted_properties = props.iter().map(|p| p.to_string()).collect();
        self
    }

    pub fn with_query(mut self, property_type: &str) -> Self {
        self.query_property = Some(property_type.to_string());
        self
    }

    pub fn with_count(mut self) -> Self {
        self.set_query = Some(COUNT_SET_PROPERTY.to_string());
        self
    }

    pub fn with_quantifier(mut self, q: Quantifier) -> Self {
        self.quantifier = q;
        self
    }

    pub fn is_super(&self) -> bool {
        matches!(self.kind, NodeKind::SuperNode(_))
    }

    pub fn is_unconstrained_class(&self) -> bool {
        self.class == UNCONSTRAINED_CLASS
    }
}

/// What kind of answer the graph requests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnswerSpec {
    /// No answer field anywhere: a yes/no existence (or quantifier) question.
    Existence,
    /// `f` on `node`.
    QueryProperty { node: NodeId },
    /// `g` on `node`.
    SetProperty { node: NodeId },
    /// Quantity comparison rooted at `node`.
    QuantityCompare { node: NodeId },
    /// Answer-bearing comparison edge (index into `edges`).
    CompareEdge { edge: usize },
}

/// A complete question graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuestionGraph {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    /// Serialization starts here; carries the answer spec when one exists.
    pub root: NodeId,
}

impl QuestionGraph {
    pub fn new(nodes: Vec<Node>, edges: Vec<Edge>, root: usize) -> Self {
        QuestionGraph {
            nodes,
            edges,
            root: NodeId(root),
        }
    }

    pub fn single(node: Node) -> Self {
        QuestionGraph {
            nodes: vec![node],
            edges: Vec::new(),
            root: NodeId(0),
        }
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Scan for the answer spec. Valid graphs carry at most one; on invalid
    /// input the first in (node order, then edge order) wins.
    pub fn answer_spec(&self) -> AnswerSpec {
        for node in &self.nodes {
            if node.query_property.is_some() {
                return AnswerSpec::QueryProperty { node: node.id };
            }
            if node.set_query.is_some() {
                return AnswerSpec::SetProperty { node: node.id };
            }
            if node.quantity_compare.is_some() {
                return AnswerSpec::QuantityCompare { node: node.id };
            }
        }
        for (i, edge) in self.edges.iter().enumerate() {
            if edge.answer_bearing {
                return AnswerSpec::CompareEdge { edge: i };
            }
        }
        AnswerSpec::Existence
    }

    pub fn edges_at(&self, node: NodeId) -> impl Iterator<Item = (usize, &Edge)> {
        self.edges
            .iter()
            .enumerate()
            .filter(move |(_, e)| e.touches(node))
    }

    /// Deterministic depth-first traversal from the root. Children are
    /// visited in ascending target-node id; edges to already-visited nodes
    /// are emitted as back references ordered by discovery index; a
    /// quantity-compare target unreachable by edges is descended into right
    /// after the comparing node's own fields.
    pub fn traversal(&self) -> Traversal {
        let mut t = Traversal {
            order: Vec::with_capacity(self.nodes.len()),
            discovery: vec![usize::MAX; self.nodes.len()],
            steps: Vec::new(),
        };
        let mut edge_done = vec![false; self.edges.len()];
        if !self.nodes.is_empty() {
            let root = if self.root.0 < self.nodes.len() {
                self.root
            } else {
                NodeId(0)
            };
            self.visit(root, &mut t, &mut edge_done);
            // Stranded components (invalid graphs only): append so the
            // traversal stays total.
            for id in 0..self.nodes.len() {
                if t.discovery[id] == usize::MAX {
                    self.visit(NodeId(id), &mut t, &mut edge_done);
                }
            }
        }
        t
    }

    fn visit(&self, node: NodeId, t: &mut Traversal, edge_done: &mut Vec<bool>) {
        t.discovery[node.0] = t.order.len();
        t.order.push(node);
        t.steps.push(TraversalStep::Visit(node));

        if let Some(qc) = self.node(node).quantity_compare {
            if qc.other.0 < self.nodes.len() && t.discovery[qc.other.0] == usize::MAX {
                t.steps.push(TraversalStep::CompareDescend { from: node });
                self.visit(qc.other, t, edge_done);
                t.steps.push(TraversalStep::CompareAscend);
            }
        }

        loop {
            let mut best: Option<(EdgeKey, usize)> = None;
            for (i, edge) in self.edges_at(node) {
                if edge_done[i] {
                    continue;
                }
                let other = edge.other(node);
                if other.0 >= self.nodes.len() || other == node {
                    edge_done[i] = true; // malformed edge, never emitted
                    continue;
                }
                let key = EdgeKey::new(edge, node, t.discovery[other.0], i);
                if best.as_ref().map_or(true, |(k, _)| key < *k) {
                    best = Some((key, i));
                }
            }
            let Some((_, idx)) = best else { break };
            edge_done[idx] = true;
            let other = self.edges[idx].other(node);
            if t.discovery[other.0] == usize::MAX {
                t.steps.push(TraversalStep::Descend {
                    edge: idx,
                    at: node,
                });
                self.visit(other, t, edge_done);
                t.steps.push(TraversalStep::Ascend);
            } else {
                t.steps.push(TraversalStep::BackRef {
                    edge: idx,
                    at: node,
                });
            }
        }
    }

    pub fn dfs_order(&self) -> Vec<NodeId> {
        self.traversal().order
    }

    /// Renumber nodes into DFS discovery order and list edges in traversal
    /// emission order. Two graphs are structurally equal iff their canonical
    /// forms compare equal.
    pub fn canonicalize(&self) -> QuestionGraph {
        let t = self.traversal();
        let remap = |id: NodeId| NodeId(t.discovery[id.0]);
        let mut nodes: Vec<Node> = Vec::with_capacity(self.nodes.len());
        for &old in &t.order {
            let mut n = self.node(old).clone();
            n.id = remap(old);
            if let Some(qc) = &mut n.quantity_compare {
                if qc.other.0 < self.nodes.len() {
                    qc.other = remap(qc.other);
                }
            }
            nodes.push(n);
        }
        let mut edges = Vec::with_capacity(self.edges.len());
        for step in &t.steps {
            if let TraversalStep::Descend { edge, .. } | TraversalStep::BackRef { edge, .. } = step
            {
                let e = &self.edges[*edge];
                edges.push(Edge {
                    from: remap(e.from),
                    to: remap(e.to),
                    relation: e.relation.clone(),
                    answer_bearing: e.answer_bearing,
                });
            }
        }
        QuestionGraph {
            nodes,
            edges,
            root: NodeId(0),
        }
    }
}

/// Edge ordering at a node: back references first (by discovery index of the
/// far endpoint), then descents by ascending raw id; relation tokens break
/// remaining ties so that edge-list order never affects the serialization.
#[derive(PartialEq, Eq, PartialOrd, Ord)]
struct EdgeKey {
    discovered: bool,
    other_rank: usize,
    reversed: bool,
    tokens: Vec<String>,
    index: usize,
}

impl EdgeKey {
    fn new(edge: &Edge, at: NodeId, other_discovery: usize, index: usize) -> Self {
        let discovered = other_discovery != usize::MAX;
        EdgeKey {
            discovered: !discovered, // false sorts first: back refs lead
            other_rank: if discovered {
                other_discovery
            } else {
                edge.other(at).0
            },
            reversed: edge.from != at,
            tokens: edge.relation.name_tokens(edge.answer_bearing),
            index,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraversalStep {
    /// A node is discovered; its fields are emitted here.
    Visit(NodeId),
    /// Inline descent into a quantity-compare target.
    CompareDescend {
        from: NodeId,
    },
    CompareAscend,
    /// Traverse edge `edge` from discovered endpoint `at` into a new node.
    Descend {
        edge: usize,
        at: NodeId,
    },
    Ascend,
    /// Edge whose far endpoint is already discovered.
    BackRef {
        edge: usize,
        at: NodeId,
    },
}

pub struct Traversal {
    /// Nodes in discovery order.
    pub order: Vec<NodeId>,
    /// discovery[raw id] = discovery index (usize::MAX if unreached).
    pub discovery: Vec<usize>,
    pub steps: Vec<TraversalStep>,
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Locus {
    Graph,
    Node(usize),
    Edge(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub severity: Severity,
    pub rule: &'static str,
    pub locus: Locus,
    pub message: String,
}

/// Outcome of [`validate_graph`]: empty iff the graph satisfies every
/// structural invariant and uses only in-vocabulary concepts. Unknown
/// concepts are warnings (they are legal and reported at answer time);
/// everything else listed is an error.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has_errors(&self) -> bool {
        self.violations
            .iter()
            .any(|v| v.severity == Severity::Error)
    }

    pub fn errors(&self) -> impl Iterator<Item = &Violation> {
        self.violations
            .iter()
            .filter(|v| v.severity == Severity::Error)
    }

    fn error(&mut self, rule: &'static str, locus: Locus, message: String) {
        self.violations.push(Violation {
            severity: Severity::Error,
            rule,
            locus,
            message,
        });
    }

    fn warn(&mut self, rule: &'static str, locus: Locus, message: String) {
        self.violations.push(Violation {
            severity: Severity::Warning,
            rule,
            locus,
            message,
        });
    }
}

pub mod rules {
    pub const EMPTY_GRAPH: &str = "empty graph";
    pub const NODE_ID_MISMATCH: &str = "node id not dense";
    pub const ROOT_OUT_OF_RANGE: &str = "root out of range";
    pub const EDGE_ENDPOINT: &str = "edge endpoint out of range";
    pub const EDGE_SELF_LOOP: &str = "edge endpoints equal";
    pub const QUERY_AND_SET: &str = "node carries both f and g";
    pub const MULTIPLE_ANSWER_SPECS: &str = "multiple answer specs";
    pub const EXACTLY_ZERO: &str = "exact quantifier below one";
    pub const COMPARE_SELF: &str = "quantity compare references itself";
    pub const COMPARE_TARGET: &str = "quantity compare target out of range";
    pub const COMPARE_QUANTIFIED: &str = "quantity compare on quantified node";
    pub const SUPER_EMPTY: &str = "supernode without alternatives";
    pub const SUPER_ANSWER_FIELD: &str = "supernode carries f or g";
    pub const SUPER_QUANTIFIED: &str = "supernode carries quantifier";
    pub const SUPER_CONSTRAINED: &str = "supernode carries direct constraints";
    pub const ADJACENT_QUANTIFIED: &str = "edge joins two quantified nodes";
    pub const ANSWER_EDGE_KIND: &str = "answer-bearing edge is not a comparison";
    pub const NOT_CONNECTED: &str = "graph not weakly connected";
    pub const UNKNOWN_CLASS: &str = "class not in vocabulary";
    pub const UNKNOWN_PROPERTY: &str = "property not in vocabulary";
    pub const UNKNOWN_PROPERTY_TYPE: &str = "property type not in vocabulary";
    pub const UNKNOWN_SET_PROPERTY: &str = "set property not supported";
    pub const UNKNOWN_RELATION: &str = "relation not in vocabulary";
}

/// Check every structural invariant; flag out-of-vocabulary concepts as
/// warnings. The answering engine accepts any graph whose report has no
/// errors.
pub fn validate_graph(graph: &QuestionGraph, vocab: &ConceptVocabulary) -> ValidationReport {
    let mut report = ValidationReport::default();
    let n = graph.nodes.len();

    if n == 0 {
        report.error(
            rules::EMPTY_GRAPH,
            Locus::Graph,
            "graph has no nodes".into(),
        );
        return report;
    }
    if graph.root.0 >= n {
        report.error(
            rules::ROOT_OUT_OF_RANGE,
            Locus::Graph,
            format!("root {} with {} nodes", graph.root, n),
        );
    }

    let mut answer_specs: Vec<String> = Vec::new();
    for (i, node) in graph.nodes.iter().enumerate() {
        let locus = Locus::Node(i);
        if node.id.0 != i {
            report.error(
                rules::NODE_ID_MISMATCH,
                locus,
                format!("node at position {i} has id {}", node.id),
            );
        }
        if node.query_property.is_some() && node.set_query.is_some() {
            report.error(
                rules::QUERY_AND_SET,
                locus,
                "a node may query a property or a set property, not both".into(),
            );
        }
        if let Quantifier::Exactly(k) = node.quantifier {
            if k == 0 {
                report.error(rules::EXACTLY_ZERO, locus, "exact quantifier of 0".into());
            }
        }
        if let Some(qc) = node.quantity_compare {
            if qc.other == node.id {
                report.error(
                    rules::COMPARE_SELF,
                    locus,
                    "node compares its count with itself".into(),
                );
            } else if qc.other.0 >= n {
                report.error(
                    rules::COMPARE_TARGET,
                    locus,
                    format!("compare target {} out of range", qc.other),
                );
            } else if node.quantifier != Quantifier::Exists
                || graph.node(qc.other).quantifier != Quantifier::Exists
            {
                report.error(
                    rules::COMPARE_QUANTIFIED,
                    locus,
                    "quantity comparison requires plain nodes on both sides".into(),
                );
            }
            answer_specs.push(format!("quantity compare on node {}", node.id));
        }
        if let Some(f) = &node.query_property {
            answer_specs.push(format!("f on node {}", node.id));
            if f != CLASS_QUERY && !vocab.is_property_type(vocab.canonical(f)) {
                report.warn(
                    rules::UNKNOWN_PROPERTY_TYPE,
                    locus,
                    format!("queried property type '{f}'"),
                );
            }
        }
        if let Some(g) = &node.set_query {
            answer_specs.push(format!("g on node {}", node.id));
            if g != COUNT_SET_PROPERTY {
                report.warn(
                    rules::UNKNOWN_SET_PROPERTY,
                    locus,
                    format!("set property '{g}'"),
                );
            }
        }
        match &node.kind {
            NodeKind::Regular => {
                check_class(&mut report, vocab, &node.class, locus);
                for p in node.base_properties.iter().chain(&node.asserted_properties) {
                    check_property(&mut report, vocab, p, locus);
                }
            }
            NodeKind::SuperNode(alternatives) => {
                if alternatives.is_empty() {
                    report.error(
                        rules::SUPER_EMPTY,
                        locus,
                        "supernode needs at least one alternative".into(),
                    );
                }
                // A set property (counting over the disjunction) is fine; a
                // queried property over a disjunction is not.
                if node.query_property.is_some() {
                    report.error(
                        rules::SUPER_ANSWER_FIELD,
                        locus,
                        "supernodes cannot carry a queried property".into(),
                    );
                }
                if node.quantifier != Quantifier::Exists {
                    report.error(
                        rules::SUPER_QUANTIFIED,
                        locus,
                        "supernodes cannot carry quantifiers".into(),
                    );
                }
                if !node.is_unconstrained_class()
                    || !node.base_properties.is_empty()
                    || !node.asserted_properties.is_empty()
                {
                    report.error(
                        rules::SUPER_CONSTRAINED,
                        locus,
                        "supernode requirements live in its alternatives".into(),
                    );
                }
                for alt in alternatives {
                    check_class(&mut report, vocab, &alt.class, locus);
                    for p in &alt.properties {
                        check_property(&mut report, vocab, p, locus);
                    }
                }
            }
        }
    }

    for (i, edge) in graph.edges.iter().enumerate() {
        let locus = Locus::Edge(i);
        if edge.from.0 >= n || edge.to.0 >= n {
            report.error(
                rules::EDGE_ENDPOINT,
                locus,
                format!("edge {} -> {} with {} nodes", edge.from, edge.to, n),
            );
            continue;
        }
        if edge.from == edge.to {
            report.error(rules::EDGE_SELF_LOOP, locus, "edge endpoints equal".into());
        }
        if graph.node(edge.from).quantifier != Quantifier::Exists
            && graph.node(edge.to).quantifier != Quantifier::Exists
        {
            report.error(
                rules::ADJACENT_QUANTIFIED,
                locus,
                "a relation between two quantified nodes has no defined scope".into(),
            );
        }
        match &edge.relation {
            RelationSpec::Spatial(name) | RelationSpec::Superlative(name) => {
                if edge.answer_bearing {
                    report.error(
                        rules::ANSWER_EDGE_KIND,
                        locus,
                        "only property comparisons can bear the answer".into(),
                    );
                }
                if !vocab.is_relation(vocab.canonical(name)) {
                    report.warn(rules::UNKNOWN_RELATION, locus, format!("relation '{name}'"));
                }
            }
            RelationSpec::PropertyCompare { property_type, .. } => {
                if edge.answer_bearing {
                    answer_specs.push(format!("comparison edge {i}"));
                }
                if !vocab.is_property_type(vocab.canonical(property_type)) {
                    report.warn(
                        rules::UNKNOWN_PROPERTY_TYPE,
                        locus,
                        format!("compared property type '{property_type}'"),
                    );
                }
            }
        }
    }

    if answer_specs.len() > 1 {
        report.error(
            rules::MULTIPLE_ANSWER_SPECS,
            Locus::Graph,
            answer_specs.join("; "),
        );
    }

    if !weakly_connected(graph) {
        report.error(
            rules::NOT_CONNECTED,
            Locus::Graph,
            "every node must be reachable through edges or compare links".into(),
        );
    }

    report
}

fn check_class(
    report: &mut ValidationReport,
    vocab: &ConceptVocabulary,
    class: &str,
    locus: Locus,
) {
    let canonical = vocab.canonical(class);
    if canonical != UNCONSTRAINED_CLASS
        && !vocab.is_class(canonical)
        && !vocab.is_superordinate(canonical)
    {
        report.warn(rules::UNKNOWN_CLASS, locus, format!("class '{class}'"));
    }
}

fn check_property(
    report: &mut ValidationReport,
    vocab: &ConceptVocabulary,
    value: &str,
    locus: Locus,
) {
    if vocab.type_of_value(vocab.canonical(value)).is_none() {
        report.warn(
            rules::UNKNOWN_PROPERTY,
            locus,
            format!("property '{value}'"),
        );
    }
}

/// Weak connectivity over relation edges plus quantity-compare links.
fn weakly_connected(graph: &QuestionGraph) -> bool {
    let n = graph.nodes.len();
    if n == 0 {
        return false;
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    while let Some(at) = stack.pop() {
        let push = |next: NodeId, seen: &mut Vec<bool>, stack: &mut Vec<usize>| {
            if next.0 < n && !seen[next.0] {
                seen[next.0] = true;
                stack.push(next.0);
            }
        };
        for edge in &graph.edges {
            if edge.touches(NodeId(at)) {
                push(edge.other(NodeId(at)), &mut seen, &mut stack);
            }
        }
        if let Some(qc) = graph.nodes[at].quantity_compare {
            push(qc.other, &mut seen, &mut stack);
        }
        for (i, node) in graph.nodes.iter().enumerate() {
            if let Some(qc) = node.quantity_compare {
                if qc.other.0 == at {
                    push(NodeId(i), &mut seen, &mut stack);
                }
            }
        }
    }
    seen.into_iter().all(|s| s)
}

// ---------------------------------------------------------------------------
// JSON file format
// ---------------------------------------------------------------------------

mod json {
    use super::*;

    #[derive(Serialize, Deserialize)]
    pub struct GraphDto {
        #[serde(default, skip_serializing_if = "is_zero")]
        pub root: usize,
        pub nodes: Vec<NodeDto>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        pub edges: Vec<EdgeDto>,
    }

    fn is_zero(v: &usize) -> bool {
        *v == 0
    }

    #[derive(Serialize, Deserialize)]
    pub struct NodeDto {
        pub id: usize,
        #[serde(default = "regular", skip_serializing_if = "is_regular")]
        pub kind: String,
        pub class: String,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        pub base_properties: Vec<String>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        pub asserted_properties: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pub f: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pub g: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pub quantifier: Option<QuantifierDto>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pub quantity_compare: Option<CompareDto>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        pub alternatives: Vec<RequirementBundle>,
    }

    fn regular() -> String {
        "regular".to_string()
    }

    fn is_regular(kind: &str) -> bool {
        kind == "regular"
    }

    #[derive(Serialize, Deserialize)]
    pub struct QuantifierDto {
        #[serde(rename = "type")]
        pub kind: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pub n: Option<u32>,
    }

    #[derive(Serialize, Deserialize)]
    pub struct CompareDto {
        pub node: usize,
        pub op: CompareOp,
    }

    #[derive(Serialize, Deserialize)]
    pub struct EdgeDto {
        pub from: usize,
        pub to: usize,
        pub relation: RelationDto,
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        pub answer_bearing: bool,
    }

    #[derive(Serialize, Deserialize)]
    pub struct RelationDto {
        pub kind: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pub name: Option<String>,
        #[serde(rename = "type", default, skip_serializing_if = "Option::is_none")]
        pub property_type: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pub mode: Option<CompareMode>,
    }

    pub fn to_dto(graph: &QuestionGraph) -> GraphDto {
        GraphDto {
            root: graph.root.0,
            nodes: graph.nodes.iter().map(node_to_dto).collect(),
            edges: graph.edges.iter().map(edge_to_dto).collect(),
        }
    }

    fn node_to_dto(node: &Node) -> NodeDto {
        let (kind, alternatives) = match &node.kind {
            NodeKind::Regular => ("regular".to_string(), Vec::new()),
            NodeKind::SuperNode(alts) => ("super".to_string(), alts.clone()),
        };
        let quantifier = match node.quantifier {
            Quantifier::Exists => None,
            Quantifier::All => Some(QuantifierDto {
                kind: "all".to_string(),
                n: None,
            }),
            Quantifier::Exactly(n) => Some(QuantifierDto {
                kind: "exactly".to_string(),
                n: Some(n),
            }),
        };
        NodeDto {
            id: node.id.0,
            kind,
            class: node.class.clone(),
            base_properties: node.base_properties.clone(),
            asserted_properties: node.asserted_properties.clone(),
            f: node.query_property.clone(),
            g: node.set_query.clone(),
            quantifier,
            quantity_compare: node.quantity_compare.map(|qc| CompareDto {
                node: qc.other.0,
                op: qc.op,
            }),
            alternatives,
        }
    }

    fn edge_to_dto(edge: &Edge) -> EdgeDto {
        let relation = match &edge.relation {
            RelationSpec::Spatial(name) => RelationDto {
                kind: "spatial".to_string(),
                name: Some(name.clone()),
                property_type: None,
                mode: None,
            },
            RelationSpec::Superlative(name) => RelationDto {
                kind: "superlative".to_string(),
                name: Some(name.clone()),
                property_type: None,
                mode: None,
            },
            RelationSpec::PropertyCompare {
                property_type,
                mode,
            } => RelationDto {
                kind: "property_compare".to_string(),
                name: None,
                property_type: Some(property_type.clone()),
                mode: Some(*mode),
            },
        };
        EdgeDto {
            from: edge.from.0,
            to: edge.to.0,
            relation,
            answer_bearing: edge.answer_bearing,
        }
    }

    pub fn from_dto(dto: GraphDto) -> Result<QuestionGraph, String> {
        let mut nodes = Vec::with_capacity(dto.nodes.len());
        for n in dto.nodes {
            let kind = match n.kind.as_str() {
                "regular" => NodeKind::Regular,
                "super" | "super_node" | "supernode" => NodeKind::SuperNode(n.alternatives),
                other => return Err(format!("unknown node kind '{other}'")),
            };
            let quantifier = match n.quantifier {
                None => Quantifier::Exists,
                Some(q) => match q.kind.as_str() {
                    "exists" => Quantifier::Exists,
                    "all" => Quantifier::All,
                    "exactly" => Quantifier::Exactly(q.n.unwrap_or(0)),
                    other => return Err(format!("unknown quantifier '{other}'")),
                },
            };
            nodes.push(Node {
                id: NodeId(n.id),
                kind,
                class: n.class,
                base_properties: n.base_properties,
                asserted_properties: n.asserted_properties,
                query_property: n.f,
                set_query: n.g,
                quantifier,
                quantity_compare: n.quantity_compare.map(|qc| QuantityCompare {
                    other: NodeId(qc.node),
                    op: qc.op,
                }),
            });
        }
        let mut edges = Vec::with_capacity(dto.edges.len());
        for e in dto.edges {
            let relation = match e.relation.kind.as_str() {
                "spatial" => {
                    RelationSpec::Spatial(e.relation.name.ok_or("spatial relation needs a name")?)
                }
                "superlative" => RelationSpec::Superlative(
                    e.relation.name.ok_or("superlative relation needs a name")?,
                ),
                "property_compare" => RelationSpec::PropertyCompare {
                    property_type: e
                        .relation
                        .property_type
                        .ok_or("property comparison needs a type")?,
                    mode: e.relation.mode.unwrap_or(CompareMode::Same),
                },
                other => return Err(format!("unknown relation kind '{other}'")),
            };
            edges.push(Edge {
                from: NodeId(e.from),
                to: NodeId(e.to),
                relation,
                answer_bearing: e.answer_bearing,
            });
        }
        Ok(QuestionGraph {
            nodes,
            edges,
            root: NodeId(dto.root),
        })
    }
}

impl QuestionGraph {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(json::to_dto(self)).expect("graph serialization cannot fail")
    }

    pub fn from_json(value: serde_json::Value) -> Result<Self, GraphParseError> {
        let dto: json::GraphDto = serde_json::from_value(value)?;
        json::from_dto(dto).map_err(GraphParseError::Shape)
    }

    pub fn from_json_str(text: &str) -> Result<Self, GraphParseError> {
        Self::from_json(serde_json::from_str(text)?)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GraphParseError {
    #[error("graph json malformed: {0}")]
    Json(#[from] serde_json::Error),
    #[error("graph json malformed: {0}")]
    Shape(String),
}
