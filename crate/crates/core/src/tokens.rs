//! Token serialization of question graphs, with repair for invalid input.
//!
//! A graph is flattened by the deterministic DFS traversal of
//! [`QuestionGraph::traversal`] into a flat token sequence. Structural
//! markers open every node and every populated field:
//!
//! ```text
//! <NewNode>  start of a node (fields follow, then relation children)
//! <c> <p> <ap> <f> <g>   class / base properties / asserted properties /
//!                        queried property type / queried set property
//! <q> all    "all" quantifier          <n> 16   exact quantifier
//! <qc> same 2          quantity compare: op + target discovery ordinal
//! <qc> same <NewNode> ... <up>         inline target when unreachable
//! <rel> rev left <NewNode> ... <up>    edge + child subtree
//! <rel> fwd same color 0               edge back-reference by ordinal
//! <alt> <c> boat <p> red               one supernode alternative
//! <up>       close the current descent
//! ```
//!
//! Direction `fwd` means the edge points from the open node to the target,
//! `rev` the reverse. Comparison relations use two name tokens ("same
//! color"); `query_same`/`query_different` mark the answer-bearing form.
//! Multiword concepts are single underscore-joined tokens, so payload tokens
//! never collide with the marker set or with plain integers.
//!
//! Repair turns an arbitrary token list into one that parses, applying in
//! order: R1 markers before any `<NewNode>` attach to an implicit
//! `{c: object}` node; R2 markers with missing or malformed payload are
//! dropped; R3 duplicate field markers keep the first occurrence; R4 unknown
//! tokens in payload position are kept verbatim; R5 dangling `<up>` beyond
//! the root is dropped.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{
    validate_graph, CompareMode, CompareOp, Edge, Node, NodeId, NodeKind, Quantifier,
    QuantityCompare, QuestionGraph, RelationSpec, RequirementBundle, TraversalStep,
    SUPERLATIVE_NAMES,
};
use crate::vocab::{ConceptVocabulary, UNCONSTRAINED_CLASS};

pub const NEW_NODE: &str = "<NewNode>";
pub const CLASS: &str = "<c>";
pub const PROPS: &str = "<p>";
pub const ASSERTED: &str = "<ap>";
pub const QUERY: &str = "<f>";
pub const SET_QUERY: &str = "<g>";
pub const QUANT: &str = "<q>";
pub const EXACT: &str = "<n>";
pub const COMPARE: &str = "<qc>";
pub const RELATION: &str = "<rel>";
pub const ALTERNATIVE: &str = "<alt>";
pub const UP: &str = "<up>";

pub const DIR_FWD: &str = "fwd";
pub const DIR_REV: &str = "rev";

const MARKERS: [&str; 12] = [
    NEW_NODE,
    CLASS,
    PROPS,
    ASSERTED,
    QUERY,
    SET_QUERY,
    QUANT,
    EXACT,
    COMPARE,
    RELATION,
    ALTERNATIVE,
    UP,
];

pub fn is_marker(token: &str) -> bool {
    MARKERS.contains(&token)
}

fn as_ordinal(token: &str) -> Option<usize> {
    if token.is_empty() || !token.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    token.parse().ok()
}

/// A whitespace-separable token sequence (one serialized graph).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenSequence(pub Vec<String>);

impl TokenSequence {
    pub fn new(tokens: Vec<String>) -> Self {
        TokenSequence(tokens)
    }

    pub fn from_strs(tokens: &[&str]) -> Self {
        TokenSequence(tokens.iter().map(|t| t.to_string()).collect())
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for TokenSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join(" "))
    }
}

impl FromStr for TokenSequence {
    type Err = std::convert::Infallible;

    fn from_str(line: &str) -> Result<Self, Self::Err> {
        Ok(TokenSequence(
            line.split_whitespace().map(|t| t.to_string()).collect(),
        ))
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TokenError {
    #[error("graph is invalid: {0}")]
    InvalidGraph(String),
    #[error("token sequence is unrepairable: {0}")]
    Unrepairable(String),
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

/// Serialize a graph after checking its structural invariants.
pub fn serialize_graph(graph: &QuestionGraph) -> Result<TokenSequence, TokenError> {
    let empty = empty_vocab();
    let report = validate_graph(graph, &empty);
    if report.has_errors() {
        let first = report.errors().next().expect("has_errors guarantees one");
        return Err(TokenError::InvalidGraph(format!(
            "{}: {}",
            first.rule, first.message
        )));
    }
    Ok(emit_tokens(graph))
}

fn empty_vocab() -> ConceptVocabulary {
    ConceptVocabulary::new([], BTreeMap::new(), [], BTreeMap::new(), BTreeMap::new())
        .expect("empty vocabulary is well formed")
}

/// Token emission without the validity gate (used by repair, which must run
/// on graphs that do not pass validation).
fn emit_tokens(graph: &QuestionGraph) -> TokenSequence {
    let t = graph.traversal();
    let mut out: Vec<String> = Vec::new();
    let mut steps = t.steps.iter().peekable();
    while let Some(step) = steps.next() {
        match *step {
            TraversalStep::Visit(id) => {
                let node = graph.node(id);
                out.push(NEW_NODE.to_string());
                match &node.kind {
                    NodeKind::Regular => {
                        out.push(CLASS.to_string());
                        out.push(node.class.clone());
                        push_values(&mut out, PROPS, &node.base_properties);
                        push_values(&mut out, ASSERTED, &node.asserted_properties);
                    }
                    NodeKind::SuperNode(alts) => {
                        for alt in alts {
                            out.push(ALTERNATIVE.to_string());
                            out.push(CLASS.to_string());
                            out.push(alt.class.clone());
                            push_values(&mut out, PROPS, &alt.properties);
                        }
                    }
                }
                if let Some(f) = &node.query_property {
                    out.push(QUERY.to_string());
                    out.push(f.clone());
                }
                if let Some(g) = &node.set_query {
                    out.push(SET_QUERY.to_string());
                    out.push(g.clone());
                }
                match node.quantifier {
                    Quantifier::Exists => {}
                    Quantifier::All => {
                        out.push(QUANT.to_string());
                        out.push("all".to_string());
                    }
                    Quantifier::Exactly(k) => {
                        out.push(EXACT.to_string());
                        out.push(k.to_string());
                    }
                }
                if let Some(qc) = node.quantity_compare {
                    out.push(COMPARE.to_string());
                    out.push(qc.op.token().to_string());
                    // Target rendered as ordinal unless the traversal
                    // descends into it right here.
                    let inline = matches!(
                        steps.peek(),
                        Some(TraversalStep::CompareDescend { from }) if *from == id
                    );
                    if !inline {
                        out.push(t.discovery[qc.other.0].to_string());
                    }
                }
            }
            TraversalStep::CompareDescend { .. } => {}
            TraversalStep::CompareAscend | TraversalStep::Ascend => {
                out.push(UP.to_string());
            }
            TraversalStep::Descend { edge, at } | TraversalStep::BackRef { edge, at } => {
                let e = &graph.edges[edge];
                out.push(RELATION.to_string());
                out.push(if e.from == at { DIR_FWD } else { DIR_REV }.to_string());
                out.extend(e.relation.name_tokens(e.answer_bearing));
                if matches!(step, TraversalStep::BackRef { .. }) {
                    out.push(t.discovery[e.other(at).0].to_string());
                }
            }
        }
    }
    TokenSequence(out)
}

fn push_values(out: &mut Vec<String>, marker: &str, values: &[String]) {
    if !values.is_empty() {
        out.push(marker.to_string());
        out.extend(values.iter().cloned());
    }
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

/// Deserialize a token sequence, repairing it first when it does not parse.
/// A valid serialization parses to the unique graph that re-serializes to
/// the same tokens.
pub fn deserialize_tokens(tokens: &TokenSequence) -> Result<QuestionGraph, TokenError> {
    match parse_sequence(tokens) {
        Ok(graph) => Ok(graph),
        Err(_) => {
            let repaired = repair_tokens(tokens)?;
            parse_sequence(&repaired)
                .map_err(|e| TokenError::Unrepairable(format!("repair left invalid tokens: {e}")))
        }
    }
}

/// Fix a token sequence so that it parses (rules R1..R5 in module docs).
/// Sequences that already parse are returned unchanged, which also makes
/// repair idempotent.
pub fn repair_tokens(tokens: &TokenSequence) -> Result<TokenSequence, TokenError> {
    if parse_sequence(tokens).is_ok() {
        return Ok(tokens.clone());
    }
    let graph = lenient_rebuild(tokens)?;
    Ok(emit_tokens(&graph))
}

fn parse_sequence(tokens: &TokenSequence) -> Result<QuestionGraph, String> {
    let mut parser = Parser {
        toks: tokens.tokens(),
        pos: 0,
        nodes: Vec::new(),
        edges: Vec::new(),
    };
    if parser.toks.is_empty() {
        return Err("empty sequence".to_string());
    }
    parser.parse_node()?;
    if parser.pos != parser.toks.len() {
        return Err(format!("trailing tokens at {}", parser.pos));
    }
    Ok(QuestionGraph {
        nodes: parser.nodes,
        edges: parser.edges,
        root: NodeId(0),
    })
}

struct Parser<'a> {
    toks: &'a [String],
    pos: usize,
    nodes: Vec<Node>,
    edges: Vec<Edge>,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&'a str> {
        self.toks.get(self.pos).map(String::as_str)
    }

    fn bump(&mut self) -> Option<&'a str> {
        let t = self.peek();
        self.pos += 1;
        t
    }

    fn payload(&mut self, marker: &str) -> Result<String, String> {
        match self.peek() {
            Some(t) if !is_marker(t) => {
                self.pos += 1;
                Ok(t.to_string())
            }
            _ => Err(format!("{marker} missing payload")),
        }
    }

    /// Greedy payload list: everything up to the next marker.
    fn payload_list(&mut self, marker: &str) -> Result<Vec<String>, String> {
        let mut values = Vec::new();
        while let Some(t) = self.peek() {
            if is_marker(t) {
                break;
            }
            values.push(t.to_string());
            self.pos += 1;
        }
        if values.is_empty() {
            return Err(format!("{marker} missing payload"));
        }
        Ok(values)
    }

    fn parse_node(&mut self) -> Result<usize, String> {
        match self.bump() {
            Some(NEW_NODE) => {}
            other => return Err(format!("expected {NEW_NODE}, found {other:?}")),
        }
        let id = self.nodes.len();
        self.nodes.push(Node::regular(id, UNCONSTRAINED_CLASS));
        let mut saw_class = false;
        let saw = |field: &'static str, seen: &mut Vec<&'static str>| {
            if seen.contains(&field) {
                Err(format!("duplicate {field}"))
            } else {
                seen.push(field);
                Ok(())
            }
        };
        let mut seen: Vec<&'static str> = Vec::new();
        let mut alternatives: Vec<RequirementBundle> = Vec::new();

        loop {
            let Some(tok) = self.peek() else { break };
            match tok {
                CLASS => {
                    saw(CLASS, &mut seen)?;
                    self.pos += 1;
                    self.nodes[id].class = self.payload(CLASS)?;
                    saw_class = true;
                }
                PROPS => {
                    saw(PROPS, &mut seen)?;
                    self.pos += 1;
                    self.nodes[id].base_properties = self.payload_list(PROPS)?;
                }
                ASSERTED => {
                    saw(ASSERTED, &mut seen)?;
                    self.pos += 1;
                    self.nodes[id].asserted_properties = self.payload_list(ASSERTED)?;
                }
                QUERY => {
                    saw(QUERY, &mut seen)?;
                    self.pos += 1;
                    self.nodes[id].query_property = Some(self.payload(QUERY)?);
                }
                SET_QUERY => {
                    saw(SET_QUERY, &mut seen)?;
                    self.pos += 1;
                    self.nodes[id].set_query = Some(self.payload(SET_QUERY)?);
                }
                QUANT => {
                    saw("quantifier", &mut seen)?;
                    self.pos += 1;
                    self.nodes[id].quantifier = match self.payload(QUANT)?.as_str() {
                        "all" => Quantifier::All,
                        "exists" => Quantifier::Exists,
                        other => return Err(format!("unknown quantifier '{other}'")),
                    };
                }
                EXACT => {
                    saw("quantifier", &mut seen)?;
                    self.pos += 1;
                    let raw = self.payload(EXACT)?;
                    let k: u32 = raw
                        .parse()
                        .map_err(|_| format!("bad exact quantifier '{raw}'"))?;
                    if k == 0 {
                        return Err("exact quantifier below one".to_string());
                    }
                    self.nodes[id].quantifier = Quantifier::Exactly(k);
                }
                COMPARE => {
                    saw(COMPARE, &mut seen)?;
                    self.pos += 1;
                    let op_tok = self.payload(COMPARE)?;
                    let op = CompareOp::from_token(&op_tok)
                        .ok_or(format!("unknown compare op '{op_tok}'"))?;
                    let target = match self.peek() {
                        Some(NEW_NODE) => {
                            let child = self.parse_node()?;
                            self.expect_up()?;
                            child
                        }
                        Some(t) if as_ordinal(t).is_some() => {
                            let ord = as_ordinal(t).expect("checked");
                            self.pos += 1;
                            if ord >= self.nodes.len() {
                                return Err(format!("compare ordinal {ord} not yet defined"));
                            }
                            ord
                        }
                        other => return Err(format!("bad compare target {other:?}")),
                    };
                    if target == id {
                        return Err("compare target is the node itself".to_string());
                    }
                    self.nodes[id].quantity_compare = Some(QuantityCompare {
                        other: NodeId(target),
                        op,
                    });
                }
                ALTERNATIVE => {
                    self.pos += 1;
                    let mut class: Option<String> = None;
                    let mut properties: Vec<String> = Vec::new();
                    loop {
                        match self.peek() {
                            Some(CLASS) => {
                                if class.is_some() {
                                    return Err("duplicate <c> in alternative".to_string());
                                }
                                self.pos += 1;
                                class = Some(self.payload(CLASS)?);
                            }
                            Some(PROPS) => {
                                if !properties.is_empty() {
                                    return Err("duplicate <p> in alternative".to_string());
                                }
                                self.pos += 1;
                                properties = self.payload_list(PROPS)?;
                            }
                            _ => break,
                        }
                    }
                    let class = class.ok_or("alternative missing class")?;
                    alternatives.push(RequirementBundle { class, properties });
                }
                RELATION | UP => break,
                NEW_NODE => return Err("node without relation".to_string()),
                stray => return Err(format!("stray token '{stray}'")),
            }
        }

        if !alternatives.is_empty() {
            if saw_class {
                return Err("supernode with direct class".to_string());
            }
            self.nodes[id].kind = NodeKind::SuperNode(alternatives);
        }

        // Relation children and back references.
        while self.peek() == Some(RELATION) {
            self.pos += 1;
            let dir = match self.bump() {
                Some(DIR_FWD) => true,
                Some(DIR_REV) => false,
                other => return Err(format!("bad edge direction {other:?}")),
            };
            let mut name: Vec<String> = Vec::new();
            while let Some(t) = self.peek() {
                if is_marker(t) || as_ordinal(t).is_some() {
                    break;
                }
                name.push(t.to_string());
                self.pos += 1;
            }
            let (relation, answer_bearing) =
                relation_from_tokens(&name).ok_or_else(|| format!("bad relation name {name:?}"))?;
            let push_edge = |edges: &mut Vec<Edge>, target: usize| {
                let (from, to) = if dir {
                    (NodeId(id), NodeId(target))
                } else {
                    (NodeId(target), NodeId(id))
                };
                edges.push(Edge {
                    from,
                    to,
                    relation,
                    answer_bearing,
                });
            };
            match self.peek() {
                Some(NEW_NODE) => {
                    // The edge precedes its subtree's edges, matching the
                    // traversal emission order.
                    let target = self.nodes.len();
                    push_edge(&mut self.edges, target);
                    let child = self.parse_node()?;
                    debug_assert_eq!(child, target);
                    self.expect_up()?;
                }
                Some(t) if as_ordinal(t).is_some() => {
                    let ord = as_ordinal(t).expect("checked");
                    self.pos += 1;
                    if ord >= self.nodes.len() {
                        return Err(format!("back reference {ord} not yet defined"));
                    }
                    if ord == id {
                        return Err("relation target is the node itself".to_string());
                    }
                    push_edge(&mut self.edges, ord);
                }
                other => return Err(format!("bad relation target {other:?}")),
            }
        }

        Ok(id)
    }

    fn expect_up(&mut self) -> Result<(), String> {
        match self.bump() {
            Some(UP) => Ok(()),
            other => Err(format!("expected {UP}, found {other:?}")),
        }
    }
}

fn relation_from_tokens(name: &[String]) -> Option<(RelationSpec, bool)> {
    match name {
        [single] => {
            if SUPERLATIVE_NAMES.contains(&single.as_str()) {
                Some((RelationSpec::Superlative(single.clone()), false))
            } else {
                Some((RelationSpec::Spatial(single.clone()), false))
            }
        }
        [head, property_type] => {
            let (mode, bearing) = match head.as_str() {
                "same" => (CompareMode::Same, false),
                "different" => (CompareMode::Different, false),
                "query_same" => (CompareMode::Same, true),
                "query_different" => (CompareMode::Different, true),
                _ => return None,
            };
            Some((
                RelationSpec::PropertyCompare {
                    property_type: property_type.clone(),
                    mode,
                },
                bearing,
            ))
        }
        _ => None,
    }
}

// ---------------------------------------------------------------------------
// Lenient rebuild (the repair path)
// ---------------------------------------------------------------------------

#[derive(Default)]
struct RawNode {
    class: Option<String>,
    props: Vec<String>,
    asserted: Vec<String>,
    query: Option<String>,
    set_query: Option<String>,
    quantifier: Option<Quantifier>,
    compare: Option<(CompareOp, usize, bool)>, // (op, target, target_is_raw_index)
    alts: Vec<(Option<String>, Vec<String>)>,
    seen: Vec<&'static str>,
}

struct RawEdge {
    at: usize,
    target: usize,
    forward: bool,
    relation: RelationSpec,
    answer_bearing: bool,
}

enum Sink {
    None,
    Class,
    Props,
    Asserted,
    Query,
    SetQuery,
    Quant,
    Exact,
    AltClass,
    AltProps,
    /// Duplicate field group: payload silently dropped (R3).
    Drop,
}

struct RelGroup {
    at: usize,
    dir: Option<bool>,
    name: Vec<String>,
}

enum CompareStage {
    Op,
    Target(CompareOp),
}

fn lenient_rebuild(tokens: &TokenSequence) -> Result<QuestionGraph, TokenError> {
    let raw = tokens.tokens();
    if raw.is_empty() {
        return Err(TokenError::Unrepairable("empty sequence".to_string()));
    }

    let mut nodes: Vec<RawNode> = Vec::new();
    let mut edges: Vec<RawEdge> = Vec::new();
    let mut stack: Vec<usize> = Vec::new();
    let mut sink = Sink::None;
    let mut rel: Option<RelGroup> = None;
    let mut compare: Option<CompareStage> = None;

    // R1: content before the first <NewNode> attaches to an implicit node.
    let mut pending = Vec::with_capacity(raw.len() + 1);
    if raw[0] != NEW_NODE {
        pending.push(NEW_NODE.to_string());
    }
    pending.extend(raw.iter().cloned());

    for tok in &pending {
        let tok = tok.as_str();
        if is_marker(tok) {
            // An open compare group without a target is dropped (R2), unless
            // this marker starts its inline target node.
            if tok != NEW_NODE {
                compare = None;
            }
            // Same for an open relation group.
            if tok != NEW_NODE {
                rel = None;
            }
        }
        match tok {
            NEW_NODE => {
                let idx = nodes.len();
                nodes.push(RawNode::default());
                let top = stack.last().copied();
                if let Some(at) = top {
                    if let Some(CompareStage::Target(op)) = compare.take() {
                        nodes[at].compare = Some((op, idx, true));
                    } else {
                        let group = rel.take();
                        let (forward, relation, answer_bearing) = match group {
                            Some(g) => {
                                let (spec, bearing) = resolve_relation(&g.name);
                                (g.dir.unwrap_or(true), spec, bearing)
                            }
                            // Child with no relation group at all: attach
                            // with a default placeholder relation.
                            None => (true, RelationSpec::spatial("rel"), false),
                        };
                        edges.push(RawEdge {
                            at,
                            target: idx,
                            forward,
                            relation,
                            answer_bearing,
                        });
                    }
                }
                stack.push(idx);
                sink = Sink::None;
            }
            UP => {
                // R5: never pop the root.
                if stack.len() > 1 {
                    stack.pop();
                }
                sink = Sink::None;
            }
            RELATION => {
                if let Some(&at) = stack.last() {
                    rel = Some(RelGroup {
                        at,
                        dir: None,
                        name: Vec::new(),
                    });
                }
                sink = Sink::None;
            }
            COMPARE => {
                let at = *stack.last().expect("stack holds the implicit root");
                if nodes[at].seen.contains(&COMPARE) {
                    sink = Sink::Drop;
                } else {
                    nodes[at].seen.push(COMPARE);
                    compare = Some(CompareStage::Op);
                    sink = Sink::None;
                }
            }
            ALTERNATIVE => {
                let at = *stack.last().expect("stack holds the implicit root");
                nodes[at].alts.push((None, Vec::new()));
                sink = Sink::None;
            }
            CLASS | PROPS | ASSERTED | QUERY | SET_QUERY | QUANT | EXACT => {
                let at = *stack.last().expect("stack holds the implicit root");
                let in_alt = !nodes[at].alts.is_empty() && matches!(tok, CLASS | PROPS);
                if in_alt {
                    sink = if tok == CLASS {
                        Sink::AltClass
                    } else {
                        Sink::AltProps
                    };
                } else {
                    let field: &'static str = match tok {
                        CLASS => CLASS,
                        PROPS => PROPS,
                        ASSERTED => ASSERTED,
                        QUERY => QUERY,
                        SET_QUERY => SET_QUERY,
                        // <q> and <n> share one quantifier slot.
                        _ => "quantifier",
                    };
                    // R3 keeps the first occurrence, but a first occurrence
                    // that captured no payload was already dropped by R2,
                    // so a repeat may take over.
                    let node = &nodes[at];
                    let first_was_empty = match field {
                        CLASS => node.class.is_none(),
                        PROPS => node.props.is_empty(),
                        ASSERTED => node.asserted.is_empty(),
                        QUERY => node.query.is_none(),
                        SET_QUERY => node.set_query.is_none(),
                        _ => node.quantifier.is_none(),
                    };
                    if nodes[at].seen.contains(&field) && !first_was_empty {
                        sink = Sink::Drop; // R3
                    } else {
                        if !nodes[at].seen.contains(&field) {
                            nodes[at].seen.push(field);
                        }
                        sink = match tok {
                            CLASS => Sink::Class,
                            PROPS => Sink::Props,
                            ASSERTED => Sink::Asserted,
                            QUERY => Sink::Query,
                            SET_QUERY => Sink::SetQuery,
                            QUANT => Sink::Quant,
                            _ => Sink::Exact,
                        };
                    }
                }
            }
            payload => {
                // Compare group payloads take precedence, then relation
                // groups, then the current field sink.
                if let Some(stage) = compare.take() {
                    match stage {
                        CompareStage::Op => match CompareOp::from_token(payload) {
                            Some(op) => compare = Some(CompareStage::Target(op)),
                            None => {} // R2: malformed op drops the group
                        },
                        CompareStage::Target(op) => {
                            if let (Some(ord), Some(&at)) = (as_ordinal(payload), stack.last()) {
                                nodes[at].compare = Some((op, ord, false));
                            }
                            // Non-ordinal target: group dropped (R2).
                        }
                    }
                    continue;
                }
                if let Some(group) = &mut rel {
                    if group.dir.is_none() && group.name.is_empty() {
                        match payload {
                            DIR_FWD => {
                                group.dir = Some(true);
                                continue;
                            }
                            DIR_REV => {
                                group.dir = Some(false);
                                continue;
                            }
                            _ => group.dir = Some(true), // default direction
                        }
                    }
                    if let Some(ord) = as_ordinal(payload) {
                        let group = rel.take().expect("checked above");
                        let (spec, bearing) = resolve_relation(&group.name);
                        edges.push(RawEdge {
                            at: group.at,
                            target: ord,
                            forward: group.dir.unwrap_or(true),
                            relation: spec,
                            answer_bearing: bearing,
                        });
                    } else {
                        group.name.push(payload.to_string());
                    }
                    continue;
                }
                let at = *stack.last().expect("stack holds the implicit root");
                match sink {
                    Sink::Class => {
                        nodes[at].class = Some(payload.to_string());
                        sink = Sink::Drop; // single payload
                    }
                    Sink::Props => nodes[at].props.push(payload.to_string()),
                    Sink::Asserted => nodes[at].asserted.push(payload.to_string()),
                    Sink::Query => {
                        nodes[at].query = Some(payload.to_string());
                        sink = Sink::Drop;
                    }
                    Sink::SetQuery => {
                        nodes[at].set_query = Some(payload.to_string());
                        sink = Sink::Drop;
                    }
                    Sink::Quant => {
                        nodes[at].quantifier = match payload {
                            "all" => Some(Quantifier::All),
                            "exists" => Some(Quantifier::Exists),
                            _ => None, // R2
                        };
                        sink = Sink::Drop;
                    }
                    Sink::Exact => {
                        nodes[at].quantifier = match payload.parse::<u32>() {
                            Ok(k) if k >= 1 => Some(Quantifier::Exactly(k)),
                            _ => None, // R2
                        };
                        sink = Sink::Drop;
                    }
                    Sink::AltClass => {
                        if let Some(alt) = nodes[at].alts.last_mut() {
                            if alt.0.is_none() {
                                alt.0 = Some(payload.to_string());
                            }
                        }
                        sink = Sink::Drop;
                    }
                    Sink::AltProps => {
                        if let Some(alt) = nodes[at].alts.last_mut() {
                            alt.1.push(payload.to_string());
                        }
                    }
                    Sink::None | Sink::Drop => {} // stray payload dropped
                }
            }
        }
    }

    build_graph(nodes, edges)
}

/// Best-effort relation from repaired name tokens; malformed names fall back
/// to a placeholder spatial relation so that repair stays total.
fn resolve_relation(name: &[String]) -> (RelationSpec, bool) {
    if let Some((spec, bearing)) = relation_from_tokens(name) {
        return (spec, bearing);
    }
    match name.first() {
        Some(head)
            if !matches!(
                head.as_str(),
                "same" | "different" | "query_same" | "query_different"
            ) =>
        {
            (RelationSpec::Spatial(head.clone()), false)
        }
        _ => (RelationSpec::spatial("rel"), false),
    }
}

fn build_graph(
    raw_nodes: Vec<RawNode>,
    raw_edges: Vec<RawEdge>,
) -> Result<QuestionGraph, TokenError> {
    if raw_nodes.is_empty() {
        return Err(TokenError::Unrepairable("no nodes".to_string()));
    }
    let total = raw_nodes.len();
    let mut nodes: Vec<Node> = Vec::with_capacity(total);
    for (i, r) in raw_nodes.into_iter().enumerate() {
        let alts: Vec<RequirementBundle> = r
            .alts
            .into_iter()
            .filter_map(|(class, properties)| {
                class.map(|class| RequirementBundle { class, properties })
            })
            .collect();
        let mut node = if alts.is_empty() {
            let mut n = Node::regular(i, UNCONSTRAINED_CLASS);
            if let Some(class) = r.class {
                n.class = class;
            }
            n.base_properties = r.props;
            n.asserted_properties = r.asserted;
            n
        } else {
            Node::super_node(i, alts)
        };
        node.query_property = r.query;
        node.set_query = r.set_query;
        node.quantifier = r.quantifier.unwrap_or(Quantifier::Exists);
        if let Some((op, target, _)) = r.compare {
            if target < total && target != i {
                node.quantity_compare = Some(QuantityCompare {
                    other: NodeId(target),
                    op,
                });
            }
        }
        nodes.push(node);
    }
    let mut edges = Vec::with_capacity(raw_edges.len());
    for e in raw_edges {
        if e.target >= total || e.target == e.at {
            continue; // dangling reference dropped
        }
        let (from, to) = if e.forward {
            (NodeId(e.at), NodeId(e.target))
        } else {
            (NodeId(e.target), NodeId(e.at))
        };
        edges.push(Edge {
            from,
            to,
            relation: e.relation,
            answer_bearing: e.answer_bearing,
        });
    }
    Ok(QuestionGraph {
        nodes,
        edges,
        root: NodeId(0),
    })
}
