//! Dataset modification machinery: rendering question text for graphs,
//! synonym normalization, vocabulary replacement modes, question
//! enhancement (same->different, added quantifiers, elemental questions)
//! and emission of aligned (question, serialized graph) training pairs.
//!
//! Generated questions need not be meaningful; they must only map to the
//! right graph, with every visual concept appearing on both sides.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::answer::QuestionFamily;
use crate::clevr::{compile_program, sample_any};
use crate::graph::{
    AnswerSpec, CompareMode, CompareOp, NodeId, NodeKind, Quantifier, QuestionGraph, RelationSpec,
    TraversalStep,
};
use crate::tokens::serialize_graph;
use crate::vocab::{ConceptVocabulary, UNCONSTRAINED_CLASS};

/// Bumped whenever the question templates change; recorded in manifests so
/// emitted datasets stay attributable.
pub const TEMPLATE_VERSION: u32 = 1;

/// One aligned training example.
#[derive(Debug, Clone, PartialEq)]
pub struct QAPair {
    pub question: String,
    pub graph: QuestionGraph,
    pub family: QuestionFamily,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplacementModeName {
    None,
    Minimal,
    Extended,
    VgLike,
}

/// A replacement collection plus its sampling policy.
#[derive(Debug, Clone)]
pub struct ReplacementMode {
    pub name: ReplacementModeName,
    pub pools: ConceptVocabulary,
    pub prevalence_weighted: bool,
}

impl ReplacementMode {
    pub fn none() -> Self {
        ReplacementMode {
            name: ReplacementModeName::None,
            pools: ConceptVocabulary::clevr(),
            prevalence_weighted: false,
        }
    }

    /// Synthetic pool at the "minimal" scale (100 classes, 7 property
    /// types / 32 values, 82 relations).
    pub fn minimal() -> Self {
        ReplacementMode {
            name: ReplacementModeName::Minimal,
            pools: synthetic_pool(100, 7, 32, 82),
            prevalence_weighted: false,
        }
    }

    /// Synthetic pool at the "extended" scale (230 classes, 53 types / 200
    /// values, 160 relations).
    pub fn extended() -> Self {
        ReplacementMode {
            name: ReplacementModeName::Extended,
            pools: synthetic_pool(230, 53, 200, 160),
            prevalence_weighted: false,
        }
    }

    /// A large prevalence-weighted pool standing in for web-scale category
    /// collections (capped at a desk-friendly size).
    pub fn vg_like() -> Self {
        ReplacementMode {
            name: ReplacementModeName::VgLike,
            pools: synthetic_pool(1000, 53, 1060, 800),
            prevalence_weighted: true,
        }
    }

    pub fn by_name(name: ReplacementModeName) -> Self {
        match name {
            ReplacementModeName::None => Self::none(),
            ReplacementModeName::Minimal => Self::minimal(),
            ReplacementModeName::Extended => Self::extended(),
            ReplacementModeName::VgLike => Self::vg_like(),
        }
    }
}

/// Deterministic synthetic concept pool.
pub fn synthetic_pool(
    classes: usize,
    types: usize,
    values: usize,
    relations: usize,
) -> ConceptVocabulary {
    let class_names = (0..classes).map(|i| format!("class_{i:03}"));
    let mut property_types = BTreeMap::new();
    for t in 0..types {
        let per = values / types + usize::from(t < values % types);
        let vals: BTreeSet<String> = (0..per).map(|v| format!("val_{t:02}_{v:03}")).collect();
        if !vals.is_empty() {
            property_types.insert(format!("ptype_{t:02}"), vals);
        }
    }
    let relation_names = (0..relations).map(|i| format!("rel_{i:03}"));
    ConceptVocabulary::new(
        class_names,
        property_types,
        relation_names,
        BTreeMap::new(),
        BTreeMap::new(),
    )
    .expect("synthetic pool is well formed")
}

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error("replacement pool exhausted for {0}")]
    PoolExhausted(String),
    #[error("graph cannot be serialized: {0}")]
    Serialize(#[from] crate::tokens::TokenError),
    #[error("i/o failed: {0}")]
    Io(#[from] std::io::Error),
}

// ---------------------------------------------------------------------------
// Question text rendering
// ---------------------------------------------------------------------------

fn space_form(concept: &str) -> String {
    concept.replace('_', " ")
}

fn number_word(n: u32) -> String {
    const WORDS: [&str; 21] = [
        "zero",
        "one",
        "two",
        "three",
        "four",
        "five",
        "six",
        "seven",
        "eight",
        "nine",
        "ten",
        "eleven",
        "twelve",
        "thirteen",
        "fourteen",
        "fifteen",
        "sixteen",
        "seventeen",
        "eighteen",
        "nineteen",
        "twenty",
    ];
    WORDS
        .get(n as usize)
        .map(|w| w.to_string())
        .unwrap_or_else(|| n.to_string())
}

fn relation_phrase(spec: &RelationSpec) -> String {
    crate::engine::elaborate::relation_text(spec)
}

/// Noun phrase for one node; quantifiers pluralize.
fn noun_phrase(graph: &QuestionGraph, node: NodeId, definite: bool) -> String {
    let n = graph.node(node);
    let bundle = |class: &str, props: &[String]| -> String {
        let mut words: Vec<String> = props.iter().map(|p| space_form(p)).collect();
        words.push(space_form(class));
        words.join(" ")
    };
    match &n.kind {
        NodeKind::SuperNode(alts) => {
            let parts: Vec<String> = alts
                .iter()
                .map(|a| format!("a {}", bundle(&a.class, &a.properties)))
                .collect();
            parts.join(" or ")
        }
        NodeKind::Regular => match n.quantifier {
            Quantifier::All => format!(
                "all the {}",
                bundle(
                    &crate::engine::elaborate::pluralize(&n.class),
                    &n.base_properties
                )
            ),
            Quantifier::Exactly(k) => format!(
                "the {} {}",
                number_word(k),
                bundle(
                    &crate::engine::elaborate::pluralize(&n.class),
                    &n.base_properties
                )
            ),
            Quantifier::Exists => {
                let det = if definite { "the" } else { "a" };
                format!("{det} {}", bundle(&n.class, &n.base_properties))
            }
        },
    }
}

/// Recursive description following the serialization traversal: each edge
/// becomes "that is <relation> <neighbor phrase>".
fn describe(graph: &QuestionGraph, steps: &[TraversalStep], at: NodeId, definite: bool) -> String {
    let mut text = noun_phrase(graph, at, definite);
    let mut depth = 0usize;
    let mut index = steps
        .iter()
        .position(|s| *s == TraversalStep::Visit(at))
        .map(|i| i + 1)
        .unwrap_or(steps.len());
    while index < steps.len() {
        match &steps[index] {
            TraversalStep::Visit(_) => {}
            TraversalStep::CompareDescend { .. } | TraversalStep::Descend { .. } if depth > 0 => {}
            TraversalStep::Descend { edge, at: from }
            | TraversalStep::BackRef { edge, at: from }
                if depth == 0 && *from == at =>
            {
                let e = &graph.edges[*edge];
                if !e.answer_bearing {
                    let other = e.other(at);
                    let phrase = match &steps[index] {
                        TraversalStep::Descend { .. } => describe(graph, steps, other, false),
                        _ => noun_phrase(graph, other, true),
                    };
                    if e.to == at {
                        text = format!("{text} that is {} {phrase}", relation_phrase(&e.relation));
                    } else {
                        text = format!(
                            "{text} such that {phrase} is {} it",
                            relation_phrase(&e.relation)
                        );
                    }
                }
            }
            _ => {}
        }
        match &steps[index] {
            TraversalStep::Descend { .. } | TraversalStep::CompareDescend { .. } => depth += 1,
            TraversalStep::Ascend | TraversalStep::CompareAscend => {
                if depth == 0 {
                    break;
                }
                depth -= 1;
            }
            _ => {}
        }
        index += 1;
    }
    text
}

/// Deterministic template realization of a question graph. Text and graph
/// share exactly the same visual concepts.
pub fn render_question(graph: &QuestionGraph) -> String {
    let steps = graph.traversal().steps;
    let root = graph.root;
    let root_node = graph.node(root);
    let asserted: Vec<String> = root_node
        .asserted_properties
        .iter()
        .map(|p| space_form(p))
        .collect();
    match graph.answer_spec() {
        AnswerSpec::QueryProperty { node } => {
            let f = root_node
                .query_property
                .clone()
                .unwrap_or_else(|| "type".to_string());
            let subject = describe(graph, &steps, node, true);
            format!("what is the {} of {subject}?", space_form(&f))
        }
        AnswerSpec::SetProperty { node } => {
            format!(
                "how many {} are there?",
                counted_phrase(graph, &steps, node)
            )
        }
        AnswerSpec::QuantityCompare { node } => {
            let qc = graph.node(node).quantity_compare.expect("compare set");
            let a = counted_phrase(graph, &steps, node);
            let b = counted_phrase(graph, &steps, qc.other);
            match qc.op {
                CompareOp::Same => {
                    format!("are there the same number of {a} as {b}?")
                }
                CompareOp::Greater => format!("are there more {a} than {b}?"),
                CompareOp::Fewer => format!("are there fewer {a} than {b}?"),
            }
        }
        AnswerSpec::CompareEdge { edge } => {
            let e = &graph.edges[edge];
            let a = describe(graph, &steps, e.from, true);
            let b = describe(graph, &steps, e.to, true);
            let (word, ptype) = match &e.relation {
                RelationSpec::PropertyCompare {
                    property_type,
                    mode,
                } => (
                    match mode {
                        CompareMode::Same => "the same",
                        CompareMode::Different => "a different",
                    },
                    space_form(property_type),
                ),
                _ => ("the same", "type".to_string()),
            };
            format!("is {a} of {word} {ptype} as {b}?")
        }
        AnswerSpec::Existence => {
            if root_node.quantifier != Quantifier::Exists && !asserted.is_empty() {
                let subject = describe(graph, &steps, root, true);
                format!("are {subject} {}?", asserted.join(" "))
            } else if !asserted.is_empty() {
                let subject = describe(graph, &steps, root, true);
                format!("is {subject} {}?", asserted.join(" "))
            } else {
                let subject = describe(graph, &steps, root, false);
                format!("is there {subject}?")
            }
        }
    }
}

/// "small objects that are left of the sphere": pluralized head noun plus
/// the node's relational suffix, for counting contexts.
fn counted_phrase(graph: &QuestionGraph, steps: &[TraversalStep], node: NodeId) -> String {
    let n = graph.node(node);
    let head = match &n.kind {
        NodeKind::Regular => {
            let mut words: Vec<String> = n.base_properties.iter().map(|p| space_form(p)).collect();
            words.push(space_form(&crate::engine::elaborate::pluralize(&n.class)));
            words.join(" ")
        }
        NodeKind::SuperNode(_) => {
            format!("objects that are {}", noun_phrase(graph, node, false))
        }
    };
    let full = describe(graph, steps, node, false);
    let prefix = noun_phrase(graph, node, false);
    let suffix = full.strip_prefix(&prefix).unwrap_or("");
    format!("{head}{suffix}")
}

fn pluralize_phrase(phrase: &str) -> String {
    match phrase.rsplit_once(' ') {
        Some((head, last)) => format!("{head} {}", crate::engine::elaborate::pluralize(last)),
        None => crate::engine::elaborate::pluralize(phrase),
    }
}

// ---------------------------------------------------------------------------
// Synonym normalization and concept correspondence
// ---------------------------------------------------------------------------

/// Replace every synonym in the question text by its canonical form and
/// canonicalize graph concepts. Idempotent (canonical forms are never
/// themselves synonym keys).
pub fn normalize_synonyms(pair: &QAPair, vocab: &ConceptVocabulary) -> QAPair {
    let question = pair
        .question
        .split(' ')
        .map(|word| {
            let trimmed = word.trim_end_matches(['?', '.', ',', ';']);
            let canonical = vocab.canonical(trimmed);
            if canonical != trimmed {
                word.replacen(trimmed, canonical, 1)
            } else {
                word.to_string()
            }
        })
        .collect::<Vec<_>>()
        .join(" ");
    let mut graph = pair.graph.clone();
    for node in &mut graph.nodes {
        node.class = vocab.canonical(&node.class).to_string();
        for p in node
            .base_properties
            .iter_mut()
            .chain(node.asserted_properties.iter_mut())
        {
            *p = vocab.canonical(p).to_string();
        }
        if let NodeKind::SuperNode(alts) = &mut node.kind {
            for alt in alts {
                alt.class = vocab.canonical(&alt.class).to_string();
                for p in &mut alt.properties {
                    *p = vocab.canonical(p).to_string();
                }
            }
        }
    }
    for edge in &mut graph.edges {
        if let RelationSpec::Spatial(name) | RelationSpec::Superlative(name) = &mut edge.relation {
            *name = vocab.canonical(name).to_string();
        }
    }
    QAPair {
        question,
        graph,
        family: pair.family,
    }
}

/// All visual concepts of a graph (class != object, property values,
/// relation names, compared/queried property types).
pub fn graph_concepts(graph: &QuestionGraph) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for node in &graph.nodes {
        if node.class != UNCONSTRAINED_CLASS {
            out.insert(node.class.clone());
        }
        for p in node.base_properties.iter().chain(&node.asserted_properties) {
            out.insert(p.clone());
        }
        if let NodeKind::SuperNode(alts) = &node.kind {
            for alt in alts {
                if alt.class != UNCONSTRAINED_CLASS {
                    out.insert(alt.class.clone());
                }
                out.extend(alt.properties.iter().cloned());
            }
        }
        if let Some(f) = &node.query_property {
            if f != crate::vocab::CLASS_QUERY {
                out.insert(f.clone());
            }
        }
    }
    for edge in &graph.edges {
        match &edge.relation {
            RelationSpec::Spatial(name) | RelationSpec::Superlative(name) => {
                out.insert(name.clone());
            }
            RelationSpec::PropertyCompare { property_type, .. } => {
                out.insert(property_type.clone());
            }
        }
    }
    out
}

/// Check the text/graph concept correspondence: every graph concept appears
/// in the text (space form), and no other vocabulary concept does.
pub fn concepts_correspond(pair: &QAPair, vocab: &ConceptVocabulary) -> bool {
    let mut text = format!(" {} ", pair.question.trim_end_matches('?'));
    let mut graph_terms: Vec<String> = graph_concepts(&pair.graph)
        .into_iter()
        .map(|c| space_form(&c))
        .collect();
    graph_terms.sort_by_key(|t| std::cmp::Reverse(t.len()));
    for term in &graph_terms {
        // Quantified and counted noun phrases pluralize the head word.
        let padded = format!(" {term} ");
        let plural = format!(" {} ", pluralize_phrase(term));
        if !text.contains(&padded) && !text.contains(&plural) {
            return false;
        }
        for form in [padded, plural] {
            while let Some(i) = text.find(&form) {
                text.replace_range(i..i + form.len() - 1, " ");
            }
        }
    }
    // Remaining words must not be vocabulary concepts.
    for word in text.split_whitespace() {
        if vocab.is_class(word) || vocab.type_of_value(word).is_some() || vocab.is_relation(word) {
            return false;
        }
    }
    true
}

// ---------------------------------------------------------------------------
// Vocabulary replacement
// ---------------------------------------------------------------------------

/// Apply a consistent, kind-preserving concept substitution to both the
/// text and the graph. The output graph is structurally identical to the
/// input up to concept renaming; the map is one-to-one within the pair.
pub fn replace_vocabulary(
    pair: &QAPair,
    mode: &ReplacementMode,
    base_vocab: &ConceptVocabulary,
    seed: u64,
) -> Result<QAPair, DatagenError> {
    if mode.name == ReplacementModeName::None {
        return Ok(pair.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let graph = &pair.graph;

    // Gather the pair's concepts by kind, in deterministic order.
    let mut classes: Vec<String> = Vec::new();
    let mut values: Vec<String> = Vec::new();
    let mut relations: Vec<String> = Vec::new();
    let mut types: Vec<String> = Vec::new();
    let push_unique = |list: &mut Vec<String>, item: &str| {
        if !list.iter().any(|x| x == item) {
            list.push(item.to_string());
        }
    };
    for node in &graph.nodes {
        if node.class != UNCONSTRAINED_CLASS {
            push_unique(&mut classes, &node.class);
        }
        for p in node.base_properties.iter().chain(&node.asserted_properties) {
            push_unique(&mut values, p);
        }
        if let NodeKind::SuperNode(alts) = &node.kind {
            for alt in alts {
                if alt.class != UNCONSTRAINED_CLASS {
                    push_unique(&mut classes, &alt.class);
                }
                for p in &alt.properties {
                    push_unique(&mut values, p);
                }
            }
        }
        if let Some(f) = &node.query_property {
            if f != crate::vocab::CLASS_QUERY {
                push_unique(&mut types, f);
            }
        }
    }
    for edge in &graph.edges {
        match &edge.relation {
            RelationSpec::Spatial(name) | RelationSpec::Superlative(name) => {
                push_unique(&mut relations, name);
            }
            RelationSpec::PropertyCompare { property_type, .. } => {
                push_unique(&mut types, property_type);
            }
        }
    }
    for v in &values {
        if let Some(t) = base_vocab.type_of_value(v) {
            push_unique(&mut types, t);
        }
    }

    // Kind-preserving injective maps: types first (values follow their
    // type's image).
    let pool_types: Vec<String> = mode.pools.property_types().map(str::to_string).collect();
    let type_map = sample_map(&types, &pool_types, mode.prevalence_weighted, &mut rng)
        .ok_or_else(|| DatagenError::PoolExhausted("property types".to_string()))?;
    let mut value_map: BTreeMap<String, String> = BTreeMap::new();
    let mut used_values: BTreeSet<String> = BTreeSet::new();
    for v in &values {
        let target_type = base_vocab
            .type_of_value(v)
            .and_then(|t| type_map.get(t).cloned());
        let pool: Vec<String> = match &target_type {
            Some(t) => mode
                .pools
                .values_of(t)
                .map(|set| set.iter().cloned().collect())
                .unwrap_or_default(),
            // Untyped source value: draw from the whole pool.
            None => pool_types
                .iter()
                .flat_map(|t| mode.pools.values_of(t).into_iter().flatten().cloned())
                .collect(),
        };
        let available: Vec<String> = pool
            .into_iter()
            .filter(|candidate| !used_values.contains(candidate))
            .collect();
        if available.is_empty() {
            return Err(DatagenError::PoolExhausted(format!("values for '{v}'")));
        }
        let chosen = weighted_pick(&available, mode.prevalence_weighted, &mut rng);
        used_values.insert(chosen.clone());
        value_map.insert(v.clone(), chosen);
    }
    let pool_classes: Vec<String> = mode.pools.classes().iter().cloned().collect();
    let class_map = sample_map(&classes, &pool_classes, mode.prevalence_weighted, &mut rng)
        .ok_or_else(|| DatagenError::PoolExhausted("classes".to_string()))?;
    let pool_relations: Vec<String> = mode.pools.relations().iter().cloned().collect();
    let relation_map = sample_map(
        &relations,
        &pool_relations,
        mode.prevalence_weighted,
        &mut rng,
    )
    .ok_or_else(|| DatagenError::PoolExhausted("relations".to_string()))?;

    // Apply to the graph.
    let mut out = graph.clone();
    for node in &mut out.nodes {
        if let Some(new) = class_map.get(&node.class) {
            node.class = new.clone();
        }
        for p in node
            .base_properties
            .iter_mut()
            .chain(node.asserted_properties.iter_mut())
        {
            if let Some(new) = value_map.get(p) {
                *p = new.clone();
            }
        }
        if let NodeKind::SuperNode(alts) = &mut node.kind {
            for alt in alts {
                if let Some(new) = class_map.get(&alt.class) {
                    alt.class = new.clone();
                }
                for p in &mut alt.properties {
                    if let Some(new) = value_map.get(p) {
                        *p = new.clone();
                    }
                }
            }
        }
        if let Some(f) = &mut node.query_property {
            if let Some(new) = type_map.get(f) {
                *f = new.clone();
            }
        }
    }
    for edge in &mut out.edges {
        match &mut edge.relation {
            RelationSpec::Spatial(name) | RelationSpec::Superlative(name) => {
                if let Some(new) = relation_map.get(name) {
                    *name = new.clone();
                }
            }
            RelationSpec::PropertyCompare { property_type, .. } => {
                if let Some(new) = type_map.get(property_type) {
                    *property_type = new.clone();
                }
            }
        }
    }

    // Apply to the text: longest concepts first to avoid partial overlaps.
    let mut substitutions: Vec<(String, String)> = Vec::new();
    for (old, new) in class_map
        .iter()
        .chain(&value_map)
        .chain(&relation_map)
        .chain(&type_map)
    {
        substitutions.push((space_form(old), space_form(new)));
        // Quantified/counted phrases render the head noun in the plural.
        substitutions.push((
            pluralize_phrase(&space_form(old)),
            pluralize_phrase(&space_form(new)),
        ));
    }
    substitutions.sort_by_key(|(old, _)| std::cmp::Reverse(old.len()));
    let mut question = format!(" {}", pair.question);
    let ends_question_mark = question.ends_with('?');
    if ends_question_mark {
        question.pop();
        question.push(' ');
    }
    for (old, new) in &substitutions {
        question = question.replace(&format!(" {old} "), &format!(" {new} "));
    }
    let mut question = question.trim().to_string();
    if ends_question_mark {
        question.push('?');
    }

    Ok(QAPair {
        question,
        graph: out,
        family: pair.family,
    })
}

/// Injective map from `from` concepts into `pool`.
fn sample_map(
    from: &[String],
    pool: &[String],
    weighted: bool,
    rng: &mut ChaCha8Rng,
) -> Option<BTreeMap<String, String>> {
    if from.len() > pool.len() {
        return None;
    }
    let mut used: BTreeSet<usize> = BTreeSet::new();
    let mut map = BTreeMap::new();
    for concept in from {
        let available: Vec<usize> = (0..pool.len()).filter(|i| !used.contains(i)).collect();
        let pick = if weighted {
            weighted_index(available.len(), rng)
        } else {
            rng.gen_range(0..available.len())
        };
        let idx = available[pick];
        used.insert(idx);
        map.insert(concept.clone(), pool[idx].clone());
    }
    Some(map)
}

fn weighted_pick(pool: &[String], weighted: bool, rng: &mut ChaCha8Rng) -> String {
    if weighted {
        pool[weighted_index(pool.len(), rng)].clone()
    } else {
        pool[rng.gen_range(0..pool.len())].clone()
    }
}

/// Power-law index over a ranked list: weight of rank r is 1/(r+1).
fn weighted_index(len: usize, rng: &mut ChaCha8Rng) -> usize {
    debug_assert!(len > 0);
    let total: f64 = (0..len).map(|r| 1.0 / (r as f64 + 1.0)).sum();
    let mut draw = rng.gen::<f64>() * total;
    for r in 0..len {
        draw -= 1.0 / (r as f64 + 1.0);
        if draw <= 0.0 {
            return r;
        }
    }
    len - 1
}

/// Structural isomorphism up to concept names: same node/edge shape, field
/// kinds, quantifiers and compare links.
pub fn same_structure(a: &QuestionGraph, b: &QuestionGraph) -> bool {
    if a.nodes.len() != b.nodes.len() || a.edges.len() != b.edges.len() || a.root != b.root {
        return false;
    }
    for (na, nb) in a.nodes.iter().zip(&b.nodes) {
        let kinds_match = match (&na.kind, &nb.kind) {
            (NodeKind::Regular, NodeKind::Regular) => true,
            (NodeKind::SuperNode(x), NodeKind::SuperNode(y)) => {
                x.len() == y.len()
                    && x.iter()
                        .zip(y)
                        .all(|(p, q)| p.properties.len() == q.properties.len())
            }
            _ => false,
        };
        if !kinds_match
            || na.quantifier != nb.quantifier
            || na.base_properties.len() != nb.base_properties.len()
            || na.asserted_properties.len() != nb.asserted_properties.len()
            || na.query_property.is_some() != nb.query_property.is_some()
            || na.set_query != nb.set_query
            || na.quantity_compare != nb.quantity_compare
        {
            return false;
        }
    }
    for (ea, eb) in a.edges.iter().zip(&b.edges) {
        let kind = |r: &RelationSpec| match r {
            RelationSpec::Spatial(_) => 0,
            RelationSpec::PropertyCompare {
                mode: CompareMode::Same,
                ..
            } => 1,
            RelationSpec::PropertyCompare {
                mode: CompareMode::Different,
                ..
            } => 2,
            RelationSpec::Superlative(_) => 3,
        };
        if ea.from != eb.from
            || ea.to != eb.to
            || ea.answer_bearing != eb.answer_bearing
            || kind(&ea.relation) != kind(&eb.relation)
        {
            return false;
        }
    }
    true
}

// ---------------------------------------------------------------------------
// Base pair generation and enhancement
// ---------------------------------------------------------------------------

/// Sample base (question, graph) pairs from the program sampler.
pub fn generate_base_pairs(vocab: &ConceptVocabulary, count: usize, seed: u64) -> Vec<QAPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let program = sample_any(&mut rng, vocab);
        let Ok(graph) = compile_program(&program, vocab) else {
            continue;
        };
        let pair = QAPair {
            question: render_question(&graph),
            family: QuestionFamily::classify(&graph),
            graph,
        };
        out.push(normalize_synonyms(&pair, vocab));
    }
    out
}

/// Per-pair sub-seed so every pair is reproducible on its own.
fn sub_seed(seed: u64, index: usize) -> u64 {
    let mut h: u64 = 0x9e3779b97f4a7c15 ^ seed;
    h ^= index as u64;
    h = h.wrapping_mul(0xbf58476d1ce4e5b9);
    h ^= h >> 31;
    h
}

/// Enhancement: same->different variants, quantifier variants, and
/// template-generated elemental questions, emitted on top of the input so
/// that the result is exactly twice the base size.
pub fn enhance_questions(pairs: &[QAPair], vocab: &ConceptVocabulary, seed: u64) -> Vec<QAPair> {
    let mut out: Vec<QAPair> = pairs.to_vec();
    let mut added = 0usize;
    for (i, pair) in pairs.iter().enumerate() {
        if added >= pairs.len() {
            break;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, i));
        if let Some(variant) = same_to_different(pair) {
            out.push(variant);
            added += 1;
            continue;
        }
        if let Some(variant) = add_quantifier(pair, &mut rng) {
            out.push(variant);
            added += 1;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, pairs.len()));
    while added < pairs.len() {
        out.push(elemental_question(vocab, &mut rng));
        added += 1;
    }
    out
}

/// Flip every non-answer-bearing "same <p>" comparison to "different <p>".
fn same_to_different(pair: &QAPair) -> Option<QAPair> {
    let mut graph = pair.graph.clone();
    let mut flipped = false;
    for edge in &mut graph.edges {
        if edge.answer_bearing {
            continue;
        }
        if let RelationSpec::PropertyCompare { mode, .. } = &mut edge.relation {
            if *mode == CompareMode::Same {
                *mode = CompareMode::Different;
                flipped = true;
            }
        }
    }
    if !flipped {
        return None;
    }
    Some(QAPair {
        question: render_question(&graph),
        family: pair.family,
        graph,
    })
}

/// Attach an "all"/number quantifier to the first eligible node. On a root
/// existence node the base properties become asserted ("are all the boats
/// white"); elsewhere the base set keeps its restriction ("all the light
/// blue girls").
fn add_quantifier(pair: &QAPair, rng: &mut ChaCha8Rng) -> Option<QAPair> {
    let graph = &pair.graph;
    let is_exist = matches!(graph.answer_spec(), AnswerSpec::Existence);
    let eligible = |id: NodeId| -> bool {
        let n = graph.node(id);
        n.quantifier == Quantifier::Exists
            && matches!(n.kind, NodeKind::Regular)
            && n.query_property.is_none()
            && n.set_query.is_none()
            && n.quantity_compare.is_none()
            && n.class != UNCONSTRAINED_CLASS
            && graph
                .nodes
                .iter()
                .all(|m| m.quantity_compare.map_or(true, |qc| qc.other != id))
            && graph
                .edges_at(id)
                .all(|(_, e)| graph.node(e.other(id)).quantifier == Quantifier::Exists)
    };
    let target =
        if is_exist && eligible(graph.root) && !graph.node(graph.root).base_properties.is_empty() {
            graph.root
        } else {
            graph
                .nodes
                .iter()
                .map(|n| n.id)
                .find(|id| *id != graph.root && eligible(*id))?
        };
    let mut out = graph.clone();
    let quantifier = if rng.gen_bool(0.5) {
        Quantifier::All
    } else {
        Quantifier::Exactly(rng.gen_range(2..=4))
    };
    out.nodes[target.0].quantifier = quantifier;
    if target == graph.root && is_exist {
        let props = std::mem::take(&mut out.nodes[target.0].base_properties);
        out.nodes[target.0].asserted_properties = props;
    }
    Some(QAPair {
        question: render_question(&out),
        family: pair.family,
        graph: out,
    })
}

/// One template-generated elemental question: existence and count over a
/// class (optionally with one or two properties or a quantifier), two
/// classes in a relation, a class query within a relation, or a property
/// query.
fn elemental_question(vocab: &ConceptVocabulary, rng: &mut ChaCha8Rng) -> QAPair {
    use crate::graph::{Edge, Node};
    let classes: Vec<&String> = vocab.classes().iter().collect();
    let types: Vec<String> = vocab.property_types().map(str::to_string).collect();
    let relations: Vec<&String> = vocab.relations().iter().collect();
    let pick_class = |rng: &mut ChaCha8Rng| classes[rng.gen_range(0..classes.len())].clone();
    let pick_value = |rng: &mut ChaCha8Rng| -> Option<String> {
        if types.is_empty() {
            return None;
        }
        let t = &types[rng.gen_range(0..types.len())];
        let values: Vec<&String> = vocab.values_of(t)?.iter().collect();
        if values.is_empty() {
            None
        } else {
            Some(values[rng.gen_range(0..values.len())].clone())
        }
    };

    let template = rng.gen_range(0..8);
    let graph = match template {
        // existence / count for class (+ 0..2 properties)
        0 | 1 | 2 | 3 => {
            let mut node = Node::regular(0, &pick_class(rng));
            let n_props = rng.gen_range(0..=2usize);
            let mut props = Vec::new();
            for _ in 0..n_props {
                if let Some(v) = pick_value(rng) {
                    if !props.contains(&v) {
                        props.push(v);
                    }
                }
            }
            node.base_properties = props;
            if template >= 2 {
                node = node.with_count();
            }
            QuestionGraph::single(node)
        }
        // two objects and a relation (existence or count)
        4 | 5 => {
            let a = Node::regular(0, &pick_class(rng));
            let b = Node::regular(1, &pick_class(rng));
            let rel = relations
                .get(rng.gen_range(0..relations.len().max(1)))
                .map(|r| (*r).clone())
                .unwrap_or_else(|| "left".to_string());
            let mut nodes = vec![a, b];
            if template == 5 {
                nodes[0] = nodes[0].clone().with_count();
            }
            QuestionGraph::new(
                nodes,
                vec![Edge::new(NodeId(1), NodeId(0), RelationSpec::spatial(&rel))],
                0,
            )
        }
        // class query within a relation: "what is the type of the object
        // left of the X?"
        6 => {
            let answer = Node::regular(0, UNCONSTRAINED_CLASS).with_query("type");
            let reference = Node::regular(1, &pick_class(rng));
            let rel = relations
                .get(rng.gen_range(0..relations.len().max(1)))
                .map(|r| (*r).clone())
                .unwrap_or_else(|| "left".to_string());
            QuestionGraph::new(
                vec![answer, reference],
                vec![Edge::new(NodeId(1), NodeId(0), RelationSpec::spatial(&rel))],
                0,
            )
        }
        // property query, possibly with an "all + asserted" twist
        _ => {
            if rng.gen_bool(0.4) {
                let mut node = Node::regular(0, &pick_class(rng)).with_quantifier(Quantifier::All);
                if let Some(v) = pick_value(rng) {
                    node.asserted_properties = vec![v];
                }
                QuestionGraph::single(node)
            } else {
                let t = if types.is_empty() {
                    "type".to_string()
                } else {
                    types[rng.gen_range(0..types.len())].clone()
                };
                QuestionGraph::single(Node::regular(0, &pick_class(rng)).with_query(&t))
            }
        }
    };
    QAPair {
        question: render_question(&graph),
        family: QuestionFamily::Elemental,
        graph,
    }
}

// ---------------------------------------------------------------------------
// Emission
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
pub struct PairManifest {
    pub mode: ReplacementModeName,
    pub seed: u64,
    pub base_count: usize,
    pub total_count: usize,
    pub enhanced: bool,
    pub template_version: u32,
}

/// Write aligned line files: question tokens, serialized graph tokens, the
/// shared token vocabulary, and a manifest.
pub fn emit_training_pairs(
    pairs: &[QAPair],
    dir: &Path,
    manifest: &PairManifest,
) -> Result<(), DatagenError> {
    std::fs::create_dir_all(dir)?;
    let mut questions = String::new();
    let mut graphs = String::new();
    let mut tokens: BTreeSet<String> = BTreeSet::new();
    for pair in pairs {
        let question_line = pair.question.trim_end_matches('?').to_string();
        for word in question_line.split_whitespace() {
            tokens.insert(word.to_string());
        }
        questions.push_str(&question_line);
        questions.push('\n');
        let serialized = serialize_graph(&pair.graph)?;
        for t in serialized.tokens() {
            tokens.insert(t.clone());
        }
        graphs.push_str(&serialized.to_string());
        graphs.push('\n');
    }
    std::fs::write(dir.join("questions.txt"), questions)?;
    std::fs::write(dir.join("graphs.txt"), graphs)?;
    let mut vocab_text = String::new();
    for t in &tokens {
        vocab_text.push_str(t);
        vocab_text.push('\n');
    }
    std::fs::write(dir.join("vocab.txt"), vocab_text)?;
    std::fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(manifest).expect("manifest serializes"),
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_pairs(n: usize) -> Vec<QAPair> {
        generate_base_pairs(&ConceptVocabulary::clevr(), n, 7)
    }

    #[test]
    fn rendered_questions_correspond_to_graphs() {
        let vocab = ConceptVocabulary::clevr();
        for pair in base_pairs(200) {
            assert!(
                concepts_correspond(&pair, &vocab),
                "question: {}\ngraph: {:?}",
                pair.question,
                pair.graph
            );
        }
    }

    #[test]
    fn synonym_normalization_is_idempotent() {
        let vocab = ConceptVocabulary::clevr();
        let pair = QAPair {
            question: "is there a big metallic ball?".to_string(),
            graph: QuestionGraph::single(
                crate::graph::Node::regular(0, "ball").with_properties(&["big", "metallic"]),
            ),
            family: QuestionFamily::Exist,
        };
        let once = normalize_synonyms(&pair, &vocab);
        assert_eq!(once.question, "is there a large metal sphere?");
        assert_eq!(once.graph.nodes[0].class, "sphere");
        let twice = normalize_synonyms(&once, &vocab);
        assert_eq!(once, twice);
    }

    #[test]
    fn replacement_preserves_structure_and_consistency() {
        let vocab = ConceptVocabulary::clevr();
        let mode = ReplacementMode::minimal();
        for (i, pair) in base_pairs(100).into_iter().enumerate() {
            let replaced = replace_vocabulary(&pair, &mode, &vocab, i as u64).unwrap();
            assert!(
                same_structure(&pair.graph, &replaced.graph),
                "structure change at {i}:\n{:?}\n{:?}",
                pair.graph,
                replaced.graph
            );
            assert!(
                concepts_correspond(&replaced, &mode.pools),
                "correspondence at {i}: {}",
                replaced.question
            );
        }
    }

    #[test]
    fn replacement_is_deterministic_per_seed() {
        let vocab = ConceptVocabulary::clevr();
        let mode = ReplacementMode::extended();
        let pair = &base_pairs(1)[0];
        let a = replace_vocabulary(pair, &mode, &vocab, 5).unwrap();
        let b = replace_vocabulary(pair, &mode, &vocab, 5).unwrap();
        assert_eq!(a, b);
        let c = replace_vocabulary(pair, &mode, &vocab, 6).unwrap();
        assert!(a.question != c.question || a.graph != c.graph);
    }

    #[test]
    fn none_mode_is_identity() {
        let vocab = ConceptVocabulary::clevr();
        let pair = &base_pairs(1)[0];
        let out = replace_vocabulary(pair, &ReplacementMode::none(), &vocab, 3).unwrap();
        assert_eq!(*pair, out);
    }

    #[test]
    fn enhancement_doubles_the_set() {
        let vocab = ConceptVocabulary::clevr();
        let base = base_pairs(120);
        let enhanced = enhance_questions(&base, &vocab, 11);
        assert_eq!(enhanced.len(), 2 * base.len());
        for pair in &enhanced {
            let report = crate::graph::validate_graph(&pair.graph, &vocab);
            assert!(!report.has_errors(), "{report:?}\n{:?}", pair.graph);
        }
    }

    #[test]
    fn same_flip_produces_different_variant() {
        let vocab = ConceptVocabulary::clevr();
        let pair = QAPair {
            question: String::new(),
            graph: {
                use crate::graph::{Edge, Node};
                let a = Node::regular(0, UNCONSTRAINED_CLASS).with_count();
                let b = Node::regular(1, "cube");
                QuestionGraph::new(
                    vec![a, b],
                    vec![Edge::new(
                        NodeId(1),
                        NodeId(0),
                        RelationSpec::compare("color", CompareMode::Same),
                    )],
                    0,
                )
            },
            family: QuestionFamily::Count,
        };
        let enhanced = enhance_questions(&[pair], &vocab, 0);
        assert_eq!(enhanced.len(), 2);
        match &enhanced[1].graph.edges[0].relation {
            RelationSpec::PropertyCompare { mode, .. } => {
                assert_eq!(*mode, CompareMode::Different)
            }
            other => panic!("unexpected relation {other:?}"),
        }
        assert!(enhanced[1].question.contains("different color"));
    }

    #[test]
    fn emitted_files_are_aligned_and_round_trip() {
        let vocab = ConceptVocabulary::clevr();
        let pairs = base_pairs(50);
        let dir = tempfile::tempdir().unwrap();
        let manifest = PairManifest {
            mode: ReplacementModeName::None,
            seed: 7,
            base_count: 50,
            total_count: 50,
            enhanced: false,
            template_version: TEMPLATE_VERSION,
        };
        emit_training_pairs(&pairs, dir.path(), &manifest).unwrap();
        let questions = std::fs::read_to_string(dir.path().join("questions.txt")).unwrap();
        let graphs = std::fs::read_to_string(dir.path().join("graphs.txt")).unwrap();
        let vocab_file = std::fs::read_to_string(dir.path().join("vocab.txt")).unwrap();
        let q_lines: Vec<&str> = questions.lines().collect();
        let g_lines: Vec<&str> = graphs.lines().collect();
        assert_eq!(q_lines.len(), 50);
        assert_eq!(g_lines.len(), 50);
        let tokens: BTreeSet<&str> = vocab_file.lines().collect();
        for (line, pair) in g_lines.iter().zip(&pairs) {
            let seq: crate::tokens::TokenSequence = line.parse().unwrap();
            let graph = crate::tokens::deserialize_tokens(&seq).unwrap();
            assert_eq!(graph, pair.graph.canonicalize());
            for t in seq.tokens() {
                assert!(tokens.contains(t.as_str()), "missing token {t}");
            }
        }
        for line in q_lines {
            for word in line.split_whitespace() {
                assert!(tokens.contains(word), "missing word {word}");
            }
        }
        let _ = vocab;
    }

    #[test]
    fn empty_emission_writes_empty_files() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = PairManifest {
            mode: ReplacementModeName::None,
            seed: 0,
            base_count: 0,
            total_count: 0,
            enhanced: false,
            template_version: TEMPLATE_VERSION,
        };
        emit_training_pairs(&[], dir.path(), &manifest).unwrap();
        assert_eq!(
            std::fs::read_to_string(dir.path().join("questions.txt")).unwrap(),
            ""
        );
        assert_eq!(
            std::fs::read_to_string(dir.path().join("graphs.txt")).unwrap(),
            ""
        );
    }
}
