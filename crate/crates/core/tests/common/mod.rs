//! Shared test support: a random generator over the full space of valid
//! question graphs (supernodes, quantifiers, compare links, cycles,
//! out-of-vocabulary concepts) and a token-level fuzzer.
//!
//! Each integration test binary compiles this module separately and uses a
//! different subset of it.
#![allow(dead_code)]

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use uncord_core::graph::{
    CompareMode, CompareOp, Edge, Node, NodeId, Quantifier, QuantityCompare, QuestionGraph,
    RelationSpec, RequirementBundle,
};
use uncord_core::tokens::TokenSequence;

const CLASSES: [&str; 7] = [
    "object",
    "sphere",
    "cube",
    "cylinder",
    "boat",
    "girl",
    "walking_man",
];
const PROPS: [&str; 9] = [
    "red",
    "cyan",
    "small",
    "metal",
    "light_blue",
    "tied-up",
    "tiled",
    "full",
    "zigzag",
];
const SPATIAL: [&str; 7] = [
    "left",
    "right",
    "front",
    "behind",
    "walking_towards",
    "next_to",
    "in",
];
const TYPES: [&str; 5] = ["color", "size", "material", "shape", "fabric"];

pub fn random_graph(rng: &mut ChaCha8Rng) -> QuestionGraph {
    let n = rng.gen_range(1..=5);
    let mut nodes: Vec<Node> = Vec::with_capacity(n);
    for id in 0..n {
        let mut node = Node::regular(id, CLASSES[rng.gen_range(0..CLASSES.len())]);
        for _ in 0..rng.gen_range(0..=2) {
            let p = PROPS[rng.gen_range(0..PROPS.len())].to_string();
            if !node.base_properties.contains(&p) {
                node.base_properties.push(p);
            }
        }
        for _ in 0..rng.gen_range(0..=1) {
            let p = PROPS[rng.gen_range(0..PROPS.len())].to_string();
            if !node.asserted_properties.contains(&p) {
                node.asserted_properties.push(p);
            }
        }
        if rng.gen_bool(0.15) {
            let alternatives = (0..rng.gen_range(1..=3))
                .map(|_| RequirementBundle {
                    class: CLASSES[rng.gen_range(1..CLASSES.len())].to_string(),
                    properties: if rng.gen_bool(0.5) {
                        vec![PROPS[rng.gen_range(0..PROPS.len())].to_string()]
                    } else {
                        vec![]
                    },
                })
                .collect();
            node = Node::super_node(id, alternatives);
        }
        nodes.push(node);
    }

    // Spanning tree plus optional extra edges.
    let mut edges: Vec<Edge> = Vec::new();
    for id in 1..n {
        let parent = rng.gen_range(0..id);
        edges.push(random_edge(rng, parent, id));
    }
    if n >= 2 {
        for _ in 0..rng.gen_range(0..=2) {
            let a = rng.gen_range(0..n);
            let b = rng.gen_range(0..n);
            if a != b {
                edges.push(random_edge(rng, a, b));
            }
        }
    }

    // Quantifiers on regular nodes, never on two adjacent ones.
    for id in 0..n {
        if !rng.gen_bool(0.25) || nodes[id].is_super() {
            continue;
        }
        let neighbor_quantified = edges.iter().any(|e| {
            e.touches(NodeId(id)) && nodes[e.other(NodeId(id)).0].quantifier != Quantifier::Exists
        });
        if neighbor_quantified {
            continue;
        }
        nodes[id].quantifier = if rng.gen_bool(0.5) {
            Quantifier::All
        } else {
            Quantifier::Exactly(rng.gen_range(1..=20))
        };
    }

    // At most one answer spec.
    let plain: Vec<usize> = (0..n)
        .filter(|i| nodes[*i].quantifier == Quantifier::Exists)
        .collect();
    match rng.gen_range(0..5) {
        0 => {} // pure existence
        1 => {
            let candidates: Vec<usize> = plain
                .iter()
                .copied()
                .filter(|i| !nodes[*i].is_super())
                .collect();
            if let Some(&i) = candidates.first() {
                nodes[i].query_property = Some(TYPES[rng.gen_range(0..TYPES.len())].to_string());
            }
        }
        2 => {
            if let Some(&i) = plain.first() {
                nodes[i].set_query = Some("number".to_string());
            }
        }
        3 => {
            // A compare link, possibly to a brand-new disconnected chain
            // (the link itself carries connectivity).
            if plain.len() >= 2 {
                let a = plain[0];
                let b = plain[1];
                let op =
                    [CompareOp::Same, CompareOp::Greater, CompareOp::Fewer][rng.gen_range(0..3)];
                nodes[a].quantity_compare = Some(QuantityCompare {
                    other: NodeId(b),
                    op,
                });
            }
        }
        _ => {
            let eligible: Vec<usize> = edges
                .iter()
                .enumerate()
                .filter(|(_, e)| {
                    matches!(e.relation, RelationSpec::PropertyCompare { .. })
                        && nodes[e.from.0].quantifier == Quantifier::Exists
                        && nodes[e.to.0].quantifier == Quantifier::Exists
                })
                .map(|(i, _)| i)
                .collect();
            if let Some(&i) = eligible.first() {
                edges[i].answer_bearing = true;
            }
        }
    }

    let graph = QuestionGraph {
        nodes,
        edges,
        root: NodeId(0),
    };
    debug_assert!(
        !uncord_core::graph::validate_graph(
            &graph,
            &uncord_core::vocab::ConceptVocabulary::clevr()
        )
        .has_errors(),
        "generator produced an invalid graph: {graph:?}"
    );
    graph
}

fn random_edge(rng: &mut ChaCha8Rng, a: usize, b: usize) -> Edge {
    let (from, to) = if rng.gen_bool(0.5) { (a, b) } else { (b, a) };
    let relation = match rng.gen_range(0..4) {
        0 | 1 => RelationSpec::spatial(SPATIAL[rng.gen_range(0..SPATIAL.len())]),
        2 => RelationSpec::PropertyCompare {
            property_type: TYPES[rng.gen_range(0..TYPES.len())].to_string(),
            mode: if rng.gen_bool(0.5) {
                CompareMode::Same
            } else {
                CompareMode::Different
            },
        },
        _ => RelationSpec::Superlative(["closest", "farthest"][rng.gen_range(0..2)].to_string()),
    };
    Edge::new(NodeId(from), NodeId(to), relation)
}

/// Apply up to `edits` random drop/duplicate/swap edits to a sequence.
pub fn corrupt(rng: &mut ChaCha8Rng, tokens: &TokenSequence, edits: usize) -> TokenSequence {
    let mut toks: Vec<String> = tokens.tokens().to_vec();
    for _ in 0..edits {
        if toks.is_empty() {
            break;
        }
        match rng.gen_range(0..3) {
            0 => {
                let i = rng.gen_range(0..toks.len());
                toks.remove(i);
            }
            1 => {
                let i = rng.gen_range(0..toks.len());
                let t = toks[i].clone();
                toks.insert(i, t);
            }
            _ => {
                if toks.len() >= 2 {
                    let i = rng.gen_range(0..toks.len() - 1);
                    toks.swap(i, i + 1);
                }
            }
        }
    }
    TokenSequence::new(toks)
}

/// Every generated graph should round-trip; expose the check for reuse.
pub fn assert_round_trip(graph: &QuestionGraph) {
    let tokens = uncord_core::tokens::serialize_graph(graph).expect("valid graph serializes");
    let back = uncord_core::tokens::deserialize_tokens(&tokens).expect("clean parse");
    assert_eq!(
        back,
        graph.canonicalize(),
        "round trip mismatch\ntokens: {tokens}\ngraph: {graph:?}"
    );
    let again = uncord_core::tokens::serialize_graph(&back).expect("canonical serializes");
    assert_eq!(again, tokens, "canonical form not stable");
}

/// Random valid graph over a concrete vocabulary (CLEVR-extended shapes,
/// colors, materials, sizes and geometric relations), small enough for the
/// exhaustive oracle. Exercises quantifiers, asserted properties,
/// supernodes, compare links and answer-bearing edges with concepts the
/// oracle estimators can actually evaluate.
pub fn random_graph_in_vocab(rng: &mut ChaCha8Rng) -> QuestionGraph {
    const V_CLASSES: [&str; 4] = ["object", "sphere", "cube", "cylinder"];
    const V_PROPS: [&str; 8] = [
        "red", "cyan", "yellow", "gray", "small", "large", "metal", "rubber",
    ];
    const V_SPATIAL: [&str; 4] = ["left", "right", "front", "behind"];
    const V_TYPES: [&str; 4] = ["color", "size", "material", "shape"];

    let n = rng.gen_range(1..=4);
    let mut nodes: Vec<Node> = Vec::with_capacity(n);
    for id in 0..n {
        let mut node = Node::regular(id, V_CLASSES[rng.gen_range(0..V_CLASSES.len())]);
        for _ in 0..rng.gen_range(0..=1) {
            let p = V_PROPS[rng.gen_range(0..V_PROPS.len())].to_string();
            if !node.base_properties.contains(&p) {
                node.base_properties.push(p);
            }
        }
        if rng.gen_bool(0.3) {
            let p = V_PROPS[rng.gen_range(0..V_PROPS.len())].to_string();
            if !node.base_properties.contains(&p) {
                node.asserted_properties.push(p);
            }
        }
        if rng.gen_bool(0.12) {
            let alternatives = (0..rng.gen_range(1..=2))
                .map(|_| RequirementBundle {
                    class: V_CLASSES[rng.gen_range(1..V_CLASSES.len())].to_string(),
                    properties: if rng.gen_bool(0.5) {
                        vec![V_PROPS[rng.gen_range(0..V_PROPS.len())].to_string()]
                    } else {
                        vec![]
                    },
                })
                .collect();
            node = Node::super_node(id, alternatives);
        }
        nodes.push(node);
    }

    let mut edges: Vec<Edge> = Vec::new();
    let in_vocab_edge = |rng: &mut ChaCha8Rng, a: usize, b: usize| -> Edge {
        let (from, to) = if rng.gen_bool(0.5) { (a, b) } else { (b, a) };
        let relation = match rng.gen_range(0..4) {
            0 | 1 => RelationSpec::spatial(V_SPATIAL[rng.gen_range(0..V_SPATIAL.len())]),
            2 => RelationSpec::PropertyCompare {
                property_type: V_TYPES[rng.gen_range(0..V_TYPES.len())].to_string(),
                mode: if rng.gen_bool(0.5) {
                    CompareMode::Same
                } else {
                    CompareMode::Different
                },
            },
            _ => {
                RelationSpec::Superlative(["closest", "farthest"][rng.gen_range(0..2)].to_string())
            }
        };
        Edge::new(NodeId(from), NodeId(to), relation)
    };
    for id in 1..n {
        let parent = rng.gen_range(0..id);
        edges.push(in_vocab_edge(rng, parent, id));
    }
    if n >= 2 && rng.gen_bool(0.3) {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if a != b {
            edges.push(in_vocab_edge(rng, a, b));
        }
    }

    for id in 0..n {
        if !rng.gen_bool(0.3) || nodes[id].is_super() {
            continue;
        }
        let neighbor_quantified = edges.iter().any(|e| {
            e.touches(NodeId(id)) && nodes[e.other(NodeId(id)).0].quantifier != Quantifier::Exists
        });
        if neighbor_quantified {
            continue;
        }
        nodes[id].quantifier = if rng.gen_bool(0.5) {
            Quantifier::All
        } else {
            Quantifier::Exactly(rng.gen_range(1..=3))
        };
    }

    let plain: Vec<usize> = (0..n)
        .filter(|i| nodes[*i].quantifier == Quantifier::Exists)
        .collect();
    match rng.gen_range(0..5) {
        0 => {}
        1 => {
            let candidates: Vec<usize> = plain
                .iter()
                .copied()
                .filter(|i| !nodes[*i].is_super())
                .collect();
            if let Some(&i) = candidates.first() {
                nodes[i].query_property =
                    Some(V_TYPES[rng.gen_range(0..V_TYPES.len())].to_string());
            }
        }
        2 => {
            if let Some(&i) = plain.first() {
                nodes[i].set_query = Some("number".to_string());
            }
        }
        3 => {
            if plain.len() >= 2 {
                let op =
                    [CompareOp::Same, CompareOp::Greater, CompareOp::Fewer][rng.gen_range(0..3)];
                nodes[plain[0]].quantity_compare = Some(QuantityCompare {
                    other: NodeId(plain[1]),
                    op,
                });
            }
        }
        _ => {
            let eligible: Vec<usize> = edges
                .iter()
                .enumerate()
                .filter(|(_, e)| {
                    matches!(e.relation, RelationSpec::PropertyCompare { .. })
                        && nodes[e.from.0].quantifier == Quantifier::Exists
                        && nodes[e.to.0].quantifier == Quantifier::Exists
                })
                .map(|(i, _)| i)
                .collect();
            if let Some(&i) = eligible.first() {
                edges[i].answer_bearing = true;
            }
        }
    }

    let graph = QuestionGraph {
        nodes,
        edges,
        root: NodeId(0),
    };
    debug_assert!(!uncord_core::graph::validate_graph(
        &graph,
        &uncord_core::vocab::ConceptVocabulary::clevr_extended()
    )
    .has_errors());
    graph
}
