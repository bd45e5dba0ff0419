//! CLEVR-style functional programs: parsing, compilation to question
//! graphs, direct interpretation over scenes, and a family-stratified
//! program sampler.
//!
//! The interpreter executes programs with strict set semantics (`unique`
//! over a non-singleton set is an error) and serves as an independent
//! answer oracle for the graph engine.

use rand::prelude::*;
use serde_json::Value;
use thiserror::Error;

use crate::answer::{AnswerValue, QuestionFamily};
use crate::graph::{
    CompareMode, CompareOp, Edge, Node, NodeId, QuantityCompare, QuestionGraph, RelationSpec,
    RequirementBundle, SUPERLATIVE_NAMES,
};
use crate::scene::{distance, spatial_relation, Scene};
use crate::vocab::{ConceptVocabulary, COUNT_SET_PROPERTY, UNCONSTRAINED_CLASS};

pub const CLEVR_ATTRIBUTES: [&str; 4] = ["size", "color", "material", "shape"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProgramStep {
    pub function: String,
    pub inputs: Vec<usize>,
    pub value_inputs: Vec<String>,
}

impl ProgramStep {
    pub fn new(function: &str, inputs: &[usize], value_inputs: &[&str]) -> Self {
        ProgramStep {
            function: function.to_string(),
            inputs: inputs.to_vec(),
            value_inputs: value_inputs.iter().map(|v| v.to_string()).collect(),
        }
    }
}

/// A validated functional program: a topologically ordered DAG of steps,
/// step 0 a `scene`, the final step answer-producing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClevrProgram {
    pub steps: Vec<ProgramStep>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProgramError {
    #[error("malformed program: {0}")]
    Malformed(String),
    #[error("unsupported function '{0}'")]
    UnsupportedFunction(String),
    #[error("program is not representable as a question graph: {0}")]
    Unrepresentable(String),
}

/// What a supported function does with its inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Func<'a> {
    Scene,
    Filter(&'a str),
    Unique,
    Relate,
    Same(&'a str),
    Exist,
    Count,
    Query(&'a str),
    EqualAttr(&'a str),
    EqualInteger,
    GreaterThan,
    LessThan,
    Union,
    Intersect,
}

fn func(name: &str) -> Option<Func<'_>> {
    match name {
        "scene" => Some(Func::Scene),
        "unique" => Some(Func::Unique),
        "relate" => Some(Func::Relate),
        "exist" => Some(Func::Exist),
        "count" => Some(Func::Count),
        "equal_integer" => Some(Func::EqualInteger),
        "greater_than" => Some(Func::GreaterThan),
        "less_than" => Some(Func::LessThan),
        "union" => Some(Func::Union),
        "intersect" => Some(Func::Intersect),
        _ => {
            let attr_fn = |prefix: &str| -> Option<&str> {
                name.strip_prefix(prefix)
                    .filter(|a| CLEVR_ATTRIBUTES.contains(a))
            };
            if let Some(a) = attr_fn("filter_") {
                Some(Func::Filter(a))
            } else if let Some(a) = attr_fn("same_") {
                Some(Func::Same(a))
            } else if let Some(a) = attr_fn("query_") {
                Some(Func::Query(a))
            } else {
                attr_fn("equal_").map(Func::EqualAttr)
            }
        }
    }
}

fn arity(f: Func<'_>) -> (usize, usize) {
    // (inputs, value_inputs)
    match f {
        Func::Scene => (0, 0),
        Func::Filter(_) | Func::Relate => (1, 1),
        Func::Unique | Func::Same(_) | Func::Exist | Func::Count | Func::Query(_) => (1, 0),
        Func::EqualAttr(_)
        | Func::EqualInteger
        | Func::GreaterThan
        | Func::LessThan
        | Func::Union
        | Func::Intersect => (2, 0),
    }
}

fn is_answer_producing(f: Func<'_>) -> bool {
    matches!(
        f,
        Func::Exist
            | Func::Count
            | Func::Query(_)
            | Func::EqualAttr(_)
            | Func::EqualInteger
            | Func::GreaterThan
            | Func::LessThan
    )
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

/// Parse a program from JSON: either a bare step array or an object with a
/// `program` key, as in CLEVR question records. Step keys `function`/`type`
/// and `value_inputs`/`side_inputs` are both accepted.
pub fn parse_program(value: &Value) -> Result<ClevrProgram, ProgramError> {
    let list = value
        .get("program")
        .and_then(Value::as_array)
        .or_else(|| value.as_array())
        .ok_or_else(|| ProgramError::Malformed("expected a step array".to_string()))?;
    if list.is_empty() {
        return Err(ProgramError::Malformed("program has no steps".to_string()));
    }
    let mut steps = Vec::with_capacity(list.len());
    for (i, raw) in list.iter().enumerate() {
        let function = raw
            .get("function")
            .or_else(|| raw.get("type"))
            .and_then(Value::as_str)
            .ok_or_else(|| ProgramError::Malformed(format!("step {i}: missing function")))?;
        let inputs = raw
            .get("inputs")
            .and_then(Value::as_array)
            .map(|a| {
                a.iter()
                    .map(|v| {
                        v.as_u64()
                            .map(|n| n as usize)
                            .ok_or_else(|| ProgramError::Malformed(format!("step {i}: bad input")))
                    })
                    .collect::<Result<Vec<_>, _>>()
            })
            .transpose()?
            .unwrap_or_default();
        let value_inputs = raw
            .get("value_inputs")
            .or_else(|| raw.get("side_inputs"))
            .and_then(Value::as_array)
            .map(|a| {
                a.iter()
                    .map(|v| v.as_str().map(str::to_string))
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| ProgramError::Malformed(format!("step {i}: bad value input")))
            })
            .transpose()?
            .unwrap_or_default();
        steps.push(ProgramStep {
            function: function.to_string(),
            inputs,
            value_inputs,
        });
    }
    validate_program(steps)
}

/// Validate step structure: known functions, correct arities, inputs that
/// reference earlier steps only, `scene` first, answer-producing last.
pub fn validate_program(steps: Vec<ProgramStep>) -> Result<ClevrProgram, ProgramError> {
    for (i, step) in steps.iter().enumerate() {
        let f = func(&step.function)
            .ok_or_else(|| ProgramError::UnsupportedFunction(step.function.clone()))?;
        let (n_in, n_val) = arity(f);
        if step.inputs.len() != n_in {
            return Err(ProgramError::Malformed(format!(
                "step {i} ({}): expected {n_in} inputs, found {}",
                step.function,
                step.inputs.len()
            )));
        }
        if step.value_inputs.len() != n_val {
            return Err(ProgramError::Malformed(format!(
                "step {i} ({}): expected {n_val} value inputs, found {}",
                step.function,
                step.value_inputs.len()
            )));
        }
        for &input in &step.inputs {
            if input >= i {
                return Err(ProgramError::Malformed(format!(
                    "step {i} references step {input}"
                )));
            }
        }
        if i == 0 && f != Func::Scene {
            return Err(ProgramError::Malformed(
                "step 0 must be 'scene'".to_string(),
            ));
        }
        if i == steps.len() - 1 && !is_answer_producing(f) {
            return Err(ProgramError::Malformed(format!(
                "final step '{}' does not produce an answer",
                step.function
            )));
        }
    }
    Ok(ClevrProgram { steps })
}

impl ClevrProgram {
    pub fn to_json(&self) -> Value {
        Value::Array(
            self.steps
                .iter()
                .map(|s| {
                    serde_json::json!({
                        "function": s.function,
                        "inputs": s.inputs,
                        "value_inputs": s.value_inputs,
                    })
                })
                .collect(),
        )
    }
}

// ---------------------------------------------------------------------------
// Interpretation (the reference executor)
// ---------------------------------------------------------------------------

#[derive(Debug, Error, PartialEq, Eq)]
pub enum InterpretError {
    /// `unique` over a set of the wrong size; reported, never resolved.
    #[error("step {step}: unique over a set of {found} objects")]
    NonUniqueReference { step: usize, found: usize },
    #[error("step {step}: relation '{name}' has no location rule")]
    UnknownRelation { step: usize, name: String },
    #[error("step {step}: object {object} lacks attribute '{attribute}'")]
    MissingAttribute {
        step: usize,
        object: usize,
        attribute: String,
    },
    #[error("step {step}: type mismatch for '{function}'")]
    TypeMismatch { step: usize, function: String },
}

#[derive(Debug, Clone, PartialEq)]
enum Val {
    Set(Vec<usize>),
    Obj(usize),
    Num(usize),
    Bool(bool),
    Str(String),
}

/// Execute a program over a scene with standard set-algebra semantics.
pub fn interpret_program(
    program: &ClevrProgram,
    scene: &Scene,
) -> Result<AnswerValue, InterpretError> {
    let vocab = &scene.vocabulary;
    let mut values: Vec<Val> = Vec::with_capacity(program.steps.len());
    for (i, step) in program.steps.iter().enumerate() {
        let f = func(&step.function).expect("validated on construction");
        let set = |idx: usize, values: &[Val]| -> Result<Vec<usize>, InterpretError> {
            match &values[idx] {
                Val::Set(s) => Ok(s.clone()),
                _ => Err(InterpretError::TypeMismatch {
                    step: i,
                    function: step.function.clone(),
                }),
            }
        };
        let obj = |idx: usize, values: &[Val]| -> Result<usize, InterpretError> {
            match &values[idx] {
                Val::Obj(o) => Ok(*o),
                _ => Err(InterpretError::TypeMismatch {
                    step: i,
                    function: step.function.clone(),
                }),
            }
        };
        let num = |idx: usize, values: &[Val]| -> Result<usize, InterpretError> {
            match &values[idx] {
                Val::Num(n) => Ok(*n),
                _ => Err(InterpretError::TypeMismatch {
                    step: i,
                    function: step.function.clone(),
                }),
            }
        };
        let attribute_of = |o: usize, attr: &str| -> Result<String, InterpretError> {
            let object = scene.object(o);
            if attr == "shape" {
                // The class is the shape; fall back to the attribute map for
                // scenes whose classes are not shapes.
                return Ok(object
                    .attribute("shape")
                    .unwrap_or(&object.class)
                    .to_string());
            }
            object.attribute(attr).map(str::to_string).ok_or_else(|| {
                InterpretError::MissingAttribute {
                    step: i,
                    object: o,
                    attribute: attr.to_string(),
                }
            })
        };

        let value = match f {
            Func::Scene => Val::Set(scene.objects.iter().map(|o| o.id).collect()),
            Func::Filter(attr) => {
                let wanted = vocab.canonical(&step.value_inputs[0]);
                let mut out = Vec::new();
                for o in set(step.inputs[0], &values)? {
                    if attribute_of(o, attr)? == wanted {
                        out.push(o);
                    }
                }
                Val::Set(out)
            }
            Func::Unique => {
                let s = set(step.inputs[0], &values)?;
                if s.len() != 1 {
                    return Err(InterpretError::NonUniqueReference {
                        step: i,
                        found: s.len(),
                    });
                }
                Val::Obj(s[0])
            }
            Func::Relate => {
                let reference = obj(step.inputs[0], &values)?;
                let name = vocab.canonical(&step.value_inputs[0]).to_string();
                Val::Set(relate(scene, reference, &name, i)?)
            }
            Func::Same(attr) => {
                let reference = obj(step.inputs[0], &values)?;
                let wanted = attribute_of(reference, attr)?;
                let mut out = Vec::new();
                for o in &scene.objects {
                    // CLEVR convention: the reference object is excluded.
                    if o.id != reference && attribute_of(o.id, attr)? == wanted {
                        out.push(o.id);
                    }
                }
                Val::Set(out)
            }
            Func::Exist => Val::Bool(!set(step.inputs[0], &values)?.is_empty()),
            Func::Count => Val::Num(set(step.inputs[0], &values)?.len()),
            Func::Query(attr) => {
                let o = obj(step.inputs[0], &values)?;
                Val::Str(attribute_of(o, attr)?)
            }
            Func::EqualAttr(attr) => {
                let a = attribute_of(obj(step.inputs[0], &values)?, attr)?;
                let b = attribute_of(obj(step.inputs[1], &values)?, attr)?;
                Val::Bool(a == b)
            }
            Func::EqualInteger => {
                Val::Bool(num(step.inputs[0], &values)? == num(step.inputs[1], &values)?)
            }
            Func::GreaterThan => {
                Val::Bool(num(step.inputs[0], &values)? > num(step.inputs[1], &values)?)
            }
            Func::LessThan => {
                Val::Bool(num(step.inputs[0], &values)? < num(step.inputs[1], &values)?)
            }
            Func::Union => {
                let mut s = set(step.inputs[0], &values)?;
                for o in set(step.inputs[1], &values)? {
                    if !s.contains(&o) {
                        s.push(o);
                    }
                }
                s.sort_unstable();
                Val::Set(s)
            }
            Func::Intersect => {
                let a = set(step.inputs[0], &values)?;
                let b = set(step.inputs[1], &values)?;
                Val::Set(a.into_iter().filter(|o| b.contains(o)).collect())
            }
        };
        values.push(value);
    }
    match values.pop().expect("validated: at least one step") {
        Val::Bool(b) => Ok(AnswerValue::Bool(b)),
        Val::Num(n) => Ok(AnswerValue::Count(n)),
        Val::Str(s) => Ok(AnswerValue::Value(s)),
        _ => unreachable!("validated: final step produces an answer"),
    }
}

/// Objects standing in relation `name` to the reference: strict coordinate
/// comparison for the spatial four, the distance winner for superlatives.
fn relate(
    scene: &Scene,
    reference: usize,
    name: &str,
    step: usize,
) -> Result<Vec<usize>, InterpretError> {
    let reference_obj = scene.object(reference);
    match name {
        "left" | "right" | "front" | "behind" => Ok(scene
            .objects
            .iter()
            .filter(|o| {
                o.id != reference
                    && spatial_relation(o, reference_obj, name).expect("geometric name")
            })
            .map(|o| o.id)
            .collect()),
        "closest" | "farthest" => {
            let winner = scene
                .objects
                .iter()
                .filter(|o| o.id != reference)
                .min_by(|a, b| {
                    let (da, db) = (distance(a, reference_obj), distance(b, reference_obj));
                    let ord = if name == "closest" {
                        da.total_cmp(&db)
                    } else {
                        db.total_cmp(&da)
                    };
                    ord.then(a.id.cmp(&b.id))
                });
            Ok(winner.map(|w| vec![w.id]).unwrap_or_default())
        }
        other => Err(InterpretError::UnknownRelation {
            step,
            name: other.to_string(),
        }),
    }
}

// ---------------------------------------------------------------------------
// Compilation to question graphs
// ---------------------------------------------------------------------------

/// An object slot under construction: either one class-and-properties
/// bundle or a disjunction of bundles, plus relation edges from nodes that
/// were already materialized.
#[derive(Debug, Clone)]
struct Draft {
    bundles: Vec<RequirementBundle>,
    disjunctive: bool,
    incoming: Vec<(NodeId, RelationSpec)>,
}

impl Draft {
    fn fresh() -> Self {
        Draft {
            bundles: vec![RequirementBundle {
                class: UNCONSTRAINED_CLASS.to_string(),
                properties: Vec::new(),
            }],
            disjunctive: false,
            incoming: Vec::new(),
        }
    }

    fn add_filter(&mut self, attr: &str, value: &str) {
        for bundle in &mut self.bundles {
            if attr == "shape" && bundle.class == UNCONSTRAINED_CLASS {
                bundle.class = value.to_string();
            } else {
                bundle.properties.push(value.to_string());
            }
        }
    }
}

#[derive(Debug, Clone)]
enum StepValue {
    Chain(Draft),
    Counted(Draft),
    Answered,
}

struct Compiler {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
}

impl Compiler {
    fn materialize(&mut self, draft: Draft) -> NodeId {
        let id = NodeId(self.nodes.len());
        let mut node = if draft.disjunctive {
            Node::super_node(id.0, draft.bundles)
        } else {
            let bundle = draft.bundles.into_iter().next().expect("one bundle");
            let mut n = Node::regular(id.0, &bundle.class);
            n.base_properties = bundle.properties;
            n
        };
        node.id = id;
        self.nodes.push(node);
        for (from, relation) in draft.incoming {
            self.edges.push(Edge::new(from, id, relation));
        }
        id
    }
}

/// Compile a program into the equivalent question graph. Filter chains
/// become node requirements, `relate`/`same_*` become edges to fresh nodes,
/// `union` becomes a supernode, `intersect` merges branches onto one node,
/// and the final step installs the answer spec. The result is canonical
/// (root first, DFS numbering).
pub fn compile_program(
    program: &ClevrProgram,
    vocab: &ConceptVocabulary,
) -> Result<QuestionGraph, ProgramError> {
    let mut c = Compiler {
        nodes: Vec::new(),
        edges: Vec::new(),
    };
    let mut values: Vec<StepValue> = Vec::with_capacity(program.steps.len());
    let mut root: Option<NodeId> = None;

    for (i, step) in program.steps.iter().enumerate() {
        let f = func(&step.function).expect("validated on construction");
        let chain = |idx: usize, values: &[StepValue]| -> Result<Draft, ProgramError> {
            match &values[idx] {
                StepValue::Chain(d) => Ok(d.clone()),
                _ => Err(ProgramError::Malformed(format!(
                    "step {i} ({}): input {idx} is not an object chain",
                    step.function
                ))),
            }
        };
        let counted = |idx: usize, values: &[StepValue]| -> Result<Draft, ProgramError> {
            match &values[idx] {
                StepValue::Counted(d) => Ok(d.clone()),
                _ => Err(ProgramError::Malformed(format!(
                    "step {i} ({}): input {idx} is not a count",
                    step.function
                ))),
            }
        };

        let value = match f {
            Func::Scene => StepValue::Chain(Draft::fresh()),
            Func::Filter(attr) => {
                let mut d = chain(step.inputs[0], &values)?;
                d.add_filter(attr, vocab.canonical(&step.value_inputs[0]));
                StepValue::Chain(d)
            }
            Func::Unique => StepValue::Chain(chain(step.inputs[0], &values)?),
            Func::Relate => {
                let reference = c.materialize(chain(step.inputs[0], &values)?);
                let name = vocab.canonical(&step.value_inputs[0]).to_string();
                let relation = if SUPERLATIVE_NAMES.contains(&name.as_str()) {
                    RelationSpec::Superlative(name)
                } else {
                    RelationSpec::Spatial(name)
                };
                let mut d = Draft::fresh();
                d.incoming.push((reference, relation));
                StepValue::Chain(d)
            }
            Func::Same(attr) => {
                let reference = c.materialize(chain(step.inputs[0], &values)?);
                let mut d = Draft::fresh();
                d.incoming
                    .push((reference, RelationSpec::compare(attr, CompareMode::Same)));
                StepValue::Chain(d)
            }
            Func::Exist => {
                root = Some(c.materialize(chain(step.inputs[0], &values)?));
                StepValue::Answered
            }
            Func::Count => StepValue::Counted(chain(step.inputs[0], &values)?),
            Func::Query(attr) => {
                let d = chain(step.inputs[0], &values)?;
                if d.disjunctive {
                    return Err(ProgramError::Unrepresentable(
                        "queried property over a union".to_string(),
                    ));
                }
                let id = c.materialize(d);
                c.nodes[id.0].query_property = Some(attr.to_string());
                root = Some(id);
                StepValue::Answered
            }
            Func::EqualAttr(attr) => {
                let a = c.materialize(chain(step.inputs[0], &values)?);
                let b = c.materialize(chain(step.inputs[1], &values)?);
                let mut edge = Edge::new(a, b, RelationSpec::compare(attr, CompareMode::Same));
                edge.answer_bearing = true;
                c.edges.push(edge);
                root = Some(a);
                StepValue::Answered
            }
            Func::EqualInteger | Func::GreaterThan | Func::LessThan => {
                let op = match f {
                    Func::EqualInteger => CompareOp::Same,
                    Func::GreaterThan => CompareOp::Greater,
                    _ => CompareOp::Fewer,
                };
                let a = c.materialize(counted(step.inputs[0], &values)?);
                let b = c.materialize(counted(step.inputs[1], &values)?);
                c.nodes[a.0].quantity_compare = Some(QuantityCompare { other: b, op });
                root = Some(a);
                StepValue::Answered
            }
            Func::Union => {
                let a = chain(step.inputs[0], &values)?;
                let b = chain(step.inputs[1], &values)?;
                if !a.incoming.is_empty() || !b.incoming.is_empty() {
                    return Err(ProgramError::Unrepresentable(
                        "union over relation chains".to_string(),
                    ));
                }
                let mut bundles = a.bundles;
                bundles.extend(b.bundles);
                StepValue::Chain(Draft {
                    bundles,
                    disjunctive: true,
                    incoming: Vec::new(),
                })
            }
            Func::Intersect => {
                let a = chain(step.inputs[0], &values)?;
                let b = chain(step.inputs[1], &values)?;
                if a.disjunctive || b.disjunctive {
                    return Err(ProgramError::Unrepresentable(
                        "intersection over a union".to_string(),
                    ));
                }
                let (mut bundle, other) = (
                    a.bundles.into_iter().next().expect("one bundle"),
                    b.bundles.into_iter().next().expect("one bundle"),
                );
                if bundle.class == UNCONSTRAINED_CLASS {
                    bundle.class = other.class;
                } else if other.class != UNCONSTRAINED_CLASS && other.class != bundle.class {
                    // Contradictory classes cannot both hold; keep the first
                    // as the class and the second as a property requirement.
                    bundle.properties.push(other.class);
                }
                for p in other.properties {
                    if !bundle.properties.contains(&p) {
                        bundle.properties.push(p);
                    }
                }
                let mut incoming = a.incoming;
                incoming.extend(b.incoming);
                StepValue::Chain(Draft {
                    bundles: vec![bundle],
                    disjunctive: false,
                    incoming,
                })
            }
        };
        values.push(value);
    }

    // A count as the final step carries the set query itself.
    if let Some(StepValue::Counted(draft)) = values.last().cloned() {
        let id = c.materialize(draft);
        c.nodes[id.0].set_query = Some(COUNT_SET_PROPERTY.to_string());
        root = Some(id);
    }

    let root =
        root.ok_or_else(|| ProgramError::Malformed("program produced no answer node".to_string()))?;
    let graph = QuestionGraph {
        nodes: c.nodes,
        edges: c.edges,
        root,
    };
    Ok(graph.canonicalize())
}

// ---------------------------------------------------------------------------
// Program sampling
// ---------------------------------------------------------------------------

/// Sample a random program of the given family over the vocabulary's
/// concepts. Chains stay small enough that compiled graphs have at most
/// four nodes.
pub fn sample_program(
    rng: &mut impl Rng,
    vocab: &ConceptVocabulary,
    family: QuestionFamily,
) -> ClevrProgram {
    sample_program_for_scene(rng, vocab, None, family)
}

/// Like [`sample_program`], but filter values are drawn from the attributes
/// of actual scene objects, which makes unique references far more likely
/// (mirroring how CLEVR questions are grounded in their scenes).
pub fn sample_program_for_scene(
    rng: &mut impl Rng,
    vocab: &ConceptVocabulary,
    scene: Option<&Scene>,
    family: QuestionFamily,
) -> ClevrProgram {
    let mut steps: Vec<ProgramStep> = Vec::new();
    let program = match family {
        QuestionFamily::Exist | QuestionFamily::Elemental => {
            let end = sample_set(rng, vocab, scene, &mut steps);
            steps.push(ProgramStep::new("exist", &[end], &[]));
            steps
        }
        QuestionFamily::Count => {
            let end = sample_set(rng, vocab, scene, &mut steps);
            steps.push(ProgramStep::new("count", &[end], &[]));
            steps
        }
        QuestionFamily::CompareNumbers => {
            let a = sample_chain(rng, vocab, scene, &mut steps, ChainBudget::lean());
            let ca = steps.len();
            steps.push(ProgramStep::new("count", &[a], &[]));
            let b = sample_chain(rng, vocab, scene, &mut steps, ChainBudget::lean());
            let cb = steps.len();
            steps.push(ProgramStep::new("count", &[b], &[]));
            let cmp = ["equal_integer", "greater_than", "less_than"][rng.gen_range(0..3)];
            steps.push(ProgramStep::new(cmp, &[ca, cb], &[]));
            steps
        }
        QuestionFamily::QueryAttribute => {
            let end = sample_chain(rng, vocab, scene, &mut steps, ChainBudget::rich());
            let u = steps.len();
            steps.push(ProgramStep::new("unique", &[end], &[]));
            let attr = CLEVR_ATTRIBUTES[rng.gen_range(0..CLEVR_ATTRIBUTES.len())];
            steps.push(ProgramStep::new(&format!("query_{attr}"), &[u], &[]));
            steps
        }
        QuestionFamily::CompareAttribute => {
            let a = sample_chain(rng, vocab, scene, &mut steps, ChainBudget::lean());
            let ua = steps.len();
            steps.push(ProgramStep::new("unique", &[a], &[]));
            let b = sample_chain(rng, vocab, scene, &mut steps, ChainBudget::lean());
            let ub = steps.len();
            steps.push(ProgramStep::new("unique", &[b], &[]));
            let attr = ["size", "color", "material"][rng.gen_range(0..3)];
            steps.push(ProgramStep::new(&format!("equal_{attr}"), &[ua, ub], &[]));
            steps
        }
    };
    validate_program(program).expect("sampler emits well-formed programs")
}

pub fn sample_any(rng: &mut impl Rng, vocab: &ConceptVocabulary) -> ClevrProgram {
    let family = QuestionFamily::EVAL_FAMILIES[rng.gen_range(0..5)];
    sample_program(rng, vocab, family)
}

pub fn sample_any_for_scene(
    rng: &mut impl Rng,
    vocab: &ConceptVocabulary,
    scene: &Scene,
) -> ClevrProgram {
    let family = QuestionFamily::EVAL_FAMILIES[rng.gen_range(0..5)];
    sample_program_for_scene(rng, vocab, Some(scene), family)
}

/// Step budget for one sampled chain; the caps keep whole programs at 12
/// steps or fewer and compiled graphs at four nodes or fewer.
#[derive(Clone, Copy)]
struct ChainBudget {
    max_hops: usize,
    base_filters: (usize, usize),
    hop_filters: (usize, usize),
}

impl ChainBudget {
    fn rich() -> Self {
        ChainBudget {
            max_hops: 2,
            base_filters: (1, 2),
            hop_filters: (1, 1),
        }
    }

    fn lean() -> Self {
        ChainBudget {
            max_hops: 1,
            base_filters: (1, 1),
            hop_filters: (0, 0),
        }
    }

    fn flat(max_base_filters: usize) -> Self {
        ChainBudget {
            max_hops: 0,
            base_filters: (0, max_base_filters),
            hop_filters: (0, 0),
        }
    }
}

/// A set-producing expression for exist/count: a plain chain, a union of
/// two filter bundles, or an intersection of two one-hop chains.
fn sample_set(
    rng: &mut impl Rng,
    vocab: &ConceptVocabulary,
    scene: Option<&Scene>,
    steps: &mut Vec<ProgramStep>,
) -> usize {
    match rng.gen_range(0..6) {
        0 => {
            let a = sample_chain(rng, vocab, scene, steps, ChainBudget::flat(2));
            let b = sample_chain(rng, vocab, scene, steps, ChainBudget::flat(2));
            steps.push(ProgramStep::new("union", &[a, b], &[]));
            steps.len() - 1
        }
        1 => {
            let a = sample_chain(rng, vocab, scene, steps, ChainBudget::lean());
            let b = sample_chain(rng, vocab, scene, steps, ChainBudget::lean());
            steps.push(ProgramStep::new("intersect", &[a, b], &[]));
            steps.len() - 1
        }
        _ => sample_chain(rng, vocab, scene, steps, ChainBudget::rich()),
    }
}

/// scene -> filters -> (unique -> relate/same -> filters)^hops.
fn sample_chain(
    rng: &mut impl Rng,
    vocab: &ConceptVocabulary,
    scene: Option<&Scene>,
    steps: &mut Vec<ProgramStep>,
    budget: ChainBudget,
) -> usize {
    steps.push(ProgramStep::new("scene", &[], &[]));
    let mut last = steps.len() - 1;
    let n_filters = rng.gen_range(budget.base_filters.0..=budget.base_filters.1);
    last = push_filters(rng, vocab, scene, steps, last, n_filters);
    let hops = rng.gen_range(0..=budget.max_hops);
    for _ in 0..hops {
        steps.push(ProgramStep::new("unique", &[last], &[]));
        let unique = steps.len() - 1;
        if rng.gen_bool(0.75) {
            let relations: Vec<&String> = vocab
                .relations()
                .iter()
                .filter(|r| {
                    crate::scene::is_geometric_relation(r)
                        || SUPERLATIVE_NAMES.contains(&r.as_str())
                })
                .collect();
            let relation = relations[rng.gen_range(0..relations.len())].clone();
            steps.push(ProgramStep::new("relate", &[unique], &[&relation]));
        } else {
            let attr = ["size", "color", "material", "shape"][rng.gen_range(0..4)];
            steps.push(ProgramStep::new(&format!("same_{attr}"), &[unique], &[]));
        }
        last = steps.len() - 1;
        let n_filters = rng.gen_range(budget.hop_filters.0..=budget.hop_filters.1);
        last = push_filters(rng, vocab, scene, steps, last, n_filters);
    }
    last
}

fn push_filters(
    rng: &mut impl Rng,
    vocab: &ConceptVocabulary,
    scene: Option<&Scene>,
    steps: &mut Vec<ProgramStep>,
    mut last: usize,
    count: usize,
) -> usize {
    let mut types: Vec<&str> = CLEVR_ATTRIBUTES
        .iter()
        .copied()
        .filter(|t| vocab.values_of(t).is_some_and(|v| !v.is_empty()))
        .collect();
    // Ground the filters in one concrete object when a scene is available,
    // so the filtered set is non-empty and more often unique.
    let target = scene.and_then(|s| {
        if s.is_empty() {
            None
        } else {
            Some(s.object(rng.gen_range(0..s.len())).clone())
        }
    });
    for _ in 0..count {
        if types.is_empty() {
            break;
        }
        let ti = rng.gen_range(0..types.len());
        let attr = types.remove(ti);
        let from_target = target.as_ref().and_then(|t| {
            if attr == "shape" {
                Some(t.class.clone())
            } else {
                t.attribute(attr).map(str::to_string)
            }
        });
        let value = match from_target {
            Some(v) => v,
            None => {
                let values: Vec<&String> = vocab.values_of(attr).expect("checked").iter().collect();
                values[rng.gen_range(0..values.len())].clone()
            }
        };
        steps.push(ProgramStep::new(
            &format!("filter_{attr}"),
            &[last],
            &[&value],
        ));
        last = steps.len() - 1;
    }
    last
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{validate_graph, NodeKind};
    use crate::scene::{generate_scene, SceneGenParams};
    use crate::vocab::CLASS_QUERY;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn vocab() -> ConceptVocabulary {
        ConceptVocabulary::clevr()
    }

    fn steps(list: &[(&str, &[usize], &[&str])]) -> Vec<ProgramStep> {
        list.iter()
            .map(|(f, i, v)| ProgramStep::new(f, i, v))
            .collect()
    }

    fn fixture_scene() -> Scene {
        // red sphere at x=1, blue cube at x=2, red cube at x=3.
        Scene::from_parts(
            Arc::new(vocab()),
            &[
                (
                    "sphere",
                    &[
                        ("shape", "sphere"),
                        ("color", "red"),
                        ("material", "rubber"),
                        ("size", "small"),
                    ],
                    [1.0, 0.0, 0.0],
                ),
                (
                    "cube",
                    &[
                        ("shape", "cube"),
                        ("color", "blue"),
                        ("material", "metal"),
                        ("size", "large"),
                    ],
                    [2.0, 1.0, 0.0],
                ),
                (
                    "cube",
                    &[
                        ("shape", "cube"),
                        ("color", "red"),
                        ("material", "rubber"),
                        ("size", "large"),
                    ],
                    [3.0, 2.0, 0.0],
                ),
            ],
        )
    }

    #[test]
    fn minimal_program_parses() {
        let p = validate_program(steps(&[("scene", &[], &[]), ("exist", &[0], &[])])).unwrap();
        assert_eq!(p.steps.len(), 2);
    }

    #[test]
    fn six_step_chain_parses() {
        let p = validate_program(steps(&[
            ("scene", &[], &[]),
            ("filter_color", &[0], &["red"]),
            ("filter_shape", &[1], &["sphere"]),
            ("unique", &[2], &[]),
            ("relate", &[3], &["left"]),
            ("count", &[4], &[]),
        ]))
        .unwrap();
        assert_eq!(p.steps.len(), 6);
    }

    #[test]
    fn forward_reference_rejected() {
        let err =
            validate_program(steps(&[("scene", &[], &[]), ("exist", &[5], &[])])).unwrap_err();
        assert!(matches!(err, ProgramError::Malformed(_)));
    }

    #[test]
    fn unknown_function_rejected() {
        let err = validate_program(steps(&[
            ("scene", &[], &[]),
            ("filter_weight", &[0], &["heavy"]),
            ("exist", &[1], &[]),
        ]))
        .unwrap_err();
        assert_eq!(
            err,
            ProgramError::UnsupportedFunction("filter_weight".to_string())
        );
    }

    #[test]
    fn json_program_parses_with_alternate_keys() {
        let value = serde_json::json!({"program": [
            {"type": "scene", "inputs": []},
            {"type": "filter_color", "inputs": [0], "side_inputs": ["red"]},
            {"type": "exist", "inputs": [1]},
        ]});
        let p = parse_program(&value).unwrap();
        assert_eq!(p.steps[1].value_inputs, vec!["red".to_string()]);
    }

    #[test]
    fn empty_scene_exist_is_no() {
        let scene = Scene::from_parts(Arc::new(vocab()), &[]);
        let p = validate_program(steps(&[("scene", &[], &[]), ("exist", &[0], &[])])).unwrap();
        assert_eq!(
            interpret_program(&p, &scene).unwrap(),
            AnswerValue::Bool(false)
        );
    }

    #[test]
    fn fixture_count_and_query() {
        let scene = fixture_scene();
        let count_red = validate_program(steps(&[
            ("scene", &[], &[]),
            ("filter_color", &[0], &["red"]),
            ("count", &[1], &[]),
        ]))
        .unwrap();
        assert_eq!(
            interpret_program(&count_red, &scene).unwrap(),
            AnswerValue::Count(2)
        );
        let query_blue_shape = validate_program(steps(&[
            ("scene", &[], &[]),
            ("filter_color", &[0], &["blue"]),
            ("unique", &[1], &[]),
            ("query_shape", &[2], &[]),
        ]))
        .unwrap();
        assert_eq!(
            interpret_program(&query_blue_shape, &scene).unwrap(),
            AnswerValue::Value("cube".to_string())
        );
    }

    #[test]
    fn unique_is_strict() {
        let scene = fixture_scene();
        let p = validate_program(steps(&[
            ("scene", &[], &[]),
            ("filter_shape", &[0], &["cube"]),
            ("unique", &[1], &[]),
            ("query_color", &[2], &[]),
        ]))
        .unwrap();
        assert_eq!(
            interpret_program(&p, &scene).unwrap_err(),
            InterpretError::NonUniqueReference { step: 2, found: 2 }
        );
    }

    #[test]
    fn same_attribute_excludes_reference() {
        let scene = fixture_scene();
        // Objects sharing the red sphere's color: only the red cube.
        let p = validate_program(steps(&[
            ("scene", &[], &[]),
            ("filter_shape", &[0], &["sphere"]),
            ("unique", &[1], &[]),
            ("same_color", &[2], &[]),
            ("count", &[3], &[]),
        ]))
        .unwrap();
        assert_eq!(
            interpret_program(&p, &scene).unwrap(),
            AnswerValue::Count(1)
        );
    }

    #[test]
    fn three_node_graph_from_two_relates() {
        // size of the object both right of the cyan sphere and left of the
        // small red metal object (the figure-shaped fixture).
        let p = validate_program(steps(&[
            ("scene", &[], &[]),
            ("filter_color", &[0], &["cyan"]),
            ("filter_shape", &[1], &["sphere"]),
            ("unique", &[2], &[]),
            ("relate", &[3], &["right"]),
            ("scene", &[], &[]),
            ("filter_size", &[5], &["small"]),
            ("filter_color", &[6], &["red"]),
            ("filter_material", &[7], &["metal"]),
            ("unique", &[8], &[]),
            ("relate", &[9], &["left"]),
            ("intersect", &[4, 10], &[]),
            ("unique", &[11], &[]),
            ("query_size", &[12], &[]),
        ]))
        .unwrap();
        let g = compile_program(&p, &vocab()).unwrap();
        assert_eq!(g.nodes.len(), 3);
        assert_eq!(g.root, NodeId(0));
        let root = &g.nodes[0];
        assert_eq!(root.class, UNCONSTRAINED_CLASS);
        assert_eq!(root.query_property.as_deref(), Some("size"));
        let sphere = g
            .nodes
            .iter()
            .find(|n| n.class == "sphere")
            .expect("sphere node");
        assert_eq!(sphere.base_properties, vec!["cyan".to_string()]);
        let other = g
            .nodes
            .iter()
            .find(|n| n.id != root.id && n.id != sphere.id)
            .unwrap();
        assert_eq!(
            other.base_properties,
            ["small", "red", "metal"].map(String::from).to_vec()
        );
        assert_eq!(g.edges.len(), 2);
        assert!(g.edges.iter().any(|e| e.from == sphere.id
            && e.to == root.id
            && e.relation == RelationSpec::spatial("right")));
        assert!(validate_graph(&g, &vocab()).is_clean());
    }

    #[test]
    fn bare_count_compiles_to_single_node() {
        let p = validate_program(steps(&[("scene", &[], &[]), ("count", &[0], &[])])).unwrap();
        let g = compile_program(&p, &vocab()).unwrap();
        assert_eq!(g.nodes.len(), 1);
        assert_eq!(g.nodes[0].class, UNCONSTRAINED_CLASS);
        assert_eq!(g.nodes[0].set_query.as_deref(), Some(COUNT_SET_PROPERTY));
    }

    #[test]
    fn exist_compiles_to_plain_node() {
        let p = validate_program(steps(&[
            ("scene", &[], &[]),
            ("filter_shape", &[0], &["sphere"]),
            ("exist", &[1], &[]),
        ]))
        .unwrap();
        let g = compile_program(&p, &vocab()).unwrap();
        assert_eq!(g.nodes.len(), 1);
        assert_eq!(g.nodes[0].class, "sphere");
        assert!(g.nodes[0].query_property.is_none());
        assert!(g.nodes[0].set_query.is_none());
    }

    #[test]
    fn count_comparison_compiles_to_compare_link() {
        let p = validate_program(steps(&[
            ("scene", &[], &[]),
            ("filter_color", &[0], &["red"]),
            ("count", &[1], &[]),
            ("scene", &[], &[]),
            ("filter_color", &[3], &["blue"]),
            ("count", &[4], &[]),
            ("greater_than", &[2, 5], &[]),
        ]))
        .unwrap();
        let g = compile_program(&p, &vocab()).unwrap();
        assert_eq!(g.nodes.len(), 2);
        let qc = g.nodes[0].quantity_compare.expect("compare link");
        assert_eq!(qc.op, CompareOp::Greater);
        assert!(g.nodes[0].set_query.is_none());
        assert!(validate_graph(&g, &vocab()).is_clean());
    }

    #[test]
    fn union_compiles_to_supernode() {
        let p = validate_program(steps(&[
            ("scene", &[], &[]),
            ("filter_shape", &[0], &["cube"]),
            ("scene", &[], &[]),
            ("filter_color", &[2], &["red"]),
            ("union", &[1, 3], &[]),
            ("count", &[4], &[]),
        ]))
        .unwrap();
        let g = compile_program(&p, &vocab()).unwrap();
        assert_eq!(g.nodes.len(), 1);
        match &g.nodes[0].kind {
            NodeKind::SuperNode(alts) => {
                assert_eq!(alts.len(), 2);
                assert_eq!(alts[0].class, "cube");
                assert_eq!(alts[1].properties, vec!["red".to_string()]);
            }
            NodeKind::Regular => panic!("expected supernode"),
        }
        assert!(validate_graph(&g, &vocab()).is_clean());
    }

    #[test]
    fn equal_attribute_compiles_to_answer_edge() {
        let p = validate_program(steps(&[
            ("scene", &[], &[]),
            ("filter_shape", &[0], &["sphere"]),
            ("unique", &[1], &[]),
            ("scene", &[], &[]),
            ("filter_shape", &[3], &["cube"]),
            ("unique", &[4], &[]),
            ("equal_color", &[2, 5], &[]),
        ]))
        .unwrap();
        let g = compile_program(&p, &vocab()).unwrap();
        assert_eq!(g.nodes.len(), 2);
        assert_eq!(g.edges.len(), 1);
        assert!(g.edges[0].answer_bearing);
        assert!(validate_graph(&g, &vocab()).is_clean());
    }

    #[test]
    fn compilation_is_deterministic() {
        let p = validate_program(steps(&[
            ("scene", &[], &[]),
            ("filter_color", &[0], &["red"]),
            ("unique", &[1], &[]),
            ("relate", &[2], &["behind"]),
            ("count", &[3], &[]),
        ]))
        .unwrap();
        let a = compile_program(&p, &vocab()).unwrap();
        let b = compile_program(&p, &vocab()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sampled_programs_validate_and_compile() {
        let vocab = ConceptVocabulary::clevr_extended();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let scene_vocab = Arc::new(vocab.clone());
        for i in 0..500 {
            let program = sample_any(&mut rng, &vocab);
            assert!(program.steps.len() <= 12, "{} steps", program.steps.len());
            let graph = compile_program(&program, &vocab)
                .unwrap_or_else(|e| panic!("case {i}: {e} in {program:?}"));
            assert!(graph.nodes.len() <= 4);
            let report = validate_graph(&graph, &vocab);
            assert!(!report.has_errors(), "case {i}: {report:?}");
            // The interpreter either answers or reports a non-unique
            // reference; it must never panic.
            let scene =
                generate_scene(i, Arc::clone(&scene_vocab), &SceneGenParams::default()).unwrap();
            let _ = interpret_program(&program, &scene);
        }
    }

    #[test]
    fn class_query_is_reserved() {
        // "type" is the reserved class query; compiled CLEVR shape queries
        // go through the shape attribute instead.
        assert_eq!(CLASS_QUERY, "type");
    }
}
