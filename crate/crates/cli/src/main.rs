//! `uncord`: answer structured questions over symbolic scenes, evaluate
//! corpora with a per-family accuracy breakdown, and generate scenes,
//! questions and training pairs.
//!
//! Exit codes: 0 answered, 2 usage or input errors, 3 unsupported concept,
//! 4 question not grounded in the scene, 5 ambiguous reference.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use uncord_core::answer::QuestionFamily;
use uncord_core::clevr::{
    compile_program, interpret_program, parse_program, sample_program_for_scene,
};
use uncord_core::datagen::{
    emit_training_pairs, enhance_questions, generate_base_pairs, normalize_synonyms,
    replace_vocabulary, PairManifest, ReplacementMode, ReplacementModeName, TEMPLATE_VERSION,
};
use uncord_core::engine::{answer, AnswerConfig, AnswerRecord, AnswerStatus};
use uncord_core::estimator::{noisy_estimators, oracle_estimators, ErrorModel};
use uncord_core::eval::{evaluate, EvalOptions, EvalQuestion};
use uncord_core::graph::{validate_graph, QuestionGraph};
use uncord_core::scene::{generate_scene, parse_scene_set, Scene, SceneGenParams};
use uncord_core::tokens::{deserialize_tokens, TokenSequence};
use uncord_core::vocab::ConceptVocabulary;

const EXIT_INPUT: u8 = 2;
const EXIT_UNSUPPORTED: u8 = 3;
const EXIT_NOT_GROUNDED: u8 = 4;
const EXIT_AMBIGUOUS: u8 = 5;

#[derive(Parser)]
#[command(
    name = "uncord",
    version,
    about = "Question answering over symbolic scenes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Answer one question against one scene.
    Answer(AnswerArgs),
    /// Evaluate a question corpus and print the accuracy breakdown.
    Eval(EvalArgs),
    /// Generate scenes, questions, or training pairs.
    #[command(subcommand)]
    Gen(GenCommand),
}

#[derive(Args)]
struct AnswerArgs {
    /// Scene file (single scene JSON).
    #[arg(long)]
    scene: PathBuf,
    /// Question file: a functional program, a question-graph JSON, or a
    /// serialized token line.
    #[arg(long)]
    question: PathBuf,
    /// Question format (default: sniffed from the content).
    #[arg(long, default_value = "auto")]
    format: QuestionFormat,
    /// Vocabulary: "clevr", "clevr-extended", or a vocabulary JSON path.
    #[arg(long, default_value = "clevr")]
    vocab: String,
    /// Print the elaborated answer alongside the short one.
    #[arg(long)]
    full: bool,
    /// Print the answer record with its estimator trace as JSON.
    #[arg(long)]
    trace: bool,
    /// Error-model JSON enabling noisy estimators.
    #[arg(long)]
    noise: Option<PathBuf>,
    /// Noise seed (defaults to $UNCORD_SEED, then 0).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum QuestionFormat {
    Auto,
    Program,
    Graph,
    Tokens,
}

#[derive(Args)]
struct EvalArgs {
    /// Scene collection ({"scenes": [...]}), CLEVR-compatible.
    #[arg(long)]
    scenes: PathBuf,
    /// Question collection ({"questions": [...]}), each entry carrying a
    /// program or graph, a scene index, and (unless --keys) an answer.
    #[arg(long)]
    questions: PathBuf,
    /// Answer key file, one answer per line, overriding in-file answers.
    #[arg(long)]
    keys: Option<PathBuf>,
    #[arg(long, default_value = "clevr")]
    vocab: String,
    /// Read official CLEVR scene/question files (forces the CLEVR
    /// vocabulary).
    #[arg(long)]
    clevr: bool,
    #[arg(long)]
    noise: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write the report JSON here.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Write the per-question log (JSON lines) here.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Subcommand)]
enum GenCommand {
    /// Generate a scene collection.
    Scenes(GenScenesArgs),
    /// Generate (question, scene, answer) corpora over generated scenes.
    Questions(GenQuestionsArgs),
    /// Generate aligned (question text, serialized graph) training pairs.
    Pairs(GenPairsArgs),
}

#[derive(Args)]
struct GenScenesArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "clevr")]
    vocab: String,
    #[arg(long, default_value_t = 3)]
    min_objects: usize,
    #[arg(long, default_value_t = 8)]
    max_objects: usize,
}

#[derive(Args)]
struct GenQuestionsArgs {
    /// Scene collection to ask about.
    #[arg(long)]
    scenes: PathBuf,
    /// Questions per scene.
    #[arg(long, default_value_t = 1)]
    per_scene: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "clevr")]
    vocab: String,
    /// Families to sample: "all" or a comma list
    /// (exist,count,compare_numbers,query_attribute,compare_attribute).
    #[arg(long, default_value = "all")]
    families: String,
}

#[derive(Args)]
struct GenPairsArgs {
    /// Base pair count before enhancement.
    #[arg(long)]
    n: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (questions.txt, graphs.txt, vocab.txt,
    /// manifest.json).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "none")]
    mode: ModeArg,
    /// Emit enhanced questions (same->different, quantifiers, elementals).
    #[arg(long)]
    enhance: bool,
    #[arg(long, default_value = "clevr")]
    vocab: String,
    /// Replacement pool vocabulary JSON (defaults to a synthetic pool at
    /// the mode's scale).
    #[arg(long)]
    pools: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum ModeArg {
    None,
    Minimal,
    Extended,
    Vglike,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Answer(args) => cmd_answer(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Gen(GenCommand::Scenes(args)) => cmd_gen_scenes(args),
        Command::Gen(GenCommand::Questions(args)) => cmd_gen_questions(args),
        Command::Gen(GenCommand::Pairs(args)) => cmd_gen_pairs(args),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}

fn default_seed(explicit: Option<u64>) -> u64 {
    explicit
        .or_else(|| {
            std::env::var("UNCORD_SEED")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or(0)
}

fn load_vocab(spec: &str) -> Result<Arc<ConceptVocabulary>> {
    let vocab = match spec {
        "clevr" => ConceptVocabulary::clevr(),
        "clevr-extended" => ConceptVocabulary::clevr_extended(),
        path => ConceptVocabulary::load(Path::new(path))
            .with_context(|| format!("loading vocabulary from {path}"))?,
    };
    Ok(Arc::new(vocab))
}

fn load_json(path: &Path) -> Result<Value> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load_noise(path: Option<&PathBuf>) -> Result<Option<ErrorModel>> {
    match path {
        Some(p) => {
            Ok(Some(ErrorModel::load(p).with_context(|| {
                format!("loading error model {}", p.display())
            })?))
        }
        None => Ok(None),
    }
}

/// Parse a question in any supported format into a graph.
fn load_question(
    path: &Path,
    format: QuestionFormat,
    vocab: &ConceptVocabulary,
) -> Result<QuestionGraph> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let trimmed = text.trim();
    let format = match format {
        QuestionFormat::Auto => {
            if trimmed.starts_with('{') || trimmed.starts_with('[') {
                let value: Value = serde_json::from_str(trimmed)
                    .with_context(|| format!("parsing {}", path.display()))?;
                if value.get("nodes").is_some() {
                    QuestionFormat::Graph
                } else {
                    QuestionFormat::Program
                }
            } else {
                QuestionFormat::Tokens
            }
        }
        other => other,
    };
    let graph = match format {
        QuestionFormat::Program => {
            let value: Value = serde_json::from_str(trimmed)
                .with_context(|| format!("parsing {}", path.display()))?;
            let program = parse_program(&value)?;
            compile_program(&program, vocab)?
        }
        QuestionFormat::Graph => QuestionGraph::from_json_str(trimmed)?,
        QuestionFormat::Tokens => {
            let line = trimmed
                .lines()
                .next()
                .context("token question file is empty")?;
            let tokens = TokenSequence::from_str(line).expect("infallible");
            deserialize_tokens(&tokens)?
        }
        QuestionFormat::Auto => unreachable!("resolved above"),
    };
    let report = validate_graph(&graph, vocab);
    if report.has_errors() {
        let first = report.errors().next().expect("has_errors");
        bail!("invalid question graph: {} ({})", first.rule, first.message);
    }
    Ok(graph)
}

fn status_code(record: &AnswerRecord) -> ExitCode {
    match record.status {
        AnswerStatus::Answered => ExitCode::SUCCESS,
        AnswerStatus::UnsupportedConcept(_) => ExitCode::from(EXIT_UNSUPPORTED),
        AnswerStatus::NotGrounded { .. } => ExitCode::from(EXIT_NOT_GROUNDED),
        AnswerStatus::Ambiguous => ExitCode::from(EXIT_AMBIGUOUS),
    }
}

fn cmd_answer(args: AnswerArgs) -> Result<ExitCode> {
    let vocab = load_vocab(&args.vocab)?;
    let scene_json = load_json(&args.scene)?;
    let scene = Scene::from_json(&scene_json, Arc::clone(&vocab))?;
    let graph = load_question(&args.question, args.format, &vocab)?;
    let noise = load_noise(args.noise.as_ref())?;
    let cfg = AnswerConfig {
        verbose: args.trace,
        ..AnswerConfig::default()
    };

    let oracle = oracle_estimators(&scene);
    let record = match noise {
        Some(model) => {
            let noisy = noisy_estimators(&oracle, model, default_seed(args.seed));
            answer(&graph, &noisy, &cfg)
        }
        None => answer(&graph, &oracle, &cfg),
    };

    if args.full && record.full != record.short {
        println!("{} [full: {}]", record.short, record.full);
    } else {
        println!("{}", record.short);
    }
    if args.trace {
        println!(
            "{}",
            serde_json::to_string_pretty(&record.to_json(true)).expect("record serializes")
        );
    }
    if record.status != AnswerStatus::Answered {
        eprintln!("{}", record.full);
    }
    Ok(status_code(&record))
}

/// Read a question collection: `{"questions": [...]}` or a bare array;
/// entries carry `program` or `graph`, a scene index
/// (`image_index`/`scene_index`), and an `answer` key.
fn load_eval_questions(
    path: &Path,
    keys: Option<&PathBuf>,
    vocab: &ConceptVocabulary,
) -> Result<Vec<EvalQuestion>> {
    let value = load_json(path)?;
    let list = value
        .get("questions")
        .and_then(Value::as_array)
        .or_else(|| value.as_array())
        .context("question file must hold a question array")?;
    let keys: Option<Vec<String>> = match keys {
        Some(p) => {
            let text =
                std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Some(text.lines().map(|l| l.trim().to_string()).collect())
        }
        None => None,
    };
    if let Some(k) = &keys {
        if k.len() != list.len() {
            bail!(
                "answer key count {} does not match question count {}",
                k.len(),
                list.len()
            );
        }
    }
    let mut out = Vec::with_capacity(list.len());
    for (i, q) in list.iter().enumerate() {
        let graph = if let Some(g) = q.get("graph") {
            QuestionGraph::from_json(g.clone())?
        } else if q.get("program").is_some() {
            let program = parse_program(q).with_context(|| format!("question {i}"))?;
            compile_program(&program, vocab).with_context(|| format!("question {i}"))?
        } else {
            bail!("question {i} carries neither 'program' nor 'graph'");
        };
        let scene_index =
            q.get("image_index")
                .or_else(|| q.get("scene_index"))
                .and_then(Value::as_u64)
                .with_context(|| format!("question {i} lacks a scene index"))? as usize;
        let key = match &keys {
            Some(k) => k[i].clone(),
            None => q
                .get("answer")
                .and_then(Value::as_str)
                .with_context(|| format!("question {i} lacks an answer key"))?
                .to_string(),
        };
        out.push(EvalQuestion {
            graph,
            scene_index,
            key,
        });
    }
    Ok(out)
}

fn cmd_eval(args: EvalArgs) -> Result<ExitCode> {
    let vocab = if args.clevr {
        Arc::new(ConceptVocabulary::clevr())
    } else {
        load_vocab(&args.vocab)?
    };
    let scenes_json = load_json(&args.scenes)?;
    let scenes = parse_scene_set(&scenes_json, &vocab)?;
    let questions = load_eval_questions(&args.questions, args.keys.as_ref(), &vocab)?;
    let opts = EvalOptions {
        noise: load_noise(args.noise.as_ref())?,
        seed: default_seed(args.seed),
        config: AnswerConfig::default(),
    };
    let (report, log) = evaluate(&questions, &scenes, &opts)?;
    print!("{}", report.render_table());
    if let Some(path) = &args.report {
        std::fs::write(path, serde_json::to_string_pretty(&report.to_json())?)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(path) = &args.log {
        let mut text = String::new();
        for entry in &log {
            text.push_str(&serde_json::to_string(entry)?);
            text.push('\n');
        }
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_gen_scenes(args: GenScenesArgs) -> Result<ExitCode> {
    let vocab = load_vocab(&args.vocab)?;
    let seed = default_seed(args.seed);
    let params = SceneGenParams::default().with_objects(args.min_objects, args.max_objects);
    let mut scenes = Vec::with_capacity(args.n);
    for i in 0..args.n {
        let scene = generate_scene(
            uncord_core::eval::question_seed(seed, i),
            Arc::clone(&vocab),
            &params,
        )?;
        scenes.push(scene.to_json());
    }
    let out = json!({
        "manifest": {
            "seed": seed,
            "count": args.n,
            "min_objects": args.min_objects,
            "max_objects": args.max_objects,
        },
        "scenes": scenes,
    });
    std::fs::write(&args.out, serde_json::to_string_pretty(&out)?)
        .with_context(|| format!("writing {}", args.out.display()))?;
    println!("wrote {} scenes to {}", args.n, args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn parse_families(spec: &str) -> Result<Vec<QuestionFamily>> {
    if spec == "all" {
        return Ok(QuestionFamily::EVAL_FAMILIES.to_vec());
    }
    spec.split(',')
        .map(|name| {
            serde_json::from_value(Value::String(name.trim().to_string()))
                .with_context(|| format!("unknown family '{name}'"))
        })
        .collect()
}

fn cmd_gen_questions(args: GenQuestionsArgs) -> Result<ExitCode> {
    let vocab = load_vocab(&args.vocab)?;
    let seed = default_seed(args.seed);
    let scenes_json = load_json(&args.scenes)?;
    let scenes = parse_scene_set(&scenes_json, &vocab)?;
    if scenes.is_empty() {
        bail!("scene file holds no scenes");
    }
    let families = parse_families(&args.families)?;
    let mut questions = Vec::new();
    for (scene_index, scene) in scenes.iter().enumerate() {
        let mut rng =
            ChaCha8Rng::seed_from_u64(uncord_core::eval::question_seed(seed, scene_index));
        let mut emitted = 0usize;
        let mut attempts = 0usize;
        while emitted < args.per_scene && attempts < args.per_scene * 20 {
            attempts += 1;
            let family = families[emitted % families.len()];
            let program = sample_program_for_scene(&mut rng, &vocab, Some(scene), family);
            let Ok(value) = interpret_program(&program, scene) else {
                continue;
            };
            questions.push(json!({
                "program": program.to_json(),
                "scene_index": scene_index,
                "answer": value.normalized(&vocab),
                "family": family,
            }));
            emitted += 1;
        }
    }
    let out = json!({
        "manifest": {
            "seed": seed,
            "per_scene": args.per_scene,
            "families": args.families,
            "count": questions.len(),
        },
        "questions": questions,
    });
    std::fs::write(&args.out, serde_json::to_string_pretty(&out)?)
        .with_context(|| format!("writing {}", args.out.display()))?;
    println!(
        "wrote {} questions to {}",
        out["questions"].as_array().map_or(0, Vec::len),
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_gen_pairs(args: GenPairsArgs) -> Result<ExitCode> {
    let vocab = load_vocab(&args.vocab)?;
    let seed = default_seed(args.seed);
    let mode_name = match args.mode {
        ModeArg::None => ReplacementModeName::None,
        ModeArg::Minimal => ReplacementModeName::Minimal,
        ModeArg::Extended => ReplacementModeName::Extended,
        ModeArg::Vglike => ReplacementModeName::VgLike,
    };
    let mut mode = ReplacementMode::by_name(mode_name);
    if let Some(path) = &args.pools {
        mode.pools = ConceptVocabulary::load(path)
            .with_context(|| format!("loading pool vocabulary {}", path.display()))?;
    }

    let base = generate_base_pairs(&vocab, args.n, seed);
    let mut pairs = Vec::with_capacity(base.len());
    for (i, pair) in base.iter().enumerate() {
        let normalized = normalize_synonyms(pair, &vocab);
        let replaced = replace_vocabulary(
            &normalized,
            &mode,
            &vocab,
            uncord_core::eval::question_seed(seed, i),
        )?;
        pairs.push(replaced);
    }
    let text_vocab = if mode_name == ReplacementModeName::None {
        (*vocab).clone()
    } else {
        mode.pools.clone()
    };
    let total = if args.enhance {
        enhance_questions(&pairs, &text_vocab, seed)
    } else {
        pairs
    };
    let manifest = PairManifest {
        mode: mode_name,
        seed,
        base_count: args.n,
        total_count: total.len(),
        enhanced: args.enhance,
        template_version: TEMPLATE_VERSION,
    };
    emit_training_pairs(&total, &args.out, &manifest)?;
    println!(
        "wrote {} pairs ({} base) to {}",
        total.len(),
        args.n,
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}
