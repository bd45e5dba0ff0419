//! Batch evaluation: answer a question corpus against answer keys and
//! report per-family accuracy with a failure breakdown.
//!
//! Questions are distributed across workers and merged in input order;
//! per-question noise seeds are keyed by question index, so parallelism
//! never changes a single output byte.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::answer::{normalize_answer_text, QuestionFamily};
use crate::clevr::{interpret_program, sample_any_for_scene};
use crate::engine::{answer, AnswerConfig, AnswerRecord};
use crate::estimator::{noisy_estimators, oracle_estimators, ErrorModel};
use crate::graph::QuestionGraph;
use crate::scene::{generate_scene, Scene, SceneGenParams};
use crate::vocab::ConceptVocabulary;

/// One corpus entry: a compiled question, the scene it refers to, and the
/// expected answer.
#[derive(Debug, Clone)]
pub struct EvalQuestion {
    pub graph: QuestionGraph,
    pub scene_index: usize,
    pub key: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuestionLog {
    pub index: usize,
    pub family: QuestionFamily,
    pub short: String,
    pub expected: String,
    pub correct: bool,
    pub status: String,
    pub perturbed_calls: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct FamilyStats {
    pub total: usize,
    pub correct: usize,
}

impl FamilyStats {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct FailureBreakdown {
    pub wrong_answer: usize,
    pub unsupported_concept: usize,
    pub not_grounded: usize,
    pub ambiguous: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub total: usize,
    pub correct: usize,
    pub overall: f64,
    pub families: BTreeMap<QuestionFamily, FamilyStats>,
    pub failures: FailureBreakdown,
}

impl EvalReport {
    /// Rebuild the report from a per-question log; the published report must
    /// always equal this recomputation.
    pub fn from_log(log: &[QuestionLog]) -> EvalReport {
        let mut families: BTreeMap<QuestionFamily, FamilyStats> = BTreeMap::new();
        let mut failures = FailureBreakdown::default();
        let mut correct = 0usize;
        for entry in log {
            let stats = families.entry(entry.family).or_default();
            stats.total += 1;
            if entry.correct {
                stats.correct += 1;
                correct += 1;
            } else {
                match entry.status.as_str() {
                    "unsupported_concept" => failures.unsupported_concept += 1,
                    "not_grounded" => failures.not_grounded += 1,
                    "ambiguous" => failures.ambiguous += 1,
                    _ => failures.wrong_answer += 1,
                }
            }
        }
        let total = log.len();
        EvalReport {
            total,
            correct,
            overall: if total == 0 {
                0.0
            } else {
                correct as f64 / total as f64
            },
            families,
            failures,
        }
    }

    pub fn family(&self, family: QuestionFamily) -> FamilyStats {
        self.families.get(&family).copied().unwrap_or_default()
    }

    pub fn to_json(&self) -> Value {
        let families: serde_json::Map<String, Value> = self
            .families
            .iter()
            .map(|(f, s)| {
                (
                    serde_json::to_value(f)
                        .expect("family serializes")
                        .as_str()
                        .expect("family is a string")
                        .to_string(),
                    json!({
                        "total": s.total,
                        "correct": s.correct,
                        "accuracy": s.accuracy(),
                    }),
                )
            })
            .collect();
        json!({
            "overall": self.overall,
            "total": self.total,
            "correct": self.correct,
            "families": families,
            "failures": self.failures,
        })
    }

    /// Plain-text table, one row per family plus the overall line.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<20} {:>8} {:>8} {:>9}\n",
            "Family", "Total", "Correct", "Accuracy"
        ));
        for family in QuestionFamily::EVAL_FAMILIES {
            if let Some(stats) = self.families.get(&family) {
                out.push_str(&format!(
                    "{:<20} {:>8} {:>8} {:>9.4}\n",
                    family.label(),
                    stats.total,
                    stats.correct,
                    stats.accuracy()
                ));
            }
        }
        if let Some(stats) = self.families.get(&QuestionFamily::Elemental) {
            out.push_str(&format!(
                "{:<20} {:>8} {:>8} {:>9.4}\n",
                "Elemental",
                stats.total,
                stats.correct,
                stats.accuracy()
            ));
        }
        out.push_str(&format!(
            "{:<20} {:>8} {:>8} {:>9.4}\n",
            "Overall", self.total, self.correct, self.overall
        ));
        out
    }
}

#[derive(Debug, Clone, Default)]
pub struct EvalOptions {
    pub noise: Option<ErrorModel>,
    pub seed: u64,
    pub config: AnswerConfig,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("question {index} references scene {scene} but only {scenes} scenes are loaded")]
    Misaligned {
        index: usize,
        scene: usize,
        scenes: usize,
    },
}

/// Per-question noise sub-seed, independent of worker scheduling.
pub fn question_seed(base: u64, index: usize) -> u64 {
    let mut h = base ^ 0x517cc1b727220a95;
    h ^= (index as u64).wrapping_mul(0x2545f4914f6cdd1d);
    h ^= h >> 29;
    h.wrapping_mul(0x9e3779b97f4a7c15)
}

/// Answer one corpus question (estimator stack assembled per its index).
pub fn answer_question(
    question: &EvalQuestion,
    scenes: &[Scene],
    opts: &EvalOptions,
    index: usize,
) -> AnswerRecord {
    let scene = &scenes[question.scene_index];
    let oracle = oracle_estimators(scene);
    match &opts.noise {
        Some(model) => {
            let noisy = noisy_estimators(&oracle, model.clone(), question_seed(opts.seed, index));
            answer(&question.graph, &noisy, &opts.config)
        }
        None => answer(&question.graph, &oracle, &opts.config),
    }
}

/// Evaluate a corpus; answers are matched against keys after normalization.
pub fn evaluate(
    questions: &[EvalQuestion],
    scenes: &[Scene],
    opts: &EvalOptions,
) -> Result<(EvalReport, Vec<QuestionLog>), EvalError> {
    if questions.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    for (index, q) in questions.iter().enumerate() {
        if q.scene_index >= scenes.len() {
            return Err(EvalError::Misaligned {
                index,
                scene: q.scene_index,
                scenes: scenes.len(),
            });
        }
    }
    let log: Vec<QuestionLog> = questions
        .par_iter()
        .enumerate()
        .map(|(index, q)| {
            let record = answer_question(q, scenes, opts, index);
            let vocab = &scenes[q.scene_index].vocabulary;
            let expected = normalize_answer_text(&q.key, vocab);
            let short = normalize_answer_text(&record.short, vocab);
            QuestionLog {
                index,
                family: QuestionFamily::classify(&q.graph),
                correct: short == expected,
                short,
                expected,
                status: record.status.label().to_string(),
                perturbed_calls: record.perturbed_calls(),
            }
        })
        .collect();
    Ok((EvalReport::from_log(&log), log))
}

/// Generate a hermetic corpus: one scene per question, scene-grounded
/// sampled programs, keys from the reference interpreter. Programs whose
/// interpretation hits a non-unique reference are resampled.
pub fn generate_corpus(
    vocab: &ConceptVocabulary,
    n_questions: usize,
    seed: u64,
    params: &SceneGenParams,
) -> (Vec<Scene>, Vec<EvalQuestion>) {
    use rand::SeedableRng;
    let shared = std::sync::Arc::new(vocab.clone());
    let mut scenes = Vec::with_capacity(n_questions);
    let mut questions = Vec::with_capacity(n_questions);
    let mut attempt = 0u64;
    while questions.len() < n_questions {
        let scene_seed = question_seed(seed, attempt as usize);
        attempt += 1;
        let Ok(scene) = generate_scene(scene_seed, std::sync::Arc::clone(&shared), params) else {
            continue;
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(scene_seed ^ 0xabcdef);
        let mut found = None;
        for _ in 0..8 {
            let program = sample_any_for_scene(&mut rng, vocab, &scene);
            let Ok(value) = interpret_program(&program, &scene) else {
                continue;
            };
            let Ok(graph) = crate::clevr::compile_program(&program, vocab) else {
                continue;
            };
            found = Some((graph, value.normalized(vocab)));
            break;
        }
        let Some((graph, key)) = found else { continue };
        questions.push(EvalQuestion {
            graph,
            scene_index: scenes.len(),
            key,
        });
        scenes.push(scene);
    }
    (scenes, questions)
}
