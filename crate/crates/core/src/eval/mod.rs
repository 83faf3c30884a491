//! Benchmark loading, grading, and the headline metrics.

pub mod ablation;

pub use ablation::{committee_ablation, AblationCase, AblationRow};

use std::collections::BTreeMap;
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assets;
use crate::gateway::{CompletionRequest, DecodingConfig, Gateway, GatewayError};
use crate::model::{TaxonomyCode, VerdictLabel};

/// Numeric sub-answers match at this relative tolerance.
const NUMERIC_TOLERANCE: f64 = 0.01;

pub const REQUIRED_COLUMNS: [&str; 6] = [
    "Miscitation",
    "Explanation",
    "Correct Statement",
    "Original Text",
    "Miscite Type",
    "Difficulties",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Difficulty {
    Surface,
    Deep,
}

impl Difficulty {
    fn parse(s: &str) -> Option<Difficulty> {
        match s.trim().to_ascii_uppercase().as_str() {
            "SURFACE" => Some(Difficulty::Surface),
            "DEEP" => Some(Difficulty::Deep),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkInstance {
    pub miscitation_text: String,
    pub explanation: String,
    pub correct_statement: String,
    pub original_text: String,
    pub miscite_type: TaxonomyCode,
    pub difficulty: Difficulty,
    pub source_paper_id: String,
    pub citing_context: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Grade {
    Correct,
    Incorrect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradedSample {
    pub predicted_label: String,
    pub predicted_explanation: String,
    pub grade: Grade,
}

/// A model's answer for one benchmark instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: String,
    pub explanation: String,
}

/// Per-instance cost and outcome of one evaluation run, keyed externally by
/// instance id.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstanceRun {
    pub tokens: u64,
    pub verdict: VerdictLabel,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("missing required column {0:?}")]
    Schema(String),
    #[error("malformed benchmark rows: {0:?}")]
    MalformedRows(Vec<(usize, String)>),
    #[error("instance {0} has {1} samples, expected exactly 3")]
    RaggedSamples(String, usize),
    #[error("token economy undefined: no instance where both runs decided")]
    EmptyIntersection,
    #[error("ablation case {0}: dominant cluster has {1} witnesses, need >= 25")]
    PoolTooSmall(usize, usize),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// Loads the benchmark CSV. Header names are exact; malformed rows are
/// rejected together, each with its 1-based data row number.
pub fn load_benchmark(path: &Path) -> Result<Vec<BenchmarkInstance>, EvalError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers = reader.headers()?.clone();
    let index = |name: &str| -> Result<usize, EvalError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| EvalError::Schema(name.to_string()))
    };
    let columns: Vec<usize> = REQUIRED_COLUMNS
        .iter()
        .map(|c| index(c))
        .collect::<Result<_, _>>()?;
    let source_col = headers.iter().position(|h| h == "Source Paper");
    let context_col = headers.iter().position(|h| h == "Citing Context");

    let mut instances = Vec::new();
    let mut rejected = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 1;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                rejected.push((row_no, e.to_string()));
                continue;
            }
        };
        let field = |c: usize| row.get(c).unwrap_or("").to_string();
        let type_raw = field(columns[4]);
        let Some(miscite_type) = TaxonomyCode::parse(&type_raw) else {
            rejected.push((row_no, format!("unknown miscite type {type_raw:?}")));
            continue;
        };
        let difficulty_raw = field(columns[5]);
        let Some(difficulty) = Difficulty::parse(&difficulty_raw) else {
            rejected.push((row_no, format!("unknown difficulty {difficulty_raw:?}")));
            continue;
        };
        instances.push(BenchmarkInstance {
            miscitation_text: field(columns[0]),
            explanation: field(columns[1]),
            correct_statement: field(columns[2]),
            original_text: field(columns[3]),
            miscite_type,
            difficulty,
            source_paper_id: source_col.map(field).unwrap_or_default(),
            citing_context: context_col.map(field).unwrap_or_default(),
        });
    }
    if !rejected.is_empty() {
        return Err(EvalError::MalformedRows(rejected));
    }
    Ok(instances)
}

/// Relative-tolerance check for numeric answers: |r - a| / max(1, |a|) < 0.01.
pub fn numeric_within_tolerance(reference: f64, answer: f64) -> bool {
    (reference - answer).abs() / f64::max(1.0, answer.abs()) < NUMERIC_TOLERANCE
}

fn sole_number(text: &str) -> Option<f64> {
    let re = Regex::new(r"-?\d+(?:\.\d+)?").unwrap();
    let mut numbers = re.find_iter(text);
    let first = numbers.next()?;
    if numbers.next().is_some() {
        return None;
    }
    let stripped: String = text
        .chars()
        .filter(|c| c.is_ascii_alphabetic())
        .collect();
    if !stripped.is_empty() {
        return None;
    }
    first.as_str().parse().ok()
}

/// Grades one prediction. A label mismatch is INCORRECT without a grader
/// call; purely numeric explanations are settled by the tolerance rule;
/// everything else asks the grader, with one retry on an off-vocabulary
/// reply before defaulting to INCORRECT.
pub fn grade_sample(
    gold: &BenchmarkInstance,
    prediction: &Prediction,
    gateway: &Gateway,
    seed: u64,
    tag: &str,
) -> Result<GradedSample, EvalError> {
    let sample = |grade| GradedSample {
        predicted_label: prediction.label.clone(),
        predicted_explanation: prediction.explanation.clone(),
        grade,
    };

    if !labels_match(gold.miscite_type, &prediction.label) {
        return Ok(sample(Grade::Incorrect));
    }

    if let (Some(gold_n), Some(pred_n)) = (
        sole_number(&gold.explanation),
        sole_number(&prediction.explanation),
    ) {
        let grade = if numeric_within_tolerance(gold_n, pred_n) {
            Grade::Correct
        } else {
            Grade::Incorrect
        };
        return Ok(sample(grade));
    }

    let user = assets::fill(
        assets::GRADER_USER,
        &[
            ("CITING_TEXT", gold.miscitation_text.as_str()),
            ("GOLD_LABEL", gold.miscite_type.name()),
            ("GOLD_EXPLANATION", gold.explanation.as_str()),
            ("PRED_LABEL", prediction.label.as_str()),
            ("PRED_EXPLANATION", prediction.explanation.as_str()),
        ],
    );
    for attempt in 0..2 {
        // The retry nudges the prompt so the deterministic cache cannot
        // replay the off-vocabulary reply.
        let user_text = if attempt == 0 {
            user.clone()
        } else {
            format!("{user}\n\nRespond with exactly one token: CORRECT or INCORRECT.")
        };
        let request = CompletionRequest::text(
            assets::GRADER_SYSTEM,
            user_text,
            DecodingConfig::deterministic(seed),
            tag,
        );
        let reply = gateway.complete(&request)?.remove(0).0;
        match reply.trim().to_ascii_uppercase().as_str() {
            "CORRECT" => return Ok(sample(Grade::Correct)),
            "INCORRECT" => return Ok(sample(Grade::Incorrect)),
            other => log::warn!("grader replied {other:?} (attempt {})", attempt + 1),
        }
    }
    Ok(sample(Grade::Incorrect))
}

fn labels_match(gold: TaxonomyCode, predicted: &str) -> bool {
    TaxonomyCode::parse(predicted) == Some(gold)
}

/// Fraction of instances with at least one CORRECT among exactly three
/// samples. Sample order within an instance is irrelevant.
pub fn acc_pass_at_3(grades: &BTreeMap<String, Vec<GradedSample>>) -> Result<f64, EvalError> {
    if grades.is_empty() {
        return Ok(0.0);
    }
    for (id, samples) in grades {
        if samples.len() != 3 {
            return Err(EvalError::RaggedSamples(id.clone(), samples.len()));
        }
    }
    let passed = grades
        .values()
        .filter(|s| s.iter().any(|g| g.grade == Grade::Correct))
        .count();
    Ok(passed as f64 / grades.len() as f64)
}

/// TokenEcon = 1 - mean(Tok_agent) / mean(Tok_full) over instances where
/// both runs returned a non-abstaining verdict.
pub fn token_economy(
    full: &BTreeMap<String, InstanceRun>,
    agent: &BTreeMap<String, InstanceRun>,
) -> Result<f64, EvalError> {
    let decided = |v: VerdictLabel| matches!(v, VerdictLabel::Supported | VerdictLabel::Miscitation);
    let mut full_sum = 0u64;
    let mut agent_sum = 0u64;
    let mut n = 0u64;
    for (id, f) in full {
        let Some(a) = agent.get(id) else { continue };
        if decided(f.verdict) && decided(a.verdict) {
            full_sum += f.tokens;
            agent_sum += a.tokens;
            n += 1;
        }
    }
    if n == 0 || full_sum == 0 {
        return Err(EvalError::EmptyIntersection);
    }
    let mean_full = full_sum as f64 / n as f64;
    let mean_agent = agent_sum as f64 / n as f64;
    Ok(1.0 - mean_agent / mean_full)
}
