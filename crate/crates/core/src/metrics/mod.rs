//! Multi-task scoring of prediction files against reference records:
//! n-gram captioning metrics, binary classification, count errors, and
//! grid-localization metrics, plus the free-text parsers they require.

mod classify;
mod ngram;
mod parse;
mod tokenize;

pub use classify::{
    binary_metrics, count_metrics, localization_metrics, BinaryMetrics, CountMetrics,
    LocalizationMetrics,
};
pub use ngram::{bleu, cider_d, meteor, modified_precisions, rouge_l, MAX_NGRAM};
pub use parse::{
    parse_binary, parse_cells, parse_counts, parse_prediction, CategoryLexicon, ParsedAnswer,
};
pub use tokenize::{tokenize, TokenSeq};

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::changemap::CellSet;
use crate::instructgen::{read_records, DatasetError, InstructionRecord, Role, TaskType};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("at least one reference is required")]
    NoReferences,
    #[error("max_n must lie in 1..=4, got {0}")]
    InvalidMaxN(usize),
    #[error("input list is empty")]
    EmptyInput,
    #[error("candidate and reference id sets differ")]
    IdSetMismatch,
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: line {line}: {message}")]
    Schema {
        path: String,
        line: usize,
        message: String,
    },
    #[error("duplicate prediction for id {id:?} task {task} (line {line})")]
    DuplicatePrediction {
        id: String,
        task: String,
        line: usize,
    },
    #[error("prediction id {id:?} for task {task} has no reference")]
    UnknownPredictionId { id: String, task: String },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

/// One model output line: `{"id","task_type","text"}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub task_type: TaskType,
    pub text: String,
}

/// Reads a predictions JSONL file, reporting the offending line on schema
/// violations and rejecting duplicate (id, task) entries.
pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>, MetricsError> {
    let text = std::fs::read_to_string(path).map_err(|source| MetricsError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let pred: Prediction = serde_json::from_str(line).map_err(|e| MetricsError::Schema {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if !seen.insert((pred.id.clone(), pred.task_type)) {
            return Err(MetricsError::DuplicatePrediction {
                id: pred.id,
                task: pred.task_type.as_str().to_string(),
                line: i + 1,
            });
        }
        out.push(pred);
    }
    Ok(out)
}

/// Per-task slice of the report: how many reference items were scored or
/// left unmatched, and the task's metric values (all finite).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub evaluated: usize,
    pub skipped: usize,
    pub metrics: BTreeMap<String, f64>,
}

/// Evaluation report: one section per task present in the references, fixed
/// metric keys within each section.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub tasks: BTreeMap<String, TaskReport>,
}

impl EvalReport {
    pub fn task(&self, task: TaskType) -> Option<&TaskReport> {
        self.tasks.get(task.as_str())
    }

    pub fn metric(&self, task: TaskType, name: &str) -> Option<f64> {
        self.task(task).and_then(|t| t.metrics.get(name)).copied()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.tasks).expect("report serializes")
    }

    /// One flat `task,metric,value` row per metric.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("task,metric,value\n");
        for (task, report) in &self.tasks {
            for (metric, value) in &report.metrics {
                out.push_str(&format!("{task},{metric},{value}\n"));
            }
        }
        out
    }
}

/// Reference side of one task, grouped by pair id.
#[derive(Debug, Default)]
struct TaskRefs {
    /// Assistant texts per id (captioning-style tasks keep all of them).
    answers: BTreeMap<String, Vec<String>>,
}

fn assistant_texts(record: &InstructionRecord) -> Vec<String> {
    record
        .turns
        .iter()
        .filter(|t| t.role == Role::Assistant)
        .map(|t| t.text.clone())
        .collect()
}

/// Scores a prediction file against a reference dataset file. References are
/// grouped by (task, id); a reference group with no matching prediction
/// counts as skipped. The structured tasks re-derive their ground truth by
/// parsing the reference answers with the same grammars used for
/// predictions.
pub fn evaluate(
    predictions_path: &Path,
    references_path: &Path,
    lexicon: &CategoryLexicon,
) -> Result<EvalReport, MetricsError> {
    let predictions = read_predictions(predictions_path)?;
    let records = read_records(references_path)?;

    let mut refs: BTreeMap<TaskType, TaskRefs> = BTreeMap::new();
    for record in &records {
        refs.entry(record.task_type)
            .or_default()
            .answers
            .entry(record.id.clone())
            .or_default()
            .extend(assistant_texts(record));
    }

    let mut preds: BTreeMap<TaskType, BTreeMap<String, String>> = BTreeMap::new();
    for p in &predictions {
        if p.task_type == TaskType::Multiturn {
            log::warn!("multiturn predictions are not scored; ignoring id {}", p.id);
            continue;
        }
        match refs.get(&p.task_type) {
            Some(task_refs) if task_refs.answers.contains_key(&p.id) => {
                preds
                    .entry(p.task_type)
                    .or_default()
                    .insert(p.id.clone(), p.text.clone());
            }
            _ => {
                return Err(MetricsError::UnknownPredictionId {
                    id: p.id.clone(),
                    task: p.task_type.as_str().to_string(),
                });
            }
        }
    }

    let mut report = EvalReport::default();
    for (task, task_refs) in &refs {
        let empty = BTreeMap::new();
        let task_preds = preds.get(task).unwrap_or(&empty);
        let section = match task {
            TaskType::Caption | TaskType::OpenQa => {
                score_text_task(&task_refs.answers, task_preds)?
            }
            TaskType::Binary => score_binary(&task_refs.answers, task_preds),
            TaskType::Quant => score_quant(&task_refs.answers, task_preds, lexicon)?,
            TaskType::Localize => score_localize(&task_refs.answers, task_preds, lexicon)?,
            TaskType::Multiturn => continue,
        };
        report.tasks.insert(task.as_str().to_string(), section);
    }
    Ok(report)
}

fn score_text_task(
    refs: &BTreeMap<String, Vec<String>>,
    preds: &BTreeMap<String, String>,
) -> Result<TaskReport, MetricsError> {
    let mut bleu_sums = [0.0f64; MAX_NGRAM];
    let mut rouge_sum = 0.0;
    let mut meteor_sum = 0.0;
    let mut cider_cands = BTreeMap::new();
    let mut cider_refs = BTreeMap::new();
    let mut evaluated = 0usize;

    for (id, answers) in refs {
        let Some(text) = preds.get(id) else { continue };
        let cand = tokenize(text);
        let ref_seqs: Vec<TokenSeq> = answers.iter().map(|a| tokenize(a)).collect();
        let b = bleu(&cand, &ref_seqs, MAX_NGRAM)?;
        for (sum, value) in bleu_sums.iter_mut().zip(&b) {
            *sum += value;
        }
        rouge_sum += rouge_l(&cand, &ref_seqs)?;
        meteor_sum += meteor(&cand, &ref_seqs)?;
        cider_cands.insert(id.clone(), cand);
        cider_refs.insert(id.clone(), ref_seqs);
        evaluated += 1;
    }

    let n = evaluated as f64;
    let mut metrics = BTreeMap::new();
    for (k, sum) in bleu_sums.iter().enumerate() {
        metrics.insert(
            format!("bleu_{}", k + 1),
            if evaluated == 0 { 0.0 } else { sum / n },
        );
    }
    metrics.insert(
        "rouge_l".to_string(),
        if evaluated == 0 { 0.0 } else { rouge_sum / n },
    );
    metrics.insert(
        "meteor".to_string(),
        if evaluated == 0 { 0.0 } else { meteor_sum / n },
    );
    metrics.insert(
        "cider_d".to_string(),
        if evaluated == 0 {
            0.0
        } else {
            cider_d(&cider_cands, &cider_refs)?
        },
    );
    Ok(TaskReport {
        evaluated,
        skipped: refs.len() - evaluated,
        metrics,
    })
}

fn score_binary(
    refs: &BTreeMap<String, Vec<String>>,
    preds: &BTreeMap<String, String>,
) -> TaskReport {
    let mut pairs = Vec::new();
    let mut skipped = 0usize;
    for (id, answers) in refs {
        let truth = answers.first().and_then(|a| parse_binary(a));
        let Some(truth) = truth else {
            log::warn!("reference answer for binary id {id} is unparseable; skipped");
            skipped += 1;
            continue;
        };
        let Some(text) = preds.get(id) else {
            skipped += 1;
            continue;
        };
        // a failed parse scores as the wrong class
        let pred = parse_binary(text).unwrap_or(!truth);
        pairs.push((pred, truth));
    }
    let metrics = match binary_metrics(&pairs) {
        Ok(m) => m.to_map(),
        Err(_) => BinaryMetrics {
            accuracy: 0.0,
            precision: 0.0,
            recall: 0.0,
            f1: 0.0,
        }
        .to_map(),
    };
    TaskReport {
        evaluated: pairs.len(),
        skipped,
        metrics,
    }
}

fn score_quant(
    refs: &BTreeMap<String, Vec<String>>,
    preds: &BTreeMap<String, String>,
    lexicon: &CategoryLexicon,
) -> Result<TaskReport, MetricsError> {
    let mut pooled: Vec<(i64, i64)> = Vec::new();
    let mut per_cat: BTreeMap<&str, Vec<(i64, i64)>> = BTreeMap::new();
    let mut evaluated = 0usize;
    for (id, answers) in refs {
        let Some(text) = preds.get(id) else { continue };
        let Some(answer) = answers.first() else { continue };
        let truth = parse_counts(answer, lexicon);
        let guess = parse_counts(text, lexicon);
        for name in lexicon.names() {
            let t = truth.get(name).copied().unwrap_or(0) as i64;
            let g = guess.get(name).copied().unwrap_or(0) as i64;
            pooled.push((g, t));
            per_cat.entry(name).or_default().push((g, t));
        }
        evaluated += 1;
    }
    let mut metrics = BTreeMap::new();
    let overall = count_metrics(&pooled).unwrap_or(CountMetrics { mae: 0.0, rmse: 0.0 });
    metrics.insert("mae".to_string(), overall.mae);
    metrics.insert("rmse".to_string(), overall.rmse);
    for name in lexicon.names() {
        let m = per_cat
            .get(name)
            .map(|pairs| count_metrics(pairs).expect("non-empty per-category pairs"))
            .unwrap_or(CountMetrics { mae: 0.0, rmse: 0.0 });
        metrics.insert(format!("mae_{name}"), m.mae);
        metrics.insert(format!("rmse_{name}"), m.rmse);
    }
    Ok(TaskReport {
        evaluated,
        skipped: refs.len() - evaluated,
        metrics,
    })
}

fn score_localize(
    refs: &BTreeMap<String, Vec<String>>,
    preds: &BTreeMap<String, String>,
    lexicon: &CategoryLexicon,
) -> Result<TaskReport, MetricsError> {
    let mut pooled: Vec<(CellSet, CellSet)> = Vec::new();
    let mut per_cat: BTreeMap<&str, Vec<(CellSet, CellSet)>> = BTreeMap::new();
    let mut evaluated = 0usize;
    for (id, answers) in refs {
        let Some(text) = preds.get(id) else { continue };
        let Some(answer) = answers.first() else { continue };
        let truth = parse_cells(answer, lexicon);
        let guess = parse_cells(text, lexicon);
        for name in lexicon.names() {
            let t = truth.get(name).cloned().unwrap_or_default();
            let g = guess.get(name).cloned().unwrap_or_default();
            pooled.push((g.clone(), t.clone()));
            per_cat.entry(name).or_default().push((g, t));
        }
        evaluated += 1;
    }
    let zero = LocalizationMetrics {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
        jaccard: 0.0,
        subset_accuracy: 0.0,
    };
    let mut metrics = BTreeMap::new();
    let overall = localization_metrics(&pooled).unwrap_or(zero);
    metrics.insert("precision".to_string(), overall.precision);
    metrics.insert("recall".to_string(), overall.recall);
    metrics.insert("f1".to_string(), overall.f1);
    metrics.insert("jaccard".to_string(), overall.jaccard);
    metrics.insert("subset_accuracy".to_string(), overall.subset_accuracy);
    for name in lexicon.names() {
        let m = per_cat
            .get(name)
            .map(|pairs| localization_metrics(pairs).expect("non-empty per-category pairs"))
            .unwrap_or(zero);
        metrics.insert(format!("precision_{name}"), m.precision);
        metrics.insert(format!("recall_{name}"), m.recall);
        metrics.insert(format!("f1_{name}"), m.f1);
        metrics.insert(format!("jaccard_{name}"), m.jaccard);
        metrics.insert(format!("subset_accuracy_{name}"), m.subset_accuracy);
    }
    Ok(TaskReport {
        evaluated,
        skipped: refs.len() - evaluated,
        metrics,
    })
}
