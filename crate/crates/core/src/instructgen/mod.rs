//! Instruction-record construction for all six task types, from change-map
//! facts and reference captions.

pub mod templates;

mod build;
mod prompt;

pub use build::{
    build_dataset, convert_levir_captions, read_captions, read_records, write_captions,
    BuildConfig, CaptionEntry, CaptionsFile, DatasetStats, LlmSettings,
};
pub use prompt::{make_openended_prompt, PromptBundle, SeedExample};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::changemap::{
    count_by_category, has_change, CategoryCounts, CellSet, ChangeMap, ChangeMapError,
    RegionFilter,
};
use crate::llmclient::{LlmError, QAPair};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("caption list is empty")]
    EmptyCaptions,
    #[error("counts are missing an entry for category {0:?}")]
    MissingCategory(String),
    #[error("open-ended prompts need exactly 5 captions, got {0}")]
    WrongCaptionCount(usize),
    #[error("record for {id} violates {rule}")]
    MalformedRecord { id: String, rule: &'static str },
    #[error("no change mask for pair {id} at {path}")]
    MissingMask { id: String, path: String },
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {message}")]
    Json { path: String, message: String },
    #[error(transparent)]
    ChangeMap(#[from] ChangeMapError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

/// Dataset split membership.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// The six interaction types. The derived ordering fixes the intra-pair task
/// order used when sorting records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskType {
    Caption,
    Binary,
    Quant,
    Localize,
    OpenQa,
    Multiturn,
}

impl TaskType {
    pub const ALL: [TaskType; 6] = [
        TaskType::Caption,
        TaskType::Binary,
        TaskType::Quant,
        TaskType::Localize,
        TaskType::OpenQa,
        TaskType::Multiturn,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskType::Caption => "caption",
            TaskType::Binary => "binary",
            TaskType::Quant => "quant",
            TaskType::Localize => "localize",
            TaskType::OpenQa => "open_qa",
            TaskType::Multiturn => "multiturn",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Human,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub role: Role,
    pub text: String,
}

impl Turn {
    pub fn human(text: impl Into<String>) -> Self {
        Self {
            role: Role::Human,
            text: text.into(),
        }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            text: text.into(),
        }
    }
}

/// One bi-temporal image pair and its split membership.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImagePairRef {
    pub id: String,
    pub image_a: String,
    pub image_b: String,
    pub split: Split,
}

impl ImagePairRef {
    /// Pair whose image paths follow the `A/<id>.png`, `B/<id>.png` layout.
    pub fn from_id(id: impl Into<String>, split: Split) -> Self {
        let id = id.into();
        Self {
            image_a: format!("A/{id}.png"),
            image_b: format!("B/{id}.png"),
            id,
            split,
        }
    }
}

/// One (image pair, task, conversation) unit. Serialized as one JSON line:
/// `{"id","image_a","image_b","split","task_type","turns":[{"role","text"}]}`.
/// The id is the pair id; caption and open-ended records of the same pair
/// share it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionRecord {
    pub id: String,
    pub image_a: String,
    pub image_b: String,
    pub split: Split,
    pub task_type: TaskType,
    pub turns: Vec<Turn>,
}

impl InstructionRecord {
    pub fn new(pair: &ImagePairRef, task_type: TaskType, turns: Vec<Turn>) -> Self {
        Self {
            id: pair.id.clone(),
            image_a: pair.image_a.clone(),
            image_b: pair.image_b.clone(),
            split: pair.split,
            task_type,
            turns,
        }
    }

    /// Checks the conversation invariants: alternating roles starting with
    /// human and ending with assistant, at least one full round, and the
    /// per-task turn counts.
    pub fn validate(&self) -> Result<(), DatasetError> {
        let fail = |rule| {
            Err(DatasetError::MalformedRecord {
                id: self.id.clone(),
                rule,
            })
        };
        if self.turns.len() < 2 {
            return fail("at least two turns");
        }
        for (i, turn) in self.turns.iter().enumerate() {
            let expected = if i % 2 == 0 { Role::Human } else { Role::Assistant };
            if turn.role != expected {
                return fail("roles alternate starting with human");
            }
        }
        if !self.turns.len().is_multiple_of(2) {
            return fail("conversation ends with an assistant turn");
        }
        match self.task_type {
            TaskType::Multiturn => {
                if self.turns.len() < 6 {
                    return fail("multiturn has at least three rounds");
                }
            }
            _ => {
                if self.turns.len() != 2 {
                    return fail("single-round task has exactly two turns");
                }
            }
        }
        Ok(())
    }
}

/// Renders a record in the training-text form, appending the stop marker
/// after every turn. Stored records never carry the marker; it is purely an
/// export-time delimiter.
pub fn to_training_text(record: &InstructionRecord) -> String {
    record
        .turns
        .iter()
        .map(|t| {
            let speaker = match t.role {
                Role::Human => "Human",
                Role::Assistant => "Assistant",
            };
            format!("{speaker}: {} <STOP>", t.text)
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Non-zero categories of a dictionary in ascending id order; fixes the
/// category order used by questions, answers, and parsers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoryRoster {
    entries: Vec<(u8, String)>,
}

impl CategoryRoster {
    pub fn from_dict(dict: &BTreeMap<u8, String>) -> Self {
        Self {
            entries: dict
                .iter()
                .filter(|(&id, _)| id != 0)
                .map(|(&id, name)| (id, name.clone()))
                .collect(),
        }
    }

    pub fn entries(&self) -> &[(u8, String)] {
        &self.entries
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|(_, n)| n.as_str()).collect()
    }
}

/// One record per caption; the human turn is the fixed template, the
/// assistant turn the caption verbatim.
pub fn make_caption_records(
    pair: &ImagePairRef,
    captions: &[String],
) -> Result<Vec<InstructionRecord>, DatasetError> {
    if captions.is_empty() {
        return Err(DatasetError::EmptyCaptions);
    }
    Ok(captions
        .iter()
        .map(|c| {
            InstructionRecord::new(
                pair,
                TaskType::Caption,
                vec![
                    Turn::human(templates::caption_question()),
                    Turn::assistant(c.clone()),
                ],
            )
        })
        .collect())
}

/// Yes/no verdict derived from the change map under the given filter.
pub fn make_binary_record(
    pair: &ImagePairRef,
    map: &ChangeMap,
    filter: RegionFilter,
) -> InstructionRecord {
    InstructionRecord::new(
        pair,
        TaskType::Binary,
        vec![
            Turn::human(templates::binary_question()),
            Turn::assistant(templates::binary_answer(has_change(map, filter))),
        ],
    )
}

/// Per-category object counts in roster order.
pub fn make_quant_record(
    pair: &ImagePairRef,
    counts: &CategoryCounts,
    roster: &CategoryRoster,
) -> Result<InstructionRecord, DatasetError> {
    let ordered = ordered_counts(counts, roster)?;
    Ok(InstructionRecord::new(
        pair,
        TaskType::Quant,
        vec![
            Turn::human(templates::quant_question(&roster.names())),
            Turn::assistant(templates::quant_answer(&ordered)),
        ],
    ))
}

fn ordered_counts<'a>(
    counts: &CategoryCounts,
    roster: &'a CategoryRoster,
) -> Result<Vec<(&'a str, usize)>, DatasetError> {
    roster
        .entries()
        .iter()
        .map(|(_, name)| {
            counts
                .get(name)
                .map(|n| (name.as_str(), n))
                .ok_or_else(|| DatasetError::MissingCategory(name.clone()))
        })
        .collect()
}

/// Grid-cell localization per category in roster order; cells come keyed by
/// category id. Categories without an entry render as empty.
pub fn make_localization_record(
    pair: &ImagePairRef,
    cells: &BTreeMap<u8, CellSet>,
    roster: &CategoryRoster,
    grid: u32,
) -> InstructionRecord {
    let empty = CellSet::new();
    let ordered: Vec<(&str, &CellSet)> = roster
        .entries()
        .iter()
        .map(|(id, name)| (name.as_str(), cells.get(id).unwrap_or(&empty)))
        .collect();
    InstructionRecord::new(
        pair,
        TaskType::Localize,
        vec![
            Turn::human(templates::localize_question(&roster.names(), grid)),
            Turn::assistant(templates::localize_answer(&ordered)),
        ],
    )
}

/// Three rounds of increasing difficulty: binary verdict, per-category
/// counts, then the first reference caption.
pub fn make_multiturn_record(
    pair: &ImagePairRef,
    map: &ChangeMap,
    filter: RegionFilter,
    counts: &CategoryCounts,
    roster: &CategoryRoster,
    captions: &[String],
) -> Result<InstructionRecord, DatasetError> {
    if captions.is_empty() {
        return Err(DatasetError::EmptyCaptions);
    }
    let ordered = ordered_counts(counts, roster)?;
    let names: Vec<&str> = roster.names();
    Ok(InstructionRecord::new(
        pair,
        TaskType::Multiturn,
        vec![
            Turn::human(templates::binary_question()),
            Turn::assistant(templates::binary_answer(has_change(map, filter))),
            Turn::human(templates::multiturn_count_question(&names)),
            Turn::assistant(templates::quant_answer(&ordered)),
            Turn::human(templates::multiturn_caption_question()),
            Turn::assistant(captions[0].clone()),
        ],
    ))
}

/// One record per extracted QA pair.
pub fn make_open_qa_records(pair: &ImagePairRef, qa: &[QAPair]) -> Vec<InstructionRecord> {
    qa.iter()
        .map(|p| {
            InstructionRecord::new(
                pair,
                TaskType::OpenQa,
                vec![Turn::human(p.question.clone()), Turn::assistant(p.answer.clone())],
            )
        })
        .collect()
}

/// Convenience: counts derived straight from a map.
pub fn derive_counts(map: &ChangeMap, filter: RegionFilter) -> CategoryCounts {
    count_by_category(map, filter)
}
