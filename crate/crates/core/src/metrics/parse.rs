//! Free-text answer parsers. Baseline models answer in prose, so scoring the
//! structured tasks requires recovering verdicts, counts, and cell sets from
//! arbitrary text. Parsers are lenient: unparseable text yields a failure
//! marker (scored as wrong), never an error, and no count or cell is ever
//! fabricated that is not textually present.

use std::collections::BTreeMap;

use crate::changemap::{Cell, CellSet};
use crate::instructgen::TaskType;

use super::tokenize::tokenize;

/// Keyword lexicon mapping category names to the tokens that refer to them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoryLexicon {
    entries: Vec<(String, Vec<String>)>,
}

impl CategoryLexicon {
    /// Category names in their fixed order; keywords are the singular and
    /// plural name plus known aliases (buildings are often called houses).
    pub fn new(names: &[&str]) -> Self {
        let entries = names
            .iter()
            .map(|&name| {
                let mut keywords = vec![name.to_string(), format!("{name}s")];
                if name == "building" {
                    keywords.push("house".to_string());
                    keywords.push("houses".to_string());
                }
                (name.to_string(), keywords)
            })
            .collect();
        Self { entries }
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|(n, _)| n.as_str()).collect()
    }

    fn category_of(&self, token: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(_, kws)| kws.iter().any(|k| k == token))
            .map(|(name, _)| name.as_str())
    }
}

impl Default for CategoryLexicon {
    fn default() -> Self {
        Self::new(&["road", "building"])
    }
}

/// Parse result per task; `Binary(None)` marks a failed parse and scores as
/// the wrong class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParsedAnswer {
    Binary(Option<bool>),
    Counts(BTreeMap<String, usize>),
    Cells(BTreeMap<String, CellSet>),
    /// Free-text tasks are not parsed.
    Text(String),
}

/// Words accepted as counts alongside digit tokens. "no" reads as zero so
/// phrases like "no new roads" parse.
fn number_word(token: &str) -> Option<usize> {
    const WORDS: [&str; 21] = [
        "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
        "eleven", "twelve", "thirteen", "fourteen", "fifteen", "sixteen", "seventeen",
        "eighteen", "nineteen", "twenty",
    ];
    if token == "no" {
        return Some(0);
    }
    WORDS.iter().position(|&w| w == token)
}

fn numeric_token(token: &str) -> Option<usize> {
    if token.chars().all(|c| c.is_ascii_digit()) {
        token.parse().ok()
    } else {
        number_word(token)
    }
}

/// Routes the text to the task's grammar.
pub fn parse_prediction(task: TaskType, text: &str, lexicon: &CategoryLexicon) -> ParsedAnswer {
    match task {
        TaskType::Binary => ParsedAnswer::Binary(parse_binary(text)),
        TaskType::Quant => ParsedAnswer::Counts(parse_counts(text, lexicon)),
        TaskType::Localize => ParsedAnswer::Cells(parse_cells(text, lexicon)),
        TaskType::Caption | TaskType::OpenQa | TaskType::Multiturn => {
            ParsedAnswer::Text(text.to_string())
        }
    }
}

/// First standalone "yes" or "no" token wins; none found is a parse failure.
pub fn parse_binary(text: &str) -> Option<bool> {
    tokenize(text)
        .tokens()
        .iter()
        .find_map(|t| match t.as_str() {
            "yes" => Some(true),
            "no" => Some(false),
            _ => None,
        })
}

/// The integer (digits or a number word) nearest the last occurrence of each
/// category keyword; ties break toward the token before the keyword, and a
/// category with no nearby number reads as zero.
pub fn parse_counts(text: &str, lexicon: &CategoryLexicon) -> BTreeMap<String, usize> {
    let seq = tokenize(text);
    let tokens = seq.tokens();
    let numbers: Vec<(usize, usize)> = tokens
        .iter()
        .enumerate()
        .filter_map(|(i, t)| numeric_token(t).map(|v| (i, v)))
        .collect();

    let mut out = BTreeMap::new();
    for name in lexicon.names() {
        let anchor = tokens
            .iter()
            .enumerate()
            .rev()
            .find(|(_, t)| lexicon.category_of(t) == Some(name))
            .map(|(i, _)| i);
        let value = anchor
            .and_then(|k| {
                numbers
                    .iter()
                    .min_by_key(|&&(i, _)| {
                        let dist = (i as i64 - k as i64).unsigned_abs();
                        // prefer the number before the keyword on ties
                        (dist, i >= k)
                    })
                    .map(|&(_, v)| v)
            })
            .unwrap_or(0);
        out.insert(name.to_string(), value);
    }
    out
}

/// Cell labels following each category keyword, up to the next keyword of a
/// different category. Labels match case-insensitively; absent categories
/// read as empty sets.
pub fn parse_cells(text: &str, lexicon: &CategoryLexicon) -> BTreeMap<String, CellSet> {
    let seq = tokenize(text);
    let tokens = seq.tokens();
    let mut out: BTreeMap<String, CellSet> = lexicon
        .names()
        .iter()
        .map(|n| (n.to_string(), CellSet::new()))
        .collect();

    for name in lexicon.names() {
        let anchor = tokens
            .iter()
            .enumerate()
            .rev()
            .find(|(_, t)| lexicon.category_of(t) == Some(name))
            .map(|(i, _)| i);
        let Some(start) = anchor else { continue };
        let mut cells = CellSet::new();
        for t in &tokens[start + 1..] {
            match lexicon.category_of(t) {
                Some(other) if other != name => break,
                _ => {}
            }
            if let Ok(cell) = t.parse::<Cell>() {
                cells.insert(cell);
            }
        }
        out.insert(name.to_string(), cells);
    }
    out
}
