//! Frozen template catalog for the rule-based record types. One phrasing per
//! type; answer grammars are deterministic so the evaluation parsers can
//! recover the underlying facts exactly.

use crate::changemap::CellSet;

/// Bump when any template or answer grammar changes shape.
pub const CATALOG_VERSION: u32 = 1;

pub fn caption_question() -> &'static str {
    "Please briefly describe the changes in these two images."
}

pub fn binary_question() -> &'static str {
    "Please judge whether these two images have changed. Please answer yes or no."
}

pub fn binary_answer(changed: bool) -> &'static str {
    if changed {
        "yes"
    } else {
        "no"
    }
}

pub fn quant_question(category_names: &[&str]) -> String {
    format!(
        "Please determine how many {} have changed?",
        join_names(category_names, true)
    )
}

pub fn localize_question(category_names: &[&str], grid: u32) -> String {
    format!(
        "Please indicate the locations where changes have occurred in the {}, using a {grid}x{grid} grid.",
        join_names(category_names, true)
    )
}

pub fn multiturn_count_question(category_names: &[&str]) -> String {
    format!(
        "If changes have occurred, count the number of {} changes separately.",
        join_names(category_names, false)
    )
}

pub fn multiturn_caption_question() -> &'static str {
    "Based on the above analysis, please describe the changes of these two images in detail."
}

/// Counting answer, e.g. "There is 1 new road and 10 new buildings." Zero
/// counts render as "no new <category>s"; the leading verb agrees with the
/// first phrase.
pub fn quant_answer(counts_in_order: &[(&str, usize)]) -> String {
    let phrases: Vec<String> = counts_in_order
        .iter()
        .map(|&(name, n)| match n {
            0 => format!("no new {}", pluralize(name)),
            1 => format!("1 new {name}"),
            n => format!("{n} new {}", pluralize(name)),
        })
        .collect();
    let verb = if counts_in_order.first().map(|&(_, n)| n) == Some(1) {
        "is"
    } else {
        "are"
    };
    format!("There {verb} {}.", phrases.join(" and "))
}

/// Localization answer, e.g. "roads: BL, BC; buildings: none". Cells render
/// in reading order; an empty set renders as "none".
pub fn localize_answer(cells_in_order: &[(&str, &CellSet)]) -> String {
    cells_in_order
        .iter()
        .map(|&(name, cells)| {
            let body = if cells.is_empty() {
                "none".to_string()
            } else {
                cells
                    .iter()
                    .map(|c| c.label())
                    .collect::<Vec<_>>()
                    .join(", ")
            };
            format!("{}: {body}", pluralize(name))
        })
        .collect::<Vec<_>>()
        .join("; ")
}

pub fn pluralize(name: &str) -> String {
    format!("{name}s")
}

fn join_names(names: &[&str], plural: bool) -> String {
    let rendered: Vec<String> = names
        .iter()
        .map(|n| if plural { pluralize(n) } else { (*n).to_string() })
        .collect();
    rendered.join(" and ")
}
