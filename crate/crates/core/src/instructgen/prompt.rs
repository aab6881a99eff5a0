//! Prompt assembly for GPT-assisted open-ended QA generation. No image data
//! is ever included: the model sees five captions plus the counts and
//! contours extracted from the change map.

use std::collections::BTreeMap;

use serde_json::{json, Value};

use crate::changemap::{CategoryCounts, NormalizedContour};

use super::{CategoryRoster, DatasetError};

/// The number of reference captions a prompt is built from.
pub const CAPTIONS_PER_PROMPT: usize = 5;

/// System text sent with every open-ended generation request.
///
/// Reconstructed wording: the upstream system message is not published, so
/// this is an original paraphrase of its described role, not a quotation.
pub const SYSTEM_MESSAGE: &str = "You are an AI visual assistant examining two remote sensing images of the same area taken at different times. You cannot see the images; the differences between them are summarized for you as five sentences describing the changes, together with per-category object counts and normalized change contours. Using only this information, generate diverse question-and-answer pairs about the changes. Include general questions about what changed as well as fine-grained questions that rely on the counts and contour locations. Answer confidently as if you had observed the images, and never mention captions, counts, or contours as your sources. Format every pair exactly as 'Question: ...' followed by 'Answer: ...'.";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedExample {
    pub input_context: String,
    pub expected_output: String,
}

/// Everything needed to issue one generation request: the system message,
/// few-shot seed examples, and the structured payload for the target pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptBundle {
    pub system: String,
    pub seeds: Vec<SeedExample>,
    pub payload: String,
}

/// Builds the prompt bundle for one pair. Requires exactly five captions;
/// counts and contours come from the change-map analysis. Identical inputs
/// produce byte-identical bundles.
pub fn make_openended_prompt(
    captions: &[String],
    counts: &CategoryCounts,
    contours: &BTreeMap<u8, Vec<NormalizedContour>>,
    roster: &CategoryRoster,
) -> Result<PromptBundle, DatasetError> {
    if captions.len() != CAPTIONS_PER_PROMPT {
        return Err(DatasetError::WrongCaptionCount(captions.len()));
    }
    let payload = format_payload(captions, counts, contours, roster)?;
    Ok(PromptBundle {
        system: SYSTEM_MESSAGE.to_string(),
        seeds: vec![seed_example()],
        payload,
    })
}

/// Three labeled sections: captions as bullets, counts as a JSON object in
/// roster order, contours as JSON arrays rounded the way the analysis
/// produced them.
fn format_payload(
    captions: &[String],
    counts: &CategoryCounts,
    contours: &BTreeMap<u8, Vec<NormalizedContour>>,
    roster: &CategoryRoster,
) -> Result<String, DatasetError> {
    let mut counts_obj = serde_json::Map::new();
    for (_, name) in roster.entries() {
        let n = counts
            .get(name)
            .ok_or_else(|| DatasetError::MissingCategory(name.clone()))?;
        counts_obj.insert(name.clone(), json!(n));
    }

    let mut contours_obj = serde_json::Map::new();
    for (id, name) in roster.entries() {
        let list: Vec<Value> = contours
            .get(id)
            .map(|cs| cs.iter().map(contour_to_json).collect())
            .unwrap_or_default();
        contours_obj.insert(name.clone(), Value::Array(list));
    }

    let mut out = String::from("Change Captions:\n");
    for c in captions {
        out.push_str("- ");
        out.push_str(c);
        out.push('\n');
    }
    out.push_str("\nChange Counts:\n");
    out.push_str(&Value::Object(counts_obj).to_string());
    out.push_str("\n\nChange Contours:\n");
    out.push_str(&Value::Object(contours_obj).to_string());
    out.push('\n');
    Ok(out)
}

fn contour_to_json(c: &NormalizedContour) -> Value {
    Value::Array(
        c.points
            .iter()
            .map(|&(x, y)| json!([x, y]))
            .collect(),
    )
}

/// Hand-written few-shot example in the exact payload/output format.
fn seed_example() -> SeedExample {
    let input_context = "Change Captions:\n\
- a row of houses is built along a new road at the bottom\n\
- a road with houses on both sides replaces the trees at the bottom\n\
- some trees are removed and a residential road appears\n\
- many small houses appear along the bottom edge of the scene\n\
- a new road with buildings beside it crosses the lower part\n\
\n\
Change Counts:\n\
{\"road\":1,\"building\":10}\n\
\n\
Change Contours:\n\
{\"road\":[[[0.1,0.84],[0.95,0.84],[0.95,0.9],[0.1,0.9]]],\"building\":[[[0.2,0.76],[0.27,0.76],[0.27,0.82],[0.2,0.82]]]}\n"
        .to_string();
    let expected_output = "Question: How many roads and buildings have changed?\n\
Answer: One new road was built and 10 new houses appeared. Most of the houses stand in a row along the road near the bottom of the scene, and the remaining ones are only partly visible at the lower edge.\n\
\n\
Question: What is the main change that occurred in the area?\n\
Answer: A wooded strip at the bottom was cleared and replaced by a residential road lined with small houses.\n"
        .to_string();
    SeedExample {
        input_context,
        expected_output,
    }
}
