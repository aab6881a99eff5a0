//! End-to-end dataset construction: read the canonical captions file, pair
//! each entry with its change mask, emit sorted per-split JSONL, and report
//! per-type counts. Output bytes are a pure function of (source bytes,
//! config, seed) regardless of thread count.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::changemap::{
    contours_of, grid_cells_by_category, label_components, load_change_map, RegionFilter,
};
use crate::llmclient::{ChatMessage, ChatRequest, ChatRole, LlmClient};

use super::{
    derive_counts, make_binary_record, make_caption_records, make_localization_record,
    make_multiturn_record, make_open_qa_records, make_openended_prompt, make_quant_record,
    CategoryRoster, DatasetError, ImagePairRef, InstructionRecord, Split, TaskType,
};

/// One entry of the canonical captions file: pair id -> split + captions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionEntry {
    pub split: Split,
    pub captions: Vec<String>,
}

/// The canonical captions form, keyed by pair id.
pub type CaptionsFile = BTreeMap<String, CaptionEntry>;

pub fn read_captions(path: &Path) -> Result<CaptionsFile, DatasetError> {
    let bytes = std::fs::read(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_slice(&bytes).map_err(|e| DatasetError::Json {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn write_captions(captions: &CaptionsFile, path: &Path) -> Result<(), DatasetError> {
    let mut body = serde_json::to_string_pretty(captions).expect("captions serialize");
    body.push('\n');
    std::fs::write(path, body).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Converts the LEVIR-CC release metadata (`{"images":[{"filename", "split",
/// "sentences":[{"raw"}]}]}`) into the canonical captions form. Only train
/// and test entries are kept; other splits are dropped with a log note.
pub fn convert_levir_captions(path: &Path) -> Result<CaptionsFile, DatasetError> {
    #[derive(Deserialize)]
    struct Sentence {
        raw: String,
    }
    #[derive(Deserialize)]
    struct Image {
        filename: String,
        split: String,
        sentences: Vec<Sentence>,
    }
    #[derive(Deserialize)]
    struct Release {
        images: Vec<Image>,
    }

    let bytes = std::fs::read(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let release: Release = serde_json::from_slice(&bytes).map_err(|e| DatasetError::Json {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;

    let mut out = CaptionsFile::new();
    let mut dropped = 0usize;
    for img in release.images {
        let split = match img.split.as_str() {
            "train" => Split::Train,
            "test" => Split::Test,
            _ => {
                dropped += 1;
                continue;
            }
        };
        let id = img
            .filename
            .strip_suffix(".png")
            .unwrap_or(&img.filename)
            .to_string();
        let captions: Vec<String> = img
            .sentences
            .iter()
            .map(|s| s.raw.trim().to_string())
            .collect();
        out.insert(id, CaptionEntry { split, captions });
    }
    if dropped > 0 {
        log::info!("dropped {dropped} entries outside the train/test splits");
    }
    Ok(out)
}

/// Sampling settings forwarded to the chat backend.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LlmSettings {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for LlmSettings {
    fn default() -> Self {
        Self {
            model: "gpt-3.5-turbo".to_string(),
            temperature: 0.0,
            max_tokens: 768,
        }
    }
}

/// Everything `build_dataset` needs.
#[derive(Debug, Clone)]
pub struct BuildConfig {
    pub masks_dir: PathBuf,
    pub captions_path: PathBuf,
    pub output_dir: PathBuf,
    pub categories: BTreeMap<u8, String>,
    pub filter: RegionFilter,
    pub grid: u32,
    pub threshold: f64,
    pub contour_decimals: u32,
    pub seed: u64,
    pub tasks: BTreeSet<TaskType>,
    pub llm: LlmSettings,
    /// 0 means the default rayon pool size.
    pub threads: usize,
}

impl BuildConfig {
    pub fn mask_path(&self, id: &str) -> PathBuf {
        self.masks_dir.join(format!("{id}.png"))
    }
}

/// Per-split, per-type record counts.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub splits: BTreeMap<String, BTreeMap<String, usize>>,
    pub total: usize,
}

impl DatasetStats {
    fn add(&mut self, split: Split, task: TaskType) {
        *self
            .splits
            .entry(split.as_str().to_string())
            .or_default()
            .entry(task.as_str().to_string())
            .or_insert(0) += 1;
        self.total += 1;
    }

    pub fn count(&self, split: Split, task: TaskType) -> usize {
        self.splits
            .get(split.as_str())
            .and_then(|m| m.get(task.as_str()))
            .copied()
            .unwrap_or(0)
    }
}

/// Builds every enabled record type for one pair, in task order.
fn pair_records(
    cfg: &BuildConfig,
    roster: &CategoryRoster,
    llm: Option<&LlmClient>,
    id: &str,
    entry: &CaptionEntry,
) -> Result<Vec<InstructionRecord>, DatasetError> {
    let mask_path = cfg.mask_path(id);
    if !mask_path.is_file() {
        return Err(DatasetError::MissingMask {
            id: id.to_string(),
            path: mask_path.display().to_string(),
        });
    }
    let map = load_change_map(&mask_path, &cfg.categories)?;
    let pair = ImagePairRef::from_id(id, entry.split);
    let enabled = |t: TaskType| cfg.tasks.contains(&t);

    let mut records = Vec::new();
    if enabled(TaskType::Caption) {
        // train pairs contribute one record per reference caption; test pairs
        // a single instruction-response pair (the first caption)
        let captions = match entry.split {
            Split::Train => &entry.captions[..],
            Split::Test => &entry.captions[..entry.captions.len().min(1)],
        };
        records.extend(make_caption_records(&pair, captions)?);
    }
    let counts = derive_counts(&map, cfg.filter);
    if enabled(TaskType::Binary) {
        records.push(make_binary_record(&pair, &map, cfg.filter));
    }
    if enabled(TaskType::Quant) {
        records.push(make_quant_record(&pair, &counts, roster)?);
    }
    if enabled(TaskType::Localize) {
        let cells = grid_cells_by_category(&map, cfg.grid, cfg.threshold)?;
        records.push(make_localization_record(&pair, &cells, roster, cfg.grid));
    }
    if enabled(TaskType::OpenQa) {
        if let Some(client) = llm {
            if entry.captions.len() == super::prompt::CAPTIONS_PER_PROMPT {
                let mut contours = BTreeMap::new();
                for (cat, _) in roster.entries() {
                    let regions = label_components(&map, *cat, cfg.filter)?;
                    let traced: Result<Vec<_>, _> = regions
                        .iter()
                        .map(|r| {
                            contours_of(r, (map.width(), map.height()), cfg.contour_decimals)
                        })
                        .collect();
                    contours.insert(*cat, traced?);
                }
                let bundle =
                    make_openended_prompt(&entry.captions, &counts, &contours, roster)?;
                let mut messages = Vec::new();
                for seed in &bundle.seeds {
                    messages.push(ChatMessage {
                        role: ChatRole::User,
                        content: seed.input_context.clone(),
                    });
                    messages.push(ChatMessage {
                        role: ChatRole::Assistant,
                        content: seed.expected_output.clone(),
                    });
                }
                messages.push(ChatMessage {
                    role: ChatRole::User,
                    content: bundle.payload.clone(),
                });
                let req = ChatRequest {
                    system: bundle.system.clone(),
                    messages,
                    temperature: cfg.llm.temperature,
                    max_tokens: cfg.llm.max_tokens,
                    model_name: cfg.llm.model.clone(),
                };
                let text = client.complete(&req)?;
                let qa = crate::llmclient::parse_qa_pairs(&text);
                if qa.is_empty() {
                    log::warn!("backend returned no parseable QA pairs for {id}");
                }
                records.extend(make_open_qa_records(&pair, &qa));
            } else {
                log::warn!(
                    "pair {id} has {} captions, open-ended QA needs exactly {}; skipped",
                    entry.captions.len(),
                    super::prompt::CAPTIONS_PER_PROMPT
                );
            }
        }
    }
    if enabled(TaskType::Multiturn) {
        records.push(make_multiturn_record(
            &pair,
            &map,
            cfg.filter,
            &counts,
            roster,
            &entry.captions,
        )?);
    }
    Ok(records)
}

/// Builds the full dataset: one `<split>.jsonl` per split under the output
/// directory (LF line endings), records sorted by (pair id, task order,
/// intra-pair index). Returns per-type per-split counts.
pub fn build_dataset(
    cfg: &BuildConfig,
    llm: Option<&LlmClient>,
) -> Result<DatasetStats, DatasetError> {
    let captions = read_captions(&cfg.captions_path)?;
    let roster = CategoryRoster::from_dict(&cfg.categories);

    let pairs: Vec<(&String, &CaptionEntry)> = captions.iter().collect();
    let run = || -> Result<Vec<Vec<InstructionRecord>>, DatasetError> {
        pairs
            .par_iter()
            .map(|(id, entry)| pair_records(cfg, &roster, llm, id, entry))
            .collect()
    };
    let per_pair = if cfg.threads == 0 {
        run()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| DatasetError::ThreadPool(e.to_string()))?;
        pool.install(run)?
    };

    let mut records: Vec<InstructionRecord> = per_pair.into_iter().flatten().collect();
    // stable sort: intra-pair generation order survives within (id, task)
    records.sort_by(|a, b| (&a.id, a.task_type).cmp(&(&b.id, b.task_type)));

    std::fs::create_dir_all(&cfg.output_dir).map_err(|source| DatasetError::Io {
        path: cfg.output_dir.display().to_string(),
        source,
    })?;
    let mut stats = DatasetStats::default();
    let mut writers: BTreeMap<Split, std::io::BufWriter<std::fs::File>> = BTreeMap::new();
    for split in [Split::Train, Split::Test] {
        let path = cfg.output_dir.join(format!("{}.jsonl", split.as_str()));
        let file = std::fs::File::create(&path).map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        writers.insert(split, std::io::BufWriter::new(file));
    }
    for record in &records {
        record.validate()?;
        let writer = writers.get_mut(&record.split).expect("writer per split");
        let line = serde_json::to_string(record).expect("record serializes");
        writeln!(writer, "{line}").map_err(|source| DatasetError::Io {
            path: cfg.output_dir.display().to_string(),
            source,
        })?;
        stats.add(record.split, record.task_type);
    }
    for (_, mut w) in writers {
        w.flush().map_err(|source| DatasetError::Io {
            path: cfg.output_dir.display().to_string(),
            source,
        })?;
    }
    Ok(stats)
}

/// Reads a dataset JSONL file back into records, reporting the first
/// offending line on schema violations.
pub fn read_records(path: &Path) -> Result<Vec<InstructionRecord>, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: InstructionRecord =
            serde_json::from_str(line).map_err(|e| DatasetError::Json {
                path: path.display().to_string(),
                message: format!("line {}: {}", i + 1, e),
            })?;
        records.push(record);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llmclient::{Backend, ClientOptions};
    use std::collections::BTreeSet;

    fn dict() -> BTreeMap<u8, String> {
        BTreeMap::from([
            (0, "none".to_string()),
            (1, "road".to_string()),
            (2, "building".to_string()),
        ])
    }

    fn write_mask(dir: &Path, id: &str, side: u32, painter: impl Fn(u32, u32) -> u8) {
        let img = image::GrayImage::from_fn(side, side, |x, y| image::Luma([painter(x, y)]));
        img.save(dir.join(format!("{id}.png"))).unwrap();
    }

    fn sample_source(dir: &Path, pairs: usize) -> (PathBuf, PathBuf) {
        let masks = dir.join("masks");
        std::fs::create_dir_all(&masks).unwrap();
        let mut captions = CaptionsFile::new();
        for i in 0..pairs {
            let id = format!("pair_{i:04}");
            let split = if i % 3 == 2 { Split::Test } else { Split::Train };
            write_mask(&masks, &id, 24, |x, y| {
                if i % 2 == 0 && x < 4 && y < 4 {
                    2
                } else if i % 2 == 1 && x > 16 && y > 16 {
                    1
                } else {
                    0
                }
            });
            captions.insert(
                id,
                CaptionEntry {
                    split,
                    captions: (0..5).map(|c| format!("caption {c} of pair {i}")).collect(),
                },
            );
        }
        let captions_path = dir.join("captions.json");
        write_captions(&captions, &captions_path).unwrap();
        (masks, captions_path)
    }

    fn config(dir: &Path, masks: PathBuf, captions: PathBuf) -> BuildConfig {
        BuildConfig {
            masks_dir: masks,
            captions_path: captions,
            output_dir: dir.join("out"),
            categories: dict(),
            filter: RegionFilter::default(),
            grid: 3,
            threshold: 0.05,
            contour_decimals: 2,
            seed: 0,
            tasks: TaskType::ALL.into_iter().collect(),
            llm: LlmSettings::default(),
            threads: 0,
        }
    }

    #[test]
    fn rule_based_build_counts_and_ordering() {
        let dir = tempfile::tempdir().unwrap();
        let (masks, captions) = sample_source(dir.path(), 6);
        let mut cfg = config(dir.path(), masks, captions);
        cfg.tasks.remove(&TaskType::OpenQa);
        let stats = build_dataset(&cfg, None).unwrap();
        // 4 train pairs (5 caption records each), 2 test pairs (1 caption
        // record each), plus 4 single records per pair
        assert_eq!(stats.count(Split::Train, TaskType::Caption), 20);
        assert_eq!(stats.count(Split::Test, TaskType::Caption), 2);
        assert_eq!(stats.count(Split::Train, TaskType::Binary), 4);
        assert_eq!(stats.count(Split::Test, TaskType::Multiturn), 2);
        assert_eq!(stats.total, 4 * 9 + 2 * 5);

        let train = read_records(&cfg.output_dir.join("train.jsonl")).unwrap();
        let mut sorted = train.clone();
        sorted.sort_by(|a, b| (&a.id, a.task_type).cmp(&(&b.id, b.task_type)));
        assert_eq!(train, sorted, "records are emitted sorted");
        for r in &train {
            r.validate().unwrap();
            assert_eq!(r.split, Split::Train);
        }
    }

    #[test]
    fn no_pair_crosses_splits() {
        let dir = tempfile::tempdir().unwrap();
        let (masks, captions) = sample_source(dir.path(), 9);
        let mut cfg = config(dir.path(), masks, captions);
        cfg.tasks.remove(&TaskType::OpenQa);
        build_dataset(&cfg, None).unwrap();
        let train = read_records(&cfg.output_dir.join("train.jsonl")).unwrap();
        let test = read_records(&cfg.output_dir.join("test.jsonl")).unwrap();
        let train_ids: BTreeSet<&str> = train.iter().map(|r| r.id.as_str()).collect();
        let test_ids: BTreeSet<&str> = test.iter().map(|r| r.id.as_str()).collect();
        assert!(train_ids.is_disjoint(&test_ids));
    }

    #[test]
    fn builds_are_byte_identical_across_runs_and_thread_counts() {
        let dir = tempfile::tempdir().unwrap();
        let (masks, captions) = sample_source(dir.path(), 8);
        let mut outputs = Vec::new();
        for (label, threads) in [("a", 1usize), ("b", 8), ("c", 1)] {
            let mut cfg = config(dir.path(), masks.clone(), captions.clone());
            cfg.output_dir = dir.path().join(format!("out_{label}"));
            cfg.threads = threads;
            let cache = dir.path().join("shared_cache");
            let llm = LlmClient::new(
                Backend::Mock { seed: cfg.seed },
                ClientOptions {
                    cache_dir: Some(cache),
                    ..ClientOptions::default()
                },
            );
            build_dataset(&cfg, Some(&llm)).unwrap();
            let train = std::fs::read(cfg.output_dir.join("train.jsonl")).unwrap();
            let test = std::fs::read(cfg.output_dir.join("test.jsonl")).unwrap();
            outputs.push((train, test));
        }
        assert_eq!(outputs[0], outputs[1], "threads 1 vs 8");
        assert_eq!(outputs[0], outputs[2], "repeated run");
    }

    #[test]
    fn open_qa_only_with_backend() {
        let dir = tempfile::tempdir().unwrap();
        let (masks, captions) = sample_source(dir.path(), 3);
        let cfg = config(dir.path(), masks, captions);
        let stats = build_dataset(&cfg, None).unwrap();
        assert_eq!(stats.count(Split::Train, TaskType::OpenQa), 0);

        let llm = LlmClient::new(Backend::Mock { seed: 1 }, ClientOptions::default());
        let mut cfg2 = cfg.clone();
        cfg2.output_dir = dir.path().join("out2");
        let stats = build_dataset(&cfg2, Some(&llm)).unwrap();
        assert!(stats.count(Split::Train, TaskType::OpenQa) > 0);
    }

    #[test]
    fn empty_source_builds_empty_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let masks = dir.path().join("masks");
        std::fs::create_dir_all(&masks).unwrap();
        let captions_path = dir.path().join("captions.json");
        write_captions(&CaptionsFile::new(), &captions_path).unwrap();
        let cfg = config(dir.path(), masks, captions_path);
        let stats = build_dataset(&cfg, None).unwrap();
        assert_eq!(stats.total, 0);
        let train = std::fs::read_to_string(cfg.output_dir.join("train.jsonl")).unwrap();
        assert!(train.is_empty());
    }

    #[test]
    fn missing_mask_is_reported_with_id() {
        let dir = tempfile::tempdir().unwrap();
        let (masks, captions_path) = sample_source(dir.path(), 2);
        std::fs::remove_file(masks.join("pair_0001.png")).unwrap();
        let cfg = config(dir.path(), masks, captions_path);
        let err = build_dataset(&cfg, None).unwrap_err();
        match err {
            DatasetError::MissingMask { id, .. } => assert_eq!(id, "pair_0001"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn levir_release_layout_converts() {
        let dir = tempfile::tempdir().unwrap();
        let release = serde_json::json!({
            "images": [
                {
                    "filename": "train_000001.png",
                    "split": "train",
                    "sentences": [
                        {"raw": " a building appears "},
                        {"raw": "many trees are removed"},
                    ],
                },
                {
                    "filename": "val_000001.png",
                    "split": "val",
                    "sentences": [{"raw": "dropped"}],
                },
                {
                    "filename": "test_000009.png",
                    "split": "test",
                    "sentences": [{"raw": "a road is built"}],
                },
            ]
        });
        let path = dir.path().join("LevirCCcaptions.json");
        std::fs::write(&path, serde_json::to_vec(&release).unwrap()).unwrap();
        let captions = convert_levir_captions(&path).unwrap();
        assert_eq!(captions.len(), 2);
        let first = &captions["train_000001"];
        assert_eq!(first.split, Split::Train);
        assert_eq!(first.captions[0], "a building appears");
        assert_eq!(captions["test_000009"].split, Split::Test);
    }
}
