//! `rsca`: analyze change masks, generate instruction datasets, evaluate
//! predictions, and verify the numeric kernel.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use rsca_core::changemap::{
    contours_of, count_by_category, grid_cells_by_category, has_change, label_components,
    load_change_map,
};
use rsca_core::config::RunConfig;
use rsca_core::instructgen::{build_dataset, convert_levir_captions, write_captions};
use rsca_core::kernel::check::{run_check_suite, DEFAULT_GRAD_TOLERANCE};
use rsca_core::metrics::{evaluate, CategoryLexicon};

#[derive(Parser)]
#[command(
    name = "rsca",
    about = "Bi-temporal change analysis tooling: mask analysis, instruction dataset generation, multi-task evaluation, kernel verification",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Derive per-pair change facts (counts, contours, grid cells, verdict)
    /// from the masks and write one JSON file per pair.
    Analyze(AnalyzeArgs),
    /// Build the instruction dataset: per-split JSONL plus a stats file.
    Generate(GenerateArgs),
    /// Score a prediction file against a reference dataset file.
    Evaluate(EvaluateArgs),
    /// Run the numeric kernel property suite and print a JSON summary.
    KernelCheck(KernelCheckArgs),
    /// Convert LEVIR-CC release metadata into the canonical captions file.
    ConvertCaptions(ConvertArgs),
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (default: <output_dir>/analysis from the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Pair ids to analyze; all masks in the masks directory when omitted.
    ids: Vec<String>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (default: output_dir from the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the generation seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses the default pool size.
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Prediction JSONL: {"id","task_type","text"} per line.
    #[arg(long)]
    predictions: PathBuf,
    /// Reference dataset JSONL (a generate output file).
    #[arg(long)]
    references: PathBuf,
    /// Optional config; supplies the category lexicon.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for the report (default: current directory).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Additionally emit one flat CSV row per (task, metric).
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
struct KernelCheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Pass threshold for the finite-difference gradient entries.
    #[arg(long, default_value_t = DEFAULT_GRAD_TOLERANCE)]
    tolerance: f64,
}

#[derive(Args)]
struct ConvertArgs {
    /// LEVIR-CC release metadata JSON.
    #[arg(long)]
    input: PathBuf,
    /// Canonical captions file to write.
    #[arg(long)]
    output: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Analyze(args) => cmd_analyze(args),
        Command::Generate(args) => cmd_generate(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::KernelCheck(args) => cmd_kernel_check(args),
        Command::ConvertCaptions(args) => cmd_convert(args),
    }
}

fn write_json(path: &PathBuf, value: &serde_json::Value) -> Result<()> {
    let mut body = serde_json::to_string_pretty(value)?;
    body.push('\n');
    std::fs::write(path, body).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<ExitCode> {
    let config = RunConfig::load(&args.config)?;
    let dict = config.category_dict()?;
    let filter = config.region_filter();
    let out_dir = args
        .out
        .unwrap_or_else(|| config.paths.output_dir.join("analysis"));
    std::fs::create_dir_all(&out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;

    let ids = if args.ids.is_empty() {
        let mut ids = Vec::new();
        let entries = std::fs::read_dir(&config.paths.masks_dir)
            .with_context(|| format!("reading masks dir {}", config.paths.masks_dir.display()))?;
        for entry in entries {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) == Some("png") {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    ids.push(stem.to_string());
                }
            }
        }
        ids.sort();
        ids
    } else {
        args.ids
    };

    for id in &ids {
        let mask_path = config.paths.masks_dir.join(format!("{id}.png"));
        let map = load_change_map(&mask_path, &dict)
            .with_context(|| format!("analyzing pair {id}"))?;

        let counts = count_by_category(&map, filter);
        let mut counts_json = serde_json::Map::new();
        let mut contours_json = serde_json::Map::new();
        let mut cells_json = serde_json::Map::new();
        let cells = grid_cells_by_category(&map, config.changemap.grid, config.changemap.threshold)?;
        for (cat_id, name) in map.change_categories() {
            counts_json.insert(
                name.to_string(),
                serde_json::json!(counts.get(name).unwrap_or(0)),
            );
            let regions = label_components(&map, cat_id, filter)?;
            let mut traced = Vec::new();
            for region in &regions {
                let contour = contours_of(
                    region,
                    (map.width(), map.height()),
                    config.changemap.contour_decimals,
                )?;
                traced.push(serde_json::Value::Array(
                    contour
                        .points
                        .iter()
                        .map(|&(x, y)| serde_json::json!([x, y]))
                        .collect(),
                ));
            }
            contours_json.insert(name.to_string(), serde_json::Value::Array(traced));
            let labels: Vec<&str> = cells
                .get(&cat_id)
                .map(|set| set.iter().map(|c| c.label()).collect())
                .unwrap_or_default();
            cells_json.insert(name.to_string(), serde_json::json!(labels));
        }

        let analysis = serde_json::json!({
            "id": id,
            "counts": counts_json,
            "contours": contours_json,
            "cells": cells_json,
            "changed": has_change(&map, filter),
        });
        write_json(&out_dir.join(format!("{id}.json")), &analysis)?;
    }
    log::info!("analyzed {} pair(s) into {}", ids.len(), out_dir.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_generate(args: GenerateArgs) -> Result<ExitCode> {
    let config = RunConfig::load(&args.config)?;
    let build = config.build_config(args.out, args.seed, args.threads)?;
    let client = config.make_llm_client(args.seed)?;
    if client.is_none() && build.tasks.contains(&rsca_core::instructgen::TaskType::OpenQa) {
        log::warn!("no chat backend configured; open-ended QA records will be skipped");
    }
    let stats = build_dataset(&build, client.as_ref())?;
    let stats_path = build.output_dir.join("stats.json");
    write_json(&stats_path, &serde_json::to_value(&stats)?)?;
    println!("{}", serde_json::to_string_pretty(&stats)?);
    log::info!(
        "wrote {} records under {}",
        stats.total,
        build.output_dir.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<ExitCode> {
    let lexicon = match &args.config {
        Some(path) => RunConfig::load(path)?.lexicon()?,
        None => CategoryLexicon::default(),
    };
    let report = evaluate(&args.predictions, &args.references, &lexicon)?;
    let out_dir = args.out.unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    write_json(&out_dir.join("eval_report.json"), &report.to_json())?;
    if args.csv {
        let csv_path = out_dir.join("eval_report.csv");
        std::fs::write(&csv_path, report.to_csv())
            .with_context(|| format!("writing {}", csv_path.display()))?;
    }
    println!("{}", serde_json::to_string_pretty(&report.to_json())?);
    Ok(ExitCode::SUCCESS)
}

fn cmd_kernel_check(args: KernelCheckArgs) -> Result<ExitCode> {
    if !args.tolerance.is_finite() || args.tolerance <= 0.0 {
        bail!("tolerance must be positive, got {}", args.tolerance);
    }
    let report = run_check_suite(args.seed, args.tolerance);
    println!("{}", serde_json::to_string_pretty(&report)?);
    if report.pass {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::FAILURE)
    }
}

fn cmd_convert(args: ConvertArgs) -> Result<ExitCode> {
    let captions = convert_levir_captions(&args.input)?;
    write_captions(&captions, &args.output)?;
    log::info!(
        "wrote {} pairs to {}",
        captions.len(),
        args.output.display()
    );
    Ok(ExitCode::SUCCESS)
}
