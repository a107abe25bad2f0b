//! Command-line entry point for the tag-generation and retrieval pipeline.

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use notetag::config::PipelineConfig;
use notetag::distill::build_dpo_pairs;
use notetag::extraction::{generate_handbook, refine_handbook, HandbookEdit};
use notetag::judge::{
    alignment_report, dual_evaluate, pairwise_score, score_basic, AlignmentItem,
    BasicAttributeScore, DualEvalResult, HumanReference, Rational,
};
use notetag::jsonl::{read_jsonl, write_jsonl};
use notetag::model::{Catalog, Handbook, Note, TagSet};
use notetag::pipeline::{make_client, materialize_synth, run_pipeline};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "notetag", about = "Guided tag generation, judging, and tag-driven retrieval")]
struct Cli {
    /// Pipeline configuration file (TOML). Defaults apply when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Replay every model call from the cassette; cache misses are errors.
    #[arg(long, global = true)]
    offline: bool,
    /// Overrides every seeded component with one seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum JudgeMode {
    Bas,
    Pairwise,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a category handbook with the generator model.
    HandbookGen {
        #[arg(long)]
        category: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Apply expert edits to a generated handbook.
    HandbookRefine {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        edits: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run tag extraction over the configured notes.
    Extract,
    /// Score tag sets: basic attributes or pairwise against references.
    Judge {
        #[arg(value_enum)]
        mode: JudgeMode,
        #[arg(long)]
        notes: Option<PathBuf>,
        #[arg(long)]
        tags: Option<PathBuf>,
        #[arg(long = "ref-tags")]
        ref_tags: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Judge-human alignment: MAE and Consistency per model plus total.
    Align {
        #[arg(long = "judge")]
        judge: PathBuf,
        #[arg(long)]
        human: PathBuf,
    },
    /// Mine preference pairs from judged generated-vs-reference tag sets.
    DpoBuild {
        #[arg(long)]
        pool: Option<PathBuf>,
        #[arg(long)]
        gen: Option<PathBuf>,
        #[arg(long = "ref")]
        reference: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Build user profiles and tag embeddings.
    Features,
    /// Train the two-tower model and save its parameters.
    Train {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Retrieve top-K items for every user.
    Retrieve {
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Generate the synthetic corpus and its replay cassette.
    GenSynth,
    /// Run every enabled stage end to end.
    Run,
}

fn load_config(cli: &Cli) -> anyhow::Result<PipelineConfig> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path)
            .with_context(|| format!("loading config {}", path.display()))?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.set_seed(seed);
    }
    Ok(config)
}

fn only_stage(config: &mut PipelineConfig, stage: &str) {
    config.stages.extract = stage == "extract";
    config.stages.judge = stage == "judge";
    config.stages.dpo = stage == "dpo";
    config.stages.features = stage == "features";
    config.stages.train = stage == "train";
    config.stages.retrieve = stage == "retrieve";
}

fn emit_json<T: Serialize>(value: &T, out: Option<&Path>) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(path) => std::fs::write(path, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct BasRecord {
    note_id: String,
    bas: BasicAttributeScore,
}

#[derive(Serialize, Deserialize)]
struct PairwiseRecord {
    note_id: String,
    dual: DualEvalResult,
}

fn load_handbooks(config: &PipelineConfig) -> anyhow::Result<HashMap<String, Handbook>> {
    let text = std::fs::read_to_string(&config.paths.handbooks)
        .with_context(|| format!("reading {}", config.paths.handbooks.display()))?;
    Ok(serde_json::from_str(&text)?)
}

#[allow(clippy::too_many_arguments)]
fn cmd_judge(
    config: &PipelineConfig,
    offline: bool,
    mode: JudgeMode,
    notes: Option<PathBuf>,
    tags: Option<PathBuf>,
    ref_tags: Option<PathBuf>,
    out: Option<PathBuf>,
) -> anyhow::Result<()> {
    let notes_path = notes.unwrap_or_else(|| config.paths.notes.clone());
    let tags_path = tags.unwrap_or_else(|| config.paths.out_dir.join("tags.jsonl"));
    let ref_path = ref_tags.unwrap_or_else(|| config.paths.reference_tags.clone());
    let out_path = out.unwrap_or_else(|| config.paths.out_dir.join("judge.jsonl"));

    let notes: Vec<Note> = read_jsonl(&notes_path)?;
    let tags: Vec<TagSet> = read_jsonl(&tags_path)?;
    let handbooks = load_handbooks(config)?;
    let client = make_client(offline, &config.judge, &config.paths.cassette)?;
    let tags_by_note: HashMap<&str, &TagSet> =
        tags.iter().map(|t| (t.note_id.as_str(), t)).collect();

    if let Some(parent) = out_path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let handbook = |note: &Note| -> anyhow::Result<&Handbook> {
        handbooks
            .get(&note.category)
            .with_context(|| format!("no handbook for category {}", note.category))
    };
    match mode {
        JudgeMode::Bas => {
            let mut records = Vec::new();
            let mut total = 0i64;
            for note in &notes {
                let tagset = tags_by_note
                    .get(note.id.as_str())
                    .with_context(|| format!("no tag set for note {}", note.id))?;
                let bas =
                    score_basic(note, tagset, handbook(note)?, client.as_ref(), &config.judge.model)?;
                total += bas.total as i64;
                records.push(BasRecord { note_id: note.id.clone(), bas });
            }
            write_jsonl(&out_path, &records)?;
            println!(
                "bas: {} notes, mean total {}/{}",
                records.len(),
                total,
                records.len()
            );
        }
        JudgeMode::Pairwise => {
            let references: Vec<TagSet> = read_jsonl(&ref_path)?;
            let ref_by_note: HashMap<&str, &TagSet> =
                references.iter().map(|t| (t.note_id.as_str(), t)).collect();
            let mut records = Vec::new();
            let mut combined = Vec::new();
            for note in &notes {
                let a = tags_by_note
                    .get(note.id.as_str())
                    .with_context(|| format!("no tag set for note {}", note.id))?;
                let b = ref_by_note
                    .get(note.id.as_str())
                    .with_context(|| format!("no reference tag set for note {}", note.id))?;
                let dual =
                    dual_evaluate(note, handbook(note)?, a, b, client.as_ref(), &config.judge.model)?;
                combined.push(dual.combined);
                records.push(PairwiseRecord { note_id: note.id.clone(), dual });
            }
            write_jsonl(&out_path, &records)?;
            let score = pairwise_score(&combined)?;
            println!(
                "pairwise: {} notes, score {}/{}",
                records.len(),
                score.numer(),
                score.denom()
            );
        }
    }
    Ok(())
}

fn cmd_align(judge: &Path, human: &Path) -> anyhow::Result<()> {
    let judged: Vec<AlignmentItem> = read_jsonl(judge)?;
    let labels: Vec<HumanReference> = read_jsonl(human)?;
    let rows = alignment_report(&judged, &labels)?;
    let show = |r: &Rational| format!("{}/{}", r.numer(), r.denom());
    println!("{:<16} {:>12} {:>14} {:>6}", "model", "MAE", "Consistency", "n");
    for row in rows {
        println!(
            "{:<16} {:>12} {:>14} {:>6}",
            row.model,
            show(&row.mae),
            show(&row.consistency),
            row.n
        );
    }
    Ok(())
}

fn cmd_dpo_build(
    config: &PipelineConfig,
    offline: bool,
    pool: Option<PathBuf>,
    gen: Option<PathBuf>,
    reference: Option<PathBuf>,
    out: Option<PathBuf>,
    summary: Option<PathBuf>,
) -> anyhow::Result<()> {
    let pool_path = pool.unwrap_or_else(|| config.paths.notes.clone());
    let gen_path = gen.unwrap_or_else(|| config.paths.out_dir.join("tags.jsonl"));
    let ref_path = reference.unwrap_or_else(|| config.paths.reference_tags.clone());
    let out_path = out.unwrap_or_else(|| config.paths.out_dir.join("dpo_pairs.jsonl"));

    let notes: Vec<Note> = read_jsonl(&pool_path)?;
    let generated: Vec<TagSet> = read_jsonl(&gen_path)?;
    let references: Vec<TagSet> = read_jsonl(&ref_path)?;
    let handbooks = load_handbooks(config)?;
    let client = make_client(offline, &config.judge, &config.paths.cassette)?;

    let (pairs, counts) = build_dpo_pairs(
        &notes,
        &generated,
        &references,
        &handbooks,
        &Catalog::reference(),
        &config.extraction.style,
        &config.extraction.sampling,
        client.as_ref(),
        &config.judge.model,
    )?;
    if let Some(parent) = out_path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    write_jsonl(&out_path, &pairs)?;
    emit_json(&counts, summary.as_deref())?;
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut config = load_config(&cli)?;
    match cli.command {
        Command::HandbookGen { category, out } => {
            let client = make_client(cli.offline, &config.generator, &config.paths.cassette)?;
            let handbook = generate_handbook(
                &Catalog::reference(),
                &category,
                client.as_ref(),
                &config.generator.model,
            )?;
            emit_json(&handbook, out.as_deref())?;
        }
        Command::HandbookRefine { input, edits, out } => {
            let base: Handbook = serde_json::from_str(&std::fs::read_to_string(&input)?)?;
            let edits: Vec<HandbookEdit> = serde_json::from_str(&std::fs::read_to_string(&edits)?)?;
            emit_json(&refine_handbook(&base, &edits)?, out.as_deref())?;
        }
        Command::Extract => {
            only_stage(&mut config, "extract");
            let report = run_pipeline(&config, cli.offline)?;
            emit_json(&report, None)?;
        }
        Command::Judge { mode, notes, tags, ref_tags, out } => {
            cmd_judge(&config, cli.offline, mode, notes, tags, ref_tags, out)?;
        }
        Command::Align { judge, human } => cmd_align(&judge, &human)?,
        Command::DpoBuild { pool, gen, reference, out, summary } => {
            cmd_dpo_build(&config, cli.offline, pool, gen, reference, out, summary)?;
        }
        Command::Features => {
            only_stage(&mut config, "features");
            let report = run_pipeline(&config, cli.offline)?;
            emit_json(&report, None)?;
        }
        Command::Train { data, out } => {
            if let Some(data) = data {
                config.paths.train_examples = data;
            }
            only_stage(&mut config, "train");
            let report = run_pipeline(&config, cli.offline)?;
            if let Some(out) = out {
                std::fs::copy(config.paths.out_dir.join("params.bin"), out)?;
            }
            emit_json(&report, None)?;
        }
        Command::Retrieve { params, k } => {
            if let Some(k) = k {
                config.train.k = k;
            }
            only_stage(&mut config, "retrieve");
            if let Some(params) = params {
                std::fs::create_dir_all(&config.paths.out_dir)?;
                let target = config.paths.out_dir.join("params.bin");
                if params != target {
                    std::fs::copy(&params, &target)?;
                }
            }
            let report = run_pipeline(&config, cli.offline)?;
            emit_json(&report, None)?;
        }
        Command::GenSynth => {
            materialize_synth(&config)?;
            println!("synthetic corpus written under {}", config.paths.notes.display());
        }
        Command::Run => {
            let report = run_pipeline(&config, cli.offline)?;
            emit_json(&report, None)?;
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
