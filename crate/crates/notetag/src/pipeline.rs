//! End-to-end orchestration: extract -> judge -> dpo -> features -> train ->
//! retrieve, each stage optional, with a machine-readable run report.

use crate::config::PipelineConfig;
use crate::distill::build_dpo_pairs;
use crate::error::{Error, Result};
use crate::extraction::run_cot_extraction;
use crate::features::{build_user_profile, embed_tags, HashingEncoder};
use crate::gateway::{write_cassette, ChatClient, HttpClient, MockClient, RecordingClient};
use crate::judge::{dual_evaluate, pairwise_score, score_basic, BasicAttributeScore, DualEvalResult, Rational};
use crate::jsonl::{read_jsonl, write_jsonl};
use crate::model::{Catalog, Handbook, InteractionEvent, Note, TagSet};
use crate::synth::{build_cassette, gen_synthetic, synthetic_handbooks, CassetteSpec};
use crate::tower::{
    build_item_index, item_forward, retrieve_top_k, save_params, train_epoch, user_forward,
    RawExample, TowerParams,
};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::path::Path;

/// One labeled training interaction, stored by id so the pipeline can
/// recompute tag vectors from whatever tags the extract stage produced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainRecord {
    pub user_id: String,
    pub note_id: String,
    pub y: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JudgeRecord {
    pub note_id: String,
    pub bas: BasicAttributeScore,
    pub dual: DualEvalResult,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RetrievalRecord {
    pub user_id: String,
    pub results: Vec<(String, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageReport {
    pub name: String,
    pub status: String,
    pub metrics: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub config_hash: String,
    pub cassette_hash: String,
    pub offline: bool,
    pub stages: Vec<StageReport>,
    /// Wall-clock seconds; omitted in offline runs so their output is
    /// byte-reproducible.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub elapsed_secs: Option<f64>,
}

fn stage_err(stage: &'static str, item: &str) -> impl FnOnce(Error) -> Error {
    let item = item.to_string();
    move |source| Error::Stage { stage, item, source: Box::new(source) }
}

fn skipped(name: &str) -> StageReport {
    StageReport { name: name.to_string(), status: "skipped".into(), metrics: BTreeMap::new() }
}

fn done(name: &str, metrics: BTreeMap<String, serde_json::Value>) -> StageReport {
    StageReport { name: name.to_string(), status: "done".into(), metrics }
}

fn rat_json(r: Rational) -> serde_json::Value {
    serde_json::json!([*r.numer(), *r.denom()])
}

fn file_sha256(path: &Path) -> String {
    use sha2::{Digest, Sha256};
    match std::fs::read(path) {
        Ok(bytes) => hex::encode(Sha256::digest(&bytes)),
        Err(_) => "absent".into(),
    }
}

/// Writes the full synthetic corpus plus a replay cassette to the paths in
/// the config, so an offline `run` needs no network at all.
pub fn materialize_synth(config: &PipelineConfig) -> Result<()> {
    let catalog = Catalog::reference();
    let data = gen_synthetic(&config.synth, &catalog);
    let handbooks = synthetic_handbooks(&catalog);

    for parent in [
        config.paths.notes.parent(),
        config.paths.cassette.parent(),
    ]
    .into_iter()
    .flatten()
    {
        std::fs::create_dir_all(parent)?;
    }

    write_jsonl(&config.paths.notes, &data.notes)?;
    write_jsonl(&config.paths.reference_tags, &data.reference_tags)?;
    write_jsonl(&config.paths.events, &data.events)?;
    write_jsonl(&config.paths.users, &data.user_ids)?;

    let records: Vec<TrainRecord> = data
        .examples
        .iter()
        .map(|e| TrainRecord {
            user_id: data.user_ids[e.user_idx].clone(),
            note_id: data.notes[e.item_idx].id.clone(),
            y: e.y,
        })
        .collect();
    write_jsonl(&config.paths.train_examples, &records)?;

    let ordered: BTreeMap<&String, &Handbook> = handbooks.iter().collect();
    std::fs::write(
        &config.paths.handbooks,
        serde_json::to_string_pretty(&ordered)?,
    )?;

    let spec = CassetteSpec {
        generator_model: &config.generator.model,
        judge_model: &config.judge.model,
        style: &config.extraction.style,
        sampling: &config.extraction.sampling,
    };
    let entries = build_cassette(&data, &catalog, &handbooks, &spec)?;
    write_cassette(&config.paths.cassette, &entries)?;
    Ok(())
}

struct Inputs {
    catalog: Catalog,
    notes: Vec<Note>,
    references: Vec<TagSet>,
    handbooks: HashMap<String, Handbook>,
    events: Vec<InteractionEvent>,
    users: Vec<String>,
    train_records: Vec<TrainRecord>,
}

fn load_inputs(config: &PipelineConfig) -> Result<Inputs> {
    let handbooks: HashMap<String, Handbook> =
        serde_json::from_str(&std::fs::read_to_string(&config.paths.handbooks)?)?;
    Ok(Inputs {
        catalog: Catalog::reference(),
        notes: read_jsonl(&config.paths.notes)?,
        references: read_jsonl(&config.paths.reference_tags)?,
        handbooks,
        events: read_jsonl(&config.paths.events)?,
        users: read_jsonl(&config.paths.users)?,
        train_records: read_jsonl(&config.paths.train_examples)?,
    })
}

/// Client for one endpoint role: the replay cassette when offline, a
/// recording HTTP client otherwise.
pub fn make_client(
    offline: bool,
    endpoint: &crate::gateway::EndpointConfig,
    cassette: &Path,
) -> Result<Box<dyn ChatClient>> {
    if offline {
        Ok(Box::new(MockClient::load(cassette)?))
    } else {
        Ok(Box::new(RecordingClient::create(
            HttpClient::new(endpoint.clone())?,
            cassette,
        )?))
    }
}

fn handbook_for<'a>(
    inputs: &'a Inputs,
    note: &Note,
    stage: &'static str,
) -> Result<&'a Handbook> {
    inputs
        .handbooks
        .get(&note.category)
        .ok_or_else(|| Error::UnknownCategory(note.category.clone()))
        .map_err(stage_err(stage, &note.id))
}

/// Runs every enabled stage over the corpus at `config.paths` and writes
/// per-stage artifacts plus `report.json` under `out_dir`.
pub fn run_pipeline(config: &PipelineConfig, offline: bool) -> Result<RunReport> {
    let started = std::time::Instant::now();
    config.validate()?;
    let inputs = load_inputs(config)?;
    if inputs.notes.is_empty() {
        return Err(Error::EmptyInput);
    }
    let out = &config.paths.out_dir;
    std::fs::create_dir_all(out)?;

    let gen_client = make_client(offline, &config.generator, &config.paths.cassette)?;
    let judge_client = make_client(offline, &config.judge, &config.paths.cassette)?;
    let encoder = HashingEncoder::new(config.synth.tag_vec_dim, config.synth.encoder_seed);

    let mut stages = Vec::new();

    // extract
    let generated: Vec<TagSet> = if config.stages.extract {
        let mut tagsets = Vec::with_capacity(inputs.notes.len());
        for note in &inputs.notes {
            let handbook = handbook_for(&inputs, note, "extract")?;
            let trace = run_cot_extraction(
                note,
                handbook,
                &inputs.catalog,
                gen_client.as_ref(),
                &config.generator.model,
                config.extraction.mode,
                &config.extraction.style,
                &config.extraction.sampling,
            )
            .map_err(stage_err("extract", &note.id))?;
            tagsets.push(trace.final_tags);
        }
        write_jsonl(&out.join("tags.jsonl"), &tagsets)?;
        let empty = tagsets.iter().filter(|t| t.is_empty()).count();
        stages.push(done(
            "extract",
            BTreeMap::from([
                ("notes".into(), serde_json::json!(tagsets.len())),
                ("empty_tag_sets".into(), serde_json::json!(empty)),
            ]),
        ));
        tagsets
    } else {
        stages.push(skipped("extract"));
        let path = out.join("tags.jsonl");
        if !path.exists() {
            return Err(Error::InvalidInput(
                "extract stage is disabled and out/tags.jsonl does not exist".into(),
            ));
        }
        read_jsonl(&path)?
    };
    let ref_by_note: HashMap<&str, &TagSet> =
        inputs.references.iter().map(|t| (t.note_id.as_str(), t)).collect();

    // judge
    if config.stages.judge {
        let mut records = Vec::with_capacity(inputs.notes.len());
        let mut bas_total_sum = 0i64;
        let mut combined = Vec::new();
        for (note, tags) in inputs.notes.iter().zip(&generated) {
            let handbook = handbook_for(&inputs, note, "judge")?;
            let reference = ref_by_note
                .get(note.id.as_str())
                .ok_or_else(|| Error::MissingTagSet(note.id.clone()))
                .map_err(stage_err("judge", &note.id))?;
            let bas = score_basic(note, tags, handbook, judge_client.as_ref(), &config.judge.model)
                .map_err(stage_err("judge", &note.id))?;
            let dual = dual_evaluate(
                note,
                handbook,
                tags,
                reference,
                judge_client.as_ref(),
                &config.judge.model,
            )
            .map_err(stage_err("judge", &note.id))?;
            bas_total_sum += bas.total as i64;
            combined.push(dual.combined);
            records.push(JudgeRecord { note_id: note.id.clone(), bas, dual });
        }
        write_jsonl(&out.join("judge.jsonl"), &records)?;
        stages.push(done(
            "judge",
            BTreeMap::from([
                ("notes".into(), serde_json::json!(records.len())),
                (
                    "mean_bas_total".into(),
                    rat_json(Rational::new(bas_total_sum, records.len() as i64)),
                ),
                ("pairwise_score".into(), rat_json(pairwise_score(&combined)?)),
            ]),
        ));
    } else {
        stages.push(skipped("judge"));
    }

    // dpo
    if config.stages.dpo {
        let (pairs, summary) = build_dpo_pairs(
            &inputs.notes,
            &generated,
            &inputs.references,
            &inputs.handbooks,
            &inputs.catalog,
            &config.extraction.style,
            &config.extraction.sampling,
            judge_client.as_ref(),
            &config.judge.model,
        )?;
        write_jsonl(&out.join("dpo_pairs.jsonl"), &pairs)?;
        stages.push(done(
            "dpo",
            BTreeMap::from([
                ("selected".into(), serde_json::json!(summary.selected)),
                ("tied".into(), serde_json::json!(summary.tied)),
                ("won".into(), serde_json::json!(summary.won)),
                ("errored".into(), serde_json::json!(summary.errored)),
            ]),
        ));
    } else {
        stages.push(skipped("dpo"));
    }

    // shared feature views
    let tags_by_note: HashMap<String, TagSet> =
        generated.iter().map(|t| (t.note_id.clone(), t.clone())).collect();
    let note_z: Vec<Vec<f64>> = generated
        .iter()
        .map(|t| embed_tags(t, &encoder).map(|e| e.vector))
        .collect::<Result<_>>()?;

    // features
    if config.stages.features {
        let mut profiles = Vec::with_capacity(inputs.users.len());
        for user in &inputs.users {
            profiles.push(
                build_user_profile(user, &inputs.events, &tags_by_note, &config.weights)
                    .map_err(stage_err("features", user))?,
            );
        }
        write_jsonl(&out.join("profiles.jsonl"), &profiles)?;
        let embeddings: Vec<crate::features::TagEmbedding> = generated
            .iter()
            .map(|t| embed_tags(t, &encoder))
            .collect::<Result<_>>()?;
        write_jsonl(&out.join("tag_embeddings.jsonl"), &embeddings)?;
        stages.push(done(
            "features",
            BTreeMap::from([
                ("users".into(), serde_json::json!(profiles.len())),
                ("notes".into(), serde_json::json!(embeddings.len())),
            ]),
        ));
    } else {
        stages.push(skipped("features"));
    }

    let user_idx: HashMap<&str, usize> =
        inputs.users.iter().enumerate().map(|(i, u)| (u.as_str(), i)).collect();
    let note_idx: HashMap<&str, usize> =
        inputs.notes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect();

    // train
    let mut params: Option<TowerParams> = None;
    if config.stages.train {
        let examples: Vec<RawExample> = inputs
            .train_records
            .iter()
            .map(|r| {
                let ui = *user_idx
                    .get(r.user_id.as_str())
                    .ok_or_else(|| Error::InvalidInput(format!("unknown user {}", r.user_id)))?;
                let ii = *note_idx
                    .get(r.note_id.as_str())
                    .ok_or_else(|| Error::MissingNote(r.note_id.clone()))?;
                Ok(RawExample { user_idx: ui, item_idx: ii, z: note_z[ii].clone(), y: r.y })
            })
            .collect::<Result<_>>()
            .map_err(stage_err("train", "train_examples"))?;
        if examples.is_empty() {
            return Err(stage_err("train", "train_examples")(Error::EmptyBatch));
        }
        let mut p = TowerParams::init(
            inputs.users.len(),
            inputs.notes.len(),
            config.train.embed_dim,
            config.synth.tag_vec_dim,
            config.train.hidden_dim,
            config.train.output_dim,
            config.train.seed,
        );
        let mut initial = 0.0;
        let mut last = 0.0;
        for epoch in 0..config.train.epochs {
            last = train_epoch(&mut p, &examples, &config.train, epoch)
                .map_err(stage_err("train", &format!("epoch {epoch}")))?;
            if epoch == 0 {
                initial = last;
            }
        }
        save_params(&out.join("params.bin"), &p)?;
        stages.push(done(
            "train",
            BTreeMap::from([
                ("examples".into(), serde_json::json!(examples.len())),
                ("epochs".into(), serde_json::json!(config.train.epochs)),
                ("initial_loss".into(), serde_json::json!(initial)),
                ("final_loss".into(), serde_json::json!(last)),
            ]),
        ));
        params = Some(p);
    } else {
        stages.push(skipped("train"));
    }

    // retrieve
    if config.stages.retrieve {
        let params = match params {
            Some(p) => p,
            None => crate::tower::load_params(&out.join("params.bin"))
                .map_err(stage_err("retrieve", "params.bin"))?,
        };
        let items: Vec<(String, Vec<f64>)> = inputs
            .notes
            .iter()
            .enumerate()
            .map(|(i, n)| {
                let v = item_forward(&params, &note_z[i], params.item_embed.row(i), &config.train)?;
                Ok((n.id.clone(), v))
            })
            .collect::<Result<_>>()
            .map_err(stage_err("retrieve", "items"))?;
        let index = build_item_index(items)?;

        let mut records = Vec::with_capacity(inputs.users.len());
        for (u, user) in inputs.users.iter().enumerate() {
            // interaction history -> mean tag vector
            let mut z_hist = vec![0.0; config.synth.tag_vec_dim];
            let mut count = 0usize;
            for event in inputs.events.iter().filter(|e| &e.user_id == user) {
                if let Some(&i) = note_idx.get(event.note_id.as_str()) {
                    for (a, b) in z_hist.iter_mut().zip(&note_z[i]) {
                        *a += b;
                    }
                    count += 1;
                }
            }
            if count > 0 {
                for a in &mut z_hist {
                    *a /= count as f64;
                }
            }
            let u_hat = user_forward(&params, &z_hist, params.user_embed.row(u), &config.train)
                .map_err(stage_err("retrieve", user))?;
            records.push(RetrievalRecord {
                user_id: user.clone(),
                results: retrieve_top_k(&index, &u_hat, config.train.k),
            });
        }
        write_jsonl(&out.join("retrieval.jsonl"), &records)?;
        stages.push(done(
            "retrieve",
            BTreeMap::from([
                ("users".into(), serde_json::json!(records.len())),
                ("k".into(), serde_json::json!(config.train.k)),
            ]),
        ));
    } else {
        stages.push(skipped("retrieve"));
    }

    let report = RunReport {
        seed: config.train.seed,
        config_hash: config.content_hash(),
        cassette_hash: file_sha256(&config.paths.cassette),
        offline,
        stages,
        elapsed_secs: if offline { None } else { Some(started.elapsed().as_secs_f64()) },
    };
    std::fs::write(
        out.join("report.json"),
        serde_json::to_string_pretty(&report)? + "\n",
    )?;
    Ok(report)
}
