//! Deterministic synthetic corpus generation for desk-scale experiments.
//!
//! Users and items are grouped into tag themes; the click probability rises
//! with the tag overlap between a user's latent preferences and an item's
//! tags, so ground-truth affinity is known and recall is measurable. The
//! generator can also script a full response cassette so the whole pipeline
//! replays offline.

use crate::error::Result;
use crate::extraction::{render_full_cot, StyleConfig, VisualSampling};
use crate::features::hashing_encoder;
use crate::gateway::{fingerprint, CassetteEntry, ChatMessage, ChatRequest};
use crate::judge::{render_bas_prompt, render_pairwise_prompt};
use crate::model::{
    aggregate_text, select_visuals, Catalog, Handbook, HandbookDimension, HandbookProvenance,
    InteractionEvent, InteractionKind, Note, Tag, TagSet,
};
use crate::tower::RawExample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticWorld {
    pub seed: u64,
    pub n_users: usize,
    pub n_items: usize,
    pub n_tags: usize,
    pub n_themes: usize,
    pub tags_per_item: usize,
    pub tags_per_user: usize,
    /// Click probability is sigmoid(alpha * overlap + beta).
    pub alpha: f64,
    pub beta: f64,
    pub events_per_user: usize,
    pub tag_vec_dim: usize,
    pub encoder_seed: u64,
}

impl Default for SyntheticWorld {
    fn default() -> Self {
        Self {
            seed: 0,
            n_users: 50,
            n_items: 200,
            n_tags: 64,
            n_themes: 8,
            tags_per_item: 4,
            tags_per_user: 6,
            alpha: 2.0,
            beta: -4.0,
            events_per_user: 60,
            tag_vec_dim: 64,
            encoder_seed: 17,
        }
    }
}

/// Everything the generator produces for one world.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub notes: Vec<Note>,
    /// Ground-truth tag sets, one per note; these double as the teacher
    /// reference answers.
    pub reference_tags: Vec<TagSet>,
    pub events: Vec<InteractionEvent>,
    pub examples: Vec<RawExample>,
    /// Per-user true tag-overlap with every item, for recall evaluation.
    pub affinity: Vec<Vec<usize>>,
    pub user_ids: Vec<String>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn gen_synthetic(world: &SyntheticWorld, catalog: &Catalog) -> SyntheticData {
    assert!(world.n_users >= 1 && world.n_items >= 1 && world.n_tags >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(world.seed);

    // tag vocabulary partitioned into themes; tags in one theme share a
    // noun so their trigram embeddings cluster, mirroring how real tags in
    // one interest area share vocabulary
    const ADJECTIVES: [&str; 8] = [
        "retro", "cozy", "minimal", "vivid", "rustic", "sleek", "playful", "classic",
    ];
    const NOUNS: [&str; 8] = [
        "sneakers", "skincare", "ramen", "hiking", "decor", "cameras", "playlists", "journaling",
    ];
    let theme_of_tag = |t: usize| t % world.n_themes.max(1);
    let vocab: Vec<String> = (0..world.n_tags)
        .map(|t| {
            let theme = theme_of_tag(t);
            let adj = ADJECTIVES[(t / world.n_themes.max(1)) % ADJECTIVES.len()];
            let noun = NOUNS[theme % NOUNS.len()];
            // letter suffix keeps tags unique without the shared-digit
            // trigrams a numeric suffix would inject across themes
            let suffix: String = format!("{t:03}")
                .bytes()
                .map(|b| (b'a' + (b - b'0')) as char)
                .collect();
            format!("{adj} {noun} {suffix}")
        })
        .collect();
    let mut theme_tags: Vec<Vec<usize>> = vec![Vec::new(); world.n_themes.max(1)];
    for t in 0..world.n_tags {
        theme_tags[theme_of_tag(t)].push(t);
    }

    let pick_from_theme = |theme: usize, count: usize, rng: &mut ChaCha8Rng| -> Vec<usize> {
        let pool = &theme_tags[theme];
        let mut chosen = pool.clone();
        chosen.shuffle(rng);
        chosen.truncate(count.min(pool.len()));
        chosen.sort_unstable();
        chosen
    };

    // items
    let mut notes = Vec::with_capacity(world.n_items);
    let mut reference_tags = Vec::with_capacity(world.n_items);
    let mut item_tagsets: Vec<Vec<usize>> = Vec::with_capacity(world.n_items);
    for i in 0..world.n_items {
        let theme = rng.gen_range(0..world.n_themes.max(1));
        let tags = pick_from_theme(theme, world.tags_per_item, &mut rng);
        let category = &catalog.categories[i % catalog.len()];
        let id = format!("note{i:04}");
        let tag_texts: Vec<&str> = tags.iter().map(|&t| vocab[t].as_str()).collect();
        notes.push(Note {
            id: id.clone(),
            category: category.id.clone(),
            title: format!("Synthetic note {i}"),
            body: format!("This note covers {}.", tag_texts.join(", ")),
            product_desc: String::new(),
            asr_transcript: String::new(),
            image_refs: vec![],
            frame_refs: vec![],
        });
        let ts = TagSet::new(
            id,
            tags.iter()
                .enumerate()
                .map(|(rank, &t)| {
                    let importance = (5 - rank.min(4)) as i64;
                    Tag::new(&vocab[t], importance).unwrap()
                })
                .collect(),
        );
        reference_tags.push(ts);
        item_tagsets.push(tags);
    }

    // users with latent theme preferences
    let mut user_tagsets: Vec<Vec<usize>> = Vec::with_capacity(world.n_users);
    let mut user_ids = Vec::with_capacity(world.n_users);
    for u in 0..world.n_users {
        let theme = rng.gen_range(0..world.n_themes.max(1));
        user_tagsets.push(pick_from_theme(theme, world.tags_per_user, &mut rng));
        user_ids.push(format!("user{u:03}"));
    }

    // true affinity = tag overlap counts
    let affinity: Vec<Vec<usize>> = user_tagsets
        .iter()
        .map(|ut| {
            item_tagsets
                .iter()
                .map(|it| it.iter().filter(|t| ut.contains(t)).count())
                .collect()
        })
        .collect();

    // labeled interactions and training examples
    let mut events = Vec::new();
    let mut examples = Vec::new();
    for u in 0..world.n_users {
        for _ in 0..world.events_per_user {
            let i = rng.gen_range(0..world.n_items);
            let p = sigmoid(world.alpha * affinity[u][i] as f64 + world.beta);
            let y = if rng.gen_bool(p) { 1.0 } else { 0.0 };
            if y > 0.5 {
                let kind = match rng.gen_range(0..3) {
                    0 => InteractionKind::Click,
                    1 => InteractionKind::Like,
                    _ => InteractionKind::Favorite,
                };
                events.push(InteractionEvent {
                    user_id: user_ids[u].clone(),
                    note_id: notes[i].id.clone(),
                    kind,
                    timestamp: 1_700_000_000 + events.len() as i64,
                });
            }
            let z = hashing_encoder(
                &reference_tags[i].concat_tags(),
                world.tag_vec_dim,
                world.encoder_seed,
            );
            examples.push(RawExample { user_idx: u, item_idx: i, z, y });
        }
    }

    SyntheticData { notes, reference_tags, events, examples, affinity, user_ids }
}

/// The per-user ground-truth set for recall: the `m` items with the highest
/// true tag overlap, ties broken by item index.
pub fn affine_items(data: &SyntheticData, user: usize, m: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..data.affinity[user].len()).collect();
    idx.sort_by(|&a, &b| {
        data.affinity[user][b]
            .cmp(&data.affinity[user][a])
            .then_with(|| a.cmp(&b))
    });
    idx.truncate(m);
    idx
}

/// Handbooks for every category the synthetic notes use.
pub fn synthetic_handbooks(catalog: &Catalog) -> HashMap<String, Handbook> {
    catalog
        .categories
        .iter()
        .map(|c| {
            let hb = Handbook::new(
                c.id.clone(),
                vec![
                    HandbookDimension {
                        name: "Type".into(),
                        guidance: "what kind of thing the note is about".into(),
                    },
                    HandbookDimension {
                        name: "Feature".into(),
                        guidance: "distinguishing attributes worth tagging".into(),
                    },
                    HandbookDimension {
                        name: "Use case".into(),
                        guidance: "when or where the content applies".into(),
                    },
                ],
                HandbookProvenance::ExpertRefined,
            )
            .unwrap();
            (c.id.clone(), hb)
        })
        .collect()
}

fn stable_hash(s: &str) -> u64 {
    // FNV-1a, stable across runs
    let mut h: u64 = 0xcbf29ce484222325;
    for b in s.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// The tag set the scripted generator model "produces" for a note: a
/// deterministic perturbation of the reference so the judge has losses,
/// ties, and wins to hand out.
pub fn scripted_generated_tags(reference: &TagSet) -> TagSet {
    let bucket = stable_hash(&reference.note_id) % 3;
    let mut tags = reference.tags.clone();
    match bucket {
        0 => {
            // dropped detail: judged inferior to the reference
            tags.pop();
        }
        1 => {} // identical: tie
        _ => {
            // extra detail: judged superior
            tags.push(Tag::new(&format!("extra detail {}", reference.note_id), 1).unwrap());
        }
    }
    TagSet::new(reference.note_id.clone(), tags)
}

/// How the scripted judge votes on (generated = A) vs (reference = B).
/// Returns (forward, reversed) labels consistent with content.
pub fn scripted_verdict(reference: &TagSet) -> (&'static str, &'static str) {
    match stable_hash(&reference.note_id) % 3 {
        0 => ("A<B", "A>B"),
        1 => ("A=B", "A=B"),
        _ => ("A>B", "A<B"),
    }
}

/// Scripted basic-attribute verdict for a note, biased toward full marks.
pub fn scripted_bas(note_id: &str) -> String {
    let h = stable_hash(note_id);
    let truth = 1;
    let coverage = u8::from(h % 5 != 0);
    let importance = u8::from(h % 7 != 0);
    format!("{{'Truth': {truth}, 'Coverage': {coverage}, 'Importance': {importance}}}")
}

/// Model names and prompt knobs needed to script a cassette that matches
/// the requests the pipeline will issue.
pub struct CassetteSpec<'a> {
    pub generator_model: &'a str,
    pub judge_model: &'a str,
    pub style: &'a StyleConfig,
    pub sampling: &'a VisualSampling,
}

/// Builds the full replay cassette for an offline pipeline run over the
/// synthetic corpus: one extraction answer per note, one basic-attribute
/// verdict, and both passes of the pairwise comparison.
pub fn build_cassette(
    data: &SyntheticData,
    catalog: &Catalog,
    handbooks: &HashMap<String, Handbook>,
    spec: &CassetteSpec<'_>,
) -> Result<Vec<CassetteEntry>> {
    let mut entries = Vec::new();
    for (note, reference) in data.notes.iter().zip(&data.reference_tags) {
        let handbook = &handbooks[&note.category];
        let category_name = catalog
            .get(&note.category)
            .map(|c| c.name.clone())
            .unwrap_or_else(|| note.category.clone());
        let generated = scripted_generated_tags(reference);

        // extraction (single-shot)
        let prompt = render_full_cot(&category_name, handbook, spec.style, &aggregate_text(note));
        let visuals = select_visuals(note, spec.sampling.sample_interval, spec.sampling.max_images);
        let request = ChatRequest::new(
            spec.generator_model,
            vec![ChatMessage::user_with_images(prompt, &visuals)],
        );
        entries.push(CassetteEntry {
            fingerprint: fingerprint(&request),
            response_text: generated.to_json(),
        });

        // basic attribute scoring of the generated tags
        let bas = ChatRequest::new(
            spec.judge_model,
            vec![ChatMessage::user(render_bas_prompt(note, &generated, handbook))],
        );
        entries.push(CassetteEntry {
            fingerprint: fingerprint(&bas),
            response_text: scripted_bas(&note.id),
        });

        // pairwise, both positions
        let (fwd_label, rev_label) = scripted_verdict(reference);
        let fwd = ChatRequest::new(
            spec.judge_model,
            vec![ChatMessage::user(render_pairwise_prompt(note, handbook, &generated, reference))],
        );
        let rev = ChatRequest::new(
            spec.judge_model,
            vec![ChatMessage::user(render_pairwise_prompt(note, handbook, reference, &generated))],
        );
        entries.push(CassetteEntry {
            fingerprint: fingerprint(&fwd),
            response_text: fwd_label.to_string(),
        });
        entries.push(CassetteEntry {
            fingerprint: fingerprint(&rev),
            response_text: rev_label.to_string(),
        });
    }
    Ok(entries)
}
