//! Distillation dataset construction: the supervised fine-tuning export and
//! judge-mined preference pairs.

use crate::error::{Error, Result};
use crate::extraction::{render_full_cot, StyleConfig, VisualSampling};
use crate::gateway::{ChatClient, ChatMessage};
use crate::judge::{dual_evaluate, DualEvalResult, Rational};
use crate::model::{aggregate_text, select_visuals, Catalog, Handbook, Note, TagSet};
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};

/// One supervised fine-tuning example: prompt messages plus the serialized
/// target tag set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SftRecord {
    pub note_id: String,
    pub messages: Vec<ChatMessage>,
    pub response: String,
}

/// One preference pair: the reference answer is chosen, the generated
/// answer rejected, with the full judge verdict kept for auditing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PreferencePair {
    pub note_id: String,
    pub prompt: Vec<ChatMessage>,
    pub chosen: String,
    pub rejected: String,
    pub verdict: DualEvalResult,
}

/// Outcome counts of a preference-mining run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DpoSummary {
    pub selected: usize,
    pub tied: usize,
    pub won: usize,
    pub errored: usize,
}

fn render_prompt_messages(
    note: &Note,
    handbook: &Handbook,
    catalog: &Catalog,
    style: &StyleConfig,
    sampling: &VisualSampling,
) -> Vec<ChatMessage> {
    let category_name = catalog
        .get(&note.category)
        .map(|c| c.name.clone())
        .unwrap_or_else(|| note.category.clone());
    let prompt = render_full_cot(&category_name, handbook, style, &aggregate_text(note));
    let visuals = select_visuals(note, sampling.sample_interval, sampling.max_images);
    vec![ChatMessage::user_with_images(prompt, &visuals)]
}

/// Emits one SFT record per note, pairing each note with its tag set and
/// rendering the combined extraction template as the prompt.
pub fn export_sft(
    notes: &[Note],
    tagsets: &[TagSet],
    handbooks: &HashMap<String, Handbook>,
    catalog: &Catalog,
    style: &StyleConfig,
    sampling: &VisualSampling,
) -> Result<Vec<SftRecord>> {
    let mut seen = HashSet::new();
    for n in notes {
        if !seen.insert(n.id.as_str()) {
            return Err(Error::DuplicateNote(n.id.clone()));
        }
    }
    let by_note: HashMap<&str, &TagSet> =
        tagsets.iter().map(|t| (t.note_id.as_str(), t)).collect();
    for t in tagsets {
        if !seen.contains(t.note_id.as_str()) {
            return Err(Error::MissingNote(t.note_id.clone()));
        }
    }

    let mut out = Vec::with_capacity(notes.len());
    for note in notes {
        let tags = by_note
            .get(note.id.as_str())
            .ok_or_else(|| Error::MissingTagSet(note.id.clone()))?;
        let handbook = handbooks
            .get(&note.category)
            .ok_or_else(|| Error::UnknownCategory(note.category.clone()))?;
        out.push(SftRecord {
            note_id: note.id.clone(),
            messages: render_prompt_messages(note, handbook, catalog, style, sampling),
            response: tags.to_json(),
        });
    }
    Ok(out)
}

/// Dual-evaluates each generated tag set (position A) against its reference
/// (position B) and keeps the pairs the judge scored below zero.
///
/// Judge failures skip the item and the run continues; every pool note is
/// accounted for in the summary.
#[allow(clippy::too_many_arguments)]
pub fn build_dpo_pairs(
    pool_notes: &[Note],
    generated: &[TagSet],
    references: &[TagSet],
    handbooks: &HashMap<String, Handbook>,
    catalog: &Catalog,
    style: &StyleConfig,
    sampling: &VisualSampling,
    client: &dyn ChatClient,
    judge_model: &str,
) -> Result<(Vec<PreferencePair>, DpoSummary)> {
    let gen_by_note: HashMap<&str, &TagSet> =
        generated.iter().map(|t| (t.note_id.as_str(), t)).collect();
    let ref_by_note: HashMap<&str, &TagSet> =
        references.iter().map(|t| (t.note_id.as_str(), t)).collect();

    let mut pairs = Vec::new();
    let mut summary = DpoSummary::default();
    let zero = Rational::from_integer(0);

    for note in pool_notes {
        let (Some(gen), Some(reference)) = (
            gen_by_note.get(note.id.as_str()),
            ref_by_note.get(note.id.as_str()),
        ) else {
            return Err(Error::MissingTagSet(note.id.clone()));
        };
        let Some(handbook) = handbooks.get(&note.category) else {
            return Err(Error::UnknownCategory(note.category.clone()));
        };

        let chosen = reference.to_json();
        let rejected = gen.to_json();
        if chosen == rejected {
            summary.tied += 1;
            continue;
        }
        match dual_evaluate(note, handbook, gen, reference, client, judge_model) {
            Ok(verdict) => {
                if verdict.combined < zero {
                    summary.selected += 1;
                    pairs.push(PreferencePair {
                        note_id: note.id.clone(),
                        prompt: render_prompt_messages(note, handbook, catalog, style, sampling),
                        chosen,
                        rejected,
                        verdict,
                    });
                } else if verdict.combined == zero {
                    summary.tied += 1;
                } else {
                    summary.won += 1;
                }
            }
            Err(_) => summary.errored += 1,
        }
    }
    Ok((pairs, summary))
}
