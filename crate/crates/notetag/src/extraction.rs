//! Prompt construction, handbook generation, the guided multi-step tag
//! extraction pipeline, and strict parsing of model output into tag sets.

use crate::error::{Error, Result};
use crate::gateway::{ChatClient, ChatMessage, ChatRequest};
use crate::model::{
    aggregate_text, select_visuals, Catalog, Handbook, HandbookDimension, HandbookProvenance,
    Note, Tag, TagSet,
};
use serde::{Deserialize, Serialize};

/// Identifiers for the shipped prompt templates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptTemplateId {
    HandbookGen,
    Step1Generate,
    Step2Merge,
    Step3Rank,
    FullCot,
}

/// Style and format constraints substituted into the tag-requirement
/// placeholders. The shipped defaults cap output at 10 noun phrases of
/// 2-6 words each.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct StyleConfig {
    pub quantity: String,
    pub part_of_speech: String,
    pub format: String,
    pub special: String,
    pub few_shot_example: String,
}

impl Default for StyleConfig {
    fn default() -> Self {
        Self {
            quantity: "at most 10 tags".into(),
            part_of_speech: "noun phrases".into(),
            format: "2-6 words each".into(),
            special: "no purely promotional or brand-only tags".into(),
            few_shot_example: r#"[{"tag": "retro running shoes", "importance": 5}, {"tag": "suede upper", "importance": 3}]"#.into(),
        }
    }
}

impl StyleConfig {
    fn requirements(&self) -> String {
        format!(
            "{} + {} + {} + {}",
            self.quantity, self.part_of_speech, self.format, self.special
        )
    }
}

const JSON_OUTPUT_INSTRUCTION: &str = "If no tags exist, output an empty string. If tags exist, output them in JSON format as a list of {\"tag\": ..., \"importance\": ...} objects. Do not add any additional information beyond the required output.";

/// Renders the handbook-generation prompt for one category.
pub fn render_handbook_prompt(catalog: &Catalog, category_id: &str) -> Result<String> {
    let category = catalog
        .get(category_id)
        .ok_or_else(|| Error::UnknownCategory(category_id.to_string()))?;
    Ok(format!(
        "Assume that you are an expert in community operations. Currently, the notes in the community are divided into {} categories. For the notes in the {}, what dimensions of words can serve as content keywords?\n\nList one dimension per line as \"- <dimension name>: <what counts as a keyword on this dimension>\".",
        catalog.len(),
        category.name
    ))
}

/// Step 1: generate tags from the handbook dimensions.
pub fn render_step1(note_text: &str, handbook: &Handbook, style: &StyleConfig) -> String {
    format!(
        "[Step1] Please understand the core content of the note, and refer to the key dimensions in the handbook to generate tags.\n\nHandbook:\n{}\n\nFormatting: {}\n\nNote Content:\n{}",
        handbook.render(),
        style.requirements(),
        note_text
    )
}

/// Step 2: merge low-information tags and drop noise.
pub fn render_step2() -> String {
    "[Step2] Refine the tags by merging low-information tags and deleting tags that are irrelevant or trivial. If there are inconsistencies between the images and text, discard the tags extracted from the images.".to_string()
}

/// Step 3: rank by importance and emit the final JSON.
pub fn render_step3() -> String {
    format!(
        "[Step3] Rank the tags by importance. For each tag, assign an importance score (1-5) based on the core content of the note. A score of 5 indicates the highest importance, and 1 indicates the lowest.\n\n{JSON_OUTPUT_INSTRUCTION}"
    )
}

/// The combined template covering Steps 1-4 in one request, including the
/// final review step.
pub fn render_full_cot(
    category_name: &str,
    handbook: &Handbook,
    style: &StyleConfig,
    note_text: &str,
) -> String {
    format!(
        "Assume that you are an expert in operating a short video and graphic content platform, responsible for the {category}. You now need to complete the tag generation task for multimedia content in this category. Based on the given content (including images, titles, body text, and product details), summarize and extract key information.\n\n\
You have a category-specific Handbook recording the dimensions users in this category care about. The Handbook is as follows:\n\n\
HandBook:\n{handbook}\n\n\
You need to work according to the following steps:\n\n\
[Step 1]: Understand the core content of the multimedia content and generate tags based on the key dimensions outlined in the Handbook.\n\
Tag requirements: {requirements}\n\n\
[Step 2]: Deeply analyze the content's core ideas. Refine tags generated in Step 1:\n\
- Merge simple, low-information tags. Delete unrelated, trivial, or colloquial keywords that do not align with the core content.\n\
- Focus on tag quality over quantity, retaining only keywords most relevant to the content. If the content lacks substance or contains no valid information, the keywords should be left blank.\n\
- If inconsistencies are found between product content and the main multimedia content, delete keywords extracted from those products.\n\
- If inconsistencies are found between the image and text information, disregard keywords extracted from the image and prioritize text-based content.\n\n\
[Step 3]: Assign importance scores to the keywords refined in Step 2.\n\
Evaluate each keyword's relevance to the multimedia content and assign an importance score (1-5), where 5 indicates the highest importance and 1 indicates the lowest. Sort keywords and their corresponding importance scores in descending order of importance.\n\n\
[Step 4]: Perform a final review of the refined keywords:\n\
Ensure they meet the above standards and do not include trivial or meaningless tags. Finalize the output. {json_instruction}\n\n\
Result example: {example}\n\
Note Content:\n{note}",
        category = category_name,
        handbook = handbook.render(),
        requirements = style.requirements(),
        json_instruction = JSON_OUTPUT_INSTRUCTION,
        example = style.few_shot_example,
        note = note_text,
    )
}

/// Calls the model with the handbook-generation prompt and parses its
/// dimension list.
pub fn generate_handbook(
    catalog: &Catalog,
    category_id: &str,
    client: &dyn ChatClient,
    model: &str,
) -> Result<Handbook> {
    let prompt = render_handbook_prompt(catalog, category_id)?;
    let request = ChatRequest::new(model, vec![ChatMessage::user(prompt)]);
    let completion = client.complete(&request)?;
    let dimensions = parse_dimension_list(&completion.text);
    if dimensions.is_empty() {
        return Err(Error::MalformedResponse(format!(
            "no parseable handbook dimensions in: {:?}",
            completion.text
        )));
    }
    Handbook::new(category_id.to_string(), dimensions, HandbookProvenance::LlmGenerated)
}

/// Accepts bullet ("- name: guidance") and numbered ("1. name") lines.
fn parse_dimension_list(raw: &str) -> Vec<HandbookDimension> {
    let mut out: Vec<HandbookDimension> = Vec::new();
    for line in raw.lines() {
        let line = line.trim();
        let stripped = line
            .strip_prefix("- ")
            .or_else(|| line.strip_prefix("* "))
            .or_else(|| {
                let no_num = line.trim_start_matches(|c: char| c.is_ascii_digit());
                no_num.strip_prefix(". ").or_else(|| no_num.strip_prefix(") "))
            });
        let Some(item) = stripped else { continue };
        let (name, guidance) = match item.split_once(':') {
            Some((n, g)) => (n.trim(), g.trim()),
            None => (item.trim(), ""),
        };
        if name.is_empty() || out.iter().any(|d| d.name == name) {
            continue;
        }
        out.push(HandbookDimension { name: name.to_string(), guidance: guidance.to_string() });
    }
    out
}

/// An expert edit applied to an LLM-generated handbook.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum HandbookEdit {
    Add { name: String, guidance: String },
    Remove { name: String },
    Rename { from: String, to: String },
}

/// Applies expert edits in order; the result is provenance `expert_refined`.
pub fn refine_handbook(base: &Handbook, edits: &[HandbookEdit]) -> Result<Handbook> {
    let mut dims = base.dimensions.clone();
    for edit in edits {
        match edit {
            HandbookEdit::Add { name, guidance } => {
                if dims.iter().any(|d| d.name == *name) {
                    return Err(Error::DuplicateDimension(name.clone()));
                }
                dims.push(HandbookDimension { name: name.clone(), guidance: guidance.clone() });
            }
            HandbookEdit::Remove { name } => {
                let pos = dims
                    .iter()
                    .position(|d| d.name == *name)
                    .ok_or_else(|| Error::UnknownDimension(name.clone()))?;
                dims.remove(pos);
            }
            HandbookEdit::Rename { from, to } => {
                if dims.iter().any(|d| d.name == *to) {
                    return Err(Error::DuplicateDimension(to.clone()));
                }
                let dim = dims
                    .iter_mut()
                    .find(|d| d.name == *from)
                    .ok_or_else(|| Error::UnknownDimension(from.clone()))?;
                dim.name = to.clone();
            }
        }
    }
    Handbook::new(base.category.clone(), dims, HandbookProvenance::ExpertRefined)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractionMode {
    ThreeTurn,
    SingleShot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractionStep {
    Step1Generate,
    Step2Merge,
    Step3Rank,
    FullCot,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepOutput {
    pub step: ExtractionStep,
    pub raw_text: String,
}

/// Everything the pipeline saw while extracting one note.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtractionTrace {
    pub note_id: String,
    pub step_outputs: Vec<StepOutput>,
    pub final_tags: TagSet,
}

/// Visual sampling knobs for extraction requests.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct VisualSampling {
    pub sample_interval: f64,
    pub max_images: usize,
}

impl Default for VisualSampling {
    fn default() -> Self {
        Self { sample_interval: 5.0, max_images: 8 }
    }
}

/// Runs the guided extraction for one note.
///
/// `ThreeTurn` issues the three step prompts as one growing conversation;
/// `SingleShot` sends the combined template in a single request. In both
/// modes the final tag set is parsed from the last model output.
pub fn run_cot_extraction(
    note: &Note,
    handbook: &Handbook,
    catalog: &Catalog,
    client: &dyn ChatClient,
    model: &str,
    mode: ExtractionMode,
    style: &StyleConfig,
    sampling: &VisualSampling,
) -> Result<ExtractionTrace> {
    if handbook.category != note.category {
        return Err(Error::CategoryMismatch {
            handbook: handbook.category.clone(),
            note: note.category.clone(),
        });
    }
    note.validate(catalog)?;
    let category_name = catalog
        .get(&note.category)
        .map(|c| c.name.clone())
        .unwrap_or_else(|| note.category.clone());

    let note_text = aggregate_text(note);
    let visuals = select_visuals(note, sampling.sample_interval, sampling.max_images);

    let mut step_outputs = Vec::new();
    let final_raw = match mode {
        ExtractionMode::SingleShot => {
            let prompt = render_full_cot(&category_name, handbook, style, &note_text);
            let request = ChatRequest::new(
                model,
                vec![ChatMessage::user_with_images(prompt, &visuals)],
            );
            let completion = client.complete(&request)?;
            step_outputs.push(StepOutput {
                step: ExtractionStep::FullCot,
                raw_text: completion.text.clone(),
            });
            completion.text
        }
        ExtractionMode::ThreeTurn => {
            let mut messages = vec![ChatMessage::user_with_images(
                render_step1(&note_text, handbook, style),
                &visuals,
            )];
            let steps = [
                (ExtractionStep::Step1Generate, None),
                (ExtractionStep::Step2Merge, Some(render_step2())),
                (ExtractionStep::Step3Rank, Some(render_step3())),
            ];
            let mut last = String::new();
            for (step, follow_up) in steps {
                if let Some(prompt) = follow_up {
                    messages.push(ChatMessage::user(prompt));
                }
                let request = ChatRequest::new(model, messages.clone());
                let completion = client.complete(&request)?;
                messages.push(ChatMessage::assistant(completion.text.clone()));
                step_outputs.push(StepOutput { step, raw_text: completion.text.clone() });
                last = completion.text;
            }
            last
        }
    };

    let final_tags = parse_tag_json(&note.id, &final_raw)?;
    Ok(ExtractionTrace { note_id: note.id.clone(), step_outputs, final_tags })
}

/// Parses a model's final tag output.
///
/// Accepts an empty string (empty tag set), a JSON array of
/// `{"tag", "importance"}` entries, a single such object, or an object
/// wrapping the array under a `tags` key. Importance outside [1,5] is an
/// error, never clamped.
pub fn parse_tag_json(note_id: &str, raw: &str) -> Result<TagSet> {
    let trimmed = strip_code_fence(raw.trim());
    if trimmed.is_empty() || trimmed == "\"\"" {
        return Ok(TagSet::empty(note_id));
    }
    let value: serde_json::Value = serde_json::from_str(trimmed)
        .map_err(|e| Error::MalformedResponse(format!("invalid tag JSON: {e}")))?;
    let entries: Vec<serde_json::Value> = match value {
        serde_json::Value::Array(items) => items,
        serde_json::Value::Object(ref obj) if obj.contains_key("tags") => match &obj["tags"] {
            serde_json::Value::Array(items) => items.clone(),
            other => {
                return Err(Error::MalformedResponse(format!(
                    "\"tags\" is not an array: {other}"
                )))
            }
        },
        serde_json::Value::Object(_) => vec![value],
        serde_json::Value::String(s) if s.is_empty() => return Ok(TagSet::empty(note_id)),
        other => {
            return Err(Error::MalformedResponse(format!(
                "expected object or array, got: {other}"
            )))
        }
    };

    let mut tags = Vec::with_capacity(entries.len());
    for entry in entries {
        let text = entry["tag"]
            .as_str()
            .ok_or_else(|| Error::MalformedResponse(format!("entry without tag text: {entry}")))?;
        let importance = entry["importance"].as_i64().ok_or_else(|| {
            Error::MalformedResponse(format!("entry without integer importance: {entry}"))
        })?;
        tags.push(Tag::new(text, importance)?);
    }
    Ok(TagSet::new(note_id, tags))
}

fn strip_code_fence(s: &str) -> &str {
    let s = s.trim();
    if let Some(rest) = s.strip_prefix("```") {
        let rest = rest.strip_prefix("json").unwrap_or(rest);
        if let Some(end) = rest.rfind("```") {
            return rest[..end].trim();
        }
    }
    s
}
