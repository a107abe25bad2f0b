//! Core domain types: notes, categories, handbooks, tags, interactions.
//!
//! Everything here is an immutable value object after construction and safe
//! to share across threads.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

/// One note category (e.g. Shoes, Dressing).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub description: String,
}

/// A catalog of categories with unique ids.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Catalog {
    pub categories: Vec<Category>,
}

impl Catalog {
    pub fn new(categories: Vec<Category>) -> Result<Self> {
        let mut seen = HashSet::new();
        for c in &categories {
            if c.id.is_empty() {
                return Err(Error::InvalidInput("category id must be nonempty".into()));
            }
            if !seen.insert(c.id.clone()) {
                return Err(Error::InvalidInput(format!("duplicate category id: {}", c.id)));
            }
        }
        Ok(Self { categories })
    }

    pub fn get(&self, id: &str) -> Option<&Category> {
        self.categories.iter().find(|c| c.id == id)
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    /// The 18-category reference catalog shipped with the crate.
    pub fn reference() -> Self {
        let cats = [
            ("shoes", "Shoes", "Showcases various types of shoes, including running shoes, fashion shoes, and basketball shoes."),
            ("dressing", "Dressing", "Includes exhibitions of clothing, pants, accessories, and outfit recommendations."),
            ("sports", "Sports", "Covers information about various sports and recommendations for related equipment."),
            ("beauty", "Beauty", "Features recommendations for makeup, personal care products, and tutorials on makeup techniques."),
            ("digit", "Digit", "Includes recommendations and reviews for digital devices and equipment."),
            ("fitness", "Fitness", "Covers fitness tutorials, equipment, weight-loss meals, and related accessories."),
            ("home", "Home", "Showcases various home products and tutorials on space planning."),
            ("toys", "Toys", "Includes plush toys and alloy models."),
            ("food", "Food", "Features cooking tutorials and restaurant exploration vlogs."),
            ("lifestyle", "Lifestyle", "Captures various life records and reflections."),
            ("entertainment", "Entertainment", "Includes information and activities related to entertainment."),
            ("education", "Education", "Covers various courses and tutorials on life skills."),
            ("travel", "Travel", "Includes travel guides and experience sharing."),
            ("media", "Media", "Includes information and reflections on books, films, and music."),
            ("dance", "Dance", "Features various dance records and tutorials."),
            ("game", "Game", "Includes game guides and reviews of related equipment."),
            ("pets", "Pets", "Features pet-related sharing, knowledge, and product recommendations."),
            ("arts", "Arts", "Covers various artistic works and experience sharing."),
        ];
        Self {
            categories: cats
                .iter()
                .map(|(id, name, desc)| Category {
                    id: id.to_string(),
                    name: name.to_string(),
                    description: desc.to_string(),
                })
                .collect(),
        }
    }
}

/// Where a handbook's content came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HandbookProvenance {
    LlmGenerated,
    ExpertRefined,
}

/// One interest dimension inside a handbook.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HandbookDimension {
    pub name: String,
    #[serde(default)]
    pub guidance: String,
}

/// Per-category list of interest dimensions guiding tag generation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Handbook {
    pub category: String,
    pub dimensions: Vec<HandbookDimension>,
    pub provenance: HandbookProvenance,
}

impl Handbook {
    pub fn new(
        category: String,
        dimensions: Vec<HandbookDimension>,
        provenance: HandbookProvenance,
    ) -> Result<Self> {
        if provenance == HandbookProvenance::ExpertRefined && dimensions.is_empty() {
            return Err(Error::InvalidInput(
                "an expert-refined handbook needs at least one dimension".into(),
            ));
        }
        let mut seen = HashSet::new();
        for d in &dimensions {
            if d.name.is_empty() {
                return Err(Error::InvalidInput("dimension name must be nonempty".into()));
            }
            if !seen.insert(d.name.clone()) {
                return Err(Error::DuplicateDimension(d.name.clone()));
            }
        }
        Ok(Self { category, dimensions, provenance })
    }

    /// Rendered text of the handbook as sent to the model.
    pub fn render(&self) -> String {
        self.dimensions
            .iter()
            .map(|d| {
                if d.guidance.is_empty() {
                    format!("- {}", d.name)
                } else {
                    format!("- {}: {}", d.name, d.guidance)
                }
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// A frame reference with its source timestamp in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRef {
    #[serde(rename = "ref")]
    pub content_ref: String,
    pub timestamp: f64,
}

/// One multimodal community post.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Note {
    pub id: String,
    pub category: String,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub body: String,
    #[serde(default)]
    pub product_desc: String,
    #[serde(default)]
    pub asr_transcript: String,
    #[serde(default)]
    pub image_refs: Vec<String>,
    #[serde(default)]
    pub frame_refs: Vec<FrameRef>,
}

impl Note {
    /// Checks the structural invariants: nonempty id, resolvable category,
    /// and at least one text field or visual reference present.
    pub fn validate(&self, catalog: &Catalog) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::InvalidInput("note id must be nonempty".into()));
        }
        if catalog.get(&self.category).is_none() {
            return Err(Error::UnknownCategory(self.category.clone()));
        }
        let has_text = !self.title.is_empty()
            || !self.body.is_empty()
            || !self.product_desc.is_empty()
            || !self.asr_transcript.is_empty();
        if !has_text && self.image_refs.is_empty() && self.frame_refs.is_empty() {
            return Err(Error::InvalidInput(format!("note {} has no content", self.id)));
        }
        Ok(())
    }
}

/// A fine-grained tag with its importance score.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tag {
    pub tag: String,
    pub importance: u8,
}

impl Tag {
    pub fn new(text: &str, importance: i64) -> Result<Self> {
        let text = text.trim();
        if text.is_empty() {
            return Err(Error::InvalidInput("tag text empty after trimming".into()));
        }
        if !(1..=5).contains(&importance) {
            return Err(Error::ImportanceOutOfRange(importance));
        }
        Ok(Self { tag: text.to_string(), importance: importance as u8 })
    }
}

/// The ordered tag list produced for one note.
///
/// Tags are kept sorted by importance descending (stable on ties) and
/// deduplicated case-insensitively, keeping the higher importance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagSet {
    pub note_id: String,
    pub tags: Vec<Tag>,
}

impl TagSet {
    pub fn empty(note_id: impl Into<String>) -> Self {
        Self { note_id: note_id.into(), tags: Vec::new() }
    }

    /// Builds a tag set, enforcing the dedup and ordering invariants.
    pub fn new(note_id: impl Into<String>, tags: Vec<Tag>) -> Self {
        let mut kept: Vec<Tag> = Vec::new();
        for t in tags {
            let key = t.tag.to_lowercase();
            match kept.iter_mut().find(|k| k.tag.to_lowercase() == key) {
                Some(existing) => {
                    if t.importance > existing.importance {
                        existing.importance = t.importance;
                    }
                }
                None => kept.push(t),
            }
        }
        kept.sort_by(|a, b| b.importance.cmp(&a.importance));
        Self { note_id: note_id.into(), tags: kept }
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    /// Tag texts joined in stored order with a fixed separator.
    pub fn concat_tags(&self) -> String {
        self.tags.iter().map(|t| t.tag.as_str()).collect::<Vec<_>>().join(", ")
    }

    /// Canonical JSON form, `[{"tag": ..., "importance": ...}, ...]`.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.tags).expect("tag serialization cannot fail")
    }
}

/// One user interaction with a note.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InteractionEvent {
    pub user_id: String,
    pub note_id: String,
    pub kind: InteractionKind,
    pub timestamp: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionKind {
    Click,
    Like,
    Favorite,
}

/// Joins title, body, product description and transcript in that fixed
/// order with labeled section markers; empty fields are omitted.
pub fn aggregate_text(note: &Note) -> String {
    let mut sections = Vec::new();
    if !note.title.is_empty() {
        sections.push(format!("[TITLE] {}", note.title));
    }
    if !note.body.is_empty() {
        sections.push(format!("[BODY] {}", note.body));
    }
    if !note.product_desc.is_empty() {
        sections.push(format!("[PRODUCT] {}", note.product_desc));
    }
    if !note.asr_transcript.is_empty() {
        sections.push(format!("[ASR] {}", note.asr_transcript));
    }
    sections.join("\n")
}

/// Picks the visual inputs for a note: all images first, then video frames
/// sampled at `sample_interval` seconds (nearest available frame to each
/// multiple of the interval), truncated to `max_images` total.
pub fn select_visuals(note: &Note, sample_interval: f64, max_images: usize) -> Vec<String> {
    assert!(sample_interval > 0.0, "sample_interval must be positive");
    assert!(max_images >= 1, "max_images must be at least 1");

    let mut out: Vec<String> = Vec::new();
    for img in &note.image_refs {
        if out.len() >= max_images {
            return out;
        }
        out.push(img.clone());
    }
    if note.frame_refs.is_empty() {
        return out;
    }

    let max_ts = note
        .frame_refs
        .iter()
        .map(|f| f.timestamp)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut taken: HashSet<usize> = HashSet::new();
    let mut target = 0.0;
    while target <= max_ts && out.len() < max_images {
        // nearest available frame to the target time; earlier frame wins ties
        let mut best: Option<(usize, f64)> = None;
        for (i, f) in note.frame_refs.iter().enumerate() {
            if taken.contains(&i) {
                continue;
            }
            let d = (f.timestamp - target).abs();
            let better = match best {
                None => true,
                Some((_, bd)) => d < bd,
            };
            if better {
                best = Some((i, d));
            }
        }
        match best {
            Some((i, _)) => {
                taken.insert(i);
                out.push(note.frame_refs[i].content_ref.clone());
            }
            None => break,
        }
        target += sample_interval;
    }
    out
}
