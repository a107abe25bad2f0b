//! Converts tags into recommendation features: interaction-weighted user
//! profiles and fixed-dimension tag embeddings.

use crate::error::{Error, Result};
use crate::model::{InteractionEvent, InteractionKind, TagSet};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::collections::HashMap;

/// Additive score added per interaction kind.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct InteractionWeights {
    pub click: f64,
    pub like: f64,
    pub favorite: f64,
}

impl Default for InteractionWeights {
    fn default() -> Self {
        Self { click: 1.0, like: 2.0, favorite: 3.0 }
    }
}

impl InteractionWeights {
    pub fn weight(&self, kind: InteractionKind) -> f64 {
        match kind {
            InteractionKind::Click => self.click,
            InteractionKind::Like => self.like,
            InteractionKind::Favorite => self.favorite,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.click < 0.0 || self.like < 0.0 || self.favorite < 0.0 {
            return Err(Error::InvalidInput("interaction weights must be >= 0".into()));
        }
        Ok(())
    }
}

/// Per-user accumulated tag scores. Absent tags mean score 0.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: String,
    pub tag_scores: BTreeMap<String, f64>,
}

/// Fixed-length vector encoding of a note's concatenated tags.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TagEmbedding {
    pub note_id: String,
    pub vector: Vec<f64>,
}

/// Accumulates tag scores over a user's interaction events. Every tag of an
/// interacted note gains the weight of the interaction kind; the sum is
/// order-invariant over events.
pub fn build_user_profile(
    user_id: &str,
    events: &[InteractionEvent],
    tags_by_note: &HashMap<String, TagSet>,
    weights: &InteractionWeights,
) -> Result<UserProfile> {
    weights.validate()?;
    let mut tag_scores: BTreeMap<String, f64> = BTreeMap::new();
    for event in events {
        if event.user_id != user_id {
            continue;
        }
        let tags = tags_by_note
            .get(&event.note_id)
            .ok_or_else(|| Error::MissingTagSet(event.note_id.clone()))?;
        let w = weights.weight(event.kind);
        for tag in &tags.tags {
            *tag_scores.entry(tag.tag.clone()).or_insert(0.0) += w;
        }
    }
    Ok(UserProfile { user_id: user_id.to_string(), tag_scores })
}

/// Anything that maps text to a fixed-length vector.
pub trait TextEncoder: Send + Sync {
    fn dim(&self) -> usize;
    fn encode(&self, text: &str) -> Result<Vec<f64>>;
}

/// Concatenates the tags in stored (importance-descending) order and
/// encodes the result. An empty tag set maps to the zero vector.
pub fn embed_tags(tagset: &TagSet, encoder: &dyn TextEncoder) -> Result<TagEmbedding> {
    let vector = if tagset.is_empty() {
        vec![0.0; encoder.dim()]
    } else {
        encoder.encode(&tagset.concat_tags())?
    };
    Ok(TagEmbedding { note_id: tagset.note_id.clone(), vector })
}

/// Character-trigram feature hashing with signed buckets; the output is
/// L2-normalized unless all-zero. Deterministic for a fixed seed.
#[derive(Debug, Clone)]
pub struct HashingEncoder {
    pub dim: usize,
    pub seed: u64,
}

impl HashingEncoder {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim >= 8, "hashing encoder needs dim >= 8");
        Self { dim, seed }
    }
}

impl TextEncoder for HashingEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, text: &str) -> Result<Vec<f64>> {
        Ok(hashing_encoder(text, self.dim, self.seed))
    }
}

/// The free-function form of the hashing encoder.
pub fn hashing_encoder(text: &str, dim: usize, seed: u64) -> Vec<f64> {
    assert!(dim >= 8, "hashing encoder needs dim >= 8");
    let mut v = vec![0.0f64; dim];
    let chars: Vec<char> = text.chars().collect();
    if chars.is_empty() {
        return v;
    }
    let n = 3usize;
    let grams: Vec<&[char]> = if chars.len() < n {
        vec![&chars[..]]
    } else {
        chars.windows(n).collect()
    };
    for gram in grams {
        let h = fnv1a_seeded(gram, seed);
        let bucket = (h % dim as u64) as usize;
        let sign = if (h >> 63) & 1 == 0 { 1.0 } else { -1.0 };
        v[bucket] += sign;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in &mut v {
            *x /= norm;
        }
    }
    v
}

fn fnv1a_seeded(gram: &[char], seed: u64) -> u64 {
    const OFFSET: u64 = 0xcbf29ce484222325;
    const PRIME: u64 = 0x100000001b3;
    let mut h = OFFSET ^ seed.wrapping_mul(0x9e3779b97f4a7c15);
    let mut buf = [0u8; 4];
    for &c in gram {
        for b in c.encode_utf8(&mut buf).as_bytes() {
            h ^= *b as u64;
            h = h.wrapping_mul(PRIME);
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Tag;

    fn tagset(id: &str, texts: &[&str]) -> TagSet {
        TagSet::new(
            id,
            texts.iter().map(|t| Tag::new(t, 3).unwrap()).collect(),
        )
    }

    fn event(user: &str, note: &str, kind: InteractionKind) -> InteractionEvent {
        InteractionEvent { user_id: user.into(), note_id: note.into(), kind, timestamp: 0 }
    }

    #[test]
    fn single_click_scores_all_tags() {
        let mut tags = HashMap::new();
        tags.insert("n1".to_string(), tagset("n1", &["suede upper", "retro running shoes"]));
        let weights = InteractionWeights { click: 1.0, like: 2.0, favorite: 3.0 };
        let p = build_user_profile(
            "u1",
            &[event("u1", "n1", InteractionKind::Click)],
            &tags,
            &weights,
        )
        .unwrap();
        assert_eq!(p.tag_scores["suede upper"], 1.0);
        assert_eq!(p.tag_scores["retro running shoes"], 1.0);
    }

    #[test]
    fn scores_accumulate_across_events() {
        // hand-sum: click 1.0 + favorite 3.0 = 4.0 per tag
        let mut tags = HashMap::new();
        tags.insert("n1".to_string(), tagset("n1", &["wool coat"]));
        let weights = InteractionWeights { click: 1.0, like: 2.0, favorite: 3.0 };
        let p = build_user_profile(
            "u1",
            &[
                event("u1", "n1", InteractionKind::Click),
                event("u1", "n1", InteractionKind::Favorite),
            ],
            &tags,
            &weights,
        )
        .unwrap();
        assert_eq!(p.tag_scores["wool coat"], 4.0);
    }

    #[test]
    fn empty_events_empty_profile() {
        let p = build_user_profile("u1", &[], &HashMap::new(), &InteractionWeights::default())
            .unwrap();
        assert!(p.tag_scores.is_empty());
    }

    #[test]
    fn missing_tagset_is_error() {
        let r = build_user_profile(
            "u1",
            &[event("u1", "ghost", InteractionKind::Click)],
            &HashMap::new(),
            &InteractionWeights::default(),
        );
        assert!(matches!(r, Err(Error::MissingTagSet(_))));
    }

    #[test]
    fn profile_order_invariant_and_linear() {
        let mut tags = HashMap::new();
        tags.insert("n1".to_string(), tagset("n1", &["a"]));
        tags.insert("n2".to_string(), tagset("n2", &["a", "b"]));
        let evs = vec![
            event("u1", "n1", InteractionKind::Like),
            event("u1", "n2", InteractionKind::Click),
        ];
        let mut rev = evs.clone();
        rev.reverse();
        let w = InteractionWeights::default();
        let p1 = build_user_profile("u1", &evs, &tags, &w).unwrap();
        let p2 = build_user_profile("u1", &rev, &tags, &w).unwrap();
        assert_eq!(p1.tag_scores, p2.tag_scores);

        let doubled = InteractionWeights { click: 2.0, like: 4.0, favorite: 6.0 };
        let p3 = build_user_profile("u1", &evs, &tags, &doubled).unwrap();
        for (k, v) in &p1.tag_scores {
            assert_eq!(p3.tag_scores[k], v * 2.0);
        }
    }

    #[test]
    fn hashing_encoder_contract() {
        assert!(hashing_encoder("", 16, 7).iter().all(|&x| x == 0.0));
        let v = hashing_encoder("retro running shoes", 64, 7);
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
        assert_eq!(v, hashing_encoder("retro running shoes", 64, 7));
        assert_ne!(v, hashing_encoder("retro running shoes", 64, 8));
    }

    #[test]
    fn embed_tags_contract() {
        let enc = HashingEncoder::new(32, 1);
        let empty = embed_tags(&TagSet::empty("n0"), &enc).unwrap();
        assert!(empty.vector.iter().all(|&x| x == 0.0));
        assert_eq!(empty.vector.len(), 32);

        let ts = tagset("n1", &["wool coat", "knit dress"]);
        let a = embed_tags(&ts, &enc).unwrap();
        let b = embed_tags(&ts, &enc).unwrap();
        assert_eq!(a.vector, b.vector);
    }

    #[test]
    fn differing_tagsets_almost_surely_differ() {
        // 100 random-ish pairs differing in one tag
        let enc = HashingEncoder::new(64, 42);
        let mut differing = 0;
        for i in 0..100 {
            let a = tagset("n", &["base tag", &format!("variant {i}")]);
            let b = tagset("n", &["base tag", &format!("variant {}", i + 100)]);
            if embed_tags(&a, &enc).unwrap().vector != embed_tags(&b, &enc).unwrap().vector {
                differing += 1;
            }
        }
        assert_eq!(differing, 100);
    }
}
