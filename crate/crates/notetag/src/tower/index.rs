//! Exact brute-force inner-product retrieval index.

use crate::error::{Error, Result};

/// A flat list of item vectors; queries scan everything.
#[derive(Debug, Clone, Default)]
pub struct ItemIndex {
    pub dim: usize,
    pub items: Vec<(String, Vec<f64>)>,
}

impl ItemIndex {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

pub fn build_item_index(items: Vec<(String, Vec<f64>)>) -> Result<ItemIndex> {
    let dim = items.first().map(|(_, v)| v.len()).unwrap_or(0);
    for (_, v) in &items {
        if v.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: v.len() });
        }
    }
    Ok(ItemIndex { dim, items })
}

/// K items with the largest inner product against the query, descending;
/// ties break by item id ascending. Returns fewer than K only when the
/// index is smaller than K.
pub fn retrieve_top_k(index: &ItemIndex, u_hat: &[f64], k: usize) -> Vec<(String, f64)> {
    assert!(k >= 1, "k must be at least 1");
    let mut scored: Vec<(&String, f64)> = index
        .items
        .iter()
        .map(|(id, v)| (id, super::dot(u_hat, v)))
        .collect();
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.0.cmp(b.0))
    });
    scored
        .into_iter()
        .take(k)
        .map(|(id, s)| (id.clone(), s))
        .collect()
}
