//! Spatial bag-of-words place retrieval.
//!
//! Every visual word is tagged with its horizontal offset from the strongest
//! pole in view, binned to `bin_width` pixels, so that two views of the same
//! place agree on word identity *and* layout regardless of where the pole
//! sits in the frame. Places are indexed in an inverted file and scored by
//! TF-IDF cosine similarity.
//!
//! The y coordinate of the anchored position is carried through unchanged by
//! the anchoring rule; the route simulation has no vertical axis, so it is
//! constant and omitted from [`SpatialWord`].

mod codec;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::world::Observation;

pub use codec::{INDEX_MAGIC, INDEX_VERSION};

pub const DEFAULT_BIN_WIDTH: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SpatialWord {
    pub word_id: u32,
    pub x_bin: i32,
}

/// Pixel of the strongest pole projection; ties go to the leftmost.
pub fn anchor_pixel(obs: &Observation) -> Option<u32> {
    obs.pole_projections
        .iter()
        .fold(None::<(f64, u32)>, |best, p| match best {
            Some((l, x)) if l > p.likelihood || (l == p.likelihood && x <= p.pixel_x) => best,
            _ => Some((p.likelihood, p.pixel_x)),
        })
        .map(|(_, x)| x)
}

/// Re-express every word relative to the anchor pole. Callers gate on
/// detection first; an observation without any pole is an error.
pub fn anchor(obs: &Observation, bin_width: u32) -> Result<Vec<SpatialWord>> {
    let x_o = anchor_pixel(obs).ok_or(Error::NoAnchor)?;
    Ok(anchor_at(obs.words.iter().map(|w| (w.word_id, w.x)), x_o, bin_width))
}

pub fn anchor_at(
    words: impl IntoIterator<Item = (u32, u32)>,
    x_o: u32,
    bin_width: u32,
) -> Vec<SpatialWord> {
    let bw = i64::from(bin_width.max(1));
    words
        .into_iter()
        .map(|(word_id, x)| SpatialWord {
            word_id,
            x_bin: (i64::from(x) - i64::from(x_o)).div_euclid(bw) as i32,
        })
        .collect()
}

/// Sorted `(term, count)` pairs of a term multiset.
pub fn term_counts(terms: &[SpatialWord]) -> Vec<(SpatialWord, u32)> {
    let mut sorted = terms.to_vec();
    sorted.sort_unstable();
    let mut out: Vec<(SpatialWord, u32)> = Vec::new();
    for t in sorted {
        match out.last_mut() {
            Some((w, c)) if *w == t => *c += 1,
            _ => out.push((t, 1)),
        }
    }
    out
}

/// Smoothed inverse document frequency; strictly positive for every term.
pub fn smoothed_idf(n_images: u32, df: u32) -> f64 {
    ((f64::from(n_images) + 1.0) / (f64::from(df) + 1.0)).ln() + 1.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct SBoWDocument {
    pub place_id: u32,
    /// Sorted, unique terms with their in-document frequency.
    pub terms: Vec<(SpatialWord, u32)>,
    sq_norm: f64,
}

impl SBoWDocument {
    /// Euclidean norm of the TF-IDF vector.
    pub fn norm(&self) -> f64 {
        self.sq_norm.sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Posting {
    pub idf: f64,
    /// `(document slot, term frequency)`, slots ascending.
    pub entries: Vec<(u32, u32)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SBoWIndex {
    bin_width: u32,
    documents: Vec<SBoWDocument>,
    postings: BTreeMap<SpatialWord, Posting>,
    n_words: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RetrievalResult {
    /// `(place_id, similarity)`, similarity descending, ties by place id.
    pub ranked: Vec<(u32, f64)>,
}

impl RetrievalResult {
    pub fn is_empty(&self) -> bool {
        self.ranked.is_empty()
    }

    pub fn len(&self) -> usize {
        self.ranked.len()
    }
}

/// Work done by one query.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct QueryCost {
    /// Posting entries visited.
    pub postings_scanned: usize,
    /// Distinct documents that received a score.
    pub candidates: usize,
}

fn cosine(dot: f64, a_sq: f64, b_sq: f64) -> f64 {
    if dot <= 0.0 || a_sq <= 0.0 || b_sq <= 0.0 {
        return 0.0;
    }
    (dot / (a_sq * b_sq).sqrt()).min(1.0)
}

pub(crate) fn rank(scores: &mut [(u32, f64)]) {
    scores.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
}

impl SBoWIndex {
    pub fn build(docs: Vec<(u32, Vec<SpatialWord>)>, bin_width: u32) -> Result<Self> {
        let counted = docs
            .into_iter()
            .map(|(id, terms)| (id, term_counts(&terms)))
            .collect();
        Self::build_from_counts(counted, bin_width)
    }

    pub(crate) fn build_from_counts(
        mut docs: Vec<(u32, Vec<(SpatialWord, u32)>)>,
        bin_width: u32,
    ) -> Result<Self> {
        docs.sort_by_key(|d| d.0);
        if let Some(w) = docs.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::DuplicatePlace(w[0].0));
        }
        let n_images = docs.len() as u32;
        let mut postings: BTreeMap<SpatialWord, Posting> = BTreeMap::new();
        let mut total_terms = 0u64;
        for (slot, (_, terms)) in docs.iter().enumerate() {
            for &(w, tf) in terms {
                total_terms += u64::from(tf);
                postings
                    .entry(w)
                    .or_insert_with(|| Posting {
                        idf: 0.0,
                        entries: Vec::new(),
                    })
                    .entries
                    .push((slot as u32, tf));
            }
        }
        for p in postings.values_mut() {
            p.idf = smoothed_idf(n_images, p.entries.len() as u32);
        }
        let documents = docs
            .into_iter()
            .map(|(place_id, terms)| {
                let sq_norm = terms
                    .iter()
                    .map(|&(w, tf)| {
                        let weight = f64::from(tf) * postings[&w].idf;
                        weight * weight
                    })
                    .sum();
                SBoWDocument {
                    place_id,
                    terms,
                    sq_norm,
                }
            })
            .collect();
        let n_words = if n_images == 0 {
            0.0
        } else {
            total_terms as f64 / f64::from(n_images)
        };
        Ok(Self {
            bin_width,
            documents,
            postings,
            n_words,
        })
    }

    pub fn bin_width(&self) -> u32 {
        self.bin_width
    }

    pub fn n_images(&self) -> u32 {
        self.documents.len() as u32
    }

    /// Average number of terms per document.
    pub fn n_words(&self) -> f64 {
        self.n_words
    }

    pub fn documents(&self) -> &[SBoWDocument] {
        &self.documents
    }

    pub fn document(&self, place_id: u32) -> Option<&SBoWDocument> {
        self.documents
            .binary_search_by_key(&place_id, |d| d.place_id)
            .ok()
            .map(|i| &self.documents[i])
    }

    pub fn document_frequency(&self, w: &SpatialWord) -> u32 {
        self.postings.get(w).map_or(0, |p| p.entries.len() as u32)
    }

    /// IDF of a term; unseen terms get the smoothed value for `df = 0`.
    pub fn idf(&self, w: &SpatialWord) -> f64 {
        self.postings
            .get(w)
            .map_or_else(|| smoothed_idf(self.n_images(), 0), |p| p.idf)
    }

    fn query_vector(&self, terms: &[SpatialWord]) -> (Vec<(SpatialWord, f64)>, f64) {
        let weights: Vec<(SpatialWord, f64)> = term_counts(terms)
            .into_iter()
            .map(|(w, tf)| (w, f64::from(tf) * self.idf(&w)))
            .collect();
        let sq = weights.iter().map(|(_, x)| x * x).sum();
        (weights, sq)
    }

    pub fn query(&self, terms: &[SpatialWord], k: usize) -> RetrievalResult {
        self.query_with_cost(terms, k).0
    }

    /// Top-`k` places by cosine similarity, touching only the postings of
    /// the query's terms.
    pub fn query_with_cost(&self, terms: &[SpatialWord], k: usize) -> (RetrievalResult, QueryCost) {
        let mut cost = QueryCost::default();
        if terms.is_empty() || k == 0 {
            return (RetrievalResult::default(), cost);
        }
        let (weights, q_sq) = self.query_vector(terms);
        let mut acc = vec![0.0f64; self.documents.len()];
        let mut touched: Vec<u32> = Vec::new();
        for (w, qw) in &weights {
            let Some(posting) = self.postings.get(w) else {
                continue;
            };
            for &(slot, tf) in &posting.entries {
                cost.postings_scanned += 1;
                let a = &mut acc[slot as usize];
                if *a == 0.0 {
                    touched.push(slot);
                }
                *a += qw * (f64::from(tf) * posting.idf);
            }
        }
        cost.candidates = touched.len();
        let mut scored: Vec<(u32, f64)> = touched
            .into_iter()
            .map(|slot| {
                let doc = &self.documents[slot as usize];
                (doc.place_id, cosine(acc[slot as usize], q_sq, doc.sq_norm))
            })
            .filter(|&(_, s)| s > 0.0)
            .collect();
        rank(&mut scored);
        scored.truncate(k);
        (RetrievalResult { ranked: scored }, cost)
    }

    /// Cosine similarity of two term multisets under this index's IDF table.
    /// Both empty (or either empty) yields 0.
    pub fn similarity(&self, a: &[SpatialWord], b: &[SpatialWord]) -> f64 {
        let (wa, sa) = self.query_vector(a);
        let (wb, sb) = self.query_vector(b);
        let mut dot = 0.0;
        let (mut i, mut j) = (0, 0);
        while i < wa.len() && j < wb.len() {
            match wa[i].0.cmp(&wb[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    dot += wa[i].1 * wb[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        cosine(dot, sa, sb)
    }
}
