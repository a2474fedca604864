//! Binary index file.
//!
//! All integers little-endian, reals as IEEE-754 binary64 bit patterns,
//! every list prefixed by its `u32` length:
//!
//! ```text
//! magic        "SBWI"
//! version      u16 (= 1)
//! bin_width    u32
//! n_images     u32
//! n_words      f64            average terms per document
//! n_docs       u32
//!   place_id   u32
//!   norm       f64            TF-IDF vector norm
//!   n_terms    u32
//!     word_id  u32
//!     x_bin    i32
//!     tf       u32
//! n_postings   u32
//!   word_id    u32
//!   x_bin      i32
//!   idf        f64
//!   df         u32
//!     place_id u32
//!     tf       u32
//! ```
//!
//! Documents are sorted by place id, terms and postings by `(word_id, x_bin)`.
//! On load the index is rebuilt from the documents and every stored derived
//! value (norms, IDF, postings, statistics) must match bit for bit.

use crate::binio::ByteReader;
use crate::error::FormatError;

use super::{SBoWIndex, SpatialWord};

pub const INDEX_MAGIC: [u8; 4] = *b"SBWI";
pub const INDEX_VERSION: u16 = 1;

const TERM_BYTES: usize = 12;
const DOC_HEADER_BYTES: usize = 16;

impl SBoWIndex {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&INDEX_MAGIC);
        out.extend_from_slice(&INDEX_VERSION.to_le_bytes());
        out.extend_from_slice(&self.bin_width.to_le_bytes());
        out.extend_from_slice(&self.n_images().to_le_bytes());
        out.extend_from_slice(&self.n_words.to_le_bytes());
        out.extend_from_slice(&(self.documents.len() as u32).to_le_bytes());
        for doc in &self.documents {
            out.extend_from_slice(&doc.place_id.to_le_bytes());
            out.extend_from_slice(&doc.norm().to_le_bytes());
            out.extend_from_slice(&(doc.terms.len() as u32).to_le_bytes());
            for (w, tf) in &doc.terms {
                out.extend_from_slice(&w.word_id.to_le_bytes());
                out.extend_from_slice(&w.x_bin.to_le_bytes());
                out.extend_from_slice(&tf.to_le_bytes());
            }
        }
        out.extend_from_slice(&(self.postings.len() as u32).to_le_bytes());
        for (w, p) in &self.postings {
            out.extend_from_slice(&w.word_id.to_le_bytes());
            out.extend_from_slice(&w.x_bin.to_le_bytes());
            out.extend_from_slice(&p.idf.to_le_bytes());
            out.extend_from_slice(&(p.entries.len() as u32).to_le_bytes());
            for &(slot, tf) in &p.entries {
                out.extend_from_slice(&self.documents[slot as usize].place_id.to_le_bytes());
                out.extend_from_slice(&tf.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FormatError> {
        let mut r = ByteReader::new(bytes);
        r.magic(&INDEX_MAGIC)?;
        r.version(INDEX_VERSION)?;
        let bin_width = r.u32()?;
        if bin_width == 0 {
            return Err(FormatError::invalid("index", "bin_width is zero"));
        }
        let n_images = r.u32()?;
        let n_words = r.f64()?;
        let n_docs = r.u32()? as usize;
        if n_docs != n_images as usize {
            return Err(FormatError::invalid("index", "n_images does not match document count"));
        }
        if n_docs > r.remaining() / DOC_HEADER_BYTES {
            return Err(FormatError::Truncated {
                offset: bytes.len() - r.remaining(),
                needed: n_docs * DOC_HEADER_BYTES,
                available: r.remaining(),
            });
        }
        let mut docs = Vec::with_capacity(n_docs);
        let mut norms = Vec::with_capacity(n_docs);
        for _ in 0..n_docs {
            let place_id = r.u32()?;
            norms.push(r.f64()?);
            let n_terms = r.u32()? as usize;
            let raw = r.take(n_terms.saturating_mul(TERM_BYTES))?;
            let mut terms = Vec::with_capacity(n_terms);
            for chunk in raw.chunks_exact(TERM_BYTES) {
                let word_id = u32::from_le_bytes(chunk[0..4].try_into().unwrap());
                let x_bin = i32::from_le_bytes(chunk[4..8].try_into().unwrap());
                let tf = u32::from_le_bytes(chunk[8..12].try_into().unwrap());
                terms.push((SpatialWord { word_id, x_bin }, tf));
            }
            if terms.iter().any(|&(_, tf)| tf == 0) || terms.windows(2).any(|w| w[0].0 >= w[1].0) {
                return Err(FormatError::invalid("index", "document terms not sorted, unique and positive"));
            }
            docs.push((place_id, terms));
        }
        if docs.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(FormatError::invalid("index", "documents not sorted by unique place id"));
        }

        let rebuilt = SBoWIndex::build_from_counts(docs, bin_width)
            .map_err(|e| FormatError::invalid("index", e.to_string()))?;
        let same_norms = rebuilt
            .documents
            .iter()
            .zip(&norms)
            .all(|(d, n)| d.norm().to_bits() == n.to_bits());
        if !same_norms || rebuilt.n_words.to_bits() != n_words.to_bits() {
            return Err(FormatError::invalid("index", "stored norms or statistics disagree with documents"));
        }

        let n_postings = r.u32()? as usize;
        if n_postings != rebuilt.postings.len() {
            return Err(FormatError::invalid("index", "posting list count disagrees with documents"));
        }
        for (w, p) in &rebuilt.postings {
            let word_id = r.u32()?;
            let x_bin = r.i32()?;
            let idf = r.f64()?;
            let df = r.u32()? as usize;
            if (SpatialWord { word_id, x_bin }) != *w
                || idf.to_bits() != p.idf.to_bits()
                || df != p.entries.len()
            {
                return Err(FormatError::invalid("index", "posting list disagrees with documents"));
            }
            for &(slot, tf) in &p.entries {
                let place = r.u32()?;
                let stored_tf = r.u32()?;
                if place != rebuilt.documents[slot as usize].place_id || stored_tf != tf {
                    return Err(FormatError::invalid("index", "posting entry disagrees with documents"));
                }
            }
        }
        r.finish()?;
        Ok(rebuilt)
    }
}
