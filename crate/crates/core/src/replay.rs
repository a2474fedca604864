//! Precomputed retrieval lookup table used to replay localization
//! experiences without touching the index.
//!
//! Each query row holds exactly `K` records of `(place_id, level)` where the
//! level is the similarity quantized to `B` bits (higher is more similar).
//! Rows shorter than `K` are padded with [`SENTINEL`] records, so row `q`
//! starts at a fixed offset and lookups are `O(K)`.
//!
//! File layout (little-endian):
//!
//! ```text
//! magic "SBLT" | version u16 = 1 | K u32 | B u8 | n_queries u32 | n_map u32
//! n_queries x K x (place_id u32, level: ceil(B/8) bytes)
//! ```

use std::path::Path;

use rayon::prelude::*;

use crate::binio::{put_uint, ByteReader};
use crate::error::{Error, FormatError, Result};
use crate::sbow::{SBoWIndex, SpatialWord};

pub const TABLE_MAGIC: [u8; 4] = *b"SBLT";
pub const TABLE_VERSION: u16 = 1;
pub const TABLE_HEADER_BYTES: usize = 4 + 2 + 4 + 1 + 4 + 4;
pub const SENTINEL: u32 = u32::MAX;
pub const DEFAULT_K: usize = 1000;
pub const DEFAULT_BITS: u8 = 8;

fn max_level(bits: u8) -> u32 {
    (1u32 << bits) - 1
}

fn level_bytes(bits: u8) -> usize {
    usize::from(bits).div_ceil(8)
}

/// `round(s * (2^B - 1))`, halves rounded up.
pub fn quantize_sim(s: f64, bits: u8) -> Result<u16> {
    if !(1..=16).contains(&bits) {
        return Err(Error::OutOfRange {
            what: "bit width",
            value: f64::from(bits),
        });
    }
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::OutOfRange {
            what: "similarity",
            value: s,
        });
    }
    Ok((s * f64::from(max_level(bits)) + 0.5).floor() as u16)
}

pub fn dequantize_sim(level: u16, bits: u8) -> f64 {
    f64::from(level) / f64::from(max_level(bits))
}

/// Worst-case absolute error of a quantize/dequantize round trip.
pub fn quantization_bound(bits: u8) -> f64 {
    1.0 / (2.0 * f64::from(max_level(bits)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Record {
    pub place_id: u32,
    pub level: u16,
}

impl Record {
    pub const PAD: Record = Record {
        place_id: SENTINEL,
        level: 0,
    };

    pub fn is_sentinel(&self) -> bool {
        self.place_id == SENTINEL
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LookupTable {
    k: u32,
    bits: u8,
    n_queries: u32,
    n_map: u32,
    records: Vec<Record>,
}

impl LookupTable {
    /// Run every query once against `index` and keep its top-`k` results.
    /// Query ids are positions in `queries`.
    pub fn build(
        index: &SBoWIndex,
        queries: &[Vec<SpatialWord>],
        k: usize,
        bits: u8,
        n_map: u32,
    ) -> Result<Self> {
        if k == 0 {
            return Err(Error::OutOfRange {
                what: "K",
                value: 0.0,
            });
        }
        quantize_sim(0.0, bits)?;
        let rows: Vec<Vec<Record>> = queries
            .par_iter()
            .map(|terms| {
                let result = index.query(terms, k);
                let mut row = Vec::with_capacity(k);
                for &(place_id, sim) in &result.ranked {
                    if place_id >= n_map {
                        return Err(Error::Invariant(format!(
                            "retrieved place {place_id} outside map of {n_map}"
                        )));
                    }
                    row.push(Record {
                        place_id,
                        level: quantize_sim(sim, bits)?,
                    });
                }
                row.resize(k, Record::PAD);
                Ok(row)
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            k: k as u32,
            bits,
            n_queries: queries.len() as u32,
            n_map,
            records: rows.into_iter().flatten().collect(),
        })
    }

    pub fn k(&self) -> usize {
        self.k as usize
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    pub fn n_queries(&self) -> u32 {
        self.n_queries
    }

    pub fn n_map(&self) -> u32 {
        self.n_map
    }

    /// Raw fixed-stride row, sentinels included.
    pub fn row(&self, query_id: u32) -> Result<&[Record]> {
        if query_id >= self.n_queries {
            return Err(Error::QueryNotFound(query_id));
        }
        let k = self.k();
        let start = query_id as usize * k;
        Ok(&self.records[start..start + k])
    }

    /// Dequantized retrieval results for `query_id`, padding removed.
    pub fn lookup(&self, query_id: u32) -> Result<Vec<(u32, f64)>> {
        Ok(self
            .row(query_id)?
            .iter()
            .take_while(|r| !r.is_sentinel())
            .map(|r| (r.place_id, dequantize_sim(r.level, self.bits)))
            .collect())
    }

    pub fn encoded_len(&self) -> usize {
        TABLE_HEADER_BYTES + self.records.len() * (4 + level_bytes(self.bits))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&TABLE_MAGIC);
        out.extend_from_slice(&TABLE_VERSION.to_le_bytes());
        out.extend_from_slice(&self.k.to_le_bytes());
        out.push(self.bits);
        out.extend_from_slice(&self.n_queries.to_le_bytes());
        out.extend_from_slice(&self.n_map.to_le_bytes());
        let width = level_bytes(self.bits);
        for r in &self.records {
            out.extend_from_slice(&r.place_id.to_le_bytes());
            put_uint(&mut out, u64::from(r.level), width);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FormatError> {
        let mut r = ByteReader::new(bytes);
        r.magic(&TABLE_MAGIC)?;
        r.version(TABLE_VERSION)?;
        let k = r.u32()?;
        let bits = r.u8()?;
        let n_queries = r.u32()?;
        let n_map = r.u32()?;
        if k == 0 {
            return Err(FormatError::invalid("lookup table", "K is zero"));
        }
        if !(1..=16).contains(&bits) {
            return Err(FormatError::invalid("lookup table", format!("bit width {bits} not in 1..=16")));
        }
        let width = level_bytes(bits);
        let n_records = (k as usize)
            .checked_mul(n_queries as usize)
            .ok_or_else(|| FormatError::invalid("lookup table", "row count overflows"))?;
        let needed = n_records.saturating_mul(4 + width);
        if r.remaining() < needed {
            return Err(FormatError::Truncated {
                offset: TABLE_HEADER_BYTES,
                needed,
                available: r.remaining(),
            });
        }

        let top = u64::from(max_level(bits));
        let mut records = Vec::with_capacity(n_records);
        for _ in 0..n_records {
            let place_id = r.u32()?;
            let level = r.uint(width)?;
            if level > top {
                return Err(FormatError::invalid("lookup table", format!("level {level} exceeds {bits}-bit range")));
            }
            records.push(Record {
                place_id,
                level: level as u16,
            });
        }
        r.finish()?;
        for row in records.chunks_exact(k as usize) {
            let mut padding = false;
            let mut prev = u16::MAX;
            for rec in row {
                if rec.is_sentinel() {
                    if rec.level != 0 {
                        return Err(FormatError::invalid("lookup table", "sentinel with nonzero level"));
                    }
                    padding = true;
                    continue;
                }
                if padding {
                    return Err(FormatError::invalid("lookup table", "record after padding"));
                }
                if rec.place_id >= n_map {
                    return Err(FormatError::invalid("lookup table", format!("place {} outside map", rec.place_id)));
                }
                if rec.level > prev {
                    return Err(FormatError::invalid("lookup table", "row not sorted by similarity"));
                }
                prev = rec.level;
            }
        }
        Ok(Self {
            k,
            bits,
            n_queries,
            n_map,
            records,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::from_bytes(&bytes)?)
    }
}
