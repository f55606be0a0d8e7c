//! Bloom filter over the server's encrypted set.
//!
//! Sizing follows the union bound: a filter that must answer `max_queries`
//! lookups with total false-positive probability `total_fp` is built for a
//! per-lookup rate of `total_fp / max_queries`.

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::wire::Reader;

pub const DS_TYPE_BLOOM: u8 = 0;
/// Serialized header: ds_type, num_hashes, num_bits.
pub const HEADER_LEN: usize = 1 + 4 + 8;
pub const MAX_HASHES: u32 = 64;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BloomFilter {
    num_bits: u64,
    num_hashes: u32,
    bits: Vec<u8>,
}

/// Checks `0 < total_fp < 1` and `max_queries >= 1`, returning the per-query rate.
pub(crate) fn per_query_rate(max_queries: usize, total_fp: f64) -> Result<f64> {
    if max_queries == 0 {
        return Err(Error::params("max_queries must be at least 1"));
    }
    if !(total_fp > 0.0 && total_fp < 1.0) {
        return Err(Error::params(format!(
            "false-positive rate {total_fp} not in (0, 1)"
        )));
    }
    Ok(total_fp / max_queries as f64)
}

/// Returns `(num_bits, num_hashes)` for the given load and target rates.
pub fn optimal_parameters(
    planned_insertions: usize,
    max_queries: usize,
    total_fp: f64,
) -> Result<(u64, u32)> {
    if planned_insertions == 0 {
        return Err(Error::params("planned insertions must be at least 1"));
    }
    let eps = per_query_rate(max_queries, total_fp)?;
    let ln2 = std::f64::consts::LN_2;
    let n = planned_insertions as f64;
    let m = (-n * eps.ln() / (ln2 * ln2)).ceil().max(1.0);
    if m >= (1u64 << 50) as f64 {
        return Err(Error::params("filter would exceed 2^50 bits"));
    }
    let num_bits = m as u64;
    let h = ((num_bits as f64 / n) * ln2).round() as u32;
    Ok((num_bits, h.clamp(1, MAX_HASHES)))
}

impl BloomFilter {
    pub fn new(planned_insertions: usize, max_queries: usize, total_fp: f64) -> Result<Self> {
        let (num_bits, num_hashes) = optimal_parameters(planned_insertions, max_queries, total_fp)?;
        Ok(Self::with_parameters(num_bits, num_hashes))
    }

    pub fn with_parameters(num_bits: u64, num_hashes: u32) -> Self {
        assert!(num_bits >= 1 && (1..=MAX_HASHES).contains(&num_hashes));
        BloomFilter {
            num_bits,
            num_hashes,
            bits: vec![0u8; num_bits.div_ceil(8) as usize],
        }
    }

    pub fn num_bits(&self) -> u64 {
        self.num_bits
    }

    pub fn num_hashes(&self) -> u32 {
        self.num_hashes
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn insert(&mut self, element: &[u8]) {
        for idx in self.indices(element) {
            self.bits[(idx / 8) as usize] |= 1 << (idx % 8);
        }
    }

    pub fn contains(&self, element: &[u8]) -> bool {
        self.indices(element)
            .all(|idx| self.bits[(idx / 8) as usize] & (1 << (idx % 8)) != 0)
    }

    pub fn count_ones(&self) -> u64 {
        self.bits.iter().map(|b| b.count_ones() as u64).sum()
    }

    /// Index `j` is `floor(w_j * m / 2^64)`, where `w_j` is little-endian
    /// word `j % 4` of SHA-256(u32_be(j / 4) || element).
    fn indices<'a>(&self, element: &'a [u8]) -> impl Iterator<Item = u64> + 'a {
        let m = self.num_bits as u128;
        let blocks = self.num_hashes.div_ceil(4);
        (0..blocks)
            .flat_map(move |block| {
                let digest = Sha256::new()
                    .chain_update(block.to_be_bytes())
                    .chain_update(element)
                    .finalize();
                (0..4)
                    .map(move |w| u64::from_le_bytes(digest[8 * w..8 * w + 8].try_into().unwrap()))
            })
            .take(self.num_hashes as usize)
            .map(move |w| ((w as u128 * m) >> 64) as u64)
    }

    pub fn serialized_len(&self) -> usize {
        HEADER_LEN + self.bits.len()
    }

    pub fn write_to(&self, out: &mut Vec<u8>) {
        out.reserve(self.serialized_len());
        out.push(DS_TYPE_BLOOM);
        out.extend_from_slice(&self.num_hashes.to_le_bytes());
        out.extend_from_slice(&self.num_bits.to_le_bytes());
        out.extend_from_slice(&self.bits);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let f = Self::read_from(&mut r)?;
        r.finish()?;
        Ok(f)
    }

    /// Consumes the rest of `r`: the bit array must fill it exactly.
    pub(crate) fn read_from(r: &mut Reader<'_>) -> Result<Self> {
        let at = r.position();
        let ds = r.u8()?;
        if ds != DS_TYPE_BLOOM {
            return Err(Error::malformed(
                at,
                format!("expected bloom ds_type 0, got {ds}"),
            ));
        }
        let at = r.position();
        let num_hashes = r.u32()?;
        if !(1..=MAX_HASHES).contains(&num_hashes) {
            return Err(Error::malformed(
                at,
                format!("num_hashes {num_hashes} out of range"),
            ));
        }
        let at = r.position();
        let num_bits = r.u64()?;
        if num_bits == 0 {
            return Err(Error::malformed(at, "num_bits is zero"));
        }
        let byte_len = num_bits.div_ceil(8);
        if byte_len != r.remaining() as u64 {
            return Err(Error::malformed(
                r.position(),
                format!(
                    "bit array needs {byte_len} bytes, {} present",
                    r.remaining()
                ),
            ));
        }
        let at = r.position();
        let bits = r.take(byte_len as usize)?.to_vec();
        let pad = (byte_len * 8 - num_bits) as u32;
        if pad > 0 && bits[bits.len() - 1] >> (8 - pad) != 0 {
            return Err(Error::malformed(
                at + bits.len() - 1,
                "non-zero padding bits",
            ));
        }
        Ok(BloomFilter {
            num_bits,
            num_hashes,
            bits,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizing_matches_closed_form() {
        let (m, h) = optimal_parameters(10_000, 1, 1e-6).unwrap();
        assert_eq!(m, 287_552);
        assert_eq!(h, 20);
        let (m, _) = optimal_parameters(10_000, 1, 1e-9).unwrap();
        assert_eq!(m.div_ceil(8), 53_916);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(matches!(
            BloomFilter::new(0, 1, 0.1),
            Err(Error::InvalidParameters(_))
        ));
        assert!(matches!(
            BloomFilter::new(1, 0, 0.1),
            Err(Error::InvalidParameters(_))
        ));
        for p in [0.0, 1.0, 1.5, -0.1, f64::NAN] {
            assert!(matches!(
                BloomFilter::new(1, 1, p),
                Err(Error::InvalidParameters(_))
            ));
        }
    }

    #[test]
    fn inserted_elements_are_found() {
        let mut f = BloomFilter::new(100, 1, 1e-6).unwrap();
        for i in 0..100u32 {
            f.insert(&i.to_le_bytes());
        }
        for i in 0..100u32 {
            assert!(f.contains(&i.to_le_bytes()));
        }
    }

    #[test]
    fn insert_is_idempotent() {
        let mut f = BloomFilter::new(10, 1, 1e-3).unwrap();
        f.insert(b"e");
        let once = f.clone();
        f.insert(b"e");
        assert_eq!(f, once);
    }

    #[test]
    fn popcount_bounded_by_hashes_times_inserts() {
        let mut f = BloomFilter::new(1000, 1, 1e-4).unwrap();
        for i in 0..1000u32 {
            f.insert(&i.to_be_bytes());
        }
        assert!(f.count_ones() <= f.num_hashes() as u64 * 1000);
    }

    #[test]
    fn empty_filter_contains_nothing() {
        let f = BloomFilter::new(10, 1, 1e-3).unwrap();
        assert!(!f.contains(b""));
        assert!(!f.contains(b"anything"));
    }

    #[test]
    fn serialized_layout() {
        let mut f = BloomFilter::with_parameters(12, 3);
        f.insert(b"x");
        let bytes = f.to_bytes();
        assert_eq!(bytes.len(), HEADER_LEN + 2);
        assert_eq!(bytes[0], 0);
        assert_eq!(&bytes[1..5], &3u32.to_le_bytes());
        assert_eq!(&bytes[5..13], &12u64.to_le_bytes());
        assert_eq!(BloomFilter::from_bytes(&bytes).unwrap(), f);
    }

    #[test]
    fn empty_filter_round_trips() {
        let f = BloomFilter::new(1, 1, 0.5).unwrap();
        assert_eq!(BloomFilter::from_bytes(&f.to_bytes()).unwrap(), f);
    }

    #[test]
    fn deserialize_rejects_corruption() {
        let f = BloomFilter::with_parameters(12, 3);
        let bytes = f.to_bytes();
        for cut in 0..bytes.len() {
            assert!(BloomFilter::from_bytes(&bytes[..cut]).is_err());
        }
        let mut padded = bytes.clone();
        padded[14] |= 0x80;
        assert!(matches!(
            BloomFilter::from_bytes(&padded),
            Err(Error::MalformedMessage { offset: 14, .. })
        ));
        let mut zero_hashes = bytes.clone();
        zero_hashes[1..5].copy_from_slice(&0u32.to_le_bytes());
        assert!(BloomFilter::from_bytes(&zero_hashes).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(BloomFilter::from_bytes(&extra).is_err());
    }

    #[test]
    fn tiny_filter_false_positive_rate() {
        // One element at eps = 5e-12: m = 55, h = 38, so about 27 bits are
        // set and a probe passes with probability near 0.5^38.
        let mut f = BloomFilter::new(1, 200, 1e-9).unwrap();
        assert_eq!((f.num_bits(), f.num_hashes()), (55, 38));
        f.insert(b"member");
        let fps = (0..200_000u32)
            .filter(|i| f.contains(&i.to_le_bytes()))
            .count();
        assert_eq!(fps, 0);
    }

    #[test]
    fn deterministic_bit_array() {
        let build = || {
            let mut f = BloomFilter::new(50, 2, 1e-5).unwrap();
            for i in 0..50u8 {
                f.insert(&[i; 33]);
            }
            f
        };
        assert_eq!(build().to_bytes(), build().to_bytes());
    }
}
