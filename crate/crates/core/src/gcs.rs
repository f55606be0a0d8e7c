//! Golomb-compressed set.
//!
//! Elements are hashed uniformly into `[0, N * 2^k)`, sorted, and the gaps
//! between consecutive values are Rice coded with parameter `k`: the
//! quotient `gap >> k` in unary (ones closed by a zero), then the low `k`
//! bits MSB-first. A random non-member collides with one of the `N` values
//! with probability about `2^-k`, so `k = round(log2(max_queries / total_fp))`
//! gives the same per-query rate as the Bloom filter sizing.
//!
//! Building is a single encoding pass over the sorted values. Lookups decode
//! the stream sequentially; [`GolombCompressedSet::intersect`] answers a whole
//! batch in one pass.

use sha2::{Digest, Sha256};

use crate::bloom::per_query_rate;
use crate::error::{Error, Result};
use crate::wire::Reader;

pub const DS_TYPE_GCS: u8 = 1;
/// Serialized header: ds_type, rice_param, num_elements, hash_range, bit length.
pub const HEADER_LEN: usize = 1 + 1 + 8 + 8 + 8;
pub const MAX_RICE_PARAM: u8 = 56;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GolombCompressedSet {
    num_elements: u64,
    rice_param: u8,
    hash_range: u64,
    bit_len: u64,
    bitstream: Vec<u8>,
}

pub fn rice_parameter(max_queries: usize, total_fp: f64) -> Result<u8> {
    let eps = per_query_rate(max_queries, total_fp)?;
    let k = (1.0 / eps).log2().round();
    Ok(k.clamp(0.0, MAX_RICE_PARAM as f64) as u8)
}

/// Maps `element` to `floor(h * range / 2^64)` where `h` is the first
/// little-endian word of SHA-256(element).
pub fn hash_to_range(element: &[u8], range: u64) -> u64 {
    let digest = Sha256::digest(element);
    let h = u64::from_le_bytes(digest[0..8].try_into().unwrap());
    ((h as u128 * range as u128) >> 64) as u64
}

impl GolombCompressedSet {
    pub fn build<I, E>(elements: I, max_queries: usize, total_fp: f64) -> Result<Self>
    where
        I: IntoIterator<Item = E>,
        E: AsRef<[u8]>,
    {
        let rice_param = rice_parameter(max_queries, total_fp)?;
        let elements: Vec<E> = elements.into_iter().collect();
        let range = (elements.len() as u128) << rice_param;
        if range > u64::MAX as u128 {
            return Err(Error::params(format!(
                "hash range {} * 2^{rice_param} overflows 64 bits",
                elements.len()
            )));
        }
        let range = range as u64;
        let mut values: Vec<u64> = elements
            .iter()
            .map(|e| hash_to_range(e.as_ref(), range))
            .collect();
        values.sort_unstable();
        Ok(Self::from_sorted_values(&values, rice_param, range))
    }

    /// Encodes already-hashed sorted values. Panics if `values` is unsorted
    /// or any value is outside `[0, hash_range)`.
    pub fn from_sorted_values(values: &[u64], rice_param: u8, hash_range: u64) -> Self {
        assert!(rice_param <= MAX_RICE_PARAM);
        let mut w = BitWriter::default();
        let mut prev = 0u64;
        for &v in values {
            assert!(
                v >= prev && v < hash_range,
                "values must be sorted and in range"
            );
            let delta = v - prev;
            w.push_unary(delta >> rice_param);
            w.push_bits(delta, rice_param);
            prev = v;
        }
        GolombCompressedSet {
            num_elements: values.len() as u64,
            rice_param,
            hash_range,
            bit_len: w.bit_len,
            bitstream: w.bytes,
        }
    }

    pub fn len(&self) -> usize {
        self.num_elements as usize
    }

    pub fn is_empty(&self) -> bool {
        self.num_elements == 0
    }

    pub fn rice_param(&self) -> u8 {
        self.rice_param
    }

    pub fn hash_range(&self) -> u64 {
        self.hash_range
    }

    pub fn bit_len(&self) -> u64 {
        self.bit_len
    }

    /// Decoded values in stream order (non-decreasing).
    pub fn values(&self) -> Values<'_> {
        Values {
            reader: BitReader::new(&self.bitstream, self.bit_len),
            rice_param: self.rice_param,
            left: self.num_elements,
            acc: 0,
        }
    }

    /// Full stream scan, O(N) per call.
    pub fn contains(&self, element: &[u8]) -> bool {
        if self.is_empty() {
            return false;
        }
        let target = hash_to_range(element, self.hash_range);
        self.values()
            .find(|&v| v >= target)
            .is_some_and(|v| v == target)
    }

    /// Membership flags for every query, decoding the stream once.
    pub fn intersect<E: AsRef<[u8]>>(&self, queries: &[E]) -> Vec<bool> {
        let mut flags = vec![false; queries.len()];
        if self.is_empty() || queries.is_empty() {
            return flags;
        }
        let mut hashed: Vec<(u64, usize)> = queries
            .iter()
            .enumerate()
            .map(|(i, q)| (hash_to_range(q.as_ref(), self.hash_range), i))
            .collect();
        hashed.sort_unstable();

        let mut stream = self.values().peekable();
        for (target, idx) in hashed {
            while stream.next_if(|&v| v < target).is_some() {}
            match stream.peek() {
                Some(&v) => flags[idx] = v == target,
                None => break,
            }
        }
        flags
    }

    pub fn serialized_len(&self) -> usize {
        HEADER_LEN + self.bitstream.len()
    }

    pub fn write_to(&self, out: &mut Vec<u8>) {
        out.reserve(self.serialized_len());
        out.push(DS_TYPE_GCS);
        out.push(self.rice_param);
        out.extend_from_slice(&self.num_elements.to_le_bytes());
        out.extend_from_slice(&self.hash_range.to_le_bytes());
        out.extend_from_slice(&self.bit_len.to_le_bytes());
        out.extend_from_slice(&self.bitstream);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let g = Self::read_from(&mut r)?;
        r.finish()?;
        Ok(g)
    }

    /// Consumes the rest of `r` and checks that the stream decodes to exactly
    /// `num_elements` values below `hash_range`.
    pub(crate) fn read_from(r: &mut Reader<'_>) -> Result<Self> {
        let at = r.position();
        let ds = r.u8()?;
        if ds != DS_TYPE_GCS {
            return Err(Error::malformed(
                at,
                format!("expected gcs ds_type 1, got {ds}"),
            ));
        }
        let at = r.position();
        let rice_param = r.u8()?;
        if rice_param > MAX_RICE_PARAM {
            return Err(Error::malformed(
                at,
                format!("rice parameter {rice_param} above 56"),
            ));
        }
        let at_count = r.position();
        let num_elements = r.u64()?;
        let at_range = r.position();
        let hash_range = r.u64()?;
        let at_len = r.position();
        let bit_len = r.u64()?;

        let byte_len = bit_len.div_ceil(8);
        if byte_len != r.remaining() as u64 {
            return Err(Error::malformed(
                at_len,
                format!(
                    "bitstream needs {byte_len} bytes, {} present",
                    r.remaining()
                ),
            ));
        }
        // Every codeword takes at least k + 1 bits.
        if num_elements as u128 * (rice_param as u128 + 1) > bit_len as u128 {
            return Err(Error::malformed(
                at_count,
                "element count exceeds bitstream capacity",
            ));
        }
        if num_elements > 0 && hash_range == 0 {
            return Err(Error::malformed(
                at_range,
                "zero hash range for non-empty set",
            ));
        }
        let at_stream = r.position();
        let bitstream = r.take(byte_len as usize)?.to_vec();
        let g = GolombCompressedSet {
            num_elements,
            rice_param,
            hash_range,
            bit_len,
            bitstream,
        };
        g.validate_stream(at_stream)?;
        Ok(g)
    }

    fn validate_stream(&self, base: usize) -> Result<()> {
        let mut reader = BitReader::new(&self.bitstream, self.bit_len);
        let mut acc = 0u64;
        for _ in 0..self.num_elements {
            let at = base + (reader.pos / 8) as usize;
            let q = reader
                .read_unary()
                .ok_or_else(|| Error::malformed(at, "truncated unary quotient"))?;
            let rem = reader
                .read_bits(self.rice_param)
                .ok_or_else(|| Error::malformed(at, "truncated remainder"))?;
            let delta = q
                .checked_mul(1u64 << self.rice_param)
                .and_then(|d| d.checked_add(rem))
                .ok_or_else(|| Error::malformed(at, "delta overflows"))?;
            acc = acc
                .checked_add(delta)
                .filter(|&v| v < self.hash_range)
                .ok_or_else(|| Error::malformed(at, "decoded value outside hash range"))?;
        }
        if reader.pos != self.bit_len {
            return Err(Error::malformed(
                base + (reader.pos / 8) as usize,
                "unused bits after last codeword",
            ));
        }
        let pad = (self.bitstream.len() as u64 * 8 - self.bit_len) as u32;
        if pad > 0 && self.bitstream[self.bitstream.len() - 1] & ((1u8 << pad) - 1) != 0 {
            return Err(Error::malformed(
                base + self.bitstream.len() - 1,
                "non-zero padding bits",
            ));
        }
        Ok(())
    }
}

/// Streaming decoder over the Rice-coded gaps.
pub struct Values<'a> {
    reader: BitReader<'a>,
    rice_param: u8,
    left: u64,
    acc: u64,
}

impl Iterator for Values<'_> {
    type Item = u64;

    fn next(&mut self) -> Option<u64> {
        if self.left == 0 {
            return None;
        }
        self.left -= 1;
        // Streams are validated on construction and deserialization.
        let q = self.reader.read_unary()?;
        let rem = self.reader.read_bits(self.rice_param)?;
        self.acc += (q << self.rice_param) | rem;
        Some(self.acc)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        (self.left as usize, Some(self.left as usize))
    }
}

#[derive(Default)]
struct BitWriter {
    bytes: Vec<u8>,
    bit_len: u64,
}

impl BitWriter {
    fn push_bit(&mut self, bit: bool) {
        if self.bit_len.is_multiple_of(8) {
            self.bytes.push(0);
        }
        if bit {
            *self.bytes.last_mut().unwrap() |= 0x80 >> (self.bit_len % 8);
        }
        self.bit_len += 1;
    }

    fn push_unary(&mut self, q: u64) {
        for _ in 0..q {
            self.push_bit(true);
        }
        self.push_bit(false);
    }

    /// Low `count` bits of `value`, most significant first.
    fn push_bits(&mut self, value: u64, count: u8) {
        let mut left = count as u32;
        while left > 0 {
            let used = (self.bit_len % 8) as u32;
            if used == 0 {
                self.bytes.push(0);
            }
            let take = left.min(8 - used);
            let chunk = ((value >> (left - take)) & ((1u64 << take) - 1)) as u8;
            *self.bytes.last_mut().unwrap() |= chunk << (8 - used - take);
            self.bit_len += take as u64;
            left -= take;
        }
    }
}

struct BitReader<'a> {
    bytes: &'a [u8],
    bit_len: u64,
    pos: u64,
}

impl<'a> BitReader<'a> {
    fn new(bytes: &'a [u8], bit_len: u64) -> Self {
        BitReader {
            bytes,
            bit_len,
            pos: 0,
        }
    }

    fn read_bit(&mut self) -> Option<bool> {
        if self.pos >= self.bit_len {
            return None;
        }
        let bit = self.bytes[(self.pos / 8) as usize] & (0x80 >> (self.pos % 8)) != 0;
        self.pos += 1;
        Some(bit)
    }

    fn read_unary(&mut self) -> Option<u64> {
        let mut q = 0u64;
        while self.read_bit()? {
            q += 1;
        }
        Some(q)
    }

    fn read_bits(&mut self, count: u8) -> Option<u64> {
        let mut left = count as u32;
        if self.pos + left as u64 > self.bit_len {
            return None;
        }
        let mut value = 0u64;
        while left > 0 {
            let used = (self.pos % 8) as u32;
            let take = left.min(8 - used);
            let byte = self.bytes[(self.pos / 8) as usize] as u64;
            let chunk = (byte >> (8 - used - take)) & ((1u64 << take) - 1);
            value = (value << take) | chunk;
            self.pos += take as u64;
            left -= take;
        }
        Some(value)
    }
}
