//! Binary wire format for the three protocol messages.
//!
//! Every frame starts with the magic `PSI1`, a version byte (1) and a
//! message type byte (1 = setup, 2 = request, 3 = response). All integers
//! are little-endian.
//!
//! ```text
//! setup:    magic | version | 1 | ds payload (bloom or gcs layout)
//! request:  magic | version | 2 | u8 reveal | u32 count | count * 33-byte point
//! response: magic | version | 3 | u32 count | count * 33-byte point
//! ```

use crate::bloom::{BloomFilter, DS_TYPE_BLOOM};
use crate::error::{Error, Result};
use crate::gcs::{GolombCompressedSet, DS_TYPE_GCS};
use crate::group::{GroupElement, ELEMENT_LEN};
use crate::wire::Reader;

pub const MAGIC: [u8; 4] = *b"PSI1";
pub const VERSION: u8 = 1;
pub const FRAME_PREFIX_LEN: usize = 6;

pub const MSG_SETUP: u8 = 1;
pub const MSG_REQUEST: u8 = 2;
pub const MSG_RESPONSE: u8 = 3;

/// Upper bound on the element count of a request or response.
pub const MAX_ELEMENTS: usize = 1 << 24;

pub const REQUEST_HEADER_LEN: usize = FRAME_PREFIX_LEN + 1 + 4;
pub const RESPONSE_HEADER_LEN: usize = FRAME_PREFIX_LEN + 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DsType {
    Bloom,
    Gcs,
}

impl DsType {
    pub fn code(self) -> u8 {
        match self {
            DsType::Bloom => DS_TYPE_BLOOM,
            DsType::Gcs => DS_TYPE_GCS,
        }
    }
}

/// The server's encrypted set in one of the two transfer encodings.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CompressedSet {
    Bloom(BloomFilter),
    Gcs(GolombCompressedSet),
}

impl CompressedSet {
    pub fn ds_type(&self) -> DsType {
        match self {
            CompressedSet::Bloom(_) => DsType::Bloom,
            CompressedSet::Gcs(_) => DsType::Gcs,
        }
    }

    pub fn contains(&self, element: &[u8]) -> bool {
        match self {
            CompressedSet::Bloom(f) => f.contains(element),
            CompressedSet::Gcs(g) => g.contains(element),
        }
    }

    /// Batch membership; the GCS variant decodes its stream once.
    pub fn contains_all<E: AsRef<[u8]>>(&self, elements: &[E]) -> Vec<bool> {
        match self {
            CompressedSet::Bloom(f) => elements.iter().map(|e| f.contains(e.as_ref())).collect(),
            CompressedSet::Gcs(g) => g.intersect(elements),
        }
    }

    pub fn serialized_len(&self) -> usize {
        match self {
            CompressedSet::Bloom(f) => f.serialized_len(),
            CompressedSet::Gcs(g) => g.serialized_len(),
        }
    }

    pub fn write_to(&self, out: &mut Vec<u8>) {
        match self {
            CompressedSet::Bloom(f) => f.write_to(out),
            CompressedSet::Gcs(g) => g.write_to(out),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.serialized_len());
        self.write_to(&mut out);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let s = Self::read_from(&mut r)?;
        r.finish()?;
        Ok(s)
    }

    fn read_from(r: &mut Reader<'_>) -> Result<Self> {
        match r.peek()? {
            DS_TYPE_BLOOM => BloomFilter::read_from(r).map(CompressedSet::Bloom),
            DS_TYPE_GCS => GolombCompressedSet::read_from(r).map(CompressedSet::Gcs),
            other => Err(Error::malformed(
                r.position(),
                format!("unknown ds_type {other}"),
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SetupMessage {
    pub set: CompressedSet,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RequestMessage {
    pub reveal_intersection: bool,
    pub elements: Vec<GroupElement>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResponseMessage {
    pub elements: Vec<GroupElement>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Message {
    Setup(SetupMessage),
    Request(RequestMessage),
    Response(ResponseMessage),
}

fn write_prefix(out: &mut Vec<u8>, msg_type: u8) {
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(msg_type);
}

fn write_points(out: &mut Vec<u8>, points: &[GroupElement]) {
    out.extend_from_slice(&(points.len() as u32).to_le_bytes());
    for p in points {
        out.extend_from_slice(&p.encode());
    }
}

/// Reads the count field and all points; the buffer must hold exactly
/// `count * 33` more bytes before anything is allocated.
fn read_points(r: &mut Reader<'_>) -> Result<Vec<GroupElement>> {
    let at = r.position();
    let count = r.u32()? as usize;
    if count > MAX_ELEMENTS {
        return Err(Error::malformed(
            at,
            format!("count {count} above limit {MAX_ELEMENTS}"),
        ));
    }
    if r.remaining() != count * ELEMENT_LEN {
        return Err(Error::malformed(
            at,
            format!(
                "count {count} needs {} point bytes, {} present",
                count * ELEMENT_LEN,
                r.remaining()
            ),
        ));
    }
    let mut points = Vec::with_capacity(count);
    for _ in 0..count {
        let at = r.position();
        let bytes = r.take(ELEMENT_LEN)?;
        let p = GroupElement::decode(bytes)
            .map_err(|_| Error::malformed(at, "invalid point encoding"))?;
        points.push(p);
    }
    Ok(points)
}

fn read_prefix(r: &mut Reader<'_>) -> Result<u8> {
    if r.array::<4>()? != MAGIC {
        return Err(Error::malformed(0, "bad magic"));
    }
    let version = r.u8()?;
    if version != VERSION {
        return Err(Error::malformed(4, format!("unknown version {version}")));
    }
    let msg_type = r.u8()?;
    match msg_type {
        MSG_SETUP | MSG_REQUEST | MSG_RESPONSE => Ok(msg_type),
        other => Err(Error::malformed(5, format!("unknown message type {other}"))),
    }
}

impl SetupMessage {
    pub fn encoded_len(&self) -> usize {
        FRAME_PREFIX_LEN + self.set.serialized_len()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        write_prefix(&mut out, MSG_SETUP);
        self.set.write_to(&mut out);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        match Message::decode(bytes)? {
            Message::Setup(m) => Ok(m),
            _ => Err(Error::malformed(5, "expected a setup message")),
        }
    }
}

impl RequestMessage {
    pub fn encoded_len(&self) -> usize {
        REQUEST_HEADER_LEN + ELEMENT_LEN * self.elements.len()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        write_prefix(&mut out, MSG_REQUEST);
        out.push(self.reveal_intersection as u8);
        write_points(&mut out, &self.elements);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        match Message::decode(bytes)? {
            Message::Request(m) => Ok(m),
            _ => Err(Error::malformed(5, "expected a request message")),
        }
    }
}

impl ResponseMessage {
    pub fn encoded_len(&self) -> usize {
        RESPONSE_HEADER_LEN + ELEMENT_LEN * self.elements.len()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        write_prefix(&mut out, MSG_RESPONSE);
        write_points(&mut out, &self.elements);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        match Message::decode(bytes)? {
            Message::Response(m) => Ok(m),
            _ => Err(Error::malformed(5, "expected a response message")),
        }
    }
}

impl Message {
    pub fn encode(&self) -> Vec<u8> {
        match self {
            Message::Setup(m) => m.encode(),
            Message::Request(m) => m.encode(),
            Message::Response(m) => m.encode(),
        }
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let msg = match read_prefix(&mut r)? {
            MSG_SETUP => Message::Setup(SetupMessage {
                set: CompressedSet::read_from(&mut r)?,
            }),
            MSG_REQUEST => {
                let at = r.position();
                let reveal_intersection = match r.u8()? {
                    0 => false,
                    1 => true,
                    other => {
                        return Err(Error::malformed(
                            at,
                            format!("reveal flag {other} not 0 or 1"),
                        ))
                    }
                };
                Message::Request(RequestMessage {
                    reveal_intersection,
                    elements: read_points(&mut r)?,
                })
            }
            _ => Message::Response(ResponseMessage {
                elements: read_points(&mut r)?,
            }),
        };
        r.finish()?;
        Ok(msg)
    }
}
