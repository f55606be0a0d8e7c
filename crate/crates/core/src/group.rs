//! Prime-order group arithmetic over NIST P-256.
//!
//! Every protocol step is expressed through [`Scalar`] and [`GroupElement`];
//! nothing outside this module touches the curve library directly, so a
//! different prime-order group can be dropped in by replacing this file.
//!
//! Operations are not constant time.

use std::cmp::Ordering;
use std::fmt;

use p256::elliptic_curve::group::Group as _;
use p256::elliptic_curve::ops::Invert;
use p256::elliptic_curve::sec1::{FromEncodedPoint, ToEncodedPoint};
use p256::elliptic_curve::PrimeField;
use p256::{AffinePoint, EncodedPoint, FieldBytes, NonZeroScalar, ProjectivePoint};
use rand_core::{OsRng, RngCore};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Length of a compressed point encoding.
pub const ELEMENT_LEN: usize = 33;
/// Length of a scalar encoding.
pub const SCALAR_LEN: usize = 32;

/// Non-zero exponent modulo the group order.
#[derive(Clone, Copy)]
pub struct Scalar(NonZeroScalar);

impl PartialEq for Scalar {
    fn eq(&self, other: &Self) -> bool {
        self.to_bytes() == other.to_bytes()
    }
}

impl Eq for Scalar {}

impl Scalar {
    pub fn one() -> Self {
        Scalar(NonZeroScalar::from_uint(1u64.into()).unwrap())
    }

    /// Uniform sample from `[1, order - 1]` by rejection over 32 random bytes.
    pub fn random() -> Self {
        Self::random_from(&mut OsRng)
    }

    pub fn random_from<R: RngCore>(rng: &mut R) -> Self {
        loop {
            let mut bytes = [0u8; SCALAR_LEN];
            rng.fill_bytes(&mut bytes);
            if let Ok(s) = Self::from_bytes(&bytes) {
                return s;
            }
        }
    }

    /// Parses a big-endian encoding, rejecting zero and values `>= order`.
    pub fn from_bytes(bytes: &[u8; SCALAR_LEN]) -> Result<Self> {
        Option::from(NonZeroScalar::from_repr(FieldBytes::from(*bytes)))
            .map(Scalar)
            .ok_or(Error::InvalidScalar)
    }

    pub fn to_bytes(&self) -> [u8; SCALAR_LEN] {
        self.0.to_repr().into()
    }

    pub fn invert(&self) -> Self {
        Scalar(Invert::invert(&self.0))
    }

    pub fn mul(&self, other: &Scalar) -> Self {
        // Product of two non-zero residues mod a prime is non-zero.
        Scalar(NonZeroScalar::new(*self.0 * *other.0).unwrap())
    }
}

impl fmt::Debug for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Scalar(..)")
    }
}

/// Non-identity point of the group.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct GroupElement(AffinePoint);

impl GroupElement {
    pub fn generator() -> Self {
        GroupElement(AffinePoint::GENERATOR)
    }

    /// Try-and-increment hash onto the curve.
    ///
    /// For counter `i = 0, 1, ...` the candidate x-coordinate is
    /// `SHA-256(i_be32 || input)` and the y parity is the low bit of
    /// `SHA-256(0xFF || i_be32 || input)`. The first candidate that
    /// decompresses to a curve point is returned.
    pub fn hash_from_bytes(input: &[u8]) -> Self {
        for counter in 0u32.. {
            let ctr = counter.to_be_bytes();
            let x = Sha256::new()
                .chain_update(ctr)
                .chain_update(input)
                .finalize();
            let parity = Sha256::new()
                .chain_update([0xFF])
                .chain_update(ctr)
                .chain_update(input)
                .finalize()[31]
                & 1;
            let mut candidate = [0u8; ELEMENT_LEN];
            candidate[0] = 0x02 | parity;
            candidate[1..].copy_from_slice(&x);
            if let Ok(e) = Self::decode(&candidate) {
                return e;
            }
        }
        unreachable!("counter space exhausted")
    }

    /// Raises the element to `exponent` (scalar multiplication).
    pub fn exp(&self, exponent: &Scalar) -> Self {
        let p = ProjectivePoint::from(self.0) * *exponent.0;
        // Prime order group: a non-identity point times a non-zero scalar
        // is never the identity.
        debug_assert!(!bool::from(p.is_identity()));
        GroupElement(p.to_affine())
    }

    /// SEC1 compressed encoding: `0x02 | y_parity` followed by big-endian x.
    pub fn encode(&self) -> [u8; ELEMENT_LEN] {
        let ep = self.0.to_encoded_point(true);
        let mut out = [0u8; ELEMENT_LEN];
        out.copy_from_slice(ep.as_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() != ELEMENT_LEN || (bytes[0] != 0x02 && bytes[0] != 0x03) {
            return Err(Error::InvalidPoint);
        }
        let ep = EncodedPoint::from_bytes(bytes).map_err(|_| Error::InvalidPoint)?;
        let point: Option<AffinePoint> = AffinePoint::from_encoded_point(&ep).into();
        match point {
            Some(p) if p != AffinePoint::IDENTITY => Ok(GroupElement(p)),
            _ => Err(Error::InvalidPoint),
        }
    }
}

impl fmt::Debug for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GroupElement(")?;
        for b in self.encode() {
            write!(f, "{b:02x}")?;
        }
        write!(f, ")")
    }
}

impl PartialOrd for GroupElement {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Byte-lexicographic order of the compressed encodings.
impl Ord for GroupElement {
    fn cmp(&self, other: &Self) -> Ordering {
        self.encode().cmp(&other.encode())
    }
}
