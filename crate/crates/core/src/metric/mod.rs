//! Distance functions bundled with invertible delta encodings.
//!
//! A compressive metric pairs a distance with an encoder/decoder where the
//! encoded size of one point in terms of another is bounded by an affine
//! function of their distance. That proportionality is what makes it
//! worthwhile to store points as deltas against cluster centers.

mod euclid;
mod seq;
mod set;

pub use euclid::Euclidean;
pub use seq::{
    apply_edit_trace, hamming_distance, index_diff_decode, index_diff_encode,
    levenshtein_distance, nw_edit_trace, Edit, Hamming, Levenshtein,
};
pub use set::{
    dice_distance, jaccard_distance, set_diff_decode, set_diff_encode, Dice, Jaccard,
};

use crate::error::{CodecError, MetricError};
use crate::point::{Payload, PayloadKind, Point};
use crate::varint::{read_varint, write_varint};

/// Wire tag of an encoding, stored as its first byte.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EncodingKind {
    /// (index, character) pairs against an equal-length reference.
    IndexDiff = 0,
    /// Ordered edit operations against a reference sequence.
    EditTrace = 1,
    /// Members added to and removed from a reference set.
    SetDiff = 2,
}

impl EncodingKind {
    pub fn from_tag(tag: u8) -> Result<Self, CodecError> {
        match tag {
            0 => Ok(EncodingKind::IndexDiff),
            1 => Ok(EncodingKind::EditTrace),
            2 => Ok(EncodingKind::SetDiff),
            other => Err(CodecError::UnknownKind(other)),
        }
    }
}

/// A self-describing delta encoding: one kind byte followed by the
/// kind-specific body (see format.md for the exact layouts).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Encoding {
    bytes: Vec<u8>,
}

impl Encoding {
    pub(crate) fn from_parts(kind: EncodingKind, body: Vec<u8>) -> Self {
        let mut bytes = Vec::with_capacity(body.len() + 1);
        bytes.push(kind as u8);
        bytes.extend_from_slice(&body);
        Encoding { bytes }
    }

    /// Wraps raw bytes, validating the kind tag.
    pub fn from_bytes(bytes: Vec<u8>) -> Result<Self, CodecError> {
        let tag = *bytes.first().ok_or(CodecError::Truncated { offset: 0 })?;
        EncodingKind::from_tag(tag)?;
        Ok(Encoding { bytes })
    }

    pub fn kind(&self) -> EncodingKind {
        EncodingKind::from_tag(self.bytes[0]).expect("kind validated at construction")
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    /// Total stored size in bytes, kind tag included.
    pub fn size(&self) -> usize {
        self.bytes.len()
    }

    pub(crate) fn body(&self) -> &[u8] {
        &self.bytes[1..]
    }
}

/// A distance function over points of type `P`.
///
/// Implementations must be symmetric and satisfy `distance(x, x) == 0`.
/// All four codec metrics here are true metrics (triangle inequality),
/// which is what makes ball pruning during search sound.
pub trait Metric<P: ?Sized>: Send + Sync {
    fn name(&self) -> &'static str;

    /// Distance between two points. Panics on incompatible payloads;
    /// datasets are validated up front via [`CompressiveMetric::check_dataset`].
    fn distance(&self, a: &P, b: &P) -> f64;
}

impl<P: ?Sized, M: Metric<P> + ?Sized> Metric<P> for &M {
    fn name(&self) -> &'static str {
        (**self).name()
    }
    fn distance(&self, a: &P, b: &P) -> f64 {
        (**self).distance(a, b)
    }
}

/// A metric plus the invertible delta codec that makes it compressive.
pub trait CompressiveMetric: Metric<Payload> {
    /// Payload kind this metric operates on.
    fn payload_kind(&self) -> PayloadKind;

    /// Encodes `target` as a delta against `reference`.
    fn encode(&self, target: &Payload, reference: &Payload) -> Encoding;

    /// Inverts [`CompressiveMetric::encode`]: reconstructs the target exactly.
    fn decode(&self, encoding: &Encoding, reference: &Payload) -> Result<Payload, CodecError>;

    /// Affine upper bound on `encode(x, y).size()` in terms of
    /// `distance(x, y)`. The constants are declared per codec and asserted
    /// by property tests.
    fn size_bound(&self, distance: f64) -> f64;

    /// Whether repeated rho-NN's radius-doubling schedule makes progress
    /// under this metric. False for set distances, where distances saturate
    /// near 1 and growing the radius stops admitting new candidates.
    fn supports_radius_growth(&self) -> bool;

    /// Validates that every point is usable under this metric
    /// (payload kinds, equal lengths for Hamming).
    fn check_dataset(&self, points: &[Point]) -> Result<(), MetricError>;
}

impl dyn CompressiveMetric + '_ {
    /// Upcast to the plain metric view (for tree construction, which is
    /// generic over any [`Metric`]).
    pub fn as_metric(&self) -> &dyn Metric<Payload> {
        self
    }
}

/// Looks up a codec metric by CLI name.
///
/// `max_set_len` parameterizes the declared size bound of the set codecs
/// (largest set cardinality in the dataset); it does not affect encoding.
pub fn compressive_metric(
    name: &str,
    max_set_len: usize,
) -> Result<Box<dyn CompressiveMetric>, MetricError> {
    match name {
        "hamming" => Ok(Box::new(Hamming)),
        "levenshtein" => Ok(Box::new(Levenshtein)),
        "jaccard" => Ok(Box::new(Jaccard::new(max_set_len))),
        "dice" => Ok(Box::new(Dice::new(max_set_len))),
        other => Err(MetricError::UnknownMetric(other.to_string())),
    }
}

pub(crate) fn expect_seq<'a>(p: &'a Payload, metric: &str) -> &'a [u8] {
    p.as_seq()
        .unwrap_or_else(|| panic!("{metric} requires sequence payloads"))
}

pub(crate) fn expect_set<'a>(p: &'a Payload, metric: &str) -> &'a [u32] {
    p.as_set()
        .unwrap_or_else(|| panic!("{metric} requires set payloads"))
}

pub(crate) fn check_all_kind(points: &[Point], expected: PayloadKind) -> Result<(), MetricError> {
    for p in points {
        if p.payload.kind() != expected {
            return Err(MetricError::KindMismatch {
                expected: expected.name(),
                got: p.payload.kind().name(),
            });
        }
    }
    Ok(())
}

pub(crate) fn write_count(out: &mut Vec<u8>, n: usize) {
    write_varint(out, n as u64);
}

pub(crate) fn read_count(buf: &[u8], pos: &mut usize) -> Result<usize, CodecError> {
    Ok(read_varint(buf, pos)? as usize)
}
