//! Dataset points: an id plus one of the two supported payload kinds.

use serde::{Deserialize, Serialize};

/// What a payload holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PayloadKind {
    /// A byte sequence (biological sequence, possibly gapped).
    Seq,
    /// A strictly sorted set of integer members (a transaction).
    Set,
}

impl PayloadKind {
    pub fn name(self) -> &'static str {
        match self {
            PayloadKind::Seq => "seq",
            PayloadKind::Set => "set",
        }
    }
}

/// A point's data: either a byte sequence or a sorted-unique integer set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Payload {
    Seq(Vec<u8>),
    Set(Vec<u32>),
}

impl Payload {
    /// Builds a set payload, sorting and deduplicating the members.
    pub fn set(mut members: Vec<u32>) -> Self {
        members.sort_unstable();
        members.dedup();
        Payload::Set(members)
    }

    pub fn kind(&self) -> PayloadKind {
        match self {
            Payload::Seq(_) => PayloadKind::Seq,
            Payload::Set(_) => PayloadKind::Set,
        }
    }

    pub fn as_seq(&self) -> Option<&[u8]> {
        match self {
            Payload::Seq(s) => Some(s),
            Payload::Set(_) => None,
        }
    }

    pub fn as_set(&self) -> Option<&[u32]> {
        match self {
            Payload::Set(s) => Some(s),
            Payload::Seq(_) => None,
        }
    }

    /// Bytes this payload occupies in raw (uncompressed) form: one byte per
    /// sequence character, four bytes per set member. This is the numerator
    /// of every compression ratio reported by the bench harness.
    pub fn raw_size(&self) -> usize {
        match self {
            Payload::Seq(s) => s.len(),
            Payload::Set(s) => 4 * s.len(),
        }
    }
}

/// A dataset point. Ids are unique within a dataset and survive
/// compression and decompression unchanged.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Point {
    pub id: u64,
    pub payload: Payload,
}

impl Point {
    pub fn new(id: u64, payload: Payload) -> Self {
        Point { id, payload }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_constructor_sorts_and_dedups() {
        let p = Payload::set(vec![3, 1, 2, 3, 1]);
        assert_eq!(p.as_set().unwrap(), &[1, 2, 3]);
    }

    #[test]
    fn raw_sizes() {
        assert_eq!(Payload::Seq(b"ACGT".to_vec()).raw_size(), 4);
        assert_eq!(Payload::set(vec![1, 2, 3]).raw_size(), 12);
        assert_eq!(Payload::set(vec![]).raw_size(), 0);
    }
}
