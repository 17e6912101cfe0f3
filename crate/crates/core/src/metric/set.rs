//! Set metrics: Jaccard and Dice over sorted integer sets, encoded as
//! set differences against a reference.

use super::{
    check_all_kind, expect_set, read_count, write_count, CompressiveMetric, Encoding,
    EncodingKind, Metric,
};
use crate::error::{CodecError, MetricError};
use crate::point::{Payload, PayloadKind, Point};
use crate::varint::{read_varint, write_varint};

fn intersection_size(a: &[u32], b: &[u32]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// Jaccard distance `1 - |a n b| / |a u b|`, evaluated as a single
/// division `(|u| - |i|) / |u|` of exact integer counts so that equal
/// rationals always produce bit-identical values. Two empty sets are
/// identical points: distance 0.
pub fn jaccard_distance(a: &[u32], b: &[u32]) -> f64 {
    let inter = intersection_size(a, b);
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        (union - inter) as f64 / union as f64
    }
}

/// Dice distance `1 - 2|a n b| / (|a| + |b|)`, evaluated as a single
/// division of exact integer counts. Two empty sets have distance 0.
pub fn dice_distance(a: &[u32], b: &[u32]) -> f64 {
    let total = a.len() + b.len();
    if total == 0 {
        return 0.0;
    }
    let inter = intersection_size(a, b);
    (total - 2 * inter) as f64 / total as f64
}

fn sorted_difference(a: &[u32], b: &[u32]) -> Vec<u32> {
    let mut out = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < a.len() {
        if j >= b.len() || a[i] < b[j] {
            out.push(a[i]);
            i += 1;
        } else if a[i] > b[j] {
            j += 1;
        } else {
            i += 1;
            j += 1;
        }
    }
    out
}

fn write_delta_list(out: &mut Vec<u8>, members: &[u32]) {
    write_count(out, members.len());
    let mut prev = 0u64;
    for (k, &m) in members.iter().enumerate() {
        let m = u64::from(m);
        if k == 0 {
            write_varint(out, m);
        } else {
            write_varint(out, m - prev);
        }
        prev = m;
    }
}

fn read_delta_list(buf: &[u8], pos: &mut usize) -> Result<Vec<u32>, CodecError> {
    let count = read_count(buf, pos)?;
    let mut members = Vec::with_capacity(count);
    let mut prev = 0u64;
    for k in 0..count {
        let v = read_varint(buf, pos)?;
        let m = if k == 0 { v } else { prev + v };
        if m > u64::from(u32::MAX) {
            return Err(CodecError::VarintOverflow { offset: *pos });
        }
        members.push(m as u32);
        prev = m;
    }
    Ok(members)
}

/// Encodes `target` against `reference` as the pair of sorted member
/// lists (target minus reference, reference minus target).
pub fn set_diff_encode(target: &[u32], reference: &[u32]) -> Encoding {
    let added = sorted_difference(target, reference);
    let removed = sorted_difference(reference, target);
    let mut body = Vec::new();
    write_delta_list(&mut body, &added);
    write_delta_list(&mut body, &removed);
    Encoding::from_parts(EncodingKind::SetDiff, body)
}

/// Inverts [`set_diff_encode`].
pub fn set_diff_decode(encoding: &Encoding, reference: &[u32]) -> Result<Vec<u32>, CodecError> {
    if encoding.kind() != EncodingKind::SetDiff {
        return Err(CodecError::WrongKind { got: "set-diff" });
    }
    let body = encoding.body();
    let mut pos = 0usize;
    let added = read_delta_list(body, &mut pos)?;
    let removed = read_delta_list(body, &mut pos)?;
    // target = (reference - removed) u added; all three lists are sorted.
    let kept = sorted_difference(reference, &removed);
    let mut out = Vec::with_capacity(kept.len() + added.len());
    let (mut i, mut j) = (0, 0);
    while i < kept.len() || j < added.len() {
        if j >= added.len() || (i < kept.len() && kept[i] < added[j]) {
            out.push(kept[i]);
            i += 1;
        } else {
            out.push(added[j]);
            j += 1;
        }
    }
    Ok(out)
}

macro_rules! set_metric {
    ($name:ident, $label:literal, $distance:path, $doc:literal) => {
        #[doc = $doc]
        pub struct $name {
            max_set_len: usize,
        }

        impl $name {
            /// `max_set_len` is the largest set cardinality the metric will
            /// see; it scales the declared size bound and nothing else.
            pub fn new(max_set_len: usize) -> Self {
                Self { max_set_len }
            }
        }

        impl Metric<Payload> for $name {
            fn name(&self) -> &'static str {
                $label
            }

            fn distance(&self, a: &Payload, b: &Payload) -> f64 {
                $distance(expect_set(a, $label), expect_set(b, $label))
            }
        }

        impl CompressiveMetric for $name {
            fn payload_kind(&self) -> PayloadKind {
                PayloadKind::Set
            }

            fn encode(&self, target: &Payload, reference: &Payload) -> Encoding {
                set_diff_encode(expect_set(target, $label), expect_set(reference, $label))
            }

            fn decode(
                &self,
                encoding: &Encoding,
                reference: &Payload,
            ) -> Result<Payload, CodecError> {
                set_diff_decode(encoding, expect_set(reference, $label)).map(Payload::Set)
            }

            // The symmetric difference has at most distance * (|a| + |b|)
            // members (for Jaccard, distance * |union| exactly), each a
            // varint of at most 5 bytes. Overhead: kind tag + two counts.
            fn size_bound(&self, distance: f64) -> f64 {
                10.0 * self.max_set_len as f64 * distance + 11.0
            }

            fn supports_radius_growth(&self) -> bool {
                false
            }

            fn check_dataset(&self, points: &[Point]) -> Result<(), MetricError> {
                check_all_kind(points, PayloadKind::Set)
            }
        }
    };
}

set_metric!(
    Jaccard,
    "jaccard",
    jaccard_distance,
    "Jaccard distance over sorted integer sets, encoded as set diffs."
);
set_metric!(
    Dice,
    "dice",
    dice_distance,
    "Dice distance over sorted integer sets, encoded as set diffs."
);
