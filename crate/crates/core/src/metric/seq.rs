//! Sequence metrics: Hamming with index-diff encoding, Levenshtein with
//! Needleman-Wunsch edit traces.

use super::{
    check_all_kind, expect_seq, read_count, write_count, CompressiveMetric, Encoding,
    EncodingKind, Metric,
};
use crate::error::{CodecError, MetricError};
use crate::point::{Payload, PayloadKind, Point};
use crate::varint::{read_varint, write_varint};

/// Number of positions at which two equal-length sequences differ.
pub fn hamming_distance(a: &[u8], b: &[u8]) -> Result<u64, MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(a.iter().zip(b).filter(|(x, y)| x != y).count() as u64)
}

/// Minimum number of single-character insertions, deletions, and
/// substitutions transforming `a` into `b`. Two-row dynamic program.
pub fn levenshtein_distance(a: &[u8], b: &[u8]) -> u64 {
    if a.is_empty() {
        return b.len() as u64;
    }
    if b.is_empty() {
        return a.len() as u64;
    }
    let mut prev: Vec<u32> = (0..=b.len() as u32).collect();
    let mut curr: Vec<u32> = vec![0; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        curr[0] = i as u32 + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + u32::from(ca != cb);
            let del = prev[j + 1] + 1;
            let ins = curr[j] + 1;
            curr[j + 1] = sub.min(del).min(ins);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    u64::from(prev[b.len()])
}

/// One edit against a reference sequence. Positions are absolute indices
/// into the reference; a trace applies left to right, copying untouched
/// reference bytes through (see [`apply_edit_trace`]).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Edit {
    /// Drop the reference byte at this position.
    Del(usize),
    /// Emit this byte before the reference byte at this position.
    Ins(usize, u8),
    /// Replace the reference byte at this position with this byte.
    Sub(usize, u8),
}

impl Edit {
    pub fn position(&self) -> usize {
        match *self {
            Edit::Del(p) | Edit::Ins(p, _) | Edit::Sub(p, _) => p,
        }
    }
}

const DIR_DIAG: u8 = 0;
const DIR_UP: u8 = 1;
const DIR_LEFT: u8 = 2;

/// Globally aligns `target` against `reference` with unit scores
/// (match 0, mismatch 1, gap 1) and returns the edits that transform the
/// reference into the target. With unit scores the trace length equals the
/// Levenshtein distance.
pub fn nw_edit_trace(target: &[u8], reference: &[u8]) -> Vec<Edit> {
    // Rows index the reference, columns the target. Full direction matrix
    // plus two rolling cost rows; traceback needs directions only.
    let rows = reference.len() + 1;
    let cols = target.len() + 1;
    let mut dirs = vec![0u8; rows * cols];
    let mut prev: Vec<u32> = (0..cols as u32).collect();
    let mut curr: Vec<u32> = vec![0; cols];

    for j in 1..cols {
        dirs[j] = DIR_LEFT;
    }
    for i in 1..rows {
        dirs[i * cols] = DIR_UP;
        curr[0] = i as u32;
        let rc = reference[i - 1];
        for j in 1..cols {
            let diag = prev[j - 1] + u32::from(rc != target[j - 1]);
            let up = prev[j] + 1;
            let left = curr[j - 1] + 1;
            // Tie preference: diagonal, then up, then left.
            let (cost, dir) = if diag <= up && diag <= left {
                (diag, DIR_DIAG)
            } else if up <= left {
                (up, DIR_UP)
            } else {
                (left, DIR_LEFT)
            };
            curr[j] = cost;
            dirs[i * cols + j] = dir;
        }
        std::mem::swap(&mut prev, &mut curr);
    }

    let mut edits = Vec::new();
    let (mut i, mut j) = (rows - 1, cols - 1);
    while i > 0 || j > 0 {
        match dirs[i * cols + j] {
            DIR_DIAG => {
                i -= 1;
                j -= 1;
                if reference[i] != target[j] {
                    edits.push(Edit::Sub(i, target[j]));
                }
            }
            DIR_UP => {
                i -= 1;
                edits.push(Edit::Del(i));
            }
            _ => {
                j -= 1;
                edits.push(Edit::Ins(i, target[j]));
            }
        }
    }
    edits.reverse();
    edits
}

/// Applies an edit trace to a reference sequence, reproducing the target.
pub fn apply_edit_trace(edits: &[Edit], reference: &[u8]) -> Result<Vec<u8>, CodecError> {
    let mut out = Vec::with_capacity(reference.len());
    let mut cursor = 0usize;
    for edit in edits {
        let pos = edit.position();
        let consumed = !matches!(edit, Edit::Ins(..));
        if pos < cursor || pos > reference.len() || (consumed && pos == reference.len()) {
            return Err(CodecError::EditOutOfBounds {
                position: pos,
                length: reference.len(),
            });
        }
        out.extend_from_slice(&reference[cursor..pos]);
        cursor = pos;
        match *edit {
            Edit::Del(_) => cursor += 1,
            Edit::Ins(_, c) => out.push(c),
            Edit::Sub(_, c) => {
                out.push(c);
                cursor += 1;
            }
        }
    }
    out.extend_from_slice(&reference[cursor..]);
    Ok(out)
}

const OP_DEL: u8 = 0;
const OP_INS: u8 = 1;
const OP_SUB: u8 = 2;

pub(crate) fn encode_edit_trace(edits: &[Edit]) -> Encoding {
    let mut body = Vec::new();
    write_count(&mut body, edits.len());
    for edit in edits {
        write_varint(&mut body, edit.position() as u64);
        match *edit {
            Edit::Del(_) => body.push(OP_DEL),
            Edit::Ins(_, c) => {
                body.push(OP_INS);
                body.push(c);
            }
            Edit::Sub(_, c) => {
                body.push(OP_SUB);
                body.push(c);
            }
        }
    }
    Encoding::from_parts(EncodingKind::EditTrace, body)
}

pub(crate) fn decode_edit_trace(encoding: &Encoding) -> Result<Vec<Edit>, CodecError> {
    if encoding.kind() != EncodingKind::EditTrace {
        return Err(CodecError::WrongKind { got: "edit-trace" });
    }
    let body = encoding.body();
    let mut pos = 0usize;
    let count = read_count(body, &mut pos)?;
    let mut edits = Vec::with_capacity(count);
    for _ in 0..count {
        let at = read_varint(body, &mut pos)? as usize;
        let op = *body.get(pos).ok_or(CodecError::Truncated { offset: pos })?;
        pos += 1;
        let edit = match op {
            OP_DEL => Edit::Del(at),
            OP_INS | OP_SUB => {
                let c = *body.get(pos).ok_or(CodecError::Truncated { offset: pos })?;
                pos += 1;
                if op == OP_INS {
                    Edit::Ins(at, c)
                } else {
                    Edit::Sub(at, c)
                }
            }
            other => return Err(CodecError::UnknownKind(other)),
        };
        edits.push(edit);
    }
    Ok(edits)
}

/// Records the positions where `target` differs from the equal-length
/// `reference`, with the target's byte at each such position.
pub fn index_diff_encode(target: &[u8], reference: &[u8]) -> Result<Encoding, MetricError> {
    if target.len() != reference.len() {
        return Err(MetricError::LengthMismatch {
            left: target.len(),
            right: reference.len(),
        });
    }
    let mut body = Vec::new();
    let count = target
        .iter()
        .zip(reference)
        .filter(|(t, r)| t != r)
        .count();
    write_count(&mut body, count);
    for (i, (&t, &r)) in target.iter().zip(reference).enumerate() {
        if t != r {
            write_varint(&mut body, i as u64);
            body.push(t);
        }
    }
    Ok(Encoding::from_parts(EncodingKind::IndexDiff, body))
}

/// Inverts [`index_diff_encode`].
pub fn index_diff_decode(encoding: &Encoding, reference: &[u8]) -> Result<Vec<u8>, CodecError> {
    if encoding.kind() != EncodingKind::IndexDiff {
        return Err(CodecError::WrongKind { got: "index-diff" });
    }
    let body = encoding.body();
    let mut pos = 0usize;
    let count = read_count(body, &mut pos)?;
    let mut out = reference.to_vec();
    for _ in 0..count {
        let at = read_varint(body, &mut pos)? as usize;
        let c = *body.get(pos).ok_or(CodecError::Truncated { offset: pos })?;
        pos += 1;
        if at >= out.len() {
            return Err(CodecError::EditOutOfBounds {
                position: at,
                length: out.len(),
            });
        }
        out[at] = c;
    }
    Ok(out)
}

/// Hamming distance over equal-length sequences, encoded as index diffs.
pub struct Hamming;

impl Metric<Payload> for Hamming {
    fn name(&self) -> &'static str {
        "hamming"
    }

    fn distance(&self, a: &Payload, b: &Payload) -> f64 {
        hamming_distance(expect_seq(a, "hamming"), expect_seq(b, "hamming"))
            .expect("hamming over validated equal-length sequences") as f64
    }
}

impl CompressiveMetric for Hamming {
    fn payload_kind(&self) -> PayloadKind {
        PayloadKind::Seq
    }

    fn encode(&self, target: &Payload, reference: &Payload) -> Encoding {
        index_diff_encode(expect_seq(target, "hamming"), expect_seq(reference, "hamming"))
            .expect("hamming encode over validated equal-length sequences")
    }

    fn decode(&self, encoding: &Encoding, reference: &Payload) -> Result<Payload, CodecError> {
        index_diff_decode(encoding, expect_seq(reference, "hamming")).map(Payload::Seq)
    }

    // Per diff: index varint (<= 5 for u32 positions) + 1 byte. Overhead:
    // kind tag + count varint.
    fn size_bound(&self, distance: f64) -> f64 {
        6.0 * distance + 6.0
    }

    fn supports_radius_growth(&self) -> bool {
        true
    }

    fn check_dataset(&self, points: &[Point]) -> Result<(), MetricError> {
        check_all_kind(points, PayloadKind::Seq)?;
        if let Some(first) = points.first() {
            let len = first.payload.as_seq().expect("checked above").len();
            for p in points {
                let l = p.payload.as_seq().expect("checked above").len();
                if l != len {
                    return Err(MetricError::LengthMismatch { left: len, right: l });
                }
            }
        }
        Ok(())
    }
}

/// Levenshtein distance, encoded as Needleman-Wunsch edit traces.
pub struct Levenshtein;

impl Metric<Payload> for Levenshtein {
    fn name(&self) -> &'static str {
        "levenshtein"
    }

    fn distance(&self, a: &Payload, b: &Payload) -> f64 {
        levenshtein_distance(expect_seq(a, "levenshtein"), expect_seq(b, "levenshtein")) as f64
    }
}

impl CompressiveMetric for Levenshtein {
    fn payload_kind(&self) -> PayloadKind {
        PayloadKind::Seq
    }

    fn encode(&self, target: &Payload, reference: &Payload) -> Encoding {
        encode_edit_trace(&nw_edit_trace(
            expect_seq(target, "levenshtein"),
            expect_seq(reference, "levenshtein"),
        ))
    }

    fn decode(&self, encoding: &Encoding, reference: &Payload) -> Result<Payload, CodecError> {
        let edits = decode_edit_trace(encoding)?;
        apply_edit_trace(&edits, expect_seq(reference, "levenshtein")).map(Payload::Seq)
    }

    // Per edit: position varint (<= 5) + opcode + optional byte. Overhead:
    // kind tag + count varint.
    fn size_bound(&self, distance: f64) -> f64 {
        7.0 * distance + 6.0
    }

    fn supports_radius_growth(&self) -> bool {
        true
    }

    fn check_dataset(&self, points: &[Point]) -> Result<(), MetricError> {
        check_all_kind(points, PayloadKind::Seq)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hamming_examples() {
        assert_eq!(hamming_distance(b"ACGT", b"ACGT").unwrap(), 0);
        assert_eq!(hamming_distance(b"ACGT", b"AGGT").unwrap(), 1);
        assert_eq!(hamming_distance(b"AAAA", b"TTTT").unwrap(), 4);
        assert!(matches!(
            hamming_distance(b"AC", b"ACG"),
            Err(MetricError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn levenshtein_examples() {
        assert_eq!(levenshtein_distance(b"abc", b"abc"), 0);
        assert_eq!(levenshtein_distance(b"", b"abc"), 3);
        assert_eq!(levenshtein_distance(b"kitten", b"sitting"), 3);
    }

    // Independent O(n*m) full-table oracle for Levenshtein, kept separate
    // from both the two-row implementation and the NW aligner.
    fn lev_oracle(a: &[u8], b: &[u8]) -> u64 {
        let mut t = vec![vec![0u64; b.len() + 1]; a.len() + 1];
        for (i, row) in t.iter_mut().enumerate() {
            row[0] = i as u64;
        }
        for j in 0..=b.len() {
            t[0][j] = j as u64;
        }
        for i in 1..=a.len() {
            for j in 1..=b.len() {
                let sub = t[i - 1][j - 1] + u64::from(a[i - 1] != b[j - 1]);
                t[i][j] = sub.min(t[i - 1][j] + 1).min(t[i][j - 1] + 1);
            }
        }
        t[a.len()][b.len()]
    }

    #[test]
    fn nw_trace_examples() {
        assert!(nw_edit_trace(b"abc", b"abc").is_empty());
        assert_eq!(nw_edit_trace(b"abd", b"abc"), vec![Edit::Sub(2, b'd')]);
    }

    #[test]
    fn trace_positions_are_nondecreasing() {
        let trace = nw_edit_trace(b"GATTACA", b"CTGACGACA");
        let positions: Vec<usize> = trace.iter().map(Edit::position).collect();
        let mut sorted = positions.clone();
        sorted.sort_unstable();
        assert_eq!(positions, sorted);
    }

    #[test]
    fn index_diff_examples() {
        let e = index_diff_encode(b"ACGT", b"ACGT").unwrap();
        assert_eq!(index_diff_decode(&e, b"ACGT").unwrap(), b"ACGT");
        assert_eq!(e.size(), 2); // kind tag + zero count

        let e = index_diff_encode(b"AGGT", b"ACGT").unwrap();
        assert_eq!(e.body(), &[1, 1, b'G']);
        assert_eq!(index_diff_decode(&e, b"ACGT").unwrap(), b"AGGT");
    }

    fn seq_strategy() -> impl Strategy<Value = Vec<u8>> {
        proptest::collection::vec(proptest::sample::select(b"ACGT".to_vec()), 0..60)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(500))]

        #[test]
        fn nw_trace_roundtrips_and_matches_levenshtein(
            target in seq_strategy(),
            reference in seq_strategy(),
        ) {
            let trace = nw_edit_trace(&target, &reference);
            prop_assert_eq!(
                trace.len() as u64,
                levenshtein_distance(&target, &reference)
            );
            prop_assert_eq!(apply_edit_trace(&trace, &reference).unwrap(), target.clone());

            // Wire roundtrip through the byte layout.
            let enc = encode_edit_trace(&trace);
            prop_assert_eq!(decode_edit_trace(&enc).unwrap(), trace);
        }

        #[test]
        fn levenshtein_matches_full_table_oracle(
            a in seq_strategy(),
            b in seq_strategy(),
        ) {
            prop_assert_eq!(levenshtein_distance(&a, &b), lev_oracle(&a, &b));
        }

        #[test]
        fn index_diff_roundtrips(
            pair in seq_strategy().prop_flat_map(|a| {
                let n = a.len();
                (Just(a), proptest::collection::vec(proptest::sample::select(b"ACGT".to_vec()), n))
            })
        ) {
            let (a, b) = pair;
            let enc = index_diff_encode(&a, &b).unwrap();
            prop_assert_eq!(index_diff_decode(&enc, &b).unwrap(), a);
        }

        #[test]
        fn seq_metric_axioms(
            a in seq_strategy(),
            b in seq_strategy(),
            c in seq_strategy(),
        ) {
            let dab = levenshtein_distance(&a, &b);
            let dba = levenshtein_distance(&b, &a);
            let dac = levenshtein_distance(&a, &c);
            let dcb = levenshtein_distance(&c, &b);
            prop_assert_eq!(dab, dba);
            prop_assert_eq!(levenshtein_distance(&a, &a), 0);
            prop_assert!(dab <= dac + dcb);
        }

        #[test]
        fn seq_size_bounds_hold(
            target in seq_strategy(),
            reference in seq_strategy(),
        ) {
            let lev = Levenshtein;
            let (t, r) = (Payload::Seq(target.clone()), Payload::Seq(reference.clone()));
            let d = lev.distance(&t, &r);
            prop_assert!(lev.encode(&t, &r).size() as f64 <= lev.size_bound(d));

            if target.len() == reference.len() {
                let ham = Hamming;
                let d = ham.distance(&t, &r);
                prop_assert!(ham.encode(&t, &r).size() as f64 <= ham.size_bound(d));
            }
        }
    }
}
