//! The on-disk index: a trimmed tree plus per-cluster delta encodings,
//! written as a single self-contained file (layout in format.md at the
//! repo root). Supports decompressing any subtree, and point lookup,
//! without touching the rest of the blob section.

use crate::compress::{CompressionMode, Compressed};
use crate::error::{CodecError, StoreError};
use crate::metric::{compressive_metric, CompressiveMetric, Encoding};
use crate::point::{Payload, PayloadKind};
use crate::varint::{read_varint, write_varint};
use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

const MAGIC: &[u8; 4] = b"PCKS";
const VERSION: u16 = 1;
const NODE_RECORD_LEN: usize = 96;
const NONE_U64: u64 = u64::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StoredMode {
    UnitaryLeaf,
    RecursiveInternal,
}

/// One row of the node table.
#[derive(Clone, Debug)]
pub struct StoredNode {
    pub center: usize,
    pub radius: f64,
    pub lev_radius: f64,
    pub cardinality: usize,
    pub offset: usize,
    pub depth: usize,
    pub mode: StoredMode,
    pub children: Option<(usize, usize)>,
    pub center_enc: (u64, u64),
    pub members_blob: (u64, u64),
}

/// Size accounting returned by [`write_index`].
#[derive(Clone, Copy, Debug)]
pub struct WriteReport {
    pub total_bytes: u64,
    /// Blob section: the delta-encoded payloads.
    pub data_bytes: u64,
    /// Everything else: header, id table, permutation, node table.
    pub tree_bytes: u64,
    pub node_count: usize,
}

fn canonical_payload_bytes(payload: &Payload) -> Vec<u8> {
    match payload {
        Payload::Seq(s) => s.clone(),
        Payload::Set(members) => {
            let mut out = Vec::new();
            write_varint(&mut out, members.len() as u64);
            let mut prev = 0u64;
            for (k, &m) in members.iter().enumerate() {
                let m = u64::from(m);
                write_varint(&mut out, if k == 0 { m } else { m - prev });
                prev = m;
            }
            out
        }
    }
}

fn payload_from_canonical(kind: PayloadKind, bytes: &[u8]) -> Result<Payload, CodecError> {
    match kind {
        PayloadKind::Seq => Ok(Payload::Seq(bytes.to_vec())),
        PayloadKind::Set => {
            let mut pos = 0usize;
            let count = read_varint(bytes, &mut pos)? as usize;
            let mut members = Vec::with_capacity(count);
            let mut prev = 0u64;
            for k in 0..count {
                let v = read_varint(bytes, &mut pos)?;
                let m = if k == 0 { v } else { prev + v };
                members.push(m as u32);
                prev = m;
            }
            Ok(Payload::Set(members))
        }
    }
}

/// Serializes a compressed tree. `lev_radii`, when given, must align with
/// `compressed.tree.nodes` and is stored per node for gap-stripped
/// Levenshtein query bounds on MSA indexes.
#[allow(clippy::too_many_arguments)]
pub fn write_index(
    compressed: &Compressed,
    points: &[Payload],
    ids: &[u64],
    metric: &dyn CompressiveMetric,
    msa: bool,
    lev_radii: Option<&[f64]>,
    path: &Path,
) -> Result<WriteReport, StoreError> {
    let tree = &compressed.tree;
    let plan = &compressed.plan;
    let n = points.len();
    assert_eq!(ids.len(), n);

    // Header.
    let mut header = Vec::new();
    header.extend_from_slice(MAGIC);
    header.extend_from_slice(&VERSION.to_le_bytes());
    header.push(match metric.payload_kind() {
        PayloadKind::Seq => 0,
        PayloadKind::Set => 1,
    });
    header.push(u8::from(msa));
    let name = metric.name().as_bytes();
    header.push(name.len() as u8);
    header.extend_from_slice(name);
    header.extend_from_slice(&if n == 0 { 0 } else { tree.seed }.to_le_bytes());
    header.extend_from_slice(&(n as u64).to_le_bytes());
    let node_count = if n == 0 { 0 } else { tree.nodes.len() };
    header.extend_from_slice(&(node_count as u64).to_le_bytes());
    if n > 0 {
        let root_payload = canonical_payload_bytes(&points[tree.root().center]);
        header.extend_from_slice(&(root_payload.len() as u64).to_le_bytes());
        header.extend_from_slice(&root_payload);
    }

    // Id table and permutation.
    let mut tables = Vec::with_capacity(n * 12);
    for &id in ids {
        tables.extend_from_slice(&id.to_le_bytes());
    }
    if n > 0 {
        for &ordinal in &tree.permutation {
            tables.extend_from_slice(&(ordinal as u32).to_le_bytes());
        }
    }

    // Blob section plus per-node offsets, in pre-order. Parents precede
    // children in the arena, so parent center ordinals are already known.
    let mut blob = Vec::new();
    let mut records = Vec::with_capacity(node_count * NODE_RECORD_LEN);
    let mut parent_center = vec![usize::MAX; node_count];
    let mut committed = 0u64;
    for (idx, node) in tree.nodes.iter().enumerate() {
        let (center_off, center_len) = if idx == 0 {
            (NONE_U64, 0u64)
        } else {
            let enc = metric.encode(&points[node.center], &points[parent_center[idx]]);
            let off = blob.len() as u64;
            blob.extend_from_slice(enc.as_bytes());
            committed += enc.size() as u64;
            (off, enc.size() as u64)
        };
        let (members_off, members_len) = match plan.nodes[idx].mode {
            CompressionMode::Recursive => {
                let (li, ri) = node.children.expect("recursive node has children");
                parent_center[li] = node.center;
                parent_center[ri] = node.center;
                (NONE_U64, 0u64)
            }
            CompressionMode::Unitary => {
                let off = blob.len() as u64;
                let mut len = 0u64;
                for &m in tree.members(node) {
                    if m == node.center {
                        continue;
                    }
                    let enc = metric.encode(&points[m], &points[node.center]);
                    blob.extend_from_slice(enc.as_bytes());
                    len += enc.size() as u64;
                }
                committed += len;
                debug_assert_eq!(len, plan.nodes[idx].unitary_cost);
                (off, len)
            }
        };

        records.extend_from_slice(&(node.center as u64).to_le_bytes());
        records.extend_from_slice(&node.radius.to_le_bytes());
        let lr = lev_radii.map_or(node.radius, |lr| lr[idx]);
        records.extend_from_slice(&lr.to_le_bytes());
        records.extend_from_slice(&(node.cardinality as u64).to_le_bytes());
        records.extend_from_slice(&(node.offset as u64).to_le_bytes());
        records.extend_from_slice(&(node.depth as u32).to_le_bytes());
        records.push(match plan.nodes[idx].mode {
            CompressionMode::Unitary => 0,
            CompressionMode::Recursive => 1,
        });
        records.extend_from_slice(&[0u8; 3]);
        let (l, r) = node
            .children
            .map_or((NONE_U64, NONE_U64), |(l, r)| (l as u64, r as u64));
        records.extend_from_slice(&l.to_le_bytes());
        records.extend_from_slice(&r.to_le_bytes());
        records.extend_from_slice(&center_off.to_le_bytes());
        records.extend_from_slice(&center_len.to_le_bytes());
        records.extend_from_slice(&members_off.to_le_bytes());
        records.extend_from_slice(&members_len.to_le_bytes());
    }

    // Accounting identity: the blob holds exactly the bytes the plan
    // committed to (member encodings of unitary leaves + center edges).
    if n > 0 {
        debug_assert_eq!(committed, plan.committed_bytes(tree));
        debug_assert_eq!(blob.len() as u64, committed);
    }

    let mut file = File::create(path)?;
    file.write_all(&header)?;
    file.write_all(&tables)?;
    file.write_all(&records)?;
    file.write_all(&blob)?;
    file.flush()?;

    let tree_bytes = (header.len() + tables.len() + records.len()) as u64;
    Ok(WriteReport {
        total_bytes: tree_bytes + blob.len() as u64,
        data_bytes: blob.len() as u64,
        tree_bytes,
        node_count,
    })
}

/// A loaded index: header and tables in memory, blobs read on demand.
pub struct IndexFile {
    pub payload_kind: PayloadKind,
    pub msa: bool,
    pub metric_name: String,
    pub seed: u64,
    pub point_count: usize,
    pub ids: Vec<u64>,
    /// Tree order -> dataset ordinal.
    pub permutation: Vec<u32>,
    /// Dataset ordinal -> position in the permutation.
    pub inv_permutation: Vec<u32>,
    pub nodes: Vec<StoredNode>,
    pub parents: Vec<usize>,
    root_payload: Option<Payload>,
    path: PathBuf,
    blob_base: u64,
    pub data_bytes: u64,
    pub tree_bytes: u64,
}

fn read_exact_buf(file: &mut File, len: usize) -> Result<Vec<u8>, StoreError> {
    let mut buf = vec![0u8; len];
    file.read_exact(&mut buf)?;
    Ok(buf)
}

impl IndexFile {
    pub fn open(path: &Path) -> Result<IndexFile, StoreError> {
        let mut file = File::open(path)?;
        let mut magic = [0u8; 4];
        file.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(StoreError::BadMagic);
        }
        let mut buf2 = [0u8; 2];
        file.read_exact(&mut buf2)?;
        let version = u16::from_le_bytes(buf2);
        if version != VERSION {
            return Err(StoreError::BadVersion(version));
        }
        let mut buf3 = [0u8; 3];
        file.read_exact(&mut buf3)?;
        let payload_kind = match buf3[0] {
            0 => PayloadKind::Seq,
            1 => PayloadKind::Set,
            other => {
                return Err(StoreError::Integrity {
                    node: 0,
                    detail: format!("bad payload kind {other}"),
                })
            }
        };
        let msa = buf3[1] & 1 == 1;
        let metric_name =
            String::from_utf8(read_exact_buf(&mut file, buf3[2] as usize)?).map_err(|_| {
                StoreError::Integrity {
                    node: 0,
                    detail: "metric name is not utf-8".into(),
                }
            })?;
        // Reject names this build does not know how to decode.
        compressive_metric(&metric_name, 0)
            .map_err(|_| StoreError::UnsupportedMetric(metric_name.clone()))?;

        let mut buf8 = [0u8; 8];
        file.read_exact(&mut buf8)?;
        let seed = u64::from_le_bytes(buf8);
        file.read_exact(&mut buf8)?;
        let point_count = u64::from_le_bytes(buf8) as usize;
        file.read_exact(&mut buf8)?;
        let node_count = u64::from_le_bytes(buf8) as usize;
        let root_payload = if point_count > 0 {
            file.read_exact(&mut buf8)?;
            let len = u64::from_le_bytes(buf8) as usize;
            let bytes = read_exact_buf(&mut file, len)?;
            Some(
                payload_from_canonical(payload_kind, &bytes).map_err(|e| StoreError::Codec {
                    node: 0,
                    source: e,
                })?,
            )
        } else {
            None
        };

        let mut ids = Vec::with_capacity(point_count);
        let id_bytes = read_exact_buf(&mut file, point_count * 8)?;
        for chunk in id_bytes.chunks_exact(8) {
            ids.push(u64::from_le_bytes(chunk.try_into().expect("chunk of 8")));
        }
        let perm_bytes = read_exact_buf(&mut file, point_count * 4)?;
        let mut permutation = Vec::with_capacity(point_count);
        for chunk in perm_bytes.chunks_exact(4) {
            permutation.push(u32::from_le_bytes(chunk.try_into().expect("chunk of 4")));
        }
        let mut inv_permutation = vec![0u32; point_count];
        for (pos, &ordinal) in permutation.iter().enumerate() {
            if ordinal as usize >= point_count {
                return Err(StoreError::Integrity {
                    node: 0,
                    detail: format!("permutation entry {ordinal} out of range"),
                });
            }
            inv_permutation[ordinal as usize] = pos as u32;
        }

        let record_bytes = read_exact_buf(&mut file, node_count * NODE_RECORD_LEN)?;
        let mut nodes = Vec::with_capacity(node_count);
        for (i, rec) in record_bytes.chunks_exact(NODE_RECORD_LEN).enumerate() {
            let u = |at: usize| u64::from_le_bytes(rec[at..at + 8].try_into().expect("8 bytes"));
            let f = |at: usize| f64::from_le_bytes(rec[at..at + 8].try_into().expect("8 bytes"));
            let mode = match rec[44] {
                0 => StoredMode::UnitaryLeaf,
                1 => StoredMode::RecursiveInternal,
                other => {
                    return Err(StoreError::Integrity {
                        node: i,
                        detail: format!("bad mode byte {other}"),
                    })
                }
            };
            let (l, r) = (u(48), u(56));
            let children = if l == NONE_U64 {
                None
            } else {
                Some((l as usize, r as usize))
            };
            nodes.push(StoredNode {
                center: u(0) as usize,
                radius: f(8),
                lev_radius: f(16),
                cardinality: u(24) as usize,
                offset: u(32) as usize,
                depth: u32::from_le_bytes(rec[40..44].try_into().expect("4 bytes")) as usize,
                mode,
                children,
                center_enc: (u(64), u(72)),
                members_blob: (u(80), u(88)),
            });
        }
        let mut parents = vec![usize::MAX; node_count];
        for (idx, node) in nodes.iter().enumerate() {
            if let Some((l, r)) = node.children {
                if l >= node_count || r >= node_count {
                    return Err(StoreError::Integrity {
                        node: idx,
                        detail: "child index out of range".into(),
                    });
                }
                parents[l] = idx;
                parents[r] = idx;
            }
        }

        let blob_base = file.stream_position()?;
        let total = file.seek(SeekFrom::End(0))?;
        Ok(IndexFile {
            payload_kind,
            msa,
            metric_name,
            seed,
            point_count,
            ids,
            permutation,
            inv_permutation,
            nodes,
            parents,
            root_payload,
            path: path.to_path_buf(),
            blob_base,
            data_bytes: total - blob_base,
            tree_bytes: blob_base,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.point_count == 0
    }

    /// Length of the root payload when it is a sequence; for Hamming
    /// indexes this is the common width of every stored sequence.
    pub fn root_payload_len(&self) -> Option<usize> {
        self.root_payload
            .as_ref()
            .and_then(|p| p.as_seq().map(<[u8]>::len))
    }

    pub fn root(&self) -> Option<&StoredNode> {
        self.nodes.first()
    }

    /// Dataset ordinals of a node's members.
    pub fn members(&self, node: &StoredNode) -> &[u32] {
        &self.permutation[node.offset..node.offset + node.cardinality]
    }

    /// The codec this index was built with.
    pub fn metric(&self) -> Box<dyn CompressiveMetric> {
        compressive_metric(&self.metric_name, 0).expect("validated at open")
    }

    /// Starts a decompression session with its own file handle and
    /// center-chain cache.
    pub fn session(&self) -> Result<Session<'_>, StoreError> {
        Ok(Session {
            index: self,
            file: File::open(&self.path)?,
            metric: self.metric(),
            center_cache: HashMap::new(),
            materialized: std::collections::HashSet::new(),
            blob_reads: Vec::new(),
        })
    }
}

/// A decompression session: memoizes materialized centers along root
/// paths and records which points were materialized and which blob byte
/// ranges were read. Sessions are independent; concurrent readers each
/// hold their own.
pub struct Session<'a> {
    pub index: &'a IndexFile,
    file: File,
    metric: Box<dyn CompressiveMetric>,
    center_cache: HashMap<usize, Payload>,
    materialized: std::collections::HashSet<usize>,
    /// (offset, len) blob reads, for locality assertions.
    pub blob_reads: Vec<(u64, u64)>,
}

impl<'a> Session<'a> {
    fn read_blob(&mut self, off: u64, len: u64) -> Result<Vec<u8>, StoreError> {
        self.blob_reads.push((off, len));
        self.file
            .seek(SeekFrom::Start(self.index.blob_base + off))?;
        read_exact_buf(&mut self.file, len as usize)
    }

    /// Number of distinct points materialized so far.
    pub fn points_decompressed(&self) -> usize {
        self.materialized.len()
    }

    /// Fraction of the dataset materialized so far.
    pub fn decompressed_fraction(&self) -> f64 {
        if self.index.point_count == 0 {
            0.0
        } else {
            self.materialized.len() as f64 / self.index.point_count as f64
        }
    }

    /// Materializes the center of `node_idx` by decoding the chain of
    /// center encodings down from the root, memoizing along the way.
    pub fn center_payload(&mut self, node_idx: usize) -> Result<Payload, StoreError> {
        if node_idx >= self.index.nodes.len() {
            return Err(StoreError::NodeOutOfRange(node_idx));
        }
        if let Some(p) = self.center_cache.get(&node_idx) {
            return Ok(p.clone());
        }
        let payload = if node_idx == 0 {
            self.index
                .root_payload
                .clone()
                .ok_or(StoreError::NodeOutOfRange(0))?
        } else {
            let parent = self.index.parents[node_idx];
            let base = self.center_payload(parent)?;
            let (off, len) = self.index.nodes[node_idx].center_enc;
            let bytes = self.read_blob(off, len)?;
            let enc = Encoding::from_bytes(bytes).map_err(|e| StoreError::Codec {
                node: node_idx,
                source: e,
            })?;
            self.metric
                .decode(&enc, &base)
                .map_err(|e| StoreError::Codec {
                    node: node_idx,
                    source: e,
                })?
        };
        self.materialized.insert(self.index.nodes[node_idx].center);
        self.center_cache.insert(node_idx, payload.clone());
        Ok(payload)
    }

    /// Decompresses a unitary leaf: every member, in permutation order,
    /// as (dataset ordinal, payload).
    pub fn decompress_leaf(&mut self, node_idx: usize) -> Result<Vec<(usize, Payload)>, StoreError> {
        let node = self
            .index
            .nodes
            .get(node_idx)
            .ok_or(StoreError::NodeOutOfRange(node_idx))?
            .clone();
        if node.mode != StoredMode::UnitaryLeaf {
            return Err(StoreError::Integrity {
                node: node_idx,
                detail: "decompress_leaf on an internal node".into(),
            });
        }
        let center = self.center_payload(node_idx)?;
        let (off, len) = node.members_blob;
        let bytes = self.read_blob(off, len)?;
        let mut pos = 0usize;
        let mut out = Vec::with_capacity(node.cardinality);
        for &ordinal in self.index.members(&node) {
            let ordinal = ordinal as usize;
            if ordinal == node.center {
                out.push((ordinal, center.clone()));
                continue;
            }
            let start = pos;
            let enc = next_encoding(&bytes, &mut pos).map_err(|e| StoreError::Codec {
                node: node_idx,
                source: e,
            })?;
            debug_assert!(pos > start);
            let payload = self
                .metric
                .decode(&enc, &center)
                .map_err(|e| StoreError::Codec {
                    node: node_idx,
                    source: e,
                })?;
            self.materialized.insert(ordinal);
            out.push((ordinal, payload));
        }
        if pos != bytes.len() {
            return Err(StoreError::Integrity {
                node: node_idx,
                detail: format!("trailing bytes in member blob: {} of {}", pos, bytes.len()),
            });
        }
        Ok(out)
    }

    /// Decompresses a whole subtree: a unitary leaf yields its members,
    /// an internal node recurses into both children.
    pub fn decompress_cluster(
        &mut self,
        node_idx: usize,
    ) -> Result<Vec<(usize, Payload)>, StoreError> {
        let node = self
            .index
            .nodes
            .get(node_idx)
            .ok_or(StoreError::NodeOutOfRange(node_idx))?;
        match node.mode {
            StoredMode::UnitaryLeaf => self.decompress_leaf(node_idx),
            StoredMode::RecursiveInternal => {
                let (l, r) = node.children.expect("internal node has children");
                let mut out = self.decompress_cluster(l)?;
                out.extend(self.decompress_cluster(r)?);
                Ok(out)
            }
        }
    }

    /// Materializes a single point by walking down to the leaf whose
    /// permutation range contains it.
    pub fn point(&mut self, ordinal: usize) -> Result<Payload, StoreError> {
        if ordinal >= self.index.point_count {
            return Err(StoreError::NodeOutOfRange(ordinal));
        }
        let pos = self.index.inv_permutation[ordinal] as usize;
        let mut idx = 0usize;
        loop {
            let node = &self.index.nodes[idx];
            match node.children {
                None => break,
                Some((l, r)) => {
                    let left = &self.index.nodes[l];
                    idx = if pos < left.offset + left.cardinality { l } else { r };
                }
            }
        }
        let members = self.decompress_leaf(idx)?;
        members
            .into_iter()
            .find(|(o, _)| *o == ordinal)
            .map(|(_, p)| p)
            .ok_or(StoreError::Integrity {
                node: idx,
                detail: format!("ordinal {ordinal} missing from its leaf"),
            })
    }
}

/// Parses the next self-describing encoding out of a member blob.
fn next_encoding(bytes: &[u8], pos: &mut usize) -> Result<Encoding, CodecError> {
    let start = *pos;
    let tag = *bytes.get(start).ok_or(CodecError::Truncated { offset: start })?;
    let kind = crate::metric::EncodingKind::from_tag(tag)?;
    let mut p = start + 1;
    match kind {
        crate::metric::EncodingKind::IndexDiff => {
            let count = read_varint(bytes, &mut p)? as usize;
            for _ in 0..count {
                read_varint(bytes, &mut p)?;
                p += 1;
            }
        }
        crate::metric::EncodingKind::EditTrace => {
            let count = read_varint(bytes, &mut p)? as usize;
            for _ in 0..count {
                read_varint(bytes, &mut p)?;
                let op = *bytes.get(p).ok_or(CodecError::Truncated { offset: p })?;
                p += 1;
                if op != 0 {
                    p += 1;
                }
            }
        }
        crate::metric::EncodingKind::SetDiff => {
            for _ in 0..2 {
                let count = read_varint(bytes, &mut p)? as usize;
                for _ in 0..count {
                    read_varint(bytes, &mut p)?;
                }
            }
        }
    }
    if p > bytes.len() {
        return Err(CodecError::Truncated { offset: bytes.len() });
    }
    *pos = p;
    Encoding::from_bytes(bytes[start..p].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compress::compress;
    use crate::metric::{CompressiveMetric, Hamming, Jaccard, Levenshtein};
    use crate::tree::{build_tree, PartitionCriteria};
    use rand::{Rng, SeedableRng};

    fn write_tmp(
        points: &[Payload],
        metric: &dyn CompressiveMetric,
        seed: u64,
    ) -> (tempfile::TempDir, std::path::PathBuf, WriteReport) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("index.pcks");
        let ids: Vec<u64> = (0..points.len() as u64).collect();
        let report = if points.is_empty() {
            write_empty_index(metric, &path).unwrap()
        } else {
            let tree =
                build_tree(points, metric.as_metric(), &PartitionCriteria::default(), seed)
                    .unwrap();
            let compressed = compress(&tree, points, metric);
            write_index(&compressed, points, &ids, metric, false, None, &path).unwrap()
        };
        (dir, path, report)
    }

    fn random_seqs(seed: u64, n: usize, len: usize) -> Vec<Payload> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Payload::Seq((0..len).map(|_| b"ACGT"[rng.gen_range(0..4)]).collect()))
            .collect()
    }

    fn random_sets(seed: u64, n: usize) -> Vec<Payload> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let k = rng.gen_range(0..30);
                Payload::set((0..k).map(|_| rng.gen_range(0..500u32)).collect())
            })
            .collect()
    }

    #[test]
    fn roundtrip_hamming() {
        let points = random_seqs(1, 200, 40);
        let (_dir, path, report) = write_tmp(&points, &Hamming, 1);
        assert_eq!(report.total_bytes, std::fs::metadata(&path).unwrap().len());

        let index = IndexFile::open(&path).unwrap();
        assert_eq!(index.point_count, 200);
        let mut session = index.session().unwrap();
        let mut all = session.decompress_cluster(0).unwrap();
        all.sort_by_key(|(o, _)| *o);
        assert_eq!(all.len(), 200);
        for (ordinal, payload) in all {
            assert_eq!(payload, points[ordinal], "ordinal {ordinal}");
        }
        assert_eq!(session.decompressed_fraction(), 1.0);
    }

    #[test]
    fn roundtrip_levenshtein_and_sets() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let points: Vec<Payload> = (0..150)
            .map(|_| {
                let len = rng.gen_range(0..50);
                Payload::Seq((0..len).map(|_| b"ACGT"[rng.gen_range(0..4)]).collect())
            })
            .collect();
        let (_dir, path, _) = write_tmp(&points, &Levenshtein, 2);
        let index = IndexFile::open(&path).unwrap();
        let mut session = index.session().unwrap();
        let mut all = session.decompress_cluster(0).unwrap();
        all.sort_by_key(|(o, _)| *o);
        for (ordinal, payload) in all {
            assert_eq!(payload, points[ordinal]);
        }

        let points = random_sets(3, 180);
        let (_dir, path, _) = write_tmp(&points, &Jaccard::new(30), 3);
        let index = IndexFile::open(&path).unwrap();
        let mut session = index.session().unwrap();
        let mut all = session.decompress_cluster(0).unwrap();
        all.sort_by_key(|(o, _)| *o);
        for (ordinal, payload) in all {
            assert_eq!(payload, points[ordinal]);
        }
    }

    #[test]
    fn every_leaf_roundtrips_exactly() {
        let points = random_seqs(17, 1000, 24);
        let (_dir, path, _) = write_tmp(&points, &Hamming, 17);
        let index = IndexFile::open(&path).unwrap();
        let mut session = index.session().unwrap();
        for idx in 0..index.nodes.len() {
            if index.nodes[idx].mode == StoredMode::UnitaryLeaf {
                for (ordinal, payload) in session.decompress_leaf(idx).unwrap() {
                    assert_eq!(payload, points[ordinal]);
                }
            }
        }
    }

    #[test]
    fn singleton_and_point_lookup() {
        let points = random_seqs(5, 64, 16);
        let (_dir, path, _) = write_tmp(&points, &Hamming, 5);
        let index = IndexFile::open(&path).unwrap();
        let mut session = index.session().unwrap();
        for ordinal in [0usize, 13, 63] {
            assert_eq!(session.point(ordinal).unwrap(), points[ordinal]);
        }
        // Lookup touches a strict subset of the dataset.
        assert!(session.decompressed_fraction() < 1.0);
    }

    #[test]
    fn empty_dataset_writes_header_only() {
        let (_dir, path, report) = write_tmp(&[], &Hamming, 0);
        assert_eq!(report.data_bytes, 0);
        assert_eq!(report.total_bytes, std::fs::metadata(&path).unwrap().len());
        let index = IndexFile::open(&path).unwrap();
        assert!(index.is_empty());
        assert_eq!(index.nodes.len(), 0);
    }

    #[test]
    fn deterministic_bytes_for_same_seed() {
        let points = random_sets(11, 300);
        let (_d1, p1, _) = write_tmp(&points, &Jaccard::new(30), 42);
        let (_d2, p2, _) = write_tmp(&points, &Jaccard::new(30), 42);
        assert_eq!(std::fs::read(p1).unwrap(), std::fs::read(p2).unwrap());
    }

    #[test]
    fn corrupt_blob_reports_node() {
        let points = random_seqs(23, 120, 20);
        let (_dir, path, report) = write_tmp(&points, &Hamming, 23);
        // Flip a byte somewhere in the blob section.
        let mut bytes = std::fs::read(&path).unwrap();
        let blob_start = (report.tree_bytes as usize).min(bytes.len() - 1);
        let at = blob_start + (report.data_bytes as usize) / 2;
        bytes[at] ^= 0xff;
        std::fs::write(&path, bytes).unwrap();

        let index = IndexFile::open(&path).unwrap();
        let mut session = index.session().unwrap();
        // Either an integrity/codec error surfaces, or the payload decodes
        // to the wrong bytes; both must be detectable.
        let mut saw_failure = false;
        match session.decompress_cluster(0) {
            Err(StoreError::Codec { .. }) | Err(StoreError::Integrity { .. }) => {
                saw_failure = true;
            }
            Err(other) => panic!("unexpected error {other:?}"),
            Ok(all) => {
                for (ordinal, payload) in all {
                    if payload != points[ordinal] {
                        saw_failure = true;
                    }
                }
            }
        }
        assert!(saw_failure, "corruption went unnoticed");
    }

    #[test]
    fn leaf_decompression_is_local() {
        let points = random_seqs(31, 800, 24);
        let (_dir, path, _) = write_tmp(&points, &Hamming, 31);
        let index = IndexFile::open(&path).unwrap();
        // Deepest unitary leaf.
        let leaf = (0..index.nodes.len())
            .filter(|&i| index.nodes[i].mode == StoredMode::UnitaryLeaf)
            .max_by_key(|&i| index.nodes[i].depth)
            .unwrap();
        let mut session = index.session().unwrap();
        session.decompress_leaf(leaf).unwrap();

        // Allowed ranges: the leaf's own blobs plus ancestor center chain.
        let mut allowed: Vec<(u64, u64)> = Vec::new();
        let mut at = leaf;
        loop {
            let node = &index.nodes[at];
            if node.center_enc.0 != NONE_U64 {
                allowed.push(node.center_enc);
            }
            if node.members_blob.0 != NONE_U64 {
                allowed.push(node.members_blob);
            }
            if at == 0 {
                break;
            }
            at = index.parents[at];
        }
        for &(off, len) in &session.blob_reads {
            assert!(
                allowed
                    .iter()
                    .any(|&(a_off, a_len)| off >= a_off && off + len <= a_off + a_len),
                "read ({off}, {len}) outside the leaf's subtree and ancestor chain"
            );
        }
    }
}

/// Writes a header-only index for an empty dataset.
pub fn write_empty_index(
    metric: &dyn CompressiveMetric,
    path: &Path,
) -> Result<WriteReport, StoreError> {
    let mut header = Vec::new();
    header.extend_from_slice(MAGIC);
    header.extend_from_slice(&VERSION.to_le_bytes());
    header.push(match metric.payload_kind() {
        PayloadKind::Seq => 0,
        PayloadKind::Set => 1,
    });
    header.push(0);
    let name = metric.name().as_bytes();
    header.push(name.len() as u8);
    header.extend_from_slice(name);
    header.extend_from_slice(&0u64.to_le_bytes());
    header.extend_from_slice(&0u64.to_le_bytes());
    header.extend_from_slice(&0u64.to_le_bytes());
    let mut file = File::create(path)?;
    file.write_all(&header)?;
    file.flush()?;
    Ok(WriteReport {
        total_bytes: header.len() as u64,
        data_bytes: 0,
        tree_bytes: header.len() as u64,
        node_count: 0,
    })
}
