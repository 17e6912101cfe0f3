//! Dataset readers and writers: FASTA (plain and MSA) for sequences, a
//! line-oriented text format for set transactions, plus the holdout split
//! used to carve query sets out of a dataset before indexing.

use crate::error::DataError;
use crate::point::{Payload, Point};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

/// Characters treated as gaps/padding in aligned sequences.
pub const GAP_CHARS: [u8; 2] = [b'-', b'.'];

/// Dataset file formats understood by the engine.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataFormat {
    Fasta,
    /// FASTA where all records must have equal (aligned) length.
    FastaMsa,
    /// One whitespace-separated set of non-negative integers per line.
    Sets,
}

impl DataFormat {
    pub fn parse(s: &str) -> Option<DataFormat> {
        match s {
            "fasta" => Some(DataFormat::Fasta),
            "fasta-msa" => Some(DataFormat::FastaMsa),
            "sets" => Some(DataFormat::Sets),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DataFormat::Fasta => "fasta",
            DataFormat::FastaMsa => "fasta-msa",
            DataFormat::Sets => "sets",
        }
    }
}

/// A parsed dataset: points plus the source headers (FASTA) or line
/// numbers (sets), kept aside for reporting.
pub struct Dataset {
    pub points: Vec<Point>,
    pub labels: Vec<String>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn payloads(&self) -> Vec<Payload> {
        self.points.iter().map(|p| p.payload.clone()).collect()
    }

    pub fn ids(&self) -> Vec<u64> {
        self.points.iter().map(|p| p.id).collect()
    }
}

pub fn read_dataset(path: &Path, format: DataFormat) -> Result<Dataset, DataError> {
    match format {
        DataFormat::Fasta => read_fasta(path, false),
        DataFormat::FastaMsa => read_fasta(path, true),
        DataFormat::Sets => read_set_transactions(path),
    }
}

/// Reads a FASTA file; one point per record, ids assigned in file order.
/// With `msa` set, validates that all records have equal length.
pub fn read_fasta(path: &Path, msa: bool) -> Result<Dataset, DataError> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let path_str = path.display().to_string();

    let mut points = Vec::new();
    let mut labels = Vec::new();
    let mut current: Option<(String, Vec<u8>, usize)> = None;
    let mut line_no = 0usize;

    let flush = |current: &mut Option<(String, Vec<u8>, usize)>,
                     points: &mut Vec<Point>,
                     labels: &mut Vec<String>| {
        if let Some((header, seq, _)) = current.take() {
            points.push(Point::new(points.len() as u64, Payload::Seq(seq)));
            labels.push(header);
        }
    };

    for line in reader.lines() {
        line_no += 1;
        let line = line?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        if let Some(header) = line.strip_prefix('>') {
            flush(&mut current, &mut points, &mut labels);
            current = Some((header.to_string(), Vec::new(), line_no));
        } else {
            match current.as_mut() {
                Some((_, seq, _)) => seq.extend_from_slice(line.trim().as_bytes()),
                None => {
                    return Err(DataError::Malformed {
                        path: path_str,
                        line: line_no,
                        detail: "sequence data before the first '>' header".into(),
                    })
                }
            }
        }
    }
    flush(&mut current, &mut points, &mut labels);

    if msa {
        let mut width: Option<usize> = None;
        for (i, p) in points.iter().enumerate() {
            let len = p.payload.as_seq().expect("fasta yields sequences").len();
            match width {
                None => width = Some(len),
                Some(w) if w != len => {
                    return Err(DataError::Malformed {
                        path: path_str,
                        line: 0,
                        detail: format!(
                            "ragged MSA: record {} has length {len}, expected {w}",
                            labels.get(i).map_or("?", |s| s.as_str())
                        ),
                    })
                }
                _ => {}
            }
        }
    }

    Ok(Dataset { points, labels })
}

/// Removes gap and padding characters ('-' and '.') from a sequence.
pub fn strip_gaps(sequence: &[u8]) -> Vec<u8> {
    sequence
        .iter()
        .copied()
        .filter(|c| !GAP_CHARS.contains(c))
        .collect()
}

/// Reads set transactions: one whitespace-separated list of non-negative
/// integers per line; members are sorted and deduplicated. A blank line is
/// an empty set.
pub fn read_set_transactions(path: &Path) -> Result<Dataset, DataError> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let path_str = path.display().to_string();

    let mut points = Vec::new();
    let mut labels = Vec::new();
    for (line_no, line) in reader.lines().enumerate() {
        let line = line?;
        let mut members = Vec::new();
        for token in line.split_whitespace() {
            let value: u32 = token.parse().map_err(|_| DataError::Malformed {
                path: path_str.clone(),
                line: line_no + 1,
                detail: format!("non-integer token {token:?}"),
            })?;
            members.push(value);
        }
        points.push(Point::new(points.len() as u64, Payload::set(members)));
        labels.push(format!("line {}", line_no + 1));
    }
    Ok(Dataset { points, labels })
}

/// Optional sequence-length filter (both bounds inclusive), the
/// convention used for protein datasets: drop fragments shorter than 30
/// and outliers longer than 1000.
pub fn filter_by_length(dataset: Dataset, min_len: usize, max_len: usize) -> Dataset {
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for (p, l) in dataset.points.into_iter().zip(dataset.labels) {
        let len = p.payload.as_seq().map_or(0, <[u8]>::len);
        if len >= min_len && len <= max_len {
            points.push(Point::new(points.len() as u64, p.payload));
            labels.push(l);
        }
    }
    Dataset { points, labels }
}

/// Splits out `count` points as queries, deterministically for a given
/// seed; the remaining points keep their relative order and get fresh
/// sequential ids.
pub fn split_holdout(
    dataset: Dataset,
    count: usize,
    seed: u64,
) -> Result<(Dataset, Dataset), DataError> {
    let n = dataset.len();
    if count >= n && !(count == 0 && n == 0) {
        return Err(DataError::HoldoutTooLarge { count, size: n });
    }
    let mut picks: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    picks.shuffle(&mut rng);
    let mut is_query = vec![false; n];
    for &i in picks.iter().take(count) {
        is_query[i] = true;
    }

    let mut train = Dataset {
        points: Vec::with_capacity(n - count),
        labels: Vec::with_capacity(n - count),
    };
    let mut queries = Dataset {
        points: Vec::with_capacity(count),
        labels: Vec::with_capacity(count),
    };
    for ((i, p), label) in dataset.points.into_iter().enumerate().zip(dataset.labels) {
        let target = if is_query[i] { &mut queries } else { &mut train };
        target
            .points
            .push(Point::new(target.points.len() as u64, p.payload));
        target.labels.push(label);
    }
    Ok((train, queries))
}

/// Writes sequences as FASTA using the dataset labels as headers.
pub fn write_fasta(dataset: &Dataset, path: &Path) -> Result<(), DataError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for (p, label) in dataset.points.iter().zip(&dataset.labels) {
        writeln!(out, ">{label}")?;
        out.write_all(p.payload.as_seq().expect("sequence dataset"))?;
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

/// Writes set transactions in the line-oriented text format.
pub fn write_set_transactions(dataset: &Dataset, path: &Path) -> Result<(), DataError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for p in &dataset.points {
        let members = p.payload.as_set().expect("set dataset");
        let line: Vec<String> = members.iter().map(u32::to_string).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    out.flush()?;
    Ok(())
}

/// Raw bytes of a dataset for compression-ratio accounting: one byte per
/// sequence character, four per set member, plus per-record framing (a
/// newline for sequences, a four-byte length for sets). This is also the
/// exact size of the file [`write_raw`] produces for gzip comparisons.
pub fn raw_size(points: &[Point]) -> u64 {
    points
        .iter()
        .map(|p| {
            p.payload.raw_size() as u64
                + match p.payload {
                    Payload::Seq(_) => 1,
                    Payload::Set(_) => 4,
                }
        })
        .sum()
}

/// Writes the raw form measured by [`raw_size`]: sequence bytes separated
/// by newlines, or per set a u32 member count followed by u32 members,
/// all little-endian.
pub fn write_raw(points: &[Point], path: &Path) -> Result<u64, DataError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let mut written = 0u64;
    for p in points {
        match &p.payload {
            Payload::Seq(s) => {
                out.write_all(s)?;
                out.write_all(b"\n")?;
                written += s.len() as u64 + 1;
            }
            Payload::Set(members) => {
                out.write_all(&(members.len() as u32).to_le_bytes())?;
                for &m in members {
                    out.write_all(&m.to_le_bytes())?;
                }
                written += 4 + 4 * members.len() as u64;
            }
        }
    }
    out.flush()?;
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tmpfile(contents: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data");
        std::fs::write(&path, contents).unwrap();
        (dir, path)
    }

    #[test]
    fn fasta_two_records() {
        let (_d, path) = tmpfile(">first\nACGT\nACGT\n>second\nTTTT\n");
        let ds = read_fasta(&path, false).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.points[0].payload.as_seq().unwrap(), b"ACGTACGT");
        assert_eq!(ds.points[1].payload.as_seq().unwrap(), b"TTTT");
        assert_eq!(ds.labels, vec!["first", "second"]);
        assert_eq!(ds.points[0].id, 0);
        assert_eq!(ds.points[1].id, 1);
    }

    #[test]
    fn fasta_empty_file() {
        let (_d, path) = tmpfile("");
        let ds = read_fasta(&path, true).unwrap();
        assert!(ds.is_empty());
    }

    #[test]
    fn fasta_ragged_msa_is_an_error() {
        let (_d, path) = tmpfile(">a\nACGT\n>b\nAC\n");
        assert!(read_fasta(&path, true).is_err());
        assert!(read_fasta(&path, false).is_ok());
    }

    #[test]
    fn fasta_leading_garbage_is_an_error() {
        let (_d, path) = tmpfile("ACGT\n>a\nACGT\n");
        assert!(matches!(
            read_fasta(&path, false),
            Err(DataError::Malformed { line: 1, .. })
        ));
    }

    #[test]
    fn strip_gaps_examples() {
        assert_eq!(strip_gaps(b"A-C.G"), b"ACG");
        assert_eq!(strip_gaps(b"ACG"), b"ACG");
        assert_eq!(strip_gaps(b"-.-."), b"");
    }

    #[test]
    fn sets_parse_sort_dedup() {
        let (_d, path) = tmpfile("3 1 2\n\n5 5 5\n");
        let ds = read_set_transactions(&path).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.points[0].payload.as_set().unwrap(), &[1, 2, 3]);
        assert_eq!(ds.points[1].payload.as_set().unwrap(), &[] as &[u32]);
        assert_eq!(ds.points[2].payload.as_set().unwrap(), &[5]);
    }

    #[test]
    fn sets_reject_non_integers() {
        let (_d, path) = tmpfile("1 2\n3 x\n");
        assert!(matches!(
            read_set_transactions(&path),
            Err(DataError::Malformed { line: 2, .. })
        ));
    }

    #[test]
    fn holdout_split() {
        let (_d, path) = tmpfile("1\n2\n3\n4\n5\n6\n7\n8\n");
        let ds = read_set_transactions(&path).unwrap();
        let (train, queries) = split_holdout(ds, 3, 99).unwrap();
        assert_eq!(train.len(), 5);
        assert_eq!(queries.len(), 3);

        // Deterministic for the same seed.
        let ds = read_set_transactions(&path).unwrap();
        let (train2, queries2) = split_holdout(ds, 3, 99).unwrap();
        assert_eq!(
            train.points.iter().map(|p| &p.payload).collect::<Vec<_>>(),
            train2.points.iter().map(|p| &p.payload).collect::<Vec<_>>()
        );
        assert_eq!(
            queries.points.iter().map(|p| &p.payload).collect::<Vec<_>>(),
            queries2.points.iter().map(|p| &p.payload).collect::<Vec<_>>()
        );

        // count = 0 keeps everything.
        let ds = read_set_transactions(&path).unwrap();
        let (train, queries) = split_holdout(ds, 0, 1).unwrap();
        assert_eq!(train.len(), 8);
        assert_eq!(queries.len(), 0);

        // count >= size is rejected.
        let ds = read_set_transactions(&path).unwrap();
        assert!(split_holdout(ds, 8, 1).is_err());
    }

    #[test]
    fn length_filter_bounds_inclusive() {
        let points = vec![
            Point::new(0, Payload::Seq(vec![b'A'; 29])),
            Point::new(1, Payload::Seq(vec![b'A'; 30])),
            Point::new(2, Payload::Seq(vec![b'A'; 1000])),
            Point::new(3, Payload::Seq(vec![b'A'; 1001])),
        ];
        let labels = (0..4).map(|i| i.to_string()).collect();
        let ds = filter_by_length(Dataset { points, labels }, 30, 1000);
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.labels, vec!["1", "2"]);
    }

    proptest! {
        #[test]
        fn fasta_roundtrip(
            seqs in proptest::collection::vec(
                proptest::collection::vec(proptest::sample::select(b"ACGT-.".to_vec()), 1..40),
                0..20
            )
        ) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("x.fasta");
            let points: Vec<Point> = seqs
                .iter()
                .enumerate()
                .map(|(i, s)| Point::new(i as u64, Payload::Seq(s.clone())))
                .collect();
            let labels = (0..seqs.len()).map(|i| format!("seq{i}")).collect();
            write_fasta(&Dataset { points: points.clone(), labels }, &path).unwrap();
            let back = read_fasta(&path, false).unwrap();
            prop_assert_eq!(back.len(), points.len());
            for (a, b) in back.points.iter().zip(&points) {
                prop_assert_eq!(&a.payload, &b.payload);
            }
        }

        #[test]
        fn sets_roundtrip(
            sets in proptest::collection::vec(
                proptest::collection::btree_set(0u32..10_000, 0..30),
                0..30
            )
        ) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("x.sets");
            let points: Vec<Point> = sets
                .iter()
                .enumerate()
                .map(|(i, s)| Point::new(i as u64, Payload::Set(s.iter().copied().collect())))
                .collect();
            let labels = (0..sets.len()).map(|i| i.to_string()).collect();
            write_set_transactions(&Dataset { points: points.clone(), labels }, &path).unwrap();
            let back = read_set_transactions(&path).unwrap();
            prop_assert_eq!(back.len(), points.len());
            for (a, b) in back.points.iter().zip(&points) {
                prop_assert_eq!(&a.payload, &b.payload);
            }
        }
    }
}
