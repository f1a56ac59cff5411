//! Link-stream file parsing and random anomaly injection.
//!
//! Stream files hold one `t u v` link per line (whitespace or a configured
//! single-character delimiter, `#` comments ignored). Labeled streams carry a
//! fourth 0/1 column. Injection adds links with a timestamp drawn uniformly
//! from the set of distinct timestamps and a node pair drawn uniformly from
//! distinct node pairs, rejecting any (t, {u,v}) already present.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::history::TimestampedLink;

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: malformed link record: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: timestamp {t} decreases below previous {prev}")]
    DecreasingTimestamp { line: usize, t: f64, prev: f64 },
    #[error("stream is empty")]
    Empty,
    #[error("injection needs at least 2 distinct nodes, found {0}")]
    TooFewNodes(usize),
    #[error("injection rejection cap of {cap} attempts exceeded ({placed} of {wanted} placed)")]
    RejectionCap { cap: u64, placed: usize, wanted: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    Normal,
    Anomalous,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        match self {
            Label::Normal => 0,
            Label::Anomalous => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledLink {
    pub link: TimestampedLink,
    pub label: Label,
}

/// Single-pass stream statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StreamSummary {
    /// total occurrence count
    pub ell: usize,
    pub n_nodes: usize,
    /// distinct unordered node pairs
    pub m_distinct: usize,
    pub t_min: f64,
    pub t_max: f64,
    pub n_timestamps: usize,
    /// self-loop lines dropped during parsing
    pub self_loops_dropped: usize,
}

pub fn summarize(links: &[TimestampedLink], self_loops_dropped: usize) -> StreamSummary {
    let mut nodes = HashSet::new();
    let mut pairs = HashSet::new();
    let mut times = HashSet::new();
    for l in links {
        nodes.insert(l.u.clone());
        nodes.insert(l.v.clone());
        let pair = if l.u <= l.v { (l.u.clone(), l.v.clone()) } else { (l.v.clone(), l.u.clone()) };
        pairs.insert(pair);
        times.insert(l.t.to_bits());
    }
    StreamSummary {
        ell: links.len(),
        n_nodes: nodes.len(),
        m_distinct: pairs.len(),
        t_min: links.first().map_or(0.0, |l| l.t),
        t_max: links.last().map_or(0.0, |l| l.t),
        n_timestamps: times.len(),
        self_loops_dropped,
    }
}

fn split_line(line: &str, delimiter: Option<char>) -> Vec<&str> {
    match delimiter {
        Some(c) => line.split(c).map(str::trim).filter(|s| !s.is_empty()).collect(),
        None => line.split_whitespace().collect(),
    }
}

fn parse_fields(
    fields: &[&str],
    line_no: usize,
    want_label: bool,
) -> Result<(TimestampedLink, Option<Label>), StreamError> {
    let expected = if want_label { 4 } else { 3 };
    if fields.len() < 3 || fields.len() > expected {
        return Err(StreamError::Malformed {
            line: line_no,
            reason: format!("expected {expected} fields, found {}", fields.len()),
        });
    }
    let t: f64 = fields[0].parse().map_err(|_| StreamError::Malformed {
        line: line_no,
        reason: format!("bad timestamp {:?}", fields[0]),
    })?;
    let label = if want_label && fields.len() == 4 {
        match fields[3] {
            "0" => Some(Label::Normal),
            "1" => Some(Label::Anomalous),
            other => {
                return Err(StreamError::Malformed {
                    line: line_no,
                    reason: format!("bad label {other:?}"),
                })
            }
        }
    } else {
        None
    };
    Ok((TimestampedLink::new(t, fields[1], fields[2]), label))
}

type ParsedLines = (Vec<(TimestampedLink, Option<Label>)>, usize);

fn parse_lines<R: BufRead>(
    reader: R,
    delimiter: Option<char>,
    want_label: bool,
) -> Result<ParsedLines, StreamError> {
    let mut out = Vec::new();
    let mut self_loops = 0usize;
    let mut prev_t: Option<f64> = None;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields = split_line(trimmed, delimiter);
        let (link, label) = parse_fields(&fields, line_no, want_label)?;
        if let Some(prev) = prev_t {
            if link.t < prev {
                return Err(StreamError::DecreasingTimestamp { line: line_no, t: link.t, prev });
            }
        }
        prev_t = Some(link.t);
        if link.u == link.v {
            self_loops += 1;
            continue;
        }
        out.push((link, label));
    }
    if out.is_empty() {
        return Err(StreamError::Empty);
    }
    Ok((out, self_loops))
}

/// Parse an unlabeled stream file.
pub fn parse_stream(
    path: &Path,
    delimiter: Option<char>,
) -> Result<(Vec<TimestampedLink>, StreamSummary), StreamError> {
    let file = std::fs::File::open(path)?;
    parse_stream_reader(std::io::BufReader::new(file), delimiter)
}

pub fn parse_stream_reader<R: BufRead>(
    reader: R,
    delimiter: Option<char>,
) -> Result<(Vec<TimestampedLink>, StreamSummary), StreamError> {
    let (records, self_loops) = parse_lines(reader, delimiter, false)?;
    let links: Vec<TimestampedLink> = records.into_iter().map(|(l, _)| l).collect();
    let summary = summarize(&links, self_loops);
    Ok((links, summary))
}

/// Parse a labeled stream file; lines without a fourth column default to
/// Normal.
pub fn parse_labeled_stream(
    path: &Path,
    delimiter: Option<char>,
) -> Result<Vec<LabeledLink>, StreamError> {
    let file = std::fs::File::open(path)?;
    let (records, _) = parse_lines(std::io::BufReader::new(file), delimiter, true)?;
    Ok(records
        .into_iter()
        .map(|(link, label)| LabeledLink { link, label: label.unwrap_or(Label::Normal) })
        .collect())
}

pub fn write_labeled_stream(path: &Path, links: &[LabeledLink]) -> Result<(), StreamError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for l in links {
        writeln!(w, "{} {} {} {}", fmt_t(l.link.t), l.link.u, l.link.v, l.label.as_u8())?;
    }
    Ok(())
}

// integer-valued timestamps print without a fractional part
fn fmt_t(t: f64) -> String {
    if t.fract() == 0.0 && t.abs() < 1e15 {
        format!("{}", t as i64)
    } else {
        format!("{t}")
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct InjectReport {
    pub seed: u64,
    pub rate: f64,
    pub original_links: usize,
    pub injected_links: usize,
    pub attempts: u64,
    pub rejections: u64,
}

const REJECTION_CAP_FACTOR: u64 = 1_000;

/// Inject `round(rate * len)` anomalous links into a time-ordered stream.
///
/// Timestamps are drawn uniformly from the set of distinct timestamps and
/// node pairs uniformly from unordered distinct pairs; candidates colliding
/// with an original or an already injected (t, {u,v}) are rejected. Each
/// injected link is placed at a uniformly random position within its
/// equal-timestamp block.
pub fn inject(
    stream: &[TimestampedLink],
    rate: f64,
    seed: u64,
) -> Result<(Vec<LabeledLink>, InjectReport), StreamError> {
    if stream.is_empty() {
        return Err(StreamError::Empty);
    }
    let wanted = (rate * stream.len() as f64 + 0.5).floor() as usize;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // distinct timestamps, in stream order (already sorted)
    let mut timestamps: Vec<f64> = Vec::new();
    for l in stream {
        if timestamps.last().is_none_or(|&p| p != l.t) {
            timestamps.push(l.t);
        }
    }
    let mut nodes: Vec<&str> = {
        let set: HashSet<&str> =
            stream.iter().flat_map(|l| [l.u.as_str(), l.v.as_str()]).collect();
        let mut v: Vec<&str> = set.into_iter().collect();
        v.sort_unstable();
        v
    };
    nodes.dedup();
    if wanted > 0 && nodes.len() < 2 {
        return Err(StreamError::TooFewNodes(nodes.len()));
    }

    let occurrence = |l: &TimestampedLink| -> (u64, String, String) {
        let (a, b) = if l.u <= l.v { (&l.u, &l.v) } else { (&l.v, &l.u) };
        (l.t.to_bits(), a.clone(), b.clone())
    };
    let mut taken: HashSet<(u64, String, String)> = stream.iter().map(occurrence).collect();

    let cap = REJECTION_CAP_FACTOR * (wanted as u64 + 1);
    let mut attempts = 0u64;
    let mut rejections = 0u64;
    let mut injected: Vec<TimestampedLink> = Vec::with_capacity(wanted);
    while injected.len() < wanted {
        if attempts >= cap {
            return Err(StreamError::RejectionCap { cap, placed: injected.len(), wanted });
        }
        attempts += 1;
        let t = timestamps[rng.gen_range(0..timestamps.len())];
        let i = rng.gen_range(0..nodes.len());
        let j = {
            // second draw without replacement
            let mut j = rng.gen_range(0..nodes.len() - 1);
            if j >= i {
                j += 1;
            }
            j
        };
        let link = TimestampedLink::new(t, nodes[i], nodes[j]);
        let key = occurrence(&link);
        if taken.contains(&key) {
            rejections += 1;
            continue;
        }
        taken.insert(key);
        injected.push(link);
    }

    // group originals by equal-timestamp block, then drop each injected link
    // at a uniformly random position inside its block
    let mut blocks: Vec<(u64, Vec<LabeledLink>)> = Vec::new();
    let mut block_index: HashMap<u64, usize> = HashMap::new();
    for l in stream {
        let bits = l.t.to_bits();
        let idx = *block_index.entry(bits).or_insert_with(|| {
            blocks.push((bits, Vec::new()));
            blocks.len() - 1
        });
        blocks[idx].1.push(LabeledLink { link: l.clone(), label: Label::Normal });
    }
    for link in injected {
        let idx = block_index[&link.t.to_bits()];
        let block = &mut blocks[idx].1;
        let pos = rng.gen_range(0..=block.len());
        block.insert(pos, LabeledLink { link, label: Label::Anomalous });
    }

    let out: Vec<LabeledLink> = blocks.into_iter().flat_map(|(_, b)| b).collect();
    let report = InjectReport {
        seed,
        rate,
        original_links: stream.len(),
        injected_links: wanted,
        attempts,
        rejections,
    };
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn parse_str(s: &str) -> (Vec<TimestampedLink>, StreamSummary) {
        parse_stream_reader(Cursor::new(s), None).unwrap()
    }

    #[test]
    fn basic_parse_and_summary() {
        let (links, summary) = parse_str("0 a b\n1 c d\n1 a c\n");
        assert_eq!(links.len(), 3);
        assert_eq!(summary.ell, 3);
        assert_eq!(summary.n_nodes, 4);
        assert_eq!(summary.n_timestamps, 2);
        assert_eq!(summary.m_distinct, 3);
    }

    #[test]
    fn self_loops_dropped_with_count() {
        let (links, summary) = parse_str("1 a b\n5 x x\n6 a c\n");
        assert_eq!(links.len(), 2);
        assert_eq!(summary.self_loops_dropped, 1);
    }

    #[test]
    fn comments_and_blank_lines_skipped() {
        let (links, _) = parse_str("# header\n\n0 a b\n# mid\n1 b c\n");
        assert_eq!(links.len(), 2);
    }

    #[test]
    fn decreasing_timestamps_rejected() {
        let err = parse_stream_reader(Cursor::new("3 a b\n2 c d\n"), None);
        assert!(matches!(err, Err(StreamError::DecreasingTimestamp { line: 2, .. })));
    }

    #[test]
    fn malformed_line_reports_number() {
        let err = parse_stream_reader(Cursor::new("0 a b\noops\n"), None);
        assert!(matches!(err, Err(StreamError::Malformed { line: 2, .. })));
    }

    #[test]
    fn empty_stream_is_error() {
        assert!(matches!(
            parse_stream_reader(Cursor::new("# nothing\n"), None),
            Err(StreamError::Empty)
        ));
    }

    #[test]
    fn custom_delimiter() {
        let (links, _) = parse_stream_reader(Cursor::new("0,a,b\n1,b,c\n"), Some(',')).unwrap();
        assert_eq!(links[1].v, "c");
    }

    fn small_stream() -> Vec<TimestampedLink> {
        let mut out = Vec::new();
        for i in 0..100 {
            let t = (i / 4) as f64;
            out.push(TimestampedLink::new(t, format!("n{}", i % 7), format!("n{}", (i + 1) % 7)));
        }
        out
    }

    #[test]
    fn rate_zero_is_identity() {
        let stream = small_stream();
        let (labeled, report) = inject(&stream, 0.0, 1).unwrap();
        assert_eq!(report.injected_links, 0);
        assert_eq!(labeled.len(), stream.len());
        for (orig, got) in stream.iter().zip(&labeled) {
            assert_eq!(&got.link, orig);
            assert_eq!(got.label, Label::Normal);
        }
    }

    #[test]
    fn injection_counts_and_no_collisions() {
        let stream = small_stream();
        let (labeled, report) = inject(&stream, 0.05, 7).unwrap();
        assert_eq!(report.injected_links, 5);
        assert_eq!(labeled.len(), 105);
        let anomalous: Vec<_> =
            labeled.iter().filter(|l| l.label == Label::Anomalous).collect();
        assert_eq!(anomalous.len(), 5);
        let originals: HashSet<(u64, String, String)> = stream
            .iter()
            .map(|l| {
                let (a, b) = if l.u <= l.v { (&l.u, &l.v) } else { (&l.v, &l.u) };
                (l.t.to_bits(), a.clone(), b.clone())
            })
            .collect();
        let mut seen = HashSet::new();
        for a in &anomalous {
            let l = &a.link;
            let (x, y) = if l.u <= l.v { (&l.u, &l.v) } else { (&l.v, &l.u) };
            let key = (l.t.to_bits(), x.clone(), y.clone());
            assert!(!originals.contains(&key), "collides with original");
            assert!(seen.insert(key), "duplicate injected triple");
            assert_ne!(l.u, l.v);
        }
    }

    #[test]
    fn output_sorted_and_originals_in_order() {
        let stream = small_stream();
        let (labeled, _) = inject(&stream, 0.1, 3).unwrap();
        for w in labeled.windows(2) {
            assert!(w[0].link.t <= w[1].link.t);
        }
        let originals: Vec<&TimestampedLink> = labeled
            .iter()
            .filter(|l| l.label == Label::Normal)
            .map(|l| &l.link)
            .collect();
        assert_eq!(originals.len(), stream.len());
        for (orig, got) in stream.iter().zip(originals) {
            assert_eq!(got, orig);
        }
    }

    #[test]
    fn injection_is_deterministic() {
        let stream = small_stream();
        let (a, _) = inject(&stream, 0.1, 99).unwrap();
        let (b, _) = inject(&stream, 0.1, 99).unwrap();
        assert_eq!(a, b);
        let (c, _) = inject(&stream, 0.1, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rounding_is_half_up() {
        let stream = small_stream();
        // 100 * 0.025 = 2.5 rounds to 3
        let (_, report) = inject(&stream, 0.025, 1).unwrap();
        assert_eq!(report.injected_links, 3);
    }

    #[test]
    fn saturated_stream_hits_rejection_cap() {
        // 2 nodes, 1 timestamp: the single candidate triple already exists
        let stream = vec![TimestampedLink::new(0.0, "a", "b")];
        let err = inject(&stream, 1.0, 1);
        assert!(matches!(err, Err(StreamError::RejectionCap { .. })));
    }

    #[test]
    fn injected_timestamps_uniform_over_distinct_values() {
        // chi-square over the distinct-timestamp draw, aggregated over seeds
        let mut stream = Vec::new();
        // timestamp 0 has 10x the occurrences of others; uniformity must be
        // over distinct values, not occurrence-weighted
        for i in 0..50 {
            stream.push(TimestampedLink::new(0.0, format!("a{i}"), format!("b{i}")));
        }
        for t in 1..5 {
            for i in 0..5 {
                stream.push(TimestampedLink::new(t as f64, format!("a{i}"), format!("b{i}")));
            }
        }
        let mut counts = [0u64; 5];
        let mut total = 0u64;
        for seed in 0..1000 {
            let (labeled, _) = inject(&stream, 0.05, seed).unwrap();
            for l in labeled.iter().filter(|l| l.label == Label::Anomalous) {
                counts[l.link.t as usize] += 1;
                total += 1;
            }
        }
        let expected = total as f64 / 5.0;
        let chi2: f64 =
            counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 4 degrees of freedom, p > 0.01 means chi2 below the 0.99 quantile
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let dist = ChiSquared::new(4.0).unwrap();
        let p = 1.0 - dist.cdf(chi2);
        assert!(p > 0.01, "chi2={chi2}, p={p}, counts={counts:?}");
    }
}
