//! Exact rho-NN and k-NN over a compressed index. Tree traversal prunes
//! clusters with ball bounds (delta-minus / delta-plus from the triangle
//! inequality); only surviving leaves are decompressed and scanned.
//!
//! Exactness: every hit distance is produced by the same canonical
//! distance function the brute-force oracle uses, so equal inputs yield
//! bit-identical f64s. Integer-valued metrics are exact in f64 outright;
//! for the set metrics (single-division rationals bounded by 1), pruning
//! comparisons carry an additive slack much larger than any accumulated
//! rounding and much smaller than the gap between distinct attainable
//! bound values, so no qualifying cluster is ever pruned.

use crate::dataio::strip_gaps;
use crate::error::SearchError;
use crate::metric::{levenshtein_distance, CompressiveMetric};
use crate::point::Payload;
use crate::store::{IndexFile, Session, StoredMode, StoredNode};
use crate::tree::Tree;
use ordered_float::OrderedFloat;
use serde::Serialize;
use std::collections::{BinaryHeap, HashMap};

/// Additive slack on pruning comparisons. Harmless over-keep; never a
/// wrong prune. See the module docs for why this value is safe for every
/// supported metric.
const PRUNE_EPS: f64 = 1e-12;

/// Growth factor for repeated rho-NN's radius schedule. The LFD-damped
/// schedule max(2, 2^(1/lfd)) capped at doubling reduces to this constant
/// whenever lfd >= 1; kept as a tunable in [`SearchOptions`].
pub const DEFAULT_GROWTH_FACTOR: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum KnnAlgorithm {
    RepeatedRnn,
    BreadthFirst,
    DepthFirst,
}

impl KnnAlgorithm {
    pub fn parse(s: &str) -> Option<KnnAlgorithm> {
        match s {
            "knn-repeated" => Some(KnnAlgorithm::RepeatedRnn),
            "knn-bfs" => Some(KnnAlgorithm::BreadthFirst),
            "knn-dfs" => Some(KnnAlgorithm::DepthFirst),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub enum QueryMode {
    Rnn { radius: f64 },
    Knn { k: usize, algorithm: KnnAlgorithm },
}

/// A query point plus its mode.
#[derive(Clone, Debug)]
pub struct Query {
    pub payload: Payload,
    pub mode: QueryMode,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    /// Original dataset id.
    pub id: u64,
    /// Dataset ordinal (position in the indexed dataset).
    pub ordinal: usize,
    pub distance: f64,
}

/// Per-query instrumentation.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct SearchStats {
    pub distance_computations: u64,
    pub clusters_visited: u64,
    pub points_decompressed: usize,
    pub decompressed_fraction: f64,
}

/// Search result: hits sorted ascending by (distance, id).
#[derive(Clone, Debug)]
pub struct HitSet {
    pub hits: Vec<Hit>,
    pub stats: SearchStats,
}

#[derive(Clone, Copy, Debug)]
pub struct SearchOptions {
    /// Repeated rho-NN radius growth per round.
    pub growth_factor: f64,
    /// Debug mode: decompress every pruned cluster and assert the bound
    /// used to prune it was sound.
    pub verify_pruning: bool,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            growth_factor: DEFAULT_GROWTH_FACTOR,
            verify_pruning: false,
        }
    }
}

/// How query-to-point distances are evaluated against this index: with
/// the index's own metric, or (for MSA indexes) gap-stripped Levenshtein
/// against gap-stripped decompressed sequences, with pruning bounds using
/// the per-node Levenshtein radius stored at build time.
pub struct QueryEval {
    metric: Box<dyn CompressiveMetric>,
    msa: bool,
    query: Payload,
}

impl QueryEval {
    pub fn for_index(index: &IndexFile, query: &Payload) -> Result<QueryEval, SearchError> {
        let metric = index.metric();
        if query.kind() != index.payload_kind {
            return Err(SearchError::MetricMismatch(format!(
                "index holds {} payloads, query is {}",
                index.payload_kind.name(),
                query.kind().name()
            )));
        }
        let query = if index.msa {
            Payload::Seq(strip_gaps(query.as_seq().expect("kind checked above")))
        } else {
            if metric.name() == "hamming" {
                if let Some(root) = index.root_payload_len() {
                    let qlen = query.as_seq().expect("kind checked above").len();
                    if qlen != root {
                        return Err(SearchError::MetricMismatch(format!(
                            "hamming index has width {root}, query has length {qlen}"
                        )));
                    }
                }
            }
            query.clone()
        };
        Ok(QueryEval {
            metric,
            msa: index.msa,
            query,
        })
    }

    /// Evaluator for brute-force scans over raw payloads (the oracle path
    /// and the CLI's raw-scan mode); `msa` must match the index the scan
    /// is compared against.
    pub fn for_raw_scan(
        metric: Box<dyn CompressiveMetric>,
        msa: bool,
        query: &Payload,
    ) -> QueryEval {
        let query = if msa {
            Payload::Seq(strip_gaps(query.as_seq().expect("msa implies sequences")))
        } else {
            query.clone()
        };
        QueryEval { metric, msa, query }
    }

    /// Distance from the query to a dataset payload.
    pub fn distance(&self, payload: &Payload) -> f64 {
        if self.msa {
            let stripped = strip_gaps(payload.as_seq().expect("msa implies sequences"));
            levenshtein_distance(self.query.as_seq().expect("stripped query"), &stripped) as f64
        } else {
            self.metric.distance(&self.query, payload)
        }
    }

    /// The node radius that is sound for this evaluation mode.
    fn node_radius(&self, node: &StoredNode) -> f64 {
        if self.msa {
            node.lev_radius
        } else {
            node.radius
        }
    }

    fn supports_radius_growth(&self) -> bool {
        // Gap-stripped queries are compared with Levenshtein regardless of
        // the build metric, so radius growth is meaningful.
        self.msa || self.metric.supports_radius_growth()
    }

    fn metric_name(&self) -> &'static str {
        if self.msa {
            "levenshtein"
        } else {
            self.metric.name()
        }
    }
}

struct SearchState<'a> {
    session: Session<'a>,
    eval: QueryEval,
    /// Distance to each materialized center, memoized per query.
    center_dists: HashMap<usize, f64>,
    distance_computations: u64,
    clusters_visited: u64,
    options: SearchOptions,
}

impl<'a> SearchState<'a> {
    fn new(
        index: &'a IndexFile,
        query: &Payload,
        options: SearchOptions,
    ) -> Result<SearchState<'a>, SearchError> {
        Ok(SearchState {
            session: index.session()?,
            eval: QueryEval::for_index(index, query)?,
            center_dists: HashMap::new(),
            distance_computations: 0,
            clusters_visited: 0,
            options,
        })
    }

    fn center_distance(&mut self, node_idx: usize) -> Result<f64, SearchError> {
        if let Some(&d) = self.center_dists.get(&node_idx) {
            return Ok(d);
        }
        let payload = self.session.center_payload(node_idx)?;
        let d = self.eval.distance(&payload);
        self.distance_computations += 1;
        self.center_dists.insert(node_idx, d);
        Ok(d)
    }

    fn point_distance(&mut self, payload: &Payload) -> f64 {
        self.distance_computations += 1;
        self.eval.distance(payload)
    }

    /// Scans one unitary leaf, reusing the already-computed center
    /// distance for the center member.
    fn scan_leaf(
        &mut self,
        node_idx: usize,
        mut take: impl FnMut(usize, f64),
    ) -> Result<(), SearchError> {
        let center_ordinal = self.session.index.nodes[node_idx].center;
        let d_center = self.center_distance(node_idx)?;
        let members = self.session.decompress_leaf(node_idx)?;
        for (ordinal, payload) in members {
            let d = if ordinal == center_ordinal {
                d_center
            } else {
                self.point_distance(&payload)
            };
            take(ordinal, d);
        }
        Ok(())
    }

    fn stats(&self) -> SearchStats {
        SearchStats {
            distance_computations: self.distance_computations,
            clusters_visited: self.clusters_visited,
            points_decompressed: self.session.points_decompressed(),
            decompressed_fraction: self.session.decompressed_fraction(),
        }
    }

    /// Debug soundness check: nothing in a pruned subtree may beat the
    /// bound it was pruned with.
    fn assert_prune_sound(&mut self, node_idx: usize, bound: f64) -> Result<(), SearchError> {
        if !self.options.verify_pruning {
            return Ok(());
        }
        let members = self.session.decompress_cluster(node_idx)?;
        for (ordinal, payload) in members {
            let d = self.eval.distance(&payload);
            assert!(
                d > bound,
                "pruned cluster {node_idx} holds ordinal {ordinal} at {d} <= bound {bound}"
            );
        }
        Ok(())
    }
}

fn finish_hits(index: &IndexFile, mut raw: Vec<(usize, f64)>, state: &SearchState) -> HitSet {
    raw.sort_by(|a, b| {
        a.1.partial_cmp(&b.1)
            .expect("distances are never NaN")
            .then_with(|| index.ids[a.0].cmp(&index.ids[b.0]))
    });
    HitSet {
        hits: raw
            .into_iter()
            .map(|(ordinal, distance)| Hit {
                id: index.ids[ordinal],
                ordinal,
                distance,
            })
            .collect(),
        stats: state.stats(),
    }
}

/// Exact rho-NN: all points within `radius` of the query.
pub fn rnn_search(
    index: &IndexFile,
    query: &Payload,
    radius: f64,
    options: SearchOptions,
) -> Result<HitSet, SearchError> {
    let mut state = SearchState::new(index, query, options)?;
    let raw = rnn_core(index, &mut state, radius)?;
    Ok(finish_hits(index, raw, &state))
}

fn rnn_core(
    index: &IndexFile,
    state: &mut SearchState,
    radius: f64,
) -> Result<Vec<(usize, f64)>, SearchError> {
    let mut hits = Vec::new();
    if index.is_empty() {
        return Ok(hits);
    }
    let mut stack = vec![0usize];
    while let Some(idx) = stack.pop() {
        state.clusters_visited += 1;
        let node = &index.nodes[idx];
        let d_c = state.center_distance(idx)?;
        // Keep the cluster iff the query ball can overlap its ball.
        if d_c > radius + state.eval.node_radius(node) + PRUNE_EPS {
            state.assert_prune_sound(idx, radius)?;
            continue;
        }
        match node.mode {
            StoredMode::UnitaryLeaf => {
                state.scan_leaf(idx, |ordinal, d| {
                    if d <= radius {
                        hits.push((ordinal, d));
                    }
                })?;
            }
            StoredMode::RecursiveInternal => {
                let (l, r) = node.children.expect("internal node has children");
                stack.push(r);
                stack.push(l);
            }
        }
    }
    Ok(hits)
}

/// Exact k-NN by repeated rho-NN with a growing radius. Refused for set
/// metrics, whose saturating distances defeat radius growth.
pub fn knn_repeated_rnn(
    index: &IndexFile,
    query: &Payload,
    k: usize,
    options: SearchOptions,
) -> Result<HitSet, SearchError> {
    let mut state = SearchState::new(index, query, options)?;
    if !state.eval.supports_radius_growth() {
        return Err(SearchError::UnsupportedAlgorithm {
            metric: state.eval.metric_name().to_string(),
        });
    }
    let k = k.min(index.point_count);
    if k == 0 || index.is_empty() {
        return Ok(finish_hits(index, Vec::new(), &state));
    }

    // Initial radius: the radius of the smallest cluster holding at least
    // k points along the descent path toward the query.
    let mut rho = initial_radius(index, &mut state, k)?;
    if rho == 0.0 {
        rho = state.center_distance(0)?;
    }

    let mut raw;
    loop {
        raw = rnn_core(index, &mut state, rho)?;
        if raw.len() >= k {
            break;
        }
        if rho == 0.0 {
            // Whole dataset at distance zero from the query and still
            // fewer than k hits is impossible (k <= n), so the radius can
            // only have been zero with distant points: grow from the
            // root-ball bound instead.
            rho = state.center_distance(0)? + index.nodes[0].radius;
            continue;
        }
        rho *= state.options.growth_factor;
    }

    // Final pass at the k-th smallest distance found.
    raw.sort_by(|a, b| {
        a.1.partial_cmp(&b.1)
            .expect("no NaN distances")
            .then_with(|| index.ids[a.0].cmp(&index.ids[b.0]))
    });
    let tau = raw[k - 1].1;
    let mut full = rnn_core(index, &mut state, tau)?;
    full.sort_by(|a, b| {
        a.1.partial_cmp(&b.1)
            .expect("no NaN distances")
            .then_with(|| index.ids[a.0].cmp(&index.ids[b.0]))
    });
    full.truncate(k);
    Ok(finish_hits(index, full, &state))
}

fn initial_radius(
    index: &IndexFile,
    state: &mut SearchState,
    k: usize,
) -> Result<f64, SearchError> {
    let mut idx = 0usize;
    let mut best = 0.0f64;
    loop {
        let node = &index.nodes[idx];
        if node.cardinality >= k && state.eval.node_radius(node) > 0.0 {
            best = state.eval.node_radius(node);
        }
        match node.children {
            None => break,
            Some((l, r)) => {
                if index.nodes[l].cardinality < k && index.nodes[r].cardinality < k {
                    break;
                }
                let dl = if index.nodes[l].cardinality >= k {
                    Some(state.center_distance(l)?)
                } else {
                    None
                };
                let dr = if index.nodes[r].cardinality >= k {
                    Some(state.center_distance(r)?)
                } else {
                    None
                };
                idx = match (dl, dr) {
                    (Some(a), Some(b)) => {
                        if a <= b {
                            l
                        } else {
                            r
                        }
                    }
                    (Some(_), None) => l,
                    (None, Some(_)) => r,
                    (None, None) => unreachable!("loop breaks before this"),
                };
            }
        }
    }
    Ok(best)
}

/// Exact k-NN by breadth-first traversal with a weighted-quickselect
/// threshold per level.
pub fn knn_breadth_first(
    index: &IndexFile,
    query: &Payload,
    k: usize,
    options: SearchOptions,
) -> Result<HitSet, SearchError> {
    let mut state = SearchState::new(index, query, options)?;
    let k = k.min(index.point_count);
    if k == 0 || index.is_empty() {
        return Ok(finish_hits(index, Vec::new(), &state));
    }

    struct Entry {
        idx: usize,
        delta_minus: f64,
        delta_plus: f64,
        cardinality: usize,
        is_leaf: bool,
    }
    let make_entry = |idx: usize, state: &mut SearchState| -> Result<Entry, SearchError> {
        state.clusters_visited += 1;
        let d_c = state.center_distance(idx)?;
        let node = &state.session.index.nodes[idx];
        let radius = state.eval.node_radius(node);
        Ok(Entry {
            idx,
            delta_minus: (d_c - radius).max(0.0),
            delta_plus: d_c + radius,
            cardinality: node.cardinality,
            is_leaf: node.mode == StoredMode::UnitaryLeaf,
        })
    };

    let mut pool = vec![make_entry(0, &mut state)?];
    loop {
        // Threshold: smallest delta-plus covering at least k points.
        let mut sel: Vec<(f64, usize)> = pool
            .iter()
            .map(|e| (e.delta_plus, e.cardinality))
            .collect();
        let tau = weighted_kth_smallest(&mut sel, k);

        let mut kept = Vec::with_capacity(pool.len());
        for e in pool {
            if e.delta_minus <= tau + PRUNE_EPS {
                kept.push(e);
            } else {
                state.assert_prune_sound(e.idx, tau)?;
            }
        }

        if kept.iter().all(|e| e.is_leaf) {
            pool = kept;
            break;
        }
        let mut next = Vec::with_capacity(kept.len() * 2);
        for e in kept {
            if e.is_leaf {
                next.push(e);
            } else {
                let (l, r) = state.session.index.nodes[e.idx]
                    .children
                    .expect("internal node has children");
                next.push(make_entry(l, &mut state)?);
                next.push(make_entry(r, &mut state)?);
            }
        }
        pool = next;
    }

    let mut raw = Vec::new();
    for e in &pool {
        state.scan_leaf(e.idx, |ordinal, d| raw.push((ordinal, d)))?;
    }
    let mut hits = finish_hits(index, raw, &state);
    hits.hits.truncate(k);
    Ok(hits)
}

/// Smallest value v in `entries` such that the total weight of entries
/// with value <= v reaches `k` (or the maximum value if the total weight
/// is below k). Quickselect over the weighted order statistic.
fn weighted_kth_smallest(entries: &mut [(f64, usize)], k: usize) -> f64 {
    let total: usize = entries.iter().map(|e| e.1).sum();
    let mut need = k.min(total).max(1);
    let mut slice: &mut [(f64, usize)] = entries;
    loop {
        if slice.len() == 1 {
            return slice[0].0;
        }
        let pivot = slice[slice.len() / 2].0;
        // Three-way partition: [< pivot | == pivot | > pivot].
        let mut less = Vec::new();
        let mut equal = Vec::new();
        let mut greater = Vec::new();
        for &e in slice.iter() {
            match e.0.partial_cmp(&pivot).expect("no NaN bounds") {
                std::cmp::Ordering::Less => less.push(e),
                std::cmp::Ordering::Equal => equal.push(e),
                std::cmp::Ordering::Greater => greater.push(e),
            }
        }
        let w_less: usize = less.iter().map(|e| e.1).sum();
        let w_equal: usize = equal.iter().map(|e| e.1).sum();
        let (n_less, n_equal) = (less.len(), equal.len());
        for (slot, e) in slice
            .iter_mut()
            .zip(less.into_iter().chain(equal).chain(greater))
        {
            *slot = e;
        }
        if need <= w_less {
            slice = &mut slice[..n_less];
        } else if need <= w_less + w_equal {
            return pivot;
        } else {
            need -= w_less + w_equal;
            slice = &mut slice[n_less + n_equal..];
        }
    }
}

/// Exact k-NN by best-first descent with two priority queues: candidate
/// clusters ordered by delta-minus, hits in a bounded max-queue.
pub fn knn_depth_first(
    index: &IndexFile,
    query: &Payload,
    k: usize,
    options: SearchOptions,
) -> Result<HitSet, SearchError> {
    let mut state = SearchState::new(index, query, options)?;
    let k = k.min(index.point_count);
    if k == 0 || index.is_empty() {
        return Ok(finish_hits(index, Vec::new(), &state));
    }

    // Min-queue of candidates by (delta_minus, node index).
    let mut candidates: BinaryHeap<std::cmp::Reverse<(OrderedFloat<f64>, usize)>> =
        BinaryHeap::new();
    // Max-queue of current best hits by (distance, id).
    let mut hits: BinaryHeap<(OrderedFloat<f64>, u64, usize)> = BinaryHeap::new();

    let delta_minus = |idx: usize, state: &mut SearchState| -> Result<f64, SearchError> {
        state.clusters_visited += 1;
        let d_c = state.center_distance(idx)?;
        let radius = state.eval.node_radius(&state.session.index.nodes[idx]);
        Ok((d_c - radius).max(0.0))
    };

    let dm = delta_minus(0, &mut state)?;
    candidates.push(std::cmp::Reverse((OrderedFloat(dm), 0)));

    while let Some(std::cmp::Reverse((OrderedFloat(dm), idx))) = candidates.pop() {
        if hits.len() == k {
            let kth = hits.peek().expect("k > 0").0 .0;
            if dm > kth + PRUNE_EPS {
                state.assert_prune_sound(idx, kth)?;
                break;
            }
        }
        // Descend to the most promising leaf, queueing siblings.
        let mut cur = idx;
        while let Some((l, r)) = index.nodes[cur].children {
            let dl = delta_minus(l, &mut state)?;
            let dr = delta_minus(r, &mut state)?;
            let (next, other, d_other) = if dl <= dr { (l, r, dr) } else { (r, l, dl) };
            candidates.push(std::cmp::Reverse((OrderedFloat(d_other), other)));
            cur = next;
        }
        state.scan_leaf(cur, |ordinal, d| {
            let entry = (OrderedFloat(d), index.ids[ordinal], ordinal);
            if hits.len() < k {
                hits.push(entry);
            } else if entry < *hits.peek().expect("nonempty") {
                hits.pop();
                hits.push(entry);
            }
        })?;
    }

    let raw: Vec<(usize, f64)> = hits
        .into_iter()
        .map(|(d, _, ordinal)| (ordinal, d.0))
        .collect();
    Ok(finish_hits(index, raw, &state))
}

/// Dispatches a query to the right algorithm.
pub fn search_index(
    index: &IndexFile,
    query: &Query,
    options: SearchOptions,
) -> Result<HitSet, SearchError> {
    match &query.mode {
        QueryMode::Rnn { radius } => rnn_search(index, &query.payload, *radius, options),
        QueryMode::Knn { k, algorithm } => match algorithm {
            KnnAlgorithm::RepeatedRnn => knn_repeated_rnn(index, &query.payload, *k, options),
            KnnAlgorithm::BreadthFirst => knn_breadth_first(index, &query.payload, *k, options),
            KnnAlgorithm::DepthFirst => knn_depth_first(index, &query.payload, *k, options),
        },
    }
}

/// Brute-force linear scan over raw (ordinal, payload) pairs: the oracle
/// every tree algorithm must match exactly, and the CLI's raw-scan mode.
pub fn linear_scan_rnn(
    pairs: &[(usize, Payload)],
    ids: &[u64],
    eval: &QueryEval,
    radius: f64,
) -> Vec<Hit> {
    let mut hits: Vec<Hit> = pairs
        .iter()
        .filter_map(|(ordinal, payload)| {
            let d = eval.distance(payload);
            (d <= radius).then_some(Hit {
                id: ids[*ordinal],
                ordinal: *ordinal,
                distance: d,
            })
        })
        .collect();
    hits.sort_by(|a, b| {
        a.distance
            .partial_cmp(&b.distance)
            .expect("no NaN distances")
            .then_with(|| a.id.cmp(&b.id))
    });
    hits
}

/// Brute-force k-NN oracle.
pub fn linear_scan_knn(
    pairs: &[(usize, Payload)],
    ids: &[u64],
    eval: &QueryEval,
    k: usize,
) -> Vec<Hit> {
    let mut hits: Vec<Hit> = pairs
        .iter()
        .map(|(ordinal, payload)| Hit {
            id: ids[*ordinal],
            ordinal: *ordinal,
            distance: eval.distance(payload),
        })
        .collect();
    hits.sort_by(|a, b| {
        a.distance
            .partial_cmp(&b.distance)
            .expect("no NaN distances")
            .then_with(|| a.id.cmp(&b.id))
    });
    hits.truncate(k);
    hits
}

/// Gap-stripped Levenshtein radius of every node in a (trimmed) tree:
/// the extra per-node field that keeps MSA-index pruning sound when
/// queries are compared with Levenshtein instead of the build metric.
pub fn gap_stripped_lev_radii(tree: &Tree, points: &[Payload]) -> Vec<f64> {
    use rayon::prelude::*;
    let stripped: Vec<Vec<u8>> = points
        .par_iter()
        .map(|p| strip_gaps(p.as_seq().expect("msa implies sequences")))
        .collect();
    tree.nodes
        .par_iter()
        .map(|node| {
            let center = &stripped[node.center];
            tree.members(node)
                .iter()
                .map(|&m| levenshtein_distance(center, &stripped[m]) as f64)
                .fold(0.0f64, f64::max)
        })
        .collect()
}
