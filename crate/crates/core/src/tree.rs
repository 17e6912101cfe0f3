//! Divisive hierarchical cluster tree over an arbitrary metric.
//!
//! Each node is a metric ball: a center point, the max distance from the
//! center to any member (radius), and the member set. Partitioning picks a
//! center as the geometric median of a random sample of ceil(sqrt(n))
//! members, finds the two maximally separated poles, and splits members by
//! which pole is closer. Members are kept as contiguous ranges over a
//! reordered permutation, so a node's membership is just (offset, len).

use crate::error::TreeError;
use crate::metric::Metric;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::join;

/// Stopping criteria for partitioning. A cluster is split only while it
/// has more than one distinct point and every enabled criterion holds.
#[derive(Clone, Debug)]
pub struct PartitionCriteria {
    /// Stop when cardinality falls below this. The default of 1 never
    /// stops: trees partition to singletons and the compressor is what
    /// trims them back.
    pub min_cardinality: usize,
    /// Stop at this depth, if set.
    pub max_depth: Option<usize>,
    /// Stop when the radius falls below this, if set.
    pub min_radius: Option<f64>,
}

impl Default for PartitionCriteria {
    fn default() -> Self {
        PartitionCriteria {
            min_cardinality: 1,
            max_depth: None,
            min_radius: None,
        }
    }
}

impl PartitionCriteria {
    fn allows(&self, cardinality: usize, depth: usize, radius: f64) -> bool {
        cardinality >= self.min_cardinality
            && self.max_depth.map_or(true, |d| depth < d)
            && self.min_radius.map_or(true, |r| radius >= r)
    }
}

/// A node of the tree. Members are `tree.permutation[offset..offset + cardinality]`.
#[derive(Clone, Debug)]
pub struct Cluster {
    /// Dataset ordinal of the center point.
    pub center: usize,
    /// Max distance from the center to any member; attained by some member.
    pub radius: f64,
    pub cardinality: usize,
    pub depth: usize,
    /// Start of this cluster's slice in the permutation.
    pub offset: usize,
    /// Local fractal dimension at this node's scale:
    /// log2(|B(center, radius)| / |B(center, radius/2)|), counting members.
    pub lfd: f64,
    /// Arena indices of (left, right) children; `None` for leaves.
    pub children: Option<(usize, usize)>,
    /// Dataset ordinals of the poles that split this node (internal only).
    pub poles: Option<(usize, usize)>,
}

impl Cluster {
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }
}

/// The built hierarchy. `nodes[0]` is the root and nodes are in pre-order,
/// so every subtree is a contiguous index range.
pub struct Tree {
    pub nodes: Vec<Cluster>,
    /// Maps tree order to dataset ordinals; a bijection on 0..n.
    pub permutation: Vec<usize>,
    pub metric_name: String,
    pub seed: u64,
}

impl Tree {
    pub fn root(&self) -> &Cluster {
        &self.nodes[0]
    }

    pub fn cardinality(&self) -> usize {
        self.permutation.len()
    }

    /// Dataset ordinals of a node's members.
    pub fn members(&self, node: &Cluster) -> &[usize] {
        &self.permutation[node.offset..node.offset + node.cardinality]
    }

    pub fn max_depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }
}

/// The member of `ids` minimizing the sum of distances to all other
/// members; ties broken by smallest ordinal.
pub fn geometric_median<P, M>(ids: &[usize], points: &[P], metric: &M) -> Result<usize, TreeError>
where
    M: Metric<P> + ?Sized,
{
    if ids.is_empty() {
        return Err(TreeError::EmptyInput);
    }
    let mut sorted = ids.to_vec();
    sorted.sort_unstable();
    let mut best = (f64::INFINITY, usize::MAX);
    for &i in &sorted {
        let sum: f64 = sorted
            .iter()
            .filter(|&&j| j != i)
            .map(|&j| metric.distance(&points[i], &points[j]))
            .sum();
        if sum < best.0 || (sum == best.0 && i < best.1) {
            best = (sum, i);
        }
    }
    Ok(best.1)
}

/// Picks the splitting poles of a cluster: the center is the geometric
/// median of a ceil(sqrt(n)) sample, `l` is the member farthest from the
/// center, and `r` the member farthest from `l`. Argmax ties break toward
/// the smallest ordinal.
pub fn select_poles<P, M>(
    member_ids: &[usize],
    points: &[P],
    metric: &M,
    seed: u64,
) -> Result<(usize, usize), TreeError>
where
    M: Metric<P> + ?Sized,
{
    if member_ids.len() < 2 {
        return Err(TreeError::TooFewPoints {
            required: 2,
            got: member_ids.len(),
        });
    }
    let mut scratch = member_ids.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample_len = sample_prefix(&mut scratch, &mut rng);
    let center = geometric_median(&scratch[..sample_len], points, metric)?;
    let l = farthest_from(center, member_ids, points, metric);
    let r = farthest_from(l, member_ids, points, metric);
    Ok((l, r))
}

/// Fisher-Yates the first ceil(sqrt(n)) elements into place; returns the
/// sample length.
fn sample_prefix<R: Rng>(ids: &mut [usize], rng: &mut R) -> usize {
    let n = ids.len();
    let k = ((n as f64).sqrt().ceil() as usize).clamp(1, n);
    for i in 0..k {
        let j = rng.gen_range(i..n);
        ids.swap(i, j);
    }
    k
}

fn farthest_from<P, M>(origin: usize, ids: &[usize], points: &[P], metric: &M) -> usize
where
    M: Metric<P> + ?Sized,
{
    let mut best = (f64::NEG_INFINITY, usize::MAX);
    for &i in ids {
        let d = metric.distance(&points[origin], &points[i]);
        if d > best.0 || (d == best.0 && i < best.1) {
            best = (d, i);
        }
    }
    best.1
}

/// Local fractal dimension from ball cardinalities at radius and half
/// radius. Zero for degenerate balls.
pub fn lfd_from_counts(total: usize, within_half: usize) -> f64 {
    if within_half == 0 || total <= within_half {
        0.0
    } else {
        (total as f64 / within_half as f64).log2()
    }
}

/// Builds the tree. Identical (points, metric, criteria, seed) produce
/// identical trees regardless of thread scheduling: every node derives its
/// RNG from the build seed and its own permutation range.
pub fn build_tree<P, M>(
    points: &[P],
    metric: &M,
    criteria: &PartitionCriteria,
    seed: u64,
) -> Result<Tree, TreeError>
where
    P: Sync,
    M: Metric<P> + ?Sized + Sync,
{
    if points.is_empty() {
        return Err(TreeError::EmptyInput);
    }
    let mut permutation: Vec<usize> = (0..points.len()).collect();
    let nodes = partition(points, metric, criteria, seed, &mut permutation, 0, 0);
    Ok(Tree {
        nodes,
        permutation,
        metric_name: metric.name().to_string(),
        seed,
    })
}

fn node_seed(build_seed: u64, offset: usize, cardinality: usize, depth: usize) -> u64 {
    // splitmix64 over the node's stable identity.
    let mut z = build_seed
        .wrapping_add((offset as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add((cardinality as u64).wrapping_mul(0xbf58_476d_1ce4_e5b9))
        .wrapping_add((depth as u64).wrapping_mul(0x94d0_49bb_1331_11eb));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Sequential cutoff for parallel recursion into siblings.
const PARALLEL_MIN_CARDINALITY: usize = 2048;

/// Recursively partitions `perm` (the members of one cluster) and returns
/// the subtree in pre-order with arena indices local to the returned vec.
fn partition<P, M>(
    points: &[P],
    metric: &M,
    criteria: &PartitionCriteria,
    build_seed: u64,
    perm: &mut [usize],
    offset: usize,
    depth: usize,
) -> Vec<Cluster>
where
    P: Sync,
    M: Metric<P> + ?Sized + Sync,
{
    let n = perm.len();
    let mut rng = ChaCha8Rng::seed_from_u64(node_seed(build_seed, offset, n, depth));

    // Center: geometric median of a ceil(sqrt(n)) sample.
    let sample_len = sample_prefix(perm, &mut rng);
    let center = geometric_median(&perm[..sample_len], points, metric)
        .expect("cluster slices are nonempty");

    // One scan from the center gives radius, LFD counts, and the l pole.
    let mut radius = 0.0f64;
    let mut l = (f64::NEG_INFINITY, usize::MAX);
    let mut center_dists = Vec::with_capacity(n);
    for &i in perm.iter() {
        let d = metric.distance(&points[center], &points[i]);
        center_dists.push(d);
        if d > radius {
            radius = d;
        }
        if d > l.0 || (d == l.0 && i < l.1) {
            l = (d, i);
        }
    }
    let half = radius / 2.0;
    let within_half = center_dists.iter().filter(|&&d| d <= half).count();
    let lfd = lfd_from_counts(n, within_half);

    let mut node = Cluster {
        center,
        radius,
        cardinality: n,
        depth,
        offset,
        lfd,
        children: None,
        poles: None,
    };

    // A zero-radius cluster is all duplicates: always a leaf, since pole
    // selection cannot separate identical points.
    let split_allowed = n > 1 && radius > 0.0 && criteria.allows(n, depth, radius);
    if !split_allowed {
        return vec![node];
    }

    let l = l.1;
    let r = farthest_from(l, perm, points, metric);
    node.poles = Some((l, r));

    // Members closer to l (ties included) go left; the rest go right.
    // Within the slice, stable two-pointer into a scratch buffer.
    let mut left: Vec<usize> = Vec::with_capacity(n);
    let mut right: Vec<usize> = Vec::with_capacity(n);
    for &i in perm.iter() {
        let dl = metric.distance(&points[l], &points[i]);
        let dr = metric.distance(&points[r], &points[i]);
        if dl <= dr {
            left.push(i);
        } else {
            right.push(i);
        }
    }
    debug_assert!(!left.is_empty() && !right.is_empty());
    let split = left.len();
    perm[..split].copy_from_slice(&left);
    perm[split..].copy_from_slice(&right);

    let (left_slice, right_slice) = perm.split_at_mut(split);
    let run = |slice: &mut [usize], child_offset: usize| {
        partition(
            points,
            metric,
            criteria,
            build_seed,
            slice,
            child_offset,
            depth + 1,
        )
    };
    let (left_nodes, right_nodes) = if n >= PARALLEL_MIN_CARDINALITY {
        join(
            || run(left_slice, offset),
            || run(right_slice, offset + split),
        )
    } else {
        (run(left_slice, offset), run(right_slice, offset + split))
    };

    // Assemble pre-order: self, left subtree, right subtree.
    let mut nodes = Vec::with_capacity(1 + left_nodes.len() + right_nodes.len());
    node.children = Some((1, 1 + left_nodes.len()));
    nodes.push(node);
    let base = nodes.len();
    nodes.extend(left_nodes.into_iter().map(|c| shift_children(c, base)));
    let base = nodes.len();
    nodes.extend(right_nodes.into_iter().map(|c| shift_children(c, base)));
    nodes
}

fn shift_children(mut c: Cluster, base: usize) -> Cluster {
    if let Some((l, r)) = c.children {
        c.children = Some((l + base, r + base));
    }
    c
}
