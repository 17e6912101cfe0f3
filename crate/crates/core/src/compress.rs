//! Chooses, per subtree, between unitary compression (every member encoded
//! against the cluster center) and recursive compression (child centers
//! encoded against the parent center, children compressed independently),
//! then trims descendants wherever unitary wins.
//!
//! Costs are measured in actual encoded bytes, varint and opcode overhead
//! included, so the quantity being minimized is the real size of the blob
//! section that ends up on disk.

use crate::metric::CompressiveMetric;
use crate::point::Payload;
use crate::tree::{Cluster, Tree};
use rayon::join;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CompressionMode {
    /// All members stored against this node's center; no descendants.
    Unitary,
    /// Child centers stored against this node's center; members live in
    /// descendant leaves.
    Recursive,
}

/// Cost record for one cluster.
#[derive(Clone, Debug)]
pub struct PlanNode {
    pub unitary_cost: u64,
    /// `None` for leaves of the built tree, where recursion is impossible.
    pub recursive_cost: Option<u64>,
    pub min_cost: u64,
    pub mode: CompressionMode,
}

/// Per-cluster compression decision, aligned with a tree's node arena.
#[derive(Clone, Debug)]
pub struct CompressionPlan {
    pub nodes: Vec<PlanNode>,
}

impl CompressionPlan {
    /// Total encoded payload bytes the plan commits to: member encodings of
    /// unitary nodes plus the two center encodings of each recursive node.
    /// The serializer asserts its blob section matches this exactly.
    pub fn committed_bytes(&self, tree: &Tree) -> u64 {
        let mut total = 0u64;
        for (node, plan) in tree.nodes.iter().zip(&self.nodes) {
            match plan.mode {
                CompressionMode::Unitary => total += plan.unitary_cost,
                CompressionMode::Recursive => {
                    let rc = plan.recursive_cost.expect("recursive node has cost");
                    let (li, ri) = node.children.expect("recursive node has children");
                    total += rc
                        - self.nodes[li].min_cost
                        - self.nodes[ri].min_cost;
                }
            }
        }
        total
    }
}

/// Result of compressing a built tree: the trimmed tree and the plan for
/// its (re-indexed) nodes.
pub struct Compressed {
    pub tree: Tree,
    pub plan: CompressionPlan,
}

/// Bytes to store every non-center member of `node` against its center.
pub fn unitary_cost(
    node: &Cluster,
    tree: &Tree,
    points: &[Payload],
    metric: &dyn CompressiveMetric,
) -> u64 {
    use rayon::prelude::*;
    let members = tree.members(node);
    let encode_one = |m: usize| {
        if m == node.center {
            0
        } else {
            metric.encode(&points[m], &points[node.center]).size() as u64
        }
    };
    if members.len() >= PARALLEL_MIN_CARDINALITY {
        members.par_iter().map(|&m| encode_one(m)).sum()
    } else {
        members.iter().map(|&m| encode_one(m)).sum()
    }
}

/// Subtree sizes per node; valid because the arena is in pre-order, so
/// children always follow their parent.
fn subtree_sizes(tree: &Tree) -> Vec<usize> {
    let mut sizes = vec![1usize; tree.nodes.len()];
    for idx in (0..tree.nodes.len()).rev() {
        if let Some((li, ri)) = tree.nodes[idx].children {
            sizes[idx] = 1 + sizes[li] + sizes[ri];
        }
    }
    sizes
}

/// Computes the full cost table bottom-up over the original tree, without
/// trimming. Entry `i` corresponds to `tree.nodes[i]`.
pub fn compute_costs(
    tree: &Tree,
    points: &[Payload],
    metric: &dyn CompressiveMetric,
) -> CompressionPlan {
    let sizes = subtree_sizes(tree);
    let mut nodes: Vec<Option<PlanNode>> = vec![None; tree.nodes.len()];
    fill_costs(tree, points, metric, 0, &mut nodes, &sizes);
    CompressionPlan {
        nodes: nodes
            .into_iter()
            .map(|n| n.expect("all nodes visited"))
            .collect(),
    }
}

/// Work split threshold for sibling parallelism.
const PARALLEL_MIN_CARDINALITY: usize = 1024;

/// Fills `out[idx..idx + subtree_size]`; the slice passed in covers exactly
/// this node's subtree, so sibling recursion can split it mutably.
fn fill_costs(
    tree: &Tree,
    points: &[Payload],
    metric: &dyn CompressiveMetric,
    idx: usize,
    out: &mut [Option<PlanNode>],
    sizes: &[usize],
) {
    let node = &tree.nodes[idx];
    let uc = unitary_cost(node, tree, points, metric);
    let plan = match node.children {
        None => PlanNode {
            unitary_cost: uc,
            recursive_cost: None,
            min_cost: uc,
            mode: CompressionMode::Unitary,
        },
        Some((li, ri)) => {
            let (_, rest) = out.split_at_mut(1);
            let (left_out, right_out) = rest.split_at_mut(sizes[li]);
            if node.cardinality >= PARALLEL_MIN_CARDINALITY {
                join(
                    || fill_costs(tree, points, metric, li, left_out, sizes),
                    || fill_costs(tree, points, metric, ri, right_out, sizes),
                );
            } else {
                fill_costs(tree, points, metric, li, left_out, sizes);
                fill_costs(tree, points, metric, ri, right_out, sizes);
            }
            let rest = &*rest;
            let l_min = rest[0].as_ref().expect("left filled").min_cost;
            let r_min = rest[sizes[li]].as_ref().expect("right filled").min_cost;
            let (left, right) = (&tree.nodes[li], &tree.nodes[ri]);
            let l_edge = metric
                .encode(&points[left.center], &points[node.center])
                .size() as u64;
            let r_edge = metric
                .encode(&points[right.center], &points[node.center])
                .size() as u64;
            let rc = l_edge + l_min + r_edge + r_min;
            if rc > uc {
                // Unitary wins: descendants will be deleted.
                PlanNode {
                    unitary_cost: uc,
                    recursive_cost: Some(rc),
                    min_cost: uc,
                    mode: CompressionMode::Unitary,
                }
            } else {
                // Ties keep the recursive form.
                PlanNode {
                    unitary_cost: uc,
                    recursive_cost: Some(rc),
                    min_cost: rc,
                    mode: CompressionMode::Recursive,
                }
            }
        }
    };
    out[0] = Some(plan);
}

/// Runs the cost pass and trims every subtree whose parent chose unitary
/// compression. The returned tree is re-indexed in pre-order; the plan is
/// aligned with it.
pub fn compress(
    tree: &Tree,
    points: &[Payload],
    metric: &dyn CompressiveMetric,
) -> Compressed {
    let costs = compute_costs(tree, points, metric);
    let mut nodes = Vec::new();
    let mut plan = Vec::new();
    copy_retained(tree, &costs, 0, &mut nodes, &mut plan);
    Compressed {
        tree: Tree {
            nodes,
            permutation: tree.permutation.clone(),
            metric_name: tree.metric_name.clone(),
            seed: tree.seed,
        },
        plan: CompressionPlan { nodes: plan },
    }
}

fn copy_retained(
    tree: &Tree,
    costs: &CompressionPlan,
    idx: usize,
    nodes: &mut Vec<Cluster>,
    plan: &mut Vec<PlanNode>,
) -> usize {
    let new_idx = nodes.len();
    let mut node = tree.nodes[idx].clone();
    let cost = costs.nodes[idx].clone();
    nodes.push(node.clone());
    plan.push(cost.clone());
    match cost.mode {
        CompressionMode::Unitary => {
            node.children = None;
            node.poles = None;
            nodes[new_idx] = node;
        }
        CompressionMode::Recursive => {
            let (li, ri) = node.children.expect("recursive node has children");
            let new_li = copy_retained(tree, costs, li, nodes, plan);
            let new_ri = copy_retained(tree, costs, ri, nodes, plan);
            nodes[new_idx].children = Some((new_li, new_ri));
        }
    }
    new_idx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::{CompressiveMetric, Hamming, Jaccard};
    use crate::point::Payload;
    use crate::tree::{build_tree, PartitionCriteria};
    use proptest::prelude::*;

    fn build(points: &[Payload], metric: &dyn CompressiveMetric, seed: u64) -> Tree {
        build_tree(points, metric.as_metric(), &PartitionCriteria::default(), seed).unwrap()
    }

    #[test]
    fn singleton_cluster_costs_nothing() {
        let points = vec![Payload::Seq(b"ACGT".to_vec())];
        let metric = Hamming;
        let tree = build(&points, &metric, 0);
        assert_eq!(unitary_cost(tree.root(), &tree, &points, &metric), 0);
    }

    #[test]
    fn duplicates_cost_only_encoding_overhead() {
        // An empty index-diff is 2 bytes (kind tag + zero count), so k
        // duplicates of the center cost (k - 1) * 2.
        let points: Vec<Payload> = (0..9).map(|_| Payload::Seq(b"ACGT".to_vec())).collect();
        let metric = Hamming;
        let tree = build(&points, &metric, 3);
        assert!(tree.root().is_leaf());
        assert_eq!(unitary_cost(tree.root(), &tree, &points, &metric), 8 * 2);
    }

    #[test]
    fn leaf_only_tree_gets_a_unitary_plan() {
        let points = vec![Payload::set(vec![1, 2, 3])];
        let metric = Jaccard::new(3);
        let tree = build(&points, &metric, 0);
        let compressed = compress(&tree, &points, &metric);
        assert_eq!(compressed.plan.nodes.len(), 1);
        assert_eq!(compressed.plan.nodes[0].mode, CompressionMode::Unitary);
        assert_eq!(compressed.plan.nodes[0].recursive_cost, None);
    }

    /// Two tight families far apart: recursive compression must win at the
    /// root, and the costs must match by-hand re-encoding sums.
    #[test]
    fn recursive_wins_between_two_tight_families() {
        let base_a = b"AAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAA".to_vec();
        let base_b = b"TTTTTTTTTTTTTTTTTTTTTTTTTTTTTTTT".to_vec();
        let mut points = Vec::new();
        for i in 0..8 {
            let mut s = base_a.clone();
            s[i] = b'C'; // one diff from family center region
            points.push(Payload::Seq(s));
        }
        for i in 0..8 {
            let mut s = base_b.clone();
            s[i] = b'G';
            points.push(Payload::Seq(s));
        }
        let metric = Hamming;
        let tree = build(&points, &metric, 11);
        let costs = compute_costs(&tree, &points, &metric);

        // Hand summation oracle for the root's unitary cost.
        let root = tree.root();
        let by_hand: u64 = tree
            .members(root)
            .iter()
            .filter(|&&m| m != root.center)
            .map(|&m| metric.encode(&points[m], &points[root.center]).size() as u64)
            .sum();
        assert_eq!(costs.nodes[0].unitary_cost, by_hand);

        // Cross-family encodings cost ~32 diffs each; within a family,
        // at most 2. Recursion must win at the root.
        assert_eq!(costs.nodes[0].mode, CompressionMode::Recursive);
        let rc = costs.nodes[0].recursive_cost.unwrap();
        assert!(rc <= costs.nodes[0].unitary_cost);
        assert_eq!(costs.nodes[0].min_cost, rc);
    }

    fn random_seq_points(seed: u64, n: usize, len: usize, alphabet: &[u8]) -> Vec<Payload> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                Payload::Seq(
                    (0..len)
                        .map(|_| alphabet[rng.gen_range(0..alphabet.len())])
                        .collect(),
                )
            })
            .collect()
    }

    #[test]
    fn trimmed_tree_structure_is_consistent() {
        let points = random_seq_points(5, 300, 24, b"AC");
        let metric = Hamming;
        let tree = build(&points, &metric, 5);
        let compressed = compress(&tree, &points, &metric);
        let t = &compressed.tree;
        assert_eq!(t.nodes.len(), compressed.plan.nodes.len());
        // Every path ends at exactly one unitary leaf; internal nodes are
        // all recursive with recursive_cost <= unitary_cost.
        for (node, plan) in t.nodes.iter().zip(&compressed.plan.nodes) {
            match plan.mode {
                CompressionMode::Unitary => {
                    assert!(node.is_leaf());
                    assert_eq!(plan.min_cost, plan.unitary_cost);
                }
                CompressionMode::Recursive => {
                    assert!(!node.is_leaf());
                    let rc = plan.recursive_cost.unwrap();
                    assert!(rc <= plan.unitary_cost);
                    assert_eq!(plan.min_cost, rc);
                }
            }
        }
        // Unitary leaves partition the dataset.
        let mut covered: Vec<usize> = t
            .nodes
            .iter()
            .filter(|n| n.is_leaf())
            .flat_map(|n| t.members(n).iter().copied())
            .collect();
        covered.sort_unstable();
        assert_eq!(covered, (0..points.len()).collect::<Vec<_>>());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn costs_and_trimming_agree(seed in any::<u64>()) {
            let points = random_seq_points(seed, 120, 16, b"ACGT");
            let metric = Hamming;
            let tree = build(&points, &metric, seed);
            let costs = compute_costs(&tree, &points, &metric);

            // Trimmed nodes had strictly greater recursive cost.
            for (node, plan) in tree.nodes.iter().zip(&costs.nodes) {
                if node.children.is_some() && plan.mode == CompressionMode::Unitary {
                    prop_assert!(plan.recursive_cost.unwrap() > plan.unitary_cost);
                }
            }

            let compressed = compress(&tree, &points, &metric);
            // Root min_cost is preserved by trimming.
            prop_assert_eq!(
                compressed.plan.nodes[0].min_cost,
                costs.nodes[0].min_cost
            );
        }
    }
}
