//! Matching policies over a [`SupplyTree`].
//!
//! Hierarchical greedy looks at the ancestors of the demand's leaf, skips
//! every level whose cell is at or below its threshold, and then walks down
//! from the first level above the highest such cell, always entering the
//! child with the most supply. The standard greedy baseline simply takes
//! the globally nearest supply point.

mod schedule;
mod supply_tree;

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

pub use schedule::{
    default_beta, fully_dynamic_depth, semi_dynamic_depth, GammaSchedule, BETA_LINE,
    BETA_MULTI_DIM,
};
pub use supply_tree::SupplyTree;

use crate::error::{Error, Result};
use crate::geometry::{distance_unchecked, HypercubeId, Norm, Point};

/// Which supply point to take once a leaf has been chosen.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InLeafRule {
    /// Closest point of the leaf to the demand (lowest slot on ties).
    #[default]
    Nearest,
    /// Most recently inserted point of the leaf.
    LastInserted,
}

impl std::str::FromStr for InLeafRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nearest" => Ok(InLeafRule::Nearest),
            "last_inserted" => Ok(InLeafRule::LastInserted),
            other => Err(Error::Config(format!("unknown in-leaf rule `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    #[default]
    HierarchicalGreedy,
    Greedy,
}

impl std::str::FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hg" | "hierarchical_greedy" => Ok(Policy::HierarchicalGreedy),
            "greedy" => Ok(Policy::Greedy),
            other => Err(Error::Config(format!("unknown policy `{other}`"))),
        }
    }
}

/// Outcome of matching one demand unit.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchDecision {
    pub supply_point: Point,
    /// Leaf the supply point was taken from.
    pub leaf: HypercubeId,
    /// Lowest level at which demand and supply share a cell.
    pub level: u32,
    pub distance: f64,
    /// Dense index of the demand's leaf.
    pub demand_leaf: usize,
    /// Dense index of the supply's leaf.
    pub supply_leaf: usize,
}

/// Level at which hierarchical greedy serves a demand arriving in
/// `demand_leaf`, or an error if even the root is at or below its threshold.
pub fn hg_level(tree: &SupplyTree, schedule: &GammaSchedule, demand_leaf: usize) -> Result<u32> {
    let h = tree.hierarchy();
    let depth = h.depth();
    let mut highest_short: Option<u32> = None;
    for level in 0..=depth {
        let a = h.ancestor_linear(demand_leaf, level);
        if f64::from(tree.count(level, a)) <= schedule.gamma(level) {
            highest_short = Some(level);
        }
    }
    match highest_short {
        None => Ok(0),
        Some(l) if l < depth => Ok(l + 1),
        Some(_) => Err(Error::RootUndersupplied {
            count: u64::from(tree.root_count()),
            threshold: schedule.gamma(depth),
        }),
    }
}

/// Matches `demand` with hierarchical greedy and removes the chosen supply
/// point from `tree`.
pub fn hg_match(
    tree: &mut SupplyTree,
    schedule: &GammaSchedule,
    demand: &Point,
    rule: InLeafRule,
    norm: Norm,
) -> Result<MatchDecision> {
    if schedule.depth() != tree.hierarchy().depth() || schedule.dim != tree.hierarchy().dim() {
        return Err(Error::InvalidSchedule(
            "schedule does not fit the hierarchy".into(),
        ));
    }
    if tree.root_count() == 0 {
        return Err(Error::NoSupply);
    }
    let demand_leaf = tree.leaf_linear(demand)?;
    let level = hg_level(tree, schedule, demand_leaf)?;

    let h = tree.hierarchy();
    let mut node = h.ancestor_linear(demand_leaf, level);
    for l in (1..=level).rev() {
        // Ties go to the lowest child index.
        let mut best = (0u32, usize::MAX);
        for c in 0..h.children_per_node() {
            let child = h.child_linear(l, node, c);
            let n = tree.count(l - 1, child);
            if best.1 == usize::MAX || n > best.0 {
                best = (n, child);
            }
        }
        node = best.1;
    }
    let leaf = node;
    debug_assert!(tree.count(0, leaf) > 0);
    let slot = pick_slot(tree.leaf_points(leaf), demand, rule, norm);
    let supply_point = tree.remove_at(leaf, slot);
    let h = tree.hierarchy();
    debug_assert_eq!(h.match_level(demand_leaf, leaf), level);
    Ok(MatchDecision {
        distance: distance_unchecked(demand, &supply_point, norm),
        leaf: HypercubeId {
            level: 0,
            index: h.axes_of(0, leaf),
        },
        supply_point,
        level,
        demand_leaf,
        supply_leaf: leaf,
    })
}

fn pick_slot(points: &[Point], demand: &Point, rule: InLeafRule, norm: Norm) -> usize {
    match rule {
        InLeafRule::LastInserted => points.len() - 1,
        InLeafRule::Nearest => {
            let mut best = (f64::INFINITY, 0usize);
            for (i, p) in points.iter().enumerate() {
                let d = distance_unchecked(demand, p, norm);
                if d < best.0 {
                    best = (d, i);
                }
            }
            best.1
        }
    }
}

/// Adds a supply point to the tree. Returns the dense index of its leaf.
pub fn hg_insert_supply(tree: &mut SupplyTree, p: Point) -> Result<usize> {
    tree.insert(p)
}

/// Candidate cell in the best-first search of [`greedy_match`].
struct Candidate {
    bound: f64,
    level: u32,
    linear: usize,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    // Min-heap on the bound; ties broken deterministically.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then(other.level.cmp(&self.level))
            .then(other.linear.cmp(&self.linear))
    }
}

/// Nearest available supply point to `demand`, found by best-first search
/// over non-empty cells, then removed from `tree`.
pub fn greedy_match(tree: &mut SupplyTree, demand: &Point, norm: Norm) -> Result<MatchDecision> {
    if tree.root_count() == 0 {
        return Err(Error::NoSupply);
    }
    let demand_leaf = tree.leaf_linear(demand)?;
    let h = tree.hierarchy();
    let mut heap = BinaryHeap::new();
    heap.push(Candidate {
        bound: 0.0,
        level: h.depth(),
        linear: 0,
    });
    // (distance, leaf, slot)
    let mut best: (f64, usize, usize) = (f64::INFINITY, usize::MAX, 0);
    while let Some(c) = heap.pop() {
        if c.bound >= best.0 {
            break;
        }
        if c.level == 0 {
            for (slot, p) in tree.leaf_points(c.linear).iter().enumerate() {
                let d = distance_unchecked(demand, p, norm);
                if d < best.0 || (d == best.0 && (c.linear, slot) < (best.1, best.2)) {
                    best = (d, c.linear, slot);
                }
            }
            continue;
        }
        for k in 0..h.children_per_node() {
            let child = h.child_linear(c.level, c.linear, k);
            if tree.count(c.level - 1, child) == 0 {
                continue;
            }
            let bound = h.distance_to_cell(demand, c.level - 1, child, norm);
            if bound < best.0 {
                heap.push(Candidate {
                    bound,
                    level: c.level - 1,
                    linear: child,
                });
            }
        }
    }
    let (distance, leaf, slot) = best;
    let level = h.match_level(demand_leaf, leaf);
    let index: SmallVec<[u32; 4]> = h.axes_of(0, leaf);
    let supply_point = tree.remove_at(leaf, slot);
    Ok(MatchDecision {
        supply_point,
        leaf: HypercubeId { level: 0, index },
        level,
        distance,
        demand_leaf,
        supply_leaf: leaf,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Hierarchy;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pt(c: &[f64]) -> Point {
        Point::new(SmallVec::from_slice(c)).unwrap()
    }

    fn random_point(rng: &mut ChaCha8Rng, d: usize) -> Point {
        Point::new((0..d).map(|_| rng.gen::<f64>()).collect::<SmallVec<_>>()).unwrap()
    }

    fn line_tree(depth: u32, xs: &[f64]) -> SupplyTree {
        let h = Hierarchy::new(1, depth).unwrap();
        SupplyTree::from_points(h, xs.iter().map(|&x| pt(&[x]))).unwrap()
    }

    #[test]
    fn zero_thresholds_match_inside_leaf() {
        let mut tree = line_tree(2, &[0.1, 0.3, 0.6, 0.9]);
        let s = GammaSchedule::zero(1, 2);
        let m = hg_match(&mut tree, &s, &pt(&[0.35]), InLeafRule::Nearest, Norm::Euclidean).unwrap();
        assert_eq!(m.level, 0);
        assert_eq!(m.supply_point, pt(&[0.3]));
        assert!((m.distance - 0.05).abs() < 1e-12);
        tree.check_invariants().unwrap();
    }

    #[test]
    fn empty_leaf_escalates_to_root() {
        let mut tree = line_tree(1, &[0.6, 0.7, 0.8]);
        let s = GammaSchedule::zero(1, 1);
        let m = hg_match(&mut tree, &s, &pt(&[0.2]), InLeafRule::Nearest, Norm::Euclidean).unwrap();
        assert_eq!(m.level, 1);
        assert_eq!(m.supply_leaf, 1);
        assert_eq!(m.supply_point, pt(&[0.6]));
    }

    #[test]
    fn protected_leaf_is_skipped() {
        // leaf 0 holds one unit, which equals its threshold of 1, so the
        // demand is sent to the root and then to the better supplied leaf 1.
        let tree = line_tree(1, &[0.1, 0.6, 0.7, 0.8]);
        // [1, 0] breaks the gamma[0] <= gamma[1]/2 constraint but still
        // traces the same way; [1, 2] is the valid counterpart.
        for gammas in [vec![1.0, 0.0], vec![1.0, 2.0]] {
            let mut tree = tree.clone();
            let s = GammaSchedule::from_gammas(1, gammas, None).unwrap();
            assert_eq!(hg_level(&tree, &s, 0).unwrap(), 1);
            let m = hg_match(&mut tree, &s, &pt(&[0.1]), InLeafRule::Nearest, Norm::Euclidean)
                .unwrap();
            assert_eq!(m.level, 1);
            assert_eq!(m.supply_leaf, 1);
            assert_eq!(tree.count(0, 0), 1);
        }
        assert!(GammaSchedule::from_gammas(1, vec![1.0, 0.0], None).unwrap().validate(4).is_err());
        assert!(GammaSchedule::from_gammas(1, vec![1.0, 2.0], None).unwrap().validate(4).is_ok());
    }

    #[test]
    fn argmax_ties_take_lowest_child() {
        let h = Hierarchy::new(2, 1).unwrap();
        let mut tree =
            SupplyTree::from_points(h, [pt(&[0.9, 0.1]), pt(&[0.1, 0.9])]).unwrap();
        let s = GammaSchedule::zero(2, 1);
        // demand in empty leaf (0,0); children (1,0) and (0,1) tie at one unit
        let m = hg_match(&mut tree, &s, &pt(&[0.1, 0.1]), InLeafRule::Nearest, Norm::Euclidean)
            .unwrap();
        assert_eq!(m.leaf.index.as_slice(), &[1, 0]);
    }

    #[test]
    fn last_inserted_rule() {
        let mut tree = line_tree(1, &[0.1, 0.4, 0.2]);
        let s = GammaSchedule::zero(1, 1);
        let m = hg_match(&mut tree, &s, &pt(&[0.1]), InLeafRule::LastInserted, Norm::Euclidean)
            .unwrap();
        assert_eq!(m.supply_point, pt(&[0.2]));
    }

    #[test]
    fn root_undersupplied_is_an_error() {
        let mut tree = line_tree(1, &[0.1, 0.6]);
        let s = GammaSchedule::from_gammas(1, vec![0.0, 2.0], None).unwrap();
        assert!(matches!(
            hg_match(&mut tree, &s, &pt(&[0.1]), InLeafRule::Nearest, Norm::Euclidean),
            Err(Error::RootUndersupplied { .. })
        ));
    }

    #[test]
    fn insert_then_collocated_match() {
        let mut tree = line_tree(3, &[0.9]);
        let before = tree.root_count();
        hg_insert_supply(&mut tree, pt(&[0.33])).unwrap();
        assert_eq!(tree.root_count(), before + 1);
        let s = GammaSchedule::zero(1, 3);
        let m = hg_match(&mut tree, &s, &pt(&[0.33]), InLeafRule::Nearest, Norm::Euclidean).unwrap();
        assert_eq!(m.distance, 0.0);
    }

    #[test]
    fn random_inserts_keep_parent_sums() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for d in 1..=3 {
            let h = Hierarchy::new(d, 3).unwrap();
            let mut tree = SupplyTree::new(h);
            for _ in 0..10_000 {
                hg_insert_supply(&mut tree, random_point(&mut rng, d)).unwrap();
            }
            tree.check_invariants().unwrap();
            assert_eq!(tree.root_count(), 10_000);
            // Recompute every level bottom-up from leaf lists.
            let h = tree.hierarchy().clone();
            for level in 0..=h.depth() {
                let mut sums = vec![0u32; h.cells_at(level)];
                for leaf in 0..h.leaf_count() {
                    sums[h.ancestor_linear(leaf, level)] += tree.leaf_points(leaf).len() as u32;
                }
                assert_eq!(sums.as_slice(), tree.counts_at(level));
            }
        }
    }

    #[test]
    fn greedy_single_and_collocated() {
        let mut tree = line_tree(2, &[0.77]);
        let m = greedy_match(&mut tree, &pt(&[0.01]), Norm::Euclidean).unwrap();
        assert_eq!(m.supply_point, pt(&[0.77]));
        assert!(matches!(
            greedy_match(&mut tree, &pt(&[0.01]), Norm::Euclidean),
            Err(Error::NoSupply)
        ));
        let mut tree = line_tree(2, &[0.2, 0.5]);
        let m = greedy_match(&mut tree, &pt(&[0.5]), Norm::Euclidean).unwrap();
        assert_eq!(m.distance, 0.0);
    }

    #[test]
    fn greedy_matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for trial in 0..10_000 {
            let d = 1 + trial % 3;
            let norm = [Norm::Euclidean, Norm::L1, Norm::LInf][trial % 3];
            let h = Hierarchy::new(d, 3 - (d as u32 / 3)).unwrap();
            let n = rng.gen_range(1..40);
            let pts: Vec<Point> = (0..n).map(|_| random_point(&mut rng, d)).collect();
            let mut tree = SupplyTree::from_points(h, pts.iter().cloned()).unwrap();
            let q = random_point(&mut rng, d);
            let scan = pts
                .iter()
                .map(|p| distance_unchecked(&q, p, norm))
                .fold(f64::INFINITY, f64::min);
            let m = greedy_match(&mut tree, &q, norm).unwrap();
            assert_eq!(m.distance, scan);
            assert_eq!(tree.root_count() as usize, n - 1);
        }
    }

    #[test]
    fn hg_level_cap_and_distance_cap() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for d in 1..=3usize {
            let m = 256u64;
            let depth = fully_dynamic_depth(d, m);
            let s = GammaSchedule::fully_dynamic(d, m, depth, default_beta(d)).unwrap();
            let h = Hierarchy::new(d, depth).unwrap();
            let mut tree =
                SupplyTree::from_points(h.clone(), (0..m).map(|_| random_point(&mut rng, d)))
                    .unwrap();
            for _ in 0..5000 {
                let q = random_point(&mut rng, d);
                let dec = hg_match(&mut tree, &s, &q, InLeafRule::Nearest, Norm::Euclidean).unwrap();
                assert!(dec.level <= depth);
                assert!(dec.distance <= h.max_cell_distance(dec.level, Norm::Euclidean) + 1e-12);
                hg_insert_supply(&mut tree, random_point(&mut rng, d)).unwrap();
                assert_eq!(u64::from(tree.root_count()), m);
            }
            tree.check_invariants().unwrap();
        }
    }

    proptest::proptest! {
        #[test]
        fn hg_sequences_keep_counts_consistent(
            d in 1usize..=3,
            depth in 0u32..=3,
            seed in 0u64..1000,
            supply in 1usize..40,
            ops in proptest::collection::vec(proptest::bool::ANY, 1..60),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let h = Hierarchy::new(d, depth).unwrap();
            let mut tree = SupplyTree::from_points(h.clone(), (0..supply).map(|_| random_point(&mut rng, d))).unwrap();
            let s = GammaSchedule::zero(d, depth);
            let mut held = supply;
            for insert in ops {
                if insert || held == 0 {
                    hg_insert_supply(&mut tree, random_point(&mut rng, d)).unwrap();
                    held += 1;
                } else {
                    let q = random_point(&mut rng, d);
                    let dec = hg_match(&mut tree, &s, &q, InLeafRule::Nearest, Norm::Euclidean).unwrap();
                    proptest::prop_assert_eq!(dec.level, h.match_level(dec.demand_leaf, dec.supply_leaf));
                    held -= 1;
                }
                proptest::prop_assert_eq!(tree.root_count() as usize, held);
            }
            proptest::prop_assert!(tree.check_invariants().is_ok());
        }
    }
}
