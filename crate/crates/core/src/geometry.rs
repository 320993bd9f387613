//! Dyadic hypercube hierarchy over the unit cube `[0,1]^d`.
//!
//! Level 0 holds the leaves (finest cells), level `depth` holds the single
//! root cell. A cell at level `l` is identified by one integer per axis in
//! `[0, 2^(depth - l))`, so the ancestor of a leaf at level `l` is a plain
//! right shift of every axis index by `l` bits.

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};

/// Default upper bound on the number of hierarchy nodes.
pub const DEFAULT_NODE_CAP: u64 = 1 << 26;

/// A location in the unit hypercube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point {
    coords: SmallVec<[f64; 4]>,
}

impl Point {
    /// Builds a point, rejecting coordinates outside `[0,1]` (and NaN).
    pub fn new(coords: impl Into<SmallVec<[f64; 4]>>) -> Result<Self> {
        let coords = coords.into();
        if coords.is_empty() {
            return Err(Error::InvalidDimension(0));
        }
        if let Some((axis, &c)) = coords
            .iter()
            .enumerate()
            .find(|(_, c)| !(0.0..=1.0).contains(*c))
        {
            return Err(Error::CoordinateOutOfRange { axis, value: c });
        }
        Ok(Point { coords })
    }

    /// Builds a point without range checks; callers guarantee `[0,1]^d`.
    pub(crate) fn from_unit(coords: SmallVec<[f64; 4]>) -> Self {
        debug_assert!(coords.iter().all(|c| (0.0..=1.0).contains(c)));
        Point { coords }
    }

    pub fn on_line(x: f64) -> Result<Self> {
        Point::new(SmallVec::from_slice(&[x]))
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }
}

/// Norm used to measure match distances.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Norm {
    #[default]
    Euclidean,
    L1,
    LInf,
}

impl Norm {
    /// Norm of a difference vector given by its components.
    #[inline]
    pub fn of_components(self, diffs: impl Iterator<Item = f64>) -> f64 {
        match self {
            Norm::Euclidean => diffs.map(|x| x * x).sum::<f64>().sqrt(),
            Norm::L1 => diffs.map(f64::abs).sum(),
            Norm::LInf => diffs.map(f64::abs).fold(0.0, f64::max),
        }
    }

    /// Norm of the all-ones vector in dimension `d` (diameter of the unit cube).
    pub fn unit_diameter(self, d: usize) -> f64 {
        match self {
            Norm::Euclidean => (d as f64).sqrt(),
            Norm::L1 => d as f64,
            Norm::LInf => 1.0,
        }
    }
}

impl std::str::FromStr for Norm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" | "l2" => Ok(Norm::Euclidean),
            "l1" => Ok(Norm::L1),
            "linf" | "l_inf" => Ok(Norm::LInf),
            other => Err(Error::Config(format!("unknown norm `{other}`"))),
        }
    }
}

/// Distance between two points under `norm`.
pub fn distance(a: &Point, b: &Point, norm: Norm) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    Ok(distance_unchecked(a, b, norm))
}

#[inline]
pub(crate) fn distance_unchecked(a: &Point, b: &Point, norm: Norm) -> f64 {
    norm.of_components(a.coords.iter().zip(&b.coords).map(|(x, y)| x - y))
}

/// A cell of the hierarchy: its level and per-axis integer coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HypercubeId {
    pub level: u32,
    pub index: SmallVec<[u32; 4]>,
}

/// The `2^d`-ary tree of nested dyadic partitions of the unit cube.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hierarchy {
    dim: usize,
    depth: u32,
}

impl Hierarchy {
    pub fn new(dim: usize, depth: u32) -> Result<Self> {
        Hierarchy::with_node_cap(dim, depth, DEFAULT_NODE_CAP)
    }

    pub fn with_node_cap(dim: usize, depth: u32, node_cap: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension(dim));
        }
        // Leaf counts beyond 2^62 cannot be represented; treat as over cap.
        let bits = dim as u64 * depth as u64;
        if bits > 62 || depth >= 32 {
            return Err(Error::HierarchyTooLarge {
                nodes: u64::MAX,
                cap: node_cap,
            });
        }
        let h = Hierarchy { dim, depth };
        let nodes = h.node_count();
        if nodes > node_cap {
            return Err(Error::HierarchyTooLarge {
                nodes,
                cap: node_cap,
            });
        }
        Ok(h)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The root level, `ℓ0` in the usual notation.
    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn children_per_node(&self) -> usize {
        1 << self.dim
    }

    /// Cells per axis at `level`.
    #[inline]
    pub fn cells_per_axis(&self, level: u32) -> u32 {
        1 << (self.depth - level)
    }

    /// Number of cells at `level`.
    #[inline]
    pub fn cells_at(&self, level: u32) -> usize {
        1usize << ((self.depth - level) as usize * self.dim)
    }

    pub fn leaf_count(&self) -> usize {
        self.cells_at(0)
    }

    pub fn node_count(&self) -> u64 {
        (0..=self.depth).map(|l| self.cells_at(l) as u64).sum()
    }

    /// Side length of a cell at `level`.
    pub fn side(&self, level: u32) -> f64 {
        (-(f64::from(self.depth - level))).exp2()
    }

    /// Largest distance between two points of one cell at `level`.
    pub fn max_cell_distance(&self, level: u32, norm: Norm) -> f64 {
        norm.unit_diameter(self.dim) * self.side(level)
    }

    /// Leaf cell containing `p`. Cells are half-open except the last one
    /// along each axis, which also takes coordinate 1.0.
    pub fn leaf_of(&self, p: &Point) -> Result<HypercubeId> {
        self.check_dim(p)?;
        if let Some((axis, &c)) = p
            .coords()
            .iter()
            .enumerate()
            .find(|(_, c)| !(0.0..=1.0).contains(*c))
        {
            return Err(Error::CoordinateOutOfRange { axis, value: c });
        }
        let mut index = SmallVec::new();
        self.leaf_axes_into(p, &mut index);
        Ok(HypercubeId { level: 0, index })
    }

    #[inline]
    pub(crate) fn leaf_axes_into(&self, p: &Point, out: &mut SmallVec<[u32; 4]>) {
        let k = self.cells_per_axis(0);
        let kf = f64::from(k);
        out.clear();
        out.extend(
            p.coords()
                .iter()
                .map(|&c| ((c * kf) as u32).min(k - 1)),
        );
    }

    /// Level-`level` ancestor of a leaf. `ancestor_of(leaf, 0) == leaf`.
    pub fn ancestor_of(&self, leaf: &HypercubeId, level: u32) -> Result<HypercubeId> {
        if leaf.level != 0 {
            return Err(Error::NotALeaf(leaf.level));
        }
        self.check_id(leaf)?;
        if level > self.depth {
            return Err(Error::LevelOutOfRange {
                level,
                depth: self.depth,
            });
        }
        Ok(HypercubeId {
            level,
            index: leaf.index.iter().map(|i| i >> level).collect(),
        })
    }

    /// Dense index of a cell within its level (axis 0 varies fastest).
    #[inline]
    pub fn linear(&self, level: u32, axes: &[u32]) -> usize {
        let shift = (self.depth - level) as usize;
        axes.iter()
            .rev()
            .fold(0usize, |acc, &i| (acc << shift) | i as usize)
    }

    /// Inverse of [`Hierarchy::linear`].
    pub fn axes_of(&self, level: u32, mut linear: usize) -> SmallVec<[u32; 4]> {
        let shift = (self.depth - level) as usize;
        let mask = (1usize << shift) - 1;
        (0..self.dim)
            .map(|_| {
                let i = (linear & mask) as u32;
                linear >>= shift;
                i
            })
            .collect()
    }

    pub fn id_linear(&self, id: &HypercubeId) -> usize {
        self.linear(id.level, &id.index)
    }

    /// Dense index of the level-`level` ancestor of a leaf given by its
    /// dense index.
    #[inline]
    pub fn ancestor_linear(&self, leaf_linear: usize, level: u32) -> usize {
        if level == 0 {
            return leaf_linear;
        }
        let leaf_shift = self.depth as usize;
        let shift = (self.depth - level) as usize;
        let leaf_mask = (1usize << leaf_shift) - 1;
        let mut out = 0usize;
        for axis in 0..self.dim {
            let i = (leaf_linear >> (axis * leaf_shift)) & leaf_mask;
            out |= (i >> level) << (axis * shift);
        }
        out
    }

    /// Dense index at `level - 1` of child `child` (bit `a` selects the
    /// upper half along axis `a`) of the cell with dense index `parent`.
    #[inline]
    pub fn child_linear(&self, level: u32, parent: usize, child: usize) -> usize {
        debug_assert!(level >= 1);
        let pshift = (self.depth - level) as usize;
        let cshift = pshift + 1;
        let pmask = (1usize << pshift) - 1;
        let mut out = 0usize;
        for axis in 0..self.dim {
            let i = (parent >> (axis * pshift)) & pmask;
            let bit = (child >> axis) & 1;
            out |= ((i << 1) | bit) << (axis * cshift);
        }
        out
    }

    /// Lower corner and upper corner of a cell.
    pub fn bounds(&self, level: u32, linear: usize) -> (SmallVec<[f64; 4]>, SmallVec<[f64; 4]>) {
        let side = self.side(level);
        let axes = self.axes_of(level, linear);
        let lo = axes.iter().map(|&i| f64::from(i) * side).collect();
        let hi = axes.iter().map(|&i| f64::from(i + 1) * side).collect();
        (lo, hi)
    }

    /// Lower bound on the distance from `p` to any point of a cell.
    pub fn distance_to_cell(&self, p: &Point, level: u32, linear: usize, norm: Norm) -> f64 {
        let side = self.side(level);
        let axes = self.axes_of(level, linear);
        norm.of_components(p.coords().iter().zip(axes.iter()).map(|(&x, &i)| {
            let lo = f64::from(i) * side;
            let hi = lo + side;
            if x < lo {
                lo - x
            } else if x > hi {
                x - hi
            } else {
                0.0
            }
        }))
    }

    /// Lowest level at which two leaves share an ancestor.
    pub fn match_level(&self, leaf_a: usize, leaf_b: usize) -> u32 {
        (0..=self.depth)
            .find(|&l| self.ancestor_linear(leaf_a, l) == self.ancestor_linear(leaf_b, l))
            .unwrap_or(self.depth)
    }

    fn check_dim(&self, p: &Point) -> Result<()> {
        if p.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: p.dim(),
            });
        }
        Ok(())
    }

    fn check_id(&self, id: &HypercubeId) -> Result<()> {
        if id.index.len() != self.dim || id.level > self.depth {
            return Err(Error::InvalidCell);
        }
        let k = self.cells_per_axis(id.level);
        if id.index.iter().any(|&i| i >= k) {
            return Err(Error::InvalidCell);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use smallvec::smallvec;

    fn pt(c: &[f64]) -> Point {
        Point::new(SmallVec::from_slice(c)).unwrap()
    }

    fn id(level: u32, index: &[u32]) -> HypercubeId {
        HypercubeId {
            level,
            index: SmallVec::from_slice(index),
        }
    }

    #[test]
    fn build_sizes() {
        let h = Hierarchy::new(2, 1).unwrap();
        assert_eq!(h.leaf_count(), 4);
        assert_eq!(h.cells_at(1), 1);
        assert_eq!(h.node_count(), 5);

        let h = Hierarchy::new(1, 3).unwrap();
        let sizes: Vec<_> = (0..=3).map(|l| h.cells_at(l)).collect();
        assert_eq!(sizes, vec![8, 4, 2, 1]);

        let h = Hierarchy::new(3, 2).unwrap();
        assert_eq!(h.leaf_count(), 64);
        assert_eq!(h.side(0), 0.25);
        assert_eq!(h.node_count(), 64 + 8 + 1);
    }

    #[test]
    fn build_rejects_bad_input() {
        assert!(matches!(Hierarchy::new(0, 2), Err(Error::InvalidDimension(0))));
        assert!(matches!(
            Hierarchy::with_node_cap(3, 4, 1000),
            Err(Error::HierarchyTooLarge { .. })
        ));
    }

    #[test]
    fn leaf_of_examples() {
        let h = Hierarchy::new(1, 2).unwrap();
        assert_eq!(h.leaf_of(&pt(&[0.30])).unwrap(), id(0, &[1]));
        assert_eq!(h.leaf_of(&pt(&[1.0])).unwrap(), id(0, &[3]));
        let h = Hierarchy::new(2, 1).unwrap();
        assert_eq!(h.leaf_of(&pt(&[0.9, 0.1])).unwrap(), id(0, &[1, 0]));
    }

    #[test]
    fn leaf_of_rejects_outside() {
        let h = Hierarchy::new(1, 2).unwrap();
        let bad = Point::from_unit(smallvec![0.5]);
        let mut bad = bad;
        bad.coords[0] = 1.5;
        assert!(matches!(
            h.leaf_of(&bad),
            Err(Error::CoordinateOutOfRange { axis: 0, .. })
        ));
        assert!(Point::new(smallvec![-0.1]).is_err());
        assert!(Point::new(smallvec![f64::NAN]).is_err());
    }

    #[test]
    fn ancestor_examples() {
        let h = Hierarchy::new(1, 3).unwrap();
        assert_eq!(h.ancestor_of(&id(0, &[5]), 1).unwrap(), id(1, &[2]));
        let h = Hierarchy::new(2, 2).unwrap();
        assert_eq!(h.ancestor_of(&id(0, &[3, 1]), 2).unwrap(), id(2, &[0, 0]));
        assert_eq!(h.ancestor_of(&id(0, &[3, 1]), 1).unwrap(), id(1, &[1, 0]));
        assert_eq!(h.ancestor_of(&id(0, &[3, 1]), 0).unwrap(), id(0, &[3, 1]));
        assert!(matches!(
            h.ancestor_of(&id(0, &[3, 1]), 3),
            Err(Error::LevelOutOfRange { .. })
        ));
    }

    #[test]
    fn distance_examples() {
        let d = distance(&pt(&[0.0, 0.0]), &pt(&[0.6, 0.8]), Norm::Euclidean).unwrap();
        assert!((d - 1.0).abs() < 1e-15);
        let d = distance(&pt(&[0.2]), &pt(&[0.7]), Norm::Euclidean).unwrap();
        assert!((d - 0.5).abs() < 1e-15);
        let d = distance(&pt(&[0.0, 0.0]), &pt(&[0.3, 0.4]), Norm::L1).unwrap();
        assert!((d - 0.7).abs() < 1e-15);
        let d = distance(&pt(&[0.0, 0.0]), &pt(&[0.3, 0.4]), Norm::LInf).unwrap();
        assert!((d - 0.4).abs() < 1e-15);
        assert!(matches!(
            distance(&pt(&[0.0]), &pt(&[0.3, 0.4]), Norm::L1),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn leaf_of_is_a_partition() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for &(d, depth) in &[(1usize, 5u32), (2, 3), (3, 2)] {
            let h = Hierarchy::new(d, depth).unwrap();
            for _ in 0..100_000 / 3 {
                let p = Point::from_unit((0..d).map(|_| rng.gen::<f64>()).collect());
                let leaf = h.leaf_of(&p).unwrap();
                let lin = h.id_linear(&leaf);
                let (lo, hi) = h.bounds(0, lin);
                for a in 0..d {
                    assert!(lo[a] <= p.coords()[a] && p.coords()[a] < hi[a]);
                }
                // No other leaf claims the point under the half-open rule.
                let claims = (0..h.leaf_count())
                    .filter(|&other| {
                        let (lo, hi) = h.bounds(0, other);
                        (0..d).all(|a| {
                            let c = p.coords()[a];
                            lo[a] <= c && (c < hi[a] || (hi[a] == 1.0 && c == 1.0))
                        })
                    })
                    .count();
                if d * depth as usize <= 6 {
                    assert_eq!(claims, 1);
                }
            }
        }
    }

    #[test]
    fn max_cell_distance_matches_corners() {
        let h = Hierarchy::new(3, 2).unwrap();
        let (lo, hi) = h.bounds(1, 5);
        let far = distance(&pt(&lo), &pt(&hi), Norm::Euclidean).unwrap();
        assert!((far - h.max_cell_distance(1, Norm::Euclidean)).abs() < 1e-12);
        assert!((h.max_cell_distance(1, Norm::Euclidean) - 3f64.sqrt() * 0.5).abs() < 1e-12);
    }

    #[test]
    fn linear_roundtrip_and_children() {
        let h = Hierarchy::new(2, 3).unwrap();
        for level in 0..=3 {
            for lin in 0..h.cells_at(level) {
                assert_eq!(h.linear(level, &h.axes_of(level, lin)), lin);
            }
        }
        // Every child of a level-2 cell has that cell as its level-2 ancestor.
        for parent in 0..h.cells_at(2) {
            for c in 0..4 {
                let child = h.child_linear(2, parent, c);
                let axes = h.axes_of(1, child);
                let leaf = h.linear(0, &axes.iter().map(|i| i << 1).collect::<Vec<_>>());
                assert_eq!(h.ancestor_linear(leaf, 2), parent);
                assert_eq!(h.ancestor_linear(leaf, 1), child);
            }
        }
    }

    proptest! {
        #[test]
        fn ancestors_compose(d in 1usize..4, depth in 0u32..6, seed in any::<u64>(), l1 in 0u32..6, l2 in 0u32..6) {
            let depth = depth.min(if d == 3 { 4 } else { 5 });
            let h = Hierarchy::new(d, depth).unwrap();
            let (lo, hi) = (l1.min(l2).min(depth), l1.max(l2).min(depth));
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let p = Point::from_unit((0..d).map(|_| rng.gen::<f64>()).collect());
            let leaf = h.leaf_of(&p).unwrap();
            let direct = h.ancestor_of(&leaf, hi).unwrap();
            let mid = h.ancestor_of(&leaf, lo).unwrap();
            let via: SmallVec<[u32; 4]> = mid.index.iter().map(|i| i >> (hi - lo)).collect();
            prop_assert_eq!(&direct.index, &via);
            let lin = h.id_linear(&leaf);
            prop_assert_eq!(h.ancestor_linear(lin, hi), h.id_linear(&direct));
        }
    }
}
