use crate::error::{Error, Result};
use crate::geometry::{Hierarchy, Point};

/// Supply counts for every cell of a hierarchy plus the supply points held
/// by each leaf.
#[derive(Debug, Clone)]
pub struct SupplyTree {
    hierarchy: Hierarchy,
    counts: Vec<Vec<u32>>,
    leaf_points: Vec<Vec<Point>>,
}

impl SupplyTree {
    pub fn new(hierarchy: Hierarchy) -> Self {
        let counts = (0..=hierarchy.depth())
            .map(|l| vec![0; hierarchy.cells_at(l)])
            .collect();
        let leaf_points = vec![Vec::new(); hierarchy.leaf_count()];
        SupplyTree {
            hierarchy,
            counts,
            leaf_points,
        }
    }

    pub fn from_points(hierarchy: Hierarchy, points: impl IntoIterator<Item = Point>) -> Result<Self> {
        let mut tree = SupplyTree::new(hierarchy);
        for p in points {
            tree.insert(p)?;
        }
        Ok(tree)
    }

    pub fn hierarchy(&self) -> &Hierarchy {
        &self.hierarchy
    }

    #[inline]
    pub fn count(&self, level: u32, linear: usize) -> u32 {
        self.counts[level as usize][linear]
    }

    pub fn counts_at(&self, level: u32) -> &[u32] {
        &self.counts[level as usize]
    }

    pub fn root_count(&self) -> u32 {
        self.counts[self.hierarchy.depth() as usize][0]
    }

    pub fn leaf_points(&self, leaf: usize) -> &[Point] {
        &self.leaf_points[leaf]
    }

    /// All supply points, leaf by leaf.
    pub fn points(&self) -> impl Iterator<Item = &Point> {
        self.leaf_points.iter().flatten()
    }

    /// Dense index of the leaf containing `p`.
    pub fn leaf_linear(&self, p: &Point) -> Result<usize> {
        let id = self.hierarchy.leaf_of(p)?;
        Ok(self.hierarchy.id_linear(&id))
    }

    /// Adds a supply point and increments its leaf and all ancestors.
    /// Returns the leaf index.
    pub fn insert(&mut self, p: Point) -> Result<usize> {
        let leaf = self.leaf_linear(&p)?;
        self.insert_at(leaf, p);
        Ok(leaf)
    }

    pub(crate) fn insert_at(&mut self, leaf: usize, p: Point) {
        self.leaf_points[leaf].push(p);
        for level in 0..=self.hierarchy.depth() {
            let a = self.hierarchy.ancestor_linear(leaf, level);
            self.counts[level as usize][a] += 1;
        }
    }

    /// Removes the point at `slot` of `leaf` and decrements the path to the root.
    pub(crate) fn remove_at(&mut self, leaf: usize, slot: usize) -> Point {
        let p = self.leaf_points[leaf].swap_remove(slot);
        for level in 0..=self.hierarchy.depth() {
            let a = self.hierarchy.ancestor_linear(leaf, level);
            self.counts[level as usize][a] -= 1;
        }
        p
    }

    /// Checks the count invariants: leaf counts equal list lengths and
    /// every parent equals the sum of its children.
    pub fn check_invariants(&self) -> Result<()> {
        let h = &self.hierarchy;
        for (leaf, pts) in self.leaf_points.iter().enumerate() {
            if self.counts[0][leaf] as usize != pts.len() {
                return Err(Error::Config(format!(
                    "leaf {leaf} count {} != {} points",
                    self.counts[0][leaf],
                    pts.len()
                )));
            }
        }
        for level in 1..=h.depth() {
            for parent in 0..h.cells_at(level) {
                let sum: u32 = (0..h.children_per_node())
                    .map(|c| self.counts[level as usize - 1][h.child_linear(level, parent, c)])
                    .sum();
                if sum != self.counts[level as usize][parent] {
                    return Err(Error::Config(format!(
                        "cell {parent} at level {level}: count {} != children sum {sum}",
                        self.counts[level as usize][parent]
                    )));
                }
            }
        }
        Ok(())
    }
}
