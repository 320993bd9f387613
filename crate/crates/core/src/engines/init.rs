use rand::Rng;
use smallvec::SmallVec;

use crate::geometry::{Hierarchy, Point};

pub fn uniform_point<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Point {
    Point::from_unit((0..d).map(|_| rng.gen::<f64>()).collect())
}

pub fn uniform_points<R: Rng + ?Sized>(rng: &mut R, d: usize, count: u64) -> Vec<Point> {
    (0..count).map(|_| uniform_point(rng, d)).collect()
}

/// `m` points spread evenly over the hierarchy: every cell at every level
/// receives its share of `m` rounded up or down, and the points of a leaf
/// sit on a regular sub-lattice of that leaf.
pub fn even_points(h: &Hierarchy, m: u64) -> Vec<Point> {
    let depth = h.depth();
    let fanout = h.children_per_node() as u64;
    let mut shares = vec![m];
    for level in (1..=depth).rev() {
        let mut next = vec![0u64; h.cells_at(level - 1)];
        for (parent, &c) in shares.iter().enumerate() {
            let (base, rem) = (c / fanout, c % fanout);
            // Rotate which children get the remainder so that it does not
            // always pile up in the same corner.
            let offset = parent as u64 % fanout;
            for k in 0..fanout {
                let extra = u64::from((k + fanout - offset) % fanout < rem);
                next[h.child_linear(level, parent, k as usize)] = base + extra;
            }
        }
        shares = next;
    }

    let d = h.dim();
    let side = h.side(0);
    let mut out = Vec::with_capacity(m as usize);
    for (leaf, &c) in shares.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let (lo, _) = h.bounds(0, leaf);
        let per_axis = (c as f64).powf(1.0 / d as f64).ceil() as u64;
        let per_axis = if per_axis.pow(d as u32) < c { per_axis + 1 } else { per_axis };
        let slots = per_axis.pow(d as u32);
        for i in 0..c {
            let mut cell = i * slots / c;
            let coords: SmallVec<[f64; 4]> = lo
                .iter()
                .map(|&l| {
                    let k = cell % per_axis;
                    cell /= per_axis;
                    (l + (k as f64 + 0.5) / per_axis as f64 * side).min(1.0)
                })
                .collect();
            out.push(Point::from_unit(coords));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policies::SupplyTree;

    #[test]
    fn even_points_balance_every_level() {
        for (d, depth, m) in [(1usize, 3u32, 45u64), (2, 2, 64), (2, 3, 100), (3, 1, 17)] {
            let h = Hierarchy::new(d, depth).unwrap();
            let pts = even_points(&h, m);
            assert_eq!(pts.len() as u64, m);
            let tree = SupplyTree::from_points(h.clone(), pts).unwrap();
            for level in 0..=depth {
                let share = m as f64 / h.cells_at(level) as f64;
                for &c in tree.counts_at(level) {
                    assert!((f64::from(c) - share).abs() < 1.0, "d={d} level={level} c={c}");
                }
            }
        }
    }

    #[test]
    fn perfect_lattice_when_m_is_a_power() {
        let h = Hierarchy::new(2, 0).unwrap();
        let pts = even_points(&h, 16);
        let xs: Vec<f64> = pts.iter().map(|p| p.coords()[0]).take(4).collect();
        assert_eq!(xs, vec![0.125, 0.375, 0.625, 0.875]);
    }
}
