//! Exact nearest-neighbour search over belief vectors.
//!
//! Ties on distance resolve to the lowest point id, so queries agree with a
//! linear scan that keeps the first minimum.

#[derive(Debug, Clone)]
struct KdNode {
    point: usize,
    axis: usize,
    left: Option<usize>,
    right: Option<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct KdTree {
    dim: usize,
    coords: Vec<f64>,
    nodes: Vec<KdNode>,
    root: Option<usize>,
}

impl KdTree {
    /// Builds a tree over `count` points stored row-major in `coords`.
    pub fn build(dim: usize, coords: Vec<f64>) -> Self {
        assert!(dim > 0 && coords.len().is_multiple_of(dim));
        let count = coords.len() / dim;
        let mut tree = Self {
            dim,
            coords,
            nodes: Vec::with_capacity(count),
            root: None,
        };
        let mut ids: Vec<usize> = (0..count).collect();
        tree.root = tree.build_range(&mut ids);
        tree
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn coord(&self, point: usize, axis: usize) -> f64 {
        self.coords[point * self.dim + axis]
    }

    fn point(&self, point: usize) -> &[f64] {
        &self.coords[point * self.dim..(point + 1) * self.dim]
    }

    fn build_range(&mut self, ids: &mut [usize]) -> Option<usize> {
        if ids.is_empty() {
            return None;
        }
        let axis = self.widest_axis(ids);
        ids.sort_unstable_by(|&a, &b| {
            self.coord(a, axis)
                .total_cmp(&self.coord(b, axis))
                .then(a.cmp(&b))
        });
        let mid = ids.len() / 2;
        let point = ids[mid];
        let slot = self.nodes.len();
        self.nodes.push(KdNode {
            point,
            axis,
            left: None,
            right: None,
        });
        let (lower, rest) = ids.split_at_mut(mid);
        let left = self.build_range(lower);
        let right = self.build_range(&mut rest[1..]);
        self.nodes[slot].left = left;
        self.nodes[slot].right = right;
        Some(slot)
    }

    fn widest_axis(&self, ids: &[usize]) -> usize {
        (0..self.dim)
            .map(|axis| {
                let (lo, hi) = ids.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                    let v = self.coord(i, axis);
                    (lo.min(v), hi.max(v))
                });
                (axis, hi - lo)
            })
            .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best })
            .0
    }

    /// Returns `(point id, squared distance)` of the nearest point.
    pub fn nearest(&self, query: &[f64]) -> Option<(usize, f64)> {
        debug_assert_eq!(query.len(), self.dim);
        let mut best = (usize::MAX, f64::INFINITY);
        if let Some(root) = self.root {
            self.search(root, query, &mut best);
        }
        (best.0 != usize::MAX).then_some(best)
    }

    fn search(&self, slot: usize, query: &[f64], best: &mut (usize, f64)) {
        let node = &self.nodes[slot];
        let d: f64 = self
            .point(node.point)
            .iter()
            .zip(query)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        if d < best.1 || (d == best.1 && node.point < best.0) {
            *best = (node.point, d);
        }
        let diff = query[node.axis] - self.coord(node.point, node.axis);
        let (near, far) = if diff < 0.0 {
            (node.left, node.right)
        } else {
            (node.right, node.left)
        };
        if let Some(n) = near {
            self.search(n, query, best);
        }
        if let Some(f) = far {
            // equal-distance points on the far side may still carry a lower id
            if diff * diff <= best.1 {
                self.search(f, query, best);
            }
        }
    }
}
