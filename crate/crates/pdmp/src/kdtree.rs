//! Nearest-neighbor index for tree planners: a k-d tree over a growing point
//! set, bulk-rebuilt every time the set doubles, with a linear-scan tail for
//! fresh insertions and a pure linear scan below 64 points.
//!
//! Distance ties are broken toward the lowest point index so planners stay
//! deterministic for a fixed sample stream.

const LINEAR_CUTOFF: usize = 64;

#[derive(Clone, Copy)]
struct Node {
    point: u32,
    left: i32,
    right: i32,
    axis: u8,
}

pub struct KdTree {
    dim: usize,
    pts: Vec<f64>,
    nodes: Vec<Node>,
    root: i32,
    built_len: usize,
}

impl KdTree {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 1);
        Self {
            dim,
            pts: Vec::new(),
            nodes: Vec::new(),
            root: -1,
            built_len: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.pts.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.pts.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.pts[i * self.dim..(i + 1) * self.dim]
    }

    /// Appends a point, returning its index. Triggers a bulk rebuild once
    /// the set has grown to twice the indexed prefix.
    pub fn insert(&mut self, p: &[f64]) -> usize {
        assert_eq!(p.len(), self.dim);
        let idx = self.len();
        self.pts.extend_from_slice(p);
        let n = self.len();
        if n >= LINEAR_CUTOFF && n >= 2 * self.built_len.max(LINEAR_CUTOFF / 2) {
            self.rebuild();
        }
        idx
    }

    fn rebuild(&mut self) {
        let n = self.len();
        self.nodes.clear();
        self.nodes.reserve(n);
        let mut order: Vec<u32> = (0..n as u32).collect();
        self.root = self.build_recursive(&mut order, 0);
        self.built_len = n;
    }

    fn build_recursive(&mut self, order: &mut [u32], depth: usize) -> i32 {
        if order.is_empty() {
            return -1;
        }
        let axis = depth % self.dim;
        let mid = order.len() / 2;
        // Total order on (coordinate, index) keeps the build deterministic.
        order.select_nth_unstable_by(mid, |&a, &b| {
            let ca = self.pts[a as usize * self.dim + axis];
            let cb = self.pts[b as usize * self.dim + axis];
            ca.partial_cmp(&cb).unwrap().then(a.cmp(&b))
        });
        let point = order[mid];
        let node_idx = self.nodes.len() as i32;
        self.nodes.push(Node {
            point,
            left: -1,
            right: -1,
            axis: axis as u8,
        });
        let (lo, rest) = order.split_at_mut(mid);
        let hi = &mut rest[1..];
        let left = self.build_recursive(lo, depth + 1);
        let right = self.build_recursive(hi, depth + 1);
        self.nodes[node_idx as usize].left = left;
        self.nodes[node_idx as usize].right = right;
        node_idx
    }

    #[inline]
    fn dist2(&self, i: usize, q: &[f64]) -> f64 {
        self.point(i)
            .iter()
            .zip(q)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    /// Index and squared distance of the closest point; ties go to the
    /// lowest index.
    pub fn nearest(&self, q: &[f64]) -> Option<(usize, f64)> {
        assert_eq!(q.len(), self.dim);
        if self.is_empty() {
            return None;
        }
        let mut best: (usize, f64) = (usize::MAX, f64::INFINITY);
        if self.root >= 0 {
            self.nearest_rec(self.root, q, &mut best);
        }
        for i in self.built_len..self.len() {
            consider(&mut best, i, self.dist2(i, q));
        }
        Some((best.0, best.1))
    }

    fn nearest_rec(&self, node: i32, q: &[f64], best: &mut (usize, f64)) {
        let n = self.nodes[node as usize];
        let pi = n.point as usize;
        consider(best, pi, self.dist2(pi, q));
        let axis = n.axis as usize;
        let delta = q[axis] - self.pts[pi * self.dim + axis];
        let (near, far) = if delta < 0.0 {
            (n.left, n.right)
        } else {
            (n.right, n.left)
        };
        if near >= 0 {
            self.nearest_rec(near, q, best);
        }
        // The far half-space can still hold an equal-distance, lower-index
        // point, so recurse on ties too.
        if far >= 0 && delta * delta <= best.1 {
            self.nearest_rec(far, q, best);
        }
    }

    /// Indices of all points within `radius` of `q`, ascending.
    pub fn within_radius(&self, q: &[f64], radius: f64, out: &mut Vec<usize>) {
        assert_eq!(q.len(), self.dim);
        out.clear();
        let r2 = radius * radius;
        if self.root >= 0 {
            self.radius_rec(self.root, q, r2, out);
        }
        for i in self.built_len..self.len() {
            if self.dist2(i, q) <= r2 {
                out.push(i);
            }
        }
        out.sort_unstable();
    }

    fn radius_rec(&self, node: i32, q: &[f64], r2: f64, out: &mut Vec<usize>) {
        let n = self.nodes[node as usize];
        let pi = n.point as usize;
        if self.dist2(pi, q) <= r2 {
            out.push(pi);
        }
        let axis = n.axis as usize;
        let delta = q[axis] - self.pts[pi * self.dim + axis];
        let (near, far) = if delta < 0.0 {
            (n.left, n.right)
        } else {
            (n.right, n.left)
        };
        if near >= 0 {
            self.radius_rec(near, q, r2, out);
        }
        if far >= 0 && delta * delta <= r2 {
            self.radius_rec(far, q, r2, out);
        }
    }
}

fn consider(best: &mut (usize, f64), idx: usize, d2: f64) {
    if d2 < best.1 || (d2 == best.1 && idx < best.0) {
        *best = (idx, d2);
    }
}
