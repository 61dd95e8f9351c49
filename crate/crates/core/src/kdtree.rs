//! Static 2-d tree for exact k-nearest-neighbor queries.
//!
//! Results are ordered by `(distance, index)`, so equal distances resolve to
//! the lower index, and match an exhaustive scan exactly.

use std::cmp::Ordering;

const LEAF_SIZE: usize = 8;

/// Euclidean distance in the plane, computed the same way everywhere so
/// that tie-breaking is consistent between tree and scan.
#[inline]
pub fn planar_distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    let de = a[0] - b[0];
    let dp = a[1] - b[1];
    (de * de + dp * dp).sqrt()
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<[f64; 2]>,
    ids: Vec<usize>,
    nodes: Vec<Node>,
}

fn cmp_key(a: (f64, usize), b: (f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

impl KdTree {
    /// Build over `(id, point)` pairs.
    pub fn new(items: &[(usize, [f64; 2])]) -> Self {
        let mut order: Vec<(usize, [f64; 2])> = items.to_vec();
        let mut nodes = Vec::new();
        if !order.is_empty() {
            let len = order.len();
            build(&mut order, 0, len, &mut nodes);
        }
        KdTree {
            ids: order.iter().map(|(i, _)| *i).collect(),
            points: order.iter().map(|(_, p)| *p).collect(),
            nodes,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// The `k` nearest stored points to `q` as `(id, distance)`, sorted by
    /// distance then id.
    pub fn nearest(&self, q: [f64; 2], k: usize) -> Vec<(usize, f64)> {
        let k = k.min(self.len());
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        if k > 0 {
            self.search(0, q, k, &mut best);
        }
        best.into_iter().map(|(d, i)| (i, d)).collect()
    }

    fn search(&self, node: usize, q: [f64; 2], k: usize, best: &mut Vec<(f64, usize)>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for s in start..end {
                    let cand = (planar_distance(q, self.points[s]), self.ids[s]);
                    if best.len() == k && cmp_key(cand, best[k - 1]) != Ordering::Less {
                        continue;
                    }
                    let pos = best.partition_point(|b| cmp_key(*b, cand) == Ordering::Less);
                    best.insert(pos, cand);
                    best.truncate(k);
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, k, best);
                // ties at the boundary must still be visited, so compare inclusively
                // with a little slack for rounding in the distance
                let worst = if best.len() < k { f64::INFINITY } else { best[k - 1].0 };
                if diff.abs() <= worst * (1.0 + 1e-12) {
                    self.search(far, q, k, best);
                }
            }
        }
    }
}

fn build(items: &mut [(usize, [f64; 2])], start: usize, end: usize, nodes: &mut Vec<Node>) -> usize {
    let id = nodes.len();
    if end - start <= LEAF_SIZE {
        nodes.push(Node::Leaf { start, end });
        return id;
    }
    let slice = &mut items[start..end];
    let spread = |a: usize| {
        let (lo, hi) = slice
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, p)| (lo.min(p[a]), hi.max(p[a])));
        hi - lo
    };
    let axis = if spread(1) > spread(0) { 1 } else { 0 };
    let mid = slice.len() / 2;
    slice.select_nth_unstable_by(mid, |a, b| a.1[axis].total_cmp(&b.1[axis]));
    let value = slice[mid].1[axis];
    // points equal to the split value may sit on either side; the
    // inclusive pruning test above accounts for that
    nodes.push(Node::Leaf { start: 0, end: 0 });
    let left = build(items, start, start + mid, nodes);
    let right = build(items, start + mid, end, nodes);
    nodes[id] = Node::Split { axis, value, left, right };
    id
}
