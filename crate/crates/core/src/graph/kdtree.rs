use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::points::PointCloud;

const LEAF_SIZE: usize = 8;

enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// Static KD-tree over a [`PointCloud`] for exact neighbor queries.
pub(crate) struct KdTree<'a> {
    points: &'a PointCloud,
    perm: Vec<usize>,
    nodes: Vec<Node>,
}

/// Candidate ordered by (squared distance, index), the tie-breaking rule
/// shared with the brute-force search.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Candidate {
    pub d2: f64,
    pub idx: usize,
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
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2.total_cmp(&other.d2).then(self.idx.cmp(&other.idx))
    }
}

impl<'a> KdTree<'a> {
    pub fn build(points: &'a PointCloud) -> Self {
        let mut tree = KdTree { points, perm: (0..points.len()).collect(), nodes: Vec::new() };
        let n = points.len();
        tree.build_range(0, n);
        tree
    }

    fn build_range(&mut self, start: usize, end: usize) -> usize {
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return self.nodes.len() - 1;
        }
        let d = self.points.dim();
        let axis = (0..d)
            .max_by(|&a, &b| self.spread(start, end, a).total_cmp(&self.spread(start, end, b)))
            .unwrap_or(0);
        let mid = start + (end - start) / 2;
        let pts = self.points;
        self.perm[start..end].select_nth_unstable_by(mid - start, |&i, &j| {
            pts.point(i)[axis].total_cmp(&pts.point(j)[axis]).then(i.cmp(&j))
        });
        let value = pts.point(self.perm[mid])[axis];
        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build_range(start, mid);
        let right = self.build_range(mid, end);
        self.nodes[slot] = Node::Split { axis, value, left, right };
        slot
    }

    fn spread(&self, start: usize, end: usize, axis: usize) -> f64 {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &i in &self.perm[start..end] {
            let x = self.points.point(i)[axis];
            lo = lo.min(x);
            hi = hi.max(x);
        }
        hi - lo
    }

    /// The `k` nearest other points to `query`, ascending by (distance, index).
    pub fn knn(&self, query: usize, k: usize) -> Vec<usize> {
        let mut heap = BinaryHeap::with_capacity(k + 1);
        if k > 0 {
            self.knn_visit(0, query, k, &mut heap);
        }
        let mut out = heap.into_sorted_vec();
        out.truncate(k);
        out.into_iter().map(|c| c.idx).collect()
    }

    fn knn_visit(&self, node: usize, query: usize, k: usize, heap: &mut BinaryHeap<Candidate>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &j in &self.perm[start..end] {
                    if j == query {
                        continue;
                    }
                    let c = Candidate { d2: self.points.dist2(query, j), idx: j };
                    if heap.len() < k {
                        heap.push(c);
                    } else if c < *heap.peek().expect("non-empty") {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = self.points.point(query)[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.knn_visit(near, query, k, heap);
                // `<=` keeps equal-distance candidates with smaller indices reachable.
                if heap.len() < k || diff * diff <= heap.peek().expect("non-empty").d2 {
                    self.knn_visit(far, query, k, heap);
                }
            }
        }
    }

    /// Every other point within squared radius `r2` (inclusive), ascending by index.
    pub fn within(&self, query: usize, r2: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.within_visit(0, query, r2, &mut out);
        out.sort_unstable();
        out
    }

    fn within_visit(&self, node: usize, query: usize, r2: f64, out: &mut Vec<usize>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &j in &self.perm[start..end] {
                    if j != query && self.points.dist2(query, j) <= r2 {
                        out.push(j);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = self.points.point(query)[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.within_visit(near, query, r2, out);
                if diff * diff <= r2 {
                    self.within_visit(far, query, r2, out);
                }
            }
        }
    }
}
