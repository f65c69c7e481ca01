//! A static kd-tree over a flat point buffer with Euclidean or Chebyshev
//! queries. Points are owned by the caller; the tree stores a permutation.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Euclidean,
    Chebyshev,
}

impl Metric {
    /// Monotone surrogate of the distance: squared for Euclidean.
    #[inline]
    fn reduced(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum(),
            Metric::Chebyshev => a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs())),
        }
    }

    #[inline]
    fn to_reduced(self, r: f64) -> f64 {
        match self {
            Metric::Euclidean => r * r,
            Metric::Chebyshev => r,
        }
    }

    #[inline]
    fn from_reduced(self, r: f64) -> f64 {
        match self {
            Metric::Euclidean => r.sqrt(),
            Metric::Chebyshev => r,
        }
    }

    /// Reduced distances from `q` to the nearest and farthest points of a box.
    #[inline]
    fn box_bounds(self, q: &[f64], lo: &[f64], hi: &[f64]) -> (f64, f64) {
        let (mut near, mut far) = (0.0f64, 0.0f64);
        for ((&x, &l), &h) in q.iter().zip(lo).zip(hi) {
            let dn = if x < l {
                l - x
            } else if x > h {
                x - h
            } else {
                0.0
            };
            let df = (x - l).abs().max((h - x).abs());
            match self {
                Metric::Euclidean => {
                    near += dn * dn;
                    far += df * df;
                }
                Metric::Chebyshev => {
                    near = near.max(dn);
                    far = far.max(df);
                }
            }
        }
        (near, far)
    }
}

const LEAF_SIZE: usize = 16;

#[derive(Debug, Clone)]
struct Node {
    start: usize,
    end: usize,
    /// Children, `usize::MAX` for leaves.
    left: usize,
    right: usize,
}

#[derive(Debug, Clone)]
pub struct KdTree<'a> {
    d: usize,
    points: &'a [f64],
    perm: Vec<usize>,
    nodes: Vec<Node>,
    /// Per-node bounding boxes, `lo` then `hi`, `2 d` floats per node.
    boxes: Vec<f64>,
}

impl<'a> KdTree<'a> {
    pub fn new(points: &'a [f64], d: usize) -> Self {
        assert!(d > 0 && points.len() % d == 0);
        let n = points.len() / d;
        let mut tree = KdTree {
            d,
            points,
            perm: (0..n).collect(),
            nodes: Vec::new(),
            boxes: Vec::new(),
        };
        if n > 0 {
            tree.build(0, n);
        }
        tree
    }

    fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.d..(i + 1) * self.d]
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let d = self.d;
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for &i in &self.perm[start..end] {
            for (c, &v) in self.points[i * d..(i + 1) * d].iter().enumerate() {
                lo[c] = lo[c].min(v);
                hi[c] = hi[c].max(v);
            }
        }
        let id = self.nodes.len();
        self.nodes.push(Node {
            start,
            end,
            left: usize::MAX,
            right: usize::MAX,
        });
        self.boxes.extend_from_slice(&lo);
        self.boxes.extend_from_slice(&hi);
        if end - start <= LEAF_SIZE {
            return id;
        }
        let (dim, _) = (0..d)
            .map(|c| (c, hi[c] - lo[c]))
            .fold((0, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if hi[dim] == lo[dim] {
            return id;
        }
        let mid = start + (end - start) / 2;
        let pts = self.points;
        self.perm[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            pts[a * d + dim].total_cmp(&pts[b * d + dim]).then(a.cmp(&b))
        });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id].left = left;
        self.nodes[id].right = right;
        id
    }

    fn bbox(&self, node: usize) -> (&[f64], &[f64]) {
        let b = &self.boxes[node * 2 * self.d..(node + 1) * 2 * self.d];
        b.split_at(self.d)
    }

    /// Distance from point `i` to its `k`-th nearest other point.
    pub fn kth_neighbor_distance(&self, i: usize, k: usize, metric: Metric) -> f64 {
        let q = self.point(i).to_vec();
        // ascending list of the k best reduced distances
        let mut best: Vec<f64> = Vec::with_capacity(k + 1);
        self.knn_rec(0, &q, i, k, metric, &mut best);
        metric.from_reduced(best[k - 1])
    }

    fn knn_rec(&self, node: usize, q: &[f64], skip: usize, k: usize, metric: Metric, best: &mut Vec<f64>) {
        let nd = &self.nodes[node];
        if nd.left == usize::MAX {
            for &j in &self.perm[nd.start..nd.end] {
                if j == skip {
                    continue;
                }
                let r = metric.reduced(q, self.point(j));
                if best.len() < k || r < best[best.len() - 1] {
                    let pos = best.partition_point(|&b| b <= r);
                    best.insert(pos, r);
                    best.truncate(k);
                }
            }
            return;
        }
        let (l, r) = (nd.left, nd.right);
        let (ll, lh) = self.bbox(l);
        let (rl, rh) = self.bbox(r);
        let dl = metric.box_bounds(q, ll, lh).0;
        let dr = metric.box_bounds(q, rl, rh).0;
        let order = if dl <= dr { [(l, dl), (r, dr)] } else { [(r, dr), (l, dl)] };
        for (child, dist) in order {
            if best.len() < k || dist < best[best.len() - 1] {
                self.knn_rec(child, q, skip, k, metric, best);
            }
        }
    }

    /// Number of points strictly within `radius` of `q` (the query point itself
    /// is counted if it belongs to the set).
    pub fn count_within(&self, q: &[f64], radius: f64, metric: Metric) -> usize {
        let r = metric.to_reduced(radius);
        self.count_rec(0, q, r, metric)
    }

    fn count_rec(&self, node: usize, q: &[f64], r: f64, metric: Metric) -> usize {
        let nd = &self.nodes[node];
        let (lo, hi) = self.bbox(node);
        let (near, far) = metric.box_bounds(q, lo, hi);
        if near >= r {
            return 0;
        }
        if far < r {
            return nd.end - nd.start;
        }
        if nd.left == usize::MAX {
            return self.perm[nd.start..nd.end]
                .iter()
                .filter(|&&j| metric.reduced(q, self.point(j)) < r)
                .count();
        }
        self.count_rec(nd.left, q, r, metric) + self.count_rec(nd.right, q, r, metric)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;

    fn brute_kth(points: &[f64], d: usize, i: usize, k: usize, metric: Metric) -> f64 {
        let n = points.len() / d;
        let mut ds: Vec<f64> = (0..n)
            .filter(|&j| j != i)
            .map(|j| metric.from_reduced(metric.reduced(&points[i * d..(i + 1) * d], &points[j * d..(j + 1) * d])))
            .collect();
        ds.sort_by(f64::total_cmp);
        ds[k - 1]
    }

    #[test]
    fn matches_brute_force() {
        let mut s = RngStream::new(1, 0);
        for &d in &[1usize, 2, 5] {
            let pts: Vec<f64> = (0..600 * d).map(|_| s.standard_normal()).collect();
            let tree = KdTree::new(&pts, d);
            for metric in [Metric::Euclidean, Metric::Chebyshev] {
                for i in (0..600).step_by(37) {
                    for k in [1, 4] {
                        let a = tree.kth_neighbor_distance(i, k, metric);
                        let b = brute_kth(&pts, d, i, k, metric);
                        assert_eq!(a, b);
                    }
                    let q = &pts[i * d..(i + 1) * d];
                    let r = 0.7;
                    let want = (0..600)
                        .filter(|&j| metric.from_reduced(metric.reduced(q, &pts[j * d..(j + 1) * d])) < r)
                        .count();
                    assert_eq!(tree.count_within(q, r, metric), want);
                }
            }
        }
    }

    #[test]
    fn duplicate_points_do_not_recurse_forever() {
        let pts = vec![1.0; 200];
        let tree = KdTree::new(&pts, 2);
        assert_eq!(tree.kth_neighbor_distance(0, 3, Metric::Euclidean), 0.0);
    }
}
