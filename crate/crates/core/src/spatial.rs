//! Static 3-d tree for nearest-neighbour queries over point sets.

use nalgebra::Vector3;

#[derive(Debug, Clone)]
struct Node {
    point: usize,
    axis: u8,
    left: Option<u32>,
    right: Option<u32>,
}

#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Vector3<f64>>,
    nodes: Vec<Node>,
    root: Option<u32>,
}

impl KdTree {
    pub fn build(points: &[Vector3<f64>]) -> Self {
        let mut idx: Vec<usize> = (0..points.len()).collect();
        let mut nodes = Vec::with_capacity(points.len());
        let root = Self::build_rec(points, &mut idx, 0, &mut nodes);
        Self {
            points: points.to_vec(),
            nodes,
            root,
        }
    }

    fn build_rec(points: &[Vector3<f64>], idx: &mut [usize], depth: usize, nodes: &mut Vec<Node>) -> Option<u32> {
        if idx.is_empty() {
            return None;
        }
        // split on the widest axis of this subset
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for &i in idx.iter() {
            lo = lo.inf(&points[i]);
            hi = hi.sup(&points[i]);
        }
        let ext = hi - lo;
        let axis = if ext.x >= ext.y && ext.x >= ext.z {
            0
        } else if ext.y >= ext.z {
            1
        } else {
            2
        };
        let mid = idx.len() / 2;
        idx.select_nth_unstable_by(mid, |&a, &b| {
            points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b))
        });
        let id = nodes.len() as u32;
        nodes.push(Node {
            point: idx[mid],
            axis: axis as u8,
            left: None,
            right: None,
        });
        let (l, r) = idx.split_at_mut(mid);
        let left = Self::build_rec(points, l, depth + 1, nodes);
        let right = Self::build_rec(points, &mut r[1..], depth + 1, nodes);
        nodes[id as usize].left = left;
        nodes[id as usize].right = right;
        Some(id)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Nearest point as `(index, squared distance)`.
    pub fn nearest(&self, q: &Vector3<f64>) -> Option<(usize, f64)> {
        self.k_nearest(q, 1).into_iter().next()
    }

    /// Up to `k` nearest points sorted by increasing squared distance.
    pub fn k_nearest(&self, q: &Vector3<f64>, k: usize) -> Vec<(usize, f64)> {
        let mut best: Vec<(usize, f64)> = Vec::with_capacity(k + 1);
        if k == 0 {
            return best;
        }
        if let Some(root) = self.root {
            self.search(root, q, k, &mut best);
        }
        best
    }

    fn search(&self, node: u32, q: &Vector3<f64>, k: usize, best: &mut Vec<(usize, f64)>) {
        let n = &self.nodes[node as usize];
        let p = &self.points[n.point];
        let d2 = (p - q).norm_squared();
        if best.len() < k || d2 < best[best.len() - 1].1 {
            let pos = best.partition_point(|&(i, d)| d < d2 || (d == d2 && i < n.point));
            best.insert(pos, (n.point, d2));
            best.truncate(k);
        }
        let axis = n.axis as usize;
        let diff = q[axis] - p[axis];
        let (near, far) = if diff < 0.0 { (n.left, n.right) } else { (n.right, n.left) };
        if let Some(c) = near {
            self.search(c, q, k, best);
        }
        if let Some(c) = far {
            if best.len() < k || diff * diff < best[best.len() - 1].1 {
                self.search(c, q, k, best);
            }
        }
    }
}
