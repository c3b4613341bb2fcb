//! Bounding volume hierarchy over mesh triangles.
//!
//! Nodes are stored depth-first: the left child of an interior node is the
//! next node, the right child index is stored explicitly. Closest-hit queries
//! order candidates lexicographically by `(t, triangle index)`, the same order
//! an exhaustive scan produces.

use nalgebra::{Point3, Vector3};

const LEAF_SIZE: usize = 4;
/// Slack added to node bounds so slab tests never reject a touching ray.
const BOX_PAD: f64 = 1e-9;

#[derive(Debug, Clone, Copy)]
struct Aabb {
    min: [f64; 3],
    max: [f64; 3],
}

impl Aabb {
    fn empty() -> Self {
        Self {
            min: [f64::INFINITY; 3],
            max: [f64::NEG_INFINITY; 3],
        }
    }

    fn grow(&mut self, p: &Point3<f64>) {
        for a in 0..3 {
            self.min[a] = self.min[a].min(p[a]);
            self.max[a] = self.max[a].max(p[a]);
        }
    }

    fn merge(&mut self, o: &Aabb) {
        for a in 0..3 {
            self.min[a] = self.min[a].min(o.min[a]);
            self.max[a] = self.max[a].max(o.max[a]);
        }
    }

    fn padded(mut self) -> Self {
        for a in 0..3 {
            let pad = BOX_PAD * (1.0 + self.min[a].abs().max(self.max[a].abs()));
            self.min[a] -= pad;
            self.max[a] += pad;
        }
        self
    }

    /// Entry distance of the ray into the box, if it intersects at all.
    fn entry(&self, origin: &Point3<f64>, inv_dir: &Vector3<f64>) -> Option<f64> {
        let mut t0 = f64::NEG_INFINITY;
        let mut t1 = f64::INFINITY;
        for a in 0..3 {
            let inv = inv_dir[a];
            let (lo, hi) = if inv.is_infinite() {
                // axis-parallel: inside the slab or never
                if origin[a] < self.min[a] || origin[a] > self.max[a] {
                    return None;
                }
                (f64::NEG_INFINITY, f64::INFINITY)
            } else {
                let a0 = (self.min[a] - origin[a]) * inv;
                let a1 = (self.max[a] - origin[a]) * inv;
                (a0.min(a1), a0.max(a1))
            };
            t0 = t0.max(lo);
            t1 = t1.min(hi);
            if t0 > t1 {
                return None;
            }
        }
        (t1 >= 0.0).then_some(t0.max(0.0))
    }
}

#[derive(Debug, Clone)]
struct Node {
    bounds: Aabb,
    /// Leaf: first slot in `order`. Interior: index of the right child.
    index: u32,
    /// Triangle count for leaves, zero for interior nodes.
    count: u32,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct Bvh {
    nodes: Vec<Node>,
    order: Vec<u32>,
}

struct Item {
    bounds: Aabb,
    centroid: [f64; 3],
    index: u32,
}

impl Bvh {
    pub(crate) fn build(vertices: &[Point3<f64>], triangles: &[[u32; 3]]) -> Self {
        if triangles.is_empty() {
            return Self::default();
        }
        let mut items: Vec<Item> = triangles
            .iter()
            .enumerate()
            .map(|(i, tri)| {
                let mut bounds = Aabb::empty();
                let mut centroid = [0.0; 3];
                for &v in tri {
                    let p = &vertices[v as usize];
                    bounds.grow(p);
                    for a in 0..3 {
                        centroid[a] += p[a] / 3.0;
                    }
                }
                Item {
                    bounds,
                    centroid,
                    index: i as u32,
                }
            })
            .collect();
        let mut bvh = Self {
            nodes: Vec::with_capacity(2 * triangles.len() / LEAF_SIZE + 1),
            order: Vec::with_capacity(triangles.len()),
        };
        bvh.build_node(&mut items);
        bvh
    }

    fn build_node(&mut self, items: &mut [Item]) -> usize {
        let mut bounds = Aabb::empty();
        let mut cbounds = Aabb::empty();
        for it in items.iter() {
            bounds.merge(&it.bounds);
            cbounds.grow(&Point3::from(it.centroid));
        }
        let node = self.nodes.len();
        self.nodes.push(Node {
            bounds: bounds.padded(),
            index: 0,
            count: 0,
        });

        let extent: Vec<f64> = (0..3).map(|a| cbounds.max[a] - cbounds.min[a]).collect();
        let axis = (0..3)
            .max_by(|&a, &b| extent[a].total_cmp(&extent[b]))
            .unwrap_or(0);
        if items.len() <= LEAF_SIZE || extent[axis] <= 0.0 {
            self.nodes[node].index = self.order.len() as u32;
            self.nodes[node].count = items.len() as u32;
            self.order.extend(items.iter().map(|it| it.index));
            return node;
        }

        let mid = items.len() / 2;
        items.select_nth_unstable_by(mid, |a, b| {
            a.centroid[axis]
                .total_cmp(&b.centroid[axis])
                .then(a.index.cmp(&b.index))
        });
        let (left, right) = items.split_at_mut(mid);
        self.build_node(left);
        let right_index = self.build_node(right);
        self.nodes[node].index = right_index as u32;
        node
    }

    /// Closest hit by `(t, triangle)`; `hit_fn` returns the ray parameter of a
    /// triangle hit.
    pub(crate) fn closest<H, F>(&self, origin: &Point3<f64>, dir: &Vector3<f64>, mut hit_fn: F) -> Option<(u32, f64, H)>
    where
        F: FnMut(u32) -> Option<(f64, H)>,
    {
        if self.nodes.is_empty() {
            return None;
        }
        let inv_dir = Vector3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let mut best: Option<(u32, f64, H)> = None;
        let mut stack: Vec<(usize, f64)> = Vec::with_capacity(64);
        if let Some(t) = self.nodes[0].bounds.entry(origin, &inv_dir) {
            stack.push((0, t));
        }
        while let Some((ni, t_entry)) = stack.pop() {
            if let Some((_, bt, _)) = &best {
                if t_entry > *bt {
                    continue;
                }
            }
            let node = &self.nodes[ni];
            if node.count > 0 {
                let start = node.index as usize;
                for &tri in &self.order[start..start + node.count as usize] {
                    if let Some((t, extra)) = hit_fn(tri) {
                        let better = match &best {
                            None => true,
                            Some((bi, bt, _)) => t < *bt || (t == *bt && tri < *bi),
                        };
                        if better {
                            best = Some((tri, t, extra));
                        }
                    }
                }
                continue;
            }
            let left = ni + 1;
            let right = node.index as usize;
            let tl = self.nodes[left].bounds.entry(origin, &inv_dir);
            let tr = self.nodes[right].bounds.entry(origin, &inv_dir);
            // push the farther child first so the nearer one is popped next
            match (tl, tr) {
                (Some(a), Some(b)) if a <= b => {
                    stack.push((right, b));
                    stack.push((left, a));
                }
                (Some(a), Some(b)) => {
                    stack.push((left, a));
                    stack.push((right, b));
                }
                (Some(a), None) => stack.push((left, a)),
                (None, Some(b)) => stack.push((right, b)),
                (None, None) => {}
            }
        }
        best
    }

    #[cfg(test)]
    pub(crate) fn node_count(&self) -> usize {
        self.nodes.len()
    }
}
