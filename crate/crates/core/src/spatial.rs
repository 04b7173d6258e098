//! Spatial acceleration structures: a triangle BVH for exact nearest-point
//! queries and incident-triangle sets, and a kd-tree over point samples.
//!
//! Both structures are immutable after construction and safe for concurrent
//! queries. The BVH uses median splits on the longest AABB axis so its
//! structure (and therefore every query's traversal and tie-breaking) is
//! deterministic for a given mesh.

use crate::geom::{classify_feature, closest_point_triangle, Feature};
use crate::mesh::{weld_positions, TriangleMesh};
use crate::Vec3;

/// Feature-classification tolerance in barycentric space.
pub const DEFAULT_FEATURE_TOL: f64 = 1e-7;

#[derive(Debug, thiserror::Error)]
pub enum SpatialError {
    #[error("cannot build a BVH over an empty mesh")]
    EmptyMesh,
}

/// Result of a nearest-point query.
#[derive(Debug, Clone, Copy)]
pub struct NearestHit {
    /// Closest point Q on the mesh.
    pub point: Vec3,
    /// Triangle realizing the minimum distance (lowest id on ties).
    pub triangle_id: u32,
    /// Barycentric coordinates of Q in that triangle.
    pub barycentric: [f64; 3],
    pub distance: f64,
    pub feature: Feature,
}

#[derive(Debug, Clone, Copy)]
struct Node {
    lo: Vec3,
    hi: Vec3,
    /// Leaf: index of first triangle slot. Internal: index of the right
    /// child (the left child is always the next node, depth-first layout).
    index: u32,
    /// Leaf: triangle count; internal: 0.
    len: u32,
}

impl Node {
    #[inline]
    fn dist_sq(&self, p: Vec3) -> f64 {
        let mut d = 0.0;
        for a in 0..3 {
            let v = if p[a] < self.lo[a] {
                self.lo[a] - p[a]
            } else if p[a] > self.hi[a] {
                p[a] - self.hi[a]
            } else {
                0.0
            };
            d += v * v;
        }
        d
    }
}

/// Bounding volume hierarchy over the triangles of one mesh, plus the welded
/// adjacency needed to answer "all triangles incident to this feature".
pub struct TriangleBvh {
    nodes: Vec<Node>,
    /// Triangle vertex positions in leaf order.
    tris: Vec<[Vec3; 3]>,
    /// Original triangle id per leaf-order slot.
    ids: Vec<u32>,
    /// Welded vertex id per (triangle, corner), indexed by original tri id.
    welded: Vec<[u32; 3]>,
    /// Triangles incident to each welded vertex, sorted.
    vertex_ring: Vec<Vec<u32>>,
    /// Triangles incident to each welded undirected edge, sorted.
    edge_ring: std::collections::HashMap<(u32, u32), Vec<u32>>,
    tri_count: usize,
}

const LEAF_SIZE: usize = 4;

/// Build a BVH over `mesh` (deterministic median split on the longest axis).
pub fn build_bvh(mesh: &TriangleMesh) -> Result<TriangleBvh, SpatialError> {
    build_bvh_with(mesh, crate::mesh::WELD_TOLERANCE)
}

/// [`build_bvh`] with an explicit weld tolerance for the adjacency tables.
pub fn build_bvh_with(mesh: &TriangleMesh, weld_tol: f64) -> Result<TriangleBvh, SpatialError> {
    let n = mesh.triangles.len();
    if n == 0 {
        return Err(SpatialError::EmptyMesh);
    }

    // Adjacency on welded ids (the mesh itself is left untouched).
    let (_, remap) = weld_positions(&mesh.positions, weld_tol);
    let welded: Vec<[u32; 3]> = mesh
        .triangles
        .iter()
        .map(|t| [remap[t[0] as usize], remap[t[1] as usize], remap[t[2] as usize]])
        .collect();
    let wcount = remap.iter().copied().max().unwrap_or(0) as usize + 1;
    let mut vertex_ring: Vec<Vec<u32>> = vec![Vec::new(); wcount];
    let mut edge_ring: std::collections::HashMap<(u32, u32), Vec<u32>> =
        std::collections::HashMap::new();
    for (t, w) in welded.iter().enumerate() {
        let mut seen = [u32::MAX; 3];
        for (k, &v) in w.iter().enumerate() {
            if !seen[..k].contains(&v) {
                vertex_ring[v as usize].push(t as u32);
            }
            seen[k] = v;
            let u = w[(k + 1) % 3];
            if v != u {
                edge_ring
                    .entry((v.min(u), v.max(u)))
                    .or_default()
                    .push(t as u32);
            }
        }
    }
    for ring in &mut vertex_ring {
        ring.sort_unstable();
        ring.dedup();
    }
    for ring in edge_ring.values_mut() {
        ring.sort_unstable();
        ring.dedup();
    }

    // Build the tree over (centroid, id) records.
    struct Item {
        centroid: Vec3,
        lo: Vec3,
        hi: Vec3,
        id: u32,
    }
    let mut items: Vec<Item> = (0..n)
        .map(|t| {
            let [a, b, c] = mesh.triangle_vertices(t);
            Item {
                centroid: (a + b + c) / 3.0,
                lo: a.inf(&b).inf(&c),
                hi: a.sup(&b).sup(&c),
                id: t as u32,
            }
        })
        .collect();

    let mut nodes: Vec<Node> = Vec::with_capacity(2 * n);
    // Recursive median split; items end up in leaf order.
    fn split(items: &mut [Item], base: usize, nodes: &mut Vec<Node>) {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for it in items.iter() {
            lo = lo.inf(&it.lo);
            hi = hi.sup(&it.hi);
        }
        let me = nodes.len();
        nodes.push(Node {
            lo,
            hi,
            index: 0,
            len: 0,
        });
        if items.len() <= LEAF_SIZE {
            nodes[me].index = base as u32;
            nodes[me].len = items.len() as u32;
            return;
        }
        let extent = hi - lo;
        let axis = if extent.x >= extent.y && extent.x >= extent.z {
            0
        } else if extent.y >= extent.z {
            1
        } else {
            2
        };
        let mid = items.len() / 2;
        items.sort_unstable_by(|a, b| {
            a.centroid[axis]
                .partial_cmp(&b.centroid[axis])
                .unwrap()
                .then(a.id.cmp(&b.id))
        });
        let (left, right) = items.split_at_mut(mid);
        split(left, base, nodes);
        nodes[me].index = nodes.len() as u32;
        split(right, base + mid, nodes);
    }
    split(&mut items, 0, &mut nodes);

    let tris: Vec<[Vec3; 3]> = items
        .iter()
        .map(|it| mesh.triangle_vertices(it.id as usize))
        .collect();
    let ids: Vec<u32> = items.iter().map(|it| it.id).collect();

    Ok(TriangleBvh {
        nodes,
        tris,
        ids,
        welded,
        vertex_ring,
        edge_ring,
        tri_count: n,
    })
}

impl TriangleBvh {
    pub fn triangle_count(&self) -> usize {
        self.tri_count
    }

    /// Exact nearest point on the mesh; ties broken by lowest triangle id.
    pub fn nearest_point(&self, p: Vec3) -> NearestHit {
        self.nearest_point_with(p, DEFAULT_FEATURE_TOL)
    }

    pub fn nearest_point_with(&self, p: Vec3, feature_tol: f64) -> NearestHit {
        let mut best = NearestHit {
            point: Vec3::zeros(),
            triangle_id: u32::MAX,
            barycentric: [0.0; 3],
            distance: f64::INFINITY,
            feature: Feature::Face,
        };
        let mut best_sq = f64::INFINITY;
        // Explicit stack; near child first.
        let mut stack: Vec<u32> = Vec::with_capacity(64);
        stack.push(0);
        while let Some(ni) = stack.pop() {
            let node = self.nodes[ni as usize];
            if node.dist_sq(p) > best_sq {
                continue;
            }
            if node.len > 0 {
                for s in node.index..node.index + node.len {
                    let tri = &self.tris[s as usize];
                    let (q, bary) = closest_point_triangle(p, tri[0], tri[1], tri[2]);
                    let d2 = (p - q).norm_squared();
                    let id = self.ids[s as usize];
                    if d2 < best_sq || (d2 == best_sq && id < best.triangle_id) {
                        best_sq = d2;
                        best = NearestHit {
                            point: q,
                            triangle_id: id,
                            barycentric: bary,
                            distance: d2.sqrt(),
                            feature: classify_feature(bary, feature_tol),
                        };
                    }
                }
            } else {
                let left = ni as usize + 1;
                let right = node.index as usize;
                let dl = self.nodes[left].dist_sq(p);
                let dr = self.nodes[right].dist_sq(p);
                // Push the far child first so the near one pops first.
                if dl <= dr {
                    stack.push(right as u32);
                    stack.push(left as u32);
                } else {
                    stack.push(left as u32);
                    stack.push(right as u32);
                }
            }
        }
        best
    }

    /// All triangles incident to the hit's feature, via welded adjacency.
    /// Face hits give the triangle itself; edge hits give every triangle on
    /// the welded undirected edge; vertex hits give the full one-ring.
    pub fn incident_triangles(&self, hit: &NearestHit) -> Vec<u32> {
        let t = hit.triangle_id as usize;
        let w = self.welded[t];
        match hit.feature {
            Feature::Face => vec![hit.triangle_id],
            Feature::Edge(e) => {
                let a = w[e as usize];
                let b = w[(e as usize + 1) % 3];
                if a == b {
                    return vec![hit.triangle_id];
                }
                let ring = self
                    .edge_ring
                    .get(&(a.min(b), a.max(b)))
                    .cloned()
                    .unwrap_or_default();
                if ring.is_empty() {
                    vec![hit.triangle_id]
                } else {
                    ring
                }
            }
            Feature::Vertex(v) => {
                let ring = self.vertex_ring[w[v as usize] as usize].clone();
                if ring.is_empty() {
                    vec![hit.triangle_id]
                } else {
                    ring
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Point kd-tree (for sampled point sets in the metrics module)
// ---------------------------------------------------------------------------

/// Kd-tree over a point set; answers nearest-neighbor index queries.
pub struct PointIndex {
    /// Points in tree order.
    points: Vec<Vec3>,
    /// Original index per tree slot.
    ids: Vec<u32>,
    /// Depth-first nodes. Leaf: `right == u32::MAX`, covers
    /// `points[start..start + len]`. Internal: splits at
    /// `points[start + len/2][axis]`; left child is the next node.
    nodes: Vec<KdNode>,
}

#[derive(Debug, Clone, Copy)]
struct KdNode {
    start: u32,
    len: u32,
    axis: u8,
    right: u32,
    /// Splitting plane coordinate; all left points are <= this, all right
    /// points >= it. Captured at build time (recursion reorders the ranges).
    split: f64,
}

const KD_LEAF: usize = 8;

impl PointIndex {
    pub fn build(points: &[Vec3]) -> PointIndex {
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        let mut nodes: Vec<KdNode> = Vec::new();
        fn build_range(
            points: &[Vec3],
            order: &mut [u32],
            start: usize,
            nodes: &mut Vec<KdNode>,
        ) {
            let mut lo = Vec3::repeat(f64::INFINITY);
            let mut hi = Vec3::repeat(f64::NEG_INFINITY);
            for &i in order.iter() {
                lo = lo.inf(&points[i as usize]);
                hi = hi.sup(&points[i as usize]);
            }
            let extent = hi - lo;
            let axis = if extent.x >= extent.y && extent.x >= extent.z {
                0u8
            } else if extent.y >= extent.z {
                1
            } else {
                2
            };
            let me = nodes.len();
            nodes.push(KdNode {
                start: start as u32,
                len: order.len() as u32,
                axis,
                right: u32::MAX,
                split: 0.0,
            });
            if order.len() <= KD_LEAF {
                return;
            }
            let mid = order.len() / 2;
            order.sort_unstable_by(|&a, &b| {
                points[a as usize][axis as usize]
                    .partial_cmp(&points[b as usize][axis as usize])
                    .unwrap()
                    .then(a.cmp(&b))
            });
            nodes[me].split = points[order[mid] as usize][axis as usize];
            let (l, r) = order.split_at_mut(mid);
            build_range(points, l, start, nodes);
            nodes[me].right = nodes.len() as u32;
            build_range(points, r, start + mid, nodes);
        }
        if !order.is_empty() {
            build_range(points, &mut order, 0, &mut nodes);
        }
        PointIndex {
            points: order.iter().map(|&i| points[i as usize]).collect(),
            ids: order,
            nodes,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index (into the original point slice) and squared distance of the
    /// nearest point to `q`. Ties break to the lowest original index.
    pub fn nearest(&self, q: Vec3) -> (u32, f64) {
        debug_assert!(!self.points.is_empty());
        let mut best = (u32::MAX, f64::INFINITY);
        self.nearest_node(0, q, &mut best);
        best
    }

    fn nearest_node(&self, node: usize, q: Vec3, best: &mut (u32, f64)) {
        let n = self.nodes[node];
        if n.right == u32::MAX {
            let start = n.start as usize;
            for s in start..start + n.len as usize {
                let d2 = (self.points[s] - q).norm_squared();
                let id = self.ids[s];
                if d2 < best.1 || (d2 == best.1 && id < best.0) {
                    *best = (id, d2);
                }
            }
            return;
        }
        let delta = q[n.axis as usize] - n.split;
        let (near, far) = if delta < 0.0 {
            (node + 1, n.right as usize)
        } else {
            (n.right as usize, node + 1)
        };
        self.nearest_node(near, q, best);
        if delta * delta <= best.1 {
            self.nearest_node(far, q, best);
        }
    }
}
