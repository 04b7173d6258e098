//! Small geometric primitives shared by the spatial index, the distance
//! field, and the voxelizer.

use crate::Vec3;

/// A plane in implicit form: `normal . p + offset = 0` with unit normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub normal: Vec3,
    pub offset: f64,
}

impl Plane {
    /// Plane through the three points of a CCW triangle, or `None` when the
    /// triangle is degenerate (cross product too small to normalize).
    pub fn from_triangle(a: Vec3, b: Vec3, c: Vec3) -> Option<Plane> {
        let n = (b - a).cross(&(c - a));
        let len = n.norm();
        if len < 1e-30 {
            return None;
        }
        let normal = n / len;
        Some(Plane {
            normal,
            offset: -normal.dot(&a),
        })
    }

    /// Unsigned distance from `p` to the plane.
    #[inline]
    pub fn distance(&self, p: Vec3) -> f64 {
        (self.normal.dot(&p) + self.offset).abs()
    }

    /// Signed distance (positive on the normal side).
    #[inline]
    pub fn signed_distance(&self, p: Vec3) -> f64 {
        self.normal.dot(&p) + self.offset
    }
}

/// Where on a triangle a closest point lies.
///
/// Local ids follow the triangle's own ordering: vertex `i` is the i-th
/// index of the triangle, edge `i` joins vertices `i` and `(i+1) % 3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feature {
    Face,
    Edge(u8),
    Vertex(u8),
}

/// Closest point on triangle `(a, b, c)` to `p`, with barycentric
/// coordinates `(u, v, w)` such that `q = u*a + v*b + w*c`.
///
/// Region-based method: classify `p` against the vertex, edge, and face
/// Voronoi regions of the triangle, then project. Degenerate triangles fall
/// through to the nearest-vertex/edge cases and stay finite.
pub fn closest_point_triangle(p: Vec3, a: Vec3, b: Vec3, c: Vec3) -> (Vec3, [f64; 3]) {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;

    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (a, [1.0, 0.0, 0.0]);
    }

    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (b, [0.0, 1.0, 0.0]);
    }

    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let denom = d1 - d3;
        let v = if denom > 0.0 { d1 / denom } else { 0.0 };
        return (a + ab * v, [1.0 - v, v, 0.0]);
    }

    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (c, [0.0, 0.0, 1.0]);
    }

    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let denom = d2 - d6;
        let w = if denom > 0.0 { d2 / denom } else { 0.0 };
        return (a + ac * w, [1.0 - w, 0.0, w]);
    }

    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let denom = (d4 - d3) + (d5 - d6);
        let w = if denom > 0.0 { (d4 - d3) / denom } else { 0.0 };
        return (b + (c - b) * w, [0.0, 1.0 - w, w]);
    }

    // Interior of the face region.
    let denom = va + vb + vc;
    if denom.abs() < 1e-300 {
        // Fully degenerate triangle; all Voronoi tests failed, fall back to
        // the nearest of the three vertices.
        let da = (p - a).norm_squared();
        let db = (p - b).norm_squared();
        let dc = (p - c).norm_squared();
        return if da <= db && da <= dc {
            (a, [1.0, 0.0, 0.0])
        } else if db <= dc {
            (b, [0.0, 1.0, 0.0])
        } else {
            (c, [0.0, 0.0, 1.0])
        };
    }
    let v = vb / denom;
    let w = vc / denom;
    (a + ab * v + ac * w, [1.0 - v - w, v, w])
}

/// Classify barycentric coordinates into face / edge / vertex features.
///
/// `tol` is measured in barycentric space. A coordinate is "zero" when it is
/// below `tol`; two zeros pin a vertex, one zero pins the opposite edge.
pub fn classify_feature(bary: [f64; 3], tol: f64) -> Feature {
    let z = [bary[0] < tol, bary[1] < tol, bary[2] < tol];
    match (z[0], z[1], z[2]) {
        (true, true, _) => Feature::Vertex(2),
        (true, _, true) => Feature::Vertex(1),
        (_, true, true) => Feature::Vertex(0),
        (true, false, false) => Feature::Edge(1), // bary[0] = 0 lies on edge (v1, v2)
        (false, true, false) => Feature::Edge(2), // bary[1] = 0 lies on edge (v2, v0)
        (false, false, true) => Feature::Edge(0), // bary[2] = 0 lies on edge (v0, v1)
        (false, false, false) => Feature::Face,
    }
}

/// Exact triangle vs axis-aligned box overlap via the separating axis test
/// (13 axes: 3 box normals, 1 triangle normal, 9 edge cross products).
pub fn tri_box_overlap(center: Vec3, half: Vec3, tri: &[Vec3; 3]) -> bool {
    let v0 = tri[0] - center;
    let v1 = tri[1] - center;
    let v2 = tri[2] - center;

    // Box face normals: interval tests per axis.
    for axis in 0..3 {
        let (mut lo, mut hi) = (v0[axis], v0[axis]);
        lo = lo.min(v1[axis]).min(v2[axis]);
        hi = hi.max(v1[axis]).max(v2[axis]);
        if lo > half[axis] || hi < -half[axis] {
            return false;
        }
    }

    let e0 = v1 - v0;
    let e1 = v2 - v1;
    let e2 = v0 - v2;

    // Triangle normal.
    let n = e0.cross(&e1);
    let r = half.x * n.x.abs() + half.y * n.y.abs() + half.z * n.z.abs();
    let d = n.dot(&v0);
    if d.abs() > r {
        return false;
    }

    // Nine edge cross-product axes.
    let edges = [e0, e1, e2];
    let verts = [v0, v1, v2];
    for e in &edges {
        for axis in 0..3usize {
            let mut a = Vec3::zeros();
            let u = (axis + 1) % 3;
            let w = (axis + 2) % 3;
            a[u] = -e[w];
            a[w] = e[u];
            let r = half[u] * a[u].abs() + half[w] * a[w].abs();
            let p0 = a.dot(&verts[0]);
            let p1 = a.dot(&verts[1]);
            let p2 = a.dot(&verts[2]);
            let lo = p0.min(p1).min(p2);
            let hi = p0.max(p1).max(p2);
            if lo > r || hi < -r {
                return false;
            }
        }
    }
    true
}
