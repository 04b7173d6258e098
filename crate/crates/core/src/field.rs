//! Distance-field queries against a source mesh.
//!
//! The sharp-feature-preserving distance of a point P is the maximum, over
//! the planes of all triangles incident to P's nearest mesh point Q, of the
//! point-plane distance. Offsetting each incident plane outward by a radius
//! eps produces a polyhedral envelope, so the eps-level set of this field
//! keeps corner angles instead of rounding them. The plain Euclidean
//! distance |P - Q| is available as a baseline; the two agree whenever the
//! nearest feature is a face interior (a single incident plane).
//!
//! The field is unsigned. Inside/outside classification is the voxelizer's
//! flood fill's job; the signal consumed there and by the extractor is the
//! occupancy margin `g(p) = eps - distance(p)`.

use crate::mesh::TriangleMesh;
use crate::spatial::{build_bvh_with, NearestHit, SpatialError, TriangleBvh};
use crate::{Plane, Vec3};

/// Which distance the field evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldMode {
    /// Max point-plane distance over triangles incident to the nearest point.
    Linf,
    /// Euclidean distance to the nearest point.
    L2,
}

impl std::fmt::Display for FieldMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FieldMode::Linf => write!(f, "linf"),
            FieldMode::L2 => write!(f, "l2"),
        }
    }
}

/// Immutable distance-field query object over one mesh.
pub struct LinfField {
    bvh: TriangleBvh,
    /// Plane per triangle; `None` for degenerate triangles, which are
    /// excluded from the max (their normals are numerically meaningless).
    planes: Vec<Option<Plane>>,
    epsilon: f64,
    mode: FieldMode,
    feature_tol: f64,
}

impl LinfField {
    /// Build a field over `mesh` with dilation radius `epsilon` (> 0).
    pub fn build(mesh: &TriangleMesh, epsilon: f64, mode: FieldMode) -> Result<Self, SpatialError> {
        Self::build_with(
            mesh,
            epsilon,
            mode,
            crate::mesh::WELD_TOLERANCE,
            crate::spatial::DEFAULT_FEATURE_TOL,
        )
    }

    pub fn build_with(
        mesh: &TriangleMesh,
        epsilon: f64,
        mode: FieldMode,
        weld_tol: f64,
        feature_tol: f64,
    ) -> Result<Self, SpatialError> {
        assert!(epsilon > 0.0, "dilation radius must be positive");
        let bvh = build_bvh_with(mesh, weld_tol)?;
        let planes = (0..mesh.triangles.len())
            .map(|t| {
                let [a, b, c] = mesh.triangle_vertices(t);
                Plane::from_triangle(a, b, c)
            })
            .collect();
        Ok(LinfField {
            bvh,
            planes,
            epsilon,
            mode,
            feature_tol,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn mode(&self) -> FieldMode {
        self.mode
    }

    pub fn bvh(&self) -> &TriangleBvh {
        &self.bvh
    }

    /// Nearest point query (exposed for callers that need Q itself).
    pub fn nearest(&self, p: Vec3) -> NearestHit {
        self.bvh.nearest_point_with(p, self.feature_tol)
    }

    /// Max point-plane distance over the triangles incident to the nearest
    /// point. Falls back to the Euclidean distance when every incident
    /// triangle is degenerate.
    pub fn linf_distance(&self, p: Vec3) -> f64 {
        let hit = self.nearest(p);
        self.linf_from_hit(p, &hit)
    }

    fn linf_from_hit(&self, p: Vec3, hit: &NearestHit) -> f64 {
        let mut best = -1.0f64;
        for t in self.bvh.incident_triangles(hit) {
            if let Some(plane) = &self.planes[t as usize] {
                let d = plane.distance(p);
                if d > best {
                    best = d;
                }
            }
        }
        if best < 0.0 {
            hit.distance
        } else {
            best
        }
    }

    /// Euclidean distance to the mesh.
    pub fn l2_distance(&self, p: Vec3) -> f64 {
        self.nearest(p).distance
    }

    /// Distance according to the field's mode.
    #[inline]
    pub fn distance(&self, p: Vec3) -> f64 {
        let hit = self.nearest(p);
        match self.mode {
            FieldMode::Linf => self.linf_from_hit(p, &hit),
            FieldMode::L2 => hit.distance,
        }
    }

    /// Occupancy margin `g(p) = epsilon - distance(p)`: positive inside the
    /// dilated envelope, negative outside, continuous across it. This is the
    /// bisection function used on crossing edges.
    #[inline]
    pub fn occupancy_margin(&self, p: Vec3) -> f64 {
        self.epsilon - self.distance(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::mesh::weld_positions;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent oracle: linear triangle scan for the nearest point,
    /// incident set by welded adjacency, max of plane distances. Written
    /// against the definitions, not the implementation.
    fn oracle_linf(mesh: &TriangleMesh, p: Vec3) -> f64 {
        let (q, tid) = oracle_nearest(mesh, p);
        let (_, remap) = weld_positions(&mesh.positions, 1e-9);
        // Which welded vertex/edge does q lie on (geometrically)?
        let tol = 1e-7;
        let tri = mesh.triangles[tid];
        let verts = mesh.triangle_vertices(tid);
        let scale = (verts[0] - verts[1])
            .norm()
            .max((verts[1] - verts[2]).norm())
            .max((verts[2] - verts[0]).norm());
        let mut on_vertex = None;
        for k in 0..3 {
            if (q - verts[k]).norm() <= tol * scale {
                on_vertex = Some(remap[tri[k] as usize]);
            }
        }
        let mut incident: Vec<usize> = Vec::new();
        if let Some(w) = on_vertex {
            for (t, tr) in mesh.triangles.iter().enumerate() {
                if tr.iter().any(|&i| remap[i as usize] == w) {
                    incident.push(t);
                }
            }
        } else {
            let mut on_edge = None;
            for k in 0..3 {
                let a = verts[k];
                let b = verts[(k + 1) % 3];
                let ab = b - a;
                let t = (q - a).dot(&ab) / ab.norm_squared();
                let foot = a + ab * t.clamp(0.0, 1.0);
                if (q - foot).norm() <= tol * scale {
                    on_edge = Some((
                        remap[tri[k] as usize].min(remap[tri[(k + 1) % 3] as usize]),
                        remap[tri[k] as usize].max(remap[tri[(k + 1) % 3] as usize]),
                    ));
                }
            }
            if let Some((wa, wb)) = on_edge {
                for (t, tr) in mesh.triangles.iter().enumerate() {
                    let w = [
                        remap[tr[0] as usize],
                        remap[tr[1] as usize],
                        remap[tr[2] as usize],
                    ];
                    for k in 0..3 {
                        let (ea, eb) = (w[k].min(w[(k + 1) % 3]), w[k].max(w[(k + 1) % 3]));
                        if (ea, eb) == (wa, wb) {
                            incident.push(t);
                            break;
                        }
                    }
                }
            } else {
                incident.push(tid);
            }
        }
        let mut best = -1.0f64;
        for t in incident {
            let [a, b, c] = mesh.triangle_vertices(t);
            if let Some(plane) = crate::Plane::from_triangle(a, b, c) {
                best = best.max(plane.distance(p));
            }
        }
        if best < 0.0 {
            (p - q).norm()
        } else {
            best
        }
    }

    /// Nearest point by brute force using an independent formulation
    /// (min over vertex / edge / face candidates).
    fn oracle_nearest(mesh: &TriangleMesh, p: Vec3) -> (Vec3, usize) {
        let mut best = (Vec3::zeros(), usize::MAX, f64::INFINITY);
        for t in 0..mesh.triangles.len() {
            let [a, b, c] = mesh.triangle_vertices(t);
            let mut candidates: Vec<Vec3> = vec![a, b, c];
            for (u, v) in [(a, b), (b, c), (c, a)] {
                let uv = v - u;
                let s = ((p - u).dot(&uv) / uv.norm_squared()).clamp(0.0, 1.0);
                candidates.push(u + uv * s);
            }
            if let Some(plane) = crate::Plane::from_triangle(a, b, c) {
                let foot = p - plane.normal * plane.signed_distance(p);
                // Inside test via same-side checks on the three edges.
                let inside = [(a, b), (b, c), (c, a)]
                    .iter()
                    .all(|&(u, v)| (v - u).cross(&(foot - u)).dot(&plane.normal) >= -1e-12);
                if inside {
                    candidates.push(foot);
                }
            }
            for q in candidates {
                let d = (p - q).norm_squared();
                if d < best.2 {
                    best = (q, t, d);
                }
            }
        }
        (best.0, best.1)
    }

    #[test]
    fn single_plane_equals_l2() {
        let mesh = TriangleMesh::new(
            vec![
                Vec3::new(0.0, 0.0, 0.0),
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(0.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let field = LinfField::build(&mesh, 0.1, FieldMode::Linf).unwrap();
        let p = Vec3::new(0.25, 0.25, 1.0);
        assert!((field.linf_distance(p) - 1.0).abs() < 1e-12);
        assert!((field.l2_distance(p) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cube_corner_preserves_linf() {
        // For a point on the corner diagonal at (-1-t, -1-t, -1-t) outside
        // the corner at (-1,-1,-1): every incident plane is at distance t,
        // so the max is t, while the Euclidean distance is t*sqrt(3).
        let cube = fixtures::cube(1.0);
        let field = LinfField::build(&cube, 0.1, FieldMode::Linf).unwrap();
        for t in [0.05, 0.2, 0.5] {
            let p = Vec3::new(-1.0 - t, -1.0 - t, -1.0 - t);
            let dinf = field.linf_distance(p);
            let d2 = field.l2_distance(p);
            assert!((dinf - t).abs() < 1e-12, "t={t} dinf={dinf}");
            assert!((d2 - t * 3.0f64.sqrt()).abs() < 1e-12, "t={t} d2={d2}");
        }
    }

    #[test]
    fn point_on_surface_has_zero_distance_and_full_margin() {
        let cube = fixtures::cube(1.0);
        let field = LinfField::build(&cube, 0.07, FieldMode::Linf).unwrap();
        let p = Vec3::new(0.3, -0.4, 1.0);
        assert!(field.l2_distance(p) < 1e-12);
        assert!((field.occupancy_margin(p) - 0.07).abs() < 1e-12);
    }

    #[test]
    fn linf_never_above_l2() {
        let mesh = fixtures::icosphere(0.8, 2);
        let field = LinfField::build(&mesh, 0.05, FieldMode::Linf).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let p = Vec3::new(
                rng.gen_range(-1.2..1.2),
                rng.gen_range(-1.2..1.2),
                rng.gen_range(-1.2..1.2),
            );
            let dinf = field.linf_distance(p);
            let d2 = field.l2_distance(p);
            // Each incident plane contains Q, so d(P, plane) <= |P - Q|.
            assert!(dinf <= d2 + 1e-12, "dinf {dinf} > d2 {d2}");
        }
    }

    #[test]
    fn matches_oracle_on_fixtures() {
        let meshes = [
            fixtures::cube(0.8),
            fixtures::tetrahedron(0.7),
            fixtures::icosphere(0.6, 1),
            fixtures::l_prism(1.0, 0.4, 0.5),
            fixtures::random_soup(60, 0.4, 17),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for mesh in &meshes {
            let field = LinfField::build(mesh, 0.05, FieldMode::Linf).unwrap();
            for _ in 0..300 {
                let p = Vec3::new(
                    rng.gen_range(-1.4..1.4),
                    rng.gen_range(-1.4..1.4),
                    rng.gen_range(-1.4..1.4),
                );
                let got = field.linf_distance(p);
                let want = oracle_linf(mesh, p);
                assert!((got - want).abs() <= 1e-9, "p={p:?} got={got} want={want}");
            }
        }
    }

    #[test]
    fn margin_root_matches_analytic_plane_offset() {
        // Flat patch in z=0; along a vertical segment the margin crosses
        // zero exactly at z = eps.
        let patch = fixtures::open_patch(0.8, 0.8, 4, 4);
        let eps = 0.11;
        let field = LinfField::build(&patch, eps, FieldMode::Linf).unwrap();
        let (mut lo, mut hi) = (0.0f64, 0.5f64);
        assert!(field.occupancy_margin(Vec3::new(0.1, 0.1, lo)) > 0.0);
        assert!(field.occupancy_margin(Vec3::new(0.1, 0.1, hi)) < 0.0);
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            if field.occupancy_margin(Vec3::new(0.1, 0.1, mid)) >= 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((0.5 * (lo + hi) - eps).abs() < 1e-9);
        // Point at distance 2*eps from the sheet has margin exactly -eps.
        assert!((field.occupancy_margin(Vec3::new(0.1, 0.1, 2.0 * eps)) + eps).abs() < 1e-12);
    }

    #[test]
    fn l2_mode_margin_uses_euclidean() {
        let cube = fixtures::cube(1.0);
        let field = LinfField::build(&cube, 0.1, FieldMode::L2).unwrap();
        let t = 0.1 / 3.0f64.sqrt();
        // On the corner diagonal, the L2 eps-surface sits at t = eps/sqrt(3).
        let p = Vec3::new(-1.0 - t, -1.0 - t, -1.0 - t);
        assert!(field.occupancy_margin(p).abs() < 1e-12);
    }

    #[test]
    fn linf_is_lipschitz_within_fixed_feature_region() {
        // Points whose incident sets are identical see a max of fixed plane
        // distances, each of which is 1-Lipschitz.
        let cube = fixtures::cube(1.0);
        let field = LinfField::build(&cube, 0.05, FieldMode::Linf).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let mut checked = 0;
        while checked < 200 {
            let p1 = Vec3::new(
                rng.gen_range(-1.5..1.5),
                rng.gen_range(-1.5..1.5),
                rng.gen_range(-1.5..1.5),
            );
            let p2 = p1
                + Vec3::new(
                    rng.gen_range(-0.05..0.05),
                    rng.gen_range(-0.05..0.05),
                    rng.gen_range(-0.05..0.05),
                );
            let h1 = field.nearest(p1);
            let h2 = field.nearest(p2);
            if field.bvh.incident_triangles(&h1) != field.bvh.incident_triangles(&h2) {
                continue;
            }
            checked += 1;
            let d1 = field.linf_distance(p1);
            let d2 = field.linf_distance(p2);
            assert!((d1 - d2).abs() <= (p1 - p2).norm() + 1e-12);
        }
    }
}
