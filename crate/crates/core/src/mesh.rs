//! Triangle mesh representation, validation, and dihedral-angle analysis.
//!
//! [`TriangleMesh`] is an indexed triangle soup: no manifoldness is assumed
//! anywhere in this module's inputs. Loaders weld duplicate vertices and drop
//! degenerate triangles by default so downstream consumers can rely on the
//! basic invariants (indices in range, non-zero areas).

use std::collections::HashMap;
use std::path::Path;

use crate::Vec3;

pub mod io;

/// Area below which a triangle is considered degenerate and dropped at load.
pub const DEGENERATE_AREA: f64 = 1e-12;

/// Default vertex welding tolerance (units of the input file).
pub const WELD_TOLERANCE: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum MeshError {
    #[error("file not found: {0}")]
    FileNotFound(String),
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("{path}: byte {offset}: {msg}")]
    ParseBinary {
        path: String,
        offset: u64,
        msg: String,
    },
    #[error("mesh has no valid triangles")]
    EmptyMesh,
    #[error("triangle {tri} references vertex {index} but mesh has {count} vertices")]
    IndexOutOfRange { tri: usize, index: u32, count: usize },
    #[error("bounding box has zero extent; cannot normalize")]
    DegenerateBounds,
    #[error("padding {0} outside [0, 0.5)")]
    InvalidPadding(f64),
    #[error("mesh is not closed and edge-manifold: {0}")]
    NonManifoldInput(String),
    #[error("unsupported format for this operation: {0}")]
    UnsupportedFormat(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Similarity transform mapping source coordinates into the normalized
/// domain: `p_norm = p_src * scale + translation`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NormalizationTransform {
    pub scale: f64,
    pub translation: Vec3,
}

impl NormalizationTransform {
    pub fn identity() -> Self {
        NormalizationTransform {
            scale: 1.0,
            translation: Vec3::zeros(),
        }
    }

    #[inline]
    pub fn apply(&self, p: Vec3) -> Vec3 {
        p * self.scale + self.translation
    }

    #[inline]
    pub fn invert(&self, p: Vec3) -> Vec3 {
        (p - self.translation) / self.scale
    }
}

/// Where a mesh came from and how it was mapped into normalized space.
#[derive(Debug, Clone, Default)]
pub struct Provenance {
    pub source: Option<String>,
    pub transform: Option<NormalizationTransform>,
}

/// Indexed triangle soup. Triangles are counter-clockwise = outward facing
/// where orientation is meaningful; nothing here requires it.
#[derive(Debug, Clone, Default)]
pub struct TriangleMesh {
    pub positions: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
    pub provenance: Provenance,
}

impl TriangleMesh {
    /// Build a mesh, validating that all indices are in range.
    pub fn new(positions: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Result<Self, MeshError> {
        for (t, tri) in triangles.iter().enumerate() {
            for &i in tri {
                if i as usize >= positions.len() {
                    return Err(MeshError::IndexOutOfRange {
                        tri: t,
                        index: i,
                        count: positions.len(),
                    });
                }
            }
        }
        Ok(TriangleMesh {
            positions,
            triangles,
            provenance: Provenance::default(),
        })
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    #[inline]
    pub fn triangle_vertices(&self, t: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[t];
        [
            self.positions[a as usize],
            self.positions[b as usize],
            self.positions[c as usize],
        ]
    }

    /// Unit face normal by CCW winding, `None` for degenerate triangles.
    pub fn face_normal(&self, t: usize) -> Option<Vec3> {
        let [a, b, c] = self.triangle_vertices(t);
        let n = (b - a).cross(&(c - a));
        let len = n.norm();
        if len < 1e-300 {
            None
        } else {
            Some(n / len)
        }
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_vertices(t);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Axis-aligned bounding box, `None` when there are no positions in use.
    pub fn aabb(&self) -> Option<(Vec3, Vec3)> {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        let mut any = false;
        for tri in &self.triangles {
            for &i in tri {
                let p = self.positions[i as usize];
                lo = lo.inf(&p);
                hi = hi.sup(&p);
                any = true;
            }
        }
        if any {
            Some((lo, hi))
        } else {
            None
        }
    }

    /// Weld duplicate vertices (snap grid of size `tol`) and drop degenerate
    /// triangles. Triangle order is preserved; vertex order follows first use.
    pub fn cleaned(&self, weld: Option<f64>) -> TriangleMesh {
        let (positions, remap) = match weld {
            Some(tol) => weld_positions(&self.positions, tol),
            None => (
                self.positions.clone(),
                (0..self.positions.len() as u32).collect(),
            ),
        };
        let mut triangles = Vec::with_capacity(self.triangles.len());
        for tri in &self.triangles {
            let t = [
                remap[tri[0] as usize],
                remap[tri[1] as usize],
                remap[tri[2] as usize],
            ];
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                continue;
            }
            let a = positions[t[0] as usize];
            let b = positions[t[1] as usize];
            let c = positions[t[2] as usize];
            if 0.5 * (b - a).cross(&(c - a)).norm() <= DEGENERATE_AREA {
                continue;
            }
            triangles.push(t);
        }
        // Drop unreferenced positions, preserving index order so cleaning an
        // already-clean mesh is the identity.
        let mut used = vec![false; positions.len()];
        for tri in &triangles {
            for &i in tri {
                used[i as usize] = true;
            }
        }
        let mut packed = Vec::new();
        let mut new_id = vec![u32::MAX; positions.len()];
        for (i, &u) in used.iter().enumerate() {
            if u {
                new_id[i] = packed.len() as u32;
                packed.push(positions[i]);
            }
        }
        for tri in &mut triangles {
            for i in tri.iter_mut() {
                *i = new_id[*i as usize];
            }
        }
        TriangleMesh {
            positions: packed,
            triangles,
            provenance: self.provenance.clone(),
        }
    }
}

/// Snap positions onto a grid of size `tol` and merge coincident ones.
/// Returns the merged positions and an old-index -> new-index map. Each
/// merged position keeps the coordinates of its first occurrence.
pub fn weld_positions(positions: &[Vec3], tol: f64) -> (Vec<Vec3>, Vec<u32>) {
    assert!(tol > 0.0, "weld tolerance must be positive");
    let mut map: HashMap<(i64, i64, i64), u32> = HashMap::with_capacity(positions.len());
    let mut out = Vec::with_capacity(positions.len());
    let mut remap = Vec::with_capacity(positions.len());
    for p in positions {
        let key = (
            (p.x / tol).round() as i64,
            (p.y / tol).round() as i64,
            (p.z / tol).round() as i64,
        );
        let id = *map.entry(key).or_insert_with(|| {
            out.push(*p);
            (out.len() - 1) as u32
        });
        remap.push(id);
    }
    (out, remap)
}

/// Load a mesh with default cleanup (weld at [`WELD_TOLERANCE`], drop
/// degenerate triangles).
pub fn load_mesh(path: impl AsRef<Path>, format: io::Format) -> Result<TriangleMesh, MeshError> {
    load_mesh_with(path, format, Some(WELD_TOLERANCE))
}

/// Load a mesh with explicit weld control (`None` disables welding;
/// degenerate triangles are always dropped).
pub fn load_mesh_with(
    path: impl AsRef<Path>,
    format: io::Format,
    weld: Option<f64>,
) -> Result<TriangleMesh, MeshError> {
    let raw = io::load(path.as_ref(), format)?;
    let mesh = raw.cleaned(weld);
    if mesh.is_empty() {
        return Err(MeshError::EmptyMesh);
    }
    Ok(mesh)
}

/// Write a mesh to disk. Refuses empty meshes.
pub fn save_mesh(
    mesh: &TriangleMesh,
    path: impl AsRef<Path>,
    format: io::SaveFormat,
) -> Result<(), MeshError> {
    if mesh.is_empty() {
        return Err(MeshError::EmptyMesh);
    }
    io::save(mesh, path.as_ref(), format)
}

/// Rescale so the longest AABB axis spans `[-1 + padding, 1 - padding]`,
/// centered, aspect ratio preserved. Returns the transform that was applied.
pub fn normalize_to_unit_cube(
    mesh: &TriangleMesh,
    padding: f64,
) -> Result<(TriangleMesh, NormalizationTransform), MeshError> {
    if !(0.0..0.5).contains(&padding) {
        return Err(MeshError::InvalidPadding(padding));
    }
    if mesh.is_empty() {
        return Err(MeshError::EmptyMesh);
    }
    let (lo, hi) = mesh.aabb().ok_or(MeshError::EmptyMesh)?;
    let extent = hi - lo;
    let longest = extent.max();
    if longest <= 0.0 {
        return Err(MeshError::DegenerateBounds);
    }
    let scale = (2.0 - 2.0 * padding) / longest;
    let center = (lo + hi) * 0.5;
    let transform = NormalizationTransform {
        scale,
        translation: -center * scale,
    };
    let positions = mesh
        .positions
        .iter()
        .map(|&p| {
            let q = transform.apply(p);
            Vec3::new(q.x.clamp(-1.0, 1.0), q.y.clamp(-1.0, 1.0), q.z.clamp(-1.0, 1.0))
        })
        .collect();
    let normalized = TriangleMesh {
        positions,
        triangles: mesh.triangles.clone(),
        provenance: Provenance {
            source: mesh.provenance.source.clone(),
            transform: Some(transform),
        },
    };
    Ok((normalized, transform))
}

/// Topology report of [`check_watertight_manifold`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ManifoldReport {
    /// Every undirected edge borders exactly 1 or 2 triangles.
    pub edge_manifold: bool,
    /// Every undirected edge borders exactly 2 triangles.
    pub closed: bool,
    /// Two-sided edges are traversed in opposite directions by their faces.
    pub oriented: bool,
    /// V - E + F on the welded mesh.
    pub euler_characteristic: i64,
}

/// Undirected edge incidence on the welded mesh.
///
/// Key is (min, max) of welded vertex ids; the value records, per incident
/// triangle, whether the triangle traverses the edge as (min -> max).
fn edge_incidence(mesh: &TriangleMesh) -> (TriangleMesh, HashMap<(u32, u32), Vec<bool>>) {
    let welded = mesh.cleaned(Some(WELD_TOLERANCE));
    let mut edges: HashMap<(u32, u32), Vec<bool>> = HashMap::new();
    for tri in &welded.triangles {
        for e in 0..3 {
            let a = tri[e];
            let b = tri[(e + 1) % 3];
            let key = (a.min(b), a.max(b));
            edges.entry(key).or_default().push(a < b);
        }
    }
    (welded, edges)
}

/// Check edge-manifoldness, closedness, and orientation consistency; always
/// produces a report. Computed on the welded mesh so duplicated seams do not
/// masquerade as boundaries.
pub fn check_watertight_manifold(mesh: &TriangleMesh) -> ManifoldReport {
    let (welded, edges) = edge_incidence(mesh);
    let mut edge_manifold = true;
    let mut closed = true;
    let mut oriented = true;
    for dirs in edges.values() {
        match dirs.len() {
            1 => closed = false,
            2 => {
                if dirs[0] == dirs[1] {
                    oriented = false;
                }
            }
            _ => {
                edge_manifold = false;
                closed = false;
            }
        }
    }
    let v = welded.positions.len() as i64;
    let e = edges.len() as i64;
    let f = welded.triangles.len() as i64;
    ManifoldReport {
        edge_manifold,
        closed,
        oriented,
        euler_characteristic: v - e + f,
    }
}

/// Number of connected components (triangles linked through shared welded
/// edges). Isolated triangles each count as one component.
pub fn connected_components(mesh: &TriangleMesh) -> usize {
    let welded = mesh.cleaned(Some(WELD_TOLERANCE));
    let n = welded.triangles.len();
    if n == 0 {
        return 0;
    }
    // Union-find over triangles.
    let mut parent: Vec<u32> = (0..n as u32).collect();
    fn find(parent: &mut [u32], mut x: u32) -> u32 {
        while parent[x as usize] != x {
            parent[x as usize] = parent[parent[x as usize] as usize];
            x = parent[x as usize];
        }
        x
    }
    let mut edge_tris: HashMap<(u32, u32), u32> = HashMap::new();
    for (t, tri) in welded.triangles.iter().enumerate() {
        for e in 0..3 {
            let a = tri[e];
            let b = tri[(e + 1) % 3];
            let key = (a.min(b), a.max(b));
            match edge_tris.get(&key) {
                Some(&first) => {
                    let ra = find(&mut parent, first);
                    let rb = find(&mut parent, t as u32);
                    parent[ra as usize] = rb;
                }
                None => {
                    edge_tris.insert(key, t as u32);
                }
            }
        }
    }
    let mut roots: Vec<u32> = (0..n as u32).map(|t| find(&mut parent, t)).collect();
    roots.sort_unstable();
    roots.dedup();
    roots.len()
}

/// Interior-edge dihedral angles in degrees with their edge lengths.
///
/// Convention: 180 = coplanar faces, 90 = right-angle crease, small values =
/// knife edges. Requires a closed, edge-manifold mesh (every welded edge has
/// exactly two faces).
pub fn dihedral_angles(mesh: &TriangleMesh) -> Result<Vec<(f64, f64)>, MeshError> {
    let (welded, edges) = edge_incidence(mesh);
    let mut tri_of_edge: HashMap<(u32, u32), Vec<u32>> = HashMap::new();
    for (t, tri) in welded.triangles.iter().enumerate() {
        for e in 0..3 {
            let a = tri[e];
            let b = tri[(e + 1) % 3];
            tri_of_edge
                .entry((a.min(b), a.max(b)))
                .or_default()
                .push(t as u32);
        }
    }
    for (key, dirs) in &edges {
        if dirs.len() != 2 {
            return Err(MeshError::NonManifoldInput(format!(
                "edge ({}, {}) has {} incident faces",
                key.0,
                key.1,
                dirs.len()
            )));
        }
    }
    let mut out = Vec::with_capacity(edges.len());
    for (key, tris) in &tri_of_edge {
        let (a, b) = *key;
        let length = (welded.positions[a as usize] - welded.positions[b as usize]).norm();
        let n0 = welded.face_normal(tris[0] as usize);
        let n1 = welded.face_normal(tris[1] as usize);
        let (n0, n1) = match (n0, n1) {
            (Some(n0), Some(n1)) => (n0, n1),
            _ => continue,
        };
        let cos = n0.dot(&n1).clamp(-1.0, 1.0);
        let normal_deviation = cos.acos().to_degrees();
        out.push((180.0 - normal_deviation, length));
    }
    Ok(out)
}

/// Length-weighted histogram of interior-edge dihedral angles over [0, 180].
#[derive(Debug, Clone)]
pub struct DihedralHistogram {
    pub bins: Vec<f64>,
    pub bin_width: f64,
}

impl DihedralHistogram {
    pub fn total_weight(&self) -> f64 {
        self.bins.iter().sum()
    }
}

/// Histogram form of [`dihedral_angles`]; bin weights sum to the total
/// interior edge length.
pub fn dihedral_histogram(mesh: &TriangleMesh, bins: usize) -> Result<DihedralHistogram, MeshError> {
    assert!(bins > 0, "bin count must be positive");
    let width = 180.0 / bins as f64;
    let mut hist = vec![0.0; bins];
    for (angle, length) in dihedral_angles(mesh)? {
        let mut idx = (angle / width) as usize;
        if idx >= bins {
            idx = bins - 1;
        }
        hist[idx] += length;
    }
    Ok(DihedralHistogram {
        bins: hist,
        bin_width: width,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn cube_is_watertight() {
        let cube = fixtures::cube(1.0);
        let report = check_watertight_manifold(&cube);
        assert!(report.edge_manifold);
        assert!(report.closed);
        assert!(report.oriented);
        assert_eq!(report.euler_characteristic, 2);
    }

    #[test]
    fn single_triangle_is_open() {
        let mesh = TriangleMesh::new(
            vec![
                Vec3::new(0.0, 0.0, 0.0),
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(0.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let report = check_watertight_manifold(&mesh);
        assert!(report.edge_manifold);
        assert!(!report.closed);
        assert!(report.oriented);
        assert_eq!(report.euler_characteristic, 1);
    }

    #[test]
    fn three_triangle_fan_is_non_manifold() {
        let mesh = fixtures::non_manifold_fan();
        let report = check_watertight_manifold(&mesh);
        assert!(!report.edge_manifold);
    }

    #[test]
    fn normalize_cube_padding() {
        let mut cube = fixtures::cube(5.0);
        for p in &mut cube.positions {
            *p += Vec3::new(5.0, 5.0, 5.0);
        }
        let (norm, t) = normalize_to_unit_cube(&cube, 0.05).unwrap();
        let (lo, hi) = norm.aabb().unwrap();
        assert!((lo - Vec3::repeat(-0.95)).norm() < 1e-12);
        assert!((hi - Vec3::repeat(0.95)).norm() < 1e-12);
        // Transform inverts back to source coordinates.
        for (orig, now) in cube.positions.iter().zip(&norm.positions) {
            assert!((t.invert(*now) - orig).norm() < 1e-12 * 10.0);
        }
    }

    #[test]
    fn normalize_is_fixed_point_when_already_normalized() {
        let cube = fixtures::cube(0.95);
        let (_, t) = normalize_to_unit_cube(&cube, 0.05).unwrap();
        assert!((t.scale - 1.0).abs() < 1e-12);
        assert!(t.translation.norm() < 1e-12);
    }

    #[test]
    fn normalize_degenerate_bounds() {
        let mesh = TriangleMesh {
            positions: vec![Vec3::zeros(); 3],
            triangles: vec![[0, 1, 2]],
            provenance: Provenance::default(),
        };
        assert!(matches!(
            normalize_to_unit_cube(&mesh, 0.05),
            Err(MeshError::DegenerateBounds)
        ));
    }

    #[test]
    fn welding_merges_duplicates() {
        let mesh = TriangleMesh::new(
            vec![
                Vec3::new(0.0, 0.0, 0.0),
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(0.0, 1.0, 0.0),
                Vec3::new(1.0, 0.0, 0.0), // duplicate of 1
                Vec3::new(0.0, 1.0, 0.0), // duplicate of 2
                Vec3::new(1.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2], [3, 5, 4]],
        )
        .unwrap();
        let welded = mesh.cleaned(Some(1e-9));
        assert_eq!(welded.positions.len(), 4);
        assert_eq!(welded.triangles.len(), 2);
        let report = check_watertight_manifold(&welded);
        assert!(report.edge_manifold);
        assert!(report.oriented);
    }

    #[test]
    fn cleanup_drops_degenerates() {
        let mesh = TriangleMesh::new(
            vec![
                Vec3::new(0.0, 0.0, 0.0),
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(2.0, 0.0, 0.0), // collinear
                Vec3::new(0.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2], [0, 1, 3], [1, 1, 3]],
        )
        .unwrap();
        let cleaned = mesh.cleaned(None);
        assert_eq!(cleaned.triangles.len(), 1);
    }

    #[test]
    fn cube_dihedrals() {
        let cube = fixtures::cube(1.0);
        let angles = dihedral_angles(&cube).unwrap();
        // 12 crease edges at 90 degrees, 6 face diagonals at 180.
        let creases: Vec<_> = angles.iter().filter(|(a, _)| (a - 90.0).abs() < 1e-9).collect();
        let flats: Vec<_> = angles.iter().filter(|(a, _)| (a - 180.0).abs() < 1e-9).collect();
        assert_eq!(creases.len(), 12);
        assert_eq!(flats.len(), 6);
        assert_eq!(angles.len(), 18);

        let hist = dihedral_histogram(&cube, 180).unwrap();
        let total: f64 = angles.iter().map(|(_, l)| l).sum();
        assert!((hist.total_weight() - total).abs() < 1e-9);
        // Invariant under bin count.
        let hist2 = dihedral_histogram(&cube, 7).unwrap();
        assert!((hist2.total_weight() - total).abs() < 1e-9);
    }

    #[test]
    fn tetrahedron_dihedral_is_closed_form() {
        let tet = fixtures::tetrahedron(1.0);
        let expected = (1.0f64 / 3.0).acos().to_degrees(); // ~70.53
        for (angle, _) in dihedral_angles(&tet).unwrap() {
            assert!((angle - expected).abs() < 1e-9, "angle {angle}");
        }
    }

    #[test]
    fn icosphere_is_nearly_flat_everywhere() {
        let sphere = fixtures::icosphere(1.0, 3);
        for (angle, _) in dihedral_angles(&sphere).unwrap() {
            assert!(angle > 150.0, "angle {angle}");
        }
    }

    #[test]
    fn dihedral_rejects_open_mesh() {
        let mesh = TriangleMesh::new(
            vec![
                Vec3::new(0.0, 0.0, 0.0),
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(0.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap();
        assert!(matches!(
            dihedral_angles(&mesh),
            Err(MeshError::NonManifoldInput(_))
        ));
    }

    #[test]
    fn component_counting() {
        let cube = fixtures::cube(1.0);
        assert_eq!(connected_components(&cube), 1);
        let two = fixtures::merge(&[fixtures::cube(1.0), {
            let mut c = fixtures::cube(1.0);
            for p in &mut c.positions {
                *p += Vec3::new(5.0, 0.0, 0.0);
            }
            c
        }]);
        assert_eq!(connected_components(&two), 2);
    }
}
