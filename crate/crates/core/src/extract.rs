//! Manifold dual-marching-cubes extraction from corner occupancy.
//!
//! One mesh vertex is placed per *crossing-edge cycle* per cell (not per
//! cell, as in classic dual contouring): the 256-entry case table partitions
//! each cell's sign-changing edges into cycles by pairing them across faces
//! with the marching-squares rule. Every crossing grid edge then produces
//! exactly one quad connecting the cycle vertices of the four cells sharing
//! it. Because face pairings are a function of the face's corner occupancy
//! alone (with a fixed-diagonal resolution of the ambiguous face, identical
//! from both sides), each quad-mesh edge is shared by exactly two quads and
//! the result is closed, edge-manifold, and consistently orientable.
//!
//! Topology is a function of occupancy bits only. Geometry comes from the
//! field: crossing points are located by bisecting the occupancy margin
//! along crossing edges, and a cell's vertex is the centroid of its cycle's
//! crossing points, optionally refined by axis-aligned root sweeps.

use rayon::prelude::*;
use std::sync::OnceLock;

use crate::field::LinfField;
use crate::mesh::{NormalizationTransform, Provenance, TriangleMesh};
use crate::morton;
use crate::voxel::SparseCornerGrid;
use crate::Vec3;

#[derive(Debug, thiserror::Error)]
pub enum ExtractError {
    #[error("domain boundary corners are not all exterior; increase padding or lower eps")]
    BoundaryNotExterior,
    #[error("no occupancy sign change on edge (grid invariant violation)")]
    NoSignChange,
    #[error("records are inconsistent: {0}")]
    InconsistentRecords(String),
}

// ---------------------------------------------------------------------------
// Cell topology: corners, edges, case table
// ---------------------------------------------------------------------------

/// Corner index from unit offsets: `dx + 2*dy + 4*dz`.
#[inline]
pub fn corner_index(dx: u32, dy: u32, dz: u32) -> usize {
    (dx + 2 * dy + 4 * dz) as usize
}

/// Offsets of the eight cell corners, indexed by [`corner_index`].
pub const CORNER_OFFSETS: [[u32; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [0, 1, 0],
    [1, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [0, 1, 1],
    [1, 1, 1],
];

/// Local edge ids: `axis * 4 + du + 2 * dv` where `(u, v)` are the axes
/// cyclically following `axis`. The edge runs along `axis` from offset 0 to
/// 1, at transverse offsets `(du, dv)`. A cell owns the three edges leaving
/// its minimum corner: local ids 0, 4, 8 (du = dv = 0 per axis).
pub fn edge_corners(e: usize) -> (usize, usize) {
    let axis = e / 4;
    let du = (e % 4) % 2;
    let dv = (e % 4) / 2;
    let u = (axis + 1) % 3;
    let v = (axis + 2) % 3;
    let mut a = [0u32; 3];
    a[u] = du as u32;
    a[v] = dv as u32;
    let mut b = a;
    b[axis] = 1;
    (
        corner_index(a[0], a[1], a[2]),
        corner_index(b[0], b[1], b[2]),
    )
}

/// Per-occupancy-byte partition of crossing edges into cycles.
pub struct CaseTable {
    /// Components per byte; each component is the sorted list of local edge
    /// ids of one crossing-edge cycle. Components ordered by smallest edge.
    pub components: Vec<Vec<Vec<u8>>>,
    /// Component index per (byte, local edge); [`NO_COMPONENT`] if the edge
    /// has no sign change under that byte.
    pub comp_of_edge: Vec<[u8; 12]>,
    /// Number of components (dual vertices) per byte.
    pub vertex_count: [u8; 256],
}

pub const NO_COMPONENT: u8 = u8::MAX;

static CASE_TABLE: OnceLock<CaseTable> = OnceLock::new();

pub fn case_table() -> &'static CaseTable {
    CASE_TABLE.get_or_init(build_case_table)
}

fn build_case_table() -> CaseTable {
    // Map corner pair -> local edge id.
    let mut edge_of_pair = std::collections::HashMap::new();
    for e in 0..12 {
        let (a, b) = edge_corners(e);
        edge_of_pair.insert((a.min(b), a.max(b)), e as u8);
    }

    // Faces: (axis, side) with corners in cyclic order c00, c10, c11, c01
    // over the transverse axes (u, v). c00 is the face corner with the
    // smallest cell offsets, so the fixed ambiguity diagonal (c00, c11) is
    // the same geometric diagonal seen from both cells sharing the face.
    let mut faces: Vec<[usize; 4]> = Vec::new();
    for axis in 0..3usize {
        let u = (axis + 1) % 3;
        let v = (axis + 2) % 3;
        for side in 0..2u32 {
            let mut quad = [0usize; 4];
            for (slot, (du, dv)) in [(0u32, 0u32), (1, 0), (1, 1), (0, 1)].iter().enumerate() {
                let mut c = [0u32; 3];
                c[axis] = side;
                c[u] = *du;
                c[v] = *dv;
                quad[slot] = corner_index(c[0], c[1], c[2]);
            }
            faces.push(quad);
        }
    }

    let mut components = Vec::with_capacity(256);
    let mut comp_of_edge = Vec::with_capacity(256);
    let mut vertex_count = [0u8; 256];

    for byte in 0..256usize {
        let occ = |c: usize| byte >> c & 1 != 0;
        let crossing: Vec<u8> = (0..12)
            .filter(|&e| {
                let (a, b) = edge_corners(e);
                occ(a) != occ(b)
            })
            .map(|e| e as u8)
            .collect();

        // Each crossing edge gets exactly one partner per adjacent face.
        let mut links: Vec<Vec<u8>> = vec![Vec::new(); 12];
        for quad in &faces {
            let face_edges: [u8; 4] = std::array::from_fn(|k| {
                let a = quad[k];
                let b = quad[(k + 1) % 4];
                edge_of_pair[&(a.min(b), a.max(b))]
            });
            let cross: Vec<usize> = (0..4)
                .filter(|&k| crossing.contains(&face_edges[k]))
                .collect();
            match cross.len() {
                0 => {}
                2 => {
                    let (x, y) = (face_edges[cross[0]], face_edges[cross[1]]);
                    links[x as usize].push(y);
                    links[y as usize].push(x);
                }
                4 => {
                    // Ambiguous face: pair around c00 (slots 0, 3) and
                    // around c11 (slots 1, 2). Byte-independent, hence
                    // complement-symmetric and consistent across the two
                    // cells sharing the face.
                    links[face_edges[0] as usize].push(face_edges[3]);
                    links[face_edges[3] as usize].push(face_edges[0]);
                    links[face_edges[1] as usize].push(face_edges[2]);
                    links[face_edges[2] as usize].push(face_edges[1]);
                }
                n => unreachable!("face with {n} crossing edges"),
            }
        }

        // Walk the cycles.
        let mut comp = [NO_COMPONENT; 12];
        let mut comps: Vec<Vec<u8>> = Vec::new();
        for &start in &crossing {
            if comp[start as usize] != NO_COMPONENT {
                continue;
            }
            let id = comps.len() as u8;
            let mut cycle = Vec::new();
            let mut cur = start;
            loop {
                comp[cur as usize] = id;
                cycle.push(cur);
                let next = links[cur as usize]
                    .iter()
                    .copied()
                    .find(|&n| comp[n as usize] == NO_COMPONENT);
                match next {
                    Some(n) => cur = n,
                    None => break,
                }
            }
            cycle.sort_unstable();
            comps.push(cycle);
        }
        comps.sort_by_key(|c| c[0]);
        // Re-derive component ids after canonical sorting.
        let mut comp = [NO_COMPONENT; 12];
        for (id, c) in comps.iter().enumerate() {
            for &e in c {
                comp[e as usize] = id as u8;
            }
        }
        vertex_count[byte] = comps.len() as u8;
        components.push(comps);
        comp_of_edge.push(comp);
    }

    CaseTable {
        components,
        comp_of_edge,
        vertex_count,
    }
}

// ---------------------------------------------------------------------------
// Crossing edges and bisection
// ---------------------------------------------------------------------------

/// Primal grid edge with an occupancy sign change. `base` is the corner at
/// the lower end; the edge runs one step along `axis`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridEdge {
    pub axis: u8,
    pub base: [u16; 3],
}

impl GridEdge {
    #[inline]
    fn sort_key(&self) -> (u8, u16, u16, u16) {
        (self.axis, self.base[0], self.base[1], self.base[2])
    }

    #[inline]
    fn lookup_key(&self) -> u64 {
        ((self.axis as u64) << 40)
            | morton::encode(self.base[0] as u32, self.base[1] as u32, self.base[2] as u32)
    }
}

/// All grid edges whose endpoint occupancies differ, in canonical
/// (axis, i, j, k) order. Every crossing edge has its occupied endpoint in
/// the band, so enumerating band-corner-incident edges is exhaustive.
pub fn find_crossing_edges(grid: &SparseCornerGrid) -> Vec<GridEdge> {
    let r = grid.resolution();
    let band: Vec<(u32, u32, u32)> = grid.band_corners().collect();
    let mut edges: Vec<GridEdge> = band
        .par_iter()
        .fold(Vec::new, |mut acc, &(i, j, k)| {
            let occ = grid.occupied(i, j, k);
            for axis in 0..3u8 {
                let step = [u32::from(axis == 0), u32::from(axis == 1), u32::from(axis == 2)];
                // Edge leaving this corner in the positive direction.
                let (ni, nj, nk) = (i + step[0], j + step[1], k + step[2]);
                if ni <= r && nj <= r && nk <= r && grid.occupied(ni, nj, nk) != occ {
                    acc.push(GridEdge {
                        axis,
                        base: [i as u16, j as u16, k as u16],
                    });
                }
                // Edge arriving from below: ours to emit only when the lower
                // corner is outside the band (it would emit it otherwise).
                if i >= step[0] && j >= step[1] && k >= step[2] {
                    let (pi, pj, pk) = (i - step[0], j - step[1], k - step[2]);
                    if !grid.is_band(pi, pj, pk) && grid.occupied(pi, pj, pk) != occ {
                        acc.push(GridEdge {
                            axis,
                            base: [pi as u16, pj as u16, pk as u16],
                        });
                    }
                }
            }
            acc
        })
        .reduce(Vec::new, |mut a, mut b| {
            a.append(&mut b);
            a
        });
    edges.par_sort_unstable_by_key(|e| e.sort_key());
    edges
}

/// Locate the margin sign change on a crossing edge by `iters` bisection
/// steps. `a` must be the occupied endpoint. The returned point is clamped
/// away from the endpoints by `2^-iters` of the edge length.
pub fn bisect_crossing(
    a: Vec3,
    b: Vec3,
    field: &LinfField,
    iters: u32,
) -> Result<Vec3, ExtractError> {
    if field.occupancy_margin(a) < 0.0 || field.occupancy_margin(b) >= 0.0 {
        return Err(ExtractError::NoSignChange);
    }
    Ok(bisect_param(a, b, field, iters))
}

fn bisect_param(a: Vec3, b: Vec3, field: &LinfField, iters: u32) -> Vec3 {
    let mut t_occ = 0.0f64;
    let mut t_un = 1.0f64;
    for _ in 0..iters {
        let tm = 0.5 * (t_occ + t_un);
        if field.occupancy_margin(a + (b - a) * tm) >= 0.0 {
            t_occ = tm;
        } else {
            t_un = tm;
        }
    }
    let lo = 0.5f64.powi(iters as i32);
    let t = (0.5 * (t_occ + t_un)).clamp(lo, 1.0 - lo);
    a + (b - a) * t
}

// ---------------------------------------------------------------------------
// Vertex placement
// ---------------------------------------------------------------------------

/// Place the dual vertex of one crossing-edge cycle: centroid of the
/// cycle's crossing points, clamped into the half-open cell.
///
/// With `refine`, two rounds of per-axis sweeps relocate the estimate onto
/// the margin's zero level along each axis: the segment through the estimate
/// spanning the cell is checked for sign changes against both walls, each
/// bracket is bisected, and the estimate moves to the root (or the midpoint
/// of the occupied sub-interval when the segment crosses on both sides).
/// This pins vertices onto creases and corners, where the centroid alone
/// lands inside the wedge.
pub fn place_vertex(
    cell_min: Vec3,
    h: f64,
    crossings: &[Vec3],
    field: &LinfField,
    refine: bool,
    iters: u32,
) -> Vec3 {
    debug_assert!(!crossings.is_empty());
    let mut p = crossings.iter().sum::<Vec3>() / crossings.len() as f64;
    p = clamp_into_cell(p, cell_min, h);
    if !refine {
        return p;
    }
    for _round in 0..2 {
        for axis in 0..3 {
            let mut lo = p;
            lo[axis] = cell_min[axis];
            let mut hi = p;
            hi[axis] = cell_min[axis] + h;
            let occ_lo = field.occupancy_margin(lo) >= 0.0;
            let occ_hi = field.occupancy_margin(hi) >= 0.0;
            let occ_p = field.occupancy_margin(p) >= 0.0;
            let mut roots: [f64; 2] = [0.0; 2];
            let mut nroots = 0;
            if occ_lo != occ_p {
                let (a, b) = if occ_lo { (lo, p) } else { (p, lo) };
                roots[nroots] = bisect_param(a, b, field, iters)[axis];
                nroots += 1;
            }
            if occ_p != occ_hi {
                let (a, b) = if occ_p { (p, hi) } else { (hi, p) };
                roots[nroots] = bisect_param(a, b, field, iters)[axis];
                nroots += 1;
            }
            match nroots {
                1 => p[axis] = roots[0],
                2 => p[axis] = 0.5 * (roots[0] + roots[1]),
                _ => {}
            }
        }
        p = clamp_into_cell(p, cell_min, h);
    }
    p
}

fn clamp_into_cell(mut p: Vec3, cell_min: Vec3, h: f64) -> Vec3 {
    // Keep offsets in [0, 1): the upper wall is excluded.
    let hi_frac = 1.0 - 1e-9;
    for a in 0..3 {
        p[a] = p[a].clamp(cell_min[a], cell_min[a] + h * hi_frac);
    }
    p
}

// ---------------------------------------------------------------------------
// Records and extraction
// ---------------------------------------------------------------------------

/// Per-voxel record: everything the codec stores. Offsets are in-cell
/// coordinates in `[0, 1)^3`, one per crossing-edge cycle, in component
/// order. `tri_bits` holds the triangulation choice of the quads dual to the
/// voxel's three owned edges (bit index = axis).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DmcRecord {
    pub coords: [u16; 3],
    pub occupancy: u8,
    pub tri_bits: u8,
    pub vertex_count: u8,
    pub offsets: [[f32; 3]; 4],
}

impl DmcRecord {
    #[inline]
    pub fn morton(&self) -> u64 {
        morton::encode(
            self.coords[0] as u32,
            self.coords[1] as u32,
            self.coords[2] as u32,
        )
    }
}

/// Extraction output: canonical records plus the assembled triangle mesh
/// (in source units, via the stored transform).
pub struct DmcMesh {
    pub resolution: u32,
    pub records: Vec<DmcRecord>,
    pub transform: NormalizationTransform,
    pub assembled: TriangleMesh,
    pub quad_count: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct ExtractConfig {
    pub bisect_iters: u32,
    pub refine: bool,
    pub transform: NormalizationTransform,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig {
            bisect_iters: 12,
            refine: false,
            transform: NormalizationTransform::identity(),
        }
    }
}

/// Run dual marching cubes over a classified grid.
pub fn extract(
    grid: &SparseCornerGrid,
    field: &LinfField,
    config: &ExtractConfig,
) -> Result<DmcMesh, ExtractError> {
    if grid.stats().blocked_on_boundary {
        return Err(ExtractError::BoundaryNotExterior);
    }
    let table = case_table();
    let r = grid.resolution();
    let h = grid.spacing();

    let edges = find_crossing_edges(grid);

    // Bisect crossing points (pure field queries, order preserved). A
    // missing sign change means the conservative band under-covered an
    // envelope overhang (possible for sliver geometry where plane distances
    // underestimate); fall back to the midpoint, which keeps the point on
    // the edge and the topology intact.
    let crossings: Vec<Vec3> = edges
        .par_iter()
        .map(|e| {
            let (i, j, k) = (e.base[0] as u32, e.base[1] as u32, e.base[2] as u32);
            let step = [u32::from(e.axis == 0), u32::from(e.axis == 1), u32::from(e.axis == 2)];
            let pa = grid.corner_position(i, j, k);
            let pb = grid.corner_position(i + step[0], j + step[1], k + step[2]);
            let occ_a = grid.occupied(i, j, k);
            let (a, b) = if occ_a { (pa, pb) } else { (pb, pa) };
            bisect_crossing(a, b, field, config.bisect_iters).unwrap_or_else(|_| 0.5 * (pa + pb))
        })
        .collect();

    // Lookup from edge key to crossing slot.
    let mut edge_lookup: Vec<(u64, u32)> = edges
        .iter()
        .enumerate()
        .map(|(s, e)| (e.lookup_key(), s as u32))
        .collect();
    edge_lookup.par_sort_unstable_by_key(|&(k, _)| k);

    // Cells incident to any crossing edge, in Morton order.
    let mut cell_keys: Vec<u64> = edges
        .par_iter()
        .fold(Vec::new, |mut acc, e| {
            let base = [e.base[0] as u32, e.base[1] as u32, e.base[2] as u32];
            let axis = e.axis as usize;
            let u = (axis + 1) % 3;
            let v = (axis + 2) % 3;
            for (du, dv) in [(0u32, 0u32), (1, 0), (0, 1), (1, 1)] {
                let mut c = base;
                if c[u] + du == 0 || c[v] + dv == 0 {
                    continue;
                }
                c[u] = c[u] + du - 1;
                c[v] = c[v] + dv - 1;
                if c[0] < r && c[1] < r && c[2] < r {
                    acc.push(morton::encode(c[0], c[1], c[2]));
                }
            }
            acc
        })
        .reduce(Vec::new, |mut a, mut b| {
            a.append(&mut b);
            a
        });
    cell_keys.par_sort_unstable();
    cell_keys.dedup();

    // Records: occupancy byte, components, vertex placement.
    let mut records: Vec<DmcRecord> = cell_keys
        .par_iter()
        .map(|&key| {
            let (ci, cj, ck) = morton::decode(key);
            let mut byte = 0u8;
            for (c, off) in CORNER_OFFSETS.iter().enumerate() {
                if grid.occupied(ci + off[0], cj + off[1], ck + off[2]) {
                    byte |= 1 << c;
                }
            }
            let comps = &table.components[byte as usize];
            let cell_min = grid.corner_position(ci, cj, ck);
            let mut offsets = [[0.0f32; 3]; 4];
            for (slot, comp) in comps.iter().enumerate() {
                let pts: Vec<Vec3> = comp
                    .iter()
                    .map(|&le| {
                        let ge = local_to_global_edge(ci, cj, ck, le as usize);
                        let pos = edge_lookup
                            .binary_search_by_key(&ge.lookup_key(), |&(k, _)| k)
                            .expect("crossing edge of a record cell must exist");
                        crossings[edge_lookup[pos].1 as usize]
                    })
                    .collect();
                let p = place_vertex(cell_min, h, &pts, field, config.refine, config.bisect_iters);
                for a in 0..3 {
                    offsets[slot][a] = (((p[a] - cell_min[a]) / h).clamp(0.0, 1.0 - 1e-9)) as f32;
                }
            }
            DmcRecord {
                coords: [ci as u16, cj as u16, ck as u16],
                occupancy: byte,
                tri_bits: 0,
                vertex_count: comps.len() as u8,
                offsets,
            }
        })
        .collect();

    let (assembled, quad_count) =
        assemble_records(&mut records, r, &config.transform, TriBits::Compute)?;
    debug_assert_eq!(quad_count, edges.len());
    Ok(DmcMesh {
        resolution: r,
        records,
        transform: config.transform,
        assembled,
        quad_count,
    })
}

/// Global grid edge for a cell's local edge.
fn local_to_global_edge(ci: u32, cj: u32, ck: u32, local: usize) -> GridEdge {
    let axis = local / 4;
    let du = (local % 4) % 2;
    let dv = (local % 4) / 2;
    let u = (axis + 1) % 3;
    let v = (axis + 2) % 3;
    let mut base = [ci, cj, ck];
    base[u] += du as u32;
    base[v] += dv as u32;
    GridEdge {
        axis: axis as u8,
        base: [base[0] as u16, base[1] as u16, base[2] as u16],
    }
}

pub enum TriBits {
    /// Choose the shorter diagonal and store the decision in the records.
    Compute,
    /// Follow the stored decisions (codec reassembly).
    Stored,
}

/// Deterministically assemble the triangle mesh from canonical records.
///
/// Quad connectivity is regenerated purely from occupancy bytes and grid
/// adjacency; nothing but the records is consulted, so the encode and decode
/// paths produce byte-identical index lists. Vertex ids run in record order
/// (Morton order of voxels), then component order within a record.
pub fn assemble_records(
    records: &mut [DmcRecord],
    resolution: u32,
    transform: &NormalizationTransform,
    tri_bits: TriBits,
) -> Result<(TriangleMesh, usize), ExtractError> {
    let table = case_table();
    let h = 2.0 / resolution as f64;

    // Canonical order and per-record vertex bases.
    let mut prev = None;
    let mut keys = Vec::with_capacity(records.len());
    let mut vertex_base = Vec::with_capacity(records.len());
    let mut nverts = 0u32;
    for rec in records.iter() {
        let key = rec.morton();
        if prev.map_or(false, |p| p >= key) {
            return Err(ExtractError::InconsistentRecords(
                "records not in canonical Morton order".into(),
            ));
        }
        prev = Some(key);
        if rec.vertex_count != table.vertex_count[rec.occupancy as usize] {
            return Err(ExtractError::InconsistentRecords(format!(
                "record at {:?} has {} vertices, occupancy byte implies {}",
                rec.coords, rec.vertex_count, table.vertex_count[rec.occupancy as usize]
            )));
        }
        keys.push(key);
        vertex_base.push(nverts);
        nverts += rec.vertex_count as u32;
    }

    // Face-adjacent occupancy consistency.
    for rec in records.iter() {
        for axis in 0..3usize {
            let mut nc = rec.coords;
            if nc[axis] as u32 + 1 >= resolution {
                continue;
            }
            nc[axis] += 1;
            let nkey = morton::encode(nc[0] as u32, nc[1] as u32, nc[2] as u32);
            if let Ok(nidx) = keys.binary_search(&nkey) {
                let other = &records[nidx];
                // Shared face: our corners with offset 1 along `axis`
                // against the neighbor's with offset 0.
                for c in 0..8usize {
                    if CORNER_OFFSETS[c][axis] == 1 {
                        let mut o = CORNER_OFFSETS[c];
                        o[axis] = 0;
                        let oc = corner_index(o[0], o[1], o[2]);
                        if (rec.occupancy >> c & 1) != (other.occupancy >> oc & 1) {
                            return Err(ExtractError::InconsistentRecords(format!(
                                "corner occupancy disagrees between voxels {:?} and {:?}",
                                rec.coords, other.coords
                            )));
                        }
                    }
                }
            }
        }
    }

    // Vertex positions (source units).
    let mut positions = Vec::with_capacity(nverts as usize);
    for rec in records.iter() {
        let cell_min = Vec3::new(
            -1.0 + rec.coords[0] as f64 * h,
            -1.0 + rec.coords[1] as f64 * h,
            -1.0 + rec.coords[2] as f64 * h,
        );
        for s in 0..rec.vertex_count as usize {
            let o = rec.offsets[s];
            let p = cell_min + Vec3::new(o[0] as f64, o[1] as f64, o[2] as f64) * h;
            positions.push(transform.invert(p));
        }
    }

    // Crossing edges from the records' owned edges, canonical order.
    let mut edges: Vec<GridEdge> = Vec::new();
    for rec in records.iter() {
        for axis in 0..3u8 {
            let lo = rec.occupancy & 1 != 0;
            let hi = rec.occupancy >> (1u8 << axis) & 1 != 0;
            if lo != hi {
                edges.push(GridEdge {
                    axis,
                    base: rec.coords,
                });
            }
        }
    }
    edges.sort_unstable_by_key(|e| e.sort_key());

    // One quad per crossing edge.
    let mut triangles: Vec<[u32; 3]> = Vec::with_capacity(edges.len() * 2);
    for e in &edges {
        let axis = e.axis as usize;
        let u = (axis + 1) % 3;
        let v = (axis + 2) % 3;
        let base = [e.base[0] as u32, e.base[1] as u32, e.base[2] as u32];

        // Four cells around the edge, CCW when viewed from +axis.
        let mut quad_idx = [0u32; 4];
        let mut quad_pos = [Vec3::zeros(); 4];
        for (slot, (du, dv)) in [(0u32, 0u32), (1, 0), (1, 1), (0, 1)].iter().enumerate() {
            let mut c = base;
            let out_of_range = c[u] + du == 0 || c[v] + dv == 0 || {
                let mut c2 = c;
                c2[u] = c2[u] + du - 1;
                c2[v] = c2[v] + dv - 1;
                c2[0] >= resolution || c2[1] >= resolution || c2[2] >= resolution
            };
            if out_of_range {
                return Err(ExtractError::InconsistentRecords(format!(
                    "crossing edge at {:?} axis {} touches the domain boundary",
                    e.base, e.axis
                )));
            }
            c[u] = c[u] + du - 1;
            c[v] = c[v] + dv - 1;
            let key = morton::encode(c[0], c[1], c[2]);
            let ridx = keys.binary_search(&key).map_err(|_| {
                ExtractError::InconsistentRecords(format!(
                    "missing record for voxel {c:?} adjacent to a crossing edge"
                ))
            })?;
            let rec = &records[ridx];
            // Local id of this edge within that cell.
            let local = axis * 4 + (1 - du) as usize + 2 * (1 - dv) as usize;
            let comp = table.comp_of_edge[rec.occupancy as usize][local];
            if comp == NO_COMPONENT {
                return Err(ExtractError::InconsistentRecords(format!(
                    "voxel {c:?} does not see the crossing edge at {:?}",
                    e.base
                )));
            }
            let vid = vertex_base[ridx] + comp as u32;
            quad_idx[slot] = vid;
            quad_pos[slot] = positions[vid as usize];
        }

        // Winding: occupied lower endpoint means the surface faces +axis.
        // The owner record (quad slot 2, transverse offsets (1,1)) has the
        // edge endpoints as its corners 0 and 1 << axis.
        let owner_key = morton::encode(base[0], base[1], base[2]);
        let owner_idx = keys.binary_search(&owner_key).expect("owner is a record");
        let lower_occupied = records[owner_idx].occupancy & 1 != 0;
        let order: [usize; 4] = if lower_occupied {
            [0, 1, 2, 3]
        } else {
            [0, 3, 2, 1]
        };
        let q: [u32; 4] = std::array::from_fn(|s| quad_idx[order[s]]);
        let qp: [Vec3; 4] = std::array::from_fn(|s| quad_pos[order[s]]);

        let bit = match tri_bits {
            TriBits::Compute => {
                let d0 = (qp[0] - qp[2]).norm_squared();
                let d1 = (qp[1] - qp[3]).norm_squared();
                let bit = if d0 < d1 {
                    0u8
                } else if d1 < d0 {
                    1
                } else if q[0].min(q[2]) <= q[1].min(q[3]) {
                    0
                } else {
                    1
                };
                if bit == 1 {
                    records[owner_idx].tri_bits |= 1 << axis;
                }
                bit
            }
            TriBits::Stored => records[owner_idx].tri_bits >> axis & 1,
        };

        emit_quad(&mut triangles, q, qp, bit);
    }

    let quad_count = edges.len();
    Ok((
        TriangleMesh {
            positions,
            triangles,
            provenance: Provenance {
                source: None,
                transform: Some(*transform),
            },
        },
        quad_count,
    ))
}

/// Split a quad along the chosen diagonal; collapse to a single triangle
/// when two corners coincide geometrically.
fn emit_quad(triangles: &mut Vec<[u32; 3]>, q: [u32; 4], qp: [Vec3; 4], bit: u8) {
    const COINCIDENT: f64 = 1e-12;
    let mut distinct: Vec<u32> = Vec::with_capacity(4);
    let mut dpos: Vec<Vec3> = Vec::with_capacity(4);
    for s in 0..4 {
        let p = qp[s];
        if dpos.iter().all(|&d| (d - p).norm() > COINCIDENT) {
            distinct.push(q[s]);
            dpos.push(p);
        }
    }
    match distinct.len() {
        4 => {
            if bit == 0 {
                triangles.push([q[0], q[1], q[2]]);
                triangles.push([q[0], q[2], q[3]]);
            } else {
                triangles.push([q[1], q[2], q[3]]);
                triangles.push([q[1], q[3], q[0]]);
            }
        }
        3 => triangles.push([distinct[0], distinct[1], distinct[2]]),
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{FieldMode, LinfField};
    use crate::fixtures;
    use crate::mesh::{check_watertight_manifold, normalize_to_unit_cube};
    use crate::voxel::classify_corners;

    #[test]
    fn case_table_structure() {
        let t = case_table();
        // Empty and full cells have no components.
        assert_eq!(t.vertex_count[0], 0);
        assert_eq!(t.vertex_count[255], 0);
        // One corner set: one cycle over the three incident edges.
        for c in 0..8 {
            let byte = 1usize << c;
            assert_eq!(t.vertex_count[byte], 1, "byte {byte:#x}");
            assert_eq!(t.components[byte][0].len(), 3);
        }
        // Two opposite corners: two cycles.
        assert_eq!(t.vertex_count[0b1000_0001], 2);
        // Alternating tetrahedral corners (0, 3, 5, 6): the fixed-diagonal
        // ambiguity rule separates corners 0 and 7 and joins the rest into
        // one hexagonal cycle: three components, same for the complement.
        assert_eq!(t.vertex_count[0b0110_1001], 3);
        assert_eq!(t.vertex_count[0b1001_0110], 3);
        for byte in 0..256 {
            assert!(t.vertex_count[byte] <= 4);
            // Every crossing edge in exactly one component.
            let mut seen = [false; 12];
            for comp in &t.components[byte] {
                assert!(comp.len() >= 3, "cycles have length >= 3");
                for &e in comp {
                    assert!(!seen[e as usize]);
                    seen[e as usize] = true;
                }
            }
            for e in 0..12 {
                let (a, b) = edge_corners(e);
                let crossing = (byte >> a & 1) != (byte >> b & 1);
                assert_eq!(crossing, seen[e]);
                assert_eq!(crossing, t.comp_of_edge[byte][e] != NO_COMPONENT);
            }
        }
    }

    #[test]
    fn case_table_is_complement_symmetric() {
        let t = case_table();
        for byte in 0..256usize {
            let comp = byte ^ 0xff;
            assert_eq!(
                t.components[byte], t.components[comp],
                "byte {byte:#x} vs complement"
            );
        }
    }

    fn tiny_center_field(eps: f64) -> LinfField {
        let m = fixtures::tetrahedron(1e-4);
        LinfField::build(&m, eps, FieldMode::Linf).unwrap()
    }

    /// Synthetic grid with a single occupied corner at the domain center.
    fn single_corner_setup(r: u32) -> (crate::voxel::SparseCornerGrid, LinfField) {
        let h = 2.0 / r as f64;
        let c = r / 2;
        let keys = vec![crate::morton::encode(c, c, c)];
        let margins = vec![0.4 * h];
        let (grid, warnings) =
            crate::voxel::SparseCornerGrid::from_band(r, 0.4 * h, keys, &margins, 0);
        assert!(warnings.is_empty());
        (grid, tiny_center_field(0.4 * h))
    }

    fn signed_volume(mesh: &TriangleMesh) -> f64 {
        let mut v = 0.0;
        for t in 0..mesh.triangles.len() {
            let [a, b, c] = mesh.triangle_vertices(t);
            v += a.dot(&b.cross(&c)) / 6.0;
        }
        v
    }

    #[test]
    fn single_occupied_corner_is_a_closed_genus_zero_solid() {
        let (grid, field) = single_corner_setup(32);
        let dmc = extract(&grid, &field, &ExtractConfig::default()).unwrap();
        assert_eq!(dmc.records.len(), 8);
        for rec in &dmc.records {
            assert_eq!(rec.vertex_count, 1);
        }
        assert_eq!(dmc.quad_count, 6);
        assert_eq!(dmc.assembled.triangles.len(), 12);
        assert_eq!(dmc.assembled.positions.len(), 8);
        let report = check_watertight_manifold(&dmc.assembled);
        assert!(report.edge_manifold && report.closed && report.oriented);
        assert_eq!(report.euler_characteristic, 2);
        // Outward orientation: positive enclosed volume.
        assert!(signed_volume(&dmc.assembled) > 0.0);
    }

    #[test]
    fn crossing_edges_match_exhaustive_scan() {
        let sphere = fixtures::icosphere(0.5, 3);
        let r = 32;
        let field = LinfField::build(&sphere, 1.5 * 2.0 / r as f64, FieldMode::Linf).unwrap();
        let (grid, _) = classify_corners(&sphere, &field, r).unwrap();
        let edges = find_crossing_edges(&grid);
        // Oracle: scan every grid edge.
        let mut expect = Vec::new();
        for axis in 0..3u8 {
            let step = [u32::from(axis == 0), u32::from(axis == 1), u32::from(axis == 2)];
            for k in 0..=r {
                for j in 0..=r {
                    for i in 0..=r {
                        let (ni, nj, nk) = (i + step[0], j + step[1], k + step[2]);
                        if ni > r || nj > r || nk > r {
                            continue;
                        }
                        if grid.occupied(i, j, k) != grid.occupied(ni, nj, nk) {
                            expect.push(GridEdge {
                                axis,
                                base: [i as u16, j as u16, k as u16],
                            });
                        }
                    }
                }
            }
        }
        expect.sort_unstable_by_key(|e| e.sort_key());
        assert_eq!(edges, expect);

        // A grid with nothing blocked floods entirely: no crossings.
        let (empty, _) = crate::voxel::SparseCornerGrid::from_band(32, 0.1, vec![], &[], 0);
        assert!(find_crossing_edges(&empty).is_empty());
    }

    #[test]
    fn single_corner_crossing_edges() {
        let (grid, _) = single_corner_setup(32);
        let edges = find_crossing_edges(&grid);
        assert_eq!(edges.len(), 6);
    }

    #[test]
    fn bisection_converges_at_two_to_the_k() {
        // Flat sheet at z = 0, eps = 1.5h: along the vertical edge from
        // z = h to z = 2h the margin root is exactly at z = 1.5h.
        let r = 32u32;
        let h = 2.0 / r as f64;
        let patch = fixtures::open_patch(0.9, 0.9, 2, 2);
        let field = LinfField::build(&patch, 1.5 * h, FieldMode::Linf).unwrap();
        let a = Vec3::new(0.0, 0.0, h); // margin +0.5h: occupied
        let b = Vec3::new(0.0, 0.0, 2.0 * h); // margin -0.5h
        for k in [1u32, 4, 8, 12, 20] {
            let x = bisect_crossing(a, b, &field, k).unwrap();
            let err = (x.z - 1.5 * h).abs();
            assert!(err <= h * 0.5f64.powi(k as i32), "k={k} err={err:.3e}");
        }
        // Doubling k from 10 to 20 shrinks the worst-case error by >= 2^9.
        let x10 = bisect_crossing(a, b, &field, 10).unwrap();
        let x20 = bisect_crossing(a, b, &field, 20).unwrap();
        let (e10, e20) = ((x10.z - 1.5 * h).abs(), (x20.z - 1.5 * h).abs());
        assert!(e20 <= e10 / 512.0 + 1e-15, "e10={e10:.3e} e20={e20:.3e}");
        // Wrong-order endpoints are rejected.
        assert!(matches!(
            bisect_crossing(b, a, &field, 8),
            Err(ExtractError::NoSignChange)
        ));
    }

    #[test]
    fn place_vertex_on_planar_crossings() {
        let r = 32u32;
        let h = 2.0 / r as f64;
        let patch = fixtures::open_patch(0.9, 0.9, 2, 2);
        let eps = 1.4 * h; // root inside the cell [h, 2h): z = 1.4h
        let field = LinfField::build(&patch, eps, FieldMode::Linf).unwrap();
        let cell_min = Vec3::new(0.0, 0.0, h);
        let z = 1.4 * h;
        let crossings = vec![
            Vec3::new(0.0, 0.0, z),
            Vec3::new(h, 0.0, z),
            Vec3::new(h, h, z),
            Vec3::new(0.0, h, z),
        ];
        let p = place_vertex(cell_min, h, &crossings, &field, false, 12);
        assert!((p.z - z).abs() < 1e-12);
        // Refinement is a no-op on an already-optimal planar vertex.
        let pr = place_vertex(cell_min, h, &crossings, &field, true, 12);
        assert!((pr - p).norm() <= h * 0.5f64.powi(12) * 3.0);
    }

    #[test]
    fn refine_pins_crease_cells_onto_the_crease() {
        // Occupied wedge {x <= a, y <= b} from a box much bigger than the
        // cell; the dilated envelope's crease line passes through the cell
        // at (a, b).
        let r = 32u32;
        let h = 2.0 / r as f64;
        let eps = 1.5 * h;
        let a = 0.3 * h;
        let b = 0.6 * h;
        let boxm = fixtures::cuboid(
            Vec3::new(-1.5, -1.5, -1.5),
            Vec3::new(a - eps, b - eps, 1.5),
        );
        let field = LinfField::build(&boxm, eps, FieldMode::Linf).unwrap();
        // Cell [0,h]^3: the envelope crease line (a, b, z) runs through it.
        let cell_min = Vec3::new(0.0, 0.0, 0.0);
        // Crossings as the extractor would find them: on the cell edges.
        let crossings = vec![
            Vec3::new(a, 0.0, 0.0),
            Vec3::new(0.0, b, 0.0),
            Vec3::new(a, 0.0, h),
            Vec3::new(0.0, b, h),
        ];
        let centroid = place_vertex(cell_min, h, &crossings, &field, false, 12);
        // The centroid sits inside the wedge, off the crease.
        assert!((centroid.x - a).abs() > 0.2 * h || (centroid.y - b).abs() > 0.2 * h);
        let refined = place_vertex(cell_min, h, &crossings, &field, true, 16);
        assert!(
            (refined.x - a).abs() < h * 1e-3 && (refined.y - b).abs() < h * 1e-3,
            "refined {refined:?} expected crease ({a}, {b})"
        );
    }

    #[test]
    fn sphere_extraction_is_manifold_and_smooth() {
        let sphere = fixtures::icosphere(0.5, 3);
        let r = 64;
        let field = LinfField::build(&sphere, 1.5 * 2.0 / r as f64, FieldMode::Linf).unwrap();
        let (grid, _) = classify_corners(&sphere, &field, r).unwrap();
        let dmc = extract(&grid, &field, &ExtractConfig::default()).unwrap();
        let report = check_watertight_manifold(&dmc.assembled);
        assert!(report.edge_manifold && report.closed && report.oriented);
        assert_eq!(report.euler_characteristic, 2);
        assert!(signed_volume(&dmc.assembled) > 0.0);
        // Smooth surface stays smooth: all dihedrals well above 150 degrees.
        for (angle, _) in crate::mesh::dihedral_angles(&dmc.assembled).unwrap() {
            assert!(angle > 150.0, "angle {angle}");
        }
        // One quad per crossing edge; no degenerate collapses here.
        assert_eq!(dmc.assembled.triangles.len(), dmc.quad_count * 2);
    }

    #[test]
    fn torus_extraction_has_genus_one() {
        let (norm, _) = normalize_to_unit_cube(&fixtures::torus(0.5, 0.2, 48, 24), 0.1).unwrap();
        let r = 64;
        let field = LinfField::build(&norm, 1.5 * 2.0 / r as f64, FieldMode::Linf).unwrap();
        let (grid, _) = classify_corners(&norm, &field, r).unwrap();
        let dmc = extract(&grid, &field, &ExtractConfig::default()).unwrap();
        let report = check_watertight_manifold(&dmc.assembled);
        assert!(report.edge_manifold && report.closed && report.oriented);
        assert_eq!(report.euler_characteristic, 0);
    }

    #[test]
    fn topology_depends_only_on_occupancy() {
        // Same occupancy bits under two eps values (patch and grid aligned
        // so corner distances are multiples of h): quad and triangle
        // connectivity must be identical while positions move.
        let r = 32u32;
        let h = 2.0 / r as f64;
        let patch = fixtures::open_patch(0.5, 0.5, 4, 4);
        let run = |eps_h: f64| {
            let field = LinfField::build(&patch, eps_h * h, FieldMode::Linf).unwrap();
            let (grid, _) = classify_corners(&patch, &field, r).unwrap();
            extract(&grid, &field, &ExtractConfig::default()).unwrap()
        };
        let a = run(1.45);
        let b = run(1.55);
        assert_eq!(a.assembled.triangles, b.assembled.triangles);
        assert_eq!(a.records.len(), b.records.len());
        let pa = &a.assembled.positions;
        let pb = &b.assembled.positions;
        assert_eq!(pa.len(), pb.len());
        assert!(
            pa.iter().zip(pb).any(|(x, y)| (x - y).norm() > 1e-6),
            "positions should move with eps"
        );
    }

    #[test]
    fn open_patch_extracts_to_closed_slab() {
        let patch = fixtures::open_patch(0.6, 0.6, 6, 6);
        let r = 32;
        let field = LinfField::build(&patch, 1.5 * 2.0 / r as f64, FieldMode::Linf).unwrap();
        let (grid, _) = classify_corners(&patch, &field, r).unwrap();
        let dmc = extract(&grid, &field, &ExtractConfig::default()).unwrap();
        let report = check_watertight_manifold(&dmc.assembled);
        assert!(report.edge_manifold && report.closed && report.oriented);
        assert_eq!(report.euler_characteristic, 2);
    }

    #[test]
    fn boundary_band_is_rejected() {
        // A blocked corner on the domain boundary must refuse extraction.
        let r = 32u32;
        let keys = vec![crate::morton::encode(0, 5, 5)];
        let margins = vec![0.01];
        let (grid, warnings) =
            crate::voxel::SparseCornerGrid::from_band(r, 0.01, keys, &margins, 0);
        assert_eq!(warnings.len(), 1);
        let field = tiny_center_field(0.01);
        assert!(matches!(
            extract(&grid, &field, &ExtractConfig::default()),
            Err(ExtractError::BoundaryNotExterior)
        ));
    }
}
