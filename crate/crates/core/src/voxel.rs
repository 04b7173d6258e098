//! Sparse voxelization and corner classification.
//!
//! The grid covers `[-1, 1]^3` with `R` cells per axis (`R+1` corner samples,
//! spacing `h = 2/R`). A cell is *active* when its AABB dilated by the field
//! radius eps overlaps a source triangle; corners of active cells form the
//! narrow *band* and get an explicit margin evaluation `g = eps - distance`.
//!
//! Occupancy is then decided by a single flood fill over corners, seeded at
//! the domain boundary, that can pass through anything except a band corner
//! with `g >= 0`. A corner is occupied iff the fill never reaches it. This
//! one rule yields the full solid classification:
//!
//! * band corners within eps of the surface are occupied (they block);
//! * enclosed corners — deep interiors, cavities between nested shells, and
//!   unreached band fringe — are occupied, which deletes internal structure;
//! * on every occupied/unoccupied grid edge the occupied endpoint is a band
//!   corner with `g >= 0` (anything else reachable from the unoccupied side
//!   would itself have been filled), so the extractor's bisection always has
//!   a sign change with an evaluable margin at the occupied end.
//!
//! Storage is sparse: only band corners are materialized. The far field is
//! resolved by an 8^3-corner block decomposition: blocks without blocking
//! corners are flooded wholesale, blocks containing them get corner-level
//! bitsets.

use rayon::prelude::*;
use std::collections::VecDeque;

use crate::field::LinfField;
use crate::geom::tri_box_overlap;
use crate::mesh::TriangleMesh;
use crate::morton;
use crate::Vec3;

#[derive(Debug, thiserror::Error)]
pub enum VoxelError {
    #[error("resolution {0} not a power of two in [32, 1024]")]
    ResolutionOutOfRange(u32),
    #[error("cannot voxelize an empty mesh")]
    EmptyMesh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VoxelWarning {
    /// Input looked closed but classification found no interior corners;
    /// usually means eps is too small for this resolution and the fill
    /// leaked through the shell.
    LeakDetected,
    /// An occupied band corner lies on the domain boundary; the mesh was not
    /// normalized with enough padding for this eps. Extraction will refuse
    /// the grid.
    BandTouchesBoundary,
}

impl std::fmt::Display for VoxelWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            VoxelWarning::LeakDetected => write!(
                f,
                "LeakDetected: closed input but no interior corners (eps too small?)"
            ),
            VoxelWarning::BandTouchesBoundary => write!(
                f,
                "BandTouchesBoundary: occupied band corner on the domain boundary"
            ),
        }
    }
}

pub fn validate_resolution(r: u32) -> Result<(), VoxelError> {
    if (32..=1024).contains(&r) && r.is_power_of_two() {
        Ok(())
    } else {
        Err(VoxelError::ResolutionOutOfRange(r))
    }
}

/// Corner classification relative to the dilated surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CornerClass {
    /// Reached by the boundary flood fill; unoccupied.
    Exterior,
    /// Not a band corner and not reached; occupied.
    Interior,
    /// Corner of an active cell; carries an evaluated margin.
    Band,
}

/// Conservative active-cell set: every cell whose eps-dilated AABB overlaps
/// a triangle (exact separating-axis test). Returns sorted Morton codes.
pub fn voxelize_active_cells(
    mesh: &TriangleMesh,
    r: u32,
    epsilon: f64,
) -> Result<Vec<u64>, VoxelError> {
    validate_resolution(r)?;
    if mesh.is_empty() {
        return Err(VoxelError::EmptyMesh);
    }
    let h = 2.0 / r as f64;
    let half = Vec3::repeat(0.5 * h + epsilon);

    let mut per_tri: Vec<Vec<u64>> = (0..mesh.triangles.len())
        .into_par_iter()
        .map(|t| {
            let tri = mesh.triangle_vertices(t);
            let lo = tri[0].inf(&tri[1]).inf(&tri[2]) - Vec3::repeat(epsilon);
            let hi = tri[0].sup(&tri[1]).sup(&tri[2]) + Vec3::repeat(epsilon);
            let clamp_cell = |v: f64| (((v + 1.0) / h).floor() as i64).clamp(0, r as i64 - 1) as u32;
            let (i0, i1) = (clamp_cell(lo.x), clamp_cell(hi.x));
            let (j0, j1) = (clamp_cell(lo.y), clamp_cell(hi.y));
            let (k0, k1) = (clamp_cell(lo.z), clamp_cell(hi.z));
            let mut out = Vec::new();
            for k in k0..=k1 {
                for j in j0..=j1 {
                    for i in i0..=i1 {
                        let center = Vec3::new(
                            -1.0 + (i as f64 + 0.5) * h,
                            -1.0 + (j as f64 + 0.5) * h,
                            -1.0 + (k as f64 + 0.5) * h,
                        );
                        if tri_box_overlap(center, half, &tri) {
                            out.push(morton::encode(i, j, k));
                        }
                    }
                }
            }
            out
        })
        .collect();

    let mut cells: Vec<u64> = Vec::with_capacity(per_tri.iter().map(Vec::len).sum());
    for v in &mut per_tri {
        cells.append(v);
    }
    drop(per_tri);
    cells.par_sort_unstable();
    cells.dedup();
    Ok(cells)
}

const BLOCK: u32 = 8;

/// Block state: empty blocks carry just a visited flag; blocks containing
/// blocking corners point into the mixed-block storage.
#[derive(Clone, Copy, PartialEq, Eq)]
enum BlockRef {
    EmptyUnvisited,
    EmptyVisited,
    Mixed(u32),
}

struct MixedBlock {
    blocked: [u64; 8],
    visited: [u64; 8],
}

impl MixedBlock {
    #[inline]
    fn bit(i: u32, j: u32, k: u32) -> usize {
        ((i % BLOCK) + (j % BLOCK) * BLOCK + (k % BLOCK) * BLOCK * BLOCK) as usize
    }
    #[inline]
    fn get(bits: &[u64; 8], idx: usize) -> bool {
        bits[idx / 64] >> (idx % 64) & 1 != 0
    }
    #[inline]
    fn set(bits: &mut [u64; 8], idx: usize) {
        bits[idx / 64] |= 1 << (idx % 64);
    }
}

/// Classification statistics (also drive the warning heuristics).
#[derive(Debug, Clone, Copy, Default)]
pub struct ClassifyStats {
    pub band_corners: usize,
    pub occupied_band_corners: usize,
    pub active_cells: usize,
    pub has_interior: bool,
    pub blocked_on_boundary: bool,
}

enum Item {
    Block(u32),
    Corner(u16, u16, u16),
}

/// Sparse tri-state corner grid over `[-1, 1]^3`.
pub struct SparseCornerGrid {
    resolution: u32,
    h: f64,
    epsilon: f64,
    /// Morton keys of band corners, sorted.
    keys: Vec<u64>,
    /// Margin per band corner (f32 is informational; occupancy was decided
    /// from the f64 evaluation).
    margins: Vec<f32>,
    nb: u32,
    blocks: Vec<BlockRef>,
    mixed: Vec<MixedBlock>,
    stats: ClassifyStats,
}

impl SparseCornerGrid {
    pub fn resolution(&self) -> u32 {
        self.resolution
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn stats(&self) -> &ClassifyStats {
        &self.stats
    }

    #[inline]
    pub fn corner_position(&self, i: u32, j: u32, k: u32) -> Vec3 {
        Vec3::new(
            -1.0 + i as f64 * self.h,
            -1.0 + j as f64 * self.h,
            -1.0 + k as f64 * self.h,
        )
    }

    #[inline]
    fn block_index(&self, i: u32, j: u32, k: u32) -> usize {
        ((i / BLOCK) + (j / BLOCK) * self.nb + (k / BLOCK) * self.nb * self.nb) as usize
    }

    /// Occupancy: true iff the boundary flood fill never reached the corner.
    #[inline]
    pub fn occupied(&self, i: u32, j: u32, k: u32) -> bool {
        debug_assert!(i <= self.resolution && j <= self.resolution && k <= self.resolution);
        match self.blocks[self.block_index(i, j, k)] {
            BlockRef::EmptyUnvisited => true,
            BlockRef::EmptyVisited => false,
            BlockRef::Mixed(m) => {
                !MixedBlock::get(&self.mixed[m as usize].visited, MixedBlock::bit(i, j, k))
            }
        }
    }

    /// Index into the band arrays, if (i, j, k) is a band corner.
    #[inline]
    fn band_slot(&self, i: u32, j: u32, k: u32) -> Option<usize> {
        self.keys.binary_search(&morton::encode(i, j, k)).ok()
    }

    pub fn is_band(&self, i: u32, j: u32, k: u32) -> bool {
        self.band_slot(i, j, k).is_some()
    }

    /// Margin for band corners, `None` elsewhere.
    pub fn margin(&self, i: u32, j: u32, k: u32) -> Option<f64> {
        self.band_slot(i, j, k).map(|s| self.margins[s] as f64)
    }

    pub fn corner_class(&self, i: u32, j: u32, k: u32) -> CornerClass {
        if self.is_band(i, j, k) {
            CornerClass::Band
        } else if self.occupied(i, j, k) {
            CornerClass::Interior
        } else {
            CornerClass::Exterior
        }
    }

    /// Band corners in Morton order.
    pub fn band_corners(&self) -> impl Iterator<Item = (u32, u32, u32)> + '_ {
        self.keys.iter().map(|&k| morton::decode(k))
    }

    pub fn band_len(&self) -> usize {
        self.keys.len()
    }

    /// Sparse debug dump: `i j k class g` per band corner, Morton order.
    /// Class is `B+` for occupied band corners, `B-` otherwise.
    pub fn dump_text(&self, w: &mut impl std::io::Write) -> std::io::Result<()> {
        for (slot, &key) in self.keys.iter().enumerate() {
            let (i, j, k) = morton::decode(key);
            let class = if self.occupied(i, j, k) { "B+" } else { "B-" };
            writeln!(w, "{i} {j} {k} {class} {:.6e}", self.margins[slot])?;
        }
        Ok(())
    }

    /// Build a grid from explicit band corners (sorted Morton keys with
    /// their margins), then flood fill. This is the tail of
    /// [`classify_corners`] and the seam used by synthetic-grid tests.
    pub fn from_band(
        r: u32,
        epsilon: f64,
        keys: Vec<u64>,
        margins_f64: &[f64],
        active_cells: usize,
    ) -> (SparseCornerGrid, Vec<VoxelWarning>) {
        assert_eq!(keys.len(), margins_f64.len());
        let corners_per_axis = r + 1;
        let nb = corners_per_axis.div_ceil(BLOCK);
        let mut blocks = vec![BlockRef::EmptyUnvisited; (nb as usize).pow(3)];
        let mut mixed: Vec<MixedBlock> = Vec::new();
        let mut stats = ClassifyStats {
            band_corners: keys.len(),
            active_cells,
            ..Default::default()
        };

        let mut margins = Vec::with_capacity(keys.len());
        let mut prev = None;
        for (&key, &g) in keys.iter().zip(margins_f64) {
            assert!(prev.map_or(true, |p| p < key), "band keys must be sorted");
            prev = Some(key);
            margins.push(g as f32);
            if g >= 0.0 {
                stats.occupied_band_corners += 1;
                let (i, j, k) = morton::decode(key);
                if i == 0 || j == 0 || k == 0 || i == r || j == r || k == r {
                    stats.blocked_on_boundary = true;
                }
                let b = ((i / BLOCK) + (j / BLOCK) * nb + (k / BLOCK) * nb * nb) as usize;
                let m = match blocks[b] {
                    BlockRef::Mixed(m) => m as usize,
                    _ => {
                        mixed.push(MixedBlock {
                            blocked: [0; 8],
                            visited: [0; 8],
                        });
                        blocks[b] = BlockRef::Mixed(mixed.len() as u32 - 1);
                        mixed.len() - 1
                    }
                };
                MixedBlock::set(&mut mixed[m].blocked, MixedBlock::bit(i, j, k));
            }
        }

        let mut grid = SparseCornerGrid {
            resolution: r,
            h: 2.0 / r as f64,
            epsilon,
            keys,
            margins,
            nb,
            blocks,
            mixed,
            stats,
        };
        grid.flood_fill();
        grid.stats.has_interior = grid.any_interior();

        let mut warnings = Vec::new();
        if grid.stats.blocked_on_boundary {
            warnings.push(VoxelWarning::BandTouchesBoundary);
        }
        (grid, warnings)
    }

    /// Flood fill from all domain-boundary corners; traverses everything
    /// except blocked corners. Sequential frontier, deterministic by
    /// construction (the visited set is order-independent).
    fn flood_fill(&mut self) {
        let r = self.resolution;
        let mut queue: VecDeque<Item> = VecDeque::new();

        for a in 0..=r {
            for b in 0..=r {
                for (i, j, k) in [
                    (0, a, b),
                    (r, a, b),
                    (a, 0, b),
                    (a, r, b),
                    (a, b, 0),
                    (a, b, r),
                ] {
                    self.try_visit(&mut queue, i, j, k);
                }
            }
        }

        while let Some(item) = queue.pop_front() {
            match item {
                Item::Corner(i, j, k) => {
                    let (i, j, k) = (i as u32, j as u32, k as u32);
                    if i > 0 {
                        self.try_visit(&mut queue, i - 1, j, k);
                    }
                    if i < r {
                        self.try_visit(&mut queue, i + 1, j, k);
                    }
                    if j > 0 {
                        self.try_visit(&mut queue, i, j - 1, k);
                    }
                    if j < r {
                        self.try_visit(&mut queue, i, j + 1, k);
                    }
                    if k > 0 {
                        self.try_visit(&mut queue, i, j, k - 1);
                    }
                    if k < r {
                        self.try_visit(&mut queue, i, j, k + 1);
                    }
                }
                Item::Block(b) => self.expand_block(b, &mut queue),
            }
        }
    }

    /// An empty block just got visited: all its corners are reachable, so
    /// propagate into the six face-adjacent blocks.
    fn expand_block(&mut self, b: u32, queue: &mut VecDeque<Item>) {
        let nb = self.nb;
        let r = self.resolution;
        let bx = b % nb;
        let by = (b / nb) % nb;
        let bz = b / (nb * nb);
        for (dx, dy, dz) in [
            (-1i64, 0i64, 0i64),
            (1, 0, 0),
            (0, -1, 0),
            (0, 1, 0),
            (0, 0, -1),
            (0, 0, 1),
        ] {
            let nx = bx as i64 + dx;
            let ny = by as i64 + dy;
            let nz = bz as i64 + dz;
            if nx < 0 || ny < 0 || nz < 0 || nx >= nb as i64 || ny >= nb as i64 || nz >= nb as i64
            {
                continue;
            }
            let nblock = (nx as u32 + ny as u32 * nb + nz as u32 * nb * nb) as usize;
            match self.blocks[nblock] {
                BlockRef::EmptyUnvisited => {
                    self.blocks[nblock] = BlockRef::EmptyVisited;
                    queue.push_back(Item::Block(nblock as u32));
                }
                BlockRef::EmptyVisited => {}
                BlockRef::Mixed(_) => {
                    // Visit the neighbor's corner layer facing this block.
                    let (fx0, fx1) = face_range(dx, nx as u32, r);
                    let (fy0, fy1) = face_range(dy, ny as u32, r);
                    let (fz0, fz1) = face_range(dz, nz as u32, r);
                    for z in fz0..=fz1 {
                        for y in fy0..=fy1 {
                            for x in fx0..=fx1 {
                                self.try_visit(queue, x, y, z);
                            }
                        }
                    }
                }
            }
        }

        /// Corner range of the neighbor block along one axis: the full block
        /// extent perpendicular to the step, the single facing layer along it.
        fn face_range(step: i64, block_coord: u32, r: u32) -> (u32, u32) {
            if step == 0 {
                (block_coord * BLOCK, ((block_coord + 1) * BLOCK - 1).min(r))
            } else if step < 0 {
                // Neighbor is below us: its facing layer is its topmost.
                let e = ((block_coord + 1) * BLOCK - 1).min(r);
                (e, e)
            } else {
                (block_coord * BLOCK, block_coord * BLOCK)
            }
        }
    }

    fn try_visit(&mut self, queue: &mut VecDeque<Item>, i: u32, j: u32, k: u32) {
        let b = self.block_index(i, j, k);
        match self.blocks[b] {
            BlockRef::EmptyUnvisited => {
                self.blocks[b] = BlockRef::EmptyVisited;
                queue.push_back(Item::Block(b as u32));
            }
            BlockRef::EmptyVisited => {}
            BlockRef::Mixed(m) => {
                let mb = &mut self.mixed[m as usize];
                let bit = MixedBlock::bit(i, j, k);
                if !MixedBlock::get(&mb.blocked, bit) && !MixedBlock::get(&mb.visited, bit) {
                    MixedBlock::set(&mut mb.visited, bit);
                    queue.push_back(Item::Corner(i as u16, j as u16, k as u16));
                }
            }
        }
    }

    /// Any occupied corner that is not a blocked band corner? (Presence of
    /// a true interior region.)
    fn any_interior(&self) -> bool {
        let nb = self.nb;
        for (b, state) in self.blocks.iter().enumerate() {
            let bx = (b as u32 % nb) * BLOCK;
            let by = ((b as u32 / nb) % nb) * BLOCK;
            let bz = (b as u32 / (nb * nb)) * BLOCK;
            match state {
                // Every block has at least its minimum corner in-domain.
                BlockRef::EmptyUnvisited => return true,
                BlockRef::EmptyVisited => {}
                BlockRef::Mixed(m) => {
                    let mb = &self.mixed[*m as usize];
                    for w in 0..8usize {
                        let free = !(mb.visited[w] | mb.blocked[w]);
                        if free == 0 {
                            continue;
                        }
                        for bit in 0..64usize {
                            if free >> bit & 1 != 0 {
                                let idx = (w * 64 + bit) as u32;
                                let i = bx + idx % 8;
                                let j = by + (idx / 8) % 8;
                                let k = bz + idx / 64;
                                if i <= self.resolution
                                    && j <= self.resolution
                                    && k <= self.resolution
                                {
                                    return true;
                                }
                            }
                        }
                    }
                }
            }
        }
        false
    }
}

/// Corner keys (sorted Morton codes) of a sorted active-cell set. Chunked
/// sort/dedup bounds transient memory at high resolutions.
pub fn active_cell_corners(cells: &[u64]) -> Vec<u64> {
    let mut chunks: Vec<Vec<u64>> = Vec::new();
    for chunk in cells.chunks(2_000_000) {
        let mut corners: Vec<u64> = Vec::with_capacity(chunk.len() * 8);
        for &c in chunk {
            let (i, j, k) = morton::decode(c);
            for dk in 0..2 {
                for dj in 0..2 {
                    for di in 0..2 {
                        corners.push(morton::encode(i + di, j + dj, k + dk));
                    }
                }
            }
        }
        corners.par_sort_unstable();
        corners.dedup();
        chunks.push(corners);
    }
    merge_sorted_unique(chunks)
}

/// Field margin per corner key; order-preserving parallel map, so results
/// are independent of the thread count.
pub fn evaluate_margins(field: &LinfField, r: u32, corners: &[u64]) -> Vec<f64> {
    let h = 2.0 / r as f64;
    corners
        .par_iter()
        .map(|&key| {
            let (i, j, k) = morton::decode(key);
            field.occupancy_margin(Vec3::new(
                -1.0 + i as f64 * h,
                -1.0 + j as f64 * h,
                -1.0 + k as f64 * h,
            ))
        })
        .collect()
}

/// Evaluate the field margin on every corner of every active cell, then
/// flood-fill occupancy from the domain boundary.
///
/// Returns the grid and any diagnostics (leak through a closed shell, band
/// touching the domain boundary). Warnings are non-fatal: open inputs
/// legitimately classify to thin slabs with no interior.
pub fn classify_corners(
    mesh: &TriangleMesh,
    field: &LinfField,
    r: u32,
) -> Result<(SparseCornerGrid, Vec<VoxelWarning>), VoxelError> {
    let cells = voxelize_active_cells(mesh, r, field.epsilon())?;
    let active_cells = cells.len();
    let corners = active_cell_corners(&cells);
    drop(cells);
    let margins = evaluate_margins(field, r, &corners);
    let (grid, mut warnings) =
        SparseCornerGrid::from_band(r, field.epsilon(), corners, &margins, active_cells);

    if !grid.stats.has_interior && crate::mesh::check_watertight_manifold(mesh).closed {
        warnings.push(VoxelWarning::LeakDetected);
    }
    Ok((grid, warnings))
}

fn merge_sorted_unique(mut chunks: Vec<Vec<u64>>) -> Vec<u64> {
    while chunks.len() > 1 {
        let b = chunks.pop().unwrap();
        let a = chunks.pop().unwrap();
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut x, mut y) = (0, 0);
        while x < a.len() && y < b.len() {
            match a[x].cmp(&b[y]) {
                std::cmp::Ordering::Less => {
                    out.push(a[x]);
                    x += 1;
                }
                std::cmp::Ordering::Greater => {
                    out.push(b[y]);
                    y += 1;
                }
                std::cmp::Ordering::Equal => {
                    out.push(a[x]);
                    x += 1;
                    y += 1;
                }
            }
        }
        out.extend_from_slice(&a[x..]);
        out.extend_from_slice(&b[y..]);
        chunks.push(out);
    }
    chunks.pop().unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FieldMode;
    use crate::fixtures;
    use crate::mesh::normalize_to_unit_cube;

    fn classify_fixture(
        mesh: &TriangleMesh,
        r: u32,
        eps_h: f64,
        mode: FieldMode,
    ) -> (SparseCornerGrid, Vec<VoxelWarning>) {
        let h = 2.0 / r as f64;
        // One clean cell layer between the dilated band and the boundary.
        let pad = ((eps_h + 2.0) * h).max(0.05);
        let (norm, _) = normalize_to_unit_cube(mesh, pad).unwrap();
        let field = LinfField::build(&norm, eps_h * h, mode).unwrap();
        classify_corners(&norm, &field, r).unwrap()
    }

    #[test]
    fn resolution_validation() {
        assert!(validate_resolution(100).is_err());
        assert!(validate_resolution(16).is_err());
        assert!(validate_resolution(2048).is_err());
        for r in [32, 64, 128, 256, 512, 1024] {
            assert!(validate_resolution(r).is_ok());
        }
    }

    #[test]
    fn flat_patch_active_cells_match_enumeration_oracle() {
        // Axis-aligned square patch on a grid plane: the dilated overlap has
        // a closed-form answer per cell, enumerated independently here.
        let r = 32u32;
        let h = 2.0 / r as f64;
        let eps = 1.5 * h;
        // Patch spanning exactly 4x4 cells around the center, at z = 0.
        let patch = fixtures::open_patch(2.0 * h, 2.0 * h, 2, 2);
        let cells = voxelize_active_cells(&patch, r, eps).unwrap();

        let mut expected = Vec::new();
        for k in 0..r {
            for j in 0..r {
                for i in 0..r {
                    let lo = |c: u32| -1.0 + c as f64 * h - eps;
                    let hi = |c: u32| -1.0 + (c + 1) as f64 * h + eps;
                    // Patch interval per axis.
                    let (px0, px1) = (-2.0 * h, 2.0 * h);
                    let overlap = lo(i) <= px1
                        && hi(i) >= px0
                        && lo(j) <= px1
                        && hi(j) >= px0
                        && lo(k) <= 0.0
                        && hi(k) >= 0.0;
                    if overlap {
                        expected.push(morton::encode(i, j, k));
                    }
                }
            }
        }
        expected.sort_unstable();
        assert_eq!(cells, expected);
    }

    #[test]
    fn tiny_triangle_activates_only_its_neighborhood() {
        let r = 64u32;
        let h = 2.0 / r as f64;
        let eps = 1.5 * h;
        let mesh = TriangleMesh::new(
            vec![
                Vec3::new(0.01, 0.01, 0.01),
                Vec3::new(0.02, 0.01, 0.01),
                Vec3::new(0.01, 0.02, 0.01),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let cells = voxelize_active_cells(&mesh, r, eps).unwrap();
        assert!(!cells.is_empty());
        for &c in &cells {
            let (i, j, k) = morton::decode(c);
            let center = Vec3::new(
                -1.0 + (i as f64 + 0.5) * h,
                -1.0 + (j as f64 + 0.5) * h,
                -1.0 + (k as f64 + 0.5) * h,
            );
            // Everything stays within the triangle AABB + eps + cell diagonal.
            assert!((center - Vec3::new(0.015, 0.015, 0.01)).norm() < eps + 3.0 * h);
        }
    }

    #[test]
    fn sphere_classification_basics() {
        let sphere = fixtures::icosphere(0.5, 3);
        let r = 32u32;
        let field = LinfField::build(&sphere, 1.5 * 2.0 / r as f64, FieldMode::Linf).unwrap();
        let (grid, warnings) = classify_corners(&sphere, &field, r).unwrap();
        assert!(warnings.is_empty(), "{warnings:?}");
        // Center of the domain is deep inside the sphere.
        let c = r / 2;
        assert!(grid.occupied(c, c, c));
        assert_eq!(grid.corner_class(c, c, c), CornerClass::Interior);
        // Domain corner is exterior.
        assert!(!grid.occupied(0, 0, 0));
        assert_eq!(grid.corner_class(0, 0, 0), CornerClass::Exterior);
        assert!(grid.stats().has_interior);
    }

    #[test]
    fn hollow_shells_cavity_is_deleted() {
        let shells = fixtures::two_shells(0.8, 0.45, 3);
        let r = 64u32;
        let field = LinfField::build(&shells, 1.5 * 2.0 / r as f64, FieldMode::Linf).unwrap();
        let (grid, _) = classify_corners(&shells, &field, r).unwrap();
        // Corner between the shells (radius ~0.625, outside both bands):
        // occupied despite being far from both surfaces. A ray-parity oracle
        // would call it outside (one crossing of the outer shell); the flood
        // fill is authoritative and deletes the cavity.
        let h = grid.spacing();
        let between = (0.625 / h).round() as u32;
        let c = r / 2;
        let corner = (c + between, c, c);
        assert!(
            !grid.is_band(corner.0, corner.1, corner.2),
            "test corner must lie outside the band"
        );
        assert_eq!(
            grid.corner_class(corner.0, corner.1, corner.2),
            CornerClass::Interior
        );
        assert!(grid.occupied(corner.0, corner.1, corner.2));
        // Center (inside the inner shell) is also occupied.
        assert!(grid.occupied(c, c, c));
    }

    #[test]
    fn open_patch_yields_slab_only() {
        let patch = fixtures::open_patch(0.6, 0.6, 6, 6);
        let r = 32u32;
        let h = 2.0 / r as f64;
        let eps = 1.5 * h;
        let field = LinfField::build(&patch, eps, FieldMode::Linf).unwrap();
        let (grid, warnings) = classify_corners(&patch, &field, r).unwrap();
        // No interior: both sides beyond eps are reached by the fill.
        assert!(!grid.stats().has_interior);
        // Not flagged as a leak: the patch is open.
        assert!(!warnings.contains(&VoxelWarning::LeakDetected));
        let c = r / 2;
        // Corner right at the sheet: occupied (distance 0 < eps).
        assert!(grid.occupied(c, c, c));
        // Four cells above the sheet: beyond eps, unoccupied even though the
        // corner is within the active band columns.
        assert!(!grid.occupied(c, c, c + 4));
        assert!(!grid.occupied(c, c, c - 4));
    }

    #[test]
    fn leak_detected_when_eps_too_small() {
        let sphere = fixtures::icosphere(0.5, 3);
        let r = 32u32;
        // eps far below h/2: the fill sneaks between occupied corners.
        let field = LinfField::build(&sphere, 0.1 * 2.0 / r as f64, FieldMode::Linf).unwrap();
        let (_, warnings) = classify_corners(&sphere, &field, r).unwrap();
        assert!(warnings.contains(&VoxelWarning::LeakDetected));
    }

    #[test]
    fn occupancy_is_boundary_consistent() {
        // Every occupied<->unoccupied edge has a band endpoint with g >= 0
        // on the occupied side.
        for (mesh, r) in [
            (fixtures::icosphere(0.5, 2), 32u32),
            (fixtures::cube(0.6), 32),
            (fixtures::open_patch(0.5, 0.5, 4, 4), 32),
        ] {
            let field = LinfField::build(&mesh, 1.5 * 2.0 / r as f64, FieldMode::Linf).unwrap();
            let (grid, _) = classify_corners(&mesh, &field, r).unwrap();
            for k in 0..=r {
                for j in 0..=r {
                    for i in 0..=r {
                        let occ = grid.occupied(i, j, k);
                        for (ni, nj, nk) in [(i + 1, j, k), (i, j + 1, k), (i, j, k + 1)] {
                            if ni > r || nj > r || nk > r {
                                continue;
                            }
                            let nocc = grid.occupied(ni, nj, nk);
                            if occ != nocc {
                                let (oi, oj, ok) = if occ { (i, j, k) } else { (ni, nj, nk) };
                                assert!(
                                    grid.is_band(oi, oj, ok),
                                    "occupied end of crossing edge must be band"
                                );
                                assert!(
                                    grid.margin(oi, oj, ok).unwrap() >= 0.0,
                                    "occupied end must have nonnegative margin"
                                );
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn occupancy_monotone_in_eps() {
        let sphere = fixtures::icosphere(0.5, 2);
        let r = 32u32;
        let h = 2.0 / r as f64;
        let build = |eh: f64| {
            let field = LinfField::build(&sphere, eh * h, FieldMode::Linf).unwrap();
            classify_corners(&sphere, &field, r).unwrap().0
        };
        let g1 = build(1.0);
        let g2 = build(2.0);
        for k in 0..=r {
            for j in 0..=r {
                for i in 0..=r {
                    if g1.occupied(i, j, k) {
                        assert!(g2.occupied(i, j, k), "occupancy must grow with eps");
                    }
                }
            }
        }
    }

    #[test]
    fn no_unoccupied_corner_is_fully_surrounded_by_occupied() {
        let (grid, _) = classify_fixture(&fixtures::two_shells(0.9, 0.5, 2), 32, 1.5, FieldMode::Linf);
        let r = grid.resolution();
        for k in 1..r {
            for j in 1..r {
                for i in 1..r {
                    if grid.occupied(i, j, k) {
                        continue;
                    }
                    let surrounded = grid.occupied(i - 1, j, k)
                        && grid.occupied(i + 1, j, k)
                        && grid.occupied(i, j - 1, k)
                        && grid.occupied(i, j + 1, k)
                        && grid.occupied(i, j, k - 1)
                        && grid.occupied(i, j, k + 1);
                    assert!(!surrounded, "cavity pocket at ({i},{j},{k})");
                }
            }
        }
    }

    #[test]
    fn exterior_touches_domain_boundary() {
        let (grid, warnings) = classify_fixture(&fixtures::cube(1.0), 32, 1.5, FieldMode::Linf);
        assert!(warnings.is_empty());
        let r = grid.resolution();
        for a in 0..=r {
            for b in 0..=r {
                assert_eq!(grid.corner_class(0, a, b), CornerClass::Exterior);
                assert_eq!(grid.corner_class(r, a, b), CornerClass::Exterior);
                assert_eq!(grid.corner_class(a, 0, b), CornerClass::Exterior);
            }
        }
    }

    #[test]
    fn dump_text_is_parseable() {
        let (grid, _) = classify_fixture(&fixtures::tetrahedron(1.0), 32, 1.5, FieldMode::Linf);
        let mut buf = Vec::new();
        grid.dump_text(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), grid.band_len());
        let first = text.lines().next().unwrap();
        assert_eq!(first.split_whitespace().count(), 5);
    }
}
