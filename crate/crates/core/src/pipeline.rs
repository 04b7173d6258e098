//! End-to-end remeshing: normalize, build the field, voxelize, classify,
//! extract — with per-stage wall timings.
//!
//! This is the entry point the CLI and batch harnesses use. Everything is
//! deterministic for a fixed configuration, independent of the thread count.

use std::time::{Duration, Instant};

use crate::extract::{extract, DmcMesh, ExtractConfig, ExtractError};
use crate::field::{FieldMode, LinfField};
use crate::mesh::{normalize_to_unit_cube, MeshError, TriangleMesh};
use crate::voxel::{
    evaluate_margins, validate_resolution, voxelize_active_cells, SparseCornerGrid, VoxelError,
    VoxelWarning,
};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Voxel(#[from] VoxelError),
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error("spatial index: {0}")]
    Spatial(#[from] crate::spatial::SpatialError),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

/// Remeshing parameters. `epsilon_h` is the dilation radius in units of the
/// corner spacing `h = 2 / resolution`.
#[derive(Debug, Clone, Copy)]
pub struct RemeshConfig {
    pub resolution: u32,
    pub epsilon_h: f64,
    pub bisect_iters: u32,
    /// `None` selects the speed default: refinement on below resolution 512.
    pub refine: Option<bool>,
    pub mode: FieldMode,
    /// Normalization padding; `None` picks `max(0.05, (epsilon_h + 2) * h)`
    /// so the dilated band stays a full cell layer away from the boundary.
    pub padding: Option<f64>,
    /// Reserved for sampling consumers (eval/stats); the pipeline itself is
    /// deterministic without randomness.
    pub seed: u64,
}

impl Default for RemeshConfig {
    fn default() -> Self {
        RemeshConfig {
            resolution: 256,
            epsilon_h: 1.5,
            bisect_iters: 12,
            refine: None,
            mode: FieldMode::Linf,
            padding: None,
            seed: 0,
        }
    }
}

impl RemeshConfig {
    pub fn epsilon(&self) -> f64 {
        self.epsilon_h * 2.0 / self.resolution as f64
    }

    pub fn effective_refine(&self) -> bool {
        self.refine.unwrap_or(self.resolution < 512)
    }

    pub fn effective_padding(&self) -> f64 {
        let h = 2.0 / self.resolution as f64;
        self.padding
            .unwrap_or(((self.epsilon_h + 2.0) * h).max(0.05))
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        validate_resolution(self.resolution)?;
        if self.epsilon_h <= 0.0 {
            return Err(PipelineError::InvalidConfig(
                "epsilon must be positive".into(),
            ));
        }
        let pad = self.effective_padding();
        if !(0.0..0.5).contains(&pad) {
            return Err(PipelineError::InvalidConfig(format!(
                "padding {pad} outside [0, 0.5)"
            )));
        }
        if self.epsilon() >= pad {
            return Err(PipelineError::InvalidConfig(format!(
                "epsilon {} must stay below the normalization padding {pad}",
                self.epsilon()
            )));
        }
        if self.bisect_iters == 0 || self.bisect_iters > 52 {
            return Err(PipelineError::InvalidConfig(
                "bisection iterations must be in 1..=52".into(),
            ));
        }
        Ok(())
    }
}

/// Wall time per pipeline stage.
#[derive(Debug, Clone, Copy, Default)]
pub struct StageTimings {
    pub voxelization: Duration,
    pub flood_fill: Duration,
    pub sdf: Duration,
    pub extraction: Duration,
}

impl StageTimings {
    pub fn total(&self) -> Duration {
        self.voxelization + self.flood_fill + self.sdf + self.extraction
    }
}

/// Remesh result: the DMC mesh plus grid diagnostics and timings. The
/// normalized input is kept for evaluation against the output.
pub struct RemeshOutcome {
    pub dmc: DmcMesh,
    pub warnings: Vec<VoxelWarning>,
    pub timings: StageTimings,
    pub normalized: TriangleMesh,
    pub grid_stats: crate::voxel::ClassifyStats,
}

/// Normalize and remesh a source mesh.
pub fn remesh(mesh: &TriangleMesh, config: &RemeshConfig) -> Result<RemeshOutcome, PipelineError> {
    config.validate()?;
    let (normalized, transform) = normalize_to_unit_cube(mesh, config.effective_padding())?;
    let field = LinfField::build(&normalized, config.epsilon(), config.mode)?;
    remesh_normalized(&normalized, &field, transform, config).map(|mut o| {
        o.normalized = normalized;
        o
    })
}

/// Remesh a mesh already in the normalized domain with a prebuilt field.
pub fn remesh_normalized(
    normalized: &TriangleMesh,
    field: &LinfField,
    transform: crate::mesh::NormalizationTransform,
    config: &RemeshConfig,
) -> Result<RemeshOutcome, PipelineError> {
    config.validate()?;
    let r = config.resolution;
    let mut timings = StageTimings::default();

    let t = Instant::now();
    let cells = voxelize_active_cells(normalized, r, field.epsilon())?;
    let active_cells = cells.len();
    let corners = crate::voxel::active_cell_corners(&cells);
    drop(cells);
    timings.voxelization = t.elapsed();

    let t = Instant::now();
    let margins = evaluate_margins(field, r, &corners);
    timings.sdf = t.elapsed();

    let t = Instant::now();
    let (grid, mut warnings) =
        SparseCornerGrid::from_band(r, field.epsilon(), corners, &margins, active_cells);
    drop(margins);
    if !grid.stats().has_interior && crate::mesh::check_watertight_manifold(normalized).closed {
        warnings.push(VoxelWarning::LeakDetected);
    }
    timings.flood_fill = t.elapsed();

    let t = Instant::now();
    let extract_config = ExtractConfig {
        bisect_iters: config.bisect_iters,
        refine: config.effective_refine(),
        transform,
    };
    let dmc = extract(&grid, field, &extract_config)?;
    timings.extraction = t.elapsed();

    let grid_stats = *grid.stats();
    Ok(RemeshOutcome {
        dmc,
        warnings,
        timings,
        normalized: TriangleMesh::default(),
        grid_stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::mesh::check_watertight_manifold;

    #[test]
    fn default_config_is_valid() {
        RemeshConfig::default().validate().unwrap();
    }

    #[test]
    fn config_validation_failures() {
        let mut c = RemeshConfig {
            resolution: 100,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        c.resolution = 64;
        c.epsilon_h = 0.0;
        assert!(c.validate().is_err());
        c.epsilon_h = 1.5;
        c.padding = Some(0.01); // below epsilon = 1.5 * h = 0.047
        assert!(c.validate().is_err());
    }

    #[test]
    fn refine_defaults_flip_at_512() {
        let mut c = RemeshConfig {
            resolution: 256,
            ..Default::default()
        };
        assert!(c.effective_refine());
        c.resolution = 512;
        assert!(!c.effective_refine());
        c.refine = Some(true);
        assert!(c.effective_refine());
    }

    #[test]
    fn end_to_end_cube() {
        let outcome = remesh(
            &fixtures::cube(3.0),
            &RemeshConfig {
                resolution: 64,
                ..Default::default()
            },
        )
        .unwrap();
        let report = check_watertight_manifold(&outcome.dmc.assembled);
        assert!(report.edge_manifold && report.closed && report.oriented);
        assert_eq!(report.euler_characteristic, 2);
        assert!(outcome.warnings.is_empty(), "{:?}", outcome.warnings);
        // Output is in source units: the cube spans about [-3, 3] plus the
        // dilation offset.
        let (lo, hi) = outcome.dmc.assembled.aabb().unwrap();
        assert!(lo.x < -2.9 && hi.x > 2.9 && hi.x < 3.5);
        assert!(outcome.timings.total() > Duration::ZERO);
    }
}
