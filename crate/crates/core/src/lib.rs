//! 2D non-line-of-sight aided exploration.
//!
//! The crate simulates single-photon LiDAR transient histograms on occupancy
//! grids, extracts beyond-line-of-sight evidence (space carving and
//! back-projection), fuses it into global map predictions, and drives
//! frontier-based exploration with an information-gain policy.

pub mod explore;
pub mod grid;
pub mod mapgen;
pub mod metrics;
pub mod nlos;
pub mod normals;
pub mod predict;
pub mod ray;
pub mod render;
pub mod spad;

pub use explore::{
    detect_frontiers, plan_path, run_exploration, ExplorationTrace, ExploreParams, Frontier, Mode,
};
pub use grid::{BinaryGrid, Cell, CellState, FloatGrid, GridKind, OccupancyGrid, Pose};
pub use metrics::{aggregate, auc, coverage, map_iou, CoverageCurve};
pub use nlos::{backproject, carve, detect_peaks, laplacian_filter, NlosEvidence};
pub use normals::{estimate_normals, NormalField};
pub use predict::{predict_builtin, predict_external, PredictedEnsemble, PredictorInput};
pub use ray::{raycast, visible_cells, Hit};
pub use spad::{simulate_scan, Scan, SensorConfig, TransientHistogram};
