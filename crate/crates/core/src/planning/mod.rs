//! Waypoints from cone maps: Delaunay midline, minimum-curvature raceline,
//! the skidpad trigger machine and the acceleration straight.

mod acceleration;
mod delaunay;
mod midline;
mod path;
mod raceline;
mod skidpad;

pub use acceleration::plan_acceleration;
pub use delaunay::{delaunay_triangulate, in_circle, Edge, Triangulation, Vertex};
pub use midline::{catmull_rom, chain_points, extract_midline, midpoints, naive_pairing_midline, MidlineConfig};
pub use path::{discrete_curvature, PathProjection, SpeedProfile, WaypointPath, MIN_POINT_SPACING};
pub use raceline::{min_curvature_refine, RacelineConfig};
pub use skidpad::{skidpad_step, FirstCircle, SkidpadPaths, SkidpadSegment, SkidpadState};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanningError {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("no blue-yellow edges to build a midline from")]
    EmptyMidline,
    #[error("margin {margin} m leaves no corridor in a {track_width} m track")]
    InfeasibleCorridor { track_width: f64, margin: f64 },
}
