//! Grid, shapes, level sets, node classification and boundary geometry.

mod classify;
mod fields;
mod grid;
mod level_set;
mod shape;

pub use classify::{classify, GridClassification, NodeKind, PIN_FRACTION};
pub use fields::{geometry_fields, project_to_boundary, GeometryFields, GeometryOptions};
pub use grid::{Grid2D, Point};
pub use level_set::{build_level_set, LevelSetField};
pub use shape::{ellipse_signed_distance, AnalyticShape, Shape};

