//! Cameras, room layouts, viewpoint trajectories and layout depth rendering.

pub mod camera;
pub mod layout;
pub mod raycast;
pub mod trajectory;

pub use camera::{project, project_point, unproject, CameraIntrinsics, CameraPose, Projection};
pub use layout::{
    builtin_templates, procedural_layout, route_template, Aabb, LayoutScene, RoomSpec, RoomTemplate, SurfaceLabel,
    Triangle,
};
pub use raycast::{cast_ray, render_depth};
pub use trajectory::{build_trajectory, classify_view, Direction, Proximity, Stage, TrajectoryConfig, Viewpoint};
