use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::camera::CameraPose;
use crate::geometry::layout::LayoutScene;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stage {
    Inpaint,
    Refine,
    PostOpt,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Inpaint => "inpaint",
            Stage::Refine => "refine",
            Stage::PostOpt => "post_opt",
        }
    }
}

/// Rotation sense seen from above with +y toward the selected wall.
/// Clockwise increases yaw, counter-clockwise decreases it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Ccw,
    Cw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Proximity {
    Close,
    Distant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryConfig {
    pub stage: Stage,
    pub n_views: usize,
    pub direction: Direction,
}

impl TrajectoryConfig {
    pub fn inpaint() -> Self {
        TrajectoryConfig { stage: Stage::Inpaint, n_views: 20, direction: Direction::Ccw }
    }

    pub fn refine() -> Self {
        TrajectoryConfig { stage: Stage::Refine, n_views: 8, direction: Direction::Cw }
    }

    pub fn post_opt() -> Self {
        TrajectoryConfig { stage: Stage::PostOpt, n_views: 15, direction: Direction::Cw }
    }

    pub fn for_stage(stage: Stage) -> Self {
        match stage {
            Stage::Inpaint => Self::inpaint(),
            Stage::Refine => Self::refine(),
            Stage::PostOpt => Self::post_opt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Viewpoint {
    pub index: usize,
    pub yaw_deg: f64,
    pub pose: CameraPose,
    pub proximity: Proximity,
}

/// Evenly spaced yaws around the room centre, starting at the selected wall.
pub fn build_trajectory(layout: &LayoutScene, config: &TrajectoryConfig) -> Result<Vec<Viewpoint>> {
    let n = config.n_views;
    if n < 2 {
        return Err(Error::input("a trajectory needs at least two views"));
    }
    let step = 360.0 / n as f64;
    Ok((0..n)
        .map(|i| {
            let yaw = match config.direction {
                Direction::Cw => i as f64 * step,
                Direction::Ccw => {
                    if i == 0 {
                        0.0
                    } else {
                        360.0 - i as f64 * step
                    }
                }
            };
            Viewpoint {
                index: i,
                yaw_deg: yaw,
                pose: CameraPose::looking_at_yaw(layout.center, yaw),
                proximity: classify_view(yaw, config.stage, i, n),
            }
        })
        .collect())
}

/// Close views are those next to the input view, where generation must
/// blend with existing content.
pub fn classify_view(yaw_deg: f64, stage: Stage, index: usize, n_views: usize) -> Proximity {
    let close = match stage {
        Stage::Inpaint => {
            let y = wrap_degrees(yaw_deg);
            (y > 0.0 && y < 90.0) || (y > 270.0 && y < 360.0)
        }
        Stage::Refine => index == 0 || index + 1 == n_views,
        Stage::PostOpt => false,
    };
    if close {
        Proximity::Close
    } else {
        Proximity::Distant
    }
}

/// Maps an angle into `[0, 360)`.
pub fn wrap_degrees(deg: f64) -> f64 {
    let r = deg % 360.0;
    let r = if r < 0.0 { r + 360.0 } else { r };
    if r >= 360.0 {
        0.0
    } else {
        r
    }
}
