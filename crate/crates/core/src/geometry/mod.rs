//! The 2D world: floorplans, the raycast range sensor, discrete kinematics,
//! collision/goal logic and the episode state machine.

pub mod bundled;
mod env;
mod grid;
mod map;
mod raycast;

pub use env::{
    goal_observation, sample_episode, EnvError, EpisodeConfig, EpisodeSampler, GoalObservation,
    NavEnv, Observation, SampleError, StepOutcome, TerminalKind, GOAL_DISTANCE_SCALE,
    MAX_SAMPLE_TRIES,
};
pub use grid::OccupancyGrid;
pub use map::{load_map, MapError, MapSpec, Segment};
pub use raycast::{beam_angle, check_collision, point_segment_distance, raycast, scan, LaserScan};

use std::f64::consts::{PI, TAU};

/// Number of range beams in one scan.
pub const BEAM_COUNT: usize = 72;
/// Sensor range; longer readings are clipped.
pub const MAX_RANGE: f64 = 7.0;
/// Forward step length in meters.
pub const FORWARD_STEP: f64 = 0.06;
/// Heading change of one turn action, in radians.
pub const TURN_ANGLE: f64 = 8.0 * PI / 180.0;
/// Turns needed for one full revolution.
const TICKS_PER_REVOLUTION: i32 = 45;

/// Wraps an angle into `(−π, π]`.
pub fn wrap_angle(angle: f64) -> f64 {
    if angle > -PI && angle <= PI {
        return angle;
    }
    let wrapped = (angle + PI).rem_euclid(TAU) - PI;
    if wrapped <= -PI {
        wrapped + TAU
    } else {
        wrapped
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Robot position and heading.
///
/// The heading is stored as an initial angle plus a whole number of turn
/// ticks, so a left turn followed by a right turn restores the heading bit
/// for bit and 45 turns in one direction return exactly to the start.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    omega: f64,
    base: f64,
    ticks: i32,
}

impl Pose {
    pub fn new(x: f64, y: f64, omega: f64) -> Self {
        let base = wrap_angle(omega);
        Pose {
            x,
            y,
            omega: base,
            base,
            ticks: 0,
        }
    }

    /// Heading in `(−π, π]`.
    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }

    fn turned(self, ticks: i32) -> Self {
        let ticks = (self.ticks + ticks).rem_euclid(TICKS_PER_REVOLUTION);
        Pose {
            omega: wrap_angle(self.base + f64::from(ticks) * TURN_ANGLE),
            ticks,
            ..self
        }
    }
}

/// The three discrete actions, in network output order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Forward = 0,
    TurnLeft = 1,
    TurnRight = 2,
}

impl Action {
    pub const COUNT: usize = 3;
    pub const ALL: [Action; 3] = [Action::Forward, Action::TurnLeft, Action::TurnRight];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Action> {
        Action::ALL.get(index).copied()
    }

    pub fn one_hot(self) -> [f64; 3] {
        let mut v = [0.0; 3];
        v[self.index()] = 1.0;
        v
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::Forward => "forward",
            Action::TurnLeft => "turn_left",
            Action::TurnRight => "turn_right",
        }
    }
}

pub fn apply_action(pose: Pose, action: Action) -> Pose {
    match action {
        Action::Forward => Pose {
            x: pose.x + FORWARD_STEP * pose.omega.cos(),
            y: pose.y + FORWARD_STEP * pose.omega.sin(),
            ..pose
        },
        Action::TurnLeft => pose.turned(1),
        Action::TurnRight => pose.turned(-1),
    }
}
