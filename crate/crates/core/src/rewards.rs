//! Extrinsic reward: goal/collision/progress main term plus stationary and
//! heading penalties.

use serde::{Deserialize, Serialize};

use crate::geometry::{wrap_angle, Point, Pose, TerminalKind};

/// Every reward constant, overridable by name in the run config.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardParams {
    pub lambda_p: f64,
    pub lambda_omega: f64,
    pub lambda_g: f64,
    pub r_reach: f64,
    pub r_collision: f64,
    pub r_position: f64,
    pub lambda_i: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        RewardParams {
            lambda_p: 1.0,
            lambda_omega: 1.0 / (200.0 * std::f64::consts::PI),
            lambda_g: 0.15,
            r_reach: 1.0,
            r_collision: -5.0,
            r_position: -0.05,
            lambda_i: 1.0,
        }
    }
}

impl RewardParams {
    pub fn validate(&self) -> Result<(), String> {
        let fields = [
            ("lambda_p", self.lambda_p),
            ("lambda_omega", self.lambda_omega),
            ("lambda_g", self.lambda_g),
            ("r_reach", self.r_reach),
            ("r_collision", self.r_collision),
            ("r_position", self.r_position),
            ("lambda_i", self.lambda_i),
        ];
        match fields.iter().find(|(_, v)| !v.is_finite()) {
            Some((name, v)) => Err(format!("reward parameter {name} must be finite, got {v}")),
            None => Ok(()),
        }
    }
}

/// `r_reach` / `r_collision` on terminal steps, otherwise the goal-distance
/// progress `λ_g · (d_prev − d_now)`.
pub fn main_task_reward(
    prev_pose: &Pose,
    pose: &Pose,
    goal: Point,
    terminal: TerminalKind,
    params: &RewardParams,
) -> f64 {
    match terminal {
        TerminalKind::ReachedGoal => params.r_reach,
        TerminalKind::Collision => params.r_collision,
        TerminalKind::Continuing | TerminalKind::TimeLimit => {
            let before = prev_pose.position().distance(goal);
            let after = pose.position().distance(goal);
            params.lambda_g * (before - after)
        }
    }
}

/// `r_position` when the robot did not move at all (turn actions), else 0.
pub fn position_penalty(prev_pose: &Pose, pose: &Pose, params: &RewardParams) -> f64 {
    if prev_pose.position().distance(pose.position()) == 0.0 {
        params.r_position
    } else {
        0.0
    }
}

/// Negative absolute heading error towards the goal, in `[−π, 0]`.
pub fn orientation_penalty(pose: &Pose, goal: Point) -> f64 {
    let bearing = (goal.y - pose.y).atan2(goal.x - pose.x);
    -wrap_angle(bearing - pose.omega()).abs()
}

pub fn extrinsic_reward(
    prev_pose: &Pose,
    pose: &Pose,
    goal: Point,
    terminal: TerminalKind,
    params: &RewardParams,
) -> f64 {
    main_task_reward(prev_pose, pose, goal, terminal, params)
        + params.lambda_p * position_penalty(prev_pose, pose, params)
        + params.lambda_omega * orientation_penalty(pose, goal)
}
