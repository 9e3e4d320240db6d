use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::raycast::point_collides;
use super::{
    apply_action, check_collision, scan, wrap_angle, Action, LaserScan, MapSpec, OccupancyGrid,
    Point, Pose, FORWARD_STEP,
};
use crate::rewards::{extrinsic_reward, RewardParams};

/// Rejection-sampling budget before a map is declared degenerate.
pub const MAX_SAMPLE_TRIES: usize = 10_000;

/// Scale for the goal distance fed to networks: the diagonal of the
/// 5.33 m × 3.76 m reference floorplans.
pub const GOAL_DISTANCE_SCALE: f64 = 6.522_767_817_422_294;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeConfig {
    pub max_steps: usize,
    pub goal_radius: f64,
    pub robot_radius: f64,
    pub rng_seed: u64,
}

impl EpisodeConfig {
    pub fn training() -> Self {
        EpisodeConfig {
            max_steps: 7000,
            goal_radius: 0.1,
            robot_radius: 0.1,
            rng_seed: 0,
        }
    }

    pub fn evaluation() -> Self {
        EpisodeConfig {
            max_steps: 400,
            ..Self::training()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.max_steps == 0 {
            return Err("max_steps must be > 0".into());
        }
        if !(self.goal_radius > 0.0) {
            return Err(format!("goal_radius must be > 0, got {}", self.goal_radius));
        }
        if !(self.robot_radius > 0.0) {
            return Err(format!("robot_radius must be > 0, got {}", self.robot_radius));
        }
        Ok(())
    }
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self::training()
    }
}

/// Range to goal plus sine/cosine of its bearing in the robot frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoalObservation {
    pub distance: f64,
    pub sin_rel: f64,
    pub cos_rel: f64,
}

impl GoalObservation {
    pub fn normalized(&self) -> [f64; 3] {
        [self.distance / GOAL_DISTANCE_SCALE, self.sin_rel, self.cos_rel]
    }
}

pub fn goal_observation(pose: &Pose, goal: Point) -> GoalObservation {
    let bearing = wrap_angle((goal.y - pose.y).atan2(goal.x - pose.x) - pose.omega());
    GoalObservation {
        distance: pose.position().distance(goal),
        sin_rel: bearing.sin(),
        cos_rel: bearing.cos(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub scan: LaserScan,
    pub goal: GoalObservation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TerminalKind {
    Continuing,
    ReachedGoal,
    Collision,
    TimeLimit,
}

impl TerminalKind {
    pub fn is_terminal(self) -> bool {
        self != TerminalKind::Continuing
    }

    /// Whether the value of the final state should be bootstrapped: true for
    /// rollout cuts and time limits, false for real terminal states.
    pub fn bootstraps(self) -> bool {
        matches!(self, TerminalKind::Continuing | TerminalKind::TimeLimit)
    }

    pub fn name(self) -> &'static str {
        match self {
            TerminalKind::Continuing => "running",
            TerminalKind::ReachedGoal => "goal",
            TerminalKind::Collision => "collision",
            TerminalKind::TimeLimit => "timeout",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next_observation: Observation,
    pub terminal: TerminalKind,
    pub next_pose: Pose,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SampleError {
    #[error("no connected collision-free start/goal pair found on map `{map}` after {tries} tries")]
    Exhausted { map: String, tries: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("step called on an episode that already ended ({0:?})")]
    AlreadyTerminal(TerminalKind),
    #[error("step called before reset")]
    NotStarted,
}

/// Draws start/goal pairs that are collision-free and grid-connected.
#[derive(Debug, Clone)]
pub struct EpisodeSampler {
    map: Arc<MapSpec>,
    grid: OccupancyGrid,
    robot_radius: f64,
    goal_radius: f64,
}

impl EpisodeSampler {
    pub fn new(map: Arc<MapSpec>, config: &EpisodeConfig) -> Self {
        let grid = OccupancyGrid::build(&map, config.robot_radius, OccupancyGrid::DEFAULT_CELL);
        EpisodeSampler {
            map,
            grid,
            robot_radius: config.robot_radius,
            goal_radius: config.goal_radius,
        }
    }

    pub fn map(&self) -> &Arc<MapSpec> {
        &self.map
    }

    pub fn grid(&self) -> &OccupancyGrid {
        &self.grid
    }

    fn spawnable(&self, p: Point) -> bool {
        !point_collides(&self.map, p, self.robot_radius + self.map.spawn_clearance)
    }

    fn random_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        Point::new(
            rng.gen_range(0.0..self.map.width),
            rng.gen_range(0.0..self.map.height),
        )
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(Pose, Point), SampleError> {
        let min_separation = self.goal_radius + FORWARD_STEP;
        for _ in 0..MAX_SAMPLE_TRIES {
            let start = self.random_point(rng);
            let goal = self.random_point(rng);
            let heading = wrap_angle(rng.gen_range(-PI..PI));
            if self.spawnable(start)
                && self.spawnable(goal)
                && start.distance(goal) > min_separation
                && self.grid.connected(start, goal)
            {
                return Ok((Pose::new(start.x, start.y, heading), goal));
            }
        }
        Err(SampleError::Exhausted {
            map: self.map.name.clone(),
            tries: MAX_SAMPLE_TRIES,
        })
    }
}

/// Convenience wrapper that rasterizes the map on every call; prefer
/// [`EpisodeSampler`] when sampling repeatedly.
pub fn sample_episode<R: Rng + ?Sized>(
    map: &MapSpec,
    rng: &mut R,
    config: &EpisodeConfig,
) -> Result<(Pose, Point), SampleError> {
    EpisodeSampler::new(Arc::new(map.clone()), config).sample(rng)
}

/// The navigation MDP for one robot on one map.
#[derive(Debug, Clone)]
pub struct NavEnv {
    sampler: Arc<EpisodeSampler>,
    config: EpisodeConfig,
    rewards: RewardParams,
    pose: Pose,
    goal: Point,
    steps: usize,
    terminal: Option<TerminalKind>,
    path_length: f64,
}

impl NavEnv {
    pub fn new(sampler: Arc<EpisodeSampler>, config: EpisodeConfig, rewards: RewardParams) -> Self {
        NavEnv {
            sampler,
            config,
            rewards,
            pose: Pose::new(0.0, 0.0, 0.0),
            goal: Point::new(0.0, 0.0),
            steps: 0,
            terminal: None,
            path_length: 0.0,
        }
    }

    pub fn map(&self) -> &MapSpec {
        self.sampler.map()
    }

    pub fn sampler(&self) -> &Arc<EpisodeSampler> {
        &self.sampler
    }

    pub fn config(&self) -> &EpisodeConfig {
        &self.config
    }

    pub fn pose(&self) -> Pose {
        self.pose
    }

    pub fn goal(&self) -> Point {
        self.goal
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn path_length(&self) -> f64 {
        self.path_length
    }

    /// `None` before the first reset.
    pub fn terminal(&self) -> Option<TerminalKind> {
        self.terminal
    }

    pub fn reset(&mut self, start: Pose, goal: Point) -> Observation {
        self.pose = start;
        self.goal = goal;
        self.steps = 0;
        self.path_length = 0.0;
        self.terminal = Some(TerminalKind::Continuing);
        self.observation()
    }

    pub fn reset_random<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Observation, SampleError> {
        let (start, goal) = self.sampler.sample(rng)?;
        Ok(self.reset(start, goal))
    }

    pub fn observation(&self) -> Observation {
        Observation {
            scan: scan(self.sampler.map(), &self.pose),
            goal: goal_observation(&self.pose, self.goal),
        }
    }

    /// Advances one step. Goal is checked before collision, then the time limit.
    pub fn step(&mut self, action: Action) -> Result<(StepOutcome, f64), EnvError> {
        match self.terminal {
            None => return Err(EnvError::NotStarted),
            Some(TerminalKind::Continuing) => {}
            Some(done) => return Err(EnvError::AlreadyTerminal(done)),
        }
        let prev = self.pose;
        let next = apply_action(prev, action);
        self.steps += 1;
        self.path_length += prev.position().distance(next.position());

        let terminal = if next.position().distance(self.goal) <= self.config.goal_radius {
            TerminalKind::ReachedGoal
        } else if check_collision(self.sampler.map(), &next, self.config.robot_radius) {
            TerminalKind::Collision
        } else if self.steps >= self.config.max_steps {
            TerminalKind::TimeLimit
        } else {
            TerminalKind::Continuing
        };
        let reward = extrinsic_reward(&prev, &next, self.goal, terminal, &self.rewards);
        self.pose = next;
        self.terminal = Some(terminal);
        Ok((
            StepOutcome {
                next_observation: self.observation(),
                terminal,
                next_pose: next,
            },
            reward,
        ))
    }
}
