//! Evaluation bench: fixed episode suites, success ratio and step statistics,
//! and ranked comparison tables across configurations.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::geometry::{
    point_segment_distance, Action, EpisodeConfig, EpisodeSampler, MapSpec, NavEnv, Observation, OccupancyGrid,
    Point, Pose, SampleError, TerminalKind,
};
use crate::policy::{greedy_action, sample_action, ActorCritic, NetInput, RecurrentState};
use crate::rewards::RewardParams;
use crate::tensor::{ParamSet, TensorError};

pub const SUITE_EPISODES: usize = 300;
pub const EVAL_MAX_STEPS: usize = 400;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error("policy failed: {0}")]
    Policy(#[from] TensorError),
    #[error("nothing to compare")]
    NoResults,
    #[error("writing report: {0}")]
    Csv(#[from] csv::Error),
    #[error("writing report: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeSpec {
    pub start: Pose,
    pub goal: Point,
}

/// A fixed list of start/goal pairs on one map.
#[derive(Debug, Clone)]
pub struct EvalSuite {
    sampler: Arc<EpisodeSampler>,
    pub seed: u64,
    pub max_steps: usize,
    pub episodes: Vec<EpisodeSpec>,
}

impl EvalSuite {
    pub fn map(&self) -> &MapSpec {
        self.sampler.map()
    }

    pub fn sampler(&self) -> &Arc<EpisodeSampler> {
        &self.sampler
    }

    /// A suite over hand-picked episodes.
    pub fn from_episodes(map: Arc<MapSpec>, episodes: Vec<EpisodeSpec>, max_steps: usize) -> Self {
        let config = EpisodeConfig {
            max_steps,
            ..EpisodeConfig::evaluation()
        };
        EvalSuite {
            sampler: Arc::new(EpisodeSampler::new(map, &config)),
            seed: 0,
            max_steps,
            episodes,
        }
    }

    fn episode_config(&self) -> EpisodeConfig {
        EpisodeConfig {
            max_steps: self.max_steps,
            ..EpisodeConfig::evaluation()
        }
    }
}

/// The standard 300-episode, 400-step suite.
pub fn build_suite(map: Arc<MapSpec>, seed: u64) -> Result<EvalSuite, SampleError> {
    build_suite_with(map, seed, SUITE_EPISODES, EVAL_MAX_STEPS)
}

/// Draws `count` connected start/goal pairs from an RNG seeded only by `seed`,
/// so a suite depends on nothing but its own map and seed.
pub fn build_suite_with(
    map: Arc<MapSpec>,
    seed: u64,
    count: usize,
    max_steps: usize,
) -> Result<EvalSuite, SampleError> {
    let config = EpisodeConfig {
        max_steps,
        ..EpisodeConfig::evaluation()
    };
    let sampler = Arc::new(EpisodeSampler::new(map, &config));
    build_suite_from_sampler(sampler, seed, count, max_steps)
}

pub fn build_suite_from_sampler(
    sampler: Arc<EpisodeSampler>,
    seed: u64,
    count: usize,
    max_steps: usize,
) -> Result<EvalSuite, SampleError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let episodes = (0..count)
        .map(|_| sampler.sample(&mut rng).map(|(start, goal)| EpisodeSpec { start, goal }))
        .collect::<Result<_, _>>()?;
    Ok(EvalSuite {
        sampler,
        seed,
        max_steps,
        episodes,
    })
}

/// Per-episode decision maker.
pub trait Controller {
    fn act(&mut self, env: &NavEnv, obs: &Observation) -> Result<Action, TensorError>;
}

/// Hands out a fresh controller per episode; shared across evaluation threads.
pub trait PolicySource: Sync {
    type Controller: Controller;
    fn controller(&self, episode: usize) -> Self::Controller;
}

/// The trained network, acting greedily or by sampling.
pub struct NetworkPolicy<'a> {
    pub net: &'a ActorCritic,
    pub params: &'a ParamSet,
    pub greedy: bool,
    /// Seeds the per-episode RNG when sampling.
    pub seed: u64,
}

pub struct NetworkController<'a> {
    net: &'a ActorCritic,
    params: &'a ParamSet,
    greedy: bool,
    state: Option<RecurrentState>,
    rng: ChaCha8Rng,
}

impl<'a> PolicySource for NetworkPolicy<'a> {
    type Controller = NetworkController<'a>;

    fn controller(&self, episode: usize) -> Self::Controller {
        NetworkController {
            net: self.net,
            params: self.params,
            greedy: self.greedy,
            state: self.net.initial_state(),
            rng: ChaCha8Rng::seed_from_u64(self.seed ^ (episode as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
        }
    }
}

impl Controller for NetworkController<'_> {
    fn act(&mut self, _env: &NavEnv, obs: &Observation) -> Result<Action, TensorError> {
        let out = self
            .net
            .infer(self.params, &NetInput::from_observation(obs), self.state.as_ref())?;
        self.state = out.recurrent_state;
        Ok(if self.greedy {
            greedy_action(&out.policy)
        } else {
            sample_action(&out.policy, &mut self.rng)
        })
    }
}

/// Always drives forward.
#[derive(Debug, Clone, Copy, Default)]
pub struct AlwaysForward;

impl Controller for AlwaysForward {
    fn act(&mut self, _env: &NavEnv, _obs: &Observation) -> Result<Action, TensorError> {
        Ok(Action::Forward)
    }
}

impl PolicySource for AlwaysForward {
    type Controller = AlwaysForward;
    fn controller(&self, _episode: usize) -> AlwaysForward {
        AlwaysForward
    }
}

/// Scripted shortest-path follower: heads for a waypoint a few cells down a
/// BFS distance field, or straight for the goal once it is close. Plans on a
/// grid inflated by `margin` beyond the robot radius so that cutting towards
/// a waypoint never grazes a wall end.
#[derive(Debug, Clone, Copy)]
pub struct PathFollower {
    pub lookahead: usize,
    pub margin: f64,
}

impl Default for PathFollower {
    fn default() -> Self {
        PathFollower {
            lookahead: 6,
            margin: 0.1,
        }
    }
}

impl PolicySource for PathFollower {
    type Controller = PathFollowerController;
    fn controller(&self, _episode: usize) -> PathFollowerController {
        PathFollowerController {
            lookahead: self.lookahead,
            margin: self.margin,
            plan: None,
        }
    }
}

/// Extra wall clearance required of the straight line to a waypoint.
const SIGHT_MARGIN: f64 = 0.04;

pub struct PathFollowerController {
    lookahead: usize,
    margin: f64,
    plan: Option<(OccupancyGrid, Vec<u32>)>,
}

impl PathFollowerController {
    fn plan(&self, env: &NavEnv) -> (OccupancyGrid, Vec<u32>) {
        let base = env.sampler().grid();
        let inflated = OccupancyGrid::build(env.map(), env.config().robot_radius + self.margin, base.cell_size());
        let cells = |grid: &OccupancyGrid| {
            let start = grid.cell_of(env.pose().position()).filter(|&c| grid.is_free(c))?;
            let goal = grid.cell_of(env.goal())?;
            Some((start, goal))
        };
        // Fall back to the sampler's grid when the margin closes a gap.
        for grid in [inflated, base.clone()] {
            if let Some((start, goal)) = cells(&grid) {
                let field = grid.distance_field(goal);
                if field[start] != u32::MAX {
                    return (grid, field);
                }
            }
        }
        let field = vec![u32::MAX; base.dims().0 * base.dims().1];
        (base.clone(), field)
    }

    fn waypoint(&mut self, env: &NavEnv) -> Point {
        let goal = env.goal();
        if self.plan.is_none() {
            self.plan = Some(self.plan(env));
        }
        let (grid, field) = self.plan.as_ref().expect("planned above");
        let (Some(goal_cell), Some(mut cell)) = (grid.cell_of(goal), grid.cell_of(env.pose().position())) else {
            return goal;
        };
        let here = env.pose().position();
        let clearance = env.config().robot_radius + SIGHT_MARGIN;
        if field[cell] == u32::MAX {
            // Off the inflated plan: rejoin at the best visible nearby cell.
            let (cols, rows) = grid.dims();
            let (r0, c0) = ((cell / cols) as i64, (cell % cols) as i64);
            let window = 2 * self.lookahead as i64;
            let rejoin = (r0 - window..=r0 + window)
                .flat_map(|r| (c0 - window..=c0 + window).map(move |c| (r, c)))
                .filter(|&(r, c)| r >= 0 && c >= 0 && (r as usize) < rows && (c as usize) < cols)
                .map(|(r, c)| r as usize * cols + c as usize)
                .filter(|&n| field[n] != u32::MAX && line_of_sight(env.map(), here, grid.cell_center(n), clearance))
                .min_by_key(|&n| field[n]);
            match rejoin {
                Some(n) => cell = n,
                None => return goal,
            }
            if cell == goal_cell {
                return goal;
            }
        }
        for step in 0..self.lookahead {
            let Some(next) = grid.neighbors(cell).filter(|&n| field[n] < field[cell]).min_by_key(|&n| field[n]) else {
                break;
            };
            if step > 0 && !line_of_sight(env.map(), here, grid.cell_center(next), clearance) {
                break;
            }
            cell = next;
            if cell == goal_cell {
                return goal;
            }
        }
        grid.cell_center(cell)
    }
}

/// Whether the straight path keeps `clearance` from every wall, or at least
/// never gets closer than the starting point already is.
fn line_of_sight(map: &MapSpec, from: Point, to: Point, clearance: f64) -> bool {
    let wall_distance = |p: Point| {
        map.segments
            .iter()
            .map(|s| point_segment_distance(p, s))
            .fold(f64::INFINITY, f64::min)
    };
    let floor = clearance.min(wall_distance(from));
    let samples = (from.distance(to) / 0.02).ceil().max(1.0) as usize;
    (1..=samples).all(|i| {
        let t = i as f64 / samples as f64;
        wall_distance(Point::new(from.x + t * (to.x - from.x), from.y + t * (to.y - from.y))) >= floor
    })
}

impl Controller for PathFollowerController {
    fn act(&mut self, env: &NavEnv, _obs: &Observation) -> Result<Action, TensorError> {
        let pose = env.pose();
        let target = self.waypoint(env);
        let bearing = (target.y - pose.y).atan2(target.x - pose.x);
        let error = crate::geometry::wrap_angle(bearing - pose.omega());
        let half_turn = crate::geometry::TURN_ANGLE / 2.0;
        Ok(if error > half_turn {
            Action::TurnLeft
        } else if error < -half_turn {
            Action::TurnRight
        } else {
            Action::Forward
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub outcome: TerminalKind,
    pub steps: usize,
    pub path_m: f64,
    /// Sum of extrinsic rewards.
    pub reward: f64,
}

/// Mean and population standard deviation; `None` for an empty sample.
pub fn mean_std(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub map: String,
    /// Percent of episodes that reached the goal.
    pub success_ratio: f64,
    /// Over all episodes; failures count their full length.
    pub steps_mean: f64,
    pub steps_std: f64,
    /// Over successful episodes only.
    pub success_steps: Option<(f64, f64)>,
    pub reward_mean: f64,
    pub path_m_mean: f64,
    pub episodes: Vec<EpisodeRecord>,
}

impl EvalResult {
    pub fn from_records(map: &str, episodes: Vec<EpisodeRecord>) -> Self {
        let n = episodes.len().max(1) as f64;
        let successes = episodes
            .iter()
            .filter(|e| e.outcome == TerminalKind::ReachedGoal)
            .count();
        let steps: Vec<f64> = episodes.iter().map(|e| e.steps as f64).collect();
        let success_steps: Vec<f64> = episodes
            .iter()
            .filter(|e| e.outcome == TerminalKind::ReachedGoal)
            .map(|e| e.steps as f64)
            .collect();
        let (steps_mean, steps_std) = mean_std(&steps).unwrap_or((0.0, 0.0));
        EvalResult {
            map: map.to_string(),
            success_ratio: 100.0 * successes as f64 / n,
            steps_mean,
            steps_std,
            success_steps: mean_std(&success_steps),
            reward_mean: episodes.iter().map(|e| e.reward).sum::<f64>() / n,
            path_m_mean: episodes.iter().map(|e| e.path_m).sum::<f64>() / n,
            episodes,
        }
    }
}

/// Runs one episode to termination.
pub fn run_episode<C: Controller>(
    env: &mut NavEnv,
    spec: &EpisodeSpec,
    controller: &mut C,
    episode: usize,
) -> Result<EpisodeRecord, TensorError> {
    let mut obs = env.reset(spec.start, spec.goal);
    let mut reward = 0.0;
    loop {
        let action = controller.act(env, &obs)?;
        let (outcome, r) = env.step(action).expect("stepping a running episode");
        reward += r;
        if outcome.terminal.is_terminal() {
            return Ok(EpisodeRecord {
                episode,
                outcome: outcome.terminal,
                steps: env.steps(),
                path_m: env.path_length(),
                reward,
            });
        }
        obs = outcome.next_observation;
    }
}

/// Evaluates every suite episode in parallel; results are in suite order and
/// independent of the thread count.
pub fn run_suite<P: PolicySource>(policy: &P, suite: &EvalSuite) -> Result<EvalResult, EvalError> {
    let config = suite.episode_config();
    let records = suite
        .episodes
        .par_iter()
        .enumerate()
        .map(|(i, spec)| {
            let mut env = NavEnv::new(suite.sampler.clone(), config, RewardParams::default());
            run_episode(&mut env, spec, &mut policy.controller(i), i)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EvalResult::from_records(&suite.map().name, records))
}

/// Network evaluation; intrinsic reward plays no part.
pub fn run_eval(
    net: &ActorCritic,
    params: &ParamSet,
    suite: &EvalSuite,
    greedy: bool,
) -> Result<EvalResult, EvalError> {
    let policy = NetworkPolicy {
        net,
        params,
        greedy,
        seed: suite.seed,
    };
    run_suite(&policy, suite)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub map: String,
    pub config: String,
    pub success_ratio: f64,
    pub steps_mean: f64,
    pub steps_std: f64,
    pub success_steps_mean: Option<f64>,
    pub success_steps_std: Option<f64>,
    pub path_m_mean: f64,
    pub episodes: usize,
}

impl SummaryRow {
    pub fn new(config: &str, r: &EvalResult) -> Self {
        SummaryRow {
            map: r.map.clone(),
            config: config.to_string(),
            success_ratio: r.success_ratio,
            steps_mean: r.steps_mean,
            steps_std: r.steps_std,
            success_steps_mean: r.success_steps.map(|s| s.0),
            success_steps_std: r.success_steps.map(|s| s.1),
            path_m_mean: r.path_m_mean,
            episodes: r.episodes.len(),
        }
    }
}

/// Configurations ranked by ascending success ratio, ties by name.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub rows: Vec<SummaryRow>,
}

pub fn compare_configs(results: &BTreeMap<String, EvalResult>) -> Result<Comparison, EvalError> {
    if results.is_empty() {
        return Err(EvalError::NoResults);
    }
    let mut rows: Vec<SummaryRow> = results.iter().map(|(name, r)| SummaryRow::new(name, r)).collect();
    // BTreeMap order is by name, and the sort is stable.
    rows.sort_by(|a, b| a.success_ratio.total_cmp(&b.success_ratio));
    Ok(Comparison { rows })
}

impl Comparison {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), EvalError> {
        write_summary_csv(out, &self.rows)
    }

    /// Aligned text table in the style of the paper's result tables.
    pub fn to_text(&self) -> String {
        let header = ["Map", "Config", "Success Ratio (%)", "Steps (mean±std)", "Success-only Steps"];
        let cells: Vec<[String; 5]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.map.clone(),
                    r.config.clone(),
                    format!("{:.1}", r.success_ratio),
                    format!("{:.1}±{:.1}", r.steps_mean, r.steps_std),
                    match (r.success_steps_mean, r.success_steps_std) {
                        (Some(m), Some(s)) => format!("{m:.1}±{s:.1}"),
                        _ => "-".to_string(),
                    },
                ]
            })
            .collect();
        let mut widths = header.map(|h| h.chars().count());
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let line = |row: &[String]| {
            row.iter()
                .zip(widths)
                .map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
                .collect::<Vec<_>>()
                .join("  ")
                .trim_end()
                .to_string()
        };
        let mut out = line(&header.map(String::from));
        out.push('\n');
        out.push_str(&widths.map(|w| "-".repeat(w)).join("  "));
        out.push('\n');
        for row in &cells {
            out.push_str(&line(row));
            out.push('\n');
        }
        out
    }
}

pub fn write_summary_csv<W: Write>(out: W, rows: &[SummaryRow]) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-episode CSV: `map,config,episode,outcome,steps,path_m`.
pub fn write_episodes_csv<W: Write>(out: W, results: &[(&str, &EvalResult)]) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["map", "config", "episode", "outcome", "steps", "path_m"])?;
    for (config, result) in results {
        for e in &result.episodes {
            w.write_record([
                result.map.as_str(),
                config,
                &e.episode.to_string(),
                e.outcome.name(),
                &e.steps.to_string(),
                &format!("{:.6}", e.path_m),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
