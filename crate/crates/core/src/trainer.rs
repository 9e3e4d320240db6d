//! Asynchronous advantage actor-critic with an optional curiosity bonus.
//!
//! Each worker owns an environment and a private parameter copy. At the start
//! of a rollout it syncs from the shared store, collects up to `rollout_k`
//! steps, computes the joint actor-critic and curiosity loss, and applies the
//! clipped gradient to the shared store under a short write lock.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc;
use std::sync::{Arc, RwLock};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::Agent;
use crate::config::RunConfig;
use crate::eval::{build_suite_from_sampler, run_eval, EvalError, EvalSuite, EpisodeSpec};
use crate::geometry::{
    Action, EnvError, EpisodeSampler, MapSpec, NavEnv, Observation, SampleError, TerminalKind,
};
use crate::icm::icm_loss;
use crate::policy::{read_output, sample_action, ForwardVars, NetInput, RecurrentState};
use crate::snapshot::{Snapshot, SnapshotError};
use crate::tensor::{Gradients, ParamSet, ParamStore, Tape, Tensor, TensorError, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerConfig {
    pub gamma: f64,
    /// Entropy regularization coefficient β.
    pub beta: f64,
    pub use_icm: bool,
    pub rollout_k: usize,
    pub workers: usize,
    pub learning_rate: f64,
    /// Budget in environment steps summed over all workers.
    pub total_iterations: u64,
    pub grad_clip_norm: f64,
    pub seed: u64,
    /// Environment steps between metrics rows and snapshots.
    pub eval_interval: u64,
    /// Episodes in the periodic greedy evaluation.
    pub eval_episodes: usize,
    pub eval_max_steps: usize,
    /// Record elapsed time in the metrics; off gives byte-reproducible logs.
    pub record_wall_time: bool,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            gamma: 0.99,
            beta: 0.01,
            use_icm: true,
            rollout_k: 50,
            workers: 22,
            learning_rate: 1e-4,
            total_iterations: 3_000_000,
            grad_clip_norm: 40.0,
            seed: 0,
            eval_interval: 10_000,
            eval_episodes: 20,
            eval_max_steps: 400,
            record_wall_time: true,
        }
    }
}

impl TrainerConfig {
    /// The four exploration configurations: `a3c-`, `entropy`, `icm`, `icm+entropy`.
    pub fn preset(name: &str) -> Option<Self> {
        let (beta, use_icm) = match name.to_ascii_lowercase().as_str() {
            "a3c-" | "a3c-minus" => (0.0, false),
            "entropy" => (0.01, false),
            "icm" => (0.0, true),
            "icm+entropy" | "icm-entropy" => (0.01, true),
            _ => return None,
        };
        Some(TrainerConfig {
            beta,
            use_icm,
            ..TrainerConfig::default()
        })
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(format!("gamma must be in (0, 1), got {}", self.gamma));
        }
        if !(self.beta >= 0.0) {
            return Err(format!("beta must be >= 0, got {}", self.beta));
        }
        if self.rollout_k == 0 {
            return Err("rollout_k must be >= 1".into());
        }
        if self.workers == 0 {
            return Err("workers must be >= 1".into());
        }
        if !(self.learning_rate > 0.0) {
            return Err(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if !(self.grad_clip_norm > 0.0) {
            return Err(format!("grad_clip_norm must be > 0, got {}", self.grad_clip_norm));
        }
        if self.eval_interval == 0 {
            return Err("eval_interval must be >= 1".into());
        }
        if self.eval_episodes == 0 || self.eval_max_steps == 0 {
            return Err("eval_episodes and eval_max_steps must be >= 1".into());
        }
        Ok(())
    }
}

/// `R = R^e + λ_i·R^i`.
pub fn combined_reward(extrinsic: f64, intrinsic: f64, lambda_i: f64) -> f64 {
    extrinsic + lambda_i * intrinsic
}

/// Discounted returns computed backwards from `bootstrap` (zero when absent):
/// `G_t = R_t + γ·G_{t+1}`.
pub fn n_step_returns(rewards: &[f64], bootstrap: Option<f64>, gamma: f64) -> Vec<f64> {
    let mut g = bootstrap.unwrap_or(0.0);
    let mut out = vec![0.0; rewards.len()];
    for (o, r) in out.iter_mut().zip(rewards).rev() {
        g = r + gamma * g;
        *o = g;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutStep {
    pub input: NetInput,
    pub action: Action,
    pub extrinsic: f64,
    pub intrinsic: f64,
    pub value: f64,
    pub policy: [f64; 3],
    pub terminal: TerminalKind,
}

/// Up to K consecutive steps of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub initial_state: Option<RecurrentState>,
    pub steps: Vec<RolloutStep>,
    /// Observation after the last step.
    pub next_input: NetInput,
    /// `V(s_K)`, present iff the last step was a rollout cut or a time limit.
    pub bootstrap_value: Option<f64>,
}

impl Rollout {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn rewards(&self, lambda_i: f64) -> Vec<f64> {
        self.steps
            .iter()
            .map(|s| combined_reward(s.extrinsic, s.intrinsic, lambda_i))
            .collect()
    }

    pub fn returns(&self, lambda_i: f64, gamma: f64) -> Vec<f64> {
        n_step_returns(&self.rewards(lambda_i), self.bootstrap_value, gamma)
    }

    pub fn check(&self) -> Result<(), String> {
        let Some(last) = self.steps.last() else {
            return Err("empty rollout".into());
        };
        if last.terminal.bootstraps() != self.bootstrap_value.is_some() {
            return Err(format!(
                "bootstrap value {} for a rollout ending in `{}`",
                if self.bootstrap_value.is_some() { "present" } else { "missing" },
                last.terminal.name()
            ));
        }
        Ok(())
    }
}

/// Per-step actor-critic loss on the tape:
/// `adv·CE(π, a) − β·H(π) + ½(G − V)²` summed over steps, where the
/// advantage `G − V` is a constant.
pub fn actor_critic_loss(
    tape: &mut Tape<'_>,
    policies: &[Var],
    values: &[Var],
    actions: &[Action],
    returns: &[f64],
    beta: f64,
) -> Result<Var, TensorError> {
    let advantages: Vec<f64> = values
        .iter()
        .zip(returns)
        .map(|(&v, g)| g - tape.value(v).item())
        .collect();
    actor_critic_loss_with_advantages(tape, policies, values, actions, returns, &advantages, beta)
}

/// [`actor_critic_loss`] with the advantages supplied as constants.
pub fn actor_critic_loss_with_advantages(
    tape: &mut Tape<'_>,
    policies: &[Var],
    values: &[Var],
    actions: &[Action],
    returns: &[f64],
    advantages: &[f64],
    beta: f64,
) -> Result<Var, TensorError> {
    let n = policies.len();
    let lens = [values.len(), actions.len(), returns.len(), advantages.len()];
    if n == 0 || lens.iter().any(|&l| l != n) {
        return Err(TensorError::Invalid {
            op: "actor_critic_loss",
            reason: format!("{n} policies but values/actions/returns/advantages of lengths {lens:?}"),
        });
    }
    let mut terms = Vec::with_capacity(3 * n);
    for t in 0..n {
        let advantage = advantages[t];
        let ce = tape.cross_entropy(policies[t], &actions[t].one_hot())?;
        terms.push(tape.scale(ce, advantage));
        if beta != 0.0 {
            let h = tape.entropy(policies[t]);
            terms.push(tape.scale(h, -beta));
        }
        let target = tape.input(Tensor::scalar(returns[t]));
        terms.push(tape.mse_half(values[t], target)?);
    }
    tape.sum(&terms)
}

/// Plain-value form of [`actor_critic_loss`].
pub fn actor_critic_loss_value(
    policies: &[[f64; 3]],
    values: &[f64],
    actions: &[Action],
    returns: &[f64],
    beta: f64,
) -> f64 {
    let mut total = 0.0;
    for t in 0..policies.len() {
        let advantage = returns[t] - values[t];
        total += advantage * crate::tensor::cross_entropy(&policies[t], &actions[t].one_hot());
        if beta != 0.0 {
            total -= beta * crate::tensor::entropy(&policies[t]);
        }
        total += 0.5 * (returns[t] - values[t]).powi(2);
    }
    total
}

/// Scalar pieces of one rollout loss, for logging and tests.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub loss: f64,
    pub returns: Vec<f64>,
    pub advantages: Vec<f64>,
    pub intrinsic: Vec<f64>,
}

/// Returns and advantages held fixed instead of derived from the rollout.
/// Both are constants in the loss, so fixing them lets the loss be probed
/// by finite differences.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedTargets {
    pub returns: Vec<f64>,
    pub advantages: Vec<f64>,
}

/// Builds the joint loss for a rollout whose forward passes are already on
/// the tape. Fills in the intrinsic rewards when the agent has a curiosity
/// module.
pub fn assemble_loss(
    tape: &mut Tape<'_>,
    agent: &Agent,
    forward: &[ForwardVars],
    rollout: &mut Rollout,
    lambda_i: f64,
    config: &TrainerConfig,
) -> Result<(Var, LossReport), TensorError> {
    assemble_loss_with(tape, agent, forward, rollout, None, lambda_i, config)
}

/// [`assemble_loss`], optionally with [`FixedTargets`].
pub fn assemble_loss_with(
    tape: &mut Tape<'_>,
    agent: &Agent,
    forward: &[ForwardVars],
    rollout: &mut Rollout,
    targets: Option<&FixedTargets>,
    lambda_i: f64,
    config: &TrainerConfig,
) -> Result<(Var, LossReport), TensorError> {
    let mut icm_terms = Vec::new();
    if let Some(icm) = &agent.icm {
        let lambda_f = icm.config().lambda_f;
        let mut phi = {
            let s = tape.input(Tensor::vector(rollout.steps[0].input.laser.clone()));
            icm.encode(tape, s)?
        };
        for t in 0..rollout.steps.len() {
            let next_laser = match rollout.steps.get(t + 1) {
                Some(s) => &s.input.laser,
                None => &rollout.next_input.laser,
            };
            let s1 = tape.input(Tensor::vector(next_laser.clone()));
            let phi1 = icm.encode(tape, s1)?;
            let action = rollout.steps[t].action;
            let transition = icm.transition(tape, phi, phi1, action)?;
            rollout.steps[t].intrinsic = transition.intrinsic_reward(tape);
            icm_terms.push(icm_loss(tape, &transition, action, lambda_f)?);
            phi = phi1;
        }
    }
    let policies: Vec<Var> = forward.iter().map(|f| f.policy).collect();
    let values: Vec<Var> = forward.iter().map(|f| f.value).collect();
    let actions: Vec<Action> = rollout.steps.iter().map(|s| s.action).collect();
    let (returns, advantages) = match targets {
        Some(t) => (t.returns.clone(), t.advantages.clone()),
        None => {
            let returns = rollout.returns(lambda_i, config.gamma);
            let advantages = values
                .iter()
                .zip(&returns)
                .map(|(&v, g)| g - tape.value(v).item())
                .collect();
            (returns, advantages)
        }
    };
    let mut loss = actor_critic_loss_with_advantages(
        tape,
        &policies,
        &values,
        &actions,
        &returns,
        &advantages,
        config.beta,
    )?;
    if !icm_terms.is_empty() {
        icm_terms.push(loss);
        loss = tape.sum(&icm_terms)?;
    }
    let report = LossReport {
        loss: tape.value(loss).item(),
        returns,
        advantages,
        intrinsic: rollout.steps.iter().map(|s| s.intrinsic).collect(),
    };
    Ok((loss, report))
}

/// Replays a recorded rollout through the network and builds its loss.
pub fn rollout_loss(
    tape: &mut Tape<'_>,
    agent: &Agent,
    rollout: &mut Rollout,
    lambda_i: f64,
    config: &TrainerConfig,
) -> Result<(Var, LossReport), TensorError> {
    rollout_loss_with(tape, agent, rollout, None, lambda_i, config)
}

/// [`rollout_loss`], optionally with [`FixedTargets`].
pub fn rollout_loss_with(
    tape: &mut Tape<'_>,
    agent: &Agent,
    rollout: &mut Rollout,
    targets: Option<&FixedTargets>,
    lambda_i: f64,
    config: &TrainerConfig,
) -> Result<(Var, LossReport), TensorError> {
    let mut state = rollout.initial_state.as_ref().map(|s| {
        (
            tape.input(Tensor::vector(s.h.clone())),
            tape.input(Tensor::vector(s.c.clone())),
        )
    });
    let mut forward = Vec::with_capacity(rollout.steps.len());
    for step in &rollout.steps {
        let laser = tape.input(Tensor::vector(step.input.laser.clone()));
        let goal = tape.input(Tensor::vector(step.input.goal.to_vec()));
        let out = agent.net.forward(tape, laser, goal, state)?;
        state = out.state;
        forward.push(out);
    }
    assemble_loss_with(tape, agent, &forward, rollout, targets, lambda_i, config)
}

/// Where training episodes come from.
#[derive(Debug, Clone)]
pub enum EpisodeSource {
    /// Fresh connected start/goal pairs from the map sampler.
    Random,
    /// Uniform draws from a fixed list.
    Fixed(Vec<EpisodeSpec>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub iteration: u64,
    pub wall_seconds: f64,
    pub avg_reward: f64,
    pub avg_steps: f64,
    pub success_ratio: f64,
}

pub const METRICS_HEADER: [&str; 5] = ["iteration", "wall_seconds", "avg_reward", "avg_steps", "success_ratio"];

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error("worker {worker} failed: {message}")]
    Worker { worker: usize, message: String },
    #[error("writing {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub store: ParamStore,
    pub agent: Agent,
    pub metrics: Vec<MetricsRow>,
    pub iterations: u64,
}

/// Snapshot of `params` tagged with the configs needed to rebuild the agent.
pub fn make_snapshot(config: &RunConfig, params: &ParamSet, iteration: u64) -> Snapshot {
    let icm = if config.trainer.use_icm {
        serde_json::to_string(&config.icm).expect("serializable")
    } else {
        "none".to_string()
    };
    Snapshot::new(params.clone())
        .with_meta("network", serde_json::to_string(&config.network).expect("serializable"))
        .with_meta("icm", icm)
        .with_meta("iteration", iteration.to_string())
}

struct Shared {
    store: RwLock<ParamStore>,
    counter: AtomicU64,
    abort: AtomicBool,
    start: Instant,
}

enum Message {
    Row(MetricsRow, Option<Snapshot>),
}

/// Drives one training run. Build with [`Trainer::new`], then [`Trainer::run`].
pub struct Trainer {
    config: RunConfig,
    map: Arc<MapSpec>,
    episodes: EpisodeSource,
    out_dir: Option<PathBuf>,
}

impl Trainer {
    pub fn new(config: RunConfig, map: Arc<MapSpec>) -> Self {
        Trainer {
            config,
            map,
            episodes: EpisodeSource::Random,
            out_dir: None,
        }
    }

    pub fn episodes(mut self, source: EpisodeSource) -> Self {
        self.episodes = source;
        self
    }

    /// Writes `metrics.csv` and `snapshots/` under `dir`.
    pub fn output(mut self, dir: impl Into<PathBuf>) -> Self {
        self.out_dir = Some(dir.into());
        self
    }

    pub fn run(self) -> Result<TrainOutcome, TrainError> {
        let cfg = &self.config;
        cfg.validate().map_err(TrainError::Config)?;
        let tc = &cfg.trainer;
        if let EpisodeSource::Fixed(list) = &self.episodes {
            if list.is_empty() {
                return Err(TrainError::Config("fixed episode list is empty".into()));
            }
        }
        let icm_cfg = tc.use_icm.then_some(&cfg.icm);
        let (agent, params) = Agent::build(&cfg.network, icm_cfg, tc.seed)?;
        let sampler = Arc::new(EpisodeSampler::new(self.map.clone(), &cfg.episode));
        let eval_suite = match &self.episodes {
            EpisodeSource::Random => build_suite_from_sampler(
                sampler.clone(),
                tc.seed ^ 0x5EED_E7A1,
                tc.eval_episodes,
                tc.eval_max_steps,
            )?,
            EpisodeSource::Fixed(list) => EvalSuite::from_episodes(self.map.clone(), list.clone(), tc.eval_max_steps),
        };

        let mut metrics_writer = match &self.out_dir {
            Some(dir) => Some(MetricsWriter::create(dir)?),
            None => None,
        };

        let shared = Shared {
            store: RwLock::new(ParamStore::new(params)),
            counter: AtomicU64::new(0),
            abort: AtomicBool::new(false),
            start: Instant::now(),
        };
        let (tx, rx) = mpsc::channel::<Message>();

        let mut rows = Vec::new();
        let mut failures = Vec::new();
        let mut log_error = None;
        std::thread::scope(|scope| {
            let shared = &shared;
            let handles: Vec<_> = (0..tc.workers)
                .map(|id| {
                    let tx = tx.clone();
                    let worker = Worker {
                        id,
                        shared,
                        agent: &agent,
                        config: cfg,
                        sampler: sampler.clone(),
                        episodes: &self.episodes,
                        eval_suite: &eval_suite,
                        tx,
                        snapshots: self.out_dir.is_some(),
                    };
                    scope.spawn(move || {
                        let result = worker.run();
                        if result.is_err() {
                            shared.abort.store(true, Ordering::SeqCst);
                        }
                        result
                    })
                })
                .collect();
            drop(tx);

            // Single writer: rows are emitted in iteration order.
            let mut pending = std::collections::BTreeMap::new();
            let mut next = tc.eval_interval;
            for Message::Row(row, snap) in rx {
                pending.insert(row.iteration, (row, snap));
                while let Some((row, snap)) = pending.remove(&next) {
                    if let Some(w) = metrics_writer.as_mut() {
                        if let Err(e) = w.write(&row, snap.as_ref()) {
                            log_error.get_or_insert(e);
                            shared.abort.store(true, Ordering::SeqCst);
                        }
                    }
                    rows.push(row);
                    next += tc.eval_interval;
                }
            }
            for (id, h) in handles.into_iter().enumerate() {
                match h.join() {
                    Ok(Ok(())) => {}
                    Ok(Err(e)) => failures.push(e),
                    Err(_) => failures.push(TrainError::Worker {
                        worker: id,
                        message: "panicked".into(),
                    }),
                }
            }
        });
        if let Some(e) = log_error {
            return Err(e);
        }
        if let Some(e) = failures.into_iter().next() {
            return Err(e);
        }
        let iterations = shared.counter.load(Ordering::SeqCst).min(tc.total_iterations);
        let store = shared.store.into_inner().expect("no worker holds the lock");
        if let Some(dir) = &self.out_dir {
            make_snapshot(cfg, store.params(), iterations).save(&dir.join("final.snap"))?;
        }
        Ok(TrainOutcome {
            store,
            agent,
            metrics: rows,
            iterations,
        })
    }
}

/// Convenience wrapper for [`Trainer`] without output files.
pub fn train(config: &RunConfig, map: Arc<MapSpec>) -> Result<TrainOutcome, TrainError> {
    Trainer::new(config.clone(), map).run()
}

struct MetricsWriter {
    path: PathBuf,
    snapshot_dir: PathBuf,
    writer: csv::Writer<fs::File>,
}

impl MetricsWriter {
    fn create(dir: &Path) -> Result<Self, TrainError> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| TrainError::Io { path, source }
        };
        let snapshot_dir = dir.join("snapshots");
        fs::create_dir_all(&snapshot_dir).map_err(io(&snapshot_dir))?;
        let path = dir.join("metrics.csv");
        let file = fs::File::create(&path).map_err(io(&path))?;
        let mut writer = csv::Writer::from_writer(file);
        writer
            .write_record(METRICS_HEADER)
            .and_then(|_| writer.flush().map_err(Into::into))
            .map_err(|e| TrainError::Io {
                path: path.clone(),
                source: std::io::Error::other(e),
            })?;
        Ok(MetricsWriter {
            path,
            snapshot_dir,
            writer,
        })
    }

    fn write(&mut self, row: &MetricsRow, snap: Option<&Snapshot>) -> Result<(), TrainError> {
        let record = [
            row.iteration.to_string(),
            format!("{:.3}", row.wall_seconds),
            format!("{:.6}", row.avg_reward),
            format!("{:.3}", row.avg_steps),
            format!("{:.3}", row.success_ratio),
        ];
        self.writer
            .write_record(&record)
            .map_err(std::io::Error::other)
            .and_then(|_| self.writer.flush())
            .map_err(|source| TrainError::Io {
                path: self.path.clone(),
                source,
            })?;
        if let Some(snap) = snap {
            snap.save(&self.snapshot_dir.join(format!("iter_{:09}.snap", row.iteration)))?;
        }
        Ok(())
    }
}

fn worker_seed(seed: u64, worker: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((worker as u64 + 1).wrapping_mul(0xD1B5_4A32_D192_ED03))
}

struct Worker<'a> {
    id: usize,
    shared: &'a Shared,
    agent: &'a Agent,
    config: &'a RunConfig,
    sampler: Arc<EpisodeSampler>,
    episodes: &'a EpisodeSource,
    eval_suite: &'a EvalSuite,
    tx: mpsc::Sender<Message>,
    snapshots: bool,
}

impl Worker<'_> {
    fn fail(&self, message: impl ToString) -> TrainError {
        TrainError::Worker {
            worker: self.id,
            message: message.to_string(),
        }
    }

    fn new_episode(&self, env: &mut NavEnv, rng: &mut ChaCha8Rng) -> Result<Observation, TrainError> {
        Ok(match self.episodes {
            EpisodeSource::Random => env.reset_random(rng)?,
            EpisodeSource::Fixed(list) => {
                let spec = list[rng.gen_range(0..list.len())];
                env.reset(spec.start, spec.goal)
            }
        })
    }

    /// Claims one environment step from the global budget; returns its
    /// 1-based index.
    fn claim(&self) -> Option<u64> {
        if self.shared.abort.load(Ordering::SeqCst) {
            return None;
        }
        let i = self.shared.counter.fetch_add(1, Ordering::SeqCst);
        (i < self.config.trainer.total_iterations).then_some(i + 1)
    }

    fn run(self) -> Result<(), TrainError> {
        let tc = &self.config.trainer;
        let mut rng = ChaCha8Rng::seed_from_u64(worker_seed(tc.seed, self.id));
        let mut env = NavEnv::new(self.sampler.clone(), self.config.episode, self.config.reward);
        let mut obs = self.new_episode(&mut env, &mut rng)?;
        let mut state = self.agent.net.initial_state();
        let mut params = self.shared.store.read().expect("store lock").params().clone();
        let mut grads = Gradients::zeros_like(&params);

        loop {
            params
                .copy_from(self.shared.store.read().expect("store lock").params())
                .map_err(|e| self.fail(e))?;
            let mut tape = Tape::new(&params);
            let mut state_vars = state.as_ref().map(|s| {
                (
                    tape.input(Tensor::vector(s.h.clone())),
                    tape.input(Tensor::vector(s.c.clone())),
                )
            });
            let mut rollout = Rollout {
                initial_state: state.clone(),
                steps: Vec::with_capacity(tc.rollout_k),
                next_input: NetInput::from_observation(&obs),
                bootstrap_value: None,
            };
            let mut forward = Vec::with_capacity(tc.rollout_k);
            let mut exhausted = false;
            let mut episode_over = false;

            while rollout.steps.len() < tc.rollout_k {
                let Some(iteration) = self.claim() else {
                    exhausted = true;
                    break;
                };
                let input = rollout.next_input.clone();
                let laser = tape.input(Tensor::vector(input.laser.clone()));
                let goal = tape.input(Tensor::vector(input.goal.to_vec()));
                let out = self.agent.net.forward(&mut tape, laser, goal, state_vars)?;
                let plain = read_output(&tape, &out);
                let action = sample_action(&plain.policy, &mut rng);
                let (outcome, reward) = env.step(action).map_err(|e: EnvError| self.fail(e))?;
                state_vars = out.state;
                forward.push(out);
                rollout.steps.push(RolloutStep {
                    input,
                    action,
                    extrinsic: reward,
                    intrinsic: 0.0,
                    value: plain.value,
                    policy: plain.policy,
                    terminal: outcome.terminal,
                });
                rollout.next_input = NetInput::from_observation(&outcome.next_observation);
                obs = outcome.next_observation;
                if iteration % tc.eval_interval == 0 {
                    self.evaluate(iteration)?;
                }
                if outcome.terminal.is_terminal() {
                    episode_over = true;
                    break;
                }
            }

            if rollout.steps.is_empty() {
                return Ok(());
            }
            let last = rollout.steps.last().expect("non-empty").terminal;
            let carried = state_vars.map(|(h, c)| RecurrentState {
                h: tape.value(h).data().to_vec(),
                c: tape.value(c).data().to_vec(),
            });
            if last.bootstraps() {
                let v = self
                    .agent
                    .net
                    .infer(&params, &rollout.next_input, carried.as_ref())?
                    .value;
                rollout.bootstrap_value = Some(v);
            }
            rollout.check().map_err(|e| self.fail(e))?;

            grads.reset();
            let (loss, report) = assemble_loss(
                &mut tape,
                self.agent,
                &forward,
                &mut rollout,
                self.config.reward.lambda_i,
                tc,
            )?;
            if !report.loss.is_finite() {
                return Err(self.fail(format!("non-finite loss {}", report.loss)));
            }
            tape.backward(loss, &mut grads)?;
            drop(tape);
            grads.clip_global_norm(tc.grad_clip_norm);
            if !grads.is_finite() {
                return Err(self.fail("non-finite gradient"));
            }
            self.shared
                .store
                .write()
                .expect("store lock")
                .adam_apply(&grads, tc.learning_rate)?;

            if exhausted {
                return Ok(());
            }
            if episode_over {
                obs = self.new_episode(&mut env, &mut rng)?;
                state = self.agent.net.initial_state();
            } else {
                state = carried;
            }
        }
    }

    fn evaluate(&self, iteration: u64) -> Result<(), TrainError> {
        let params = self.shared.store.read().expect("store lock").params().clone();
        let result = run_eval(&self.agent.net, &params, self.eval_suite, true).map_err(|e| match e {
            EvalError::Policy(t) => TrainError::Tensor(t),
            other => self.fail(other),
        })?;
        let wall_seconds = if self.config.trainer.record_wall_time {
            self.shared.start.elapsed().as_secs_f64()
        } else {
            0.0
        };
        let row = MetricsRow {
            iteration,
            wall_seconds,
            avg_reward: result.reward_mean,
            avg_steps: result.steps_mean,
            success_ratio: result.success_ratio,
        };
        let snap = self
            .snapshots
            .then(|| make_snapshot(self.config, &params, iteration));
        // The logger only goes away once every worker has finished.
        let _ = self.tx.send(Message::Row(row, snap));
        Ok(())
    }
}
