//! Acceptance checks shared by the focused test files and the acceptance
//! runner. Each returns a [`Check`] instead of panicking so the runner can
//! report every criterion.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_4, PI};
use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use curionav::agent::Agent;
use curionav::config::RunConfig;
use curionav::eval::{
    build_suite, build_suite_with, run_eval, write_episodes_csv, write_summary_csv, EvalResult,
    SummaryRow,
};
use curionav::geometry::{
    apply_action, bundled, scan, Action, MapSpec, Point, Pose, Segment, TerminalKind, BEAM_COUNT, MAX_RANGE,
    TURN_ANGLE,
};
use curionav::icm::intrinsic_reward;
use curionav::policy::{NetInput, NetworkConfig};
use curionav::rewards::{extrinsic_reward, RewardParams};
use curionav::snapshot::Snapshot;
use curionav::tensor::Tape;
use curionav::trainer::{n_step_returns, Trainer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{cases, FD_TOLERANCE};

pub const DESK_CONFIG: &str = include_str!("../../../../configs/desk_smoke.toml");
/// Seed of the 300-episode suites used by the learning checks.
pub const SUITE_SEED: u64 = 20_240_501;

#[derive(Debug, Clone)]
pub struct Check {
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(pass: bool, detail: impl Into<String>) -> Self {
        Check {
            pass,
            detail: detail.into(),
        }
    }

    pub fn fail(detail: impl Into<String>) -> Self {
        Check::new(false, detail)
    }
}

// ---------------------------------------------------------------- rewards

pub struct RewardCase {
    pub name: &'static str,
    pub prev: Pose,
    pub action: Action,
    pub goal: Point,
    pub terminal: TerminalKind,
    pub expected: f64,
}

/// Hand-computed rewards from the published constants. The orientation term
/// is written out as `λ_ω · −|error|` with the error known in closed form.
pub fn reward_cases() -> Vec<RewardCase> {
    let lambda_omega = 1.0 / (200.0 * PI);
    let origin = Pose::new(0.0, 0.0, 0.0);
    vec![
        RewardCase {
            name: "reach, facing goal",
            prev: origin,
            action: Action::Forward,
            goal: Point::new(1.0, 0.0),
            terminal: TerminalKind::ReachedGoal,
            expected: 1.0,
        },
        RewardCase {
            name: "collision, facing goal",
            prev: origin,
            action: Action::Forward,
            goal: Point::new(1.0, 0.0),
            terminal: TerminalKind::Collision,
            expected: -5.0,
        },
        RewardCase {
            name: "forward toward goal",
            prev: origin,
            action: Action::Forward,
            goal: Point::new(1.0, 0.0),
            terminal: TerminalKind::Continuing,
            expected: 0.15 * (1.0 - (1.0 - 0.06)),
        },
        RewardCase {
            name: "forward at time limit",
            prev: origin,
            action: Action::Forward,
            goal: Point::new(2.0, 0.0),
            terminal: TerminalKind::TimeLimit,
            expected: 0.15 * (2.0 - (2.0 - 0.06)),
        },
        RewardCase {
            name: "forward away from goal",
            prev: origin,
            action: Action::Forward,
            goal: Point::new(-1.0, 0.0),
            terminal: TerminalKind::Continuing,
            expected: 0.15 * (1.0 - 1.06) + lambda_omega * -PI,
        },
        RewardCase {
            name: "turn left off goal line",
            prev: origin,
            action: Action::TurnLeft,
            goal: Point::new(1.0, 0.0),
            terminal: TerminalKind::Continuing,
            expected: 0.0 + -0.05 + lambda_omega * -TURN_ANGLE,
        },
        RewardCase {
            name: "turn right off goal line",
            prev: origin,
            action: Action::TurnRight,
            goal: Point::new(1.0, 0.0),
            terminal: TerminalKind::Continuing,
            expected: 0.0 + -0.05 + lambda_omega * -TURN_ANGLE,
        },
        RewardCase {
            name: "turn onto goal line",
            prev: Pose::new(0.0, 0.0, -TURN_ANGLE),
            action: Action::TurnLeft,
            goal: Point::new(1.0, 0.0),
            terminal: TerminalKind::Continuing,
            expected: -0.05,
        },
        RewardCase {
            name: "goal behind on the left",
            prev: Pose::new(0.0, 0.0, 0.0),
            action: Action::TurnLeft,
            goal: Point::new(0.0, 1.0),
            terminal: TerminalKind::Continuing,
            expected: -0.05 + lambda_omega * -(PI / 2.0 - TURN_ANGLE),
        },
        RewardCase {
            name: "collision while turning",
            prev: origin,
            action: Action::TurnLeft,
            goal: Point::new(1.0, 0.0),
            terminal: TerminalKind::Collision,
            expected: -5.0 + -0.05 + lambda_omega * -TURN_ANGLE,
        },
    ]
}

pub fn reward_table() -> Check {
    let params = RewardParams::default();
    let cases = reward_cases();
    let failures: Vec<String> = cases
        .iter()
        .filter_map(|c| {
            let pose = apply_action(c.prev, c.action);
            let got = extrinsic_reward(&c.prev, &pose, c.goal, c.terminal, &params);
            (got != c.expected).then(|| format!("{}: got {got:e}, expected {:e}", c.name, c.expected))
        })
        .collect();
    Check::new(
        failures.is_empty(),
        if failures.is_empty() {
            format!("{}/{} cases bit-exact", cases.len(), cases.len())
        } else {
            failures.join("; ")
        },
    )
}

// ---------------------------------------------------------------- curiosity

pub fn intrinsic_reward_values() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let phi: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let zero = intrinsic_reward(&phi, &phi);
    let shifted: Vec<f64> = phi.iter().map(|x| x + 1.0).collect();
    let unit = intrinsic_reward(&shifted, &phi);
    let mut worst_scaling: f64 = 0.0;
    for _ in 0..200 {
        let a: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let k: f64 = rng.gen_range(-4.0..4.0);
        let base = intrinsic_reward(&a, &b);
        let scaled: Vec<f64> = a.iter().zip(&b).map(|(x, y)| y + k * (x - y)).collect();
        let want = k * k * base;
        let err = (intrinsic_reward(&scaled, &b) - want).abs() / want.abs().max(1.0);
        worst_scaling = worst_scaling.max(err);
    }
    let pass = zero == 0.0 && (unit - 8.0).abs() <= 1e-12 && worst_scaling <= 1e-12;
    Check::new(
        pass,
        format!("perfect={zero:e} unit-diff={unit} quadratic scaling rel err={worst_scaling:.1e}"),
    )
}

// ---------------------------------------------------------------- gradients

pub const GRADIENT_INSTANCES: usize = 20;

/// Worst central-difference error per case.
pub fn gradient_errors() -> Vec<(&'static str, f64)> {
    cases::ALL
        .iter()
        .enumerate()
        .map(|(i, (name, case))| {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + i as u64);
            let worst = (0..GRADIENT_INSTANCES).map(|_| case(&mut rng)).fold(0.0, f64::max);
            (*name, worst)
        })
        .collect()
}

pub fn gradient_fidelity() -> Check {
    let start = Instant::now();
    let errors = gradient_errors();
    let secs = start.elapsed().as_secs_f64();
    let (worst_name, worst) = errors
        .iter()
        .cloned()
        .fold(("", 0.0), |acc, e| if e.1 > acc.1 { e } else { acc });
    let failures: Vec<_> = errors.iter().filter(|e| e.1 >= FD_TOLERANCE).collect();
    Check::new(
        failures.is_empty() && secs < 120.0,
        format!(
            "{} cases x {GRADIENT_INSTANCES} instances, worst {worst:.2e} ({worst_name}), {secs:.1}s{}",
            errors.len(),
            if failures.is_empty() {
                String::new()
            } else {
                format!(", failing: {failures:?}")
            }
        ),
    )
}

// ---------------------------------------------------------------- returns

/// `G_t = Σ_{j≥t} γ^{j−t} r_j + γ^{n−t} b`, summed term by term.
pub fn brute_force_returns(rewards: &[f64], bootstrap: Option<f64>, gamma: f64) -> Vec<f64> {
    let n = rewards.len();
    (0..n)
        .map(|t| {
            let discounted: f64 = (t..n).map(|j| gamma.powi((j - t) as i32) * rewards[j]).sum();
            discounted + gamma.powi((n - t) as i32) * bootstrap.unwrap_or(0.0)
        })
        .collect()
}

pub fn random_rollout<R: Rng>(rng: &mut R) -> (Vec<f64>, Option<f64>, f64) {
    let len = rng.gen_range(1..=50);
    let rewards = (0..len).map(|_| rng.gen_range(-5.0..1.5)).collect();
    let terminal = rng.gen_bool(0.5);
    let bootstrap = (!terminal).then(|| rng.gen_range(-10.0..10.0));
    let gamma = if rng.gen_bool(0.5) { 0.99 } else { rng.gen_range(0.5..0.999) };
    (rewards, bootstrap, gamma)
}

pub fn return_oracle(rollouts: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let mut worst: f64 = 0.0;
    for _ in 0..rollouts {
        let (rewards, bootstrap, gamma) = random_rollout(&mut rng);
        let got = n_step_returns(&rewards, bootstrap, gamma);
        let want = brute_force_returns(&rewards, bootstrap, gamma);
        if got.len() != want.len() {
            return Check::fail(format!("length {} vs {}", got.len(), want.len()));
        }
        for (g, w) in got.iter().zip(&want) {
            worst = worst.max((g - w).abs());
        }
    }
    Check::new(worst <= 1e-9, format!("{rollouts} rollouts, max abs err {worst:.2e}"))
}

// ---------------------------------------------------------------- geometry

/// A rectangular room of half-extents `(hx, hy)` centred at `centre` and
/// rotated by `angle`, with its walls.
pub struct Room {
    pub map: MapSpec,
    pub centre: Point,
    pub half: (f64, f64),
    pub angle: f64,
}

impl Room {
    pub fn new(width: f64, height: f64, angle: f64) -> Room {
        let (hx, hy) = (width / 2.0, height / 2.0);
        let (c, s) = (angle.cos(), angle.sin());
        let reach = hx * c.abs() + hy * s.abs();
        let reach_y = hx * s.abs() + hy * c.abs();
        let (bw, bh) = (2.0 * reach + 1.0, 2.0 * reach_y + 1.0);
        let centre = Point::new(bw / 2.0, bh / 2.0);
        let corner = |u: f64, v: f64| Point::new(centre.x + u * c - v * s, centre.y + u * s + v * c);
        let corners = [corner(-hx, -hy), corner(hx, -hy), corner(hx, hy), corner(-hx, hy)];
        let mut map = MapSpec::empty_room("oracle", bw, bh);
        for i in 0..4 {
            let (a, b) = (corners[i], corners[(i + 1) % 4]);
            map.segments.push(Segment::new(a.x, a.y, b.x, b.y));
        }
        Room {
            map,
            centre,
            half: (hx, hy),
            angle,
        }
    }

    /// World position of room-local coordinates.
    pub fn world(&self, u: f64, v: f64) -> Point {
        let (c, s) = (self.angle.cos(), self.angle.sin());
        Point::new(self.centre.x + u * c - v * s, self.centre.y + u * s + v * c)
    }

    /// Exact distance from an interior point to the walls along `theta`,
    /// clipped to the sensor range.
    pub fn analytic_range(&self, p: Point, theta: f64) -> f64 {
        let (c, s) = (self.angle.cos(), self.angle.sin());
        let (dx, dy) = (p.x - self.centre.x, p.y - self.centre.y);
        let (u, v) = (dx * c + dy * s, -dx * s + dy * c);
        let local = theta - self.angle;
        let (du, dv) = (local.cos(), local.sin());
        let exit = |pos: f64, dir: f64, half: f64| {
            if dir > 0.0 {
                (half - pos) / dir
            } else if dir < 0.0 {
                (-half - pos) / dir
            } else {
                f64::INFINITY
            }
        };
        exit(u, du, self.half.0).min(exit(v, dv, self.half.1)).min(MAX_RANGE)
    }
}

/// Largest deviation from the analytic ranges over a 10×10 grid of interior
/// positions and 36 headings, plus the largest reading seen.
pub fn room_scan_error(room: &Room) -> (f64, f64) {
    let (hx, hy) = room.half;
    let mut worst: f64 = 0.0;
    let mut longest: f64 = 0.0;
    for i in 0..10 {
        for j in 0..10 {
            let u = -hx + (i as f64 + 0.5) * (2.0 * hx / 10.0);
            let v = -hy + (j as f64 + 0.5) * (2.0 * hy / 10.0);
            let p = room.world(u, v);
            for h in 0..36 {
                let omega = -PI + (h as f64 + 0.5) * (2.0 * PI / 36.0);
                let pose = Pose::new(p.x, p.y, omega);
                let scan = scan(&room.map, &pose);
                for (k, &r) in scan.ranges.iter().enumerate() {
                    let theta = omega - PI + k as f64 * (5.0 * PI / 180.0);
                    worst = worst.max((r - room.analytic_range(p, theta)).abs());
                    longest = longest.max(r);
                }
            }
        }
    }
    (worst, longest)
}

pub fn oracle_rooms() -> Vec<(&'static str, Room)> {
    vec![
        ("axis 3x2", Room::new(3.0, 2.0, 0.0)),
        ("axis 12x9", Room::new(12.0, 9.0, 0.0)),
        ("rotated 4x3", Room::new(4.0, 3.0, FRAC_PI_4)),
        ("rotated 10x10", Room::new(10.0, 10.0, FRAC_PI_4)),
    ]
}

pub fn geometry_oracle() -> Check {
    let mut parts = Vec::new();
    let mut pass = true;
    for (name, room) in oracle_rooms() {
        let (err, longest) = room_scan_error(&room);
        pass &= err <= 1e-6 && longest <= MAX_RANGE;
        parts.push(format!("{name}: err {err:.1e} max {longest:.2}"));
    }
    Check::new(pass, format!("{} ({} beams per pose)", parts.join(", "), BEAM_COUNT))
}

// ---------------------------------------------------------------- shapes

pub fn shape_chain(samples: usize) -> Check {
    let (agent, params) = match Agent::build(&NetworkConfig::default(), None, 9) {
        Ok(built) => built,
        Err(e) => return Check::fail(e.to_string()),
    };
    let net = &agent.net;
    let input = NetInput {
        laser: vec![0.5; 72],
        goal: [0.3, 0.0, 1.0],
    };
    let mut tape = Tape::new(&params);
    let out = match net.forward_input(&mut tape, &input, net.initial_state().as_ref()) {
        Ok(out) => out,
        Err(e) => return Check::fail(e.to_string()),
    };
    let shapes: Vec<Vec<usize>> = out.trunk.iter().map(|&v| tape.value(v).shape().to_vec()).collect();
    let expected: Vec<Vec<usize>> = vec![vec![8, 34], vec![8, 16], vec![128], vec![64], vec![16]];
    if shapes != expected {
        return Check::fail(format!("trunk shapes {shapes:?}, expected {expected:?}"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut state = net.initial_state();
    let mut worst_sum: f64 = 0.0;
    for i in 0..samples {
        let scale = if i % 2 == 0 { 1.0 } else { 50.0 };
        let input = NetInput {
            laser: (0..72).map(|_| rng.gen_range(0.0..1.0) * scale).collect(),
            goal: [rng.gen_range(0.0..2.0) * scale, rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
        };
        let out = match net.infer(&params, &input, state.as_ref()) {
            Ok(out) => out,
            Err(e) => return Check::fail(e.to_string()),
        };
        if out.policy.iter().any(|&p| !(0.0..=1.0).contains(&p)) || !out.value.is_finite() {
            return Check::fail(format!("sample {i}: policy {:?} value {}", out.policy, out.value));
        }
        worst_sum = worst_sum.max((out.policy.iter().sum::<f64>() - 1.0).abs());
        state = if i % 100 == 99 { net.initial_state() } else { out.recurrent_state };
    }
    Check::new(
        worst_sum <= 1e-12,
        format!("trunk {expected:?}; {samples} inputs on the simplex (sum err {worst_sum:.1e})"),
    )
}

// ---------------------------------------------------------------- training

pub fn tiny_config(iterations: u64) -> RunConfig {
    let mut cfg = RunConfig::preset("icm+entropy").expect("preset");
    cfg.trainer.workers = 1;
    cfg.trainer.record_wall_time = false;
    cfg.trainer.total_iterations = iterations;
    cfg.trainer.eval_interval = 1000;
    cfg.trainer.eval_episodes = 5;
    cfg.trainer.eval_max_steps = 100;
    cfg.trainer.learning_rate = 3e-4;
    cfg.episode.max_steps = 200;
    cfg
}

/// Every regular file under `dir`, keyed by relative path.
pub fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).expect("readable dir") {
            let path = entry.expect("dir entry").path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).expect("under dir").to_string_lossy().into_owned();
                out.insert(rel, fs::read(&path).expect("readable file"));
            }
        }
    }
    out
}

pub fn determinism() -> Check {
    let map = Arc::new(bundled::load("empty_room").expect("bundled map"));
    let cfg = tiny_config(3000);
    let mut trees = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().expect("tempdir");
        if let Err(e) = Trainer::new(cfg.clone(), map.clone()).output(dir.path()).run() {
            return Check::fail(e.to_string());
        }
        trees.push(read_tree(dir.path()));
    }
    let (a, b) = (&trees[0], &trees[1]);
    let files: Vec<&String> = a.keys().collect();
    let snapshots = files.iter().filter(|f| f.ends_with(".snap")).count();
    let has_metrics = a.contains_key("metrics.csv");
    let differing: Vec<&String> = a.keys().filter(|k| a.get(*k) != b.get(*k)).collect();
    Check::new(
        a.keys().eq(b.keys()) && differing.is_empty() && has_metrics && snapshots == 4,
        format!(
            "{} files ({} snapshots) compared, {} differ",
            files.len(),
            snapshots,
            differing.len()
        ),
    )
}

pub fn desk_config() -> RunConfig {
    RunConfig::from_toml(DESK_CONFIG).expect("desk preset parses")
}

pub fn desk_learning() -> Check {
    let cfg = desk_config();
    let map = Arc::new(bundled::load("empty_room").expect("bundled map"));
    let start = Instant::now();
    let outcome = match Trainer::new(cfg.clone(), map.clone()).run() {
        Ok(o) => o,
        Err(e) => return Check::fail(e.to_string()),
    };
    let train_secs = start.elapsed().as_secs_f64();
    let suite = build_suite_with(map, SUITE_SEED, 300, 200).expect("suite");
    let result = match run_eval(&outcome.agent.net, outcome.store.params(), &suite, true) {
        Ok(r) => r,
        Err(e) => return Check::fail(e.to_string()),
    };
    let total_secs = start.elapsed().as_secs_f64();
    Check::new(
        result.success_ratio >= 80.0 && outcome.iterations <= 500_000 && total_secs <= 3600.0,
        format!(
            "success {:.1}% over {} episodes after {} steps, steps {:.1}±{:.1}, train {:.0}s total {:.0}s",
            result.success_ratio,
            result.episodes.len(),
            outcome.iterations,
            result.steps_mean,
            result.steps_std,
            train_secs,
            total_secs
        ),
    )
}

pub const GENERALIZATION_MAPS: [&str; 3] = ["map2", "map3", "map4"];

/// Trains briefly on map1, reloads the final snapshot from disk, evaluates it
/// on the other maps and checks the written CSVs.
pub fn generalization(dir: &Path) -> Check {
    let map1 = Arc::new(bundled::load("map1").expect("bundled map"));
    let run_dir = dir.join("train");
    let cfg = tiny_config(2000);
    if let Err(e) = Trainer::new(cfg, map1).output(&run_dir).run() {
        return Check::fail(e.to_string());
    }
    let snapshot = match Snapshot::load(&run_dir.join("final.snap")) {
        Ok(s) => s,
        Err(e) => return Check::fail(e.to_string()),
    };
    let agent = match Agent::from_snapshot(&snapshot) {
        Ok(a) => a,
        Err(e) => return Check::fail(e.to_string()),
    };
    let mut results: Vec<EvalResult> = Vec::new();
    for name in GENERALIZATION_MAPS {
        let map = Arc::new(bundled::load(name).expect("bundled map"));
        let suite = build_suite(map, SUITE_SEED).expect("suite");
        match run_eval(&agent.net, &snapshot.params, &suite, true) {
            Ok(r) => results.push(r),
            Err(e) => return Check::fail(e.to_string()),
        }
    }
    let rows: Vec<SummaryRow> = results.iter().map(|r| SummaryRow::new("icm+entropy", r)).collect();
    let summary_path = dir.join("summary.csv");
    let episodes_path = dir.join("episodes.csv");
    let written = fs::File::create(&summary_path)
        .map_err(|e| e.to_string())
        .and_then(|f| write_summary_csv(f, &rows).map_err(|e| e.to_string()))
        .and_then(|_| fs::File::create(&episodes_path).map_err(|e| e.to_string()))
        .and_then(|f| {
            let tagged: Vec<(&str, &EvalResult)> = results.iter().map(|r| ("icm+entropy", r)).collect();
            write_episodes_csv(f, &tagged).map_err(|e| e.to_string())
        });
    if let Err(e) = written {
        return Check::fail(e);
    }
    match verify_generalization_csvs(&summary_path, &episodes_path) {
        Ok(detail) => Check::new(true, detail),
        Err(e) => Check::fail(e),
    }
}

pub fn verify_generalization_csvs(summary: &Path, episodes: &Path) -> Result<String, String> {
    let mut reader = csv::Reader::from_path(summary).map_err(|e| e.to_string())?;
    let header: Vec<String> = reader.headers().map_err(|e| e.to_string())?.iter().map(String::from).collect();
    for column in ["map", "config", "success_ratio", "steps_mean", "steps_std"] {
        if !header.iter().any(|h| h == column) {
            return Err(format!("summary lacks column `{column}`: {header:?}"));
        }
    }
    let mut maps = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| e.to_string())?;
        if record.iter().take(5).any(str::is_empty) {
            return Err(format!("incomplete summary row {record:?}"));
        }
        let ratio: f64 = record[2].parse().map_err(|_| format!("bad ratio {:?}", &record[2]))?;
        if !(0.0..=100.0).contains(&ratio) {
            return Err(format!("ratio {ratio} out of range"));
        }
        maps.push(record[0].to_string());
    }
    if maps != GENERALIZATION_MAPS {
        return Err(format!("summary maps {maps:?}"));
    }

    let mut reader = csv::Reader::from_path(episodes).map_err(|e| e.to_string())?;
    let header = reader.headers().map_err(|e| e.to_string())?.clone();
    if header.iter().collect::<Vec<_>>() != ["map", "config", "episode", "outcome", "steps", "path_m"] {
        return Err(format!("episodes header {header:?}"));
    }
    let mut per_map: BTreeMap<String, usize> = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| e.to_string())?;
        if record.iter().any(str::is_empty) {
            return Err(format!("incomplete episode row {record:?}"));
        }
        *per_map.entry(record[0].to_string()).or_default() += 1;
    }
    if per_map.len() != 3 || per_map.values().any(|&n| n != 300) {
        return Err(format!("episode rows per map {per_map:?}"));
    }
    Ok(format!("summary rows {maps:?}, 300 episode rows per map"))
}

// ---------------------------------------------------------------- exploration trend

pub const TREND_CONFIGS: [&str; 4] = ["a3c-", "entropy", "icm", "icm+entropy"];
pub const TREND_SEEDS: [u64; 3] = [0, 1, 2];
pub const TREND_BUDGET: u64 = 1_000_000;

/// Mean greedy success per configuration on the corridor map.
pub fn exploration_trend() -> Check {
    let map = Arc::new(bundled::load("corridor").expect("bundled map"));
    let suite = build_suite(map.clone(), SUITE_SEED).expect("suite");
    let start = Instant::now();
    let mut means = BTreeMap::new();
    let mut per_seed = Vec::new();
    for name in TREND_CONFIGS {
        let mut sum = 0.0;
        for seed in TREND_SEEDS {
            let mut cfg = desk_config();
            let preset = curionav::trainer::TrainerConfig::preset(name).expect("preset");
            cfg.trainer.beta = preset.beta;
            cfg.trainer.use_icm = preset.use_icm;
            cfg.trainer.seed = seed;
            cfg.trainer.total_iterations = TREND_BUDGET;
            cfg.trainer.eval_interval = TREND_BUDGET;
            let outcome = match Trainer::new(cfg, map.clone()).run() {
                Ok(o) => o,
                Err(e) => return Check::fail(format!("{name} seed {seed}: {e}")),
            };
            let r = match run_eval(&outcome.agent.net, outcome.store.params(), &suite, true) {
                Ok(r) => r,
                Err(e) => return Check::fail(e.to_string()),
            };
            per_seed.push(format!("{name}/{seed}={:.1}", r.success_ratio));
            sum += r.success_ratio;
        }
        means.insert(name.to_string(), sum / TREND_SEEDS.len() as f64);
    }
    let m = |k: &str| means[k];
    let pass = m("icm+entropy") >= m("entropy") - 5.0 && m("icm") >= m("a3c-") - 5.0;
    Check::new(
        pass,
        format!(
            "means {:?}; runs [{}]; {:.0}s",
            means,
            per_seed.join(" "),
            start.elapsed().as_secs_f64()
        ),
    )
}
