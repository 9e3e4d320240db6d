use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, Context};
use curionav::agent::Agent;
use curionav::config::{ConfigError, RunConfig};
use curionav::eval::{
    build_suite_with, compare_configs, run_eval, write_episodes_csv, write_summary_csv, EvalResult, SummaryRow,
};
use curionav::geometry::{bundled, EpisodeConfig, EpisodeSampler, MapError, MapSpec};
use curionav::manifest::{sha256_hex, MapRecord, RunManifest};
use curionav::plot::{self, MetricsRun, PlotError};
use curionav::snapshot::{Snapshot, SnapshotError};
use curionav::trainer::Trainer;

pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_MISSING_INPUT: u8 = 2;
pub const EXIT_SNAPSHOT: u8 = 3;
pub const EXIT_MALFORMED: u8 = 4;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    fn new(code: u8, error: impl Into<anyhow::Error>) -> Self {
        Failure {
            code,
            error: error.into(),
        }
    }
}

/// Runtime failures (I/O on outputs, training errors) exit with 1.
impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Failure::new(EXIT_FAILURE, error)
    }
}

fn map_failure(e: MapError) -> Failure {
    match e {
        MapError::Io { .. } => Failure::new(EXIT_MISSING_INPUT, e),
        MapError::Parse { .. } | MapError::Invalid(_) => Failure::new(EXIT_MALFORMED, e),
    }
}

fn config_failure(e: ConfigError) -> Failure {
    match e {
        ConfigError::Io { .. } => Failure::new(EXIT_MISSING_INPUT, e),
        ConfigError::Parse(_) | ConfigError::Invalid(_) => Failure::new(EXIT_MALFORMED, e),
    }
}

fn snapshot_failure(e: SnapshotError) -> Failure {
    match e {
        SnapshotError::Io { .. } => Failure::new(EXIT_MISSING_INPUT, e),
        _ => Failure::new(EXIT_SNAPSHOT, e),
    }
}

fn plot_failure(e: PlotError) -> Failure {
    match e {
        PlotError::Io { .. } => Failure::new(EXIT_MISSING_INPUT, e),
        PlotError::Malformed { .. } | PlotError::Empty(_) | PlotError::NoRuns => Failure::new(EXIT_MALFORMED, e),
        PlotError::Render(_) => Failure::new(EXIT_FAILURE, e),
    }
}

pub fn set_threads(threads: usize) -> Result<(), Failure> {
    if threads == 0 {
        return Err(Failure::new(EXIT_MALFORMED, anyhow!("thread count must be >= 1")));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .context("configuring the thread pool")?;
    Ok(())
}

/// A map argument: a file path, or `bundled:<name>`.
pub struct LoadedMap {
    pub spec: MapSpec,
    pub text: String,
    pub source: String,
}

pub fn load_map(arg: &str) -> Result<LoadedMap, Failure> {
    if let Some(name) = arg.strip_prefix("bundled:") {
        let text = bundled::source(name).ok_or_else(|| {
            Failure::new(
                EXIT_MISSING_INPUT,
                anyhow!("no bundled map `{name}` (available: {})", bundled::NAMES.join(", ")),
            )
        })?;
        let spec = MapSpec::parse(name, text).map_err(map_failure)?;
        return Ok(LoadedMap {
            spec,
            text: text.to_string(),
            source: arg.to_string(),
        });
    }
    let path = Path::new(arg);
    let text = fs::read_to_string(path).map_err(|source| {
        map_failure(MapError::Io {
            path: path.display().to_string(),
            source,
        })
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "map".into());
    let spec = MapSpec::parse(&name, &text)
        .map_err(map_failure)
        .map_err(|f| Failure::new(f.code, f.error.context(format!("in {}", path.display()))))?;
    Ok(LoadedMap {
        spec,
        text,
        source: path.display().to_string(),
    })
}

pub struct TrainRequest {
    pub config: Option<PathBuf>,
    pub preset: Option<String>,
    pub map: String,
    pub out: PathBuf,
    pub iterations: Option<u64>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
}

pub fn train(req: TrainRequest) -> Result<(), Failure> {
    let mut config = match (&req.config, &req.preset) {
        (Some(path), _) => RunConfig::load(path).map_err(config_failure)?,
        (None, Some(name)) => RunConfig::preset(name)
            .ok_or_else(|| Failure::new(EXIT_MALFORMED, anyhow!("unknown preset `{name}`")))?,
        (None, None) => RunConfig::preset("icm+entropy").expect("built-in preset"),
    };
    if let Some(n) = req.iterations {
        config.trainer.total_iterations = n;
    }
    if let Some(seed) = req.seed {
        config.trainer.seed = seed;
    }
    if let Some(workers) = req.workers {
        config.trainer.workers = workers;
    }
    config
        .validate()
        .map_err(|e| config_failure(ConfigError::Invalid(e)))?;
    let map = load_map(&req.map)?;

    let out = &req.out;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join("config.toml"), config.to_toml()).context("writing config.toml")?;
    fs::write(out.join("map.map"), &map.text).context("writing map.map")?;
    let manifest_path = out.join("manifest.json");
    let mut manifest = RunManifest::start(
        &config,
        MapRecord {
            name: map.spec.name.clone(),
            source: map.source.clone(),
            file: "map.map".into(),
            sha256: sha256_hex(map.text.as_bytes()),
        },
    );
    manifest.save(&manifest_path).context("writing manifest")?;

    let trainer = Trainer::new(config.clone(), Arc::new(map.spec)).output(out);
    match trainer.run() {
        Ok(outcome) => {
            let artifacts = list_artifacts(out)?;
            manifest.complete(outcome.iterations, artifacts);
            manifest.save(&manifest_path).context("finalizing manifest")?;
            if let Some(last) = outcome.metrics.last() {
                println!(
                    "trained {} steps; last eval at {}: success {:.1}%, avg steps {:.1}",
                    outcome.iterations, last.iteration, last.success_ratio, last.avg_steps
                );
            } else {
                println!("trained {} steps; no evaluation interval reached", outcome.iterations);
            }
            println!("run directory: {}", out.display());
            Ok(())
        }
        Err(e) => {
            manifest.fail(&e.to_string());
            manifest.save(&manifest_path).context("finalizing manifest")?;
            Err(anyhow::Error::new(e).context("training failed").into())
        }
    }
}

/// Files in the run directory other than the manifest, sorted.
fn list_artifacts(dir: &Path) -> Result<Vec<String>, Failure> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).with_context(|| format!("listing {}", d.display()))? {
            let path = entry.context("listing run directory")?.path();
            if path.is_dir() {
                stack.push(path);
            } else if let Ok(rel) = path.strip_prefix(dir) {
                let rel = rel.to_string_lossy().replace('\\', "/");
                if rel != "manifest.json" {
                    out.push(rel);
                }
            }
        }
    }
    out.sort();
    Ok(out)
}

pub struct EvalRequest {
    pub snapshot: PathBuf,
    pub maps: Vec<String>,
    pub seed: u64,
    pub out: PathBuf,
    pub label: String,
    pub greedy: bool,
    pub episodes: usize,
    pub max_steps: usize,
}

pub fn eval(req: EvalRequest) -> Result<(), Failure> {
    if req.episodes == 0 || req.max_steps == 0 {
        return Err(Failure::new(EXIT_MALFORMED, anyhow!("--episodes and --max-steps must be >= 1")));
    }
    let snapshot = Snapshot::load(&req.snapshot).map_err(snapshot_failure)?;
    let agent = Agent::from_snapshot(&snapshot)
        .map_err(snapshot_failure)
        .map_err(|f| Failure::new(f.code, f.error.context(format!("in {}", req.snapshot.display()))))?;
    let maps = req.maps.iter().map(|m| load_map(m)).collect::<Result<Vec<_>, _>>()?;

    let mut results: Vec<EvalResult> = Vec::new();
    for map in maps {
        let suite = build_suite_with(Arc::new(map.spec), req.seed, req.episodes, req.max_steps)
            .map_err(|e| Failure::new(EXIT_MALFORMED, e))?;
        let result = run_eval(&agent.net, &snapshot.params, &suite, req.greedy).context("evaluation failed")?;
        results.push(result);
    }

    fs::create_dir_all(&req.out).with_context(|| format!("creating {}", req.out.display()))?;
    let rows: Vec<SummaryRow> = results.iter().map(|r| SummaryRow::new(&req.label, r)).collect();
    let summary = fs::File::create(req.out.join("summary.csv")).context("creating summary.csv")?;
    write_summary_csv(summary, &rows).context("writing summary.csv")?;
    let episodes = fs::File::create(req.out.join("episodes.csv")).context("creating episodes.csv")?;
    let tagged: Vec<(&str, &EvalResult)> = results.iter().map(|r| (req.label.as_str(), r)).collect();
    write_episodes_csv(episodes, &tagged).context("writing episodes.csv")?;

    for r in &results {
        let single = BTreeMap::from([(req.label.clone(), r.clone())]);
        print!("{}", compare_configs(&single).context("formatting report")?.to_text());
    }
    Ok(())
}

/// Splits `LABEL=PATH`; a bare path takes its directory's name as label.
fn plot_source(arg: &str) -> (String, PathBuf) {
    if let Some((label, path)) = arg.split_once('=') {
        if !label.is_empty() && !Path::new(arg).exists() {
            return (label.to_string(), PathBuf::from(path));
        }
    }
    let path = PathBuf::from(arg);
    let label = path
        .parent()
        .and_then(|p| p.file_name())
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    (label, path)
}

pub fn plot(csvs: &[String], out: &Path) -> Result<(), Failure> {
    let mut runs = Vec::new();
    for arg in csvs {
        let (label, path) = plot_source(arg);
        let rows = plot::read_metrics(&path).map_err(plot_failure)?;
        runs.push(MetricsRun { label, rows });
    }
    let bands = plot::bands(&runs);
    plot::render_svg(&bands, out).map_err(plot_failure)?;
    for b in &bands {
        println!("{}: {} run(s), {} points", b.label, b.runs, b.reward.len());
    }
    println!("wrote {}", out.display());
    Ok(())
}

pub fn validate_maps(maps: &[String]) -> Result<(), Failure> {
    let mut worst: Option<Failure> = None;
    for arg in maps {
        match load_map(arg).and_then(|m| check_sampling(&m.spec).map(|free| (m, free))) {
            Ok((m, components)) => println!(
                "ok    {arg}: {} x {} m, {} walls, {} free region(s)",
                m.spec.width,
                m.spec.height,
                m.spec.segments.len(),
                components
            ),
            Err(f) => {
                println!("FAIL  {arg}: {:#}", f.error);
                if worst.as_ref().is_none_or(|w| f.code > w.code) {
                    worst = Some(f);
                }
            }
        }
    }
    match worst {
        Some(f) => Err(Failure::new(f.code, anyhow!("map validation failed"))),
        None => Ok(()),
    }
}

/// Checks that connected start/goal pairs exist; returns the number of free
/// regions.
fn check_sampling(map: &MapSpec) -> Result<usize, Failure> {
    let sampler = EpisodeSampler::new(Arc::new(map.clone()), &EpisodeConfig::evaluation());
    build_suite_with(Arc::new(map.clone()), 0, 1, 1).map_err(|e| Failure::new(EXIT_MALFORMED, e))?;
    Ok(sampler.grid().component_count())
}

pub fn render_map(arg: &str, columns: usize) -> Result<(), Failure> {
    let map = load_map(arg)?;
    print!("{}", map.spec.render_ascii(columns.max(8)));
    Ok(())
}
