//! Experiment orchestration: runs an architecture × task × seed grid with
//! per-run persistence and resume, aggregates learning curves into normalized
//! AUC / final-performance tables, and records greedy Q-decomposition traces.
//!
//! Every run leaves three files under `<out_dir>/<task>/`:
//!
//! * `arch{A}_seed{S}.curve.csv` — per-episode training reward,
//! * `arch{A}_seed{S}.vdnc` — the trained network checkpoint,
//! * `arch{A}_seed{S}.meta` — fingerprint, counters and evaluation probes;
//!   written last, so its presence marks the run complete.
//!
//! Aggregate outputs (`curves_<task>.csv`, `summary.csv`) are always rebuilt
//! from the persisted per-run files — never from in-memory state — so a
//! resumed experiment reproduces an uninterrupted one byte for byte.

mod csvio;
mod metrics;

pub use csvio::{
    atomic_write, curves_csv_string, load_curves_csv, load_curves_csv_text, load_trace_csv,
    load_trace_csv_text, summary_csv_string, trace_csv_string, write_curves_csv,
    write_summary_csv, write_trace_csv, CurveRow, CURVES_HEADER, SUMMARY_HEADER, TRACE_HEADER,
};
pub use metrics::{
    build_metrics, mean_and_ci90, trapezoid_auc, ArchSummary, MetricsTable, TaskArchMetrics,
};

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use crate::agents::{encode_obs_row, greedy_actions, AgentSpec, JointHidden, PolicyNetwork, QOut, StepInput};
use crate::checkpoint;
use crate::config::{parse_document, section, write_document, Document, Entry};
use crate::error::{Result, VdnError};
use crate::gridworld::{load_map, EnvState, EventKind, GridMap, Mode, TASK_VARIANTS};
use crate::neuralcore::{Scalar, Tensor};
use crate::trainer::{run_single, RunResult, TrainConfig};
use crate::util::{fnv1a64, format_sig9};

/// One completed run, as loaded back from its persisted files.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub task: String,
    pub architecture: u8,
    pub seed: u64,
    /// Training reward per episode, at the persisted 9-digit precision.
    pub rewards: Vec<f64>,
    pub env_steps: u64,
    pub train_steps: u64,
    pub wall_secs: f64,
}

/// Grid selection and trainer template for one experiment.
///
/// Parsed from a config document with two sections. `[experiment]` keys:
/// `architectures` (`all` or a comma list of 1–9), `tasks` (`all` or task
/// names), `seeds` (a bare integer N means seeds 0..N; a comma list — use a
/// trailing comma for a single explicit seed — means those values),
/// `episodes`, `final_window`, `out_dir`, `maps_dir`, `workers`. `[trainer]`
/// keys mirror [`TrainConfig`] fields plus `epsilon_decay_fraction`, which
/// sizes the ε decay as a fraction of the expected total env steps and is
/// mutually exclusive with `epsilon_decay_steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub architectures: Vec<u8>,
    pub tasks: Vec<String>,
    pub seeds: Vec<u64>,
    /// Training episodes per run (overrides `trainer.total_episodes`).
    pub episodes: usize,
    pub trainer: TrainConfig,
    /// ε decay horizon as a fraction of `episodes × episode_limit` steps.
    /// `None` keeps `trainer.epsilon_decay_steps` as-is.
    pub epsilon_decay_fraction: Option<f64>,
    /// Final-performance window; `None` → `min(5000, episodes)`.
    pub final_window: Option<usize>,
    pub out_dir: PathBuf,
    pub maps_dir: PathBuf,
    pub workers: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            architectures: (1..=9).collect(),
            tasks: TASK_VARIANTS.iter().map(|t| t.to_string()).collect(),
            seeds: (0..10).collect(),
            episodes: 50_000,
            trainer: TrainConfig::default(),
            epsilon_decay_fraction: Some(0.1),
            final_window: None,
            out_dir: PathBuf::from("runs"),
            maps_dir: PathBuf::from("maps"),
            workers: 1,
        }
    }
}

fn effective_limit(t: &TrainConfig) -> u32 {
    if t.episode_limit > 0 {
        t.episode_limit
    } else {
        Mode::Train.episode_limit()
    }
}

impl ExperimentConfig {
    pub fn from_document(doc: &Document) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut saw_steps: Option<&Entry> = None;
        let mut saw_fraction: Option<&Entry> = None;
        for sec in &doc.sections {
            match sec.name.as_str() {
                "experiment" => {
                    for e in &sec.entries {
                        match e.key.as_str() {
                            "architectures" => cfg.architectures = parse_architectures(e)?,
                            "tasks" => cfg.tasks = parse_tasks(e)?,
                            "seeds" => cfg.seeds = parse_seeds(e)?,
                            "episodes" => cfg.episodes = e.as_usize()?,
                            "final_window" => cfg.final_window = Some(e.as_usize()?),
                            "out_dir" => cfg.out_dir = PathBuf::from(e.as_str()),
                            "maps_dir" => cfg.maps_dir = PathBuf::from(e.as_str()),
                            "workers" => cfg.workers = e.as_usize()?,
                            _ => return Err(e.reject("unknown [experiment] key")),
                        }
                    }
                }
                "trainer" => {
                    let t = &mut cfg.trainer;
                    for e in &sec.entries {
                        match e.key.as_str() {
                            "gamma" => t.gamma = e.as_f64()?,
                            "lambda" => t.lambda = e.as_f64()?,
                            "lr" => t.lr = e.as_f64()?,
                            "epsilon_start" => t.epsilon_start = e.as_f64()?,
                            "epsilon_end" => t.epsilon_end = e.as_f64()?,
                            "epsilon_decay_steps" => {
                                t.epsilon_decay_steps = e.as_u64()?;
                                cfg.epsilon_decay_fraction = None;
                                saw_steps = Some(e);
                            }
                            "epsilon_decay_fraction" => {
                                cfg.epsilon_decay_fraction = Some(e.as_f64()?);
                                saw_fraction = Some(e);
                            }
                            "buffer_capacity" => t.buffer_capacity = e.as_usize()?,
                            "batch_size" => t.batch_size = e.as_usize()?,
                            "target_sync_period" => t.target_sync_period = e.as_u64()?,
                            "eval_period" => t.eval_period = e.as_usize()?,
                            "warmup_segments" => t.warmup_segments = e.as_usize()?,
                            "episode_limit" => t.episode_limit = e.as_u32()?,
                            _ => return Err(e.reject("unknown [trainer] key")),
                        }
                    }
                }
                _ => {
                    return Err(VdnError::parse(
                        sec.line,
                        1,
                        format!("unknown section [{}]", sec.name),
                    ))
                }
            }
        }
        if let (Some(_), Some(frac)) = (saw_steps, saw_fraction) {
            return Err(frac.reject("conflicts with epsilon_decay_steps; give one or the other"));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(VdnError::Config(msg));
        if self.architectures.is_empty() {
            return bad("no architectures selected".into());
        }
        for &a in &self.architectures {
            if !(1..=9).contains(&a) {
                return bad(format!("architecture {a} out of range 1-9"));
            }
        }
        if self.tasks.is_empty() {
            return bad("no tasks selected".into());
        }
        for t in &self.tasks {
            if !TASK_VARIANTS.contains(&t.as_str()) {
                return bad(format!("unknown task {t:?}"));
            }
        }
        if self.seeds.is_empty() {
            return bad("no seeds selected".into());
        }
        for (name, dup) in [
            ("architectures", has_dup(&self.architectures)),
            ("tasks", has_dup(&self.tasks)),
            ("seeds", has_dup(&self.seeds)),
        ] {
            if dup {
                return bad(format!("duplicate entries in {name}"));
            }
        }
        if self.episodes == 0 {
            return bad("episodes must be positive".into());
        }
        if self.workers == 0 {
            return bad("workers must be positive".into());
        }
        if let Some(w) = self.final_window {
            if w == 0 || w > self.episodes {
                return bad(format!(
                    "final_window must be in 1..={}, got {w}",
                    self.episodes
                ));
            }
        }
        if let Some(f) = self.epsilon_decay_fraction {
            if !(f.is_finite() && f > 0.0 && f <= 1.0) {
                return bad(format!("epsilon_decay_fraction must be in (0, 1], got {f}"));
            }
        }
        self.resolved_trainer().validate()
    }

    /// The trainer configuration actually used per run: episode count from
    /// the experiment, ε decay resolved from the fraction when one is set.
    pub fn resolved_trainer(&self) -> TrainConfig {
        let mut t = self.trainer.clone();
        t.total_episodes = self.episodes;
        if let Some(f) = self.epsilon_decay_fraction {
            let steps = f * self.episodes as f64 * effective_limit(&t) as f64;
            t.epsilon_decay_steps = steps.round() as u64;
        }
        t
    }

    pub fn effective_final_window(&self) -> usize {
        self.final_window.unwrap_or_else(|| self.episodes.min(5000))
    }

    /// Serializes the resolved configuration (for `experiment.meta`).
    pub fn to_document(&self) -> Document {
        let t = self.resolved_trainer();
        let join_u8 = |v: &[u8]| v.iter().map(u8::to_string).collect::<Vec<_>>().join(",");
        let join_u64 = |v: &[u64]| v.iter().map(u64::to_string).collect::<Vec<_>>().join(",");
        Document {
            sections: vec![
                section(
                    "experiment",
                    &[
                        ("architectures", join_u8(&self.architectures)),
                        ("tasks", self.tasks.join(",")),
                        ("seeds", join_u64(&self.seeds)),
                        ("episodes", self.episodes.to_string()),
                        ("final_window", self.effective_final_window().to_string()),
                        ("out_dir", self.out_dir.display().to_string()),
                        ("maps_dir", self.maps_dir.display().to_string()),
                        ("workers", self.workers.to_string()),
                    ],
                ),
                section(
                    "trainer",
                    &[
                        ("gamma", t.gamma.to_string()),
                        ("lambda", t.lambda.to_string()),
                        ("lr", t.lr.to_string()),
                        ("epsilon_start", t.epsilon_start.to_string()),
                        ("epsilon_end", t.epsilon_end.to_string()),
                        ("epsilon_decay_steps", t.epsilon_decay_steps.to_string()),
                        ("buffer_capacity", t.buffer_capacity.to_string()),
                        ("batch_size", t.batch_size.to_string()),
                        ("target_sync_period", t.target_sync_period.to_string()),
                        ("eval_period", t.eval_period.to_string()),
                        ("warmup_segments", t.warmup_segments.to_string()),
                        ("episode_limit", effective_limit(&t).to_string()),
                    ],
                ),
            ],
        }
    }
}

fn has_dup<T: Ord + Clone>(v: &[T]) -> bool {
    let mut sorted = v.to_vec();
    sorted.sort();
    sorted.windows(2).any(|w| w[0] == w[1])
}

fn parse_architectures(e: &Entry) -> Result<Vec<u8>> {
    if e.as_str() == "all" {
        return Ok((1..=9).collect());
    }
    let mut out = Vec::new();
    for part in e.as_list() {
        let a: u8 = part
            .parse()
            .map_err(|_| e.reject(format!("bad architecture {part:?}")))?;
        if !(1..=9).contains(&a) {
            return Err(e.reject(format!("architecture {a} out of range 1-9")));
        }
        out.push(a);
    }
    out.sort_unstable();
    Ok(out)
}

fn parse_tasks(e: &Entry) -> Result<Vec<String>> {
    if e.as_str() == "all" {
        return Ok(TASK_VARIANTS.iter().map(|t| t.to_string()).collect());
    }
    let mut out = Vec::new();
    for part in e.as_list() {
        if !TASK_VARIANTS.contains(&part) {
            return Err(e.reject(format!("unknown task {part:?}")));
        }
        out.push(part.to_string());
    }
    // Canonical task order regardless of how the list was written.
    out.sort_by_key(|t| TASK_VARIANTS.iter().position(|v| v == t));
    Ok(out)
}

fn parse_seeds(e: &Entry) -> Result<Vec<u64>> {
    let bad = |part: &str| e.reject(format!("bad seed {part:?}"));
    if !e.as_str().contains(',') {
        let n: u64 = e.as_str().trim().parse().map_err(|_| bad(e.as_str()))?;
        if n == 0 {
            return Err(e.reject("seed count must be positive"));
        }
        return Ok((0..n).collect());
    }
    let mut out = Vec::new();
    for part in e.as_list() {
        out.push(part.parse().map_err(|_| bad(part))?);
    }
    out.sort_unstable();
    Ok(out)
}

// Command-line flags share the config keys' grammar; only the error shape
// differs (no line/column to point at).
fn flag_entry(key: &str, value: &str) -> Entry {
    Entry { key: key.into(), value: value.into(), line: 0, col: 0 }
}

fn flag_usage(e: VdnError) -> VdnError {
    match e {
        // `reject` already prefixes the entry key, which is the flag here.
        VdnError::Parse { msg, .. } => VdnError::Usage(msg),
        other => other,
    }
}

/// Parses an `--arch` flag value: `3`, `1,3,9`, or `all`.
pub fn architectures_from_flag(value: &str) -> Result<Vec<u8>> {
    parse_architectures(&flag_entry("--arch", value)).map_err(flag_usage)
}

/// Parses a `--task` flag value: a variant name, a comma list, or `all`.
pub fn tasks_from_flag(value: &str) -> Result<Vec<String>> {
    parse_tasks(&flag_entry("--task", value)).map_err(flag_usage)
}

/// Parses a `--seeds` flag value: a count, or an explicit comma list.
pub fn seeds_from_flag(value: &str) -> Result<Vec<u64>> {
    parse_seeds(&flag_entry("--seeds", value)).map_err(flag_usage)
}

/// One cell of the experiment grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunKey {
    pub task: String,
    pub architecture: u8,
    pub seed: u64,
}

/// The full schedule: tasks outermost (canonical order), then architectures
/// ascending, then seeds ascending — the order rows appear in the outputs.
pub fn plan(cfg: &ExperimentConfig) -> Vec<RunKey> {
    let mut out = Vec::with_capacity(cfg.tasks.len() * cfg.architectures.len() * cfg.seeds.len());
    for task in &cfg.tasks {
        for &architecture in &cfg.architectures {
            for &seed in &cfg.seeds {
                out.push(RunKey { task: task.clone(), architecture, seed });
            }
        }
    }
    out
}

fn run_paths(out_dir: &Path, key: &RunKey) -> (PathBuf, PathBuf, PathBuf) {
    let base = out_dir
        .join(&key.task)
        .join(format!("arch{}_seed{}", key.architecture, key.seed));
    (
        base.with_extension("curve.csv"),
        base.with_extension("vdnc"),
        base.with_extension("meta"),
    )
}

/// Fingerprint of everything that determines a run's outputs. Stored in the
/// run's meta file; resuming over a directory whose fingerprint differs is
/// refused rather than silently mixing configurations.
fn fingerprint(key: &RunKey, map_hash: u64, t: &TrainConfig) -> String {
    let s = format!(
        "v{}|task={}|map={map_hash:016x}|arch={}|seed={}|episodes={}|limit={}|gamma={}|lambda={}\
         |lr={}|eps={},{},{}|buffer={}|batch={}|sync={}|warmup={}|eval={}",
        env!("CARGO_PKG_VERSION"),
        key.task,
        key.architecture,
        key.seed,
        t.total_episodes,
        effective_limit(t),
        t.gamma,
        t.lambda,
        t.lr,
        t.epsilon_start,
        t.epsilon_end,
        t.epsilon_decay_steps,
        t.buffer_capacity,
        t.batch_size,
        t.target_sync_period,
        t.warmup_segments,
        t.eval_period,
    );
    format!("{:016x}", fnv1a64(s.as_bytes()))
}

/// Runs one grid cell, or skips it when its completed outputs are already on
/// disk with a matching fingerprint. Returns whether the run was skipped.
fn run_one(
    out_dir: &Path,
    trainer: &TrainConfig,
    key: &RunKey,
    map: &Arc<GridMap>,
    map_hash: u64,
    progress: &(dyn Fn(&str) + Sync),
) -> Result<bool> {
    let (curve_path, ckpt_path, meta_path) = run_paths(out_dir, key);
    let fp = fingerprint(key, map_hash, trainer);
    let label = format!("{} arch{} seed{}", key.task, key.architecture, key.seed);
    if meta_path.exists() {
        let text = std::fs::read_to_string(&meta_path).map_err(|e| VdnError::io(&meta_path, e))?;
        let doc = parse_document(&text)?;
        let stored = doc
            .get("run", "fingerprint")
            .ok_or_else(|| VdnError::Config(format!("{}: missing fingerprint", meta_path.display())))?
            .as_str()
            .to_string();
        if stored != fp {
            return Err(VdnError::Config(format!(
                "{label}: existing outputs in {} came from a different configuration \
                 (fingerprint {stored} vs {fp}); delete them or pick another out_dir",
                out_dir.display(),
            )));
        }
        if curve_path.exists() && ckpt_path.exists() {
            progress(&format!("{label}: complete, resumed"));
            return Ok(true);
        }
        // Meta without the data files: a partially deleted run; redo it.
    }

    let spec = AgentSpec::preset(key.architecture)?;
    let started = Instant::now();
    let every = (trainer.total_episodes / 4).max(1);
    let (net, result): (PolicyNetwork<f32>, RunResult) =
        run_single(spec, map.clone(), key.seed, trainer, |ep, reward| {
            if (ep + 1) % every == 0 {
                progress(&format!(
                    "{label}: episode {}/{} reward {reward:.2}",
                    ep + 1,
                    trainer.total_episodes
                ));
            }
        })?;
    let wall_secs = started.elapsed().as_secs_f64();

    let record = RunRecord {
        task: key.task.clone(),
        architecture: key.architecture,
        seed: key.seed,
        rewards: result.episode_rewards.clone(),
        env_steps: result.env_steps,
        train_steps: result.train_steps,
        wall_secs,
    };
    csvio::write_curves_csv(&curve_path, &[&record])?;
    atomic_write(&ckpt_path, &checkpoint::encode(&net))?;

    let mut doc = Document {
        sections: vec![section(
            "run",
            &[
                ("fingerprint", fp),
                ("task", key.task.clone()),
                ("architecture", key.architecture.to_string()),
                ("seed", key.seed.to_string()),
                ("episodes", trainer.total_episodes.to_string()),
                ("env_steps", result.env_steps.to_string()),
                ("train_steps", result.train_steps.to_string()),
                ("target_syncs", result.target_syncs.to_string()),
                ("final_epsilon", format_sig9(result.final_epsilon)),
                ("wall_secs", format_sig9(wall_secs)),
            ],
        )],
    };
    if !result.eval_points.is_empty() {
        let pairs: Vec<(String, String)> = result
            .eval_points
            .iter()
            .map(|&(ep, r)| (format!("e{ep}"), format_sig9(r)))
            .collect();
        let borrowed: Vec<(&str, String)> =
            pairs.iter().map(|(k, v)| (k.as_str(), v.clone())).collect();
        doc.sections.push(section("eval", &borrowed));
    }
    atomic_write(&meta_path, write_document(&doc).as_bytes())?;
    progress(&format!("{label}: done in {wall_secs:.1}s"));
    Ok(false)
}

/// Loads a completed run back from its persisted files. Reward precision is
/// whatever the curve file holds, so resumed and fresh runs aggregate
/// identically.
fn load_record(out_dir: &Path, key: &RunKey, episodes: usize) -> Result<RunRecord> {
    let (curve_path, _, meta_path) = run_paths(out_dir, key);
    let rows = csvio::load_curves_csv(&curve_path)?;
    if rows.len() != episodes {
        return Err(VdnError::Config(format!(
            "{}: expected {episodes} episodes, found {}",
            curve_path.display(),
            rows.len()
        )));
    }
    let mut rewards = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        if row.task != key.task
            || row.architecture != key.architecture
            || row.seed != key.seed
            || row.episode != i + 1
        {
            return Err(VdnError::Config(format!(
                "{}: row {} does not belong to this run",
                curve_path.display(),
                i + 2,
            )));
        }
        rewards.push(row.reward);
    }
    let text = std::fs::read_to_string(&meta_path).map_err(|e| VdnError::io(&meta_path, e))?;
    let doc = parse_document(&text)?;
    let entry = |k: &str| {
        doc.get("run", k)
            .ok_or_else(|| VdnError::Config(format!("{}: missing key {k}", meta_path.display())))
    };
    Ok(RunRecord {
        task: key.task.clone(),
        architecture: key.architecture,
        seed: key.seed,
        rewards,
        env_steps: entry("env_steps")?.as_u64()?,
        train_steps: entry("train_steps")?.as_u64()?,
        wall_secs: entry("wall_secs")?.as_f64()?,
    })
}

/// Runs (or resumes) the whole grid, then rebuilds every aggregate output
/// from the persisted per-run files: `curves_<task>.csv` per task,
/// `summary.csv`, and an `experiment.meta` echo of the configuration.
/// `progress` receives one-line status messages (possibly from worker
/// threads).
pub fn run_experiment(
    cfg: &ExperimentConfig,
    progress: &(dyn Fn(&str) + Sync),
) -> Result<(Vec<RunRecord>, MetricsTable)> {
    cfg.validate()?;
    let trainer = cfg.resolved_trainer();

    let mut maps: BTreeMap<String, (Arc<GridMap>, u64)> = BTreeMap::new();
    for task in &cfg.tasks {
        let path = cfg.maps_dir.join(format!("{task}.map"));
        let text = std::fs::read_to_string(&path).map_err(|e| VdnError::io(&path, e))?;
        let map = load_map(&text)?;
        maps.insert(task.clone(), (Arc::new(map), fnv1a64(text.as_bytes())));
        std::fs::create_dir_all(cfg.out_dir.join(task))
            .map_err(|e| VdnError::io(cfg.out_dir.join(task), e))?;
    }

    let jobs = plan(cfg);
    let next = AtomicUsize::new(0);
    let failure: Mutex<Option<VdnError>> = Mutex::new(None);
    std::thread::scope(|scope| {
        for _ in 0..cfg.workers.min(jobs.len()) {
            scope.spawn(|| loop {
                if failure.lock().unwrap().is_some() {
                    return;
                }
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= jobs.len() {
                    return;
                }
                let key = &jobs[i];
                let (map, map_hash) = &maps[&key.task];
                if let Err(e) = run_one(&cfg.out_dir, &trainer, key, map, *map_hash, progress) {
                    // Training faults name the run they came from; other
                    // variants already carry a path or position.
                    let e = match e {
                        VdnError::Training(msg) => VdnError::Training(format!(
                            "{} arch{} seed{}: {msg}",
                            key.task, key.architecture, key.seed
                        )),
                        other => other,
                    };
                    let mut slot = failure.lock().unwrap();
                    if slot.is_none() {
                        *slot = Some(e);
                    }
                }
            });
        }
    });
    if let Some(e) = failure.into_inner().expect("no poisoned lock") {
        return Err(e);
    }

    let mut records = Vec::with_capacity(jobs.len());
    for key in &jobs {
        records.push(load_record(&cfg.out_dir, key, cfg.episodes)?);
    }

    for task in &cfg.tasks {
        let task_records: Vec<&RunRecord> = records.iter().filter(|r| &r.task == task).collect();
        csvio::write_curves_csv(&cfg.out_dir.join(format!("curves_{task}.csv")), &task_records)?;
    }
    let table = build_metrics(&records, cfg.effective_final_window())?;
    csvio::write_summary_csv(&cfg.out_dir.join("summary.csv"), &table)?;

    let mut doc = cfg.to_document();
    let map_pairs: Vec<(&str, String)> = maps
        .iter()
        .map(|(task, (_, hash))| (task.as_str(), format!("{hash:016x}")))
        .collect();
    doc.sections.push(section("maps", &map_pairs));
    atomic_write(&cfg.out_dir.join("experiment.meta"), write_document(&doc).as_bytes())?;

    Ok((records, table))
}

/// One step of a greedy trace. Multi-event steps repeat the step number and
/// Q values with one row per reward event, `reward` carrying that event's
/// amount; event-less steps produce a single row with the (zero) team reward.
#[derive(Debug, Clone, PartialEq)]
pub struct QTraceRow {
    /// 1-based environment step.
    pub step: u32,
    pub q1: f32,
    pub q2: f32,
    /// `q1 + q2`, summed in f32 — the additive joint value of the taken
    /// action, exact in the exported 9-digit decimals.
    pub q_total: f32,
    pub reward: f32,
    pub event: Option<(usize, EventKind)>,
}

#[derive(Debug, Clone)]
pub struct QTrace {
    pub task: String,
    pub rows: Vec<QTraceRow>,
}

/// Plays one greedy test episode and records each step's per-agent value
/// components. Only meaningful for architectures whose joint value is an
/// additive decomposition (presets 2–8); independent learners and the
/// joint-head baseline are rejected.
pub fn q_trace<S: Scalar>(
    net: &PolicyNetwork<S>,
    task: &str,
    map: Arc<GridMap>,
    seed: u64,
) -> Result<QTrace> {
    let spec = net.spec;
    if !spec.value_decomposition {
        let what = match spec.preset_number() {
            Some(n) => format!("architecture {n}"),
            None => format!("flag set {}", spec.flag_string()),
        };
        return Err(VdnError::Usage(format!(
            "Q-decomposition tracing needs additive per-agent value components \
             (architectures 2-8); {what} has none"
        )));
    }
    let w = spec.input_width();
    let (mut env, mut obs) = EnvState::reset(map, seed, Mode::Test);
    let mut hidden = JointHidden::zeros(spec, 1);
    let mut out = Vec::new();
    let mut step = 0u32;
    while !env.done {
        step += 1;
        let mut rows = [Tensor::zeros(&[1, w]), Tensor::zeros(&[1, w])];
        for (slot, row) in rows.iter_mut().enumerate() {
            encode_obs_row(spec, &obs[slot], slot, row.data_mut());
        }
        let (q, _) = net.forward(StepInput { rows, batch: 1 }, &mut hidden, false);
        let acts = greedy_actions(&q, 0);
        let QOut::PerAgent(per) = &q else {
            unreachable!("joint heads were rejected above");
        };
        let component = |head: usize, col: usize| -> f32 {
            per[head].data()[col].to_f64().expect("finite q") as f32
        };
        let q1 = component(0, acts[0].index());
        let q2 = component(1, acts[1].index());
        let q_total = q1 + q2;
        let res = env.step(acts)?;
        if res.events.is_empty() {
            out.push(QTraceRow { step, q1, q2, q_total, reward: res.team_reward, event: None });
        } else {
            for ev in &res.events {
                out.push(QTraceRow {
                    step,
                    q1,
                    q2,
                    q_total,
                    reward: ev.amount,
                    event: Some((ev.agent, ev.kind)),
                });
            }
        }
        obs = res.observations;
    }
    Ok(QTrace { task: task.to_string(), rows: out })
}
