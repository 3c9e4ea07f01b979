//! `vdn` — command-line front end for the two-agent value-decomposition
//! benchmark: train the architecture grid, score and trace saved
//! checkpoints, inspect task maps, and run the self-verification suites.
//!
//! Exit codes: 0 success, 1 runtime or verification failure, 2 usage or
//! configuration error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use rand::Rng;

use vdn::config::{parse_document, section, write_document, Document};
use vdn::error::{Result, VdnError};
use vdn::gridworld::{load_map, GridMap, TASK_VARIANTS};
use vdn::harness::{
    architectures_from_flag, atomic_write, q_trace, run_experiment, seeds_from_flag,
    tasks_from_flag, write_trace_csv, ExperimentConfig,
};
use vdn::trainer::eval_episode;
use vdn::util::{fnv1a64, seeded_rng};
use vdn::verify::run_suites;
use vdn::{checkpoint, OBS_LEN};

#[derive(Parser)]
#[command(
    name = "vdn",
    version,
    about = "Two-agent value-decomposition benchmark",
    long_about = "Trains additive value-decomposition agents (and their \
                  independent/centralised baselines) on seven cooperative \
                  grid-world tasks, evaluates and traces saved checkpoints, \
                  and verifies the numerical core against independent oracles."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the configured (architecture × task × seed) grid
    Train(TrainArgs),
    /// Play greedy test episodes from a saved checkpoint
    Eval(EvalArgs),
    /// Record the per-agent value decomposition of one greedy episode
    Trace(TraceArgs),
    /// Render task maps and validate their legends
    Maps(MapsArgs),
    /// Run the self-verification suites
    Verify(VerifyArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Experiment configuration file (sectioned key = value text)
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Architectures: a preset number, a comma list, or "all"
    #[arg(long, value_name = "1..9|all")]
    arch: Option<String>,
    /// Tasks: variant names, a comma list, or "all"
    #[arg(long, value_name = "NAME|all")]
    task: Option<String>,
    /// Seeds: a count N (seeds 0..N) or an explicit comma list
    #[arg(long, value_name = "N|LIST")]
    seeds: Option<String>,
    /// Training episodes per run
    #[arg(long, value_name = "N")]
    episodes: Option<usize>,
    /// Parallel training workers
    #[arg(long, value_name = "N")]
    workers: Option<usize>,
    /// Output directory [default: $VDN_OUT_DIR, else the config's out_dir]
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Directory holding the task map files
    #[arg(long, value_name = "DIR")]
    maps_dir: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Saved network checkpoint (.vdnc)
    checkpoint: PathBuf,
    /// Task variant to play
    #[arg(long, value_name = "NAME")]
    task: String,
    /// Number of greedy test episodes
    #[arg(long, value_name = "N", default_value_t = 10)]
    episodes: usize,
    /// Seed for the evaluation episode stream
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory holding the task map files
    #[arg(long, value_name = "DIR", default_value = "maps")]
    maps_dir: PathBuf,
    /// Directory for the metadata file [default: $VDN_OUT_DIR, else "runs"]
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TraceArgs {
    /// Saved network checkpoint (.vdnc)
    checkpoint: PathBuf,
    /// Task variant to play
    #[arg(long, value_name = "NAME")]
    task: String,
    /// Environment seed for the traced episode
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory holding the task map files
    #[arg(long, value_name = "DIR", default_value = "maps")]
    maps_dir: PathBuf,
    /// Directory for the trace CSV and metadata [default: $VDN_OUT_DIR, else "runs"]
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MapsArgs {
    /// Task variant name, a comma list, or "all"
    task: String,
    /// Directory holding the task map files
    #[arg(long, value_name = "DIR", default_value = "maps")]
    maps_dir: PathBuf,
    /// Directory for the metadata file [default: $VDN_OUT_DIR, else "runs"]
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Run only the named suite (repeatable) [default: all five]
    #[arg(long, value_name = "NAME")]
    suite: Vec<String>,
    /// Directory holding the task map files (used by the env suite)
    #[arg(long, value_name = "DIR", default_value = "maps")]
    maps_dir: PathBuf,
    /// Directory for the metadata file [default: $VDN_OUT_DIR, else "runs"]
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code().clamp(0, 255) as u8)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Trace(a) => cmd_trace(a),
        Command::Maps(a) => cmd_maps(a),
        Command::Verify(a) => cmd_verify(a),
    }
}

/// Output directory precedence: `--out` flag, then `$VDN_OUT_DIR`, then the
/// command's own default.
fn resolve_out(flag: Option<PathBuf>, fallback: &Path) -> PathBuf {
    flag.or_else(|| std::env::var_os("VDN_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| fallback.to_path_buf())
}

fn check_task_name(name: &str) -> Result<()> {
    if TASK_VARIANTS.contains(&name) {
        Ok(())
    } else {
        Err(VdnError::Usage(format!(
            "unknown task {name:?}; expected one of {}",
            TASK_VARIANTS.join(", ")
        )))
    }
}

/// Loads a task's map along with the content hash its provenance is pinned by.
fn load_task_map(maps_dir: &Path, task: &str) -> Result<(Arc<GridMap>, u64)> {
    let path = maps_dir.join(format!("{task}.map"));
    let text = std::fs::read_to_string(&path).map_err(|e| VdnError::io(&path, e))?;
    Ok((Arc::new(load_map(&text)?), fnv1a64(text.as_bytes())))
}

fn write_meta(out_dir: &Path, file: &str, doc: &Document) -> Result<PathBuf> {
    std::fs::create_dir_all(out_dir).map_err(|e| VdnError::io(out_dir, e))?;
    let path = out_dir.join(file);
    atomic_write(&path, write_document(doc).as_bytes())?;
    Ok(path)
}

fn cmd_train(a: TrainArgs) -> Result<ExitCode> {
    let mut cfg = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| VdnError::io(path, e))?;
            ExperimentConfig::from_document(&parse_document(&text)?)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(s) = &a.arch {
        cfg.architectures = architectures_from_flag(s)?;
    }
    if let Some(s) = &a.task {
        cfg.tasks = tasks_from_flag(s)?;
    }
    if let Some(s) = &a.seeds {
        cfg.seeds = seeds_from_flag(s)?;
    }
    if let Some(n) = a.episodes {
        cfg.episodes = n;
    }
    if let Some(n) = a.workers {
        cfg.workers = n;
    }
    if let Some(dir) = a.maps_dir {
        cfg.maps_dir = dir;
    }
    cfg.out_dir = resolve_out(a.out, &cfg.out_dir);

    // `experiment.meta` echoes the fully resolved configuration, flag
    // overrides included.
    let (records, _) = run_experiment(&cfg, &|line| println!("{line}"))?;
    println!(
        "{} runs in {}: per-task curves, summary.csv, experiment.meta",
        records.len(),
        cfg.out_dir.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(a: EvalArgs) -> Result<ExitCode> {
    check_task_name(&a.task)?;
    if a.episodes == 0 {
        return Err(VdnError::Usage("--episodes must be positive".into()));
    }
    let net = checkpoint::load::<f32>(&a.checkpoint)?;
    let (map, map_hash) = load_task_map(&a.maps_dir, &a.task)?;

    // Same stream tag the trainer uses for its greedy probes, so scores are
    // reproducible from (checkpoint, task, seed) alone.
    let mut rng = seeded_rng(a.seed, 0x6576616c);
    let mut scores = Vec::with_capacity(a.episodes);
    for i in 0..a.episodes {
        let score = eval_episode(&net, map.clone(), rng.gen())?;
        println!("episode {}: {score}", i + 1);
        scores.push(score);
    }
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    println!("mean over {} episodes: {mean}", scores.len());

    let arch = match net.spec.preset_number() {
        Some(n) => n.to_string(),
        None => net.spec.flag_string(),
    };
    let mut pairs = vec![
        ("checkpoint", a.checkpoint.display().to_string()),
        ("architecture", arch),
        ("task", a.task.clone()),
        ("map_hash", format!("{map_hash:016x}")),
        ("seed", a.seed.to_string()),
        ("episodes", a.episodes.to_string()),
        ("mean", mean.to_string()),
    ];
    let score_pairs: Vec<(String, String)> = scores
        .iter()
        .enumerate()
        .map(|(i, s)| (format!("episode{}", i + 1), s.to_string()))
        .collect();
    pairs.extend(score_pairs.iter().map(|(k, v)| (k.as_str(), v.clone())));
    let doc = Document { sections: vec![section("eval", &pairs)] };
    let out_dir = resolve_out(a.out, Path::new("runs"));
    let meta = write_meta(&out_dir, "eval.meta", &doc)?;
    println!("wrote {}", meta.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_trace(a: TraceArgs) -> Result<ExitCode> {
    check_task_name(&a.task)?;
    let net = checkpoint::load::<f32>(&a.checkpoint)?;
    let (map, map_hash) = load_task_map(&a.maps_dir, &a.task)?;
    let trace = q_trace(&net, &a.task, map, a.seed)?;

    let arch = match net.spec.preset_number() {
        Some(n) => format!("arch{n}"),
        None => "custom".to_string(),
    };
    let out_dir = resolve_out(a.out, Path::new("runs"));
    std::fs::create_dir_all(&out_dir).map_err(|e| VdnError::io(&out_dir, e))?;
    let csv_path = out_dir.join(format!("trace_{}_{arch}_seed{}.csv", a.task, a.seed));
    write_trace_csv(&csv_path, &trace)?;
    let events = trace.rows.iter().filter(|r| r.event.is_some()).count();
    println!(
        "wrote {} ({} rows, {events} reward events)",
        csv_path.display(),
        trace.rows.len()
    );

    let doc = Document {
        sections: vec![section(
            "trace",
            &[
                ("checkpoint", a.checkpoint.display().to_string()),
                ("architecture", arch),
                ("task", a.task.clone()),
                ("map_hash", format!("{map_hash:016x}")),
                ("seed", a.seed.to_string()),
                ("rows", trace.rows.len().to_string()),
                ("csv", csv_path.display().to_string()),
            ],
        )],
    };
    let meta = write_meta(&out_dir, "trace.meta", &doc)?;
    println!("wrote {}", meta.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_maps(a: MapsArgs) -> Result<ExitCode> {
    let tasks = tasks_from_flag(&a.task)?;
    let mut pairs = Vec::new();
    for task in &tasks {
        let (map, hash) = load_task_map(&a.maps_dir, task)?;
        println!(
            "{task}: {}x{} {:?}, observation window {OBS_LEN} bytes",
            map.width, map.height, map.task
        );
        print!("{}", map.to_text());
        println!("valid");
        println!();
        pairs.push((task.as_str(), format!("{hash:016x}")));
    }
    let doc = Document { sections: vec![section("maps", &pairs)] };
    let out_dir = resolve_out(a.out, Path::new("runs"));
    let meta = write_meta(&out_dir, "maps.meta", &doc)?;
    println!("wrote {}", meta.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(a: VerifyArgs) -> Result<ExitCode> {
    let names: Vec<&str> = a.suite.iter().map(String::as_str).collect();
    let outcomes = run_suites(&names, &a.maps_dir)?;
    for o in &outcomes {
        println!("{}", o.line());
    }
    let all_passed = outcomes.iter().all(|o| o.passed);
    println!(
        "{}/{} suites passed",
        outcomes.iter().filter(|o| o.passed).count(),
        outcomes.len()
    );

    let pairs: Vec<(&str, String)> = outcomes
        .iter()
        .map(|o| (o.name, if o.passed { "pass" } else { "fail" }.to_string()))
        .collect();
    let doc = Document { sections: vec![section("verify", &pairs)] };
    let out_dir = resolve_out(a.out, Path::new("runs"));
    let meta = write_meta(&out_dir, "verify.meta", &doc)?;
    println!("wrote {}", meta.display());
    Ok(if all_passed { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
