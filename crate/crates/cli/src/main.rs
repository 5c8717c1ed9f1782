//! `delibsim`: run simulations, recompute reports, lint configs.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 configuration error, 3 agent
//! backend failure, 4 platform failure.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use delibsim::config::{load_config, preset, preset_text, schema, SimulationConfig};
use delibsim::metrics::{actor_breakdown, export_report, per_minute_activity};
use delibsim::model::ActorId;
use delibsim::runner::{resolve_seed, run_config, RunError, RunMeta};
use delibsim::scheduler::AbortCause;
use delibsim::{jsonl, InterArrivalMode};
use tracing_subscriber::EnvFilter;

const EXIT_IO: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_BACKEND: u8 = 3;
const EXIT_PLATFORM: u8 = 4;

#[derive(Parser)]
#[command(name = "delibsim", version, about = "Discrete-event discussion simulator")]
struct Cli {
    /// Log filter, e.g. `info` or `delibsim=debug`. Defaults to RUST_LOG or `warn`.
    #[arg(long, global = true)]
    log: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write its artifacts.
    Run(RunArgs),
    /// Recompute activity and per-actor reports from a history file.
    Report(ReportArgs),
    /// Check a config file without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the bundled ten-actor preset config.
    Preset,
    /// Print the JSON Schema of the config document.
    Schema,
}

#[derive(Args)]
struct RunArgs {
    /// Config file (TOML, JSON, or a previous run_meta.json). The bundled
    /// preset when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Horizon in simulated minutes.
    #[arg(long)]
    horizon: Option<f64>,
    /// `exponential_rate` or `literal_poisson`.
    #[arg(long)]
    mode: Option<InterArrivalMode>,
    /// Output directory; overrides the config's `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the per-event trace as trace.jsonl.
    #[arg(long)]
    trace: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// A history.jsonl file.
    #[arg(long)]
    history: PathBuf,
    /// Horizon for binning. Read from run_meta.json next to the history when
    /// omitted, else the last timestamp rounded up.
    #[arg(long)]
    horizon: Option<f64>,
    /// Output directory; the history's directory when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::new(EXIT_IO, format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let filter = match &cli.log {
        Some(f) => EnvFilter::new(f),
        None => EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")),
    };
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).init();

    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Report(args) => report(args),
        Command::Validate { config } => validate(&config),
        Command::Preset => {
            print!("{}", preset_text());
            Ok(())
        }
        Command::Schema => {
            println!("{}", serde_json::to_string_pretty(&schema()).expect("schema serializes"));
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load(path: Option<&Path>) -> Result<SimulationConfig, Failure> {
    match path {
        Some(p) => load_config(p).map_err(|e| match e {
            delibsim::config::ConfigError::Io { .. } => Failure::new(EXIT_CONFIG, format!("cannot read config: {e}")),
            other => Failure::new(EXIT_CONFIG, other.to_string()),
        }),
        None => Ok(preset()),
    }
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let mut config = load(args.config.as_deref())?;
    if let Some(h) = args.horizon {
        if !(h.is_finite() && h >= 0.0) {
            return Err(Failure::new(EXIT_CONFIG, format!("--horizon {h} must be a non-negative number")));
        }
        config.horizon_minutes = h;
    }
    if let Some(mode) = args.mode {
        config.interarrival_mode = mode;
    }
    if let Some(out) = args.out {
        config.output_dir = out;
    }
    let seed = resolve_seed(&config, args.seed);

    let output = run_config(&config, seed, false).map_err(|e| match e {
        RunError::Backend(e) => Failure::new(EXIT_BACKEND, e.to_string()),
        RunError::Search(e) => Failure::new(EXIT_CONFIG, e.to_string()),
        RunError::Simulation(e) => Failure::new(EXIT_CONFIG, e.to_string()),
    })?;

    let dir = &output.config.output_dir;
    fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
    let history = &output.outcome.history;
    jsonl::save(history, &dir.join("history.jsonl")).map_err(|e| Failure::new(EXIT_IO, e.to_string()))?;
    write_json(&dir.join("run_meta.json"), &output.meta)?;
    let roster: Vec<ActorId> = output.config.actors.iter().map(|a| a.actor_id.clone()).collect();
    let series = per_minute_activity(history, output.config.horizon_minutes);
    let rows = actor_breakdown(history, &roster);
    export_report(&series, &rows, dir).map_err(|e| Failure::new(EXIT_IO, e.to_string()))?;
    if args.trace {
        let path = dir.join("trace.jsonl");
        let mut text = String::new();
        for entry in &output.outcome.trace {
            text.push_str(&serde_json::to_string(entry).expect("trace serializes"));
            text.push('\n');
        }
        fs::write(&path, text).map_err(|e| io_failure(&path, e))?;
    }

    let counts = &output.meta.counts;
    println!(
        "seed {seed}: {} posts ({} new, {} replies), {} executed votes over {} min; artifacts in {}",
        counts.posts,
        counts.new_comments,
        counts.replies,
        counts.votes,
        output.config.horizon_minutes,
        dir.display()
    );

    if let Some(cause) = output.meta.abort_cause {
        let reason = output.meta.abort_reason.clone().unwrap_or_default();
        let code = match cause {
            AbortCause::Platform => EXIT_PLATFORM,
            AbortCause::EventCap => EXIT_CONFIG,
        };
        return Err(Failure::new(code, format!("run incomplete: {reason}")));
    }
    if counts.post_events > 0 && counts.posts == 0 && counts.agent_errors > 0 {
        return Err(Failure::new(
            EXIT_BACKEND,
            format!("agent backend failed on all {} post events", counts.post_events),
        ));
    }
    Ok(())
}

fn write_json(path: &Path, value: &RunMeta) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    fs::write(path, text).map_err(|e| io_failure(path, e))
}

fn report(args: ReportArgs) -> Result<(), Failure> {
    let history = jsonl::load(&args.history).map_err(|e| match e {
        jsonl::JsonlError::Io { .. } => Failure::new(EXIT_IO, e.to_string()),
        jsonl::JsonlError::Parse { .. } => {
            Failure::new(EXIT_CONFIG, format!("{}: {e}", args.history.display()))
        }
    })?;
    let dir = args
        .history
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map_or_else(|| PathBuf::from("."), Path::to_path_buf);
    let meta: Option<RunMeta> = fs::read_to_string(dir.join("run_meta.json"))
        .ok()
        .and_then(|t| serde_json::from_str(&t).ok());
    let horizon = args
        .horizon
        .or(meta.as_ref().map(|m| m.horizon_minutes))
        .unwrap_or_else(|| {
            let last = history
                .posts
                .iter()
                .map(|p| p.timestamp)
                .chain(history.votes.iter().map(|v| v.timestamp))
                .fold(0.0, f64::max);
            last.ceil()
        });
    let roster: Vec<ActorId> = meta
        .as_ref()
        .map(|m| m.roster.iter().map(|r| r.actor_id.clone()).collect())
        .unwrap_or_default();
    let series = per_minute_activity(&history, horizon);
    let rows = actor_breakdown(&history, &roster);
    let out = args.out.unwrap_or(dir);
    let paths = export_report(&series, &rows, &out).map_err(|e| Failure::new(EXIT_IO, e.to_string()))?;

    let mut stdout = std::io::stdout().lock();
    let _ = writeln!(
        stdout,
        "{} posts, {} executed votes in {} bins; mean {:.2} posts/min, {:.2} votes/min",
        series.total_posts(),
        series.total_votes(),
        series.bins.len(),
        series.mean_posts_per_minute(),
        series.mean_votes_per_minute()
    );
    let _ = writeln!(stdout, "{:<16} {:>6} {:>6} {:>6} {:>8}", "actor", "posts", "votes", "new", "replies");
    for r in &rows {
        let _ = writeln!(
            stdout,
            "{:<16} {:>6} {:>6} {:>6} {:>8}",
            r.actor.as_str(),
            r.posts,
            r.votes,
            r.new_comments,
            r.replies
        );
    }
    let _ = writeln!(stdout, "wrote {}, {}, {}", paths.activity.display(), paths.actors.display(), paths.plot_data.display());
    Ok(())
}

fn validate(path: &Path) -> Result<(), Failure> {
    let config = load(Some(path))?;
    println!(
        "ok: {} actors, horizon {} min, {} mode, config hash {}",
        config.actors.len(),
        config.horizon_minutes,
        config.interarrival_mode,
        config.hash()
    );
    Ok(())
}
