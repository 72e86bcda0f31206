use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use playcollect_core::agent::{run_scripted_episode, AgentConfig, EpisodeRunOptions, ScriptedRun};
use playcollect_core::analysis::{analyze, compare_groups, standard_subspaces, AnalysisOptions, CoverageReport, RangeMode};
use playcollect_core::episode::{list_episodes, read_episode, EpisodeMetadata, FrameData};
use playcollect_core::scene::{generate, load_templates, DifficultyConfig, Level, RoomTemplate};
use playcollect_core::session::{episode_seed, record_episode, Assets, SessionConfig};
use playcollect_core::task::{leaderboard_path, Leaderboard};
use playcollect_teleop::{AppState, ClockMode, ServerConfig};
use rayon::prelude::*;
use serde::Deserialize;

const DATA_DIR_ENV: &str = "PLAYCOLLECT_DATA_DIR";
const DEFAULT_DATA_DIR: &str = "data";

/// Scene generation, scripted data collection, teleoperation server and
/// coverage analysis for household tidy-up episodes.
#[derive(Parser)]
#[command(name = "playcollect", version)]
struct Cli {
    /// JSON config file supplying defaults for unset flags.
    #[arg(long, global = true, env = "PLAYCOLLECT_CONFIG")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate one scene and write it as JSON.
    Gen(GenArgs),
    /// Run episodes with a scripted agent and record the successful ones.
    Run(RunArgs),
    /// Serve live teleoperation sessions over WebSocket.
    Serve(ServeArgs),
    /// Compute a coverage report over a directory of episodes.
    Analyze(AnalyzeArgs),
    /// Compare two episode directories.
    Compare(CompareArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Difficulty {
    Easy,
    Hard,
}

impl From<Difficulty> for Level {
    fn from(d: Difficulty) -> Level {
        match d {
            Difficulty::Easy => Level::Easy,
            Difficulty::Hard => Level::Hard,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AgentKind {
    Scripted,
}

#[derive(Clone, Copy, ValueEnum)]
enum Range {
    Declared,
    Observed,
}

impl From<Range> for RangeMode {
    fn from(r: Range) -> RangeMode {
        match r {
            Range::Declared => RangeMode::Declared,
            Range::Observed => RangeMode::Observed,
        }
    }
}

#[derive(Args)]
struct GenArgs {
    /// Directory of room templates (*.json). Built-in templates if unset.
    #[arg(long)]
    template_dir: Option<PathBuf>,
    /// Scene seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "easy")]
    difficulty: Difficulty,
    /// Output file.
    #[arg(long, default_value = "scene.json")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Number of episodes.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    episodes: u64,
    #[arg(long, value_enum, default_value = "scripted")]
    agent: AgentKind,
    #[arg(long, value_enum, default_value = "easy")]
    difficulty: Difficulty,
    /// Base seed; episode k uses seed + k.
    #[arg(long)]
    seed: Option<u64>,
    /// Data directory for recorded episodes.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory of room templates (*.json). Built-in templates if unset.
    #[arg(long)]
    template_dir: Option<PathBuf>,
    /// Simulation step in seconds.
    #[arg(long)]
    dt: Option<f64>,
    /// Standard deviation of Gaussian noise added to agent inputs.
    #[arg(long)]
    noise: Option<f64>,
    /// Episode time limit in seconds.
    #[arg(long, default_value_t = 300.0)]
    time_limit: f64,
    /// Episode indices (0-based) to abort, comma separated.
    #[arg(long, value_delimiter = ',')]
    abort_episodes: Vec<u64>,
    /// Episode time at which injected aborts fire.
    #[arg(long, default_value_t = 5.0)]
    abort_at: f64,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    port: Option<u16>,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Directory of room templates (*.json). Built-in templates if unset.
    #[arg(long)]
    templates: Option<PathBuf>,
    /// Data directory for recorded episodes and leaderboards.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Seconds a disconnected session waits for a resume before it is aborted.
    #[arg(long, default_value_t = 30.0)]
    grace: f64,
    /// Advance one tick per input message instead of in real time.
    #[arg(long)]
    lockstep: bool,
    /// Simulation step in seconds.
    #[arg(long)]
    dt: Option<f64>,
}

#[derive(Args, Clone)]
struct ReportArgs {
    /// Bins per dimension.
    #[arg(long)]
    bins: Option<usize>,
    /// Where bin edges come from.
    #[arg(long, value_enum)]
    range: Option<Range>,
    /// Only count frames where the subsystem is active.
    #[arg(long)]
    active_only: bool,
    /// Cells per side of the IK target heatmap.
    #[arg(long, default_value_t = 8)]
    heatmap_n: usize,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Episode data directory.
    #[arg(long)]
    data: Option<PathBuf>,
    #[command(flatten)]
    report: ReportArgs,
    #[arg(long, default_value = "report.json")]
    out: PathBuf,
    /// Also write the IK heatmap as CSV.
    #[arg(long)]
    heatmap_csv: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// First episode directory.
    #[arg(long)]
    a: PathBuf,
    /// Second episode directory.
    #[arg(long)]
    b: PathBuf,
    #[command(flatten)]
    report: ReportArgs,
    #[arg(long, default_value = "cmp.json")]
    out: PathBuf,
}

/// Values a config file may provide. Flags win over these.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    data_dir: Option<PathBuf>,
    template_dir: Option<PathBuf>,
    seed: Option<u64>,
    dt: Option<f64>,
    noise: Option<f64>,
    bins: Option<usize>,
    range: Option<RangeMode>,
    port: Option<u16>,
}

/// Failures that map to exit code 2.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn main() -> ExitCode {
    tracing_subscriber::fmt().with_writer(std::io::stderr).with_target(false).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| usage(format!("cannot read config {}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| usage(format!("invalid config {}: {e}", p.display())))?
        }
        None => FileConfig::default(),
    };
    match cli.command {
        Command::Gen(a) => cmd_gen(a, &file),
        Command::Run(a) => cmd_run(a, &file),
        Command::Serve(a) => cmd_serve(a, &file),
        Command::Analyze(a) => cmd_analyze(a, &file),
        Command::Compare(a) => cmd_compare(a, &file),
    }
}

/// Flag, then the environment variable, then the config file, then the default.
fn data_dir(flag: Option<PathBuf>, file: &FileConfig) -> PathBuf {
    flag.or_else(|| std::env::var_os(DATA_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .or_else(|| file.data_dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_DATA_DIR))
}

fn templates(flag: Option<PathBuf>, file: &FileConfig) -> Result<Arc<Vec<RoomTemplate>>> {
    match flag.or_else(|| file.template_dir.clone()) {
        None => Ok(Assets::builtin().templates),
        Some(dir) if !dir.is_dir() => Err(usage(format!("template directory {} does not exist", dir.display()))),
        Some(dir) => Ok(Arc::new(load_templates(&dir).with_context(|| format!("loading templates from {}", dir.display()))?)),
    }
}

fn session_config(dt: Option<f64>, file: &FileConfig) -> Result<SessionConfig> {
    let mut config = SessionConfig::default();
    if let Some(dt) = dt.or(file.dt) {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(usage(format!("dt must be positive, got {dt}")));
        }
        config.sim.dt = dt;
    }
    Ok(config)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn cmd_gen(a: GenArgs, file: &FileConfig) -> Result<()> {
    let library = templates(a.template_dir, file)?;
    let seed = a.seed.or(file.seed).unwrap_or(0);
    let scene = generate(&library, &Assets::builtin().catalog, &DifficultyConfig::for_level(a.difficulty.into()), seed)?;
    write_json(&a.out, &scene)?;
    println!("wrote {} ({}, {} trash)", a.out.display(), scene.template_id, scene.trash_count());
    Ok(())
}

fn cmd_run(a: RunArgs, file: &FileConfig) -> Result<()> {
    let AgentKind::Scripted = a.agent;
    let noise = a.noise.or(file.noise).unwrap_or(0.0);
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(usage(format!("noise must be non-negative, got {noise}")));
    }
    let assets = Assets { templates: templates(a.template_dir, file)?, ..Assets::builtin() };
    let config = session_config(a.dt, file)?;
    let out = data_dir(a.out, file);
    let level: Level = a.difficulty.into();
    let base = a.seed.or(file.seed).unwrap_or(0);
    let agent = AgentConfig { noise_sigma: noise, ..AgentConfig::default() };

    let pool = rayon::ThreadPoolBuilder::new().num_threads(a.jobs).build()?;
    let runs: Vec<(u64, Result<ScriptedRun>)> = pool.install(|| {
        (0..a.episodes)
            .into_par_iter()
            .map(|k| {
                let seed = episode_seed(base, k);
                let options = EpisodeRunOptions {
                    time_limit: a.time_limit,
                    abort_at: a.abort_episodes.contains(&k).then_some(a.abort_at),
                };
                let run = run_scripted_episode(assets.clone(), config.clone(), agent.clone(), "scripted", level, seed, options);
                (seed, run.map_err(anyhow::Error::from))
            })
            .collect()
    });

    // Recording is sequential in episode order so directory suffixes are stable.
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let mut board = Leaderboard::load(leaderboard_path(&out, level))?;
    let mut times = Vec::new();
    for (k, (seed, run)) in runs.into_iter().enumerate() {
        let run = run.with_context(|| format!("episode {k} (seed {seed})"))?;
        let stamp = chrono::Local::now().naive_local();
        match record_episode(&run.end, &out, &mut board, stamp)? {
            Some(r) => {
                let t = run.end.completion_time.unwrap_or_default();
                times.push(t);
                println!("episode {k} seed {seed}: success in {t:.2} s -> {}", r.dir.display());
            }
            None => {
                let why = run.failure.map_or_else(|| format!("{:?}", run.end.reason), |f| f.to_string());
                println!("episode {k} seed {seed}: not recorded ({why})");
            }
        }
    }
    let mean = times.iter().sum::<f64>() / times.len().max(1) as f64;
    println!("successes {}/{}, mean T_i {:.3} s", times.len(), a.episodes, mean);
    if times.is_empty() {
        bail!("no episode succeeded; nothing was written");
    }
    Ok(())
}

fn cmd_serve(a: ServeArgs, file: &FileConfig) -> Result<()> {
    let port = a.port.or(file.port).unwrap_or(8080);
    let addr: SocketAddr = format!("{}:{port}", a.host).parse().map_err(|e| usage(format!("bad address: {e}")))?;
    if !(a.grace >= 0.0 && a.grace.is_finite()) {
        return Err(usage(format!("grace must be non-negative, got {}", a.grace)));
    }
    let assets = Assets { templates: templates(a.templates, file)?, ..Assets::builtin() };
    let data = data_dir(a.data_dir, file);
    fs::create_dir_all(&data).with_context(|| format!("creating {}", data.display()))?;
    let config = ServerConfig {
        session: session_config(a.dt, file)?,
        clock: if a.lockstep { ClockMode::Lockstep } else { ClockMode::Realtime },
        disconnect_grace: Duration::from_secs_f64(a.grace),
        ..ServerConfig::new(&data)
    };
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let state = AppState::new(assets, config);
        let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
        tracing::info!("listening on ws://{}/ws, data in {}", listener.local_addr()?, data.display());
        axum_serve(listener, state).await
    })
}

async fn axum_serve(listener: tokio::net::TcpListener, state: AppState) -> Result<()> {
    let addr = playcollect_teleop::spawn(listener, state)?;
    tokio::signal::ctrl_c().await?;
    tracing::info!("shutting down {addr}");
    Ok(())
}

fn load_dir(dir: &Path) -> Result<Vec<(EpisodeMetadata, Vec<FrameData>)>> {
    if !dir.is_dir() {
        bail!("data directory {} does not exist", dir.display());
    }
    let paths = list_episodes(dir)?;
    if paths.is_empty() {
        bail!("no episodes in {}", dir.display());
    }
    paths
        .par_iter()
        .map(|p| read_episode(p).with_context(|| format!("reading {}", p.display())))
        .collect()
}

fn report(dir: &Path, args: &ReportArgs, file: &FileConfig) -> Result<CoverageReport> {
    let bins = args.bins.or(file.bins).unwrap_or(AnalysisOptions::default().bins);
    if bins == 0 || args.heatmap_n == 0 {
        return Err(usage("bins and heatmap-n must be at least 1"));
    }
    let opts = AnalysisOptions {
        bins,
        range_mode: args.range.map(RangeMode::from).or(file.range).unwrap_or_default(),
        active_only: args.active_only,
        heatmap_n: args.heatmap_n,
    };
    let episodes = load_dir(dir)?;
    let specs = standard_subspaces(&Assets::builtin().model, &SessionConfig::default().control);
    Ok(analyze(&episodes, &specs, &opts)?)
}

fn cmd_analyze(a: AnalyzeArgs, file: &FileConfig) -> Result<()> {
    let dir = data_dir(a.data, file);
    let r = report(&dir, &a.report, file)?;
    write_json(&a.out, &r)?;
    if let Some(csv) = &a.heatmap_csv {
        fs::write(csv, r.ik_heatmap.to_csv()).with_context(|| format!("writing {}", csv.display()))?;
    }
    println!(
        "{} episodes, {} frames, duration {:.3} ± {:.3} s",
        r.episodes, r.frames, r.durations.mean, r.durations.std
    );
    for s in &r.subspaces {
        println!("  {:<20} {:.4}", s.name, s.ratio);
    }
    Ok(())
}

fn cmd_compare(a: CompareArgs, file: &FileConfig) -> Result<()> {
    let ra = report(&a.a, &a.report, file)?;
    let rb = report(&a.b, &a.report, file)?;
    let c = compare_groups(&a.a.display().to_string(), &ra, &a.b.display().to_string(), &rb);
    write_json(&a.out, &c)?;
    println!("mean duration delta {:+.3} s", c.deltas.duration_mean);
    for (name, d) in &c.deltas.coverage {
        println!("  {name:<20} {d:+.4}");
    }
    Ok(())
}
