//! `streampca`: replay, export, benchmark and serve streaming PCA layouts.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use streampca::bench::{self, BenchConfig};
use streampca::stream::read_events;
use streampca::{LayoutSnapshot, Pipeline, PipelineConfig, Retention, StreamEvent};
use streampca_server::{serve, ServeConfig, Source};
use thiserror::Error;
use tracing::Level;

#[derive(Debug, Error)]
enum CliError {
    #[error("{path}: {source}")]
    Open { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {source}")]
    Event { line: usize, source: streampca::Error },
    #[error(transparent)]
    Core(#[from] streampca::Error),
    #[error(transparent)]
    Server(#[from] streampca_server::Error),
    #[error("{0}")]
    Usage(String),
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser)]
#[command(name = "streampca", version, about = "Streaming PCA layouts with stable frames and partial-point placement")]
struct Cli {
    /// Log at debug level.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replay an event file and print one line per emitted frame.
    Replay {
        #[command(flatten)]
        input: InputArgs,
        /// Events per second; unlimited when omitted.
        #[arg(long)]
        rate: Option<f64>,
    },
    /// Replay an event file and write every snapshot as one JSON line.
    Export {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time every pipeline stage over a grid of dimensions and sizes.
    Bench {
        #[arg(long = "grid-d", value_delimiter = ',', default_values_t = [10usize, 100, 1000])]
        grid_d: Vec<usize>,
        #[arg(long = "grid-n", value_delimiter = ',', default_values_t = [100usize, 1000, 10_000])]
        grid_n: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        reps: usize,
        #[arg(long, default_value_t = 2)]
        batch: usize,
        #[arg(long, default_value_t = 2)]
        components: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Serve snapshots over a websocket at /stream.
    Serve {
        #[arg(long, env = "STREAMPCA_LISTEN", default_value = "127.0.0.1:8080")]
        listen: SocketAddr,
        /// Event file to replay.
        #[arg(long, env = "STREAMPCA_INPUT", conflicts_with = "live", required_unless_present = "live")]
        input: Option<PathBuf>,
        /// Replay rate in events per second.
        #[arg(long, env = "STREAMPCA_RATE")]
        rate: Option<f64>,
        /// Accept live line-delimited events on this address instead.
        #[arg(long, env = "STREAMPCA_LIVE")]
        live: Option<SocketAddr>,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
}

#[derive(Args)]
struct InputArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Args, Clone)]
struct PipelineArgs {
    /// Number of features; taken from the longest event when omitted.
    #[arg(long, env = "STREAMPCA_DIMS")]
    dims: Option<usize>,
    #[arg(long, env = "STREAMPCA_COMPONENTS", default_value_t = 2)]
    components: usize,
    #[arg(long, env = "STREAMPCA_BATCH", default_value_t = 2)]
    batch: usize,
    /// Forgetting factor in (0, 1].
    #[arg(long, env = "STREAMPCA_FORGET", default_value_t = 1.0)]
    forget: f64,
    /// Drop stored points beyond the effective history m / (1 - f).
    #[arg(long)]
    drop_old: bool,
    /// Disable frame-to-frame alignment.
    #[arg(long)]
    no_align: bool,
    /// Subsample anchors beyond this many stored points.
    #[arg(long)]
    sample_cap: Option<usize>,
    #[arg(long, env = "STREAMPCA_SEED", default_value_t = 0)]
    seed: u64,
    /// Merge partial frames closer than this in event time.
    #[arg(long, default_value_t = 0.0)]
    coalesce: f64,
    /// Attach per-stage timings to snapshots.
    #[arg(long)]
    timings: bool,
}

impl PipelineArgs {
    fn config(&self, dims: usize) -> PipelineConfig {
        let mut c = PipelineConfig::new(dims);
        c.components = self.components;
        c.batch = self.batch;
        c.forgetting = self.forget;
        if self.drop_old {
            c.retention = Retention::ForgetBeyondEffectiveHistory;
        }
        c.align = !self.no_align;
        c.sample_cap = self.sample_cap;
        c.seed = self.seed;
        c.coalesce_window = self.coalesce;
        c.record_timings = self.timings;
        c
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|source| CliError::Open {
        path: path.to_path_buf(),
        source,
    })
}

fn load_events(path: &Path) -> Result<Vec<StreamEvent>> {
    read_events(open(path)?)
        .map(|(line, e)| e.map_err(|source| CliError::Event { line, source }))
        .collect()
}

/// Runs every event through a fresh pipeline, handing each snapshot to `emit`.
fn run_file(
    input: &InputArgs,
    rate: Option<f64>,
    mut emit: impl FnMut(&LayoutSnapshot) -> Result<()>,
) -> Result<Pipeline> {
    let events = load_events(&input.input)?;
    let dims = match input.pipeline.dims {
        Some(d) => d,
        None => events
            .iter()
            .map(|e| e.values.len())
            .max()
            .ok_or_else(|| CliError::Usage("input holds no events".into()))?,
    };
    let mut pipeline = Pipeline::new(input.pipeline.config(dims))?;
    let pause = rate.filter(|r| *r > 0.0).map(|r| Duration::from_secs_f64(1.0 / r));
    for (i, event) in events.into_iter().enumerate() {
        if let Some(p) = pause {
            std::thread::sleep(p);
        }
        let snapshot = pipeline
            .ingest(event)
            .map_err(|source| CliError::Event { line: i + 1, source })?;
        if let Some(s) = snapshot {
            emit(&s)?;
        }
    }
    Ok(pipeline)
}

fn summary(s: &LayoutSnapshot) -> String {
    let kind = match s.kind {
        streampca::FrameKind::Full => "full",
        streampca::FrameKind::Partial => "partial",
    };
    format!(
        "seq {:>5} {kind:<7} points {:>6} partial {:>4} +{} -{} scale {:.4} beta {:.4}",
        s.seq,
        s.layout.len(),
        s.partials.len(),
        s.added.len(),
        s.removed.len(),
        s.transform.scale,
        s.beta
    )
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Replay { input, rate } => {
            let stdout = io::stdout();
            let mut out = stdout.lock();
            let pipeline = run_file(&input, rate, |s| Ok(writeln!(out, "{}", summary(s))?))?;
            writeln!(out, "frames {} stored {} beta {:.4}", pipeline.seq(), pipeline.stored(), pipeline.beta())?;
        }
        Command::Export { input, out } => {
            let file = File::create(&out).map_err(|source| CliError::Open {
                path: out.clone(),
                source,
            })?;
            let mut writer = BufWriter::new(file);
            let pipeline = run_file(&input, None, |s| {
                writer.write_all(s.to_json().as_bytes())?;
                Ok(writer.write_all(b"\n")?)
            })?;
            writer.flush()?;
            eprintln!("wrote {} snapshots to {}", pipeline.seq(), out.display());
        }
        Command::Bench {
            grid_d,
            grid_n,
            reps,
            batch,
            components,
            seed,
        } => {
            let config = BenchConfig {
                dims: grid_d,
                sizes: grid_n,
                reps,
                batch,
                components,
                seed,
                ..Default::default()
            };
            let mut cells = Vec::new();
            for &d in &config.dims {
                for &n in &config.sizes {
                    tracing::info!(d, n, "bench cell");
                    cells.push(bench::run_cell(&config, d, n)?);
                }
            }
            print!("{}", bench::format_table(&cells));
        }
        Command::Serve {
            listen,
            input,
            rate,
            live,
            pipeline,
        } => {
            let source = match (input, live) {
                (_, Some(addr)) => Source::Live { addr },
                (Some(path), None) => Source::Replay { path, rate },
                (None, None) => return Err(CliError::Usage("serve needs --input or --live".into())),
            };
            let dims = match (pipeline.dims, &source) {
                (Some(d), _) => d,
                (None, Source::Replay { path, .. }) => longest_event(path)?,
                (None, Source::Live { .. }) => return Err(CliError::Usage("--dims is required with --live".into())),
            };
            let config = ServeConfig {
                listen,
                source,
                pipeline: pipeline.config(dims),
            };
            tokio::runtime::Runtime::new()?.block_on(serve(config))?;
        }
    }
    Ok(())
}

/// Feature count of the longest well-formed event in `path`.
fn longest_event(path: &Path) -> Result<usize> {
    let mut best = 0;
    for line in open(path)?.lines() {
        if let Ok(e) = StreamEvent::parse_line(&line?) {
            best = best.max(e.values.len());
        }
    }
    if best == 0 {
        return Err(CliError::Usage(format!("{}: no events", path.display())));
    }
    Ok(best)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_writer(io::stderr)
        .with_max_level(if cli.verbose { Level::DEBUG } else { Level::INFO })
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
