//! `handcue`: extraction, replay, benchmarking, corpus generation, cache
//! inspection and the live session service.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use handcue_core::bench::{run_bench, BenchError};
use handcue_core::cache::RecognitionCache;
use handcue_core::config::{BackendChoice, Settings, SettingsError};
use handcue_core::corpus::{write_corpus, CorpusConfig};
use handcue_core::pipeline::{Engine, EngineError, FrameOutcome};
use handcue_core::router::MockRobot;
use handcue_service::ServeError;
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "handcue", version, about = "Hand gesture to robot command pipeline")]
struct Cli {
    /// TOML configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BackendFlag {
    Rules,
    Remote,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Landmark NDJSON in, keyframe log out.
    Extract {
        input: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Full offline run that dispatches to the mock robot and writes the
    /// command log.
    Replay {
        session: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long, value_enum)]
        backend: Option<BackendFlag>,
    },
    /// Recognition accuracy over a labelled corpus directory.
    Bench {
        corpus: PathBuf,
        #[arg(long, value_enum)]
        backend: Option<BackendFlag>,
        /// Report destination; stdout when omitted.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Writes a synthetic landmark corpus.
    GenCorpus {
        output: PathBuf,
        #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(1..))]
        per_class: u64,
        /// Joint noise in palm widths.
        #[arg(long, default_value_t = 0.01)]
        noise_sigma: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Runs the session service until interrupted.
    Serve {
        /// Overrides `service.bind`.
        #[arg(long)]
        bind: Option<String>,
    },
    /// Recognition cache tools.
    Cache {
        #[command(subcommand)]
        action: CacheCmd,
    },
}

#[derive(Debug, Subcommand)]
enum CacheCmd {
    /// Prints every entry as NDJSON.
    Inspect {
        /// Cache file; `cache.path` from the config when omitted.
        #[arg(long)]
        path: Option<PathBuf>,
    },
}

/// Failure classes, one exit code each.
#[derive(Debug)]
enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
    Backend(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Self::Usage(_) => 1,
            Self::Data(_) => 2,
            Self::Backend(_) => 3,
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            Self::Usage(e) | Self::Data(e) | Self::Backend(e) => e,
        }
    }
}

impl From<SettingsError> for Failure {
    fn from(e: SettingsError) -> Self {
        Self::Usage(e.into())
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    tracing_subscriber::fmt()
        .with_writer(io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}

fn run(cli: Cli) -> Outcome {
    let mut settings = match &cli.config {
        Some(path) => Settings::load(path)?,
        None => Settings::default(),
    };
    match cli.command {
        Cmd::Extract { input, output } => extract(&settings, &input, output.as_deref()),
        Cmd::Replay {
            session,
            output,
            backend,
        } => {
            override_backend(&mut settings, backend)?;
            replay(&settings, &session, output.as_deref())
        }
        Cmd::Bench {
            corpus,
            backend,
            report,
        } => {
            override_backend(&mut settings, backend)?;
            bench(&settings, &corpus, report.as_deref())
        }
        Cmd::GenCorpus {
            output,
            per_class,
            noise_sigma,
            seed,
        } => gen_corpus(&output, per_class as usize, noise_sigma, seed),
        Cmd::Serve { bind } => {
            if let Some(bind) = bind {
                settings.service.bind = bind;
            }
            serve(settings)
        }
        Cmd::Cache {
            action: CacheCmd::Inspect { path },
        } => inspect_cache(&settings, path),
    }
}

fn override_backend(settings: &mut Settings, flag: Option<BackendFlag>) -> Outcome {
    if let Some(flag) = flag {
        settings.backend.kind = match flag {
            BackendFlag::Rules => BackendChoice::Rules,
            BackendFlag::Remote => BackendChoice::Remote,
        };
        settings.validate()?;
    }
    Ok(())
}

fn read_input(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(Failure::Data)
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p)
                .with_context(|| format!("cannot create {}", p.display()))
                .map_err(Failure::Data)?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_line(out: &mut dyn Write, value: &impl Serialize) -> Outcome {
    let line = serde_json::to_string(value).expect("records serialize");
    writeln!(out, "{line}").context("write failed").map_err(Failure::Data)
}

fn extract(settings: &Settings, input: &Path, output: Option<&Path>) -> Outcome {
    let text = read_input(input)?;
    let mut pipeline = settings.frame_pipeline();
    let mut out = open_output(output)?;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let outcome = pipeline
            .ingest_line(line)
            .map_err(|e| Failure::Data(anyhow!("{}:{}: {e}", input.display(), i + 1)))?;
        if let FrameOutcome::Accepted { keyframe: Some(kf), .. } = outcome {
            write_line(&mut *out, &kf.record())?;
        }
    }
    out.flush().context("write failed").map_err(Failure::Data)?;
    let c = pipeline.counters();
    eprintln!("frames accepted: {}, rejected: {}, keyframes: {}", c.accepted, c.rejected, c.keyframes);
    Ok(())
}

fn replay(settings: &Settings, session: &Path, output: Option<&Path>) -> Outcome {
    let text = read_input(session)?;
    let registry = Arc::new(settings.registry()?);
    let interpreter = settings.interpreter()?;
    let robot = Box::new(MockRobot::new(&registry));
    let mut engine = Engine::new(settings.frame_pipeline(), interpreter, registry, robot);
    let log = engine.replay(&text).map_err(|e| match e {
        EngineError::Data { line, source } => Failure::Data(anyhow!("{}:{line}: {source}", session.display())),
        EngineError::Interpretation(e) => Failure::Backend(e.into()),
    })?;
    let mut out = open_output(output)?;
    for rec in &log {
        write_line(&mut *out, rec)?;
    }
    out.flush().context("write failed").map_err(Failure::Data)?;
    let hits = log.iter().filter(|r| r.cache_cosine.is_some()).count();
    eprintln!(
        "keyframes: {}, cache hits: {hits}, backend calls: {}",
        log.len(),
        engine.interpreter().gateway().backend_calls()
    );
    if let Some(cache) = engine.interpreter().cache() {
        cache
            .flush()
            .context("cannot save the recognition cache")
            .map_err(Failure::Data)?;
    }
    Ok(())
}

fn bench(settings: &Settings, corpus: &Path, report: Option<&Path>) -> Outcome {
    let result = run_bench(corpus, settings).map_err(|e| match e {
        BenchError::Settings(e) => Failure::Usage(e.into()),
        BenchError::Interpretation { .. } => Failure::Backend(e.into()),
        other => Failure::Data(other.into()),
    })?;
    let mut out = open_output(report)?;
    let text = serde_json::to_string_pretty(&result).expect("report serializes");
    writeln!(out, "{text}").context("write failed").map_err(Failure::Data)?;
    out.flush().context("write failed").map_err(Failure::Data)?;
    for (label, c) in &result.classes {
        eprintln!("{label:<20} {:>4}/{:<4} {:>6.2}%", c.correct, c.samples, c.accuracy);
    }
    eprintln!(
        "{:<20} {:>4}/{:<4} {:>6.2}%",
        "overall", result.overall.correct, result.overall.samples, result.overall.accuracy
    );
    Ok(())
}

fn gen_corpus(output: &Path, per_class: usize, noise_sigma: f64, seed: u64) -> Outcome {
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Failure::Usage(anyhow!("--noise-sigma must be a non-negative number")));
    }
    let cfg = CorpusConfig {
        per_class,
        noise_sigma,
        seed,
        ..Default::default()
    };
    let n = write_corpus(output, &cfg)
        .with_context(|| format!("cannot write corpus under {}", output.display()))
        .map_err(Failure::Data)?;
    eprintln!("wrote {n} samples to {}", output.display());
    Ok(())
}

fn serve(settings: Settings) -> Outcome {
    let rt = tokio::runtime::Runtime::new()
        .context("cannot start the runtime")
        .map_err(Failure::Backend)?;
    rt.block_on(handcue_service::serve(settings)).map_err(|e| match e {
        ServeError::Settings(e) => Failure::Usage(e.into()),
        other => Failure::Backend(other.into()),
    })
}

#[derive(Serialize)]
struct EntryView<'a> {
    name: &'a str,
    meaning: &'a str,
    task: &'a str,
    hit_count: u64,
    created_at_us: u64,
}

fn inspect_cache(settings: &Settings, path: Option<PathBuf>) -> Outcome {
    let path = path
        .or_else(|| settings.cache.path.clone())
        .ok_or_else(|| Failure::Usage(anyhow!("no cache file: pass --path or set cache.path")))?;
    if !path.exists() {
        return Err(Failure::Data(anyhow!("cache file {} does not exist", path.display())));
    }
    let cache = RecognitionCache::open(&path, None).map_err(|e| Failure::Data(e.into()))?;
    let mut out = open_output(None)?;
    for e in cache.entries() {
        write_line(
            &mut *out,
            &EntryView {
                name: &e.name,
                meaning: &e.meaning,
                task: &e.task_text,
                hit_count: e.hit_count,
                created_at_us: e.created_at_us,
            },
        )?;
    }
    out.flush().context("write failed").map_err(Failure::Data)?;
    eprintln!("{} entries", cache.len());
    Ok(())
}
