use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use mangaroll::genai::stub::StubTransport;
use mangaroll::genai::{FixtureStore, Gateway, GatewayMode, HttpTransport, ServiceEndpoints, Transport};
use mangaroll::media::{AutoDecoder, Decoder};
use mangaroll::pipeline::{self, ErrorClass, PipelineEnv, PipelineError, Workspace};
use mangaroll::render::SinkConfig;
use mangaroll::timeline::{load_project, save_project, PipelineConfig, SuggestionLevel};

use crate::{router, AppState, ProjectStore, DEFAULT_PORT};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_SERVICE: i32 = 2;

const SERVICE_TIMEOUT: Duration = Duration::from_secs(120);

#[derive(Debug, Parser)]
#[command(name = "mangaroll", version, about = "Manga-style B-roll for sports footage")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Seed for every randomized step; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Answer every generative request from this fixture directory.
    #[arg(long, global = true, value_name = "DIR", conflicts_with = "record")]
    pub replay: Option<PathBuf>,
    /// Call the live services and store every response in this directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub record: Option<PathBuf>,
    /// JSON file with service URLs and API keys.
    #[arg(long, global = true, value_name = "FILE")]
    pub services: Option<PathBuf>,
    /// Use the built-in offline responder instead of live services.
    #[arg(long, global = true, hide = true)]
    pub offline_stub: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Analyze a video into a timeline project.
    Analyze {
        #[arg(long)]
        input: PathBuf,
        /// Pipeline configuration (JSON).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Project file to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a project to an image sequence directory or, with
    /// `encoder:<file>`, through the video encoder.
    Render {
        #[arg(long)]
        project: PathBuf,
        #[arg(long)]
        sink: String,
    },
    /// Print suggestions for a project's narrative gaps.
    Suggest {
        #[arg(long)]
        project: PathBuf,
        #[arg(long, value_parser = parse_level)]
        level: SuggestionLevel,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long, env = "MANGAROLL_PORT")]
        port: Option<u16>,
        /// Directory holding one subdirectory per project.
        #[arg(long, default_value = "mangaroll-workspace")]
        workspace: PathBuf,
    },
    /// Pipe-protocol decoder for `.mrv` files.
    #[command(hide = true)]
    Rawdec {
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        args: Vec<String>,
    },
}

fn parse_level(s: &str) -> Result<SuggestionLevel, String> {
    SuggestionLevel::parse(s).ok_or_else(|| format!("expected off, on_demand or proactive, got {s:?}"))
}

/// `encoder:<file>` selects the encoder; anything else is a directory.
pub fn parse_sink(s: &str) -> SinkConfig {
    match s.strip_prefix("encoder:") {
        Some(path) => SinkConfig::Encoder { path: PathBuf::from(path) },
        None => SinkConfig::ImageSequence { dir: PathBuf::from(s) },
    }
}

/// Failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn validation(m: impl std::fmt::Display) -> Self {
        Self { code: EXIT_VALIDATION, message: m.to_string() }
    }

    fn service(m: impl std::fmt::Display) -> Self {
        Self { code: EXIT_SERVICE, message: m.to_string() }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e.class() {
            ErrorClass::Validation => Self::validation(e),
            ErrorClass::Service => Self::service(e),
        }
    }
}

pub fn build_gateway(g: &Global) -> Result<Gateway, CliError> {
    if let Some(dir) = &g.replay {
        if !dir.is_dir() {
            return Err(CliError::validation(format!("fixture directory {} does not exist", dir.display())));
        }
        return Ok(Gateway::replay(FixtureStore::new(dir)));
    }
    let transport: Arc<dyn Transport> = if g.offline_stub {
        Arc::new(StubTransport::new())
    } else {
        let mut ep = ServiceEndpoints::load(g.services.as_deref()).map_err(CliError::validation)?;
        ep.apply_env(|k| std::env::var(k).ok());
        Arc::new(HttpTransport::new(ep, SERVICE_TIMEOUT))
    };
    let mode = match &g.record {
        Some(dir) => GatewayMode::Record(FixtureStore::new(dir)),
        None => GatewayMode::Live,
    };
    Ok(Gateway::new(transport, mode))
}

fn read_config(path: Option<&Path>, seed: Option<u64>) -> Result<PipelineConfig, CliError> {
    let mut config: PipelineConfig = match path {
        Some(p) => {
            let bytes = std::fs::read(p).map_err(|e| CliError::validation(format!("{}: {e}", p.display())))?;
            serde_json::from_slice(&bytes).map_err(|e| CliError::validation(format!("{}: {e}", p.display())))?
        }
        None => PipelineConfig::default(),
    };
    if let Some(s) = seed {
        config.seed = s;
    }
    config.validate().map_err(CliError::validation)?;
    Ok(config)
}

fn print_json(v: &impl serde::Serialize) {
    let mut out = std::io::stdout().lock();
    let _ = serde_json::to_writer_pretty(&mut out, v);
    let _ = writeln!(out);
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let decoder: Arc<dyn Decoder> = Arc::new(AutoDecoder::from_env());
    match cli.command {
        Command::Rawdec { .. } => unreachable!("handled before parsing the rest"),
        Command::Analyze { input, config, out } => {
            let config = read_config(config.as_deref(), cli.global.seed)?;
            let env = PipelineEnv::new(decoder, Arc::new(build_gateway(&cli.global)?));
            let ws = Workspace::new(out);
            let (_, report) = pipeline::run(&input, &config, &env, &ws).map_err(|f| CliError::from(f.error))?;
            print_json(&report);
        }
        Command::Render { project, sink } => {
            let p = load_project(&project).map_err(CliError::validation)?;
            let ws = Workspace::new(&project);
            let stats = pipeline::render_project(&p, &ws, decoder, &parse_sink(&sink))?;
            print_json(&stats);
        }
        Command::Suggest { project, level } => {
            let mut p = load_project(&project).map_err(CliError::validation)?;
            let env = PipelineEnv::new(decoder, Arc::new(build_gateway(&cli.global)?));
            let ws = Workspace::new(&project);
            let out = pipeline::suggest(&mut p, level, &env, &ws)?;
            if level == SuggestionLevel::Proactive {
                save_project(&p, &project).map_err(CliError::validation)?;
            }
            print_json(&out);
        }
        Command::Serve { port, workspace } => {
            let gateway = Arc::new(build_gateway(&cli.global)?);
            let store = ProjectStore::new(&workspace).map_err(CliError::validation)?;
            let state = Arc::new(AppState::new(store, decoder, gateway).with_seed(cli.global.seed));
            serve(state, port.unwrap_or(DEFAULT_PORT)).map_err(CliError::service)?;
        }
    }
    Ok(())
}

fn serve(state: Arc<AppState>, port: u16) -> std::io::Result<()> {
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(("127.0.0.1", port)).await?;
        tracing::info!(addr = %listener.local_addr()?, "listening");
        eprintln!("mangaroll listening on http://{}", listener.local_addr()?);
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
    })
}

/// Runs the CLI and returns the process exit code.
pub fn main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    if args.get(1).is_some_and(|a| a == "rawdec") {
        let rest: Vec<String> = args[2..].iter().map(|a| a.to_string_lossy().into_owned()).collect();
        return mangaroll::media::rawvideo::pipe_decoder_main(
            &rest,
            &mut std::io::stdout().lock(),
            &mut std::io::stderr().lock(),
        );
    }
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    let _ = tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_env("MANGAROLL_LOG"))
        .with_writer(std::io::stderr)
        .try_init();
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}
