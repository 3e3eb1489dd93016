//! The `teamup` command line.

pub mod config;
pub mod pipeline;

use std::ffi::OsString;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use teamup_core::{run_experiment, EmbedError, Policy, ProviderKind, SimError};
use teamup_service::{AppState, EngineSettings, ServiceConfig, SystemClock};
use thiserror::Error;

pub use config::{CliConfig, CONFIG_HELP};
pub use pipeline::{CohortFile, OutDir};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("no cohort at {0}; run `teamup generate` first")]
    MissingCohort(PathBuf),
    #[error("no allocation at {0}; run `teamup allocate` first")]
    MissingAllocation(PathBuf),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {message}")]
    Write { path: PathBuf, message: String },
    #[error("service: {0}")]
    Service(String),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "Usage",
            CliError::Config(_) => "InvalidConfig",
            CliError::MissingCohort(_) => "MissingCohort",
            CliError::MissingAllocation(_) => "MissingAllocation",
            CliError::Sim(_) => "Simulation",
            CliError::Embed(_) => "Embedding",
            CliError::Json { .. } => "Json",
            CliError::Write { .. } => "Io",
            CliError::Service(_) => "Service",
        }
    }

    /// 2 for usage and config problems, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "teamup",
    version,
    about = "Semantic project matching and team formation",
    after_help = CONFIG_HELP
)]
pub struct Cli {
    /// TOML config file (see CONFIG FILE below)
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Generator seed for `generate`/`experiment`; random-arm seed for `allocate`
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory for all artifacts
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    /// Recommendations per student (ranking.k_default)
    #[arg(long, global = true)]
    pub k: Option<usize>,
    /// Embedding provider (provider.kind)
    #[arg(long, global = true, value_enum)]
    pub provider: Option<ProviderArg>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProviderArg {
    Offline,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    Random,
    Teamup,
    Both,
}

impl PolicyArg {
    /// TeamUp first, matching report row order.
    pub fn policies(self) -> Vec<Policy> {
        match self {
            PolicyArg::Random => vec![Policy::Random],
            PolicyArg::Teamup => vec![Policy::Teamup],
            PolicyArg::Both => vec![Policy::Teamup, Policy::Random],
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate and embed a synthetic cohort into cohort.json
    Generate,
    /// Allocate the cohort into allocation_<policy>.json
    Allocate {
        #[arg(long, value_enum, default_value = "both")]
        policy: PolicyArg,
    },
    /// Score allocations into report.json and report.csv
    Evaluate {
        #[arg(long, value_enum, default_value = "both")]
        policy: PolicyArg,
    },
    /// generate + allocate both + evaluate + export, plus timings.json
    Experiment,
    /// Write allocations.csv (one row per assigned student)
    Export {
        #[arg(long, value_enum, default_value = "both")]
        policy: PolicyArg,
    },
    /// Run the HTTP service; imports cohort.json into an empty store
    Serve {
        #[arg(long)]
        serve_port: Option<u16>,
    },
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error[{}]: {e}", e.kind());
            e.exit_code()
        }
    }
}

fn effective_config(cli: &Cli) -> Result<CliConfig, CliError> {
    let mut cfg = CliConfig::load(cli.config.as_deref())?;
    if let Some(k) = cli.k {
        if k == 0 {
            return Err(CliError::Usage("--k must be at least 1".into()));
        }
        cfg.engine.ranking.k_default = k;
    }
    if let Some(p) = cli.provider {
        cfg.engine.provider.kind = match p {
            ProviderArg::Offline => ProviderKind::Offline,
            ProviderArg::Remote => ProviderKind::Remote,
        };
    }
    Ok(cfg)
}

/// Runs the parsed command and returns the paths it wrote.
pub fn execute(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let mut cfg = effective_config(cli)?;
    let out = OutDir(cli.out.clone());
    match &cli.command {
        Command::Generate => {
            if let Some(seed) = cli.seed {
                cfg.engine.generator.seed = seed;
            }
            let provider = cfg.engine.provider.build()?;
            eprintln!(
                "generating {} students / {} projects (seed {})",
                cfg.engine.generator.n_students, cfg.engine.generator.n_projects, cfg.engine.generator.seed
            );
            let file = pipeline::generate(&cfg.engine, provider.as_ref())?;
            pipeline::write_json(&out.cohort(), &file)?;
            Ok(vec![out.cohort()])
        }
        Command::Allocate { policy } => {
            let file = pipeline::load_cohort(&out)?;
            let mut written = Vec::new();
            for p in policy.policies() {
                eprintln!("allocating with {p}");
                let alloc = pipeline::allocate(&cfg.engine, &file, p, cli.seed)?;
                pipeline::write_json(&out.allocation(p), &alloc)?;
                written.push(out.allocation(p));
            }
            Ok(written)
        }
        Command::Evaluate { policy } => {
            let file = pipeline::load_cohort(&out)?;
            let allocations = policy
                .policies()
                .into_iter()
                .map(|p| pipeline::load_allocation(&out, p))
                .collect::<Result<Vec<_>, _>>()?;
            let report = pipeline::report(&file, &allocations)?;
            pipeline::write_text(&out.report_json(), &report.to_json_string()?)?;
            pipeline::write_text(&out.report_csv(), &report.to_csv_string()?)?;
            print_summary(&report);
            Ok(vec![out.report_json(), out.report_csv()])
        }
        Command::Export { policy } => {
            let file = pipeline::load_cohort(&out)?;
            let allocations = policy
                .policies()
                .into_iter()
                .map(|p| pipeline::load_allocation(&out, p))
                .collect::<Result<Vec<_>, _>>()?;
            pipeline::write_text(&out.allocations_csv(), &pipeline::export(&file, &allocations)?)?;
            Ok(vec![out.allocations_csv()])
        }
        Command::Experiment => {
            if let Some(seed) = cli.seed {
                cfg.engine.generator.seed = seed;
            }
            let provider = cfg.engine.provider.build()?;
            eprintln!(
                "experiment: {} students / {} projects, seed {}",
                cfg.engine.generator.n_students, cfg.engine.generator.n_projects, cfg.engine.generator.seed
            );
            let run = run_experiment(&cfg.engine.experiment(), provider.as_ref())?;
            let file = CohortFile {
                seed: run.report.seed,
                texts_embedded: run.report.texts_embedded,
                estimated_embedding_cost_usd: run
                    .report
                    .policy(Policy::Teamup)
                    .map_or(0.0, |p| p.estimated_embedding_cost_usd),
                cohort: run.cohort.clone(),
            };
            pipeline::write_json(&out.cohort(), &file)?;
            let mut written = vec![out.cohort()];
            for a in &run.allocations {
                pipeline::write_json(&out.allocation(a.policy), a)?;
                written.push(out.allocation(a.policy));
            }
            pipeline::write_text(&out.report_json(), &run.report.to_json_string()?)?;
            pipeline::write_text(&out.report_csv(), &run.report.to_csv_string()?)?;
            pipeline::write_text(&out.allocations_csv(), &pipeline::export(&file, &run.allocations)?)?;
            pipeline::write_json(&out.timings(), &run.timings)?;
            written.extend([out.report_json(), out.report_csv(), out.allocations_csv(), out.timings()]);
            print_summary(&run.report);
            eprintln!("total runtime {:.3}s", run.timings.total_runtime_seconds);
            Ok(written)
        }
        Command::Serve { serve_port } => serve(cfg, &out, *serve_port),
    }
}

fn print_summary(report: &teamup_core::ExperimentReport) {
    eprintln!(
        "{:<8} {:>10} {:>12} {:>10} {:>12}",
        "policy", "similarity", "within-1 %", "distance", "3+ areas %"
    );
    for p in &report.policies {
        let m = &p.metrics;
        eprintln!(
            "{:<8} {:>10.4} {:>12.1} {:>10.4} {:>12.1}",
            m.policy.as_str(),
            m.mean_match_similarity,
            m.within_one_level_pct,
            m.mean_pairwise_distance,
            m.teams_covering_3plus_areas_pct
        );
    }
}

fn serve(cfg: CliConfig, out: &OutDir, port: Option<u16>) -> Result<Vec<PathBuf>, CliError> {
    let mut service: ServiceConfig = cfg.service.clone();
    if let Some(p) = port {
        service.port = p;
    }
    if service.store_path.is_none() {
        service.store_path = Some(out.store());
    }
    let addr: SocketAddr = format!("{}:{}", service.host, service.port)
        .parse()
        .map_err(|e| CliError::Usage(format!("bad listen address: {e}")))?;
    if let Some(dir) = service.store_path.as_ref().and_then(|p| p.parent()) {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| CliError::Write {
                path: dir.to_path_buf(),
                message: e.to_string(),
            })?;
        }
    }
    let _ = tracing_subscriber::fmt().with_writer(std::io::stderr).try_init();

    let engine = EngineSettings {
        taxonomy: cfg.engine.generator.taxonomy.clone(),
        ranking: cfg.engine.ranking.clone(),
        complementarity: cfg.engine.complementarity.clone(),
        backend: cfg.engine.index.backend(),
    };
    let provider = cfg.engine.provider.build()?;
    let state = AppState::new(service, engine, Arc::from(provider), Arc::new(SystemClock))
        .map_err(|e| CliError::Service(e.to_string()))?;
    if state.view().cohort.students.is_empty() {
        if let Some(file) = pipeline::read_json::<CohortFile>(&out.cohort())? {
            eprintln!("importing {}", out.cohort().display());
            state
                .import_cohort(&file.cohort)
                .map_err(|e| CliError::Service(e.body.message))?;
        }
    }
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Service(e.to_string()))?;
    eprintln!("listening on http://{addr}");
    runtime
        .block_on(teamup_service::serve(Arc::new(state), addr))
        .map_err(|e| CliError::Service(e.to_string()))?;
    Ok(Vec::new())
}
