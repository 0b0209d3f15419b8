use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use profile::data;
use profile::extract::{extract_descriptions, run_pipeline};
use profile::fd::{self, Fd};
use profile::lexdb::LexDb;
use profile::service::{self, ServiceConfig};
use profile::store::{self, Observation, ProfileStore};
use profile::text::{self, Tagger};

const DEFAULT_CONFIG: &str = "profile.toml";

#[derive(Parser)]
#[command(name = "profile", version, about = "Entity descriptions from tagged news text")]
struct Cli {
    /// Service/store config file (default ./profile.toml when present).
    #[arg(long, global = true, env = "PROFILE_CONFIG")]
    config: Option<PathBuf>,
    /// Profile store directory (overrides the config file).
    #[arg(long, global = true, env = "PROFILE_STORE")]
    store: Option<PathBuf>,
    /// Worker threads for per-document extraction.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tag plain text from stdin; one sentence per output line.
    Tag,
    /// Two/three-word entity candidates before and after weeding.
    Entities {
        #[arg(long)]
        corpus: PathBuf,
        /// Also list surviving entities with their counts.
        #[arg(long)]
        list: bool,
        #[arg(long, default_value = "local")]
        source: String,
    },
    /// Description records for one entity.
    Describe {
        #[arg(long)]
        entity: String,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "local")]
        source: String,
    },
    /// Run the full pipeline over a corpus and store the results.
    Ingest {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "local")]
        source: String,
    },
    /// Store access.
    Profile {
        #[command(subcommand)]
        action: ProfileAction,
    },
    /// Functional descriptions.
    Fd {
        #[command(subcommand)]
        action: FdAction,
    },
    /// Run the HTTP service.
    Serve,
}

#[derive(Subcommand)]
enum ProfileAction {
    /// Ranked entries, one per line: frequency, description, categories.
    Show {
        #[arg(long)]
        key: String,
        #[arg(long = "category")]
        categories: Vec<String>,
        #[arg(long)]
        max: Option<usize>,
    },
    Export {
        #[arg(long)]
        key: String,
        #[arg(long, value_enum, default_value_t = ExportFormat::Text)]
        format: ExportFormat,
    },
    /// Read a KEY/SOURCE block from stdin (or --file) into the store.
    Import {
        #[arg(long)]
        file: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ExportFormat {
    /// KEY/SOURCE/DESCRIPTION/FREQUENCY block.
    #[value(alias = "fig3")]
    Text,
    Json,
}

#[derive(Subcommand)]
enum FdAction {
    /// FD for the best stored description of a key.
    Compile {
        #[arg(long)]
        key: String,
        /// Prefer descriptions of this category.
        #[arg(long)]
        category: Option<String>,
    },
    /// Realize FDs from stdin (or a file), one sentence per FD.
    Realize { file: Option<PathBuf> },
    /// Aggregate two title + name FDs.
    Aggregate(AggregateArgs),
}

#[derive(Args)]
struct AggregateArgs {
    a: PathBuf,
    b: PathBuf,
    /// Print the realized string instead of the FD.
    #[arg(long)]
    realize: bool,
}

enum Failure {
    Domain(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Domain(_) => 1,
            Failure::Io(_) => 3,
        }
    }
}

fn domain(e: impl ToString) -> Failure {
    Failure::Domain(e.to_string())
}

fn io_err(e: impl ToString) -> Failure {
    Failure::Io(e.to_string())
}

fn read_input(file: Option<&Path>) -> Result<String, Failure> {
    match file {
        Some(p) => std::fs::read_to_string(p).map_err(|e| io_err(format!("{}: {e}", p.display()))),
        None => {
            let mut s = String::new();
            io::stdin().read_to_string(&mut s).map_err(io_err)?;
            Ok(s)
        }
    }
}

fn load_config(cli: &Cli) -> Result<ServiceConfig, Failure> {
    let path = match &cli.config {
        Some(p) => Some(p.as_path()),
        None => Some(Path::new(DEFAULT_CONFIG)).filter(|p| p.exists()),
    };
    let config = match path {
        Some(p) => ServiceConfig::load(p).map_err(|e| match e {
            service::ConfigError::Io(..) => io_err(e),
            other => domain(other),
        })?,
        None => ServiceConfig::default(),
    };
    let mut config = config.with_env_overrides();
    if let Some(store) = &cli.store {
        config.store = store.clone();
    }
    Ok(config)
}

fn open_store(cli: &Cli, lex: &LexDb) -> Result<ProfileStore, Failure> {
    let config = load_config(cli)?;
    ProfileStore::open(&config.store, lex.categories()).map_err(|e| match e {
        store::StoreError::Storage { .. } => io_err(e),
        other => domain(other),
    })
}

fn load_corpus(path: &Path, source: &str) -> Result<Vec<text::TaggedDoc>, Failure> {
    text::load_corpus(path, source, &Tagger::shipped()).map_err(|e| match e {
        text::CorpusError::Io(_) => io_err(format!("{}: {e}", path.display())),
        other => domain(other),
    })
}

fn run(cli: &Cli) -> Result<(), Failure> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .map_err(domain)?;
    }
    let mut out = io::stdout().lock();
    let mut emit = |s: &str| writeln!(out, "{s}").map_err(io_err);

    match &cli.command {
        Command::Tag => {
            let input = read_input(None)?;
            let tokens = Tagger::shipped().tag_text(&input).map_err(domain)?;
            for (a, b) in text::sentence_spans(&tokens) {
                emit(&text::render_tagged(&tokens[a..b]))?;
            }
        }
        Command::Entities { corpus, list, source } => {
            let docs = load_corpus(corpus, source)?;
            let cands = profile::extract::extract_candidates(&docs);
            let kept = profile::extract::weed_candidates(&cands, &LexDb::shipped());
            let report = profile::extract::CandidateReport::new(&cands, &kept);
            emit(report.to_string().trim_end())?;
            if *list {
                for c in &kept {
                    emit(&format!("{}\t{}", c.words.join(" "), c.occurrences))?;
                }
            }
        }
        Command::Describe { entity, corpus, source } => {
            let docs = load_corpus(corpus, source)?;
            let words = text::tokenize(entity);
            if words.is_empty() {
                return Err(domain("empty entity"));
            }
            let found = extract_descriptions(&words, &docs, data::noun_phrase_grammar()).map_err(domain)?;
            if found.is_empty() {
                return Err(domain(format!("no descriptions for {entity:?}")));
            }
            for d in &found {
                emit(&d.to_record())?;
            }
        }
        Command::Ingest { corpus, source } => {
            let lex = LexDb::shipped();
            let docs = load_corpus(corpus, source)?;
            let output = run_pipeline(&docs, &lex, data::noun_phrase_grammar()).map_err(domain)?;
            let mut store = open_store(cli, &lex)?;
            let observations: Vec<Observation> = output.descriptions.iter().map(Observation::from).collect();
            let n = observations.len();
            store.upsert_batch(observations).map_err(io_err)?;
            store.commit().map_err(io_err)?;
            emit(output.report.to_string().trim_end())?;
            emit(&format!("descriptions\t{n}"))?;
        }
        Command::Profile { action } => {
            let lex = LexDb::shipped();
            let mut store = open_store(cli, &lex)?;
            match action {
                ProfileAction::Show { key, categories, max } => {
                    let filter = (!categories.is_empty()).then_some(categories.as_slice());
                    if store.get(key).is_none() {
                        return Err(domain(format!("no profile for {key:?}")));
                    }
                    for e in store.query(key, filter, *max).map_err(domain)? {
                        let cats: Vec<&str> = e.categories.iter().map(|c| c.category.as_str()).collect();
                        emit(&format!("{}\t{}\t{}", e.frequency, e.surface, cats.join(",")))?;
                    }
                }
                ProfileAction::Export { key, format } => {
                    let p = store.get(key).ok_or_else(|| domain(format!("no profile for {key:?}")))?;
                    match format {
                        ExportFormat::Text => write!(out, "{}", store::export_profile(p)).map_err(io_err)?,
                        ExportFormat::Json => {
                            emit(&serde_json::to_string_pretty(p).map_err(domain)?)?;
                        }
                    }
                }
                ProfileAction::Import { file } => {
                    let block = read_input(file.as_deref())?;
                    let p = store::import_text(&block).map_err(domain)?;
                    let key = p.key.clone();
                    store.put_profile(p).map_err(io_err)?;
                    store.commit().map_err(io_err)?;
                    tracing::info!(key, "imported");
                }
            }
        }
        Command::Fd { action } => match action {
            FdAction::Compile { key, category } => {
                let lex = LexDb::shipped();
                let store = open_store(cli, &lex)?;
                let p = store.get(key).ok_or_else(|| domain(format!("no profile for {key:?}")))?;
                let entry = match category {
                    Some(c) => fd::select_by_category(&p.entries, c),
                    None => p.ranked().first().copied(),
                }
                .ok_or_else(|| domain(format!("profile {key:?} has no entries")))?;
                let compiled = fd::compile_entry(entry, &p.entity_tokens()).map_err(domain)?;
                emit(&compiled.pretty())?;
            }
            FdAction::Realize { file } => {
                let input = read_input(file.as_deref())?;
                let fds = fd::parse_fd_blocks(&input).map_err(domain)?;
                if fds.is_empty() {
                    return Err(domain("no FD in input"));
                }
                for f in &fds {
                    emit(&fd::realize(f).map_err(domain)?)?;
                }
            }
            FdAction::Aggregate(args) => {
                let read_fd = |p: &Path| -> Result<Fd, Failure> { fd::parse_fd(&read_input(Some(p))?).map_err(domain) };
                let merged = fd::aggregate(&read_fd(&args.a)?, &read_fd(&args.b)?).map_err(domain)?;
                if args.realize {
                    emit(&fd::realize(&merged).map_err(domain)?)?;
                } else {
                    emit(&merged.pretty())?;
                }
            }
        },
        Command::Serve => {
            let config = load_config(cli)?;
            let runtime = tokio::runtime::Runtime::new().map_err(io_err)?;
            runtime.block_on(async {
                let handle = service::serve(config).await.map_err(|e| match e {
                    service::ServiceError::Bind { .. } | service::ServiceError::Store(_) => io_err(e),
                    other => domain(other),
                })?;
                eprintln!("listening on {}", handle.local_addr());
                shutdown_signal().await.map_err(io_err)?;
                handle.shutdown().await.map_err(io_err)
            })?;
        }
    }
    Ok(())
}

#[cfg(unix)]
async fn shutdown_signal() -> io::Result<()> {
    let mut term = tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate())?;
    tokio::select! {
        r = tokio::signal::ctrl_c() => r,
        _ = term.recv() => Ok(()),
    }
}

#[cfg(not(unix))]
async fn shutdown_signal() -> io::Result<()> {
    tokio::signal::ctrl_c().await
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(io::stderr)
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Domain(m) | Failure::Io(m)) = &f;
            eprintln!("profile: {m}");
            ExitCode::from(f.code())
        }
    }
}
