//! `cbase`: build, restructure, query and inspect a concept base stored
//! in a snapshot file.
//!
//! Exit codes: 0 success, 1 user error, 2 corrupt or invalid state.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use concept_base::{
    dot, extract_sequences_for, query, reorder, snapshot, BaseConfig, ConceptBase, IngestClock,
    OrderingLexicon, RestructureReport, SnapshotError, StopWords, TreeId,
};

#[derive(Parser)]
#[command(name = "cbase", version, about = "Concept base: dynamic concept trees over text sequences")]
struct Cli {
    /// Snapshot file holding the concept base
    #[arg(long, global = true)]
    db: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Feed text into the base and run the restructuring scans
    Ingest(IngestArgs),
    /// Traverse, run a conjunctive query, or compute a confidence value
    Query(QueryArgs),
    /// Print aggregate structure numbers as `key = value` lines
    Stats,
    /// Write the snapshot text, or Graphviz DOT with --dot
    Dump {
        /// Render Graphviz DOT instead of the snapshot text
        #[arg(long)]
        dot: bool,
    },
    /// Try to re-join tree t2 into tree t1
    Rejoin {
        #[arg(long)]
        t1: u64,
        #[arg(long)]
        t2: u64,
    },
    /// Advance link decay by N ticks
    Decay {
        #[arg(long, default_value_t = 1)]
        ticks: u64,
    },
    /// Check every tree invariant and the referential integrity
    Validate,
}

#[derive(Args)]
struct IngestArgs {
    /// Read the document from a file
    #[arg(long, conflicts_with = "stdin")]
    file: Option<PathBuf>,
    /// Read the document from standard input
    #[arg(long)]
    stdin: bool,
    /// Entity the ingested sequences belong to
    #[arg(long)]
    entity: Option<String>,
    /// Stop-word file (one word per line, `#` comments); default list used otherwise
    #[arg(long)]
    stopwords: Option<PathBuf>,
    /// Weight lexicon (`word<TAB>integer` lines) applied before adding
    #[arg(long)]
    reorder_lexicon: Option<PathBuf>,
    /// Scan thresholds (`key = value` lines), applied when creating a new base
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct QueryArgs {
    /// Entity whose keyset gates the traversal
    #[arg(long)]
    entity: Option<String>,
    /// Comma-separated labels that must all be reachable
    #[arg(long)]
    all: Option<String>,
    /// `<comma path>:<candidate>`: share of traversals continuing there
    #[arg(long)]
    confidence: Option<String>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap routes --help and --version through the error path
            if e.use_stderr() {
                eprint!("{}", e);
                return ExitCode::from(1);
            }
            print!("{}", e);
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {:#}", e);
            let corrupt = e.downcast_ref::<SnapshotError>().is_some();
            ExitCode::from(if corrupt { 2 } else { 1 })
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let db = cli.db.ok_or_else(|| anyhow!("--db <file> is required"))?;
    match cli.command {
        Command::Ingest(args) => {
            let _lock = Lock::acquire(&db)?;
            let mut base = load_or_create(&db, args.config.as_deref())?;
            let report = ingest_document(&mut base, &args)?;
            save_to(&base, &db)?;
            print!("{}", report);
            Ok(ExitCode::SUCCESS)
        }
        Command::Query(args) => run_query(&db, args),
        Command::Stats => {
            let base = load_existing(&db)?;
            print!("{}", concept_base::stats(&base).render());
            Ok(ExitCode::SUCCESS)
        }
        Command::Dump { dot: as_dot } => {
            let base = load_existing(&db)?;
            if as_dot {
                print!("{}", dot::render(&base));
            } else {
                let mut out = Vec::new();
                snapshot::save(&base, &mut out)?;
                std::io::stdout().write_all(&out)?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Rejoin { t1, t2 } => {
            let _lock = Lock::acquire(&db)?;
            let mut base = load_existing(&db)?;
            let report = base.try_rejoin(TreeId(t1), TreeId(t2))?;
            save_to(&base, &db)?;
            print!("{}", report);
            Ok(ExitCode::SUCCESS)
        }
        Command::Decay { ticks } => {
            let _lock = Lock::acquire(&db)?;
            let mut base = load_existing(&db)?;
            let mut report = RestructureReport::default();
            for _ in 0..ticks {
                report.merge(base.decay_tick());
            }
            save_to(&base, &db)?;
            print!("{}", report);
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate => {
            let base = load_existing(&db)?;
            let violations = base.violations();
            let issues = base.integrity_issues();
            if violations.is_empty() && issues.is_empty() {
                println!("ok");
                return Ok(ExitCode::SUCCESS);
            }
            for (id, v) in &violations {
                println!("tree {}: {}", id, v);
            }
            for issue in &issues {
                println!("{}", issue);
            }
            Ok(ExitCode::from(2))
        }
    }
}

fn ingest_document(base: &mut ConceptBase, args: &IngestArgs) -> Result<RestructureReport> {
    let text = match (&args.file, args.stdin) {
        (Some(path), false) => {
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?
        }
        (None, true) => {
            let mut text = String::new();
            std::io::stdin().read_to_string(&mut text).context("reading stdin")?;
            text
        }
        _ => bail!("ingest needs exactly one of --file or --stdin"),
    };
    let stopwords = match &args.stopwords {
        Some(path) => {
            let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            StopWords::from_reader(BufReader::new(file))?
        }
        None => StopWords::default(),
    };
    let lexicon = match &args.reorder_lexicon {
        Some(path) => {
            let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            Some(OrderingLexicon::from_reader(BufReader::new(file))?)
        }
        None => None,
    };
    let first_tick = if base.ledger().is_empty() { 0 } else { base.clock() + 1 };
    let mut clock = IngestClock::starting_at(first_tick);
    let events = extract_sequences_for(&text, &stopwords, &mut clock, args.entity.as_deref());
    if events.is_empty() {
        bail!("no sequences left after filtering");
    }
    let mut report = RestructureReport::default();
    let count = events.len();
    for event in events {
        let event = match &lexicon {
            Some(lexicon) => reorder(&event, lexicon),
            None => event,
        };
        report.merge(base.ingest(event)?);
    }
    if !base.config().eager_scans {
        report.merge(base.run_scans());
    }
    println!("ingested {} sequences", count);
    Ok(report)
}

fn run_query(db: &Path, args: QueryArgs) -> Result<ExitCode> {
    let base = load_existing(db)?;
    if let Some(spec) = &args.confidence {
        let (path, candidate) = spec
            .rsplit_once(':')
            .ok_or_else(|| anyhow!("--confidence wants `<comma path>:<candidate>`"))?;
        let path: Vec<String> = path.split(',').map(|s| s.trim().to_string()).collect();
        let value = query::concept_confidence(&base, &path, candidate.trim())?;
        println!("{:?}", value);
        return Ok(ExitCode::SUCCESS);
    }
    if let Some(required) = &args.all {
        let required: BTreeSet<String> =
            required.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
        let entities: Vec<String> = match &args.entity {
            Some(e) => vec![e.clone()],
            None => base.link_index().keysets().map(|ks| ks.primary.clone()).collect(),
        };
        let mut any = false;
        for entity in entities {
            let result = query::query_all(&base, &entity, &required)?;
            if result.paths.is_empty() {
                continue;
            }
            any = true;
            for path in &result.paths {
                println!("{}\t{}", entity, path.join("/"));
            }
        }
        if !any {
            println!("no grouping satisfies the query");
        }
        return Ok(ExitCode::SUCCESS);
    }
    let entity = args.entity.ok_or_else(|| anyhow!("query needs --entity, --all or --confidence"))?;
    let _lock = Lock::acquire(db)?;
    let mut base = base;
    let (result, used) = query::traverse_with_trace(&base, &entity);
    for path in &result.paths {
        println!("{}", path.join("/"));
    }
    if result.paths.is_empty() {
        println!("no reachable paths");
    }
    // traversal refreshes the strength of the links it crossed
    if !used.is_empty() {
        base.touch_links(&used);
        save_to(&base, db)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn load_or_create(db: &Path, config: Option<&Path>) -> Result<ConceptBase> {
    if db.exists() {
        return load_existing(db);
    }
    let config = match config {
        Some(path) => {
            let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            BaseConfig::from_reader(BufReader::new(file))?
        }
        None => BaseConfig::default(),
    };
    Ok(ConceptBase::new(config))
}

fn load_existing(db: &Path) -> Result<ConceptBase> {
    let file = File::open(db).with_context(|| format!("opening {}", db.display()))?;
    let base = snapshot::load(BufReader::new(file))?;
    Ok(base)
}

fn save_to(base: &ConceptBase, db: &Path) -> Result<()> {
    let tmp = db.with_extension("cb.tmp");
    let mut file = File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
    snapshot::save(base, &mut file)?;
    file.sync_all().ok();
    fs::rename(&tmp, db).with_context(|| format!("replacing {}", db.display()))?;
    Ok(())
}

/// Advisory lock excluding concurrent invocations on one snapshot.
struct Lock {
    path: PathBuf,
}

impl Lock {
    fn acquire(db: &Path) -> Result<Lock> {
        let path = db.with_extension("cb.lock");
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Lock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                bail!("{} is locked by another invocation (remove it if stale)", path.display())
            }
            Err(e) => Err(e).with_context(|| format!("creating {}", path.display())),
        }
    }
}

impl Drop for Lock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}
