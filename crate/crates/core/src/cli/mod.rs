//! Command-line front end.
//!
//! Commands act on an embedded store (`--store`, or `MESHDEX_STORE`) unless
//! `--remote <url>` points them at a running service. Exit codes: 0 success,
//! 1 user error (bad flags, unreadable input, unknown id), 2 internal error.
//! Setting `MESHDEX_NOW` (Unix seconds) pins the clock used for history and
//! freshness timestamps.

mod remote;

use std::ffi::OsString;
use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

pub use remote::RemoteClient;

use crate::analysis::{
    aligned_torus_grid, facet_perimeters, fit_gamma, gen_support_lattice, gen_ttd, marching_cubes,
    torus_field, AnalysisError, BinPolicy, GammaFit, Histogram, TtdSpec,
};
use crate::api::{
    self, ApiConfig, DeleteResponse, ModelResponse, RelatedEntry, RelatedResponse, SearchResponse,
};
use crate::catalog::{
    parse_model, Catalog, CatalogError, CatalogStats, Clock, FormatHint, IngestStatus, SourceMeta,
};
use crate::index::InvertedIndex;
use crate::mesh::{write_stl_ascii, TriangleMesh};
use crate::search::{Filters, SearchMode, SearchQuery};
use crate::words::Vocabulary;
use crate::ModelId;

/// Environment variable naming the store directory.
pub const STORE_ENV: &str = "MESHDEX_STORE";
/// Environment variable pinning "now" (Unix seconds).
pub const NOW_ENV: &str = "MESHDEX_NOW";

#[derive(Debug)]
pub enum CliError {
    User(String),
    Internal(String),
    /// The reader of stdout went away; not worth reporting.
    Closed,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::User(_) => 1,
            CliError::Internal(_) => 2,
            CliError::Closed => 0,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::User(m) | CliError::Internal(m) => m,
            CliError::Closed => "output closed",
        }
    }
}

impl From<CatalogError> for CliError {
    fn from(e: CatalogError) -> Self {
        let msg = format!("{} ({})", e, e.code());
        if e.is_user_error() {
            CliError::User(msg)
        } else {
            CliError::Internal(msg)
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::GenerationFailed(_) => CliError::Internal(e.to_string()),
            _ => CliError::User(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            return CliError::Closed;
        }
        CliError::Internal(format!("i/o error: {e}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Human,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GeoMode {
    Similar,
    Pip,
}

#[derive(Debug, Parser)]
#[command(
    name = "meshdex",
    version,
    about = "Bag-of-geometric-words search over triangle meshes"
)]
pub struct Cli {
    /// Store directory.
    #[arg(long, env = STORE_ENV, default_value = ".meshdex", global = true)]
    pub store: PathBuf,
    /// Output format.
    #[arg(long, value_enum, default_value_t = OutputFormat::Human, global = true)]
    pub format: OutputFormat,
    /// Base URL of a running service to use instead of the local store.
    #[arg(long, global = true)]
    pub remote: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default)]
pub struct FilterArgs {
    #[arg(long)]
    pub watertight: Option<bool>,
    /// Require (or exclude) consistently oriented normals.
    #[arg(long)]
    pub normals: Option<bool>,
    /// File type label or family, e.g. `stl` or `stl-binary`.
    #[arg(long)]
    pub filetype: Option<String>,
    /// Source domain.
    #[arg(long)]
    pub source: Option<String>,
}

impl FilterArgs {
    fn filters(&self) -> Filters {
        Filters {
            watertight: self.watertight,
            consistent_normals: self.normals,
            filetype: self.filetype.clone(),
            source: self.source.clone(),
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Add mesh files to the catalog.
    Ingest {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        /// Source domain the files came from.
        #[arg(long)]
        source: String,
        /// Crawl URL (marks the models as external).
        #[arg(long)]
        url: Option<String>,
        #[arg(long)]
        name: Option<String>,
        #[arg(long, default_value = "")]
        description: String,
        /// Comma-separated tags.
        #[arg(long, default_value = "")]
        tags: String,
    },
    /// Geometric search with a query mesh.
    Search {
        #[arg(long)]
        query: PathBuf,
        #[arg(long, value_enum, default_value_t = GeoMode::Similar)]
        mode: GeoMode,
        #[arg(short = 'k', default_value_t = 10)]
        k: usize,
        #[command(flatten)]
        filters: FilterArgs,
    },
    /// Metadata text search.
    Text {
        #[arg(short = 'q', long = "query")]
        q: String,
        #[arg(short = 'k', default_value_t = 10)]
        k: usize,
        #[command(flatten)]
        filters: FilterArgs,
    },
    /// Take a model down.
    Delete { id: String },
    /// Show a model record and its versions.
    Show { id: String },
    /// Models most similar to a catalog model.
    Related {
        id: String,
        #[arg(short = 'k', default_value_t = 10)]
        k: usize,
    },
    /// Corpus statistics and diagnostics.
    Stats(StatsArgs),
    /// Source domains due for a recrawl.
    Recrawl {
        /// Evaluate at this time (Unix seconds) instead of now.
        #[arg(long)]
        at: Option<u64>,
    },
    /// Synthetic data generators.
    #[command(subcommand)]
    Gen(GenCommand),
    /// Index file maintenance.
    #[command(subcommand)]
    Index(IndexCommand),
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: IpAddr,
        #[arg(long, default_value_t = 64 << 20)]
        max_upload_bytes: usize,
    },
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Histogram of facet perimeters.
    #[arg(long)]
    pub perimeter_histogram: bool,
    /// Fit a gamma distribution to facet perimeters.
    #[arg(long)]
    pub fit_gamma: bool,
    #[arg(long, default_value_t = 40)]
    pub bins: usize,
    /// Logarithmic bins.
    #[arg(long)]
    pub log: bool,
    #[arg(long)]
    pub min: Option<f64>,
    #[arg(long)]
    pub max: Option<f64>,
    /// Write the histogram as SVG (with the fitted density, if any).
    #[arg(long)]
    pub svg: Option<PathBuf>,
    /// Write the histogram as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Mesh files to analyse instead of the catalog.
    #[arg(long, num_args = 1..)]
    pub input: Vec<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum GenCommand {
    /// Marching-cubes torus on a grid whose planes touch the surface.
    Torus {
        /// Major radius.
        #[arg(long = "R", default_value_t = 1.0)]
        major: f64,
        /// Minor radius.
        #[arg(long = "r", default_value_t = 0.25)]
        minor: f64,
        /// Grid cells across the torus.
        #[arg(long, default_value_t = 24)]
        res: usize,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Slab with a grid of thin support pillars.
    Support {
        #[arg(long)]
        pillars: usize,
        #[arg(long, value_delimiter = ',', num_args = 2, default_values_t = [4.0, 4.0])]
        footprint: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Labeled part-in-part dataset.
    Ttd {
        /// TOML spec; defaults are used when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum IndexCommand {
    /// Write the store's index to a file.
    Save { path: PathBuf },
    /// Verify an index file; `--replace` installs it into the store.
    Load {
        path: PathBuf,
        #[arg(long)]
        replace: bool,
    },
    /// Check catalog and index consistency.
    Audit,
    /// Mark words whose document frequency exceeds a fraction of the corpus.
    MarkGeneric {
        #[arg(long, default_value_t = 0.25)]
        threshold: f64,
    },
}

/// Parses `argv` (including the program name) and runs it, writing to the
/// process's stdout and stderr. Returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(args, &mut stdout.lock(), &mut stderr.lock())
}

/// [`run`] with explicit output streams.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    0
                }
                _ => {
                    let _ = write!(err, "{}", e.render());
                    1
                }
            };
        }
    };
    match execute(&cli, out) {
        Ok(()) | Err(CliError::Closed) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message());
            e.exit_code()
        }
    }
}

fn emit<T: Serialize>(
    out: &mut dyn Write,
    format: OutputFormat,
    value: &T,
    human: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
) -> Result<(), CliError> {
    match format {
        OutputFormat::Json => {
            let text = serde_json::to_string_pretty(value)
                .map_err(|e| CliError::Internal(e.to_string()))?;
            writeln!(out, "{text}")?;
        }
        OutputFormat::Human => human(out)?,
    }
    Ok(())
}

fn open_store(path: &Path) -> Result<Catalog, CliError> {
    let mut catalog = Catalog::open(path)?;
    if let Ok(now) = std::env::var(NOW_ENV) {
        let now: u64 = now
            .trim()
            .parse()
            .map_err(|_| CliError::User(format!("{NOW_ENV} must be Unix seconds, got {now:?}")))?;
        catalog.set_clock(Clock::fixed(now));
    }
    Ok(catalog)
}

fn read_input(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::User(format!("cannot read {}: {e}", path.display())))
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn hint_for(path: &Path) -> Result<Option<FormatHint>, CliError> {
    Ok(FormatHint::from_name(&file_name(path))?)
}

#[derive(Debug, Serialize)]
struct IngestLine {
    path: String,
    status: String,
    model_id: Option<ModelId>,
    error: Option<String>,
}

fn status_label(s: IngestStatus) -> &'static str {
    match s {
        IngestStatus::Created => "created",
        IngestStatus::Merged(crate::catalog::MatchKind::Exact) => "merged-exact",
        IngestStatus::Merged(crate::catalog::MatchKind::Geometric) => "merged-geometric",
        IngestStatus::Unchanged => "unchanged",
    }
}

fn print_results(out: &mut dyn Write, resp: &SearchResponse) -> std::io::Result<()> {
    if resp.results.is_empty() {
        return writeln!(out, "no results");
    }
    writeln!(out, "{:>4}  {:>14}  model", "rank", "score")?;
    for (i, r) in resp.results.iter().enumerate() {
        writeln!(out, "{:>4}  {:>14.12}  {}", i + 1, r.score, r.model_id)?;
    }
    Ok(())
}

fn execute(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let remote = cli.remote.as_deref().map(RemoteClient::new).transpose()?;
    let fmt = cli.format;
    match &cli.command {
        Command::Ingest {
            paths,
            source,
            url,
            name,
            description,
            tags,
        } => {
            let mut meta = SourceMeta::new(source.clone())
                .with_description(description.clone())
                .with_tags(tags.split(',').map(str::trim).filter(|t| !t.is_empty()));
            meta.url = url.clone();
            let mut lines = Vec::new();
            let mut worst: Option<CliError> = None;
            let mut catalog = match remote {
                Some(_) => None,
                None => Some(open_store(&cli.store)?),
            };
            for path in paths {
                let mut meta = meta.clone();
                meta.name = name.clone().unwrap_or_else(|| file_name(path));
                let result = read_input(path).and_then(|bytes| match (&remote, catalog.as_mut()) {
                    (Some(client), _) => client.ingest(bytes, &file_name(path), &meta),
                    (None, Some(cat)) => Ok(cat.ingest(&bytes, hint_for(path)?, &meta)?),
                    (None, None) => unreachable!(),
                });
                let line = match result {
                    Ok(o) => IngestLine {
                        path: path.display().to_string(),
                        status: status_label(o.status).into(),
                        model_id: Some(o.record.id),
                        error: None,
                    },
                    Err(e) => {
                        let line = IngestLine {
                            path: path.display().to_string(),
                            status: "error".into(),
                            model_id: None,
                            error: Some(e.message().to_string()),
                        };
                        if worst.as_ref().is_none_or(|w| w.exit_code() < e.exit_code()) {
                            worst = Some(e);
                        }
                        line
                    }
                };
                lines.push(line);
            }
            if let Some(cat) = catalog.as_mut() {
                cat.persist()?;
            }
            emit(out, fmt, &lines, |out| {
                for l in &lines {
                    match &l.model_id {
                        Some(id) => writeln!(out, "{id}\t{}\t{}", l.status, l.path)?,
                        None => writeln!(out, "-\terror\t{}", l.path)?,
                    }
                }
                Ok(())
            })?;
            match worst {
                Some(e) => Err(e),
                None => Ok(()),
            }
        }
        Command::Search {
            query,
            mode,
            k,
            filters,
        } => {
            let mode = match mode {
                GeoMode::Similar => SearchMode::Similar,
                GeoMode::Pip => SearchMode::Pip,
            };
            let bytes = read_input(query)?;
            let resp = match &remote {
                Some(client) => {
                    client.search(mode, bytes, &file_name(query), *k, &filters.filters())?
                }
                None => {
                    let catalog = open_store(&cli.store)?;
                    let bag = catalog.query_bag(&bytes, hint_for(query)?)?;
                    let q = SearchQuery {
                        mode,
                        ..SearchQuery::similar(bag, *k)
                    }
                    .with_filters(filters.filters());
                    SearchResponse {
                        mode,
                        k: *k,
                        results: catalog.search(&q).map_err(CatalogError::from)?,
                    }
                }
            };
            emit(out, fmt, &resp, |out| print_results(out, &resp))
        }
        Command::Text { q, k, filters } => {
            let resp = match &remote {
                Some(client) => client.text(q, *k, &filters.filters())?,
                None => {
                    let catalog = open_store(&cli.store)?;
                    let query = SearchQuery::text(q.clone(), *k).with_filters(filters.filters());
                    SearchResponse {
                        mode: SearchMode::Text,
                        k: *k,
                        results: catalog.search(&query).map_err(CatalogError::from)?,
                    }
                }
            };
            emit(out, fmt, &resp, |out| print_results(out, &resp))
        }
        Command::Delete { id } => {
            let resp = match &remote {
                Some(client) => client.delete(id)?,
                None => {
                    let mut catalog = open_store(&cli.store)?;
                    let id = ModelId::new(id);
                    catalog.take_down(&id, "cli")?;
                    catalog.persist()?;
                    DeleteResponse {
                        model_id: id,
                        lifecycle: crate::catalog::Lifecycle::TakenDown,
                    }
                }
            };
            emit(out, fmt, &resp, |out| {
                writeln!(out, "taken down {}", resp.model_id)
            })
        }
        Command::Show { id } => {
            let resp = match &remote {
                Some(client) => client.show(id)?,
                None => {
                    let catalog = open_store(&cli.store)?;
                    let id = ModelId::new(id);
                    ModelResponse {
                        record: catalog.active(&id)?.clone(),
                        versions: catalog.versions(&id).cloned(),
                    }
                }
            };
            emit(out, fmt, &resp, |out| {
                let r = &resp.record;
                writeln!(out, "id          {}", r.id)?;
                writeln!(out, "name        {}", r.name)?;
                writeln!(out, "format      {}", r.format)?;
                writeln!(out, "hash        {}", r.content_hash)?;
                writeln!(
                    out,
                    "sources     {}",
                    r.sources
                        .iter()
                        .map(|s| s.domain.as_str())
                        .collect::<Vec<_>>()
                        .join(", ")
                )?;
                writeln!(
                    out,
                    "facets      {} (watertight {}, consistent normals {})",
                    r.stats.triangle_count, r.stats.watertight, r.stats.consistent_normals
                )?;
                if let Some(chain) = &resp.versions {
                    writeln!(out, "versions    {}", chain.versions.len())?;
                }
                Ok(())
            })
        }
        Command::Related { id, k } => {
            let resp = match &remote {
                Some(client) => client.related(id)?,
                None => {
                    let catalog = open_store(&cli.store)?;
                    let id = ModelId::new(id);
                    let results = catalog
                        .related(&id, *k)?
                        .into_iter()
                        .map(|r| RelatedEntry {
                            model_id: r.model_id,
                            score: r.score,
                        })
                        .collect();
                    RelatedResponse {
                        model_id: id,
                        results,
                    }
                }
            };
            emit(out, fmt, &resp, |out| {
                for r in &resp.results {
                    writeln!(out, "{:.12}\t{}", r.score, r.model_id)?;
                }
                Ok(())
            })
        }
        Command::Stats(args) => stats(cli, remote.as_ref(), args, out),
        Command::Recrawl { at } => {
            let catalog = open_store(&cli.store)?;
            let due = catalog.due_for_recrawl(at.unwrap_or_else(|| catalog.now()));
            emit(out, fmt, &due, |out| {
                for d in &due {
                    writeln!(out, "{d}")?;
                }
                Ok(())
            })
        }
        Command::Gen(g) => generate(g, fmt, out),
        Command::Index(cmd) => index_command(cli, cmd, out),
        Command::Serve {
            port,
            bind,
            max_upload_bytes,
        } => {
            let catalog = open_store(&cli.store)?;
            let config = ApiConfig {
                bind: SocketAddr::new(*bind, *port),
                max_upload_bytes: *max_upload_bytes,
                ..ApiConfig::default()
            };
            config.validate().map_err(CliError::User)?;
            let rt = tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()?;
            rt.block_on(api::serve(config, catalog))?;
            Ok(())
        }
    }
}

#[derive(Debug, Serialize)]
struct PerimeterReport {
    samples: usize,
    histogram: Option<Histogram>,
    gamma: Option<GammaFit>,
}

fn stats(
    cli: &Cli,
    remote: Option<&RemoteClient>,
    args: &StatsArgs,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    if !args.perimeter_histogram && !args.fit_gamma {
        let s: CatalogStats = match remote {
            Some(client) => client.stats()?,
            None => open_store(&cli.store)?.stats(),
        };
        return emit(out, cli.format, &s, |out| {
            writeln!(out, "active models      {}", s.active_models)?;
            writeln!(out, "taken down         {}", s.taken_down_models)?;
            writeln!(out, "source domains     {}", s.sources)?;
            writeln!(out, "distinct words     {}", s.distinct_words)?;
            writeln!(out, "generic words      {}", s.generic_words)?;
            writeln!(out, "df histogram       {:?}", s.df_histogram)
        });
    }

    let mut samples = Vec::new();
    if args.input.is_empty() {
        let catalog = open_store(&cli.store)?;
        let vocab = catalog.index().vocabulary();
        let ids: Vec<ModelId> = catalog.active_records().map(|r| r.id.clone()).collect();
        for id in ids {
            samples.extend(facet_perimeters(&catalog.load_mesh(&id)?, vocab));
        }
    } else {
        let vocab = Vocabulary::default();
        for path in &args.input {
            let (mesh, _) = parse_model(&read_input(path)?, hint_for(path)?)?;
            samples.extend(facet_perimeters(&mesh, &vocab));
        }
    }
    if samples.is_empty() {
        return Err(AnalysisError::EmptyCorpus.into());
    }

    let histogram = if args.perimeter_histogram || args.svg.is_some() || args.csv.is_some() {
        let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = args.min.unwrap_or(lo);
        let mut max = args.max.unwrap_or(hi);
        if max <= min {
            max = if args.log { min * 2.0 } else { min + 1.0 };
        }
        let policy = if args.log {
            BinPolicy::Log {
                min,
                max,
                bins: args.bins,
            }
        } else {
            BinPolicy::Fixed {
                min,
                max,
                bins: args.bins,
            }
        };
        Some(Histogram::from_samples(policy, &samples)?)
    } else {
        None
    };
    let gamma = if args.fit_gamma {
        Some(fit_gamma(&samples)?)
    } else {
        None
    };
    if let Some(h) = &histogram {
        if let Some(path) = &args.csv {
            std::fs::write(path, h.to_csv())?;
        }
        if let Some(path) = &args.svg {
            let svg = match &gamma {
                Some(g) => h.to_svg(Some(&|x| g.pdf(x))),
                None => h.to_svg(None),
            };
            std::fs::write(path, svg)?;
        }
    }
    let report = PerimeterReport {
        samples: samples.len(),
        histogram,
        gamma,
    };
    emit(out, cli.format, &report, |out| {
        writeln!(out, "# facets {}", report.samples)?;
        if let Some(h) = &report.histogram {
            write!(out, "{}", h.to_text())?;
        }
        if let Some(g) = &report.gamma {
            writeln!(
                out,
                "gamma shape {:.6} scale {:.6} (mean {:.6}, {} iterations{})",
                g.shape,
                g.scale,
                g.mean(),
                g.iterations,
                if g.converged { "" } else { ", not converged" }
            )?;
        }
        Ok(())
    })
}

fn write_mesh(
    out: &mut dyn Write,
    path: Option<&Path>,
    mesh: &TriangleMesh,
    name: &str,
) -> Result<(), CliError> {
    let text = write_stl_ascii(mesh, name);
    match path {
        Some(p) => {
            std::fs::write(p, text)?;
            writeln!(
                out,
                "wrote {} facets to {}",
                mesh.triangles.len(),
                p.display()
            )?;
        }
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct TtdSummary {
    out: String,
    parts: usize,
    composites: usize,
    distractors: usize,
}

fn generate(cmd: &GenCommand, fmt: OutputFormat, out: &mut dyn Write) -> Result<(), CliError> {
    match cmd {
        GenCommand::Torus {
            major,
            minor,
            res,
            out: path,
        } => {
            if !(*minor > 0.0 && major > minor) {
                return Err(CliError::User("need R > r > 0".into()));
            }
            let grid = aligned_torus_grid(*major, *minor, *res);
            let mesh = marching_cubes(torus_field(*major, *minor), &grid)?;
            write_mesh(out, path.as_deref(), &mesh, "torus")
        }
        GenCommand::Support {
            pillars,
            footprint,
            seed,
            out: path,
        } => {
            if footprint.len() != 2 || footprint.iter().any(|v| !(*v > 0.0)) {
                return Err(CliError::User(
                    "footprint must be two positive numbers".into(),
                ));
            }
            let mesh = gen_support_lattice([footprint[0], footprint[1]], *pillars, *seed);
            write_mesh(out, path.as_deref(), &mesh, "support")
        }
        GenCommand::Ttd { spec, out: dir } => {
            let spec = match spec {
                Some(p) => {
                    let text = std::fs::read_to_string(p)
                        .map_err(|e| CliError::User(format!("cannot read {}: {e}", p.display())))?;
                    TtdSpec::from_toml(&text)?
                }
                None => TtdSpec::default(),
            };
            let data = gen_ttd(&spec)?;
            for (sub, models) in [
                ("parts", &data.parts),
                ("composites", &data.composites),
                ("distractors", &data.distractors),
            ] {
                let d = dir.join(sub);
                std::fs::create_dir_all(&d)?;
                for m in models {
                    std::fs::write(
                        d.join(format!("{}.stl", m.id)),
                        write_stl_ascii(&m.mesh, &m.id),
                    )?;
                }
            }
            let labels = serde_json::to_string_pretty(&data.labels)
                .map_err(|e| CliError::Internal(e.to_string()))?;
            std::fs::write(dir.join("labels.json"), labels + "\n")?;
            std::fs::write(dir.join("spec.toml"), spec.to_toml())?;
            let summary = TtdSummary {
                out: dir.display().to_string(),
                parts: data.parts.len(),
                composites: data.composites.len(),
                distractors: data.distractors.len(),
            };
            emit(out, fmt, &summary, |out| {
                writeln!(
                    out,
                    "wrote {} parts, {} composites, {} distractors to {}",
                    summary.parts, summary.composites, summary.distractors, summary.out
                )
            })
        }
    }
}

#[derive(Debug, Serialize)]
struct IndexSummary {
    models: usize,
    words: usize,
    generic_words: usize,
}

fn summary(index: &InvertedIndex) -> IndexSummary {
    IndexSummary {
        models: index.len(),
        words: index.word_count(),
        generic_words: index.generic_words().len(),
    }
}

fn index_command(cli: &Cli, cmd: &IndexCommand, out: &mut dyn Write) -> Result<(), CliError> {
    let fmt = cli.format;
    let print = |out: &mut dyn Write, s: &IndexSummary| {
        emit(out, fmt, s, |out| {
            writeln!(
                out,
                "{} models, {} words, {} generic",
                s.models, s.words, s.generic_words
            )
        })
    };
    match cmd {
        IndexCommand::Save { path } => {
            let catalog = open_store(&cli.store)?;
            catalog.index().save(path).map_err(CatalogError::from)?;
            print(out, &summary(catalog.index()))
        }
        IndexCommand::Load { path, replace } => {
            let index = InvertedIndex::load(path)
                .map_err(|e| CliError::User(format!("{e} ({})", e.code())))?;
            let s = summary(&index);
            if *replace {
                let mut catalog = open_store(&cli.store)?;
                catalog
                    .replace_index(index)
                    .map_err(|e| CliError::User(e.to_string()))?;
                catalog.persist()?;
            }
            print(out, &s)
        }
        IndexCommand::Audit => {
            let catalog = open_store(&cli.store)?;
            catalog.audit()?;
            let s = summary(catalog.index());
            emit(out, fmt, &s, |out| {
                writeln!(out, "ok: {} models, {} words", s.models, s.words)
            })
        }
        IndexCommand::MarkGeneric { threshold } => {
            let mut catalog = open_store(&cli.store)?;
            let marked = catalog
                .mark_generic(*threshold)
                .map_err(|e| CliError::User(e.to_string()))?;
            catalog.persist()?;
            emit(out, fmt, &marked, |out| {
                writeln!(out, "marked {} words generic", marked.len())
            })
        }
    }
}
