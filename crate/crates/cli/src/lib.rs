//! The `cnnslicer` command line.
//!
//! Exit status is 0 on success, 1 for usage errors and 2 for data errors,
//! which are also printed to stderr as `{"code": ..., "message": ...}`.

pub mod config;
pub mod format;

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufWriter, IsTerminal, Write};
use std::net::IpAddr;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use cnnslicer_core::deconv::project_sample;
use cnnslicer_core::entropy::{DEFAULT_BINS, DEFAULT_K};
use cnnslicer_core::flow::{capacity_matrix, channel_entropy_series, slice_entropy, sort_matrix, Metric, SortOrder};
use cnnslicer_core::perf::{conditional_entropy_series, confusion_series, loss_curve, Direction};
use cnnslicer_core::render::encode_png;
use cnnslicer_core::store::{Catalog, Run, SampleSelector, SliceSpec};
use cnnslicer_core::Error;
use cnnslicer_service::{ServiceConfig, DEFAULT_CACHE_MB, DEFAULT_PORT};

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "cnnslicer", version, about = "Information-theoretic analysis of CNN training dumps")]
pub struct Cli {
    /// TOML file of default flag values; flags on the command line win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory holding one subdirectory per ingested run.
    #[arg(long, global = true, env = "CNNSLICER_DATA_ROOT")]
    pub data_root: Option<PathBuf>,
    /// Worker threads; 0 = one per core.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a dump directory, write its index and register it under the
    /// data root when one is set.
    Ingest { dir: PathBuf },
    /// Entropy of every block in a slice, as `layer,epoch,channel,bits`.
    Query {
        /// Run id under the data root, or a run directory.
        #[arg(long)]
        run: String,
        /// `x=<all|label:I|ids:I,...>;l=<int|*>;c=<int|*>;t=<int|*>`
        #[arg(long)]
        slice: String,
        /// `inter` or `intra`.
        #[arg(long, default_value = "inter")]
        metric: String,
        /// Neighbours for inter-sample entropy.
        #[arg(long, default_value_t = DEFAULT_K)]
        k: usize,
        /// Histogram bins for intra-sample entropy.
        #[arg(long, short = 'B', default_value_t = DEFAULT_BINS)]
        bins: usize,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Channel-capacity matrix between two layers, plus row and column
    /// orders in `<out>.rows.csv` and `<out>.cols.csv`.
    Capacity {
        #[arg(long)]
        run: String,
        #[arg(long)]
        epoch: u32,
        /// `li,lj`, or a single layer for its self-capacity.
        #[arg(long, value_delimiter = ',', required = true)]
        layers: Vec<usize>,
        /// `<rows|cols|both>:<max|mean>`; identity orders when omitted.
        #[arg(long)]
        sort: Option<String>,
        /// Sample selector: `all`, `label:I` or `ids:I,...`.
        #[arg(long, default_value = "all")]
        x: String,
        #[arg(long, short = 'B', default_value_t = DEFAULT_BINS)]
        bins: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Confusion matrices, conditional entropies and the loss curve.
    Perf {
        #[arg(long)]
        run: String,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Per-channel, per-class mean intra-sample entropy over epochs.
    Series {
        #[arg(long)]
        run: String,
        #[arg(long)]
        layer: usize,
        #[arg(long, short = 'B', default_value_t = DEFAULT_BINS)]
        bins: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Deconvnet projection of one channel for one probe sample, as PNG.
    Deconv {
        #[arg(long)]
        run: String,
        #[arg(long)]
        epoch: u32,
        #[arg(long)]
        layer: usize,
        #[arg(long)]
        channel: usize,
        #[arg(long)]
        sample: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the HTTP analysis service over the data root.
    Serve {
        #[arg(long, default_value_t = DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        #[arg(long, default_value_t = DEFAULT_CACHE_MB)]
        cache_mb: usize,
        /// Browser origin allowed by CORS (repeatable, `*` for any).
        #[arg(long = "cors-origin")]
        cors_origins: Vec<String>,
    },
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(Error),
    /// A failure without a library error code (e.g. a socket bind).
    Other { code: &'static str, message: String },
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Data(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            _ => EXIT_DATA,
        }
    }

    pub fn report(&self) -> String {
        let (code, message) = match self {
            CliError::Usage(m) => return m.clone(),
            CliError::Data(e) => (e.code(), e.to_string()),
            CliError::Other { code, message } => (*code, message.clone()),
        };
        serde_json::json!({ "code": code, "message": message }).to_string()
    }
}

/// Parses `args` (program name first), applies `--config`, runs the
/// command and returns the exit status.
pub fn main_with(args: Vec<OsString>) -> i32 {
    let cli = match parse(args) {
        Ok(cli) => cli,
        Err(ParseOutcome::Display(text)) => {
            print!("{text}");
            return 0;
        }
        Err(ParseOutcome::Error(text)) => {
            eprint!("{text}");
            return EXIT_USAGE;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.report());
            e.exit_code()
        }
    }
}

enum ParseOutcome {
    /// `--help` / `--version` text.
    Display(String),
    Error(String),
}

fn parse(args: Vec<OsString>) -> Result<Cli, ParseOutcome> {
    let path = config::config_path(&args).map_err(|e| ParseOutcome::Error(format!("error: {e}\n")))?;
    let args = match path {
        Some(path) => {
            let text = fs::read_to_string(&path)
                .map_err(|e| ParseOutcome::Error(format!("error: cannot read config {}: {e}\n", path.display())))?;
            config::merge(args, &text).map_err(|e| ParseOutcome::Error(format!("error: {e}\n")))?
        }
        None => args,
    };
    Cli::try_parse_from(args).map_err(|e| {
        let text = e.render().to_string();
        if e.use_stderr() {
            ParseOutcome::Error(text)
        } else {
            ParseOutcome::Display(text)
        }
    })
}

fn open_run(data_root: Option<&Path>, run: &str) -> Result<Run, CliError> {
    let as_path = Path::new(run);
    if as_path.join("manifest.json").is_file() {
        return Ok(Run::open(as_path)?);
    }
    let root = data_root.ok_or_else(|| {
        CliError::Usage(format!(
            "error: {run:?} is not a run directory and no --data-root (or CNNSLICER_DATA_ROOT) is set"
        ))
    })?;
    let dir = root.join(run);
    if !dir.join("manifest.json").is_file() {
        return Err(Error::UnknownRun(run.to_string()).into());
    }
    Ok(Run::open(dir)?)
}

fn create(path: &Path) -> Result<BufWriter<File>, Error> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<(), Error>) -> Result<(), Error> {
    let mut out = create(path)?;
    f(&mut out)?;
    out.flush().map_err(|e| Error::io(path, e))
}

/// `m.csv` -> `m.rows.csv`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}.csv"))
}

fn init_threads(threads: usize) {
    if threads > 0 {
        // Only fails if a pool already exists, which keeps its own size.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    init_threads(cli.threads);
    let root = cli.data_root.as_deref();
    match cli.command {
        Command::Ingest { dir } => {
            let run = match root {
                Some(root) => Catalog::register(root, &dir)?,
                None => Run::ingest(&dir)?,
            };
            let summary = serde_json::json!({
                "run_id": run.id(),
                "root": run.root(),
                "fingerprint": run.fingerprint(),
            });
            println!("{summary}");
        }
        Command::Query { run, slice, metric, k, bins, out } => {
            let run = open_run(root, &run)?;
            let slice: SliceSpec = slice.parse()?;
            let metric: Metric = metric.parse()?;
            let values = slice_entropy(&run, &slice, metric, k, bins)?;
            if values.is_empty() {
                return Err(Error::EmptySelection.into());
            }
            match out {
                Some(path) => write_file(&path, |w| format::write_entropy_values(w, &values))?,
                None => format::write_entropy_values(io::stdout().lock(), &values)?,
            }
        }
        Command::Capacity { run, epoch, layers, sort, x, bins, out } => {
            let run = open_run(root, &run)?;
            let (li, lj) = match layers[..] {
                [l] => (l, l),
                [li, lj] => (li, lj),
                _ => return Err(CliError::Usage("error: --layers takes one or two layer indices".into())),
            };
            let selector: SampleSelector = x.parse()?;
            let sort: Option<SortOrder> = sort.map(|s| s.parse()).transpose()?;
            let mut m = capacity_matrix(&run, epoch, li, lj, &selector, bins)?;
            if let Some(s) = sort {
                m = sort_matrix(&m, s.axis, s.stat);
            }
            write_file(&out, |w| format::write_capacity_matrix(w, &m))?;
            write_file(&sibling(&out, "rows"), |w| format::write_order(w, &m.row_order))?;
            write_file(&sibling(&out, "cols"), |w| format::write_order(w, &m.col_order))?;
        }
        Command::Perf { run, out_dir } => {
            let run = open_run(root, &run)?;
            let matrices = confusion_series(&run)?;
            fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
            for m in &matrices {
                write_file(&out_dir.join(format!("confusion_epoch_{}.csv", m.epoch)), |w| {
                    format::write_confusion(w, m)
                })?;
            }
            for direction in [Direction::LabelGivenPred, Direction::PredGivenLabel] {
                let series = conditional_entropy_series(&run, direction)?;
                write_file(&out_dir.join(format!("conditional_{direction}.csv")), |w| {
                    format::write_conditional(w, &series)
                })?;
            }
            write_file(&out_dir.join("loss.csv"), |w| format::write_loss(w, &loss_curve(&run)))?;
        }
        Command::Series { run, layer, bins, out } => {
            let run = open_run(root, &run)?;
            let series = channel_entropy_series(&run, layer, bins)?;
            write_file(&out, |w| format::write_series(w, &series))?;
        }
        Command::Deconv { run, epoch, layer, channel, sample, out } => {
            let run = open_run(root, &run)?;
            let png = encode_png(project_sample(&run, epoch, layer, channel, sample)?.view())?;
            write_file(&out, |w| w.write_all(&png).map_err(|e| Error::io(&out, e)))?;
        }
        Command::Serve { port, host, cache_mb, cors_origins } => {
            let data_root = root
                .ok_or_else(|| CliError::Usage("error: serve needs --data-root (or CNNSLICER_DATA_ROOT)".into()))?
                .to_path_buf();
            let config = ServiceConfig {
                host,
                port,
                data_root,
                cache_mb,
                threads: cli.threads,
                cors_origins,
            };
            let _ = tracing_subscriber::fmt()
                .with_writer(io::stderr)
                .with_ansi(io::stderr().is_terminal())
                .try_init();
            cnnslicer_service::run(&config).map_err(|e| match e.downcast::<Error>() {
                Ok(e) => CliError::Data(*e),
                Err(e) => CliError::Other { code: "ServeFailed", message: e.to_string() },
            })?;
        }
    }
    Ok(())
}
