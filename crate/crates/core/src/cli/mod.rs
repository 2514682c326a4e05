//! The `screenkit` command line. Data goes to stdout, diagnostics to stderr
//! as JSON lines. Exit codes: 0 success, 1 input error, 2 backend error.

mod commands;
mod config;
mod svg;

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

pub use config::Config;
pub use svg::{class_color, render_svg};

use crate::schema::CoordOrder;
use crate::taskgen::TemplateKind;

/// Env var naming the completion endpoint.
pub const BACKEND_URL_ENV: &str = "SCREENKIT_BACKEND_URL";

/// Process exit status, ordered by severity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Exit {
    Success = 0,
    Input = 1,
    Backend = 2,
}

#[derive(Debug, Parser)]
#[command(name = "screenkit", version, about = "Screen schema, patching, task generation, mixture and evaluation tools")]
pub struct Cli {
    /// JSON config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random choice; overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Coordinate order of schema text and click answers: yxyx or xyxy.
    #[arg(long, global = true, value_parser = parse_order)]
    pub coord_order: Option<CoordOrder>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check, canonicalize or draw schema files.
    #[command(subcommand)]
    Schema(SchemaCmd),
    /// Annotation JSONL to schema JSONL.
    Compose {
        input: Option<PathBuf>,
    },
    /// Image dimensions JSONL to patch-grid JSONL.
    Patch {
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 14)]
        patch_size: u32,
        #[arg(long, default_value_t = 2916)]
        budget: u32,
    },
    /// Generate task records from schemas with a completion backend.
    Generate(GenerateArgs),
    /// Score predictions JSONL with a metric.
    Eval {
        #[arg(long)]
        metric: String,
        input: Option<PathBuf>,
        #[arg(long)]
        iou_threshold: Option<f64>,
        /// Case-insensitive exact match.
        #[arg(long)]
        fold_case: bool,
        /// Include per-sample scores in the report.
        #[arg(long)]
        per_sample: bool,
    },
    /// Resolve mixture weights and sample records.
    Mixture {
        spec: PathBuf,
        /// Number of records to sample.
        #[arg(short = 'n', long, default_value_t = 0)]
        samples: usize,
        #[arg(long)]
        cap: Option<f64>,
        /// Where to write the manifest; with no samples it goes to stdout.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Split multipage QA items into per-page records.
    DocvqaPairs {
        input: Option<PathBuf>,
        #[arg(long)]
        keep_prob: Option<f64>,
    },
}

#[derive(Debug, Subcommand)]
pub enum SchemaCmd {
    /// Parse files and report the first error in each.
    Validate { files: Vec<PathBuf> },
    /// Print the canonical form.
    Fmt { file: Option<PathBuf> },
    /// Draw element boxes as SVG.
    Render {
        file: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        width: u32,
        #[arg(long, default_value_t = 1000)]
        height: u32,
    },
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Schema files (image_ref = file stem), directories of them, or JSONL
    /// files of {"image_ref", "schema", "params"}.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, default_value = "qa")]
    pub template: TemplateKind,
    /// Custom prompt body; parsed as --template.
    #[arg(long)]
    pub template_file: Option<PathBuf>,
    /// Replay canned completions from a JSONL file instead of calling a backend.
    #[arg(long)]
    pub stub: Option<PathBuf>,
    #[arg(long, env = BACKEND_URL_ENV)]
    pub backend_url: Option<String>,
    #[arg(long)]
    pub num_samples: Option<u32>,
    /// Extra template slot value, NAME=VALUE.
    #[arg(long = "param", value_parser = parse_kv)]
    pub params: Vec<(String, String)>,
    #[arg(long)]
    pub max_in_flight: Option<usize>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Write generation stats JSON here.
    #[arg(long)]
    pub stats: Option<PathBuf>,
    /// Write the rendered requests and their hashes instead of calling the backend.
    #[arg(long)]
    pub dump_requests: Option<PathBuf>,
}

fn parse_order(s: &str) -> Result<CoordOrder, String> {
    match s {
        "yxyx" => Ok(CoordOrder::Yxyx),
        "xyxy" => Ok(CoordOrder::Xyxy),
        _ => Err(format!("expected yxyx or xyxy, got {s:?}")),
    }
}

fn parse_kv(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.to_owned(), v.to_owned()))
        .ok_or_else(|| format!("expected NAME=VALUE, got {s:?}"))
}

/// Standard streams, swappable in tests.
pub struct Io<'a> {
    pub stdin: &'a mut dyn BufRead,
    pub stdout: &'a mut dyn Write,
    pub stderr: &'a mut dyn Write,
}

impl Io<'_> {
    /// One diagnostic JSON line on stderr.
    pub(crate) fn diag(&mut self, command: &str, mut fields: Value) {
        if let Value::Object(map) = &mut fields {
            map.insert("command".into(), command.into());
        }
        let _ = writeln!(self.stderr, "{fields}");
    }

    /// Lines of `path`, or of stdin for `None` / `-`.
    pub(crate) fn read_lines(&mut self, path: Option<&Path>) -> io::Result<Vec<String>> {
        match path {
            Some(p) if p != Path::new("-") => BufReader::new(File::open(p)?).lines().collect(),
            _ => self.stdin.lines().collect(),
        }
    }

    pub(crate) fn read_all(&mut self, path: Option<&Path>) -> io::Result<String> {
        match path {
            Some(p) if p != Path::new("-") => std::fs::read_to_string(p),
            _ => {
                let mut s = String::new();
                self.stdin.read_to_string(&mut s)?;
                Ok(s)
            }
        }
    }
}

/// Effective settings after merging config file and global flags.
pub(crate) struct Context {
    pub config: Config,
}

fn load_context(cli: &Cli) -> Result<Context, String> {
    let mut config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(order) = cli.coord_order {
        config.coord_order = order;
    }
    Ok(Context { config })
}

/// Runs the CLI on `args` (program name first) and returns the exit code.
pub fn run<I, T>(args: I, io: &mut Io<'_>) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(io.stdout, "{e}");
                return Exit::Success as u8;
            }
            let _ = write!(io.stderr, "{}", e.render());
            return Exit::Input as u8;
        }
    };
    let ctx = match load_context(&cli) {
        Ok(ctx) => ctx,
        Err(e) => {
            io.diag("config", json!({ "error": e }));
            return Exit::Input as u8;
        }
    };
    let exit = commands::dispatch(&cli.command, &ctx, io);
    let _ = io.stdout.flush();
    exit as u8
}

/// Runs on the real process streams.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdin = io::stdin();
    let mut stdin = stdin.lock();
    let mut stdout = io::BufWriter::new(io::stdout().lock());
    let mut stderr = io::stderr().lock();
    let mut io = Io { stdin: &mut stdin, stdout: &mut stdout, stderr: &mut stderr };
    run(args, &mut io)
}
