//! Command-line front end. [`run`] is the whole program minus process exit,
//! so tests can drive it in-process.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use convscope_core::fixture::{fixture_image_bytes, fixture_model, zero_model};
use convscope_core::{run_forward, Architecture, InferenceSession, Model, Scope};

use crate::dump::{build_dump, DumpOptions};
use crate::image::{encode_png, ingest_image};
use crate::manifest::{read_model, write_model};
use crate::render::render_layer;
use crate::{bench, Error, Result};

/// Seed of the default bench input and of `make-fixture`.
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Parser)]
#[command(name = "convscope", version, about = "Run and inspect small image CNNs")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Model manifest (`<name>.json` with its weight blob alongside).
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,
    /// Input image: 8-bit PNG or raw RGB8 of the model's input size.
    /// `make-fixture` writes its fixture image here instead.
    #[arg(long, global = true)]
    pub image: Option<PathBuf>,
    /// Output file (dump) or directory (render, make-fixture).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Fixture seed for `make-fixture` and the default `bench` input.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Integer nearest-neighbour upscale factor for rendered heatmaps.
    #[arg(long, global = true, default_value_t = 1)]
    pub scale: usize,
    /// Colormap normalisation scope: layer, unit, module or global.
    #[arg(long, global = true, default_value = "layer", value_parser = parse_scope)]
    pub scope: Scope,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print class probabilities, most likely first.
    Classify,
    /// Write every activation (and optionally every decomposition) as canonical JSON.
    Dump {
        /// Comma-separated layer names to keep.
        #[arg(long, value_delimiter = ',')]
        layers: Option<Vec<String>>,
        /// Append conv decompositions and flatten wirings.
        #[arg(long)]
        include_intermediates: bool,
    },
    /// Write one heatmap PNG per channel of a layer.
    Render {
        #[arg(long)]
        layer: String,
    },
    /// Time forward passes with and without introspection queries.
    Bench {
        #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
        iterations: u64,
    },
    /// Write a seeded Tiny VGG model bundle (and its fixture image with --image).
    MakeFixture {
        /// All weights zero instead of seeded.
        #[arg(long)]
        zero: bool,
        /// Bundle name; defaults to `fixture-<seed>` or `zero`.
        #[arg(long)]
        name: Option<String>,
    },
}

fn parse_scope(s: &str) -> std::result::Result<Scope, String> {
    s.parse().map_err(|e: convscope_core::Error| e.to_string())
}

/// Outcome of a command line: exit status plus anything destined for stderr.
#[derive(Debug)]
pub struct Exit {
    pub code: i32,
    pub stderr: String,
}

/// Parse `args` (including the program name) and execute. Normal output goes
/// to `stdout`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write) -> Exit
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            if code == 0 {
                let _ = stdout.write_all(text.as_bytes());
                return Exit { code, stderr: String::new() };
            }
            return Exit { code, stderr: text };
        }
    };
    match execute(&cli, stdout) {
        Ok(()) => Exit { code: 0, stderr: String::new() },
        Err(CliError::Usage(msg)) => Exit { code: 1, stderr: format!("error: {msg}\n") },
        Err(CliError::Run(e)) => Exit { code: e.exit_code(), stderr: format!("error: {e}\n") },
    }
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Run(Error),
}

impl<E: Into<Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Run(e.into())
    }
}

fn required<'a>(value: &'a Option<PathBuf>, flag: &str, command: &str) -> std::result::Result<&'a Path, CliError> {
    value.as_deref().ok_or_else(|| CliError::Usage(format!("`{command}` needs --{flag}")))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn load_session(g: &GlobalArgs, command: &str) -> std::result::Result<InferenceSession, CliError> {
    let model = Arc::new(read_model(required(&g.model, "model", command)?)?);
    let image_path = required(&g.image, "image", command)?;
    let image = ingest_image(&read_file(image_path)?, model.arch().input_shape)?;
    Ok(run_forward(model, image.into_tensor())?)
}

fn write_stdout(stdout: &mut dyn Write, bytes: &[u8]) -> Result<()> {
    stdout.write_all(bytes).map_err(|e| Error::io("<stdout>", e))
}

fn execute(cli: &Cli, stdout: &mut dyn Write) -> std::result::Result<(), CliError> {
    let g = &cli.global;
    if g.scale == 0 {
        return Err(CliError::Usage("--scale must be at least 1".into()));
    }
    match &cli.command {
        Command::Classify => {
            let session = load_session(g, "classify")?;
            write_stdout(stdout, classify_table(&session).as_bytes())?;
        }
        Command::Dump { layers, include_intermediates } => {
            let session = load_session(g, "dump")?;
            let options =
                DumpOptions { layers: layers.clone(), include_intermediates: *include_intermediates, scope: g.scope };
            let bytes = build_dump(&session, &options)?.to_canonical_json();
            match &g.out {
                Some(path) => write_file(path, &bytes)?,
                None => write_stdout(stdout, &bytes)?,
            }
        }
        Command::Render { layer } => {
            let out = required(&g.out, "out", "render")?;
            let session = load_session(g, "render")?;
            let channels = render_layer(&session, layer, g.scope, g.scale)?;
            create_dir(out)?;
            for c in &channels {
                write_file(&out.join(&c.file_name), &c.png)?;
            }
            let summary = format!("wrote {} heatmaps to {}\n", channels.len(), out.display());
            write_stdout(stdout, summary.as_bytes())?;
        }
        Command::Bench { iterations } => {
            let model = match &g.model {
                Some(path) => read_model(path)?,
                None => fixture_model(g.seed, Architecture::tiny_vgg())?,
            };
            let shape = model.arch().input_shape;
            let input = match &g.image {
                Some(path) => ingest_image(&read_file(path)?, shape)?,
                None => ingest_image(&fixture_image_bytes(g.seed, shape), shape)?,
            };
            let report = bench::run(Arc::new(model), input.pixels(), *iterations as usize)?;
            write_stdout(stdout, report.render().as_bytes())?;
        }
        Command::MakeFixture { zero, name } => {
            let out = required(&g.out, "out", "make-fixture")?;
            let model = make_fixture(g.seed, *zero, name.as_deref())?;
            create_dir(out)?;
            let manifest = write_model(&model, out)?;
            let mut summary = format!("wrote {}\n", manifest.display());
            if let Some(path) = &g.image {
                let shape = model.arch().input_shape;
                write_file(path, &encode_png(shape.width, shape.height, &fixture_image_bytes(g.seed, shape))?)?;
                summary += &format!("wrote {}\n", path.display());
            }
            write_stdout(stdout, summary.as_bytes())?;
        }
    }
    Ok(())
}

/// Seeded (or all-zero) Tiny VGG, optionally renamed.
pub fn make_fixture(seed: u64, zero: bool, name: Option<&str>) -> Result<Model> {
    let arch = Architecture::tiny_vgg();
    let model = if zero { zero_model(arch)? } else { fixture_model(seed, arch)? };
    Ok(match name {
        Some(name) => {
            let mut meta = model.metadata().clone();
            meta.name = name.into();
            meta.weights_file = format!("{name}.weights.bin");
            Model::new(model.arch().clone(), model.weights().clone(), meta)?
        }
        None => model,
    })
}

/// Labels and probabilities sorted by descending probability; ties keep class
/// order. Four decimals.
pub fn classify_table(session: &InferenceSession) -> String {
    let labels = &session.model().arch().class_labels;
    let mut order: Vec<usize> = (0..labels.len()).collect();
    let p = session.probabilities();
    order.sort_by(|&a, &b| p[b].total_cmp(&p[a]));
    let width = labels.iter().map(String::len).max().unwrap_or(0).max("class".len());
    let mut out = format!("{:<width$}  probability\n", "class");
    for i in order {
        out += &format!("{:<width$}  {:.4}\n", labels[i], p[i]);
    }
    out
}
