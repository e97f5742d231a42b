//! Command implementations behind the `nesprindt` binary.
//!
//! Every command returns a process exit status: 0 on success, 1 for usage
//! and configuration errors, 2 for data errors and 3 when filtering removed
//! every tree of an outer repetition.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nesprindt_core::export::{write_ba_csv, write_probe_csv};
use nesprindt_core::generator::{generate, CellCounts, GeneratorConfig, Plant};
use nesprindt_core::{
    best_tree, heterogeneity_probe, nesprindt_run, Criterion, Dataset, Error, NesReport,
    ProbeConfig, RunConfig,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_EMPTY: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "nesprindt",
    version,
    about = "Nested undersampling decision-tree runs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Grow, rank and score trees; write report.json, BA vectors and tree texts.
    Run(RunArgs),
    /// Per-part balanced accuracy on the large nesting level.
    Probe(ProbeArgs),
    /// Write a synthetic corpus.
    Generate(GenerateArgs),
    /// Print one tree of a report.
    Render(RenderArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Input CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub threads: u32,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: Common,
    /// Also run the heterogeneity probe with this many parts.
    #[arg(long, value_parser = clap::value_parser!(u32).range(2..))]
    pub parts: Option<u32>,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u32).range(2..))]
    pub parts: u32,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// none, default or hetero.
    #[arg(long, default_value = "default")]
    pub plant: String,
    /// Minority share applied within each speaker level.
    #[arg(long)]
    pub minority_rate: Option<f64>,
    #[arg(long)]
    pub child_realized: Option<usize>,
    #[arg(long)]
    pub child_zero: Option<usize>,
    #[arg(long)]
    pub adult_realized: Option<usize>,
    #[arg(long)]
    pub adult_zero: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// report.json written by `run`, or the directory holding it.
    #[arg(long)]
    pub report: PathBuf,
    /// Tree id such as `3-41-1`, or `best-outer` / `best-full`.
    #[arg(long)]
    pub tree_id: String,
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Run(a) => cmd_run(&a),
        Command::Probe(a) => cmd_probe(&a),
        Command::Generate(a) => cmd_generate(&a),
        Command::Render(a) => cmd_render(&a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::EmptyResult { .. } => EXIT_EMPTY,
        e if e.is_data_error() => EXIT_DATA,
        _ => EXIT_CONFIG,
    }
}

/// Reads the JSON config (or defaults) and applies flag overrides.
pub fn load_config(common: &Common) -> Result<RunConfig, Error> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn pool(threads: u32) -> Result<rayon::ThreadPool, Error> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads as usize)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

fn create_dir(dir: &Path) -> Result<(), Error> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn create_file(path: &Path) -> Result<fs::File, Error> {
    fs::File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), Error> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn load_data(common: &Common, cfg: &RunConfig) -> Result<Dataset, Error> {
    Dataset::load_csv(&common.data, cfg.schema.as_ref(), &cfg.class_column)
}

pub fn cmd_run(args: &RunArgs) -> Result<(), Error> {
    let mut cfg = load_config(&args.common)?;
    if let Some(parts) = args.parts {
        cfg.probe_parts = Some(parts as usize);
    }
    let d = load_data(&args.common, &cfg)?;
    let report = pool(args.common.threads)?.install(|| nesprindt_run(&d, &cfg))?;

    let out = &args.common.out;
    create_dir(&out.join("trees"))?;
    write_text(&out.join("report.json"), &report.to_canonical_json()?)?;
    write_ba_csv(
        &report.ba_outer,
        create_file(&out.join("ba_undersample.csv"))?,
    )?;
    write_ba_csv(&report.ba_full, create_file(&out.join("ba_full.csv"))?)?;
    for t in &report.trees {
        write_text(
            &out.join("trees").join(format!("{}.txt", t.id)),
            &t.rendered,
        )?;
    }
    if let Some(probe) = &report.probe {
        write_probe_csv(probe, create_file(&out.join("probe.csv"))?)?;
    }
    Ok(())
}

pub fn cmd_probe(args: &ProbeArgs) -> Result<(), Error> {
    let cfg = load_config(&args.common)?;
    let d = load_data(&args.common, &cfg)?;
    let probe_cfg = ProbeConfig {
        nesting: cfg.nesting.clone(),
        parts: args.parts as usize,
        params: cfg.tree_params(),
        predictors: cfg.predictors_for(&d)?,
    };
    let probe = pool(args.common.threads)?.install(|| heterogeneity_probe(&d, &probe_cfg))?;
    create_dir(&args.common.out)?;
    write_probe_csv(&probe, create_file(&args.common.out.join("probe.csv"))?)
}

pub fn cmd_generate(args: &GenerateArgs) -> Result<(), Error> {
    let mut counts = CellCounts::default();
    if let Some(n) = args.child_realized {
        counts.child_realized = n;
    }
    if let Some(n) = args.child_zero {
        counts.child_zero = n;
    }
    if let Some(n) = args.adult_realized {
        counts.adult_realized = n;
    }
    if let Some(n) = args.adult_zero {
        counts.adult_zero = n;
    }
    if let Some(rate) = args.minority_rate {
        counts = counts.with_minority_rate(rate)?;
    }
    counts.validate()?;
    let d = generate(&GeneratorConfig {
        counts,
        plant: Plant::parse(&args.plant)?,
        seed: args.seed,
    })
    // Invalid generator settings are configuration errors, not data errors.
    .map_err(|e| match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    })?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    d.write_csv(create_file(&args.out)?)
}

/// Loads a report from a file or a run output directory.
pub fn load_report(path: &Path) -> Result<NesReport, Error> {
    let file = if path.is_dir() {
        path.join("report.json")
    } else {
        path.to_path_buf()
    };
    let text = fs::read_to_string(&file)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", file.display())))?;
    NesReport::from_json(&text).map_err(|e| Error::Config(e.to_string()))
}

pub fn render_text(report: &NesReport, tree_id: &str) -> Result<String, Error> {
    let record = match tree_id {
        "best-outer" => best_tree(report, Criterion::ByOuter)?,
        "best-full" => best_tree(report, Criterion::ByFull)?,
        id => report
            .tree(id)
            .ok_or_else(|| Error::Config(format!("no tree with id `{id}` in report")))?,
    };
    Ok(record.rendered.clone())
}

pub fn cmd_render(args: &RenderArgs) -> Result<(), Error> {
    let report = load_report(&args.report)?;
    print!("{}", render_text(&report, &args.tree_id)?);
    Ok(())
}
