use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use regionseg::eda::run_eda;
use regionseg::partition::RegionKey;
use regionseg::pipeline::{
    emit_reports, prune_segments, run_segmentation_on, PipelineConfig, PruneThresholds, SegmentReport,
};
use regionseg::synthgen::{demo_spec, generate_corpus, GeneratorSpec};

#[derive(Parser)]
#[command(
    name = "regionseg",
    version,
    about = "Availability-partitioned customer segmentation"
)]
struct Cli {
    /// Worker threads for the data-parallel loops (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus and its schema.
    Synth(SynthArgs),
    /// Missing rates, outliers, dense intervals and variable importance.
    Eda(RunArgs),
    /// Run the full segmentation and write every report.
    Segment(SegmentArgs),
    /// Re-prune an existing segments.csv with new thresholds.
    Report(ReportArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Generator spec (JSON). Without it, the built-in demo spec is used.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Rows for the demo spec, or an override of the spec's row count.
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; receives data.csv, schema.json and generator.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Pipeline config (JSON).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SegmentArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Cluster only the region with this presence key, e.g. 101.
    #[arg(long)]
    region: Option<String>,
}

#[derive(Args)]
struct ReportArgs {
    /// A segments.csv written by `segment`.
    #[arg(long)]
    segments: PathBuf,
    /// Pipeline config whose thresholds apply; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    region_threshold: Option<f64>,
    #[arg(long)]
    cluster_threshold: Option<f64>,
    /// Write the re-pruned table here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Eda(a) => eda(a),
        Command::Segment(a) => segment(a),
        Command::Report(a) => report(a),
    }
}

fn synth(a: SynthArgs) -> Result<()> {
    let mut spec = match &a.config {
        Some(p) => GeneratorSpec::load(p)?,
        None => demo_spec(a.rows.unwrap_or(10_000), a.seed.unwrap_or(0)),
    };
    if let Some(n) = a.rows {
        spec.n_rows = n;
    }
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    let table = generate_corpus(&spec)?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    write(&a.out.join("data.csv"), &table.to_csv_string()?)?;
    write(&a.out.join("schema.json"), &table.schema().to_json()?)?;
    write(
        &a.out.join("generator.json"),
        &serde_json::to_string_pretty(&spec)?,
    )?;
    println!("wrote {} rows to {}", table.n_rows(), a.out.display());
    Ok(())
}

fn load_config(a: &RunArgs) -> Result<PipelineConfig> {
    let mut cfg =
        PipelineConfig::load(&a.config).with_context(|| format!("loading config {}", a.config.display()))?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(out) = &a.out {
        cfg.output_dir = Some(out.clone());
    }
    Ok(cfg)
}

fn eda(a: RunArgs) -> Result<()> {
    let cfg = load_config(&a)?;
    let table = cfg.load_table()?;
    let eda_cfg = regionseg::eda::EdaConfig {
        k_sigma: cfg.k_sigma,
        central_mass: cfg.central_mass,
        importance_targets: cfg.importance_targets.clone(),
        forest: cfg.forest.clone(),
        skip_importance: false,
    };
    let report = run_eda(&table, &eda_cfg)?;
    print!("{}", report.render_text());
    if let Some(out) = &cfg.output_dir {
        std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        write(&out.join("eda.json"), &serde_json::to_string_pretty(&report)?)?;
    }
    Ok(())
}

fn segment(a: SegmentArgs) -> Result<()> {
    let cfg = load_config(&a.run)?;
    let Some(out) = cfg.output_dir.clone() else {
        bail!("no output directory: pass --out or set output_dir");
    };
    let only: Option<RegionKey> = a
        .region
        .as_deref()
        .map(|s| s.parse().with_context(|| format!("bad region key {s:?}")))
        .transpose()?;
    let started = Instant::now();
    let table = cfg.load_table()?;
    let run = run_segmentation_on(&table, &cfg, only.as_ref())?;
    let manifest = emit_reports(&run, &cfg, &out)?;
    let t = &run.report.totals;
    println!(
        "{} rows, {} regions clustered, {} segments, {} relevant, {:.2}% discarded ({:.1}s)",
        run.n_rows,
        manifest.regions.iter().filter(|r| r.clustered).count(),
        t.n_segments,
        t.n_relevant,
        100.0 * t.discarded_share,
        started.elapsed().as_secs_f64()
    );
    println!("reports in {}", out.display());
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let mut thresholds = match &a.config {
        Some(p) => PipelineConfig::load(p)?.thresholds,
        None => PruneThresholds::default(),
    };
    if let Some(t) = a.region_threshold {
        thresholds.region_min_global_share = t;
    }
    if let Some(t) = a.cluster_threshold {
        thresholds.cluster_min_global_share = t;
    }
    let segments = SegmentReport::load_csv(&a.segments)?;
    let pruned = prune_segments(&segments, &thresholds)?;
    let text = pruned.to_csv_string()?;
    match &a.out {
        Some(p) => write(p, &text)?,
        None => print!("{text}"),
    }
    let t = &pruned.totals;
    eprintln!(
        "{} segments, {} relevant, {:.2}% discarded",
        t.n_segments,
        t.n_relevant,
        100.0 * t.discarded_share
    );
    Ok(())
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
