use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use chromstraight::par::Execution;
use chromstraight::pipeline::{self, Method, RunConfig, RunReport, MANIFEST_FILE, SUMMARY_HEADER};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "chromstraight", version, about = "Chromosome straightening toolkit")]
struct Cli {
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    mask_ratio: Option<f64>,
    /// Patch size as HxW, e.g. 8x16.
    #[arg(long, global = true, value_parser = parse_patch)]
    patch_size: Option<(usize, usize)>,
    #[arg(long, global = true)]
    threshold_t: Option<u64>,
    #[arg(long, global = true)]
    prune_ratio: Option<f64>,
    /// Exit 0 even when some samples fail.
    #[arg(long, global = true)]
    keep_going: bool,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Process samples one at a time.
    #[arg(long, global = true)]
    sequential: bool,
    /// Worker threads (default: one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Bend every real sample into synthetic variants.
    Synth {
        /// Manifest of straight real samples.
        manifest: Option<PathBuf>,
        /// Generate this many straight striped fixtures instead of reading a manifest.
        #[arg(long, conflicts_with = "manifest")]
        fixtures: Option<usize>,
    },
    /// Rescale and straighten every sample onto the canvas.
    Preprocess {
        manifest: PathBuf,
        #[arg(long, value_enum, default_value_t = MethodArg::Ppa)]
        method: MethodArg,
    },
    /// Write the masked/condition training bundle.
    Prepare {
        manifest: PathBuf,
        /// Test fold; the next fold is used for validation.
        #[arg(long, default_value_t = 0)]
        fold: usize,
    },
    /// Score straightened outputs against their inputs.
    Evaluate { pairs: PathBuf },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Ppa,
    Ma,
}

fn parse_patch(s: &str) -> Result<(usize, usize), String> {
    let (h, w) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected HxW, got {s:?}"))?;
    let h = h.trim().parse().map_err(|e| format!("patch height: {e}"))?;
    let w = w.trim().parse().map_err(|e| format!("patch width: {e}"))?;
    Ok((h, w))
}

fn build_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("reading config {}", p.display()))?,
        None => RunConfig::default(),
    };
    if let Some(v) = cli.seed {
        cfg.seed = v;
    }
    if let Some(v) = cli.mask_ratio {
        cfg.mask_ratio = v;
    }
    if let Some((h, w)) = cli.patch_size {
        cfg.patch_h = h;
        cfg.patch_w = w;
    }
    if let Some(v) = cli.threshold_t {
        cfg.threshold_t = v;
    }
    if let Some(v) = cli.prune_ratio {
        cfg.prune_ratio = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn finish(report: &RunReport, keep_going: bool) -> Result<ExitCode> {
    println!("{}", serde_json::to_string_pretty(report)?);
    for f in &report.failed {
        eprintln!("failed {}: {}", f.id, f.error);
    }
    if !report.failed.is_empty() && !keep_going {
        eprintln!("{} sample(s) failed; rerun with --keep-going to accept partial results", report.failed.len());
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode> {
    let cfg = build_config(&cli)?;
    if let Some(n) = cli.threads {
        rayon_pool(n)?;
    }
    let exec = if cli.sequential { Execution::Sequential } else { Execution::Parallel };
    match &cli.command {
        Command::Synth { manifest, fixtures } => {
            let manifest = match (manifest, fixtures) {
                (Some(m), _) => m.clone(),
                (None, Some(n)) => {
                    let dir = cli.out.join("sources");
                    pipeline::write_fixture_dataset(&dir, *n, cfg.seed)?;
                    dir.join(MANIFEST_FILE)
                }
                (None, None) => bail!("give a manifest or --fixtures N"),
            };
            finish(&pipeline::cmd_synth(&manifest, &cfg, &cli.out, exec)?, cli.keep_going)
        }
        Command::Preprocess { manifest, method } => {
            let method = match method {
                MethodArg::Ppa => Method::Ppa,
                MethodArg::Ma => Method::Ma,
            };
            finish(&pipeline::cmd_preprocess(manifest, &cfg, &cli.out, method, exec)?, cli.keep_going)
        }
        Command::Prepare { manifest, fold } => finish(&pipeline::cmd_prepare(manifest, &cfg, &cli.out, *fold, exec)?, cli.keep_going),
        Command::Evaluate { pairs } => {
            let eval = pipeline::cmd_evaluate(pairs, &cfg, &cli.out, exec)?;
            eprintln!("{SUMMARY_HEADER}");
            for s in &eval.summaries {
                eprintln!("{}", s.table_row());
            }
            finish(&eval.report, cli.keep_going)
        }
    }
}

fn rayon_pool(threads: usize) -> Result<()> {
    chromstraight::par::set_threads(threads).context("configuring worker pool")
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
