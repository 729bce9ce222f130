use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pdiv_core::adapt::AnchorStrategy;
use pdiv_core::Error;
use pdiv_harness::recipes::{ablate_anchor, eval_snapshot, gen_data, run, sweep_beta};
use pdiv_harness::shift::{read_domain_accuracies, shift_report};
use pdiv_harness::table::write_csv;
use pdiv_harness::{exit_code, ExperimentConfig, RunRecord};

const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(name = "pdiv", version, about = "Ensemble source-free adaptation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    config: PathBuf,
    /// Replace the config's seed list; repeatable.
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    /// Output directory; relative paths resolve under $PDIV_OUTPUT_ROOT when set.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the adaptation anchor strategy.
    #[arg(long, value_parser = parse_strategy)]
    strategy: Option<AnchorStrategy>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the source and target CSVs for every seed.
    GenData(Common),
    /// Source training, then adaptation, for every seed.
    Run(Common),
    /// Compare the fixed, random, ensemble and whp anchors.
    AblateAnchor(Common),
    /// One adaptation per (beta, seed).
    SweepBeta {
        #[command(flatten)]
        common: Common,
        /// Comma-separated beta values.
        #[arg(long, value_delimiter = ',', required = true)]
        betas: Vec<f64>,
    },
    /// Pairwise domain confidence intervals from a `source,run,domain,accuracy,n` CSV.
    ShiftReport {
        input: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        z: f64,
        /// Output CSV; defaults to `shift_report.csv` beside the input.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a saved ensemble on a labeled CSV; prints JSON.
    Eval {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 10)]
        bins: usize,
    },
}

fn parse_strategy(s: &str) -> Result<AnchorStrategy, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn is_config_error(e: &Error) -> bool {
    matches!(e, Error::Config(_) | Error::Parse { .. } | Error::Validation(_))
}

fn fail(e: Error) -> ExitCode {
    eprintln!("error: {e}");
    if is_config_error(&e) {
        ExitCode::from(EXIT_CONFIG)
    } else {
        ExitCode::from(1)
    }
}

fn load(common: &Common) -> Result<(ExperimentConfig, PathBuf), Error> {
    let mut cfg = ExperimentConfig::load(&common.config).map_err(|e| match e {
        Error::Io { .. } => Error::Config(e.to_string()),
        other => other,
    })?;
    if !common.seeds.is_empty() {
        cfg.seeds = common.seeds.clone();
    }
    if let Some(s) = common.strategy {
        cfg.adaptation.anchor_strategy = s;
    }
    cfg.validate()?;
    let out = cfg.resolve_output_dir(common.out.as_deref());
    Ok((cfg, out))
}

fn summarize(records: &[RunRecord]) {
    for r in records {
        match (&r.error, r.source_only_accuracy, r.adapted_accuracy) {
            (None, Some(before), Some(after)) => println!(
                "seed {:>4} {:<12} source-only {:.4} adapted {:.4}",
                r.seed, r.variant, before, after
            ),
            (err, ..) => println!(
                "seed {:>4} {:<12} FAILED {}",
                r.seed,
                r.variant,
                err.as_deref().unwrap_or("unknown error")
            ),
        }
    }
}

fn finish(records: &[RunRecord], out: &Path) -> ExitCode {
    summarize(records);
    println!("results: {}", out.join(pdiv_harness::results::RESULTS_FILE).display());
    ExitCode::from(exit_code(records) as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData(common) => load(&common).and_then(|(cfg, out)| {
            for p in gen_data(&cfg, &out)? {
                println!("{}", p.display());
            }
            Ok(ExitCode::SUCCESS)
        }),
        Command::Run(common) => load(&common).and_then(|(cfg, out)| {
            let records = run(&cfg, &out)?;
            Ok(finish(&records, &out))
        }),
        Command::AblateAnchor(common) => load(&common).and_then(|(cfg, out)| {
            let (records, rows) = ablate_anchor(&cfg, &out)?;
            if let Some(mean) = rows.last() {
                println!(
                    "mean accuracy: fixed {:.4} random {:.4} ensemble {:.4} whp {:.4}",
                    mean.fixed, mean.random, mean.ensemble, mean.whp
                );
            }
            Ok(finish(&records, &out))
        }),
        Command::SweepBeta { common, betas } => load(&common).and_then(|(cfg, out)| {
            let (records, rows) = sweep_beta(&cfg, &betas, &out)?;
            for r in &rows {
                println!("beta {:<8} mean accuracy {:.4} over {} seeds", r.beta, r.mean_accuracy, r.seeds);
            }
            Ok(finish(&records, &out))
        }),
        Command::ShiftReport { input, z, out } => (|| {
            let rows = read_domain_accuracies(&input)?;
            let report = shift_report(&rows, z)?;
            let out = out.unwrap_or_else(|| input.with_file_name("shift_report.csv"));
            write_csv(&report, &out)?;
            let separated = report.iter().filter(|r| !r.overlaps_zero).count();
            println!("{} rows, {separated} without overlap: {}", report.len(), out.display());
            Ok(ExitCode::SUCCESS)
        })(),
        Command::Eval {
            snapshot,
            data,
            bins,
        } => eval_snapshot(&snapshot, &data, bins).map(|report| {
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            ExitCode::SUCCESS
        }),
    };
    result.unwrap_or_else(fail)
}
