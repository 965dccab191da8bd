//! `bench`: seeded thin-vs-thick benchmark runner.
//!
//! Subcommands:
//!
//! * `bench run --config <path> --out <dir>` runs the full gap experiment
//!   and writes `gap_report.csv` plus the acquired evaluation volumes as
//!   `.v4d` files.
//! * `bench phantom --seed N --out <path>` writes one fine-grid phantom
//!   volume in the V4D format.
//! * `bench froc --records <path>` evaluates FROC sensitivities for a
//!   records file.

use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use alignshift::experiment::{parse_config, run_gap_experiment, build_cohort, Cohort, Strategy};
use alignshift::froc::{froc_sensitivity, parse_records, AVG_LEVELS};
use alignshift::io::save_v4d;
use alignshift::phantom::{generate_phantom, PhantomSize};

#[derive(Parser)]
#[command(name = "bench", version, about = "Thin-vs-thick slice benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the gap experiment described by a config file.
    Run {
        /// Flat key=value config file (seed, n_phantoms, thin_mm, thick_mm,
        /// reference_mm, epochs, lr, slices_per_sample).
        #[arg(long)]
        config: PathBuf,
        /// Output directory for the CSV report and volumes.
        #[arg(long)]
        out: PathBuf,
        /// Skip writing the acquired evaluation volumes.
        #[arg(long)]
        no_volumes: bool,
    },
    /// Generate one synthetic phantom and write it as a V4D file.
    Phantom {
        #[arg(long)]
        seed: u64,
        /// Output .v4d path.
        #[arg(long)]
        out: PathBuf,
        /// Number of blobs (half lesions, half distractor rods).
        #[arg(long, default_value_t = 4)]
        blobs: usize,
    },
    /// Evaluate FROC sensitivity for a detection records file.
    Froc {
        /// Records file: `image <n_positives>` and `det <score> <tp|fp>` lines.
        #[arg(long)]
        records: PathBuf,
        /// Comma-separated FPs-per-image levels.
        #[arg(long, default_value = "0.5,1,2,4", value_delimiter = ',')]
        levels: Vec<f64>,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run {
            config,
            out,
            no_volumes,
        } => cmd_run(&config, &out, no_volumes),
        Command::Phantom { seed, out, blobs } => cmd_phantom(seed, &out, blobs),
        Command::Froc { records, levels } => cmd_froc(&records, &levels),
    }
}

fn cmd_run(config_path: &PathBuf, out_dir: &PathBuf, no_volumes: bool) -> Result<()> {
    let text = fs::read_to_string(config_path)
        .with_context(|| format!("reading config {}", config_path.display()))?;
    let cfg = parse_config(&text)?;
    fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;

    let report = run_gap_experiment(&cfg)?;
    let csv_path = out_dir.join("gap_report.csv");
    fs::write(&csv_path, report.to_csv())
        .with_context(|| format!("writing {}", csv_path.display()))?;

    if !no_volumes {
        let volumes_dir = out_dir.join("volumes");
        fs::create_dir_all(&volumes_dir)?;
        for sample in build_cohort(&cfg)?.iter().filter(|s| !s.train) {
            let label = if sample.thin { "thin" } else { "thick" };
            let path = volumes_dir.join(format!("phantom_{:03}_{label}.v4d", sample.phantom_index));
            save_v4d(&path, &sample.volume, sample.spacing)?;
        }
    }

    println!("wrote {}", csv_path.display());
    println!();
    println!(
        "{:<11} {:>8} {:>8} {:>8} {:>8}",
        "strategy", "all", "thin", "thick", "|gap|"
    );
    for strategy in Strategy::ALL {
        println!(
            "{:<11} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
            strategy.as_str(),
            report.avg(strategy, Cohort::All).unwrap_or(f64::NAN),
            report.avg(strategy, Cohort::Thin).unwrap_or(f64::NAN),
            report.avg(strategy, Cohort::Thick).unwrap_or(f64::NAN),
            report.gap_magnitude(strategy).unwrap_or(f64::NAN),
        );
    }
    Ok(())
}

fn cmd_phantom(seed: u64, out: &PathBuf, blobs: usize) -> Result<()> {
    let phantom = generate_phantom(seed, &PhantomSize::default(), blobs)?;
    save_v4d(out, &phantom.volume, phantom.fine_spacing)?;
    println!(
        "wrote {} ({} blobs, key slice {} at {:.2} mm)",
        out.display(),
        phantom.blobs.len(),
        phantom.key_slice,
        phantom.key_z_mm
    );
    Ok(())
}

fn cmd_froc(records_path: &PathBuf, levels: &[f64]) -> Result<()> {
    let text = fs::read_to_string(records_path)
        .with_context(|| format!("reading {}", records_path.display()))?;
    let records = parse_records(&text)?;
    let result = froc_sensitivity(&records, levels)?;
    for (level, sensitivity) in &result.sensitivities {
        println!("fp/image <= {level}: sensitivity {sensitivity:.4}");
    }
    println!(
        "average over {:?}: {:.4}",
        AVG_LEVELS,
        result.avg
    );
    Ok(())
}
