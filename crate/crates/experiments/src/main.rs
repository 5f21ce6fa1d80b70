use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qate_experiments::config::{ed_cap, load_config, FitAxis};
use qate_experiments::fit::{fit_records, Quantity};
use qate_experiments::figures::{emit_figure_data, figure_ids};
use qate_experiments::output::{read_results_csv, write_fits, write_outcomes, FITS_CSV};
use qate_experiments::sweep::run_sweep;
use qate_experiments::{ExperimentError, Result};

#[derive(Parser)]
#[command(name = "qate", about = "Quasi-adiabatic thermal evolution sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every point of a sweep and write results.
    Run {
        config: PathBuf,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Output directory; defaults to the config's output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a power law to persisted results.
    Fit {
        results: PathBuf,
        #[arg(long)]
        quantity: String,
        #[arg(long)]
        axis: String,
        /// Inclusive window `lo:hi` on the axis.
        #[arg(long)]
        window: String,
        /// Also write the fits as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build a plot-data bundle from a results directory.
    Figure {
        results_dir: PathBuf,
        #[arg(long)]
        id: String,
    },
    /// Check a config without running it.
    Validate { config: PathBuf },
}

fn parse_window(s: &str) -> Result<(f64, f64)> {
    let bad = || ExperimentError::Config(format!("window '{s}' is not lo:hi"));
    let (lo, hi) = s.split_once(':').ok_or_else(bad)?;
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    if !(lo < hi) {
        return Err(bad());
    }
    Ok((lo, hi))
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { config, workers, out } => {
            let cfg = load_config(&config)?;
            let cap = ed_cap()?;
            let dir = out.unwrap_or_else(|| cfg.output_dir.clone());
            let outcomes = run_sweep(&cfg, workers, cap)?;
            let written = write_outcomes(&cfg, &outcomes, &dir)?;
            let records: Vec<_> = outcomes.iter().map(|o| o.record.clone()).collect();
            let mut fits = Vec::new();
            for f in &cfg.fits {
                let q = Quantity::parse(&f.quantity)
                    .ok_or_else(|| ExperimentError::Config(format!("fits.quantity: unknown '{}'", f.quantity)))?;
                fits.extend(fit_records(&records, q, f.axis, f.window));
            }
            if !fits.is_empty() {
                write_fits(&fits, &dir.join(FITS_CSV))?;
                for f in &fits {
                    match &f.fit {
                        Some(p) => println!(
                            "{} vs {} [{}]: exponent {:.4} r2 {:.4}",
                            f.quantity,
                            f.axis.as_str(),
                            f.group,
                            p.exponent,
                            p.r2
                        ),
                        None => println!("{} vs {} [{}]: {}", f.quantity, f.axis.as_str(), f.group, f.error.as_deref().unwrap_or("")),
                    }
                }
            }
            let failed: Vec<_> = records.iter().filter(|r| r.error.is_some()).collect();
            println!("{} points, {} failed, results in {}", records.len(), failed.len(), written.results_csv.display());
            for r in &failed {
                eprintln!("N={} T={} beta={}: {}", r.n, r.t, r.beta, r.error.as_deref().unwrap_or(""));
            }
            Ok(if failed.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        Command::Fit {
            results,
            quantity,
            axis,
            window,
            out,
        } => {
            let q = Quantity::parse(&quantity).ok_or_else(|| ExperimentError::Config(format!("unknown quantity '{quantity}'")))?;
            let axis = FitAxis::parse(&axis).ok_or_else(|| ExperimentError::Config(format!("unknown axis '{axis}'")))?;
            let window = parse_window(&window)?;
            let records = read_results_csv(&results)?;
            let fits = fit_records(&records, q, axis, window);
            println!("group,exponent,prefactor,r2,points");
            let mut any_ok = false;
            for f in &fits {
                match &f.fit {
                    Some(p) => {
                        any_ok = true;
                        println!("{},{},{},{},{}", f.group, p.exponent, p.prefactor, p.r2, p.points);
                    }
                    None => eprintln!("{}: {}", f.group, f.error.as_deref().unwrap_or("")),
                }
            }
            if let Some(path) = out {
                write_fits(&fits, &path)?;
            }
            Ok(if any_ok { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        Command::Figure { results_dir, id } => {
            let ids = if id == "all" { figure_ids() } else { vec![id.as_str()] };
            for id in ids {
                let dir = emit_figure_data(&results_dir, id)?;
                println!("{}", dir.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { config } => {
            let cfg = load_config(&config)?;
            let cap = ed_cap()?;
            println!("{}: {} points, hash {}", cfg.name, cfg.points().len(), cfg.hash());
            for n in &cfg.n_list {
                println!("N={n}: {}", cfg.engine_for(*n, cap)?.as_str());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
