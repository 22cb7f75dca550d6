//! Command line front end.
//!
//! Exit codes: 0 on success, 2 when a scheme fails validation, 3 on file
//! errors, 1 otherwise.

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use siphase::error::{Error, Result};
use siphase::harness::{
    run_experiment_with, run_scaling_experiment, write_results_header, write_results_row,
    ExperimentSpec,
};
use siphase::meps::{meps_reconstruct, M0Mode, MepsConfig};
use siphase::sampling::{
    block_range_for_support, take_phaseless_samples, validate_scheme, NoiseModel, NoisySamples,
    SchemeFile,
};
use siphase::signal::{CoeffWindow, SisSignal};

#[derive(Parser)]
#[command(
    name = "siphase",
    about = "Phase retrieval in shift-invariant spaces from squared-magnitude samples"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum NoiseArg {
    Absolute,
    Relative,
}

impl From<NoiseArg> for NoiseModel {
    fn from(v: NoiseArg) -> Self {
        match v {
            NoiseArg::Absolute => NoiseModel::Absolute,
            NoiseArg::Relative => NoiseModel::RelativeToPeak,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check every scheme invariant and print the conditioning quantities.
    Validate {
        #[arg(long)]
        scheme: PathBuf,
    },
    /// Generate noisy squared-magnitude samples of a coefficient file.
    Sample {
        #[arg(long)]
        scheme: PathBuf,
        #[arg(long)]
        coeffs: PathBuf,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Noise model; the relative model scales by the squared signal peak.
        #[arg(long, value_enum, default_value = "relative")]
        noise: NoiseArg,
        /// Inclusive block range "lo:hi"; defaults to the coefficient
        /// support padded by one block.
        #[arg(long)]
        blocks: Option<String>,
    },
    /// Reconstruct coefficients from a sample file.
    Reconstruct {
        #[arg(long)]
        scheme: PathBuf,
        #[arg(long)]
        samples: PathBuf,
        /// Extension threshold: a number, "oracle:<coeffs.csv>", or "auto".
        #[arg(long)]
        m0: String,
        #[arg(long)]
        out: PathBuf,
        /// Optional per-block diagnostics JSON.
        #[arg(long)]
        diag: Option<PathBuf>,
    },
    /// Run a success-rate grid and write one CSV row per cell.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit log-log error scaling slopes for one fixed signal.
    Scaling {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_blocks(spec: &str) -> Result<(i64, i64)> {
    let (lo, hi) = spec
        .split_once(':')
        .ok_or_else(|| Error::InvalidArgument("blocks must look like lo:hi".into()))?;
    let lo = lo
        .trim()
        .parse()
        .map_err(|e| Error::InvalidArgument(format!("blocks: {e}")))?;
    let hi = hi
        .trim()
        .parse()
        .map_err(|e| Error::InvalidArgument(format!("blocks: {e}")))?;
    Ok((lo, hi))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Validate { scheme } => {
            let (g, scheme) = SchemeFile::read_path(&scheme)?.build::<f64>()?;
            let check = validate_scheme(&scheme, &g)?;
            println!("scheme valid");
            println!("  support length       {}", g.support_len());
            println!("  period L             {}", scheme.period());
            println!("  full spark           {}", check.full_spark);
            println!("  min submatrix sigma  {:.6e}", check.min_submatrix_sigma);
            println!("  matrix norm          {:.6e}", check.spectral_norm);
            println!("  inverse norm         {:.6e}", check.inverse_norm);
            println!("  min |phi(gamma)|     {:.6e}", check.min_phi_gamma);
            println!("  min |phi(gamma**)|   {:.6e}", check.min_phi_gamma_ss);
        }
        Command::Sample {
            scheme,
            coeffs,
            eps,
            seed,
            out,
            noise,
            blocks,
        } => {
            let (g, scheme) = SchemeFile::read_path(&scheme)?.build::<f64>()?;
            let window = CoeffWindow::<f64>::read_csv_path(&coeffs)?;
            let f = SisSignal::from_window(g, window);
            let range = match blocks {
                Some(spec) => parse_blocks(&spec)?,
                None => block_range_for_support(f.support_bounds()?, scheme.period()),
            };
            let samples = take_phaseless_samples(&f, &scheme, range, eps, noise.into(), seed)?;
            samples.write_csv_path(&out)?;
            println!(
                "wrote {} samples for blocks {}..={} to {}",
                samples.entries().len(),
                range.0,
                range.1,
                out.display()
            );
        }
        Command::Reconstruct {
            scheme,
            samples,
            m0,
            out,
            diag,
        } => {
            let (g, scheme) = SchemeFile::read_path(&scheme)?.build::<f64>()?;
            let samples = NoisySamples::read_csv_path(&samples, &scheme)?;
            let m0 = if m0 == "auto" {
                M0Mode::Auto
            } else if let Some(path) = m0.strip_prefix("oracle:") {
                let coeffs = CoeffWindow::<f64>::read_csv_path(std::path::Path::new(path))?;
                M0Mode::Oracle(coeffs)
            } else {
                let v: f64 = m0
                    .parse()
                    .map_err(|e| Error::InvalidArgument(format!("m0: {e}")))?;
                if v < 0.0 {
                    return Err(Error::InvalidArgument("m0 must be nonnegative".into()));
                }
                M0Mode::Explicit(v)
            };
            let config = MepsConfig {
                m0,
                ..MepsConfig::default()
            };
            let rec = meps_reconstruct(&samples, &scheme, &g, &config)?;
            rec.write_csv_path(&out)?;
            if let Some(diag_path) = diag {
                rec.write_diagnostics_path(&diag_path)?;
            }
            println!(
                "reconstructed {} coefficients (threshold {:.3e}) to {}",
                rec.coeffs().len(),
                rec.m0_used(),
                out.display()
            );
        }
        Command::Experiment { config, out } => {
            let spec = ExperimentSpec::read_path(&config)?;
            let file = std::fs::File::create(&out)?;
            let mut w = std::io::BufWriter::new(file);
            write_results_header(&mut w)?;
            run_experiment_with(&spec, |cell| {
                write_results_row(&mut w, cell)?;
                w.flush()?;
                println!(
                    "eps {:>9.3e}  L {:>3}  success {:>6.3}  mean_e {:.3e}",
                    cell.epsilon, cell.l, cell.success_rate, cell.mean_e
                );
                Ok(())
            })?;
            println!("wrote {}", out.display());
        }
        Command::Scaling { config, out } => {
            let spec = ExperimentSpec::read_path(&config)?;
            let report = run_scaling_experiment(&spec)?;
            report.write_path(&out)?;
            println!(
                "slopes: e {:.3}  interior {:.3}  e2 {:.3} -> {}",
                report.slope_e,
                report.slope_interior,
                report.slope_e2,
                out.display()
            );
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
