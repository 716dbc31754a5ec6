use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use yamabe_lab::cli::{build_config, parse_override, run, SubcommandKind};

/// Numerical laboratory for the constrained scalar-curvature energy on
/// circle-sphere products: minimizers, spectra, finite-dimensional
/// reduction, and stability-exponent experiments.
#[derive(Parser)]
#[command(name = "yamabe-lab", version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct CommonArgs {
    /// Flat KEY = VALUE config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Single-key override, repeatable: --set grid_n=128
    #[arg(long = "set", value_name = "KEY=VAL", value_parser = parse_override)]
    set: Vec<(String, String)>,
    /// Output directory (overrides out_dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// RNG seed (overrides seed).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Find a minimizer by projected descent with Newton polish.
    Minimize(CommonArgs),
    /// Spectrum of the constrained second variation at the constant base.
    Spectrum(CommonArgs),
    /// Fit the reduced energy on the kernel and classify integrability.
    Reduce(CommonArgs),
    /// Deficit-versus-distance sampling and power-law exponent fit.
    Exponent(CommonArgs),
    /// Family along the kernel maximizer with superquadratic ratio table.
    Superquadratic(CommonArgs),
    /// Eigenvalue sweep over a range of circle lengths.
    Bifurcate(CommonArgs),
    /// Brute-force growth exponent of the reduced polynomial.
    Loja(CommonArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // usage text on stderr; validation-style exit code
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    let (kind, args) = match cli.cmd {
        Cmd::Minimize(a) => (SubcommandKind::Minimize, a),
        Cmd::Spectrum(a) => (SubcommandKind::Spectrum, a),
        Cmd::Reduce(a) => (SubcommandKind::Reduce, a),
        Cmd::Exponent(a) => (SubcommandKind::Exponent, a),
        Cmd::Superquadratic(a) => (SubcommandKind::Superquadratic, a),
        Cmd::Bifurcate(a) => (SubcommandKind::Bifurcate, a),
        Cmd::Loja(a) => (SubcommandKind::Loja, a),
    };
    let cfg = match build_config(args.config.as_deref(), &args.set, args.out, args.seed) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    ExitCode::from(run(kind, &cfg) as u8)
}
