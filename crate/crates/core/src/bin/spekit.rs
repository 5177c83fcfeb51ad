//! `spekit`: command-line front end of the library pipelines.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use spekit::pipeline::{run_pipeline, Command, Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "spekit", version, about = "Single-photon emitter simulation, correlation and fitting")]
struct Cli {
    /// TOML run configuration; defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for reports.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "SPEKIT_THREADS")]
    threads: Option<usize>,
    #[arg(long, global = true)]
    bin_width_ps: Option<u64>,
    #[arg(long, global = true)]
    window_ps: Option<u64>,
    #[arg(long, global = true)]
    power_mw: Option<f64>,
    /// Measured input file instead of synthetic data.
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Simulate an HBT measurement and write a PTAG tag file.
    Simulate,
    /// g²(τ) histogram and bi-exponential fit.
    G2,
    /// Pulsed decay histogram and lifetime fit.
    Lifetime,
    /// Saturation curve fit.
    Saturation,
    /// Polarization fit and optional ensemble classification.
    Polarization,
    /// Spectral peak fit and Debye-Waller factor.
    Spectrum,
    /// Linewidth versus temperature.
    Linewidth,
    /// Power series of g² fits with zero-power extrapolation.
    ReproduceFig2,
    /// Print the default configuration as TOML.
    DefaultConfig,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(3);
        }
    }
    let cmd = match cli.command {
        Cmd::Simulate => Command::Simulate,
        Cmd::G2 => Command::G2,
        Cmd::Lifetime => Command::Lifetime,
        Cmd::Saturation => Command::Saturation,
        Cmd::Polarization => Command::Polarization,
        Cmd::Spectrum => Command::Spectrum,
        Cmd::Linewidth => Command::Linewidth,
        Cmd::ReproduceFig2 => Command::ReproduceFig2,
        Cmd::DefaultConfig => {
            print!("{}", RunConfig::default().to_toml());
            return ExitCode::SUCCESS;
        }
    };
    let result = cli.config.as_ref().map_or_else(|| Ok(RunConfig::default()), RunConfig::load).and_then(|mut cfg| {
        cfg.apply(&Overrides {
            seed: cli.seed,
            power_mw: cli.power_mw,
            bin_width_ps: cli.bin_width_ps,
            window_ps: cli.window_ps,
            input: cli.input.clone(),
        });
        run_pipeline(cmd, &cfg, &cli.out)
    });
    match result {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
