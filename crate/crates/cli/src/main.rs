//! `levitrap` command line.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 runtime error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use levitrap::protocols::{run_to_dir, Format, ProtocolConfig, Scenario};
use levitrap::Error;

#[derive(Parser)]
#[command(name = "levitrap", version, about = "Levitated micro-diamond trap and NV thermometry protocols")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Floquet stability over a (q, a, damping) grid.
    StabilityMap(Common),
    /// Locate the instability onset and estimate Q/m.
    Preselect(Common),
    /// Iso-q voltage ramp followed by a pressure schedule.
    Pumpdown(Common),
    /// Closed-loop thermometry against laser power.
    SweepPower(Common),
    /// Closed-loop thermometry against gas pressure.
    SweepPressure(Common),
    /// Write a synthetic ESR spectrum.
    SynthOdmr(Common),
    /// Fit the double dip of a spectrum CSV.
    FitOdmr(Common),
    /// Temperature from a splitting or a spectrum.
    InvertTemp(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Args)]
struct Common {
    /// TOML file overriding the scenario defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
    /// Print the resolved configuration as TOML and exit.
    #[arg(long)]
    print_config: bool,
}

impl Command {
    fn split(&self) -> (Scenario, &Common) {
        match self {
            Command::StabilityMap(c) => (Scenario::StabilityMap, c),
            Command::Preselect(c) => (Scenario::Preselect, c),
            Command::Pumpdown(c) => (Scenario::Pumpdown, c),
            Command::SweepPower(c) => (Scenario::SweepPower, c),
            Command::SweepPressure(c) => (Scenario::SweepPressure, c),
            Command::SynthOdmr(c) => (Scenario::SynthOdmr, c),
            Command::FitOdmr(c) => (Scenario::FitOdmr, c),
            Command::InvertTemp(c) => (Scenario::InvertTemp, c),
        }
    }
}

fn load(scenario: Scenario, args: &Common) -> Result<ProtocolConfig, Error> {
    let mut cfg = match &args.config {
        Some(path) => ProtocolConfig::from_path(path, scenario)?,
        None => {
            let c = ProtocolConfig::defaults(scenario);
            c.validate()?;
            c
        }
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (scenario, args) = cli.command.split();
    let cfg = match load(scenario, args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("levitrap {scenario}: {e}");
            return ExitCode::from(1);
        }
    };
    if args.print_config {
        return match cfg.to_toml() {
            Ok(t) => {
                print!("{t}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("levitrap {scenario}: {e}");
                ExitCode::from(2)
            }
        };
    }
    let format = match args.format {
        FormatArg::Csv => Format::Csv,
        FormatArg::Json => Format::Json,
    };
    match run_to_dir(&cfg, &args.out, format) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("levitrap {scenario}: {e}");
            ExitCode::from(if matches!(e, Error::Config(_)) { 1 } else { 2 })
        }
    }
}
