use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ipvt_cli::{parse_inline, resolve_config, run, ConfigFile, Experiment};

#[derive(Parser)]
#[command(name = "ipvt", version, about = "Simulation experiments for the ideal Poisson-Voronoi tessellation of H2 x H2")]
struct Cli {
    /// Master seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// TOML config; its values win over the command line
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Record wall time in the report (breaks byte-identical reruns)
    #[arg(long, global = true)]
    wall_time: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Inline {
    /// Parameters as key=value
    params: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Ball volume: closed form against quadrature
    Volume(Inline),
    /// Finite-intensity delays against the limit law
    Delays(Inline),
    /// Corona process sample and portrait
    CoronaPortrait(Inline),
    /// Covering by hyperbolic crosses and inscribed disks
    Coverage(Inline),
    /// No-man's-land region in a slice
    Mushroom(Inline),
    /// Separation field near the boundary
    Field(Inline),
    /// Tie-break constant by two estimators
    Tiebreak(Inline),
    /// Rays leaving the origin cell away from its end
    EndProbe(Inline),
    /// No-man's-land witnesses along the traveler
    NmlProbe(Inline),
    /// Isometry invariance of separation and corona law
    IsometryCheck(Inline),
}

impl Command {
    fn split(self) -> (Experiment, Vec<String>) {
        match self {
            Command::Volume(i) => (Experiment::Volume, i.params),
            Command::Delays(i) => (Experiment::Delays, i.params),
            Command::CoronaPortrait(i) => (Experiment::CoronaPortrait, i.params),
            Command::Coverage(i) => (Experiment::Coverage, i.params),
            Command::Mushroom(i) => (Experiment::Mushroom, i.params),
            Command::Field(i) => (Experiment::Field, i.params),
            Command::Tiebreak(i) => (Experiment::Tiebreak, i.params),
            Command::EndProbe(i) => (Experiment::EndProbe, i.params),
            Command::NmlProbe(i) => (Experiment::NmlProbe, i.params),
            Command::IsometryCheck(i) => (Experiment::IsometryCheck, i.params),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn execute(cli: Cli) -> ipvt_cli::Result<bool> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(ipvt_cli::CliError::InvalidParameter {
                key: "threads".into(),
                value: "0".into(),
                reason: "must be at least 1".into(),
            });
        }
        // only fails if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let (experiment, raw) = cli.command.split();
    let inline = parse_inline(&raw)?;
    let file = match &cli.config {
        Some(path) => Some((path.as_path(), ConfigFile::load(path)?)),
        None => None,
    };
    let (config, warnings) = resolve_config(experiment, inline, cli.seed, cli.out, file)?;
    for w in warnings {
        eprintln!("warning: {w}");
    }
    let report = run(&config, cli.wall_time)?;
    for c in &report.checks {
        println!("{}: {} ({})", c.name, if c.pass { "PASS" } else { "FAIL" }, c.detail);
    }
    println!(
        "{} {}; report in {}",
        report.experiment,
        if report.pass { "PASS" } else { "FAIL" },
        config.output_dir.join(format!("{}.report.json", report.experiment)).display()
    );
    Ok(report.pass)
}
