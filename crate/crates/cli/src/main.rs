use std::fmt::Write as _;
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use cellm2m::capacity::{d_only_outage, offered_load, LoadSummary};
use cellm2m::runner::{
    population_for, raw_capacity, results_csv, run_scenario, sweep_points, traffic_validation,
    validation_csv, write_file,
};
use cellm2m::scenario::{parse_config_file, ModeSelection, Scenario};

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "cellm2m", version, about = "Smart-meter traffic over GPRS and LTE access reservation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    #[value(name = "arp+d")]
    ArpD,
    #[value(name = "d-only")]
    DOnly,
    Both,
}

impl From<Mode> for ModeSelection {
    fn from(m: Mode) -> Self {
        match m {
            Mode::ArpD => ModeSelection::ArpD,
            Mode::DOnly => ModeSelection::DOnly,
            Mode::Both => ModeSelection::Both,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the outage sweep and write results.csv.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        replications: Option<usize>,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
    },
    /// Generate traffic only and compare daily volumes with the reference table.
    ValidateTraffic {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        days: Option<u32>,
    },
    /// Print offered load, raw capacity and the data-only outage per sweep point.
    Capacity {
        #[arg(long)]
        config: PathBuf,
    },
}

enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

fn load(path: &Path) -> Result<Scenario, Failure> {
    parse_config_file(path)
        .with_context(|| format!("invalid config {}", path.display()))
        .map_err(Failure::Config)
}

fn prepare_out(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))
        .map_err(Failure::Runtime)
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    let path = dir.join(name);
    write_file(&path, contents)
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(Failure::Runtime)
}

fn run_validation(s: &Scenario, out: &Path) -> Result<(), Failure> {
    let tables = traffic_validation(s).map_err(|e| Failure::Runtime(e.into()))?;
    write(out, "traffic_validation.csv", &validation_csv(&tables))
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { config, out, seed, replications, mode } => {
            let mut s = load(&config)?;
            if let Some(seed) = seed {
                s.seed = seed;
            }
            if let Some(r) = replications {
                s.replications = r;
            }
            if let Some(m) = mode {
                s.mode = m.into();
            }
            s.validate().map_err(|e| Failure::Config(e.into()))?;
            prepare_out(&out)?;
            let results = run_scenario(&s).map_err(|e| Failure::Runtime(e.into()))?;
            write(&out, "results.csv", &results_csv(&s, &results))?;
            if s.traffic_validation {
                run_validation(&s, &out)?;
            }
            Ok(())
        }
        Command::ValidateTraffic { config, out, days } => {
            let mut s = load(&config)?;
            if let Some(d) = days {
                s.validation_days = d;
            }
            s.validate().map_err(|e| Failure::Config(e.into()))?;
            prepare_out(&out)?;
            run_validation(&s, &out)
        }
        Command::Capacity { config } => {
            let s = load(&config)?;
            let capacity = raw_capacity(&s);
            let mut table =
                String::from("n_sm,ri_s,esm_penetration_pct,rs_bytes,offered_load_bps,capacity_bps,d_only_outage\n");
            for p in sweep_points(&s) {
                let pop = population_for(&s, &p, s.seed).map_err(|e| Failure::Runtime(e.into()))?;
                let load = offered_load(&pop);
                let d = LoadSummary::new(load, capacity).map(|l| d_only_outage(&l)).unwrap_or(0.0);
                let _ = writeln!(
                    table,
                    "{},{},{},{},{:.3},{:.3},{:.6}",
                    p.n_sm,
                    p.ri.label(),
                    p.esm_penetration,
                    p.rs.map(|v| v.to_string()).unwrap_or_default(),
                    load,
                    capacity,
                    d
                );
            }
            match std::io::stdout().lock().write_all(table.as_bytes()) {
                // A closed pipe (`| head`) is not an error.
                Err(e) if e.kind() != ErrorKind::BrokenPipe => Err(Failure::Runtime(e.into())),
                _ => Ok(()),
            }
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
