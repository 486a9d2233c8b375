//! `pemfc`: synthetic database generation, identification, law fitting,
//! breakpoint detection and ensemble prediction from the command line.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pemfc_prognostics::Error;

use config::RunConfig;

#[derive(Parser)]
#[command(name = "pemfc", version, about = "PEM fuel cell aging prognostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; defaults apply to every missing key.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
}

#[derive(Args)]
struct DbArgs {
    /// Database directory (polarization.csv, r_ohm.csv, voltage.csv).
    database: PathBuf,
    #[command(flatten)]
    common: Common,
    /// End of the learning window, h. Defaults to the last characterization.
    #[arg(long, value_name = "HOURS")]
    tn: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic database and its truth file.
    Synth(Common),
    /// Identify quasi-static parameters of every polarization curve.
    Identify(DbArgs),
    /// Fit aging laws to the identified parameters.
    Fitlaws(DbArgs),
    /// Detect the limiting-current-density breakpoint.
    Detect(DbArgs),
    /// Learn on [0, t_n] and predict the voltage ensemble and RUL.
    Predict {
        #[command(flatten)]
        db: DbArgs,
        /// Number of scenarios.
        #[arg(long, value_name = "N")]
        scenarios: Option<usize>,
        /// Also predict with the single-exponential jlim law and report its APE.
        #[arg(long)]
        compare_model1: bool,
        /// Write each scenario's jlim trajectory under <out>/scenarios/.
        #[arg(long)]
        dump_scenarios: bool,
    },
}

fn load(common: &Common) -> pemfc_prognostics::Result<RunConfig> {
    let mut cfg = RunConfig::load(common.config.as_deref())?;
    if let Some(s) = common.seed {
        cfg.prognosis.scenario.seed = s;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> pemfc_prognostics::Result<()> {
    match cli.command {
        Command::Synth(c) => commands::synth(&load(&c)?, &c.out),
        Command::Identify(a) => commands::identify(&load(&a.common)?, &a.database, &a.common.out, a.tn),
        Command::Fitlaws(a) => commands::fitlaws(&load(&a.common)?, &a.database, &a.common.out, a.tn),
        Command::Detect(a) => commands::detect(&load(&a.common)?, &a.database, &a.common.out, a.tn),
        Command::Predict {
            db,
            scenarios,
            compare_model1,
            dump_scenarios,
        } => {
            let mut cfg = load(&db.common)?;
            if let Some(n) = scenarios {
                cfg.prognosis.scenario.n_scenarios = n;
            }
            commands::predict(
                &cfg,
                &commands::PredictArgs {
                    db_dir: db.database,
                    out: db.common.out,
                    tn: db.tn,
                    compare_model1,
                    dump_scenarios,
                },
            )
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_validation() {
        2
    } else if e.is_io() {
        3
    } else {
        4
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
