use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sebays::cli::{self, SweepAxis};
use sebays::config::RunConfig;
use sebays::schedule::{PhasePlan, Schedule};
use sebays::Result;

#[derive(Parser)]
#[command(name = "sebays", about = "Sequential Bayesian subnetwork ensembles")]
struct Args {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train the sequential ensemble described by a run config.
    Train {
        config: PathBuf,
        /// Override a config key, e.g. `--set trainer.rho=5`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Score the snapshots of a run directory.
    Eval {
        run_dir: PathBuf,
        /// Config to evaluate with; defaults to the run's own copy.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Disagreement and KL diversity of a run's learners.
    Diversity { run_dir: PathBuf },
    /// Train once per value along one axis and compare.
    Sweep {
        config: PathBuf,
        /// One of M, rho, schedule, mc.
        #[arg(long)]
        axis: SweepAxis,
        /// Comma separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Print the learning rate of every epoch under each schedule.
    ScheduleDump {
        /// Read the plan from this run config instead of the defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        schedule: Option<Schedule>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

fn run(args: Args) -> Result<()> {
    match args.cmd {
        Cmd::Train { config, set } => {
            let cfg = RunConfig::load_with_overrides(&config, &set)?;
            let run = cli::cmd_train(&cfg)?;
            println!("wrote {} snapshots to {}", run.snapshots.len(), cfg.output_dir.display());
        }
        Cmd::Eval { run_dir, config, set } => {
            let path = config.unwrap_or_else(|| run_dir.join(cli::CONFIG_FILE));
            let cfg = RunConfig::load_with_overrides(&path, &set)?;
            let out = cli::cmd_eval(&run_dir, &cfg)?;
            for r in out.reports.iter().filter(|r| r.model == "ensemble") {
                println!("mc={} acc={:.4} nll={:.4} ece={:.4}", r.mc, r.acc, r.nll, r.ece);
            }
        }
        Cmd::Diversity { run_dir } => {
            let cfg = cli::load_run_config(&run_dir)?;
            let row = cli::cmd_diversity(&run_dir, &cfg)?;
            println!("d_dis={:.4} d_kl={:.4} acc={:.4}", row.d_dis, row.d_kl, row.acc);
        }
        Cmd::Sweep { config, axis, values, set } => {
            let cfg = RunConfig::load_with_overrides(&config, &set)?;
            for r in cli::cmd_sweep(&cfg, axis, &values)? {
                println!("{}={} acc={:.4} nll={:.4}", axis_name(axis), r.value, r.ensemble_acc, r.ensemble_nll);
            }
        }
        Cmd::ScheduleDump { config, schedule, out } => {
            let plan = match config {
                Some(p) => RunConfig::load(&p)?.trainer.plan,
                None => PhasePlan::default(),
            };
            let csv = cli::cmd_schedule_dump(&plan, schedule, out.as_deref())?;
            if out.is_none() {
                print!("{csv}");
            }
        }
    }
    Ok(())
}

fn axis_name(a: SweepAxis) -> &'static str {
    match a {
        SweepAxis::M => "M",
        SweepAxis::Rho => "rho",
        SweepAxis::Schedule => "schedule",
        SweepAxis::Mc => "mc",
    }
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
