use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use geoslam_core::harness::config::FilterName;
use geoslam_core::harness::{replay_dataset, run_simulation, run_trials, write_log, HarnessError, RunConfig, RunLog};

#[derive(Parser)]
#[command(name = "geoslam", version, about = "Geometric SLAM filters on SE(3): simulation and dataset replay")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Filter {
    Det,
    Stoch,
}

impl From<Filter> for FilterName {
    fn from(f: Filter) -> Self {
        match f {
            Filter::Det => FilterName::Det,
            Filter::Stoch => FilterName::Stoch,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured closed-loop simulation.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        filter: Option<Filter>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Independent runs with seeds seed, seed+1, ... written to
        /// OUT/trial_000, OUT/trial_001, ...
        #[arg(long)]
        trials: Option<usize>,
        /// State snapshot stride.
        #[arg(long)]
        stride: Option<usize>,
        /// Also write imu.csv, truth.csv and landmarks.csv for replay.
        #[arg(long)]
        record_inputs: bool,
    },
    /// Drive the filter from recorded CSV streams.
    Replay {
        #[arg(long)]
        imu: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Landmark measurements; synthesized from the truth when omitted.
        #[arg(long)]
        landmarks: Option<PathBuf>,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        filter: Option<Filter>,
        #[arg(long)]
        stride: Option<usize>,
    },
}

fn report(log: &RunLog, out: &Path) -> Result<(), HarnessError> {
    let s = log.summary()?;
    let tail = |name: &str| s.get(name).map_or(f64::NAN, |c| c.tail_mean);
    println!(
        "{}: seed {} steps {} tail-mean att_err {:.3e} pos_err {:.3e} lm_err_max {:.3e}",
        out.display(),
        log.config.seed,
        s.samples,
        tail("att_err"),
        tail("pos_err"),
        tail("lm_err_max"),
    );
    Ok(())
}

fn write_trial_table(logs: &[RunLog], path: &Path) -> Result<(), HarnessError> {
    let mut text = String::from("trial,seed,att_err,pos_err,lm_err_max,lyap\n");
    for (i, log) in logs.iter().enumerate() {
        let s = log.summary()?;
        let col = |name: &str| s.get(name).map_or(f64::NAN, |c| c.tail_mean);
        text += &format!(
            "{i},{},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            log.config.seed,
            col("att_err"),
            col("pos_err"),
            col("lm_err_max"),
            col("lyap"),
        );
    }
    std::fs::write(path, text).map_err(|e| HarnessError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Simulate {
            config,
            seed,
            filter,
            out,
            trials,
            stride,
            record_inputs,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(f) = filter {
                cfg.filter = f.into();
            }
            if let Some(k) = stride {
                cfg.stride = k;
            }
            cfg.record_inputs |= record_inputs;
            cfg.validate()?;
            match trials {
                None => {
                    let log = run_simulation(&cfg)?;
                    write_log(&log, &out)?;
                    report(&log, &out)
                }
                Some(0) => Err(HarnessError::Config("--trials must be at least 1".into())),
                Some(n) => {
                    let logs = run_trials(&cfg, n)?;
                    for (i, log) in logs.iter().enumerate() {
                        let dir = out.join(format!("trial_{i:03}"));
                        write_log(log, &dir)?;
                        report(log, &dir)?;
                    }
                    write_trial_table(&logs, &out.join("trials.csv"))
                }
            }
        }
        Command::Replay {
            imu,
            truth,
            landmarks,
            config,
            out,
            filter,
            stride,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(f) = filter {
                cfg.filter = f.into();
            }
            if let Some(k) = stride {
                cfg.stride = k;
            }
            let log = replay_dataset(&imu, landmarks.as_deref(), &truth, &cfg)?;
            for w in &log.warnings {
                log::warn!("{w}");
            }
            write_log(&log, &out)?;
            report(&log, &out)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
