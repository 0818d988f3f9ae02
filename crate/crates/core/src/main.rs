use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use glider_anomaly::harness::{
    cmd_detect_offline, cmd_detect_online, cmd_replay_online, cmd_simulate, load_config_file, Overrides, ReplayOptions,
    Role,
};
use glider_anomaly::simulator::{AnomalyInjection, AnomalyKind};
use glider_anomaly::{Error, Result};

/// Flow and speed estimation with anomaly detection for underwater gliders.
///
/// Exit codes: 0 no anomaly, 1 error, 2 anomaly detected, 3 false alarm only.
#[derive(Debug, Parser)]
#[command(name = "glider-anomaly", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML configuration file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, env = "GLIDER_ANOMALY_OUT", default_value = "out", global = true)]
    out: PathBuf,
    /// RNG seed for simulated flow and sensor noise.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Lower bound of the nominal speed band, m/s.
    #[arg(long, global = true)]
    v_min: Option<f64>,
    /// Upper bound of the nominal speed band, m/s.
    #[arg(long, global = true)]
    v_max: Option<f64>,
    /// Flow-error threshold for false-alarm classification.
    #[arg(long, global = true)]
    gamma_f: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a deployment and write dense, sparse and ground-truth files.
    Simulate {
        /// Inject an anomaly: kind:t_start[:magnitude[:t_end]], times in seconds.
        #[arg(long = "anomaly", value_parser = parse_anomaly)]
        anomalies: Vec<AnomalyInjection>,
    },
    /// Hindcast detection over a dense record file.
    DetectOffline {
        #[arg(long)]
        dense: PathBuf,
        /// Sparse file supplying the model flow F_M.
        #[arg(long)]
        sparse: Option<PathBuf>,
    },
    /// One-shot online detection over a sparse record file.
    DetectOnline {
        #[arg(long)]
        sparse: PathBuf,
    },
    /// Replay a sparse file through a spool directory, one record per tick.
    ReplayOnline {
        #[arg(long)]
        sparse: PathBuf,
        /// Seconds per record; 0 flushes the whole feed at once.
        #[arg(long, default_value_t = 0.0)]
        cadence: f64,
        /// Sleep the cadence in wall-clock time instead of logical ticks.
        #[arg(long)]
        realtime: bool,
        /// both, feeder or consumer.
        #[arg(long, default_value = "both")]
        role: Role,
        /// Stop feeding after this many records.
        #[arg(long)]
        feed_limit: Option<usize>,
    },
}

fn parse_anomaly(s: &str) -> std::result::Result<AnomalyInjection, String> {
    let parts: Vec<&str> = s.split(':').collect();
    if !(2..=4).contains(&parts.len()) {
        return Err("expected kind:t_start[:magnitude[:t_end]]".into());
    }
    let kind: AnomalyKind = parts[0].parse().map_err(|e: Error| e.to_string())?;
    let num = |p: &str| p.parse::<f64>().map_err(|e| format!("`{p}`: {e}"));
    let inj = AnomalyInjection {
        kind,
        t_start: num(parts[1])?,
        magnitude: parts.get(2).map(|p| num(p)).transpose()?.unwrap_or(1.0),
        t_end: parts.get(3).map(|p| num(p)).transpose()?,
    };
    inj.validate().map_err(|e| e.to_string())?;
    Ok(inj)
}

fn overrides(c: &Common, anomalies: Vec<AnomalyInjection>) -> Overrides {
    Overrides {
        seed: c.seed,
        v_min: c.v_min,
        v_max: c.v_max,
        gamma_f: c.gamma_f,
        anomalies,
    }
}

fn run(cli: Cli) -> Result<i32> {
    let common = cli.common;
    match cli.command {
        Command::Simulate { anomalies } => {
            let cf = load_config_file(common.config.as_deref(), &overrides(&common, anomalies))?;
            let rc = cf.resolve()?;
            let files = cmd_simulate(&rc, common.config.as_deref(), &common.out)?;
            for p in [&files.dense, &files.sparse, &files.truth] {
                println!("{}", p.display());
            }
            Ok(0)
        }
        Command::DetectOffline { dense, sparse } => {
            let cf = load_config_file(common.config.as_deref(), &overrides(&common, Vec::new()))?;
            let outcome = cmd_detect_offline(&dense, sparse.as_deref(), &cf, common.config.as_deref(), &common.out)?;
            print!("{}", outcome.bundle.summary());
            Ok(outcome.verdict.exit_code())
        }
        Command::DetectOnline { sparse } => {
            let cf = load_config_file(common.config.as_deref(), &overrides(&common, Vec::new()))?;
            let outcome = cmd_detect_online(&sparse, &cf, common.config.as_deref(), &common.out)?;
            print!("{}", outcome.bundle.summary());
            Ok(outcome.verdict.exit_code())
        }
        Command::ReplayOnline {
            sparse,
            cadence,
            realtime,
            role,
            feed_limit,
        } => {
            let cf = load_config_file(common.config.as_deref(), &overrides(&common, Vec::new()))?;
            let opts = ReplayOptions {
                cadence,
                realtime,
                role,
                feed_limit,
            };
            match cmd_replay_online(&sparse, &cf, common.config.as_deref(), &common.out, &opts)? {
                Some(outcome) => {
                    print!("{}", outcome.bundle.summary());
                    Ok(outcome.verdict.exit_code())
                }
                None => Ok(0),
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
