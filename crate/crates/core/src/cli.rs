//! Command-line entry point.

use std::ffi::OsString;
use std::path::PathBuf;
use std::sync::Mutex;

use clap::Parser;

use crate::error::{Error, Result};
use crate::experiment::{ScenarioConfig, Simulator};
use crate::io::{fmt_num, load_config, write_cir_dump, write_results, RunInfo};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

pub const WORKERS_ENV: &str = "OWC_SIM_WORKERS";

#[derive(Debug, Parser)]
#[command(
    name = "owc-noma",
    version,
    about = "Sweep the NOMA power allocation factor and user count in a beam-steered optical wireless downlink"
)]
pub struct Args {
    /// Scenario config file (key = value); omitted keys use defaults.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory for CSVs and the manifest.
    #[arg(long, value_name = "DIR", default_value = "results")]
    pub out: PathBuf,
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    #[arg(long, value_name = "N")]
    pub trials: Option<usize>,
    /// Comma-separated power allocation factors.
    #[arg(long, value_name = "LIST", value_delimiter = ',')]
    pub alphas: Option<Vec<f64>>,
    /// Comma-separated user counts.
    #[arg(long, value_name = "LIST", value_delimiter = ',')]
    pub users: Option<Vec<usize>>,
    /// Worker threads (falls back to $OWC_SIM_WORKERS, then the CPU count).
    #[arg(long, value_name = "N")]
    pub workers: Option<usize>,
    /// Highest reflection order in the channel (0, 1 or 2).
    #[arg(long, value_parser = clap::value_parser!(u8).range(0..=2))]
    pub reflections: Option<u8>,
    /// Write every AP-to-user impulse response under <out>/cir/.
    #[arg(long)]
    pub dump_cir: bool,
}

impl Args {
    /// Config file (or defaults) with command-line overrides applied.
    pub fn scenario(&self) -> Result<ScenarioConfig> {
        let mut c = match &self.config {
            Some(p) => load_config(p)?,
            None => ScenarioConfig::default(),
        };
        if let Some(s) = self.seed {
            c.master_seed = s;
        }
        if let Some(t) = self.trials {
            c.trials = t;
        }
        if let Some(a) = &self.alphas {
            c.alphas = a.clone();
        }
        if let Some(u) = &self.users {
            c.user_counts = u.clone();
        }
        if let Some(r) = self.reflections {
            c.channel.reflections = r;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn worker_count(&self) -> Result<usize> {
        if let Some(w) = self.workers {
            return if w == 0 {
                Err(Error::config_key("workers", "must be >= 1"))
            } else {
                Ok(w)
            };
        }
        if let Ok(v) = std::env::var(WORKERS_ENV) {
            return match v.trim().parse::<usize>() {
                Ok(w) if w > 0 => Ok(w),
                _ => Err(Error::config_key(
                    WORKERS_ENV,
                    format!("expected a positive integer, got `{v}`"),
                )),
            };
        }
        Ok(std::thread::available_parallelism().map_or(1, |n| n.get()))
    }
}

fn timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

pub fn run(args: &Args) -> Result<()> {
    let config = args.scenario()?;
    let workers = args.worker_count()?;
    let started = timestamp();
    let sim = Simulator::new(config)?;
    let total = sim.config().alphas.len() * sim.config().user_counts.len();
    let mut done = 0usize;
    let dumped = Mutex::new(Vec::new());
    let (sweep, trials) = sim.run_sweep(
        workers,
        args.dump_cir,
        |cell| {
            done += 1;
            eprintln!(
                "[{done}/{total}] alpha={} users={} mean_sum_rate={} bps mean_ber={}",
                cell.alpha,
                cell.n_users,
                fmt_num(cell.mean_sum_rate),
                fmt_num(cell.mean_ber)
            );
        },
        |n, t, scene| {
            if args.dump_cir {
                let names = write_cir_dump(&args.out, n, t, scene)?;
                dumped.lock().expect("dump list").extend(names);
            }
            Ok(())
        },
    )?;
    let mut extra_files = dumped.into_inner().expect("dump list");
    extra_files.sort();
    let info = RunInfo {
        started,
        finished: timestamp(),
        workers,
        extra_files,
    };
    write_results(&sweep, &trials, sim.config(), &info, &args.out)?;
    eprintln!("wrote results to {}", args.out.display());
    Ok(())
}

/// Parse `argv` and run. Returns the process exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(&args) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                EXIT_CONFIG
            } else {
                EXIT_RUNTIME
            }
        }
    }
}
