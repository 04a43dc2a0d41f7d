use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{info, warn};

use pvhil::hilink::Endpoint;
use pvhil::scenario::{
    check_outputs, compute_metrics, controller_session, load_scenario, run_scenario_with, run_sweep,
    write_outputs, write_sweep_outputs, RunMode, RunOptions, ScenarioSpec, SweepParam, SweepSpec, CSV_NAME,
};
use pvhil::{Error, Result};

#[derive(Parser)]
#[command(name = "pvhil", version, about = "Islanded feeder simulator with PV fault ride-through and RoCoF protection")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate one scenario and write its time series and summary.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Run the controller in a separate process over a socket.
        #[arg(long)]
        split: bool,
        /// Plant listen address (`HOST:PORT` or `unix:PATH`).
        #[arg(long, requires = "split")]
        listen: Option<String>,
    },
    /// Run one scenario per value of a parameter.
    Sweep {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        values: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the control law to a plant over a socket.
    Controller {
        #[arg(long)]
        connect: String,
        /// Scenario the plant runs; the built-in default when omitted.
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
    /// Re-check relay decisions in a finished output directory.
    Check {
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Help and version requests are not failures; bad arguments are
            // validation errors.
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn dispatch(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Run { scenario, out, split, listen } => run(&scenario, &out, split, listen),
        Cmd::Sweep { scenario, param, values, out } => sweep(&scenario, &param, values, &out),
        Cmd::Controller { connect, scenario } => {
            let spec = match scenario {
                Some(p) => load_scenario(&p)?,
                None => ScenarioSpec::default(),
            };
            controller_session(&spec, &Endpoint::parse(&connect)?)
        }
        Cmd::Check { out } => check(&out),
    }
}

fn run(scenario: &Path, out: &Path, split: bool, listen: Option<String>) -> Result<()> {
    let mut spec = load_scenario(scenario)?;
    if split {
        spec.mode = RunMode::Split;
    }
    let opts = RunOptions { controller_exe: None, listen };
    let r = match run_scenario_with(&spec, &opts) {
        Ok(r) => r,
        Err(Error::SessionAborted { reason, partial }) => {
            warn!("session aborted after {} of {} steps", partial.len(), partial.step_count);
            if !partial.is_empty() {
                if let Ok(m) = compute_metrics(&partial, &spec.relay) {
                    write_outputs(&partial, &m, out)?;
                }
            }
            return Err(Error::SessionAborted { reason, partial });
        }
        Err(e) => return Err(e),
    };
    let m = compute_metrics(&r, &spec.relay)?;
    write_outputs(&r, &m, out)?;
    info!("wrote {} steps to {}", r.len(), out.display());
    println!(
        "steps={} max_rocof_end={:.6} trip={} final_mode={}",
        r.len(),
        m.end.max_abs_rocof_hz_per_s,
        m.any_trip(),
        m.final_mode.map_or_else(|| "-".to_string(), |x| x.to_string())
    );
    Ok(())
}

fn sweep(scenario: &Path, param: &str, values: Vec<f64>, out: &Path) -> Result<()> {
    let base = load_scenario(scenario)?;
    let param: SweepParam = param.parse()?;
    let sweep = SweepSpec { base, param, values };
    let points = run_sweep(&sweep, &RunOptions::default())?;
    write_sweep_outputs(param, &points, out)?;
    let mut first_err = None;
    for p in points {
        match p.outcome {
            Ok((_, m)) => println!(
                "{param}={} max_rocof_end={:.6} trip={}",
                p.value,
                m.end.max_abs_rocof_hz_per_s,
                m.any_trip()
            ),
            Err(e) => {
                println!("{param}={} error: {e}", p.value);
                first_err.get_or_insert(e);
            }
        }
    }
    first_err.map_or(Ok(()), Err)
}

/// Checks `dir` itself when it holds a run, otherwise every run directory
/// directly below it.
fn check(dir: &Path) -> Result<()> {
    let mut targets = Vec::new();
    if dir.join(CSV_NAME).is_file() {
        targets.push(dir.to_path_buf());
    } else {
        let mut subs: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join(CSV_NAME).is_file())
            .collect();
        subs.sort();
        targets.extend(subs);
    }
    if targets.is_empty() {
        return Err(Error::Invalid(format!("no {CSV_NAME} found under {}", dir.display())));
    }
    for t in targets {
        let report = check_outputs(&t)?;
        println!("{}: ok ({} rows, trips {:?})", t.display(), report.rows, report.trips);
    }
    Ok(())
}
