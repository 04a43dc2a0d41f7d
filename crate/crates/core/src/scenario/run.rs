use std::io::{Read, Write};
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::thread;

use super::{RunMode, RunResult, ScenarioSpec};
use crate::dynamics::World;
use crate::error::{Error, Result};
use crate::hilink::{
    connect, controller_run, pipe_pair, plant_serve, Endpoint, LinkConfig, Listener, Role, PROTOCOL_VERSION,
    STEP_TIMEOUT,
};
use crate::pvplant::LocalController;

/// How split-mode runs find and reach their controller process.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Executable providing the `controller` subcommand; defaults to the
    /// running binary.
    pub controller_exe: Option<PathBuf>,
    /// Address the plant listens on; defaults to an ephemeral local TCP port.
    pub listen: Option<String>,
}

pub fn run_scenario(spec: &ScenarioSpec) -> Result<RunResult> {
    run_scenario_with(spec, &RunOptions::default())
}

pub fn run_scenario_with(spec: &ScenarioSpec, opts: &RunOptions) -> Result<RunResult> {
    spec.validate()?;
    match spec.mode {
        RunMode::InProcess => run_in_process(spec),
        RunMode::Split => run_split_process(spec, opts),
    }
}

fn local_controller(spec: &ScenarioSpec) -> Result<LocalController> {
    Ok(LocalController::new(spec.inverter, spec.available_pv_power()?, spec.relay, spec.sim.dt))
}

fn link_config(spec: &ScenarioSpec, role: Role) -> LinkConfig {
    LinkConfig {
        role,
        version: PROTOCOL_VERSION,
        dt: spec.sim.dt,
        step_count: spec.sim.step_count() as u64,
        digest: spec.digest_prefix(),
    }
}

fn run_in_process(spec: &ScenarioSpec) -> Result<RunResult> {
    let mut world = World::new(spec.world_config()?)?;
    let mut controller = local_controller(spec)?;
    let n = spec.sim.step_count();
    let mut steps = Vec::with_capacity(n);
    for _ in 0..n {
        steps.push(world.step(&mut controller)?);
    }
    Ok(RunResult::from_world(&world, spec, steps, n, true))
}

fn run_split_process(spec: &ScenarioSpec, opts: &RunOptions) -> Result<RunResult> {
    let world = World::new(spec.world_config()?)?;
    let exe = match &opts.controller_exe {
        Some(p) => p.clone(),
        None => std::env::current_exe()?,
    };
    let listener = Listener::bind(&Endpoint::parse(opts.listen.as_deref().unwrap_or("127.0.0.1:0"))?)?;
    let endpoint = listener.endpoint()?;

    let mut spec_file = tempfile::Builder::new().prefix("scenario-").suffix(".json").tempfile()?;
    spec_file.write_all(serde_json::to_string_pretty(spec)?.as_bytes())?;
    spec_file.flush()?;

    let mut child = Command::new(exe)
        .arg("controller")
        .arg("--connect")
        .arg(endpoint.to_string())
        .arg("--scenario")
        .arg(spec_file.path())
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .spawn()?;
    let stream = match listener.accept(STEP_TIMEOUT) {
        Ok(s) => s,
        Err(e) => {
            let _ = child.kill();
            let _ = child.wait();
            return Err(e);
        }
    };
    let result = plant_serve(world, stream, &link_config(spec, Role::Plant), spec);
    let status = child.wait()?;
    match result {
        Ok(r) if status.success() => Ok(r),
        Ok(_) => Err(Error::Protocol(format!("controller process exited with {status}"))),
        Err(e) => Err(e),
    }
}

/// Runs the plant on `plant` and the control law on `controller` in a
/// second thread, over any pair of connected streams.
pub fn run_split_over<P, C>(spec: &ScenarioSpec, plant: P, controller: C) -> Result<RunResult>
where
    P: Read + Write,
    C: Read + Write + Send + 'static,
{
    spec.validate()?;
    let world = World::new(spec.world_config()?)?;
    let mut local = local_controller(spec)?;
    let link = link_config(spec, Role::Controller);
    let peer = thread::spawn(move || controller_run(controller, &link, &mut local));
    let result = plant_serve(world, plant, &link_config(spec, Role::Plant), spec);
    let peer = peer.join().map_err(|_| Error::Protocol("controller thread panicked".into()))?;
    let run = result?;
    peer?;
    Ok(run)
}

/// Split run over an in-memory pipe.
pub fn run_split_in_memory(spec: &ScenarioSpec) -> Result<RunResult> {
    let (plant, controller) = pipe_pair(STEP_TIMEOUT);
    run_split_over(spec, plant, controller)
}

/// Controller process body: connect to the plant and serve commands until
/// it says goodbye.
pub fn controller_session(spec: &ScenarioSpec, endpoint: &Endpoint) -> Result<()> {
    let mut local = local_controller(spec)?;
    let stream = connect(endpoint, STEP_TIMEOUT)?;
    controller_run(stream, &link_config(spec, Role::Controller), &mut local)
}
