//! C ABI for embedding the simulator in other languages.
//!
//! Handles are opaque; every fallible call returns an [`NbStatus`] and the
//! last error message is retrievable per thread via [`nb_last_error`].
//! The header `include/neuroboids.h` is regenerated by the build script.

use neuroboids::config::RunConfig;
use neuroboids::engine::Simulation;
use neuroboids::runner::{self, RunError, RunStatus};
use neuroboids::snapshot;
use neuroboids::tasks::TaskKind;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NbStatus {
    /// Success.
    NbOk = 0,
    /// The run ended with the population extinct (still a finished run).
    NbExtinct = 2,
    /// Invalid configuration or arguments.
    NbUsage = 64,
    /// Corrupt or mismatched artifacts.
    NbIntegrity = 65,
    /// Numerical fault inside the simulation.
    NbFault = 70,
    /// Filesystem error.
    NbIo = 74,
    /// A null pointer was passed where data was required.
    NbNullPointer = 80,
    /// A string argument was not valid UTF-8.
    NbBadString = 81,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message).unwrap_or_else(|_| CString::new("error").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn status_of(err: &RunError) -> NbStatus {
    match err {
        RunError::Config(_) => NbStatus::NbUsage,
        RunError::Integrity(_) | RunError::Analysis(_) => NbStatus::NbIntegrity,
        RunError::Fault(_) => NbStatus::NbFault,
        RunError::Io { .. } => NbStatus::NbIo,
    }
}

/// Last error message raised on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn nb_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr())
    })
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn nb_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr() as *const c_char
}

/// Opaque simulation handle (stateful tasks only).
pub struct NbSimulation {
    sim: Simulation,
}

unsafe fn cstr_arg<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, NbStatus> {
    if ptr.is_null() {
        set_error(format!("{what} is NULL"));
        return Err(NbStatus::NbNullPointer);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error(format!("{what} is not valid UTF-8"));
        NbStatus::NbBadString
    })
}

fn build_simulation(config: RunConfig) -> Result<*mut NbSimulation, NbStatus> {
    if config.run.task == TaskKind::Stateless {
        set_error("stateless runs are not steppable through the handle API; use nb_run".into());
        return Err(NbStatus::NbUsage);
    }
    config.validate().map_err(|e| {
        set_error(e.to_string());
        NbStatus::NbUsage
    })?;
    Ok(Box::into_raw(Box::new(NbSimulation { sim: Simulation::new(config) })))
}

/// Create a simulation from a TOML config string. Returns NULL on error
/// (inspect `nb_last_error`).
///
/// # Safety
/// `config_toml` must be a valid NUL-terminated C string.
#[no_mangle]
pub unsafe extern "C" fn nb_simulation_from_toml(config_toml: *const c_char) -> *mut NbSimulation {
    let text = match cstr_arg(config_toml, "config_toml") {
        Ok(t) => t,
        Err(_) => return std::ptr::null_mut(),
    };
    match RunConfig::from_toml_str(text) {
        Ok(config) => build_simulation(config).unwrap_or(std::ptr::null_mut()),
        Err(e) => {
            set_error(e.to_string());
            std::ptr::null_mut()
        }
    }
}

/// Create a simulation from a config file path. Returns NULL on error.
///
/// # Safety
/// `path` must be a valid NUL-terminated C string.
#[no_mangle]
pub unsafe extern "C" fn nb_simulation_from_file(path: *const c_char) -> *mut NbSimulation {
    let path = match cstr_arg(path, "path") {
        Ok(t) => t,
        Err(_) => return std::ptr::null_mut(),
    };
    match RunConfig::load(Path::new(path)) {
        Ok(config) => build_simulation(config).unwrap_or(std::ptr::null_mut()),
        Err(e) => {
            set_error(e.to_string());
            std::ptr::null_mut()
        }
    }
}

/// Advance the simulation by `steps` steps (stops early on extinction).
///
/// # Safety
/// `handle` must be a live pointer from one of the constructors.
#[no_mangle]
pub unsafe extern "C" fn nb_simulation_step(handle: *mut NbSimulation, steps: u64) -> NbStatus {
    let Some(wrapper) = handle.as_mut() else {
        set_error("handle is NULL".into());
        return NbStatus::NbNullPointer;
    };
    for _ in 0..steps {
        match wrapper.sim.step() {
            Ok(stats) => {
                if stats.extinct {
                    return NbStatus::NbExtinct;
                }
            }
            Err(e) => {
                set_error(e.to_string());
                return NbStatus::NbFault;
            }
        }
    }
    NbStatus::NbOk
}

/// Number of completed steps.
///
/// # Safety
/// `handle` must be a live pointer from one of the constructors.
#[no_mangle]
pub unsafe extern "C" fn nb_simulation_current_step(handle: *const NbSimulation) -> u64 {
    handle.as_ref().map_or(0, |w| w.sim.step)
}

/// Current number of living agents.
///
/// # Safety
/// `handle` must be a live pointer from one of the constructors.
#[no_mangle]
pub unsafe extern "C" fn nb_simulation_population(handle: *const NbSimulation) -> u64 {
    handle.as_ref().map_or(0, |w| w.sim.population() as u64)
}

/// Total energy of the living population.
///
/// # Safety
/// `handle` must be a live pointer from one of the constructors.
#[no_mangle]
pub unsafe extern "C" fn nb_simulation_total_energy(handle: *const NbSimulation) -> f64 {
    handle
        .as_ref()
        .map_or(0.0, |w| neuroboids::evolution::total_energy(&w.sim.agents))
}

/// Copy up to `capacity` agent positions (x, y, z triples) into `out`.
/// Returns the number of triples written; with `out == NULL` returns the
/// population size so callers can size the buffer.
///
/// # Safety
/// `out`, when non-NULL, must point to at least `3 * capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn nb_simulation_positions(
    handle: *const NbSimulation,
    out: *mut f64,
    capacity: usize,
) -> usize {
    let Some(wrapper) = handle.as_ref() else {
        return 0;
    };
    let alive: Vec<&neuroboids::evolution::Agent> =
        wrapper.sim.agents.iter().filter(|a| a.alive).collect();
    if out.is_null() {
        return alive.len();
    }
    let n = alive.len().min(capacity);
    let slice = std::slice::from_raw_parts_mut(out, n * 3);
    for (i, agent) in alive[..n].iter().enumerate() {
        slice[i * 3] = agent.pose.position.x;
        slice[i * 3 + 1] = agent.pose.position.y;
        slice[i * 3 + 2] = agent.pose.position.z;
    }
    n
}

/// Write a snapshot of the current state to `path`.
///
/// # Safety
/// `handle` must be live; `path` must be a valid NUL-terminated C string.
#[no_mangle]
pub unsafe extern "C" fn nb_simulation_write_snapshot(
    handle: *const NbSimulation,
    path: *const c_char,
) -> NbStatus {
    let Some(wrapper) = handle.as_ref() else {
        set_error("handle is NULL".into());
        return NbStatus::NbNullPointer;
    };
    let path = match cstr_arg(path, "path") {
        Ok(p) => p,
        Err(status) => return status,
    };
    match snapshot::write_snapshot_file(
        Path::new(path),
        &snapshot::encode_simulation(&wrapper.sim),
    ) {
        Ok(()) => NbStatus::NbOk,
        Err(e) => {
            set_error(e.to_string());
            NbStatus::NbIo
        }
    }
}

/// Destroy a handle. NULL is ignored.
///
/// # Safety
/// `handle` must have come from a constructor and not been freed before.
#[no_mangle]
pub unsafe extern "C" fn nb_simulation_free(handle: *mut NbSimulation) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Execute a complete run (any task, including stateless) from a config
/// file into an output directory, exactly like the CLI `run` subcommand.
///
/// # Safety
/// `config_path` and `out_dir` must be valid NUL-terminated C strings.
#[no_mangle]
pub unsafe extern "C" fn nb_run(
    config_path: *const c_char,
    out_dir: *const c_char,
    threads: usize,
) -> NbStatus {
    let config_path = match cstr_arg(config_path, "config_path") {
        Ok(p) => p,
        Err(status) => return status,
    };
    let out_dir = match cstr_arg(out_dir, "out_dir") {
        Ok(p) => p,
        Err(status) => return status,
    };
    let config = match RunConfig::load(Path::new(config_path)) {
        Ok(c) => c,
        Err(e) => {
            set_error(e.to_string());
            return NbStatus::NbUsage;
        }
    };
    match runner::run_to_completion(&config, &PathBuf::from(out_dir), threads) {
        Ok(outcome) => match outcome.status {
            RunStatus::Completed => NbStatus::NbOk,
            RunStatus::Extinct => NbStatus::NbExtinct,
        },
        Err(e) => {
            let status = status_of(&e);
            set_error(e.to_string());
            status
        }
    }
}
