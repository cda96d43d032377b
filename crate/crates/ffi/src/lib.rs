//! C interface to `spikegraph`.
//!
//! Networks, recordings and reports cross the boundary as opaque handles,
//! each released with the matching `sg_*_free`. Every fallible
//! call returns an [`SgStatus`]; on failure `sg_last_error` describes the
//! problem until the next call on the same thread. Panics are caught and
//! reported as `SG_PANIC`.
//!
//! Strings returned by the library are owned by the caller and must be
//! released with `sg_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use spikegraph::estimator::{
    estimate_graph, BoundsSource, Decision, EstimateOptions, EstimationReport,
};
use spikegraph::io::{self, SpikeFormat};
use spikegraph::model::{constants_of, DerivedConstants, Network};
use spikegraph::simulator::{simulate, SimulationConfig, SpikeRecording};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SgStatus {
    SgOk = 0,
    SgNullPointer = 1,
    SgInvalidArgument = 2,
    SgIo = 3,
    SgModel = 4,
    SgSimulation = 5,
    SgEstimation = 6,
    SgPanic = 7,
}

/// Classification of one ordered pair.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SgDecision {
    SgExcitatory = 0,
    SgInhibitory = 1,
    SgAbsent = 2,
    SgInsufficientData = 3,
}

impl From<Decision> for SgDecision {
    fn from(d: Decision) -> Self {
        match d {
            Decision::Excitatory => SgDecision::SgExcitatory,
            Decision::Inhibitory => SgDecision::SgInhibitory,
            Decision::Absent => SgDecision::SgAbsent,
            Decision::InsufficientData => SgDecision::SgInsufficientData,
        }
    }
}

/// One row of an estimation report.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SgPair {
    pub from: u32,
    pub to: u32,
    pub r: f64,
    pub g: f64,
    pub diff: f64,
    pub xi1: f64,
    pub xi2: f64,
    pub decision: SgDecision,
    /// Nonzero when both ratios reached their stopping count.
    pub sufficient: c_int,
}

/// A validated network together with its simulation settings.
pub struct SgNetwork {
    net: Network,
    horizon: f64,
    seed: u64,
}

pub struct SgRecording(SpikeRecording);

pub struct SgReport(EstimationReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl std::fmt::Display) {
    let text = CString::new(msg.to_string().replace('\0', " ")).expect("nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(text));
}

struct Failure(SgStatus, String);

impl Failure {
    fn new(status: SgStatus, msg: impl std::fmt::Display) -> Self {
        Failure(status, msg.to_string())
    }
}

/// Runs `f`, translating errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SgStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SgStatus::SgOk,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SgStatus::SgPanic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(
            SgStatus::SgNullPointer,
            format!("{what} is null"),
        ));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(SgStatus::SgInvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure::new(SgStatus::SgNullPointer, format!("{what} is null")))
}

fn out_arg<T>(out: *mut *mut T) -> Result<(), Failure> {
    if out.is_null() {
        Err(Failure::new(
            SgStatus::SgNullPointer,
            "output pointer is null",
        ))
    } else {
        Ok(())
    }
}

/// Message describing the last failure on this thread, or null. The
/// pointer stays valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn sg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn sg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn sg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

fn network_from_text(text: &str) -> Result<SgNetwork, Failure> {
    let cfg = io::parse_config(text).map_err(|e| Failure::new(SgStatus::SgModel, e))?;
    let net = cfg
        .network
        .ok_or_else(|| Failure::new(SgStatus::SgModel, "config declares no network"))?;
    Ok(SgNetwork {
        net,
        horizon: cfg.sim.horizon,
        seed: cfg.sim.seed,
    })
}

/// Parses a TOML configuration (the text, not a path) into a network.
///
/// # Safety
/// `toml` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sg_network_from_toml(
    toml: *const c_char,
    out: *mut *mut SgNetwork,
) -> SgStatus {
    guard(|| {
        out_arg(out)?;
        let net = network_from_text(str_arg(toml, "toml")?)?;
        *out = Box::into_raw(Box::new(net));
        Ok(())
    })
}

/// Reads a TOML configuration file into a network.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sg_network_from_config(
    path: *const c_char,
    out: *mut *mut SgNetwork,
) -> SgStatus {
    guard(|| {
        out_arg(out)?;
        let path = str_arg(path, "path")?;
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::new(SgStatus::SgIo, format!("{path}: {e}")))?;
        *out = Box::into_raw(Box::new(network_from_text(&text)?));
        Ok(())
    })
}

/// Number of neurons, or 0 for null.
///
/// # Safety
/// `net` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sg_network_len(net: *const SgNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.net.len())
}

/// Horizon declared in the configuration.
///
/// # Safety
/// `net` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sg_network_horizon(net: *const SgNetwork) -> f64 {
    net.as_ref().map_or(f64::NAN, |n| n.horizon)
}

/// Slot length `delta_star` of the network, or NaN when undefined.
///
/// # Safety
/// `net` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sg_network_delta_star(net: *const SgNetwork) -> f64 {
    net.as_ref()
        .and_then(|n| constants_of(&n.net).ok())
        .and_then(|c| c.delta_star)
        .unwrap_or(f64::NAN)
}

/// # Safety
/// `net` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sg_network_free(net: *mut SgNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Simulates `net` over `(0, horizon]`. A horizon `<= 0` uses the
/// configured one.
///
/// # Safety
/// `net` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sg_simulate(
    net: *const SgNetwork,
    horizon: f64,
    seed: u64,
    out: *mut *mut SgRecording,
) -> SgStatus {
    guard(|| {
        out_arg(out)?;
        let n = ref_arg(net, "network")?;
        let h = if horizon > 0.0 { horizon } else { n.horizon };
        let cfg = SimulationConfig::new(h, seed);
        let result = simulate(&n.net, &cfg).map_err(|e| Failure::new(SgStatus::SgSimulation, e))?;
        *out = Box::into_raw(Box::new(SgRecording(result.recording)));
        Ok(())
    })
}

/// Seed stored in the network's configuration.
///
/// # Safety
/// `net` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sg_network_seed(net: *const SgNetwork) -> u64 {
    net.as_ref().map_or(0, |n| n.seed)
}

/// Reads a spike file; the format follows the content.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sg_recording_read(
    path: *const c_char,
    out: *mut *mut SgRecording,
) -> SgStatus {
    guard(|| {
        out_arg(out)?;
        let path = str_arg(path, "path")?;
        let rec =
            io::read_spikes(path.as_ref(), None).map_err(|e| Failure::new(SgStatus::SgIo, e))?;
        *out = Box::into_raw(Box::new(SgRecording(rec)));
        Ok(())
    })
}

/// Writes a spike file; `.spk1` paths get the binary format, others CSV.
///
/// # Safety
/// `rec` must be a live handle; `path` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sg_recording_write(
    rec: *const SgRecording,
    path: *const c_char,
) -> SgStatus {
    guard(|| {
        let rec = ref_arg(rec, "recording")?;
        let path = PathBuf::from(str_arg(path, "path")?);
        let format = SpikeFormat::from_path(&path);
        io::write_spikes(&rec.0, &path, format).map_err(|e| Failure::new(SgStatus::SgIo, e))
    })
}

/// Total number of spikes, or 0 for null.
///
/// # Safety
/// `rec` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sg_recording_spike_count(rec: *const SgRecording) -> usize {
    rec.as_ref().map_or(0, |r| r.0.total_spikes())
}

/// # Safety
/// `rec` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sg_recording_horizon(rec: *const SgRecording) -> f64 {
    rec.as_ref().map_or(f64::NAN, |r| r.0.horizon())
}

/// Replaces the horizon of a recording (CSV files do not store one).
///
/// # Safety
/// `rec` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sg_recording_set_horizon(rec: *mut SgRecording, horizon: f64) -> SgStatus {
    guard(|| {
        let rec = rec
            .as_mut()
            .ok_or_else(|| Failure::new(SgStatus::SgNullPointer, "recording is null"))?;
        let updated = rec
            .0
            .clone()
            .with_horizon(horizon)
            .map_err(|e| Failure::new(SgStatus::SgInvalidArgument, e))?;
        rec.0 = updated;
        Ok(())
    })
}

/// # Safety
/// `rec` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sg_recording_free(rec: *mut SgRecording) {
    if !rec.is_null() {
        drop(Box::from_raw(rec));
    }
}

fn run_estimate(
    rec: &SgRecording,
    bounds: &DerivedConstants,
    source: BoundsSource,
    delta: f64,
    heuristic: c_int,
) -> Result<SgReport, Failure> {
    let opts = EstimateOptions {
        delta: (delta > 0.0).then_some(delta),
        heuristic: heuristic != 0,
        bounds_source: source,
    };
    estimate_graph(&rec.0, bounds, &opts)
        .map(SgReport)
        .map_err(|e| Failure::new(SgStatus::SgEstimation, e))
}

/// Estimates the graph using the constants of a known network. `delta <= 0`
/// selects `delta_star`; larger slots need `heuristic != 0`.
///
/// # Safety
/// `rec` and `net` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sg_estimate(
    rec: *const SgRecording,
    net: *const SgNetwork,
    delta: f64,
    heuristic: c_int,
    out: *mut *mut SgReport,
) -> SgStatus {
    guard(|| {
        out_arg(out)?;
        let rec = ref_arg(rec, "recording")?;
        let net = ref_arg(net, "network")?;
        let c = constants_of(&net.net).map_err(|e| Failure::new(SgStatus::SgModel, e))?;
        let report = run_estimate(rec, &c, BoundsSource::Derived, delta, heuristic)?;
        *out = Box::into_raw(Box::new(report));
        Ok(())
    })
}

/// Estimates the graph from asserted rate bounds.
///
/// # Safety
/// `rec` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sg_estimate_with_bounds(
    rec: *const SgRecording,
    alpha: f64,
    beta: f64,
    rate_gap: f64,
    in_degree: usize,
    delta: f64,
    heuristic: c_int,
    out: *mut *mut SgReport,
) -> SgStatus {
    guard(|| {
        out_arg(out)?;
        let rec = ref_arg(rec, "recording")?;
        let c = DerivedConstants::from_bounds(alpha, beta, Some(rate_gap), in_degree)
            .map_err(|e| Failure::new(SgStatus::SgInvalidArgument, e))?;
        let report = run_estimate(rec, &c, BoundsSource::UserAsserted, delta, heuristic)?;
        *out = Box::into_raw(Box::new(report));
        Ok(())
    })
}

/// Number of ordered pairs in the report, or 0 for null.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sg_report_pair_count(report: *const SgReport) -> usize {
    report.as_ref().map_or(0, |r| r.0.pairs.len())
}

/// Copies pair `index` into `out`.
///
/// # Safety
/// `report` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sg_report_pair(
    report: *const SgReport,
    index: usize,
    out: *mut SgPair,
) -> SgStatus {
    guard(|| {
        let report = ref_arg(report, "report")?;
        if out.is_null() {
            return Err(Failure::new(
                SgStatus::SgNullPointer,
                "output pointer is null",
            ));
        }
        let p = report.0.pairs.get(index).ok_or_else(|| {
            Failure::new(
                SgStatus::SgInvalidArgument,
                format!("pair index {index} out of range"),
            )
        })?;
        *out = SgPair {
            from: p.from,
            to: p.to,
            r: p.r,
            g: p.g,
            diff: p.diff,
            xi1: p.xi1,
            xi2: p.xi2,
            decision: p.decision.into(),
            sufficient: p.sufficient as c_int,
        };
        Ok(())
    })
}

/// The full report as JSON. Release with `sg_string_free`.
///
/// # Safety
/// `report` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sg_report_to_json(
    report: *const SgReport,
    out: *mut *mut c_char,
) -> SgStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::new(
                SgStatus::SgNullPointer,
                "output pointer is null",
            ));
        }
        let report = ref_arg(report, "report")?;
        let text = serde_json::to_string(&report.0).map_err(|e| Failure::new(SgStatus::SgIo, e))?;
        *out = CString::new(text).expect("JSON has no nul").into_raw();
        Ok(())
    })
}

/// # Safety
/// `report` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sg_report_free(report: *mut SgReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}
