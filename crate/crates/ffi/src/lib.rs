//! C ABI over the wioptnd simulator.
//!
//! Every object crosses the boundary as an opaque handle created by a
//! `*_new`/`*_parse`/`*_build` function and released by its `*_free`.
//! Fallible calls return a [`WioptndStatus`]; on failure the message is
//! available from [`wioptnd_last_error`] on the same thread. Strings
//! returned through out-pointers are owned by the caller and released with
//! [`wioptnd_string_free`].

// `!(x > 0.0)` is used deliberately so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use wioptnd::config::{config_from_pairs, config_to_text, parse_pairs};
use wioptnd::energy::{harvested_electrical_power, intensity_at_depth};
use wioptnd::error::Error;
use wioptnd::experiment::{build_bank, generate_raster};
use wioptnd::metrics::compute_metrics;
use wioptnd::model::{validate_config, RasterPlot, SimConfig};
use wioptnd::photonics::{transmittance, OpticsParams};
use wioptnd::protocols::PatternBank;
use wioptnd::sim::{replay, run, SimTrace};

/// Result of a fallible call. Codes 2 to 5 match the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WioptndStatus {
    Ok = 0,
    /// Null pointer, bad UTF-8 or an index out of range.
    InvalidArgument = 1,
    /// Unparseable or invalid configuration, or malformed input data.
    Config = 2,
    /// Physically infeasible parameters or an out-of-domain value.
    Domain = 3,
    Io = 4,
    /// Protocol, bank and raster do not fit together.
    Mismatch = 5,
    /// A trace disagrees with its own summary.
    Trace = 6,
    /// Internal failure; the library state is unspecified.
    Panic = 7,
}

/// Parsed configuration.
pub struct WioptndConfig {
    pairs: Vec<(String, String)>,
    cfg: SimConfig,
}

/// Binary spike matrix, devices by slots.
pub struct WioptndRaster(RasterPlot);

/// Per-frequency discharge delays.
pub struct WioptndBank(PatternBank);

/// Slot-by-slot record of one simulation.
pub struct WioptndTrace(SimTrace);

/// Counts and ratios of one trace. Ratios are NaN when the raster holds
/// no spikes.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WioptndMetrics {
    pub total_spikes: usize,
    pub n_covered: usize,
    pub n_mis: usize,
    pub n_spurious: usize,
    pub n_emissions: usize,
    pub gamma_mis: f64,
    pub eta_stim_pct: f64,
    pub gamma_stim: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: WioptndStatus, msg: impl Into<String>) -> WioptndStatus {
    set_error(msg.into());
    status
}

fn status_of(e: &Error) -> WioptndStatus {
    match e {
        Error::Trace { .. } => WioptndStatus::Trace,
        _ => match e.exit_code() {
            3 => WioptndStatus::Domain,
            4 => WioptndStatus::Io,
            5 => WioptndStatus::Mismatch,
            _ => WioptndStatus::Config,
        },
    }
}

/// Run `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), WioptndStatus>) -> WioptndStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => WioptndStatus::Ok,
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(WioptndStatus::Panic, msg)
        }
    }
}

fn lift<T>(r: wioptnd::error::Result<T>) -> Result<T, WioptndStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

fn arg(msg: &str) -> WioptndStatus {
    fail(WioptndStatus::InvalidArgument, msg)
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, WioptndStatus> {
    if p.is_null() {
        return Err(arg(&format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| arg(&format!("{name} is not valid UTF-8")))
}

unsafe fn obj<'a, T>(p: *const T, name: &str) -> Result<&'a T, WioptndStatus> {
    p.as_ref().ok_or_else(|| arg(&format!("{name} is null")))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), WioptndStatus> {
    if out.is_null() {
        return Err(arg("output pointer is null"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), WioptndStatus> {
    if out.is_null() {
        return Err(arg("output pointer is null"));
    }
    let c = CString::new(s).map_err(|_| arg("string holds a nul byte"))?;
    *out = c.into_raw();
    Ok(())
}

unsafe fn release<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

fn resolve(pairs: Vec<(String, String)>) -> Result<WioptndConfig, WioptndStatus> {
    let cfg = lift(config_from_pairs(&pairs))?;
    let v = validate_config(&cfg);
    if !v.is_empty() {
        return lift(Err(Error::InvalidConfig(v)));
    }
    Ok(WioptndConfig { pairs, cfg })
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into the library on this thread.
#[no_mangle]
pub extern "C" fn wioptnd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Release a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn wioptnd_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn wioptnd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Default configuration.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wioptnd_config_new(out: *mut *mut WioptndConfig) -> WioptndStatus {
    guard(|| put(out, resolve(Vec::new())?))
}

/// Configuration from `key = value` text. Unset keys keep their defaults.
///
/// # Safety
/// `text` must be a nul-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn wioptnd_config_parse(text: *const c_char, out: *mut *mut WioptndConfig) -> WioptndStatus {
    guard(|| {
        let pairs = lift(parse_pairs(str_arg(text, "text")?))?;
        put(out, resolve(pairs)?)
    })
}

/// Override one key. On failure the configuration is unchanged.
///
/// # Safety
/// `cfg` must be a live handle; `key` and `value` nul-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn wioptnd_config_set(
    cfg: *mut WioptndConfig,
    key: *const c_char,
    value: *const c_char,
) -> WioptndStatus {
    guard(|| {
        let c = cfg.as_mut().ok_or_else(|| arg("cfg is null"))?;
        let mut pairs = c.pairs.clone();
        pairs.push((
            str_arg(key, "key")?.trim().into(),
            str_arg(value, "value")?.trim().into(),
        ));
        *c = resolve(pairs)?;
        Ok(())
    })
}

/// Fully resolved configuration as `key = value` text.
///
/// # Safety
/// `cfg` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn wioptnd_config_to_text(cfg: *const WioptndConfig, out: *mut *mut c_char) -> WioptndStatus {
    guard(|| put_string(out, config_to_text(&obj(cfg, "cfg")?.cfg)))
}

/// # Safety
/// `cfg` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn wioptnd_config_free(cfg: *mut WioptndConfig) {
    release(cfg);
}

/// Ultrasound intensity reaching the harvester, mW/cm².
///
/// # Safety
/// `cfg` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn wioptnd_intensity_at_depth(cfg: *const WioptndConfig, out: *mut f64) -> WioptndStatus {
    guard(|| {
        let v = intensity_at_depth(&obj(cfg, "cfg")?.cfg.energy);
        *out.as_mut().ok_or_else(|| arg("out is null"))? = v;
        Ok(())
    })
}

/// Electrical power delivered by the harvester, W.
///
/// # Safety
/// `cfg` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn wioptnd_harvested_power(cfg: *const WioptndConfig, out: *mut f64) -> WioptndStatus {
    guard(|| {
        let v = harvested_electrical_power(&obj(cfg, "cfg")?.cfg.energy);
        *out.as_mut().ok_or_else(|| arg("out is null"))? = v;
        Ok(())
    })
}

/// Tissue transmittance at `d_mm` for the given coefficients (mm⁻¹).
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wioptnd_transmittance(
    mu_a: f64,
    mu_s_prime: f64,
    g_const: f64,
    d_mm: f64,
    out: *mut f64,
) -> WioptndStatus {
    guard(|| {
        let p = OpticsParams {
            mu_a,
            mu_s_prime,
            g_const,
            ..OpticsParams::default()
        };
        let v = lift(transmittance(&p, d_mm))?;
        *out.as_mut().ok_or_else(|| arg("out is null"))? = v;
        Ok(())
    })
}

/// Empty raster.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wioptnd_raster_new(
    devices: usize,
    slots: usize,
    slot_ms: f64,
    out: *mut *mut WioptndRaster,
) -> WioptndStatus {
    guard(|| {
        if !(slot_ms > 0.0) {
            return Err(arg("slot_ms must be positive"));
        }
        put(out, WioptndRaster(RasterPlot::new(devices, slots, slot_ms)))
    })
}

/// Raster drawn from the configured spike source and seed.
///
/// # Safety
/// `cfg` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn wioptnd_raster_generate(
    cfg: *const WioptndConfig,
    out: *mut *mut WioptndRaster,
) -> WioptndStatus {
    guard(|| {
        let r = lift(generate_raster(&obj(cfg, "cfg")?.cfg))?;
        put(out, WioptndRaster(r))
    })
}

/// # Safety
/// `raster` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn wioptnd_raster_set(
    raster: *mut WioptndRaster,
    device: usize,
    slot: usize,
    spike: bool,
) -> WioptndStatus {
    guard(|| {
        let r = &mut raster.as_mut().ok_or_else(|| arg("raster is null"))?.0;
        if device >= r.devices() || slot >= r.slots() {
            return Err(arg("device or slot out of range"));
        }
        r.set(device, slot, spike);
        Ok(())
    })
}

/// Whether `device` spikes in `slot`; false when out of range.
///
/// # Safety
/// `raster` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn wioptnd_raster_get(raster: *const WioptndRaster, device: usize, slot: usize) -> bool {
    raster
        .as_ref()
        .is_some_and(|r| device < r.0.devices() && slot < r.0.slots() && r.0.get(device, slot))
}

/// # Safety
/// `raster` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn wioptnd_raster_devices(raster: *const WioptndRaster) -> usize {
    raster.as_ref().map_or(0, |r| r.0.devices())
}

/// # Safety
/// `raster` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn wioptnd_raster_slots(raster: *const WioptndRaster) -> usize {
    raster.as_ref().map_or(0, |r| r.0.slots())
}

/// # Safety
/// `raster` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn wioptnd_raster_total_spikes(raster: *const WioptndRaster) -> usize {
    raster.as_ref().map_or(0, |r| r.0.total_spikes())
}

/// # Safety
/// `raster` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn wioptnd_raster_free(raster: *mut WioptndRaster) {
    release(raster);
}

/// Pattern bank for the configured protocol. Writes null for
/// Charge-and-Fire, which uses no bank.
///
/// # Safety
/// `cfg` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn wioptnd_bank_build(cfg: *const WioptndConfig, out: *mut *mut WioptndBank) -> WioptndStatus {
    guard(|| {
        if out.is_null() {
            return Err(arg("output pointer is null"));
        }
        match lift(build_bank(&obj(cfg, "cfg")?.cfg))? {
            Some(b) => put(out, WioptndBank(b)),
            None => {
                *out = ptr::null_mut();
                Ok(())
            }
        }
    })
}

/// Custom bank from a row-major `n_patterns` by `devices` delay matrix.
///
/// # Safety
/// `delays` must point to `n_patterns * devices` values and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn wioptnd_bank_from_rows(
    window: usize,
    n_patterns: usize,
    devices: usize,
    delays: *const usize,
    out: *mut *mut WioptndBank,
) -> WioptndStatus {
    guard(|| {
        let n = n_patterns.checked_mul(devices).ok_or_else(|| arg("bank too large"))?;
        if delays.is_null() && n > 0 {
            return Err(arg("delays is null"));
        }
        let flat = if n == 0 {
            &[][..]
        } else {
            std::slice::from_raw_parts(delays, n)
        };
        let rows: Vec<Vec<usize>> = flat.chunks(devices.max(1)).map(<[usize]>::to_vec).collect();
        let b = lift(PatternBank::from_rows(window, &rows))?;
        put(out, WioptndBank(b))
    })
}

/// Bank from its JSON form.
///
/// # Safety
/// `json` must be a nul-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn wioptnd_bank_from_json(json: *const c_char, out: *mut *mut WioptndBank) -> WioptndStatus {
    guard(|| {
        let b = lift(PatternBank::from_json(str_arg(json, "json")?))?;
        put(out, WioptndBank(b))
    })
}

/// # Safety
/// `bank` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn wioptnd_bank_to_json(bank: *const WioptndBank, out: *mut *mut c_char) -> WioptndStatus {
    guard(|| put_string(out, obj(bank, "bank")?.0.to_json()))
}

/// Number of patterns.
///
/// # Safety
/// `bank` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn wioptnd_bank_len(bank: *const WioptndBank) -> usize {
    bank.as_ref().map_or(0, |b| b.0.len())
}

/// # Safety
/// `bank` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn wioptnd_bank_free(bank: *mut WioptndBank) {
    release(bank);
}

/// Simulate `raster` under the configured protocol. `bank` may be null for
/// Charge-and-Fire and must be non-null for the window protocols.
///
/// # Safety
/// `cfg` and `raster` must be live handles, `bank` null or live, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn wioptnd_run(
    cfg: *const WioptndConfig,
    raster: *const WioptndRaster,
    bank: *const WioptndBank,
    out: *mut *mut WioptndTrace,
) -> WioptndStatus {
    guard(|| {
        let cfg = &obj(cfg, "cfg")?.cfg;
        let raster = &obj(raster, "raster")?.0;
        let bank = bank.as_ref().map(|b| &b.0);
        let t = lift(run(cfg, raster, bank))?;
        put(out, WioptndTrace(t))
    })
}

/// # Safety
/// `trace` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn wioptnd_trace_metrics(trace: *const WioptndTrace, out: *mut WioptndMetrics) -> WioptndStatus {
    guard(|| {
        let m = compute_metrics(&obj(trace, "trace")?.0);
        *out.as_mut().ok_or_else(|| arg("out is null"))? = WioptndMetrics {
            total_spikes: m.total_spikes,
            n_covered: m.n_covered,
            n_mis: m.n_mis,
            n_spurious: m.n_spurious,
            n_emissions: m.n_emissions,
            gamma_mis: m.gamma_mis.unwrap_or(f64::NAN),
            eta_stim_pct: m.eta_stim_pct.unwrap_or(f64::NAN),
            gamma_stim: m.gamma_stim.unwrap_or(f64::NAN),
        };
        Ok(())
    })
}

/// # Safety
/// `trace` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn wioptnd_trace_slots(trace: *const WioptndTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.0.records.len())
}

/// Frequency index emitted in `slot`, or -1 when idle or out of range.
///
/// # Safety
/// `trace` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn wioptnd_trace_emitted(trace: *const WioptndTrace, slot: usize) -> i64 {
    trace
        .as_ref()
        .and_then(|t| t.0.records.get(slot))
        .and_then(|r| r.emitted)
        .map_or(-1, |f| f as i64)
}

/// Per-slot event log, one JSON object per line.
///
/// # Safety
/// `trace` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn wioptnd_trace_to_jsonl(trace: *const WioptndTrace, out: *mut *mut c_char) -> WioptndStatus {
    guard(|| put_string(out, obj(trace, "trace")?.0.to_jsonl()))
}

/// Recount the event log and compare it with the stored totals.
///
/// # Safety
/// `trace` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn wioptnd_trace_replay(trace: *const WioptndTrace) -> WioptndStatus {
    guard(|| lift(replay(&obj(trace, "trace")?.0)).map(drop))
}

/// # Safety
/// `trace` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn wioptnd_trace_free(trace: *mut WioptndTrace) {
    release(trace);
}
