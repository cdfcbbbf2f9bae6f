//! C ABI over the `iatc` engine.
//!
//! A scenario is loaded once into an opaque [`IatcScenario`] handle, which
//! owns the network and its evaluation cache. Every function returns an
//! [`IatcStatus`]; on failure the message is kept per thread and can be read
//! with [`iatc_last_error`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use iatc::policy_opt::{ia_dtc, ia_tc};
use iatc::{Error, Evaluator, LossBreakdown, Scenario};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IatcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    Validation = 4,
    Domain = 5,
    Numerical = 6,
    InfeasibleTraffic = 7,
    Io = 8,
    /// An output buffer is shorter than the number of transmitting nodes.
    BufferTooSmall = 9,
    Panic = 10,
}

/// Per-node loss breakdown, mirroring the Rust `LossBreakdown`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct IatcLossBreakdown {
    pub node_id: u32,
    pub beta: f64,
    pub mu: f64,
    pub p_dly: f64,
    pub p_ov: f64,
    pub p_out: f64,
    pub p_loss_exact: f64,
    pub p_loss_first_order: f64,
    pub r_n: f64,
    pub r_exact: f64,
    pub unstable: bool,
    pub clamped: bool,
}

impl From<&LossBreakdown> for IatcLossBreakdown {
    fn from(b: &LossBreakdown) -> Self {
        IatcLossBreakdown {
            node_id: b.node_id.0,
            beta: b.beta,
            mu: b.mu,
            p_dly: b.p_dly,
            p_ov: b.p_ov,
            p_out: b.p_out,
            p_loss_exact: b.p_loss_exact,
            p_loss_first_order: b.p_loss_first_order,
            r_n: b.r_n,
            r_exact: b.r_exact,
            unstable: b.unstable,
            clamped: b.clamped,
        }
    }
}

/// Opaque scenario handle.
pub struct IatcScenario {
    ev: Evaluator,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> IatcStatus {
    match e {
        Error::Domain(_) => IatcStatus::Domain,
        Error::Numerical { .. } => IatcStatus::Numerical,
        Error::InfeasibleTraffic { .. } => IatcStatus::InfeasibleTraffic,
        Error::Validation(_) => IatcStatus::Validation,
        Error::Parse(_) => IatcStatus::Parse,
        Error::Io(_) => IatcStatus::Io,
    }
}

struct Fail(IatcStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> IatcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            IatcStatus::Ok
        }
        Ok(Err(Fail(s, m))) => {
            set_error(m);
            s
        }
        Err(p) => {
            let m = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {m}"));
            IatcStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(IatcStatus::NullPointer, format!("{what} is null"))
}

unsafe fn handle<'a>(h: *const IatcScenario) -> Result<&'a IatcScenario, Fail> {
    h.as_ref().ok_or_else(|| null("scenario handle"))
}

unsafe fn out_slice<'a, T>(p: *mut T, len: usize, need: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    if len < need {
        return Err(Fail(
            IatcStatus::BufferTooSmall,
            format!("{what} holds {len} entries, {need} needed"),
        ));
    }
    Ok(std::slice::from_raw_parts_mut(p, need))
}

unsafe fn in_slice<'a, T>(p: *const T, len: usize, need: usize, what: &str) -> Result<&'a [T], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    if len != need {
        return Err(Fail(
            IatcStatus::Validation,
            format!("{what} has {len} entries, expected {need}"),
        ));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn open(sc: Scenario) -> Result<*mut IatcScenario, Fail> {
    let ev = Evaluator::new(sc.build()?)?;
    Ok(Box::into_raw(Box::new(IatcScenario { ev })))
}

/// Parses a TOML scenario. On success `*out` receives a handle to free with
/// [`iatc_scenario_free`].
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn iatc_scenario_from_toml(toml: *const c_char, out: *mut *mut IatcScenario) -> IatcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        if toml.is_null() {
            return Err(null("toml"));
        }
        let text = CStr::from_ptr(toml)
            .to_str()
            .map_err(|e| Fail(IatcStatus::InvalidUtf8, format!("scenario text is not UTF-8: {e}")))?;
        *out = open(Scenario::from_toml_str(text)?)?;
        Ok(())
    })
}

/// Opens the bundled ten-node reference scenario.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn iatc_scenario_reference(out: *mut *mut IatcScenario) -> IatcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = open(Scenario::reference())?;
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `h` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn iatc_scenario_free(h: *mut IatcScenario) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Number of transmitting nodes, the length of every per-node array.
///
/// # Safety
/// `h` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn iatc_node_count(h: *const IatcScenario, out: *mut usize) -> IatcStatus {
    guard(|| {
        let s = handle(h)?;
        *out.as_mut().ok_or_else(|| null("out"))? = s.ev.len();
        Ok(())
    })
}

/// Node ids in evaluation order.
///
/// # Safety
/// `ids` must point to `len` writable entries.
#[no_mangle]
pub unsafe extern "C" fn iatc_node_ids(h: *const IatcScenario, ids: *mut u32, len: usize) -> IatcStatus {
    guard(|| {
        let s = handle(h)?;
        let dst = out_slice(ids, len, s.ev.len(), "ids")?;
        for (d, id) in dst.iter_mut().zip(s.ev.network.ids()) {
            *d = id.0;
        }
        Ok(())
    })
}

/// Largest threshold of each node that keeps its queue stable.
///
/// # Safety
/// `bounds` must point to `len` writable entries.
#[no_mangle]
pub unsafe extern "C" fn iatc_bounds(h: *const IatcScenario, bounds: *mut f64, len: usize) -> IatcStatus {
    guard(|| {
        let s = handle(h)?;
        out_slice(bounds, len, s.ev.len(), "bounds")?.copy_from_slice(&s.ev.network.bounds());
        Ok(())
    })
}

/// Thresholds from the scenario file, with unset nodes at their bound.
///
/// # Safety
/// `betas` must point to `len` writable entries.
#[no_mangle]
pub unsafe extern "C" fn iatc_default_betas(h: *const IatcScenario, betas: *mut f64, len: usize) -> IatcStatus {
    guard(|| {
        let s = handle(h)?;
        out_slice(betas, len, s.ev.len(), "betas")?.copy_from_slice(&s.ev.network.default_betas());
        Ok(())
    })
}

/// Loss breakdown of every node under `betas`.
///
/// # Safety
/// `betas` must hold `len` readable entries and `out` `out_len` writable ones.
#[no_mangle]
pub unsafe extern "C" fn iatc_evaluate(
    h: *const IatcScenario,
    betas: *const f64,
    len: usize,
    out: *mut IatcLossBreakdown,
    out_len: usize,
) -> IatcStatus {
    guard(|| {
        let s = handle(h)?;
        let n = s.ev.len();
        let b = in_slice(betas, len, n, "betas")?;
        let rows = s.ev.all(b)?;
        let dst = out_slice(out, out_len, n, "out")?;
        for (d, r) in dst.iter_mut().zip(&rows) {
            *d = r.into();
        }
        Ok(())
    })
}

/// Runs the distributed optimizer. `converged` and `rounds` may be null.
///
/// # Safety
/// `betas` must point to `len` writable entries.
#[no_mangle]
pub unsafe extern "C" fn iatc_ia_dtc(
    h: *const IatcScenario,
    betas: *mut f64,
    len: usize,
    converged: *mut bool,
    rounds: *mut usize,
) -> IatcStatus {
    guard(|| {
        let s = handle(h)?;
        let dst = out_slice(betas, len, s.ev.len(), "betas")?;
        let r = ia_dtc(&s.ev, &s.ev.network.scenario.optimizer)?;
        dst.copy_from_slice(&r.policy.beta);
        if let Some(c) = converged.as_mut() {
            *c = r.converged;
        }
        if let Some(k) = rounds.as_mut() {
            *k = r.rounds;
        }
        Ok(())
    })
}

/// Runs the centralized optimizer for the scenario's source node.
/// `r_best` and `converged` may be null.
///
/// # Safety
/// `betas` must point to `len` writable entries.
#[no_mangle]
pub unsafe extern "C" fn iatc_ia_tc(
    h: *const IatcScenario,
    betas: *mut f64,
    len: usize,
    r_best: *mut f64,
    converged: *mut bool,
) -> IatcStatus {
    guard(|| {
        let s = handle(h)?;
        let dst = out_slice(betas, len, s.ev.len(), "betas")?;
        let r = ia_tc(&s.ev, &s.ev.network.scenario.optimizer)?;
        dst.copy_from_slice(&r.policy.beta);
        if let Some(x) = r_best.as_mut() {
            *x = r.r_best;
        }
        if let Some(c) = converged.as_mut() {
            *c = r.converged;
        }
        Ok(())
    })
}

/// Copies the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to fit) and returns the full message length excluding the NUL.
/// Pass a null `buf` to query the length.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn iatc_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let m = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = m.len().min(len - 1);
            ptr::copy_nonoverlapping(m.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        m.len()
    })
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn iatc_status_name(status: IatcStatus) -> *const c_char {
    let s: &'static CStr = match status {
        IatcStatus::Ok => c"ok",
        IatcStatus::NullPointer => c"null pointer",
        IatcStatus::InvalidUtf8 => c"invalid utf-8",
        IatcStatus::Parse => c"parse error",
        IatcStatus::Validation => c"validation error",
        IatcStatus::Domain => c"domain error",
        IatcStatus::Numerical => c"numerical failure",
        IatcStatus::InfeasibleTraffic => c"infeasible traffic",
        IatcStatus::Io => c"io error",
        IatcStatus::BufferTooSmall => c"buffer too small",
        IatcStatus::Panic => c"internal panic",
    };
    s.as_ptr()
}
