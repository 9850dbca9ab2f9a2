//! C interface. Every call returns a [`GsStatus`]; on failure the message is kept
//! per thread and read back with [`gs_last_error_message`].

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use gibbs_surfaces::feasibility::{parse_slope, torus_slope_feasible};
use gibbs_surfaces::observables::{log_partition_exact, SigmaMethod};
use gibbs_surfaces::sampler::{cftp_sample, CftpOptions};
use gibbs_surfaces::tilings::{boundary_heights, count_tilings_kasteleyn, SquareRegion};
use gibbs_surfaces::{Dir, Energy, Error, Graph, PeriodicPotential, RngStream, Site};

/// Result codes. `GS_STATUS_OK` is zero.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ConfigParse = 3,
    Infeasible = 4,
    NotLipschitz = 5,
    StateSpaceTooLarge = 6,
    Untileable = 7,
    NoCoalescence = 8,
    BufferTooSmall = 9,
    Panic = 10,
    Other = 11,
}

/// Opaque potential handle.
pub struct GsPotential {
    inner: PeriodicPotential,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> GsStatus {
    match e.kind() {
        "InvalidArgument" => GsStatus::InvalidArgument,
        "ConfigParse" => GsStatus::ConfigParse,
        "Infeasible" | "NegativeCycle" => GsStatus::Infeasible,
        "NotLipschitz" => GsStatus::NotLipschitz,
        "StateSpaceTooLarge" => GsStatus::StateSpaceTooLarge,
        "Untileable" => GsStatus::Untileable,
        "NoCoalescence" => GsStatus::NoCoalescence,
        _ => GsStatus::Other,
    }
}

struct Fail(GsStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), format!("{}: {e}", e.kind()))
    }
}

fn null(what: &str) -> Fail {
    Fail(GsStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> GsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GsStatus::Ok,
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic".into());
            GsStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(GsStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn potential<'a>(p: *const GsPotential) -> Result<&'a PeriodicPotential, Fail> {
    p.as_ref().map(|h| &h.inner).ok_or_else(|| null("potential"))
}

unsafe fn store<T>(out: *mut T, v: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(what));
    }
    *out = v;
    Ok(())
}

/// Message of the last failed call on this thread, or null. Valid until the next failing call.
#[no_mangle]
pub extern "C" fn gs_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Preset (`domino`, `sos-abs`, ...) or a path to a TOML potential file.
///
/// # Safety
/// `spec` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gs_potential_from_spec(spec: *const c_char, out: *mut *mut GsPotential) -> GsStatus {
    guard(|| {
        let p = PeriodicPotential::from_spec(text(spec, "spec")?)?;
        store(out, Box::into_raw(Box::new(GsPotential { inner: p })), "out")
    })
}

/// # Safety
/// `toml` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gs_potential_from_toml(toml: *const c_char, out: *mut *mut GsPotential) -> GsStatus {
    guard(|| {
        let p = PeriodicPotential::from_toml(text(toml, "toml")?)?;
        store(out, Box::into_raw(Box::new(GsPotential { inner: p })), "out")
    })
}

/// # Safety
/// `p` must come from a constructor above and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn gs_potential_free(p: *mut GsPotential) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Energy of increment `eta` on the edge from `(x, y)` along e1 (`dir == 0`) or e2 (`dir == 1`).
/// Infinite energies are written as `INFINITY`.
///
/// # Safety
/// `p` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gs_potential_edge_energy(
    p: *const GsPotential,
    x: i64,
    y: i64,
    dir: u32,
    eta: f64,
    out: *mut f64,
) -> GsStatus {
    guard(|| {
        let pot = potential(p)?;
        let d = match dir {
            0 => Dir::E1,
            1 => Dir::E2,
            _ => return Err(Fail(GsStatus::InvalidArgument, format!("direction {dir}"))),
        };
        let e = match pot.edge_energy(Site::new(x, y), d, eta) {
            Energy::Finite(v) => v,
            Energy::Infinite => f64::INFINITY,
        };
        store(out, e, "out")
    })
}

/// Number of domino tilings of a `w × h` rectangle of squares, in decimal.
/// `buf` receives the NUL-terminated digits; `needed` (if non-null) the required size.
///
/// # Safety
/// `buf` must hold `len` bytes (or be null with `len == 0`).
#[no_mangle]
pub unsafe extern "C" fn gs_count_tilings(w: usize, h: usize, buf: *mut c_char, len: usize, needed: *mut usize) -> GsStatus {
    guard(|| {
        let digits = count_tilings_kasteleyn(&SquareRegion::rectangle(w, h)).to_string();
        let size = digits.len() + 1;
        if !needed.is_null() {
            *needed = size;
        }
        if len < size || buf.is_null() {
            return Err(Fail(GsStatus::BufferTooSmall, format!("count needs {size} bytes")));
        }
        ptr::copy_nonoverlapping(digits.as_ptr().cast::<c_char>(), buf, digits.len());
        *buf.add(digits.len()) = 0;
        Ok(())
    })
}

/// Whether slope `slope` (e.g. `"1/2,0"`) is attainable on the `n`-torus with finite energy.
///
/// # Safety
/// `p` must be a live handle, `slope` NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gs_torus_slope_feasible(p: *const GsPotential, n: usize, slope: *const c_char, out: *mut bool) -> GsStatus {
    guard(|| {
        let u = parse_slope(text(slope, "slope")?)?;
        let ok = torus_slope_feasible(potential(p)?, n, &u)?;
        store(out, ok, "out")
    })
}

/// Exact `-log Z / n²` on the `n`-torus at `slope`; `method` 0 sums states, 1 uses the transfer matrix.
///
/// # Safety
/// `p` must be a live handle, `slope` NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gs_sigma_exact(
    p: *const GsPotential,
    n: usize,
    slope: *const c_char,
    method: u32,
    max_states: u64,
    out: *mut f64,
) -> GsStatus {
    guard(|| {
        let m = match method {
            0 => SigmaMethod::ExactSum,
            1 => SigmaMethod::TransferMatrix,
            _ => return Err(Fail(GsStatus::InvalidArgument, format!("method {method}"))),
        };
        let u = parse_slope(text(slope, "slope")?)?;
        let log_z = log_partition_exact(potential(p)?, n, &u, m, max_states)?;
        let sigma = if log_z == f64::NEG_INFINITY { f64::INFINITY } else { -log_z / (n * n) as f64 };
        store(out, sigma, "out")
    })
}

fn write_heights(graph: &Graph, values: &[i64], w: usize, h: usize, out: *mut i64, len: usize) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("heights"));
    }
    if len < w * h {
        return Err(Fail(GsStatus::BufferTooSmall, format!("heights need {} entries", w * h)));
    }
    for y in 0..h {
        for x in 0..w {
            let v = graph.index_of(Site::new(x as i64, y as i64)).expect("rectangle vertex");
            unsafe { *out.add(y * w + x) = values[v] };
        }
    }
    Ok(())
}

/// Exact sample on `w × h` vertices whose outer ring is pinned to `boundary`.
/// Heights are written row by row: `out[y * w + x]`.
///
/// # Safety
/// `p` must be a live handle and `out` hold `len` entries.
#[no_mangle]
pub unsafe extern "C" fn gs_cftp_rectangle(
    p: *const GsPotential,
    w: usize,
    h: usize,
    boundary: i64,
    seed: u64,
    out: *mut i64,
    len: usize,
) -> GsStatus {
    guard(|| {
        let pot = potential(p)?;
        if w == 0 || h == 0 {
            return Err(Fail(GsStatus::InvalidArgument, "empty rectangle".into()));
        }
        let graph = Arc::new(Graph::rectangle(w, h));
        let pins: BTreeMap<usize, i64> = (0..graph.len())
            .filter(|&v| {
                let s = graph.site(v);
                s.x == 0 || s.y == 0 || s.x == w as i64 - 1 || s.y == h as i64 - 1
            })
            .map(|v| (v, boundary))
            .collect();
        let o = cftp_sample(pot, &graph, &pins, &RngStream::new(seed, 0), CftpOptions::default())?;
        write_heights(&graph, o.config.values(), w, h, out, len)
    })
}

/// Uniform domino tiling of `w × h` squares by coupling from the past, as its
/// height function on the `(w + 1) × (h + 1)` corner vertices, row by row.
///
/// # Safety
/// `out` must hold `len` entries.
#[no_mangle]
pub unsafe extern "C" fn gs_cftp_domino(w: usize, h: usize, seed: u64, out: *mut i64, len: usize) -> GsStatus {
    guard(|| {
        let region = SquareRegion::rectangle(w, h);
        let graph = Arc::new(region.vertex_graph());
        let pins = boundary_heights(&region, &graph)?;
        let o = cftp_sample(&PeriodicPotential::domino(), &graph, &pins, &RngStream::new(seed, 0), CftpOptions::default())?;
        write_heights(&graph, o.config.values(), w + 1, h + 1, out, len)
    })
}
