//! C interface to block extraction and power-law fitting.
//!
//! Every fallible call returns a [`DcStatus`]; on failure the message is
//! available from [`dc_last_error_message`] on the same thread. Handles
//! are opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::io::BufReader;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use defi_compose::blocks::{block_hash, extract_all, BlockStore, StoredBlock};
use defi_compose::error::{Diagnostics, Error};
use defi_compose::ground_truth::{extend_seeds, filter_protocol_traces, load_seeds, ExtendedSeedSet, ExtensionMode};
use defi_compose::ingest::{
    assemble_trace_trees, build_contract_registry, parse_traces, read_address_set, ContractRegistry, Label, TraceFormat,
};
use defi_compose::topology::fit_power_law;
use defi_compose::types::MethodId;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    InvalidArgument = 5,
    NotFound = 6,
    Internal = 7,
}

/// Loaded seeds, contract registry and extended seed set.
pub struct DcContext {
    registry: ContractRegistry,
    ext: ExtendedSeedSet,
}

/// Distinct building blocks from one extraction, ordered by hash.
pub struct DcBlockSet {
    blocks: Vec<StoredBlock>,
    protocols: Vec<CString>,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct DcPowerLawFit {
    pub alpha: f64,
    pub k_min: u64,
    pub ks_distance: f64,
    pub n_tail: usize,
    pub n_total: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: DcStatus, msg: impl Into<String>) -> DcStatus {
    set_error(msg.into());
    status
}

fn from_error(e: Error) -> DcStatus {
    let status = match &e {
        Error::Io { .. } => DcStatus::Io,
        Error::UnknownHash(_) | Error::MissingArtifact { .. } => DcStatus::NotFound,
        Error::Invalid(_) | Error::NoTail(..) | Error::LengthMismatch { .. } => DcStatus::InvalidArgument,
        _ => DcStatus::Parse,
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> DcStatus) -> DcStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(DcStatus::Internal, "internal panic"))
}

unsafe fn path_arg<'a>(p: *const c_char, name: &str) -> Result<&'a Path, DcStatus> {
    if p.is_null() {
        return Err(fail(DcStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(Path::new)
        .map_err(|_| fail(DcStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

fn open(path: &Path) -> Result<BufReader<File>, DcStatus> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| from_error(Error::io(path, e)))
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn dc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Hashes `n` block entries into the 32 bytes at `out`.
///
/// `labels` holds `n` C strings in the canonical label form, `methods`
/// holds `n` 4-byte selectors and `has_method[i] == 0` marks a missing one.
///
/// # Safety
/// All arrays must hold `n` valid elements; `out` must hold 32 bytes.
#[no_mangle]
pub unsafe extern "C" fn dc_block_hash(
    labels: *const *const c_char,
    outdegrees: *const u32,
    methods: *const [u8; 4],
    has_method: *const u8,
    n: usize,
    out: *mut u8,
) -> DcStatus {
    guard(|| {
        if out.is_null()
            || (n > 0 && (labels.is_null() || outdegrees.is_null() || methods.is_null() || has_method.is_null()))
        {
            return fail(DcStatus::NullPointer, "null argument");
        }
        let mut ls = Vec::with_capacity(n);
        let mut ms = Vec::with_capacity(n);
        for i in 0..n {
            let s = *labels.add(i);
            if s.is_null() {
                return fail(DcStatus::NullPointer, format!("label {i} is null"));
            }
            let Ok(s) = CStr::from_ptr(s).to_str() else {
                return fail(DcStatus::InvalidUtf8, format!("label {i} is not UTF-8"));
            };
            match Label::parse_canonical(s) {
                Some(l) => ls.push(l),
                None => return fail(DcStatus::Parse, format!("bad vertex label {s:?}")),
            }
            ms.push((*has_method.add(i) != 0).then(|| MethodId(*methods.add(i))));
        }
        let degrees = if n == 0 {
            &[][..]
        } else {
            std::slice::from_raw_parts(outdegrees, n)
        };
        let h = tri!(block_hash(&ls, degrees, &ms).map_err(from_error));
        ptr::copy_nonoverlapping(h.0.as_ptr(), out, 32);
        DcStatus::Ok
    })
}

/// Loads seeds, contract creations and an optional ERC20 address list
/// (`erc20_path` may be null) and extends the seeds by closure.
///
/// # Safety
/// Paths must be null or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dc_context_open(
    seed_path: *const c_char,
    creation_path: *const c_char,
    erc20_path: *const c_char,
    out: *mut *mut DcContext,
) -> DcStatus {
    guard(|| {
        if out.is_null() {
            return fail(DcStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let seeds_p = tri!(path_arg(seed_path, "seed_path"));
        let creations_p = tri!(path_arg(creation_path, "creation_path"));
        let mut diags = Diagnostics::default();
        let erc20 = if erc20_path.is_null() {
            Default::default()
        } else {
            let p = tri!(path_arg(erc20_path, "erc20_path"));
            tri!(read_address_set(tri!(open(p))).map_err(from_error))
        };
        let seeds = tri!(load_seeds(tri!(open(seeds_p)), &mut diags).map_err(from_error));
        let creations = tri!(parse_traces(tri!(open(creations_p)), TraceFormat::Csv, &mut diags).map_err(from_error));
        let registry = build_contract_registry(creations, Some(&erc20), &mut diags);
        let ext = extend_seeds(&seeds, &registry, ExtensionMode::Closure, &mut diags);
        *out = Box::into_raw(Box::new(DcContext { registry, ext }));
        DcStatus::Ok
    })
}

/// Extracts building blocks from a trace CSV, pruning failed subtrees.
///
/// # Safety
/// `ctx` must come from [`dc_context_open`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dc_context_extract(
    ctx: *const DcContext,
    traces_path: *const c_char,
    out: *mut *mut DcBlockSet,
) -> DcStatus {
    guard(|| {
        if ctx.is_null() || out.is_null() {
            return fail(DcStatus::NullPointer, "null argument");
        }
        *out = ptr::null_mut();
        let ctx = &*ctx;
        let p = tri!(path_arg(traces_path, "traces_path"));
        let mut diags = Diagnostics::default();
        let records = tri!(parse_traces(tri!(open(p)), TraceFormat::Csv, &mut diags).map_err(from_error));
        let trees = filter_protocol_traces(assemble_trace_trees(records, &mut diags), &ctx.ext);
        let store: BlockStore = extract_all(&trees, &ctx.ext, &ctx.registry, false)
            .into_iter()
            .flat_map(|(_, b)| b)
            .collect();
        let blocks: Vec<StoredBlock> = store.iter().cloned().collect();
        let protocols = blocks
            .iter()
            .map(|b| CString::new(b.block.root_protocol.replace('\0', " ")).unwrap_or_default())
            .collect();
        *out = Box::into_raw(Box::new(DcBlockSet { blocks, protocols }));
        DcStatus::Ok
    })
}

/// # Safety
/// `set` must be null or come from [`dc_context_extract`].
#[no_mangle]
pub unsafe extern "C" fn dc_blockset_len(set: *const DcBlockSet) -> usize {
    set.as_ref().map_or(0, |s| s.blocks.len())
}

/// Copies the 32-byte hash of block `i` to `out`.
///
/// # Safety
/// `set` must come from [`dc_context_extract`]; `out` must hold 32 bytes.
#[no_mangle]
pub unsafe extern "C" fn dc_blockset_hash(set: *const DcBlockSet, i: usize, out: *mut u8) -> DcStatus {
    guard(|| {
        let (Some(s), false) = (set.as_ref(), out.is_null()) else {
            return fail(DcStatus::NullPointer, "null argument");
        };
        let Some(b) = s.blocks.get(i) else {
            return fail(DcStatus::InvalidArgument, format!("index {i} out of range"));
        };
        ptr::copy_nonoverlapping(b.block.hash.0.as_ptr(), out, 32);
        DcStatus::Ok
    })
}

/// Root protocol of block `i`, owned by the set; null when out of range.
///
/// # Safety
/// `set` must be null or come from [`dc_context_extract`].
#[no_mangle]
pub unsafe extern "C" fn dc_blockset_root_protocol(set: *const DcBlockSet, i: usize) -> *const c_char {
    set.as_ref()
        .and_then(|s| s.protocols.get(i))
        .map_or(ptr::null(), |c| c.as_ptr())
}

/// Number of times block `i` occurred; 0 when out of range.
///
/// # Safety
/// `set` must be null or come from [`dc_context_extract`].
#[no_mangle]
pub unsafe extern "C" fn dc_blockset_occurrences(set: *const DcBlockSet, i: usize) -> u64 {
    set.as_ref()
        .and_then(|s| s.blocks.get(i))
        .map_or(0, |b| b.occurrence_count)
}

/// # Safety
/// `set` must be null or come from [`dc_context_extract`], freed once.
#[no_mangle]
pub unsafe extern "C" fn dc_blockset_free(set: *mut DcBlockSet) {
    if !set.is_null() {
        drop(Box::from_raw(set));
    }
}

/// # Safety
/// `ctx` must be null or come from [`dc_context_open`], freed once.
#[no_mangle]
pub unsafe extern "C" fn dc_context_free(ctx: *mut DcContext) {
    if !ctx.is_null() {
        drop(Box::from_raw(ctx));
    }
}

/// Fits a discrete power law to `n` degrees.
///
/// # Safety
/// `degrees` must hold `n` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dc_powerlaw_fit(degrees: *const u64, n: usize, out: *mut DcPowerLawFit) -> DcStatus {
    guard(|| {
        if out.is_null() || (n > 0 && degrees.is_null()) {
            return fail(DcStatus::NullPointer, "null argument");
        }
        let d = if n == 0 {
            &[][..]
        } else {
            std::slice::from_raw_parts(degrees, n)
        };
        let f = tri!(fit_power_law(d).map_err(from_error));
        *out = DcPowerLawFit {
            alpha: f.alpha,
            k_min: f.k_min,
            ks_distance: f.ks_distance,
            n_tail: f.n_tail,
            n_total: f.n_total,
        };
        DcStatus::Ok
    })
}
