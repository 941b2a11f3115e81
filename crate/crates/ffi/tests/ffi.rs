use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use defi_compose_ffi::*;

fn fixture(name: &str) -> CString {
    let p = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures/swap_route")
        .join(name);
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let p = dc_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn block_hash_matches_known_digest() {
    let label = CString::new("ASSET").unwrap();
    let labels = [label.as_ptr()];
    let mut out = [0u8; 32];
    let status = unsafe {
        dc_block_hash(
            labels.as_ptr(),
            [0u32].as_ptr(),
            [[0xa9, 0x05, 0x9c, 0xbb]].as_ptr(),
            [1u8].as_ptr(),
            1,
            out.as_mut_ptr(),
        )
    };
    assert_eq!(status, DcStatus::Ok);
    let hex: String = out.iter().map(|b| format!("{b:02x}")).collect();
    assert_eq!(hex, "642b965ea98e5dbb2356f00065635741c1e96ffb950cb41ff806b8610658d7d5");

    let status = unsafe { dc_block_hash(ptr::null(), ptr::null(), ptr::null(), ptr::null(), 0, out.as_mut_ptr()) };
    assert_eq!(status, DcStatus::Ok);
    assert_eq!(out[..4], [0xe3, 0xb0, 0xc4, 0x42]);
}

#[test]
fn bad_label_is_a_parse_error() {
    let label = CString::new("not a label").unwrap();
    let labels = [label.as_ptr()];
    let mut out = [0u8; 32];
    let status = unsafe {
        dc_block_hash(
            labels.as_ptr(),
            [0u32].as_ptr(),
            [[0; 4]].as_ptr(),
            [0u8].as_ptr(),
            1,
            out.as_mut_ptr(),
        )
    };
    assert_eq!(status, DcStatus::Parse);
    assert!(last_error().contains("not a label"));
}

#[test]
fn extracts_swap_route_blocks() {
    let (seeds, creations, erc20, traces) = (
        fixture("seeds.csv"),
        fixture("creations.csv"),
        fixture("erc20.txt"),
        fixture("traces.csv"),
    );
    let mut ctx = ptr::null_mut();
    assert_eq!(
        unsafe { dc_context_open(seeds.as_ptr(), creations.as_ptr(), erc20.as_ptr(), &mut ctx) },
        DcStatus::Ok
    );
    let mut set = ptr::null_mut();
    assert_eq!(
        unsafe { dc_context_extract(ctx, traces.as_ptr(), &mut set) },
        DcStatus::Ok
    );
    let n = unsafe { dc_blockset_len(set) };
    assert_eq!(n, 3);
    let mut protocols = Vec::new();
    for i in 0..n {
        let mut h = [0u8; 32];
        assert_eq!(unsafe { dc_blockset_hash(set, i, h.as_mut_ptr()) }, DcStatus::Ok);
        assert_eq!(unsafe { dc_blockset_occurrences(set, i) }, 1);
        let p = unsafe { CStr::from_ptr(dc_blockset_root_protocol(set, i)) };
        protocols.push(p.to_str().unwrap().to_string());
    }
    protocols.sort();
    assert_eq!(protocols, ["1inch", "sushiswap", "uniswap"]);

    let mut h = [0u8; 32];
    assert_eq!(
        unsafe { dc_blockset_hash(set, n, h.as_mut_ptr()) },
        DcStatus::InvalidArgument
    );
    assert!(unsafe { dc_blockset_root_protocol(set, n) }.is_null());
    unsafe {
        dc_blockset_free(set);
        dc_context_free(ctx);
    }
}

#[test]
fn open_reports_missing_files_and_nulls() {
    let missing = CString::new("/nonexistent/seeds.csv").unwrap();
    let creations = fixture("creations.csv");
    let mut ctx = ptr::null_mut();
    let status = unsafe { dc_context_open(missing.as_ptr(), creations.as_ptr(), ptr::null(), &mut ctx) };
    assert_eq!(status, DcStatus::Io);
    assert!(ctx.is_null());
    assert!(last_error().contains("/nonexistent/seeds.csv"));

    let status = unsafe { dc_context_open(ptr::null(), creations.as_ptr(), ptr::null(), &mut ctx) };
    assert_eq!(status, DcStatus::NullPointer);
    unsafe {
        dc_context_free(ptr::null_mut());
        dc_blockset_free(ptr::null_mut());
    }
    assert_eq!(unsafe { dc_blockset_len(ptr::null()) }, 0);
}

#[test]
fn powerlaw_fit_round_trip() {
    // deterministic heavy tail: floor(10 / u^(1/1.5)) over a uniform grid
    let degrees: Vec<u64> = (1..=5000)
        .map(|i| {
            let u = i as f64 / 5001.0;
            (10.0 * u.powf(-1.0 / 1.5)).floor() as u64
        })
        .collect();
    let mut fit = DcPowerLawFit::default();
    assert_eq!(
        unsafe { dc_powerlaw_fit(degrees.as_ptr(), degrees.len(), &mut fit) },
        DcStatus::Ok
    );
    assert!(fit.alpha > 2.0 && fit.alpha < 3.0, "alpha {}", fit.alpha);
    assert!(fit.k_min >= 10);
    assert_eq!(fit.n_total, degrees.len());

    let few = [1u64, 2, 3];
    assert_eq!(
        unsafe { dc_powerlaw_fit(few.as_ptr(), few.len(), &mut fit) },
        DcStatus::InvalidArgument
    );
    assert!(!last_error().is_empty());
}

#[test]
fn header_compiles_as_c() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header = dir.join("include/defi_compose.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for f in [
        "dc_context_open",
        "dc_context_extract",
        "dc_blockset_free",
        "dc_powerlaw_fit",
        "dc_last_error_message",
    ] {
        assert!(text.contains(f), "{f} missing from header");
    }
    let Ok(out) = Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c", "-include"])
        .arg(&header)
        .arg("/dev/null")
        .output()
    else {
        eprintln!("no C compiler; skipping syntax check");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
