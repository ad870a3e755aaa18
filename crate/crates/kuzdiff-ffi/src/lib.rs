//! C ABI surface for the kuzdiff workbench: opaque cipher handles, exhaustive
//! uniformity spectra, and a JSON-in/JSON-out analysis entry point.
//!
//! All functions return a `KzStatus` code; out-parameters are written only on
//! `Ok`. Strings returned by this library must be released with
//! [`kz_string_free`].

use std::ffi::{c_char, CStr, CString};

use kuzdiff::cdiff::{full_spectrum, Orientation};
use kuzdiff::cipher::{self, RoundKeys};
use kuzdiff::sampler::{run_trials, ExperimentConfig};
use kuzdiff::stats::{analyze, AnalyzeOptions};
use kuzdiff::Error;

/// Status codes returned by every FFI entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KzStatus {
    Ok = 0,
    NullPointer = 1,
    BadKey = 2,
    BadRounds = 3,
    NotAPermutation = 4,
    BadConfig = 5,
    Internal = 6,
}

fn status_of(err: &Error) -> KzStatus {
    match err {
        Error::InvalidKeyLength(_) => KzStatus::BadKey,
        Error::InvalidRounds(_) => KzStatus::BadRounds,
        Error::NotAPermutation => KzStatus::NotAPermutation,
        Error::InvalidHex(_) | Error::InvalidConfig(_) => KzStatus::BadConfig,
        Error::Io { .. } => KzStatus::Internal,
    }
}

/// Opaque handle owning a key schedule.
pub struct KzCipher {
    round_keys: RoundKeys,
}

/// Create a cipher handle from a 32-byte master key.
///
/// # Safety
/// `key` must point to 32 readable bytes; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn kz_cipher_new(key: *const u8, out: *mut *mut KzCipher) -> KzStatus {
    if key.is_null() || out.is_null() {
        return KzStatus::NullPointer;
    }
    let key_bytes: [u8; 32] = std::slice::from_raw_parts(key, 32).try_into().unwrap();
    let handle = Box::new(KzCipher {
        round_keys: cipher::key_schedule(&key_bytes),
    });
    *out = Box::into_raw(handle);
    KzStatus::Ok
}

/// Release a cipher handle. Passing null is a no-op.
///
/// # Safety
/// `handle` must be null or a pointer obtained from [`kz_cipher_new`].
#[no_mangle]
pub unsafe extern "C" fn kz_cipher_free(handle: *mut KzCipher) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

unsafe fn block_op(
    handle: *const KzCipher,
    rounds: u32,
    input: *const u8,
    output: *mut u8,
    decrypt: bool,
) -> KzStatus {
    if handle.is_null() || input.is_null() || output.is_null() {
        return KzStatus::NullPointer;
    }
    if !(1..=9).contains(&rounds) {
        return KzStatus::BadRounds;
    }
    let block: [u8; 16] = std::slice::from_raw_parts(input, 16).try_into().unwrap();
    let keys = &(*handle).round_keys;
    let result = if decrypt {
        cipher::decrypt(&block, keys, rounds)
    } else {
        cipher::encrypt(&block, keys, rounds)
    };
    match result {
        Ok(out_block) => {
            std::slice::from_raw_parts_mut(output, 16).copy_from_slice(&out_block);
            KzStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Encrypt one 16-byte block with the given number of rounds (1..=9).
///
/// # Safety
/// `input` must point to 16 readable bytes, `output` to 16 writable bytes.
#[no_mangle]
pub unsafe extern "C" fn kz_encrypt(
    handle: *const KzCipher,
    rounds: u32,
    input: *const u8,
    output: *mut u8,
) -> KzStatus {
    block_op(handle, rounds, input, output, false)
}

/// Decrypt one 16-byte block with the given number of rounds (1..=9).
///
/// # Safety
/// `input` must point to 16 readable bytes, `output` to 16 writable bytes.
#[no_mangle]
pub unsafe extern "C" fn kz_decrypt(
    handle: *const KzCipher,
    rounds: u32,
    input: *const u8,
    output: *mut u8,
) -> KzStatus {
    block_op(handle, rounds, input, output, true)
}

unsafe fn spectrum_op(table: *const u8, out: *mut u32, orientation: Orientation) -> KzStatus {
    if table.is_null() || out.is_null() {
        return KzStatus::NullPointer;
    }
    let f: [u8; 256] = std::slice::from_raw_parts(table, 256).try_into().unwrap();
    match full_spectrum(&f, orientation) {
        Ok(spectrum) => {
            std::slice::from_raw_parts_mut(out, 255).copy_from_slice(&spectrum.per_c);
            KzStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Exhaustive inner c-differential uniformity spectrum of a 256-entry
/// permutation; writes 255 values (c = 1..=255) to `out`.
///
/// # Safety
/// `table` must point to 256 readable bytes, `out` to 255 writable u32s.
#[no_mangle]
pub unsafe extern "C" fn kz_inner_spectrum(table: *const u8, out: *mut u32) -> KzStatus {
    spectrum_op(table, out, Orientation::Inner)
}

/// Exhaustive outer c-differential uniformity spectrum; same layout as
/// [`kz_inner_spectrum`].
///
/// # Safety
/// `table` must point to 256 readable bytes, `out` to 255 writable u32s.
#[no_mangle]
pub unsafe extern "C" fn kz_outer_spectrum(table: *const u8, out: *mut u32) -> KzStatus {
    spectrum_op(table, out, Orientation::Outer)
}

/// Run a full sampling + analysis pipeline.
///
/// `config_json` is a serialized experiment configuration (the same schema the
/// CLI consumes); the result document is returned as a JSON string in `out`,
/// to be released with [`kz_string_free`].
///
/// # Safety
/// `config_json` must be a valid NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn kz_analyze_json(
    config_json: *const c_char,
    workers: u32,
    out: *mut *mut c_char,
) -> KzStatus {
    if config_json.is_null() || out.is_null() {
        return KzStatus::NullPointer;
    }
    let Ok(json) = CStr::from_ptr(config_json).to_str() else {
        return KzStatus::BadConfig;
    };
    let cfg: ExperimentConfig = match serde_json::from_str(json) {
        Ok(cfg) => cfg,
        Err(_) => return KzStatus::BadConfig,
    };
    let map = match run_trials(&cfg, workers.max(1) as usize) {
        Ok(map) => map,
        Err(e) => return status_of(&e),
    };
    let result = match analyze(&map, &cfg, &AnalyzeOptions::default()) {
        Ok(result) => result,
        Err(e) => return status_of(&e),
    };
    let Ok(serialized) = serde_json::to_string(&result) else {
        return KzStatus::Internal;
    };
    let Ok(c_string) = CString::new(serialized) else {
        return KzStatus::Internal;
    };
    *out = c_string.into_raw();
    KzStatus::Ok
}

/// Release a string returned by this library. Passing null is a no-op.
///
/// # Safety
/// `s` must be null or a pointer returned by [`kz_analyze_json`].
#[no_mangle]
pub unsafe extern "C" fn kz_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version as a static NUL-terminated string; do not free.
#[no_mangle]
pub extern "C" fn kz_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}
