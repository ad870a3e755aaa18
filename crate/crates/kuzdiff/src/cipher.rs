//! Kuznyechik (GOST R 34.12-2015 / RFC 7801): S-layer, L-layer with
//! precomputed tables, key schedule, and full or reduced-round
//! encryption/decryption.
//!
//! Byte-order convention: `State` index 0 is the leftmost byte of the 32-hex
//! rendering, matching the RFC 7801 vector layout. Experiment mask naming
//! counts bytes from the other end; that mapping lives in [`crate::sampler`].

use std::sync::OnceLock;

use crate::gf256::gf_mul;
use crate::Error;

/// A 16-byte cipher block.
pub type State = [u8; 16];

/// 256-bit master key, split as K_1 || K_0 (two 128-bit halves, K_1 first).
pub type MasterKey = [u8; 32];

/// The ten round keys K^(0)..K^(9).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundKeys(pub [State; 10]);

pub const SBOX: [u8; 256] = [
    0xfc, 0xee, 0xdd, 0x11, 0xcf, 0x6e, 0x31, 0x16, 0xfb, 0xc4, 0xfa, 0xda, 0x23, 0xc5, 0x04, 0x4d,
    0xe9, 0x77, 0xf0, 0xdb, 0x93, 0x2e, 0x99, 0xba, 0x17, 0x36, 0xf1, 0xbb, 0x14, 0xcd, 0x5f, 0xc1,
    0xf9, 0x18, 0x65, 0x5a, 0xe2, 0x5c, 0xef, 0x21, 0x81, 0x1c, 0x3c, 0x42, 0x8b, 0x01, 0x8e, 0x4f,
    0x05, 0x84, 0x02, 0xae, 0xe3, 0x6a, 0x8f, 0xa0, 0x06, 0x0b, 0xed, 0x98, 0x7f, 0xd4, 0xd3, 0x1f,
    0xeb, 0x34, 0x2c, 0x51, 0xea, 0xc8, 0x48, 0xab, 0xf2, 0x2a, 0x68, 0xa2, 0xfd, 0x3a, 0xce, 0xcc,
    0xb5, 0x70, 0x0e, 0x56, 0x08, 0x0c, 0x76, 0x12, 0xbf, 0x72, 0x13, 0x47, 0x9c, 0xb7, 0x5d, 0x87,
    0x15, 0xa1, 0x96, 0x29, 0x10, 0x7b, 0x9a, 0xc7, 0xf3, 0x91, 0x78, 0x6f, 0x9d, 0x9e, 0xb2, 0xb1,
    0x32, 0x75, 0x19, 0x3d, 0xff, 0x35, 0x8a, 0x7e, 0x6d, 0x54, 0xc6, 0x80, 0xc3, 0xbd, 0x0d, 0x57,
    0xdf, 0xf5, 0x24, 0xa9, 0x3e, 0xa8, 0x43, 0xc9, 0xd7, 0x79, 0xd6, 0xf6, 0x7c, 0x22, 0xb9, 0x03,
    0xe0, 0x0f, 0xec, 0xde, 0x7a, 0x94, 0xb0, 0xbc, 0xdc, 0xe8, 0x28, 0x50, 0x4e, 0x33, 0x0a, 0x4a,
    0xa7, 0x97, 0x60, 0x73, 0x1e, 0x00, 0x62, 0x44, 0x1a, 0xb8, 0x38, 0x82, 0x64, 0x9f, 0x26, 0x41,
    0xad, 0x45, 0x46, 0x92, 0x27, 0x5e, 0x55, 0x2f, 0x8c, 0xa3, 0xa5, 0x7d, 0x69, 0xd5, 0x95, 0x3b,
    0x07, 0x58, 0xb3, 0x40, 0x86, 0xac, 0x1d, 0xf7, 0x30, 0x37, 0x6b, 0xe4, 0x88, 0xd9, 0xe7, 0x89,
    0xe1, 0x1b, 0x83, 0x49, 0x4c, 0x3f, 0xf8, 0xfe, 0x8d, 0x53, 0xaa, 0x90, 0xca, 0xd8, 0x85, 0x61,
    0x20, 0x71, 0x67, 0xa4, 0x2d, 0x2b, 0x09, 0x5b, 0xcb, 0x9b, 0x25, 0xd0, 0xbe, 0xe5, 0x6c, 0x52,
    0x59, 0xa6, 0x74, 0xd2, 0xe6, 0xf4, 0xb4, 0xc0, 0xd1, 0x66, 0xaf, 0xc2, 0x39, 0x4b, 0x63, 0xb6,
];

pub const SBOX_INV: [u8; 256] = [
    0xa5, 0x2d, 0x32, 0x8f, 0x0e, 0x30, 0x38, 0xc0, 0x54, 0xe6, 0x9e, 0x39, 0x55, 0x7e, 0x52, 0x91,
    0x64, 0x03, 0x57, 0x5a, 0x1c, 0x60, 0x07, 0x18, 0x21, 0x72, 0xa8, 0xd1, 0x29, 0xc6, 0xa4, 0x3f,
    0xe0, 0x27, 0x8d, 0x0c, 0x82, 0xea, 0xae, 0xb4, 0x9a, 0x63, 0x49, 0xe5, 0x42, 0xe4, 0x15, 0xb7,
    0xc8, 0x06, 0x70, 0x9d, 0x41, 0x75, 0x19, 0xc9, 0xaa, 0xfc, 0x4d, 0xbf, 0x2a, 0x73, 0x84, 0xd5,
    0xc3, 0xaf, 0x2b, 0x86, 0xa7, 0xb1, 0xb2, 0x5b, 0x46, 0xd3, 0x9f, 0xfd, 0xd4, 0x0f, 0x9c, 0x2f,
    0x9b, 0x43, 0xef, 0xd9, 0x79, 0xb6, 0x53, 0x7f, 0xc1, 0xf0, 0x23, 0xe7, 0x25, 0x5e, 0xb5, 0x1e,
    0xa2, 0xdf, 0xa6, 0xfe, 0xac, 0x22, 0xf9, 0xe2, 0x4a, 0xbc, 0x35, 0xca, 0xee, 0x78, 0x05, 0x6b,
    0x51, 0xe1, 0x59, 0xa3, 0xf2, 0x71, 0x56, 0x11, 0x6a, 0x89, 0x94, 0x65, 0x8c, 0xbb, 0x77, 0x3c,
    0x7b, 0x28, 0xab, 0xd2, 0x31, 0xde, 0xc4, 0x5f, 0xcc, 0xcf, 0x76, 0x2c, 0xb8, 0xd8, 0x2e, 0x36,
    0xdb, 0x69, 0xb3, 0x14, 0x95, 0xbe, 0x62, 0xa1, 0x3b, 0x16, 0x66, 0xe9, 0x5c, 0x6c, 0x6d, 0xad,
    0x37, 0x61, 0x4b, 0xb9, 0xe3, 0xba, 0xf1, 0xa0, 0x85, 0x83, 0xda, 0x47, 0xc5, 0xb0, 0x33, 0xfa,
    0x96, 0x6f, 0x6e, 0xc2, 0xf6, 0x50, 0xff, 0x5d, 0xa9, 0x8e, 0x17, 0x1b, 0x97, 0x7d, 0xec, 0x58,
    0xf7, 0x1f, 0xfb, 0x7c, 0x09, 0x0d, 0x7a, 0x67, 0x45, 0x87, 0xdc, 0xe8, 0x4f, 0x1d, 0x4e, 0x04,
    0xeb, 0xf8, 0xf3, 0x3e, 0x3d, 0xbd, 0x8a, 0x88, 0xdd, 0xcd, 0x0b, 0x13, 0x98, 0x02, 0x93, 0x80,
    0x90, 0xd0, 0x24, 0x34, 0xcb, 0xed, 0xf4, 0xce, 0x99, 0x10, 0x44, 0x40, 0x92, 0x3a, 0x01, 0x26,
    0x12, 0x1a, 0x48, 0x68, 0xf5, 0x81, 0x8b, 0xc7, 0xd6, 0x20, 0x0a, 0x08, 0x00, 0x4c, 0xd7, 0x74,
];

#[inline]
pub fn sbox(x: u8) -> u8 {
    SBOX[x as usize]
}

#[inline]
pub fn sbox_inv(x: u8) -> u8 {
    SBOX_INV[x as usize]
}

/// L-layer feedback coefficients, in State order (index 0 = leftmost byte).
const L_COEFF: [u8; 16] = [
    0x94, 0x20, 0x85, 0x10, 0xC2, 0xC0, 0x01, 0xFB, 0x01, 0xC0, 0xC2, 0x10, 0x85, 0x20, 0x94, 0x01,
];

/// One step of the LFSR underlying L: shift toward higher indices, feedback
/// byte at index 0.
pub fn r_transform(s: &State) -> State {
    let mut out = [0u8; 16];
    let mut fb = 0u8;
    for i in 0..16 {
        fb ^= gf_mul(L_COEFF[i], s[i]);
    }
    out[0] = fb;
    out[1..16].copy_from_slice(&s[0..15]);
    out
}

/// Exact inverse of [`r_transform`].
pub fn r_inv(s: &State) -> State {
    let mut out = [0u8; 16];
    out[0..15].copy_from_slice(&s[1..16]);
    // L_COEFF[15] == 0x01, so the dropped byte is recovered directly.
    let mut fb = s[0];
    for i in 0..15 {
        fb ^= gf_mul(L_COEFF[i], out[i]);
    }
    out[15] = fb;
    out
}

/// L = R^16, computed by composition. The table-driven path must agree with
/// this bit-exactly.
pub fn linear_l(s: &State) -> State {
    let mut x = *s;
    for _ in 0..16 {
        x = r_transform(&x);
    }
    x
}

pub fn linear_l_inv(s: &State) -> State {
    let mut x = *s;
    for _ in 0..16 {
        x = r_inv(&x);
    }
    x
}

/// Precomputed per-byte L-layer tables: `fwd[i][v]` is L applied to the state
/// with value `v` at position `i` and zeros elsewhere, packed as a u128 so
/// reconstruction is 16 lookups and XORs.
pub struct LTables {
    fwd: Box<[[u128; 256]; 16]>,
    inv: Box<[[u128; 256]; 16]>,
}

fn build_one(f: fn(&State) -> State) -> Box<[[u128; 256]; 16]> {
    let mut t = vec![[0u128; 256]; 16];
    for i in 0..16 {
        for v in 0..256 {
            let mut s = [0u8; 16];
            s[i] = v as u8;
            t[i][v] = u128::from_ne_bytes(f(&s));
        }
    }
    t.into_boxed_slice().try_into().map_err(|_| ()).unwrap()
}

pub fn l_tables() -> &'static LTables {
    static TABLES: OnceLock<LTables> = OnceLock::new();
    TABLES.get_or_init(|| LTables {
        fwd: build_one(linear_l),
        inv: build_one(linear_l_inv),
    })
}

impl LTables {
    #[inline]
    pub fn apply(&self, s: &State) -> State {
        let mut acc = 0u128;
        for i in 0..16 {
            acc ^= self.fwd[i][s[i] as usize];
        }
        acc.to_ne_bytes()
    }

    #[inline]
    pub fn apply_inv(&self, s: &State) -> State {
        let mut acc = 0u128;
        for i in 0..16 {
            acc ^= self.inv[i][s[i] as usize];
        }
        acc.to_ne_bytes()
    }
}

/// Key-schedule constants C_1..C_32, C_j = L(Vec(j)) where Vec(j) carries j in
/// the least-significant (rightmost) byte.
pub fn derive_constants() -> [State; 32] {
    let mut out = [[0u8; 16]; 32];
    for j in 1..=32u8 {
        let mut v = [0u8; 16];
        v[15] = j;
        out[(j - 1) as usize] = linear_l(&v);
    }
    out
}

#[inline]
fn xor(a: &State, b: &State) -> State {
    (u128::from_ne_bytes(*a) ^ u128::from_ne_bytes(*b)).to_ne_bytes()
}

#[inline]
fn s_layer(s: &State) -> State {
    let mut out = [0u8; 16];
    for i in 0..16 {
        out[i] = SBOX[s[i] as usize];
    }
    out
}

#[inline]
fn s_layer_inv(s: &State) -> State {
    let mut out = [0u8; 16];
    for i in 0..16 {
        out[i] = SBOX_INV[s[i] as usize];
    }
    out
}

/// Expand a 256-bit master key into the ten round keys.
///
/// K^(0), K^(1) are the two halves verbatim; each following pair comes from 8
/// Feistel steps F_C(a1, a0) = (L(S(a1 xor C)) xor a0, a1) over the derived
/// constants.
pub fn key_schedule(mk: &MasterKey) -> RoundKeys {
    let lt = l_tables();
    let consts = derive_constants();
    let mut keys = [[0u8; 16]; 10];
    let mut a1: State = mk[0..16].try_into().unwrap();
    let mut a0: State = mk[16..32].try_into().unwrap();
    keys[0] = a1;
    keys[1] = a0;
    for pair in 0..4 {
        for step in 0..8 {
            let c = &consts[pair * 8 + step];
            let t = lt.apply(&s_layer(&xor(&a1, c)));
            let new_a1 = xor(&t, &a0);
            a0 = a1;
            a1 = new_a1;
        }
        keys[2 * pair + 2] = a1;
        keys[2 * pair + 3] = a0;
    }
    RoundKeys(keys)
}

pub fn key_schedule_checked(mk: &[u8]) -> Result<RoundKeys, Error> {
    let mk: MasterKey = mk
        .try_into()
        .map_err(|_| Error::InvalidKeyLength(mk.len()))?;
    Ok(key_schedule(&mk))
}

fn check_rounds(rounds: u32) -> Result<(), Error> {
    if (1..=9).contains(&rounds) {
        Ok(())
    } else {
        Err(Error::InvalidRounds(rounds))
    }
}

/// Encrypt with `rounds` iterations of (XOR key; S; L) plus final whitening by
/// K^(rounds). `rounds == 9` is the full standard cipher.
pub fn encrypt(p: &State, rk: &RoundKeys, rounds: u32) -> Result<State, Error> {
    check_rounds(rounds)?;
    Ok(encrypt_unchecked(p, rk, rounds))
}

/// Hot-path variant of [`encrypt`] without the rounds check; callers validate
/// once up front.
#[inline]
pub fn encrypt_unchecked(p: &State, rk: &RoundKeys, rounds: u32) -> State {
    let lt = l_tables();
    let mut x = *p;
    for i in 0..rounds as usize {
        x = lt.apply(&s_layer(&xor(&x, &rk.0[i])));
    }
    xor(&x, &rk.0[rounds as usize])
}

pub fn decrypt(ct: &State, rk: &RoundKeys, rounds: u32) -> Result<State, Error> {
    check_rounds(rounds)?;
    let lt = l_tables();
    let mut x = xor(ct, &rk.0[rounds as usize]);
    for i in (0..rounds as usize).rev() {
        x = xor(&s_layer_inv(&lt.apply_inv(&x)), &rk.0[i]);
    }
    Ok(x)
}

pub fn state_to_hex(s: &State) -> String {
    hex::encode(s)
}

pub fn state_from_hex(h: &str) -> Result<State, Error> {
    let bytes = hex::decode(h).map_err(|e| Error::InvalidHex(e.to_string()))?;
    bytes
        .as_slice()
        .try_into()
        .map_err(|_| Error::InvalidHex(format!("expected 16 bytes, got {}", bytes.len())))
}

/// Deterministically derive an experiment master key from a run seed: the
/// seed is expanded into two counter blocks which are encrypted under the
/// all-zero key, and the two ciphertexts concatenated. Always echoed in
/// exports so runs can be reproduced exactly.
pub fn derive_master_key(seed: u64) -> MasterKey {
    let rk = key_schedule(&[0u8; 32]);
    let mut mk = [0u8; 32];
    for counter in 0u8..2 {
        let mut block = [0u8; 16];
        block[..8].copy_from_slice(&seed.to_le_bytes());
        block[15] = counter;
        let ct = encrypt_unchecked(&block, &rk, 9);
        mk[16 * counter as usize..16 * (counter as usize + 1)].copy_from_slice(&ct);
    }
    mk
}

pub fn master_key_from_hex(h: &str) -> Result<MasterKey, Error> {
    let bytes = hex::decode(h).map_err(|e| Error::InvalidHex(e.to_string()))?;
    bytes
        .as_slice()
        .try_into()
        .map_err(|_| Error::InvalidHex(format!("expected 32 bytes, got {}", bytes.len())))
}
