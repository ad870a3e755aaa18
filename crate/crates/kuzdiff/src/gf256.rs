//! Arithmetic in GF(2^8) with the Kuznyechik reduction polynomial
//! p(x) = x^8 + x^7 + x^6 + x + 1 (0x1C3).
//!
//! This is NOT the AES polynomial (0x11B). Field elements are bytes with the
//! rightmost bit as the least significant polynomial coefficient; addition is
//! bitwise XOR.

use std::sync::OnceLock;

/// Kuznyechik reduction polynomial, including the x^8 term.
pub const REDUCTION_POLY: u16 = 0x1C3;

/// Carry-less multiply with shift-and-reduce. Used only to build the table.
fn mul_slow(a: u8, b: u8) -> u8 {
    let mut acc: u16 = 0;
    let mut a = a as u16;
    let mut b = b;
    while b != 0 {
        if b & 1 != 0 {
            acc ^= a;
        }
        a <<= 1;
        if a & 0x100 != 0 {
            a ^= REDUCTION_POLY;
        }
        b >>= 1;
    }
    acc as u8
}

fn mul_table() -> &'static [[u8; 256]; 256] {
    static TABLE: OnceLock<Box<[[u8; 256]; 256]>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = vec![[0u8; 256]; 256];
        for a in 0..256 {
            for b in 0..256 {
                t[a][b] = mul_slow(a as u8, b as u8);
            }
        }
        t.into_boxed_slice().try_into().unwrap()
    })
}

/// Field product of `a` and `b`, via the precomputed 256x256 table.
#[inline]
pub fn gf_mul(a: u8, b: u8) -> u8 {
    mul_table()[a as usize][b as usize]
}

/// Multiplicative inverse of a nonzero element; panics on zero.
pub fn gf_inv(a: u8) -> u8 {
    assert!(a != 0, "zero has no inverse");
    // 2^8 is tiny, a scan beats implementing extended Euclid here.
    (1..=255).find(|&b| gf_mul(a, b) == 1).unwrap()
}
