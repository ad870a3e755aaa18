//! Exhaustive inner and outer c-differential tables for 8-bit permutations,
//! their uniformities, and the inner/outer duality check.

use crate::gf256::gf_mul;
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Inner,
    Outer,
}

/// 256x256 count table for one (function, c) pair. `counts[a][b]` is the
/// number of x satisfying the orientation's defining equation.
pub struct CDiffTable {
    pub orientation: Orientation,
    pub c: u8,
    pub counts: Box<[[u16; 256]; 256]>,
}

fn check_permutation(f: &[u8; 256]) -> Result<(), Error> {
    let mut seen = [false; 256];
    for &y in f {
        if seen[y as usize] {
            return Err(Error::NotAPermutation);
        }
        seen[y as usize] = true;
    }
    Ok(())
}

/// Invert a permutation table.
pub fn invert(f: &[u8; 256]) -> [u8; 256] {
    let mut inv = [0u8; 256];
    for x in 0..256 {
        inv[f[x] as usize] = x as u8;
    }
    inv
}

fn empty_counts() -> Box<[[u16; 256]; 256]> {
    vec![[0u16; 256]; 256]
        .into_boxed_slice()
        .try_into()
        .map_err(|_| ())
        .unwrap()
}

/// Outer table: counts[a][b] = #{x : F(x^a) ^ c*F(x) = b}.
pub fn outer_cddt(f: &[u8; 256], c: u8) -> Result<CDiffTable, Error> {
    check_permutation(f)?;
    let mut counts = empty_counts();
    for a in 0..256 {
        for x in 0..256 {
            let b = f[x ^ a] ^ gf_mul(c, f[x]);
            counts[a][b as usize] += 1;
        }
    }
    Ok(CDiffTable {
        orientation: Orientation::Outer,
        c,
        counts,
    })
}

/// Inner table: counts[a][b] = #{x : F(c*x ^ a) ^ F(x) = b}.
pub fn inner_cddt(f: &[u8; 256], c: u8) -> Result<CDiffTable, Error> {
    check_permutation(f)?;
    let mut counts = empty_counts();
    for a in 0..256u16 {
        for x in 0..256usize {
            let b = f[(gf_mul(c, x as u8) ^ a as u8) as usize] ^ f[x];
            counts[a as usize][b as usize] += 1;
        }
    }
    Ok(CDiffTable {
        orientation: Orientation::Inner,
        c,
        counts,
    })
}

/// Maximum table entry over valid cells: the a=0 row is excluded when c=1
/// (where it is forced to 256 on the diagonal), included otherwise.
pub fn c_uniformity(t: &CDiffTable) -> u32 {
    let start = if t.c == 1 { 1 } else { 0 };
    let mut max = 0u32;
    for a in start..256 {
        for b in 0..256 {
            max = max.max(t.counts[a][b] as u32);
        }
    }
    max
}

/// Theorem check: outer table of F at (a,b) equals inner table of F^-1 at
/// (b,a), for every c in 1..=255. Exhaustive.
pub fn verify_duality(f: &[u8; 256]) -> Result<bool, Error> {
    check_permutation(f)?;
    let f_inv = invert(f);
    for c in 1..=255u8 {
        let outer = outer_cddt(f, c)?;
        let inner = inner_cddt(&f_inv, c)?;
        for a in 0..256 {
            for b in 0..256 {
                if outer.counts[a][b] != inner.counts[b][a] {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

/// Per-c uniformity values delta_c for c in 1..=255.
pub struct UniformitySpectrum {
    pub orientation: Orientation,
    /// per_c[c - 1] is the delta value for constant c.
    pub per_c: [u32; 255],
}

pub fn full_spectrum(f: &[u8; 256], orientation: Orientation) -> Result<UniformitySpectrum, Error> {
    check_permutation(f)?;
    let mut per_c = [0u32; 255];
    for c in 1..=255u8 {
        let t = match orientation {
            Orientation::Inner => inner_cddt(f, c)?,
            Orientation::Outer => outer_cddt(f, c)?,
        };
        per_c[(c - 1) as usize] = c_uniformity(&t);
    }
    Ok(UniformitySpectrum {
        orientation,
        per_c,
    })
}

impl UniformitySpectrum {
    pub fn get(&self, c: u8) -> u32 {
        assert!(c != 0);
        self.per_c[(c - 1) as usize]
    }

    /// CSV with a `c_hex,delta` header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("c_hex,delta\n");
        for c in 1..=255u8 {
            out.push_str(&format!("0x{c:02x},{}\n", self.get(c)));
        }
        out
    }

    /// Plain-text table, five (c, hex, delta) column groups per row.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{}\n",
            match self.orientation {
                Orientation::Inner => "Inner c-Differential Uniformity delta_c",
                Orientation::Outer => "Outer c-Differential Uniformity delta(c,F)",
            }
        ));
        out.push_str(&"  c  Hex  delta |".repeat(5));
        out.push('\n');
        for row in 0..51 {
            for col in 0..5 {
                let c = (row + 51 * col + 1) as u8;
                out.push_str(&format!("{:>3} 0x{:02x} {:>6} |", c, c, self.get(c)));
            }
            out.push('\n');
        }
        out
    }
}
