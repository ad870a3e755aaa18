//! Cryptanalysis workbench for truncated inner c-differential distinguishers
//! against full and reduced-round Kuznyechik.
//!
//! The crate is organized bottom-up: [`gf256`] field arithmetic, the [`cipher`]
//! itself, exhaustive c-differential tables in [`cdiff`], the Monte Carlo
//! [`sampler`], the [`stats`] detection framework, and [`report`] rendering.

pub mod cdiff;
pub mod cipher;
pub mod gf256;
pub mod report;
pub mod sampler;
pub mod stats;

use thiserror::Error as ThisError;

#[derive(Debug, ThisError)]
pub enum Error {
    #[error("master key must be 32 bytes, got {0}")]
    InvalidKeyLength(usize),
    #[error("rounds must be in 1..=9, got {0}")]
    InvalidRounds(u32),
    #[error("invalid hex: {0}")]
    InvalidHex(String),
    #[error("table input is not a permutation of 0..=255")]
    NotAPermutation,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}
