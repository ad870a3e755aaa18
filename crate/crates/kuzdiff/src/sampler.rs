//! Monte Carlo harness for truncated inner c-differential experiments:
//! generates plaintext pairs (x, c*x ^ a), encrypts both, projects the output
//! difference through nibble masks, and accumulates a frequency map.
//!
//! Byte/nibble orientation: experiment names count bytes from the
//! least-significant (rightmost) end of the hex rendering, so `byte_8` is
//! `State` index 7. Nibble index k covers state byte `15 - k/2`; even k is the
//! high nibble of that byte, odd k the low nibble.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cipher::{self, MasterKey, RoundKeys, State};
use crate::gf256::gf_mul;
use crate::Error;

/// Trials per work unit; batches are the unit of RNG substreaming, which makes
/// results independent of the worker count.
pub const BATCH_SIZE: u64 = 1024;

/// A set of nibble indices in 0..32, stored as a bitmask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NibbleSet(pub u32);

impl NibbleSet {
    pub const ALL: NibbleSet = NibbleSet(u32::MAX);
    pub const EMPTY: NibbleSet = NibbleSet(0);

    pub fn from_indices(indices: &[u8]) -> Result<Self, Error> {
        let mut mask = 0u32;
        for &i in indices {
            if i >= 32 {
                return Err(Error::InvalidConfig(format!("nibble index {i} out of range")));
            }
            mask |= 1 << i;
        }
        Ok(NibbleSet(mask))
    }

    /// Both nibbles of experiment byte `k` (counted from the rightmost byte).
    pub fn from_byte(k: u8) -> Result<Self, Error> {
        if k >= 16 {
            return Err(Error::InvalidConfig(format!("byte index {k} out of range")));
        }
        Ok(NibbleSet(0b11 << (2 * k)))
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn nibble_count(&self) -> u32 {
        self.0.count_ones()
    }

    pub fn contains(&self, nibble: u8) -> bool {
        nibble < 32 && self.0 & (1 << nibble) != 0
    }

    /// State byte indices covered by at least one nibble of the set.
    pub fn active_state_bytes(&self) -> Vec<usize> {
        (0..16)
            .filter(|&sb| {
                let k = 2 * (15 - sb) as u8;
                self.contains(k) || self.contains(k + 1)
            })
            .collect()
    }
}

/// Zero out every nibble of `s` whose index is not in `m`.
pub fn project(s: &State, m: NibbleSet) -> State {
    let mut out = [0u8; 16];
    for k in 0..32u8 {
        if m.contains(k) {
            let byte = 15 - (k / 2) as usize;
            let nibble_mask = if k % 2 == 0 { 0xF0 } else { 0x0F };
            out[byte] |= s[byte] & nibble_mask;
        }
    }
    out
}

/// True iff `delta` is nonzero at every byte index in `active_bytes`.
pub fn pattern_match(delta: &State, active_bytes: &[usize]) -> bool {
    active_bytes.iter().all(|&i| delta[i] != 0)
}

/// Component-wise field multiplication of two 16-byte vectors.
pub fn multiply_state(c_vector: &State, x: &State) -> State {
    let mut out = [0u8; 16];
    for i in 0..16 {
        out[i] = gf_mul(c_vector[i], x[i]);
    }
    out
}

/// Named pair of input/output nibble masks defining a truncated experiment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskConfig {
    pub name: String,
    pub input_nibbles: NibbleSet,
    pub output_nibbles: NibbleSet,
}

impl MaskConfig {
    pub fn new(name: impl Into<String>, input: NibbleSet, output: NibbleSet) -> Result<Self, Error> {
        if input.is_empty() {
            return Err(Error::InvalidConfig(
                "input mask must be non-empty (all trials would be skipped)".into(),
            ));
        }
        Ok(MaskConfig {
            name: name.into(),
            input_nibbles: input,
            output_nibbles: output,
        })
    }

    /// Single-byte-in, single-byte-out configuration, named the way the
    /// experiment tables name them (`byte_8_in->byte_8_out`).
    pub fn byte_pair(in_byte: u8, out_byte: u8) -> Result<Self, Error> {
        MaskConfig::new(
            format!("byte_{in_byte}_in->byte_{out_byte}_out"),
            NibbleSet::from_byte(in_byte)?,
            NibbleSet::from_byte(out_byte)?,
        )
    }

    /// Parse `byte_8_in->byte_8_out` or an explicit `in=16,17;out=16,17`
    /// nibble-set literal.
    pub fn parse(s: &str) -> Result<Self, Error> {
        if let Some((inp, out)) = s.split_once("->") {
            let parse_byte = |part: &str, suffix: &str| -> Option<u8> {
                part.strip_prefix("byte_")?.strip_suffix(suffix)?.parse().ok()
            };
            if let (Some(i), Some(o)) = (parse_byte(inp, "_in"), parse_byte(out, "_out")) {
                return MaskConfig::byte_pair(i, o);
            }
        }
        if let Some((inp, out)) = s.split_once(';') {
            let parse_set = |part: &str, prefix: &str| -> Result<NibbleSet, Error> {
                let list = part.strip_prefix(prefix).ok_or_else(|| {
                    Error::InvalidConfig(format!("expected `{prefix}...` in mask literal `{s}`"))
                })?;
                let indices: Result<Vec<u8>, _> =
                    list.split(',').map(|t| t.trim().parse::<u8>()).collect();
                NibbleSet::from_indices(
                    &indices.map_err(|e| Error::InvalidConfig(format!("bad nibble list: {e}")))?,
                )
            };
            return MaskConfig::new(s, parse_set(inp, "in=")?, parse_set(out, "out=")?);
        }
        Err(Error::InvalidConfig(format!("unrecognized mask `{s}`")))
    }

    /// The default experiment set: every configuration named in the paper's
    /// summary tables.
    pub fn default_set() -> Vec<MaskConfig> {
        let mut v: Vec<MaskConfig> = [0u8, 2, 4, 6, 8, 10, 12, 14]
            .iter()
            .map(|&b| MaskConfig::byte_pair(b, b).unwrap())
            .collect();
        for (i, o) in [(0u8, 1u8), (2, 3), (4, 5), (14, 15)] {
            v.push(MaskConfig::byte_pair(i, o).unwrap());
        }
        v
    }
}

/// Full description of one sampling run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub rounds: u32,
    /// Per-byte multiplier; a scalar c is broadcast via the constructors.
    pub c_vector: State,
    pub mask: MaskConfig,
    pub trials: u64,
    pub seed: u64,
    #[serde(with = "hex_key")]
    pub master_key: MasterKey,
}

mod hex_key {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(k: &[u8; 32], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(k))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 32], D::Error> {
        let s = String::deserialize(d)?;
        let v = hex::decode(&s).map_err(serde::de::Error::custom)?;
        v.as_slice()
            .try_into()
            .map_err(|_| serde::de::Error::custom("master key must be 32 bytes"))
    }
}

/// Broadcast a scalar c to all 16 byte positions (the paper's experiment
/// default).
pub fn broadcast_c(c: u8) -> State {
    [c; 16]
}

/// Scalar c at the mask's active input bytes, field identity 0x01 elsewhere.
pub fn masked_c(c: u8, mask: &MaskConfig) -> State {
    let mut v = [0x01u8; 16];
    for i in mask.input_nibbles.active_state_bytes() {
        v[i] = c;
    }
    v
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if !(1..=9).contains(&self.rounds) {
            return Err(Error::InvalidRounds(self.rounds));
        }
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be >= 1".into()));
        }
        if self.mask.input_nibbles.is_empty() {
            return Err(Error::InvalidConfig("input mask must be non-empty".into()));
        }
        Ok(())
    }
}

/// Observed (input diff, output diff) counts for one run.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FrequencyMap {
    pub counts: BTreeMap<(State, State), u64>,
    pub trials_used: u64,
    pub trials_skipped: u64,
    /// Secondary tally: trials whose full output difference was nonzero at
    /// every active output byte.
    pub pattern_matches: u64,
}

impl FrequencyMap {
    pub fn total_count(&self) -> u64 {
        self.counts.values().sum()
    }

    /// Key-wise sum; associative and commutative.
    pub fn merge(mut self, other: FrequencyMap) -> FrequencyMap {
        for (k, v) in other.counts {
            *self.counts.entry(k).or_insert(0) += v;
        }
        self.trials_used += other.trials_used;
        self.trials_skipped += other.trials_skipped;
        self.pattern_matches += other.pattern_matches;
        self
    }

    /// CSV lines `a_hex,b_hex,count` with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("a_hex,b_hex,count\n");
        for ((a, b), count) in &self.counts {
            out.push_str(&format!("{},{},{count}\n", hex::encode(a), hex::encode(b)));
        }
        out
    }
}

/// SplitMix64 mixing step, used to derive independent per-batch RNG seeds.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn batch_rng(seed: u64, batch_index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(batch_index)))
}

struct Accumulator {
    counts: HashMap<(State, State), u64>,
    used: u64,
    skipped: u64,
    pattern_matches: u64,
}

fn run_batch(cfg: &ExperimentConfig, rk: &RoundKeys, batch: u64, n: u64, acc: &mut Accumulator) {
    let mut rng = batch_rng(cfg.seed, batch);
    let active_out = cfg.mask.output_nibbles.active_state_bytes();
    for _ in 0..n {
        let x: State = rng.gen();
        let a_rand: State = loop {
            let a: State = rng.gen();
            if a != [0u8; 16] {
                break a;
            }
        };
        let a = project(&a_rand, cfg.mask.input_nibbles);
        if a == [0u8; 16] {
            acc.skipped += 1;
            continue;
        }
        let mut x2 = multiply_state(&cfg.c_vector, &x);
        for i in 0..16 {
            x2[i] ^= a[i];
        }
        let y = cipher::encrypt_unchecked(&x, rk, cfg.rounds);
        let y2 = cipher::encrypt_unchecked(&x2, rk, cfg.rounds);
        let mut b_full = [0u8; 16];
        for i in 0..16 {
            b_full[i] = y[i] ^ y2[i];
        }
        if pattern_match(&b_full, &active_out) {
            acc.pattern_matches += 1;
        }
        let b = project(&b_full, cfg.mask.output_nibbles);
        *acc.counts.entry((a, b)).or_insert(0) += 1;
        acc.used += 1;
    }
}

/// Stream individual trial outcomes sequentially, calling `f(a, b)` for each
/// non-skipped trial. Uses the same per-batch RNG substreams as
/// [`run_trials`], so batch `i` here reproduces batch `i` there; `skip_batches`
/// offsets the stream (e.g. past a pilot phase). Returns the number of
/// non-skipped trials delivered.
pub fn stream_trials(
    cfg: &ExperimentConfig,
    skip_batches: u64,
    max_trials: u64,
    mut f: impl FnMut(&State, &State) -> bool,
) -> Result<u64, Error> {
    cfg.validate()?;
    let rk = cipher::key_schedule(&cfg.master_key);
    let mut delivered = 0u64;
    let mut generated = 0u64;
    let mut batch = skip_batches;
    'outer: while generated < max_trials {
        let mut rng = batch_rng(cfg.seed, batch);
        for _ in 0..BATCH_SIZE.min(max_trials - generated) {
            generated += 1;
            let x: State = rng.gen();
            let a_rand: State = loop {
                let a: State = rng.gen();
                if a != [0u8; 16] {
                    break a;
                }
            };
            let a = project(&a_rand, cfg.mask.input_nibbles);
            if a == [0u8; 16] {
                continue;
            }
            let mut x2 = multiply_state(&cfg.c_vector, &x);
            for i in 0..16 {
                x2[i] ^= a[i];
            }
            let y = cipher::encrypt_unchecked(&x, &rk, cfg.rounds);
            let y2 = cipher::encrypt_unchecked(&x2, &rk, cfg.rounds);
            let mut b_full = [0u8; 16];
            for i in 0..16 {
                b_full[i] = y[i] ^ y2[i];
            }
            let b = project(&b_full, cfg.mask.output_nibbles);
            delivered += 1;
            if !f(&a, &b) {
                break 'outer;
            }
        }
        batch += 1;
    }
    Ok(delivered)
}

/// Execute the Monte Carlo loop, split across `workers` threads.
///
/// Trials are partitioned into fixed batches of [`BATCH_SIZE`], each with its
/// own seed-derived RNG substream; workers process disjoint batch sets, so the
/// result is identical for any worker count.
pub fn run_trials(cfg: &ExperimentConfig, workers: usize) -> Result<FrequencyMap, Error> {
    cfg.validate()?;
    let workers = workers.max(1);
    let rk = cipher::key_schedule(&cfg.master_key);
    let n_batches = cfg.trials.div_ceil(BATCH_SIZE);

    let batch_len = |batch: u64| -> u64 {
        if batch + 1 == n_batches && cfg.trials % BATCH_SIZE != 0 {
            cfg.trials % BATCH_SIZE
        } else {
            BATCH_SIZE
        }
    };

    let shards: Vec<Accumulator> = std::thread::scope(|scope| {
        let mut handles = Vec::with_capacity(workers);
        for w in 0..workers as u64 {
            let rk = &rk;
            handles.push(scope.spawn(move || {
                let mut acc = Accumulator {
                    counts: HashMap::new(),
                    used: 0,
                    skipped: 0,
                    pattern_matches: 0,
                };
                let mut batch = w;
                while batch < n_batches {
                    run_batch(cfg, rk, batch, batch_len(batch), &mut acc);
                    batch += workers as u64;
                }
                acc
            }));
        }
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });

    let mut map = FrequencyMap::default();
    for shard in shards {
        map.trials_used += shard.used;
        map.trials_skipped += shard.skipped;
        map.pattern_matches += shard.pattern_matches;
        for (k, v) in shard.counts {
            *map.counts.entry(k).or_insert(0) += v;
        }
    }
    debug_assert_eq!(map.trials_used + map.trials_skipped, cfg.trials);
    Ok(map)
}
