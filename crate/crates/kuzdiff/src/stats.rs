//! Statistical detection framework: expected-probability model, per-pair
//! significance with multiple-testing corrections, adaptive thresholds,
//! distribution diagnostics, SPRT, Fisher aggregation, clustering, and
//! anomaly detectors.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};
use statrs::function::erf::erfc;
use statrs::function::gamma::gamma_ur;

use crate::cipher::State;
use crate::sampler::{ExperimentConfig, FrequencyMap};
use crate::Error;

/// Smallest p-value fed into Fisher's method; genuine zeros are clamped here
/// to keep the log finite.
pub const FISHER_P_FLOOR: f64 = 1e-300;

/// Exact binomial p-values are used while trials * p_exp <= this; above it the
/// normal approximation with continuity correction takes over.
pub const NORMAL_APPROX_SWITCHOVER: f64 = 50.0;

// ---------------------------------------------------------------------------
// Elementary distribution helpers
// ---------------------------------------------------------------------------

/// Standard normal survival function via erfc (precise in the far tail).
pub fn normal_sf(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Upper tail of the chi-squared distribution with `dof` degrees of freedom.
pub fn chi2_sf(stat: f64, dof: f64) -> f64 {
    if stat <= 0.0 {
        return 1.0;
    }
    gamma_ur(dof / 2.0, stat / 2.0)
}

/// Standard normal quantile function (Acklam/Moro-grade rational
/// approximation via statrs).
fn normal_ppf(p: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    Normal::new(0.0, 1.0).unwrap().inverse_cdf(p)
}

// ---------------------------------------------------------------------------
// Expected-probability model and per-pair significance
// ---------------------------------------------------------------------------

/// Probability of any specific (input diff, output diff) pair under the
/// uniform null: 1 / ((2^{4 k_a} - 1) * 2^{4 k_b}).
pub fn expected_probability(k_a: u32, k_b: u32) -> Result<f64, Error> {
    if k_a == 0 || k_b == 0 {
        return Err(Error::InvalidConfig(
            "mask nibble counts must be at least 1".into(),
        ));
    }
    let a_space = 2f64.powi(4 * k_a as i32) - 1.0;
    let b_space = 2f64.powi(4 * k_b as i32);
    Ok(1.0 / (a_space * b_space))
}

/// Number of cells in the (a, b) pair space, saturating at u64::MAX.
pub fn pair_space_cells(k_a: u32, k_b: u32) -> u64 {
    let bits = 4 * (k_a + k_b) as u64;
    if bits >= 64 {
        return u64::MAX;
    }
    (1u64 << (4 * k_a)).wrapping_sub(1) * (1u64 << (4 * k_b))
}

/// Two-sided test of `count` against Binomial(trials, p_exp).
///
/// Exact while the expected count is at most [`NORMAL_APPROX_SWITCHOVER`];
/// beyond that, normal approximation with continuity correction.
pub fn pair_pvalue(count: u64, trials: u64, p_exp: f64) -> f64 {
    assert!(count <= trials, "count exceeds trials");
    if trials == 0 {
        return 1.0;
    }
    let mean = trials as f64 * p_exp;
    let (p_low, p_high) = if mean <= NORMAL_APPROX_SWITCHOVER {
        let bin = Binomial::new(p_exp, trials).expect("valid binomial");
        let p_le = bin.cdf(count);
        let p_ge = if count == 0 { 1.0 } else { bin.sf(count - 1) };
        (p_le, p_ge)
    } else {
        let sd = (trials as f64 * p_exp * (1.0 - p_exp)).sqrt();
        let p_le = normal_cdf((count as f64 + 0.5 - mean) / sd);
        let p_ge = normal_sf((count as f64 - 0.5 - mean) / sd);
        (p_le, p_ge)
    };
    (2.0 * p_low.min(p_high)).clamp(0.0, 1.0)
}

// ---------------------------------------------------------------------------
// Multiple-testing corrections
// ---------------------------------------------------------------------------

/// Benjamini-Hochberg step-up adjusted p-values (FDR control).
pub fn benjamini_hochberg(raw: &[f64]) -> Vec<f64> {
    let m = raw.len();
    if m == 0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| raw[i].partial_cmp(&raw[j]).unwrap());
    let mut adjusted = vec![0.0; m];
    let mut running_min = 1.0f64;
    for rank in (0..m).rev() {
        let i = order[rank];
        let candidate = (raw[i] * m as f64 / (rank + 1) as f64).min(1.0);
        running_min = running_min.min(candidate);
        adjusted[i] = running_min;
    }
    adjusted
}

/// Holm step-down adjusted p-values (FWER control).
pub fn holm(raw: &[f64]) -> Vec<f64> {
    let m = raw.len();
    if m == 0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| raw[i].partial_cmp(&raw[j]).unwrap());
    let mut adjusted = vec![0.0; m];
    let mut running_max = 0.0f64;
    for (rank, &i) in order.iter().enumerate() {
        let candidate = (raw[i] * (m - rank) as f64).min(1.0);
        running_max = running_max.max(candidate);
        adjusted[i] = running_max;
    }
    adjusted
}

/// Bonferroni adjusted p-values: m * p, clipped to 1.
pub fn bonferroni(raw: &[f64]) -> Vec<f64> {
    let m = raw.len() as f64;
    raw.iter().map(|&p| (p * m).min(1.0)).collect()
}

// ---------------------------------------------------------------------------
// Adaptive threshold
// ---------------------------------------------------------------------------

/// Linear-interpolation percentile of already-sorted data, q in [0, 1].
fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

/// alpha_base * (1 + eta * IQR / sqrt(n)) * (1 + max(0, (r - 5) * 0.1)),
/// capped at 0.15. IQR and n are taken over the pairs with count > 0.
pub fn adaptive_threshold(counts: &[u64], alpha_base: f64, rounds: u32, eta: f64) -> f64 {
    let mut observed: Vec<f64> = counts.iter().filter(|&&c| c > 0).map(|&c| c as f64).collect();
    observed.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = observed.len();
    let dispersion = if n == 0 {
        1.0
    } else {
        let iqr = percentile_sorted(&observed, 0.75) - percentile_sorted(&observed, 0.25);
        1.0 + eta * iqr / (n as f64).sqrt()
    };
    let round_factor = 1.0 + 0.0f64.max((rounds as f64 - 5.0) * 0.1);
    (alpha_base * dispersion * round_factor).min(0.15)
}

// ---------------------------------------------------------------------------
// Divergences and goodness of fit
// ---------------------------------------------------------------------------

/// KL divergence sum p_i ln(p_i / q_i) with 0 ln 0 := 0. Inputs must be
/// normalized over the same support; q must be positive wherever p is.
pub fn kl_divergence(observed: &[f64], expected: &[f64]) -> Result<f64, Error> {
    if observed.len() != expected.len() {
        return Err(Error::InvalidConfig("distribution length mismatch".into()));
    }
    let mut kl = 0.0;
    for (&p, &q) in observed.iter().zip(expected) {
        if p > 0.0 {
            if q <= 0.0 {
                return Err(Error::InvalidConfig(
                    "expected distribution is zero where observed is positive".into(),
                ));
            }
            kl += p * (p / q).ln();
        }
    }
    Ok(kl.max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GofTest {
    pub stat: f64,
    pub dof: f64,
    pub p: f64,
}

/// Pearson chi-squared goodness of fit: per-cell contributions, their max,
/// their sum, and the tail p-value at dof = cells - 1.
pub fn chi_square_suite(observed: &[f64], expected: &[f64]) -> (f64, GofTest) {
    assert_eq!(observed.len(), expected.len());
    let mut max_cell = 0.0f64;
    let mut stat = 0.0f64;
    for (&o, &e) in observed.iter().zip(expected) {
        assert!(e > 0.0, "expected counts must be positive");
        let contribution = (o - e) * (o - e) / e;
        max_cell = max_cell.max(contribution);
        stat += contribution;
    }
    let dof = (observed.len() - 1) as f64;
    (
        max_cell,
        GofTest {
            stat,
            dof,
            p: chi2_sf(stat, dof),
        },
    )
}

/// G-test (log-likelihood ratio): G = 2 sum O ln(O/E), O = 0 contributes 0.
pub fn g_test(observed: &[f64], expected: &[f64]) -> GofTest {
    assert_eq!(observed.len(), expected.len());
    let mut stat = 0.0f64;
    for (&o, &e) in observed.iter().zip(expected) {
        assert!(e > 0.0, "expected counts must be positive");
        if o > 0.0 {
            stat += o * (o / e).ln();
        }
    }
    stat *= 2.0;
    let dof = (observed.len() - 1) as f64;
    GofTest {
        stat,
        dof,
        p: chi2_sf(stat.max(0.0), dof),
    }
}

// ---------------------------------------------------------------------------
// Distribution summary (moments + normality diagnostics)
// ---------------------------------------------------------------------------

pub const AD_CRITICAL_VALUES: [f64; 5] = [0.576, 0.656, 0.787, 0.918, 1.092];
pub const AD_SIG_LEVELS: [f64; 5] = [15.0, 10.0, 5.0, 2.5, 1.0];

/// Largest sample size Shapiro-Wilk is run on; larger samples are recorded as
/// skipped.
pub const SHAPIRO_MAX_N: usize = 5000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AndersonDarling {
    pub stat: f64,
    pub critical_values: [f64; 5],
    pub sig_levels: [f64; 5],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ShapiroResult {
    Done { stat: f64, p: f64 },
    Skipped { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSummary {
    pub n_pairs: u64,
    pub mean: f64,
    pub median: f64,
    pub std_dev: f64,
    pub max: u64,
    pub min: u64,
    pub skewness: f64,
    /// Excess kurtosis (normal -> 0).
    pub kurtosis: f64,
    pub kl_divergence: f64,
    pub max_chi2: f64,
    pub relative_entropy: f64,
    pub anderson_darling: AndersonDarling,
    pub shapiro: ShapiroResult,
}

/// Anderson-Darling A^2 against a normal with parameters estimated from the
/// sample.
pub fn anderson_darling_stat(data: &[f64]) -> f64 {
    let n = data.len();
    assert!(n >= 2, "need at least two observations");
    let mean = data.iter().sum::<f64>() / n as f64;
    let var = data.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n as f64 - 1.0);
    let sd = var.sqrt();
    if sd == 0.0 {
        return f64::INFINITY;
    }
    let mut z: Vec<f64> = data.iter().map(|x| (x - mean) / sd).collect();
    z.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut s = 0.0;
    for i in 0..n {
        let f_lo = normal_cdf(z[i]).clamp(1e-300, 1.0 - 1e-16);
        let f_hi = normal_cdf(z[n - 1 - i]).clamp(1e-300, 1.0 - 1e-16);
        s += (2 * i + 1) as f64 * (f_lo.ln() + (1.0 - f_hi).ln());
    }
    -(n as f64) - s / n as f64
}

/// Shapiro-Wilk W and p-value (Royston's AS R94 approximation), for
/// 3 <= n <= 5000.
pub fn shapiro_wilk(data: &[f64]) -> Result<(f64, f64), String> {
    let n = data.len();
    if n < 3 {
        return Err("need at least 3 observations".into());
    }
    if n > SHAPIRO_MAX_N {
        return Err(format!(
            "Dataset too large for Shapiro-Wilk (N >= {SHAPIRO_MAX_N})"
        ));
    }
    let mut x: Vec<f64> = data.to_vec();
    x.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if x[n - 1] - x[0] == 0.0 {
        return Err("all observations are identical".into());
    }

    // Expected normal order statistics (Blom scores) and Royston's weights.
    let m: Vec<f64> = (0..n)
        .map(|i| normal_ppf(((i + 1) as f64 - 0.375) / (n as f64 + 0.25)))
        .collect();
    let ssq_m: f64 = m.iter().map(|v| v * v).sum();
    let rsn = 1.0 / (n as f64).sqrt();
    let poly = |coeffs: &[f64], x: f64| coeffs.iter().fold(0.0, |acc, &c| acc * x + c);

    let mut a = vec![0.0f64; n];
    if n == 3 {
        a[0] = -std::f64::consts::FRAC_1_SQRT_2;
        a[2] = std::f64::consts::FRAC_1_SQRT_2;
    } else {
        let c_n = m[n - 1] / ssq_m.sqrt();
        let a_n = poly(&[-2.706056, 4.434685, -2.071190, -0.147981, 0.221157, c_n], rsn);
        if n <= 5 {
            let phi = (ssq_m - 2.0 * m[n - 1] * m[n - 1]) / (1.0 - 2.0 * a_n * a_n);
            for i in 1..n - 1 {
                a[i] = m[i] / phi.sqrt();
            }
            a[n - 1] = a_n;
            a[0] = -a_n;
        } else {
            let c_n1 = m[n - 2] / ssq_m.sqrt();
            let a_n1 =
                poly(&[-3.582633, 5.682633, -1.752461, -0.293762, 0.042981, c_n1], rsn);
            let phi = (ssq_m - 2.0 * m[n - 1] * m[n - 1] - 2.0 * m[n - 2] * m[n - 2])
                / (1.0 - 2.0 * a_n * a_n - 2.0 * a_n1 * a_n1);
            for i in 2..n - 2 {
                a[i] = m[i] / phi.sqrt();
            }
            a[n - 1] = a_n;
            a[n - 2] = a_n1;
            a[0] = -a_n;
            a[1] = -a_n1;
        }
    }

    let mean = x.iter().sum::<f64>() / n as f64;
    let ssq: f64 = x.iter().map(|v| (v - mean) * (v - mean)).sum();
    let dot: f64 = a.iter().zip(&x).map(|(ai, xi)| ai * xi).sum();
    let w = (dot * dot / ssq).clamp(0.0, 1.0);

    // P-value transforms (Royston 1995).
    let p = if n == 3 {
        let pi6 = 6.0 / std::f64::consts::PI;
        (pi6 * (w.sqrt().asin() - (0.75f64).sqrt().asin())).clamp(0.0, 1.0)
    } else if n <= 11 {
        let nf = n as f64;
        let gamma = -2.273 + 0.459 * nf;
        let y = -(gamma - (1.0 - w).ln()).ln();
        let mu = 0.5440 - 0.39978 * nf + 0.025054 * nf * nf - 0.0006714 * nf * nf * nf;
        let sigma = (1.3822 - 0.77857 * nf + 0.062767 * nf * nf - 0.0020322 * nf * nf * nf).exp();
        normal_sf((y - mu) / sigma)
    } else {
        let ln_n = (n as f64).ln();
        let y = (1.0 - w).ln();
        let mu = 0.0038915 * ln_n.powi(3) - 0.083751 * ln_n * ln_n - 0.31082 * ln_n - 1.5861;
        let sigma = (0.0030302 * ln_n * ln_n - 0.082676 * ln_n - 0.4803).exp();
        normal_sf((y - mu) / sigma)
    };
    Ok((w, p))
}

/// Moments, entropy measures, and normality diagnostics of the observed
/// counts. `total_cells` is the size of the full pair space (unobserved cells
/// count as zeros for the entropy and KL terms); `expected_per_cell` is the
/// uniform per-cell expectation used for KL and the max chi-square cell.
pub fn distribution_summary(
    counts: &[u64],
    total_cells: u64,
    expected_per_cell: f64,
) -> DistributionSummary {
    assert!(!counts.is_empty(), "need at least one observed pair");
    let n = counts.len();
    let total: u64 = counts.iter().sum();
    let values: Vec<f64> = counts.iter().map(|&c| c as f64).collect();

    let mean = values.iter().sum::<f64>() / n as f64;
    let mut sorted = values.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = percentile_sorted(&sorted, 0.5);
    let m2 = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    let std_dev = if n > 1 {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0)).sqrt()
    } else {
        0.0
    };
    let (skewness, kurtosis) = if m2 > 0.0 {
        let m3 = values.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n as f64;
        let m4 = values.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n as f64;
        (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    } else {
        (0.0, 0.0)
    };

    // Entropy and KL over the full cell space; unobserved cells have p = 0.
    let q = 1.0 / total_cells as f64;
    let mut entropy = 0.0;
    let mut kl = 0.0;
    let mut max_chi2 = 0.0f64;
    for &c in counts {
        let p = c as f64 / total as f64;
        if p > 0.0 {
            entropy -= p * p.ln();
            kl += p * (p / q).ln();
        }
        let diff = c as f64 - expected_per_cell;
        max_chi2 = max_chi2.max(diff * diff / expected_per_cell);
    }
    if total_cells > n as u64 {
        // unobserved cells: chi2 contribution E each
        max_chi2 = max_chi2.max(expected_per_cell);
    }
    let relative_entropy = if total_cells > 1 {
        (entropy / (total_cells as f64).ln()).clamp(0.0, 1.0)
    } else {
        1.0
    };

    let anderson = AndersonDarling {
        stat: if n >= 2 { anderson_darling_stat(&values) } else { 0.0 },
        critical_values: AD_CRITICAL_VALUES,
        sig_levels: AD_SIG_LEVELS,
    };
    let shapiro = if n > SHAPIRO_MAX_N {
        ShapiroResult::Skipped {
            reason: format!("Dataset too large for Shapiro-Wilk (N >= {SHAPIRO_MAX_N})"),
        }
    } else {
        match shapiro_wilk(&values) {
            Ok((stat, p)) => ShapiroResult::Done { stat, p },
            Err(reason) => ShapiroResult::Skipped { reason },
        }
    };

    DistributionSummary {
        n_pairs: n as u64,
        mean,
        median,
        std_dev,
        max: *counts.iter().max().unwrap(),
        min: *counts.iter().min().unwrap(),
        skewness,
        kurtosis,
        kl_divergence: kl.max(0.0),
        max_chi2,
        relative_entropy,
        anderson_darling: anderson,
        shapiro,
    }
}

// ---------------------------------------------------------------------------
// SPRT
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SprtDecision {
    AcceptH1,
    AcceptH0,
    Undecided,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SprtOutcome {
    pub decision: SprtDecision,
    pub n_at_decision: u64,
    /// LLR value at each boundary check (end of each batch).
    pub llr_trace: Vec<f64>,
    pub boundary_a: f64,
    pub boundary_b: f64,
}

/// Wald boundaries A = ln((1-beta)/alpha), B = ln(beta/(1-alpha)).
pub fn sprt_boundaries(alpha: f64, beta: f64) -> (f64, f64) {
    (((1.0 - beta) / alpha).ln(), (beta / (1.0 - alpha)).ln())
}

/// Sequential probability ratio test over a Bernoulli hit stream, boundaries
/// checked once per `batch` observations.
pub fn sprt(
    hits: impl IntoIterator<Item = bool>,
    p0: f64,
    p1: f64,
    alpha: f64,
    beta: f64,
    batch: u64,
) -> Result<SprtOutcome, Error> {
    if !(0.0 < p0 && p0 < p1 && p1 < 1.0) {
        return Err(Error::InvalidConfig(
            "SPRT requires 0 < p0 < p1 < 1".into(),
        ));
    }
    if !(0.0..1.0).contains(&alpha) || !(0.0..1.0).contains(&beta) || alpha <= 0.0 || beta <= 0.0 {
        return Err(Error::InvalidConfig("alpha and beta must be in (0,1)".into()));
    }
    let batch = batch.max(1);
    let (a, b) = sprt_boundaries(alpha, beta);
    let llr_hit = (p1 / p0).ln();
    let llr_miss = ((1.0 - p1) / (1.0 - p0)).ln();

    let mut llr = 0.0f64;
    let mut n = 0u64;
    let mut trace = Vec::new();
    let mut decision = SprtDecision::Undecided;
    for hit in hits {
        llr += if hit { llr_hit } else { llr_miss };
        n += 1;
        if n % batch == 0 {
            trace.push(llr);
            if llr >= a {
                decision = SprtDecision::AcceptH1;
                break;
            }
            if llr <= b {
                decision = SprtDecision::AcceptH0;
                break;
            }
        }
    }
    if decision == SprtDecision::Undecided && n % batch != 0 {
        trace.push(llr);
        if llr >= a {
            decision = SprtDecision::AcceptH1;
        } else if llr <= b {
            decision = SprtDecision::AcceptH0;
        }
    }
    Ok(SprtOutcome {
        decision,
        n_at_decision: n,
        llr_trace: trace,
        boundary_a: a,
        boundary_b: b,
    })
}

// ---------------------------------------------------------------------------
// Fisher combination, bias persistence
// ---------------------------------------------------------------------------

/// Fisher's method: stat = -2 sum ln p_i, combined p from chi^2 with 2k dof.
/// Zero p-values are clamped to [`FISHER_P_FLOOR`] with a warning.
pub fn fisher_combine(pvals: &[f64]) -> Result<(f64, f64), Error> {
    if pvals.is_empty() {
        return Err(Error::InvalidConfig("Fisher's method needs k >= 1".into()));
    }
    let mut stat = 0.0;
    for &p in pvals {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidConfig(format!("p-value {p} outside [0,1]")));
        }
        let p = if p < FISHER_P_FLOOR {
            log::warn!("Fisher's method: clamping p={p:e} to {FISHER_P_FLOOR:e}");
            FISHER_P_FLOOR
        } else {
            p
        };
        stat += -2.0 * p.ln();
    }
    let dof = 2.0 * pvals.len() as f64;
    Ok((stat, chi2_sf(stat, dof)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasPersistence {
    pub max_bias: f64,
    /// 2^(-r/3) expected decay.
    pub expected: f64,
    pub ratio: f64,
    pub flag: bool,
}

/// Compare the strongest observed bias against the 2^(-r/3) expected decay;
/// flag when it exceeds the expectation by a factor of 5 or more.
pub fn bias_persistence(max_bias: f64, rounds: u32) -> BiasPersistence {
    assert!(rounds >= 1);
    let expected = 2f64.powf(-(rounds as f64) / 3.0);
    let ratio = max_bias / expected;
    BiasPersistence {
        max_bias,
        expected,
        ratio,
        flag: ratio >= 5.0,
    }
}

// ---------------------------------------------------------------------------
// Pair statistics, combined evidence, clustering
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    StrongBias,
    ModerateBias,
    WeaklySignificant,
    CombinedModerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Anomaly {
    GlobalDistribution,
    BiasPersistence,
    CombinedSignificance,
    CriticalAlert,
}

mod hex_state {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8; 16], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 16], D::Error> {
        let s = String::deserialize(d)?;
        let v = hex::decode(&s).map_err(serde::de::Error::custom)?;
        v.as_slice()
            .try_into()
            .map_err(|_| serde::de::Error::custom("state must be 16 bytes"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairStatistics {
    #[serde(with = "hex_state")]
    pub a: State,
    #[serde(with = "hex_state")]
    pub b: State,
    pub count: u64,
    pub expected: f64,
    /// P_obs / P_exp.
    pub bias: f64,
    /// Pearson chi-square cell contribution.
    pub chi2: f64,
    pub raw_p: f64,
    pub fdr_p: f64,
    pub holm_p: f64,
    pub bonferroni_p: f64,
    pub categories: BTreeSet<Category>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinedEvidence {
    pub tallies: BTreeMap<Category, u64>,
    /// Fisher (stat, p) for each category holding at least 5 members.
    pub fisher: BTreeMap<Category, (f64, f64)>,
    pub alert: bool,
}

/// Classify pairs into the evidence categories, Fisher-combine any category
/// with at least 5 members, and raise the alert when a combined p falls below
/// the adaptive threshold.
pub fn combined_evidence(pairs: &[PairStatistics], adaptive_alpha: f64) -> CombinedEvidence {
    let mut buckets: BTreeMap<Category, Vec<f64>> = BTreeMap::new();
    for p in pairs {
        for &cat in &p.categories {
            buckets.entry(cat).or_default().push(p.raw_p);
        }
    }
    let mut tallies = BTreeMap::new();
    let mut fisher = BTreeMap::new();
    let mut alert = false;
    for (cat, pvals) in &buckets {
        tallies.insert(*cat, pvals.len() as u64);
        if pvals.len() >= 5 {
            if let Ok((stat, p)) = fisher_combine(pvals) {
                if p < adaptive_alpha {
                    alert = true;
                }
                fisher.insert(*cat, (stat, p));
            }
        }
    }
    CombinedEvidence {
        tallies,
        fisher,
        alert,
    }
}

/// Assign the spec'd evidence categories from bias and raw p.
pub fn categorize(bias: f64, raw_p: f64) -> BTreeSet<Category> {
    let mut set = BTreeSet::new();
    if bias > 1.4 {
        set.insert(Category::StrongBias);
    }
    if (1.2..=1.4).contains(&bias) {
        set.insert(Category::ModerateBias);
    }
    if raw_p < 0.2 {
        set.insert(Category::WeaklySignificant);
    }
    if bias > 1.3 && raw_p < 0.1 {
        set.insert(Category::CombinedModerate);
    }
    set
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub member_count: u64,
    pub combined_p: f64,
    pub avg_bias: f64,
}

fn byte_support(s: &State) -> u16 {
    let mut mask = 0u16;
    for (i, &v) in s.iter().enumerate() {
        if v != 0 {
            mask |= 1 << i;
        }
    }
    mask
}

/// Single-linkage agglomerative clustering of the uncorrected-significant
/// pairs (raw p < 0.05). Features: byte-position support of a and b plus ln
/// bias; distance = Hamming(support_a) + Hamming(support_b) + |d ln bias|,
/// merged while below `cut`. With no candidate pairs, all pairs form one
/// cluster with combined p 1.0.
pub fn cluster_patterns(pairs: &[PairStatistics], cut: f64) -> Vec<Cluster> {
    let candidates: Vec<&PairStatistics> = pairs.iter().filter(|p| p.raw_p < 0.05).collect();
    if candidates.is_empty() {
        if pairs.is_empty() {
            return Vec::new();
        }
        let avg_bias = pairs.iter().map(|p| p.bias).sum::<f64>() / pairs.len() as f64;
        return vec![Cluster {
            member_count: pairs.len() as u64,
            combined_p: 1.0,
            avg_bias,
        }];
    }

    let features: Vec<(u16, u16, f64)> = candidates
        .iter()
        .map(|p| (byte_support(&p.a), byte_support(&p.b), p.bias.max(1e-12).ln()))
        .collect();
    // Single linkage at a fixed cut is the connected components of the
    // "distance < cut" graph; union-find over all candidate pairs.
    let mut parent: Vec<usize> = (0..candidates.len()).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        let mut root = i;
        while parent[root] != root {
            root = parent[root];
        }
        let mut cur = i;
        while parent[cur] != root {
            let next = parent[cur];
            parent[cur] = root;
            cur = next;
        }
        root
    }
    for i in 0..candidates.len() {
        for j in (i + 1)..candidates.len() {
            let (sa_i, sb_i, lb_i) = features[i];
            let (sa_j, sb_j, lb_j) = features[j];
            let d = (sa_i ^ sa_j).count_ones() as f64
                + (sb_i ^ sb_j).count_ones() as f64
                + (lb_i - lb_j).abs();
            if d < cut {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri] = rj;
                }
            }
        }
    }

    let mut groups: BTreeMap<usize, Vec<&PairStatistics>> = BTreeMap::new();
    for i in 0..candidates.len() {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(candidates[i]);
    }
    let mut clusters: Vec<Cluster> = groups
        .values()
        .map(|members| {
            let pvals: Vec<f64> = members.iter().map(|m| m.raw_p).collect();
            let (_, combined_p) = fisher_combine(&pvals).unwrap_or((0.0, 1.0));
            Cluster {
                member_count: members.len() as u64,
                combined_p,
                avg_bias: members.iter().map(|m| m.bias).sum::<f64>() / members.len() as f64,
            }
        })
        .collect();
    clusters.sort_by(|x, y| {
        x.combined_p
            .partial_cmp(&y.combined_p)
            .unwrap()
            .then(y.member_count.cmp(&x.member_count))
    });
    clusters
}

// ---------------------------------------------------------------------------
// Orchestration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeOptions {
    pub alpha_base: f64,
    pub eta: f64,
    pub cluster_cut: f64,
    /// Unobserved cells are included in global goodness-of-fit only while the
    /// full cell space stays at or below this size.
    pub gof_cell_limit: u64,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        AnalyzeOptions {
            alpha_base: 0.05,
            eta: 0.1,
            cluster_cut: 1.0,
            gof_cell_limit: 1 << 22,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalTests {
    pub chi2_gof: GofTest,
    pub g_test: GofTest,
    /// True when unobserved cells were included with expected counts.
    pub includes_unobserved_cells: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisResult {
    pub pair_stats: Vec<PairStatistics>,
    pub distribution: DistributionSummary,
    pub global_tests: GlobalTests,
    pub adaptive_alpha: f64,
    pub fdr_significant_count: u64,
    pub sprt_outcome: Option<SprtOutcome>,
    pub clusters: Vec<Cluster>,
    pub anomalies: BTreeSet<Anomaly>,
    pub combined: CombinedEvidence,
    pub bias_persistence: BiasPersistence,
    pub expected_probability: f64,
    pub total_cells: u64,
    pub trials_used: u64,
    pub trials_skipped: u64,
    pub pattern_matches: u64,
}

/// Run the full statistical pipeline over a frequency map.
pub fn analyze(
    map: &FrequencyMap,
    cfg: &ExperimentConfig,
    opts: &AnalyzeOptions,
) -> Result<AnalysisResult, Error> {
    cfg.validate()?;
    if map.counts.is_empty() {
        return Err(Error::InvalidConfig("no observed pairs to analyze".into()));
    }
    let k_a = cfg.mask.input_nibbles.nibble_count();
    let k_b = cfg.mask.output_nibbles.nibble_count();
    if k_b == 0 {
        return Err(Error::InvalidConfig(
            "output mask must be non-empty for analysis".into(),
        ));
    }
    let p_exp = expected_probability(k_a, k_b)?;
    let total_cells = pair_space_cells(k_a, k_b);
    let trials_used = map.trials_used;
    let expected_count = trials_used as f64 * p_exp;

    // Per-pair statistics over observed pairs.
    let observed: Vec<(&(State, State), &u64)> = map.counts.iter().collect();
    let raw_ps: Vec<f64> = observed
        .iter()
        .map(|&(_, &c)| pair_pvalue(c, trials_used, p_exp))
        .collect();
    let fdr = benjamini_hochberg(&raw_ps);
    let holm_ps = holm(&raw_ps);
    let bonf = bonferroni(&raw_ps);

    let mut pair_stats = Vec::with_capacity(observed.len());
    for (i, ((a, b), &count)) in observed.iter().enumerate() {
        let bias = (count as f64 / trials_used as f64) / p_exp;
        let diff = count as f64 - expected_count;
        pair_stats.push(PairStatistics {
            a: *a,
            b: *b,
            count,
            expected: expected_count,
            bias,
            chi2: diff * diff / expected_count,
            raw_p: raw_ps[i],
            fdr_p: fdr[i],
            holm_p: holm_ps[i],
            bonferroni_p: bonf[i],
            categories: categorize(bias, raw_ps[i]),
        });
    }

    let counts: Vec<u64> = observed.iter().map(|&(_, &c)| c).collect();
    let adaptive_alpha = adaptive_threshold(&counts, opts.alpha_base, cfg.rounds, opts.eta);
    let fdr_significant_count = pair_stats.iter().filter(|p| p.fdr_p < adaptive_alpha).count() as u64;

    // Global goodness of fit, with unobserved cells when the space is small
    // enough to materialize.
    let includes_unobserved = total_cells <= opts.gof_cell_limit;
    let (obs_vec, exp_vec) = if includes_unobserved {
        // observed counts in the first slots, zeros for unobserved cells; the
        // GoF statistics are invariant under cell ordering.
        let mut obs = vec![0.0f64; total_cells as usize];
        for (i, &c) in counts.iter().enumerate() {
            obs[i] = c as f64;
        }
        (obs, vec![expected_count; total_cells as usize])
    } else {
        (
            counts.iter().map(|&c| c as f64).collect::<Vec<f64>>(),
            vec![expected_count; counts.len()],
        )
    };
    let (_, chi2_gof) = chi_square_suite(&obs_vec, &exp_vec);
    let g = g_test(&obs_vec, &exp_vec);

    let distribution = distribution_summary(&counts, total_cells, expected_count);

    let max_bias = pair_stats.iter().map(|p| p.bias).fold(0.0f64, f64::max);
    let persistence = bias_persistence(max_bias, cfg.rounds);
    let combined = combined_evidence(&pair_stats, adaptive_alpha);
    let clusters = cluster_patterns(&pair_stats, opts.cluster_cut);

    let mut anomalies = BTreeSet::new();
    if g.p < 1e-3 {
        anomalies.insert(Anomaly::GlobalDistribution);
    }
    if persistence.flag {
        anomalies.insert(Anomaly::BiasPersistence);
    }
    if combined.alert {
        anomalies.insert(Anomaly::CombinedSignificance);
    }
    if fdr_significant_count >= 1 {
        anomalies.insert(Anomaly::CriticalAlert);
    }

    Ok(AnalysisResult {
        pair_stats,
        distribution,
        global_tests: GlobalTests {
            chi2_gof,
            g_test: g,
            includes_unobserved_cells: includes_unobserved,
        },
        adaptive_alpha,
        fdr_significant_count,
        sprt_outcome: None,
        clusters,
        anomalies,
        combined,
        bias_persistence: persistence,
        expected_probability: p_exp,
        total_cells,
        trials_used,
        trials_skipped: map.trials_skipped,
        pattern_matches: map.pattern_matches,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(x: f64, y: f64, tol: f64) {
        assert!((x - y).abs() <= tol, "{x} vs {y} (tol {tol})");
    }

    #[test]
    fn expected_probability_examples() {
        assert_close(expected_probability(2, 2).unwrap(), 1.0 / 65280.0, 1e-18);
        assert_close(expected_probability(1, 1).unwrap(), 1.0 / 240.0, 1e-18);
        let p88 = expected_probability(8, 8).unwrap();
        assert_close(p88, 1.0 / ((2f64.powi(32) - 1.0) * 2f64.powi(32)), 1e-30);
        assert!(expected_probability(0, 1).is_err());
        assert!(expected_probability(1, 0).is_err());
        assert_eq!(pair_space_cells(2, 2), 65_280);
    }

    #[test]
    fn pvalue_null_consistent_observation() {
        let trials = 1_000_000u64;
        let p_exp = 1.0 / 240.0;
        let count = (trials as f64 * p_exp).round() as u64;
        assert!(pair_pvalue(count, trials, p_exp) >= 0.5);
    }

    #[test]
    fn pvalue_massive_deficit_is_zeroish() {
        assert!(pair_pvalue(0, 1_000_000, 1.0 / 240.0) < 1e-300);
    }

    #[test]
    fn pvalue_exact_matches_binomial_oracle_small() {
        // n=20, p=0.3, count=10: two-sided = 2*min(P(X<=10), P(X>=10))
        let bin = Binomial::new(0.3, 20).unwrap();
        let oracle = 2.0 * (bin.cdf(10)).min(bin.sf(9));
        assert_close(pair_pvalue(10, 20, 0.3), oracle.min(1.0), 1e-12);
    }

    #[test]
    fn pvalue_normal_approx_tracks_exact_near_switchover() {
        // expected count ~60 forces the normal branch; exact binomial oracle
        let trials = 14_400u64;
        let p_exp = 1.0 / 240.0;
        let bin = Binomial::new(p_exp, trials).unwrap();
        for count in [30u64, 50, 60, 75, 100] {
            let exact = (2.0 * bin.cdf(count).min(bin.sf(count - 1))).min(1.0);
            let approx = pair_pvalue(count, trials, p_exp);
            assert!(
                (approx - exact).abs() < 0.01 || (approx / exact - 1.0).abs() < 0.25,
                "count={count}: approx {approx} vs exact {exact}"
            );
        }
    }

    #[test]
    fn bh_hand_oracle() {
        let adj = benjamini_hochberg(&[0.01, 0.02, 0.03, 0.04, 0.05]);
        for v in &adj {
            assert_close(*v, 0.05, 1e-12);
        }
        assert_eq!(benjamini_hochberg(&[1.0, 1.0, 1.0]), vec![1.0, 1.0, 1.0]);
        assert_eq!(benjamini_hochberg(&[0.037]), vec![0.037]);
        assert!(benjamini_hochberg(&[]).is_empty());
    }

    #[test]
    fn bh_monotone_after_sorting() {
        let raw = [0.001, 0.3, 0.02, 0.8, 0.04, 0.9, 0.0002];
        let adj = benjamini_hochberg(&raw);
        let mut idx: Vec<usize> = (0..raw.len()).collect();
        idx.sort_by(|&i, &j| raw[i].partial_cmp(&raw[j]).unwrap());
        for w in idx.windows(2) {
            assert!(adj[w[0]] <= adj[w[1]] + 1e-15);
        }
    }

    #[test]
    fn holm_and_bonferroni_hand_oracles() {
        let h = holm(&[0.01, 0.04]);
        assert_close(h[0], 0.02, 1e-12);
        assert_close(h[1], 0.04, 1e-12);
        assert_eq!(bonferroni(&[0.01]), vec![0.01]);
        let b = bonferroni(&[0.01, 0.2]);
        assert_close(b[0], 0.02, 1e-12);
        assert_close(b[1], 0.4, 1e-12);
    }

    #[test]
    fn correction_ordering_invariant() {
        let raw = [0.001, 0.02, 0.04, 0.07, 0.2, 0.5, 0.9];
        let f = benjamini_hochberg(&raw);
        let h = holm(&raw);
        let b = bonferroni(&raw);
        for i in 0..raw.len() {
            assert!(raw[i] <= f[i] + 1e-15);
            assert!(f[i] <= b[i] + 1e-15);
            assert!(raw[i] <= h[i] + 1e-15);
            assert!(h[i] <= b[i] + 1e-15);
            assert!(f[i] <= 1.0 && h[i] <= 1.0 && b[i] <= 1.0);
        }
    }

    #[test]
    fn adaptive_threshold_examples() {
        // IQR = 0: identical counts
        let flat = vec![10u64; 100];
        assert_close(adaptive_threshold(&flat, 0.05, 5, 0.1), 0.05, 1e-12);
        assert_close(adaptive_threshold(&flat, 0.05, 9, 0.1), 0.07, 1e-12);
        // cap at 0.15
        let spread: Vec<u64> = (0..4).map(|i| 1 + i * 1000).collect();
        assert!(adaptive_threshold(&spread, 0.14, 9, 10.0) <= 0.15 + 1e-15);
        // never below alpha_base for r >= 5
        for r in 5..=9 {
            assert!(adaptive_threshold(&spread, 0.05, r, 0.1) >= 0.05 - 1e-15);
        }
    }

    #[test]
    fn kl_divergence_properties() {
        let u = vec![0.25; 4];
        assert_close(kl_divergence(&u, &u).unwrap(), 0.0, 1e-15);
        let v = [0.4, 0.3, 0.2, 0.1];
        assert!(kl_divergence(&v, &u).unwrap() > 0.0);
        // hand value: sum p ln(p/q)
        let hand: f64 = v.iter().map(|&p| p * (p / 0.25f64).ln()).sum();
        assert_close(kl_divergence(&v, &u).unwrap(), hand, 1e-15);
        assert!(kl_divergence(&[0.5, 0.5], &[1.0, 0.0]).is_err());
        assert!(kl_divergence(&[0.5, 0.5], &[0.5]).is_err());
    }

    #[test]
    fn chi_square_and_g_test_basics() {
        let e = vec![50.0; 10];
        let (max_cell, gof) = chi_square_suite(&e, &e);
        assert_close(max_cell, 0.0, 1e-15);
        assert_close(gof.stat, 0.0, 1e-15);
        assert_close(gof.p, 1.0, 1e-12);
        assert_close(gof.dof, 9.0, 1e-15);
        let g = g_test(&e, &e);
        assert_close(g.stat, 0.0, 1e-15);
        assert_close(g.p, 1.0, 1e-12);

        // single doubled cell contributes exactly E
        let mut o = e.clone();
        o[3] = 100.0;
        let (max_cell, gof2) = chi_square_suite(&o, &e);
        assert_close(max_cell, 50.0, 1e-12);
        assert_close(gof2.stat, 50.0, 1e-12);
    }

    #[test]
    fn g_and_chi2_agree_near_null() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let e = vec![200.0; 500];
        // perturb in offsetting pairs so observed and expected totals match,
        // as they do for real count data
        let mut o = e.clone();
        for i in (0..o.len()).step_by(2) {
            let d = rng.gen_range(-20.0..20.0);
            o[i] += d;
            o[i + 1] -= d;
        }
        let (_, chi) = chi_square_suite(&o, &e);
        let g = g_test(&o, &e);
        assert!((g.stat - chi.stat).abs() / chi.stat < 0.05);
    }

    #[test]
    fn chi2_tail_oracle_values() {
        // chi2 sf spot values (dof=4, x=11.98 -> ~0.0175)
        assert_close(chi2_sf(11.98, 4.0), 0.0175, 5e-4);
        assert_close(chi2_sf(0.0, 10.0), 1.0, 1e-15);
    }

    #[test]
    fn distribution_summary_flat_counts() {
        let counts = vec![80u64; 240];
        let s = distribution_summary(&counts, 240, 80.0);
        assert_close(s.mean, 80.0, 1e-12);
        assert_close(s.median, 80.0, 1e-12);
        assert_close(s.std_dev, 0.0, 1e-12);
        assert_close(s.skewness, 0.0, 1e-12);
        assert_close(s.relative_entropy, 1.0, 1e-12);
        assert_close(s.kl_divergence, 0.0, 1e-12);
        assert_eq!(s.max, 80);
        assert_eq!(s.min, 80);
    }

    #[test]
    fn shapiro_gate_above_5000() {
        let counts: Vec<u64> = (0..6000u64).map(|i| 70 + (i % 13)).collect();
        let s = distribution_summary(&counts, 65_280, 76.0);
        match s.shapiro {
            ShapiroResult::Skipped { ref reason } => assert!(reason.contains("5000")),
            _ => panic!("expected Shapiro skip"),
        }
    }

    #[test]
    fn two_point_relative_entropy_closed_form() {
        // counts {0 -> excluded from observed, so construct two cells 30/90}
        let counts = vec![30u64, 90u64];
        let s = distribution_summary(&counts, 2, 60.0);
        let p = [0.25f64, 0.75];
        let h: f64 = -p.iter().map(|&x| x * x.ln()).sum::<f64>();
        assert_close(s.relative_entropy, h / 2f64.ln(), 1e-12);
    }

    #[test]
    fn shapiro_wilk_sane_on_normal_and_uniform_data() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        // approximately normal via CLT sums
        let normalish: Vec<f64> = (0..500)
            .map(|_| (0..12).map(|_| rng.gen::<f64>()).sum::<f64>() - 6.0)
            .collect();
        let (w, p) = shapiro_wilk(&normalish).unwrap();
        assert!(w > 0.98, "W={w}");
        assert!(p > 0.01, "p={p}");
        // grossly non-normal (exponential-ish) should be rejected
        let skewed: Vec<f64> = (0..500).map(|_| -rng.gen::<f64>().ln().powi(3)).collect();
        let (w2, p2) = shapiro_wilk(&skewed).unwrap();
        assert!(w2 < w);
        assert!(p2 < 1e-6, "p2={p2}");
        // small-sample branch stays in range
        let (w3, p3) = shapiro_wilk(&[1.0, 2.0, 3.0, 4.0, 10.0]).unwrap();
        assert!((0.0..=1.0).contains(&w3) && (0.0..=1.0).contains(&p3));
    }

    #[test]
    fn anderson_darling_separates_normal_from_uniform() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let normalish: Vec<f64> = (0..2000)
            .map(|_| (0..12).map(|_| rng.gen::<f64>()).sum::<f64>() - 6.0)
            .collect();
        let a_norm = anderson_darling_stat(&normalish);
        assert!(a_norm < 1.092, "A2={a_norm}");
        let uniform: Vec<f64> = (0..2000).map(|_| rng.gen::<f64>()).collect();
        let a_unif = anderson_darling_stat(&uniform);
        assert!(a_unif > a_norm);
    }

    #[test]
    fn sprt_boundaries_paper_values() {
        let (a, b) = sprt_boundaries(0.05, 0.2);
        assert_close(a, (0.8f64 / 0.05).ln(), 1e-12);
        assert_close(b, (0.2f64 / 0.95).ln(), 1e-12);
        assert_close(a, 2.7726, 1e-4);
        assert_close(b, -1.5581, 1e-4);
    }

    #[test]
    fn sprt_rejects_degenerate_rates() {
        assert!(sprt(std::iter::empty(), 0.5, 0.5, 0.05, 0.2, 10).is_err());
        assert!(sprt(std::iter::empty(), 0.6, 0.5, 0.05, 0.2, 10).is_err());
        assert!(sprt(std::iter::empty(), 0.1, 0.2, 0.0, 0.2, 10).is_err());
    }

    #[test]
    fn sprt_detects_elevated_rate() {
        use rand::{Rng, SeedableRng};
        let p0 = 0.01;
        let p1 = 0.015;
        let mut h1_accepts = 0;
        for seed in 0..100u64 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let stream = (0..2_000_000).map(|_| rng.gen::<f64>() < p1);
            let out = sprt(stream, p0, p1, 0.05, 0.2, 1000).unwrap();
            if out.decision == SprtDecision::AcceptH1 {
                h1_accepts += 1;
            }
        }
        assert!(h1_accepts >= 80, "accepted H1 only {h1_accepts}/100 times");
    }

    #[test]
    fn sprt_accepts_null_at_null_rate() {
        use rand::{Rng, SeedableRng};
        let p0 = 0.01;
        let p1 = 0.015;
        let mut h0_accepts = 0;
        for seed in 100..200u64 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let stream = (0..2_000_000).map(|_| rng.gen::<f64>() < p0);
            let out = sprt(stream, p0, p1, 0.05, 0.2, 1000).unwrap();
            if out.decision == SprtDecision::AcceptH0 {
                h0_accepts += 1;
            }
        }
        assert!(h0_accepts >= 95, "accepted H0 only {h0_accepts}/100 times");
    }

    #[test]
    fn fisher_combine_oracles() {
        let (stat, p) = fisher_combine(&[1.0]).unwrap();
        assert_close(stat, 0.0, 1e-12);
        assert_close(p, 1.0, 1e-12);
        let (stat, p) = fisher_combine(&[0.05, 0.05]).unwrap();
        assert_close(stat, 11.9829, 1e-3);
        assert_close(p, 0.0175, 5e-4);
        let (stat, p) = fisher_combine(&[0.5; 5]).unwrap();
        assert_close(stat, 6.9315, 1e-3);
        assert_close(p, 0.7320, 1e-3);
        assert!(fisher_combine(&[]).is_err());
        // zero gets floored, not rejected
        let (_, p) = fisher_combine(&[0.0, 0.5]).unwrap();
        assert!(p > 0.0);
    }

    #[test]
    fn bias_persistence_examples() {
        let bp = bias_persistence(1.70, 9);
        assert_close(bp.expected, 0.125, 1e-12);
        assert_close(bp.ratio, 13.6, 1e-9);
        assert!(bp.flag);
        let bp = bias_persistence(0.5, 3);
        assert_close(bp.ratio, 1.0, 1e-12);
        assert!(!bp.flag);
        let bp = bias_persistence(1.63, 6);
        assert_close(bp.ratio, 6.52, 0.01);
        assert!(bp.flag);
        // monotone in max_bias
        let mut prev = false;
        for bias in [0.1, 0.4, 0.7, 1.0, 2.0] {
            let f = bias_persistence(bias, 9).flag;
            assert!(f || !prev);
            prev = f;
        }
    }

    #[test]
    fn categorize_boundaries() {
        assert!(categorize(1.5, 0.5).contains(&Category::StrongBias));
        assert!(categorize(1.3, 0.5).contains(&Category::ModerateBias));
        assert!(!categorize(1.5, 0.5).contains(&Category::ModerateBias));
        assert!(categorize(1.0, 0.1).contains(&Category::WeaklySignificant));
        assert!(categorize(1.35, 0.05).contains(&Category::CombinedModerate));
        assert!(categorize(1.35, 0.05).contains(&Category::ModerateBias));
        assert!(categorize(0.5, 0.5).is_empty());
    }

    fn mk_pair(a_byte: u8, b_byte: u8, bias: f64, raw_p: f64) -> PairStatistics {
        let mut a = [0u8; 16];
        let mut b = [0u8; 16];
        a[7] = a_byte;
        b[7] = b_byte;
        PairStatistics {
            a,
            b,
            count: 100,
            expected: 76.0,
            bias,
            chi2: 1.0,
            raw_p,
            fdr_p: raw_p,
            holm_p: raw_p,
            bonferroni_p: raw_p,
            categories: categorize(bias, raw_p),
        }
    }

    #[test]
    fn combined_evidence_thresholds() {
        // empty input
        let ce = combined_evidence(&[], 0.05);
        assert!(ce.tallies.is_empty());
        assert!(!ce.alert);
        // 4 strong-bias pairs: tallied but not Fisher-combined
        let pairs: Vec<_> = (1..=4).map(|i| mk_pair(i, i, 1.5, 0.5)).collect();
        let ce = combined_evidence(&pairs, 0.05);
        assert_eq!(ce.tallies[&Category::StrongBias], 4);
        assert!(!ce.fisher.contains_key(&Category::StrongBias));
        // 5 significant strong-bias pairs: combined and alerting
        let pairs: Vec<_> = (1..=5).map(|i| mk_pair(i, i, 1.5, 0.001)).collect();
        let ce = combined_evidence(&pairs, 0.05);
        assert!(ce.fisher.contains_key(&Category::StrongBias));
        assert!(ce.alert);
    }

    #[test]
    fn clustering_degenerate_and_split_cases() {
        // no uncorrected-significant pairs: one cluster of everything, p = 1
        let quiet: Vec<_> = (1..=10).map(|i| mk_pair(i, i, 1.0, 0.5)).collect();
        let clusters = cluster_patterns(&quiet, 1.0);
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0].member_count, 10);
        assert_close(clusters[0].combined_p, 1.0, 1e-12);
        // identical support and bias: same cluster
        let twins = vec![mk_pair(3, 9, 1.4, 0.01), mk_pair(5, 9, 1.4, 0.01)];
        // same byte position (7) for both a-supports -> hamming 0
        let clusters = cluster_patterns(&twins, 1.0);
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0].member_count, 2);
        // disjoint byte positions: separate clusters
        let mut far_a = mk_pair(3, 9, 1.4, 0.01);
        far_a.a = [0u8; 16];
        far_a.a[0] = 0x11;
        let near = mk_pair(3, 9, 1.4, 0.01);
        let clusters = cluster_patterns(&[far_a, near], 1.0);
        assert_eq!(clusters.len(), 2);
        // empty input
        assert!(cluster_patterns(&[], 1.0).is_empty());
    }

    #[test]
    fn analyze_end_to_end_uniform_synthetic() {
        use crate::sampler::{broadcast_c, FrequencyMap, MaskConfig};
        // perfectly uniform synthetic map over the 240-cell nibble space
        let mask = MaskConfig::new(
            "nib",
            crate::sampler::NibbleSet::from_indices(&[16]).unwrap(),
            crate::sampler::NibbleSet::from_indices(&[16]).unwrap(),
        )
        .unwrap();
        let mut map = FrequencyMap::default();
        for a in 1..=15u8 {
            for b in 0..=15u8 {
                let mut sa = [0u8; 16];
                let mut sb = [0u8; 16];
                sa[7] = a << 4;
                sb[7] = b << 4;
                map.counts.insert((sa, sb), 100);
            }
        }
        map.trials_used = 240 * 100;
        let cfg = crate::sampler::ExperimentConfig {
            rounds: 9,
            c_vector: broadcast_c(0x04),
            mask,
            trials: 24_000,
            seed: 1,
            master_key: [0u8; 32],
        };
        let result = analyze(&map, &cfg, &AnalyzeOptions::default()).unwrap();
        assert_eq!(result.pair_stats.len(), 240);
        assert_eq!(result.total_cells, 240);
        assert_eq!(result.fdr_significant_count, 0);
        // at 9 rounds the 2^(-r/3) decay model expects bias 0.125, so even a
        // perfectly uniform map (bias 1.0) trips the persistence detector;
        // nothing else may fire
        assert_eq!(
            result.anomalies.iter().collect::<Vec<_>>(),
            vec![&Anomaly::BiasPersistence]
        );
        assert_close(result.global_tests.chi2_gof.stat, 0.0, 1e-9);
        assert_close(result.global_tests.chi2_gof.dof, 239.0, 1e-12);
        for p in &result.pair_stats {
            assert_close(p.bias, 1.0, 1e-12);
            assert!(p.raw_p >= 0.5);
        }
        assert_eq!(result.clusters.len(), 1);
        assert_close(result.clusters[0].combined_p, 1.0, 1e-12);
    }

    #[test]
    fn analyze_flags_a_planted_signal() {
        use crate::sampler::{broadcast_c, FrequencyMap, MaskConfig};
        let mask = MaskConfig::new(
            "nib",
            crate::sampler::NibbleSet::from_indices(&[16]).unwrap(),
            crate::sampler::NibbleSet::from_indices(&[16]).unwrap(),
        )
        .unwrap();
        let mut map = FrequencyMap::default();
        let mut total = 0u64;
        for a in 1..=15u8 {
            for b in 0..=15u8 {
                let mut sa = [0u8; 16];
                let mut sb = [0u8; 16];
                sa[7] = a << 4;
                sb[7] = b << 4;
                let count = if a == 3 && b == 5 { 4000 } else { 1000 };
                map.counts.insert((sa, sb), count);
                total += count;
            }
        }
        map.trials_used = total;
        let cfg = crate::sampler::ExperimentConfig {
            rounds: 1,
            c_vector: broadcast_c(0x01),
            mask,
            trials: total,
            seed: 1,
            master_key: [0u8; 32],
        };
        let result = analyze(&map, &cfg, &AnalyzeOptions::default()).unwrap();
        assert!(result.fdr_significant_count >= 1);
        assert!(result.anomalies.contains(&Anomaly::CriticalAlert));
        assert!(result.anomalies.contains(&Anomaly::GlobalDistribution));
        let planted = result
            .pair_stats
            .iter()
            .max_by(|x, y| x.bias.partial_cmp(&y.bias).unwrap())
            .unwrap();
        assert_eq!(planted.a[7], 3 << 4);
        assert_eq!(planted.b[7], 5 << 4);
        assert!(planted.bias > 3.5);
    }

    #[test]
    fn analysis_result_json_round_trip() {
        use crate::sampler::{broadcast_c, ExperimentConfig, MaskConfig};
        let cfg = ExperimentConfig {
            rounds: 2,
            c_vector: broadcast_c(0x02),
            mask: MaskConfig::byte_pair(8, 8).unwrap(),
            trials: 50_000,
            seed: 5,
            master_key: [1u8; 32],
        };
        let map = crate::sampler::run_trials(&cfg, 2).unwrap();
        let result = analyze(&map, &cfg, &AnalyzeOptions::default()).unwrap();
        let json = serde_json::to_string(&result).unwrap();
        let back: AnalysisResult = serde_json::from_str(&json).unwrap();
        assert_eq!(result, back);
    }
}
