//! Rendering of per-configuration detailed reports, anomaly alert blocks, the
//! cross-configuration summary table, and machine-readable exports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cipher::state_to_hex;
use crate::sampler::{ExperimentConfig, FrequencyMap};
use crate::stats::{AnalysisResult, Anomaly, Category, PairStatistics, ShapiroResult};
use crate::Error;

const RULE: &str =
    "================================================================================";

/// Scientific notation with a fixed-width two-digit exponent: 1.85e-03.
pub fn fmt_sci(x: f64, decimals: usize) -> String {
    let s = format!("{:.*e}", decimals, x);
    match s.split_once('e') {
        Some((mantissa, exp)) => {
            let e: i32 = exp.parse().unwrap_or(0);
            format!("{mantissa}e{}{:02}", if e < 0 { "-" } else { "+" }, e.abs())
        }
        None => s,
    }
}

/// Thousands-separated integer rendering (65280 -> "65,280").
pub fn fmt_thousands(n: u64) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

/// Short label for the c multiplier: scalar byte when uniform (or uniform over
/// the active input bytes with identity elsewhere), full vector hex otherwise.
pub fn c_label(cfg: &ExperimentConfig) -> String {
    let v = cfg.c_vector;
    if v.iter().all(|&x| x == v[0]) {
        return format!("{:02x}", v[0]);
    }
    let active = cfg.mask.input_nibbles.active_state_bytes();
    if !active.is_empty() {
        let c = v[active[0]];
        let uniform_masked = (0..16).all(|i| {
            if active.contains(&i) {
                v[i] == c
            } else {
                v[i] == 0x01
            }
        });
        if uniform_masked {
            return format!("{c:02x}");
        }
    }
    hex::encode(v)
}

fn hex_pair(p: &PairStatistics) -> (String, String) {
    (format!("0x{}", state_to_hex(&p.a)), format!("0x{}", state_to_hex(&p.b)))
}

fn fdr_significant<'a>(result: &'a AnalysisResult) -> Vec<&'a PairStatistics> {
    let mut v: Vec<&PairStatistics> = result
        .pair_stats
        .iter()
        .filter(|p| p.fdr_p < result.adaptive_alpha)
        .collect();
    v.sort_by(|x, y| {
        x.fdr_p
            .partial_cmp(&y.fdr_p)
            .unwrap()
            .then_with(|| (x.a, x.b).cmp(&(y.a, y.b)))
    });
    v
}

/// Full per-configuration analysis report.
pub fn detailed_report(result: &AnalysisResult, cfg: &ExperimentConfig) -> String {
    let mut out = String::new();
    let d = &result.distribution;
    writeln!(out, "{RULE}").unwrap();
    writeln!(
        out,
        "DETAILED STATISTICAL ANALYSIS for c=0x{}, {}",
        c_label(cfg),
        cfg.mask.name
    )
    .unwrap();
    writeln!(out, "{RULE}").unwrap();

    writeln!(out, "DISTRIBUTION PROPERTIES:").unwrap();
    writeln!(out, "  Total unique pairs observed: {}", fmt_thousands(d.n_pairs)).unwrap();
    writeln!(
        out,
        "  Mean/Median/Std Dev count: {:.2} / {:.2} / {:.2}",
        d.mean, d.median, d.std_dev
    )
    .unwrap();
    writeln!(out, "  Max/Min count: {} / {}", d.max, d.min).unwrap();
    writeln!(out, "  Skewness/Kurtosis: {:.3} / {:.3}", d.skewness, d.kurtosis).unwrap();
    writeln!(out).unwrap();

    writeln!(out, "ENHANCED BIAS METRICS:").unwrap();
    writeln!(out, "  KL Divergence: {:.6}", d.kl_divergence).unwrap();
    writeln!(out, "  Max Chi-square: {:.2}", d.max_chi2).unwrap();
    writeln!(out, "  Relative Entropy: {:.3}", d.relative_entropy).unwrap();
    writeln!(out).unwrap();

    writeln!(out, "NORMALITY TESTS (on the distribution of observed counts):").unwrap();
    match &d.shapiro {
        ShapiroResult::Done { stat, p } => writeln!(
            out,
            "  Shapiro-Wilk Test: Statistic={stat:.4}, P-value={}",
            fmt_sci(*p, 3)
        )
        .unwrap(),
        ShapiroResult::Skipped { reason } => {
            writeln!(out, "  Shapiro-Wilk Test: Skipped. Reason: {reason}").unwrap()
        }
    }
    writeln!(
        out,
        "  Anderson-Darling Test: Statistic={:.3}",
        d.anderson_darling.stat
    )
    .unwrap();
    writeln!(
        out,
        "    Critical Values (Sig Levels): {:?} ({:?})",
        d.anderson_darling.critical_values, d.anderson_darling.sig_levels
    )
    .unwrap();
    writeln!(
        out,
        "    (Interpretation: Statistic > Critical Value at a given significance level \
         suggests non-normal distribution)"
    )
    .unwrap();
    writeln!(out).unwrap();

    writeln!(out, "GOODNESS-OF-FIT TESTS (vs. Uniform Distribution):").unwrap();
    writeln!(
        out,
        "  (Evaluates if the overall distribution of {} pairs is uniform. Degrees of freedom: {})",
        fmt_thousands(result.total_cells.min(u64::MAX)),
        fmt_thousands(result.global_tests.chi2_gof.dof as u64)
    )
    .unwrap();
    writeln!(
        out,
        "  Chi-square Test: Statistic={:.2}, P-value={}",
        result.global_tests.chi2_gof.stat,
        fmt_sci(result.global_tests.chi2_gof.p, 3)
    )
    .unwrap();
    writeln!(
        out,
        "  G-test (Log-likelihood): Statistic={:.2}, P-value={}",
        result.global_tests.g_test.stat,
        fmt_sci(result.global_tests.g_test.p, 3)
    )
    .unwrap();
    writeln!(
        out,
        "    (Interpretation: A very small P-value, e.g., < 0.001, provides strong evidence \
         that the cipher's"
    )
    .unwrap();
    writeln!(
        out,
        "     output for this configuration is not uniformly distributed as a whole.)"
    )
    .unwrap();
    writeln!(out).unwrap();

    writeln!(out, "CLUSTER ANALYSIS:").unwrap();
    let significant_clusters = result
        .clusters
        .iter()
        .filter(|c| c.combined_p < result.adaptive_alpha)
        .count();
    writeln!(
        out,
        "  Found {} clusters, {} significant",
        result.clusters.len(),
        significant_clusters
    )
    .unwrap();
    for (i, c) in result.clusters.iter().enumerate().take(10) {
        writeln!(
            out,
            "  Cluster {}: {} members, combined p={}, avg bias={:.2}x",
            i + 1,
            c.member_count,
            fmt_sci(c.combined_p, 3),
            c.avg_bias
        )
        .unwrap();
    }
    writeln!(out).unwrap();

    writeln!(out, "UNCORRECTED SIGNIFICANT PAIRS (raw p < 0.05, before FDR):").unwrap();
    let mut uncorrected: Vec<&PairStatistics> =
        result.pair_stats.iter().filter(|p| p.raw_p < 0.05).collect();
    uncorrected.sort_by(|x, y| {
        x.raw_p
            .partial_cmp(&y.raw_p)
            .unwrap()
            .then_with(|| (x.a, x.b).cmp(&(y.a, y.b)))
    });
    writeln!(
        out,
        "  Found {} pairs significant before correction",
        uncorrected.len()
    )
    .unwrap();
    if !uncorrected.is_empty() {
        writeln!(out, "  Top 5 by raw p-value:").unwrap();
        for p in uncorrected.iter().take(5) {
            let (a, b) = hex_pair(p);
            writeln!(out, "    {a} -> {b} (Bias: {:.2}x, p: {:.3})", p.bias, p.raw_p).unwrap();
        }
    }
    writeln!(out).unwrap();

    writeln!(
        out,
        "SIGNIFICANT DIFFERENTIAL PAIRS (FDR-corrected p < {}):",
        fmt_sci(result.adaptive_alpha, 3)
    )
    .unwrap();
    writeln!(
        out,
        "  (These are specific (Input Diff, Output Diff) pairs whose observed frequencies"
    )
    .unwrap();
    writeln!(
        out,
        "   are statistically different from expected, after multiple-test correction.)"
    )
    .unwrap();
    let significant = fdr_significant(result);
    if significant.is_empty() {
        writeln!(out, "  Found 0 significant pairs.").unwrap();
    } else {
        writeln!(
            out,
            "  Found {} significant pairs. Top 10 by corrected p-value:",
            significant.len()
        )
        .unwrap();
        writeln!(
            out,
            "  {:<34} {:<34} {:<10} {:<8} {:<12}",
            "Input Diff (A)", "Output Diff (B)", "Obs Count", "Bias", "Corr P-val"
        )
        .unwrap();
        writeln!(
            out,
            "  {:-<34} {:-<34} {:-<10} {:-<8} {:-<12}",
            "", "", "", "", ""
        )
        .unwrap();
        for p in significant.iter().take(10) {
            let (a, b) = hex_pair(p);
            writeln!(
                out,
                "  {:<34} {:<34} {:<10} {:<8.1} {}",
                a,
                b,
                p.count,
                p.bias,
                fmt_sci(p.fdr_p, 2)
            )
            .unwrap();
        }
    }
    writeln!(out, "{RULE}").unwrap();
    out
}

/// One alert block per raised anomaly, in a fixed order.
pub fn alerts(result: &AnalysisResult, cfg: &ExperimentConfig) -> Vec<String> {
    let mut blocks = Vec::new();
    let label = c_label(cfg);
    let config_line = format!("   Config: {}, c=0x{}", cfg.mask.name, label);
    let rounds = cfg.rounds;

    if result.anomalies.contains(&Anomaly::GlobalDistribution) {
        blocks.push(format!(
            "GLOBAL DISTRIBUTION ANOMALY for {rounds} rounds\n{config_line}\n   \
             G-test P-value={} is below the 1.0e-03 non-randomness threshold\n",
            fmt_sci(result.global_tests.g_test.p, 3)
        ));
    }

    if result.anomalies.contains(&Anomaly::CombinedSignificance) {
        let mut block = format!("COMBINED SIGNIFICANCE DETECTED for {rounds} rounds\n{config_line}\n");
        let combined_moderate = result
            .combined
            .tallies
            .get(&Category::CombinedModerate)
            .copied()
            .unwrap_or(0);
        block.push_str(&format!(
            "   Found {combined_moderate} pairs with bias > 1.3 AND p < 0.1\n"
        ));
        let mut top: Vec<&PairStatistics> = result
            .pair_stats
            .iter()
            .filter(|p| p.categories.contains(&Category::CombinedModerate))
            .collect();
        top.sort_by(|x, y| y.bias.partial_cmp(&x.bias).unwrap());
        for p in top.iter().take(3) {
            let (a, b) = hex_pair(p);
            block.push_str(&format!(
                "     - {a} -> {b} (Bias: {:.2}x, p: {:.3})\n",
                p.bias, p.raw_p
            ));
        }
        blocks.push(block);
    }

    if result.anomalies.contains(&Anomaly::BiasPersistence) {
        let bp = &result.bias_persistence;
        blocks.push(format!(
            "BIAS PERSISTENCE ANOMALY for {rounds} rounds\n{config_line}\n    \
             Observed bias: {:.2}x vs Expected: {:.3}x\n    \
             Ratio: {:.1}x higher than expected decay\n",
            bp.max_bias, bp.expected, bp.ratio
        ));
    }

    if result.anomalies.contains(&Anomaly::CriticalAlert) {
        let significant = fdr_significant(result);
        let mut block = format!(
            "CRITICAL ALERT: Statistically significant characteristic found for {rounds} rounds!\n\
             {config_line}\n   Found {} significant pairs (threshold: 1): Input->Output\n",
            significant.len()
        );
        for p in significant.iter().take(10) {
            let (a, b) = hex_pair(p);
            block.push_str(&format!(
                "     {a} -> {b} (Bias:{:.1}, p-val:{})\n",
                p.bias,
                fmt_sci(p.fdr_p, 2)
            ));
        }
        blocks.push(block);
    }

    blocks
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Marker {
    FdrSignificant,
    CombinedEvidence,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub marker: Marker,
    pub c: u8,
    pub config_name: String,
    pub max_bias: f64,
    pub fdr_sig_count: u64,
    pub min_fdr_p: f64,
}

impl SummaryRow {
    pub fn from_result(result: &AnalysisResult, cfg: &ExperimentConfig, c: u8) -> SummaryRow {
        let max_bias = result.pair_stats.iter().map(|p| p.bias).fold(0.0, f64::max);
        let min_fdr_p = result
            .pair_stats
            .iter()
            .map(|p| p.fdr_p)
            .fold(1.0f64, f64::min);
        let marker = if result.fdr_significant_count >= 1 {
            Marker::FdrSignificant
        } else if result.anomalies.contains(&Anomaly::CombinedSignificance) {
            Marker::CombinedEvidence
        } else {
            Marker::None
        };
        SummaryRow {
            marker,
            c,
            config_name: cfg.mask.name.clone(),
            max_bias,
            fdr_sig_count: result.fdr_significant_count,
            min_fdr_p,
        }
    }
}

/// Cross-configuration summary, sorted by minimum FDR-corrected p-value.
pub fn summary_table(rows: &[SummaryRow]) -> String {
    let mut sorted: Vec<&SummaryRow> = rows.iter().collect();
    sorted.sort_by(|x, y| {
        x.min_fdr_p
            .partial_cmp(&y.min_fdr_p)
            .unwrap()
            .then_with(|| (x.c, &x.config_name).cmp(&(y.c, &y.config_name)))
    });
    let mut out = String::new();
    writeln!(out, "Top Noteworthy Findings").unwrap();
    writeln!(
        out,
        "{:<6} {:<5} {:<26} {:<9} {:<9} {:<13}",
        "Marker", "c", "Config", "Max Bias", "FDR Sig.", "Min FDR P-val"
    )
    .unwrap();
    for row in sorted {
        let marker = match row.marker {
            Marker::FdrSignificant => "FDR*",
            Marker::CombinedEvidence => "CE*",
            Marker::None => "",
        };
        writeln!(
            out,
            "{:<6} 0x{:02x}  {:<26} {:<9} {:<9} {}",
            marker,
            row.c,
            row.config_name,
            format!("{:.1}x", row.max_bias),
            row.fdr_sig_count,
            fmt_sci(row.min_fdr_p, 2)
        )
        .unwrap();
    }
    writeln!(out).unwrap();
    writeln!(
        out,
        "FDR* (\u{2021}): significant after False Discovery Rate correction"
    )
    .unwrap();
    writeln!(
        out,
        "CE*  (\u{2020}): combined-evidence significance without FDR-significant pairs"
    )
    .unwrap();
    out
}

/// Top-level machine-readable export document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportDocument {
    pub tool_version: String,
    pub config: ExperimentConfig,
    pub result: AnalysisResult,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExportPaths {
    pub text: PathBuf,
    pub json: PathBuf,
    pub csv: PathBuf,
}

/// Base name `<rounds>r_<c_hex>_<config_name>` shared by the export triple.
pub fn file_stem(cfg: &ExperimentConfig) -> String {
    format!("{}r_{}_{}", cfg.rounds, c_label(cfg), cfg.mask.name)
}

fn io_err(context: &str, path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        context: format!("{context} {}", path.display()),
        source,
    }
}

/// CSV dump of the per-pair statistics.
pub fn pair_stats_csv(result: &AnalysisResult) -> String {
    let mut out =
        String::from("a_hex,b_hex,count,expected,bias,chi2,raw_p,fdr_p,holm_p,bonferroni_p\n");
    for p in &result.pair_stats {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            state_to_hex(&p.a),
            state_to_hex(&p.b),
            p.count,
            p.expected,
            p.bias,
            p.chi2,
            p.raw_p,
            p.fdr_p,
            p.holm_p,
            p.bonferroni_p
        )
        .unwrap();
    }
    out
}

/// Write the text report (with alert blocks), JSON document, and CSV dump
/// into `dir`, named `<rounds>r_<c_hex>_<config_name>.{txt,json,csv}`.
pub fn export_results(
    result: &AnalysisResult,
    cfg: &ExperimentConfig,
    dir: &Path,
) -> Result<ExportPaths, Error> {
    std::fs::create_dir_all(dir).map_err(|e| io_err("creating output directory", dir, e))?;
    let stem = file_stem(cfg);
    let paths = ExportPaths {
        text: dir.join(format!("{stem}.txt")),
        json: dir.join(format!("{stem}.json")),
        csv: dir.join(format!("{stem}.csv")),
    };

    let mut text = detailed_report(result, cfg);
    for block in alerts(result, cfg) {
        text.push('\n');
        text.push_str(&block);
    }
    std::fs::write(&paths.text, &text).map_err(|e| io_err("writing report", &paths.text, e))?;

    let doc = ExportDocument {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        result: result.clone(),
    };
    let json = serde_json::to_string_pretty(&doc)
        .map_err(|e| Error::InvalidConfig(format!("serializing results: {e}")))?;
    std::fs::write(&paths.json, json).map_err(|e| io_err("writing JSON", &paths.json, e))?;

    std::fs::write(&paths.csv, pair_stats_csv(result))
        .map_err(|e| io_err("writing CSV", &paths.csv, e))?;
    Ok(paths)
}

/// Load a previously exported JSON document.
pub fn import_results(path: &Path) -> Result<ExportDocument, Error> {
    let data = std::fs::read_to_string(path).map_err(|e| io_err("reading JSON", path, e))?;
    serde_json::from_str(&data).map_err(|e| Error::InvalidConfig(format!("parsing {}: {e}", path.display())))
}

/// Rebuild the raw frequency map recorded in an analysis result, enabling an
/// exact re-run of the statistics.
pub fn frequency_map_from_result(result: &AnalysisResult) -> FrequencyMap {
    let mut counts = BTreeMap::new();
    for p in &result.pair_stats {
        counts.insert((p.a, p.b), p.count);
    }
    FrequencyMap {
        counts,
        trials_used: result.trials_used,
        trials_skipped: result.trials_skipped,
        pattern_matches: result.pattern_matches,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::{broadcast_c, run_trials, MaskConfig};
    use crate::stats::{analyze, AnalyzeOptions};

    fn small_run(rounds: u32, c: u8, trials: u64) -> (ExperimentConfig, AnalysisResult) {
        let cfg = ExperimentConfig {
            rounds,
            c_vector: broadcast_c(c),
            mask: MaskConfig::byte_pair(8, 8).unwrap(),
            trials,
            seed: 77,
            master_key: [3u8; 32],
        };
        let map = run_trials(&cfg, 2).unwrap();
        let result = analyze(&map, &cfg, &AnalyzeOptions::default()).unwrap();
        (cfg, result)
    }

    #[test]
    fn sci_formatting() {
        assert_eq!(fmt_sci(1.85e-3, 2), "1.85e-03");
        assert_eq!(fmt_sci(0.0, 2), "0.00e+00");
        assert_eq!(fmt_sci(0.4548, 3), "4.548e-01");
        assert_eq!(fmt_sci(1.0, 3), "1.000e+00");
        assert_eq!(fmt_sci(2.5e-120, 2), "2.50e-120");
    }

    #[test]
    fn thousands_formatting() {
        assert_eq!(fmt_thousands(65280), "65,280");
        assert_eq!(fmt_thousands(999), "999");
        assert_eq!(fmt_thousands(1_000_000), "1,000,000");
        assert_eq!(fmt_thousands(0), "0");
    }

    #[test]
    fn c_labels() {
        let mut cfg = ExperimentConfig {
            rounds: 9,
            c_vector: broadcast_c(0x04),
            mask: MaskConfig::byte_pair(8, 8).unwrap(),
            trials: 1,
            seed: 0,
            master_key: [0u8; 32],
        };
        assert_eq!(c_label(&cfg), "04");
        cfg.c_vector = crate::sampler::masked_c(0x91, &cfg.mask);
        assert_eq!(c_label(&cfg), "91");
        cfg.c_vector[0] = 0x55; // now truly heterogeneous
        assert_eq!(c_label(&cfg).len(), 32);
    }

    #[test]
    fn report_sections_render() {
        let (cfg, result) = small_run(2, 0x02, 60_000);
        let text = detailed_report(&result, &cfg);
        for section in [
            "DETAILED STATISTICAL ANALYSIS",
            "DISTRIBUTION PROPERTIES:",
            "Total unique pairs observed:",
            "Mean/Median/Std Dev count:",
            "ENHANCED BIAS METRICS:",
            "KL Divergence:",
            "Relative Entropy:",
            "NORMALITY TESTS",
            "Anderson-Darling Test:",
            "GOODNESS-OF-FIT TESTS",
            "Chi-square Test:",
            "G-test (Log-likelihood):",
            "CLUSTER ANALYSIS:",
            "UNCORRECTED SIGNIFICANT PAIRS",
            "SIGNIFICANT DIFFERENTIAL PAIRS",
        ] {
            assert!(text.contains(section), "missing section {section}");
        }
        assert!(text.contains("byte_8_in->byte_8_out"));
    }

    #[test]
    fn alert_blocks_match_anomaly_flags() {
        let (cfg, result) = small_run(1, 0x01, 200_000);
        let blocks = alerts(&result, &cfg);
        assert_eq!(blocks.len(), result.anomalies.len());
        // a grossly biased 1-round c=1 run must raise the critical alert
        assert!(result.anomalies.contains(&Anomaly::CriticalAlert));
        assert!(blocks.iter().any(|b| b.contains("CRITICAL ALERT")));
        for block in &blocks {
            assert!(block.contains("Config: byte_8_in->byte_8_out"));
        }
    }

    #[test]
    fn quiet_run_produces_no_alerts() {
        // synthetic uniform result via analyze of a flat map
        use crate::sampler::{FrequencyMap, NibbleSet};
        let mask = MaskConfig::new(
            "nib",
            NibbleSet::from_indices(&[16]).unwrap(),
            NibbleSet::from_indices(&[16]).unwrap(),
        )
        .unwrap();
        let mut map = FrequencyMap::default();
        for a in 1..=15u8 {
            for b in 0..=15u8 {
                let mut sa = [0u8; 16];
                let mut sb = [0u8; 16];
                sa[7] = a << 4;
                sb[7] = b << 4;
                map.counts.insert((sa, sb), 500);
            }
        }
        map.trials_used = 240 * 500;
        let cfg = ExperimentConfig {
            rounds: 5,
            c_vector: broadcast_c(0x02),
            mask,
            trials: map.trials_used,
            seed: 1,
            master_key: [0u8; 32],
        };
        let result = analyze(&map, &cfg, &AnalyzeOptions::default()).unwrap();
        assert!(result.anomalies.is_empty());
        assert!(alerts(&result, &cfg).is_empty());
        let text = detailed_report(&result, &cfg);
        assert!(text.contains("Found 0 significant pairs."));
    }

    #[test]
    fn summary_table_sorting_and_markers() {
        let rows = vec![
            SummaryRow {
                marker: Marker::None,
                c: 0x03,
                config_name: "byte_10_in->byte_10_out".into(),
                max_bias: 1.6,
                fdr_sig_count: 0,
                min_fdr_p: 0.187,
            },
            SummaryRow {
                marker: Marker::FdrSignificant,
                c: 0x01,
                config_name: "byte_2_in->byte_3_out".into(),
                max_bias: 10.2,
                fdr_sig_count: 10923,
                min_fdr_p: 0.0,
            },
            SummaryRow {
                marker: Marker::CombinedEvidence,
                c: 0x91,
                config_name: "byte_8_in->byte_8_out".into(),
                max_bias: 1.7,
                fdr_sig_count: 0,
                min_fdr_p: 0.0156,
            },
        ];
        let text = summary_table(&rows);
        let fdr_pos = text.find("0x01").unwrap();
        let ce_pos = text.find("0x91").unwrap();
        let none_pos = text.find("0x03").unwrap();
        assert!(fdr_pos < ce_pos && ce_pos < none_pos);
        assert!(text.contains("FDR*"));
        assert!(text.contains("CE*"));
        assert!(text.contains("False Discovery Rate"));
        // tie-break on equal p: by (c, config_name)
        let tied = vec![
            SummaryRow {
                marker: Marker::None,
                c: 0x02,
                config_name: "b".into(),
                max_bias: 1.0,
                fdr_sig_count: 0,
                min_fdr_p: 0.5,
            },
            SummaryRow {
                marker: Marker::None,
                c: 0x02,
                config_name: "a".into(),
                max_bias: 1.0,
                fdr_sig_count: 0,
                min_fdr_p: 0.5,
            },
        ];
        let text = summary_table(&tied);
        assert!(text.find(" a ").unwrap() < text.find(" b ").unwrap());
        // empty input: header only, no panic
        assert!(summary_table(&[]).contains("Top Noteworthy Findings"));
    }

    #[test]
    fn export_import_round_trip_reproduces_statistics() {
        let (cfg, result) = small_run(3, 0x04, 50_000);
        let dir = tempfile::tempdir().unwrap();
        let paths = export_results(&result, &cfg, dir.path()).unwrap();
        assert!(paths.text.exists() && paths.json.exists() && paths.csv.exists());
        assert!(paths
            .text
            .file_name()
            .unwrap()
            .to_str()
            .unwrap()
            .starts_with("3r_04_byte_8_in->byte_8_out"));

        let doc = import_results(&paths.json).unwrap();
        assert_eq!(doc.config, cfg);
        assert_eq!(doc.result, result);
        // re-running the statistics on the re-imported counts is exact
        let map = frequency_map_from_result(&doc.result);
        let rerun = analyze(&map, &doc.config, &AnalyzeOptions::default()).unwrap();
        assert_eq!(rerun.pair_stats, result.pair_stats);
        assert_eq!(rerun.fdr_significant_count, result.fdr_significant_count);

        // CSV row count matches observed pairs
        let csv = std::fs::read_to_string(&paths.csv).unwrap();
        assert_eq!(csv.lines().count(), result.pair_stats.len() + 1);
        // seed echoed for exact reruns
        let raw = std::fs::read_to_string(&paths.json).unwrap();
        assert!(raw.contains("\"seed\""));
    }

    #[test]
    fn report_is_deterministic() {
        let (cfg, result) = small_run(2, 0x03, 30_000);
        assert_eq!(detailed_report(&result, &cfg), detailed_report(&result, &cfg));
        assert_eq!(alerts(&result, &cfg), alerts(&result, &cfg));
    }
}
