//! Statistical tests and human-evaluation aggregation.

pub mod special;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::feature::KahanSum;
use crate::rng::KeyedStream;
use special::{chi_square_sf, student_t_sf};

/// Resample count below which permutation tests cannot support p < 1e-5
/// claims; results carry a warning when run with fewer.
pub const RESAMPLES_FOR_1E5: u64 = 1_000_000;

/// Relative slack when comparing resampled statistics against the observed
/// one, so exact ties count as at least as extreme.
const TIE_GAMMA: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Alternative {
    #[default]
    TwoSided,
    Greater,
    Less,
}

impl fmt::Display for Alternative {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Alternative::TwoSided => "two-sided",
            Alternative::Greater => "greater",
            Alternative::Less => "less",
        })
    }
}

impl FromStr for Alternative {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two-sided" | "two_sided" | "twosided" => Ok(Alternative::TwoSided),
            "greater" => Ok(Alternative::Greater),
            "less" => Ok(Alternative::Less),
            other => Err(Error::Stats(format!("unknown alternative {other:?}"))),
        }
    }
}

/// Outcome of a significance test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub method: String,
    pub statistic: f64,
    pub p_value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub df: Option<f64>,
    pub n_a: usize,
    pub n_b: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub effect_size: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alternative: Option<Alternative>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

fn kahan_mean(xs: &[f64]) -> f64 {
    let mut sum = KahanSum::default();
    for &x in xs {
        sum.add(x);
    }
    sum.value() / xs.len() as f64
}

fn sample_variance(xs: &[f64], mean: f64) -> f64 {
    let mut sq = KahanSum::default();
    for &x in xs {
        sq.add((x - mean) * (x - mean));
    }
    sq.value() / (xs.len() - 1) as f64
}

fn extreme(stat: f64, observed: f64, alternative: Alternative) -> bool {
    let gamma = TIE_GAMMA * observed.abs().max(1.0);
    match alternative {
        Alternative::TwoSided => stat.abs() >= observed.abs() - gamma,
        Alternative::Greater => stat >= observed - gamma,
        Alternative::Less => stat <= observed + gamma,
    }
}

/// Two-sample permutation test on the difference of means, with the
/// (b+1)/(n+1) p-value estimator. Deterministic under `seed`: each resample
/// draws from its own counter-based stream, so the result is independent of
/// evaluation order and worker count.
pub fn permutation_test(
    a: &[f64],
    b: &[f64],
    n_resamples: u64,
    seed: u64,
    alternative: Alternative,
) -> Result<TestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Stats("permutation test needs non-empty samples".into()));
    }
    if n_resamples == 0 {
        return Err(Error::Stats("n_resamples must be >= 1".into()));
    }
    let observed = kahan_mean(a) - kahan_mean(b);
    // sorting canonicalizes the pool, so the estimate is invariant to
    // within-group reorderings of the input
    let mut pooled: Vec<f64> = a.iter().chain(b.iter()).copied().collect();
    pooled.sort_by(f64::total_cmp);
    let n_a = a.len();
    let n_b = b.len();
    let mut total = KahanSum::default();
    for &x in &pooled {
        total.add(x);
    }
    let total = total.value();

    let hits: u64 = (0..n_resamples)
        .into_par_iter()
        .map(|i| {
            let mut buf = pooled.clone();
            let mut stream = KeyedStream::for_resample(seed, i);
            stream.partial_shuffle(&mut buf, n_a);
            let mut sum_a = KahanSum::default();
            for &x in &buf[..n_a] {
                sum_a.add(x);
            }
            let mean_a = sum_a.value() / n_a as f64;
            let mean_b = (total - sum_a.value()) / n_b as f64;
            u64::from(extreme(mean_a - mean_b, observed, alternative))
        })
        .sum();

    let p_value = (hits as f64 + 1.0) / (n_resamples as f64 + 1.0);
    let mut warnings = Vec::new();
    if n_resamples < RESAMPLES_FOR_1E5 {
        warnings.push(format!(
            "minimum attainable p-value is {:.3e}; claims at p < 1e-5 need >= {} resamples",
            1.0 / (n_resamples as f64 + 1.0),
            RESAMPLES_FOR_1E5
        ));
    }
    Ok(TestResult {
        method: "permutation".to_string(),
        statistic: observed,
        p_value,
        df: None,
        n_a,
        n_b,
        effect_size: None,
        alternative: Some(alternative),
        warnings,
    })
}

/// Number of distinct group-a assignments, or `None` past the cap.
fn combination_count(n: usize, k: usize, cap: u128) -> Option<u128> {
    let mut c: u128 = 1;
    for i in 0..k.min(n - k) {
        c = c.checked_mul((n - i) as u128)?;
        c /= (i + 1) as u128;
        if c > cap {
            return None;
        }
    }
    Some(c)
}

/// Exact permutation test: enumerates every assignment of the pooled values
/// into groups of the original sizes. p = extreme count / total, with no
/// estimator correction (the observed assignment is part of the enumeration).
pub fn permutation_test_exact(a: &[f64], b: &[f64], alternative: Alternative) -> Result<TestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Stats("permutation test needs non-empty samples".into()));
    }
    const CAP: u128 = 10_000_000;
    let n_a = a.len();
    let n_b = b.len();
    let n = n_a + n_b;
    let Some(total_assignments) = combination_count(n, n_a, CAP) else {
        return Err(Error::Stats(format!(
            "exact enumeration of C({n},{n_a}) assignments exceeds the cap; use resampling"
        )));
    };
    let observed = kahan_mean(a) - kahan_mean(b);
    let mut pooled: Vec<f64> = a.iter().chain(b.iter()).copied().collect();
    pooled.sort_by(f64::total_cmp);
    let mut pool_total = KahanSum::default();
    for &x in &pooled {
        pool_total.add(x);
    }
    let pool_total = pool_total.value();

    // lexicographic combination walk over index subsets of size n_a
    let mut idx: Vec<usize> = (0..n_a).collect();
    let mut hits: u128 = 0;
    let mut visited: u128 = 0;
    loop {
        let mut sum_a = KahanSum::default();
        for &i in &idx {
            sum_a.add(pooled[i]);
        }
        let mean_a = sum_a.value() / n_a as f64;
        let mean_b = (pool_total - sum_a.value()) / n_b as f64;
        if extreme(mean_a - mean_b, observed, alternative) {
            hits += 1;
        }
        visited += 1;
        if !next_combination(&mut idx, n) {
            break;
        }
    }
    debug_assert_eq!(visited, total_assignments);
    Ok(TestResult {
        method: "permutation-exact".to_string(),
        statistic: observed,
        p_value: hits as f64 / total_assignments as f64,
        df: None,
        n_a,
        n_b,
        effect_size: None,
        alternative: Some(alternative),
        warnings: Vec::new(),
    })
}

/// Advances `idx` to the next size-k index combination out of 0..n in
/// lexicographic order; returns false after the last one.
fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] != i + n - k {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Welch's unequal-variance t-test with Welch-Satterthwaite degrees of
/// freedom and a two-sided p-value.
pub fn welch_t(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Stats(format!(
            "welch t needs at least 2 values per sample (got {} and {})",
            a.len(),
            b.len()
        )));
    }
    let n_a = a.len() as f64;
    let n_b = b.len() as f64;
    let mean_a = kahan_mean(a);
    let mean_b = kahan_mean(b);
    let var_a = sample_variance(a, mean_a);
    let var_b = sample_variance(b, mean_b);
    let se_a = var_a / n_a;
    let se_b = var_b / n_b;
    let se2 = se_a + se_b;
    if se2 <= 0.0 {
        if mean_a == mean_b {
            // both variances zero and means equal: no evidence of difference
            return Ok(TestResult {
                method: "welch-t".to_string(),
                statistic: 0.0,
                p_value: 1.0,
                df: Some(n_a + n_b - 2.0),
                n_a: a.len(),
                n_b: b.len(),
                effect_size: None,
                alternative: Some(Alternative::TwoSided),
                warnings: vec!["both samples have zero variance".to_string()],
            });
        }
        return Err(Error::Stats(
            "both samples have zero variance with unequal means".into(),
        ));
    }
    let t = (mean_a - mean_b) / se2.sqrt();
    let df = se2 * se2 / (se_a * se_a / (n_a - 1.0) + se_b * se_b / (n_b - 1.0));
    let p_value = 2.0 * student_t_sf(t.abs(), df);
    Ok(TestResult {
        method: "welch-t".to_string(),
        statistic: t,
        p_value: p_value.min(1.0),
        df: Some(df),
        n_a: a.len(),
        n_b: b.len(),
        effect_size: None,
        alternative: Some(Alternative::TwoSided),
        warnings: Vec::new(),
    })
}

/// Which standardizer Cohen's d uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CohensD {
    /// (mean(a) - mean(b)) / pooled SD of a and b (default).
    #[default]
    Pooled,
    /// mean(a - b) / SD of the paired differences.
    PairedDiff,
}

impl FromStr for CohensD {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pooled" => Ok(CohensD::Pooled),
            "paired-diff" | "paired_diff" => Ok(CohensD::PairedDiff),
            other => Err(Error::Stats(format!("unknown d kind {other:?}"))),
        }
    }
}

/// Paired t-test with Cohen's d effect size.
pub fn paired_t_cohen_d(
    a: &[f64],
    b: &[f64],
    alternative: Alternative,
    d_kind: CohensD,
) -> Result<TestResult> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            n_a: a.len(),
            n_b: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::Stats("paired t needs at least 2 pairs".into()));
    }
    let n = a.len() as f64;
    let diffs: Vec<f64> = a.iter().zip(b).map(|(&x, &y)| x - y).collect();
    let mean_diff = kahan_mean(&diffs);
    let sd_diff = sample_variance(&diffs, mean_diff).sqrt();
    let df = n - 1.0;
    let mut warnings = Vec::new();

    let (t, p_value) = if sd_diff == 0.0 {
        if mean_diff == 0.0 {
            (0.0, 1.0)
        } else {
            // constant nonzero difference: evidence is unbounded; keep the
            // p-value in (0,1] by truncating at the smallest positive float
            warnings.push("zero variance of paired differences; p truncated".to_string());
            (f64::INFINITY * mean_diff.signum(), f64::MIN_POSITIVE)
        }
    } else {
        let t = mean_diff / (sd_diff / n.sqrt());
        let p = match alternative {
            Alternative::TwoSided => 2.0 * student_t_sf(t.abs(), df),
            Alternative::Greater => student_t_sf(t, df),
            Alternative::Less => student_t_sf(-t, df),
        };
        (t, p.min(1.0))
    };

    let mean_a = kahan_mean(a);
    let mean_b = kahan_mean(b);
    let effect_size = match d_kind {
        CohensD::Pooled => {
            let var_a = sample_variance(a, mean_a);
            let var_b = sample_variance(b, mean_b);
            let pooled_sd = ((var_a + var_b) / 2.0).sqrt();
            if pooled_sd == 0.0 {
                if mean_a == mean_b {
                    Some(0.0)
                } else {
                    warnings.push("pooled SD is zero; d undefined".to_string());
                    None
                }
            } else {
                Some((mean_a - mean_b) / pooled_sd)
            }
        }
        CohensD::PairedDiff => {
            if sd_diff == 0.0 {
                if mean_diff == 0.0 {
                    Some(0.0)
                } else {
                    warnings.push("SD of differences is zero; d undefined".to_string());
                    None
                }
            } else {
                Some(mean_diff / sd_diff)
            }
        }
    };

    Ok(TestResult {
        method: match d_kind {
            CohensD::Pooled => "paired-t/cohen-d-pooled".to_string(),
            CohensD::PairedDiff => "paired-t/cohen-d-paired-diff".to_string(),
        },
        statistic: t,
        p_value,
        df: Some(df),
        n_a: a.len(),
        n_b: b.len(),
        effect_size,
        alternative: Some(alternative),
        warnings,
    })
}

/// Bonferroni correction for `comparisons` simultaneous tests: multiplies
/// the p-value and caps it at 1.
pub fn apply_bonferroni(mut result: TestResult, comparisons: u64) -> TestResult {
    if comparisons > 1 {
        result.p_value = (result.p_value * comparisons as f64).min(1.0);
        result.method = format!("{}+bonferroni({comparisons})", result.method);
    }
    result
}

/// Default discordant-pair count below which McNemar's test uses the exact
/// binomial form.
pub const MCNEMAR_EXACT_THRESHOLD: u64 = 25;

/// Largest discordant-pair count the exact binomial path accepts; beyond it
/// the half-power terms underflow f64, and chi-square matches the exact
/// tail to far more digits than anyone reads.
const MCNEMAR_EXACT_CAP: u64 = 1000;

/// McNemar's test over discordant pair counts. Exact binomial below the
/// threshold, chi-square with continuity correction at or above it.
pub fn mcnemar(n01: u64, n10: u64, exact_threshold: u64) -> TestResult {
    let n = n01 + n10;
    if n == 0 {
        return TestResult {
            method: "mcnemar-exact".to_string(),
            statistic: 0.0,
            p_value: 1.0,
            df: None,
            n_a: 0,
            n_b: 0,
            effect_size: None,
            alternative: Some(Alternative::TwoSided),
            warnings: vec!["no discordant pairs".to_string()],
        };
    }
    if n < exact_threshold && n > MCNEMAR_EXACT_CAP {
        let mut result = mcnemar(n01, n10, 0);
        result.warnings.push(format!(
            "exact binomial capped at {MCNEMAR_EXACT_CAP} discordant pairs; used chi-square"
        ));
        return result;
    }
    if n < exact_threshold {
        let k = n01.min(n10);
        // two-sided exact binomial with p = 1/2: doubled lower tail, capped
        let p_value = (2.0 * binomial_cdf_half(k, n)).min(1.0);
        TestResult {
            method: "mcnemar-exact".to_string(),
            statistic: k as f64,
            p_value,
            df: None,
            n_a: n01 as usize,
            n_b: n10 as usize,
            effect_size: None,
            alternative: Some(Alternative::TwoSided),
            warnings: Vec::new(),
        }
    } else {
        let diff = n01.abs_diff(n10) as f64;
        let statistic = (diff - 1.0) * (diff - 1.0) / n as f64;
        TestResult {
            method: "mcnemar-chi2".to_string(),
            statistic,
            p_value: chi_square_sf(statistic, 1.0),
            df: Some(1.0),
            n_a: n01 as usize,
            n_b: n10 as usize,
            effect_size: None,
            alternative: Some(Alternative::TwoSided),
            warnings: Vec::new(),
        }
    }
}

/// P(X <= k) for X ~ Binomial(n, 1/2), via iterated exact pmf updates.
fn binomial_cdf_half(k: u64, n: u64) -> f64 {
    let mut pmf = 0.5f64.powi(n as i32);
    let mut cdf = pmf;
    for i in 0..k {
        pmf *= (n - i) as f64 / (i + 1) as f64;
        cdf += pmf;
    }
    cdf
}

/// Discordant-pair counts from two paired correctness vectors.
/// n01 counts pairs where a fails and b succeeds; n10 the reverse.
pub fn discordant_counts(a: &[bool], b: &[bool]) -> Result<(u64, u64)> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            n_a: a.len(),
            n_b: b.len(),
        });
    }
    let mut n01 = 0u64;
    let mut n10 = 0u64;
    for (&x, &y) in a.iter().zip(b) {
        match (x, y) {
            (false, true) => n01 += 1,
            (true, false) => n10 += 1,
            _ => {}
        }
    }
    Ok((n01, n10))
}

/// Human-evaluation rating dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    EmotionUnderstanding,
    SituationalAppropriateness,
    ContextualNaturalness,
    ConversationalEngagingness,
}

impl Dimension {
    pub const ALL: [Dimension; 4] = [
        Dimension::EmotionUnderstanding,
        Dimension::SituationalAppropriateness,
        Dimension::ContextualNaturalness,
        Dimension::ConversationalEngagingness,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::EmotionUnderstanding => "emotion_understanding",
            Dimension::SituationalAppropriateness => "situational_appropriateness",
            Dimension::ContextualNaturalness => "contextual_naturalness",
            Dimension::ConversationalEngagingness => "conversational_engagingness",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dimension {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Dimension::ALL
            .iter()
            .find(|d| d.as_str() == s)
            .copied()
            .ok_or_else(|| Error::Stats(format!("unknown dimension {s:?}")))
    }
}

/// One annotator's rating of one sample/model/dimension cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub sample_id: String,
    pub model_id: String,
    pub annotator_id: String,
    pub dimension: Dimension,
    pub rating: f64,
    pub consistency_fluency: bool,
}

/// Loads annotation records from CSV with columns sample_id, model_id,
/// annotator_id, dimension, rating, consistency_fluency.
pub fn load_annotations_csv<R: Read>(reader: R) -> Result<Vec<AnnotationRecord>> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = csv_reader
        .headers()
        .map_err(|e| Error::parse("<annotations>", 1, e.to_string()))?
        .clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::parse("<annotations>", 1, format!("missing column {name:?}")))
    };
    let sample_col = col("sample_id")?;
    let model_col = col("model_id")?;
    let annotator_col = col("annotator_id")?;
    let dim_col = col("dimension")?;
    let rating_col = col("rating")?;
    let cf_col = col("consistency_fluency")?;

    let mut out = Vec::new();
    for (i, record) in csv_reader.records().enumerate() {
        let lineno = i + 2;
        let record = record.map_err(|e| Error::parse("<annotations>", lineno, e.to_string()))?;
        let get = |c: usize| -> Result<&str> {
            record
                .get(c)
                .ok_or_else(|| Error::parse("<annotations>", lineno, "short row"))
        };
        let rating: f64 = get(rating_col)?
            .parse()
            .map_err(|e| Error::parse("<annotations>", lineno, format!("bad rating: {e}")))?;
        if !(0.0..=100.0).contains(&rating) {
            return Err(Error::parse(
                "<annotations>",
                lineno,
                format!("rating {rating} outside [0,100]"),
            ));
        }
        let consistency_fluency = match get(cf_col)?.to_ascii_lowercase().as_str() {
            "true" | "1" | "yes" => true,
            "false" | "0" | "no" => false,
            other => {
                return Err(Error::parse(
                    "<annotations>",
                    lineno,
                    format!("bad consistency_fluency {other:?}"),
                ))
            }
        };
        out.push(AnnotationRecord {
            sample_id: get(sample_col)?.to_string(),
            model_id: get(model_col)?.to_string(),
            annotator_id: get(annotator_col)?.to_string(),
            dimension: get(dim_col)?.parse()?,
            rating,
            consistency_fluency,
        });
    }
    Ok(out)
}

/// Two-stage human-evaluation aggregate: per-sample means across annotators,
/// then means across samples per model and dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanEvalSummary {
    /// model -> dimension -> final score.
    pub model_dimension_means: BTreeMap<String, BTreeMap<Dimension, f64>>,
    /// model -> proportion of records marked consistent and fluent,
    /// aggregated through the same two stages.
    pub consistency_fluency: BTreeMap<String, f64>,
    /// sample -> model -> dimension -> stage-1 mean; kept for paired tests.
    pub per_sample: BTreeMap<String, BTreeMap<String, BTreeMap<Dimension, f64>>>,
    pub n_samples: usize,
    pub n_models: usize,
    pub n_annotators: usize,
}

/// Aggregates annotation records. Every (sample, model, dimension) cell over
/// the observed sample and model sets must have at least one annotator.
pub fn human_eval_aggregate(records: &[AnnotationRecord]) -> Result<HumanEvalSummary> {
    if records.is_empty() {
        return Err(Error::EmptyInput("annotation records".to_string()));
    }
    let samples: BTreeSet<&str> = records.iter().map(|r| r.sample_id.as_str()).collect();
    let models: BTreeSet<&str> = records.iter().map(|r| r.model_id.as_str()).collect();
    let annotators: BTreeSet<&str> = records.iter().map(|r| r.annotator_id.as_str()).collect();

    // stage 1: cell sums
    type CellKey<'a> = (&'a str, &'a str, Dimension);
    let mut cells: BTreeMap<CellKey, (KahanSum, usize)> = BTreeMap::new();
    let mut cf_cells: BTreeMap<(&str, &str), (u64, u64)> = BTreeMap::new();
    for r in records {
        let entry = cells
            .entry((r.sample_id.as_str(), r.model_id.as_str(), r.dimension))
            .or_insert((KahanSum::default(), 0));
        entry.0.add(r.rating);
        entry.1 += 1;
        let cf = cf_cells
            .entry((r.sample_id.as_str(), r.model_id.as_str()))
            .or_insert((0, 0));
        cf.0 += u64::from(r.consistency_fluency);
        cf.1 += 1;
    }

    let mut missing: Vec<String> = Vec::new();
    for &s in &samples {
        for &m in &models {
            for d in Dimension::ALL {
                if !cells.contains_key(&(s, m, d)) {
                    missing.push(format!("{s}/{m}/{d}"));
                }
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingCells(missing.join(", ")));
    }

    let mut per_sample: BTreeMap<String, BTreeMap<String, BTreeMap<Dimension, f64>>> =
        BTreeMap::new();
    for ((s, m, d), (sum, count)) in &cells {
        per_sample
            .entry(s.to_string())
            .or_default()
            .entry(m.to_string())
            .or_default()
            .insert(*d, sum.value() / *count as f64);
    }

    // stage 2: mean across samples per (model, dimension)
    let mut model_dimension_means: BTreeMap<String, BTreeMap<Dimension, f64>> = BTreeMap::new();
    for &m in &models {
        let mut dims = BTreeMap::new();
        for d in Dimension::ALL {
            let mut sum = KahanSum::default();
            for &s in &samples {
                sum.add(per_sample[s][m][&d]);
            }
            dims.insert(d, sum.value() / samples.len() as f64);
        }
        model_dimension_means.insert(m.to_string(), dims);
    }

    let mut consistency_fluency = BTreeMap::new();
    for &m in &models {
        let mut sum = KahanSum::default();
        for &s in &samples {
            let (yes, total) = cf_cells[&(s, m)];
            sum.add(yes as f64 / total as f64);
        }
        consistency_fluency.insert(m.to_string(), sum.value() / samples.len() as f64);
    }

    Ok(HumanEvalSummary {
        model_dimension_means,
        consistency_fluency,
        per_sample,
        n_samples: samples.len(),
        n_models: models.len(),
        n_annotators: annotators.len(),
    })
}

impl HumanEvalSummary {
    /// Per-sample mean vectors for two models on one dimension, aligned by
    /// sample id, ready for a paired test.
    pub fn paired_vectors(
        &self,
        model_a: &str,
        model_b: &str,
        dimension: Dimension,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut a = Vec::new();
        let mut b = Vec::new();
        for (sample, by_model) in &self.per_sample {
            let va = by_model
                .get(model_a)
                .and_then(|m| m.get(&dimension))
                .ok_or_else(|| Error::MissingCells(format!("{sample}/{model_a}/{dimension}")))?;
            let vb = by_model
                .get(model_b)
                .and_then(|m| m.get(&dimension))
                .ok_or_else(|| Error::MissingCells(format!("{sample}/{model_b}/{dimension}")))?;
            a.push(*va);
            b.push(*vb);
        }
        Ok((a, b))
    }
}
