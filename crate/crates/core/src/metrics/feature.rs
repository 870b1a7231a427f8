//! Feature-based metrics: specificity (mean NIDF), word-choice
//! intensity/valence/arousal scores and prompt-response distances, and
//! length statistics.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::corpus::{Role, Turn};
use crate::error::{Error, Result};
use crate::lexicons::{IntensityLexicon, NidfTable, VadLexicon};

/// Tokenizer revision tag, recorded in NIDF caches and run configs.
pub const TOKENIZER_VERSION: &str = "v1";

/// A lowercase token with surrounding punctuation stripped.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Token(String);

impl Token {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for Token {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl PartialEq<&str> for Token {
    fn eq(&self, other: &&str) -> bool {
        self.0 == *other
    }
}

/// NFC-normalizes, lowercases, splits on whitespace and strips leading and
/// trailing non-alphanumeric characters per token. Tokens that are pure
/// punctuation vanish; interior punctuation (apostrophes, hyphens) stays.
pub fn tokenize(text: &str) -> Vec<Token> {
    let normalized: String = text.nfc().collect::<String>().to_lowercase();
    normalized
        .split_whitespace()
        .filter_map(|raw| {
            let trimmed = raw.trim_matches(|c: char| !c.is_alphanumeric());
            (!trimmed.is_empty()).then(|| Token(trimmed.to_string()))
        })
        .collect()
}

/// `tokenize` with plain-string output, for callers taking a generic
/// tokenizer function.
pub fn tokenize_strings(text: &str) -> Vec<String> {
    tokenize(text).into_iter().map(|t| t.0).collect()
}

/// Per-utterance lexicon scores. A score is `None` exactly when its matched
/// count is zero; unmatched tokens are skipped, never imputed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UtteranceScore {
    pub nidf_mean: Option<f64>,
    pub intensity: Option<f64>,
    pub valence: Option<f64>,
    pub arousal: Option<f64>,
    pub matched_nidf: usize,
    pub matched_intensity: usize,
    pub matched_vad: usize,
}

/// Mean NIDF over the tokens found in the table; `None` when nothing matches.
pub fn specificity(response: &str, table: &NidfTable) -> Option<f64> {
    let mut sum = KahanSum::default();
    let mut matched = 0usize;
    for token in tokenize(response) {
        if let Some(nidf) = table.get(token.as_str()) {
            sum.add(nidf);
            matched += 1;
        }
    }
    (matched > 0).then(|| sum.value() / matched as f64)
}

/// Mean intensity/valence/arousal over matched tokens (dominance ignored).
pub fn word_scores(
    text: &str,
    vad: &VadLexicon,
    intensity: &IntensityLexicon,
) -> UtteranceScore {
    let mut score = UtteranceScore::default();
    let mut v_sum = KahanSum::default();
    let mut a_sum = KahanSum::default();
    let mut i_sum = KahanSum::default();
    for token in tokenize(text) {
        if let Some(entry) = vad.get(token.as_str()) {
            v_sum.add(entry.valence);
            a_sum.add(entry.arousal);
            score.matched_vad += 1;
        }
        if let Some(value) = intensity.get(token.as_str()) {
            i_sum.add(value);
            score.matched_intensity += 1;
        }
    }
    if score.matched_vad > 0 {
        score.valence = Some(v_sum.value() / score.matched_vad as f64);
        score.arousal = Some(a_sum.value() / score.matched_vad as f64);
    }
    if score.matched_intensity > 0 {
        score.intensity = Some(i_sum.value() / score.matched_intensity as f64);
    }
    score
}

/// Full per-utterance scoring over whichever lexicons are supplied: word
/// choice plus specificity.
pub fn utterance_score(
    text: &str,
    vad: Option<&VadLexicon>,
    intensity: Option<&IntensityLexicon>,
    nidf: Option<&NidfTable>,
) -> UtteranceScore {
    let mut score = UtteranceScore::default();
    let tokens = tokenize(text);
    if let Some(vad) = vad {
        let mut v_sum = KahanSum::default();
        let mut a_sum = KahanSum::default();
        for token in &tokens {
            if let Some(entry) = vad.get(token.as_str()) {
                v_sum.add(entry.valence);
                a_sum.add(entry.arousal);
                score.matched_vad += 1;
            }
        }
        if score.matched_vad > 0 {
            score.valence = Some(v_sum.value() / score.matched_vad as f64);
            score.arousal = Some(a_sum.value() / score.matched_vad as f64);
        }
    }
    if let Some(intensity) = intensity {
        let mut i_sum = KahanSum::default();
        for token in &tokens {
            if let Some(value) = intensity.get(token.as_str()) {
                i_sum.add(value);
                score.matched_intensity += 1;
            }
        }
        if score.matched_intensity > 0 {
            score.intensity = Some(i_sum.value() / score.matched_intensity as f64);
        }
    }
    if let Some(table) = nidf {
        let mut sum = KahanSum::default();
        for token in &tokens {
            if let Some(v) = table.get(token.as_str()) {
                sum.add(v);
                score.matched_nidf += 1;
            }
        }
        if score.matched_nidf > 0 {
            score.nidf_mean = Some(sum.value() / score.matched_nidf as f64);
        }
    }
    score
}

/// Intensity/valence/arousal triple; a component is `None` when undefined.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct IvaTriple {
    pub intensity: Option<f64>,
    pub valence: Option<f64>,
    pub arousal: Option<f64>,
}

/// Signed prompt-minus-response differences and their absolute distances.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub signed: IvaTriple,
    pub distance: IvaTriple,
}

impl PairScore {
    fn from_scores(prompt: &UtteranceScore, response: &UtteranceScore) -> PairScore {
        let delta = |p: Option<f64>, r: Option<f64>| match (p, r) {
            (Some(p), Some(r)) => Some(p - r),
            _ => None,
        };
        let signed = IvaTriple {
            intensity: delta(prompt.intensity, response.intensity),
            valence: delta(prompt.valence, response.valence),
            arousal: delta(prompt.arousal, response.arousal),
        };
        let distance = IvaTriple {
            intensity: signed.intensity.map(f64::abs),
            valence: signed.valence.map(f64::abs),
            arousal: signed.arousal.map(f64::abs),
        };
        PairScore { signed, distance }
    }
}

/// Scores a prompt/response pair. A dimension is undefined in the pair when
/// it is undefined on either side.
pub fn iva_pair(
    prompt_text: &str,
    response_text: &str,
    vad: &VadLexicon,
    intensity: &IntensityLexicon,
) -> PairScore {
    let p = word_scores(prompt_text, vad, intensity);
    let r = word_scores(response_text, vad, intensity);
    PairScore::from_scores(&p, &r)
}

/// How the dialogue context turns into the prompt side of a pair score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PromptMode {
    /// All context turns concatenated into one text (default).
    #[default]
    #[serde(rename = "all-context")]
    AllContext,
    /// Only the last speaker turn.
    #[serde(rename = "last-user-turn")]
    LastUserTurn,
    /// Score each context turn separately, then average the scores.
    #[serde(rename = "per-turn-mean")]
    PerTurnMean,
}

impl PromptMode {
    pub const ALL: [PromptMode; 3] = [
        PromptMode::AllContext,
        PromptMode::LastUserTurn,
        PromptMode::PerTurnMean,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PromptMode::AllContext => "all-context",
            PromptMode::LastUserTurn => "last-user-turn",
            PromptMode::PerTurnMean => "per-turn-mean",
        }
    }
}

impl fmt::Display for PromptMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all-context" => Ok(PromptMode::AllContext),
            "last-user-turn" => Ok(PromptMode::LastUserTurn),
            "per-turn-mean" => Ok(PromptMode::PerTurnMean),
            other => Err(Error::EmptyInput(format!("unknown prompt mode {other:?}"))),
        }
    }
}

/// Space-joined concatenation of all context turns (the all-context prompt).
pub fn prompt_of(context: &[Turn]) -> Result<String> {
    if context.is_empty() {
        return Err(Error::EmptyInput("prompt context".to_string()));
    }
    Ok(context
        .iter()
        .map(|t| t.text.as_str())
        .collect::<Vec<_>>()
        .join(" "))
}

/// Scores the prompt side of a context under the given mode.
pub fn prompt_score(
    context: &[Turn],
    mode: PromptMode,
    vad: &VadLexicon,
    intensity: &IntensityLexicon,
) -> Result<UtteranceScore> {
    if context.is_empty() {
        return Err(Error::EmptyInput("prompt context".to_string()));
    }
    match mode {
        PromptMode::AllContext => Ok(word_scores(&prompt_of(context)?, vad, intensity)),
        PromptMode::LastUserTurn => {
            let last_speaker = context
                .iter()
                .rev()
                .find(|t| t.role == Role::Speaker)
                .ok_or_else(|| Error::EmptyInput("no speaker turn in context".to_string()))?;
            Ok(word_scores(&last_speaker.text, vad, intensity))
        }
        PromptMode::PerTurnMean => {
            let per_turn: Vec<UtteranceScore> = context
                .iter()
                .map(|t| word_scores(&t.text, vad, intensity))
                .collect();
            let mean_of = |pick: fn(&UtteranceScore) -> Option<f64>| {
                let defined: Vec<f64> = per_turn.iter().filter_map(pick).collect();
                (!defined.is_empty())
                    .then(|| defined.iter().sum::<f64>() / defined.len() as f64)
            };
            Ok(UtteranceScore {
                nidf_mean: None,
                intensity: mean_of(|s| s.intensity),
                valence: mean_of(|s| s.valence),
                arousal: mean_of(|s| s.arousal),
                matched_nidf: 0,
                matched_intensity: per_turn.iter().map(|s| s.matched_intensity).sum(),
                matched_vad: per_turn.iter().map(|s| s.matched_vad).sum(),
            })
        }
    }
}

/// Pair score for a dialogue context and a response under a prompt mode.
pub fn iva_pair_for_context(
    context: &[Turn],
    response_text: &str,
    mode: PromptMode,
    vad: &VadLexicon,
    intensity: &IntensityLexicon,
) -> Result<PairScore> {
    let prompt = prompt_score(context, mode, vad, intensity)?;
    let response = word_scores(response_text, vad, intensity);
    Ok(PairScore::from_scores(&prompt, &response))
}

/// Character and token length statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthStats {
    pub mean_chars: f64,
    pub median_chars: f64,
    pub mean_tokens: f64,
    pub n: usize,
}

/// Length statistics over raw responses. Characters are unicode scalar
/// values, not bytes.
pub fn length_stats(responses: &[String]) -> Result<LengthStats> {
    if responses.is_empty() {
        return Err(Error::EmptyInput("length_stats input".to_string()));
    }
    let mut chars: Vec<usize> = responses.iter().map(|r| r.chars().count()).collect();
    let mut char_sum = KahanSum::default();
    let mut token_sum = KahanSum::default();
    for (r, &c) in responses.iter().zip(&chars) {
        char_sum.add(c as f64);
        token_sum.add(tokenize(r).len() as f64);
    }
    chars.sort_unstable();
    let n = chars.len();
    let median_chars = if n % 2 == 1 {
        chars[n / 2] as f64
    } else {
        (chars[n / 2 - 1] + chars[n / 2]) as f64 / 2.0
    };
    Ok(LengthStats {
        mean_chars: char_sum.value() / n as f64,
        median_chars,
        mean_tokens: token_sum.value() / n as f64,
        n,
    })
}

/// Compensated (Kahan) summation, so aggregate results are stable to well
/// below 1e-9 regardless of accumulation order.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct KahanSum {
    sum: f64,
    compensation: f64,
}

impl KahanSum {
    pub(crate) fn add(&mut self, v: f64) {
        let y = v - self.compensation;
        let t = self.sum + y;
        self.compensation = (t - self.sum) - y;
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum
    }
}

/// Mean, sample SD and bookkeeping for one metric over many examples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    /// Sample standard deviation (n-1); `None` with fewer than two values.
    pub sd: Option<f64>,
    pub n_defined: usize,
    pub n_excluded: usize,
}

/// Aggregates one metric column, excluding undefined entries. Returns `None`
/// when no entry is defined.
pub fn aggregate(values: &[Option<f64>]) -> Option<Aggregate> {
    let defined: Vec<f64> = values.iter().copied().flatten().collect();
    let n_excluded = values.len() - defined.len();
    if defined.is_empty() {
        return None;
    }
    let mut sum = KahanSum::default();
    for &v in &defined {
        sum.add(v);
    }
    let mean = sum.value() / defined.len() as f64;
    let sd = (defined.len() >= 2).then(|| {
        let mut sq = KahanSum::default();
        for &v in &defined {
            sq.add((v - mean) * (v - mean));
        }
        (sq.value() / (defined.len() - 1) as f64).sqrt()
    });
    Some(Aggregate {
        mean,
        sd,
        n_defined: defined.len(),
        n_excluded,
    })
}

/// Per-example feature scores: the response utterance scores plus the
/// optional prompt-response pair score.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExampleScore {
    pub utterance: UtteranceScore,
    pub pair: Option<PairScore>,
}

pub type FeatureAggregates = BTreeMap<String, Option<Aggregate>>;

/// Aggregates every feature metric over per-example scores. Undefined
/// entries are excluded per metric and reported in the exclusion counts.
pub fn aggregate_feature_report(scores: &[ExampleScore]) -> FeatureAggregates {
    let mut out = FeatureAggregates::new();
    let column = |pick: &dyn Fn(&ExampleScore) -> Option<f64>| -> Vec<Option<f64>> {
        scores.iter().map(pick).collect()
    };
    out.insert(
        "nidf".to_string(),
        aggregate(&column(&|s| s.utterance.nidf_mean)),
    );
    out.insert(
        "intensity".to_string(),
        aggregate(&column(&|s| s.utterance.intensity)),
    );
    out.insert(
        "valence".to_string(),
        aggregate(&column(&|s| s.utterance.valence)),
    );
    out.insert(
        "arousal".to_string(),
        aggregate(&column(&|s| s.utterance.arousal)),
    );
    type PairColumn = fn(&PairScore) -> Option<f64>;
    let pair_cols: [(&str, PairColumn); 6] = [
        ("iva_distance_intensity", |p| p.distance.intensity),
        ("iva_distance_valence", |p| p.distance.valence),
        ("iva_distance_arousal", |p| p.distance.arousal),
        ("iva_signed_intensity", |p| p.signed.intensity),
        ("iva_signed_valence", |p| p.signed.valence),
        ("iva_signed_arousal", |p| p.signed.arousal),
    ];
    for (name, pick) in pair_cols {
        out.insert(
            name.to_string(),
            aggregate(&column(&|s| s.pair.as_ref().and_then(pick))),
        );
    }
    out
}
