//! Evaluation pipeline, report schema and renderers.
//!
//! A run produces two files: a per-example JSON-lines file and a single
//! report JSON embedding the run configuration. Every aggregate in the
//! report is recomputable from the per-example file, which the verify
//! routine checks to 1e-9.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::corpus::{Corpus, Split};
use crate::error::{Error, Result};
use crate::lexicons::{IntensityLexicon, NidfTable, VadLexicon};
use crate::metrics::diversity::{diversity_report, DiversityReport};
use crate::metrics::external::{
    aggregate_similarity, diff_epitome, DiffEpitome, DiffMode, EpitomeRecord, SimilarityAggregate,
    SimilarityRecord,
};
use crate::metrics::feature::{
    aggregate_feature_report, iva_pair_for_context, length_stats, tokenize, utterance_score,
    ExampleScore, FeatureAggregates, IvaTriple, LengthStats, PairScore, PromptMode,
    UtteranceScore, TOKENIZER_VERSION,
};
use crate::stats::TestResult;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Aggregate tolerance for the verify pass.
pub const VERIFY_TOLERANCE: f64 = 1e-9;

/// Which metric families an eval run computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricSelection {
    pub nidf: bool,
    pub iva: bool,
    pub diversity: bool,
    pub length: bool,
}

impl MetricSelection {
    pub fn all() -> MetricSelection {
        MetricSelection {
            nidf: true,
            iva: true,
            diversity: true,
            length: true,
        }
    }

    pub fn none() -> MetricSelection {
        MetricSelection {
            nidf: false,
            iva: false,
            diversity: false,
            length: false,
        }
    }

    /// Parses a comma-separated list like `nidf,iva,diversity,length`.
    pub fn parse_list(list: &str) -> Result<MetricSelection> {
        let mut sel = MetricSelection::none();
        for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match name {
                "nidf" => sel.nidf = true,
                "iva" => sel.iva = true,
                "diversity" => sel.diversity = true,
                "length" => sel.length = true,
                other => {
                    return Err(Error::Report(format!("unknown metric name {other:?}")));
                }
            }
        }
        if sel == MetricSelection::none() {
            return Err(Error::Report("no metrics selected".to_string()));
        }
        Ok(sel)
    }

    pub fn names(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.nidf {
            out.push("nidf".to_string());
        }
        if self.iva {
            out.push("iva".to_string());
        }
        if self.diversity {
            out.push("diversity".to_string());
        }
        if self.length {
            out.push("length".to_string());
        }
        out
    }
}

/// Full run configuration, embedded in every report for provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RunConfig {
    pub model_label: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corpus_path: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub raw_paths: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generations_path: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub metrics: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vad_path: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intensity_path: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nidf_cache_path: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nidf_reference: Option<Split>,
    pub tokenizer: String,
    pub prompt_mode: PromptMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<String>,
}

impl RunConfig {
    pub fn new(model_label: &str) -> RunConfig {
        RunConfig {
            model_label: model_label.to_string(),
            tokenizer: TOKENIZER_VERSION.to_string(),
            prompt_mode: PromptMode::default(),
            ..RunConfig::default()
        }
    }
}

/// One generated response keyed by its source dialogue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    pub dialogue_id: String,
    pub response: String,
}

fn normalize_response(raw: &str) -> String {
    raw.nfc().collect::<String>().trim().to_string()
}

/// Reads `{"dialogue_id","response"}` JSON-lines. Responses are
/// NFC-normalized and trimmed, matching corpus ingest.
pub fn load_generations_jsonl<R: BufRead>(reader: R) -> Result<Vec<Generation>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<generations>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut gen: Generation = serde_json::from_str(&line).map_err(|e| Error::Json {
            context: format!("generations line {}", i + 1),
            source: e,
        })?;
        gen.response = normalize_response(&gen.response);
        out.push(gen);
    }
    Ok(out)
}

/// Reads plain-text responses, one per line, with synthetic line ids.
pub fn load_generations_text<R: BufRead>(reader: R) -> Result<Vec<Generation>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<generations>", e))?;
        out.push(Generation {
            dialogue_id: format!("line-{}", i + 1),
            response: normalize_response(&line),
        });
    }
    Ok(out)
}

/// Ground-truth generations: every target response of a split.
pub fn ground_truth_generations(corpus: &Corpus, split: Split) -> Result<Vec<Generation>> {
    if !corpus.has_split(split) {
        return Err(Error::MissingSplit(split));
    }
    Ok(corpus
        .split_dialogues(split)
        .filter_map(|d| {
            d.last_response_target().map(|(_, target)| Generation {
                dialogue_id: d.id.clone(),
                response: target.text.clone(),
            })
        })
        .collect())
}

/// Per-example metric record, one JSON line each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct PerExampleRecord {
    pub dialogue_id: String,
    pub response: String,
    pub chars: usize,
    pub tokens: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nidf: Option<f64>,
    #[serde(default)]
    pub matched_nidf: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intensity: Option<f64>,
    #[serde(default)]
    pub matched_intensity: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub valence: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub arousal: Option<f64>,
    #[serde(default)]
    pub matched_vad: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iva_signed: Option<IvaTriple>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iva_distance: Option<IvaTriple>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub er_gen: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ex_gen: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ip_gen: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub er_gt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ex_gt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ip_gt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f_score: Option<f64>,
}

/// Aggregates over an external-score ingest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ExternalAggregates {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diff_epitome_per_example: Option<DiffEpitome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diff_epitome_dataset_mean: Option<DiffEpitome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub similarity: Option<SimilarityAggregate>,
}

/// All aggregate results of one eval run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Aggregates {
    pub n_examples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feature: Option<FeatureAggregates>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub length: Option<LengthStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diversity: Option<DiversityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub external: Option<ExternalAggregates>,
}

/// The report file written next to the per-example lines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReportFile {
    pub version: String,
    pub config: RunConfig,
    pub per_example_path: String,
    pub aggregates: Aggregates,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stats: Vec<TestResult>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl MetricReportFile {
    pub fn to_json_pretty(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Json {
            context: "serializing report".to_string(),
            source: e,
        })
    }

    pub fn from_json_str(s: &str) -> Result<MetricReportFile> {
        serde_json::from_str(s).map_err(|e| Error::Json {
            context: "parsing report".to_string(),
            source: e,
        })
    }
}

pub fn write_per_example<W: Write>(records: &[PerExampleRecord], mut sink: W) -> Result<()> {
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| Error::Json {
            context: format!("serializing record {}", r.dialogue_id),
            source: e,
        })?;
        writeln!(sink, "{line}").map_err(|e| Error::io("<per-example>", e))?;
    }
    Ok(())
}

pub fn read_per_example<R: BufRead>(reader: R) -> Result<Vec<PerExampleRecord>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<per-example>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Json {
            context: format!("per-example line {}", i + 1),
            source: e,
        })?);
    }
    Ok(out)
}

/// Inputs to one eval run. Lexicons are only needed for the metrics that
/// use them; the corpus is needed whenever ids must resolve (always for
/// nidf/iva, optional for pure diversity/length runs on plain text).
#[derive(Debug)]
pub struct EvalInputs<'a> {
    pub generations: &'a [Generation],
    pub corpus: Option<(&'a Corpus, Split)>,
    pub vad: Option<&'a VadLexicon>,
    pub intensity: Option<&'a IntensityLexicon>,
    pub nidf: Option<&'a NidfTable>,
    pub epitome_gen: Option<&'a [EpitomeRecord]>,
    pub epitome_gt: Option<&'a [EpitomeRecord]>,
    pub similarity: Option<&'a [SimilarityRecord]>,
}

#[derive(Debug, Clone, Copy)]
pub struct EvalOptions {
    pub metrics: MetricSelection,
    pub prompt_mode: PromptMode,
}

#[derive(Debug)]
pub struct EvalOutput {
    pub per_example: Vec<PerExampleRecord>,
    pub aggregates: Aggregates,
    pub warnings: Vec<String>,
}

fn list_ids(ids: &[String]) -> String {
    const SHOWN: usize = 20;
    if ids.len() <= SHOWN {
        ids.join(", ")
    } else {
        format!("{} ... and {} more", ids[..SHOWN].join(", "), ids.len() - SHOWN)
    }
}

/// Runs the per-example scoring and aggregation pipeline.
pub fn evaluate(inputs: &EvalInputs, options: &EvalOptions) -> Result<EvalOutput> {
    let metrics = options.metrics;
    if metrics == MetricSelection::none() {
        return Err(Error::Report("no metrics selected".to_string()));
    }
    if inputs.generations.is_empty() {
        return Err(Error::EmptyInput("generations file".to_string()));
    }
    if metrics.nidf && inputs.nidf.is_none() {
        return Err(Error::Report("nidf metric requires a NIDF table".to_string()));
    }
    if metrics.iva && (inputs.vad.is_none() || inputs.intensity.is_none()) {
        return Err(Error::Report(
            "iva metric requires the VAD and intensity lexicons".to_string(),
        ));
    }
    if metrics.iva && inputs.corpus.is_none() {
        return Err(Error::Report(
            "iva metric requires the corpus to provide prompt contexts".to_string(),
        ));
    }

    // resolve ids whenever a corpus is supplied
    if let Some((corpus, split)) = inputs.corpus {
        if !corpus.has_split(split) {
            return Err(Error::MissingSplit(split));
        }
        let mut bad: Vec<String> = Vec::new();
        for g in inputs.generations {
            match corpus.get(&g.dialogue_id) {
                None => bad.push(format!("{} (unknown)", g.dialogue_id)),
                Some(d) if d.split != split => {
                    bad.push(format!("{} (not in split {split})", g.dialogue_id))
                }
                Some(d) if !d.has_target() => {
                    bad.push(format!("{} (no generation target)", g.dialogue_id))
                }
                Some(_) => {}
            }
        }
        if !bad.is_empty() {
            return Err(Error::IdMismatch(list_ids(&bad)));
        }
    }

    // external score files must cover exactly the generation ids
    let generation_ids: Vec<&str> = inputs
        .generations
        .iter()
        .map(|g| g.dialogue_id.as_str())
        .collect();
    let check_cover = |ids: Vec<&str>, what: &str| -> Result<()> {
        use std::collections::BTreeSet;
        let got: BTreeSet<&str> = ids.into_iter().collect();
        let want: BTreeSet<&str> = generation_ids.iter().copied().collect();
        if got != want {
            let missing: Vec<String> = want
                .difference(&got)
                .map(|s| s.to_string())
                .collect();
            let extra: Vec<String> = got.difference(&want).map(|s| s.to_string()).collect();
            return Err(Error::IdMismatch(format!(
                "{what}: missing [{}], extraneous [{}]",
                list_ids(&missing),
                list_ids(&extra)
            )));
        }
        Ok(())
    };
    if let Some(records) = inputs.epitome_gen {
        check_cover(
            records.iter().map(|r| r.dialogue_id.as_str()).collect(),
            "epitome generation scores",
        )?;
    }
    if let Some(records) = inputs.epitome_gt {
        check_cover(
            records.iter().map(|r| r.dialogue_id.as_str()).collect(),
            "epitome ground-truth scores",
        )?;
    }
    if let Some(records) = inputs.similarity {
        check_cover(
            records.iter().map(|r| r.dialogue_id.as_str()).collect(),
            "similarity scores",
        )?;
    }
    let epitome_gen_by_id: HashMap<&str, &EpitomeRecord> = inputs
        .epitome_gen
        .map(|rs| rs.iter().map(|r| (r.dialogue_id.as_str(), r)).collect())
        .unwrap_or_default();
    let epitome_gt_by_id: HashMap<&str, &EpitomeRecord> = inputs
        .epitome_gt
        .map(|rs| rs.iter().map(|r| (r.dialogue_id.as_str(), r)).collect())
        .unwrap_or_default();
    let similarity_by_id: HashMap<&str, &SimilarityRecord> = inputs
        .similarity
        .map(|rs| rs.iter().map(|r| (r.dialogue_id.as_str(), r)).collect())
        .unwrap_or_default();

    let per_example: Vec<PerExampleRecord> = inputs
        .generations
        .par_iter()
        .map(|g| -> Result<PerExampleRecord> {
            let utterance: UtteranceScore = utterance_score(
                &g.response,
                inputs.vad.filter(|_| metrics.iva),
                inputs.intensity.filter(|_| metrics.iva),
                inputs.nidf.filter(|_| metrics.nidf),
            );
            let pair: Option<PairScore> = if metrics.iva {
                let (corpus, _) = inputs.corpus.expect("checked above");
                let dialogue = corpus.get(&g.dialogue_id).expect("resolved above");
                let (context, _) = dialogue
                    .last_response_target()
                    .expect("target checked above");
                Some(iva_pair_for_context(
                    context,
                    &g.response,
                    options.prompt_mode,
                    inputs.vad.expect("checked above"),
                    inputs.intensity.expect("checked above"),
                )?)
            } else {
                None
            };
            Ok(PerExampleRecord {
                dialogue_id: g.dialogue_id.clone(),
                response: g.response.clone(),
                chars: g.response.chars().count(),
                tokens: tokenize(&g.response).len(),
                nidf: utterance.nidf_mean,
                matched_nidf: utterance.matched_nidf,
                intensity: utterance.intensity,
                matched_intensity: utterance.matched_intensity,
                valence: utterance.valence,
                arousal: utterance.arousal,
                matched_vad: utterance.matched_vad,
                iva_signed: pair.map(|p| p.signed),
                iva_distance: pair.map(|p| p.distance),
                er_gen: epitome_gen_by_id.get(g.dialogue_id.as_str()).map(|r| r.er),
                ex_gen: epitome_gen_by_id.get(g.dialogue_id.as_str()).map(|r| r.ex),
                ip_gen: epitome_gen_by_id.get(g.dialogue_id.as_str()).map(|r| r.ip),
                er_gt: epitome_gt_by_id.get(g.dialogue_id.as_str()).map(|r| r.er),
                ex_gt: epitome_gt_by_id.get(g.dialogue_id.as_str()).map(|r| r.ex),
                ip_gt: epitome_gt_by_id.get(g.dialogue_id.as_str()).map(|r| r.ip),
                f_score: similarity_by_id
                    .get(g.dialogue_id.as_str())
                    .map(|r| r.f_score),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let aggregates = aggregate_records(&per_example, metrics, inputs)?;
    let mut warnings = Vec::new();
    if let Some(d) = &aggregates.diversity {
        if d.n_empty_token_responses > 0 {
            warnings.push(format!(
                "{} responses tokenize to nothing and were excluded from the trie",
                d.n_empty_token_responses
            ));
        }
    }
    Ok(EvalOutput {
        per_example,
        aggregates,
        warnings,
    })
}

fn aggregate_records(
    records: &[PerExampleRecord],
    metrics: MetricSelection,
    inputs: &EvalInputs,
) -> Result<Aggregates> {
    let feature = (metrics.nidf || metrics.iva).then(|| {
        let scores: Vec<ExampleScore> = records.iter().map(example_score).collect();
        aggregate_feature_report(&scores)
    });
    let responses: Vec<String> = records.iter().map(|r| r.response.clone()).collect();
    let length = if metrics.length {
        Some(length_stats(&responses)?)
    } else {
        None
    };
    let diversity = if metrics.diversity {
        Some(diversity_report(&responses, tokenize)?)
    } else {
        None
    };
    let external = match (inputs.epitome_gen, inputs.epitome_gt, inputs.similarity) {
        (None, None, None) => None,
        (gen, gt, sim) => {
            let mut ext = ExternalAggregates::default();
            if let (Some(gen), Some(gt)) = (gen, gt) {
                ext.diff_epitome_per_example = Some(diff_epitome(gen, gt, DiffMode::PerExample)?);
                ext.diff_epitome_dataset_mean =
                    Some(diff_epitome(gen, gt, DiffMode::DatasetMean)?);
            }
            if let Some(sim) = sim {
                ext.similarity = Some(aggregate_similarity(sim)?);
            }
            Some(ext)
        }
    };
    Ok(Aggregates {
        n_examples: records.len(),
        feature,
        length,
        diversity,
        external,
    })
}

fn example_score(r: &PerExampleRecord) -> ExampleScore {
    ExampleScore {
        utterance: UtteranceScore {
            nidf_mean: r.nidf,
            intensity: r.intensity,
            valence: r.valence,
            arousal: r.arousal,
            matched_nidf: r.matched_nidf,
            matched_intensity: r.matched_intensity,
            matched_vad: r.matched_vad,
        },
        pair: match (r.iva_signed, r.iva_distance) {
            (Some(signed), Some(distance)) => Some(PairScore { signed, distance }),
            _ => None,
        },
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= VERIFY_TOLERANCE
}

fn close_opt(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(a), Some(b)) => close(a, b),
        _ => false,
    }
}

/// Recomputes every aggregate from the per-example records and returns a
/// list of mismatches (empty when the report is internally consistent).
pub fn verify_report(report: &MetricReportFile, records: &[PerExampleRecord]) -> Vec<String> {
    let mut problems = Vec::new();
    let agg = &report.aggregates;
    if agg.n_examples != records.len() {
        problems.push(format!(
            "n_examples {} but {} per-example records",
            agg.n_examples,
            records.len()
        ));
    }
    if let Some(feature) = &agg.feature {
        let scores: Vec<ExampleScore> = records.iter().map(example_score).collect();
        let recomputed = aggregate_feature_report(&scores);
        for (key, expected) in feature {
            let got = recomputed.get(key).cloned().flatten();
            match (expected, got) {
                (None, None) => {}
                (Some(e), Some(g)) => {
                    if !close(e.mean, g.mean)
                        || !close_opt(e.sd, g.sd)
                        || e.n_defined != g.n_defined
                        || e.n_excluded != g.n_excluded
                    {
                        problems.push(format!("feature aggregate {key} does not recompute"));
                    }
                }
                _ => problems.push(format!("feature aggregate {key} presence mismatch")),
            }
        }
    }
    let responses: Vec<String> = records.iter().map(|r| r.response.clone()).collect();
    if let Some(length) = &agg.length {
        match length_stats(&responses) {
            Ok(recomputed) => {
                if !close(length.mean_chars, recomputed.mean_chars)
                    || !close(length.median_chars, recomputed.median_chars)
                    || !close(length.mean_tokens, recomputed.mean_tokens)
                    || length.n != recomputed.n
                {
                    problems.push("length stats do not recompute".to_string());
                }
            }
            Err(e) => problems.push(format!("length stats recompute failed: {e}")),
        }
    }
    if let Some(diversity) = &agg.diversity {
        match diversity_report(&responses, tokenize) {
            Ok(recomputed) => {
                if *diversity != recomputed {
                    problems.push("diversity report does not recompute".to_string());
                }
            }
            Err(e) => problems.push(format!("diversity recompute failed: {e}")),
        }
    }
    if let Some(external) = &agg.external {
        let gen: Vec<EpitomeRecord> = records
            .iter()
            .filter_map(|r| {
                Some(EpitomeRecord {
                    dialogue_id: r.dialogue_id.clone(),
                    er: r.er_gen?,
                    ex: r.ex_gen?,
                    ip: r.ip_gen?,
                })
            })
            .collect();
        let gt: Vec<EpitomeRecord> = records
            .iter()
            .filter_map(|r| {
                Some(EpitomeRecord {
                    dialogue_id: r.dialogue_id.clone(),
                    er: r.er_gt?,
                    ex: r.ex_gt?,
                    ip: r.ip_gt?,
                })
            })
            .collect();
        let check_diff = |expected: &Option<DiffEpitome>, mode: DiffMode, problems: &mut Vec<String>| {
            if let Some(expected) = expected {
                match diff_epitome(&gen, &gt, mode) {
                    Ok(recomputed) => {
                        if !close(expected.diff_er, recomputed.diff_er)
                            || !close(expected.diff_ex, recomputed.diff_ex)
                            || !close(expected.diff_ip, recomputed.diff_ip)
                            || !close(expected.mean_of_three, recomputed.mean_of_three)
                        {
                            problems.push(format!("diff-epitome ({mode}) does not recompute"));
                        }
                    }
                    Err(e) => problems.push(format!("diff-epitome recompute failed: {e}")),
                }
            }
        };
        check_diff(&external.diff_epitome_per_example, DiffMode::PerExample, &mut problems);
        check_diff(
            &external.diff_epitome_dataset_mean,
            DiffMode::DatasetMean,
            &mut problems,
        );
        if let Some(similarity) = &external.similarity {
            let sims: Vec<SimilarityRecord> = records
                .iter()
                .filter_map(|r| {
                    Some(SimilarityRecord {
                        dialogue_id: r.dialogue_id.clone(),
                        f_score: r.f_score?,
                    })
                })
                .collect();
            match aggregate_similarity(&sims) {
                Ok(recomputed) => {
                    if !close(similarity.mean, recomputed.mean)
                        || !close_opt(similarity.sd, recomputed.sd)
                        || similarity.n != recomputed.n
                    {
                        problems.push("similarity aggregate does not recompute".to_string());
                    }
                }
                Err(e) => problems.push(format!("similarity recompute failed: {e}")),
            }
        }
    }
    problems
}

fn fmt_opt(v: Option<f64>, precision: usize) -> String {
    match v {
        Some(v) => format!("{v:.precision$}"),
        None => "-".to_string(),
    }
}

/// Renders publication-style Markdown tables plus the remaining aggregates.
pub fn render_markdown(report: &MetricReportFile) -> String {
    let mut out = String::new();
    let label = &report.config.model_label;
    out.push_str(&format!("# Evaluation report: {label}\n\n"));
    out.push_str(&format!(
        "- tool version: {}\n- examples: {}\n- tokenizer: {}\n- prompt mode: {}\n\n",
        report.version,
        report.aggregates.n_examples,
        report.config.tokenizer,
        report.config.prompt_mode
    ));

    if let Some(d) = &report.aggregates.diversity {
        out.push_str("## Diversity (response-trie)\n\n");
        out.push_str("| Model | # Templates | # Span Nodes / Total # Nodes | # Children From Root | Compression Ratio | # Unique Start Words |\n");
        out.push_str("|---|---|---|---|---|---|\n");
        out.push_str(&format!(
            "| {label} | {} ({:.1}%) | {} / {} ({:.1}%) | {} ({:.1}%) | {:.2}% | {} |\n\n",
            d.templates,
            d.templates_pct,
            d.span_nodes_folded,
            d.total_nodes_unfolded,
            d.span_node_pct,
            d.root_children_folded,
            d.root_children_pct,
            d.compression_pct,
            d.unique_start_words
        ));
    }

    if let Some(f) = &report.aggregates.feature {
        out.push_str("## Specificity and word choice\n\n");
        out.push_str("| Model | NIDF | I | V | A |\n|---|---|---|---|---|\n");
        let cell = |key: &str| -> String {
            match f.get(key).cloned().flatten() {
                Some(agg) => match agg.sd {
                    Some(sd) => format!("{:.2} ± {:.2}", agg.mean, sd),
                    None => format!("{:.2}", agg.mean),
                },
                None => "-".to_string(),
            }
        };
        out.push_str(&format!(
            "| {label} | {} | {} | {} | {} |\n\n",
            cell("nidf"),
            cell("iva_distance_intensity"),
            cell("iva_distance_valence"),
            cell("iva_distance_arousal")
        ));
        out.push_str("### Signed prompt-minus-response differences\n\n");
        out.push_str("| Model | ΔI | ΔV | ΔA |\n|---|---|---|---|\n");
        out.push_str(&format!(
            "| {label} | {} | {} | {} |\n\n",
            cell("iva_signed_intensity"),
            cell("iva_signed_valence"),
            cell("iva_signed_arousal")
        ));
    }

    if let Some(l) = &report.aggregates.length {
        out.push_str("## Length\n\n");
        out.push_str("| Model | Mean chars | Median chars | Mean tokens | n |\n|---|---|---|---|---|\n");
        out.push_str(&format!(
            "| {label} | {:.1} | {:.1} | {:.1} | {} |\n\n",
            l.mean_chars, l.median_chars, l.mean_tokens, l.n
        ));
    }

    if let Some(e) = &report.aggregates.external {
        out.push_str("## External model-based aggregates\n\n");
        if e.diff_epitome_per_example.is_some() || e.diff_epitome_dataset_mean.is_some() {
            out.push_str(
                "| Model | mode | x̄(diff-Epitome) | diff-ER | diff-EX | diff-IP |\n|---|---|---|---|---|---|\n",
            );
            for d in [&e.diff_epitome_per_example, &e.diff_epitome_dataset_mean]
                .into_iter()
                .flatten()
            {
                out.push_str(&format!(
                    "| {label} | {} | {:.3} | {:.3} | {:.3} | {:.3} |\n",
                    d.mode, d.mean_of_three, d.diff_er, d.diff_ex, d.diff_ip
                ));
            }
            out.push('\n');
        }
        if let Some(s) = &e.similarity {
            out.push_str(&format!(
                "FBert: {:.3}{} (n = {})\n\n",
                s.mean,
                s.sd.map(|sd| format!(" ± {sd:.3}")).unwrap_or_default(),
                s.n
            ));
        }
    }

    if !report.stats.is_empty() {
        out.push_str("## Statistical tests\n\n");
        out.push_str(
            "| Method | Statistic | p-value | df | n_a | n_b | Effect size |\n|---|---|---|---|---|---|---|\n",
        );
        for t in &report.stats {
            out.push_str(&format!(
                "| {} | {:.4} | {:.3e} | {} | {} | {} | {} |\n",
                t.method,
                t.statistic,
                t.p_value,
                fmt_opt(t.df, 2),
                t.n_a,
                t.n_b,
                fmt_opt(t.effect_size, 3)
            ));
        }
        out.push('\n');
    }

    if !report.warnings.is_empty() {
        out.push_str("## Warnings\n\n");
        for w in &report.warnings {
            out.push_str(&format!("- {w}\n"));
        }
        out.push('\n');
    }
    out
}

/// Renders the diversity row as CSV with the five standard metric columns.
pub fn render_csv(report: &MetricReportFile) -> Result<String> {
    let Some(d) = &report.aggregates.diversity else {
        return Err(Error::Report(
            "report has no diversity aggregates to render as CSV".to_string(),
        ));
    };
    let mut out = String::new();
    out.push_str(
        "model,# Templates,# Span Nodes / Total # Nodes,# Children From Root,Compression Ratio,# Unique Start Words\n",
    );
    out.push_str(&format!(
        "{},{} ({:.1}%),{} / {} ({:.1}%),{} ({:.1}%),{:.2}%,{}\n",
        report.config.model_label,
        d.templates,
        d.templates_pct,
        d.span_nodes_folded,
        d.total_nodes_unfolded,
        d.span_node_pct,
        d.root_children_folded,
        d.root_children_pct,
        d.compression_pct,
        d.unique_start_words
    ));
    Ok(out)
}

/// Long-format CSV of per-example values (value, model, metric), one row per
/// defined entry, for external distribution plotting.
pub fn render_plotdata(records: &[PerExampleRecord], model_label: &str) -> String {
    let mut out = String::from("value,model,metric\n");
    let mut push = |v: Option<f64>, metric: &str| {
        if let Some(v) = v {
            out.push_str(&format!("{v},{model_label},{metric}\n"));
        }
    };
    for r in records {
        push(r.nidf, "nidf");
        if let Some(s) = &r.iva_signed {
            push(s.intensity, "iva_signed_intensity");
            push(s.valence, "iva_signed_valence");
            push(s.arousal, "iva_signed_arousal");
        }
        if let Some(d) = &r.iva_distance {
            push(d.intensity, "iva_distance_intensity");
            push(d.valence, "iva_distance_valence");
            push(d.arousal, "iva_distance_arousal");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Dialogue, EmotionLabel, Turn};
    use crate::lexicons::{IntensityLexicon, VadLexicon};

    fn dialogue(id: &str, emotion: EmotionLabel, texts: &[&str]) -> Dialogue {
        let turns = texts
            .iter()
            .enumerate()
            .map(|(i, t)| Turn::new((i + 1) as u32, *t).unwrap())
            .collect();
        Dialogue::new(id, Split::Test, emotion, "situation", turns).unwrap()
    }

    fn test_corpus() -> Corpus {
        Corpus::from_dialogues(vec![
            dialogue("d1", EmotionLabel::Sad, &["calm morning today", "storm is coming"]),
            dialogue("d2", EmotionLabel::Joyful, &["bright day outside", "calm and bright"]),
        ])
        .unwrap()
    }

    fn lexicons() -> (VadLexicon, IntensityLexicon) {
        (
            VadLexicon::from_entries(vec![
                ("calm", 0.2, 0.4, 0.6),
                ("storm", 0.4, 0.6, 0.8),
                ("bright", 0.6, 0.2, 0.5),
            ]),
            IntensityLexicon::from_entries(vec![("calm", 0.1), ("storm", 0.9), ("bright", 0.3)]),
        )
    }

    fn nidf_table() -> NidfTable {
        let docs: Vec<String> = vec![
            "calm morning today".into(),
            "storm is coming".into(),
            "bright day outside".into(),
            "calm and bright".into(),
        ];
        NidfTable::build(&docs, crate::metrics::feature::tokenize_strings, "v1").unwrap()
    }

    fn run_eval(metrics: MetricSelection) -> EvalOutput {
        let corpus = test_corpus();
        let generations = ground_truth_generations(&corpus, Split::Test).unwrap();
        let (vad, intensity) = lexicons();
        let nidf = nidf_table();
        let inputs = EvalInputs {
            generations: &generations,
            corpus: Some((&corpus, Split::Test)),
            vad: Some(&vad),
            intensity: Some(&intensity),
            nidf: Some(&nidf),
            epitome_gen: None,
            epitome_gt: None,
            similarity: None,
        };
        evaluate(
            &inputs,
            &EvalOptions {
                metrics,
                prompt_mode: PromptMode::AllContext,
            },
        )
        .unwrap()
    }

    #[test]
    fn ground_truth_generations_extract_targets() {
        let corpus = test_corpus();
        let gens = ground_truth_generations(&corpus, Split::Test).unwrap();
        assert_eq!(gens.len(), 2);
        assert_eq!(gens[0].response, "storm is coming");
    }

    #[test]
    fn full_eval_produces_all_aggregates() {
        let out = run_eval(MetricSelection::all());
        assert_eq!(out.per_example.len(), 2);
        let agg = &out.aggregates;
        assert_eq!(agg.n_examples, 2);
        assert!(agg.feature.is_some());
        assert!(agg.length.is_some());
        assert!(agg.diversity.is_some());
        assert!(agg.external.is_none());
        let feature = agg.feature.as_ref().unwrap();
        assert!(feature["nidf"].is_some());
        assert!(feature["iva_distance_valence"].is_some());
    }

    #[test]
    fn metric_selection_limits_output() {
        let out = run_eval(MetricSelection {
            nidf: false,
            iva: false,
            diversity: false,
            length: true,
        });
        let agg = &out.aggregates;
        assert!(agg.feature.is_none());
        assert!(agg.diversity.is_none());
        let l = agg.length.unwrap();
        assert_eq!(l.n, 2);
        // "storm is coming" = 15 chars, "calm and bright" = 15 chars
        assert_eq!(l.mean_chars, 15.0);
    }

    #[test]
    fn metric_selection_parses_and_rejects() {
        let sel = MetricSelection::parse_list("nidf,length").unwrap();
        assert!(sel.nidf && sel.length && !sel.iva && !sel.diversity);
        assert!(MetricSelection::parse_list("nidf,bogus").is_err());
        assert!(MetricSelection::parse_list("").is_err());
    }

    #[test]
    fn unknown_ids_error_lists_them() {
        let corpus = test_corpus();
        let generations = vec![Generation {
            dialogue_id: "nope".to_string(),
            response: "hello".to_string(),
        }];
        let (vad, intensity) = lexicons();
        let inputs = EvalInputs {
            generations: &generations,
            corpus: Some((&corpus, Split::Test)),
            vad: Some(&vad),
            intensity: Some(&intensity),
            nidf: None,
            epitome_gen: None,
            epitome_gt: None,
            similarity: None,
        };
        let err = evaluate(
            &inputs,
            &EvalOptions {
                metrics: MetricSelection {
                    nidf: false,
                    iva: true,
                    diversity: false,
                    length: false,
                },
                prompt_mode: PromptMode::AllContext,
            },
        )
        .unwrap_err();
        assert!(err.to_string().contains("nope"));
    }

    #[test]
    fn verify_passes_on_fresh_report_and_catches_tampering() {
        let out = run_eval(MetricSelection::all());
        let mut report = MetricReportFile {
            version: TOOL_VERSION.to_string(),
            config: RunConfig::new("test-model"),
            per_example_path: "per_example.jsonl".to_string(),
            aggregates: out.aggregates.clone(),
            stats: Vec::new(),
            warnings: Vec::new(),
        };
        assert!(verify_report(&report, &out.per_example).is_empty());
        // tamper with an aggregate
        if let Some(l) = report.aggregates.length.as_mut() {
            l.mean_chars += 0.5;
        }
        let problems = verify_report(&report, &out.per_example);
        assert!(problems.iter().any(|p| p.contains("length")));
    }

    #[test]
    fn per_example_jsonl_round_trip() {
        let out = run_eval(MetricSelection::all());
        let mut bytes = Vec::new();
        write_per_example(&out.per_example, &mut bytes).unwrap();
        let reread = read_per_example(&bytes[..]).unwrap();
        assert_eq!(out.per_example, reread);
    }

    #[test]
    fn report_json_round_trip_and_determinism() {
        let out = run_eval(MetricSelection::all());
        let report = MetricReportFile {
            version: TOOL_VERSION.to_string(),
            config: RunConfig::new("m"),
            per_example_path: "per_example.jsonl".to_string(),
            aggregates: out.aggregates,
            stats: Vec::new(),
            warnings: out.warnings,
        };
        let a = report.to_json_pretty().unwrap();
        let b = MetricReportFile::from_json_str(&a)
            .unwrap()
            .to_json_pretty()
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn markdown_and_csv_render() {
        let out = run_eval(MetricSelection::all());
        let report = MetricReportFile {
            version: TOOL_VERSION.to_string(),
            config: RunConfig::new("demo"),
            per_example_path: "per_example.jsonl".to_string(),
            aggregates: out.aggregates,
            stats: Vec::new(),
            warnings: Vec::new(),
        };
        let md = render_markdown(&report);
        assert!(md.contains("# Templates"));
        assert!(md.contains("| demo |"));
        let csv = render_csv(&report).unwrap();
        let header = csv.lines().next().unwrap();
        assert_eq!(header.split(',').count(), 6);
        assert!(header.contains("# Templates"));
        assert!(header.contains("Compression Ratio"));
        assert!(header.contains("# Unique Start Words"));
    }

    #[test]
    fn plotdata_row_count_equals_defined_entries() {
        let out = run_eval(MetricSelection::all());
        let plot = render_plotdata(&out.per_example, "demo");
        let rows = plot.lines().count() - 1;
        let expected: usize = out
            .per_example
            .iter()
            .map(|r| {
                let triple = |t: &Option<IvaTriple>| {
                    t.map(|t| {
                        usize::from(t.intensity.is_some())
                            + usize::from(t.valence.is_some())
                            + usize::from(t.arousal.is_some())
                    })
                    .unwrap_or(0)
                };
                usize::from(r.nidf.is_some()) + triple(&r.iva_signed) + triple(&r.iva_distance)
            })
            .sum();
        assert_eq!(rows, expected);
    }

    #[test]
    fn external_scores_flow_into_report_and_verify() {
        let corpus = test_corpus();
        let generations = ground_truth_generations(&corpus, Split::Test).unwrap();
        let epitome_gen: Vec<EpitomeRecord> = generations
            .iter()
            .map(|g| EpitomeRecord {
                dialogue_id: g.dialogue_id.clone(),
                er: 2.0,
                ex: 1.0,
                ip: 0.0,
            })
            .collect();
        let epitome_gt: Vec<EpitomeRecord> = generations
            .iter()
            .map(|g| EpitomeRecord {
                dialogue_id: g.dialogue_id.clone(),
                er: 1.0,
                ex: 1.0,
                ip: 1.0,
            })
            .collect();
        let sims: Vec<SimilarityRecord> = generations
            .iter()
            .map(|g| SimilarityRecord {
                dialogue_id: g.dialogue_id.clone(),
                f_score: 0.868,
            })
            .collect();
        let inputs = EvalInputs {
            generations: &generations,
            corpus: Some((&corpus, Split::Test)),
            vad: None,
            intensity: None,
            nidf: None,
            epitome_gen: Some(&epitome_gen),
            epitome_gt: Some(&epitome_gt),
            similarity: Some(&sims),
        };
        let out = evaluate(
            &inputs,
            &EvalOptions {
                metrics: MetricSelection {
                    nidf: false,
                    iva: false,
                    diversity: true,
                    length: true,
                },
                prompt_mode: PromptMode::AllContext,
            },
        )
        .unwrap();
        let ext = out.aggregates.external.as_ref().unwrap();
        let per = ext.diff_epitome_per_example.unwrap();
        assert_eq!(per.diff_er, 1.0);
        assert_eq!(per.diff_ip, 1.0);
        assert_eq!(ext.similarity.unwrap().mean, 0.868);
        let report = MetricReportFile {
            version: TOOL_VERSION.to_string(),
            config: RunConfig::new("m"),
            per_example_path: "x.jsonl".to_string(),
            aggregates: out.aggregates.clone(),
            stats: Vec::new(),
            warnings: Vec::new(),
        };
        assert!(verify_report(&report, &out.per_example).is_empty());
    }
}
