//! Aggregation of externally produced model-based scores.
//!
//! The classifiers themselves run elsewhere; this module ingests their
//! per-example score files and computes the aggregate difference-from-
//! ground-truth metrics.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::feature::KahanSum;

/// Per-example empathy levels on the 0-2 scale for the three dimensions:
/// emotional reactions, explorations, interpretations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpitomeRecord {
    pub dialogue_id: String,
    pub er: f64,
    pub ex: f64,
    pub ip: f64,
}

/// Per-example semantic-similarity F-score in `[0,1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityRecord {
    pub dialogue_id: String,
    pub f_score: f64,
}

/// Reads `{"dialogue_id","er","ex","ip"}` JSON-lines, validating the 0-2 range.
pub fn load_epitome_jsonl<R: BufRead>(reader: R) -> Result<Vec<EpitomeRecord>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<epitome jsonl>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: EpitomeRecord = serde_json::from_str(&line).map_err(|e| Error::Json {
            context: format!("epitome line {}", i + 1),
            source: e,
        })?;
        for (name, v) in [("er", rec.er), ("ex", rec.ex), ("ip", rec.ip)] {
            if !(0.0..=2.0).contains(&v) {
                return Err(Error::parse(
                    "<epitome jsonl>",
                    i + 1,
                    format!("{name} = {v} outside [0,2]"),
                ));
            }
        }
        out.push(rec);
    }
    Ok(out)
}

/// Reads `{"dialogue_id","f_score"}` JSON-lines, validating the `[0,1]` range.
pub fn load_similarity_jsonl<R: BufRead>(reader: R) -> Result<Vec<SimilarityRecord>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<similarity jsonl>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SimilarityRecord = serde_json::from_str(&line).map_err(|e| Error::Json {
            context: format!("similarity line {}", i + 1),
            source: e,
        })?;
        if !(0.0..=1.0).contains(&rec.f_score) {
            return Err(Error::parse(
                "<similarity jsonl>",
                i + 1,
                format!("f_score = {} outside [0,1]", rec.f_score),
            ));
        }
        out.push(rec);
    }
    Ok(out)
}

/// How generation and ground-truth levels are compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiffMode {
    /// Mean over examples of the per-example absolute difference (default).
    PerExample,
    /// Absolute difference of the dataset means.
    DatasetMean,
}

impl fmt::Display for DiffMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DiffMode::PerExample => "per-example",
            DiffMode::DatasetMean => "dataset-mean",
        })
    }
}

impl FromStr for DiffMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-example" => Ok(DiffMode::PerExample),
            "dataset-mean" => Ok(DiffMode::DatasetMean),
            other => Err(Error::EmptyInput(format!("unknown diff mode {other:?}"))),
        }
    }
}

/// Aggregate empathy-level differences between generations and ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffEpitome {
    pub mode: DiffMode,
    pub diff_er: f64,
    pub diff_ex: f64,
    pub diff_ip: f64,
    /// Arithmetic mean of the three dimension diffs.
    pub mean_of_three: f64,
    pub n: usize,
}

/// Computes the aggregate difference between generation and ground-truth
/// levels. Both inputs must cover exactly the same dialogue ids.
pub fn diff_epitome(
    gen: &[EpitomeRecord],
    gt: &[EpitomeRecord],
    mode: DiffMode,
) -> Result<DiffEpitome> {
    if gen.is_empty() || gt.is_empty() {
        return Err(Error::EmptyInput("epitome score files".to_string()));
    }
    let gt_by_id: HashMap<&str, &EpitomeRecord> =
        gt.iter().map(|r| (r.dialogue_id.as_str(), r)).collect();
    let gen_ids: BTreeSet<&str> = gen.iter().map(|r| r.dialogue_id.as_str()).collect();
    let gt_ids: BTreeSet<&str> = gt_by_id.keys().copied().collect();
    if gen_ids != gt_ids || gen.len() != gt.len() {
        let missing_in_gt: Vec<&str> = gen_ids.difference(&gt_ids).copied().collect();
        let missing_in_gen: Vec<&str> = gt_ids.difference(&gen_ids).copied().collect();
        return Err(Error::IdMismatch(format!(
            "missing in ground truth: [{}]; missing in generations: [{}]",
            missing_in_gt.join(", "),
            missing_in_gen.join(", ")
        )));
    }

    let n = gen.len() as f64;
    let (diff_er, diff_ex, diff_ip) = match mode {
        DiffMode::PerExample => {
            let mut er = KahanSum::default();
            let mut ex = KahanSum::default();
            let mut ip = KahanSum::default();
            for g in gen {
                let t = gt_by_id[g.dialogue_id.as_str()];
                er.add((g.er - t.er).abs());
                ex.add((g.ex - t.ex).abs());
                ip.add((g.ip - t.ip).abs());
            }
            (er.value() / n, ex.value() / n, ip.value() / n)
        }
        DiffMode::DatasetMean => {
            let mean = |records: &[EpitomeRecord], pick: fn(&EpitomeRecord) -> f64| {
                let mut sum = KahanSum::default();
                for r in records {
                    sum.add(pick(r));
                }
                sum.value() / records.len() as f64
            };
            (
                (mean(gen, |r| r.er) - mean(gt, |r| r.er)).abs(),
                (mean(gen, |r| r.ex) - mean(gt, |r| r.ex)).abs(),
                (mean(gen, |r| r.ip) - mean(gt, |r| r.ip)).abs(),
            )
        }
    };
    Ok(DiffEpitome {
        mode,
        diff_er,
        diff_ex,
        diff_ip,
        mean_of_three: (diff_er + diff_ex + diff_ip) / 3.0,
        n: gen.len(),
    })
}

/// Mean and sample SD of similarity F-scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityAggregate {
    pub mean: f64,
    /// `None` for a single record.
    pub sd: Option<f64>,
    pub n: usize,
}

pub fn aggregate_similarity(records: &[SimilarityRecord]) -> Result<SimilarityAggregate> {
    if records.is_empty() {
        return Err(Error::EmptyInput("similarity score file".to_string()));
    }
    let n = records.len();
    let mut sum = KahanSum::default();
    for r in records {
        sum.add(r.f_score);
    }
    let mean = sum.value() / n as f64;
    let sd = (n >= 2).then(|| {
        let mut sq = KahanSum::default();
        for r in records {
            sq.add((r.f_score - mean) * (r.f_score - mean));
        }
        (sq.value() / (n - 1) as f64).sqrt()
    });
    Ok(SimilarityAggregate { mean, sd, n })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, er: f64, ex: f64, ip: f64) -> EpitomeRecord {
        EpitomeRecord {
            dialogue_id: id.to_string(),
            er,
            ex,
            ip,
        }
    }

    #[test]
    fn identity_inputs_give_zero_in_both_modes() {
        let records = vec![rec("a", 2.0, 1.0, 0.5), rec("b", 0.0, 1.5, 2.0)];
        for mode in [DiffMode::PerExample, DiffMode::DatasetMean] {
            let d = diff_epitome(&records, &records, mode).unwrap();
            assert_eq!(d.diff_er, 0.0);
            assert_eq!(d.diff_ex, 0.0);
            assert_eq!(d.diff_ip, 0.0);
            assert_eq!(d.mean_of_three, 0.0);
        }
    }

    #[test]
    fn mode_gap_hand_example() {
        // ER gen (2,0) vs gt (1,1): per-example 1.0, dataset-mean 0.0
        let gen = vec![rec("a", 2.0, 0.0, 0.0), rec("b", 0.0, 0.0, 0.0)];
        let gt = vec![rec("a", 1.0, 0.0, 0.0), rec("b", 1.0, 0.0, 0.0)];
        let per = diff_epitome(&gen, &gt, DiffMode::PerExample).unwrap();
        assert_eq!(per.diff_er, 1.0);
        let ds = diff_epitome(&gen, &gt, DiffMode::DatasetMean).unwrap();
        assert_eq!(ds.diff_er, 0.0);
        assert!(ds.diff_er <= per.diff_er);
    }

    #[test]
    fn mean_of_three_reproduces_reported_arithmetic() {
        // shape score files so the three diffs come out (0.588, 0.720, 0.796)
        let gen = vec![rec("a", 0.588, 0.720, 0.796)];
        let gt = vec![rec("a", 0.0, 0.0, 0.0)];
        let d = diff_epitome(&gen, &gt, DiffMode::PerExample).unwrap();
        assert!((d.mean_of_three - 0.701).abs() < 0.0005);
        assert!((d.mean_of_three - 0.7013333333333334).abs() < 1e-12);
    }

    #[test]
    fn per_example_is_order_invariant() {
        let gen = vec![rec("a", 2.0, 1.0, 0.0), rec("b", 1.0, 0.0, 2.0)];
        let gt = vec![rec("b", 0.5, 0.5, 0.5), rec("a", 1.0, 1.0, 1.0)];
        let d1 = diff_epitome(&gen, &gt, DiffMode::PerExample).unwrap();
        let mut gen_rev = gen.clone();
        gen_rev.reverse();
        let d2 = diff_epitome(&gen_rev, &gt, DiffMode::PerExample).unwrap();
        assert_eq!(d1, d2);
    }

    #[test]
    fn id_mismatch_lists_missing_ids() {
        let gen = vec![rec("a", 1.0, 1.0, 1.0), rec("b", 1.0, 1.0, 1.0)];
        let gt = vec![rec("a", 1.0, 1.0, 1.0), rec("c", 1.0, 1.0, 1.0)];
        let err = diff_epitome(&gen, &gt, DiffMode::PerExample).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains('b') && msg.contains('c'), "{msg}");
    }

    #[test]
    fn dataset_mean_never_exceeds_per_example() {
        let gen = vec![
            rec("a", 2.0, 0.3, 1.1),
            rec("b", 0.0, 1.9, 0.2),
            rec("c", 1.0, 0.7, 1.8),
        ];
        let gt = vec![
            rec("a", 1.0, 0.2, 1.6),
            rec("b", 1.0, 1.2, 0.9),
            rec("c", 0.2, 1.7, 0.3),
        ];
        let per = diff_epitome(&gen, &gt, DiffMode::PerExample).unwrap();
        let ds = diff_epitome(&gen, &gt, DiffMode::DatasetMean).unwrap();
        assert!(ds.diff_er <= per.diff_er + 1e-12);
        assert!(ds.diff_ex <= per.diff_ex + 1e-12);
        assert!(ds.diff_ip <= per.diff_ip + 1e-12);
    }

    #[test]
    fn similarity_aggregate_hand_examples() {
        let constant: Vec<SimilarityRecord> = (0..4)
            .map(|i| SimilarityRecord {
                dialogue_id: format!("d{i}"),
                f_score: 0.868,
            })
            .collect();
        let agg = aggregate_similarity(&constant).unwrap();
        assert_eq!(agg.mean, 0.868);
        assert_eq!(agg.sd, Some(0.0));

        let two = vec![
            SimilarityRecord {
                dialogue_id: "a".into(),
                f_score: 0.8,
            },
            SimilarityRecord {
                dialogue_id: "b".into(),
                f_score: 0.9,
            },
        ];
        let agg = aggregate_similarity(&two).unwrap();
        assert!((agg.mean - 0.85).abs() < 1e-12);
        assert!((agg.sd.unwrap() - 0.005f64.sqrt()).abs() < 1e-12);

        let one = vec![SimilarityRecord {
            dialogue_id: "a".into(),
            f_score: 0.7,
        }];
        let agg = aggregate_similarity(&one).unwrap();
        assert_eq!(agg.mean, 0.7);
        assert_eq!(agg.sd, None);

        assert!(aggregate_similarity(&[]).is_err());
    }

    #[test]
    fn loaders_validate_ranges() {
        let good = r#"{"dialogue_id":"a","er":2.0,"ex":0.0,"ip":1.5}"#;
        assert_eq!(load_epitome_jsonl(good.as_bytes()).unwrap().len(), 1);
        let bad = r#"{"dialogue_id":"a","er":2.5,"ex":0.0,"ip":1.5}"#;
        assert!(load_epitome_jsonl(bad.as_bytes()).is_err());

        let good = r#"{"dialogue_id":"a","f_score":0.9}"#;
        assert_eq!(load_similarity_jsonl(good.as_bytes()).unwrap().len(), 1);
        let bad = r#"{"dialogue_id":"a","f_score":1.2}"#;
        assert!(load_similarity_jsonl(bad.as_bytes()).is_err());
    }
}
