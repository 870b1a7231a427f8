//! Word-emotion lexicons and the corpus-derived NIDF table.
//!
//! The VAD and intensity loaders read the published tab-separated layouts;
//! the files themselves are supplied by the user and never redistributed.
//! Lookup is exact lowercase match, no stemming.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Valence/arousal/dominance entry, each in `[0,1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VadEntry {
    pub valence: f64,
    pub arousal: f64,
    pub dominance: f64,
}

#[derive(Debug, Clone, Default)]
pub struct VadLexicon {
    entries: HashMap<String, VadEntry>,
    pub skipped_rows: u64,
    pub skipped_multiword: u64,
}

fn in_unit(v: f64) -> bool {
    (0.0..=1.0).contains(&v)
}

/// Splits a lexicon line into at most `n` tab-separated fields.
fn tsv_fields(line: &str, n: usize) -> Option<Vec<&str>> {
    let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
    if fields.len() < n {
        return None;
    }
    Some(fields)
}

impl VadLexicon {
    /// Loads rows of `word \t valence \t arousal \t dominance`. A header
    /// line is tolerated; malformed rows and multiword terms are skipped
    /// and tallied.
    pub fn from_tsv<R: BufRead>(reader: R) -> Result<VadLexicon> {
        let mut lex = VadLexicon::default();
        let mut rows = 0usize;
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<vad tsv>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            rows += 1;
            let parsed = tsv_fields(&line, 4).and_then(|f| {
                let v = f[1].parse::<f64>().ok()?;
                let a = f[2].parse::<f64>().ok()?;
                let d = f[3].parse::<f64>().ok()?;
                (in_unit(v) && in_unit(a) && in_unit(d)).then(|| {
                    (
                        f[0].to_lowercase(),
                        VadEntry {
                            valence: v,
                            arousal: a,
                            dominance: d,
                        },
                    )
                })
            });
            match parsed {
                Some((word, entry)) => {
                    if word.contains(char::is_whitespace) {
                        lex.skipped_multiword += 1;
                    } else if !word.is_empty() {
                        lex.entries.insert(word, entry);
                    } else {
                        lex.skipped_rows += 1;
                    }
                }
                // first line gets header treatment, no tally
                None if i == 0 => {}
                None => lex.skipped_rows += 1,
            }
        }
        if rows == 0 {
            return Err(Error::EmptyInput("VAD lexicon stream".to_string()));
        }
        Ok(lex)
    }

    pub fn get(&self, word: &str) -> Option<&VadEntry> {
        self.entries.get(word)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    #[cfg(test)]
    pub(crate) fn from_entries(entries: Vec<(&str, f64, f64, f64)>) -> VadLexicon {
        VadLexicon {
            entries: entries
                .into_iter()
                .map(|(w, v, a, d)| {
                    (
                        w.to_string(),
                        VadEntry {
                            valence: v,
                            arousal: a,
                            dominance: d,
                        },
                    )
                })
                .collect(),
            skipped_rows: 0,
            skipped_multiword: 0,
        }
    }
}

/// How per-emotion intensity rows collapse to one score per word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntensityMerge {
    Max,
    Mean,
}

#[derive(Debug, Clone, Default)]
pub struct IntensityLexicon {
    entries: HashMap<String, f64>,
    pub skipped_rows: u64,
    pub skipped_multiword: u64,
}

impl IntensityLexicon {
    /// Loads rows of `word \t emotion \t score`, collapsing multiple emotion
    /// rows per word with the given merge rule (max by default).
    pub fn from_tsv<R: BufRead>(reader: R, merge: IntensityMerge) -> Result<IntensityLexicon> {
        let mut lex = IntensityLexicon::default();
        let mut sums: HashMap<String, (f64, u64)> = HashMap::new();
        let mut rows = 0usize;
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<intensity tsv>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            rows += 1;
            let parsed = tsv_fields(&line, 3).and_then(|f| {
                let score = f[2].parse::<f64>().ok()?;
                in_unit(score).then(|| (f[0].to_lowercase(), score))
            });
            match parsed {
                Some((word, score)) => {
                    if word.contains(char::is_whitespace) {
                        lex.skipped_multiword += 1;
                    } else if word.is_empty() {
                        lex.skipped_rows += 1;
                    } else {
                        match merge {
                            IntensityMerge::Max => {
                                let e = lex.entries.entry(word).or_insert(score);
                                if score > *e {
                                    *e = score;
                                }
                            }
                            IntensityMerge::Mean => {
                                let e = sums.entry(word).or_insert((0.0, 0));
                                e.0 += score;
                                e.1 += 1;
                            }
                        }
                    }
                }
                None if i == 0 => {}
                None => lex.skipped_rows += 1,
            }
        }
        if rows == 0 {
            return Err(Error::EmptyInput("intensity lexicon stream".to_string()));
        }
        if merge == IntensityMerge::Mean {
            lex.entries = sums
                .into_iter()
                .map(|(w, (sum, n))| (w, sum / n as f64))
                .collect();
        }
        Ok(lex)
    }

    pub fn get(&self, word: &str) -> Option<f64> {
        self.entries.get(word).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    #[cfg(test)]
    pub(crate) fn from_entries(entries: Vec<(&str, f64)>) -> IntensityLexicon {
        IntensityLexicon {
            entries: entries
                .into_iter()
                .map(|(w, s)| (w.to_string(), s))
                .collect(),
            skipped_rows: 0,
            skipped_multiword: 0,
        }
    }
}

/// Normalized inverse document frequency table over a reference document set.
///
/// idf(w) = ln(R / c_w); nidf rescales idf linearly so the most common word
/// maps to 0 and the rarest to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct NidfTable {
    entries: HashMap<String, (f64, u64)>,
    pub doc_count: u64,
    pub min_idf: f64,
    pub max_idf: f64,
    pub tokenizer_version: String,
}

impl NidfTable {
    /// Builds the table from reference documents, counting each distinct
    /// token once per document.
    pub fn build<F>(reference: &[String], tokenizer: F, tokenizer_version: &str) -> Result<NidfTable>
    where
        F: Fn(&str) -> Vec<String>,
    {
        if reference.is_empty() {
            return Err(Error::EmptyInput("NIDF reference document set".to_string()));
        }
        let mut doc_freq: HashMap<String, u64> = HashMap::new();
        for doc in reference {
            let distinct: HashSet<String> = tokenizer(doc).into_iter().collect();
            for token in distinct {
                *doc_freq.entry(token).or_insert(0) += 1;
            }
        }
        let r = reference.len() as f64;
        let idfs: HashMap<&String, f64> = doc_freq
            .iter()
            .map(|(w, &c)| (w, (r / c as f64).ln()))
            .collect();
        let min_idf = idfs.values().copied().fold(f64::INFINITY, f64::min);
        let max_idf = idfs.values().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = max_idf - min_idf;
        let entries = doc_freq
            .iter()
            .map(|(w, &c)| {
                let nidf = if span > 0.0 {
                    (idfs[w] - min_idf) / span
                } else {
                    0.0
                };
                (w.clone(), (nidf, c))
            })
            .collect();
        Ok(NidfTable {
            entries,
            doc_count: reference.len() as u64,
            min_idf: if min_idf.is_finite() { min_idf } else { 0.0 },
            max_idf: if max_idf.is_finite() { max_idf } else { 0.0 },
            tokenizer_version: tokenizer_version.to_string(),
        })
    }

    pub fn get(&self, word: &str) -> Option<f64> {
        self.entries.get(word).map(|&(nidf, _)| nidf)
    }

    pub fn doc_count_of(&self, word: &str) -> Option<u64> {
        self.entries.get(word).map(|&(_, c)| c)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Writes the cache file: a header line with R, idf range and tokenizer
    /// version, then `word \t nidf \t doc_count` rows sorted by word.
    pub fn write_tsv<W: Write>(&self, mut sink: W) -> Result<()> {
        writeln!(
            sink,
            "#R={}\tmin_idf={}\tmax_idf={}\ttokenizer={}",
            self.doc_count, self.min_idf, self.max_idf, self.tokenizer_version
        )
        .map_err(|e| Error::io("<nidf tsv>", e))?;
        let sorted: BTreeMap<&String, &(f64, u64)> = self.entries.iter().collect();
        for (word, (nidf, count)) in sorted {
            writeln!(sink, "{word}\t{nidf}\t{count}").map_err(|e| Error::io("<nidf tsv>", e))?;
        }
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(reader: R) -> Result<NidfTable> {
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::EmptyInput("NIDF cache stream".to_string()))?
            .map_err(|e| Error::io("<nidf tsv>", e))?;
        let header = header
            .strip_prefix('#')
            .ok_or_else(|| Error::parse("<nidf tsv>", 1, "missing # header line"))?;
        let mut doc_count = None;
        let mut min_idf = None;
        let mut max_idf = None;
        let mut tokenizer_version = None;
        for part in header.split('\t') {
            match part.split_once('=') {
                Some(("R", v)) => doc_count = v.parse::<u64>().ok(),
                Some(("min_idf", v)) => min_idf = v.parse::<f64>().ok(),
                Some(("max_idf", v)) => max_idf = v.parse::<f64>().ok(),
                Some(("tokenizer", v)) => tokenizer_version = Some(v.to_string()),
                _ => {}
            }
        }
        let (Some(doc_count), Some(min_idf), Some(max_idf), Some(tokenizer_version)) =
            (doc_count, min_idf, max_idf, tokenizer_version)
        else {
            return Err(Error::parse("<nidf tsv>", 1, "incomplete header"));
        };
        let mut entries = HashMap::new();
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io("<nidf tsv>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let fields = tsv_fields(&line, 3)
                .ok_or_else(|| Error::parse("<nidf tsv>", i + 2, "expected word\\tnidf\\tcount"))?;
            let nidf = fields[1]
                .parse::<f64>()
                .map_err(|e| Error::parse("<nidf tsv>", i + 2, format!("bad nidf: {e}")))?;
            let count = fields[2]
                .parse::<u64>()
                .map_err(|e| Error::parse("<nidf tsv>", i + 2, format!("bad count: {e}")))?;
            entries.insert(fields[0].to_string(), (nidf, count));
        }
        Ok(NidfTable {
            entries,
            doc_count,
            min_idf,
            max_idf,
            tokenizer_version,
        })
    }
}
