//! Emotion-grounded dialogue corpus: ingest, validation, filtering, indexing.
//!
//! The raw input is the published CSV layout: one row per utterance with a
//! conversation id, a 1-based utterance index, the grounding emotion label,
//! the situation prompt and the utterance text. Literal commas inside text
//! fields are escaped as `_comma_`, and raw double quotes appear unescaped,
//! so the reader runs with RFC-4180 quoting disabled.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

/// Corpus partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "valid" | "validation" | "dev" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(Error::UnknownSplit(other.to_string())),
        }
    }
}

macro_rules! emotion_labels {
    ($(($variant:ident, $name:literal)),+ $(,)?) => {
        /// One of the closed set of 32 grounding emotion labels.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum EmotionLabel {
            $(#[serde(rename = $name)] $variant,)+
        }

        impl EmotionLabel {
            pub const ALL: [EmotionLabel; 32] = [$(EmotionLabel::$variant,)+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $(EmotionLabel::$variant => $name,)+
                }
            }
        }

        impl FromStr for EmotionLabel {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok(EmotionLabel::$variant),)+
                    other => Err(Error::UnknownEmotion(other.to_string())),
                }
            }
        }
    };
}

emotion_labels![
    (Afraid, "afraid"),
    (Angry, "angry"),
    (Sad, "sad"),
    (Joyful, "joyful"),
    (Grateful, "grateful"),
    (Surprised, "surprised"),
    (Trusting, "trusting"),
    (Disgusted, "disgusted"),
    (Anticipating, "anticipating"),
    (Content, "content"),
    (Apprehensive, "apprehensive"),
    (Proud, "proud"),
    (Prepared, "prepared"),
    (Ashamed, "ashamed"),
    (Guilty, "guilty"),
    (Nostalgic, "nostalgic"),
    (Anxious, "anxious"),
    (Hopeful, "hopeful"),
    (Sentimental, "sentimental"),
    (Jealous, "jealous"),
    (Embarrassed, "embarrassed"),
    (Excited, "excited"),
    (Annoyed, "annoyed"),
    (Lonely, "lonely"),
    (Faithful, "faithful"),
    (Terrified, "terrified"),
    (Confident, "confident"),
    (Furious, "furious"),
    (Disappointed, "disappointed"),
    (Caring, "caring"),
    (Impressed, "impressed"),
    (Devastated, "devastated"),
];

impl fmt::Display for EmotionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Speaker opens the dialogue; roles alternate strictly with turn parity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Speaker,
    Listener,
}

impl Role {
    pub fn for_index(index: u32) -> Role {
        if index % 2 == 1 {
            Role::Speaker
        } else {
            Role::Listener
        }
    }
}

/// A single utterance. Text is NFC-normalized and trimmed at construction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub index: u32,
    pub role: Role,
    pub text: String,
}

impl Turn {
    /// Builds a turn, deriving the role from the index parity. Fails on
    /// index 0 or text that is empty after trimming.
    pub fn new(index: u32, text: impl Into<String>) -> Option<Turn> {
        if index == 0 {
            return None;
        }
        let text = text.into();
        let trimmed = text.trim();
        if trimmed.is_empty() {
            return None;
        }
        Some(Turn {
            index,
            role: Role::for_index(index),
            text: trimmed.to_string(),
        })
    }
}

/// One emotion-labeled multi-turn conversation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dialogue {
    pub id: String,
    pub split: Split,
    pub emotion: EmotionLabel,
    pub situation: String,
    pub turns: Vec<Turn>,
}

impl Dialogue {
    /// Validates the turn invariants: indices contiguous from 1, roles
    /// matching parity, non-empty texts.
    pub fn new(
        id: impl Into<String>,
        split: Split,
        emotion: EmotionLabel,
        situation: impl Into<String>,
        turns: Vec<Turn>,
    ) -> Result<Dialogue> {
        let id = id.into();
        if turns.is_empty() {
            return Err(Error::EmptyInput(format!("dialogue {id} has no turns")));
        }
        for (i, t) in turns.iter().enumerate() {
            let expect = (i + 1) as u32;
            if t.index != expect {
                return Err(Error::Parse {
                    file: id.clone(),
                    line: i + 1,
                    message: format!("turn index {} where {} expected", t.index, expect),
                });
            }
            if t.role != Role::for_index(t.index) {
                return Err(Error::Parse {
                    file: id.clone(),
                    line: i + 1,
                    message: format!("role {:?} does not match index {} parity", t.role, t.index),
                });
            }
            if t.text.trim().is_empty() {
                return Err(Error::Parse {
                    file: id.clone(),
                    line: i + 1,
                    message: "empty turn text".to_string(),
                });
            }
        }
        Ok(Dialogue {
            id,
            split,
            emotion,
            situation: situation.into(),
            turns,
        })
    }

    /// Whether the dialogue contains a generation target (any even turn).
    pub fn has_target(&self) -> bool {
        self.turns.len() >= 2
    }

    /// The last even turn as generation target with all preceding turns as
    /// context. A trailing odd turn is excluded from both. `None` when the
    /// dialogue has no even turn.
    pub fn last_response_target(&self) -> Option<(&[Turn], &Turn)> {
        let n = self.turns.len();
        if n < 2 {
            return None;
        }
        let target_index = if n.is_multiple_of(2) { n } else { n - 1 };
        let target = &self.turns[target_index - 1];
        let context = &self.turns[..target_index - 1];
        Some((context, target))
    }
}

/// Per-ingest tally of dropped rows and dialogues, by reason.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub rows_read: u64,
    pub rows_dropped_schema: u64,
    pub rows_dropped_keyword: u64,
    pub rows_dropped_unknown_emotion: u64,
    pub rows_dropped_duplicate: u64,
    pub dialogues_dropped_gap: u64,
    pub dialogues_dropped_empty: u64,
    pub dialogues_admitted: u64,
}

impl FilterReport {
    pub fn rows_dropped(&self) -> u64 {
        self.rows_dropped_schema
            + self.rows_dropped_keyword
            + self.rows_dropped_unknown_emotion
            + self.rows_dropped_duplicate
    }

    pub fn dialogues_dropped(&self) -> u64 {
        self.dialogues_dropped_gap + self.dialogues_dropped_empty
    }

    /// Dropped dialogues as a fraction of all dialogues seen.
    pub fn filtered_fraction(&self) -> f64 {
        let total = self.dialogues_admitted + self.dialogues_dropped();
        if total == 0 {
            0.0
        } else {
            self.dialogues_dropped() as f64 / total as f64
        }
    }

    fn merge(&mut self, other: &FilterReport) {
        self.rows_read += other.rows_read;
        self.rows_dropped_schema += other.rows_dropped_schema;
        self.rows_dropped_keyword += other.rows_dropped_keyword;
        self.rows_dropped_unknown_emotion += other.rows_dropped_unknown_emotion;
        self.rows_dropped_duplicate += other.rows_dropped_duplicate;
        self.dialogues_dropped_gap += other.dialogues_dropped_gap;
        self.dialogues_dropped_empty += other.dialogues_dropped_empty;
        self.dialogues_admitted += other.dialogues_admitted;
    }
}

/// Default malformed-keyword rules: crowd-platform metadata tokens that leak
/// into utterance text in the published corpus.
pub const DEFAULT_MALFORMED_KEYWORDS: [&str; 2] = ["hit:", "conv:"];

#[derive(Debug, Clone)]
pub struct ImportOptions {
    /// Rows whose unescaped utterance or situation text contains any of these
    /// substrings (case-sensitive) are dropped and tallied.
    pub malformed_keywords: Vec<String>,
}

impl Default for ImportOptions {
    fn default() -> Self {
        ImportOptions {
            malformed_keywords: DEFAULT_MALFORMED_KEYWORDS
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }
}

impl ImportOptions {
    /// Reads keyword rules from a text stream, one substring per line.
    /// Blank lines and lines starting with '#' are ignored.
    pub fn keywords_from_reader<R: BufRead>(reader: R) -> Result<Vec<String>> {
        let mut out = Vec::new();
        for line in reader.lines() {
            let line = line.map_err(|e| Error::io("<keywords>", e))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            out.push(line.to_string());
        }
        Ok(out)
    }
}

/// Immutable, indexed dialogue collection.
#[derive(Debug, Clone)]
pub struct Corpus {
    dialogues: Vec<Dialogue>,
    by_id: HashMap<String, usize>,
    splits: BTreeSet<Split>,
    filter_report: FilterReport,
}

fn nfc(s: &str) -> String {
    s.nfc().collect()
}

fn unescape_commas(s: &str) -> String {
    s.replace("_comma_", ",")
}

struct RawRow {
    utterance_idx: u32,
    emotion: EmotionLabel,
    situation: String,
    text: String,
}

/// Accumulates kept rows per conversation in first-appearance order.
#[derive(Default)]
struct ConvAccum {
    rows: Vec<RawRow>,
}

impl Corpus {
    /// Builds a corpus from pre-validated dialogues (canonical import path).
    /// Fails on duplicate ids.
    pub fn from_dialogues(dialogues: Vec<Dialogue>) -> Result<Corpus> {
        let mut by_id = HashMap::with_capacity(dialogues.len());
        let mut splits = BTreeSet::new();
        for (i, d) in dialogues.iter().enumerate() {
            if by_id.insert(d.id.clone(), i).is_some() {
                return Err(Error::Parse {
                    file: "<corpus>".to_string(),
                    line: i + 1,
                    message: format!("duplicate dialogue id: {}", d.id),
                });
            }
            splits.insert(d.split);
        }
        Ok(Corpus {
            dialogues,
            by_id,
            splits,
            filter_report: FilterReport::default(),
        })
    }

    /// Imports one or more raw CSV streams, one per split.
    ///
    /// Rows failing schema checks or matching a malformed-keyword rule are
    /// dropped and tallied; dialogues whose surviving turn indices are not
    /// contiguous from 1 are dropped whole.
    pub fn import_raw<R: BufRead>(
        streams: Vec<(Split, &str, R)>,
        options: &ImportOptions,
    ) -> Result<Corpus> {
        if streams.is_empty() {
            return Err(Error::EmptyInput("no corpus streams supplied".to_string()));
        }
        let mut dialogues = Vec::new();
        let mut report = FilterReport::default();
        let mut splits = BTreeSet::new();
        for (split, name, stream) in streams {
            if !splits.insert(split) {
                return Err(Error::Parse {
                    file: name.to_string(),
                    line: 0,
                    message: format!("split {split} supplied twice"),
                });
            }
            let part = import_split(stream, split, name, options)?;
            report.merge(&part.report);
            dialogues.extend(part.dialogues);
        }
        report.dialogues_admitted = dialogues.len() as u64;
        let mut corpus = Corpus::from_dialogues(dialogues)?;
        corpus.filter_report = report;
        Ok(corpus)
    }

    pub fn len(&self) -> usize {
        self.dialogues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dialogues.is_empty()
    }

    /// All dialogues in stable corpus order (first appearance at import).
    pub fn dialogues(&self) -> &[Dialogue] {
        &self.dialogues
    }

    pub fn get(&self, id: &str) -> Option<&Dialogue> {
        self.by_id.get(id).map(|&i| &self.dialogues[i])
    }

    pub fn splits(&self) -> impl Iterator<Item = Split> + '_ {
        self.splits.iter().copied()
    }

    pub fn has_split(&self, split: Split) -> bool {
        self.splits.contains(&split)
    }

    pub fn split_dialogues(&self, split: Split) -> impl Iterator<Item = &Dialogue> {
        self.dialogues.iter().filter(move |d| d.split == split)
    }

    pub fn split_len(&self, split: Split) -> usize {
        self.split_dialogues(split).count()
    }

    pub fn filter_report(&self) -> &FilterReport {
        &self.filter_report
    }

    /// Partitions a split's dialogue ids by emotion label. Every admitted
    /// dialogue appears under exactly its own label; all 32 labels are
    /// present as keys, empty lists included.
    pub fn group_by_emotion(&self, split: Split) -> Result<BTreeMap<EmotionLabel, Vec<String>>> {
        if !self.has_split(split) {
            return Err(Error::MissingSplit(split));
        }
        let mut groups: BTreeMap<EmotionLabel, Vec<String>> = EmotionLabel::ALL
            .iter()
            .map(|&l| (l, Vec::new()))
            .collect();
        for d in self.split_dialogues(split) {
            groups.get_mut(&d.emotion).expect("total map").push(d.id.clone());
        }
        Ok(groups)
    }

    /// Writes the canonical JSON-lines form, one dialogue per line.
    pub fn write_jsonl<W: Write>(&self, mut sink: W) -> Result<()> {
        for d in &self.dialogues {
            let line = serde_json::to_string(d).map_err(|e| Error::Json {
                context: format!("serializing dialogue {}", d.id),
                source: e,
            })?;
            writeln!(sink, "{line}").map_err(|e| Error::io("<sink>", e))?;
        }
        Ok(())
    }

    /// Reads the canonical JSON-lines form, re-validating all invariants.
    pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Corpus> {
        let mut dialogues = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<corpus jsonl>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let d: Dialogue = serde_json::from_str(&line).map_err(|e| Error::Json {
                context: format!("corpus line {}", lineno + 1),
                source: e,
            })?;
            // run the constructor validation
            let d = Dialogue::new(d.id, d.split, d.emotion, d.situation, d.turns)?;
            dialogues.push(d);
        }
        Corpus::from_dialogues(dialogues)
    }
}

struct SplitImport {
    dialogues: Vec<Dialogue>,
    report: FilterReport,
}

fn import_split<R: BufRead>(
    stream: R,
    split: Split,
    name: &str,
    options: &ImportOptions,
) -> Result<SplitImport> {
    // Quoting off: the layout escapes commas as "_comma_" and contains raw
    // unescaped double quotes.
    let mut reader = csv::ReaderBuilder::new()
        .quoting(false)
        .flexible(true)
        .has_headers(true)
        .from_reader(stream);

    let headers = reader
        .headers()
        .map_err(|e| Error::parse(name, 1, format!("unreadable header: {e}")))?
        .clone();
    let col = |wanted: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == wanted)
            .ok_or_else(|| Error::parse(name, 1, format!("missing required column {wanted:?}")))
    };
    let conv_col = col("conv_id")?;
    let idx_col = col("utterance_idx")?;
    let emo_col = col("context")?;
    let situ_col = col("prompt")?;
    let text_col = col("utterance")?;

    let mut report = FilterReport::default();
    let mut order: Vec<String> = Vec::new();
    let mut convs: HashMap<String, ConvAccum> = HashMap::new();

    for (recno, record) in reader.records().enumerate() {
        let lineno = recno + 2; // header is line 1
        let record =
            record.map_err(|e| Error::parse(name, lineno, format!("unreadable row: {e}")))?;
        report.rows_read += 1;

        let field = |i: usize| record.get(i).map(str::trim);
        let (Some(conv_id), Some(idx_raw), Some(emo_raw), Some(situ_raw), Some(text_raw)) = (
            field(conv_col),
            field(idx_col),
            field(emo_col),
            field(situ_col),
            field(text_col),
        ) else {
            report.rows_dropped_schema += 1;
            continue;
        };
        if conv_id.is_empty() {
            report.rows_dropped_schema += 1;
            continue;
        }

        // track the conversation even if this row is dropped, so fully
        // filtered dialogues are tallied
        if !convs.contains_key(conv_id) {
            order.push(conv_id.to_string());
            convs.insert(conv_id.to_string(), ConvAccum::default());
        }

        let Ok(utterance_idx) = idx_raw.parse::<u32>() else {
            report.rows_dropped_schema += 1;
            continue;
        };
        if utterance_idx == 0 {
            report.rows_dropped_schema += 1;
            continue;
        }
        let text = nfc(&unescape_commas(text_raw));
        let situation = nfc(&unescape_commas(situ_raw));
        if text.trim().is_empty() {
            report.rows_dropped_schema += 1;
            continue;
        }
        let emotion = match emo_raw.parse::<EmotionLabel>() {
            Ok(e) => e,
            Err(_) => {
                report.rows_dropped_unknown_emotion += 1;
                continue;
            }
        };
        if options
            .malformed_keywords
            .iter()
            .any(|k| text.contains(k.as_str()) || situation.contains(k.as_str()))
        {
            report.rows_dropped_keyword += 1;
            continue;
        }

        let accum = convs.get_mut(conv_id).expect("registered above");
        if accum.rows.iter().any(|r| r.utterance_idx == utterance_idx) {
            report.rows_dropped_duplicate += 1;
            continue;
        }
        accum.rows.push(RawRow {
            utterance_idx,
            emotion,
            situation,
            text,
        });
    }

    let mut dialogues = Vec::new();
    for conv_id in order {
        let mut accum = convs.remove(&conv_id).expect("tracked");
        if accum.rows.is_empty() {
            report.dialogues_dropped_empty += 1;
            continue;
        }
        accum.rows.sort_by_key(|r| r.utterance_idx);
        let contiguous = accum
            .rows
            .iter()
            .enumerate()
            .all(|(i, r)| r.utterance_idx == (i + 1) as u32);
        if !contiguous {
            report.dialogues_dropped_gap += 1;
            continue;
        }
        // emotion and situation come from the first row of the conversation
        let emotion = accum.rows[0].emotion;
        let situation = accum.rows[0].situation.clone();
        let turns: Vec<Turn> = accum
            .rows
            .iter()
            .map(|r| Turn::new(r.utterance_idx, r.text.clone()).expect("validated above"))
            .collect();
        dialogues.push(Dialogue::new(conv_id, split, emotion, situation, turns)?);
    }

    Ok(SplitImport { dialogues, report })
}
