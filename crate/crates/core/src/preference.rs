//! Preference-pair construction from polar-opposite emotion groups.
//!
//! For every dialogue with a generation target, the target response is the
//! chosen completion and the rejected completion is drawn uniformly from the
//! same-split dialogues labeled with the polar opposite emotion. Draws are
//! keyed by (base seed, epoch, dialogue id), so each epoch re-draws fresh
//! rejected completions while the chosen side stays fixed, and rebuilding
//! with the same seed is byte-identical.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, EmotionLabel, Role, Split, Turn};
use crate::error::{Error, Result};
use crate::rng::KeyedStream;

/// Where an opposite-label pair comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableSource {
    Wheel,
    Dyads,
    Authors,
}

impl FromStr for TableSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wheel" => Ok(TableSource::Wheel),
            "dyads" => Ok(TableSource::Dyads),
            // the published table leaves author-proposed rows unattributed
            "authors" | "" => Ok(TableSource::Authors),
            other => Err(Error::InvalidTable(format!("unknown source {other:?}"))),
        }
    }
}

/// Total lookup table label -> (opposite label, source). Not symmetric by
/// construction: e.g. grateful -> disgusted while disgusted -> trusting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OppositeTable {
    entries: BTreeMap<EmotionLabel, (EmotionLabel, TableSource)>,
}

static DEFAULT_TABLE: OnceLock<OppositeTable> = OnceLock::new();

impl OppositeTable {
    /// The shipped default table (all 32 rows).
    pub fn default_table() -> &'static OppositeTable {
        DEFAULT_TABLE.get_or_init(|| {
            OppositeTable::from_csv(include_str!("../data/opposites.csv").as_bytes())
                .expect("shipped table is valid")
        })
    }

    /// Parses a table from CSV with columns label, opposite, source and
    /// validates totality, closure and the no-fixed-point invariant.
    pub fn from_csv<R: Read>(reader: R) -> Result<OppositeTable> {
        let mut csv_reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(reader);
        let mut entries = BTreeMap::new();
        for (i, record) in csv_reader.records().enumerate() {
            let record = record
                .map_err(|e| Error::InvalidTable(format!("row {}: {e}", i + 2)))?;
            if record.len() < 2 {
                return Err(Error::InvalidTable(format!(
                    "row {}: expected label,opposite[,source]",
                    i + 2
                )));
            }
            let label: EmotionLabel = record[0].trim().parse()?;
            let opposite: EmotionLabel = record[1].trim().parse()?;
            let source: TableSource = record.get(2).unwrap_or("").trim().parse()?;
            if entries.insert(label, (opposite, source)).is_some() {
                return Err(Error::InvalidTable(format!("duplicate row for {label}")));
            }
        }
        let table = OppositeTable { entries };
        table.validate()?;
        Ok(table)
    }

    fn validate(&self) -> Result<()> {
        for label in EmotionLabel::ALL {
            match self.entries.get(&label) {
                None => {
                    return Err(Error::InvalidTable(format!("missing row for {label}")));
                }
                Some((opposite, _)) if *opposite == label => {
                    return Err(Error::InvalidTable(format!("{label} maps to itself")));
                }
                Some(_) => {}
            }
        }
        Ok(())
    }

    pub fn opposite_of(&self, label: EmotionLabel) -> EmotionLabel {
        self.entries[&label].0
    }

    pub fn source_of(&self, label: EmotionLabel) -> TableSource {
        self.entries[&label].1
    }

    pub fn iter(&self) -> impl Iterator<Item = (EmotionLabel, EmotionLabel, TableSource)> + '_ {
        self.entries.iter().map(|(&l, &(o, s))| (l, o, s))
    }
}

/// Chat-style role used in serialized preference records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChatRole {
    User,
    Assistant,
}

impl From<Role> for ChatRole {
    fn from(role: Role) -> Self {
        match role {
            Role::Speaker => ChatRole::User,
            Role::Listener => ChatRole::Assistant,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextTurn {
    pub role: ChatRole,
    pub text: String,
}

/// One (context, chosen, rejected) training example with provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceExample {
    pub dialogue_id: String,
    pub epoch: u32,
    /// Derived per-draw stream key.
    pub seed: u64,
    pub emotion: EmotionLabel,
    pub opposite_emotion: EmotionLabel,
    pub rejected_source_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub system: Option<String>,
    pub context: Vec<ContextTurn>,
    pub chosen: String,
    pub rejected: String,
}

/// Multi-epoch build request.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EpochPlan {
    pub base_seed: u64,
    pub epochs: u32,
    pub split: Split,
}

/// Summary of one epoch build.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct BuildReport {
    pub examples: usize,
    /// Draws repeated once because the rejected text string-equaled the chosen.
    pub redraws: u64,
    /// Examples kept with chosen == rejected after the one re-draw.
    pub collisions_kept: u64,
    pub per_emotion: BTreeMap<EmotionLabel, usize>,
}

#[derive(Debug, Clone)]
pub struct EpochBuild {
    pub examples: Vec<PreferenceExample>,
    pub report: BuildReport,
}

/// Builds the preference examples of one epoch, in stable corpus order.
pub fn build_epoch(
    corpus: &Corpus,
    split: Split,
    epoch: u32,
    base_seed: u64,
    table: &OppositeTable,
    system: Option<&str>,
) -> Result<EpochBuild> {
    if !corpus.has_split(split) {
        return Err(Error::MissingSplit(split));
    }
    // Drawing pools: per label, same-split dialogues that have a target,
    // in stable corpus order.
    let mut pools: BTreeMap<EmotionLabel, Vec<&crate::corpus::Dialogue>> =
        EmotionLabel::ALL.iter().map(|&l| (l, Vec::new())).collect();
    for d in corpus.split_dialogues(split) {
        if d.has_target() {
            pools.get_mut(&d.emotion).expect("total map").push(d);
        }
    }

    let mut examples = Vec::new();
    let mut report = BuildReport::default();
    for d in corpus.split_dialogues(split) {
        let Some((context, target)) = d.last_response_target() else {
            continue;
        };
        let opposite = table.opposite_of(d.emotion);
        let pool = &pools[&opposite];
        if pool.is_empty() {
            return Err(Error::EmptyOppositeGroup {
                label: d.emotion.to_string(),
                opposite: opposite.to_string(),
                split,
            });
        }
        let mut stream = KeyedStream::for_example(base_seed, u64::from(epoch), &d.id);
        let seed = stream.key();
        let chosen = target.text.clone();
        let mut pick = pool[stream.next_below(pool.len() as u64) as usize];
        let mut rejected = rejected_text(pick);
        if rejected == chosen {
            report.redraws += 1;
            pick = pool[stream.next_below(pool.len() as u64) as usize];
            rejected = rejected_text(pick);
            if rejected == chosen {
                report.collisions_kept += 1;
            }
        }
        *report.per_emotion.entry(d.emotion).or_insert(0) += 1;
        examples.push(PreferenceExample {
            dialogue_id: d.id.clone(),
            epoch,
            seed,
            emotion: d.emotion,
            opposite_emotion: opposite,
            rejected_source_id: pick.id.clone(),
            system: system.map(str::to_string),
            context: context_turns(context),
            chosen,
            rejected,
        });
    }
    report.examples = examples.len();
    Ok(EpochBuild { examples, report })
}

fn rejected_text(d: &crate::corpus::Dialogue) -> String {
    let (_, target) = d
        .last_response_target()
        .expect("pool contains only dialogues with targets");
    target.text.clone()
}

fn context_turns(context: &[Turn]) -> Vec<ContextTurn> {
    context
        .iter()
        .map(|t| ContextTurn {
            role: t.role.into(),
            text: t.text.clone(),
        })
        .collect()
}

/// Builds all epochs of a plan. The chosen side is identical across epochs
/// per dialogue; only the rejected draws change.
pub fn build_multi_epoch(
    corpus: &Corpus,
    plan: &EpochPlan,
    table: &OppositeTable,
    system: Option<&str>,
) -> Result<Vec<EpochBuild>> {
    if plan.epochs == 0 {
        return Err(Error::EmptyInput("epoch plan with zero epochs".to_string()));
    }
    (0..plan.epochs)
        .map(|epoch| build_epoch(corpus, plan.split, epoch, plan.base_seed, table, system))
        .collect()
}

/// Writes examples as JSON-lines. No model-specific chat templating is
/// applied; roles map speaker -> user, listener -> assistant.
pub fn serialize_preferences<W: Write>(examples: &[PreferenceExample], mut sink: W) -> Result<()> {
    for ex in examples {
        let line = serde_json::to_string(ex).map_err(|e| Error::Json {
            context: format!("serializing example {}", ex.dialogue_id),
            source: e,
        })?;
        writeln!(sink, "{line}").map_err(|e| Error::io("<sink>", e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Dialogue;

    fn dialogue(id: &str, emotion: EmotionLabel, texts: &[&str]) -> Dialogue {
        let turns = texts
            .iter()
            .enumerate()
            .map(|(i, t)| Turn::new((i + 1) as u32, *t).unwrap())
            .collect();
        Dialogue::new(id, Split::Train, emotion, "situation", turns).unwrap()
    }

    fn two_dialogue_corpus() -> Corpus {
        Corpus::from_dialogues(vec![
            dialogue("a", EmotionLabel::Afraid, &["sa1", "la2"]),
            dialogue("b", EmotionLabel::Angry, &["sb1", "lb2"]),
        ])
        .unwrap()
    }

    /// 20 dialogues over afraid/angry, 10 each, so opposite groups have
    /// several members.
    fn twenty_dialogue_corpus() -> Corpus {
        let mut dialogues = Vec::new();
        for i in 0..10 {
            dialogues.push(dialogue(
                &format!("af{i}"),
                EmotionLabel::Afraid,
                &[&format!("afraid prompt {i}"), &format!("afraid reply {i}")],
            ));
            dialogues.push(dialogue(
                &format!("an{i}"),
                EmotionLabel::Angry,
                &[&format!("angry prompt {i}"), &format!("angry reply {i}")],
            ));
        }
        Corpus::from_dialogues(dialogues).unwrap()
    }

    #[test]
    fn default_table_is_total_and_fixed_point_free() {
        let t = OppositeTable::default_table();
        for label in EmotionLabel::ALL {
            let opp = t.opposite_of(label);
            assert_ne!(opp, label);
        }
        assert_eq!(t.iter().count(), 32);
    }

    #[test]
    fn table_spot_values() {
        let t = OppositeTable::default_table();
        assert_eq!(t.opposite_of(EmotionLabel::Afraid), EmotionLabel::Angry);
        assert_eq!(t.source_of(EmotionLabel::Afraid), TableSource::Wheel);
        assert_eq!(t.opposite_of(EmotionLabel::Proud), EmotionLabel::Ashamed);
        assert_eq!(t.source_of(EmotionLabel::Proud), TableSource::Dyads);
        assert_eq!(t.opposite_of(EmotionLabel::Lonely), EmotionLabel::Caring);
        assert_eq!(t.source_of(EmotionLabel::Lonely), TableSource::Authors);
        // asymmetry exists: grateful -> disgusted but disgusted -> trusting
        assert_eq!(t.opposite_of(EmotionLabel::Grateful), EmotionLabel::Disgusted);
        assert_eq!(t.opposite_of(EmotionLabel::Disgusted), EmotionLabel::Trusting);
    }

    #[test]
    fn table_rejects_fixed_point() {
        let csv = "label,opposite,source\nafraid,afraid,wheel\n";
        assert!(OppositeTable::from_csv(csv.as_bytes()).is_err());
    }

    #[test]
    fn table_rejects_partial_table() {
        let csv = "label,opposite,source\nafraid,angry,wheel\n";
        let err = OppositeTable::from_csv(csv.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("missing row"));
    }

    #[test]
    fn singleton_groups_force_mutual_draw() {
        let corpus = two_dialogue_corpus();
        let build = build_epoch(
            &corpus,
            Split::Train,
            0,
            42,
            OppositeTable::default_table(),
            None,
        )
        .unwrap();
        assert_eq!(build.examples.len(), 2);
        let a = &build.examples[0];
        let b = &build.examples[1];
        assert_eq!(a.dialogue_id, "a");
        assert_eq!(a.chosen, "la2");
        assert_eq!(a.rejected, "lb2");
        assert_eq!(a.rejected_source_id, "b");
        assert_eq!(b.rejected, "la2");
        assert_eq!(b.rejected_source_id, "a");
    }

    #[test]
    fn build_is_deterministic() {
        let corpus = twenty_dialogue_corpus();
        let t = OppositeTable::default_table();
        let one = build_epoch(&corpus, Split::Train, 0, 7, t, None).unwrap();
        let two = build_epoch(&corpus, Split::Train, 0, 7, t, None).unwrap();
        let mut buf1 = Vec::new();
        let mut buf2 = Vec::new();
        serialize_preferences(&one.examples, &mut buf1).unwrap();
        serialize_preferences(&two.examples, &mut buf2).unwrap();
        assert_eq!(buf1, buf2);
    }

    #[test]
    fn epochs_redraw_rejected_but_keep_chosen() {
        let corpus = twenty_dialogue_corpus();
        let t = OppositeTable::default_table();
        let e0 = build_epoch(&corpus, Split::Train, 0, 7, t, None).unwrap();
        let e1 = build_epoch(&corpus, Split::Train, 1, 7, t, None).unwrap();
        let chosen0: Vec<(&str, &str)> = e0
            .examples
            .iter()
            .map(|e| (e.dialogue_id.as_str(), e.chosen.as_str()))
            .collect();
        let chosen1: Vec<(&str, &str)> = e1
            .examples
            .iter()
            .map(|e| (e.dialogue_id.as_str(), e.chosen.as_str()))
            .collect();
        assert_eq!(chosen0, chosen1);
        let differing = e0
            .examples
            .iter()
            .zip(&e1.examples)
            .filter(|(x, y)| x.rejected != y.rejected)
            .count();
        assert!(differing > 0, "fresh draws should change at least one rejected");
    }

    #[test]
    fn invariants_hold_on_every_example() {
        let corpus = twenty_dialogue_corpus();
        let t = OppositeTable::default_table();
        let build = build_epoch(&corpus, Split::Train, 3, 99, t, None).unwrap();
        for ex in &build.examples {
            let source = corpus.get(&ex.dialogue_id).unwrap();
            let rejected_source = corpus.get(&ex.rejected_source_id).unwrap();
            assert_eq!(ex.opposite_emotion, t.opposite_of(ex.emotion));
            assert_eq!(rejected_source.emotion, ex.opposite_emotion);
            assert_eq!(rejected_source.split, source.split);
            let (_, target) = source.last_response_target().unwrap();
            assert_eq!(ex.chosen, target.text);
            let (_, rtarget) = rejected_source.last_response_target().unwrap();
            assert_eq!(ex.rejected, rtarget.text);
            assert_ne!(ex.chosen, ex.rejected);
        }
    }

    #[test]
    fn multi_epoch_concatenates_per_epoch_builds() {
        let corpus = two_dialogue_corpus();
        let t = OppositeTable::default_table();
        let plan = EpochPlan {
            base_seed: 5,
            epochs: 3,
            split: Split::Train,
        };
        let builds = build_multi_epoch(&corpus, &plan, t, None).unwrap();
        assert_eq!(builds.len(), 3);
        // singleton groups: all epochs identical up to the epoch field
        for b in &builds {
            assert_eq!(b.examples.len(), 2);
            assert_eq!(b.examples[0].rejected, "lb2");
        }
        let single = build_epoch(&corpus, Split::Train, 0, 5, t, None).unwrap();
        assert_eq!(builds[0].examples, single.examples);
    }

    #[test]
    fn zero_epochs_is_an_error() {
        let corpus = two_dialogue_corpus();
        let plan = EpochPlan {
            base_seed: 5,
            epochs: 0,
            split: Split::Train,
        };
        assert!(build_multi_epoch(&corpus, &plan, OppositeTable::default_table(), None).is_err());
    }

    #[test]
    fn empty_opposite_group_errors_with_label() {
        // only afraid dialogues: its opposite group (angry) is empty
        let corpus = Corpus::from_dialogues(vec![dialogue(
            "a",
            EmotionLabel::Afraid,
            &["s1", "l2"],
        )])
        .unwrap();
        let err = build_epoch(
            &corpus,
            Split::Train,
            0,
            1,
            OppositeTable::default_table(),
            None,
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("angry"), "error should name the empty group: {msg}");
    }

    #[test]
    fn collision_redraw_is_tallied() {
        // every dialogue shares the same target text, so every draw collides
        let corpus = Corpus::from_dialogues(vec![
            dialogue("a", EmotionLabel::Afraid, &["sa", "same reply"]),
            dialogue("b", EmotionLabel::Angry, &["sb", "same reply"]),
            dialogue("c", EmotionLabel::Angry, &["sc", "same reply"]),
        ])
        .unwrap();
        let build = build_epoch(
            &corpus,
            Split::Train,
            0,
            1,
            OppositeTable::default_table(),
            None,
        )
        .unwrap();
        // every example's pool contains only "same reply" targets, so all
        // three collide, re-draw once, and are kept with a tally
        let a = build
            .examples
            .iter()
            .find(|e| e.dialogue_id == "a")
            .unwrap();
        assert_eq!(a.chosen, "same reply");
        assert_eq!(a.rejected, "same reply");
        assert_eq!(build.report.redraws, 3);
        assert_eq!(build.report.collisions_kept, 3);
    }

    #[test]
    fn serialization_schema_and_role_mapping() {
        let corpus = two_dialogue_corpus();
        let build = build_epoch(
            &corpus,
            Split::Train,
            0,
            42,
            OppositeTable::default_table(),
            Some("be kind"),
        )
        .unwrap();
        let mut buf = Vec::new();
        serialize_preferences(&build.examples, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        let v: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
        assert_eq!(v["dialogue_id"], "a");
        assert_eq!(v["epoch"], 0);
        assert_eq!(v["emotion"], "afraid");
        assert_eq!(v["opposite_emotion"], "angry");
        assert_eq!(v["rejected_source_id"], "b");
        assert_eq!(v["system"], "be kind");
        assert_eq!(v["context"][0]["role"], "user");
        assert_eq!(v["context"][0]["text"], "sa1");
        assert_eq!(v["chosen"], "la2");
        assert_eq!(v["rejected"], "lb2");
        // round-trip
        let back: PreferenceExample = serde_json::from_str(lines[0]).unwrap();
        assert_eq!(back, build.examples[0]);
    }

    #[test]
    fn system_absent_when_not_given() {
        let corpus = two_dialogue_corpus();
        let build = build_epoch(
            &corpus,
            Split::Train,
            0,
            42,
            OppositeTable::default_table(),
            None,
        )
        .unwrap();
        let mut buf = Vec::new();
        serialize_preferences(&build.examples, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(!text.contains("\"system\""));
    }

    #[test]
    fn empty_example_list_writes_empty_file() {
        let mut buf = Vec::new();
        serialize_preferences(&[], &mut buf).unwrap();
        assert!(buf.is_empty());
    }
}
