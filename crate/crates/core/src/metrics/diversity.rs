//! Response-trie diversity metrics.
//!
//! A token-level trie is built over all responses, then folded: every
//! maximal chain of single-child, non-terminal nodes collapses into one
//! span node carrying the concatenated token sequence. The ratio between
//! the trie sizes before and after folding measures repetitiveness.

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::metrics::feature::Token;

/// Trie node. Unfolded payloads have length 1; after folding a payload of
/// length > 1 marks a span node. The root has an empty payload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrieNode {
    pub payload: Vec<Token>,
    pub children: BTreeMap<Token, TrieNode>,
    /// Responses ending exactly at this node.
    pub terminal_count: usize,
}

impl TrieNode {
    fn new(payload: Vec<Token>) -> TrieNode {
        TrieNode {
            payload,
            children: BTreeMap::new(),
            terminal_count: 0,
        }
    }

    pub fn root() -> TrieNode {
        TrieNode::new(Vec::new())
    }

    /// Node count excluding the root ("size of trie").
    pub fn size(&self) -> usize {
        self.children
            .values()
            .map(|c| 1 + c.size())
            .sum()
    }

    /// Folded nodes whose payload spans more than one token.
    pub fn span_node_count(&self) -> usize {
        let own = usize::from(self.payload.len() > 1);
        own + self
            .children
            .values()
            .map(TrieNode::span_node_count)
            .sum::<usize>()
    }

    /// Sum of terminal counts over the whole trie; equals the number of
    /// responses inserted.
    pub fn total_terminals(&self) -> usize {
        self.terminal_count
            + self
                .children
                .values()
                .map(TrieNode::total_terminals)
                .sum::<usize>()
    }
}

/// Builds the unfolded token trie. Responses must be non-empty token lists;
/// the caller counts and excludes empty ones.
pub fn build_trie(responses: &[Vec<Token>]) -> TrieNode {
    let mut root = TrieNode::root();
    for response in responses {
        debug_assert!(!response.is_empty(), "empty responses are excluded upstream");
        let mut node = &mut root;
        for token in response {
            node = node
                .children
                .entry(token.clone())
                .or_insert_with(|| TrieNode::new(vec![token.clone()]));
        }
        node.terminal_count += 1;
    }
    root
}

/// Collapses every maximal chain of nodes that each have exactly one child
/// and no terminals (except possibly the chain's last node) into a single
/// span node. Terminal counts are preserved, so the represented language is
/// unchanged.
pub fn fold(root: &TrieNode) -> TrieNode {
    let mut folded = TrieNode::root();
    folded.terminal_count = root.terminal_count;
    for child in root.children.values() {
        let new_child = fold_chain(child);
        let key = new_child.payload[0].clone();
        folded.children.insert(key, new_child);
    }
    folded
}

fn fold_chain(node: &TrieNode) -> TrieNode {
    let mut payload = node.payload.clone();
    let mut cursor = node;
    // absorb single-child descendants until a terminal or a branch
    while cursor.terminal_count == 0 && cursor.children.len() == 1 {
        cursor = cursor.children.values().next().expect("len checked");
        payload.extend(cursor.payload.iter().cloned());
    }
    let mut out = TrieNode::new(payload);
    out.terminal_count = cursor.terminal_count;
    for child in cursor.children.values() {
        let new_child = fold_chain(child);
        let key = new_child.payload[0].clone();
        out.children.insert(key, new_child);
    }
    out
}

/// The five diversity statistics plus their bookkeeping counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    pub n_responses: usize,
    /// Responses that tokenize to nothing; excluded from the trie.
    pub n_empty_token_responses: usize,
    /// Distinct raw response strings (NFC-normalized, trimmed).
    pub templates: usize,
    pub templates_pct: f64,
    /// Distinct token sequences, as a diagnostic next to raw templates.
    pub unique_token_sequences: usize,
    pub total_nodes_unfolded: usize,
    pub folded_nodes_total: usize,
    pub span_nodes_folded: usize,
    /// Span nodes as a percentage of the unfolded node count.
    pub span_node_pct: f64,
    pub root_children_folded: usize,
    pub root_children_pct: f64,
    pub compression_pct: f64,
    pub unique_start_words: usize,
}

/// Builds the full diversity report for a set of raw response strings.
pub fn diversity_report<F>(responses: &[String], tokenizer: F) -> Result<DiversityReport>
where
    F: Fn(&str) -> Vec<Token>,
{
    if responses.is_empty() {
        return Err(Error::EmptyInput("diversity_report input".to_string()));
    }
    let n_responses = responses.len();
    let normalized: Vec<String> = responses
        .iter()
        .map(|r| r.nfc().collect::<String>().trim().to_string())
        .collect();
    let templates = normalized.iter().collect::<BTreeSet<_>>().len();

    let tokenized: Vec<Vec<Token>> = normalized.iter().map(|r| tokenizer(r)).collect();
    let (non_empty, empty): (Vec<_>, Vec<_>) = tokenized.into_iter().partition(|t| !t.is_empty());
    let n_empty_token_responses = empty.len();
    let unique_token_sequences = non_empty.iter().collect::<BTreeSet<_>>().len();
    let unique_start_words = non_empty
        .iter()
        .map(|t| &t[0])
        .collect::<BTreeSet<_>>()
        .len();

    let unfolded = build_trie(&non_empty);
    let folded = fold(&unfolded);
    let total_nodes_unfolded = unfolded.size();
    let folded_nodes_total = folded.size();
    let span_nodes_folded = folded.span_node_count();
    let root_children_folded = folded.children.len();

    let pct = |num: usize, den: usize| {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64 * 100.0
        }
    };
    let compression_pct = if total_nodes_unfolded > 0 {
        (1.0 - folded_nodes_total as f64 / total_nodes_unfolded as f64) * 100.0
    } else {
        0.0
    };

    Ok(DiversityReport {
        n_responses,
        n_empty_token_responses,
        templates,
        templates_pct: pct(templates, n_responses),
        unique_token_sequences,
        total_nodes_unfolded,
        folded_nodes_total,
        span_nodes_folded,
        span_node_pct: pct(span_nodes_folded, total_nodes_unfolded),
        root_children_folded,
        root_children_pct: pct(root_children_folded, n_responses),
        compression_pct,
        unique_start_words,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::feature::tokenize;

    fn tok(rs: &[&str]) -> Vec<Vec<Token>> {
        rs.iter().map(|r| tokenize(r)).collect()
    }

    /// Reads back the multiset of token sequences stored in a trie,
    /// expanding span payloads and repeating per terminal count.
    fn sequences(node: &TrieNode, prefix: &[String], out: &mut Vec<Vec<String>>) {
        let mut here: Vec<String> = prefix.to_vec();
        here.extend(node.payload.iter().map(|t| t.as_str().to_string()));
        for _ in 0..node.terminal_count {
            out.push(here.clone());
        }
        for child in node.children.values() {
            sequences(child, &here, out);
        }
    }

    fn language(root: &TrieNode) -> Vec<Vec<String>> {
        let mut out = Vec::new();
        sequences(root, &[], &mut out);
        out.sort();
        out
    }

    #[test]
    fn hand_drawn_trie() {
        let responses = tok(&["i am sorry", "i am glad", "great job"]);
        let root = build_trie(&responses);
        assert_eq!(root.size(), 6);
        assert_eq!(root.children.len(), 2);
        assert_eq!(root.total_terminals(), 3);

        let folded = fold(&root);
        assert_eq!(folded.size(), 4);
        assert_eq!(folded.span_node_count(), 2);
        assert_eq!(folded.children.len(), 2);
        // span payloads
        let i_am = folded.children.values().find(|c| c.payload.len() == 2 && c.payload[0] == "i");
        assert!(i_am.is_some(), "span node 'i am' expected");
        assert_eq!(i_am.unwrap().payload[1], "am");
    }

    #[test]
    fn single_response_chain_collapses_fully() {
        let responses = tok(&["one two three four"]);
        let root = build_trie(&responses);
        assert_eq!(root.size(), 4);
        let folded = fold(&root);
        assert_eq!(folded.size(), 1);
        let only = folded.children.values().next().unwrap();
        assert_eq!(only.payload.len(), 4);
        assert_eq!(only.terminal_count, 1);
    }

    #[test]
    fn duplicates_increment_terminal_count() {
        let responses = tok(&["same reply", "same reply"]);
        let root = build_trie(&responses);
        assert_eq!(root.size(), 2);
        let folded = fold(&root);
        assert_eq!(folded.size(), 1);
        assert_eq!(folded.children.values().next().unwrap().terminal_count, 2);
    }

    #[test]
    fn distinct_single_tokens_fold_to_identity() {
        let responses = tok(&["a", "b", "c"]);
        let root = build_trie(&responses);
        let folded = fold(&root);
        assert_eq!(root.size(), 3);
        assert_eq!(folded.size(), 3);
        assert_eq!(folded.span_node_count(), 0);
    }

    #[test]
    fn mid_chain_terminal_blocks_folding() {
        // "i am" ends where "i am sorry" continues: the terminal at "am"
        // cannot be absorbed
        let responses = tok(&["i am", "i am sorry"]);
        let root = build_trie(&responses);
        assert_eq!(root.size(), 3);
        let folded = fold(&root);
        // "i" folds into "i am" (chain of non-terminals), which is terminal,
        // then "sorry" hangs off it
        assert_eq!(folded.size(), 2);
        assert_eq!(language(&root), language(&folded));
    }

    #[test]
    fn language_preservation_and_idempotence() {
        let responses = tok(&[
            "i am so sorry",
            "i am so glad",
            "i am here",
            "that is great",
            "that is great news",
            "wow",
            "wow",
        ]);
        let root = build_trie(&responses);
        let folded = fold(&root);
        let mut input: Vec<Vec<String>> = responses
            .iter()
            .map(|r| r.iter().map(|t| t.as_str().to_string()).collect())
            .collect();
        input.sort();
        assert_eq!(language(&root), input);
        assert_eq!(language(&folded), input);
        assert_eq!(fold(&folded), folded);
        assert!(folded.size() <= root.size());
    }

    #[test]
    fn report_hand_example() {
        let responses: Vec<String> = ["i am sorry", "i am glad", "great job"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let report = diversity_report(&responses, tokenize).unwrap();
        assert_eq!(report.n_responses, 3);
        assert_eq!(report.templates, 3);
        assert_eq!(report.templates_pct, 100.0);
        assert_eq!(report.unique_start_words, 2);
        assert_eq!(report.total_nodes_unfolded, 6);
        assert_eq!(report.folded_nodes_total, 4);
        assert_eq!(report.span_nodes_folded, 2);
        assert!((report.span_node_pct - 100.0 * 2.0 / 6.0).abs() < 1e-9);
        assert!((report.compression_pct - 100.0 * (1.0 - 4.0 / 6.0)).abs() < 1e-9);
        assert_eq!(report.root_children_folded, 2);
    }

    #[test]
    fn report_on_identical_responses() {
        let responses: Vec<String> =
            std::iter::repeat_n("so sorry to hear that".to_string(), 5).collect();
        let report = diversity_report(&responses, tokenize).unwrap();
        assert_eq!(report.templates, 1);
        assert_eq!(report.unique_start_words, 1);
        assert_eq!(report.root_children_folded, 1);
        assert_eq!(report.folded_nodes_total, 1);
    }

    #[test]
    fn report_counts_empty_token_responses() {
        let responses: Vec<String> = vec!["real words".into(), "?!".into(), "".into()];
        let report = diversity_report(&responses, tokenize).unwrap();
        assert_eq!(report.n_responses, 3);
        assert_eq!(report.n_empty_token_responses, 2);
        assert_eq!(report.total_nodes_unfolded, 2);
    }

    #[test]
    fn report_errors_on_empty_input() {
        assert!(diversity_report(&[], tokenize).is_err());
    }

    #[test]
    fn insertion_order_invariance() {
        let mut responses: Vec<String> = vec![
            "alpha beta gamma".into(),
            "alpha beta delta".into(),
            "omega".into(),
            "omega psi".into(),
        ];
        let a = diversity_report(&responses, tokenize).unwrap();
        responses.reverse();
        let b = diversity_report(&responses, tokenize).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn templates_use_raw_string_uniqueness() {
        // same token sequence, different raw strings
        let responses: Vec<String> = vec!["Hello there!".into(), "hello there".into()];
        let report = diversity_report(&responses, tokenize).unwrap();
        assert_eq!(report.templates, 2);
        assert_eq!(report.unique_token_sequences, 1);
    }
}
