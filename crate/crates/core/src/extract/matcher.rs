//! Sliding-window dictionary matcher.
//!
//! Every window of 1..=max_surface_len tokens is compared with the
//! dictionary. A window equal to a surface form scores similarity 1; other
//! windows score the Jaccard index of the two token sets. Overlapping spans
//! are resolved longest first, then leftmost.

use std::collections::{BTreeMap, HashSet};

use crate::corpus::{Conversation, Task};
use crate::text::tokenize;

use super::dictionary::ConceptDictionary;

/// QuickUMLS's default candidate threshold.
pub const DEFAULT_JACCARD_MIN: f64 = 0.7;

#[derive(Debug, Clone, PartialEq)]
pub struct ConceptMention {
    pub utterance: usize,
    /// Token span `[start, end)`.
    pub start: usize,
    pub end: usize,
    /// Window text as matched (normalized tokens joined by spaces).
    pub matched: String,
    /// Index into the dictionary entries.
    pub entry: usize,
    pub concept_id: String,
    pub semantic_type: usize,
    pub task: Task,
    pub similarity: f64,
}

impl ConceptMention {
    pub fn is_exact(&self) -> bool {
        self.similarity == 1.0
    }
}

/// Similarity between a window and a surface form. Equal sequences score 1;
/// anything else scores the token-set Jaccard index, kept strictly below 1.
pub fn similarity(window: &[String], surface: &[String]) -> f64 {
    if window == surface {
        return 1.0;
    }
    let a: HashSet<&String> = window.iter().collect();
    let b: HashSet<&String> = surface.iter().collect();
    let inter = a.intersection(&b).count();
    let union = a.union(&b).count();
    if union == 0 {
        return 0.0;
    }
    let j = inter as f64 / union as f64;
    j.min(1.0 - 1.0 / (union as f64 + 1.0))
}

/// Matches one utterance text. Mentions come back ordered by start token.
pub fn match_concepts(text: &str, dict: &ConceptDictionary, jaccard_min: f64) -> Vec<ConceptMention> {
    match_tokens(&tokenize(text), 0, dict, jaccard_min)
}

pub(crate) fn match_tokens(
    tokens: &[String],
    utterance: usize,
    dict: &ConceptDictionary,
    jaccard_min: f64,
) -> Vec<ConceptMention> {
    // span -> (best similarity, entries at that similarity)
    let mut spans: BTreeMap<(usize, usize), (f64, Vec<usize>)> = BTreeMap::new();
    let max_len = dict.max_surface_len();
    for start in 0..tokens.len() {
        for len in 1..=max_len.min(tokens.len() - start) {
            let window = &tokens[start..start + len];
            let mut best = 0.0;
            let mut hits: Vec<usize> = Vec::new();
            let mut consider = |entry: usize, sim: f64| {
                if sim < jaccard_min || sim < best {
                    return;
                }
                if sim > best {
                    best = sim;
                    hits.clear();
                }
                if !hits.contains(&entry) {
                    hits.push(entry);
                }
            };
            for &e in dict.exact(window) {
                consider(e, 1.0);
            }
            if jaccard_min < 1.0 {
                let mut cands: Vec<usize> = window
                    .iter()
                    .flat_map(|t| dict.sharing_token(t).iter().copied())
                    .collect();
                cands.sort_unstable();
                cands.dedup();
                for e in cands {
                    consider(e, similarity(window, &dict.entry(e).surface));
                }
            }
            if !hits.is_empty() {
                hits.sort_unstable();
                spans.insert((start, start + len), (best, hits));
            }
        }
    }

    let mut order: Vec<(usize, usize)> = spans.keys().copied().collect();
    order.sort_by(|a, b| (b.1 - b.0).cmp(&(a.1 - a.0)).then(a.0.cmp(&b.0)));
    let mut taken = vec![false; tokens.len()];
    let mut accepted = Vec::new();
    for (s, e) in order {
        if taken[s..e].iter().any(|t| *t) {
            continue;
        }
        taken[s..e].iter_mut().for_each(|t| *t = true);
        accepted.push((s, e));
    }
    accepted.sort_unstable();

    let mut out = Vec::new();
    for (s, e) in accepted {
        let (sim, entries) = &spans[&(s, e)];
        for &i in entries {
            let entry = dict.entry(i);
            out.push(ConceptMention {
                utterance,
                start: s,
                end: e,
                matched: tokens[s..e].join(" "),
                entry: i,
                concept_id: entry.concept_id.clone(),
                semantic_type: entry.semantic_type,
                task: entry.task,
                similarity: *sim,
            });
        }
    }
    out
}

/// Semantic-type ids of every mention (similarity >= `jaccard_min`) in each
/// utterance, in mention order. Repeated types are kept so averaging weights
/// them by frequency.
pub fn mentions_to_semantic_types(
    conv: &Conversation,
    dict: &ConceptDictionary,
    jaccard_min: f64,
) -> Vec<Vec<usize>> {
    conv.utterances
        .iter()
        .map(|u| {
            match_tokens(&tokenize(&u.text), u.index, dict, jaccard_min)
                .into_iter()
                .map(|m| m.semantic_type)
                .collect()
        })
        .collect()
}
