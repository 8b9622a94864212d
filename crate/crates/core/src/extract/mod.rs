//! Conversation-level concept extraction with optional utterance filtering.

pub mod attn;
mod dictionary;
mod labels;
mod matcher;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use crate::corpus::{Conversation, Task};
use crate::error::{Error, Result};
use crate::eval::{extraction_f1, fmt_sig, ExtractionScore};
use crate::text::tokenize;

pub use dictionary::{ConceptDictionary, ConceptEntry};
pub use labels::{ExtractionLabelMap, OTHERS};
pub use matcher::{match_concepts, mentions_to_semantic_types, similarity, ConceptMention, DEFAULT_JACCARD_MIN};

/// Which utterances reach the extractor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterMode {
    AllText,
    /// Predicted medical relevance >= tau.
    Mr,
    /// Predicted probability of one category >= tau.
    Category(Task),
    /// Gold relevance.
    OracleMr,
    /// Gold category label.
    OracleCategory(Task),
}

impl FilterMode {
    pub fn is_oracle(self) -> bool {
        matches!(self, FilterMode::OracleMr | FilterMode::OracleCategory(_))
    }

    pub fn needs_scores(self) -> bool {
        matches!(self, FilterMode::Mr | FilterMode::Category(_))
    }

    /// Short name used in CSV output and on the command line.
    pub fn name(self) -> &'static str {
        match self {
            FilterMode::AllText => "all-text",
            FilterMode::Mr => "mr",
            FilterMode::Category(_) => "category",
            FilterMode::OracleMr => "oracle-mr",
            FilterMode::OracleCategory(_) => "oracle-category",
        }
    }

    /// Parses a mode name; category modes take `task`.
    pub fn parse(name: &str, task: Task) -> Result<Self> {
        Ok(match name {
            "all-text" => FilterMode::AllText,
            "mr" => FilterMode::Mr,
            "category" => FilterMode::Category(task),
            "oracle-mr" => FilterMode::OracleMr,
            "oracle-category" => FilterMode::OracleCategory(task),
            other => return Err(Error::invalid(format!("unknown filter mode {other:?}"))),
        })
    }
}

impl fmt::Display for FilterMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How the MR filter reads relevance.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum MrSource {
    /// The coarse head's p(relevant); falls back to `FineUnion` for models
    /// without one.
    #[default]
    Coarse,
    /// The largest of the three fine probabilities.
    FineUnion,
}

impl FromStr for MrSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "coarse" => Ok(MrSource::Coarse),
            "fine-union" => Ok(MrSource::FineUnion),
            other => Err(Error::invalid(format!("unknown MR source {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterSpec {
    pub mode: FilterMode,
    /// Ignored by the oracle modes and all-text.
    pub tau: f64,
    pub mr_source: MrSource,
}

impl FilterSpec {
    pub fn new(mode: FilterMode, tau: f64) -> Self {
        Self {
            mode,
            tau,
            mr_source: MrSource::Coarse,
        }
    }
}

/// Classifier output for one conversation.
#[derive(Debug, Clone, PartialEq)]
pub struct ConversationScores {
    pub fine: Vec<[f64; 3]>,
    pub relevant: Option<Vec<f64>>,
}

impl ConversationScores {
    fn relevance(&self, i: usize, source: MrSource) -> f64 {
        match (source, &self.relevant) {
            (MrSource::Coarse, Some(r)) => r[i],
            _ => self.fine[i].iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// Indices of the utterances kept by `spec`.
pub fn filter_utterances(
    conv: &Conversation,
    scores: Option<&ConversationScores>,
    spec: &FilterSpec,
) -> Result<Vec<usize>> {
    let n = conv.len();
    let scores = match (spec.mode.needs_scores(), scores) {
        (true, None) => {
            return Err(Error::invalid(format!(
                "filter mode {} needs classifier probabilities",
                spec.mode
            )))
        }
        (true, Some(s)) if s.fine.len() != n || s.relevant.as_ref().is_some_and(|r| r.len() != n) => {
            return Err(Error::shape(format!(
                "conversation {} has {n} utterances but {} scores",
                conv.id,
                s.fine.len()
            )))
        }
        (_, s) => s,
    };
    let keep = |i: usize| -> bool {
        let u = &conv.utterances[i];
        match spec.mode {
            FilterMode::AllText => true,
            FilterMode::Mr => scores.expect("checked").relevance(i, spec.mr_source) >= spec.tau,
            FilterMode::Category(t) => scores.expect("checked").fine[i][t.index()] >= spec.tau,
            FilterMode::OracleMr => u.labels.relevant(),
            FilterMode::OracleCategory(t) => u.labels.get(t),
        }
    };
    Ok((0..n).filter(|&i| keep(i)).collect())
}

/// Labels contributed by one utterance: exact mentions of `task` concepts.
fn utterance_labels(text: &str, dict: &ConceptDictionary, task: Task) -> BTreeSet<String> {
    matcher::match_tokens(&tokenize(text), 0, dict, 1.0)
        .into_iter()
        .filter(|m| m.task == task && m.is_exact())
        .filter_map(|m| dict.entry(m.entry).extraction_label().map(str::to_string))
        .collect()
}

/// Labels predicted for `task` from the utterances in `subset`.
pub fn extract_labels(
    conv: &Conversation,
    subset: &[usize],
    dict: &ConceptDictionary,
    label_map: &ExtractionLabelMap,
    task: Task,
) -> Result<BTreeSet<String>> {
    let mut out = BTreeSet::new();
    for &i in subset {
        let u = conv
            .utterances
            .get(i)
            .ok_or_else(|| Error::invalid(format!("utterance {i} outside conversation {}", conv.id)))?;
        for l in utterance_labels(&u.text, dict, task) {
            if !label_map.contains(task, &l) {
                return Err(Error::invalid(format!("dictionary label {l:?} is not a {task} label")));
            }
            out.insert(l);
        }
    }
    Ok(out)
}

/// Filters each conversation and extracts its labels.
pub fn extract_corpus(
    convs: &[Conversation],
    scores: Option<&[ConversationScores]>,
    spec: &FilterSpec,
    dict: &ConceptDictionary,
    label_map: &ExtractionLabelMap,
    task: Task,
) -> Result<Vec<BTreeSet<String>>> {
    convs
        .iter()
        .enumerate()
        .map(|(c, conv)| {
            let s = scores.map(|s| &s[c]);
            let subset = filter_utterances(conv, s, spec)?;
            extract_labels(conv, &subset, dict, label_map, task)
        })
        .collect()
}

/// Scores predicted label sets against each conversation's gold labels.
pub fn score_extraction(
    convs: &[Conversation],
    predicted: &[BTreeSet<String>],
    label_map: &ExtractionLabelMap,
    task: Task,
) -> Result<ExtractionScore> {
    let gold: Vec<BTreeSet<String>> = convs.iter().map(|c| c.gold_extraction.get(task).clone()).collect();
    extraction_f1(predicted, &gold, label_map.labels(task))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub mode: FilterMode,
    pub tau: f64,
    pub micro_f1: f64,
    pub macro_f1: f64,
    /// Best micro F1 of its mode (first such tau on ties).
    pub best: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSweep {
    pub rows: Vec<SweepRow>,
}

impl ThresholdSweep {
    /// Header `mode,tau,micro_f1,macro_f1,best`; `best` is 1 on each mode's
    /// argmax row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("mode,tau,micro_f1,macro_f1,best\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.mode,
                fmt_sig(r.tau),
                fmt_sig(r.micro_f1),
                fmt_sig(r.macro_f1),
                r.best as u8
            ));
        }
        out
    }

    pub fn best(&self, mode: FilterMode) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.mode == mode && r.best)
    }
}

/// Extraction scores for every tau under the MR and Category(task) modes.
pub fn threshold_sweep(
    convs: &[Conversation],
    scores: &[ConversationScores],
    dict: &ConceptDictionary,
    label_map: &ExtractionLabelMap,
    task: Task,
    taus: &[f64],
    mr_source: MrSource,
) -> Result<ThresholdSweep> {
    if scores.len() != convs.len() {
        return Err(Error::shape(format!("{} score sets for {} conversations", scores.len(), convs.len())));
    }
    if let Some(t) = taus.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::invalid(format!("threshold {t} outside [0, 1]")));
    }
    // labels per utterance, computed once
    let per_utt: Vec<Vec<BTreeSet<String>>> = convs
        .iter()
        .map(|c| c.utterances.iter().map(|u| utterance_labels(&u.text, dict, task)).collect())
        .collect();
    let mut rows = Vec::new();
    for mode in [FilterMode::Mr, FilterMode::Category(task)] {
        let start = rows.len();
        for &tau in taus {
            let spec = FilterSpec { mode, tau, mr_source };
            let mut predicted = Vec::with_capacity(convs.len());
            for (c, conv) in convs.iter().enumerate() {
                let subset = filter_utterances(conv, Some(&scores[c]), &spec)?;
                predicted.push(subset.iter().flat_map(|&i| per_utt[c][i].iter().cloned()).collect());
            }
            let s = score_extraction(convs, &predicted, label_map, task)?;
            rows.push(SweepRow {
                mode,
                tau,
                micro_f1: s.micro_f1,
                macro_f1: s.macro_f1,
                best: false,
            });
        }
        let best = (start..rows.len()).fold(None, |acc: Option<usize>, i| match acc {
            Some(b) if rows[b].micro_f1 >= rows[i].micro_f1 => Some(b),
            _ => Some(i),
        });
        if let Some(b) = best {
            rows[b].best = true;
        }
    }
    Ok(ThresholdSweep { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{FineLabelSet, GoldExtraction, SpeakerRole, Utterance};

    fn conv() -> Conversation {
        let lines = [
            ("how are you", FineLabelSet::default()),
            ("i take metformin daily", FineLabelSet::default().with(Task::Med)),
            ("my heart palpitations are back", FineLabelSet::default().with(Task::Sym)),
            ("ibuprofen is not rough on the stomach", FineLabelSet::default()),
            ("keep taking lisinopril", FineLabelSet::default().with(Task::Med)),
        ];
        Conversation {
            id: "t".into(),
            utterances: lines
                .iter()
                .enumerate()
                .map(|(i, (t, l))| Utterance {
                    index: i,
                    speaker: SpeakerRole::Doctor,
                    text: t.to_string(),
                    labels: *l,
                })
                .collect(),
            gold_extraction: GoldExtraction::default(),
        }
    }

    fn scores() -> ConversationScores {
        ConversationScores {
            fine: vec![[0.1, 0.1, 0.1], [0.2, 0.1, 0.9], [0.8, 0.1, 0.2], [0.1, 0.1, 0.4], [0.1, 0.1, 1.0]],
            relevant: Some(vec![0.1, 0.9, 0.9, 0.3, 1.0]),
        }
    }

    #[test]
    fn filter_boundaries() {
        let c = conv();
        let s = scores();
        let all = filter_utterances(&c, Some(&s), &FilterSpec::new(FilterMode::Mr, 0.0)).unwrap();
        assert_eq!(all, vec![0, 1, 2, 3, 4]);
        let one = filter_utterances(&c, Some(&s), &FilterSpec::new(FilterMode::Mr, 1.0)).unwrap();
        assert_eq!(one, vec![4]);
        let med = filter_utterances(&c, None, &FilterSpec::new(FilterMode::OracleCategory(Task::Med), 0.5)).unwrap();
        assert_eq!(med, vec![1, 4]);
        let mr = filter_utterances(&c, None, &FilterSpec::new(FilterMode::OracleMr, 0.5)).unwrap();
        assert_eq!(mr, vec![1, 2, 4]);
        assert!(filter_utterances(&c, None, &FilterSpec::new(FilterMode::Category(Task::Med), 0.5)).is_err());
        let cat = filter_utterances(&c, Some(&s), &FilterSpec::new(FilterMode::Category(Task::Med), 0.5)).unwrap();
        assert_eq!(cat, vec![1, 4]);
    }

    #[test]
    fn fine_union_source() {
        let c = conv();
        let mut s = scores();
        let spec = FilterSpec {
            mode: FilterMode::Mr,
            tau: 0.35,
            mr_source: MrSource::FineUnion,
        };
        assert_eq!(filter_utterances(&c, Some(&s), &spec).unwrap(), vec![1, 2, 3, 4]);
        s.relevant = None;
        let coarse = FilterSpec::new(FilterMode::Mr, 0.35);
        assert_eq!(filter_utterances(&c, Some(&s), &coarse).unwrap(), vec![1, 2, 3, 4]);
    }

    #[test]
    fn decoy_is_removed_by_filtering() {
        let c = conv();
        let dict = ConceptDictionary::builtin();
        let map = ExtractionLabelMap::standard();
        let everything = extract_labels(&c, &[0, 1, 2, 3, 4], &dict, &map, Task::Med).unwrap();
        let filtered = extract_labels(&c, &[1, 4], &dict, &map, Task::Med).unwrap();
        assert!(filtered.is_subset(&everything));
        assert!(everything.len() > filtered.len(), "{everything:?} vs {filtered:?}");
        assert!(extract_labels(&c, &[], &dict, &map, Task::Med).unwrap().is_empty());
        let sym = extract_labels(&c, &[2], &dict, &map, Task::Sym).unwrap();
        assert_eq!(sym.into_iter().collect::<Vec<_>>(), vec!["Cardiovascular".to_string()]);
    }

    #[test]
    fn sweep_rows_and_identity() {
        let mut c = conv();
        let dict = ConceptDictionary::builtin();
        let map = ExtractionLabelMap::standard();
        let labels = extract_labels(&c, &[1, 4], &dict, &map, Task::Med).unwrap();
        *c.gold_extraction.get_mut(Task::Med) = labels;
        let convs = vec![c];
        let s = vec![scores()];
        let sweep = threshold_sweep(&convs, &s, &dict, &map, Task::Med, &[0.0, 0.5, 1.0], MrSource::Coarse).unwrap();
        assert_eq!(sweep.rows.len(), 6);
        let all = extract_corpus(&convs, None, &FilterSpec::new(FilterMode::AllText, 0.0), &dict, &map, Task::Med).unwrap();
        let all_score = score_extraction(&convs, &all, &map, Task::Med).unwrap();
        assert_eq!(sweep.rows[0].micro_f1, all_score.micro_f1);
        assert_eq!(sweep.best(FilterMode::Category(Task::Med)).unwrap().micro_f1, 1.0);
        assert!(sweep.to_csv().starts_with("mode,tau,micro_f1,macro_f1,best\nmr,0,"));
        assert_eq!(sweep, threshold_sweep(&convs, &s, &dict, &map, Task::Med, &[0.0, 0.5, 1.0], MrSource::Coarse).unwrap());
    }
}
