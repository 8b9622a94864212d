//! Conversation data model and the JSONL corpus format.
//!
//! One conversation per line:
//!
//! ```text
//! {"id":"c0","utterances":[{"idx":0,"speaker":"DR","text":"...","labels":["SYM"]}],
//!  "gold_extraction":{"SYM":["Cardiovascular"],"MED":[],"COM":[]}}
//! ```

mod split;
mod stats;
pub mod synth;

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extract::ExtractionLabelMap;

pub use split::split_corpus;
pub use stats::{compute_stats, CategoryStats, CorpusStats};
pub use synth::{synth_generate, GeneratorProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SpeakerRole {
    Doctor,
    Patient,
    Other,
}

impl SpeakerRole {
    pub const ALL: [SpeakerRole; 3] = [SpeakerRole::Doctor, SpeakerRole::Patient, SpeakerRole::Other];

    pub fn index(self) -> usize {
        match self {
            SpeakerRole::Doctor => 0,
            SpeakerRole::Patient => 1,
            SpeakerRole::Other => 2,
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            SpeakerRole::Doctor => "DR",
            SpeakerRole::Patient => "PT",
            SpeakerRole::Other => "OT",
        }
    }
}

impl FromStr for SpeakerRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "DR" => Ok(SpeakerRole::Doctor),
            "PT" => Ok(SpeakerRole::Patient),
            "OT" => Ok(SpeakerRole::Other),
            other => Err(Error::invalid(format!("unknown speaker code {other:?}"))),
        }
    }
}

impl fmt::Display for SpeakerRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// Topic category of an utterance, also the extraction task it feeds.
///
/// The index order (symptoms, complaints, medications) is the order of the
/// fine classifier outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Task {
    Sym,
    Com,
    Med,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Sym, Task::Com, Task::Med];

    pub fn index(self) -> usize {
        match self {
            Task::Sym => 0,
            Task::Com => 1,
            Task::Med => 2,
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            Task::Sym => "SYM",
            Task::Com => "COM",
            Task::Med => "MED",
        }
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "SYM" => Ok(Task::Sym),
            "COM" => Ok(Task::Com),
            "MED" => Ok(Task::Med),
            _ => Err(Error::invalid(format!("unknown task {s:?}"))),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// Multi-label topic annotation. All false means medically irrelevant.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct FineLabelSet {
    pub symptoms: bool,
    pub complaints: bool,
    pub medications: bool,
}

impl FineLabelSet {
    pub fn get(&self, task: Task) -> bool {
        match task {
            Task::Sym => self.symptoms,
            Task::Com => self.complaints,
            Task::Med => self.medications,
        }
    }

    pub fn set(&mut self, task: Task, value: bool) {
        match task {
            Task::Sym => self.symptoms = value,
            Task::Com => self.complaints = value,
            Task::Med => self.medications = value,
        }
    }

    pub fn with(mut self, task: Task) -> Self {
        self.set(task, true);
        self
    }

    /// Coarse label: relevant iff any fine label is set.
    pub fn relevant(&self) -> bool {
        self.symptoms || self.complaints || self.medications
    }

    pub fn as_array(&self) -> [bool; 3] {
        [self.symptoms, self.complaints, self.medications]
    }

    pub fn tasks(&self) -> impl Iterator<Item = Task> + '_ {
        Task::ALL.into_iter().filter(|t| self.get(*t))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub index: usize,
    pub speaker: SpeakerRole,
    pub text: String,
    pub labels: FineLabelSet,
}

/// Conversation-level extraction labels for the three tasks.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GoldExtraction {
    pub sym: BTreeSet<String>,
    pub med: BTreeSet<String>,
    pub com: BTreeSet<String>,
}

impl GoldExtraction {
    pub fn get(&self, task: Task) -> &BTreeSet<String> {
        match task {
            Task::Sym => &self.sym,
            Task::Med => &self.med,
            Task::Com => &self.com,
        }
    }

    pub fn get_mut(&mut self, task: Task) -> &mut BTreeSet<String> {
        match task {
            Task::Sym => &mut self.sym,
            Task::Med => &mut self.med,
            Task::Com => &mut self.com,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conversation {
    pub id: String,
    pub utterances: Vec<Utterance>,
    pub gold_extraction: GoldExtraction,
}

impl Conversation {
    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn speakers(&self) -> Vec<SpeakerRole> {
        self.utterances.iter().map(|u| u.speaker).collect()
    }

    pub fn labels(&self) -> Vec<FineLabelSet> {
        self.utterances.iter().map(|u| u.labels).collect()
    }

    /// Checks the structural invariants against a label vocabulary.
    pub fn validate(&self, label_map: &ExtractionLabelMap) -> Result<()> {
        if self.utterances.is_empty() {
            return Err(Error::invalid(format!("conversation {:?} has no utterances", self.id)));
        }
        for (i, u) in self.utterances.iter().enumerate() {
            if u.index != i {
                return Err(Error::invalid(format!(
                    "conversation {:?}: utterance indices must be 0..n-1 without gaps (found {} at position {i})",
                    self.id, u.index
                )));
            }
        }
        for task in Task::ALL {
            for label in self.gold_extraction.get(task) {
                if !label_map.contains(task, label) {
                    return Err(Error::invalid(format!(
                        "conversation {:?}: unknown {task} label {label:?}",
                        self.id
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawUtterance {
    idx: usize,
    speaker: String,
    text: String,
    #[serde(default)]
    labels: Vec<String>,
}

#[derive(Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawGold {
    #[serde(rename = "SYM", default)]
    sym: Vec<String>,
    #[serde(rename = "MED", default)]
    med: Vec<String>,
    #[serde(rename = "COM", default)]
    com: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConversation {
    id: String,
    utterances: Vec<RawUtterance>,
    #[serde(default)]
    gold_extraction: RawGold,
}

impl RawConversation {
    fn into_conversation(self) -> Result<Conversation> {
        let utterances = self
            .utterances
            .into_iter()
            .map(|u| {
                let mut labels = FineLabelSet::default();
                for l in &u.labels {
                    labels.set(l.parse()?, true);
                }
                Ok(Utterance {
                    index: u.idx,
                    speaker: u.speaker.parse()?,
                    text: u.text,
                    labels,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Conversation {
            id: self.id,
            utterances,
            gold_extraction: GoldExtraction {
                sym: self.gold_extraction.sym.into_iter().collect(),
                med: self.gold_extraction.med.into_iter().collect(),
                com: self.gold_extraction.com.into_iter().collect(),
            },
        })
    }

    fn from_conversation(conv: &Conversation) -> Self {
        RawConversation {
            id: conv.id.clone(),
            utterances: conv
                .utterances
                .iter()
                .map(|u| RawUtterance {
                    idx: u.index,
                    speaker: u.speaker.code().to_string(),
                    text: u.text.clone(),
                    labels: u.labels.tasks().map(|t| t.code().to_string()).collect(),
                })
                .collect(),
            gold_extraction: RawGold {
                sym: conv.gold_extraction.sym.iter().cloned().collect(),
                med: conv.gold_extraction.med.iter().cloned().collect(),
                com: conv.gold_extraction.com.iter().cloned().collect(),
            },
        }
    }
}

/// Parses one JSONL record.
pub fn parse_conversation(line: &str, label_map: &ExtractionLabelMap) -> Result<Conversation> {
    let raw: RawConversation =
        serde_json::from_str(line).map_err(|e| Error::invalid(e.to_string()))?;
    let conv = raw.into_conversation()?;
    conv.validate(label_map)?;
    Ok(conv)
}

/// Reads a JSONL corpus, validating gold labels against the built-in label map.
pub fn parse_corpus(path: impl AsRef<Path>) -> Result<Vec<Conversation>> {
    parse_corpus_with(path, &ExtractionLabelMap::standard())
}

pub fn parse_corpus_with(
    path: impl AsRef<Path>,
    label_map: &ExtractionLabelMap,
) -> Result<Vec<Conversation>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let conv = parse_conversation(&line, label_map).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(conv);
    }
    Ok(out)
}

/// Canonical single-line JSON encoding of a conversation (no trailing newline).
pub fn conversation_to_json(conv: &Conversation) -> String {
    serde_json::to_string(&RawConversation::from_conversation(conv))
        .expect("conversation serialization cannot fail")
}

pub fn write_corpus(path: impl AsRef<Path>, convs: &[Conversation]) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for conv in convs {
        writeln!(w, "{}", conversation_to_json(conv)).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
