use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use crate::corpus::Task;
use crate::error::{Error, Result};
use crate::text::tokenize;

use super::labels::{ExtractionLabelMap, OTHERS};

const HEADER: &str = "surface\tconcept_id\tsemantic_type\ttask\tlabel";
const BUILTIN: &str = include_str!("../../data/dictionary.tsv");

#[derive(Debug, Clone, PartialEq)]
pub struct ConceptEntry {
    /// Normalized token sequence.
    pub surface: Vec<String>,
    pub concept_id: String,
    pub semantic_type: usize,
    pub task: Task,
    /// Extraction label; `None` for concepts outside every specific group.
    pub label: Option<String>,
}

impl ConceptEntry {
    /// Label this concept contributes to extraction, if any. Ungrouped
    /// medication and complaint concepts fall back to "Others"; ungrouped
    /// symptoms are dropped.
    pub fn extraction_label(&self) -> Option<&str> {
        match &self.label {
            Some(l) => Some(l.as_str()),
            None if ExtractionLabelMap::has_fallback(self.task) => Some(OTHERS),
            None => None,
        }
    }

    pub fn surface_text(&self) -> String {
        self.surface.join(" ")
    }
}

/// Surface forms mapped to concepts, semantic types and task labels.
#[derive(Debug, Clone)]
pub struct ConceptDictionary {
    entries: Vec<ConceptEntry>,
    max_len: usize,
    exact: HashMap<Vec<String>, Vec<usize>>,
    by_token: HashMap<String, Vec<usize>>,
}

impl ConceptDictionary {
    pub fn new(entries: Vec<ConceptEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut exact: HashMap<Vec<String>, Vec<usize>> = HashMap::new();
        let mut by_token: HashMap<String, Vec<usize>> = HashMap::new();
        let mut max_len = 0;
        for (i, e) in entries.iter().enumerate() {
            if e.surface.is_empty() {
                return Err(Error::invalid(format!("concept {} has an empty surface", e.concept_id)));
            }
            if !seen.insert((e.surface.clone(), e.concept_id.clone())) {
                return Err(Error::invalid(format!(
                    "duplicate entry ({:?}, {})",
                    e.surface_text(),
                    e.concept_id
                )));
            }
            max_len = max_len.max(e.surface.len());
            exact.entry(e.surface.clone()).or_default().push(i);
            let tokens: HashSet<&String> = e.surface.iter().collect();
            for t in tokens {
                by_token.entry(t.clone()).or_default().push(i);
            }
        }
        Ok(Self {
            entries,
            max_len,
            exact,
            by_token,
        })
    }

    /// The synthetic dictionary shipped with the crate.
    pub fn builtin() -> Self {
        Self::parse_tsv(BUILTIN, &ExtractionLabelMap::standard())
            .expect("built-in dictionary is valid")
    }

    pub fn load(path: impl AsRef<Path>, label_map: &ExtractionLabelMap) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_tsv(&text, label_map).map_err(|e| match e {
            Error::Parse { line, message, .. } => Error::Parse {
                path: path.to_path_buf(),
                line,
                message,
            },
            other => other,
        })
    }

    /// Parses the TSV format `surface, concept_id, semantic_type, task, label`.
    /// An empty label marks a concept outside every specific group.
    pub fn parse_tsv(text: &str, label_map: &ExtractionLabelMap) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: "<dictionary>".into(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim_end_matches('\r') == HEADER => {}
            _ => return Err(err(1, format!("expected header {HEADER:?}"))),
        }
        let mut entries = Vec::new();
        for (i, line) in lines {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 5 {
                return Err(err(i + 1, format!("expected 5 columns, found {}", cols.len())));
            }
            let task: Task = cols[3].parse().map_err(|e: Error| err(i + 1, e.to_string()))?;
            let semantic_type = cols[2]
                .parse()
                .map_err(|_| err(i + 1, format!("bad semantic type {:?}", cols[2])))?;
            let label = match cols[4].trim() {
                "" => None,
                l if label_map.contains(task, l) => Some(l.to_string()),
                l => return Err(err(i + 1, format!("label {l:?} is not a {task} label"))),
            };
            entries.push(ConceptEntry {
                surface: tokenize(cols[0]),
                concept_id: cols[1].to_string(),
                semantic_type,
                task,
                label,
            });
        }
        Self::new(entries).map_err(|e| err(0, e.to_string()))
    }

    pub fn entries(&self) -> &[ConceptEntry] {
        &self.entries
    }

    pub fn entry(&self, i: usize) -> &ConceptEntry {
        &self.entries[i]
    }

    pub fn max_surface_len(&self) -> usize {
        self.max_len
    }

    pub fn max_semantic_type(&self) -> Option<usize> {
        self.entries.iter().map(|e| e.semantic_type).max()
    }

    pub(crate) fn exact(&self, window: &[String]) -> &[usize] {
        self.exact.get(window).map(Vec::as_slice).unwrap_or(&[])
    }

    pub(crate) fn sharing_token(&self, token: &str) -> &[usize] {
        self.by_token.get(token).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Entries of one task that produce an extraction label.
    pub fn labelled(&self, task: Task) -> impl Iterator<Item = &ConceptEntry> {
        self.entries
            .iter()
            .filter(move |e| e.task == task && e.extraction_label().is_some())
    }
}
