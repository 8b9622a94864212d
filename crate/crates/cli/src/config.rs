//! Run configuration: a registry of every setting, the `key = value` file
//! format, and the merge of defaults, file values and command-line flags.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use uttfilter::corpus::{GeneratorProfile, Task};
use uttfilter::extract::{FilterMode, FilterSpec, MrSource};
use uttfilter::features::FeatureConfig;
use uttfilter::nn::Ablations;
use uttfilter::train::TrainConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

/// One setting: its `[section]`, key, command-line flag and default.
#[derive(Debug, Clone, Copy)]
pub struct Key {
    pub section: &'static str,
    pub name: &'static str,
    pub flag: &'static str,
    pub default: &'static str,
    pub help: &'static str,
    pub switch: bool,
}

impl Key {
    pub fn id(&self) -> String {
        format!("{}.{}", self.section, self.name)
    }
}

const fn key(section: &'static str, name: &'static str, flag: &'static str, default: &'static str, help: &'static str) -> Key {
    Key {
        section,
        name,
        flag,
        default,
        help,
        switch: false,
    }
}

pub const KEYS: &[Key] = &[
    key("corpus", "n_convs", "n-convs", "300", "Conversations to generate"),
    key("corpus", "seed", "seed", "1", "Generator seed"),
    key("corpus", "out", "out", "corpus.jsonl", "Output corpus file"),
    key("generator", "utterances_mean", "utterances-mean", "60", "Mean utterances per conversation"),
    key("generator", "utterances_std", "utterances-std", "15", "Standard deviation of the utterance count"),
    key("generator", "utterances_min", "utterances-min", "12", "Minimum utterances per conversation"),
    key("generator", "fraction_sym", "fraction-sym", "0.0198", "Expected fraction of symptom utterances"),
    key("generator", "fraction_com", "fraction-com", "0.0434", "Expected fraction of complaint utterances"),
    key("generator", "fraction_med", "fraction-med", "0.031", "Expected fraction of medication utterances"),
    key("generator", "first_position_mean_sym", "first-position-mean-sym", "0.321", "Mean relative first symptom position"),
    key("generator", "first_position_mean_com", "first-position-mean-com", "0.133", "Mean relative first complaint position"),
    key("generator", "first_position_mean_med", "first-position-mean-med", "0.524", "Mean relative first medication position"),
    key("generator", "first_position_std_sym", "first-position-std-sym", "0.057", "Spread of the first symptom position"),
    key("generator", "first_position_std_com", "first-position-std-com", "0.043", "Spread of the first complaint position"),
    key("generator", "first_position_std_med", "first-position-std-med", "0.069", "Spread of the first medication position"),
    key("generator", "doctor_share_sym", "doctor-share-sym", "0.5", "Probability a symptom utterance is the doctor's"),
    key("generator", "doctor_share_com", "doctor-share-com", "0.75", "Probability a complaint utterance is the doctor's"),
    key("generator", "doctor_share_med", "doctor-share-med", "0.75", "Probability a medication utterance is the doctor's"),
    key("generator", "follow_gap", "follow-gap", "3", "Mean gap between mentions of one category"),
    key("generator", "doctor_share_irrelevant", "doctor-share-irrelevant", "0.5", "Probability an irrelevant utterance is the doctor's"),
    key("generator", "other_share", "other-share", "0.08", "Probability a non-doctor utterance is a third party's"),
    key("generator", "decoy_fraction", "decoy-fraction", "0.15", "Fraction of irrelevant utterances naming a concept in passing"),
    key("generator", "follow_surface_rate", "follow-surface-rate", "0.6", "Probability a follow-up utterance names a concept"),
    key("generator", "repeat_concept_rate", "repeat-concept-rate", "0.5", "Probability a follow-up reuses an earlier concept"),
    key("features", "text_dim", "text-dim", "64", "Hashed text embedding width"),
    key("features", "speaker_dim", "speaker-dim", "8", "Speaker embedding width"),
    key("features", "position_dim", "position-dim", "4", "Position embedding width"),
    key("features", "position_bins", "position-bins", "4", "Relative position bins"),
    key("features", "semantic_dim", "semantic-dim", "8", "Semantic-type embedding width"),
    key("features", "semantic_types", "semantic-types", "127", "Rows of the semantic-type table"),
    key("features", "jaccard_min", "jaccard-min", "0.7", "Similarity threshold for semantic-type mentions"),
    key("train", "learning_rate", "learning-rate", "0.0005", "Adam learning rate"),
    key("train", "batch_size", "batch-size", "16", "Windows per batch"),
    key("train", "window_len", "window-len", "128", "Utterances per training window"),
    key("train", "beta", "beta", "1", "Weight of the coarse loss"),
    key("train", "hidden_dim", "hidden-dim", "32", "LSTM hidden size per direction"),
    key("train", "max_epochs", "max-epochs", "50", "Maximum training epochs"),
    key("train", "patience", "patience", "5", "Epochs without validation improvement before stopping"),
    key("train", "seed", "seed", "1", "Initialization and shuffling seed"),
    key("train", "clip_norm", "clip-norm", "5", "Global gradient-norm ceiling"),
    key(
        "train",
        "ablate",
        "ablate",
        "none",
        "Comma-separated ablations: no-hierarchy, plain-bilstm, no-context",
    ),
    key(
        "train",
        "prior_bias",
        "prior-bias",
        "true",
        "Start output biases at the training-set label log-odds (true or false)",
    ),
    key("extract", "task", "task", "MED", "Extraction task: SYM, COM or MED"),
    key(
        "extract",
        "mode",
        "mode",
        "category",
        "Filter: all-text, mr, category, oracle-mr, oracle-category",
    ),
    key("extract", "tau", "tau", "0.5", "Probability threshold for mr and category"),
    key("extract", "mr_source", "mr-source", "coarse", "Relevance score for mr: coarse or fine-union"),
    key("extract", "taus", "taus", "0:0.05:1", "Sweep thresholds: comma list or start:step:end"),
    Key {
        switch: true,
        ..key("extract", "sweep", "sweep", "false", "Sweep thresholds for mr and category")
    },
    key("paths", "corpus", "corpus", "", "Input corpus (JSONL)"),
    key("paths", "val", "val", "", "Validation corpus (JSONL)"),
    key("paths", "dictionary", "dict", "", "Concept dictionary TSV (built-in when empty)"),
    key("paths", "embeddings", "embeddings", "", "Precomputed utterance embeddings TSV (hashed text when empty)"),
    key("paths", "checkpoint", "checkpoint", "", "Model checkpoint"),
    key("paths", "out", "out", "out", "Output directory"),
];

pub fn find_key(id: &str) -> Option<&'static Key> {
    KEYS.iter().find(|k| k.id() == id)
}

/// Parses the flat config format: `[section]` headers, `key = value` lines,
/// `#` or `;` comments. Keys come back as `section.key`.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut out = BTreeMap::new();
    let mut section: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let ln = i + 1;
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| err(format!("line {ln}: unterminated section header")))?
                .trim();
            if !KEYS.iter().any(|k| k.section == name) {
                return Err(err(format!("line {ln}: unknown section [{name}]")));
            }
            section = Some(name.to_string());
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| err(format!("line {ln}: expected `key = value`")))?;
        let sec = section
            .as_deref()
            .ok_or_else(|| err(format!("line {ln}: key outside any [section]")))?;
        let id = format!("{sec}.{}", k.trim());
        if find_key(&id).is_none() {
            return Err(err(format!("line {ln}: unknown key {id}")));
        }
        if out.insert(id.clone(), v.trim().to_string()).is_some() {
            return Err(err(format!("line {ln}: {id} set twice")));
        }
    }
    Ok(out)
}

pub fn read_config(path: &Path) -> Result<BTreeMap<String, String>, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| err(format!("{}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| err(format!("{}: {}", path.display(), e.0)))
}

/// Merged settings. Lookups fall back to the registry default.
#[derive(Debug, Clone, Default)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    /// Later layers override earlier ones.
    pub fn layered(layers: &[&BTreeMap<String, String>]) -> Self {
        let mut values = BTreeMap::new();
        for l in layers {
            values.extend(l.iter().map(|(k, v)| (k.clone(), v.clone())));
        }
        Self { values }
    }

    fn raw(&self, id: &str) -> &str {
        match self.values.get(id) {
            Some(v) => v,
            None => find_key(id).unwrap_or_else(|| panic!("unregistered key {id}")).default,
        }
    }

    fn get<T: std::str::FromStr>(&self, id: &str) -> Result<T, ConfigError> {
        let v = self.raw(id);
        v.parse().map_err(|_| err(format!("{id}: cannot parse {v:?}")))
    }

    fn path(&self, id: &str) -> Option<PathBuf> {
        let v = self.raw(id);
        (!v.is_empty()).then(|| PathBuf::from(v))
    }

    fn per_task(&self, prefix: &str) -> Result<[f64; 3], ConfigError> {
        Ok([
            self.get(&format!("{prefix}_sym"))?,
            self.get(&format!("{prefix}_com"))?,
            self.get(&format!("{prefix}_med"))?,
        ])
    }

    pub fn generator(&self) -> Result<GeneratorProfile, ConfigError> {
        let p = GeneratorProfile {
            utterances_mean: self.get("generator.utterances_mean")?,
            utterances_std: self.get("generator.utterances_std")?,
            utterances_min: self.get("generator.utterances_min")?,
            fractions: self.per_task("generator.fraction")?,
            first_position_mean: self.per_task("generator.first_position_mean")?,
            first_position_std: self.per_task("generator.first_position_std")?,
            follow_gap: self.get("generator.follow_gap")?,
            doctor_share: self.per_task("generator.doctor_share")?,
            doctor_share_irrelevant: self.get("generator.doctor_share_irrelevant")?,
            other_share: self.get("generator.other_share")?,
            decoy_fraction: self.get("generator.decoy_fraction")?,
            follow_surface_rate: self.get("generator.follow_surface_rate")?,
            repeat_concept_rate: self.get("generator.repeat_concept_rate")?,
        };
        p.validate().map_err(|e| err(e.to_string()))?;
        Ok(p)
    }

    pub fn corpus(&self) -> Result<CorpusSettings, ConfigError> {
        Ok(CorpusSettings {
            n_convs: self.get("corpus.n_convs")?,
            seed: self.get("corpus.seed")?,
            out: PathBuf::from(self.raw("corpus.out")),
        })
    }

    pub fn features(&self) -> Result<FeatureConfig, ConfigError> {
        let f = FeatureConfig {
            text_dim: self.get("features.text_dim")?,
            speaker_dim: self.get("features.speaker_dim")?,
            position_dim: self.get("features.position_dim")?,
            position_bins: self.get("features.position_bins")?,
            semantic_dim: self.get("features.semantic_dim")?,
            semantic_types: self.get("features.semantic_types")?,
            jaccard_min: self.get("features.jaccard_min")?,
        };
        f.validate().map_err(|e| err(e.to_string()))?;
        Ok(f)
    }

    pub fn train(&self) -> Result<TrainConfig, ConfigError> {
        let t = TrainConfig {
            learning_rate: self.get("train.learning_rate")?,
            batch_size: self.get("train.batch_size")?,
            window_len: self.get("train.window_len")?,
            beta: self.get("train.beta")?,
            hidden_dim: self.get("train.hidden_dim")?,
            max_epochs: self.get("train.max_epochs")?,
            patience: self.get("train.patience")?,
            seed: self.get("train.seed")?,
            clip_norm: self.get("train.clip_norm")?,
            ablations: parse_ablations(self.raw("train.ablate"))?,
            prior_bias: self.get("train.prior_bias")?,
        };
        t.validate().map_err(|e| err(e.to_string()))?;
        Ok(t)
    }

    pub fn extract(&self) -> Result<ExtractSettings, ConfigError> {
        let task: Task = self.get("extract.task")?;
        let mode = FilterMode::parse(self.raw("extract.mode"), task).map_err(|e| err(e.to_string()))?;
        let tau: f64 = self.get("extract.tau")?;
        if !(0.0..=1.0).contains(&tau) {
            return Err(err(format!("extract.tau: {tau} outside [0, 1]")));
        }
        let mr_source: MrSource = self.get("extract.mr_source")?;
        let sweep: bool = self.get("extract.sweep")?;
        Ok(ExtractSettings {
            task,
            spec: FilterSpec { mode, tau, mr_source },
            taus: parse_taus(self.raw("extract.taus"))?,
            sweep,
        })
    }

    pub fn paths(&self) -> Paths {
        Paths {
            corpus: self.path("paths.corpus"),
            val: self.path("paths.val"),
            dictionary: self.path("paths.dictionary"),
            embeddings: self.path("paths.embeddings"),
            checkpoint: self.path("paths.checkpoint"),
            out: PathBuf::from(self.raw("paths.out")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSettings {
    pub n_convs: usize,
    pub seed: u64,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractSettings {
    pub task: Task,
    pub spec: FilterSpec,
    pub taus: Vec<f64>,
    pub sweep: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub val: Option<PathBuf>,
    pub dictionary: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out: PathBuf,
}

pub fn parse_ablations(s: &str) -> Result<Ablations, ConfigError> {
    let mut a = Ablations::default();
    let parts: Vec<&str> = s.split(',').map(str::trim).filter(|p| !p.is_empty()).collect();
    if parts.contains(&"none") {
        return if parts.len() == 1 {
            Ok(a)
        } else {
            Err(err(format!("train.ablate: \"none\" combined with other ablations in {s:?}")))
        };
    }
    for p in parts {
        let flag = match p {
            "no-hierarchy" => &mut a.no_hierarchy,
            "plain-bilstm" => &mut a.plain_bilstm,
            "no-context" => &mut a.no_context,
            other => return Err(err(format!("train.ablate: unknown ablation {other:?}"))),
        };
        if *flag {
            return Err(err(format!("train.ablate: {p} given twice")));
        }
        *flag = true;
    }
    Ok(a)
}

/// A comma list (`0,0.5,1`) or an inclusive range `start:step:end`.
pub fn parse_taus(s: &str) -> Result<Vec<f64>, ConfigError> {
    let bad = || err(format!("extract.taus: cannot parse {s:?}"));
    let taus: Vec<f64> = if s.contains(':') {
        let parts: Vec<f64> = s
            .split(':')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| bad())?;
        let [start, step, end] = parts[..] else { return Err(bad()) };
        if !(step > 0.0) || end < start {
            return Err(bad());
        }
        let n = ((end - start) / step + 1e-9).floor() as usize;
        // rounding keeps grid values such as 0.15 exact in the output
        (0..=n).map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9).collect()
    } else {
        s.split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| bad())?
    };
    if taus.is_empty() || taus.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(err(format!("extract.taus: thresholds must lie in [0, 1], got {s:?}")));
    }
    Ok(taus)
}
