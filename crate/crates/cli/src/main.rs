//! `uttfilter` command-line pipeline: corpus generation, training,
//! evaluation and filtered concept extraction.

mod config;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::parser::ValueSource;
use clap::{Arg, ArgAction, ArgMatches, Command};
use serde::Serialize;

use uttfilter::corpus::{compute_stats, parse_corpus, synth_generate, write_corpus, Conversation, FineLabelSet};
use uttfilter::eval::{export_pr_curves, fmt_sig};
use uttfilter::extract::{
    extract_corpus, score_extraction, threshold_sweep, ConceptDictionary, ConversationScores, ExtractionLabelMap,
    FilterMode,
};
use uttfilter::features::{load_precomputed_embeddings, FeatureConfig, PrecomputedEmbeddings, TextSource};
use uttfilter::nn::{load_checkpoint, save_checkpoint, HierarchicalModel};
use uttfilter::train::{predict_all, prepare_conversations, train, PreparedConversation};
use uttfilter::Error;

use config::{find_key, read_config, ConfigError, Key, Settings, KEYS};

/// Process exit status by failure class.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Numeric(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Numeric(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NonFinite(_) => Failure::Numeric(e.to_string()),
            Error::Config(_) => Failure::Usage(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.0)
    }
}

type CmdResult = Result<(), Failure>;

const CHECKPOINT_FILE: &str = "model.ckpt";
const REPORT_FILE: &str = "train_report.csv";

fn path_keys(names: &[&str]) -> Vec<&'static Key> {
    names
        .iter()
        .map(|n| find_key(&format!("paths.{n}")).expect("registered path key"))
        .collect()
}

fn section_keys(section: &str) -> impl Iterator<Item = &'static Key> + '_ {
    KEYS.iter().filter(move |k| k.section == section)
}

/// Settings each subcommand exposes as flags.
fn command_keys(name: &str) -> Vec<&'static Key> {
    let mut keys: Vec<&'static Key> = Vec::new();
    match name {
        "gen-data" => {
            keys.extend(section_keys("corpus"));
            keys.extend(section_keys("generator"));
            keys.extend(path_keys(&["dictionary"]));
        }
        "train" => {
            keys.extend(path_keys(&["corpus", "val", "dictionary", "embeddings", "out"]));
            keys.extend(section_keys("features"));
            keys.extend(section_keys("train"));
        }
        "eval" => keys.extend(path_keys(&["checkpoint", "corpus", "dictionary", "embeddings", "out"])),
        "extract" => {
            keys.extend(path_keys(&["checkpoint", "corpus", "dictionary", "embeddings", "out"]));
            keys.extend(section_keys("extract"));
        }
        _ => unreachable!("unknown subcommand {name}"),
    }
    keys
}

fn key_arg(k: &'static Key) -> Arg {
    let arg = Arg::new(k.id()).long(k.flag).help(k.help);
    if k.switch {
        arg.action(ArgAction::SetTrue).help(format!("{} [default: {}]", k.help, k.default))
    } else {
        arg.value_name(k.flag.to_uppercase().replace('-', "_"))
            .default_value(k.default)
            .hide_default_value(false)
    }
}

fn subcommand(name: &'static str, about: &'static str) -> Command {
    let mut cmd = Command::new(name).about(about);
    for k in command_keys(name) {
        cmd = cmd.arg(key_arg(k));
    }
    cmd
}

fn cli() -> Command {
    Command::new("uttfilter")
        .about("Speaker-aware utterance classification and filtered concept extraction")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .arg_required_else_help(true)
        .arg(
            Arg::new("config")
                .long("config")
                .global(true)
                .value_name("FILE")
                .help("Config file with [section] key = value settings; flags override it"),
        )
        .arg(
            Arg::new("threads")
                .long("threads")
                .global(true)
                .value_name("N")
                .value_parser(clap::value_parser!(usize))
                .default_value("0")
                .help("Worker threads (0 uses every core)"),
        )
        .subcommand(
            subcommand("gen-data", "Generate a seeded synthetic corpus and print its statistics").arg(
                Arg::new("profile")
                    .long("profile")
                    .value_name("FILE")
                    .help("Config file whose settings override --config (typically a [generator] section)"),
            ),
        )
        .subcommand(subcommand("train", "Train a classifier and write a checkpoint and report"))
        .subcommand(subcommand("eval", "Write precision-recall curves and print mean PR-AUC"))
        .subcommand(subcommand("extract", "Filter utterances and extract concept labels"))
}

/// Defaults, then config files, then flags given on the command line.
fn settings(name: &str, m: &ArgMatches) -> Result<Settings, Failure> {
    let mut layers: Vec<BTreeMap<String, String>> = Vec::new();
    for file in ["config", "profile"] {
        if let Ok(Some(p)) = m.try_get_one::<String>(file) {
            layers.push(read_config(Path::new(p))?);
        }
    }
    let mut flags = BTreeMap::new();
    for k in command_keys(name) {
        let id = k.id();
        if m.value_source(&id) != Some(ValueSource::CommandLine) {
            continue;
        }
        let v = if k.switch {
            m.get_flag(&id).to_string()
        } else {
            m.get_one::<String>(&id).cloned().unwrap_or_default()
        };
        flags.insert(id, v);
    }
    layers.push(flags);
    let refs: Vec<&BTreeMap<String, String>> = layers.iter().collect();
    Ok(Settings::layered(&refs))
}

fn require(p: Option<PathBuf>, flag: &str) -> Result<PathBuf, Failure> {
    p.ok_or_else(|| Failure::Usage(format!("--{flag} is required")))
}

fn load_dictionary(path: Option<&Path>) -> Result<ConceptDictionary, Failure> {
    match path {
        Some(p) => Ok(ConceptDictionary::load(p, &ExtractionLabelMap::standard())?),
        None => Ok(ConceptDictionary::builtin()),
    }
}

fn write_file(path: &Path, contents: &str) -> CmdResult {
    fs::write(path, contents).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn create_dir(path: &Path) -> CmdResult {
    fs::create_dir_all(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn load_embeddings(
    path: Option<&Path>,
    convs: &[Conversation],
    text_dim: usize,
) -> Result<Option<PrecomputedEmbeddings>, Failure> {
    let Some(p) = path else { return Ok(None) };
    let e = load_precomputed_embeddings(p, convs)?;
    if e.dim() != text_dim {
        return Err(Failure::Data(format!(
            "dimension mismatch: embeddings in {} have {} columns but the model expects {text_dim}",
            p.display(),
            e.dim()
        )));
    }
    Ok(Some(e))
}

fn text_source(emb: Option<&PrecomputedEmbeddings>, text_dim: usize) -> TextSource<'_> {
    match emb {
        Some(e) => TextSource::Precomputed(e),
        None => TextSource::Hashed { dim: text_dim },
    }
}

fn prepare(
    convs: &[Conversation],
    features: &FeatureConfig,
    embeddings: Option<&Path>,
    dict: &ConceptDictionary,
) -> Result<Vec<PreparedConversation>, Failure> {
    let emb = load_embeddings(embeddings, convs, features.text_dim)?;
    Ok(prepare_conversations(convs, features, text_source(emb.as_ref(), features.text_dim), dict)?)
}

fn cmd_gen_data(s: &Settings) -> CmdResult {
    let profile = s.generator()?;
    let corpus = s.corpus()?;
    let dict = load_dictionary(s.paths().dictionary.as_deref())?;
    let convs = synth_generate(&profile, &dict, corpus.n_convs, corpus.seed)?;
    write_corpus(&corpus.out, &convs)?;
    print!("{}", compute_stats(&convs)?.to_csv());
    Ok(())
}

fn cmd_train(s: &Settings) -> CmdResult {
    let paths = s.paths();
    let features = s.features()?;
    let cfg = s.train()?;
    let dict = load_dictionary(paths.dictionary.as_deref())?;
    let train_convs = parse_corpus(require(paths.corpus, "corpus")?)?;
    let val_convs = parse_corpus(require(paths.val, "val")?)?;
    let train_set = prepare(&train_convs, &features, paths.embeddings.as_deref(), &dict)?;
    let val_set = prepare(&val_convs, &features, paths.embeddings.as_deref(), &dict)?;
    let model = HierarchicalModel::random(cfg.model_config(features), cfg.seed)?;
    let (best, report) = train(model, &train_set, &val_set, &cfg)?;
    create_dir(&paths.out)?;
    save_checkpoint(&best, paths.out.join(CHECKPOINT_FILE))?;
    write_file(&paths.out.join(REPORT_FILE), &report.to_csv())?;
    println!("metric,value");
    println!("epochs,{}", report.epochs.len());
    println!("best_epoch,{}", report.best_epoch);
    println!("val_auc,{}", fmt_sig(report.best().val_auc));
    Ok(())
}

fn load_model(s: &Settings) -> Result<HierarchicalModel, Failure> {
    let path = require(s.paths().checkpoint, "checkpoint")?;
    Ok(load_checkpoint(path)?)
}

fn cmd_eval(s: &Settings) -> CmdResult {
    let paths = s.paths();
    let model = load_model(s)?;
    let dict = load_dictionary(paths.dictionary.as_deref())?;
    let convs = parse_corpus(require(paths.corpus, "corpus")?)?;
    let prepared = prepare(&convs, &model.config.features, paths.embeddings.as_deref(), &dict)?;
    let preds = predict_all(&model, &prepared)?;
    let probs: Vec<[f64; 3]> = preds.iter().flat_map(|p| p.fine.iter().copied()).collect();
    let gold: Vec<FineLabelSet> = prepared.iter().flat_map(|c| c.gold.iter().copied()).collect();
    let summary = export_pr_curves(&probs, &gold, &paths.out)?;
    println!("metric,value");
    for (task, ap) in uttfilter::corpus::Task::ALL.iter().zip(summary.per_class) {
        if let Some(ap) = ap {
            println!("ap_{},{}", task.code(), fmt_sig(ap));
        }
    }
    println!("mean_pr_auc,{}", fmt_sig(summary.mean));
    Ok(())
}

#[derive(Serialize)]
struct PredictionRecord<'a> {
    id: &'a str,
    task: &'a str,
    labels: Vec<&'a str>,
}

fn cmd_extract(s: &Settings) -> CmdResult {
    let paths = s.paths();
    let ext = s.extract()?;
    let mut spec = ext.spec;
    let dict = load_dictionary(paths.dictionary.as_deref())?;
    let label_map = ExtractionLabelMap::standard();
    let convs = parse_corpus(require(paths.corpus, "corpus")?)?;

    let scores: Option<Vec<ConversationScores>> = if spec.mode.needs_scores() || ext.sweep {
        let model = load_model(s)?;
        let prepared = prepare(&convs, &model.config.features, paths.embeddings.as_deref(), &dict)?;
        let preds = predict_all(&model, &prepared)?;
        Some(
            preds
                .into_iter()
                .map(|p| ConversationScores {
                    relevant: p.relevant(),
                    fine: p.fine,
                })
                .collect(),
        )
    } else {
        None
    };

    create_dir(&paths.out)?;
    let task = ext.task.code();
    if ext.sweep {
        let sweep = threshold_sweep(
            &convs,
            scores.as_deref().expect("scores computed for sweeps"),
            &dict,
            &label_map,
            ext.task,
            &ext.taus,
            spec.mr_source,
        )?;
        write_file(&paths.out.join(format!("sweep_{task}.csv")), &sweep.to_csv())?;
        if matches!(spec.mode, FilterMode::Mr | FilterMode::Category(_)) {
            spec.tau = sweep.best(spec.mode).expect("sweep covers the mode").tau;
        }
    }

    let predicted = extract_corpus(&convs, scores.as_deref(), &spec, &dict, &label_map, ext.task)?;
    let score = score_extraction(&convs, &predicted, &label_map, ext.task)?;

    let mut jsonl = String::new();
    for (conv, labels) in convs.iter().zip(&predicted) {
        let rec = PredictionRecord {
            id: &conv.id,
            task,
            labels: labels.iter().map(String::as_str).collect(),
        };
        jsonl.push_str(&serde_json::to_string(&rec).expect("record serializes"));
        jsonl.push('\n');
    }
    write_file(&paths.out.join(format!("predictions_{task}.jsonl")), &jsonl)?;

    let mut csv = String::from("metric,value\n");
    csv.push_str(&format!("task,{task}\nmode,{}\n", spec.mode));
    if matches!(spec.mode, FilterMode::Mr | FilterMode::Category(_)) {
        csv.push_str(&format!("tau,{}\n", fmt_sig(spec.tau)));
    }
    csv.push_str(&format!(
        "micro_f1,{}\nmacro_f1,{}\ntp,{}\nfp,{}\nfn,{}\n",
        fmt_sig(score.micro_f1),
        fmt_sig(score.macro_f1),
        score.tp,
        score.fp,
        score.fn_
    ));
    write_file(&paths.out.join(format!("scores_{task}.csv")), &csv)?;
    print!("{csv}");
    Ok(())
}

fn run(m: &ArgMatches) -> CmdResult {
    let threads = *m.get_one::<usize>("threads").expect("defaulted");
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Failure::Usage(format!("--threads: {e}")))?;
    let (name, sub) = m.subcommand().expect("subcommand required");
    let s = settings(name, sub)?;
    match name {
        "gen-data" => cmd_gen_data(&s),
        "train" => cmd_train(&s),
        "eval" => cmd_eval(&s),
        "extract" => cmd_extract(&s),
        _ => unreachable!(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let matches = match cli().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
