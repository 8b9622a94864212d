//! Precision-recall metrics for utterance scores and F1 for extraction.
//!
//! Average precision is the step-wise sum `sum_k (R_k - R_{k-1}) * P_k` over
//! the distinct score thresholds taken in decreasing order. Items sharing a
//! score enter the ranking together, so a constant scorer earns exactly the
//! positive rate. Sorting breaks ties by original index only to keep every
//! output order reproducible.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::warn;

use crate::corpus::{FineLabelSet, Task};
use crate::error::{Error, Result};

/// Formats like C's `%.9g`: nine significant digits, trailing zeros trimmed.
pub fn fmt_sig(x: f64) -> String {
    fmt_sig_n(x, 9)
}

fn fmt_sig_n(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= digits as i32 {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Precision-recall curve with one point per distinct score.
#[derive(Debug, Clone, PartialEq)]
pub struct PrCurve {
    /// Thresholds strictly decreasing, recall non-decreasing.
    pub points: Vec<PrPoint>,
    pub average_precision: f64,
}

impl PrCurve {
    /// Re-integrates the emitted points with the step rule.
    pub fn integrate(&self) -> f64 {
        let mut prev = 0.0;
        let mut ap = 0.0;
        for p in &self.points {
            ap += (p.recall - prev) * p.precision;
            prev = p.recall;
        }
        ap
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("threshold,precision,recall\n");
        for p in &self.points {
            let _ = writeln!(
                s,
                "{},{},{}",
                fmt_sig(p.threshold),
                fmt_sig(p.precision),
                fmt_sig(p.recall)
            );
        }
        s
    }
}

pub fn pr_curve(scores: &[f64], labels: &[bool]) -> Result<PrCurve> {
    if scores.len() != labels.len() {
        return Err(Error::shape(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::NonFinite(format!("score {s}")));
    }
    let positives = labels.iter().filter(|l| **l).count();
    if positives == 0 {
        return Err(Error::invalid("average precision needs at least one positive"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));

    let mut points = Vec::new();
    let mut tp = 0usize;
    let mut seen = 0usize;
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (k, &i) in order.iter().enumerate() {
        seen += 1;
        if labels[i] {
            tp += 1;
        }
        let boundary = order
            .get(k + 1)
            .map_or(true, |&next| scores[next] != scores[i]);
        if boundary {
            let precision = tp as f64 / seen as f64;
            let recall = tp as f64 / positives as f64;
            ap += (recall - prev_recall) * precision;
            prev_recall = recall;
            points.push(PrPoint {
                threshold: scores[i],
                precision,
                recall,
            });
        }
    }
    Ok(PrCurve {
        points,
        average_precision: ap,
    })
}

/// Step-wise average precision. Errors when no label is positive.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64> {
    Ok(pr_curve(scores, labels)?.average_precision)
}

/// Mean of the per-class average precisions over the fine classes.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanPrAuc {
    pub mean: f64,
    /// Indexed by `Task::index()`; `None` for classes without positives.
    pub per_class: [Option<f64>; 3],
    pub excluded: Vec<Task>,
}

pub fn mean_pr_auc(probabilities: &[[f64; 3]], gold: &[FineLabelSet]) -> Result<MeanPrAuc> {
    if probabilities.len() != gold.len() {
        return Err(Error::shape(format!(
            "{} predictions for {} utterances",
            probabilities.len(),
            gold.len()
        )));
    }
    let mut per_class = [None; 3];
    let mut excluded = Vec::new();
    for task in Task::ALL {
        let c = task.index();
        let labels: Vec<bool> = gold.iter().map(|g| g.get(task)).collect();
        if !labels.iter().any(|l| *l) {
            warn!("class {task} has no positives in this split; excluded from mean PR-AUC");
            excluded.push(task);
            continue;
        }
        let scores: Vec<f64> = probabilities.iter().map(|p| p[c]).collect();
        per_class[c] = Some(average_precision(&scores, &labels)?);
    }
    let present: Vec<f64> = per_class.iter().flatten().copied().collect();
    if present.is_empty() {
        return Err(Error::invalid("no class has positives"));
    }
    Ok(MeanPrAuc {
        mean: present.iter().sum::<f64>() / present.len() as f64,
        per_class,
        excluded,
    })
}

/// Mean positive rate over classes that have positives: the mean PR-AUC a
/// constant scorer obtains.
pub fn prevalence_baseline(gold: &[FineLabelSet]) -> f64 {
    let rates: Vec<f64> = Task::ALL
        .iter()
        .map(|t| gold.iter().filter(|g| g.get(*t)).count() as f64 / gold.len() as f64)
        .filter(|r| *r > 0.0)
        .collect();
    rates.iter().sum::<f64>() / rates.len() as f64
}

/// Writes `pr_SYM.csv`, `pr_COM.csv`, `pr_MED.csv` and `pr_summary.csv`
/// (`class,ap`) into `dir`. Classes without positives are skipped.
pub fn export_pr_curves(
    probabilities: &[[f64; 3]],
    gold: &[FineLabelSet],
    dir: impl AsRef<Path>,
) -> Result<MeanPrAuc> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let summary = mean_pr_auc(probabilities, gold)?;
    let mut csv = String::from("class,ap\n");
    for task in Task::ALL {
        if summary.per_class[task.index()].is_none() {
            continue;
        }
        let scores: Vec<f64> = probabilities.iter().map(|p| p[task.index()]).collect();
        let labels: Vec<bool> = gold.iter().map(|g| g.get(task)).collect();
        let curve = pr_curve(&scores, &labels)?;
        let path = dir.join(format!("pr_{}.csv", task.code()));
        fs::write(&path, curve.to_csv()).map_err(|e| Error::io(&path, e))?;
        let _ = writeln!(csv, "{},{}", task.code(), fmt_sig(curve.average_precision));
    }
    let path = dir.join("pr_summary.csv");
    fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;
    Ok(summary)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LabelScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

/// Conversation-level multi-label extraction scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractionScore {
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub per_label: BTreeMap<String, LabelScore>,
}

fn prf(tp: usize, fp: usize, fn_: usize) -> (f64, f64, f64) {
    let p = if tp + fp > 0 { tp as f64 / (tp + fp) as f64 } else { 0.0 };
    let r = if tp + fn_ > 0 { tp as f64 / (tp + fn_) as f64 } else { 0.0 };
    let f = if 2 * tp + fp + fn_ > 0 {
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    } else {
        0.0
    };
    (p, r, f)
}

/// Micro F1 pools (conversation, label) decisions; macro F1 averages the
/// per-label F1 over labels occurring in gold or predictions.
pub fn extraction_f1(
    predicted: &[BTreeSet<String>],
    gold: &[BTreeSet<String>],
    vocabulary: &[String],
) -> Result<ExtractionScore> {
    if predicted.len() != gold.len() {
        return Err(Error::shape(format!(
            "{} predicted sets for {} gold sets",
            predicted.len(),
            gold.len()
        )));
    }
    let mut counts: BTreeMap<&str, (usize, usize, usize)> = BTreeMap::new();
    for (p, g) in predicted.iter().zip(gold) {
        for label in p.union(g) {
            if !vocabulary.iter().any(|v| v == label) {
                return Err(Error::invalid(format!("unknown label {label:?}")));
            }
            let c = counts.entry(label.as_str()).or_default();
            match (p.contains(label), g.contains(label)) {
                (true, true) => c.0 += 1,
                (true, false) => c.1 += 1,
                (false, true) => c.2 += 1,
                (false, false) => unreachable!(),
            }
        }
    }
    let (tp, fp, fn_) = counts
        .values()
        .fold((0, 0, 0), |acc, c| (acc.0 + c.0, acc.1 + c.1, acc.2 + c.2));
    let per_label: BTreeMap<String, LabelScore> = counts
        .iter()
        .map(|(l, &(t, f, n))| {
            let (precision, recall, f1) = prf(t, f, n);
            (
                l.to_string(),
                LabelScore {
                    precision,
                    recall,
                    f1,
                    support: t + n,
                },
            )
        })
        .collect();
    let macro_f1 = if per_label.is_empty() {
        // nothing predicted and nothing to find
        1.0
    } else {
        per_label.values().map(|s| s.f1).sum::<f64>() / per_label.len() as f64
    };
    Ok(ExtractionScore {
        micro_f1: if tp + fp + fn_ == 0 { 1.0 } else { prf(tp, fp, fn_).2 },
        macro_f1,
        tp,
        fp,
        fn_,
        per_label,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    /// Direct definition: mean over positives of the precision at that
    /// positive's score (all items scoring at least as high count as retrieved).
    fn ap_oracle(scores: &[f64], labels: &[bool]) -> f64 {
        let pos: Vec<usize> = (0..scores.len()).filter(|&i| labels[i]).collect();
        pos.iter()
            .map(|&k| {
                let retrieved = (0..scores.len()).filter(|&j| scores[j] >= scores[k]);
                let (n, tp) = retrieved.fold((0, 0), |(n, tp), j| (n + 1, tp + labels[j] as usize));
                tp as f64 / n as f64
            })
            .sum::<f64>()
            / pos.len() as f64
    }

    #[test]
    fn perfect_ranking_is_one() {
        let ap = average_precision(&[0.9, 0.8, 0.3, 0.1], &[true, true, false, false]).unwrap();
        assert_eq!(ap, 1.0);
    }

    #[test]
    fn worked_example() {
        let ap = average_precision(&[0.9, 0.8, 0.1], &[true, false, true]).unwrap();
        assert!((ap - (0.5 + 0.5 * 2.0 / 3.0)).abs() < 1e-15);
        assert!((ap - 0.833_333_333_333_333_3).abs() < 1e-12);
    }

    #[test]
    fn no_positive_is_an_error() {
        assert!(average_precision(&[0.1, 0.2], &[false, false]).is_err());
        assert!(average_precision(&[0.1], &[true, false]).is_err());
    }

    #[test]
    fn constant_scores_give_prevalence() {
        let mut rng = SplitMix64::new(20);
        for _ in 0..50 {
            let labels: Vec<bool> = (0..20).map(|_| rng.bernoulli(0.3)).collect();
            let p = labels.iter().filter(|l| **l).count();
            if p == 0 {
                continue;
            }
            let ap = average_precision(&[0.42; 20], &labels).unwrap();
            assert!((ap - p as f64 / 20.0).abs() < 1e-15);
            assert!((ap_oracle(&[0.42; 20], &labels) - ap).abs() < 1e-15);
        }
    }

    #[test]
    fn random_scores_give_prevalence_on_average() {
        let mut rng = SplitMix64::new(4);
        let labels: Vec<bool> = (0..10_000).map(|_| rng.bernoulli(0.2)).collect();
        let scores: Vec<f64> = (0..10_000).map(|_| rng.next_f64()).collect();
        let prevalence = labels.iter().filter(|l| **l).count() as f64 / 10_000.0;
        let ap = average_precision(&scores, &labels).unwrap();
        assert!((ap - prevalence).abs() < 0.02, "{ap} vs {prevalence}");
    }

    #[test]
    fn matches_oracle_with_ties() {
        let mut rng = SplitMix64::new(8);
        for _ in 0..200 {
            let n = 1 + rng.below(12);
            let scores: Vec<f64> = (0..n).map(|_| rng.below(4) as f64 / 4.0).collect();
            let mut labels: Vec<bool> = (0..n).map(|_| rng.bernoulli(0.5)).collect();
            labels[0] = true;
            let ap = average_precision(&scores, &labels).unwrap();
            assert!((ap - ap_oracle(&scores, &labels)).abs() < 1e-12);
        }
    }

    #[test]
    fn curve_shape_and_reintegration() {
        let mut rng = SplitMix64::new(2);
        let scores: Vec<f64> = (0..300).map(|_| rng.next_f64()).collect();
        let labels: Vec<bool> = scores.iter().map(|s| rng.next_f64() < *s * 0.5).collect();
        let curve = pr_curve(&scores, &labels).unwrap();
        for w in curve.points.windows(2) {
            assert!(w[0].threshold > w[1].threshold);
            assert!(w[0].recall <= w[1].recall);
        }
        assert!((curve.integrate() - curve.average_precision).abs() < 1e-9);
    }

    #[test]
    fn mean_auc_excludes_empty_class() {
        let gold = vec![
            FineLabelSet::default().with(Task::Sym),
            FineLabelSet::default(),
            FineLabelSet::default().with(Task::Med),
        ];
        let probs = vec![[0.9, 0.1, 0.2], [0.1, 0.2, 0.3], [0.2, 0.3, 0.8]];
        let m = mean_pr_auc(&probs, &gold).unwrap();
        assert_eq!(m.mean, 1.0);
        assert_eq!(m.excluded, vec![Task::Com]);
        assert_eq!(m.per_class[Task::Com.index()], None);
    }

    #[test]
    fn extraction_f1_cases() {
        let s = |xs: &[&str]| xs.iter().map(|x| x.to_string()).collect::<BTreeSet<_>>();
        let vocab: Vec<String> = vec!["A".into(), "B".into(), "C".into()];

        let perfect = extraction_f1(&[s(&["A"]), s(&["B", "C"])], &[s(&["A"]), s(&["B", "C"])], &vocab).unwrap();
        assert_eq!((perfect.micro_f1, perfect.macro_f1), (1.0, 1.0));

        let empty = extraction_f1(&[s(&[]), s(&[])], &[s(&["A"]), s(&["B"])], &vocab).unwrap();
        assert_eq!((empty.micro_f1, empty.macro_f1), (0.0, 0.0));

        let mixed = extraction_f1(&[s(&["A"]), s(&["A", "B"])], &[s(&["A", "B"]), s(&["B"])], &vocab).unwrap();
        assert_eq!((mixed.tp, mixed.fp, mixed.fn_), (2, 1, 1));
        assert!((mixed.micro_f1 - 2.0 / 3.0).abs() < 1e-15);

        assert!(extraction_f1(&[s(&["Z"])], &[s(&[])], &vocab).is_err());
    }

    #[test]
    fn sig_formatting() {
        assert_eq!(fmt_sig(0.833_333_333_333_333_3), "0.833333333");
        assert_eq!(fmt_sig(1.0), "1");
        assert_eq!(fmt_sig(0.5), "0.5");
        assert_eq!(fmt_sig(123.456), "123.456");
        assert_eq!(fmt_sig(1.5e-7), "1.5e-07");
        assert_eq!(fmt_sig(2.0e12), "2e+12");
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(-0.25), "-0.25");
    }
}
