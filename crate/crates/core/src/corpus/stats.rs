use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::eval::fmt_sig;

use super::{Conversation, Task};

/// Per-category summary, averaged per conversation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CategoryStats {
    /// Mean number of utterances carrying the label.
    pub mean_count: f64,
    /// Mean of (labeled utterances / conversation length).
    pub mean_fraction: f64,
    /// Mean of (0-based index of first labeled utterance / length), over
    /// conversations containing the label. `None` if no conversation has it.
    pub mean_first_position: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusStats {
    pub conversation_count: usize,
    pub utterances_min: usize,
    pub utterances_mean: f64,
    pub utterances_max: usize,
    /// Indexed by `Task::index()`.
    pub categories: [CategoryStats; 3],
}

impl CorpusStats {
    pub fn category(&self, task: Task) -> &CategoryStats {
        &self.categories[task.index()]
    }

    /// CSV with header `metric,value`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,value\n");
        let _ = writeln!(s, "conversation_count,{}", self.conversation_count);
        let _ = writeln!(s, "utterances_min,{}", self.utterances_min);
        let _ = writeln!(s, "utterances_mean,{}", fmt_sig(self.utterances_mean));
        let _ = writeln!(s, "utterances_max,{}", self.utterances_max);
        for task in Task::ALL {
            let c = self.category(task);
            let code = task.code();
            let _ = writeln!(s, "{code}_mean_count,{}", fmt_sig(c.mean_count));
            let _ = writeln!(s, "{code}_mean_fraction,{}", fmt_sig(c.mean_fraction));
            let pos = c.mean_first_position.map(fmt_sig).unwrap_or_else(|| "NA".into());
            let _ = writeln!(s, "{code}_mean_first_position,{pos}");
        }
        s
    }
}

pub fn compute_stats(convs: &[Conversation]) -> Result<CorpusStats> {
    if convs.is_empty() {
        return Err(Error::invalid("cannot compute statistics of an empty corpus"));
    }
    let n_conv = convs.len() as f64;
    let lengths: Vec<usize> = convs.iter().map(|c| c.len()).collect();

    let mut categories = [CategoryStats::default(); 3];
    for task in Task::ALL {
        let mut count_sum = 0.0;
        let mut frac_sum = 0.0;
        let mut pos_sum = 0.0;
        let mut pos_n = 0usize;
        for conv in convs {
            let n = conv.len() as f64;
            let labeled: Vec<usize> = conv
                .utterances
                .iter()
                .filter(|u| u.labels.get(task))
                .map(|u| u.index)
                .collect();
            count_sum += labeled.len() as f64;
            frac_sum += labeled.len() as f64 / n;
            if let Some(first) = labeled.first() {
                pos_sum += *first as f64 / n;
                pos_n += 1;
            }
        }
        categories[task.index()] = CategoryStats {
            mean_count: count_sum / n_conv,
            mean_fraction: frac_sum / n_conv,
            mean_first_position: (pos_n > 0).then(|| pos_sum / pos_n as f64),
        };
    }

    Ok(CorpusStats {
        conversation_count: convs.len(),
        utterances_min: *lengths.iter().min().unwrap(),
        utterances_mean: lengths.iter().sum::<usize>() as f64 / n_conv,
        utterances_max: *lengths.iter().max().unwrap(),
        categories,
    })
}
