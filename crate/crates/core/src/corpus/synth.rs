//! Seeded synthetic conversations.
//!
//! Each conversation draws its length, then a Poisson number of utterances
//! per category. The first mention of a category lands near a configurable
//! relative position and later mentions cluster after it. Category
//! utterances embed surface forms from the concept dictionary; a fraction of
//! the irrelevant utterances are decoys that mention a concept in passing.
//! Gold extraction labels come from running the extractor over each
//! category's labelled utterances, so they agree with the matcher exactly.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::extract::{extract_labels, ConceptDictionary, ConceptEntry, ExtractionLabelMap};
use crate::rng::SplitMix64;

use super::{Conversation, FineLabelSet, GoldExtraction, SpeakerRole, Task, Utterance};

/// Generator parameters; per-category arrays are in task order SYM, COM, MED.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorProfile {
    pub utterances_mean: f64,
    pub utterances_std: f64,
    pub utterances_min: usize,
    /// Expected fraction of a conversation's utterances in each category.
    pub fractions: [f64; 3],
    pub first_position_mean: [f64; 3],
    pub first_position_std: [f64; 3],
    /// Mean gap (in utterances) between consecutive mentions of a category.
    pub follow_gap: f64,
    /// Probability that a category utterance is spoken by the doctor.
    pub doctor_share: [f64; 3],
    /// Probability that an irrelevant utterance is spoken by the doctor.
    pub doctor_share_irrelevant: f64,
    /// Probability that a non-doctor utterance comes from a third party.
    pub other_share: f64,
    /// Fraction of irrelevant utterances that mention a concept in passing.
    pub decoy_fraction: f64,
    /// Probability that a follow-up category utterance names a concept.
    pub follow_surface_rate: f64,
    /// Probability that a follow-up reuses an earlier concept.
    pub repeat_concept_rate: f64,
}

impl Default for GeneratorProfile {
    fn default() -> Self {
        Self {
            utterances_mean: 60.0,
            utterances_std: 15.0,
            utterances_min: 12,
            fractions: [0.0198, 0.0434, 0.0310],
            first_position_mean: [0.321, 0.133, 0.524],
            first_position_std: [0.057, 0.043, 0.069],
            follow_gap: 3.0,
            doctor_share: [0.5, 0.75, 0.75],
            doctor_share_irrelevant: 0.5,
            other_share: 0.08,
            decoy_fraction: 0.15,
            follow_surface_rate: 0.6,
            repeat_concept_rate: 0.5,
        }
    }
}

impl GeneratorProfile {
    pub fn validate(&self) -> Result<()> {
        let prob = |x: f64| (0.0..=1.0).contains(&x);
        let ok = self.utterances_mean > 0.0
            && self.utterances_std >= 0.0
            && self.utterances_min >= 1
            && self.follow_gap >= 0.0
            && self.fractions.iter().all(|f| prob(*f))
            && self.fractions.iter().sum::<f64>() <= 1.0
            && self.first_position_mean.iter().all(|p| prob(*p))
            && self.first_position_std.iter().all(|s| *s >= 0.0)
            && self.doctor_share.iter().all(|p| prob(*p))
            && [
                self.doctor_share_irrelevant,
                self.other_share,
                self.decoy_fraction,
                self.follow_surface_rate,
                self.repeat_concept_rate,
            ]
            .iter()
            .all(|p| prob(*p));
        if ok {
            Ok(())
        } else {
            Err(Error::Config(
                "generator profile: probabilities must lie in [0, 1], category fractions may sum to at most 1, \
                 lengths must be positive"
                    .into(),
            ))
        }
    }
}

const SMALL_TALK: &[&str] = &[
    "good morning how are you doing today",
    "nice to see you again",
    "the parking garage was completely full",
    "let me pull up your chart",
    "okay",
    "sounds good",
    "alright",
    "yes",
    "no not really",
    "how was the drive in",
    "do you have any questions for me",
    "we will see you again in three months",
    "the weather has been lovely this week",
    "my daughter drove me here today",
    "let me wash my hands first",
    "can you sit up on the table for me",
    "take a deep breath in and out",
    "i will send the paperwork to the front desk",
    "sorry about the wait today",
    "we got the forms you mailed",
    "are you still living on your own",
    "i retired from the post office last spring",
    "that makes sense",
    "thank you so much",
    "let me type that in",
    "i think that covers everything",
    "the nurse will come by in a minute",
    "is this a good phone number for you",
    "we moved closer to my son",
    "i have been trying to walk every evening",
    "my grandson just started college",
    "let me check the screen here",
    "uh huh",
    "right",
    "i see",
    "we were away visiting family",
];

const DECOY: &[&str] = &[
    "my neighbor swears by {}",
    "i saw a commercial about {} last night",
    "it is not rough on your stomach like {} would be",
    "my sister read an article about {}",
    "the magazine in the lobby had a story on {}",
    "my friend from church keeps talking about {}",
    "there was a billboard for {} on the highway",
    "my cousin asked me whether {} was a big deal",
];

const SYM_SURFACE: &[&str] = &[
    "i have been having {} for about a week",
    "any {} lately",
    "the {} gets worse at night",
    "i noticed some {} after i eat",
    "do you ever get {}",
    "i keep having {} in the mornings",
    "the {} started a few days ago",
    "have you had any {} since the last visit",
];

const SYM_FOLLOW: &[&str] = &[
    "it comes and goes",
    "it started a few days ago",
    "does it wake you up at night",
    "how long does it usually last",
    "it gets a little better when i lie down",
    "on a scale of one to ten about a six",
];

const COM_SURFACE: &[&str] = &[
    "you have a history of {}",
    "we are following up on your {}",
    "how has the {} been doing",
    "i was diagnosed with {} a few years ago",
    "your {} seems well controlled",
    "let us talk about the {} today",
    "you came in today about the {}",
    "the main thing today is your {}",
];

const COM_FOLLOW: &[&str] = &[
    "that has been stable since last year",
    "it has been under control for a while",
    "we will keep monitoring that closely",
    "that is the main reason i came in",
];

const MED_SURFACE: &[&str] = &[
    "i have been taking {} every morning",
    "let us start you on {}",
    "are you still on the {}",
    "the pharmacy refilled my {}",
    "we will increase the {} to twice a day",
    "keep taking the {} with food",
    "i stopped the {} last month",
    "i am going to prescribe {} for you",
];

const MED_FOLLOW: &[&str] = &[
    "take one tablet twice a day with food",
    "did the new dosage help",
    "i take it right before bed",
    "we can lower the milligrams next time",
    "make sure you finish the whole bottle",
];

fn surface_templates(task: Task) -> (&'static [&'static str], &'static [&'static str]) {
    match task {
        Task::Sym => (SYM_SURFACE, SYM_FOLLOW),
        Task::Com => (COM_SURFACE, COM_FOLLOW),
        Task::Med => (MED_SURFACE, MED_FOLLOW),
    }
}

/// Every template, with `{}` removed. Used to check that the fixed text
/// never matches the dictionary on its own.
pub fn template_texts() -> Vec<String> {
    let mut out: Vec<String> = SMALL_TALK.iter().map(|s| s.to_string()).collect();
    for t in DECOY
        .iter()
        .chain(SYM_SURFACE)
        .chain(SYM_FOLLOW)
        .chain(COM_SURFACE)
        .chain(COM_FOLLOW)
        .chain(MED_SURFACE)
        .chain(MED_FOLLOW)
    {
        out.push(t.replace("{}", " "));
    }
    out
}

fn fill(template: &str, surface: &str) -> String {
    template.replacen("{}", surface, 1)
}

#[derive(Clone, Copy)]
enum Slot {
    Irrelevant,
    Category(Task),
}

/// Finds a free slot at or after `at`, else before it.
fn free_slot(slots: &[Option<Slot>], at: usize) -> Option<usize> {
    (at..slots.len()).chain((0..at).rev()).find(|&i| slots[i].is_none())
}

fn draw_speaker(rng: &mut SplitMix64, doctor_share: f64, other_share: f64) -> SpeakerRole {
    if rng.bernoulli(doctor_share) {
        SpeakerRole::Doctor
    } else if rng.bernoulli(other_share) {
        SpeakerRole::Other
    } else {
        SpeakerRole::Patient
    }
}

fn generate_one(
    profile: &GeneratorProfile,
    pools: &[Vec<&ConceptEntry>; 3],
    dict: &ConceptDictionary,
    label_map: &ExtractionLabelMap,
    id: String,
    rng: &mut SplitMix64,
) -> Result<Conversation> {
    let n = (rng.normal(profile.utterances_mean, profile.utterances_std).round().max(0.0) as usize)
        .max(profile.utterances_min);
    let mut slots: Vec<Option<Slot>> = vec![None; n];

    for task in Task::ALL {
        let k = task.index();
        let count = rng.poisson(profile.fractions[k] * n as f64);
        if count == 0 {
            continue;
        }
        let rel = rng
            .normal(profile.first_position_mean[k], profile.first_position_std[k])
            .clamp(0.0, 1.0 - 1e-9);
        let Some(first) = free_slot(&slots, (rel * n as f64) as usize) else {
            continue;
        };
        slots[first] = Some(Slot::Category(task));
        let mut last = first;
        for _ in 1..count {
            let at = (last + 1 + rng.poisson(profile.follow_gap)).min(n - 1);
            match (at..n).find(|&i| slots[i].is_none()) {
                Some(i) => {
                    slots[i] = Some(Slot::Category(task));
                    last = i;
                }
                None => break,
            }
        }
    }

    let mut used: [Vec<usize>; 3] = Default::default();
    let mut utterances = Vec::with_capacity(n);
    for (index, slot) in slots.iter().enumerate() {
        let slot = slot.unwrap_or(Slot::Irrelevant);
        let (speaker, text, labels) = match slot {
            Slot::Category(task) => {
                let k = task.index();
                let speaker = draw_speaker(rng, profile.doctor_share[k], profile.other_share);
                let (with_surface, follow) = surface_templates(task);
                let named = used[k].is_empty() || rng.bernoulli(profile.follow_surface_rate);
                let text = if named {
                    let e = if !used[k].is_empty() && rng.bernoulli(profile.repeat_concept_rate) {
                        *rng.choose(&used[k])
                    } else {
                        rng.below(pools[k].len())
                    };
                    used[k].push(e);
                    fill(rng.choose(with_surface), &pools[k][e].surface_text())
                } else {
                    rng.choose(follow).to_string()
                };
                (speaker, text, FineLabelSet::default().with(task))
            }
            Slot::Irrelevant => {
                let speaker = draw_speaker(rng, profile.doctor_share_irrelevant, profile.other_share);
                let text = if rng.bernoulli(profile.decoy_fraction) {
                    let task = *rng.choose(&Task::ALL);
                    let pool = &pools[task.index()];
                    let e = pool[rng.below(pool.len())];
                    fill(rng.choose(DECOY), &e.surface_text())
                } else {
                    rng.choose(SMALL_TALK).to_string()
                };
                (speaker, text, FineLabelSet::default())
            }
        };
        utterances.push(Utterance {
            index,
            speaker,
            text,
            labels,
        });
    }

    let mut conv = Conversation {
        id,
        utterances,
        gold_extraction: GoldExtraction::default(),
    };
    for task in Task::ALL {
        let subset: Vec<usize> = (0..n).filter(|&i| conv.utterances[i].labels.get(task)).collect();
        let labels: BTreeSet<String> = extract_labels(&conv, &subset, dict, label_map, task)?;
        *conv.gold_extraction.get_mut(task) = labels;
    }
    Ok(conv)
}

/// Generates `n_convs` conversations from `seed`. Identical arguments give
/// identical output.
pub fn synth_generate(
    profile: &GeneratorProfile,
    dict: &ConceptDictionary,
    n_convs: usize,
    seed: u64,
) -> Result<Vec<Conversation>> {
    profile.validate()?;
    let label_map = ExtractionLabelMap::standard();
    let pools: [Vec<&ConceptEntry>; 3] = Task::ALL.map(|t| dict.entries().iter().filter(|e| e.task == t).collect());
    for task in Task::ALL {
        if pools[task.index()].is_empty() {
            return Err(Error::invalid(format!("dictionary has no {task} concepts to draw from")));
        }
    }
    let mut rng = SplitMix64::new(seed);
    (0..n_convs)
        .map(|i| generate_one(profile, &pools, dict, &label_map, format!("conv{i:05}"), &mut rng))
        .collect()
}
