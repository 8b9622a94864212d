use crate::corpus::Task;

pub const OTHERS: &str = "Others";

/// Body systems used as symptom extraction labels.
const SYMPTOM_LABELS: [&str; 14] = [
    "Cardiovascular",
    "General",
    "Musculoskeletal",
    "Respiratory",
    "Endocrine",
    "Ear Nose Throat",
    "Eyes",
    "Gastrointestinal",
    "Genital",
    "Head",
    "Neurological",
    "Psychiatric",
    "Skin",
    "Urinary",
];

/// Medication groups. DFCBM = Drug, Food, Chemical or Biomedical Material;
/// AA = Agent Affecting.
const MEDICATION_LABELS: [&str; 32] = [
    "DFCBM/Chemical Modifier/Toxin",
    "DFCBM/Dietary Supplement",
    "DFCBM/Drug or Chemical by Structure",
    "DFCBM/Food or Food Product",
    "DFCBM/Industrial Aid",
    "DFCBM/Natural Product",
    "DFCBM/Pharmacologic Substance/Adjuvant",
    "DFCBM/Pharmacologic Substance/AA Blood or Body Fluid",
    "DFCBM/Pharmacologic Substance/AA Cardiovascular System",
    "DFCBM/Pharmacologic Substance/AA Digestive System or Metabolism",
    "DFCBM/Pharmacologic Substance/AA Integumentary System",
    "DFCBM/Pharmacologic Substance/AA Musculoskeletal System",
    "DFCBM/Pharmacologic Substance/AA Nervous System",
    "DFCBM/Pharmacologic Substance/AA Organs of Special Senses",
    "DFCBM/Pharmacologic Substance/AA Respiratory System",
    "DFCBM/Pharmacologic Substance/Anti-Infective Agent",
    "DFCBM/Pharmacologic Substance/Antineoplastic Agent",
    "DFCBM/Pharmacologic Substance/Biological Agent",
    "DFCBM/Pharmacologic Substance/Cation Channel Blocker",
    "DFCBM/Pharmacologic Substance/Chemopreventive Agent",
    "DFCBM/Pharmacologic Substance/Combination Medication",
    "DFCBM/Pharmacologic Substance/Endothelin Receptor Antagonist",
    "DFCBM/Pharmacologic Substance/Enzyme Inhibitor",
    "DFCBM/Pharmacologic Substance/Hormone Therapy Agent",
    "DFCBM/Pharmacologic Substance/Immunotherapeutic Agent",
    "DFCBM/Pharmacologic Substance/Prostaglandin Analogue",
    "DFCBM/Pharmacologic Substance/Protective Agent",
    "DFCBM/Pharmacologic Substance/Protein Synthesis Inhibitor",
    "DFCBM/Physiology-Regulatory Factor",
    "Activity/Clinical or Research Activity/Intervention or Procedure",
    "Manufactured Object/Diagnostic, Therapeutic, or Research Equipment",
    OTHERS,
];

/// Complaint groups: disorders by body site plus a catch-all.
const COMPLAINT_LABELS: [&str; 11] = [
    "General",
    "Disorder of hematopoietic structure",
    "Disorder of integument, immune system, endocrine",
    "Disorder of musculoskeletal system",
    "Disorder of digestive system",
    "Disorder of the genitourinary system",
    "Disorder of respiratory system",
    "Disorder of breast",
    "Disorder of nervous system",
    "Disorder of cardiovascular system",
    OTHERS,
];

/// Closed label vocabulary per extraction task.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractionLabelMap {
    sym: Vec<String>,
    com: Vec<String>,
    med: Vec<String>,
}

impl ExtractionLabelMap {
    /// 14 body systems, 32 medication groups, 11 complaint groups.
    pub fn standard() -> Self {
        let own = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        Self {
            sym: own(&SYMPTOM_LABELS),
            com: own(&COMPLAINT_LABELS),
            med: own(&MEDICATION_LABELS),
        }
    }

    pub fn labels(&self, task: Task) -> &[String] {
        match task {
            Task::Sym => &self.sym,
            Task::Com => &self.com,
            Task::Med => &self.med,
        }
    }

    pub fn contains(&self, task: Task, label: &str) -> bool {
        self.labels(task).iter().any(|l| l == label)
    }

    pub fn position(&self, task: Task, label: &str) -> Option<usize> {
        self.labels(task).iter().position(|l| l == label)
    }

    /// Tasks whose ungrouped concepts fall back to [`OTHERS`].
    pub fn has_fallback(task: Task) -> bool {
        matches!(task, Task::Med | Task::Com)
    }
}
