//! Corpus curation: drop non-English records, then records whose title and
//! abstract never mention a child-related word, and keep an audit trail.

use std::path::Path;

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::DocumentRecord;

#[derive(Debug, Error)]
pub enum CurateError {
    #[error("invalid child keyword set: {0}")]
    InvalidKeywords(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Lowercase stems; a record matches when any stem begins a word.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChildKeywordSet {
    pub stems: Vec<String>,
}

impl Default for ChildKeywordSet {
    fn default() -> Self {
        let stems = [
            "child",
            "infant",
            "toddler",
            "pediatric",
            "paediatric",
            "adolescent",
            "preschool",
        ];
        ChildKeywordSet {
            stems: stems.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl ChildKeywordSet {
    pub fn new(stems: Vec<String>) -> Result<Self, CurateError> {
        let set = ChildKeywordSet { stems };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<(), CurateError> {
        if self.stems.is_empty() {
            return Err(CurateError::InvalidKeywords("no stems".into()));
        }
        for s in &self.stems {
            if s.is_empty() || s.chars().any(|c| c.is_uppercase()) {
                return Err(CurateError::InvalidKeywords(format!(
                    "stem {s:?} must be non-empty and lowercase"
                )));
            }
        }
        Ok(())
    }

    /// Case-insensitive word-prefix matcher: `\b(?:stem1|stem2|...)`.
    pub fn matcher(&self) -> Regex {
        let alt = self
            .stems
            .iter()
            .map(|s| regex::escape(s))
            .collect::<Vec<_>>()
            .join("|");
        RegexBuilder::new(&format!(r"\b(?:{alt})"))
            .case_insensitive(true)
            .build()
            .expect("escaped alternation is a valid regex")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurationStep {
    pub step: String,
    pub removed: usize,
    pub remaining: usize,
}

/// Ordered filter statistics; each row's `remaining` equals the previous
/// row's `remaining` minus its own `removed`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CurationReport {
    pub steps: Vec<CurationStep>,
}

impl CurationReport {
    pub fn final_count(&self) -> usize {
        self.steps.last().map(|s| s.remaining).unwrap_or(0)
    }

    pub fn is_consistent(&self) -> bool {
        self.steps
            .windows(2)
            .all(|w| w[0].remaining.checked_sub(w[1].removed) == Some(w[1].remaining))
    }

    /// CSV with columns `step,removed,remaining`.
    pub fn write_csv(&self, path: &Path) -> Result<(), CurateError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["step", "removed", "remaining"])?;
        for s in &self.steps {
            w.write_record([s.step.clone(), s.removed.to_string(), s.remaining.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub const ENGLISH: &str = "eng";
pub const STEP_INITIAL: &str = "initial";
pub const STEP_NON_ENGLISH: &str = "non_english_removed";
pub const STEP_NON_CHILD: &str = "non_child_removed";

/// Keep English records. Records without a language are kept.
pub fn filter_language(records: Vec<DocumentRecord>) -> (Vec<DocumentRecord>, usize) {
    let before = records.len();
    let kept: Vec<_> = records
        .into_iter()
        .filter(|r| r.language.as_deref().map_or(true, |l| l == ENGLISH))
        .collect();
    let removed = before - kept.len();
    (kept, removed)
}

pub fn is_child_related(record: &DocumentRecord, matcher: &Regex) -> bool {
    matcher.is_match(&record.title)
        || record
            .abstract_text
            .as_deref()
            .is_some_and(|a| matcher.is_match(a))
}

pub fn filter_child_relevance(
    records: Vec<DocumentRecord>,
    keywords: &ChildKeywordSet,
) -> (Vec<DocumentRecord>, usize) {
    let matcher = keywords.matcher();
    let before = records.len();
    let kept: Vec<_> = records
        .into_iter()
        .filter(|r| is_child_related(r, &matcher))
        .collect();
    let removed = before - kept.len();
    (kept, removed)
}

pub fn curate(
    records: Vec<DocumentRecord>,
    keywords: &ChildKeywordSet,
) -> (Vec<DocumentRecord>, CurationReport) {
    let initial = records.len();
    let mut steps = vec![CurationStep {
        step: STEP_INITIAL.into(),
        removed: 0,
        remaining: initial,
    }];
    if initial == 0 {
        return (records, CurationReport { steps });
    }
    let (records, removed) = filter_language(records);
    steps.push(CurationStep {
        step: STEP_NON_ENGLISH.into(),
        removed,
        remaining: records.len(),
    });
    let (records, removed) = filter_child_relevance(records, keywords);
    steps.push(CurationStep {
        step: STEP_NON_CHILD.into(),
        removed,
        remaining: records.len(),
    });
    (records, CurationReport { steps })
}
