use serde::{Deserialize, Serialize};

/// One PubMed article: the unit row of every corpus.
///
/// Optional fields are `None` when the source lacks them; empty strings are
/// never used as a stand-in for "missing".
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DocumentRecord {
    pub pmid: String,
    pub title: String,
    pub authors: Vec<String>,
    pub year: Option<u16>,
    pub journal: String,
    pub abstract_text: Option<String>,
    pub doi: Option<String>,
    /// Lowercase ISO-639 code as PubMed reports it (e.g. `eng`).
    pub language: Option<String>,
}

impl DocumentRecord {
    pub const MIN_YEAR: u16 = 1800;
    pub const MAX_YEAR: u16 = 2100;

    pub fn new(pmid: impl Into<String>, title: impl Into<String>) -> Self {
        DocumentRecord {
            pmid: pmid.into(),
            title: title.into(),
            ..Default::default()
        }
    }

    /// Title and abstract joined with a single space.
    pub fn text(&self) -> String {
        match &self.abstract_text {
            Some(a) if !self.title.is_empty() => format!("{} {}", self.title, a),
            Some(a) => a.clone(),
            None => self.title.clone(),
        }
    }

    pub fn year_in_range(year: u16) -> bool {
        (Self::MIN_YEAR..=Self::MAX_YEAR).contains(&year)
    }
}

/// Empty or whitespace-only strings become `None`.
pub(crate) fn non_empty(s: impl AsRef<str>) -> Option<String> {
    let t = s.as_ref().trim();
    (!t.is_empty()).then(|| t.to_string())
}
