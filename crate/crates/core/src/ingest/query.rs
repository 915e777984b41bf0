use serde::{Deserialize, Serialize};

use super::IngestError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum BooleanOp {
    And,
    Or,
}

impl BooleanOp {
    fn as_str(self) -> &'static str {
        match self {
            BooleanOp::And => "AND",
            BooleanOp::Or => "OR",
        }
    }
}

/// Keyword search over a publication-year window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuerySpec {
    pub keywords: Vec<String>,
    pub boolean_op: BooleanOp,
    pub date_from: u16,
    pub date_to: u16,
    pub database: String,
}

impl Default for QuerySpec {
    fn default() -> Self {
        let keywords = [
            "stuttering",
            "stammering",
            "speech disorder",
            "communication disorder",
            "language disorder",
            "tempering",
            "temperament",
        ];
        QuerySpec {
            keywords: keywords.iter().map(|s| s.to_string()).collect(),
            boolean_op: BooleanOp::Or,
            date_from: 2015,
            date_to: 2025,
            database: "pubmed".to_string(),
        }
    }
}

impl QuerySpec {
    /// Every violated invariant, as `(field, message)` pairs.
    pub fn violations(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        if self.keywords.is_empty() {
            out.push(("keywords", "keyword list is empty".to_string()));
        }
        if self.keywords.iter().any(|k| k.trim().is_empty()) {
            out.push(("keywords", "keyword is blank".to_string()));
        }
        if self.keywords.iter().any(|k| k.contains('"')) {
            out.push(("keywords", "keyword contains a double quote".to_string()));
        }
        if self.date_from > self.date_to {
            out.push((
                "date_from",
                format!("date_from {} is after date_to {}", self.date_from, self.date_to),
            ));
        }
        if self.database.trim().is_empty() {
            out.push(("database", "database is blank".to_string()));
        }
        out
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        match self.violations().into_iter().next() {
            None => Ok(()),
            Some((field, msg)) => Err(IngestError::InvalidSpec(format!("{field}: {msg}"))),
        }
    }
}

/// Render the E-utilities `term` for a spec: the quoted keywords joined by
/// the boolean operator, followed by a publication-date range clause.
pub fn build_query(spec: &QuerySpec) -> Result<String, IngestError> {
    spec.validate()?;
    let sep = format!(" {} ", spec.boolean_op.as_str());
    let terms = spec
        .keywords
        .iter()
        .map(|k| format!("\"{}\"", k.trim()))
        .collect::<Vec<_>>()
        .join(&sep);
    Ok(format!(
        "({terms}) AND (\"{}\"[pdat] : \"{}\"[pdat])",
        spec.date_from, spec.date_to
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(keywords: &[&str], op: BooleanOp, from: u16, to: u16) -> QuerySpec {
        QuerySpec {
            keywords: keywords.iter().map(|s| s.to_string()).collect(),
            boolean_op: op,
            date_from: from,
            date_to: to,
            database: "pubmed".into(),
        }
    }

    #[test]
    fn default_keyword_query() {
        let q = build_query(&QuerySpec::default()).unwrap();
        assert_eq!(
            q,
            "(\"stuttering\" OR \"stammering\" OR \"speech disorder\" OR \"communication disorder\" \
             OR \"language disorder\" OR \"tempering\" OR \"temperament\") AND (\"2015\"[pdat] : \"2025\"[pdat])"
        );
    }

    #[test]
    fn single_term() {
        let q = build_query(&spec(&["x"], BooleanOp::Or, 2000, 2000)).unwrap();
        assert_eq!(q, "(\"x\") AND (\"2000\"[pdat] : \"2000\"[pdat])");
    }

    #[test]
    fn and_operator() {
        let q = build_query(&spec(&["a", "b"], BooleanOp::And, 2010, 2020)).unwrap();
        assert_eq!(q, "(\"a\" AND \"b\") AND (\"2010\"[pdat] : \"2020\"[pdat])");
    }

    #[test]
    fn empty_keywords_rejected() {
        let err = build_query(&spec(&[], BooleanOp::Or, 2000, 2001)).unwrap_err();
        assert!(matches!(err, IngestError::InvalidSpec(_)));
    }

    #[test]
    fn reversed_dates_rejected() {
        assert!(build_query(&spec(&["a"], BooleanOp::Or, 2021, 2020)).is_err());
    }
}
