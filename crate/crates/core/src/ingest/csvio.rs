use std::collections::HashSet;
use std::path::Path;

use super::{DocumentRecord, IngestError};

pub const CORPUS_HEADER: [&str; 8] = [
    "pmid", "title", "authors", "year", "journal", "abstract", "doi", "language",
];

const AUTHOR_SEP: &str = "; ";

/// Write records as RFC-4180 CSV with the corpus header. Returns the number
/// of data rows written.
pub fn write_corpus_csv(records: &[DocumentRecord], path: &Path) -> Result<usize, IngestError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_path(path)
        .map_err(csv_io)?;
    w.write_record(CORPUS_HEADER).map_err(csv_io)?;
    for r in records {
        let year = r.year.map(|y| y.to_string()).unwrap_or_default();
        let authors = r.authors.join(AUTHOR_SEP);
        w.write_record([
            r.pmid.as_str(),
            r.title.as_str(),
            authors.as_str(),
            year.as_str(),
            r.journal.as_str(),
            r.abstract_text.as_deref().unwrap_or(""),
            r.doi.as_deref().unwrap_or(""),
            r.language.as_deref().unwrap_or(""),
        ])
        .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(records.len())
}

pub fn read_corpus_csv(path: &Path) -> Result<Vec<DocumentRecord>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .map_err(csv_io)?;

    let header = rdr.headers().map_err(|e| csv_err(1, e))?.clone();
    if header.iter().ne(CORPUS_HEADER.iter().copied()) {
        return Err(IngestError::Csv {
            line: 1,
            message: format!("expected header {:?}, found {:?}", CORPUS_HEADER, header),
        });
    }

    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            csv_err(line, e)
        })?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let bad = |message: String| IngestError::Csv { line, message };

        let pmid = row[0].to_string();
        if pmid.is_empty() || !pmid.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad(format!("pmid {pmid:?} is not a digit string")));
        }
        if !seen.insert(pmid.clone()) {
            return Err(bad(format!("duplicate pmid {pmid}")));
        }
        let year = match &row[3] {
            "" => None,
            y => {
                let y: u16 = y.parse().map_err(|_| bad(format!("year {y:?} is not an integer")))?;
                if !DocumentRecord::year_in_range(y) {
                    return Err(bad(format!("year {y} outside [1800, 2100]")));
                }
                Some(y)
            }
        };
        let authors = match &row[2] {
            "" => Vec::new(),
            a => a.split(AUTHOR_SEP).map(str::to_string).collect(),
        };
        out.push(DocumentRecord {
            pmid,
            title: row[1].to_string(),
            authors,
            year,
            journal: row[4].to_string(),
            abstract_text: present(&row[5]),
            doi: present(&row[6]),
            language: present(&row[7]),
        });
    }
    Ok(out)
}

fn present(s: &str) -> Option<String> {
    (!s.is_empty()).then(|| s.to_string())
}

fn csv_io(e: csv::Error) -> IngestError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => IngestError::Io(io),
        other => IngestError::Csv {
            line: 0,
            message: format!("{other:?}"),
        },
    }
}

fn csv_err(line: u64, e: csv::Error) -> IngestError {
    IngestError::Csv {
        line,
        message: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(pmid: &str, abs: Option<&str>) -> DocumentRecord {
        DocumentRecord {
            pmid: pmid.into(),
            title: "A title".into(),
            authors: vec!["Smith J".into(), "Doe A".into()],
            year: Some(2019),
            journal: "J Speech Lang Hear Res".into(),
            abstract_text: abs.map(str::to_string),
            doi: Some("10.1000/xyz".into()),
            language: Some("eng".into()),
        }
    }

    #[test]
    fn two_records_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        let recs = vec![rec("1", Some("abc")), rec("2", None)];
        assert_eq!(write_corpus_csv(&recs, &path).unwrap(), 2);
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("pmid,title,authors,year,journal,abstract,doi,language"));
        assert_eq!(read_corpus_csv(&path).unwrap(), recs);
    }

    #[test]
    fn embedded_quotes_commas_newlines_survive() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        let recs = vec![rec("7", Some("He said \"hi\", then\nleft,\r\nagain"))];
        write_corpus_csv(&recs, &path).unwrap();
        assert_eq!(read_corpus_csv(&path).unwrap(), recs);
    }

    #[test]
    fn empty_list_writes_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        assert_eq!(write_corpus_csv(&[], &path).unwrap(), 0);
        assert_eq!(
            std::fs::read_to_string(&path).unwrap().trim_end(),
            CORPUS_HEADER.join(",")
        );
        assert!(read_corpus_csv(&path).unwrap().is_empty());
    }

    #[test]
    fn malformed_row_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        std::fs::write(
            &path,
            "pmid,title,authors,year,journal,abstract,doi,language\n1,t,,2020,j,,,eng\n2,t,,20x0,j,,,eng\n",
        )
        .unwrap();
        match read_corpus_csv(&path).unwrap_err() {
            IngestError::Csv { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn short_row_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        std::fs::write(
            &path,
            "pmid,title,authors,year,journal,abstract,doi,language\n1,t\n",
        )
        .unwrap();
        assert!(matches!(
            read_corpus_csv(&path).unwrap_err(),
            IngestError::Csv { line: 2, .. }
        ));
    }

    #[test]
    fn duplicate_pmid_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        write_corpus_csv(&[rec("5", None), rec("5", None)], &path).unwrap();
        assert!(read_corpus_csv(&path).is_err());
    }

    fn text() -> impl Strategy<Value = String> {
        "[a-zA-Z0-9 ,\"\n\r;.é-]{0,40}"
    }

    fn opt_text() -> impl Strategy<Value = Option<String>> {
        prop::option::of("[a-zA-Z0-9 ,\"\n;.-]{1,40}")
    }

    prop_compose! {
        fn arb_record()(
            title in text(),
            authors in prop::collection::vec("[A-Za-z][A-Za-z ,.-]{0,15}", 0..4),
            year in prop::option::of(1800u16..=2100),
            journal in text(),
            abstract_text in opt_text(),
            doi in opt_text(),
            language in prop::option::of("[a-z]{3}"),
        ) -> DocumentRecord {
            DocumentRecord { pmid: String::new(), title, authors, year, journal, abstract_text, doi, language }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn read_inverts_write(mut recs in prop::collection::vec(arb_record(), 0..8)) {
            for (i, r) in recs.iter_mut().enumerate() {
                r.pmid = (1000 + i).to_string();
            }
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("c.csv");
            write_corpus_csv(&recs, &path).unwrap();
            prop_assert_eq!(read_corpus_csv(&path).unwrap(), recs);
        }
    }
}
