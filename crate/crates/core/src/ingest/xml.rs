//! Streaming parsers for the two E-utilities payloads we consume:
//! `eSearchResult` (id pages) and `PubmedArticleSet` (full records).

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use super::record::non_empty;
use super::{DocumentRecord, IngestError};

/// One page of an esearch response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchPage {
    pub count: usize,
    pub ids: Vec<String>,
}

pub fn parse_esearch(body: &str) -> Result<SearchPage, IngestError> {
    let mut reader = Reader::from_str(body);
    let mut path: Vec<String> = Vec::new();
    let mut count = None;
    let mut ids = Vec::new();
    let mut error = None;
    let mut text = String::new();

    loop {
        match reader.read_event() {
            Ok(Event::Start(e)) => {
                path.push(local_name(&e));
                text.clear();
            }
            Ok(Event::Text(t)) => {
                text.push_str(&t.unescape().map_err(parse_err)?);
            }
            Ok(Event::End(_)) => {
                let p: Vec<&str> = path.iter().map(String::as_str).collect();
                match p.as_slice() {
                    ["eSearchResult", "Count"] => {
                        count = Some(text.trim().parse::<usize>().map_err(|_| {
                            IngestError::Parse(format!("Count {:?} is not an integer", text.trim()))
                        })?);
                    }
                    ["eSearchResult", "IdList", "Id"] => ids.push(text.trim().to_string()),
                    ["eSearchResult", "ERROR"] => error = Some(text.trim().to_string()),
                    _ => {}
                }
                path.pop();
                text.clear();
            }
            Ok(Event::Eof) => break,
            Ok(_) => {}
            Err(e) => return Err(parse_err(e)),
        }
    }

    if !path.is_empty() {
        return Err(IngestError::Parse(format!("unclosed element {:?}", path.last())));
    }
    if let Some(msg) = error {
        return Err(IngestError::Parse(format!("esearch error: {msg}")));
    }
    let count = count.ok_or_else(|| IngestError::Parse("esearch response has no Count".into()))?;
    Ok(SearchPage { count, ids })
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Field {
    Pmid,
    Title,
    AbstractSection,
    Journal,
    Year,
    MedlineDate,
    ArticleDateYear,
    Language,
    LastName,
    ForeName,
    Initials,
    CollectiveName,
    ElocationDoi,
    ArticleIdDoi,
}

#[derive(Default)]
struct Partial {
    pmid: Option<String>,
    title: String,
    sections: Vec<String>,
    journal: String,
    year: Option<String>,
    medline_date: Option<String>,
    article_date_year: Option<String>,
    language: Option<String>,
    authors: Vec<String>,
    author: AuthorParts,
    elocation_doi: Option<String>,
    article_id_doi: Option<String>,
}

#[derive(Default)]
struct AuthorParts {
    last: Option<String>,
    fore: Option<String>,
    initials: Option<String>,
    collective: Option<String>,
}

impl AuthorParts {
    fn render(self) -> Option<String> {
        if let Some(last) = self.last {
            return Some(match self.initials.or(self.fore) {
                Some(i) => format!("{last} {i}"),
                None => last,
            });
        }
        self.collective
    }
}

impl Partial {
    fn finish(self) -> Option<DocumentRecord> {
        let pmid = self.pmid?;
        let abstract_text = non_empty(
            self.sections
                .iter()
                .map(|s| collapse_ws(s))
                .filter(|s| !s.is_empty())
                .collect::<Vec<_>>()
                .join(" "),
        );
        let year = self
            .year
            .as_deref()
            .or(self.medline_date.as_deref())
            .or(self.article_date_year.as_deref())
            .and_then(leading_year);
        Some(DocumentRecord {
            pmid,
            title: collapse_ws(&self.title),
            authors: self.authors,
            year,
            journal: collapse_ws(&self.journal),
            abstract_text,
            doi: self.elocation_doi.or(self.article_id_doi),
            language: self.language.map(|l| l.to_lowercase()),
        })
    }
}

fn leading_year(s: &str) -> Option<u16> {
    let digits: String = s.trim().chars().take(4).collect();
    if digits.len() != 4 || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok().filter(|y| DocumentRecord::year_in_range(*y))
}

fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Parse every `PubmedArticle` in an efetch payload. Articles without a
/// citation PMID are dropped (the caller reports them as skipped).
pub fn parse_pubmed_articles(body: &str) -> Result<Vec<DocumentRecord>, IngestError> {
    let mut reader = Reader::from_str(body);
    let mut path: Vec<String> = Vec::new();
    let mut out = Vec::new();
    let mut current: Option<Partial> = None;
    // Field being captured and the path depth at which it started.
    let mut capture: Option<(Field, usize)> = None;
    let mut buf = String::new();

    loop {
        let event = reader.read_event().map_err(parse_err)?;
        match event {
            Event::Start(e) => {
                let name = local_name(&e);
                path.push(name);
                if path.last().map(String::as_str) == Some("PubmedArticle") {
                    current = Some(Partial::default());
                    continue;
                }
                if current.is_some() && capture.is_none() {
                    if let Some(field) = classify(&path, &e)? {
                        capture = Some((field, path.len()));
                        buf.clear();
                    }
                }
            }
            Event::Empty(_) => {}
            Event::Text(t) => {
                if capture.is_some() {
                    buf.push_str(&t.unescape().map_err(parse_err)?);
                }
            }
            Event::CData(t) => {
                if capture.is_some() {
                    buf.push_str(&String::from_utf8_lossy(&t));
                }
            }
            Event::End(_) => {
                if let (Some((field, depth)), Some(p)) = (capture, current.as_mut()) {
                    if depth == path.len() {
                        store(p, field, std::mem::take(&mut buf));
                        capture = None;
                    }
                }
                let closed = path.pop();
                if closed.as_deref() == Some("Author") {
                    if let Some(p) = current.as_mut() {
                        if let Some(a) = std::mem::take(&mut p.author).render() {
                            p.authors.push(a);
                        }
                    }
                }
                if closed.as_deref() == Some("PubmedArticle") {
                    if let Some(rec) = current.take().and_then(Partial::finish) {
                        out.push(rec);
                    }
                }
            }
            Event::Eof => break,
            _ => {}
        }
    }
    if !path.is_empty() {
        return Err(IngestError::Parse(format!("unclosed element {:?}", path.last())));
    }
    Ok(out)
}

fn store(p: &mut Partial, field: Field, text: String) {
    let t = text.trim().to_string();
    match field {
        Field::Pmid => {
            if p.pmid.is_none() && !t.is_empty() {
                p.pmid = Some(t);
            }
        }
        Field::Title => p.title = text,
        Field::AbstractSection => p.sections.push(text),
        Field::Journal => p.journal = text,
        Field::Year => p.year = non_empty(t),
        Field::MedlineDate => p.medline_date = non_empty(t),
        Field::ArticleDateYear => {
            if p.article_date_year.is_none() {
                p.article_date_year = non_empty(t)
            }
        }
        Field::Language => {
            if p.language.is_none() {
                p.language = non_empty(t)
            }
        }
        Field::LastName => p.author.last = non_empty(t),
        Field::ForeName => p.author.fore = non_empty(t),
        Field::Initials => p.author.initials = non_empty(t),
        Field::CollectiveName => p.author.collective = non_empty(collapse_ws(&t)),
        Field::ElocationDoi => {
            if p.elocation_doi.is_none() {
                p.elocation_doi = non_empty(t)
            }
        }
        Field::ArticleIdDoi => {
            if p.article_id_doi.is_none() {
                p.article_id_doi = non_empty(t)
            }
        }
    }
}

fn classify(path: &[String], e: &BytesStart) -> Result<Option<Field>, IngestError> {
    let n = path.len();
    let tail = |k: usize| -> Vec<&str> { path[n.saturating_sub(k)..].iter().map(String::as_str).collect() };
    let field = match tail(2).as_slice() {
        ["MedlineCitation", "PMID"] => Some(Field::Pmid),
        ["Article", "ArticleTitle"] => Some(Field::Title),
        ["Abstract", "AbstractText"] if tail(3)[0] == "Article" => Some(Field::AbstractSection),
        ["Journal", "Title"] => Some(Field::Journal),
        ["PubDate", "Year"] => Some(Field::Year),
        ["PubDate", "MedlineDate"] => Some(Field::MedlineDate),
        ["ArticleDate", "Year"] => Some(Field::ArticleDateYear),
        ["Article", "Language"] => Some(Field::Language),
        ["Author", "LastName"] => Some(Field::LastName),
        ["Author", "ForeName"] => Some(Field::ForeName),
        ["Author", "Initials"] => Some(Field::Initials),
        ["Author", "CollectiveName"] => Some(Field::CollectiveName),
        ["Article", "ELocationID"] if attr(e, "EIdType")?.as_deref() == Some("doi") => {
            Some(Field::ElocationDoi)
        }
        ["ArticleIdList", "ArticleId"]
            if tail(3)[0] == "PubmedData" && attr(e, "IdType")?.as_deref() == Some("doi") =>
        {
            Some(Field::ArticleIdDoi)
        }
        _ => None,
    };
    Ok(field)
}

fn attr(e: &BytesStart, key: &str) -> Result<Option<String>, IngestError> {
    for a in e.attributes() {
        let a = a.map_err(parse_err)?;
        if a.key.as_ref() == key.as_bytes() {
            return Ok(Some(a.unescape_value().map_err(parse_err)?.into_owned()));
        }
    }
    Ok(None)
}

fn local_name(e: &BytesStart) -> String {
    String::from_utf8_lossy(e.local_name().as_ref()).into_owned()
}

fn parse_err(e: impl std::fmt::Display) -> IngestError {
    IngestError::Parse(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"<?xml version="1.0"?>
<PubmedArticleSet>
  <PubmedArticle>
    <MedlineCitation Status="MEDLINE" Owner="NLM">
      <PMID Version="1">12345</PMID>
      <Article PubModel="Print">
        <Journal><Title>J</Title></Journal>
        <ArticleTitle>T</ArticleTitle>
        <Abstract><AbstractText>A</AbstractText></Abstract>
        <Language>eng</Language>
      </Article>
    </MedlineCitation>
  </PubmedArticle>
</PubmedArticleSet>"#;

    #[test]
    fn minimal_article() {
        let recs = parse_pubmed_articles(MINIMAL).unwrap();
        assert_eq!(recs.len(), 1);
        let r = &recs[0];
        assert_eq!(r.pmid, "12345");
        assert_eq!(r.title, "T");
        assert_eq!(r.abstract_text.as_deref(), Some("A"));
        assert_eq!(r.language.as_deref(), Some("eng"));
        assert_eq!(r.doi, None);
        assert_eq!(r.year, None);
    }

    #[test]
    fn missing_abstract_is_absent() {
        let xml = MINIMAL.replace("<Abstract><AbstractText>A</AbstractText></Abstract>", "");
        let r = &parse_pubmed_articles(&xml).unwrap()[0];
        assert_eq!(r.abstract_text, None);
    }

    #[test]
    fn structured_abstract_sections_joined() {
        let xml = MINIMAL.replace(
            "<AbstractText>A</AbstractText>",
            r#"<AbstractText Label="BACKGROUND" NlmCategory="BACKGROUND">Kids stutter.</AbstractText>
               <AbstractText Label="METHODS">We  <i>measured</i>
                 fluency.</AbstractText>
               <AbstractText Label="RESULTS">It &amp; more.</AbstractText>"#,
        );
        let r = &parse_pubmed_articles(&xml).unwrap()[0];
        assert_eq!(
            r.abstract_text.as_deref(),
            Some("Kids stutter. We measured fluency. It & more.")
        );
    }

    #[test]
    fn full_metadata() {
        let xml = r#"<PubmedArticleSet><PubmedArticle>
          <MedlineCitation><PMID>999</PMID>
            <Article>
              <Journal><JournalIssue><PubDate><MedlineDate>2018 Jan-Feb</MedlineDate></PubDate></JournalIssue>
                <Title>Journal of Fluency Disorders</Title></Journal>
              <ArticleTitle>Stuttering in <i>preschool</i> children</ArticleTitle>
              <ELocationID EIdType="pii">S0094</ELocationID>
              <AuthorList>
                <Author><LastName>Yairi</LastName><ForeName>Ehud</ForeName><Initials>E</Initials></Author>
                <Author><CollectiveName>Fluency Group</CollectiveName></Author>
              </AuthorList>
              <Language>ENG</Language>
            </Article>
            <CommentsCorrectionsList><CommentsCorrections><PMID>111</PMID></CommentsCorrections></CommentsCorrectionsList>
          </MedlineCitation>
          <PubmedData><ArticleIdList>
            <ArticleId IdType="pubmed">999</ArticleId>
            <ArticleId IdType="doi">10.1016/j.jfludis.2018.01.001</ArticleId>
          </ArticleIdList></PubmedData>
        </PubmedArticle></PubmedArticleSet>"#;
        let r = &parse_pubmed_articles(xml).unwrap()[0];
        assert_eq!(r.pmid, "999");
        assert_eq!(r.title, "Stuttering in preschool children");
        assert_eq!(r.year, Some(2018));
        assert_eq!(r.journal, "Journal of Fluency Disorders");
        assert_eq!(r.authors, vec!["Yairi E", "Fluency Group"]);
        assert_eq!(r.doi.as_deref(), Some("10.1016/j.jfludis.2018.01.001"));
        assert_eq!(r.language.as_deref(), Some("eng"));
    }

    #[test]
    fn esearch_page() {
        let xml = r#"<?xml version="1.0" encoding="UTF-8" ?>
<eSearchResult><Count>3</Count><RetMax>3</RetMax><RetStart>0</RetStart>
<IdList><Id>1</Id><Id>2</Id><Id>3</Id></IdList>
<TranslationStack><TermSet><Term>x</Term><Count>77</Count></TermSet></TranslationStack>
</eSearchResult>"#;
        let page = parse_esearch(xml).unwrap();
        assert_eq!(page.count, 3);
        assert_eq!(page.ids, vec!["1", "2", "3"]);
    }

    #[test]
    fn esearch_error_element() {
        let xml = "<eSearchResult><ERROR>Invalid query</ERROR></eSearchResult>";
        assert!(matches!(parse_esearch(xml), Err(IngestError::Parse(_))));
    }

    #[test]
    fn truncated_xml_is_parse_error() {
        assert!(parse_pubmed_articles("<PubmedArticleSet><PubmedArticle>").is_err());
        assert!(parse_esearch("<eSearchResult><IdList>").is_err());
    }
}
