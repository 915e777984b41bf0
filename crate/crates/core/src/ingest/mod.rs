//! PubMed harvesting: query construction, E-utilities client, PubMed XML
//! parsing and the corpus CSV format.

mod csvio;
mod eutils;
mod query;
mod record;
mod xml;

pub use csvio::{read_corpus_csv, write_corpus_csv, CORPUS_HEADER};
pub use eutils::{
    fetch_records, search_ids, Clock, EutilsClient, FetchOutcome, FetchSession, HttpResponse, SystemClock,
    Transport, TransportError, UreqTransport, EFETCH_BATCH_LIMIT, RETRY_ATTEMPTS,
};
pub use query::{build_query, BooleanOp, QuerySpec};
pub use record::DocumentRecord;
pub use xml::{parse_esearch, parse_pubmed_articles, SearchPage};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("invalid query spec: {0}")]
    InvalidSpec(String),
    #[error("invalid fetch session: {0}")]
    InvalidSession(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("HTTP status {status} from {url}")]
    Status { status: u16, url: String },
    #[error("malformed response: {0}")]
    Parse(String),
    #[error("malformed CSV at line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
