//! Rate-limited NCBI E-utilities client (`esearch` + `efetch`).
//!
//! HTTP and time are injected through [`Transport`] and [`Clock`] so the
//! paging, batching, retry and rate-limit logic can be replayed against
//! canned responses.

use std::cell::Cell;
use std::collections::{HashMap, HashSet};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::xml::{parse_esearch, parse_pubmed_articles};
use super::{DocumentRecord, IngestError};

pub const RETRY_ATTEMPTS: usize = 3;
pub const EFETCH_BATCH_LIMIT: usize = 200;
const INITIAL_BACKOFF: Duration = Duration::from_secs(1);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportError {
    /// Timed out or the connection dropped; worth retrying.
    Timeout(String),
    Other(String),
}

pub trait Transport {
    fn get(&self, url: &str, query: &[(&str, String)]) -> Result<HttpResponse, TransportError>;
}

pub trait Clock {
    /// Monotonic time since an arbitrary origin.
    fn now(&self) -> Duration;
    fn sleep(&self, d: Duration);
}

pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        SystemClock {
            origin: Instant::now(),
        }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }
    fn sleep(&self, d: Duration) {
        std::thread::sleep(d)
    }
}

/// Blocking HTTPS transport backed by `ureq`.
pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .user_agent(concat!("topicscope/", env!("CARGO_PKG_VERSION")))
            .build();
        UreqTransport {
            agent: config.into(),
        }
    }
}

impl Transport for UreqTransport {
    fn get(&self, url: &str, query: &[(&str, String)]) -> Result<HttpResponse, TransportError> {
        let mut req = self.agent.get(url);
        for (k, v) in query {
            req = req.query(*k, v);
        }
        match req.call() {
            Ok(mut resp) => {
                let status = resp.status().as_u16();
                let body = resp
                    .body_mut()
                    .with_config()
                    .limit(256 * 1024 * 1024)
                    .read_to_string()
                    .map_err(|e| TransportError::Timeout(e.to_string()))?;
                Ok(HttpResponse { status, body })
            }
            Err(e @ (ureq::Error::Timeout(_) | ureq::Error::Io(_) | ureq::Error::ConnectionFailed)) => {
                Err(TransportError::Timeout(e.to_string()))
            }
            Err(e) => Err(TransportError::Other(e.to_string())),
        }
    }
}

/// Connection parameters for one E-utilities session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FetchSession {
    pub base_url: String,
    pub api_key: Option<String>,
    pub requests_per_second: f64,
    pub retmax: usize,
    pub database: String,
}

impl Default for FetchSession {
    fn default() -> Self {
        FetchSession {
            base_url: "https://eutils.ncbi.nlm.nih.gov/entrez/eutils".to_string(),
            api_key: None,
            requests_per_second: 3.0,
            retmax: 200,
            database: "pubmed".to_string(),
        }
    }
}

impl FetchSession {
    pub fn validate(&self) -> Result<(), IngestError> {
        let cap = if self.api_key.is_some() { 10.0 } else { 3.0 };
        if !(self.requests_per_second > 0.0 && self.requests_per_second <= cap) {
            return Err(IngestError::InvalidSession(format!(
                "requests_per_second must be in (0, {cap}], got {}",
                self.requests_per_second
            )));
        }
        if self.retmax == 0 {
            return Err(IngestError::InvalidSession("retmax must be positive".into()));
        }
        if self.base_url.is_empty() {
            return Err(IngestError::InvalidSession("base_url is empty".into()));
        }
        Ok(())
    }

    fn min_interval(&self) -> Duration {
        Duration::from_secs_f64(1.0 / self.requests_per_second)
    }

    fn endpoint(&self, name: &str) -> String {
        format!("{}/{name}", self.base_url.trim_end_matches('/'))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FetchOutcome {
    pub records: Vec<DocumentRecord>,
    /// Requested ids with no matching article in the response.
    pub skipped: Vec<String>,
}

/// A session bound to a transport and a clock. Holds the rate limiter state.
pub struct EutilsClient<'a> {
    session: FetchSession,
    transport: &'a dyn Transport,
    clock: &'a dyn Clock,
    last_request: Cell<Option<Duration>>,
}

impl<'a> EutilsClient<'a> {
    pub fn new(
        session: FetchSession,
        transport: &'a dyn Transport,
        clock: &'a dyn Clock,
    ) -> Result<Self, IngestError> {
        session.validate()?;
        Ok(EutilsClient {
            session,
            transport,
            clock,
            last_request: Cell::new(None),
        })
    }

    pub fn session(&self) -> &FetchSession {
        &self.session
    }

    fn throttle(&self) {
        let interval = self.session.min_interval();
        if let Some(last) = self.last_request.get() {
            let elapsed = self.clock.now().saturating_sub(last);
            if elapsed < interval {
                self.clock.sleep(interval - elapsed);
            }
        }
        self.last_request.set(Some(self.clock.now()));
    }

    /// GET with rate limiting and bounded retries: 5xx and timeouts back off
    /// exponentially from one second, 4xx fails immediately.
    fn get(&self, endpoint: &str, mut query: Vec<(&str, String)>) -> Result<String, IngestError> {
        if let Some(key) = &self.session.api_key {
            query.push(("api_key", key.clone()));
        }
        let url = self.session.endpoint(endpoint);
        let mut backoff = INITIAL_BACKOFF;
        let mut last_err = None;
        for attempt in 0..RETRY_ATTEMPTS {
            if attempt > 0 {
                self.clock.sleep(backoff);
                backoff *= 2;
            }
            self.throttle();
            match self.transport.get(&url, &query) {
                Ok(resp) if (200..300).contains(&resp.status) => return Ok(resp.body),
                Ok(resp) if (500..600).contains(&resp.status) => {
                    log::warn!("{url} returned {} (attempt {})", resp.status, attempt + 1);
                    last_err = Some(IngestError::Status {
                        status: resp.status,
                        url: url.clone(),
                    });
                }
                Ok(resp) => {
                    return Err(IngestError::Status {
                        status: resp.status,
                        url,
                    })
                }
                Err(TransportError::Timeout(msg)) => {
                    log::warn!("{url}: {msg} (attempt {})", attempt + 1);
                    last_err = Some(IngestError::Transport(msg));
                }
                Err(TransportError::Other(msg)) => return Err(IngestError::Transport(msg)),
            }
        }
        Err(match last_err {
            Some(IngestError::Status { status, url }) => IngestError::Transport(format!(
                "{url} still failing with status {status} after {RETRY_ATTEMPTS} attempts"
            )),
            Some(e) => e,
            None => IngestError::Transport("no attempts made".into()),
        })
    }

    /// All PMIDs matching `query`, in the service's order, paging by `retmax`.
    pub fn search_ids(&self, query: &str) -> Result<Vec<String>, IngestError> {
        if query.trim().is_empty() {
            return Err(IngestError::InvalidSpec("empty query".into()));
        }
        let retmax = self.session.retmax;
        let mut ids = Vec::new();
        let mut seen = HashSet::new();
        let mut retstart = 0usize;
        loop {
            let body = self.get(
                "esearch.fcgi",
                vec![
                    ("db", self.session.database.clone()),
                    ("term", query.to_string()),
                    ("retstart", retstart.to_string()),
                    ("retmax", retmax.to_string()),
                    ("retmode", "xml".to_string()),
                ],
            )?;
            let page = parse_esearch(&body)?;
            let got = page.ids.len();
            for id in page.ids {
                if seen.insert(id.clone()) {
                    ids.push(id);
                }
            }
            retstart += retmax;
            if got == 0 || retstart >= page.count {
                break;
            }
        }
        Ok(ids)
    }

    /// Fetch full records in batches of at most [`EFETCH_BATCH_LIMIT`] ids.
    /// Every requested id ends up either in `records` or in `skipped`.
    pub fn fetch_records(&self, pmids: &[String]) -> Result<FetchOutcome, IngestError> {
        if pmids.is_empty() {
            return Err(IngestError::InvalidSpec("no pmids to fetch".into()));
        }
        let batch = self.session.retmax.min(EFETCH_BATCH_LIMIT);
        let mut returned: HashMap<String, DocumentRecord> = HashMap::new();
        for chunk in pmids.chunks(batch) {
            let body = self.get(
                "efetch.fcgi",
                vec![
                    ("db", self.session.database.clone()),
                    ("id", chunk.join(",")),
                    ("retmode", "xml".to_string()),
                ],
            )?;
            for rec in parse_pubmed_articles(&body)? {
                returned.entry(rec.pmid.clone()).or_insert(rec);
            }
        }
        let mut out = FetchOutcome::default();
        for id in pmids {
            match returned.remove(id) {
                Some(rec) => out.records.push(rec),
                None => out.skipped.push(id.clone()),
            }
        }
        Ok(out)
    }
}

pub fn search_ids(client: &EutilsClient<'_>, query: &str) -> Result<Vec<String>, IngestError> {
    client.search_ids(query)
}

pub fn fetch_records(client: &EutilsClient<'_>, pmids: &[String]) -> Result<FetchOutcome, IngestError> {
    client.fetch_records(pmids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::RefCell;

    /// Manual clock: `sleep` advances time instantly.
    #[derive(Default)]
    struct FakeClock {
        now: Cell<Duration>,
        sleeps: RefCell<Vec<Duration>>,
    }

    impl Clock for FakeClock {
        fn now(&self) -> Duration {
            self.now.get()
        }
        fn sleep(&self, d: Duration) {
            self.sleeps.borrow_mut().push(d);
            self.now.set(self.now.get() + d);
        }
    }

    type Responder = Box<dyn Fn(&str, &HashMap<String, String>) -> Result<HttpResponse, TransportError>>;

    struct Replay<'c> {
        clock: &'c FakeClock,
        respond: Responder,
        log: RefCell<Vec<(Duration, String, HashMap<String, String>)>>,
    }

    impl Transport for Replay<'_> {
        fn get(&self, url: &str, query: &[(&str, String)]) -> Result<HttpResponse, TransportError> {
            let q: HashMap<String, String> =
                query.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
            self.log
                .borrow_mut()
                .push((self.clock.now(), url.to_string(), q.clone()));
            (self.respond)(url, &q)
        }
    }

    fn ok(body: String) -> Result<HttpResponse, TransportError> {
        Ok(HttpResponse { status: 200, body })
    }

    fn esearch_fixture(all: Vec<&'static str>) -> Responder {
        Box::new(move |_url, q| {
            let start: usize = q["retstart"].parse().unwrap();
            let max: usize = q["retmax"].parse().unwrap();
            let ids: String = all
                .iter()
                .skip(start)
                .take(max)
                .map(|i| format!("<Id>{i}</Id>"))
                .collect();
            ok(format!(
                "<eSearchResult><Count>{}</Count><RetMax>{max}</RetMax><RetStart>{start}</RetStart>\
                 <IdList>{ids}</IdList></eSearchResult>",
                all.len()
            ))
        })
    }

    fn session(retmax: usize) -> FetchSession {
        FetchSession {
            base_url: "http://fixture/eutils".into(),
            retmax,
            ..Default::default()
        }
    }

    #[test]
    fn count_three_single_page() {
        let clock = FakeClock::default();
        let t = Replay { clock: &clock, respond: esearch_fixture(vec!["11", "22", "33"]), log: Default::default() };
        let c = EutilsClient::new(session(20), &t, &clock).unwrap();
        assert_eq!(c.search_ids("q").unwrap(), vec!["11", "22", "33"]);
        let log = t.log.borrow();
        assert_eq!(log.len(), 1);
        assert_eq!(log[0].1, "http://fixture/eutils/esearch.fcgi");
        assert_eq!(log[0].2["db"], "pubmed");
        assert_eq!(log[0].2["term"], "q");
        assert_eq!(log[0].2["retmode"], "xml");
    }

    #[test]
    fn count_zero_is_empty() {
        let clock = FakeClock::default();
        let t = Replay { clock: &clock, respond: esearch_fixture(vec![]), log: Default::default() };
        let c = EutilsClient::new(session(20), &t, &clock).unwrap();
        assert!(c.search_ids("q").unwrap().is_empty());
    }

    #[test]
    fn pages_until_exhausted() {
        let clock = FakeClock::default();
        let t = Replay { clock: &clock, respond: esearch_fixture(vec!["1", "2", "3", "4", "5"]), log: Default::default() };
        let c = EutilsClient::new(session(2), &t, &clock).unwrap();
        assert_eq!(c.search_ids("q").unwrap(), vec!["1", "2", "3", "4", "5"]);
        let starts: Vec<String> = t.log.borrow().iter().map(|l| l.2["retstart"].clone()).collect();
        assert_eq!(starts, vec!["0", "2", "4"]);
    }

    #[test]
    fn requests_respect_rate_limit() {
        let clock = FakeClock::default();
        let ids: Vec<&'static str> = (0..40).map(|i| &*Box::leak(i.to_string().into_boxed_str())).collect();
        let t = Replay { clock: &clock, respond: esearch_fixture(ids), log: Default::default() };
        let c = EutilsClient::new(session(2), &t, &clock).unwrap();
        assert_eq!(c.search_ids("q").unwrap().len(), 40);
        let times: Vec<f64> = t.log.borrow().iter().map(|l| l.0.as_secs_f64()).collect();
        assert_eq!(times.len(), 20);
        for (i, &t0) in times.iter().enumerate() {
            let in_window = times[i..].iter().filter(|&&t1| t1 < t0 + 1.0 - 1e-9).count();
            assert!(in_window <= 3, "{in_window} requests within one second");
        }
    }

    #[test]
    fn api_key_raises_cap_and_is_sent() {
        let clock = FakeClock::default();
        let t = Replay { clock: &clock, respond: esearch_fixture(vec!["1"]), log: Default::default() };
        let mut s = session(5);
        s.requests_per_second = 10.0;
        assert!(EutilsClient::new(s.clone(), &t, &clock).is_err());
        s.api_key = Some("k".into());
        let c = EutilsClient::new(s, &t, &clock).unwrap();
        c.search_ids("q").unwrap();
        assert_eq!(t.log.borrow()[0].2["api_key"], "k");
    }

    #[test]
    fn server_errors_retry_with_backoff() {
        let clock = FakeClock::default();
        let calls = Cell::new(0);
        let calls_ref: &'static Cell<i32> = Box::leak(Box::new(calls));
        let t = Replay {
            clock: &clock,
            respond: Box::new(move |_, _| {
                calls_ref.set(calls_ref.get() + 1);
                if calls_ref.get() < 3 {
                    Ok(HttpResponse { status: 503, body: String::new() })
                } else {
                    ok("<eSearchResult><Count>1</Count><IdList><Id>9</Id></IdList></eSearchResult>".into())
                }
            }),
            log: Default::default(),
        };
        let c = EutilsClient::new(session(5), &t, &clock).unwrap();
        assert_eq!(c.search_ids("q").unwrap(), vec!["9"]);
        let sleeps = clock.sleeps.borrow();
        assert!(sleeps.contains(&Duration::from_secs(1)));
        assert!(sleeps.contains(&Duration::from_secs(2)));
    }

    #[test]
    fn persistent_server_error_is_transport_error() {
        let clock = FakeClock::default();
        let t = Replay {
            clock: &clock,
            respond: Box::new(|_, _| Err(TransportError::Timeout("slow".into()))),
            log: Default::default(),
        };
        let c = EutilsClient::new(session(5), &t, &clock).unwrap();
        assert!(matches!(c.search_ids("q"), Err(IngestError::Transport(_))));
        assert_eq!(t.log.borrow().len(), RETRY_ATTEMPTS);
    }

    #[test]
    fn client_errors_are_terminal() {
        let clock = FakeClock::default();
        let t = Replay {
            clock: &clock,
            respond: Box::new(|_, _| Ok(HttpResponse { status: 400, body: String::new() })),
            log: Default::default(),
        };
        let c = EutilsClient::new(session(5), &t, &clock).unwrap();
        assert!(matches!(c.search_ids("q"), Err(IngestError::Status { status: 400, .. })));
        assert_eq!(t.log.borrow().len(), 1);
    }

    #[test]
    fn malformed_body_is_parse_error() {
        let clock = FakeClock::default();
        let t = Replay { clock: &clock, respond: Box::new(|_, _| ok("<html>oops".into())), log: Default::default() };
        let c = EutilsClient::new(session(5), &t, &clock).unwrap();
        assert!(matches!(c.search_ids("q"), Err(IngestError::Parse(_))));
    }

    fn article(pmid: &str) -> String {
        format!(
            "<PubmedArticle><MedlineCitation><PMID>{pmid}</PMID><Article><ArticleTitle>T{pmid}</ArticleTitle>\
             <Language>eng</Language></Article></MedlineCitation></PubmedArticle>"
        )
    }

    #[test]
    fn fetch_batches_and_reports_skipped() {
        let clock = FakeClock::default();
        let t = Replay {
            clock: &clock,
            respond: Box::new(|_, q| {
                let body: String = q["id"].split(',').filter(|id| *id != "3").map(article).collect();
                ok(format!("<PubmedArticleSet>{body}</PubmedArticleSet>"))
            }),
            log: Default::default(),
        };
        let c = EutilsClient::new(session(2), &t, &clock).unwrap();
        let ids: Vec<String> = ["1", "2", "3", "4", "5"].iter().map(|s| s.to_string()).collect();
        let out = c.fetch_records(&ids).unwrap();
        assert_eq!(out.records.iter().map(|r| r.pmid.as_str()).collect::<Vec<_>>(), vec!["1", "2", "4", "5"]);
        assert_eq!(out.skipped, vec!["3"]);
        assert_eq!(out.records.len() + out.skipped.len(), ids.len());
        assert_eq!(t.log.borrow().len(), 3);
        assert!(t.log.borrow().iter().all(|l| l.1.ends_with("/efetch.fcgi")));
    }

    #[test]
    fn fetch_batch_capped_at_200() {
        let clock = FakeClock::default();
        let t = Replay {
            clock: &clock,
            respond: Box::new(|_, q| {
                let body: String = q["id"].split(',').map(article).collect();
                ok(format!("<PubmedArticleSet>{body}</PubmedArticleSet>"))
            }),
            log: Default::default(),
        };
        let c = EutilsClient::new(session(10_000), &t, &clock).unwrap();
        let ids: Vec<String> = (1..=450).map(|i| i.to_string()).collect();
        let out = c.fetch_records(&ids).unwrap();
        assert_eq!(out.records.len(), 450);
        let sizes: Vec<usize> = t.log.borrow().iter().map(|l| l.2["id"].split(',').count()).collect();
        assert_eq!(sizes, vec![200, 200, 50]);
    }

    #[test]
    fn fetch_requires_ids() {
        let clock = FakeClock::default();
        let t = Replay { clock: &clock, respond: Box::new(|_, _| ok(String::new())), log: Default::default() };
        let c = EutilsClient::new(session(2), &t, &clock).unwrap();
        assert!(c.fetch_records(&[]).is_err());
    }
}
