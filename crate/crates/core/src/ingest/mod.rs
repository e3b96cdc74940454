//! Page acquisition and parsing: roster pages become [`RosterEntry`] lists,
//! member pages become [`SectionMap`]s, and both are merged into
//! [`Politician`] records.

mod cache;
mod html;
mod merge;
mod roster;
mod wikitext;

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Chamber, CongressTerm, Section, SectionMap, LEAD_HEADING};

pub use cache::{FetchCache, CACHE_ENV};
pub use merge::{merge_identities, normalize_party, slugify, IngestGap, MergeOutcome, PartyConflict};
pub use roster::parse_roster;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("fetch of {title:?} failed (retryable: {retryable}): {message}")]
    Fetch { title: String, retryable: bool, message: String },
    #[error("page {0:?} is not in the cache")]
    MissingFixture(String),
    #[error("roster parse failed: {0}")]
    RosterParse(String),
    #[error("page {0:?} has no headings and no lead text")]
    EmptyPage(String),
    #[error("congress {0} is outside the supported window")]
    CongressOutOfRange(u32),
    #[error("dump line {line}: {message}")]
    Dump { line: usize, message: String },
    #[error("cache I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("cache metadata: {0}")]
    Meta(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PageSource {
    Live,
    Dump,
    Fixture,
}

/// Page body in one of the supported input formats.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payload {
    Html(String),
    Wikitext(String),
    Sections(Vec<Section>),
}

impl Payload {
    pub fn is_empty(&self) -> bool {
        match self {
            Payload::Html(s) | Payload::Wikitext(s) => s.trim().is_empty(),
            Payload::Sections(s) => s.is_empty(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawPage {
    pub title: String,
    pub page_id: Option<u64>,
    pub payload: Payload,
    pub retrieved_at: DateTime<Utc>,
    pub source: PageSource,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RosterEntry {
    pub name: String,
    pub party_text: String,
    pub state: String,
    pub chamber: Chamber,
    pub congress: CongressTerm,
    pub page_title: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FetchMode {
    LiveThenCache,
    CacheOnly,
}

/// Something that can retrieve a page over the network.
pub trait LiveSource: Sync {
    fn fetch_live(&self, title: &str) -> Result<RawPage, IngestError>;
}

/// Fetches rendered article HTML from the MediaWiki action API.
pub struct WikipediaClient {
    endpoint: String,
    client: reqwest::blocking::Client,
}

impl WikipediaClient {
    pub fn new(endpoint: impl Into<String>) -> Result<Self, IngestError> {
        let client = reqwest::blocking::Client::builder()
            .user_agent(concat!("polariscope/", env!("CARGO_PKG_VERSION")))
            .timeout(Duration::from_secs(30))
            .build()
            .map_err(|e| IngestError::Fetch { title: String::new(), retryable: false, message: e.to_string() })?;
        Ok(WikipediaClient { endpoint: endpoint.into(), client })
    }

    pub fn english() -> Result<Self, IngestError> {
        Self::new("https://en.wikipedia.org/w/api.php")
    }
}

#[derive(Deserialize)]
struct ParseResponse {
    parse: ParseBody,
}

#[derive(Deserialize)]
struct ParseBody {
    title: String,
    pageid: Option<u64>,
    text: String,
}

impl LiveSource for WikipediaClient {
    fn fetch_live(&self, title: &str) -> Result<RawPage, IngestError> {
        let fail = |retryable: bool, message: String| IngestError::Fetch {
            title: title.to_string(),
            retryable,
            message,
        };
        let resp = self
            .client
            .get(&self.endpoint)
            .query(&[
                ("action", "parse"),
                ("page", title),
                ("prop", "text"),
                ("format", "json"),
                ("formatversion", "2"),
                ("redirects", "1"),
            ])
            .send()
            .map_err(|e| fail(true, e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(fail(status.is_server_error() || status.as_u16() == 429, format!("HTTP {status}")));
        }
        let text = resp.text().map_err(|e| fail(true, e.to_string()))?;
        let body: ParseResponse = serde_json::from_str(&text).map_err(|e| fail(false, e.to_string()))?;
        Ok(RawPage {
            title: body.parse.title,
            page_id: body.parse.pageid,
            payload: Payload::Html(body.parse.text),
            retrieved_at: Utc::now(),
            source: PageSource::Live,
        })
    }
}

/// Returns a page from the cache, falling back to the live source in
/// [`FetchMode::LiveThenCache`]. Live responses are persisted before they are
/// returned, so repeated fetches of one title yield identical payloads.
pub fn fetch_page(
    title: &str,
    cache: &FetchCache,
    mode: FetchMode,
    live: Option<&dyn LiveSource>,
) -> Result<RawPage, IngestError> {
    if let Some(page) = cache.get(title)? {
        return Ok(page);
    }
    match (mode, live) {
        (FetchMode::CacheOnly, _) | (FetchMode::LiveThenCache, None) => {
            Err(IngestError::MissingFixture(title.to_string()))
        }
        (FetchMode::LiveThenCache, Some(src)) => {
            let mut page = src.fetch_live(title)?;
            // Cache under the requested title so later lookups hit.
            page.title = title.to_string();
            cache.put(&page)?;
            Ok(page)
        }
    }
}

#[derive(Debug, Clone)]
pub struct FetchOptions {
    pub max_in_flight: usize,
    pub politeness_delay: Duration,
}

impl Default for FetchOptions {
    fn default() -> Self {
        FetchOptions { max_in_flight: 4, politeness_delay: Duration::from_millis(250) }
    }
}

/// Fetches many titles with at most `max_in_flight` concurrent requests.
/// Results come back in input order.
pub fn fetch_many(
    titles: &[String],
    cache: &FetchCache,
    mode: FetchMode,
    live: Option<&dyn LiveSource>,
    opts: &FetchOptions,
) -> Vec<Result<RawPage, IngestError>> {
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<RawPage, IngestError>>>> =
        Mutex::new((0..titles.len()).map(|_| None).collect());
    let workers = opts.max_in_flight.max(1).min(titles.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= titles.len() {
                    break;
                }
                let was_cached = cache.contains(&titles[i]);
                let r = fetch_page(&titles[i], cache, mode, live);
                results.lock().expect("fetch results poisoned")[i] = Some(r);
                if !was_cached && mode == FetchMode::LiveThenCache && !opts.politeness_delay.is_zero() {
                    std::thread::sleep(opts.politeness_delay);
                }
            });
        }
    });
    results
        .into_inner()
        .expect("fetch results poisoned")
        .into_iter()
        .map(|r| r.expect("every index is visited"))
        .collect()
}

#[derive(Deserialize)]
struct DumpRecord {
    title: String,
    page_id: Option<u64>,
    sections: Vec<Section>,
}

/// Reads a JSON Lines dump of pre-parsed pages.
pub fn read_dump(path: &Path) -> Result<Vec<RawPage>, IngestError> {
    let text = std::fs::read_to_string(path)?;
    parse_dump(&text)
}

pub fn parse_dump(text: &str) -> Result<Vec<RawPage>, IngestError> {
    let mut pages = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: DumpRecord = serde_json::from_str(line)
            .map_err(|e| IngestError::Dump { line: i + 1, message: e.to_string() })?;
        if rec.title.trim().is_empty() {
            return Err(IngestError::Dump { line: i + 1, message: "empty title".into() });
        }
        pages.push(RawPage {
            title: rec.title,
            page_id: rec.page_id,
            payload: Payload::Sections(rec.sections),
            retrieved_at: DateTime::<Utc>::UNIX_EPOCH,
            source: PageSource::Dump,
        });
    }
    Ok(pages)
}

/// Section headings whose bodies are citation apparatus rather than prose.
const REFERENCE_SECTIONS: &[&str] = &[
    "references",
    "notes",
    "citations",
    "footnotes",
    "sources",
    "bibliography",
    "external links",
    "see also",
    "further reading",
    "notes and references",
];

pub(crate) fn is_reference_section(heading: &str) -> bool {
    let key = crate::corpus::heading_key(heading);
    REFERENCE_SECTIONS.contains(&key.as_str())
}

/// Intermediate section list produced by the format-specific parsers: the
/// lead paragraphs followed by top-level sections with their paragraphs.
#[derive(Debug, Default)]
pub(crate) struct Outline {
    pub lead: Vec<String>,
    pub sections: Vec<(String, Vec<String>)>,
}

impl Outline {
    pub fn push_paragraph(&mut self, text: String) {
        if text.is_empty() {
            return;
        }
        match self.sections.last_mut() {
            Some((_, paras)) => paras.push(text),
            None => self.lead.push(text),
        }
    }

    fn into_section_map(self, title: &str) -> Result<SectionMap, IngestError> {
        let mut map = SectionMap::new();
        let lead = self.lead.join("\n");
        let has_lead = !lead.trim().is_empty();
        if has_lead {
            map.push_unique(LEAD_HEADING, lead);
        }
        let mut saw_heading = false;
        for (heading, paras) in self.sections {
            if heading.trim().is_empty() || is_reference_section(&heading) {
                continue;
            }
            saw_heading = true;
            map.push_unique(&heading, paras.join("\n"));
        }
        if map.is_empty() || (!saw_heading && !has_lead) {
            return Err(IngestError::EmptyPage(title.to_string()));
        }
        Ok(map)
    }
}

/// Splits a member page into its ordered heading → body map. Subsection text
/// is folded into the enclosing top-level heading and the lead paragraph is
/// stored under [`LEAD_HEADING`].
pub fn parse_sections(page: &RawPage) -> Result<SectionMap, IngestError> {
    let outline = match &page.payload {
        Payload::Html(h) => html::outline(h),
        Payload::Wikitext(w) => wikitext::outline(w),
        Payload::Sections(list) => {
            let mut o = Outline::default();
            for s in list {
                let h = s.heading.trim();
                if h.is_empty() || h == LEAD_HEADING {
                    if !s.text.trim().is_empty() {
                        o.lead.push(s.text.trim().to_string());
                    }
                } else {
                    o.sections.push((h.to_string(), vec![s.text.trim().to_string()]));
                }
            }
            o
        }
    };
    outline.into_section_map(&page.title)
}

pub(crate) fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}
