use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{IngestError, PageSource, Payload, RawPage};
use crate::corpus::Section;

/// Environment variable that overrides the cache root.
pub const CACHE_ENV: &str = "POLARISCOPE_CACHE";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum PayloadFormat {
    Html,
    Wikitext,
    Sections,
}

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    title: String,
    page_id: Option<u64>,
    retrieved_at: DateTime<Utc>,
    source: PageSource,
    #[serde(default = "default_format")]
    format: PayloadFormat,
}

fn default_format() -> PayloadFormat {
    PayloadFormat::Html
}

/// Append-only page cache: `<root>/<sha256(title)>.html` with a
/// `<...>.meta.json` sidecar. Entries are never evicted or overwritten.
#[derive(Debug)]
pub struct FetchCache {
    root: PathBuf,
    write_lock: Mutex<()>,
}

impl FetchCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        FetchCache { root: root.into(), write_lock: Mutex::new(()) }
    }

    /// Uses `$POLARISCOPE_CACHE` when set, otherwise `default_root`.
    pub fn from_env_or(default_root: impl Into<PathBuf>) -> Self {
        match std::env::var_os(CACHE_ENV) {
            Some(v) if !v.is_empty() => Self::new(PathBuf::from(v)),
            _ => Self::new(default_root),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn stem(&self, title: &str) -> PathBuf {
        let digest = Sha256::digest(title.as_bytes());
        self.root.join(hex::encode(digest))
    }

    fn body_path(&self, title: &str) -> PathBuf {
        self.stem(title).with_extension("html")
    }

    fn meta_path(&self, title: &str) -> PathBuf {
        self.stem(title).with_extension("meta.json")
    }

    pub fn contains(&self, title: &str) -> bool {
        self.body_path(title).exists()
    }

    /// Cached pages are reported with source [`PageSource::Dump`].
    pub fn get(&self, title: &str) -> Result<Option<RawPage>, IngestError> {
        let body_path = self.body_path(title);
        if !body_path.exists() {
            return Ok(None);
        }
        let body = fs::read_to_string(&body_path)?;
        let meta_path = self.meta_path(title);
        let (page_id, retrieved_at, format) = if meta_path.exists() {
            let meta: Meta = serde_json::from_slice(&fs::read(&meta_path)?)?;
            (meta.page_id, meta.retrieved_at, meta.format)
        } else {
            (None, DateTime::<Utc>::UNIX_EPOCH, PayloadFormat::Html)
        };
        let payload = match format {
            PayloadFormat::Html => Payload::Html(body),
            PayloadFormat::Wikitext => Payload::Wikitext(body),
            PayloadFormat::Sections => Payload::Sections(serde_json::from_str::<Vec<Section>>(&body)?),
        };
        Ok(Some(RawPage { title: title.to_string(), page_id, payload, retrieved_at, source: PageSource::Dump }))
    }

    /// Persists a page unless the title is already cached.
    pub fn put(&self, page: &RawPage) -> Result<(), IngestError> {
        let _guard = self.write_lock.lock().expect("cache lock poisoned");
        if self.contains(&page.title) {
            return Ok(());
        }
        fs::create_dir_all(&self.root)?;
        let (format, body) = match &page.payload {
            Payload::Html(h) => (PayloadFormat::Html, h.clone()),
            Payload::Wikitext(w) => (PayloadFormat::Wikitext, w.clone()),
            Payload::Sections(s) => (PayloadFormat::Sections, serde_json::to_string(s)?),
        };
        let meta = Meta {
            title: page.title.clone(),
            page_id: page.page_id,
            retrieved_at: page.retrieved_at,
            source: page.source,
            format,
        };
        // Sidecar first, body last: a body on disk implies complete metadata.
        write_atomic(&self.meta_path(&page.title), serde_json::to_string_pretty(&meta)?.as_bytes())?;
        write_atomic(&self.body_path(&page.title), body.as_bytes())?;
        Ok(())
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(tmp, path)
}
