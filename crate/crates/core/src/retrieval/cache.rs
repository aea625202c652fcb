//! Page fetch, HTML-to-text normalization, and the on-disk page cache.
//!
//! Cache layout: one file per URL under the cache directory, filename = hex
//! SHA-256 of the URL, content = normalized plain text; `manifest.json`
//! maps digests to URLs and fetch timestamps.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::jsonl::atomic_write;

#[derive(Debug, Error)]
pub enum FetchError {
    #[error("fetch of {url} failed: {message}")]
    Transport { url: String, message: String },
    #[error("fetch of {url} returned status {status}")]
    Status { url: String, status: u16 },
    #[error("page {url} is not cached and live fetching is disabled")]
    FetchDisabled { url: String },
    #[error("page cache: {0}")]
    Cache(#[from] CacheError),
}

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("cache io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cache manifest is unreadable: {0}")]
    Manifest(String),
}

/// Retrieves raw page bodies. The HTTP implementation is opt-in; tests and
/// offline runs use [`NoFetch`] against a prefilled cache.
pub trait PageFetcher: Send + Sync {
    fn fetch(&self, url: &str) -> Result<String, FetchError>;
}

/// Refuses every fetch; paired with a prefilled cache.
pub struct NoFetch;

impl PageFetcher for NoFetch {
    fn fetch(&self, url: &str) -> Result<String, FetchError> {
        Err(FetchError::FetchDisabled { url: url.to_string() })
    }
}

/// Live HTTP fetcher.
pub struct HttpFetcher {
    client: reqwest::blocking::Client,
}

impl Default for HttpFetcher {
    fn default() -> Self {
        let client = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(30))
            .user_agent("tacmap/0.1")
            .build()
            .expect("client builds");
        HttpFetcher { client }
    }
}

impl PageFetcher for HttpFetcher {
    fn fetch(&self, url: &str) -> Result<String, FetchError> {
        let response = self.client.get(url).send().map_err(|e| FetchError::Transport {
            url: url.to_string(),
            message: e.to_string(),
        })?;
        let status = response.status().as_u16();
        if status != 200 {
            return Err(FetchError::Status { url: url.to_string(), status });
        }
        response.text().map_err(|e| FetchError::Transport {
            url: url.to_string(),
            message: e.to_string(),
        })
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct Manifest {
    entries: BTreeMap<String, ManifestEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ManifestEntry {
    url: String,
    fetched_at: String,
}

/// Content-addressed page cache. Writes are serialized; reads are lock-free
/// against the filesystem.
pub struct PageCache {
    dir: PathBuf,
    manifest: Mutex<Manifest>,
}

pub fn url_digest(url: &str) -> String {
    hex::encode(Sha256::digest(url.as_bytes()))
}

impl PageCache {
    pub fn open(dir: &std::path::Path) -> Result<PageCache, CacheError> {
        std::fs::create_dir_all(dir).map_err(|e| CacheError::Io {
            path: dir.display().to_string(),
            source: e,
        })?;
        let manifest_path = dir.join("manifest.json");
        let manifest = if manifest_path.exists() {
            let bytes = std::fs::read(&manifest_path).map_err(|e| CacheError::Io {
                path: manifest_path.display().to_string(),
                source: e,
            })?;
            serde_json::from_slice(&bytes).map_err(|e| CacheError::Manifest(e.to_string()))?
        } else {
            Manifest::default()
        };
        Ok(PageCache { dir: dir.to_path_buf(), manifest: Mutex::new(manifest) })
    }

    pub fn dir(&self) -> &std::path::Path {
        &self.dir
    }

    fn page_path(&self, url: &str) -> PathBuf {
        self.dir.join(url_digest(url))
    }

    pub fn get(&self, url: &str) -> Result<Option<String>, CacheError> {
        let path = self.page_path(url);
        match std::fs::read_to_string(&path) {
            Ok(text) => Ok(Some(text)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(CacheError::Io { path: path.display().to_string(), source: e }),
        }
    }

    /// Store normalized page text and record it in the manifest.
    pub fn put(&self, url: &str, text: &str) -> Result<(), CacheError> {
        let path = self.page_path(url);
        let mut manifest = self.manifest.lock().expect("manifest lock");
        atomic_write(&path, text.as_bytes())
            .map_err(|e| CacheError::Io { path: path.display().to_string(), source: std::io::Error::other(e.to_string()) })?;
        manifest.entries.insert(
            url_digest(url),
            ManifestEntry { url: url.to_string(), fetched_at: chrono::Utc::now().to_rfc3339() },
        );
        let bytes = serde_json::to_vec_pretty(&*manifest).expect("manifest serializes");
        let manifest_path = self.dir.join("manifest.json");
        atomic_write(&manifest_path, &bytes).map_err(|e| CacheError::Io {
            path: manifest_path.display().to_string(),
            source: std::io::Error::other(e.to_string()),
        })
    }

    /// Cached plain text for the URL, fetching, normalizing, and storing it
    /// on a miss.
    pub fn fetch_page_text(
        &self,
        url: &str,
        fetcher: &dyn PageFetcher,
    ) -> Result<String, FetchError> {
        if let Some(text) = self.get(url)? {
            return Ok(text);
        }
        let raw = fetcher.fetch(url)?;
        let text = html_to_text(&raw);
        self.put(url, &text)?;
        Ok(text)
    }
}

const DROPPED_ELEMENTS: [&str; 4] = ["script", "style", "nav", "head"];
const BLOCK_ELEMENTS: [&str; 18] = [
    "p", "div", "br", "li", "ul", "ol", "tr", "td", "th", "table", "h1", "h2", "h3", "h4", "h5",
    "h6", "section", "article",
];

fn tag_name(tag_body: &str) -> String {
    tag_body
        .trim_start_matches('/')
        .chars()
        .take_while(|c| c.is_ascii_alphanumeric())
        .collect::<String>()
        .to_ascii_lowercase()
}

/// Strip markup down to visible text. Scripts, styles, and navigation
/// subtrees are removed entirely; block elements become newlines; character
/// entities for the common ASCII set are decoded; whitespace is normalized
/// per line. Tactic names appearing in page bodies are preserved verbatim.
pub fn html_to_text(html: &str) -> String {
    let chars: Vec<char> = html.chars().collect();
    let mut out = String::with_capacity(html.len() / 2);
    let mut i = 0usize;
    let mut skip_until: Option<String> = None;
    while i < chars.len() {
        if chars[i] == '<' {
            let close = chars[i..].iter().position(|c| *c == '>').map(|p| i + p);
            let Some(close) = close else {
                break; // unterminated tag, nothing visible follows
            };
            let body: String = chars[i + 1..close].iter().collect();
            let name = tag_name(body.trim());
            if let Some(waiting) = &skip_until {
                if body.trim().starts_with('/') && &name == waiting {
                    skip_until = None;
                }
            } else if DROPPED_ELEMENTS.contains(&name.as_str()) && !body.trim().starts_with('/') {
                if !body.trim_end().ends_with('/') {
                    skip_until = Some(name.clone());
                }
            } else if BLOCK_ELEMENTS.contains(&name.as_str()) {
                out.push('\n');
            }
            i = close + 1;
            continue;
        }
        if skip_until.is_none() {
            out.push(chars[i]);
        }
        i += 1;
    }
    let decoded = decode_entities(&out);
    // normalize: trim lines, collapse intra-line whitespace, drop blank runs
    let mut lines: Vec<String> = Vec::new();
    for line in decoded.lines() {
        let collapsed = crate::text::collapse_whitespace(line);
        if !collapsed.is_empty() {
            lines.push(collapsed);
        }
    }
    lines.join("\n")
}

fn decode_entities(text: &str) -> String {
    text.replace("&nbsp;", " ")
        .replace("&lt;", "<")
        .replace("&gt;", ">")
        .replace("&quot;", "\"")
        .replace("&#39;", "'")
        .replace("&amp;", "&")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct CountingFetcher {
        calls: AtomicUsize,
        body: String,
    }

    impl PageFetcher for CountingFetcher {
        fn fetch(&self, _url: &str) -> Result<String, FetchError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            Ok(self.body.clone())
        }
    }

    #[test]
    fn html_keeps_tactic_names_and_drops_scripts() {
        let html = "<html><head><title>x</title></head><body>\
            <script>var a = 'Impact';</script>\
            <nav><a href=\"/\">Collection</a></nav>\
            <p>Tactics: Defense Evasion, Persistence</p>\
            <div>Adversaries &amp; tools</div></body></html>";
        let text = html_to_text(html);
        assert!(text.contains("Defense Evasion"));
        assert!(text.contains("Persistence"));
        assert!(text.contains("Adversaries & tools"));
        assert!(!text.contains("Impact"));
        assert!(!text.contains("Collection"));
        assert!(!text.contains("var a"));
    }

    #[test]
    fn block_elements_separate_lines() {
        let text = html_to_text("<p>one</p><p>two</p><span>three</span>");
        assert_eq!(text, "one\ntwo\nthree");
        assert_eq!(html_to_text("a<br/>b<span>c</span>"), "a\nbc");
    }

    #[test]
    fn second_fetch_hits_the_cache() {
        let dir = tempfile::tempdir().unwrap();
        let cache = PageCache::open(dir.path()).unwrap();
        let fetcher = CountingFetcher {
            calls: AtomicUsize::new(0),
            body: "<p>Tactics: Discovery</p>".into(),
        };
        let url = "https://example.test/techniques/T0001/";
        let first = cache.fetch_page_text(url, &fetcher).unwrap();
        let second = cache.fetch_page_text(url, &fetcher).unwrap();
        assert_eq!(first, second);
        assert_eq!(first, "Tactics: Discovery");
        assert_eq!(fetcher.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn unreachable_url_with_cold_cache_errors() {
        let dir = tempfile::tempdir().unwrap();
        let cache = PageCache::open(dir.path()).unwrap();
        let err = cache.fetch_page_text("https://example.test/missing", &NoFetch).unwrap_err();
        assert!(matches!(err, FetchError::FetchDisabled { url } if url.contains("missing")));
    }

    #[test]
    fn cache_files_are_keyed_by_url_digest() {
        let dir = tempfile::tempdir().unwrap();
        let cache = PageCache::open(dir.path()).unwrap();
        cache.put("https://example.test/a", "text a").unwrap();
        let digest = url_digest("https://example.test/a");
        assert!(dir.path().join(&digest).exists());
        let manifest = std::fs::read_to_string(dir.path().join("manifest.json")).unwrap();
        assert!(manifest.contains("https://example.test/a"));
        assert!(manifest.contains(&digest));
        // reopen sees the entry
        let reopened = PageCache::open(dir.path()).unwrap();
        assert_eq!(reopened.get("https://example.test/a").unwrap().unwrap(), "text a");
    }
}
