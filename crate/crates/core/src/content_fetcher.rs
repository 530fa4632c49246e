//! Page acquisition without rendering: one GET per call, body-text
//! stripping and media URL discovery.

use std::collections::{HashMap, HashSet};
use std::io::Read;
use std::sync::{Mutex, OnceLock};
use std::time::{Duration, Instant};

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

pub const USER_AGENT: &str = concat!("phishlayer-fetcher/", env!("CARGO_PKG_VERSION"));
pub const MAX_REDIRECTS: usize = 5;
pub const DEFAULT_TIMEOUT_MS: u64 = 10_000;
pub const DEFAULT_PAGE_MAX_BYTES: usize = 2 * 1024 * 1024;
pub const DEFAULT_MEDIA_MAX_BYTES: usize = 20 * 1024 * 1024;

pub const IMAGE_EXTENSIONS: [&str; 7] = ["png", "jpg", "jpeg", "gif", "bmp", "webp", "svg"];
pub const VIDEO_EXTENSIONS: [&str; 5] = ["mp4", "webm", "avi", "mov", "mkv"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FetchLimits {
    pub timeout_ms: u64,
    pub max_bytes: usize,
}

impl FetchLimits {
    pub fn page() -> Self {
        Self {
            timeout_ms: DEFAULT_TIMEOUT_MS,
            max_bytes: DEFAULT_PAGE_MAX_BYTES,
        }
    }

    pub fn media() -> Self {
        Self {
            timeout_ms: DEFAULT_TIMEOUT_MS,
            max_bytes: DEFAULT_MEDIA_MAX_BYTES,
        }
    }
}

impl Default for FetchLimits {
    fn default() -> Self {
        Self::page()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum FetchError {
    #[error("unsupported URL {0}")]
    UnsupportedUrl(String),
    #[error("timed out")]
    Timeout,
    #[error("connection failed: {0}")]
    Connection(String),
    #[error("too many redirects")]
    TooManyRedirects,
    #[error("HTTP status {0}")]
    Status(u16),
    #[error("read failed: {0}")]
    Read(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FetchMeta {
    pub status_code: u16,
    pub bytes_read: usize,
    pub elapsed_ms: u64,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchResponse {
    /// URL after redirects.
    pub final_url: Url,
    pub body: Vec<u8>,
    pub meta: FetchMeta,
}

/// One GET per call. Non-2xx final statuses are errors.
pub trait Fetcher: Send + Sync {
    fn get(&self, url: &Url, limits: &FetchLimits) -> Result<FetchResponse, FetchError>;
}

fn check_scheme(url: &Url) -> Result<(), FetchError> {
    match url.scheme() {
        "http" | "https" if url.host().is_some() => Ok(()),
        _ => Err(FetchError::UnsupportedUrl(url.to_string())),
    }
}

/// Blocking HTTP/1.1 client. No cookie store; TLS verification is on
/// unless built with `insecure`.
pub struct HttpFetcher {
    client: reqwest::blocking::Client,
}

impl HttpFetcher {
    pub fn new(insecure: bool) -> Result<Self, FetchError> {
        let client = reqwest::blocking::Client::builder()
            .user_agent(USER_AGENT)
            .redirect(reqwest::redirect::Policy::limited(MAX_REDIRECTS))
            .tls_danger_accept_invalid_certs(insecure)
            .http1_only()
            .build()
            .map_err(|e| FetchError::Connection(e.to_string()))?;
        Ok(Self { client })
    }
}

fn classify(e: &reqwest::Error) -> FetchError {
    if e.is_timeout() {
        FetchError::Timeout
    } else if e.is_redirect() {
        FetchError::TooManyRedirects
    } else {
        let mut msg = e.to_string();
        let mut src = std::error::Error::source(e);
        while let Some(s) = src {
            msg = format!("{msg}: {s}");
            src = s.source();
        }
        FetchError::Connection(msg)
    }
}

impl Fetcher for HttpFetcher {
    fn get(&self, url: &Url, limits: &FetchLimits) -> Result<FetchResponse, FetchError> {
        check_scheme(url)?;
        let start = Instant::now();
        let resp = self
            .client
            .get(url.clone())
            .timeout(Duration::from_millis(limits.timeout_ms))
            .send()
            .map_err(|e| classify(&e))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(FetchError::Status(status.as_u16()));
        }
        let final_url = resp.url().clone();
        let mut body = Vec::new();
        resp.take(limits.max_bytes as u64 + 1)
            .read_to_end(&mut body)
            .map_err(|e| {
                if e.kind() == std::io::ErrorKind::TimedOut
                    || e.to_string().to_lowercase().contains("timed out")
                {
                    FetchError::Timeout
                } else {
                    FetchError::Read(e.to_string())
                }
            })?;
        let truncated = body.len() > limits.max_bytes;
        body.truncate(limits.max_bytes);
        Ok(FetchResponse {
            final_url,
            meta: FetchMeta {
                status_code: status.as_u16(),
                bytes_read: body.len(),
                elapsed_ms: start.elapsed().as_millis() as u64,
                truncated,
            },
            body,
        })
    }
}

/// Serves fixed responses from memory and records every requested URL.
#[derive(Default)]
pub struct InMemoryFetcher {
    pages: HashMap<String, (u16, Vec<u8>)>,
    log: Mutex<Vec<String>>,
}

impl InMemoryFetcher {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, url: &str, status: u16, body: impl Into<Vec<u8>>) {
        let key = Url::parse(url)
            .map(|u| u.to_string())
            .unwrap_or_else(|_| url.to_string());
        self.pages.insert(key, (status, body.into()));
    }

    pub fn requests(&self) -> Vec<String> {
        self.log.lock().expect("request log").clone()
    }
}

impl Fetcher for InMemoryFetcher {
    fn get(&self, url: &Url, limits: &FetchLimits) -> Result<FetchResponse, FetchError> {
        check_scheme(url)?;
        self.log.lock().expect("request log").push(url.to_string());
        let (status, body) = self
            .pages
            .get(url.as_str())
            .ok_or_else(|| FetchError::Connection(format!("no route to {url}")))?;
        if !(200..300).contains(status) {
            return Err(FetchError::Status(*status));
        }
        let truncated = body.len() > limits.max_bytes;
        let body = body[..body.len().min(limits.max_bytes)].to_vec();
        Ok(FetchResponse {
            final_url: url.clone(),
            meta: FetchMeta {
                status_code: *status,
                bytes_read: body.len(),
                elapsed_ms: 0,
                truncated,
            },
            body,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageContent {
    pub base_url: Url,
    pub body_text: String,
    pub image_urls: Vec<Url>,
    pub video_urls: Vec<Url>,
    pub fetch: FetchMeta,
}

pub fn fetch_page(
    fetcher: &dyn Fetcher,
    url: &Url,
    limits: &FetchLimits,
) -> Result<FetchResponse, FetchError> {
    fetcher.get(url, limits)
}

/// Fetches `url` and extracts body text and media links, resolving
/// relative references against the final URL.
pub fn scrape_page(
    fetcher: &dyn Fetcher,
    url: &Url,
    limits: &FetchLimits,
) -> Result<PageContent, FetchError> {
    let resp = fetch_page(fetcher, url, limits)?;
    let (image_urls, video_urls) = extract_media_urls(&resp.body, &resp.final_url);
    Ok(PageContent {
        body_text: extract_body_text(&resp.body),
        image_urls,
        video_urls,
        base_url: resp.final_url,
        fetch: resp.meta,
    })
}

fn re(cell: &'static OnceLock<Regex>, pattern: &str) -> &'static Regex {
    cell.get_or_init(|| Regex::new(pattern).expect("valid pattern"))
}

/// The first `<body ...>` span up to `</body>` (or the end), or the whole
/// document when there is no body tag.
fn body_span(doc: &str) -> &str {
    static OPEN: OnceLock<Regex> = OnceLock::new();
    static CLOSE: OnceLock<Regex> = OnceLock::new();
    let Some(open) = re(&OPEN, r"(?i)<body\b[^>]*>").find(doc) else {
        return doc;
    };
    let rest = &doc[open.end()..];
    match re(&CLOSE, r"(?i)</body\s*>").find(rest) {
        Some(close) => &rest[..close.start()],
        None => rest,
    }
}

/// Drops comments and script/style elements (unterminated ones run to the end).
fn remove_non_content(markup: &str) -> String {
    static COMMENT: OnceLock<Regex> = OnceLock::new();
    static SCRIPT: OnceLock<Regex> = OnceLock::new();
    static STYLE: OnceLock<Regex> = OnceLock::new();
    let s = re(&COMMENT, r"(?s)<!--.*?(?:-->|\z)").replace_all(markup, " ");
    let s = re(&SCRIPT, r"(?is)<script\b[^>]*>.*?(?:</script\s*>|\z)").replace_all(&s, " ");
    re(&STYLE, r"(?is)<style\b[^>]*>.*?(?:</style\s*>|\z)")
        .replace_all(&s, " ")
        .into_owned()
}

fn decode_entities_once(s: &str) -> String {
    s.replace("&lt;", "<")
        .replace("&gt;", ">")
        .replace("&quot;", "\"")
        .replace("&#39;", "'")
        .replace("&amp;", "&")
}

/// Strips markup down to visible body text.
///
/// Entity decoding repeats until nothing changes and any angle bracket it
/// produces becomes a space, so the result never contains `<` or `>` and
/// the function is idempotent.
pub fn extract_body_text(markup: &[u8]) -> String {
    static TAG: OnceLock<Regex> = OnceLock::new();
    let doc = String::from_utf8_lossy(markup);
    let content = remove_non_content(body_span(&doc));
    let stripped = re(&TAG, r"<[^>]*>").replace_all(&content, " ");
    let mut text = stripped.replace(['<', '>'], " ");
    loop {
        let decoded = decode_entities_once(&text);
        if decoded == text {
            break;
        }
        text = decoded;
    }
    text.replace(['<', '>'], " ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MediaCategory {
    Image,
    Video,
}

/// Category from the last path segment's extension, case-insensitively.
/// The query string is not part of the path and so never matches.
pub fn media_category(url: &Url) -> Option<MediaCategory> {
    let last = url.path_segments()?.next_back()?;
    let (_, ext) = last.rsplit_once('.')?;
    let ext = ext.to_ascii_lowercase();
    if IMAGE_EXTENSIONS.contains(&ext.as_str()) {
        Some(MediaCategory::Image)
    } else if VIDEO_EXTENSIONS.contains(&ext.as_str()) {
        Some(MediaCategory::Video)
    } else {
        None
    }
}

/// Image and video URLs referenced by the body: `src`/`href` attribute
/// values in document order, then bare words of the visible text. Relative
/// references resolve against `base_url`; only http(s) results are kept,
/// each URL once.
pub fn extract_media_urls(markup: &[u8], base_url: &Url) -> (Vec<Url>, Vec<Url>) {
    static ATTR: OnceLock<Regex> = OnceLock::new();
    let doc = String::from_utf8_lossy(markup);
    let content = remove_non_content(body_span(&doc));
    let attr = re(
        &ATTR,
        r#"(?i)\b(?:src|href)\s*=\s*(?:"([^"]*)"|'([^']*)'|([^\s"'>]+))"#,
    );
    let mut candidates: Vec<String> = attr
        .captures_iter(&content)
        .filter_map(|c| c.get(1).or(c.get(2)).or(c.get(3)))
        .map(|m| decode_entities_once(m.as_str().trim()))
        .collect();
    let text = extract_body_text(markup);
    candidates.extend(text.split_whitespace().map(|w| {
        w.trim_start_matches(['"', '\'', '(', '[', '{'])
            .trim_end_matches(['"', '\'', ')', ']', '}', ',', ';', ':', '!', '?', '.'])
            .to_string()
    }));

    let mut seen = HashSet::new();
    let mut images = Vec::new();
    let mut videos = Vec::new();
    for c in candidates.iter().filter(|c| !c.is_empty()) {
        let Ok(url) = base_url.join(c) else { continue };
        if !matches!(url.scheme(), "http" | "https") || url.host().is_none() {
            continue;
        }
        let Some(category) = media_category(&url) else {
            continue;
        };
        if !seen.insert(url.to_string()) {
            continue;
        }
        match category {
            MediaCategory::Image => images.push(url),
            MediaCategory::Video => videos.push(url),
        }
    }
    (images, videos)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> Url {
        Url::parse("http://h/").unwrap()
    }

    #[test]
    fn body_text_examples() {
        assert_eq!(
            extract_body_text(b"<html><body><p>Hello</p></body></html>"),
            "Hello"
        );
        assert_eq!(
            extract_body_text(b"<body>a &amp; b<script>x()</script></body>"),
            "a & b"
        );
        assert_eq!(extract_body_text(b""), "");
        assert_eq!(
            extract_body_text(
                b"<head><title>T</title></head><BODY class=x>in<style>p{}</style> side</BODY>after"
            ),
            "in side"
        );
    }

    #[test]
    fn body_text_never_contains_angle_brackets() {
        let t = extract_body_text(b"<body>1 &lt; 2 &amp;gt; 0 a < b</body>");
        assert!(!t.contains('<') && !t.contains('>'), "{t}");
        assert_eq!(extract_body_text(t.as_bytes()), t);
    }

    #[test]
    fn media_examples() {
        let (img, vid) = extract_media_urls(br#"<img src="/a.png">"#, &base());
        assert_eq!(img, vec![Url::parse("http://h/a.png").unwrap()]);
        assert!(vid.is_empty());

        let (img, vid) = extract_media_urls(b"<body>watch promo.mp4 now</body>", &base());
        assert!(img.is_empty());
        assert_eq!(vid, vec![Url::parse("http://h/promo.mp4").unwrap()]);

        let (img, _) = extract_media_urls(
            br#"<img src="x.PNG?v=1"><a href='x.PNG?v=1'>x</a>"#,
            &base(),
        );
        assert_eq!(img.len(), 1);
    }

    #[test]
    fn non_media_and_non_http_links_are_ignored() {
        let markup = br#"<a href="page.html">p</a><img src="data:image/png;base64,AAA"><a href="ftp://h/x.png">f</a><a href="/x.png.txt">t</a>"#;
        let (img, vid) = extract_media_urls(markup, &base());
        assert!(img.is_empty() && vid.is_empty());
    }

    #[test]
    fn in_memory_fetcher_truncates_and_logs() {
        let mut f = InMemoryFetcher::new();
        f.insert("http://h/big", 200, vec![b'x'; 100]);
        f.insert("http://h/gone", 404, "");
        let limits = FetchLimits {
            timeout_ms: 10,
            max_bytes: 10,
        };
        let r = f
            .get(&Url::parse("http://h/big").unwrap(), &limits)
            .unwrap();
        assert!(r.meta.truncated);
        assert_eq!(r.body.len(), 10);
        let e = f
            .get(&Url::parse("http://h/gone").unwrap(), &limits)
            .unwrap_err();
        assert_eq!(e, FetchError::Status(404));
        assert_eq!(f.requests().len(), 2);
    }
}
