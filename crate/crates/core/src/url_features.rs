//! URL feature schema, live lexical extraction and chi-squared selection.
//!
//! The reference schema mirrors the 87-column benchmark layout: 56 features
//! derived from the URL string, 24 from the landing page and 7 from external
//! services. Only URL-string features can be computed when scanning a live
//! URL; the rest are filled with `0.0` and reported as imputed.

use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::{Host, Url};

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("malformed URL: bad {component}: {detail}")]
    Parse {
        component: &'static str,
        detail: String,
    },
    #[error("feature {feature} has negative value {value} in sample {sample}")]
    NegativeValue {
        sample: usize,
        feature: usize,
        value: f64,
    },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("vector has {got} values but schema has {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid argument: {0}")]
    Argument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureGroup {
    UrlLexical,
    PageContent,
    ExternalService,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Legitimate = 0,
    Phishing = 1,
}

impl Label {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_bool(phishing: bool) -> Self {
        if phishing {
            Label::Phishing
        } else {
            Label::Legitimate
        }
    }

    pub fn is_phishing(self) -> bool {
        self == Label::Phishing
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEntry {
    pub name: String,
    pub group: FeatureGroup,
    pub live_computable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub entries: Vec<FeatureEntry>,
}

/// Column names of the 87-feature benchmark dataset, in file order.
pub const REFERENCE_FEATURES: [(&str, FeatureGroup); 87] = {
    use FeatureGroup::*;
    [
        ("length_url", UrlLexical),
        ("length_hostname", UrlLexical),
        ("ip", UrlLexical),
        ("nb_dots", UrlLexical),
        ("nb_hyphens", UrlLexical),
        ("nb_at", UrlLexical),
        ("nb_qm", UrlLexical),
        ("nb_and", UrlLexical),
        ("nb_or", UrlLexical),
        ("nb_eq", UrlLexical),
        ("nb_underscore", UrlLexical),
        ("nb_tilde", UrlLexical),
        ("nb_percent", UrlLexical),
        ("nb_slash", UrlLexical),
        ("nb_star", UrlLexical),
        ("nb_colon", UrlLexical),
        ("nb_comma", UrlLexical),
        ("nb_semicolumn", UrlLexical),
        ("nb_dollar", UrlLexical),
        ("nb_space", UrlLexical),
        ("nb_www", UrlLexical),
        ("nb_com", UrlLexical),
        ("nb_dslash", UrlLexical),
        ("http_in_path", UrlLexical),
        ("https_token", UrlLexical),
        ("ratio_digits_url", UrlLexical),
        ("ratio_digits_host", UrlLexical),
        ("punycode", UrlLexical),
        ("port", UrlLexical),
        ("tld_in_path", UrlLexical),
        ("tld_in_subdomain", UrlLexical),
        ("abnormal_subdomain", UrlLexical),
        ("nb_subdomains", UrlLexical),
        ("prefix_suffix", UrlLexical),
        ("random_domain", UrlLexical),
        ("shortening_service", UrlLexical),
        ("path_extension", UrlLexical),
        ("nb_redirection", UrlLexical),
        ("nb_external_redirection", UrlLexical),
        ("length_words_raw", UrlLexical),
        ("char_repeat", UrlLexical),
        ("shortest_words_raw", UrlLexical),
        ("shortest_word_host", UrlLexical),
        ("shortest_word_path", UrlLexical),
        ("longest_words_raw", UrlLexical),
        ("longest_word_host", UrlLexical),
        ("longest_word_path", UrlLexical),
        ("avg_words_raw", UrlLexical),
        ("avg_word_host", UrlLexical),
        ("avg_word_path", UrlLexical),
        ("phish_hints", UrlLexical),
        ("domain_in_brand", UrlLexical),
        ("brand_in_subdomain", UrlLexical),
        ("brand_in_path", UrlLexical),
        ("suspecious_tld", UrlLexical),
        ("statistical_report", UrlLexical),
        ("nb_hyperlinks", PageContent),
        ("ratio_intHyperlinks", PageContent),
        ("ratio_extHyperlinks", PageContent),
        ("ratio_nullHyperlinks", PageContent),
        ("nb_extCSS", PageContent),
        ("ratio_intRedirection", PageContent),
        ("ratio_extRedirection", PageContent),
        ("ratio_intErrors", PageContent),
        ("ratio_extErrors", PageContent),
        ("login_form", PageContent),
        ("external_favicon", PageContent),
        ("links_in_tags", PageContent),
        ("submit_email", PageContent),
        ("ratio_intMedia", PageContent),
        ("ratio_extMedia", PageContent),
        ("sfh", PageContent),
        ("iframe", PageContent),
        ("popup_window", PageContent),
        ("safe_anchor", PageContent),
        ("onmouseover", PageContent),
        ("right_clic", PageContent),
        ("empty_title", PageContent),
        ("domain_in_title", PageContent),
        ("domain_with_copyright", PageContent),
        ("whois_registered_domain", ExternalService),
        ("domain_registration_length", ExternalService),
        ("domain_age", ExternalService),
        ("web_traffic", ExternalService),
        ("dns_record", ExternalService),
        ("google_index", ExternalService),
        ("page_rank", ExternalService),
    ]
};

impl FeatureSchema {
    /// The 87-column benchmark schema.
    pub fn reference() -> Self {
        let entries = REFERENCE_FEATURES
            .iter()
            .map(|(name, group)| FeatureEntry {
                name: (*name).to_string(),
                group: *group,
                live_computable: lexical_extractor(name).is_some(),
            })
            .collect();
        Self { entries }
    }

    /// Builds a schema from dataset column names. Names known from the
    /// reference layout keep their group; unknown names are classified as
    /// URL-lexical when an extractor exists for them, page content otherwise.
    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self, FeatureError> {
        let reference: HashMap<&str, FeatureGroup> = REFERENCE_FEATURES.iter().copied().collect();
        let mut seen = std::collections::HashSet::new();
        let mut entries = Vec::with_capacity(names.len());
        for name in names {
            let name = name.as_ref().trim();
            if name.is_empty() {
                return Err(FeatureError::Argument("empty feature name".into()));
            }
            if !seen.insert(name.to_string()) {
                return Err(FeatureError::Argument(format!(
                    "duplicate feature name {name:?}"
                )));
            }
            let live = lexical_extractor(name).is_some();
            let group = match reference.get(name) {
                Some(g) => *g,
                None if live => FeatureGroup::UrlLexical,
                None => FeatureGroup::PageContent,
            };
            entries.push(FeatureEntry {
                name: name.to_string(),
                group,
                live_computable: live,
            });
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.name.as_str()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.name == name)
    }

    pub fn group_counts(&self) -> HashMap<FeatureGroup, usize> {
        let mut counts = HashMap::new();
        for e in &self.entries {
            *counts.entry(e.group).or_insert(0) += 1;
        }
        counts
    }

    pub fn live_mask(&self) -> Vec<bool> {
        self.entries.iter().map(|e| e.live_computable).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UrlFeatureVector {
    pub values: Vec<f64>,
    #[serde(default)]
    pub label: Option<Label>,
}

impl UrlFeatureVector {
    pub fn new(values: Vec<f64>, label: Option<Label>) -> Self {
        Self { values, label }
    }
}

/// Result of live extraction: the vector plus the slots that could not be
/// computed from the URL string and were set to `0.0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LexicalExtraction {
    pub vector: UrlFeatureVector,
    pub imputed: Vec<usize>,
}

const HINT_WORDS: [&str; 16] = [
    "wp",
    "login",
    "includes",
    "admin",
    "content",
    "site",
    "images",
    "js",
    "alibaba",
    "css",
    "myaccount",
    "dropbox",
    "themes",
    "plugins",
    "signin",
    "view",
];

const BRANDS: [&str; 18] = [
    "paypal",
    "apple",
    "microsoft",
    "amazon",
    "google",
    "facebook",
    "netflix",
    "chase",
    "wellsfargo",
    "bankofamerica",
    "dropbox",
    "outlook",
    "office365",
    "instagram",
    "linkedin",
    "ebay",
    "dhl",
    "fedex",
];

const COMMON_TLDS: [&str; 10] = [
    "com", "net", "org", "info", "biz", "gov", "edu", "io", "co", "us",
];

const SUSPICIOUS_TLDS: [&str; 17] = [
    "xyz", "top", "club", "info", "tk", "ml", "ga", "cf", "gq", "work", "zip", "click", "country",
    "stream", "download", "loan", "men",
];

const SHORTENERS: [&str; 12] = [
    "bit.ly",
    "goo.gl",
    "tinyurl.com",
    "t.co",
    "ow.ly",
    "is.gd",
    "buff.ly",
    "adf.ly",
    "bitly.com",
    "cutt.ly",
    "rebrand.ly",
    "tiny.cc",
];

const SCRIPT_EXTENSIONS: [&str; 6] = [".txt", ".exe", ".js", ".php", ".zip", ".apk"];

/// Pieces of a parsed URL the extractors work from.
struct UrlParts<'a> {
    raw: &'a str,
    host: String,
    is_ip: bool,
    /// Everything after `scheme://authority`.
    tail: &'a str,
    /// Path without query or fragment.
    path: &'a str,
    explicit_port: bool,
}

impl<'a> UrlParts<'a> {
    fn labels(&self) -> Vec<&str> {
        if self.is_ip {
            Vec::new()
        } else {
            self.host.split('.').filter(|l| !l.is_empty()).collect()
        }
    }

    fn subdomain_labels(&self) -> Vec<&str> {
        let labels = self.labels();
        let n = labels.len().saturating_sub(2);
        labels[..n].to_vec()
    }

    fn second_level(&self) -> Option<&str> {
        let labels = self.labels();
        (labels.len() >= 2).then(|| labels[labels.len() - 2])
    }

    fn tld(&self) -> Option<&str> {
        self.labels().last().copied()
    }
}

fn words(s: &str) -> Vec<&str> {
    s.split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|w| !w.is_empty())
        .collect()
}

fn count_char(s: &str, c: char) -> f64 {
    s.chars().filter(|&x| x == c).count() as f64
}

fn count_sub(s: &str, needle: &str) -> f64 {
    s.matches(needle).count() as f64
}

fn word_stats(ws: &[&str]) -> (f64, f64, f64) {
    if ws.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let lens: Vec<usize> = ws.iter().map(|w| w.chars().count()).collect();
    let min = *lens.iter().min().unwrap() as f64;
    let max = *lens.iter().max().unwrap() as f64;
    let avg = lens.iter().sum::<usize>() as f64 / lens.len() as f64;
    (min, max, avg)
}

fn longest_run(s: &str) -> f64 {
    let mut best = 0usize;
    let mut run = 0usize;
    let mut prev = None;
    for c in s.chars() {
        if Some(c) == prev {
            run += 1;
        } else {
            run = 1;
            prev = Some(c);
        }
        best = best.max(run);
    }
    best as f64
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

type Extractor = fn(&UrlParts) -> f64;

fn lexical_extractor(name: &str) -> Option<Extractor> {
    let f: Extractor = match name {
        "length_url" => |p| p.raw.chars().count() as f64,
        "length_hostname" => |p| p.host.chars().count() as f64,
        "ip" => |p| flag(p.is_ip),
        "nb_dots" => |p| count_char(p.raw, '.'),
        "nb_hyphens" => |p| count_char(p.raw, '-'),
        "nb_at" => |p| count_char(p.raw, '@'),
        "nb_qm" => |p| count_char(p.raw, '?'),
        "nb_and" => |p| count_char(p.raw, '&'),
        "nb_or" => |p| count_char(p.raw, '|'),
        "nb_eq" => |p| count_char(p.raw, '='),
        "nb_underscore" => |p| count_char(p.raw, '_'),
        "nb_tilde" => |p| count_char(p.raw, '~'),
        "nb_percent" => |p| count_char(p.raw, '%'),
        "nb_slash" => |p| count_char(p.raw, '/'),
        "nb_star" => |p| count_char(p.raw, '*'),
        "nb_colon" => |p| count_char(p.raw, ':'),
        "nb_comma" => |p| count_char(p.raw, ','),
        "nb_semicolumn" => |p| count_char(p.raw, ';'),
        "nb_dollar" => |p| count_char(p.raw, '$'),
        "nb_space" => |p| count_char(p.raw, ' '),
        "nb_digits" => |p| p.raw.chars().filter(char::is_ascii_digit).count() as f64,
        "nb_www" => |p| count_sub(&p.raw.to_ascii_lowercase(), "www"),
        "nb_com" => |p| count_sub(&p.raw.to_ascii_lowercase(), ".com"),
        "nb_dslash" => |p| count_sub(p.raw, "//"),
        "http_in_path" => |p| count_sub(&p.tail.to_ascii_lowercase(), "http"),
        "https_token" => |p| flag(p.tail.to_ascii_lowercase().contains("https")),
        "ratio_digits_url" => |p| {
            let n = p.raw.chars().count();
            if n == 0 {
                0.0
            } else {
                p.raw.chars().filter(char::is_ascii_digit).count() as f64 / n as f64
            }
        },
        "ratio_digits_host" => |p| {
            let n = p.host.chars().count();
            if n == 0 {
                0.0
            } else {
                p.host.chars().filter(char::is_ascii_digit).count() as f64 / n as f64
            }
        },
        "punycode" => |p| flag(p.host.contains("xn--")),
        "port" => |p| flag(p.explicit_port),
        "tld_in_path" => |p| {
            let tail = p.tail.to_ascii_lowercase();
            flag(COMMON_TLDS.iter().any(|t| tail.contains(&format!(".{t}"))))
        },
        "tld_in_subdomain" => {
            |p| flag(p.subdomain_labels().iter().any(|l| COMMON_TLDS.contains(l)))
        }
        "abnormal_subdomain" => |p| {
            flag(p.labels().first().is_some_and(|first| {
                first.starts_with('w')
                    && *first != "www"
                    && first
                        .trim_start_matches('w')
                        .chars()
                        .all(|c| c.is_ascii_digit())
                    && p.labels().len() > 2
            }))
        },
        "nb_subdomains" => |p| p.subdomain_labels().len() as f64,
        "prefix_suffix" => |p| flag(p.second_level().is_some_and(|l| l.contains('-'))),
        "shortening_service" => |p| flag(SHORTENERS.contains(&p.host.as_str())),
        "path_extension" => |p| {
            let path = p.path.to_ascii_lowercase();
            flag(SCRIPT_EXTENSIONS.iter().any(|e| path.ends_with(e)))
        },
        "nb_redirection" => |p| count_sub(p.tail, "//"),
        "length_words_raw" => |p| words(p.raw).len() as f64,
        "char_repeat" => |p| longest_run(p.raw),
        "shortest_words_raw" => |p| word_stats(&words(p.raw)).0,
        "longest_words_raw" => |p| word_stats(&words(p.raw)).1,
        "avg_words_raw" => |p| word_stats(&words(p.raw)).2,
        "shortest_word_host" => |p| word_stats(&words(&p.host)).0,
        "longest_word_host" => |p| word_stats(&words(&p.host)).1,
        "avg_word_host" => |p| word_stats(&words(&p.host)).2,
        "shortest_word_path" => |p| word_stats(&words(p.tail)).0,
        "longest_word_path" => |p| word_stats(&words(p.tail)).1,
        "avg_word_path" => |p| word_stats(&words(p.tail)).2,
        "phish_hints" => |p| {
            let tail = p.tail.to_ascii_lowercase();
            HINT_WORDS.iter().map(|h| count_sub(&tail, h)).sum()
        },
        "domain_in_brand" => |p| flag(p.second_level().is_some_and(|l| BRANDS.contains(&l))),
        "brand_in_subdomain" => |p| {
            let sub = p.subdomain_labels().join(".");
            flag(BRANDS.iter().any(|b| sub.contains(b)))
        },
        "brand_in_path" => |p| {
            let tail = p.tail.to_ascii_lowercase();
            flag(BRANDS.iter().any(|b| tail.contains(b)))
        },
        "suspecious_tld" => |p| flag(p.tld().is_some_and(|t| SUSPICIOUS_TLDS.contains(&t))),
        _ => return None,
    };
    Some(f)
}

fn parse_error(err: url::ParseError) -> FeatureError {
    use url::ParseError::*;
    let component = match err {
        EmptyHost | IdnaError | InvalidDomainCharacter => "host",
        InvalidPort => "port",
        InvalidIpv4Address | InvalidIpv6Address => "ip address",
        RelativeUrlWithoutBase | RelativeUrlWithCannotBeABaseBase | SetHostOnCannotBeABaseUrl => {
            "scheme"
        }
        _ => "url",
    };
    FeatureError::Parse {
        component,
        detail: err.to_string(),
    }
}

fn split_parts(raw: &str) -> Result<UrlParts<'_>, FeatureError> {
    let url = Url::parse(raw).map_err(parse_error)?;
    let host = match url.host() {
        Some(h) => h,
        None => {
            return Err(FeatureError::Parse {
                component: "host",
                detail: format!("{raw:?} has no host"),
            })
        }
    };
    let is_ip = matches!(host, Host::Ipv4(_) | Host::Ipv6(_));
    let host = url.host_str().unwrap_or_default().to_string();

    let after_scheme = raw.find("://").map(|i| i + 3).ok_or(FeatureError::Parse {
        component: "scheme",
        detail: format!("{raw:?} lacks '://'"),
    })?;
    let rest = &raw[after_scheme..];
    let authority_len = rest.find(['/', '?', '#']).unwrap_or(rest.len());
    let authority = &rest[..authority_len];
    let tail = &rest[authority_len..];
    let host_port = authority.rsplit('@').next().unwrap_or(authority);
    let explicit_port = match host_port.rfind(']') {
        Some(close) => host_port[close..].contains(':'),
        None => host_port.contains(':'),
    };
    let path_len = tail.find(['?', '#']).unwrap_or(tail.len());
    Ok(UrlParts {
        raw,
        host,
        is_ip,
        tail,
        path: &tail[..path_len],
        explicit_port,
    })
}

/// Computes every live-computable slot of `schema` from the URL string.
pub fn extract_lexical_features(
    url: &str,
    schema: &FeatureSchema,
) -> Result<LexicalExtraction, FeatureError> {
    let raw = url.trim();
    let parts = split_parts(raw)?;
    let mut values = Vec::with_capacity(schema.len());
    let mut imputed = Vec::new();
    for (i, entry) in schema.entries.iter().enumerate() {
        match lexical_extractor(&entry.name) {
            Some(f) if entry.live_computable => values.push(f(&parts)),
            _ => {
                values.push(0.0);
                imputed.push(i);
            }
        }
    }
    Ok(LexicalExtraction {
        vector: UrlFeatureVector::new(values, None),
        imputed,
    })
}

/// Sum that does not depend on the order of `values`.
fn order_free_sum(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum()
}

/// Chi-squared statistic of every feature against the binary label.
///
/// For feature `f` and class `c`, the observed mass is the sum of `f` over
/// samples of class `c` and the expected mass is `total_f * n_c / n`. The
/// score is `sum_c (observed - expected)^2 / expected`, with `0/0` taken as 0.
/// Per-class sums are taken over sorted values so that shuffling the samples
/// leaves every score bit-identical.
pub fn chi2_scores(dataset: &[UrlFeatureVector]) -> Result<Vec<f64>, FeatureError> {
    let first = dataset
        .first()
        .ok_or_else(|| FeatureError::Degenerate("empty dataset".into()))?;
    let d = first.values.len();
    let mut class_counts = [0usize; 2];
    for (i, v) in dataset.iter().enumerate() {
        if v.values.len() != d {
            return Err(FeatureError::Dimension {
                expected: d,
                got: v.values.len(),
            });
        }
        let label = v
            .label
            .ok_or_else(|| FeatureError::Degenerate(format!("sample {i} has no label")))?;
        class_counts[label.index()] += 1;
        for (f, &x) in v.values.iter().enumerate() {
            if !x.is_finite() || x < 0.0 {
                return Err(FeatureError::NegativeValue {
                    sample: i,
                    feature: f,
                    value: x,
                });
            }
        }
    }
    if class_counts.contains(&0) {
        return Err(FeatureError::Degenerate(
            "both classes must be present".into(),
        ));
    }
    let n = dataset.len() as f64;

    let mut scores = Vec::with_capacity(d);
    let mut per_class: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    for f in 0..d {
        per_class[0].clear();
        per_class[1].clear();
        for v in dataset {
            per_class[v.label.unwrap().index()].push(v.values[f]);
        }
        let observed = [
            order_free_sum(&mut per_class[0]),
            order_free_sum(&mut per_class[1]),
        ];
        let total = observed[0] + observed[1];
        let mut score = 0.0;
        for c in 0..2 {
            let expected = total * (class_counts[c] as f64 / n);
            let diff = observed[c] - expected;
            if expected != 0.0 {
                score += diff * diff / expected;
            }
        }
        scores.push(score);
    }
    Ok(scores)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSelection {
    pub k: usize,
    #[serde(rename = "indices")]
    pub selected_indices: Vec<usize>,
    pub scores: Vec<f64>,
}

/// Which schema slots may be selected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionPool {
    /// Every column of the dataset.
    #[default]
    All,
    /// Only columns that can be computed from a live URL.
    LiveOnly,
}

pub fn select_top_k(scores: &[f64], k: usize) -> Result<FeatureSelection, FeatureError> {
    select_top_k_masked(scores, k, None)
}

/// Top-`k` by descending score, ties broken by ascending index. When `allowed`
/// is given, masked-out indices are never selected.
pub fn select_top_k_masked(
    scores: &[f64],
    k: usize,
    allowed: Option<&[bool]>,
) -> Result<FeatureSelection, FeatureError> {
    if let Some(mask) = allowed {
        if mask.len() != scores.len() {
            return Err(FeatureError::Dimension {
                expected: scores.len(),
                got: mask.len(),
            });
        }
    }
    let mut candidates: Vec<usize> = (0..scores.len())
        .filter(|&i| allowed.is_none_or(|m| m[i]))
        .collect();
    if k == 0 || k > candidates.len() {
        return Err(FeatureError::Argument(format!(
            "k must be in 1..={}, got {k}",
            candidates.len()
        )));
    }
    candidates.sort_by(|&a, &b| match scores[b].total_cmp(&scores[a]) {
        Ordering::Equal => a.cmp(&b),
        o => o,
    });
    candidates.truncate(k);
    Ok(FeatureSelection {
        k,
        selected_indices: candidates,
        scores: scores.to_vec(),
    })
}

pub fn select_features(
    scores: &[f64],
    k: usize,
    schema: &FeatureSchema,
    pool: SelectionPool,
) -> Result<FeatureSelection, FeatureError> {
    match pool {
        SelectionPool::All => select_top_k(scores, k),
        SelectionPool::LiveOnly => select_top_k_masked(scores, k, Some(&schema.live_mask())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn value(url: &str, name: &str) -> f64 {
        let schema = FeatureSchema::reference();
        let out = extract_lexical_features(url, &schema).unwrap();
        out.vector.values[schema.index_of(name).unwrap()]
    }

    #[test]
    fn reference_schema_shape() {
        let schema = FeatureSchema::reference();
        assert_eq!(schema.len(), 87);
        let counts = schema.group_counts();
        assert_eq!(counts[&FeatureGroup::UrlLexical], 56);
        assert_eq!(counts[&FeatureGroup::PageContent], 24);
        assert_eq!(counts[&FeatureGroup::ExternalService], 7);
        let live = schema.live_mask().iter().filter(|&&b| b).count();
        assert_eq!(live, 53);
        for e in &schema.entries {
            if e.live_computable {
                assert_eq!(e.group, FeatureGroup::UrlLexical, "{}", e.name);
            }
        }
    }

    #[test]
    fn dots_and_subdomains() {
        let url = "http://a.b.example.com/x.y";
        assert_eq!(value(url, "nb_dots"), 4.0);
        assert_eq!(value(url, "nb_subdomains"), 2.0);
    }

    #[test]
    fn ip_literal_host() {
        assert_eq!(value("http://192.168.0.1/login", "ip"), 1.0);
        assert_eq!(value("http://[::1]:8080/", "ip"), 1.0);
        assert_eq!(value("http://[::1]:8080/", "port"), 1.0);
        assert_eq!(value("http://example.com/login", "ip"), 0.0);
    }

    #[test]
    fn explicit_default_port_is_still_flagged() {
        assert_eq!(value("http://example.com:80/", "port"), 1.0);
        assert_eq!(value("http://user:pw@example.com/", "port"), 0.0);
    }

    #[test]
    fn non_live_slots_are_imputed() {
        let schema = FeatureSchema::reference();
        let out = extract_lexical_features("https://example.org/", &schema).unwrap();
        assert_eq!(out.imputed.len(), 87 - 53);
        for &i in &out.imputed {
            assert_eq!(out.vector.values[i], 0.0);
            assert!(!schema.entries[i].live_computable);
        }
    }

    #[test]
    fn malformed_urls_name_the_component() {
        let schema = FeatureSchema::reference();
        match extract_lexical_features("example.com/path", &schema) {
            Err(FeatureError::Parse { component, .. }) => assert_eq!(component, "scheme"),
            other => panic!("{other:?}"),
        }
        match extract_lexical_features("http://example.com:99999/", &schema) {
            Err(FeatureError::Parse { component, .. }) => assert_eq!(component, "port"),
            other => panic!("{other:?}"),
        }
        match extract_lexical_features("mailto:someone@example.com", &schema) {
            Err(FeatureError::Parse { component, .. }) => assert_eq!(component, "host"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn schema_from_names_rejects_duplicates() {
        assert!(FeatureSchema::from_names(&["a", "b", "a"]).is_err());
        let s = FeatureSchema::from_names(&["nb_dots", "mystery"]).unwrap();
        assert!(s.entries[0].live_computable);
        assert!(!s.entries[1].live_computable);
    }

    fn labeled(values: &[f64], label: Label) -> UrlFeatureVector {
        UrlFeatureVector::new(values.to_vec(), Some(label))
    }

    #[test]
    fn chi2_constant_and_zero_features_score_zero() {
        let data = vec![
            labeled(&[1.0, 0.0], Label::Legitimate),
            labeled(&[1.0, 0.0], Label::Legitimate),
            labeled(&[1.0, 0.0], Label::Phishing),
            labeled(&[1.0, 0.0], Label::Phishing),
        ];
        assert_eq!(chi2_scores(&data).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn chi2_errors() {
        let single = vec![
            labeled(&[1.0], Label::Phishing),
            labeled(&[2.0], Label::Phishing),
        ];
        assert!(matches!(
            chi2_scores(&single),
            Err(FeatureError::Degenerate(_))
        ));
        let negative = vec![
            labeled(&[1.0], Label::Phishing),
            labeled(&[-2.0], Label::Legitimate),
        ];
        assert!(matches!(
            chi2_scores(&negative),
            Err(FeatureError::NegativeValue {
                sample: 1,
                feature: 0,
                ..
            })
        ));
        assert!(chi2_scores(&[]).is_err());
    }

    #[test]
    fn top_k_ordering_and_ties() {
        assert_eq!(
            select_top_k(&[3.0, 1.0, 2.0], 2).unwrap().selected_indices,
            vec![0, 2]
        );
        assert_eq!(
            select_top_k(&[5.0, 5.0, 5.0, 5.0], 3)
                .unwrap()
                .selected_indices,
            vec![0, 1, 2]
        );
        assert!(select_top_k(&[1.0], 0).is_err());
        assert!(select_top_k(&[1.0], 2).is_err());
    }

    #[test]
    fn masked_selection_skips_disallowed() {
        let sel = select_top_k_masked(&[9.0, 1.0, 5.0], 2, Some(&[false, true, true])).unwrap();
        assert_eq!(sel.selected_indices, vec![2, 1]);
        assert!(select_top_k_masked(&[9.0, 1.0], 2, Some(&[false, true])).is_err());
    }

    #[test]
    fn selection_json_field_names() {
        let sel = select_top_k(&[0.5, 1.5], 1).unwrap();
        let json = serde_json::to_value(&sel).unwrap();
        assert_eq!(json["k"], 1);
        assert_eq!(json["indices"], serde_json::json!([1]));
        assert_eq!(json["scores"], serde_json::json!([0.5, 1.5]));
    }
}
