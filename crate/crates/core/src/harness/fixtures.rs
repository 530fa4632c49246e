//! Deterministic fixture sites: one directory per category holding
//! `index.html`, `media/` containers and `sidecars/` ground truth, plus a
//! `manifest.json` at the root.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::media::{encode_container, MediaKind};
use crate::rng::{mix_seed, SplitMix64};
use crate::url_features::Label;

use super::synthetic::{capitalized, phishing_message, BENIGN_SENTENCES};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("bad manifest: {0}")]
    Manifest(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FixtureError + '_ {
    move |source| FixtureError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixtureCategory {
    TextOnly,
    ImageOnly,
    VideoOnly,
    Combined,
    BenignText,
    BenignMedia,
}

impl FixtureCategory {
    pub const ALL: [FixtureCategory; 6] = [
        FixtureCategory::TextOnly,
        FixtureCategory::ImageOnly,
        FixtureCategory::VideoOnly,
        FixtureCategory::Combined,
        FixtureCategory::BenignText,
        FixtureCategory::BenignMedia,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FixtureCategory::TextOnly => "text_only",
            FixtureCategory::ImageOnly => "image_only",
            FixtureCategory::VideoOnly => "video_only",
            FixtureCategory::Combined => "combined",
            FixtureCategory::BenignText => "benign_text",
            FixtureCategory::BenignMedia => "benign_media",
        }
    }

    /// Directory name and URL path segment.
    pub fn slug(self) -> &'static str {
        match self {
            FixtureCategory::TextOnly => "text-only",
            FixtureCategory::ImageOnly => "image-only",
            FixtureCategory::VideoOnly => "video-only",
            FixtureCategory::Combined => "combined",
            FixtureCategory::BenignText => "benign-text",
            FixtureCategory::BenignMedia => "benign-media",
        }
    }

    pub fn expected_label(self) -> Label {
        Label::from_bool(!matches!(
            self,
            FixtureCategory::BenignText | FixtureCategory::BenignMedia
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Sidecars {
    pub body: String,
    pub images: String,
    pub videos: String,
    pub merged: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub category: FixtureCategory,
    /// URL path relative to the server root, with a trailing slash.
    pub path: String,
    pub expected_label: Label,
    /// Media files relative to the site directory, in page listing order.
    pub images: Vec<String>,
    pub videos: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureManifest {
    pub seed: u64,
    pub sites: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixtureSite {
    pub category: FixtureCategory,
    pub directory: PathBuf,
    pub index_page: PathBuf,
    pub media_files: Vec<PathBuf>,
    pub sidecars: Sidecars,
    pub expected_label: Label,
    pub path: String,
}

/// Page text blocks in display order; `footer` is written with an entity.
struct PagePlan {
    title: &'static str,
    heading: &'static str,
    paragraphs: Vec<String>,
    /// `(file, payload)` referenced from `<img>`.
    images: Vec<(String, String)>,
    /// `(file, payload)` referenced from `<video>`.
    videos: Vec<(String, String)>,
    /// `(file, payload)` named only as a bare word in the last paragraph.
    bare_videos: Vec<(String, String)>,
}

const FOOTER_MARKUP: &str = "Terms &amp; Privacy";
const FOOTER_TEXT: &str = "Terms & Privacy";

fn benign(rng: &mut SplitMix64) -> String {
    format!("{}.", capitalized(rng.choose(&BENIGN_SENTENCES)))
}

fn plan(category: FixtureCategory, rng: &mut SplitMix64) -> PagePlan {
    use FixtureCategory::*;
    let mut p = PagePlan {
        title: "",
        heading: "",
        paragraphs: Vec::new(),
        images: Vec::new(),
        videos: Vec::new(),
        bare_videos: Vec::new(),
    };
    match category {
        TextOnly => {
            p.title = "Customer Services";
            p.heading = "Customer Services";
            p.paragraphs = vec![phishing_message(rng), phishing_message(rng)];
        }
        ImageOnly => {
            p.title = "Photo Gallery";
            p.heading = "Photo Gallery";
            p.paragraphs = vec!["Browse the latest pictures from our collection below.".into()];
            p.images = vec![
                ("media/photo-1.png".into(), phishing_message(rng)),
                ("media/photo-2.jpg".into(), phishing_message(rng)),
                ("media/banner-3.gif".into(), phishing_message(rng)),
            ];
        }
        VideoOnly => {
            p.title = "Video Update";
            p.heading = "Video Update";
            p.paragraphs = vec!["Watch our latest update below.".into()];
            p.videos = vec![("media/clip-1.mp4".into(), phishing_message(rng))];
            p.bare_videos = vec![("media/update-2.webm".into(), phishing_message(rng))];
        }
        Combined => {
            p.title = "Member Portal";
            p.heading = "Member Portal";
            p.paragraphs = vec![phishing_message(rng)];
            p.images = vec![
                ("media/notice-1.png".into(), phishing_message(rng)),
                ("media/notice-2.jpeg".into(), phishing_message(rng)),
            ];
            p.videos = vec![("media/message-1.mp4".into(), phishing_message(rng))];
        }
        BenignText => {
            p.title = "Community Library";
            p.heading = "Welcome to our library catalog";
            p.paragraphs = vec![benign(rng), benign(rng), benign(rng)];
        }
        BenignMedia => {
            p.title = "Town Notes";
            p.heading = "Town Notes";
            p.paragraphs = vec![benign(rng)];
            p.images = vec![("media/poster-1.png".into(), benign(rng))];
            p.videos = vec![("media/tour-1.mp4".into(), benign(rng))];
        }
    }
    p
}

fn render(p: &PagePlan) -> String {
    let mut html = format!(
        "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>{}</title>\n<style>body {{ font-family: sans-serif; }}</style>\n</head>\n<body>\n<h1>{}</h1>\n",
        p.title, p.heading
    );
    for para in &p.paragraphs {
        html += &format!("<p>{para}</p>\n");
    }
    for (file, _) in &p.images {
        html += &format!("<div class=\"figure\"><img src=\"{file}\"></div>\n");
    }
    for (file, _) in &p.videos {
        html += &format!("<video controls src=\"{file}\"></video>\n");
    }
    if let Some(last) = bare_paragraph(p) {
        html += &format!("<p>{last}</p>\n");
    }
    html += &format!(
        "<footer>{FOOTER_MARKUP}</footer>\n<script>document.title = \"{}\";</script>\n</body>\n</html>\n",
        p.title
    );
    html
}

fn bare_paragraph(p: &PagePlan) -> Option<String> {
    if p.bare_videos.is_empty() {
        return None;
    }
    let files: Vec<&str> = p.bare_videos.iter().map(|(f, _)| f.as_str()).collect();
    Some(format!(
        "Another recording is available at {}",
        files.join(" ")
    ))
}

fn join_present(parts: &[&str]) -> String {
    parts
        .iter()
        .filter(|s| !s.is_empty())
        .copied()
        .collect::<Vec<_>>()
        .join(" ")
}

fn sidecars(p: &PagePlan) -> Sidecars {
    let mut body_parts: Vec<String> = vec![p.heading.to_string()];
    body_parts.extend(p.paragraphs.iter().cloned());
    body_parts.extend(bare_paragraph(p));
    body_parts.push(FOOTER_TEXT.to_string());
    let body = body_parts.join(" ");
    let images = join_present(&p.images.iter().map(|(_, t)| t.as_str()).collect::<Vec<_>>());
    let videos = join_present(
        &p.videos
            .iter()
            .chain(&p.bare_videos)
            .map(|(_, t)| t.as_str())
            .collect::<Vec<_>>(),
    );
    let merged = join_present(&[&body, &images, &videos]);
    Sidecars {
        body,
        images,
        videos,
        merged,
    }
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), FixtureError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    std::fs::write(path, bytes).map_err(io_err(path))
}

/// Writes all six sites under `out_dir`. The same seed always produces the
/// same bytes.
pub fn generate_fixtures(out_dir: &Path, seed: u64) -> Result<Vec<FixtureSite>, FixtureError> {
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut sites = Vec::new();
    let mut entries = Vec::new();
    for (i, category) in FixtureCategory::ALL.into_iter().enumerate() {
        let mut rng = SplitMix64::new(mix_seed(seed, i as u64));
        let p = plan(category, &mut rng);
        let dir = out_dir.join(category.slug());
        let index = dir.join("index.html");
        write(&index, render(&p).as_bytes())?;

        let mut media_files = Vec::new();
        let mut images = Vec::new();
        let mut videos = Vec::new();
        for (file, payload) in &p.images {
            let path = dir.join(file);
            write(&path, &encode_container(MediaKind::Image, payload))?;
            media_files.push(path);
            images.push(file.clone());
        }
        for (file, payload) in p.videos.iter().chain(&p.bare_videos) {
            let path = dir.join(file);
            write(&path, &encode_container(MediaKind::Video, payload))?;
            media_files.push(path);
            videos.push(file.clone());
        }

        let sc = sidecars(&p);
        let sc_dir = dir.join("sidecars");
        write(&sc_dir.join("body.txt"), sc.body.as_bytes())?;
        write(&sc_dir.join("images.txt"), sc.images.as_bytes())?;
        write(&sc_dir.join("videos.txt"), sc.videos.as_bytes())?;
        write(&sc_dir.join("merged.txt"), sc.merged.as_bytes())?;

        let path = format!("{}/", category.slug());
        entries.push(ManifestEntry {
            category,
            path: path.clone(),
            expected_label: category.expected_label(),
            images,
            videos,
        });
        sites.push(FixtureSite {
            category,
            directory: dir,
            index_page: index,
            media_files,
            sidecars: sc,
            expected_label: category.expected_label(),
            path,
        });
    }
    let manifest = FixtureManifest {
        seed,
        sites: entries,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    write(&out_dir.join(MANIFEST_FILE), json.as_bytes())?;
    Ok(sites)
}

/// Reads a tree written by [`generate_fixtures`].
pub fn load_fixtures(dir: &Path) -> Result<Vec<FixtureSite>, FixtureError> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
    let manifest: FixtureManifest =
        serde_json::from_str(&text).map_err(|e| FixtureError::Manifest(e.to_string()))?;
    let read = |p: PathBuf| std::fs::read_to_string(&p).map_err(io_err(&p));
    manifest
        .sites
        .into_iter()
        .map(|e| {
            let site_dir = dir.join(e.path.trim_end_matches('/'));
            let sc_dir = site_dir.join("sidecars");
            Ok(FixtureSite {
                category: e.category,
                index_page: site_dir.join("index.html"),
                media_files: e
                    .images
                    .iter()
                    .chain(&e.videos)
                    .map(|f| site_dir.join(f))
                    .collect(),
                sidecars: Sidecars {
                    body: read(sc_dir.join("body.txt"))?,
                    images: read(sc_dir.join("images.txt"))?,
                    videos: read(sc_dir.join("videos.txt"))?,
                    merged: read(sc_dir.join("merged.txt"))?,
                },
                expected_label: e.expected_label,
                path: e.path,
                directory: site_dir,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_sites_with_expected_media() {
        let dir = tempfile::tempdir().unwrap();
        let sites = generate_fixtures(dir.path(), 7).unwrap();
        assert_eq!(sites.len(), 6);
        let by = |c| sites.iter().find(|s| s.category == c).unwrap();
        assert_eq!(by(FixtureCategory::ImageOnly).media_files.len(), 3);
        assert!(by(FixtureCategory::TextOnly).media_files.is_empty());
        let combined = &by(FixtureCategory::Combined).sidecars;
        assert!(
            !combined.body.is_empty() && !combined.images.is_empty() && !combined.videos.is_empty()
        );
        assert_eq!(load_fixtures(dir.path()).unwrap(), sites);
    }

    #[test]
    fn image_only_body_is_neutral() {
        let dir = tempfile::tempdir().unwrap();
        let sites = generate_fixtures(dir.path(), 1).unwrap();
        let body = &sites[1].sidecars.body.to_lowercase();
        for w in ["password", "account", "verify", "login", "suspend"] {
            assert!(!body.contains(w), "{body}");
        }
    }
}
