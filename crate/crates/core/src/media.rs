//! Image and video transcription behind pluggable backends, plus the mock
//! media container used by fixtures and tests.
//!
//! Container layout: `b"MCKM"`, one kind byte (`0x01` image, `0x02` video),
//! payload length as `u32` little-endian, then the UTF-8 payload.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

use crate::content_fetcher::{FetchError, FetchLimits, Fetcher, PageContent};

pub const CONTAINER_MAGIC: [u8; 4] = *b"MCKM";
const HEADER_LEN: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MediaKind {
    Image,
    Video,
}

impl MediaKind {
    pub fn tag(self) -> u8 {
        match self {
            MediaKind::Image => 0x01,
            MediaKind::Video => 0x02,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0x01 => Some(MediaKind::Image),
            0x02 => Some(MediaKind::Video),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    Fetch,
    Oversize,
    MalformedContainer,
    KindMismatch,
    BackendUnavailable,
    InvalidUtf8,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MediaError {
    #[error("fetch failed: {0}")]
    Fetch(#[from] FetchError),
    #[error("media exceeds the size cap")]
    Oversize,
    #[error("malformed container: {0}")]
    MalformedContainer(String),
    #[error("expected {expected:?} media, found {found:?}")]
    KindMismatch {
        expected: MediaKind,
        found: MediaKind,
    },
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("payload is not valid UTF-8")]
    InvalidUtf8,
}

impl MediaError {
    pub fn kind(&self) -> FailureKind {
        match self {
            MediaError::Fetch(_) => FailureKind::Fetch,
            MediaError::Oversize => FailureKind::Oversize,
            MediaError::MalformedContainer(_) => FailureKind::MalformedContainer,
            MediaError::KindMismatch { .. } => FailureKind::KindMismatch,
            MediaError::BackendUnavailable(_) => FailureKind::BackendUnavailable,
            MediaError::InvalidUtf8 => FailureKind::InvalidUtf8,
        }
    }
}

/// Panics if the payload is 4 GiB or longer.
pub fn encode_container(kind: MediaKind, payload: &str) -> Vec<u8> {
    let len = u32::try_from(payload.len()).expect("payload shorter than 4 GiB");
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(&CONTAINER_MAGIC);
    out.push(kind.tag());
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(payload.as_bytes());
    out
}

/// Header fields and raw payload bytes.
fn parse_container(bytes: &[u8]) -> Result<(MediaKind, &[u8]), MediaError> {
    if bytes.len() < HEADER_LEN {
        return Err(MediaError::MalformedContainer(format!(
            "{} bytes is shorter than the header",
            bytes.len()
        )));
    }
    if bytes[..4] != CONTAINER_MAGIC {
        return Err(MediaError::MalformedContainer("bad magic".into()));
    }
    let kind = MediaKind::from_tag(bytes[4]).ok_or_else(|| {
        MediaError::MalformedContainer(format!("unknown kind byte 0x{:02x}", bytes[4]))
    })?;
    let len = u32::from_le_bytes(bytes[5..9].try_into().expect("4 bytes")) as usize;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != len {
        return Err(MediaError::MalformedContainer(format!(
            "declared length {len}, found {}",
            payload.len()
        )));
    }
    Ok((kind, payload))
}

pub fn decode_container(bytes: &[u8]) -> Result<(MediaKind, String), MediaError> {
    let (kind, payload) = parse_container(bytes)?;
    let text = std::str::from_utf8(payload).map_err(|_| MediaError::InvalidUtf8)?;
    Ok((kind, text.to_string()))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MediaBlob {
    pub source_url: Url,
    pub kind: MediaKind,
    pub bytes: Vec<u8>,
    pub truncated: bool,
}

/// Image bytes to text.
pub trait OcrBackend: Send + Sync {
    fn recognize_text(&self, image: &[u8]) -> Result<String, MediaError>;
}

/// Video bytes to audio bytes.
pub trait AudioExtractor: Send + Sync {
    fn extract_audio(&self, video: &[u8]) -> Result<Vec<u8>, MediaError>;
}

/// Audio bytes to text.
pub trait SpeechRecognizer: Send + Sync {
    fn recognize_speech(&self, audio: &[u8]) -> Result<String, MediaError>;
}

/// Reads the payload of an image container.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockOcr;

impl OcrBackend for MockOcr {
    fn recognize_text(&self, image: &[u8]) -> Result<String, MediaError> {
        let (kind, text) = decode_container(image)?;
        if kind != MediaKind::Image {
            return Err(MediaError::KindMismatch {
                expected: MediaKind::Image,
                found: kind,
            });
        }
        Ok(text)
    }
}

/// Returns the payload bytes of a video container as the "audio track".
#[derive(Debug, Clone, Copy, Default)]
pub struct MockAudioExtractor;

impl AudioExtractor for MockAudioExtractor {
    fn extract_audio(&self, video: &[u8]) -> Result<Vec<u8>, MediaError> {
        let (kind, payload) = parse_container(video)?;
        if kind != MediaKind::Video {
            return Err(MediaError::KindMismatch {
                expected: MediaKind::Video,
                found: kind,
            });
        }
        Ok(payload.to_vec())
    }
}

/// Decodes "audio" bytes as UTF-8.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockSpeechRecognizer;

impl SpeechRecognizer for MockSpeechRecognizer {
    fn recognize_speech(&self, audio: &[u8]) -> Result<String, MediaError> {
        String::from_utf8(audio.to_vec()).map_err(|_| MediaError::InvalidUtf8)
    }
}

/// Stands in for an engine that is not installed.
#[derive(Debug, Clone, Default)]
pub struct UnavailableBackend(pub String);

impl OcrBackend for UnavailableBackend {
    fn recognize_text(&self, _: &[u8]) -> Result<String, MediaError> {
        Err(MediaError::BackendUnavailable(self.0.clone()))
    }
}

impl AudioExtractor for UnavailableBackend {
    fn extract_audio(&self, _: &[u8]) -> Result<Vec<u8>, MediaError> {
        Err(MediaError::BackendUnavailable(self.0.clone()))
    }
}

impl SpeechRecognizer for UnavailableBackend {
    fn recognize_speech(&self, _: &[u8]) -> Result<String, MediaError> {
        Err(MediaError::BackendUnavailable(self.0.clone()))
    }
}

pub struct Transcribers {
    pub ocr: Box<dyn OcrBackend>,
    pub audio: Box<dyn AudioExtractor>,
    pub speech: Box<dyn SpeechRecognizer>,
}

impl Transcribers {
    pub fn mock() -> Self {
        Self {
            ocr: Box::new(MockOcr),
            audio: Box::new(MockAudioExtractor),
            speech: Box::new(MockSpeechRecognizer),
        }
    }
}

impl Default for Transcribers {
    fn default() -> Self {
        Self::mock()
    }
}

fn check_blob(blob: &MediaBlob, expected: MediaKind) -> Result<(), MediaError> {
    if blob.kind != expected {
        return Err(MediaError::KindMismatch {
            expected,
            found: blob.kind,
        });
    }
    if blob.truncated {
        return Err(MediaError::Oversize);
    }
    Ok(())
}

pub fn transcribe_image(blob: &MediaBlob, ocr: &dyn OcrBackend) -> Result<String, MediaError> {
    check_blob(blob, MediaKind::Image)?;
    ocr.recognize_text(&blob.bytes)
}

pub fn transcribe_video(
    blob: &MediaBlob,
    audio: &dyn AudioExtractor,
    speech: &dyn SpeechRecognizer,
) -> Result<String, MediaError> {
    check_blob(blob, MediaKind::Video)?;
    let track = audio.extract_audio(&blob.bytes)?;
    speech.recognize_speech(&track)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MediaFailure {
    pub source_url: String,
    pub kind: FailureKind,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TranscriptBundle {
    pub body_text: String,
    pub ocr_texts: Vec<(String, String)>,
    pub video_transcripts: Vec<(String, String)>,
    pub failures: Vec<MediaFailure>,
}

/// Joins the non-empty pieces with single spaces.
pub fn join_nonempty<'a>(pieces: impl IntoIterator<Item = &'a str>) -> String {
    pieces
        .into_iter()
        .filter(|p| !p.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

impl TranscriptBundle {
    pub fn ocr_section(&self) -> String {
        join_nonempty(self.ocr_texts.iter().map(|(_, t)| t.as_str()))
    }

    pub fn video_section(&self) -> String {
        join_nonempty(self.video_transcripts.iter().map(|(_, t)| t.as_str()))
    }

    /// Body text, then OCR texts, then video transcripts, each in page
    /// order, single-space separated; empty pieces are skipped.
    pub fn merged_text(&self) -> String {
        join_nonempty([
            self.body_text.as_str(),
            self.ocr_section().as_str(),
            self.video_section().as_str(),
        ])
    }

    pub fn media_count(&self) -> usize {
        self.ocr_texts.len() + self.video_transcripts.len() + self.failures.len()
    }
}

fn fetch_blob(
    fetcher: &dyn Fetcher,
    url: &Url,
    kind: MediaKind,
    limits: &FetchLimits,
) -> Result<MediaBlob, MediaError> {
    let resp = fetcher.get(url, limits)?;
    Ok(MediaBlob {
        source_url: url.clone(),
        kind,
        bytes: resp.body,
        truncated: resp.meta.truncated,
    })
}

/// Fetches and transcribes every media URL of `page`. Items run in
/// parallel; results keep the page's listing order, images first.
pub fn collect_transcripts(
    page: &PageContent,
    fetcher: &dyn Fetcher,
    transcribers: &Transcribers,
    limits: &FetchLimits,
) -> TranscriptBundle {
    let items: Vec<(&Url, MediaKind)> = page
        .image_urls
        .iter()
        .map(|u| (u, MediaKind::Image))
        .chain(page.video_urls.iter().map(|u| (u, MediaKind::Video)))
        .collect();
    let results: Vec<Result<String, MediaError>> = items
        .par_iter()
        .map(|&(url, kind)| {
            let blob = fetch_blob(fetcher, url, kind, limits)?;
            match kind {
                MediaKind::Image => transcribe_image(&blob, transcribers.ocr.as_ref()),
                MediaKind::Video => transcribe_video(
                    &blob,
                    transcribers.audio.as_ref(),
                    transcribers.speech.as_ref(),
                ),
            }
        })
        .collect();

    let mut bundle = TranscriptBundle {
        body_text: page.body_text.clone(),
        ..TranscriptBundle::default()
    };
    for ((url, kind), result) in items.into_iter().zip(results) {
        match (result, kind) {
            (Ok(text), MediaKind::Image) => bundle.ocr_texts.push((url.to_string(), text)),
            (Ok(text), MediaKind::Video) => bundle.video_transcripts.push((url.to_string(), text)),
            (Err(e), _) => bundle.failures.push(MediaFailure {
                source_url: url.to_string(),
                kind: e.kind(),
                detail: e.to_string(),
            }),
        }
    }
    bundle
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blob(kind: MediaKind, bytes: Vec<u8>) -> MediaBlob {
        MediaBlob {
            source_url: Url::parse("http://h/m").unwrap(),
            kind,
            bytes,
            truncated: false,
        }
    }

    #[test]
    fn container_layout_is_bit_exact() {
        let bytes = encode_container(MediaKind::Video, "hi");
        assert_eq!(
            bytes,
            [b'M', b'C', b'K', b'M', 0x02, 2, 0, 0, 0, b'h', b'i']
        );
    }

    #[test]
    fn mock_transcription_examples() {
        let img = blob(
            MediaKind::Image,
            encode_container(MediaKind::Image, "verify your password"),
        );
        assert_eq!(
            transcribe_image(&img, &MockOcr).unwrap(),
            "verify your password"
        );
        let vid = blob(
            MediaKind::Video,
            encode_container(MediaKind::Video, "your account is suspended"),
        );
        assert_eq!(
            transcribe_video(&vid, &MockAudioExtractor, &MockSpeechRecognizer).unwrap(),
            "your account is suspended"
        );
    }

    #[test]
    fn failure_kinds() {
        let mut bad = encode_container(MediaKind::Image, "x");
        bad[0] = b'X';
        let e = transcribe_image(&blob(MediaKind::Image, bad), &MockOcr).unwrap_err();
        assert_eq!(e.kind(), FailureKind::MalformedContainer);

        let img_in_video = blob(MediaKind::Video, encode_container(MediaKind::Image, "x"));
        let e = transcribe_video(&img_in_video, &MockAudioExtractor, &MockSpeechRecognizer)
            .unwrap_err();
        assert_eq!(e.kind(), FailureKind::KindMismatch);

        let mut short = encode_container(MediaKind::Image, "abc");
        short.pop();
        assert_eq!(
            decode_container(&short).unwrap_err().kind(),
            FailureKind::MalformedContainer
        );

        let mut invalid = encode_container(MediaKind::Image, "ab");
        invalid[9] = 0xff;
        assert_eq!(
            decode_container(&invalid).unwrap_err(),
            MediaError::InvalidUtf8
        );

        let mut big = blob(MediaKind::Image, encode_container(MediaKind::Image, "x"));
        big.truncated = true;
        assert_eq!(
            transcribe_image(&big, &MockOcr).unwrap_err(),
            MediaError::Oversize
        );

        let off = UnavailableBackend("tesseract".into());
        let ok = blob(MediaKind::Image, encode_container(MediaKind::Image, "x"));
        assert_eq!(
            transcribe_image(&ok, &off).unwrap_err().kind(),
            FailureKind::BackendUnavailable
        );
    }

    #[test]
    fn merged_text_skips_empty_sections() {
        let bundle = TranscriptBundle {
            body_text: String::new(),
            ocr_texts: vec![
                ("a".into(), "one".into()),
                ("b".into(), String::new()),
                ("c".into(), "two".into()),
            ],
            video_transcripts: vec![("v".into(), "three".into())],
            failures: vec![],
        };
        assert_eq!(bundle.merged_text(), "one two three");
        assert_eq!(TranscriptBundle::default().merged_text(), "");
    }
}
