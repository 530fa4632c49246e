//! CSV ingestion for the URL-feature table and the labeled message corpus.

use std::collections::HashSet;
use std::path::Path;

use thiserror::Error;

use crate::url_features::{FeatureError, FeatureSchema, Label, UrlFeatureVector};

pub const REFERENCE_URL_ROWS: usize = 11_430;
pub const BALANCE_TOLERANCE: f64 = 0.01;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed CSV: {0}")]
    Csv(String),
    #[error("dataset has no rows")]
    Empty,
    #[error("missing {0} column")]
    MissingColumn(&'static str),
    #[error("row {row} has {got} cells, header has {expected}")]
    Ragged {
        row: usize,
        expected: usize,
        got: usize,
    },
    #[error("row {row}, column {column}: {value:?} is not numeric")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}: unknown label {value:?}")]
    Label { row: usize, value: String },
    #[error("phishing share {share:.4} is outside 0.5 ± {tolerance}")]
    Imbalanced { share: f64, tolerance: f64 },
    #[error(transparent)]
    Schema(#[from] FeatureError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct UrlDataset {
    pub schema: FeatureSchema,
    pub vectors: Vec<UrlFeatureVector>,
    /// Raw URL strings when the file has a `url` column.
    pub urls: Option<Vec<String>>,
}

impl UrlDataset {
    pub fn phishing_share(&self) -> f64 {
        let n = self
            .vectors
            .iter()
            .filter(|v| v.label == Some(Label::Phishing))
            .count();
        n as f64 / self.vectors.len().max(1) as f64
    }

    pub fn is_reference_layout(&self) -> bool {
        self.schema.names() == FeatureSchema::reference().names()
    }

    pub fn check_balance(&self, tolerance: f64) -> Result<(), IngestError> {
        let share = self.phishing_share();
        if (share - 0.5).abs() > tolerance {
            return Err(IngestError::Imbalanced { share, tolerance });
        }
        Ok(())
    }
}

fn parse_url_label(value: &str, row: usize) -> Result<Label, IngestError> {
    match value.trim().to_ascii_lowercase().as_str() {
        "phishing" | "1" => Ok(Label::Phishing),
        "legitimate" | "0" => Ok(Label::Legitimate),
        _ => Err(IngestError::Label {
            row,
            value: value.to_string(),
        }),
    }
}

fn csv_error(e: csv::Error) -> IngestError {
    if let csv::ErrorKind::UnequalLengths {
        pos,
        expected_len,
        len,
    } = e.kind()
    {
        return IngestError::Ragged {
            row: pos.as_ref().map_or(0, |p| p.record() as usize),
            expected: *expected_len as usize,
            got: *len as usize,
        };
    }
    IngestError::Csv(e.to_string())
}

/// Parses a feature table with a header row. A `status` column holds the
/// label (`phishing`/`legitimate` or `1`/`0`); an optional `url` column is
/// kept as text; every other column must be numeric. When the columns are
/// the 87-feature reference layout, the class balance is checked.
pub fn parse_url_dataset(text: &str) -> Result<UrlDataset, IngestError> {
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(csv_error)?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let status_col = header
        .iter()
        .position(|h| h.eq_ignore_ascii_case("status"))
        .ok_or(IngestError::MissingColumn("status"))?;
    let url_col = header.iter().position(|h| h.eq_ignore_ascii_case("url"));
    let feature_cols: Vec<usize> = (0..header.len())
        .filter(|&i| i != status_col && Some(i) != url_col)
        .collect();
    let schema =
        FeatureSchema::from_names(&feature_cols.iter().map(|&i| &header[i]).collect::<Vec<_>>())?;

    let mut vectors = Vec::new();
    let mut urls = url_col.map(|_| Vec::new());
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(csv_error)?;
        let row = r + 2;
        let mut values = Vec::with_capacity(feature_cols.len());
        for &c in &feature_cols {
            let cell = record[c].trim();
            let v: f64 = cell.parse().map_err(|_| IngestError::NonNumeric {
                row,
                column: header[c].clone(),
                value: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(IngestError::NonNumeric {
                    row,
                    column: header[c].clone(),
                    value: cell.to_string(),
                });
            }
            values.push(v);
        }
        let label = parse_url_label(&record[status_col], row)?;
        if let (Some(list), Some(c)) = (urls.as_mut(), url_col) {
            list.push(record[c].to_string());
        }
        vectors.push(UrlFeatureVector::new(values, Some(label)));
    }
    if vectors.is_empty() {
        return Err(IngestError::Empty);
    }
    let dataset = UrlDataset {
        schema,
        vectors,
        urls,
    };
    if dataset.is_reference_layout() {
        dataset.check_balance(BALANCE_TOLERANCE)?;
    }
    Ok(dataset)
}

pub fn load_url_dataset(path: &Path) -> Result<UrlDataset, IngestError> {
    let bytes = std::fs::read(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_url_dataset(&String::from_utf8_lossy(&bytes))
}

/// Copy with negative cells raised to 0, for the chi-squared statistic.
/// Returns the copy and how many cells changed.
pub fn clamp_negative(vectors: &[UrlFeatureVector]) -> (Vec<UrlFeatureVector>, usize) {
    let mut changed = 0;
    let out = vectors
        .iter()
        .map(|v| {
            let values = v
                .values
                .iter()
                .map(|&x| {
                    if x < 0.0 {
                        changed += 1;
                        0.0
                    } else {
                        x
                    }
                })
                .collect();
            UrlFeatureVector::new(values, v.label)
        })
        .collect();
    (out, changed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextDataset {
    /// File order.
    pub messages: Vec<(String, Label)>,
}

impl TextDataset {
    pub fn total(&self) -> usize {
        self.messages.len()
    }

    pub fn unique(&self) -> usize {
        self.messages
            .iter()
            .map(|(m, _)| m.as_str())
            .collect::<HashSet<_>>()
            .len()
    }

    pub fn duplicates(&self) -> usize {
        self.total() - self.unique()
    }

    pub fn spam_count(&self) -> usize {
        self.messages
            .iter()
            .filter(|(_, l)| l.is_phishing())
            .count()
    }
}

const LABEL_HEADERS: [&str; 4] = ["v1", "category", "label", "class"];
const TEXT_HEADERS: [&str; 5] = ["v2", "message", "text", "sms", "body"];

/// Parses a two-column `label,text` CSV with a header (`Category,Message`
/// or `v1,v2` style). Labels are `ham` or `spam`. Extra non-empty cells
/// after the text column are joined back onto the text with commas.
pub fn parse_text_dataset(text: &str) -> Result<TextDataset, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(csv_error)?
        .iter()
        .map(|h| h.trim().to_ascii_lowercase())
        .collect();
    let label_col = header
        .iter()
        .position(|h| LABEL_HEADERS.contains(&h.as_str()))
        .ok_or(IngestError::MissingColumn("label"))?;
    let text_col = header
        .iter()
        .position(|h| TEXT_HEADERS.contains(&h.as_str()))
        .ok_or(IngestError::MissingColumn("text"))?;

    let mut messages = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(csv_error)?;
        let row = r + 2;
        if record.iter().all(|c| c.trim().is_empty()) {
            continue;
        }
        if record.len() <= label_col.max(text_col) {
            return Err(IngestError::Ragged {
                row,
                expected: header.len(),
                got: record.len(),
            });
        }
        let label = match record[label_col].trim().to_ascii_lowercase().as_str() {
            "spam" => Label::Phishing,
            "ham" => Label::Legitimate,
            other => {
                return Err(IngestError::Label {
                    row,
                    value: other.to_string(),
                })
            }
        };
        let mut message = record[text_col].to_string();
        for extra in record.iter().skip(text_col + 1).filter(|c| !c.is_empty()) {
            message.push(',');
            message.push_str(extra);
        }
        messages.push((message, label));
    }
    if messages.is_empty() {
        return Err(IngestError::Empty);
    }
    Ok(TextDataset { messages })
}

/// Reads the file as UTF-8, replacing invalid sequences.
pub fn load_text_dataset(path: &Path) -> Result<TextDataset, IngestError> {
    let bytes = std::fs::read(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_text_dataset(&String::from_utf8_lossy(&bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_row_feature_table() {
        let csv = "url,length_url,nb_dots,status\nhttp://a.b/,11,1,legitimate\nhttp://1.2.3.4/x,16,3,phishing\nhttp://c.d/e,12,1,legitimate\n";
        let d = parse_url_dataset(csv).unwrap();
        assert_eq!(d.schema.names(), vec!["length_url", "nb_dots"]);
        assert_eq!(d.vectors[1].values, vec![16.0, 3.0]);
        assert_eq!(d.vectors[1].label, Some(Label::Phishing));
        assert_eq!(d.urls.as_ref().unwrap()[2], "http://c.d/e");
    }

    #[test]
    fn feature_table_errors() {
        assert!(matches!(
            parse_url_dataset("length_url,status\n"),
            Err(IngestError::Empty)
        ));
        assert!(matches!(
            parse_url_dataset("length_url,nb_dots\n1,2\n"),
            Err(IngestError::MissingColumn("status"))
        ));
        assert!(matches!(
            parse_url_dataset("length_url,status\nabc,phishing\n"),
            Err(IngestError::NonNumeric { row: 2, .. })
        ));
        assert!(matches!(
            parse_url_dataset("length_url,nb_dots,status\n1,phishing\n"),
            Err(IngestError::Ragged { .. })
        ));
        assert!(matches!(
            parse_url_dataset("length_url,status\n1,maybe\n"),
            Err(IngestError::Label { .. })
        ));
    }

    #[test]
    fn negative_cells_are_clamped_for_scoring_only() {
        let v = vec![UrlFeatureVector::new(
            vec![-1.0, 2.0],
            Some(Label::Phishing),
        )];
        let (c, n) = clamp_negative(&v);
        assert_eq!(n, 1);
        assert_eq!(c[0].values, vec![0.0, 2.0]);
        assert_eq!(v[0].values[0], -1.0);
    }

    #[test]
    fn message_corpus_formats() {
        let d = parse_text_dataset(
            "Category,Message\nham,hello there\nspam,WIN now\nham,hello there\n",
        )
        .unwrap();
        assert_eq!(d.total(), 3);
        assert_eq!(d.unique(), 2);
        assert_eq!(d.duplicates(), 1);
        assert_eq!(d.spam_count(), 1);

        let v =
            parse_text_dataset("v1,v2,,,\nspam,\"Free entry\", in a draw,,\nham,ok,,,\n").unwrap();
        assert_eq!(v.messages[0].0, "Free entry, in a draw");
        assert_eq!(v.messages[1], ("ok".to_string(), Label::Legitimate));

        let toy = parse_text_dataset("label,text\nham,a\nspam,b\n").unwrap();
        assert_eq!(toy.unique(), toy.total());
    }

    #[test]
    fn message_corpus_errors() {
        assert!(matches!(
            parse_text_dataset("Message\nhello\n"),
            Err(IngestError::MissingColumn("label"))
        ));
        assert!(matches!(
            parse_text_dataset("Category,Message\n"),
            Err(IngestError::Empty)
        ));
        assert!(matches!(
            parse_text_dataset("Category,Message\nmaybe,hi\n"),
            Err(IngestError::Label { .. })
        ));
    }
}
