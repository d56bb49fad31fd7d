use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FeatureEncoder, GeneratorConfig, MarketDataset, MarketError, SeriesRecord};
use crate::nn::write_atomic;

pub const FORMAT_VERSION: u32 = 1;
const FORMAT_NAME: &str = "relnet-market";

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    config: GeneratorConfig,
    encoder: FeatureEncoder,
}

/// Header line, then one record per line.
pub fn save_dataset(dataset: &MarketDataset, path: &Path) -> Result<(), MarketError> {
    let header = Header {
        format: FORMAT_NAME.to_string(),
        version: FORMAT_VERSION,
        config: dataset.config.clone(),
        encoder: dataset.encoder,
    };
    let mut text = serde_json::to_string(&header).expect("header serializes");
    text.push('\n');
    for r in dataset.records() {
        let line = serde_json::to_string(r).expect("record serializes");
        writeln!(text, "{line}").expect("writing to a String");
    }
    write_atomic(path, text.as_bytes()).map_err(|source| MarketError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_dataset(path: &Path) -> Result<MarketDataset, MarketError> {
    let text = std::fs::read_to_string(path).map_err(|source| MarketError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_dataset(&text)
}

fn parse_dataset(text: &str) -> Result<MarketDataset, MarketError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, first) = lines.next().ok_or_else(|| MarketError::Format {
        line: 1,
        message: "missing header".to_string(),
    })?;
    let header: Header = serde_json::from_str(first).map_err(|e| MarketError::Format {
        line: 1,
        message: format!("malformed header: {e}"),
    })?;
    if header.format != FORMAT_NAME {
        return Err(MarketError::Format {
            line: 1,
            message: format!("unknown format `{}`", header.format),
        });
    }
    if header.version != FORMAT_VERSION {
        return Err(MarketError::Format {
            line: 1,
            message: format!("format version {} not supported (expected {FORMAT_VERSION})", header.version),
        });
    }
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for (line, content) in lines {
        if content.trim().is_empty() {
            continue;
        }
        let record: SeriesRecord = serde_json::from_str(content).map_err(|e| MarketError::Format {
            line,
            message: format!("malformed record: {e}"),
        })?;
        if !seen.insert(record.id) {
            return Err(MarketError::Format {
                line,
                message: format!("duplicate series id {}", record.id),
            });
        }
        header.encoder.encode(&record).map_err(|e| MarketError::Format {
            line,
            message: e.to_string(),
        })?;
        if !(record.view_count > 0.0 && record.view_count.is_finite()) {
            return Err(MarketError::Format {
                line,
                message: format!("view_count must be positive, got {}", record.view_count),
            });
        }
        records.push(record);
    }
    MarketDataset::new(header.config, header.encoder, records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::generate_market;

    fn hundred() -> MarketDataset {
        generate_market(&GeneratorConfig {
            num_series: 100,
            ..GeneratorConfig::default()
        })
        .unwrap()
    }

    fn write(dir: &tempfile::TempDir, text: &str) -> std::path::PathBuf {
        let path = dir.path().join("m.jsonl");
        std::fs::write(&path, text).unwrap();
        path
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        let d = hundred();
        save_dataset(&d, &path).unwrap();
        let back = load_dataset(&path).unwrap();
        assert_eq!(back, d);
        for (a, b) in back.records().iter().zip(d.records()) {
            assert_eq!(a.view_count.to_bits(), b.view_count.to_bits());
        }
    }

    #[test]
    fn truncated_file_names_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        save_dataset(&hundred(), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let cut = &text[..text.len() - 20];
        let err = load_dataset(&write(&dir, cut)).unwrap_err();
        assert!(matches!(err, MarketError::Format { line: 101, .. }), "{err}");
    }

    #[test]
    fn duplicate_id_and_version_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        save_dataset(&hundred(), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();

        let dup = format!("{}\n{}\n{}\n", lines[0], lines[1], lines[1]);
        let err = load_dataset(&write(&dir, &dup)).unwrap_err();
        assert!(matches!(err, MarketError::Format { line: 3, .. }), "{err}");
        assert!(err.to_string().contains("duplicate"));

        let old = lines[0].replace("\"version\":1", "\"version\":0");
        let err = load_dataset(&write(&dir, &old)).unwrap_err();
        assert!(err.to_string().contains("line 1: format version 0"), "{err}");
    }

    #[test]
    fn header_only_is_an_empty_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        save_dataset(&hundred(), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let header = text.lines().next().unwrap();
        let d = load_dataset(&write(&dir, header)).unwrap();
        assert!(d.is_empty());
        assert_eq!(d.input_dim(), 213);
    }

    #[test]
    fn missing_file_is_io() {
        let err = load_dataset(Path::new("/nonexistent/m.jsonl")).unwrap_err();
        assert!(matches!(err, MarketError::Io { .. }));
    }
}
