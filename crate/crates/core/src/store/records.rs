//! JSONL tag and caption files.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// Relational tags of one image, flattened to lowercase phrases.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagRecord {
    pub image_id: String,
    pub tags: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CaptionSource {
    #[default]
    Human,
    Generated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionSet {
    pub image_id: String,
    pub captions: Vec<String>,
    #[serde(default)]
    pub source: CaptionSource,
}

/// Lowercases, trims and collapses internal whitespace.
pub fn normalize_phrase(s: &str) -> String {
    s.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Removes duplicates keeping the first occurrence.
pub fn dedup_stable(items: Vec<String>) -> Vec<String> {
    let mut seen = std::collections::HashSet::with_capacity(items.len());
    items.into_iter().filter(|t| seen.insert(t.clone())).collect()
}

impl TagRecord {
    pub fn new(image_id: impl Into<String>, tags: impl IntoIterator<Item = impl AsRef<str>>) -> Self {
        let tags = tags
            .into_iter()
            .map(|t| normalize_phrase(t.as_ref()))
            .filter(|t| !t.is_empty())
            .collect();
        Self {
            image_id: image_id.into(),
            tags: dedup_stable(tags),
        }
    }
}

fn jsonl_lines(path: &Path) -> Result<impl Iterator<Item = Result<(usize, Value)>>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let path = path.to_path_buf();
    Ok(BufReader::new(file)
        .lines()
        .enumerate()
        .filter_map(move |(i, line)| {
            let lineno = i + 1;
            let line = match line {
                Ok(l) => l,
                Err(e) => return Some(Err(Error::io(&path, e))),
            };
            let trimmed = line.trim();
            // '#' lines are producer headers
            if trimmed.is_empty() || trimmed.starts_with('#') {
                return None;
            }
            Some(
                serde_json::from_str::<Value>(trimmed)
                    .map(|v| (lineno, v))
                    .map_err(|e| Error::MalformedLine {
                        line: lineno,
                        reason: e.to_string(),
                    }),
            )
        }))
}

fn string_field(v: &Value, line: usize, field: &'static str) -> Result<String> {
    match v.get(field) {
        None | Some(Value::Null) => Err(Error::MissingField { line, field }),
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(Error::MalformedLine {
            line,
            reason: format!("{field} must be a string"),
        }),
    }
}

fn string_list(v: &Value, line: usize, field: &'static str) -> Result<Vec<String>> {
    match v.get(field) {
        None | Some(Value::Null) => Err(Error::MissingField { line, field }),
        Some(Value::Array(items)) => items
            .iter()
            .map(|x| {
                x.as_str().map(str::to_owned).ok_or_else(|| Error::MalformedLine {
                    line,
                    reason: format!("{field} entries must be strings"),
                })
            })
            .collect(),
        Some(_) => Err(Error::MalformedLine {
            line,
            reason: format!("{field} must be an array"),
        }),
    }
}

pub fn parse_tag_line(v: &Value, line: usize) -> Result<TagRecord> {
    let image_id = string_field(v, line, "image_id")?;
    let tags = string_list(v, line, "tags")?;
    Ok(TagRecord::new(image_id, tags))
}

pub fn load_tags(path: impl AsRef<Path>) -> Result<Vec<TagRecord>> {
    jsonl_lines(path.as_ref())?
        .map(|r| r.and_then(|(line, v)| parse_tag_line(&v, line)))
        .collect()
}

pub fn load_captions(path: impl AsRef<Path>) -> Result<Vec<CaptionSet>> {
    jsonl_lines(path.as_ref())?
        .map(|r| {
            let (line, v) = r?;
            let image_id = string_field(&v, line, "image_id")?;
            let captions: Vec<String> = string_list(&v, line, "captions")?
                .into_iter()
                .map(|c| c.trim().to_owned())
                .filter(|c| !c.is_empty())
                .collect();
            if captions.is_empty() {
                return Err(Error::MalformedLine {
                    line,
                    reason: "captions must be non-empty".into(),
                });
            }
            let source = match v.get("source") {
                None | Some(Value::Null) => CaptionSource::Human,
                Some(s) => serde_json::from_value(s.clone()).map_err(|e| Error::MalformedLine {
                    line,
                    reason: e.to_string(),
                })?,
            };
            Ok(CaptionSet {
                image_id,
                captions,
                source,
            })
        })
        .collect()
}

/// Writes one compact JSON object per line.
pub fn write_jsonl<S: Serialize>(path: impl AsRef<Path>, records: &[S]) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(lines: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(lines.as_bytes()).unwrap();
        f
    }

    #[test]
    fn parses_sample_tags() {
        let f = write(r#"{"image_id":"x","tags":["wooden table","black chair"]}"#);
        let t = load_tags(f.path()).unwrap();
        assert_eq!(t, vec![TagRecord::new("x", ["wooden table", "black chair"])]);
        assert_eq!(t[0].tags.len(), 2);
    }

    #[test]
    fn dedups_and_lowercases() {
        let f = write("{\"image_id\":\"x\",\"tags\":[\"Black  Chair \",\"black chair\",\"open space\"]}\n");
        let t = load_tags(f.path()).unwrap();
        assert_eq!(t[0].tags, ["black chair", "open space"]);
    }

    #[test]
    fn missing_tags_field() {
        let f = write("{\"image_id\":\"x\"}\n");
        assert!(matches!(
            load_tags(f.path()),
            Err(Error::MissingField { line: 1, field: "tags" })
        ));
    }

    #[test]
    fn malformed_line_number_reported() {
        let f = write("# header\n{\"image_id\":\"a\",\"tags\":[\"x\"]}\n{oops\n");
        assert!(matches!(load_tags(f.path()), Err(Error::MalformedLine { line: 3, .. })));
    }

    #[test]
    fn captions_default_to_human() {
        let f = write("{\"image_id\":\"a\",\"captions\":[\" A cat. \",\"A dog.\"]}\n{\"image_id\":\"b\",\"captions\":[\"x\"],\"source\":\"generated\"}\n");
        let c = load_captions(f.path()).unwrap();
        assert_eq!(c[0].source, CaptionSource::Human);
        assert_eq!(c[0].captions[0], "A cat.");
        assert_eq!(c[1].source, CaptionSource::Generated);
    }

    #[test]
    fn write_then_load_tags() {
        let recs = vec![TagRecord::new("a", ["café table", "red bus"]), TagRecord::new("b", ["dog"])];
        let f = tempfile::NamedTempFile::new().unwrap();
        write_jsonl(f.path(), &recs).unwrap();
        assert_eq!(load_tags(f.path()).unwrap(), recs);
    }
}
