//! Flat sectioned key-value configuration format.
//!
//! ```text
//! # comment
//! [experiment]
//! architectures = 1,3,9
//! seeds = 10
//!
//! [trainer]
//! gamma = 0.99
//! ```
//!
//! Rules: section headers `[name]` start a section; every `key = value` line
//! belongs to the section above it; `#` starts a comment (full-line or
//! trailing); blank lines are ignored. Duplicate sections and duplicate keys
//! within a section are rejected, as are keys before the first header. All
//! positions in errors are 1-based `line:column`.

use crate::error::{Result, VdnError};

/// One parsed `key = value` entry with its source position.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
    /// Column of the first character of the value (of the key if the value
    /// is empty).
    pub col: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub name: String,
    pub line: usize,
    pub entries: Vec<Entry>,
}

impl Section {
    pub fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.key == key)
    }
}

/// A parsed configuration file: ordered sections of ordered entries.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Document {
    pub sections: Vec<Section>,
}

impl Document {
    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&Entry> {
        self.section(section).and_then(|s| s.get(key))
    }
}

fn valid_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

/// Parses a configuration document, reporting the first problem with its
/// 1-based line and column.
pub fn parse_document(text: &str) -> Result<Document> {
    let mut doc = Document::default();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let start_col = line.find(trimmed.chars().next().unwrap()).map_or(1, |p| p + 1);

        if let Some(rest) = trimmed.strip_prefix('[') {
            let Some(name) = rest.strip_suffix(']') else {
                return Err(VdnError::parse(line_no, start_col, "unterminated section header"));
            };
            let name = name.trim();
            if !valid_name(name) {
                return Err(VdnError::parse(
                    line_no,
                    start_col + 1,
                    format!("invalid section name {name:?}"),
                ));
            }
            if doc.section(name).is_some() {
                return Err(VdnError::parse(
                    line_no,
                    start_col,
                    format!("duplicate section [{name}]"),
                ));
            }
            doc.sections.push(Section { name: name.to_string(), line: line_no, entries: Vec::new() });
            continue;
        }

        let Some(eq) = trimmed.find('=') else {
            return Err(VdnError::parse(line_no, start_col, "expected 'key = value'"));
        };
        let key = trimmed[..eq].trim();
        let value = trimmed[eq + 1..].trim();
        if !valid_name(key) {
            return Err(VdnError::parse(line_no, start_col, format!("invalid key {key:?}")));
        }
        let Some(section) = doc.sections.last_mut() else {
            return Err(VdnError::parse(
                line_no,
                start_col,
                format!("key '{key}' appears before any [section] header"),
            ));
        };
        if section.get(key).is_some() {
            return Err(VdnError::parse(
                line_no,
                start_col,
                format!("duplicate key '{key}' in [{}]", section.name),
            ));
        }
        // Column of the value: first non-space byte after '=', or the key's
        // column when the value is empty.
        let col = if value.is_empty() {
            start_col
        } else {
            let after_eq = start_col - 1 + eq + 1;
            let tail = &line[after_eq..];
            after_eq + (tail.len() - tail.trim_start().len()) + 1
        };
        section.entries.push(Entry {
            key: key.to_string(),
            value: value.to_string(),
            line: line_no,
            col,
        });
    }
    Ok(doc)
}

impl Entry {
    fn typed<T>(&self, what: &str, parsed: Option<T>) -> Result<T> {
        parsed.ok_or_else(|| {
            VdnError::parse(
                self.line,
                self.col,
                format!("'{}': expected {what}, got {:?}", self.key, self.value),
            )
        })
    }

    pub fn as_str(&self) -> &str {
        &self.value
    }

    pub fn as_u64(&self) -> Result<u64> {
        self.typed("an unsigned integer", self.value.parse().ok())
    }

    pub fn as_u32(&self) -> Result<u32> {
        self.typed("an unsigned integer", self.value.parse().ok())
    }

    pub fn as_usize(&self) -> Result<usize> {
        self.typed("an unsigned integer", self.value.parse().ok())
    }

    pub fn as_f64(&self) -> Result<f64> {
        self.typed("a number", self.value.parse().ok().filter(|v: &f64| v.is_finite()))
    }

    pub fn as_bool(&self) -> Result<bool> {
        let v = match self.value.as_str() {
            "true" | "yes" | "on" | "1" => Some(true),
            "false" | "no" | "off" | "0" => Some(false),
            _ => None,
        };
        self.typed("a boolean", v)
    }

    /// Comma-separated items, trimmed, empties dropped.
    pub fn as_list(&self) -> Vec<&str> {
        self.value.split(',').map(str::trim).filter(|s| !s.is_empty()).collect()
    }

    /// An error pointing at this entry — for semantic problems found after
    /// parsing (unknown key, out-of-range value).
    pub fn reject(&self, msg: impl std::fmt::Display) -> VdnError {
        VdnError::parse(self.line, self.col, format!("'{}': {msg}", self.key))
    }
}

/// Serializes sections back into the textual format (used for run metadata;
/// `parse_document` accepts its own output).
pub fn write_document(doc: &Document) -> String {
    let mut out = String::new();
    for (i, section) in doc.sections.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(&format!("[{}]\n", section.name));
        for e in &section.entries {
            out.push_str(&format!("{} = {}\n", e.key, e.value));
        }
    }
    out
}

/// Convenience builder for emitting metadata documents.
pub fn section(name: &str, pairs: &[(&str, String)]) -> Section {
    Section {
        name: name.to_string(),
        line: 0,
        entries: pairs
            .iter()
            .map(|(k, v)| Entry { key: k.to_string(), value: v.clone(), line: 0, col: 0 })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_entries_and_comments() {
        let doc = parse_document(
            "# experiment sweep\n\
             [experiment]\n\
             architectures = 1,3,9   # the interesting ones\n\
             seeds = 10\n\
             \n\
             [trainer]\n\
             gamma = 0.99\n\
             shuffle = true\n",
        )
        .unwrap();
        assert_eq!(doc.sections.len(), 2);
        assert_eq!(doc.get("experiment", "architectures").unwrap().as_list(), ["1", "3", "9"]);
        assert_eq!(doc.get("experiment", "seeds").unwrap().as_u64().unwrap(), 10);
        assert_eq!(doc.get("trainer", "gamma").unwrap().as_f64().unwrap(), 0.99);
        assert!(doc.get("trainer", "shuffle").unwrap().as_bool().unwrap());
        assert!(doc.get("trainer", "missing").is_none());
        assert!(doc.section("nope").is_none());
    }

    #[test]
    fn errors_carry_one_based_line_and_column() {
        let err = parse_document("[experiment]\nseeds = 10\nbroken line\n").unwrap_err();
        match err {
            VdnError::Parse { line, col, .. } => {
                assert_eq!((line, col), (3, 1));
            }
            other => panic!("wrong error {other}"),
        }
        // Value column points at the value itself.
        let doc = parse_document("[t]\n  gamma =   oops\n").unwrap();
        let err = doc.get("t", "gamma").unwrap().as_f64().unwrap_err();
        match err {
            VdnError::Parse { line, col, msg } => {
                assert_eq!((line, col), (2, 13));
                assert!(msg.contains("gamma"), "{msg}");
            }
            other => panic!("wrong error {other}"),
        }
    }

    #[test]
    fn rejects_malformed_structure() {
        for (text, needle) in [
            ("key = 1\n", "before any [section]"),
            ("[a\nx = 1\n", "unterminated"),
            ("[]\n", "invalid section name"),
            ("[a b]\n", "invalid section name"),
            ("[a]\n[a]\n", "duplicate section"),
            ("[a]\nx = 1\nx = 2\n", "duplicate key"),
            ("[a]\nbad key = 1\n", "invalid key"),
            ("[a]\nnovalue\n", "expected 'key = value'"),
        ] {
            let err = parse_document(text).unwrap_err();
            assert!(err.to_string().contains(needle), "{text:?} -> {err}");
        }
    }

    #[test]
    fn empty_values_and_weird_spacing_survive() {
        let doc = parse_document("[s]\nempty =\npadded   =    x y z\n").unwrap();
        assert_eq!(doc.get("s", "empty").unwrap().as_str(), "");
        assert_eq!(doc.get("s", "padded").unwrap().as_str(), "x y z");
        assert!(doc.get("s", "empty").unwrap().as_list().is_empty());
    }

    #[test]
    fn round_trips_through_the_writer() {
        let text = "[experiment]\narchitectures = 1,3,9\nseeds = 10\n\n[trainer]\ngamma = 0.99\n";
        let doc = parse_document(text).unwrap();
        assert_eq!(write_document(&doc), text);
        assert_eq!(parse_document(&write_document(&doc)).unwrap(), doc);
    }

    #[test]
    fn numeric_guards_reject_nan_and_nonsense() {
        let doc = parse_document("[t]\na = NaN\nb = -3\nc = 1e999\n").unwrap();
        assert!(doc.get("t", "a").unwrap().as_f64().is_err());
        assert!(doc.get("t", "b").unwrap().as_u64().is_err());
        assert!(doc.get("t", "c").unwrap().as_f64().is_err(), "inf overflow");
        assert_eq!(doc.get("t", "b").unwrap().as_str(), "-3");
    }
}
