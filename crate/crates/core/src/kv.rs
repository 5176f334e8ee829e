//! Plain-text `key=value` documents.
//!
//! Two shapes share one escaping scheme:
//!
//! - sectioned documents (`[section]` headers, one `key=value` per line,
//!   `#` comments) used for configs, manifests and reports;
//! - rows, where one line holds several space-separated `key=value` pairs.
//!
//! Values escape `%`, space, tab, CR and LF as `%25 %20 %09 %0D %0A`, so a
//! rendered document always parses back into the same pairs. Keys may not
//! contain `=`, whitespace or `%`.

use std::fmt::Write as _;

use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KvError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("missing key `{key}` in section [{section}]")]
    Missing { section: String, key: String },
    #[error("invalid value for `{key}`: {value}")]
    Invalid { key: String, value: String },
}

pub fn escape(value: &str) -> String {
    let mut out = String::with_capacity(value.len());
    for c in value.chars() {
        match c {
            '%' => out.push_str("%25"),
            ' ' => out.push_str("%20"),
            '\t' => out.push_str("%09"),
            '\r' => out.push_str("%0D"),
            '\n' => out.push_str("%0A"),
            c => out.push(c),
        }
    }
    out
}

pub fn unescape(value: &str) -> Result<String, String> {
    let mut out = String::with_capacity(value.len());
    let mut chars = value.chars();
    while let Some(c) = chars.next() {
        if c != '%' {
            out.push(c);
            continue;
        }
        let code: String = chars.by_ref().take(2).collect();
        let ch = match code.as_str() {
            "25" => '%',
            "20" => ' ',
            "09" => '\t',
            "0D" => '\r',
            "0A" => '\n',
            other => return Err(format!("bad escape %{other}")),
        };
        out.push(ch);
    }
    Ok(out)
}

fn valid_key(key: &str) -> bool {
    !key.is_empty() && !key.chars().any(|c| c == '=' || c == '%' || c.is_whitespace())
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Section {
    pub name: String,
    pub entries: Vec<(String, String)>,
}

impl Section {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            entries: Vec::new(),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .rev()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    /// Replace an existing key in place or append it.
    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        let key = key.into();
        assert!(valid_key(&key), "invalid key {key:?}");
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| *k == key) {
            Some(entry) => entry.1 = value,
            None => self.entries.push((key, value)),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KvDoc {
    pub sections: Vec<Section>,
}

impl KvDoc {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self, KvError> {
        let mut doc = KvDoc::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let syntax = |msg: &str| KvError::Syntax {
                line: i + 1,
                msg: msg.to_string(),
            };
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| syntax("unterminated section"))?;
                doc.sections.push(Section::new(name.trim()));
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| syntax("expected key=value"))?;
            let key = k.trim();
            if !valid_key(key) {
                return Err(syntax("invalid key"));
            }
            let value = unescape(v.trim()).map_err(|m| syntax(&m))?;
            if doc.sections.is_empty() {
                doc.sections.push(Section::new(""));
            }
            let section = doc.sections.last_mut().expect("section exists");
            section.entries.push((key.to_string(), value));
        }
        Ok(doc)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (i, s) in self.sections.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            if !s.name.is_empty() || i > 0 {
                let _ = writeln!(out, "[{}]", s.name);
            }
            for (k, v) in &s.entries {
                let _ = writeln!(out, "{k}={}", escape(v));
            }
        }
        out
    }

    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }

    pub fn section_mut(&mut self, name: &str) -> &mut Section {
        if let Some(pos) = self.sections.iter().position(|s| s.name == name) {
            return &mut self.sections[pos];
        }
        self.sections.push(Section::new(name));
        self.sections.last_mut().expect("just pushed")
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.section(section).and_then(|s| s.get(key))
    }

    pub fn require(&self, section: &str, key: &str) -> Result<&str, KvError> {
        self.get(section, key).ok_or_else(|| KvError::Missing {
            section: section.to_string(),
            key: key.to_string(),
        })
    }

    pub fn parse_value<T: std::str::FromStr>(&self, section: &str, key: &str) -> Result<T, KvError> {
        let raw = self.require(section, key)?;
        raw.parse().map_err(|_| KvError::Invalid {
            key: key.to_string(),
            value: raw.to_string(),
        })
    }

    /// SHA-256 of the rendered form, hex encoded.
    pub fn digest(&self) -> String {
        sha256_hex(self.render().as_bytes())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let hash = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in hash {
        let _ = write!(out, "{b:02x}");
    }
    out
}

pub fn render_row(pairs: &[(&str, String)]) -> String {
    let mut out = String::new();
    for (i, (k, v)) in pairs.iter().enumerate() {
        assert!(valid_key(k), "invalid key {k:?}");
        if i > 0 {
            out.push(' ');
        }
        out.push_str(k);
        out.push('=');
        out.push_str(&escape(v));
    }
    out
}

pub fn parse_row(line: &str) -> Result<Vec<(String, String)>, String> {
    line.split_whitespace()
        .map(|field| {
            let (k, v) = field
                .split_once('=')
                .ok_or_else(|| format!("field `{field}` lacks `=`"))?;
            if !valid_key(k) {
                return Err(format!("invalid key `{k}`"));
            }
            Ok((k.to_string(), unescape(v)?))
        })
        .collect()
}

/// Lookup helper for parsed rows.
pub fn row_get<'a>(row: &'a [(String, String)], key: &str) -> Option<&'a str> {
    row.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
}
