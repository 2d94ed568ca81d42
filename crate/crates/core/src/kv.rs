// SPDX-License-Identifier: Apache-2.0

//! Minimal `key = value` text format shared by calibration, scene and
//! reconstruction config files.
//!
//! ```text
//! # comment
//! rows = 32
//! [surface]
//! kind = plane
//! ```
//!
//! Keys before the first `[section]` header belong to the root section.
//! Section names may repeat; each occurrence is kept in file order.

use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone, Default)]
pub struct Section {
    pub name: String,
    pub line: usize,
    pub entries: Vec<Entry>,
}

#[derive(Debug, Clone, Default)]
pub struct KvDoc {
    pub root: Section,
    pub sections: Vec<Section>,
}

impl KvDoc {
    pub fn parse(text: &str) -> Result<Self> {
        let mut doc = KvDoc::default();
        let mut current: Option<Section> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| Error::config(line_no, "unterminated section header"))?
                    .trim();
                if name.is_empty() {
                    return Err(Error::config(line_no, "empty section name"));
                }
                if let Some(done) = current.take() {
                    doc.sections.push(done);
                }
                current = Some(Section {
                    name: name.to_string(),
                    line: line_no,
                    entries: Vec::new(),
                });
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(line_no, format!("expected key = value, got {line:?}")))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::config(line_no, "empty key"));
            }
            let target = current.as_mut().unwrap_or(&mut doc.root);
            if target.entries.iter().any(|e| e.key == key) {
                return Err(Error::config(line_no, format!("duplicate key {key:?}")));
            }
            target.entries.push(Entry {
                key: key.to_string(),
                value: value.trim().to_string(),
                line: line_no,
            });
        }
        if let Some(done) = current.take() {
            doc.sections.push(done);
        }
        Ok(doc)
    }

    pub fn sections_named<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a Section> + 'a {
        self.sections.iter().filter(move |s| s.name == name)
    }

    /// Root entries merged with the entries of the (single) named section,
    /// used where a file may either be flat or wrap its keys in `[name]`.
    pub fn section_or_root(&self, name: &str) -> Section {
        let mut merged = self.root.clone();
        for s in self.sections_named(name) {
            merged.entries.extend(s.entries.iter().cloned());
        }
        merged
    }
}

impl Section {
    pub fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.key == key)
    }

    /// Rejects keys outside `allowed` so that typos do not pass silently.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        for e in &self.entries {
            if !allowed.contains(&e.key.as_str()) {
                return Err(Error::config(e.line, format!("unknown key {:?}", e.key)));
            }
        }
        Ok(())
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(e) => e
                .value
                .parse::<T>()
                .map(Some)
                .map_err(|_| Error::config(e.line, format!("bad value for {key}: {:?}", e.value))),
        }
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        self.parse(key)?
            .ok_or_else(|| Error::config(self.line, format!("missing key {key:?} in [{}]", self.name)))
    }

    pub fn parse_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        match self.get(key) {
            None => Ok(None),
            Some(e) => parse_list(&e.value)
                .map(Some)
                .map_err(|_| Error::config(e.line, format!("bad list for {key}"))),
        }
    }
}

/// Parses a comma and/or whitespace separated list.
pub fn parse_list<T: FromStr>(text: &str) -> std::result::Result<Vec<T>, T::Err> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect()
}
