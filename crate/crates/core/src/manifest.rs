//! Flat `key = value` text files used for every manifest and config.
//!
//! Keys keep insertion order so that writing the same content twice yields
//! identical bytes. Lines starting with `#` are comments.

use std::fmt::Display;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl Display) {
        self.entries.push((key.into(), value.to_string()));
    }

    /// Sets `key`, replacing an existing entry in place.
    pub fn set(&mut self, key: impl Into<String>, value: impl Display) {
        let key = key.into();
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| *k == key) {
            Some(entry) => entry.1 = value,
            None => self.entries.push((key, value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::format("manifest", format!("missing key `{key}`")))
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.require(key)?;
        raw.parse()
            .map_err(|_| Error::format("manifest", format!("bad value `{raw}` for `{key}`")))
    }

    pub fn parse_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.get(key) {
            Some(_) => self.parse(key),
            None => Ok(default),
        }
    }

    /// Whitespace-separated list of values.
    pub fn parse_list<T: FromStr>(&self, key: &str) -> Result<Vec<T>> {
        let raw = self.require(key)?;
        raw.split_whitespace()
            .map(|tok| {
                tok.parse().map_err(|_| {
                    Error::format("manifest", format!("bad list item `{tok}` for `{key}`"))
                })
            })
            .collect()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    /// Entries whose key starts with `prefix`, in file order.
    pub fn with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = (&'a str, &'a str)> {
        self.entries()
            .filter(move |(k, _)| k.starts_with(prefix))
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    pub fn from_str_content(content: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (lineno, line) in content.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::format("manifest", format!("line {}: expected `key = value`", lineno + 1))
            })?;
            entries.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(Self { entries })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_str_content(&content)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.render()).map_err(|e| Error::io(path, e))
    }
}

/// Renders a float slice as a whitespace-separated list that parses back bit-exactly.
pub fn join_floats(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| format!("{v:?}"))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn join_display<T: Display>(values: &[T]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_and_parse_roundtrip() {
        let mut m = Manifest::new();
        m.push("a", 1);
        m.push("b.c", "hello world");
        m.push("floats", join_floats(&[0.1, -2.5e-300, 3.0]));
        let back = Manifest::from_str_content(&m.render()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.parse::<i32>("a").unwrap(), 1);
        assert_eq!(
            back.parse_list::<f64>("floats").unwrap(),
            vec![0.1, -2.5e-300, 3.0]
        );
    }

    #[test]
    fn comments_and_missing_keys() {
        let m = Manifest::from_str_content("# hi\n\nx = 2\n").unwrap();
        assert_eq!(m.get("x"), Some("2"));
        assert!(m.require("y").is_err());
        assert!(Manifest::from_str_content("no equals sign").is_err());
    }
}
