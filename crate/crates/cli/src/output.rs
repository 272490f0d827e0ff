//! Atomic file and directory outputs, and TSV formatting.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

fn tmp_sibling(dest: &Path) -> PathBuf {
    let name = dest
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    dest.with_file_name(format!(".{name}.tmp"))
}

/// Writes `bytes` next to `dest` and renames it into place.
pub fn write_atomic(dest: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = dest.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    let tmp = tmp_sibling(dest);
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, dest).with_context(|| format!("renaming into {}", dest.display()))
}

/// A directory built under a temporary name and renamed on success.
pub struct StagedOutput {
    pub tmp: PathBuf,
    dest: PathBuf,
}

impl StagedOutput {
    pub fn new(dest: &Path) -> Result<Self> {
        if let Some(parent) = dest.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        let tmp = tmp_sibling(dest);
        if tmp.exists() {
            fs::remove_dir_all(&tmp).with_context(|| format!("clearing {}", tmp.display()))?;
        }
        fs::create_dir(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        Ok(Self {
            tmp,
            dest: dest.to_path_buf(),
        })
    }

    pub fn commit(self) -> Result<()> {
        if self.dest.exists() {
            fs::remove_dir_all(&self.dest).with_context(|| format!("replacing {}", self.dest.display()))?;
        }
        fs::rename(&self.tmp, &self.dest).with_context(|| format!("renaming into {}", self.dest.display()))
    }
}

/// Tab-separated table with `#` comment lines and a commented header.
pub struct Tsv {
    text: String,
}

impl Tsv {
    pub fn new(comments: &[String], columns: &[&str]) -> Self {
        let mut text = String::new();
        for c in comments {
            writeln!(text, "# {c}").unwrap();
        }
        writeln!(text, "# {}", columns.join("\t")).unwrap();
        Self { text }
    }

    pub fn row(&mut self, cells: &[String]) {
        writeln!(self.text, "{}", cells.join("\t")).unwrap();
    }

    pub fn write(&self, dest: &Path) -> Result<()> {
        write_atomic(dest, self.text.as_bytes())
    }
}

/// Shortest round-trip formatting, so reruns give identical bytes.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}
