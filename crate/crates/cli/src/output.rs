//! Artifact writers. Every float goes through one formatter so reruns are
//! byte-identical.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

pub const SCHEMA_VERSION: u32 = 1;

/// 17 significant digits, enough to round-trip any `f64`.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub struct Csv {
    text: String,
    columns: usize,
}

impl Csv {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        let names: Vec<&str> = header.iter().map(AsRef::as_ref).collect();
        Self {
            text: names.join(",") + "\n",
            columns: names.len(),
        }
    }

    pub fn row(&mut self, cells: &[String]) {
        debug_assert_eq!(cells.len(), self.columns);
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn numbers(&mut self, values: &[f64]) {
        let cells: Vec<String> = values.iter().map(|&v| num(v)).collect();
        self.row(&cells);
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema_version: u32,
    command: &'a str,
    #[serde(flatten)]
    body: &'a T,
}

/// Output directory of one run.
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write(&self, name: &str, text: &str) -> Result<()> {
        let path = self.path(name);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }

    pub fn csv(&self, name: &str, csv: Csv) -> Result<()> {
        self.write(name, &csv.into_string())
    }

    pub fn json<T: Serialize>(&self, name: &str, command: &str, body: &T) -> Result<()> {
        let env = Envelope {
            schema_version: SCHEMA_VERSION,
            command,
            body,
        };
        let mut text = serde_json::to_string_pretty(&env)?;
        text.push('\n');
        self.write(name, &text)
    }
}

/// `"16x64"` style label of the interior grid.
pub fn grid_label(radial: usize, angular: usize) -> String {
    format!("{radial}x{angular}")
}
