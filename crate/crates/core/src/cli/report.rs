//! Plain-text reports: `key=value` lines and CSV tables under `[section]` headers.

use std::fmt::Display;
use std::path::Path;

use crate::error::Result;

#[derive(Debug, Default)]
pub struct Report {
    text: String,
}

/// Fixed six-decimal formatting keeps reports diffable.
pub fn num(x: f64) -> String {
    format!("{x:.6}")
}

impl Report {
    pub fn new(command: &str) -> Self {
        let mut r = Report::default();
        r.kv("command", command);
        r
    }

    pub fn kv(&mut self, key: &str, value: impl Display) -> &mut Self {
        self.text.push_str(&format!("{key}={value}\n"));
        self
    }

    pub fn kv_num(&mut self, key: &str, value: f64) -> &mut Self {
        self.kv(key, num(value))
    }

    pub fn section(&mut self, name: &str) -> &mut Self {
        self.text.push_str(&format!("\n[{name}]\n"));
        self
    }

    pub fn row<I, S>(&mut self, cells: I) -> &mut Self
    where
        I: IntoIterator<Item = S>,
        S: Display,
    {
        let cells: Vec<String> = cells.into_iter().map(|c| c.to_string()).collect();
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
        self
    }

    pub fn raw(&mut self, text: &str) -> &mut Self {
        self.text.push_str(text);
        self
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, &self.text)?;
        Ok(())
    }
}
