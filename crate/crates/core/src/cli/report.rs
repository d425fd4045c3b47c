//! Run reports: a `schema_version: 1` line followed by `key: value` lines.
//! Numbers use the same 17-digit formatting as the CSV outputs.

use std::fmt::Display;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::grid::fmt_f64;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    entries: Vec<(String, String)>,
}

impl Report {
    pub fn new(command: &str) -> Self {
        let mut r = Self::default();
        r.text("command", command);
        r
    }

    pub fn text(&mut self, key: &str, value: impl Display) -> &mut Self {
        let v = value.to_string().replace('\n', " ");
        self.entries.push((key.to_string(), v));
        self
    }

    pub fn num(&mut self, key: &str, value: f64) -> &mut Self {
        self.text(key, fmt_f64(value))
    }

    pub fn flag(&mut self, key: &str, value: bool) -> &mut Self {
        self.text(key, if value { "pass" } else { "fail" })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "schema_version: {SCHEMA_VERSION}")?;
        for (k, v) in &self.entries {
            writeln!(out, "{k}: {v}")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let head = lines.next().transpose()?.unwrap_or_default();
        if head.trim() != format!("schema_version: {SCHEMA_VERSION}") {
            return Err(Error::Parse(format!("unexpected report header '{head}'")));
        }
        let mut entries = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let (k, v) = line.split_once(": ").ok_or_else(|| Error::Parse(format!("bad report line '{line}'")))?;
            entries.push((k.to_string(), v.to_string()));
        }
        Ok(Self { entries })
    }
}
