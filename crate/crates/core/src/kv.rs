//! Flat `key=value` settings shared by every configuration struct.
//!
//! Files hold one `key = value` pair per line; `#` starts a comment and
//! blank lines are ignored. Values are written back with Rust's shortest
//! round-trip formatting, so a snapshot re-parses to identical settings.

use std::fmt::Display;
use std::str::FromStr;

use crate::error::{Error, Result};

/// A configuration section addressable by flat keys.
pub trait KeyValue {
    /// Applies one setting. Returns `Ok(false)` if the key is not part of
    /// this section.
    fn set(&mut self, key: &str, value: &str) -> Result<bool>;

    /// Every key with its current value, in a stable order.
    fn entries(&self) -> Vec<(&'static str, String)>;
}

/// Parses `value` for `key`, naming both in the error.
pub fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| Error::config(format!("bad value {value:?} for {key}: {e}")))
}

/// Splits config text into `(line number, key, value)` triples.
pub fn parse_lines(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::config(format!("line {}: expected key=value, got {raw:?}", i + 1)))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(Error::config(format!("line {}: empty key", i + 1)));
        }
        out.push((i + 1, k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Renders entries as `key = value` lines.
pub fn render(entries: &[(&'static str, String)]) -> String {
    entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

/// Applies every pair to `section`, failing on the first unknown key.
pub fn apply_all<S: KeyValue>(section: &mut S, text: &str) -> Result<()> {
    for (line, k, v) in parse_lines(text)? {
        if !section.set(&k, &v)? {
            return Err(Error::config(format!("line {line}: unknown key {k:?}")));
        }
    }
    Ok(())
}
