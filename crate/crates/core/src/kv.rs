//! Flat `key = value` text with `#` comments, shared by configs and snapshots.

use std::str::FromStr;

use nalgebra::DVector;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Entry {
    /// 1-based line number.
    pub line: usize,
    pub key: String,
    pub value: String,
}

pub(crate) fn parse(text: &str) -> Result<Vec<Entry>> {
    let mut out: Vec<Entry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| Error::Config {
            line,
            message: format!("expected `key = value`, got {content:?}"),
        })?;
        let key = key.trim();
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(Error::Config {
                line,
                message: format!("bad key {key:?}"),
            });
        }
        if let Some(prev) = out.iter().find(|e| e.key == key) {
            return Err(Error::Config {
                line,
                message: format!("duplicate key `{key}` (first set on line {})", prev.line),
            });
        }
        out.push(Entry {
            line,
            key: key.to_string(),
            value: value.trim().to_string(),
        });
    }
    Ok(out)
}

impl Entry {
    pub fn parse<T: FromStr>(&self) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.value.parse().map_err(|e: T::Err| Error::Config {
            line: self.line,
            message: format!("`{}`: {e}", self.key),
        })
    }

    pub fn vector(&self) -> Result<DVector<f64>> {
        let values: Vec<f64> = self
            .value
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Config {
                line: self.line,
                message: format!("`{}`: {e}", self.key),
            })?;
        Ok(DVector::from_vec(values))
    }
}

pub(crate) fn format_vector(v: &DVector<f64>) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}
