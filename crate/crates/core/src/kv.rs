//! Minimal `key = value` text format shared by the model, controller, MPC
//! and campaign files.
//!
//! Lines starting with `#` are comments. A line of the form `[name]` opens a
//! new section; keys before the first section belong to the root section.
//! Values are whitespace-separated tokens.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone)]
pub struct Section {
    pub name: String,
    pub line: usize,
    pub entries: Vec<Entry>,
}

impl Section {
    pub fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.key == key)
    }

    pub fn require(&self, key: &str) -> Result<&Entry> {
        self.get(key).ok_or_else(|| Error::Parse {
            line: self.line,
            msg: format!("missing field `{key}` in section [{}]", self.name),
        })
    }

    pub fn floats(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.get(key).map(|e| e.floats()).transpose()
    }

    pub fn float(&self, key: &str) -> Result<Option<f64>> {
        self.get(key).map(|e| e.float()).transpose()
    }
}

impl Entry {
    pub fn floats(&self) -> Result<Vec<f64>> {
        self.value
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>().map_err(|_| Error::Parse {
                    line: self.line,
                    msg: format!("field `{}`: `{tok}` is not a number", self.key),
                })
            })
            .collect()
    }

    pub fn floats_n(&self, n: usize) -> Result<Vec<f64>> {
        let v = self.floats()?;
        if v.len() != n {
            return Err(Error::Parse {
                line: self.line,
                msg: format!("field `{}` expects {n} numbers, found {}", self.key, v.len()),
            });
        }
        Ok(v)
    }

    pub fn float(&self) -> Result<f64> {
        Ok(self.floats_n(1)?[0])
    }

    pub fn usize(&self) -> Result<usize> {
        self.value.trim().parse().map_err(|_| Error::Parse {
            line: self.line,
            msg: format!("field `{}` expects a non-negative integer", self.key),
        })
    }

    pub fn words(&self) -> Vec<&str> {
        self.value.split_whitespace().collect()
    }
}

pub fn parse(text: &str) -> Result<Vec<Section>> {
    let mut sections = vec![Section {
        name: String::new(),
        line: 0,
        entries: Vec::new(),
    }];
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| Error::Parse {
                line: line_no,
                msg: "unterminated section header".into(),
            })?;
            sections.push(Section {
                name: name.trim().to_string(),
                line: line_no,
                entries: Vec::new(),
            });
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: line_no,
            msg: format!("expected `key = value`, found `{line}`"),
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::Parse {
                line: line_no,
                msg: "empty key".into(),
            });
        }
        let current = sections.last_mut().expect("root section always present");
        if current.get(key).is_some() {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("duplicate field `{key}`"),
            });
        }
        current.entries.push(Entry {
            key: key.to_string(),
            value: value.trim().to_string(),
            line: line_no,
        });
    }
    Ok(sections)
}

pub(crate) fn join(values: impl IntoIterator<Item = f64>) -> String {
    values
        .into_iter()
        .map(|v| format!("{v:?}"))
        .collect::<Vec<_>>()
        .join(" ")
}
