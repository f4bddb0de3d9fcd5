//! Versioned plain-text checkpoint container.
//!
//! ```text
//! COACHNET-CKPT v1
//! section <tag>
//! meta <key> <value>
//! param <name> <rows> <cols>
//! <rows*cols values, row-major, space separated>
//! end
//! ```
//!
//! Values are written with Rust's shortest round-trip float formatting, so a
//! save/load cycle reproduces every parameter bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numcore::{Matrix, ParamGraph};

pub const CHECKPOINT_HEADER: &str = "COACHNET-CKPT v1";

#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointBlob {
    pub section: String,
    pub meta: Vec<(String, String)>,
    pub params: ParamGraph,
}

impl CheckpointBlob {
    pub fn new(section: impl Into<String>, params: ParamGraph) -> Self {
        Self {
            section: section.into(),
            meta: Vec::new(),
            params,
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.push((key.to_string(), value.to_string()));
        self
    }

    pub fn meta(&self, key: &str) -> Result<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::Parse {
                what: format!("checkpoint section `{}`", self.section),
                line: 0,
                detail: format!("missing meta field `{key}`"),
            })
    }

    pub fn meta_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.meta(key)?;
        raw.parse().map_err(|_| Error::Parse {
            what: format!("checkpoint section `{}`", self.section),
            line: 0,
            detail: format!("bad value `{raw}` for `{key}`"),
        })
    }

    pub fn expect_section(&self, section: &str) -> Result<()> {
        if self.section != section {
            return Err(Error::Parse {
                what: "checkpoint".into(),
                line: 2,
                detail: format!("expected section `{section}`, found `{}`", self.section),
            });
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(CHECKPOINT_HEADER);
        out.push('\n');
        let _ = writeln!(out, "section {}", self.section);
        for (k, v) in &self.meta {
            let _ = writeln!(out, "meta {k} {v}");
        }
        for (name, m) in self.params.iter() {
            let _ = writeln!(out, "param {name} {} {}", m.rows(), m.cols());
            let line: Vec<String> = m.data().iter().map(|x| format!("{x:?}")).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out.push_str("end\n");
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let err = |line: usize, detail: String| Error::Parse {
            what: "checkpoint".into(),
            line,
            detail,
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, h)) if h == CHECKPOINT_HEADER => {}
            Some((n, h)) => return Err(err(n, format!("bad header `{h}`"))),
            None => return Err(err(1, "empty file".into())),
        }
        let section = match lines.next() {
            Some((_, l)) if l.starts_with("section ") => l["section ".len()..].to_string(),
            Some((n, l)) => return Err(err(n, format!("expected section line, got `{l}`"))),
            None => return Err(err(2, "truncated".into())),
        };
        let mut blob = CheckpointBlob::new(section, ParamGraph::new());
        let mut ended = false;
        while let Some((n, line)) = lines.next() {
            if line == "end" {
                ended = true;
                break;
            }
            if let Some(rest) = line.strip_prefix("meta ") {
                let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                blob.meta.push((k.to_string(), v.to_string()));
            } else if let Some(rest) = line.strip_prefix("param ") {
                let parts: Vec<&str> = rest.split(' ').collect();
                if parts.len() != 3 {
                    return Err(err(n, format!("malformed param line `{line}`")));
                }
                let rows: usize = parts[1].parse().map_err(|_| err(n, "bad rows".into()))?;
                let cols: usize = parts[2].parse().map_err(|_| err(n, "bad cols".into()))?;
                let (vn, values) = lines.next().ok_or_else(|| err(n, "missing values".into()))?;
                let data = if rows * cols == 0 {
                    Vec::new()
                } else {
                    values
                        .split(' ')
                        .map(|v| v.parse::<f64>().map_err(|_| err(vn, format!("bad value `{v}`"))))
                        .collect::<Result<Vec<_>>>()?
                };
                let m = Matrix::from_vec(rows, cols, data).map_err(|e| err(vn, e.to_string()))?;
                blob.params.add(parts[0], m).map_err(|e| err(n, e.to_string()))?;
            } else {
                return Err(err(n, format!("unexpected line `{line}`")));
            }
        }
        if !ended {
            return Err(err(0, "missing `end`".into()));
        }
        Ok(blob)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut g = ParamGraph::new();
        g.add("a.w", Matrix::from_vec(2, 2, vec![0.1, -1e-300, 3.0e17, 1.0 / 3.0]).unwrap())
            .unwrap();
        g.add("b", Matrix::scalar(f64::MIN_POSITIVE)).unwrap();
        let blob = CheckpointBlob::new("policy", g).with_meta("age_timesteps", 12);
        let back = CheckpointBlob::from_text(&blob.to_text()).unwrap();
        assert!(back.params.same_values(&blob.params));
        assert_eq!(back.meta_parse::<u64>("age_timesteps").unwrap(), 12);
    }

    #[test]
    fn rejects_bad_header() {
        assert!(CheckpointBlob::from_text("COACHNET-CKPT v2\nsection x\nend\n").is_err());
        assert!(CheckpointBlob::from_text("COACHNET-CKPT v1\nsection x\n").is_err());
    }
}
