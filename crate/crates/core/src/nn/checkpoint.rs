//! Line-oriented text container for trained networks.
//!
//! ```text
//! aigc-contract-checkpoint
//! format-version 1
//! meta <key> <value...>
//! vector <name> <len> <v1> <v2> ...
//! net <name> sizes <d0,d1,...> hidden <tag> output <tag>
//! params <count> <p1> <p2> ...
//! end
//! ```
//!
//! Parameters are written row-major per layer (weights then biases) in the
//! shortest decimal form that parses back to the same `f64`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use super::{Activation, DenseNet};

pub const MAGIC: &str = "aigc-contract-checkpoint";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("checkpoint format version {found}, this build reads version {expected}")]
    Version { found: u32, expected: u32 },
    #[error("checkpoint is missing `{0}`")]
    Missing(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    pub vectors: BTreeMap<String, Vec<f64>>,
    pub nets: BTreeMap<String, DenseNet>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn meta(&self, key: &str) -> Result<&str, CheckpointError> {
        self.meta.get(key).map(String::as_str).ok_or_else(|| CheckpointError::Missing(key.into()))
    }

    pub fn vector(&self, key: &str) -> Result<&[f64], CheckpointError> {
        self.vectors.get(key).map(Vec::as_slice).ok_or_else(|| CheckpointError::Missing(key.into()))
    }

    pub fn net(&self, key: &str) -> Result<&DenseNet, CheckpointError> {
        self.nets.get(key).ok_or_else(|| CheckpointError::Missing(key.into()))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{MAGIC}");
        let _ = writeln!(out, "format-version {FORMAT_VERSION}");
        for (k, v) in &self.meta {
            let _ = writeln!(out, "meta {k} {v}");
        }
        for (k, v) in &self.vectors {
            let _ = write!(out, "vector {k} {}", v.len());
            for x in v {
                let _ = write!(out, " {x:?}");
            }
            out.push('\n');
        }
        for (k, net) in &self.nets {
            let sizes: Vec<String> = net.sizes().iter().map(usize::to_string).collect();
            let _ = writeln!(
                out,
                "net {k} sizes {} hidden {} output {}",
                sizes.join(","),
                net.hidden_activation().tag(),
                net.output_activation().tag()
            );
            let flat = net.params_flat();
            let _ = write!(out, "params {}", flat.len());
            for x in flat {
                let _ = write!(out, " {x:?}");
            }
            out.push('\n');
        }
        out.push_str("end\n");
        out
    }

    pub fn parse(text: &str) -> Result<Self, CheckpointError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let bad = |line: usize, message: String| CheckpointError::Format { line, message };

        match lines.next() {
            Some((_, l)) if l.trim() == MAGIC => {}
            _ => return Err(bad(1, format!("expected `{MAGIC}` header"))),
        }
        let (ln, version_line) = lines.next().ok_or_else(|| bad(2, "missing format version".into()))?;
        let found: u32 = version_line
            .strip_prefix("format-version ")
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| bad(ln, "expected `format-version <int>`".into()))?;
        if found != FORMAT_VERSION {
            return Err(CheckpointError::Version { found, expected: FORMAT_VERSION });
        }

        let mut ckpt = Checkpoint::new();
        let mut ended = false;
        while let Some((ln, line)) = lines.next() {
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some("meta") => {
                    let key = parts.next().ok_or_else(|| bad(ln, "meta without key".into()))?;
                    let value = line
                        .splitn(3, ' ')
                        .nth(2)
                        .unwrap_or("")
                        .to_string();
                    ckpt.meta.insert(key.to_string(), value);
                }
                Some("vector") => {
                    let key = parts.next().ok_or_else(|| bad(ln, "vector without name".into()))?;
                    let values = parse_counted(parts, ln)?;
                    ckpt.vectors.insert(key.to_string(), values);
                }
                Some("net") => {
                    let key = parts.next().ok_or_else(|| bad(ln, "net without name".into()))?;
                    let rest: Vec<&str> = parts.collect();
                    let (sizes, hidden, output) = match rest.as_slice() {
                        ["sizes", s, "hidden", h, "output", o] => (*s, *h, *o),
                        _ => return Err(bad(ln, "expected `sizes .. hidden .. output ..`".into())),
                    };
                    let sizes: Vec<usize> = sizes
                        .split(',')
                        .map(|s| s.parse())
                        .collect::<Result<_, _>>()
                        .map_err(|e| bad(ln, format!("bad layer sizes: {e}")))?;
                    let hidden = Activation::from_tag(hidden).map_err(|e| bad(ln, e.to_string()))?;
                    let output = Activation::from_tag(output).map_err(|e| bad(ln, e.to_string()))?;
                    let mut net = DenseNet::zeros(&sizes, hidden, output)
                        .map_err(|e| bad(ln, e.to_string()))?;
                    let (pln, params_line) =
                        lines.next().ok_or_else(|| bad(ln + 1, "missing params line".into()))?;
                    let mut pparts = params_line.split_whitespace();
                    if pparts.next() != Some("params") {
                        return Err(bad(pln, "expected `params`".into()));
                    }
                    let flat = parse_counted(pparts, pln)?;
                    net.set_params_flat(&flat).map_err(|e| bad(pln, e.to_string()))?;
                    ckpt.nets.insert(key.to_string(), net);
                }
                Some("end") => {
                    ended = true;
                    break;
                }
                None => {}
                Some(other) => return Err(bad(ln, format!("unknown record `{other}`"))),
            }
        }
        if !ended {
            return Err(CheckpointError::Missing("end".into()));
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

fn parse_counted<'a>(
    mut parts: impl Iterator<Item = &'a str>,
    line: usize,
) -> Result<Vec<f64>, CheckpointError> {
    let bad = |message: String| CheckpointError::Format { line, message };
    let count: usize = parts
        .next()
        .and_then(|c| c.parse().ok())
        .ok_or_else(|| bad("missing element count".into()))?;
    let values: Vec<f64> = parts
        .map(|p| p.parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| bad(format!("bad number: {e}")))?;
    if values.len() != count {
        return Err(bad(format!("declared {count} values, found {}", values.len())));
    }
    Ok(values)
}
