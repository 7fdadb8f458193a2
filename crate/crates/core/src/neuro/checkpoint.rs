//! Plain-text checkpoints.
//!
//! ```text
//! tsch-ppg-checkpoint 1
//! meta <key> <value>          (zero or more)
//! net <name>
//! sizes <s0> <s1> ... <sL>
//! <one parameter per line, LowerExp shortest round-trip form>
//! end
//! ```
//!
//! Parameters are written in the flat layout of [`Mlp`], so a reload is bit-exact.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::Mlp;
use crate::error::{Error, Result};

const MAGIC: &str = "tsch-ppg-checkpoint";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    pub nets: Vec<(String, Mlp)>,
}

impl Checkpoint {
    pub fn net(&self, name: &str) -> Option<&Mlp> {
        self.nets.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{MAGIC} {VERSION}\n");
        for (k, v) in &self.meta {
            writeln!(out, "meta {k} {v}").unwrap();
        }
        for (name, net) in &self.nets {
            writeln!(out, "net {name}").unwrap();
            let sizes: Vec<String> = net.sizes().iter().map(|s| s.to_string()).collect();
            writeln!(out, "sizes {}", sizes.join(" ")).unwrap();
            for p in net.params() {
                writeln!(out, "{p:e}").unwrap();
            }
        }
        out.push_str("end\n");
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::Checkpoint(msg);
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| bad("empty checkpoint".into()))?;
        match header.split_once(' ') {
            Some((MAGIC, v)) if v.trim() == VERSION.to_string() => {}
            _ => return Err(bad(format!("unrecognised header {header:?}"))),
        }
        let mut ckpt = Checkpoint::default();
        let mut current: Option<(String, Vec<usize>, Vec<f64>)> = None;
        let mut finished = false;
        let flush = |cur: Option<(String, Vec<usize>, Vec<f64>)>, ckpt: &mut Checkpoint| -> Result<()> {
            if let Some((name, sizes, params)) = cur {
                let net = Mlp::from_params(&sizes, params)
                    .map_err(|e| Error::Checkpoint(format!("net {name}: {e}")))?;
                ckpt.nets.push((name, net));
            }
            Ok(())
        };
        for (lineno, line) in lines {
            let line = line.trim();
            if finished {
                if !line.is_empty() {
                    return Err(bad(format!("line {}: content after end", lineno + 1)));
                }
                continue;
            }
            if let Some(rest) = line.strip_prefix("meta ") {
                let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                ckpt.meta.insert(k.to_string(), v.to_string());
            } else if let Some(name) = line.strip_prefix("net ") {
                flush(current.take(), &mut ckpt)?;
                current = Some((name.to_string(), Vec::new(), Vec::new()));
            } else if let Some(rest) = line.strip_prefix("sizes ") {
                let cur = current.as_mut().ok_or_else(|| bad(format!("line {}: sizes before net", lineno + 1)))?;
                cur.1 = rest
                    .split_whitespace()
                    .map(|s| s.parse().map_err(|_| bad(format!("line {}: bad size {s:?}", lineno + 1))))
                    .collect::<Result<_>>()?;
            } else if line == "end" {
                flush(current.take(), &mut ckpt)?;
                finished = true;
            } else {
                let cur = current.as_mut().ok_or_else(|| bad(format!("line {}: value outside a net", lineno + 1)))?;
                let v: f64 = line.parse().map_err(|_| bad(format!("line {}: bad value {line:?}", lineno + 1)))?;
                cur.2.push(v);
            }
        }
        if !finished {
            return Err(bad("missing end marker".into()));
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}
