//! Plain-text checkpoint format.
//!
//! ```text
//! sddgat-checkpoint 1
//! meta model.input_dim=6
//! meta graph.k=8
//! param spatial.0.weight 6x32
//! <space separated values>
//! end
//! ```
//!
//! Values use the shortest representation that round-trips exactly, so a
//! checkpoint reloads bit-identically.

use std::path::Path;

use super::{ModelConfig, Param, SddGat, Task, Variant};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &str = "sddgat-checkpoint";
const VERSION: u32 = 1;

/// A model together with free-form metadata (graph config, preprocessing
/// record, split) needed to reproduce its inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: SddGat,
    pub meta: Vec<(String, String)>,
}

impl Checkpoint {
    pub fn new(model: SddGat) -> Self {
        Self {
            model,
            meta: Vec::new(),
        }
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.meta.push((key.into(), value.to_string()));
        self
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn to_text(&self) -> String {
        let cfg = self.model.config;
        let mut out = format!("{} {}\n", MAGIC, VERSION);
        out.push_str(&format!("meta model.input_dim={}\n", cfg.input_dim));
        out.push_str(&format!("meta model.hidden_dim={}\n", cfg.hidden_dim));
        out.push_str(&format!("meta model.task={}\n", cfg.task));
        out.push_str(&format!("meta model.variant={}\n", self.model.variant));
        for (k, v) in &self.meta {
            out.push_str(&format!("meta {}={}\n", k, v));
        }
        for p in self.model.params() {
            let shape = if p.value.shape().is_empty() {
                "scalar".to_string()
            } else {
                p.value
                    .shape()
                    .iter()
                    .map(usize::to_string)
                    .collect::<Vec<_>>()
                    .join("x")
            };
            out.push_str(&format!("param {} {}\n", p.name, shape));
            let vals: Vec<String> = p.value.data().iter().map(|v| format!("{:?}", v)).collect();
            out.push_str(&vals.join(" "));
            out.push('\n');
        }
        out.push_str("end\n");
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::Checkpoint(msg);
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        let mut hp = header.split_whitespace();
        if hp.next() != Some(MAGIC) {
            return Err(bad("not a checkpoint file".into()));
        }
        let version: u32 = hp
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad("missing version".into()))?;
        if version != VERSION {
            return Err(bad(format!("unsupported checkpoint version {}", version)));
        }

        let mut meta = Vec::new();
        let mut params = Vec::new();
        let mut finished = false;
        while let Some(line) = lines.next() {
            if let Some(kv) = line.strip_prefix("meta ") {
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| bad(format!("malformed meta line `{}`", line)))?;
                meta.push((k.to_string(), v.to_string()));
            } else if let Some(rest) = line.strip_prefix("param ") {
                let (name, shape) = rest
                    .split_once(' ')
                    .ok_or_else(|| bad(format!("malformed param line `{}`", line)))?;
                let shape: Vec<usize> = if shape == "scalar" {
                    Vec::new()
                } else {
                    shape
                        .split('x')
                        .map(|s| s.parse().map_err(|_| bad(format!("bad shape `{}`", shape))))
                        .collect::<Result<_>>()?
                };
                let values = lines
                    .next()
                    .ok_or_else(|| bad(format!("missing values for `{}`", name)))?;
                let data: Vec<f64> = values
                    .split_whitespace()
                    .map(|v| v.parse().map_err(|_| bad(format!("bad value `{}` in `{}`", v, name))))
                    .collect::<Result<_>>()?;
                let value = Tensor::new(shape, data)
                    .map_err(|e| bad(format!("parameter `{}`: {}", name, e)))?;
                params.push(Param {
                    name: name.to_string(),
                    value,
                });
            } else if line == "end" {
                finished = true;
                break;
            } else if !line.trim().is_empty() {
                return Err(bad(format!("unexpected line `{}`", line)));
            }
        }
        if !finished {
            return Err(bad("truncated checkpoint (no `end`)".into()));
        }

        let take = |meta: &mut Vec<(String, String)>, key: &str| -> Result<String> {
            let pos = meta
                .iter()
                .position(|(k, _)| k == key)
                .ok_or_else(|| bad(format!("missing `{}`", key)))?;
            Ok(meta.remove(pos).1)
        };
        let input_dim = take(&mut meta, "model.input_dim")?
            .parse()
            .map_err(|_| bad("bad model.input_dim".into()))?;
        let hidden_dim = take(&mut meta, "model.hidden_dim")?
            .parse()
            .map_err(|_| bad("bad model.hidden_dim".into()))?;
        let task: Task = take(&mut meta, "model.task")?.parse()?;
        let variant: Variant = take(&mut meta, "model.variant")?.parse()?;
        let config = ModelConfig {
            input_dim,
            hidden_dim,
            task,
        };
        Ok(Self {
            model: SddGat::from_params(config, variant, params)?,
            meta,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}
