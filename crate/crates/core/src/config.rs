//! Run configuration: every module's settings in one TOML document.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detector::DetectorConfig;
use crate::error::{Error, Result};
use crate::evaluation::EvalConfig;
use crate::features::ChannelConfig;
use crate::linear_svm::SvmConfig;
use crate::ssl::{NeighborhoodSpec, SslConfig};
use crate::synth::SynthConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train_frames: usize,
    pub gap: usize,
    pub test_frames: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train_frames: 600,
            gap: 60,
            test_frames: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub channels: ChannelConfig,
    pub svm: SvmConfig,
    pub neighborhood: NeighborhoodSpec,
    pub ssl: SslConfig,
    pub detector: DetectorConfig,
    pub eval: EvalConfig,
    pub synth: SynthConfig,
    pub splits: SplitConfig,
}

impl Default for RunConfig {
    /// Settings sized for 320x240 synthetic sequences: a 24x48 window, a
    /// pyramid that stops once targets would exceed the frame, suppression
    /// at IoU 0.3 so oversized boxes around a target do not survive, and
    /// 16-pixel flow blocks that cover targets moving up to 6 px/frame.
    fn default() -> Self {
        RunConfig {
            channels: ChannelConfig {
                window_width: 24,
                window_height: 48,
                ..Default::default()
            },
            svm: SvmConfig::default(),
            neighborhood: NeighborhoodSpec::default(),
            ssl: SslConfig::default(),
            detector: DetectorConfig {
                min_scale: 0.36,
                nms_iou: 0.3,
                flow_block_size: 16,
                flow_search_radius: 6,
                ..Default::default()
            },
            eval: EvalConfig::default(),
            synth: SynthConfig::default(),
            splits: SplitConfig::default(),
        }
    }
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_table() && v.is_table() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

fn apply_override(doc: &mut toml::Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::InvalidArgument(format!("override {assignment:?} is not key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(Error::InvalidArgument(format!("bad override key {key:?}")));
    }
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let mut node = doc;
    for part in &path[..path.len() - 1] {
        let table = node
            .as_table_mut()
            .ok_or_else(|| Error::InvalidArgument(format!("override {key:?} descends into a value")))?;
        node = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()));
    }
    node.as_table_mut()
        .ok_or_else(|| Error::InvalidArgument(format!("override {key:?} descends into a value")))?
        .insert(path[path.len() - 1].to_string(), value);
    Ok(())
}

impl RunConfig {
    /// Parses a TOML document; keys it leaves out keep their
    /// [`RunConfig::default`] values, unknown keys are rejected.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let user: toml::Value = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut base = toml::Value::try_from(RunConfig::default()).map_err(|e| Error::Config(e.to_string()))?;
        merge(&mut base, user);
        let cfg: RunConfig = base.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// Loads an optional config file, then applies `section.key=value`
    /// overrides in order. Values are read as TOML and fall back to plain
    /// strings.
    pub fn load_with_overrides(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
            None => String::new(),
        };
        Self::from_toml_with_overrides(&text, overrides)
    }

    /// [`RunConfig::from_toml_str`] with `section.key=value` overrides.
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut doc: toml::Value = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        Self::from_toml_str(&toml::to_string(&doc).map_err(|e| Error::Config(e.to_string()))?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.channels.validate()?;
        self.svm.validate()?;
        self.neighborhood.validate()?;
        self.ssl.validate()?;
        self.detector.validate(&self.channels)?;
        self.eval.validate()?;
        self.synth.validate()
    }
}
