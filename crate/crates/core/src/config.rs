//! Run configuration.
//!
//! A [`TrainConfig`] is a flat set of keys, read from a TOML file and
//! overridable per key through `AIST_<KEY>` environment variables
//! (`AIST_HIDDEN_DIM=24`, `AIST_STREAMS=rd`).

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{WindowConfig, FEATURE_COUNT};

pub const ENV_PREFIX: &str = "AIST_";

/// Trend stream identifiers, in fusion order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stream {
    Recent,
    Daily,
    Weekly,
}

impl Stream {
    pub const ALL: [Stream; 3] = [Stream::Recent, Stream::Daily, Stream::Weekly];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Stream::Recent => "recent",
            Stream::Daily => "daily",
            Stream::Weekly => "weekly",
        }
    }

    fn letter(self) -> char {
        match self {
            Stream::Recent => 'r',
            Stream::Daily => 'd',
            Stream::Weekly => 'w',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    /// Feature graph attention.
    Attention,
    /// Raw target-region features appended to the crime embedding.
    Concat,
    /// Crime embedding only.
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recurrence {
    SparseAttentive,
    Plain,
}

/// Per-stream recurrence settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamSettings {
    pub k_att: usize,
    pub k_top: usize,
    /// `None` keeps the full recurrent gradient path.
    pub trunc: Option<usize>,
    pub recurrence: Recurrence,
    /// Adds the provisional state back into the summary.
    pub add_provisional: bool,
    pub uniform: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub category: String,

    pub recent_steps: usize,
    pub daily_steps: usize,
    pub weekly_steps: usize,
    pub embed_dim: usize,
    pub key_dim: usize,
    pub hidden_dim: usize,
    pub attention_dim: usize,

    pub recent_k_att: usize,
    pub recent_k_top: usize,
    pub recent_trunc: usize,
    pub daily_k_att: usize,
    pub daily_k_top: usize,
    pub daily_trunc: usize,
    pub weekly_k_att: usize,
    pub weekly_k_top: usize,
    pub weekly_trunc: usize,

    pub leaky_slope: f64,
    pub spatial_dropout: f64,
    pub feature_dropout: f64,
    pub stream_dropout: f64,

    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Training months counted from the first month of the span.
    pub train_months: u32,
    pub val_fraction: f64,
    /// 0 keeps every window.
    pub max_train_windows: usize,
    pub max_eval_windows: usize,

    pub parent_attention: bool,
    pub feature_mode: FeatureMode,
    /// Subset of `r`, `d`, `w`.
    pub streams: String,
    pub recurrence: Recurrence,
    pub add_provisional: bool,
    pub uniform_attention: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            category: "theft".into(),
            recent_steps: 20,
            daily_steps: 20,
            weekly_steps: 3,
            embed_dim: 8,
            key_dim: 40,
            hidden_dim: 40,
            attention_dim: 30,
            recent_k_att: 5,
            recent_k_top: 5,
            recent_trunc: 5,
            daily_k_att: 5,
            daily_k_top: 5,
            daily_trunc: 5,
            weekly_k_att: 1,
            weekly_k_top: 5,
            weekly_trunc: 1,
            leaky_slope: 0.2,
            spatial_dropout: 0.5,
            feature_dropout: 0.5,
            stream_dropout: 0.2,
            batch_size: 42,
            learning_rate: 0.001,
            epochs: 200,
            seed: 0,
            train_months: 8,
            val_fraction: 0.1,
            max_train_windows: 0,
            max_eval_windows: 0,
            parent_attention: true,
            feature_mode: FeatureMode::Attention,
            streams: "rdw".into(),
            recurrence: Recurrence::SparseAttentive,
            add_provisional: false,
            uniform_attention: false,
        }
    }
}

impl TrainConfig {
    /// Small shapes for quick runs and tests.
    pub fn desk() -> Self {
        Self {
            recent_steps: 8,
            daily_steps: 4,
            weekly_steps: 2,
            embed_dim: 4,
            key_dim: 8,
            hidden_dim: 16,
            attention_dim: 8,
            recent_k_att: 2,
            recent_k_top: 3,
            recent_trunc: 2,
            daily_k_att: 1,
            daily_k_top: 3,
            daily_trunc: 1,
            weekly_k_att: 1,
            weekly_k_top: 3,
            weekly_trunc: 1,
            spatial_dropout: 0.2,
            feature_dropout: 0.2,
            batch_size: 8,
            learning_rate: 0.005,
            epochs: 200,
            max_train_windows: 320,
            max_eval_windows: 400,
            ..Self::default()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "default" => Ok(Self::default()),
            "desk" => Ok(Self::desk()),
            _ => Err(Error::Config(format!("unknown preset {name:?}"))),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Applies every `AIST_<KEY>` override found in `vars`.
    pub fn with_overrides<I, K, V>(&self, vars: I) -> Result<Self>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let mut table: toml::Table = toml::Table::try_from(self).expect("config serializes");
        for (key, raw) in vars {
            let Some(field) = key.as_ref().strip_prefix(ENV_PREFIX) else {
                continue;
            };
            let field = field.to_ascii_lowercase();
            let Some(current) = table.get(&field) else {
                continue;
            };
            let raw = raw.as_ref().trim();
            let value = match current {
                toml::Value::Integer(_) => raw.parse().map(toml::Value::Integer).ok(),
                toml::Value::Float(_) => raw.parse().map(toml::Value::Float).ok(),
                toml::Value::Boolean(_) => raw.parse().map(toml::Value::Boolean).ok(),
                _ => Some(toml::Value::String(raw.to_string())),
            }
            .ok_or_else(|| Error::Config(format!("{}{}: cannot parse {raw:?}", ENV_PREFIX, field.to_uppercase())))?;
            table.insert(field, value);
        }
        let cfg: Self = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_env(&self) -> Result<Self> {
        self.with_overrides(std::env::vars())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        for (name, v) in [
            ("recent_steps", self.recent_steps),
            ("embed_dim", self.embed_dim),
            ("key_dim", self.key_dim),
            ("hidden_dim", self.hidden_dim),
            ("attention_dim", self.attention_dim),
            ("batch_size", self.batch_size),
            ("recent_k_att", self.recent_k_att),
            ("recent_k_top", self.recent_k_top),
            ("daily_k_att", self.daily_k_att),
            ("daily_k_top", self.daily_k_top),
            ("weekly_k_att", self.weekly_k_att),
            ("weekly_k_top", self.weekly_k_top),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        for (name, p) in [
            ("spatial_dropout", self.spatial_dropout),
            ("feature_dropout", self.feature_dropout),
            ("stream_dropout", self.stream_dropout),
        ] {
            if !(0.0..1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1)"));
            }
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and non-negative".into());
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad("val_fraction must lie in [0, 1)".into());
        }
        if self.train_months == 0 || self.train_months > 11 {
            return bad("train_months must lie in 1..=11".into());
        }
        let streams = self.stream_set()?;
        if streams.contains(&Stream::Daily) && self.daily_steps == 0 {
            return bad("daily stream enabled with daily_steps = 0".into());
        }
        if streams.contains(&Stream::Weekly) && self.weekly_steps == 0 {
            return bad("weekly stream enabled with weekly_steps = 0".into());
        }
        if self.add_provisional && self.recurrence == Recurrence::Plain {
            return bad("add_provisional requires the sparse attentive recurrence".into());
        }
        Ok(())
    }

    /// Enabled streams in fusion order.
    pub fn stream_set(&self) -> Result<Vec<Stream>> {
        let mut out = Vec::new();
        for ch in self.streams.chars() {
            let s = Stream::ALL
                .into_iter()
                .find(|s| s.letter() == ch)
                .ok_or_else(|| Error::Config(format!("unknown stream {ch:?} in {:?}", self.streams)))?;
            if out.contains(&s) {
                return Err(Error::Config(format!("stream {ch:?} listed twice")));
            }
            out.push(s);
        }
        if out.is_empty() {
            return Err(Error::Config("at least one stream must be enabled".into()));
        }
        out.sort_by_key(|s| s.index());
        Ok(out)
    }

    pub fn stream_settings(&self, stream: Stream) -> StreamSettings {
        let (k_att, k_top, trunc) = match stream {
            Stream::Recent => (self.recent_k_att, self.recent_k_top, self.recent_trunc),
            Stream::Daily => (self.daily_k_att, self.daily_k_top, self.daily_trunc),
            Stream::Weekly => (self.weekly_k_att, self.weekly_k_top, self.weekly_trunc),
        };
        StreamSettings {
            k_att,
            k_top,
            trunc: (trunc > 0).then_some(trunc),
            recurrence: self.recurrence,
            add_provisional: self.add_provisional,
            uniform: self.uniform_attention,
        }
    }

    pub fn stream_length(&self, stream: Stream) -> usize {
        match stream {
            Stream::Recent => self.recent_steps,
            Stream::Daily => self.daily_steps,
            Stream::Weekly => self.weekly_steps,
        }
    }

    pub fn window_config(&self, steps_per_day: usize) -> WindowConfig {
        let streams = self.stream_set().unwrap_or_default();
        let len = |s: Stream| if streams.contains(&s) { self.stream_length(s) } else { 0 };
        WindowConfig {
            recent: len(Stream::Recent),
            daily: len(Stream::Daily),
            weekly: len(Stream::Weekly),
            steps_per_day,
        }
    }

    pub fn dims(&self) -> Dims {
        let input = match self.feature_mode {
            FeatureMode::Attention => 2 * self.embed_dim,
            FeatureMode::Concat => self.embed_dim + FEATURE_COUNT,
            FeatureMode::Off => self.embed_dim,
        };
        Dims {
            embed: self.embed_dim,
            key: self.key_dim,
            hidden: self.hidden_dim,
            attention: self.attention_dim,
            input,
        }
    }
}

/// Tensor dimensions derived from a config.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    /// `F`, output size of both graph attention layers.
    pub embed: usize,
    /// `d_q = d_k`.
    pub key: usize,
    /// `H`.
    pub hidden: usize,
    /// `A`.
    pub attention: usize,
    /// Width of the spatial embedding fed to the recurrences.
    pub input: usize,
}

/// Named model variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Aist,
    /// Plain graph attention, no feature attention.
    AistG,
    /// Hierarchical graph attention, no feature attention.
    AistH,
    /// Hierarchical graph attention plus raw target features.
    AistF,
    /// Plain graph attention plus feature attention.
    AistFp,
    AistR,
    AistD,
    AistW,
    AistL,
    Uniform,
}

impl Variant {
    pub const ALL: [Variant; 10] = [
        Variant::Aist,
        Variant::AistG,
        Variant::AistH,
        Variant::AistF,
        Variant::AistFp,
        Variant::AistR,
        Variant::AistD,
        Variant::AistW,
        Variant::AistL,
        Variant::Uniform,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Aist => "aist",
            Variant::AistG => "aist_g",
            Variant::AistH => "aist_h",
            Variant::AistF => "aist_f",
            Variant::AistFp => "aist_fp",
            Variant::AistR => "aist_r",
            Variant::AistD => "aist_d",
            Variant::AistW => "aist_w",
            Variant::AistL => "aist_l",
            Variant::Uniform => "uniform",
        }
    }

    /// Config with this variant's switches set, starting from the full
    /// model's switches.
    pub fn apply(self, base: &TrainConfig) -> TrainConfig {
        let mut cfg = TrainConfig {
            parent_attention: true,
            feature_mode: FeatureMode::Attention,
            streams: "rdw".into(),
            recurrence: Recurrence::SparseAttentive,
            add_provisional: false,
            uniform_attention: false,
            ..base.clone()
        };
        match self {
            Variant::Aist => {}
            Variant::AistG => {
                cfg.parent_attention = false;
                cfg.feature_mode = FeatureMode::Off;
            }
            Variant::AistH => cfg.feature_mode = FeatureMode::Off,
            Variant::AistF => cfg.feature_mode = FeatureMode::Concat,
            Variant::AistFp => cfg.parent_attention = false,
            Variant::AistR => cfg.streams = "r".into(),
            Variant::AistD => cfg.streams = "rd".into(),
            Variant::AistW => cfg.streams = "rw".into(),
            Variant::AistL => cfg.recurrence = Recurrence::Plain,
            Variant::Uniform => cfg.uniform_attention = true,
        }
        cfg
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace('-', "_").replace('\'', "p");
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == key)
            .ok_or_else(|| Error::Config(format!("unknown variant {s:?}")))
    }
}
