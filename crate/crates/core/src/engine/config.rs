//! Flat `key = value` experiment configuration.
//!
//! Values are JSON (`0.5`, `true`, `"fedpg"`, `null`); bare words are read
//! as strings. Blank lines and lines starting with `#` are ignored.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::backbone::BackboneKind;
use crate::error::{FedError, Result};
use crate::graph::{PartitionMethod, SparsityMode};
use crate::proto::Normalization;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "fedpg")]
    FedPg,
    #[serde(rename = "fedavg")]
    FedAvg,
    #[serde(rename = "fedproto-naive")]
    FedProtoNaive,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::FedPg => "fedpg",
            Method::FedAvg => "fedavg",
            Method::FedProtoNaive => "fedproto-naive",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackboneChoice {
    PropagatedLinear,
    MessagePassing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SparsityChoice {
    None,
    Feature,
    Edge,
    Label,
}

impl SparsityChoice {
    pub fn mode(&self) -> Option<SparsityMode> {
        match self {
            SparsityChoice::None => None,
            SparsityChoice::Feature => Some(SparsityMode::Feature),
            SparsityChoice::Edge => Some(SparsityMode::Edge),
            SparsityChoice::Label => Some(SparsityMode::Label),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionChoice {
    Louvain,
    Balanced,
}

impl From<PartitionChoice> for PartitionMethod {
    fn from(c: PartitionChoice) -> Self {
        match c {
            PartitionChoice::Louvain => PartitionMethod::Louvain,
            PartitionChoice::Balanced => PartitionMethod::Balanced,
        }
    }
}

/// Every protocol hyperparameter. Field names are the config keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FederationConfig {
    pub method: Method,
    pub num_clients: usize,
    pub rounds: usize,
    pub local_epochs: usize,
    pub server_epochs: usize,
    pub participation_ratio: f64,
    pub epsilon: f64,
    pub delta_s: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub mu: f64,
    pub proto_dim: usize,
    pub hidden_dim: usize,
    pub scorer_hidden: usize,
    pub lr: f64,
    /// Largest global gradient norm of a local step; `null` disables it.
    pub grad_clip: Option<f64>,
    pub server_lr: f64,
    pub confidence_threshold: f64,
    pub noise_dim_fraction: f64,
    pub noise_sigma_rel: f64,
    pub normalization: Normalization,
    pub backbone: BackboneChoice,
    pub layers: usize,
    /// Round-robin over propagated-linear (2 and 3 hops) and message passing.
    pub heterogeneous: bool,
    pub partition: PartitionChoice,
    /// Largest prototype hop; `null` means the smallest backbone depth.
    pub hops: Option<usize>,
    pub uniform_attention: bool,
    /// Replace generated prototypes by the support-weighted aggregate.
    pub gpg_bypass: bool,
    /// Rescale generated prototypes to the norm of the matching uploads.
    pub match_norms: bool,
    pub sparsity: SparsityChoice,
    pub sparsity_keep: f64,
    pub partition_seed: u64,
    pub init_seed: u64,
    pub sampling_seed: u64,
    pub noise_seed: u64,
}

impl Default for FederationConfig {
    fn default() -> Self {
        FederationConfig {
            method: Method::FedPg,
            num_clients: 10,
            rounds: 20,
            local_epochs: 5,
            server_epochs: 100,
            participation_ratio: 1.0,
            epsilon: 0.5,
            delta_s: 0.5,
            alpha: 0.5,
            lambda: 0.8,
            mu: 0.5,
            proto_dim: 64,
            hidden_dim: 64,
            scorer_hidden: 16,
            lr: 0.2,
            grad_clip: None,
            server_lr: 0.01,
            confidence_threshold: 0.8,
            noise_dim_fraction: 0.0,
            noise_sigma_rel: 0.1,
            normalization: Normalization::Softmax,
            backbone: BackboneChoice::PropagatedLinear,
            layers: 2,
            heterogeneous: false,
            partition: PartitionChoice::Louvain,
            hops: None,
            uniform_attention: false,
            gpg_bypass: false,
            match_norms: true,
            sparsity: SparsityChoice::None,
            sparsity_keep: 1.0,
            partition_seed: 0,
            init_seed: 0,
            sampling_seed: 0,
            noise_seed: 0,
        }
    }
}

const HETEROGENEOUS_KINDS: [BackboneKind; 3] = [
    BackboneKind::PropagatedLinear { layers: 2 },
    BackboneKind::PropagatedLinear { layers: 3 },
    BackboneKind::MessagePassing2,
];

fn range(key: &str, value: impl ToString, reason: &str) -> FedError {
    FedError::ConfigRange {
        key: key.into(),
        value: value.to_string(),
        reason: reason.into(),
    }
}

fn parse_value(raw: &str) -> Value {
    let raw = raw.trim();
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

impl FederationConfig {
    /// Defaults, then `text`, then `overrides`, each applied in order.
    pub fn resolve(text: Option<&str>, overrides: &[(String, String)]) -> Result<Self> {
        let mut map = match serde_json::to_value(FederationConfig::default()) {
            Ok(Value::Object(m)) => m,
            _ => unreachable!("config serializes to an object"),
        };
        if let Some(text) = text {
            for (i, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (key, value) = line.split_once('=').ok_or_else(|| {
                    FedError::ConfigSyntax(format!("line {}: expected key = value, got `{line}`", i + 1))
                })?;
                set(&mut map, key.trim(), value)?;
            }
        }
        for (key, value) in overrides {
            set(&mut map, key.trim(), value)?;
        }
        let cfg: FederationConfig =
            serde_json::from_value(Value::Object(map)).map_err(|e| FedError::ConfigSyntax(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path` (missing file is `CONFIG_NOT_FOUND`) and applies overrides.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let text = match path {
            Some(p) => Some(fs::read_to_string(p).map_err(|_| FedError::ConfigNotFound(p.to_path_buf()))?),
            None => None,
        };
        Self::resolve(text.as_deref(), overrides)
    }

    /// Sets every seed to `seed`.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.partition_seed = seed;
        self.init_seed = seed;
        self.sampling_seed = seed;
        self.noise_seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let unit = [
            ("epsilon", self.epsilon),
            ("delta_s", self.delta_s),
            ("alpha", self.alpha),
            ("lambda", self.lambda),
            ("mu", self.mu),
            ("confidence_threshold", self.confidence_threshold),
            ("noise_dim_fraction", self.noise_dim_fraction),
            ("sparsity_keep", self.sparsity_keep),
        ];
        for (key, v) in unit {
            if !(0.0..=1.0).contains(&v) {
                return Err(range(key, v, "must lie in [0, 1]"));
            }
        }
        if !(self.participation_ratio > 0.0 && self.participation_ratio <= 1.0) {
            return Err(range(
                "participation_ratio",
                self.participation_ratio,
                "must lie in (0, 1]",
            ));
        }
        for (key, v) in [
            ("lr", self.lr),
            ("noise_sigma_rel", self.noise_sigma_rel),
            ("server_lr", self.server_lr),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(range(key, v, "must be finite and non-negative"));
            }
        }
        if let Some(c) = self.grad_clip {
            if !(c.is_finite() && c > 0.0) {
                return Err(range("grad_clip", c, "must be finite and positive"));
            }
        }
        for (key, v) in [
            ("num_clients", self.num_clients),
            ("rounds", self.rounds),
            ("local_epochs", self.local_epochs),
            ("proto_dim", self.proto_dim),
            ("hidden_dim", self.hidden_dim),
            ("scorer_hidden", self.scorer_hidden),
        ] {
            if v == 0 {
                return Err(range(key, v, "must be at least 1"));
            }
        }
        if self.layers > 8 {
            return Err(range("layers", self.layers, "at most 8 propagation steps"));
        }
        if let Some(h) = self.hops {
            if h > self.min_layers() {
                return Err(range(
                    "hops",
                    h,
                    &format!("exceeds the smallest backbone depth {}", self.min_layers()),
                ));
            }
        }
        if self.method == Method::FedAvg && self.heterogeneous {
            return Err(range("heterogeneous", true, "fedavg needs one shared architecture"));
        }
        Ok(())
    }

    /// Backbone for client `k`.
    pub fn backbone_for(&self, client: usize) -> BackboneKind {
        if self.heterogeneous {
            return HETEROGENEOUS_KINDS[client % HETEROGENEOUS_KINDS.len()];
        }
        match self.backbone {
            BackboneChoice::PropagatedLinear => BackboneKind::PropagatedLinear { layers: self.layers },
            BackboneChoice::MessagePassing => BackboneKind::MessagePassing2,
        }
    }

    pub fn min_layers(&self) -> usize {
        (0..self.num_clients.min(HETEROGENEOUS_KINDS.len()))
            .map(|k| self.backbone_for(k).layers())
            .min()
            .unwrap_or(0)
    }

    /// Largest prototype hop used by the method.
    pub fn max_hop(&self) -> usize {
        match self.method {
            Method::FedProtoNaive | Method::FedAvg => 0,
            Method::FedPg => self.hops.unwrap_or_else(|| self.min_layers()),
        }
    }

    /// Resolved configuration as pretty JSON with sorted keys.
    pub fn echo(&self) -> String {
        serde_json::to_string_pretty(&serde_json::to_value(self).expect("config serializes"))
            .expect("config serializes")
    }
}

fn set(map: &mut Map<String, Value>, key: &str, raw: &str) -> Result<()> {
    if !map.contains_key(key) {
        return Err(FedError::ConfigUnknownKey(key.into()));
    }
    let value = parse_value(raw);
    map.insert(key.into(), value);
    serde_json::from_value::<FederationConfig>(Value::Object(map.clone()))
        .map(|_| ())
        .map_err(|e| range(key, raw.trim(), &e.to_string()))
}

/// Parses `KEY=VALUE`.
pub fn parse_override(s: &str) -> Result<(String, String)> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.to_string()))
        .ok_or_else(|| FedError::ConfigSyntax(format!("override `{s}` is not KEY=VALUE")))
}
