use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

use super::PipelineError;
use crate::agent::AgentConfig;
use crate::data::LoadOptions;
use crate::embedding::SmootherConfig;
use crate::evaluation::EvalConfig;
use crate::memory::ChunkingConfig;
use crate::portfolio::PortfolioConfig;
use crate::pricing_net::NetworkConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    /// Directory holding `returns.csv`, `factors.csv`, `caps.csv`, `news.jsonl`.
    pub data: PathBuf,
    /// Knowledge-base text files; `<data>/corpus` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus: Option<PathBuf>,
    #[serde(default = "default_cache")]
    pub cache: PathBuf,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// Prompt template root containing `<version>/` directories.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompts: Option<PathBuf>,
    /// Replaces the builtin initial macro summary.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_note: Option<PathBuf>,
}

fn default_cache() -> PathBuf {
    PathBuf::from("cache")
}

fn default_output() -> PathBuf {
    PathBuf::from("output")
}

impl Paths {
    pub fn corpus_dir(&self) -> PathBuf {
        self.corpus.clone().unwrap_or_else(|| self.data.join("corpus"))
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TranscriptMode {
    Record,
    Replay,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranscriptConfig {
    pub mode: TranscriptMode,
    pub path: PathBuf,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub load: LoadOptions,
    /// Replace factor values by their per-date cross-sectional rank in [-1, 1].
    pub rank_standardize: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train_months: u32,
    pub val_months: u32,
    pub test_months: u32,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train_months: 9,
            val_months: 3,
            test_months: 12,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    /// Vector width; remote backends must match it.
    pub dim: usize,
    /// Model name sent to a remote endpoint.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    pub chunking: ChunkingConfig,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            model: None,
            chunking: ChunkingConfig::default(),
        }
    }
}

/// Component switches. They override the matching agent and network keys.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablation {
    /// Feed smoothed report embeddings to the network; off uses the placeholder.
    pub use_news: bool,
    /// Retrieve from memory during analysis.
    pub use_memory: bool,
    pub use_asset_emb: bool,
    pub use_factors: bool,
    pub pretrain: bool,
    /// Iterative report refinement over `n_rounds`.
    pub refine: bool,
    pub notes: bool,
}

impl Default for Ablation {
    fn default() -> Self {
        Self::preset("full").expect("known preset")
    }
}

pub const ABLATION_PRESETS: [&str; 10] = [
    "naive",
    "rag",
    "emb",
    "memory",
    "factors",
    "hybrid",
    "refine",
    "notes",
    "full",
    "factors_only",
];

impl Ablation {
    /// Named points on the ablation ladder.
    pub fn preset(name: &str) -> Option<Self> {
        let base = Ablation {
            use_news: true,
            use_memory: false,
            use_asset_emb: false,
            use_factors: false,
            pretrain: false,
            refine: false,
            notes: false,
        };
        let memory = Ablation {
            use_memory: true,
            use_asset_emb: true,
            ..base.clone()
        };
        let hybrid = Ablation {
            use_factors: true,
            pretrain: true,
            ..memory.clone()
        };
        Some(match name {
            "naive" => base,
            "rag" => Ablation {
                use_memory: true,
                ..base
            },
            "emb" => Ablation {
                use_asset_emb: true,
                ..base
            },
            "memory" => memory,
            "factors" => Ablation {
                use_factors: true,
                ..memory
            },
            "hybrid" => hybrid,
            "refine" => Ablation { refine: true, ..hybrid },
            "notes" => Ablation { notes: true, ..hybrid },
            "full" => Ablation {
                refine: true,
                notes: true,
                ..hybrid
            },
            "factors_only" => Ablation {
                use_news: false,
                ..hybrid
            },
            _ => return None,
        })
    }
}

fn default_seed() -> u64 {
    7
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds network initialization, shuffling, dropout and the mock embedder.
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub paths: Paths,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript: Option<TranscriptConfig>,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub embedding: EmbeddingConfig,
    #[serde(default)]
    pub smoother: SmootherConfig,
    #[serde(default)]
    pub agent: AgentConfig,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub portfolio: PortfolioConfig,
    #[serde(default)]
    pub evaluation: EvalConfig,
    #[serde(default)]
    pub ablation: Ablation,
}

impl RunConfig {
    pub fn new(data: impl Into<PathBuf>) -> Self {
        Self {
            seed: default_seed(),
            paths: Paths {
                data: data.into(),
                corpus: None,
                cache: default_cache(),
                output: default_output(),
                prompts: None,
                initial_note: None,
            },
            transcript: None,
            data: DataConfig::default(),
            split: SplitConfig::default(),
            embedding: EmbeddingConfig::default(),
            smoother: SmootherConfig::default(),
            agent: AgentConfig::default(),
            network: NetworkConfig::default(),
            portfolio: PortfolioConfig::default(),
            evaluation: EvalConfig::default(),
            ablation: Ablation::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    /// Parse a config file; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.rebase(base);
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.paths.data);
        fix(&mut self.paths.cache);
        fix(&mut self.paths.output);
        for p in [
            &mut self.paths.corpus,
            &mut self.paths.prompts,
            &mut self.paths.initial_note,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        if let Some(t) = &mut self.transcript {
            fix(&mut t.path);
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes to TOML")
    }

    /// Apply ablation switches and the run seed onto the component configs.
    pub fn effective(&self) -> Self {
        let mut c = self.clone();
        let a = &self.ablation;
        if !a.use_memory {
            c.agent.top_k = 0;
        }
        c.agent.refine_enabled = a.refine;
        c.agent.notes_enabled = a.notes;
        c.network.asset_embedding = a.use_asset_emb;
        c.network.use_factors = a.use_factors;
        c.network.seed = self.seed;
        c.network.d_emb = self.embedding.dim;
        c
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let c = self.effective();
        c.agent.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        c.network.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        c.smoother
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        if c.embedding.dim == 0 {
            return Err(PipelineError::Config("embedding.dim must be positive".into()));
        }
        if c.embedding.chunking.max_chars == 0 || c.embedding.chunking.overlap_chars >= c.embedding.chunking.max_chars {
            return Err(PipelineError::Config(
                "chunking needs 0 <= overlap_chars < max_chars".into(),
            ));
        }
        if c.split.train_months == 0 || c.split.val_months == 0 || c.split.test_months == 0 {
            return Err(PipelineError::Config("split months must be positive".into()));
        }
        if c.portfolio.tp_window < 2 {
            return Err(PipelineError::Config("portfolio.tp_window must be at least 2".into()));
        }
        if c.evaluation.periods_per_year == 0 {
            return Err(PipelineError::Config(
                "evaluation.periods_per_year must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Content hash of the effective config, excluding the output root.
    pub fn run_id(&self) -> String {
        self.run_id_with("")
    }

    /// Run id that also covers `salt`, such as a backend description.
    pub fn run_id_with(&self, salt: &str) -> String {
        let mut c = self.effective();
        c.paths.output = PathBuf::new();
        let json = serde_json::to_string(&c).expect("config serializes");
        let mut h = Sha256::new();
        h.update(json.as_bytes());
        if !salt.is_empty() {
            h.update([0u8]);
            h.update(salt.as_bytes());
        }
        hex::encode(&h.finalize()[..6])
    }

    /// Set a dotted key such as `network.learning_rate` from TOML-ish text.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), PipelineError> {
        let parsed = parse_scalar(value);
        self.set_json(key, parsed)
    }

    pub fn set_json(&mut self, key: &str, value: serde_json::Value) -> Result<(), PipelineError> {
        let mut doc = serde_json::to_value(&*self).expect("config serializes");
        let slot =
            lookup_mut(&mut doc, key).ok_or_else(|| PipelineError::Config(format!("unknown config key `{key}`")))?;
        *slot = coerce(slot, value);
        *self = serde_json::from_value(doc).map_err(|e| PipelineError::Config(format!("{key}: {e}")))?;
        Ok(())
    }

    /// Whether a dotted key names a value present in the default layout.
    pub fn has_key(key: &str) -> bool {
        let mut doc = serde_json::to_value(Self::new("data")).expect("config serializes");
        lookup_mut(&mut doc, key).is_some()
    }
}

fn lookup_mut<'a>(doc: &'a mut serde_json::Value, key: &str) -> Option<&'a mut serde_json::Value> {
    let mut cur = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = cur.as_object_mut()?;
        if !obj.contains_key(*part) {
            // Optional leaves are omitted when unset; allow them at the end.
            if i + 1 == parts.len() && OPTIONAL_LEAVES.contains(&key) {
                obj.insert(part.to_string(), serde_json::Value::Null);
            } else {
                return None;
            }
        }
        cur = obj.get_mut(*part)?;
    }
    Some(cur)
}

const OPTIONAL_LEAVES: [&str; 4] = ["paths.corpus", "paths.prompts", "paths.initial_note", "embedding.model"];

/// Keep integers integral when the slot already holds an integer.
fn coerce(slot: &serde_json::Value, value: serde_json::Value) -> serde_json::Value {
    match (slot, &value) {
        (serde_json::Value::Number(old), serde_json::Value::Number(new))
            if (old.is_u64() || old.is_i64()) && new.is_f64() =>
        {
            let v = new.as_f64().unwrap_or_default().round();
            serde_json::json!(v as i64)
        }
        _ => value,
    }
}

fn parse_scalar(text: &str) -> serde_json::Value {
    let t = text.trim();
    if let Ok(v) = t.parse::<i64>() {
        return serde_json::json!(v);
    }
    if let Ok(v) = t.parse::<f64>() {
        return serde_json::json!(v);
    }
    match t {
        "true" => return serde_json::Value::Bool(true),
        "false" => return serde_json::Value::Bool(false),
        _ => {}
    }
    if t.starts_with('[') {
        if let Ok(v) = serde_json::from_str(t) {
            return v;
        }
    }
    serde_json::Value::String(t.trim_matches('"').to_string())
}
