//! Stage orchestration: ingest, agent run, embedding, training, prediction,
//! portfolios, evaluation and reporting under `output/<run-id>/<stage>/`.

mod backends;
mod config;
mod stages;
mod sweep;

use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

pub use backends::Backends;
pub use config::{
    Ablation, DataConfig, EmbeddingConfig, Paths, RunConfig, SplitConfig, TranscriptConfig, TranscriptMode,
    ABLATION_PRESETS,
};
pub use stages::{AgentSummary, ReportEmbedding, SplitInfo, Validation};
pub use sweep::{run_sweep, Distribution, GridSpec, Objective, SweepOutcome, SweepSpec, TrialResult};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("stage `{stage}` needs the outputs of `{missing}`; run `aapm {missing}` first")]
    Dependency { stage: Stage, missing: Stage },
    #[error("{stage} failed: {msg}")]
    Runtime { stage: String, msg: String },
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Dependency { .. } => 3,
            PipelineError::Runtime { .. } => 4,
        }
    }

    pub fn runtime(stage: impl fmt::Display, e: impl fmt::Display) -> Self {
        PipelineError::Runtime {
            stage: stage.to_string(),
            msg: e.to_string(),
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Ingest,
    AgentRun,
    Embed,
    Pretrain,
    Train,
    Predict,
    Portfolio,
    Evaluate,
    Report,
}

impl Stage {
    /// Topological order.
    pub const ALL: [Stage; 9] = [
        Stage::Ingest,
        Stage::AgentRun,
        Stage::Embed,
        Stage::Pretrain,
        Stage::Train,
        Stage::Predict,
        Stage::Portfolio,
        Stage::Evaluate,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::AgentRun => "agent-run",
            Stage::Embed => "embed",
            Stage::Pretrain => "pretrain",
            Stage::Train => "train",
            Stage::Predict => "predict",
            Stage::Portfolio => "portfolio",
            Stage::Evaluate => "evaluate",
            Stage::Report => "report",
        }
    }

    pub fn deps(self) -> &'static [Stage] {
        match self {
            Stage::Ingest => &[],
            Stage::AgentRun => &[Stage::Ingest],
            Stage::Embed => &[Stage::AgentRun],
            Stage::Pretrain => &[Stage::Ingest],
            Stage::Train => &[Stage::Embed, Stage::Pretrain],
            Stage::Predict => &[Stage::Train],
            Stage::Portfolio => &[Stage::Predict],
            Stage::Evaluate => &[Stage::Portfolio],
            Stage::Report => &[Stage::Evaluate],
        }
    }

    /// First direct prerequisite not yet completed.
    pub fn check_ready(self, done: impl Fn(Stage) -> bool) -> Result<(), PipelineError> {
        match self.deps().iter().find(|d| !done(**d)) {
            Some(&missing) => Err(PipelineError::Dependency { stage: self, missing }),
            None => Ok(()),
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for Stage {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| PipelineError::Config(format!("unknown stage `{s}`")))
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum StageStatus {
    Ran,
    /// Outputs already present and `force` not set.
    Cached,
}

#[derive(Serialize, Deserialize)]
struct DoneMarker {
    stage: Stage,
    run_id: String,
}

/// One run of the pipeline for a fixed config.
pub struct Pipeline {
    config: RunConfig,
    run_id: String,
    run_dir: PathBuf,
    backends: Backends,
    force: bool,
}

impl Pipeline {
    pub fn new(config: RunConfig, backends: Backends) -> Result<Self, PipelineError> {
        config.validate()?;
        let config = config.effective();
        let run_id = config.run_id_with(&backends.describe());
        let run_dir = config.paths.output.join(&run_id);
        Ok(Self {
            config,
            run_id,
            run_dir,
            backends,
            force: false,
        })
    }

    pub fn with_force(mut self, force: bool) -> Self {
        self.force = force;
        self
    }

    /// Effective config: ablation switches applied.
    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn run_id(&self) -> &str {
        &self.run_id
    }

    pub fn run_dir(&self) -> &Path {
        &self.run_dir
    }

    pub fn backends(&self) -> &Backends {
        &self.backends
    }

    pub fn stage_dir(&self, stage: Stage) -> PathBuf {
        self.run_dir.join(stage.name())
    }

    pub fn is_done(&self, stage: Stage) -> bool {
        let path = self.stage_dir(stage).join("done.json");
        std::fs::read_to_string(path)
            .ok()
            .and_then(|t| serde_json::from_str::<DoneMarker>(&t).ok())
            .is_some_and(|m| m.stage == stage && m.run_id == self.run_id)
    }

    /// Run one stage whose prerequisites are complete.
    pub fn run_stage(&self, stage: Stage) -> Result<StageStatus, PipelineError> {
        stage.check_ready(|s| self.is_done(s))?;
        if self.is_done(stage) && !self.force {
            log::info!("{stage}: outputs present, skipping");
            return Ok(StageStatus::Cached);
        }
        let dir = self.stage_dir(stage);
        let io = |e: std::io::Error| PipelineError::runtime(stage, format!("{}: {e}", dir.display()));
        if dir.exists() {
            std::fs::remove_dir_all(&dir).map_err(io)?;
        }
        std::fs::create_dir_all(&dir).map_err(io)?;
        let toml = self.config.to_toml();
        std::fs::write(self.run_dir.join("config.toml"), &toml).map_err(io)?;
        std::fs::write(dir.join("config.toml"), &toml).map_err(io)?;
        log::info!("{stage}: running in {}", dir.display());
        match stage {
            Stage::Ingest => self.ingest(&dir),
            Stage::AgentRun => self.agent_run(&dir),
            Stage::Embed => self.embed(&dir),
            Stage::Pretrain => self.pretrain(&dir),
            Stage::Train => self.train(&dir),
            Stage::Predict => self.predict(&dir),
            Stage::Portfolio => self.portfolio(&dir),
            Stage::Evaluate => self.evaluate(&dir),
            Stage::Report => self.report(&dir),
        }?;
        let marker = DoneMarker {
            stage,
            run_id: self.run_id.clone(),
        };
        std::fs::write(
            dir.join("done.json"),
            serde_json::to_string_pretty(&marker).expect("marker serializes"),
        )
        .map_err(io)?;
        Ok(StageStatus::Ran)
    }

    /// Run `target` and everything it depends on, in order.
    pub fn run_through(&self, target: Stage) -> Result<Vec<(Stage, StageStatus)>, PipelineError> {
        let mut needed = vec![target];
        let mut i = 0;
        while i < needed.len() {
            for d in needed[i].deps() {
                if !needed.contains(d) {
                    needed.push(*d);
                }
            }
            i += 1;
        }
        let mut out = Vec::new();
        for stage in Stage::ALL.into_iter().filter(|s| needed.contains(s)) {
            out.push((stage, self.run_stage(stage)?));
        }
        Ok(out)
    }

    pub fn run_all(&self) -> Result<Vec<(Stage, StageStatus)>, PipelineError> {
        self.run_through(Stage::Report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    #[test]
    fn graph_is_acyclic_and_topologically_listed() {
        for (i, s) in Stage::ALL.iter().enumerate() {
            for d in s.deps() {
                let j = Stage::ALL.iter().position(|x| x == d).unwrap();
                assert!(j < i, "{s} depends on later stage {d}");
            }
        }
    }

    #[test]
    fn names_round_trip() {
        for s in Stage::ALL {
            assert_eq!(s.name().parse::<Stage>().unwrap(), s);
        }
        assert!("sweep".parse::<Stage>().is_err());
    }

    #[test]
    fn train_before_embed_names_embed() {
        let done = |s: Stage| matches!(s, Stage::Ingest | Stage::AgentRun | Stage::Pretrain);
        match Stage::Train.check_ready(done) {
            Err(
                e @ PipelineError::Dependency {
                    missing: Stage::Embed, ..
                },
            ) => {
                assert_eq!(e.exit_code(), 3);
                assert!(e.to_string().contains("aapm embed"));
            }
            other => panic!("{other:?}"),
        }
    }

    proptest! {
        #[test]
        fn random_orders_respect_dependencies(order in Just(Stage::ALL.to_vec()).prop_shuffle()) {
            let mut done = HashSet::new();
            for s in order {
                let ready = s.deps().iter().all(|d| done.contains(d));
                let res = s.check_ready(|x| done.contains(&x));
                prop_assert_eq!(res.is_ok(), ready);
                if ready {
                    done.insert(s);
                }
            }
            // rerunning in topological order always completes
            for s in Stage::ALL {
                prop_assert!(s.check_ready(|x| done.contains(&x)).is_ok());
                done.insert(s);
            }
        }
    }
}
