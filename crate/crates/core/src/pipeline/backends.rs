use super::{PipelineError, RunConfig, TranscriptMode};
use crate::agent::{ChatBackend, HttpChatBackend, MockChatBackend, TranscriptRecorder, TranscriptReplayer};
use crate::embedding::{CachedEmbedder, Embedder, HttpEmbedder, MockEmbedder};
use crate::retry::RetryPolicy;

/// Chat and embedding backends used by a pipeline run.
pub struct Backends {
    pub chat: Box<dyn ChatBackend>,
    pub embedder: Box<dyn Embedder>,
}

fn banner(what: &str, var: &str) {
    eprintln!("************************************************************");
    eprintln!("* {var} is not set: using the deterministic MOCK {what}.");
    eprintln!("* Results reflect the mock, not a language model.");
    eprintln!("************************************************************");
    log::warn!("{var} unset; mock {what} in use");
}

impl Backends {
    pub fn new(chat: Box<dyn ChatBackend>, embedder: Box<dyn Embedder>) -> Self {
        Self { chat, embedder }
    }

    /// Mock chat and embedder, with the config's transcript handling applied.
    pub fn mock(cfg: &RunConfig) -> Result<Self, PipelineError> {
        let chat = with_transcript(cfg, Box::new(MockChatBackend::new()))?;
        Ok(Self::new(
            chat,
            Box::new(MockEmbedder::new(cfg.embedding.dim, cfg.seed)),
        ))
    }

    /// Select backends from the environment: `AAPM_LLM_URL` and
    /// `AAPM_EMB_URL` pick HTTP endpoints, otherwise the mocks are used with a
    /// warning banner. A replay transcript overrides the chat backend.
    pub fn from_env(cfg: &RunConfig) -> Result<Self, PipelineError> {
        let retry = RetryPolicy::default();
        let replaying = matches!(&cfg.transcript, Some(t) if t.mode == TranscriptMode::Replay);
        let chat: Box<dyn ChatBackend> = if replaying {
            Box::new(MockChatBackend::new())
        } else {
            match HttpChatBackend::from_env(retry) {
                Some(b) => Box::new(b.map_err(|e| PipelineError::Config(e.to_string()))?),
                None => {
                    banner("chat backend", "AAPM_LLM_URL");
                    Box::new(MockChatBackend::new())
                }
            }
        };
        let chat = with_transcript(cfg, chat)?;

        let embedder: Box<dyn Embedder> = match HttpEmbedder::from_env(cfg.embedding.model.clone(), retry) {
            Some(e) => {
                let e = e.map_err(|e| PipelineError::Config(e.to_string()))?;
                if e.dim() != cfg.embedding.dim {
                    return Err(PipelineError::Config(format!(
                        "embedding endpoint returns dimension {}, config has embedding.dim = {}",
                        e.dim(),
                        cfg.embedding.dim
                    )));
                }
                std::fs::create_dir_all(&cfg.paths.cache)
                    .map_err(|e| PipelineError::Config(format!("{}: {e}", cfg.paths.cache.display())))?;
                let path = cfg.paths.cache.join("embeddings.jsonl");
                Box::new(CachedEmbedder::open(e, &path).map_err(|e| PipelineError::Config(e.to_string()))?)
            }
            None => {
                banner("embedder", "AAPM_EMB_URL");
                Box::new(MockEmbedder::new(cfg.embedding.dim, cfg.seed))
            }
        };
        Ok(Self::new(chat, embedder))
    }

    pub fn describe(&self) -> String {
        format!("chat={} embedder={}", self.chat.describe(), self.embedder.fingerprint())
    }
}

fn with_transcript(cfg: &RunConfig, chat: Box<dyn ChatBackend>) -> Result<Box<dyn ChatBackend>, PipelineError> {
    let Some(t) = &cfg.transcript else {
        return Ok(chat);
    };
    let err = |e: crate::agent::ChatError| PipelineError::Config(e.to_string());
    Ok(match t.mode {
        TranscriptMode::Replay => Box::new(TranscriptReplayer::open(&t.path).map_err(err)?),
        TranscriptMode::Record => {
            if let Some(dir) = t.path.parent() {
                std::fs::create_dir_all(dir).map_err(|e| PipelineError::Config(format!("{}: {e}", dir.display())))?;
            }
            Box::new(TranscriptRecorder::create(chat, &t.path).map_err(err)?)
        }
    })
}
