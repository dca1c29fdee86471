//! News analysis loop: refine, skip-filter, iterative report refinement
//! with memory retrieval, and note updates.

mod backend;
mod prompts;
mod report;

pub use backend::{
    CallKind, ChatBackend, ChatError, ChatMessage, ChatRequest, ChatSettings, FailingBackend, HttpChatBackend,
    MockChatBackend, TranscriptEntry, TranscriptRecorder, TranscriptReplayer, MOCK_SKIP_MARKER,
};
pub use prompts::{render, PromptSet};
pub use report::{AnalysisReport, DayOutcome, FinalReport, Note};

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};

use crate::data::NewsItem;
use crate::embedding::{EmbedError, Embedder};
use crate::memory::{MemoryError, MemoryStore};

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("prompt template: {0}")]
    Prompt(String),
    #[error(transparent)]
    Chat(#[from] ChatError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub n_rounds: usize,
    pub top_k: usize,
    pub skip_enabled: bool,
    pub refine_enabled: bool,
    pub notes_enabled: bool,
    /// Let later rounds retrieve items already seen in earlier rounds.
    pub allow_repeat_retrieval: bool,
    pub prompt_version: String,
    pub category_blocklist: Vec<String>,
    pub chat: ChatSettings,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            n_rounds: 3,
            top_k: 5,
            skip_enabled: true,
            refine_enabled: true,
            notes_enabled: true,
            allow_repeat_retrieval: false,
            prompt_version: "v1".into(),
            category_blocklist: vec!["travel".into(), "lifestyle".into(), "puzzles".into()],
            chat: ChatSettings::default(),
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        if self.n_rounds == 0 {
            return Err(AgentError::InvalidArgument("n_rounds must be at least 1".into()));
        }
        if !(0.0..=2.0).contains(&self.chat.temperature) {
            return Err(AgentError::InvalidArgument(format!(
                "temperature {} outside [0, 2]",
                self.chat.temperature
            )));
        }
        if self.chat.max_tokens == 0 {
            return Err(AgentError::InvalidArgument("max_tokens must be positive".into()));
        }
        Ok(())
    }
}

/// Sequential state threaded through the corpus.
pub struct AgentState {
    pub note: Note,
    pub store: MemoryStore,
}

enum Reply {
    Skip,
    Report(String),
    Malformed(String),
}

#[derive(Deserialize)]
struct ActionReply {
    action: String,
    #[serde(default)]
    text: Option<String>,
}

fn strip_fence(s: &str) -> &str {
    let t = s.trim();
    let Some(inner) = t.strip_prefix("```") else {
        return t;
    };
    let inner = inner.strip_prefix("json").unwrap_or(inner);
    inner.strip_suffix("```").unwrap_or(inner).trim()
}

fn parse_reply(raw: &str) -> Reply {
    match serde_json::from_str::<ActionReply>(strip_fence(raw)) {
        Ok(r) if r.action == "skip" => Reply::Skip,
        Ok(ActionReply {
            action,
            text: Some(text),
        }) if action == "report" => Reply::Report(text),
        _ => Reply::Malformed(raw.trim().to_string()),
    }
}

fn raw_news(item: &NewsItem) -> String {
    format!("{}\n\n{}", item.title, item.body)
}

fn format_retrieved(items: &[(String, String)]) -> String {
    if items.is_empty() {
        return "(no relevant items found)".into();
    }
    items
        .iter()
        .map(|(id, text)| format!("[{id}]\n{text}"))
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Drives the analysis loop against a chat backend and an embedder.
pub struct Agent<'a> {
    pub config: AgentConfig,
    pub prompts: PromptSet,
    backend: &'a dyn ChatBackend,
    embedder: &'a dyn Embedder,
}

impl<'a> Agent<'a> {
    pub fn new(
        config: AgentConfig,
        prompts: PromptSet,
        backend: &'a dyn ChatBackend,
        embedder: &'a dyn Embedder,
    ) -> Result<Self, AgentError> {
        config.validate()?;
        Ok(Self {
            config,
            prompts,
            backend,
            embedder,
        })
    }

    /// Note seeded with the builtin macro summary.
    pub fn initial_note(&self, as_of: NaiveDateTime) -> Note {
        Note::new(self.prompts.initial_macro.clone(), as_of)
    }

    fn request(&self, kind: CallKind, messages: Vec<ChatMessage>, context: BTreeMap<String, String>) -> ChatRequest {
        ChatRequest {
            kind,
            settings: self.config.chat.clone(),
            messages,
            context,
        }
    }

    fn call(&self, req: &ChatRequest) -> Result<String, ChatError> {
        self.backend.complete(req)
    }

    pub fn refine_news(&self, item: &NewsItem) -> Result<String, AgentError> {
        if item.body.trim().is_empty() {
            return Err(AgentError::InvalidArgument(format!(
                "news item {} has an empty body",
                item.id
            )));
        }
        let prompt = render(&self.prompts.refine_news, &[("input", &raw_news(item))]);
        let context = BTreeMap::from([
            ("title".to_string(), item.title.clone()),
            ("body".to_string(), item.body.clone()),
        ]);
        let req = self.request(CallKind::RefineNews, vec![ChatMessage::user(prompt)], context);
        Ok(self.call(&req)?.trim().to_string())
    }

    fn note_block(&self, note: &Note) -> String {
        if self.config.notes_enabled {
            render(&self.prompts.note_section, &[("macro", &note.text)])
        } else {
            String::new()
        }
    }

    fn retrieve(
        &self,
        text: &str,
        store: &MemoryStore,
        as_of: NaiveDateTime,
        seen: &HashSet<String>,
    ) -> Result<Vec<(String, String)>, AgentError> {
        if self.config.top_k == 0 {
            return Ok(Vec::new());
        }
        let query = self.embedder.embed(text)?;
        let empty = HashSet::new();
        let exclude = if self.config.allow_repeat_retrieval {
            &empty
        } else {
            seen
        };
        Ok(store
            .retrieve(&query, self.config.top_k, as_of, exclude)?
            .into_iter()
            .map(|r| (r.item.id.clone(), r.item.text.clone()))
            .collect())
    }

    /// Run round 0 and the refinement rounds for an already-refined item.
    ///
    /// Backend or embedding failures never propagate: the report comes back
    /// with `failed` set and `round` at the last completed round.
    pub fn analyze(
        &self,
        item: &NewsItem,
        refined: &str,
        note: &Note,
        store: &MemoryStore,
    ) -> Result<AnalysisReport, AgentError> {
        if note.as_of > item.timestamp {
            return Err(AgentError::InvalidArgument(format!(
                "note as of {} is newer than news item {}",
                note.as_of, item.id
            )));
        }
        let mut report = AnalysisReport {
            news_id: item.id.clone(),
            timestamp: item.timestamp,
            round: 0,
            text: String::new(),
            refined: refined.to_string(),
            retrieved_ids: Vec::new(),
            skipped: false,
            failed: None,
        };
        if !self.config.refine_enabled {
            if let Err(e) = self.analyze_single(item, note, store, &mut report) {
                report.failed = Some(e.to_string());
            }
            return Ok(report);
        }
        if let Err(e) = self.analyze_rounds(item, refined, note, store, &mut report) {
            report.failed = Some(e.to_string());
        }
        Ok(report)
    }

    fn analyze_rounds(
        &self,
        item: &NewsItem,
        refined: &str,
        note: &Note,
        store: &MemoryStore,
        report: &mut AnalysisReport,
    ) -> Result<(), AgentError> {
        let inputs = format!("{refined}{}", self.note_block(note));
        let open = format!(
            "{}{}",
            render(&self.prompts.analysis_open, &[("inputs", &inputs)]),
            self.prompts.reply_format
        );
        let mut messages = vec![ChatMessage::user(open)];
        let context = BTreeMap::from([("refined".to_string(), refined.to_string())]);
        let raw = self.call(&self.request(CallKind::AnalysisOpen, messages.clone(), context))?;
        report.text = match parse_reply(&raw) {
            Reply::Skip if self.config.skip_enabled => {
                report.skipped = true;
                return Ok(());
            }
            Reply::Skip => {
                log::warn!("{}: skip requested with skipping disabled", item.id);
                refined.to_string()
            }
            Reply::Report(text) => text,
            Reply::Malformed(text) => {
                log::warn!("{}: reply is not a valid action object; kept as report", item.id);
                text
            }
        };
        messages.push(ChatMessage::assistant(raw));

        let mut seen = HashSet::new();
        let n = self.config.n_rounds;
        for round in 1..=n {
            let hits = self.retrieve(&report.text, store, item.timestamp, &seen)?;
            seen.extend(hits.iter().map(|(id, _)| id.clone()));
            let template = if round == n {
                &self.prompts.analysis_finish
            } else {
                &self.prompts.analysis_continue
            };
            messages.push(ChatMessage::user(render(
                template,
                &[("inputs", &format_retrieved(&hits))],
            )));
            let context = BTreeMap::from([
                ("report".to_string(), report.text.clone()),
                ("round".to_string(), round.to_string()),
                ("n_retrieved".to_string(), hits.len().to_string()),
            ]);
            let raw = self.call(&self.request(CallKind::AnalysisRound, messages.clone(), context))?;
            report.text = match parse_reply(&raw) {
                Reply::Report(text) => text,
                Reply::Skip => {
                    log::warn!("{}: skip after round 0 ignored", item.id);
                    return Err(AgentError::Chat(ChatError::Protocol(format!(
                        "skip action in round {round}"
                    ))));
                }
                Reply::Malformed(text) => text,
            };
            report.retrieved_ids.push(hits.into_iter().map(|(id, _)| id).collect());
            report.round = round;
            messages.push(ChatMessage::assistant(raw));
        }
        Ok(())
    }

    /// One generation call on the raw news, optionally with retrieval.
    fn analyze_single(
        &self,
        item: &NewsItem,
        note: &Note,
        store: &MemoryStore,
        report: &mut AnalysisReport,
    ) -> Result<(), AgentError> {
        let news = raw_news(item);
        let hits = self.retrieve(&news, store, item.timestamp, &HashSet::new())?;
        let mut inputs = news.clone();
        if self.config.top_k > 0 {
            inputs.push_str("\n\nRelevant information:\n\n");
            inputs.push_str(&format_retrieved(&hits));
        }
        inputs.push_str(&self.note_block(note));
        let mut prompt = render(&self.prompts.analysis_single, &[("news", &inputs)]);
        if self.config.skip_enabled {
            prompt.push_str(&self.prompts.reply_format);
        }
        let context = BTreeMap::from([("refined".to_string(), news)]);
        let raw = self.call(&self.request(CallKind::AnalysisOpen, vec![ChatMessage::user(prompt)], context))?;
        match parse_reply(&raw) {
            Reply::Skip if self.config.skip_enabled => {
                report.skipped = true;
                return Ok(());
            }
            Reply::Skip => return Err(AgentError::Chat(ChatError::Protocol("unexpected skip".into()))),
            Reply::Report(text) | Reply::Malformed(text) => report.text = text,
        }
        if self.config.top_k > 0 {
            report.retrieved_ids.push(hits.into_iter().map(|(id, _)| id).collect());
        }
        report.round = self.config.n_rounds;
        Ok(())
    }

    /// Fold a final report into the note. The input note is left untouched.
    pub fn update_note(&self, note: &Note, item: &NewsItem, report: &AnalysisReport) -> Result<Note, AgentError> {
        if !report.is_final() {
            return Err(AgentError::InvalidArgument(format!(
                "report for {} is not final",
                report.news_id
            )));
        }
        if item.timestamp < note.as_of {
            return Err(AgentError::InvalidArgument(format!(
                "news item {} predates the note",
                item.id
            )));
        }
        let news = format!("News: {}\n\nAnalysis report: {}", report.refined, report.text);
        let date = note.as_of.format("%Y-%m-%d").to_string();
        let prompt = render(
            &self.prompts.update_note,
            &[("date", &date), ("macro", &note.text), ("news", &news)],
        );
        let context = BTreeMap::from([
            ("macro".to_string(), note.text.clone()),
            ("news_id".to_string(), report.news_id.clone()),
            ("report".to_string(), report.text.clone()),
        ]);
        let text = self.call(&self.request(CallKind::UpdateNote, vec![ChatMessage::user(prompt)], context))?;
        Ok(Note::new(text.trim(), item.timestamp))
    }

    /// Process one day's news in timestamp order, updating note and memory.
    pub fn run_day(&self, items: &[NewsItem], state: &mut AgentState) -> Result<DayOutcome, AgentError> {
        if items.windows(2).any(|w| w[0].timestamp > w[1].timestamp) {
            return Err(AgentError::InvalidArgument(
                "news items must be sorted by timestamp".into(),
            ));
        }
        let mut out = DayOutcome::default();
        for item in items {
            let refined = if self.config.refine_enabled {
                match self.refine_news(item) {
                    Ok(r) => r,
                    Err(e @ AgentError::InvalidArgument(_)) => return Err(e),
                    Err(e) => {
                        log::warn!("{}: refinement failed: {e}", item.id);
                        out.failed.push(AnalysisReport {
                            news_id: item.id.clone(),
                            timestamp: item.timestamp,
                            round: 0,
                            text: String::new(),
                            refined: String::new(),
                            retrieved_ids: Vec::new(),
                            skipped: false,
                            failed: Some(e.to_string()),
                        });
                        continue;
                    }
                }
            } else {
                raw_news(item)
            };
            let mut report = self.analyze(item, &refined, &state.note, &state.store)?;
            if report.skipped {
                out.skipped.push(report);
                continue;
            }
            if report.failed.is_some() {
                log::warn!(
                    "{}: analysis failed after round {}: {}",
                    item.id,
                    report.round,
                    report.failed.as_deref().unwrap_or_default()
                );
                out.failed.push(report);
                continue;
            }
            let embedding = match self.embedder.embed(&report.text) {
                Ok(e) => e,
                Err(e) => {
                    log::warn!("{}: report embedding failed: {e}", item.id);
                    report.failed = Some(e.to_string());
                    out.failed.push(report);
                    continue;
                }
            };
            state.store.insert_report(&report, embedding.clone())?;
            if self.config.notes_enabled {
                match self.update_note(&state.note, item, &report) {
                    Ok(note) => {
                        state.note = note;
                        out.note_updates += 1;
                    }
                    Err(e) => {
                        log::warn!("{}: note update failed: {e}", item.id);
                        out.note_failures += 1;
                    }
                }
            }
            out.finals.push(FinalReport { report, embedding });
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::MockEmbedder;
    use crate::memory::{MemoryItem, MemorySource};
    use chrono::NaiveDate;

    fn ts(day: u32, minute: u32) -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2022, 3, day)
            .unwrap()
            .and_hms_opt(9, minute, 0)
            .unwrap()
    }

    fn item(id: &str, t: NaiveDateTime, body: &str) -> NewsItem {
        NewsItem {
            id: id.into(),
            timestamp: t,
            title: format!("Title {id}"),
            body: body.into(),
            category: "markets".into(),
        }
    }

    fn kb_store(emb: &MockEmbedder, n: usize) -> MemoryStore {
        let mut store = MemoryStore::new(emb.dim());
        for i in 0..n {
            let text = format!("inflation rates growth chapter {i}");
            store
                .insert(MemoryItem {
                    id: format!("kb:{i}"),
                    embedding: emb.embed(&text).unwrap(),
                    text,
                    source: MemorySource::KnowledgeBase,
                    timestamp: crate::memory::epoch(),
                })
                .unwrap();
        }
        store
    }

    fn setup(cfg: AgentConfig) -> (MockChatBackend, MockEmbedder, AgentConfig) {
        (MockChatBackend::new(), MockEmbedder::new(16, 1), cfg)
    }

    #[test]
    fn refine_uses_mock_contract_and_rejects_empty_body() {
        let (mock, emb, cfg) = setup(AgentConfig::default());
        let agent = Agent::new(cfg, PromptSet::builtin(), &mock, &emb).unwrap();
        let out = agent.refine_news(&item("a", ts(1, 0), "rates up")).unwrap();
        assert!(out.starts_with("[REFINED]"));
        assert!(matches!(
            agent.refine_news(&item("b", ts(1, 0), "  ")),
            Err(AgentError::InvalidArgument(_))
        ));
        let req = &mock.requests()[0];
        assert!(req.messages[0].content.contains("rates up"));
    }

    #[test]
    fn three_rounds_with_bounded_retrieval() {
        let (mock, emb, cfg) = setup(AgentConfig::default());
        let agent = Agent::new(cfg, PromptSet::builtin(), &mock, &emb).unwrap();
        let store = kb_store(&emb, 12);
        let it = item("a", ts(1, 0), "inflation is rising");
        let note = agent.initial_note(ts(1, 0));
        let report = agent.analyze(&it, "inflation is rising", &note, &store).unwrap();
        assert!(report.is_final());
        assert_eq!(report.round, 3);
        assert_eq!(report.retrieved_ids.len(), 3);
        let mut all = HashSet::new();
        for ids in &report.retrieved_ids {
            assert!(ids.len() <= 5);
            for id in ids {
                assert!(all.insert(id.clone()), "repeat retrieval of {id}");
            }
        }
        assert!(report.text.contains("[round 3: 2 references]"));
        assert_eq!(mock.count(CallKind::AnalysisOpen), 1);
        assert_eq!(mock.count(CallKind::AnalysisRound), 3);
    }

    #[test]
    fn skip_leaves_store_unchanged() {
        let (mock, emb, cfg) = setup(AgentConfig::default());
        let agent = Agent::new(cfg, PromptSet::builtin(), &mock, &emb).unwrap();
        let mut state = AgentState {
            note: agent.initial_note(ts(1, 0)),
            store: kb_store(&emb, 3),
        };
        let items = vec![item("s", ts(1, 1), &format!("crossword {MOCK_SKIP_MARKER}"))];
        let out = agent.run_day(&items, &mut state).unwrap();
        assert_eq!(out.skipped.len(), 1);
        assert!(out.skipped[0].skipped);
        assert_eq!(out.skipped[0].round, 0);
        assert!(out.skipped[0].retrieved_ids.is_empty());
        assert_eq!(state.store.len(), 3);
        assert_eq!(mock.count(CallKind::UpdateNote), 0);
    }

    #[test]
    fn zero_k_runs_rounds_without_context() {
        let cfg = AgentConfig {
            top_k: 0,
            ..AgentConfig::default()
        };
        let (mock, emb, cfg) = setup(cfg);
        let agent = Agent::new(cfg, PromptSet::builtin(), &mock, &emb).unwrap();
        let store = kb_store(&emb, 4);
        let it = item("a", ts(1, 0), "text");
        let report = agent
            .analyze(&it, "text", &agent.initial_note(ts(1, 0)), &store)
            .unwrap();
        assert_eq!(report.round, 3);
        assert!(report.retrieved_ids.iter().all(Vec::is_empty));
    }

    #[test]
    fn run_day_counts() {
        let (mock, emb, cfg) = setup(AgentConfig::default());
        let agent = Agent::new(cfg, PromptSet::builtin(), &mock, &emb).unwrap();
        let mut state = AgentState {
            note: agent.initial_note(ts(1, 0)),
            store: MemoryStore::new(16),
        };
        let items = vec![
            item("a", ts(2, 0), "alpha"),
            item("b", ts(2, 5), MOCK_SKIP_MARKER),
            item("c", ts(2, 9), "gamma"),
        ];
        let out = agent.run_day(&items, &mut state).unwrap();
        assert_eq!(out.n_reports(), 2);
        assert_eq!(out.note_updates, 2);
        assert_eq!(state.store.len(), 2);
        assert_eq!(state.note.as_of, ts(2, 9));
        assert!(state.note.text.contains("[a]") && state.note.text.contains("[c]"));

        let empty = agent.run_day(&[], &mut state).unwrap();
        assert_eq!(empty, DayOutcome::default());
    }

    #[test]
    fn note_update_is_pure_and_advances() {
        let (mock, emb, cfg) = setup(AgentConfig::default());
        let agent = Agent::new(cfg, PromptSet::builtin(), &mock, &emb).unwrap();
        let store = MemoryStore::new(16);
        let n0 = agent.initial_note(ts(1, 0));
        let a = item("a", ts(1, 3), "alpha");
        let b = item("b", ts(1, 7), "beta");
        let ra = agent.analyze(&a, "alpha", &n0, &store).unwrap();
        let n1 = agent.update_note(&n0, &a, &ra).unwrap();
        let rb = agent.analyze(&b, "beta", &n1, &store).unwrap();
        let n2 = agent.update_note(&n1, &b, &rb).unwrap();
        assert_eq!(n0.text, PromptSet::builtin().initial_macro);
        assert!(n1.text.contains("[a]"));
        assert!(n0.as_of < n1.as_of && n1.as_of < n2.as_of);
    }

    #[test]
    fn no_look_ahead_in_retrieval() {
        let (mock, emb, cfg) = setup(AgentConfig::default());
        let agent = Agent::new(cfg, PromptSet::builtin(), &mock, &emb).unwrap();
        let mut store = MemoryStore::new(16);
        let text = "future inflation shock";
        store
            .insert(MemoryItem {
                id: "future".into(),
                text: text.into(),
                embedding: emb.embed(text).unwrap(),
                source: MemorySource::Report,
                timestamp: ts(9, 0),
            })
            .unwrap();
        let it = item("a", ts(1, 0), text);
        let report = agent.analyze(&it, text, &agent.initial_note(ts(1, 0)), &store).unwrap();
        assert!(report.retrieved_ids.iter().flatten().all(|id| id != "future"));
    }

    #[test]
    fn ablation_flags_shape_prompts_and_calls() {
        let cfg = AgentConfig {
            refine_enabled: false,
            notes_enabled: false,
            top_k: 0,
            ..AgentConfig::default()
        };
        let (mock, emb, cfg) = setup(cfg);
        let agent = Agent::new(cfg, PromptSet::builtin(), &mock, &emb).unwrap();
        let mut state = AgentState {
            note: agent.initial_note(ts(1, 0)),
            store: MemoryStore::new(16),
        };
        let items = vec![item("a", ts(1, 1), "alpha"), item("b", ts(1, 2), "beta")];
        let out = agent.run_day(&items, &mut state).unwrap();
        assert_eq!(out.n_reports(), 2);
        assert_eq!(mock.total_calls(), 2);
        let note_header = PromptSet::builtin().note_section;
        let header = note_header.trim().lines().next().unwrap();
        for req in mock.requests() {
            assert!(!req.messages[0].content.contains(header));
            assert!(!req.messages[0].content.contains("By September 2021"));
        }
    }

    #[test]
    fn notes_appear_in_prompts_when_enabled() {
        let (mock, emb, cfg) = setup(AgentConfig::default());
        let agent = Agent::new(cfg, PromptSet::builtin(), &mock, &emb).unwrap();
        let store = MemoryStore::new(16);
        let it = item("a", ts(1, 0), "alpha");
        agent
            .analyze(&it, "alpha", &agent.initial_note(ts(1, 0)), &store)
            .unwrap();
        let open = &mock.requests()[0];
        assert!(open.messages[0].content.contains("By September 2021"));
    }

    #[test]
    fn backend_failure_marks_item_failed_and_day_continues() {
        let emb = MockEmbedder::new(16, 1);
        let failing = FailingBackend;
        let agent = Agent::new(AgentConfig::default(), PromptSet::builtin(), &failing, &emb).unwrap();
        let mut state = AgentState {
            note: agent.initial_note(ts(1, 0)),
            store: MemoryStore::new(16),
        };
        let items = vec![item("a", ts(1, 1), "alpha"), item("b", ts(1, 2), "beta")];
        let out = agent.run_day(&items, &mut state).unwrap();
        assert_eq!(out.failed.len(), 2);
        assert!(out.finals.is_empty());
        assert!(state.store.is_empty());
    }

    #[test]
    fn malformed_reply_is_kept_as_report() {
        assert!(matches!(parse_reply("{\"action\":\"skip\"}"), Reply::Skip));
        assert!(matches!(
            parse_reply("```json\n{\"action\": \"skip\"}\n```"),
            Reply::Skip
        ));
        match parse_reply("{\"action\":\"report\",\"text\":\"x\"}") {
            Reply::Report(t) => assert_eq!(t, "x"),
            _ => panic!(),
        }
        assert!(matches!(parse_reply("plain words"), Reply::Malformed(_)));
        assert!(matches!(parse_reply("{\"action\":\"skp\"}"), Reply::Malformed(_)));
    }

    #[test]
    fn config_validation() {
        let bad = AgentConfig {
            n_rounds: 0,
            ..AgentConfig::default()
        };
        assert!(bad.validate().is_err());
        assert_eq!(AgentConfig::default().chat.temperature, 0.2);
    }
}
