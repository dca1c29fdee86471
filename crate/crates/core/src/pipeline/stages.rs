use chrono::{NaiveDate, NaiveDateTime};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{Pipeline, PipelineError, Stage};
use crate::agent::{Agent, AgentState, AnalysisReport, Note, PromptSet};
use crate::data::{
    clean_factors, coverage, filter_categories, load_news, load_panels, minute_timestamp, rank_standardize, split,
    write_caps_csv, write_factors_csv, write_news, write_returns_csv, DateRange, LoadOptions, NewsItem, PanelSet,
    Split, SplitSpec,
};
use crate::embedding::{daily_average, smooth_series, DailyEmbedding, EmbeddingVec};
use crate::evaluation::{evaluate_run, formation_dates, sharpe};
use crate::memory::{ingest_corpus, MemoryStore};
use crate::portfolio::{construct, realize, write_weights_csv, PortfolioKind};
use crate::pricing_net::{
    build_dataset, load_checkpoint, predict_panel, pretrain, save_checkpoint, train, NetworkParams, NewsInput,
    PredictionPanel,
};

/// Date layout fixed at ingest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitInfo {
    /// First trading day on or after the earliest retained news item.
    pub news_start: NaiveDate,
    /// Target dates before `news_start`, used for factor-only pretraining.
    pub pretrain: Option<DateRange>,
    pub split: Split,
}

/// One line of `agent-run/embeddings.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportEmbedding {
    pub news_id: String,
    #[serde(with = "minute_timestamp")]
    pub timestamp: NaiveDateTime,
    pub vector: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AgentSummary {
    pub backend: String,
    pub items: usize,
    pub days: usize,
    pub finals: usize,
    pub skipped: usize,
    pub failed: usize,
    pub note_updates: usize,
    pub note_failures: usize,
    pub memory_before: usize,
    pub memory_after: usize,
}

/// Validation-period metrics used as sweep objectives.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Validation {
    pub ew_ls_sharpe: Option<f64>,
    pub val_mse: Option<f64>,
}

#[derive(Serialize)]
struct DayNote<'a> {
    date: NaiveDate,
    #[serde(flatten)]
    note: &'a Note,
}

#[derive(Serialize, Deserialize)]
struct SmoothedDay {
    date: NaiveDate,
    vector: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct EmbedMeta {
    dim: usize,
    days: usize,
    placeholder_days: usize,
    reports: usize,
    unplaced_reports: usize,
}

#[derive(Serialize)]
struct PortfolioSummary {
    skipped_dates: Vec<NaiveDate>,
    /// Held positions without a next-day return, per portfolio.
    delisted: BTreeMap<String, usize>,
    holding_days: usize,
}

fn write_json<T: Serialize>(stage: Stage, path: &Path, value: &T) -> Result<(), PipelineError> {
    let json = serde_json::to_string_pretty(value).expect("artifact serializes");
    std::fs::write(path, json).map_err(|e| PipelineError::runtime(stage, format!("{}: {e}", path.display())))
}

fn read_json<T: DeserializeOwned>(stage: Stage, path: &Path) -> Result<T, PipelineError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| PipelineError::runtime(stage, format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::runtime(stage, format!("{}: {e}", path.display())))
}

struct JsonlWriter {
    stage: Stage,
    out: BufWriter<std::fs::File>,
}

impl JsonlWriter {
    fn create(stage: Stage, path: &Path) -> Result<Self, PipelineError> {
        let f = std::fs::File::create(path)
            .map_err(|e| PipelineError::runtime(stage, format!("{}: {e}", path.display())))?;
        Ok(Self {
            stage,
            out: BufWriter::new(f),
        })
    }

    fn push<T: Serialize>(&mut self, value: &T) -> Result<(), PipelineError> {
        let line = serde_json::to_string(value).expect("record serializes");
        writeln!(self.out, "{line}").map_err(|e| PipelineError::runtime(self.stage, e))
    }

    fn finish(mut self) -> Result<(), PipelineError> {
        self.out.flush().map_err(|e| PipelineError::runtime(self.stage, e))
    }
}

fn read_jsonl<T: DeserializeOwned>(stage: Stage, path: &Path) -> Result<Vec<T>, PipelineError> {
    let err = |e: &dyn std::fmt::Display| PipelineError::runtime(stage, format!("{}: {e}", path.display()));
    let f = std::fs::File::open(path).map_err(|e| err(&e))?;
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line.map_err(|e| err(&e))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line).map_err(|e| err(&e))?);
        }
    }
    Ok(out)
}

/// Cleaned panels stored by `ingest`, in the input CSV schema with scaling
/// already applied.
fn read_clean_panels(dir: &Path) -> Result<PanelSet, crate::data::DataError> {
    load_panels(
        &dir.join("returns.csv"),
        &dir.join("factors.csv"),
        &dir.join("caps.csv"),
        &LoadOptions::default(),
    )
}

/// Group items by calendar day, keeping their timestamp order.
fn by_day(items: &[NewsItem]) -> BTreeMap<NaiveDate, Vec<NewsItem>> {
    let mut out: BTreeMap<NaiveDate, Vec<NewsItem>> = BTreeMap::new();
    for it in items {
        out.entry(it.date()).or_default().push(it.clone());
    }
    out
}

impl Pipeline {
    fn panels(&self, stage: Stage) -> Result<PanelSet, PipelineError> {
        read_clean_panels(&self.stage_dir(Stage::Ingest)).map_err(|e| PipelineError::runtime(stage, e))
    }

    fn split_info(&self, stage: Stage) -> Result<SplitInfo, PipelineError> {
        read_json(stage, &self.stage_dir(Stage::Ingest).join("split.json"))
    }

    fn news(&self, stage: Stage) -> Result<Vec<NewsItem>, PipelineError> {
        load_news(&self.stage_dir(Stage::Ingest).join("news.jsonl")).map_err(|e| PipelineError::runtime(stage, e))
    }

    fn placeholder(&self) -> Vec<f64> {
        vec![0.0; self.config().embedding.dim]
    }

    /// Smoothed daily embeddings, empty when news is ablated away.
    fn smoothed(&self, stage: Stage) -> Result<BTreeMap<NaiveDate, Vec<f64>>, PipelineError> {
        if !self.config().ablation.use_news {
            return Ok(BTreeMap::new());
        }
        let days: Vec<SmoothedDay> = read_jsonl(stage, &self.stage_dir(Stage::Embed).join("smoothed.jsonl"))?;
        Ok(days.into_iter().map(|d| (d.date, d.vector)).collect())
    }

    fn predictions(&self, stage: Stage, panels: &PanelSet) -> Result<PredictionPanel, PipelineError> {
        PredictionPanel::read_csv(&self.stage_dir(Stage::Predict).join("predictions.csv"), panels.assets())
            .map_err(|e| PipelineError::runtime(stage, e))
    }

    pub(super) fn ingest(&self, dir: &Path) -> Result<(), PipelineError> {
        const S: Stage = Stage::Ingest;
        let cfg = self.config();
        let rt = |e: crate::data::DataError| PipelineError::runtime(S, e);
        let d = &cfg.paths.data;
        let mut panels = load_panels(
            &d.join("returns.csv"),
            &d.join("factors.csv"),
            &d.join("caps.csv"),
            &cfg.data.load,
        )
        .map_err(rt)?;
        panels.factors = clean_factors(&panels.factors);
        if cfg.data.rank_standardize {
            panels.factors = rank_standardize(&panels.factors);
        }
        let cal = panels.calendar().clone();

        let news_path = d.join("news.jsonl");
        let news = if news_path.exists() {
            load_news(&news_path).map_err(rt)?
        } else {
            log::warn!("{} not found; continuing without news", news_path.display());
            Vec::new()
        };
        let loaded = news.len();
        let first = cal.first().expect("non-empty calendar");
        let news: Vec<NewsItem> = filter_categories(news, &cfg.agent.category_blocklist)
            .into_iter()
            .filter(|n| n.date() >= first && cal.index_at_or_after(n.date()).is_some())
            .collect();
        log::info!("{} of {loaded} news items kept", news.len());

        let news_start = match news.first() {
            Some(n) => cal.dates()[cal.index_at_or_after(n.date()).expect("filtered above")],
            None => {
                log::warn!("no news in range; the split starts at the first trading day");
                first
            }
        };
        let sub = cal.starting_at(news_start);
        let sc = &cfg.split;
        let spec = SplitSpec::from_months(&sub, sc.train_months, sc.val_months, sc.test_months).map_err(rt)?;
        let split = split(&sub, &spec).map_err(rt)?;
        let start_idx = cal.index_of(news_start).expect("calendar date");
        let pretrain = (start_idx >= 2).then(|| DateRange {
            start: cal.dates()[1],
            end: cal.dates()[start_idx - 1],
        });
        let info = SplitInfo {
            news_start,
            pretrain,
            split,
        };

        write_returns_csv(&panels.returns, &dir.join("returns.csv")).map_err(rt)?;
        write_factors_csv(&panels.factors, &dir.join("factors.csv")).map_err(rt)?;
        write_caps_csv(&panels.caps, &dir.join("caps.csv")).map_err(rt)?;
        let back = read_clean_panels(dir).map_err(rt)?;
        if back.calendar() != panels.calendar() || back.assets() != panels.assets() {
            return Err(PipelineError::runtime(
                S,
                "cleaned panels do not survive a write/read round trip (a date or asset has no returns)",
            ));
        }
        write_news(&news, &dir.join("news.jsonl")).map_err(rt)?;
        write_json(S, &dir.join("split.json"), &info)?;
        let mut cov: BTreeMap<String, usize> = coverage(&panels).into_iter().map(|(k, v)| (k.to_string(), v)).collect();
        cov.insert("news_loaded".into(), loaded);
        cov.insert("news_kept".into(), news.len());
        write_json(S, &dir.join("coverage.json"), &cov)
    }

    pub(super) fn agent_run(&self, dir: &Path) -> Result<(), PipelineError> {
        const S: Stage = Stage::AgentRun;
        let cfg = self.config();
        let rt = |e: crate::agent::AgentError| PipelineError::runtime(S, e);
        let info = self.split_info(S)?;
        let news = if cfg.ablation.use_news {
            self.news(S)?
        } else {
            log::info!("news ablated; agent stage writes empty outputs");
            Vec::new()
        };
        let backends = self.backends();
        let dim = backends.embedder.dim();

        let corpus = cfg.paths.corpus_dir();
        let store = if cfg.ablation.use_memory && corpus.is_dir() && !news.is_empty() {
            ingest_corpus(&corpus, &cfg.embedding.chunking, backends.embedder.as_ref())
                .map_err(|e| PipelineError::runtime(S, e))?
        } else {
            MemoryStore::new(dim)
        };
        let prompts = match &cfg.paths.prompts {
            Some(root) => {
                PromptSet::load_dir(&root.join(&cfg.agent.prompt_version), &cfg.agent.prompt_version).map_err(rt)?
            }
            None => PromptSet::builtin(),
        };
        let agent = Agent::new(
            cfg.agent.clone(),
            prompts,
            backends.chat.as_ref(),
            backends.embedder.as_ref(),
        )
        .map_err(rt)?;
        let as_of = info.news_start.and_hms_opt(0, 0, 0).expect("midnight");
        let note = match &cfg.paths.initial_note {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| PipelineError::runtime(S, format!("{}: {e}", p.display())))?;
                Note::new(text.trim_end(), as_of)
            }
            None => agent.initial_note(as_of),
        };
        let mut summary = AgentSummary {
            backend: backends.describe(),
            items: news.len(),
            memory_before: store.len(),
            ..AgentSummary::default()
        };
        let mut state = AgentState { note, store };

        let mut reports = JsonlWriter::create(S, &dir.join("reports.jsonl"))?;
        let mut skipped = JsonlWriter::create(S, &dir.join("skipped.jsonl"))?;
        let mut failed = JsonlWriter::create(S, &dir.join("failed.jsonl"))?;
        let mut embeddings = JsonlWriter::create(S, &dir.join("embeddings.jsonl"))?;
        let mut notes = JsonlWriter::create(S, &dir.join("notes.jsonl"))?;
        let days = by_day(&news);
        summary.days = days.len();
        for (i, (date, items)) in days.iter().enumerate() {
            let out = agent.run_day(items, &mut state).map_err(rt)?;
            log::info!(
                "{date} ({}/{}): {} reports, {} skipped, {} failed",
                i + 1,
                days.len(),
                out.finals.len(),
                out.skipped.len(),
                out.failed.len()
            );
            for f in &out.finals {
                reports.push(&f.report)?;
                embeddings.push(&ReportEmbedding {
                    news_id: f.report.news_id.clone(),
                    timestamp: f.report.timestamp,
                    vector: f.embedding.as_slice().to_vec(),
                })?;
            }
            for r in &out.skipped {
                skipped.push(r)?;
            }
            for r in &out.failed {
                failed.push(r)?;
            }
            if out.note_updates > 0 {
                notes.push(&DayNote {
                    date: *date,
                    note: &state.note,
                })?;
            }
            summary.finals += out.finals.len();
            summary.skipped += out.skipped.len();
            summary.failed += out.failed.len();
            summary.note_updates += out.note_updates;
            summary.note_failures += out.note_failures;
        }
        for w in [reports, skipped, failed, embeddings, notes] {
            w.finish()?;
        }
        summary.memory_after = state.store.len();
        state
            .store
            .save(&dir.join("memory"))
            .map_err(|e| PipelineError::runtime(S, e))?;
        write_json(S, &dir.join("summary.json"), &summary)
    }

    pub(super) fn embed(&self, dir: &Path) -> Result<(), PipelineError> {
        const S: Stage = Stage::Embed;
        let cfg = self.config();
        let rt = |e: crate::embedding::EmbedError| PipelineError::runtime(S, e);
        let panels = self.panels(S)?;
        let info = self.split_info(S)?;
        let cal = panels.calendar();
        let reports: Vec<ReportEmbedding> = read_jsonl(S, &self.stage_dir(Stage::AgentRun).join("embeddings.jsonl"))?;

        // Reports from non-trading days join the next trading day, stamped
        // at its midnight.
        let mut grouped: BTreeMap<NaiveDate, Vec<(NaiveDateTime, EmbeddingVec)>> = BTreeMap::new();
        let mut unplaced = 0;
        for r in &reports {
            let Some(idx) = cal.index_at_or_after(r.timestamp.date()) else {
                unplaced += 1;
                continue;
            };
            let day = cal.dates()[idx];
            let ts = if day == r.timestamp.date() {
                r.timestamp
            } else {
                day.and_hms_opt(0, 0, 0).expect("midnight")
            };
            let v = EmbeddingVec::new(r.vector.clone()).map_err(rt)?;
            if v.dim() != cfg.embedding.dim {
                return Err(PipelineError::runtime(
                    S,
                    format!(
                        "report {} has dimension {}, expected {}",
                        r.news_id,
                        v.dim(),
                        cfg.embedding.dim
                    ),
                ));
            }
            grouped.entry(day).or_default().push((ts, v));
        }
        let placeholder = EmbeddingVec::zeros(cfg.embedding.dim);
        let start = cal.index_of(info.news_start).expect("news start on calendar");
        let daily: Vec<DailyEmbedding> = cal.dates()[start..]
            .iter()
            .map(|d| daily_average(grouped.get(d).map_or(&[][..], |v| v.as_slice()), *d, &placeholder))
            .collect::<Result<_, _>>()
            .map_err(rt)?;
        let smoothed = smooth_series(&daily, &cfg.smoother).map_err(rt)?;

        let mut w = JsonlWriter::create(S, &dir.join("daily.jsonl"))?;
        for d in &daily {
            w.push(d)?;
        }
        w.finish()?;
        let mut w = JsonlWriter::create(S, &dir.join("smoothed.jsonl"))?;
        for (date, v) in smoothed {
            w.push(&SmoothedDay {
                date,
                vector: v.into_inner(),
            })?;
        }
        w.finish()?;
        write_json(
            S,
            &dir.join("meta.json"),
            &EmbedMeta {
                dim: cfg.embedding.dim,
                days: daily.len(),
                placeholder_days: daily.iter().filter(|d| d.placeholder).count(),
                reports: reports.len(),
                unplaced_reports: unplaced,
            },
        )
    }

    pub(super) fn pretrain(&self, dir: &Path) -> Result<(), PipelineError> {
        const S: Stage = Stage::Pretrain;
        let cfg = self.config();
        let rt = |e: crate::pricing_net::NetError| PipelineError::runtime(S, e);
        let panels = self.panels(S)?;
        let info = self.split_info(S)?;
        let placeholder = self.placeholder();
        let news = NewsInput::Placeholder(&placeholder);
        let train_set = build_dataset(&panels, &news, &info.split.train, true).map_err(rt)?;
        let scale = match train_set.target_std() {
            s if s > 0.0 && s.is_finite() => s,
            _ => 1.0,
        };
        let mut net = cfg.network.clone();
        net.n_assets = panels.assets().len();
        net.n_factors = panels.factors.n_factors();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(2);
        let mut params = NetworkParams::init(&net, panels.assets(), scale, &mut rng).map_err(rt)?;

        let mut metrics = BTreeMap::new();
        metrics.insert("output_scale".to_string(), scale);
        match (&info.pretrain, cfg.ablation.pretrain) {
            (Some(range), true) => {
                let use_factors = net.use_factors;
                let set = build_dataset(&panels, &news, range, use_factors).map_err(rt)?;
                let val = build_dataset(&panels, &news, &info.split.val, use_factors).map_err(rt)?;
                let history = pretrain(&mut params, &set, Some(&val)).map_err(rt)?;
                history.write_csv(&dir.join("history.csv")).map_err(rt)?;
                metrics.insert("samples".to_string(), set.len() as f64);
                if let Some(v) = history.best_val_mse {
                    metrics.insert("best_val_mse".to_string(), v);
                }
            }
            (None, true) => log::warn!("no history before the first news day; pretraining skipped"),
            (_, false) => log::info!("pretraining disabled; saving the initialization"),
        }
        save_checkpoint(&params, &dir.join("checkpoint"), None, &metrics).map_err(rt)
    }

    pub(super) fn train(&self, dir: &Path) -> Result<(), PipelineError> {
        const S: Stage = Stage::Train;
        let rt = |e: crate::pricing_net::NetError| PipelineError::runtime(S, e);
        let panels = self.panels(S)?;
        let info = self.split_info(S)?;
        let (mut params, _) = load_checkpoint(&self.stage_dir(Stage::Pretrain).join("checkpoint")).map_err(rt)?;
        let placeholder = self.placeholder();
        let series = self.smoothed(S)?;
        let news = NewsInput::Daily {
            series: &series,
            fallback: &placeholder,
        };
        let use_factors = params.config.use_factors;
        let train_set = build_dataset(&panels, &news, &info.split.train, use_factors).map_err(rt)?;
        let val_set = build_dataset(&panels, &news, &info.split.val, use_factors).map_err(rt)?;
        let history = train(&mut params, &train_set, Some(&val_set)).map_err(rt)?;
        history.write_csv(&dir.join("history.csv")).map_err(rt)?;
        let mut metrics = BTreeMap::new();
        metrics.insert("train_samples".to_string(), train_set.len() as f64);
        metrics.insert("val_samples".to_string(), val_set.len() as f64);
        if let Some(v) = history.best_val_mse {
            metrics.insert("best_val_mse".to_string(), v);
        }
        if let Some(rec) = history.best_epoch.and_then(|e| history.records.get(e - 1)) {
            metrics.insert("train_mse".to_string(), rec.train_mse);
        }
        write_json(S, &dir.join("metrics.json"), &metrics)?;
        save_checkpoint(&params, &dir.join("checkpoint"), history.best_epoch, &metrics).map_err(rt)
    }

    pub(super) fn predict(&self, dir: &Path) -> Result<(), PipelineError> {
        const S: Stage = Stage::Predict;
        let rt = |e: crate::pricing_net::NetError| PipelineError::runtime(S, e);
        let panels = self.panels(S)?;
        let info = self.split_info(S)?;
        let (params, _) = load_checkpoint(&self.stage_dir(Stage::Train).join("checkpoint")).map_err(rt)?;
        let placeholder = self.placeholder();
        let series = self.smoothed(S)?;
        let news = NewsInput::Daily {
            series: &series,
            fallback: &placeholder,
        };
        let range = DateRange {
            start: info.split.val.start,
            end: info.split.test.end,
        };
        let preds = predict_panel(&params, &panels, &news, &range).map_err(rt)?;
        preds.write_csv(&dir.join("predictions.csv")).map_err(rt)
    }

    pub(super) fn portfolio(&self, dir: &Path) -> Result<(), PipelineError> {
        const S: Stage = Stage::Portfolio;
        let rt = |e: crate::portfolio::PortfolioError| PipelineError::runtime(S, e);
        let panels = self.panels(S)?;
        let info = self.split_info(S)?;
        let preds = self.predictions(S, &panels)?;
        let test = info.split.test;
        let start = formation_dates(&panels, &test).first().copied();
        let set = construct(&preds, &panels.caps, &self.config().portfolio, start).map_err(rt)?;
        write_weights_csv(&set.all(), &dir.join("weights.csv")).map_err(rt)?;
        let returns_dir = dir.join("returns");
        std::fs::create_dir_all(&returns_dir).map_err(|e| PipelineError::runtime(S, e))?;
        let mut summary = PortfolioSummary {
            skipped_dates: set.skipped.clone(),
            delisted: BTreeMap::new(),
            holding_days: 0,
        };
        for w in set.all() {
            let realized = realize(w, &panels.returns).map_err(rt)?;
            let mut r = realized.returns;
            let keep: Vec<usize> = (0..r.len()).filter(|&i| test.contains(r.dates[i])).collect();
            r.dates = keep.iter().map(|&i| r.dates[i]).collect();
            r.returns = keep.iter().map(|&i| r.returns[i]).collect();
            summary.holding_days = summary.holding_days.max(r.len());
            r.write_csv(&returns_dir.join(format!("{}.csv", w.kind))).map_err(rt)?;
            summary.delisted.insert(w.kind.to_string(), realized.delisted);
        }
        write_json(S, &dir.join("summary.json"), &summary)
    }

    pub(super) fn evaluate(&self, dir: &Path) -> Result<(), PipelineError> {
        const S: Stage = Stage::Evaluate;
        let cfg = self.config();
        let panels = self.panels(S)?;
        let info = self.split_info(S)?;
        let preds = self.predictions(S, &panels)?;
        let out = evaluate_run(&preds, &panels, &cfg.portfolio, &cfg.evaluation, &info.split.test)
            .map_err(|e| PipelineError::runtime(S, e))?;
        out.write(dir).map_err(|e| PipelineError::runtime(S, e))?;

        let val = info.split.val;
        let ew_ls_sharpe = formation_dates(&panels, &val).first().and_then(|&start| {
            let set = construct(&preds, &panels.caps, &cfg.portfolio, Some(start)).ok()?;
            let r = realize(&set.ew_ls, &panels.returns).ok()?.returns;
            let v: Vec<f64> = r
                .dates
                .iter()
                .zip(&r.returns)
                .filter(|(d, _)| val.contains(**d))
                .map(|(_, x)| *x)
                .collect();
            sharpe(&v, None, cfg.evaluation.periods_per_year).ok()
        });
        let metrics: BTreeMap<String, f64> = read_json(S, &self.stage_dir(Stage::Train).join("metrics.json"))?;
        let validation = Validation {
            ew_ls_sharpe,
            val_mse: metrics.get("best_val_mse").copied(),
        };
        write_json(S, &dir.join("validation.json"), &validation)
    }

    pub(super) fn report(&self, dir: &Path) -> Result<(), PipelineError> {
        const S: Stage = Stage::Report;
        let eval_dir = self.stage_dir(Stage::Evaluate);
        let table = std::fs::read_to_string(eval_dir.join("report.txt")).map_err(|e| PipelineError::runtime(S, e))?;
        let validation: Validation = read_json(S, &eval_dir.join("validation.json"))?;
        let agent: AgentSummary = read_json(S, &self.stage_dir(Stage::AgentRun).join("summary.json"))?;
        let info = self.split_info(S)?;
        let fmt_opt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.6}"));
        let mut s = String::new();
        let _ = writeln!(s, "run {}", self.run_id());
        let _ = writeln!(s, "backends: {}", agent.backend);
        let _ = writeln!(
            s,
            "news: {} items over {} days -> {} reports, {} skipped, {} failed; {} note updates",
            agent.items, agent.days, agent.finals, agent.skipped, agent.failed, agent.note_updates
        );
        let sp = info.split;
        let _ = writeln!(
            s,
            "split: train {}..{}, val {}..{}, test {}..{}",
            sp.train.start, sp.train.end, sp.val.start, sp.val.end, sp.test.start, sp.test.end
        );
        let _ = writeln!(
            s,
            "validation: EW long-short SR {}, MSE {}",
            fmt_opt(validation.ew_ls_sharpe),
            fmt_opt(validation.val_mse)
        );
        s.push('\n');
        s.push_str(&table);
        std::fs::write(dir.join("summary.txt"), s).map_err(|e| PipelineError::runtime(S, e))
    }

    /// Parsed `evaluate/report.json` of a completed run.
    pub fn eval_report(&self) -> Result<crate::evaluation::EvalReport, PipelineError> {
        read_json(Stage::Report, &self.stage_dir(Stage::Evaluate).join("report.json"))
    }

    pub fn validation(&self) -> Result<Validation, PipelineError> {
        read_json(Stage::Report, &self.stage_dir(Stage::Evaluate).join("validation.json"))
    }

    /// `train/metrics.json`: sample counts and fit statistics.
    pub fn train_metrics(&self) -> Result<BTreeMap<String, f64>, PipelineError> {
        read_json(Stage::Report, &self.stage_dir(Stage::Train).join("metrics.json"))
    }

    pub fn agent_summary(&self) -> Result<AgentSummary, PipelineError> {
        read_json(Stage::Report, &self.stage_dir(Stage::AgentRun).join("summary.json"))
    }

    /// Final reports written by the agent stage.
    pub fn reports(&self) -> Result<Vec<AnalysisReport>, PipelineError> {
        read_jsonl(Stage::Report, &self.stage_dir(Stage::AgentRun).join("reports.jsonl"))
    }

    /// Realized test-period returns of one portfolio.
    pub fn portfolio_returns(&self, kind: PortfolioKind) -> Result<crate::portfolio::PortfolioReturns, PipelineError> {
        let path = self
            .stage_dir(Stage::Portfolio)
            .join("returns")
            .join(format!("{kind}.csv"));
        crate::portfolio::PortfolioReturns::read_csv(&path, kind).map_err(|e| PipelineError::runtime(Stage::Report, e))
    }
}
