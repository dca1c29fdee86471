//! Seeded synthetic market: factor panel, caps, news with planted sentiment
//! tokens, and next-day returns built from known components.

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use ndarray::{Array2, Array3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::agent::MOCK_SKIP_MARKER;
use crate::data::{
    write_caps_csv, write_factors_csv, write_news, write_returns_csv, AssetId, CellFill, DataError, FactorPanel,
    MarketCapSeries, NewsItem, PanelSet, ReturnPanel, TradingCalendar,
};

/// Weights of the return components; each component has unit variance
/// before weighting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SignalMix {
    pub factor: f64,
    pub interaction: f64,
    pub news: f64,
}

impl Default for SignalMix {
    fn default() -> Self {
        Self {
            factor: 1.0,
            interaction: 0.5,
            news: 1.0,
        }
    }
}

impl SignalMix {
    pub fn factors_only() -> Self {
        Self {
            news: 0.0,
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub n_assets: usize,
    /// Trading days in the whole panel, history included.
    pub n_days: usize,
    pub n_factors: usize,
    /// Leading days without news, used for pretraining. Defaults to `n_days / 5`.
    pub history_days: Option<usize>,
    pub start: NaiveDate,
    pub signal_mix: SignalMix,
    /// Daily standard deviation of the weighted signal for unit weights.
    pub signal_sd: f64,
    pub noise_sd: f64,
    pub factor_persistence: f64,
    pub news_persistence: f64,
    /// Mean relevant news items per day.
    pub news_per_day: f64,
    /// Mean irrelevant items per day (blocklisted categories or no content).
    pub irrelevant_per_day: f64,
    /// Sentiment tokens per relevant item.
    pub sentiment_tokens: usize,
    /// Slope of the token-sign probability in the news state.
    pub sentiment_strength: f64,
    pub missing_rate: f64,
    /// Share of assets that list late or delist early.
    pub turnover: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            seed: 7,
            n_assets: 50,
            n_days: 500,
            n_factors: 6,
            history_days: None,
            start: NaiveDate::from_ymd_opt(2020, 8, 3).expect("valid date"),
            signal_mix: SignalMix::default(),
            signal_sd: 0.01,
            noise_sd: 0.02,
            factor_persistence: 0.95,
            news_persistence: 0.97,
            news_per_day: 3.0,
            irrelevant_per_day: 0.5,
            sentiment_tokens: 3,
            sentiment_strength: 2.0,
            missing_rate: 0.01,
            turnover: 0.1,
        }
    }
}

impl SyntheticSpec {
    pub fn history_days(&self) -> usize {
        self.history_days.unwrap_or(self.n_days / 5)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.n_assets == 0 || self.n_days < 2 || self.n_factors < 2 {
            return Err(DataError::Shape(
                "need n_assets >= 1, n_days >= 2 and n_factors >= 2".into(),
            ));
        }
        if self.history_days() >= self.n_days {
            return Err(DataError::Shape("history_days must be below n_days".into()));
        }
        let unit = |x: f64| (0.0..1.0).contains(&x);
        if !unit(self.factor_persistence.abs())
            || !unit(self.news_persistence.abs())
            || !unit(self.missing_rate)
            || !unit(self.turnover)
        {
            return Err(DataError::Shape(
                "persistence, missing_rate and turnover must lie in [0, 1)".into(),
            ));
        }
        if !(self.signal_sd >= 0.0 && self.noise_sd >= 0.0) {
            return Err(DataError::Shape("standard deviations must be non-negative".into()));
        }
        Ok(())
    }
}

/// Generating coefficients, kept for oracle tests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub spec: SyntheticSpec,
    pub news_start: NaiveDate,
    pub factor_names: Vec<String>,
    /// Unit-norm linear loadings on the factors.
    pub factor_loadings: Vec<f64>,
    /// Factor indices whose product forms the interaction term.
    pub interaction_pair: (usize, usize),
    /// Per-asset loading on the news state.
    pub news_loadings: Vec<f64>,
    /// Factor whose value also scales the news response.
    pub news_factor: usize,
    /// Latent news state per trading day.
    pub news_state: Vec<f64>,
    pub positive_words: Vec<String>,
    pub negative_words: Vec<String>,
}

pub struct SyntheticData {
    pub panels: PanelSet,
    pub news: Vec<NewsItem>,
    pub truth: Truth,
    /// `expected[[d, a]]` is the noiseless return of asset `a` on day `d + 1`
    /// given information at `d`; NaN where the asset is not active at `d`.
    pub expected: Array2<f64>,
}

const FACTOR_NAMES: [&str; 8] = [
    "size",
    "value",
    "momentum",
    "profitability",
    "investment",
    "accruals",
    "volatility",
    "liquidity",
];

pub const POSITIVE_WORDS: [&str; 8] = [
    "surge",
    "beat",
    "upgrade",
    "rally",
    "expansion",
    "record",
    "strong",
    "optimism",
];

pub const NEGATIVE_WORDS: [&str; 8] = [
    "slump",
    "miss",
    "downgrade",
    "selloff",
    "contraction",
    "layoffs",
    "weak",
    "pessimism",
];

const FILLER: [&str; 32] = [
    "company",
    "quarter",
    "market",
    "investors",
    "analysts",
    "report",
    "shares",
    "sector",
    "demand",
    "prices",
    "outlook",
    "management",
    "revenue",
    "guidance",
    "board",
    "customers",
    "production",
    "exports",
    "policy",
    "officials",
    "data",
    "survey",
    "trade",
    "capital",
    "costs",
    "orders",
    "retail",
    "industry",
    "region",
    "plans",
    "statement",
    "week",
];

const TOPICS: [&str; 5] = ["markets", "economy", "business", "technology", "finance"];
const OFF_TOPIC: [&str; 3] = ["travel", "lifestyle", "puzzles"];

const CORPUS: [(&str, &str); 8] = [
    ("asset_pricing.txt", include_str!("../corpus/asset_pricing.txt")),
    ("business_cycle.txt", include_str!("../corpus/business_cycle.txt")),
    ("credit.txt", include_str!("../corpus/credit.txt")),
    ("energy.txt", include_str!("../corpus/energy.txt")),
    ("inflation.txt", include_str!("../corpus/inflation.txt")),
    ("labor_markets.txt", include_str!("../corpus/labor_markets.txt")),
    ("monetary_policy.txt", include_str!("../corpus/monetary_policy.txt")),
    ("supply_chains.txt", include_str!("../corpus/supply_chains.txt")),
];

/// Write the bundled knowledge-base texts into `dir`.
pub fn write_corpus(dir: &Path) -> Result<(), DataError> {
    std::fs::create_dir_all(dir).map_err(|e| DataError::Io {
        path: dir.to_path_buf(),
        msg: e.to_string(),
    })?;
    for (name, text) in CORPUS {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| DataError::Io {
            path,
            msg: e.to_string(),
        })?;
    }
    Ok(())
}

/// Weekday calendar of `n` days from `start` (rolled forward to a weekday).
pub fn weekday_calendar(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d += Duration::days(1);
    }
    out
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn ar1(rng: &mut ChaCha8Rng, n: usize, phi: f64) -> Vec<f64> {
    let innov = (1.0 - phi * phi).sqrt();
    let mut x: f64 = StandardNormal.sample(rng);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(x);
        let e: f64 = StandardNormal.sample(rng);
        x = phi * x + innov * e;
    }
    out
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticData, DataError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (nd, na, nf) = (spec.n_days, spec.n_assets, spec.n_factors);
    let dates = weekday_calendar(spec.start, nd);
    let history = spec.history_days();
    let assets: Vec<AssetId> = (0..na as u32).map(|i| AssetId(10_001 + i)).collect();
    let factor_names: Vec<String> = (0..nf)
        .map(|k| match FACTOR_NAMES.get(k) {
            Some(n) => (*n).to_string(),
            None => format!("char{}", k + 1),
        })
        .collect();

    // Listing windows: most assets trade throughout, a few list late or delist early.
    let mut first = vec![0usize; na];
    let mut last = vec![nd - 1; na];
    for a in 0..na {
        if rng.gen::<f64>() < spec.turnover {
            if rng.gen_bool(0.5) {
                first[a] = rng.gen_range(1..(nd / 3).max(2));
            } else {
                last[a] = rng.gen_range((2 * nd / 3).min(nd - 2)..nd - 1);
            }
        }
    }
    let active = |d: usize, a: usize| first[a] <= d && d <= last[a];

    let mut values = Array3::zeros((nd, na, nf));
    for a in 0..na {
        for k in 0..nf {
            for (d, v) in ar1(&mut rng, nd, spec.factor_persistence).into_iter().enumerate() {
                values[[d, a, k]] = v;
            }
        }
    }
    let news_state = ar1(&mut rng, nd, spec.news_persistence);
    let raw: Vec<f64> = (0..nf).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = raw.iter().map(|b| b * b).sum::<f64>().sqrt();
    let factor_loadings: Vec<f64> = raw.iter().map(|b| b / norm).collect();
    let interaction_pair = (0, 1);
    let news_factor = 2 % nf;
    let news_loadings: Vec<f64> = (0..na).map(|_| StandardNormal.sample(&mut rng)).collect();

    let mix = &spec.signal_mix;
    let mut expected = Array2::from_elem((nd, na), f64::NAN);
    for d in 0..nd {
        for a in 0..na {
            if !active(d, a) {
                continue;
            }
            let lin: f64 = (0..nf).map(|k| factor_loadings[k] * values[[d, a, k]]).sum();
            let inter = values[[d, a, interaction_pair.0]] * values[[d, a, interaction_pair.1]];
            // Asset loading plus a characteristic-dependent response, unit variance.
            let news = news_state[d] * (news_loadings[a] + values[[d, a, news_factor]]) / std::f64::consts::SQRT_2;
            expected[[d, a]] = spec.signal_sd * (mix.factor * lin + mix.interaction * inter + mix.news * news);
        }
    }

    let noise = Normal::new(0.0, spec.noise_sd.max(f64::MIN_POSITIVE)).expect("valid sd");
    let mut returns = Array2::from_elem((nd, na), f64::NAN);
    let mut mask = Array2::from_elem((nd, na), false);
    let mut caps = Array2::from_elem((nd, na), f64::NAN);
    for a in 0..na {
        let z: f64 = StandardNormal.sample(&mut rng);
        let log_cap = 20.7 + z;
        let mut cap = log_cap.exp();
        for d in 0..nd {
            if !active(d, a) {
                continue;
            }
            mask[[d, a]] = true;
            let r = if d > 0 && active(d - 1, a) {
                let e = if spec.noise_sd > 0.0 {
                    noise.sample(&mut rng)
                } else {
                    0.0
                };
                expected[[d - 1, a]] + e
            } else {
                let e: f64 = noise.sample(&mut rng);
                e
            };
            returns[[d, a]] = r;
            cap *= (1.0 + r).max(0.05);
            caps[[d, a]] = cap;
        }
    }

    let mut fill = Array3::from_elem((nd, na, nf), CellFill::Observed);
    for ((d, a, k), v) in values.indexed_iter_mut() {
        if !active(d, a) || rng.gen::<f64>() < spec.missing_rate {
            *v = f64::NAN;
            fill[[d, a, k]] = CellFill::Missing;
        }
    }

    let calendar = TradingCalendar::new(dates.clone())?;
    let panels = PanelSet {
        returns: ReturnPanel::new(calendar.clone(), assets.clone(), returns, mask)?,
        factors: FactorPanel::new(calendar.clone(), assets.clone(), factor_names.clone(), values, fill)?,
        caps: MarketCapSeries { calendar, assets, caps },
    };

    let news = generate_news(spec, &dates[history..], &news_state[history..], &mut rng);
    let truth = Truth {
        spec: spec.clone(),
        news_start: dates[history],
        factor_names,
        factor_loadings,
        interaction_pair,
        news_loadings,
        news_factor,
        news_state,
        positive_words: POSITIVE_WORDS.iter().map(|w| w.to_string()).collect(),
        negative_words: NEGATIVE_WORDS.iter().map(|w| w.to_string()).collect(),
    };
    Ok(SyntheticData {
        panels,
        news,
        truth,
        expected,
    })
}

fn sentence(words: &[&str]) -> String {
    let mut s = words.join(" ");
    if let Some(c) = s.get(..1) {
        s = c.to_uppercase() + &s[1..];
    }
    s + "."
}

fn generate_news(spec: &SyntheticSpec, dates: &[NaiveDate], state: &[f64], rng: &mut ChaCha8Rng) -> Vec<NewsItem> {
    let relevant = Poisson::new(spec.news_per_day.max(1e-9)).expect("positive rate");
    let irrelevant = Poisson::new(spec.irrelevant_per_day.max(1e-9)).expect("positive rate");
    let mut items = Vec::new();
    for (d, date) in dates.iter().enumerate() {
        let p_pos = sigmoid(spec.sentiment_strength * state[d]);
        let n_rel = relevant.sample(rng) as usize;
        let n_irr = irrelevant.sample(rng) as usize;
        let mut kinds: Vec<bool> = std::iter::repeat_n(true, n_rel)
            .chain(std::iter::repeat_n(false, n_irr))
            .collect();
        kinds.shuffle(rng);
        let mut minutes: Vec<u32> = kinds.iter().map(|_| rng.gen_range(6 * 60..20 * 60)).collect();
        minutes.sort_unstable();
        for (j, (is_relevant, minute)) in kinds.into_iter().zip(minutes).enumerate() {
            let ts = date.and_hms_opt(minute / 60, minute % 60, 0).expect("valid time");
            let filler = |rng: &mut ChaCha8Rng, n: usize| -> Vec<&str> {
                (0..n).map(|_| *FILLER.choose(rng).expect("non-empty")).collect()
            };
            let (title, body, category) = if is_relevant {
                let mut words = filler(rng, 8);
                let mut first_tone = "";
                for t in 0..spec.sentiment_tokens {
                    let w = if rng.gen::<f64>() < p_pos {
                        *POSITIVE_WORDS.choose(rng).expect("non-empty")
                    } else {
                        *NEGATIVE_WORDS.choose(rng).expect("non-empty")
                    };
                    if t == 0 {
                        first_tone = w;
                    }
                    let at = rng.gen_range(0..=words.len());
                    words.insert(at, w);
                }
                let topic = *TOPICS.choose(rng).expect("non-empty");
                let title = format!("{} {} {}", topic, first_tone, filler(rng, 1)[0]);
                let half = words.len() / 2;
                let body = format!("{} {}", sentence(&words[..half]), sentence(&words[half..]));
                (title, body, topic.to_string())
            } else if rng.gen_bool(0.5) {
                let cat = *OFF_TOPIC.choose(rng).expect("non-empty");
                let words = filler(rng, 6);
                (format!("{cat} notes"), sentence(&words), cat.to_string())
            } else {
                let words = filler(rng, 6);
                (
                    "column".to_string(),
                    format!("{} {MOCK_SKIP_MARKER}", sentence(&words)),
                    "opinion".to_string(),
                )
            };
            items.push(NewsItem {
                id: format!("n{}-{:02}", date.format("%Y%m%d"), j),
                timestamp: ts,
                title,
                body,
                category,
            });
        }
    }
    items
}

/// Write the dataset: `returns.csv`, `factors.csv`, `caps.csv`,
/// `news.jsonl`, `truth.json` and a `corpus/` directory.
pub fn write_dataset(data: &SyntheticData, dir: &Path) -> Result<(), DataError> {
    let io = |path: &Path, e: std::io::Error| DataError::Io {
        path: path.to_path_buf(),
        msg: e.to_string(),
    };
    std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    write_returns_csv(&data.panels.returns, &dir.join("returns.csv"))?;
    write_factors_csv(&data.panels.factors, &dir.join("factors.csv"))?;
    write_caps_csv(&data.panels.caps, &dir.join("caps.csv"))?;
    write_news(&data.news, &dir.join("news.jsonl"))?;
    let path = dir.join("truth.json");
    let json = serde_json::to_string_pretty(&data.truth).expect("truth serializes");
    std::fs::write(&path, json).map_err(|e| io(&path, e))?;
    write_corpus(&dir.join("corpus"))
}
