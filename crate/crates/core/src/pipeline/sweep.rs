use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{Backends, Pipeline, PipelineError, RunConfig};

/// Sampling distribution of one swept parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Distribution {
    Choice(Vec<Value>),
    Uniform([f64; 2]),
    /// Uniform in `ln x` between the bounds.
    LogUniform([f64; 2]),
}

impl Distribution {
    fn validate(&self, key: &str) -> Result<(), PipelineError> {
        let bad = |msg: &str| Err(PipelineError::Config(format!("sweep parameter `{key}`: {msg}")));
        match self {
            Distribution::Choice(v) if v.is_empty() => bad("empty choice set"),
            Distribution::Uniform([a, b]) if !(a.is_finite() && b.is_finite() && a <= b) => {
                bad("uniform bounds must satisfy low <= high")
            }
            Distribution::LogUniform([a, b]) if !(*a > 0.0 && b.is_finite() && a <= b) => {
                bad("log-uniform bounds must satisfy 0 < low <= high")
            }
            _ => Ok(()),
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Value {
        match self {
            Distribution::Choice(v) => v[rng.gen_range(0..v.len())].clone(),
            Distribution::Uniform([a, b]) => Value::from(a + (b - a) * rng.gen::<f64>()),
            Distribution::LogUniform([a, b]) => {
                let (la, lb) = (a.ln(), b.ln());
                Value::from((la + (lb - la) * rng.gen::<f64>()).exp())
            }
        }
    }
}

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Equal-weight long-short Sharpe ratio on the validation months; maximized.
    #[default]
    ValEwSharpe,
    /// Best validation MSE of the pricing network; minimized.
    ValMse,
}

impl Objective {
    fn better(self, a: f64, b: f64) -> bool {
        match self {
            Objective::ValEwSharpe => a > b,
            Objective::ValMse => a < b,
        }
    }
}

/// Analysis depth (rounds) by width (retrieved items) grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n_rounds: Vec<usize>,
    pub top_k: Vec<usize>,
}

fn default_budget() -> usize {
    30
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default)]
    pub objective: Objective,
    /// Trial `i` samples its parameters with seed `seed + i`.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub params: BTreeMap<String, Distribution>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
}

impl Default for SweepSpec {
    /// The standard search space.
    fn default() -> Self {
        let ints = |v: &[u64]| Distribution::Choice(v.iter().map(|x| Value::from(*x)).collect());
        let params = BTreeMap::from([
            (
                "network.learning_rate".to_string(),
                Distribution::Choice([1e-3, 1e-4, 5e-4, 5e-3].iter().map(|x| Value::from(*x)).collect()),
            ),
            ("network.d_model".to_string(), ints(&[128, 256, 512, 768, 1024])),
            ("embedding.dim".to_string(), ints(&[128, 256, 512, 768, 1024])),
            ("network.epochs".to_string(), ints(&[50, 100, 150, 200])),
            ("network.n_hidden".to_string(), ints(&[0, 1, 2, 3, 4, 5])),
            ("network.dropout".to_string(), Distribution::Uniform([0.0, 0.3])),
            (
                "network.batch_size".to_string(),
                Distribution::LogUniform([32.0, 1024.0]),
            ),
            ("smoother.eta".to_string(), Distribution::Uniform([0.9, 1.0])),
            ("smoother.window".to_string(), ints(&[1, 7, 15, 30, 45, 60, 90, 180])),
            ("agent.n_rounds".to_string(), ints(&[1, 2, 3, 4, 5])),
            ("agent.top_k".to_string(), ints(&[1, 2, 3, 4, 5])),
        ]);
        Self {
            budget: default_budget(),
            objective: Objective::default(),
            seed: 0,
            params,
            grid: None,
        }
    }
}

impl SweepSpec {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        let spec: Self = toml::from_str(text).map_err(|e| PipelineError::Config(format!("sweep spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.budget == 0 && self.grid.is_none() {
            return Err(PipelineError::Config("sweep budget must be at least 1".into()));
        }
        for (key, dist) in &self.params {
            if !RunConfig::has_key(key) {
                return Err(PipelineError::Config(format!("unknown sweep parameter `{key}`")));
            }
            dist.validate(key)?;
        }
        if let Some(g) = &self.grid {
            if g.n_rounds.is_empty() || g.top_k.is_empty() {
                return Err(PipelineError::Config(
                    "grid needs at least one n_rounds and one top_k".into(),
                ));
            }
        }
        Ok(())
    }

    /// Parameters of trial `trial`; depends only on `seed + trial`.
    pub fn sample(&self, trial: usize) -> BTreeMap<String, Value> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.trial_seed(trial));
        self.params
            .iter()
            .map(|(k, d)| (k.clone(), d.sample(&mut rng)))
            .collect()
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        self.seed.wrapping_add(trial as u64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub params: BTreeMap<String, Value>,
    pub run_id: Option<String>,
    pub objective: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepOutcome {
    pub trials: Vec<TrialResult>,
    /// Index into `trials` of the best finite objective.
    pub best: Option<usize>,
    /// `(n_rounds, top_k, objective)` for each grid cell.
    pub grid: Vec<(usize, usize, Option<f64>)>,
}

type BackendFactory<'a> = dyn Fn(&RunConfig) -> Result<Backends, PipelineError> + Sync + 'a;

fn run_one(
    cfg: RunConfig,
    dir: &Path,
    objective: Objective,
    make_backends: &BackendFactory<'_>,
) -> (Option<String>, Result<f64, PipelineError>) {
    let mut cfg = cfg;
    cfg.paths.output = dir.to_path_buf();
    let pipeline = match make_backends(&cfg).and_then(|b| Pipeline::new(cfg, b)) {
        Ok(p) => p,
        Err(e) => return (None, Err(e)),
    };
    let id = Some(pipeline.run_id().to_string());
    let result = pipeline.run_all().and_then(|_| pipeline.validation()).and_then(|v| {
        let value = match objective {
            Objective::ValEwSharpe => v.ew_ls_sharpe,
            Objective::ValMse => v.val_mse,
        };
        value.ok_or_else(|| PipelineError::runtime("sweep", "objective unavailable for this trial"))
    });
    (id, result)
}

fn fmt_value(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn fmt_objective(v: Option<f64>) -> String {
    v.map_or_else(|| "NaN".to_string(), |x| x.to_string())
}

/// Random search over `spec`, then the optional depth-by-width grid. Each
/// trial runs the full pipeline in its own directory under `out_dir`; trials
/// run in parallel and share the base run seed.
pub fn run_sweep(
    spec: &SweepSpec,
    base: &RunConfig,
    out_dir: &Path,
    make_backends: &BackendFactory<'_>,
) -> Result<SweepOutcome, PipelineError> {
    spec.validate()?;
    base.validate()?;
    let io = |e: &dyn std::fmt::Display| PipelineError::runtime("sweep", format!("{}: {e}", out_dir.display()));
    std::fs::create_dir_all(out_dir).map_err(|e| io(&e))?;

    let mut configs = Vec::with_capacity(spec.budget);
    for trial in 0..spec.budget {
        let params = spec.sample(trial);
        let mut cfg = base.clone();
        for (k, v) in &params {
            cfg.set_json(k, v.clone())?;
        }
        cfg.validate()?;
        configs.push((trial, params, cfg));
    }
    let mut trials: Vec<TrialResult> = configs
        .into_par_iter()
        .map(|(trial, params, cfg)| {
            let dir = out_dir.join("trials").join(format!("trial_{trial:03}"));
            let (run_id, result) = run_one(cfg, &dir, spec.objective, make_backends);
            if let Err(e) = &result {
                log::warn!("trial {trial} failed: {e}");
            }
            TrialResult {
                trial,
                seed: spec.trial_seed(trial),
                params,
                run_id,
                objective: result.as_ref().ok().copied().filter(|x| x.is_finite()),
                error: result.err().map(|e| e.to_string()),
            }
        })
        .collect();
    trials.sort_by_key(|t| t.trial);

    let mut best: Option<usize> = None;
    for (i, t) in trials.iter().enumerate() {
        if let Some(x) = t.objective {
            if best.is_none_or(|b| spec.objective.better(x, trials[b].objective.expect("finite"))) {
                best = Some(i);
            }
        }
    }

    if !trials.is_empty() {
        let path = out_dir.join("results.csv");
        let mut w = csv::Writer::from_path(&path).map_err(|e| io(&e))?;
        let keys: Vec<&String> = spec.params.keys().collect();
        let mut header = vec!["trial".to_string(), "seed".to_string()];
        header.extend(keys.iter().map(|k| k.to_string()));
        header.push("objective".into());
        w.write_record(&header).map_err(|e| io(&e))?;
        for t in &trials {
            let mut row = vec![t.trial.to_string(), t.seed.to_string()];
            row.extend(keys.iter().map(|k| fmt_value(&t.params[*k])));
            row.push(fmt_objective(t.objective));
            w.write_record(&row).map_err(|e| io(&e))?;
        }
        w.flush().map_err(|e| io(&e))?;
    }
    if let Some(b) = best {
        let mut cfg = base.clone();
        for (k, v) in &trials[b].params {
            cfg.set_json(k, v.clone())?;
        }
        std::fs::write(out_dir.join("best.toml"), cfg.to_toml()).map_err(|e| io(&e))?;
    }

    let mut grid = Vec::new();
    if let Some(g) = &spec.grid {
        let cells: Vec<(usize, usize)> = g
            .n_rounds
            .iter()
            .flat_map(|&n| g.top_k.iter().map(move |&k| (n, k)))
            .collect();
        grid = cells
            .into_par_iter()
            .map(|(n, k)| {
                let mut cfg = base.clone();
                cfg.agent.n_rounds = n;
                cfg.agent.top_k = k;
                let dir = out_dir.join("grid").join(format!("n{n}_k{k}"));
                let (_, result) = run_one(cfg, &dir, spec.objective, make_backends);
                if let Err(e) = &result {
                    log::warn!("grid cell N={n} K={k} failed: {e}");
                }
                (n, k, result.ok().filter(|x| x.is_finite()))
            })
            .collect();
        write_grid(&grid, g, out_dir).map_err(|e| io(&e))?;
    }
    Ok(SweepOutcome { trials, best, grid })
}

fn write_grid(grid: &[(usize, usize, Option<f64>)], g: &GridSpec, out_dir: &Path) -> Result<(), std::io::Error> {
    let mut csv = String::from("n_rounds,top_k,objective\n");
    for (n, k, v) in grid {
        let _ = writeln!(csv, "{n},{k},{}", fmt_objective(*v));
    }
    std::fs::write(out_dir.join("grid.csv"), csv)?;

    let mut table = String::from("N \\ K");
    for k in &g.top_k {
        let _ = write!(table, "\t{k}");
    }
    table.push('\n');
    for n in &g.n_rounds {
        let _ = write!(table, "{n}");
        for k in &g.top_k {
            let v = grid.iter().find(|c| c.0 == *n && c.1 == *k).and_then(|c| c.2);
            let _ = write!(table, "\t{}", v.map_or("n/a".to_string(), |x| format!("{x:.3}")));
        }
        table.push('\n');
    }
    std::fs::write(out_dir.join("grid.txt"), table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_space_uses_known_keys() {
        SweepSpec::default().validate().unwrap();
    }

    #[test]
    fn unknown_parameter_is_rejected() {
        let text = "budget = 2\n[params.\"network.learning_rat\"]\nchoice = [0.1]\n";
        match SweepSpec::from_toml(text) {
            Err(PipelineError::Config(msg)) => assert!(msg.contains("network.learning_rat")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn parses_all_distributions() {
        let text = r#"
budget = 4
objective = "val_mse"
seed = 11
[params."network.dropout"]
uniform = [0.0, 0.3]
[params."network.batch_size"]
log_uniform = [32, 1024]
[params."agent.n_rounds"]
choice = [1, 2]
"#;
        let spec = SweepSpec::from_toml(text).unwrap();
        assert_eq!(spec.objective, Objective::ValMse);
        for t in 0..50 {
            let p = spec.sample(t);
            let d = p["network.dropout"].as_f64().unwrap();
            assert!((0.0..=0.3).contains(&d));
            let b = p["network.batch_size"].as_f64().unwrap();
            assert!((32.0..=1024.0).contains(&b));
            assert!([1, 2].contains(&p["agent.n_rounds"].as_u64().unwrap()));
        }
    }

    #[test]
    fn trial_parameters_depend_only_on_trial_seed() {
        let spec = SweepSpec::default();
        assert_eq!(spec.sample(3), spec.sample(3));
        let shifted = SweepSpec {
            seed: 1,
            ..SweepSpec::default()
        };
        assert_eq!(spec.sample(4), shifted.sample(3));
    }

    #[test]
    fn zero_budget_rejected() {
        assert!(SweepSpec::from_toml("budget = 0").is_err());
    }

    #[test]
    fn sampled_values_apply_to_config() {
        let spec = SweepSpec::default();
        let mut cfg = RunConfig::new("data");
        for (k, v) in spec.sample(0) {
            cfg.set_json(&k, v).unwrap();
        }
        assert!(cfg.network.batch_size >= 32);
        assert!((0.9..=1.0).contains(&cfg.smoother.eta));
    }
}
