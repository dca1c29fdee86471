use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aapm_core::pipeline::{
    run_sweep, Ablation, Backends, Pipeline, PipelineError, RunConfig, Stage, StageStatus, SweepSpec, ABLATION_PRESETS,
};
use aapm_core::synthetic::{generate, write_dataset, SignalMix, SyntheticSpec};
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Hybrid news-agent and factor asset pricing pipeline.
#[derive(Parser, Debug)]
#[command(name = "aapm", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Run config (TOML). Defaults to ./aapm.toml when present.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Dataset directory (paths.data).
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Output root (paths.output).
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Rerun stages whose outputs already exist.
    #[arg(long, global = true)]
    force: bool,
    /// Run seed (seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Tangency estimation window in prediction days (portfolio.tp_window).
    #[arg(long, global = true)]
    tp_window: Option<usize>,
    /// Pricing factors for alphas: tangency or tangency_market (evaluation.alpha_factors).
    #[arg(long, global = true)]
    alpha_factors: Option<String>,
    /// Let later analysis rounds retrieve items seen earlier (agent.allow_repeat_retrieval).
    #[arg(long, global = true)]
    allow_repeat_retrieval: bool,
    /// Ablation preset: naive, rag, emb, memory, factors, hybrid, refine, notes, full, factors_only.
    #[arg(long, global = true)]
    ablation: Option<String>,
    /// Override any config key, e.g. `--set network.epochs=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    sets: Vec<String>,
    /// Only log warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a seeded synthetic dataset and a matching aapm.toml.
    MakeSynthetic(SyntheticArgs),
    /// Load, clean and split the panels and news.
    Ingest,
    /// Run the news analysis agent over the corpus.
    AgentRun,
    /// Average and smooth the daily report embeddings.
    Embed,
    /// Initialize and pretrain the pricing network on pre-news history.
    Pretrain,
    /// Train the pricing network on the hybrid inputs.
    Train,
    /// Predict next-day returns over validation and test.
    Predict,
    /// Build and realize the portfolios on the test period.
    Portfolio,
    /// Compute performance and pricing-error statistics.
    Evaluate,
    /// Summarize a completed run.
    Report,
    /// Run every stage that is not complete yet.
    Run {
        /// Stop after this stage.
        #[arg(long)]
        through: Option<String>,
    },
    /// Random hyperparameter search, plus an optional rounds-by-width grid.
    Sweep(SweepArgs),
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum MixArg {
    /// Factor, interaction and news components.
    Full,
    /// No news component.
    FactorsOnly,
}

#[derive(Args, Debug)]
struct SyntheticArgs {
    /// Target directory.
    #[arg(long)]
    out: PathBuf,
    /// Generator settings (TOML); flags below override it.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    n_assets: Option<usize>,
    #[arg(long)]
    n_days: Option<usize>,
    #[arg(long)]
    n_factors: Option<usize>,
    #[arg(long, value_enum)]
    signal_mix: Option<MixArg>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Sweep spec (TOML). Without it the standard search space is used.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Override the spec's trial budget.
    #[arg(long)]
    budget: Option<usize>,
    /// Results directory; defaults to `<output>/sweeps/<spec name>`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn config_err(e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Config(e.to_string())
}

fn resolve_config(g: &Global) -> Result<RunConfig, PipelineError> {
    let default = PathBuf::from("aapm.toml");
    let path = match &g.config {
        Some(p) => Some(p.clone()),
        None => default.exists().then_some(default),
    };
    let mut cfg = match (&path, &g.data) {
        (Some(p), _) => RunConfig::load(p)?,
        (None, Some(d)) => RunConfig::new(d.clone()),
        (None, None) => {
            return Err(PipelineError::Config(
                "no config: pass --config FILE or --data DIR, or run from a directory with aapm.toml".into(),
            ))
        }
    };
    if let Some(d) = &g.data {
        cfg.paths.data = d.clone();
    }
    if let Some(o) = &g.output {
        cfg.paths.output = o.clone();
    }
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(w) = g.tp_window {
        cfg.portfolio.tp_window = w;
    }
    if let Some(a) = &g.alpha_factors {
        cfg.evaluation.alpha_factors = a.parse().map_err(config_err)?;
    }
    if g.allow_repeat_retrieval {
        cfg.agent.allow_repeat_retrieval = true;
    }
    if let Some(name) = &g.ablation {
        cfg.ablation = Ablation::preset(name).ok_or_else(|| {
            PipelineError::Config(format!(
                "unknown ablation preset `{name}`; expected one of {}",
                ABLATION_PRESETS.join(", ")
            ))
        })?;
    }
    for kv in &g.sets {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| PipelineError::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn make_synthetic(args: &SyntheticArgs, seed: Option<u64>) -> Result<(), PipelineError> {
    let mut spec = match &args.spec {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| config_err(format!("{}: {e}", p.display())))?;
            toml::from_str::<SyntheticSpec>(&text).map_err(|e| config_err(format!("{}: {e}", p.display())))?
        }
        None => SyntheticSpec::default(),
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    if let Some(n) = args.n_assets {
        spec.n_assets = n;
    }
    if let Some(n) = args.n_days {
        spec.n_days = n;
    }
    if let Some(n) = args.n_factors {
        spec.n_factors = n;
    }
    match args.signal_mix {
        Some(MixArg::Full) => spec.signal_mix = SignalMix::default(),
        Some(MixArg::FactorsOnly) => spec.signal_mix = SignalMix::factors_only(),
        None => {}
    }
    spec.validate().map_err(config_err)?;
    let data = generate(&spec).map_err(|e| PipelineError::runtime("make-synthetic", e))?;
    write_dataset(&data, &args.out).map_err(|e| PipelineError::runtime("make-synthetic", e))?;
    let cfg = RunConfig::new(".");
    let path = args.out.join("aapm.toml");
    std::fs::write(&path, cfg.to_toml()).map_err(|e| PipelineError::runtime("make-synthetic", e))?;
    println!(
        "wrote {} assets x {} days, {} news items to {}",
        spec.n_assets,
        spec.n_days,
        data.news.len(),
        args.out.display()
    );
    println!("config: {}", path.display());
    Ok(())
}

fn print_status(p: &Pipeline, ran: &[(Stage, StageStatus)]) {
    for (stage, status) in ran {
        let what = match status {
            StageStatus::Ran => "done",
            StageStatus::Cached => "up to date (use --force to rerun)",
        };
        println!("{stage:<10} {what}  {}", p.stage_dir(*stage).display());
    }
}

fn print_file(path: &Path) {
    if let Ok(text) = std::fs::read_to_string(path) {
        print!("{text}");
    }
}

fn sweep(cfg: &RunConfig, args: &SweepArgs) -> Result<(), PipelineError> {
    let mut spec = match &args.spec {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| config_err(format!("{}: {e}", p.display())))?;
            SweepSpec::from_toml(&text)?
        }
        None => SweepSpec::default(),
    };
    if let Some(b) = args.budget {
        spec.budget = b;
    }
    let name = args
        .spec
        .as_ref()
        .and_then(|p| p.file_stem())
        .map_or("default".to_string(), |s| s.to_string_lossy().into_owned());
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| cfg.paths.output.join("sweeps").join(name));
    let outcome = run_sweep(&spec, cfg, &out, &|c: &RunConfig| Backends::from_env(c))?;
    let ok = outcome.trials.iter().filter(|t| t.objective.is_some()).count();
    println!(
        "{} trials ({ok} with an objective) in {}",
        outcome.trials.len(),
        out.display()
    );
    if let Some(b) = outcome.best {
        let t = &outcome.trials[b];
        println!(
            "best: trial {} (seed {}) objective {:.6}; config {}",
            t.trial,
            t.seed,
            t.objective.unwrap_or(f64::NAN),
            out.join("best.toml").display()
        );
    }
    if spec.grid.is_some() {
        print_file(&out.join("grid.txt"));
    }
    if !outcome.trials.is_empty() && ok == 0 {
        return Err(PipelineError::runtime("sweep", "no trial produced an objective"));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    if let Command::MakeSynthetic(args) = &cli.command {
        return make_synthetic(args, cli.global.seed);
    }
    let cfg = resolve_config(&cli.global)?;
    if let Command::Sweep(args) = &cli.command {
        return sweep(&cfg, args);
    }
    let backends = Backends::from_env(&cfg)?;
    let p = Pipeline::new(cfg, backends)?.with_force(cli.global.force);
    let stage = match &cli.command {
        Command::Ingest => Some(Stage::Ingest),
        Command::AgentRun => Some(Stage::AgentRun),
        Command::Embed => Some(Stage::Embed),
        Command::Pretrain => Some(Stage::Pretrain),
        Command::Train => Some(Stage::Train),
        Command::Predict => Some(Stage::Predict),
        Command::Portfolio => Some(Stage::Portfolio),
        Command::Evaluate => Some(Stage::Evaluate),
        Command::Report => Some(Stage::Report),
        _ => None,
    };
    let ran = match (&cli.command, stage) {
        (_, Some(s)) => vec![(s, p.run_stage(s)?)],
        (Command::Run { through }, None) => {
            let target = through.as_deref().map_or(Ok(Stage::Report), str::parse)?;
            p.run_through(target)?
        }
        _ => unreachable!("handled above"),
    };
    print_status(&p, &ran);
    match ran.last().map(|r| r.0) {
        Some(Stage::Evaluate) => print_file(&p.stage_dir(Stage::Evaluate).join("report.txt")),
        Some(Stage::Report) => print_file(&p.stage_dir(Stage::Report).join("summary.txt")),
        _ => {}
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.global.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
