use chrono::NaiveDate;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

use super::dataset::{formation_indices, Dataset, NewsInput};
use super::model::{eval_mse, forward_batch, loss_and_grads, Mode};
use super::optim::Adam;
use super::params::{NetworkParams, RunningStats, Weights};
use super::NetError;
use crate::data::{AssetId, DateRange, PanelSet};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
    /// Epoch whose parameters were kept (1-based); `None` when nothing ran.
    pub best_epoch: Option<usize>,
    pub best_val_mse: Option<f64>,
}

impl TrainHistory {
    pub fn write_csv(&self, path: &Path) -> Result<(), NetError> {
        let io = |e: std::io::Error| NetError::Io(format!("{}: {e}", path.display()));
        let mut w = csv::Writer::from_path(path).map_err(|e| NetError::Io(e.to_string()))?;
        w.write_record(["epoch", "train_mse", "val_mse"])
            .map_err(|e| NetError::Io(e.to_string()))?;
        for r in &self.records {
            let val = r.val_mse.map(|v| v.to_string()).unwrap_or_default();
            w.write_record([r.epoch.to_string(), r.train_mse.to_string(), val])
                .map_err(|e| NetError::Io(e.to_string()))?;
        }
        w.flush().map_err(io)
    }
}

struct Snapshot {
    weights: Weights,
    running: Vec<RunningStats>,
}

impl Snapshot {
    fn of(p: &NetworkParams) -> Self {
        Self {
            weights: p.weights.clone(),
            running: p.running.clone(),
        }
    }

    fn restore(self, p: &mut NetworkParams) {
        p.weights = self.weights;
        p.running = self.running;
    }
}

/// Mini-batch Adam on MSE with seeded shuffling. Returns the per-epoch
/// history; `params` ends at the best-validation epoch (last epoch when no
/// validation set is given).
pub fn train(
    params: &mut NetworkParams,
    train_set: &Dataset,
    val_set: Option<&Dataset>,
) -> Result<TrainHistory, NetError> {
    train_stream(params, train_set, val_set, 0)
}

/// Factor-only pretraining on a placeholder-embedding dataset. Identical to
/// [`train`] except for the random stream; the optimizer state is dropped.
pub fn pretrain(
    params: &mut NetworkParams,
    pretrain_set: &Dataset,
    val_set: Option<&Dataset>,
) -> Result<TrainHistory, NetError> {
    if pretrain_set.is_empty() {
        log::warn!("pretraining range holds no samples; skipping");
        return Ok(TrainHistory::default());
    }
    train_stream(params, pretrain_set, val_set, 1)
}

fn train_stream(
    params: &mut NetworkParams,
    train_set: &Dataset,
    val_set: Option<&Dataset>,
    stream: u64,
) -> Result<TrainHistory, NetError> {
    let cfg = params.config.clone();
    let mut history = TrainHistory::default();
    if cfg.epochs == 0 {
        return Ok(history);
    }
    if train_set.is_empty() {
        return Err(NetError::InvalidArgument("training set is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(stream);
    let mut opt = Adam::new(&params.weights, cfg.learning_rate, cfg.e_weight_decay);
    let full_train = train_set.full_batch(params);
    let full_val = val_set.filter(|v| !v.is_empty()).map(|v| v.full_batch(params));
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut best: Option<(f64, usize, Snapshot)> = None;

    for epoch in 1..=cfg.epochs {
        let epoch_start = Snapshot::of(params);
        order.shuffle(&mut rng);
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let batch = train_set.batch(params, idx);
            let step = loss_and_grads(params, &batch, Mode::Train, Some(&mut rng)).and_then(|lg| {
                opt.step(&mut params.weights, &lg.grads);
                params.update_running(&lg.batch_stats, batch.len());
                if params.weights.is_finite() {
                    Ok(())
                } else {
                    Err(NetError::NonFinite("parameters".into()))
                }
            });
            if let Err(e) = step {
                let msg = format!(
                    "epoch {epoch} batch {b}: {e}; max |w| {:.3e}, Adam step {}",
                    params.weights.max_abs(),
                    opt.steps()
                );
                log::error!("training diverged: {msg}");
                match best {
                    Some((_, _, snap)) => snap.restore(params),
                    None => epoch_start.restore(params),
                }
                return Err(NetError::Diverged(msg));
            }
        }
        let train_mse = eval_mse(params, &full_train)?;
        let val_mse = full_val.as_ref().map(|v| eval_mse(params, v)).transpose()?;
        history.records.push(EpochRecord {
            epoch,
            train_mse,
            val_mse,
        });
        let score = val_mse.unwrap_or(f64::NEG_INFINITY);
        if best.as_ref().is_none_or(|(s, _, _)| score < *s || val_mse.is_none()) {
            best = Some((score, epoch, Snapshot::of(params)));
        }
    }
    if let Some((score, epoch, snap)) = best {
        snap.restore(params);
        history.best_epoch = Some(epoch);
        history.best_val_mse = score.is_finite().then_some(score);
    }
    Ok(history)
}

/// Eval-mode predictions on formation dates, `NaN` where no prediction.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionPanel {
    pub dates: Vec<NaiveDate>,
    pub assets: Vec<AssetId>,
    pub values: Array2<f64>,
}

impl PredictionPanel {
    pub fn get(&self, d: usize, a: usize) -> Option<f64> {
        let v = self.values[[d, a]];
        v.is_finite().then_some(v)
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), NetError> {
        let err = |e: csv::Error| NetError::Io(format!("{}: {e}", path.display()));
        let mut w = csv::Writer::from_path(path).map_err(err)?;
        w.write_record(["date", "permno", "prediction"]).map_err(err)?;
        for (d, date) in self.dates.iter().enumerate() {
            for (a, asset) in self.assets.iter().enumerate() {
                if let Some(v) = self.get(d, a) {
                    w.write_record([date.to_string(), asset.0.to_string(), v.to_string()])
                        .map_err(err)?;
                }
            }
        }
        w.flush().map_err(|e| NetError::Io(format!("{}: {e}", path.display())))
    }

    /// Read a `date,permno,prediction` file onto the given asset list.
    pub fn read_csv(path: &Path, assets: &[AssetId]) -> Result<Self, NetError> {
        let err = |e: csv::Error| NetError::Io(format!("{}: {e}", path.display()));
        let mut r = csv::Reader::from_path(path).map_err(err)?;
        let mut rows: Vec<(NaiveDate, AssetId, f64)> = Vec::new();
        for row in r.deserialize::<(NaiveDate, u32, f64)>() {
            let (d, permno, v) = row.map_err(err)?;
            rows.push((d, AssetId(permno), v));
        }
        let mut dates: Vec<NaiveDate> = rows.iter().map(|r| r.0).collect();
        dates.sort();
        dates.dedup();
        let mut values = Array2::from_elem((dates.len(), assets.len()), f64::NAN);
        for (d, a, v) in rows {
            let Ok(col) = assets.binary_search(&a) else {
                return Err(NetError::Format(format!("{}: unknown permno {a}", path.display())));
            };
            let row = dates.binary_search(&d).expect("date collected above");
            values[[row, col]] = v;
        }
        Ok(Self {
            dates,
            assets: assets.to_vec(),
            values,
        })
    }
}

/// Predict next-day excess returns for every asset active on each formation
/// date whose following trading day lies in `range`.
pub fn predict_panel(
    params: &NetworkParams,
    panels: &PanelSet,
    news: &NewsInput<'_>,
    range: &DateRange,
) -> Result<PredictionPanel, NetError> {
    let cal = panels.calendar().dates();
    let ret = &panels.returns;
    let nf = panels.factors.n_factors();
    let d_emb = news.dim();
    if d_emb + nf != params.input_dim() {
        return Err(NetError::Shape(format!(
            "inputs of width {} for a network expecting {}",
            d_emb + nf,
            params.input_dim()
        )));
    }
    let formation = formation_indices(panels, range);
    let mut values = Array2::from_elem((formation.len(), ret.n_assets()), f64::NAN);
    for (row, &d) in formation.iter().enumerate() {
        let (s, fell_back) = news.vector(cal[d]);
        if fell_back {
            log::info!("no embedding for {}; using placeholder", cal[d]);
        }
        let active: Vec<usize> = (0..ret.n_assets()).filter(|&a| ret.mask[[d, a]]).collect();
        if active.is_empty() {
            continue;
        }
        let mut inputs = Array2::zeros((active.len(), d_emb + nf));
        for (i, &a) in active.iter().enumerate() {
            let mut r = inputs.row_mut(i);
            r.slice_mut(ndarray::s![..d_emb]).assign(&ndarray::aview1(s));
            if params.config.use_factors {
                r.slice_mut(ndarray::s![d_emb..])
                    .assign(&panels.factors.values.slice(ndarray::s![d, a, ..]));
            }
        }
        let rows: Vec<usize> = active.iter().map(|&a| params.asset_row(ret.assets[a])).collect();
        let (out, _) = forward_batch(params, inputs.view(), &rows, Mode::Eval, None)?;
        for (i, &a) in active.iter().enumerate() {
            values[[row, a]] = out[i];
        }
    }
    Ok(PredictionPanel {
        dates: formation.iter().map(|&d| cal[d]).collect(),
        assets: ret.assets.clone(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::clean_factors;
    use crate::pricing_net::{build_dataset, checkpoint, model::forward_batch, NetworkConfig};
    use crate::synthetic::{generate, SignalMix, SyntheticSpec};
    use std::collections::BTreeMap;

    struct Fixture {
        panels: PanelSet,
        news: BTreeMap<NaiveDate, Vec<f64>>,
        train: DateRange,
        val: DateRange,
    }

    /// Embedding = (news state, two noise coordinates), taken from the generator.
    fn fixture(spec: SyntheticSpec) -> Fixture {
        let data = generate(&spec).unwrap();
        let mut panels = data.panels;
        panels.factors = clean_factors(&panels.factors);
        let dates = panels.calendar().dates().to_vec();
        let news = dates
            .iter()
            .zip(&data.truth.news_state)
            .enumerate()
            .map(|(i, (d, m))| (*d, vec![*m, (i as f64).sin(), 0.5]))
            .collect();
        let cut = dates.len() * 3 / 4;
        Fixture {
            panels,
            news,
            train: DateRange {
                start: dates[1],
                end: dates[cut],
            },
            val: DateRange {
                start: dates[cut + 1],
                end: *dates.last().unwrap(),
            },
        }
    }

    fn small_spec() -> SyntheticSpec {
        SyntheticSpec {
            n_assets: 20,
            n_days: 160,
            turnover: 0.0,
            ..SyntheticSpec::default()
        }
    }

    fn net_cfg(f: &Fixture, n_hidden: usize) -> NetworkConfig {
        NetworkConfig {
            d_model: 8,
            d_emb: 3,
            n_factors: f.panels.factors.n_factors(),
            n_assets: f.panels.assets().len(),
            n_hidden,
            dropout: 0.0,
            learning_rate: 3e-3,
            batch_size: 64,
            epochs: 4,
            seed: 5,
            ..NetworkConfig::default()
        }
    }

    fn init(cfg: &NetworkConfig, f: &Fixture, scale: f64) -> NetworkParams {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        NetworkParams::init(cfg, f.panels.assets(), scale, &mut rng).unwrap()
    }

    fn sets(f: &Fixture, news: &NewsInput<'_>, use_factors: bool) -> (Dataset, Dataset) {
        (
            build_dataset(&f.panels, news, &f.train, use_factors).unwrap(),
            build_dataset(&f.panels, news, &f.val, use_factors).unwrap(),
        )
    }

    fn daily(f: &Fixture) -> NewsInput<'_> {
        NewsInput::Daily {
            series: &f.news,
            fallback: &[0.0, 0.0, 0.0],
        }
    }

    #[test]
    fn zero_epochs_is_a_no_op() {
        let f = fixture(small_spec());
        let cfg = NetworkConfig {
            epochs: 0,
            ..net_cfg(&f, 1)
        };
        let mut p = init(&cfg, &f, 0.02);
        let before = p.clone();
        let (tr, va) = sets(&f, &daily(&f), true);
        let h = train(&mut p, &tr, Some(&va)).unwrap();
        assert!(h.records.is_empty());
        assert_eq!(p, before);
    }

    #[test]
    fn seeded_runs_are_bitwise_identical() {
        let f = fixture(small_spec());
        let cfg = NetworkConfig {
            dropout: 0.2,
            ..net_cfg(&f, 2)
        };
        let (tr, va) = sets(&f, &daily(&f), true);
        let mut a = init(&cfg, &f, 0.02);
        let mut b = init(&cfg, &f, 0.02);
        let ha = train(&mut a, &tr, Some(&va)).unwrap();
        let hb = train(&mut b, &tr, Some(&va)).unwrap();
        assert_eq!(ha, hb);
        assert_eq!(a, b);
        assert_eq!(ha.records.len(), 4);
    }

    #[test]
    fn zero_learning_rate_is_flat() {
        let f = fixture(small_spec());
        let (tr, va) = sets(&f, &daily(&f), true);
        let cfg = NetworkConfig {
            learning_rate: 0.0,
            ..net_cfg(&f, 0)
        };
        let mut p = init(&cfg, &f, 0.02);
        let before = p.clone();
        let h = train(&mut p, &tr, Some(&va)).unwrap();
        assert_eq!(p, before);
        assert!(h
            .records
            .windows(2)
            .all(|w| w[0].train_mse == w[1].train_mse && w[0].val_mse == w[1].val_mse));

        // With hidden layers the batch-norm running statistics still move,
        // but no learnable tensor does.
        let cfg = NetworkConfig {
            learning_rate: 0.0,
            ..net_cfg(&f, 2)
        };
        let mut p = init(&cfg, &f, 0.02);
        let before = p.weights.clone();
        train(&mut p, &tr, Some(&va)).unwrap();
        assert_eq!(p.weights, before);
    }

    #[test]
    fn zero_placeholder_freezes_news_columns_during_pretraining() {
        let f = fixture(small_spec());
        let cfg = NetworkConfig {
            dropout: 0.1,
            ..net_cfg(&f, 1)
        };
        let zeros = [0.0; 3];
        let (tr, va) = sets(&f, &NewsInput::Placeholder(&zeros), true);
        let mut p = init(&cfg, &f, 0.02);
        let before = p.clone();
        let h = pretrain(&mut p, &tr, Some(&va)).unwrap();
        assert_eq!(h.records.len(), 4);
        let news_cols = ndarray::s![.., ..3];
        assert_eq!(p.weights.w_s.slice(news_cols), before.weights.w_s.slice(news_cols));
        assert_ne!(p.weights.w_s, before.weights.w_s);
        assert_ne!(p.weights.e, before.weights.e);
    }

    #[test]
    fn empty_pretraining_range_is_skipped() {
        let f = fixture(small_spec());
        let cfg = net_cfg(&f, 1);
        let zeros = [0.0; 3];
        let empty = DateRange {
            start: NaiveDate::from_ymd_opt(1990, 1, 1).unwrap(),
            end: NaiveDate::from_ymd_opt(1990, 2, 1).unwrap(),
        };
        let set = build_dataset(&f.panels, &NewsInput::Placeholder(&zeros), &empty, true).unwrap();
        let mut p = init(&cfg, &f, 0.02);
        let before = p.clone();
        assert_eq!(pretrain(&mut p, &set, None).unwrap(), TrainHistory::default());
        assert_eq!(p, before);
    }

    /// OLS on the factor columns plus an intercept.
    fn ols_val_mse(tr: &Dataset, va: &Dataset, skip: usize) -> f64 {
        let design = |d: &Dataset| {
            let k = d.inputs.ncols() - skip;
            nalgebra::DMatrix::from_fn(
                d.len(),
                k + 1,
                |i, j| {
                    if j == k {
                        1.0
                    } else {
                        d.inputs[[i, skip + j]]
                    }
                },
            )
        };
        let x = design(tr);
        let y = nalgebra::DVector::from_iterator(tr.len(), tr.targets.iter().copied());
        let beta = (x.transpose() * &x).lu().solve(&(x.transpose() * y)).unwrap();
        let pred = design(va) * beta;
        let resid: Vec<f64> = pred.iter().zip(va.targets.iter()).map(|(p, t)| p - t).collect();
        resid.iter().map(|r| r * r).sum::<f64>() / va.len() as f64
    }

    #[test]
    fn pretraining_learns_a_linear_factor_map() {
        let spec = SyntheticSpec {
            signal_mix: SignalMix {
                factor: 1.0,
                interaction: 0.0,
                news: 0.0,
            },
            n_days: 300,
            ..small_spec()
        };
        let f = fixture(spec);
        let cfg = NetworkConfig {
            epochs: 25,
            learning_rate: 3e-3,
            n_hidden: 1,
            ..net_cfg(&f, 1)
        };
        let zeros = [0.0; 3];
        let (tr, va) = sets(&f, &NewsInput::Placeholder(&zeros), true);
        let mut p = init(&cfg, &f, tr.target_std());
        let h = pretrain(&mut p, &tr, Some(&va)).unwrap();
        let best = h.best_val_mse.unwrap();
        let ols = ols_val_mse(&tr, &va, 3);
        assert!(best < va.target_variance(), "{best} vs var {}", va.target_variance());
        assert!(best < ols * 1.05, "{best} vs OLS {ols}");
    }

    #[test]
    fn news_state_input_beats_factor_only_input() {
        let f = fixture(SyntheticSpec {
            n_days: 300,
            n_assets: 30,
            ..small_spec()
        });
        let base = NetworkConfig {
            d_model: 16,
            epochs: 25,
            ..net_cfg(&f, 1)
        };
        let (tr, va) = sets(&f, &daily(&f), true);
        let mut hybrid = init(&base, &f, tr.target_std());
        let h = train(&mut hybrid, &tr, Some(&va)).unwrap();
        let zeros = [0.0; 3];
        let (tr0, va0) = sets(&f, &NewsInput::Placeholder(&zeros), true);
        let mut factor_only = init(&base, &f, tr0.target_std());
        let g = train(&mut factor_only, &tr0, Some(&va0)).unwrap();
        let (a, b) = (h.best_val_mse.unwrap(), g.best_val_mse.unwrap());
        assert!(a < 0.98 * b, "hybrid {a} vs factor-only {b}");
    }

    #[test]
    fn predictions_match_single_forward_calls() {
        let f = fixture(small_spec());
        let cfg = NetworkConfig {
            d_model: 32,
            ..net_cfg(&f, 2)
        };
        let (tr, va) = sets(&f, &daily(&f), true);
        let mut p = init(&cfg, &f, 0.02);
        train(&mut p, &tr, Some(&va)).unwrap();
        let panel = predict_panel(&p, &f.panels, &daily(&f), &f.val).unwrap();
        assert_eq!(panel, predict_panel(&p, &f.panels, &daily(&f), &f.val).unwrap());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("predictions.csv");
        panel.write_csv(&path).unwrap();
        assert_eq!(PredictionPanel::read_csv(&path, &panel.assets).unwrap(), panel);
        let cal = f.panels.calendar();
        for (row, date) in panel.dates.iter().enumerate().step_by(7) {
            let d = cal.index_of(*date).unwrap();
            for (a, asset) in panel.assets.iter().enumerate() {
                let v = f.panels.factors.vector(d, a);
                let one = p.forward(&f.news[date], &v, *asset).unwrap();
                assert_eq!(panel.get(row, a), Some(one));
            }
        }
    }

    #[test]
    fn single_day_two_assets() {
        let f = fixture(SyntheticSpec {
            n_assets: 2,
            n_days: 30,
            ..small_spec()
        });
        let cfg = net_cfg(&f, 0);
        let p = init(&cfg, &f, 0.02);
        let dates = f.panels.calendar().dates();
        let one_day = DateRange {
            start: dates[10],
            end: dates[10],
        };
        let panel = predict_panel(&p, &f.panels, &daily(&f), &one_day).unwrap();
        assert_eq!(panel.values.dim(), (1, 2));
        assert_eq!(panel.dates, vec![dates[9]]);
        assert!(panel.values.iter().all(|v| v.is_finite()));
        let (out, _) = forward_batch(
            &p,
            build_dataset(&f.panels, &daily(&f), &one_day, true)
                .unwrap()
                .inputs
                .view(),
            &[0, 1],
            crate::pricing_net::Mode::Eval,
            None,
        )
        .unwrap();
        assert_eq!(out.to_vec(), panel.values.row(0).to_vec());
    }

    #[test]
    fn divergence_restores_finite_parameters() {
        let f = fixture(small_spec());
        let cfg = NetworkConfig {
            learning_rate: 1e300,
            ..net_cfg(&f, 1)
        };
        let (tr, va) = sets(&f, &daily(&f), true);
        let mut p = init(&cfg, &f, 0.02);
        let before = p.clone();
        let err = train(&mut p, &tr, Some(&va)).unwrap_err();
        assert!(matches!(err, NetError::Diverged(_)), "{err}");
        assert!(p.weights.is_finite());
        assert_eq!(p.weights, before.weights);
    }

    #[test]
    fn checkpoint_and_history_round_trip() {
        let f = fixture(small_spec());
        let cfg = net_cfg(&f, 2);
        let (tr, va) = sets(&f, &daily(&f), true);
        let mut p = init(&cfg, &f, 0.02);
        let h = train(&mut p, &tr, Some(&va)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let metrics = BTreeMap::from([("best_val_mse".to_string(), h.best_val_mse.unwrap())]);
        checkpoint::save_checkpoint(&p, dir.path(), h.best_epoch, &metrics).unwrap();
        let (q, manifest) = checkpoint::load_checkpoint(dir.path()).unwrap();
        assert_eq!(manifest.epoch, h.best_epoch);
        assert_eq!(manifest.tensors.len(), 5 + 3 * 2 + 2 + 2 * 2);
        for (x, y) in p.weights.slices().iter().zip(q.weights.slices()) {
            for (u, v) in x.iter().zip(y.iter()) {
                assert_eq!(*v, *u as f32 as f64);
            }
        }
        let a = predict_panel(&p, &f.panels, &daily(&f), &f.val).unwrap();
        let b = predict_panel(&q, &f.panels, &daily(&f), &f.val).unwrap();
        for (x, y) in a.values.iter().zip(b.values.iter()) {
            assert!((x - y).abs() < 1e-5 * x.abs().max(1e-3));
        }
        std::fs::write(dir.path().join("params.bin"), [0u8; 3]).unwrap();
        assert!(checkpoint::load_checkpoint(dir.path()).is_err());

        let csv_path = dir.path().join("history.csv");
        h.write_csv(&csv_path).unwrap();
        let text = std::fs::read_to_string(&csv_path).unwrap();
        assert!(text.starts_with("epoch,train_mse,val_mse\n1,"));
        assert_eq!(text.lines().count(), 5);
    }
}
