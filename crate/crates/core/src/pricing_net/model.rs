use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::params::{NetworkParams, Weights};
use super::NetError;

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Inputs and targets for one optimization step.
#[derive(Clone, Debug)]
pub struct Batch {
    /// Row `i` is the raw hybrid vector `[s_d; v_{d,a}]` of sample `i`.
    pub inputs: Array2<f64>,
    /// Embedding-table row per sample.
    pub rows: Vec<usize>,
    pub targets: Array1<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

struct HiddenCache {
    x_in: Array2<f64>,
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
    y: Array2<f64>,
    mask: Option<Array2<f64>>,
}

/// Intermediate activations kept for the backward pass.
pub struct ForwardCache {
    z1: Array2<f64>,
    ea: Array2<f64>,
    concat: Array2<f64>,
    z2: Array2<f64>,
    hidden: Vec<HiddenCache>,
    x_last: Array2<f64>,
    /// Per hidden layer batch mean and biased variance (train mode only).
    pub batch_stats: Vec<(Array1<f64>, Array1<f64>)>,
}

impl ForwardCache {
    /// Smallest |pre-activation| over every ReLU in the pass.
    pub fn min_abs_preactivation(&self) -> f64 {
        let mut m = f64::INFINITY;
        let mut visit = |a: &Array2<f64>| {
            for v in a {
                m = m.min(v.abs());
            }
        };
        visit(&self.z1);
        visit(&self.ea);
        visit(&self.z2);
        for h in &self.hidden {
            visit(&h.y);
        }
        m
    }
}

fn relu(a: &Array2<f64>) -> Array2<f64> {
    a.mapv(|v| v.max(0.0))
}

fn relu_grad(grad: &mut Array2<f64>, pre: &Array2<f64>) {
    Zip::from(grad).and(pre).for_each(|g, &p| {
        if p <= 0.0 {
            *g = 0.0;
        }
    });
}

// Fixed summation order, so a row's result never depends on the batch it
// sits in. Outputs are always in standard layout.

/// `a · bᵀ`
fn mm_nt(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let (n, k) = a.dim();
    let m = b.nrows();
    debug_assert_eq!(b.ncols(), k);
    let a = a.as_standard_layout();
    let b = b.as_standard_layout();
    let (a, b) = (a.as_slice().expect("contiguous"), b.as_slice().expect("contiguous"));
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let ai = &a[i * k..(i + 1) * k];
        for j in 0..m {
            let bj = &b[j * k..(j + 1) * k];
            let mut acc = 0.0;
            for t in 0..k {
                acc += ai[t] * bj[t];
            }
            out[i * m + j] = acc;
        }
    }
    Array2::from_shape_vec((n, m), out).expect("shape")
}

/// `aᵀ · b`
fn mm_tn(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let (n, k) = a.dim();
    let m = b.ncols();
    debug_assert_eq!(b.nrows(), n);
    let a = a.as_standard_layout();
    let b = b.as_standard_layout();
    let (a, b) = (a.as_slice().expect("contiguous"), b.as_slice().expect("contiguous"));
    let mut out = vec![0.0; k * m];
    for i in 0..n {
        let bi = &b[i * m..(i + 1) * m];
        for r in 0..k {
            let x = a[i * k + r];
            if x == 0.0 {
                continue;
            }
            let row = &mut out[r * m..(r + 1) * m];
            for c in 0..m {
                row[c] += x * bi[c];
            }
        }
    }
    Array2::from_shape_vec((k, m), out).expect("shape")
}

/// `a · b`
fn mm_nn(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let (n, k) = a.dim();
    let m = b.ncols();
    debug_assert_eq!(b.nrows(), k);
    let a = a.as_standard_layout();
    let b = b.as_standard_layout();
    let (a, b) = (a.as_slice().expect("contiguous"), b.as_slice().expect("contiguous"));
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let row = &mut out[i * m..(i + 1) * m];
        for t in 0..k {
            let x = a[i * k + t];
            if x == 0.0 {
                continue;
            }
            let bt = &b[t * m..(t + 1) * m];
            for c in 0..m {
                row[c] += x * bt[c];
            }
        }
    }
    Array2::from_shape_vec((n, m), out).expect("shape")
}

fn affine(x: &Array2<f64>, w: &Array2<f64>, b: Option<&Array1<f64>>) -> Array2<f64> {
    let mut z = mm_nt(x, w);
    if let Some(b) = b {
        z += b;
    }
    z
}

fn mat_vec(x: &Array2<f64>, v: &Array1<f64>) -> Array1<f64> {
    x.rows()
        .into_iter()
        .map(|r| r.iter().zip(v).fold(0.0, |acc, (a, b)| acc + a * b))
        .collect()
}

fn vec_outer(u: &Array1<f64>, v: &Array1<f64>) -> Array2<f64> {
    Array2::from_shape_fn((u.len(), v.len()), |(i, j)| u[i] * v[j])
}

/// Batched forward pass. `rng` drives dropout and is only read in train mode.
pub fn forward_batch(
    params: &NetworkParams,
    inputs: ArrayView2<'_, f64>,
    rows: &[usize],
    mode: Mode,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<(Array1<f64>, ForwardCache), NetError> {
    let cfg = &params.config;
    let w = &params.weights;
    let n = rows.len();
    if inputs.nrows() != n || inputs.ncols() != params.input_dim() {
        return Err(NetError::Shape(format!(
            "inputs {:?} for {} samples of width {}",
            inputs.shape(),
            n,
            params.input_dim()
        )));
    }
    if let Some(r) = rows.iter().find(|&&r| r >= w.e.nrows()) {
        return Err(NetError::UnknownAsset(*r));
    }
    if inputs.iter().any(|v| !v.is_finite()) {
        return Err(NetError::NonFinite("input".into()));
    }
    let inputs = inputs.to_owned();
    let z1 = affine(&inputs, &w.w_s, Some(&w.b_s));
    let mut ea = Array2::zeros((n, cfg.d_model));
    for (i, &r) in rows.iter().enumerate() {
        ea.row_mut(i).assign(&w.e.row(r));
    }
    let concat = concatenate![Axis(1), relu(&z1), relu(&ea)];
    let z2 = affine(&concat, &w.w_inp, Some(&w.b_inp));
    let mut x = relu(&z2);

    let keep = 1.0 - cfg.dropout;
    let mut hidden = Vec::with_capacity(cfg.n_hidden);
    let mut batch_stats = Vec::new();
    for k in 0..cfg.n_hidden {
        let u = affine(&x, &w.w_h[k], None);
        let (xhat, inv_std) = if !cfg.batch_norm {
            (u, Array1::ones(cfg.d_model))
        } else {
            let (mean, var) = match mode {
                Mode::Train => {
                    let mean = u.mean_axis(Axis(0)).expect("non-empty batch");
                    let var = u.var_axis(Axis(0), 0.0);
                    batch_stats.push((mean.clone(), var.clone()));
                    (mean, var)
                }
                Mode::Eval => (params.running[k].mean.clone(), params.running[k].var.clone()),
            };
            let inv_std = var.mapv(|v| 1.0 / (v + super::BN_EPS).sqrt());
            ((u - &mean) * &inv_std, inv_std)
        };
        let y = if cfg.batch_norm {
            &xhat * &w.gamma[k] + &w.beta[k]
        } else {
            xhat.clone()
        };
        let mut r = relu(&y);
        let mask = match (mode, rng.as_deref_mut()) {
            (Mode::Train, Some(rng)) if cfg.dropout > 0.0 => {
                let m = Array2::from_shape_fn(r.raw_dim(), |_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 });
                r *= &m;
                Some(m)
            }
            _ => None,
        };
        let x_next = &x + &r;
        hidden.push(HiddenCache {
            x_in: std::mem::replace(&mut x, x_next),
            xhat,
            inv_std,
            y,
            mask,
        });
    }
    let out = (mat_vec(&x, &w.w_out) + w.b_out[0]) * params.output_scale;
    Ok((
        out,
        ForwardCache {
            z1,
            ea,
            concat,
            z2,
            hidden,
            x_last: x,
            batch_stats,
        },
    ))
}

/// Gradients of `loss = sum_i c_i * out_i` given `dout = (c_i)`.
pub fn backward(
    params: &NetworkParams,
    inputs: ArrayView2<'_, f64>,
    rows: &[usize],
    cache: &ForwardCache,
    dout: &Array1<f64>,
) -> Weights {
    let cfg = &params.config;
    let w = &params.weights;
    let d = cfg.d_model;
    let n = rows.len() as f64;
    let mut g = w.zeros_like();

    let dpre = dout * params.output_scale;
    g.w_out = cache
        .x_last
        .columns()
        .into_iter()
        .map(|c| c.iter().zip(&dpre).fold(0.0, |acc, (a, b)| acc + a * b))
        .collect();
    g.b_out[0] = dpre.sum();
    let mut dx = vec_outer(&dpre, &w.w_out);

    for k in (0..cfg.n_hidden).rev() {
        let h = &cache.hidden[k];
        let mut dy = match &h.mask {
            Some(m) => &dx * m,
            None => dx.clone(),
        };
        relu_grad(&mut dy, &h.y);
        let du = if cfg.batch_norm {
            g.gamma[k] = (&dy * &h.xhat).sum_axis(Axis(0));
            g.beta[k] = dy.sum_axis(Axis(0));
            let dxhat = &dy * &w.gamma[k];
            let sum_dxhat = dxhat.sum_axis(Axis(0));
            let sum_dxhat_xhat = (&dxhat * &h.xhat).sum_axis(Axis(0));
            let mut du = &dxhat * n - &sum_dxhat - &h.xhat * &sum_dxhat_xhat;
            du *= &(&h.inv_std / n);
            du
        } else {
            dy
        };
        g.w_h[k] = mm_tn(&du, &h.x_in);
        dx = dx + mm_nn(&du, &w.w_h[k]);
    }

    let mut dz2 = dx;
    relu_grad(&mut dz2, &cache.z2);
    g.w_inp = mm_tn(&dz2, &cache.concat);
    g.b_inp = dz2.sum_axis(Axis(0));
    let dconcat = mm_nn(&dz2, &w.w_inp);

    let mut dea = dconcat.slice(s![.., d..]).to_owned();
    relu_grad(&mut dea, &cache.ea);
    if cfg.asset_embedding {
        for (i, &r) in rows.iter().enumerate() {
            let mut row = g.e.row_mut(r);
            row += &dea.row(i);
        }
    }

    let mut dz1 = dconcat.slice(s![.., ..d]).to_owned();
    relu_grad(&mut dz1, &cache.z1);
    g.w_s = mm_tn(&dz1, &inputs.to_owned());
    g.b_s = dz1.sum_axis(Axis(0));
    g
}

/// Mean-squared error, exact gradients and (in train mode) batch-norm batch statistics.
pub struct LossGrads {
    pub loss: f64,
    pub grads: Weights,
    pub batch_stats: Vec<(Array1<f64>, Array1<f64>)>,
}

pub fn loss_and_grads(
    params: &NetworkParams,
    batch: &Batch,
    mode: Mode,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<LossGrads, NetError> {
    if batch.is_empty() {
        return Err(NetError::InvalidArgument("empty batch".into()));
    }
    let (out, cache) = forward_batch(params, batch.inputs.view(), &batch.rows, mode, rng)?;
    let resid = &out - &batch.targets;
    let n = batch.len() as f64;
    let loss = resid.dot(&resid) / n;
    if !loss.is_finite() {
        return Err(NetError::NonFinite(format!("loss {loss}")));
    }
    let dout = resid * (2.0 / n);
    let grads = backward(params, batch.inputs.view(), &batch.rows, &cache, &dout);
    Ok(LossGrads {
        loss,
        grads,
        batch_stats: cache.batch_stats,
    })
}

/// Eval-mode MSE over a batch.
pub fn eval_mse(params: &NetworkParams, batch: &Batch) -> Result<f64, NetError> {
    let (out, _) = forward_batch(params, batch.inputs.view(), &batch.rows, Mode::Eval, None)?;
    let resid = &out - &batch.targets;
    Ok(resid.dot(&resid) / batch.len().max(1) as f64)
}

impl NetworkParams {
    /// Eval-mode prediction for one asset-day.
    pub fn forward(&self, s_d: &[f64], v: &[f64], asset: crate::data::AssetId) -> Result<f64, NetError> {
        if s_d.len() != self.config.d_emb || v.len() != self.config.n_factors {
            return Err(NetError::Shape(format!(
                "got embedding {} and factors {}, expected {} and {}",
                s_d.len(),
                v.len(),
                self.config.d_emb,
                self.config.n_factors
            )));
        }
        let input: Vec<f64> = s_d.iter().chain(v).copied().collect();
        let x = Array2::from_shape_vec((1, input.len()), input).expect("row shape");
        let (out, _) = forward_batch(self, x.view(), &[self.asset_row(asset)], Mode::Eval, None)?;
        Ok(out[0])
    }

    /// Blend batch statistics into the running estimates.
    pub fn update_running(&mut self, stats: &[(Array1<f64>, Array1<f64>)], batch_len: usize) {
        let m = super::BN_MOMENTUM;
        let unbias = if batch_len > 1 {
            batch_len as f64 / (batch_len - 1) as f64
        } else {
            1.0
        };
        for (run, (mean, var)) in self.running.iter_mut().zip(stats) {
            run.mean = &run.mean * (1.0 - m) + mean * m;
            run.var = &run.var * (1.0 - m) + &(var * (unbias * m));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::AssetId;
    use crate::pricing_net::NetworkConfig;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn cfg(d_model: usize, n_hidden: usize) -> NetworkConfig {
        NetworkConfig {
            d_model,
            d_emb: 3,
            n_factors: 2,
            n_assets: 3,
            n_hidden,
            dropout: 0.0,
            ..NetworkConfig::default()
        }
    }

    fn assets(n: usize) -> Vec<AssetId> {
        (0..n as u32).map(|i| AssetId(100 + i)).collect()
    }

    fn random_params(cfg: &NetworkConfig, seed: u64) -> NetworkParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = NetworkParams::init(cfg, &assets(cfg.n_assets), 1.3, &mut rng).unwrap();
        for s in p.weights.slices_mut() {
            for v in s.iter_mut() {
                *v = StandardNormal.sample(&mut rng);
                *v *= 0.7;
            }
        }
        p
    }

    fn random_batch(cfg: &NetworkConfig, n: usize, seed: u64) -> Batch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let width = cfg.d_emb + cfg.n_factors;
        Batch {
            inputs: Array2::from_shape_fn((n, width), |_| StandardNormal.sample(&mut rng)),
            rows: (0..n).map(|i| i % (cfg.n_assets + 1)).collect(),
            targets: Array1::from_shape_fn(n, |_| StandardNormal.sample(&mut rng)),
        }
    }

    fn loss(p: &NetworkParams, b: &Batch) -> f64 {
        loss_and_grads(p, b, Mode::Train, None).unwrap().loss
    }

    #[test]
    fn matmul_helpers_agree_with_ndarray() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut m = |r, c| Array2::from_shape_fn((r, c), |_| StandardNormal.sample(&mut rng));
        let (a, b, c) = (m(5, 7), m(4, 7), m(7, 3));
        let close = |x: &Array2<f64>, y: &Array2<f64>| {
            x.dim() == y.dim() && x.iter().zip(y).all(|(u, v)| (u - v).abs() < 1e-12)
        };
        assert!(close(&mm_nt(&a, &b), &a.dot(&b.t())));
        assert!(close(&mm_nn(&a, &c), &a.dot(&c)));
        let d = m(5, 3);
        assert!(close(&mm_tn(&a, &d), &a.t().dot(&d)));
        assert!(mm_tn(&a, &d).is_standard_layout());
    }

    #[test]
    fn zero_params_give_zero_output() {
        let c = cfg(4, 2);
        let p = NetworkParams::from_weights(c.clone(), Weights::zeros(&c), &assets(3), 1.0).unwrap();
        let b = random_batch(&c, 5, 1);
        let (out, _) = forward_batch(&p, b.inputs.view(), &b.rows, Mode::Eval, None).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
        assert_eq!(p.forward(&[1.0, 2.0, 3.0], &[4.0, 5.0], AssetId(100)).unwrap(), 0.0);
    }

    #[test]
    fn identity_toy_is_hand_computable() {
        let c = NetworkConfig {
            d_model: 2,
            d_emb: 2,
            n_factors: 1,
            n_assets: 1,
            n_hidden: 0,
            ..NetworkConfig::default()
        };
        let mut w = Weights::zeros(&c);
        w.w_s = array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        w.w_inp = array![[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]];
        w.w_out = array![2.0, -1.0];
        let p = NetworkParams::from_weights(c, w, &[AssetId(1)], 1.0).unwrap();
        // 2 * 0.5 - 1 * 0.25 on the positive orthant
        assert_eq!(p.forward(&[0.5, 0.25], &[0.0], AssetId(1)).unwrap(), 0.75);
        // negative coordinates are cut by the ReLUs
        assert_eq!(p.forward(&[-0.5, 0.25], &[0.0], AssetId(1)).unwrap(), -0.25);
    }

    #[test]
    fn output_layer_gradient_matches_quadratic() {
        let c = cfg(3, 0);
        let p = random_params(&c, 4);
        let b = random_batch(&c, 1, 5);
        let (out, cache) = forward_batch(&p, b.inputs.view(), &b.rows, Mode::Train, None).unwrap();
        let lg = loss_and_grads(&p, &b, Mode::Train, None).unwrap();
        let r = out[0] - b.targets[0];
        for j in 0..3 {
            let want = 2.0 * r * p.output_scale * cache.x_last[[0, j]];
            assert!((lg.grads.w_out[j] - want).abs() < 1e-12);
        }
        assert!((lg.grads.b_out[0] - 2.0 * r * p.output_scale).abs() < 1e-12);
    }

    #[test]
    fn perfect_fit_is_stationary() {
        let c = cfg(4, 1);
        let p = random_params(&c, 2);
        let mut b = random_batch(&c, 6, 3);
        let (out, _) = forward_batch(&p, b.inputs.view(), &b.rows, Mode::Train, None).unwrap();
        b.targets = out;
        let lg = loss_and_grads(&p, &b, Mode::Train, None).unwrap();
        assert_eq!(lg.loss, 0.0);
        assert_eq!(lg.grads.max_abs(), 0.0);
    }

    #[test]
    fn gradients_match_central_differences() {
        let h = 1e-5;
        let mut checked = 0;
        let mut seed = 0;
        while checked < 12 {
            seed += 1;
            let c = cfg(2 + (seed as usize % 5), seed as usize % 3);
            let p = random_params(&c, seed);
            let b = random_batch(&c, 6, seed + 1000);
            let (_, cache) = forward_batch(&p, b.inputs.view(), &b.rows, Mode::Train, None).unwrap();
            if cache.min_abs_preactivation() < 1e-3 {
                continue;
            }
            checked += 1;
            let g = loss_and_grads(&p, &b, Mode::Train, None).unwrap().grads;
            let analytic: Vec<f64> = g.slices().concat();
            let mut k = 0;
            for slot in 0..p.weights.slices().len() {
                let len = p.weights.slices()[slot].len();
                for i in 0..len {
                    let mut plus = p.clone();
                    plus.weights.slices_mut()[slot][i] += h;
                    let mut minus = p.clone();
                    minus.weights.slices_mut()[slot][i] -= h;
                    let num = (loss(&plus, &b) - loss(&minus, &b)) / (2.0 * h);
                    let a = analytic[k];
                    let rel = (a - num).abs() / a.abs().max(num.abs()).max(1e-6);
                    assert!(rel < 1e-4, "seed {seed} slot {slot}[{i}]: {a} vs {num}");
                    k += 1;
                }
            }
        }
    }

    #[test]
    fn batch_norm_normalizes_in_train_mode() {
        let c = cfg(5, 2);
        let p = random_params(&c, 9);
        let b = random_batch(&c, 32, 10);
        let (_, cache) = forward_batch(&p, b.inputs.view(), &b.rows, Mode::Train, None).unwrap();
        for h in &cache.hidden {
            let mean = h.xhat.mean_axis(Axis(0)).unwrap();
            let var = h.xhat.var_axis(Axis(0), 0.0);
            for j in 0..5 {
                assert!(mean[j].abs() < 1e-6);
                // features with collapsed variance normalize to 0
                assert!((var[j] - 1.0).abs() < 1e-6 || var[j] < 1e-12);
            }
        }
    }

    #[test]
    fn zero_hidden_weights_without_batch_norm_are_identity() {
        let base = NetworkConfig {
            batch_norm: false,
            ..cfg(4, 0)
        };
        let p0 = random_params(&base, 11);
        let b = random_batch(&base, 7, 12);
        let (want, _) = forward_batch(&p0, b.inputs.view(), &b.rows, Mode::Eval, None).unwrap();
        for n_hidden in 1..4 {
            let c = NetworkConfig {
                n_hidden,
                ..base.clone()
            };
            let mut w = Weights::zeros(&c);
            let src = &p0.weights;
            w.w_s = src.w_s.clone();
            w.b_s = src.b_s.clone();
            w.e = src.e.clone();
            w.w_inp = src.w_inp.clone();
            w.b_inp = src.b_inp.clone();
            w.w_out = src.w_out.clone();
            w.b_out = src.b_out.clone();
            let p = NetworkParams::from_weights(c, w, &assets(3), p0.output_scale).unwrap();
            let (got, _) = forward_batch(&p, b.inputs.view(), &b.rows, Mode::Eval, None).unwrap();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn batch_order_does_not_change_loss_or_grads() {
        let c = cfg(4, 2);
        let p = random_params(&c, 21);
        let b = random_batch(&c, 9, 22);
        let perm = [4, 0, 8, 2, 6, 1, 7, 3, 5];
        let mut shuffled = b.clone();
        for (i, &j) in perm.iter().enumerate() {
            shuffled.inputs.row_mut(i).assign(&b.inputs.row(j));
            shuffled.rows[i] = b.rows[j];
            shuffled.targets[i] = b.targets[j];
        }
        let a = loss_and_grads(&p, &b, Mode::Train, None).unwrap();
        let s = loss_and_grads(&p, &shuffled, Mode::Train, None).unwrap();
        assert!((a.loss - s.loss).abs() < 1e-12);
        for (x, y) in a.grads.slices().iter().zip(s.grads.slices()) {
            for (u, v) in x.iter().zip(y.iter()) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn only_the_batch_asset_row_moves() {
        let c = cfg(4, 1);
        let mut p = random_params(&c, 31);
        let mut b = random_batch(&c, 8, 32);
        b.rows = vec![1; 8];
        let before = p.weights.e.clone();
        let lg = loss_and_grads(&p, &b, Mode::Train, None).unwrap();
        let mut opt = crate::pricing_net::Adam::new(&p.weights, 0.01, 0.0);
        opt.step(&mut p.weights, &lg.grads);
        for r in 0..before.nrows() {
            if r != 1 {
                assert_eq!(p.weights.e.row(r), before.row(r));
            }
        }
        assert_ne!(p.weights.e.row(1), before.row(1));
    }

    #[test]
    fn eval_is_deterministic_and_batch_invariant() {
        let c = cfg(6, 2);
        let p = random_params(&c, 41);
        let b = random_batch(&c, 10, 42);
        let (a, _) = forward_batch(&p, b.inputs.view(), &b.rows, Mode::Eval, None).unwrap();
        let (again, _) = forward_batch(&p, b.inputs.view(), &b.rows, Mode::Eval, None).unwrap();
        assert_eq!(a, again);
        for i in 0..b.len() {
            let row = b.inputs.slice(s![i..i + 1, ..]);
            let (one, _) = forward_batch(&p, row, &b.rows[i..i + 1], Mode::Eval, None).unwrap();
            assert_eq!(one[0], a[i]);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let c = cfg(3, 0);
        let p = random_params(&c, 1);
        let mut b = random_batch(&c, 2, 2);
        assert!(matches!(
            forward_batch(&p, b.inputs.view(), &[0, 9], Mode::Eval, None),
            Err(NetError::UnknownAsset(9))
        ));
        b.inputs[[0, 0]] = f64::NAN;
        assert!(forward_batch(&p, b.inputs.view(), &b.rows, Mode::Eval, None).is_err());
        let empty = Batch {
            inputs: Array2::zeros((0, 5)),
            rows: vec![],
            targets: Array1::zeros(0),
        };
        assert!(loss_and_grads(&p, &empty, Mode::Train, None).is_err());
        assert!(p.forward(&[1.0], &[1.0, 2.0], AssetId(100)).is_err());
    }

    #[test]
    fn unknown_asset_uses_cold_row() {
        let c = cfg(3, 0);
        let p = random_params(&c, 1);
        assert_eq!(p.asset_row(AssetId(999)), 3);
        assert_eq!(p.asset_row(AssetId(101)), 1);
    }
}
