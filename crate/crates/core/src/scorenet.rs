//! Trainable dense score network with sinusoidal time embedding, manual
//! reverse-mode differentiation, and Adam optimization.
//!
//! Architecture: the input `x` is embedded by a linear map to width `W`, the
//! time by `W/2` sine/cosine features with frequencies `10000^{-2j/W}`. Three
//! dense ReLU layers of width `W` follow, each receiving the time embedding
//! through its own affine skip map added to the pre-activation. The output
//! layer is linear back to dimension `d`. All math is in f64.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::schedules::Schedule;
use crate::targets::Target;

pub const N_HIDDEN: usize = 3;

#[derive(Debug, Clone, PartialEq)]
struct HiddenLayer {
    w: DMatrix<f64>,
    b: DVector<f64>,
    /// Affine skip map applied to the time embedding.
    a: DMatrix<f64>,
}

/// Weights of the score network `s_θ(t, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreNetParams {
    dim: usize,
    width: usize,
    w_in: DMatrix<f64>,
    b_in: DVector<f64>,
    hidden: Vec<HiddenLayer>,
    w_out: DMatrix<f64>,
    b_out: DVector<f64>,
}

/// Gradient record with the same tensor layout as [`ScoreNetParams`].
#[derive(Debug, Clone)]
pub struct ScoreNetGrads {
    w_in: DMatrix<f64>,
    b_in: DVector<f64>,
    hidden: Vec<HiddenLayer>,
    w_out: DMatrix<f64>,
    b_out: DVector<f64>,
}

fn kaiming_uniform(rows: usize, cols: usize, fan_in: usize, r: &mut impl Rng) -> DMatrix<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    DMatrix::from_fn(rows, cols, |_, _| (r.random::<f64>() * 2.0 - 1.0) * bound)
}

impl ScoreNetParams {
    /// Seed-deterministic Kaiming-uniform initialization with zero biases.
    pub fn init(dim: usize, width: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Domain("network input dimension must be >= 1".into()));
        }
        if width < 2 || width % 2 != 0 {
            return Err(Error::Domain(format!("width must be even and >= 2, got {width}")));
        }
        let mut tensor_idx = 0u64;
        let mut next = |rows: usize, cols: usize, fan_in: usize| {
            let mut r = rng::named(seed, "net-init", &[tensor_idx]);
            tensor_idx += 1;
            kaiming_uniform(rows, cols, fan_in, &mut r)
        };
        let w_in = next(width, dim, dim);
        let hidden = (0..N_HIDDEN)
            .map(|_| HiddenLayer {
                w: next(width, width, width),
                b: DVector::zeros(width),
                a: next(width, width, width),
            })
            .collect();
        let w_out = next(dim, width, width);
        Ok(ScoreNetParams {
            dim,
            width,
            w_in,
            b_in: DVector::zeros(width),
            hidden,
            w_out,
            b_out: DVector::zeros(dim),
        })
    }

    pub fn zeros(dim: usize, width: usize) -> Result<Self> {
        let mut p = Self::init(dim, width, 0)?;
        for s in p.tensors_mut() {
            s.fill(0.0);
        }
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Sine/cosine embedding of a time value.
    pub fn time_embedding(&self, t: f64) -> DVector<f64> {
        let half = self.width / 2;
        let mut e = DVector::zeros(self.width);
        for j in 0..half {
            let omega = 10_000f64.powf(-2.0 * j as f64 / self.width as f64);
            e[j] = (omega * t).sin();
            e[half + j] = (omega * t).cos();
        }
        e
    }

    fn time_embedding_cols(&self, ts: &[f64]) -> DMatrix<f64> {
        let half = self.width / 2;
        let mut e = DMatrix::zeros(self.width, ts.len());
        for (c, &t) in ts.iter().enumerate() {
            for j in 0..half {
                let omega = 10_000f64.powf(-2.0 * j as f64 / self.width as f64);
                e[(j, c)] = (omega * t).sin();
                e[(half + j, c)] = (omega * t).cos();
            }
        }
        e
    }

    /// `s_θ(t, x)` for a single point.
    pub fn forward(&self, t: f64, x: &DVector<f64>) -> DVector<f64> {
        let out = self.forward_cols(&[t], &DMatrix::from_columns(&[x.clone()]));
        out.column(0).into_owned()
    }

    /// Batched forward for row-major samples sharing one time value.
    pub fn forward_rows(&self, t: f64, xs: &DMatrix<f64>) -> DMatrix<f64> {
        let ts = vec![t; xs.nrows()];
        self.forward_cols(&ts, &xs.transpose()).transpose()
    }

    /// Batched forward; samples are columns, one time value per column.
    pub fn forward_cols(&self, ts: &[f64], xs: &DMatrix<f64>) -> DMatrix<f64> {
        let (_, out) = self.forward_cached(ts, xs);
        out
    }

    /// Forward pass keeping per-layer activations for backprop.
    fn forward_cached(&self, ts: &[f64], xs: &DMatrix<f64>) -> (ForwardCache, DMatrix<f64>) {
        let n = xs.ncols();
        assert_eq!(ts.len(), n, "one time value per sample");
        assert_eq!(xs.nrows(), self.dim, "input dimension mismatch");
        let te = self.time_embedding_cols(ts);

        let mut h = &self.w_in * xs;
        broadcast_add(&mut h, &self.b_in);
        let embed = h.clone();

        let mut acts = Vec::with_capacity(N_HIDDEN);
        for layer in &self.hidden {
            let mut pre = &layer.w * &h;
            pre += &layer.a * &te;
            broadcast_add(&mut pre, &layer.b);
            let act = pre.map(|v| v.max(0.0));
            acts.push(LayerCache { pre, input: h });
            h = act;
        }
        let mut out = &self.w_out * &h;
        broadcast_add(&mut out, &self.b_out);
        (ForwardCache { te, embed, acts, last: h }, out)
    }

    fn tensors(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = vec![self.w_in.as_slice(), self.b_in.as_slice()];
        for l in &self.hidden {
            v.push(l.w.as_slice());
            v.push(l.b.as_slice());
            v.push(l.a.as_slice());
        }
        v.push(self.w_out.as_slice());
        v.push(self.b_out.as_slice());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = Vec::new();
        v.push(self.w_in.as_mut_slice());
        v.push(self.b_in.as_mut_slice());
        for l in &mut self.hidden {
            v.push(l.w.as_mut_slice());
            v.push(l.b.as_mut_slice());
            v.push(l.a.as_mut_slice());
        }
        v.push(self.w_out.as_mut_slice());
        v.push(self.b_out.as_mut_slice());
        v
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|s| s.len()).sum()
    }

    pub fn get_flat(&self, mut idx: usize) -> f64 {
        for s in self.tensors() {
            if idx < s.len() {
                return s[idx];
            }
            idx -= s.len();
        }
        panic!("flat index out of range");
    }

    pub fn set_flat(&mut self, mut idx: usize, value: f64) {
        for s in self.tensors_mut() {
            if idx < s.len() {
                s[idx] = value;
                return;
            }
            idx -= s.len();
        }
        panic!("flat index out of range");
    }

    /// Tensor contents in serialization order, each as (rows, cols, row-major data).
    pub fn tensor_blocks(&self) -> Vec<(usize, usize, Vec<f64>)> {
        fn mat(m: &DMatrix<f64>) -> (usize, usize, Vec<f64>) {
            let mut data = Vec::with_capacity(m.len());
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    data.push(m[(i, j)]);
                }
            }
            (m.nrows(), m.ncols(), data)
        }
        fn vec(v: &DVector<f64>) -> (usize, usize, Vec<f64>) {
            (v.len(), 1, v.as_slice().to_vec())
        }
        let mut blocks = vec![mat(&self.w_in), vec(&self.b_in)];
        for l in &self.hidden {
            blocks.push(mat(&l.w));
            blocks.push(vec(&l.b));
            blocks.push(mat(&l.a));
        }
        blocks.push(mat(&self.w_out));
        blocks.push(vec(&self.b_out));
        blocks
    }

    /// Rebuilds parameters from row-major tensor blocks in serialization order.
    pub fn from_tensor_blocks(dim: usize, width: usize, blocks: &[Vec<f64>]) -> Result<Self> {
        let mut p = Self::zeros(dim, width)?;
        let expected: Vec<(usize, usize)> = p
            .tensor_blocks()
            .iter()
            .map(|(r, c, _)| (*r, *c))
            .collect();
        if blocks.len() != expected.len() {
            return Err(Error::Format(format!(
                "expected {} tensors, got {}",
                expected.len(),
                blocks.len()
            )));
        }
        let mut mats: Vec<DMatrix<f64>> = Vec::with_capacity(blocks.len());
        for (block, &(r, c)) in blocks.iter().zip(&expected) {
            if block.len() != r * c {
                return Err(Error::Format(format!(
                    "tensor of {} values does not match shape {r}x{c}",
                    block.len()
                )));
            }
            mats.push(DMatrix::from_row_slice(r, c, block));
        }
        let mut it = mats.into_iter();
        p.w_in = it.next().unwrap();
        p.b_in = DVector::from_column_slice(it.next().unwrap().as_slice());
        for l in &mut p.hidden {
            l.w = it.next().unwrap();
            l.b = DVector::from_column_slice(it.next().unwrap().as_slice());
            l.a = it.next().unwrap();
        }
        p.w_out = it.next().unwrap();
        p.b_out = DVector::from_column_slice(it.next().unwrap().as_slice());
        Ok(p)
    }
}

struct LayerCache {
    pre: DMatrix<f64>,
    input: DMatrix<f64>,
}

struct ForwardCache {
    te: DMatrix<f64>,
    embed: DMatrix<f64>,
    acts: Vec<LayerCache>,
    last: DMatrix<f64>,
}

fn broadcast_add(m: &mut DMatrix<f64>, v: &DVector<f64>) {
    for mut col in m.column_iter_mut() {
        col += v;
    }
}

/// Mean-squared-error loss and its gradients with respect to every tensor.
///
/// `xs` and `targets` are column-major (one sample per column); the loss is
/// the mean over the batch of the squared Euclidean residual.
pub fn net_backward(
    params: &ScoreNetParams,
    ts: &[f64],
    xs: &DMatrix<f64>,
    targets: &DMatrix<f64>,
) -> (f64, ScoreNetGrads) {
    let n = xs.ncols();
    assert_eq!(targets.ncols(), n, "target count mismatch");
    assert_eq!(targets.nrows(), params.dim, "target dimension mismatch");
    let (cache, out) = params.forward_cached(ts, xs);
    let resid = &out - targets;
    let loss = resid.iter().map(|v| v * v).sum::<f64>() / n as f64;

    let d_out = resid * (2.0 / n as f64);
    let g_w_out = &d_out * cache.last.transpose();
    let g_b_out = row_sums(&d_out);

    let mut grads_hidden: Vec<HiddenLayer> = Vec::with_capacity(N_HIDDEN);
    let mut delta = params.w_out.transpose() * &d_out;
    for (layer, lc) in params.hidden.iter().zip(cache.acts.iter()).rev() {
        // relu backward
        let mut d_pre = delta;
        for (dp, &p) in d_pre.iter_mut().zip(lc.pre.iter()) {
            if p <= 0.0 {
                *dp = 0.0;
            }
        }
        grads_hidden.push(HiddenLayer {
            w: &d_pre * lc.input.transpose(),
            b: row_sums(&d_pre),
            a: &d_pre * cache.te.transpose(),
        });
        delta = layer.w.transpose() * &d_pre;
    }
    grads_hidden.reverse();

    let g_w_in = &delta * xs.transpose();
    let g_b_in = row_sums(&delta);
    let _ = cache.embed;

    (
        loss,
        ScoreNetGrads {
            w_in: g_w_in,
            b_in: g_b_in,
            hidden: grads_hidden,
            w_out: g_w_out,
            b_out: g_b_out,
        },
    )
}

fn row_sums(m: &DMatrix<f64>) -> DVector<f64> {
    let mut v = DVector::zeros(m.nrows());
    for col in m.column_iter() {
        v += col;
    }
    v
}

impl ScoreNetGrads {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = vec![self.w_in.as_slice(), self.b_in.as_slice()];
        for l in &self.hidden {
            v.push(l.w.as_slice());
            v.push(l.b.as_slice());
            v.push(l.a.as_slice());
        }
        v.push(self.w_out.as_slice());
        v.push(self.b_out.as_slice());
        v
    }

    pub fn get_flat(&self, mut idx: usize) -> f64 {
        for s in self.tensors() {
            if idx < s.len() {
                return s[idx];
            }
            idx -= s.len();
        }
        panic!("flat index out of range");
    }

    pub fn scale(&mut self, factor: f64) {
        self.w_in.scale_mut(factor);
        self.b_in.scale_mut(factor);
        for l in &mut self.hidden {
            l.w.scale_mut(factor);
            l.b.scale_mut(factor);
            l.a.scale_mut(factor);
        }
        self.w_out.scale_mut(factor);
        self.b_out.scale_mut(factor);
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|s| s.iter())
            .fold(0.0f64, |acc, &v| acc.max(v.abs()))
    }
}

/// Adam with bias correction; β₁ = 0.9, β₂ = 0.999, ε = 1e-8.
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(lr: f64, n_params: usize) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    pub fn update(&mut self, params: &mut ScoreNetParams, grads: &ScoreNetGrads) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let mut offset = 0;
        let g_tensors = grads.tensors();
        let mut g_iter = g_tensors.iter();
        for p in params.tensors_mut() {
            let g = g_iter.next().expect("grad tensor count matches");
            debug_assert_eq!(p.len(), g.len());
            for i in 0..p.len() {
                let gi = g[i];
                let m = &mut self.m[offset + i];
                let v = &mut self.v[offset + i];
                *m = self.beta1 * *m + (1.0 - self.beta1) * gi;
                *v = self.beta2 * *v + (1.0 - self.beta2) * gi * gi;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                p[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
            offset += p.len();
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// Regression on the analytic score (Gaussian targets only).
    Explicit,
    /// Regression on the conditional score `-(X_τ - m_τ X₀)/σ_τ²`.
    Conditional,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub width: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Domain("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Domain("batch size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Domain("learning rate must be > 0".into()));
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss: LossKind::Conditional,
            epochs: 20,
            batch_size: 64,
            learning_rate: 1e-4,
            width: 256,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub params: ScoreNetParams,
    /// Mean training loss per epoch.
    pub epoch_losses: Vec<f64>,
}

fn shuffled_indices(n: usize, seed: u64, epoch: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut r = rng::named(seed, "shuffle", &[epoch]);
    for i in (1..n).rev() {
        let j = r.random_range(0..=i);
        idx.swap(i, j);
    }
    idx
}

/// Trains the score network; data is re-noised with fresh `(τ, Z)` every
/// epoch, `τ ~ U(0, T)` independently per example.
pub fn train(
    target: &Target,
    sched: &Schedule,
    cfg: &TrainConfig,
    n_train: usize,
    data_seed: u64,
) -> Result<TrainResult> {
    cfg.validate()?;
    if n_train == 0 {
        return Err(Error::Domain("n_train must be >= 1".into()));
    }
    let gaussian = match (cfg.loss, target) {
        (LossKind::Explicit, Target::Gaussian(g)) => Some(g.clone()),
        (LossKind::Explicit, _) => {
            return Err(Error::Unsupported(
                "explicit loss needs an analytic-score (Gaussian) target".into(),
            ))
        }
        (LossKind::Conditional, _) => None,
    };
    let d = target.dim();
    let data = target.sample(n_train, data_seed)?;
    let mut params = ScoreNetParams::init(d, cfg.width, cfg.seed)?;
    let mut opt = Adam::new(cfg.learning_rate, params.n_params());
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let order = shuffled_indices(n_train, cfg.seed, epoch as u64);
        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let b = chunk.len();
            let mut ts = Vec::with_capacity(b);
            let mut xs = DMatrix::zeros(d, b);
            let mut targets = DMatrix::zeros(d, b);
            for (c, &i) in chunk.iter().enumerate() {
                let mut r = rng::named(cfg.seed, "noise", &[epoch as u64, i as u64]);
                let tau: f64 = r.random::<f64>() * sched.horizon;
                let (m, sig2) = sched.m_sigma(tau)?;
                let sig = sig2.sqrt();
                let x0 = data.row_vec(i);
                let z = DVector::from_fn(d, |_, _| r.sample::<f64, _>(StandardNormal));
                let xt = &x0 * m + &z * sig;
                match &gaussian {
                    Some(g) => targets.set_column(c, &g.score(sched, tau, &xt)?),
                    None => targets.set_column(c, &(-&z / sig)),
                }
                xs.set_column(c, &xt);
                ts.push(tau);
            }
            let (loss, grads) = net_backward(&params, &ts, &xs, &targets);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch });
            }
            opt.update(&mut params, &grads);
            epoch_loss += loss * b as f64;
            seen += b;
        }
        epoch_losses.push(epoch_loss / seen as f64);
    }
    Ok(TrainResult { params, epoch_losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_weights_give_zero_output() {
        let p = ScoreNetParams::zeros(3, 8).unwrap();
        let x = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        assert!(p.forward(0.3, &x).amax() == 0.0);
    }

    #[test]
    fn forward_is_pure() {
        let p = ScoreNetParams::init(2, 8, 42).unwrap();
        let x = DVector::from_vec(vec![0.7, -0.3]);
        let a = p.forward(0.5, &x);
        let b = p.forward(0.5, &x);
        assert_eq!(a, b);
    }

    #[test]
    fn output_bias_shifts_exactly_one_coordinate() {
        let mut p = ScoreNetParams::init(3, 8, 1).unwrap();
        let x = DVector::from_vec(vec![0.1, 0.2, 0.3]);
        let before = p.forward(0.2, &x);
        let n = p.n_params();
        // the last d entries of the flat layout are the output bias
        let idx = n - 3 + 1;
        p.set_flat(idx, p.get_flat(idx) + 0.25);
        let after = p.forward(0.2, &x);
        assert_abs_diff_eq!(after[1] - before[1], 0.25, epsilon = 1e-15);
        assert_eq!(after[0], before[0]);
        assert_eq!(after[2], before[2]);
    }

    #[test]
    fn rows_and_cols_paths_agree() {
        let p = ScoreNetParams::init(3, 8, 5).unwrap();
        let xs = DMatrix::from_row_slice(2, 3, &[0.1, 0.2, 0.3, -0.4, 0.5, -0.6]);
        let by_rows = p.forward_rows(0.7, &xs);
        for i in 0..2 {
            let single = p.forward(0.7, &xs.row(i).transpose());
            for j in 0..3 {
                assert_abs_diff_eq!(by_rows[(i, j)], single[j], epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let p = ScoreNetParams::init(2, 8, 3).unwrap();
        let n_batch = 5;
        let mut r = rng::named(4, "fd-test", &[]);
        let ts: Vec<f64> = (0..n_batch).map(|_| r.random::<f64>()).collect();
        let xs = DMatrix::from_fn(2, n_batch, |_, _| r.sample::<f64, _>(StandardNormal));
        let targets = DMatrix::from_fn(2, n_batch, |_, _| r.sample::<f64, _>(StandardNormal));
        let (_, grads) = net_backward(&p, &ts, &xs, &targets);

        let n = p.n_params();
        let h = 1e-5;
        for trial in 0..50 {
            let idx = (rng::named(5, "fd-pick", &[trial]).random::<u64>() as usize) % n;
            let mut plus = p.clone();
            plus.set_flat(idx, p.get_flat(idx) + h);
            let mut minus = p.clone();
            minus.set_flat(idx, p.get_flat(idx) - h);
            let (lp, _) = net_backward(&plus, &ts, &xs, &targets);
            let (lm, _) = net_backward(&minus, &ts, &xs, &targets);
            let fd = (lp - lm) / (2.0 * h);
            let an = grads.get_flat(idx);
            let denom = fd.abs().max(an.abs()).max(1e-8);
            assert!(
                (fd - an).abs() / denom <= 1e-4,
                "param {idx}: fd {fd} vs analytic {an}"
            );
        }
    }

    #[test]
    fn zero_residuals_give_zero_gradients() {
        let p = ScoreNetParams::init(2, 8, 6).unwrap();
        let ts = vec![0.2, 0.9];
        let xs = DMatrix::from_row_slice(2, 2, &[0.3, -0.7, 1.1, 0.2]);
        let targets = p.forward_cols(&ts, &xs);
        let (loss, grads) = net_backward(&p, &ts, &xs, &targets);
        assert_abs_diff_eq!(loss, 0.0, epsilon = 1e-24);
        assert_abs_diff_eq!(grads.max_abs(), 0.0, epsilon = 1e-18);
    }

    #[test]
    fn doubling_residuals_doubles_gradients() {
        let p = ScoreNetParams::init(2, 8, 7).unwrap();
        let ts = vec![0.4];
        let xs = DMatrix::from_column_slice(2, 1, &[0.5, -0.5]);
        let out = p.forward_cols(&ts, &xs);
        let resid = DMatrix::from_column_slice(2, 1, &[0.3, -0.1]);
        let t1 = &out - &resid;
        let t2 = &out - &resid * 2.0;
        let (_, g1) = net_backward(&p, &ts, &xs, &t1);
        let (_, g2) = net_backward(&p, &ts, &xs, &t2);
        for idx in [0usize, 5, 40, p.n_params() - 1] {
            assert_abs_diff_eq!(g2.get_flat(idx), 2.0 * g1.get_flat(idx), epsilon = 1e-12);
        }
    }

    #[test]
    fn tau_draws_are_uniform() {
        // KS statistic against U(0,1) below the 1% critical value on 1e4 draws
        let n = 10_000;
        let mut taus: Vec<f64> = (0..n)
            .map(|i| rng::named(0, "noise", &[0, i as u64]).random::<f64>())
            .collect();
        taus.sort_by(f64::total_cmp);
        let mut ks: f64 = 0.0;
        for (i, &t) in taus.iter().enumerate() {
            let ecdf_hi = (i + 1) as f64 / n as f64;
            let ecdf_lo = i as f64 / n as f64;
            ks = ks.max((ecdf_hi - t).abs()).max((t - ecdf_lo).abs());
        }
        let critical = 1.63 / (n as f64).sqrt();
        assert!(ks < critical, "KS {ks} >= {critical}");
    }

    #[test]
    fn training_losses_decrease_on_iso_task() {
        let target = Target::iso(5).unwrap();
        let sched = Schedule::standard_parametric(0.0);
        let cfg = TrainConfig {
            loss: LossKind::Explicit,
            epochs: 20,
            batch_size: 64,
            learning_rate: 1e-4,
            width: 64,
            seed: 1,
        };
        let result = train(&target, &sched, &cfg, 2000, 2).unwrap();
        let losses = &result.epoch_losses;
        assert!(losses.last().unwrap() < losses.first().unwrap());
        let q = losses.len() / 4;
        let median = |s: &[f64]| {
            let mut v = s.to_vec();
            v.sort_by(f64::total_cmp);
            v[v.len() / 2]
        };
        assert!(median(&losses[losses.len() - q..]) < median(&losses[..q]));
    }

    #[test]
    fn training_is_deterministic() {
        let target = Target::iso(2).unwrap();
        let sched = Schedule::standard_parametric(0.0);
        let cfg = TrainConfig {
            loss: LossKind::Conditional,
            epochs: 2,
            batch_size: 16,
            learning_rate: 1e-3,
            width: 8,
            seed: 9,
        };
        let a = train(&target, &sched, &cfg, 64, 3).unwrap();
        let b = train(&target, &sched, &cfg, 64, 3).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.epoch_losses, b.epoch_losses);
    }

    #[test]
    fn explicit_loss_requires_gaussian_target() {
        let target = Target::funnel(3).unwrap();
        let sched = Schedule::standard_parametric(0.0);
        let cfg = TrainConfig { loss: LossKind::Explicit, epochs: 1, ..Default::default() };
        assert!(matches!(
            train(&target, &sched, &cfg, 16, 0),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn loss_gap_between_objectives_is_parameter_free() {
        // the gap L_score - L_explicit equals E||conditional - explicit||²,
        // independent of θ; check with common random numbers across two
        // independent parameter settings
        let target = Target::iso(2).unwrap();
        let g = target.as_gaussian().unwrap();
        let sched = Schedule::standard_parametric(0.0);
        let n = 100_000;
        let data = target.sample(n, 8).unwrap();

        let mut ts = Vec::with_capacity(n);
        let mut xs = DMatrix::zeros(2, n);
        let mut explicit_t = DMatrix::zeros(2, n);
        let mut conditional_t = DMatrix::zeros(2, n);
        for i in 0..n {
            let mut r = rng::named(13, "gap-noise", &[i as u64]);
            let tau: f64 = r.random::<f64>();
            let (m, sig2) = sched.m_sigma(tau).unwrap();
            let sig = sig2.sqrt().max(1e-8);
            let x0 = data.row_vec(i);
            let z = DVector::from_fn(2, |_, _| r.sample::<f64, _>(StandardNormal));
            let xt = &x0 * m + &z * sig;
            explicit_t.set_column(i, &g.score(&sched, tau, &xt).unwrap());
            conditional_t.set_column(i, &(-&z / sig));
            xs.set_column(i, &xt);
            ts.push(tau);
        }

        let gap_samples = |params: &ScoreNetParams| -> Vec<f64> {
            let out = params.forward_cols(&ts, &xs);
            (0..n)
                .map(|i| {
                    let s = out.column(i);
                    let c = (s - conditional_t.column(i)).norm_squared();
                    let e = (s - explicit_t.column(i)).norm_squared();
                    c - e
                })
                .collect()
        };
        let p1 = ScoreNetParams::init(2, 16, 100).unwrap();
        let p2 = ScoreNetParams::init(2, 16, 200).unwrap();
        let g1 = gap_samples(&p1);
        let g2 = gap_samples(&p2);
        let diffs: Vec<f64> = g1.iter().zip(&g2).map(|(a, b)| a - b).collect();
        let mean = diffs.iter().sum::<f64>() / n as f64;
        let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n as f64 - 1.0);
        let se = (var / n as f64).sqrt();
        assert!(mean.abs() <= 3.0 * se, "gap difference {mean} exceeds 3 x {se}");
    }
}
