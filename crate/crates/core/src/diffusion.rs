//! Exact forward sampling and discretized backward sampling.
//!
//! The backward samplers run on an internal clock `t ∈ [0, T]` with
//! `β̄(t) = β(T - t)`; grids are stated in backward time. Per-step noise is
//! drawn from a counter-based stream keyed by `(seed, particle, step)`, so
//! trajectories are independent of evaluation order and thread count.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::schedules::Schedule;
use crate::scorenet::ScoreNetParams;
use crate::targets::{GaussianTarget, Target};

/// Coordinates above this magnitude abort the backward pass.
pub const DIVERGENCE_GUARD: f64 = 1e8;

/// Uniform grid `t_k = k T / N` for `k = 0..N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    n_steps: usize,
    horizon: f64,
}

impl TimeGrid {
    pub fn new(n_steps: usize, horizon: f64) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::Domain("grid needs at least one step".into()));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Domain(format!("horizon must be positive, got {horizon}")));
        }
        Ok(TimeGrid { n_steps, horizon })
    }

    pub fn steps(&self) -> usize {
        self.n_steps
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn h(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        debug_assert!(k <= self.n_steps);
        self.horizon * k as f64 / self.n_steps as f64
    }
}

/// Provenance of a sample batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Stage {
    /// Draws from the data distribution itself.
    Data,
    /// Forward-process marginals at time `t`.
    Forward { t: f64 },
    /// Output of a backward sampler.
    Generated,
}

/// An `n x d` matrix of samples with seed and provenance metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    data: DMatrix<f64>,
    seed: u64,
    stage: Stage,
}

impl SampleBatch {
    pub fn new(data: DMatrix<f64>, seed: u64, stage: Stage) -> Self {
        debug_assert!(data.nrows() >= 1);
        SampleBatch { data, seed, stage }
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_data(self) -> DMatrix<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn row_vec(&self, i: usize) -> DVector<f64> {
        self.data.row(i).transpose()
    }

    /// Column means.
    pub fn mean(&self) -> DVector<f64> {
        let n = self.len() as f64;
        DVector::from_iterator(self.dim(), self.data.column_iter().map(|c| c.sum() / n))
    }
}

/// Anything that evaluates the modified score `s̃(t, x)` at forward time `t`.
pub trait ModifiedScore {
    fn dim(&self) -> usize;

    /// Batched evaluation on row-major samples; the row layout of the output
    /// matches the input.
    fn modified_rows(&self, t: f64, xs: &DMatrix<f64>) -> Result<DMatrix<f64>>;

    fn modified(&self, t: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
        let out = self.modified_rows(t, &DMatrix::from_rows(&[x.transpose()]))?;
        Ok(out.row(0).transpose())
    }
}

/// The three score sources used by the samplers and bound estimators.
#[derive(Debug, Clone)]
pub enum ScoreSource {
    /// Exact Gaussian score from the target's closed form.
    AnalyticGaussian { target: GaussianTarget, sched: Schedule },
    /// Trained score network; `s̃_θ = s_θ + x/σ²`.
    Learned { params: ScoreNetParams, sigma2: f64 },
    /// `s̃ = 0`, the stationary case.
    ZeroModified { dim: usize, sigma2: f64 },
}

impl ScoreSource {
    pub fn sigma2(&self) -> f64 {
        match self {
            ScoreSource::AnalyticGaussian { sched, .. } => sched.sigma2,
            ScoreSource::Learned { sigma2, .. } => *sigma2,
            ScoreSource::ZeroModified { sigma2, .. } => *sigma2,
        }
    }

    /// Raw score `∇ log p_t = s̃ - x/σ²` for row-major samples.
    pub fn raw_rows(&self, t: f64, xs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut out = self.modified_rows(t, xs)?;
        out -= xs / self.sigma2();
        Ok(out)
    }
}

impl ModifiedScore for ScoreSource {
    fn dim(&self) -> usize {
        match self {
            ScoreSource::AnalyticGaussian { target, .. } => target.dim(),
            ScoreSource::Learned { params, .. } => params.dim(),
            ScoreSource::ZeroModified { dim, .. } => *dim,
        }
    }

    fn modified_rows(&self, t: f64, xs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match self {
            ScoreSource::AnalyticGaussian { target, sched } => {
                let mut s = target.score_rows(sched, t, xs)?;
                s += xs / sched.sigma2;
                Ok(s)
            }
            ScoreSource::Learned { params, sigma2 } => {
                let mut s = params.forward_rows(t, xs);
                s += xs / *sigma2;
                Ok(s)
            }
            ScoreSource::ZeroModified { .. } => Ok(DMatrix::zeros(xs.nrows(), xs.ncols())),
        }
    }
}

fn noise_row(seed: u64, particle: usize, step: u64, d: usize) -> DVector<f64> {
    let mut r = rng::stream(seed, &[rng::name_tag("backward-noise"), particle as u64, step]);
    DVector::from_fn(d, |_, _| r.sample(StandardNormal))
}

fn init_stationary(n: usize, d: usize, sigma2: f64, seed: u64) -> DMatrix<f64> {
    let sd = sigma2.sqrt();
    let mut x = DMatrix::zeros(n, d);
    for i in 0..n {
        let mut r = rng::named(seed, "backward-init", &[i as u64]);
        for j in 0..d {
            x[(i, j)] = sd * r.sample::<f64, _>(StandardNormal);
        }
    }
    x
}

fn guard(x: &DMatrix<f64>, step: usize) -> Result<()> {
    for v in x.iter() {
        if !v.is_finite() || v.abs() > DIVERGENCE_GUARD {
            return Err(Error::Divergence { step });
        }
    }
    Ok(())
}

/// Backward discretization scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Em,
    Ei,
}

/// Runs the chosen backward scheme.
pub fn generate<S: ModifiedScore>(
    scheme: Scheme,
    score: &S,
    sched: &Schedule,
    grid: &TimeGrid,
    n: usize,
    seed: u64,
) -> Result<SampleBatch> {
    match scheme {
        Scheme::Em => backward_em(score, sched, grid, n, seed),
        Scheme::Ei => backward_ei(score, sched, grid, n, seed),
    }
}

/// Exact draw from the forward marginal `p_t`: `X_t = m_t X₀ + σ_t Z`.
pub fn forward_exact(
    target: &Target,
    sched: &Schedule,
    t: f64,
    n: usize,
    seed: u64,
) -> Result<SampleBatch> {
    let (m, sig2_t) = sched.m_sigma(t)?;
    let base = target.sample(n, seed)?;
    let d = base.dim();
    let sd = sig2_t.sqrt();
    let mut data = base.into_data();
    data.scale_mut(m);
    if sd > 0.0 {
        for i in 0..n {
            let mut r = rng::named(seed, "forward-noise", &[i as u64]);
            for j in 0..d {
                data[(i, j)] += sd * r.sample::<f64, _>(StandardNormal);
            }
        }
    }
    Ok(SampleBatch::new(data, seed, Stage::Forward { t }))
}

/// Euler-Maruyama discretization of the backward SDE, left-endpoint β̄ and
/// modified-score drift.
pub fn backward_em<S: ModifiedScore>(
    score: &S,
    sched: &Schedule,
    grid: &TimeGrid,
    n: usize,
    seed: u64,
) -> Result<SampleBatch> {
    if (grid.horizon() - sched.horizon).abs() > 1e-12 {
        return Err(Error::Domain("grid horizon differs from schedule horizon".into()));
    }
    let d = score.dim();
    let s2 = sched.sigma2;
    let h = grid.h();
    let mut x = init_stationary(n, d, s2, seed);
    for k in 0..grid.steps() {
        let tau = sched.horizon - grid.node(k); // forward time of this step
        let beta_bar = sched.beta(tau)?;
        let stilde = score.modified_rows(tau, &x)?;
        let noise_sd = (beta_bar * h).sqrt();
        for i in 0..n {
            let z = noise_row(seed, i, k as u64, d);
            for j in 0..d {
                let drift = beta_bar * (stilde[(i, j)] - x[(i, j)] / (2.0 * s2));
                x[(i, j)] += h * drift + noise_sd * z[j];
            }
        }
        guard(&x, k)?;
    }
    Ok(SampleBatch::new(x, seed, Stage::Generated))
}

/// Exponential-integrator discretization: the linear part is integrated
/// exactly over each cell, only the score is frozen at the left endpoint.
pub fn backward_ei<S: ModifiedScore>(
    score: &S,
    sched: &Schedule,
    grid: &TimeGrid,
    n: usize,
    seed: u64,
) -> Result<SampleBatch> {
    if (grid.horizon() - sched.horizon).abs() > 1e-12 {
        return Err(Error::Domain("grid horizon differs from schedule horizon".into()));
    }
    let d = score.dim();
    let s2 = sched.sigma2;
    let mut x = init_stationary(n, d, s2, seed);
    for k in 0..grid.steps() {
        let tau_hi = sched.horizon - grid.node(k);
        let tau_lo = sched.horizon - grid.node(k + 1);
        let cell = sched.beta_integral(tau_lo, tau_hi)?;
        let decay = (-cell / (2.0 * s2)).exp();
        let drift_gain = 2.0 * s2 * (1.0 - decay);
        let noise_sd = (s2 * (-decay).mul_add(decay, 1.0)).sqrt();
        let stilde = score.modified_rows(tau_hi, &x)?;
        for i in 0..n {
            let z = noise_row(seed, i, k as u64, d);
            for j in 0..d {
                x[(i, j)] = decay * x[(i, j)] + drift_gain * stilde[(i, j)] + noise_sd * z[j];
            }
        }
        guard(&x, k)?;
    }
    Ok(SampleBatch::new(x, seed, Stage::Generated))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn iso_target(d: usize) -> Target {
        Target::iso(d).unwrap()
    }

    #[test]
    fn grid_nodes() {
        let g = TimeGrid::new(4, 1.0).unwrap();
        assert_eq!(g.node(0), 0.0);
        assert_eq!(g.node(4), 1.0);
        assert_eq!(g.h(), 0.25);
        assert!(TimeGrid::new(0, 1.0).is_err());
    }

    #[test]
    fn forward_at_zero_returns_target_samples() {
        let t = iso_target(3);
        let sched = Schedule::standard_parametric(0.0);
        let fwd = forward_exact(&t, &sched, 0.0, 50, 9).unwrap();
        let base = t.sample(50, 9).unwrap();
        assert_eq!(fwd.data(), base.data());
    }

    #[test]
    fn forward_mean_matches_decay() {
        let t = iso_target(4);
        let sched = Schedule::standard_parametric(0.0);
        let n = 40_000;
        for tt in [0.25, 0.75] {
            let (m, sig2) = sched.m_sigma(tt).unwrap();
            let batch = forward_exact(&t, &sched, tt, n, 3).unwrap();
            let tol = 3.0 * (m * m * 0.5 + sig2).sqrt() / (n as f64).sqrt();
            for j in 0..4 {
                let mean = batch.data().column(j).sum() / n as f64;
                assert!((mean - m).abs() < tol, "t={tt} coord {j}: {mean} vs {m}");
            }
        }
    }

    #[test]
    fn forward_preserves_stationary_law() {
        let t = Target::Gaussian(GaussianTarget::stationary(5, 1.0));
        let sched = Schedule::standard_parametric(0.0);
        let n = 100_000;
        let batch = forward_exact(&t, &sched, 0.6, n, 21).unwrap();
        for j in 0..5 {
            let col = batch.data().column(j);
            let mean = col.sum() / n as f64;
            let var = col.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
            assert!((var - 1.0).abs() < 0.05, "coord {j} var {var}");
        }
    }

    #[test]
    fn em_zero_score_preserves_mean() {
        let sched = Schedule::standard_parametric(0.0);
        let grid = TimeGrid::new(200, 1.0).unwrap();
        let score = ScoreSource::ZeroModified { dim: 4, sigma2: 1.0 };
        let n = 20_000;
        let out = backward_em(&score, &sched, &grid, n, 5).unwrap();
        let pooled = out.data().sum() / (n * 4) as f64;
        assert!(pooled.abs() < 3.0 / ((n * 4) as f64).sqrt(), "pooled mean {pooled}");
    }

    #[test]
    fn ei_zero_score_is_exactly_stationary() {
        let sched = Schedule::standard_parametric(3.0);
        let n = 50_000;
        for steps in [1usize, 50] {
            let grid = TimeGrid::new(steps, 1.0).unwrap();
            let score = ScoreSource::ZeroModified { dim: 3, sigma2: 1.0 };
            let out = backward_ei(&score, &sched, &grid, n, 7).unwrap();
            for j in 0..3 {
                let col = out.data().column(j);
                let mean = col.sum() / n as f64;
                let var =
                    col.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
                assert!(mean.abs() < 3.0 / (n as f64).sqrt() * 1.5, "mean {mean}");
                assert!((var - 1.0).abs() < 0.03, "steps {steps} coord {j} var {var}");
            }
        }
    }

    #[test]
    fn single_step_em_with_exact_score_is_finite() {
        let t = iso_target(2);
        let sched = Schedule::standard_parametric(0.0);
        let grid = TimeGrid::new(1, 1.0).unwrap();
        let score = ScoreSource::AnalyticGaussian {
            target: t.as_gaussian().unwrap().clone(),
            sched,
        };
        let out = backward_em(&score, &sched, &grid, 100, 2).unwrap();
        assert!(out.data().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn seed_determinism_across_thread_counts() {
        let t = iso_target(3);
        let sched = Schedule::standard_parametric(1.0);
        let grid = TimeGrid::new(50, 1.0).unwrap();
        let score = ScoreSource::AnalyticGaussian {
            target: t.as_gaussian().unwrap().clone(),
            sched,
        };
        let a = backward_ei(&score, &sched, &grid, 500, 4).unwrap();
        let b = backward_ei(&score, &sched, &grid, 500, 4).unwrap();
        assert_eq!(a.data(), b.data());

        let pool = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let c = pool.install(|| backward_ei(&score, &sched, &grid, 500, 4).unwrap());
        assert_eq!(a.data(), c.data());

        let different = backward_ei(&score, &sched, &grid, 500, 5).unwrap();
        assert_ne!(a.data(), different.data());
    }

    #[test]
    fn divergence_guard_reports_step() {
        // a hand-rolled score that pushes the state to infinity
        struct Explode;
        impl ModifiedScore for Explode {
            fn dim(&self) -> usize {
                1
            }
            fn modified_rows(&self, _t: f64, xs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
                Ok(DMatrix::from_element(xs.nrows(), xs.ncols(), 1e12))
            }
        }
        let sched = Schedule::standard_parametric(0.0);
        let grid = TimeGrid::new(10, 1.0).unwrap();
        let err = backward_em(&Explode, &sched, &grid, 3, 1).unwrap_err();
        match err {
            Error::Divergence { step } => assert_eq!(step, 0),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn em_and_ei_agree_on_fine_grids() {
        let t = iso_target(3);
        let g = t.as_gaussian().unwrap().clone();
        let sched = Schedule::standard_parametric(0.0);
        let grid = TimeGrid::new(800, 1.0).unwrap();
        let score = ScoreSource::AnalyticGaussian { target: g.clone(), sched };
        let n = 4000;
        let em = backward_em(&score, &sched, &grid, n, 11).unwrap();
        let ei = backward_ei(&score, &sched, &grid, n, 11).unwrap();
        let mean_gap = (em.mean() - ei.mean()).amax();
        assert!(mean_gap < 0.05, "mean gap {mean_gap}");
        let (kl_em, _) = crate::targets::closed_form_divergences(
            &crate::metrics::fit_gaussian(&em).unwrap(),
            &g,
        )
        .unwrap();
        let (kl_ei, _) = crate::targets::closed_form_divergences(
            &crate::metrics::fit_gaussian(&ei).unwrap(),
            &g,
        )
        .unwrap();
        assert!(kl_em < 0.05, "kl_em {kl_em}");
        assert!(kl_ei < 0.05, "kl_ei {kl_ei}");
        assert_relative_eq!(kl_em, kl_ei, max_relative = 1.0);
    }
}
