//! Empirical divergence estimators between sample sets and analytic targets.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::diffusion::SampleBatch;
use crate::error::{Error, Result};
use crate::rng;
use crate::targets::{closed_form_divergences, GaussianTarget, Target};

/// Distance floor guarding the k-NN estimator against duplicate points.
pub const KNN_DISTANCE_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricName {
    GaussKl,
    GaussW2,
    SlicedW2,
    KnnKl,
    Nll,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MetricParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub projections: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// Number of neighbor distances clamped by [`KNN_DISTANCE_FLOOR`].
    #[serde(skip_serializing_if = "Option::is_none")]
    pub floor_hits: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub name: MetricName,
    pub value: f64,
    pub n_used: usize,
    pub params: MetricParams,
}

/// Sample mean and unbiased sample covariance, symmetrized.
pub fn fit_gaussian(batch: &SampleBatch) -> Result<GaussianTarget> {
    let n = batch.len();
    let d = batch.dim();
    if n <= d {
        return Err(Error::Domain(format!("need n > d samples to fit, got n={n}, d={d}")));
    }
    let mean = batch.mean();
    let data = batch.data();
    let mut cov = DMatrix::zeros(d, d);
    for i in 0..n {
        let centered = data.row(i).transpose() - &mean;
        cov.ger(1.0, &centered, &centered, 1.0);
    }
    cov /= (n - 1) as f64;
    let cov = (&cov + cov.transpose()) * 0.5;
    GaussianTarget::new(mean, cov)
}

/// Closed-form `(KL(target‖fit), W2(target, fit))` against the fitted
/// Gaussian of a batch.
pub fn gauss_divergences(
    reference: &GaussianTarget,
    batch: &SampleBatch,
) -> Result<(f64, f64)> {
    let fitted = fit_gaussian(batch)?;
    closed_form_divergences(reference, &fitted)
}

fn subsample(data: &DMatrix<f64>, n_keep: usize, seed: u64) -> DMatrix<f64> {
    let n = data.nrows();
    if n_keep >= n {
        return data.clone();
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut r = rng::named(seed, "subsample", &[]);
    for i in 0..n_keep {
        let j = i + r.random_range(0..(n - i));
        idx.swap(i, j);
    }
    let mut out = DMatrix::zeros(n_keep, data.ncols());
    for (row, &i) in idx[..n_keep].iter().enumerate() {
        out.row_mut(row).copy_from(&data.row(i));
    }
    out
}

/// Sliced 2-Wasserstein distance: the root of the mean over random unit
/// directions of the squared 1-D Wasserstein distance between sorted
/// projections. Unequal batch sizes are reconciled by seeded subsampling of
/// the larger batch.
pub fn sliced_w2(
    batch_a: &SampleBatch,
    batch_b: &SampleBatch,
    n_proj: usize,
    seed: u64,
) -> Result<f64> {
    if batch_a.dim() != batch_b.dim() {
        return Err(Error::Domain(format!(
            "dimension mismatch: {} vs {}",
            batch_a.dim(),
            batch_b.dim()
        )));
    }
    if n_proj == 0 {
        return Err(Error::Domain("need at least one projection".into()));
    }
    let d = batch_a.dim();
    let n = batch_a.len().min(batch_b.len());
    let a = subsample(batch_a.data(), n, seed);
    let b = subsample(batch_b.data(), n, seed);

    let mut acc = 0.0;
    for l in 0..n_proj {
        let mut r = rng::named(seed, "proj", &[l as u64]);
        let mut dir = DVector::from_fn(d, |_, _| r.sample::<f64, _>(StandardNormal));
        let norm = dir.norm();
        if norm > 0.0 {
            dir /= norm;
        } else {
            dir[0] = 1.0;
        }
        let mut pa: Vec<f64> = (&a * &dir).iter().copied().collect();
        let mut pb: Vec<f64> = (&b * &dir).iter().copied().collect();
        pa.sort_by(f64::total_cmp);
        pb.sort_by(f64::total_cmp);
        let w2_sq: f64 =
            pa.iter().zip(&pb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n as f64;
        acc += w2_sq;
    }
    Ok((acc / n_proj as f64).sqrt())
}

/// Default neighbor count `⌈√d⌉` for the k-NN KL estimator.
pub fn knn_default_k(d: usize) -> usize {
    (d as f64).sqrt().ceil() as usize
}

fn kth_smallest(mut dists: Vec<f64>, k: usize) -> f64 {
    let idx = k - 1;
    dists.select_nth_unstable_by(idx, f64::total_cmp);
    dists[idx]
}

/// k-NN Kullback-Leibler estimate of `KL(P‖Q)` from samples, with the
/// `log(m/(n-1))` bias correction. Returns the estimate and the number of
/// distances clamped by the floor.
pub fn knn_kl_detailed(
    batch_p: &SampleBatch,
    batch_q: &SampleBatch,
    k: usize,
) -> Result<(f64, usize)> {
    if batch_p.dim() != batch_q.dim() {
        return Err(Error::Domain("dimension mismatch".into()));
    }
    let n = batch_p.len();
    let m = batch_q.len();
    if k == 0 || n < k + 1 || m < k + 1 {
        return Err(Error::Domain(format!(
            "need both batches >= k+1 points (k={k}, n={n}, m={m})"
        )));
    }
    let d = batch_p.dim() as f64;
    let p = batch_p.data();
    let q = batch_q.data();
    let mut floor_hits = 0usize;
    let mut acc = 0.0;
    for i in 0..n {
        let xi = p.row(i);
        let mut dp = Vec::with_capacity(n - 1);
        for j in 0..n {
            if j != i {
                dp.push((xi - p.row(j)).norm());
            }
        }
        let mut rho = kth_smallest(dp, k);
        if rho < KNN_DISTANCE_FLOOR {
            rho = KNN_DISTANCE_FLOOR;
            floor_hits += 1;
        }
        let mut dq = Vec::with_capacity(m);
        for j in 0..m {
            dq.push((xi - q.row(j)).norm());
        }
        let mut nu = kth_smallest(dq, k);
        if nu < KNN_DISTANCE_FLOOR {
            nu = KNN_DISTANCE_FLOOR;
            floor_hits += 1;
        }
        acc += (nu / rho).ln();
    }
    let value = d * acc / n as f64 + (m as f64 / (n as f64 - 1.0)).ln();
    Ok((value, floor_hits))
}

pub fn knn_kl(batch_p: &SampleBatch, batch_q: &SampleBatch, k: usize) -> Result<f64> {
    knn_kl_detailed(batch_p, batch_q, k).map(|(v, _)| v)
}

/// Mean negative log density of the batch under the target.
pub fn nll(target: &Target, batch: &SampleBatch) -> Result<f64> {
    let mut acc = 0.0;
    for i in 0..batch.len() {
        acc -= target.log_density(&batch.row_vec(i))?;
    }
    Ok(acc / batch.len() as f64)
}
