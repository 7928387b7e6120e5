//! Standardize-and-rescale preprocessing and the bound transfer back to the
//! original scale.
//!
//! `X_scale = κ D^{-1} (X - μ)` with `D = diag(σ_1, ..., σ_d)` the
//! per-coordinate standard deviations and `κ = 1/sqrt(2 λ_max(Σ_stand))`
//! computed on the standardized (correlation) covariance, so the transformed
//! covariance has `λ_max = 1/2 < σ² = 1`.

use serde::{Deserialize, Serialize};

use crate::diffusion::{SampleBatch, Stage};
use crate::error::{Error, Result};
use crate::metrics::fit_gaussian;
use crate::targets::sym_eigen;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessTransform {
    /// Per-coordinate means of the fitting batch.
    pub mu: Vec<f64>,
    /// Per-coordinate standard deviations (the diagonal of `D`).
    pub d_scale: Vec<f64>,
    /// Shrink factor `1/sqrt(2 λ_max(Σ_stand))`.
    pub kappa: f64,
}

impl PreprocessTransform {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// Applies the forward map to a batch.
    pub fn apply(&self, batch: &SampleBatch) -> Result<SampleBatch> {
        if batch.dim() != self.dim() {
            return Err(Error::Domain("transform dimension mismatch".into()));
        }
        let mut data = batch.data().clone();
        for j in 0..self.dim() {
            let mut col = data.column_mut(j);
            for v in col.iter_mut() {
                *v = self.kappa * (*v - self.mu[j]) / self.d_scale[j];
            }
        }
        Ok(SampleBatch::new(data, batch.seed(), batch.stage()))
    }

    /// Exact inverse map `y = D x / κ + μ`.
    pub fn inverse(&self, batch: &SampleBatch) -> Result<SampleBatch> {
        if batch.dim() != self.dim() {
            return Err(Error::Domain("transform dimension mismatch".into()));
        }
        let mut data = batch.data().clone();
        for j in 0..self.dim() {
            let mut col = data.column_mut(j);
            for v in col.iter_mut() {
                *v = *v * self.d_scale[j] / self.kappa + self.mu[j];
            }
        }
        Ok(SampleBatch::new(data, batch.seed(), batch.stage()))
    }

    /// Transfers a W2 upper bound computed on the rescaled pair to the
    /// original scale: `W2 ≤ (max_j σ_j / κ) · W2_scaled`.
    pub fn transfer_bound(&self, w2_scaled: f64) -> Result<f64> {
        if w2_scaled < 0.0 {
            return Err(Error::Domain(format!("W2 value must be >= 0, got {w2_scaled}")));
        }
        let max_scale = self.d_scale.iter().copied().fold(0.0f64, f64::max);
        Ok(max_scale / self.kappa * w2_scaled)
    }
}

/// Fits the transform to a batch and returns it with the transformed samples.
pub fn fit_transform(batch: &SampleBatch) -> Result<(PreprocessTransform, SampleBatch)> {
    let n = batch.len();
    let d = batch.dim();
    if n <= d {
        return Err(Error::Domain(format!("need n > d samples, got n={n}, d={d}")));
    }
    let data = batch.data();
    let mut mu = Vec::with_capacity(d);
    let mut d_scale = Vec::with_capacity(d);
    for j in 0..d {
        let col = data.column(j);
        let mean = col.sum() / n as f64;
        let var = col.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
        if var <= 0.0 {
            return Err(Error::Singular(format!("coordinate {j} has zero variance")));
        }
        mu.push(mean);
        d_scale.push(var.sqrt());
    }

    // covariance of the standardized batch = correlation matrix
    let mut standardized = data.clone();
    for j in 0..d {
        let mut col = standardized.column_mut(j);
        for v in col.iter_mut() {
            *v = (*v - mu[j]) / d_scale[j];
        }
    }
    let stand_batch = SampleBatch::new(standardized, batch.seed(), batch.stage());
    let corr = fit_gaussian(&stand_batch)?;
    let lam_max = corr.lambda_max();
    let kappa = 1.0 / (2.0 * lam_max).sqrt();

    let mut scaled = stand_batch.into_data();
    scaled.scale_mut(kappa);
    let transform = PreprocessTransform { mu, d_scale, kappa };
    Ok((transform, SampleBatch::new(scaled, batch.seed(), Stage::Data)))
}

/// `λ_max` of the empirical covariance of a batch (validation helper).
pub fn covariance_lambda_max(batch: &SampleBatch) -> Result<f64> {
    let fitted = fit_gaussian(batch)?;
    let (evals, _) = sym_eigen(fitted.sigma());
    Ok(evals[evals.len() - 1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::{GaussianTarget, Target};
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn standard_normal_case() {
        let g = GaussianTarget::stationary(4, 1.0);
        let batch = g.sample(50_000, 1).unwrap();
        let (tr, scaled) = fit_transform(&batch).unwrap();
        for j in 0..4 {
            assert!((tr.d_scale[j] - 1.0).abs() < 0.03);
            assert!(tr.mu[j].abs() < 0.03);
        }
        assert!((tr.kappa - 1.0 / 2.0f64.sqrt()).abs() < 0.02);
        let fitted = fit_gaussian(&scaled).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expected = if i == j { 0.5 } else { 0.0 };
                assert!((fitted.sigma()[(i, j)] - expected).abs() < 0.03);
            }
        }
    }

    #[test]
    fn heteroscedastic_scaling_equalizes_spectrum() {
        // sample-eigenvalue spread scales like sqrt(d/n), so n must be large
        // relative to d for the 5% gate
        let t = Target::heterosc(10).unwrap();
        let batch = t.sample(120_000, 2).unwrap();
        let (_, scaled) = fit_transform(&batch).unwrap();
        let fitted = fit_gaussian(&scaled).unwrap();
        let ratio = fitted.lambda_min() / fitted.lambda_max();
        assert!((ratio - 1.0).abs() < 0.05, "ratio {ratio}");
        assert!(fitted.lambda_max() <= 0.5 + 1e-9);
    }

    #[test]
    fn double_transform_is_identity_like() {
        let t = Target::heterosc(6).unwrap();
        let batch = t.sample(20_000, 3).unwrap();
        let (_, once) = fit_transform(&batch).unwrap();
        let (tr2, twice) = fit_transform(&once).unwrap();
        for j in 0..6 {
            assert!(tr2.mu[j].abs() < 0.02);
            // the input already has per-coordinate variance κ², so the
            // second pass rescales by κ/κ = 1
            assert!((tr2.d_scale[j] - tr2.kappa).abs() < 0.02);
        }
        assert!((tr2.kappa - 1.0 / 2.0f64.sqrt()).abs() < 0.02);
        let gap = (once.data() - twice.data()).amax();
        assert!(gap < 0.1, "second transform moved samples by {gap}");
    }

    #[test]
    fn round_trip_is_exact() {
        let t = Target::heterosc(8).unwrap();
        let batch = t.sample(2000, 4).unwrap();
        let (tr, scaled) = fit_transform(&batch).unwrap();
        let back = tr.inverse(&scaled).unwrap();
        let err = (back.data() - batch.data()).amax();
        assert!(err <= 1e-10, "round-trip error {err}");

        let zero = SampleBatch::new(nalgebra::DMatrix::zeros(1, 8), 0, Stage::Data);
        let back_zero = tr.inverse(&zero).unwrap();
        for j in 0..8 {
            assert_abs_diff_eq!(back_zero.data()[(0, j)], tr.mu[j], epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_variance_coordinate_rejected() {
        let mut data = nalgebra::DMatrix::from_fn(50, 2, |i, _| i as f64);
        for i in 0..50 {
            data[(i, 1)] = 7.0;
        }
        let err = fit_transform(&SampleBatch::new(data, 0, Stage::Data)).unwrap_err();
        assert!(matches!(err, Error::Singular(_)));
    }

    #[test]
    fn transfer_bound_values() {
        let tr = PreprocessTransform {
            mu: vec![0.0, 0.0],
            d_scale: vec![2.0, 2.0],
            kappa: 0.5,
        };
        assert_eq!(tr.transfer_bound(0.0).unwrap(), 0.0);
        // isotropic D = 2 I: transferred value = (2 / 0.5) w2
        assert_relative_eq!(tr.transfer_bound(1.5).unwrap(), 6.0, max_relative = 1e-15);
        assert!(tr.transfer_bound(-1.0).is_err());
    }

    #[test]
    fn inverse_scales_w2_by_transfer_factor_when_isotropic() {
        let g = GaussianTarget::stationary(2, 1.0);
        let a = g.sample(2000, 5).unwrap();
        let b = GaussianTarget::new(
            nalgebra::DVector::from_vec(vec![1.0, 0.0]),
            nalgebra::DMatrix::identity(2, 2),
        )
        .unwrap()
        .sample(2000, 6)
        .unwrap();
        let tr = PreprocessTransform {
            mu: vec![0.3, -0.7],
            d_scale: vec![1.7, 1.7],
            kappa: 0.4,
        };
        let w2_scaled = {
            let (_, w2) = crate::targets::closed_form_divergences(
                &fit_gaussian(&a).unwrap(),
                &fit_gaussian(&b).unwrap(),
            )
            .unwrap();
            w2
        };
        let ia = tr.inverse(&a).unwrap();
        let ib = tr.inverse(&b).unwrap();
        let (_, w2_orig) = crate::targets::closed_form_divergences(
            &fit_gaussian(&ia).unwrap(),
            &fit_gaussian(&ib).unwrap(),
        )
        .unwrap();
        assert_relative_eq!(w2_orig, tr.transfer_bound(w2_scaled).unwrap(), max_relative = 1e-9);
    }

    #[test]
    fn transfer_dominates_original_scale_divergence() {
        // Gaussian pair: closed-form W2 on the original scale is bounded by
        // the transferred closed-form W2 of the scaled pair
        let t = Target::heterosc(10).unwrap();
        let batch = t.sample(10_000, 7).unwrap();
        let (tr, scaled) = fit_transform(&batch).unwrap();
        let scaled_target = fit_gaussian(&scaled).unwrap();
        // a slightly perturbed scaled distribution
        let mut perturbed = scaled.data().clone();
        perturbed.column_mut(0).add_scalar_mut(0.05);
        let perturbed = SampleBatch::new(perturbed, 0, Stage::Data);
        let (_, w2_scaled) = crate::targets::closed_form_divergences(
            &scaled_target,
            &fit_gaussian(&perturbed).unwrap(),
        )
        .unwrap();
        let io = tr.inverse(&scaled).unwrap();
        let ip = tr.inverse(&perturbed).unwrap();
        let (_, w2_orig) = crate::targets::closed_form_divergences(
            &fit_gaussian(&io).unwrap(),
            &fit_gaussian(&ip).unwrap(),
        )
        .unwrap();
        assert!(
            w2_orig <= tr.transfer_bound(w2_scaled).unwrap() + 1e-9,
            "transfer failed to dominate: {w2_orig} vs {}",
            tr.transfer_bound(w2_scaled).unwrap()
        );
    }

    #[test]
    fn post_transform_log_concavity_holds() {
        let t = Target::heterosc(10).unwrap();
        let batch = t.sample(10_000, 8).unwrap();
        let (_, scaled) = fit_transform(&batch).unwrap();
        let fitted = fit_gaussian(&scaled).unwrap();
        let sched = crate::schedules::Schedule::standard_parametric(0.0);
        for k in 0..=100 {
            let tt = k as f64 / 100.0;
            let (c, _) = fitted.contraction_constants(&sched, tt).unwrap();
            assert!(c >= 0.0, "C_t negative at t={tt}: {c}");
        }
    }
}
