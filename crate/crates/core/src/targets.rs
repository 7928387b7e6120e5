//! Target data distributions: sampling, log-densities, analytic scores, and
//! the constants entering the KL/W2 bounds.
//!
//! Gaussian targets carry a cached spectral decomposition; every derived
//! quantity (score, contraction constants, closed-form divergences, Fisher
//! information) is computed from it. Funnel and mixture targets are
//! sampleable with tractable densities; their bound constants are built from
//! the empirical covariance treated as Gaussian.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::diffusion::{SampleBatch, Stage, TimeGrid};
use crate::error::{Error, Result};
use crate::rng;
use crate::schedules::Schedule;

/// Eigenvalues below this floor reject the covariance at construction.
pub const EIGENVALUE_FLOOR: f64 = 1e-12;

const LN_2PI: f64 = 1.8378770664093453;

/// Multivariate Gaussian with cached spectral decomposition.
#[derive(Debug, Clone)]
pub struct GaussianTarget {
    mu: DVector<f64>,
    sigma: DMatrix<f64>,
    /// Eigenvalues in ascending order.
    evals: DVector<f64>,
    /// Orthonormal eigenvectors, one column per eigenvalue.
    evecs: DMatrix<f64>,
}

/// Symmetric eigendecomposition with eigenvalues sorted ascending.
pub(crate) fn sym_eigen(mat: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let sym = nalgebra::SymmetricEigen::new(mat.clone());
    let d = mat.nrows();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| sym.eigenvalues[i].total_cmp(&sym.eigenvalues[j]));
    let evals = DVector::from_iterator(d, order.iter().map(|&i| sym.eigenvalues[i]));
    let mut evecs = DMatrix::zeros(d, d);
    for (dst, &src) in order.iter().enumerate() {
        evecs.set_column(dst, &sym.eigenvectors.column(src));
    }
    (evals, evecs)
}

/// Principal square root of an SPD matrix; symmetrizes first to kill
/// roundoff asymmetry, clamps tiny negative eigenvalues to zero.
pub(crate) fn sqrt_spd(mat: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (mat + mat.transpose()) * 0.5;
    let (evals, evecs) = sym_eigen(&sym);
    let roots = DVector::from_iterator(evals.len(), evals.iter().map(|&l| l.max(0.0).sqrt()));
    &evecs * DMatrix::from_diagonal(&roots) * evecs.transpose()
}

impl GaussianTarget {
    pub fn new(mu: DVector<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        let d = mu.len();
        if sigma.nrows() != d || sigma.ncols() != d {
            return Err(Error::Domain(format!(
                "covariance is {}x{}, mean has dimension {d}",
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        let scale = sigma.amax().max(1.0);
        for i in 0..d {
            for j in (i + 1)..d {
                if (sigma[(i, j)] - sigma[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::Domain(format!(
                        "covariance not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let sym = (&sigma + sigma.transpose()) * 0.5;
        let (evals, evecs) = sym_eigen(&sym);
        if evals[0] < EIGENVALUE_FLOOR {
            return Err(Error::Singular(format!(
                "covariance eigenvalue {} below the {EIGENVALUE_FLOOR} floor",
                evals[0]
            )));
        }
        Ok(GaussianTarget { mu, sigma: sym, evals, evecs })
    }

    pub fn isotropic(dim: usize, mu: f64, variance: f64) -> Result<Self> {
        GaussianTarget::new(
            DVector::from_element(dim, mu),
            DMatrix::from_diagonal_element(dim, dim, variance),
        )
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.evals
    }

    pub fn lambda_min(&self) -> f64 {
        self.evals[0]
    }

    pub fn lambda_max(&self) -> f64 {
        self.evals[self.evals.len() - 1]
    }

    /// Σ^{1/2} y for a vector of eigenbasis-independent coordinates.
    fn sqrt_apply(&self, z: &DVector<f64>) -> DVector<f64> {
        let scaled = DVector::from_iterator(
            z.len(),
            self.evals.iter().zip(z.iter()).map(|(&l, &zi)| l.sqrt() * zi),
        );
        &self.evecs * scaled
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<SampleBatch> {
        if n == 0 {
            return Err(Error::Domain("sample count must be >= 1".into()));
        }
        let d = self.dim();
        let mut data = DMatrix::zeros(n, d);
        for i in 0..n {
            let mut r = rng::named(seed, "target-sample", &[i as u64]);
            let z = DVector::from_fn(d, |_, _| r.sample(StandardNormal));
            let x = &self.mu + self.sqrt_apply(&z);
            data.row_mut(i).copy_from(&x.transpose());
        }
        Ok(SampleBatch::new(data, seed, Stage::Data))
    }

    pub fn log_density(&self, x: &DVector<f64>) -> f64 {
        let centered = x - &self.mu;
        let y = self.evecs.transpose() * centered;
        let mut quad = 0.0;
        let mut logdet = 0.0;
        for (yi, &l) in y.iter().zip(self.evals.iter()) {
            quad += yi * yi / l;
            logdet += l.ln();
        }
        -0.5 * (self.dim() as f64 * LN_2PI + logdet + quad)
    }

    /// Eigenvalues of the forward marginal covariance `m_t² Σ₀ + σ_t² I`.
    fn forward_evals(&self, m: f64, sig2_t: f64) -> DVector<f64> {
        DVector::from_iterator(self.evals.len(), self.evals.iter().map(|&l| m * m * l + sig2_t))
    }

    /// Exact marginal score `∇ log p_t(x) = -(m² Σ₀ + σ_t² I)^{-1}(x - m μ₀)`.
    pub fn score(&self, sched: &Schedule, t: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
        let (m, sig2_t) = sched.m_sigma(t)?;
        let fe = self.forward_evals(m, sig2_t);
        let centered = x - &self.mu * m;
        let y = self.evecs.transpose() * centered;
        let scaled = DVector::from_iterator(y.len(), y.iter().zip(fe.iter()).map(|(&yi, &l)| yi / l));
        Ok(-(&self.evecs * scaled))
    }

    /// Modified score `s̃(t, x) = ∇ log p_t(x) + x/σ²`.
    pub fn modified_score(&self, sched: &Schedule, t: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.score(sched, t, x)? + x / sched.sigma2)
    }

    /// Batched raw score for row-major samples (one row per point).
    pub fn score_rows(&self, sched: &Schedule, t: f64, xs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let (m, sig2_t) = sched.m_sigma(t)?;
        let fe = self.forward_evals(m, sig2_t);
        let mut centered = xs.clone();
        for mut row in centered.row_iter_mut() {
            row -= self.mu.transpose() * m;
        }
        // -(X - m μᵀ) U D U^T, applied row-wise
        let proj = centered * &self.evecs;
        let mut scaled = proj;
        for (j, &l) in fe.iter().enumerate() {
            scaled.column_mut(j).scale_mut(1.0 / l);
        }
        Ok(-(scaled * self.evecs.transpose()))
    }

    /// Lemma-1 contraction constants of the modified score at time `t`:
    /// strong log-concavity `C_t` and Lipschitz constant `L_t`.
    pub fn contraction_constants(&self, sched: &Schedule, t: f64) -> Result<(f64, f64)> {
        let (m, sig2_t) = sched.m_sigma(t)?;
        let s2 = sched.sigma2;
        let m2 = m * m;
        let lam_max = self.lambda_max();
        let lam_min = self.lambda_min();
        let c = m2 * (s2 - lam_max) / (m2 * lam_max + s2 * (1.0 - m2));
        let inv_mix = if sig2_t > 0.0 { 1.0 / sig2_t } else { f64::INFINITY };
        let inv_data = 1.0 / (lam_min * m2);
        let l = inv_mix.min(inv_data) + 1.0 / s2;
        Ok((c, l))
    }

    /// Time-Lipschitz constant of the score over a uniform grid, from the
    /// per-cell `κ₁`/`κ₂` bounds.
    pub fn score_time_lipschitz(&self, sched: &Schedule, grid: &TimeGrid) -> Result<f64> {
        let s2 = sched.sigma2;
        let lam_min = self.lambda_min();
        let mu_norm = self.mu.norm();
        let mut m_max: f64 = 0.0;
        for k in 0..grid.steps() {
            let t1 = grid.node(k);
            let t2 = grid.node(k + 1);
            let (m1, _) = sched.m_sigma(t1)?;
            let (m2v, _) = sched.m_sigma(t2)?;
            let beta2 = sched.beta(t2)?;
            let den = ((s2 + m1 * m1 * (lam_min - s2)) * (s2 + m2v * m2v * (lam_min - s2))).abs();
            let kappa1 = m1 * m1 * (beta2 / s2) * (lam_min - s2).abs() / den;
            let kappa2 =
                m1 * (beta2 / (2.0 * s2)) * (m1 * m2v * (lam_min - s2) - s2).abs() / den;
            m_max = m_max.max((mu_norm * kappa2).max(kappa1));
        }
        Ok(m_max)
    }

    /// Relative Fisher information to the stationary Gaussian `N(0, σ² I)`.
    pub fn fisher_to_stationary(&self, sigma2: f64) -> f64 {
        let tr = self.evals.sum();
        let tr_inv: f64 = self.evals.iter().map(|&l| 1.0 / l).sum();
        let d = self.dim() as f64;
        (tr + self.mu.norm_squared()) / (sigma2 * sigma2) - 2.0 * d / sigma2 + tr_inv
    }

    pub fn stationary(dim: usize, sigma2: f64) -> Self {
        GaussianTarget::new(
            DVector::zeros(dim),
            DMatrix::from_diagonal_element(dim, dim, sigma2),
        )
        .expect("stationary covariance is SPD")
    }
}

/// Closed-form `(KL(p‖q), W2(p, q))` between Gaussians.
pub fn closed_form_divergences(p: &GaussianTarget, q: &GaussianTarget) -> Result<(f64, f64)> {
    if p.dim() != q.dim() {
        return Err(Error::Domain(format!(
            "dimension mismatch: {} vs {}",
            p.dim(),
            q.dim()
        )));
    }
    let d = p.dim() as f64;
    let logdet_p: f64 = p.evals.iter().map(|&l| l.ln()).sum();
    let logdet_q: f64 = q.evals.iter().map(|&l| l.ln()).sum();

    // Tr(Σq^{-1} Σp) through q's eigenbasis
    let rotated = q.evecs.transpose() * &p.sigma * &q.evecs;
    let mut trace_term = 0.0;
    for (j, &l) in q.evals.iter().enumerate() {
        trace_term += rotated[(j, j)] / l;
    }
    let diff = &q.mu - &p.mu;
    let y = q.evecs.transpose() * &diff;
    let quad: f64 = y.iter().zip(q.evals.iter()).map(|(&yi, &l)| yi * yi / l).sum();
    let kl = 0.5 * (logdet_q - logdet_p - d + trace_term + quad);

    let sqrt_q = sqrt_spd(&q.sigma);
    let inner = &sqrt_q * &p.sigma * &sqrt_q;
    let cross = sqrt_spd(&inner);
    let w2_sq = diff.norm_squared() + (&p.sigma + &q.sigma - cross * 2.0).trace();
    Ok((kl, w2_sq.max(0.0).sqrt()))
}

/// Strong log-concavity constant propagated from a `C₀`-strongly log-concave
/// data distribution (requires `C₀ > 1/σ²`).
pub fn propagate_c0(c0: f64, sched: &Schedule, t: f64) -> Result<f64> {
    let s2 = sched.sigma2;
    if c0 <= 1.0 / s2 {
        return Err(Error::Precondition(format!(
            "propagation needs C0 > 1/sigma2 = {}, got {c0}",
            1.0 / s2
        )));
    }
    let (m, _) = sched.m_sigma(t)?;
    Ok(1.0 / (m * m / c0 + s2 * (1.0 - m * m)) - 1.0 / s2)
}

/// Lipschitz constant of the modified score propagated from an `L₀`-smooth
/// data distribution.
pub fn propagate_l0(l0: f64, sched: &Schedule, t: f64) -> Result<f64> {
    let s2 = sched.sigma2;
    let (m, sig2_t) = sched.m_sigma(t)?;
    let inv_mix = if sig2_t > 0.0 { 1.0 / sig2_t } else { f64::INFINITY };
    Ok(inv_mix.min(l0 / (m * m)) + 1.0 / s2)
}

/// Neal-style funnel: `x₁ ~ N(0, a²)`, `x_j | x₁ ~ N(0, exp(2 b x₁))`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FunnelTarget {
    pub a: f64,
    pub b: f64,
    pub dim: usize,
}

impl FunnelTarget {
    pub fn new(a: f64, b: f64, dim: usize) -> Result<Self> {
        if !(a > 0.0) {
            return Err(Error::Domain(format!("funnel scale a must be > 0, got {a}")));
        }
        if dim < 2 {
            return Err(Error::Domain(format!("funnel needs dim >= 2, got {dim}")));
        }
        Ok(FunnelTarget { a, b, dim })
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<SampleBatch> {
        if n == 0 {
            return Err(Error::Domain("sample count must be >= 1".into()));
        }
        let mut data = DMatrix::zeros(n, self.dim);
        for i in 0..n {
            let mut r = rng::named(seed, "target-sample", &[i as u64]);
            let x1 = self.a * r.sample::<f64, _>(StandardNormal);
            data[(i, 0)] = x1;
            let scale = (self.b * x1).exp();
            for j in 1..self.dim {
                data[(i, j)] = scale * r.sample::<f64, _>(StandardNormal);
            }
        }
        Ok(SampleBatch::new(data, seed, Stage::Data))
    }

    pub fn log_density(&self, x: &DVector<f64>) -> f64 {
        let x1 = x[0];
        let mut acc = -0.5 * (LN_2PI + (self.a * self.a).ln() + x1 * x1 / (self.a * self.a));
        let log_var = 2.0 * self.b * x1;
        let var = log_var.exp();
        for j in 1..self.dim {
            acc -= 0.5 * (LN_2PI + log_var + x[j] * x[j] / var);
        }
        acc
    }
}

/// Gaussian mixture with a shared diagonal covariance.
#[derive(Debug, Clone)]
pub struct GmmTarget {
    weights: Vec<f64>,
    means: Vec<DVector<f64>>,
    cov_diag: DVector<f64>,
}

impl GmmTarget {
    pub fn new(weights: Vec<f64>, means: Vec<DVector<f64>>, cov_diag: DVector<f64>) -> Result<Self> {
        if weights.is_empty() || weights.len() != means.len() {
            return Err(Error::Domain("weights and means must be nonempty and equal length".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("weights sum to {total}, expected 1")));
        }
        if weights.iter().any(|&w| w < 0.0) {
            return Err(Error::Domain("negative mixture weight".into()));
        }
        let d = means[0].len();
        if means.iter().any(|m| m.len() != d) || cov_diag.len() != d {
            return Err(Error::Domain("component dimension mismatch".into()));
        }
        if cov_diag.iter().any(|&v| v <= 0.0) {
            return Err(Error::Domain("covariance diagonal entries must be > 0".into()));
        }
        Ok(GmmTarget { weights, means, cov_diag })
    }

    /// The 25-mode grid mixture: means `(j, k, 0, ..., 0)` for
    /// `j, k ∈ {-2..2}`, covariance `diag(0.01, 0.01, 0.1, ..., 0.1)`.
    pub fn grid25(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::Domain(format!("grid25 needs dim >= 2, got {dim}")));
        }
        let mut means = Vec::with_capacity(25);
        for j in -2..=2 {
            for k in -2..=2 {
                let mut m = DVector::zeros(dim);
                m[0] = f64::from(j);
                m[1] = f64::from(k);
                means.push(m);
            }
        }
        let mut diag = DVector::from_element(dim, 0.1);
        diag[0] = 0.01;
        diag[1] = 0.01;
        GmmTarget::new(vec![1.0 / 25.0; 25], means, diag)
    }

    pub fn dim(&self) -> usize {
        self.cov_diag.len()
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<SampleBatch> {
        if n == 0 {
            return Err(Error::Domain("sample count must be >= 1".into()));
        }
        let d = self.dim();
        let mut data = DMatrix::zeros(n, d);
        for i in 0..n {
            let mut r = rng::named(seed, "target-sample", &[i as u64]);
            let u: f64 = r.random();
            let mut k = self.weights.len() - 1;
            let mut cum = 0.0;
            for (idx, &w) in self.weights.iter().enumerate() {
                cum += w;
                if u < cum {
                    k = idx;
                    break;
                }
            }
            for j in 0..d {
                data[(i, j)] =
                    self.means[k][j] + self.cov_diag[j].sqrt() * r.sample::<f64, _>(StandardNormal);
            }
        }
        Ok(SampleBatch::new(data, seed, Stage::Data))
    }

    pub fn log_density(&self, x: &DVector<f64>) -> f64 {
        let d = self.dim() as f64;
        let logdet: f64 = self.cov_diag.iter().map(|&v| v.ln()).sum();
        let mut terms = Vec::with_capacity(self.weights.len());
        for (w, m) in self.weights.iter().zip(self.means.iter()) {
            if *w == 0.0 {
                continue;
            }
            let mut quad = 0.0;
            for j in 0..self.dim() {
                let diff = x[j] - m[j];
                quad += diff * diff / self.cov_diag[j];
            }
            terms.push(w.ln() - 0.5 * (d * LN_2PI + logdet + quad));
        }
        log_sum_exp(&terms)
    }
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + terms.iter().map(|&t| (t - max).exp()).sum::<f64>().ln()
}

/// Any supported target distribution.
#[derive(Debug, Clone)]
pub enum Target {
    Gaussian(GaussianTarget),
    Funnel(FunnelTarget),
    Gmm(GmmTarget),
    /// A base target pushed through a fitted standardize-and-rescale map.
    Scaled {
        base: Box<Target>,
        transform: crate::preprocess::PreprocessTransform,
    },
}

impl Target {
    /// Isotropic Gaussian `N(1_d, 0.5 I)`.
    pub fn iso(dim: usize) -> Result<Self> {
        Ok(Target::Gaussian(GaussianTarget::isotropic(dim, 1.0, 0.5)?))
    }

    /// Heteroscedastic Gaussian `N(1_d, diag(1 x5, 0.01 x(d-5)))`.
    pub fn heterosc(dim: usize) -> Result<Self> {
        let mut diag = DVector::from_element(dim, 0.01);
        for j in 0..dim.min(5) {
            diag[j] = 1.0;
        }
        Ok(Target::Gaussian(GaussianTarget::new(
            DVector::from_element(dim, 1.0),
            DMatrix::from_diagonal(&diag),
        )?))
    }

    /// Correlated Gaussian `N(1_d, Σ)` with `Σ_ij = 1/sqrt(|i-j| + 1)`.
    pub fn corr(dim: usize) -> Result<Self> {
        let sigma = DMatrix::from_fn(dim, dim, |i, j| {
            1.0 / ((i.abs_diff(j) + 1) as f64).sqrt()
        });
        Ok(Target::Gaussian(GaussianTarget::new(
            DVector::from_element(dim, 1.0),
            sigma,
        )?))
    }

    pub fn funnel(dim: usize) -> Result<Self> {
        Ok(Target::Funnel(FunnelTarget::new(1.0, 0.5, dim)?))
    }

    pub fn gmm25(dim: usize) -> Result<Self> {
        Ok(Target::Gmm(GmmTarget::grid25(dim)?))
    }

    /// Wraps a target with a rescaling map so that samples come out already
    /// transformed and densities carry the change-of-variables factor.
    pub fn scaled(base: Target, transform: crate::preprocess::PreprocessTransform) -> Result<Self> {
        if base.dim() != transform.dim() {
            return Err(Error::Domain("transform dimension mismatch".into()));
        }
        Ok(Target::Scaled { base: Box::new(base), transform })
    }

    pub fn dim(&self) -> usize {
        match self {
            Target::Gaussian(g) => g.dim(),
            Target::Funnel(f) => f.dim,
            Target::Gmm(g) => g.dim(),
            Target::Scaled { base, .. } => base.dim(),
        }
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<SampleBatch> {
        match self {
            Target::Gaussian(g) => g.sample(n, seed),
            Target::Funnel(f) => f.sample(n, seed),
            Target::Gmm(g) => g.sample(n, seed),
            Target::Scaled { base, transform } => transform.apply(&base.sample(n, seed)?),
        }
    }

    pub fn log_density(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(match self {
            Target::Gaussian(g) => g.log_density(x),
            Target::Funnel(f) => f.log_density(x),
            Target::Gmm(g) => g.log_density(x),
            Target::Scaled { base, transform } => {
                // y = κ D^{-1}(x - μ): p_Y(y) = p_X(x(y)) Π σ_j / κ^d
                let row = DMatrix::from_rows(&[x.transpose()]);
                let batch = SampleBatch::new(row, 0, crate::diffusion::Stage::Data);
                let original = transform.inverse(&batch)?.row_vec(0);
                let log_jac: f64 =
                    transform.d_scale.iter().map(|&s| (s / transform.kappa).ln()).sum();
                base.log_density(&original)? + log_jac
            }
        })
    }

    pub fn as_gaussian(&self) -> Result<&GaussianTarget> {
        match self {
            Target::Gaussian(g) => Ok(g),
            _ => Err(Error::Unsupported(
                "operation requires a Gaussian target".into(),
            )),
        }
    }
}

/// Constants entering the Theorem-2 Wasserstein bound for one target.
#[derive(Clone)]
pub struct BoundConstants {
    c_of_t: std::sync::Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    l_of_t: std::sync::Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    /// Time-Lipschitz constant of the score (H6).
    pub m_time: f64,
    /// `B = (E‖X₀‖² + σ² d)^{1/2}`.
    pub b: f64,
    /// Relative Fisher information to the stationary Gaussian.
    pub fisher: f64,
    pub kl_to_stationary: f64,
    pub w2_to_stationary: f64,
}

impl std::fmt::Debug for BoundConstants {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BoundConstants")
            .field("m_time", &self.m_time)
            .field("b", &self.b)
            .field("fisher", &self.fisher)
            .field("kl_to_stationary", &self.kl_to_stationary)
            .field("w2_to_stationary", &self.w2_to_stationary)
            .finish_non_exhaustive()
    }
}

impl BoundConstants {
    /// Builds the full constant set from a Gaussian target via the
    /// closed-form contraction lemma.
    pub fn from_gaussian(target: &GaussianTarget, sched: &Schedule, grid: &TimeGrid) -> Result<Self> {
        let d = target.dim();
        let s2 = sched.sigma2;
        let stationary = GaussianTarget::stationary(d, s2);
        let (kl, w2) = closed_form_divergences(target, &stationary)?;
        let fisher = target.fisher_to_stationary(s2);
        let m_time = target.score_time_lipschitz(sched, grid)?;
        let b = (target.eigenvalues().sum() + target.mu().norm_squared() + s2 * d as f64).sqrt();

        let tc = target.clone();
        let sc = *sched;
        let tl = target.clone();
        let sl = *sched;
        Ok(BoundConstants {
            c_of_t: std::sync::Arc::new(move |t| {
                tc.contraction_constants(&sc, t).map(|(c, _)| c).unwrap_or(f64::NAN)
            }),
            l_of_t: std::sync::Arc::new(move |t| {
                tl.contraction_constants(&sl, t).map(|(_, l)| l).unwrap_or(f64::NAN)
            }),
            m_time,
            b,
            fisher,
            kl_to_stationary: kl,
            w2_to_stationary: w2,
        })
    }

    pub fn c_at(&self, t: f64) -> f64 {
        (self.c_of_t)(t)
    }

    pub fn l_at(&self, t: f64) -> f64 {
        (self.l_of_t)(t)
    }
}
