//! Noise-schedule selection: sweep the parametric family over `a`, locate the
//! bound-minimizing `a★` by coarse grid plus local refinement, and compare
//! schedules head-to-head on empirical metrics.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bounds::{estimate_eps, kl_bound, w2_bound};
use crate::diffusion::{generate, SampleBatch, Scheme, ScoreSource, TimeGrid};
use crate::error::{Error, Result};
use crate::metrics;
use crate::rng;
use crate::schedules::Schedule;
use crate::scorenet::{train, ScoreNetParams, TrainConfig};
use crate::targets::{BoundConstants, GaussianTarget, Target};
use crate::{io, preprocess};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepMetric {
    Kl,
    W2,
}

/// Where the sampler/bound gets its score from during a sweep.
#[derive(Debug, Clone)]
pub enum ScoreMode {
    Exact,
    Zero,
    /// Train one network per schedule setting.
    Train { cfg: TrainConfig, n_train: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EpsMode {
    Zero,
    Estimate { n_mc: usize },
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EmpiricalSpec {
    pub n_gen: usize,
    pub scheme: Scheme,
    pub n_runs: usize,
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub metric: SweepMetric,
    pub target: Target,
    pub grid: TimeGrid,
    pub beta0: f64,
    pub beta1: f64,
    pub sigma2: f64,
    pub score: ScoreMode,
    pub eps: EpsMode,
    /// Monte-Carlo sample count for the KL approximation term.
    pub n_mc: usize,
    pub refined: bool,
    pub empirical: Option<EmpiricalSpec>,
    /// Sample count used to fit Gaussian bound constants for targets without
    /// closed forms.
    pub n_fit: usize,
    /// Standardize-and-rescale the target samples before everything else.
    pub rescale: bool,
    /// Cache directory for per-`a` trained networks.
    pub cache_dir: Option<PathBuf>,
}

impl SweepConfig {
    pub fn new(metric: SweepMetric, target: Target, grid: TimeGrid) -> Self {
        SweepConfig {
            metric,
            target,
            grid,
            beta0: 0.1,
            beta1: 20.0,
            sigma2: 1.0,
            score: ScoreMode::Exact,
            eps: EpsMode::Zero,
            n_mc: 500,
            refined: false,
            empirical: None,
            n_fit: 10_000,
            rescale: false,
            cache_dir: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub a: f64,
    pub bound_total: f64,
    pub bound_e1: f64,
    pub bound_e2: f64,
    pub bound_e3_or_eps: f64,
    pub emp_mean: Option<f64>,
    pub emp_std: Option<f64>,
    pub n_runs: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub a_star: f64,
    pub trace: Vec<String>,
}

impl SweepResult {
    fn recompute_a_star(&mut self) {
        let mut best: Option<(f64, f64, f64)> = None;
        for row in &self.rows {
            if row.error.is_some() || !row.bound_total.is_finite() {
                continue;
            }
            let key = (row.bound_total, row.a.abs(), row.a);
            match best {
                None => best = Some(key),
                Some(cur) => {
                    let better = key.0 < cur.0
                        || (key.0 == cur.0 && (key.1 < cur.1 || (key.1 == cur.1 && key.2 < cur.2)));
                    if better {
                        best = Some(key);
                    }
                }
            }
        }
        self.a_star = best.map(|(_, _, a)| a).unwrap_or(f64::NAN);
    }
}

/// The schedule family swept over `a`, endpoints pinned.
fn sweep_schedule(cfg: &SweepConfig, a: f64) -> Result<Schedule> {
    Schedule::parametric(a, cfg.beta0, cfg.beta1, cfg.grid.horizon(), cfg.sigma2)
}

struct SweepContext {
    /// Gaussian target for bound evaluation (the target itself, or a fit).
    bound_gaussian: GaussianTarget,
    /// Target actually sampled for training and empirical metrics.
    sample_target: Target,
    /// Reference batch for sample-based empirical metrics.
    reference: Option<SampleBatch>,
}

fn build_context(cfg: &SweepConfig, seed: u64) -> Result<SweepContext> {
    let mut sample_target = cfg.target.clone();
    if cfg.rescale {
        let batch = cfg.target.sample(cfg.n_fit, rng::derive_seed(seed, "rescale-fit", &[]))?;
        let (transform, scaled) = preprocess::fit_transform(&batch)?;
        sample_target = match &cfg.target {
            // an affinely mapped Gaussian stays Gaussian; keep the analytic
            // score available by fitting the scaled samples
            Target::Gaussian(_) => Target::Gaussian(metrics::fit_gaussian(&scaled)?),
            other => Target::scaled(other.clone(), transform)?,
        };
    }
    let bound_gaussian = match &sample_target {
        Target::Gaussian(g) => g.clone(),
        other => {
            let batch = other.sample(cfg.n_fit, rng::derive_seed(seed, "constants-fit", &[]))?;
            metrics::fit_gaussian(&batch)?
        }
    };
    let reference = match cfg.empirical {
        Some(spec) if !matches!(sample_target, Target::Gaussian(_)) => {
            Some(sample_target.sample(spec.n_gen, rng::derive_seed(seed, "reference", &[]))?)
        }
        _ => None,
    };
    Ok(SweepContext { bound_gaussian, sample_target, reference })
}

fn cache_key(cfg: &SweepConfig, tc: &TrainConfig, n_train: usize, a: f64, data_seed: u64) -> String {
    let mut h = Sha256::new();
    h.update(
        format!(
            "v1|a={a:?}|b0={}|b1={}|s2={}|T={}|N={}|loss={:?}|epochs={}|batch={}|lr={:?}|w={}|seed={}|ntrain={n_train}|dseed={data_seed}|d={}",
            cfg.beta0,
            cfg.beta1,
            cfg.sigma2,
            cfg.grid.horizon(),
            cfg.grid.steps(),
            tc.loss,
            tc.epochs,
            tc.batch_size,
            tc.learning_rate,
            tc.width,
            tc.seed,
            cfg.target.dim(),
        )
        .as_bytes(),
    );
    hex_string(&h.finalize())
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn score_for(
    cfg: &SweepConfig,
    ctx: &SweepContext,
    sched: &Schedule,
    a: f64,
    seed: u64,
) -> Result<ScoreSource> {
    match &cfg.score {
        ScoreMode::Exact => Ok(ScoreSource::AnalyticGaussian {
            target: ctx.bound_gaussian.clone(),
            sched: *sched,
        }),
        ScoreMode::Zero => Ok(ScoreSource::ZeroModified {
            dim: ctx.bound_gaussian.dim(),
            sigma2: cfg.sigma2,
        }),
        ScoreMode::Train { cfg: tc, n_train } => {
            let data_seed = rng::derive_seed(seed, "train-data", &[]);
            let mut tc = *tc;
            tc.seed = rng::derive_seed(seed, "train-net", &[a.to_bits()]);
            let params = trained_params(cfg, ctx, sched, &tc, *n_train, a, data_seed)?;
            Ok(ScoreSource::Learned { params, sigma2: cfg.sigma2 })
        }
    }
}

fn trained_params(
    cfg: &SweepConfig,
    ctx: &SweepContext,
    sched: &Schedule,
    tc: &TrainConfig,
    n_train: usize,
    a: f64,
    data_seed: u64,
) -> Result<ScoreNetParams> {
    if let Some(dir) = &cfg.cache_dir {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(format!("{}.params", cache_key(cfg, tc, n_train, a, data_seed)));
        if path.exists() {
            return io::read_params(&path);
        }
        let result = train(&ctx.sample_target, sched, tc, n_train, data_seed)?;
        io::write_params(&path, &result.params)?;
        Ok(result.params)
    } else {
        Ok(train(&ctx.sample_target, sched, tc, n_train, data_seed)?.params)
    }
}

fn empirical_value(
    cfg: &SweepConfig,
    ctx: &SweepContext,
    generated: &SampleBatch,
    seed: u64,
) -> Result<f64> {
    match (&ctx.reference, cfg.metric) {
        (None, SweepMetric::Kl) => {
            let (kl, _) = metrics::gauss_divergences(&ctx.bound_gaussian, generated)?;
            Ok(kl)
        }
        (None, SweepMetric::W2) => {
            let (_, w2) = metrics::gauss_divergences(&ctx.bound_gaussian, generated)?;
            Ok(w2)
        }
        (Some(reference), _) => metrics::sliced_w2(
            reference,
            generated,
            2000,
            rng::derive_seed(seed, "sw2-proj", &[]),
        ),
    }
}

fn eval_row(cfg: &SweepConfig, ctx: &SweepContext, a: f64, seed: u64) -> Result<SweepRow> {
    let sched = sweep_schedule(cfg, a)?;
    let score = score_for(cfg, ctx, &sched, a, seed)?;
    let bound_seed = rng::derive_seed(seed, "bound-mc", &[a.to_bits()]);

    let (bound_total, bound_e1, bound_e2, bound_e3_or_eps) = match cfg.metric {
        SweepMetric::Kl => {
            let report = kl_bound(
                &ctx.bound_gaussian,
                &sched,
                &cfg.grid,
                &score,
                cfg.n_mc,
                bound_seed,
                cfg.refined,
            )?;
            (
                report.total,
                report.e1_refined.unwrap_or(report.e1),
                report.e2,
                report.e3,
            )
        }
        SweepMetric::W2 => {
            let constants = BoundConstants::from_gaussian(&ctx.bound_gaussian, &sched, &cfg.grid)?;
            let eps = match cfg.eps {
                EpsMode::Zero => 0.0,
                EpsMode::Fixed(v) => v,
                EpsMode::Estimate { n_mc } => match &score {
                    ScoreSource::Learned { params, .. } => {
                        estimate_eps(&ctx.bound_gaussian, &sched, &cfg.grid, params, n_mc, bound_seed)?
                            .eps
                    }
                    _ => 0.0,
                },
            };
            let report = w2_bound(&ctx.bound_gaussian, &sched, &cfg.grid, &constants, Some(eps))?;
            (
                report.total,
                report.e1,
                report.e2_discretization + report.e2_time,
                report.e2_eps,
            )
        }
    };

    let (emp_mean, emp_std, n_runs) = match cfg.empirical {
        None => (None, None, 0),
        Some(spec) => {
            let mut values = Vec::with_capacity(spec.n_runs);
            for run in 0..spec.n_runs {
                let gen_seed = rng::derive_seed(seed, "gen", &[a.to_bits(), run as u64]);
                let batch = generate(spec.scheme, &score, &sched, &cfg.grid, spec.n_gen, gen_seed)?;
                values.push(empirical_value(cfg, ctx, &batch, seed)?);
            }
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            let std = if values.len() > 1 {
                Some(
                    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                        / (values.len() - 1) as f64)
                        .sqrt(),
                )
            } else {
                None
            };
            (Some(mean), std, spec.n_runs)
        }
    };

    Ok(SweepRow {
        a,
        bound_total,
        bound_e1,
        bound_e2,
        bound_e3_or_eps,
        emp_mean,
        emp_std,
        n_runs,
        error: None,
    })
}

/// Evaluates the bound (and optional empirical metric) at each `a`;
/// per-`a` failures annotate the row and the sweep continues.
pub fn sweep(cfg: &SweepConfig, a_values: &[f64], seed: u64) -> Result<SweepResult> {
    if a_values.is_empty() {
        return Err(Error::Domain("sweep needs at least one a value".into()));
    }
    let mut values: Vec<f64> = a_values.to_vec();
    values.sort_by(f64::total_cmp);
    values.dedup_by(|x, y| x.to_bits() == y.to_bits());

    let ctx = build_context(cfg, seed)?;
    let rows: Vec<SweepRow> = values
        .iter()
        .map(|&a| {
            eval_row(cfg, &ctx, a, seed).unwrap_or_else(|err| SweepRow {
                a,
                bound_total: f64::NAN,
                bound_e1: f64::NAN,
                bound_e2: f64::NAN,
                bound_e3_or_eps: f64::NAN,
                emp_mean: None,
                emp_std: None,
                n_runs: 0,
                error: Some(err.to_string()),
            })
        })
        .collect();

    let mut result = SweepResult {
        rows,
        a_star: f64::NAN,
        trace: vec![format!("coarse sweep over {} points", values.len())],
    };
    result.recompute_a_star();
    Ok(result)
}

/// Re-sweeps `[a★ - radius, a★ + radius]` at a finer step and merges the
/// result with the coarse sweep.
pub fn refine(
    cfg: &SweepConfig,
    coarse: &SweepResult,
    step: f64,
    radius: f64,
    seed: u64,
) -> Result<SweepResult> {
    if !(step > 0.0) {
        return Err(Error::Domain("refine step must be > 0".into()));
    }
    if radius < step {
        return Err(Error::Domain("refine radius must be >= step".into()));
    }
    if !coarse.a_star.is_finite() {
        return Err(Error::Domain("coarse sweep has no usable minimum".into()));
    }
    let count = (2.0 * radius / step).round() as usize;
    let mut fine_values = Vec::with_capacity(count + 1);
    for i in 0..=count {
        fine_values.push(coarse.a_star - radius + i as f64 * step);
    }
    let known: std::collections::BTreeSet<u64> =
        coarse.rows.iter().map(|r| r.a.to_bits()).collect();
    fine_values.retain(|a| !known.contains(&a.to_bits()));

    let mut merged = coarse.clone();
    if !fine_values.is_empty() {
        let fine = sweep(cfg, &fine_values, seed)?;
        merged.rows.extend(fine.rows);
        merged.rows.sort_by(|x, y| x.a.total_cmp(&y.a));
    }
    merged
        .trace
        .push(format!("refined around {} with step {step}, radius {radius}", coarse.a_star));
    merged.recompute_a_star();
    Ok(merged)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompareMetric {
    GaussKl,
    GaussW2,
    SlicedW2,
    KnnKl,
    Nll,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareRow {
    pub label: String,
    pub values: Vec<f64>,
    pub mean: f64,
    pub std: Option<f64>,
    /// Percent gain versus the `linear` row, positive when better (lower).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gain_vs_linear_pct: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct CompareConfig {
    pub target: Target,
    pub grid: TimeGrid,
    pub score: ScoreMode,
    pub scheme: Scheme,
    pub metric: CompareMetric,
    pub n_gen: usize,
}

/// Per-schedule mean ± std of an empirical metric over `n_runs` seeds.
pub fn compare_schedules(
    cfg: &CompareConfig,
    schedules: &[(String, Schedule)],
    n_runs: usize,
    seed: u64,
) -> Result<Vec<CompareRow>> {
    if n_runs == 0 {
        return Err(Error::Domain("need n_runs >= 1".into()));
    }
    let reference = match cfg.metric {
        CompareMetric::SlicedW2 | CompareMetric::KnnKl => {
            Some(cfg.target.sample(cfg.n_gen, rng::derive_seed(seed, "cmp-ref", &[]))?)
        }
        _ => None,
    };
    let gaussian_ref = match (&cfg.target, cfg.metric) {
        (Target::Gaussian(g), CompareMetric::GaussKl | CompareMetric::GaussW2) => Some(g.clone()),
        (_, CompareMetric::GaussKl | CompareMetric::GaussW2) => {
            return Err(Error::Unsupported(
                "gauss-kl/gauss-w2 comparison needs a Gaussian target".into(),
            ))
        }
        _ => None,
    };

    let mut rows = Vec::with_capacity(schedules.len());
    for (idx, (label, sched)) in schedules.iter().enumerate() {
        // one full pipeline per run: networks are retrained per seed
        let score_for_run = |run: usize| -> Result<ScoreSource> {
            match &cfg.score {
                ScoreMode::Exact => Ok(ScoreSource::AnalyticGaussian {
                    target: cfg.target.as_gaussian()?.clone(),
                    sched: *sched,
                }),
                ScoreMode::Zero => Ok(ScoreSource::ZeroModified {
                    dim: cfg.target.dim(),
                    sigma2: sched.sigma2,
                }),
                ScoreMode::Train { cfg: tc, n_train } => {
                    let mut tc = *tc;
                    tc.seed = rng::derive_seed(seed, "cmp-train-net", &[idx as u64, run as u64]);
                    let data_seed = rng::derive_seed(seed, "cmp-train-data", &[run as u64]);
                    let params = train(&cfg.target, sched, &tc, *n_train, data_seed)?.params;
                    Ok(ScoreSource::Learned { params, sigma2: sched.sigma2 })
                }
            }
        };
        let mut values = Vec::with_capacity(n_runs);
        for run in 0..n_runs {
            let score = score_for_run(run)?;
            let gen_seed = rng::derive_seed(seed, "cmp-gen", &[idx as u64, run as u64]);
            let batch = generate(cfg.scheme, &score, sched, &cfg.grid, cfg.n_gen, gen_seed)?;
            let value = match cfg.metric {
                CompareMetric::GaussKl => {
                    metrics::gauss_divergences(gaussian_ref.as_ref().unwrap(), &batch)?.0
                }
                CompareMetric::GaussW2 => {
                    metrics::gauss_divergences(gaussian_ref.as_ref().unwrap(), &batch)?.1
                }
                CompareMetric::SlicedW2 => metrics::sliced_w2(
                    reference.as_ref().unwrap(),
                    &batch,
                    2000,
                    rng::derive_seed(seed, "cmp-proj", &[]),
                )?,
                CompareMetric::KnnKl => {
                    let reference = reference.as_ref().unwrap();
                    metrics::knn_kl(reference, &batch, metrics::knn_default_k(batch.dim()))?
                }
                CompareMetric::Nll => metrics::nll(&cfg.target, &batch)?,
            };
            values.push(value);
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let std = (values.len() > 1).then(|| {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                / (values.len() - 1) as f64)
                .sqrt()
        });
        rows.push(CompareRow { label: label.clone(), values, mean, std, gain_vs_linear_pct: None });
    }

    if let Some(base) = rows.iter().find(|r| r.label == "linear").map(|r| r.mean) {
        for row in &mut rows {
            if row.label != "linear" && base != 0.0 {
                row.gain_vs_linear_pct = Some((base - row.mean) / base * 100.0);
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> SweepConfig {
        let target = Target::iso(3).unwrap();
        let grid = TimeGrid::new(40, 1.0).unwrap();
        SweepConfig::new(SweepMetric::Kl, target, grid)
    }

    #[test]
    fn singleton_sweep_selects_it() {
        let cfg = small_cfg();
        let result = sweep(&cfg, &[0.0], 1).unwrap();
        assert_eq!(result.rows.len(), 1);
        assert_eq!(result.a_star, 0.0);
    }

    #[test]
    fn duplicate_a_values_are_deduplicated() {
        let cfg = small_cfg();
        let result = sweep(&cfg, &[1.0, -2.0, 1.0, 1.0], 1).unwrap();
        assert_eq!(result.rows.len(), 2);
        assert_eq!(result.rows[0].a, -2.0);
        assert_eq!(result.rows[1].a, 1.0);
    }

    #[test]
    fn sweep_is_bitwise_reproducible() {
        let mut cfg = small_cfg();
        cfg.empirical = Some(EmpiricalSpec { n_gen: 300, scheme: Scheme::Em, n_runs: 2 });
        let a = sweep(&cfg, &[-1.0, 0.0, 2.0], 7).unwrap();
        let b = sweep(&cfg, &[-1.0, 0.0, 2.0], 7).unwrap();
        for (x, y) in a.rows.iter().zip(&b.rows) {
            assert_eq!(x.bound_total.to_bits(), y.bound_total.to_bits());
            assert_eq!(
                x.emp_mean.unwrap().to_bits(),
                y.emp_mean.unwrap().to_bits()
            );
        }
        assert_eq!(a.a_star, b.a_star);
    }

    #[test]
    fn refine_cannot_increase_minimum() {
        let cfg = small_cfg();
        let coarse = sweep(&cfg, &[-4.0, -2.0, 0.0, 2.0, 4.0], 3).unwrap();
        let coarse_min = coarse
            .rows
            .iter()
            .map(|r| r.bound_total)
            .fold(f64::INFINITY, f64::min);
        let refined = refine(&cfg, &coarse, 0.25, 1.0, 3).unwrap();
        let refined_min = refined
            .rows
            .iter()
            .map(|r| r.bound_total)
            .fold(f64::INFINITY, f64::min);
        assert!(refined_min <= coarse_min + 1e-15);
        assert!(refined.rows.len() > coarse.rows.len());
        let mut prev = f64::NEG_INFINITY;
        for row in &refined.rows {
            assert!(row.a > prev);
            prev = row.a;
        }
    }

    #[test]
    fn ties_break_toward_smaller_magnitude_then_smaller_a() {
        // stationary target: e1 = e2 = e3 = 0 at every a, so all totals tie
        let cfg = SweepConfig::new(
            SweepMetric::Kl,
            Target::Gaussian(GaussianTarget::stationary(3, 1.0)),
            TimeGrid::new(20, 1.0).unwrap(),
        );
        let result = sweep(&cfg, &[3.0, -2.0, 1.0], 2).unwrap();
        assert!(result.rows.iter().all(|r| r.bound_total == 0.0));
        // smaller |a| wins
        assert_eq!(result.a_star, 1.0);
        // at equal magnitude the smaller a wins
        let again = sweep(&cfg, &[3.0, -1.0, 1.0], 2).unwrap();
        assert_eq!(again.a_star, -1.0);
    }

    #[test]
    fn errors_annotate_rows_and_sweep_continues() {
        // refined KL on a target with λmax > σ² fails per-row
        let mut cfg = SweepConfig::new(
            SweepMetric::Kl,
            Target::Gaussian(GaussianTarget::isotropic(2, 0.0, 2.0).unwrap()),
            TimeGrid::new(10, 1.0).unwrap(),
        );
        cfg.refined = true;
        let result = sweep(&cfg, &[0.0, 1.0], 1).unwrap();
        assert_eq!(result.rows.len(), 2);
        assert!(result.rows.iter().all(|r| r.error.is_some()));
        assert!(result.a_star.is_nan());
    }

    #[test]
    fn exact_score_ties_on_stationary_target() {
        let target = Target::Gaussian(GaussianTarget::stationary(3, 1.0));
        let cfg = CompareConfig {
            target,
            grid: TimeGrid::new(50, 1.0).unwrap(),
            score: ScoreMode::Exact,
            scheme: Scheme::Ei,
            metric: CompareMetric::GaussKl,
            n_gen: 4000,
        };
        let schedules = vec![
            ("linear".to_string(), Schedule::standard_parametric(0.0)),
            ("cosine".to_string(), Schedule::standard_cosine()),
            ("parametric".to_string(), Schedule::standard_parametric(5.0)),
        ];
        let rows = compare_schedules(&cfg, &schedules, 3, 11).unwrap();
        let linear = rows.iter().find(|r| r.label == "linear").unwrap();
        for row in &rows {
            let pooled = (row.std.unwrap().powi(2) + linear.std.unwrap().powi(2)).sqrt();
            assert!(
                (row.mean - linear.mean).abs() <= 2.0 * pooled + 1e-9,
                "{} differs: {} vs {} (pooled {pooled})",
                row.label,
                row.mean,
                linear.mean
            );
        }
    }

    #[test]
    fn single_run_reports_absent_std() {
        let target = Target::iso(2).unwrap();
        let cfg = CompareConfig {
            target,
            grid: TimeGrid::new(30, 1.0).unwrap(),
            score: ScoreMode::Exact,
            scheme: Scheme::Em,
            metric: CompareMetric::GaussW2,
            n_gen: 500,
        };
        let schedules = vec![("linear".to_string(), Schedule::standard_parametric(0.0))];
        let rows = compare_schedules(&cfg, &schedules, 1, 5).unwrap();
        assert!(rows[0].std.is_none());
    }
}
