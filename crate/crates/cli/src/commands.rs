//! Implementations behind the CLI subcommands.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use sgmsched_core::bounds::{estimate_eps, kl_bound, w2_bound, KlBoundReport, W2BoundReport};
use sgmsched_core::diffusion::{forward_exact, generate, SampleBatch, Scheme, ScoreSource, TimeGrid};
use sgmsched_core::io::{fmt_f64, read_params, read_samples, write_params, write_samples};
use sgmsched_core::metrics::{
    fit_gaussian, gauss_divergences, knn_default_k, knn_kl_detailed, nll, sliced_w2, MetricName,
    MetricParams, MetricReport,
};
use sgmsched_core::preprocess::{fit_transform, PreprocessTransform};
use sgmsched_core::rng;
use sgmsched_core::scorenet::train;
use sgmsched_core::targets::{BoundConstants, GaussianTarget, Target};
use sgmsched_core::tuner::{
    refine, sweep, EmpiricalSpec, EpsMode, ScoreMode, SweepConfig, SweepMetric, SweepResult,
};
use sgmsched_core::{Error, Result, Schedule};

use crate::config::{
    parse_eps, resolve, BoundMetricName, EpsChoice, ExperimentConfig, Preprocess,
};

/// Default sample count for fitting Gaussian bound constants.
const N_FIT: usize = 10_000;

pub struct Workspace {
    pub cfg: ExperimentConfig,
    pub base: PathBuf,
}

impl Workspace {
    pub fn load(config_path: &Path) -> Result<Self> {
        let cfg = ExperimentConfig::load(config_path)?;
        let base = config_path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Ok(Workspace { cfg, base })
    }

    fn target(&self) -> Result<Target> {
        self.cfg.build_target(&self.base)
    }

    /// The target the pipeline actually works on, with the fitted transform
    /// when rescaling is enabled.
    fn working_target(&self, seed: u64) -> Result<(Target, Option<PreprocessTransform>)> {
        let original = self.target()?;
        match self.cfg.preprocess {
            Preprocess::None => Ok((original, None)),
            Preprocess::Rescale => {
                let n = self.cfg.train.as_ref().map(|t| t.n_train).unwrap_or(N_FIT).max(N_FIT);
                let batch = original.sample(n, rng::derive_seed(seed, "preprocess-fit", &[]))?;
                let (transform, scaled) = fit_transform(&batch)?;
                let working = match &original {
                    // Gaussian targets stay Gaussian under the affine map, so
                    // the analytic score remains available
                    Target::Gaussian(_) => Target::Gaussian(fit_gaussian(&scaled)?),
                    other => Target::scaled(other.clone(), transform.clone())?,
                };
                Ok((working, Some(transform)))
            }
        }
    }

    fn working_gaussian(&self, target: &Target, seed: u64) -> Result<GaussianTarget> {
        match target {
            Target::Gaussian(g) => Ok(g.clone()),
            other => {
                let batch = other.sample(N_FIT, rng::derive_seed(seed, "constants-fit", &[]))?;
                fit_gaussian(&batch)
            }
        }
    }

    fn score_source(
        &self,
        spec: &str,
        target: &Target,
        sched: &Schedule,
        seed: u64,
    ) -> Result<ScoreSource> {
        if let Some(file) = spec.strip_prefix("net:") {
            let params = read_params(&resolve(&self.base, Path::new(file)))?;
            return Ok(ScoreSource::Learned { params, sigma2: sched.sigma2 });
        }
        match spec {
            "exact" => Ok(ScoreSource::AnalyticGaussian {
                target: self.working_gaussian(target, seed)?,
                sched: *sched,
            }),
            "zero" => Ok(ScoreSource::ZeroModified { dim: target.dim(), sigma2: sched.sigma2 }),
            "train" => {
                let (mut tc, n_train) = self.cfg.train_config(0)?;
                tc.seed = rng::derive_seed(seed, "train", &[]);
                let data_seed = rng::derive_seed(seed, "train-data", &[]);
                let result = train(target, sched, &tc, n_train, data_seed)?;
                Ok(ScoreSource::Learned { params: result.params, sigma2: sched.sigma2 })
            }
            other => Err(Error::Config(format!("unknown score source {other}"))),
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Format(format!("JSON serialization: {e}")))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

pub struct GenerateArgs {
    pub config: PathBuf,
    pub scheme: Scheme,
    pub steps: Option<usize>,
    pub n: usize,
    pub seed: Option<u64>,
    pub score: String,
    pub forward_t: Option<f64>,
    pub out: PathBuf,
}

pub fn cmd_generate(args: &GenerateArgs) -> Result<()> {
    let ws = Workspace::load(&args.config)?;
    let seed = args.seed.unwrap_or(ws.cfg.seed);
    let sched = ws.cfg.build_schedule()?;
    let steps = args.steps.unwrap_or(ws.cfg.grid.steps);
    let grid = TimeGrid::new(steps, sched.horizon)?;
    let target = ws.target()?;

    let batch = if let Some(t) = args.forward_t {
        forward_exact(&target, &sched, t, args.n, rng::derive_seed(seed, "sample", &[]))?
    } else {
        let score = ws.score_source(&args.score, &target, &sched, seed)?;
        generate(args.scheme, &score, &sched, &grid, args.n, rng::derive_seed(seed, "sample", &[]))?
    };
    write_samples(&args.out, &batch)?;
    println!("wrote {} samples of dimension {} to {}", batch.len(), batch.dim(), args.out.display());
    Ok(())
}

pub struct TrainArgs {
    pub config: PathBuf,
    pub loss: Option<String>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub batch: Option<usize>,
    pub seed: Option<u64>,
    pub preprocess: Option<String>,
    pub out: PathBuf,
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let mut ws = Workspace::load(&args.config)?;
    if let Some(p) = &args.preprocess {
        ws.cfg.preprocess = match p.as_str() {
            "none" => Preprocess::None,
            "rescale" => Preprocess::Rescale,
            other => return Err(Error::Config(format!("unknown preprocess mode {other}"))),
        };
    }
    let seed = args.seed.unwrap_or(ws.cfg.seed);
    let sched = ws.cfg.build_schedule()?;
    let (mut tc, n_train) = ws.cfg.train_config(rng::derive_seed(seed, "train", &[]))?;
    if let Some(loss) = &args.loss {
        tc.loss = match loss.as_str() {
            "explicit" => sgmsched_core::scorenet::LossKind::Explicit,
            "conditional" => sgmsched_core::scorenet::LossKind::Conditional,
            other => return Err(Error::Config(format!("unknown loss {other}"))),
        };
    }
    if let Some(e) = args.epochs {
        tc.epochs = e;
    }
    if let Some(lr) = args.lr {
        tc.learning_rate = lr;
    }
    if let Some(b) = args.batch {
        tc.batch_size = b;
    }

    let (target, transform) = ws.working_target(seed)?;
    let data_seed = rng::derive_seed(seed, "train-data", &[]);
    let result = train(&target, &sched, &tc, n_train, data_seed)?;
    write_params(&args.out, &result.params)?;
    if let Some(tr) = &transform {
        let tpath = args.out.with_extension("transform.json");
        write_json(&tpath, tr)?;
        println!("wrote transform to {}", tpath.display());
    }
    println!(
        "trained {} epochs; first/last epoch loss {} / {}; params at {}",
        tc.epochs,
        fmt_f64(result.epoch_losses[0]),
        fmt_f64(*result.epoch_losses.last().unwrap()),
        args.out.display()
    );
    Ok(())
}

pub struct BoundArgs {
    pub config: PathBuf,
    pub metric: Option<BoundMetricName>,
    pub refined: bool,
    pub eps: Option<String>,
    pub n_mc: Option<usize>,
    pub steps: Option<usize>,
    pub score: Option<String>,
    pub seed: Option<u64>,
    pub out: PathBuf,
}

#[derive(Serialize)]
#[serde(rename_all = "kebab-case")]
enum BoundReportJson {
    Kl(KlBoundReport),
    W2 {
        #[serde(flatten)]
        report: W2BoundReport,
        #[serde(skip_serializing_if = "Option::is_none")]
        transferred_total: Option<f64>,
    },
}

pub fn cmd_bound(args: &BoundArgs) -> Result<()> {
    let ws = Workspace::load(&args.config)?;
    let seed = args.seed.unwrap_or(ws.cfg.seed);
    let sched = ws.cfg.build_schedule()?;
    let steps = args.steps.unwrap_or(ws.cfg.grid.steps);
    let grid = TimeGrid::new(steps, sched.horizon)?;
    let metric = args
        .metric
        .or(ws.cfg.bound.as_ref().map(|b| b.metric))
        .ok_or_else(|| Error::Config("bound metric missing: pass --metric or a [bound] section".into()))?;
    let refined = args.refined || ws.cfg.bound.as_ref().is_some_and(|b| b.refined);
    let n_mc = args
        .n_mc
        .or(ws.cfg.bound.as_ref().map(|b| b.n_mc))
        .unwrap_or(crate::config::default_n_mc());
    let eps_text = args
        .eps
        .clone()
        .or(ws.cfg.bound.as_ref().map(|b| b.eps.clone()))
        .unwrap_or_else(|| "0".to_string());
    let eps_choice = parse_eps(&eps_text)?;
    let score_spec = args
        .score
        .clone()
        .or(ws.cfg.sample.as_ref().map(|s| s.score.clone()))
        .unwrap_or_else(|| "exact".to_string());

    let (target, transform) = ws.working_target(seed)?;
    let gaussian = ws.working_gaussian(&target, seed)?;
    let score = ws.score_source(&score_spec, &target, &sched, seed)?;
    let mc_seed = rng::derive_seed(seed, "mc", &[]);

    let report = match metric {
        BoundMetricName::Kl => {
            BoundReportJson::Kl(kl_bound(&gaussian, &sched, &grid, &score, n_mc, mc_seed, refined)?)
        }
        BoundMetricName::W2 => {
            let constants = BoundConstants::from_gaussian(&gaussian, &sched, &grid)?;
            let eps = match eps_choice {
                EpsChoice::Zero => 0.0,
                EpsChoice::Fixed(v) => v,
                EpsChoice::Estimate => match &score {
                    ScoreSource::Learned { params, .. } => {
                        estimate_eps(&gaussian, &sched, &grid, params, n_mc, mc_seed)?.eps
                    }
                    _ => 0.0,
                },
            };
            let report = w2_bound(&gaussian, &sched, &grid, &constants, Some(eps))?;
            let transferred_total = transform
                .as_ref()
                .map(|tr| tr.transfer_bound(report.total))
                .transpose()?;
            BoundReportJson::W2 { report, transferred_total }
        }
    };
    write_json(&args.out, &report)?;
    println!("wrote bound report to {}", args.out.display());
    Ok(())
}

pub struct MetricsArgs {
    pub config: PathBuf,
    pub metric: String,
    pub a: PathBuf,
    pub b: Option<PathBuf>,
    pub projections: usize,
    pub k: String,
    pub seed: Option<u64>,
    pub out: PathBuf,
}

pub fn cmd_metrics(args: &MetricsArgs) -> Result<()> {
    let ws = Workspace::load(&args.config)?;
    let seed = args.seed.unwrap_or(ws.cfg.seed);
    let batch_a = read_samples(&args.a)?;
    let need_b = || -> Result<SampleBatch> {
        args.b
            .as_ref()
            .ok_or_else(|| Error::Config(format!("metric {} needs --b", args.metric)))
            .and_then(|p| read_samples(p))
    };
    let target = ws.target()?;

    let report = match args.metric.as_str() {
        "gauss-kl" | "gauss-w2" => {
            let reference = target.as_gaussian()?;
            let (kl, w2) = gauss_divergences(reference, &batch_a)?;
            let (name, value) = if args.metric == "gauss-kl" {
                (MetricName::GaussKl, kl)
            } else {
                (MetricName::GaussW2, w2)
            };
            MetricReport { name, value, n_used: batch_a.len(), params: MetricParams::default() }
        }
        "sliced-w2" => {
            let batch_b = need_b()?;
            let value = sliced_w2(
                &batch_a,
                &batch_b,
                args.projections,
                rng::derive_seed(seed, "mc", &[]),
            )?;
            MetricReport {
                name: MetricName::SlicedW2,
                value,
                n_used: batch_a.len().min(batch_b.len()),
                params: MetricParams { projections: Some(args.projections), ..Default::default() },
            }
        }
        "knn-kl" => {
            let batch_b = need_b()?;
            let k = if args.k == "auto" {
                knn_default_k(batch_a.dim())
            } else {
                args.k
                    .parse::<usize>()
                    .map_err(|_| Error::Config(format!("--k must be auto or a count, got {}", args.k)))?
            };
            let (value, floor_hits) = knn_kl_detailed(&batch_a, &batch_b, k)?;
            MetricReport {
                name: MetricName::KnnKl,
                value,
                n_used: batch_a.len(),
                params: MetricParams { k: Some(k), floor_hits: Some(floor_hits), ..Default::default() },
            }
        }
        "nll" => MetricReport {
            name: MetricName::Nll,
            value: nll(&target, &batch_a)?,
            n_used: batch_a.len(),
            params: MetricParams::default(),
        },
        other => return Err(Error::Config(format!("unknown metric {other}"))),
    };
    write_json(&args.out, &report)?;
    println!("{} = {}", args.metric, fmt_f64(report.value));
    Ok(())
}

pub struct TuneArgs {
    pub config: PathBuf,
    pub metric: Option<BoundMetricName>,
    pub a_min: f64,
    pub a_max: f64,
    pub a_step: f64,
    pub refine_step: f64,
    pub refine_radius: f64,
    pub skip_refine: bool,
    pub runs: usize,
    pub score: Option<String>,
    pub eps: Option<String>,
    pub empirical: bool,
    pub seed: Option<u64>,
    pub out: PathBuf,
}

fn sweep_csv(result: &SweepResult) -> String {
    let mut out = String::from("a,bound_total,bound_e1,bound_e2,bound_e3_or_eps,emp_mean,emp_std,n_runs\n");
    for row in &result.rows {
        let opt = |v: Option<f64>| v.map(|x| fmt_f64(x)).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            fmt_f64(row.a),
            fmt_f64(row.bound_total),
            fmt_f64(row.bound_e1),
            fmt_f64(row.bound_e2),
            fmt_f64(row.bound_e3_or_eps),
            opt(row.emp_mean),
            opt(row.emp_std),
            row.n_runs
        ));
    }
    out
}

pub fn cmd_tune(args: &TuneArgs) -> Result<()> {
    let ws = Workspace::load(&args.config)?;
    let seed = args.seed.unwrap_or(ws.cfg.seed);
    let metric = args
        .metric
        .or(ws.cfg.bound.as_ref().map(|b| b.metric))
        .unwrap_or(BoundMetricName::Kl);
    let sweep_metric = match metric {
        BoundMetricName::Kl => SweepMetric::Kl,
        BoundMetricName::W2 => SweepMetric::W2,
    };
    let target = ws.target()?;
    let grid = ws.cfg.build_grid()?;
    let mut cfg = SweepConfig::new(sweep_metric, target, grid);
    cfg.beta0 = ws.cfg.schedule.beta0;
    cfg.beta1 = ws.cfg.schedule.beta1;
    cfg.sigma2 = ws.cfg.schedule.sigma2;
    cfg.refined = ws.cfg.bound.as_ref().is_some_and(|b| b.refined);
    cfg.rescale = ws.cfg.preprocess == Preprocess::Rescale;
    if let Some(b) = &ws.cfg.bound {
        cfg.n_mc = b.n_mc;
    }
    let eps_text = args
        .eps
        .clone()
        .or(ws.cfg.bound.as_ref().map(|b| b.eps.clone()))
        .unwrap_or_else(|| "0".to_string());
    cfg.eps = match parse_eps(&eps_text)? {
        EpsChoice::Zero => EpsMode::Zero,
        EpsChoice::Estimate => EpsMode::Estimate { n_mc: cfg.n_mc },
        EpsChoice::Fixed(v) => EpsMode::Fixed(v),
    };
    let score_spec = args
        .score
        .clone()
        .or(ws.cfg.sample.as_ref().map(|s| s.score.clone()))
        .unwrap_or_else(|| "exact".to_string());
    cfg.score = match score_spec.as_str() {
        "exact" => ScoreMode::Exact,
        "zero" => ScoreMode::Zero,
        "train" => {
            let (tc, n_train) = ws.cfg.train_config(0)?;
            cfg.cache_dir = Some(ws.cfg.out_dir.join("cache"));
            ScoreMode::Train { cfg: tc, n_train }
        }
        other => return Err(Error::Config(format!("tune --score must be exact, zero, or train; got {other}"))),
    };
    let scheme = ws.cfg.sample.as_ref().map(|s| s.scheme).unwrap_or(Scheme::Em);
    let n_gen = ws.cfg.sample.as_ref().map(|s| s.n).unwrap_or(N_FIT);
    if args.empirical {
        cfg.empirical = Some(EmpiricalSpec { n_gen, scheme, n_runs: 1 });
    }

    let a_values: Vec<f64> = {
        let mut v = Vec::new();
        let count = ((args.a_max - args.a_min) / args.a_step).round() as usize;
        for i in 0..=count {
            v.push(args.a_min + i as f64 * args.a_step);
        }
        v
    };
    let coarse = sweep(&cfg, &a_values, seed)?;
    let result = if args.skip_refine {
        coarse
    } else {
        let mut fine_cfg = cfg.clone();
        if let Some(spec) = &mut fine_cfg.empirical {
            spec.n_runs = args.runs;
        }
        refine(&fine_cfg, &coarse, args.refine_step, args.refine_radius, seed)?
    };

    std::fs::create_dir_all(args.out.parent().unwrap_or(Path::new(".")))?;
    std::fs::write(&args.out, sweep_csv(&result))?;
    write_json(&args.out.with_extension("json"), &result)?;
    println!("a_star = {}", fmt_f64(result.a_star));
    println!("wrote sweep to {}", args.out.display());
    Ok(())
}

#[derive(Serialize)]
struct RunReport {
    config: ExperimentConfig,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    metrics: Vec<MetricReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bound: Option<BoundReportJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    generated_file: Option<String>,
}

pub fn cmd_run(config_path: &Path) -> Result<()> {
    let ws = Workspace::load(config_path)?;
    let seed = ws.cfg.seed;
    std::fs::create_dir_all(&ws.cfg.out_dir)?;

    if let Some(sweep_spec) = ws.cfg.sweep.clone() {
        let out = ws.cfg.out_dir.join("sweep.csv");
        let args = TuneArgs {
            config: config_path.to_path_buf(),
            metric: ws.cfg.bound.as_ref().map(|b| b.metric),
            a_min: sweep_spec.a_min,
            a_max: sweep_spec.a_max,
            a_step: sweep_spec.a_step,
            refine_step: sweep_spec.refine_step.unwrap_or(0.25),
            refine_radius: sweep_spec.refine_radius.unwrap_or(1.0),
            skip_refine: sweep_spec.refine_step.is_none(),
            runs: sweep_spec.runs,
            score: None,
            eps: None,
            empirical: sweep_spec.empirical,
            seed: Some(seed),
            out,
        };
        return cmd_tune(&args);
    }

    let sched = ws.cfg.build_schedule()?;
    let grid = ws.cfg.build_grid()?;
    let original = ws.target()?;
    let (working, transform) = ws.working_target(seed)?;

    let mut metric_reports = Vec::new();
    let mut generated_file = None;
    if !ws.cfg.metrics.is_empty() {
        let sample_spec = ws
            .cfg
            .sample
            .clone()
            .ok_or_else(|| Error::Config("metrics requested but no [sample] section".into()))?;
        let score = ws.score_source(&sample_spec.score, &working, &sched, seed)?;
        let batch = generate(
            sample_spec.scheme,
            &score,
            &sched,
            &grid,
            sample_spec.n,
            rng::derive_seed(seed, "sample", &[]),
        )?;
        let batch = match &transform {
            Some(tr) => tr.inverse(&batch)?,
            None => batch,
        };
        let gen_path = ws.cfg.out_dir.join("generated.bin");
        write_samples(&gen_path, &batch)?;
        generated_file = Some(gen_path.display().to_string());

        for metric in &ws.cfg.metrics {
            let report = match metric.as_str() {
                "gauss-kl" | "gauss-w2" => {
                    let reference = original.as_gaussian()?;
                    let (kl, w2) = gauss_divergences(reference, &batch)?;
                    let (name, value) = if metric == "gauss-kl" {
                        (MetricName::GaussKl, kl)
                    } else {
                        (MetricName::GaussW2, w2)
                    };
                    MetricReport { name, value, n_used: batch.len(), params: MetricParams::default() }
                }
                "sliced-w2" | "knn-kl" => {
                    let reference =
                        original.sample(batch.len(), rng::derive_seed(seed, "reference", &[]))?;
                    if metric == "sliced-w2" {
                        let value =
                            sliced_w2(&reference, &batch, 2000, rng::derive_seed(seed, "mc", &[]))?;
                        MetricReport {
                            name: MetricName::SlicedW2,
                            value,
                            n_used: batch.len(),
                            params: MetricParams { projections: Some(2000), ..Default::default() },
                        }
                    } else {
                        let k = knn_default_k(batch.dim());
                        let (value, floor_hits) = knn_kl_detailed(&reference, &batch, k)?;
                        MetricReport {
                            name: MetricName::KnnKl,
                            value,
                            n_used: batch.len(),
                            params: MetricParams { k: Some(k), floor_hits: Some(floor_hits), ..Default::default() },
                        }
                    }
                }
                "nll" => MetricReport {
                    name: MetricName::Nll,
                    value: nll(&original, &batch)?,
                    n_used: batch.len(),
                    params: MetricParams::default(),
                },
                other => return Err(Error::Config(format!("unknown metric {other}"))),
            };
            metric_reports.push(report);
        }
    }

    let bound_report = match &ws.cfg.bound {
        None => None,
        Some(spec) => {
            let gaussian = ws.working_gaussian(&working, seed)?;
            let score_spec = ws
                .cfg
                .sample
                .as_ref()
                .map(|s| s.score.clone())
                .unwrap_or_else(|| "exact".to_string());
            let score = ws.score_source(&score_spec, &working, &sched, seed)?;
            let mc_seed = rng::derive_seed(seed, "mc", &[]);
            Some(match spec.metric {
                BoundMetricName::Kl => BoundReportJson::Kl(kl_bound(
                    &gaussian,
                    &sched,
                    &grid,
                    &score,
                    spec.n_mc,
                    mc_seed,
                    spec.refined,
                )?),
                BoundMetricName::W2 => {
                    let constants = BoundConstants::from_gaussian(&gaussian, &sched, &grid)?;
                    let eps = match parse_eps(&spec.eps)? {
                        EpsChoice::Zero => 0.0,
                        EpsChoice::Fixed(v) => v,
                        EpsChoice::Estimate => match &score {
                            ScoreSource::Learned { params, .. } => {
                                estimate_eps(&gaussian, &sched, &grid, params, spec.n_mc, mc_seed)?.eps
                            }
                            _ => 0.0,
                        },
                    };
                    let report = w2_bound(&gaussian, &sched, &grid, &constants, Some(eps))?;
                    let transferred_total = transform
                        .as_ref()
                        .map(|tr| tr.transfer_bound(report.total))
                        .transpose()?;
                    BoundReportJson::W2 { report, transferred_total }
                }
            })
        }
    };

    // canonical CSV artifact
    let mut csv = String::from("name,value\n");
    for report in &metric_reports {
        let name = match report.name {
            MetricName::GaussKl => "gauss-kl",
            MetricName::GaussW2 => "gauss-w2",
            MetricName::SlicedW2 => "sliced-w2",
            MetricName::KnnKl => "knn-kl",
            MetricName::Nll => "nll",
        };
        csv.push_str(&format!("{name},{}\n", fmt_f64(report.value)));
    }
    match &bound_report {
        Some(BoundReportJson::Kl(r)) => {
            csv.push_str(&format!("bound.kl.e1,{}\n", fmt_f64(r.e1)));
            if let Some(refined) = r.e1_refined {
                csv.push_str(&format!("bound.kl.e1_refined,{}\n", fmt_f64(refined)));
            }
            csv.push_str(&format!("bound.kl.e2,{}\n", fmt_f64(r.e2)));
            csv.push_str(&format!("bound.kl.e3,{}\n", fmt_f64(r.e3)));
            csv.push_str(&format!("bound.kl.total,{}\n", fmt_f64(r.total)));
        }
        Some(BoundReportJson::W2 { report: r, transferred_total }) => {
            csv.push_str(&format!("bound.w2.e1,{}\n", fmt_f64(r.e1)));
            csv.push_str(&format!("bound.w2.e2_discretization,{}\n", fmt_f64(r.e2_discretization)));
            csv.push_str(&format!("bound.w2.e2_eps,{}\n", fmt_f64(r.e2_eps)));
            csv.push_str(&format!("bound.w2.e2_time,{}\n", fmt_f64(r.e2_time)));
            csv.push_str(&format!("bound.w2.total,{}\n", fmt_f64(r.total)));
            if let Some(t) = transferred_total {
                csv.push_str(&format!("bound.w2.transferred_total,{}\n", fmt_f64(*t)));
            }
        }
        None => {}
    }
    let csv_path = ws.cfg.out_dir.join("results.csv");
    let mut f = std::fs::File::create(&csv_path)?;
    f.write_all(csv.as_bytes())?;

    let report = RunReport {
        config: ws.cfg.clone(),
        metrics: metric_reports,
        bound: bound_report,
        generated_file,
    };
    write_json(&ws.cfg.out_dir.join("report.json"), &report)?;
    println!("wrote {} and report.json", csv_path.display());
    Ok(())
}
