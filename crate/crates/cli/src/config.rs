//! Experiment configuration: a TOML file with target, schedule, grid, and
//! optional train/sample/bound/sweep sections. Unknown keys are rejected and
//! referenced files must exist at validation time.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use sgmsched_core::diffusion::{Scheme, TimeGrid};
use sgmsched_core::scorenet::{LossKind, TrainConfig};
use sgmsched_core::targets::{GaussianTarget, Target};
use sgmsched_core::{Error, Result, Schedule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    pub target: TargetSpec,
    pub schedule: ScheduleSpec,
    pub grid: GridSpec,
    #[serde(default)]
    pub train: Option<TrainSpec>,
    #[serde(default)]
    pub sample: Option<SampleSpec>,
    #[serde(default)]
    pub bound: Option<BoundSpec>,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub metrics: Vec<String>,
    #[serde(default)]
    pub preprocess: Preprocess,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preprocess {
    #[default]
    None,
    Rescale,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct TargetSpec {
    pub kind: TargetKind,
    pub dim: usize,
    /// Mean fill value for the Gaussian families (`custom-gaussian` reads the
    /// full vector from `mu-file`-less scalar fill as well).
    #[serde(default)]
    pub mu: Option<f64>,
    /// Dense covariance for `custom-gaussian`: square matrix file.
    #[serde(default)]
    pub sigma_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetKind {
    Iso,
    Heterosc,
    Corr,
    Funnel,
    Gmm25,
    CustomGaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ScheduleSpec {
    pub kind: ScheduleKindSpec,
    #[serde(default)]
    pub a: Option<f64>,
    #[serde(default)]
    pub s: Option<f64>,
    #[serde(default = "default_beta0")]
    pub beta0: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(rename = "T", default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_sigma2")]
    pub sigma2: f64,
}

fn default_beta0() -> f64 {
    0.1
}
fn default_beta1() -> f64 {
    20.0
}
fn default_horizon() -> f64 {
    1.0
}
fn default_sigma2() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKindSpec {
    Linear,
    Parametric,
    Cosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct GridSpec {
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct TrainSpec {
    pub loss: LossName,
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch: usize,
    pub lr: f64,
    #[serde(default = "default_width")]
    pub width: usize,
    pub n_train: usize,
}

fn default_batch() -> usize {
    64
}
fn default_width() -> usize {
    256
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossName {
    Explicit,
    Conditional,
}

impl From<LossName> for LossKind {
    fn from(value: LossName) -> Self {
        match value {
            LossName::Explicit => LossKind::Explicit,
            LossName::Conditional => LossKind::Conditional,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct SampleSpec {
    pub n: usize,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    /// `exact`, `zero`, `train`, or `net:<params-file>`.
    #[serde(default = "default_score")]
    pub score: String,
}

fn default_scheme() -> Scheme {
    Scheme::Em
}
fn default_score() -> String {
    "exact".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct BoundSpec {
    pub metric: BoundMetricName,
    #[serde(default)]
    pub refined: bool,
    /// `"0"`, `"estimate"`, or a numeric literal.
    #[serde(default = "default_eps")]
    pub eps: String,
    #[serde(default = "default_n_mc")]
    pub n_mc: usize,
}

fn default_eps() -> String {
    "0".to_string()
}
pub fn default_n_mc() -> usize {
    500
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundMetricName {
    Kl,
    W2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct SweepSpec {
    #[serde(default = "default_a_min")]
    pub a_min: f64,
    #[serde(default = "default_a_max")]
    pub a_max: f64,
    #[serde(default = "default_a_step")]
    pub a_step: f64,
    #[serde(default)]
    pub refine_step: Option<f64>,
    #[serde(default)]
    pub refine_radius: Option<f64>,
    #[serde(default = "default_runs")]
    pub runs: usize,
    /// Whether to run the sampler and report the empirical metric per `a`.
    #[serde(default)]
    pub empirical: bool,
}

fn default_a_min() -> f64 {
    -10.0
}
fn default_a_max() -> f64 {
    10.0
}
fn default_a_step() -> f64 {
    1.0
}
fn default_runs() -> usize {
    1
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate(path.parent().unwrap_or(Path::new(".")))?;
        Ok(cfg)
    }

    pub fn validate(&self, base: &Path) -> Result<()> {
        if self.target.dim == 0 {
            return Err(Error::Config("target.dim must be >= 1".into()));
        }
        match self.target.kind {
            TargetKind::CustomGaussian => {
                let file = self.target.sigma_file.as_ref().ok_or_else(|| {
                    Error::Config("custom-gaussian target needs target.sigma-file".into())
                })?;
                let resolved = resolve(base, file);
                if !resolved.exists() {
                    return Err(Error::Config(format!(
                        "target.sigma-file {} does not exist",
                        resolved.display()
                    )));
                }
            }
            _ => {
                if self.target.sigma_file.is_some() {
                    return Err(Error::Config(
                        "target.sigma-file only applies to custom-gaussian".into(),
                    ));
                }
            }
        }
        match self.schedule.kind {
            ScheduleKindSpec::Parametric if self.schedule.a.is_none() => {
                return Err(Error::Config("parametric schedule needs schedule.a".into()))
            }
            ScheduleKindSpec::Cosine if self.schedule.s.is_none() => {
                return Err(Error::Config("cosine schedule needs schedule.s".into()))
            }
            _ => {}
        }
        if let Some(bound) = &self.bound {
            parse_eps(&bound.eps)?;
        }
        if let Some(sample) = &self.sample {
            if let Some(file) = sample.score.strip_prefix("net:") {
                let resolved = resolve(base, Path::new(file));
                if !resolved.exists() {
                    return Err(Error::Config(format!(
                        "sample.score net file {} does not exist",
                        resolved.display()
                    )));
                }
            } else if !matches!(sample.score.as_str(), "exact" | "zero" | "train") {
                return Err(Error::Config(format!(
                    "sample.score must be exact, zero, train, or net:<file>; got {}",
                    sample.score
                )));
            }
        }
        for m in &self.metrics {
            if !matches!(m.as_str(), "gauss-kl" | "gauss-w2" | "sliced-w2" | "knn-kl" | "nll") {
                return Err(Error::Config(format!("unknown metric {m}")));
            }
        }
        Ok(())
    }

    pub fn build_target(&self, base: &Path) -> Result<Target> {
        let d = self.target.dim;
        match self.target.kind {
            TargetKind::Iso => with_mean(Target::iso(d)?, self.target.mu),
            TargetKind::Heterosc => with_mean(Target::heterosc(d)?, self.target.mu),
            TargetKind::Corr => with_mean(Target::corr(d)?, self.target.mu),
            TargetKind::Funnel => Target::funnel(d),
            TargetKind::Gmm25 => Target::gmm25(d),
            TargetKind::CustomGaussian => {
                let file = self.target.sigma_file.as_ref().expect("validated");
                let sigma = sgmsched_core::io::read_matrix(&resolve(base, file))?;
                if sigma.nrows() != d {
                    return Err(Error::Config(format!(
                        "target.dim = {d} but sigma-file is {}x{}",
                        sigma.nrows(),
                        sigma.ncols()
                    )));
                }
                let mu = nalgebra::DVector::from_element(d, self.target.mu.unwrap_or(0.0));
                Ok(Target::Gaussian(GaussianTarget::new(mu, sigma)?))
            }
        }
    }

    pub fn build_schedule(&self) -> Result<Schedule> {
        let s = &self.schedule;
        match s.kind {
            ScheduleKindSpec::Linear => Schedule::linear(s.beta0, s.beta1, s.horizon, s.sigma2),
            ScheduleKindSpec::Parametric => {
                Schedule::parametric(s.a.expect("validated"), s.beta0, s.beta1, s.horizon, s.sigma2)
            }
            ScheduleKindSpec::Cosine => Schedule::cosine(s.s.expect("validated"), s.horizon, s.sigma2),
        }
    }

    pub fn build_grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.grid.steps, self.schedule.horizon)
    }

    pub fn train_config(&self, seed: u64) -> Result<(TrainConfig, usize)> {
        let spec = self
            .train
            .as_ref()
            .ok_or_else(|| Error::Config("this operation needs a [train] section".into()))?;
        Ok((
            TrainConfig {
                loss: spec.loss.into(),
                epochs: spec.epochs,
                batch_size: spec.batch,
                learning_rate: spec.lr,
                width: spec.width,
                seed,
            },
            spec.n_train,
        ))
    }
}

fn with_mean(target: Target, mu: Option<f64>) -> Result<Target> {
    match (target, mu) {
        (t, None) => Ok(t),
        (Target::Gaussian(g), Some(m)) => Ok(Target::Gaussian(GaussianTarget::new(
            nalgebra::DVector::from_element(g.dim(), m),
            g.sigma().clone(),
        )?)),
        (t, Some(_)) => Ok(t),
    }
}

pub fn resolve(base: &Path, file: &Path) -> PathBuf {
    if file.is_absolute() {
        file.to_path_buf()
    } else {
        base.join(file)
    }
}

/// Parses the `--eps` argument: `0`, `estimate`, or a literal value.
pub fn parse_eps(text: &str) -> Result<EpsChoice> {
    match text {
        "0" => Ok(EpsChoice::Zero),
        "estimate" => Ok(EpsChoice::Estimate),
        other => other
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("eps must be 0, estimate, or a number; got {other}")))
            .and_then(|v| {
                if v < 0.0 {
                    Err(Error::Config("eps must be >= 0".into()))
                } else {
                    Ok(EpsChoice::Fixed(v))
                }
            }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsChoice {
    Zero,
    Estimate,
    Fixed(f64),
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
seed = 42
out-dir = "out"
metrics = ["gauss-kl"]

[target]
kind = "iso"
dim = 10
mu = 1.0

[schedule]
kind = "parametric"
a = 2.0
beta0 = 0.1
beta1 = 20.0
T = 1.0
sigma2 = 1.0

[grid]
steps = 500

[train]
loss = "explicit"
epochs = 20
batch = 64
lr = 1e-4
width = 64
n-train = 1000
"#;

    #[test]
    fn round_trip_is_identity() {
        let cfg: ExperimentConfig = toml::from_str(SAMPLE).unwrap();
        let text = toml::to_string(&cfg).unwrap();
        let again: ExperimentConfig = toml::from_str(&text).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = SAMPLE.replace("out-dir = \"out\"", "out-dir = \"out\"\nbogus = 1");
        assert!(toml::from_str::<ExperimentConfig>(&bad).is_err());
        let bad_nested = SAMPLE.replace("steps = 500", "steps = 500\nextra = 2");
        assert!(toml::from_str::<ExperimentConfig>(&bad_nested).is_err());
    }

    #[test]
    fn parametric_without_a_rejected() {
        let bad = SAMPLE.replace("a = 2.0\n", "");
        let cfg: ExperimentConfig = toml::from_str(&bad).unwrap();
        assert!(cfg.validate(Path::new(".")).is_err());
    }

    #[test]
    fn eps_parsing() {
        assert_eq!(parse_eps("0").unwrap(), EpsChoice::Zero);
        assert_eq!(parse_eps("estimate").unwrap(), EpsChoice::Estimate);
        assert_eq!(parse_eps("0.25").unwrap(), EpsChoice::Fixed(0.25));
        assert!(parse_eps("-1").is_err());
        assert!(parse_eps("abc").is_err());
    }
}
