//! Noise-schedule families and the forward-process scalars derived from them.
//!
//! A schedule is the diffusion strength `β(t)` of the forward SDE on `[0, T]`.
//! Three families are supported:
//!
//! * `Linear` — affine interpolation between `beta0` and `beta1`;
//! * `Parametric(a)` — `beta0 + (beta1-beta0)(e^{at}-1)/(e^{aT}-1)`, the
//!   affine-normalized exponential family hitting both endpoints, with the
//!   linear schedule as its `a -> 0` limit;
//! * `Cosine(s)` — `σ² π/(T(s+1)) tan(π(s + t/T)/(2(s+1)))`, capped at
//!   [`COSINE_CLIP`] for sampling and integration because the raw form blows
//!   up at `t = T`.
//!
//! All derived scalars (`m_t`, `σ_t²`) use closed-form integrals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cap applied to the cosine schedule for sampling and integration.
pub const COSINE_CLIP: f64 = 200.0;

/// Below this |a| the parametric family evaluates through the linear formula
/// to avoid 0/0.
pub const PARAMETRIC_A_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ScheduleKind {
    Linear,
    Parametric { a: f64 },
    Cosine { s: f64 },
}

/// A noise schedule together with the horizon `T` and the stationary
/// variance `σ²` of the forward process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub kind: ScheduleKind,
    pub beta0: f64,
    pub beta1: f64,
    pub horizon: f64,
    pub sigma2: f64,
}

impl Schedule {
    pub fn linear(beta0: f64, beta1: f64, horizon: f64, sigma2: f64) -> Result<Self> {
        Self::new(ScheduleKind::Linear, beta0, beta1, horizon, sigma2)
    }

    pub fn parametric(a: f64, beta0: f64, beta1: f64, horizon: f64, sigma2: f64) -> Result<Self> {
        Self::new(ScheduleKind::Parametric { a }, beta0, beta1, horizon, sigma2)
    }

    /// Cosine schedule; `beta0`/`beta1` do not apply, β(0) is determined by `s`.
    pub fn cosine(s: f64, horizon: f64, sigma2: f64) -> Result<Self> {
        if !(s > 0.0) {
            return Err(Error::Domain(format!("cosine offset s must be > 0, got {s}")));
        }
        let mut sched = Schedule {
            kind: ScheduleKind::Cosine { s },
            beta0: 0.0,
            beta1: 0.0,
            horizon,
            sigma2,
        };
        Self::check_horizon(horizon, sigma2)?;
        sched.beta0 = sched.beta(0.0)?;
        sched.beta1 = sched.beta(horizon)?;
        Ok(sched)
    }

    fn new(kind: ScheduleKind, beta0: f64, beta1: f64, horizon: f64, sigma2: f64) -> Result<Self> {
        Self::check_horizon(horizon, sigma2)?;
        if !(beta0 > 0.0) {
            return Err(Error::Domain(format!("beta0 must be > 0, got {beta0}")));
        }
        if beta1 < beta0 {
            return Err(Error::Domain(format!(
                "beta1 ({beta1}) < beta0 ({beta0}) violates the nondecreasing requirement"
            )));
        }
        Ok(Schedule { kind, beta0, beta1, horizon, sigma2 })
    }

    fn check_horizon(horizon: f64, sigma2: f64) -> Result<()> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Domain(format!("horizon must be positive, got {horizon}")));
        }
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::Domain(format!("sigma2 must be positive, got {sigma2}")));
        }
        Ok(())
    }

    /// The parametric family over `a ∈ {-10..10}` with the paper-standard
    /// endpoints β(0)=0.1, β(T)=20, T=1, σ²=1; `a = 0` is the linear VPSDE.
    pub fn standard_parametric(a: f64) -> Self {
        Schedule::parametric(a, 0.1, 20.0, 1.0, 1.0).expect("valid standard schedule")
    }

    /// The standard cosine schedule with `s = 0.021122`, chosen so that
    /// β_cos(0) ≈ 0.1.
    pub fn standard_cosine() -> Self {
        Schedule::cosine(0.021122, 1.0, 1.0).expect("valid standard schedule")
    }

    fn check_t(&self, t: f64) -> Result<()> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::Domain(format!(
                "t = {t} outside [0, {}]",
                self.horizon
            )));
        }
        Ok(())
    }

    /// β(t). Cosine values are clipped at [`COSINE_CLIP`]; use
    /// [`Schedule::beta_unclipped`] for the raw closed form.
    pub fn beta(&self, t: f64) -> Result<f64> {
        self.check_t(t)?;
        Ok(match self.kind {
            ScheduleKind::Cosine { .. } => self.cosine_raw(t).min(COSINE_CLIP),
            _ => self.beta_unclipped_inner(t),
        })
    }

    /// β(t) without the cosine clip (diagnostics only).
    pub fn beta_unclipped(&self, t: f64) -> Result<f64> {
        self.check_t(t)?;
        Ok(self.beta_unclipped_inner(t))
    }

    fn beta_unclipped_inner(&self, t: f64) -> f64 {
        match self.kind {
            ScheduleKind::Linear => self.affine(t),
            ScheduleKind::Parametric { a } => {
                if a.abs() <= PARAMETRIC_A_EPS {
                    self.affine(t)
                } else {
                    let num = (a * t).exp_m1();
                    let den = (a * self.horizon).exp_m1();
                    self.beta0 + (self.beta1 - self.beta0) * num / den
                }
            }
            ScheduleKind::Cosine { .. } => self.cosine_raw(t),
        }
    }

    fn affine(&self, t: f64) -> f64 {
        self.beta0 + (self.beta1 - self.beta0) * t / self.horizon
    }

    fn cosine_raw(&self, t: f64) -> f64 {
        let ScheduleKind::Cosine { s } = self.kind else { unreachable!() };
        let scale = self.sigma2 * std::f64::consts::PI / (self.horizon * (s + 1.0));
        scale * self.cosine_angle(t, s).tan()
    }

    fn cosine_angle(&self, t: f64, s: f64) -> f64 {
        std::f64::consts::PI * (s + t / self.horizon) / (2.0 * (s + 1.0))
    }

    /// Forward time at which the raw cosine schedule reaches [`COSINE_CLIP`],
    /// or `horizon` if it never does.
    fn cosine_clip_time(&self, s: f64) -> f64 {
        let scale = self.sigma2 * std::f64::consts::PI / (self.horizon * (s + 1.0));
        let u_star = (COSINE_CLIP / scale).atan();
        let t = self.horizon * (u_star * 2.0 * (s + 1.0) / std::f64::consts::PI - s);
        t.clamp(0.0, self.horizon)
    }

    /// ∫_{t0}^{t1} β(s) ds in closed form (cosine uses the clipped β).
    pub fn beta_integral(&self, t0: f64, t1: f64) -> Result<f64> {
        self.check_t(t0)?;
        self.check_t(t1)?;
        if t1 < t0 {
            return Err(Error::Domain(format!("integral bounds reversed: [{t0}, {t1}]")));
        }
        Ok(match self.kind {
            ScheduleKind::Linear => self.affine_integral(t0, t1),
            ScheduleKind::Parametric { a } => {
                if a.abs() <= PARAMETRIC_A_EPS {
                    self.affine_integral(t0, t1)
                } else {
                    let c = self.beta1 - self.beta0;
                    let den = (a * self.horizon).exp_m1();
                    // ∫ (e^{as}-1) ds = (e^{a t1}-e^{a t0})/a - (t1-t0)
                    let core = ((a * t1).exp() - (a * t0).exp()) / a - (t1 - t0);
                    self.beta0 * (t1 - t0) + c * core / den
                }
            }
            ScheduleKind::Cosine { s } => {
                let t_clip = self.cosine_clip_time(s);
                let lo = t0.min(t_clip);
                let hi = t1.min(t_clip);
                let mut acc = if hi > lo { self.cosine_integral_raw(lo, hi, s) } else { 0.0 };
                if t1 > t_clip {
                    acc += COSINE_CLIP * (t1 - t_clip.max(t0));
                }
                acc
            }
        })
    }

    fn affine_integral(&self, t0: f64, t1: f64) -> f64 {
        self.beta0 * (t1 - t0)
            + (self.beta1 - self.beta0) * (t1 * t1 - t0 * t0) / (2.0 * self.horizon)
    }

    // ∫ tan(u(t)) dt with u affine in t gives a log-cos antiderivative:
    // ∫_{t0}^{t1} β_cos = 2 σ² ln(cos u(t0) / cos u(t1)).
    fn cosine_integral_raw(&self, t0: f64, t1: f64, s: f64) -> f64 {
        let u0 = self.cosine_angle(t0, s);
        let u1 = self.cosine_angle(t1, s);
        2.0 * self.sigma2 * (u0.cos() / u1.cos()).ln()
    }

    /// The forward-process scalars `(m_t, σ_t²)` with
    /// `m_t = exp(-∫₀ᵗ β/(2σ²))` and `σ_t² = σ²(1 - m_t²)`, computed jointly
    /// so that `m_t² + σ_t²/σ² = 1` exactly.
    pub fn m_sigma(&self, t: f64) -> Result<(f64, f64)> {
        let integral = self.beta_integral(0.0, t)?;
        let m = (-integral / (2.0 * self.sigma2)).exp();
        let sig2 = self.sigma2 * (-m).mul_add(m, 1.0);
        Ok((m, sig2))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn standard_linear() -> Schedule {
        Schedule::linear(0.1, 20.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn linear_endpoints_and_midpoint() {
        let s = standard_linear();
        assert_abs_diff_eq!(s.beta(0.0).unwrap(), 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(s.beta(1.0).unwrap(), 20.0, epsilon = 1e-9);
        // affine interpolation: 0.1 + 19.9 * 0.5
        assert_abs_diff_eq!(s.beta(0.5).unwrap(), 10.05, epsilon = 1e-12);
    }

    #[test]
    fn parametric_hits_endpoints() {
        for a in [-10.0, -1.0, 1e-3, 1.0, 10.0] {
            let s = Schedule::standard_parametric(a);
            assert_abs_diff_eq!(s.beta(0.0).unwrap(), 0.1, epsilon = 1e-12);
            assert_abs_diff_eq!(s.beta(1.0).unwrap(), 20.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn cosine_starts_near_one_tenth() {
        let s = Schedule::standard_cosine();
        assert_abs_diff_eq!(s.beta(0.0).unwrap(), 0.1, epsilon = 1e-3);
    }

    #[test]
    fn cosine_is_clipped_near_horizon() {
        let s = Schedule::standard_cosine();
        assert_eq!(s.beta(1.0).unwrap(), COSINE_CLIP);
        assert!(s.beta_unclipped(1.0).unwrap() > 1e12);
    }

    #[test]
    fn out_of_domain_rejected() {
        let s = standard_linear();
        assert!(s.beta(-0.01).is_err());
        assert!(s.beta(1.01).is_err());
        assert!(s.beta_integral(0.5, 0.2).is_err());
    }

    #[test]
    fn linear_integral_closed_form() {
        let s = standard_linear();
        assert_relative_eq!(s.beta_integral(0.0, 1.0).unwrap(), 10.05, max_relative = 1e-14);
        assert_eq!(s.beta_integral(0.3, 0.3).unwrap(), 0.0);
    }

    fn trapezoid_oracle(s: &Schedule, t0: f64, t1: f64, n: usize) -> f64 {
        let h = (t1 - t0) / n as f64;
        let mut acc = 0.5 * (s.beta(t0).unwrap() + s.beta(t1).unwrap());
        for i in 1..n {
            acc += s.beta(t0 + i as f64 * h).unwrap();
        }
        acc * h
    }

    #[test]
    fn parametric_integral_matches_quadrature_oracle() {
        for a in [-10.0, -1.0, 1.0, 10.0] {
            let s = Schedule::standard_parametric(a);
            let oracle = trapezoid_oracle(&s, 0.0, 1.0, 1_000_000);
            let closed = s.beta_integral(0.0, 1.0).unwrap();
            assert_relative_eq!(closed, oracle, max_relative = 1e-8);
        }
        // finer check for a single setting
        let s = Schedule::standard_parametric(1.0);
        assert_relative_eq!(
            s.beta_integral(0.0, 1.0).unwrap(),
            trapezoid_oracle(&s, 0.0, 1.0, 4_000_000),
            max_relative = 1e-10
        );
    }

    #[test]
    fn cosine_integral_matches_quadrature_oracle() {
        let s = Schedule::standard_cosine();
        let oracle = trapezoid_oracle(&s, 0.0, 1.0, 1_000_000);
        assert_relative_eq!(s.beta_integral(0.0, 1.0).unwrap(), oracle, max_relative = 1e-6);
    }

    #[test]
    fn integral_additivity() {
        for sched in [
            standard_linear(),
            Schedule::standard_parametric(3.0),
            Schedule::standard_cosine(),
        ] {
            let whole = sched.beta_integral(0.1, 0.9).unwrap();
            let split =
                sched.beta_integral(0.1, 0.43).unwrap() + sched.beta_integral(0.43, 0.9).unwrap();
            assert_relative_eq!(whole, split, max_relative = 1e-12);
        }
    }

    #[test]
    fn beta_nondecreasing_on_grid() {
        for sched in [
            standard_linear(),
            Schedule::standard_parametric(-10.0),
            Schedule::standard_parametric(10.0),
            Schedule::standard_cosine(),
        ] {
            let mut prev = f64::NEG_INFINITY;
            for k in 0..=1000 {
                let t = k as f64 / 1000.0;
                let b = sched.beta(t).unwrap();
                assert!(b > 0.0);
                assert!(b >= prev - 1e-12, "beta decreased at t={t}");
                prev = b;
            }
        }
    }

    #[test]
    fn parametric_small_a_converges_to_linear() {
        let lin = standard_linear();
        let tiny = Schedule::standard_parametric(1e-9);
        let mut max_gap: f64 = 0.0;
        for k in 0..=1000 {
            let t = k as f64 / 1000.0;
            max_gap = max_gap.max((tiny.beta(t).unwrap() - lin.beta(t).unwrap()).abs());
        }
        assert!(max_gap <= 1e-6, "max gap {max_gap}");
    }

    #[test]
    fn m_sigma_identities() {
        let s = standard_linear();
        let (m0, v0) = s.m_sigma(0.0).unwrap();
        assert_eq!((m0, v0), (1.0, 0.0));

        let (m1, v1) = s.m_sigma(1.0).unwrap();
        assert_relative_eq!(m1, (-5.025f64).exp(), max_relative = 1e-12);
        assert_relative_eq!(v1, 1.0 - (-10.05f64).exp(), max_relative = 1e-12);

        // constant beta = 2 via a degenerate linear schedule
        let c = Schedule::linear(2.0, 2.0, 1.0, 1.0).unwrap();
        let (m, v) = c.m_sigma(1.0).unwrap();
        assert_relative_eq!(m, (-1.0f64).exp(), max_relative = 1e-14);
        assert_relative_eq!(v, 1.0 - (-2.0f64).exp(), max_relative = 1e-14);
    }

    #[test]
    fn m_decreasing_sigma_increasing() {
        for sched in [Schedule::standard_parametric(-4.0), Schedule::standard_cosine()] {
            let mut prev_m = f64::INFINITY;
            let mut prev_v = f64::NEG_INFINITY;
            for k in 0..=300 {
                let t = k as f64 / 300.0;
                let (m, v) = sched.m_sigma(t).unwrap();
                if k > 0 {
                    assert!(m < prev_m);
                    assert!(v > prev_v);
                }
                assert_abs_diff_eq!(m * m + v / sched.sigma2, 1.0, epsilon = 1e-15);
                prev_m = m;
                prev_v = v;
            }
        }
    }
}
