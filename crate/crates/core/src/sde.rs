//! Forward noising processes.
//!
//! Three families are supported: variance exploding (VE), variance preserving
//! (VP) and sub-variance preserving (sub-VP). All of them have a linear drift
//! and a state-independent isotropic diffusion `g(t)·I`, so every perturbation
//! kernel `q(x(t) | x(0))` is an isotropic Gaussian with a closed form.
//!
//! The noise rate of VP and sub-VP is linear in time,
//! `β(t) = β_min + t·(β_max − β_min)`, with integral
//! `B(t) = β_min·t + ½·t²·(β_max − β_min)`. The VE noise scale is geometric,
//! `σ(t) = σ_min·(σ_max/σ_min)^t`.
//!
//! | family | drift `f(x,t)` | diffusion `g(t)` | kernel mean | kernel std |
//! |---|---|---|---|---|
//! | VE | `0` | `σ(t)·√(2 ln(σ_max/σ_min))` | `x0` | `σ(t)` |
//! | VP | `−½β(t)x` | `√β(t)` | `x0·e^{−B/2}` | `√(1 − e^{−B})` |
//! | sub-VP | `−½β(t)x` | `√(β(t)(1 − e^{−2B}))` | `x0·e^{−B/2}` | `1 − e^{−B}` |

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Terminal time of every process. Model time lives in `[eps, T_END]`.
pub const T_END: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SdeFamily {
    Ve,
    Vp,
    SubVp,
}

impl SdeFamily {
    pub const ALL: [SdeFamily; 3] = [SdeFamily::Ve, SdeFamily::Vp, SdeFamily::SubVp];

    pub fn name(self) -> &'static str {
        match self {
            SdeFamily::Ve => "ve",
            SdeFamily::Vp => "vp",
            SdeFamily::SubVp => "subvp",
        }
    }
}

impl fmt::Display for SdeFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SdeFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "ve" => Ok(SdeFamily::Ve),
            "vp" => Ok(SdeFamily::Vp),
            "subvp" => Ok(SdeFamily::SubVp),
            _ => Err(Error::InvalidConfig(format!(
                "unknown SDE family {s:?} (expected ve, vp or subvp)"
            ))),
        }
    }
}

/// Parameters of a forward SDE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SdeSpec {
    pub family: SdeFamily,
    pub beta_min: f64,
    pub beta_max: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// Lower truncation of model time.
    pub eps: f64,
}

impl Default for SdeSpec {
    fn default() -> Self {
        SdeSpec {
            family: SdeFamily::Vp,
            beta_min: 0.1,
            beta_max: 20.0,
            sigma_min: 0.01,
            sigma_max: 50.0,
            eps: 1e-5,
        }
    }
}

/// Gaussian perturbation kernel `N(mean, std²·I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Marginal {
    pub mean: Vec<f64>,
    pub std: f64,
}

impl SdeSpec {
    pub fn new(family: SdeFamily) -> Self {
        SdeSpec {
            family,
            ..SdeSpec::default()
        }
    }

    pub fn t_end(&self) -> f64 {
        T_END
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |cond: bool, msg: &str| {
            if cond {
                Ok(())
            } else {
                Err(Error::InvalidConfig(msg.to_string()))
            }
        };
        ok(
            self.beta_min > 0.0 && self.beta_min < self.beta_max && self.beta_max.is_finite(),
            "require 0 < beta_min < beta_max",
        )?;
        ok(
            self.sigma_min > 0.0 && self.sigma_min < self.sigma_max && self.sigma_max.is_finite(),
            "require 0 < sigma_min < sigma_max",
        )?;
        ok(self.eps > 0.0 && self.eps < T_END, "require 0 < eps < t_end")
    }

    fn check_time(&self, t: f64, lo: f64) -> Result<()> {
        if (lo..=T_END).contains(&t) {
            Ok(())
        } else {
            Err(Error::TimeOutOfRange { t, lo, hi: T_END })
        }
    }

    /// Rejects times outside `[eps, 1]`, the domain of score evaluation.
    pub fn check_model_time(&self, t: f64) -> Result<()> {
        self.check_time(t, self.eps)
    }

    /// Noise rate `β(t)` of the VP and sub-VP families.
    pub fn beta(&self, t: f64) -> Result<f64> {
        if self.family == SdeFamily::Ve {
            return Err(Error::UnsupportedFamily {
                op: "beta",
                family: "ve",
            });
        }
        self.check_time(t, 0.0)?;
        Ok(self.beta_at(t))
    }

    /// `B(t) = ∫₀ᵗ β(s) ds`.
    pub fn int_beta(&self, t: f64) -> Result<f64> {
        self.check_time(t, 0.0)?;
        Ok(self.int_beta_at(t))
    }

    pub fn drift(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        self.check_time(t, 0.0)?;
        let c = self.drift_coeff(t);
        Ok(x.iter().map(|xi| c * xi).collect())
    }

    pub fn diffusion(&self, t: f64) -> Result<f64> {
        self.check_time(t, 0.0)?;
        Ok(self.diffusion_at(t))
    }

    /// Closed-form perturbation kernel `q(x(t) | x(0) = x0)`.
    pub fn marginal(&self, x0: &[f64], t: f64) -> Result<Marginal> {
        self.check_model_time(t)?;
        let a = self.mean_coeff(t);
        Ok(Marginal {
            mean: x0.iter().map(|v| a * v).collect(),
            std: self.marginal_std(t),
        })
    }

    /// Log-density of the terminal prior: `N(0, σ_max²·I)` for VE and
    /// `N(0, I)` otherwise.
    pub fn prior_logp(&self, x: &[f64]) -> f64 {
        let d = x.len() as f64;
        let var = match self.family {
            SdeFamily::Ve => self.sigma_max * self.sigma_max,
            SdeFamily::Vp | SdeFamily::SubVp => 1.0,
        };
        let sq: f64 = x.iter().map(|v| v * v).sum();
        -0.5 * d * (2.0 * PI * var).ln() - 0.5 * sq / var
    }

    // Unchecked kernels used on hot paths. Callers validate `t` once.

    pub(crate) fn beta_at(&self, t: f64) -> f64 {
        self.beta_min + t * (self.beta_max - self.beta_min)
    }

    pub(crate) fn int_beta_at(&self, t: f64) -> f64 {
        self.beta_min * t + 0.5 * t * t * (self.beta_max - self.beta_min)
    }

    /// VE noise scale `σ(t)`.
    pub fn ve_sigma(&self, t: f64) -> f64 {
        self.sigma_min * (self.sigma_max / self.sigma_min).powf(t)
    }

    /// Scalar `c(t)` with `f(x, t) = c(t)·x`.
    pub fn drift_coeff(&self, t: f64) -> f64 {
        match self.family {
            SdeFamily::Ve => 0.0,
            SdeFamily::Vp | SdeFamily::SubVp => -0.5 * self.beta_at(t),
        }
    }

    pub(crate) fn diffusion_at(&self, t: f64) -> f64 {
        self.diffusion_sq(t).sqrt()
    }

    /// `g(t)²`.
    pub fn diffusion_sq(&self, t: f64) -> f64 {
        match self.family {
            SdeFamily::Ve => {
                let s = self.ve_sigma(t);
                s * s * 2.0 * (self.sigma_max / self.sigma_min).ln()
            }
            SdeFamily::Vp => self.beta_at(t),
            SdeFamily::SubVp => {
                let b = self.int_beta_at(t);
                self.beta_at(t) * -(-2.0 * b).exp_m1()
            }
        }
    }

    /// Scale `α(t)` of the kernel mean, `mean = α(t)·x0`.
    pub fn mean_coeff(&self, t: f64) -> f64 {
        match self.family {
            SdeFamily::Ve => 1.0,
            SdeFamily::Vp | SdeFamily::SubVp => (-0.5 * self.int_beta_at(t)).exp(),
        }
    }

    /// Standard deviation of the perturbation kernel at time `t`.
    pub fn marginal_std(&self, t: f64) -> f64 {
        match self.family {
            SdeFamily::Ve => self.ve_sigma(t),
            SdeFamily::Vp => (-(-self.int_beta_at(t)).exp_m1()).sqrt(),
            SdeFamily::SubVp => -(-self.int_beta_at(t)).exp_m1(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn beta_endpoints_and_midpoint() {
        let vp = SdeSpec::new(SdeFamily::Vp);
        assert!(close(vp.beta(0.0).unwrap(), 0.1, 1e-15));
        assert!(close(vp.beta(1.0).unwrap(), 20.0, 1e-12));
        assert!(close(vp.beta(0.5).unwrap(), 10.05, 1e-12));
    }

    #[test]
    fn beta_rejects_ve_and_bad_times() {
        let ve = SdeSpec::new(SdeFamily::Ve);
        assert!(matches!(ve.beta(0.5), Err(Error::UnsupportedFamily { .. })));
        let vp = SdeSpec::new(SdeFamily::Vp);
        assert!(matches!(vp.beta(-0.1), Err(Error::TimeOutOfRange { .. })));
        assert!(matches!(vp.beta(1.5), Err(Error::TimeOutOfRange { .. })));
    }

    #[test]
    fn int_beta_values() {
        let vp = SdeSpec::new(SdeFamily::Vp);
        assert_eq!(vp.int_beta(0.0).unwrap(), 0.0);
        assert!(close(vp.int_beta(1.0).unwrap(), 10.05, 1e-12));
        assert!(close(vp.int_beta(0.5).unwrap(), 2.5375, 1e-12));
        assert!(vp.int_beta(1.01).is_err());
    }

    #[test]
    fn drift_values() {
        let ve = SdeSpec::new(SdeFamily::Ve);
        assert_eq!(ve.drift(&[3.0, -1.0], 0.7).unwrap(), vec![0.0, 0.0]);
        let vp = SdeSpec::new(SdeFamily::Vp);
        let d = vp.drift(&[1.0, 0.0], 0.0).unwrap();
        assert!(close(d[0], -0.05, 1e-15) && d[1] == 0.0);
        assert_eq!(vp.drift(&[0.0, 0.0], 0.3).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn diffusion_values() {
        let vp = SdeSpec::new(SdeFamily::Vp);
        assert!(close(vp.diffusion(1.0).unwrap(), 20f64.sqrt(), 1e-12));
        assert!(close(vp.diffusion(1.0).unwrap(), 4.4721, 1e-4));
        let sub = SdeSpec::new(SdeFamily::SubVp);
        assert_eq!(sub.diffusion(0.0).unwrap(), 0.0);
        let ve = SdeSpec::new(SdeFamily::Ve);
        let expect = 50.0 * (2.0 * 5000f64.ln()).sqrt();
        assert!(close(ve.diffusion(1.0).unwrap(), expect, 1e-9));
        assert!(close(expect, 206.3637, 1e-4));
    }

    #[test]
    fn marginal_values() {
        let ve = SdeSpec::new(SdeFamily::Ve);
        let m = ve.marginal(&[1.0, 1.0], 1.0).unwrap();
        assert_eq!(m.mean, vec![1.0, 1.0]);
        assert!(close(m.std, 50.0, 1e-10));

        let vp = SdeSpec::new(SdeFamily::Vp);
        let m = vp.marginal(&[3.0, -2.0], 1.0).unwrap();
        assert!(close(m.std, (1.0 - (-10.05f64).exp()).sqrt(), 1e-15));
        assert!(close(m.std, 0.999978, 1e-6));

        let m = vp.marginal(&[2.0, 0.0], vp.eps).unwrap();
        assert!(close(m.mean[0], 2.0, 1e-5));
        assert!(close(m.std, (0.1f64 * 1e-5).sqrt(), 1e-6));
        assert!(close(m.std, 1e-3, 1e-5));
    }

    #[test]
    fn marginal_rejects_small_t() {
        let vp = SdeSpec::new(SdeFamily::Vp);
        assert!(matches!(
            vp.marginal(&[0.0], 1e-6),
            Err(Error::TimeOutOfRange { .. })
        ));
        assert!(vp.marginal(&[0.0], 0.0).is_err());
    }

    #[test]
    fn prior_logp_values() {
        let vp = SdeSpec::new(SdeFamily::Vp);
        let ln2pi = (2.0 * PI).ln();
        assert!(close(vp.prior_logp(&[0.0, 0.0]), -ln2pi, 1e-14));
        assert!(close(vp.prior_logp(&[0.0, 0.0]), -1.83788, 1e-5));
        assert!(close(vp.prior_logp(&[1.0, 0.0]), -2.33788, 1e-5));
        let ve = SdeSpec::new(SdeFamily::Ve);
        assert!(close(ve.prior_logp(&[0.0, 0.0]), -ln2pi - 2.0 * 50f64.ln(), 1e-12));
        assert!(close(ve.prior_logp(&[0.0, 0.0]), -9.66192, 1e-5));
    }

    #[test]
    fn std_is_strictly_increasing() {
        for fam in SdeFamily::ALL {
            let s = SdeSpec::new(fam);
            let n = 2000;
            let mut prev = s.marginal_std(s.eps);
            for i in 1..=n {
                let t = s.eps + (1.0 - s.eps) * i as f64 / n as f64;
                let cur = s.marginal_std(t);
                assert!(cur > prev, "{fam}: std not increasing at t={t}");
                prev = cur;
            }
        }
    }

    #[test]
    fn vp_terminal_mean_is_negligible() {
        let vp = SdeSpec::new(SdeFamily::Vp);
        let x0 = [3.0, -4.0];
        let m = vp.marginal(&x0, 1.0).unwrap();
        let norm = m.mean.iter().map(|v| v * v).sum::<f64>().sqrt();
        let bound = (-10.05f64 / 2.0).exp() * 5.0;
        assert!(norm <= bound * (1.0 + 1e-12));
        assert!(close((-10.05f64 / 2.0).exp(), 6.6e-3, 1e-4));
    }

    #[test]
    fn subvp_variance_below_vp() {
        let vp = SdeSpec::new(SdeFamily::Vp);
        let sub = SdeSpec::new(SdeFamily::SubVp);
        for i in 0..=100 {
            let t = vp.eps + (1.0 - vp.eps) * i as f64 / 100.0;
            assert!(sub.marginal_std(t).powi(2) <= vp.marginal_std(t).powi(2));
        }
    }

    #[test]
    fn spec_validation() {
        assert!(SdeSpec::default().validate().is_ok());
        let bad = SdeSpec {
            beta_min: 30.0,
            ..SdeSpec::default()
        };
        assert!(bad.validate().is_err());
        let bad = SdeSpec {
            eps: 0.0,
            ..SdeSpec::default()
        };
        assert!(bad.validate().is_err());
        let bad = SdeSpec {
            sigma_min: 0.0,
            ..SdeSpec::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn family_parsing() {
        assert_eq!("VP".parse::<SdeFamily>().unwrap(), SdeFamily::Vp);
        assert_eq!("sub-vp".parse::<SdeFamily>().unwrap(), SdeFamily::SubVp);
        assert!("vx".parse::<SdeFamily>().is_err());
    }
}
