//! Dormand–Prince 5(4) adaptive Runge–Kutta integrator.

use std::fmt;

/// Stage coefficients.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
// Fifth-order weights; also the last stage row (FSAL).
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// Difference between the fifth- and fourth-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[derive(Debug, Clone, PartialEq)]
pub enum OdeError<E> {
    /// The right-hand side returned an error.
    Rhs(E),
    NonFinite { t: f64 },
    StepUnderflow { t: f64, h: f64 },
    MaxSteps { t: f64, steps: usize },
}

impl<E: fmt::Display> fmt::Display for OdeError<E> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OdeError::Rhs(e) => write!(f, "{e}"),
            OdeError::NonFinite { t } => write!(f, "non-finite state at t = {t}"),
            OdeError::StepUnderflow { t, h } => write!(f, "step size underflow (h = {h:e}) at t = {t}"),
            OdeError::MaxSteps { t, steps } => write!(f, "exceeded {steps} steps at t = {t}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdeSolution {
    pub y: Vec<f64>,
    pub accepted: usize,
    pub rejected: usize,
    /// Number of right-hand side evaluations.
    pub nfev: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dopri5 {
    pub rtol: f64,
    pub atol: f64,
    pub h0: f64,
    pub max_steps: usize,
    pub safety: f64,
    pub fac_min: f64,
    pub fac_max: f64,
}

impl Default for Dopri5 {
    fn default() -> Self {
        Dopri5 {
            rtol: 1e-5,
            atol: 1e-5,
            h0: 1e-3,
            max_steps: 100_000,
            safety: 0.9,
            fac_min: 0.2,
            fac_max: 10.0,
        }
    }
}

fn axpy_into(out: &mut [f64], y: &[f64], h: f64, terms: &[(f64, &[f64])]) {
    for i in 0..y.len() {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        out[i] = y[i] + h * acc;
    }
}

impl Dopri5 {
    pub fn new(rtol: f64, atol: f64) -> Self {
        Dopri5 {
            rtol,
            atol,
            ..Dopri5::default()
        }
    }

    /// Integrates `dy/dt = f(t, y)` from `t0` to `t1 > t0`.
    pub fn integrate<E, F>(
        &self,
        mut f: F,
        t0: f64,
        t1: f64,
        y0: Vec<f64>,
    ) -> Result<OdeSolution, OdeError<E>>
    where
        F: FnMut(f64, &[f64]) -> Result<Vec<f64>, E>,
    {
        assert!(t1 > t0, "integration interval must be increasing");
        let n = y0.len();
        let mut eval = |t: f64, y: &[f64], nfev: &mut usize| -> Result<Vec<f64>, OdeError<E>> {
            *nfev += 1;
            let k = f(t, y).map_err(OdeError::Rhs)?;
            if k.iter().any(|v| !v.is_finite()) {
                return Err(OdeError::NonFinite { t });
            }
            Ok(k)
        };

        let mut nfev = 0;
        let mut t = t0;
        let mut y = y0;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(OdeError::NonFinite { t });
        }
        let mut k1 = eval(t, &y, &mut nfev)?;
        let mut h = self.h0.min(t1 - t0);
        let mut accepted = 0;
        let mut rejected = 0;
        let mut last_rejected = false;
        let mut tmp = vec![0.0; n];
        let mut y_new = vec![0.0; n];

        while t < t1 {
            if accepted + rejected >= self.max_steps {
                return Err(OdeError::MaxSteps {
                    t,
                    steps: self.max_steps,
                });
            }
            let last = t + h >= t1;
            if last {
                h = t1 - t;
            }
            if h <= 16.0 * f64::EPSILON * t.abs().max(1e-300) {
                return Err(OdeError::StepUnderflow { t, h });
            }

            axpy_into(&mut tmp, &y, h, &[(A21, &k1)]);
            let k2 = eval(t + C2 * h, &tmp, &mut nfev)?;
            axpy_into(&mut tmp, &y, h, &[(A31, &k1), (A32, &k2)]);
            let k3 = eval(t + C3 * h, &tmp, &mut nfev)?;
            axpy_into(&mut tmp, &y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]);
            let k4 = eval(t + C4 * h, &tmp, &mut nfev)?;
            axpy_into(
                &mut tmp,
                &y,
                h,
                &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)],
            );
            let k5 = eval(t + C5 * h, &tmp, &mut nfev)?;
            axpy_into(
                &mut tmp,
                &y,
                h,
                &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
            );
            let k6 = eval(t + h, &tmp, &mut nfev)?;
            axpy_into(
                &mut y_new,
                &y,
                h,
                &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)],
            );
            let t_new = if last { t1 } else { t + h };
            let k7 = eval(t_new, &y_new, &mut nfev)?;

            let mut err_sq = 0.0;
            for i in 0..n {
                let e = h
                    * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i]
                        + E7 * k7[i]);
                let sc = self.atol + self.rtol * y[i].abs().max(y_new[i].abs());
                err_sq += (e / sc).powi(2);
            }
            let err = (err_sq / n.max(1) as f64).sqrt();
            if !err.is_finite() {
                return Err(OdeError::NonFinite { t });
            }

            let fac = if err == 0.0 {
                self.fac_max
            } else {
                (self.safety * err.powf(-0.2)).clamp(self.fac_min, self.fac_max)
            };
            if err <= 1.0 {
                t = t_new;
                std::mem::swap(&mut y, &mut y_new);
                k1 = k7;
                accepted += 1;
                h *= if last_rejected { fac.min(1.0) } else { fac };
                last_rejected = false;
            } else {
                rejected += 1;
                h *= fac.min(1.0);
                last_rejected = true;
            }
        }

        Ok(OdeSolution {
            y,
            accepted,
            rejected,
            nfev,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::convert::Infallible;

    #[test]
    fn exponential_decay() {
        let sol = Dopri5::new(1e-10, 1e-12)
            .integrate(
                |_t, y: &[f64]| Ok::<_, Infallible>(vec![-2.0 * y[0]]),
                0.0,
                1.5,
                vec![1.0],
            )
            .unwrap();
        assert!((sol.y[0] - (-3.0f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn harmonic_oscillator_and_time_dependence() {
        let sol = Dopri5::new(1e-9, 1e-11)
            .integrate(
                |t, y: &[f64]| Ok::<_, Infallible>(vec![y[1], -y[0], t.cos()]),
                0.0,
                3.0,
                vec![0.0, 1.0, 0.0],
            )
            .unwrap();
        assert!((sol.y[0] - 3f64.sin()).abs() < 1e-8);
        assert!((sol.y[1] - 3f64.cos()).abs() < 1e-8);
        assert!((sol.y[2] - 3f64.sin()).abs() < 1e-8);
    }

    #[test]
    fn error_shrinks_with_tolerance() {
        let exact = (1.0f64).exp() - 1.0;
        let mut prev = f64::INFINITY;
        for tol in [1e-3, 1e-5, 1e-7, 1e-9] {
            let sol = Dopri5::new(tol, tol)
                .integrate(
                    |t, _y: &[f64]| Ok::<_, Infallible>(vec![t.exp()]),
                    0.0,
                    1.0,
                    vec![0.0],
                )
                .unwrap();
            let err = (sol.y[0] - exact).abs();
            assert!(err <= prev.max(1e-14));
            prev = err;
        }
    }

    #[test]
    fn reports_blow_up() {
        let r = Dopri5::default().integrate(
            |_t, y: &[f64]| Ok::<_, Infallible>(vec![y[0] * y[0]]),
            0.0,
            2.0,
            vec![1.0],
        );
        assert!(matches!(
            r,
            Err(OdeError::StepUnderflow { .. } | OdeError::NonFinite { .. } | OdeError::MaxSteps { .. })
        ));
    }

    #[test]
    fn propagates_rhs_errors() {
        let r = Dopri5::default().integrate(
            |t, _y: &[f64]| if t > 0.5 { Err("boom") } else { Ok(vec![1.0]) },
            0.0,
            1.0,
            vec![0.0],
        );
        assert_eq!(r, Err(OdeError::Rhs("boom")));
    }
}
