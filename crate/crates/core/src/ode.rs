//! Small embedded Runge-Kutta (Cash-Karp 4/5) driver for the stationary
//! interface problems and traveling-wave reductions. Right-hand sides may
//! abort the integration (sonic crossings, domain exits) by returning an
//! error message; the driver surfaces it with the abort position.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum OdeError {
    #[error("integration aborted at t = {t:.6e}: {reason}")]
    Aborted { t: f64, reason: String },
    #[error("step size underflow at t = {t:.6e}")]
    StepUnderflow { t: f64 },
    #[error("step budget of {max_steps} exhausted at t = {t:.6e}")]
    MaxSteps { t: f64, max_steps: usize },
}

#[derive(Debug, Clone)]
pub struct AdaptiveOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_steps: usize,
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_steps: 100_000,
        }
    }
}

const A2: f64 = 1.0 / 5.0;
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [3.0 / 10.0, -9.0 / 10.0, 6.0 / 5.0];
const A5: [f64; 4] = [-11.0 / 54.0, 5.0 / 2.0, -70.0 / 27.0, 35.0 / 27.0];
const A6: [f64; 5] = [
    1631.0 / 55296.0,
    175.0 / 512.0,
    575.0 / 13824.0,
    44275.0 / 110592.0,
    253.0 / 4096.0,
];
const B5: [f64; 6] = [
    37.0 / 378.0,
    0.0,
    250.0 / 621.0,
    125.0 / 594.0,
    0.0,
    512.0 / 1771.0,
];
const B4: [f64; 6] = [
    2825.0 / 27648.0,
    0.0,
    18575.0 / 48384.0,
    13525.0 / 55296.0,
    277.0 / 14336.0,
    1.0 / 4.0,
];

/// One-step adaptive integrator over a fixed-dimension state.
pub struct AdaptiveStepper<F> {
    rhs: F,
    pub t: f64,
    pub y: Vec<f64>,
    h: f64,
    opts: AdaptiveOptions,
    steps: usize,
}

impl<F> AdaptiveStepper<F>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<(), String>,
{
    pub fn new(rhs: F, t0: f64, y0: &[f64], h0: f64, opts: AdaptiveOptions) -> Self {
        Self {
            rhs,
            t: t0,
            y: y0.to_vec(),
            h: h0,
            opts,
            steps: 0,
        }
    }

    /// Advance by one accepted step, never past `t_limit`.
    pub fn step_toward(&mut self, t_limit: f64) -> Result<(), OdeError> {
        let dir = (t_limit - self.t).signum();
        if dir == 0.0 {
            return Ok(());
        }
        let dim = self.y.len();
        let mut k = vec![vec![0.0; dim]; 6];
        let mut ytmp = vec![0.0; dim];

        loop {
            self.steps += 1;
            if self.steps > self.opts.max_steps {
                return Err(OdeError::MaxSteps {
                    t: self.t,
                    max_steps: self.opts.max_steps,
                });
            }
            let mut h = self.h.abs().copysign(dir);
            if (self.t + h - t_limit) * dir > 0.0 {
                h = t_limit - self.t;
            }
            if h.abs() < 1e-14 * self.t.abs().max(1.0) {
                return Err(OdeError::StepUnderflow { t: self.t });
            }

            let abort = |t: f64, e: String| OdeError::Aborted { t, reason: e };
            (self.rhs)(self.t, &self.y, &mut k[0]).map_err(|e| abort(self.t, e))?;
            for i in 0..dim {
                ytmp[i] = self.y[i] + h * A2 * k[0][i];
            }
            (self.rhs)(self.t + 0.2 * h, &ytmp, &mut k[1]).map_err(|e| abort(self.t, e))?;
            for i in 0..dim {
                ytmp[i] = self.y[i] + h * (A3[0] * k[0][i] + A3[1] * k[1][i]);
            }
            (self.rhs)(self.t + 0.3 * h, &ytmp, &mut k[2]).map_err(|e| abort(self.t, e))?;
            for i in 0..dim {
                ytmp[i] = self.y[i] + h * (A4[0] * k[0][i] + A4[1] * k[1][i] + A4[2] * k[2][i]);
            }
            (self.rhs)(self.t + 0.6 * h, &ytmp, &mut k[3]).map_err(|e| abort(self.t, e))?;
            for i in 0..dim {
                ytmp[i] = self.y[i]
                    + h * (A5[0] * k[0][i] + A5[1] * k[1][i] + A5[2] * k[2][i] + A5[3] * k[3][i]);
            }
            (self.rhs)(self.t + h, &ytmp, &mut k[4]).map_err(|e| abort(self.t, e))?;
            for i in 0..dim {
                ytmp[i] = self.y[i]
                    + h * (A6[0] * k[0][i]
                        + A6[1] * k[1][i]
                        + A6[2] * k[2][i]
                        + A6[3] * k[3][i]
                        + A6[4] * k[4][i]);
            }
            (self.rhs)(self.t + 0.875 * h, &ytmp, &mut k[5]).map_err(|e| abort(self.t, e))?;

            let mut err = 0.0f64;
            let mut ynew = vec![0.0; dim];
            for i in 0..dim {
                let mut y5 = 0.0;
                let mut y4 = 0.0;
                for s in 0..6 {
                    y5 += B5[s] * k[s][i];
                    y4 += B4[s] * k[s][i];
                }
                ynew[i] = self.y[i] + h * y5;
                let scale =
                    self.opts.abs_tol + self.opts.rel_tol * self.y[i].abs().max(ynew[i].abs());
                err = err.max((h * (y5 - y4)).abs() / scale);
            }

            if err <= 1.0 {
                self.t += h;
                self.y = ynew;
                let grow = if err > 0.0 {
                    (0.9 * err.powf(-0.2)).min(5.0)
                } else {
                    5.0
                };
                self.h = (h * grow).abs();
                return Ok(());
            }
            self.h = (h.abs() * (0.9 * err.powf(-0.25)).max(0.1)).max(1e-300);
        }
    }

    pub fn done(&self, t_limit: f64) -> bool {
        (t_limit - self.t).abs() <= 1e-14 * t_limit.abs().max(1.0)
    }
}

/// Integrate to `t_end` and return the final state.
pub fn integrate_adaptive<F>(
    rhs: F,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    opts: &AdaptiveOptions,
) -> Result<Vec<f64>, OdeError>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<(), String>,
{
    if t0 == t_end {
        return Ok(y0.to_vec());
    }
    let h0 = ((t_end - t0) / 16.0).abs().max(1e-12);
    let mut stepper = AdaptiveStepper::new(rhs, t0, y0, h0, opts.clone());
    while !stepper.done(t_end) {
        stepper.step_toward(t_end)?;
    }
    Ok(stepper.y)
}
