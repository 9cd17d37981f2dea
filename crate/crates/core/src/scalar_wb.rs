//! Well-balanced Godunov solver for convex scalar balance laws
//! `u_t + f(u)_x = k(x) g(u)`.
//!
//! The law is rewritten as a homogeneous 2x2 system by adjoining the steady
//! variable `a` with `a_x = k`, so the source concentrates on the standing
//! wave at cell interfaces. Interface Riemann problems are posed after
//! carrying states across the local `a`-jump through the stationary ODE
//! `d f(u)/da = g(u)`; a steady chain of such jumps is then a fixed point of
//! the scheme up to round-off.

use thiserror::Error;

use crate::ode::{AdaptiveOptions, AdaptiveStepper, OdeError};

/// Threshold on |f'(u)| below which a stationary crossing is declared sonic.
pub const DEFAULT_EPS_SONIC: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum ScalarWbError {
    #[error("sonic crossing inside a standing wave at a-offset {a_offset:.6e} (u = {u:.6e})")]
    Resonance { a_offset: f64, u: f64 },
    #[error("CFL violation: dt*max|f'| = {lhs:.3e} > {rhs:.3e} = cfl*dx")]
    CflViolation { lhs: f64, rhs: f64 },
    #[error("flux fails the convexity sample check near u = {u:.6e}")]
    NonConvexFlux { u: f64 },
    #[error("stationary integration failed: {0}")]
    Ode(#[from] OdeError),
}

/// Convex scalar law with a nonnegative, compactly supported source weight.
pub struct ScalarLaw {
    pub flux: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    pub flux_derivative: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    pub source: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    pub eps_sonic: f64,
}

impl ScalarLaw {
    pub fn new(
        flux: impl Fn(f64) -> f64 + Send + Sync + 'static,
        flux_derivative: impl Fn(f64) -> f64 + Send + Sync + 'static,
        source: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            flux: Box::new(flux),
            flux_derivative: Box::new(flux_derivative),
            source: Box::new(source),
            eps_sonic: DEFAULT_EPS_SONIC,
        }
    }

    pub fn burgers(source: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::new(|u| 0.5 * u * u, |u| u, source)
    }

    /// Sample f'' >= 0 over the given state range.
    pub fn check_convexity(
        &self,
        u_min: f64,
        u_max: f64,
        samples: usize,
    ) -> Result<(), ScalarWbError> {
        let h = 1e-6 * (u_max - u_min).abs().max(1.0);
        for i in 0..samples {
            let u = u_min + (u_max - u_min) * i as f64 / (samples.max(2) - 1) as f64;
            let fpp = ((self.flux_derivative)(u + h) - (self.flux_derivative)(u - h)) / (2.0 * h);
            if fpp < -1e-9 {
                return Err(ScalarWbError::NonConvexFlux { u });
            }
        }
        Ok(())
    }
}

/// Cell averages of the state together with the cell values of the primitive
/// of the source weight (nondecreasing since k >= 0).
#[derive(Debug, Clone)]
pub struct TempleState {
    pub u: Vec<f64>,
    pub a: Vec<f64>,
}

impl TempleState {
    pub fn new(u: Vec<f64>, a: Vec<f64>) -> Self {
        assert_eq!(u.len(), a.len());
        debug_assert!(
            a.windows(2).all(|w| w[1] >= w[0] - 1e-14),
            "a must be nondecreasing"
        );
        Self { u, a }
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }
}

/// Carry `u_in` across a standing jump of strength `delta_a` by integrating
/// the stationary relation `d f(u)/da = g(u)`, i.e. `du/da = g(u)/f'(u)`.
///
/// Fails with a resonance error when |f'(u)| drops below `law.eps_sonic`
/// along the path: the stationary problem degenerates there and stability
/// constants blow up like 1/|f'|.
pub fn steady_jump(u_in: f64, delta_a: f64, law: &ScalarLaw) -> Result<f64, ScalarWbError> {
    if delta_a == 0.0 {
        return Ok(u_in);
    }
    let eps = law.eps_sonic;
    let rhs = |_a: f64, y: &[f64], dy: &mut [f64]| {
        let fp = (law.flux_derivative)(y[0]);
        if fp.abs() < eps {
            return Err(format!(
                "|f'({:.6e})| = {:.3e} < {:.1e}",
                y[0],
                fp.abs(),
                eps
            ));
        }
        dy[0] = (law.source)(y[0]) / fp;
        Ok(())
    };
    let mut stepper = AdaptiveStepper::new(
        rhs,
        0.0,
        &[u_in],
        delta_a.abs() / 16.0,
        AdaptiveOptions {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_steps: 20_000,
        },
    );
    while !stepper.done(delta_a) {
        match stepper.step_toward(delta_a) {
            Ok(()) => {}
            Err(OdeError::Aborted { t, reason }) => {
                let u = parse_resonant_state(&reason).unwrap_or(stepper.y[0]);
                return Err(ScalarWbError::Resonance { a_offset: t, u });
            }
            // Step collapse along this ODE means the path ran into the
            // sonic singularity faster than the guard could trigger.
            Err(OdeError::StepUnderflow { t }) => {
                return Err(ScalarWbError::Resonance {
                    a_offset: t,
                    u: stepper.y[0],
                });
            }
            Err(e) => return Err(ScalarWbError::Ode(e)),
        }
    }
    Ok(stepper.y[0])
}

fn parse_resonant_state(reason: &str) -> Option<f64> {
    let start = reason.find('(')? + 1;
    let end = reason[start..].find(')')? + start;
    reason[start..end].parse().ok()
}

/// State picked up at x/t = 0 by the exact Riemann solution for a convex flux.
fn godunov_state(ul: f64, ur: f64, law: &ScalarLaw) -> f64 {
    if ul == ur {
        return ul;
    }
    let fd = &law.flux_derivative;
    if ul < ur {
        // rarefaction
        if fd(ul) >= 0.0 {
            ul
        } else if fd(ur) <= 0.0 {
            ur
        } else {
            invert_fd_zero(ul, ur, law)
        }
    } else {
        // shock, Rankine-Hugoniot speed
        let s = ((law.flux)(ul) - (law.flux)(ur)) / (ul - ur);
        if s >= 0.0 {
            ul
        } else {
            ur
        }
    }
}

/// Sonic state inside a transonic rarefaction: f'(u) = 0 by bisection,
/// using that f' is nondecreasing for a convex flux.
fn invert_fd_zero(mut lo: f64, mut hi: f64, law: &ScalarLaw) -> f64 {
    let fd = &law.flux_derivative;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if fd(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi.abs().max(1.0) {
            break;
        }
    }
    0.5 * (lo + hi)
}

pub fn godunov_flux(ul: f64, ur: f64, law: &ScalarLaw) -> f64 {
    (law.flux)(godunov_state(ul, ur, law))
}

/// One Godunov step of the reformulated system with outflow boundaries.
///
/// Each interface carries two fluxes: the one seen by the left cell (right
/// state pulled backwards through the a-jump) and the one seen by the right
/// cell (left state pushed forward). On a discrete steady chain both Riemann
/// problems degenerate to constants and the state is reproduced exactly.
pub fn wb_godunov_step(
    state: &TempleState,
    law: &ScalarLaw,
    dx: f64,
    dt: f64,
    cfl: f64,
) -> Result<TempleState, ScalarWbError> {
    let n = state.len();
    let max_speed = state
        .u
        .iter()
        .fold(0.0f64, |m, &u| m.max((law.flux_derivative)(u).abs()));
    if dt * max_speed > cfl * dx * (1.0 + 1e-12) {
        return Err(ScalarWbError::CflViolation {
            lhs: dt * max_speed,
            rhs: cfl * dx,
        });
    }

    // flux_into_right[i] feeds cell i, flux_from_left[i] drains cell i-1;
    // interfaces 0 and n are the outflow boundaries.
    let mut flux_into_right = vec![0.0; n + 1];
    let mut flux_from_left = vec![0.0; n + 1];
    for i in 0..=n {
        let (ul, al) = if i == 0 {
            (state.u[0], state.a[0])
        } else {
            (state.u[i - 1], state.a[i - 1])
        };
        let (ur, ar) = if i == n {
            (state.u[n - 1], state.a[n - 1])
        } else {
            (state.u[i], state.a[i])
        };
        let da = ar - al;
        if da == 0.0 {
            let f = godunov_flux(ul, ur, law);
            flux_into_right[i] = f;
            flux_from_left[i] = f;
        } else {
            let ul_pushed = steady_jump(ul, da, law)?;
            let ur_pulled = steady_jump(ur, -da, law)?;
            flux_into_right[i] = godunov_flux(ul_pushed, ur, law);
            flux_from_left[i] = godunov_flux(ul, ur_pulled, law);
        }
    }

    let lam = dt / dx;
    let u = (0..n)
        .map(|j| state.u[j] - lam * (flux_from_left[j + 1] - flux_into_right[j]))
        .collect();
    Ok(TempleState {
        u,
        a: state.a.clone(),
    })
}

/// Convective eigenvalue of the lane-drop traffic model `f(a,u) = 8au - u^2`;
/// the full spectrum is {0, 8a - 2u} and resonance sits at u = 4a.
pub fn traffic_eigenvalue(a: f64, u: f64) -> f64 {
    8.0 * a - 2.0 * u
}

fn traffic_flux(a: f64, u: f64) -> f64 {
    8.0 * a * u - u * u
}

/// Godunov state for the concave traffic flux at fixed a.
fn traffic_godunov_state(a: f64, ul: f64, ur: f64) -> f64 {
    if ul == ur {
        return ul;
    }
    let fd = |u: f64| 8.0 * a - 2.0 * u;
    if ul > ur {
        // rarefaction (flux concave)
        if fd(ul) >= 0.0 {
            ul
        } else if fd(ur) <= 0.0 {
            ur
        } else {
            4.0 * a
        }
    } else {
        let s = (traffic_flux(a, ul) - traffic_flux(a, ur)) / (ul - ur);
        if s >= 0.0 {
            ul
        } else {
            ur
        }
    }
}

/// Carry a state across the lane jump at constant flux, staying on its
/// branch of the parabola. A choked crossing (no real root) is clamped to
/// the sonic state u = 4a of the downstream flux; the trapped excess then
/// backs up upstream through the conservative update.
fn traffic_steady_jump(a_from: f64, a_to: f64, u: f64) -> f64 {
    let phi = traffic_flux(a_from, u);
    let disc = 16.0 * a_to * a_to - phi;
    if disc <= 0.0 {
        return 4.0 * a_to;
    }
    if u <= 4.0 * a_from {
        4.0 * a_to - disc.sqrt()
    } else {
        4.0 * a_to + disc.sqrt()
    }
}

/// Snapshot of a traffic run.
#[derive(Debug, Clone)]
pub struct TrafficSnapshot {
    pub time: f64,
    pub u: Vec<f64>,
    /// Convective eigenvalue 8a - 2u per cell.
    pub lambda: Vec<f64>,
}

/// Report of the resonant lane-drop scenario: one a-jump, paired runs with a
/// perturbed initial state, and the measured output/input sensitivity ratio.
#[derive(Debug, Clone)]
pub struct TrafficReport {
    pub x: Vec<f64>,
    pub a: Vec<f64>,
    pub snapshots: Vec<TrafficSnapshot>,
    pub final_u: Vec<f64>,
    pub final_perturbed_u: Vec<f64>,
    /// sup-norm distance of the two final states divided by the perturbation size.
    pub sensitivity_ratio: f64,
    pub delta: f64,
}

pub struct TrafficScenario {
    pub a_left: f64,
    pub a_right: f64,
    pub n_cells: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub cfl: f64,
    pub t_end: f64,
    pub delta: f64,
    pub n_snapshots: usize,
}

impl Default for TrafficScenario {
    fn default() -> Self {
        Self {
            a_left: 2.0,
            a_right: 1.0,
            n_cells: 200,
            x_min: -1.0,
            x_max: 1.0,
            cfl: 0.45,
            t_end: 0.25,
            delta: 1e-6,
            n_snapshots: 2,
        }
    }
}

/// Run the lane-drop scenario twice (base and perturbed initial data) and
/// report eigenvalue fields plus the sensitivity ratio.
pub fn traffic_demo(scenario: &TrafficScenario, u0: impl Fn(f64) -> f64) -> TrafficReport {
    let n = scenario.n_cells;
    let dx = (scenario.x_max - scenario.x_min) / n as f64;
    let x: Vec<f64> = (0..n)
        .map(|j| scenario.x_min + (j as f64 + 0.5) * dx)
        .collect();
    let a: Vec<f64> = x
        .iter()
        .map(|&xi| {
            if xi < 0.0 {
                scenario.a_left
            } else {
                scenario.a_right
            }
        })
        .collect();
    let base: Vec<f64> = x.iter().map(|&xi| u0(xi)).collect();
    let bump_center = 0.25 * scenario.x_min;
    let perturbed: Vec<f64> = x
        .iter()
        .zip(&base)
        .map(|(&xi, &u)| u + scenario.delta * (-((xi - bump_center) / 0.1).powi(2)).exp())
        .collect();

    let (final_u, snapshots) = traffic_run(&a, base, dx, scenario, true);
    let (final_perturbed_u, _) = traffic_run(&a, perturbed, dx, scenario, false);

    let dist = final_u
        .iter()
        .zip(&final_perturbed_u)
        .fold(0.0f64, |m, (&p, &q)| m.max((p - q).abs()));
    TrafficReport {
        x,
        a: a.clone(),
        snapshots,
        sensitivity_ratio: dist / scenario.delta,
        final_u,
        final_perturbed_u,
        delta: scenario.delta,
    }
}

fn traffic_run(
    a: &[f64],
    mut u: Vec<f64>,
    dx: f64,
    scenario: &TrafficScenario,
    keep_snapshots: bool,
) -> (Vec<f64>, Vec<TrafficSnapshot>) {
    let n = u.len();
    let mut t = 0.0;
    let mut snapshots = Vec::new();
    let snap_times: Vec<f64> = (0..scenario.n_snapshots)
        .map(|i| scenario.t_end * (i + 1) as f64 / scenario.n_snapshots as f64)
        .collect();
    let mut next_snap = 0;
    if keep_snapshots {
        snapshots.push(TrafficSnapshot {
            time: 0.0,
            lambda: u
                .iter()
                .zip(a)
                .map(|(&ui, &ai)| traffic_eigenvalue(ai, ui))
                .collect(),
            u: u.clone(),
        });
    }
    while t < scenario.t_end - 1e-14 {
        let max_speed = u
            .iter()
            .zip(a)
            .fold(1e-12f64, |m, (&ui, &ai)| {
                m.max(traffic_eigenvalue(ai, ui).abs())
            });
        let mut dt = scenario.cfl * dx / max_speed;
        if t + dt > scenario.t_end {
            dt = scenario.t_end - t;
        }
        if next_snap < snap_times.len() && t + dt > snap_times[next_snap] {
            dt = snap_times[next_snap] - t;
        }

        let mut flux = vec![0.0; n + 1];
        for i in 0..=n {
            let (ul, al) = if i == 0 {
                (u[0], a[0])
            } else {
                (u[i - 1], a[i - 1])
            };
            let (ur, ar) = if i == n {
                (u[n - 1], a[n - 1])
            } else {
                (u[i], a[i])
            };
            let w = if al == ar {
                traffic_godunov_state(ar, ul, ur)
            } else {
                let ul_pushed = traffic_steady_jump(al, ar, ul);
                traffic_godunov_state(ar, ul_pushed, ur)
            };
            flux[i] = traffic_flux(ar, w);
        }
        let lam = dt / dx;
        for j in 0..n {
            u[j] -= lam * (flux[j + 1] - flux[j]);
        }
        t += dt;
        if next_snap < snap_times.len() && (t - snap_times[next_snap]).abs() < 1e-12 {
            if keep_snapshots {
                snapshots.push(TrafficSnapshot {
                    time: t,
                    lambda: u
                        .iter()
                        .zip(a)
                        .map(|(&ui, &ai)| traffic_eigenvalue(ai, ui))
                        .collect(),
                    u: u.clone(),
                });
            }
            next_snap += 1;
        }
    }
    (u, snapshots)
}

/// Build the cell values of `a` from a sampled source weight by trapezoid
/// accumulation, so interface jumps approximate the cell integrals of k.
pub fn accumulate_source_weight(k: &[f64], dx: f64) -> Vec<f64> {
    let mut a = Vec::with_capacity(k.len());
    let mut acc = 0.0;
    let mut prev = 0.0;
    for (j, &kj) in k.iter().enumerate() {
        if j == 0 {
            acc = 0.5 * kj * dx;
        } else {
            acc += 0.5 * (prev + kj) * dx;
        }
        prev = kj;
        a.push(acc);
    }
    a
}
