//! Free-surface Euler solver on a periodic conformal strip, plus steady
//! solitary waves from the quadratic steady-wave formulation solved by
//! Petviashvili iteration.
//!
//! Unsteady model: with the surface trace gamma(xi, t) and surface potential
//! phi(xi, t) on the strip of depth h0, the closures
//! `psi_xi = S[phi_xi]`, `chi_xi = 1 - H[gamma_xi]`, `J = chi_xi^2 +
//! gamma_xi^2` turn the kinematic and dynamic conditions into
//!
//! ```text
//! gamma_t = gamma_xi H[psi_xi / J] - chi_xi psi_xi / J
//! phi_t   = (psi_xi^2 - phi_xi^2) / (2J) - g gamma + phi_xi H[psi_xi / J]
//! ```
//!
//! where H and S are the strip multipliers i coth(k h0) and i tanh(k h0).
//! Products are dealiased with the 3/2 rule; quotients are evaluated
//! pointwise. The zero mode of the advection velocity H[psi_xi/J] is the
//! horizontal drift of the conformal frame; it is pinned to zero, which
//! fixes the gauge without touching the physical wave.
//!
//! Steady model: a traveling wave of speed c satisfies
//!
//! ```text
//! (c^2/g) C[eta] = eta + C[eta^2/2] + eta C[eta]
//! ```
//!
//! with the flat-strip operator C = D coth(D h0) (zero mode 1/h0). The
//! left-hand operator (c^2/g) C - 1 is positive for supercritical speeds, so
//! the quadratic fixed point is reachable by Petviashvili iteration.

use num_complex::Complex64;
use thiserror::Error;

use crate::spectral::{
    apply_symbol, dealiased_product, spectral_derivative, DiagonalSymbol, PeriodicGrid, RealField,
    SpectralError,
};
use std::sync::Arc;

#[derive(Debug, Error)]
pub enum WaterWaveError {
    #[error("surface folding: conformal Jacobian dropped to {j_min:.3e}")]
    Folding { j_min: f64 },
    #[error("spectral tail grew to {tail:.3e} of the peak; the run is under-resolved")]
    Resolution { tail: f64 },
    #[error("Petviashvili iteration failed: {reason}; trace (iter, S, update): {trace:?}")]
    NonConvergence {
        reason: String,
        trace: Vec<(usize, f64, f64)>,
    },
    #[error("window too small: boundary tail {tail:.3e} exceeds 1e-12 of the depth")]
    Window { tail: f64 },
    #[error("operator symbol vanishes at wavenumber {k:.6e}")]
    SingularOperator { k: f64 },
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// Which model produced a solitary wave.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WaveModel {
    FullEuler,
    Sgn,
    Esgn,
}

impl std::fmt::Display for WaveModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            WaveModel::FullEuler => write!(f, "euler"),
            WaveModel::Sgn => write!(f, "sgn"),
            WaveModel::Esgn => write!(f, "esgn"),
        }
    }
}

/// A steady solitary wave scaled by the still-water depth: crest at xi = 0,
/// even profile, monotone decay to zero in the tails.
#[derive(Debug, Clone)]
pub struct SolitaryWave {
    pub model: WaveModel,
    /// a/d
    pub amplitude_ratio: f64,
    /// c / sqrt(g d)
    pub speed_ratio: f64,
    /// solver coordinate per sample, in units of d
    pub xi: Vec<f64>,
    /// physical horizontal position per sample, in units of d
    pub x: Vec<f64>,
    /// surface elevation per sample, in units of d
    pub profile: Vec<f64>,
    pub iterations: usize,
}

impl SolitaryWave {
    pub fn crest_height(&self) -> f64 {
        self.profile.iter().cloned().fold(f64::MIN, f64::max)
    }
}

/// Surface trace and surface potential on a periodic conformal strip.
#[derive(Debug, Clone)]
pub struct ConformalSurfaceState {
    pub gamma: RealField,
    pub phi: RealField,
    /// conformal strip depth
    pub h0: f64,
    pub g: f64,
}

impl ConformalSurfaceState {
    pub fn rest(grid: Arc<PeriodicGrid>, h0: f64, g: f64) -> Self {
        Self {
            gamma: RealField::zeros(grid.clone()),
            phi: RealField::zeros(grid),
            h0,
            g,
        }
    }

    pub fn grid(&self) -> &Arc<PeriodicGrid> {
        self.gamma.grid()
    }

    /// Horizontal map chi(xi) = xi - H[gamma] under the zero-drift gauge.
    pub fn chi(&self) -> Result<Vec<f64>, WaterWaveError> {
        let h = apply_symbol(
            &self.gamma.mean_free(),
            &DiagonalSymbol::coth_strip(self.h0),
        )?;
        Ok(self
            .grid()
            .nodes
            .iter()
            .zip(h.samples())
            .map(|(&xi, &hh)| xi - hh)
            .collect())
    }

    /// Mass integral gamma chi_xi d xi.
    pub fn mass(&self) -> Result<f64, WaterWaveError> {
        let quantities = Quantities::build(self, 0.0)?;
        let d_xi = self.grid().spacing();
        Ok(self
            .gamma
            .samples()
            .iter()
            .zip(quantities.chi_xi.samples())
            .map(|(&g, &cx)| g * cx)
            .sum::<f64>()
            * d_xi)
    }

    /// Total energy: kinetic part -1/2 integral phi psi_xi + potential part
    /// g/2 integral gamma^2 chi_xi.
    pub fn energy(&self) -> Result<f64, WaterWaveError> {
        let quantities = Quantities::build(self, 0.0)?;
        let d_xi = self.grid().spacing();
        let kinetic: f64 = self
            .phi
            .samples()
            .iter()
            .zip(quantities.psi_xi.samples())
            .map(|(&p, &px)| p * px)
            .sum::<f64>()
            * (-0.5 * d_xi);
        let potential: f64 = self
            .gamma
            .samples()
            .iter()
            .zip(quantities.chi_xi.samples())
            .map(|(&gm, &cx)| gm * gm * cx)
            .sum::<f64>()
            * (0.5 * self.g * d_xi);
        Ok(kinetic + potential)
    }
}

struct Quantities {
    chi_xi: RealField,
    psi_xi: RealField,
    advection: RealField,
    w: RealField,
    max_speed: f64,
    /// mean horizontal frame velocity <chi_xi H[w] + gamma_xi w>; the gauge
    /// drops it from the evolution, so physical positions need its integral
    frame_drift: f64,
}

impl Quantities {
    fn build(state: &ConformalSurfaceState, j_floor: f64) -> Result<Self, WaterWaveError> {
        let gamma_xi = spectral_derivative(&state.gamma, 1)?;
        let phi_xi = spectral_derivative(&state.phi, 1)?;
        let h_gamma_xi = apply_symbol(&gamma_xi, &DiagonalSymbol::coth_strip(state.h0))?;
        let chi_xi = h_gamma_xi.map(|v| 1.0 - v);
        let psi_xi = apply_symbol(&phi_xi, &DiagonalSymbol::tanh_strip(state.h0))?;
        let jac = chi_xi.zip(&gamma_xi, |c, g| c * c + g * g);
        let j_min = jac.samples().iter().cloned().fold(f64::MAX, f64::min);
        if j_min < j_floor {
            return Err(WaterWaveError::Folding { j_min });
        }
        let w = psi_xi.pointwise_div(&jac);
        // zero mode of the advection velocity = frame drift, gauged away
        let advection = apply_symbol(&w.mean_free(), &DiagonalSymbol::coth_strip(state.h0))?;
        let max_speed = w.max_abs().max(advection.max_abs());
        let n = state.grid().n_points as f64;
        let frame_drift = chi_xi
            .samples()
            .iter()
            .zip(advection.samples())
            .map(|(&c, &a)| c * a)
            .sum::<f64>()
            / n
            + gamma_xi
                .samples()
                .iter()
                .zip(w.samples())
                .map(|(&g, &ww)| g * ww)
                .sum::<f64>()
                / n;
        Ok(Self {
            chi_xi,
            psi_xi,
            advection,
            w,
            max_speed,
            frame_drift,
        })
    }
}

/// Right-hand side of the conformal evolution equations, all products
/// dealiased. Fails when the conformal Jacobian drops below `j_min`.
pub fn conformal_rhs(
    state: &ConformalSurfaceState,
    j_min: f64,
) -> Result<(RealField, RealField), WaterWaveError> {
    let gamma_xi = spectral_derivative(&state.gamma, 1)?;
    let phi_xi = spectral_derivative(&state.phi, 1)?;
    let q = Quantities::build(state, j_min)?;

    let gamma_t = dealiased_product(&gamma_xi, &q.advection)?
        .sub(&dealiased_product(&q.chi_xi, &q.w)?);

    let jac = q.chi_xi.zip(&gamma_xi, |c, g| c * c + g * g);
    let phi_xi_over_j = phi_xi.pointwise_div(&jac);
    let quad = dealiased_product(&q.psi_xi, &q.w)?
        .sub(&dealiased_product(&phi_xi, &phi_xi_over_j)?)
        .scaled(0.5);
    let phi_t = quad
        .sub(&state.gamma.scaled(state.g))
        .add(&dealiased_product(&phi_xi, &q.advection)?);
    Ok((gamma_t, phi_t))
}

#[derive(Debug, Clone)]
pub struct EvolveOptions {
    pub t_end: f64,
    /// accuracy cap on the step; stability caps apply on top of it
    pub dt_max: f64,
    pub cfl: f64,
    pub snapshot_times: Vec<f64>,
    pub j_min: f64,
    /// abort when the tail of the gamma spectrum exceeds this fraction of
    /// its peak
    pub tail_limit: f64,
}

impl EvolveOptions {
    pub fn to_time(t_end: f64) -> Self {
        Self {
            t_end,
            dt_max: 0.01,
            cfl: 0.4,
            snapshot_times: vec![t_end],
            j_min: 1e-6,
            tail_limit: 1e-5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConservedSample {
    pub t: f64,
    pub mass: f64,
    pub energy: f64,
}

pub struct Trajectory {
    pub snapshots: Vec<(f64, ConformalSurfaceState)>,
    pub conserved: Vec<ConservedSample>,
    /// Accumulated horizontal frame offset x0(t): the gauge pins the mean
    /// advection velocity to zero, so physical positions are chi(xi) + x0.
    pub frame_offset: Vec<(f64, f64)>,
}

impl Trajectory {
    pub fn frame_offset_at(&self, t: f64) -> f64 {
        let series = &self.frame_offset;
        if series.is_empty() {
            return 0.0;
        }
        if t <= series[0].0 {
            return series[0].1;
        }
        for w in series.windows(2) {
            if t <= w[1].0 {
                let s = (t - w[0].0) / (w[1].0 - w[0].0);
                return w[0].1 + s * (w[1].1 - w[0].1);
            }
        }
        series.last().unwrap().1
    }
}

fn spectral_tail_fraction(f: &RealField) -> f64 {
    let spec = f.spectrum();
    let n = spec.len();
    let peak = spec.iter().map(|c| c.norm()).fold(0.0f64, f64::max);
    if peak < 1e-30 {
        return 0.0;
    }
    let lo = 3 * n / 8;
    let hi = 5 * n / 8 + 1;
    let tail = (lo..hi.min(n))
        .map(|j| spec[j].norm())
        .fold(0.0f64, f64::max);
    tail / peak
}

/// March the conformal system with classical fourth-order Runge-Kutta.
/// The step obeys an advective CFL bound, a dispersive stability bound from
/// the largest resolved frequency, and the accuracy cap `dt_max`. Snapshots
/// are hit exactly; mass and energy are sampled every step.
pub fn evolve(
    state: &ConformalSurfaceState,
    opts: &EvolveOptions,
) -> Result<Trajectory, WaterWaveError> {
    let tail0 = spectral_tail_fraction(&state.gamma);
    if tail0 > 1e-10 {
        return Err(WaterWaveError::Resolution { tail: tail0 });
    }

    let grid = state.grid().clone();
    let k_max = grid
        .wavenumbers
        .iter()
        .cloned()
        .fold(0.0f64, |m, k| m.max(k.abs()));
    let omega_max = (state.g * k_max * (k_max * state.h0).tanh()).sqrt();
    let d_xi = grid.spacing();

    let mut snaps = opts.snapshot_times.clone();
    snaps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    snaps.retain(|&t| t > 0.0 && t <= opts.t_end + 1e-12);

    let mut current = state.clone();
    let mut t = 0.0;
    let mut trajectory = Trajectory {
        snapshots: vec![(0.0, current.clone())],
        conserved: vec![ConservedSample {
            t: 0.0,
            mass: current.mass()?,
            energy: current.energy()?,
        }],
        frame_offset: vec![(0.0, 0.0)],
    };
    let mut next_snap = 0usize;
    let mut x0 = 0.0;
    let mut drift_prev: Option<(f64, f64)> = None;

    while t < opts.t_end - 1e-13 {
        let q = Quantities::build(&current, opts.j_min)?;
        if let Some((tp, dp)) = drift_prev {
            x0 += (t - tp) * 0.5 * (dp + q.frame_drift);
            trajectory.frame_offset.push((t, x0));
        }
        drift_prev = Some((t, q.frame_drift));
        let mut dt = opts
            .dt_max
            .min(opts.cfl * d_xi / q.max_speed.max(1e-12))
            .min(2.5 / omega_max.max(1e-12));
        if t + dt > opts.t_end {
            dt = opts.t_end - t;
        }
        if next_snap < snaps.len() && t + dt > snaps[next_snap] - 1e-13 {
            dt = snaps[next_snap] - t;
        }

        current = rk4_step(&current, dt, opts.j_min)?;
        t += dt;

        let tail = spectral_tail_fraction(&current.gamma);
        if tail > opts.tail_limit {
            return Err(WaterWaveError::Resolution { tail });
        }
        trajectory.conserved.push(ConservedSample {
            t,
            mass: current.mass()?,
            energy: current.energy()?,
        });
        if next_snap < snaps.len() && (t - snaps[next_snap]).abs() <= 1e-12 {
            trajectory.snapshots.push((t, current.clone()));
            next_snap += 1;
        }
    }
    if let Some((tp, dp)) = drift_prev {
        if t > tp {
            let q = Quantities::build(&current, opts.j_min)?;
            x0 += (t - tp) * 0.5 * (dp + q.frame_drift);
            trajectory.frame_offset.push((t, x0));
        }
    }
    Ok(trajectory)
}

fn rk4_step(
    state: &ConformalSurfaceState,
    dt: f64,
    j_min: f64,
) -> Result<ConformalSurfaceState, WaterWaveError> {
    let advance = |g: &RealField, p: &RealField, kg: &RealField, kp: &RealField, a: f64| {
        ConformalSurfaceState {
            gamma: g.add(&kg.scaled(a)),
            phi: p.add(&kp.scaled(a)),
            h0: state.h0,
            g: state.g,
        }
    };
    let (k1g, k1p) = conformal_rhs(state, j_min)?;
    let s2 = advance(&state.gamma, &state.phi, &k1g, &k1p, 0.5 * dt);
    let (k2g, k2p) = conformal_rhs(&s2, j_min)?;
    let s3 = advance(&state.gamma, &state.phi, &k2g, &k2p, 0.5 * dt);
    let (k3g, k3p) = conformal_rhs(&s3, j_min)?;
    let s4 = advance(&state.gamma, &state.phi, &k3g, &k3p, dt);
    let (k4g, k4p) = conformal_rhs(&s4, j_min)?;

    let combine = |k1: &RealField, k2: &RealField, k3: &RealField, k4: &RealField| {
        k1.add(&k2.scaled(2.0))
            .add(&k3.scaled(2.0))
            .add(k4)
            .scaled(dt / 6.0)
    };
    let gamma = state.gamma.add(&combine(&k1g, &k2g, &k3g, &k4g));
    // the potential's zero mode is pure gauge (it feeds nothing back);
    // keep it pinned so long runs do not accumulate a linear drift
    let phi = state
        .phi
        .add(&combine(&k1p, &k2p, &k3p, &k4p))
        .mean_free();
    Ok(ConformalSurfaceState {
        gamma,
        phi,
        h0: state.h0,
        g: state.g,
    })
}

#[derive(Debug, Clone)]
pub struct PetviashviliOptions {
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for PetviashviliOptions {
    fn default() -> Self {
        Self {
            tol: 1e-14,
            max_iterations: 10_000,
        }
    }
}

#[derive(Debug)]
pub struct PetviashviliSolution {
    pub field: RealField,
    pub iterations: usize,
    pub stabilisation: f64,
    pub last_update: f64,
}

/// Fixed-point iteration for `L u = N(u)` with a homogeneous nonlinearity of
/// degree p: `u <- S^gamma_exp L^{-1} N(u)` with the stabilisation factor
/// `S = <L u, u> / <N(u), u>` (gamma_exp = p/(p-1) for degree p). At a fixed
/// point S = 1.
pub fn petviashvili_solve<N>(
    l_symbol: &DiagonalSymbol,
    nonlinearity: N,
    guess: &RealField,
    gamma_exp: f64,
    opts: &PetviashviliOptions,
) -> Result<PetviashviliSolution, WaterWaveError>
where
    N: Fn(&RealField) -> Result<RealField, WaterWaveError>,
{
    let grid = guess.grid().clone();
    let inner = |a: &RealField, b: &RealField| -> f64 {
        a.samples()
            .iter()
            .zip(b.samples())
            .map(|(&x, &y)| x * y)
            .sum::<f64>()
            * grid.spacing()
    };

    let mut u = guess.clone();
    let mut trace: Vec<(usize, f64, f64)> = Vec::new();
    let mut first_update = f64::NAN;
    for iter in 0..opts.max_iterations {
        let n_u = nonlinearity(&u)?;
        let l_u = apply_symbol(&u, l_symbol)?;
        let denom = inner(&n_u, &u);
        let scale = u.max_abs();
        if denom.abs() <= 1e-280 * scale.max(1.0) {
            return Err(WaterWaveError::NonConvergence {
                reason: "stabilisation factor undefined (<N(u), u> = 0)".into(),
                trace,
            });
        }
        let s = inner(&l_u, &u) / denom;

        let next = {
            let mut spec = n_u.spectrum();
            for (j, c) in spec.iter_mut().enumerate() {
                let k = grid.wavenumbers[j];
                let m = symbol_value(l_symbol, k);
                if m.norm() < 1e-300 {
                    return Err(WaterWaveError::SingularOperator { k });
                }
                *c /= m;
            }
            let field = field_from_spectrum(&grid, spec);
            field.scaled(s.powf(gamma_exp))
        };

        let update = next.sub(&u).max_abs() / next.max_abs().max(1e-300);
        if trace.len() < 12 || iter % 50 == 0 {
            trace.push((iter, s, update));
        }
        if iter == 0 {
            first_update = update;
        }
        u = next;
        if update < opts.tol {
            return Ok(PetviashviliSolution {
                field: u,
                iterations: iter + 1,
                stabilisation: s,
                last_update: update,
            });
        }
        if !update.is_finite() || (iter > 20 && update > 1e3 * first_update.max(1e-12)) {
            return Err(WaterWaveError::NonConvergence {
                reason: format!("update diverged at iteration {iter}"),
                trace,
            });
        }
    }
    Err(WaterWaveError::NonConvergence {
        reason: format!("no convergence within {} iterations", opts.max_iterations),
        trace,
    })
}

fn symbol_value(symbol: &DiagonalSymbol, k: f64) -> Complex64 {
    // reuse the public application path on a delta-free field is overkill;
    // symbols used here are real and even, evaluate directly
    symbol.multiplier_for(k)
}

fn field_from_spectrum(grid: &Arc<PeriodicGrid>, spec: Vec<Complex64>) -> RealField {
    let (samples, _) = crate::fft::real_samples(spec, grid.n_points as f64);
    RealField::from_samples(grid.clone(), samples)
}

/// Flat-strip steady-wave operator `C = D coth(D h0)` with zero mode 1/h0.
pub fn steady_wave_operator(h0: f64) -> DiagonalSymbol {
    DiagonalSymbol::new(
        move |k| Complex64::new(k / (k * h0).tanh(), 0.0),
        Complex64::new(1.0 / h0, 0.0),
    )
}

/// Left operator `(c^2/g) C - 1` of the steady-wave equation; positive for
/// supercritical c on every mode, hence invertible.
pub fn steady_wave_lhs(c: f64, g: f64, h0: f64) -> DiagonalSymbol {
    let f = c * c / g;
    DiagonalSymbol::new(
        move |k| Complex64::new(f * k / (k * h0).tanh() - 1.0, 0.0),
        Complex64::new(f / h0 - 1.0, 0.0),
    )
}

/// Quadratic right-hand side `N(eta) = C[eta^2/2] + eta C[eta]`, dealiased.
pub fn steady_wave_rhs(eta: &RealField, h0: f64) -> Result<RealField, WaterWaveError> {
    let c_op = steady_wave_operator(h0);
    let half_sq = dealiased_product(eta, eta)?.scaled(0.5);
    let first = apply_symbol(&half_sq, &c_op)?;
    let second = dealiased_product(eta, &apply_symbol(eta, &c_op)?)?;
    Ok(first.add(&second))
}

/// Linear far-field decay rate of a solitary tail: the positive root of
/// `(c^2/g h0) mu h0 cot(mu h0) = 1` in (0, pi/2/h0).
pub fn tail_decay_rate(c: f64, g: f64, h0: f64) -> f64 {
    let froude2 = c * c / (g * h0);
    let mut lo = 1e-9 / h0;
    let mut hi = (std::f64::consts::PI / 2.0 - 1e-9) / h0;
    // q(mu) = froude2 * (mu h0) cot(mu h0) - 1: positive at 0, negative at pi/2
    let q = |mu: f64| {
        let z = mu * h0;
        froude2 * z / z.tan() - 1.0
    };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if q(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Result of the steady solve: the wave in still-water units plus the
/// conformal state (work units) ready to be propagated by [`evolve`].
pub struct BabenkoWave {
    pub wave: SolitaryWave,
    pub state: ConformalSurfaceState,
    /// translation speed in work units (g = 1, strip depth 1)
    pub speed: f64,
    /// measured still-water depth in work units
    pub depth: f64,
}

/// Compute the steady solitary wave of the given amplitude ratio a/d on a
/// periodic window (work units g = 1, strip depth 1).
///
/// For fixed speed c the quadratic steady equation is solved by
/// Petviashvili iteration from a weakly nonlinear sech^2 guess (with
/// amplitude continuation above moderate steepness); an outer secant
/// iteration then adjusts c until the measured amplitude matches. The
/// still-water level is read off the window edge: d = 1 + eta_edge -
/// mean(eta) removes the periodic pedestal exactly, leaving only the
/// exponentially small window truncation.
pub fn babenko_solitary(
    amplitude_ratio: f64,
    window: Option<f64>,
    n_points: usize,
) -> Result<BabenkoWave, WaterWaveError> {
    assert!(
        amplitude_ratio > 0.0 && amplitude_ratio <= 0.75,
        "amplitude ratio must lie in (0, 0.75]"
    );

    // amplitude continuation keeps the iteration inside its basin
    let mut targets = Vec::new();
    let mut a = amplitude_ratio.min(0.35);
    loop {
        targets.push(a);
        if a >= amplitude_ratio {
            break;
        }
        a = (a * 1.5).min(amplitude_ratio);
    }

    let g = 1.0;
    let h0 = 1.0;
    let c_guess = (1.0 + amplitude_ratio).sqrt();
    let mu = tail_decay_rate(c_guess, g, h0);
    let width = window.unwrap_or_else(|| (2.0 * (amplitude_ratio / 1e-14).ln() / mu).max(40.0));
    let grid = PeriodicGrid::new(n_points, width);
    let center = 0.5 * width;

    let kdv_guess = |a_t: f64| {
        RealField::from_fn(grid.clone(), |xi| {
            let arg = 0.5 * (3.0 * a_t).sqrt() * (xi - center);
            a_t / arg.cosh().powi(2)
        })
    };

    let mut iterations_total = 0usize;
    let mut current = kdv_guess(targets[0]);
    let mut solved: Option<(f64, Measured, RealField)> = None;

    for &a_target in &targets {
        let mut c0 = (1.0 + a_target).sqrt();
        let mut c1 = c0 * 0.998;
        let mut m0 = solve_at_speed(&mut current, c0, g, h0, &mut iterations_total)?;
        let mut r0 = m0.amplitude_ratio - a_target;
        let mut best = (c0, m0.clone(), current.clone());
        for _ in 0..60 {
            let m1 = solve_at_speed(&mut current, c1, g, h0, &mut iterations_total)?;
            let r1 = m1.amplitude_ratio - a_target;
            best = (c1, m1.clone(), current.clone());
            if r1.abs() <= 1e-10 {
                break;
            }
            let dc = if (r1 - r0).abs() > 1e-300 {
                r1 * (c1 - c0) / (r1 - r0)
            } else {
                0.0
            };
            c0 = c1;
            r0 = r1;
            m0 = m1;
            let _ = &m0;
            c1 -= dc.clamp(-0.05, 0.05);
            if c1 * c1 <= g * h0 {
                c1 = (g * h0).sqrt() * 1.0001;
            }
        }
        solved = Some(best);
    }
    let (c, measured, eta) = solved.expect("at least one continuation target");

    // physical profile relative to the still-water level at the window edge
    let eta_edge = measured.edge;
    let gamma_phys = eta.shifted(-eta_edge);
    let depth = measured.depth;

    // window check on the outer 10% of the domain
    let mut tail = 0.0f64;
    for (j, &xi) in grid.nodes.iter().enumerate() {
        if (xi - center).abs() >= 0.45 * width {
            tail = tail.max(gamma_phys.samples()[j].abs());
        }
    }
    if tail > 1e-12 * depth {
        return Err(WaterWaveError::Window { tail: tail / depth });
    }

    // surface potential of the traveling wave: phi_xi = -c H[gamma_xi]
    let phi = apply_symbol(&gamma_phys.mean_free(), &DiagonalSymbol::coth_strip(h0))?.scaled(-c);
    let state = ConformalSurfaceState {
        gamma: gamma_phys.clone(),
        phi,
        h0,
        g,
    };

    let chi = state.chi()?;
    let scale = 1.0 / depth;
    let mut xi_out = Vec::with_capacity(n_points);
    let mut x_out = Vec::with_capacity(n_points);
    let mut profile = Vec::with_capacity(n_points);
    for (j, &xi) in grid.nodes.iter().enumerate() {
        xi_out.push((xi - center) * scale);
        x_out.push((chi[j] - center) * scale);
        profile.push(gamma_phys.samples()[j] * scale);
    }

    let wave = SolitaryWave {
        model: WaveModel::FullEuler,
        amplitude_ratio: measured.amplitude_ratio,
        speed_ratio: c / (g * depth).sqrt(),
        xi: xi_out,
        x: x_out,
        profile,
        iterations: iterations_total,
    };
    Ok(BabenkoWave {
        wave,
        state,
        speed: c,
        depth,
    })
}

/// Exact traveling wave of the discrete periodic system, for steady/unsteady
/// cross-checks: surface trace, matching potential and translation speeds.
///
/// The physical pattern speed is the one the potential is built from; in the
/// conformal frame the trace translates slightly faster, and the difference
/// is exactly the mean horizontal frame drift that the gauge removes.
pub struct PeriodicTravelingWave {
    pub state: ConformalSurfaceState,
    /// physical translation speed (work units)
    pub speed: f64,
    /// translation speed of the trace in the conformal coordinate
    pub conformal_speed: f64,
    /// residual of the steady condition after refinement
    pub residual: f64,
}

/// Kinematic translation factor: for a surface trace gamma with potential
/// built from speed s, the trace advects at lambda * s, where lambda comes
/// from projecting the kinematic right-hand side onto gamma_xi. On a
/// traveling wave the projection is exact.
fn kinematic_factor(gamma: &RealField, h0: f64) -> Result<f64, WaterWaveError> {
    let gamma_xi = spectral_derivative(gamma, 1)?;
    let h_gamma_xi = apply_symbol(&gamma_xi, &DiagonalSymbol::coth_strip(h0))?;
    let chi_xi = h_gamma_xi.map(|v| 1.0 - v);
    let jac = chi_xi.zip(&gamma_xi, |c, g| c * c + g * g);
    let w = gamma_xi.pointwise_div(&jac);
    let h_w = apply_symbol(&w.mean_free(), &DiagonalSymbol::coth_strip(h0))?;
    let transported = dealiased_product(&chi_xi, &w)?.sub(&dealiased_product(&gamma_xi, &h_w)?);
    let num: f64 = transported
        .samples()
        .iter()
        .zip(gamma_xi.samples())
        .map(|(&a, &b)| a * b)
        .sum();
    let den: f64 = gamma_xi.samples().iter().map(|&b| b * b).sum();
    Ok(num / den)
}

/// `T[gamma] = lambda H[gamma_xi] - (gamma_xi^2 - H[gamma_xi]^2)/(2J)
///             + H[gamma_xi] H0[gamma_xi / J]`,
/// the steady-state content of the dynamic equation for a wave whose
/// potential is built from its own trace.
fn steady_t_field(gamma: &RealField, lambda: f64, h0: f64) -> Result<RealField, WaterWaveError> {
    let gamma_xi = spectral_derivative(gamma, 1)?;
    let h_gamma_xi = apply_symbol(&gamma_xi, &DiagonalSymbol::coth_strip(h0))?;
    let chi_xi = h_gamma_xi.map(|v| 1.0 - v);
    let jac = chi_xi.zip(&gamma_xi, |c, g| c * c + g * g);
    let w = gamma_xi.pointwise_div(&jac);
    let h_w = apply_symbol(&w.mean_free(), &DiagonalSymbol::coth_strip(h0))?;
    let quad = dealiased_product(&gamma_xi, &w)?
        .sub(&dealiased_product(&h_gamma_xi, &h_gamma_xi.pointwise_div(&jac))?)
        .scaled(0.5);
    Ok(h_gamma_xi
        .scaled(lambda)
        .sub(&quad)
        .add(&dealiased_product(&h_gamma_xi, &h_w)?))
}

/// Steady-condition residual of the dynamic equation for the pair
/// (gamma, phi' = -s H[gamma_xi]) traveling at lambda * s: the mean-free
/// part of `g gamma + s^2 T[gamma]` must vanish.
fn dynamic_residual(
    gamma: &RealField,
    s_hat: f64,
    lambda: f64,
    g: f64,
    h0: f64,
) -> Result<RealField, WaterWaveError> {
    let t_field = steady_t_field(gamma, lambda, h0)?;
    let r = gamma.scaled(g).add(&t_field.scaled(s_hat * s_hat));
    Ok(r.mean_free())
}

/// Polish a line-windowed solitary trace into the exact traveling wave of
/// the periodic discrete system at internal speed `s_hat`. The mean-free
/// steady condition `(s^2 C0 - g) gamma = s^2 (T[gamma] + C0 gamma)` has a
/// positive left symbol and a quadratic-leading right side, so the
/// Petviashvili update converges from the line solution; the mean of gamma
/// (the vertical datum) is held fixed throughout.
pub fn refine_periodic_traveling(
    gamma0: &RealField,
    s_hat: f64,
    g: f64,
    h0: f64,
) -> Result<PeriodicTravelingWave, WaterWaveError> {
    let mean0 = gamma0.mean();
    let lhs = DiagonalSymbol::new(
        move |k| Complex64::new(s_hat * s_hat * k / (k * h0).tanh() - g, 0.0),
        Complex64::new(1.0, 0.0),
    );
    let c0 = DiagonalSymbol::new(
        move |k| Complex64::new(k / (k * h0).tanh(), 0.0),
        Complex64::new(0.0, 0.0),
    );
    let nonlinearity = |tilde: &RealField| -> Result<RealField, WaterWaveError> {
        let gamma = tilde.shifted(mean0);
        let lambda = kinematic_factor(&gamma, h0)?;
        let t_field = steady_t_field(&gamma, lambda, h0)?;
        let n = t_field
            .add(&apply_symbol(&gamma, &c0)?)
            .scaled(s_hat * s_hat);
        Ok(n.mean_free())
    };
    let sol = petviashvili_solve(
        &lhs,
        nonlinearity,
        &gamma0.mean_free(),
        2.0,
        &PetviashviliOptions {
            tol: 1e-14,
            max_iterations: 2_000,
        },
    )?;
    let gamma = sol.field.shifted(mean0);

    let lambda = kinematic_factor(&gamma, h0)?;
    let residual = dynamic_residual(&gamma, s_hat, lambda, g, h0)?.max_abs()
        / (g * gamma.max_abs().max(1e-300));
    let phi = apply_symbol(&gamma.mean_free(), &DiagonalSymbol::coth_strip(h0))?.scaled(-s_hat);
    Ok(PeriodicTravelingWave {
        state: ConformalSurfaceState { gamma, phi, h0, g },
        speed: s_hat,
        conformal_speed: lambda * s_hat,
        residual,
    })
}

/// Steady solitary wave adapted to a finite periodic window: the line
/// solution provides the starting point, the refinement turns it into an
/// exact traveling wave of the discrete periodic system, and an outer
/// secant on the internal speed pins the crest height at the requested
/// amplitude ratio.
pub fn periodic_traveling_wave(
    amplitude_ratio: f64,
    window: Option<f64>,
    n_points: usize,
) -> Result<PeriodicTravelingWave, WaterWaveError> {
    let line = babenko_solitary(amplitude_ratio, window, n_points)?;
    let g = line.state.g;
    let h0 = line.state.h0;
    let edge_level = |w: &PeriodicTravelingWave| w.state.gamma.samples()[0];
    let amplitude =
        |w: &PeriodicTravelingWave| (quadratic_peak(w.state.gamma.samples()) - edge_level(w)) / h0;

    let mut s0 = line.speed;
    let mut wave = refine_periodic_traveling(&line.state.gamma, s0, g, h0)?;
    let mut r0 = amplitude(&wave) - amplitude_ratio;
    let mut s1 = s0 * (1.0 - 0.2 * r0);
    for _ in 0..50 {
        let next = refine_periodic_traveling(&wave.state.gamma, s1, g, h0)?;
        let r1 = amplitude(&next) - amplitude_ratio;
        wave = next;
        if r1.abs() <= 1e-10 {
            return Ok(wave);
        }
        let ds = if (r1 - r0).abs() > 1e-300 {
            r1 * (s1 - s0) / (r1 - r0)
        } else {
            0.0
        };
        s0 = s1;
        r0 = r1;
        s1 -= ds.clamp(-0.02, 0.02);
        if s1 * s1 <= g * h0 {
            s1 = (g * h0).sqrt() * 1.0001;
        }
    }
    Err(WaterWaveError::NonConvergence {
        reason: "amplitude match for the periodic traveling wave stalled".into(),
        trace: vec![],
    })
}

#[derive(Clone)]
struct Measured {
    amplitude_ratio: f64,
    edge: f64,
    depth: f64,
}

fn solve_at_speed(
    guess: &mut RealField,
    c: f64,
    g: f64,
    h0: f64,
    iterations_total: &mut usize,
) -> Result<Measured, WaterWaveError> {
    let lhs = steady_wave_lhs(c, g, h0);
    let sol = petviashvili_solve(
        &lhs,
        |eta| steady_wave_rhs(eta, h0),
        guess,
        2.0,
        &PetviashviliOptions::default(),
    )?;
    *iterations_total += sol.iterations;
    *guess = sol.field.clone();

    let eta = sol.field;
    let samples = eta.samples();
    let crest = quadratic_peak(samples);
    let edge = samples[0];
    // the solution approximates the periodised infinite-line wave, whose
    // still-water depth is the strip depth itself; the window edge value is
    // exponentially small and only diagnoses window adequacy
    Ok(Measured {
        amplitude_ratio: (crest - edge) / h0,
        edge,
        depth: h0,
    })
}

/// Peak height by quadratic interpolation around the max sample of a
/// periodic signal.
pub fn quadratic_peak(samples: &[f64]) -> f64 {
    let n = samples.len();
    let (jmax, &ymax) = samples
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap();
    let ym = samples[(jmax + n - 1) % n];
    let yp = samples[(jmax + 1) % n];
    let denom = ym - 2.0 * ymax + yp;
    if denom.abs() < 1e-300 {
        return ymax;
    }
    let delta = 0.5 * (ym - yp) / denom;
    ymax - 0.25 * (ym - yp) * delta
}

/// Crest offset (grid index units) by quadratic interpolation.
pub fn quadratic_peak_location(samples: &[f64]) -> (usize, f64) {
    let n = samples.len();
    let (jmax, &ymax) = samples
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap();
    let ym = samples[(jmax + n - 1) % n];
    let yp = samples[(jmax + 1) % n];
    let denom = ym - 2.0 * ymax + yp;
    if denom.abs() < 1e-300 {
        return (jmax, 0.0);
    }
    (jmax, 0.5 * (ym - yp) / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn rest_state_has_zero_rhs() {
        let grid = PeriodicGrid::new(64, 20.0);
        let state = ConformalSurfaceState::rest(grid, 1.0, 1.0);
        let (gt, pt) = conformal_rhs(&state, 1e-6).unwrap();
        assert_eq!(gt.max_abs(), 0.0);
        assert_eq!(pt.max_abs(), 0.0);
    }

    #[test]
    fn rest_state_stays_at_rest() {
        let grid = PeriodicGrid::new(64, 20.0);
        let state = ConformalSurfaceState::rest(grid, 1.0, 1.0);
        let traj = evolve(&state, &EvolveOptions::to_time(1.0)).unwrap();
        let (_, last) = traj.snapshots.last().unwrap();
        assert_eq!(last.gamma.max_abs(), 0.0);
        assert_eq!(last.phi.max_abs(), 0.0);
    }

    /// Traveling linear mode: gamma = eps cos(k xi), phi from the linear
    /// relation phi_xi = -c H[gamma_xi]; the k-th spectral phase must rotate
    /// at the dispersion frequency.
    #[test]
    fn linear_dispersion_relation() {
        let n = 128;
        let length = 2.0 * PI;
        let h0 = 0.7;
        let g = 1.0;
        let k = 3.0;
        let eps = 1e-8;
        let grid = PeriodicGrid::new(n, length);
        let gamma = RealField::from_fn(grid.clone(), |xi| eps * (k * xi).cos());
        let omega = (g * k * (k * h0).tanh()).sqrt();
        let c = omega / k;
        let phi = apply_symbol(&gamma, &DiagonalSymbol::coth_strip(h0))
            .unwrap()
            .scaled(-c);
        let state = ConformalSurfaceState { gamma, phi, h0, g };

        let t_end = 0.5;
        let n_snap = 10;
        let mut opts = EvolveOptions::to_time(t_end);
        opts.dt_max = 2e-3;
        opts.snapshot_times = (1..=n_snap)
            .map(|i| t_end * i as f64 / n_snap as f64)
            .collect();
        let traj = evolve(&state, &opts).unwrap();

        // phase of the k-th mode over time
        let mut phases = Vec::new();
        for (t, snap) in &traj.snapshots {
            let spec = snap.gamma.spectrum();
            phases.push((*t, spec[3].arg()));
        }
        let mut omega_measured = 0.0;
        let mut count = 0;
        for w in phases.windows(2) {
            let mut dphase = w[1].1 - w[0].1;
            while dphase > PI {
                dphase -= 2.0 * PI;
            }
            while dphase < -PI {
                dphase += 2.0 * PI;
            }
            omega_measured += dphase.abs() / (w[1].0 - w[0].0);
            count += 1;
        }
        omega_measured /= count as f64;
        let rel = (omega_measured - omega).abs() / omega;
        assert!(rel <= 1e-6, "omega relative error {rel:.3e}");
    }

    #[test]
    fn gauge_shift_of_gamma_mean_is_exact() {
        // same fluid, reference level shifted: gamma -> gamma - m with the
        // same strip depth; the dynamics must agree to round-off
        let n = 128;
        let grid = PeriodicGrid::new(n, 40.0);
        let h0 = 1.0;
        let g = 1.0;
        let gamma = RealField::from_fn(grid.clone(), |xi| 0.05 * (-((xi - 20.0) / 3.0).powi(2)).exp());
        let phi = RealField::from_fn(grid.clone(), |xi| 0.01 * (2.0 * PI * xi / 40.0).sin());
        let m = 0.02;

        let s1 = ConformalSurfaceState {
            gamma: gamma.clone(),
            phi: phi.clone(),
            h0,
            g,
        };
        let s2 = ConformalSurfaceState {
            gamma: gamma.shifted(-m),
            phi,
            h0,
            g,
        };
        let mut opts = EvolveOptions::to_time(0.5);
        opts.dt_max = 5e-3;
        let t1 = evolve(&s1, &opts).unwrap();
        let t2 = evolve(&s2, &opts).unwrap();
        let g1 = &t1.snapshots.last().unwrap().1.gamma;
        let g2 = &t2.snapshots.last().unwrap().1.gamma;
        let diff = g1.zip(g2, |a, b| a - b - m).max_abs();
        assert!(diff <= 1e-12, "gauge violation {diff:.3e}");
    }

    #[test]
    fn petviashvili_recovers_kdv_soliton() {
        // u'' = c u - 3 u^2 has the soliton (c/2) sech^2(sqrt(c) x / 2)
        let c = 1.0f64;
        let length = 80.0;
        let n = 512;
        let grid = PeriodicGrid::new(n, length);
        let center = 0.5 * length;
        let exact = RealField::from_fn(grid.clone(), |x| {
            0.5 * c / ((c.sqrt() * 0.5 * (x - center)).cosh().powi(2))
        });
        let lhs = DiagonalSymbol::new(
            move |k| Complex64::new(c + k * k, 0.0),
            Complex64::new(c, 0.0),
        );
        let guess = exact.scaled(1.25);
        let sol = petviashvili_solve(
            &lhs,
            |u| Ok(dealiased_product(u, u)?.scaled(3.0)),
            &guess,
            2.0,
            &PetviashviliOptions::default(),
        )
        .unwrap();
        let err = sol.field.sub(&exact).max_abs();
        assert!(err <= 1e-12, "soliton error {err:.3e}");
        assert!((sol.stabilisation - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn petviashvili_fixed_point_returns_unchanged() {
        let c = 1.0;
        let grid = PeriodicGrid::new(256, 60.0);
        let guess = RealField::from_fn(grid.clone(), |x| {
            0.5 / ((0.5 * (x - 30.0)).cosh().powi(2))
        });
        let lhs = DiagonalSymbol::new(
            move |k| Complex64::new(c + k * k, 0.0),
            Complex64::new(c, 0.0),
        );
        let nl = |u: &RealField| Ok(dealiased_product(u, u)?.scaled(3.0));
        let first = petviashvili_solve(&lhs, nl, &guess, 2.0, &PetviashviliOptions::default())
            .unwrap()
            .field;
        let second = petviashvili_solve(&lhs, nl, &first, 2.0, &PetviashviliOptions::default())
            .unwrap();
        assert!(second.iterations <= 2);
        assert!((second.stabilisation - 1.0).abs() <= 1e-12);
        let drift = second.field.sub(&first).max_abs();
        assert!(drift <= 1e-13, "fixed point drifted {drift:.3e}");
    }

    #[test]
    fn petviashvili_rejects_zero_guess() {
        let grid = PeriodicGrid::new(64, 10.0);
        let zero = RealField::zeros(grid);
        let lhs = DiagonalSymbol::new(
            |k| Complex64::new(1.0 + k * k, 0.0),
            Complex64::new(1.0, 0.0),
        );
        let res = petviashvili_solve(
            &lhs,
            |u| Ok(dealiased_product(u, u)?),
            &zero,
            2.0,
            &PetviashviliOptions::default(),
        );
        assert!(matches!(res, Err(WaterWaveError::NonConvergence { .. })));
    }

    #[test]
    fn solitary_small_amplitude_speed() {
        let result = babenko_solitary(0.1, None, 4096).unwrap();
        let froude = result.wave.speed_ratio;
        assert!(
            (froude - 1.048548).abs() <= 1e-5,
            "Froude {froude:.6} vs 1.048548"
        );
        assert!((result.wave.amplitude_ratio - 0.1).abs() <= 1e-8);
    }

    #[test]
    fn solitary_profile_even_and_monotone() {
        let result = babenko_solitary(0.2, None, 2048).unwrap();
        let w = &result.wave;
        let n = w.profile.len();
        let crest = w
            .profile
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        // evenness about the crest
        let mut asym = 0.0f64;
        for off in 1..n / 2 {
            let a = w.profile[(crest + off) % n];
            let b = w.profile[(crest + n - off) % n];
            asym = asym.max((a - b).abs());
        }
        assert!(asym <= 1e-9 * w.amplitude_ratio, "asymmetry {asym:.3e}");
        // monotone decay away from the crest
        for off in 1..n / 2 {
            let a = w.profile[(crest + off) % n];
            let b = w.profile[(crest + off - 1) % n];
            assert!(a <= b + 1e-13, "non-monotone at offset {off}");
        }
        assert!((w.crest_height() - w.amplitude_ratio).abs() <= 1e-10);
    }
}
