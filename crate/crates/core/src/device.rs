//! Well-balanced kinetic flux-vector splitting for the isentropic
//! Euler-Poisson system with adiabatic exponent 3 on x in (-1, 1):
//!
//! ```text
//! rho_t + (rho u)_x                                            = 0
//! (rho u)_t + (rho u^2 + rho^3/12)_x + rho phi_x + rho u / tau = 0
//! lambda(x) phi_xx = rho_D(x) - rho,   phi(-1) = 0, phi(1) = -V
//! ```
//!
//! The gamma = 3 system diagonalises exactly in the Riemann invariants
//! `u +- rho/2`, which double as the support endpoints of a two-branch
//! kinetic equilibrium. Interface fluxes transport that equilibrium across
//! the local potential jump: particles whose kinetic energy cannot clear the
//! barrier are reflected back, which is what keeps the scheme stable through
//! sonic points. Damping enters through augmented potential jumps.

use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DeviceError {
    #[error("invalid state: u_plus = {up:.6e} < u_minus = {um:.6e}")]
    InvalidState { up: f64, um: f64 },
    #[error("negative density {rho:.6e} in cell {cell}")]
    Positivity { cell: usize, rho: f64 },
    #[error("CFL violation: dt*max speed = {lhs:.3e} > {rhs:.3e} = cfl*dx")]
    CflViolation { lhs: f64, rhs: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Per-cell density/momentum pair with the Riemann-invariant view
/// `u_plus/u_minus = u +- rho/2`.
#[derive(Debug, Clone)]
pub struct MomentState {
    pub rho: Vec<f64>,
    pub momentum: Vec<f64>,
}

impl MomentState {
    pub fn new(rho: Vec<f64>, momentum: Vec<f64>) -> Result<Self, DeviceError> {
        assert_eq!(rho.len(), momentum.len());
        let state = Self { rho, momentum };
        state.check_positive()?;
        Ok(state)
    }

    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    pub fn velocity(&self, j: usize) -> f64 {
        if self.rho[j] > 0.0 {
            self.momentum[j] / self.rho[j]
        } else {
            0.0
        }
    }

    /// Riemann invariants (u_plus, u_minus) of cell j.
    pub fn invariants(&self, j: usize) -> (f64, f64) {
        let u = self.velocity(j);
        (u + 0.5 * self.rho[j], u - 0.5 * self.rho[j])
    }

    /// Rebuild (rho, rho u) from invariants: rho = u+ - u-,
    /// rho u = ((u+)^2 - (u-)^2)/2.
    pub fn from_invariants(up: &[f64], um: &[f64]) -> Result<Self, DeviceError> {
        let rho = up.iter().zip(um).map(|(&p, &m)| p - m).collect();
        let momentum = up
            .iter()
            .zip(um)
            .map(|(&p, &m)| 0.5 * (p * p - m * m))
            .collect();
        Self::new(rho, momentum)
    }

    fn check_positive(&self) -> Result<(), DeviceError> {
        for (cell, &r) in self.rho.iter().enumerate() {
            if r < 0.0 {
                return Err(DeviceError::Positivity { cell, rho: r });
            }
        }
        Ok(())
    }

    /// Mach number 2u/rho per cell (the sound speed is rho/2).
    pub fn mach(&self) -> Vec<f64> {
        (0..self.len())
            .map(|j| {
                if self.rho[j] > 0.0 {
                    2.0 * self.velocity(j) / self.rho[j]
                } else {
                    0.0
                }
            })
            .collect()
    }
}

/// Doping, Debye length, damping, bias and grid for one device run.
///
/// `doping` is sampled per cell, `debye` per node (cell interfaces including
/// the contacts), `damping_tau` per interface; `f64::INFINITY` switches the
/// damping off locally.
#[derive(Debug, Clone)]
pub struct DeviceConfig {
    pub n_cells: usize,
    pub doping: Vec<f64>,
    pub debye: Vec<f64>,
    pub damping_tau: Vec<f64>,
    pub bias: f64,
    pub cfl: f64,
    /// Use the bare (1/2 tau)(u_l + u_r) damping term instead of the
    /// cell-consistent dx-scaled one.
    pub literal_damping: bool,
}

impl DeviceConfig {
    pub const X_MIN: f64 = -1.0;
    pub const X_MAX: f64 = 1.0;

    pub fn dx(&self) -> f64 {
        (Self::X_MAX - Self::X_MIN) / self.n_cells as f64
    }

    pub fn cell_centers(&self) -> Vec<f64> {
        let dx = self.dx();
        (0..self.n_cells)
            .map(|j| Self::X_MIN + (j as f64 + 0.5) * dx)
            .collect()
    }

    pub fn nodes(&self) -> Vec<f64> {
        let dx = self.dx();
        (0..=self.n_cells)
            .map(|i| Self::X_MIN + i as f64 * dx)
            .collect()
    }

    /// Channel profile: heavily doped contacts around a lightly doped
    /// channel, with linear ramps joining the plateaus.
    pub fn channel_doping(x: f64) -> f64 {
        let ramp =
            |x: f64, x0: f64, x1: f64, y0: f64, y1: f64| y0 + (y1 - y0) * (x - x0) / (x1 - x0);
        if x <= -0.4 {
            1.0
        } else if x < -0.3 {
            ramp(x, -0.4, -0.3, 1.0, 0.2)
        } else if x <= 0.3 {
            0.2
        } else if x < 0.4 {
            ramp(x, 0.3, 0.4, 0.2, 1.0)
        } else {
            1.0
        }
    }

    /// Default two-contact channel device: channel doping, uniform Debye
    /// length, no damping.
    pub fn channel_device(n_cells: usize, lambda: f64, bias: f64) -> Self {
        let mut cfg = Self {
            n_cells,
            doping: Vec::new(),
            debye: Vec::new(),
            damping_tau: Vec::new(),
            bias,
            cfl: 0.5,
            literal_damping: false,
        };
        cfg.doping = cfg
            .cell_centers()
            .iter()
            .map(|&x| Self::channel_doping(x))
            .collect();
        cfg.debye = vec![lambda; n_cells + 1];
        cfg.damping_tau = vec![f64::INFINITY; n_cells + 1];
        cfg
    }

    /// Uniform doping variant, the configuration whose rest state
    /// rho = rho_D, u = 0, phi = 0 is exactly steady.
    pub fn uniform_device(n_cells: usize, doping: f64, lambda: f64, bias: f64) -> Self {
        let mut cfg = Self::channel_device(n_cells, lambda, bias);
        cfg.doping = vec![doping; n_cells];
        cfg
    }

    pub fn with_damping(mut self, tau: f64) -> Self {
        self.damping_tau = vec![tau; self.n_cells + 1];
        self
    }

    pub fn validate(&self) -> Result<(), DeviceError> {
        if self.doping.len() != self.n_cells {
            return Err(DeviceError::InvalidConfig(
                "doping must be sampled per cell".into(),
            ));
        }
        if self.debye.len() != self.n_cells + 1 {
            return Err(DeviceError::InvalidConfig(
                "debye must be sampled per node".into(),
            ));
        }
        if self.damping_tau.len() != self.n_cells + 1 {
            return Err(DeviceError::InvalidConfig(
                "damping must be sampled per interface".into(),
            ));
        }
        if self.doping.iter().any(|&d| d <= 0.0 || d > 1.0) {
            return Err(DeviceError::InvalidConfig(
                "doping must lie in (0, 1]".into(),
            ));
        }
        if self.debye.iter().any(|&l| l <= 0.0) {
            return Err(DeviceError::InvalidConfig(
                "debye length must be positive".into(),
            ));
        }
        if self.damping_tau.iter().any(|&t| t <= 0.0) {
            return Err(DeviceError::InvalidConfig(
                "damping time must be positive".into(),
            ));
        }
        if self.bias < 0.0 {
            return Err(DeviceError::InvalidConfig(
                "bias must be nonnegative".into(),
            ));
        }
        Ok(())
    }

    /// Rest state rho = rho_D, u = 0.
    pub fn rest_state(&self) -> MomentState {
        MomentState {
            rho: self.doping.clone(),
            momentum: vec![0.0; self.n_cells],
        }
    }
}

/// Nodal potential with boundary values pinned to phi(-1) = 0, phi(1) = -V,
/// and the field E = -phi_x at the interfaces.
#[derive(Debug, Clone)]
pub struct PotentialField {
    pub phi: Vec<f64>,
    pub e_field: Vec<f64>,
}

impl PotentialField {
    /// Potential jump phi_right - phi_left between the cell centers joined
    /// by interface i (one-sided at the contacts).
    pub fn cell_jump(&self, i: usize) -> f64 {
        let n = self.phi.len() - 1;
        if i == 0 {
            self.phi[1] - self.phi[0]
        } else if i == n {
            self.phi[n] - self.phi[n - 1]
        } else {
            0.5 * (self.phi[i + 1] - self.phi[i - 1])
        }
    }
}

/// Kinetic flux of the two-branch equilibrium with support (um, up):
/// `((up^2 - um^2)/2, (up^3 - um^3)/3)`.
pub fn euler_flux(up: f64, um: f64) -> Result<(f64, f64), DeviceError> {
    if up < um {
        return Err(DeviceError::InvalidState { up, um });
    }
    Ok(flux_slot(up, um))
}

/// Algebraic flux expression evaluated slotwise. The reflection terms of the
/// interface flux feed it argument pairs in reversed order; the signs only
/// come out right if no re-sorting happens here.
#[inline]
fn flux_slot(a: f64, b: f64) -> (f64, f64) {
    (0.5 * (a * a - b * b), (a * a * a - b * b * b) / 3.0)
}

/// Upwind split `f = f_plus + f_minus` over the sign of the microscopic
/// velocity: f_plus integrates v > 0, f_minus v < 0.
pub fn split_flux(up: f64, um: f64) -> Result<((f64, f64), (f64, f64)), DeviceError> {
    if up < um {
        return Err(DeviceError::InvalidState { up, um });
    }
    let plus = flux_slot(up.max(0.0), um.max(0.0));
    let minus = flux_slot(up.min(0.0), um.min(0.0));
    Ok((plus, minus))
}

#[inline]
fn pair_add(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    (a.0 + b.0, a.1 + b.1)
}

#[inline]
fn pair_sub(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    (a.0 - b.0, a.1 - b.1)
}

/// Well-balanced interface fluxes across a potential jump `delta_phi`
/// (right minus left).
///
/// `F_plus` is carried into the right cell: particles leaving the left cell
/// arrive with velocity `sqrt(max(0, v^2 - 2 delta_phi))`, while right-cell
/// particles too slow to descend a falling potential turn around and come
/// back. `F_minus` mirrors this for left-moving particles. Every square root
/// is guarded, so the formulas are total; at `delta_phi = 0` they collapse
/// to the plain split fluxes.
pub fn wb_interface_flux(
    left: (f64, f64),
    right: (f64, f64),
    delta_phi: f64,
) -> ((f64, f64), (f64, f64)) {
    let (up_l, um_l) = left;
    let (up_r, um_r) = right;
    let dphi2 = 2.0 * delta_phi;

    let transmitted = |v: f64| (v.max(0.0).powi(2) - dphi2).max(0.0).sqrt();
    let reflected_plus = |v: f64| (-v).max(0.0).min((-dphi2).max(0.0).sqrt());
    let f_plus = pair_sub(
        flux_slot(transmitted(up_l), transmitted(um_l)),
        flux_slot(reflected_plus(up_r), reflected_plus(um_r)),
    );

    let transmitted_m = |v: f64| -(v.min(0.0).powi(2) + dphi2).max(0.0).sqrt();
    let reflected_minus = |v: f64| -v.max(0.0).min(dphi2.max(0.0).sqrt());
    let f_minus = pair_sub(
        flux_slot(transmitted_m(up_r), transmitted_m(um_r)),
        flux_slot(reflected_minus(up_l), reflected_minus(um_l)),
    );
    (f_plus, f_minus)
}

/// Augment a potential jump with the interface damping term
/// `(dx / 2 tau)(u_left + u_right)` (or the bare `1/(2 tau)` variant).
/// `tau = inf` returns the jump unchanged.
pub fn augmented_jump(
    delta_phi: f64,
    u_left: f64,
    u_right: f64,
    tau: f64,
    dx: f64,
    literal: bool,
) -> Result<f64, DeviceError> {
    if tau <= 0.0 {
        return Err(DeviceError::InvalidConfig(format!(
            "damping time must be positive, got {tau}"
        )));
    }
    if tau.is_infinite() {
        return Ok(delta_phi);
    }
    let factor = if literal { 1.0 } else { dx };
    Ok(delta_phi + factor / (2.0 * tau) * (u_left + u_right))
}

/// Three-point finite-difference solve of `lambda phi'' = rho_D - rho` with
/// `phi(-1) = 0` and `phi(1) = -V`. The right-hand side at a node averages
/// the two adjacent cells. Returns the potential and its interface field.
pub fn poisson_solve(rho: &[f64], config: &DeviceConfig) -> Result<PotentialField, DeviceError> {
    let n = config.n_cells;
    assert_eq!(rho.len(), n);
    config.validate()?;
    let dx = config.dx();
    let dx2 = dx * dx;

    let mut phi = vec![0.0; n + 1];
    phi[0] = 0.0;
    phi[n] = -config.bias;
    if n > 1 {
        // Thomas algorithm on the interior nodes (diagonal -2, off-diagonal 1).
        let m = n - 1;
        let mut diag = vec![-2.0; m];
        let mut rhs = vec![0.0; m];
        for i in 1..n {
            let s = 0.5 * ((config.doping[i - 1] - rho[i - 1]) + (config.doping[i] - rho[i]));
            rhs[i - 1] = dx2 * s / config.debye[i];
        }
        rhs[0] -= phi[0];
        rhs[m - 1] -= phi[n];
        for i in 1..m {
            let w = 1.0 / diag[i - 1];
            diag[i] -= w;
            rhs[i] -= w * rhs[i - 1];
        }
        phi[n - 1] = rhs[m - 1] / diag[m - 1];
        for i in (1..n - 1).rev() {
            phi[i] = (rhs[i - 1] - phi[i + 1]) / diag[i - 1];
        }
    }

    let mut e_field = vec![0.0; n + 1];
    for i in 0..=n {
        e_field[i] = if i == 0 {
            -(phi[1] - phi[0]) / dx
        } else if i == n {
            -(phi[n] - phi[n - 1]) / dx
        } else {
            -(phi[i + 1] - phi[i - 1]) / (2.0 * dx)
        };
    }
    Ok(PotentialField { phi, e_field })
}

/// Max residual of the discrete Poisson system, for verification.
pub fn poisson_residual(phi: &PotentialField, rho: &[f64], config: &DeviceConfig) -> f64 {
    let n = config.n_cells;
    let dx2 = config.dx() * config.dx();
    let mut res = 0.0f64;
    for i in 1..n {
        let lap = phi.phi[i - 1] - 2.0 * phi.phi[i] + phi.phi[i + 1];
        let s = 0.5 * ((config.doping[i - 1] - rho[i - 1]) + (config.doping[i] - rho[i]));
        res = res.max((lap - dx2 * s / config.debye[i]).abs());
    }
    res
}

/// One splitting step: solve the potential from the current density, run the
/// well-balanced kinetic transport across the (possibly augmented) potential
/// jumps, and project back onto the moment pair. Contacts hold the doping
/// density with extrapolated velocity.
pub fn device_step(
    state: &MomentState,
    config: &DeviceConfig,
    dt: f64,
) -> Result<MomentState, DeviceError> {
    let n = config.n_cells;
    let dx = config.dx();

    let mut max_speed = 0.0f64;
    for j in 0..n {
        let (up, um) = state.invariants(j);
        max_speed = max_speed.max(up.abs()).max(um.abs());
    }
    if dt * max_speed > config.cfl * dx * (1.0 + 1e-12) {
        return Err(DeviceError::CflViolation {
            lhs: dt * max_speed,
            rhs: config.cfl * dx,
        });
    }

    let potential = poisson_solve(&state.rho, config)?;

    // ghost states at the ohmic contacts: doping density, extrapolated velocity
    let ghost_left = {
        let u = state.velocity(0);
        let r = config.doping[0];
        (u + 0.5 * r, u - 0.5 * r)
    };
    let ghost_right = {
        let u = state.velocity(n - 1);
        let r = config.doping[n - 1];
        (u + 0.5 * r, u - 0.5 * r)
    };

    let inv = |j: isize| -> (f64, f64) {
        if j < 0 {
            ghost_left
        } else if j as usize >= n {
            ghost_right
        } else {
            state.invariants(j as usize)
        }
    };

    let mut flux_plus = vec![(0.0, 0.0); n + 1];
    let mut flux_minus = vec![(0.0, 0.0); n + 1];
    for i in 0..=n {
        let left = inv(i as isize - 1);
        let right = inv(i as isize);
        let u_l = 0.5 * (left.0 + left.1);
        let u_r = 0.5 * (right.0 + right.1);
        let dphi = augmented_jump(
            potential.cell_jump(i),
            u_l,
            u_r,
            config.damping_tau[i],
            dx,
            config.literal_damping,
        )?;
        let (fp, fm) = wb_interface_flux(left, right, dphi);
        flux_plus[i] = fp;
        flux_minus[i] = fm;
    }

    let lam = dt / dx;
    let mut rho = vec![0.0; n];
    let mut momentum = vec![0.0; n];
    for j in 0..n {
        let (up, um) = state.invariants(j);
        let (own_plus, own_minus) = split_flux(up, um)?;
        let diff = pair_sub(
            pair_add(flux_minus[j + 1], own_plus),
            pair_add(own_minus, flux_plus[j]),
        );
        rho[j] = state.rho[j] - lam * diff.0;
        momentum[j] = state.momentum[j] - lam * diff.1;
        if rho[j] < 0.0 {
            return Err(DeviceError::Positivity {
                cell: j,
                rho: rho[j],
            });
        }
    }
    Ok(MomentState { rho, momentum })
}

/// Interfaces where |u| - rho/2 changes sign between adjacent cells.
pub fn sonic_crossings(state: &MomentState) -> Vec<usize> {
    let ind = |j: usize| state.velocity(j).abs() - 0.5 * state.rho[j];
    (1..state.len())
        .filter(|&j| ind(j - 1) * ind(j) < 0.0)
        .collect()
}

/// Sonic crossings co-located with a strong density jump: the transonic
/// shock signature. The jump threshold is relative to the overall density
/// range so the diagnostic is grid- and bias-independent.
pub fn transonic_shocks(state: &MomentState, jump_fraction: f64) -> Vec<usize> {
    let range = {
        let max = state.rho.iter().cloned().fold(f64::MIN, f64::max);
        let min = state.rho.iter().cloned().fold(f64::MAX, f64::min);
        (max - min).max(1e-12)
    };
    sonic_crossings(state)
        .into_iter()
        .filter(|&j| (state.rho[j] - state.rho[j - 1]).abs() > jump_fraction * range)
        .collect()
}

#[derive(Debug, Clone)]
pub struct SteadyOptions {
    /// Relative time-increment norm that counts as stationary.
    pub residual_tol: f64,
    /// Number of consecutive quiet steps required.
    pub quiet_steps: usize,
    pub max_steps: usize,
}

impl Default for SteadyOptions {
    fn default() -> Self {
        Self {
            residual_tol: 1e-8,
            quiet_steps: 50,
            max_steps: 400_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SteadyReport {
    pub state: MomentState,
    pub potential: PotentialField,
    pub converged: bool,
    pub steps: usize,
    pub residual: f64,
}

/// March to steady state with the CFL-limited time step. Convergence means
/// the relative per-step increment stays below tolerance for a run of steps.
pub fn run_to_steady(
    config: &DeviceConfig,
    initial: MomentState,
    opts: &SteadyOptions,
) -> Result<SteadyReport, DeviceError> {
    let dx = config.dx();
    let mut state = initial;
    let mut quiet = 0usize;
    let mut residual = f64::INFINITY;
    let mut steps = 0usize;
    while steps < opts.max_steps {
        let mut max_speed = 1e-8f64;
        for j in 0..state.len() {
            let (up, um) = state.invariants(j);
            max_speed = max_speed.max(up.abs()).max(um.abs());
        }
        let dt = config.cfl * dx / max_speed;
        let next = device_step(&state, config, dt)?;
        steps += 1;

        let mut num = 0.0f64;
        let mut den = 1e-300f64;
        for j in 0..state.len() {
            num = num.max((next.rho[j] - state.rho[j]).abs());
            num = num.max((next.momentum[j] - state.momentum[j]).abs());
            den = den.max(state.rho[j].abs()).max(state.momentum[j].abs());
        }
        residual = num / (den * dt);
        state = next;
        if residual < opts.residual_tol {
            quiet += 1;
            if quiet >= opts.quiet_steps {
                let potential = poisson_solve(&state.rho, config)?;
                return Ok(SteadyReport {
                    state,
                    potential,
                    converged: true,
                    steps,
                    residual,
                });
            }
        } else {
            quiet = 0;
        }
    }
    let potential = poisson_solve(&state.rho, config)?;
    Ok(SteadyReport {
        state,
        potential,
        converged: false,
        steps: opts.max_steps,
        residual,
    })
}

/// One row of the current-voltage table.
#[derive(Debug, Clone)]
pub struct IvRow {
    pub bias: f64,
    /// Spatial median of rho u at steady state.
    pub j_stat: f64,
    /// Max spatial oscillation of rho u (max - min).
    pub oscillation: f64,
    pub converged: bool,
    pub steps: usize,
}

/// Sweep the bias and report the stationary current per value. Rows that did
/// not converge within the budget are flagged, never fabricated. Runs are
/// independent and execute in parallel.
pub fn iv_curve(
    config: &DeviceConfig,
    biases: &[f64],
    opts: &SteadyOptions,
) -> Result<Vec<IvRow>, DeviceError> {
    biases
        .par_iter()
        .map(|&bias| {
            let mut cfg = config.clone();
            cfg.bias = bias;
            let report = run_to_steady(&cfg, cfg.rest_state(), opts)?;
            let mut q = report.state.momentum.clone();
            q.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n = q.len();
            let median = if n % 2 == 1 {
                q[n / 2]
            } else {
                0.5 * (q[n / 2 - 1] + q[n / 2])
            };
            let oscillation = q[n - 1] - q[0];
            Ok(IvRow {
                bias,
                j_stat: median,
                oscillation,
                converged: report.converged,
                steps: report.steps,
            })
        })
        .collect()
}
