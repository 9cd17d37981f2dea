//! Numerical laboratory for hyperbolic balance laws with resonant sources,
//! stationary kinetic spectra, and dispersive free-surface water waves.
//!
//! The crate is organised around six solver families:
//!
//! - [`spectral`]: periodic Fourier pseudospectral infrastructure (derivatives,
//!   diagonal pseudo-differential operators, 3/2-rule dealiased products,
//!   Hermite polynomials) shared by everything below.
//! - [`scalar_wb`]: well-balanced Godunov solver for convex scalar balance
//!   laws rewritten as a 2x2 system with a steady "fake" variable, plus the
//!   resonant traffic stress scenario.
//! - [`device`]: well-balanced kinetic flux-vector splitting for the
//!   isentropic Euler-Poisson system with adiabatic exponent 3, with
//!   reflection at potential jumps, damping and current-voltage extraction.
//! - [`vfp`]: spectral machinery for the stationary Vlasov-Fokker-Planck
//!   operator at constant drift (eigenvalues, Hermite-type eigenfunctions,
//!   half-range scattering matrices) and a coupled Burgers/VFP splitting
//!   solver.
//! - [`waterwave`]: full Euler free-surface solver on a periodic conformal
//!   strip and steady solitary waves through the Babenko formulation solved by
//!   Petviashvili iteration.
//! - [`serre`]: classical and extended Serre-Green-Naghdi models, their
//!   linear dispersion analysis and solitary-wave solvers.

mod fft;
pub mod ode;

pub mod device;
pub mod scalar_wb;
pub mod serre;
pub mod spectral;
pub mod vfp;
pub mod waterwave;

pub use spectral::{
    apply_symbol, dealiased_product, hermite_poly, spectral_derivative, DiagonalSymbol,
    PeriodicGrid, RealField,
};
pub use waterwave::{ConformalSurfaceState, SolitaryWave, WaveModel};
