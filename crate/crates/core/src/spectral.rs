//! Periodic Fourier pseudospectral infrastructure.
//!
//! Everything downstream (conformal water waves, Serre models, oscillatory
//! diagnostics) is built on four primitives: spectral derivatives, diagonal
//! pseudo-differential operators, dealiased products via the 3/2 rule, and
//! Hermite polynomial evaluation.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use thiserror::Error;

use crate::fft;

/// Largest Hermite order accepted by [`hermite_poly`].
pub const MAX_HERMITE_ORDER: usize = 64;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("field contains non-finite samples")]
    NonFinite,
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("operator with a singular zero mode needs a mean-free field (mean = {mean:.3e})")]
    MeanNotZero { mean: f64 },
    #[error("symbol produced a non-real field (imaginary residue {residue:.3e})")]
    ComplexResidue { residue: f64 },
    #[error("Hermite order {n} exceeds the supported maximum {max}")]
    HermiteOrder { n: usize, max: usize },
    #[error("derivative order must be at least 1")]
    ZeroOrder,
}

/// Uniform periodic grid on `[0, length)`, endpoint excluded.
///
/// Wavenumbers follow standard FFT ordering `0, 1, .., n/2, -n/2+1, .., -1`
/// scaled by `2*pi/length`.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicGrid {
    pub n_points: usize,
    pub length: f64,
    pub nodes: Vec<f64>,
    pub wavenumbers: Vec<f64>,
}

impl PeriodicGrid {
    pub fn new(n_points: usize, length: f64) -> Arc<Self> {
        assert!(n_points > 0, "grid needs at least one point");
        assert!(length > 0.0, "domain length must be positive");
        let dx = length / n_points as f64;
        let nodes = (0..n_points).map(|j| j as f64 * dx).collect();
        let scale = 2.0 * PI / length;
        let wavenumbers = (0..n_points)
            .map(|j| {
                let k = if j <= n_points / 2 {
                    j as isize
                } else {
                    j as isize - n_points as isize
                };
                k as f64 * scale
            })
            .collect();
        Arc::new(Self {
            n_points,
            length,
            nodes,
            wavenumbers,
        })
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.n_points as f64
    }

    /// Index of the Nyquist mode for even grids.
    fn nyquist(&self) -> Option<usize> {
        (self.n_points % 2 == 0 && self.n_points > 1).then_some(self.n_points / 2)
    }
}

/// Real-valued samples on a [`PeriodicGrid`].
#[derive(Debug, Clone)]
pub struct RealField {
    grid: Arc<PeriodicGrid>,
    samples: Vec<f64>,
}

impl RealField {
    pub fn from_samples(grid: Arc<PeriodicGrid>, samples: Vec<f64>) -> Self {
        assert_eq!(samples.len(), grid.n_points, "one sample per node");
        Self { grid, samples }
    }

    pub fn from_fn(grid: Arc<PeriodicGrid>, f: impl Fn(f64) -> f64) -> Self {
        let samples = grid.nodes.iter().map(|&x| f(x)).collect();
        Self { grid, samples }
    }

    pub fn zeros(grid: Arc<PeriodicGrid>) -> Self {
        let samples = vec![0.0; grid.n_points];
        Self { grid, samples }
    }

    pub fn constant(grid: Arc<PeriodicGrid>, c: f64) -> Self {
        let samples = vec![c; grid.n_points];
        Self { grid, samples }
    }

    pub fn grid(&self) -> &Arc<PeriodicGrid> {
        &self.grid
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [f64] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.samples.iter().all(|x| x.is_finite())
    }

    /// Unnormalised spectrum (forward transform).
    pub fn spectrum(&self) -> Vec<Complex64> {
        fft::spectrum(&self.samples)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid.clone(),
            samples: self.samples.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert!(Arc::ptr_eq(&self.grid, &other.grid) || self.grid == other.grid);
        Self {
            grid: self.grid.clone(),
            samples: self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        self.map(|x| a * x)
    }

    pub fn shifted(&self, c: f64) -> Self {
        self.map(|x| x + c)
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a - b)
    }

    /// Pointwise quotient. Nonlinear terms of quotient type are evaluated in
    /// real space; only genuine products go through the dealiasing path.
    pub fn pointwise_div(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a / b)
    }

    pub fn mean_free(&self) -> Self {
        let m = self.mean();
        self.map(|x| x - m)
    }
}

/// Diagonal Fourier multiplier with an explicit rule for the zero mode.
///
/// `require_mean_free` marks symbols that are singular at k = 0 (the coth
/// family); applying them to a field with a nonzero mean is a contract
/// violation rather than a silent projection.
pub struct DiagonalSymbol {
    eval: Arc<dyn Fn(f64) -> Complex64 + Send + Sync>,
    zero_mode: Complex64,
    require_mean_free: bool,
}

impl DiagonalSymbol {
    pub fn new(
        eval: impl Fn(f64) -> Complex64 + Send + Sync + 'static,
        zero_mode: Complex64,
    ) -> Self {
        Self {
            eval: Arc::new(eval),
            zero_mode,
            require_mean_free: false,
        }
    }

    pub fn require_mean_free(mut self) -> Self {
        self.require_mean_free = true;
        self
    }

    /// Multiplier `i*coth(k*h0)` of the strip operator pairing a surface
    /// trace with its harmonic conjugate. Singular at k = 0: the zero mode is
    /// pinned to 0 and inputs must be mean-free.
    pub fn coth_strip(h0: f64) -> Self {
        assert!(h0 > 0.0);
        Self::new(
            move |k| Complex64::new(0.0, 1.0 / (k * h0).tanh()),
            Complex64::new(0.0, 0.0),
        )
        .require_mean_free()
    }

    /// Multiplier `i*tanh(k*h0)` mapping the tangential potential derivative
    /// to the stream-function derivative on the strip.
    pub fn tanh_strip(h0: f64) -> Self {
        assert!(h0 > 0.0);
        Self::new(
            move |k| Complex64::new(0.0, (k * h0).tanh()),
            Complex64::new(0.0, 0.0),
        )
    }

    /// Multiplier `(i k)^order`.
    pub fn derivative(order: u32) -> Self {
        Self::new(
            move |k| Complex64::new(0.0, k).powu(order),
            if order == 0 {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            },
        )
    }

    /// Multiplier at the given wavenumber, honouring the zero-mode rule.
    pub fn multiplier_for(&self, k: f64) -> Complex64 {
        if k == 0.0 {
            self.zero_mode
        } else {
            (self.eval)(k)
        }
    }
}

fn check_finite(f: &RealField) -> Result<(), SpectralError> {
    if f.is_finite() {
        Ok(())
    } else {
        Err(SpectralError::NonFinite)
    }
}

/// Fourier-collocation derivative of the given order.
///
/// The result has zero mean for every order >= 1. For even grids the Nyquist
/// mode is dropped from odd-order derivatives (its sine interpolant is not
/// representable on the nodes).
pub fn spectral_derivative(f: &RealField, order: u32) -> Result<RealField, SpectralError> {
    if order == 0 {
        return Err(SpectralError::ZeroOrder);
    }
    check_finite(f)?;
    apply_multipliers(f, &DiagonalSymbol::derivative(order))
}

/// Apply a diagonal symbol modewise: result spectrum = s(k) * input spectrum.
pub fn apply_symbol(f: &RealField, s: &DiagonalSymbol) -> Result<RealField, SpectralError> {
    check_finite(f)?;
    if s.require_mean_free {
        let mean = f.mean();
        if mean.abs() > 1e-12 * f.max_abs().max(1.0) {
            return Err(SpectralError::MeanNotZero { mean });
        }
    }
    apply_multipliers(f, s)
}

fn apply_multipliers(f: &RealField, s: &DiagonalSymbol) -> Result<RealField, SpectralError> {
    let grid = f.grid();
    let n = grid.n_points;
    let mut spec = f.spectrum();
    for (j, c) in spec.iter_mut().enumerate() {
        let mut m = s.multiplier_for(grid.wavenumbers[j]);
        // The lone Nyquist bin of an even grid must stay real; keep only the
        // symmetric part of the multiplier there.
        if Some(j) == grid.nyquist() {
            m = Complex64::new(m.re, 0.0);
        }
        *c *= m;
    }
    let (samples, residue) = fft::real_samples(spec, n as f64);
    let scale = f.max_abs().max(1.0);
    if residue > 1e-12 * scale {
        return Err(SpectralError::ComplexResidue {
            residue: residue / scale,
        });
    }
    Ok(RealField::from_samples(grid.clone(), samples))
}

/// Product of two fields, dealiased with the 3/2 rule: both spectra are
/// zero-padded to 3n/2 modes, multiplied pointwise in real space, and the
/// result is truncated back to the n-mode band.
///
/// The only aliasing the 3/2 pad admits is the Nyquist x Nyquist term landing
/// back on the Nyquist pair; it is removed explicitly, so the result is the
/// exact spectral truncation of f*g for any band-limited inputs.
pub fn dealiased_product(f: &RealField, g: &RealField) -> Result<RealField, SpectralError> {
    if f.grid() != g.grid() {
        return Err(SpectralError::GridMismatch);
    }
    check_finite(f)?;
    check_finite(g)?;
    let grid = f.grid();
    let n = grid.n_points;
    if n == 1 {
        return Ok(f.zip(g, |a, b| a * b));
    }

    let spec_f = f.spectrum();
    let spec_g = g.spectrum();
    let m = if n % 2 == 0 { 3 * n / 2 } else { (3 * n + 1) / 2 };

    let fine_f = pad_spectrum(&spec_f, n, m);
    let fine_g = pad_spectrum(&spec_g, n, m);
    let (sf, _) = fft::real_samples(fine_f, n as f64);
    let (sg, _) = fft::real_samples(fine_g, n as f64);

    let mut prod: Vec<Complex64> = sf
        .iter()
        .zip(&sg)
        .map(|(&a, &b)| Complex64::new(a * b, 0.0))
        .collect();
    fft::forward(&mut prod);

    let ratio = n as f64 / m as f64;
    let half = n / 2;
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    out[0] = prod[0] * ratio;
    for k in 1..(n + 1) / 2 {
        out[k] = prod[k] * ratio;
        out[n - k] = prod[m - k] * ratio;
    }
    if n % 2 == 0 {
        // Recombine the split Nyquist pair, then strip the lone alias of the
        // true +-n product mode (comes only from Nyquist x Nyquist input).
        let mut nyq = (prod[half] + prod[m - half]) * ratio;
        nyq -= spec_f[half] * spec_g[half] / (2.0 * n as f64);
        out[half] = Complex64::new(nyq.re, 0.0);
    }

    let (samples, _) = fft::real_samples(out, n as f64);
    Ok(RealField::from_samples(grid.clone(), samples))
}

/// Zero-pad an n-point spectrum to m points, splitting the Nyquist bin so the
/// padded signal is the exact trigonometric interpolant of the original.
fn pad_spectrum(spec: &[Complex64], n: usize, m: usize) -> Vec<Complex64> {
    let mut fine = vec![Complex64::new(0.0, 0.0); m];
    fine[0] = spec[0];
    for k in 1..(n + 1) / 2 {
        fine[k] = spec[k];
        fine[m - k] = spec[n - k];
    }
    if n % 2 == 0 && n > 1 {
        let half = spec[n / 2] * 0.5;
        fine[n / 2] = half;
        fine[m - n / 2] = half;
    }
    fine
}

/// Physicists' Hermite polynomial H_n(x), by the three-term recurrence
/// `H_{n+1}(x) = 2 x H_n(x) - 2 n H_{n-1}(x)`.
pub fn hermite_poly(n: usize, x: f64) -> Result<f64, SpectralError> {
    if n > MAX_HERMITE_ORDER {
        return Err(SpectralError::HermiteOrder {
            n,
            max: MAX_HERMITE_ORDER,
        });
    }
    Ok(hermite_unchecked(n, x))
}

pub(crate) fn hermite_unchecked(n: usize, x: f64) -> f64 {
    match n {
        0 => 1.0,
        1 => 2.0 * x,
        _ => {
            let mut hm = 1.0;
            let mut h = 2.0 * x;
            for m in 1..n {
                let next = 2.0 * x * h - 2.0 * m as f64 * hm;
                hm = h;
                h = next;
            }
            h
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize, l: f64) -> Arc<PeriodicGrid> {
        PeriodicGrid::new(n, l)
    }

    #[test]
    fn wavenumber_layout() {
        let g = grid(8, 4.0);
        let s = 2.0 * PI / 4.0;
        assert_eq!(g.wavenumbers[0], 0.0);
        assert_eq!(g.wavenumbers[1], s);
        assert_eq!(g.wavenumbers[4], 4.0 * s);
        assert_eq!(g.wavenumbers[7], -s);
        // +- pairs except zero and Nyquist
        for k in 1..4 {
            assert_eq!(g.wavenumbers[k], -g.wavenumbers[8 - k]);
        }
        let dx = g.spacing();
        for (j, &x) in g.nodes.iter().enumerate() {
            assert!((x - j as f64 * dx).abs() < 1e-15);
        }
    }

    #[test]
    fn derivative_of_single_mode_is_exact() {
        let g = grid(64, 3.0);
        let l = 3.0;
        let f = RealField::from_fn(g.clone(), |x| (2.0 * PI * x / l).sin());
        let d = spectral_derivative(&f, 1).unwrap();
        let mut err = 0.0f64;
        for (j, &x) in g.nodes.iter().enumerate() {
            let exact = (2.0 * PI / l) * (2.0 * PI * x / l).cos();
            err = err.max((d.samples()[j] - exact).abs());
        }
        assert!(err <= 1e-12, "max error {err:.3e}");
    }

    #[test]
    fn derivative_of_constant_is_zero() {
        let g = grid(32, 1.0);
        let f = RealField::constant(g, 4.25);
        let d = spectral_derivative(&f, 1).unwrap();
        assert!(d.max_abs() <= 1e-13);
    }

    #[test]
    fn derivative_two_modes_analytic() {
        // f = sin(3x) + cos(5x) on [0, 2*pi): f' = 3cos(3x) - 5sin(5x)
        let g = grid(64, 2.0 * PI);
        let f = RealField::from_fn(g.clone(), |x| (3.0 * x).sin() + (5.0 * x).cos());
        let d = spectral_derivative(&f, 1).unwrap();
        let mut err = 0.0f64;
        for (j, &x) in g.nodes.iter().enumerate() {
            let exact = 3.0 * (3.0 * x).cos() - 5.0 * (5.0 * x).sin();
            err = err.max((d.samples()[j] - exact).abs());
        }
        assert!(err <= 1e-12, "max error {err:.3e}");
    }

    #[test]
    fn derivative_rejects_non_finite() {
        let g = grid(8, 1.0);
        let mut f = RealField::zeros(g);
        f.samples_mut()[3] = f64::NAN;
        assert!(matches!(
            spectral_derivative(&f, 1),
            Err(SpectralError::NonFinite)
        ));
    }

    #[test]
    fn strip_symbols_on_single_mode() {
        // k*h0 = 1: coth sends cos -> -coth(1) sin, tanh sends cos -> -tanh(1) sin.
        let n = 64;
        let l = 2.0 * PI;
        let g = grid(n, l);
        let h0 = 1.0; // k = 1 mode
        let f = RealField::from_fn(g.clone(), |x| x.cos());
        let hh = apply_symbol(&f, &DiagonalSymbol::coth_strip(h0)).unwrap();
        let ss = apply_symbol(&f, &DiagonalSymbol::tanh_strip(h0)).unwrap();
        let coth1 = 1.0 / 1.0f64.tanh();
        let tanh1 = 1.0f64.tanh();
        let mut err_h = 0.0f64;
        let mut err_s = 0.0f64;
        for (j, &x) in g.nodes.iter().enumerate() {
            err_h = err_h.max((hh.samples()[j] + coth1 * x.sin()).abs());
            err_s = err_s.max((ss.samples()[j] + tanh1 * x.sin()).abs());
        }
        assert!(err_h <= 1e-12, "coth error {err_h:.3e}");
        assert!(err_s <= 1e-12, "tanh error {err_s:.3e}");
    }

    #[test]
    fn tanh_of_coth_is_minus_identity() {
        let g = grid(128, 7.0);
        let f = RealField::from_fn(g, |x| {
            (2.0 * PI * x / 7.0).sin() + 0.3 * (3.0 * 2.0 * PI * x / 7.0).cos()
        });
        let h0 = 0.8;
        let hh = apply_symbol(&f, &DiagonalSymbol::coth_strip(h0)).unwrap();
        let back = apply_symbol(&hh, &DiagonalSymbol::tanh_strip(h0)).unwrap();
        let diff = back.zip(&f, |a, b| a + b).max_abs();
        assert!(diff <= 1e-12, "S[H[f]] + f = {diff:.3e}");
    }

    #[test]
    fn coth_requires_mean_free() {
        let g = grid(32, 1.0);
        let f = RealField::constant(g, 1.0);
        assert!(matches!(
            apply_symbol(&f, &DiagonalSymbol::coth_strip(1.0)),
            Err(SpectralError::MeanNotZero { .. })
        ));
    }

    #[test]
    fn dealiased_identity_with_one() {
        let g = grid(32, 2.0 * PI);
        let one = RealField::constant(g.clone(), 1.0);
        // arbitrary field including a Nyquist component
        let f = RealField::from_fn(g.clone(), |x| {
            0.3 + (3.0 * x).sin() - 0.2 * (7.0 * x).cos() + 0.1 * (16.0 * x).cos()
        });
        let p = dealiased_product(&one, &f).unwrap();
        let diff = p.zip(&f, |a, b| a - b).max_abs();
        assert!(diff <= 1e-13, "identity broke by {diff:.3e}");
    }

    #[test]
    fn dealiased_trig_product() {
        // cos(2x) * cos(3x) = (cos x + cos 5x)/2
        let g = grid(64, 2.0 * PI);
        let f = RealField::from_fn(g.clone(), |x| (2.0 * x).cos());
        let h = RealField::from_fn(g.clone(), |x| (3.0 * x).cos());
        let p = dealiased_product(&f, &h).unwrap();
        let mut err = 0.0f64;
        for (j, &x) in g.nodes.iter().enumerate() {
            let exact = 0.5 * x.cos() + 0.5 * (5.0 * x).cos();
            err = err.max((p.samples()[j] - exact).abs());
        }
        assert!(err <= 1e-12, "max error {err:.3e}");
    }

    /// Oracle: product on a 4x finer grid, truncated back to the coarse band.
    fn truncated_product_oracle(f: &RealField, g: &RealField) -> Vec<f64> {
        let n = f.grid().n_points;
        let m = 4 * n;
        let fine_f = pad_spectrum(&f.spectrum(), n, m);
        let fine_g = pad_spectrum(&g.spectrum(), n, m);
        let (sf, _) = fft::real_samples(fine_f, n as f64);
        let (sg, _) = fft::real_samples(fine_g, n as f64);
        let mut prod: Vec<Complex64> = sf
            .iter()
            .zip(&sg)
            .map(|(&a, &b)| Complex64::new(a * b, 0.0))
            .collect();
        fft::forward(&mut prod);
        let ratio = n as f64 / m as f64;
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        out[0] = prod[0] * ratio;
        for k in 1..(n + 1) / 2 {
            out[k] = prod[k] * ratio;
            out[n - k] = prod[m - k] * ratio;
        }
        if n % 2 == 0 {
            let nyq = (prod[n / 2] + prod[m - n / 2]) * ratio;
            out[n / 2] = Complex64::new(nyq.re, 0.0);
        }
        fft::real_samples(out, n as f64).0
    }

    #[test]
    fn dealiased_product_truncates_out_of_band_modes() {
        // kmax chosen so 2*kmax leaves the band: the squared cosine keeps only
        // its constant part, with no aliased low mode.
        let n = 32;
        let g = grid(n, 2.0 * PI);
        let kmax = 12.0;
        let f = RealField::from_fn(g.clone(), |x| (kmax * x).cos());
        let p = dealiased_product(&f, &f).unwrap();
        let oracle = truncated_product_oracle(&f, &f);
        let mut err = 0.0f64;
        for j in 0..n {
            err = err.max((p.samples()[j] - oracle[j]).abs());
            err = err.max((p.samples()[j] - 0.5).abs());
        }
        assert!(err <= 1e-12, "aliasing residue {err:.3e}");
    }

    #[test]
    fn dealiased_product_handles_nyquist_squared() {
        // Nyquist^2 is the one case the bare 3/2 pad would alias; the explicit
        // correction must keep it equal to the finer-grid oracle.
        let n = 32;
        let g = grid(n, 2.0 * PI);
        let f = RealField::from_fn(g.clone(), |x| (16.0 * x).cos() + 0.5 * (2.0 * x).cos());
        let p = dealiased_product(&f, &f).unwrap();
        let oracle = truncated_product_oracle(&f, &f);
        let mut err = 0.0f64;
        for j in 0..n {
            err = err.max((p.samples()[j] - oracle[j]).abs());
        }
        assert!(err <= 1e-12, "nyquist aliasing residue {err:.3e}");
    }

    #[test]
    fn dealiased_product_grid_mismatch() {
        let f = RealField::zeros(grid(16, 1.0));
        let g = RealField::zeros(grid(32, 1.0));
        assert!(matches!(
            dealiased_product(&f, &g),
            Err(SpectralError::GridMismatch)
        ));
    }

    #[test]
    fn hermite_small_orders() {
        assert_eq!(hermite_poly(0, -3.7).unwrap(), 1.0);
        assert_eq!(hermite_poly(1, 2.5).unwrap(), 5.0);
        // recurrence oracle: H2(x) = 4x^2 - 2
        assert_eq!(hermite_poly(2, 1.0).unwrap(), 2.0);
    }

    #[test]
    fn hermite_order_cap() {
        assert!(hermite_poly(64, 0.3).is_ok());
        assert!(matches!(
            hermite_poly(65, 0.3),
            Err(SpectralError::HermiteOrder { .. })
        ));
    }

    #[test]
    fn parseval_under_chosen_normalisation() {
        // forward unnormalised, inverse 1/n: sum |x|^2 dx = (L/n^2) sum |X|^2
        let g = grid(64, 5.0);
        let f = RealField::from_fn(g.clone(), |x| {
            (2.0 * PI * x / 5.0).sin() + 0.25 * (8.0 * PI * x / 5.0).cos() - 0.1
        });
        let spec = f.spectrum();
        let lhs: f64 = f.samples().iter().map(|x| x * x).sum::<f64>() * g.spacing();
        let rhs: f64 = spec.iter().map(|c| c.norm_sqr()).sum::<f64>() * g.length
            / (g.n_points as f64 * g.n_points as f64);
        assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
    }
}
