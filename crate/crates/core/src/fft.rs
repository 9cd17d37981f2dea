//! Thin wrapper over rustfft with a process-wide plan cache.
//!
//! Convention: the forward transform is unnormalised, the inverse carries the
//! 1/n factor. Keeping one fixed convention makes golden outputs bit-stable.

use std::sync::Mutex;

use num_complex::Complex64;
use once_cell::sync::Lazy;
use rustfft::FftPlanner;

static PLANNER: Lazy<Mutex<FftPlanner<f64>>> = Lazy::new(|| Mutex::new(FftPlanner::new()));

/// In-place unnormalised forward transform.
pub fn forward(buf: &mut [Complex64]) {
    let plan = PLANNER.lock().unwrap().plan_fft_forward(buf.len());
    plan.process(buf);
}

/// In-place unnormalised inverse transform. The caller applies the 1/n.
pub fn inverse_unscaled(buf: &mut [Complex64]) {
    let plan = PLANNER.lock().unwrap().plan_fft_inverse(buf.len());
    plan.process(buf);
}

/// Forward transform of real samples.
pub fn spectrum(samples: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    forward(&mut buf);
    buf
}

/// Inverse transform back to real samples with the 1/scale normalisation.
/// Returns the samples and the largest imaginary residue encountered.
pub fn real_samples(mut spec: Vec<Complex64>, scale: f64) -> (Vec<f64>, f64) {
    inverse_unscaled(&mut spec);
    let inv = 1.0 / scale;
    let mut residue = 0.0f64;
    let samples = spec
        .iter()
        .map(|c| {
            residue = residue.max(c.im.abs() * inv);
            c.re * inv
        })
        .collect();
    (samples, residue)
}
