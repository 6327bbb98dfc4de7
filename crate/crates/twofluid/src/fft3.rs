//! Cubic 3D complex FFT built from rustfft line transforms.
//!
//! Data is stored row-major as `[(i * n + j) * n + l]` with `l` fastest.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

pub struct Fft3 {
    pub n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Fft3 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft3 {
            n,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        }
    }

    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Unnormalized forward transform, `sum f e^{-i k x}`.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.apply(data, &self.fwd);
    }

    /// Inverse transform including the `1/n^3` factor.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.apply(data, &self.inv);
        let s = 1.0 / self.len() as f64;
        data.par_iter_mut().for_each(|z| *z *= s);
    }

    /// Unnormalized inverse transform, `sum f e^{+i k x}`.
    pub fn inverse_unnormalized(&self, data: &mut [Complex64]) {
        self.apply(data, &self.inv);
    }

    fn apply(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        assert_eq!(data.len(), n * n * n);
        // Fastest axis: contiguous lines.
        data.par_chunks_mut(n).for_each(|line| plan.process(line));
        // Middle axis: gather per i-slab.
        data.par_chunks_mut(n * n).for_each(|slab| {
            let mut buf = vec![Complex64::new(0.0, 0.0); n];
            for l in 0..n {
                for j in 0..n {
                    buf[j] = slab[j * n + l];
                }
                plan.process(&mut buf);
                for j in 0..n {
                    slab[j * n + l] = buf[j];
                }
            }
        });
        // Slowest axis: transpose through columns in parallel over j.
        let nn = n * n;
        let cols: Vec<Vec<Complex64>> = (0..nn)
            .into_par_iter()
            .map(|jl| {
                let mut buf: Vec<Complex64> = (0..n).map(|i| data[i * nn + jl]).collect();
                plan.process(&mut buf);
                buf
            })
            .collect();
        data.par_chunks_mut(nn).enumerate().for_each(|(i, slab)| {
            for (jl, v) in slab.iter_mut().enumerate() {
                *v = cols[jl][i];
            }
        });
    }
}

/// Signed integer wavenumber index for FFT position `i` on an `n` grid.
pub fn wave_index(i: usize, n: usize) -> i64 {
    if i <= n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}
