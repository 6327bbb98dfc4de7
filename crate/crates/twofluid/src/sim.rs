//! Linear radial evolution and the nonlinear pseudo-spectral simulator.
//!
//! The linear path applies the exact semigroup per radial wavenumber. The
//! nonlinear path evolves `(n+, m+, n-, m-)` on a periodic box with a Lawson
//! (integrating factor) RK4 scheme: the linear part, including the Hodge
//! split into compressible and transverse momentum, is propagated exactly.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use nalgebra::Matrix4;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::fft3::{wave_index, Fft3};
use crate::greens::log_space;
use crate::model::{solve_fraction_map, EquilibriumState, FractionState, ModelError, ModelParams};
use crate::spectral::semigroup;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("admissibility violated: {0}")]
    Admissibility(String),
    #[error("non-finite state at t = {0}")]
    Instability(f64),
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

const ZERO: C64 = C64::new(0.0, 0.0);

/// Compressible amplitudes `(n+, phi+, n-, phi-)` and transverse momentum
/// amplitudes per radial wavenumber, `phi = i xi . m / |xi|`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRadialState {
    pub k: Vec<f64>,
    pub u: Vec<[C64; 4]>,
    pub inc: Vec<[C64; 2]>,
    pub t: f64,
}

impl LinearRadialState {
    pub fn zeros(k: Vec<f64>) -> Self {
        let n = k.len();
        LinearRadialState {
            k,
            u: vec![[ZERO; 4]; n],
            inc: vec![[ZERO; 2]; n],
            t: 0.0,
        }
    }
}

/// Log-spaced radial grid used by the decay experiments.
pub fn default_radial_grid() -> Vec<f64> {
    log_space(1e-4, 40.0, 1600)
}

fn apply4(e: &Matrix4<f64>, v: &[C64; 4]) -> [C64; 4] {
    let mut out = [ZERO; 4];
    for (i, o) in out.iter_mut().enumerate() {
        for (j, vj) in v.iter().enumerate() {
            *o += vj * e[(i, j)];
        }
    }
    out
}

/// Exact evolution over time `t` from `init`.
pub fn linear_evolve(init: &LinearRadialState, t: f64, eq: &EquilibriumState) -> LinearRadialState {
    let (u, inc): (Vec<[C64; 4]>, Vec<[C64; 2]>) = init
        .k
        .par_iter()
        .zip(init.u.par_iter().zip(&init.inc))
        .map(|(&k, (u, inc))| {
            let e = semigroup(k, t, eq);
            let hp = (-eq.nu1_plus * k * k * t).exp();
            let hm = (-eq.nu1_minus * k * k * t).exp();
            (apply4(&e, u), [inc[0] * hp, inc[1] * hm])
        })
        .unzip();
    LinearRadialState {
        k: init.k.clone(),
        u,
        inc,
        t: init.t + t,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct L2Norms {
    pub n_plus: f64,
    pub n_minus: f64,
    pub m_plus: f64,
    pub m_minus: f64,
    /// `rho_bar- n+ + rho_bar+ n-`.
    pub combo: f64,
}

/// `sqrt(4 pi int k^2 |f(k)|^2 dk)` by the trapezoid rule in `ln k`.
pub fn radial_l2<F: Fn(usize) -> f64>(k: &[f64], abs2: F) -> f64 {
    let g: Vec<f64> = k.iter().enumerate().map(|(i, &k)| k * k * k * abs2(i)).collect();
    let mut s = 0.0;
    for i in 1..k.len() {
        s += 0.5 * (g[i] + g[i - 1]) * (k[i] / k[i - 1]).ln();
    }
    (4.0 * PI * s).sqrt()
}

pub fn l2_norms(state: &LinearRadialState, eq: &EquilibriumState) -> L2Norms {
    let k = &state.k;
    let u = &state.u;
    let inc = &state.inc;
    L2Norms {
        n_plus: radial_l2(k, |i| u[i][0].norm_sqr()),
        n_minus: radial_l2(k, |i| u[i][2].norm_sqr()),
        m_plus: radial_l2(k, |i| u[i][1].norm_sqr() + inc[i][0].norm_sqr()),
        m_minus: radial_l2(k, |i| u[i][3].norm_sqr() + inc[i][1].norm_sqr()),
        combo: radial_l2(k, |i| {
            (u[i][0] * eq.rho_bar_minus + u[i][2] * eq.rho_bar_plus).norm_sqr()
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    pub slope: f64,
    /// Standard error of the slope.
    pub stderr: f64,
}

/// Least-squares slope of `ln norm` against `ln(1+t)`.
pub fn fit_decay_slope(times: &[f64], norms: &[f64]) -> Result<DecayFit, SimError> {
    if times.len() != norms.len() || times.len() < 8 {
        return Err(SimError::DegenerateFit("need at least 8 samples".into()));
    }
    let lo = times.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = times.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(lo > 0.0) || hi < 100.0 * lo * (1.0 - 1e-12) {
        return Err(SimError::DegenerateFit("samples must span two decades".into()));
    }
    if norms.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(SimError::DegenerateFit("norms must be positive".into()));
    }
    let x: Vec<f64> = times.iter().map(|t| (1.0 + t).ln()).collect();
    let y: Vec<f64> = norms.iter().map(|v| v.ln()).collect();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let resid: f64 = x
        .iter()
        .zip(&y)
        .map(|(a, b)| (b - my - slope * (a - mx)).powi(2))
        .sum();
    let stderr = (resid / (n - 2.0) / sxx).sqrt();
    Ok(DecayFit { slope, stderr })
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayTable {
    pub times: Vec<f64>,
    pub norms: Vec<L2Norms>,
    pub n_plus: DecayFit,
    pub n_minus: DecayFit,
    pub m_plus: DecayFit,
    pub m_minus: DecayFit,
    pub combo: DecayFit,
}

/// Width of the initial compressible momentum profile in the decay runs.
pub const DECAY_DATA_WIDTH: f64 = 0.5;

/// Linear decay experiment: `n0 = 0`, `phi+(k) = exp(-k^2 s^2 / 2)`, so the
/// momentum transform is nonzero at the origin.
pub fn decay_experiment(eq: &EquilibriumState, times: &[f64]) -> Result<DecayTable, SimError> {
    let mut init = LinearRadialState::zeros(default_radial_grid());
    let s = DECAY_DATA_WIDTH;
    for (u, &k) in init.u.iter_mut().zip(&init.k) {
        u[1] = C64::new((-0.5 * k * k * s * s).exp(), 0.0);
    }
    let norms: Vec<L2Norms> = times
        .iter()
        .map(|&t| l2_norms(&linear_evolve(&init, t, eq), eq))
        .collect();
    let pick = |f: fn(&L2Norms) -> f64| -> Result<DecayFit, SimError> {
        let v: Vec<f64> = norms.iter().map(f).collect();
        fit_decay_slope(times, &v)
    };
    Ok(DecayTable {
        times: times.to_vec(),
        n_plus: pick(|n| n.n_plus)?,
        n_minus: pick(|n| n.n_minus)?,
        m_plus: pick(|n| n.m_plus)?,
        m_minus: pick(|n| n.m_minus)?,
        combo: pick(|n| n.combo)?,
        norms,
    })
}

/// Pressure remainder `Q1 = alpha+ grad P - beta1 grad n+ - beta2 grad n-`
/// written as a sum of products of small quantities.
pub fn q1_factored(
    fs: &FractionState,
    eq: &EquilibriumState,
    n_plus: f64,
    grad_np: [f64; 3],
    grad_nm: [f64; 3],
) -> [f64; 3] {
    let a = fs.rho_minus - eq.rho_bar_minus;
    let b = fs.rho_plus - eq.rho_bar_plus;
    let (c, cb) = (fs.c2, eq.c2);
    let rp = fs.rho_plus;
    let inv = 1.0 / rp - 1.0 / eq.rho_bar_plus;
    let mut q = [0.0; 3];
    for d in 0..3 {
        let x = a * grad_np[d] + b * grad_nm[d];
        let w = eq.rho_bar_minus * grad_np[d] + eq.rho_bar_plus * grad_nm[d];
        q[d] = c / rp * n_plus * x
            + c / rp * n_plus * w
            + (c - cb) / rp * x
            + (c - cb) / rp * w
            + cb * inv * w
            + cb * inv * x
            + cb / eq.rho_bar_plus * x;
    }
    q
}

/// The same structure for `Q2 = alpha- grad P - beta3 grad n+ - beta4 grad n-`.
pub fn q2_factored(
    fs: &FractionState,
    eq: &EquilibriumState,
    n_minus: f64,
    grad_np: [f64; 3],
    grad_nm: [f64; 3],
) -> [f64; 3] {
    let a = fs.rho_minus - eq.rho_bar_minus;
    let b = fs.rho_plus - eq.rho_bar_plus;
    let (c, cb) = (fs.c2, eq.c2);
    let rm = fs.rho_minus;
    let inv = 1.0 / rm - 1.0 / eq.rho_bar_minus;
    let mut q = [0.0; 3];
    for d in 0..3 {
        let x = a * grad_np[d] + b * grad_nm[d];
        let w = eq.rho_bar_minus * grad_np[d] + eq.rho_bar_plus * grad_nm[d];
        q[d] = c / rm * n_minus * x
            + c / rm * n_minus * w
            + (c - cb) / rm * x
            + (c - cb) / rm * w
            + cb * inv * w
            + cb * inv * x
            + cb / eq.rho_bar_minus * x;
    }
    q
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimConfig {
    /// Grid points per side.
    pub n: usize,
    /// Box half-width; the box is `[-L, L)^3`.
    pub half_width: f64,
    pub eps: f64,
    /// Width of the Gaussian initial profile.
    pub width: f64,
    pub t_final: f64,
    /// `None` uses half a retained wavelength per sound crossing.
    pub dt: Option<f64>,
    pub nonlinear: bool,
    /// Extra times the run must land on exactly.
    pub checkpoints: Vec<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n: 48,
            half_width: 64.0,
            eps: 1e-3,
            width: 6.0,
            t_final: 16.0,
            dt: None,
            nonlinear: true,
            checkpoints: vec![8.0],
        }
    }
}

/// Lower bound `n > -1 + delta` required by the closure.
pub const POSITIVITY_MARGIN: f64 = 0.1;

/// Field layout per Fourier mode: `n+, m+x, m+y, m+z, n-, m-x, m-y, m-z`.
pub const FIELD_NAMES: [&str; 8] = ["n+", "m+x", "m+y", "m+z", "n-", "m-x", "m-y", "m-z"];

pub struct SimState {
    pub n: usize,
    pub half_width: f64,
    pub t: f64,
    /// Unnormalized forward transforms of the eight fields.
    pub hat: Vec<[C64; 8]>,
}

impl SimState {
    pub fn cell_volume(&self) -> f64 {
        (2.0 * self.half_width / self.n as f64).powi(3)
    }

    /// Physical fields, one vector per component.
    pub fn physical(&self, fft: &Fft3) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(8);
        for pair in 0..4 {
            let (a, b) = to_real_pair(fft, &self.hat, 2 * pair, 2 * pair + 1);
            out.push(a);
            out.push(b);
        }
        out
    }
}

fn to_real_pair(fft: &Fft3, hat: &[[C64; 8]], a: usize, b: usize) -> (Vec<f64>, Vec<f64>) {
    let i = C64::new(0.0, 1.0);
    let mut buf: Vec<C64> = hat.par_iter().map(|h| h[a] + i * h[b]).collect();
    fft.inverse(&mut buf);
    buf.into_par_iter().map(|z| (z.re, z.im)).unzip()
}

/// Geometry and cached propagators of a periodic grid.
pub struct Grid {
    pub n: usize,
    pub half_width: f64,
    fft: Fft3,
    /// Wavevector per mode.
    kvec: Vec<[f64; 3]>,
    /// Integer `|k|^2 (L/pi)^2` per mode.
    q: Vec<usize>,
    /// Index of the mode `-k`.
    neg: Vec<usize>,
    /// 2/3-rule mask.
    keep: Vec<bool>,
    eq: EquilibriumState,
    params: ModelParams,
}

struct Propagator {
    comp: Vec<Matrix4<f64>>,
    heat: Vec<[f64; 2]>,
}

impl Grid {
    pub fn new(n: usize, half_width: f64, params: &ModelParams) -> Result<Self, SimError> {
        if n < 8 || n % 2 != 0 {
            return Err(SimError::Config(format!("grid size must be even and >= 8, got {n}")));
        }
        if !(half_width > 0.0) {
            return Err(SimError::Config("box half-width must be positive".into()));
        }
        let eq = crate::model::solve_equilibrium(params)?;
        let dk = PI / half_width;
        let total = n * n * n;
        let mut kvec = Vec::with_capacity(total);
        let mut q = Vec::with_capacity(total);
        let mut neg = Vec::with_capacity(total);
        let mut keep = Vec::with_capacity(total);
        let cut = n as i64 / 3;
        for i in 0..n {
            for j in 0..n {
                for l in 0..n {
                    let w = [wave_index(i, n), wave_index(j, n), wave_index(l, n)];
                    let nyq = w.iter().any(|&x| x == n as i64 / 2);
                    kvec.push([dk * w[0] as f64, dk * w[1] as f64, dk * w[2] as f64]);
                    q.push((w[0] * w[0] + w[1] * w[1] + w[2] * w[2]) as usize);
                    neg.push((((n - i) % n) * n + (n - j) % n) * n + (n - l) % n);
                    keep.push(!nyq && w.iter().all(|x| x.abs() <= cut));
                }
            }
        }
        Ok(Grid {
            n,
            half_width,
            fft: Fft3::new(n),
            kvec,
            q,
            neg,
            keep,
            eq,
            params: *params,
        })
    }

    pub fn equilibrium(&self) -> &EquilibriumState {
        &self.eq
    }

    pub fn fft(&self) -> &Fft3 {
        &self.fft
    }

    fn propagator(&self, h: f64) -> Propagator {
        let qmax = self.q.iter().copied().max().unwrap_or(0);
        let dk = PI / self.half_width;
        let (comp, heat): (Vec<_>, Vec<_>) = (0..=qmax)
            .into_par_iter()
            .map(|q| {
                let k2 = q as f64 * dk * dk;
                let k = k2.sqrt();
                (
                    semigroup(k, h, &self.eq),
                    [(-self.eq.nu1_plus * k2 * h).exp(), (-self.eq.nu1_minus * k2 * h).exp()],
                )
            })
            .unzip();
        Propagator { comp, heat }
    }

    /// Applies the exact linear propagator in place.
    fn apply(&self, prop: &Propagator, hat: &mut [[C64; 8]]) {
        let i = C64::new(0.0, 1.0);
        hat.par_iter_mut().enumerate().for_each(|(idx, h)| {
            let q = self.q[idx];
            if q == 0 {
                return;
            }
            let kv = self.kvec[idx];
            let k = (kv[0] * kv[0] + kv[1] * kv[1] + kv[2] * kv[2]).sqrt();
            let kh = [kv[0] / k, kv[1] / k, kv[2] / k];
            let e = &prop.comp[q];
            let mut v = [ZERO; 4];
            let mut trans = [[ZERO; 3]; 2];
            for (ph, base) in [0usize, 4].into_iter().enumerate() {
                let dot = kh[0] * h[base + 1] + kh[1] * h[base + 2] + kh[2] * h[base + 3];
                v[2 * ph] = h[base];
                v[2 * ph + 1] = i * dot;
                for d in 0..3 {
                    trans[ph][d] = h[base + 1 + d] - dot * kh[d];
                }
            }
            let w = apply4(e, &v);
            for (ph, base) in [0usize, 4].into_iter().enumerate() {
                h[base] = w[2 * ph];
                let phi = w[2 * ph + 1];
                for d in 0..3 {
                    h[base + 1 + d] = -i * kh[d] * phi + trans[ph][d] * prop.heat[q][ph];
                }
            }
        });
    }

    fn to_spec_pair(&self, a: &[f64], b: &[f64]) -> (Vec<C64>, Vec<C64>) {
        let mut buf: Vec<C64> = a.par_iter().zip(b).map(|(x, y)| C64::new(*x, *y)).collect();
        self.fft.forward(&mut buf);
        let neg = &self.neg;
        (0..buf.len())
            .into_par_iter()
            .map(|k| {
                let f = buf[k];
                let g = buf[neg[k]].conj();
                ((f + g) * 0.5, (f - g) * C64::new(0.0, -0.5))
            })
            .unzip()
    }

    fn to_real(&self, a: &[C64], b: &[C64]) -> (Vec<f64>, Vec<f64>) {
        let i = C64::new(0.0, 1.0);
        let mut buf: Vec<C64> = a.par_iter().zip(b).map(|(x, y)| x + i * y).collect();
        self.fft.inverse(&mut buf);
        buf.into_par_iter().map(|z| (z.re, z.im)).unzip()
    }

    /// Inverse transforms of many spectral fields, two per FFT.
    fn many_to_real(&self, specs: &[Vec<C64>]) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(specs.len());
        let zero = vec![ZERO; self.fft.len()];
        for pair in specs.chunks(2) {
            let b = pair.get(1).unwrap_or(&zero);
            let (x, y) = self.to_real(&pair[0], b);
            out.push(x);
            if pair.len() == 2 {
                out.push(y);
            }
        }
        out
    }

    fn many_to_spec(&self, reals: &[Vec<f64>]) -> Vec<Vec<C64>> {
        let mut out = Vec::with_capacity(reals.len());
        let zero = vec![0.0; self.fft.len()];
        for pair in reals.chunks(2) {
            let b = pair.get(1).unwrap_or(&zero);
            let (x, y) = self.to_spec_pair(&pair[0], b);
            out.push(x);
            if pair.len() == 2 {
                out.push(y);
            }
        }
        out
    }

    fn deriv(&self, f: &[C64], d: usize) -> Vec<C64> {
        f.par_iter()
            .enumerate()
            .map(|(idx, v)| {
                if self.keep_deriv(idx) {
                    v * C64::new(0.0, self.kvec[idx][d])
                } else {
                    ZERO
                }
            })
            .collect()
    }

    fn keep_deriv(&self, idx: usize) -> bool {
        let n = self.n as i64;
        let dk = PI / self.half_width;
        self.kvec[idx]
            .iter()
            .all(|k| ((k / dk).round() as i64).abs() != n / 2)
    }

    fn component(hat: &[[C64; 8]], c: usize) -> Vec<C64> {
        hat.par_iter().map(|h| h[c]).collect()
    }

    /// Nonlinear increments in spectral form; the continuity rows vanish.
    pub fn nonlinear_rhs(&self, hat: &[[C64; 8]]) -> Result<Vec<[C64; 8]>, SimError> {
        let eq = &self.eq;
        let len = hat.len();
        let comps: Vec<Vec<C64>> = (0..8).map(|c| Self::component(hat, c)).collect();
        let real = self.many_to_real(&comps);
        let (np, nm) = (&real[0], &real[4]);
        let lowest = np.iter().chain(nm).copied().fold(f64::INFINITY, f64::min);
        if !lowest.is_finite() {
            return Err(SimError::Instability(f64::NAN));
        }
        if lowest <= -1.0 + POSITIVITY_MARGIN {
            return Err(SimError::Admissibility(format!("min n = {lowest}")));
        }
        let mp = [&real[1], &real[2], &real[3]];
        let mm = [&real[5], &real[6], &real[7]];

        // Gradients of n and of Delta n, then the velocity gradients.
        let mut spec_list: Vec<Vec<C64>> = Vec::new();
        for c in [0usize, 4] {
            for d in 0..3 {
                spec_list.push(self.deriv(&comps[c], d));
            }
        }
        for c in [0usize, 4] {
            let lap: Vec<C64> = comps[c]
                .par_iter()
                .enumerate()
                .map(|(idx, v)| {
                    let k = self.kvec[idx];
                    -v * (k[0] * k[0] + k[1] * k[1] + k[2] * k[2])
                })
                .collect();
            for d in 0..3 {
                spec_list.push(self.deriv(&lap, d));
            }
        }
        for c in [1usize, 2, 3, 5, 6, 7] {
            for d in 0..3 {
                spec_list.push(self.deriv(&comps[c], d));
            }
        }
        // Velocities u = m / R.
        let mut vel: Vec<Vec<f64>> = Vec::with_capacity(6);
        for (m, nn) in [(mp, np), (mm, nm)] {
            for comp in m {
                vel.push(comp.par_iter().zip(nn.par_iter()).map(|(a, b)| a / (1.0 + b)).collect());
            }
        }
        let vel_hat = self.many_to_spec(&vel);
        for v in &vel_hat {
            for d in 0..3 {
                spec_list.push(self.deriv(v, d));
            }
        }
        let g = self.many_to_real(&spec_list);
        // g layout: [0..3) grad n+, [3..6) grad n-, [6..9) grad lap n+,
        // [9..12) grad lap n-, [12..21) grad m+, [21..30) grad m-,
        // [30..39) grad u+, [39..48) grad u-.
        let p = &self.params;
        let pointwise: Vec<([f64; 6], [f64; 6], [f64; 3], [f64; 3], f64)> = (0..len)
            .into_par_iter()
            .map(|x| {
                let rp = 1.0 + np[x];
                let rm = 1.0 + nm[x];
                let fs = solve_fraction_map(rp, rm, p, Some(eq.rho_bar_plus))?;
                let gp = [g[0][x], g[1][x], g[2][x]];
                let gm = [g[3][x], g[4][x], g[5][x]];
                let q1 = q1_factored(&fs, eq, np[x], gp, gm);
                let pressure = p.pressure_plus(fs.rho_plus);
                let alphas = [fs.alpha_plus, 1.0 - fs.alpha_plus];
                let alpha_bar = [eq.alpha_bar_plus, eq.alpha_bar_minus];
                let visc = [(p.mu_plus, p.lambda_plus), (p.mu_minus, p.lambda_minus)];
                let mut flux = [[0.0; 6]; 2];
                for ph in 0..2 {
                    let (mu, la) = visc[ph];
                    let (r, m) = if ph == 0 { (rp, mp) } else { (rm, mm) };
                    let gm_base = 12 + 9 * ph;
                    let gu_base = 30 + 9 * ph;
                    let mut dmat = [[0.0; 3]; 3];
                    for (a, row) in dmat.iter_mut().enumerate() {
                        for (b, v) in row.iter_mut().enumerate() {
                            // d_b of component a
                            *v = alphas[ph] * g[gu_base + 3 * a + b][x]
                                - alpha_bar[ph] * g[gm_base + 3 * a + b][x];
                        }
                    }
                    let tr = dmat[0][0] + dmat[1][1] + dmat[2][2];
                    let mv = [m[0][x], m[1][x], m[2][x]];
                    for (s, (a, b)) in SYM.iter().enumerate() {
                        let mut v = mu * (dmat[*a][*b] + dmat[*b][*a]) - mv[*a] * mv[*b] / r;
                        if a == b {
                            v += la * tr;
                        }
                        flux[ph][s] = v;
                    }
                }
                let capp = [
                    p.sigma_plus * np[x] * g[6][x],
                    p.sigma_plus * np[x] * g[7][x],
                    p.sigma_plus * np[x] * g[8][x],
                ];
                let capm = [
                    p.sigma_minus * nm[x] * g[9][x],
                    p.sigma_minus * nm[x] * g[10][x],
                    p.sigma_minus * nm[x] * g[11][x],
                ];
                // -Q2 = -(Q1 + Q2) + Q1, with the sum taken spectrally below.
                let vecp = [capp[0] - q1[0], capp[1] - q1[1], capp[2] - q1[2]];
                let vecm = [capm[0] + q1[0], capm[1] + q1[1], capm[2] + q1[2]];
                Ok((flux[0], flux[1], vecp, vecm, pressure))
            })
            .collect::<Result<_, ModelError>>()?;

        let mut reals: Vec<Vec<f64>> = Vec::with_capacity(19);
        for s in 0..6 {
            reals.push(pointwise.par_iter().map(|v| v.0[s]).collect());
        }
        for s in 0..6 {
            reals.push(pointwise.par_iter().map(|v| v.1[s]).collect());
        }
        for d in 0..3 {
            reals.push(pointwise.par_iter().map(|v| v.2[d]).collect());
        }
        for d in 0..3 {
            reals.push(pointwise.par_iter().map(|v| v.3[d]).collect());
        }
        reals.push(pointwise.par_iter().map(|v| v.4).collect());
        let s = self.many_to_spec(&reals);
        // s layout: [0..6) flux+, [6..12) flux-, [12..15) cap+ - Q1,
        // [15..18) cap- + Q1, [18] P.
        let lin = [eq.beta1 + eq.beta3, eq.beta2 + eq.beta4];
        Ok((0..len)
            .into_par_iter()
            .map(|idx| {
                let mut o = [ZERO; 8];
                if !self.keep[idx] {
                    return o;
                }
                let k = self.kvec[idx];
                for d in 0..3 {
                    let mut divp = ZERO;
                    let mut divm = ZERO;
                    for b in 0..3 {
                        let ikb = C64::new(0.0, k[b]);
                        divp += ikb * s[sym_index(d, b)][idx];
                        divm += ikb * s[6 + sym_index(d, b)][idx];
                    }
                    // Q1 + Q2 = grad P - (beta1 + beta3) grad n+ - (beta2 + beta4) grad n-.
                    let total_q = C64::new(0.0, k[d])
                        * (s[18][idx] - comps[0][idx] * lin[0] - comps[4][idx] * lin[1]);
                    o[1 + d] = divp + s[12 + d][idx];
                    o[5 + d] = divm + s[15 + d][idx] - total_q;
                }
                o
            })
            .collect())
    }
}

const SYM: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];

fn sym_index(a: usize, b: usize) -> usize {
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    SYM.iter().position(|&p| p == (a, b)).expect("symmetric index")
}

/// Lawson RK4 with exact linear propagation over each step.
pub struct Stepper<'a> {
    grid: &'a Grid,
    pub dt: f64,
    full: Propagator,
    half: Propagator,
    nonlinear: bool,
}

fn axpy(y: &mut [[C64; 8]], a: f64, x: &[[C64; 8]]) {
    y.par_iter_mut().zip(x).for_each(|(yi, xi)| {
        for c in 0..8 {
            yi[c] += xi[c] * a;
        }
    });
}

impl<'a> Stepper<'a> {
    pub fn new(grid: &'a Grid, dt: f64, nonlinear: bool) -> Self {
        Stepper {
            grid,
            dt,
            full: grid.propagator(dt),
            half: grid.propagator(0.5 * dt),
            nonlinear,
        }
    }

    pub fn step(&self, state: &mut SimState) -> Result<(), SimError> {
        let g = self.grid;
        let h = self.dt;
        let u = &state.hat;
        let mut eu = u.clone();
        g.apply(&self.full, &mut eu);
        if !self.nonlinear {
            state.hat = eu;
            state.t += h;
            return Ok(());
        }
        let k1 = g.nonlinear_rhs(u)?;
        let mut uh = u.clone();
        g.apply(&self.half, &mut uh);
        let mut k1h = k1.clone();
        g.apply(&self.half, &mut k1h);
        let mut a = uh.clone();
        axpy(&mut a, 0.5 * h, &k1h);
        let k2 = g.nonlinear_rhs(&a)?;
        let mut b = uh;
        axpy(&mut b, 0.5 * h, &k2);
        let k3 = g.nonlinear_rhs(&b)?;
        let mut k3h = k3.clone();
        g.apply(&self.half, &mut k3h);
        let mut c = eu.clone();
        axpy(&mut c, h, &k3h);
        let k4 = g.nonlinear_rhs(&c)?;
        let mut k1f = k1;
        g.apply(&self.full, &mut k1f);
        let mut k23 = k2;
        axpy(&mut k23, 1.0, &k3);
        g.apply(&self.half, &mut k23);
        let mut next = eu;
        axpy(&mut next, h / 6.0, &k1f);
        axpy(&mut next, h / 3.0, &k23);
        axpy(&mut next, h / 6.0, &k4);
        if next.iter().any(|m| m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite())) {
            return Err(SimError::Instability(state.t + h));
        }
        state.hat = next;
        state.t += h;
        Ok(())
    }
}

impl Grid {
    /// Coordinate of grid index `i` along one axis.
    pub fn coord(&self, i: usize) -> f64 {
        -self.half_width + 2.0 * self.half_width * i as f64 / self.n as f64
    }

    /// Gaussian data: `n+ = eps g`, `n- = eps g / 2`, `m+ = m- = eps s grad g`
    /// with `g = exp(-|x|^2 / (2 s^2))`, band-limited by the dealiasing mask.
    pub fn initial_state(&self, eps: f64, width: f64) -> SimState {
        let n = self.n;
        let len = n * n * n;
        let s2 = width * width;
        let mut fields = vec![vec![0.0; len]; 8];
        for i in 0..n {
            for j in 0..n {
                for l in 0..n {
                    let x = [self.coord(i), self.coord(j), self.coord(l)];
                    let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
                    let g = (-0.5 * r2 / s2).exp();
                    let idx = (i * n + j) * n + l;
                    fields[0][idx] = eps * g;
                    fields[4][idx] = 0.5 * eps * g;
                    for d in 0..3 {
                        let m = -eps * x[d] / width * g;
                        fields[1 + d][idx] = m;
                        fields[5 + d][idx] = m;
                    }
                }
            }
        }
        let spec = self.many_to_spec(&fields);
        let hat = (0..len)
            .map(|idx| {
                let mut h = [ZERO; 8];
                if self.keep[idx] {
                    for c in 0..8 {
                        h[c] = spec[c][idx];
                    }
                }
                h
            })
            .collect();
        SimState {
            n,
            half_width: self.half_width,
            t: 0.0,
            hat,
        }
    }

    pub fn diagnostics(&self, state: &SimState) -> Diagnostics {
        let dv = state.cell_volume();
        let total = self.fft.len() as f64;
        let h0 = state.hat[0];
        let momentum = [
            (h0[1] + h0[5]).re * dv,
            (h0[2] + h0[6]).re * dv,
            (h0[3] + h0[7]).re * dv,
        ];
        let l2 = |f: &(dyn Fn(&[C64; 8]) -> f64 + Sync)| -> f64 {
            (state.hat.par_iter().map(f).sum::<f64>() * dv / total).sqrt()
        };
        let eq = &self.eq;
        let sum_m: Vec<Vec<C64>> = (1..4)
            .map(|d| state.hat.par_iter().map(|h| h[d] + h[d + 4]).collect())
            .collect();
        let m = self.many_to_real(&sum_m);
        let mag: Vec<f64> = (0..m[0].len())
            .into_par_iter()
            .map(|x| (m[0][x] * m[0][x] + m[1][x] * m[1][x] + m[2][x] * m[2][x]).sqrt())
            .collect();
        let (ring_r, _) = self.shell_argmax(&mag);
        Diagnostics {
            t: state.t,
            mass_plus: h0[0].re * dv,
            mass_minus: h0[4].re * dv,
            momentum,
            abs_momentum: mag.iter().sum::<f64>() * dv,
            l2_n_plus: l2(&|h| h[0].norm_sqr()),
            l2_n_minus: l2(&|h| h[4].norm_sqr()),
            l2_m_plus: l2(&|h| h[1].norm_sqr() + h[2].norm_sqr() + h[3].norm_sqr()),
            l2_m_minus: l2(&|h| h[5].norm_sqr() + h[6].norm_sqr() + h[7].norm_sqr()),
            l2_combo: l2(&|h| (h[0] * eq.rho_bar_minus + h[4] * eq.rho_bar_plus).norm_sqr()),
            ring_r,
        }
    }

    /// Radius of the largest shell average of `f`, shells one cell wide.
    pub fn shell_argmax(&self, f: &[f64]) -> (f64, Vec<f64>) {
        let n = self.n;
        let dr = 2.0 * self.half_width / n as f64;
        let nb = (self.half_width / dr).floor() as usize;
        let mut sum = vec![0.0; nb];
        let mut cnt = vec![0usize; nb];
        for i in 0..n {
            for j in 0..n {
                for l in 0..n {
                    let x = [self.coord(i), self.coord(j), self.coord(l)];
                    let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
                    let b = (r / dr + 0.5).floor() as usize;
                    if b < nb {
                        sum[b] += f[(i * n + j) * n + l];
                        cnt[b] += 1;
                    }
                }
            }
        }
        let avg: Vec<f64> = sum
            .iter()
            .zip(&cnt)
            .map(|(s, c)| if *c > 0 { s / *c as f64 } else { 0.0 })
            .collect();
        let best = avg
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        (best as f64 * dr, avg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Diagnostics {
    pub t: f64,
    pub mass_plus: f64,
    pub mass_minus: f64,
    pub momentum: [f64; 3],
    /// `int |m+ + m-| dx`, the scale for momentum drift.
    pub abs_momentum: f64,
    pub l2_n_plus: f64,
    pub l2_n_minus: f64,
    pub l2_m_plus: f64,
    pub l2_m_minus: f64,
    pub l2_combo: f64,
    pub ring_r: f64,
}

impl Diagnostics {
    pub const CSV_HEADER: &'static str =
        "t,mass_p,mass_m,momentum,l2_np,l2_nm,l2_mp,l2_mm,l2_combo,ring_r";

    pub fn csv_row(&self) -> String {
        let p = self.momentum;
        format!(
            "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            self.t,
            self.mass_plus,
            self.mass_minus,
            (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt(),
            self.l2_n_plus,
            self.l2_n_minus,
            self.l2_m_plus,
            self.l2_m_minus,
            self.l2_combo,
            self.ring_r
        )
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RingCheck {
    pub t: f64,
    pub ring_r: f64,
    pub ct: f64,
    pub window: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimReport {
    pub config: SimConfig,
    /// Time after which the front could re-enter through the periodic boundary.
    pub horizon: f64,
    pub dt: f64,
    pub steps: usize,
    pub diagnostics: Vec<Diagnostics>,
    pub mass_drift: [f64; 2],
    pub momentum_drift: f64,
    pub rings: Vec<RingCheck>,
}

/// Radius beyond which the Gaussian data is negligible.
pub fn support_radius(width: f64) -> f64 {
    4.0 * width
}

/// Default step: half the shortest retained wavelength per sound crossing.
pub fn default_dt(n: usize, half_width: f64, c: f64) -> f64 {
    let kmax = PI / half_width * (n / 3) as f64;
    0.5 * (2.0 * PI / kmax) / c
}

/// Runs to `t_final`, landing on every checkpoint, and returns the final
/// state with the per-step diagnostics.
pub fn run_simulation(cfg: &SimConfig, params: &ModelParams) -> Result<(SimReport, SimState, Grid), SimError> {
    if !(cfg.t_final > 0.0) || !(cfg.eps > 0.0) || !(cfg.width > 0.0) {
        return Err(SimError::Config("t_final, eps and width must be positive".into()));
    }
    let grid = Grid::new(cfg.n, cfg.half_width, params)?;
    let c = grid.eq.c;
    let horizon = (cfg.half_width - support_radius(cfg.width)) / c;
    if cfg.t_final > horizon {
        return Err(SimError::Config(format!(
            "t_final {} exceeds the wrap horizon {horizon:.3}",
            cfg.t_final
        )));
    }
    let dt_max = cfg.dt.unwrap_or_else(|| default_dt(cfg.n, cfg.half_width, c));
    if !(dt_max > 0.0) {
        return Err(SimError::Config("dt must be positive".into()));
    }
    let mut targets: Vec<f64> = cfg
        .checkpoints
        .iter()
        .copied()
        .filter(|t| *t > 0.0 && *t < cfg.t_final)
        .collect();
    targets.push(cfg.t_final);
    targets.sort_by(|a, b| a.total_cmp(b));

    let mut state = grid.initial_state(cfg.eps, cfg.width);
    let first = grid.diagnostics(&state);
    let mut diags = vec![first];
    let mut rings = Vec::new();
    let mut steps = 0;
    let mut used_dt: f64 = 0.0;
    for &target in &targets {
        let span = target - state.t;
        let m = (span / dt_max - 1e-9).ceil().max(1.0) as usize;
        let dt = span / m as f64;
        used_dt = used_dt.max(dt);
        let stepper = Stepper::new(&grid, dt, cfg.nonlinear);
        let start = state.t;
        for s in 0..m {
            stepper.step(&mut state)?;
            state.t = start + dt * (s + 1) as f64;
            steps += 1;
            diags.push(grid.diagnostics(&state));
        }
        state.t = target;
        let d = diags.last().expect("diagnostics");
        let window = (1.0 + target).sqrt();
        rings.push(RingCheck {
            t: target,
            ring_r: d.ring_r,
            ct: c * target,
            window,
            pass: (d.ring_r - c * target).abs() <= window,
        });
    }
    let drift = |f: fn(&Diagnostics) -> f64| {
        let base = f(&first).abs();
        diags.iter().map(|d| (f(d) - f(&first)).abs()).fold(0.0, f64::max) / base
    };
    let mass_drift = [drift(|d| d.mass_plus), drift(|d| d.mass_minus)];
    let momentum_drift = diags
        .iter()
        .map(|d| {
            let dp: f64 = (0..3).map(|i| (d.momentum[i] - first.momentum[i]).powi(2)).sum();
            dp.sqrt()
        })
        .fold(0.0, f64::max)
        / first.abs_momentum;
    Ok((
        SimReport {
            config: cfg.clone(),
            horizon,
            dt: used_dt,
            steps,
            diagnostics: diags,
            mass_drift,
            momentum_drift,
            rings,
        },
        state,
        grid,
    ))
}

/// Writes the per-step diagnostics as CSV with a header row.
pub fn write_diagnostics_csv(path: &Path, diags: &[Diagnostics]) -> Result<(), SimError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "{}", Diagnostics::CSV_HEADER)?;
    for d in diags {
        writeln!(f, "{}", d.csv_row())?;
    }
    f.flush()?;
    Ok(())
}

/// Little-endian float64 dump: `n, L, t`, then the eight fields in the order
/// of [`FIELD_NAMES`], each `n^3` values with the last index fastest.
pub fn write_state_dump(path: &Path, state: &SimState, grid: &Grid) -> Result<(), SimError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for v in [state.n as f64, state.half_width, state.t] {
        f.write_all(&v.to_le_bytes())?;
    }
    for field in state.physical(grid.fft()) {
        for v in field {
            f.write_all(&v.to_le_bytes())?;
        }
    }
    f.flush()?;
    Ok(())
}

/// Reads a dump written by [`write_state_dump`]: `(n, L, t, fields)`.
pub fn read_state_dump(path: &Path) -> Result<(usize, f64, f64, Vec<Vec<f64>>), SimError> {
    let bytes = std::fs::read(path)?;
    let vals: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    if vals.len() < 3 {
        return Err(SimError::Config("dump too short".into()));
    }
    let n = vals[0] as usize;
    let len = n * n * n;
    if vals.len() != 3 + 8 * len {
        return Err(SimError::Config("dump size does not match header".into()));
    }
    let fields = (0..8).map(|c| vals[3 + c * len..3 + (c + 1) * len].to_vec()).collect();
    Ok((n, vals[1], vals[2], fields))
}

#[derive(Debug, Clone, Serialize)]
pub struct OrderReport {
    pub dts: Vec<f64>,
    /// `||u(dt_i) - u(dt_{i+1})||` relative to `||u||`.
    pub differences: Vec<f64>,
    pub order: f64,
}

/// Observed temporal order from successive step halvings on a smooth state.
pub fn rk_order_study(
    params: &ModelParams,
    n: usize,
    half_width: f64,
    eps: f64,
    t_final: f64,
    dts: &[f64],
) -> Result<OrderReport, SimError> {
    let grid = Grid::new(n, half_width, params)?;
    let init = grid.initial_state(eps, half_width / 8.0);
    let mut finals = Vec::new();
    for &dt in dts {
        let m = (t_final / dt).round() as usize;
        let stepper = Stepper::new(&grid, t_final / m as f64, true);
        let mut s = SimState {
            n,
            half_width,
            t: 0.0,
            hat: init.hat.clone(),
        };
        for _ in 0..m {
            stepper.step(&mut s)?;
        }
        finals.push(s.hat);
    }
    let norm = |a: &[[C64; 8]]| a.iter().flat_map(|h| h.iter()).map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let scale = norm(finals.last().expect("at least one run"));
    let differences: Vec<f64> = finals
        .windows(2)
        .map(|w| {
            let d: Vec<[C64; 8]> = w[0]
                .iter()
                .zip(&w[1])
                .map(|(a, b)| std::array::from_fn(|c| a[c] - b[c]))
                .collect();
            norm(&d) / scale
        })
        .collect();
    let x: Vec<f64> = dts[..differences.len()].iter().map(|d| d.ln()).collect();
    let y: Vec<f64> = differences.iter().map(|d| d.ln()).collect();
    Ok(OrderReport {
        dts: dts.to_vec(),
        order: crate::greens::fit_slope(&x, &y),
        differences,
    })
}

/// Largest relative difference of the L2 norms between nonlinear and
/// linear runs of the same configuration.
pub fn linear_gap(cfg: &SimConfig, params: &ModelParams) -> Result<f64, SimError> {
    let (nl, _, _) = run_simulation(cfg, params)?;
    let lin_cfg = SimConfig {
        nonlinear: false,
        ..cfg.clone()
    };
    let (li, _, _) = run_simulation(&lin_cfg, params)?;
    Ok(norm_gap(&nl, &li))
}

/// Largest relative difference of the L2 norms of `a` against the reference
/// run `b`, step by step.
pub fn norm_gap(a: &SimReport, b: &SimReport) -> f64 {
    let mut gap: f64 = 0.0;
    for (a, b) in a.diagnostics.iter().zip(&b.diagnostics) {
        for (x, y) in [
            (a.l2_n_plus, b.l2_n_plus),
            (a.l2_n_minus, b.l2_n_minus),
            (a.l2_m_plus, b.l2_m_plus),
            (a.l2_m_minus, b.l2_m_minus),
        ] {
            gap = gap.max((x - y).abs() / y);
        }
    }
    gap
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::solve_equilibrium;

    fn sym() -> (ModelParams, EquilibriumState) {
        let p = ModelParams::symmetric();
        (p, solve_equilibrium(&p).unwrap())
    }

    #[test]
    fn gaussian_norm() {
        let k = default_radial_grid();
        let v = radial_l2(&k, |i| (-k[i] * k[i]).exp());
        assert!((v * v - PI.powf(1.5)).abs() < 1e-9);
        let w = radial_l2(&k, |i| 4.0 * (-k[i] * k[i]).exp());
        assert!((w * w - 4.0 * v * v).abs() < 1e-9);
    }

    #[test]
    fn synthetic_power_law() {
        let t = log_space(1e2, 1e4, 12);
        let v: Vec<f64> = t.iter().map(|t| (1.0 + t).powf(-0.25)).collect();
        let f = fit_decay_slope(&t, &v).unwrap();
        assert!((f.slope + 0.25).abs() < 1e-6);
        assert!(fit_decay_slope(&t[..5], &v[..5]).is_err());
        assert!(fit_decay_slope(&log_space(1.0, 10.0, 10), &v[..10]).is_err());
    }

    #[test]
    fn linear_semigroup_composition() {
        let (_, eq) = sym();
        let mut s = LinearRadialState::zeros(vec![0.05, 0.7, 3.0]);
        for (i, u) in s.u.iter_mut().enumerate() {
            *u = [C64::new(0.3, 0.0), C64::new(1.0, 0.1 * i as f64), C64::new(-0.2, 0.0), C64::new(0.5, 0.0)];
        }
        s.inc = vec![[C64::new(1.0, 0.0), C64::new(0.5, 0.0)]; 3];
        let same = linear_evolve(&s, 0.0, &eq);
        assert_eq!(same.u, s.u);
        let one = linear_evolve(&s, 3.0, &eq);
        let two = linear_evolve(&linear_evolve(&s, 1.5, &eq), 1.5, &eq);
        for (a, b) in one.u.iter().zip(&two.u) {
            for c in 0..4 {
                assert!((a[c] - b[c]).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn factored_remainders_match_direct_forms() {
        let (p, eq) = sym();
        for p in [p, ModelParams::asymmetric()] {
            let eq = solve_equilibrium(&p).unwrap();
            for (np, nm) in [(0.05, -0.03), (-0.1, 0.2), (0.001, 0.0)] {
                let fs = solve_fraction_map(1.0 + np, 1.0 + nm, &p, None).unwrap();
                let gp = [0.3, -0.1, 0.7];
                let gm = [-0.2, 0.4, 0.05];
                let q1 = q1_factored(&fs, &eq, np, gp, gm);
                let q2 = q2_factored(&fs, &eq, nm, gp, gm);
                let am = 1.0 - fs.alpha_plus;
                for d in 0..3 {
                    let gradp = fs.c2 * (fs.rho_minus * gp[d] + fs.rho_plus * gm[d]);
                    let d1 = fs.alpha_plus * gradp - eq.beta1 * gp[d] - eq.beta2 * gm[d];
                    let d2 = am * gradp - eq.beta3 * gp[d] - eq.beta4 * gm[d];
                    assert!((q1[d] - d1).abs() < 1e-13, "{} vs {}", q1[d], d1);
                    assert!((q2[d] - d2).abs() < 1e-13, "{} vs {}", q2[d], d2);
                }
            }
        }
        let _ = eq;
    }

    #[test]
    fn zero_state_has_zero_increments() {
        let (p, _) = sym();
        let g = Grid::new(8, 8.0, &p).unwrap();
        let hat = vec![[ZERO; 8]; 512];
        let r = g.nonlinear_rhs(&hat).unwrap();
        assert!(r.iter().all(|h| h.iter().all(|z| z.norm() < 1e-14)));
    }

    #[test]
    fn q1_is_quadratic() {
        let (p, eq) = sym();
        let q = |eps: f64| {
            (0..64)
                .map(|i| {
                    let x = 2.0 * PI * i as f64 / 64.0;
                    let np = eps * x.cos();
                    let fs = solve_fraction_map(1.0 + np, 1.0, &p, None).unwrap();
                    let gp = [-eps * x.sin(), 0.0, 0.0];
                    q1_factored(&fs, &eq, np, gp, [0.0; 3])[0].abs()
                })
                .fold(0.0, f64::max)
        };
        let order = (q(1e-3) / q(5e-4)).log2();
        assert!((order - 2.0).abs() < 0.1, "order {order}");
    }

    #[test]
    fn real_pair_transforms_round_trip() {
        let (p, _) = sym();
        let g = Grid::new(8, 4.0, &p).unwrap();
        let a: Vec<f64> = (0..512).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..512).map(|i| (i as f64 * 0.11).cos()).collect();
        let (ah, bh) = g.to_spec_pair(&a, &b);
        let mut direct: Vec<C64> = a.iter().map(|x| C64::new(*x, 0.0)).collect();
        g.fft.forward(&mut direct);
        assert!(ah.iter().zip(&direct).all(|(x, y)| (x - y).norm() < 1e-10));
        let (a2, b2) = g.to_real(&ah, &bh);
        assert!(a.iter().zip(&a2).all(|(x, y)| (x - y).abs() < 1e-12));
        assert!(b.iter().zip(&b2).all(|(x, y)| (x - y).abs() < 1e-12));
    }

    #[test]
    fn linear_grid_steps_compose() {
        let (p, _) = sym();
        let g = Grid::new(16, 16.0, &p).unwrap();
        let s0 = g.initial_state(1e-2, 3.0);
        let mut a = SimState { n: 16, half_width: 16.0, t: 0.0, hat: s0.hat.clone() };
        let st = Stepper::new(&g, 0.25, false);
        for _ in 0..8 {
            st.step(&mut a).unwrap();
        }
        let mut b = SimState { n: 16, half_width: 16.0, t: 0.0, hat: s0.hat };
        Stepper::new(&g, 2.0, false).step(&mut b).unwrap();
        let scale = b.hat.iter().flat_map(|h| h.iter()).map(|z| z.norm()).fold(0.0, f64::max);
        let err = a
            .hat
            .iter()
            .zip(&b.hat)
            .flat_map(|(x, y)| (0..8).map(move |c| (x[c] - y[c]).norm()))
            .fold(0.0, f64::max);
        assert!(err < 1e-10 * scale.max(1.0), "err {err}");
    }

    #[test]
    fn equilibrium_has_zero_norms() {
        let (p, _) = sym();
        let g = Grid::new(8, 8.0, &p).unwrap();
        let s = g.initial_state(0.0, 2.0);
        let d = g.diagnostics(&s);
        assert_eq!(d.l2_n_plus, 0.0);
        assert_eq!(d.l2_m_minus, 0.0);
        assert_eq!(d.mass_plus, 0.0);
    }

    #[test]
    fn dump_round_trip() {
        let (p, _) = sym();
        let g = Grid::new(8, 8.0, &p).unwrap();
        let s = g.initial_state(1e-2, 2.0);
        let dir = std::env::temp_dir().join(format!("twofluid-dump-{}", std::process::id()));
        write_state_dump(&dir, &s, &g).unwrap();
        let (n, l, t, fields) = read_state_dump(&dir).unwrap();
        std::fs::remove_file(&dir).unwrap();
        assert_eq!((n, l, t), (8, 8.0, 0.0));
        let phys = s.physical(g.fft());
        assert_eq!(fields, phys);
    }
}
