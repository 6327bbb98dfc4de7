//! Fourier symbol of the compressible 4x4 block, its eigenvalues, spectral
//! projectors and semigroup, together with the low- and high-frequency
//! expansions of the spectrum.
//!
//! Unknowns are ordered `(n+, phi+, n-, phi-)` with `phi = i xi . m / |xi|`.
//! The symbol is real, so `e^{tA}` is real as well.

use nalgebra::{Matrix4, Vector4};
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::model::EquilibriumState;

pub type C64 = Complex64;
pub type CMat4 = Matrix4<C64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("eigenvalues at k = {0} are not finite")]
    NonFinite(f64),
    #[error("unresolvable branch assignment at k = {0}")]
    Ambiguous(f64),
    #[error("non-positive middle-band gap {0:e}")]
    GapNotPositive(f64),
    #[error("invalid band partition: eta1 = {0}, K = {1}")]
    Partition(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    Low,
    Middle,
    High,
}

impl Band {
    pub fn as_str(&self) -> &'static str {
        match self {
            Band::Low => "low",
            Band::Middle => "middle",
            Band::High => "high",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BandPartition {
    pub eta1: f64,
    pub k_cut: f64,
    pub b_mid: Option<f64>,
}

impl Default for BandPartition {
    fn default() -> Self {
        BandPartition {
            eta1: 0.1,
            k_cut: 10.0,
            b_mid: None,
        }
    }
}

impl BandPartition {
    pub fn new(eta1: f64, k_cut: f64) -> Result<Self, SpectralError> {
        if !(eta1 > 0.0 && eta1 < k_cut) {
            return Err(SpectralError::Partition(eta1, k_cut));
        }
        Ok(BandPartition {
            eta1,
            k_cut,
            b_mid: None,
        })
    }

    pub fn band(&self, k: f64) -> Band {
        if k <= self.eta1 {
            Band::Low
        } else if k >= self.k_cut {
            Band::High
        } else {
            Band::Middle
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompressibleSymbol {
    pub k: f64,
    pub entries: Matrix4<f64>,
}

pub fn symbol_at(k: f64, eq: &EquilibriumState) -> CompressibleSymbol {
    let k2 = k * k;
    let k3 = k2 * k;
    #[rustfmt::skip]
    let entries = Matrix4::new(
        0.0, -k, 0.0, 0.0,
        eq.beta1 * k + eq.sigma_plus * k3, -eq.nu_plus * k2, eq.beta2 * k, 0.0,
        0.0, 0.0, 0.0, -k,
        eq.beta3 * k, 0.0, eq.beta4 * k + eq.sigma_minus * k3, -eq.nu_minus * k2,
    );
    CompressibleSymbol { k, entries }
}

/// The symbol divided by `k`; its eigenvalues are `lambda / k`.
fn scaled_symbol(k: f64, eq: &EquilibriumState) -> Matrix4<f64> {
    let k2 = k * k;
    #[rustfmt::skip]
    let m = Matrix4::new(
        0.0, -1.0, 0.0, 0.0,
        eq.beta1 + eq.sigma_plus * k2, -eq.nu_plus * k, eq.beta2, 0.0,
        0.0, 0.0, 0.0, -1.0,
        eq.beta3, 0.0, eq.beta4 + eq.sigma_minus * k2, -eq.nu_minus * k,
    );
    m
}

/// `(c3, c2, c1, c0)` of `lambda^4 + c3 lambda^3 + c2 lambda^2 + c1 lambda + c0`.
pub fn char_poly_coeffs(k: f64, eq: &EquilibriumState) -> [f64; 4] {
    let k2 = k * k;
    let k4 = k2 * k2;
    let k6 = k4 * k2;
    let k8 = k4 * k4;
    let (np, nm, sp, sm) = (eq.nu_plus, eq.nu_minus, eq.sigma_plus, eq.sigma_minus);
    [
        (np + nm) * k2,
        (eq.beta1 + eq.beta4) * k2 + (sp + sm + np * nm) * k4,
        (eq.beta1 * nm + eq.beta4 * np) * k4 + (np * sm + nm * sp) * k6,
        (eq.beta1 * sm + eq.beta4 * sp) * k6 + sp * sm * k8,
    ]
}

/// Coefficients of the quartic in `mu = lambda / k`.
fn scaled_coeffs(k: f64, eq: &EquilibriumState) -> [f64; 4] {
    let k2 = k * k;
    let (np, nm, sp, sm) = (eq.nu_plus, eq.nu_minus, eq.sigma_plus, eq.sigma_minus);
    [
        (np + nm) * k,
        (eq.beta1 + eq.beta4) + (sp + sm + np * nm) * k2,
        (eq.beta1 * nm + eq.beta4 * np) * k + (np * sm + nm * sp) * k2 * k,
        (eq.beta1 * sm + eq.beta4 * sp) * k2 + sp * sm * k2 * k2,
    ]
}

fn poly_eval(a: &[f64; 4], z: C64) -> (C64, C64) {
    let p = (((z + a[0]) * z + a[1]) * z + a[2]) * z + a[3];
    let dp = ((z * 4.0 + 3.0 * a[0]) * z + 2.0 * a[1]) * z + a[2];
    (p, dp)
}

fn polish(a: &[f64; 4], mut z: C64) -> C64 {
    let (mut p, _) = poly_eval(a, z);
    for _ in 0..3 {
        let (_, dp) = poly_eval(a, z);
        if dp.norm() == 0.0 {
            break;
        }
        let cand = z - p / dp;
        let (pc, _) = poly_eval(a, cand);
        if pc.norm() < p.norm() {
            z = cand;
            p = pc;
        } else {
            break;
        }
    }
    z
}

/// Unlabelled roots of the scaled quartic (companion matrix, then Newton).
fn scaled_roots(k: f64, eq: &EquilibriumState) -> [C64; 4] {
    let a = scaled_coeffs(k, eq);
    #[rustfmt::skip]
    let comp = Matrix4::new(
        -a[0], -a[1], -a[2], -a[3],
        1.0, 0.0, 0.0, 0.0,
        0.0, 1.0, 0.0, 0.0,
        0.0, 0.0, 1.0, 0.0,
    );
    let ev: Vector4<C64> = comp.complex_eigenvalues();
    let mut out = [C64::new(0.0, 0.0); 4];
    for i in 0..4 {
        out[i] = polish(&a, ev[i]);
    }
    // Conjugate pairs stay exact conjugates; real roots stay real.
    for z in out.iter_mut() {
        if z.im.abs() <= 1e-14 * z.norm() {
            z.im = 0.0;
        }
    }
    let polished = out;
    let bal = balanced_symbol(k, eq);
    let big = polished.iter().map(|z| z.norm()).fold(0.0, f64::max);
    for i in 0..4 {
        // The matrix route is accurate to eps |A| in absolute terms, which
        // would spoil roots far below the spectral radius; Newton on the
        // polynomial already has them to full relative precision.
        if polished[i].im < 0.0 || polished[i].norm() < 1e-2 * big {
            continue;
        }
        let sep = (0..4)
            .filter(|&j| j != i)
            .map(|j| (polished[j] - polished[i]).norm())
            .fold(f64::INFINITY, f64::min);
        let mut z = rayleigh_refine(&bal, polished[i]);
        if polished[i].im == 0.0 {
            z.im = 0.0;
        }
        if (z - polished[i]).norm() < 0.1 * sep {
            out[i] = z;
        }
    }
    for i in 0..4 {
        if polished[i].im < 0.0 {
            let partner = (0..4)
                .filter(|&j| polished[j].im > 0.0)
                .min_by(|&a, &b| {
                    (polished[a].conj() - polished[i])
                        .norm()
                        .total_cmp(&(polished[b].conj() - polished[i]).norm())
                });
            if let Some(j) = partner {
                out[i] = out[j].conj();
            }
        }
    }
    out
}

/// `scaled_symbol` under the diagonal similarity `diag(1, s+, 1, s-)` that
/// equalizes the off-diagonal magnitudes of each phase block.
fn balanced_symbol(k: f64, eq: &EquilibriumState) -> Matrix4<f64> {
    let mut m = scaled_symbol(k, eq);
    let sp = (eq.beta1 + eq.sigma_plus * k * k).sqrt();
    let sm = (eq.beta4 + eq.sigma_minus * k * k).sqrt();
    let d = [1.0, sp, 1.0, sm];
    for i in 0..4 {
        for j in 0..4 {
            m[(i, j)] *= d[j] / d[i];
        }
    }
    m
}

/// Two-sided Rayleigh quotient after one step of inverse iteration.
///
/// Polynomial polishing is limited by the conditioning of clustered roots;
/// the matrix route keeps the attainable accuracy at the eigenvalue
/// condition number instead.
fn rayleigh_refine(a: &Matrix4<f64>, mut z: C64) -> C64 {
    let ac: CMat4 = a.map(|x| C64::new(x, 0.0));
    // A generic start vector: no symmetry of the symbol can annihilate it.
    let ones = Vector4::new(
        C64::new(1.0, 0.31),
        C64::new(0.73, -0.2),
        C64::new(-0.41, 0.57),
        C64::new(0.29, 0.83),
    );
    for _ in 0..2 {
        let shifted = ac - CMat4::identity() * z;
        let (Some(x), Some(y)) = (
            shifted.lu().solve(&ones),
            shifted.transpose().lu().solve(&ones),
        ) else {
            return z;
        };
        let d = y.dot(&x);
        if d.norm() == 0.0 || !d.re.is_finite() || !d.im.is_finite() {
            return z;
        }
        let next = y.dot(&(ac * x)) / d;
        if !next.re.is_finite() || !next.im.is_finite() {
            return z;
        }
        z = next;
    }
    z
}

/// Eigenvalues of `A(k)` without labels or projectors.
pub fn eigenvalues(k: f64, eq: &EquilibriumState) -> [C64; 4] {
    if k == 0.0 {
        return [C64::new(0.0, 0.0); 4];
    }
    scaled_roots(k, eq).map(|m| m * k)
}

/// Largest real part over the four branches.
pub fn max_real_part(k: f64, eq: &EquilibriumState) -> f64 {
    eigenvalues(k, eq)
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralPoint {
    pub k: f64,
    pub lambdas: [C64; 4],
    /// `None` when two eigenvalues coincide to working precision.
    pub projectors: Option<[CMat4; 4]>,
    pub degenerate_flag: bool,
    pub band: Band,
}

pub fn degeneracy_gap(lambdas: &[C64; 4]) -> (f64, f64) {
    let mut gap = f64::INFINITY;
    let mut big: f64 = 0.0;
    for i in 0..4 {
        big = big.max(lambdas[i].norm());
        for j in (i + 1)..4 {
            gap = gap.min((lambdas[i] - lambdas[j]).norm());
        }
    }
    (gap, big)
}

const PERMS: [[usize; 4]; 24] = [
    [0, 1, 2, 3], [0, 1, 3, 2], [0, 2, 1, 3], [0, 2, 3, 1], [0, 3, 1, 2], [0, 3, 2, 1],
    [1, 0, 2, 3], [1, 0, 3, 2], [1, 2, 0, 3], [1, 2, 3, 0], [1, 3, 0, 2], [1, 3, 2, 0],
    [2, 0, 1, 3], [2, 0, 3, 1], [2, 1, 0, 3], [2, 1, 3, 0], [2, 3, 0, 1], [2, 3, 1, 0],
    [3, 0, 1, 2], [3, 0, 2, 1], [3, 1, 0, 2], [3, 1, 2, 0], [3, 2, 0, 1], [3, 2, 1, 0],
];

/// Permutation `perm` with `roots[perm[i]]` closest to `targets[i]` in total distance.
pub fn match_roots(roots: &[C64; 4], targets: &[C64; 4]) -> [usize; 4] {
    let mut best = PERMS[0];
    let mut best_cost = f64::INFINITY;
    for p in PERMS.iter() {
        let cost: f64 = (0..4).map(|i| (roots[p[i]] - targets[i]).norm()).sum();
        if cost < best_cost {
            best_cost = cost;
            best = *p;
        }
    }
    best
}

/// Labels branches: the conjugate pair with `|Im| > |Re|` becomes (1, 2),
/// the rest are ordered by modulus. Without an oscillatory pair all four
/// are ordered by modulus as (3, 4, 1, 2).
fn label_by_shape(roots: [C64; 4]) -> Result<[C64; 4], SpectralError> {
    let mut idx: Vec<usize> = (0..4).collect();
    idx.sort_by(|&a, &b| roots[b].im.abs().total_cmp(&roots[a].im.abs()));
    let top = roots[idx[0]];
    if top.im.abs() > top.re.abs() && roots[idx[1]].im.abs() > roots[idx[1]].re.abs() {
        let (mut l1, mut l2) = (roots[idx[0]], roots[idx[1]]);
        if l1.im < l2.im {
            std::mem::swap(&mut l1, &mut l2);
        }
        let (mut l3, mut l4) = (roots[idx[2]], roots[idx[3]]);
        if l3.norm() > l4.norm() {
            std::mem::swap(&mut l3, &mut l4);
        }
        return Ok([l1, l2, l3, l4]);
    }
    let mut by_mod = roots;
    by_mod.sort_by(|a, b| a.norm().total_cmp(&b.norm()).then(b.im.total_cmp(&a.im)));
    Ok([by_mod[2], by_mod[3], by_mod[0], by_mod[1]])
}

/// Eigenvalues, projectors and band of `A(k)`.
///
/// With `prev`, branches are labelled by continuity against the previous
/// point; otherwise by the shape rule of [`label_by_shape`].
pub fn eigen_branches(
    k: f64,
    eq: &EquilibriumState,
    prev: Option<&SpectralPoint>,
) -> Result<SpectralPoint, SpectralError> {
    eigen_branches_in(k, eq, prev, &BandPartition::default())
}

pub fn eigen_branches_in(
    k: f64,
    eq: &EquilibriumState,
    prev: Option<&SpectralPoint>,
    part: &BandPartition,
) -> Result<SpectralPoint, SpectralError> {
    let band = part.band(k);
    if k == 0.0 {
        return Ok(SpectralPoint {
            k,
            lambdas: [C64::new(0.0, 0.0); 4],
            projectors: None,
            degenerate_flag: true,
            band,
        });
    }
    let mu = scaled_roots(k, eq);
    if mu.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(SpectralError::NonFinite(k));
    }
    let mu = match prev {
        Some(p) if p.k > 0.0 => {
            // Compare in units of lambda / k, scaled to the current k.
            let target = p.lambdas.map(|l| l / p.k);
            let perm = match_roots(&mu, &target);
            [mu[perm[0]], mu[perm[1]], mu[perm[2]], mu[perm[3]]]
        }
        _ => label_by_shape(mu)?,
    };
    let lambdas = mu.map(|m| m * k);
    let (gap, big) = degeneracy_gap(&lambdas);
    let degenerate_flag = gap < 1e-6 * (1.0 + big);
    let projectors = if gap > 1e-12 * big {
        Some(build_projectors(&scaled_symbol(k, eq), &mu))
    } else {
        None
    };
    Ok(SpectralPoint {
        k,
        lambdas,
        projectors,
        degenerate_flag,
        band,
    })
}

/// Largest entry modulus of a complex matrix.
pub fn max_abs(m: &CMat4) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn build_projectors(a: &Matrix4<f64>, mu: &[C64; 4]) -> [CMat4; 4] {
    let ac: CMat4 = a.map(|x| C64::new(x, 0.0));
    let id = CMat4::identity();
    let factors: Vec<CMat4> = mu.iter().map(|&m| ac - id * m).collect();
    let mut out = [CMat4::zeros(); 4];
    for i in 0..4 {
        let mut p = id;
        for j in 0..4 {
            if j != i {
                p = p * factors[j] / (mu[i] - mu[j]);
            }
        }
        out[i] = p;
    }
    out
}

/// Matrix exponential by scaling and squaring.
pub fn semigroup_expm(k: f64, t: f64, eq: &EquilibriumState) -> Matrix4<f64> {
    (symbol_at(k, eq).entries * t).exp()
}

/// `sum_i e^{lambda_i t} P^i`; requires projectors.
pub fn semigroup_spectral(sp: &SpectralPoint, t: f64) -> Option<Matrix4<f64>> {
    let proj = sp.projectors.as_ref()?;
    let mut acc = CMat4::zeros();
    for i in 0..4 {
        acc += proj[i] * (sp.lambdas[i] * t).exp();
    }
    Some(acc.map(|z| z.re))
}

/// `e^{tA(k)}`: spectral sum when the point is non-degenerate, otherwise
/// scaling and squaring.
pub fn semigroup(k: f64, t: f64, eq: &EquilibriumState) -> Matrix4<f64> {
    if k == 0.0 || t == 0.0 {
        return Matrix4::identity();
    }
    match eigen_branches(k, eq, None) {
        Ok(sp) if !sp.degenerate_flag => {
            semigroup_spectral(&sp, t).unwrap_or_else(|| semigroup_expm(k, t, eq))
        }
        _ => semigroup_expm(k, t, eq),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Expansion {
    pub lambdas: [C64; 4],
    /// Set when the diffusive pair is complex (negative discriminant).
    pub complex_diffusive: bool,
}

/// Leading small-`k` behaviour of the four branches.
pub fn low_freq_expansion(k: f64, eq: &EquilibriumState) -> Expansion {
    let k2 = k * k;
    let l1 = C64::new(-eq.b1 * k2, eq.c * k);
    let l3 = C64::new(eq.lam3_tilde * k2, eq.lam_tilde_imag * k2);
    let l4 = C64::new(eq.lam4_tilde * k2, -eq.lam_tilde_imag * k2);
    Expansion {
        lambdas: [l1, l1.conj(), l3, l4],
        complex_diffusive: eq.diffusive_pair_complex(),
    }
}

fn phase_roots(nu: f64, sigma: f64, k2: f64) -> (C64, C64) {
    let disc = C64::new(nu * nu - 4.0 * sigma, 0.0).sqrt();
    (-(disc + nu) * 0.5 * k2, -(C64::new(nu, 0.0) - disc) * 0.5 * k2)
}

/// Leading large-`k` behaviour, with the damping coefficient of each phase
/// taken as `nu = nu1 + nu2`.
pub fn high_freq_expansion(k: f64, eq: &EquilibriumState) -> Expansion {
    let k2 = k * k;
    let (a, b) = phase_roots(eq.nu_plus, eq.sigma_plus, k2);
    let (c, d) = phase_roots(eq.nu_minus, eq.sigma_minus, k2);
    Expansion {
        lambdas: [a, b, c, d],
        complex_diffusive: false,
    }
}

/// Per-root relative error of the high-frequency expansion, with exact
/// roots matched to the expansion by minimal total distance.
pub fn high_freq_errors(k: f64, eq: &EquilibriumState) -> [f64; 4] {
    let exact = eigenvalues(k, eq);
    let approx = high_freq_expansion(k, eq).lambdas;
    let perm = match_roots(&exact, &approx);
    let mut out = [0.0; 4];
    for i in 0..4 {
        let e = exact[perm[i]];
        out[i] = (e - approx[i]).norm() / e.norm();
    }
    out
}

/// Per-branch relative error of the low-frequency expansion.
pub fn low_freq_errors(sp: &SpectralPoint, eq: &EquilibriumState) -> [f64; 4] {
    let approx = low_freq_expansion(sp.k, eq).lambdas;
    let perm = match_roots(&sp.lambdas, &approx);
    let mut out = [0.0; 4];
    for i in 0..4 {
        let e = sp.lambdas[perm[i]];
        out[i] = (e - approx[i]).norm() / e.norm();
    }
    out
}

/// Absolute residual `|lambda_i - expansion_i|` of the low-frequency
/// expansion, per branch.
pub fn low_freq_residuals(sp: &SpectralPoint, eq: &EquilibriumState) -> [f64; 4] {
    let approx = low_freq_expansion(sp.k, eq).lambdas;
    let perm = match_roots(&sp.lambdas, &approx);
    std::array::from_fn(|i| (sp.lambdas[perm[i]] - approx[i]).norm())
}

/// Defects of the projector identities at one wavenumber, each scaled by the
/// size of the matrices involved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProjectorDefects {
    /// `|sum P^i - I| / (1 + sum |P^i|)`.
    pub completeness: f64,
    /// `max |P^i P^j - delta_ij P^i| / (1 + |P^i| |P^j|)`.
    pub products: f64,
    /// `|sum lambda_i P^i - A| / |A|`.
    pub reconstruction: f64,
    /// `|P^1 - conj(P^2)| / (1 + |P^1|)`; zero outside the low band.
    pub conjugation: f64,
}

pub fn projector_defects(sp: &SpectralPoint, eq: &EquilibriumState) -> Option<ProjectorDefects> {
    let p = sp.projectors.as_ref()?;
    let size: [f64; 4] = std::array::from_fn(|i| max_abs(&p[i]));
    let sum = p[0] + p[1] + p[2] + p[3];
    let completeness = max_abs(&(sum - CMat4::identity())) / (1.0 + size.iter().sum::<f64>());
    let mut products: f64 = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            let mut d = p[i] * p[j];
            if i == j {
                d -= p[i];
            }
            products = products.max(max_abs(&d) / (1.0 + size[i] * size[j]));
        }
    }
    let a = symbol_at(sp.k, eq).entries.map(|x| C64::new(x, 0.0));
    let mut recon = -a;
    for i in 0..4 {
        recon += p[i] * sp.lambdas[i];
    }
    let reconstruction = max_abs(&recon) / max_abs(&a);
    let conjugation = if sp.band == Band::Low {
        max_abs(&(p[0] - p[1].map(|z| z.conj()))) / (1.0 + size[0])
    } else {
        0.0
    };
    Some(ProjectorDefects {
        completeness,
        products,
        reconstruction,
        conjugation,
    })
}

/// Middle-band spectral gap `b = -max Re lambda` over `[eta1, K]`.
///
/// Samples `n_grid` uniform points, then refines every interior local
/// maximum by golden-section search.
pub fn mid_band_gap_with(
    eq: &EquilibriumState,
    part: &BandPartition,
    n_grid: usize,
) -> Result<f64, SpectralError> {
    let n = n_grid.max(2000);
    let h = (part.k_cut - part.eta1) / (n - 1) as f64;
    let ks: Vec<f64> = (0..n).map(|i| part.eta1 + h * i as f64).collect();
    let vals: Vec<f64> = ks.iter().map(|&k| max_real_part(k, eq)).collect();
    let mut best = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for i in 1..n - 1 {
        if vals[i] >= vals[i - 1] && vals[i] >= vals[i + 1] {
            best = best.max(golden_max(|k| max_real_part(k, eq), ks[i - 1], ks[i + 1]));
        }
    }
    if !(best < 0.0) {
        return Err(SpectralError::GapNotPositive(-best));
    }
    Ok(-best)
}

pub fn mid_band_gap(eq: &EquilibriumState, part: &BandPartition) -> Result<f64, SpectralError> {
    mid_band_gap_with(eq, part, 2000)
}

fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
        if (b - a).abs() < 1e-13 * b.abs() {
            break;
        }
    }
    fc.max(fd)
}

/// Coefficient of `1/k` in the weighted combination
/// `w_top * row1 + w_bottom * row3` of `P^3` and `P^4`, in the singular
/// columns 2 and 4, relative to the coefficient carried by row 1 alone.
///
/// The three-term model `a/k + b + c k` is fitted on `k0, 2 k0, 4 k0`.
pub fn singular_cancellation(
    eq: &EquilibriumState,
    k0: f64,
    w_top: f64,
    w_bottom: f64,
) -> Result<f64, SpectralError> {
    let ks = [k0, 2.0 * k0, 4.0 * k0];
    let mut combo = [[C64::new(0.0, 0.0); 4]; 3];
    let mut single = [[C64::new(0.0, 0.0); 4]; 3];
    for (n, &k) in ks.iter().enumerate() {
        let sp = eigen_branches(k, eq, None)?;
        let proj = sp.projectors.ok_or(SpectralError::Ambiguous(k))?;
        let mut slot = 0;
        for pi in [2usize, 3] {
            for col in [1usize, 3] {
                combo[n][slot] = proj[pi][(0, col)] * w_top + proj[pi][(2, col)] * w_bottom;
                single[n][slot] = proj[pi][(0, col)] * w_top;
                slot += 1;
            }
        }
    }
    let coef = |v: &[[C64; 4]; 3], slot: usize| -> C64 {
        // Solve a/k + b + c k = v at the three nodes for a.
        let rows: Vec<[f64; 3]> = ks.iter().map(|&k| [1.0 / k, 1.0, k]).collect();
        let m = nalgebra::Matrix3::new(
            rows[0][0], rows[0][1], rows[0][2], rows[1][0], rows[1][1], rows[1][2], rows[2][0],
            rows[2][1], rows[2][2],
        );
        let inv = m.try_inverse().expect("distinct nodes");
        inv[(0, 0)] * v[0][slot] + inv[(0, 1)] * v[1][slot] + inv[(0, 2)] * v[2][slot]
    };
    let mut worst: f64 = 0.0;
    for slot in 0..4 {
        let a = coef(&combo, slot).norm();
        let s = coef(&single, slot).norm();
        worst = worst.max(a / s.max(f64::MIN_POSITIVE));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{solve_equilibrium, ModelParams};

    fn sym() -> EquilibriumState {
        solve_equilibrium(&ModelParams::symmetric()).unwrap()
    }

    fn asym() -> EquilibriumState {
        solve_equilibrium(&ModelParams::asymmetric()).unwrap()
    }

    #[test]
    fn symbol_entries_and_trace() {
        let eq = sym();
        let a = symbol_at(1.0, &eq).entries;
        assert!((a[(1, 0)] - 2.01).abs() < 1e-12);
        assert!((a[(1, 1)] + 1.0).abs() < 1e-12);
        assert_eq!(symbol_at(0.0, &eq).entries, Matrix4::zeros());
        let k = 3.7;
        let tr = symbol_at(k, &eq).entries.trace();
        assert!((tr + (eq.nu_plus + eq.nu_minus) * k * k).abs() < 1e-12);
    }

    #[test]
    fn char_poly_symmetric_values() {
        let c = char_poly_coeffs(1.0, &sym());
        assert!((c[0] - 2.0).abs() < 1e-14);
        assert!((c[1] - 5.02).abs() < 1e-14);
        assert!((c[3] - 0.0401).abs() < 1e-14);
        assert_eq!(char_poly_coeffs(0.0, &sym()), [0.0; 4]);
    }

    #[test]
    fn small_k_branches() {
        let eq = sym();
        let sp = eigen_branches(0.01, &eq, None).unwrap();
        let l1 = sp.lambdas[0];
        assert!(((l1 - C64::new(-5e-5, 0.02)) / l1).norm() < 1e-3);
        assert_eq!(sp.lambdas[1], l1.conj());
        assert!((sp.lambdas[2].re / 1e-4 + 0.010102).abs() < 1e-5);
        assert!((sp.lambdas[3].re / 1e-4 + 0.98990).abs() < 1e-4);
        let prod = (sp.lambdas[2] * sp.lambdas[3]).re;
        assert!((prod / 1e-8 - 0.01).abs() < 1e-6);
    }

    #[test]
    fn k_zero_is_degenerate() {
        let sp = eigen_branches(0.0, &sym(), None).unwrap();
        assert!(sp.degenerate_flag);
        assert!(sp.lambdas.iter().all(|l| l.norm() == 0.0));
    }

    #[test]
    fn projector_algebra_mid_band() {
        let eq = asym();
        for &k in &[0.05, 0.7, 3.0, 25.0] {
            let sp = eigen_branches(k, &eq, None).unwrap();
            let p = sp.projectors.unwrap();
            let a = symbol_at(k, &eq).entries.map(|x| C64::new(x, 0.0));
            let sum = p[0] + p[1] + p[2] + p[3];
            assert!(max_abs(&(sum - CMat4::identity())) < 1e-10);
            let recon = p[0] * sp.lambdas[0] + p[1] * sp.lambdas[1] + p[2] * sp.lambdas[2]
                + p[3] * sp.lambdas[3];
            assert!(max_abs(&(recon - a)) < 1e-8 * (1.0 + max_abs(&a)));
        }
    }

    #[test]
    fn leading_projector_entries() {
        let eq = asym();
        let k = 1e-4;
        let sp = eigen_branches(k, &eq, None).unwrap();
        let p = sp.projectors.unwrap();
        let bsum = eq.beta1 + eq.beta4;
        assert!((p[0][(0, 0)].re - eq.beta1 / (2.0 * bsum)).abs() < 1e-3);
        let r = eq.r_disc.unwrap();
        assert!(((p[2][(0, 1)] * k).re + eq.beta4 / r).abs() < 1e-3);
        assert!(((p[3][(0, 1)] * k).re - eq.beta4 / r).abs() < 1e-3);
    }

    #[test]
    fn semigroup_paths_agree() {
        let eq = sym();
        let a = semigroup_expm(0.5, 3.0, &eq);
        let sp = eigen_branches(0.5, &eq, None).unwrap();
        let b = semigroup_spectral(&sp, 3.0).unwrap();
        assert!((a - b).amax() < 1e-8);
        assert_eq!(semigroup(0.5, 0.0, &eq), Matrix4::identity());
    }

    #[test]
    fn high_band_example() {
        let eq = sym();
        let exact = eigenvalues(50.0, &eq);
        assert!(exact.iter().all(|l| l.re < 0.0));
        let e20 = high_freq_errors(20.0, &eq);
        let e100 = high_freq_errors(100.0, &eq);
        let m = |e: [f64; 4]| e.iter().copied().fold(0.0, f64::max);
        assert!(m(e100) < m(e20));
    }

    #[test]
    fn gap_positive() {
        let eq = sym();
        let b = mid_band_gap(&eq, &BandPartition::default()).unwrap();
        assert!(b > 0.0);
    }

    #[test]
    fn cancellation_weights() {
        let eq = asym();
        let good = singular_cancellation(&eq, 1e-4, eq.beta1, eq.beta2).unwrap();
        assert!(good < 1e-6, "{good}");
        let swapped = singular_cancellation(&eq, 1e-4, eq.beta2, eq.beta1).unwrap();
        assert!(swapped > 1e-2, "{swapped}");
    }
}
