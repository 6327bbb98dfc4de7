//! Physical-space Green's function entries of the linearized system.
//!
//! Entries are built from the Fourier symbol `e^{tA(k)}` of the compressible
//! block together with the Hodge factors `i xi / k` and `xi xi^T / k^2`, and
//! reduced to one-dimensional radial integrals against spherical Bessel
//! functions. The module also carries the decay envelopes the entries are
//! compared against and the checks built on top of them.

use std::f64::consts::PI;

use nalgebra::Matrix4;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::fft3::{wave_index, Fft3};
use crate::model::EquilibriumState;
use crate::quad::{gauss_legendre, integrate, Tol};
use crate::spectral::{
    eigen_branches, max_real_part, semigroup_expm, semigroup_spectral, SpectralPoint, C64,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GreensError {
    #[error("entry ({0},{1}) is outside the 4x4 block structure")]
    BadEntry(usize, usize),
    #[error("non-finite symbol value at k = {0}")]
    NonFinite(f64),
    #[error("no oscillatory pair at k = {0}")]
    NotOscillatory(f64),
    #[error("symbols of different tensor shapes cannot be summed")]
    MixedShapes,
    #[error("quadrature failed: {0}")]
    Quadrature(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TensorFactor {
    Scalar,
    /// `i xi / |xi|`
    RieszVector,
    /// `i xi^T / |xi|`
    RieszVectorT,
    /// `xi xi^T / |xi|^2`
    RieszMatrix,
    /// `I - xi xi^T / |xi|^2`
    Complement,
}

/// Tensor shape of a physical-space kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Scalar,
    /// `x_hat * V(r)`
    Vector,
    /// `x_hat x_hat^T L(r) + (I - x_hat x_hat^T) T(r)`
    Matrix,
}

impl TensorFactor {
    pub fn shape(self) -> Shape {
        match self {
            TensorFactor::Scalar => Shape::Scalar,
            TensorFactor::RieszVector | TensorFactor::RieszVectorT => Shape::Vector,
            TensorFactor::RieszMatrix | TensorFactor::Complement => Shape::Matrix,
        }
    }
}

/// Scalar radial profile `h(k, t)` of a symbol term.
///
/// Indices into the compressible block are 0-based in the order
/// `(n+, phi+, n-, phi-)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Profile {
    /// Entry `(row, col)` of the exact semigroup `e^{tA(k)}`.
    Semigroup { row: usize, col: usize },
    /// `e^{lambda_b t} P^b_{row, col}` for a single branch `b` (0-based).
    Branch { branch: usize, row: usize, col: usize },
    /// `e^{-nu1 k^2 t}`, the incompressible heat factor.
    Transverse { nu1: f64 },
    /// `e^{-d k^2 t}`
    Heat { diffusivity: f64 },
    /// `k^{-1} e^{-k^2 t}`
    RieszFour,
    /// `amp e^{-b k^2 t} sin(c k t)`
    WaveSin { amp: f64, b: f64, c: f64 },
}

impl Profile {
    /// Whether the profile carries a `1/k` singularity at the origin.
    pub fn singular(&self) -> bool {
        match *self {
            Profile::Branch { branch, row, col } => branch >= 2 && row % 2 == 0 && col % 2 == 1,
            Profile::RieszFour => true,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialSymbol {
    pub factor: TensorFactor,
    pub profile: Profile,
    pub coeff: f64,
    /// Outer edge `eta` of the smooth low-band cutoff; `None` means no cutoff.
    pub cutoff: Option<f64>,
}

impl RadialSymbol {
    pub fn new(factor: TensorFactor, profile: Profile, coeff: f64) -> Self {
        RadialSymbol {
            factor,
            profile,
            coeff,
            cutoff: None,
        }
    }

    pub fn with_cutoff(mut self, eta: f64) -> Self {
        self.cutoff = Some(eta);
        self
    }
}

/// Smooth step: 0 for `x <= 0`, 1 for `x >= 1`, `C^inf` in between.
fn smooth_step(x: f64) -> f64 {
    let psi = |y: f64| if y <= 0.0 { 0.0 } else { (-1.0 / y).exp() };
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        let a = psi(x);
        a / (a + psi(1.0 - x))
    }
}

/// Low-band cutoff: 1 on `[0, eta/2]`, 0 beyond `eta`.
pub fn cutoff(k: f64, eta: f64) -> f64 {
    smooth_step((eta - k) / (0.5 * eta))
}

fn block_index(i: usize) -> Result<usize, ()> {
    if (1..=4).contains(&i) {
        Ok(i - 1)
    } else {
        Err(())
    }
}

fn nu1_of(eq: &EquilibriumState, row: usize) -> f64 {
    if row == 1 {
        eq.nu1_plus
    } else {
        eq.nu1_minus
    }
}

/// Tensor factor and sign for block entry `(i, j)`.
fn entry_factor(i: usize, j: usize) -> (TensorFactor, f64) {
    match (i % 2, j % 2) {
        (0, 0) => (TensorFactor::Scalar, 1.0),
        (0, 1) => (TensorFactor::RieszVectorT, 1.0),
        (1, 0) => (TensorFactor::RieszVector, -1.0),
        _ => (TensorFactor::RieszMatrix, 1.0),
    }
}

/// Branch-by-branch symbol decomposition of block entry `(i, j)`, 1-based
/// in the order `(n+, m+, n-, m-)`.
///
/// Terms with `Profile::singular()` carry the `1/k` factor of the diffusive
/// projectors; the singularities cancel only in the sum.
pub fn entry_symbol(i: usize, j: usize, eq: &EquilibriumState) -> Result<Vec<RadialSymbol>, GreensError> {
    let (a, b) = entry_indices(i, j)?;
    let (factor, sign) = entry_factor(a, b);
    let mut out: Vec<RadialSymbol> = (0..4)
        .map(|branch| {
            RadialSymbol::new(
                factor,
                Profile::Branch {
                    branch,
                    row: a,
                    col: b,
                },
                sign,
            )
        })
        .collect();
    push_transverse(&mut out, a, b, eq);
    Ok(out)
}

/// Symbol of block entry `(i, j)` with the compressible part taken as one
/// exact semigroup entry; this is what the kernels are evaluated from.
pub fn entry_symbol_exact(
    i: usize,
    j: usize,
    eq: &EquilibriumState,
) -> Result<Vec<RadialSymbol>, GreensError> {
    let (a, b) = entry_indices(i, j)?;
    let (factor, sign) = entry_factor(a, b);
    let mut out = vec![RadialSymbol::new(
        factor,
        Profile::Semigroup { row: a, col: b },
        sign,
    )];
    push_transverse(&mut out, a, b, eq);
    Ok(out)
}

fn entry_indices(i: usize, j: usize) -> Result<(usize, usize), GreensError> {
    match (block_index(i), block_index(j)) {
        (Ok(a), Ok(b)) => Ok((a, b)),
        _ => Err(GreensError::BadEntry(i, j)),
    }
}

fn push_transverse(out: &mut Vec<RadialSymbol>, a: usize, b: usize, eq: &EquilibriumState) {
    if a == b && a % 2 == 1 {
        out.push(RadialSymbol::new(
            TensorFactor::Complement,
            Profile::Transverse { nu1: nu1_of(eq, a) },
            1.0,
        ));
    }
}

/// `w_top * G_{1j} + w_bottom * G_{3j}` for a momentum column `j`.
pub fn combination_symbols(
    j: usize,
    w_top: f64,
    w_bottom: f64,
    eq: &EquilibriumState,
) -> Result<Vec<RadialSymbol>, GreensError> {
    let mut out = Vec::new();
    for (i, w) in [(1, w_top), (3, w_bottom)] {
        for mut s in entry_symbol_exact(i, j, eq)? {
            s.coeff *= w;
            out.push(s);
        }
    }
    Ok(out)
}

/// Lazily computed spectral data at one wavenumber node.
struct Node<'a> {
    k: f64,
    t: f64,
    eq: &'a EquilibriumState,
    sp: Option<SpectralPoint>,
    e: Option<Matrix4<f64>>,
}

impl<'a> Node<'a> {
    fn new(k: f64, t: f64, eq: &'a EquilibriumState) -> Self {
        Node {
            k,
            t,
            eq,
            sp: None,
            e: None,
        }
    }

    fn point(&mut self) -> Option<&SpectralPoint> {
        if self.sp.is_none() {
            self.sp = eigen_branches(self.k, self.eq, None).ok();
        }
        self.sp.as_ref()
    }

    fn semigroup(&mut self) -> Matrix4<f64> {
        if let Some(e) = self.e {
            return e;
        }
        let (k, t, eq) = (self.k, self.t, self.eq);
        let e = if k == 0.0 || t == 0.0 {
            Matrix4::identity()
        } else {
            match self.point() {
                Some(sp) if !sp.degenerate_flag => {
                    semigroup_spectral(sp, t).unwrap_or_else(|| semigroup_expm(k, t, eq))
                }
                _ => semigroup_expm(k, t, eq),
            }
        };
        self.e = Some(e);
        e
    }

    fn value(&mut self, p: &Profile) -> C64 {
        let (k, t) = (self.k, self.t);
        let re = |x: f64| C64::new(x, 0.0);
        match *p {
            Profile::Semigroup { row, col } => re(self.semigroup()[(row, col)]),
            Profile::Branch { branch, row, col } => match self.point() {
                Some(sp) => match &sp.projectors {
                    Some(proj) => (sp.lambdas[branch] * t).exp() * proj[branch][(row, col)],
                    None => C64::new(f64::NAN, f64::NAN),
                },
                None => C64::new(f64::NAN, f64::NAN),
            },
            Profile::Transverse { nu1 } => re((-nu1 * k * k * t).exp()),
            Profile::Heat { diffusivity } => re((-diffusivity * k * k * t).exp()),
            Profile::RieszFour => re((-k * k * t).exp() / k),
            Profile::WaveSin { amp, b, c } => re(amp * (-b * k * k * t).exp() * (c * k * t).sin()),
        }
    }
}

/// Smallest `-max Re lambda / k^2` over a wide logarithmic k range: the
/// slowest Gaussian decay rate of any semigroup entry.
pub fn semigroup_decay_rate(eq: &EquilibriumState) -> f64 {
    (0..=400)
        .map(|i| {
            let k = 10f64.powf(-3.0 + 6.0 * i as f64 / 400.0);
            -max_real_part(k, eq) / (k * k)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Integration plan in k for one time slice.
#[derive(Debug, Clone)]
struct KPlan {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

const GL_POINTS: usize = 6;
/// `exp(-KMAX_EXPONENT)` is the relative size of the discarded tail.
const KMAX_EXPONENT: f64 = 40.0;

fn k_plan(symbols: &[RadialSymbol], eq: &EquilibriumState, b_eff: f64, t: f64, r_max: f64) -> KPlan {
    let mut k_max: f64 = 0.0;
    let mut k_min_scale = f64::INFINITY;
    let mut osc: f64 = 0.0;
    for s in symbols {
        let b = match s.profile {
            Profile::Semigroup { .. } | Profile::Branch { .. } => {
                osc = osc.max(eq.c);
                b_eff
            }
            Profile::Transverse { nu1 } => nu1,
            Profile::Heat { diffusivity } => diffusivity,
            Profile::RieszFour => 1.0,
            Profile::WaveSin { b, c, .. } => {
                osc = osc.max(c);
                b
            }
        };
        let mut ks = (KMAX_EXPONENT / (b * t)).sqrt();
        if let Some(eta) = s.cutoff {
            ks = ks.min(eta);
        }
        k_max = k_max.max(ks);
        k_min_scale = k_min_scale.min(ks);
    }
    let phase = r_max.max(osc * t).max(1e-12);
    let dk = (0.25 * PI / phase).min(k_min_scale / 64.0);
    let panels = (k_max / dk).ceil().max(1.0) as usize;
    let h = k_max / panels as f64;
    let (x, w) = gauss_legendre(GL_POINTS);
    let mut nodes = Vec::with_capacity(panels * GL_POINTS);
    let mut weights = Vec::with_capacity(panels * GL_POINTS);
    for p in 0..panels {
        let a = p as f64 * h;
        for q in 0..GL_POINTS {
            nodes.push(a + 0.5 * h * (x[q] + 1.0));
            weights.push(0.5 * h * w[q]);
        }
    }
    KPlan { nodes, weights }
}

/// `j0(x)`, `j1(x)`, `j1(x)/x`, `j0(x) - 2 j1(x)/x`.
fn bessel_terms(x: f64) -> (f64, f64, f64, f64) {
    if x < 0.1 {
        let x2 = x * x;
        let j0 = 1.0 - x2 / 6.0 * (1.0 - x2 / 20.0 * (1.0 - x2 / 42.0 * (1.0 - x2 / 72.0)));
        let j1x = 1.0 / 3.0 - x2 / 30.0 + x2 * x2 / 840.0 - x2 * x2 * x2 / 45360.0;
        let l = 1.0 / 3.0 - x2 / 10.0 + x2 * x2 / 168.0 - x2 * x2 * x2 / 6480.0;
        (j0, j1x * x, j1x, l)
    } else {
        let (s, c) = x.sin_cos();
        let j0 = s / x;
        let j1 = (s / x - c) / x;
        (j0, j1, j1 / x, j0 - 2.0 * j1 / x)
    }
}

/// Radial amplitudes of a kernel: `long` is the scalar value, the vector
/// amplitude `V`, or the longitudinal `L`; `trans` is `T` for matrices.
#[derive(Debug, Clone, Serialize)]
pub struct RadialKernel {
    pub shape: Shape,
    pub t: f64,
    pub r: Vec<f64>,
    #[serde(skip)]
    pub long: Vec<C64>,
    #[serde(skip)]
    pub trans: Vec<C64>,
}

impl RadialKernel {
    /// Pointwise size: `|value|`, `|V|`, or the spectral norm `max(|L|, |T|)`.
    pub fn magnitude(&self, i: usize) -> f64 {
        match self.shape {
            Shape::Matrix => self.long[i].re.abs().max(self.trans[i].re.abs()),
            _ => self.long[i].re.abs(),
        }
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.r.len()).map(|i| self.magnitude(i)).collect()
    }

    /// Largest imaginary part relative to the largest magnitude.
    pub fn imag_residue(&self) -> f64 {
        let big = (0..self.r.len())
            .map(|i| self.magnitude(i))
            .fold(0.0, f64::max);
        let im = self
            .long
            .iter()
            .chain(&self.trans)
            .map(|z| z.im.abs())
            .fold(0.0, f64::max);
        if big > 0.0 {
            im / big
        } else {
            im
        }
    }
}

/// Evaluates the inverse Fourier transform of `sum coeff * profile * cutoff
/// * factor` at every radius, for one time.
pub fn radial_kernel(
    symbols: &[RadialSymbol],
    eq: &EquilibriumState,
    t: f64,
    radii: &[f64],
) -> Result<RadialKernel, GreensError> {
    let b_eff = if symbols
        .iter()
        .any(|s| matches!(s.profile, Profile::Semigroup { .. } | Profile::Branch { .. }))
    {
        semigroup_decay_rate(eq)
    } else {
        1.0
    };
    radial_kernel_with(symbols, eq, t, radii, b_eff)
}

fn radial_kernel_with(
    symbols: &[RadialSymbol],
    eq: &EquilibriumState,
    t: f64,
    radii: &[f64],
    b_eff: f64,
) -> Result<RadialKernel, GreensError> {
    let shape = match symbols.first() {
        Some(s) => s.factor.shape(),
        None => Shape::Scalar,
    };
    if symbols.iter().any(|s| s.factor.shape() != shape) {
        return Err(GreensError::MixedShapes);
    }
    let r_max = radii.iter().copied().fold(0.0, f64::max);
    let plan = k_plan(symbols, eq, b_eff, t, r_max);

    // Per node: weighted k^2 h for the main factor and for the complement.
    let weighted: Vec<(f64, C64, C64)> = plan
        .nodes
        .par_iter()
        .zip(&plan.weights)
        .map(|(&k, &w)| {
            let mut node = Node::new(k, t, eq);
            let mut main = C64::new(0.0, 0.0);
            let mut comp = C64::new(0.0, 0.0);
            for s in symbols {
                let chi = s.cutoff.map_or(1.0, |eta| cutoff(k, eta));
                if chi == 0.0 {
                    continue;
                }
                let v = node.value(&s.profile) * (s.coeff * chi);
                if s.factor == TensorFactor::Complement {
                    comp += v;
                } else {
                    main += v;
                }
            }
            let wk = w * k * k / (2.0 * PI * PI);
            (k, main * wk, comp * wk)
        })
        .collect();
    if let Some(&(k, _, _)) = weighted
        .iter()
        .find(|(_, m, c)| !(m.re.is_finite() && m.im.is_finite() && c.re.is_finite() && c.im.is_finite()))
    {
        return Err(GreensError::NonFinite(k));
    }

    let amps: Vec<(C64, C64)> = radii
        .par_iter()
        .map(|&r| {
            let mut long = C64::new(0.0, 0.0);
            let mut trans = C64::new(0.0, 0.0);
            for &(k, main, comp) in &weighted {
                let (j0, j1, j1x, l) = bessel_terms(k * r);
                match shape {
                    Shape::Scalar => long += main * j0,
                    Shape::Vector => long -= main * j1,
                    Shape::Matrix => {
                        long += comp * j0 + (main - comp) * l;
                        trans += comp * j0 + (main - comp) * j1x;
                    }
                }
            }
            (long, trans)
        })
        .collect();
    Ok(RadialKernel {
        shape,
        t,
        r: radii.to_vec(),
        long: amps.iter().map(|a| a.0).collect(),
        trans: amps.iter().map(|a| a.1).collect(),
    })
}

/// Single-radius inverse transform of one symbol; returns `(long, trans)`.
pub fn radial_inverse(
    sym: &RadialSymbol,
    eq: &EquilibriumState,
    r: f64,
    t: f64,
) -> Result<(C64, C64), GreensError> {
    let k = radial_kernel(std::slice::from_ref(sym), eq, t, &[r])?;
    Ok((k.long[0], k.trans[0]))
}

/// The oscillatory pair of the low band split into wave-operator parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PairKind {
    /// `(e^{lambda1 t} + e^{lambda2 t}) / 2`
    Plus,
    /// `(e^{lambda1 t} - e^{lambda2 t}) / (2i)`
    Minus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WaveSplit {
    pub exact: f64,
    /// Part carried by `sin(ckt)` (the `w` operator up to a factor `k`).
    pub w_part: f64,
    /// Part carried by `cos(ckt)` (the `w_t` operator).
    pub wt_part: f64,
    pub remainder: f64,
}

/// Splits the pair profile at `(k, t)` into `e^{-b1 k^2 t}` times
/// `sin(ckt)` and `cos(ckt)` parts plus a remainder.
///
/// With `lambda1 = a + i omega` and `omega = c k + k beta(k)`,
/// `cos(omega t) = cos(ckt) cos(k beta t) - sin(ckt) sin(k beta t)` and
/// `sin(omega t) = sin(ckt) cos(k beta t) + cos(ckt) sin(k beta t)`.
pub fn wave_split(
    kind: PairKind,
    k: f64,
    t: f64,
    eq: &EquilibriumState,
) -> Result<WaveSplit, GreensError> {
    if k == 0.0 {
        let one = if kind == PairKind::Plus { 1.0 } else { 0.0 };
        return Ok(WaveSplit {
            exact: one,
            w_part: 0.0,
            wt_part: one,
            remainder: 0.0,
        });
    }
    let sp = eigen_branches(k, eq, None).map_err(|_| GreensError::NotOscillatory(k))?;
    let l1 = sp.lambdas[0];
    if l1.im <= 0.0 {
        return Err(GreensError::NotOscillatory(k));
    }
    let e0 = (-eq.b1 * k * k * t).exp();
    let ckt = eq.c * k * t;
    let kbt = (l1.im - eq.c * k) * t;
    let decay = (l1.re * t).exp();
    let (exact, w_part, wt_part) = match kind {
        PairKind::Plus => (
            decay * (l1.im * t).cos(),
            -e0 * ckt.sin() * kbt.sin(),
            e0 * ckt.cos(),
        ),
        PairKind::Minus => (
            decay * (l1.im * t).sin(),
            e0 * ckt.sin(),
            e0 * ckt.cos() * kbt.sin(),
        ),
    };
    Ok(WaveSplit {
        exact,
        w_part,
        wt_part,
        remainder: exact - w_part - wt_part,
    })
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Log-log slope of `|remainder|` against `k` at fixed `t`.
pub fn wave_split_remainder_slope(
    kind: PairKind,
    t: f64,
    ks: &[f64],
    eq: &EquilibriumState,
) -> Result<f64, GreensError> {
    let mut lx = Vec::new();
    let mut ly = Vec::new();
    for &k in ks {
        let s = wave_split(kind, k, t, eq)?;
        lx.push(k.ln());
        ly.push(s.remainder.abs().ln());
    }
    Ok(fit_slope(&lx, &ly))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EnvelopeKind {
    D,
    H,
    R4,
}

/// Decay envelope `(1+t)^{-a} (1 + s^2/(1+t))^{-p}` with `s = r` for D and
/// R4, `s = r - ct` for H. For H the spatial exponent is `n` when set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Envelope {
    pub kind: EnvelopeKind,
    pub time_exp: f64,
    pub space_exp: f64,
    pub n: Option<f64>,
    pub speed: f64,
}

impl Envelope {
    pub fn d(a: f64, p: f64) -> Self {
        Envelope {
            kind: EnvelopeKind::D,
            time_exp: a,
            space_exp: p,
            n: None,
            speed: 0.0,
        }
    }

    pub fn h(a: f64, p: f64, n: Option<f64>, c: f64) -> Self {
        Envelope {
            kind: EnvelopeKind::H,
            time_exp: a,
            space_exp: p,
            n,
            speed: c,
        }
    }

    /// `D(1, 1)`, the Riesz-wave profile.
    pub fn r4() -> Self {
        Envelope {
            kind: EnvelopeKind::R4,
            time_exp: 1.0,
            space_exp: 1.0,
            n: None,
            speed: 0.0,
        }
    }

    pub fn label(&self) -> String {
        match self.kind {
            EnvelopeKind::D => format!("D({},{})", self.time_exp, self.space_exp),
            EnvelopeKind::R4 => "R4".to_string(),
            EnvelopeKind::H => format!(
                "H({},{},N={})",
                self.time_exp,
                self.space_exp,
                self.n.unwrap_or(self.space_exp)
            ),
        }
    }
}

pub fn envelope_value(env: &Envelope, r: f64, t: f64) -> f64 {
    let s = match env.kind {
        EnvelopeKind::H => r - env.speed * t,
        _ => r,
    };
    let p = match env.kind {
        EnvelopeKind::H => env.n.unwrap_or(env.space_exp),
        _ => env.space_exp,
    };
    (1.0 + t).powf(-env.time_exp) * (1.0 + s * s / (1.0 + t)).powf(-p)
}

/// Sample grid for envelope verification.
#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeGrid {
    pub ts: Vec<f64>,
    pub n_r: usize,
    pub r_max_factor: f64,
    pub n_near: usize,
    pub n_cone: usize,
}

impl Default for EnvelopeGrid {
    fn default() -> Self {
        EnvelopeGrid {
            ts: log_space(1.0, 100.0, 16),
            n_r: 256,
            r_max_factor: 4.0,
            n_near: 64,
            n_cone: 64,
        }
    }
}

pub fn log_space(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n)
        .map(|i| a * (b / a).powf(i as f64 / (n - 1) as f64))
        .collect()
}

pub fn lin_space(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n)
        .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
        .collect()
}

impl EnvelopeGrid {
    /// Sorted radii at time `t`: a uniform grid on `[0, r_max_factor c t]`
    /// plus refinements near the origin and around the sound cone.
    pub fn radii(&self, t: f64, c: f64) -> Vec<f64> {
        let w = (1.0 + t).sqrt();
        let mut r = lin_space(0.0, self.r_max_factor * c * t, self.n_r);
        r.extend(lin_space(0.0, w, self.n_near));
        r.extend(lin_space((c * t - w).max(0.0), c * t + w, self.n_cone));
        r.sort_by(|a, b| a.total_cmp(b));
        r.dedup();
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Near,
    Cone,
    Far,
}

impl Region {
    pub fn of(r: f64, t: f64, c: f64) -> Region {
        let w = (1.0 + t).sqrt();
        if r <= w {
            Region::Near
        } else if (r - c * t).abs() <= w {
            Region::Cone
        } else {
            Region::Far
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Region::Near => "near",
            Region::Cone => "cone",
            Region::Far => "far",
        }
    }
}

/// Envelope constants of one time slice, per region.
#[derive(Debug, Clone, Serialize)]
pub struct SliceReport {
    pub t: f64,
    pub c_near: f64,
    pub c_cone: f64,
    pub c_far: f64,
    pub c_all: f64,
    pub peak: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegionSummary {
    pub region: Region,
    #[serde(rename = "C_est")]
    pub c_est: f64,
    pub trend_ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeReport {
    pub entry: String,
    pub envelopes: Vec<String>,
    pub slices: Vec<SliceReport>,
    pub regions: Vec<RegionSummary>,
    #[serde(rename = "C_est")]
    pub c_est: f64,
    /// `max C(t >= 10) / max C(t < 10)`.
    pub trend_ratio: f64,
    /// Fitted exponent of `C_near ~ (1+t)^e` over `t >= 10`.
    pub growth_exponent: f64,
    pub imag_residue: f64,
    pub pass: bool,
}

const TREND_SPLIT: f64 = 10.0;
const TREND_LIMIT: f64 = 2.0;

fn trend_ratio(ts: &[f64], cs: &[f64]) -> f64 {
    let early = ts
        .iter()
        .zip(cs)
        .filter(|(t, _)| **t < TREND_SPLIT)
        .map(|(_, c)| *c)
        .fold(0.0, f64::max);
    let late = ts
        .iter()
        .zip(cs)
        .filter(|(t, _)| **t >= TREND_SPLIT)
        .map(|(_, c)| *c)
        .fold(0.0, f64::max);
    if early > 0.0 {
        late / early
    } else if late > 0.0 {
        f64::INFINITY
    } else {
        1.0
    }
}

/// Kernel values of `symbols` on the verification grid, one per time.
pub fn grid_kernels(
    symbols: &[RadialSymbol],
    eq: &EquilibriumState,
    grid: &EnvelopeGrid,
) -> Result<Vec<RadialKernel>, GreensError> {
    let b_eff = semigroup_decay_rate(eq);
    grid.ts
        .iter()
        .map(|&t| radial_kernel_with(symbols, eq, t, &grid.radii(t, eq.c), b_eff))
        .collect()
}

/// Compares precomputed kernels against a sum of envelopes.
pub fn envelope_report(
    label: &str,
    kernels: &[RadialKernel],
    envelopes: &[Envelope],
    c: f64,
) -> EnvelopeReport {
    let mut slices = Vec::new();
    let mut imag: f64 = 0.0;
    for ker in kernels {
        let t = ker.t;
        let mut c_r = [0.0f64; 3];
        let mut peak: f64 = 0.0;
        for (i, &r) in ker.r.iter().enumerate() {
            let v = ker.magnitude(i);
            peak = peak.max(v);
            let bound: f64 = envelopes.iter().map(|e| envelope_value(e, r, t)).sum();
            let ratio = v / bound;
            let slot = match Region::of(r, t, c) {
                Region::Near => 0,
                Region::Cone => 1,
                Region::Far => 2,
            };
            c_r[slot] = c_r[slot].max(ratio);
        }
        imag = imag.max(ker.imag_residue());
        slices.push(SliceReport {
            t,
            c_near: c_r[0],
            c_cone: c_r[1],
            c_far: c_r[2],
            c_all: c_r[0].max(c_r[1]).max(c_r[2]),
            peak,
        });
    }
    let ts: Vec<f64> = slices.iter().map(|s| s.t).collect();
    let pick = |f: fn(&SliceReport) -> f64| -> Vec<f64> { slices.iter().map(f).collect() };
    let regions = [
        (Region::Near, pick(|s| s.c_near)),
        (Region::Cone, pick(|s| s.c_cone)),
        (Region::Far, pick(|s| s.c_far)),
    ]
    .into_iter()
    .map(|(region, cs)| RegionSummary {
        region,
        c_est: cs.iter().copied().fold(0.0, f64::max),
        trend_ratio: trend_ratio(&ts, &cs),
    })
    .collect();
    let all = pick(|s| s.c_all);
    let near = pick(|s| s.c_near);
    let (lx, ly): (Vec<f64>, Vec<f64>) = ts
        .iter()
        .zip(&near)
        .filter(|(t, c)| **t >= TREND_SPLIT && **c > 0.0)
        .map(|(t, c)| ((1.0 + t).ln(), c.ln()))
        .unzip();
    let growth_exponent = if lx.len() >= 2 { fit_slope(&lx, &ly) } else { f64::NAN };
    let c_est = all.iter().copied().fold(0.0, f64::max);
    let trend = trend_ratio(&ts, &all);
    EnvelopeReport {
        entry: label.to_string(),
        envelopes: envelopes.iter().map(|e| e.label()).collect(),
        slices,
        regions,
        c_est,
        trend_ratio: trend,
        growth_exponent,
        imag_residue: imag,
        pass: c_est.is_finite() && trend <= TREND_LIMIT,
    }
}

/// Certifies block entry `(i, j)` against the sum of `envelopes`.
pub fn verify_entry_envelope(
    i: usize,
    j: usize,
    eq: &EquilibriumState,
    envelopes: &[Envelope],
    grid: &EnvelopeGrid,
) -> Result<EnvelopeReport, GreensError> {
    let symbols = entry_symbol_exact(i, j, eq)?;
    let kernels = grid_kernels(&symbols, eq, grid)?;
    Ok(envelope_report(
        &format!("G{i}{j}"),
        &kernels,
        envelopes,
        eq.c,
    ))
}

/// Envelopes the weighted combination `rho-^- G12 + rho-^+ G32` is
/// certified against.
pub fn cancellation_envelopes(eq: &EquilibriumState) -> Vec<Envelope> {
    vec![Envelope::d(1.5, 1.5), Envelope::h(2.0, 1.0, Some(2.0), eq.c)]
}

/// Certifies `w_top G12 + w_bottom G32` against `{D(3/2,3/2), H}`.
pub fn verify_combination(
    eq: &EquilibriumState,
    grid: &EnvelopeGrid,
    w_top: f64,
    w_bottom: f64,
) -> Result<EnvelopeReport, GreensError> {
    let symbols = combination_symbols(2, w_top, w_bottom, eq)?;
    let kernels = grid_kernels(&symbols, eq, grid)?;
    Ok(envelope_report(
        &format!("{w_top:.6}*G12+{w_bottom:.6}*G32"),
        &kernels,
        &cancellation_envelopes(eq),
        eq.c,
    ))
}

/// The cancelling combination with weights `(rho_bar_minus, rho_bar_plus)`.
pub fn verify_cancellation(
    eq: &EquilibriumState,
    grid: &EnvelopeGrid,
) -> Result<EnvelopeReport, GreensError> {
    verify_combination(eq, grid, eq.rho_bar_minus, eq.rho_bar_plus)
}

/// Maximum absolute deviation of the scalar heat-kernel transform from
/// `(4 pi t)^{-3/2} e^{-r^2/(4t)}`.
pub fn heat_kernel_regression(ts: &[f64], radii: &[f64], eq: &EquilibriumState) -> Result<f64, GreensError> {
    let sym = RadialSymbol::new(TensorFactor::Scalar, Profile::Heat { diffusivity: 1.0 }, 1.0);
    let mut worst: f64 = 0.0;
    for &t in ts {
        let ker = radial_kernel(&[sym], eq, t, radii)?;
        for (i, &r) in radii.iter().enumerate() {
            let exact = (4.0 * PI * t).powf(-1.5) * (-r * r / (4.0 * t)).exp();
            worst = worst.max((ker.long[i].re - exact).abs());
        }
    }
    Ok(worst)
}

/// One agreement check between the radial reduction and a 3D FFT.
#[derive(Debug, Clone, Serialize)]
pub struct FftCheck {
    pub label: String,
    pub t: f64,
    pub r_at_max: f64,
    pub radial_at_max: f64,
    pub fft_at_max: f64,
    /// Relative disagreement at the kernel maximum.
    pub rel_err: f64,
    /// Largest disagreement on the axis relative to the maximum.
    pub axis_err: f64,
}

/// Setup for the FFT cross-check.
#[derive(Debug, Clone, Copy)]
pub struct FftOracle {
    pub n: usize,
    pub box_len: f64,
    pub eta: f64,
}

impl Default for FftOracle {
    fn default() -> Self {
        FftOracle {
            n: 128,
            box_len: 40.0,
            eta: 8.0,
        }
    }
}

impl FftOracle {
    /// Samples `G_{ij}` along the positive x axis by a full 3D inverse FFT of
    /// its band-limited symbol; vector entries report the x component.
    fn axis_values(&self, i: usize, j: usize, t: f64, eq: &EquilibriumState) -> Result<Vec<f64>, GreensError> {
        let (a, b) = entry_indices(i, j)?;
        let (factor, sign) = entry_factor(a, b);
        if factor.shape() == Shape::Matrix {
            return Err(GreensError::BadEntry(i, j));
        }
        let n = self.n;
        let dk = 2.0 * PI / self.box_len;
        let half = (n / 2) as i64;
        let m_max = (3 * half * half) as usize;
        // The profile depends on |k|^2 only, which is an integer multiple of dk^2.
        let prof: Vec<f64> = (0..=m_max)
            .into_par_iter()
            .map(|m| {
                let k = dk * (m as f64).sqrt();
                let chi = cutoff(k, self.eta);
                if chi == 0.0 {
                    return 0.0;
                }
                let mut node = Node::new(k, t, eq);
                chi * sign * node.value(&Profile::Semigroup { row: a, col: b }).re
            })
            .collect();
        if let Some(m) = prof.iter().position(|v| !v.is_finite()) {
            return Err(GreensError::NonFinite(dk * (m as f64).sqrt()));
        }
        let mut data = vec![C64::new(0.0, 0.0); n * n * n];
        data.par_chunks_mut(n * n).enumerate().for_each(|(ii, slab)| {
            let kx = wave_index(ii, n);
            for jj in 0..n {
                let ky = wave_index(jj, n);
                for ll in 0..n {
                    let kz = wave_index(ll, n);
                    let m = (kx * kx + ky * ky + kz * kz) as usize;
                    if m > m_max {
                        continue;
                    }
                    let h = prof[m];
                    slab[jj * n + ll] = match factor {
                        TensorFactor::Scalar => C64::new(h, 0.0),
                        _ => {
                            if m == 0 {
                                C64::new(0.0, 0.0)
                            } else {
                                // i k_x / |k| times h.
                                C64::new(0.0, h * kx as f64 / (m as f64).sqrt())
                            }
                        }
                    };
                }
            }
        });
        Fft3::new(n).inverse_unnormalized(&mut data);
        let scale = 1.0 / self.box_len.powi(3);
        Ok((0..n / 2).map(|ii| data[ii * n * n].re * scale).collect())
    }

    pub fn check(&self, i: usize, j: usize, t: f64, eq: &EquilibriumState) -> Result<FftCheck, GreensError> {
        let fft = self.axis_values(i, j, t, eq)?;
        let dx = self.box_len / self.n as f64;
        let radii: Vec<f64> = (0..fft.len()).map(|q| q as f64 * dx).collect();
        let symbols: Vec<RadialSymbol> = entry_symbol_exact(i, j, eq)?
            .into_iter()
            .map(|s| s.with_cutoff(self.eta))
            .collect();
        let ker = radial_kernel(&symbols, eq, t, &radii)?;
        let rad: Vec<f64> = ker.long.iter().map(|z| z.re).collect();
        let (imax, _) = rad
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |acc, (q, v)| if v.abs() > acc.1 { (q, v.abs()) } else { acc });
        let peak = rad[imax].abs();
        let axis_err = rad
            .iter()
            .zip(&fft)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
            / peak;
        Ok(FftCheck {
            label: format!("G{i}{j}"),
            t,
            r_at_max: radii[imax],
            radial_at_max: rad[imax],
            fft_at_max: fft[imax],
            rel_err: (rad[imax] - fft[imax]).abs() / peak,
            axis_err,
        })
    }

    /// The standard spot checks: `G11` at two times and `G21` at one.
    pub fn spot_checks(&self, eq: &EquilibriumState) -> Result<Vec<FftCheck>, GreensError> {
        Ok(vec![
            self.check(1, 1, 1.0, eq)?,
            self.check(1, 1, 3.0, eq)?,
            self.check(2, 1, 2.0, eq)?,
        ])
    }
}

/// Decay of the Riesz-wave kernel `chi(k) k^{-1} e^{-k^2 t} i xi / |xi|`.
#[derive(Debug, Clone, Serialize)]
pub struct RieszFourReport {
    pub ts: Vec<f64>,
    pub max_amplitude: Vec<f64>,
    /// Fitted exponent of the maximum in `(1+t)`.
    pub slope: f64,
    /// Per-time maximum of `|kernel| / D(1,1)`.
    pub profile_ratio: Vec<f64>,
    pub ratio_trend: f64,
}

pub fn riesz_four_decay(ts: &[f64], eta: f64, eq: &EquilibriumState) -> Result<RieszFourReport, GreensError> {
    let sym = RadialSymbol::new(TensorFactor::RieszVector, Profile::RieszFour, 1.0).with_cutoff(eta);
    let env = Envelope::r4();
    let mut maxes = Vec::new();
    let mut ratios = Vec::new();
    for &t in ts {
        let w = (1.0 + t).sqrt();
        let radii = lin_space(0.0, 10.0 * w, 401);
        let ker = radial_kernel(&[sym], eq, t, &radii)?;
        let mut m: f64 = 0.0;
        let mut q: f64 = 0.0;
        for (i, &r) in radii.iter().enumerate() {
            let v = ker.magnitude(i);
            m = m.max(v);
            q = q.max(v / envelope_value(&env, r, t));
        }
        maxes.push(m);
        ratios.push(q);
    }
    let lx: Vec<f64> = ts.iter().map(|t| (1.0 + t).ln()).collect();
    let ly: Vec<f64> = maxes.iter().map(|m| m.ln()).collect();
    let qmax = ratios.iter().copied().fold(0.0, f64::max);
    let qmin = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(RieszFourReport {
        ts: ts.to_vec(),
        max_amplitude: maxes,
        slope: fit_slope(&lx, &ly),
        profile_ratio: ratios,
        ratio_trend: qmax / qmin,
    })
}

/// Position of the radial maximum of the sin-wave component of `G12`,
/// `-(beta1/c^3) e^{-b1 k^2 t} sin(ckt) i xi^T / |xi|`.
pub fn h_wave_peak(t: f64, eq: &EquilibriumState) -> Result<f64, GreensError> {
    let sym = RadialSymbol::new(
        TensorFactor::RieszVectorT,
        Profile::WaveSin {
            amp: -eq.beta1 / eq.c.powi(3),
            b: eq.b1,
            c: eq.c,
        },
        1.0,
    );
    let radii = lin_space(0.0, 2.0 * eq.c * t, 2001);
    let ker = radial_kernel(&[sym], eq, t, &radii)?;
    let (imax, _) = (0..radii.len())
        .map(|i| (i, ker.magnitude(i)))
        .fold((0, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
    Ok(radii[imax])
}

/// Smallest leading high-frequency decay rate `|Re lambda| / k^2`.
pub fn high_freq_leading_rate(eq: &EquilibriumState) -> f64 {
    let rate = |nu: f64, sigma: f64| {
        let d = nu * nu - 4.0 * sigma;
        if d >= 0.0 {
            0.5 * (nu - d.sqrt())
        } else {
            0.5 * nu
        }
    };
    rate(eq.nu_plus, eq.sigma_plus).min(rate(eq.nu_minus, eq.sigma_minus))
}

/// Fitted exponential decay rate in `t` of `int_K^inf |E_{row,col}|^2 k^2 dk`.
pub fn high_freq_mass_rate(
    row: usize,
    col: usize,
    k_cut: f64,
    ts: &[f64],
    eq: &EquilibriumState,
) -> Result<f64, GreensError> {
    let b = high_freq_leading_rate(eq);
    let mut ly = Vec::new();
    for &t in ts {
        let k_hi = k_cut + (KMAX_EXPONENT / (2.0 * b * t)).sqrt();
        let mass = integrate(
            |k| {
                let e = Node::new(k, t, eq).semigroup();
                e[(row, col)].powi(2) * k * k
            },
            k_cut,
            k_hi,
            &[],
            Tol::new(0.0, 1e-8),
        )
        .map_err(|e| GreensError::Quadrature(e.to_string()))?;
        ly.push(mass.ln());
    }
    Ok(-fit_slope(ts, &ly))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{solve_equilibrium, ModelParams};

    fn sym() -> EquilibriumState {
        solve_equilibrium(&ModelParams::symmetric()).unwrap()
    }

    #[test]
    fn cutoff_shape() {
        assert_eq!(cutoff(0.0, 0.1), 1.0);
        assert_eq!(cutoff(0.05, 0.1), 1.0);
        assert_eq!(cutoff(0.1, 0.1), 0.0);
        assert_eq!(cutoff(0.2, 0.1), 0.0);
        let mid = cutoff(0.075, 0.1);
        assert!((mid - 0.5).abs() < 1e-12);
        let mut prev = 1.0;
        for i in 0..100 {
            let v = cutoff(0.05 + 0.0005 * i as f64, 0.1);
            assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn bessel_series_matches_closed_form() {
        for x in [0.03, 0.07, 0.0999] {
            let (j0, j1, j1x, l) = bessel_terms(x);
            let (sn, cs) = f64::sin_cos(x);
            let e0 = sn / x;
            let e1 = (sn / x - cs) / x;
            assert!((j0 - e0).abs() < 1e-15);
            // The closed form of j1 loses digits to cancellation at small x.
            assert!((j1 - e1).abs() < 1e-13);
            assert!((j1x - e1 / x).abs() < 1e-12);
            assert!((l - (e0 - 2.0 * e1 / x)).abs() < 1e-12);
        }
    }

    #[test]
    fn heat_kernel_values() {
        let eq = sym();
        let s = RadialSymbol::new(TensorFactor::Scalar, Profile::Heat { diffusivity: 1.0 }, 1.0);
        let (v0, _) = radial_inverse(&s, &eq, 0.0, 1.0).unwrap();
        assert!((v0.re - 0.0224489).abs() < 1e-6);
        let (v2, _) = radial_inverse(&s, &eq, 2.0, 1.0).unwrap();
        assert!((v2.re - 0.0082590).abs() < 1e-6);
    }

    #[test]
    fn riesz_matrix_trace_is_scalar() {
        // L + 2T of xi xi^T/k^2 h equals the scalar transform of h.
        let eq = sym();
        let h = Profile::Heat { diffusivity: 0.7 };
        let radii = [0.0, 0.5, 1.3, 4.0];
        let m = radial_kernel(&[RadialSymbol::new(TensorFactor::RieszMatrix, h, 1.0)], &eq, 1.5, &radii).unwrap();
        let s = radial_kernel(&[RadialSymbol::new(TensorFactor::Scalar, h, 1.0)], &eq, 1.5, &radii).unwrap();
        for i in 0..radii.len() {
            let tr = m.long[i].re + 2.0 * m.trans[i].re;
            assert!((tr - s.long[i].re).abs() < 1e-12, "{i}");
        }
        // Complement: L_c + 2 T_c = 2 * scalar.
        let c = radial_kernel(&[RadialSymbol::new(TensorFactor::Complement, h, 1.0)], &eq, 1.5, &radii).unwrap();
        for i in 0..radii.len() {
            let tr = c.long[i].re + 2.0 * c.trans[i].re;
            assert!((tr - 2.0 * s.long[i].re).abs() < 1e-12);
        }
    }

    #[test]
    fn riesz_four_is_gradient_of_potential() {
        // k^{-1} e^{-k^2 t} i xi/|xi| is the gradient of the transform of
        // e^{-k^2 t}/k^2, which is erf(r / (2 sqrt t)) / (4 pi r).
        use statrs::function::erf::erf;
        let eq = sym();
        let t: f64 = 2.0;
        let pot = |r: f64| erf(r / (2.0 * t.sqrt())) / (4.0 * PI * r);
        let s = RadialSymbol::new(TensorFactor::RieszVector, Profile::RieszFour, 1.0);
        for r in [0.5, 1.7, 6.0] {
            let (v, _) = radial_inverse(&s, &eq, r, t).unwrap();
            let d = (pot(r + 1e-5) - pot(r - 1e-5)) / 2e-5;
            assert!((v.re - d).abs() < 1e-8, "r={r}: {} vs {d}", v.re);
        }
    }

    #[test]
    fn entry_symbols_shapes() {
        let eq = sym();
        let g12 = entry_symbol(1, 2, &eq).unwrap();
        assert!(g12.iter().any(|s| s.profile.singular()));
        assert!(g12.iter().all(|s| s.factor == TensorFactor::RieszVectorT));
        let g22 = entry_symbol(2, 2, &eq).unwrap();
        assert!(g22.iter().any(|s| s.factor == TensorFactor::Complement
            && s.profile == Profile::Transverse { nu1: eq.nu1_plus }));
        let g24 = entry_symbol(2, 4, &eq).unwrap();
        assert!(g24.iter().all(|s| s.factor == TensorFactor::RieszMatrix));
        assert!(entry_symbol(0, 2, &eq).is_err());
        assert!(entry_symbol(1, 5, &eq).is_err());
    }

    #[test]
    fn branch_terms_sum_to_semigroup() {
        let eq = sym();
        for (i, j) in [(1, 1), (1, 2), (2, 1), (3, 2), (4, 4)] {
            for (k, t) in [(0.3, 0.0), (0.05, 2.0), (1.5, 0.7)] {
                let mut node = Node::new(k, t, &eq);
                let total: C64 = entry_symbol(i, j, &eq)
                    .unwrap()
                    .iter()
                    .filter(|s| matches!(s.profile, Profile::Branch { .. }))
                    .map(|s| node.value(&s.profile))
                    .sum();
                let (a, b) = entry_indices(i, j).unwrap();
                let exact = semigroup_expm(k, t, &eq)[(a, b)];
                assert!((total - exact).norm() < 1e-10, "({i},{j}) k={k} t={t}");
                if t == 0.0 {
                    let id = if a == b { 1.0 } else { 0.0 };
                    assert!((total.re - id).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn wave_split_identities() {
        let eq = sym();
        let s = wave_split(PairKind::Plus, 0.05, 0.0, &eq).unwrap();
        assert_eq!(s.w_part, 0.0);
        assert!((s.wt_part - 1.0).abs() < 1e-15);
        assert!(s.remainder.abs() < 1e-15);
        for kind in [PairKind::Plus, PairKind::Minus] {
            let s = wave_split(kind, 0.05, 10.0, &eq).unwrap();
            assert!((s.w_part + s.wt_part + s.remainder - s.exact).abs() < 1e-14);
        }
        let ks = log_space(0.01, 0.1, 10);
        let slope = wave_split_remainder_slope(PairKind::Plus, 10.0, &ks, &eq).unwrap();
        assert!(slope > 0.9, "{slope}");
    }

    #[test]
    fn envelope_values() {
        assert_eq!(envelope_value(&Envelope::d(1.5, 1.5), 0.0, 0.0), 1.0);
        let t: f64 = 3.0;
        let v = envelope_value(&Envelope::r4(), (1.0 + t).sqrt(), t);
        assert!((v - 0.125).abs() < 1e-15);
        let h = Envelope::h(2.0, 1.0, Some(2.0), 2.0);
        assert!((envelope_value(&h, 2.0 * 40.0, 40.0) - 41f64.powi(-2)).abs() < 1e-18);
    }

    #[test]
    fn regions() {
        assert_eq!(Region::of(1.0, 3.0, 2.0), Region::Near);
        assert_eq!(Region::of(60.0, 30.0, 2.0), Region::Cone);
        assert_eq!(Region::of(30.0, 30.0, 2.0), Region::Far);
    }
}
