//! One-dimensional quadrature: globally adaptive Gauss-Kronrod (7/15) and
//! Gauss-Legendre node tables.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadError {
    #[error("adaptive quadrature did not converge: estimate {value:e}, error {error:e}")]
    NoConvergence { value: f64, error: f64 },
    #[error("non-finite integrand value at x = {0}")]
    NonFinite(f64),
}

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// Single 15-point Kronrod panel: (integral, error estimate).
pub fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut rk = fc * WGK[7];
    let mut rg = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        rk += WGK[j] * s;
        if j % 2 == 1 {
            rg += WG[j / 2] * s;
        }
    }
    (rk * h, ((rk - rg) * h).abs())
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    val: f64,
    err: f64,
}

impl PartialEq for Panel {
    fn eq(&self, o: &Self) -> bool {
        self.err == o.err
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Panel {
    fn cmp(&self, o: &Self) -> Ordering {
        self.err.total_cmp(&o.err)
    }
}

/// Tolerances and limits for [`integrate`].
#[derive(Debug, Clone, Copy)]
pub struct Tol {
    pub abs: f64,
    pub rel: f64,
    pub max_panels: usize,
}

impl Tol {
    pub fn new(abs: f64, rel: f64) -> Self {
        Tol {
            abs,
            rel,
            max_panels: 4000,
        }
    }
}

/// Globally adaptive integration over `[a, b]` with interior breakpoints.
///
/// Breakpoints outside `(a, b)` are ignored. The panel with the largest error
/// is bisected until the summed error meets `max(abs, rel * |I|)`.
pub fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    tol: Tol,
) -> Result<f64, QuadError> {
    if a == b {
        return Ok(0.0);
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let mut pts: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|x| x.is_finite() && *x > lo && *x < hi)
        .collect();
    pts.push(lo);
    pts.push(hi);
    pts.sort_by(|x, y| x.total_cmp(y));
    pts.dedup_by(|x, y| (*x - *y).abs() <= 1e-14 * (hi - lo));

    let mut heap = BinaryHeap::new();
    let (mut total, mut total_err) = (0.0, 0.0);
    for w in pts.windows(2) {
        let (val, err) = gk15(&mut f, w[0], w[1]);
        total += val;
        total_err += err;
        heap.push(Panel {
            a: w[0],
            b: w[1],
            val,
            err,
        });
    }
    if !total.is_finite() {
        return Err(QuadError::NonFinite(lo));
    }
    while total_err > tol.abs.max(tol.rel * total.abs()) {
        if heap.len() >= tol.max_panels {
            return Err(QuadError::NoConvergence {
                value: total,
                error: total_err,
            });
        }
        let p = heap.pop().expect("non-empty heap");
        let m = 0.5 * (p.a + p.b);
        if m <= p.a || m >= p.b {
            // Cannot split further; accept the panel as it is.
            heap.push(Panel { err: 0.0, ..p });
            total_err -= p.err;
            continue;
        }
        let (v1, e1) = gk15(&mut f, p.a, m);
        let (v2, e2) = gk15(&mut f, m, p.b);
        total += v1 + v2 - p.val;
        total_err += e1 + e2 - p.err;
        if !total.is_finite() {
            return Err(QuadError::NonFinite(m));
        }
        heap.push(Panel {
            a: p.a,
            b: m,
            val: v1,
            err: e1,
        });
        heap.push(Panel {
            a: m,
            b: p.b,
            val: v2,
            err: e2,
        });
    }
    // Re-sum to shed accumulated cancellation from the running updates.
    let sum: f64 = heap.iter().map(|p| p.val).sum();
    Ok(sign * sum)
}

/// Integration over `[a, inf)` through the map `x = a + s u / (1 - u)`.
pub fn integrate_to_inf<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    scale: f64,
    tol: Tol,
) -> Result<f64, QuadError> {
    integrate(
        |u| {
            if u >= 1.0 {
                return 0.0;
            }
            let one = 1.0 - u;
            let x = a + scale * u / one;
            let v = f(x) * scale / (one * one);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        },
        0.0,
        1.0,
        &[],
        tol,
    )
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * z * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let v = integrate(|x| x * x * x + 1.0, 0.0, 2.0, &[], Tol::new(1e-14, 1e-14)).unwrap();
        assert!((v - 6.0).abs() < 1e-13);
    }

    #[test]
    fn peaked_integrand_with_break() {
        let v = integrate(
            |x| 1.0 / (1.0 + 1e4 * (x - 0.3) * (x - 0.3)),
            0.0,
            1.0,
            &[0.3],
            Tol::new(1e-13, 1e-12),
        )
        .unwrap();
        let exact = ((0.7f64 * 100.0).atan() + (0.3f64 * 100.0).atan()) / 100.0;
        assert!((v - exact).abs() < 1e-11);
    }

    #[test]
    fn semi_infinite() {
        let v = integrate_to_inf(|x| (-x).exp(), 0.0, 1.0, Tol::new(1e-14, 1e-13)).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
        let v = integrate_to_inf(|x| 1.0 / (1.0 + x * x), 0.0, 1.0, Tol::new(1e-14, 1e-12)).unwrap();
        assert!((v - std::f64::consts::FRAC_PI_2).abs() < 1e-11);
    }

    #[test]
    fn gauss_legendre_moments() {
        for n in [1, 2, 5, 8, 16] {
            let (x, w) = gauss_legendre(n);
            let s: f64 = w.iter().sum();
            assert!((s - 2.0).abs() < 1e-14);
            let deg = 2 * n - 1;
            let m: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32 - 1)).sum();
            let exact = if (deg - 1) % 2 == 0 { 2.0 / deg as f64 } else { 0.0 };
            assert!((m - exact).abs() < 1e-13, "n={n}");
        }
    }
}
