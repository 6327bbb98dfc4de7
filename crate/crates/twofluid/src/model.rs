//! Physical parameters, the equal-pressure equilibrium and the coefficients
//! of the linearized two-fluid system.
//!
//! The pressure law is `P = A (rho)^gamma` for each phase. Fraction densities
//! `R = alpha * rho` are the conserved variables; at equilibrium `R = 1` for
//! both phases, so the volume fractions are `1 / rho_bar`.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("{0}")]
    Constraint(String),
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("{0} did not converge after {1} iterations")]
    NoConvergence(&'static str, usize),
    #[error("bracket failure: {0}")]
    Bracket(String),
    #[error("admissibility violated: {0}")]
    Admissibility(String),
}

/// Raw physical constants of the two-fluid model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelParams {
    pub mu_plus: f64,
    pub mu_minus: f64,
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    pub sigma_plus: f64,
    pub sigma_minus: f64,
    pub a_plus: f64,
    pub a_minus: f64,
    pub gamma_plus: f64,
    pub gamma_minus: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self::symmetric()
    }
}

impl ModelParams {
    /// Identical phases: `A = 1`, `gamma = 2`, `mu = 1`, `lambda = 0`, `sigma = 0.01`.
    pub fn symmetric() -> Self {
        ModelParams {
            mu_plus: 1.0,
            mu_minus: 1.0,
            lambda_plus: 0.0,
            lambda_minus: 0.0,
            sigma_plus: 0.01,
            sigma_minus: 0.01,
            a_plus: 1.0,
            a_minus: 1.0,
            gamma_plus: 2.0,
            gamma_minus: 2.0,
        }
    }

    /// Symmetric defaults with `A- = 2`; the equilibrium is `rho+ = 1 + sqrt(2)`.
    pub fn asymmetric() -> Self {
        ModelParams {
            a_minus: 2.0,
            ..Self::symmetric()
        }
    }

    /// Parses `key = value` lines. Blank lines and `#` comments are ignored;
    /// keys that are not given keep their symmetric default.
    pub fn from_config_str(text: &str) -> Result<Self, ModelError> {
        let mut p = Self::symmetric();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| ModelError::Config { line: idx + 1, msg };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            let key = key.trim();
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| err(format!("`{}` is not a number", value.trim())))?;
            let slot = match key {
                "mu_plus" => &mut p.mu_plus,
                "mu_minus" => &mut p.mu_minus,
                "lambda_plus" => &mut p.lambda_plus,
                "lambda_minus" => &mut p.lambda_minus,
                "sigma_plus" => &mut p.sigma_plus,
                "sigma_minus" => &mut p.sigma_minus,
                "a_plus" => &mut p.a_plus,
                "a_minus" => &mut p.a_minus,
                "gamma_plus" => &mut p.gamma_plus,
                "gamma_minus" => &mut p.gamma_minus,
                other => return Err(err(format!("unknown key `{other}`"))),
            };
            *slot = value;
        }
        Ok(p)
    }

    pub fn to_config_string(&self) -> String {
        format!(
            "mu_plus = {}\nmu_minus = {}\nlambda_plus = {}\nlambda_minus = {}\n\
             sigma_plus = {}\nsigma_minus = {}\na_plus = {}\na_minus = {}\n\
             gamma_plus = {}\ngamma_minus = {}\n",
            self.mu_plus,
            self.mu_minus,
            self.lambda_plus,
            self.lambda_minus,
            self.sigma_plus,
            self.sigma_minus,
            self.a_plus,
            self.a_minus,
            self.gamma_plus,
            self.gamma_minus
        )
    }

    pub fn pressure_plus(&self, rho: f64) -> f64 {
        self.a_plus * rho.powf(self.gamma_plus)
    }

    pub fn pressure_minus(&self, rho: f64) -> f64 {
        self.a_minus * rho.powf(self.gamma_minus)
    }

    /// dP/drho for the plus phase.
    pub fn sound2_plus(&self, rho: f64) -> f64 {
        self.gamma_plus * self.a_plus * rho.powf(self.gamma_plus - 1.0)
    }

    pub fn sound2_minus(&self, rho: f64) -> f64 {
        self.gamma_minus * self.a_minus * rho.powf(self.gamma_minus - 1.0)
    }
}

/// Checks positivity and parabolicity; returns the parameters unchanged.
pub fn validate_params(p: ModelParams) -> Result<ModelParams, ModelError> {
    let fields = [
        ("mu_plus", p.mu_plus),
        ("mu_minus", p.mu_minus),
        ("lambda_plus", p.lambda_plus),
        ("lambda_minus", p.lambda_minus),
        ("sigma_plus", p.sigma_plus),
        ("sigma_minus", p.sigma_minus),
        ("a_plus", p.a_plus),
        ("a_minus", p.a_minus),
        ("gamma_plus", p.gamma_plus),
        ("gamma_minus", p.gamma_minus),
    ];
    for (name, v) in fields {
        if !v.is_finite() {
            return Err(ModelError::Constraint(format!("{name} must be finite")));
        }
    }
    for (name, v) in [
        ("mu_plus", p.mu_plus),
        ("mu_minus", p.mu_minus),
        ("sigma_plus", p.sigma_plus),
        ("sigma_minus", p.sigma_minus),
        ("a_plus", p.a_plus),
        ("a_minus", p.a_minus),
    ] {
        if v <= 0.0 {
            return Err(ModelError::Constraint(format!("{name} must be positive")));
        }
    }
    for (name, v) in [("gamma_plus", p.gamma_plus), ("gamma_minus", p.gamma_minus)] {
        if v <= 1.0 {
            return Err(ModelError::Constraint(format!("{name} must exceed 1")));
        }
    }
    if 2.0 * p.mu_plus + 3.0 * p.lambda_plus < 0.0 {
        return Err(ModelError::Constraint(
            "2mu+3lambda < 0 for the plus phase".into(),
        ));
    }
    if 2.0 * p.mu_minus + 3.0 * p.lambda_minus < 0.0 {
        return Err(ModelError::Constraint(
            "2mu+3lambda < 0 for the minus phase".into(),
        ));
    }
    Ok(p)
}

/// Background state and every coefficient of the linearized system.
///
/// Computed once by [`solve_equilibrium`]; downstream code only reads it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EquilibriumState {
    pub rho_bar_plus: f64,
    pub rho_bar_minus: f64,
    pub alpha_bar_plus: f64,
    pub alpha_bar_minus: f64,
    pub s2_plus: f64,
    pub s2_minus: f64,
    #[serde(rename = "C2")]
    pub c2: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub beta4: f64,
    pub nu1_plus: f64,
    pub nu1_minus: f64,
    pub nu2_plus: f64,
    pub nu2_minus: f64,
    pub nu_plus: f64,
    pub nu_minus: f64,
    pub sigma_plus: f64,
    pub sigma_minus: f64,
    pub c: f64,
    pub beta_weight_plus: f64,
    pub beta_weight_minus: f64,
    pub b1: f64,
    #[serde(rename = "R_disc")]
    pub r_disc: Option<f64>,
    /// Real parts of the quadratic rates of the diffusive pair.
    pub lam3_tilde: f64,
    pub lam4_tilde: f64,
    /// Imaginary part of the diffusive rates when the discriminant is negative.
    pub lam_tilde_imag: f64,
}

impl EquilibriumState {
    pub fn diffusive_pair_complex(&self) -> bool {
        self.r_disc.is_none()
    }

    /// The discriminant of the diffusive pair, which may be negative.
    pub fn disc(&self) -> f64 {
        let s = self.beta1 * self.nu_minus + self.beta4 * self.nu_plus;
        s * s
            - 4.0
                * (self.beta1 + self.beta4)
                * (self.beta1 * self.sigma_minus + self.beta4 * self.sigma_plus)
    }
}

impl fmt::Display for EquilibriumState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "rho_bar = ({:.12}, {:.12}), C2 = {:.12}, c = {:.12}",
            self.rho_bar_plus, self.rho_bar_minus, self.c2, self.c
        )
    }
}

const MAX_ITER: usize = 200;

/// Safeguarded Newton on an increasing function over `(lo, +inf)`.
///
/// The upper end of the bracket is grown geometrically until the sign changes.
fn monotone_root<F>(f: F, lo: f64, guess: f64, scale: f64) -> Result<f64, ModelError>
where
    F: Fn(f64) -> (f64, f64),
{
    let mut a = lo;
    let (fa, _) = f(a);
    if !(fa < 0.0) {
        return Err(ModelError::Bracket(format!(
            "function not negative at lower end {a}"
        )));
    }
    let mut b = (2.0 * lo).max(lo + 1.0);
    let mut grow = 0;
    while f(b).0 <= 0.0 {
        b = lo + 2.0 * (b - lo);
        grow += 1;
        if grow > 200 || !b.is_finite() {
            return Err(ModelError::Bracket("no sign change found".into()));
        }
    }
    let mut x = if guess > a && guess < b {
        guess
    } else {
        0.5 * (a + b)
    };
    for _ in 0..MAX_ITER {
        let (fx, dfx) = f(x);
        if fx.abs() <= 1e-15 * scale {
            return Ok(x);
        }
        if fx < 0.0 {
            a = x;
        } else {
            b = x;
        }
        let mut next = x - fx / dfx;
        if !(next > a && next < b) || !next.is_finite() {
            next = 0.5 * (a + b);
        }
        if (next - x).abs() <= 4.0 * f64::EPSILON * x.abs() {
            return Ok(next);
        }
        x = next;
    }
    Err(ModelError::NoConvergence("monotone Newton", MAX_ITER))
}

/// `C^2` of the equal-pressure closure at given phase densities and fraction.
pub fn c2_local(p: &ModelParams, rho_plus: f64, rho_minus: f64, alpha_plus: f64) -> f64 {
    let s2p = p.sound2_plus(rho_plus);
    let s2m = p.sound2_minus(rho_minus);
    let alpha_minus = 1.0 - alpha_plus;
    s2p * s2m / (alpha_minus * rho_plus * s2p + alpha_plus * rho_minus * s2m)
}

/// Solves the equal-pressure equilibrium and fills every derived coefficient.
pub fn solve_equilibrium(p: &ModelParams) -> Result<EquilibriumState, ModelError> {
    let p = validate_params(*p)?;
    let phi = |x: f64| {
        let y = x / (x - 1.0);
        let val = p.pressure_plus(x) - p.pressure_minus(y);
        let dy = -1.0 / ((x - 1.0) * (x - 1.0));
        let der = p.sound2_plus(x) - p.sound2_minus(y) * dy;
        (val, der)
    };
    let lo = 1.0 + 1e-9;
    let scale = p.pressure_plus(2.0).max(p.pressure_minus(2.0));
    let rp = monotone_root(phi, lo, 2.0, scale)?;
    let rm = rp / (rp - 1.0);
    Ok(derive_coefficients(&p, rp, rm))
}

fn derive_coefficients(p: &ModelParams, rp: f64, rm: f64) -> EquilibriumState {
    let ap = 1.0 / rp;
    let am = 1.0 - ap;
    let s2p = p.sound2_plus(rp);
    let s2m = p.sound2_minus(rm);
    let c2 = c2_local(p, rp, rm, ap);
    let beta1 = c2 * rm / rp;
    let beta2 = c2;
    let beta3 = c2;
    let beta4 = c2 * rp / rm;
    let nu1p = p.mu_plus / rp;
    let nu1m = p.mu_minus / rm;
    let nu2p = (p.mu_plus + p.lambda_plus) / rp;
    let nu2m = (p.mu_minus + p.lambda_minus) / rm;
    let nup = nu1p + nu2p;
    let num = nu1m + nu2m;
    let bsum = beta1 + beta4;
    let b1 = (beta1 * nup + beta4 * num) / (2.0 * bsum);
    let s = beta1 * num + beta4 * nup;
    let disc = s * s - 4.0 * bsum * (beta1 * p.sigma_minus + beta4 * p.sigma_plus);
    let (r_disc, lam3, lam4, imag) = if disc >= 0.0 {
        let r = disc.sqrt();
        (Some(r), (-s + r) / (2.0 * bsum), (-s - r) / (2.0 * bsum), 0.0)
    } else {
        let r = (-disc).sqrt();
        (None, -s / (2.0 * bsum), -s / (2.0 * bsum), r / (2.0 * bsum))
    };
    EquilibriumState {
        rho_bar_plus: rp,
        rho_bar_minus: rm,
        alpha_bar_plus: ap,
        alpha_bar_minus: am,
        s2_plus: s2p,
        s2_minus: s2m,
        c2,
        beta1,
        beta2,
        beta3,
        beta4,
        nu1_plus: nu1p,
        nu1_minus: nu1m,
        nu2_plus: nu2p,
        nu2_minus: nu2m,
        nu_plus: nup,
        nu_minus: num,
        sigma_plus: p.sigma_plus,
        sigma_minus: p.sigma_minus,
        c: bsum.sqrt(),
        beta_weight_plus: (rm / rp).sqrt(),
        beta_weight_minus: (rp / rm).sqrt(),
        b1,
        r_disc,
        lam3_tilde: lam3,
        lam4_tilde: lam4,
        lam_tilde_imag: imag,
    }
}

/// Propagation speed from the pressure-law radical, written directly in the
/// sound speeds rather than through the beta coefficients.
pub fn propagation_speed_radical(p: &ModelParams, eq: &EquilibriumState) -> f64 {
    let (rp, rm) = (eq.rho_bar_plus, eq.rho_bar_minus);
    let dpp = p.sound2_plus(rp);
    let dpm = p.sound2_minus(rm);
    let (ap, am) = (1.0 / rp, 1.0 / rm);
    let common = dpp * dpm / (am * rp * dpp + ap * rm * dpm);
    (common * (rm / rp + rp / rm)).sqrt()
}

/// Local closure state at fraction densities `(R+, R-)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FractionState {
    pub rho_plus: f64,
    pub rho_minus: f64,
    pub alpha_plus: f64,
    pub c2: f64,
}

/// Largest admissible deviation `|R - 1|` for the fraction map.
pub const FRACTION_WINDOW: f64 = 0.5;

/// Recovers the phase densities from the fraction densities.
///
/// Solves `P+(rho+) = P-(rho-)` with `rho- = R- rho+ / (rho+ - R+)`, which is
/// the constraint `R+/rho+ + R-/rho- = 1`. `guess` seeds the Newton iteration.
pub fn solve_fraction_map(
    r_plus: f64,
    r_minus: f64,
    p: &ModelParams,
    guess: Option<f64>,
) -> Result<FractionState, ModelError> {
    if !(r_plus > 0.0 && r_minus > 0.0) {
        return Err(ModelError::Admissibility(format!(
            "fraction densities must be positive, got ({r_plus}, {r_minus})"
        )));
    }
    if (r_plus - 1.0).abs() > FRACTION_WINDOW || (r_minus - 1.0).abs() > FRACTION_WINDOW {
        return Err(ModelError::Admissibility(format!(
            "fraction densities ({r_plus}, {r_minus}) outside |R-1| <= {FRACTION_WINDOW}"
        )));
    }
    let phi = |x: f64| {
        let d = x - r_plus;
        let y = r_minus * x / d;
        let val = p.pressure_plus(x) - p.pressure_minus(y);
        let dy = -r_minus * r_plus / (d * d);
        (val, p.sound2_plus(x) - p.sound2_minus(y) * dy)
    };
    let lo = r_plus * (1.0 + 1e-9);
    let scale = p.pressure_plus(2.0 * r_plus).max(p.pressure_minus(2.0 * r_minus));
    let x = monotone_root(phi, lo, guess.unwrap_or(2.0 * r_plus), scale)?;
    if x <= r_plus {
        return Err(ModelError::Admissibility("rho+ <= R+".into()));
    }
    let y = r_minus * x / (x - r_plus);
    let alpha_plus = r_plus / x;
    Ok(FractionState {
        rho_plus: x,
        rho_minus: y,
        alpha_plus,
        c2: c2_local(p, x, y, alpha_plus),
    })
}

/// Outcome of the second-combination degeneracy check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum DegeneracyReport {
    NotApplicable(String),
    Degenerate { a2: f64, ratio: f64, abs_diff: f64 },
    Distinct { a2: f64, ratio: f64, abs_diff: f64 },
}

impl DegeneracyReport {
    pub fn holds(&self) -> bool {
        !matches!(self, DegeneracyReport::Distinct { .. })
    }
}

/// Computes `a2 = (beta1 - beta2)/(beta2 - beta4)` and compares with `beta1/beta2`.
pub fn check_combination_degeneracy(eq: &EquilibriumState) -> DegeneracyReport {
    let scale = eq.beta1.abs().max(eq.beta2.abs()).max(eq.beta4.abs());
    if (eq.beta1 - eq.beta2).abs() <= 1e-12 * scale {
        return DegeneracyReport::NotApplicable("not applicable: beta1=beta2".into());
    }
    if (eq.beta2 - eq.beta4).abs() <= 1e-12 * scale {
        return DegeneracyReport::NotApplicable("not applicable: beta2=beta4".into());
    }
    let a2 = (eq.beta1 - eq.beta2) / (eq.beta2 - eq.beta4);
    let ratio = eq.beta1 / eq.beta2;
    let abs_diff = (a2 - ratio).abs();
    // The subtraction in a2 loses digits when beta1 is close to beta2.
    let gap = ((eq.beta1 - eq.beta2).abs() / scale).max(f64::EPSILON);
    let tol = 1e-12_f64.max(64.0 * f64::EPSILON / gap) * ratio.abs().max(1.0);
    if abs_diff <= tol {
        DegeneracyReport::Degenerate { a2, ratio, abs_diff }
    } else {
        DegeneracyReport::Distinct { a2, ratio, abs_diff }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_equilibrium() {
        let eq = solve_equilibrium(&ModelParams::symmetric()).unwrap();
        assert!((eq.rho_bar_plus - 2.0).abs() < 1e-12);
        assert!((eq.rho_bar_minus - 2.0).abs() < 1e-12);
        assert!((eq.s2_plus - 4.0).abs() < 1e-12);
        assert!((eq.c2 - 2.0).abs() < 1e-12);
        for b in [eq.beta1, eq.beta2, eq.beta3, eq.beta4] {
            assert!((b - 2.0).abs() < 1e-12);
        }
        assert!((eq.c - 2.0).abs() < 1e-12);
        assert!((eq.nu1_plus - 0.5).abs() < 1e-14);
        assert!((eq.nu2_minus - 0.5).abs() < 1e-14);
        assert!((eq.nu_plus - 1.0).abs() < 1e-14);
        assert!((eq.b1 - 0.5).abs() < 1e-14);
        assert!((eq.lam3_tilde + 0.010102051443364).abs() < 1e-12);
        assert!((eq.lam4_tilde + 0.989897948556636).abs() < 1e-12);
    }

    #[test]
    fn asymmetric_closed_form() {
        let eq = solve_equilibrium(&ModelParams::asymmetric()).unwrap();
        let rp = 1.0 + 2f64.sqrt();
        assert!((eq.rho_bar_plus - rp).abs() < 1e-12);
        assert!((eq.rho_bar_minus - (2.0 + 2f64.sqrt()) / 2.0).abs() < 1e-12);
        assert!((eq.alpha_bar_plus - 0.414213562373095).abs() < 1e-12);
    }

    #[test]
    fn validation_messages() {
        let mut p = ModelParams::symmetric();
        p.mu_plus = 0.0;
        assert_eq!(
            validate_params(p).unwrap_err().to_string(),
            "mu_plus must be positive"
        );
        let mut p = ModelParams::symmetric();
        p.lambda_plus = -1.0;
        assert!(validate_params(p)
            .unwrap_err()
            .to_string()
            .contains("2mu+3lambda < 0"));
    }

    #[test]
    fn config_round_trip() {
        let p = ModelParams::asymmetric();
        let q = ModelParams::from_config_str(&p.to_config_string()).unwrap();
        assert_eq!(p, q);
        assert!(ModelParams::from_config_str("foo = 1").is_err());
        assert!(ModelParams::from_config_str("mu_plus 1").is_err());
    }

    #[test]
    fn fraction_map_at_unity_is_equilibrium() {
        let p = ModelParams::asymmetric();
        let eq = solve_equilibrium(&p).unwrap();
        let fs = solve_fraction_map(1.0, 1.0, &p, None).unwrap();
        assert!((fs.rho_plus - eq.rho_bar_plus).abs() < 1e-12);
        assert!((fs.rho_minus - eq.rho_bar_minus).abs() < 1e-12);
        assert!((fs.c2 - eq.c2).abs() < 1e-12);
    }

    #[test]
    fn fraction_map_errors() {
        let p = ModelParams::symmetric();
        let e = solve_fraction_map(0.0, 1.0, &p, None).unwrap_err();
        assert!(e.to_string().contains("admissibility violated"));
        assert!(solve_fraction_map(1.6, 1.0, &p, None).is_err());
    }

    #[test]
    fn degeneracy_not_applicable_when_symmetric() {
        let eq = solve_equilibrium(&ModelParams::symmetric()).unwrap();
        match check_combination_degeneracy(&eq) {
            DegeneracyReport::NotApplicable(msg) => assert!(msg.contains("beta1=beta2")),
            other => panic!("{other:?}"),
        }
    }
}
