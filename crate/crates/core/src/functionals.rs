//! Energy, Pohozaev functional, mass-preserving dilations and the Lagrange
//! multiplier, for the mixed power nonlinearity and for a general `f`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::constants::ExponentPack;
use crate::error::{param, Error, Result};
use crate::quad;
use crate::radial::{self, RadialFunction, RadialGrid};

/// Parameters of `-Δu - λu = μ|u|^{q-2}u + |u|^{2*-2}u`, `‖u‖₂² = c`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemParams {
    pub dim: usize,
    pub c: f64,
    pub mu: f64,
    pub q: f64,
    pub exponents: ExponentPack,
}

impl ProblemParams {
    pub fn new(dim: usize, c: f64, mu: f64, q: f64) -> Result<Self> {
        let exponents = ExponentPack::new(dim, q)?;
        if !(c > 0.0 && c.is_finite()) {
            return Err(param(format!("mass c = {c} must be positive")));
        }
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(param(format!("μ = {mu} must be nonnegative")));
        }
        Ok(ProblemParams {
            dim,
            c,
            mu,
            q,
            exponents,
        })
    }

    pub fn with_mass(&self, c: f64) -> Result<Self> {
        Self::new(self.dim, c, self.mu, self.q)
    }

    pub fn with_mu(&self, mu: f64) -> Result<Self> {
        Self::new(self.dim, self.c, mu, self.q)
    }

    pub fn two_star(&self) -> f64 {
        self.exponents.two_star
    }

    pub fn gamma_q(&self) -> f64 {
        self.exponents.gamma_q
    }

    /// `μ|t|^{q-2}t + |t|^{2*-2}t`, with value 0 at `t = 0`.
    pub fn f(&self, t: f64) -> f64 {
        if t == 0.0 {
            return 0.0;
        }
        let a = t.abs();
        (self.mu * a.powf(self.q - 2.0) + a.powf(self.two_star() - 2.0)) * t
    }

    /// `μ|t|^q/q + |t|^{2*}/2*`.
    pub fn big_f(&self, t: f64) -> f64 {
        let a = t.abs();
        let ts = self.two_star();
        self.mu * a.powf(self.q) / self.q + a.powf(ts) / ts
    }

    pub fn nonlinearity(&self) -> GeneralNonlinearity {
        let p = *self;
        let p2 = *self;
        GeneralNonlinearity::with_primitive(move |t| p.f(t), move |t| p2.big_f(t))
    }

    fn check_grid(&self, u: &RadialFunction) -> Result<()> {
        if u.dim() != self.dim {
            return Err(param(format!(
                "profile lives in dimension {} but N = {}",
                u.dim(),
                self.dim
            )));
        }
        Ok(())
    }
}

/// The four integrals every functional is built from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Norms {
    pub mass: f64,
    pub grad_sq: f64,
    pub lq: f64,
    pub lcrit: f64,
}

impl Norms {
    pub fn of(u: &RadialFunction, p: &ProblemParams) -> Result<Self> {
        p.check_grid(u)?;
        let w = u.grid().weights();
        let v = u.values();
        Ok(Norms {
            mass: u.mass(),
            grad_sq: u.grad_norm_sq(),
            lq: radial::lp_pow_raw(w, v, p.q),
            lcrit: radial::lp_pow_raw(w, v, p.two_star()),
        })
    }

    /// Norms of `t^{N/2} u(t·)` in closed form.
    pub fn dilated(&self, p: &ProblemParams, t: f64) -> Norms {
        Norms {
            mass: self.mass,
            grad_sq: t * t * self.grad_sq,
            lq: t.powf(p.exponents.q_gamma()) * self.lq,
            lcrit: t.powf(p.two_star()) * self.lcrit,
        }
    }

    pub fn energy(&self, p: &ProblemParams) -> f64 {
        0.5 * self.grad_sq - self.lcrit / p.two_star() - p.mu * self.lq / p.q
    }

    pub fn pohozaev(&self, p: &ProblemParams) -> f64 {
        self.grad_sq - self.lcrit - p.mu * p.gamma_q() * self.lq
    }

    pub fn lagrange_multiplier(&self, p: &ProblemParams) -> Result<f64> {
        if !(self.mass > 0.0) {
            return Err(Error::Degenerate(
                "multiplier undefined for a profile of zero mass".into(),
            ));
        }
        Ok((self.grad_sq - p.mu * self.lq - self.lcrit) / self.mass)
    }
}

pub fn energy(u: &RadialFunction, p: &ProblemParams) -> Result<f64> {
    Ok(Norms::of(u, p)?.energy(p))
}

pub fn pohozaev(u: &RadialFunction, p: &ProblemParams) -> Result<f64> {
    Ok(Norms::of(u, p)?.pohozaev(p))
}

pub fn lagrange_multiplier(u: &RadialFunction, p: &ProblemParams) -> Result<f64> {
    Norms::of(u, p)?.lagrange_multiplier(p)
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A nonlinearity `f` with primitive `F(t) = ∫₀ᵗ f`.
#[derive(Clone)]
pub struct GeneralNonlinearity {
    f: ScalarFn,
    big_f: Option<ScalarFn>,
    /// Declared growth exponents `(at 0, at ∞)` of `|f(t)| ~ |t|^{p-1}`, if known.
    pub growth: Option<(f64, f64)>,
}

impl std::fmt::Debug for GeneralNonlinearity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GeneralNonlinearity")
            .field("has_primitive", &self.big_f.is_some())
            .field("growth", &self.growth)
            .finish()
    }
}

impl GeneralNonlinearity {
    /// `F` is obtained by adaptive quadrature.
    pub fn new(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        GeneralNonlinearity {
            f: Arc::new(f),
            big_f: None,
            growth: None,
        }
    }

    pub fn with_primitive(
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        big_f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        GeneralNonlinearity {
            f: Arc::new(f),
            big_f: Some(Arc::new(big_f)),
            growth: None,
        }
    }

    /// `|t|^{p-2} t`.
    pub fn power(p: f64) -> Self {
        let mut g = Self::with_primitive(
            move |t: f64| if t == 0.0 { 0.0 } else { t.abs().powf(p - 2.0) * t },
            move |t: f64| t.abs().powf(p) / p,
        );
        g.growth = Some((p, p));
        g
    }

    pub fn f(&self, t: f64) -> f64 {
        (self.f)(t)
    }

    pub fn big_f(&self, t: f64) -> f64 {
        match &self.big_f {
            Some(big) => big(t),
            None => {
                if t == 0.0 {
                    return 0.0;
                }
                let (a, b, sign) = if t > 0.0 { (0.0, t, 1.0) } else { (t, 0.0, -1.0) };
                let v = quad::integrate(|s| (self.f)(s), a, b, 1e-13);
                sign * v
            }
        }
    }
}

/// `P(u) = ‖∇u‖² - (N/2) ∫ [f(u)u - 2F(u)]`.
pub fn pohozaev_general(u: &RadialFunction, f: &GeneralNonlinearity) -> Result<f64> {
    let n = u.dim() as f64;
    let v: Vec<f64> = u
        .values()
        .iter()
        .map(|&x| f.f(x) * x - 2.0 * f.big_f(x))
        .collect();
    Ok(u.grad_norm_sq() - 0.5 * n * u.grid().integrate(&v)?)
}

/// `½‖∇u‖² - ∫ F(u)`.
pub fn energy_general(u: &RadialFunction, f: &GeneralNonlinearity) -> Result<f64> {
    let v: Vec<f64> = u.values().iter().map(|&x| f.big_f(x)).collect();
    Ok(0.5 * u.grad_norm_sq() - u.grid().integrate(&v)?)
}

/// `t^{N/2} u(t·)` resampled onto `u`'s grid by monotone cubic
/// interpolation (zero beyond `R_max`).
pub fn fiber_scale(u: &RadialFunction, t: f64) -> Result<RadialFunction> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(param(format!("fiber parameter t = {t} must be positive")));
    }
    if t == 1.0 {
        return Ok(u.clone());
    }
    let amp = t.powf(u.dim() as f64 / 2.0);
    let it = u.interpolator();
    let values = u.grid().nodes().iter().map(|&r| amp * it.eval(t * r)).collect();
    RadialFunction::new(u.grid().clone(), values)
}

/// `t^{N/2} u(t·)` carried exactly by the grid scaled by `1/t`.
pub fn fiber_scale_exact(u: &RadialFunction, t: f64) -> Result<RadialFunction> {
    u.dilate(t)
}

/// `Φ_μ(t^{N/2}u_t) = t²a/2 - μ t^{qγ} d/q - t^{2*} b/2*`.
pub fn fiber_energy(norms: &Norms, p: &ProblemParams, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(param(format!("fiber parameter t = {t} must be positive")));
    }
    Ok(norms.dilated(p, t).energy(p))
}

/// `d/dt Φ_μ(t^{N/2}u_t) = P_μ(t^{N/2}u_t) / t`.
pub fn fiber_derivative(norms: &Norms, p: &ProblemParams, t: f64) -> f64 {
    norms.dilated(p, t).pohozaev(p) / t
}

/// `h(t) = (1 - t²)/2 - (1 - t^{2*})/2*`, positive for `t ≠ 1`.
pub fn h_dilation(t: f64, two_star: f64) -> f64 {
    0.5 * (1.0 - t * t) - (1.0 - t.powf(two_star)) / two_star
}

/// `Φ(u) - Φ(t^{N/2}u_t) - (1-t²)/2·P(u) - h(t)‖u‖_{2*}^{2*}`, which is
/// nonnegative when `q ≥ q̄`.
pub fn dilation_defect(u: &RadialFunction, p: &ProblemParams, t: f64) -> Result<f64> {
    dilation_defect_from_norms(&Norms::of(u, p)?, p, t)
}

pub fn dilation_defect_from_norms(n: &Norms, p: &ProblemParams, t: f64) -> Result<f64> {
    if p.exponents.is_subcritical() {
        return Err(Error::Hypothesis(format!(
            "dilation inequality needs q ≥ q̄ = {}, got q = {}",
            p.exponents.q_bar, p.q
        )));
    }
    Ok(n.energy(p)
        - fiber_energy(n, p, t)?
        - 0.5 * (1.0 - t * t) * n.pohozaev(p)
        - h_dilation(t, p.two_star()) * n.lcrit)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub phi: f64,
    pub pohozaev: f64,
    pub lambda: f64,
    pub mass: f64,
    pub grad_sq: f64,
    pub lq: f64,
    pub lcrit: f64,
    /// `H^{-1}` norm of `-Δu - f(u) - λu`.
    pub kkt_residual: f64,
}

impl EnergyReport {
    pub fn norms(&self) -> Norms {
        Norms {
            mass: self.mass,
            grad_sq: self.grad_sq,
            lq: self.lq,
            lcrit: self.lcrit,
        }
    }
}

pub fn energy_report(u: &RadialFunction, p: &ProblemParams) -> Result<EnergyReport> {
    let n = Norms::of(u, p)?;
    let lambda = n.lagrange_multiplier(p)?;
    let grid = u.grid();
    let v = u.values();
    let au = radial::stiffness_apply(grid.stiffness(), v);
    let res: Vec<f64> = au
        .iter()
        .zip(grid.weights())
        .zip(v)
        .map(|((a, w), x)| a - w * (p.f(*x) + lambda * x))
        .collect();
    Ok(EnergyReport {
        phi: n.energy(p),
        pohozaev: n.pohozaev(p),
        lambda,
        mass: n.mass,
        grad_sq: n.grad_sq,
        lq: n.lq,
        lcrit: n.lcrit,
        kkt_residual: dual_norm(grid, &res, 1.0),
    })
}

/// `sqrt(rᵀ (A + σW)^{-1} r)`.
pub(crate) fn dual_norm(grid: &RadialGrid, r: &[f64], sigma: f64) -> f64 {
    let z = solve_shifted(grid, r, sigma);
    r.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt()
}

/// Solves `(A + σW) z = r` with the tridiagonal Thomas algorithm.
pub(crate) fn solve_shifted(grid: &RadialGrid, r: &[f64], sigma: f64) -> Vec<f64> {
    solve_tridiagonal(grid, r, sigma, r.len())
}

/// As [`solve_shifted`] with `z = 0` imposed at the outer node.
pub(crate) fn solve_shifted_dirichlet(grid: &RadialGrid, r: &[f64], sigma: f64) -> Vec<f64> {
    let mut z = solve_tridiagonal(grid, &r[..r.len() - 1], sigma, r.len() - 1);
    z.push(0.0);
    z
}

fn solve_tridiagonal(grid: &RadialGrid, r: &[f64], sigma: f64, n: usize) -> Vec<f64> {
    let k = grid.stiffness();
    let w = grid.weights();
    let full = n == grid.len();
    let diag = |i: usize| {
        let left = if i > 0 { k[i - 1] } else { 0.0 };
        let right = if i + 1 < n || !full { k[i] } else { 0.0 };
        left + right + sigma * w[i]
    };
    // off-diagonal between i and i+1 is -k[i]
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let b0 = diag(0);
    c[0] = -k[0] / b0;
    d[0] = r[0] / b0;
    for i in 1..n {
        let a = -k[i - 1];
        let m = diag(i) - a * c[i - 1];
        if i + 1 < n {
            c[i] = -k[i] / m;
        }
        d[i] = (r[i] - a * d[i - 1]) / m;
    }
    let mut z = vec![0.0; n];
    z[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        z[i] = d[i] - c[i] * z[i + 1];
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radial::Grading;

    fn grid(dim: usize) -> Arc<RadialGrid> {
        Arc::new(RadialGrid::new(dim, 30.0, 3000, Grading::Graded(2.0)).unwrap())
    }

    fn bump(dim: usize, w: f64) -> RadialFunction {
        RadialFunction::from_fn(grid(dim), |r| (-(r / w).powi(2)).exp()).unwrap()
    }

    #[test]
    fn zero_profile() {
        let p = ProblemParams::new(3, 1.0, 1.0, 4.0).unwrap();
        let z = RadialFunction::zeros(grid(3));
        assert_eq!(energy(&z, &p).unwrap(), 0.0);
        assert_eq!(pohozaev(&z, &p).unwrap(), 0.0);
        assert!(matches!(lagrange_multiplier(&z, &p), Err(Error::Degenerate(_))));
    }

    #[test]
    fn multiplier_from_norms() {
        let p = ProblemParams::new(3, 1.0, 1.0, 4.0).unwrap();
        let n = Norms {
            mass: 1.0,
            grad_sq: 1.0,
            lq: 0.5,
            lcrit: 0.25,
        };
        assert!((n.lagrange_multiplier(&p).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn small_constant_has_negative_multiplier() {
        let p = ProblemParams::new(3, 1.0, 1.0, 2.5).unwrap();
        let u = RadialFunction::from_fn(grid(3), |_| 1e-3).unwrap();
        assert!(lagrange_multiplier(&u, &p).unwrap() < 0.0);
    }

    #[test]
    fn power_case_matches_general_path() {
        let p = ProblemParams::new(3, 1.0, 0.7, 4.0).unwrap();
        let u = bump(3, 1.3);
        let a = pohozaev(&u, &p).unwrap();
        let b = pohozaev_general(&u, &p.nonlinearity()).unwrap();
        assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
        // same with F from quadrature
        let pp = p;
        let g = GeneralNonlinearity::new(move |t| pp.f(t));
        let c = pohozaev_general(&u, &g).unwrap();
        assert!((a - c).abs() <= 1e-10 * a.abs().max(1.0));
        let e = energy_general(&u, &g).unwrap();
        assert!((e - energy(&u, &p).unwrap()).abs() <= 1e-10);
    }

    #[test]
    fn pohozaev_is_fiber_derivative() {
        let p = ProblemParams::new(4, 1.0, 1.0, 3.5).unwrap();
        let u = bump(4, 0.8);
        let n = Norms::of(&u, &p).unwrap();
        let h = 1e-3;
        let e = |t| fiber_energy(&n, &p, t).unwrap();
        let d = (-e(1.0 + 2.0 * h) + 8.0 * e(1.0 + h) - 8.0 * e(1.0 - h) + e(1.0 - 2.0 * h))
            / (12.0 * h);
        let pz = n.pohozaev(&p);
        assert!((pz - d).abs() <= 1e-6 * (1.0 + pz.abs()));
    }

    #[test]
    fn fiber_energy_examples() {
        let p = ProblemParams::new(3, 1.0, 0.0, 4.0).unwrap();
        let n = Norms {
            mass: 1.0,
            grad_sq: 1.0,
            lq: 0.0,
            lcrit: 1.0,
        };
        assert!((fiber_energy(&n, &p, 1.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let t = 1.3f64;
        assert!((fiber_energy(&n, &p, t).unwrap() - (t * t / 2.0 - t.powi(6) / 6.0)).abs() < 1e-14);
        assert!(fiber_energy(&n, &p, 1e3).unwrap() < 0.0);
        assert!(fiber_energy(&n, &p, 0.0).is_err());
    }

    #[test]
    fn fiber_scale_preserves_mass() {
        let u = bump(3, 1.0);
        assert_eq!(fiber_scale(&u, 1.0).unwrap().values(), u.values());
        for t in [0.5, 0.8, 1.7, 3.0] {
            let v = fiber_scale(&u, t).unwrap();
            assert!((v.mass() / u.mass() - 1.0).abs() < 1e-6, "t={t}");
        }
        let ab = fiber_scale(&fiber_scale(&u, 1.5).unwrap(), 0.8).unwrap();
        let c = fiber_scale(&u, 1.2).unwrap();
        let err = ab
            .values()
            .iter()
            .zip(c.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-5, "{err}");
        assert!(fiber_scale(&u, -1.0).is_err());
    }

    #[test]
    fn h_is_positive_off_one() {
        for k in 1..1000 {
            let t = k as f64 / 250.0;
            if (t - 1.0).abs() > 1e-12 {
                assert!(h_dilation(t, 6.0) > 0.0, "t={t}");
            }
        }
        assert_eq!(h_dilation(1.0, 6.0), 0.0);
    }

    #[test]
    fn defect_examples() {
        let p = ProblemParams::new(3, 1.0, 1.0, 10.0 / 3.0).unwrap();
        let u = bump(3, 1.1);
        assert!(dilation_defect(&u, &p, 1.0).unwrap().abs() < 1e-14);
        for t in [0.5, 2.0] {
            assert!(dilation_defect(&u, &p, t).unwrap() >= -1e-10);
        }
        let p0 = p.with_mu(0.0).unwrap();
        for t in [0.3, 0.5, 2.0, 3.0] {
            let d = dilation_defect(&u, &p0, t).unwrap();
            assert!(d.abs() < 1e-12 * (1.0 + Norms::of(&u, &p0).unwrap().lcrit * t.powi(6)), "{d}");
        }
        let sub = ProblemParams::new(3, 1.0, 1.0, 3.0).unwrap();
        assert!(matches!(dilation_defect(&u, &sub, 2.0), Err(Error::Hypothesis(_))));
    }

    #[test]
    fn residual_vanishes_for_linear_eigenproblem_shape() {
        // Tridiagonal solve reproduces the operator.
        let g = grid(3);
        let u: Vec<f64> = g.nodes().iter().map(|r| (-r * r).exp()).collect();
        let au = radial::stiffness_apply(g.stiffness(), &u);
        let rhs: Vec<f64> = au.iter().zip(g.weights()).zip(&u).map(|((a, w), x)| a + 2.0 * w * x).collect();
        let z = solve_shifted(&g, &rhs, 2.0);
        let err = z.iter().zip(&u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10);
    }
}
