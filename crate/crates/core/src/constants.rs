//! Exponents, the Sobolev and Gagliardo–Nirenberg best constants, and the
//! mass/gradient thresholds built from them.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::{Arc, OnceLock, RwLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{param, Error, Result};
use crate::ode::{self, Tolerances};
use crate::quad;
use crate::radial::{self, sphere_area, Grading, RadialFunction, RadialGrid};

/// Relative band within which `q` is treated as equal to `q̄`.
const Q_BAR_BAND: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentPack {
    pub dim: usize,
    pub q: f64,
    pub two_star: f64,
    pub q_bar: f64,
    pub gamma_q: f64,
}

impl ExponentPack {
    pub fn new(dim: usize, q: f64) -> Result<Self> {
        if dim < 3 {
            return Err(param(format!("dimension N = {dim} must be at least 3")));
        }
        let two_star = two_star(dim);
        if !(q > 2.0 && q < two_star) {
            return Err(param(format!(
                "q = {q} must lie strictly between 2 and 2* = {two_star}"
            )));
        }
        let n = dim as f64;
        Ok(ExponentPack {
            dim,
            q,
            two_star,
            q_bar: 2.0 + 4.0 / n,
            gamma_q: n * (q - 2.0) / (2.0 * q),
        })
    }

    /// `q γ_q`, the fiber exponent of the `L^q` term.
    pub fn q_gamma(&self) -> f64 {
        if self.is_l2_critical() {
            2.0
        } else {
            self.q * self.gamma_q
        }
    }

    pub fn is_l2_critical(&self) -> bool {
        (self.q - self.q_bar).abs() <= Q_BAR_BAND * self.q_bar
    }

    pub fn is_subcritical(&self) -> bool {
        !self.is_l2_critical() && self.q < self.q_bar
    }

    /// `q ≥ q̄`.
    pub fn at_least_l2_critical(&self) -> bool {
        !self.is_subcritical()
    }
}

pub fn exponents(dim: usize, q: f64) -> Result<ExponentPack> {
    ExponentPack::new(dim, q)
}

pub fn two_star(dim: usize) -> f64 {
    2.0 * dim as f64 / (dim as f64 - 2.0)
}

/// `A_N = [N(N-2)]^{(N-2)/4}`.
pub fn instanton_amplitude(dim: usize) -> f64 {
    let n = dim as f64;
    (n * (n - 2.0)).powf((n - 2.0) / 4.0)
}

/// `U(r) = A_N (1 + r²)^{-(N-2)/2}`.
pub fn instanton(dim: usize, r: f64) -> f64 {
    let n = dim as f64;
    instanton_amplitude(dim) * (1.0 + r * r).powf(-(n - 2.0) / 2.0)
}

/// Closed form `S = N(N-2)π (Γ(N/2)/Γ(N))^{2/N}`.
pub fn sobolev_closed_form(dim: usize) -> f64 {
    let n = dim as f64;
    n * (n - 2.0) * PI * (gamma(n / 2.0) / gamma(n)).powf(2.0 / n)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SobolevReport {
    pub dim: usize,
    /// `‖∇U‖² / ‖U‖_{2*}²` from quadrature of the instanton.
    pub s: f64,
    /// `‖∇U‖₂²`, which equals `S^{N/2}` for the instanton.
    pub grad_sq: f64,
    /// `‖U‖_{2*}^{2*}`.
    pub lcrit: f64,
    pub closed_form: f64,
}

impl SobolevReport {
    pub fn s_pow(&self) -> f64 {
        self.grad_sq
    }

    pub fn relative_gap(&self) -> f64 {
        (self.s / self.closed_form - 1.0).abs()
    }
}

/// Sobolev best constant from quadrature of the full instanton profile.
pub fn sobolev_constant(dim: usize) -> Result<SobolevReport> {
    if dim < 3 {
        return Err(param(format!("dimension N = {dim} must be at least 3")));
    }
    let n = dim as f64;
    let a = instanton_amplitude(dim);
    let omega = sphere_area(dim);
    let ts = two_star(dim);
    // r = tan θ turns r^k (1+r²)^{-N} dr into sin^k θ cos^{2N-2-k} θ dθ
    let trig = |k: i32| {
        quad::integrate(
            |th: f64| th.sin().powi(k) * th.cos().powi(2 * dim as i32 - 2 - k),
            0.0,
            FRAC_PI_2,
            1e-15,
        )
    };
    let grad_sq = omega * a * a * (n - 2.0) * (n - 2.0) * trig(dim as i32 + 1);
    let lcrit = omega * a.powf(ts) * trig(dim as i32 - 1);
    Ok(SobolevReport {
        dim,
        s: grad_sq / lcrit.powf(2.0 / ts),
        grad_sq,
        lcrit,
        closed_form: sobolev_closed_form(dim),
    })
}

/// Positive radial ground state `Q` of `-ΔQ + Q = Q^{q-1}` found by shooting.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GroundState {
    pub dim: usize,
    pub q: f64,
    pub q0: f64,
    /// Radius where the accepted shot was stopped (its first local minimum).
    pub r_cut: f64,
    pub q_at_cut: f64,
    pub mass: f64,
    pub grad_sq: f64,
    pub lq: f64,
    /// `‖Q‖_q / (‖∇Q‖^{γ_q} ‖Q‖^{1-γ_q})`.
    pub c_nq: f64,
    /// Shots tried: `(Q(0), +1 overshoot | -1 undershoot | 0 decayed)`.
    pub history: Vec<(f64, i8)>,
}

impl GroundState {
    /// `‖∇Q‖² + ‖Q‖² - ‖Q‖_q^q`, zero for a solution.
    pub fn nehari_residual(&self) -> f64 {
        (self.grad_sq + self.mass - self.lq) / self.lq
    }

    /// `‖∇Q‖² - γ_q ‖Q‖_q^q`, zero for a solution.
    pub fn pohozaev_residual(&self) -> f64 {
        let g = self.dim as f64 * (self.q - 2.0) / (2.0 * self.q);
        (self.grad_sq - g * self.lq) / self.lq
    }
}

const SHOOT_START: f64 = 1e-4;
const SHOOT_END: f64 = 40.0;

fn shoot_tolerances() -> Tolerances {
    Tolerances {
        rtol: 1e-13,
        atol: 1e-16,
        h_max: 0.05,
    }
}

/// Series start `Q(r) ≈ Q0 + Q''(0) r²/2`.
fn series_state(dim: usize, q: f64, q0: f64, r: f64) -> [f64; 5] {
    let n = dim as f64;
    let a = (q0 - q0.powf(q - 1.0)) / n;
    let rn = r.powi(dim as i32) / n;
    [
        q0 + 0.5 * a * r * r,
        a * r,
        q0 * q0 * rn,
        0.0,
        q0.powf(q) * rn,
    ]
}

fn rhs(dim: usize, q: f64) -> impl Fn(f64, &[f64; 5]) -> [f64; 5] {
    let n1 = dim as f64 - 1.0;
    move |r, y| {
        let u = y[0];
        let p = y[1];
        let au = u.abs();
        let w = r.powi(dim as i32 - 1);
        [
            p,
            -n1 / r * p + u - au.powf(q - 2.0) * u,
            w * u * u,
            w * p * p,
            w * au.powf(q),
        ]
    }
}

/// Integrates one shot; returns the classification and the stopping state.
fn shot(dim: usize, q: f64, q0: f64) -> (i8, ode::Endpoint<5>) {
    let mut class = 0i8;
    let end = ode::integrate(
        rhs(dim, q),
        SHOOT_START,
        series_state(dim, q, q0, SHOOT_START),
        SHOOT_END,
        shoot_tolerances(),
        |_, y| {
            if y[0] < 0.0 {
                class = 1;
                true
            } else if y[1] > 0.0 {
                class = -1;
                true
            } else {
                false
            }
        },
    );
    (class, end)
}

/// Bisection on `Q(0)` between undershooting and overshooting shots.
pub fn shoot_ground_state(dim: usize, q: f64) -> Result<GroundState> {
    let ex = ExponentPack::new(dim, q)?;
    let mut history = Vec::new();
    // below this amplitude the conserved-energy argument forbids reaching zero
    let mut lo = (q / 2.0).powf(1.0 / (q - 2.0));
    let (c_lo, _) = shot(dim, q, lo);
    history.push((lo, c_lo));
    if c_lo != -1 {
        return Err(Error::Shooting {
            message: format!("lower amplitude {lo} does not undershoot"),
            history,
        });
    }
    let mut hi = 2.0 * lo;
    loop {
        let (c, _) = shot(dim, q, hi);
        history.push((hi, c));
        match c {
            1 => break,
            -1 => {
                lo = hi;
                hi *= 2.0;
            }
            _ => break,
        }
        if hi > 1e8 {
            return Err(Error::Shooting {
                message: "no overshooting amplitude below 1e8".into(),
                history,
            });
        }
    }
    while hi - lo > 4.0 * f64::EPSILON * hi {
        let mid = 0.5 * (lo + hi);
        let (c, _) = shot(dim, q, mid);
        history.push((mid, c));
        match c {
            1 => hi = mid,
            -1 => lo = mid,
            _ => {
                lo = mid;
                break;
            }
        }
    }
    let (_, end) = shot(dim, q, lo);
    let omega = sphere_area(dim);
    let (mass, grad_sq, lq) = (omega * end.y[2], omega * end.y[3], omega * end.y[4]);
    if end.y[0].abs() > 1e-6 * lo {
        return Err(Error::Shooting {
            message: format!(
                "accepted shot stops at r = {} with Q = {} (not decayed)",
                end.t, end.y[0]
            ),
            history,
        });
    }
    let g = ex.gamma_q;
    let c_nq = lq.powf(1.0 / q) / (grad_sq.powf(g / 2.0) * mass.powf((1.0 - g) / 2.0));
    Ok(GroundState {
        dim,
        q,
        q0: lo,
        r_cut: end.t,
        q_at_cut: end.y[0],
        mass,
        grad_sq,
        lq,
        c_nq,
        history,
    })
}

/// Nodal values of `Q` and `Q'` on a uniform grid over `[0, r_cut]`.
pub fn ground_state_on_grid(gs: &GroundState, cells: usize) -> Result<(RadialFunction, Vec<f64>)> {
    let grid = Arc::new(RadialGrid::new(gs.dim, gs.r_cut, cells, Grading::Uniform)?);
    let nodes = grid.nodes();
    let mut vals = Vec::with_capacity(nodes.len());
    let mut ders = Vec::with_capacity(nodes.len());
    let mut r = SHOOT_START;
    let mut y = series_state(gs.dim, gs.q, gs.q0, SHOOT_START);
    for &ri in nodes {
        if ri <= SHOOT_START {
            let s = series_state(gs.dim, gs.q, gs.q0, ri);
            vals.push(s[0]);
            ders.push(s[1]);
            continue;
        }
        let end = ode::integrate(rhs(gs.dim, gs.q), r, y, ri, shoot_tolerances(), |_, _| false);
        r = ri;
        y = end.y;
        vals.push(y[0].max(0.0));
        ders.push(y[1]);
    }
    Ok((RadialFunction::new(grid, vals)?, ders))
}

static GN_CACHE: OnceLock<RwLock<HashMap<(usize, u64), GroundState>>> = OnceLock::new();

/// Memoized [`shoot_ground_state`].
pub fn ground_state(dim: usize, q: f64) -> Result<GroundState> {
    let cache = GN_CACHE.get_or_init(|| RwLock::new(HashMap::new()));
    let key = (dim, q.to_bits());
    if let Some(gs) = cache.read().unwrap().get(&key) {
        return Ok(gs.clone());
    }
    let gs = shoot_ground_state(dim, q)?;
    cache.write().unwrap().insert(key, gs.clone());
    Ok(gs)
}

/// Gagliardo–Nirenberg best constant `C_{N,q}`.
pub fn gn_constant(dim: usize, q: f64) -> Result<f64> {
    Ok(ground_state(dim, q)?.c_nq)
}

/// Gagliardo–Nirenberg ratio `‖u‖_q / (‖∇u‖^{γ} ‖u‖^{1-γ})` of a profile.
pub fn gn_ratio(grad_sq: f64, mass: f64, lq: f64, ex: &ExponentPack) -> f64 {
    let g = ex.gamma_q;
    lq.powf(1.0 / ex.q) / (grad_sq.powf(g / 2.0) * mass.powf((1.0 - g) / 2.0))
}

/// Independent estimate of `C_{N,q}`: minimizes the Weinstein quotient
/// over positive combinations of Gaussians with geometric widths, from
/// `starts` random initial coefficient vectors.
pub fn weinstein_estimate(dim: usize, q: f64, starts: usize, seed: u64) -> Result<f64> {
    let ex = ExponentPack::new(dim, q)?;
    let grid = RadialGrid::new(dim, 60.0, 3000, Grading::Graded(2.0))?;
    let widths: Vec<f64> = (0..10).map(|k| 0.15 * 1.6f64.powi(k)).collect();
    let basis: Vec<Vec<f64>> = widths
        .iter()
        .map(|s| {
            grid.nodes()
                .iter()
                .map(|r| (-r * r / (2.0 * s * s)).exp())
                .collect()
        })
        .collect();
    let g = ex.gamma_q;
    let objective = |c: &[f64]| -> (f64, Vec<f64>) {
        let n = grid.len();
        let mut u = vec![0.0; n];
        for (ck, phi) in c.iter().zip(&basis) {
            for i in 0..n {
                u[i] += ck * phi[i];
            }
        }
        let w = grid.weights();
        let au = radial::stiffness_apply(grid.stiffness(), &u);
        let a: f64 = au.iter().zip(&u).map(|(x, y)| x * y).sum();
        let m: f64 = w.iter().zip(&u).map(|(w, v)| w * v * v).sum();
        let d: f64 = w.iter().zip(&u).map(|(w, v)| w * v.abs().powf(q)).sum();
        let val = 0.5 * g * q * a.ln() + 0.5 * (1.0 - g) * q * m.ln() - d.ln();
        let grad = basis
            .iter()
            .map(|phi| {
                let mut da = 0.0;
                let mut dm = 0.0;
                let mut dd = 0.0;
                for i in 0..n {
                    da += 2.0 * au[i] * phi[i];
                    dm += 2.0 * w[i] * u[i] * phi[i];
                    dd += q * w[i] * u[i].abs().powf(q - 2.0) * u[i] * phi[i];
                }
                0.5 * g * q * da / a + 0.5 * (1.0 - g) * q * dm / m - dd / d
            })
            .collect();
        (val, grad)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = f64::INFINITY;
    for _ in 0..starts.max(1) {
        let x0: Vec<f64> = (0..widths.len()).map(|_| rng.random_range(0.1..1.0)).collect();
        let (x, v) = bfgs(&objective, x0, 400);
        if v < best && x.iter().any(|c| *c != 0.0) {
            best = v;
        }
    }
    // min W = C^{-q}
    Ok((-best / q).exp())
}

/// Minimal BFGS with Armijo backtracking.
fn bfgs(f: &impl Fn(&[f64]) -> (f64, Vec<f64>), x0: Vec<f64>, iters: usize) -> (Vec<f64>, f64) {
    let n = x0.len();
    let mut x = x0;
    let (mut fx, mut gx) = f(&x);
    let mut h = vec![vec![0.0; n]; n];
    for (i, row) in h.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _ in 0..iters {
        let gnorm = gx.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gnorm < 1e-12 {
            break;
        }
        let mut p: Vec<f64> = (0..n)
            .map(|i| -(0..n).map(|j| h[i][j] * gx[j]).sum::<f64>())
            .collect();
        let mut slope: f64 = p.iter().zip(&gx).map(|(a, b)| a * b).sum();
        if slope >= 0.0 {
            p = gx.iter().map(|v| -v).collect();
            slope = -gnorm * gnorm;
            for (i, row) in h.iter_mut().enumerate() {
                row.iter_mut().for_each(|v| *v = 0.0);
                row[i] = 1.0;
            }
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let xn: Vec<f64> = x.iter().zip(&p).map(|(a, b)| a + step * b).collect();
            let (fxn, gn) = f(&xn);
            if fxn.is_finite() && fxn <= fx + 1e-4 * step * slope {
                accepted = Some((xn, fxn, gn));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fxn, gn)) = accepted else { break };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&gx).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let done = (fx - fxn).abs() <= 1e-15 * fx.abs().max(1.0);
        x = xn;
        fx = fxn;
        gx = gn;
        if done {
            break;
        }
        if sy > 1e-300 {
            let hy: Vec<f64> = (0..n)
                .map(|i| (0..n).map(|j| h[i][j] * y[j]).sum())
                .collect();
            let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
            for i in 0..n {
                for j in 0..n {
                    h[i][j] += (sy + yhy) * s[i] * s[j] / (sy * sy)
                        - (hy[i] * s[j] + s[i] * hy[j]) / sy;
                }
            }
        }
    }
    (x, fx)
}

/// Serializes `Option<f64>` with `+inf` as a string.
mod ext_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            None => s.serialize_none(),
            Some(x) if x.is_infinite() && *x > 0.0 => s.serialize_str("+inf"),
            Some(x) => s.serialize_f64(*x),
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        match Option::<Repr>::deserialize(d)? {
            None => Ok(None),
            Some(Repr::Num(x)) => Ok(Some(x)),
            Some(Repr::Str(s)) if s == "+inf" || s == "inf" => Ok(Some(f64::INFINITY)),
            Some(Repr::Str(s)) => Err(serde::de::Error::custom(format!("bad number '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub dim: usize,
    pub q: f64,
    pub mu: f64,
    pub c: f64,
    pub exponents: ExponentPack,
    pub s: f64,
    pub s_pow: f64,
    pub c_nq: f64,
    pub a_n: f64,
    pub alpha0: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    /// Gradient radius of `V(c)` evaluated at the given mass (`q < q̄` only).
    pub rho0: Option<f64>,
    /// The same radius evaluated at `c0`.
    pub rho0_at_c0: Option<f64>,
    /// Mass threshold as displayed in the closed formula (`q < q̄` only).
    pub c0: Option<f64>,
    /// Mass at which the boundary lower bound `ρ f(c, ρ0(c))` vanishes.
    pub c0_root: Option<f64>,
    /// `f(c, ρ0(c))` at the given mass; positive means `V(c)` separates.
    pub boundary_coefficient: Option<f64>,
    /// `α(N,q)`: `+inf` above `q̄`, closed form at `q̄`, absent below.
    #[serde(with = "ext_f64")]
    pub alpha_nq: Option<f64>,
    /// At `q = q̄`: `1 - μ γ C^q c^{2/N}`, which exceeds 1/2 when `μ < α`.
    pub pohozaev_coercivity: Option<f64>,
}

impl ThresholdReport {
    /// Which mass the solvers use for `ρ0`.
    pub const RHO0_CONVENTION: &'static str = "rho0(c)";

    /// `ρ f(c, ρ)`, the lower bound for `Φ_μ` on `{‖∇u‖² = ρ} ∩ S_c`.
    pub fn energy_lower_bound(&self, c: f64, rho: f64) -> f64 {
        rho * boundary_fn(self, c, rho)
    }
}

fn boundary_fn(t: &ThresholdReport, c: f64, rho: f64) -> f64 {
    let ts = t.exponents.two_star;
    0.5 - t.mu / t.q * t.c_nq.powf(t.q) * c.powf(t.alpha1 / 2.0) * rho.powf(-t.alpha0 / 2.0)
        - rho.powf(t.alpha2 / 2.0) / (ts * t.s.powf(ts / 2.0))
}

fn rho0_formula(t: &ThresholdReport, c: f64) -> f64 {
    let ts = t.exponents.two_star;
    let (a0, a1, a2) = (t.alpha0, t.alpha1, t.alpha2);
    (ts * t.mu * a0 * t.c_nq.powf(t.q) * t.s.powf(ts / 2.0) / (t.q * a2)).powf(2.0 / (a2 + a0))
        * c.powf(a1 / (a0 + a2))
}

fn c0_formula(t: &ThresholdReport) -> f64 {
    let ts = t.exponents.two_star;
    let (a0, a2) = (t.alpha0, t.alpha2);
    let n = t.dim as f64;
    let ss = t.s.powf(ts / 2.0);
    let inner = t.q * a2 / (ts * t.mu * a0 * t.c_nq.powf(t.q) * ss);
    (ts * a0 * ss / (a0 + a2) * inner.powf(a2 / (a0 + a2))).powf(n / 2.0)
}

/// `α₀, α₁, α₂`.
pub fn alphas(dim: usize, q: f64) -> (f64, f64, f64) {
    let n = dim as f64;
    (
        2.0 - n * (q - 2.0) / 2.0,
        (2.0 * n - q * (n - 2.0)) / 2.0,
        4.0 / (n - 2.0),
    )
}

pub fn thresholds(dim: usize, q: f64, mu: f64, c: f64) -> Result<ThresholdReport> {
    let ex = ExponentPack::new(dim, q)?;
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(param(format!("μ = {mu} must be positive")));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(param(format!("c = {c} must be positive")));
    }
    let sob = sobolev_constant(dim)?;
    let c_nq = gn_constant(dim, q)?;
    let (alpha0, alpha1, alpha2) = alphas(dim, q);
    let mut t = ThresholdReport {
        dim,
        q,
        mu,
        c,
        exponents: ex,
        s: sob.s,
        s_pow: sob.grad_sq,
        c_nq,
        a_n: instanton_amplitude(dim),
        alpha0,
        alpha1,
        alpha2,
        rho0: None,
        rho0_at_c0: None,
        c0: None,
        c0_root: None,
        boundary_coefficient: None,
        alpha_nq: None,
        pohozaev_coercivity: None,
    };
    let n = dim as f64;
    if ex.is_subcritical() {
        let c0 = c0_formula(&t);
        t.rho0 = Some(rho0_formula(&t, c));
        t.rho0_at_c0 = Some(rho0_formula(&t, c0));
        t.c0 = Some(c0);
        t.boundary_coefficient = Some(boundary_fn(&t, c, rho0_formula(&t, c)));
        t.c0_root = Some(c0_root(&t)?);
    } else if ex.is_l2_critical() {
        let g = ex.gamma_q;
        t.alpha_nq = Some(1.0 / (2.0 * g * c.powf(2.0 / n) * c_nq.powf(q)));
        t.pohozaev_coercivity = Some(1.0 - mu * g * c_nq.powf(q) * c.powf(2.0 / n));
    } else {
        t.alpha_nq = Some(f64::INFINITY);
    }
    Ok(t)
}

/// Root in `c` of `f(c, ρ0(c)) = 0`; `f(c, ρ0(c))` is decreasing in `c`.
fn c0_root(t: &ThresholdReport) -> Result<f64> {
    let h = |c: f64| boundary_fn(t, c, rho0_formula(t, c));
    let mut lo = 1e-12;
    let mut hi = 1.0;
    while h(hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::Degenerate("boundary coefficient never vanishes".into()));
        }
    }
    if h(lo) <= 0.0 {
        return Err(Error::Bracket {
            lo,
            hi,
            f_lo: h(lo),
            f_hi: h(hi),
            context: "mass threshold root".into(),
        });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}
