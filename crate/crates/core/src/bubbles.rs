//! Truncated Aubin–Talenti bubbles, the mass-matched family with outer
//! radius `R_n`, the superposition path `W_{n,t}`, and the energy scans
//! that compare bubble levels against `S^{N/2}/N`.
//!
//! Norms of the explicit profiles are computed by adaptive quadrature of the
//! piecewise formula. On the rescaled core `s = n r` the substitution
//! `s = tan θ` makes every core integrand smooth and bounded, and the
//! deviation from the full instanton is integrated directly over the
//! discarded tail, so deficits of size `n^{-N}` keep full relative accuracy.

use std::f64::consts::FRAC_PI_2;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::{instanton_amplitude, sobolev_constant};
use crate::error::{param, Error, Result};
use crate::functionals::{fiber_energy, Norms, ProblemParams};
use crate::quad;
use crate::radial::{self, sphere_area, RadialFunction, RadialGrid};

const QUAD_RTOL: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BubbleKind {
    Truncated { n: f64 },
    MassNormalized { n: f64, r_n: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BubbleProfile {
    pub kind: BubbleKind,
    pub dim: usize,
    pub a_n: f64,
    pub target_mass: Option<f64>,
}

/// The four norms of a bubble, with the gradient and critical norms also
/// given as deviations from `S^{N/2}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BubbleNorms {
    pub mass: f64,
    pub grad_sq: f64,
    pub lcrit: f64,
    pub lq: f64,
    pub grad_deficit: f64,
    pub lcrit_deficit: f64,
}

impl BubbleNorms {
    pub fn norms(&self) -> Norms {
        Norms {
            mass: self.mass,
            grad_sq: self.grad_sq,
            lq: self.lq,
            lcrit: self.lcrit,
        }
    }
}

fn check_n(n: f64) -> Result<()> {
    if !(n >= 1.0 && n.is_finite()) {
        return Err(param(format!("bubble index n = {n} must be at least 1")));
    }
    Ok(())
}

impl BubbleProfile {
    pub fn truncated(dim: usize, n: f64) -> Result<Self> {
        if dim < 3 {
            return Err(param(format!("dimension N = {dim} must be at least 3")));
        }
        check_n(n)?;
        Ok(BubbleProfile {
            kind: BubbleKind::Truncated { n },
            dim,
            a_n: instanton_amplitude(dim),
            target_mass: None,
        })
    }

    /// `Ũ_n` with outer radius solving the mass equation.
    pub fn mass_normalized(dim: usize, c: f64, n: f64) -> Result<Self> {
        let r_n = solve_rn(dim, c, n)?;
        Ok(BubbleProfile {
            kind: BubbleKind::MassNormalized { n, r_n },
            dim,
            a_n: instanton_amplitude(dim),
            target_mass: Some(c),
        })
    }

    pub fn n(&self) -> f64 {
        match self.kind {
            BubbleKind::Truncated { n } | BubbleKind::MassNormalized { n, .. } => n,
        }
    }

    /// `(ρ, R)`: the core ends at `ρ` and the linear ramp reaches 0 at `R`.
    pub fn radii(&self) -> (f64, f64) {
        match self.kind {
            BubbleKind::Truncated { .. } => (1.0, 2.0),
            BubbleKind::MassNormalized { n, r_n } => (n.powf(2.0 / 3.0), r_n),
        }
    }

    fn half(&self) -> f64 {
        (self.dim as f64 - 2.0) / 2.0
    }

    fn core(&self, r: f64) -> f64 {
        let n = self.n();
        self.a_n * (n / (1.0 + n * n * r * r)).powf(self.half())
    }

    fn core_slope(&self, r: f64) -> f64 {
        let n = self.n();
        let d = self.dim as f64;
        -self.a_n * (d - 2.0) * n.powf(self.half() + 2.0) * r * (1.0 + n * n * r * r).powf(-d / 2.0)
    }

    /// Height of the ramp at its inner end.
    fn ramp_height(&self) -> f64 {
        let (rho, _) = self.radii();
        self.core(rho)
    }

    pub fn eval(&self, r: f64) -> f64 {
        let (rho, big_r) = self.radii();
        if r < rho {
            self.core(r)
        } else if r < big_r {
            self.ramp_height() * (big_r - r) / (big_r - rho)
        } else {
            0.0
        }
    }

    pub fn derivative(&self, r: f64) -> f64 {
        let (rho, big_r) = self.radii();
        if r < rho {
            self.core_slope(r)
        } else if r < big_r {
            -self.ramp_height() / (big_r - rho)
        } else {
            0.0
        }
    }

    /// `ω_N ∫_0^ρ r^{N-1} core^p dr` (`tail = false`) or the same integral
    /// over `[ρ, ∞)` (`tail = true`).
    fn core_power_integral(&self, p: f64, tail: bool) -> f64 {
        let n = self.n();
        let d = self.dim as f64;
        let (rho, _) = self.radii();
        // s = n r, s = tan θ: r^{N-1} core^p dr = A^p n^{p(N-2)/2 - N}
        //   sin^{N-1}θ cos^{p(N-2) - N - 1}θ dθ
        let pref = self.a_n.powf(p) * n.powf(p * (d - 2.0) / 2.0 - d);
        let e_cos = p * (d - 2.0) - d - 1.0;
        let th = (n * rho).atan();
        let f = |t: f64| t.sin().powf(d - 1.0) * t.cos().powf(e_cos);
        let v = if tail {
            quad::integrate(f, th, FRAC_PI_2, QUAD_RTOL)
        } else {
            quad::integrate(f, 0.0, th, QUAD_RTOL)
        };
        sphere_area(self.dim) * pref * v
    }

    /// `ω_N ∫ r^{N-1} |core'|² dr` over the core or over the tail.
    fn core_grad_integral(&self, tail: bool) -> f64 {
        let n = self.n();
        let d = self.dim as f64;
        let (rho, _) = self.radii();
        // A²(N-2)² ∫ s^{N+1}(1+s²)^{-N} ds → sin^{N+1} cos^{N-3}
        let th = (n * rho).atan();
        let f = |t: f64| t.sin().powf(d + 1.0) * t.cos().powf(d - 3.0);
        let v = if tail {
            quad::integrate(f, th, FRAC_PI_2, QUAD_RTOL)
        } else {
            quad::integrate(f, 0.0, th, QUAD_RTOL)
        };
        sphere_area(self.dim) * self.a_n * self.a_n * (d - 2.0) * (d - 2.0) * v
    }

    fn ramp_power_integral(&self, p: f64) -> f64 {
        let (rho, big_r) = self.radii();
        let k = self.ramp_height();
        let dim = self.dim as i32;
        let v = quad::integrate(
            |r: f64| r.powi(dim - 1) * (k * (big_r - r) / (big_r - rho)).powf(p),
            rho,
            big_r,
            QUAD_RTOL,
        );
        sphere_area(self.dim) * v
    }

    fn ramp_grad_integral(&self) -> f64 {
        let (rho, big_r) = self.radii();
        let slope = self.ramp_height() / (big_r - rho);
        let dim = self.dim as i32;
        let shell = (big_r.powi(dim) - rho.powi(dim)) / self.dim as f64;
        sphere_area(self.dim) * slope * slope * shell
    }

    /// Mass from the closed-form annulus integral.
    pub fn mass(&self) -> f64 {
        let (rho, big_r) = self.radii();
        let k = self.ramp_height();
        self.core_power_integral(2.0, false)
            + sphere_area(self.dim) * k * k * annulus_moment(self.dim, rho, big_r)
    }

    /// All norms by adaptive quadrature of the exact profile.
    pub fn exact_norms(&self, q: f64, s_pow: f64) -> BubbleNorms {
        let ts = 2.0 * self.dim as f64 / (self.dim as f64 - 2.0);
        let grad_deficit = self.ramp_grad_integral() - self.core_grad_integral(true);
        let lcrit_deficit = self.ramp_power_integral(ts) - self.core_power_integral(ts, true);
        BubbleNorms {
            mass: self.mass(),
            grad_sq: s_pow + grad_deficit,
            lcrit: s_pow + lcrit_deficit,
            lq: self.core_power_integral(q, false) + self.ramp_power_integral(q),
            grad_deficit,
            lcrit_deficit,
        }
    }

    /// A grid resolving both `r ≈ 1/n` and the support, with the matching
    /// radii placed on nodes.
    pub fn grid(&self, r_end: f64, cells: usize) -> Result<RadialGrid> {
        let (rho, big_r) = self.radii();
        bubble_grid(self.dim, self.n(), r_end.max(big_r), cells, &[rho, big_r])
    }

    /// Nodal values; refuses grids that do not resolve the core.
    pub fn on_grid(&self, grid: Arc<RadialGrid>) -> Result<RadialFunction> {
        let n = self.n();
        let h = grid.max_spacing_below(1.0 / n);
        if h >= 0.1 / n {
            return Err(Error::Resolution(format!(
                "grid spacing {h:e} near the origin is not below 0.1/n = {:e}",
                0.1 / n
            )));
        }
        RadialFunction::from_fn(grid, |r| self.eval(r))
    }
}

/// `∫_a^R r^{N-1} (R-r)² dr / (R-a)²`, summed in powers of `R - a`.
pub fn annulus_moment(dim: usize, a: f64, big_r: f64) -> f64 {
    let d = big_r - a;
    let mut s = 0.0;
    let mut binom = 1.0;
    for k in 0..dim {
        let kf = k as f64;
        s += binom * a.powi((dim - 1 - k) as i32) * d.powi(k as i32) * 2.0
            / ((kf + 1.0) * (kf + 2.0) * (kf + 3.0));
        binom *= (dim - 1 - k) as f64 / (kf + 1.0);
    }
    d * s
}

/// Geometric grid on `[1/n, r_end]` behind a uniform block on `[0, 1/n]`,
/// with the nearest node snapped onto each breakpoint.
pub fn bubble_grid(dim: usize, n: f64, r_end: f64, cells: usize, breaks: &[f64]) -> Result<RadialGrid> {
    if cells < 128 {
        return Err(param("bubble grids need at least 128 cells"));
    }
    let inner = (cells / 24).max(32);
    let r0 = 1.0 / n;
    if r_end <= r0 {
        return Err(param("grid end lies inside the core scale"));
    }
    let outer = cells - inner;
    let mut nodes: Vec<f64> = (0..inner).map(|i| r0 * i as f64 / inner as f64).collect();
    let ratio = (r_end / r0).ln() / outer as f64;
    nodes.extend((0..=outer).map(|i| r0 * (ratio * i as f64).exp()));
    *nodes.last_mut().unwrap() = r_end;
    for &b in breaks {
        if b <= r0 || b >= r_end {
            continue;
        }
        let i = nodes.partition_point(|&x| x < b);
        let j = if i > 0 && (b - nodes[i - 1]) < (nodes[i] - b) { i - 1 } else { i };
        if j > 0 && j + 1 < nodes.len() {
            nodes[j] = b;
        }
    }
    RadialGrid::from_nodes(dim, nodes)
}

/// Leading-order outer radius `K n^{7(N-2)/3N}`.
pub fn rn_asymptote(dim: usize, c: f64, n: f64) -> f64 {
    let d = dim as f64;
    let a = instanton_amplitude(dim);
    let k = (d * (d + 1.0) * (d + 2.0) * c / (2.0 * sphere_area(dim) * a * a)).powf(1.0 / d);
    k * n.powf(7.0 * (d - 2.0) / (3.0 * d))
}

/// Outer radius `R_n > n^{2/3}` at which the mass-matched bubble has mass `c`.
pub fn solve_rn(dim: usize, c: f64, n: f64) -> Result<f64> {
    if dim < 3 {
        return Err(param(format!("dimension N = {dim} must be at least 3")));
    }
    check_n(n)?;
    if !(c > 0.0 && c.is_finite()) {
        return Err(param(format!("mass c = {c} must be positive")));
    }
    let rho = n.powf(2.0 / 3.0);
    let probe = |r_n: f64| {
        BubbleProfile {
            kind: BubbleKind::MassNormalized { n, r_n },
            dim,
            a_n: instanton_amplitude(dim),
            target_mass: Some(c),
        }
        .mass()
            - c
    };
    let guess = rn_asymptote(dim, c, n);
    let mut lo = (guess / 10.0).max(rho * (1.0 + 1e-12));
    let mut hi = (guess * 10.0).max(lo * 2.0);
    let (f_lo, f_hi) = (probe(lo), probe(hi));
    if !(f_lo < 0.0 && f_hi > 0.0) {
        return Err(Error::Bracket {
            lo,
            hi,
            f_lo,
            f_hi,
            context: format!("outer radius for N = {dim}, c = {c}, n = {n}"),
        });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if probe(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 2.0 * f64::EPSILON * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `Θ_n` on a grid.
pub fn truncated_instanton(dim: usize, n: f64, grid: Arc<RadialGrid>) -> Result<RadialFunction> {
    if grid.dim() != dim {
        return Err(param("grid dimension differs from N"));
    }
    BubbleProfile::truncated(dim, n)?.on_grid(grid)
}

/// `Ũ_n` on a grid, rescaled by the returned factor so that the grid mass
/// is exactly `c` (the factor is `1 + O(h²)`).
pub fn mass_normalized_instanton(
    dim: usize,
    c: f64,
    n: f64,
    grid: Arc<RadialGrid>,
) -> Result<(RadialFunction, BubbleProfile, f64)> {
    let b = BubbleProfile::mass_normalized(dim, c, n)?;
    let (_, big_r) = b.radii();
    if grid.r_max() < big_r {
        return Err(Error::Resolution(format!(
            "grid ends at {} before the support radius {big_r}",
            grid.r_max()
        )));
    }
    let u = b.on_grid(grid)?;
    let k = (c / u.mass()).sqrt();
    Ok((u.scale(k), b, k))
}

/// Fitted slope of `ln|y|` against `ln n` by least squares.
pub fn loglog_slope(ns: &[f64], ys: &[f64]) -> f64 {
    let xs: Vec<f64> = ns.iter().map(|n| n.ln()).collect();
    let zs: Vec<f64> = ys.iter().map(|y| y.abs().ln()).collect();
    let m = xs.len() as f64;
    let xm = xs.iter().sum::<f64>() / m;
    let zm = zs.iter().sum::<f64>() / m;
    let sxz: f64 = xs.iter().zip(&zs).map(|(x, z)| (x - xm) * (z - zm)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
    sxz / sxx
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AsymptoticRow {
    pub n: f64,
    pub norms: BubbleNorms,
    /// Same norms from the nodal profile on a bubble grid.
    pub grid_norms: Norms,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AsymptoticTable {
    pub dim: usize,
    pub q: f64,
    pub rows: Vec<AsymptoticRow>,
    pub mass_slope: f64,
    pub grad_deficit_slope: f64,
    pub lcrit_deficit_slope: f64,
    pub lq_slope: f64,
}

/// Expected exponents: mass, gradient deficit, critical-norm deficit, `L^q`.
pub fn expected_slopes(dim: usize, q: f64) -> (f64, f64, f64, f64) {
    let d = dim as f64;
    let mass = if dim == 3 { -1.0 } else { -2.0 };
    (mass, -(d - 2.0), -d, -(2.0 * d - (d - 2.0) * q) / 2.0)
}

/// Norms of `U_n` for each `n` and log–log slopes fitted after discarding
/// the smallest `n`.
pub fn asymptotics_u(dim: usize, q: f64, ns: &[f64], cells: usize) -> Result<AsymptoticTable> {
    if ns.len() < 3 {
        return Err(param("need at least three values of n"));
    }
    if ns.windows(2).any(|w| w[1] <= w[0]) {
        return Err(param("n values must be increasing"));
    }
    let s_pow = sobolev_constant(dim)?.grad_sq;
    let p = ProblemParams::new(dim, 1.0, 0.0, q)?;
    let rows = ns
        .par_iter()
        .map(|&n| {
            let b = BubbleProfile::truncated(dim, n)?;
            let grid = Arc::new(b.grid(2.0, cells)?);
            let u = b.on_grid(grid)?;
            Ok(AsymptoticRow {
                n,
                norms: b.exact_norms(q, s_pow),
                grid_norms: Norms::of(&u, &p)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let fit = &rows[1..];
    let nn: Vec<f64> = fit.iter().map(|r| r.n).collect();
    let col = |f: &dyn Fn(&AsymptoticRow) -> f64| fit.iter().map(f).collect::<Vec<_>>();
    Ok(AsymptoticTable {
        dim,
        q,
        mass_slope: loglog_slope(&nn, &col(&|r| r.norms.mass)),
        grad_deficit_slope: loglog_slope(&nn, &col(&|r| r.norms.grad_deficit)),
        lcrit_deficit_slope: loglog_slope(&nn, &col(&|r| r.norms.lcrit_deficit)),
        lq_slope: loglog_slope(&nn, &col(&|r| r.norms.lq)),
        rows,
    })
}

/// `W_{n,t} = τ^{(N-2)/2} v(τ·)` with `v = u_c + tU_n`, `τ = ‖v‖₂/√c`,
/// carried exactly by the grid scaled by `1/τ`. Both inputs must share a grid.
pub fn superpose(u_c: &RadialFunction, bubble: &RadialFunction, t: f64, c: f64) -> Result<RadialFunction> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(param(format!("path parameter t = {t} must be nonnegative")));
    }
    if !Arc::ptr_eq(u_c.grid(), bubble.grid()) && u_c.grid().nodes() != bubble.grid().nodes() {
        return Err(param("superposition needs both profiles on the same grid"));
    }
    let v: Vec<f64> = u_c
        .values()
        .iter()
        .zip(bubble.values())
        .map(|(a, b)| a + t * b)
        .collect();
    let v = RadialFunction::new(u_c.grid().clone(), v)?;
    let tau = (v.mass() / c).sqrt();
    let grid = Arc::new(u_c.grid().scaled(1.0 / tau)?);
    let amp = tau.powf((u_c.dim() as f64 - 2.0) / 2.0);
    RadialFunction::new(grid, v.values().iter().map(|x| amp * x).collect())
}

/// `Φ_μ(W_{n,t})` from the norms of `u_c + tU_n`, without building `W`.
pub fn path_energy(u: &[f64], b: &[f64], grid: &RadialGrid, p: &ProblemParams, t: f64) -> f64 {
    let v: Vec<f64> = u.iter().zip(b).map(|(x, y)| x + t * y).collect();
    let w = grid.weights();
    let mass = radial::lp_pow_raw(w, &v, 2.0);
    let grad = radial::dirichlet(grid.stiffness(), &v);
    let lq = radial::lp_pow_raw(w, &v, p.q);
    let lcrit = radial::lp_pow_raw(w, &v, p.two_star());
    let tau = (mass / p.c).sqrt();
    let d = p.dim as f64;
    let lq_w = tau.powf(p.q * (d - 2.0) / 2.0 - d) * lq;
    0.5 * grad - lcrit / p.two_star() - p.mu * lq_w / p.q
}

/// Sup of a smooth function over 400 log-spaced points in `[1e-3, 1e3]`,
/// refined by golden-section search around the best sample.
pub fn sup_over_t(f: impl Fn(f64) -> f64) -> (f64, f64) {
    let ts: Vec<f64> = (0..400).map(|i| 10f64.powf(-3.0 + 6.0 * i as f64 / 399.0)).collect();
    let vals: Vec<f64> = ts.iter().map(|&t| f(t)).collect();
    let (k, _) = vals
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    let lo = ts[k.saturating_sub(1)];
    let hi = ts[(k + 1).min(ts.len() - 1)];
    let (t, v) = golden_max(&f, lo, hi);
    if v >= vals[k] {
        (t, v)
    } else {
        (ts[k], vals[k])
    }
}

fn golden_max(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..200 {
        if (b - a) <= 1e-14 * b {
            break;
        }
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        }
    }
    if f1 > f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScanRow {
    pub n: f64,
    pub mass: f64,
    pub grad_sq: f64,
    pub lcrit: f64,
    pub lq: f64,
    pub sup_t: f64,
    pub t_at_sup: f64,
    pub threshold: f64,
    pub pass: bool,
    /// `threshold - sup_t`.
    pub margin: f64,
    /// Why a row could not be evaluated (e.g. no admissible `R_n`).
    pub note: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScanReport {
    pub rows: Vec<ScanRow>,
    pub first_pass: Option<f64>,
    /// Reference level: `m_μ(c)` (subcritical) or 0 (critical).
    pub base_level: f64,
    pub threshold: f64,
}

impl ScanReport {
    fn finish(rows: Vec<ScanRow>, base_level: f64, threshold: f64) -> Self {
        let first_pass = rows.iter().find(|r| r.pass).map(|r| r.n);
        ScanReport {
            rows,
            first_pass,
            base_level,
            threshold,
        }
    }

    pub fn best_margin(&self) -> Option<f64> {
        self.rows
            .iter()
            .filter(|r| r.note.is_none())
            .map(|r| r.margin)
            .fold(None, |acc, m| Some(acc.map_or(m, |a: f64| a.max(m))))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,mass,grad_sq,lcrit,lq,sup_t,threshold,pass\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.n, r.mass, r.grad_sq, r.lcrit, r.lq, r.sup_t, r.threshold, r.pass
            ));
        }
        s
    }
}

/// For `q ≥ q̄`: sup over `t` of the fiber energy of `Ũ_n` against `S^{N/2}/N`.
pub fn threshold_scan_critical(p: &ProblemParams, ns: &[f64]) -> Result<ScanReport> {
    if p.exponents.is_subcritical() {
        return Err(Error::Hypothesis(format!(
            "critical scan needs q ≥ q̄ = {}, got q = {}",
            p.exponents.q_bar, p.q
        )));
    }
    let s_pow = sobolev_constant(p.dim)?.grad_sq;
    let threshold = s_pow / p.dim as f64;
    let rows = ns
        .par_iter()
        .map(|&n| match BubbleProfile::mass_normalized(p.dim, p.c, n) {
            Ok(b) => {
                let bn = b.exact_norms(p.q, s_pow);
                let norms = bn.norms();
                let (t, sup) = sup_over_t(|t| fiber_energy(&norms, p, t).unwrap_or(f64::NAN));
                Ok(ScanRow {
                    n,
                    mass: bn.mass,
                    grad_sq: bn.grad_sq,
                    lcrit: bn.lcrit,
                    lq: bn.lq,
                    sup_t: sup,
                    t_at_sup: t,
                    threshold,
                    pass: sup < threshold,
                    margin: threshold - sup,
                    note: None,
                })
            }
            Err(Error::Bracket { f_lo, .. }) if f_lo >= 0.0 => Ok(ScanRow {
                n,
                mass: f64::NAN,
                grad_sq: f64::NAN,
                lcrit: f64::NAN,
                lq: f64::NAN,
                sup_t: f64::NAN,
                t_at_sup: f64::NAN,
                threshold,
                pass: false,
                margin: f64::NAN,
                note: Some(format!(
                    "core mass {} already exceeds c: no outer radius exists",
                    f_lo + p.c
                )),
            }),
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScanReport::finish(rows, 0.0, threshold))
}

/// Mountain-pass path `t ↦ W_{n,t}` from `u_c`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PathReport {
    pub n: f64,
    /// `Φ_μ(W_{n,0})`, the valley level on the path grid.
    pub start_level: f64,
    /// First sampled `t` with `Φ_μ(W_{n,t}) < 2 m_μ(c)`.
    pub t_hat: f64,
    pub path_max: f64,
    pub t_at_max: f64,
    pub samples: Vec<(f64, f64)>,
}

/// Shared grid for `u_c` and `U_n`.
pub fn path_grid(u_c: &RadialFunction, n: f64, cells: usize) -> Result<Arc<RadialGrid>> {
    let b = BubbleProfile::truncated(u_c.dim(), n)?;
    Ok(Arc::new(b.grid(u_c.grid().r_max().max(2.0), cells)?))
}

pub fn mountain_pass_path(p: &ProblemParams, u_c: &RadialFunction, n: f64, cells: usize) -> Result<PathReport> {
    if !p.exponents.is_subcritical() {
        return Err(Error::Hypothesis("the valley path needs q < q̄".into()));
    }
    let grid = path_grid(u_c, n, cells)?;
    let u = u_c.resample(grid.clone())?;
    let b = truncated_instanton(p.dim, n, grid.clone())?;
    let e = |t: f64| path_energy(u.values(), b.values(), &grid, p, t);
    let start_level = e(0.0);
    let ts: Vec<f64> = std::iter::once(0.0)
        .chain((0..400).map(|i| 10f64.powf(-3.0 + 6.0 * i as f64 / 399.0)))
        .collect();
    let mut samples = Vec::new();
    let mut t_hat = None;
    for &t in &ts {
        let v = e(t);
        samples.push((t, v));
        if v < 2.0 * start_level {
            t_hat = Some(t);
            break;
        }
    }
    let t_hat = t_hat.ok_or_else(|| {
        Error::ScanExhausted(format!(
            "no t ≤ 1e3 brings Φ(W_{{n,t}}) below 2m = {} for n = {n}",
            2.0 * start_level
        ))
    })?;
    let k = samples
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .map(|(i, _)| i)
        .unwrap();
    let lo = samples[k.saturating_sub(1)].0.max(1e-12);
    let hi = samples[(k + 1).min(samples.len() - 1)].0;
    let (mut t_at_max, mut path_max) = (samples[k].0, samples[k].1);
    if hi > lo {
        let (t, v) = golden_max(&e, lo, hi);
        if v > path_max {
            t_at_max = t;
            path_max = v;
        }
    }
    Ok(PathReport {
        n,
        start_level,
        t_hat,
        path_max,
        t_at_max,
        samples,
    })
}

/// For `q < q̄`: sup of `Φ_μ(W_{n,t})` along each path against
/// `m_μ(c) + S^{N/2}/N`.
pub fn threshold_scan_subcritical(
    p: &ProblemParams,
    u_c: &RadialFunction,
    ns: &[f64],
    cells: usize,
) -> Result<ScanReport> {
    let s_pow = sobolev_constant(p.dim)?.grad_sq;
    let paths = ns
        .par_iter()
        .map(|&n| mountain_pass_path(p, u_c, n, cells))
        .collect::<Result<Vec<_>>>()?;
    let base = paths.first().map(|r| r.start_level).unwrap_or(f64::NAN);
    let rows = paths
        .iter()
        .map(|r| {
            let threshold = r.start_level + s_pow / p.dim as f64;
            let b = BubbleProfile::truncated(p.dim, r.n).expect("validated above");
            let bn = b.exact_norms(p.q, s_pow);
            ScanRow {
                n: r.n,
                mass: bn.mass,
                grad_sq: bn.grad_sq,
                lcrit: bn.lcrit,
                lq: bn.lq,
                sup_t: r.path_max,
                t_at_sup: r.t_at_max,
                threshold,
                pass: r.path_max < threshold && r.path_max > r.start_level,
                margin: threshold - r.path_max,
                note: None,
            }
        })
        .collect();
    Ok(ScanReport::finish(rows, base, s_pow / p.dim as f64 + base))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncated_profile_values() {
        for dim in [3, 4, 5] {
            let b = BubbleProfile::truncated(dim, 10.0).unwrap();
            let a = instanton_amplitude(dim);
            let h = (dim as f64 - 2.0) / 2.0;
            assert!((b.eval(0.0) - a * 10f64.powf(h)).abs() < 1e-12 * b.eval(0.0));
            assert_eq!(b.eval(2.0), 0.0);
            assert_eq!(b.eval(3.0), 0.0);
            let left = b.eval(1.0 - 1e-13);
            let right = b.eval(1.0);
            assert!((left - right).abs() < 1e-10 * right);
            assert!((right - a * (10.0 / 101.0f64).powf(h)).abs() < 1e-14);
        }
    }

    #[test]
    fn under_resolved_grid_is_refused() {
        let g = Arc::new(RadialGrid::new(3, 2.0, 64, crate::radial::Grading::Uniform).unwrap());
        assert!(matches!(truncated_instanton(3, 100.0, g), Err(Error::Resolution(_))));
    }

    #[test]
    fn exact_norms_match_grid() {
        let s = sobolev_constant(3).unwrap().grad_sq;
        let b = BubbleProfile::truncated(3, 20.0).unwrap();
        let g = Arc::new(b.grid(2.0, 4000).unwrap());
        let u = b.on_grid(g).unwrap();
        let e = b.exact_norms(4.0, s);
        let p = ProblemParams::new(3, 1.0, 0.0, 4.0).unwrap();
        let n = Norms::of(&u, &p).unwrap();
        assert!((n.mass / e.mass - 1.0).abs() < 1e-6);
        assert!((n.grad_sq / e.grad_sq - 1.0).abs() < 1e-5);
        assert!((n.lcrit / e.lcrit - 1.0).abs() < 1e-6);
        assert!((n.lq / e.lq - 1.0).abs() < 1e-6);
        // N = 3 mass: ω A² [(n - atan n)/n² + (n/(1+n²)) ∫_1^2 r²(2-r)² dr]
        let a2 = instanton_amplitude(3).powi(2);
        let closed = 4.0 * std::f64::consts::PI
            * a2
            * ((20.0 - 20f64.atan()) / 400.0 + 20.0 / 401.0 * (8.0 / 15.0));
        let annulus = annulus_moment(3, 1.0, 2.0);
        assert!((annulus - 8.0 / 15.0).abs() < 1e-14);
        assert!((e.mass / closed - 1.0).abs() < 1e-12);
    }

    #[test]
    fn annulus_moment_matches_quadrature() {
        for (dim, a, r) in [(3, 5.0, 5.5), (4, 2.0, 40.0), (5, 0.5, 0.6)] {
            let q = quad::integrate(
                |x: f64| x.powi(dim as i32 - 1) * (r - x).powi(2) / (r - a).powi(2),
                a,
                r,
                1e-15,
            );
            assert!((annulus_moment(dim, a, r) / q - 1.0).abs() < 1e-12);
        }
        // thin shell: a^{N-1} d / 3
        let r = 5.0 + 1e-9;
        let d = r - 5.0;
        assert!((annulus_moment(3, 5.0, r) / (25.0 * d / 3.0) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn rn_roots_reproduce_mass() {
        for (dim, c, n) in [(4, 1.0, 64.0), (3, 100.0, 100.0), (5, 20.0, 20.0)] {
            let b = BubbleProfile::mass_normalized(dim, c, n).unwrap();
            let (rho, r_n) = b.radii();
            assert!(r_n > rho);
            assert!((b.mass() / c - 1.0).abs() < 1e-8);
        }
        let small = solve_rn(4, 1.0, 128.0).unwrap();
        let big = solve_rn(4, 2.0, 128.0).unwrap();
        assert!(big > small);
        assert!(matches!(solve_rn(3, 1.0, 64.0), Err(Error::Bracket { .. })));
    }

    #[test]
    fn mass_normalized_on_grid() {
        let b = BubbleProfile::mass_normalized(4, 1.0, 64.0).unwrap();
        let (_, r_n) = b.radii();
        let g = Arc::new(b.grid(r_n, 6000).unwrap());
        let (u, _, k) = mass_normalized_instanton(4, 1.0, 64.0, g).unwrap();
        assert!((u.mass() - 1.0).abs() < 1e-12);
        assert!((k - 1.0).abs() < 1e-3);
    }

    #[test]
    fn superposition_properties() {
        let g = Arc::new(bubble_grid(3, 8.0, 30.0, 3000, &[1.0, 2.0]).unwrap());
        let uc = RadialFunction::from_fn(g.clone(), |r| (-r * r / 4.0).exp()).unwrap();
        let c = uc.mass();
        let b = truncated_instanton(3, 8.0, g).unwrap();
        let w0 = superpose(&uc, &b, 0.0, c).unwrap();
        assert_eq!(w0.values(), uc.values());
        for t in [0.1, 1.0, 5.0] {
            let w = superpose(&uc, &b, t, c).unwrap();
            assert!((w.mass() / c - 1.0).abs() < 1e-12);
            let v: Vec<f64> = uc.values().iter().zip(b.values()).map(|(x, y)| x + t * y).collect();
            let v = RadialFunction::new(uc.grid().clone(), v).unwrap();
            assert!((w.grad_norm_sq() / v.grad_norm_sq() - 1.0).abs() < 1e-12);
            let p = ProblemParams::new(3, c, 1.0, 2.5).unwrap();
            let direct = crate::functionals::energy(&w, &p).unwrap();
            let fast = path_energy(uc.values(), b.values(), uc.grid(), &p, t);
            assert!((direct - fast).abs() < 1e-10 * direct.abs().max(1.0));
        }
        assert!(superpose(&uc, &b, -1.0, c).is_err());
    }

    #[test]
    fn sup_of_fiber_peak() {
        let (t, v) = sup_over_t(|t| t * t / 2.0 - t.powi(6) / 6.0);
        assert!((t - 1.0).abs() < 1e-6);
        assert!((v - 1.0 / 3.0).abs() < 1e-14);
        // 0 < g ≤ 1/N on (0, (2*/2)^{1/(2*-2)})
        let tmax = 3f64.powf(0.25);
        for k in 1..2000 {
            let t = tmax * k as f64 / 2000.0;
            let g = t * t / 2.0 - t.powi(6) / 6.0;
            assert!(g > 0.0 && g <= 1.0 / 3.0 + 1e-16);
        }
    }
}
