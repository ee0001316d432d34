//! Constrained minimization on the mass sphere `S_c`.
//!
//! Both solvers run a Sobolev-preconditioned projected gradient method on
//! nodal values: the Euclidean gradient is mapped through `(aA + σW)^{-1}`,
//! projected onto the tangent space `{v : Σ W u v = 0}` in that metric, and
//! the step is retracted by renormalizing to mass `c`. Steps are accepted by
//! an Armijo test and halved otherwise.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constants::{instanton_amplitude, thresholds};
use crate::error::{param, Error, Result};
use crate::functionals::{
    energy_report, solve_shifted_dirichlet as solve_shifted, EnergyReport, Norms, ProblemParams,
};
use crate::pohozaev::fiber_maximizer;
use crate::radial::{self, Grading, RadialFunction, RadialGrid};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub max_iters: usize,
    pub step0: f64,
    pub grad_tol: f64,
    /// Upper bound on `‖∇u‖²` (the radius of `V(c)`); defaults to `ρ0(c)`.
    pub v_cap: Option<f64>,
    pub seed: u64,
    pub cells: usize,
    /// Truncation radius of the first grid; widened to `50/√(-λ)` afterwards.
    pub r_max: Option<f64>,
    pub grading: Grading,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_iters: 20_000,
            step0: 1.0,
            grad_tol: 1e-8,
            v_cap: None,
            seed: 0,
            cells: 3000,
            r_max: None,
            grading: Grading::Graded(2.0),
        }
    }
}

impl SolveOptions {
    fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(param("max_iters must be at least 1"));
        }
        if !(self.grad_tol > 0.0 && self.step0 > 0.0) {
            return Err(param("tolerance and initial step must be positive"));
        }
        Ok(())
    }
}

pub const DEFAULT_R_MAX: f64 = 50.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelName {
    LocalMin,
    MinimaxGroundState,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub phi: f64,
    pub projected_gradient: f64,
    pub grad_sq: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SolutionReport {
    #[serde(skip)]
    pub u: RadialFunction,
    pub energy_report: EnergyReport,
    pub level_name: LevelName,
    pub iterations: usize,
    pub converged: bool,
    pub history: Vec<HistoryEntry>,
    pub r_max: f64,
    /// The `V(c)` radius enforced during the run, if any.
    pub v_cap: Option<f64>,
    pub rho0_convention: Option<String>,
    /// `J(u)` at the last iterate, for the minimax solver.
    pub level: f64,
    /// Constrained stationarity residual on the solver grid, before the final
    /// exact dilation (if any).
    pub stationarity: f64,
}

impl SolutionReport {
    pub fn history_csv(&self) -> String {
        let mut s = String::from("iter,phi,projected_gradient,grad_sq\n");
        for (i, h) in self.history.iter().enumerate() {
            s.push_str(&format!("{i},{},{},{}\n", h.phi, h.projected_gradient, h.grad_sq));
        }
        s
    }
}

/// Objective on nodal values: returns `(value, Euclidean gradient, a)` where
/// `a` scales the stiffness part of the preconditioner.
trait Objective {
    fn eval(&self, u: &[f64]) -> Result<(f64, Vec<f64>, f64)>;
    /// Reported energy and `‖∇u‖²` for the history.
    fn phi(&self, u: &[f64]) -> (f64, f64);
    /// A direction the continuum objective is invariant along; removed from
    /// steps and from the stationarity residual.
    fn gauge(&self, _u: &[f64]) -> Option<Vec<f64>> {
        None
    }
}

struct Descent<'a> {
    grid: &'a RadialGrid,
    c: f64,
}

struct DescentOutcome {
    values: Vec<f64>,
    iterations: usize,
    converged: bool,
    history: Vec<HistoryEntry>,
    value: f64,
}

fn wdot(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    w.iter().zip(a).zip(b).map(|((w, x), y)| w * x * y).sum()
}

fn dual_norm(grid: &RadialGrid, r: &[f64]) -> f64 {
    dot(r, &solve_shifted(grid, r, 1.0)).max(0.0).sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Descent<'_> {
    fn normalize(&self, v: &mut [f64]) {
        let m = radial::lp_pow_raw(self.grid.weights(), v, 2.0);
        let k = (self.c / m).sqrt();
        v.iter_mut().for_each(|x| *x *= k);
    }

    /// `(H^{-1} norm of G - λWu - βHv, λ)` with `H = A + W`; the `v` term is
    /// present only when a gauge direction is given.
    fn kkt(&self, u: &[f64], g: &[f64], gauge: Option<&[f64]>) -> (f64, f64) {
        let w = self.grid.weights();
        let lam = dot(g, u) / wdot(w, u, u);
        let res: Vec<f64> = g
            .iter()
            .zip(w)
            .zip(u)
            .map(|((g, w), x)| g - lam * w * x)
            .collect();
        let Some(v) = gauge else {
            return (dual_norm(self.grid, &res), lam);
        };
        let e1: Vec<f64> = w.iter().zip(u).map(|(w, x)| w * x).collect();
        let mut e2 = radial::stiffness_apply(self.grid.stiffness(), v);
        e2.iter_mut().zip(w).zip(v).for_each(|((e, w), v)| *e += w * v);
        let h1 = solve_shifted(self.grid, &e1, 1.0);
        let hg = solve_shifted(self.grid, g, 1.0);
        let (m11, m12, m22) = (dot(&e1, &h1), dot(&e1, v), dot(&e2, v));
        let (b1, b2) = (dot(g, &h1), dot(g, v));
        let det = m11 * m22 - m12 * m12;
        if !(det > 0.0) {
            return (dual_norm(self.grid, &res), lam);
        }
        let quad = (b1 * (m22 * b1 - m12 * b2) + b2 * (m11 * b2 - m12 * b1)) / det;
        ((dot(g, &hg) - quad).max(0.0).sqrt(), lam)
    }

    fn run(
        &self,
        obj: &impl Objective,
        mut u: Vec<f64>,
        opts: &SolveOptions,
        cap: Option<f64>,
    ) -> Result<DescentOutcome> {
        let w = self.grid.weights();
        // homogeneous Dirichlet condition at the truncation radius
        if let Some(last) = u.last_mut() {
            *last = 0.0;
        }
        self.normalize(&mut u);
        let (mut val, mut g, mut a) = obj.eval(&u)?;
        let mut step = opts.step0;
        let mut history = Vec::new();
        let mut converged = false;
        let mut iters = 0;
        let grad_of = |v: &[f64]| radial::dirichlet(self.grid.stiffness(), v);
        while iters < opts.max_iters {
            let gauge = obj.gauge(&u);
            let (kkt, lam) = self.kkt(&u, &g, gauge.as_deref());
            let (phi, gsq) = obj.phi(&u);
            history.push(HistoryEntry {
                phi,
                projected_gradient: kkt,
                grad_sq: gsq,
            });
            if kkt <= opts.grad_tol {
                converged = true;
                break;
            }
            iters += 1;
            let sigma = (-lam).max(1e-3) / a;
            let z: Vec<f64> = solve_shifted(self.grid, &g, sigma).iter().map(|x| x / a).collect();
            let wu: Vec<f64> = w.iter().zip(&u).map(|(w, x)| w * x).collect();
            let y: Vec<f64> = solve_shifted(self.grid, &wu, sigma).iter().map(|x| x / a).collect();
            let alpha = dot(&wu, &z) / dot(&wu, &y);
            let mut d: Vec<f64> = z.iter().zip(&y).map(|(z, y)| z - alpha * y).collect();
            if let Some(v) = &gauge {
                // B-orthogonal projection off span{y, v}, B = a(A + σW)
                let mut bv = radial::stiffness_apply(self.grid.stiffness(), v);
                bv.iter_mut().zip(w).zip(v).for_each(|((b, w), v)| *b = a * (*b + sigma * w * v));
                let k = dot(v, &wu) / dot(&y, &wu);
                let vp: Vec<f64> = v.iter().zip(&y).map(|(v, y)| v - k * y).collect();
                let bvp: Vec<f64> = bv.iter().zip(&wu).map(|(b, m)| b - k * m).collect();
                let vv = dot(&vp, &bvp);
                if vv > 0.0 {
                    let beta = dot(&d, &bvp) / vv;
                    d.iter_mut().zip(&vp).for_each(|(d, v)| *d -= beta * v);
                }
            }
            let slope = dot(&g, &d);
            if !(slope > 0.0) {
                break;
            }
            let mut accepted = false;
            for _ in 0..60 {
                let mut trial: Vec<f64> = u.iter().zip(&d).map(|(x, d)| x - step * d).collect();
                self.normalize(&mut trial);
                if let Some(cap) = cap {
                    if grad_of(&trial) >= cap {
                        step *= 0.5;
                        continue;
                    }
                }
                match obj.eval(&trial) {
                    Ok((tv, tg, ta)) => {
                        let armijo = tv <= val - 1e-4 * step * slope;
                        // at round-off level accept non-increasing steps that reduce the residual
                        let flat = tv <= val + 4.0 * f64::EPSILON * val.abs()
                            && tv <= val
                            && self.kkt(&trial, &tg, obj.gauge(&trial).as_deref()).0 < kkt;
                        if armijo || flat {
                            u = trial;
                            val = tv;
                            g = tg;
                            a = ta;
                            accepted = true;
                            break;
                        }
                    }
                    Err(Error::NoCriticalPoint(_)) => {}
                    Err(e) => return Err(e),
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
            step = (step * 2.0).min(64.0 * opts.step0);
        }
        Ok(DescentOutcome {
            values: u,
            iterations: iters,
            converged,
            history,
            value: val,
        })
    }
}

struct Energy<'a> {
    grid: &'a RadialGrid,
    p: &'a ProblemParams,
}

impl Objective for Energy<'_> {
    fn eval(&self, u: &[f64]) -> Result<(f64, Vec<f64>, f64)> {
        let w = self.grid.weights();
        let au = radial::stiffness_apply(self.grid.stiffness(), u);
        let mut val = 0.5 * dot(&au, u);
        let mut g = au;
        for i in 0..u.len() {
            val -= w[i] * self.p.big_f(u[i]);
            g[i] -= w[i] * self.p.f(u[i]);
        }
        Ok((val, g, 1.0))
    }

    fn phi(&self, u: &[f64]) -> (f64, f64) {
        let (v, _, _) = self.eval(u).expect("energy is total");
        (v, radial::dirichlet(self.grid.stiffness(), u))
    }
}

/// `J(u) = max_t Φ_μ(t^{N/2}u_t)` with its envelope gradient.
struct FiberMax<'a> {
    grid: &'a RadialGrid,
    p: &'a ProblemParams,
}

impl FiberMax<'_> {
    fn norms(&self, u: &[f64]) -> Norms {
        let w = self.grid.weights();
        Norms {
            mass: radial::lp_pow_raw(w, u, 2.0),
            grad_sq: radial::dirichlet(self.grid.stiffness(), u),
            lq: radial::lp_pow_raw(w, u, self.p.q),
            lcrit: radial::lp_pow_raw(w, u, self.p.two_star()),
        }
    }
}

impl Objective for FiberMax<'_> {
    fn eval(&self, u: &[f64]) -> Result<(f64, Vec<f64>, f64)> {
        let n = self.norms(u);
        let cp = fiber_maximizer(&n, self.p)?;
        let t = cp.t;
        let p = self.p;
        let tq = t.powf(p.exponents.q_gamma());
        let ts = t.powf(p.two_star());
        let w = self.grid.weights();
        let mut g = radial::stiffness_apply(self.grid.stiffness(), u);
        for i in 0..u.len() {
            let a = u[i].abs();
            let lq_part = if a == 0.0 { 0.0 } else { a.powf(p.q - 2.0) * u[i] };
            let crit_part = if a == 0.0 { 0.0 } else { a.powf(p.two_star() - 2.0) * u[i] };
            g[i] = t * t * g[i] - w[i] * (p.mu * tq * lq_part + ts * crit_part);
        }
        Ok((cp.value, g, t * t))
    }

    fn gauge(&self, u: &[f64]) -> Option<Vec<f64>> {
        // generator of u -> t^{N/2} u(t·) at t = 1
        let r = self.grid.nodes();
        let h = self.p.dim as f64 / 2.0;
        let m = u.len();
        let mut v = vec![0.0; m];
        for i in 0..m {
            let du = if i == 0 {
                0.0
            } else if i + 1 == m {
                (u[i] - u[i - 1]) / (r[i] - r[i - 1])
            } else {
                let (h0, h1) = (r[i] - r[i - 1], r[i + 1] - r[i]);
                (u[i + 1] * h0 * h0 - u[i - 1] * h1 * h1 + u[i] * (h1 * h1 - h0 * h0))
                    / (h0 * h1 * (h0 + h1))
            };
            v[i] = h * u[i] + r[i] * du;
        }
        v[m - 1] = 0.0;
        Some(v)
    }

    fn phi(&self, u: &[f64]) -> (f64, f64) {
        let n = self.norms(u);
        let v = fiber_maximizer(&n, self.p).map(|c| c.value).unwrap_or(f64::NAN);
        (v, n.grad_sq)
    }
}

fn check_init(init: &RadialFunction, p: &ProblemParams) -> Result<()> {
    if init.dim() != p.dim {
        return Err(param("initial profile dimension differs from N"));
    }
    if !(init.mass() > 0.0) {
        return Err(param("initial profile has zero mass"));
    }
    Ok(())
}

fn grid_for(init_grid: &RadialGrid, r_max: f64, opts: &SolveOptions) -> Result<Arc<RadialGrid>> {
    Ok(Arc::new(RadialGrid::new(init_grid.dim(), r_max, opts.cells, opts.grading)?))
}

/// `50/√(-λ)`, the radius beyond which the solution is negligible.
pub fn decay_radius(lambda: f64) -> Option<f64> {
    (lambda < 0.0).then(|| DEFAULT_R_MAX / (-lambda).sqrt())
}

/// Minimizes `Φ_μ` over `V(c) = {u ∈ S_c : ‖∇u‖² < ρ0}` for `q < q̄`.
pub fn local_minimize(p: &ProblemParams, init: &RadialFunction, opts: &SolveOptions) -> Result<SolutionReport> {
    opts.validate()?;
    check_init(init, p)?;
    if !p.exponents.is_subcritical() {
        return Err(Error::Hypothesis(format!(
            "the local minimum exists for q < q̄ = {}, got q = {}",
            p.exponents.q_bar, p.q
        )));
    }
    if p.mu <= 0.0 {
        return Err(param("the local minimum needs μ > 0"));
    }
    let th = thresholds(p.dim, p.q, p.mu, p.c)?;
    let c0 = th.c0.expect("populated below q̄");
    if p.c >= c0 {
        return Err(param(format!("mass c = {} is not below c0 = {c0}", p.c)));
    }
    let cap = opts.v_cap.or(th.rho0);
    let mut r_max = opts.r_max.unwrap_or(DEFAULT_R_MAX);
    let mut start = init.clone();
    let mut total_iters = 0;
    let mut history = Vec::new();
    for _round in 0..4 {
        let grid = grid_for(init.grid(), r_max, opts)?;
        let mut u0 = start.resample(grid.clone())?.into_values();
        let m = radial::lp_pow_raw(grid.weights(), &u0, 2.0);
        let k = (p.c / m).sqrt();
        u0.iter_mut().for_each(|x| *x *= k);
        if let Some(cap) = cap {
            let g0 = radial::dirichlet(grid.stiffness(), &u0);
            if g0 >= cap {
                return Err(param(format!(
                    "initial profile has ‖∇u‖² = {g0} outside V(c) (ρ0 = {cap})"
                )));
            }
        }
        let engine = Descent { grid: &grid, c: p.c };
        let mut out = engine.run(&Energy { grid: &grid, p }, u0, opts, cap)?;
        total_iters += out.iterations;
        history.extend(out.history.iter().copied());
        if !out.converged {
            // the descent stalls at round-off; finish with Newton if it stays in V(c)
            let polished = newton_polish(&grid, p, out.values.clone(), opts)?;
            let inside = cap.is_none_or(|cap| radial::dirichlet(grid.stiffness(), &polished.values) < cap);
            if polished.converged && inside && polished.value <= out.value + 1e-10 * out.value.abs() {
                total_iters += polished.iterations;
                history.extend(polished.history.iter().copied());
                out = polished;
            }
        }
        let stationarity = history.last().map_or(f64::NAN, |h: &HistoryEntry| h.projected_gradient);
        let u = RadialFunction::new(grid.clone(), out.values)?;
        let rep = energy_report(&u, p)?;
        let needed = decay_radius(rep.lambda).unwrap_or(r_max);
        if !out.converged || needed <= r_max * (1.0 + 1e-9) {
            return Ok(SolutionReport {
                u,
                energy_report: rep,
                level_name: LevelName::LocalMin,
                iterations: total_iters,
                converged: out.converged,
                history,
                r_max,
                v_cap: cap,
                rho0_convention: Some(crate::constants::ThresholdReport::RHO0_CONVENTION.into()),
                level: rep.phi,
                stationarity,
            });
        }
        r_max = needed;
        start = u;
    }
    Err(Error::Degenerate("truncation radius did not settle".into()))
}

/// Minimizes `J(u) = max_t Φ_μ(t^{N/2}u_t)` over `S_c` for `q ≥ q̄`; the
/// result is the minimizer dilated exactly onto `{P_μ = 0}`.
pub fn ground_state_minimax(
    p: &ProblemParams,
    init: &RadialFunction,
    opts: &SolveOptions,
) -> Result<SolutionReport> {
    opts.validate()?;
    check_init(init, p)?;
    if p.exponents.is_subcritical() {
        return Err(Error::Hypothesis(format!(
            "the minimax characterization needs q ≥ q̄ = {}, got q = {}",
            p.exponents.q_bar, p.q
        )));
    }
    if p.exponents.is_l2_critical() {
        let th = thresholds(p.dim, p.q, p.mu.max(f64::MIN_POSITIVE), p.c)?;
        let alpha = th.alpha_nq.expect("closed form at q̄");
        if p.mu >= alpha {
            return Err(param(format!("μ = {} must be below α(N, q̄) = {alpha}", p.mu)));
        }
    }
    let r_max = opts.r_max.unwrap_or(DEFAULT_R_MAX);
    let grid = grid_for(init.grid(), r_max, opts)?;
    // the descent only needs to reach the basin of the Newton polish, so it
    // runs on a coarser grid
    let coarse = SolveOptions {
        grad_tol: opts.grad_tol.max(MINIMAX_HANDOFF),
        cells: opts.cells.min(MINIMAX_COARSE_CELLS),
        max_iters: opts.max_iters.min(5000),
        ..opts.clone()
    };
    let coarse_grid = grid_for(init.grid(), r_max, &coarse)?;
    let u0 = init.resample(coarse_grid.clone())?.into_values();
    let engine = Descent { grid: &coarse_grid, c: p.c };
    let out = engine.run(&FiberMax { grid: &coarse_grid, p }, u0, &coarse, None)?;
    let u = RadialFunction::new(coarse_grid.clone(), out.values)?;
    // recentre on the fiber maximum, then polish on a fixed grid so that
    // every start lands on the same discrete critical point
    let cp = fiber_maximizer(&Norms::of(&u, p)?, p)?;
    let centred = u.dilate(cp.t)?.resample(grid.clone())?;
    let mut history = out.history;
    let polished = newton_polish(&grid, p, centred.into_values(), opts)?;
    history.extend(polished.history.iter().copied());
    let u = RadialFunction::new(grid.clone(), polished.values)?;
    let cp = fiber_maximizer(&Norms::of(&u, p)?, p)?;
    let projected = u.dilate(cp.t)?;
    let rep = energy_report(&projected, p)?;
    Ok(SolutionReport {
        r_max: projected.grid().r_max(),
        u: projected,
        energy_report: rep,
        level_name: LevelName::MinimaxGroundState,
        iterations: out.iterations + polished.iterations,
        converged: polished.converged,
        history,
        v_cap: None,
        rho0_convention: None,
        level: cp.value,
        stationarity: polished.history.last().map_or(f64::NAN, |h| h.projected_gradient),
    })
}

/// Stationarity level at which the minimax descent hands over to Newton.
const MINIMAX_HANDOFF: f64 = 1e-3;
const MINIMAX_COARSE_CELLS: usize = 2000;

/// Damped Newton on `Au - W f(u) = λ W u`, `uᵀWu = c`, with `u = 0` at the
/// outer node. Converges to the critical point nearest the start.
fn newton_polish(
    grid: &RadialGrid,
    p: &ProblemParams,
    mut u: Vec<f64>,
    opts: &SolveOptions,
) -> Result<DescentOutcome> {
    let engine = Descent { grid, c: p.c };
    let w = grid.weights();
    let k = grid.stiffness();
    let m = u.len();
    u[m - 1] = 0.0;
    engine.normalize(&mut u);
    let two_star = p.two_star();
    let fprime = |t: f64| {
        let a = t.abs();
        if a == 0.0 {
            0.0
        } else {
            (p.q - 1.0) * p.mu * a.powf(p.q - 2.0) + (two_star - 1.0) * a.powf(two_star - 2.0)
        }
    };
    let gradient = |u: &[f64]| {
        let mut g = radial::stiffness_apply(k, u);
        for i in 0..u.len() {
            g[i] -= w[i] * p.f(u[i]);
        }
        g
    };
    let residual = |u: &[f64], lam: f64| -> (Vec<f64>, f64) {
        let mut r = gradient(u);
        r.iter_mut().zip(w).zip(u).for_each(|((r, w), x)| *r -= lam * w * x);
        r[m - 1] = 0.0;
        let mres = wdot(w, u, u) - p.c;
        let norm = dual_norm(grid, &r);
        (r, norm + mres.abs())
    };
    let mut lam = {
        let g = gradient(&u);
        dot(&g, &u) / wdot(w, &u, &u)
    };
    let mut history = Vec::new();
    let mut converged = false;
    let mut iters = 0;
    let (mut r, mut merit) = residual(&u, lam);
    let energy = Energy { grid, p };
    while iters < 100 {
        let (kkt, _) = engine.kkt(&u, &gradient(&u), None);
        let (phi, gsq) = energy.phi(&u);
        history.push(HistoryEntry {
            phi,
            projected_gradient: kkt,
            grad_sq: gsq,
        });
        if kkt <= opts.grad_tol && (wdot(w, &u, &u) - p.c).abs() <= 1e-12 * p.c {
            converged = true;
            break;
        }
        iters += 1;
        let diag: Vec<f64> = (0..m).map(|i| -w[i] * (fprime(u[i]) + lam)).collect();
        let neg_r: Vec<f64> = r.iter().map(|x| -x).collect();
        let wu: Vec<f64> = w.iter().zip(&u).map(|(w, x)| w * x).collect();
        let (Some(x1), Some(x2)) = (
            tridiagonal_dirichlet(k, &diag, &neg_r),
            tridiagonal_dirichlet(k, &diag, &wu),
        ) else {
            break;
        };
        let mres = wdot(w, &u, &u) - p.c;
        let dlam = (-mres - 2.0 * dot(&wu, &x1)) / (2.0 * dot(&wu, &x2));
        let du: Vec<f64> = x1.iter().zip(&x2).map(|(a, b)| a + dlam * b).collect();
        let mut s = 1.0;
        let mut accepted = false;
        while s > 1e-6 {
            let trial: Vec<f64> = u.iter().zip(&du).map(|(x, d)| x + s * d).collect();
            let tl = lam + s * dlam;
            let (tr, tm) = residual(&trial, tl);
            if tm < merit || (tm <= merit * (1.0 + 1e-12) && s == 1.0) {
                u = trial;
                lam = tl;
                r = tr;
                merit = tm;
                accepted = true;
                break;
            }
            s *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let value = energy.phi(&u).0;
    Ok(DescentOutcome {
        values: u,
        iterations: iters,
        converged,
        history,
        value,
    })
}

/// Solves `(A + diag(d)) z = r` on all but the outer node, `z = 0` there.
/// `None` on a zero pivot.
fn tridiagonal_dirichlet(k: &[f64], d: &[f64], r: &[f64]) -> Option<Vec<f64>> {
    let n = r.len() - 1;
    let diag = |i: usize| {
        let left = if i > 0 { k[i - 1] } else { 0.0 };
        left + k[i] + d[i]
    };
    let mut c = vec![0.0; n];
    let mut e = vec![0.0; n];
    let b0 = diag(0);
    if b0 == 0.0 {
        return None;
    }
    c[0] = -k[0] / b0;
    e[0] = r[0] / b0;
    for i in 1..n {
        let a = -k[i - 1];
        let m = diag(i) - a * c[i - 1];
        if m == 0.0 || !m.is_finite() {
            return None;
        }
        c[i] = -k[i] / m;
        e[i] = (r[i] - a * e[i - 1]) / m;
    }
    let mut z = vec![0.0; n + 1];
    z[n - 1] = e[n - 1];
    for i in (0..n - 1).rev() {
        z[i] = e[i] - c[i] * z[i + 1];
    }
    Some(z)
}

/// Gaussian `e^{-r²/(2w²)}` scaled to mass `c`.
pub fn gaussian_init(grid: Arc<RadialGrid>, c: f64, width: f64) -> Result<RadialFunction> {
    let u = RadialFunction::from_fn(grid, |r| (-r * r / (2.0 * width * width)).exp())?;
    let k = (c / u.mass()).sqrt();
    Ok(u.scale(k))
}

/// `(1-θ) U_λ + θ G`: instanton of concentration `λ` blended with a
/// Gaussian of width `w`, scaled to mass `c`.
pub fn blended_init(
    grid: Arc<RadialGrid>,
    c: f64,
    concentration: f64,
    width: f64,
    theta: f64,
) -> Result<RadialFunction> {
    let dim = grid.dim();
    let a = instanton_amplitude(dim);
    let h = (dim as f64 - 2.0) / 2.0;
    let l = concentration;
    let u = RadialFunction::from_fn(grid, |r| {
        let bubble = a * (l / (1.0 + l * l * r * r)).powf(h) * (-r * r / (8.0 * width * width)).exp();
        let gauss = (-r * r / (2.0 * width * width)).exp();
        (1.0 - theta) * bubble + theta * gauss
    })?;
    let k = (c / u.mass()).sqrt();
    Ok(u.scale(k))
}

/// Random blended initializer drawn from `seed`.
pub fn random_blended_init(grid: Arc<RadialGrid>, c: f64, seed: u64) -> Result<RadialFunction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let conc = rng.random_range(0.5..2.0);
    let width = rng.random_range(0.7..2.0);
    let theta = rng.random_range(0.2..0.8);
    blended_init(grid, c, conc, width, theta)
}

/// Built-in functionals on the unit sphere of `ℝ^d`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToyFunctional {
    /// `x_d`.
    Height,
    /// `½ Σ k x_k²`.
    Quadratic,
    /// `Σ (x_k² - 1/d)²`.
    DoubleWell,
}

impl std::str::FromStr for ToyFunctional {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "height" => Ok(ToyFunctional::Height),
            "quadratic" => Ok(ToyFunctional::Quadratic),
            "double-well" | "double_well" => Ok(ToyFunctional::DoubleWell),
            _ => Err(Error::Parse(format!("unknown functional '{s}'"))),
        }
    }
}

impl ToyFunctional {
    pub fn value(&self, x: &[f64]) -> f64 {
        let d = x.len() as f64;
        match self {
            ToyFunctional::Height => x[x.len() - 1],
            ToyFunctional::Quadratic => {
                x.iter().enumerate().map(|(k, v)| 0.5 * (k + 1) as f64 * v * v).sum()
            }
            ToyFunctional::DoubleWell => x.iter().map(|v| (v * v - 1.0 / d).powi(2)).sum(),
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let d = x.len() as f64;
        match self {
            ToyFunctional::Height => {
                let mut g = vec![0.0; x.len()];
                g[x.len() - 1] = 1.0;
                g
            }
            ToyFunctional::Quadratic => {
                x.iter().enumerate().map(|(k, v)| (k + 1) as f64 * v).collect()
            }
            ToyFunctional::DoubleWell => x.iter().map(|v| 4.0 * v * (v * v - 1.0 / d)).collect(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FlowStep {
    pub time: f64,
    pub norm: f64,
    pub value: f64,
    /// `Σ ‖x_{k+1} - x_k‖` so far.
    pub displacement: f64,
    /// `Σ h_k ‖W(x_k)‖` so far, the bound for `displacement`.
    pub bound: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trajectory {
    pub dim: usize,
    pub functional: ToyFunctional,
    pub steps: Vec<FlowStep>,
    pub points: Vec<Vec<f64>>,
    pub rejected_steps: usize,
}

impl Trajectory {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("time,norm,value,displacement,bound\n");
        for st in &self.steps {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                st.time, st.norm, st.value, st.displacement, st.bound
            ));
        }
        s
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Explicit steps of the negative tangential gradient flow on the unit
/// sphere, each followed by renormalization; a step that would increase the
/// functional is retried with half the step.
pub fn deformation_flow_demo(
    functional: ToyFunctional,
    start: &[f64],
    duration: f64,
    step: f64,
) -> Result<Trajectory> {
    let dim = start.len();
    if dim < 2 {
        return Err(param("the sphere demo needs dimension at least 2"));
    }
    if ((norm(start) - 1.0).abs()) > 1e-8 {
        return Err(param(format!("start has norm {} (not on the unit sphere)", norm(start))));
    }
    if !(step > 0.0 && duration >= 0.0) {
        return Err(param("step must be positive and duration nonnegative"));
    }
    let mut x = start.to_vec();
    let mut f = functional.value(&x);
    let mut t = 0.0;
    let mut disp = 0.0;
    let mut bound = 0.0;
    let mut rejected = 0;
    let mut steps = vec![FlowStep {
        time: 0.0,
        norm: norm(&x),
        value: f,
        displacement: 0.0,
        bound: 0.0,
    }];
    let mut points = vec![x.clone()];
    while t < duration - 1e-15 {
        let g = functional.gradient(&x);
        let gx = dot(&g, &x);
        let w: Vec<f64> = g.iter().zip(&x).map(|(g, x)| -(g - gx * x)).collect();
        let wn = norm(&w);
        let mut h = step.min(duration - t);
        let next = loop {
            let y: Vec<f64> = x.iter().zip(&w).map(|(x, w)| x + h * w).collect();
            let ny = norm(&y);
            let xn: Vec<f64> = y.iter().map(|v| v / ny).collect();
            let fv = functional.value(&xn);
            if fv <= f || h < 1e-14 {
                break (xn, fv);
            }
            rejected += 1;
            h *= 0.5;
        };
        disp += norm(&next.0.iter().zip(&x).map(|(a, b)| a - b).collect::<Vec<_>>());
        bound += h * wn;
        t += h;
        x = next.0;
        f = next.1;
        steps.push(FlowStep {
            time: t,
            norm: norm(&x),
            value: f,
            displacement: disp,
            bound,
        });
        points.push(x.clone());
    }
    Ok(Trajectory {
        dim,
        functional,
        steps,
        points,
        rejected_steps: rejected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn height_flow_from_north_pole_is_stationary() {
        let mut x = vec![0.0; 3];
        x[2] = 1.0;
        let tr = deformation_flow_demo(ToyFunctional::Height, &x, 5.0, 0.1).unwrap();
        for p in &tr.points {
            assert!((p[2] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn height_flow_matches_geodesic_solution() {
        // θ from the south pole obeys θ' = -sin θ: tan(θ/2) = tan(θ0/2) e^{-t}
        let th0: f64 = 2.0;
        let x = vec![th0.sin(), 0.0, -th0.cos()];
        let h = 1e-4;
        let tr = deformation_flow_demo(ToyFunctional::Height, &x, 2.0, h).unwrap();
        let last = tr.points.last().unwrap();
        let th = 2.0 * ((th0 / 2.0).tan() * (-2.0f64).exp()).atan();
        assert!((last[2] + th.cos()).abs() < 1e-3);
    }

    #[test]
    fn height_flow_reaches_minimum_monotonically() {
        let x = vec![0.6, 0.0, 0.8];
        let tr = deformation_flow_demo(ToyFunctional::Height, &x, 40.0, 0.1).unwrap();
        for w in tr.steps.windows(2) {
            if w[0].value > -1.0 + 1e-8 {
                assert!(w[1].value < w[0].value);
            }
            assert!((w[1].norm - 1.0).abs() < 1e-10);
            assert!(w[1].displacement <= w[1].bound + 1e-12);
        }
        assert!(tr.steps.last().unwrap().value < -1.0 + 1e-8);
    }

    fn grid(r: f64) -> Arc<RadialGrid> {
        Arc::new(RadialGrid::new(3, r, 3000, Grading::Graded(2.0)).unwrap())
    }

    #[test]
    fn local_minimum_is_negative_and_inside_v() {
        let c = 0.5 * thresholds(3, 2.5, 1.0, 1.0).unwrap().c0.unwrap();
        let p = ProblemParams::new(3, c, 1.0, 2.5).unwrap();
        let init = gaussian_init(grid(50.0), c, 2.0).unwrap();
        let r = local_minimize(&p, &init, &SolveOptions::default()).unwrap();
        assert!(r.converged);
        assert!(r.energy_report.lambda < 0.0 && r.energy_report.phi < 0.0);
        assert!(r.energy_report.grad_sq < r.v_cap.unwrap());
        assert!((r.energy_report.mass - c).abs() < 1e-10 * c);
        assert!(r.energy_report.kkt_residual < 1e-7);
    }

    #[test]
    fn local_minimize_rejects_supercritical_and_outside_start() {
        let p = ProblemParams::new(3, 1.0, 1.0, 4.0).unwrap();
        let init = gaussian_init(grid(20.0), 1.0, 1.0).unwrap();
        assert!(matches!(
            local_minimize(&p, &init, &SolveOptions::default()),
            Err(Error::Hypothesis(_))
        ));
        let c = 0.5 * thresholds(3, 2.5, 1.0, 1.0).unwrap().c0.unwrap();
        let p = ProblemParams::new(3, c, 1.0, 2.5).unwrap();
        let spike = gaussian_init(grid(20.0), c, 0.05).unwrap();
        assert!(matches!(
            local_minimize(&p, &spike, &SolveOptions::default()),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn minimax_level_is_start_independent_and_monotone() {
        let opts = SolveOptions::default();
        let p = ProblemParams::new(3, 1.0, 1.0, 4.0).unwrap();
        let levels: Vec<f64> = (0..3)
            .map(|seed| {
                let init = random_blended_init(grid(50.0), 1.0, seed).unwrap();
                let r = ground_state_minimax(&p, &init, &opts).unwrap();
                assert!(r.converged);
                assert!(r.energy_report.lambda < 0.0);
                assert!(r.energy_report.pohozaev.abs() <= 1e-6 * r.energy_report.grad_sq);
                r.level
            })
            .collect();
        for l in &levels {
            assert!((l - levels[0]).abs() <= 2.0 * opts.grad_tol);
        }
        let s = crate::constants::sobolev_constant(3).unwrap().s;
        assert!(levels[0] < s.powf(1.5) / 3.0);
        let p2 = p.with_mass(2.0).unwrap();
        let init = random_blended_init(grid(50.0), 2.0, 0).unwrap();
        let r2 = ground_state_minimax(&p2, &init, &opts).unwrap();
        assert!(r2.level <= levels[0] + 1e-8);
    }

    #[test]
    fn off_sphere_start_is_rejected() {
        assert!(deformation_flow_demo(ToyFunctional::Height, &[1.0, 1.0], 1.0, 0.1).is_err());
    }

    #[test]
    fn other_functionals_decrease() {
        let d = 6;
        let x: Vec<f64> = (0..d).map(|k| (k as f64 + 1.0).sqrt()).collect();
        let nx = norm(&x);
        let x: Vec<f64> = x.iter().map(|v| v / nx).collect();
        for f in [ToyFunctional::Quadratic, ToyFunctional::DoubleWell] {
            let tr = deformation_flow_demo(f, &x, 5.0, 0.05).unwrap();
            for w in tr.steps.windows(2) {
                assert!(w[1].value <= w[0].value);
            }
        }
    }
}
