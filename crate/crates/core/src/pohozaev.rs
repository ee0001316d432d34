//! Critical points of the fiber map `t ↦ Φ_μ(t^{N/2}u_t)` and projection
//! onto the Pohozaev manifold `{P_μ = 0}`.
//!
//! With `(a, d, b) = (‖∇u‖², ‖u‖_q^q, ‖u‖_{2*}^{2*})` the fiber derivative is
//! `t·k(t)` where `k(t) = a - μγ d t^{qγ-2} - b t^{2*-2}`. For `q ≥ q̄` the
//! function `k` is strictly decreasing, so there is at most one root. For
//! `q < q̄` it is strictly concave in the right variable with a single
//! maximum, so there are zero, one (degenerate) or two roots.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{fiber_energy, Norms, ProblemParams};
use crate::radial::RadialFunction;

pub const T_MIN: f64 = 1e-6;
pub const T_MAX: f64 = 1e6;
/// Relative band for classifying a root as degenerate.
pub const DEGENERACY_BAND: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FiberKind {
    /// Local minimum of the fiber map.
    Plus,
    /// Local maximum of the fiber map.
    Minus,
    Zero,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiberCriticalPoint {
    pub t: f64,
    pub kind: FiberKind,
    pub value: f64,
}

struct Fiber<'a> {
    n: &'a Norms,
    p: &'a ProblemParams,
    e: f64,
    two_star: f64,
    coef: f64,
}

impl<'a> Fiber<'a> {
    fn new(n: &'a Norms, p: &'a ProblemParams) -> Self {
        Fiber {
            n,
            p,
            e: p.exponents.q_gamma(),
            two_star: p.two_star(),
            coef: p.mu * p.gamma_q() * n.lq,
        }
    }

    /// `k(t)`; the `L^q` term is exactly constant at `q = q̄`.
    fn k(&self, t: f64) -> f64 {
        let lq_term = if self.p.exponents.is_l2_critical() {
            self.coef
        } else {
            self.coef * t.powf(self.e - 2.0)
        };
        self.n.grad_sq - lq_term - self.n.lcrit * t.powf(self.two_star - 2.0)
    }

    /// `t k'(t)`, the fiber second derivative at a root.
    fn tk_prime(&self, t: f64) -> f64 {
        -(self.e - 2.0) * self.coef * t.powf(self.e - 2.0)
            - (self.two_star - 2.0) * self.n.lcrit * t.powf(self.two_star - 2.0)
    }

    fn scale(&self, t: f64) -> f64 {
        self.n.grad_sq
            + (self.e - 1.0).abs().max(1.0) * self.coef.abs() * t.powf(self.e - 2.0)
            + (self.two_star - 1.0) * self.n.lcrit * t.powf(self.two_star - 2.0)
    }

    fn point(&self, t: f64) -> Result<FiberCriticalPoint> {
        let s = self.tk_prime(t);
        let kind = if s.abs() <= DEGENERACY_BAND * self.scale(t) {
            FiberKind::Zero
        } else if s > 0.0 {
            FiberKind::Plus
        } else {
            FiberKind::Minus
        };
        Ok(FiberCriticalPoint {
            t,
            kind,
            value: fiber_energy(self.n, self.p, t)?,
        })
    }

    /// Bisection in `ln t` on a sign-changing bracket.
    fn root(&self, mut lo: f64, mut hi: f64) -> f64 {
        let s_lo = self.k(lo).signum();
        for _ in 0..200 {
            let mid = (lo * hi).sqrt();
            if mid <= lo || mid >= hi {
                break;
            }
            if self.k(mid).signum() == s_lo {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (lo * hi).sqrt()
    }
}

pub fn fiber_critical_points(u: &RadialFunction, p: &ProblemParams) -> Result<Vec<FiberCriticalPoint>> {
    fiber_critical_points_from_norms(&Norms::of(u, p)?, p)
}

/// All positive roots of the fiber derivative in `[T_MIN, T_MAX]`, in
/// increasing order.
pub fn fiber_critical_points_from_norms(
    n: &Norms,
    p: &ProblemParams,
) -> Result<Vec<FiberCriticalPoint>> {
    if n.lcrit <= 0.0 && p.mu * n.lq <= 0.0 {
        return Err(Error::NoCriticalPoint(
            "fiber map is a pure quadratic (no nonlinear terms)".into(),
        ));
    }
    let fib = Fiber::new(n, p);
    let out_of_range = |what: &str| {
        Error::NoCriticalPoint(format!(
            "{what} lies outside the search bracket [{T_MIN:e}, {T_MAX:e}]"
        ))
    };
    if p.exponents.at_least_l2_critical() {
        let k_hi = fib.k(T_MAX);
        let k_lo = fib.k(T_MIN);
        if k_lo <= 0.0 {
            if p.exponents.is_l2_critical() && n.grad_sq - fib.coef <= 0.0 {
                return Err(Error::NoCriticalPoint(
                    "kinetic term does not dominate the L²-critical term".into(),
                ));
            }
            return Err(out_of_range("the fiber root"));
        }
        if k_hi >= 0.0 {
            return Err(out_of_range("the fiber root"));
        }
        return Ok(vec![fib.point(fib.root(T_MIN, T_MAX))?]);
    }
    if fib.coef <= 0.0 {
        // μ = 0 or u vanishes in L^q: only the critical term
        let t = (n.grad_sq / n.lcrit).powf(1.0 / (fib.two_star - 2.0));
        if !(T_MIN..=T_MAX).contains(&t) {
            return Err(out_of_range("the fiber root"));
        }
        return Ok(vec![fib.point(t)?]);
    }
    // maximum of k where its derivative vanishes
    let e = fib.e;
    let ts = fib.two_star;
    let t_m = if n.lcrit > 0.0 {
        (fib.coef * (2.0 - e) / (n.lcrit * (ts - 2.0))).powf(1.0 / (ts - e))
    } else {
        T_MAX
    };
    let k_m = fib.k(t_m);
    if k_m.abs() <= DEGENERACY_BAND * fib.scale(t_m) {
        return Ok(vec![FiberCriticalPoint {
            kind: FiberKind::Zero,
            ..fib.point(t_m)?
        }]);
    }
    if k_m < 0.0 {
        return Ok(Vec::new());
    }
    let mut pts = Vec::new();
    if fib.k(T_MIN) >= 0.0 || t_m <= T_MIN {
        return Err(out_of_range("the plus-type root"));
    }
    pts.push(fib.point(fib.root(T_MIN, t_m))?);
    if n.lcrit > 0.0 {
        if fib.k(T_MAX) >= 0.0 || t_m >= T_MAX {
            return Err(out_of_range("the minus-type root"));
        }
        pts.push(fib.point(fib.root(t_m, T_MAX))?);
    }
    Ok(pts)
}

/// The unique fiber maximizer for `q ≥ q̄`.
pub fn fiber_maximizer(n: &Norms, p: &ProblemParams) -> Result<FiberCriticalPoint> {
    if p.exponents.is_subcritical() {
        return Err(Error::Hypothesis(format!(
            "the fiber maximum is only characterized for q ≥ q̄ = {} (got q = {})",
            p.exponents.q_bar, p.q
        )));
    }
    fiber_critical_points_from_norms(n, p)?
        .into_iter()
        .next()
        .ok_or_else(|| Error::NoCriticalPoint("no fiber root".into()))
}

/// `max_{t>0} Φ_μ(t^{N/2}u_t)` for `q ≥ q̄`.
pub fn manifold_energy(u: &RadialFunction, p: &ProblemParams) -> Result<f64> {
    manifold_energy_from_norms(&Norms::of(u, p)?, p)
}

pub fn manifold_energy_from_norms(n: &Norms, p: &ProblemParams) -> Result<f64> {
    Ok(fiber_maximizer(n, p)?.value)
}

/// Exact projection `t_u^{N/2} u(t_u·)` onto the Pohozaev manifold, carried
/// by the dilated grid.
pub fn project(u: &RadialFunction, p: &ProblemParams) -> Result<(RadialFunction, FiberCriticalPoint)> {
    let cp = fiber_maximizer(&Norms::of(u, p)?, p)?;
    Ok((u.dilate(cp.t)?, cp))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn norms(a: f64, d: f64, b: f64) -> Norms {
        Norms {
            mass: 1.0,
            grad_sq: a,
            lq: d,
            lcrit: b,
        }
    }

    #[test]
    fn l2_critical_closed_form() {
        let p = ProblemParams::new(3, 1.0, 1.0, 10.0 / 3.0).unwrap();
        let g = p.gamma_q();
        // a - μγd = b gives t = 1
        let n = norms(2.0 + g * 0.7, 0.7, 2.0);
        let cp = fiber_maximizer(&n, &p).unwrap();
        assert!((cp.t - 1.0).abs() < 1e-12);
        assert_eq!(cp.kind, FiberKind::Minus);
        let n = norms(5.0, 1.0, 2.0);
        let t = ((5.0 - g) / 2.0f64).powf(0.25);
        assert!((fiber_maximizer(&n, &p).unwrap().t / t - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mu_zero_closed_form() {
        let p = ProblemParams::new(4, 1.0, 0.0, 3.5).unwrap();
        let n = norms(3.0, 1.0, 2.0);
        let pts = fiber_critical_points_from_norms(&n, &p).unwrap();
        assert_eq!(pts.len(), 1);
        assert!((pts[0].t - 1.5f64.powf(0.5)).abs() < 1e-12);
        assert_eq!(pts[0].kind, FiberKind::Minus);
        let p3 = ProblemParams::new(3, 1.0, 0.0, 2.5).unwrap();
        let pts = fiber_critical_points_from_norms(&norms(1.0, 1.0, 1.0), &p3).unwrap();
        assert_eq!(pts.len(), 1);
        assert!((pts[0].value - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn subcritical_two_roots_match_scan() {
        let p = ProblemParams::new(3, 1.0, 1.0, 2.5).unwrap();
        let n = norms(10.0, 2.0, 1.0);
        let pts = fiber_critical_points_from_norms(&n, &p).unwrap();
        assert_eq!(pts.len(), 2);
        assert_eq!(pts[0].kind, FiberKind::Plus);
        assert_eq!(pts[1].kind, FiberKind::Minus);
        assert!(pts[1].value > pts[0].value);
        // brute-force scan of the fiber energy
        let ts: Vec<f64> = (0..100_000)
            .map(|i| 10f64.powf(-3.0 + 6.0 * i as f64 / 99_999.0))
            .collect();
        let e: Vec<f64> = ts.iter().map(|&t| fiber_energy(&n, &p, t).unwrap()).collect();
        let mut mins = Vec::new();
        let mut maxs = Vec::new();
        for i in 1..e.len() - 1 {
            if e[i] < e[i - 1] && e[i] < e[i + 1] {
                mins.push(ts[i]);
            }
            if e[i] > e[i - 1] && e[i] > e[i + 1] {
                maxs.push(ts[i]);
            }
        }
        assert_eq!((mins.len(), maxs.len()), (1, 1));
        assert!((mins[0] / pts[0].t - 1.0).abs() < 2e-4);
        assert!((maxs[0] / pts[1].t - 1.0).abs() < 2e-4);
    }

    #[test]
    fn subcritical_no_roots() {
        let p = ProblemParams::new(3, 1.0, 1.0, 2.5).unwrap();
        assert!(fiber_critical_points_from_norms(&norms(0.1, 5.0, 5.0), &p)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn manifold_energy_is_global_max() {
        let p = ProblemParams::new(3, 1.0, 1.0, 4.0).unwrap();
        let n = norms(3.0, 2.0, 1.5);
        let m = manifold_energy_from_norms(&n, &p).unwrap();
        let scan = (0..100_000)
            .map(|i| 10f64.powf(-2.0 + 4.0 * i as f64 / 99_999.0))
            .map(|t| fiber_energy(&n, &p, t).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(m >= scan - 1e-12 && m - scan < 1e-8);
        let pp = ProblemParams::new(3, 1.0, 0.0, 4.0).unwrap();
        assert!((manifold_energy_from_norms(&norms(1.0, 0.0, 1.0), &pp).unwrap() - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn errors() {
        let p = ProblemParams::new(3, 1.0, 1.0, 4.0).unwrap();
        assert!(matches!(
            fiber_critical_points_from_norms(&norms(1.0, 0.0, 0.0), &p),
            Err(Error::NoCriticalPoint(_))
        ));
        let sub = ProblemParams::new(3, 1.0, 1.0, 3.0).unwrap();
        assert!(matches!(
            manifold_energy_from_norms(&norms(1.0, 1.0, 1.0), &sub),
            Err(Error::Hypothesis(_))
        ));
    }
}
