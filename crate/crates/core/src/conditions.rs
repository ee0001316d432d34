//! Sampled audit of a nonlinearity `f` against the growth and
//! Ambrosetti–Rabinowitz-type conditions used by the existence theory.
//!
//! Pointwise inequalities are checked at every sample (and at `-t`). Limit
//! claims are never certified from a single point: a limit verdict passes only
//! when the ratio is monotone over the three extreme decades of the sample
//! range and ends below `1e-3` (for `→ 0`) or stays bounded (for `< ∞`).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::functionals::GeneralNonlinearity;

/// Decades at each end of the sample range used for limit verdicts.
const TREND_DECADES: f64 = 3.0;
/// Ratio a `→ 0` limit must reach at the extreme sample.
const VANISHING: f64 = 1e-3;
/// Ratio beyond which a `→ ∞` trend is taken as divergence.
const DIVERGING: f64 = 1e3;
/// Relative slack separating genuine equality from round-off.
const EQUALITY_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail { witness: f64 },
    Inconclusive { range: (f64, f64) },
}

impl Verdict {
    pub fn is_pass(&self) -> bool {
        matches!(self, Verdict::Pass)
    }

    pub fn is_fail(&self) -> bool {
        matches!(self, Verdict::Fail { .. })
    }

    /// First failure, else first inconclusive, else pass.
    fn combine(parts: &[&Verdict]) -> Verdict {
        if let Some(f) = parts.iter().find(|v| v.is_fail()) {
            return (*f).clone();
        }
        if let Some(i) = parts.iter().find(|v| matches!(v, Verdict::Inconclusive { .. })) {
            return (*i).clone();
        }
        Verdict::Pass
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub verdict: Verdict,
    pub detail: String,
    pub samples: Vec<Sample>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub dim: usize,
    pub kappa_used: f64,
    /// `sup ((ft - 2F)/t²)^κ / (N ft - (2N+4)F)` over the samples.
    pub c0_estimate: Option<f64>,
    pub f0: Check,
    pub f1: Check,
    pub f2: Verdict,
    pub f2_positivity: Check,
    pub f2_lower: Check,
    pub f2_upper: Check,
    pub f3: Check,
    pub f3_prime: Check,
    /// Sampled `inf ft/F`, `sup ft/F` against `2 + 4/N < α ≤ β < 2*`.
    pub ar_bracket: Check,
    pub ar_alpha: f64,
    pub ar_beta: f64,
}

/// `n` log-spaced points per decade on `[lo, hi]`.
pub fn log_samples(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    let decades = (hi / lo).log10();
    let n = (decades * per_decade as f64).round().max(1.0) as usize;
    (0..=n)
        .map(|i| lo * 10f64.powf(decades * i as f64 / n as f64))
        .collect()
}

/// Default sampling: `[1e-6, 1e6]`, ten points per decade.
pub fn default_samples() -> Vec<f64> {
    log_samples(1e-6, 1e6, 10)
}

#[derive(Clone, Copy, Debug)]
struct Point {
    t: f64,
    f: f64,
    big_f: f64,
}

fn evaluate(f: &GeneralNonlinearity, ts: &[f64]) -> Result<Vec<Point>> {
    ts.par_iter()
        .flat_map_iter(|&t| [t, -t])
        .map(|t| {
            let (fv, bf) = (f.f(t), f.big_f(t));
            if !fv.is_finite() || !bf.is_finite() {
                return Err(Error::Evaluation {
                    t,
                    message: format!("f = {fv}, F = {bf}"),
                });
            }
            Ok(Point { t, f: fv, big_f: bf })
        })
        .collect()
}

enum Limit {
    /// Ratio tends to zero.
    Vanishes,
    /// Ratio stays bounded.
    Bounded,
}

enum End {
    Zero,
    Infinity,
}

/// Trend verdict on the `|t|`-extreme decades of `ratio` samples (positive
/// `t` only, sorted ascending).
fn limit_verdict(samples: &[Sample], end: End, claim: Limit) -> Verdict {
    let lo = samples.first().map_or(0.0, |s| s.t);
    let hi = samples.last().map_or(0.0, |s| s.t);
    // tail ordered from the interior toward the limit point
    let tail: Vec<&Sample> = match end {
        End::Zero => samples
            .iter()
            .filter(|s| s.t <= lo * 10f64.powf(TREND_DECADES))
            .rev()
            .collect(),
        End::Infinity => samples
            .iter()
            .filter(|s| s.t >= hi / 10f64.powf(TREND_DECADES))
            .collect(),
    };
    let range = match end {
        End::Zero => (lo, lo * 10f64.powf(TREND_DECADES)),
        End::Infinity => (hi / 10f64.powf(TREND_DECADES), hi),
    };
    let inconclusive = Verdict::Inconclusive { range };
    if tail.len() < 3 || tail.iter().any(|s| !s.value.is_finite()) {
        return inconclusive;
    }
    let non_increasing = tail
        .windows(2)
        .all(|w| w[1].value <= w[0].value + EQUALITY_TOL * w[0].value.abs());
    let increasing = tail.windows(2).all(|w| w[1].value > w[0].value);
    let last = tail[tail.len() - 1];
    match claim {
        Limit::Vanishes if non_increasing && last.value.abs() < VANISHING => Verdict::Pass,
        Limit::Bounded if non_increasing && last.value.abs() < DIVERGING => Verdict::Pass,
        Limit::Bounded if increasing && last.value > DIVERGING => Verdict::Fail { witness: last.t },
        _ => inconclusive,
    }
}

/// Pointwise `gap(t) > 0` (strict) or `gap(t) ≥ 0` with relative gaps.
/// A gap that closes only along the large-`|t|` trend is inconclusive rather
/// than failed.
fn bracket_verdict(gaps: &[Sample], strict: bool) -> Verdict {
    if let Some(s) = gaps.iter().find(|s| s.value < -EQUALITY_TOL || s.value.is_nan()) {
        return Verdict::Fail { witness: s.t };
    }
    if !strict {
        return Verdict::Pass;
    }
    let closing: Vec<&Sample> = gaps.iter().filter(|s| s.value <= EQUALITY_TOL).collect();
    if closing.is_empty() {
        return Verdict::Pass;
    }
    let hi = gaps.iter().map(|s| s.t.abs()).fold(0.0, f64::max);
    let tail_start = hi / 10f64.powf(TREND_DECADES);
    // equality reached at a finite scale is a genuine violation of strictness
    if let Some(s) = closing.iter().find(|s| s.t.abs() < tail_start) {
        return Verdict::Fail { witness: s.t };
    }
    let mut tail: Vec<&Sample> = gaps.iter().filter(|s| s.t > 0.0 && s.t >= tail_start).collect();
    tail.sort_by(|a, b| a.t.total_cmp(&b.t));
    let decreasing = tail.windows(2).all(|w| w[1].value < w[0].value);
    if decreasing && tail.last().is_some_and(|s| s.value < VANISHING) {
        Verdict::Inconclusive { range: (tail_start, hi) }
    } else {
        Verdict::Fail { witness: closing[0].t }
    }
}

fn positive_only(samples: &[Sample]) -> Vec<Sample> {
    let mut v: Vec<Sample> = samples.iter().copied().filter(|s| s.t > 0.0).collect();
    v.sort_by(|a, b| a.t.total_cmp(&b.t));
    v
}

fn rel_gap(a: f64, b: f64) -> f64 {
    // (a - b) relative to the larger magnitude; 0 when both vanish
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b) / scale
    }
}

pub fn check_conditions(
    f: &GeneralNonlinearity,
    dim: usize,
    kappa: f64,
    t_samples: &[f64],
) -> Result<ConditionReport> {
    if dim < 3 {
        return Err(param("N must be at least 3"));
    }
    let n = dim as f64;
    if !(kappa > n / 2.0) {
        return Err(param(format!("κ = {kappa} must exceed N/2 = {}", n / 2.0)));
    }
    let mut ts: Vec<f64> = t_samples.iter().map(|t| t.abs()).filter(|t| *t > 0.0).collect();
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    let (lo, hi) = (ts.first().copied().unwrap_or(1.0), ts.last().copied().unwrap_or(1.0));
    if lo > 1e-6 * (1.0 + 1e-12) || hi < 1e6 * (1.0 - 1e-12) {
        return Err(param(format!(
            "samples must span at least [1e-6, 1e6], got [{lo}, {hi}]"
        )));
    }
    let pts = evaluate(f, &ts)?;
    let two_star = 2.0 * n / (n - 2.0);
    let lower = 2.0 + 4.0 / n;
    let sample = |g: &dyn Fn(&Point) -> f64| -> Vec<Sample> {
        pts.iter().map(|p| Sample { t: p.t, value: g(p) }).collect()
    };

    // (F0): f(t)/t → 0 at 0, |f|/|t|^{2*-1} bounded at ∞
    let f0_zero = sample(&|p| (p.f / p.t).abs());
    let f0_inf = sample(&|p| p.f.abs() / p.t.abs().powf(two_star - 1.0));
    let f0 = Check {
        verdict: Verdict::combine(&[
            &limit_verdict(&positive_only(&f0_zero), End::Zero, Limit::Vanishes),
            &limit_verdict(&positive_only(&f0_inf), End::Infinity, Limit::Bounded),
        ]),
        detail: "f(t)/t -> 0 as t -> 0; |f(t)|/|t|^(2*-1) bounded as |t| -> inf".into(),
        samples: [f0_zero, f0_inf].concat(),
    };

    // (F1): f/|t|^{1+4/N} → 0 at 0, |f|/|t|^{2*-1} → 0 at ∞
    let f1_zero = sample(&|p| p.f.abs() / p.t.abs().powf(1.0 + 4.0 / n));
    let f1_inf = sample(&|p| p.f.abs() / p.t.abs().powf(two_star - 1.0));
    let f1 = Check {
        verdict: Verdict::combine(&[
            &limit_verdict(&positive_only(&f1_zero), End::Zero, Limit::Vanishes),
            &limit_verdict(&positive_only(&f1_inf), End::Infinity, Limit::Vanishes),
        ]),
        detail: "f(t)/|t|^(1+4/N) -> 0 as t -> 0; |f(t)|/|t|^(2*-1) -> 0 as |t| -> inf".into(),
        samples: [f1_zero, f1_inf].concat(),
    };

    // (F2): 0 < (2+4/N) F ≤ f t < 2N/(N-2) F
    let pos = sample(&|p| lower * p.big_f);
    let pos_verdict = match pos.iter().find(|s| !(s.value > 0.0)) {
        Some(s) => Verdict::Fail { witness: s.t },
        None => Verdict::Pass,
    };
    let f2_positivity = Check {
        verdict: pos_verdict,
        detail: "(2+4/N) F(t) > 0".into(),
        samples: pos,
    };
    let lo_gaps = sample(&|p| rel_gap(p.f * p.t, lower * p.big_f));
    let f2_lower = Check {
        verdict: bracket_verdict(&lo_gaps, false),
        detail: "relative gap f(t)t - (2+4/N)F(t) >= 0".into(),
        samples: lo_gaps,
    };
    let up_gaps = sample(&|p| rel_gap(two_star * p.big_f, p.f * p.t));
    let f2_upper = Check {
        verdict: bracket_verdict(&up_gaps, true),
        detail: "relative gap 2N/(N-2) F(t) - f(t)t > 0".into(),
        samples: up_gaps,
    };
    let f2 = Verdict::combine(&[
        &f2_positivity.verdict,
        &f2_lower.verdict,
        &f2_upper.verdict,
    ]);

    // (F3): limsup [ft - 2F]^κ / (t^{2κ} [N ft - (2N+4)F]) < ∞
    let f3_ratio = |p: &Point| {
        let num = p.f * p.t - 2.0 * p.big_f;
        let den = n * p.f * p.t - (2.0 * n + 4.0) * p.big_f;
        if num < 0.0 || den <= 0.0 {
            f64::NAN
        } else {
            (num / (p.t * p.t)).powf(kappa) / den
        }
    };
    let f3_samples = sample(&f3_ratio);
    let hi_tail = hi / 10f64.powf(TREND_DECADES);
    let f3_verdict = match f3_samples
        .iter()
        .find(|s| s.t.abs() >= hi_tail && s.value.is_nan())
    {
        Some(s) => Verdict::Fail { witness: s.t },
        None => {
            let pos = positive_only(&f3_samples);
            let neg: Vec<Sample> = f3_samples
                .iter()
                .filter(|s| s.t < 0.0)
                .map(|s| Sample { t: -s.t, value: s.value })
                .rev()
                .collect();
            Verdict::combine(&[
                &limit_verdict(&pos, End::Infinity, Limit::Bounded),
                &limit_verdict(&neg, End::Infinity, Limit::Bounded),
            ])
        }
    };
    let f3 = Check {
        verdict: f3_verdict,
        detail: format!("[ft-2F]^k / (t^(2k) [N ft-(2N+4)F]) bounded as |t| -> inf, k = {kappa}"),
        samples: f3_samples.clone(),
    };

    // (F3'): the same ratio bounded by C0 for every t
    let c0 = f3_samples
        .iter()
        .map(|s| s.value)
        .try_fold(0.0f64, |m, v| v.is_finite().then_some(m.max(v)));
    let f3_prime_verdict = match f3_samples.iter().find(|s| !s.value.is_finite()) {
        Some(s) => Verdict::Fail { witness: s.t },
        None => {
            let pos = positive_only(&f3_samples);
            Verdict::combine(&[
                &limit_verdict(&pos, End::Zero, Limit::Bounded),
                &limit_verdict(&pos, End::Infinity, Limit::Bounded),
            ])
        }
    };
    let f3_prime = Check {
        verdict: f3_prime_verdict,
        detail: format!("((ft-2F)/t^2)^k <= C0 [N ft-(2N+4)F] for all t, k = {kappa}"),
        samples: f3_samples,
    };

    // AR bracket: 2 + 4/N < α ≤ ft/F ≤ β < 2*
    let ar = sample(&|p| if p.big_f > 0.0 { p.f * p.t / p.big_f } else { f64::NAN });
    let finite = ar.iter().filter(|s| s.value.is_finite());
    let ar_alpha = finite.clone().map(|s| s.value).fold(f64::INFINITY, f64::min);
    let ar_beta = finite.map(|s| s.value).fold(f64::NEG_INFINITY, f64::max);
    let ar_lo: Vec<Sample> = ar
        .iter()
        .map(|s| Sample { t: s.t, value: rel_gap(s.value, lower) })
        .collect();
    let ar_hi: Vec<Sample> = ar
        .iter()
        .map(|s| Sample { t: s.t, value: rel_gap(two_star, s.value) })
        .collect();
    let ar_bracket = Check {
        verdict: Verdict::combine(&[
            &bracket_verdict(&ar_lo, true),
            &bracket_verdict(&ar_hi, true),
        ]),
        detail: "2+4/N < f(t)t/F(t) < 2N/(N-2) with uniform margins".into(),
        samples: ar,
    };

    Ok(ConditionReport {
        dim,
        kappa_used: kappa,
        c0_estimate: c0,
        f0,
        f1,
        f2,
        f2_positivity,
        f2_lower,
        f2_upper,
        f3,
        f3_prime,
        ar_bracket,
        ar_alpha,
        ar_beta,
    })
}

thread_local! {
    static CONTEXT: meval::Context<'static> = {
        let mut ctx = meval::Context::new();
        ctx.func("log", f64::ln);
        ctx
    };
}

/// Parses `f(t)` from an arithmetic expression in `t` (`^`, `abs`, `exp`,
/// `log`/`ln`, `sqrt`, numeric constants); `F` is obtained by quadrature.
pub fn parse_nonlinearity(expr: &str) -> Result<GeneralNonlinearity> {
    let parsed: meval::Expr = expr
        .parse()
        .map_err(|e: meval::Error| Error::Expression(format!("{expr}: {e}")))?;
    // reject unknown names up front rather than at the first sample
    CONTEXT.with(|ctx| parsed.eval_with_context((("t", 0.5), ctx)))
        .map_err(|e| Error::Expression(format!("{expr}: {e}")))?;
    Ok(GeneralNonlinearity::new(move |t| {
        CONTEXT.with(|ctx| parsed.eval_with_context((("t", t), ctx)).unwrap_or(f64::NAN))
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn power(p: f64) -> GeneralNonlinearity {
        GeneralNonlinearity::power(p)
    }

    #[test]
    fn subcritical_power_passes() {
        let r = check_conditions(&power(4.0), 3, 2.0, &default_samples()).unwrap();
        assert!(r.f1.verdict.is_pass(), "{:?}", r.f1.verdict);
        assert!(r.f2.is_pass(), "{:?}", r.f2);
        assert!(r.f3.verdict.is_pass(), "{:?}", r.f3.verdict);
        assert!(r.f3_prime.verdict.is_pass());
        // ((1-2/p) t^p)^κ / (t^{2κ} (N - (2N+4)/p) t^p) = (1/4)/(1/2)
        assert!((r.c0_estimate.unwrap() - 0.5).abs() < 1e-12);
        assert!(r.ar_bracket.verdict.is_pass());
        assert!((r.ar_alpha - 4.0).abs() < 1e-12 && (r.ar_beta - 4.0).abs() < 1e-12);
    }

    #[test]
    fn critical_power_fails_upper_bracket() {
        let r = check_conditions(&power(6.0), 3, 2.0, &default_samples()).unwrap();
        assert!(r.f2_upper.verdict.is_fail());
        assert!(r.f2.is_fail());
        assert!(r.f2_lower.verdict.is_pass());
        assert!(!r.f1.verdict.is_pass());
    }

    #[test]
    fn zero_fails_positivity_everywhere() {
        let zero = GeneralNonlinearity::with_primitive(|_| 0.0, |_| 0.0);
        let r = check_conditions(&zero, 3, 2.0, &default_samples()).unwrap();
        assert!(r.f2_positivity.samples.iter().all(|s| s.value <= 0.0));
        assert!(matches!(r.f2, Verdict::Fail { .. }));
    }

    #[test]
    fn mixed_power_upper_bracket_is_inconclusive() {
        let f = parse_nonlinearity("abs(t)^2*t + abs(t)^4*t").unwrap();
        let r = check_conditions(&f, 3, 2.0, &default_samples()).unwrap();
        assert!(r.f2_lower.verdict.is_pass());
        assert!(r.f2_positivity.verdict.is_pass());
        assert!(
            matches!(r.f2_upper.verdict, Verdict::Inconclusive { .. }),
            "{:?}",
            r.f2_upper.verdict
        );
    }

    #[test]
    fn parsed_expression_matches_closed_form() {
        let f = parse_nonlinearity("abs(t)^2*t").unwrap();
        let g = power(4.0);
        for t in [-3.0, -0.1, 0.2, 5.0] {
            assert!((f.f(t) - g.f(t)).abs() < 1e-14);
            assert!((f.big_f(t) - g.big_f(t)).abs() < 1e-10 * g.big_f(t));
        }
        let l = parse_nonlinearity("t*log(1+abs(t))").unwrap();
        assert!((l.f(2.0) - 2.0 * 3f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn bad_inputs() {
        assert!(matches!(parse_nonlinearity("t^"), Err(Error::Expression(_))));
        assert!(matches!(parse_nonlinearity("foo(t)"), Err(Error::Expression(_))));
        let s = default_samples();
        assert!(check_conditions(&power(4.0), 3, 1.5, &s).is_err());
        assert!(check_conditions(&power(4.0), 3, 2.0, &log_samples(1e-3, 1e3, 5)).is_err());
        let blowup = GeneralNonlinearity::with_primitive(|t| 1.0 / (t - 1.0), |t| t);
        let pts = [1e-6, 1.0, 1e6];
        assert!(matches!(
            check_conditions(&blowup, 3, 2.0, &pts),
            Err(Error::Evaluation { .. })
        ));
    }

    #[test]
    fn report_is_deterministic() {
        let f = parse_nonlinearity("abs(t)^2*t").unwrap();
        let a = check_conditions(&f, 3, 2.0, &default_samples()).unwrap();
        let b = check_conditions(&f, 3, 2.0, &default_samples()).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }
}
