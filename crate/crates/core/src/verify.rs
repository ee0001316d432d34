//! The acceptance suite: ten numbered checks with pinned tolerances, shared
//! by the `verify-all` subcommand and the integration tests.

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bubbles::{
    asymptotics_u, expected_slopes, loglog_slope, mass_normalized_instanton, rn_asymptote,
    solve_rn, threshold_scan_critical, threshold_scan_subcritical, BubbleProfile,
};
use crate::conditions::{check_conditions, default_samples, Verdict};
use crate::constants::{
    gn_ratio, ground_state, ground_state_on_grid, sobolev_constant, thresholds, weinstein_estimate,
    ExponentPack,
};
use crate::error::Result;
use crate::functionals::{
    dilation_defect_from_norms, energy, fiber_energy, fiber_scale_exact, GeneralNonlinearity, Norms,
    ProblemParams,
};
use crate::pohozaev::fiber_maximizer;
use crate::radial::{Grading, RadialFunction, RadialGrid};
use crate::solvers::{
    deformation_flow_demo, gaussian_init, ground_state_minimax, local_minimize,
    random_blended_init, SolveOptions, ToyFunctional,
};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CriterionResult {
    pub id: u8,
    pub name: String,
    pub pass: bool,
    /// One line per sub-check, with the measured value against its tolerance.
    pub details: Vec<String>,
    pub seconds: f64,
    pub budget_seconds: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AcceptanceMatrix {
    pub quick: bool,
    pub results: Vec<CriterionResult>,
}

impl AcceptanceMatrix {
    pub fn all_pass(&self) -> bool {
        self.results.iter().all(|r| r.pass)
    }

    pub fn summary(&self) -> String {
        self.results
            .iter()
            .map(|r| {
                format!(
                    "[{}] {:>2} {} ({:.1}s / {:.0}s)",
                    if r.pass { "PASS" } else { "FAIL" },
                    r.id,
                    r.name,
                    r.seconds,
                    r.budget_seconds
                )
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

pub const CRITERIA: [(u8, &str, f64); 10] = [
    (1, "Sobolev constant vs closed form", 10.0),
    (2, "Gagliardo-Nirenberg constant self-consistency", 60.0),
    (3, "bubble norm asymptotics", 120.0),
    (4, "mass-matched bubble", 60.0),
    (5, "critical energy threshold", 120.0),
    (6, "subcritical two-level structure", 300.0),
    (7, "ground-state minimax", 300.0),
    (8, "fiber identities", 60.0),
    (9, "deformation flow", 10.0),
    (10, "condition auditor", 5.0),
];

/// Collects sub-check outcomes for one criterion.
#[derive(Default)]
struct Checks {
    pass: bool,
    details: Vec<String>,
}

impl Checks {
    fn new() -> Self {
        Checks {
            pass: true,
            details: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, line: String) {
        self.pass &= ok;
        self.details.push(format!("{} {line}", if ok { "ok  " } else { "FAIL" }));
    }

    fn note(&mut self, line: String) {
        self.details.push(format!("note {line}"));
    }

    fn error(&mut self, what: &str, e: crate::Error) {
        self.check(false, format!("{what}: error: {e}"));
    }
}

pub fn run_criterion(id: u8, quick: bool) -> CriterionResult {
    let (_, name, budget) = CRITERIA
        .iter()
        .copied()
        .find(|c| c.0 == id)
        .unwrap_or((id, "unknown criterion", 0.0));
    let start = Instant::now();
    let mut c = Checks::new();
    let outcome = match id {
        1 => sobolev(&mut c),
        2 => gagliardo_nirenberg(&mut c, quick),
        3 => bubble_asymptotics(&mut c, quick),
        4 => mass_matched(&mut c),
        5 => critical_threshold(&mut c),
        6 => two_level(&mut c, quick),
        7 => minimax(&mut c, quick),
        8 => fiber_identities(&mut c, quick),
        9 => deformation(&mut c),
        10 => auditor(&mut c),
        _ => {
            c.check(false, format!("no criterion numbered {id}"));
            Ok(())
        }
    };
    if let Err(e) = outcome {
        c.error("criterion aborted", e);
    }
    let seconds = start.elapsed().as_secs_f64();
    c.check(seconds < budget, format!("runtime {seconds:.2}s < {budget}s"));
    CriterionResult {
        id,
        name: name.to_string(),
        pass: c.pass,
        details: c.details,
        seconds,
        budget_seconds: budget,
    }
}

/// Runs every criterion in order. In quick mode the sample counts of the
/// randomized checks are reduced; tolerances never change.
pub fn run_all(quick: bool) -> AcceptanceMatrix {
    AcceptanceMatrix {
        quick,
        results: CRITERIA.iter().map(|c| run_criterion(c.0, quick)).collect(),
    }
}

fn sobolev(c: &mut Checks) -> Result<()> {
    for dim in 3..=6 {
        let s = sobolev_constant(dim)?;
        let gap = s.relative_gap();
        c.check(
            gap <= 1e-6,
            format!("N={dim}: S = {:.12}, closed form {:.12}, rel gap {gap:.2e} <= 1e-6", s.s, s.closed_form),
        );
    }
    Ok(())
}

fn gagliardo_nirenberg(c: &mut Checks, quick: bool) -> Result<()> {
    for (dim, q) in [(3, 4.0), (3, 10.0 / 3.0), (4, 3.0)] {
        let gs = ground_state(dim, q)?;
        let ex = ExponentPack::new(dim, q)?;
        // saturation: the GN quotient of Q, rebuilt from a nodal profile and
        // its ODE derivative, equals the constant taken from the shooting run
        let (u, du) = ground_state_on_grid(&gs, 8000)?;
        let grad: f64 = u.grid().weights().iter().zip(&du).map(|(w, d)| w * d * d).sum();
        let ratio = gn_ratio(grad, u.mass(), u.lp_pow(q)?, &ex);
        let rel = (ratio / gs.c_nq - 1.0).abs();
        c.check(
            rel <= 1e-6,
            format!("(N,q)=({dim},{q:.4}): quotient of Q {ratio:.10} vs C = {:.10}, rel {rel:.2e} <= 1e-6", gs.c_nq),
        );
        let starts = if quick { 1 } else { 2 };
        let w = weinstein_estimate(dim, q, starts, 7)?;
        let rel = (w / gs.c_nq - 1.0).abs();
        c.check(
            rel <= 1e-3,
            format!("(N,q)=({dim},{q:.4}): Weinstein quotient {w:.8}, rel {rel:.2e} <= 1e-3"),
        );
    }
    Ok(())
}

fn bubble_asymptotics(c: &mut Checks, quick: bool) -> Result<()> {
    let ns = [10.0, 20.0, 40.0, 80.0, 160.0];
    let cells = if quick { 4000 } else { 8000 };
    for (dim, q) in [(3, 4.0), (4, 3.0)] {
        let t = asymptotics_u(dim, q, &ns, cells)?;
        let (m, g, l, lq) = expected_slopes(dim, q);
        let col = |f: &dyn Fn(&crate::bubbles::AsymptoticRow) -> f64| {
            loglog_slope(&ns, &t.rows.iter().map(f).collect::<Vec<_>>())
        };
        let fits = [
            ("mass", col(&|r| r.norms.mass), m),
            ("gradient deficit", col(&|r| r.norms.grad_deficit), g),
            ("critical-norm deficit", col(&|r| r.norms.lcrit_deficit), l),
        ];
        for (what, got, want) in fits {
            c.check(
                (got - want).abs() <= 0.3,
                format!("N={dim} {what} slope {got:.4} vs {want} (|diff| <= 0.3)"),
            );
        }
        // the L^q norm is only bounded below at this rate; report, assert direction
        let got = col(&|r| r.norms.lq);
        c.note(format!("N={dim} L^q slope {got:.4} (expected order {lq})"));
        let agree = t
            .rows
            .iter()
            .map(|r| (r.grid_norms.grad_sq / r.norms.grad_sq - 1.0).abs())
            .fold(0.0, f64::max);
        c.check(agree <= 1e-4, format!("N={dim} grid vs exact gradient norm, max rel {agree:.2e} <= 1e-4"));
    }
    Ok(())
}

fn mass_matched(c: &mut Checks) -> Result<()> {
    let mass = 100.0;
    for dim in [3, 4] {
        for n in [10.0, 30.0, 100.0, 300.0, 1000.0] {
            let b = BubbleProfile::mass_normalized(dim, mass, n)?;
            let closed = (b.mass() - mass).abs();
            let grid = Arc::new(b.grid(2.0 * b.radii().1, 6000)?);
            let (u, _, k) = mass_normalized_instanton(dim, mass, n, grid)?;
            let nodal = (u.mass() - mass).abs();
            c.check(
                closed <= 1e-8 && nodal <= 1e-8,
                format!(
                    "N={dim} n={n}: |mass - c| closed form {closed:.1e}, nodal {nodal:.1e} <= 1e-8 (grid factor {k:.8})"
                ),
            );
        }
    }
    let n = 1000.0;
    let ratio = solve_rn(3, mass, n)? / rn_asymptote(3, mass, n);
    c.check(
        (ratio - 1.0).abs() <= 0.1,
        format!("N=3 c={mass} n={n}: R_n over its asymptote {ratio:.4} within 10%"),
    );
    Ok(())
}

fn doubling(lo: f64, hi: f64) -> Vec<f64> {
    std::iter::successors(Some(lo), |n| Some(n * 2.0))
        .take_while(|n| *n <= hi)
        .collect()
}

fn critical_threshold(c: &mut Checks) -> Result<()> {
    let ns = doubling(8.0, 256.0);
    let alpha = thresholds(4, 3.0, 1.0, 1.0)?.alpha_nq.unwrap_or(f64::NAN);
    let cases = [
        ProblemParams::new(3, 1.0, 1.0, 4.0)?,
        ProblemParams::new(4, 1.0, 0.9 * alpha, 3.0)?,
    ];
    for p in cases {
        let scan = threshold_scan_critical(&p, &ns)?;
        let best = scan.best_margin();
        let label = format!("(N,q,mu,c)=({},{},{:.6},{})", p.dim, p.q, p.mu, p.c);
        match scan.rows.iter().find(|r| r.pass) {
            Some(r) => c.check(
                r.margin > 0.0,
                format!(
                    "{label}: n={} gives sup {:.6} < S^(N/2)/N = {:.6}, margin {:.4e}",
                    r.n, r.sup_t, r.threshold, r.margin
                ),
            ),
            None => {
                let infeasible = scan.rows.iter().filter(|r| r.note.is_some()).count();
                c.check(
                    false,
                    format!(
                        "{label}: no n in 8..256 below S^(N/2)/N = {:.6} ({infeasible} of {} n have no mass-{} bubble; best margin {best:?})",
                        scan.threshold,
                        ns.len(),
                        p.c
                    ),
                );
                // where the threshold is first met, for the record
                let far = threshold_scan_critical(&p, &[16384.0])?;
                if let Some(r) = far.rows.first() {
                    c.note(format!("{label}: beyond the range, n=16384 margin {:.3e}", r.margin));
                }
            }
        }
    }
    Ok(())
}

fn two_level(c: &mut Checks, quick: bool) -> Result<()> {
    let th = thresholds(3, 2.5, 1.0, 1.0)?;
    let mass = 0.5 * th.c0.unwrap_or(f64::NAN);
    let p = ProblemParams::new(3, mass, 1.0, 2.5)?;
    let grid = Arc::new(RadialGrid::new(3, 50.0, 3000, Grading::Graded(2.0))?);
    let init = gaussian_init(grid, mass, 2.0)?;
    let sol = local_minimize(&p, &init, &SolveOptions::default())?;
    let r = &sol.energy_report;
    let rho0 = sol.v_cap.unwrap_or(f64::NAN);
    c.check(sol.converged, format!("c = 0.5 c0 = {mass:.6}: converged, stationarity {:.2e}", sol.stationarity));
    c.check(r.phi < 0.0, format!("Phi(u_c) = {:.8} < 0", r.phi));
    c.check(r.lambda < 0.0, format!("lambda_c = {:.8} < 0", r.lambda));
    c.check(r.grad_sq < rho0, format!("|grad u_c|^2 = {:.6} < rho0 = {rho0:.6}", r.grad_sq));
    let ns = if quick { doubling(8.0, 64.0) } else { doubling(8.0, 256.0) };
    let scan = threshold_scan_subcritical(&p, &sol.u, &ns, 6000)?;
    let bump = scan.threshold - scan.base_level;
    match scan.rows.iter().find(|r| r.pass) {
        Some(row) => c.check(
            true,
            format!(
                "n = {}: m = {:.8} < sup = {:.8} < m + S^(3/2)/3 = {:.8}",
                row.n, scan.base_level, row.sup_t, scan.base_level + bump
            ),
        ),
        None => c.check(false, format!("no n in {ns:?} puts the path maximum in (m, m + S^(3/2)/3)")),
    }
    Ok(())
}

fn minimax(c: &mut Checks, _quick: bool) -> Result<()> {
    let opts = SolveOptions::default();
    let p = ProblemParams::new(3, 1.0, 1.0, 4.0)?;
    let grid = Arc::new(RadialGrid::new(3, 50.0, opts.cells, opts.grading)?);
    let s_pow = sobolev_constant(3)?.s.powf(1.5) / 3.0;
    let mut levels = Vec::new();
    for seed in 0..3 {
        let init = random_blended_init(grid.clone(), 1.0, seed)?;
        let r = ground_state_minimax(&p, &init, &opts)?;
        let e = &r.energy_report;
        c.check(
            r.converged,
            format!("seed {seed}: converged, stationarity {:.2e} <= {:.0e}", r.stationarity, opts.grad_tol),
        );
        c.check(
            e.pohozaev.abs() <= 1e-6 * e.grad_sq,
            format!("seed {seed}: |P| = {:.2e} <= 1e-6 |grad u|^2 = {:.2e}", e.pohozaev.abs(), 1e-6 * e.grad_sq),
        );
        c.check(e.lambda < 0.0, format!("seed {seed}: lambda = {:.8} < 0", e.lambda));
        c.check(r.level < s_pow, format!("seed {seed}: level {:.10} < S^(3/2)/3 = {s_pow:.10}", r.level));
        levels.push(r.level);
    }
    let spread = levels.iter().fold(f64::NEG_INFINITY, |a: f64, b| a.max(*b))
        - levels.iter().fold(f64::INFINITY, |a: f64, b| a.min(*b));
    c.check(
        spread <= 2.0 * opts.grad_tol,
        format!("restart spread {spread:.2e} <= 2 grad_tol = {:.0e}", 2.0 * opts.grad_tol),
    );
    let p2 = p.with_mass(2.0)?;
    let init = random_blended_init(grid, 2.0, 0)?;
    let r2 = ground_state_minimax(&p2, &init, &opts)?;
    c.check(
        r2.level <= levels[0] + 1e-8,
        format!("m(2c) = {:.10} <= m(c) + 1e-8 = {:.10}", r2.level, levels[0] + 1e-8),
    );
    Ok(())
}

/// Random positive radial profile: a sum of Gaussian and algebraic bumps.
pub fn random_profile(grid: Arc<RadialGrid>, rng: &mut impl Rng) -> Result<RadialFunction> {
    let terms: Vec<(f64, f64, f64, bool)> = (0..rng.random_range(1..4))
        .map(|_| {
            (
                rng.random_range(0.2..2.0),
                rng.random_range(0.3..3.0),
                rng.random_range(0.0..2.0),
                rng.random_bool(0.5),
            )
        })
        .collect();
    RadialFunction::from_fn(grid, move |r| {
        terms
            .iter()
            .map(|&(amp, w, centre, gauss)| {
                let x = (r - centre) / w;
                if gauss {
                    amp * (-x * x).exp()
                } else {
                    amp / (1.0 + x * x).powi(3)
                }
            })
            .sum()
    })
}

fn fiber_identities(c: &mut Checks, quick: bool) -> Result<()> {
    let count = if quick { 20 } else { 100 };
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let grids: Vec<Arc<RadialGrid>> = (3..=5)
        .map(|dim| RadialGrid::new(dim, 30.0, 1500, Grading::Graded(2.0)).map(Arc::new))
        .collect::<Result<_>>()?;
    let (mut worst_p, mut worst_scan, mut worst_defect) = (0.0f64, 0.0f64, f64::INFINITY);
    let mut supercritical = 0;
    for _ in 0..count {
        let k = rng.random_range(0..3);
        let dim = k + 3;
        let two_star = 2.0 * dim as f64 / (dim as f64 - 2.0);
        let q = rng.random_range(2.05..two_star - 0.05);
        let mu = rng.random_range(0.1..2.0);
        let u = random_profile(grids[k].clone(), &mut rng)?;
        let p = ProblemParams::new(dim, u.mass(), mu, q)?;
        let n = Norms::of(&u, &p)?;
        // derivative of the fiber energy from profiles dilated on their grids
        let h = 1e-4;
        let e = |t: f64| -> Result<f64> { energy(&fiber_scale_exact(&u, t)?, &p) };
        let fd = (e(1.0 + h)? - e(1.0 - h)?) / (2.0 * h);
        let scale = n.grad_sq + p.mu * p.gamma_q() * n.lq + n.lcrit;
        worst_p = worst_p.max((n.pohozaev(&p) - fd).abs() / scale);
        if p.exponents.at_least_l2_critical() {
            supercritical += 1;
            let cp = fiber_maximizer(&n, &p)?;
            // 1e5-point log scan over two decades either side of t_u
            let scan = (0..100_000)
                .map(|i| cp.t * 10f64.powf(-1.0 + 2.0 * i as f64 / 99_999.0))
                .map(|t| fiber_energy(&n, &p, t))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .fold(f64::NEG_INFINITY, f64::max);
            let far = (0..2000)
                .map(|i| 10f64.powf(-6.0 + 12.0 * i as f64 / 1999.0))
                .map(|t| fiber_energy(&n, &p, t))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .fold(f64::NEG_INFINITY, f64::max);
            let above = (scan.max(far) - cp.value).max(0.0);
            let below = cp.value - scan;
            worst_scan = worst_scan.max(above.max(below) / cp.value.abs().max(1.0));
            for t in [0.05, 0.3, 0.7, 0.95, 1.05, 1.5, 3.0, 10.0] {
                worst_defect = worst_defect.min(dilation_defect_from_norms(&n, &p, t)?);
            }
        }
    }
    c.check(
        worst_p <= 1e-6,
        format!("{count} profiles: max |P - d/dt Phi(t^(N/2)u_t)|_(t=1)| / scale = {worst_p:.2e} <= 1e-6"),
    );
    c.check(
        supercritical > 0 && worst_scan <= 1e-8,
        format!("{supercritical} profiles with q >= q_bar: |max scan - Phi at t_u| = {worst_scan:.2e} <= 1e-8"),
    );
    c.check(
        worst_defect >= -1e-10,
        format!("min dilation defect {worst_defect:.3e} >= -1e-10"),
    );
    Ok(())
}

fn deformation(c: &mut Checks) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for dim in [3usize, 50] {
        let mut x: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        x.iter_mut().for_each(|v| *v /= nx);
        let tr = deformation_flow_demo(ToyFunctional::Height, &x, 10.0, 0.01)?;
        let drift = tr.steps.iter().map(|s| (s.norm - 1.0).abs()).fold(0.0, f64::max);
        let increases = tr.steps.windows(2).filter(|w| w[1].value > w[0].value).count();
        let violations = tr
            .steps
            .iter()
            .filter(|s| s.displacement > s.bound * (1.0 + 1e-12))
            .count();
        c.check(drift <= 1e-10, format!("dim {dim}: norm drift {drift:.2e} <= 1e-10"));
        c.check(increases == 0, format!("dim {dim}: {} steps, {increases} energy increases", tr.steps.len() - 1));
        c.check(violations == 0, format!("dim {dim}: {violations} displacement-bound violations"));
    }
    Ok(())
}

fn auditor(c: &mut Checks) -> Result<()> {
    let ts = default_samples();
    let r = check_conditions(&GeneralNonlinearity::power(4.0), 3, 2.0, &ts)?;
    c.check(
        r.f1.verdict.is_pass() && r.f2.is_pass() && r.f3.verdict.is_pass(),
        format!(
            "|t|^2 t, N=3, kappa=2: F1 {:?}, F2 {:?}, F3 {:?} (expected pass)",
            r.f1.verdict, r.f2, r.f3.verdict
        ),
    );
    let r = check_conditions(&GeneralNonlinearity::power(6.0), 3, 2.0, &ts)?;
    c.check(
        matches!(r.f2_upper.verdict, Verdict::Fail { .. }),
        format!("|t|^4 t, N=3: F2 upper bracket {:?} (expected fail with witness)", r.f2_upper.verdict),
    );
    let zero = GeneralNonlinearity::with_primitive(|_| 0.0, |_| 0.0);
    let r = check_conditions(&zero, 3, 2.0, &ts)?;
    let everywhere = r.f2_positivity.samples.iter().all(|s| !(s.value > 0.0));
    c.check(
        r.f2.is_fail() && everywhere,
        format!("f = 0: F2 {:?}, positivity violated at every sample: {everywhere}", r.f2),
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_criteria_pass() {
        for id in [1, 9, 10] {
            let r = run_criterion(id, true);
            assert!(r.pass, "{:#?}", r);
        }
    }

    #[test]
    fn unknown_criterion_fails() {
        assert!(!run_criterion(42, true).pass);
    }
}
