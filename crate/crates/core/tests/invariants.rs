//! Property tests over random radial profiles.

use std::sync::{Arc, OnceLock};

use normsol::bubbles::{solve_rn, superpose, truncated_instanton, BubbleProfile};
use normsol::functionals::{
    dilation_defect, fiber_derivative, fiber_energy, fiber_scale, h_dilation, pohozaev, Norms,
    ProblemParams,
};
use normsol::pohozaev::{fiber_critical_points_from_norms, fiber_maximizer, FiberKind};
use normsol::radial::{Grading, RadialFunction, RadialGrid};
use normsol::solvers::{deformation_flow_demo, ToyFunctional};
use proptest::prelude::*;

fn grid() -> Arc<RadialGrid> {
    static G: OnceLock<Arc<RadialGrid>> = OnceLock::new();
    G.get_or_init(|| Arc::new(RadialGrid::new(3, 50.0, 2000, Grading::Graded(2.0)).unwrap()))
        .clone()
}

/// Fine enough that the O(h²) norm error stays below 1e-6 for the narrowest bumps.
fn fine_grid() -> Arc<RadialGrid> {
    static G: OnceLock<Arc<RadialGrid>> = OnceLock::new();
    G.get_or_init(|| Arc::new(RadialGrid::new(3, 50.0, 8000, Grading::Graded(2.0)).unwrap()))
        .clone()
}

fn grid_n(dim: usize) -> Arc<RadialGrid> {
    Arc::new(RadialGrid::new(dim, 50.0, 2000, Grading::Graded(2.0)).unwrap())
}

/// Two-bump positive profile, decaying well inside the grid.
fn bumps(g: Arc<RadialGrid>, a: f64, w1: f64, b: f64, w2: f64) -> RadialFunction {
    RadialFunction::from_fn(g, |r| {
        a * (-(r / w1).powi(2)).exp() + b * (1.0 + r * r) * (-(r / w2).powi(2)).exp()
    })
    .unwrap()
}

fn profile() -> impl Strategy<Value = (f64, f64, f64, f64)> {
    (0.1..3.0f64, 0.3..1.5f64, 0.0..1.0f64, 0.5..1.5f64)
}

fn l2(u: &RadialFunction) -> f64 {
    u.mass().sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn l2_triangle_inequality(p1 in profile(), p2 in profile(), s in -2.0..2.0f64) {
        let u = bumps(grid(), p1.0, p1.1, p1.2, p1.3);
        let v = bumps(grid(), s * p2.0, p2.1, p2.2, p2.3);
        let w = RadialFunction::new(grid(), u.values().iter().zip(v.values()).map(|(a, b)| a + b).collect()).unwrap();
        prop_assert!(l2(&w) <= l2(&u) + l2(&v) + 1e-12);
    }

    #[test]
    fn gradient_ignores_constants(p in profile(), k in -5.0..5.0f64) {
        let u = bumps(grid(), p.0, p.1, p.2, p.3);
        let v = RadialFunction::new(grid(), u.values().iter().map(|x| x + k).collect()).unwrap();
        let a = u.grad_norm_sq();
        prop_assert!((v.grad_norm_sq() - a).abs() <= 1e-10 * a.max(1.0));
    }

    #[test]
    fn pohozaev_is_the_fiber_slope(p in profile(), dim in 3usize..6, qf in 0.05..0.95f64, mu in 0.0..3.0f64) {
        let ts = 2.0 * dim as f64 / (dim as f64 - 2.0);
        let q = 2.0 + qf * (ts - 2.0);
        let pp = ProblemParams::new(dim, 1.0, mu, q).unwrap();
        let u = bumps(grid_n(dim), p.0, p.1, p.2, p.3);
        let n = Norms::of(&u, &pp).unwrap();
        let e = |t: f64| fiber_energy(&n, &pp, t).unwrap();
        let h = 1e-3;
        let fd = (-e(1.0 + 2.0 * h) + 8.0 * e(1.0 + h) - 8.0 * e(1.0 - h) + e(1.0 - 2.0 * h)) / (12.0 * h);
        let pz = pohozaev(&u, &pp).unwrap();
        prop_assert!((pz - fd).abs() <= 1e-6 * (1.0 + pz.abs()), "P = {pz}, fd = {fd}");
    }

    #[test]
    fn dilation_defect_is_nonnegative(p in profile(), qf in 0.0..0.95f64, mu in 0.0..3.0f64, lt in -3.0..3.0f64) {
        let q = 10.0 / 3.0 + qf * (6.0 - 10.0 / 3.0);
        let pp = ProblemParams::new(3, 1.0, mu, q).unwrap();
        let u = bumps(grid(), p.0, p.1, p.2, p.3);
        prop_assert!(dilation_defect(&u, &pp, lt.exp()).unwrap() >= -1e-10);
    }

    #[test]
    fn dilation_correction_is_positive(lt in -5.0..5.0f64, dim in 3usize..8) {
        prop_assume!(lt.abs() > 1e-6);
        prop_assert!(h_dilation(lt.exp(), 2.0 * dim as f64 / (dim as f64 - 2.0)) > 0.0);
    }

    #[test]
    fn fiber_scale_preserves_mass(p in profile(), lt in (1.0f64 / 8.0).ln()..8f64.ln()) {
        let u = bumps(grid(), p.0, p.1, p.2, p.3);
        let v = fiber_scale(&u, lt.exp()).unwrap();
        prop_assert!((v.mass() / u.mass() - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn fiber_maximizer_moves_against_dilation(p in profile(), ls in -1.0..1.0f64, mu in 0.0..2.0f64) {
        let pp = ProblemParams::new(3, 1.0, mu, 4.0).unwrap();
        let u = bumps(fine_grid(), p.0, p.1, p.2, p.3);
        let s = ls.exp();
        let t = fiber_maximizer(&Norms::of(&u, &pp).unwrap(), &pp).unwrap().t;
        let ts = fiber_maximizer(&Norms::of(&fiber_scale(&u, s).unwrap(), &pp).unwrap(), &pp).unwrap().t;
        prop_assert!((ts * s / t - 1.0).abs() <= 1e-6, "t = {t}, t_s = {ts}, s = {s}");
    }

    #[test]
    fn fiber_scale_composes(p in profile(), la in -0.7..0.7f64, lb in -0.7..0.7f64) {
        let u = bumps(grid(), p.0, p.1, p.2, p.3);
        let (a, b) = (la.exp(), lb.exp());
        let two = fiber_scale(&fiber_scale(&u, a).unwrap(), b).unwrap();
        let one = fiber_scale(&u, a * b).unwrap();
        let scale = one.values().iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for (x, y) in two.values().iter().zip(one.values()) {
            prop_assert!((x - y).abs() <= 1e-4 * scale);
        }
    }

    #[test]
    fn single_crossing_above_l2_critical(p in profile(), qf in 0.0..0.95f64, mu in 0.0..3.0f64) {
        let q = 10.0 / 3.0 + qf * (6.0 - 10.0 / 3.0);
        let pp = ProblemParams::new(3, 1.0, mu, q).unwrap();
        let n = Norms::of(&bumps(grid(), p.0, p.1, p.2, p.3), &pp).unwrap();
        let cp = fiber_maximizer(&n, &pp);
        // a nonpositive coefficient at q = q̄ leaves no root at all
        prop_assume!(cp.is_ok());
        let t_u = cp.unwrap().t;
        for k in 1..40 {
            let f = 1.0 + 0.1 * k as f64;
            prop_assert!(fiber_derivative(&n, &pp, t_u / f) > 0.0);
            prop_assert!(fiber_derivative(&n, &pp, t_u * f) < 0.0);
        }
    }

    #[test]
    fn subcritical_roots_order(p in profile(), mu in 1e-3..0.3f64) {
        let pp = ProblemParams::new(3, 1.0, mu, 2.5).unwrap();
        let n = Norms::of(&bumps(grid(), p.0, p.1, p.2, p.3), &pp).unwrap();
        let cps = fiber_critical_points_from_norms(&n, &pp).unwrap();
        prop_assume!(cps.len() == 2);
        let (plus, minus) = (cps[0], cps[1]);
        prop_assert_eq!(plus.kind, FiberKind::Plus);
        prop_assert_eq!(minus.kind, FiberKind::Minus);
        prop_assert!(minus.value > plus.value);
        let e = |t: f64| fiber_energy(&n, &pp, t).unwrap();
        let h = 1e-3 * plus.t;
        prop_assert!(e(plus.t + h) + e(plus.t - h) - 2.0 * e(plus.t) > 0.0);
    }

    #[test]
    fn superposed_path_keeps_mass(t in 0.0..20.0f64, c in 0.2..5.0f64) {
        let b0 = BubbleProfile::truncated(3, 16.0).unwrap();
        let g = Arc::new(b0.grid(40.0, 3000).unwrap());
        let uc = bumps(g.clone(), 1.0, 1.5, 0.0, 1.0);
        let uc = uc.scale((c / uc.mass()).sqrt());
        let b = truncated_instanton(3, 16.0, g).unwrap();
        let w = superpose(&uc, &b, t, c).unwrap();
        prop_assert!((w.mass() / c - 1.0).abs() <= 1e-8);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn outer_radius_grows_with_mass(dim in 3usize..6, ln in 1.0..6.0f64, c in 10.0..200.0f64) {
        let n = ln.exp();
        let r1 = solve_rn(dim, c, n);
        let r2 = solve_rn(dim, 1.5 * c, n);
        prop_assume!(r1.is_ok() && r2.is_ok());
        prop_assert!(r2.unwrap() > r1.unwrap());
        let b = BubbleProfile::mass_normalized(dim, c, n).unwrap();
        prop_assert!((b.mass() / c - 1.0).abs() <= 1e-8);
    }

    #[test]
    fn deformation_stays_on_sphere(raw in prop::collection::vec(-1.0..1.0f64, 3..8), which in 0usize..3) {
        let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assume!(norm > 1e-3);
        let start: Vec<f64> = raw.iter().map(|x| x / norm).collect();
        let f = [ToyFunctional::Height, ToyFunctional::Quadratic, ToyFunctional::DoubleWell][which];
        let tr = deformation_flow_demo(f, &start, 2.0, 0.01).unwrap();
        for s in &tr.steps {
            prop_assert!((s.norm - 1.0).abs() <= 1e-10);
            prop_assert!(s.displacement <= s.bound * (1.0 + 1e-12) + 1e-15);
        }
        for w in tr.steps.windows(2) {
            prop_assert!(w[1].value <= w[0].value + 1e-14);
        }
    }
}
