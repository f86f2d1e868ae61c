//! Property-based checks of the structural invariants on random small
//! instances.

#![allow(clippy::needless_range_loop)]

use std::f64::consts::{E, PI};
use std::sync::Arc;

use eotlab_core::costs::{
    cosh_cost, cross_derivative_defect, quadratic_cost, tau_modulus, BoxDomain,
};
use eotlab_core::geometry::{
    check_minty_trick, entropy_lower_bound_quadratic, minty_transform, spacings_commensurate,
    w2_between_plans,
};
use eotlab_core::measures::{entropy_lebesgue, make_gaussian_grid, moment, Axis, GridMeasure};
use eotlab_core::quantities::{
    cost_term, duality_gap_field, marginal_entropy_mean, ot_from_schrodinger,
    plan_entropy_lebesgue, schrodinger_value, suboptimality,
};
use eotlab_core::solvers::{
    double_c_transform, exact_ot_1d, exact_ot_lp, sinkhorn, CostMatrix, Plan, SinkhornOptions,
};
use eotlab_core::tolerances::CONJ_TOL;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn cfg(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        ..ProptestConfig::default()
    }
}

/// Positive weights on `[lo, lo + len]`.
fn measure_1d(max_cells: usize) -> impl Strategy<Value = Arc<GridMeasure>> {
    (
        -2.0..2.0f64,
        0.5..4.0f64,
        prop::collection::vec(0.05..1.0f64, 3..=max_cells),
    )
        .prop_map(|(lo, len, w)| {
            let axis = Axis::cells(lo, lo + len, w.len());
            Arc::new(GridMeasure::from_weights(vec![axis], w).unwrap())
        })
}

/// Nonnegative weights with some empty cells, in one or two dimensions.
fn sparse_measure() -> impl Strategy<Value = GridMeasure> {
    (1usize..=2, 3usize..=8, -1.0..1.0f64, 0.2..3.0f64)
        .prop_flat_map(|(d, n, lo, len)| {
            let nodes = n.pow(d as u32);
            (
                Just((d, n, lo, len)),
                prop::collection::vec(prop_oneof![Just(0.0), 0.01..1.0f64], nodes),
                0..nodes,
            )
        })
        .prop_map(|((d, n, lo, len), mut w, k)| {
            w[k] = 1.0;
            GridMeasure::from_weights(vec![Axis::cells(lo, lo + len, n); d], w).unwrap()
        })
}

/// Two positive measures on shifted n^d grids, d ∈ {1, 2}.
fn grid_pair_nd() -> impl Strategy<Value = (Arc<GridMeasure>, Arc<GridMeasure>)> {
    (1usize..=2, 3usize..=6)
        .prop_flat_map(|(d, n)| {
            let w = prop::collection::vec(0.05..1.0f64, n.pow(d as u32));
            (Just((d, n)), w.clone(), w, -1.0..1.0f64)
        })
        .prop_map(|((d, n), w0, w1, shift)| {
            let m = |lo: f64, w| {
                Arc::new(
                    GridMeasure::from_weights(vec![Axis::cells(lo, lo + 2.0, n); d], w).unwrap(),
                )
            };
            (m(-1.0, w0), m(shift, w1))
        })
}

fn quad_pair(max_cells: usize) -> impl Strategy<Value = (Arc<GridMeasure>, Arc<GridMeasure>)> {
    (measure_1d(max_cells), measure_1d(max_cells))
}

fn tight() -> SinkhornOptions {
    SinkhornOptions {
        trace_dual: true,
        ..SinkhornOptions::default()
    }
}

proptest! {
    #![proptest_config(cfg(64))]

    #[test]
    fn holder_moment_bound(m in sparse_measure(), delta in 0.05..3.0f64) {
        let m2 = moment(&m, 2.0).unwrap();
        let mq = moment(&m, 2.0 + delta).unwrap();
        prop_assert!(m2 <= mq.powf(2.0 / (2.0 + delta)) * (1.0 + 1e-12) + 1e-300);
    }

    #[test]
    fn entropy_is_minimal_for_uniform_on_the_support(m in sparse_measure()) {
        prop_assert!(entropy_lebesgue(&m) >= -m.support_volume().ln() - 1e-12);
    }

    #[test]
    fn entropy_dominates_the_gaussian_at_equal_variance(m in measure_1d(40)) {
        // the histogram density has the node variance plus h²/12 from the
        // spread inside each cell; that term is the discretization slack
        let h = m.axes()[0].spacing;
        let var = m.variance() + h * h / 12.0;
        prop_assert!(entropy_lebesgue(&m) >= -0.5 * (2.0 * PI * E * var).ln() - 1e-12);
    }

    #[test]
    fn cross_derivatives_match_finite_differences(seed in any::<u64>(), d in 1usize..=3) {
        let dom = BoxDomain::square(-1.5, 1.5, d);
        prop_assert!(cross_derivative_defect(&quadratic_cost(d), &dom, 100, seed) < 1e-5);
        let dom = BoxDomain::square(-1.0, 1.0, 1);
        prop_assert!(cross_derivative_defect(&cosh_cost(), &dom, 100, seed) < 1e-5);
    }

    #[test]
    fn minty_transform_is_an_involution(
        z in prop::collection::vec(-10.0..10.0f64, 2..=12).prop_filter("even", |z| z.len() % 2 == 0),
    ) {
        let d = z.len() / 2;
        let back = minty_transform(&minty_transform(&z, d), d);
        for (a, b) in back.iter().zip(&z) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(cfg(16))]

    #[test]
    fn tau_is_monotone_in_the_radius(r1 in 0.0..1.5f64, dr in 0.0..1.5f64) {
        let dom = BoxDomain::square(-1.0, 1.0, 1);
        let a = tau_modulus(&cosh_cost(), &dom, r1, 400).unwrap();
        let b = tau_modulus(&cosh_cost(), &dom, r1 + dr, 400).unwrap();
        prop_assert!(a.tau <= b.tau);
    }

    #[test]
    fn sinkhorn_invariants((mu0, mu1) in quad_pair(24), eps in 0.02..1.0f64, cosh in any::<bool>()) {
        let c = if cosh { cosh_cost() } else { quadratic_cost(1) };
        let cost = CostMatrix::new(&mu0, &mu1, &c).unwrap();
        let sol = sinkhorn(&mu0, &mu1, &cost, eps, &tight()).unwrap();
        // dual ascent
        for w in sol.dual_trace.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-12 * w[0].abs().max(1.0), "{} -> {}", w[0], w[1]);
        }
        // strictly positive plan
        for i in 0..sol.plan.rows() {
            for j in 0..sol.plan.cols() {
                prop_assert!(sol.plan.get(i, j) > 0.0);
            }
        }
        // algebraic Schrödinger identity
        let h = plan_entropy_lebesgue(&sol.plan);
        let ot = cost_term(&sol.plan, &c) + eps * h;
        let c_eps = schrodinger_value(&sol.plan, &c, eps);
        prop_assert!((ot - ot_from_schrodinger(c_eps, eps, 1)).abs() <= 1e-9 * ot.abs().max(1.0));
    }

    #[test]
    fn weak_duality_and_decomposition((mu0, mu1) in quad_pair(20), eps in 0.02..1.0f64, cosh in any::<bool>()) {
        let c = if cosh { cosh_cost() } else { quadratic_cost(1) };
        let cost = CostMatrix::new(&mu0, &mu1, &c).unwrap();
        let lp = exact_ot_lp(&mu0, &mu1, &c).unwrap();
        let sol = sinkhorn(&mu0, &mu1, &cost, eps, &SinkhornOptions::default()).unwrap();
        // feasible pairs: the LP duals and the double c-transform of ψ_ε
        let (phi_cc, psi_cc) = double_c_transform(&sol.potentials.psi, &cost);
        let plans = [sol.plan.clone(), Plan::product(mu0.clone(), mu1.clone()), lp.plan.clone()];
        for (phi, psi) in [(&lp.potentials.phi, &lp.potentials.psi), (&phi_cc, &psi_cc)] {
            for p in &plans {
                let mut lhs = 0.0;
                let mut rhs = 0.0;
                for i in 0..p.rows() {
                    for j in 0..p.cols() {
                        lhs += (phi[i] + psi[j]) * p.get(i, j);
                        rhs += cost.get(i, j) * p.get(i, j);
                    }
                }
                prop_assert!(lhs <= rhs + 1e-9, "{lhs} > {rhs}");
            }
        }
        // (c, γ_ε) − OT₀ = ∫E dγ_ε
        let e = duality_gap_field(&cost, &lp.potentials).unwrap();
        let sub = suboptimality(&sol.plan, &e).unwrap();
        let direct = cost_term(&sol.plan, &c) - lp.value;
        prop_assert!((sub - direct).abs() <= 1e-9, "{sub} vs {direct}");
        prop_assert!(sub >= -1e-12);
    }

    #[test]
    fn exact_1d_matches_the_lp((mu0, mu1) in quad_pair(40)) {
        let c = quadratic_cost(1);
        let (_, v1d) = exact_ot_1d(&mu0, &mu1, &c).unwrap();
        let lp = exact_ot_lp(&mu0, &mu1, &c).unwrap();
        prop_assert!((v1d - lp.value).abs() <= 1e-9, "{v1d} vs {}", lp.value);
        prop_assert!((lp.value - lp.dual_value).abs() <= 1e-9);
    }

    #[test]
    fn sweep_monotonicity((mu0, mu1) in quad_pair(16), e_hi in 0.05..1.0f64, ratio in 0.2..0.9f64) {
        let c = quadratic_cost(1);
        let cost = CostMatrix::new(&mu0, &mu1, &c).unwrap();
        let solve = |eps: f64| {
            let p = sinkhorn(&mu0, &mu1, &cost, eps, &SinkhornOptions::default()).unwrap().plan;
            (cost_term(&p, &c), plan_entropy_lebesgue(&p))
        };
        let h_m = marginal_entropy_mean(&mu0, &mu1);
        let e_lo = e_hi * ratio;
        let (c_hi, h_hi) = solve(e_hi);
        let (c_lo, h_lo) = solve(e_lo);
        prop_assert!(h_hi <= h_lo + 1e-8, "entropy {h_hi} at {e_hi} vs {h_lo} at {e_lo}");
        prop_assert!(c_hi >= c_lo - 1e-8);
        // (c,γ) + ε KL(γ | μ₀⊗μ₁) = OT_ε − 2εH_m is nondecreasing in ε
        let g = |c: f64, h: f64, e: f64| c + e * h - 2.0 * e * h_m;
        prop_assert!(g(c_hi, h_hi, e_hi) >= g(c_lo, h_lo, e_lo) - 1e-8);
    }

    #[test]
    fn w2_triangle_inequality((mu0, mu1) in quad_pair(6), e1 in 0.02..1.0f64, e2 in 0.02..1.0f64) {
        let c = quadratic_cost(1);
        let cost = CostMatrix::new(&mu0, &mu1, &c).unwrap();
        let s = |e| sinkhorn(&mu0, &mu1, &cost, e, &SinkhornOptions::default()).unwrap().plan;
        let plans = [s(e1), s(e2), Plan::product(mu0.clone(), mu1.clone()), exact_ot_lp(&mu0, &mu1, &c).unwrap().plan];
        let w = |a: &Plan, b: &Plan| {
            let r = w2_between_plans(a, b, usize::MAX).unwrap();
            prop_assert!(r.truncated_mass == [0.0, 0.0]);
            Ok(r.w2)
        };
        for a in &plans {
            prop_assert!(w(a, a)? <= 1e-7);
            for b in &plans {
                prop_assert!((w(a, b)? - w(b, a)?).abs() <= 1e-9);
                for m in &plans {
                    prop_assert!(w(a, b)? <= w(a, m)? + w(m, b)? + 1e-9);
                }
            }
        }
    }

    #[test]
    fn minty_trick_on_exact_potentials((mu0, mu1) in grid_pair_nd(), seed in any::<u64>()) {
        let c = quadratic_cost(mu0.dim());
        let cost = CostMatrix::new(&mu0, &mu1, &c).unwrap();
        let lp = exact_ot_lp(&mu0, &mu1, &c).unwrap();
        let e = duality_gap_field(&cost, &lp.potentials).unwrap();
        let report = check_minty_trick(&e, &mu0, &mu1, 10_000, seed).unwrap();
        prop_assert!(report.holds(CONJ_TOL), "{}", report.max_violation);
    }

    #[test]
    fn global_entropy_bound_holds_on_entropic_plans(
        s0 in 0.5..2.0f64,
        ratio in prop::sample::select(vec![0.5, 1.0, 2.0]),
        shift in -1.0..1.0f64,
        eps in 0.05..0.5f64,
    ) {
        let s1 = s0 * ratio;
        let g = |m: f64, s: f64| Arc::new(
            make_gaussian_grid(&[m], &DMatrix::from_element(1, 1, s * s), 5.0, 64).unwrap(),
        );
        let (mu0, mu1) = (g(0.0, s0), g(shift, s1));
        let c = quadratic_cost(1);
        let cost = CostMatrix::new(&mu0, &mu1, &c).unwrap();
        let lp = exact_ot_lp(&mu0, &mu1, &c).unwrap();
        let e = duality_gap_field(&cost, &lp.potentials).unwrap();
        let plan = sinkhorn(&mu0, &mu1, &cost, eps, &SinkhornOptions::default()).unwrap().plan;
        prop_assert!(spacings_commensurate(&plan));
        let w2 = w2_between_plans(&plan, &lp.plan, usize::MAX).unwrap();
        let b = entropy_lower_bound_quadratic(&plan, &e, Some(w2.w2_sq)).unwrap();
        prop_assert!(b.slack_e.unwrap() >= -0.02, "{:?}", b.slack_e);
        prop_assert!(b.slack_w.unwrap() >= -0.02, "{:?}", b.slack_w);
    }
}
