mod common;

use std::f64::consts::PI;

use common::{material, pearson};
use proptest::prelude::*;
use sulphation::ensemble;
use sulphation::heat_fd::{self, Field, Grid1D};
use sulphation::lamperti::{self, LampertiDrift};
use sulphation::lsst::TruncationSpec;
use sulphation::sulphation::{self as sul, BoundaryPair, Decimation, Quantity};

fn spec(sigma: f64, log2_delta: i32) -> TruncationSpec {
    TruncationSpec::for_params(&pearson(sigma), 0.22, 2f64.powi(log2_delta)).unwrap()
}

fn sigma_strategy() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.25), Just(0.7), Just(1.0)]
}

proptest! {
    #[test]
    fn truncated_drift_is_c1_at_junctions(sigma in sigma_strategy(), e in 6i32..16, which in 0usize..4) {
        let s = spec(sigma, -e);
        let x = [0.0, s.thr, PI - s.thr, PI][which];
        let h = 1e-6;
        let dl = (s.truncated_drift(x) - s.truncated_drift(x - h)) / h;
        let dr = (s.truncated_drift(x + h) - s.truncated_drift(x)) / h;
        let eps = 1e-9;
        let (l, r) = (s.truncated_drift(x - eps), s.truncated_drift(x + eps));
        prop_assert!((l - r).abs() <= 4.0 * eps * (dl.abs() + dr.abs()) + 1e-12 * (1.0 + l.abs()));
        // one-sided quotients differ by O(h |f''|) even for a C¹ function
        let curv = s.drift.df(s.thr).abs() / s.thr;
        prop_assert!((dl - dr).abs() <= 1e-8 * (1.0 + dl.abs()) + 2.0 * h * curv, "{dl} vs {dr}");
    }

    #[test]
    fn drift_derivative_bounded_by_decay_constant(sigma in sigma_strategy(), y in 1e-6f64..(PI - 1e-6)) {
        let d = LampertiDrift::new(&pearson(sigma));
        prop_assert!(d.drift_derivative(y).unwrap() <= -d.c0_const);
        prop_assert_eq!(d.f(y) > 0.0, y < d.y_star);
    }

    #[test]
    fn truncated_drift_one_sided_lipschitz(sigma in sigma_strategy(), e in 4i32..16, x in -2.0f64..5.2, y in -2.0f64..5.2) {
        let s = spec(sigma, -e);
        let lhs = (x - y) * (s.truncated_drift(x) - s.truncated_drift(y));
        prop_assert!(lhs <= -s.c0_const * (x - y).powi(2) + 1e-9 * (1.0 + lhs.abs()));
    }

    #[test]
    fn truncated_drift_globally_lipschitz(sigma in sigma_strategy(), e in 4i32..16, x in -2.0f64..5.2, y in -2.0f64..5.2) {
        let s = spec(sigma, -e);
        let bound = PI * PI * s.c0_const * s.delta.powf(-2.0 * s.k);
        let lhs = (s.truncated_drift(x) - s.truncated_drift(y)).abs();
        prop_assert!(lhs <= bound * (x - y).abs() * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn original_drift_one_sided_lipschitz(sigma in sigma_strategy(), x in 0.05f64..3.09, y in 0.05f64..3.09) {
        let d = LampertiDrift::new(&pearson(sigma));
        let lhs = (x - y) * (d.f(x) - d.f(y));
        prop_assert!(lhs <= -d.c0_const * (x - y).powi(2) + 1e-9 * (1.0 + lhs.abs()));
    }

    #[test]
    fn lamperti_round_trip(sigma in sigma_strategy(), psi in 0.0f64..=1.5) {
        let p = pearson(sigma);
        let y = lamperti::forward(&p, psi).unwrap();
        prop_assert!((0.0..=PI).contains(&y));
        prop_assert!((lamperti::inverse(1.5, y) - psi).abs() <= 1e-12);
    }

    #[test]
    fn inverse_stays_in_range(y in -1e3f64..1e3) {
        prop_assert!((0.0..=1.5).contains(&lamperti::inverse(1.5, y)));
    }

    #[test]
    fn percentiles_are_ordered(mut v in prop::collection::vec(-1e3f64..1e3, 1..300)) {
        v.sort_by(f64::total_cmp);
        let q: Vec<f64> = [0.0, 0.25, 0.5, 0.75, 1.0].iter().map(|&p| ensemble::percentile_nearest_rank(&v, p)).collect();
        prop_assert!(q.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(v.contains(&q[2]));
    }

    #[test]
    fn field_statistics_ordered(rows in prop::collection::vec(prop::collection::vec(0.0f64..10.0, 4), 2..40)) {
        let fields: Vec<Field> = rows.iter().map(|r| {
            let mut f = Field::new(vec![0.0, 0.1, 0.2, 0.3]);
            f.push_row(0.0, r.iter().copied());
            f
        }).collect();
        let refs: Vec<&Field> = fields.iter().collect();
        let st = ensemble::field_statistics(&refs).unwrap();
        for i in 0..4 {
            prop_assert!(st.p25.data[i] <= st.p50.data[i] && st.p50.data[i] <= st.p75.data[i]);
            prop_assert!(st.std.data[i] >= 0.0);
        }
    }

    #[test]
    fn fit_ignores_error_scale(q in 0.3f64..2.0, c in 1e-3f64..1e3, k in 1e-6f64..1e6) {
        let d: [f64; 5] = [1e-3, 2e-3, 4e-3, 8e-3, 1.6e-2];
        let e: Vec<f64> = d.iter().enumerate().map(|(i, x)| c * x.powf(q) * (1.0 + 0.05 * (i as f64).sin())).collect();
        let scaled: Vec<f64> = e.iter().map(|v| v * k).collect();
        let a = ensemble::fit_power_law(&d, &e).unwrap();
        let b = ensemble::fit_power_law(&d, &scaled).unwrap();
        prop_assert!((a.q - b.q).abs() <= 1e-9);
        prop_assert!((b.log_c - a.log_c - k.ln()).abs() <= 1e-8);
    }

    #[test]
    fn heat_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, p in prop::collection::vec(0.0f64..1.5, 21), q in prop::collection::vec(0.0f64..1.5, 21)) {
        let grid = Grid1D::from_counts(1.0, 0.02, 10, 20).unwrap();
        let mix: Vec<f64> = p.iter().zip(&q).map(|(x, y)| a * x + b * y).collect();
        let up = heat_fd::solve_heat(&grid, &p).unwrap().u;
        let uq = heat_fd::solve_heat(&grid, &q).unwrap().u;
        let um = heat_fd::solve_heat(&grid, &mix).unwrap().u;
        for i in 0..um.data.len() {
            prop_assert!((um.data[i] - a * up.data[i] - b * uq.data[i]).abs() <= 1e-12);
        }
    }

    #[test]
    fn heat_maximum_principle(dbar_pct in 1u32..=50, p in prop::collection::vec(0.0f64..1.5, 41)) {
        let grid = Grid1D::from_counts(1.0, dbar_pct as f64 / 100.0 * 0.01 * 40.0, 10, 40).unwrap();
        let u = heat_fd::solve_heat(&grid, &p).unwrap().u;
        for n in 0..u.rows() {
            let cap = p[..=n].iter().copied().fold(0.0, f64::max);
            prop_assert!(u.row(n).iter().all(|&v| v >= 0.0 && v <= cap + 1e-15));
        }
    }

    #[test]
    fn coupled_solution_stays_bounded(psi in prop::collection::vec(0.0f64..=1.5, 41), lambda in prop_oneof![Just(1.0), Just(10.0), Just(100.0)]) {
        let mat = material(lambda);
        let dt = mat.max_time_step(0.1);
        let grid = Grid1D::from_counts(1.0, 40.0 * dt, 10, 40).unwrap();
        let pair = BoundaryPair::from_series(&psi, grid.dt, 1, &mat);
        let (s, c) = sul::solve_direct(&grid, &mat, &pair).unwrap();
        prop_assert!(s.data.iter().all(|&v| (0.0..mat.eta_tilde).contains(&v)));
        prop_assert!(c.data.iter().all(|&v| (0.0..=mat.c0_bar).contains(&v)));
        for n in 1..c.rows() {
            prop_assert!(c.row(n).iter().zip(c.row(n - 1)).all(|(a, b)| a <= b));
            prop_assert!(sul::min_scheme_weight(&grid, &mat, s.row(n), c.row(n)) >= 0.0);
        }
        let split = sul::solve_system(&grid, &mat, &pair, &Decimation::default(), &[Quantity::Rho]).unwrap();
        let eta = 1.5;
        prop_assert!(split.get(Quantity::Rho).unwrap().data.iter().all(|&r| r < eta));
    }
}
