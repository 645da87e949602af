use proptest::prelude::*;

use screening_core::config::parse_config;
use screening_core::distribution::{BreakthroughDistribution, Measure, Segment};
use screening_core::export::{distribution_csv, mechanism_csv, parse_distribution_csv, parse_mechanism_csv};
use screening_core::fixtures;
use screening_core::mechanism::{
    deadline_for_promise, make_deadline_mechanism, no_delay_improve, payoff, Mechanism, PostPromise, TimeGrid,
};
use screening_core::mixture::{mixture_value, MixtureOptions};
use screening_core::path::{PromisePath, StepPath};
use screening_core::smoothing::{averaged_right_derivative, SmoothingParams};
use screening_core::variational::{euler_residual, stieltjes_ibp, SupergradientProfile};

fn path(lo: f64, hi: f64) -> impl Strategy<Value = StepPath> {
    (prop::collection::vec(0.05..5.0f64, 0..5), prop::collection::vec(lo..=hi, 6)).prop_map(|(gaps, vals)| {
        let mut breaks = vec![0.0];
        for g in gaps {
            breaks.push(breaks.last().unwrap() + g);
        }
        let values = vals[..breaks.len()].to_vec();
        StepPath::new(breaks, values).unwrap()
    })
}

fn measure() -> impl Strategy<Value = Measure> {
    (
        prop::collection::vec((0.0..4.0f64, 0.0..1.0f64), 0..4),
        prop::collection::vec((0.1..2.0f64, 0.0..1.0f64, 0.1..2.0f64), 0..3),
        any::<bool>(),
    )
        .prop_map(|(atoms, segs, open)| {
            let mut start = 0.0;
            let k = segs.len();
            let segments = segs
                .into_iter()
                .enumerate()
                .map(|(i, (len, coef, decay))| {
                    let end = if open && i + 1 == k { f64::INFINITY } else { start + len };
                    let s = Segment { start, end, coef, decay };
                    start = end + 0.25;
                    s
                })
                .collect();
            Measure::new(atoms, segments).unwrap()
        })
}

fn sample_times() -> Vec<f64> {
    (0..=60).map(|i| 0.1 * i as f64).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ibp_identity(nu in measure(), l in path(-1.0, 1.0), l0 in -1.0..1.0f64, t in 0.1..6.0f64) {
        let (lhs, rhs) = stieltjes_ibp(&nu, l0, &l, t);
        prop_assert!((lhs - rhs).abs() < 1e-9, "{lhs} vs {rhs}");
    }

    #[test]
    fn promise_within_flow_range(x in path(0.0, 1.0), r in 0.2..3.0f64) {
        let p = PromisePath::new(&x, r);
        for t in sample_times() {
            let v = p.at(t);
            prop_assert!(v >= x.inf() - 1e-12 && v <= x.sup() + 1e-12);
        }
    }

    #[test]
    fn promise_linear_and_monotone(x in path(0.0, 1.0), y in path(0.0, 1.0), a in 0.0..2.0f64, r in 0.2..3.0f64) {
        let combo = x.zip_with(&y, |u, v| a * u + v);
        let (px, py, pc) = (PromisePath::new(&x, r), PromisePath::new(&y, r), PromisePath::new(&combo, r));
        let upper = x.zip_with(&y, f64::max);
        let pu = PromisePath::new(&upper, r);
        for t in sample_times() {
            prop_assert!((pc.at(t) - (a * px.at(t) + py.at(t))).abs() < 1e-12);
            prop_assert!(pu.at(t) >= px.at(t).max(py.at(t)) - 1e-12);
        }
    }

    #[test]
    fn no_delay_never_hurts(x in path(0.0, 0.5), rate in 0.2..3.0f64, cont in any::<bool>()) {
        let tech = fixtures::default_technology().unwrap();
        let post = if cont { PostPromise::Continuation } else { PostPromise::Premium(StepPath::constant(0.05)) };
        let m = Mechanism::new(x, post, 1.0).unwrap();
        let g = BreakthroughDistribution::exponential(rate).unwrap();
        let before = payoff(&m, &tech, &g).unwrap();
        let after = payoff(&no_delay_improve(&m, &tech), &tech, &g).unwrap();
        prop_assert!(after >= before - 1e-12, "{after} < {before}");
    }

    #[test]
    fn deadline_delivers_promise(v in 0.0..0.4999f64, r in 0.2..3.0f64) {
        let tech = fixtures::default_technology().unwrap();
        let grid = TimeGrid::new(20.0, 0.05, r).unwrap();
        let t = deadline_for_promise(v, &tech, &grid).unwrap();
        let m = make_deadline_mechanism(t, &tech, &grid);
        prop_assert!((m.big_x0(0.0) - v).abs() < 1e-12);
    }

    #[test]
    fn euler_zero_for_any_exponential(rate in 0.2..3.0f64) {
        let g = BreakthroughDistribution::exponential(rate).unwrap();
        let prof = SupergradientProfile::new(move |t: f64| (rate * t).exp_m1(), |_| -1.0, vec![]);
        let grid = TimeGrid::new(5.0, 0.1, 1.0).unwrap();
        for p in euler_residual(&prof, &g, &grid) {
            prop_assert!(p.residual.abs() < 1e-9);
        }
    }

    #[test]
    fn mixture_beats_feasible_allocations(u in 0.0..4.0f64, share in 0.0..1.0f64) {
        let pair = fixtures::quadratic_pair_mixture().unwrap();
        let v = mixture_value(&pair, u, MixtureOptions::default()).unwrap().value.to_f64();
        // 0.5 a + 0.5 b = u
        let a = 2.0 * u * share;
        let b = 2.0 * u - a;
        let feasible = -0.5 * (a - 1.0).powi(2) - 0.5 * (b - 3.0).powi(2);
        prop_assert!(v >= feasible - 1e-12);
    }

    #[test]
    fn averaged_derivative_decreasing(u in 0.13..0.3f64, h in 1e-4..0.05f64) {
        let tech = fixtures::corner_technology().unwrap();
        let p = SmoothingParams::auto(&tech, 8).unwrap();
        let a = averaged_right_derivative(tech.f0.as_ref(), u, &p).unwrap();
        let b = averaged_right_derivative(tech.f0.as_ref(), u + h, &p).unwrap();
        prop_assert!(b < a);
    }

    #[test]
    fn distribution_csv_round_trip(cells in prop::collection::vec((0.05..2.0f64, 0.0..1.0f64, 0.0..1.0f64), 1..5), tail in 0.1..1.0f64, rate in 0.2..2.0f64) {
        let mut t = 0.0;
        let mut rows = Vec::new();
        let total: f64 = cells.iter().map(|c| c.1 + c.2).sum::<f64>() + tail;
        for (len, atom, mass) in &cells {
            rows.push((t, atom / total, mass / total / len));
            t += len;
        }
        rows.push((t, 0.0, tail / total * rate));
        let g = BreakthroughDistribution::from_rows(&rows).unwrap();
        let text = distribution_csv(&g);
        prop_assert_eq!(&text, &distribution_csv(&g));
        let back = parse_distribution_csv(&text).unwrap();
        prop_assert_eq!(distribution_csv(&back), text);
    }

    #[test]
    fn mechanism_csv_round_trip(x in path(0.0, 0.5), r in 0.2..3.0f64) {
        let m = Mechanism::new(x.clone(), PostPromise::Continuation, r).unwrap();
        let text = mechanism_csv(&m, x.breaks());
        let back = parse_mechanism_csv(&text, r, PostPromise::Continuation).unwrap();
        prop_assert_eq!(back.x0(), &x.simplified());
    }

    #[test]
    fn parsers_never_panic(s in "\\PC{0,200}") {
        let _ = parse_config(&s, None);
        let _ = parse_distribution_csv(&s);
        let _ = parse_mechanism_csv(&s, 1.0, PostPromise::Continuation);
    }

    #[test]
    fn csv_readers_never_panic_on_numeric_noise(rows in prop::collection::vec(("-?[0-9]{0,2}(\\.[0-9]{0,3})?", "-?[0-9]{0,2}(\\.[0-9]{0,3})?", "[0-9e.+-]{0,6}"), 0..6)) {
        let body: String = rows.iter().map(|(a, b, c)| format!("{a},{b},{c}\n")).collect();
        let _ = parse_distribution_csv(&format!("t,atom_mass,density\n{body}"));
        let _ = parse_mechanism_csv(&format!("t,x0,X0\n{body}"), 1.0, PostPromise::Continuation);
    }
}
