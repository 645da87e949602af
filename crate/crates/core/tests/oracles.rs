//! Derived values checked against oracles computed here from first
//! principles, independently of the library's solvers.

use screening_core::distribution::{BreakthroughDistribution, Measure};
use screening_core::fixtures;
use screening_core::mechanism::{deadline_for_promise, make_deadline_mechanism, payoff, TimeGrid};
use screening_core::mixture::{mixture_value, MixtureOptions};
use screening_core::path::StepPath;
use screening_core::variational::{euler_residual, stieltjes_ibp, warm_up_identity, SupergradientProfile};
use screening_core::ExtReal;

fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let up = f(lo) < 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) < 0.0) == up {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Effort FOC for phi = sqrt, kappa = L^2: `w = 2L / phi'(phi^-1(u + L^2))`,
/// with `phi'(phi^-1(y)) = 1 / (2 y)`.
fn effort(w: f64, u: f64) -> f64 {
    bisect(1e-12, 10.0, |l| w - 4.0 * l * (u + l * l))
}

fn f1_by_grid(w: f64, u: f64) -> f64 {
    f1_by_grid_n(w, u, 400_000)
}

fn f1_by_grid_n(w: f64, u: f64, n: usize) -> f64 {
    (0..=n)
        .map(|i| {
            let l = 2.0 * i as f64 / n as f64;
            u + w * l - (u + l * l).powi(2)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

#[test]
fn default_instance_peaks() {
    let tech = fixtures::default_technology().unwrap();
    let u0 = bisect(1e-9, 10.0, |u| 1.0 / (2.0 * u) - 1.0);
    let u1 = bisect(1e-9, u0, |u| {
        let l = effort(1.0, u);
        1.0 / (2.0 * (u + l * l)) - 1.0
    });
    let l_star = effort(1.0, u1);
    assert!((tech.u0 - u0).abs() < 1e-9 && (u0 - 0.5).abs() < 1e-12);
    assert!((tech.u1 - u1).abs() < 1e-9 && (u1 - 0.25).abs() < 1e-12);
    assert!((l_star - 0.5).abs() < 1e-12);
    assert!((u0 - (u1 + l_star * l_star)).abs() < 1e-8);
    let lib_l = tech.effort_star(tech.u1).unwrap().unwrap();
    assert!((lib_l - 0.5).abs() < 1e-9, "{lib_l}");
    assert_eq!(tech.u_star, 0.0);
}

#[test]
fn f1_matches_grid_maximum() {
    for w in [1.0, 4.0] {
        let tech = if w == 1.0 { fixtures::default_technology() } else { fixtures::corner_technology() }.unwrap();
        for u in [0.0, 0.1, 0.25, 0.4, 0.7] {
            let oracle = f1_by_grid(w, u);
            assert!((tech.f1.eval(u) - oracle).abs() < 1e-8, "w={w} u={u}");
        }
        for u in [0.1, 0.3, 0.5, 0.9] {
            assert!((tech.f0.eval(u) - (u - u * u)).abs() < 1e-14);
        }
    }
}

#[test]
fn corner_instance() {
    let tech = fixtures::corner_technology().unwrap();
    // at u = 0 the effort already puts marginal utility below lambda
    let l = effort(4.0, 0.0);
    assert!(1.0 / (2.0 * l * l) <= 1.0);
    assert_eq!(tech.u1, 0.0);
    assert_eq!(tech.u_star, 0.0);
    assert!((tech.u0 - 0.5).abs() < 1e-12);
}

#[test]
fn u_star_by_scan() {
    for tech in [fixtures::default_technology().unwrap(), fixtures::local_max_technology().unwrap()] {
        let n = 20_000;
        let best = (0..=n)
            .map(|i| tech.u0 * i as f64 / n as f64)
            .max_by(|a, b| tech.gap(*a).total_cmp(&tech.gap(*b)))
            .unwrap();
        assert!((tech.u_star - best).abs() < 1e-4, "{} vs {best}", tech.u_star);
    }
}

#[test]
fn quadratic_pair_by_allocation_scan() {
    let pair = fixtures::quadratic_pair_mixture().unwrap();
    for u in [0.5, 1.0, 1.5, 2.0, 3.0, 4.0] {
        // 0.5 a + 0.5 b = u, scan a
        let n = 200_000;
        let oracle = (0..=n)
            .map(|i| {
                let a = 2.0 * u * i as f64 / n as f64;
                let b = 2.0 * u - a;
                -0.5 * (a - 1.0).powi(2) - 0.5 * (b - 3.0).powi(2)
            })
            .fold(f64::NEG_INFINITY, f64::max);
        let v = mixture_value(&pair, u, MixtureOptions::default()).unwrap().value.to_f64();
        assert!((v - oracle).abs() < 1e-8, "u={u}: {v} vs {oracle}");
        if u >= 1.0 {
            assert!((v + (u - 2.0).powi(2)).abs() < 1e-12);
        }
    }
}

#[test]
fn ibp_hand_case() {
    let nu = Measure::new(vec![(1.0, 1.0)], vec![]).unwrap();
    let (lhs, rhs) = stieltjes_ibp(&nu, 0.0, &StepPath::constant(1.0), 2.0);
    assert_eq!((lhs, rhs), (1.0, 1.0));
}

#[test]
fn euler_construct_and_check() {
    // [1 - G] phi0 + int phi1 dG = e^-t (e^t - 1) - (1 - e^-t) = 0
    let g = BreakthroughDistribution::exponential(1.0).unwrap();
    let grid = TimeGrid::new(10.0, 0.1, 1.0).unwrap();
    let prof = SupergradientProfile::new(|t: f64| t.exp_m1(), |_| -1.0, vec![]);
    for p in euler_residual(&prof, &g, &grid) {
        let oracle = (-p.t).exp() * p.t.exp_m1() - (1.0 - (-p.t).exp());
        assert!(oracle.abs() < 1e-12);
        assert!(p.residual.abs() < 1e-9, "t={} residual {}", p.t, p.residual);
        assert!((p.one_minus_g - (-p.t).exp()).abs() < 1e-12);
    }
    // E[tau] = 1 for the exponential with r = 1
    let v = warm_up_identity(&g, &TimeGrid::new(20.0, 0.05, 1.0).unwrap()).unwrap();
    assert!((v - 1.0).abs() < 1e-6, "{v}");
}

/// Trapezoid in tau and in t over `[0, 40]`.
fn deadline_payoff_oracle(deadline: f64, u0: f64, u1: f64, f0: impl Fn(f64) -> f64, f1: impl Fn(f64) -> f64) -> f64 {
    let h = 1e-4;
    let n = (40.0 / h) as usize;
    let flow = |t: f64| if t < deadline { u0 } else { 0.0 };
    let promise = |t: f64| if t < deadline { u0 * (1.0 - (-(deadline - t)).exp()) } else { 0.0 };
    let mut running = 0.0;
    let mut total = 0.0;
    let mut prev: Option<f64> = None;
    for i in 0..=n {
        let t = i as f64 * h;
        let flow_val = (-t).exp() * f0(flow(t));
        if let Some(p) = prev {
            running += 0.5 * h * (p + flow_val);
        }
        prev = Some(flow_val);
        let value = running + (-t).exp() * f1(promise(t).max(u1));
        let wgt = if i == 0 || i == n { 0.5 } else { 1.0 };
        total += wgt * h * (-t).exp() * value;
    }
    total
}

#[test]
fn deadline_payoff_by_quadrature() {
    let tech = fixtures::default_technology().unwrap();
    let grid = TimeGrid::new(20.0, 0.05, 1.0).unwrap();
    let g = BreakthroughDistribution::exponential(1.0).unwrap();
    // F1 on a fine promise grid, linearly interpolated
    let table: Vec<f64> = (0..=500).map(|i| f1_by_grid_n(1.0, 0.5 * i as f64 / 500.0, 40_000)).collect();
    let f1_interp = |u: f64| {
        let x = (u / 0.5 * 500.0).clamp(0.0, 500.0);
        let i = (x.floor() as usize).min(499);
        table[i] + (x - i as f64) * (table[i + 1] - table[i])
    };
    for v in [0.1, 0.3, 0.45] {
        let ExtReal::Finite(t) = deadline_for_promise(v, &tech, &grid).unwrap() else { panic!() };
        assert!((tech.u0 * (1.0 - (-t).exp()) - v).abs() < 1e-12);
        let m = make_deadline_mechanism(ExtReal::Finite(t), &tech, &grid);
        let got = payoff(&m, &tech, &g).unwrap();
        let oracle = deadline_payoff_oracle(t, tech.u0, tech.u1, |u| u - u * u, f1_interp);
        assert!((got - oracle).abs() < 1e-5, "v={v}: {got} vs {oracle}");
    }
}
