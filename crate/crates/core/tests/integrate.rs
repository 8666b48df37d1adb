use heterokink::integrate::{convergence_order, integrate, EventSpec, IntegratorConfig, Termination};
use heterokink::shoot::{unstable_seed, ShootConfig};
use heterokink::systems::{reverse, Model, ModelKind, ModelParams};

fn model(kind: ModelKind, a: f64, delta: f64) -> Model {
    Model::new(kind, ModelParams::new(a, delta).unwrap()).unwrap()
}

fn kink_state(x: f64) -> Vec<f64> {
    let t = (x / 2f64.sqrt()).tanh();
    let s = 1.0 - t * t;
    vec![-t, -s / 2f64.sqrt(), t * s]
}

#[test]
fn threshold_event_matches_bisection_of_dense_output() {
    let params = ModelParams::new(0.9, 0.05).unwrap();
    let m = Model::new(ModelKind::Cch, params).unwrap();
    let seed = unstable_seed(ModelKind::Cch, params, &ShootConfig::default()).unwrap();
    let tr = integrate(&m, &seed, (0.0, 600.0), &IntegratorConfig::default(), &[EventSpec::threshold(0, 1.5)]).unwrap();
    assert_eq!(tr.termination, Termination::EventHit);
    let hit = tr.hits(0).next().unwrap();
    assert!((hit.state[0].abs() - 1.5).abs() < 1e-8, "{}", hit.state[0]);

    // Oracle: plain bisection on the interpolant between the last two samples.
    let g = |x: f64| tr.eval(x).unwrap()[0].abs() - 1.5;
    let n = tr.samples.len();
    let (mut lo, mut hi) = (tr.samples[n - 2].0, tr.samples[n - 1].0);
    assert!(g(lo) < 0.0 && g(hi) >= -1e-12);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    assert!((hit.x - 0.5 * (lo + hi)).abs() < 1e-8, "{} vs {}", hit.x, lo);
}

#[test]
fn cch_arc_is_fifth_order() {
    let m = model(ModelKind::Cch, 1.0, 0.0);
    let p = convergence_order(&m, &kink_state(-3.0), (-3.0, 3.0), 16);
    assert!((4.5..=5.5).contains(&p), "{p}");
}

#[test]
fn hcch_arc_is_fifth_order() {
    let m = model(ModelKind::Hcch, 0.9, 0.01);
    let p = convergence_order(&m, &[0.5, -0.2, 0.1, 0.05, -0.02], (0.0, 2.0), 16);
    assert!((4.5..=5.5).contains(&p), "{p}");
}

#[test]
fn flow_is_reversible() {
    let cfg = IntegratorConfig::default();
    let cases = [
        (model(ModelKind::Cch, 0.9, 0.05), vec![0.3, -0.4, 0.2]),
        (model(ModelKind::Hcch, 0.8, 0.01), vec![0.4, -0.1, 0.2, 0.05, -0.1]),
    ];
    for (m, u0) in cases {
        let fwd = integrate(&m, &u0, (0.0, 3.0), &cfg, &[]).unwrap();
        let back = integrate(&m, &reverse(fwd.last()), (0.0, 3.0), &cfg, &[]).unwrap();
        let want = reverse(&u0);
        for (a, b) in back.last().iter().zip(want.iter()) {
            assert!((a - b).abs() < 1e-6, "{:?} vs {:?}", back.last(), want);
        }
    }
}

#[test]
fn event_locations_do_not_depend_on_initial_step() {
    let m = model(ModelKind::Cch, 1.0, 0.0);
    let events = [EventSpec::zero_crossing(0), EventSpec::threshold(0, 0.99)];
    let run = |h_init: f64| {
        let cfg = IntegratorConfig { h_init, ..Default::default() };
        integrate(&m, &kink_state(-3.7), (-3.7, 10.0), &cfg, &events).unwrap().events.iter().map(|e| e.x).collect::<Vec<_>>()
    };
    let base = run(1e-3);
    assert_eq!(base.len(), 2);
    for h in [1e-6, 1e-1, 0.5, 1.0] {
        let other = run(h);
        assert_eq!(other.len(), base.len(), "h_init = {h}");
        for (a, b) in base.iter().zip(&other) {
            assert!((a - b).abs() < 1e-8, "h_init = {h}: {a} vs {b}");
        }
    }
}

#[test]
fn shooting_events_do_not_depend_on_initial_step() {
    // Orbits leaving U+ amplify any early local error like exp(1.4 x), so a
    // first step of order one moves events at x ~ 12 by ~1e-7; steps up to
    // 0.1 resolve the seed and keep them fixed.
    let params = ModelParams::new(0.85, 0.05).unwrap();
    let m = Model::new(ModelKind::Cch, params).unwrap();
    let seed = unstable_seed(ModelKind::Cch, params, &ShootConfig::default()).unwrap();
    let events = [EventSpec::zero_crossing(0), EventSpec::odd_norm_min(), EventSpec::threshold(0, 1.5)];
    let run = |h_init: f64| {
        let cfg = IntegratorConfig { h_init, ..Default::default() };
        integrate(&m, &seed, (0.0, 600.0), &cfg, &events).unwrap().events.iter().map(|e| e.x).collect::<Vec<_>>()
    };
    let base = run(1e-3);
    assert!(base.len() >= 3);
    for h in [1e-6, 1e-4, 1e-2, 1e-1] {
        let other = run(h);
        assert_eq!(other.len(), base.len(), "h_init = {h}");
        for (a, b) in base.iter().zip(&other) {
            assert!((a - b).abs() < 1e-8, "h_init = {h}: {a} vs {b}");
        }
    }
}

#[test]
fn tighter_tolerances_never_increase_the_error() {
    let m = model(ModelKind::Cch, 1.0, 0.0);
    let want = kink_state(4.0);
    let mut last = f64::INFINITY;
    let (mut rtol, mut atol) = (1e-5, 1e-7);
    for _ in 0..10 {
        let cfg = IntegratorConfig { rtol, atol, ..Default::default() };
        let tr = integrate(&m, &kink_state(-4.0), (-4.0, 4.0), &cfg, &[]).unwrap();
        let err = tr.last().iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= last, "rtol {rtol}: {err} > {last}");
        last = err;
        rtol /= 2.0;
        atol /= 2.0;
    }
}
