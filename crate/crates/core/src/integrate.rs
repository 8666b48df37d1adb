//! Adaptive Dormand–Prince 5(4) integration with quartic dense output and
//! event location.
//!
//! Events are detected from sign changes of an event function across an
//! accepted step and then polished on the dense-output interpolant with
//! Brent's method, so their locations do not depend on the step sequence
//! beyond the interpolation error.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::systems::{Model, PhaseVector};

/// Any component above this magnitude aborts the integration.
pub const DIVERGENCE_BOUND: f64 = 1e6;

pub trait OdeSystem: Sync {
    fn dim(&self) -> usize;
    fn rhs(&self, x: f64, y: &[f64], dy: &mut [f64]);
}

impl OdeSystem for Model {
    fn dim(&self) -> usize {
        Model::dim(self)
    }

    #[inline]
    fn rhs(&self, _x: f64, y: &[f64], dy: &mut [f64]) {
        self.rhs_into(y, dy)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegrateError {
    #[error("integration span must satisfy x0 < x1, got ({0}, {1})")]
    InvalidSpan(f64, f64),
    #[error("initial state is not finite")]
    NonFiniteInitial,
    #[error("initial state has dimension {got}, system has {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid event specification: {0}")]
    InvalidEvent(String),
    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),
    #[error("trajectory diverged at x = {0}")]
    Diverged(f64),
    #[error("step budget exhausted at x = {0}")]
    StepBudget(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig { rtol: 1e-10, atol: 1e-12, h_init: 1e-3, h_max: 1.0, max_steps: 1_000_000 }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<(), IntegrateError> {
        let ok = self.rtol > 0.0 && self.atol > 0.0 && self.h_init > 0.0 && self.h_max > 0.0 && self.max_steps > 0;
        if ok {
            Ok(())
        } else {
            Err(IntegrateError::InvalidConfig(format!("{self:?}")))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum EventKind {
    /// Component `index` (0-based) changes sign.
    ComponentCrossesZero(usize),
    /// `|U[index]|` reaches `threshold`.
    AbsComponentExceeds(usize, f64),
    /// Local minimum of the norm of the odd-indexed (1-based) components.
    OddNormLocalMin,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Any,
    Rising,
    Falling,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventSpec {
    pub kind: EventKind,
    pub direction: Direction,
    pub terminal: bool,
}

impl EventSpec {
    pub fn zero_crossing(index: usize) -> Self {
        EventSpec { kind: EventKind::ComponentCrossesZero(index), direction: Direction::Any, terminal: false }
    }

    pub fn threshold(index: usize, threshold: f64) -> Self {
        EventSpec {
            kind: EventKind::AbsComponentExceeds(index, threshold),
            direction: Direction::Rising,
            terminal: true,
        }
    }

    pub fn odd_norm_min() -> Self {
        EventSpec { kind: EventKind::OddNormLocalMin, direction: Direction::Rising, terminal: false }
    }

    fn validate(&self, dim: usize) -> Result<(), IntegrateError> {
        match self.kind {
            EventKind::ComponentCrossesZero(i) if i >= dim => {
                Err(IntegrateError::InvalidEvent(format!("index {i} out of range for dimension {dim}")))
            }
            EventKind::AbsComponentExceeds(i, _) if i >= dim => {
                Err(IntegrateError::InvalidEvent(format!("index {i} out of range for dimension {dim}")))
            }
            EventKind::AbsComponentExceeds(_, t) if !(t > 0.0) => {
                Err(IntegrateError::InvalidEvent(format!("threshold must be positive, got {t}")))
            }
            _ => Ok(()),
        }
    }

    fn value(&self, y: &[f64], dy: &[f64]) -> f64 {
        match self.kind {
            EventKind::ComponentCrossesZero(i) => y[i],
            EventKind::AbsComponentExceeds(i, t) => y[i].abs() - t,
            // d/dx of half the squared odd norm.
            EventKind::OddNormLocalMin => y.iter().zip(dy).step_by(2).map(|(u, du)| u * du).sum(),
        }
    }

    fn accepts(&self, g0: f64, g1: f64) -> bool {
        let rising = g0 < 0.0 && g1 >= 0.0;
        let falling = g0 > 0.0 && g1 <= 0.0;
        match self.direction {
            Direction::Any => rising || falling,
            Direction::Rising => rising,
            Direction::Falling => falling,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventHit {
    pub x: f64,
    pub state: PhaseVector,
    /// Index into the event list passed to [`integrate`].
    pub event: usize,
    /// True for a sign change from negative to positive.
    pub rising: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    EventHit,
    SpanEnd,
    StepBudget,
    Diverged,
}

/// Dense-output coefficients of one accepted step.
#[derive(Clone, Debug)]
struct Segment {
    x0: f64,
    h: f64,
    /// Five coefficient vectors of length `dim`, concatenated.
    rcont: Vec<f64>,
}

impl Segment {
    fn eval_into(&self, x: f64, out: &mut [f64]) {
        let n = out.len();
        let theta = (x - self.x0) / self.h;
        let theta1 = 1.0 - theta;
        let r = &self.rcont;
        for i in 0..n {
            out[i] = r[i]
                + theta * (r[n + i] + theta1 * (r[2 * n + i] + theta * (r[3 * n + i] + theta1 * r[4 * n + i])));
        }
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub samples: Vec<(f64, PhaseVector)>,
    pub events: Vec<EventHit>,
    pub termination: Termination,
    segments: Vec<Segment>,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.samples.first().map(|s| s.1.len()).unwrap_or(0)
    }

    pub fn x_start(&self) -> f64 {
        self.samples[0].0
    }

    pub fn x_end(&self) -> f64 {
        self.samples.last().unwrap().0
    }

    pub fn last(&self) -> &PhaseVector {
        &self.samples.last().unwrap().1
    }

    /// Dense-output evaluation; `None` outside the integrated range.
    pub fn eval(&self, x: f64) -> Option<PhaseVector> {
        if self.segments.is_empty() || x < self.x_start() || x > self.x_end() {
            return None;
        }
        let idx = self.segments.partition_point(|s| s.x0 + s.h < x).min(self.segments.len() - 1);
        let mut out = vec![0.0; self.dim()];
        self.segments[idx].eval_into(x, &mut out);
        Some(PhaseVector(out))
    }

    /// Events raised by the event with the given index, in order.
    pub fn hits(&self, event: usize) -> impl Iterator<Item = &EventHit> {
        self.events.iter().filter(move |e| e.event == event)
    }

    pub fn require_complete(&self) -> Result<(), IntegrateError> {
        match self.termination {
            Termination::Diverged => Err(IntegrateError::Diverged(self.x_end())),
            Termination::StepBudget => Err(IntegrateError::StepBudget(self.x_end())),
            _ => Ok(()),
        }
    }
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Stage workspace for one Dormand–Prince step.
struct Stages {
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    y_new: Vec<f64>,
    err: Vec<f64>,
}

impl Stages {
    fn new(n: usize) -> Self {
        Stages {
            k: std::array::from_fn(|_| vec![0.0; n]),
            tmp: vec![0.0; n],
            y_new: vec![0.0; n],
            err: vec![0.0; n],
        }
    }

    /// Assumes `k[0]` already holds `f(x, y)`. Fills `y_new`, `err` and
    /// `k[6] = f(x + h, y_new)`.
    fn step<S: OdeSystem + ?Sized>(&mut self, sys: &S, x: f64, y: &[f64], h: f64) {
        let n = y.len();
        let [k1, k2, k3, k4, k5, k6, k7] = &mut self.k;
        let tmp = &mut self.tmp;
        for i in 0..n {
            tmp[i] = y[i] + h * A21 * k1[i];
        }
        sys.rhs(x + C2 * h, tmp, k2);
        for i in 0..n {
            tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        sys.rhs(x + C3 * h, tmp, k3);
        for i in 0..n {
            tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        sys.rhs(x + C4 * h, tmp, k4);
        for i in 0..n {
            tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        sys.rhs(x + C5 * h, tmp, k5);
        for i in 0..n {
            tmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        sys.rhs(x + h, tmp, k6);
        for i in 0..n {
            self.y_new[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        sys.rhs(x + h, &self.y_new, k7);
        for i in 0..n {
            self.err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
    }

    fn dense(&self, x: f64, y: &[f64], h: f64) -> Segment {
        let n = y.len();
        let [k1, _, k3, k4, k5, k6, k7] = &self.k;
        let mut rcont = vec![0.0; 5 * n];
        for i in 0..n {
            let ydiff = self.y_new[i] - y[i];
            let bspl = h * k1[i] - ydiff;
            rcont[i] = y[i];
            rcont[n + i] = ydiff;
            rcont[2 * n + i] = bspl;
            rcont[3 * n + i] = ydiff - h * k7[i] - bspl;
            rcont[4 * n + i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
        }
        Segment { x0: x, h, rcont }
    }
}

/// Integrates `y' = f(x, y)` from `x_span.0` towards `x_span.1`.
///
/// Returns the trajectory even when integration stops early; the reason is
/// recorded in [`Trajectory::termination`].
pub fn integrate<S: OdeSystem + ?Sized>(
    sys: &S,
    y0: &[f64],
    x_span: (f64, f64),
    config: &IntegratorConfig,
    events: &[EventSpec],
) -> Result<Trajectory, IntegrateError> {
    let (x0, x1) = x_span;
    if !(x0 < x1) || !x0.is_finite() || !x1.is_finite() {
        return Err(IntegrateError::InvalidSpan(x0, x1));
    }
    let n = sys.dim();
    if y0.len() != n {
        return Err(IntegrateError::DimensionMismatch { expected: n, got: y0.len() });
    }
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(IntegrateError::NonFiniteInitial);
    }
    config.validate()?;
    for e in events {
        e.validate(n)?;
    }

    let mut st = Stages::new(n);
    let mut x = x0;
    let mut y = y0.to_vec();
    sys.rhs(x, &y, &mut st.k[0]);
    let mut g_prev: Vec<f64> = events.iter().map(|e| e.value(&y, &st.k[0])).collect();

    let mut traj = Trajectory {
        samples: vec![(x, PhaseVector(y.clone()))],
        events: Vec::new(),
        termination: Termination::SpanEnd,
        segments: Vec::new(),
    };

    let mut h = config.h_init.min(config.h_max).min(x1 - x0);
    let mut steps = 0usize;
    let mut prev_err_ratio: f64 = 1e-4;
    let mut dy_buf = vec![0.0; n];
    let mut y_buf = vec![0.0; n];

    loop {
        if steps >= config.max_steps {
            traj.termination = Termination::StepBudget;
            break;
        }
        let last = x + h >= x1;
        if last {
            h = x1 - x;
        }
        st.step(sys, x, &y, h);
        steps += 1;

        let mut err_sq = 0.0;
        let mut finite = true;
        for i in 0..n {
            let sc = config.atol + config.rtol * y[i].abs().max(st.y_new[i].abs());
            let e = st.err[i] / sc;
            err_sq += e * e;
            finite &= st.y_new[i].is_finite();
        }
        let err = if finite { (err_sq / n as f64).sqrt() } else { f64::INFINITY };

        if err > 1.0 {
            let fac = if err.is_finite() { (0.9 * err.powf(-0.2)).max(0.2) } else { 0.1 };
            h *= fac;
            if h < 1e-14 * x.abs().max(1.0) {
                traj.termination = Termination::Diverged;
                break;
            }
            continue;
        }

        let seg = st.dense(x, &y, h);
        let x_new = if last { x1 } else { x + h };

        // Locate the earliest terminal event; record non-terminal ones in order.
        let g_new: Vec<f64> = events.iter().map(|e| e.value(&st.y_new, &st.k[6])).collect();
        let mut found: Vec<(f64, usize, bool)> = Vec::new();
        for (idx, spec) in events.iter().enumerate() {
            let (ga, gb) = (g_prev[idx], g_new[idx]);
            if !spec.accepts(ga, gb) {
                continue;
            }
            let xe = locate_event(sys, spec, &seg, x, x_new, ga, gb, &mut y_buf, &mut dy_buf);
            found.push((xe, idx, ga < 0.0));
        }
        found.sort_by(|a, b| a.0.total_cmp(&b.0));
        let stop_at = found.iter().find(|(_, idx, _)| events[*idx].terminal).map(|f| f.0);
        for &(xe, idx, rising) in &found {
            if stop_at.is_some_and(|xs| xe > xs) {
                continue;
            }
            seg.eval_into(xe, &mut y_buf);
            traj.events.push(EventHit { x: xe, state: PhaseVector(y_buf.clone()), event: idx, rising });
        }

        if let Some(xs) = stop_at {
            seg.eval_into(xs, &mut y_buf);
            traj.segments.push(seg);
            traj.samples.push((xs, PhaseVector(y_buf.clone())));
            traj.termination = Termination::EventHit;
            break;
        }

        traj.segments.push(seg);
        x = x_new;
        y.copy_from_slice(&st.y_new);
        st.k[0] = st.k[6].clone();
        g_prev = g_new;
        traj.samples.push((x, PhaseVector(y.clone())));

        if y.iter().any(|v| v.abs() > DIVERGENCE_BOUND) {
            traj.termination = Termination::Diverged;
            break;
        }
        if last {
            traj.termination = Termination::SpanEnd;
            break;
        }

        // PI step-size control.
        let err_c = err.max(1e-10);
        let fac = 0.9 * err_c.powf(-0.7 / 5.0) * prev_err_ratio.powf(0.4 / 5.0);
        prev_err_ratio = err_c;
        h = (h * fac.clamp(0.2, 10.0)).min(config.h_max);
    }
    Ok(traj)
}

#[allow(clippy::too_many_arguments)]
fn locate_event<S: OdeSystem + ?Sized>(
    sys: &S,
    spec: &EventSpec,
    seg: &Segment,
    xa: f64,
    xb: f64,
    ga: f64,
    gb: f64,
    y_buf: &mut [f64],
    dy_buf: &mut [f64],
) -> f64 {
    if gb == 0.0 {
        return xb;
    }
    let mut g = |x: f64| {
        seg.eval_into(x, y_buf);
        sys.rhs(x, y_buf, dy_buf);
        spec.value(y_buf, dy_buf)
    };
    crate::rootfind::brent(&mut g, xa, xb, ga, gb, 1e-15 * xb.abs().max(1.0), 1e-13)
}

/// Fixed-step fifth-order integration; returns the final state.
pub fn integrate_fixed<S: OdeSystem + ?Sized>(sys: &S, y0: &[f64], x_span: (f64, f64), n_steps: usize) -> Vec<f64> {
    let n = sys.dim();
    let mut st = Stages::new(n);
    let h = (x_span.1 - x_span.0) / n_steps as f64;
    let mut y = y0.to_vec();
    let mut x = x_span.0;
    sys.rhs(x, &y, &mut st.k[0]);
    for _ in 0..n_steps {
        st.step(sys, x, &y, h);
        y.copy_from_slice(&st.y_new);
        st.k[0] = st.k[6].clone();
        x += h;
    }
    y
}

/// Empirical order from fixed-step runs with `n`, `2n` and `4n` steps:
/// `log2(|y_h - y_{h/2}| / |y_{h/2} - y_{h/4}|)`.
pub fn convergence_order<S: OdeSystem + ?Sized>(sys: &S, y0: &[f64], x_span: (f64, f64), n_steps: usize) -> f64 {
    let y1 = integrate_fixed(sys, y0, x_span, n_steps);
    let y2 = integrate_fixed(sys, y0, x_span, 2 * n_steps);
    let y4 = integrate_fixed(sys, y0, x_span, 4 * n_steps);
    let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
    (d(&y1, &y2) / d(&y2, &y4)).log2()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{ModelKind, ModelParams};
    use std::f64::consts::SQRT_2;

    struct Linear(f64);
    impl OdeSystem for Linear {
        fn dim(&self) -> usize {
            1
        }
        fn rhs(&self, _x: f64, y: &[f64], dy: &mut [f64]) {
            dy[0] = self.0 * y[0];
        }
    }

    fn kink_state(x: f64) -> Vec<f64> {
        let t = (x / SQRT_2).tanh();
        let s = 1.0 - t * t;
        vec![-t, -s / SQRT_2, t * s]
    }

    #[test]
    fn linear_decay() {
        let tr = integrate(&Linear(-1.0), &[1.0], (0.0, 1.0), &IntegratorConfig::default(), &[]).unwrap();
        assert_eq!(tr.termination, Termination::SpanEnd);
        assert!((tr.last()[0] - (-1.0f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn follows_exact_kink() {
        let m = Model::new(ModelKind::Cch, ModelParams::new(1.0, 0.0).unwrap()).unwrap();
        let tr = integrate(&m, &kink_state(-10.0), (-10.0, 10.0), &IntegratorConfig::default(), &[]).unwrap();
        let want = kink_state(10.0);
        assert!((tr.last()[0] - want[0]).abs() < 1e-4, "{} vs {}", tr.last()[0], want[0]);
    }

    #[test]
    fn dense_output_matches_samples() {
        let m = Model::new(ModelKind::Cch, ModelParams::new(1.0, 0.0).unwrap()).unwrap();
        let tr = integrate(&m, &kink_state(-5.0), (-5.0, 5.0), &IntegratorConfig::default(), &[]).unwrap();
        for x in [-4.3, -1.0, 0.0, 2.2, 4.9] {
            let got = tr.eval(x).unwrap();
            let want = kink_state(x);
            for i in 0..3 {
                assert!((got[i] - want[i]).abs() < 1e-8, "x={x} i={i}");
            }
        }
        assert!(tr.eval(5.1).is_none());
    }

    #[test]
    fn zero_crossing_event() {
        let m = Model::new(ModelKind::Cch, ModelParams::new(1.0, 0.0).unwrap()).unwrap();
        let tr = integrate(
            &m,
            &kink_state(-5.0),
            (-5.0, 5.0),
            &IntegratorConfig::default(),
            &[EventSpec::zero_crossing(0)],
        )
        .unwrap();
        let hits: Vec<_> = tr.hits(0).collect();
        assert_eq!(hits.len(), 1);
        assert!(hits[0].x.abs() < 1e-9);
        assert!(!hits[0].rising);
    }

    #[test]
    fn rejects_bad_input() {
        let cfg = IntegratorConfig::default();
        assert!(matches!(integrate(&Linear(1.0), &[1.0], (1.0, 0.0), &cfg, &[]), Err(IntegrateError::InvalidSpan(..))));
        assert!(matches!(integrate(&Linear(1.0), &[f64::NAN], (0.0, 1.0), &cfg, &[]), Err(IntegrateError::NonFiniteInitial)));
        assert!(matches!(
            integrate(&Linear(1.0), &[1.0], (0.0, 1.0), &cfg, &[EventSpec::threshold(3, 1.0)]),
            Err(IntegrateError::InvalidEvent(_))
        ));
        assert!(matches!(
            integrate(&Linear(1.0), &[1.0], (0.0, 1.0), &cfg, &[EventSpec::threshold(0, -1.0)]),
            Err(IntegrateError::InvalidEvent(_))
        ));
    }

    #[test]
    fn divergence_guard() {
        let tr = integrate(&Linear(5.0), &[1.0], (0.0, 100.0), &IntegratorConfig::default(), &[]).unwrap();
        assert_eq!(tr.termination, Termination::Diverged);
        assert!(tr.require_complete().is_err());
    }

    #[test]
    fn step_budget() {
        let cfg = IntegratorConfig { max_steps: 5, ..Default::default() };
        let tr = integrate(&Linear(-1.0), &[1.0], (0.0, 100.0), &cfg, &[]).unwrap();
        assert_eq!(tr.termination, Termination::StepBudget);
    }

    #[test]
    fn linear_order() {
        let p = convergence_order(&Linear(-1.0), &[1.0], (0.0, 1.0), 8);
        assert!((4.5..=5.5).contains(&p), "{p}");
    }
}
