//! Shooting along the unstable manifold of `U+`.
//!
//! A trajectory leaving `U+` that meets the symmetric section
//! `{U1 = U3 (= U5) = 0}` extends, by reversibility, to a heteroclinic orbit
//! ending at `U-`. For CCH a single parameter `A` is tuned; the signed
//! detector `U3` at the `n`-th zero of `U1` changes sign across a root and
//! is bracketed and refined. A root at crossing `n` is a `het_{n-1}` orbit
//! with `2n - 1` zeros in total.
//!
//! At larger `delta` and small `A` some humps no longer reach `U1 = 0`, so
//! the crossing count undercounts `k` there; ordering roots by `A` is the
//! more robust label in that regime.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrate::{integrate, EventSpec, IntegrateError, IntegratorConfig, Termination};
use crate::rootfind::try_brent;
use crate::systems::{
    equilibrium_analysis, odd_norm, EquilibriumSign, Model, ModelKind, ModelParams, PhaseVector, Stability,
    SystemError,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShootError {
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
    #[error("no unstable direction at U+")]
    NoUnstableDirection,
    #[error("trajectory has {got} zero crossings of U1, {needed} needed")]
    NotEnoughCrossings { needed: usize, got: usize },
    #[error("invalid shooting configuration: {0}")]
    InvalidConfig(String),
    #[error("branch lost near delta = {delta} after {} accepted points", accepted.len())]
    BranchLost { delta: f64, accepted: Vec<BranchPoint> },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShootConfig {
    pub eps_offset: f64,
    pub threshold: f64,
    pub a_min: f64,
    pub a_max: f64,
    pub a_step: f64,
    /// Grid cells whose distance falls below this are resampled at `a_step / 10`.
    pub refine_below: f64,
    pub bisect_tol: f64,
    /// Accept a refined root when the distance function is below this.
    pub accept_tol: f64,
    /// Seed angle on the two-dimensional HCCH unstable manifold.
    pub angle: Option<f64>,
    /// Length of each shot.
    pub x_max: f64,
    pub integrator: IntegratorConfig,
}

impl Default for ShootConfig {
    fn default() -> Self {
        ShootConfig {
            eps_offset: 1e-6,
            threshold: 1.5,
            a_min: 0.55,
            a_max: 0.9999,
            a_step: 1e-3,
            refine_below: 0.05,
            bisect_tol: 1e-12,
            accept_tol: 1e-8,
            angle: None,
            x_max: 600.0,
            integrator: IntegratorConfig::default(),
        }
    }
}

impl ShootConfig {
    pub fn validate(&self) -> Result<(), ShootError> {
        let bad = |m: &str| Err(ShootError::InvalidConfig(m.to_string()));
        if !(self.eps_offset > 0.0 && self.eps_offset < 1e-2) {
            return bad("eps_offset must lie in (0, 1e-2)");
        }
        if !(self.threshold > 1.0) {
            return bad("threshold must exceed 1");
        }
        if !(self.a_min > 0.0 && self.a_min < self.a_max && self.a_step > 0.0) {
            return bad("A grid must satisfy 0 < a_min < a_max and a_step > 0");
        }
        if !(self.bisect_tol > 0.0 && self.accept_tol > 0.0 && self.x_max > 0.0) {
            return bad("tolerances and x_max must be positive");
        }
        self.integrator.validate()?;
        Ok(())
    }
}

/// `U+ - eps v` along the unit unstable eigenvector with `v1 > 0` when the
/// unstable manifold is one-dimensional; otherwise
/// `U+ + eps (cos phi v1 + sin phi v2)` on the orthonormalised unstable plane.
pub fn unstable_seed(kind: ModelKind, params: ModelParams, config: &ShootConfig) -> Result<PhaseVector, ShootError> {
    let info = equilibrium_analysis(kind, params, EquilibriumSign::Plus)?;
    let basis = info.subspace(Stability::Unstable, false);
    let mut seed = info.point.clone();
    let eps = config.eps_offset;
    match basis.ncols() {
        0 => return Err(ShootError::NoUnstableDirection),
        1 => {
            let s = if basis[(0, 0)] >= 0.0 { -eps } else { eps };
            for i in 0..seed.len() {
                seed.0[i] += s * basis[(i, 0)];
            }
        }
        _ => {
            let phi = config.angle.unwrap_or(0.0);
            let (c, s) = (phi.cos(), phi.sin());
            for i in 0..seed.len() {
                seed.0[i] += eps * (c * basis[(i, 0)] + s * basis[(i, 1)]);
            }
        }
    }
    Ok(seed)
}

/// One integration from the seed with the data needed for the detector and
/// the distance function.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Shot {
    pub a: f64,
    /// Zeros of `U1`, in order.
    pub crossings: Vec<(f64, PhaseVector)>,
    /// Minimum of the odd-component norm over local minima and the endpoint.
    pub d_min: f64,
    pub d_min_x: f64,
    /// The trajectory diverged before any local minimum was seen.
    pub diverged_early: bool,
    pub termination: Termination,
}

impl Shot {
    /// `U3` at the `n`-th zero of `U1` (1-based).
    pub fn detector(&self, n: usize) -> Result<f64, ShootError> {
        self.crossing(n).map(|c| c.1[2])
    }

    /// Norm of the odd components above `U1` at the `n`-th zero of `U1`.
    pub fn detector_norm(&self, n: usize) -> Result<f64, ShootError> {
        self.crossing(n).map(|c| c.1.iter().skip(2).step_by(2).map(|v| v * v).sum::<f64>().sqrt())
    }

    pub fn crossing(&self, n: usize) -> Result<&(f64, PhaseVector), ShootError> {
        if n == 0 || n > self.crossings.len() {
            return Err(ShootError::NotEnoughCrossings { needed: n, got: self.crossings.len() });
        }
        Ok(&self.crossings[n - 1])
    }
}

pub fn shoot(kind: ModelKind, params: ModelParams, config: &ShootConfig) -> Result<Shot, ShootError> {
    let model = Model::new(kind, params)?;
    let seed = unstable_seed(kind, params, config)?;
    let events = [EventSpec::threshold(0, config.threshold), EventSpec::zero_crossing(0), EventSpec::odd_norm_min()];
    let tr = integrate(&model, &seed, (0.0, config.x_max), &config.integrator, &events)?;
    let crossings: Vec<(f64, PhaseVector)> = tr.hits(1).map(|e| (e.x, e.state.clone())).collect();
    let mut d_min = odd_norm(tr.last());
    let mut d_min_x = tr.x_end();
    let mut any_min = false;
    for e in tr.hits(2) {
        any_min = true;
        let d = odd_norm(&e.state);
        if d < d_min {
            d_min = d;
            d_min_x = e.x;
        }
    }
    Ok(Shot {
        a: params.a,
        crossings,
        d_min,
        d_min_x,
        diverged_early: tr.termination == Termination::Diverged && !any_min,
        termination: tr.termination,
    })
}

/// `d_A`: minimum over the shot of `sqrt(sum of odd-indexed U_i^2)`.
pub fn distance_function(kind: ModelKind, params: ModelParams, config: &ShootConfig) -> Result<f64, ShootError> {
    shoot(kind, params, config).map(|s| s.d_min)
}

pub fn signed_detector(
    kind: ModelKind,
    params: ModelParams,
    config: &ShootConfig,
    crossing_index: usize,
) -> Result<f64, ShootError> {
    shoot(kind, params, config)?.detector(crossing_index)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchPoint {
    pub kind: ModelKind,
    pub k: u32,
    pub a: f64,
    pub delta: f64,
    /// Gaps between consecutive zeros of `U1` on the full reflected orbit
    /// (`2k` entries, symmetric).
    pub root_distances: Vec<f64>,
    pub d_min: f64,
    pub symmetric_point: (f64, PhaseVector),
    /// Seed angle, for HCCH points.
    pub angle: Option<f64>,
}

impl BranchPoint {
    fn from_shot(kind: ModelKind, delta: f64, shot: &Shot, n: usize, angle: Option<f64>) -> Result<Self, ShootError> {
        let sym = shot.crossing(n)?.clone();
        let xs: Vec<f64> = shot.crossings[..n].iter().map(|c| c.0).collect();
        let half: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        let mut root_distances = half.clone();
        root_distances.extend(half.iter().rev());
        Ok(BranchPoint {
            kind,
            k: (n - 1) as u32,
            a: shot.a,
            delta,
            root_distances,
            d_min: shot.d_min,
            symmetric_point: sym,
            angle,
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DistanceProfile {
    pub a_values: Vec<f64>,
    pub d_values: Vec<f64>,
    /// `(a_lo, a_hi, crossing index)` of every detector sign change.
    pub zero_candidates: Vec<(f64, f64, usize)>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScanResult {
    pub profile: DistanceProfile,
    pub points: Vec<BranchPoint>,
    /// Refined roots whose distance stayed above `accept_tol`.
    pub rejected: Vec<BranchPoint>,
}

fn shots_on(kind: ModelKind, delta: f64, config: &ShootConfig, grid: &[f64]) -> Vec<Option<Shot>> {
    grid.par_iter()
        .map(|&a| ModelParams::new(a, delta).ok().and_then(|p| shoot(kind, p, config).ok()))
        .collect()
}

fn refine_root(
    kind: ModelKind,
    delta: f64,
    config: &ShootConfig,
    n: usize,
    (a_lo, f_lo): (f64, f64),
    (a_hi, f_hi): (f64, f64),
) -> Result<Shot, ShootError> {
    let mut det = |a: f64| -> Result<f64, ShootError> { signed_detector(kind, ModelParams::new(a, delta)?, config, n) };
    let (a, _) = try_brent(&mut det, a_lo, a_hi, f_lo, f_hi, config.bisect_tol, 0.0)?;
    shoot(kind, ModelParams::new(a, delta)?, config)
}

/// Scans the `A` grid of `config`, brackets detector sign changes for every
/// crossing index and refines them. CCH only; HCCH uses [`scan_hcch`].
pub fn scan_and_refine(kind: ModelKind, delta: f64, config: &ShootConfig) -> Result<ScanResult, ShootError> {
    config.validate()?;
    if kind == ModelKind::Hcch {
        return scan_hcch(delta, config);
    }
    let n_grid = ((config.a_max - config.a_min) / config.a_step).round() as usize;
    let mut grid: Vec<f64> =
        (0..=n_grid).map(|i| (config.a_min + i as f64 * config.a_step).min(config.a_max)).collect();
    grid.dedup();
    let mut shots = shots_on(kind, delta, config, &grid);

    // Resample cells next to small distances.
    let mut extra = Vec::new();
    for i in 0..grid.len().saturating_sub(1) {
        let small = |s: &Option<Shot>| s.as_ref().is_some_and(|s| s.d_min < config.refine_below);
        if small(&shots[i]) || small(&shots[i + 1]) {
            let h = (grid[i + 1] - grid[i]) / 10.0;
            extra.extend((1..10).map(|j| grid[i] + j as f64 * h));
        }
    }
    if !extra.is_empty() {
        let extra_shots = shots_on(kind, delta, config, &extra);
        let mut merged: Vec<(f64, Option<Shot>)> = grid.into_iter().zip(shots).chain(extra.into_iter().zip(extra_shots)).collect();
        merged.sort_by(|a, b| a.0.total_cmp(&b.0));
        (grid, shots) = merged.into_iter().unzip();
    }

    let mut candidates = Vec::new();
    for i in 0..grid.len().saturating_sub(1) {
        let (Some(s0), Some(s1)) = (&shots[i], &shots[i + 1]) else { continue };
        let n_max = s0.crossings.len().min(s1.crossings.len());
        for n in 1..=n_max {
            let (f0, f1) = (s0.detector(n)?, s1.detector(n)?);
            if f0 * f1 <= 0.0 {
                candidates.push((grid[i], grid[i + 1], n, f0, f1));
            }
        }
    }

    let refined: Vec<Option<(usize, Shot)>> = candidates
        .par_iter()
        .map(|&(a0, a1, n, f0, f1)| refine_root(kind, delta, config, n, (a0, f0), (a1, f1)).ok().map(|s| (n, s)))
        .collect();

    let mut points = Vec::new();
    let mut rejected = Vec::new();
    for (n, shot) in refined.into_iter().flatten() {
        let Ok(bp) = BranchPoint::from_shot(kind, delta, &shot, n, None) else { continue };
        if shot.d_min < config.accept_tol {
            points.push(bp);
        } else {
            rejected.push(bp);
        }
    }
    let by_a = |a: &BranchPoint, b: &BranchPoint| b.a.total_cmp(&a.a);
    points.sort_by(by_a);
    rejected.sort_by(by_a);

    let profile = DistanceProfile {
        d_values: shots.iter().map(|s| s.as_ref().map_or(f64::NAN, |s| s.d_min)).collect(),
        a_values: grid,
        zero_candidates: candidates.iter().map(|c| (c.0, c.1, c.2)).collect(),
    };
    Ok(ScanResult { profile, points, rejected })
}

/// Derivative-free simplex minimisation (Nelder–Mead) in two variables.
pub fn nelder_mead<F: FnMut([f64; 2]) -> f64>(
    f: &mut F,
    start: [f64; 2],
    scale: [f64; 2],
    ftol: f64,
    max_evals: usize,
) -> ([f64; 2], f64) {
    let mut simplex = [start, [start[0] + scale[0], start[1]], [start[0], start[1] + scale[1]]];
    let mut vals = simplex.map(&mut *f);
    let mut evals = 3;
    while evals < max_evals {
        let mut idx = [0, 1, 2];
        idx.sort_by(|&i, &j| vals[i].total_cmp(&vals[j]));
        simplex = idx.map(|i| simplex[i]);
        vals = idx.map(|i| vals[i]);
        if vals[0] <= ftol || (vals[2] - vals[0]).abs() <= 1e-15 * vals[0].abs() + 1e-300 {
            break;
        }
        let centroid = [(simplex[0][0] + simplex[1][0]) / 2.0, (simplex[0][1] + simplex[1][1]) / 2.0];
        let along = |t: f64| [centroid[0] + t * (simplex[2][0] - centroid[0]), centroid[1] + t * (simplex[2][1] - centroid[1])];
        let xr = along(-1.0);
        let fr = f(xr);
        evals += 1;
        if fr < vals[0] {
            let xe = along(-2.0);
            let fe = f(xe);
            evals += 1;
            (simplex[2], vals[2]) = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < vals[1] {
            (simplex[2], vals[2]) = (xr, fr);
        } else {
            let xc = if fr < vals[2] { along(-0.5) } else { along(0.5) };
            let fc = f(xc);
            evals += 1;
            if fc < vals[2].min(fr) {
                (simplex[2], vals[2]) = (xc, fc);
            } else {
                for i in 1..3 {
                    simplex[i] = [(simplex[0][0] + simplex[i][0]) / 2.0, (simplex[0][1] + simplex[i][1]) / 2.0];
                    vals[i] = f(simplex[i]);
                    evals += 1;
                }
            }
        }
    }
    let best = (0..3).min_by(|&i, &j| vals[i].total_cmp(&vals[j])).unwrap();
    (simplex[best], vals[best])
}

/// HCCH: coarse `(A, phi)` grid on the detector norm at every crossing index,
/// then Nelder–Mead with restarts from the best cells.
pub fn scan_hcch(delta: f64, config: &ShootConfig) -> Result<ScanResult, ShootError> {
    const N_PHI: usize = 24;
    const HCCH_ACCEPT: f64 = 1e-7;
    let kind = ModelKind::Hcch;
    let n_grid = ((config.a_max - config.a_min) / config.a_step).round() as usize;
    let cells: Vec<(f64, f64)> = (0..=n_grid)
        .flat_map(|i| {
            let a = (config.a_min + i as f64 * config.a_step).min(config.a_max);
            (0..N_PHI).map(move |j| (a, std::f64::consts::TAU * j as f64 / N_PHI as f64))
        })
        .collect();
    let shot_at = |a: f64, phi: f64| -> Option<Shot> {
        let cfg = ShootConfig { angle: Some(phi), ..*config };
        ModelParams::new(a, delta).ok().and_then(|p| shoot(kind, p, &cfg).ok())
    };
    let shots: Vec<Option<Shot>> = cells.par_iter().map(|&(a, phi)| shot_at(a, phi)).collect();
    let n_max = shots.iter().flatten().map(|s| s.crossings.len()).max().unwrap_or(0);

    let mut points: Vec<BranchPoint> = Vec::new();
    let mut rejected = Vec::new();
    for n in 1..=n_max {
        let mut best: Vec<(f64, usize)> = shots
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.as_ref().and_then(|s| s.detector_norm(n).ok()).map(|d| (d, i)))
            .collect();
        best.sort_by(|a, b| a.0.total_cmp(&b.0));
        for &(_, i) in best.iter().take(3) {
            let (a0, phi0) = cells[i];
            let mut obj = |p: [f64; 2]| {
                shot_at(p[0], p[1]).and_then(|s| s.detector_norm(n).ok()).unwrap_or(1e3)
            };
            let (p, _) = nelder_mead(&mut obj, [a0, phi0], [config.a_step, 0.1], 1e-12, 800);
            let Some(shot) = shot_at(p[0], p[1]) else { continue };
            let Ok(bp) = BranchPoint::from_shot(kind, delta, &shot, n, Some(p[1])) else { continue };
            if points.iter().any(|q| q.k == bp.k && (q.a - bp.a).abs() < 1e-6) {
                continue;
            }
            if shot.d_min < HCCH_ACCEPT {
                points.push(bp);
            } else {
                rejected.push(bp);
            }
        }
    }
    points.sort_by(|a, b| b.a.total_cmp(&a.a));
    let profile = DistanceProfile {
        a_values: cells.iter().map(|c| c.0).collect(),
        d_values: shots.iter().map(|s| s.as_ref().map_or(f64::NAN, |s| s.d_min)).collect(),
        zero_candidates: Vec::new(),
    };
    Ok(ScanResult { profile, points, rejected })
}

/// Follows the CCH `het_k` branch through `delta_schedule`.
///
/// Each new `A` is predicted by linear extrapolation from the last two
/// accepted points (from the asymptotic slope for the first step) and
/// re-bracketed inside a window of ten times the predicted change. Two
/// consecutive failures abort with [`ShootError::BranchLost`], which carries
/// the points accepted so far.
pub fn trace_branch(
    kind: ModelKind,
    k: u32,
    start: &BranchPoint,
    delta_schedule: &[f64],
    config: &ShootConfig,
) -> Result<Vec<BranchPoint>, ShootError> {
    config.validate()?;
    if kind == ModelKind::Hcch {
        return Err(ShootError::InvalidConfig("branch tracing by shooting is implemented for CCH".into()));
    }
    let n = k as usize + 1;
    let mut accepted: Vec<BranchPoint> = vec![start.clone()];
    let mut failures = 0;
    for &delta in delta_schedule {
        let last = accepted.last().unwrap();
        if delta == last.delta {
            continue;
        }
        let slope = if accepted.len() >= 2 {
            let prev = &accepted[accepted.len() - 2];
            (last.a - prev.a) / (last.delta - prev.delta)
        } else {
            -((2 * k + 1) as f64) / std::f64::consts::SQRT_2
        };
        let a_pred = last.a + slope * (delta - last.delta);
        let window = (10.0 * (a_pred - last.a).abs()).max(1e-7);
        match locate_near(kind, delta, config, n, a_pred, window) {
            Some(bp) if bp.d_min < config.accept_tol => {
                accepted.push(bp);
                failures = 0;
            }
            _ => {
                failures += 1;
                if failures >= 2 {
                    accepted.remove(0);
                    return Err(ShootError::BranchLost { delta, accepted });
                }
            }
        }
    }
    accepted.remove(0);
    Ok(accepted)
}

/// Locates the `het_k` root nearest `a_guess` at `delta`, searching up to
/// `window` on either side. Used to seed [`trace_branch`] from a stored row.
pub fn relocate(
    kind: ModelKind,
    k: u32,
    delta: f64,
    a_guess: f64,
    window: f64,
    config: &ShootConfig,
) -> Result<BranchPoint, ShootError> {
    config.validate()?;
    if kind == ModelKind::Hcch {
        return Err(ShootError::InvalidConfig("relocation by shooting is implemented for CCH".into()));
    }
    ModelParams::new(a_guess, delta)?;
    locate_near(kind, delta, config, k as usize + 1, a_guess, window)
        .ok_or(ShootError::BranchLost { delta, accepted: Vec::new() })
}

/// Finds the detector root of crossing `n` closest to `a_pred`, searching
/// nested windows of `0.05`, `0.5` and `1` times `window` around it.
fn locate_near(kind: ModelKind, delta: f64, config: &ShootConfig, n: usize, a_pred: f64, window: f64) -> Option<BranchPoint> {
    const SAMPLES: usize = 21;
    for frac in [0.05, 0.5, 1.0] {
        let w = frac * window;
        let grid: Vec<f64> = (0..SAMPLES)
            .map(|i| a_pred - w + 2.0 * w * i as f64 / (SAMPLES - 1) as f64)
            .filter(|a| *a > 0.0)
            .collect();
        let vals: Vec<Option<f64>> = grid
            .par_iter()
            .map(|&a| ModelParams::new(a, delta).ok().and_then(|p| signed_detector(kind, p, config, n).ok()))
            .collect();
        // (distance from the prediction, left end, right end)
        type Bracket = (f64, (f64, f64), (f64, f64));
        let mut brackets: Vec<Bracket> = Vec::new();
        for i in 0..grid.len().saturating_sub(1) {
            if let (Some(f0), Some(f1)) = (vals[i], vals[i + 1]) {
                if f0 * f1 <= 0.0 {
                    let mid = 0.5 * (grid[i] + grid[i + 1]);
                    brackets.push(((mid - a_pred).abs(), (grid[i], f0), (grid[i + 1], f1)));
                }
            }
        }
        brackets.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (_, lo, hi) in brackets {
            let Ok(shot) = refine_root(kind, delta, config, n, lo, hi) else { continue };
            if let Ok(bp) = BranchPoint::from_shot(kind, delta, &shot, n, None) {
                if bp.d_min < config.accept_tol {
                    return Some(bp);
                }
            }
        }
    }
    None
}
