//! Three-point Lobatto IIIA collocation (Hermite-Simpson) for two-point
//! boundary value problems on `t in [0, 1]`, with damped Newton and
//! defect-driven mesh refinement.
//!
//! Unknowns are the node states stacked node by node. Rows are ordered
//! `[left BCs; interval residuals; right BCs]`, which keeps the Jacobian
//! banded with `kl = n_left + n - 1`, `ku = 2n - 1 - n_left`.

use crate::banded::Banded;

/// A first-order system `y' = f(t, y)` with separated boundary conditions.
pub(crate) trait Colloc {
    fn n(&self) -> usize;
    fn n_left(&self) -> usize;
    /// Factor between `t` and the physical coordinate, used to express the
    /// defect per physical unit.
    fn scale(&self) -> f64;
    fn f(&self, t: f64, y: &[f64], out: &mut [f64]);
    /// Row-major `n x n`; `out` arrives zeroed.
    fn jac(&self, t: f64, y: &[f64], out: &mut [f64]);
    fn bc(&self, ya: &[f64], yb: &[f64], left: &mut [f64], right: &mut [f64]);
    /// `jl` is `n_left x n` with respect to `ya`, `jr` likewise for `yb`.
    /// Both arrive zeroed.
    fn bc_jac(&self, ya: &[f64], yb: &[f64], jl: &mut [f64], jr: &mut [f64]);
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct CollocSettings {
    pub tol: f64,
    pub newton_tol: f64,
    pub max_newton: usize,
    pub max_nodes: usize,
    pub min_damping: f64,
    pub max_refinements: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum CollocError {
    Singular,
    NewtonDiverged { iterations: usize, residual: f64 },
    MeshBudget { nodes: usize },
}

pub(crate) struct CollocResult {
    pub t: Vec<f64>,
    pub y: Vec<f64>,
    pub iterations: usize,
    pub max_defect: f64,
    pub bc_residual: f64,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn node_f<S: Colloc>(sys: &S, t: &[f64], y: &[f64]) -> Vec<f64> {
    let n = sys.n();
    let mut f = vec![0.0; y.len()];
    for (i, ti) in t.iter().enumerate() {
        sys.f(*ti, &y[i * n..(i + 1) * n], &mut f[i * n..(i + 1) * n]);
    }
    f
}

fn midpoint(n: usize, h: f64, yi: &[f64], yj: &[f64], fi: &[f64], fj: &[f64], ym: &mut [f64]) {
    for c in 0..n {
        ym[c] = 0.5 * (yi[c] + yj[c]) - h / 8.0 * (fj[c] - fi[c]);
    }
}

pub(crate) fn residual<S: Colloc>(sys: &S, t: &[f64], y: &[f64], r: &mut [f64]) {
    let n = sys.n();
    let nl = sys.n_left();
    let m = t.len();
    let f = node_f(sys, t, y);
    let last = (m - 1) * n;
    {
        let (left, rest) = r.split_at_mut(nl);
        let right = &mut rest[(m - 1) * n..];
        sys.bc(&y[..n], &y[last..last + n], left, right);
    }
    let mut ym = vec![0.0; n];
    let mut fm = vec![0.0; n];
    for i in 0..m - 1 {
        let h = t[i + 1] - t[i];
        let (yi, yj) = (&y[i * n..(i + 1) * n], &y[(i + 1) * n..(i + 2) * n]);
        let (fi, fj) = (&f[i * n..(i + 1) * n], &f[(i + 1) * n..(i + 2) * n]);
        midpoint(n, h, yi, yj, fi, fj, &mut ym);
        sys.f(t[i] + 0.5 * h, &ym, &mut fm);
        let row = nl + i * n;
        for c in 0..n {
            r[row + c] = yj[c] - yi[c] - h / 6.0 * (fi[c] + 4.0 * fm[c] + fj[c]);
        }
    }
}

fn assemble<S: Colloc>(sys: &S, t: &[f64], y: &[f64], band: &mut Banded) {
    let n = sys.n();
    let nl = sys.n_left();
    let nr = n - nl;
    let m = t.len();
    band.clear();
    let f = node_f(sys, t, y);

    let last = (m - 1) * n;
    let mut jl = vec![0.0; nl * n];
    let mut jr = vec![0.0; nr * n];
    sys.bc_jac(&y[..n], &y[last..last + n], &mut jl, &mut jr);
    for p in 0..nl {
        for c in 0..n {
            band.add(p, c, jl[p * n + c]);
        }
    }
    let rr = nl + (m - 1) * n;
    for p in 0..nr {
        for c in 0..n {
            band.add(rr + p, last + c, jr[p * n + c]);
        }
    }

    let mut ji = vec![0.0; n * n];
    let mut jj = vec![0.0; n * n];
    let mut jm = vec![0.0; n * n];
    let mut ym = vec![0.0; n];
    let mut a_blk = vec![0.0; n * n];
    let mut b_blk = vec![0.0; n * n];
    for i in 0..m - 1 {
        let h = t[i + 1] - t[i];
        let (yi, yj) = (&y[i * n..(i + 1) * n], &y[(i + 1) * n..(i + 2) * n]);
        let (fi, fj) = (&f[i * n..(i + 1) * n], &f[(i + 1) * n..(i + 2) * n]);
        midpoint(n, h, yi, yj, fi, fj, &mut ym);
        for buf in [&mut ji, &mut jj, &mut jm] {
            buf.iter_mut().for_each(|v| *v = 0.0);
        }
        sys.jac(t[i], yi, &mut ji);
        sys.jac(t[i + 1], yj, &mut jj);
        sys.jac(t[i] + 0.5 * h, &ym, &mut jm);
        // dr/dy_i     = -I - h/6 J_i     - 2h/3 J_m (I/2 + h/8 J_i)
        // dr/dy_{i+1} =  I - h/6 J_{i+1} - 2h/3 J_m (I/2 - h/8 J_{i+1})
        for r in 0..n {
            for c in 0..n {
                let mut sa = 0.0;
                let mut sb = 0.0;
                for q in 0..n {
                    let jmq = jm[r * n + q];
                    if jmq != 0.0 {
                        let id = if q == c { 0.5 } else { 0.0 };
                        sa += jmq * (id + h / 8.0 * ji[q * n + c]);
                        sb += jmq * (id - h / 8.0 * jj[q * n + c]);
                    }
                }
                let id = if r == c { 1.0 } else { 0.0 };
                a_blk[r * n + c] = -id - h / 6.0 * ji[r * n + c] - 2.0 * h / 3.0 * sa;
                b_blk[r * n + c] = id - h / 6.0 * jj[r * n + c] - 2.0 * h / 3.0 * sb;
            }
        }
        let row = nl + i * n;
        for r in 0..n {
            for c in 0..n {
                band.add(row + r, i * n + c, a_blk[r * n + c]);
                band.add(row + r, (i + 1) * n + c, b_blk[r * n + c]);
            }
        }
    }
}

/// Damped Newton on a fixed mesh. Returns the number of iterations.
pub(crate) fn newton<S: Colloc>(sys: &S, t: &[f64], y: &mut [f64], cfg: &CollocSettings) -> Result<usize, CollocError> {
    let n = sys.n();
    let nl = sys.n_left();
    let size = y.len();
    let mut band = Banded::zeros(size, nl + n - 1, 2 * n - 1 - nl);
    let mut r = vec![0.0; size];
    let mut r_try = vec![0.0; size];
    let mut y_try = vec![0.0; size];
    residual(sys, t, y, &mut r);
    for it in 1..=cfg.max_newton {
        let r2: f64 = r.iter().map(|v| v * v).sum();
        if !r2.is_finite() {
            return Err(CollocError::NewtonDiverged { iterations: it - 1, residual: f64::INFINITY });
        }
        assemble(sys, t, y, &mut band);
        band.factor().map_err(|_| CollocError::Singular)?;
        let mut step: Vec<f64> = r.iter().map(|v| -v).collect();
        band.solve(&mut step);
        let mut lambda = 1.0;
        loop {
            for k in 0..size {
                y_try[k] = y[k] + lambda * step[k];
            }
            residual(sys, t, &y_try, &mut r_try);
            let rt2: f64 = r_try.iter().map(|v| v * v).sum();
            // The absolute floor stops roundoff from masquerading as a
            // failed descent once the residual is at machine level.
            if rt2.is_finite() && (rt2 <= (1.0 - 1e-4 * lambda) * r2 || inf_norm(&r_try) <= 1e-13) {
                break;
            }
            lambda *= 0.5;
            if lambda < cfg.min_damping {
                return Err(CollocError::NewtonDiverged { iterations: it, residual: r2.sqrt() });
            }
        }
        y.copy_from_slice(&y_try);
        std::mem::swap(&mut r, &mut r_try);
        let dy = lambda * inf_norm(&step);
        // On long domains the update can stall at a few ulps of the
        // far-field states while the residual already sits at roundoff.
        if dy <= cfg.newton_tol * (1.0 + inf_norm(y)) || (lambda == 1.0 && inf_norm(&r) <= 1e-14) {
            return Ok(it);
        }
    }
    Err(CollocError::NewtonDiverged { iterations: cfg.max_newton, residual: inf_norm(&r) })
}

const LOBATTO_OFF: f64 = 0.32732683535398854; // sqrt(21) / 14

fn hermite(n: usize, h: f64, s: f64, yi: &[f64], yj: &[f64], fi: &[f64], fj: &[f64], v: &mut [f64], d: &mut [f64]) {
    let (s2, s3) = (s * s, s * s * s);
    let (h00, h10, h01, h11) = (2.0 * s3 - 3.0 * s2 + 1.0, s3 - 2.0 * s2 + s, -2.0 * s3 + 3.0 * s2, s3 - s2);
    let (d00, d10, d01, d11) = ((6.0 * s2 - 6.0 * s) / h, 3.0 * s2 - 4.0 * s + 1.0, (6.0 * s - 6.0 * s2) / h, 3.0 * s2 - 2.0 * s);
    for c in 0..n {
        v[c] = h00 * yi[c] + h10 * h * fi[c] + h01 * yj[c] + h11 * h * fj[c];
        d[c] = d00 * yi[c] + d10 * fi[c] + d01 * yj[c] + d11 * fj[c];
    }
}

/// RMS defect of the C1 cubic interpolant on each interval, relative to
/// `scale + |f|` and estimated with the 5-point Lobatto rule.
pub(crate) fn defects<S: Colloc>(sys: &S, t: &[f64], y: &[f64]) -> Vec<f64> {
    let n = sys.n();
    let f = node_f(sys, t, y);
    let scale = sys.scale();
    let mut v = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut fv = vec![0.0; n];
    let mut out = Vec::with_capacity(t.len() - 1);
    for i in 0..t.len() - 1 {
        let h = t[i + 1] - t[i];
        let (yi, yj) = (&y[i * n..(i + 1) * n], &y[(i + 1) * n..(i + 2) * n]);
        let (fi, fj) = (&f[i * n..(i + 1) * n], &f[(i + 1) * n..(i + 2) * n]);
        let mut sq = [0.0; 3];
        for (slot, s) in [0.5, 0.5 - LOBATTO_OFF, 0.5 + LOBATTO_OFF].into_iter().enumerate() {
            hermite(n, h, s, yi, yj, fi, fj, &mut v, &mut d);
            sys.f(t[i] + s * h, &v, &mut fv);
            sq[slot] = (0..n).map(|c| ((d[c] - fv[c]) / (scale + fv[c].abs())).powi(2)).sum();
        }
        out.push((0.5 * (32.0 / 45.0 * sq[0] + 49.0 / 90.0 * (sq[1] + sq[2]))).sqrt());
    }
    out
}

/// Node-by-node Hermite interpolation onto `t_new`.
pub(crate) fn resample<S: Colloc>(sys: &S, t: &[f64], y: &[f64], t_new: &[f64]) -> Vec<f64> {
    let n = sys.n();
    let f = node_f(sys, t, y);
    let mut out = vec![0.0; t_new.len() * n];
    let mut d = vec![0.0; n];
    for (k, &tk) in t_new.iter().enumerate() {
        let i = t.partition_point(|&v| v <= tk).clamp(1, t.len() - 1) - 1;
        let h = t[i + 1] - t[i];
        let (yi, yj) = (&y[i * n..(i + 1) * n], &y[(i + 1) * n..(i + 2) * n]);
        let (fi, fj) = (&f[i * n..(i + 1) * n], &f[(i + 1) * n..(i + 2) * n]);
        hermite(n, h, (tk - t[i]) / h, yi, yj, fi, fj, &mut out[k * n..(k + 1) * n], &mut d);
    }
    out
}

fn bc_residual<S: Colloc>(sys: &S, y: &[f64]) -> f64 {
    let n = sys.n();
    let nl = sys.n_left();
    let m = y.len() / n;
    let mut left = vec![0.0; nl];
    let mut right = vec![0.0; n - nl];
    sys.bc(&y[..n], &y[(m - 1) * n..], &mut left, &mut right);
    inf_norm(&left).max(inf_norm(&right))
}

/// Newton on successively refined meshes until every interval defect is
/// below `cfg.tol`.
pub(crate) fn solve<S: Colloc>(sys: &S, mut t: Vec<f64>, mut y: Vec<f64>, cfg: &CollocSettings) -> Result<CollocResult, CollocError> {
    let mut iterations = 0;
    for _ in 0..=cfg.max_refinements {
        iterations += newton(sys, &t, &mut y, cfg)?;
        let rms = defects(sys, &t, &y);
        let worst = rms.iter().cloned().fold(0.0, f64::max);
        if worst <= cfg.tol {
            let bc_residual = bc_residual(sys, &y);
            return Ok(CollocResult { t, y, iterations, max_defect: worst, bc_residual });
        }
        let mut t_new = Vec::with_capacity(t.len() * 2);
        for i in 0..t.len() - 1 {
            t_new.push(t[i]);
            let h = t[i + 1] - t[i];
            if rms[i] > 100.0 * cfg.tol {
                t_new.push(t[i] + h / 3.0);
                t_new.push(t[i] + 2.0 * h / 3.0);
            } else if rms[i] > cfg.tol {
                t_new.push(t[i] + 0.5 * h);
            }
        }
        t_new.push(*t.last().unwrap());
        if t_new.len() > cfg.max_nodes {
            return Err(CollocError::MeshBudget { nodes: t_new.len() });
        }
        y = resample(sys, &t, &y, &t_new);
        t = t_new;
    }
    Err(CollocError::MeshBudget { nodes: t.len() })
}
