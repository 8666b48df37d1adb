//! Heteroclinic fronts as boundary value problems.
//!
//! Two formulations are available.
//!
//! * **Half, symmetric.** The front `U+ -> U-` is reversible, so it is fixed
//!   by its left half. On `x in [-L, 0]` (`t = 1 + x / L`) the far field is
//!   pinned at `t = 0` and the odd components vanish at the symmetric point
//!   `t = 1`. `A` is an extra constant state. For HCCH the pinned far field
//!   uses `U1 = 1, U2 = U4 = 0`; the remaining far-field components `U3`,
//!   `U5` are reported afterwards. A projected far-field condition (the
//!   deviation from `U+` lies in its unstable subspace) can replace pinning.
//! * **Full, projected.** On `x in [-L, L]` with projection conditions at
//!   both ends and an integral phase condition against a reference profile.
//!   The connection is overdetermined by one for a non-reversible solver, so
//!   a symmetry-breaking unfolding term `mu U_n` is added to the last
//!   equation; a genuine front has `mu = 0`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use nalgebra::DMatrix;

use crate::asymptotics::{self, AsymptoticsError};
use crate::colloc::{self, Colloc, CollocError, CollocSettings};
use crate::profile::{HermiteProfile, ProfileError};
use crate::systems::{equilibrium_analysis, EquilibriumSign, Model, ModelKind, ModelParams, Stability, SystemError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BvpError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("problem has no initial guess")]
    MissingGuess,
    #[error("Newton iteration failed after {iterations} steps (residual {residual:e})")]
    NewtonDiverged { iterations: usize, residual: f64 },
    #[error("collocation Jacobian is singular")]
    SingularJacobian,
    #[error("mesh refinement exceeded the node budget ({nodes} nodes)")]
    MeshBudget { nodes: usize },
    #[error("continuation stalled near delta = {delta} after {reached} accepted steps")]
    ContinuationStalled { delta: f64, reached: usize },
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Asymptotics(#[from] AsymptoticsError),
}

impl From<CollocError> for BvpError {
    fn from(e: CollocError) -> Self {
        match e {
            CollocError::Singular => BvpError::SingularJacobian,
            CollocError::NewtonDiverged { iterations, residual } => BvpError::NewtonDiverged { iterations, residual },
            CollocError::MeshBudget { nodes } => BvpError::MeshBudget { nodes },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formulation {
    HalfSymmetric,
    FullProjected,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeftBc {
    Pinned,
    Projected,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BvpConfig {
    /// Bound on the RMS interpolant defect per physical unit length.
    pub tol: f64,
    /// Newton stops when the scaled update falls below this.
    pub newton_tol: f64,
    pub max_newton: usize,
    /// Node budget per half-line; the full formulation may use twice this.
    pub max_nodes: usize,
    /// Smallest Armijo damping factor before giving up.
    pub min_damping: f64,
    pub max_refinements: usize,
}

impl Default for BvpConfig {
    fn default() -> Self {
        BvpConfig { tol: 1e-9, newton_tol: 1e-10, max_newton: 40, max_nodes: 10_000, min_damping: 2f64.powi(-20), max_refinements: 40 }
    }
}

impl BvpConfig {
    pub fn validate(&self) -> Result<(), BvpError> {
        let ok = self.tol > 0.0
            && self.newton_tol > 0.0
            && self.max_newton > 0
            && self.max_nodes >= 3
            && self.min_damping > 0.0
            && self.min_damping < 1.0;
        if ok {
            Ok(())
        } else {
            Err(BvpError::InvalidProblem(format!("bad solver configuration {self:?}")))
        }
    }

    fn settings(&self) -> CollocSettings {
        CollocSettings {
            tol: self.tol,
            newton_tol: self.newton_tol,
            max_newton: self.max_newton,
            max_nodes: self.max_nodes,
            min_damping: self.min_damping,
            max_refinements: self.max_refinements,
        }
    }
}

/// Node positions in `t in [0, 1]` and the phase-space state at each node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    pub nodes: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl Mesh {
    fn validate(&self, dim: usize) -> Result<(), BvpError> {
        if self.nodes.len() < 3 || self.nodes.len() != self.states.len() {
            return Err(BvpError::InvalidProblem("mesh needs at least three nodes and one state per node".into()));
        }
        if (self.nodes[0]).abs() > 1e-14 || (self.nodes[self.nodes.len() - 1] - 1.0).abs() > 1e-14 {
            return Err(BvpError::InvalidProblem("mesh must span [0, 1]".into()));
        }
        if self.nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(BvpError::InvalidProblem("mesh nodes must increase strictly".into()));
        }
        if self.states.iter().any(|s| s.len() != dim || s.iter().any(|v| !v.is_finite())) {
            return Err(BvpError::InvalidProblem(format!("mesh states must be finite with {dim} components")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct BvpProblem {
    pub kind: ModelKind,
    pub formulation: Formulation,
    pub delta: f64,
    pub length: f64,
    pub left_bc: LeftBc,
    /// Holds `A` fixed instead of solving for it; one symmetric-section
    /// condition is then dropped (half formulation only).
    pub fixed_a: Option<f64>,
    pub a0: f64,
    pub mu0: f64,
    reference: Option<HermiteProfile>,
    guess: Option<Mesh>,
}

fn check_common(kind: ModelKind, delta: f64, length: f64, a0: f64) -> Result<(), BvpError> {
    ModelParams::new(a0, delta)?;
    if !(length.is_finite() && length > 0.0) {
        return Err(BvpError::InvalidProblem(format!("domain length must be positive, got {length}")));
    }
    let _ = kind;
    Ok(())
}

/// Half-domain problem on `x in [-length, 0]`. Attach a guess before solving.
pub fn build_half_problem(kind: ModelKind, delta: f64, length: f64, a0: f64) -> Result<BvpProblem, BvpError> {
    check_common(kind, delta, length, a0)?;
    Ok(BvpProblem {
        kind,
        formulation: Formulation::HalfSymmetric,
        delta,
        length,
        left_bc: LeftBc::Pinned,
        fixed_a: None,
        a0,
        mu0: 0.0,
        reference: None,
        guess: None,
    })
}

/// Full-domain problem on `x in [-length, length]` with `reference` as the
/// phase-condition template and initial guess. `reference` must cover the
/// domain.
pub fn build_full_problem(
    kind: ModelKind,
    delta: f64,
    reference: HermiteProfile,
    length: f64,
    a0: f64,
) -> Result<BvpProblem, BvpError> {
    check_common(kind, delta, length, a0)?;
    if reference.dim() != kind.dim() {
        return Err(BvpError::InvalidProblem(format!("reference has {} components, expected {}", reference.dim(), kind.dim())));
    }
    let slack = 1e-9 * length;
    if reference.x_min() > -length + slack || reference.x_max() < length - slack {
        return Err(BvpError::InvalidProblem(format!(
            "reference covers [{}, {}], domain is [-{length}, {length}]",
            reference.x_min(),
            reference.x_max()
        )));
    }
    let mut nodes = vec![0.0];
    let mut states = vec![reference.eval(-length).0];
    for (x, u) in reference.x.iter().zip(&reference.u) {
        let t = (x + length) / (2.0 * length);
        if t > 1e-12 && t < 1.0 - 1e-12 {
            nodes.push(t);
            states.push(u.clone());
        }
    }
    nodes.push(1.0);
    states.push(reference.eval(length).0);
    let guess = Mesh { nodes, states };
    Ok(BvpProblem {
        kind,
        formulation: Formulation::FullProjected,
        delta,
        length,
        left_bc: LeftBc::Projected,
        fixed_a: None,
        a0,
        mu0: 0.0,
        reference: Some(reference),
        guess: Some(guess),
    })
}

impl BvpProblem {
    pub fn with_guess(mut self, guess: Mesh) -> Self {
        self.guess = Some(guess);
        self
    }

    pub fn with_left_bc(mut self, left_bc: LeftBc) -> Self {
        self.left_bc = left_bc;
        self
    }

    pub fn with_fixed_a(mut self, a: f64) -> Self {
        self.fixed_a = Some(a);
        self.a0 = a;
        self
    }

    pub fn guess(&self) -> Option<&Mesh> {
        self.guess.as_ref()
    }
}

/// Rows of a real basis annihilating the invariant subspace that the far
/// field must lie in: at `U+` the deviation lies in the unstable subspace,
/// at `U-` in the stable one.
fn annihilator(kind: ModelKind, a: f64, delta: f64, sign: EquilibriumSign) -> Option<DMatrix<f64>> {
    let params = ModelParams { a, delta };
    let info = equilibrium_analysis(kind, params, sign).ok()?;
    let excluded = match sign {
        EquilibriumSign::Plus => Stability::Unstable,
        EquilibriumSign::Minus => Stability::Stable,
    };
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for which in [Stability::Unstable, Stability::Stable, Stability::Center] {
        if which == excluded {
            continue;
        }
        let basis = info.subspace(which, true);
        for c in 0..basis.ncols() {
            rows.push(basis.column(c).iter().copied().collect());
        }
    }
    let n = kind.dim();
    Some(DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]))
}

fn annihilator_rows(kind: ModelKind, a: f64, delta: f64, sign: EquilibriumSign) -> usize {
    annihilator(kind, a, delta, sign).map_or(0, |m| m.nrows())
}

struct HalfSys {
    kind: ModelKind,
    delta: f64,
    length: f64,
    left_bc: LeftBc,
    fixed_a: Option<f64>,
}

impl HalfSys {
    fn dim(&self) -> usize {
        self.kind.dim()
    }

    fn a_of(&self, y: &[f64]) -> f64 {
        self.fixed_a.unwrap_or_else(|| y[self.dim()])
    }

    fn model(&self, y: &[f64]) -> Model {
        Model::new_unchecked(self.kind, ModelParams { a: self.a_of(y), delta: self.delta })
    }

    fn pinned_left(&self) -> &'static [usize] {
        match self.kind {
            ModelKind::Cch => &[0, 1],
            ModelKind::Hcch => &[0, 1, 3],
        }
    }

    fn right(&self) -> &'static [usize] {
        match (self.kind, self.fixed_a.is_some()) {
            (ModelKind::Cch, false) => &[0, 2],
            (ModelKind::Cch, true) => &[0],
            (ModelKind::Hcch, false) => &[0, 2, 4],
            (ModelKind::Hcch, true) => &[0, 2],
        }
    }
}

impl Colloc for HalfSys {
    fn n(&self) -> usize {
        self.dim() + usize::from(self.fixed_a.is_none())
    }

    fn n_left(&self) -> usize {
        self.pinned_left().len()
    }

    fn scale(&self) -> f64 {
        self.length
    }

    fn f(&self, _t: f64, y: &[f64], out: &mut [f64]) {
        let d = self.dim();
        self.model(y).rhs_into(&y[..d], &mut out[..d]);
        for v in &mut out[..d] {
            *v *= self.length;
        }
        if self.fixed_a.is_none() {
            out[d] = 0.0;
        }
    }

    fn jac(&self, _t: f64, y: &[f64], out: &mut [f64]) {
        let d = self.dim();
        let n = self.n();
        let l = self.length;
        let model = self.model(y);
        for i in 0..d - 1 {
            out[i * n + i + 1] = l;
        }
        let mut grad = vec![0.0; d];
        model.forcing_gradient(&y[..d], &mut grad);
        for (c, g) in grad.iter().enumerate() {
            out[(d - 1) * n + c] = l * g;
        }
        if self.fixed_a.is_none() {
            out[(d - 1) * n + d] = l * model.forcing_d_a(&y[..d]);
        }
    }

    fn bc(&self, ya: &[f64], yb: &[f64], left: &mut [f64], right: &mut [f64]) {
        match self.left_bc {
            LeftBc::Pinned => {
                for (r, &c) in self.pinned_left().iter().enumerate() {
                    left[r] = ya[c] - if c == 0 { 1.0 } else { 0.0 };
                }
            }
            LeftBc::Projected => {
                let d = self.dim();
                match annihilator(self.kind, self.a_of(ya), self.delta, EquilibriumSign::Plus) {
                    Some(p) if p.nrows() == left.len() => {
                        for (r, slot) in left.iter_mut().enumerate() {
                            *slot = (0..d).map(|c| p[(r, c)] * (ya[c] - if c == 0 { 1.0 } else { 0.0 })).sum();
                        }
                    }
                    _ => left.iter_mut().for_each(|v| *v = f64::NAN),
                }
            }
        }
        for (r, &c) in self.right().iter().enumerate() {
            right[r] = yb[c];
        }
    }

    fn bc_jac(&self, ya: &[f64], _yb: &[f64], jl: &mut [f64], jr: &mut [f64]) {
        let n = self.n();
        match self.left_bc {
            LeftBc::Pinned => {
                for (r, &c) in self.pinned_left().iter().enumerate() {
                    jl[r * n + c] = 1.0;
                }
            }
            LeftBc::Projected => {
                // The dependence of the projector on `A` is neglected: it
                // multiplies the exponentially small far-field deviation.
                if let Some(p) = annihilator(self.kind, self.a_of(ya), self.delta, EquilibriumSign::Plus) {
                    for r in 0..p.nrows().min(self.n_left()) {
                        for c in 0..self.dim() {
                            jl[r * n + c] = p[(r, c)];
                        }
                    }
                }
            }
        }
        for (r, &c) in self.right().iter().enumerate() {
            jr[r * n + c] = 1.0;
        }
    }
}

struct FullSys {
    kind: ModelKind,
    delta: f64,
    length: f64,
    reference: HermiteProfile,
    n_left: usize,
}

impl FullSys {
    fn dim(&self) -> usize {
        self.kind.dim()
    }

    fn x_of(&self, t: f64) -> f64 {
        self.length * (2.0 * t - 1.0)
    }

    fn model(&self, y: &[f64]) -> Model {
        Model::new_unchecked(self.kind, ModelParams { a: y[self.dim() + 1], delta: self.delta })
    }

    fn projection(&self, y: &[f64], sign: EquilibriumSign, out: &mut [f64]) {
        let d = self.dim();
        let s = sign.value();
        match annihilator(self.kind, y[d + 1], self.delta, sign) {
            Some(p) if p.nrows() == out.len() - 1 => {
                out[0] = y[d];
                for r in 0..p.nrows() {
                    out[r + 1] = (0..d).map(|c| p[(r, c)] * (y[c] - if c == 0 { s } else { 0.0 })).sum();
                }
            }
            _ => out.iter_mut().for_each(|v| *v = f64::NAN),
        }
    }

    fn projection_jac(&self, y: &[f64], sign: EquilibriumSign, rows: usize, out: &mut [f64]) {
        let d = self.dim();
        let n = d + 3;
        out[d] = 1.0;
        if let Some(p) = annihilator(self.kind, y[d + 1], self.delta, sign) {
            for r in 0..p.nrows().min(rows - 1) {
                for c in 0..d {
                    out[(r + 1) * n + c] = p[(r, c)];
                }
            }
        }
    }
}

impl Colloc for FullSys {
    fn n(&self) -> usize {
        self.dim() + 3
    }

    fn n_left(&self) -> usize {
        self.n_left
    }

    fn scale(&self) -> f64 {
        2.0 * self.length
    }

    fn f(&self, t: f64, y: &[f64], out: &mut [f64]) {
        let d = self.dim();
        let s = 2.0 * self.length;
        self.model(y).rhs_into(&y[..d], &mut out[..d]);
        out[d - 1] += y[d + 2] * y[d - 1];
        for v in &mut out[..d] {
            *v *= s;
        }
        let (_, dv) = self.reference.eval(self.x_of(t));
        out[d] = s * (0..d).map(|c| dv[c] * y[c]).sum::<f64>();
        out[d + 1] = 0.0;
        out[d + 2] = 0.0;
    }

    fn jac(&self, t: f64, y: &[f64], out: &mut [f64]) {
        let d = self.dim();
        let n = self.n();
        let s = 2.0 * self.length;
        let model = self.model(y);
        for i in 0..d - 1 {
            out[i * n + i + 1] = s;
        }
        let mut grad = vec![0.0; d];
        model.forcing_gradient(&y[..d], &mut grad);
        grad[d - 1] += y[d + 2];
        for (c, g) in grad.iter().enumerate() {
            out[(d - 1) * n + c] = s * g;
        }
        out[(d - 1) * n + d + 1] = s * model.forcing_d_a(&y[..d]);
        out[(d - 1) * n + d + 2] = s * y[d - 1];
        let (_, dv) = self.reference.eval(self.x_of(t));
        for c in 0..d {
            out[d * n + c] = s * dv[c];
        }
    }

    fn bc(&self, ya: &[f64], yb: &[f64], left: &mut [f64], right: &mut [f64]) {
        self.projection(ya, EquilibriumSign::Plus, left);
        self.projection(yb, EquilibriumSign::Minus, right);
    }

    fn bc_jac(&self, ya: &[f64], yb: &[f64], jl: &mut [f64], jr: &mut [f64]) {
        let nl = self.n_left;
        self.projection_jac(ya, EquilibriumSign::Plus, nl, jl);
        self.projection_jac(yb, EquilibriumSign::Minus, self.n() - nl, jr);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BvpSolution {
    pub kind: ModelKind,
    pub formulation: Formulation,
    pub delta: f64,
    pub a: f64,
    /// Unfolding parameter; zero for the half formulation.
    pub mu: f64,
    pub length: f64,
    /// Physical coordinate of the mesh nodes.
    pub x: Vec<f64>,
    pub u: Vec<Vec<f64>>,
    /// `dU/dx` at the nodes.
    pub du: Vec<Vec<f64>>,
    pub newton_iters: usize,
    /// Largest RMS interpolant defect per unit length.
    pub max_residual: f64,
    pub bc_residual: f64,
    /// Far-field components not imposed by the pinned conditions; zero when
    /// the far field is projected.
    pub far_field_check: f64,
}

impl BvpSolution {
    pub fn profile(&self) -> HermiteProfile {
        HermiteProfile { x: self.x.clone(), u: self.u.clone(), du: self.du.clone() }
    }

    /// The solution as an initial guess for a problem of the same
    /// formulation on `length`.
    fn remap(&self, length: f64) -> Mesh {
        match self.formulation {
            Formulation::HalfSymmetric => {
                let mut nodes = vec![0.0];
                let far = if length > self.length { self.far_state() } else { self.profile().eval(-length).0 };
                let mut states = vec![far.clone()];
                if length > self.length {
                    // Pad the extra far field with the end state.
                    let pads = ((length - self.length) / 2.0).ceil().min(200.0) as usize;
                    for p in 1..pads {
                        let x = -length + (length - self.length) * p as f64 / pads as f64;
                        nodes.push(1.0 + x / length);
                        states.push(far.clone());
                    }
                }
                for (x, u) in self.x.iter().zip(&self.u) {
                    let t = 1.0 + x / length;
                    if t > *nodes.last().unwrap() + 1e-12 {
                        nodes.push(t.min(1.0));
                        states.push(u.clone());
                    }
                }
                if *nodes.last().unwrap() < 1.0 {
                    nodes.push(1.0);
                    states.push(self.u.last().unwrap().clone());
                }
                let last = nodes.len() - 1;
                nodes[last] = 1.0;
                Mesh { nodes, states }
            }
            Formulation::FullProjected => Mesh {
                nodes: self.x.iter().map(|x| (x + self.length) / (2.0 * self.length)).collect(),
                states: self.u.clone(),
            },
        }
    }

    fn far_state(&self) -> Vec<f64> {
        self.u[0].clone()
    }
}

/// Tanh-train guess for `het_k` on the half domain `[-length, 0]`, `spacing`
/// apart, on a mesh graded towards the kinks.
pub fn initial_guess(kind: ModelKind, k: u32, spacing: f64, length: f64) -> Result<Mesh, BvpError> {
    if !(spacing > 0.0 && spacing.is_finite()) || !(length > 0.0 && length.is_finite()) {
        return Err(BvpError::InvalidProblem(format!("spacing {spacing} and length {length} must be positive")));
    }
    if k > 0 && (spacing >= length / 2.0 || k as f64 * spacing >= length) {
        return Err(BvpError::InvalidProblem(format!("{k} kinks {spacing} apart do not fit in half length {length}")));
    }
    let x = graded_nodes(k, spacing, length);
    let samples = asymptotics::tanh_profile(k, spacing, &x)?;
    let dim = kind.dim();
    let nodes = x.iter().map(|v| 1.0 + v / length).collect::<Vec<_>>();
    let states = samples.values.iter().map(|row| row[..dim].to_vec()).collect();
    let mut nodes = nodes;
    nodes[0] = 0.0;
    *nodes.last_mut().unwrap() = 1.0;
    Ok(Mesh { nodes, states })
}

/// Equidistributes `1 / h_far + sum_j sech^2((x + jK) / sqrt 2) / h_kink`
/// over `[-length, 0]`.
fn graded_nodes(k: u32, spacing: f64, length: f64) -> Vec<f64> {
    const H_KINK: f64 = 0.05;
    const H_FAR: f64 = 2.0;
    let density = |x: f64| {
        let mut s = 1.0 / H_FAR;
        for j in 0..=k {
            let c = ((x + j as f64 * spacing) / std::f64::consts::SQRT_2).cosh();
            s += 1.0 / (H_KINK * c * c);
        }
        s
    };
    let fine = ((length / 0.01).ceil() as usize).max(100);
    let dx = length / fine as f64;
    let mut cum = Vec::with_capacity(fine + 1);
    cum.push(0.0);
    for i in 0..fine {
        let xa = -length + i as f64 * dx;
        cum.push(cum[i] + 0.5 * dx * (density(xa) + density(xa + dx)));
    }
    let total = *cum.last().unwrap();
    let m = (total.ceil() as usize).max(8);
    let mut x = Vec::with_capacity(m + 1);
    let mut seg = 0;
    for j in 0..=m {
        let target = total * j as f64 / m as f64;
        while seg < fine - 1 && cum[seg + 1] < target {
            seg += 1;
        }
        let frac = ((target - cum[seg]) / (cum[seg + 1] - cum[seg])).clamp(0.0, 1.0);
        x.push(-length + (seg as f64 + frac) * dx);
    }
    x[0] = -length;
    x[m] = 0.0;
    x.dedup_by(|b, a| *b <= *a);
    x
}

/// Half length that holds `k` kink spacings plus a far field long enough
/// for the slowest decay at `U+` to drop by `e^-25`.
pub fn default_length(kind: ModelKind, k: u32, delta: f64, a: f64) -> Result<f64, BvpError> {
    let width = if delta > 0.0 {
        match kind {
            ModelKind::Cch => asymptotics::cch_width_pred(delta).unwrap_or(10.0),
            ModelKind::Hcch => asymptotics::hcch_width_pred(delta)?,
        }
    } else {
        0.0
    };
    let info = equilibrium_analysis(kind, ModelParams::new(a, delta)?, EquilibriumSign::Plus)?;
    let slow = info
        .eigenvalues
        .iter()
        .filter(|l| l.re > 0.0)
        .map(|l| l.re)
        .fold(f64::INFINITY, f64::min);
    let tail = if slow.is_finite() { 25.0 / slow } else { 25.0 };
    Ok((k as f64 * width.max(2.0) + 12.0 + tail).min(5000.0))
}

/// Solves a problem built by [`build_half_problem`] or [`build_full_problem`].
pub fn solve(problem: &BvpProblem, config: &BvpConfig) -> Result<BvpSolution, BvpError> {
    config.validate()?;
    let guess = problem.guess.as_ref().ok_or(BvpError::MissingGuess)?;
    let kind = problem.kind;
    let dim = kind.dim();
    guess.validate(dim)?;
    match problem.formulation {
        Formulation::HalfSymmetric => {
            if let Some(a) = problem.fixed_a {
                ModelParams::new(a, problem.delta)?;
            }
            let sys = HalfSys {
                kind,
                delta: problem.delta,
                length: problem.length,
                left_bc: problem.left_bc,
                fixed_a: problem.fixed_a,
            };
            if problem.left_bc == LeftBc::Projected {
                let rows = annihilator_rows(kind, problem.a0, problem.delta, EquilibriumSign::Plus);
                if rows != sys.n_left() {
                    return Err(BvpError::InvalidProblem(format!(
                        "projected far field gives {rows} conditions, expected {}",
                        sys.n_left()
                    )));
                }
            }
            let n = sys.n();
            let mut y = Vec::with_capacity(guess.nodes.len() * n);
            for s in &guess.states {
                y.extend_from_slice(s);
                if problem.fixed_a.is_none() {
                    y.push(problem.a0);
                }
            }
            let res = colloc::solve(&sys, guess.nodes.clone(), y, &config.settings())?;
            let a = problem.fixed_a.unwrap_or(res.y[dim]);
            let x: Vec<f64> = res.t.iter().map(|t| problem.length * (t - 1.0)).collect();
            let (u, du) = split_states(&res.y, n, dim, &x, |row, out| {
                sys.f(0.0, row, out);
                for v in out.iter_mut() {
                    *v /= problem.length;
                }
            });
            let far_field_check = match problem.left_bc {
                LeftBc::Pinned => {
                    let missing: &[usize] = if kind == ModelKind::Cch { &[2] } else { &[2, 4] };
                    missing.iter().map(|&c| u[0][c].abs()).fold(0.0, f64::max)
                }
                LeftBc::Projected => 0.0,
            };
            Ok(BvpSolution {
                kind,
                formulation: Formulation::HalfSymmetric,
                delta: problem.delta,
                a,
                mu: 0.0,
                length: problem.length,
                x,
                u,
                du,
                newton_iters: res.iterations,
                max_residual: res.max_defect,
                bc_residual: res.bc_residual,
                far_field_check,
            })
        }
        Formulation::FullProjected => {
            let reference = problem.reference.clone().ok_or_else(|| BvpError::InvalidProblem("full problem needs a reference".into()))?;
            let n_left = 1 + annihilator_rows(kind, problem.a0, problem.delta, EquilibriumSign::Plus);
            let n_right = 1 + annihilator_rows(kind, problem.a0, problem.delta, EquilibriumSign::Minus);
            if n_left + n_right != dim + 3 {
                return Err(BvpError::InvalidProblem(format!(
                    "far-field splitting gives {} conditions for {} unknowns",
                    n_left + n_right,
                    dim + 3
                )));
            }
            let sys = FullSys { kind, delta: problem.delta, length: problem.length, reference, n_left };
            let n = sys.n();
            let mut y = Vec::with_capacity(guess.nodes.len() * n);
            let mut ph = 0.0;
            for (i, s) in guess.states.iter().enumerate() {
                if i > 0 {
                    // Integrate the phase integrand along the guess so its
                    // state is consistent from the start.
                    let (t0, t1) = (guess.nodes[i - 1], guess.nodes[i]);
                    let g = |t: f64, u: &[f64]| {
                        let (_, dv) = sys.reference.eval(sys.x_of(t));
                        2.0 * problem.length * (0..dim).map(|c| dv[c] * u[c]).sum::<f64>()
                    };
                    ph += 0.5 * (t1 - t0) * (g(t0, &guess.states[i - 1]) + g(t1, s));
                }
                y.extend_from_slice(s);
                y.extend([ph, problem.a0, problem.mu0]);
            }
            let settings = CollocSettings { max_nodes: 2 * config.max_nodes, ..config.settings() };
            let res = colloc::solve(&sys, guess.nodes.clone(), y, &settings)?;
            let x: Vec<f64> = res.t.iter().map(|&t| sys.x_of(t)).collect();
            let scale = sys.scale();
            let ts = res.t.clone();
            let mut idx = 0;
            let (u, du) = split_states(&res.y, n, dim, &x, |row, out| {
                sys.f(ts[idx], row, out);
                idx += 1;
                for v in out.iter_mut() {
                    *v /= scale;
                }
            });
            Ok(BvpSolution {
                kind,
                formulation: Formulation::FullProjected,
                delta: problem.delta,
                a: res.y[dim + 1],
                mu: res.y[dim + 2],
                length: problem.length,
                x,
                u,
                du,
                newton_iters: res.iterations,
                max_residual: res.max_defect,
                bc_residual: res.bc_residual,
                far_field_check: 0.0,
            })
        }
    }
}

fn split_states<F: FnMut(&[f64], &mut [f64])>(y: &[f64], n: usize, dim: usize, x: &[f64], mut f: F) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut u = Vec::with_capacity(x.len());
    let mut du = Vec::with_capacity(x.len());
    let mut buf = vec![0.0; n];
    for i in 0..x.len() {
        let row = &y[i * n..(i + 1) * n];
        f(row, &mut buf);
        u.push(row[..dim].to_vec());
        du.push(buf[..dim].to_vec());
    }
    (u, du)
}

/// Whole front on `[-L, L]`. A half solution is completed by the
/// reversibility, `U(x) = R U(-x)` for `x > 0`; a full solution is returned
/// as is.
pub fn reflect(solution: &BvpSolution) -> HermiteProfile {
    let left = solution.profile();
    if solution.formulation == Formulation::FullProjected {
        return left;
    }
    let right = left.reversed();
    let mut out = left;
    for i in 1..right.x.len() {
        out.x.push(right.x[i]);
        out.u.push(right.u[i].clone());
        out.du.push(right.du[i].clone());
    }
    out
}

/// Continues a half-domain solution of `het_k` through the `delta`
/// values of `schedule`, with a secant predictor and step halving on
/// failure. `length = None` re-derives the half length at each step.
pub fn continue_in_delta(
    start: &BvpSolution,
    k: u32,
    schedule: &[f64],
    length: Option<f64>,
    config: &BvpConfig,
) -> Result<Vec<BvpSolution>, BvpError> {
    match continue_partial(start, k, schedule, length, config) {
        (out, None) => Ok(out),
        (_, Some(e)) => Err(e),
    }
}

/// Like [`continue_in_delta`] but keeps the solutions reached before a
/// failure.
pub fn continue_partial(
    start: &BvpSolution,
    k: u32,
    schedule: &[f64],
    length: Option<f64>,
    config: &BvpConfig,
) -> (Vec<BvpSolution>, Option<BvpError>) {
    if start.formulation != Formulation::HalfSymmetric {
        return (Vec::new(), Some(BvpError::InvalidProblem("continuation runs on half-domain solutions".into())));
    }
    const MAX_HALVINGS: u32 = 10;
    let mut path: Vec<BvpSolution> = vec![start.clone()];
    let mut out = Vec::with_capacity(schedule.len());
    for &target in schedule {
        let mut goal = target;
        let mut halvings = 0;
        loop {
            match continuation_step(&path, k, goal, length, config) {
                Ok(sol) => {
                    path.push(sol);
                    if goal == target {
                        out.push(path.last().unwrap().clone());
                        break;
                    }
                    goal = target;
                }
                Err(_) if halvings < MAX_HALVINGS => {
                    halvings += 1;
                    let from = path.last().unwrap().delta;
                    goal = if from > 0.0 && goal > 0.0 { (from * goal).sqrt() } else { 0.5 * (from + goal) };
                }
                Err(_) => {
                    let reached = out.len();
                    return (out, Some(BvpError::ContinuationStalled { delta: goal, reached }));
                }
            }
            if path.len() > 2 {
                path.drain(..path.len() - 2);
            }
        }
    }
    (out, None)
}

fn continuation_step(path: &[BvpSolution], k: u32, delta: f64, length: Option<f64>, config: &BvpConfig) -> Result<BvpSolution, BvpError> {
    let last = path.last().unwrap();
    let mut predicted = last.clone();
    if let [prev, .., _] = path {
        if prev.delta != last.delta {
            let theta = (delta - last.delta) / (last.delta - prev.delta);
            predicted.a = last.a + theta * (last.a - prev.a);
            let pp = prev.profile();
            for (x, u) in predicted.x.iter().zip(predicted.u.iter_mut()) {
                if *x >= prev.x[0] {
                    let old = pp.eval(*x).0;
                    for (c, v) in u.iter_mut().enumerate() {
                        *v += theta * (*v - old[c]);
                    }
                }
            }
        }
    }
    if !(predicted.a > 0.0) {
        predicted.a = last.a;
    }
    let length = match length {
        Some(l) => l,
        None => default_length(last.kind, k, delta, predicted.a)?,
    };
    let guess = predicted.remap(length);
    let problem = build_half_problem(last.kind, delta, length, predicted.a)?.with_guess(guess);
    solve(&problem, config)
}

/// `het_k` at `delta` without a user guess.
///
/// The tanh train is solved at a moderate start value and continued to
/// `delta`. Very small `delta` is avoided as a start because the kinks
/// interact only through exponentially small tails there, which shrinks
/// Newton's basin. HCCH multi-hump fronts turn monotone as `delta` grows
/// and a direct solve there may land on another branch, so for `k > 0`
/// they are always continued from `delta = 1e-3` where the humps are
/// pronounced.
pub fn auto_solve(kind: ModelKind, k: u32, delta: f64, config: &BvpConfig) -> Result<BvpSolution, BvpError> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(BvpError::InvalidProblem(format!("automatic guesses need delta > 0, got {delta}")));
    }
    let direct = |d: f64| -> Result<BvpSolution, BvpError> {
        let pred = asymptotics::predict(kind, k, d)?;
        let a0 = pred.a_pred.clamp(0.3, 1.0);
        let spacing = pred.width_pred.unwrap_or(10.0);
        let length = default_length(kind, k, d, a0)?;
        let guess = initial_guess(kind, k, spacing, length)?;
        let sol = solve(&build_half_problem(kind, d, length, a0)?.with_guess(guess), config)?;
        let zeros = reflect(&sol).zeros(0).len();
        if zeros != 2 * k as usize + 1 {
            return Err(BvpError::InvalidProblem(format!("tanh start converged to a front with {zeros} zeros")));
        }
        Ok(sol)
    };
    let hcch_humps = kind == ModelKind::Hcch && k > 0;
    let mut last_err = None;
    if !(hcch_humps && delta > 1e-3) {
        match direct(delta) {
            Ok(sol) => return Ok(sol),
            Err(e) => last_err = Some(e),
        }
    }
    for start in [1e-3, 3e-3, 3e-4, 1e-2, 1e-4] {
        if start == delta || (hcch_humps && start > 1e-3 && delta > 1e-3) {
            continue;
        }
        let first = match direct(start) {
            Ok(s) => s,
            Err(e) => {
                last_err = Some(e);
                continue;
            }
        };
        match continue_in_delta(&first, k, &log_schedule(start, delta), None, config) {
            Ok(mut path) => return Ok(path.pop().unwrap()),
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.unwrap())
}

/// Geometric steps of at most a factor 10^(1/20) from `from` to `to`,
/// ending exactly at `to`.
pub fn log_schedule(from: f64, to: f64) -> Vec<f64> {
    let steps = ((to / from).ln().abs() / (10f64.ln() / 20.0)).ceil().max(1.0) as usize;
    let mut s: Vec<f64> = (1..steps).map(|i| from * (to / from).powf(i as f64 / steps as f64)).collect();
    s.push(to);
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::SQRT_2;

    fn kink_mesh(length: f64, m: usize) -> Mesh {
        let nodes: Vec<f64> = (0..=m).map(|i| i as f64 / m as f64).collect();
        let states = nodes
            .iter()
            .map(|t| {
                let x = length * (t - 1.0);
                let th = (x / SQRT_2).tanh();
                let s2 = 1.0 - th * th;
                vec![-th, -s2 / SQRT_2, th * s2]
            })
            .collect();
        Mesh { nodes, states }
    }

    #[test]
    fn exact_kink_is_a_fixed_point() {
        let problem = build_half_problem(ModelKind::Cch, 0.0, 20.0, 1.0).unwrap().with_fixed_a(1.0).with_guess(kink_mesh(20.0, 2000));
        let sol = solve(&problem, &BvpConfig::default()).unwrap();
        assert!(sol.newton_iters <= 3, "{} iterations", sol.newton_iters);
        for (x, u) in sol.x.iter().zip(&sol.u) {
            assert!((u[0] + (x / SQRT_2).tanh()).abs() < 1e-8, "x={x}");
        }
        assert!(sol.max_residual < 1e-9);
    }

    #[test]
    fn guess_satisfies_symmetric_section() {
        for kind in [ModelKind::Cch, ModelKind::Hcch] {
            let g = initial_guess(kind, 2, 5.0, 40.0).unwrap();
            let end = g.states.last().unwrap();
            assert!(end[0].abs() < 1e-15 && end[2].abs() < 1e-15);
            if kind == ModelKind::Hcch {
                assert!(end[4].abs() < 1e-14);
            }
            assert!((g.states[0][0] - 1.0).abs() < 1e-12);
        }
        assert!(initial_guess(ModelKind::Cch, 1, 10.0, 20.0).is_err());
    }

    #[test]
    fn cch_het0_follows_exact_line() {
        // het_0 has A = 1 - delta / sqrt 2 exactly.
        let delta = 0.05;
        let sol = auto_solve(ModelKind::Cch, 0, delta, &BvpConfig::default()).unwrap();
        assert!((sol.a - (1.0 - delta / SQRT_2)).abs() < 1e-9, "A = {}", sol.a);
    }

    #[test]
    fn half_and_full_agree_and_reflect() {
        let cfg = BvpConfig::default();
        let half = auto_solve(ModelKind::Cch, 1, 0.05, &cfg).unwrap();
        let whole = reflect(&half);
        // Reflection symmetry U(-x) = R U(x).
        for &x in &[0.7, 3.1, 9.0] {
            let (p, _) = whole.eval(x);
            let (m, _) = whole.eval(-x);
            let r = crate::systems::reverse(&m);
            for c in 0..3 {
                assert!((p[c] - r[c]).abs() < 1e-9, "x={x} c={c}");
            }
        }
        let full = solve(&build_full_problem(ModelKind::Cch, 0.05, whole, half.length, half.a).unwrap(), &cfg).unwrap();
        assert!((full.a - half.a).abs() < 1e-7, "half {} full {}", half.a, full.a);
        assert!(full.mu.abs() < 1e-8, "mu = {}", full.mu);
    }

    #[test]
    fn missing_guess_and_bad_config() {
        let p = build_half_problem(ModelKind::Cch, 0.05, 30.0, 0.9).unwrap();
        assert_eq!(solve(&p, &BvpConfig::default()).unwrap_err(), BvpError::MissingGuess);
        let cfg = BvpConfig { tol: 0.0, ..BvpConfig::default() };
        assert!(matches!(solve(&p, &cfg), Err(BvpError::InvalidProblem(_))));
        assert!(build_half_problem(ModelKind::Cch, 0.05, -1.0, 0.9).is_err());
    }
}
