//! Zero-crossing distances, scaling-law fits and numeric-vs-asymptotic
//! comparison reports.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asymptotics::AsymptoticPrediction;
use crate::bvp::{reflect, BvpSolution};
use crate::profile::{HermiteProfile, ProfileError};
use crate::shoot::BranchPoint;
use crate::systems::{DerivativeSamples, ModelKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("profile has {0} zero crossings, at least two needed")]
    FewerThanTwoCrossings(usize),
    #[error("fit needs at least {needed} rows, got {got}")]
    InsufficientRows { needed: usize, got: usize },
    #[error("table mixes several (kind, k) families")]
    MixedFamilies,
    #[error("degenerate fit: {0}")]
    Degenerate(String),
    #[error("no prediction matches the table's (kind, k, delta) rows")]
    MismatchedFamilies,
    #[error("duplicate row for delta = {delta}, k = {k}")]
    DuplicateRow { delta: f64, k: u32 },
    #[error("invalid profile: {0}")]
    Profile(ProfileError),
}

impl From<ProfileError> for AnalysisError {
    fn from(e: ProfileError) -> Self {
        match e {
            ProfileError::FewerThanTwoCrossings(n) => AnalysisError::FewerThanTwoCrossings(n),
            other => AnalysisError::Profile(other),
        }
    }
}

/// Gaps between consecutive zeros of `U1`, polished on the cubic
/// interpolant.
pub fn root_distances(profile: &HermiteProfile) -> Result<Vec<f64>, AnalysisError> {
    Ok(profile.root_distances()?)
}

/// Hermite profile through samples that carry at least `c` and `c'`.
pub fn profile_from_samples(samples: &DerivativeSamples) -> Result<HermiteProfile, AnalysisError> {
    if samples.values.iter().any(|r| r.len() < 2) {
        return Err(AnalysisError::Profile(ProfileError::Ragged { row: 0, expected: 2, got: 1 }));
    }
    let u = samples.values.iter().map(|r| vec![r[0]]).collect();
    let du = samples.values.iter().map(|r| vec![r[1]]).collect();
    Ok(HermiteProfile::new(samples.x.clone(), u, du)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Shoot,
    Bvp,
}

impl Source {
    pub fn name(self) -> &'static str {
        match self {
            Source::Shoot => "shoot",
            Source::Bvp => "bvp",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchRow {
    pub delta: f64,
    pub a: f64,
    pub k: u32,
    pub kind: ModelKind,
    pub source: Source,
    /// Distance-function value for shooting rows; `NaN` when not measured.
    pub d_min: f64,
    pub root_distances: Vec<f64>,
}

impl From<&BranchPoint> for BranchRow {
    fn from(p: &BranchPoint) -> Self {
        BranchRow {
            delta: p.delta,
            a: p.a,
            k: p.k,
            kind: p.kind,
            source: Source::Shoot,
            d_min: p.d_min,
            root_distances: p.root_distances.clone(),
        }
    }
}

impl BranchRow {
    /// Row for a half-domain or full BVP solution of `het_k`. `d_min` holds
    /// the boundary-condition residual.
    pub fn from_bvp(solution: &BvpSolution, k: u32) -> Self {
        BranchRow {
            delta: solution.delta,
            a: solution.a,
            k,
            kind: solution.kind,
            source: Source::Bvp,
            d_min: solution.bc_residual,
            // Gaps between whatever zeros exist; merged kinks leave fewer than 2k+1.
            root_distances: reflect(solution).zeros(0).windows(2).map(|w| w[1] - w[0]).collect(),
        }
    }
}

/// Rows sorted by `delta` (ties by `k`, then source) with no duplicate
/// `(delta, k, source)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BranchTable {
    rows: Vec<BranchRow>,
}

impl BranchTable {
    pub fn new(mut rows: Vec<BranchRow>) -> Result<Self, AnalysisError> {
        rows.sort_by(|a, b| a.delta.total_cmp(&b.delta).then(a.k.cmp(&b.k)).then(a.source.name().cmp(b.source.name())));
        for w in rows.windows(2) {
            if w[0].delta == w[1].delta && w[0].k == w[1].k && w[0].source == w[1].source {
                return Err(AnalysisError::DuplicateRow { delta: w[0].delta, k: w[0].k });
            }
        }
        Ok(BranchTable { rows })
    }

    pub fn rows(&self) -> &[BranchRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn into_rows(self) -> Vec<BranchRow> {
        self.rows
    }

    /// Rows with `lo <= delta <= hi`.
    pub fn delta_range(&self, lo: f64, hi: f64) -> BranchTable {
        BranchTable { rows: self.rows.iter().filter(|r| r.delta >= lo && r.delta <= hi).cloned().collect() }
    }

    /// The single `(kind, k)` of the table.
    pub fn family(&self) -> Result<(ModelKind, u32), AnalysisError> {
        let first = self.rows.first().ok_or(AnalysisError::InsufficientRows { needed: 1, got: 0 })?;
        if self.rows.iter().any(|r| r.kind != first.kind || r.k != first.k) {
            return Err(AnalysisError::MixedFamilies);
        }
        Ok((first.kind, first.k))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitModel {
    /// `A = 1 - mu1 delta`; parameters `[mu1]`.
    LinearA,
    /// `K = eta1 ln(eta2 delta)`; parameters `[eta1, eta2]`.
    LogWidth,
    /// `A = 1 + A1 delta^(1/3)`; parameters `[A1]`.
    CubeRootA,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: FitModel,
    pub parameters: Vec<f64>,
    pub rms_residual: f64,
    pub n_points: usize,
}

const MIN_ROWS: usize = 3;

fn checked_rows(table: &BranchTable) -> Result<&[BranchRow], AnalysisError> {
    if table.len() < MIN_ROWS {
        return Err(AnalysisError::InsufficientRows { needed: MIN_ROWS, got: table.len() });
    }
    table.family()?;
    Ok(table.rows())
}

fn rms(res: impl Iterator<Item = f64>, n: usize) -> f64 {
    (res.map(|r| r * r).sum::<f64>() / n as f64).sqrt()
}

/// Least squares through the origin of `y = c x`.
fn through_origin(pairs: &[(f64, f64)]) -> Result<f64, AnalysisError> {
    let sxx: f64 = pairs.iter().map(|p| p.0 * p.0).sum();
    if !(sxx > 0.0) {
        return Err(AnalysisError::Degenerate("all abscissae vanish".into()));
    }
    Ok(pairs.iter().map(|p| p.0 * p.1).sum::<f64>() / sxx)
}

/// `mu1` minimising `sum (1 - mu1 delta - A)^2`.
pub fn fit_linear_a(table: &BranchTable) -> Result<FitResult, AnalysisError> {
    let rows = checked_rows(table)?;
    let pairs: Vec<(f64, f64)> = rows.iter().map(|r| (r.delta, 1.0 - r.a)).collect();
    let mu = through_origin(&pairs)?;
    let res = rms(pairs.iter().map(|p| p.1 - mu * p.0), pairs.len());
    Ok(FitResult { model: FitModel::LinearA, parameters: vec![mu], rms_residual: res, n_points: pairs.len() })
}

/// `A1` minimising `sum (1 + A1 delta^(1/3) - A)^2`.
pub fn fit_cube_root_a(table: &BranchTable) -> Result<FitResult, AnalysisError> {
    let rows = checked_rows(table)?;
    let pairs: Vec<(f64, f64)> = rows.iter().map(|r| (r.delta.cbrt(), r.a - 1.0)).collect();
    let a1 = through_origin(&pairs)?;
    let res = rms(pairs.iter().map(|p| p.1 - a1 * p.0), pairs.len());
    Ok(FitResult { model: FitModel::CubeRootA, parameters: vec![a1], rms_residual: res, n_points: pairs.len() })
}

/// `K = a ln delta + b` on the first gap, unweighted in `ln delta`, then
/// `eta1 = a`, `eta2 = exp(b / a)`.
pub fn fit_log_width(table: &BranchTable) -> Result<FitResult, AnalysisError> {
    let rows = checked_rows(table)?;
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| r.root_distances.first().map(|&k| (r.delta.ln(), k)))
        .collect();
    if pts.len() < MIN_ROWS {
        return Err(AnalysisError::InsufficientRows { needed: MIN_ROWS, got: pts.len() });
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if !(sxx > 0.0) {
        return Err(AnalysisError::Degenerate("all rows share one delta".into()));
    }
    let a = sxy / sxx;
    if a == 0.0 || !a.is_finite() {
        return Err(AnalysisError::Degenerate("zero slope in ln(delta)".into()));
    }
    let b = my - a * mx;
    let res = rms(pts.iter().map(|p| p.1 - (a * p.0 + b)), pts.len());
    Ok(FitResult { model: FitModel::LogWidth, parameters: vec![a, (b / a).exp()], rms_residual: res, n_points: pts.len() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub delta: f64,
    pub a_num: f64,
    pub a_pred: f64,
    pub a_abs_err: f64,
    pub a_rel_err: f64,
    pub width_num: Option<f64>,
    pub width_pred: Option<f64>,
    pub width_abs_err: Option<f64>,
    pub width_rel_err: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: u32,
    pub kind: ModelKind,
    pub k: u32,
    pub rows: Vec<ReportRow>,
    pub fits: Vec<FitResult>,
}

/// Joins table rows with predictions of the same `(kind, k, delta)` and
/// appends the fits that apply to the kind.
pub fn compare_report(table: &BranchTable, predictions: &[AsymptoticPrediction]) -> Result<Report, AnalysisError> {
    let (kind, k) = table.family()?;
    let mut rows = Vec::new();
    for r in table.rows() {
        let Some(p) = predictions
            .iter()
            .find(|p| p.kind == kind && p.k == k && (p.delta - r.delta).abs() <= 1e-12 * r.delta.abs())
        else {
            continue;
        };
        let width_num = r.root_distances.first().copied();
        let (width_abs_err, width_rel_err) = match (width_num, p.width_pred) {
            (Some(w), Some(wp)) => (Some((w - wp).abs()), Some((w - wp).abs() / w.abs())),
            _ => (None, None),
        };
        rows.push(ReportRow {
            delta: r.delta,
            a_num: r.a,
            a_pred: p.a_pred,
            a_abs_err: (r.a - p.a_pred).abs(),
            a_rel_err: (r.a - p.a_pred).abs() / r.a.abs(),
            width_num,
            width_pred: p.width_pred,
            width_abs_err,
            width_rel_err,
        });
    }
    if rows.is_empty() {
        return Err(AnalysisError::MismatchedFamilies);
    }
    let fits = match kind {
        ModelKind::Cch => [fit_linear_a(table), fit_log_width(table)].into_iter().flatten().collect(),
        ModelKind::Hcch => [fit_cube_root_a(table), fit_log_width(table)].into_iter().flatten().collect(),
    };
    Ok(Report { schema: 1, kind, k, rows, fits })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.6e}"))
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    /// Fixed-width table followed by the fit summaries.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} het_{}", self.kind, self.k);
        let _ = writeln!(
            s,
            "{:>13} {:>13} {:>13} {:>13} {:>13} {:>13} {:>13}",
            "delta", "A_num", "A_pred", "A_rel_err", "width_num", "width_pred", "width_rel_err"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:>13.6e} {:>13.10} {:>13.10} {:>13.6e} {:>13} {:>13} {:>13}",
                r.delta,
                r.a_num,
                r.a_pred,
                r.a_rel_err,
                opt(r.width_num),
                opt(r.width_pred),
                opt(r.width_rel_err)
            );
        }
        for f in &self.fits {
            let params = f.parameters.iter().map(|p| format!("{p:.6}")).collect::<Vec<_>>().join(", ");
            let _ = writeln!(s, "fit {:?}: [{}] rms {:.3e} over {} rows", f.model, params, f.rms_residual, f.n_points);
        }
        s
    }
}
