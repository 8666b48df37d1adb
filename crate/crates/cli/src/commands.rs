use std::collections::BTreeMap;
use std::path::Path;

use heterokink::analysis::{
    compare_report, fit_cube_root_a, fit_linear_a, fit_log_width, AnalysisError, BranchRow, BranchTable, FitModel,
    Report, Source,
};
use heterokink::asymptotics::{cch_a_pred, predict};
use heterokink::bvp::{
    auto_solve, build_full_problem, build_half_problem, continue_partial, log_schedule, reflect, solve, BvpConfig,
    BvpError, BvpSolution, Formulation, Mesh,
};
use heterokink::io::{
    branch_from_csv, branch_to_csv, distance_to_csv, predictions_to_csv, profile_from_csv, profile_to_csv,
    BranchFile, ProfileMeta, SCHEMA,
};
use heterokink::profile::HermiteProfile;
use heterokink::shoot::{relocate, scan_and_refine, trace_branch, BranchPoint, ShootError};
use heterokink::systems::equilibrium_analysis;
use heterokink::{EquilibriumSign, Model, ModelKind, ModelParams, TOOL_VERSION};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::output::{emit, read_text, usage, write_atomic, CliError};
use crate::{AsymArgs, BvpArgs, EigArgs, FitArgs, FormulationArg, Method, ScanArgs, TraceArgs};

fn check_delta(delta: f64) -> Result<(), CliError> {
    ModelParams::new(1.0, delta).map(|_| ()).map_err(usage)
}

pub fn eig(args: &EigArgs) -> Result<(), CliError> {
    let params = ModelParams::new(args.a, args.delta).map_err(usage)?;
    let mut eq = Vec::new();
    for sign in [EquilibriumSign::Plus, EquilibriumSign::Minus] {
        let info = equilibrium_analysis(args.kind, params, sign)
            .map_err(|e| CliError::numerical(e.to_string(), json!({"schema": SCHEMA, "command": "eig"}), None))?;
        eq.push(info);
    }
    let doc = json!({
        "schema": SCHEMA,
        "kind": args.kind,
        "A": args.a,
        "delta": args.delta,
        "equilibria": eq,
    });
    emit(args.out.as_deref(), &format!("{}\n", serde_json::to_string_pretty(&doc).expect("serialisable")))
}

/// One row per `k`; a repeated `k` keeps the smallest distance.
fn unique_rows(points: &[BranchPoint]) -> (Vec<BranchRow>, usize) {
    let mut best: BTreeMap<u32, &BranchPoint> = BTreeMap::new();
    for p in points {
        best.entry(p.k).and_modify(|q| {
            if p.d_min < q.d_min {
                *q = p;
            }
        }).or_insert(p);
    }
    let dropped = points.len() - best.len();
    (best.values().map(|p| BranchRow::from(*p)).collect(), dropped)
}

pub fn scan(args: &ScanArgs, cfg: RunConfig) -> Result<(), CliError> {
    check_delta(args.delta)?;
    let mut sc = cfg.shoot;
    if let Some(v) = args.a_min {
        sc.a_min = v;
    }
    if let Some(v) = args.a_max {
        sc.a_max = v;
    }
    if let Some(v) = args.a_step {
        sc.a_step = v;
    }
    if let Some(v) = args.accept_tol {
        sc.accept_tol = v;
    }
    sc.validate().map_err(usage)?;
    let res = scan_and_refine(args.kind, args.delta, &sc).map_err(|e| {
        CliError::numerical(
            e.to_string(),
            json!({"schema": SCHEMA, "command": "scan", "kind": args.kind, "delta": args.delta}),
            Some(&args.out),
        )
    })?;
    let (rows, dropped) = unique_rows(&res.points);
    if dropped > 0 {
        eprintln!("note: {dropped} further roots share a k with a better one and were not written");
    }
    let table = BranchTable::new(rows).map_err(usage)?;
    let text = branch_to_csv(args.kind, Source::Shoot, &table).map_err(usage)?;
    write_atomic(&args.out, text.as_bytes())?;
    if let Some(p) = &args.distance_out {
        write_atomic(p, distance_to_csv(args.kind, args.delta, &res.profile).as_bytes())?;
    }
    println!("{} roots at delta = {}", table.len(), args.delta);
    for r in table.rows() {
        println!("  het_{:<3} A = {:.12}  d_min = {:.3e}", r.k, r.a, r.d_min);
    }
    Ok(())
}

fn schedule(args: &TraceArgs, cfg: &RunConfig) -> Result<Vec<f64>, CliError> {
    let s = match (&args.deltas, args.delta_from, args.delta_to) {
        (Some(d), _, _) => d.clone(),
        (None, Some(from), Some(to)) => {
            let n = args.steps.unwrap_or(cfg.trace_steps);
            if n < 2 {
                return Err(usage("--steps must be at least 2"));
            }
            if !(from > 0.0 && to > 0.0) {
                return Err(usage("log-spaced schedules need positive deltas"));
            }
            let mut s: Vec<f64> = (0..n).map(|i| from * (to / from).powf(i as f64 / (n - 1) as f64)).collect();
            s[0] = from;
            s[n - 1] = to;
            s
        }
        _ => return Err(usage("give --deltas or --delta-from/--delta-to")),
    };
    if s.is_empty() || s.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
        return Err(usage("schedule deltas must be positive and finite"));
    }
    for (i, d) in s.iter().enumerate() {
        if s[..i].contains(d) {
            return Err(usage(format!("delta {d} repeats in the schedule")));
        }
    }
    Ok(s)
}

fn existing_rows(args: &TraceArgs, source: Source) -> Result<Vec<BranchRow>, CliError> {
    if !args.out.exists() {
        return Ok(Vec::new());
    }
    let file = branch_from_csv(&read_text(&args.out)?).map_err(|e| usage(format!("{}: {e}", args.out.display())))?;
    if file.kind != args.kind || file.source != source {
        return Err(usage(format!(
            "{} holds {} {} rows, cannot resume a {} {} trace",
            args.out.display(),
            file.kind,
            file.source.name(),
            args.kind,
            source.name()
        )));
    }
    if file.table.rows().iter().any(|r| r.k != args.k) {
        return Err(usage(format!("{} holds rows of another k", args.out.display())));
    }
    Ok(file.table.into_rows())
}

fn save_branch(args: &TraceArgs, source: Source, rows: Vec<BranchRow>) -> Result<usize, CliError> {
    let table = BranchTable::new(rows).map_err(usage)?;
    write_atomic(&args.out, branch_to_csv(args.kind, source, &table).map_err(usage)?.as_bytes())?;
    Ok(table.len())
}

pub fn trace(args: &TraceArgs, cfg: RunConfig) -> Result<(), CliError> {
    cfg.validate().map_err(usage)?;
    let method = args.method.unwrap_or(match args.kind {
        ModelKind::Cch => Method::Shoot,
        ModelKind::Hcch => Method::Bvp,
    });
    if method == Method::Shoot && args.kind == ModelKind::Hcch {
        return Err(usage("HCCH branches are traced with --method bvp"));
    }
    if method == Method::Bvp && (args.from_scan.is_some() || args.start_a.is_some()) {
        return Err(usage("--from-scan and --start-a seed shooting traces only"));
    }
    let sched = schedule(args, &cfg)?;
    match method {
        Method::Shoot => trace_shoot(args, &cfg, &sched),
        Method::Bvp => trace_bvp(args, &cfg, &sched),
    }
}

fn trace_failure(args: &TraceArgs, e: impl ToString, written: usize) -> CliError {
    CliError::numerical(
        e.to_string(),
        json!({
            "schema": SCHEMA,
            "command": "trace",
            "kind": args.kind,
            "k": args.k,
            "rows_written": written,
            "error": e.to_string(),
        }),
        Some(&args.out),
    )
}

fn trace_shoot(args: &TraceArgs, cfg: &RunConfig, sched: &[f64]) -> Result<(), CliError> {
    let mut rows = existing_rows(args, Source::Shoot)?;
    let done = |d: f64| rows.iter().any(|r| r.delta == d);
    let Some(j) = sched.iter().position(|&d| !done(d)) else {
        let n = save_branch(args, Source::Shoot, rows)?;
        println!("nothing to do: {n} rows already traced");
        return Ok(());
    };
    let (start, remaining, start_is_new) = if j > 0 {
        // Resume from the last traced point before the first gap.
        let remaining: Vec<f64> = sched[j..].iter().copied().filter(|&d| !done(d)).collect();
        let row = rows.iter().find(|r| r.delta == sched[j - 1]).expect("resume row present");
        let start = relocate(args.kind, args.k, row.delta, row.a, cfg.trace_window, &cfg.shoot)
            .map_err(|e| trace_failure(args, format!("could not re-locate the row at delta = {}: {e}", row.delta), 0))?;
        (start, remaining, false)
    } else {
        let (delta, a_guess) = if let Some(p) = &args.from_scan {
            let file = branch_from_csv(&read_text(p)?).map_err(|e| usage(format!("{}: {e}", p.display())))?;
            let row = file
                .table
                .rows()
                .iter()
                .filter(|r| r.k == args.k)
                .min_by(|a, b| (a.delta / sched[0]).ln().abs().total_cmp(&(b.delta / sched[0]).ln().abs()))
                .ok_or_else(|| usage(format!("{} has no het_{} row", p.display(), args.k)))?;
            (row.delta, row.a)
        } else {
            (sched[0], args.start_a.unwrap_or_else(|| cch_a_pred(args.k, sched[0])))
        };
        let start = relocate(args.kind, args.k, delta, a_guess, cfg.trace_window, &cfg.shoot)
            .map_err(|e| trace_failure(args, format!("no het_{} root near A = {a_guess} at delta = {delta}: {e}", args.k), 0))?;
        (start, sched.to_vec(), true)
    };
    if start_is_new && !done(start.delta) {
        rows.push(BranchRow::from(&start));
    }
    let (points, failure) = match trace_branch(args.kind, args.k, &start, &remaining, &cfg.shoot) {
        Ok(p) => (p, None),
        Err(ShootError::BranchLost { delta, accepted }) => {
            (accepted, Some(format!("branch lost near delta = {delta}")))
        }
        Err(e) => (Vec::new(), Some(e.to_string())),
    };
    rows.extend(points.iter().filter(|p| p.delta != start.delta).map(BranchRow::from));
    let n = save_branch(args, Source::Shoot, rows)?;
    match failure {
        Some(m) => Err(trace_failure(args, m, n)),
        None => {
            println!("{n} rows in {}", args.out.display());
            Ok(())
        }
    }
}

fn trace_bvp(args: &TraceArgs, cfg: &RunConfig, sched: &[f64]) -> Result<(), CliError> {
    let mut rows = existing_rows(args, Source::Bvp)?;
    let done = |d: f64| rows.iter().any(|r| r.delta == d);
    let Some(j) = sched.iter().position(|&d| !done(d)) else {
        let n = save_branch(args, Source::Bvp, rows)?;
        println!("nothing to do: {n} rows already traced");
        return Ok(());
    };
    let first = sched[j.saturating_sub(1)];
    let remaining: Vec<f64> = sched[j..].iter().copied().filter(|&d| !done(d) && d != first).collect();
    let start = auto_solve(args.kind, args.k, first, &cfg.bvp)
        .map_err(|e| trace_failure(args, format!("no het_{} solution at delta = {first}: {e}", args.k), 0))?;
    if !done(first) {
        rows.push(BranchRow::from_bvp(&start, args.k));
    }
    // Fine geometric steps between schedule points; only the points are kept.
    let mut fine = Vec::new();
    let mut prev = first;
    for &d in &remaining {
        fine.extend(log_schedule(prev, d));
        prev = d;
    }
    let (path, err) = continue_partial(&start, args.k, &fine, None, &cfg.bvp);
    for s in path.iter().filter(|s| remaining.contains(&s.delta)) {
        rows.push(BranchRow::from_bvp(s, args.k));
    }
    let n = save_branch(args, Source::Bvp, rows)?;
    match err {
        Some(e) => Err(trace_failure(args, e, n)),
        None => {
            println!("{n} rows in {}", args.out.display());
            Ok(())
        }
    }
}

/// Guess mesh on `[-L, 0]` from the `x <= 0` part of a stored profile.
fn half_guess(profile: &HermiteProfile) -> Result<(f64, Mesh), CliError> {
    let length = -profile.x_min();
    if !(length > 0.0 && profile.x_max() >= 0.0) {
        return Err(usage("a half-domain guess must cover x = 0 and some x < 0"));
    }
    let mut nodes = Vec::new();
    let mut states = Vec::new();
    for (x, u) in profile.x.iter().zip(&profile.u) {
        if *x < -1e-12 * length {
            nodes.push(1.0 + x / length);
            states.push(u.clone());
        }
    }
    nodes[0] = 0.0;
    nodes.push(1.0);
    states.push(profile.eval(0.0).0);
    Ok((length, Mesh { nodes, states }))
}

fn bvp_from_file(args: &BvpArgs, path: &Path, config: &BvpConfig) -> Result<Result<BvpSolution, BvpError>, CliError> {
    let table = profile_from_csv(&read_text(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    if table.kind != args.kind {
        return Err(usage(format!("{} holds a {} profile", path.display(), table.kind)));
    }
    let sidecar_a = || -> Option<f64> {
        let text = std::fs::read_to_string(path.with_extension("json")).ok()?;
        serde_json::from_str::<ProfileMeta>(&text).ok().map(|m| m.a)
    };
    let a0 = match args.a0.or_else(sidecar_a) {
        Some(a) => a,
        None => predict(args.kind, args.k, args.delta).map_err(usage)?.a_pred,
    };
    let model = Model::new(args.kind, ModelParams::new(a0, args.delta).map_err(usage)?).map_err(usage)?;
    let profile = HermiteProfile::from_states(&model, table.x, table.u).map_err(usage)?;
    Ok(match args.formulation {
        FormulationArg::Half => {
            let (length, mesh) = half_guess(&profile)?;
            let problem = build_half_problem(args.kind, args.delta, length, a0).map_err(usage)?.with_guess(mesh);
            solve(&problem, config)
        }
        FormulationArg::Full => {
            let length = (-profile.x_min()).min(profile.x_max());
            if !(length > 0.0) {
                return Err(usage("a full-domain guess must cover both sides of x = 0"));
            }
            let problem = build_full_problem(args.kind, args.delta, profile, length, a0).map_err(usage)?;
            solve(&problem, config)
        }
    })
}

fn bvp_auto(args: &BvpArgs, config: &BvpConfig) -> Result<BvpSolution, BvpError> {
    let half = auto_solve(args.kind, args.k, args.delta, config)?;
    match args.formulation {
        FormulationArg::Half => Ok(half),
        FormulationArg::Full => {
            let problem = build_full_problem(args.kind, args.delta, reflect(&half), half.length, half.a)?;
            solve(&problem, config)
        }
    }
}

pub fn bvp(args: &BvpArgs, cfg: RunConfig) -> Result<(), CliError> {
    check_delta(args.delta)?;
    let mut config = cfg.bvp;
    if let Some(t) = args.tol {
        config.tol = t;
    }
    config.validate().map_err(usage)?;
    let result = match &args.guess {
        Some(p) => bvp_from_file(args, p, &config)?,
        None => {
            if !(args.delta > 0.0) {
                return Err(usage("--auto-guess needs delta > 0"));
            }
            bvp_auto(args, &config)
        }
    };
    let formulation = match args.formulation {
        FormulationArg::Half => "half",
        FormulationArg::Full => "full",
    };
    let sol = result.map_err(|e| {
        CliError::numerical(
            e.to_string(),
            json!({
                "schema": SCHEMA,
                "command": "bvp",
                "kind": args.kind,
                "k": args.k,
                "delta": args.delta,
                "formulation": formulation,
                "error": e.to_string(),
                "detail": format!("{e:?}"),
            }),
            Some(&args.out),
        )
    })?;
    debug_assert_eq!(sol.formulation == Formulation::FullProjected, args.formulation == FormulationArg::Full);
    let profile = reflect(&sol);
    let extra: BTreeMap<String, Value> = [
        ("formulation", json!(formulation)),
        ("sqrt_A", json!(sol.a.sqrt())),
        ("mu", json!(sol.mu)),
        ("newton_iters", json!(sol.newton_iters)),
        ("bc_residual", json!(sol.bc_residual)),
        ("far_field_check", json!(sol.far_field_check)),
        ("nodes", json!(sol.x.len())),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    let meta = ProfileMeta {
        schema: SCHEMA,
        kind: args.kind,
        k: Some(args.k),
        a: sol.a,
        delta: args.delta,
        length: sol.length,
        source: format!("bvp-{formulation}"),
        residual: sol.max_residual,
        tool_version: TOOL_VERSION.to_string(),
        extra,
    };
    let meta_text = format!("{}\n", serde_json::to_string_pretty(&meta).expect("serialisable"));
    write_atomic(&args.out, profile_to_csv(args.kind, &profile).as_bytes())?;
    write_atomic(&args.out.with_extension("json"), meta_text.as_bytes())?;
    print!("{meta_text}");
    Ok(())
}

pub fn asym(args: &AsymArgs) -> Result<(), CliError> {
    let preds = args
        .deltas
        .iter()
        .map(|&d| predict(args.kind, args.k, d).map_err(|e| usage(format!("delta = {d}: {e}"))))
        .collect::<Result<Vec<_>, _>>()?;
    emit(args.out.as_deref(), &predictions_to_csv(&preds))
}

fn analysis_err(path: &Path, e: AnalysisError) -> CliError {
    let message = format!("{}: {e}", path.display());
    match e {
        AnalysisError::Degenerate(_) => CliError::numerical(message, json!({"schema": SCHEMA, "command": "fit"}), None),
        _ => CliError::Usage(message),
    }
}

fn fits_for(file: &BranchFile, table: &BranchTable, path: &Path) -> Result<Report, CliError> {
    let (kind, k) = table.family().map_err(|e| analysis_err(path, e))?;
    let mut fits = vec![match kind {
        ModelKind::Cch => fit_linear_a(table),
        ModelKind::Hcch => fit_cube_root_a(table),
    }
    .map_err(|e| analysis_err(path, e))?];
    if k > 0 {
        fits.push(fit_log_width(table).map_err(|e| analysis_err(path, e))?);
    }
    debug_assert_eq!(kind, file.kind);
    Ok(Report { schema: SCHEMA, kind, k, rows: Vec::new(), fits })
}

pub fn fit(args: &FitArgs, cfg: RunConfig, compare: bool) -> Result<(), CliError> {
    let lo = args.delta_min.unwrap_or(cfg.fit_delta_min);
    let hi = args.delta_max.unwrap_or(cfg.fit_delta_max);
    if !(lo >= 0.0 && lo <= hi) {
        return Err(usage("fit range must satisfy 0 <= delta-min <= delta-max"));
    }
    let mut reports = Vec::new();
    for path in &args.branch {
        let file = branch_from_csv(&read_text(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        let table = file.table.delta_range(lo, hi);
        let report = if compare {
            let (kind, k) = table.family().map_err(|e| analysis_err(path, e))?;
            let preds = table
                .rows()
                .iter()
                .map(|r| predict(kind, k, r.delta))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| usage(format!("{}: {e}", path.display())))?;
            compare_report(&table, &preds).map_err(|e| analysis_err(path, e))?
        } else {
            fits_for(&file, &table, path)?
        };
        reports.push(report);
    }
    let mut text: Vec<String> = reports.iter().map(Report::to_text).collect();
    let a1: Vec<(u32, f64)> = reports
        .iter()
        .filter_map(|r| r.fits.iter().find(|f| f.model == FitModel::CubeRootA).map(|f| (r.k, f.parameters[0])))
        .collect();
    if a1.len() >= 2 {
        let base = a1[0].1;
        let ratios: Vec<String> = a1.iter().map(|(k, v)| format!("het_{k} {:.4}", v / base)).collect();
        text.push(format!("A1 ratios: {}\n", ratios.join(", ")));
    }
    print!("{}", text.join("\n"));
    if let Some(p) = &args.out {
        let doc = json!({"schema": SCHEMA, "reports": reports});
        write_atomic(p, format!("{}\n", serde_json::to_string_pretty(&doc).expect("serialisable")).as_bytes())?;
    }
    Ok(())
}
