//! Text formats: profile CSV with a JSON sidecar, branch CSV, distance
//! profile CSV and prediction CSV.
//!
//! Every CSV starts with a `# schema=1 ...` comment line carrying the table
//! metadata, then a header row. Reals are written with 17 significant
//! digits, so parsing a written table gives back the same bits.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{BranchRow, BranchTable, Source};
use crate::asymptotics::AsymptoticPrediction;
use crate::profile::HermiteProfile;
use crate::shoot::DistanceProfile;
use crate::systems::ModelKind;

pub const SCHEMA: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormatError {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("{0}")]
    Invalid(String),
}

fn parse_err(line: u64, message: impl Into<String>) -> FormatError {
    FormatError::Parse { line, message: message.into() }
}

/// 17 significant digits, enough for an exact round trip.
pub fn fmt_real(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

fn meta_line(pairs: &[(&str, String)]) -> String {
    let mut s = format!("# schema={SCHEMA}");
    for (k, v) in pairs {
        s.push(' ');
        s.push_str(k);
        s.push('=');
        s.push_str(v);
    }
    s.push('\n');
    s
}

/// Splits off and parses the leading metadata comment.
fn read_meta(text: &str) -> Result<(BTreeMap<String, String>, &str), FormatError> {
    let (first, rest) = text.split_once('\n').unwrap_or((text, ""));
    let body = first.trim().strip_prefix('#').ok_or_else(|| parse_err(1, "expected a '# schema=1 ...' line"))?;
    let mut map = BTreeMap::new();
    for tok in body.split_whitespace() {
        let (k, v) = tok.split_once('=').ok_or_else(|| parse_err(1, format!("bad metadata token '{tok}'")))?;
        map.insert(k.to_string(), v.to_string());
    }
    match map.get("schema").map(String::as_str) {
        Some("1") => Ok((map, rest)),
        Some(other) => Err(parse_err(1, format!("unsupported schema {other}"))),
        None => Err(parse_err(1, "missing schema")),
    }
}

fn meta_get<'a>(map: &'a BTreeMap<String, String>, key: &str) -> Result<&'a str, FormatError> {
    map.get(key).map(String::as_str).ok_or_else(|| parse_err(1, format!("missing metadata key '{key}'")))
}

fn reader(body: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(body.as_bytes())
}

/// Physical line of a record, counting the metadata line.
fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line() + 1)
}

fn csv_err(e: csv::Error) -> FormatError {
    let line = e.position().map_or(0, |p| p.line() + 1);
    parse_err(line, e.to_string())
}

fn real(rec: &csv::StringRecord, i: usize, name: &str) -> Result<f64, FormatError> {
    let cell = rec.get(i).ok_or_else(|| parse_err(line_of(rec), format!("missing column {name}")))?;
    cell.parse::<f64>().map_err(|_| parse_err(line_of(rec), format!("{name}: '{cell}' is not a number")))
}

pub fn profile_to_csv(kind: ModelKind, profile: &HermiteProfile) -> String {
    let mut s = meta_line(&[("kind", kind.name().to_string())]);
    s.push('x');
    for c in 1..=profile.dim() {
        s.push_str(&format!(",U{c}"));
    }
    s.push('\n');
    for (x, u) in profile.x.iter().zip(&profile.u) {
        s.push_str(&fmt_real(*x));
        for v in u {
            s.push(',');
            s.push_str(&fmt_real(*v));
        }
        s.push('\n');
    }
    s
}

/// A profile table: node positions and states.
#[derive(Clone, Debug, PartialEq)]
pub struct ProfileTable {
    pub kind: ModelKind,
    pub x: Vec<f64>,
    pub u: Vec<Vec<f64>>,
}

pub fn profile_from_csv(text: &str) -> Result<ProfileTable, FormatError> {
    let (meta, body) = read_meta(text)?;
    let kind: ModelKind = meta_get(&meta, "kind")?.parse().map_err(|_| parse_err(1, "unknown kind"))?;
    let dim = kind.dim();
    let mut rdr = reader(body);
    let header = rdr.headers().map_err(csv_err)?.clone();
    let want: Vec<String> = std::iter::once("x".to_string()).chain((1..=dim).map(|c| format!("U{c}"))).collect();
    if header.iter().collect::<Vec<_>>() != want.iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(parse_err(2, format!("header must be {}", want.join(","))));
    }
    let mut x = Vec::new();
    let mut u = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        if rec.len() != dim + 1 {
            return Err(parse_err(line_of(&rec), format!("expected {} columns, got {}", dim + 1, rec.len())));
        }
        let xi = real(&rec, 0, "x")?;
        if let Some(&prev) = x.last() {
            if !(xi > prev) {
                return Err(parse_err(line_of(&rec), "x must increase strictly"));
            }
        }
        x.push(xi);
        u.push((1..=dim).map(|c| real(&rec, c, &want[c])).collect::<Result<Vec<_>, _>>()?);
    }
    if x.len() < 2 {
        return Err(FormatError::Invalid("profile needs at least two rows".into()));
    }
    Ok(ProfileTable { kind, x, u })
}

/// JSON sidecar written next to a profile CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileMeta {
    pub schema: u32,
    pub kind: ModelKind,
    pub k: Option<u32>,
    #[serde(rename = "A")]
    pub a: f64,
    pub delta: f64,
    #[serde(rename = "L")]
    pub length: f64,
    pub source: String,
    pub residual: f64,
    pub tool_version: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, serde_json::Value>,
}

/// Branch table of one `kind` and `source`; an empty table still records
/// both.
pub fn branch_to_csv(kind: ModelKind, source: Source, table: &BranchTable) -> Result<String, FormatError> {
    let rows = table.rows();
    if rows.iter().any(|r| r.kind != kind || r.source != source) {
        return Err(FormatError::Invalid("a branch file holds one kind and one source".into()));
    }
    let gaps = rows.iter().map(|r| r.root_distances.len()).max().unwrap_or(0);
    let mut s = meta_line(&[("kind", kind.name().to_string()), ("source", source.name().to_string())]);
    s.push_str("delta,A,k,d_min");
    for g in 1..=gaps {
        s.push_str(&format!(",gap{g}"));
    }
    s.push('\n');
    for r in rows {
        s.push_str(&format!("{},{},{},{}", fmt_real(r.delta), fmt_real(r.a), r.k, fmt_real(r.d_min)));
        for g in 0..gaps {
            s.push(',');
            if let Some(v) = r.root_distances.get(g) {
                s.push_str(&fmt_real(*v));
            }
        }
        s.push('\n');
    }
    Ok(s)
}

/// A parsed branch CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct BranchFile {
    pub kind: ModelKind,
    pub source: Source,
    pub table: BranchTable,
}

pub fn branch_from_csv(text: &str) -> Result<BranchFile, FormatError> {
    let (meta, body) = read_meta(text)?;
    let kind: ModelKind = meta_get(&meta, "kind")?.parse().map_err(|_| parse_err(1, "unknown kind"))?;
    let source = match meta_get(&meta, "source")? {
        "shoot" => Source::Shoot,
        "bvp" => Source::Bvp,
        other => return Err(parse_err(1, format!("unknown source '{other}'"))),
    };
    let mut rdr = reader(body);
    let header = rdr.headers().map_err(csv_err)?.clone();
    let fixed = ["delta", "A", "k", "d_min"];
    if header.len() < 4 || header.iter().take(4).ne(fixed.iter().copied()) {
        return Err(parse_err(2, "header must start with delta,A,k,d_min"));
    }
    for (i, h) in header.iter().enumerate().skip(4) {
        if h != format!("gap{}", i - 3) {
            return Err(parse_err(2, format!("unexpected column '{h}'")));
        }
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        if rec.len() != header.len() {
            return Err(parse_err(line_of(&rec), format!("expected {} columns, got {}", header.len(), rec.len())));
        }
        let k_cell = &rec[2];
        let k = k_cell.parse::<u32>().map_err(|_| parse_err(line_of(&rec), format!("k: '{k_cell}' is not a count")))?;
        let mut root_distances = Vec::new();
        for i in 4..rec.len() {
            if rec[i].is_empty() {
                break;
            }
            root_distances.push(real(&rec, i, &header[i])?);
        }
        rows.push(BranchRow {
            delta: real(&rec, 0, "delta")?,
            a: real(&rec, 1, "A")?,
            k,
            kind,
            source,
            d_min: real(&rec, 3, "d_min")?,
            root_distances,
        });
    }
    let table = BranchTable::new(rows).map_err(|e| FormatError::Invalid(e.to_string()))?;
    Ok(BranchFile { kind, source, table })
}

pub fn distance_to_csv(kind: ModelKind, delta: f64, profile: &DistanceProfile) -> String {
    let mut s = meta_line(&[("kind", kind.name().to_string()), ("delta", fmt_real(delta))]);
    s.push_str("A,d_min\n");
    for (a, d) in profile.a_values.iter().zip(&profile.d_values) {
        s.push_str(&format!("{},{}\n", fmt_real(*a), fmt_real(*d)));
    }
    s
}

pub fn predictions_to_csv(preds: &[AsymptoticPrediction]) -> String {
    let mut s = meta_line(&[]);
    s.push_str("kind,k,delta,A_pred,width_pred,conjectured,valid\n");
    for p in preds {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            p.kind.name(),
            p.k,
            fmt_real(p.delta),
            fmt_real(p.a_pred),
            p.width_pred.map(fmt_real).unwrap_or_default(),
            p.conjectured,
            p.valid
        ));
    }
    s
}
