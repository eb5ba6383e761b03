//! Field CSV files and dictionary JSON.
//!
//! A field file starts with `# {"k":K,"M":M,"N":N,"T":T,"x_lo":a,"x_hi":b}`
//! followed by `M*N` rows `t,x,v_1,...,v_k`, time-major, 17 significant digits.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use twinforge_core::basis::{BasisId, Dictionary};
use twinforge_core::{build_grid, SpaceTimeField};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    k: usize,
    #[serde(rename = "M")]
    m: usize,
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "T")]
    t: f64,
    x_lo: f64,
    x_hi: f64,
}

/// `{:.16e}` keeps 17 significant digits, enough to round-trip any f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn field_to_string(field: &SpaceTimeField) -> String {
    let g = field.grid();
    let (x_lo, x_hi) = g.domain();
    let header = Header {
        k: field.k(),
        m: g.m(),
        n: g.n(),
        t: g.t_final(),
        x_lo,
        x_hi,
    };
    let mut out = String::with_capacity(64 * g.len() * field.k());
    out.push_str("# ");
    out.push_str(&serde_json::to_string(&header).expect("header serializes"));
    out.push('\n');
    for i in 0..g.m() {
        for j in 0..g.n() {
            let _ = write!(out, "{},{}", fmt_f64(g.t_nodes()[i]), fmt_f64(g.x_nodes()[j]));
            for var in 0..field.k() {
                let _ = write!(out, ",{}", fmt_f64(field.at(var, i, j)));
            }
            out.push('\n');
        }
    }
    out
}

pub fn write_field(path: &Path, field: &SpaceTimeField) -> CliResult<()> {
    write_text(path, &field_to_string(field))
}

pub fn parse_field(path: &Path, text: &str) -> CliResult<SpaceTimeField> {
    let mut lines = text.lines();
    let first = lines.next().ok_or_else(|| CliError::format(path, "empty file"))?;
    let json = first
        .strip_prefix('#')
        .ok_or_else(|| CliError::format(path, "line 1: expected `# {header json}`"))?;
    let h: Header =
        serde_json::from_str(json.trim()).map_err(|e| CliError::format(path, format!("line 1: bad header: {e}")))?;
    if h.k == 0 {
        return Err(CliError::format(path, "line 1: k must be at least 1"));
    }
    let grid = build_grid(h.m, h.n, h.t, (h.x_lo, h.x_hi))?;
    let rows = h.m * h.n;
    // stored var-major, read time-major
    let mut values = vec![0.0; h.k * rows];
    let mut count = 0;
    for (ln, line) in lines.enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let lineno = ln + 2;
        if count == rows {
            return Err(CliError::format(path, format!("line {lineno}: more than M*N = {rows} data rows")));
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 2 + h.k {
            return Err(CliError::format(
                path,
                format!("line {lineno}: expected {} columns, found {}", 2 + h.k, cols.len()),
            ));
        }
        for (c, s) in cols.iter().enumerate() {
            let v: f64 = s
                .trim()
                .parse()
                .map_err(|_| CliError::format(path, format!("line {lineno}: `{s}` is not a number")))?;
            if !v.is_finite() {
                return Err(CliError::format(path, format!("line {lineno}: non-finite value `{s}`")));
            }
            if c >= 2 {
                values[(c - 2) * rows + count] = v;
            }
        }
        count += 1;
    }
    if count != rows {
        return Err(CliError::format(
            path,
            format!("shape mismatch: header says M*N = {rows} rows, found {count}"),
        ));
    }
    Ok(SpaceTimeField::new(grid, h.k, values)?)
}

pub fn read_field(path: &Path) -> CliResult<SpaceTimeField> {
    parse_field(path, &read_text(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisRecord {
    pub j: Vec<i32>,
    pub eta: Vec<i64>,
    pub alpha: f64,
}

pub fn dictionary_records(dict: &Dictionary) -> Vec<BasisRecord> {
    dict.ids()
        .iter()
        .zip(dict.alphas())
        .map(|(id, &alpha)| BasisRecord {
            j: id.j.clone(),
            eta: id.eta.clone(),
            alpha,
        })
        .collect()
}

pub fn dictionary_from_records(records: Vec<BasisRecord>) -> twinforge_core::Result<Dictionary> {
    let mut ids = Vec::with_capacity(records.len());
    let mut alphas = Vec::with_capacity(records.len());
    for r in records {
        ids.push(BasisId::new(r.j, r.eta)?);
        alphas.push(r.alpha);
    }
    Dictionary::from_parts(ids, alphas)
}

pub fn write_dictionary(path: &Path, dict: &Dictionary) -> CliResult<()> {
    write_json(path, &dictionary_records(dict))
}

pub fn read_dictionary(path: &Path) -> CliResult<Dictionary> {
    let text = read_text(path)?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let records: Vec<BasisRecord> =
        serde_path_to_error::deserialize(de).map_err(|e| CliError::format(path, format!("at `{}`: {}", e.path(), e.inner())))?;
    if records.iter().any(|r| !r.alpha.is_finite()) {
        return Err(CliError::format(path, "non-finite coefficient"));
    }
    Ok(dictionary_from_records(records)?)
}

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> CliResult<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::format(path, e.to_string()))?;
    s.push('\n');
    write_text(path, &s)
}

/// CSV with a header row; every value already formatted.
pub fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> CliResult<()> {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    write_text(path, &out)
}
