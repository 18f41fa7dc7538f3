//! CSV, JSON and whitespace-delimited output, with readers for the CSV files.
//!
//! Floating-point values are written with 17 significant digits so files
//! re-read bit-exactly.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::{FitResult, Histogram, SensitivityRow};
use crate::error::{Error, Result};

pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| io_err(path, e))?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| io_err(path, e))?;
    Ok(())
}

/// Reads a CSV whose header must equal `header`, returning the raw records.
fn read_csv(path: &Path, header: &[&str]) -> Result<Vec<csv::StringRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    let got: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if got != header {
        return Err(io_err(path, format!("expected columns {header:?}, found {got:?}")));
    }
    r.records().map(|rec| rec.map_err(Error::from)).collect()
}

fn field<T: std::str::FromStr>(path: &Path, rec: &csv::StringRecord, i: usize) -> Result<T> {
    let raw = rec.get(i).unwrap_or("");
    raw.parse::<T>().map_err(|_| {
        let line = rec.position().map_or(0, |p| p.line());
        io_err(path, format!("line {line}: cannot parse `{raw}`"))
    })
}

/// Raw shots grouped by delay, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct ShotTable {
    pub delay_us: Vec<f64>,
    pub shots: Vec<Vec<f64>>,
}

pub const SHOTS_HEADER: [&str; 3] = ["delay_us", "shot_index", "counts"];

pub fn write_shots_csv(path: &Path, table: &ShotTable) -> Result<()> {
    let rows = table.delay_us.iter().zip(&table.shots).flat_map(|(d, shots)| {
        shots
            .iter()
            .enumerate()
            .map(move |(j, c)| vec![fmt_num(*d), j.to_string(), fmt_num(*c)])
    });
    write_csv(path, &SHOTS_HEADER, rows)
}

pub fn read_shots_csv(path: &Path) -> Result<ShotTable> {
    let mut table = ShotTable {
        delay_us: Vec::new(),
        shots: Vec::new(),
    };
    for rec in read_csv(path, &SHOTS_HEADER)? {
        let d: f64 = field(path, &rec, 0)?;
        let j: usize = field(path, &rec, 1)?;
        let c: f64 = field(path, &rec, 2)?;
        if table.delay_us.last() != Some(&d) {
            table.delay_us.push(d);
            table.shots.push(Vec::new());
        }
        let block = table.shots.last_mut().expect("pushed above");
        if j != block.len() {
            return Err(io_err(path, format!("shot index {j} out of sequence at delay {d} us")));
        }
        block.push(c);
    }
    if table.delay_us.is_empty() {
        return Err(Error::DegenerateData(format!("{}: no shots", path.display())));
    }
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayRow {
    pub delay_us: f64,
    pub mean: f64,
    pub variance: f64,
    pub n_kept: usize,
    pub n_discarded: usize,
}

pub const DECAY_HEADER: [&str; 5] = ["delay_us", "mean", "variance", "n_kept", "n_discarded"];

pub fn write_decay_csv(path: &Path, rows: &[DecayRow]) -> Result<()> {
    write_csv(
        path,
        &DECAY_HEADER,
        rows.iter().map(|r| {
            vec![
                fmt_num(r.delay_us),
                fmt_num(r.mean),
                fmt_num(r.variance),
                r.n_kept.to_string(),
                r.n_discarded.to_string(),
            ]
        }),
    )
}

pub fn read_decay_csv(path: &Path) -> Result<Vec<DecayRow>> {
    read_csv(path, &DECAY_HEADER)?
        .iter()
        .map(|rec| {
            Ok(DecayRow {
                delay_us: field(path, rec, 0)?,
                mean: field(path, rec, 1)?,
                variance: field(path, rec, 2)?,
                n_kept: field(path, rec, 3)?,
                n_discarded: field(path, rec, 4)?,
            })
        })
        .collect()
}

pub const HISTOGRAM_HEADER: [&str; 3] = ["bin_left", "bin_right", "count"];

pub fn write_histogram_csv(path: &Path, h: &Histogram) -> Result<()> {
    write_csv(
        path,
        &HISTOGRAM_HEADER,
        h.bin_edges
            .windows(2)
            .zip(&h.bin_counts)
            .map(|(e, c)| vec![fmt_num(e[0]), fmt_num(e[1]), c.to_string()]),
    )
}

pub fn read_histogram_csv(path: &Path) -> Result<Histogram> {
    let recs = read_csv(path, &HISTOGRAM_HEADER)?;
    if recs.is_empty() {
        return Err(Error::DegenerateData(format!("{}: no bins", path.display())));
    }
    let mut bin_edges = Vec::with_capacity(recs.len() + 1);
    let mut bin_counts = Vec::with_capacity(recs.len());
    for (i, rec) in recs.iter().enumerate() {
        let left: f64 = field(path, rec, 0)?;
        if i == 0 {
            bin_edges.push(left);
        } else if bin_edges[i] != left {
            return Err(io_err(
                path,
                format!("bin {i} does not start where the previous one ends"),
            ));
        }
        bin_edges.push(field(path, rec, 1)?);
        bin_counts.push(field(path, rec, 2)?);
    }
    Ok(Histogram {
        bin_edges,
        bin_counts,
        n_outside: 0,
    })
}

pub const SENSITIVITY_HEADER: [&str; 4] = ["N", "I_fluo", "I_echo", "R"];

pub fn write_sensitivity_csv(path: &Path, rows: &[SensitivityRow]) -> Result<()> {
    write_csv(
        path,
        &SENSITIVITY_HEADER,
        rows.iter().map(|r| {
            vec![
                fmt_num(r.n_emitters),
                fmt_num(r.i_fluo),
                fmt_num(r.i_echo),
                fmt_num(r.snr),
            ]
        }),
    )
}

pub fn read_sensitivity_csv(path: &Path) -> Result<Vec<SensitivityRow>> {
    read_csv(path, &SENSITIVITY_HEADER)?
        .iter()
        .map(|rec| {
            Ok(SensitivityRow {
                n_emitters: field(path, rec, 0)?,
                i_fluo: field(path, rec, 1)?,
                i_echo: field(path, rec, 2)?,
                snr: field(path, rec, 3)?,
            })
        })
        .collect()
}

/// A generic `x,y[,sigma]` curve.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub sigma: Option<Vec<f64>>,
}

pub fn write_curve_csv(path: &Path, c: &Curve) -> Result<()> {
    match &c.sigma {
        Some(s) => write_csv(
            path,
            &["x", "y", "sigma"],
            c.x.iter()
                .zip(&c.y)
                .zip(s)
                .map(|((x, y), s)| vec![fmt_num(*x), fmt_num(*y), fmt_num(*s)]),
        ),
        None => write_csv(
            path,
            &["x", "y"],
            c.x.iter().zip(&c.y).map(|(x, y)| vec![fmt_num(*x), fmt_num(*y)]),
        ),
    }
}

pub fn read_curve_csv(path: &Path) -> Result<Curve> {
    let mut r = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let with_sigma = match header.iter().map(String::as_str).collect::<Vec<_>>()[..] {
        ["x", "y"] => false,
        ["x", "y", "sigma"] => true,
        _ => return Err(io_err(path, format!("expected columns x,y[,sigma], found {header:?}"))),
    };
    let mut c = Curve {
        x: Vec::new(),
        y: Vec::new(),
        sigma: with_sigma.then(Vec::new),
    };
    for rec in r.records() {
        let rec = rec?;
        c.x.push(field(path, &rec, 0)?);
        c.y.push(field(path, &rec, 1)?);
        if let Some(s) = c.sigma.as_mut() {
            s.push(field(path, &rec, 2)?);
        }
    }
    Ok(c)
}

/// Whitespace-delimited columns with a `#` header line.
pub fn write_dat(path: &Path, header: &[&str], columns: &[&[f64]]) -> Result<()> {
    let n = columns.first().map_or(0, |c| c.len());
    if columns.iter().any(|c| c.len() != n) || columns.len() != header.len() {
        return Err(Error::InvalidArgument("dat columns must have equal length".into()));
    }
    let mut out = format!("# {}\n", header.join(" "));
    for i in 0..n {
        let row: Vec<String> = columns.iter().map(|c| fmt_num(c[i])).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Reads a file written by [`write_dat`] back into its header and columns.
pub fn read_dat(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .and_then(|l| l.strip_prefix("# "))
        .ok_or_else(|| io_err(path, "missing header line"))?
        .split_whitespace()
        .map(str::to_string)
        .collect();
    let mut columns = vec![Vec::new(); header.len()];
    for (i, line) in lines.enumerate() {
        let values: Vec<&str> = line.split_whitespace().collect();
        if values.len() != header.len() {
            return Err(io_err(
                path,
                format!("line {}: expected {} values", i + 2, header.len()),
            ));
        }
        for (col, v) in columns.iter_mut().zip(values) {
            col.push(
                v.parse()
                    .map_err(|_| io_err(path, format!("line {}: bad number `{v}`", i + 2)))?,
            );
        }
    }
    Ok((header, columns))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedValue {
    pub value: f64,
    pub sigma: f64,
    pub unit: String,
}

/// On-disk form of a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitJson {
    pub model: String,
    pub params: BTreeMap<String, f64>,
    pub sigmas: BTreeMap<String, f64>,
    pub units: BTreeMap<String, String>,
    pub fixed: Vec<String>,
    pub residual_rms: f64,
    pub converged: bool,
    pub n_points: usize,
    pub derived: BTreeMap<String, DerivedValue>,
}

impl From<&FitResult> for FitJson {
    fn from(f: &FitResult) -> Self {
        FitJson {
            model: f.model.clone(),
            params: f.params.iter().map(|p| (p.name.clone(), p.value)).collect(),
            sigmas: f.params.iter().map(|p| (p.name.clone(), p.sigma)).collect(),
            units: f.params.iter().map(|p| (p.name.clone(), p.unit.clone())).collect(),
            fixed: f.params.iter().filter(|p| !p.free).map(|p| p.name.clone()).collect(),
            residual_rms: f.residual_rms,
            converged: f.converged,
            n_points: f.n_points,
            derived: f
                .derived
                .iter()
                .map(|p| {
                    (
                        p.name.clone(),
                        DerivedValue {
                            value: p.value,
                            sigma: p.sigma,
                            unit: p.unit.clone(),
                        },
                    )
                })
                .collect(),
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    let mut f = fs::File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| io_err(path, e))
}

pub fn read_fit_json(path: &Path) -> Result<FitJson> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
