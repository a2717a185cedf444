use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::Deserialize;

use super::{FunctionalRecord, LongitudinalDataset, RandomEffectSpec, SampleGrid};
use crate::error::{Error, Result};

/// Parsed outcomes file: `subject,t,y,<covariates...>`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeTable {
    pub covariate_names: Vec<String>,
    pub rows: Vec<(String, f64, f64, Vec<f64>)>,
}

/// One row of the curves file: `subject,t,w_1,...,w_p`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub subject: String,
    pub t: f64,
    pub w: Vec<f64>,
}

/// JSON grid description: `{"p": 100, "equispaced": true}` or
/// `{"p": 3, "points": [0.0, 0.5, 1.0]}`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub p: usize,
    #[serde(default)]
    pub points: Option<Vec<f64>>,
    #[serde(default)]
    pub equispaced: Option<bool>,
}

impl GridSpec {
    pub fn to_grid(&self) -> Result<SampleGrid> {
        match (&self.points, self.equispaced) {
            (Some(points), None | Some(false)) => {
                if points.len() != self.p {
                    return Err(Error::InvalidGrid(format!(
                        "p={} but {} points listed",
                        self.p,
                        points.len()
                    )));
                }
                SampleGrid::new(points.clone())
            }
            (None, Some(true)) => SampleGrid::equispaced(self.p),
            _ => Err(Error::InvalidGrid(
                "give exactly one of `points` or `equispaced: true`".into(),
            )),
        }
    }
}

pub fn parse_grid_spec(json: &str) -> Result<SampleGrid> {
    let spec: GridSpec =
        serde_json::from_str(json).map_err(|e| Error::Parse(format!("grid spec: {e}")))?;
    spec.to_grid()
}

fn parse_f64(field: &str, what: &str, line: u64) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("line {line}: {what} `{field}` is not a number")))?;
    if !v.is_finite() {
        return Err(Error::NonFiniteValue(format!("{what} on line {line}")));
    }
    Ok(v)
}

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader)
}

fn check_prefix(headers: &csv::StringRecord, expected: &[&str], file: &str) -> Result<()> {
    for (i, name) in expected.iter().enumerate() {
        match headers.get(i) {
            Some(h) if h == *name => {}
            other => {
                return Err(Error::Parse(format!(
                    "{file} header column {} should be `{name}`, found {:?}",
                    i + 1,
                    other
                )))
            }
        }
    }
    Ok(())
}

pub fn parse_outcomes<R: Read>(reader: R) -> Result<OutcomeTable> {
    let mut rdr = csv_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse(format!("outcomes header: {e}")))?
        .clone();
    check_prefix(&headers, &["subject", "t", "y"], "outcomes")?;
    let covariate_names: Vec<String> = headers.iter().skip(3).map(str::to_owned).collect();
    let width = headers.len();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse(format!("outcomes: {e}")))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != width {
            return Err(Error::Parse(format!(
                "outcomes line {line}: {} fields, header has {width}",
                rec.len()
            )));
        }
        let subject = rec[0].to_owned();
        if subject.is_empty() {
            return Err(Error::Parse(format!("outcomes line {line}: empty subject")));
        }
        let t = parse_f64(&rec[1], "t", line)?;
        let y = parse_f64(&rec[2], "y", line)?;
        let x = (3..width)
            .map(|i| parse_f64(&rec[i], &headers[i], line))
            .collect::<Result<Vec<_>>>()?;
        rows.push((subject, t, y, x));
    }
    Ok(OutcomeTable {
        covariate_names,
        rows,
    })
}

/// Parses a curves file; when `p` is given every row must carry exactly `p`
/// samples.
pub fn parse_curves<R: Read>(reader: R, p: Option<usize>) -> Result<Vec<CurveRow>> {
    let mut rdr = csv_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse(format!("curves header: {e}")))?
        .clone();
    check_prefix(&headers, &["subject", "t"], "curves")?;
    let header_p = headers.len().saturating_sub(2);
    let p = p.unwrap_or(header_p);
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse(format!("curves: {e}")))?;
        let line = rec.position().map_or(0, |pos| pos.line());
        if rec.len() < 2 {
            return Err(Error::Parse(format!(
                "curves line {line}: missing subject or t"
            )));
        }
        let found = rec.len() - 2;
        if found != p {
            return Err(Error::GridMismatch {
                expected: p,
                found,
                context: format!("curves line {line}"),
            });
        }
        let subject = rec[0].to_owned();
        if subject.is_empty() {
            return Err(Error::Parse(format!("curves line {line}: empty subject")));
        }
        let t = parse_f64(&rec[1], "t", line)?;
        let w = (2..rec.len())
            .map(|i| parse_f64(&rec[i], "curve sample", line))
            .collect::<Result<Vec<_>>>()?;
        rows.push(CurveRow { subject, t, w });
    }
    Ok(rows)
}

/// Joins outcomes and curves on `(subject, t)`.
pub fn parse_dataset<R1: Read, R2: Read>(
    outcomes: R1,
    curves: R2,
    grid: SampleGrid,
    random_effects: RandomEffectSpec,
) -> Result<LongitudinalDataset> {
    let out = parse_outcomes(outcomes)?;
    let curve_rows = parse_curves(curves, Some(grid.len()))?;

    let mut by_key: HashMap<(String, u64), Vec<f64>> = HashMap::with_capacity(curve_rows.len());
    for row in curve_rows {
        let key = (row.subject.clone(), row.t.to_bits());
        if by_key.insert(key, row.w).is_some() {
            return Err(Error::DuplicateRecord {
                subject: row.subject,
                t: row.t,
            });
        }
    }

    let mut records = Vec::with_capacity(out.rows.len());
    for (subject, t, y, x) in out.rows {
        let w = by_key
            .remove(&(subject.clone(), t.to_bits()))
            .ok_or_else(|| Error::MissingCurve {
                subject: subject.clone(),
                t,
            })?;
        records.push(FunctionalRecord {
            subject,
            t,
            y,
            x,
            w,
        });
    }
    if let Some(((subject, bits), _)) = by_key.into_iter().min_by(|a, b| a.0.cmp(&b.0)) {
        return Err(Error::MissingOutcome {
            subject,
            t: f64::from_bits(bits),
        });
    }
    LongitudinalDataset::new(grid, out.covariate_names, records, random_effects)
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_dataset(
    outcomes_path: &Path,
    curves_path: &Path,
    grid: SampleGrid,
    random_effects: RandomEffectSpec,
) -> Result<LongitudinalDataset> {
    parse_dataset(
        open(outcomes_path)?,
        open(curves_path)?,
        grid,
        random_effects,
    )
}

fn csv_write_err(e: csv::Error) -> Error {
    Error::Parse(format!("csv write: {e}"))
}

pub fn write_outcomes<W: Write>(ds: &LongitudinalDataset, out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let mut header = vec!["subject".to_owned(), "t".to_owned(), "y".to_owned()];
    header.extend(ds.covariate_names().iter().cloned());
    wtr.write_record(&header).map_err(csv_write_err)?;
    for r in ds.records() {
        let mut row = vec![r.subject.clone(), r.t.to_string(), r.y.to_string()];
        row.extend(r.x.iter().map(f64::to_string));
        wtr.write_record(&row).map_err(csv_write_err)?;
    }
    wtr.flush().map_err(|e| Error::io("<writer>", e))
}

pub fn write_curves<W: Write>(ds: &LongitudinalDataset, out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let mut header = vec!["subject".to_owned(), "t".to_owned()];
    header.extend((1..=ds.grid().len()).map(|j| format!("w_{j}")));
    wtr.write_record(&header).map_err(csv_write_err)?;
    for r in ds.records() {
        let mut row = vec![r.subject.clone(), r.t.to_string()];
        row.extend(r.w.iter().map(f64::to_string));
        wtr.write_record(&row).map_err(csv_write_err)?;
    }
    wtr.flush().map_err(|e| Error::io("<writer>", e))
}

/// Writes `outcomes.csv`, `curves.csv` and `grid.json` into `dir`.
pub fn write_dataset(ds: &LongitudinalDataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let create = |name: &str| {
        let path = dir.join(name);
        File::create(&path)
            .map(std::io::BufWriter::new)
            .map_err(|e| Error::io(path.display().to_string(), e))
    };
    write_outcomes(ds, create("outcomes.csv")?)?;
    write_curves(ds, create("curves.csv")?)?;
    let grid = serde_json::json!({ "p": ds.grid().len(), "points": ds.grid().points() });
    let mut g = create("grid.json")?;
    writeln!(g, "{grid}").map_err(|e| Error::io("grid.json", e))?;
    Ok(())
}
