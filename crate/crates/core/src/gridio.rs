//! Long-form CSV for amplitude grids: one `nu_s,nu_i,re,im` row per sample.

use std::io::{Read, Write};

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::spectrum::{FrequencyAxis, FrequencyGrid, JointAmplitudeGrid, Provenance};

pub const HEADER: [&str; 4] = ["nu_s", "nu_i", "re", "im"];

pub fn write_grid_csv<W: Write>(jsa: &JointAmplitudeGrid, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(HEADER).map_err(csv_err)?;
    for (s, &ns) in jsa.grid.signal.positions().iter().enumerate() {
        for (i, &ni) in jsa.grid.idler.positions().iter().enumerate() {
            let v = jsa.values[[s, i]];
            w.write_record([ns.to_string(), ni.to_string(), v.re.to_string(), v.im.to_string()])
                .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn parse_field(field: Option<&str>, line: u64, name: &str) -> Result<f64> {
    let text = field.ok_or_else(|| Error::Parse {
        line,
        message: format!("missing column `{name}`"),
    })?;
    text.trim().parse::<f64>().map_err(|e| Error::Parse {
        line,
        message: format!("column `{name}`: {e}"),
    })
}

/// Reads a grid written by [`write_grid_csv`]. Rows may come in any order
/// but must cover the full rectangle exactly once.
pub fn read_grid_csv<R: Read>(input: R) -> Result<JointAmplitudeGrid> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(input);
    let headers = reader.headers().map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    if headers.iter().map(str::trim).ne(HEADER) {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `{}`", HEADER.join(",")),
        });
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 4 {
            return Err(Error::Parse {
                line,
                message: format!("expected 4 fields, found {}", record.len()),
            });
        }
        let vals = [
            parse_field(record.get(0), line, "nu_s")?,
            parse_field(record.get(1), line, "nu_i")?,
            parse_field(record.get(2), line, "re")?,
            parse_field(record.get(3), line, "im")?,
        ];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse {
                line,
                message: "non-finite value".into(),
            });
        }
        rows.push((line, vals));
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "no data rows".into(),
        });
    }
    let unique = |k: usize| {
        let mut v: Vec<f64> = rows.iter().map(|(_, r)| r[k]).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    };
    let (sig, idl) = (unique(0), unique(1));
    if sig.len() * idl.len() != rows.len() {
        return Err(Error::Parse {
            line: rows.last().unwrap().0,
            message: format!(
                "{} rows do not form a {} x {} rectangle",
                rows.len(),
                sig.len(),
                idl.len()
            ),
        });
    }
    let mut values = Array2::from_elem((sig.len(), idl.len()), Complex64::new(f64::NAN, 0.0));
    for (line, r) in &rows {
        let s = sig.binary_search_by(|x| x.total_cmp(&r[0])).unwrap();
        let i = idl.binary_search_by(|x| x.total_cmp(&r[1])).unwrap();
        if !values[[s, i]].re.is_nan() {
            return Err(Error::Parse {
                line: *line,
                message: format!("duplicate sample at ({}, {})", r[0], r[1]),
            });
        }
        values[[s, i]] = Complex64::new(r[2], r[3]);
    }
    let grid = FrequencyGrid::new(FrequencyAxis::from_positions(sig)?, FrequencyAxis::from_positions(idl)?);
    JointAmplitudeGrid::new(grid, values, Provenance::Synthetic)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let grid = FrequencyGrid::square(0.0, 1.0, 0.5, 5).unwrap();
        let jsa = JointAmplitudeGrid::from_fn(grid, Provenance::Synthetic, |a, b| Complex64::new(a.sin(), b / 3.0));
        let mut buf = Vec::new();
        write_grid_csv(&jsa, &mut buf).unwrap();
        let back = read_grid_csv(buf.as_slice()).unwrap();
        assert_eq!(back.values, jsa.values);
        assert_eq!(back.grid.signal.positions(), jsa.grid.signal.positions());
    }

    #[test]
    fn malformed_rows_report_line() {
        let text = "nu_s,nu_i,re,im\n0,0,1,0\n0,1,abc,0\n";
        match read_grid_csv(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let text = "nu_s,nu_i,re,im\n0,0,1,0\n0,1,1\n";
        assert!(matches!(read_grid_csv(text.as_bytes()), Err(Error::Parse { line: 3, .. })));
        let text = "a,b\n";
        assert!(matches!(read_grid_csv(text.as_bytes()), Err(Error::Parse { line: 1, .. })));
        let text = "nu_s,nu_i,re,im\n0,0,1,0\n0,1,1,0\n1,0,1,0\n";
        assert!(read_grid_csv(text.as_bytes()).is_err());
    }
}
