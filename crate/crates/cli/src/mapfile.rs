//! Plain-text map files: first line is the dimension `d`, followed by
//! `d` rows of `d` whitespace-separated floats. Values are written with
//! the shortest round-trip representation, so save/load is exact.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use opal_core::{Error, Result};

pub fn save_map(map: ArrayView2<'_, f64>, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", map.nrows())?;
    for row in map.outer_iter() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_map(path: &Path) -> Result<Array2<f64>> {
    let display = path.display().to_string();
    let mut lines = BufReader::new(File::open(path)?).lines();
    let header = lines
        .next()
        .transpose()?
        .ok_or_else(|| Error::Format { path: display.clone(), line: 1, msg: "missing dimension line".into() })?;
    let d: usize = header.trim().parse().map_err(|_| Error::Format {
        path: display.clone(),
        line: 1,
        msg: format!("cannot parse dimension {header:?}"),
    })?;
    if d == 0 {
        return Err(Error::Format { path: display, line: 1, msg: "dimension must be positive".into() });
    }
    let mut data = Vec::with_capacity(d * d);
    for i in 0..d {
        let line_no = i + 2;
        let line = lines.next().transpose()?.ok_or_else(|| Error::Format {
            path: display.clone(),
            line: line_no,
            msg: format!("expected {d} matrix rows"),
        })?;
        let values: Vec<f64> = line
            .split_whitespace()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Format {
                path: display.clone(),
                line: line_no,
                msg: "cannot parse matrix row".into(),
            })?;
        if values.len() != d || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format {
                path: display.clone(),
                line: line_no,
                msg: format!("expected {d} finite values, found {}", values.len()),
            });
        }
        data.extend(values);
    }
    Ok(Array2::from_shape_vec((d, d), data).expect("shape checked above"))
}
