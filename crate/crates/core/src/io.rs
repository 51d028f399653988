//! CSV interchange for datasets.
//!
//! Header: `t,y_f[,y_cf][,mu0][,mu1][,e],x1..xd`. Columns are matched by
//! name; every column whose name starts with `x` becomes a covariate, in
//! header order.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array1;

use crate::data::Dataset;
use crate::error::{IdrlError, Result};
use crate::nn::{Matrix, Vector};

const OPTIONAL: [&str; 4] = ["y_cf", "mu0", "mu1", "e"];

pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    read_csv(File::open(path)?)
}

pub fn read_csv<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let find = |name: &str| header.iter().position(|h| h == name);
    let t_col = find("t").ok_or_else(|| IdrlError::Schema("t".into()))?;
    let y_col = find("y_f").ok_or_else(|| IdrlError::Schema("y_f".into()))?;
    let optional: Vec<Option<usize>> = OPTIONAL.iter().map(|n| find(n)).collect();
    let mut x_cols = Vec::new();
    for (j, name) in header.iter().enumerate() {
        if name.starts_with('x') {
            x_cols.push(j);
        } else if name != "t" && name != "y_f" && !OPTIONAL.contains(&name.as_str()) {
            return Err(IdrlError::InvalidArgument(format!("unrecognized column `{name}`")));
        }
    }
    if x_cols.is_empty() {
        return Err(IdrlError::Schema("x1".into()));
    }

    let mut t = Vec::new();
    let mut y_f = Vec::new();
    let mut extra: Vec<Vec<f64>> = vec![Vec::new(); OPTIONAL.len()];
    let mut x = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        // Row numbers count the header as row 1.
        let row = i + 2;
        let cell = |j: usize| -> Result<f64> {
            let raw = record.get(j).unwrap_or("");
            raw.parse::<f64>().map_err(|e| IdrlError::Parse {
                row,
                column: header[j].clone(),
                message: format!("`{raw}`: {e}"),
            })
        };
        let binary = |j: usize| -> Result<u8> {
            match cell(j)? {
                v if v == 0.0 => Ok(0),
                v if v == 1.0 => Ok(1),
                v => Err(IdrlError::Parse {
                    row,
                    column: header[j].clone(),
                    message: format!("expected 0 or 1, got {v}"),
                }),
            }
        };
        t.push(binary(t_col)?);
        y_f.push(cell(y_col)?);
        for (k, col) in optional.iter().enumerate() {
            if let Some(j) = *col {
                extra[k].push(if OPTIONAL[k] == "e" { binary(j)? as f64 } else { cell(j)? });
            }
        }
        for &j in &x_cols {
            x.push(cell(j)?);
        }
    }
    let n = t.len();
    let x = Matrix::from_shape_vec((n, x_cols.len()), x).expect("row-major fill");
    let mut ds = Dataset::new(x, t, Array1::from(y_f))?;
    let mut take = |k: usize| optional[k].map(|_| Vector::from(std::mem::take(&mut extra[k])));
    ds.y_cf = take(0);
    ds.mu0 = take(1);
    ds.mu1 = take(2);
    ds.e_flag = take(3).map(|e| e.iter().map(|&v| v as u8).collect());
    ds.validate()?;
    Ok(ds)
}

pub fn write_csv<W: Write>(ds: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["t".to_string(), "y_f".to_string()];
    let optional: [(&str, Option<Vector>); 4] = [
        ("y_cf", ds.y_cf.clone()),
        ("mu0", ds.mu0.clone()),
        ("mu1", ds.mu1.clone()),
        ("e", ds.e_flag.as_ref().map(|e| e.iter().map(|&v| v as f64).collect())),
    ];
    for (name, col) in &optional {
        if col.is_some() {
            header.push(name.to_string());
        }
    }
    header.extend((1..=ds.d()).map(|j| format!("x{j}")));
    w.write_record(&header)?;
    let mut row = Vec::with_capacity(header.len());
    for i in 0..ds.n() {
        row.clear();
        row.push(ds.t[i].to_string());
        row.push(fmt(ds.y_f[i]));
        for (name, col) in &optional {
            if let Some(v) = col {
                row.push(if *name == "e" { (v[i] as u8).to_string() } else { fmt(v[i]) });
            }
        }
        row.extend(ds.x.row(i).iter().map(|&v| fmt(v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_csv(ds, std::io::BufWriter::new(File::create(path)?))
}

// Shortest representation that parses back to the same bits.
fn fmt(v: f64) -> String {
    format!("{v:?}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn reads_handwritten_fixture() {
        let text = "t,y_f,y_cf,mu0,mu1,e,x1,x2\n\
                    1,2.5,1.0,0.9,2.4,1,0.1,-3\n\
                    0,0.5,1.5,0.4,1.6,0,2.0,4.25\n\
                    1,-1,0,0.0,-0.5,1,1e-3,7\n";
        let ds = read_csv(text.as_bytes()).unwrap();
        assert_eq!(ds.n(), 3);
        assert_eq!(ds.t, vec![1, 0, 1]);
        assert_eq!(ds.y_f, array![2.5, 0.5, -1.0]);
        assert_eq!(ds.y_cf, Some(array![1.0, 1.5, 0.0]));
        assert_eq!(ds.mu0, Some(array![0.9, 0.4, 0.0]));
        assert_eq!(ds.mu1, Some(array![2.4, 1.6, -0.5]));
        assert_eq!(ds.e_flag, Some(vec![1, 0, 1]));
        assert_eq!(ds.x, array![[0.1, -3.0], [2.0, 4.25], [1e-3, 7.0]]);
    }

    #[test]
    fn columns_are_matched_by_name() {
        let ds = read_csv("x1,y_f,x2,t\n1,2,3,0\n4,5,6,1\n".as_bytes()).unwrap();
        assert_eq!(ds.t, vec![0, 1]);
        assert_eq!(ds.y_f, array![2.0, 5.0]);
        assert_eq!(ds.x, array![[1.0, 3.0], [4.0, 6.0]]);
        assert!(ds.mu0.is_none() && ds.e_flag.is_none());
    }

    #[test]
    fn missing_treatment_column_is_a_schema_error() {
        let err = read_csv("y_f,x1\n1,2\n".as_bytes()).unwrap_err();
        assert!(matches!(err, IdrlError::Schema(ref c) if c == "t"), "{err}");
        let err = read_csv("t,x1\n1,2\n".as_bytes()).unwrap_err();
        assert!(matches!(err, IdrlError::Schema(ref c) if c == "y_f"), "{err}");
    }

    #[test]
    fn bad_cells_report_row_and_column() {
        let err = read_csv("t,y_f,x1\n1,2,3\n0,abc,4\n".as_bytes()).unwrap_err();
        match err {
            IdrlError::Parse { row, column, .. } => {
                assert_eq!(row, 3);
                assert_eq!(column, "y_f");
            }
            other => panic!("unexpected {other}"),
        }
        let err = read_csv("t,y_f,x1\n2,2,3\n".as_bytes()).unwrap_err();
        assert!(matches!(err, IdrlError::Parse { row: 2, ref column, .. } if column == "t"));
    }

    #[test]
    fn unknown_columns_are_rejected() {
        assert!(read_csv("t,y_f,x1,weight\n1,2,3,4\n".as_bytes()).is_err());
    }

    #[test]
    fn write_then_read_is_identity() {
        let mut ds = Dataset::new(
            array![[0.1, 1.0 / 3.0], [-2.5e-17, 1e300]],
            vec![0, 1],
            array![std::f64::consts::PI, -0.0],
        )
        .unwrap();
        ds.mu0 = Some(array![1.0, 2.0]);
        ds.mu1 = Some(array![1.5, 2.0 / 7.0]);
        ds.e_flag = Some(vec![1, 0]);
        let mut buf = Vec::new();
        write_csv(&ds, &mut buf).unwrap();
        let back = read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, ds);
    }
}
