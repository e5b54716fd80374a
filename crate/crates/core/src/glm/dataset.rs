//! Training samples `S = ((x_i, y_i))` and their CSV representation.
//!
//! The CSV format has a header `x1,...,xd,y` and one sample per row.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
    cap_y: f64,
}

impl Dataset {
    /// Builds a validated dataset: `n ≥ 2`, `d ≥ 1`, finite entries and
    /// `|y_i| ≤ cap_y`.
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, cap_y: f64) -> Result<Self> {
        if x.nrows() < 2 {
            return Err(Error::Data(format!("need at least 2 samples, got {}", x.nrows())));
        }
        Self::new_unchecked_len(x, y, cap_y)
    }

    fn new_unchecked_len(x: DMatrix<f64>, y: DVector<f64>, cap_y: f64) -> Result<Self> {
        if x.ncols() == 0 {
            return Err(Error::Data("instances must have at least one feature".into()));
        }
        if x.nrows() != y.len() {
            return Err(Error::Data(format!(
                "{} instances but {} labels",
                x.nrows(),
                y.len()
            )));
        }
        if !(cap_y > 0.0) || !cap_y.is_finite() {
            return Err(Error::Data(format!("cap_Y must be positive, got {cap_y}")));
        }
        if let Some(pos) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite instance entry at row {}",
                pos % x.nrows()
            )));
        }
        for (i, &yi) in y.iter().enumerate() {
            if !yi.is_finite() || yi.abs() > cap_y {
                return Err(Error::Data(format!(
                    "label {yi} of sample {i} outside [-{cap_y}, {cap_y}]"
                )));
            }
        }
        Ok(Self { x, y, cap_y })
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: &[f64], cap_y: f64) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Data("ragged instance rows".into()));
        }
        let x = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
        Self::new(x, DVector::from_column_slice(labels), cap_y)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    /// `n × d` instance matrix; row `i` is `x_i`.
    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn cap_y(&self) -> f64 {
        self.cap_y
    }

    pub fn instance(&self, i: usize) -> DVector<f64> {
        self.x.row(i).transpose()
    }

    /// Predictions `X w`.
    pub fn predictions(&self, w: &DVector<f64>) -> DVector<f64> {
        &self.x * w
    }

    /// Same samples with instances replaced by `x_i ↦ M x_i`.
    pub fn map_instances(&self, m: &DMatrix<f64>) -> Self {
        Self {
            x: &self.x * m.transpose(),
            y: self.y.clone(),
            cap_y: self.cap_y,
        }
    }

    /// The sample with index `i` removed (`n − 1 ≥ 1` samples).
    pub fn without(&self, i: usize) -> Result<Self> {
        let n = self.n();
        if i >= n {
            return Err(Error::Argument(format!("index {i} out of range for n = {n}")));
        }
        if n < 2 {
            return Err(Error::Argument("cannot remove a sample from a 1-sample set".into()));
        }
        Ok(Self {
            x: self.x.clone().remove_row(i),
            y: self.y.clone().remove_row(i),
            cap_y: self.cap_y,
        })
    }

    /// Largest `‖x_i‖₂`.
    pub fn max_instance_norm(&self) -> f64 {
        self.x
            .row_iter()
            .map(|r| r.norm())
            .fold(0.0, f64::max)
    }

    pub fn read_csv<R: Read>(reader: R, cap_y: f64) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let d = headers.len().saturating_sub(1);
        if d == 0 {
            return Err(Error::Data("header must be `x1,...,xd,y`".into()));
        }
        for (j, h) in headers.iter().enumerate() {
            let expected = if j == d { "y".to_string() } else { format!("x{}", j + 1) };
            if h.trim() != expected {
                return Err(Error::Data(format!(
                    "header column {} is `{h}`, expected `{expected}`",
                    j + 1
                )));
            }
        }
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != d + 1 {
                return Err(Error::Data(format!(
                    "row {} has {} fields, expected {}",
                    line + 1,
                    rec.len(),
                    d + 1
                )));
            }
            let mut vals = Vec::with_capacity(d + 1);
            for field in rec.iter() {
                let v: f64 = field.trim().parse().map_err(|_| {
                    Error::Data(format!("row {}: cannot parse `{field}` as a number", line + 1))
                })?;
                vals.push(v);
            }
            labels.push(vals.pop().unwrap());
            rows.push(vals);
        }
        Self::from_rows(&rows, &labels, cap_y)
    }

    pub fn load_csv(path: impl AsRef<Path>, cap_y: f64) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(file), cap_y)
    }

    /// Writes the CSV form; values use the shortest round-trip representation.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let d = self.d();
        let mut header: Vec<String> = (1..=d).map(|j| format!("x{j}")).collect();
        header.push("y".into());
        wtr.write_record(&header)?;
        for i in 0..self.n() {
            let mut rec: Vec<String> = self.x.row(i).iter().map(|v| v.to_string()).collect();
            rec.push(self.y[i].to_string());
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_input() {
        assert!(Dataset::from_rows(&[vec![1.0]], &[0.0], 1.0).is_err());
        assert!(Dataset::from_rows(&[vec![1.0], vec![2.0]], &[0.0, 2.0], 1.0).is_err());
        assert!(Dataset::from_rows(&[vec![f64::NAN], vec![2.0]], &[0.0, 0.0], 1.0).is_err());
        assert!(Dataset::from_rows(&[vec![1.0], vec![2.0, 1.0]], &[0.0, 0.0], 1.0).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let ds = Dataset::from_rows(
            &[vec![0.1, -2.0 / 3.0], vec![1e-17, 3.0]],
            &[0.25, -1.0 / 7.0],
            1.0,
        )
        .unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x1,x2,y\n"));
        let back = Dataset::read_csv(buf.as_slice(), 1.0).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn csv_validates_header_and_labels() {
        let bad_header = "a,b,y\n1,2,0\n3,4,0\n";
        assert!(Dataset::read_csv(bad_header.as_bytes(), 1.0).is_err());
        let bad_label = "x1,y\n1,0.5\n2,1.5\n";
        assert!(matches!(
            Dataset::read_csv(bad_label.as_bytes(), 1.0),
            Err(Error::Data(_))
        ));
        let ok = "x1,y\n1,0.5\n2,-1\n";
        assert_eq!(Dataset::read_csv(ok.as_bytes(), 1.0).unwrap().n(), 2);
    }

    #[test]
    fn without_removes_one_row() {
        let ds = Dataset::from_rows(&[vec![1.0], vec![2.0], vec![3.0]], &[0.1, 0.2, 0.3], 1.0)
            .unwrap();
        let r = ds.without(1).unwrap();
        assert_eq!(r.x().as_slice(), &[1.0, 3.0]);
        assert_eq!(r.y().as_slice(), &[0.1, 0.3]);
        assert!(ds.without(3).is_err());
    }
}
