//! Student × feature matrices and their delimited-table form.

use std::collections::HashMap;
use std::io::{Read, Write};

use ndarray::{Array2, ArrayView2, Axis};
use thiserror::Error;

use crate::features::ColumnKey;

#[derive(Debug, Error)]
pub enum MatrixError {
    #[error("column `{0}` missing from the feature matrix")]
    MissingColumn(String),
    #[error("malformed matrix table: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub students: Vec<String>,
    pub columns: Vec<ColumnKey>,
    pub data: Array2<f64>,
}

impl FeatureMatrix {
    pub fn new(students: Vec<String>, columns: Vec<ColumnKey>, data: Array2<f64>) -> Self {
        assert_eq!(data.nrows(), students.len());
        assert_eq!(data.ncols(), columns.len());
        FeatureMatrix { students, columns, data }
    }

    pub fn n_rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn column_index(&self, key: &ColumnKey) -> Option<usize> {
        self.columns.iter().position(|c| c == key)
    }

    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(ToString::to_string).collect()
    }

    /// Sub-matrix with `keys` in the given order.
    pub fn select(&self, keys: &[ColumnKey]) -> Result<FeatureMatrix, MatrixError> {
        let index: HashMap<&ColumnKey, usize> =
            self.columns.iter().enumerate().map(|(i, c)| (c, i)).collect();
        let idx = keys
            .iter()
            .map(|k| index.get(k).copied().ok_or_else(|| MatrixError::MissingColumn(k.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(FeatureMatrix {
            students: self.students.clone(),
            columns: keys.to_vec(),
            data: self.data.select(Axis(1), &idx),
        })
    }

    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            students: rows.iter().map(|&r| self.students[r].clone()).collect(),
            columns: self.columns.clone(),
            data: self.data.select(Axis(0), rows),
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "student_id")?;
        for c in &self.columns {
            write!(w, ",{c}")?;
        }
        writeln!(w)?;
        for (i, s) in self.students.iter().enumerate() {
            write!(w, "{s}")?;
            for v in self.data.row(i) {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<FeatureMatrix, MatrixError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
        let header = rdr.headers().map_err(|e| MatrixError::Format(e.to_string()))?.clone();
        if header.get(0) != Some("student_id") {
            return Err(MatrixError::Format("first column must be student_id".into()));
        }
        let columns = header
            .iter()
            .skip(1)
            .map(|h| h.parse::<ColumnKey>().map_err(MatrixError::Format))
            .collect::<Result<Vec<_>, _>>()?;
        let mut students = Vec::new();
        let mut values = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| MatrixError::Format(e.to_string()))?;
            students.push(rec[0].to_string());
            for v in rec.iter().skip(1) {
                values.push(v.parse::<f64>().map_err(|e| MatrixError::Format(e.to_string()))?);
            }
        }
        let data = Array2::from_shape_vec((students.len(), columns.len()), values)
            .map_err(|e| MatrixError::Format(e.to_string()))?;
        Ok(FeatureMatrix { students, columns, data })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{Family, FeatureId};

    #[test]
    fn csv_roundtrip_and_select() {
        let cols = vec![
            ColumnKey::plain(FeatureId::course_level(Family::Forum)),
            ColumnKey::plain(FeatureId::course_level(Family::LectureClicks)),
        ];
        let m = FeatureMatrix::new(
            vec!["a".into(), "b".into()],
            cols.clone(),
            Array2::from_shape_vec((2, 2), vec![1.0, 0.5, 2.0, 0.25]).unwrap(),
        );
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let back = FeatureMatrix::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, m);
        let sub = m.select(&cols[1..]).unwrap();
        assert_eq!(sub.data.column(0).to_vec(), vec![0.5, 0.25]);
        let missing = ColumnKey::plain(FeatureId::course_level(Family::Eng1));
        assert!(matches!(m.select(&[missing]), Err(MatrixError::MissingColumn(_))));
    }
}
