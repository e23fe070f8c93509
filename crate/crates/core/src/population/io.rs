//! CSV form of a population: a header row, one row per point, feature
//! columns, then a `label` column and an optional `weight` column.

use std::io::{Read, Write};
use std::path::Path;

use super::{LabeledPoint, Population, MASS_TOLERANCE};
use crate::error::{Error, Result};
use crate::numeric::kahan_sum;

impl Population {
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.is_empty() || headers.iter().all(str::is_empty) {
            return Err(Error::Input("population CSV is empty or lacks a header row".into()));
        }
        let label_col = headers
            .iter()
            .position(|h| h == "label")
            .ok_or_else(|| Error::Input("population CSV needs a 'label' column".into()))?;
        let weight_col = headers.iter().position(|h| h == "weight");
        match weight_col {
            Some(w) if w != label_col + 1 || w + 1 != headers.len() => {
                return Err(Error::Input("'weight' must be the last column, directly after 'label'".into()))
            }
            None if label_col + 1 != headers.len() => {
                return Err(Error::Input("'label' must follow the feature columns".into()))
            }
            _ => {}
        }
        if label_col == 0 {
            return Err(Error::Input("population CSV has no feature columns".into()));
        }

        let mut points = Vec::new();
        let mut weights = Vec::new();
        for (row, record) in rdr.records().enumerate() {
            let record = record?;
            let line = row + 2;
            let number = |col: usize| -> Result<f64> {
                record[col]
                    .parse::<f64>()
                    .map_err(|e| Error::Input(format!("line {line}, column '{}': {e}", &headers[col])))
            };
            let features = (0..label_col).map(number).collect::<Result<Vec<_>>>()?;
            let label = record[label_col]
                .parse::<usize>()
                .map_err(|e| Error::Input(format!("line {line}: label must be a non-negative integer: {e}")))?;
            if let Some(w) = weight_col {
                weights.push(number(w)?);
            }
            points.push(LabeledPoint::new(features, label));
        }
        if points.is_empty() {
            return Err(Error::Input("population CSV has no data rows".into()));
        }
        if weight_col.is_none() {
            return Population::uniform(points);
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Input("weights must be finite and non-negative".into()));
        }
        let mass = kahan_sum(weights.iter().copied());
        if !(mass > 0.0) {
            return Err(Error::Input("weights sum to zero".into()));
        }
        if (mass - 1.0).abs() > MASS_TOLERANCE {
            weights.iter_mut().for_each(|w| *w /= mass);
        }
        Population::new(points, weights)
    }

    /// Writes the CSV form. The weight column is omitted for uniform weights.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
        let uniform = self.base_weights.iter().all(|w| *w == self.base_weights[0]);
        let mut header: Vec<String> = (0..self.feature_dim()).map(|i| format!("x{i}")).collect();
        header.push("label".into());
        if !uniform {
            header.push("weight".into());
        }
        wtr.write_record(&header)?;
        for (p, w) in self.points.iter().zip(&self.base_weights) {
            let mut row: Vec<String> = p.features.iter().map(|v| v.to_string()).collect();
            row.push(p.label.to_string());
            if !uniform {
                row.push(w.to_string());
            }
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_features_labels_and_default_weights() {
        let text = "x0,x1,label\n0.5,1.0,0\n-1,2,1\n3,4,1\n";
        let pop = Population::read_csv(text.as_bytes()).unwrap();
        assert_eq!(pop.len(), 3);
        assert_eq!(pop.feature_dim(), 2);
        assert_eq!(pop.labels(), vec![0, 1, 1]);
        assert_eq!(pop.base_weights(), &[1.0 / 3.0; 3]);
    }

    #[test]
    fn weight_column_is_normalized() {
        let text = "a,label,weight\n0,0,1\n1,1,3\n";
        let pop = Population::read_csv(text.as_bytes()).unwrap();
        assert_eq!(pop.base_weights(), &[0.25, 0.75]);
    }

    #[test]
    fn rejects_malformed_files() {
        for text in [
            "",
            "x0,label\n",
            "x0,x1\n1,2\n",
            "label,x0\n0,1\n1,2\n",
            "x0,label\n1,zero\n2,1\n",
            "x0,label\n1,-1\n2,1\n",
            "x0,weight,label\n1,1,0\n2,1,1\n",
            "x0,label,weight\n1,0,-1\n2,1,2\n",
        ] {
            assert!(Population::read_csv(text.as_bytes()).is_err(), "accepted {text:?}");
        }
    }

    #[test]
    fn write_then_read_is_exact() {
        let pts = vec![
            LabeledPoint::new(vec![0.1, 1e-17], 0),
            LabeledPoint::new(vec![-2.5, 1.0 / 3.0], 1),
            LabeledPoint::new(vec![1e300, -0.0], 2),
        ];
        let pop = Population::new(pts, vec![0.2, 0.3, 0.5]).unwrap();
        let mut buf = Vec::new();
        pop.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x0,x1,label,weight\n"));
        assert!(!text.contains('\r'));
        assert_eq!(Population::read_csv(buf.as_slice()).unwrap(), pop);
    }
}
