use std::collections::BTreeSet;
use std::io::{Read, Write};

use crate::error::{Error, Result};

/// Dense row-major matrix of feature vectors keyed by entity id.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    ids: Vec<String>,
    columns: Vec<String>,
    values: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(ids: Vec<String>, columns: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if ids.len() != rows.len() {
            return Err(Error::InvalidArgument(format!(
                "{} ids for {} rows",
                ids.len(),
                rows.len()
            )));
        }
        let d = columns.len();
        let mut values = Vec::with_capacity(rows.len() * d);
        for (id, row) in ids.iter().zip(&rows) {
            if row.len() != d {
                return Err(Error::InvalidArgument(format!(
                    "row `{id}` has {} values, expected {d}",
                    row.len()
                )));
            }
            values.extend_from_slice(row);
        }
        let unique: BTreeSet<&str> = ids.iter().map(String::as_str).collect();
        if unique.len() != ids.len() {
            return Err(Error::InvalidArgument("entity ids must be unique".into()));
        }
        Ok(Self { ids, columns, values })
    }

    pub fn n_rows(&self) -> usize {
        self.ids.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.n_cols();
        &self.values[i * d..(i + 1) * d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.n_rows()).map(move |i| self.row(i))
    }

    /// Column-wise z-scores (population standard deviation). Constant
    /// columns are centered but not scaled.
    pub fn standardized(&self) -> FeatureMatrix {
        let n = self.n_rows().max(1) as f64;
        let d = self.n_cols();
        let mut mean = vec![0.0; d];
        for row in self.rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for row in self.rows() {
            for j in 0..d {
                var[j] += (row[j] - mean[j]).powi(2);
            }
        }
        let sd: Vec<f64> = var.iter().map(|v| (v / n).sqrt()).collect();
        let values = self
            .values
            .chunks(d.max(1))
            .flat_map(|row| {
                row.iter()
                    .enumerate()
                    .map(|(j, v)| {
                        if sd[j] > 0.0 {
                            (v - mean[j]) / sd[j]
                        } else {
                            v - mean[j]
                        }
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        FeatureMatrix {
            ids: self.ids.clone(),
            columns: self.columns.clone(),
            values,
        }
    }

    /// CSV with an `entity_id` column followed by one column per feature.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["entity_id".to_string()];
        header.extend(self.columns.iter().cloned());
        wtr.write_record(&header)?;
        for (i, id) in self.ids.iter().enumerate() {
            let mut rec = vec![id.clone()];
            rec.extend(self.row(i).iter().map(|v| v.to_string()));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.is_empty() || &header[0] != "entity_id" {
            return Err(Error::SchemaMismatch("feature CSV must start with `entity_id`".into()));
        }
        let columns: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut ids = Vec::new();
        let mut rows = Vec::new();
        for record in rdr.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line());
            ids.push(record[0].to_string());
            let row = record
                .iter()
                .skip(1)
                .map(|v| {
                    v.trim().parse::<f64>().map_err(|_| Error::Parse {
                        path: "features.csv".into(),
                        line,
                        message: format!("bad number `{v}`"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Self::new(ids, columns, rows)
    }
}
