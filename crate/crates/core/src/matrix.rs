//! Square matrices of pairwise statistics indexed by domain id.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseMatrix {
    ids: Vec<u32>,
    /// Row-major, `ids.len()` squared entries.
    values: Vec<f64>,
}

impl PairwiseMatrix {
    pub fn filled(ids: Vec<u32>, value: f64) -> Self {
        let m = ids.len();
        PairwiseMatrix {
            ids,
            values: vec![value; m * m],
        }
    }

    pub fn from_rows(ids: Vec<u32>, rows: &[Vec<f64>]) -> Result<Self> {
        let m = ids.len();
        if rows.len() != m || rows.iter().any(|r| r.len() != m) {
            return Err(Error::Parse(format!("matrix must be {m}x{m}")));
        }
        Ok(PairwiseMatrix {
            ids,
            values: rows.concat(),
        })
    }

    pub fn size(&self) -> usize {
        self.ids.len()
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.size() + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let m = self.size();
        self.values[i * m + j] = v;
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.values.chunks(self.size().max(1)).map(<[f64]>::to_vec).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn frobenius(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Frobenius norm divided by `M`, the norm of an all-ones `M x M` matrix,
    /// so entries in [0, 1] map to a value in [0, 1].
    pub fn rescaled_frobenius(&self) -> f64 {
        match self.size() {
            0 => 0.0,
            m => self.frobenius() / m as f64,
        }
    }

    pub fn is_symmetric(&self) -> bool {
        let m = self.size();
        (0..m).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    pub fn mean_off_diagonal(&self) -> f64 {
        let m = self.size();
        if m < 2 {
            return 0.0;
        }
        let sum: f64 = (0..m)
            .flat_map(|i| (0..m).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| self.get(i, j))
            .sum();
        sum / (m * (m - 1)) as f64
    }

    /// Elementwise mean of matrices sharing the same ids.
    pub fn mean(matrices: &[PairwiseMatrix]) -> Result<PairwiseMatrix> {
        let first = matrices
            .first()
            .ok_or_else(|| Error::Empty("mean of zero matrices".into()))?;
        if matrices.iter().any(|m| m.ids != first.ids) {
            return Err(Error::Config("matrices cover different domains".into()));
        }
        let n = matrices.len() as f64;
        let values = (0..first.values.len())
            .map(|k| matrices.iter().map(|m| m.values[k]).sum::<f64>() / n)
            .collect();
        Ok(PairwiseMatrix {
            ids: first.ids.clone(),
            values,
        })
    }

    /// Grid CSV: header `subject,<id>,..`, then one row per domain.
    pub fn write_csv<W: Write>(&self, mut out: W, comment: Option<&str>) -> Result<()> {
        if let Some(comment) = comment {
            for line in comment.lines() {
                writeln!(out, "# {line}")?;
            }
        }
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["subject".to_string()];
        header.extend(self.ids.iter().map(u32::to_string));
        w.write_record(&header)?;
        for (i, id) in self.ids.iter().enumerate() {
            let mut rec = vec![id.to_string()];
            rec.extend((0..self.size()).map(|j| self.get(i, j).to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
        let header = r.headers()?.clone();
        let ids = header
            .iter()
            .skip(1)
            .map(|s| s.parse::<u32>().map_err(|_| Error::Parse(format!("bad id {s:?}"))))
            .collect::<Result<Vec<_>>>()?;
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            rows.push(
                rec.iter()
                    .skip(1)
                    .map(|s| s.parse::<f64>().map_err(|_| Error::Parse(format!("bad value {s:?}"))))
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        Self::from_rows(ids, &rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rescaling_bounds() {
        assert_eq!(PairwiseMatrix::filled(vec![0, 1, 2], 0.0).rescaled_frobenius(), 0.0);
        assert!((PairwiseMatrix::filled(vec![0, 1, 2, 3], 1.0).rescaled_frobenius() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn csv_round_trip() {
        let m = PairwiseMatrix::from_rows(vec![4, 7], &[vec![0.0, 0.25], vec![0.25, 1.0 / 3.0]]).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf, Some("k=1")).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("# k=1\nsubject,4,7\n4,0,0.25\n"));
        assert_eq!(PairwiseMatrix::read_csv(buf.as_slice()).unwrap(), m);
    }

    #[test]
    fn non_square_is_rejected() {
        assert!(PairwiseMatrix::read_csv("subject,0,1\n0,1\n".as_bytes()).is_err());
    }

    #[test]
    fn mean_and_off_diagonal() {
        let a = PairwiseMatrix::filled(vec![0, 1], 0.0);
        let b = PairwiseMatrix::from_rows(vec![0, 1], &[vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let avg = PairwiseMatrix::mean(&[a, b]).unwrap();
        assert_eq!(avg.rows(), vec![vec![0.5, 0.25], vec![0.25, 0.5]]);
        assert_eq!(avg.mean_off_diagonal(), 0.25);
        assert!(avg.is_symmetric());
    }
}
