//! Labeled feature rows and their CSV form.
//!
//! The CSV header is `subject,condition,segment,f0,..,f{d-1}`. Lines starting
//! with `#` are comments; writers use one to embed the producing configuration.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Workload condition of a session. Encoded as class label 0 (low) / 1 (high).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Low,
    High,
}

impl Condition {
    pub fn label(self) -> u32 {
        match self {
            Condition::Low => 0,
            Condition::High => 1,
        }
    }

    pub fn from_label(label: u32) -> Option<Self> {
        match label {
            0 => Some(Condition::Low),
            1 => Some(Condition::High),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Low => "low",
            Condition::High => "high",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "low" | "0" => Ok(Condition::Low),
            "high" | "1" => Ok(Condition::High),
            other => Err(Error::Parse(format!("unknown condition {other:?}"))),
        }
    }
}

/// Which part of a recording a sample or feature row comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentTag {
    Task,
    Baseline1,
    Baseline2,
}

impl SegmentTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SegmentTag::Task => "task",
            SegmentTag::Baseline1 => "baseline1",
            SegmentTag::Baseline2 => "baseline2",
        }
    }
}

impl fmt::Display for SegmentTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SegmentTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "task" => Ok(SegmentTag::Task),
            "baseline1" => Ok(SegmentTag::Baseline1),
            "baseline2" => Ok(SegmentTag::Baseline2),
            other => Err(Error::Parse(format!("unknown segment tag {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub subject: u32,
    pub condition: Option<Condition>,
    pub segment: SegmentTag,
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureTable {
    dim: usize,
    rows: Vec<FeatureRow>,
}

impl FeatureTable {
    pub fn new(dim: usize) -> Self {
        FeatureTable {
            dim,
            rows: Vec::new(),
        }
    }

    pub fn from_rows(dim: usize, rows: Vec<FeatureRow>) -> Result<Self> {
        let mut table = FeatureTable::new(dim);
        for row in rows {
            table.push(row)?;
        }
        Ok(table)
    }

    pub fn push(&mut self, row: FeatureRow) -> Result<()> {
        if row.features.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: row.features.len(),
            });
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn extend(&mut self, other: FeatureTable) -> Result<()> {
        if self.rows.is_empty() && self.dim == 0 {
            self.dim = other.dim;
        }
        for row in other.rows {
            self.push(row)?;
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> &[FeatureRow] {
        &self.rows
    }

    pub fn rows_mut(&mut self) -> &mut [FeatureRow] {
        &mut self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Distinct subject ids in ascending order.
    pub fn subjects(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.rows.iter().map(|r| r.subject).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn write_csv<W: Write>(&self, out: W, comment: Option<&str>) -> Result<()> {
        let mut out = out;
        if let Some(comment) = comment {
            for line in comment.lines() {
                writeln!(out, "# {line}")?;
            }
        }
        let mut writer = csv::Writer::from_writer(out);
        let mut header = vec!["subject".to_string(), "condition".into(), "segment".into()];
        header.extend((0..self.dim).map(|i| format!("f{i}")));
        writer.write_record(&header)?;
        for row in &self.rows {
            let mut record = Vec::with_capacity(3 + self.dim);
            record.push(row.subject.to_string());
            record.push(row.condition.map(|c| c.as_str()).unwrap_or("").to_string());
            record.push(row.segment.as_str().to_string());
            record.extend(row.features.iter().map(|v| v.to_string()));
            writer.write_record(&record)?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(input);
        let header = reader.headers()?.clone();
        let fixed = ["subject", "condition", "segment"];
        if header.len() < 3 || header.iter().take(3).ne(fixed.iter().copied()) {
            return Err(Error::Parse(
                "feature CSV must start with subject,condition,segment".into(),
            ));
        }
        let dim = header.len() - 3;
        let mut table = FeatureTable::new(dim);
        for (line, record) in reader.records().enumerate() {
            let record = record?;
            let parse_err = |what: &str| Error::Parse(format!("row {}: bad {what}", line + 1));
            let subject = record[0].parse().map_err(|_| parse_err("subject"))?;
            let condition = match &record[1] {
                "" => None,
                c => Some(c.parse()?),
            };
            let segment = record[2].parse()?;
            let features = record
                .iter()
                .skip(3)
                .map(|v| v.parse::<f64>().map_err(|_| parse_err("feature value")))
                .collect::<Result<Vec<_>>>()?;
            table.push(FeatureRow {
                subject,
                condition,
                segment,
                features,
            })?;
        }
        Ok(table)
    }

    pub fn read_csv_path(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

/// Dense row-major matrix of feature vectors, the input to the classifiers.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(dim: usize) -> Self {
        FeatureMatrix {
            dim,
            data: Vec::new(),
        }
    }

    pub fn from_rows<I, R>(dim: usize, rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = R>,
        R: AsRef<[f64]>,
    {
        let mut m = FeatureMatrix::new(dim);
        for row in rows {
            m.push(row.as_ref())?;
        }
        Ok(m)
    }

    pub fn push(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: row.len(),
            });
        }
        self.data.extend_from_slice(row);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim.max(1))
    }

    pub fn select(&self, indices: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        FeatureMatrix {
            dim: self.dim,
            data,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> FeatureTable {
        FeatureTable::from_rows(
            2,
            vec![
                FeatureRow {
                    subject: 3,
                    condition: Some(Condition::High),
                    segment: SegmentTag::Task,
                    features: vec![0.1, 2.5e-7],
                },
                FeatureRow {
                    subject: 1,
                    condition: None,
                    segment: SegmentTag::Baseline2,
                    features: vec![-1.0, 1.0 / 3.0],
                },
            ],
        )
        .unwrap()
    }

    #[test]
    fn csv_round_trip_preserves_values_exactly() {
        let table = sample();
        let mut buf = Vec::new();
        table.write_csv(&mut buf, Some("config {\"a\":1}")).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# config"));
        assert!(text.contains("subject,condition,segment,f0,f1\n"));
        let back = FeatureTable::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, table);
    }

    #[test]
    fn rejects_ragged_rows() {
        let mut t = FeatureTable::new(3);
        let err = t
            .push(FeatureRow {
                subject: 0,
                condition: None,
                segment: SegmentTag::Task,
                features: vec![1.0],
            })
            .unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 3, found: 1 }));
    }

    #[test]
    fn rejects_wrong_header() {
        let err = FeatureTable::read_csv("a,b,c\n1,2,3\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse(_)));
    }

    #[test]
    fn subjects_are_sorted_and_unique() {
        assert_eq!(sample().subjects(), vec![1, 3]);
    }

    #[test]
    fn matrix_select_and_rows() {
        let m = FeatureMatrix::from_rows(2, [[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]).unwrap();
        assert_eq!(m.len(), 3);
        let s = m.select(&[2, 0]);
        assert_eq!(s.row(0), &[5.0, 6.0]);
        assert_eq!(s.rows().count(), 2);
    }
}
