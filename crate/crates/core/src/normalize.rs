//! Subject-wise feature normalization.
//!
//! Every scheme except `none` maps a row `x` of subject `s` to
//! `(x - beta_s) / gamma_s^e`, where `beta_s` and `gamma_s` are the per-feature
//! mean and population standard deviation of one segment of that subject's
//! own rows: task rows for whitening, baseline rows for the baseline schemes.
//! No statistic ever mixes subjects.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::{FeatureTable, SegmentTag};

/// Added to every standard deviation before division.
pub const GAMMA_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    None,
    Whitening,
    Baseline1,
    Baseline2,
}

impl NormKind {
    pub const ALL: [NormKind; 4] = [
        NormKind::None,
        NormKind::Whitening,
        NormKind::Baseline1,
        NormKind::Baseline2,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NormKind::None => "none",
            NormKind::Whitening => "whitening",
            NormKind::Baseline1 => "baseline1",
            NormKind::Baseline2 => "baseline2",
        }
    }

    /// Segment whose rows supply the statistics.
    pub fn source_segment(self) -> Option<SegmentTag> {
        match self {
            NormKind::None => None,
            NormKind::Whitening => Some(SegmentTag::Task),
            NormKind::Baseline1 => Some(SegmentTag::Baseline1),
            NormKind::Baseline2 => Some(SegmentTag::Baseline2),
        }
    }
}

impl fmt::Display for NormKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NormKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NormKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Parse(format!("unknown normalization scheme {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormScheme {
    pub kind: NormKind,
    /// Power applied to the standard deviation in the denominator (1 or 2).
    pub exponent: u8,
}

impl NormScheme {
    pub fn new(kind: NormKind, exponent: u8) -> Result<Self> {
        if !(1..=2).contains(&exponent) {
            return Err(Error::Config(format!(
                "normalization exponent must be 1 or 2, got {exponent}"
            )));
        }
        Ok(NormScheme { kind, exponent })
    }

    pub fn of(kind: NormKind) -> Self {
        NormScheme { kind, exponent: 1 }
    }

    /// Report label: the kind name, suffixed `-e2` for the squared exponent.
    pub fn label(&self) -> String {
        match (self.kind, self.exponent) {
            (NormKind::None, _) | (_, 1) => self.kind.as_str().to_string(),
            (kind, e) => format!("{kind}-e{e}"),
        }
    }
}

impl fmt::Display for NormScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub subject: u32,
    pub scheme: NormKind,
    pub source_segment: SegmentTag,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
}

/// Per-feature mean and population standard deviation of one subject's rows
/// in the scheme's source segment.
pub fn compute_norm_stats(table: &FeatureTable, subject: u32, scheme: NormScheme) -> Result<NormStats> {
    let Some(segment) = scheme.kind.source_segment() else {
        return Err(Error::Config("scheme none has no statistics".into()));
    };
    let rows: Vec<&[f64]> = table
        .rows()
        .iter()
        .filter(|r| r.subject == subject && r.segment == segment)
        .map(|r| r.features.as_slice())
        .collect();
    if rows.is_empty() && segment != SegmentTag::Task {
        return Err(Error::MissingBaseline {
            subject,
            segment: segment.as_str(),
        });
    }
    if rows.len() < 2 {
        return Err(Error::DegenerateStats {
            subject,
            segment: segment.as_str(),
            rows: rows.len(),
        });
    }
    let n = rows.len() as f64;
    let dim = table.dim();
    let mut beta = vec![0.0; dim];
    for r in &rows {
        for (b, v) in beta.iter_mut().zip(r.iter()) {
            *b += v;
        }
    }
    beta.iter_mut().for_each(|b| *b /= n);
    let mut var = vec![0.0; dim];
    for r in &rows {
        for ((s, v), b) in var.iter_mut().zip(r.iter()).zip(&beta) {
            *s += (v - b) * (v - b);
        }
    }
    let gamma = var.into_iter().map(|s| (s / n).sqrt()).collect();
    Ok(NormStats {
        subject,
        scheme: scheme.kind,
        source_segment: segment,
        beta,
        gamma,
    })
}

/// Statistics for every subject in the table.
pub fn compute_all_stats(table: &FeatureTable, scheme: NormScheme) -> Result<BTreeMap<u32, NormStats>> {
    if scheme.kind == NormKind::None {
        return Ok(BTreeMap::new());
    }
    table
        .subjects()
        .into_iter()
        .map(|s| Ok((s, compute_norm_stats(table, s, scheme)?)))
        .collect()
}

/// Transforms every row with its own subject's statistics. Row order and
/// labels are preserved; `none` returns the input unchanged.
pub fn apply_normalization(
    table: &FeatureTable,
    stats: &BTreeMap<u32, NormStats>,
    scheme: NormScheme,
) -> Result<FeatureTable> {
    if scheme.kind == NormKind::None {
        return Ok(table.clone());
    }
    let mut out = table.clone();
    for row in out.rows_mut() {
        let st = stats.get(&row.subject).ok_or(Error::MissingStats(row.subject))?;
        if st.beta.len() != row.features.len() {
            return Err(Error::DimensionMismatch {
                expected: row.features.len(),
                found: st.beta.len(),
            });
        }
        for ((x, b), g) in row.features.iter_mut().zip(&st.beta).zip(&st.gamma) {
            *x = (*x - b) / (g + GAMMA_EPSILON).powi(scheme.exponent as i32);
        }
    }
    Ok(out)
}

/// Computes statistics for every subject and applies them.
pub fn normalize(table: &FeatureTable, scheme: NormScheme) -> Result<FeatureTable> {
    let stats = compute_all_stats(table, scheme)?;
    apply_normalization(table, &stats, scheme)
}
