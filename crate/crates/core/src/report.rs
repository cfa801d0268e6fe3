//! On-disk form of a [`ReportSet`].
//!
//! ```text
//! <out>/report.json                 full nested aggregates and config
//! <out>/table1.csv                  subject, metric, <scheme>_mean, <scheme>_std, ...
//! <out>/runs.csv                    repetition, scheme, metric, subject, value
//! <out>/per_subject_disparity.csv   subject, <scheme>, ...
//! <out>/<scheme>/disparity_avg.csv  repetition-averaged matrix grids
//! <out>/<scheme>/marginal_avg.csv
//! ```
//!
//! Every CSV starts with a `# config: {...}` line holding the resolved
//! configuration. Nothing time-dependent is written, so identical inputs give
//! byte-identical files.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::evaluate::{LosoSummary, ReportSet, Summary};

pub const RUNS_FILE: &str = "runs.csv";
pub const RUNS_ALL_FILE: &str = "runs_all.csv";
pub const SUMMARY_FILE: &str = "summary.csv";

/// `config: <one-line JSON>`, for CSV header comments.
pub fn config_comment<T: Serialize>(config: &T) -> Result<String> {
    Ok(format!("config: {}", serde_json::to_string(config)?))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn comment_lines(out: &mut impl Write, comment: &str) -> Result<()> {
    for line in comment.lines() {
        writeln!(out, "# {line}")?;
    }
    Ok(())
}

fn loso_rows(s: &LosoSummary) -> [(&'static str, Summary); 3] {
    [("train_acc", s.train), ("test_acc", s.test), ("gap", s.gap)]
}

/// Writes every file of the report and returns their paths.
pub fn write_report_set(set: &ReportSet, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let comment = config_comment(&set.config)?;
    let mut written = Vec::new();

    let path = out_dir.join("report.json");
    let mut f = create(&path)?;
    serde_json::to_writer_pretty(&mut f, set)?;
    writeln!(f)?;
    f.flush()?;
    written.push(path);

    let path = out_dir.join("table1.csv");
    write_table1(set, &comment, create(&path)?)?;
    written.push(path);

    let path = out_dir.join(RUNS_FILE);
    write_runs(set, &comment, create(&path)?)?;
    written.push(path);

    let path = out_dir.join("per_subject_disparity.csv");
    let mut f = create(&path)?;
    comment_lines(&mut f, &comment)?;
    let mut w = csv::Writer::from_writer(f);
    let mut header = vec!["subject".to_string()];
    header.extend(set.schemes.iter().map(|s| s.scheme.clone()));
    w.write_record(&header)?;
    for (i, subject) in set.subjects.iter().enumerate() {
        let mut rec = vec![subject.to_string()];
        rec.extend(set.schemes.iter().map(|s| s.per_subject_disparity[i].to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    written.push(path);

    for scheme in &set.schemes {
        let dir = out_dir.join(&scheme.scheme);
        fs::create_dir_all(&dir)?;
        for (name, m) in [("disparity_avg.csv", &scheme.disparity_avg), ("marginal_avg.csv", &scheme.marginal_avg)] {
            let path = dir.join(name);
            let mut f = create(&path)?;
            m.write_csv(&mut f, Some(&comment))?;
            f.flush()?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Table I layout: LOSO rows per subject, then pooled rows and the two shift
/// scalars under subject `all`.
pub fn write_table1<W: Write>(set: &ReportSet, comment: &str, mut out: W) -> Result<()> {
    comment_lines(&mut out, comment)?;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["subject".to_string(), "metric".to_string()];
    for s in &set.schemes {
        header.push(format!("{}_mean", s.scheme));
        header.push(format!("{}_std", s.scheme));
    }
    w.write_record(&header)?;

    let mut row = |subject: &str, metric: &str, cells: Vec<Summary>| -> Result<()> {
        let mut rec = vec![subject.to_string(), metric.to_string()];
        for c in cells {
            rec.push(c.mean.to_string());
            rec.push(c.std.to_string());
        }
        w.write_record(&rec)?;
        Ok(())
    };
    if set.config.loso {
        for (i, subject) in set.subjects.iter().enumerate() {
            for m in 0..3 {
                let cells = set.schemes.iter().map(|s| loso_rows(&s.loso[i].scores)[m].1).collect();
                row(&subject.to_string(), loso_rows(&set.schemes[0].loso[i].scores)[m].0, cells)?;
            }
        }
        for m in 0..3 {
            let overall: Vec<LosoSummary> = set.schemes.iter().filter_map(|s| s.loso_overall).collect();
            let cells = overall.iter().map(|o| loso_rows(o)[m].1).collect();
            row("all", loso_rows(&overall[0])[m].0, cells)?;
        }
    }
    row("all", "conditional_shift", set.schemes.iter().map(|s| s.conditional_shift).collect())?;
    row("all", "marginal_shift", set.schemes.iter().map(|s| s.marginal_shift).collect())?;
    w.flush()?;
    Ok(())
}

/// Long format, one value per line, for boxplots.
pub fn write_runs<W: Write>(set: &ReportSet, comment: &str, mut out: W) -> Result<()> {
    comment_lines(&mut out, comment)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["repetition", "scheme", "metric", "subject", "value"])?;
    for r in &set.runs {
        let rep = r.repetition.to_string();
        w.write_record([&rep, &r.scheme, "conditional_shift", "all", &r.conditional_shift.to_string()])?;
        w.write_record([&rep, &r.scheme, "marginal_shift", "all", &r.marginal_shift.to_string()])?;
        for o in &r.loso {
            let subject = o.subject.to_string();
            for (metric, v) in [("train_acc", o.train_acc), ("test_acc", o.test_acc), ("gap", o.gap)] {
                w.write_record([&rep, &r.scheme, metric, &subject, &v.to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, serde::Deserialize, Serialize)]
pub struct RunRecord {
    pub repetition: usize,
    pub scheme: String,
    pub metric: String,
    pub subject: String,
    pub value: f64,
}

pub fn read_runs(path: &Path) -> Result<Vec<RunRecord>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    r.deserialize()
        .map(|rec| rec.map_err(|e| Error::Parse(format!("{}: {e}", path.display()))))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Consolidated {
    /// `runs.csv` files found, relative to the report directory.
    pub sources: Vec<String>,
    pub records: Vec<RunRecord>,
    /// Keyed by (scheme, metric, subject).
    pub summary: BTreeMap<(String, String, String), (usize, Summary)>,
}

/// Merges `runs.csv` from `out_dir` and its immediate subdirectories into
/// `runs_all.csv` (with a `source` column) and writes `summary.csv` with the
/// mean and spread of every (scheme, metric, subject). A scheme may come from
/// only one source. Rerunning on unchanged inputs rewrites identical files.
pub fn consolidate(out_dir: &Path) -> Result<Consolidated> {
    if !out_dir.is_dir() {
        return Err(Error::Empty(format!("{} is not a directory", out_dir.display())));
    }
    let mut candidates = vec![out_dir.join(RUNS_FILE)];
    let mut subdirs: Vec<PathBuf> = fs::read_dir(out_dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    subdirs.retain(|p| p.is_dir());
    subdirs.sort();
    candidates.extend(subdirs.into_iter().map(|d| d.join(RUNS_FILE)));

    let mut sources = Vec::new();
    let mut records = Vec::new();
    let mut tagged = Vec::new();
    let mut owner: BTreeMap<String, String> = BTreeMap::new();
    for path in candidates.into_iter().filter(|p| p.is_file()) {
        let source = path
            .strip_prefix(out_dir)
            .unwrap_or(&path)
            .to_string_lossy()
            .replace('\\', "/");
        for rec in read_runs(&path)? {
            match owner.get(&rec.scheme) {
                Some(first) if *first != source => {
                    return Err(Error::Config(format!(
                        "scheme {} appears in both {first} and {source}",
                        rec.scheme
                    )))
                }
                Some(_) => {}
                None => {
                    owner.insert(rec.scheme.clone(), source.clone());
                }
            }
            tagged.push(source.clone());
            records.push(rec);
        }
        sources.push(source);
    }
    if sources.is_empty() {
        return Err(Error::Empty(format!("no {RUNS_FILE} under {}", out_dir.display())));
    }

    let mut groups: BTreeMap<(String, String, String), Vec<f64>> = BTreeMap::new();
    for r in &records {
        groups
            .entry((r.scheme.clone(), r.metric.clone(), r.subject.clone()))
            .or_default()
            .push(r.value);
    }
    let summary: BTreeMap<_, _> = groups.into_iter().map(|(k, v)| (k, (v.len(), Summary::of(&v)))).collect();

    let comment = format!("sources: {}", sources.join(" "));
    let mut f = create(&out_dir.join(RUNS_ALL_FILE))?;
    comment_lines(&mut f, &comment)?;
    let mut w = csv::Writer::from_writer(f);
    w.write_record(["source", "repetition", "scheme", "metric", "subject", "value"])?;
    for (src, r) in tagged.iter().zip(&records) {
        w.write_record([
            src.as_str(),
            &r.repetition.to_string(),
            &r.scheme,
            &r.metric,
            &r.subject,
            &r.value.to_string(),
        ])?;
    }
    w.flush()?;

    let mut f = create(&out_dir.join(SUMMARY_FILE))?;
    comment_lines(&mut f, &comment)?;
    let mut w = csv::Writer::from_writer(f);
    w.write_record(["scheme", "metric", "subject", "n", "mean", "std"])?;
    for ((scheme, metric, subject), (n, s)) in &summary {
        w.write_record([
            scheme.as_str(),
            metric,
            subject,
            &n.to_string(),
            &s.mean.to_string(),
            &s.std.to_string(),
        ])?;
    }
    w.flush()?;

    Ok(Consolidated {
        sources,
        records,
        summary,
    })
}
