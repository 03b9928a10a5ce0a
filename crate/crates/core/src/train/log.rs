//! Tab-separated, append-only training logs.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const LOSS_LOG_HEADER: &str = "step\td_loss\tg_loss\twall_time";
pub const EVAL_LOG_HEADER: &str = "epoch\tstep\taverage_outlier_pct";

/// One row per training step.
pub struct LossLog {
    path: PathBuf,
    out: BufWriter<File>,
}

impl LossLog {
    /// Creates the log, or on resume keeps only rows for steps before
    /// `resume_step` and appends after them.
    pub fn open(path: &Path, resume_step: Option<u64>) -> Result<Self> {
        let kept = match resume_step {
            Some(s) if path.exists() => read_rows(path, LOSS_LOG_HEADER, |r| r[0].parse::<u64>().ok().filter(|&v| v < s))?,
            _ => Vec::new(),
        };
        let out = rewrite(path, LOSS_LOG_HEADER, &kept)?;
        Ok(Self {
            path: path.to_path_buf(),
            out,
        })
    }

    pub fn append(&mut self, step: u64, d_loss: f64, g_loss: f64, wall_time: f64) -> Result<()> {
        writeln!(self.out, "{step}\t{d_loss}\t{g_loss}\t{wall_time:.3}").map_err(|e| Error::io(&self.path, e))
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EvalRecord {
    /// Number of completed epochs when the evaluation ran.
    pub epoch: u64,
    pub step: u64,
    pub average_outlier_pct: f64,
}

/// One row per evaluated epoch.
pub struct EvalLog {
    path: PathBuf,
    out: BufWriter<File>,
}

impl EvalLog {
    /// Creates the log, or on resume keeps only rows for epochs up to and
    /// including `completed_epochs`.
    pub fn open(path: &Path, completed_epochs: Option<u64>) -> Result<Self> {
        let kept = match completed_epochs {
            Some(e) if path.exists() => {
                read_rows(path, EVAL_LOG_HEADER, |r| r[0].parse::<u64>().ok().filter(|&v| v <= e))?
            }
            _ => Vec::new(),
        };
        let out = rewrite(path, EVAL_LOG_HEADER, &kept)?;
        Ok(Self {
            path: path.to_path_buf(),
            out,
        })
    }

    pub fn append(&mut self, rec: &EvalRecord) -> Result<()> {
        writeln!(self.out, "{}\t{}\t{}", rec.epoch, rec.step, rec.average_outlier_pct)
            .and_then(|_| self.out.flush())
            .map_err(|e| Error::io(&self.path, e))
    }
}

/// Parsed loss log rows: (step, d_loss, g_loss, wall_time).
pub fn read_loss_log(path: &Path) -> Result<Vec<(u64, f64, f64, f64)>> {
    let rows = read_rows(path, LOSS_LOG_HEADER, |_| Some(()))?;
    rows.iter()
        .map(|line| {
            let f: Vec<&str> = line.split('\t').collect();
            let parsed = (|| {
                Some((
                    f.first()?.parse().ok()?,
                    f.get(1)?.parse().ok()?,
                    f.get(2)?.parse().ok()?,
                    f.get(3)?.parse().ok()?,
                ))
            })();
            parsed.ok_or_else(|| Error::format(path, format!("bad loss row: {line}")))
        })
        .collect()
}

pub fn read_eval_log(path: &Path) -> Result<Vec<EvalRecord>> {
    let rows = read_rows(path, EVAL_LOG_HEADER, |_| Some(()))?;
    rows.iter()
        .map(|line| {
            let f: Vec<&str> = line.split('\t').collect();
            let parsed = (|| {
                Some(EvalRecord {
                    epoch: f.first()?.parse().ok()?,
                    step: f.get(1)?.parse().ok()?,
                    average_outlier_pct: f.get(2)?.parse().ok()?,
                })
            })();
            parsed.ok_or_else(|| Error::format(path, format!("bad eval row: {line}")))
        })
        .collect()
}

/// Data lines whose fields pass `keep`, header checked.
fn read_rows<T>(path: &Path, header: &str, keep: impl Fn(&[&str]) -> Option<T>) -> Result<Vec<String>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    match lines.next() {
        Some(Ok(h)) if h == header => {}
        _ => return Err(Error::format(path, format!("expected header `{header}`"))),
    }
    let mut out = Vec::new();
    for line in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if keep(&fields).is_some() {
            out.push(line);
        }
    }
    Ok(out)
}

fn rewrite(path: &Path, header: &str, rows: &[String]) -> Result<BufWriter<File>> {
    let file = OpenOptions::new()
        .create(true)
        .write(true)
        .truncate(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "{header}").map_err(|e| Error::io(path, e))?;
    for r in rows {
        writeln!(out, "{r}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))?;
    Ok(out)
}
