//! Line-oriented training metrics log: one tab-separated record per value,
//! `step<TAB>name<TAB>value`. The fixed formatting makes logs byte-identical
//! across runs with identical numbers.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::losses::LossReport;
use crate::{Error, Result, Scalar};

/// Buffered appender for the metrics log.
pub struct MetricsWriter {
    out: BufWriter<File>,
    path: PathBuf,
}

impl MetricsWriter {
    /// Creates (truncating) a new log file.
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(MetricsWriter {
            out: BufWriter::new(file),
            path: path.to_path_buf(),
        })
    }

    /// Opens an existing log for appending (used when resuming a run).
    pub fn append(path: &Path) -> Result<Self> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(MetricsWriter {
            out: BufWriter::new(file),
            path: path.to_path_buf(),
        })
    }

    /// Writes one `step name value` record.
    pub fn record_value(&mut self, step: u64, name: &str, value: f64) -> Result<()> {
        writeln!(self.out, "{step}\t{name}\t{value:.9e}").map_err(|e| Error::io(&self.path, e))
    }

    /// Writes every entry of a loss report under the given step.
    pub fn record<S: Scalar>(&mut self, step: u64, report: &LossReport<S>) -> Result<()> {
        for (name, value) in report.entries() {
            self.record_value(step, name, value.as_f64())?;
        }
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// One parsed record of the metrics log.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub step: u64,
    pub name: String,
    pub value: f64,
}

/// Reads a whole metrics log. Malformed lines are data errors naming the
/// line number.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let mut parts = line.splitn(3, '\t');
        let (step, name, value) = (parts.next(), parts.next(), parts.next());
        let parsed = (|| -> Option<MetricsRow> {
            Some(MetricsRow {
                step: step?.parse().ok()?,
                name: name?.to_string(),
                value: value?.parse().ok()?,
            })
        })();
        match parsed {
            Some(row) => rows.push(row),
            None => {
                return Err(Error::Data(format!(
                    "malformed metrics record at {}:{}",
                    path.display(),
                    lineno + 1
                )))
            }
        }
    }
    Ok(rows)
}

/// The series of values carrying `name`, ordered as written.
pub fn series(rows: &[MetricsRow], name: &str) -> Vec<(u64, f64)> {
    rows.iter()
        .filter(|r| r.name == name)
        .map(|r| (r.step, r.value))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn report(x: f64) -> LossReport<f64> {
        LossReport {
            style: x,
            patch_g: x + 0.1,
            patch_d: x + 0.2,
            adv_g: x + 0.3,
            adv_d: x + 0.4,
            recon_image: x + 0.5,
            recon_content: x + 0.6,
            recon_style: x + 0.7,
            total_g: x + 0.8,
            total_d: x + 0.9,
        }
    }

    #[test]
    fn round_trip_and_series() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("metrics.tsv");
        let mut w = MetricsWriter::create(&path).unwrap();
        w.record(1, &report(0.5)).unwrap();
        w.record(2, &report(0.25)).unwrap();
        w.flush().unwrap();

        let rows = read_metrics(&path).unwrap();
        assert_eq!(rows.len(), 20);
        assert_eq!(rows[0].step, 1);
        assert_eq!(rows[0].name, "style");
        assert!((rows[0].value - 0.5).abs() < 1e-12);
        let s = series(&rows, "total_G");
        assert_eq!(s.len(), 2);
        assert_eq!(s[1].0, 2);
        assert!((s[1].1 - 1.05).abs() < 1e-12);
    }

    #[test]
    fn append_continues_the_file() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("metrics.tsv");
        let mut w = MetricsWriter::create(&path).unwrap();
        w.record_value(1, "style", 1.0).unwrap();
        w.flush().unwrap();
        drop(w);
        let mut w2 = MetricsWriter::append(&path).unwrap();
        w2.record_value(2, "style", 2.0).unwrap();
        w2.flush().unwrap();
        let rows = read_metrics(&path).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].step, 2);
    }

    #[test]
    fn identical_reports_produce_identical_bytes() {
        let dir = tempdir().unwrap();
        let (p1, p2) = (dir.path().join("a.tsv"), dir.path().join("b.tsv"));
        for p in [&p1, &p2] {
            let mut w = MetricsWriter::create(p).unwrap();
            w.record(1, &report(0.125)).unwrap();
            w.flush().unwrap();
        }
        assert_eq!(
            std::fs::read(&p1).unwrap(),
            std::fs::read(&p2).unwrap()
        );
    }

    #[test]
    fn malformed_line_is_a_data_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.tsv");
        std::fs::write(&path, "1\tstyle\t0.5\nnot a record\n").unwrap();
        match read_metrics(&path) {
            Err(Error::Data(msg)) => assert!(msg.contains(":2"), "message: {msg}"),
            other => panic!("expected data error, got {other:?}"),
        }
        assert!(read_metrics(&dir.path().join("missing.tsv")).is_err());
    }
}
