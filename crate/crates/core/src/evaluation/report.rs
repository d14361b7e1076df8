use std::io::Write;
use std::path::Path;

use super::EvalReport;
use crate::dataset::io::create;
use crate::error::{Error, Result};

pub fn write_report(report: &EvalReport, path: &Path) -> Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, report).map_err(|e| Error::Serialization(e.to_string()))?;
    writeln!(out).and_then(|_| out.flush()).map_err(|e| Error::io(path, e))
}

pub fn read_report(path: &Path) -> Result<EvalReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
}

/// `model,class,fpr,tpr,threshold` rows for every curve. The threshold of
/// each curve's `(0, 0)` start is empty.
pub fn roc_csv<'a>(reports: impl IntoIterator<Item = (&'a str, &'a EvalReport)>) -> String {
    let mut out = String::from("model,class,fpr,tpr,threshold\n");
    for (name, report) in reports {
        for (k, curve) in report.roc.iter().enumerate() {
            let class = report.labels.get(k).cloned().unwrap_or_else(|| k.to_string());
            for p in &curve.points {
                let threshold = p.threshold.map(|t| t.to_string()).unwrap_or_default();
                out += &format!("{name},{class},{},{},{threshold}\n", p.fpr, p.tpr);
            }
        }
    }
    out
}

pub fn write_roc_csv<'a>(reports: impl IntoIterator<Item = (&'a str, &'a EvalReport)>, path: &Path) -> Result<()> {
    let mut out = create(path)?;
    out.write_all(roc_csv(reports).as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::evaluate_scores;

    #[test]
    fn report_round_trip_and_csv() {
        let truth = vec![0, 1, 0, 1];
        let scores = vec![vec![0.9, 0.1], vec![0.2, 0.8], vec![0.4, 0.6], vec![0.3, 0.7]];
        let r = evaluate_scores("knn", &truth, &scores, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("reports/knn.json");
        write_report(&r, &path).unwrap();
        assert_eq!(read_report(&path).unwrap(), r);
        let csv = roc_csv([("knn", &r)]);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("model,class,fpr,tpr,threshold"));
        assert_eq!(lines.next(), Some("knn,0,0,0,"));
        assert_eq!(csv.lines().count(), 1 + r.roc.iter().map(|c| c.points.len()).sum::<usize>());
    }
}
