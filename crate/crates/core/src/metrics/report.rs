use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::MetricReport;

/// One evaluated image.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub path: String,
    pub report: MetricReport,
}

/// Means of sad, mse, grad, conn and n_unknown over `rows`.
pub fn mean_row(rows: &[ReportRow]) -> [f64; 5] {
    let mut acc = [0.0; 5];
    for r in rows {
        let m = &r.report;
        for (a, v) in acc.iter_mut().zip([m.sad, m.mse, m.grad, m.conn, m.n_unknown as f64]) {
            *a += v;
        }
    }
    acc.map(|a| if rows.is_empty() { 0.0 } else { a / rows.len() as f64 })
}

fn write(path: &Path, bytes: Vec<u8>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// `path,sad,mse,grad,conn,n_unknown` rows followed by a `mean` row.
pub fn write_csv_report(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| Error::format(path, e.to_string());
    w.write_record(["path", "sad", "mse", "grad", "conn", "n_unknown"]).map_err(fail)?;
    for r in rows {
        let m = &r.report;
        w.write_record([r.path.clone(), m.sad.to_string(), m.mse.to_string(), m.grad.to_string(), m.conn.to_string(), m.n_unknown.to_string()])
            .map_err(fail)?;
    }
    let mean = mean_row(rows);
    let mut record = vec!["mean".to_string()];
    record.extend(mean.iter().map(|v| v.to_string()));
    w.write_record(&record).map_err(fail)?;
    let bytes = w.into_inner().map_err(|e| Error::format(path, e.to_string()))?;
    write(path, bytes)
}

/// One JSON object per line with the CSV fields, the last being the mean.
pub fn write_jsonl_report(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let mut out = String::new();
    for r in rows {
        let m = &r.report;
        let line = serde_json::json!({
            "path": r.path,
            "sad": m.sad,
            "mse": m.mse,
            "grad": m.grad,
            "conn": m.conn,
            "n_unknown": m.n_unknown,
        });
        out += &format!("{line}\n");
    }
    let [sad, mse, grad, conn, n] = mean_row(rows);
    let line = serde_json::json!({ "path": "mean", "sad": sad, "mse": mse, "grad": grad, "conn": conn, "n_unknown": n });
    out += &format!("{line}\n");
    write(path, out.into_bytes())
}
