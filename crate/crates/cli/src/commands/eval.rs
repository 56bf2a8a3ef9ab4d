use std::path::Path;

use log::info;
use maga_core::metrics::{evaluate, mean_row, write_csv_report, write_jsonl_report, ReportRow};
use maga_core::net::load_checkpoint;

use super::{load_manifest, required_path};
use crate::config::{PredictionSource, RunConfig};
use crate::error::CliResult;

/// Scores every manifest entry and writes `eval.csv` and `eval.jsonl`, each
/// with a trailing mean row.
pub fn run(cfg: &RunConfig, out: &Path) -> CliResult<()> {
    let manifest = required_path(&cfg.data.manifest, "data.manifest")?;
    let data = load_manifest(&manifest)?;
    let net = match cfg.eval.source {
        PredictionSource::Net => {
            let dir = required_path(&cfg.eval.checkpoint, "eval.checkpoint")?;
            Some(load_checkpoint(&dir, Some(&cfg.net))?)
        }
        _ => None,
    };
    let mut rows = Vec::with_capacity(data.len());
    for d in &data {
        let s = &d.sample;
        let pred = match (&net, cfg.eval.source) {
            (Some(n), _) => n.predict(&s.image, &s.trimap)?,
            (None, PredictionSource::Trimap) => s.trimap.clone(),
            _ => s.alpha.clone(),
        };
        let report = evaluate(&pred, &s.alpha, &s.trimap)?;
        info!("{}: sad {:.4} mse {:.4} grad {:.4} conn {:.4}", d.name, report.sad, report.mse, report.grad, report.conn);
        rows.push(ReportRow { path: d.name.clone(), report });
    }
    write_csv_report(&out.join("eval.csv"), &rows)?;
    write_jsonl_report(&out.join("eval.jsonl"), &rows)?;
    let [sad, mse, grad, conn, _] = mean_row(&rows);
    println!("{} images  mean sad {sad:.4}  mse {mse:.4}  grad {grad:.4}  conn {conn:.4}", rows.len());
    Ok(())
}
