use std::path::Path;

use maga_core::metrics::evaluate;
use maga_core::net::load_checkpoint;
use maga_core::synth::{read_pgm, read_ppm, read_trimap, write_pgm};

use super::{required_path, write_file};
use crate::config::RunConfig;
use crate::error::CliResult;

/// Predicts one alpha matte into `alpha.pgm`; with `infer.alpha` set, also
/// scores it and writes `metrics.json`.
pub fn run(cfg: &RunConfig, out: &Path) -> CliResult<()> {
    let net = load_checkpoint(&required_path(&cfg.infer.checkpoint, "infer.checkpoint")?, Some(&cfg.net))?;
    let image = read_ppm(&required_path(&cfg.infer.image, "infer.image")?)?;
    let trimap = read_trimap(&required_path(&cfg.infer.trimap, "infer.trimap")?)?;
    let alpha = net.predict(&image, &trimap)?;
    let path = out.join("alpha.pgm");
    write_pgm(&path, &alpha)?;
    println!("wrote {}", path.display());
    if !cfg.infer.alpha.is_empty() {
        let gt = read_pgm(Path::new(&cfg.infer.alpha))?;
        let r = evaluate(&alpha, &gt, &trimap)?;
        println!("sad {:.4}  mse {:.4}  grad {:.4}  conn {:.4}  unknown pixels {}", r.sad, r.mse, r.grad, r.conn, r.n_unknown);
        write_file(&out.join("metrics.json"), format!("{:#}\n", serde_json::to_value(r).expect("plain numbers")))?;
    }
    Ok(())
}
