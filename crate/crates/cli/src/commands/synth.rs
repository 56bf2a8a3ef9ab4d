use std::path::Path;

use maga_core::synth::{make_dataset, write_dataset};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

/// Writes `data.n` synthesized pairs at the network resolution plus a
/// manifest.
pub fn run(cfg: &RunConfig, out: &Path) -> CliResult<()> {
    let pairs = make_dataset(cfg.data.n, cfg.seed, cfg.net.height, cfg.net.width)?;
    for (i, p) in pairs.iter().enumerate() {
        let err = p.composite_error();
        if !(err <= 1e-12) {
            return Err(CliError::Failed(format!("pair {i} breaks the compositing equation by {err:e}")));
        }
    }
    let manifest = write_dataset(out, &pairs)?;
    println!("wrote {} pairs, manifest {}", pairs.len(), manifest.display());
    Ok(())
}
