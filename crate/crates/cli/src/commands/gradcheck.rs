use std::path::Path;

use log::info;
use maga_core::autodiff::OpKind;
use maga_core::gradcheck::{self, NETWORK_TOLERANCE, OP_TOLERANCE};
use maga_core::rng::derive_seed;

use super::{csv_text, write_file};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

fn corrupted_op(name: &str) -> CliResult<Option<OpKind>> {
    if name == "none" {
        return Ok(None);
    }
    OpKind::ALL
        .into_iter()
        .find(|op| op.to_string() == name)
        .map(Some)
        .ok_or_else(|| CliError::Usage(format!("gradcheck.corrupt: unknown op {name:?}")))
}

/// Finite-difference suites for every op and for the configured network.
/// Writes `gradcheck.csv`; fails naming every check above its tolerance.
pub fn run(cfg: &RunConfig, out: &Path) -> CliResult<()> {
    let g = &cfg.gradcheck;
    let corrupt = corrupted_op(&g.corrupt)?;
    let mut rows = Vec::new();
    let mut failed = Vec::new();
    let mut record = |kind: &str, name: String, err: f64, probes: usize, tol: f64| {
        let ok = err < tol;
        println!("{kind:<8} {name:<20} max_rel_err {err:.3e}  probes {probes:>6}  {}", if ok { "ok" } else { "FAIL" });
        if !ok {
            failed.push(name.clone());
        }
        rows.push(vec![kind.to_string(), name, err.to_string(), probes.to_string(), tol.to_string(), ok.to_string()]);
    };

    info!("checking {} ops over {} seeds each", OpKind::ALL.len(), g.op_seeds);
    for r in gradcheck::op_suite(cfg.seed, g.op_seeds, corrupt)? {
        record("op", r.op.to_string(), r.outcome.max_rel_err, r.outcome.probes, OP_TOLERANCE);
    }
    for draw in 0..g.network_draws {
        info!("whole-network check, draw {draw}");
        let r = gradcheck::network_check(&cfg.net, derive_seed(cfg.seed, draw as u64), g.per_tensor)?;
        let name = format!("network/{draw}");
        if let Some(p) = &r.worst_param {
            info!("draw {draw}: worst coordinate in {p}");
        }
        record("network", name, r.outcome.max_rel_err, r.outcome.probes, NETWORK_TOLERANCE);
    }
    let header = ["kind", "name", "max_rel_err", "probes", "tolerance", "passed"];
    write_file(&out.join("gradcheck.csv"), csv_text(&header, &rows)?)?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failed(format!("gradient check failed for: {}", failed.join(", "))))
    }
}
