use std::path::Path;

use log::info;
use maga_core::gradcheck::{self, OP_TOLERANCE};
use maga_core::maga::{BranchSet, MagaConfig};
use maga_core::metrics::evaluate;
use maga_core::net::{NetConfig, Sample};
use maga_core::rng::derive_seed;
use maga_core::synth::make_dataset;

use super::train::train_network;
use super::{csv_text, sample_from_pair, training_samples, write_file};
use crate::config::{AblationAxis, RunConfig};
use crate::error::{CliError, CliResult};

/// Token grid of the reduced-width block check.
const BLOCK_CHECK_GRID: usize = 4;
/// Embedding width of the block check; every probe is exhaustive, so the
/// block is kept narrow.
const BLOCK_CHECK_DIM: usize = 4;

/// Network variants along `axis`, each labelled by its knob value.
pub fn variants(base: &NetConfig, axis: AblationAxis) -> Vec<(String, NetConfig)> {
    match axis {
        AblationAxis::KernelSize => MagaConfig::KERNEL_SIZES
            .iter()
            .map(|&k| (k.to_string(), NetConfig { kernel_size: k, ..*base }))
            .collect(),
        AblationAxis::BranchSet => BranchSet::ablation_rows()
            .into_iter()
            .map(|b| (b.to_string(), NetConfig { branches: b, ..*base }))
            .collect(),
        AblationAxis::NMagaBlocks => {
            (0..=base.depth).map(|n| (n.to_string(), NetConfig { n_maga_blocks: n, ..*base })).collect()
        }
    }
}

/// Trains and evaluates every variant under the same seed and data, runs an
/// exhaustive gradient check on each kind of encoder block it contains, and
/// writes `ablate.csv`.
pub fn run(cfg: &RunConfig, out: &Path) -> CliResult<()> {
    let train: Vec<Sample> = training_samples(cfg)?.into_iter().map(|n| n.sample).collect();
    let held_out: Vec<Sample> = make_dataset(cfg.data.eval_n, derive_seed(cfg.seed, 1), cfg.net.height, cfg.net.width)?
        .into_iter()
        .map(sample_from_pair)
        .collect();
    let axis = cfg.ablate.axis;
    let mut rows = Vec::new();
    let mut failed = Vec::new();
    let mut shapes: Vec<Vec<usize>> = Vec::new();
    for (label, net) in variants(&cfg.net, axis) {
        net.validate()?;
        info!("{axis} = {label}: training");
        let t = train_network(cfg, net, &train)?;

        let mut sums = [0.0; 4];
        for s in &held_out {
            let pred = t.net.predict(&s.image, &s.trimap)?;
            shapes.push(pred.shape().to_vec());
            let r = evaluate(&pred, &s.alpha, &s.trimap)?;
            for (acc, v) in sums.iter_mut().zip([r.sad, r.mse, r.grad, r.conn]) {
                *acc += v / held_out.len() as f64;
            }
        }

        info!("{axis} = {label}: gradient checks");
        let m = MagaConfig { embed_dim: BLOCK_CHECK_DIM, heads: 1, ..net.maga() };
        let block = |present: bool, morpho: bool| -> CliResult<Option<f64>> {
            Ok(if present { Some(gradcheck::block_check(&m, BLOCK_CHECK_GRID, cfg.seed, morpho)?.max_rel_err) } else { None })
        };
        let maga_err = block(net.n_maga_blocks > 0, true)?;
        let plain_err = block(net.n_maga_blocks < net.depth, false)?;
        let passed = [maga_err, plain_err].iter().flatten().all(|e| *e < OP_TOLERANCE);
        if !passed {
            failed.push(label.clone());
        }

        let shape_str = shapes[shapes.len() - 1].iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x");
        println!(
            "{axis}={label:<10} params {:>7}  loss {:.4} -> {:.4}  sad {:.4} mse {:.4} grad {:.4} conn {:.4}  gradcheck {}",
            t.net.store.num_scalars(),
            t.initial_loss,
            t.final_loss,
            sums[0],
            sums[1],
            sums[2],
            sums[3],
            if passed { "ok" } else { "FAIL" }
        );
        rows.push(vec![
            axis.to_string(),
            label,
            t.net.store.num_scalars().to_string(),
            shape_str,
            t.initial_loss.to_string(),
            t.final_loss.to_string(),
            sums[0].to_string(),
            sums[1].to_string(),
            sums[2].to_string(),
            sums[3].to_string(),
            maga_err.map_or(String::new(), |e| e.to_string()),
            plain_err.map_or(String::new(), |e| e.to_string()),
            passed.to_string(),
        ]);
    }
    let header = [
        "axis", "value", "params", "alpha_shape", "initial_loss", "final_loss", "sad", "mse", "grad", "conn",
        "maga_block_rel_err", "plain_block_rel_err", "gradcheck_passed",
    ];
    write_file(&out.join("ablate.csv"), csv_text(&header, &rows)?)?;
    if shapes.windows(2).any(|w| w[0] != w[1]) {
        return Err(CliError::Failed("variants produced differently shaped mattes".into()));
    }
    if !failed.is_empty() {
        return Err(CliError::Failed(format!("gradient check failed for {axis} = {}", failed.join(", "))));
    }
    Ok(())
}
