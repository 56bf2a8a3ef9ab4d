use std::path::Path;

use log::info;
use maga_core::net::{save_checkpoint, MattingNet, NetConfig, Sample, Trainer};

use super::{csv_text, training_samples, write_file};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

/// Outcome of one training run.
pub struct Trained {
    pub net: MattingNet,
    /// `(step, lr, loss)` per optimizer step.
    pub log: Vec<(usize, f64, f64)>,
    /// Mean unknown-region L1 over the training set before and after.
    pub initial_loss: f64,
    pub final_loss: f64,
}

pub fn train_network(cfg: &RunConfig, net: NetConfig, samples: &[Sample]) -> CliResult<Trained> {
    if cfg.train.composition_weight > 0.0 && samples.iter().any(|s| s.fg.is_none()) {
        return Err(CliError::Usage(
            "train.composition_weight needs foreground and background layers, which only synthesized data has".into(),
        ));
    }
    let mut trainer = Trainer::new(MattingNet::new(net)?, cfg.train)?;
    let initial_loss = trainer.mean_loss(samples)?;
    let mut log = Vec::with_capacity(cfg.train.steps);
    let every = (cfg.train.steps / 10).max(1);
    let schedule = cfg.train;
    trainer.run(samples, |t, loss| {
        if t % every == 0 || t + 1 == schedule.steps {
            info!("step {t:>5}  loss {loss:.6}");
        }
        log.push((t, schedule.lr_at(t), loss));
    })?;
    let final_loss = trainer.mean_loss(samples)?;
    Ok(Trained { net: trainer.into_net(), log, initial_loss, final_loss })
}

/// Trains on the configured data and writes `loss.csv`, `summary.json` and
/// the `checkpoint/` directory.
pub fn run(cfg: &RunConfig, out: &Path) -> CliResult<()> {
    let data = training_samples(cfg)?;
    let samples: Vec<Sample> = data.into_iter().map(|n| n.sample).collect();
    info!("training on {} samples for {} steps", samples.len(), cfg.train.steps);
    let t = train_network(cfg, cfg.net, &samples)?;

    let rows: Vec<Vec<String>> =
        t.log.iter().map(|(s, lr, l)| vec![s.to_string(), lr.to_string(), l.to_string()]).collect();
    write_file(&out.join("loss.csv"), csv_text(&["step", "lr", "loss"], &rows)?)?;
    save_checkpoint(&t.net, &out.join("checkpoint"))?;
    let summary = serde_json::json!({
        "samples": samples.len(),
        "steps": cfg.train.steps,
        "initial_loss": t.initial_loss,
        "final_loss": t.final_loss,
    });
    write_file(&out.join("summary.json"), format!("{summary:#}\n"))?;
    println!("initial loss {:.6}  final loss {:.6}", t.initial_loss, t.final_loss);
    Ok(())
}
