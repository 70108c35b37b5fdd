//! Shared mini-batch training loop and CSV training logs.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{AdamW, AdamWConfig, GradBuffer, ParamStore, StepDecay};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub weight_decay: f64,
    /// The learning rate is multiplied by `decay_factor` every `decay_every` epochs.
    pub decay_every: usize,
    pub decay_factor: f64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn schedule(&self) -> StepDecay {
        StepDecay {
            base_lr: self.lr,
            every: self.decay_every,
            factor: self.decay_factor,
        }
    }

    pub fn optimizer(&self, store: &ParamStore) -> AdamW {
        AdamW::new(
            AdamWConfig {
                lr: self.lr,
                weight_decay: self.weight_decay,
                ..AdamWConfig::default()
            },
            store,
        )
    }
}

/// One row of a training log.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    pub extra: Vec<(String, f64)>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub rows: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,lr,loss");
        if let Some(first) = self.rows.first() {
            for (k, _) in &first.extra {
                out.push(',');
                out.push_str(k);
            }
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!("{},{},{}", r.epoch, r.lr, r.loss));
            for (_, v) in &r.extra {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_csv().as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn last_loss(&self) -> Option<f64> {
        self.rows.last().map(|r| r.loss)
    }
}

/// Runs `cfg.epochs` epochs over `n` samples in seeded random mini-batches.
/// `step` returns the batch loss and its gradient; `after_epoch` may append
/// extra columns to the epoch's log row.
pub fn fit<S, E>(
    n: usize,
    cfg: &TrainConfig,
    store: &mut ParamStore,
    opt: &mut AdamW,
    mut step: S,
    mut after_epoch: E,
) -> Result<TrainLog>
where
    S: FnMut(&ParamStore, &[usize], &mut ChaCha8Rng) -> Result<(f64, GradBuffer)>,
    E: FnMut(usize, &ParamStore) -> Result<Vec<(String, f64)>>,
{
    if n == 0 {
        return Err(Error::Config("no training samples".into()));
    }
    if cfg.batch == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let sched = cfg.schedule();
    let mut log = TrainLog::default();
    let mut idx: Vec<usize> = (0..n).collect();
    for epoch in 0..cfg.epochs {
        let lr = sched.lr_at(epoch);
        opt.set_lr(lr);
        idx.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in idx.chunks(cfg.batch) {
            let (loss, grads) = step(store, chunk, &mut rng)?;
            opt.step(store, &grads)?;
            total += loss;
            batches += 1;
        }
        let extra = after_epoch(epoch, store)?;
        let rec = EpochRecord {
            epoch,
            lr,
            loss: total / batches as f64,
            extra,
        };
        log::info!("epoch {epoch} lr {lr:.3e} loss {:.6}", rec.loss);
        log.rows.push(rec);
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{ParamId, Tape, Tensor};

    #[test]
    fn fits_a_quadratic() {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::new(vec![1], vec![3.0]).unwrap()).unwrap();
        let cfg = TrainConfig {
            epochs: 200,
            lr: 0.1,
            batch: 2,
            weight_decay: 0.0,
            decay_every: 50,
            decay_factor: 0.9,
            seed: 0,
        };
        let mut opt = cfg.optimizer(&store);
        let log = fit(
            4,
            &cfg,
            &mut store,
            &mut opt,
            |s, _, _| {
                let t = Tape::new();
                let w = t.param(s, id);
                let l = w.add_scalar(-1.0).mul(&w.add_scalar(-1.0))?.sum();
                let mut g = GradBuffer::new(s);
                let v = l.item();
                t.backward(l)?.accumulate(&mut g);
                Ok((v, g))
            },
            |_, _| Ok(vec![]),
        )
        .unwrap();
        assert!((store.get(ParamId(0)).data[0] - 1.0).abs() < 1e-2);
        assert_eq!(log.rows.len(), 200);
        assert!(log.to_csv().starts_with("epoch,lr,loss\n0,0.1,"));
    }
}
