//! L1 training with Adam and a step-halving learning rate.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use num_traits::Float;

use crate::autograd::Tape;
use crate::data::{check_scale, draw_batch, ImagePair, NormStats};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelParams, Network};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch: usize,
    /// HR patch side; the LR side is `patch / scale`.
    pub patch: usize,
    pub iters_per_epoch: usize,
    pub epochs: usize,
    pub lr_half_every: usize,
    pub seed: u64,
    pub scale: usize,
    pub checkpoint_every: usize,
    /// Loss-log cadence in iterations. The first and last iteration of an
    /// epoch are always logged.
    pub log_every: usize,
}

impl TrainConfig {
    pub fn new(scale: usize, seed: u64) -> Self {
        TrainConfig {
            lr0: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch: 16,
            patch: 192,
            iters_per_epoch: 1000,
            epochs: 1000,
            lr_half_every: 200,
            seed,
            scale,
            checkpoint_every: 10,
            log_every: 100,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_scale(self.scale)?;
        let positive = [
            ("batch", self.batch),
            ("patch", self.patch),
            ("iters_per_epoch", self.iters_per_epoch),
            ("epochs", self.epochs),
            ("lr_half_every", self.lr_half_every),
            ("checkpoint_every", self.checkpoint_every),
            ("log_every", self.log_every),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(Error::config(field, "must be positive"));
            }
        }
        if self.patch % self.scale != 0 {
            return Err(Error::config(
                "patch",
                format!("{} is not divisible by scale {}", self.patch, self.scale),
            ));
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(Error::config("lr0", "must be positive"));
        }
        if !(self.eps > 0.0) {
            return Err(Error::config("eps", "must be positive"));
        }
        for (field, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::config(field, format!("{b} outside (0, 1)")));
            }
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        lr_schedule(self.lr0, self.lr_half_every, epoch)
    }

    fn is_logged(&self, iter: usize) -> bool {
        iter == 1 || iter % self.log_every == 0 || iter == self.iters_per_epoch
    }
}

/// `lr0 · 2^(−⌊epoch / half_every⌋)`.
pub fn lr_schedule(lr0: f64, half_every: usize, epoch: usize) -> f64 {
    let halvings = (epoch / half_every).min(i32::MAX as usize) as i32;
    lr0 * Float::powi(0.5f64, halvings)
}

/// Adam moments, shaped like the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimState {
    pub m: ModelParams<f32>,
    pub v: ModelParams<f32>,
    pub t: u64,
}

impl OptimState {
    pub fn new(config: &ModelConfig) -> Self {
        OptimState {
            m: ModelParams::zeros(config),
            v: ModelParams::zeros(config),
            t: 0,
        }
    }

    pub fn check_against(&self, config: &ModelConfig) -> Result<()> {
        self.m.check_against(config)?;
        self.v.check_against(config)
    }
}

/// One bias-corrected Adam update of every parameter.
pub fn adam_step(
    params: &mut ModelParams<f32>,
    grads: &BTreeMap<String, Tensor<f32>>,
    state: &mut OptimState,
    lr: f64,
    cfg: &TrainConfig,
) -> Result<()> {
    state.t += 1;
    let t = state.t.min(i32::MAX as u64) as i32;
    let c1 = 1.0 - Float::powi(cfg.beta1, t);
    let c2 = 1.0 - Float::powi(cfg.beta2, t);
    for (path, p) in params.iter_mut() {
        let g = grads
            .get(path)
            .ok_or_else(|| Error::contract(format!("no gradient for `{path}`")))?;
        let m = state
            .m
            .get_mut(path)
            .ok_or_else(|| Error::contract(format!("no first moment for `{path}`")))?;
        let v = state
            .v
            .get_mut(path)
            .ok_or_else(|| Error::contract(format!("no second moment for `{path}`")))?;
        if g.shape() != p.shape() || m.shape() != p.shape() || v.shape() != p.shape() {
            return Err(Error::ShapeMismatch {
                op: "adam_step",
                lhs: p.shape(),
                rhs: g.shape(),
            });
        }
        let (pd, md, vd) = (p.data_mut(), m.data_mut(), v.data_mut());
        for (i, &gi) in g.data().iter().enumerate() {
            let gi = gi as f64;
            let mi = cfg.beta1 * md[i] as f64 + (1.0 - cfg.beta1) * gi;
            let vi = cfg.beta2 * vd[i] as f64 + (1.0 - cfg.beta2) * gi * gi;
            md[i] = mi as f32;
            vd[i] = vi as f32;
            let update = lr * (mi / c1) / (libm::sqrt(vi / c2) + cfg.eps);
            pd[i] = (pd[i] as f64 - update) as f32;
        }
    }
    Ok(())
}

/// One loss-log entry; `iter` counts from 1 within the epoch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRecord {
    pub epoch: usize,
    pub iter: usize,
    pub lr: f64,
    pub loss: f32,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochSummary {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Whether the checkpoint cadence (or the final epoch) falls here.
    pub checkpoint_due: bool,
    /// Lowest mean loss seen so far in this run.
    pub best: bool,
}

/// Observers for [`Trainer::fit`]. An `Err` aborts training.
pub trait TrainHooks {
    /// Called after every step; `logged` marks the loss-log cadence.
    fn on_step(&mut self, _record: &LossRecord, _logged: bool) -> core::result::Result<(), String> {
        Ok(())
    }

    fn on_epoch_end(
        &mut self,
        _summary: &EpochSummary,
        _params: &ModelParams<f32>,
        _optim: &OptimState,
    ) -> core::result::Result<(), String> {
        Ok(())
    }
}

/// Hooks that do nothing.
pub struct NoHooks;

impl TrainHooks for NoHooks {}

const RECENT_LOSSES: usize = 10;

pub struct Trainer<'a> {
    model: ModelConfig,
    cfg: TrainConfig,
    stats: NormStats,
    pairs: &'a [ImagePair],
    params: ModelParams<f32>,
    optim: OptimState,
    next_epoch: usize,
    recent: Vec<f32>,
    best: f64,
}

impl<'a> Trainer<'a> {
    pub fn new(
        model: ModelConfig,
        cfg: TrainConfig,
        stats: NormStats,
        pairs: &'a [ImagePair],
        params: ModelParams<f32>,
    ) -> Result<Self> {
        let optim = OptimState::new(&model);
        Self::resume(model, cfg, stats, pairs, params, optim, 0)
    }

    /// Continue from saved parameters and optimizer state at `next_epoch`.
    pub fn resume(
        model: ModelConfig,
        cfg: TrainConfig,
        stats: NormStats,
        pairs: &'a [ImagePair],
        params: ModelParams<f32>,
        optim: OptimState,
        next_epoch: usize,
    ) -> Result<Self> {
        model.validate()?;
        cfg.validate()?;
        if model.scale != cfg.scale {
            return Err(Error::config(
                "scale",
                format!("model scale {} but training scale {}", model.scale, cfg.scale),
            ));
        }
        params.check_against(&model)?;
        optim.check_against(&model)?;
        if pairs.is_empty() {
            return Err(Error::contract("no training images"));
        }
        Ok(Trainer {
            model,
            cfg,
            stats,
            pairs,
            params,
            optim,
            next_epoch,
            recent: Vec::new(),
            best: f64::INFINITY,
        })
    }

    pub fn params(&self) -> &ModelParams<f32> {
        &self.params
    }

    pub fn optim(&self) -> &OptimState {
        &self.optim
    }

    pub fn next_epoch(&self) -> usize {
        self.next_epoch
    }

    pub fn into_params(self) -> ModelParams<f32> {
        self.params
    }

    /// Forward, L1 loss, backward and an Adam update on the batch for
    /// `(epoch, iter)`; returns the loss before the update.
    pub fn step(&mut self, epoch: usize, iter: usize) -> Result<f32> {
        let lr = self.cfg.lr_at(epoch);
        self.try_step(epoch, iter, lr).map_err(|e| match e {
            Error::NonFinite { .. } => self.diverged(epoch, lr, f32::NAN),
            other => other,
        })
    }

    fn try_step(&mut self, epoch: usize, iter: usize, lr: f64) -> Result<f32> {
        let (hr, lr_batch) = draw_batch(
            self.pairs,
            self.cfg.scale,
            self.cfg.patch,
            self.cfg.batch,
            self.cfg.seed,
            epoch,
            iter,
        )?;
        let mut tape = Tape::new();
        let net = Network::bind(&mut tape, &self.model, &self.params)?;
        let x = tape.constant(self.stats.normalize(&lr_batch))?;
        let target = tape.constant(self.stats.normalize(&hr))?;
        let pred = net.forward_full(&mut tape, x)?;
        let loss = tape.l1_loss(pred, target)?;
        let value = tape.value(loss).data()[0];
        if !value.is_finite() {
            return Err(self.diverged(epoch, lr, value));
        }
        let mut grads = tape.backward(loss)?;
        let grads: BTreeMap<String, Tensor<f32>> = net
            .vars()
            .iter()
            .map(|(path, &v)| (path.clone(), grads.take(v)))
            .collect();
        adam_step(&mut self.params, &grads, &mut self.optim, lr, &self.cfg)?;
        self.recent.push(value);
        if self.recent.len() > RECENT_LOSSES {
            self.recent.remove(0);
        }
        Ok(value)
    }

    fn diverged(&self, epoch: usize, lr: f64, loss: f32) -> Error {
        Error::Diverged {
            epoch,
            step: self.optim.t + 1,
            lr,
            loss,
            recent: self.recent.clone(),
        }
    }

    /// Trains from the next epoch through `epochs`; returns the logged
    /// records.
    pub fn fit(&mut self, hooks: &mut dyn TrainHooks) -> Result<Vec<LossRecord>> {
        let mut log = Vec::new();
        for epoch in self.next_epoch..self.cfg.epochs {
            let lr = self.cfg.lr_at(epoch);
            let mut total = 0.0f64;
            for i in 0..self.cfg.iters_per_epoch {
                let loss = self.step(epoch, i)?;
                total += loss as f64;
                let record = LossRecord {
                    epoch,
                    iter: i + 1,
                    lr,
                    loss,
                };
                let logged = self.cfg.is_logged(i + 1);
                if logged {
                    log.push(record);
                }
                hooks.on_step(&record, logged).map_err(Error::Hook)?;
            }
            let mean_loss = total / self.cfg.iters_per_epoch as f64;
            let best = mean_loss < self.best;
            if best {
                self.best = mean_loss;
            }
            self.next_epoch = epoch + 1;
            let summary = EpochSummary {
                epoch,
                mean_loss,
                checkpoint_due: (epoch + 1) % self.cfg.checkpoint_every == 0 || epoch + 1 == self.cfg.epochs,
                best,
            };
            hooks
                .on_epoch_end(&summary, &self.params, &self.optim)
                .map_err(Error::Hook)?;
        }
        Ok(log)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_breakpoints() {
        let cfg = TrainConfig::new(2, 0);
        assert_eq!(cfg.lr_at(0), 1e-4);
        assert_eq!(cfg.lr_at(199), 1e-4);
        assert_eq!(cfg.lr_at(200), 5e-5);
        assert_eq!(cfg.lr_at(999), 6.25e-6);
    }

    #[test]
    fn default_recipe_validates() {
        let cfg = TrainConfig::new(4, 1);
        cfg.validate().unwrap();
        assert_eq!((cfg.batch, cfg.patch, cfg.iters_per_epoch, cfg.epochs), (16, 192, 1000, 1000));
        let bad = TrainConfig { beta2: 1.0, ..cfg.clone() };
        assert!(matches!(bad.validate(), Err(Error::Config { field: "beta2", .. })));
        let bad = TrainConfig { patch: 190, ..cfg };
        assert!(matches!(bad.validate(), Err(Error::Config { field: "patch", .. })));
    }

    #[test]
    fn log_cadence() {
        let cfg = TrainConfig::new(2, 0);
        let logged: Vec<usize> = (1..=1000).filter(|&i| cfg.is_logged(i)).collect();
        assert_eq!(logged.len(), 11);
        assert_eq!(logged[0], 1);
        assert_eq!(logged[1], 100);
        assert_eq!(*logged.last().unwrap(), 1000);
    }
}
