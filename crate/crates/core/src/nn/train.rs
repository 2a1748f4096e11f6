use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::eval::{evaluate_normalized, EvalReport};
use super::model::{loss_and_grad, ModelParams, Sample};
use super::{NnError, Normalizer, Result};
use crate::sim::{derive_seed, DatasetBundle, Split, Window};
use crate::Exec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Epochs without a validation-accuracy improvement before stopping.
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 100,
            batch_size: 32,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            patience: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best validation accuracy.
    pub params: ModelParams,
    pub normalizer: Normalizer,
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
}

impl TrainOutcome {
    /// Per-epoch history as CSV.
    pub fn history_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,train_accuracy,val_loss,val_accuracy\n");
        for h in &self.history {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                h.epoch, h.train_loss, h.train_accuracy, h.val_loss, h.val_accuracy
            ));
        }
        s
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, params: &mut ModelParams, grad: &ModelParams, cfg: &TrainConfig) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        let p = params.as_mut_slice();
        for (i, &g) in grad.as_slice().iter().enumerate() {
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g;
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            p[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
}

/// Trains on the bundle's train split, early-stopping on its val split.
pub fn train(bundle: &DatasetBundle, config: &TrainConfig, seed: u64, exec: Exec) -> Result<TrainOutcome> {
    let sim_err = |e: crate::sim::SimError| NnError::Schema(e.to_string());
    let tr = bundle.windows(Split::Train).map_err(sim_err)?;
    let va = bundle.windows(Split::Val).map_err(sim_err)?;
    train_with(&tr, &va, config, seed, exec)
}

/// Trains from explicit window sets. The normalizer is fit on `train_windows`
/// only. Output depends only on the inputs and `seed`.
pub fn train_with(
    train_windows: &[Window],
    val_windows: &[Window],
    config: &TrainConfig,
    seed: u64,
    exec: Exec,
) -> Result<TrainOutcome> {
    if train_windows.is_empty() {
        return Err(NnError::Empty("training split"));
    }
    if val_windows.is_empty() {
        return Err(NnError::Empty("validation split"));
    }
    if config.batch_size == 0 || config.max_epochs == 0 {
        return Err(NnError::Schema("batch_size and max_epochs must be positive".into()));
    }
    let normalizer = Normalizer::fit(train_windows, "train split")?;
    let x_train: Vec<Vec<f64>> = train_windows.iter().map(|w| normalizer.normalize(w)).collect();
    let y_train: Vec<usize> = train_windows.iter().map(|w| w.label.index()).collect();
    let x_val: Vec<Vec<f64>> = val_windows.iter().map(|w| normalizer.normalize(w)).collect();
    let y_val: Vec<usize> = val_windows.iter().map(|w| w.label.index()).collect();

    let mut params = ModelParams::init(derive_seed(seed, 0x1417));
    let mut adam = Adam::new(params.len());
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, ModelParams)> = None;

    for epoch in 1..=config.max_epochs {
        let mut order: Vec<usize> = (0..x_train.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, epoch as u64)));
        let (mut loss_sum, mut correct) = (0.0, 0);
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<Sample> = chunk.iter().map(|&i| Sample { input: &x_train[i], label: y_train[i] }).collect();
            let (bl, grad) = loss_and_grad(&params, &batch, exec)?;
            if !bl.loss.is_finite() {
                return Err(NnError::NonFiniteLoss { epoch, batch: b });
            }
            loss_sum += bl.loss * chunk.len() as f64;
            correct += bl.correct;
            adam.step(&mut params, &grad, config);
        }
        let val: EvalReport = evaluate_normalized(&params, &x_val, &y_val, exec)?;
        let stats = EpochStats {
            epoch,
            train_loss: loss_sum / x_train.len() as f64,
            train_accuracy: correct as f64 / x_train.len() as f64,
            val_loss: val.mean_loss,
            val_accuracy: val.accuracy,
        };
        log::debug!(
            "epoch {epoch}: loss {:.4} acc {:.4} val_acc {:.4}",
            stats.train_loss,
            stats.train_accuracy,
            stats.val_accuracy
        );
        history.push(stats);
        match &best {
            Some((acc, _, _)) if stats.val_accuracy <= *acc => {}
            _ => best = Some((stats.val_accuracy, epoch, params.clone())),
        }
        let best_epoch = best.as_ref().map_or(epoch, |b| b.1);
        if epoch - best_epoch >= config.patience {
            break;
        }
    }
    let (_, best_epoch, params) = best.expect("at least one epoch ran");
    Ok(TrainOutcome { params, normalizer, history, best_epoch })
}
