//! Local training on one client for one round.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::{epoch_batches, BatchSize, Dataset};
use crate::error::{Error, Result};
use crate::model::{loss_and_grad, ModelSpec};
use crate::params::ParamVector;

/// Client-side variance-reduction mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClientOpt {
    Sgd,
    Prox,
    Scaf,
    Nova,
}

impl ClientOpt {
    pub const ALL: [ClientOpt; 4] = [ClientOpt::Sgd, ClientOpt::Prox, ClientOpt::Scaf, ClientOpt::Nova];

    pub fn token(self) -> &'static str {
        match self {
            ClientOpt::Sgd => "sgd",
            ClientOpt::Prox => "prox",
            ClientOpt::Scaf => "scaf",
            ClientOpt::Nova => "nova",
        }
    }
}

impl fmt::Display for ClientOpt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// How a client refreshes its control variate after local training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ScafOption {
    /// Full local gradient at the round-start global model.
    #[default]
    I,
    /// `c_i - c + (w - w_i) / (K * lr)`.
    II,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientConfig {
    pub opt_c: ClientOpt,
    pub local_epochs: usize,
    pub batch_size: BatchSize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub prox_mu: f64,
    pub scaf_option: ScafOption,
}

impl ClientConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.local_epochs == 0 {
            return bad("local_epochs must be >= 1".into());
        }
        if self.batch_size == BatchSize::Fixed(0) {
            return bad("batch_size must be >= 1".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight_decay must be >= 0, got {}", self.weight_decay));
        }
        if !(self.prox_mu >= 0.0 && self.prox_mu.is_finite()) {
            return bad(format!("prox_mu must be >= 0, got {}", self.prox_mu));
        }
        Ok(())
    }

    /// Local steps `tau_i` for a shard of `n` samples.
    pub fn steps(&self, n: usize) -> usize {
        self.local_epochs * self.batch_size.batches_per_epoch(n)
    }
}

/// What a client sends back after a round.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdate {
    pub client: usize,
    /// `w_i - w`.
    pub delta: ParamVector,
    /// `c_i(new) - c_i(old)`, scaf only.
    pub delta_c: Option<ParamVector>,
    /// `||a_i||_1`, nova only.
    pub a_norm: Option<f64>,
    pub num_samples: usize,
    pub steps: usize,
    /// Sample-weighted mean batch loss over the final local epoch.
    pub train_loss: f64,
}

impl ClientUpdate {
    /// Bytes uploaded: each vector at 8 bytes per element, plus the
    /// nova coefficient norm.
    pub fn payload_bytes(&self) -> usize {
        8 * (self.delta.len() + self.delta_c.as_ref().map_or(0, ParamVector::len) + usize::from(self.a_norm.is_some()))
    }
}

/// Everything fixed about a client within one round.
#[derive(Debug, Clone, Copy)]
pub struct ClientTask<'a> {
    pub spec: &'a ModelSpec,
    pub data: &'a Dataset,
    pub shard: &'a [usize],
    pub client: usize,
    pub round: usize,
    pub seed: u64,
}

/// Server and client control variates for a scaf round.
#[derive(Debug, Clone, Copy)]
pub struct ControlVariates<'a> {
    pub global: &'a ParamVector,
    pub local: &'a ParamVector,
}

/// `||a||_1` for the coefficients by which momentum SGD (`u <- rho u + g`,
/// `w <- w - lr u`) accumulates `steps` gradients into its displacement.
pub fn a_norm(momentum: f64, steps: usize) -> f64 {
    let tau = steps as f64;
    if momentum == 0.0 {
        return tau;
    }
    let rho = momentum;
    (tau - rho * (1.0 - rho.powi(steps as i32)) / (1.0 - rho)) / (1.0 - rho)
}

/// Refreshed client control variate.
pub fn update_control_variate(
    option: ScafOption,
    task: &ClientTask<'_>,
    global_w: &ParamVector,
    final_w: &ParamVector,
    control: ControlVariates<'_>,
    steps: usize,
    lr: f64,
) -> Result<ParamVector> {
    match option {
        ScafOption::I => {
            let batch = task.data.batch(task.shard)?;
            Ok(loss_and_grad(task.spec, global_w, &batch)?.1)
        }
        ScafOption::II => {
            if steps == 0 || !(lr > 0.0) {
                return Err(Error::InvalidArgument("option II needs steps >= 1 and lr > 0".into()));
            }
            let drift = global_w.sub(final_w)?;
            control.local.sub(control.global)?.add_scaled(&drift, 1.0 / (steps as f64 * lr))
        }
    }
}

/// Runs `local_epochs` of corrected momentum SGD starting from `global_w`.
///
/// Returns the update for the server and, for scaf, the client's new
/// control variate. The momentum buffer starts at zero every round.
pub fn local_train(
    global_w: &ParamVector,
    control: Option<ControlVariates<'_>>,
    task: &ClientTask<'_>,
    cfg: &ClientConfig,
) -> Result<(ClientUpdate, Option<ParamVector>)> {
    if (cfg.opt_c == ClientOpt::Scaf) != control.is_some() {
        return Err(Error::InvalidArgument("control variates are required for scaf and only for scaf".into()));
    }
    if task.shard.is_empty() {
        return Err(Error::InvalidArgument(format!("client {} has an empty shard", task.client)));
    }
    if let Some(cv) = control {
        if cv.global.len() != global_w.len() || cv.local.len() != global_w.len() {
            return Err(Error::LengthMismatch { left: cv.local.len(), right: global_w.len() });
        }
    }

    let anchor = global_w.as_slice();
    let mut w = global_w.clone();
    let mut velocity = vec![0.0; w.len()];
    let mut step = 0usize;
    let mut train_loss = 0.0;

    for epoch in 0..cfg.local_epochs {
        let batches = epoch_batches(task.shard, cfg.batch_size, task.seed, task.client, task.round, epoch)?;
        let (mut loss_sum, mut seen) = (0.0, 0usize);
        for rows in &batches {
            let batch = task.data.batch(rows)?;
            let diverged = Error::Diverged { round: task.round, client: task.client, step };
            let (loss, grad) = loss_and_grad(task.spec, &w, &batch).map_err(|e| match e {
                Error::NonFinite { .. } => diverged,
                other => other,
            })?;
            loss_sum += loss * rows.len() as f64;
            seen += rows.len();

            let wi = w.as_mut_slice();
            let g = grad.as_slice();
            for k in 0..wi.len() {
                let corrected = match (cfg.opt_c, control) {
                    (ClientOpt::Scaf, Some(cv)) => g[k] + (cv.global.as_slice()[k] - cv.local.as_slice()[k]),
                    (ClientOpt::Prox, _) => g[k] + cfg.prox_mu * (wi[k] - anchor[k]),
                    _ => g[k],
                };
                velocity[k] = cfg.momentum * velocity[k] + (corrected + cfg.weight_decay * wi[k]);
                wi[k] -= cfg.lr * velocity[k];
            }
            if !w.is_finite() {
                return Err(Error::Diverged { round: task.round, client: task.client, step });
            }
            step += 1;
        }
        train_loss = loss_sum / seen as f64;
    }

    let delta = w.sub(global_w)?;
    let a = (cfg.opt_c == ClientOpt::Nova).then(|| a_norm(cfg.momentum, step));
    let (delta_c, new_c) = match control {
        Some(cv) => {
            let fresh = update_control_variate(cfg.scaf_option, task, global_w, &w, cv, step, cfg.lr)?;
            (Some(fresh.sub(cv.local)?), Some(fresh))
        }
        None => (None, None),
    };
    let update = ClientUpdate {
        client: task.client,
        delta,
        delta_c,
        a_norm: a,
        num_samples: task.shard.len(),
        steps: step,
        train_loss,
    };
    Ok((update, new_c))
}
