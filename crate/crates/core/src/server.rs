//! Aggregation of client updates and the global model update.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::client::ClientUpdate;
use crate::error::{Error, Result};
use crate::params::ParamVector;

/// Server optimizer applied to the aggregated pseudo-gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ServerOpt {
    Sgd,
    Adam,
    Adagrad,
    Yogi,
}

impl ServerOpt {
    pub const ALL: [ServerOpt; 4] = [ServerOpt::Sgd, ServerOpt::Adam, ServerOpt::Adagrad, ServerOpt::Yogi];

    pub fn token(self) -> &'static str {
        match self {
            ServerOpt::Sgd => "sgd",
            ServerOpt::Adam => "adam",
            ServerOpt::Adagrad => "adagrad",
            ServerOpt::Yogi => "yogi",
        }
    }

    pub fn is_adaptive(self) -> bool {
        self != ServerOpt::Sgd
    }

    /// Server learning rate used when none is configured.
    pub fn default_lr(self) -> f64 {
        if self.is_adaptive() {
            0.005
        } else {
            1.0
        }
    }
}

impl fmt::Display for ServerOpt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServerConfig {
    pub opt_s: ServerOpt,
    pub server_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Use the update rules in their alternative printed form:
    /// `w <- beta1 w + lr m / (sqrt(v) + eps)` and, for adam,
    /// `v <- beta2 v - (1 - beta2) delta^2`.
    pub literal_eq1: bool,
}

impl ServerConfig {
    pub fn new(opt_s: ServerOpt) -> Self {
        Self { opt_s, server_lr: opt_s.default_lr(), beta1: 0.9, beta2: 0.99, eps: 1e-8, literal_eq1: false }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.server_lr > 0.0 && self.server_lr.is_finite()) {
            return bad(format!("server_lr must be positive, got {}", self.server_lr));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad(format!("betas must lie in [0, 1), got {} and {}", self.beta1, self.beta2));
        }
        if !(self.eps > 0.0) {
            return bad(format!("eps must be positive, got {}", self.eps));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServerState {
    pub w: ParamVector,
    /// Global control variate; present only for scaf runs.
    pub c: Option<ParamVector>,
    pub m: ParamVector,
    pub v: ParamVector,
    pub round: usize,
}

impl ServerState {
    pub fn new(w: ParamVector, with_control: bool) -> Self {
        let n = w.len();
        Self {
            c: with_control.then(|| ParamVector::zeros(n)),
            m: ParamVector::zeros(n),
            v: ParamVector::zeros(n),
            w,
            round: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggregationMode {
    WeightedAvg,
    Nova,
}

fn sample_weights(updates: &[ClientUpdate]) -> Result<Vec<f64>> {
    if updates.is_empty() {
        return Err(Error::Aggregation("no client updates".into()));
    }
    let total: usize = updates.iter().map(|u| u.num_samples).sum();
    if total == 0 {
        return Err(Error::Aggregation("selected clients hold zero samples".into()));
    }
    Ok(updates.iter().map(|u| u.num_samples as f64 / total as f64).collect())
}

fn weighted_sum<'a>(vectors: impl Iterator<Item = (&'a ParamVector, f64)>, len: usize) -> Result<ParamVector> {
    let mut acc = ParamVector::zeros(len);
    for (v, w) in vectors {
        acc.add_scaled_in_place(v, w)?;
    }
    Ok(acc)
}

/// Aggregated update. Reduction runs in slice order, so callers pass
/// updates sorted by client id.
pub fn aggregate(updates: &[ClientUpdate], mode: AggregationMode) -> Result<ParamVector> {
    let p = sample_weights(updates)?;
    let len = updates[0].delta.len();
    match mode {
        AggregationMode::WeightedAvg => weighted_sum(updates.iter().map(|u| &u.delta).zip(p.iter().copied()), len),
        AggregationMode::Nova => {
            let norms = updates
                .iter()
                .map(|u| match u.a_norm {
                    Some(a) if a > 0.0 => Ok(a),
                    Some(a) => {
                        Err(Error::Aggregation(format!("client {}: a_norm must be positive, got {a}", u.client)))
                    }
                    None => Err(Error::Aggregation(format!("client {} sent no a_norm", u.client))),
                })
                .collect::<Result<Vec<f64>>>()?;
            let gamma: f64 = p.iter().zip(&norms).map(|(pi, a)| pi * a).sum();
            let normalized =
                weighted_sum(updates.iter().map(|u| &u.delta).zip(p.iter().zip(&norms).map(|(pi, a)| pi / a)), len)?;
            normalized.scale(gamma)
        }
    }
}

/// Weighted mean of control-variate deltas.
pub fn aggregate_control(updates: &[ClientUpdate]) -> Result<ParamVector> {
    let p = sample_weights(updates)?;
    let deltas = updates
        .iter()
        .map(|u| u.delta_c.as_ref().ok_or_else(|| Error::Aggregation(format!("client {} sent no delta_c", u.client))))
        .collect::<Result<Vec<_>>>()?;
    weighted_sum(deltas.into_iter().zip(p), updates[0].delta.len())
}

/// Applies the server optimizer to `delta` and advances the round counter.
pub fn server_step(state: &ServerState, delta: &ParamVector, cfg: &ServerConfig) -> Result<ServerState> {
    if !delta.is_finite() {
        return Err(Error::NonFinite { op: "server_step input" });
    }
    let mut next = state.clone();
    next.round += 1;
    if cfg.opt_s == ServerOpt::Sgd {
        next.w.add_scaled_in_place(delta, cfg.server_lr)?;
        return Ok(next);
    }
    if delta.len() != state.w.len() {
        return Err(Error::LengthMismatch { left: delta.len(), right: state.w.len() });
    }

    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let d = delta.as_slice();
    let m = next.m.as_mut_slice();
    for (m, &d) in m.iter_mut().zip(d) {
        *m = b1 * *m + (1.0 - b1) * d;
    }
    let v = next.v.as_mut_slice();
    for (v, &d) in v.iter_mut().zip(d) {
        let d2 = d * d;
        *v = match cfg.opt_s {
            ServerOpt::Adagrad => *v + d2,
            ServerOpt::Yogi => {
                let diff = *v - d2;
                let sign = if diff > 0.0 {
                    1.0
                } else if diff < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                *v - (1.0 - b2) * d2 * sign
            }
            ServerOpt::Adam if cfg.literal_eq1 => b2 * *v - (1.0 - b2) * d2,
            ServerOpt::Adam => b2 * *v + (1.0 - b2) * d2,
            ServerOpt::Sgd => unreachable!(),
        };
    }
    let decay = if cfg.literal_eq1 { b1 } else { 1.0 };
    let w = next.w.as_mut_slice();
    for ((w, &m), &v) in w.iter_mut().zip(next.m.as_slice()).zip(next.v.as_slice()) {
        *w = decay * *w + cfg.server_lr * m / (v.sqrt() + cfg.eps);
    }
    if next.w.is_finite() && next.m.is_finite() && next.v.is_finite() {
        Ok(next)
    } else {
        Err(Error::NonFinite { op: "server_step" })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::new(v.to_vec()).unwrap()
    }

    fn update(client: usize, n: usize, delta: &[f64]) -> ClientUpdate {
        ClientUpdate {
            client,
            delta: pv(delta),
            delta_c: None,
            a_norm: None,
            num_samples: n,
            steps: 1,
            train_loss: 0.0,
        }
    }

    #[test]
    fn weighted_average_examples() {
        let ups = [update(0, 5, &[2., 0.]), update(1, 5, &[0., 2.])];
        assert_eq!(aggregate(&ups, AggregationMode::WeightedAvg).unwrap(), pv(&[1., 1.]));
        let ups = [update(0, 1, &[4.]), update(1, 1, &[0.]), update(2, 2, &[2.])];
        assert_eq!(aggregate(&ups, AggregationMode::WeightedAvg).unwrap(), pv(&[2.]));
    }

    #[test]
    fn nova_with_equal_steps_is_weighted_average() {
        let mut ups = vec![update(0, 3, &[1.5, -2.]), update(1, 7, &[0.25, 4.])];
        for u in &mut ups {
            u.a_norm = Some(4.0);
        }
        assert_eq!(
            aggregate(&ups, AggregationMode::Nova).unwrap(),
            aggregate(&ups, AggregationMode::WeightedAvg).unwrap()
        );
    }

    #[test]
    fn nova_normalizes_heterogeneous_progress() {
        let mut ups = vec![update(0, 1, &[4.]), update(1, 1, &[1.])];
        ups[0].a_norm = Some(4.0);
        ups[1].a_norm = Some(1.0);
        // gamma = 2.5, normalized mean = 1
        assert_eq!(aggregate(&ups, AggregationMode::Nova).unwrap(), pv(&[2.5]));
    }

    #[test]
    fn aggregation_errors() {
        assert!(aggregate(&[], AggregationMode::WeightedAvg).is_err());
        assert!(aggregate(&[update(0, 0, &[1.])], AggregationMode::WeightedAvg).is_err());
        assert!(aggregate(&[update(0, 1, &[1.])], AggregationMode::Nova).is_err());
        assert!(aggregate_control(&[update(0, 1, &[1.])]).is_err());
    }

    #[test]
    fn control_aggregation_examples() {
        let with_c = |c: usize, dc: &[f64]| ClientUpdate { delta_c: Some(pv(dc)), ..update(c, 4, &[0., 0.]) };
        assert_eq!(aggregate_control(&[with_c(0, &[1., 0.]), with_c(1, &[0., 1.])]).unwrap(), pv(&[0.5, 0.5]));
        assert_eq!(aggregate_control(&[with_c(0, &[3., -1.])]).unwrap(), pv(&[3., -1.]));
        assert_eq!(
            aggregate_control(&[with_c(0, &[0.5, 2.]), with_c(1, &[0.5, 2.]), with_c(2, &[0.5, 2.])]).unwrap(),
            pv(&[0.5, 2.])
        );
    }

    #[test]
    fn sgd_step_adds_delta() {
        let s = ServerState::new(pv(&[0., 0.]), false);
        let next = server_step(&s, &pv(&[1., -1.]), &ServerConfig::new(ServerOpt::Sgd)).unwrap();
        assert_eq!(next.w, pv(&[1., -1.]));
        assert_eq!(next.round, 1);
        assert_eq!(next.m, s.m);
        assert_eq!(next.v, s.v);
    }

    #[test]
    fn adagrad_first_step() {
        let delta = 0.3;
        let cfg = ServerConfig::new(ServerOpt::Adagrad);
        let s = ServerState::new(pv(&[1., 1.]), false);
        let next = server_step(&s, &pv(&[delta, delta]), &cfg).unwrap();
        let m = (1.0 - cfg.beta1) * delta;
        for i in 0..2 {
            assert!((next.m.as_slice()[i] - m).abs() < 1e-15);
            assert!((next.v.as_slice()[i] - delta * delta).abs() < 1e-15);
            let w = 1.0 + cfg.server_lr * m / (delta + cfg.eps);
            assert!((next.w.as_slice()[i] - w).abs() < 1e-15);
        }
    }

    #[test]
    fn yogi_leaves_v_when_equal_to_delta_squared() {
        let mut s = ServerState::new(pv(&[0.]), false);
        s.v = pv(&[0.2 * 0.2]);
        let next = server_step(&s, &pv(&[0.2]), &ServerConfig::new(ServerOpt::Yogi)).unwrap();
        assert_eq!(next.v.as_slice()[0], 0.2f64 * 0.2);
    }

    #[test]
    fn literal_adam_goes_negative_and_fails() {
        let cfg = ServerConfig { literal_eq1: true, ..ServerConfig::new(ServerOpt::Adam) };
        let s = ServerState::new(pv(&[1.]), false);
        assert!(matches!(server_step(&s, &pv(&[0.1]), &cfg), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn literal_decay_shrinks_weights() {
        let cfg = ServerConfig { literal_eq1: true, ..ServerConfig::new(ServerOpt::Adagrad) };
        let s = ServerState::new(pv(&[10.]), false);
        let next = server_step(&s, &pv(&[0.]), &cfg).unwrap();
        assert_eq!(next.w, pv(&[9.]));
    }

    #[test]
    fn non_finite_delta_rejected() {
        let s = ServerState::new(pv(&[0.]), false);
        let bad = ParamVector::from_raw(vec![f64::NAN]);
        assert!(server_step(&s, &bad, &ServerConfig::new(ServerOpt::Sgd)).is_err());
    }

    fn deltas() -> impl Strategy<Value = Vec<Vec<f64>>> {
        proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 3), 1..12)
    }

    proptest! {
        #[test]
        fn adam_v_stays_nonnegative_and_adagrad_v_grows(ds in deltas()) {
            let mut adam = ServerState::new(ParamVector::zeros(3), false);
            let mut ada = adam.clone();
            let acfg = ServerConfig::new(ServerOpt::Adam);
            let gcfg = ServerConfig::new(ServerOpt::Adagrad);
            for d in ds {
                let d = ParamVector::new(d).unwrap();
                adam = server_step(&adam, &d, &acfg).unwrap();
                prop_assert!(adam.v.as_slice().iter().all(|&v| v >= 0.0));
                let next = server_step(&ada, &d, &gcfg).unwrap();
                for (a, b) in next.v.as_slice().iter().zip(ada.v.as_slice()) {
                    prop_assert!(a >= b);
                }
                ada = next;
            }
        }

        #[test]
        fn weighted_average_is_linear(ds in deltas(), s in -4.0f64..4.0) {
            let ups: Vec<_> = ds.iter().enumerate().map(|(i, d)| update(i, i + 1, d)).collect();
            let scaled: Vec<_> = ds
                .iter()
                .enumerate()
                .map(|(i, d)| update(i, i + 1, &d.iter().map(|x| x * s).collect::<Vec<_>>()))
                .collect();
            let a = aggregate(&ups, AggregationMode::WeightedAvg).unwrap().scale(s).unwrap();
            let b = aggregate(&scaled, AggregationMode::WeightedAvg).unwrap();
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
            }
        }

        #[test]
        fn nova_equals_weighted_under_homogeneity(ds in deltas(), n in 1usize..50, a in 0.5f64..40.0) {
            let ups: Vec<_> = ds
                .iter()
                .enumerate()
                .map(|(i, d)| ClientUpdate { a_norm: Some(a), ..update(i, n, d) })
                .collect();
            let x = aggregate(&ups, AggregationMode::Nova).unwrap();
            let y = aggregate(&ups, AggregationMode::WeightedAvg).unwrap();
            prop_assert!(x.max_abs_diff(&y).unwrap() < 1e-12);
        }
    }
}
