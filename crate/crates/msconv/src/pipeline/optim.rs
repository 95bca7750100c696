//! Training configuration, the halving learning-rate schedule, and Adam
//! with bias correction. Shared parameters own exactly one moment state.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;
use crate::tensor::{dedup_parameters, Parameter};
use crate::{Error, Result};

/// Training protocol knobs. Defaults follow the full-scale recipe
/// (batch 16, 128-pixel ground-truth patches, Adam at 2e-4 halved every
/// 250k of 1M iterations, L1 loss); desk runs override the sizes.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch: usize,
    pub hr_patch: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub halve_every: u64,
    pub total_iters: u64,
    pub seed: u64,
    pub augment: bool,
    /// Evaluate every N iterations (0 = final evaluation only).
    pub eval_every: u64,
    /// Checkpoint every N iterations (0 = final checkpoint only).
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch: 16,
            hr_patch: 128,
            lr: 2e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            halve_every: 250_000,
            total_iters: 1_000_000,
            seed: 0,
            augment: true,
            eval_every: 0,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 || self.hr_patch == 0 {
            return Err(Error::Config("batch and hr_patch must be positive".into()));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::Config("learning rate must be finite and non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("betas must lie in [0, 1)".into()));
        }
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(Error::Config("eps must be positive".into()));
        }
        if self.halve_every == 0 || self.halve_every > self.total_iters {
            return Err(Error::Config(
                "halve_every must be positive and at most total_iters".into(),
            ));
        }
        Ok(())
    }
}

/// Learning rate at an iteration: halved after every `halve_every`
/// iterations.
pub fn lr_at(iter: u64, cfg: &TrainConfig) -> f64 {
    cfg.lr * 0.5f64.powi((iter / cfg.halve_every) as i32)
}

/// Adam over the distinct parameters of a network (deduplicated by share
/// id, so shared blocks are stepped exactly once per iteration).
pub struct Adam<T: Scalar> {
    params: Vec<Parameter<T>>,
    /// Per-parameter (first, second) moment buffers, weight block then
    /// bias block, matching `Parameter::update` indexing.
    moments: Vec<(Vec<T>, Vec<T>)>,
    t: u64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl<T: Scalar> Adam<T> {
    pub fn new(params: &[Parameter<T>], cfg: &TrainConfig) -> Self {
        let params = dedup_parameters(params);
        let moments = params
            .iter()
            .map(|p| (vec![T::zero(); p.value_count()], vec![T::zero(); p.value_count()]))
            .collect();
        Adam { params, moments, t: 0, beta1: cfg.beta1, beta2: cfg.beta2, eps: cfg.eps }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn params(&self) -> &[Parameter<T>] {
        &self.params
    }

    /// One bias-corrected update from the gradients currently held by
    /// the parameters.
    pub fn step(&mut self, lr: f64) {
        self.t += 1;
        let b1 = T::from_f64(self.beta1);
        let b2 = T::from_f64(self.beta2);
        let one = T::one();
        let bc1 = T::from_f64(1.0 - self.beta1.powi(self.t as i32));
        let bc2 = T::from_f64(1.0 - self.beta2.powi(self.t as i32));
        let lr_t = T::from_f64(lr);
        let eps = T::from_f64(self.eps);
        for (p, (m, v)) in self.params.iter().zip(self.moments.iter_mut()) {
            p.update(|i, value, grad| {
                m[i] = b1 * m[i] + (one - b1) * grad;
                v[i] = b2 * v[i] + (one - b2) * grad * grad;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                value - lr_t * mhat / (vhat.sqrt() + eps)
            });
        }
    }

    pub fn zero_grads(&self) {
        for p in &self.params {
            p.zero_grad();
        }
    }

    /// Moment buffers for checkpointing, in parameter order.
    pub fn moments(&self) -> &[(Vec<T>, Vec<T>)] {
        &self.moments
    }

    pub fn restore(&mut self, t: u64, moments: Vec<(Vec<T>, Vec<T>)>) -> Result<()> {
        if moments.len() != self.params.len()
            || moments
                .iter()
                .zip(&self.params)
                .any(|((m, v), p)| m.len() != p.value_count() || v.len() != p.value_count())
        {
            return Err(Error::Format("optimizer state does not match the network".into()));
        }
        self.t = t;
        self.moments = moments;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar_param(v: f64) -> Parameter<f64> {
        Parameter::from_values(1, 1, 1, vec![v], vec![0.0]).unwrap()
    }

    #[test]
    fn schedule_halves_every_interval() {
        let cfg = TrainConfig::default();
        assert_eq!(lr_at(0, &cfg), 2e-4);
        assert_eq!(lr_at(249_999, &cfg), 2e-4);
        assert_eq!(lr_at(250_000, &cfg), 1e-4);
        assert_eq!(lr_at(750_000, &cfg), 2.5e-5);
    }

    #[test]
    fn first_step_moves_against_the_gradient_by_about_lr() {
        // With a constant gradient g, the bias-corrected first step is
        // -lr * g / (|g| + eps') which approaches -lr * sign(g).
        let cfg = TrainConfig::default();
        let p = scalar_param(1.0);
        let mut adam = Adam::new(&[p.clone()], &cfg);
        // Plant a gradient by hand.
        p.update(|_, v, _| v); // no-op; gradients live in the accumulator
        {
            // l1-style constant gradient of +3.0 on the weight
            let g = 3.0;
            let tape_free = ();
            let _ = tape_free;
            // write the gradient directly through a crafted backward:
            // use a 1x1 conv on x = g so dL/dw = g for loss sum(w*x).
            let x = crate::tensor::Tensor::from_vec(
                crate::tensor::Shape::new(1, 1, 1, 1),
                vec![g],
            )
            .unwrap();
            let tape = crate::tensor::Tape::new();
            let xt = tape.watch(&x);
            let loss = xt.conv2d(&p, 1, 1, 0).unwrap().sum().unwrap();
            crate::tensor::backward(&loss).unwrap();
        }
        let lr = 0.01;
        adam.step(lr);
        let moved = p.weight()[0];
        assert!(moved < 1.0, "moves opposite to a positive gradient");
        assert!((1.0 - moved - lr).abs() < 1e-6, "step size near lr, got {}", 1.0 - moved);
    }

    #[test]
    fn zero_learning_rate_freezes_parameters() {
        let cfg = TrainConfig::default();
        let p = scalar_param(0.5);
        let mut adam = Adam::new(&[p.clone()], &cfg);
        let x = crate::tensor::Tensor::from_vec(
            crate::tensor::Shape::new(1, 1, 1, 1),
            vec![2.0],
        )
        .unwrap();
        for _ in 0..5 {
            let tape = crate::tensor::Tape::new();
            let xt = tape.watch(&x);
            let loss = xt.conv2d(&p, 1, 1, 0).unwrap().sum().unwrap();
            crate::tensor::backward(&loss).unwrap();
            adam.step(0.0);
            adam.zero_grads();
        }
        assert_eq!(p.weight()[0], 0.5);
    }

    #[test]
    fn shared_parameters_own_one_state() {
        let cfg = TrainConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = Parameter::<f64>::conv_init(2, 2, 3, &mut rng);
        let adam = Adam::new(&[p.clone(), p.clone(), p.clone()], &cfg);
        assert_eq!(adam.params().len(), 1);
        assert_eq!(adam.moments().len(), 1);
    }

    #[test]
    fn first_update_direction_is_gradient_scale_free() {
        // Multiplying all gradients by a positive constant leaves the
        // first bias-corrected update direction unchanged; with eps'
        // contribution bounded the magnitudes converge too.
        let cfg = TrainConfig::default();
        let run = |gscale: f64| -> f64 {
            let p = scalar_param(1.0);
            let mut adam = Adam::new(&[p.clone()], &cfg);
            let x = crate::tensor::Tensor::from_vec(
                crate::tensor::Shape::new(1, 1, 1, 1),
                vec![0.7 * gscale],
            )
            .unwrap();
            let tape = crate::tensor::Tape::new();
            let xt = tape.watch(&x);
            let loss = xt.conv2d(&p, 1, 1, 0).unwrap().sum().unwrap();
            crate::tensor::backward(&loss).unwrap();
            adam.step(0.01);
            1.0 - p.weight()[0]
        };
        let small = run(1.0);
        let large = run(1000.0);
        assert!(small > 0.0 && large > 0.0, "same sign");
        // eps bounds the relative gap: |delta|/lr within eps'-sized slack.
        assert!((small - large).abs() / small < 1e-4);
    }

    #[test]
    fn config_validation() {
        let mut cfg = TrainConfig::default();
        cfg.halve_every = 2_000_000;
        assert!(cfg.validate().is_err());
        cfg = TrainConfig { batch: 0, ..TrainConfig::default() };
        assert!(cfg.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }
}
