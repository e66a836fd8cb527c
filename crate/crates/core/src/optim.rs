//! SGD with momentum, Adam, and the validation-loss early-stopping rule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{GradientSet, Model};
use crate::tensor::{Scalar, Tensor};

/// Update rule applied to a list of parameter tensors. State buffers are
/// created on the first step and bound to the shapes seen then.
pub trait Optimizer<T: Scalar> {
    fn step(&mut self, params: Vec<&mut Tensor<T>>, grads: Vec<&Tensor<T>>) -> Result<()>;

    /// Applies one step to every parameter of `model`.
    fn step_model(&mut self, model: &mut Model<T>, grads: &GradientSet<T>) -> Result<()> {
        let mut params = Vec::new();
        let mut gs = Vec::new();
        for (key, p) in model.params_mut() {
            let g = grads
                .get(key)
                .ok_or_else(|| Error::Validation(format!("no gradient for {key}")))?;
            params.push(p);
            gs.push(g);
        }
        self.step(params, gs)
    }
}

fn init_or_check<T: Scalar>(
    buffers: &mut Vec<Tensor<T>>,
    params: &[&mut Tensor<T>],
    grads: &[&Tensor<T>],
) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::dim("optimizer step", &[params.len()], &[grads.len()]));
    }
    for (p, g) in params.iter().zip(grads) {
        if p.shape() != g.shape() {
            return Err(Error::dim("optimizer step", p.shape(), g.shape()));
        }
    }
    if buffers.is_empty() {
        *buffers = params.iter().map(|p| Tensor::zeros(p.shape().to_vec())).collect();
    } else if buffers.len() != params.len() || buffers.iter().zip(params).any(|(b, p)| b.shape() != p.shape()) {
        return Err(Error::Validation(
            "parameter shapes changed between optimizer steps".into(),
        ));
    }
    Ok(())
}

/// `v = momentum * v + g; theta -= lr * v`.
#[derive(Clone, Debug)]
pub struct SgdMomentum<T> {
    pub learning_rate: f64,
    pub momentum: f64,
    velocity: Vec<Tensor<T>>,
}

impl<T: Scalar> SgdMomentum<T> {
    pub fn new(learning_rate: f64, momentum: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::Validation(format!("momentum {momentum} outside [0, 1)")));
        }
        if !(learning_rate > 0.0) {
            return Err(Error::Validation(format!(
                "learning rate {learning_rate} must be positive"
            )));
        }
        Ok(Self {
            learning_rate,
            momentum,
            velocity: Vec::new(),
        })
    }

    pub fn velocity(&self) -> &[Tensor<T>] {
        &self.velocity
    }
}

impl<T: Scalar> Optimizer<T> for SgdMomentum<T> {
    fn step(&mut self, mut params: Vec<&mut Tensor<T>>, grads: Vec<&Tensor<T>>) -> Result<()> {
        init_or_check(&mut self.velocity, &params, &grads)?;
        let lr = T::from_f64_lossy(self.learning_rate);
        let mu = T::from_f64_lossy(self.momentum);
        for ((p, g), v) in params.iter_mut().zip(&grads).zip(&mut self.velocity) {
            for ((p, &g), v) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
                *v = mu * *v + g;
                *p -= lr * *v;
            }
        }
        Ok(())
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(learning_rate: f64, beta1: f64, beta2: f64, epsilon: f64) -> Result<Self> {
        for (name, b) in [("beta1", beta1), ("beta2", beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Validation(format!("{name} {b} outside [0, 1)")));
            }
        }
        if !(epsilon > 0.0) || !(learning_rate > 0.0) {
            return Err(Error::Validation(
                "Adam learning rate and epsilon must be positive".into(),
            ));
        }
        Ok(Self {
            learning_rate,
            beta1,
            beta2,
            epsilon,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        })
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }
}

impl<T: Scalar> Default for Adam<T> {
    fn default() -> Self {
        Self::new(0.001, 0.9, 0.999, 1e-8).expect("default hyperparameters are valid")
    }
}

impl<T: Scalar> Optimizer<T> for Adam<T> {
    fn step(&mut self, mut params: Vec<&mut Tensor<T>>, grads: Vec<&Tensor<T>>) -> Result<()> {
        init_or_check(&mut self.m, &params, &grads)?;
        init_or_check(&mut self.v, &params, &grads)?;
        self.step += 1;
        let t = self.step as i32;
        let correction1 = T::from_f64_lossy(1.0 - self.beta1.powi(t));
        let correction2 = T::from_f64_lossy(1.0 - self.beta2.powi(t));
        let (b1, b2) = (T::from_f64_lossy(self.beta1), T::from_f64_lossy(self.beta2));
        let lr = T::from_f64_lossy(self.learning_rate);
        let eps = T::from_f64_lossy(self.epsilon);
        let one = T::one();
        for (((p, g), m), v) in params.iter_mut().zip(&grads).zip(&mut self.m).zip(&mut self.v) {
            for (((p, &g), m), v) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                let m_hat = *m / correction1;
                let v_hat = *v / correction2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerConfig {
    Adam {
        learning_rate: f64,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    },
    SgdMomentum {
        learning_rate: f64,
        momentum: f64,
    },
}

impl OptimizerConfig {
    pub fn adam_default() -> Self {
        OptimizerConfig::Adam {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    /// Learning rate 0.01, momentum 0.9.
    pub fn sgd_default() -> Self {
        OptimizerConfig::SgdMomentum {
            learning_rate: 0.01,
            momentum: 0.9,
        }
    }

    pub fn build<T: Scalar>(&self) -> Result<Box<dyn Optimizer<T>>> {
        Ok(match *self {
            OptimizerConfig::Adam {
                learning_rate,
                beta1,
                beta2,
                epsilon,
            } => Box::new(Adam::new(learning_rate, beta1, beta2, epsilon)?),
            OptimizerConfig::SgdMomentum {
                learning_rate,
                momentum,
            } => Box::new(SgdMomentum::new(learning_rate, momentum)?),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StopDecision {
    Continue,
    Stop,
    /// Non-finite validation loss.
    Diverged,
}

/// Stops once the monitored validation loss has gone `patience`
/// consecutive epochs without a strict improvement.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    pub patience: usize,
    best: f64,
    best_epoch: Option<usize>,
    epochs_since_best: usize,
    seen: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Result<Self> {
        if patience == 0 {
            return Err(Error::Validation("early-stopping patience must be at least 1".into()));
        }
        Ok(Self {
            patience,
            best: f64::INFINITY,
            best_epoch: None,
            epochs_since_best: 0,
            seen: 0,
        })
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    /// Zero-based index of the best epoch so far.
    pub fn best_epoch(&self) -> Option<usize> {
        self.best_epoch
    }

    pub fn epochs_since_best(&self) -> usize {
        self.epochs_since_best
    }

    pub fn update(&mut self, val_loss: f64) -> StopDecision {
        let epoch = self.seen;
        self.seen += 1;
        if !val_loss.is_finite() {
            return StopDecision::Diverged;
        }
        if val_loss < self.best {
            self.best = val_loss;
            self.best_epoch = Some(epoch);
            self.epochs_since_best = 0;
        } else {
            self.epochs_since_best += 1;
        }
        if self.epochs_since_best >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scalar(v: f64) -> Tensor<f64> {
        Tensor::full([1], v)
    }

    #[test]
    fn sgd_examples() {
        let mut p = scalar(0.0);
        let g = scalar(1.0);
        let mut plain = SgdMomentum::new(0.01, 0.0).unwrap();
        plain.step(vec![&mut p], vec![&g]).unwrap();
        assert_eq!(p.data(), &[-0.01]);

        let mut p = scalar(0.0);
        let mut sgd = SgdMomentum::new(0.01, 0.9).unwrap();
        sgd.step(vec![&mut p], vec![&g]).unwrap();
        sgd.step(vec![&mut p], vec![&g]).unwrap();
        assert!((sgd.velocity()[0].data()[0] - 1.9).abs() < 1e-15);
        assert!((p.data()[0] + 0.029).abs() < 1e-15);

        let mut p = scalar(3.0);
        let mut sgd = SgdMomentum::new(0.01, 0.9).unwrap();
        sgd.step(vec![&mut p], vec![&scalar(0.0)]).unwrap();
        assert_eq!(p.data(), &[3.0]);
    }

    #[test]
    fn sgd_rejects_bad_hyperparameters_and_shapes() {
        assert!(SgdMomentum::<f32>::new(0.01, 1.0).is_err());
        let mut sgd = SgdMomentum::<f64>::new(0.01, 0.5).unwrap();
        let mut p = Tensor::zeros([2]);
        assert!(sgd.step(vec![&mut p], vec![&Tensor::zeros([3])]).is_err());
    }

    #[test]
    fn adam_first_step() {
        for g in [3.0, -0.002, 1e-3, -250.0] {
            let mut p = scalar(1.0);
            let mut adam = Adam::<f64>::default();
            adam.step(vec![&mut p], vec![&scalar(g)]).unwrap();
            let delta = p.data()[0] - 1.0;
            let expected = 0.001 * g.abs() / (g.abs() + 1e-8);
            assert!((delta.abs() - expected).abs() < 1e-15, "g={g}");
            assert!(delta.abs() < 0.001);
            assert_eq!(delta.signum(), -g.signum());
        }
        let mut p = scalar(1.0);
        let mut adam = Adam::<f64>::default();
        adam.step(vec![&mut p], vec![&scalar(0.0)]).unwrap();
        assert_eq!(p.data(), &[1.0]);
        assert_eq!(adam.steps_taken(), 1);
    }

    #[test]
    fn early_stopping_examples() {
        let mut es = EarlyStopping::new(5).unwrap();
        let losses = [0.5, 0.4, 0.41, 0.42, 0.43, 0.44, 0.45];
        let decisions: Vec<_> = losses.iter().map(|&l| es.update(l)).collect();
        assert!(decisions[..6].iter().all(|d| *d == StopDecision::Continue));
        assert_eq!(decisions[6], StopDecision::Stop);
        assert_eq!(es.best_epoch(), Some(1));

        let mut es = EarlyStopping::new(5).unwrap();
        for i in 0..100 {
            assert_eq!(es.update(1.0 - i as f64 * 0.001), StopDecision::Continue);
        }

        let mut es = EarlyStopping::new(5).unwrap();
        assert_eq!(es.update(1.0), StopDecision::Continue);
        assert_eq!(es.update(f64::NAN), StopDecision::Diverged);
    }

    #[test]
    fn equal_loss_is_not_an_improvement() {
        let mut es = EarlyStopping::new(2).unwrap();
        es.update(1.0);
        assert_eq!(es.update(1.0), StopDecision::Continue);
        assert_eq!(es.update(1.0), StopDecision::Stop);
    }

    proptest! {
        #[test]
        fn sgd_without_momentum_is_the_plain_rule(
            theta in proptest::collection::vec(-10.0f64..10.0, 6),
            grad in proptest::collection::vec(-10.0f64..10.0, 6),
            lr in 1e-4f64..1.0,
        ) {
            let mut p = Tensor::new([6], theta.clone()).unwrap();
            let g = Tensor::new([6], grad.clone()).unwrap();
            SgdMomentum::new(lr, 0.0).unwrap().step(vec![&mut p], vec![&g]).unwrap();
            for ((&after, &t), &gv) in p.data().iter().zip(&theta).zip(&grad) {
                prop_assert_eq!(after.to_bits(), (t - lr * gv).to_bits());
            }
        }

        #[test]
        fn adam_first_step_bounded(grad in proptest::collection::vec(-1e3f64..1e3, 5), lr in 1e-5f64..0.1) {
            let mut p = Tensor::<f64>::zeros([5]);
            let g = Tensor::new([5], grad).unwrap();
            Adam::new(lr, 0.9, 0.999, 1e-8).unwrap().step(vec![&mut p], vec![&g]).unwrap();
            for &d in p.data() {
                prop_assert!(d.abs() < lr);
            }
        }

        #[test]
        fn patience_is_exact(
            prefix in proptest::collection::vec(0.0f64..10.0, 0..20),
            patience in 1usize..8,
            bumps in proptest::collection::vec(0.0f64..5.0, 8),
        ) {
            // after reaching a new global minimum, `patience` non-improving
            // epochs must stop exactly on the last one
            let floor = prefix.iter().copied().fold(f64::INFINITY, f64::min).min(0.0) - 1.0;
            let mut es = EarlyStopping::new(patience).unwrap();
            let mut stopped_early = false;
            for &l in &prefix {
                if es.update(l) != StopDecision::Continue {
                    stopped_early = true;
                    break;
                }
            }
            prop_assume!(!stopped_early);
            prop_assert_eq!(es.update(floor), StopDecision::Continue);
            for (i, b) in bumps.iter().take(patience).enumerate() {
                let d = es.update(floor + b);
                if i + 1 < patience {
                    prop_assert_eq!(d, StopDecision::Continue);
                } else {
                    prop_assert_eq!(d, StopDecision::Stop);
                }
            }
        }
    }
}
