//! Adam with bias correction.
//!
//! Moment state is always f64 so an f32 model does not compound rounding in
//! the optimizer; only the final parameter write narrows.

use crate::seq2seq::{Parameters, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl AdamConfig {
    pub fn with_lr(learning_rate: f64) -> AdamConfig {
        AdamConfig {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    steps: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, param_count: usize) -> Adam {
        Adam {
            config,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Apply one update in place. `grads` must come from the same model
    /// geometry the optimizer was sized for.
    pub fn step<F: Scalar>(&mut self, params: &mut Parameters<F>, grads: &Parameters<F>) {
        let flat_grads = grads.to_flat();
        assert_eq!(
            flat_grads.len(),
            self.m.len(),
            "optimizer sized for a different model"
        );
        self.steps += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
            weight_decay,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.steps as i32);
        let bc2 = 1.0 - beta2.powi(self.steps as i32);
        let mut cursor = 0usize;
        params.visit_slices_mut(&mut |_, slice| {
            for value in slice.iter_mut() {
                let mut g = flat_grads[cursor].to_f64();
                if weight_decay != 0.0 {
                    g += weight_decay * value.to_f64();
                }
                let m = beta1 * self.m[cursor] + (1.0 - beta1) * g;
                let v = beta2 * self.v[cursor] + (1.0 - beta2) * g * g;
                self.m[cursor] = m;
                self.v[cursor] = v;
                let update = learning_rate * (m / bc1) / ((v / bc2).sqrt() + epsilon);
                *value = F::from_f64(value.to_f64() - update);
                cursor += 1;
            }
        });
        assert_eq!(cursor, flat_grads.len(), "traversal covered every value");
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seq2seq::{init_params, ModelConfig};

    fn tiny() -> ModelConfig {
        ModelConfig {
            vocab_size: 9,
            d_model: 8,
            n_layers: 1,
            n_heads: 2,
            d_ff: 8,
            max_len: 6,
            dropout: 0.0,
        }
    }

    #[test]
    fn first_step_moves_by_signed_learning_rate() {
        let cfg = tiny();
        let mut params = init_params::<f64>(&cfg, 0).unwrap();
        let before = params.to_flat();
        // Gradients with |g| around 0.02, far above epsilon, so the
        // bias-corrected first update is almost exactly lr in magnitude.
        let grads = init_params::<f64>(&cfg, 1).unwrap();
        let gflat = grads.to_flat();
        let lr = 1e-3;
        let mut opt = Adam::new(AdamConfig::with_lr(lr), params.param_count());
        opt.step(&mut params, &grads);
        assert_eq!(opt.steps(), 1);
        let after = params.to_flat();
        for i in 0..before.len() {
            let delta = after[i] - before[i];
            if gflat[i].abs() > 1e-3 {
                let expected = -lr * gflat[i].signum();
                assert!(
                    (delta - expected).abs() < lr * 1e-3,
                    "index {i}: delta {delta} expected {expected}"
                );
            } else if gflat[i] == 0.0 {
                assert_eq!(delta, 0.0, "zero gradient moved index {i}");
            }
        }
    }

    #[test]
    fn two_steps_match_hand_computation() {
        let cfg = tiny();
        let mut params = init_params::<f64>(&cfg, 2).unwrap();
        let idx = 17;
        let p0 = params.get_flat(idx);
        let grads = init_params::<f64>(&cfg, 3).unwrap();
        let g = grads.get_flat(idx);
        let acfg = AdamConfig::with_lr(0.01);
        let mut opt = Adam::new(acfg.clone(), params.param_count());
        opt.step(&mut params, &grads);
        opt.step(&mut params, &grads);

        let mut m = 0.0;
        let mut v = 0.0;
        let mut p = p0;
        for t in 1..=2 {
            m = acfg.beta1 * m + (1.0 - acfg.beta1) * g;
            v = acfg.beta2 * v + (1.0 - acfg.beta2) * g * g;
            let mhat = m / (1.0 - acfg.beta1.powi(t));
            let vhat = v / (1.0 - acfg.beta2.powi(t));
            p -= acfg.learning_rate * mhat / (vhat.sqrt() + acfg.epsilon);
        }
        assert!((params.get_flat(idx) - p).abs() < 1e-15);
    }

    #[test]
    fn drives_a_quadratic_toward_zero() {
        let cfg = tiny();
        let mut params = init_params::<f64>(&cfg, 4).unwrap();
        let mut opt = Adam::new(AdamConfig::with_lr(0.01), params.param_count());
        // Loss (1/2)||p||^2 has gradient p. Norm gains start at 1.0; after
        // convergence Adam limit-cycles with amplitude on the order of the
        // learning rate, so check against a few multiples of it.
        let start = params.to_flat().iter().fold(0f64, |m, x| m.max(x.abs()));
        assert!(start >= 1.0);
        for _ in 0..400 {
            let grads = params.clone();
            opt.step(&mut params, &grads);
        }
        let end = params.to_flat().iter().fold(0f64, |m, x| m.max(x.abs()));
        assert!(end < 0.05, "largest coordinate still {end}");
    }

    #[test]
    fn weight_decay_shrinks_parameters_without_gradients() {
        let cfg = tiny();
        let mut params = init_params::<f64>(&cfg, 5).unwrap();
        let before = params.to_flat();
        let zero_grads = Parameters::<f64>::zeros(&cfg);
        let mut acfg = AdamConfig::with_lr(1e-4);
        acfg.weight_decay = 0.1;
        let mut opt = Adam::new(acfg, params.param_count());
        opt.step(&mut params, &zero_grads);
        let after = params.to_flat();
        for i in 0..before.len() {
            if before[i].abs() > 1e-3 {
                assert!(after[i].abs() < before[i].abs(), "index {i} grew");
            }
        }
    }

    #[test]
    #[should_panic(expected = "different model")]
    fn rejects_mismatched_geometry() {
        let cfg = tiny();
        let mut params = init_params::<f64>(&cfg, 0).unwrap();
        let bigger = ModelConfig {
            vocab_size: 11,
            ..tiny()
        };
        let grads = Parameters::<f64>::zeros(&bigger);
        let mut opt = Adam::new(AdamConfig::with_lr(0.1), params.param_count());
        opt.step(&mut params, &grads);
    }
}
