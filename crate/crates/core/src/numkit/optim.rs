use serde::{Deserialize, Serialize};

use super::{ParamStore, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Enables the RAdam variance-rectification term.
    #[serde(default)]
    pub rectify: bool,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            rectify: false,
        }
    }
}

/// Adam moments for every tensor of a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct OptimizerState {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl OptimizerState {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Result<Self> {
        if config.lr <= 0.0 || !config.lr.is_finite() {
            return Err(Error::Param(format!(
                "learning rate must be positive, got {}",
                config.lr
            )));
        }
        if !(0.0..1.0).contains(&config.beta1) || !(0.0..1.0).contains(&config.beta2) {
            return Err(Error::Param("betas must lie in [0, 1)".into()));
        }
        let zeros = || {
            store
                .ids()
                .map(|id| {
                    let (r, c) = store.value(id).shape();
                    Tensor::zeros(r, c)
                })
                .collect::<Vec<_>>()
        };
        Ok(OptimizerState {
            config,
            step: 0,
            first: zeros(),
            second: zeros(),
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update from the store's accumulated gradients.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        if self.first.len() != store.len() {
            return Err(Error::Param(
                "optimizer state does not match parameter store".into(),
            ));
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
            rectify,
        } = self.config;
        let t = self.step as f64;
        let bias1 = 1.0 - beta1.powf(t);
        let bias2 = 1.0 - beta2.powf(t);

        // RAdam: length of the approximated simple moving average.
        let rect = if rectify {
            let rho_inf = 2.0 / (1.0 - beta2) - 1.0;
            let rho_t = rho_inf - 2.0 * t * beta2.powf(t) / bias2;
            if rho_t > 4.0 {
                let r = ((rho_t - 4.0) * (rho_t - 2.0) * rho_inf
                    / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t))
                    .sqrt();
                Some(r)
            } else {
                None
            }
        } else {
            Some(1.0)
        };

        for id in store.ids().collect::<Vec<_>>() {
            let i = id.index();
            let g = store.grad(id).data().to_vec();
            let m = self.first[i].data_mut();
            let v = self.second[i].data_mut();
            let w = store.value_mut(id).data_mut();
            for k in 0..g.len() {
                m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
                v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
                let m_hat = m[k] / bias1;
                match rect {
                    Some(r) if rectify => {
                        let v_hat = (v[k] / bias2).sqrt();
                        w[k] -= lr * r * m_hat / (v_hat + eps);
                    }
                    Some(_) => {
                        let v_hat = v[k] / bias2;
                        w[k] -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                    // Variance not yet tractable: momentum-only update.
                    None => w[k] -= lr * m_hat,
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic_run(rectify: bool) -> f64 {
        let mut store = ParamStore::new();
        let x = store.insert("x", Tensor::scalar(3.0));
        let cfg = AdamConfig {
            lr: 0.1,
            rectify,
            ..AdamConfig::default()
        };
        let mut opt = OptimizerState::new(cfg, &store).unwrap();
        for _ in 0..500 {
            store.zero_grads();
            let xv = store.value(x).get(0, 0);
            store.grad_mut(x).set(0, 0, 2.0 * xv);
            opt.step(&mut store).unwrap();
        }
        store.value(x).get(0, 0)
    }

    #[test]
    fn converges_on_quadratic() {
        assert!(quadratic_run(false).abs() < 1e-2);
        assert!(quadratic_run(true).abs() < 1e-2);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut store = ParamStore::new();
        let x = store.insert("x", Tensor::from_rows(&[[1.5, -2.0]]));
        let mut opt = OptimizerState::new(AdamConfig::default(), &store).unwrap();
        opt.step(&mut store).unwrap();
        assert_eq!(store.value(x), &Tensor::from_rows(&[[1.5, -2.0]]));
        assert_eq!(opt.step_count(), 1);
    }

    #[test]
    fn deterministic_updates() {
        assert_eq!(
            quadratic_run(false).to_bits(),
            quadratic_run(false).to_bits()
        );
    }

    #[test]
    fn rejects_nonpositive_lr() {
        let store = ParamStore::new();
        let cfg = AdamConfig {
            lr: 0.0,
            ..AdamConfig::default()
        };
        assert!(matches!(
            OptimizerState::new(cfg, &store),
            Err(Error::Param(_))
        ));
    }
}
