//! Router configuration shared by every loop.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TEMPERATURE: f64 = 0.1;
pub const DEFAULT_EMBED_DIM: usize = 384;
pub const DEFAULT_MAX_STEPS: usize = 20;
pub const DEFAULT_TRAIN_STEPS: usize = 3;

/// Sizes and knobs of the routing mechanism.
///
/// `pool_size` is the number of candidate agents, `max_route` the upper
/// bound on agents routed per step, and `temperature` only affects how
/// many agents are routed (not which ones).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouterConfig {
    pub pool_size: usize,
    pub max_route: usize,
    pub temperature: f64,
    pub embed_dim: usize,
    pub max_steps: usize,
    pub train_steps: usize,
    pub seed: u64,
}

impl RouterConfig {
    pub fn new(pool_size: usize, max_route: usize) -> Self {
        Self {
            pool_size,
            max_route,
            temperature: DEFAULT_TEMPERATURE,
            embed_dim: DEFAULT_EMBED_DIM,
            max_steps: DEFAULT_MAX_STEPS,
            train_steps: DEFAULT_TRAIN_STEPS,
            seed: 0,
        }
    }

    /// Largest `k` the router can ever produce.
    pub fn k_cap(&self) -> usize {
        self.max_route.min(self.pool_size)
    }

    pub fn validate(self) -> Result<Self> {
        validate_config(self)
    }
}

/// Returns the config unchanged when every invariant holds, otherwise the
/// first violated one.
pub fn validate_config(config: RouterConfig) -> Result<RouterConfig> {
    if config.pool_size < 1 {
        return Err(Error::Config("pool size must be at least 1".into()));
    }
    if config.max_route < 1 {
        return Err(Error::Config("max route must be at least 1".into()));
    }
    if !config.temperature.is_finite() || config.temperature <= 0.0 {
        return Err(Error::Config("temperature must be positive".into()));
    }
    if config.embed_dim < 1 {
        return Err(Error::Config("embedding dimension must be at least 1".into()));
    }
    if config.max_steps < 1 {
        return Err(Error::Config("max steps must be at least 1".into()));
    }
    if config.train_steps < 1 {
        return Err(Error::Config("train steps must be at least 1".into()));
    }
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: usize, k: usize, tau: f64, d: usize, l: usize, seed: u64) -> RouterConfig {
        RouterConfig {
            pool_size: n,
            max_route: k,
            temperature: tau,
            embed_dim: d,
            max_steps: l,
            train_steps: 1,
            seed,
        }
    }

    #[test]
    fn default_hyperparameters_validate() {
        let c = cfg(5, 3, 0.1, 384, 20, 7);
        assert_eq!(validate_config(c.clone()).unwrap(), c);
    }

    #[test]
    fn minimal_config_validates() {
        assert!(validate_config(cfg(1, 1, 1.0, 1, 1, 0)).is_ok());
    }

    #[test]
    fn zero_temperature_rejected() {
        let err = validate_config(cfg(5, 3, 0.0, 384, 20, 7)).unwrap_err();
        assert!(err.to_string().contains("temperature must be positive"), "{err}");
        assert!(validate_config(cfg(5, 3, f64::NAN, 384, 20, 7)).is_err());
    }

    #[test]
    fn first_violation_is_reported() {
        let err = validate_config(cfg(0, 0, 0.0, 0, 0, 0)).unwrap_err();
        assert!(err.to_string().contains("pool size"));
        let err = validate_config(cfg(3, 3, 0.1, 0, 5, 0)).unwrap_err();
        assert!(err.to_string().contains("embedding dimension"));
    }

    #[test]
    fn k_cap_is_min_of_route_and_pool() {
        assert_eq!(RouterConfig::new(3, 5).k_cap(), 3);
        assert_eq!(RouterConfig::new(8, 4).k_cap(), 4);
    }
}
