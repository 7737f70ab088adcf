//! Engine configuration: every tunable scalar in one validated record.
//!
//! A config is built either from [`DCoTConfig::default`] or from a list of
//! `key=value` pairs (the flat config-file format and CLI overrides both
//! reduce to pairs; later pairs win). Construction always runs the full
//! validation, so a `DCoTConfig` in hand satisfies every range invariant.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

/// Validation failure while building a [`DCoTConfig`].
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    /// A field violated its documented bound, e.g. `alpha ∉ [0,1]`.
    #[error("{field} ∉ {bound}")]
    OutOfRange {
        field: &'static str,
        bound: &'static str,
    },
    /// `top_k` may not exceed `n_experts`.
    #[error("top_k > n_experts")]
    TopKExceedsExperts,
    /// Key not in the documented field list.
    #[error("unknown config field: {0}")]
    UnknownField(String),
    /// Value failed to parse for the named field.
    #[error("invalid value for {field}: {value:?}")]
    BadValue { field: &'static str, value: String },
}

/// All tunable scalars of the engine.
///
/// `p_fact_min` and `c_comp_max` default to the fixed discriminator
/// thresholds (0.85 and 3) and are only meant to be changed through an
/// explicit override pair; nothing in the engine adjusts them.
#[derive(Debug, Clone, PartialEq)]
pub struct DCoTConfig {
    /// Mix weight between advantage and gating in step importance, in [0,1].
    pub alpha: f64,
    /// Attenuation of the historical threshold EMA, in [0,1].
    pub gamma_ema: f64,
    /// Mix weight between gating mass and attention in the token signal, in [0,1].
    pub gamma_mix: f64,
    /// Scale of the reward deviation in the dynamic threshold, ≥ 0.
    pub eta_thr: f64,
    /// Learning rate for policy parameter updates, ≥ 0 (0 freezes learning).
    pub eta_lr: f64,
    /// Weight of the structural reward in the policy objective, ≥ 0.
    pub lambda_struct: f64,
    /// Base pruning threshold, in [0,1].
    pub tau_0: f64,
    /// Number of experts in the MoE stack, ≥ 1.
    pub n_experts: usize,
    /// Active experts per token, in [1, n_experts].
    pub top_k: usize,
    /// Tokens per decode block, ≥ 1.
    pub block_size: usize,
    /// Length of the importance indicator window for the EMA threshold, ≥ 1.
    pub window_n: usize,
    /// Knowledge-certainty threshold for direct answers, in [0,1].
    pub p_fact_min: f64,
    /// Complexity ceiling for direct answers.
    pub c_comp_max: u32,
    /// Probability-ratio bound for clipped policy updates, > 0.
    pub ppo_clip: f64,
    /// Maximum reasoning steps per session, ≥ 1.
    pub step_cap: usize,
    /// Maximum generated tokens per session, ≥ 1.
    pub token_budget: usize,
    /// Width of the summarize band above the pruning threshold, ≥ 0.
    pub delta_sum: f64,
    /// Token-cost weight in the episode reward, ≥ 0.
    pub mu_cost: f64,
    /// Root seed for all derived random streams.
    pub seed: u64,
}

impl Default for DCoTConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            gamma_ema: 0.9,
            gamma_mix: 0.7,
            eta_thr: 0.1,
            eta_lr: 0.01,
            lambda_struct: 0.5,
            tau_0: 0.5,
            n_experts: 4,
            top_k: 2,
            block_size: 4,
            window_n: 16,
            p_fact_min: 0.85,
            c_comp_max: 3,
            ppo_clip: 0.2,
            step_cap: 8,
            token_budget: 320,
            delta_sum: 0.1,
            mu_cost: 0.2,
            seed: 0,
        }
    }
}

/// Field names in canonical (serialization) order.
pub const FIELD_ORDER: [&str; 19] = [
    "alpha",
    "gamma_ema",
    "gamma_mix",
    "eta_thr",
    "eta_lr",
    "lambda_struct",
    "tau_0",
    "n_experts",
    "top_k",
    "block_size",
    "window_n",
    "p_fact_min",
    "c_comp_max",
    "ppo_clip",
    "step_cap",
    "token_budget",
    "delta_sum",
    "mu_cost",
    "seed",
];

impl DCoTConfig {
    /// Build a config from `key=value` pairs on top of the defaults and
    /// validate it. Later pairs override earlier ones, so callers can append
    /// CLI overrides after file contents.
    pub fn from_pairs<K: AsRef<str>, V: AsRef<str>>(
        pairs: &[(K, V)],
    ) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (key, value) in pairs {
            cfg.set(key.as_ref(), value.as_ref())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical `(field, value)` pairs in [`FIELD_ORDER`]. Feeding them back
    /// through [`DCoTConfig::from_pairs`] reproduces the config exactly.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::with_capacity(FIELD_ORDER.len());
        out.push(("alpha", self.alpha.to_string()));
        out.push(("gamma_ema", self.gamma_ema.to_string()));
        out.push(("gamma_mix", self.gamma_mix.to_string()));
        out.push(("eta_thr", self.eta_thr.to_string()));
        out.push(("eta_lr", self.eta_lr.to_string()));
        out.push(("lambda_struct", self.lambda_struct.to_string()));
        out.push(("tau_0", self.tau_0.to_string()));
        out.push(("n_experts", self.n_experts.to_string()));
        out.push(("top_k", self.top_k.to_string()));
        out.push(("block_size", self.block_size.to_string()));
        out.push(("window_n", self.window_n.to_string()));
        out.push(("p_fact_min", self.p_fact_min.to_string()));
        out.push(("c_comp_max", self.c_comp_max.to_string()));
        out.push(("ppo_clip", self.ppo_clip.to_string()));
        out.push(("step_cap", self.step_cap.to_string()));
        out.push(("token_budget", self.token_budget.to_string()));
        out.push(("delta_sum", self.delta_sum.to_string()));
        out.push(("mu_cost", self.mu_cost.to_string()));
        out.push(("seed", self.seed.to_string()));
        out
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        fn f64_of(field: &'static str, v: &str) -> Result<f64, ConfigError> {
            v.parse().map_err(|_| ConfigError::BadValue {
                field,
                value: v.to_string(),
            })
        }
        fn usize_of(field: &'static str, v: &str) -> Result<usize, ConfigError> {
            v.parse().map_err(|_| ConfigError::BadValue {
                field,
                value: v.to_string(),
            })
        }
        match key {
            "alpha" => self.alpha = f64_of("alpha", value)?,
            "gamma_ema" => self.gamma_ema = f64_of("gamma_ema", value)?,
            "gamma_mix" => self.gamma_mix = f64_of("gamma_mix", value)?,
            "eta_thr" => self.eta_thr = f64_of("eta_thr", value)?,
            "eta_lr" => self.eta_lr = f64_of("eta_lr", value)?,
            "lambda_struct" => self.lambda_struct = f64_of("lambda_struct", value)?,
            "tau_0" => self.tau_0 = f64_of("tau_0", value)?,
            "n_experts" => self.n_experts = usize_of("n_experts", value)?,
            "top_k" => self.top_k = usize_of("top_k", value)?,
            "block_size" => self.block_size = usize_of("block_size", value)?,
            "window_n" => self.window_n = usize_of("window_n", value)?,
            "p_fact_min" => self.p_fact_min = f64_of("p_fact_min", value)?,
            "c_comp_max" => {
                self.c_comp_max = value.parse().map_err(|_| ConfigError::BadValue {
                    field: "c_comp_max",
                    value: value.to_string(),
                })?
            }
            "ppo_clip" => self.ppo_clip = f64_of("ppo_clip", value)?,
            "step_cap" => self.step_cap = usize_of("step_cap", value)?,
            "token_budget" => self.token_budget = usize_of("token_budget", value)?,
            "delta_sum" => self.delta_sum = f64_of("delta_sum", value)?,
            "mu_cost" => self.mu_cost = f64_of("mu_cost", value)?,
            "seed" => {
                self.seed = value.parse().map_err(|_| ConfigError::BadValue {
                    field: "seed",
                    value: value.to_string(),
                })?
            }
            other => return Err(ConfigError::UnknownField(other.to_string())),
        }
        Ok(())
    }

    /// Check every range invariant.
    pub fn validate(&self) -> Result<(), ConfigError> {
        fn unit(field: &'static str, v: f64) -> Result<(), ConfigError> {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(ConfigError::OutOfRange {
                    field,
                    bound: "[0,1]",
                })
            }
        }
        fn non_negative(field: &'static str, v: f64) -> Result<(), ConfigError> {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(ConfigError::OutOfRange {
                    field,
                    bound: "[0,∞)",
                })
            }
        }
        unit("alpha", self.alpha)?;
        unit("gamma_ema", self.gamma_ema)?;
        unit("gamma_mix", self.gamma_mix)?;
        non_negative("eta_thr", self.eta_thr)?;
        // The field reads "learning rate"; zero is allowed so that frozen
        // learning (part of the train-op contract) stays constructible.
        non_negative("eta_lr", self.eta_lr)?;
        non_negative("lambda_struct", self.lambda_struct)?;
        unit("tau_0", self.tau_0)?;
        unit("p_fact_min", self.p_fact_min)?;
        non_negative("delta_sum", self.delta_sum)?;
        non_negative("mu_cost", self.mu_cost)?;
        if !(self.ppo_clip.is_finite() && self.ppo_clip > 0.0) {
            return Err(ConfigError::OutOfRange {
                field: "ppo_clip",
                bound: "(0,∞)",
            });
        }
        if self.n_experts == 0 {
            return Err(ConfigError::OutOfRange {
                field: "n_experts",
                bound: "[1,∞)",
            });
        }
        if self.top_k == 0 {
            return Err(ConfigError::OutOfRange {
                field: "top_k",
                bound: "[1,n_experts]",
            });
        }
        if self.top_k > self.n_experts {
            return Err(ConfigError::TopKExceedsExperts);
        }
        if self.block_size == 0 {
            return Err(ConfigError::OutOfRange {
                field: "block_size",
                bound: "[1,∞)",
            });
        }
        if self.window_n == 0 {
            return Err(ConfigError::OutOfRange {
                field: "window_n",
                bound: "[1,∞)",
            });
        }
        if self.step_cap == 0 {
            return Err(ConfigError::OutOfRange {
                field: "step_cap",
                bound: "[1,∞)",
            });
        }
        if self.token_budget == 0 {
            return Err(ConfigError::OutOfRange {
                field: "token_budget",
                bound: "[1,∞)",
            });
        }
        Ok(())
    }
}
