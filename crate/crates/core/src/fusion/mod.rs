//! Estimating full-universe soft labels from heterogeneous predictions.

mod ce;
mod descent;
mod mf_logit;
mod mf_prob;
mod sd;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use ce::{ce_gradient, ce_objective, ce_objective_and_gradient, fuse_ce};
pub use descent::CESolverConfig;
pub use mf_logit::{
    eliminate_c_objective, fixed_v_objective, fixed_v_objective_and_gradient, fuse_mf_logit, mf_logit_als,
    mfl_objective, optimal_shift, LogitMFConfig, ScaleVariant,
};
pub use mf_prob::{fuse_mf_prob, mf_prob_als, mf_prob_als_from, mfp_objective, ALSConfig, AlsRun};
pub use sd::{fuse_sd, zero_fill_cross_entropy};

use crate::error::{Result, UhcError};
use crate::label_model::{FusedLabel, PredictionProfile};

/// A configured fusion method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum Fusion {
    Sd,
    Ce(CESolverConfig),
    MfProb(ALSConfig),
    MfLogit(LogitMFConfig),
}

impl Fusion {
    /// Parse a method name (`sd`, `ce`, `mf-p`, `mf-lv`, `mf-lf`) with default
    /// settings and the given regulariser for `mf-lv`.
    pub fn from_name(name: &str, lambda: f64) -> Result<Self> {
        Ok(match name {
            "sd" => Fusion::Sd,
            "ce" => Fusion::Ce(CESolverConfig::default()),
            "mf-p" => Fusion::MfProb(ALSConfig::default()),
            "mf-lv" => Fusion::MfLogit(LogitMFConfig::free(lambda)),
            "mf-lf" => Fusion::MfLogit(LogitMFConfig::fixed()),
            other => return Err(UhcError::invalid(format!("unknown fusion method '{other}'"))),
        })
    }

    pub fn fuse(&self, profile: &PredictionProfile) -> Result<FusedLabel> {
        match self {
            Fusion::Sd => Ok(fuse_sd(profile)),
            Fusion::Ce(cfg) => fuse_ce(profile, cfg),
            Fusion::MfProb(cfg) => fuse_mf_prob(profile, cfg),
            Fusion::MfLogit(cfg) => fuse_mf_logit(profile, cfg),
        }
    }

    /// Fuse every profile independently; output order matches input order.
    pub fn fuse_all(&self, profiles: &[PredictionProfile]) -> Result<Vec<FusedLabel>> {
        profiles.par_iter().map(|p| self.fuse(p)).collect()
    }
}
