use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::baselines::{h_depth2, h_dvf, h_myopic, h_rand, HeuristicMetric, PosteriorSummary};
use crate::error::{Error, Result};
use crate::inference::{DirichletParams, InferenceContext};
use crate::mcts::{select_question, PolicyConfig};
use crate::model::{Pair, PreferenceSet};
use crate::rng::{derive_seed, EngineRng};

/// Questioning policies available to studies and sessions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    Mcts,
    HPwi,
    HRai,
    HPwi2,
    HRai2,
    HDvf,
    HRand,
}

impl Policy {
    pub const ALL: [Policy; 7] = [
        Policy::Mcts,
        Policy::HPwi,
        Policy::HRai,
        Policy::HPwi2,
        Policy::HRai2,
        Policy::HDvf,
        Policy::HRand,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Policy::Mcts => "mcts",
            Policy::HPwi => "h_pwi",
            Policy::HRai => "h_rai",
            Policy::HPwi2 => "h_pwi2",
            Policy::HRai2 => "h_rai2",
            Policy::HDvf => "h_dvf",
            Policy::HRand => "h_rand",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Policy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Policy::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown policy `{s}`")))
    }
}

/// Picks the next question for state `q` with current posterior `theta`.
pub fn choose_question(
    policy: Policy,
    ctx: &InferenceContext,
    q: &PreferenceSet,
    theta: &DirichletParams,
    round: usize,
    mcts: &PolicyConfig,
    seed: u64,
) -> Result<Pair> {
    let n = ctx.n_alternatives();
    let summary = || PosteriorSummary::new(ctx, theta.clone(), derive_seed(seed, &[0]));
    let inner = derive_seed(seed, &[1]);
    match policy {
        Policy::Mcts => {
            let cfg = PolicyConfig {
                rng_seed: inner,
                ..mcts.clone()
            };
            Ok(select_question(ctx, q, theta, &cfg, round)?.question)
        }
        Policy::HPwi => h_myopic(ctx, q, &summary()?, HeuristicMetric::Pwi, inner),
        Policy::HRai => h_myopic(ctx, q, &summary()?, HeuristicMetric::Rai, inner),
        Policy::HPwi2 => h_depth2(ctx, q, &summary()?, HeuristicMetric::Pwi, inner),
        Policy::HRai2 => h_depth2(ctx, q, &summary()?, HeuristicMetric::Rai, inner),
        Policy::HDvf => {
            let s = summary()?;
            h_dvf(q, |i, j| s.counts.pwi(i, j), n)
        }
        Policy::HRand => h_rand(q, n, &mut EngineRng::seed_from_u64(inner)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for p in Policy::ALL {
            assert_eq!(p.name().parse::<Policy>().unwrap(), p);
            assert_eq!(serde_json::to_string(&p).unwrap(), format!("\"{}\"", p.name()));
        }
        assert!("nope".parse::<Policy>().is_err());
    }
}
