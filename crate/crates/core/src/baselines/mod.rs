//! Comparison questioning policies and the stochastic ordinal regression
//! inference baseline.

mod heuristics;
pub mod lp;
mod sor;

pub use heuristics::{
    h_depth2, h_depth2_scores, h_dvf, h_myopic, h_myopic_scores, h_rand, myopic_score, HeuristicMetric,
    HypotheticalFits, PosteriorSummary,
};
pub use sor::{hit_and_run, resolve_inconsistency, sor_poi, HitAndRunConfig, PolytopeSpec, DEFAULT_MARGIN};
