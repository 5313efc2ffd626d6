//! Comparison questioning policies built on pairwise winning indices.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{DirichletParams, InferenceContext, PairwiseCounts};
use crate::metrics::{f_pwi, f_rai, pwi_from_counts, rai_from_values};
use crate::model::{candidate_pairs, Pair, PreferenceSet, PreferenceStatement};
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeuristicMetric {
    Pwi,
    Rai,
}

/// Posterior summary at one preference set.
#[derive(Debug, Clone)]
pub struct PosteriorSummary {
    pub theta: DirichletParams,
    pub counts: PairwiseCounts,
    pub f_pwi: f64,
    pub f_rai: f64,
}

impl PosteriorSummary {
    pub fn new(ctx: &InferenceContext, theta: DirichletParams, seed: u64) -> Result<Self> {
        let samples = ctx.samples(&theta, seed)?;
        let values = samples.values(&ctx.design);
        let n = ctx.n_alternatives();
        let counts = PairwiseCounts::from_values(&values, n);
        let f_pwi = f_pwi(&pwi_from_counts(&counts));
        let f_rai = f_rai(&rai_from_values(&values, n));
        Ok(PosteriorSummary {
            theta,
            counts,
            f_pwi,
            f_rai,
        })
    }

    pub fn metric(&self, m: HeuristicMetric) -> f64 {
        match m {
            HeuristicMetric::Pwi => self.f_pwi,
            HeuristicMetric::Rai => self.f_rai,
        }
    }

    /// Answer weights `PWI(i,j)/(PWI(i,j)+PWI(j,i))` and its complement.
    pub fn answer_weights(&self, p: Pair) -> (f64, f64) {
        let (a, b) = (self.counts.pwi(p.first, p.second), self.counts.pwi(p.second, p.first));
        (a / (a + b), b / (a + b))
    }
}

/// Refits for hypothetical preference sets, memoized by the (order-free)
/// statement set so both orders of a two-step path share one fit.
pub struct HypotheticalFits<'a> {
    ctx: &'a InferenceContext,
    warm: &'a DirichletParams,
    seed: u64,
    cache: HashMap<Vec<(usize, usize)>, PosteriorSummary>,
}

impl<'a> HypotheticalFits<'a> {
    pub fn new(ctx: &'a InferenceContext, warm: &'a DirichletParams, seed: u64) -> Self {
        HypotheticalFits {
            ctx,
            warm,
            seed,
            cache: HashMap::new(),
        }
    }

    /// Rollout-grade posterior summary of `q`.
    pub fn summary(&mut self, q: &PreferenceSet) -> Result<&PosteriorSummary> {
        let mut key: Vec<(usize, usize)> = q.iter().map(|s| (s.preferred, s.other)).collect();
        key.sort_unstable();
        if !self.cache.contains_key(&key) {
            let stream: Vec<u64> = key.iter().flat_map(|&(a, b)| [a as u64, b as u64]).collect();
            let seed = derive_seed(self.seed, &stream);
            let fit = self.ctx.fit_rollout(q, seed, Some(self.warm))?;
            let summary = PosteriorSummary::new(self.ctx, fit.theta, derive_seed(seed, &[1]))?;
            self.cache.insert(key.clone(), summary);
        }
        Ok(&self.cache[&key])
    }
}

fn ensure_candidates(q: &PreferenceSet, n: usize) -> Result<Vec<Pair>> {
    let c = candidate_pairs(n, q);
    if c.is_empty() {
        return Err(Error::Saturated);
    }
    Ok(c)
}

fn argmax(scores: &[(Pair, f64)]) -> Pair {
    let mut best = scores[0];
    for &s in &scores[1..] {
        if s.1 > best.1 {
            best = s;
        }
    }
    best.0
}

fn both_answers(q: &PreferenceSet, p: Pair) -> Result<(PreferenceSet, PreferenceSet)> {
    Ok((
        q.with(PreferenceStatement::new(p.first, p.second)?)?,
        q.with(PreferenceStatement::new(p.second, p.first)?)?,
    ))
}

/// Weighted expected metric reduction of asking `p`.
pub fn myopic_score(weights: (f64, f64), f_now: f64, f_first: f64, f_second: f64) -> f64 {
    weights.0 * (f_now - f_first) + weights.1 * (f_now - f_second)
}

/// Expected entropy reduction for every candidate, in candidate order.
pub fn h_myopic_scores(
    ctx: &InferenceContext,
    q: &PreferenceSet,
    current: &PosteriorSummary,
    metric: HeuristicMetric,
    seed: u64,
) -> Result<Vec<(Pair, f64)>> {
    let candidates = ensure_candidates(q, ctx.n_alternatives())?;
    let mut fits = HypotheticalFits::new(ctx, &current.theta, seed);
    let f_now = current.metric(metric);
    candidates
        .into_iter()
        .map(|p| {
            let (qa, qb) = both_answers(q, p)?;
            let fa = fits.summary(&qa)?.metric(metric);
            let fb = fits.summary(&qb)?.metric(metric);
            Ok((p, myopic_score(current.answer_weights(p), f_now, fa, fb)))
        })
        .collect()
}

/// `H_PWI` / `H_RAI`: the myopically best question.
pub fn h_myopic(
    ctx: &InferenceContext,
    q: &PreferenceSet,
    current: &PosteriorSummary,
    metric: HeuristicMetric,
    seed: u64,
) -> Result<Pair> {
    Ok(argmax(&h_myopic_scores(ctx, q, current, metric, seed)?))
}

/// Two-level lookahead scores: outer answer weights from `current`, inner
/// weights from the hypothetical posterior, leaf value `−f(Q'')`.
pub fn h_depth2_scores(
    ctx: &InferenceContext,
    q: &PreferenceSet,
    current: &PosteriorSummary,
    metric: HeuristicMetric,
    seed: u64,
) -> Result<Vec<(Pair, f64)>> {
    let n = ctx.n_alternatives();
    let candidates = ensure_candidates(q, n)?;
    let mut fits = HypotheticalFits::new(ctx, &current.theta, seed);
    let mut out = Vec::with_capacity(candidates.len());
    for &p in &candidates {
        let (qa, qb) = both_answers(q, p)?;
        let mut branch = [0.0; 2];
        for (slot, q1) in [qa, qb].iter().enumerate() {
            let inner = candidate_pairs(n, q1);
            branch[slot] = if inner.is_empty() {
                -fits.summary(q1)?.metric(metric)
            } else {
                let mut best = f64::NEG_INFINITY;
                for r in inner {
                    let w = fits.summary(q1)?.answer_weights(r);
                    let (q2a, q2b) = both_answers(q1, r)?;
                    let va = -fits.summary(&q2a)?.metric(metric);
                    let vb = -fits.summary(&q2b)?.metric(metric);
                    best = best.max(w.0 * va + w.1 * vb);
                }
                best
            };
        }
        let w = current.answer_weights(p);
        out.push((p, w.0 * branch[0] + w.1 * branch[1]));
    }
    Ok(out)
}

/// `H_PWI-2` / `H_RAI-2`.
pub fn h_depth2(
    ctx: &InferenceContext,
    q: &PreferenceSet,
    current: &PosteriorSummary,
    metric: HeuristicMetric,
    seed: u64,
) -> Result<Pair> {
    Ok(argmax(&h_depth2_scores(ctx, q, current, metric, seed)?))
}

/// `H_DVF`: the candidate whose smaller winning index is largest.
pub fn h_dvf(q: &PreferenceSet, pwi: impl Fn(usize, usize) -> f64, n: usize) -> Result<Pair> {
    let candidates = ensure_candidates(q, n)?;
    let scores: Vec<(Pair, f64)> = candidates
        .into_iter()
        .map(|p| (p, pwi(p.first, p.second).min(pwi(p.second, p.first))))
        .collect();
    Ok(argmax(&scores))
}

/// `H_RAND`: uniform over candidates.
pub fn h_rand<R: Rng + ?Sized>(q: &PreferenceSet, n: usize, rng: &mut R) -> Result<Pair> {
    let candidates = ensure_candidates(q, n)?;
    Ok(candidates[rng.random_range(0..candidates.len())])
}
