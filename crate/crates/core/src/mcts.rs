//! Question selection by UCT tree search over the elicitation horizon.
//!
//! Nodes are questions. Each descent samples answers afresh from the root
//! posterior's predictive probabilities, completes the path with random
//! unasked questions, refits once at the end, and scores the normalized
//! reduction in posterior variance.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{posterior_variance, DirichletParams, InferenceContext, OptimizerConfig, PairwiseCounts};
use crate::model::{candidate_pairs, Pair, PreferenceSet, PreferenceStatement};
use crate::rng::{derive_seed, EngineRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    pub budget: usize,
    pub exploration: f64,
    /// Total number of rounds `T`.
    pub horizon: usize,
    pub rollout_fit: OptimizerConfig,
    pub rng_seed: u64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            budget: 300,
            exploration: std::f64::consts::FRAC_1_SQRT_2,
            horizon: 10,
            rollout_fit: OptimizerConfig::rollout(),
            rng_seed: 0,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 || self.horizon == 0 || !(self.exploration >= 0.0) {
            return Err(Error::InvalidInput(
                "policy needs budget >= 1, horizon >= 1, exploration >= 0".into(),
            ));
        }
        self.rollout_fit.validate()
    }

    /// Questions left including the current one: `T − t + 1`.
    pub fn remaining(&self, round: usize) -> usize {
        (self.horizon + 1).saturating_sub(round).max(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuestionTreeNode {
    pub question: Option<Pair>,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub untried: Vec<Pair>,
    pub visit_count: u64,
    pub total_reward: f64,
    pub depth: usize,
}

/// Arena-backed search tree; index 0 is the root.
#[derive(Debug, Clone)]
pub struct QuestionTree {
    nodes: Vec<QuestionTreeNode>,
    root_state: PreferenceSet,
    n: usize,
    max_depth: usize,
}

impl QuestionTree {
    pub fn new(root_state: PreferenceSet, n: usize, max_depth: usize) -> Self {
        let root = QuestionTreeNode {
            question: None,
            parent: None,
            children: Vec::new(),
            untried: candidate_pairs(n, &root_state),
            visit_count: 0,
            total_reward: 0.0,
            depth: 0,
        };
        QuestionTree {
            nodes: vec![root],
            root_state,
            n,
            max_depth,
        }
    }

    pub fn node(&self, id: usize) -> &QuestionTreeNode {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root_state(&self) -> &PreferenceSet {
        &self.root_state
    }

    /// Questions on the path from the root to `id`, root first.
    pub fn path_questions(&self, id: usize) -> Vec<Pair> {
        let mut out = Vec::with_capacity(self.nodes[id].depth);
        let mut cur = Some(id);
        while let Some(c) = cur {
            if let Some(q) = self.nodes[c].question {
                out.push(q);
            }
            cur = self.nodes[c].parent;
        }
        out.reverse();
        out
    }

    pub fn is_terminal(&self, id: usize) -> bool {
        let node = &self.nodes[id];
        node.depth >= self.max_depth || (node.untried.is_empty() && node.children.is_empty())
    }

    /// Adds a child for a random untried question of `id`.
    pub fn expand<R: Rng + ?Sized>(&mut self, id: usize, rng: &mut R) -> usize {
        let k = rng.random_range(0..self.nodes[id].untried.len());
        let question = self.nodes[id].untried.swap_remove(k);
        let mut asked = self.path_questions(id);
        asked.push(question);
        let untried = candidate_pairs(self.n, &self.root_state)
            .into_iter()
            .filter(|p| !asked.contains(p))
            .collect();
        let child = QuestionTreeNode {
            question: Some(question),
            parent: Some(id),
            children: Vec::new(),
            untried,
            visit_count: 0,
            total_reward: 0.0,
            depth: self.nodes[id].depth + 1,
        };
        self.nodes.push(child);
        let cid = self.nodes.len() - 1;
        self.nodes[id].children.push(cid);
        cid
    }

    /// Child maximizing `V/N + 2c·√(2 ln N_root / N_child)`; unvisited
    /// children win outright when `c > 0`; ties go to the earlier child.
    pub fn best_child(&self, id: usize, c: f64) -> Option<usize> {
        let ln_root = (self.nodes[0].visit_count.max(1) as f64).ln();
        let mut best: Option<(usize, f64)> = None;
        for &ch in &self.nodes[id].children {
            let node = &self.nodes[ch];
            let score = if node.visit_count == 0 {
                if c > 0.0 {
                    f64::INFINITY
                } else {
                    f64::NEG_INFINITY
                }
            } else {
                ucb(node.total_reward, node.visit_count, ln_root, c)
            };
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((ch, score));
            }
        }
        best.map(|(ch, _)| ch)
    }

    /// Adds one visit and `delta` to `id` and all its ancestors.
    pub fn backpropagate(&mut self, id: usize, delta: f64) {
        let mut cur = Some(id);
        while let Some(c) = cur {
            self.nodes[c].visit_count += 1;
            self.nodes[c].total_reward += delta;
            cur = self.nodes[c].parent;
        }
    }

    /// Selection and expansion: descend by UCB until a node with untried
    /// questions (expanded) or a terminal node.
    pub fn select_leaf<R: Rng + ?Sized>(&mut self, c: f64, rng: &mut R) -> usize {
        let mut id = 0;
        loop {
            if self.nodes[id].depth >= self.max_depth {
                return id;
            }
            if !self.nodes[id].untried.is_empty() {
                return self.expand(id, rng);
            }
            match self.best_child(id, c) {
                Some(ch) => id = ch,
                None => return id,
            }
        }
    }

    pub fn dump(&self, max_depth: usize) -> TreeDump {
        self.dump_node(0, max_depth)
    }

    fn dump_node(&self, id: usize, max_depth: usize) -> TreeDump {
        let node = &self.nodes[id];
        TreeDump {
            question: node.question,
            visit_count: node.visit_count,
            total_reward: node.total_reward,
            depth: node.depth,
            children: if node.depth < max_depth {
                node.children.iter().map(|&c| self.dump_node(c, max_depth)).collect()
            } else {
                Vec::new()
            },
        }
    }
}

pub fn ucb(total_reward: f64, visits: u64, ln_root_visits: f64, c: f64) -> f64 {
    total_reward / visits as f64 + 2.0 * c * (2.0 * ln_root_visits / visits as f64).sqrt()
}

/// JSON view of the search tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeDump {
    pub question: Option<Pair>,
    pub visit_count: u64,
    pub total_reward: f64,
    pub depth: usize,
    pub children: Vec<TreeDump>,
}

/// Root posterior quantities shared by every rollout.
#[derive(Debug, Clone)]
pub struct RootInfo {
    pub theta: DirichletParams,
    pub counts: PairwiseCounts,
    /// Variance of a rollout-grade refit of the root state.
    pub variance: f64,
}

impl RootInfo {
    pub fn new(
        ctx: &InferenceContext,
        q: &PreferenceSet,
        theta: &DirichletParams,
        rollout: &OptimizerConfig,
        seed: u64,
    ) -> Result<Self> {
        let counts = ctx.counts(theta, derive_seed(seed, &[0]))?;
        let cfg = rollout.with_seed(derive_seed(seed, &[1]));
        let fit =
            crate::inference::fit_posterior(&ctx.evidence(q)?, &ctx.alpha, &cfg, ctx.settings.estimator, Some(theta))?;
        Ok(RootInfo {
            theta: theta.clone(),
            counts,
            variance: posterior_variance(&fit.theta),
        })
    }
}

/// Samples an answer to `p` from the root predictive probabilities.
pub fn sample_answer<R: Rng + ?Sized>(counts: &PairwiseCounts, p: Pair, rng: &mut R) -> PreferenceStatement {
    let (a, b) = if rng.random::<f64>() < counts.pwi(p.first, p.second) {
        (p.first, p.second)
    } else {
        (p.second, p.first)
    };
    PreferenceStatement { preferred: a, other: b }
}

/// Normalized variance reduction, clamped to `[0, 1]`.
pub fn normalized_reduction(var_root: f64, var_final: f64) -> f64 {
    if var_root <= 0.0 {
        return 0.0;
    }
    ((var_root - var_final) / var_root).clamp(0.0, 1.0)
}

/// One rollout from `leaf`: draws, in order, the completion questions, the
/// answers for every path question, and the refit seed from `rng`.
pub fn simulate<R: Rng + ?Sized>(
    tree: &QuestionTree,
    leaf: usize,
    ctx: &InferenceContext,
    root: &RootInfo,
    rollout: &OptimizerConfig,
    rng: &mut R,
) -> Result<f64> {
    let mut path = tree.path_questions(leaf);
    let mut pool: Vec<Pair> = candidate_pairs(tree.n, &tree.root_state)
        .into_iter()
        .filter(|p| !path.contains(p))
        .collect();
    pool.shuffle(rng);
    let extra = tree.max_depth.saturating_sub(path.len()).min(pool.len());
    path.extend_from_slice(&pool[..extra]);
    if path.is_empty() {
        return Ok(0.0);
    }
    let mut q = tree.root_state.clone();
    for &p in &path {
        q.push(sample_answer(&root.counts, p, rng))?;
    }
    let cfg = rollout.with_seed(rng.random());
    let fit = crate::inference::fit_posterior(
        &ctx.evidence(&q)?,
        &ctx.alpha,
        &cfg,
        ctx.settings.estimator,
        Some(&root.theta),
    )?;
    Ok(normalized_reduction(root.variance, posterior_variance(&fit.theta)))
}

#[derive(Debug, Clone)]
pub struct Selection {
    pub question: Pair,
    pub tree: QuestionTree,
}

/// Runs `budget` UCT iterations from the state `q` at round `t` and returns
/// the child with the highest mean reward.
pub fn select_question(
    ctx: &InferenceContext,
    q: &PreferenceSet,
    theta: &DirichletParams,
    config: &PolicyConfig,
    round: usize,
) -> Result<Selection> {
    config.validate()?;
    let n = ctx.n_alternatives();
    let candidates = candidate_pairs(n, q);
    if candidates.is_empty() {
        return Err(Error::Saturated);
    }
    let mut tree = QuestionTree::new(q.clone(), n, config.remaining(round));
    if candidates.len() == 1 {
        return Ok(Selection {
            question: candidates[0],
            tree,
        });
    }
    let root = RootInfo::new(ctx, q, theta, &config.rollout_fit, config.rng_seed)?;
    let mut rng = EngineRng::seed_from_u64(derive_seed(config.rng_seed, &[2]));
    for _ in 0..config.budget {
        let leaf = tree.select_leaf(config.exploration, &mut rng);
        let delta = simulate(&tree, leaf, ctx, &root, &config.rollout_fit, &mut rng)?;
        tree.backpropagate(leaf, delta);
    }
    let best = tree.best_child(0, 0.0).expect("budget >= 1 expands a root child");
    Ok(Selection {
        question: tree.node(best).question.expect("non-root node"),
        tree,
    })
}

/// Expected one-step variance reduction of asking `p` at state `q`, with
/// answer probabilities from `counts` and rollout-grade refits of both
/// answers warm-started from `theta`.
pub fn question_value(
    ctx: &InferenceContext,
    q: &PreferenceSet,
    theta: &DirichletParams,
    counts: &PairwiseCounts,
    p: Pair,
    seed: u64,
) -> Result<f64> {
    let var_now = posterior_variance(theta);
    let mut value = 0.0;
    for (a, b) in [(p.first, p.second), (p.second, p.first)] {
        let weight = counts.pwi(a, b);
        let q2 = q.with(PreferenceStatement::new(a, b)?)?;
        let fit = ctx.fit_rollout(&q2, derive_seed(seed, &[a as u64, b as u64]), Some(theta))?;
        value += weight * (var_now - posterior_variance(&fit.theta));
    }
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;
    use approx::assert_abs_diff_eq;

    #[test]
    fn ucb_example() {
        let v = ucb(10.0, 4, 16f64.ln(), std::f64::consts::FRAC_1_SQRT_2);
        assert_abs_diff_eq!(v, 2.5 + 2f64.sqrt() * (16f64.ln() / 2.0).sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(v, 4.1651, epsilon = 1e-4);
    }

    fn tree_with_children(stats: &[(f64, u64)]) -> QuestionTree {
        let mut t = QuestionTree::new(PreferenceSet::new(), 4, 3);
        let mut rng = rng_from(0, &[]);
        for &(v, n) in stats {
            let c = t.expand(0, &mut rng);
            t.nodes[c].total_reward = v;
            t.nodes[c].visit_count = n;
            t.nodes[0].visit_count += n;
        }
        t
    }

    #[test]
    fn best_child_rules() {
        let t = tree_with_children(&[(1.0, 4), (3.0, 4), (3.0, 4)]);
        // equal stats: the earlier child wins
        assert_eq!(t.best_child(0, 0.0), Some(t.node(0).children[1]));
        let t = tree_with_children(&[(3.0, 4), (0.0, 0)]);
        assert_eq!(t.best_child(0, 0.5), Some(t.node(0).children[1]));
        assert_eq!(t.best_child(0, 0.0), Some(t.node(0).children[0]));
    }

    #[test]
    fn backpropagation_updates_path() {
        let mut t = QuestionTree::new(PreferenceSet::new(), 4, 3);
        let mut rng = rng_from(1, &[]);
        let a = t.expand(0, &mut rng);
        let b = t.expand(a, &mut rng);
        t.backpropagate(b, 0.5);
        for id in [0, a, b] {
            assert_eq!(t.node(id).visit_count, 1);
            assert_eq!(t.node(id).total_reward, 0.5);
        }
        for _ in 0..5 {
            t.backpropagate(b, 1.0);
        }
        assert_eq!(t.node(b).total_reward / t.node(b).visit_count as f64, 5.5 / 6.0);
    }

    #[test]
    fn expansion_never_repeats_path_questions() {
        let q = PreferenceSet::from_pairs(&[(0, 1)]).unwrap();
        let mut t = QuestionTree::new(q.clone(), 4, 4);
        let mut rng = rng_from(2, &[]);
        for _ in 0..40 {
            let leaf = t.select_leaf(0.7, &mut rng);
            t.backpropagate(leaf, rng.random());
        }
        for id in 0..t.len() {
            let path = t.path_questions(id);
            assert!(t.node(id).depth <= 4);
            assert!(path.iter().all(|p| !q.contains_pair(*p)));
            let mut dedup = path.clone();
            dedup.sort();
            dedup.dedup();
            assert_eq!(dedup.len(), path.len());
            assert!(t
                .node(id)
                .untried
                .iter()
                .all(|p| !path.contains(p) && !q.contains_pair(*p)));
        }
    }

    #[test]
    fn reward_normalization() {
        assert_eq!(normalized_reduction(0.2, 0.1), 0.5);
        assert_eq!(normalized_reduction(0.2, 0.3), 0.0);
        assert_eq!(normalized_reduction(0.2, 0.2), 0.0);
    }

    #[test]
    fn remaining_rounds() {
        let c = PolicyConfig {
            horizon: 8,
            ..Default::default()
        };
        assert_eq!(c.remaining(1), 8);
        assert_eq!(c.remaining(8), 1);
        assert_eq!(PolicyConfig::default().budget, 300);
    }
}
