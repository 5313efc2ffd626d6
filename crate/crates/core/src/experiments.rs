//! Batch studies: preference inference accuracy, questioning policies, and
//! gradient-estimator variance. Cells run on a worker pool with per-cell
//! RNG streams; results are collected in plan order so outputs are
//! byte-identical for a given plan and seed.

use std::path::Path;

use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{sor_poi, HitAndRunConfig, DEFAULT_MARGIN};
use crate::error::{Error, Result};
use crate::inference::{
    fit_posterior, rt_gradient, score_gradient, DirichletParams, Estimator, Evidence, InferenceContext,
    InferenceSettings, OptimizerConfig, PairwiseCounts, PhiVector,
};
use crate::mcts::PolicyConfig;
use crate::metrics::{asp, f_pwi, f_rai, f_var, poi_from_counts, pwi_from_counts, rai_from_values};
use crate::model::{Design, PreferenceSet};
use crate::policy::{choose_question, Policy};
use crate::rng::{derive_seed, hash_str, EngineRng};
use crate::simulation::{
    gen_comparisons, gen_performance_table, gen_true_model, inject_bias, simulated_answer, true_values, AnswerMode,
    ShapeSetting,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InferenceMethod {
    Rt,
    NoRt,
    Sor,
}

impl InferenceMethod {
    pub fn name(self) -> &'static str {
        match self {
            InferenceMethod::Rt => "rt",
            InferenceMethod::NoRt => "no_rt",
            InferenceMethod::Sor => "sor",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferencePlan {
    pub shapes: Vec<ShapeSetting>,
    pub comparisons: Vec<usize>,
    pub biases: Vec<f64>,
    pub methods: Vec<InferenceMethod>,
    pub repetitions: usize,
    pub n_alternatives: usize,
    pub n_criteria: usize,
    pub subintervals: usize,
    pub optimizer: OptimizerConfig,
    /// Posterior draws (variational) or hit-and-run draws (SOR) per fit.
    pub samples: usize,
    pub hit_and_run: HitAndRunConfig,
    pub margin: f64,
    pub base_seed: u64,
}

impl Default for InferencePlan {
    fn default() -> Self {
        InferencePlan {
            shapes: vec![ShapeSetting::Linear, ShapeSetting::Mixture],
            comparisons: vec![20, 40],
            biases: vec![0.0, 0.3],
            methods: vec![InferenceMethod::Rt, InferenceMethod::NoRt, InferenceMethod::Sor],
            repetitions: 5,
            n_alternatives: 14,
            n_criteria: 5,
            subintervals: 2,
            optimizer: OptimizerConfig::default(),
            samples: 10_000,
            hit_and_run: HitAndRunConfig::default(),
            margin: DEFAULT_MARGIN,
            base_seed: 0,
        }
    }
}

impl InferencePlan {
    /// The complete factor grid with 20 repetitions per cell.
    pub fn full() -> Self {
        InferencePlan {
            shapes: vec![
                ShapeSetting::Linear,
                ShapeSetting::Concave,
                ShapeSetting::Convex,
                ShapeSetting::Mixture,
            ],
            comparisons: vec![20, 40, 60, 80],
            biases: vec![0.0, 0.1, 0.2, 0.3],
            repetitions: 20,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.repetitions == 0 || self.samples == 0 || self.methods.is_empty() {
            return Err(Error::InvalidInput(
                "plan needs repetitions, samples and methods".into(),
            ));
        }
        self.optimizer.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceRecord {
    pub cell: usize,
    pub shape: ShapeSetting,
    pub comparisons: usize,
    pub bias: f64,
    pub repetition: usize,
    pub method: InferenceMethod,
    pub seed: u64,
    pub asp: f64,
    pub error: String,
}

struct InferenceCell {
    index: usize,
    shape: ShapeSetting,
    comparisons: usize,
    bias: f64,
    repetition: usize,
    seed: u64,
}

fn inference_cells(plan: &InferencePlan) -> Vec<InferenceCell> {
    let mut cells = Vec::new();
    for (si, &shape) in plan.shapes.iter().enumerate() {
        for (ci, &comparisons) in plan.comparisons.iter().enumerate() {
            for (bi, &bias) in plan.biases.iter().enumerate() {
                for repetition in 0..plan.repetitions {
                    cells.push(InferenceCell {
                        index: cells.len(),
                        shape,
                        comparisons,
                        bias,
                        repetition,
                        seed: derive_seed(plan.base_seed, &[1, si as u64, ci as u64, bi as u64, repetition as u64]),
                    });
                }
            }
        }
    }
    cells
}

fn run_inference_cell(plan: &InferencePlan, cell: &InferenceCell) -> Vec<InferenceRecord> {
    let record = |method, seed, result: Result<f64>| {
        let (asp, error) = match result {
            Ok(v) => (v, String::new()),
            Err(e) => (f64::NAN, e.to_string()),
        };
        InferenceRecord {
            cell: cell.index,
            shape: cell.shape,
            comparisons: cell.comparisons,
            bias: cell.bias,
            repetition: cell.repetition,
            method,
            seed,
            asp,
            error,
        }
    };
    let setup = (|| -> Result<_> {
        let mut rng = EngineRng::seed_from_u64(cell.seed);
        let table = gen_performance_table(plan.n_alternatives, plan.n_criteria, plan.subintervals, &mut rng)?;
        let model = gen_true_model(plan.n_criteria, cell.shape, &mut rng)?;
        let q = gen_comparisons(&model, &table, cell.comparisons, &mut rng)?;
        let q = inject_bias(&q, &model, &table, cell.bias)?;
        Ok((Design::new(&table), true_values(&model, &table)?, q))
    })();
    let (design, truth, q) = match setup {
        Ok(s) => s,
        Err(e) => {
            let msg = e.to_string();
            return plan
                .methods
                .iter()
                .map(|&m| record(m, cell.seed, Err(Error::InvalidInput(msg.clone()))))
                .collect();
        }
    };
    plan.methods
        .iter()
        .enumerate()
        .map(|(k, &method)| {
            let seed = derive_seed(cell.seed, &[k as u64 + 1]);
            let result = (|| -> Result<f64> {
                let mut rng = EngineRng::seed_from_u64(derive_seed(seed, &[0]));
                let poi = match method {
                    InferenceMethod::Sor => {
                        sor_poi(&q, &design, plan.samples, &mut rng, plan.margin, plan.hit_and_run)?
                    }
                    InferenceMethod::Rt | InferenceMethod::NoRt => {
                        let estimator = if method == InferenceMethod::Rt {
                            Estimator::Rt
                        } else {
                            Estimator::Score
                        };
                        let alpha = DirichletParams::uniform(design.dimension());
                        let cfg = plan.optimizer.with_seed(seed);
                        let fit = fit_posterior(&Evidence::new(&design, &q)?, &alpha, &cfg, estimator, None)?;
                        let samples = crate::inference::sample_posterior(&fit.theta, plan.samples, &mut rng)?;
                        poi_from_counts(&PairwiseCounts::from_samples(&design, &samples))
                    }
                };
                asp(&poi, &truth)
            })();
            record(method, seed, result)
        })
        .collect()
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot start worker pool: {e}")))
}

pub fn run_inference_study(plan: &InferencePlan, workers: usize) -> Result<Vec<InferenceRecord>> {
    plan.validate()?;
    let cells = inference_cells(plan);
    let per_cell: Vec<Vec<InferenceRecord>> =
        pool(workers)?.install(|| cells.par_iter().map(|c| run_inference_cell(plan, c)).collect());
    Ok(per_cell.into_iter().flatten().collect())
}

/// Problem sizes for the policy study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemSize {
    pub n_alternatives: usize,
    pub n_criteria: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyPlan {
    pub sizes: Vec<ProblemSize>,
    pub instances: usize,
    pub checkpoints: Vec<usize>,
    pub policies: Vec<Policy>,
    pub subintervals: usize,
    pub shape: ShapeSetting,
    pub mcts: PolicyConfig,
    /// Fit used after every answered question.
    pub round_fit: OptimizerConfig,
    pub predictive_samples: usize,
    pub base_seed: u64,
}

impl Default for PolicyPlan {
    fn default() -> Self {
        PolicyPlan {
            sizes: vec![ProblemSize {
                n_alternatives: 6,
                n_criteria: 3,
            }],
            instances: 20,
            checkpoints: vec![2, 4, 6, 8],
            policies: Policy::ALL.to_vec(),
            subintervals: 2,
            shape: ShapeSetting::Mixture,
            mcts: PolicyConfig {
                budget: 100,
                horizon: 8,
                ..Default::default()
            },
            round_fit: OptimizerConfig::rollout(),
            predictive_samples: 10_000,
            base_seed: 0,
        }
    }
}

impl PolicyPlan {
    /// Both size grids (6–10 alternatives with 3 criteria, 2–5 criteria
    /// with 8 alternatives), budget 300 and full-grade round fits.
    pub fn full() -> Self {
        let mut sizes: Vec<ProblemSize> = (6..=10)
            .map(|n| ProblemSize {
                n_alternatives: n,
                n_criteria: 3,
            })
            .collect();
        sizes.extend((2..=5).filter(|&m| m != 3).map(|m| ProblemSize {
            n_alternatives: 8,
            n_criteria: m,
        }));
        PolicyPlan {
            sizes,
            mcts: PolicyConfig {
                budget: 300,
                horizon: 8,
                ..Default::default()
            },
            round_fit: OptimizerConfig::default(),
            ..Default::default()
        }
    }

    pub fn rounds(&self) -> usize {
        self.checkpoints.iter().copied().max().unwrap_or(0)
    }

    fn validate(&self) -> Result<()> {
        if self.instances == 0 || self.checkpoints.is_empty() || self.policies.is_empty() {
            return Err(Error::InvalidInput(
                "plan needs instances, checkpoints and policies".into(),
            ));
        }
        self.round_fit.validate()?;
        self.mcts.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRecord {
    pub instance_id: usize,
    pub n_alternatives: usize,
    pub n_criteria: usize,
    pub policy: Policy,
    pub round: usize,
    pub seed: u64,
    pub f_var: f64,
    pub f_pwi: f64,
    pub f_rai: f64,
    pub error: String,
}

fn run_policy_instance(plan: &PolicyPlan, size: ProblemSize, instance_id: usize, policy: Policy) -> Vec<PolicyRecord> {
    let inst_seed = derive_seed(
        plan.base_seed,
        &[
            2,
            size.n_alternatives as u64,
            size.n_criteria as u64,
            instance_id as u64,
        ],
    );
    let run_seed = derive_seed(inst_seed, &[hash_str(policy.name())]);
    let mut out = Vec::new();
    let result = (|| -> Result<()> {
        let mut rng = EngineRng::seed_from_u64(inst_seed);
        let table = gen_performance_table(size.n_alternatives, size.n_criteria, plan.subintervals, &mut rng)?;
        let model = gen_true_model(size.n_criteria, plan.shape, &mut rng)?;
        let settings = InferenceSettings {
            full: plan.round_fit.clone(),
            rollout: plan.mcts.rollout_fit.clone(),
            estimator: Estimator::Rt,
            predictive_samples: plan.predictive_samples,
        };
        let ctx = InferenceContext::new(&table, settings);
        let mcts = PolicyConfig {
            horizon: plan.rounds(),
            ..plan.mcts.clone()
        };
        let mut q = PreferenceSet::new();
        let mut theta = ctx.alpha.clone();
        for round in 1..=plan.rounds() {
            let seed = derive_seed(run_seed, &[round as u64]);
            let pair = choose_question(policy, &ctx, &q, &theta, round, &mcts, seed)?;
            q.push(simulated_answer(
                &model,
                &table,
                pair,
                &mut rng,
                AnswerMode::Deterministic,
            )?)?;
            theta = ctx.fit(&q, derive_seed(seed, &[7]), Some(&theta))?.theta;
            if plan.checkpoints.contains(&round) {
                let samples = ctx.samples(&theta, derive_seed(seed, &[8]))?;
                let values = samples.values(&ctx.design);
                let counts = PairwiseCounts::from_values(&values, size.n_alternatives);
                out.push(PolicyRecord {
                    instance_id,
                    n_alternatives: size.n_alternatives,
                    n_criteria: size.n_criteria,
                    policy,
                    round,
                    seed: run_seed,
                    f_var: f_var(&theta),
                    f_pwi: f_pwi(&pwi_from_counts(&counts)),
                    f_rai: f_rai(&rai_from_values(&values, size.n_alternatives)),
                    error: String::new(),
                });
            }
        }
        Ok(())
    })();
    if let Err(e) = result {
        log::warn!("instance {instance_id} policy {policy}: {e}");
        let done: Vec<usize> = out.iter().map(|r| r.round).collect();
        for &round in plan.checkpoints.iter().filter(|r| !done.contains(r)) {
            out.push(PolicyRecord {
                instance_id,
                n_alternatives: size.n_alternatives,
                n_criteria: size.n_criteria,
                policy,
                round,
                seed: run_seed,
                f_var: f64::NAN,
                f_pwi: f64::NAN,
                f_rai: f64::NAN,
                error: e.to_string(),
            });
        }
        out.sort_by_key(|r| r.round);
    }
    out
}

pub fn run_policy_study(plan: &PolicyPlan, workers: usize) -> Result<Vec<PolicyRecord>> {
    plan.validate()?;
    let mut jobs = Vec::new();
    for &size in &plan.sizes {
        for instance in 0..plan.instances {
            for &policy in &plan.policies {
                jobs.push((size, instance, policy));
            }
        }
    }
    let per_job: Vec<Vec<PolicyRecord>> = pool(workers)?.install(|| {
        jobs.par_iter()
            .map(|&(size, instance, policy)| run_policy_instance(plan, size, instance, policy))
            .collect()
    });
    Ok(per_job.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GradientVariancePlan {
    pub configurations: usize,
    pub n_alternatives: usize,
    pub n_criteria: usize,
    pub subintervals: usize,
    pub statements: usize,
    pub grad_samples: usize,
    pub repeats: usize,
    /// Variational parameters are drawn uniformly from this range.
    pub theta_range: (f64, f64),
    pub base_seed: u64,
}

impl Default for GradientVariancePlan {
    fn default() -> Self {
        GradientVariancePlan {
            configurations: 10,
            n_alternatives: 8,
            n_criteria: 5,
            subintervals: 2,
            statements: 10,
            grad_samples: 1000,
            repeats: 100,
            theta_range: (0.5, 5.0),
            base_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientVarianceRecord {
    pub configuration: usize,
    pub coordinate: usize,
    pub seed: u64,
    pub score_variance: f64,
    pub rt_variance: f64,
    pub ratio: f64,
}

fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Per-coordinate variance of `repeats` estimates from each estimator at
/// the same `(Q, θ = φ²)`.
pub fn gradient_variance(
    evidence: &Evidence,
    alpha: &DirichletParams,
    phi: &PhiVector,
    grad_samples: usize,
    repeats: usize,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if repeats < 2 {
        return Err(Error::InvalidInput("need at least two repeats".into()));
    }
    let theta = phi.theta();
    let mut rng = EngineRng::seed_from_u64(seed);
    let score: Vec<Vec<f64>> = (0..repeats)
        .map(|_| score_gradient(&theta, evidence, alpha, grad_samples, &mut rng))
        .collect::<Result<_>>()?;
    let rt: Vec<Vec<f64>> = (0..repeats)
        .map(|_| rt_gradient(phi, evidence, alpha, grad_samples, &mut rng))
        .collect::<Result<_>>()?;
    let column = |v: &[Vec<f64>], k: usize| v.iter().map(|g| g[k]).collect::<Vec<f64>>();
    Ok((
        (0..phi.dim()).map(|k| sample_variance(&column(&score, k))).collect(),
        (0..phi.dim()).map(|k| sample_variance(&column(&rt, k))).collect(),
    ))
}

pub fn run_gradient_variance_study(plan: &GradientVariancePlan, workers: usize) -> Result<Vec<GradientVarianceRecord>> {
    if plan.configurations == 0 {
        return Err(Error::InvalidInput("need at least one configuration".into()));
    }
    let per_config: Vec<Result<Vec<GradientVarianceRecord>>> = pool(workers)?.install(|| {
        (0..plan.configurations)
            .into_par_iter()
            .map(|c| {
                let seed = derive_seed(plan.base_seed, &[3, c as u64]);
                let mut rng = EngineRng::seed_from_u64(seed);
                let table = gen_performance_table(plan.n_alternatives, plan.n_criteria, plan.subintervals, &mut rng)?;
                let model = gen_true_model(plan.n_criteria, ShapeSetting::Linear, &mut rng)?;
                let q = gen_comparisons(&model, &table, plan.statements, &mut rng)?;
                let design = Design::new(&table);
                let (lo, hi) = plan.theta_range;
                let phi: Vec<f64> = (0..design.dimension())
                    .map(|_| rand::Rng::random_range(&mut rng, lo..=hi).sqrt())
                    .collect();
                let (score, rt) = gradient_variance(
                    &Evidence::new(&design, &q)?,
                    &DirichletParams::uniform(design.dimension()),
                    &PhiVector::new(phi)?,
                    plan.grad_samples,
                    plan.repeats,
                    derive_seed(seed, &[1]),
                )?;
                Ok(score
                    .iter()
                    .zip(&rt)
                    .enumerate()
                    .map(|(k, (&s, &r))| GradientVarianceRecord {
                        configuration: c,
                        coordinate: k,
                        seed,
                        score_variance: s,
                        rt_variance: r,
                        ratio: r / s,
                    })
                    .collect())
            })
            .collect()
    });
    Ok(per_config
        .into_iter()
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect())
}

/// Median of the per-coordinate RT/score variance ratios.
pub fn median_ratio(records: &[GradientVarianceRecord]) -> f64 {
    let mut r: Vec<f64> = records.iter().map(|x| x.ratio).filter(|x| x.is_finite()).collect();
    if r.is_empty() {
        return f64::NAN;
    }
    r.sort_by(f64::total_cmp);
    let m = r.len() / 2;
    if r.len() % 2 == 0 {
        (r[m - 1] + r[m]) / 2.0
    } else {
        r[m]
    }
}

pub fn write_csv<T: Serialize>(records: &[T], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_csv_string<T: Serialize>(records: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Audit record written next to every study output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest<P> {
    pub study: String,
    pub plan: P,
    pub base_seed: u64,
    pub workers: usize,
    pub records: usize,
    pub errors: usize,
    pub engine_version: String,
}

impl<P: Serialize> RunManifest<P> {
    pub fn new(study: &str, plan: P, base_seed: u64, workers: usize, records: usize, errors: usize) -> Self {
        RunManifest {
            study: study.into(),
            plan,
            base_seed,
            workers,
            records,
            errors,
            engine_version: env!("CARGO_PKG_VERSION").into(),
        }
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}
