//! Live elicitation sessions.
//!
//! [`Session`] is a synchronous state machine. Heavy work (posterior fits
//! and question selection) is split out as a [`RoundJob`] so callers can
//! run it off the request path and apply the [`RoundOutcome`] afterwards.
//! Every random choice is seeded from the session seed and the round, so
//! replaying the event log reproduces the session exactly.

mod store;

pub use store::{now_ms, CreateError, SessionStore, StoreConfig};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{
    DirichletParams, Estimator, InferenceContext, InferenceSettings, OptimizerConfig, PairwiseCounts,
};
use crate::mcts::PolicyConfig;
use crate::metrics::{f_pwi, f_rai, f_var, pwi_from_counts, rai_from_values};
use crate::model::{all_pairs, Pair, PerformanceTable, PreferenceSet, PreferenceStatement};
use crate::policy::{choose_question, Policy};
use crate::rng::{derive_seed, hash_str};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub policy: Policy,
    /// Tree-search simulations per question.
    pub budget: usize,
    pub exploration: f64,
    /// Fit run after each answer.
    pub fit: OptimizerConfig,
    /// Fit run inside tree-search simulations and lookahead heuristics.
    pub rollout_fit: OptimizerConfig,
    pub estimator: Estimator,
    pub predictive_samples: usize,
    /// Overrides the seed otherwise derived from the server seed and the
    /// session id.
    pub seed: Option<u64>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        let p = PolicyConfig::default();
        SessionConfig {
            policy: Policy::Mcts,
            budget: p.budget,
            exploration: p.exploration,
            fit: OptimizerConfig::default(),
            rollout_fit: p.rollout_fit,
            estimator: Estimator::Rt,
            predictive_samples: 10_000,
            seed: None,
        }
    }
}

impl SessionConfig {
    /// Field-level validation messages, empty when valid.
    pub fn field_errors(&self) -> Vec<FieldError> {
        let mut out = Vec::new();
        if self.budget == 0 {
            out.push(FieldError::new("config.budget", "must be at least 1"));
        }
        if !(self.exploration >= 0.0 && self.exploration.is_finite()) {
            out.push(FieldError::new(
                "config.exploration",
                "must be a finite non-negative number",
            ));
        }
        if let Err(e) = self.fit.validate() {
            out.push(FieldError::new("config.fit", e.to_string()));
        }
        if let Err(e) = self.rollout_fit.validate() {
            out.push(FieldError::new("config.rollout_fit", e.to_string()));
        }
        if self.predictive_samples == 0 {
            out.push(FieldError::new("config.predictive_samples", "must be at least 1"));
        }
        out
    }

    fn settings(&self) -> InferenceSettings {
        InferenceSettings {
            full: self.fit.clone(),
            rollout: self.rollout_fit.clone(),
            estimator: self.estimator,
            predictive_samples: self.predictive_samples,
        }
    }

    fn policy_config(&self, horizon: usize) -> PolicyConfig {
        PolicyConfig {
            budget: self.budget,
            exploration: self.exploration,
            horizon,
            rollout_fit: self.rollout_fit.clone(),
            rng_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    pub fn new(field: &str, message: impl Into<String>) -> Self {
        FieldError {
            field: field.into(),
            message: message.into(),
        }
    }
}

/// Checks a create request, collecting every problem.
pub fn validate_request(table: &PerformanceTable, horizon: usize, config: &SessionConfig) -> Vec<FieldError> {
    let mut out = Vec::new();
    let max = all_pairs(table.n_alternatives()).len();
    if horizon == 0 {
        out.push(FieldError::new("horizon", "must be at least 1"));
    } else if horizon > max {
        out.push(FieldError::new(
            "horizon",
            format!(
                "at most {max} distinct pairs exist for {} alternatives",
                table.n_alternatives()
            ),
        ));
    }
    out.extend(config.field_errors());
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    AwaitingAnswer,
    Fitting,
    Selecting,
    Done,
}

impl SessionStatus {
    pub fn name(self) -> &'static str {
        match self {
            SessionStatus::AwaitingAnswer => "awaiting_answer",
            SessionStatus::Fitting => "fitting",
            SessionStatus::Selecting => "selecting",
            SessionStatus::Done => "done",
        }
    }
}

/// Uncertainty summary of one posterior, from its cached draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummaryView {
    pub pwi: Vec<Vec<f64>>,
    pub rai: Vec<Vec<f64>>,
    pub f_var: f64,
    pub f_pwi: f64,
    pub f_rai: f64,
}

impl PosteriorSummaryView {
    pub fn compute(ctx: &InferenceContext, theta: &DirichletParams, seed: u64) -> Result<Self> {
        let n = ctx.n_alternatives();
        let values = ctx.samples(theta, seed)?.values(&ctx.design);
        let pwi = pwi_from_counts(&PairwiseCounts::from_values(&values, n));
        let rai = rai_from_values(&values, n);
        Ok(PosteriorSummaryView {
            f_var: f_var(theta),
            f_pwi: f_pwi(&pwi),
            f_rai: f_rai(&rai),
            pwi: pwi.rows(),
            rai: rai.rows(),
        })
    }
}

/// Uncertainty metrics after `answered` answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricPoint {
    pub answered: usize,
    pub f_var: f64,
    pub f_pwi: f64,
    pub f_rai: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerKey {
    pub key: String,
    pub round: usize,
    pub statement: PreferenceStatement,
}

/// Seeds used in one round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundSeeds {
    pub round: usize,
    pub fit: u64,
    pub selection: u64,
    pub summary: u64,
}

impl RoundSeeds {
    pub fn new(session_seed: u64, round: usize) -> Self {
        let base = derive_seed(session_seed, &[round as u64]);
        RoundSeeds {
            round,
            fit: derive_seed(base, &[0]),
            selection: derive_seed(base, &[1]),
            summary: derive_seed(base, &[2]),
        }
    }
}

/// Appended to a session's log; replaying the log rebuilds the session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SessionEvent {
    Created {
        id: String,
        table: PerformanceTable,
        horizon: usize,
        config: SessionConfig,
        seed: u64,
        at: u64,
    },
    Question {
        round: usize,
        pair: Pair,
        at: u64,
    },
    Answer {
        round: usize,
        preferred: usize,
        other: usize,
        idempotency_key: Option<String>,
        at: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnswerOutcome {
    Accepted,
    /// The idempotency key was already used for this same answer.
    Replayed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub table: PerformanceTable,
    pub horizon: usize,
    /// Current round `t`; `horizon + 1` once every answer is in.
    pub round: usize,
    pub history: PreferenceSet,
    pub posterior: DirichletParams,
    pub pending_question: Option<Pair>,
    pub status: SessionStatus,
    pub config: SessionConfig,
    pub seed: u64,
    pub elbo_trace: Vec<f64>,
    pub summary: Option<PosteriorSummaryView>,
    pub metrics: Vec<MetricPoint>,
    pub answer_keys: Vec<AnswerKey>,
    pub last_error: Option<String>,
    /// Unix milliseconds.
    pub created_at: u64,
    pub updated_at: u64,
}

/// Everything needed to finish the current round without the session.
#[derive(Debug, Clone)]
pub struct RoundJob {
    pub round: usize,
    pub answered: usize,
    pub fit: bool,
    table: PerformanceTable,
    horizon: usize,
    history: PreferenceSet,
    warm: DirichletParams,
    config: SessionConfig,
    seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    pub round: usize,
    pub answered: usize,
    pub posterior: DirichletParams,
    pub elbo_trace: Option<Vec<f64>>,
    pub summary: PosteriorSummaryView,
    pub question: Option<Pair>,
}

impl RoundJob {
    /// Refits if an answer arrived, summarizes, and picks the next question
    /// unless the horizon is reached.
    pub fn run(&self) -> Result<RoundOutcome> {
        let ctx = InferenceContext::new(&self.table, self.config.settings());
        let seeds = RoundSeeds::new(self.seed, self.round);
        let (posterior, elbo_trace) = if self.fit {
            let fit = ctx.fit(&self.history, seeds.fit, Some(&self.warm))?;
            (fit.theta, Some(fit.elbo_trace))
        } else {
            (self.warm.clone(), None)
        };
        let summary = PosteriorSummaryView::compute(&ctx, &posterior, seeds.summary)?;
        let question = if self.round > self.horizon {
            None
        } else {
            let cfg = self.config.policy_config(self.horizon);
            Some(choose_question(
                self.config.policy,
                &ctx,
                &self.history,
                &posterior,
                self.round,
                &cfg,
                seeds.selection,
            )?)
        };
        Ok(RoundOutcome {
            round: self.round,
            answered: self.history.len(),
            posterior,
            elbo_trace,
            summary,
            question,
        })
    }
}

pub fn session_seed(server_seed: u64, id: &str, explicit: Option<u64>) -> u64 {
    explicit.unwrap_or_else(|| derive_seed(server_seed, &[hash_str(id)]))
}

impl Session {
    /// A session at round 1 with the prior as posterior, waiting for its
    /// first question to be selected.
    pub fn new(
        id: String,
        table: PerformanceTable,
        horizon: usize,
        config: SessionConfig,
        seed: u64,
        now: u64,
    ) -> std::result::Result<Self, Vec<FieldError>> {
        let errors = validate_request(&table, horizon, &config);
        if !errors.is_empty() {
            return Err(errors);
        }
        let posterior = DirichletParams::uniform(table.dimension());
        Ok(Session {
            id,
            table,
            horizon,
            round: 1,
            history: PreferenceSet::new(),
            posterior,
            pending_question: None,
            status: SessionStatus::Selecting,
            config,
            seed,
            elbo_trace: Vec::new(),
            summary: None,
            metrics: Vec::new(),
            answer_keys: Vec::new(),
            last_error: None,
            created_at: now,
            updated_at: now,
        })
    }

    pub fn created_event(&self) -> SessionEvent {
        SessionEvent::Created {
            id: self.id.clone(),
            table: self.table.clone(),
            horizon: self.horizon,
            config: self.config.clone(),
            seed: self.seed,
            at: self.created_at,
        }
    }

    pub fn from_created(event: &SessionEvent) -> Result<Self> {
        match event {
            SessionEvent::Created {
                id,
                table,
                horizon,
                config,
                seed,
                at,
            } => Session::new(id.clone(), table.clone(), *horizon, config.clone(), *seed, *at).map_err(|errs| {
                Error::InvalidInput(
                    errs.iter()
                        .map(|e| format!("{}: {}", e.field, e.message))
                        .collect::<Vec<_>>()
                        .join("; "),
                )
            }),
            _ => Err(Error::InvalidInput("event log must start with a created event".into())),
        }
    }

    pub fn n_alternatives(&self) -> usize {
        self.table.n_alternatives()
    }

    pub fn answered(&self) -> usize {
        self.history.len()
    }

    /// Work still owed before the session can accept an answer.
    pub fn pending_job(&self) -> Option<RoundJob> {
        match self.status {
            SessionStatus::Fitting | SessionStatus::Selecting => Some(RoundJob {
                round: self.round,
                answered: self.history.len(),
                fit: self.status == SessionStatus::Fitting,
                table: self.table.clone(),
                horizon: self.horizon,
                history: self.history.clone(),
                warm: self.posterior.clone(),
                config: self.config.clone(),
                seed: self.seed,
            }),
            _ => None,
        }
    }

    /// Applies a finished job. Returns the question event to log, if any.
    pub fn apply(&mut self, outcome: RoundOutcome, now: u64) -> Result<Option<SessionEvent>> {
        if self.pending_job().is_none() || outcome.round != self.round || outcome.answered != self.history.len() {
            return Err(Error::Conflict("round outcome does not match the session state".into()));
        }
        self.posterior = outcome.posterior;
        if let Some(trace) = outcome.elbo_trace {
            self.elbo_trace = trace;
        }
        self.metrics.push(MetricPoint {
            answered: self.history.len(),
            f_var: outcome.summary.f_var,
            f_pwi: outcome.summary.f_pwi,
            f_rai: outcome.summary.f_rai,
        });
        self.summary = Some(outcome.summary);
        self.last_error = None;
        self.updated_at = now;
        match outcome.question {
            None => {
                self.status = SessionStatus::Done;
                self.pending_question = None;
                Ok(None)
            }
            Some(pair) => {
                if self.history.contains_pair(pair) {
                    return Err(Error::DuplicatePair(pair.first, pair.second));
                }
                self.status = SessionStatus::AwaitingAnswer;
                self.pending_question = Some(pair);
                Ok(Some(SessionEvent::Question {
                    round: self.round,
                    pair,
                    at: now,
                }))
            }
        }
    }

    /// Records a failed job so clients can see why the session is stuck.
    pub fn record_failure(&mut self, err: &Error, now: u64) {
        self.last_error = Some(err.to_string());
        self.updated_at = now;
    }

    /// Accepts the answer to the pending question. On success the session
    /// is `fitting` and [`Session::pending_job`] holds the refit.
    pub fn submit_answer(
        &mut self,
        statement: PreferenceStatement,
        idempotency_key: Option<&str>,
        now: u64,
    ) -> Result<AnswerOutcome> {
        let n = self.n_alternatives();
        if statement.preferred >= n || statement.other >= n {
            return Err(Error::InvalidInput(format!("alternatives must be below {n}")));
        }
        if let Some(key) = idempotency_key {
            if let Some(prev) = self.answer_keys.iter().find(|k| k.key == key) {
                return if prev.statement == statement {
                    Ok(AnswerOutcome::Replayed)
                } else {
                    Err(Error::Conflict(format!(
                        "idempotency key `{key}` was used for a different answer"
                    )))
                };
            }
        }
        if self.status != SessionStatus::AwaitingAnswer {
            return Err(Error::Conflict(format!("session is {}", self.status.name())));
        }
        let pending = self
            .pending_question
            .expect("awaiting an answer implies a pending question");
        if statement.pair() != pending {
            return Err(Error::Conflict(format!(
                "answer is for {} but the pending question is {}",
                statement.pair(),
                pending
            )));
        }
        self.history.push(statement)?;
        if let Some(key) = idempotency_key {
            self.answer_keys.push(AnswerKey {
                key: key.to_owned(),
                round: self.round,
                statement,
            });
        }
        self.round += 1;
        self.pending_question = None;
        self.status = SessionStatus::Fitting;
        self.updated_at = now;
        Ok(AnswerOutcome::Accepted)
    }

    pub fn answer_event(&self, statement: PreferenceStatement, key: Option<&str>, now: u64) -> SessionEvent {
        SessionEvent::Answer {
            round: self.round,
            preferred: statement.preferred,
            other: statement.other,
            idempotency_key: key.map(str::to_owned),
            at: now,
        }
    }

    /// Runs owed work inline.
    pub fn run_pending(&mut self, now: u64) -> Result<Option<SessionEvent>> {
        match self.pending_job() {
            Some(job) => {
                let outcome = job.run()?;
                self.apply(outcome, now)
            }
            None => Ok(None),
        }
    }

    /// Synchronous round trip: answer, refit, select.
    pub fn answer_blocking(&mut self, statement: PreferenceStatement, now: u64) -> Result<()> {
        self.submit_answer(statement, None, now)?;
        self.run_pending(now)?;
        Ok(())
    }

    /// Applies one logged event after `created`, recomputing any owed work
    /// from the stored seeds and checking it against the log.
    pub fn replay_event(&mut self, event: &SessionEvent) -> Result<()> {
        match event {
            SessionEvent::Created { .. } => Err(Error::InvalidInput("duplicate created event".into())),
            SessionEvent::Question { round, pair, at } => {
                if *round != self.round {
                    return Err(Error::InvalidInput(format!(
                        "logged question for round {round} but session is at round {}",
                        self.round
                    )));
                }
                match self.run_pending(*at)? {
                    Some(SessionEvent::Question { pair: p, .. }) if p == *pair => Ok(()),
                    _ => Err(Error::InvalidInput(format!(
                        "replay did not reproduce question {pair} in round {round}"
                    ))),
                }
            }
            SessionEvent::Answer {
                round,
                preferred,
                other,
                idempotency_key,
                at,
            } => {
                if *round != self.round {
                    return Err(Error::InvalidInput(format!(
                        "logged answer for round {round} but session is at round {}",
                        self.round
                    )));
                }
                self.submit_answer(
                    PreferenceStatement::new(*preferred, *other)?,
                    idempotency_key.as_deref(),
                    *at,
                )?;
                Ok(())
            }
        }
    }

    /// Rebuilds a session from its full log. Owed work after the last
    /// event is left pending.
    pub fn replay(events: &[SessionEvent]) -> Result<Self> {
        let first = events
            .first()
            .ok_or_else(|| Error::InvalidInput("empty event log".into()))?;
        let mut s = Session::from_created(first)?;
        for e in &events[1..] {
            s.replay_event(e)?;
        }
        Ok(s)
    }

    pub fn view(&self) -> SessionView {
        let alt = |i: usize| AlternativeView {
            index: i,
            id: self.table.id(i).to_owned(),
            performances: self.table.row(i).to_vec(),
        };
        SessionView {
            id: self.id.clone(),
            status: self.status,
            round: self.round.min(self.horizon),
            horizon: self.horizon,
            answered: self.history.len(),
            question: self.pending_question.map(|p| QuestionView {
                pair: p,
                alternatives: [alt(p.first), alt(p.second)],
            }),
            alternatives: self.table.ids().to_vec(),
            criteria: self.table.criteria().iter().map(|c| c.name.clone()).collect(),
            history: self.history.statements().to_vec(),
            posterior: self.posterior.as_slice().to_vec(),
            summary: self.summary.clone(),
            metrics: self.metrics.clone(),
            last_error: self.last_error.clone(),
            created_at: self.created_at,
            updated_at: self.updated_at,
        }
    }

    pub fn transcript(&self) -> Transcript {
        Transcript {
            id: self.id.clone(),
            status: self.status,
            table: self.table.clone(),
            horizon: self.horizon,
            history: self.history.clone(),
            theta: self.posterior.clone(),
            alpha: DirichletParams::uniform(self.table.dimension()),
            elbo_trace: self.elbo_trace.clone(),
            config: self.config.clone(),
            seed: self.seed,
            round_seeds: (1..=self.round.min(self.horizon + 1))
                .map(|r| RoundSeeds::new(self.seed, r))
                .collect(),
            metrics: self.metrics.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlternativeView {
    pub index: usize,
    pub id: String,
    pub performances: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionView {
    pub pair: Pair,
    pub alternatives: [AlternativeView; 2],
}

/// Read-only state payload for clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub status: SessionStatus,
    pub round: usize,
    pub horizon: usize,
    pub answered: usize,
    pub question: Option<QuestionView>,
    pub alternatives: Vec<String>,
    pub criteria: Vec<String>,
    pub history: Vec<PreferenceStatement>,
    pub posterior: Vec<f64>,
    pub summary: Option<PosteriorSummaryView>,
    pub metrics: Vec<MetricPoint>,
    pub last_error: Option<String>,
    pub created_at: u64,
    pub updated_at: u64,
}

/// Full audit record of a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub id: String,
    pub status: SessionStatus,
    pub table: PerformanceTable,
    pub horizon: usize,
    pub history: PreferenceSet,
    pub theta: DirichletParams,
    pub alpha: DirichletParams,
    pub elbo_trace: Vec<f64>,
    pub config: SessionConfig,
    pub seed: u64,
    pub round_seeds: Vec<RoundSeeds>,
    pub metrics: Vec<MetricPoint>,
}

/// Small built-in table for trying the service.
pub fn demo_table() -> PerformanceTable {
    let rows = vec![
        vec![0.9, 0.2, 0.4],
        vec![0.3, 0.8, 0.6],
        vec![0.6, 0.5, 0.1],
        vec![0.1, 0.3, 0.9],
        vec![0.7, 0.7, 0.3],
        vec![0.4, 0.1, 0.7],
    ];
    let ids = ["alpha", "bravo", "charlie", "delta", "echo", "foxtrot"];
    let criteria = ["price", "comfort", "range"]
        .iter()
        .map(|n| crate::model::Criterion::new(*n, 0.0, 1.0, 2))
        .collect::<Result<Vec<_>>>()
        .expect("demo criteria are valid");
    PerformanceTable::new(ids.iter().map(|s| s.to_string()).collect(), criteria, rows).expect("demo table is valid")
}
