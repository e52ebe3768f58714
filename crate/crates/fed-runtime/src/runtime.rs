use std::collections::{BTreeMap, VecDeque};
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use fed_model::{evaluate, sgd_train, ModelParams, ModelSpec, TrainBudget, TrainHyper};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::aggregate::{aggregate_weighted, ModelStore, ModelStoreEntry};
use crate::config::{
    Catalog, ExecutionMode, FederationConfig, LearnerEval, LearnerHandle, LearnerRoundRecord,
    ProtocolSpec, RoundRecord, RunLog,
};
use crate::secure::SecureSumSession;
use crate::seed::derive_seed;
use crate::wire::{decode_message, encode_message, Message};
use crate::FedError;

#[derive(Debug, Error)]
pub enum RunFailure {
    #[error(transparent)]
    Config(#[from] FedError),
    /// A learner raised during the run; the partial log is preserved.
    #[error("learner '{learner}' failed: {message}")]
    Learner {
        learner: String,
        message: String,
        partial: Box<RunLog>,
    },
}

/// Evaluate the community model at every learner and weight the local
/// metrics by contribution (Eq. 1 weighting over the learners that hold
/// data).
pub fn evaluate_community(
    spec: &ModelSpec,
    params: &ModelParams,
    learners: &[LearnerHandle],
) -> (Vec<LearnerEval>, Option<f64>, Option<f64>) {
    let evals: Vec<LearnerEval> = learners
        .iter()
        .map(|l| {
            let report = evaluate(spec, params, &l.dataset);
            LearnerEval {
                learner: l.id.clone(),
                loss: report.loss,
                metric_value: report.metric_value,
                n: report.n,
            }
        })
        .collect();
    let weights: Vec<f64> = learners.iter().map(|l| l.contribution).collect();
    let (loss, metric) = weighted_community_metrics(&evals, &weights);
    (evals, loss, metric)
}

fn weighted_community_metrics(
    evals: &[LearnerEval],
    contributions: &[f64],
) -> (Option<f64>, Option<f64>) {
    let mut total = 0.0;
    let mut loss_acc = 0.0;
    let mut metric_acc = 0.0;
    let mut any = false;
    for (eval, &p) in evals.iter().zip(contributions) {
        if let (Some(loss), Some(metric)) = (eval.loss, eval.metric_value) {
            total += p;
            loss_acc += p * loss;
            metric_acc += p * metric;
            any = true;
        }
    }
    if !any || !(total > 0.0) {
        return (None, None);
    }
    (Some(loss_acc / total), Some(metric_acc / total))
}

/// Sampled learner indices for one synchronous round: `ceil(fraction * N)`
/// drawn without replacement, processed in configuration order.
fn sample_participants(n: usize, fraction: f64, seed: u64) -> Vec<usize> {
    let k = ((fraction * n as f64).ceil() as usize).clamp(1, n);
    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut sampled: Vec<usize> = indices.into_iter().take(k).collect();
    sampled.sort_unstable();
    sampled
}

/// Aggregate round entries, through the masking path when secure aggregation
/// is on. Secure summation reveals only the weighted sum to the controller.
fn aggregate_round(
    config: &FederationConfig,
    round: u64,
    entries: &[ModelStoreEntry],
) -> Result<ModelParams, FedError> {
    if !config.secure_aggregation || entries.len() < 2 {
        return Ok(aggregate_weighted(entries)?);
    }
    let ids: Vec<String> = entries.iter().map(|e| e.learner_id.clone()).collect();
    let template = &entries[0].params;
    let session = SecureSumSession::new(
        &ids,
        derive_seed(config.seed, "secure-session", round),
        template.len(),
    )?;
    let mut submissions = BTreeMap::new();
    let mut total = 0.0;
    for entry in entries {
        let weighted: Vec<f64> = entry
            .params
            .flatten()
            .into_iter()
            .map(|v| v * entry.contribution)
            .collect();
        submissions.insert(
            entry.learner_id.clone(),
            session.mask(&entry.learner_id, &weighted)?,
        );
        total += entry.contribution;
    }
    let summed = session.combine(&submissions)?;
    let averaged: Vec<f64> = summed.into_iter().map(|v| v / total).collect();
    template
        .unflatten(&averaged)
        .map_err(|e| FedError::Config(e.to_string()))
}

struct TrainOutcome {
    params: ModelParams,
    steps_done: u64,
    busy_secs: f64,
}

fn train_at(
    config: &FederationConfig,
    learner: &LearnerHandle,
    global: &ModelParams,
    budget: TrainBudget,
    seed: u64,
) -> Result<TrainOutcome, (String, String)> {
    let hyper = TrainHyper {
        learning_rate: config.learning_rate,
        batch_size: config.batch_size,
        budget,
        seed,
    };
    match sgd_train(
        &config.model,
        global,
        &learner.dataset,
        &hyper,
        learner.step_rate,
    ) {
        Ok((params, steps_done)) => {
            // a semi-synchronous learner is busy for the whole period even if
            // the final partial step never completes
            let busy_secs = match budget {
                TrainBudget::SimTime { seconds } => seconds,
                _ => steps_done as f64 / learner.step_rate,
            };
            Ok(TrainOutcome {
                params,
                steps_done,
                busy_secs,
            })
        }
        Err(e) => Err((learner.id.clone(), e.to_string())),
    }
}

fn now_ms() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn build_catalog(
    config: &FederationConfig,
    learners: &[LearnerHandle],
    rounds: &[RoundRecord],
    started_unix_ms: u64,
) -> Catalog {
    let last = rounds.last();
    Catalog {
        config_hash: config.content_hash(),
        seed: config.seed,
        protocol: config.protocol.name().to_string(),
        n_learners: learners.len(),
        metric_name: if config.model.is_classifier() {
            "accuracy".into()
        } else {
            "mae".into()
        },
        started_unix_ms,
        ended_unix_ms: now_ms(),
        final_loss: last.and_then(|r| r.federation_loss),
        final_metric: last.and_then(|r| r.federation_metric),
    }
}

/// Run a federated experiment under the configured protocol and execution
/// mode, producing the per-round log and catalog.
pub fn run_federation(
    config: &FederationConfig,
    learners: &[LearnerHandle],
    mode: ExecutionMode,
) -> Result<RunLog, RunFailure> {
    config.validate(learners)?;
    let started = now_ms();
    let init_seed = derive_seed(config.seed, "model-init", 0);
    let global = config.model.init_params(init_seed);

    let outcome = match mode {
        ExecutionMode::Simulated => simulated_run(config, learners, global),
        ExecutionMode::Threaded => threaded_run(config, learners, global),
    };

    match outcome {
        Ok((rounds, final_model)) => Ok(RunLog {
            catalog: build_catalog(config, learners, &rounds, started),
            rounds,
            final_model,
        }),
        Err((learner, message, rounds, final_model)) => Err(RunFailure::Learner {
            learner,
            message,
            partial: Box::new(RunLog {
                catalog: build_catalog(config, learners, &rounds, started),
                rounds,
                final_model,
            }),
        }),
    }
}

/// Rounds plus the final community model; failures carry the partial state.
type ProtocolResult =
    Result<(Vec<RoundRecord>, ModelParams), (String, String, Vec<RoundRecord>, ModelParams)>;

// ===== simulated mode =====

fn simulated_run(
    config: &FederationConfig,
    learners: &[LearnerHandle],
    global: ModelParams,
) -> ProtocolResult {
    match config.protocol {
        ProtocolSpec::Synchronous { local_epochs } => {
            simulated_barrier(config, learners, global, BarrierKind::Epochs(local_epochs))
        }
        ProtocolSpec::SemiSynchronous { period_secs } => {
            simulated_barrier(config, learners, global, BarrierKind::Period(period_secs))
        }
        ProtocolSpec::Asynchronous {
            local_epochs,
            alpha,
            staleness_exponent,
        } => simulated_async(
            config,
            learners,
            global,
            local_epochs,
            alpha,
            staleness_exponent,
        ),
    }
}

enum BarrierKind {
    Epochs(u64),
    Period(f64),
}

/// Synchronous and semi-synchronous rounds share the same barrier shape;
/// they differ in who participates, the budget, and how busy time counts.
fn simulated_barrier(
    config: &FederationConfig,
    learners: &[LearnerHandle],
    mut global: ModelParams,
    kind: BarrierKind,
) -> ProtocolResult {
    let mut store = ModelStore::new();
    let mut rounds = Vec::new();
    let mut sim_time = 0.0_f64;

    for round in 1..=config.rounds {
        let participants: Vec<usize> = match kind {
            // the scheduler samples for synchronous rounds; semi-sync keeps
            // every learner busy every round
            BarrierKind::Epochs(_) => sample_participants(
                learners.len(),
                config.participation_fraction,
                derive_seed(config.seed, "participation", round),
            ),
            BarrierKind::Period(_) => (0..learners.len()).collect(),
        };

        let budget = match kind {
            BarrierKind::Epochs(epochs) => TrainBudget::Epochs { epochs },
            BarrierKind::Period(seconds) => TrainBudget::SimTime { seconds },
        };

        let mut training = Vec::new();
        let mut round_entries = Vec::new();
        let mut round_wall = 0.0_f64;
        for &idx in &participants {
            let learner = &learners[idx];
            let seed = derive_seed(config.seed, &format!("train:{}", learner.id), round);
            let outcome = match train_at(config, learner, &global, budget, seed) {
                Ok(o) => o,
                Err((learner, message)) => return Err((learner, message, rounds, global)),
            };
            round_wall = round_wall.max(outcome.busy_secs);
            training.push(LearnerRoundRecord {
                learner: learner.id.clone(),
                steps_done: outcome.steps_done,
                busy_secs: outcome.busy_secs,
                dispatch_round: round - 1,
                merge_round: round,
                staleness: 0,
            });
            let entry = ModelStoreEntry {
                learner_id: learner.id.clone(),
                params: outcome.params,
                contribution: learner.contribution,
                round_submitted: round,
            };
            store.put(entry.clone());
            round_entries.push(entry);
        }
        sim_time += round_wall;

        global = match aggregate_round(config, round, &round_entries) {
            Ok(g) => g,
            Err(e) => return Err(("controller".into(), e.to_string(), rounds, global)),
        };

        let (evaluations, federation_loss, federation_metric) =
            evaluate_community(&config.model, &global, learners);
        rounds.push(RoundRecord {
            round,
            sim_time,
            participants: participants
                .iter()
                .map(|&i| learners[i].id.clone())
                .collect(),
            training,
            evaluations,
            federation_loss,
            federation_metric,
        });
    }
    Ok((rounds, global))
}

fn simulated_async(
    config: &FederationConfig,
    learners: &[LearnerHandle],
    mut global: ModelParams,
    local_epochs: u64,
    alpha: f64,
    staleness_exponent: f64,
) -> ProtocolResult {
    struct Pending {
        finish: f64,
        learner: usize,
        dispatch_version: u64,
        outcome: TrainOutcome,
    }

    let mut store = ModelStore::new();
    let mut rounds = Vec::new();
    let mut version = 0u64; // merges completed so far
    let mut dispatch_counts = vec![0u64; learners.len()];

    let dispatch = |learner_idx: usize,
                    global: &ModelParams,
                    now: f64,
                    version: u64,
                    dispatch_counts: &mut Vec<u64>|
     -> Result<Pending, (String, String)> {
        dispatch_counts[learner_idx] += 1;
        let learner = &learners[learner_idx];
        let seed = derive_seed(
            config.seed,
            &format!("train:{}", learner.id),
            dispatch_counts[learner_idx],
        );
        let outcome = train_at(
            config,
            learner,
            global,
            TrainBudget::Epochs {
                epochs: local_epochs,
            },
            seed,
        )?;
        Ok(Pending {
            finish: now + outcome.busy_secs,
            learner: learner_idx,
            dispatch_version: version,
            outcome,
        })
    };

    let mut pending: Vec<Pending> = Vec::with_capacity(learners.len());
    for idx in 0..learners.len() {
        match dispatch(idx, &global, 0.0, 0, &mut dispatch_counts) {
            Ok(p) => pending.push(p),
            Err((learner, message)) => return Err((learner, message, rounds, global)),
        }
    }

    while version < config.rounds {
        // earliest finish, ties broken by learner index
        let next = pending
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| {
                a.finish
                    .total_cmp(&b.finish)
                    .then(a.learner.cmp(&b.learner))
            })
            .map(|(i, _)| i)
            .expect("pending never empty");
        let done = pending.swap_remove(next);
        let learner = &learners[done.learner];

        let staleness = version - done.dispatch_version;
        let weight = alpha * (1.0 + staleness as f64).powf(-staleness_exponent);
        let mut merged = global.clone();
        merged.scale(1.0 - weight);
        if let Err(e) = merged.scaled_add(weight, &done.outcome.params) {
            return Err(("controller".into(), e.to_string(), rounds, global));
        }
        global = merged;
        version += 1;
        let sim_time = done.finish;

        store.put(ModelStoreEntry {
            learner_id: learner.id.clone(),
            params: done.outcome.params.clone(),
            contribution: learner.contribution,
            round_submitted: done.dispatch_version,
        });

        let (evaluations, federation_loss, federation_metric) =
            evaluate_community(&config.model, &global, learners);
        rounds.push(RoundRecord {
            round: version,
            sim_time,
            participants: vec![learner.id.clone()],
            training: vec![LearnerRoundRecord {
                learner: learner.id.clone(),
                steps_done: done.outcome.steps_done,
                busy_secs: done.outcome.busy_secs,
                dispatch_round: done.dispatch_version,
                merge_round: version,
                staleness,
            }],
            evaluations,
            federation_loss,
            federation_metric,
        });

        // no waiting: the learner immediately starts on the new global model
        match dispatch(
            done.learner,
            &global,
            sim_time,
            version,
            &mut dispatch_counts,
        ) {
            Ok(p) => pending.push(p),
            Err((learner, message)) => return Err((learner, message, rounds, global)),
        }
    }
    Ok((rounds, global))
}

// ===== threaded mode =====

struct LearnerChannels {
    to_learners: Vec<mpsc::Sender<Vec<u8>>>,
    from_learners: mpsc::Receiver<Vec<u8>>,
    handles: Vec<thread::JoinHandle<()>>,
}

fn spawn_learners(config: &FederationConfig, learners: &[LearnerHandle]) -> LearnerChannels {
    let (tx_controller, from_learners) = mpsc::channel::<Vec<u8>>();
    let mut to_learners = Vec::with_capacity(learners.len());
    let mut handles = Vec::with_capacity(learners.len());
    for learner in learners {
        let (tx, rx) = mpsc::channel::<Vec<u8>>();
        to_learners.push(tx);
        let up = tx_controller.clone();
        let spec = config.model;
        let id = learner.id.clone();
        let dataset = learner.dataset.clone();
        let contribution = learner.contribution;
        let step_rate = learner.step_rate;
        handles.push(thread::spawn(move || {
            while let Ok(frame) = rx.recv() {
                let message = match decode_message(&frame) {
                    Ok((m, _)) => m,
                    Err(_) => break,
                };
                match message {
                    Message::TrainTask {
                        round,
                        seed,
                        budget,
                        learning_rate,
                        batch_size,
                        params,
                    } => {
                        let hyper = TrainHyper {
                            learning_rate,
                            batch_size: batch_size as usize,
                            budget,
                            seed,
                        };
                        match sgd_train(&spec, &params, &dataset, &hyper, step_rate) {
                            Ok((params, steps_done)) => {
                                let busy_secs = match budget {
                                    TrainBudget::SimTime { seconds } => seconds,
                                    _ => steps_done as f64 / step_rate,
                                };
                                let reply = Message::LocalModel {
                                    round,
                                    learner: id.clone(),
                                    contribution,
                                    steps_done,
                                    busy_secs,
                                    params,
                                };
                                if up.send(encode_message(&reply)).is_err() {
                                    break;
                                }
                            }
                            // a raising learner goes silent; the controller
                            // notices the missing submission and aborts
                            Err(_) => break,
                        }
                    }
                    Message::EvalTask { round, params } => {
                        let report = evaluate(&spec, &params, &dataset);
                        let reply = Message::Metrics {
                            round,
                            learner: id.clone(),
                            loss: report.loss,
                            metric_value: report.metric_value,
                            n: report.n as u64,
                        };
                        if up.send(encode_message(&reply)).is_err() {
                            break;
                        }
                    }
                    _ => break,
                }
            }
        }));
    }
    LearnerChannels {
        to_learners,
        from_learners,
        handles,
    }
}

/// A learner that stops responding (e.g. it raised during training and went
/// silent) must not hang the controller; waits are bounded.
const LEARNER_REPLY_TIMEOUT: Duration = Duration::from_secs(5);

struct ControllerInbox {
    local_models: VecDeque<Message>,
    metrics: VecDeque<Message>,
}

impl ControllerInbox {
    fn new() -> Self {
        ControllerInbox {
            local_models: VecDeque::new(),
            metrics: VecDeque::new(),
        }
    }

    fn recv_local_model(&mut self, rx: &mpsc::Receiver<Vec<u8>>) -> Result<Message, String> {
        if let Some(m) = self.local_models.pop_front() {
            return Ok(m);
        }
        loop {
            let frame = rx
                .recv_timeout(LEARNER_REPLY_TIMEOUT)
                .map_err(|_| "a learner stopped responding".to_string())?;
            let (message, _) = decode_message(&frame).map_err(|e| e.to_string())?;
            match message {
                Message::LocalModel { .. } => return Ok(message),
                Message::Metrics { .. } => self.metrics.push_back(message),
                _ => return Err("unexpected message at controller".into()),
            }
        }
    }

    fn recv_metrics(&mut self, rx: &mpsc::Receiver<Vec<u8>>) -> Result<Message, String> {
        if let Some(m) = self.metrics.pop_front() {
            return Ok(m);
        }
        loop {
            let frame = rx
                .recv_timeout(LEARNER_REPLY_TIMEOUT)
                .map_err(|_| "a learner stopped responding".to_string())?;
            let (message, _) = decode_message(&frame).map_err(|e| e.to_string())?;
            match message {
                Message::Metrics { .. } => return Ok(message),
                Message::LocalModel { .. } => self.local_models.push_back(message),
                _ => return Err("unexpected message at controller".into()),
            }
        }
    }
}

/// Dispatch the community model for evaluation to all learners and collect
/// their metrics, in configuration order.
fn threaded_evaluations(
    learners: &[LearnerHandle],
    channels: &LearnerChannels,
    inbox: &mut ControllerInbox,
    round: u64,
    global: &ModelParams,
) -> Result<(Vec<LearnerEval>, Option<f64>, Option<f64>), String> {
    for tx in &channels.to_learners {
        let task = Message::EvalTask {
            round,
            params: global.clone(),
        };
        tx.send(encode_message(&task)).map_err(|e| e.to_string())?;
    }
    let mut by_id: BTreeMap<String, LearnerEval> = BTreeMap::new();
    for _ in 0..learners.len() {
        match inbox.recv_metrics(&channels.from_learners)? {
            Message::Metrics {
                learner,
                loss,
                metric_value,
                n,
                ..
            } => {
                by_id.insert(
                    learner.clone(),
                    LearnerEval {
                        learner,
                        loss,
                        metric_value,
                        n: n as usize,
                    },
                );
            }
            _ => unreachable!(),
        }
    }
    let evals: Vec<LearnerEval> = learners
        .iter()
        .map(|l| by_id.remove(&l.id).expect("metrics for every learner"))
        .collect();
    let weights: Vec<f64> = learners.iter().map(|l| l.contribution).collect();
    let (loss, metric) = weighted_community_metrics(&evals, &weights);
    Ok((evals, loss, metric))
}

fn threaded_run(
    config: &FederationConfig,
    learners: &[LearnerHandle],
    global: ModelParams,
) -> ProtocolResult {
    let channels = spawn_learners(config, learners);
    let result = threaded_protocol(config, learners, global, &channels);
    // closing the task channels shuts the learner threads down
    drop(channels.to_learners);
    while let Ok(_ignored) = channels.from_learners.try_recv() {}
    for handle in channels.handles {
        let _ = handle.join();
    }
    result
}

fn threaded_protocol(
    config: &FederationConfig,
    learners: &[LearnerHandle],
    mut global: ModelParams,
    channels: &LearnerChannels,
) -> ProtocolResult {
    let mut inbox = ControllerInbox::new();
    let mut rounds: Vec<RoundRecord> = Vec::new();
    let mut sim_time = 0.0_f64;

    match config.protocol {
        ProtocolSpec::Synchronous { local_epochs } => {
            for round in 1..=config.rounds {
                let participants = sample_participants(
                    learners.len(),
                    config.participation_fraction,
                    derive_seed(config.seed, "participation", round),
                );
                for &idx in &participants {
                    let learner = &learners[idx];
                    let task = Message::TrainTask {
                        round,
                        seed: derive_seed(config.seed, &format!("train:{}", learner.id), round),
                        budget: TrainBudget::Epochs {
                            epochs: local_epochs,
                        },
                        learning_rate: config.learning_rate,
                        batch_size: config.batch_size as u64,
                        params: global.clone(),
                    };
                    if channels.to_learners[idx]
                        .send(encode_message(&task))
                        .is_err()
                    {
                        return Err((
                            "controller".into(),
                            format!("learner '{}' unreachable", learner.id),
                            rounds,
                            global,
                        ));
                    }
                }
                let mut by_id: BTreeMap<String, (ModelParams, f64, u64, f64)> = BTreeMap::new();
                for _ in 0..participants.len() {
                    match inbox.recv_local_model(&channels.from_learners) {
                        Ok(Message::LocalModel {
                            learner,
                            contribution,
                            steps_done,
                            busy_secs,
                            params,
                            ..
                        }) => {
                            by_id.insert(learner, (params, contribution, steps_done, busy_secs));
                        }
                        Ok(_) => unreachable!(),
                        Err(message) => return Err(("controller".into(), message, rounds, global)),
                    }
                }
                let mut training = Vec::new();
                let mut entries = Vec::new();
                let mut round_wall = 0.0_f64;
                for &idx in &participants {
                    let learner = &learners[idx];
                    let (params, contribution, steps_done, busy_secs) =
                        match by_id.remove(&learner.id) {
                            Some(v) => v,
                            None => {
                                return Err((
                                    "controller".into(),
                                    format!("missing submission from '{}'", learner.id),
                                    rounds,
                                    global,
                                ))
                            }
                        };
                    round_wall = round_wall.max(busy_secs);
                    training.push(LearnerRoundRecord {
                        learner: learner.id.clone(),
                        steps_done,
                        busy_secs,
                        dispatch_round: round - 1,
                        merge_round: round,
                        staleness: 0,
                    });
                    entries.push(ModelStoreEntry {
                        learner_id: learner.id.clone(),
                        params,
                        contribution,
                        round_submitted: round,
                    });
                }
                sim_time += round_wall;
                global = match aggregate_round(config, round, &entries) {
                    Ok(g) => g,
                    Err(e) => return Err(("controller".into(), e.to_string(), rounds, global)),
                };
                let (evaluations, federation_loss, federation_metric) =
                    match threaded_evaluations(learners, channels, &mut inbox, round, &global) {
                        Ok(v) => v,
                        Err(message) => return Err(("controller".into(), message, rounds, global)),
                    };
                rounds.push(RoundRecord {
                    round,
                    sim_time,
                    participants: participants
                        .iter()
                        .map(|&i| learners[i].id.clone())
                        .collect(),
                    training,
                    evaluations,
                    federation_loss,
                    federation_metric,
                });
            }
            Ok((rounds, global))
        }
        ProtocolSpec::SemiSynchronous { period_secs } => {
            for round in 1..=config.rounds {
                for (idx, learner) in learners.iter().enumerate() {
                    let task = Message::TrainTask {
                        round,
                        seed: derive_seed(config.seed, &format!("train:{}", learner.id), round),
                        budget: TrainBudget::SimTime {
                            seconds: period_secs,
                        },
                        learning_rate: config.learning_rate,
                        batch_size: config.batch_size as u64,
                        params: global.clone(),
                    };
                    if channels.to_learners[idx]
                        .send(encode_message(&task))
                        .is_err()
                    {
                        return Err((
                            "controller".into(),
                            format!("learner '{}' unreachable", learner.id),
                            rounds,
                            global,
                        ));
                    }
                }
                let mut by_id: BTreeMap<String, (ModelParams, f64, u64, f64)> = BTreeMap::new();
                for _ in 0..learners.len() {
                    match inbox.recv_local_model(&channels.from_learners) {
                        Ok(Message::LocalModel {
                            learner,
                            contribution,
                            steps_done,
                            busy_secs,
                            params,
                            ..
                        }) => {
                            by_id.insert(learner, (params, contribution, steps_done, busy_secs));
                        }
                        Ok(_) => unreachable!(),
                        Err(message) => return Err(("controller".into(), message, rounds, global)),
                    }
                }
                let mut training = Vec::new();
                let mut entries = Vec::new();
                for learner in learners {
                    let (params, contribution, steps_done, busy_secs) =
                        match by_id.remove(&learner.id) {
                            Some(v) => v,
                            None => {
                                return Err((
                                    "controller".into(),
                                    format!("missing submission from '{}'", learner.id),
                                    rounds,
                                    global,
                                ))
                            }
                        };
                    training.push(LearnerRoundRecord {
                        learner: learner.id.clone(),
                        steps_done,
                        busy_secs,
                        dispatch_round: round - 1,
                        merge_round: round,
                        staleness: 0,
                    });
                    entries.push(ModelStoreEntry {
                        learner_id: learner.id.clone(),
                        params,
                        contribution,
                        round_submitted: round,
                    });
                }
                sim_time += period_secs;
                global = match aggregate_round(config, round, &entries) {
                    Ok(g) => g,
                    Err(e) => return Err(("controller".into(), e.to_string(), rounds, global)),
                };
                let (evaluations, federation_loss, federation_metric) =
                    match threaded_evaluations(learners, channels, &mut inbox, round, &global) {
                        Ok(v) => v,
                        Err(message) => return Err(("controller".into(), message, rounds, global)),
                    };
                rounds.push(RoundRecord {
                    round,
                    sim_time,
                    participants: learners.iter().map(|l| l.id.clone()).collect(),
                    training,
                    evaluations,
                    federation_loss,
                    federation_metric,
                });
            }
            Ok((rounds, global))
        }
        ProtocolSpec::Asynchronous {
            local_epochs,
            alpha,
            staleness_exponent,
        } => {
            let index_of: BTreeMap<String, usize> = learners
                .iter()
                .enumerate()
                .map(|(i, l)| (l.id.clone(), i))
                .collect();
            let mut dispatch_version = vec![0u64; learners.len()];
            let mut dispatch_counts = vec![0u64; learners.len()];
            let mut version = 0u64;
            for (idx, learner) in learners.iter().enumerate() {
                dispatch_counts[idx] += 1;
                let task = Message::TrainTask {
                    round: 0,
                    seed: derive_seed(
                        config.seed,
                        &format!("train:{}", learner.id),
                        dispatch_counts[idx],
                    ),
                    budget: TrainBudget::Epochs {
                        epochs: local_epochs,
                    },
                    learning_rate: config.learning_rate,
                    batch_size: config.batch_size as u64,
                    params: global.clone(),
                };
                if channels.to_learners[idx]
                    .send(encode_message(&task))
                    .is_err()
                {
                    return Err((
                        "controller".into(),
                        format!("learner '{}' unreachable", learner.id),
                        rounds,
                        global,
                    ));
                }
            }
            while version < config.rounds {
                let (learner_id, steps_done, busy_secs, params) =
                    match inbox.recv_local_model(&channels.from_learners) {
                        Ok(Message::LocalModel {
                            learner,
                            steps_done,
                            busy_secs,
                            params,
                            ..
                        }) => (learner, steps_done, busy_secs, params),
                        Ok(_) => unreachable!(),
                        Err(message) => return Err(("controller".into(), message, rounds, global)),
                    };
                let idx = match index_of.get(&learner_id) {
                    Some(&i) => i,
                    None => {
                        return Err((
                            "controller".into(),
                            format!("unknown learner '{learner_id}'"),
                            rounds,
                            global,
                        ))
                    }
                };
                let staleness = version - dispatch_version[idx];
                let weight = alpha * (1.0 + staleness as f64).powf(-staleness_exponent);
                let mut merged = global.clone();
                merged.scale(1.0 - weight);
                if let Err(e) = merged.scaled_add(weight, &params) {
                    return Err(("controller".into(), e.to_string(), rounds, global));
                }
                global = merged;
                version += 1;
                sim_time += busy_secs;

                let (evaluations, federation_loss, federation_metric) =
                    match threaded_evaluations(learners, channels, &mut inbox, version, &global) {
                        Ok(v) => v,
                        Err(message) => return Err(("controller".into(), message, rounds, global)),
                    };
                rounds.push(RoundRecord {
                    round: version,
                    sim_time,
                    participants: vec![learner_id.clone()],
                    training: vec![LearnerRoundRecord {
                        learner: learner_id.clone(),
                        steps_done,
                        busy_secs,
                        dispatch_round: dispatch_version[idx],
                        merge_round: version,
                        staleness,
                    }],
                    evaluations,
                    federation_loss,
                    federation_metric,
                });

                if version < config.rounds {
                    dispatch_version[idx] = version;
                    dispatch_counts[idx] += 1;
                    let task = Message::TrainTask {
                        round: version,
                        seed: derive_seed(
                            config.seed,
                            &format!("train:{}", learner_id),
                            dispatch_counts[idx],
                        ),
                        budget: TrainBudget::Epochs {
                            epochs: local_epochs,
                        },
                        learning_rate: config.learning_rate,
                        batch_size: config.batch_size as u64,
                        params: global.clone(),
                    };
                    if channels.to_learners[idx]
                        .send(encode_message(&task))
                        .is_err()
                    {
                        return Err((
                            "controller".into(),
                            format!("learner '{learner_id}' unreachable"),
                            rounds,
                            global,
                        ));
                    }
                }
            }
            Ok((rounds, global))
        }
    }
}
