use fed_model::{Dataset, ModelSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::FedError;

/// One participating silo: its encoded dataset, contribution weight (the
/// FedAvg default is the local dataset size), and simulated compute speed.
#[derive(Debug, Clone)]
pub struct LearnerHandle {
    pub id: String,
    pub dataset: Dataset,
    pub contribution: f64,
    /// Simulated steps per second; models CPU/GPU heterogeneity.
    pub step_rate: f64,
}

impl LearnerHandle {
    pub fn new(id: impl Into<String>, dataset: Dataset) -> Self {
        let contribution = dataset.n() as f64;
        LearnerHandle {
            id: id.into(),
            dataset,
            contribution,
            step_rate: 1.0,
        }
    }

    pub fn with_step_rate(mut self, step_rate: f64) -> Self {
        self.step_rate = step_rate;
        self
    }

    pub fn with_contribution(mut self, contribution: f64) -> Self {
        self.contribution = contribution;
        self
    }
}

/// The three communication protocols.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "protocol", rename_all = "snake_case")]
pub enum ProtocolSpec {
    /// The controller waits for all sampled learners each round.
    Synchronous { local_epochs: u64 },
    /// Each arriving local model merges immediately with the global model,
    /// downweighted by staleness: `alpha * (1 + s)^(-staleness_exponent)`.
    Asynchronous {
        local_epochs: u64,
        alpha: f64,
        staleness_exponent: f64,
    },
    /// Every learner trains for the same simulated time period per round, so
    /// nobody idles but learners do different amounts of work.
    SemiSynchronous { period_secs: f64 },
}

impl ProtocolSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ProtocolSpec::Synchronous { .. } => "synchronous",
            ProtocolSpec::Asynchronous { .. } => "asynchronous",
            ProtocolSpec::SemiSynchronous { .. } => "semi_synchronous",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecutionMode {
    /// Deterministic single-threaded simulation on a virtual clock.
    Simulated,
    /// Learners on real threads exchanging wire-encoded messages.
    Threaded,
}

/// Full description of one federated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FederationConfig {
    pub protocol: ProtocolSpec,
    pub rounds: u64,
    pub participation_fraction: f64,
    pub seed: u64,
    pub model: ModelSpec,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub secure_aggregation: bool,
}

impl FederationConfig {
    pub fn validate(&self, learners: &[LearnerHandle]) -> Result<(), FedError> {
        let fail = |msg: String| Err(FedError::Config(msg));
        if self.rounds < 1 {
            return fail("rounds must be >= 1".into());
        }
        if !(self.participation_fraction > 0.0 && self.participation_fraction <= 1.0) {
            return fail(format!(
                "participation fraction must be in (0, 1], got {}",
                self.participation_fraction
            ));
        }
        if !(self.learning_rate > 0.0) {
            return fail("learning rate must be positive".into());
        }
        if self.batch_size == 0 {
            return fail("batch size must be positive".into());
        }
        self.model
            .validate()
            .map_err(|e| FedError::Config(e.to_string()))?;
        match self.protocol {
            ProtocolSpec::Synchronous { local_epochs }
            | ProtocolSpec::Asynchronous { local_epochs, .. }
                if local_epochs == 0 =>
            {
                return fail("local_epochs must be >= 1".into())
            }
            ProtocolSpec::Asynchronous {
                alpha,
                staleness_exponent,
                ..
            } => {
                if !(alpha > 0.0 && alpha <= 1.0) {
                    return fail(format!("alpha must be in (0, 1], got {alpha}"));
                }
                if !(staleness_exponent >= 0.0) {
                    return fail("staleness exponent must be nonnegative".into());
                }
                if self.secure_aggregation {
                    return fail(
                        "secure aggregation requires multi-party rounds; \
                         the asynchronous protocol merges one model at a time"
                            .into(),
                    );
                }
            }
            ProtocolSpec::SemiSynchronous { period_secs } => {
                if !(period_secs > 0.0) {
                    return fail("period must be positive".into());
                }
            }
            _ => {}
        }
        if learners.is_empty() {
            return fail("at least one learner is required".into());
        }
        for learner in learners {
            if !(learner.step_rate > 0.0) {
                return fail(format!(
                    "learner '{}' needs a positive step rate",
                    learner.id
                ));
            }
            if !(learner.contribution >= 0.0) {
                return fail(format!(
                    "learner '{}' has a negative contribution",
                    learner.id
                ));
            }
        }
        if !(learners.iter().map(|l| l.contribution).sum::<f64>() > 0.0) {
            return fail("total contribution must be positive".into());
        }
        if self.secure_aggregation && learners.len() < 2 {
            return fail("secure aggregation needs at least two learners".into());
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, recorded in the catalog.
    pub fn content_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Community-model metrics at one learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerEval {
    pub learner: String,
    pub loss: Option<f64>,
    pub metric_value: Option<f64>,
    pub n: usize,
}

/// Training work one participant did in one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerRoundRecord {
    pub learner: String,
    pub steps_done: u64,
    pub busy_secs: f64,
    pub dispatch_round: u64,
    pub merge_round: u64,
    pub staleness: u64,
}

/// One federation round: who trained, how much, and how the community model
/// scored afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u64,
    pub sim_time: f64,
    pub participants: Vec<String>,
    pub training: Vec<LearnerRoundRecord>,
    pub evaluations: Vec<LearnerEval>,
    pub federation_loss: Option<f64>,
    pub federation_metric: Option<f64>,
}

/// Catalog metadata, written once per run. Wall-clock timestamps live only
/// here so the round log stays byte-identical across reruns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub config_hash: String,
    pub seed: u64,
    pub protocol: String,
    pub n_learners: usize,
    pub metric_name: String,
    pub started_unix_ms: u64,
    pub ended_unix_ms: u64,
    pub final_loss: Option<f64>,
    pub final_metric: Option<f64>,
}

/// Per-round records, catalog metadata, and the trained community model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub catalog: Catalog,
    pub rounds: Vec<RoundRecord>,
    pub final_model: fed_model::ModelParams,
}

impl RunLog {
    /// One JSON object per round, newline-delimited. Deterministic for
    /// identical configs and seeds in simulated mode.
    pub fn rounds_jsonl(&self) -> Result<String, FedError> {
        let mut out = String::new();
        for record in &self.rounds {
            out.push_str(&serde_json::to_string(record)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn write_files(
        &self,
        rounds_path: impl AsRef<std::path::Path>,
        catalog_path: impl AsRef<std::path::Path>,
    ) -> Result<(), FedError> {
        std::fs::write(rounds_path, self.rounds_jsonl()?)?;
        std::fs::write(catalog_path, serde_json::to_string_pretty(&self.catalog)?)?;
        Ok(())
    }
}
