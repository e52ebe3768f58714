use std::collections::BTreeMap;

use fed_model::ModelParams;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum AggregateError {
    #[error("cannot aggregate an empty entry set")]
    EmptyEntrySet,
    #[error("entries have incompatible parameter shapes")]
    IncompatibleShapes,
    #[error("total contribution is not positive")]
    ZeroTotalContribution,
}

/// One learner's live submission in the model store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelStoreEntry {
    pub learner_id: String,
    pub params: ModelParams,
    pub contribution: f64,
    pub round_submitted: u64,
}

impl ModelStoreEntry {
    /// Rounds elapsed since submission.
    pub fn staleness(&self, current_round: u64) -> u64 {
        current_round.saturating_sub(self.round_submitted)
    }
}

/// Key-value store of the latest local model per learner (key: learner id,
/// value: model and its contribution).
#[derive(Debug, Clone, Default)]
pub struct ModelStore {
    entries: BTreeMap<String, ModelStoreEntry>,
}

impl ModelStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Insert or overwrite the learner's live entry, returning the previous
    /// one if any.
    pub fn put(&mut self, entry: ModelStoreEntry) -> Option<ModelStoreEntry> {
        self.entries.insert(entry.learner_id.clone(), entry)
    }

    pub fn get(&self, learner_id: &str) -> Option<&ModelStoreEntry> {
        self.entries.get(learner_id)
    }

    pub fn entries(&self) -> impl Iterator<Item = &ModelStoreEntry> {
        self.entries.values()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Contribution-weighted model average: `sum_k (p_k / P) x_k` with
/// `P = sum_k p_k`, so the weights lie on the simplex.
pub fn aggregate_weighted(entries: &[ModelStoreEntry]) -> Result<ModelParams, AggregateError> {
    let first = entries.first().ok_or(AggregateError::EmptyEntrySet)?;
    let total: f64 = entries.iter().map(|e| e.contribution).sum();
    if !(total > 0.0) {
        return Err(AggregateError::ZeroTotalContribution);
    }
    let mut out = first.params.zeros_like();
    for entry in entries {
        out.scaled_add(entry.contribution / total, &entry.params)
            .map_err(|_| AggregateError::IncompatibleShapes)?;
    }
    Ok(out)
}
