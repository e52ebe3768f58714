use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::model::{gradient_over, ModelSpec};
use crate::params::ModelParams;
use crate::ModelError;

/// How much local work a training task performs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "budget", rename_all = "snake_case")]
pub enum TrainBudget {
    Epochs {
        epochs: u64,
    },
    Steps {
        steps: u64,
    },
    /// Simulated seconds; steps = floor(step_rate * seconds).
    SimTime {
        seconds: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHyper {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub budget: TrainBudget,
    pub seed: u64,
}

impl TrainHyper {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.learning_rate > 0.0) {
            return Err(ModelError::InvalidSpec(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(ModelError::InvalidSpec(
                "batch size must be positive".into(),
            ));
        }
        match self.budget {
            TrainBudget::SimTime { seconds } if !(seconds >= 0.0) => Err(ModelError::InvalidSpec(
                format!("simulated time must be nonnegative, got {seconds}"),
            )),
            _ => Ok(()),
        }
    }
}

/// Mini-batch SGD with seeded shuffling each epoch.
///
/// Budgets: `epochs(e)` runs `e * ceil(n / batch)` steps, `steps(s)` exactly
/// `s`, and `sim_time(t)` runs `floor(step_rate * t)` steps. Bitwise
/// reproducible for identical inputs.
pub fn sgd_train(
    spec: &ModelSpec,
    params: &ModelParams,
    data: &Dataset,
    hyper: &TrainHyper,
    step_rate: f64,
) -> Result<(ModelParams, u64), ModelError> {
    hyper.validate()?;
    if data.n() == 0 {
        return Err(ModelError::EmptyDataset);
    }
    let n = data.n();
    let steps_per_epoch = (n as u64).div_ceil(hyper.batch_size as u64);
    let total_steps = match hyper.budget {
        TrainBudget::Epochs { epochs } => epochs * steps_per_epoch,
        TrainBudget::Steps { steps } => steps,
        TrainBudget::SimTime { seconds } => {
            if !(step_rate > 0.0) {
                return Err(ModelError::InvalidSpec(
                    "sim_time budget needs a positive step rate".into(),
                ));
            }
            (step_rate * seconds).floor() as u64
        }
    };

    let mut params = params.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut indices: Vec<usize> = (0..n).collect();
    let mut steps_done = 0u64;
    'training: loop {
        if steps_done >= total_steps {
            break;
        }
        indices.shuffle(&mut rng);
        for batch in indices.chunks(hyper.batch_size) {
            if steps_done >= total_steps {
                break 'training;
            }
            // the shuffle decides membership only; summing each batch in
            // index order keeps a full batch bit-identical to gradient()
            let mut batch = batch.to_vec();
            batch.sort_unstable();
            let grad = gradient_over(spec, &params, data, &batch);
            params.scaled_add(-hyper.learning_rate, &grad)?;
            steps_done += 1;
        }
    }
    Ok((params, steps_done))
}
