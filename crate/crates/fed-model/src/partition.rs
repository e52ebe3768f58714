use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::ModelError;

/// Per-silo id/feature/label space description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSchemaProfile {
    pub id_space: BTreeSet<String>,
    pub feature_columns: Vec<String>,
    pub label_column: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PartitionClass {
    Hfl,
    Vfl,
    Ftl,
    Mixed,
}

/// Classify how datasets are partitioned across silos: horizontal (same
/// features and labels, disjoint ids), vertical (same ids, different
/// features or labels), transfer (everything differs), or mixed.
pub fn classify_partitioning(
    profiles: &[DatasetSchemaProfile],
) -> Result<PartitionClass, ModelError> {
    if profiles.len() < 2 {
        return Err(ModelError::InvalidSpec(
            "partition classification needs at least two profiles".into(),
        ));
    }
    let pairs = || {
        (0..profiles.len())
            .flat_map(move |i| (i + 1..profiles.len()).map(move |j| (&profiles[i], &profiles[j])))
    };
    let same_x =
        |a: &DatasetSchemaProfile, b: &DatasetSchemaProfile| a.feature_columns == b.feature_columns;
    let same_y =
        |a: &DatasetSchemaProfile, b: &DatasetSchemaProfile| a.label_column == b.label_column;
    let disjoint_ids =
        |a: &DatasetSchemaProfile, b: &DatasetSchemaProfile| a.id_space.is_disjoint(&b.id_space);

    if pairs().all(|(a, b)| same_x(a, b) && same_y(a, b) && disjoint_ids(a, b)) {
        return Ok(PartitionClass::Hfl);
    }
    if pairs().all(|(a, b)| a.id_space == b.id_space && (!same_x(a, b) || !same_y(a, b))) {
        return Ok(PartitionClass::Vfl);
    }
    if pairs().all(|(a, b)| !same_x(a, b) && !same_y(a, b) && disjoint_ids(a, b)) {
        return Ok(PartitionClass::Ftl);
    }
    Ok(PartitionClass::Mixed)
}

/// Sizes of a skewed horizontal split: `size_k` proportional to
/// `(1 - skew)^k`, floored, with the rounding remainder assigned to
/// learner 0. `skew = 0` is the uniform split.
pub fn skewed_sizes(n: usize, n_learners: usize, skew: f64) -> Vec<usize> {
    let weights: Vec<f64> = (0..n_learners)
        .map(|k| (1.0 - skew).powi(k as i32))
        .collect();
    let total: f64 = weights.iter().sum();
    let mut sizes: Vec<usize> = weights
        .iter()
        .map(|w| ((n as f64) * w / total).floor() as usize)
        .collect();
    let assigned: usize = sizes.iter().sum();
    sizes[0] += n - assigned;
    sizes
}

/// Split a dataset into disjoint per-learner shards covering every row.
/// Shard sizes decay geometrically with `skew`; with `by_label` set, rows
/// are ordered by label first so the shards are label-skewed (non-IID),
/// otherwise rows are shuffled with the seed.
pub fn partition_hfl(
    data: &Dataset,
    n_learners: usize,
    skew: f64,
    seed: u64,
    by_label: bool,
) -> Result<Vec<Dataset>, ModelError> {
    if n_learners == 0 {
        return Err(ModelError::InvalidSpec("need at least one learner".into()));
    }
    if !(0.0..=1.0).contains(&skew) {
        return Err(ModelError::InvalidSpec(format!(
            "skew must be in [0, 1], got {skew}"
        )));
    }
    if data.n() < n_learners {
        return Err(ModelError::TooFewRows {
            rows: data.n(),
            learners: n_learners,
        });
    }

    let mut indices: Vec<usize> = (0..data.n()).collect();
    if by_label {
        indices.sort_by(|&a, &b| {
            data.label_f64(a)
                .total_cmp(&data.label_f64(b))
                .then(a.cmp(&b))
        });
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        indices.shuffle(&mut rng);
    }

    let sizes = skewed_sizes(data.n(), n_learners, skew);
    let mut shards = Vec::with_capacity(n_learners);
    let mut offset = 0;
    for size in sizes {
        shards.push(data.subset(&indices[offset..offset + size]));
        offset += size;
    }
    Ok(shards)
}
