//! The driver pipeline: validate mappings, materialize each silo locally,
//! fit imputers from federated sufficient statistics, evaluate the training
//! query per silo, encode datasets, and run the federation.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use data_exchange::{evaluate_query, materialize, QueryMode, TargetInstance};
use fed_model::{
    classify_partitioning, encode_with, merge_encodings, scan_encoding, Dataset,
    DatasetSchemaProfile, Encoding, ModelSpec, PartitionClass,
};
use fed_runtime::{
    run_federation, ExecutionMode, FederationConfig, LearnerHandle, ProtocolSpec, RunFailure,
    RunLog,
};
use imputation::{fit, local_stats, merge_stats, FittedImputer, SufficientStats};
use mapping_lang::{validate_program, ValidationReport};
use relational_core::{write_csv, Relation, Value};

use crate::config::{Experiment, Silo};

/// Per-silo validation reports, in configuration order.
pub fn validate_all(experiment: &Experiment) -> Vec<(String, ValidationReport)> {
    experiment
        .silos
        .iter()
        .map(|silo| {
            let report = validate_program(&silo.program, &silo.source_schemas, &experiment.global);
            (silo.id.clone(), report)
        })
        .collect()
}

/// Materialize one silo locally. The silo's raw sources never leave this
/// function; only the global-schema instance does.
pub fn materialize_silo(
    experiment: &Experiment,
    silo: &Silo,
    mode: QueryMode,
) -> Result<TargetInstance> {
    materialize(
        &silo.program,
        &silo.sources,
        &experiment.global,
        &silo.registry,
        mode,
    )
    .map_err(|e| anyhow!("silo '{}': materialization: {e}", silo.id))
}

/// Fit every declared imputer at the federation level: each silo contributes
/// sufficient statistics over its own pass-one (certain-mode) instance, the
/// statistics merge exactly, and the fit happens once at the controller.
pub fn fit_imputers(experiment: &Experiment) -> Result<Vec<FittedImputer>> {
    let pass_one: Vec<TargetInstance> = experiment
        .silos
        .iter()
        .map(|silo| materialize_silo(experiment, silo, QueryMode::CertainAnswers))
        .collect::<Result<_>>()?;

    let mut fitted = Vec::new();
    for spec in &experiment.imputer_specs {
        let mut parts: Vec<SufficientStats> = Vec::new();
        for (silo, instance) in experiment.silos.iter().zip(&pass_one) {
            let relation = instance.relation(&spec.target.relation).ok_or_else(|| {
                anyhow!(
                    "imputer '{}': relation '{}' missing from silo '{}'",
                    spec.name,
                    spec.target.relation,
                    silo.id
                )
            })?;
            parts.push(
                local_stats(relation, spec)
                    .map_err(|e| anyhow!("imputer '{}' at silo '{}': {e}", spec.name, silo.id))?,
            );
        }
        let merged = merge_stats(&parts).map_err(|e| anyhow!("imputer '{}': {e}", spec.name))?;
        fitted.push(fit(spec, &merged).map_err(|e| anyhow!("imputer '{}': {e}", spec.name))?);
    }
    Ok(fitted)
}

/// Install fitted imputers into every silo's registry.
pub fn with_fitted(experiment: &Experiment, fitted: &[FittedImputer]) -> Experiment {
    let mut out = experiment.clone();
    for silo in &mut out.silos {
        for f in fitted {
            silo.registry.set_fitted(f.clone());
        }
    }
    out
}

/// Rows kept when exporting an instance in certain-answers mode: tuples
/// containing labeled nulls are dropped (they are not certain).
pub fn certain_rows(relation: &Relation) -> Relation {
    let mut out = Relation::empty(relation.schema().clone());
    for row in relation.rows() {
        if row.iter().any(Value::is_labeled_null) {
            continue;
        }
        out.push_row(row.clone()).expect("schema unchanged");
    }
    out
}

/// Write one instance as per-relation CSVs under `dir`.
pub fn export_instance(
    instance: &TargetInstance,
    mode: QueryMode,
    dir: &Path,
    null_token: &str,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, relation) in instance.relations() {
        let relation = match mode {
            QueryMode::CertainAnswers => certain_rows(relation),
            QueryMode::Impute => relation.clone(),
        };
        write_csv(&relation, dir.join(format!("{name}.csv")), null_token)
            .with_context(|| format!("writing {name}.csv"))?;
    }
    Ok(())
}

/// Evaluate the training query per silo (impute mode over impute-mode
/// instances) and encode the answers against a federation-wide shared
/// vocabulary, so every learner produces aggregation-compatible datasets.
pub fn build_training_datasets(experiment: &Experiment) -> Result<Vec<(String, Dataset, f64)>> {
    let query_name = &experiment.config.training.query;
    let mut answers = Vec::new();
    for silo in &experiment.silos {
        let query = silo
            .program
            .query(query_name)
            .ok_or_else(|| anyhow!("training query '{query_name}' is not defined"))?;
        let instance = materialize_silo(experiment, silo, QueryMode::Impute)?;
        let rows = evaluate_query(query, &instance, QueryMode::Impute, &silo.registry)
            .map_err(|e| anyhow!("silo '{}': query '{query_name}': {e}", silo.id))?;
        answers.push((silo.id.clone(), rows, silo.step_rate));
    }

    let encodings: Vec<Encoding> = answers
        .iter()
        .map(|(id, rows, _)| {
            scan_encoding(rows, &experiment.feature_spec).map_err(|e| anyhow!("silo '{id}': {e}"))
        })
        .collect::<Result<_>>()?;
    let shared = merge_encodings(&encodings).map_err(|e| anyhow!("{e}"))?;

    answers
        .into_iter()
        .map(|(id, rows, step_rate)| {
            let dataset = encode_with(&rows, &shared).map_err(|e| anyhow!("silo '{id}': {e}"))?;
            Ok((id, dataset, step_rate))
        })
        .collect()
}

/// The partition scheme implied by the silos' materialized subject ids and
/// the training feature/label columns.
pub fn partition_scheme(experiment: &Experiment) -> Result<PartitionClass> {
    let mut profiles = Vec::new();
    for silo in &experiment.silos {
        let instance = materialize_silo(experiment, silo, QueryMode::CertainAnswers)?;
        let first_global = experiment.global.first().map(|s| s.name().to_string());
        let ids = first_global
            .and_then(|name| instance.relation(&name).cloned())
            .map(|rel| {
                rel.rows()
                    .iter()
                    .map(|row| row.first().map(|v| v.to_string()).unwrap_or_default())
                    .collect()
            })
            .unwrap_or_default();
        profiles.push(DatasetSchemaProfile {
            id_space: ids,
            feature_columns: experiment.feature_spec.feature_columns.clone(),
            label_column: experiment.feature_spec.label_column.clone(),
        });
    }
    classify_partitioning(&profiles).map_err(|e| anyhow!("{e}"))
}

/// Resolve the federation config against the encoded datasets (model width
/// and class count come from the shared encoding).
pub fn federation_config(
    experiment: &Experiment,
    datasets: &[(String, Dataset, f64)],
    seed_override: Option<u64>,
) -> Result<FederationConfig> {
    let fed = &experiment.config.federation;
    let (_, first, _) = datasets
        .first()
        .ok_or_else(|| anyhow!("no learners configured"))?;
    let d = first.d();
    let classes = first.class_count();

    let model = match fed.model.as_str() {
        "linear_regression" => ModelSpec::LinearRegression { d },
        "logistic_regression" => {
            if classes < 2 {
                bail!("logistic regression needs >= 2 classes, found {classes}");
            }
            ModelSpec::LogisticRegression { d, classes }
        }
        "mlp" => ModelSpec::Mlp {
            d,
            hidden: fed.hidden.unwrap_or(16),
            classes: classes.max(2),
        },
        other => bail!("unknown model '{other}'"),
    };

    let protocol = match fed.protocol.as_str() {
        "synchronous" => ProtocolSpec::Synchronous {
            local_epochs: fed.local_epochs.unwrap_or(1),
        },
        "asynchronous" => ProtocolSpec::Asynchronous {
            local_epochs: fed.local_epochs.unwrap_or(1),
            alpha: fed.alpha.unwrap_or(0.5),
            staleness_exponent: fed.staleness_exponent.unwrap_or(0.5),
        },
        "semi_synchronous" => ProtocolSpec::SemiSynchronous {
            period_secs: fed
                .period_secs
                .ok_or_else(|| anyhow!("semi_synchronous needs period_secs"))?,
        },
        other => bail!("unknown protocol '{other}'"),
    };

    Ok(FederationConfig {
        protocol,
        rounds: fed.rounds,
        participation_fraction: fed.participation_fraction,
        seed: seed_override.unwrap_or(experiment.config.experiment.seed),
        model,
        learning_rate: fed.learning_rate,
        batch_size: fed.batch_size,
        secure_aggregation: fed.secure_aggregation,
    })
}

pub struct RunArtifacts {
    pub log: RunLog,
    pub partition: PartitionClass,
    pub fitted: Vec<FittedImputer>,
}

/// The full driver pipeline. Partial logs are preserved on learner failure.
pub fn run_pipeline(
    experiment: &Experiment,
    seed_override: Option<u64>,
) -> Result<RunArtifacts, PipelineFailure> {
    let reports = validate_all(experiment);
    if reports.iter().any(|(_, r)| !r.is_ok()) {
        let mut message = String::new();
        for (silo, report) in &reports {
            if !report.is_ok() {
                message.push_str(&format!("silo '{silo}':\n{report}"));
            }
        }
        return Err(PipelineFailure::Validation(message));
    }

    let fitted = fit_imputers(experiment).map_err(PipelineFailure::Stage)?;
    let ready = with_fitted(experiment, &fitted);
    let partition = partition_scheme(&ready).map_err(PipelineFailure::Stage)?;
    let datasets = build_training_datasets(&ready).map_err(PipelineFailure::Stage)?;

    let config =
        federation_config(&ready, &datasets, seed_override).map_err(PipelineFailure::Stage)?;
    let learners: Vec<LearnerHandle> = datasets
        .into_iter()
        .map(|(id, dataset, step_rate)| LearnerHandle::new(id, dataset).with_step_rate(step_rate))
        .collect();

    match run_federation(&config, &learners, ExecutionMode::Simulated) {
        Ok(log) => Ok(RunArtifacts {
            log,
            partition,
            fitted,
        }),
        Err(RunFailure::Config(e)) => Err(PipelineFailure::Stage(anyhow!("{e}"))),
        Err(RunFailure::Learner {
            learner,
            message,
            partial,
        }) => Err(PipelineFailure::Learner {
            learner,
            message,
            partial,
        }),
    }
}

#[derive(Debug)]
pub enum PipelineFailure {
    /// Mapping validation findings; exit code 1.
    Validation(String),
    /// A pipeline stage failed (fitting, exchange, encoding, config).
    Stage(anyhow::Error),
    /// A learner raised during the run; the partial log is preserved.
    Learner {
        learner: String,
        message: String,
        partial: Box<RunLog>,
    },
}

/// Group query answers per silo for `cmd_query`.
pub fn query_answers(
    experiment: &Experiment,
    name: &str,
    mode: QueryMode,
) -> Result<BTreeMap<String, Relation>> {
    let mut out = BTreeMap::new();
    for silo in &experiment.silos {
        let query = silo
            .program
            .query(name)
            .ok_or_else(|| anyhow!("query '{name}' is not defined"))?;
        let instance = materialize_silo(experiment, silo, mode)?;
        let rows = evaluate_query(query, &instance, mode, &silo.registry)
            .map_err(|e| anyhow!("silo '{}': {e}", silo.id))?;
        out.insert(silo.id.clone(), rows);
    }
    Ok(out)
}
