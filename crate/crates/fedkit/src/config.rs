//! Experiment configuration: one TOML file describing silos (sources,
//! mappings, normalization tables), the shared global schema and queries,
//! declared imputers and impute functions, the training task, and the
//! federation run itself.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use data_exchange::{FunctionRegistry, ImputeFunction, ImputeOutput, NormalizationTable};
use fed_model::FeatureSpec;
use imputation::{ColumnRef, ImputerKind, ImputerSpec};
use mapping_lang::{parse_program, MappingProgram};
use relational_core::{
    load_csv, parse_schema, ColumnType, NaiveDate, Relation, RelationSchema, Value,
};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentMeta,
    pub global: GlobalSection,
    #[serde(rename = "silo")]
    pub silos: Vec<SiloSection>,
    #[serde(default, rename = "imputer")]
    pub imputers: Vec<ImputerSection>,
    #[serde(default, rename = "function")]
    pub functions: Vec<FunctionSection>,
    pub training: TrainingSection,
    pub federation: FederationSection,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ExperimentMeta {
    pub name: String,
    pub seed: u64,
    pub output_dir: String,
    #[serde(default)]
    pub null_token: String,
}

#[derive(Debug, Clone, Deserialize)]
pub struct GlobalSection {
    /// Relation schema literals, e.g. `"subject(id:int, sex:str, re:str)"`.
    pub relations: Vec<String>,
    /// Path to the shared query definitions.
    pub queries: String,
}

#[derive(Debug, Clone, Deserialize)]
pub struct SiloSection {
    pub id: String,
    pub mapping: String,
    #[serde(rename = "source")]
    pub sources: Vec<SourceSection>,
    #[serde(default, rename = "normalization")]
    pub normalizations: Vec<NormalizationSection>,
    #[serde(default = "default_step_rate")]
    pub step_rate: f64,
}

fn default_step_rate() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
pub struct SourceSection {
    pub relation: String,
    pub csv: String,
}

#[derive(Debug, Clone, Deserialize)]
pub struct NormalizationSection {
    /// Function name used in this silo's mapping rules.
    pub function: String,
    pub table: String,
    pub csv: String,
    #[serde(default)]
    pub strict: bool,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ImputerSection {
    pub name: String,
    /// `relation.column` in the global schema.
    pub target: String,
    pub kind: String,
    pub value: Option<toml::Value>,
    pub features: Option<Vec<String>>,
    pub lambda: Option<f64>,
    pub one_hot: Option<bool>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct FunctionSection {
    pub name: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<OutputSection>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct OutputSection {
    pub imputer: String,
    pub passthrough: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct TrainingSection {
    pub query: String,
    pub features: Vec<String>,
    pub label: String,
}

#[derive(Debug, Clone, Deserialize)]
pub struct FederationSection {
    pub protocol: String,
    pub rounds: u64,
    pub local_epochs: Option<u64>,
    pub alpha: Option<f64>,
    pub staleness_exponent: Option<f64>,
    pub period_secs: Option<f64>,
    #[serde(default = "default_fraction")]
    pub participation_fraction: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    #[serde(default)]
    pub secure_aggregation: bool,
    pub model: String,
    pub hidden: Option<usize>,
}

fn default_fraction() -> f64 {
    1.0
}

/// One silo with everything loaded: its raw sources, its local mapping
/// program (shared queries attached), and its local function registry.
/// Mappings and normalization tables never leave the silo.
#[derive(Debug, Clone)]
pub struct Silo {
    pub id: String,
    pub sources: BTreeMap<String, Relation>,
    pub source_schemas: Vec<RelationSchema>,
    pub program: MappingProgram,
    pub registry: FunctionRegistry,
    pub step_rate: f64,
}

/// A fully loaded experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub base_dir: PathBuf,
    pub global: Vec<RelationSchema>,
    pub imputer_specs: Vec<ImputerSpec>,
    pub silos: Vec<Silo>,
    pub feature_spec: FeatureSpec,
}

impl Experiment {
    pub fn output_dir(&self) -> PathBuf {
        self.base_dir.join(&self.config.experiment.output_dir)
    }
}

/// Read and resolve an experiment. IO and shape problems surface here;
/// mapping syntax errors surface here too (the text must parse to load).
pub fn load_experiment(config_path: &Path) -> Result<Experiment> {
    let text = std::fs::read_to_string(config_path)
        .with_context(|| format!("cannot read config {}", config_path.display()))?;
    let config: ExperimentConfig = toml::from_str(&text).context("cannot parse config TOML")?;
    let base_dir = config_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));

    let mut global = Vec::new();
    for literal in &config.global.relations {
        global.push(parse_schema(literal).map_err(|e| anyhow!("global schema: {e}"))?);
    }

    let imputer_specs = build_imputer_specs(&config, &global)?;

    let queries_path = base_dir.join(&config.global.queries);
    let queries_text = std::fs::read_to_string(&queries_path)
        .with_context(|| format!("cannot read queries {}", queries_path.display()))?;

    if config.silos.is_empty() {
        bail!("no silos configured");
    }
    let mut silos = Vec::new();
    for section in &config.silos {
        silos.push(load_silo(
            section,
            &config,
            &imputer_specs,
            &base_dir,
            &queries_text,
        )?);
    }

    let feature_spec = FeatureSpec {
        feature_columns: config.training.features.clone(),
        label_column: config.training.label.clone(),
    };

    Ok(Experiment {
        config,
        base_dir,
        global,
        imputer_specs,
        silos,
        feature_spec,
    })
}

fn build_imputer_specs(
    config: &ExperimentConfig,
    global: &[RelationSchema],
) -> Result<Vec<ImputerSpec>> {
    let mut specs = Vec::new();
    for section in &config.imputers {
        let (relation, column) = section
            .target
            .split_once('.')
            .ok_or_else(|| anyhow!("imputer '{}': target must be relation.column", section.name))?;
        let schema = global
            .iter()
            .find(|s| s.name() == relation)
            .ok_or_else(|| anyhow!("imputer '{}': unknown relation '{relation}'", section.name))?;
        let target_type = schema
            .column_type(column)
            .ok_or_else(|| anyhow!("imputer '{}': unknown column '{column}'", section.name))?;
        let kind =
            match section.kind.as_str() {
                "constant" => {
                    let value = section.value.as_ref().ok_or_else(|| {
                        anyhow!("imputer '{}': constant needs a value", section.name)
                    })?;
                    ImputerKind::Constant {
                        value: toml_value_to_value(value, target_type)?,
                    }
                }
                "mean" => ImputerKind::Mean,
                "mode" => ImputerKind::Mode,
                "ridge" => ImputerKind::Ridge {
                    features: section.features.clone().ok_or_else(|| {
                        anyhow!("imputer '{}': ridge needs features", section.name)
                    })?,
                    lambda: section.lambda.unwrap_or(1.0),
                    one_hot: section.one_hot.unwrap_or(true),
                },
                other => bail!("imputer '{}': unknown kind '{other}'", section.name),
            };
        specs.push(
            ImputerSpec::new(
                section.name.clone(),
                ColumnRef::new(relation, column),
                target_type,
                kind,
            )
            .map_err(|e| anyhow!("{e}"))?,
        );
    }
    Ok(specs)
}

fn toml_value_to_value(v: &toml::Value, target: ColumnType) -> Result<Value> {
    let value = match (v, target) {
        (toml::Value::Float(f), ColumnType::Float) => Value::Float(*f),
        (toml::Value::Integer(i), ColumnType::Float) => Value::Float(*i as f64),
        (toml::Value::Integer(i), ColumnType::Int) => Value::Int(*i),
        (toml::Value::String(s), ColumnType::Str) => Value::Str(s.clone()),
        (toml::Value::String(s), ColumnType::Date) => Value::Date(
            NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| anyhow!("bad date: {e}"))?,
        ),
        (v, t) => bail!("constant {v} does not fit target type {t}"),
    };
    Ok(value)
}

fn load_silo(
    section: &SiloSection,
    config: &ExperimentConfig,
    imputer_specs: &[ImputerSpec],
    base_dir: &Path,
    queries_text: &str,
) -> Result<Silo> {
    let mut registry = FunctionRegistry::new();
    for spec in imputer_specs {
        registry.add_imputer_spec(spec.clone());
    }
    for normalization in &section.normalizations {
        let path = base_dir.join(&normalization.csv);
        let table = NormalizationTable::from_csv(&path, &normalization.table, normalization.strict)
            .map_err(|e| {
                anyhow!(
                    "silo '{}': normalization {}: {e}",
                    section.id,
                    path.display()
                )
            })?;
        registry.add_normalization(&normalization.function, table);
    }
    for function in &config.functions {
        registry
            .add_impute_function(ImputeFunction {
                name: function.name.clone(),
                input_names: function.inputs.clone(),
                outputs: function
                    .outputs
                    .iter()
                    .map(|o| ImputeOutput {
                        imputer: o.imputer.clone(),
                        passthrough: o.passthrough.clone(),
                    })
                    .collect(),
            })
            .map_err(|e| anyhow!("silo '{}': {e}", section.id))?;
    }

    let mut sources = BTreeMap::new();
    let mut source_schemas = Vec::new();
    for source in &section.sources {
        let schema = parse_schema(&source.relation)
            .map_err(|e| anyhow!("silo '{}': source schema: {e}", section.id))?;
        let path = base_dir.join(&source.csv);
        let relation = load_csv(&path, &schema, &config.experiment.null_token)
            .map_err(|e| anyhow!("silo '{}': {}: {e}", section.id, path.display()))?;
        sources.insert(schema.name().to_string(), relation);
        source_schemas.push(schema);
    }

    let signatures = registry.signatures();
    let mapping_path = base_dir.join(&section.mapping);
    let mapping_text = std::fs::read_to_string(&mapping_path)
        .with_context(|| format!("cannot read mapping {}", mapping_path.display()))?;
    let rules_program = parse_program(&mapping_text, &signatures)
        .map_err(|e| anyhow!("silo '{}': mapping: {e}", section.id))?;
    let queries_program =
        parse_program(queries_text, &signatures).map_err(|e| anyhow!("queries: {e}"))?;

    let program = MappingProgram {
        rules: rules_program.rules,
        queries: queries_program.queries,
        signatures,
    };

    Ok(Silo {
        id: section.id.clone(),
        sources,
        source_schemas,
        program,
        registry,
        step_rate: section.step_rate,
    })
}
