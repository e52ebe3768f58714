use std::collections::BTreeMap;
use std::path::Path;

use imputation::{FittedImputer, ImputerSpec};
use mapping_lang::{FunctionKind, FunctionSig, FunctionSignatures};
use relational_core::{load_csv, parse_schema, Value};

use crate::ExchangeError;

/// A value normalization table, e.g. mapping source-specific anatomical or
/// diagnostic codes to the federation's canonical vocabulary.
#[derive(Debug, Clone)]
pub struct NormalizationTable {
    name: String,
    entries: BTreeMap<String, String>,
    strict: bool,
}

impl NormalizationTable {
    pub fn new(name: impl Into<String>, entries: BTreeMap<String, String>, strict: bool) -> Self {
        NormalizationTable {
            name: name.into(),
            entries,
            strict,
        }
    }

    /// Load a two-column CSV (`source,normalized`).
    pub fn from_csv(
        path: impl AsRef<Path>,
        name: impl Into<String>,
        strict: bool,
    ) -> Result<Self, ExchangeError> {
        let schema = parse_schema("normalization(source:str, normalized:str)").unwrap();
        let rel = load_csv(path, &schema, "\u{0}")?;
        let mut entries = BTreeMap::new();
        for row in rel.rows() {
            if let (Value::Str(from), Value::Str(to)) = (&row[0], &row[1]) {
                entries.insert(from.clone(), to.clone());
            }
        }
        Ok(NormalizationTable::new(name, entries, strict))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Look up a source value. An unmapped value is an error in strict mode
    /// and `Missing` otherwise.
    pub fn lookup(&self, value: &str) -> Result<Value, ExchangeError> {
        match self.entries.get(value) {
            Some(normalized) => Ok(Value::Str(normalized.clone())),
            None if self.strict => Err(ExchangeError::MissingNormalizationEntry {
                table: self.name.clone(),
                value: value.to_string(),
            }),
            None => Ok(Value::Missing),
        }
    }
}

/// One output slot of an impute function: which declared imputer produces it,
/// and optionally which input is passed through unchanged when present.
#[derive(Debug, Clone)]
pub struct ImputeOutput {
    pub imputer: String,
    pub passthrough: Option<String>,
}

/// A multi-output imputation predicate usable in mapping rules, e.g.
/// `impute_f1(sex, age, re, mmse, dx, moca_i, dx_i)`. Each output column has
/// its own imputer; the named inputs form the feature assignment.
#[derive(Debug, Clone)]
pub struct ImputeFunction {
    pub name: String,
    pub input_names: Vec<String>,
    pub outputs: Vec<ImputeOutput>,
}

/// Everything interpreted atoms need at execution time: the builtin `minus`,
/// normalization tables bound to function names, impute functions, and the
/// declared (and, once fitted, trained) imputers.
#[derive(Debug, Clone, Default)]
pub struct FunctionRegistry {
    normalize: BTreeMap<String, NormalizationTable>,
    impute_functions: BTreeMap<String, ImputeFunction>,
    imputer_specs: BTreeMap<String, ImputerSpec>,
    fitted: BTreeMap<String, FittedImputer>,
    column_imputers: BTreeMap<(String, String), String>,
}

impl FunctionRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_normalization(
        &mut self,
        function_name: impl Into<String>,
        table: NormalizationTable,
    ) {
        self.normalize.insert(function_name.into(), table);
    }

    /// Declare an imputer. Its target column is automatically registered for
    /// the column-level imputation pass.
    pub fn add_imputer_spec(&mut self, spec: ImputerSpec) {
        self.column_imputers.insert(
            (spec.target.relation.clone(), spec.target.column.clone()),
            spec.name.clone(),
        );
        self.imputer_specs.insert(spec.name.clone(), spec);
    }

    pub fn add_impute_function(&mut self, function: ImputeFunction) -> Result<(), ExchangeError> {
        for output in &function.outputs {
            if !self.imputer_specs.contains_key(&output.imputer) {
                return Err(ExchangeError::InvalidImputeFunction {
                    function: function.name.clone(),
                    message: format!("references undeclared imputer '{}'", output.imputer),
                });
            }
            if let Some(p) = &output.passthrough {
                if !function.input_names.contains(p) {
                    return Err(ExchangeError::InvalidImputeFunction {
                        function: function.name.clone(),
                        message: format!("passthrough '{p}' is not an input"),
                    });
                }
            }
        }
        self.impute_functions
            .insert(function.name.clone(), function);
        Ok(())
    }

    /// Install a fitted imputer (keyed by its spec name).
    pub fn set_fitted(&mut self, fitted: FittedImputer) {
        self.fitted.insert(fitted.spec.name.clone(), fitted);
    }

    pub fn imputer_specs(&self) -> impl Iterator<Item = &ImputerSpec> {
        self.imputer_specs.values()
    }

    pub fn imputer_spec(&self, name: &str) -> Option<&ImputerSpec> {
        self.imputer_specs.get(name)
    }

    pub fn fitted(&self, name: &str) -> Result<&FittedImputer, ExchangeError> {
        self.fitted
            .get(name)
            .ok_or_else(|| ExchangeError::ImputerNotFitted(name.to_string()))
    }

    pub fn fitted_imputers(&self) -> impl Iterator<Item = &FittedImputer> {
        self.fitted.values()
    }

    pub(crate) fn normalize_table(&self, function: &str) -> Option<&NormalizationTable> {
        self.normalize.get(function)
    }

    pub(crate) fn impute_function(&self, function: &str) -> Option<&ImputeFunction> {
        self.impute_functions.get(function)
    }

    /// The fitted imputer registered for a column, if any.
    pub fn column_imputer(&self, relation: &str, column: &str) -> Option<&FittedImputer> {
        let name = self
            .column_imputers
            .get(&(relation.to_string(), column.to_string()))?;
        self.fitted.get(name)
    }

    /// Name of the imputer declared for a column, fitted or not.
    pub fn column_imputer_name(&self, relation: &str, column: &str) -> Option<&str> {
        self.column_imputers
            .get(&(relation.to_string(), column.to_string()))
            .map(|s| s.as_str())
    }

    /// Function signature table implied by the registry, for the parser.
    pub fn signatures(&self) -> FunctionSignatures {
        let mut sigs = mapping_lang::builtin_signatures();
        for name in self.normalize.keys() {
            sigs.insert(
                name.clone(),
                FunctionSig {
                    inputs: 1,
                    outputs: 1,
                    kind: FunctionKind::Normalize,
                },
            );
        }
        for (name, f) in &self.impute_functions {
            sigs.insert(
                name.clone(),
                FunctionSig {
                    inputs: f.input_names.len(),
                    outputs: f.outputs.len(),
                    kind: FunctionKind::Impute,
                },
            );
        }
        sigs
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn temp_table() -> NormalizationTable {
        NormalizationTable::new(
            "anatomy",
            BTreeMap::from([
                ("LTemp lobe".to_string(), "Left Temporal Lobe".to_string()),
                ("LTemporal".to_string(), "Left Temporal Lobe".to_string()),
                ("x".to_string(), "x".to_string()),
            ]),
            false,
        )
    }

    #[test]
    fn lookup_maps_source_variants_to_one_value() {
        let table = temp_table();
        assert_eq!(
            table.lookup("LTemporal").unwrap(),
            Value::Str("Left Temporal Lobe".into())
        );
        assert_eq!(
            table.lookup("LTemp lobe").unwrap(),
            Value::Str("Left Temporal Lobe".into())
        );
    }

    #[test]
    fn lenient_lookup_of_unmapped_value_is_missing() {
        assert_eq!(temp_table().lookup("RFrontal").unwrap(), Value::Missing);
    }

    #[test]
    fn strict_lookup_of_unmapped_value_errors() {
        let table = NormalizationTable::new("t", BTreeMap::new(), true);
        assert!(matches!(
            table.lookup("nope"),
            Err(ExchangeError::MissingNormalizationEntry { .. })
        ));
    }

    #[test]
    fn identity_entry_maps_to_itself() {
        assert_eq!(temp_table().lookup("x").unwrap(), Value::Str("x".into()));
    }

    #[test]
    fn impute_function_wiring_is_checked() {
        let mut registry = FunctionRegistry::new();
        let err = registry
            .add_impute_function(ImputeFunction {
                name: "impute_f1".into(),
                input_names: vec!["sex".into()],
                outputs: vec![ImputeOutput {
                    imputer: "ghost".into(),
                    passthrough: None,
                }],
            })
            .unwrap_err();
        assert!(matches!(err, ExchangeError::InvalidImputeFunction { .. }));
    }
}
