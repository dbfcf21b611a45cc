//! Run configuration: a TOML file, then command-line overrides.

use std::path::{Path, PathBuf};

use linkreg::simlab::{Method, SimulationScenario};
use linkreg::Family;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const OUTPUT_DIR_ENV: &str = "LINKREG_OUTPUT_DIR";
const DEFAULT_OUTPUT_DIR: &str = "linkreg-out";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<Family>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataConfig>,
    #[serde(default)]
    pub method: MethodConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulationScenario>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recover: Option<RecoverConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub casestudy: Option<CaseStudyConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    #[default]
    None,
    Sqrt,
}

/// Indicator columns for every level of `column` except the reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Categorical {
    pub column: String,
    /// Defaults to the smallest level.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
}

/// A single 0/1 column: `column ∈ levels`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Indicator {
    pub name: String,
    pub column: String,
    pub levels: Vec<String>,
}

/// `name = scale · column`, optionally rounded to the nearest integer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Derived {
    pub name: String,
    pub column: String,
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default)]
    pub round: bool,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    In,
    NotIn,
}

/// Keep a row only if it satisfies the rule. Comparisons are numeric; `in` and
/// `not_in` compare the raw cell text against `values`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Filter {
    pub column: String,
    pub op: FilterOp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub path: PathBuf,
    #[serde(default = "comma")]
    pub delimiter: char,
    pub response: String,
    #[serde(default)]
    pub transform: Transform,
    #[serde(default = "yes")]
    pub intercept: bool,
    /// Numeric covariates, used as they are.
    #[serde(default)]
    pub covariates: Vec<String>,
    #[serde(default)]
    pub categorical: Vec<Categorical>,
    #[serde(default)]
    pub indicators: Vec<Indicator>,
    /// Pairs of term names; a categorical column stands for all its indicators.
    #[serde(default)]
    pub interactions: Vec<[String; 2]>,
    #[serde(default)]
    pub derived: Vec<Derived>,
    #[serde(default)]
    pub filters: Vec<Filter>,
    /// Rows with equal values in all of these columns form a block.
    #[serde(default)]
    pub blocking: Vec<String>,
    /// Shuffle responses within blocks before fitting, recording the truth.
    #[serde(default)]
    pub inject_mismatch: bool,
}

fn comma() -> char {
    ','
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodConfig {
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambdas: Option<Vec<f64>>,
    /// `λ = C·σ_y·√(log(n + d)/n)` with `σ_y` from the variance function at the responses.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prefactors: Option<Vec<f64>>,
    #[serde(default)]
    pub validation_fraction: f64,
}

fn default_methods() -> Vec<Method> {
    vec![Method::Naive, Method::Proposed]
}

impl Default for MethodConfig {
    fn default() -> Self {
        MethodConfig {
            methods: default_methods(),
            lambda: None,
            lambdas: None,
            prefactors: None,
            validation_fraction: 0.0,
        }
    }
}

pub const DEFAULT_PREFACTORS: [f64; 8] = [0.05, 0.1, 0.2, 0.3, 0.5, 0.75, 1.0, 2.0];

/// How λ is set for the penalized methods.
#[derive(Debug, Clone, PartialEq)]
pub enum LambdaSpec {
    Fixed(Vec<f64>),
    Prefactors(Vec<f64>),
}

impl MethodConfig {
    pub fn lambda_spec(&self) -> LambdaSpec {
        if let Some(l) = self.lambda {
            LambdaSpec::Fixed(vec![l])
        } else if let Some(ls) = &self.lambdas {
            LambdaSpec::Fixed(ls.clone())
        } else {
            LambdaSpec::Prefactors(self.prefactors.clone().unwrap_or_else(|| DEFAULT_PREFACTORS.to_vec()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Ndtext,
    Tsv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
    /// Keep per-fit wall times in the records (not reproducible byte for byte).
    #[serde(default)]
    pub runtime: bool,
}

fn default_formats() -> Vec<Format> {
    vec![Format::Ndtext, Format::Tsv]
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: None, formats: default_formats(), runtime: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoverConfig {
    /// Penalized method whose `β̂` drives the sorting step.
    #[serde(default = "constrained")]
    pub method: Method,
    /// Refit the naive model on the corrected responses.
    #[serde(default = "yes")]
    pub refit: bool,
}

fn constrained() -> Method {
    Method::Constrained
}

impl Default for RecoverConfig {
    fn default() -> Self {
        RecoverConfig { method: Method::Constrained, refit: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseStudyConfig {
    #[serde(default = "hundred")]
    pub replications: usize,
    /// Column sets known to the analyst. The first is the linkage key used to
    /// shuffle responses; the others must be subsets of it.
    pub blocking_sets: Vec<Vec<String>>,
    #[serde(default = "default_case_prefactors")]
    pub prefactors: Vec<f64>,
    #[serde(default = "fifth")]
    pub validation_fraction: f64,
}

fn hundred() -> usize {
    100
}

fn fifth() -> f64 {
    0.2
}

fn default_case_prefactors() -> Vec<f64> {
    vec![0.02, 0.05, 0.1, 0.2, 0.3, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0]
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("resolved config serializes")
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    /// Flag > config file > environment > built-in default.
    pub fn resolve_output_dir(&mut self, flag: Option<PathBuf>) {
        let dir = flag
            .or_else(|| self.output.dir.clone())
            .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR));
        self.output.dir = Some(dir);
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output.dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
    }

    pub fn family(&self) -> Result<&Family, CliError> {
        self.family.as_ref().ok_or_else(|| field("family", "missing"))
    }

    pub fn data(&self) -> Result<&DataConfig, CliError> {
        self.data.as_ref().ok_or_else(|| field("data", "missing"))
    }

    /// Checks that do not need the data file.
    pub fn validate(&self) -> Result<(), CliError> {
        let m = &self.method;
        if !(0.0..=0.5).contains(&m.validation_fraction) {
            return Err(field("method.validation_fraction", format!("must lie in [0, 0.5], got {}", m.validation_fraction)));
        }
        if m.methods.is_empty() {
            return Err(field("method.methods", "must list at least one method"));
        }
        let set = [m.lambda.is_some(), m.lambdas.is_some(), m.prefactors.is_some()];
        if set.iter().filter(|&&b| b).count() > 1 {
            return Err(field("method.lambda", "give at most one of lambda, lambdas, prefactors"));
        }
        let grid: Vec<f64> = match m.lambda_spec() {
            LambdaSpec::Fixed(v) | LambdaSpec::Prefactors(v) => v,
        };
        if grid.is_empty() || grid.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(field("method.lambda", "values must be finite and non-negative, at least one"));
        }
        if self.output.formats.is_empty() {
            return Err(field("output.formats", "must list at least one format"));
        }
        if let Some(d) = &self.data {
            d.validate()?;
        }
        if let Some(s) = &self.simulate {
            s.validate().map_err(|e| CliError::Config(format!("simulate.{}", strip_invalid(&e.to_string()))))?;
        }
        if let Some(r) = &self.recover {
            if !r.method.uses_lambda() {
                return Err(field("recover.method", "must be `proposed` or `constrained`"));
            }
        }
        if let Some(c) = &self.casestudy {
            c.validate()?;
        }
        Ok(())
    }
}

impl DataConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.response.trim().is_empty() {
            return Err(field("data.response", "must name exactly one column"));
        }
        for (i, f) in self.filters.iter().enumerate() {
            let needs_list = matches!(f.op, FilterOp::In | FilterOp::NotIn);
            if needs_list && f.values.is_empty() {
                return Err(field(&format!("data.filters[{i}].values"), "required for in / not_in"));
            }
            if !needs_list && f.value.is_none() {
                return Err(field(&format!("data.filters[{i}].value"), "required for numeric comparisons"));
            }
        }
        for (i, d) in self.derived.iter().enumerate() {
            if !d.scale.is_finite() {
                return Err(field(&format!("data.derived[{i}].scale"), "must be finite"));
            }
        }
        for (i, c) in self.indicators.iter().enumerate() {
            if c.levels.is_empty() {
                return Err(field(&format!("data.indicators[{i}].levels"), "must not be empty"));
            }
        }
        if !self.intercept && self.covariates.is_empty() && self.categorical.is_empty() && self.indicators.is_empty() {
            return Err(field("data.covariates", "the model has no terms"));
        }
        Ok(())
    }
}

impl CaseStudyConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.replications == 0 {
            return Err(field("casestudy.replications", "must be at least 1"));
        }
        let Some(key) = self.blocking_sets.first() else {
            return Err(field("casestudy.blocking_sets", "must list at least the linkage key"));
        };
        if key.is_empty() {
            return Err(field("casestudy.blocking_sets[0]", "the linkage key needs at least one column"));
        }
        for (j, set) in self.blocking_sets.iter().enumerate().skip(1) {
            if let Some(c) = set.iter().find(|c| !key.contains(c)) {
                return Err(field(&format!("casestudy.blocking_sets[{j}]"), format!("`{c}` is not part of the linkage key")));
            }
        }
        if self.prefactors.is_empty() || self.prefactors.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(field("casestudy.prefactors", "need at least one positive finite pre-factor"));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction <= 0.5) {
            return Err(field("casestudy.validation_fraction", format!("must lie in (0, 0.5], got {}", self.validation_fraction)));
        }
        Ok(())
    }
}

pub(crate) fn field(name: &str, why: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{name}: {why}"))
}

fn strip_invalid(msg: &str) -> &str {
    msg.strip_prefix("invalid input: ").unwrap_or(msg)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        seed = 7
        [family]
        kind = "poisson"
        [data]
        path = "x.csv"
        response = "y"
        covariates = ["a"]
    "#;

    #[test]
    fn parses_and_round_trips() {
        let c = RunConfig::from_toml(MINIMAL).unwrap();
        c.validate().unwrap();
        assert_eq!(c.seed(), 7);
        assert_eq!(c.method.methods, vec![Method::Naive, Method::Proposed]);
        let again = RunConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn unknown_fields_are_named() {
        let err = RunConfig::from_toml(&format!("{MINIMAL}\nbogus = 1\n")).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
        let err = RunConfig::from_toml("[method]\nvalidaton_fraction = 0.1\n").unwrap_err();
        assert!(err.to_string().contains("validaton_fraction"), "{err}");
    }

    #[test]
    fn semantic_errors_are_named() {
        let mut c = RunConfig::from_toml(MINIMAL).unwrap();
        c.method.validation_fraction = 0.7;
        assert!(c.validate().unwrap_err().to_string().starts_with("config error: method.validation_fraction"));
        let mut c = RunConfig::from_toml(MINIMAL).unwrap();
        c.method.lambda = Some(0.1);
        c.method.prefactors = Some(vec![1.0]);
        assert!(c.validate().unwrap_err().to_string().contains("method.lambda"));
        let c = RunConfig::from_toml(&format!("{MINIMAL}\n[[data.filters]]\ncolumn = \"a\"\nop = \"gt\"\n")).unwrap();
        assert!(c.validate().unwrap_err().to_string().contains("data.filters[0].value"));
    }

    #[test]
    fn family_validation_surfaces() {
        let err = RunConfig::from_toml("[family]\nkind = \"poisson\"\ndispersion = 2.0\n").unwrap_err();
        assert!(err.to_string().contains("dispersion"), "{err}");
    }

    #[test]
    fn casestudy_subsets_are_checked() {
        let c = CaseStudyConfig {
            replications: 1,
            blocking_sets: vec![vec!["a".into(), "b".into()], vec!["c".into()]],
            prefactors: vec![1.0],
            validation_fraction: 0.2,
        };
        assert!(c.validate().unwrap_err().to_string().contains("blocking_sets[1]"));
    }

    #[test]
    fn output_dir_precedence() {
        let mut c = RunConfig::from_toml(MINIMAL).unwrap();
        c.output.dir = Some("from-config".into());
        c.resolve_output_dir(Some("from-flag".into()));
        assert_eq!(c.output_dir(), PathBuf::from("from-flag"));
        let mut c = RunConfig::from_toml(MINIMAL).unwrap();
        c.output.dir = Some("from-config".into());
        c.resolve_output_dir(None);
        assert_eq!(c.output_dir(), PathBuf::from("from-config"));
    }
}
