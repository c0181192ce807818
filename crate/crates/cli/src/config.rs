//! Experiment configuration: one JSON file, versioned, unknown keys rejected.

use std::path::{Path, PathBuf};

use qdoe::copula::GaussianCopula;
use qdoe::csvio;
use qdoe::designs::Scheme;
use qdoe::distributions::DistributionSpec;
use qdoe::hsic::{Group, KernelSpec, TestSettings};
use qdoe::inputs::{BlockLaw, InputBlock, InputModel, Role, SamplingSettings};
use qdoe::models::{self, ModelSpec, VgGenerator};
use qdoe::quantizer::{CandidatePool, LloydSettings};
use qdoe::Matrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// A single value or a list of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![x.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// The eight flood-model inputs with their pairwise copula.
    Flood,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LawConfig {
    Independent {
        marginals: Vec<DistributionSpec>,
    },
    /// Gaussian copula given either as a full correlation matrix or as
    /// `[i, j, rho]` pairs over an identity.
    Copula {
        marginals: Vec<DistributionSpec>,
        #[serde(default)]
        correlation: Option<Vec<Vec<f64>>>,
        #[serde(default)]
        pairs: Option<Vec<(usize, usize, f64)>>,
    },
    /// Rows of a CSV file, path relative to the config file.
    Empirical {
        pool_csv: PathBuf,
    },
    VanGenuchten {},
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockConfig {
    pub names: Vec<String>,
    pub law: LawConfig,
    #[serde(default)]
    pub role: Option<Role>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupConfig {
    pub name: String,
    pub columns: Vec<String>,
    #[serde(default)]
    pub kernel: Option<KernelSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TestConfig {
    pub permutations: usize,
    pub alpha: f64,
}

impl Default for TestConfig {
    fn default() -> Self {
        Self { permutations: 500, alpha: 0.05 }
    }
}

fn default_repetitions() -> usize {
    100
}

fn default_pool_size() -> usize {
    10_000
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_output_kernel() -> KernelSpec {
    KernelSpec::scalar()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    #[serde(default)]
    pub model: Option<ModelSpec>,
    #[serde(default)]
    pub preset: Option<Preset>,
    #[serde(default)]
    pub inputs: Vec<BlockConfig>,
    /// Pool for `quantize`; otherwise the pool is drawn from the inputs.
    #[serde(default)]
    pub pool_csv: Option<PathBuf>,
    pub scheme: OneOrMany<Scheme>,
    pub n: OneOrMany<usize>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default = "default_pool_size")]
    pub pool_size: usize,
    #[serde(default)]
    pub lloyd: LloydSettings,
    #[serde(default = "default_output_kernel")]
    pub output_kernel: KernelSpec,
    #[serde(default)]
    pub test: TestConfig,
    #[serde(default)]
    pub groups: Option<Vec<GroupConfig>>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub shared_quantizer: bool,
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl ExperimentConfig {
    /// Parses and validates; JSON errors carry line and column.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| {
            invalid(format!("line {} column {}: {e}", e.line(), e.column()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<(Self, PathBuf), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid(format!("cannot read config {}: {e}", path.display())))?;
        let cfg = Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => invalid(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((cfg, base))
    }

    pub fn schemes(&self) -> Vec<Scheme> {
        self.scheme.to_vec()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.n.to_vec()
    }

    pub fn sampling(&self) -> SamplingSettings {
        SamplingSettings { pool_size: self.pool_size, lloyd: self.lloyd }
    }

    pub fn test_settings(&self) -> TestSettings {
        TestSettings { permutations: self.test.permutations, alpha: self.test.alpha }
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.version != SCHEMA_VERSION {
            return Err(invalid(format!("version: expected {SCHEMA_VERSION}, found {}", self.version)));
        }
        if self.schemes().is_empty() {
            return Err(invalid("scheme: at least one scheme is required"));
        }
        let sizes = self.sizes();
        if sizes.is_empty() || sizes.contains(&0) {
            return Err(invalid("n: every design size must be at least 1"));
        }
        if self.repetitions < 2 {
            return Err(invalid(format!("repetitions: must be at least 2, got {}", self.repetitions)));
        }
        if self.pool_size == 0 {
            return Err(invalid("pool_size: must be at least 1"));
        }
        self.lloyd.validate().map_err(|e| invalid(format!("lloyd: {e}")))?;
        self.output_kernel.validate().map_err(|e| invalid(format!("output_kernel: {e}")))?;
        self.test_settings().validate().map_err(|e| invalid(format!("test: {e}")))?;
        if let Some(m) = &self.model {
            m.validate().map_err(|e| invalid(format!("model: {e}")))?;
        }
        match (&self.preset, self.inputs.is_empty()) {
            (Some(_), false) => return Err(invalid("give either preset or inputs, not both")),
            (None, true) if self.pool_csv.is_none() => {
                return Err(invalid("inputs: declare input blocks, a preset, or a pool_csv"))
            }
            _ => {}
        }
        for (i, g) in self.groups.iter().flatten().enumerate() {
            if g.columns.is_empty() {
                return Err(invalid(format!("groups[{i}] '{}': no columns", g.name)));
            }
            if let Some(k) = &g.kernel {
                k.validate().map_err(|e| invalid(format!("groups[{i}].kernel: {e}")))?;
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON of this config with `output_dir` blanked,
    /// so the same experiment hashes alike wherever it writes.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        let json = serde_json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn input_model(&self, base: &Path) -> Result<InputModel, CliError> {
        let model = match self.preset {
            Some(Preset::Flood) => InputModel::new(models::flood_inputs()),
            None if !self.inputs.is_empty() => {
                let blocks = self
                    .inputs
                    .iter()
                    .enumerate()
                    .map(|(i, b)| {
                        let block = b.build(base).map_err(|e| match e {
                            CliError::Config(m) => invalid(format!("inputs[{i}]: {m}")),
                            other => other,
                        })?;
                        let role = b.role.unwrap_or_else(|| block.default_role());
                        Ok((block, role))
                    })
                    .collect::<Result<Vec<_>, CliError>>()?;
                InputModel::with_roles(blocks)
            }
            None => return Err(invalid("inputs: this command needs input blocks or a preset")),
        };
        Ok(model?)
    }

    /// Resolves named groups to column indices; defaults to one group per input block.
    pub fn groups(&self, inputs: &InputModel) -> Result<Vec<Group>, CliError> {
        let columns = inputs.columns();
        match &self.groups {
            None => {
                let mut at = 0;
                Ok(inputs
                    .blocks()
                    .map(|(b, _)| {
                        let g = Group::new(b.names.join("+"), (at..at + b.dim()).collect());
                        at += b.dim();
                        g
                    })
                    .collect())
            }
            Some(gs) => gs
                .iter()
                .map(|g| {
                    let idx = g
                        .columns
                        .iter()
                        .map(|c| {
                            columns
                                .iter()
                                .position(|x| x == c)
                                .ok_or_else(|| invalid(format!("group '{}': unknown input '{c}'", g.name)))
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    let mut group = Group::new(g.name.clone(), idx);
                    if let Some(k) = g.kernel {
                        group.kernel = k;
                    }
                    Ok(group)
                })
                .collect(),
        }
    }
}

/// Reads a headed numeric CSV into a pool.
pub fn read_pool(path: &Path) -> Result<(Vec<String>, CandidatePool), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("cannot read pool {}: {e}", path.display())))?;
    let (header, m) = csvio::read_table(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    Ok((header, CandidatePool::new(m)?))
}

impl BlockConfig {
    fn build(&self, base: &Path) -> Result<InputBlock, CliError> {
        let law = match &self.law {
            LawConfig::Independent { marginals } => BlockLaw::Independent { marginals: marginals.clone() },
            LawConfig::Copula { marginals, correlation, pairs } => {
                let d = marginals.len();
                let copula = match (correlation, pairs) {
                    (Some(rows), None) => {
                        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
                        GaussianCopula::new(Matrix::from_rows(&refs)?)?
                    }
                    (None, Some(p)) => GaussianCopula::from_pairs(d, p)?,
                    (None, None) => GaussianCopula::identity(d),
                    (Some(_), Some(_)) => return Err(invalid("give correlation or pairs, not both")),
                };
                BlockLaw::Copula { marginals: marginals.clone(), copula }
            }
            LawConfig::Empirical { pool_csv } => {
                let (_, pool) = read_pool(&base.join(pool_csv))?;
                BlockLaw::Empirical { pool }
            }
            LawConfig::VanGenuchten {} => BlockLaw::VanGenuchten(VgGenerator::new()),
        };
        Ok(InputBlock { names: self.names.clone(), law })
    }
}
