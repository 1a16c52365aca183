//! Experiment configuration: strict JSON, one file per experiment.

use std::path::{Path, PathBuf};

use opidmd_core::generators::{
    AdvDiff1DConfig, Advection2DConfig, CylinderSource, LorenzConfig, Msd5Config, Schrodinger1DConfig,
};
use opidmd_core::online::DEFAULT_RLS_ALPHA;
use opidmd_core::prox::{ConstraintSpec, StepRule};
use opidmd_core::snapshots::SplitSpec;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub generator: GeneratorSpec,
    #[serde(default)]
    pub noise: NoiseConfig,
    pub split: SplitSpec,
    pub methods: Vec<MethodSpec>,
    #[serde(default)]
    pub eval: EvalSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum GeneratorSpec {
    Advection2d(Advection2DConfig),
    Schrodinger1d(Schrodinger1DConfig),
    Advdiff1d(AdvDiff1DConfig),
    Lorenz(LorenzConfig),
    Msd5(Msd5Config),
    Cylinder(CylinderSource),
    /// Any series already in the snapshot CSV layout.
    Csv(CsvSource),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSource {
    pub path: PathBuf,
}

impl GeneratorSpec {
    pub fn id(&self) -> &'static str {
        match self {
            GeneratorSpec::Advection2d(_) => "advection2d",
            GeneratorSpec::Schrodinger1d(_) => "schrodinger1d",
            GeneratorSpec::Advdiff1d(_) => "advdiff1d",
            GeneratorSpec::Lorenz(_) => "lorenz",
            GeneratorSpec::Msd5(_) => "msd5",
            GeneratorSpec::Cylinder(_) => "cylinder",
            GeneratorSpec::Csv(_) => "csv",
        }
    }
}

/// Amplitude-proportional Gaussian noise; the seed comes from the experiment.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSpec {
    /// Modes kept for prediction; all available when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_used: Option<usize>,
    /// Predicted columns; the whole test window when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(default)]
    pub per_channel: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialOperator {
    #[default]
    Zero,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MethodSpec {
    /// Exact DMD on the noise-free training window (reference row).
    TrueDmd {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        r: Option<usize>,
    },
    ExactDmd {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        r: Option<usize>,
    },
    StandardDmd,
    Ridge {
        lambda: f64,
    },
    BatchPidmd {
        constraint: ConstraintSpec,
        iters: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        step: Option<StepRule>,
    },
    Opidmd {
        constraint: ConstraintSpec,
        step: StepRule,
        #[serde(default = "one")]
        epochs: usize,
        #[serde(default)]
        init: InitialOperator,
    },
    OnlineDmd {
        #[serde(default = "unit")]
        rho: f64,
        #[serde(default = "default_alpha")]
        alpha: f64,
    },
}

fn one() -> usize {
    1
}

fn unit() -> f64 {
    1.0
}

fn default_alpha() -> f64 {
    DEFAULT_RLS_ALPHA
}

impl MethodSpec {
    pub fn id(&self) -> &'static str {
        match self {
            MethodSpec::TrueDmd { .. } => "true_dmd",
            MethodSpec::ExactDmd { .. } => "exact_dmd",
            MethodSpec::StandardDmd => "standard_dmd",
            MethodSpec::Ridge { .. } => "ridge",
            MethodSpec::BatchPidmd { .. } => "batch_pidmd",
            MethodSpec::Opidmd { .. } => "opidmd",
            MethodSpec::OnlineDmd { .. } => "online_dmd",
        }
    }

    pub fn constraint(&self) -> Option<&ConstraintSpec> {
        match self {
            MethodSpec::BatchPidmd { constraint, .. } | MethodSpec::Opidmd { constraint, .. } => Some(constraint),
            _ => None,
        }
    }

    /// Row label, unique within a typical experiment.
    pub fn label(&self) -> String {
        match self {
            MethodSpec::TrueDmd { r: Some(r) } | MethodSpec::ExactDmd { r: Some(r) } => format!("{}(r={r})", self.id()),
            MethodSpec::Ridge { lambda } => format!("ridge(lambda={lambda:e})"),
            MethodSpec::BatchPidmd { constraint, .. } => format!("batch_pidmd({})", constraint_label(constraint)),
            MethodSpec::Opidmd { constraint, step, .. } => {
                let step = match step {
                    StepRule::Fixed { step } => format!("step={step:e}"),
                    StepRule::Backtracking { t_init, beta } => format!("backtracking={t_init:e}/{beta}"),
                };
                format!("opidmd({},{step})", constraint_label(constraint))
            }
            MethodSpec::OnlineDmd { rho, alpha } => format!("online_dmd(rho={rho},alpha={alpha:e})"),
            _ => self.id().to_string(),
        }
    }

    /// Label reduced to characters safe in file names.
    pub fn file_stem(&self) -> String {
        self.label()
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
            .collect::<String>()
            .trim_matches('_')
            .to_string()
    }
}

fn constraint_label(c: &ConstraintSpec) -> String {
    match c.lambda() {
        l if l > 0.0 => format!("{},lambda={l:e}", c.id()),
        _ => c.id().to_string(),
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::Config(format!("invalid config at `{path}`: {}", e.inner()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config and resolves relative data paths against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        if let Some(base) = path.parent() {
            cfg.resolve_paths(base);
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut self.generator {
            GeneratorSpec::Cylinder(src) => fix(&mut src.path),
            GeneratorSpec::Csv(src) => fix(&mut src.path),
            _ => {}
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.methods.is_empty() {
            return Err(CliError::Config("config `methods` must list at least one method".into()));
        }
        if !(self.noise.ratio >= 0.0 && self.noise.ratio.is_finite()) {
            return Err(CliError::Config(format!("`noise.ratio` must be finite and >= 0, got {}", self.noise.ratio)));
        }
        if self.split.m_test == 0 {
            return Err(CliError::Config("`split.m_test` must be >= 1".into()));
        }
        if let Some(h) = self.eval.horizon {
            if h == 0 || h > self.split.m_test {
                return Err(CliError::Config(format!(
                    "`eval.horizon` must lie in 1..={}, got {h}",
                    self.split.m_test
                )));
            }
        }
        if self.eval.r_used == Some(0) {
            return Err(CliError::Config("`eval.r_used` must be >= 1".into()));
        }
        for (i, m) in self.methods.iter().enumerate() {
            let bad = |msg: String| Err(CliError::Config(format!("`methods[{i}]`: {msg}")));
            match m {
                MethodSpec::Opidmd { constraint, step, epochs, .. } => {
                    constraint.validate().or_else(|e| bad(e.to_string()))?;
                    step.validate().or_else(|e| bad(e.to_string()))?;
                    if *epochs == 0 {
                        return bad("epochs must be >= 1".into());
                    }
                }
                MethodSpec::BatchPidmd { constraint, iters, step } => {
                    constraint.validate().or_else(|e| bad(e.to_string()))?;
                    if let Some(s) = step {
                        s.validate().or_else(|e| bad(e.to_string()))?;
                    }
                    if *iters == 0 {
                        return bad("iters must be >= 1".into());
                    }
                }
                MethodSpec::Ridge { lambda } if !(*lambda >= 0.0) => return bad("lambda must be >= 0".into()),
                MethodSpec::OnlineDmd { rho, alpha } if !(*rho > 0.0 && *rho <= 1.0 && *alpha > 0.0) => {
                    return bad("online_dmd needs 0 < rho <= 1 and alpha > 0".into())
                }
                MethodSpec::TrueDmd { r: Some(0) } | MethodSpec::ExactDmd { r: Some(0) } => {
                    return bad("rank must be >= 1".into())
                }
                _ => {}
            }
        }
        Ok(())
    }
}
