//! Experiment configuration files (TOML). The schema is documented in
//! `configs/SCHEMA.md`.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use onsager_core::kernel::{assemble, KernelMatrix, KernelSpec};
use onsager_core::limit::selection::Identity;
use onsager_core::limit::{SelectionSpec, ZeroSet};
use onsager_core::solver::{validate_schedule, InitialDensity, SolverConfig};
use onsager_core::space::{build_space, AxisSpec, DiscreteSpace, ProductMetric, Quadrature};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::io;

pub const CONFIG_VERSION: u32 = 1;

pub const EXAMPLE1: &str = include_str!("../configs/example1.toml");
pub const EXAMPLE2: &str = include_str!("../configs/example2.toml");
pub const EXAMPLE3: &str = include_str!("../configs/example3.toml");

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub space: SpaceConfig,
    pub kernel: KernelConfig,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    /// Directory relative paths are resolved against; not part of the file.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceConfig {
    #[serde(default)]
    pub metric: MetricName,
    pub axes: Vec<AxisConfig>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricName {
    #[default]
    Max,
    Euclidean,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AxisConfig {
    Periodic {
        #[serde(default = "default_period")]
        period: f64,
        resolution: Option<usize>,
    },
    Interval {
        lo: f64,
        hi: f64,
        resolution: Option<usize>,
        #[serde(default)]
        quadrature: QuadratureName,
    },
}

fn default_period() -> f64 {
    TAU
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureName {
    #[default]
    Trapezoid,
    Gauss,
}

pub const DEFAULT_PERIODIC_RESOLUTION: usize = 256;
pub const DEFAULT_INTERVAL_RESOLUTION: usize = 64;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelConfig {
    TwoRodArea,
    SizedTwoRodArea { max_length: f64 },
    RhombusSymdiff,
    /// Dense matrix file, see [`io::read_kernel_matrix`].
    Tabulated { path: PathBuf },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "default_damping")]
    pub damping: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default)]
    pub b_schedule: Vec<f64>,
    #[serde(default)]
    pub init: InitConfig,
    #[serde(default)]
    pub reperturb: bool,
}

fn default_damping() -> f64 {
    0.5
}
fn default_tolerance() -> f64 {
    1e-10
}
fn default_max_iterations() -> usize {
    10_000
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            damping: default_damping(),
            tolerance: default_tolerance(),
            max_iterations: default_max_iterations(),
            b_schedule: Vec::new(),
            init: InitConfig::Uniform,
            reperturb: false,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitConfig {
    #[default]
    Uniform,
    Perturbed { amplitude: f64, profile: ProfileName },
    /// A density file written by this tool.
    Tabulated { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileName {
    /// `sin(p1 - p2)` on the first two coordinates.
    SinDiff,
    /// `cos(p)` on the first coordinate.
    CosFirst,
    /// Uniform noise in `[-1, 1]` drawn from the config seed.
    Random,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub branches: Option<BranchesConfig>,
    pub concentration: Option<ConcentrationConfig>,
    pub zeroset: Option<ZeroSetConfig>,
    #[serde(default)]
    pub selection: Vec<SelectionConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchesConfig {
    pub example: u8,
    pub b: Vec<f64>,
    #[serde(default = "default_max_length")]
    pub max_length: f64,
    #[serde(default = "default_scan")]
    pub scan_resolution: usize,
}

fn default_max_length() -> f64 {
    1.0
}
fn default_scan() -> usize {
    onsager_core::branch::DEFAULT_SCAN_RESOLUTION
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConcentrationConfig {
    pub eps: f64,
    pub candidates: Vec<CandidateConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CandidateConfig {
    /// Points where the kernel feature equals `level` (squared-feature
    /// kernels only).
    FeatureLevel { name: String, level: f64, tau: Option<f64> },
    /// Grid points nearest to the listed coordinates.
    Points { name: String, coordinates: Vec<Vec<f64>>, tau: Option<f64> },
}

impl CandidateConfig {
    pub fn name(&self) -> &str {
        match self {
            CandidateConfig::FeatureLevel { name, .. } | CandidateConfig::Points { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZeroSetConfig {
    /// Absolute threshold; defaults to `1e-3 * sup k`.
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "map", rename_all = "snake_case", deny_unknown_fields)]
pub enum SelectionConfig {
    TwoRodFold {
        c: f64,
        /// Half-width of the band `|p1 - p2| < eps`, in units of the grid
        /// step so that it scales with `--resolution`.
        eps_steps: f64,
        #[serde(default = "default_samples")]
        samples: usize,
    },
    RhombusFold {
        c: f64,
        q: f64,
        eps: f64,
        #[serde(default = "default_samples")]
        samples: usize,
    },
    Identity {
        c: f64,
        set0: CandidateConfig,
        set1: CandidateConfig,
        eps0: f64,
        eps1: f64,
        #[serde(default = "default_samples")]
        samples: usize,
    },
}

fn default_samples() -> usize {
    20_000
}

impl SelectionConfig {
    pub fn samples(&self) -> usize {
        match *self {
            SelectionConfig::TwoRodFold { samples, .. }
            | SelectionConfig::RhombusFold { samples, .. }
            | SelectionConfig::Identity { samples, .. } => samples,
        }
    }
}

/// Parses a config, reporting the path of the offending field.
pub fn parse(text: &str, base_dir: &Path) -> Result<ExperimentConfig, CliError> {
    let de = toml::Deserializer::new(text);
    let mut cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::Schema { path, message: e.into_inner().message().trim().to_string() }
    })?;
    cfg.base_dir = base_dir.to_path_buf();
    cfg.check()?;
    Ok(cfg)
}

pub fn load(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    parse(&text, path.parent().unwrap_or(Path::new(".")))
}

pub fn builtin(example: u8) -> Result<ExperimentConfig, CliError> {
    let text = match example {
        1 => EXAMPLE1,
        2 => EXAMPLE2,
        3 => EXAMPLE3,
        _ => return Err(CliError::Usage(format!("no built-in example {example}; expected 1, 2 or 3"))),
    };
    parse(text, Path::new("."))
}

fn schema(path: &str, message: impl Into<String>) -> CliError {
    CliError::Schema { path: path.into(), message: message.into() }
}

impl ExperimentConfig {
    /// Semantic checks beyond the file syntax.
    fn check(&self) -> Result<(), CliError> {
        if self.version != CONFIG_VERSION {
            return Err(schema("version", format!("unsupported version {}, expected {CONFIG_VERSION}", self.version)));
        }
        if self.space.axes.is_empty() {
            return Err(schema("space.axes", "at least one axis is required"));
        }
        for (i, axis) in self.space.axes.iter().enumerate() {
            let res = match axis {
                AxisConfig::Periodic { period, resolution } => {
                    if !(period.is_finite() && *period > 0.0) {
                        return Err(schema(&format!("space.axes[{i}].period"), "must be positive"));
                    }
                    resolution
                }
                AxisConfig::Interval { lo, hi, resolution, .. } => {
                    if !(lo < hi) {
                        return Err(schema(&format!("space.axes[{i}].hi"), "must exceed lo"));
                    }
                    resolution
                }
            };
            if matches!(res, Some(r) if *r < 2) {
                return Err(schema(&format!("space.axes[{i}].resolution"), "must be at least 2"));
            }
        }
        if let KernelConfig::SizedTwoRodArea { max_length } = self.kernel {
            if !(max_length > 0.0) {
                return Err(schema("kernel.max_length", "must be positive"));
            }
        }
        let s = &self.solver;
        if !(s.damping > 0.0 && s.damping <= 1.0) {
            return Err(schema("solver.damping", "must lie in (0, 1]"));
        }
        if !(s.tolerance > 0.0) {
            return Err(schema("solver.tolerance", "must be positive"));
        }
        if s.max_iterations == 0 {
            return Err(schema("solver.max_iterations", "must be positive"));
        }
        validate_schedule(&s.b_schedule).map_err(|e| schema("solver.b_schedule", e.to_string()))?;
        if let Some(b) = &self.analysis.branches {
            if b.example != 1 && b.example != 2 {
                return Err(schema("analysis.branches.example", "must be 1 or 2"));
            }
            validate_schedule(&b.b).map_err(|e| schema("analysis.branches.b", e.to_string()))?;
        }
        if let Some(c) = &self.analysis.concentration {
            if !(c.eps > 0.0) {
                return Err(schema("analysis.concentration.eps", "must be positive"));
            }
            if c.candidates.is_empty() {
                return Err(schema("analysis.concentration.candidates", "at least one candidate is required"));
            }
        }
        for (i, sel) in self.analysis.selection.iter().enumerate() {
            let c = match *sel {
                SelectionConfig::TwoRodFold { c, .. }
                | SelectionConfig::RhombusFold { c, .. }
                | SelectionConfig::Identity { c, .. } => c,
            };
            if !(c > 1.0) {
                return Err(schema(&format!("analysis.selection[{i}].c"), "must exceed 1"));
            }
        }
        Ok(())
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Overrides the resolution of every axis.
    pub fn set_resolution(&mut self, n: usize) {
        for axis in &mut self.space.axes {
            match axis {
                AxisConfig::Periodic { resolution, .. } | AxisConfig::Interval { resolution, .. } => *resolution = Some(n),
            }
        }
    }

    pub fn axis_specs(&self) -> Vec<AxisSpec> {
        self.space
            .axes
            .iter()
            .map(|a| match *a {
                AxisConfig::Periodic { period, resolution } => {
                    AxisSpec::periodic(period, resolution.unwrap_or(DEFAULT_PERIODIC_RESOLUTION))
                }
                AxisConfig::Interval { lo, hi, resolution, quadrature } => {
                    AxisSpec::interval(lo, hi, resolution.unwrap_or(DEFAULT_INTERVAL_RESOLUTION)).with_quadrature(
                        match quadrature {
                            QuadratureName::Trapezoid => Quadrature::Trapezoid,
                            QuadratureName::Gauss => Quadrature::GaussLegendre,
                        },
                    )
                }
            })
            .collect()
    }

    pub fn build_space(&self) -> Result<DiscreteSpace, CliError> {
        let space = build_space(&self.axis_specs()).map_err(|e| schema("space", e.to_string()))?;
        Ok(match self.space.metric {
            MetricName::Max => space,
            MetricName::Euclidean => space.with_metric(ProductMetric::Euclidean),
        })
    }

    /// Canonical text form of the space, hashed into density file headers.
    pub fn space_descriptor(&self) -> String {
        io::space_descriptor(&self.axis_specs(), self.space.metric == MetricName::Euclidean)
    }

    pub fn kernel_spec(&self, space: &DiscreteSpace) -> Result<KernelSpec, CliError> {
        Ok(match &self.kernel {
            KernelConfig::TwoRodArea => KernelSpec::TwoRodArea,
            KernelConfig::SizedTwoRodArea { max_length } => KernelSpec::SizedTwoRodArea { max_length: *max_length },
            KernelConfig::RhombusSymdiff => KernelSpec::RhombusSymdiff,
            KernelConfig::Tabulated { path } => {
                let entries = io::read_kernel_matrix(&self.resolve(path), space.len())?;
                KernelSpec::Tabulated { entries }
            }
        })
    }

    /// Assembles the kernel; tabulated kernels that fail validation give
    /// [`CliError::Validation`].
    pub fn kernel(&self, space: &DiscreteSpace) -> Result<KernelMatrix, CliError> {
        let spec = self.kernel_spec(space)?;
        assemble(&spec, space).map_err(|e| match e {
            onsager_core::Error::KernelValidation(m) => CliError::Validation(m),
            other => schema("kernel", other.to_string()),
        })
    }

    pub fn solver_config(&self, space: &DiscreteSpace) -> Result<SolverConfig, CliError> {
        let s = &self.solver;
        let init = match &s.init {
            InitConfig::Uniform => InitialDensity::Uniform,
            InitConfig::Perturbed { amplitude, profile } => {
                InitialDensity::Perturbed { amplitude: *amplitude, profile: self.profile(*profile, space)? }
            }
            InitConfig::Tabulated { path } => {
                let file = io::read_density(&self.resolve(path))?;
                if file.space_hash != io::descriptor_hash(&self.space_descriptor()) {
                    return Err(schema("solver.init.path", "density file was written for a different space"));
                }
                InitialDensity::Tabulated(file.values)
            }
        };
        Ok(SolverConfig {
            damping: s.damping,
            max_iterations: s.max_iterations,
            tolerance: s.tolerance,
            b_schedule: s.b_schedule.clone(),
            init,
            reperturb: s.reperturb,
        })
    }

    fn profile(&self, name: ProfileName, space: &DiscreteSpace) -> Result<Vec<f64>, CliError> {
        let n = space.len();
        Ok(match name {
            ProfileName::SinDiff => {
                if space.dim() < 2 {
                    return Err(schema("solver.init.profile", "sin_diff needs at least two coordinates"));
                }
                (0..n).map(|i| (space.point(i)[0] - space.point(i)[1]).sin()).collect()
            }
            ProfileName::CosFirst => (0..n).map(|i| space.point(i)[0].cos()).collect(),
            ProfileName::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect()
            }
        })
    }

    pub fn candidate(&self, c: &CandidateConfig, k: &KernelMatrix, space: &DiscreteSpace) -> Result<ZeroSet, CliError> {
        let default_tau = onsager_core::limit::DEFAULT_RELATIVE_TAU * k.sup_norm();
        let err = |e: onsager_core::Error| schema(&format!("candidate `{}`", c.name()), e.to_string());
        match c {
            CandidateConfig::FeatureLevel { level, tau, .. } => {
                ZeroSet::feature_level(k, *level, tau.unwrap_or(default_tau)).map_err(err)
            }
            CandidateConfig::Points { coordinates, tau, .. } => {
                let mut members = Vec::with_capacity(coordinates.len());
                for x in coordinates {
                    members.push(space.nearest_index(x).ok_or_else(|| {
                        schema(&format!("candidate `{}`", c.name()), format!("point {x:?} is outside the space"))
                    })?);
                }
                ZeroSet::new(k, members, tau.unwrap_or(default_tau)).map_err(err)
            }
        }
    }

    pub fn selection_spec(
        &self,
        sel: &SelectionConfig,
        k: &KernelMatrix,
        space: &DiscreteSpace,
    ) -> Result<SelectionSpec, CliError> {
        let err = |e: onsager_core::Error| schema("analysis.selection", e.to_string());
        match sel {
            SelectionConfig::TwoRodFold { c, eps_steps, .. } => {
                if space.dim() != 2 {
                    return Err(schema("analysis.selection.map", "two_rod_fold needs a two-dimensional space"));
                }
                let step = space.axes()[0].length() / space.shape().map_or(1, |s| s[0]) as f64;
                SelectionSpec::two_rods(k, space, *c, eps_steps * step).map_err(err)
            }
            SelectionConfig::RhombusFold { c, q, eps, .. } => SelectionSpec::rhombus(k, space, *q, *c, *eps).map_err(err),
            SelectionConfig::Identity { c, set0, set1, eps0, eps1, .. } => Ok(SelectionSpec {
                set0: self.candidate(set0, k, space)?,
                set1: self.candidate(set1, k, space)?,
                map: Box::new(Identity { dim: space.dim() }),
                c: *c,
                eps0: *eps0,
                eps1: *eps1,
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_parse_and_build() {
        for n in 1..=3 {
            let mut cfg = builtin(n).unwrap();
            cfg.set_resolution(8);
            let space = cfg.build_space().unwrap();
            assert!(cfg.kernel(&space).is_ok());
            assert!(!cfg.solver_config(&space).unwrap().b_schedule.is_empty());
        }
        assert!(matches!(builtin(4), Err(CliError::Usage(_))));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = "version = 1\nflavour = 2\n[space]\naxes = [{ kind = \"periodic\" }]\n[kernel]\nkind = \"two_rod_area\"\n";
        match parse(text, Path::new(".")) {
            Err(CliError::Schema { message, .. }) => assert!(message.contains("flavour"), "{message}"),
            other => panic!("{other:?}"),
        }
    }
}
