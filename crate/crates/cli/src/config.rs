//! JSON run configurations for the CLI commands.

use crate::error::AppError;
use glmfunk::{Family, Fusion, Hyperparams, Score, TuneSpec};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

fn default_true() -> bool {
    true
}

fn default_level() -> f64 {
    0.95
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataPaths {
    pub design: PathBuf,
    pub outcome: PathBuf,
    #[serde(default)]
    pub unit_graph: Option<PathBuf>,
    #[serde(default)]
    pub feature_graph: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverConfig {
    #[serde(default = "SolverConfig::default_step")]
    pub step_size: f64,
    #[serde(default = "SolverConfig::default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "SolverConfig::default_tol")]
    pub tol: f64,
    #[serde(default = "default_true")]
    pub backtracking: bool,
}

impl SolverConfig {
    fn default_step() -> f64 {
        1e-3
    }
    fn default_max_iter() -> usize {
        50_000
    }
    fn default_tol() -> f64 {
        1e-7
    }

    pub fn to_options(&self) -> glmfunk::FitOptions {
        glmfunk::FitOptions {
            step_size: self.step_size,
            max_iter: self.max_iter,
            tol: self.tol,
            backtracking: self.backtracking,
            ..glmfunk::FitOptions::default()
        }
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            step_size: Self::default_step(),
            max_iter: Self::default_max_iter(),
            tol: Self::default_tol(),
            backtracking: true,
        }
    }
}

/// Additive log-ratio preprocessing of one compositional column group.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlrConfig {
    pub columns: Vec<String>,
    pub reference: String,
    #[serde(default)]
    pub pseudo_count: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InferenceSection {
    #[serde(default)]
    pub q_constraint: Option<f64>,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default)]
    pub sandwich: bool,
    #[serde(default)]
    pub one_sided: bool,
}

impl Default for InferenceSection {
    fn default() -> Self {
        InferenceSection {
            q_constraint: None,
            level: default_level(),
            sandwich: false,
            one_sided: false,
        }
    }
}

/// Configuration for `fit`, `predict`, `cv`, and `infer`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub family: String,
    pub fusion: Fusion,
    pub data: DataPaths,
    #[serde(default)]
    pub hyperparams: Option<Hyperparams>,
    #[serde(default)]
    pub tune: Option<TuneSection>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default = "default_true")]
    pub standardize: bool,
    #[serde(default)]
    pub alr: Option<AlrConfig>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub inference: InferenceSection,
}

/// Tuning section: grids are optional (defaults are derived from the data).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TuneSection {
    #[serde(default)]
    pub lambda_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub gamma_n_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub gamma_p_grid: Option<Vec<f64>>,
    #[serde(default = "TuneSection::default_k")]
    pub k: usize,
    #[serde(default = "TuneSection::default_cycles")]
    pub max_cycles: usize,
    pub score: Score,
    #[serde(default)]
    pub adjacency_constraint: bool,
    #[serde(default = "TuneSection::default_delta")]
    pub delta: f64,
    #[serde(default = "TuneSection::default_q")]
    pub q: f64,
}

impl TuneSection {
    fn default_k() -> usize {
        10
    }
    fn default_cycles() -> usize {
        5
    }
    fn default_delta() -> f64 {
        0.01
    }
    fn default_q() -> f64 {
        0.001
    }

    /// Resolve into a full TuneSpec, deriving default grids from the data
    /// where the config leaves them out.
    pub fn to_spec(
        &self,
        x: &ndarray::Array2<f64>,
        y: &ndarray::Array1<f64>,
        fusion: Fusion,
        seed: u64,
    ) -> TuneSpec {
        let defaults = TuneSpec::with_default_grids(x, y, fusion, self.score, seed);
        TuneSpec {
            lambda_grid: self.lambda_grid.clone().unwrap_or(defaults.lambda_grid),
            gamma_n_grid: self.gamma_n_grid.clone().unwrap_or(defaults.gamma_n_grid),
            gamma_p_grid: self.gamma_p_grid.clone().unwrap_or(defaults.gamma_p_grid),
            k: self.k,
            max_cycles: self.max_cycles,
            seed,
            score: self.score,
            adjacency_constraint: self.adjacency_constraint,
            fusion,
            delta: self.delta,
            q: self.q,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, AppError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AppError::Config(format!("{}: {e}", path.display())))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| AppError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn family(&self) -> Result<Family, AppError> {
        Family::parse(&self.family)
            .ok_or_else(|| AppError::Config(format!("unknown family {:?}", self.family)))
    }

    fn validate(&self) -> Result<(), AppError> {
        match (&self.hyperparams, &self.tune) {
            (Some(_), Some(_)) => Err(AppError::Config(
                "config must set exactly one of hyperparams / tune, not both".into(),
            )),
            (None, None) => Err(AppError::Config(
                "config must set exactly one of hyperparams / tune".into(),
            )),
            _ => Ok(()),
        }
    }

    pub fn require_files(&self) -> Result<(), AppError> {
        let mut paths = vec![self.data.design.clone(), self.data.outcome.clone()];
        if let Some(p) = &self.data.unit_graph {
            paths.push(p.clone());
        }
        if let Some(p) = &self.data.feature_graph {
            paths.push(p.clone());
        }
        for p in paths {
            if !p.exists() {
                return Err(AppError::Config(format!(
                    "referenced file does not exist: {}",
                    p.display()
                )));
            }
        }
        Ok(())
    }
}

/// How the per-unit intercepts are generated in simulations.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaModel {
    /// Intrinsic CAR over the unit graph with scale tau.
    Icar { tau: f64 },
    /// Independent N(0, var) intercepts (uninformative unit network).
    Iid { var: f64 },
    /// Block-mean intercepts N(means[block], sd²) for SBM unit graphs.
    Blocks { means: Vec<f64>, sd: f64 },
}

/// Unit graph source for simulations.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitGraphModel {
    /// Load a lattice (or any graph) from an edge-list file; n is its size.
    LatticeFile { path: PathBuf },
    /// Stochastic block model with fully connected blocks.
    Sbm { n: usize, blocks: usize },
}

/// Feature-graph perturbation settings for partially informative networks.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PerturbConfig {
    /// Probability of adding each absent feature pair.
    #[serde(default)]
    pub add_prob: Option<f64>,
    /// Restrict additions to pairs within an existing component.
    #[serde(default)]
    pub intra_component_only: bool,
    /// Remove the edges among the active features.
    #[serde(default)]
    pub delete_active_edges: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimCliConfig {
    pub p: usize,
    pub s: usize,
    pub rho: f64,
    pub unit_graph: UnitGraphModel,
    pub alpha: AlphaModel,
    pub family: String,
    /// Constant known offset added to every linear predictor (a shared
    /// log-exposure for Poisson outcomes); carried into fitting.
    #[serde(default)]
    pub baseline: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub perturb: Option<PerturbConfig>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

impl SimCliConfig {
    pub fn load(path: &Path) -> Result<Self, AppError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AppError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| AppError::Config(format!("{}: {e}", path.display())))
    }

    pub fn family(&self) -> Result<Family, AppError> {
        Family::parse(&self.family)
            .ok_or_else(|| AppError::Config(format!("unknown family {:?}", self.family)))
    }
}

/// Configuration for the replicated-method experiment harness.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub sim: SimCliConfig,
    pub methods: Vec<String>,
    pub replicates: usize,
    /// Effect sizes to sweep; falls back to the sim config's single rho.
    #[serde(default)]
    pub rho_values: Option<Vec<f64>>,
    #[serde(default = "ExperimentConfig::default_train_fraction")]
    pub train_fraction: f64,
    pub tune: TuneSection,
    #[serde(default)]
    pub solver_cv: SolverConfig,
    #[serde(default)]
    pub solver_final: SolverConfig,
    #[serde(default = "default_level")]
    pub level: f64,
    /// Sandwich variance for the tests and intervals. On by default here:
    /// the comparator set includes intentionally misspecified models whose
    /// model-based standard errors understate the residual variance.
    #[serde(default = "default_true")]
    pub sandwich: bool,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    fn default_train_fraction() -> f64 {
        0.5
    }

    pub fn load(path: &Path) -> Result<Self, AppError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AppError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| AppError::Config(format!("{}: {e}", path.display())))
    }
}
