//! Run configuration: defaults, optional TOML file, flag overrides.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use dfecs_core::ffm::GridSpec;
use dfecs_core::geometry::AnchorChoice;
use dfecs_core::solvers::SolverConfig;

use crate::error::CliError;

/// Output directory fallback when neither a flag nor the config file sets
/// one.
pub const OUTPUT_DIR_ENV: &str = "DFECS_OUT";

/// Values a `--config` TOML file may provide. Flags always win.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub beta: Option<f64>,
    pub grid: Option<String>,
    pub seed: Option<u64>,
    pub sample_count: Option<usize>,
    pub anchors: Option<String>,
    pub reference_subject: Option<String>,
    pub max_iterations: Option<usize>,
    pub tolerance: Option<f64>,
    pub output_dir: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("bad config file: {e}")))
    }
}

/// Fully resolved run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub beta: f64,
    pub grids: GridSpec,
    pub solver: SolverConfig,
    pub anchors: AnchorChoice,
    pub reference_subject: Option<String>,
    pub sample_count: Option<usize>,
    pub output_dir: PathBuf,
}

pub struct RunFlags {
    pub config: Option<PathBuf>,
    pub beta: Option<f64>,
    pub grid: Option<String>,
    pub seed: Option<u64>,
    pub sample_count: Option<usize>,
    pub anchors: Option<String>,
    pub reference_subject: Option<String>,
    pub output_dir: Option<PathBuf>,
}

pub fn resolve(flags: RunFlags) -> Result<RunConfig, CliError> {
    let file = match &flags.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };

    let beta = flags.beta.or(file.beta).unwrap_or(0.05);
    if !(beta > 0.0 && beta < 1.0) {
        return Err(CliError::Config(format!(
            "beta = {beta} must lie strictly between 0 and 1"
        )));
    }

    let grid_name = flags
        .grid
        .or(file.grid)
        .unwrap_or_else(|| "default".into());
    let grids = GridSpec::from_preset(&grid_name)
        .ok_or_else(|| CliError::Config(format!("unknown grid preset {grid_name:?}")))?;

    let anchors_name = flags
        .anchors
        .or(file.anchors)
        .unwrap_or_else(|| "default".into());
    let anchors = AnchorChoice::from_name(&anchors_name)
        .ok_or_else(|| CliError::Config(format!("unknown anchor set {anchors_name:?}")))?;

    let mut solver = SolverConfig {
        seed: flags.seed.or(file.seed).unwrap_or(0),
        ..SolverConfig::default()
    };
    if let Some(n) = file.max_iterations {
        solver.max_iterations = n;
    }
    if let Some(t) = file.tolerance {
        solver.tolerance = t;
    }
    solver
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;

    let output_dir = flags
        .output_dir
        .or(file.output_dir)
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));

    Ok(RunConfig {
        beta,
        grids,
        solver,
        anchors,
        reference_subject: flags.reference_subject.or(file.reference_subject),
        sample_count: flags.sample_count.or(file.sample_count),
        output_dir,
    })
}
