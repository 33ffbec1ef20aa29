//! TOML configuration for the file-driven subcommands.
//!
//! A config file is a flat key-value document with one section per concern:
//! `[run]` carries the master seed and execution knobs shared by every
//! command, `[output]` the output directory, and then exactly one of
//! `[sweep]`, `[oracle]`, `[audit]`, or `[coupled]` describes the work.
//! Parsing is strict: unknown keys are rejected so typos cannot silently
//! change an experiment.
//!
//! The resolved configuration is embedded verbatim in the run manifest, so a
//! manifest alone is enough to reproduce every output byte (timestamps
//! excepted, which never enter data files).

use std::env;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use starsim_core::experiment::FitMode;
use starsim_core::process::{EngineKind, Variant};

use crate::CliError;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "STARSIM_OUT_DIR";

/// Parsed configuration file.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub run: RunSection,
    #[serde(default)]
    pub output: Option<OutputSection>,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub fit: Option<FitSection>,
    #[serde(default)]
    pub oracle: Option<OracleSection>,
    #[serde(default)]
    pub audit: Option<AuditSection>,
    #[serde(default)]
    pub coupled: Option<CoupledSection>,
}

/// Execution knobs shared by all config-driven commands.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    /// Master seed: every random stream in the run derives from it.
    pub master_seed: u64,
    /// Replicas per grid point (required by `sweep`).
    #[serde(default)]
    pub replicas: Option<u64>,
    /// Engine name, `"lumped"` (default) or `"general"`.
    #[serde(default)]
    pub engine: Option<String>,
    /// Censoring horizon override.
    #[serde(default)]
    pub horizon: Option<f64>,
    /// Worker threads (0 or absent = one per core); outputs are invariant
    /// to this value.
    #[serde(default)]
    pub workers: Option<usize>,
}

/// Output directory section.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<String>,
}

/// Survival-grid sweep: the cartesian product of the listed values, ordered
/// variant-major, then `alpha`, then `n`, with `lambda` fastest.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub n: Vec<u32>,
    pub lambda: Vec<f64>,
    pub alpha: Vec<f64>,
    pub variants: Vec<String>,
}

/// Optional exponent fit over the sweep results.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    /// `"vary-lambda-fixed-n"` or `"vary-n-fixed-lambda"`.
    pub mode: String,
    /// Dominance-filter multiple of `ln n` (default
    /// [`starsim_core::experiment::DEFAULT_DOMINANCE_FACTOR`]).
    #[serde(default)]
    pub dominance_factor: Option<f64>,
}

/// Exact per-state expectation export.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    pub n: u32,
    pub lambda: f64,
    pub alpha: f64,
    /// Variant name (default `"x"`).
    #[serde(default)]
    pub variant: Option<String>,
}

/// Audit selector; `kind` picks the audit and the remaining keys configure
/// it.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AuditSection {
    /// Coupled X/Y dominance audit: every violation is a hard failure.
    Coupling {
        n: u32,
        lambda: f64,
        alpha: f64,
        runs: u64,
        #[serde(default)]
        round_cap: Option<u32>,
    },
    /// Non-immune floor audit for the full-immunity variant.
    Floor {
        n: u32,
        lambda: f64,
        alpha: f64,
        replicas: u64,
        #[serde(default)]
        variant: Option<String>,
        #[serde(default)]
        engine: Option<String>,
        /// Pass threshold on the fraction of runs above the floor
        /// (default 0.999; set 0 for a report-only audit).
        #[serde(default)]
        required_fraction: Option<f64>,
    },
    /// Lumped-versus-general engine agreement.
    Engines {
        n: u32,
        lambda: f64,
        alpha: f64,
        replicas: u64,
        #[serde(default)]
        variant: Option<String>,
        /// KS test level (default 0.001).
        #[serde(default)]
        ks_alpha: Option<f64>,
    },
    /// Conditional round-failure frequencies over a grid of
    /// `(a, lambda, alpha)` cells against the closed form.
    RoundFailure {
        a: Vec<u32>,
        lambda: Vec<f64>,
        alpha: Vec<f64>,
        trials: u64,
    },
    /// Failed-round residual envelope at one `(lambda, alpha)` for several
    /// `n`.
    Residual {
        n: Vec<u32>,
        lambda: f64,
        alpha: f64,
        replicas: u64,
    },
}

/// Coupled-pair export.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CoupledSection {
    pub n: u32,
    pub lambda: f64,
    pub alpha: f64,
    pub runs: u64,
    #[serde(default)]
    pub round_cap: Option<u32>,
}

/// Read and parse a configuration file.
pub fn load_config(path: &Path) -> Result<ConfigFile, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Parse a variant name (`x`, `y`, `sis`; case-insensitive).
pub fn parse_variant(name: &str) -> Result<Variant, CliError> {
    match name.to_ascii_lowercase().as_str() {
        "x" => Ok(Variant::X),
        "y" => Ok(Variant::Y),
        "sis" => Ok(Variant::Sis),
        _ => Err(CliError::Config(format!(
            "unknown variant {name:?} (expected \"x\", \"y\", or \"sis\")"
        ))),
    }
}

/// Parse an engine name (`lumped`, `general`; case-insensitive).
pub fn parse_engine(name: &str) -> Result<EngineKind, CliError> {
    match name.to_ascii_lowercase().as_str() {
        "lumped" => Ok(EngineKind::Lumped),
        "general" => Ok(EngineKind::General),
        _ => Err(CliError::Config(format!(
            "unknown engine {name:?} (expected \"lumped\" or \"general\")"
        ))),
    }
}

/// Parse a fit-mode name.
pub fn parse_fit_mode(name: &str) -> Result<FitMode, CliError> {
    match name.to_ascii_lowercase().as_str() {
        "vary-lambda-fixed-n" => Ok(FitMode::VaryLambdaFixedN),
        "vary-n-fixed-lambda" => Ok(FitMode::VaryNFixedLambda),
        _ => Err(CliError::Config(format!(
            "unknown fit mode {name:?} (expected \"vary-lambda-fixed-n\" or \
             \"vary-n-fixed-lambda\")"
        ))),
    }
}

/// Canonical lowercase name of a variant.
pub fn variant_name(variant: Variant) -> &'static str {
    match variant {
        Variant::X => "x",
        Variant::Y => "y",
        Variant::Sis => "sis",
    }
}

/// Canonical lowercase name of an engine.
pub fn engine_name(engine: EngineKind) -> &'static str {
    match engine {
        EngineKind::Lumped => "lumped",
        EngineKind::General => "general",
    }
}

/// Resolve the output directory: explicit flag, then `[output] dir`, then
/// the `STARSIM_OUT_DIR` environment variable, then the working directory.
pub fn resolve_out_dir(flag: Option<&Path>, section: Option<&OutputSection>) -> PathBuf {
    if let Some(dir) = flag {
        return dir.to_path_buf();
    }
    if let Some(dir) = section.and_then(|s| s.dir.as_deref()) {
        return PathBuf::from(dir);
    }
    if let Some(dir) = env::var_os(OUT_DIR_ENV) {
        if !dir.is_empty() {
            return PathBuf::from(dir);
        }
    }
    PathBuf::from(".")
}
