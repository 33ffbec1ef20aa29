//! Frozen output schemas: CSV tables, JSON summaries, JSONL audit lines,
//! and the run manifest.
//!
//! Columns and keys are a stable contract (grid fields first, then
//! statistics).  Data files carry no timestamps — repeated runs with the
//! same parameters are byte-identical — while the manifest records tool
//! version, master seed, resolved parameters, wall-clock bounds, per-point
//! replica counts, and a SHA-256 digest of every data file it accompanies.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};
use starsim_core::coupling::{CoupledRoundAudit, CoupledRun};
use starsim_core::experiment::{ExponentFit, PointResult};
use starsim_core::rounds::RoundRecord;
use starsim_core::stats::SummaryStats;

use crate::config::{engine_name, variant_name};
use crate::CliError;

/// Column order of the per-point sweep CSV.
pub const POINT_COLUMNS: [&str; 15] = [
    "point",
    "n",
    "lambda",
    "alpha",
    "variant",
    "engine",
    "replicas",
    "censored",
    "mean_tau",
    "se_tau",
    "mean_psi",
    "se_psi",
    "mean_min_non_immune",
    "se_min_non_immune",
    "scale",
];

/// Column order of the per-state oracle CSV.
pub const ORACLE_COLUMNS: [&str; 5] =
    ["root", "infected", "immune", "expected_tau", "expected_psi"];

/// Column order of the per-round CSV emitted by `simulate --rounds-csv`.
pub const ROUND_COLUMNS: [&str; 11] = [
    "replica",
    "round",
    "tau_i",
    "xi_i",
    "zeta_i",
    "tau_i_r",
    "tau_i_s",
    "infected_at_start",
    "infected_at_recovery",
    "infected_at_immunity_end",
    "succeeded",
];

/// JSON mirror of [`SummaryStats`].
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SummaryStatsJson {
    pub count: usize,
    pub mean: f64,
    pub variance: f64,
    pub se: f64,
}

impl From<&SummaryStats> for SummaryStatsJson {
    fn from(s: &SummaryStats) -> Self {
        SummaryStatsJson {
            count: s.count,
            mean: s.mean,
            variance: s.variance,
            se: s.se,
        }
    }
}

/// JSON mirror of one grid point's aggregate.
#[derive(Clone, Debug, Serialize)]
pub struct PointJson {
    pub point: u64,
    pub n: u32,
    pub lambda: f64,
    pub alpha: f64,
    pub variant: &'static str,
    pub engine: &'static str,
    pub replicas: u64,
    pub censored: u64,
    pub tau: SummaryStatsJson,
    pub psi: SummaryStatsJson,
    pub min_non_immune: SummaryStatsJson,
    /// The analytic yardstick `(lambda^2 n)^alpha / (1+lambda)^(2 alpha) + ln n`.
    pub scale: f64,
}

impl From<&PointResult> for PointJson {
    fn from(p: &PointResult) -> Self {
        PointJson {
            point: p.index,
            n: p.spec.n,
            lambda: p.spec.lambda,
            alpha: p.spec.alpha,
            variant: variant_name(p.spec.variant),
            engine: engine_name(p.spec.engine),
            replicas: p.spec.replicas,
            censored: p.censored,
            tau: (&p.tau).into(),
            psi: (&p.psi).into(),
            min_non_immune: (&p.min_non_immune).into(),
            scale: p.scale,
        }
    }
}

/// JSON mirror of an exponent fit.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct FitJson {
    pub mode: &'static str,
    pub dominance_factor: f64,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub used: usize,
    pub total: usize,
}

impl FitJson {
    pub fn new(fit: &ExponentFit, mode: &'static str, dominance_factor: f64) -> Self {
        FitJson {
            mode,
            dominance_factor,
            slope: fit.slope,
            intercept: fit.intercept,
            r_squared: fit.r_squared,
            used: fit.used,
            total: fit.total,
        }
    }
}

/// One audited round of a coupled run, serialized on violating runs.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct CoupledRoundJson {
    pub index: u32,
    pub xi: f64,
    pub zeta: f64,
    pub x_active: bool,
    pub x_succeeded: bool,
    pub y_succeeded: bool,
    pub x_duration: f64,
    pub y_duration: f64,
    pub x_infected_at_recovery: u32,
    pub y_infected_at_recovery: u32,
    pub containment_ok: bool,
    pub duration_ok: bool,
    pub recovery_count_ok: bool,
}

impl From<&CoupledRoundAudit> for CoupledRoundJson {
    fn from(r: &CoupledRoundAudit) -> Self {
        CoupledRoundJson {
            index: r.index,
            xi: r.xi,
            zeta: r.zeta,
            x_active: r.x_active,
            x_succeeded: r.x_succeeded,
            y_succeeded: r.y_succeeded,
            x_duration: r.x_duration,
            y_duration: r.y_duration,
            x_infected_at_recovery: r.x_infected_at_recovery,
            y_infected_at_recovery: r.y_infected_at_recovery,
            containment_ok: r.containment_ok,
            duration_ok: r.duration_ok,
            recovery_count_ok: r.recovery_count_ok,
        }
    }
}

/// One JSONL line per coupled run; per-round detail is attached only when
/// the run violates an audit, keeping healthy exports compact.
#[derive(Clone, Debug, Serialize)]
pub struct CoupledRunJson {
    pub run: u64,
    pub psi_x: u32,
    pub psi_y: u32,
    pub tau_x: f64,
    pub tau_y: f64,
    pub rounds: usize,
    pub psi_ok: bool,
    pub all_ok: bool,
    pub y_round_capped: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub violating_rounds: Option<Vec<CoupledRoundJson>>,
}

impl CoupledRunJson {
    pub fn new(run: u64, r: &CoupledRun) -> Self {
        let violating_rounds = if r.all_ok {
            None
        } else {
            Some(
                r.rounds
                    .iter()
                    .filter(|round| !round.all_ok())
                    .map(CoupledRoundJson::from)
                    .collect(),
            )
        };
        CoupledRunJson {
            run,
            psi_x: r.psi_x,
            psi_y: r.psi_y,
            tau_x: r.tau_x,
            tau_y: r.tau_y,
            rounds: r.rounds.len(),
            psi_ok: r.psi_ok,
            all_ok: r.all_ok,
            y_round_capped: r.y_round_capped,
            violating_rounds,
        }
    }
}

/// Digest entry of one output file.
#[derive(Clone, Debug, Serialize)]
pub struct OutputDigest {
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Per-point replica record in the manifest.
#[derive(Clone, Debug, Serialize)]
pub struct ManifestPoint {
    pub point: u64,
    pub n: u32,
    pub lambda: f64,
    pub alpha: f64,
    pub variant: &'static str,
    pub engine: &'static str,
    pub replicas: u64,
}

/// The run manifest: everything needed to reproduce the data files
/// bit-for-bit, plus wall-clock bounds and output digests.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub master_seed: u64,
    /// Requested worker threads (0 = one per core); outputs do not depend
    /// on it.
    pub workers: usize,
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
    /// Fully resolved configuration.
    pub config: serde_json::Value,
    pub points: Vec<ManifestPoint>,
    pub outputs: Vec<OutputDigest>,
}

/// Milliseconds since the Unix epoch.
pub fn unix_millis() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Hex SHA-256 of a byte slice.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Digest one written output file.
pub fn digest_file(path: &Path) -> Result<OutputDigest, CliError> {
    let bytes = fs::read(path)?;
    let name = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    Ok(OutputDigest {
        file: name,
        bytes: bytes.len() as u64,
        sha256: sha256_hex(&bytes),
    })
}

/// Serialize a value as pretty JSON with a trailing newline.
pub fn to_json_pretty<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Config(format!("serialization failed: {e}")))?;
    text.push('\n');
    Ok(text)
}

/// Write pretty JSON to a file.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    fs::write(path, to_json_pretty(value)?)?;
    Ok(())
}

/// Write the per-point CSV with the frozen [`POINT_COLUMNS`] layout.
pub fn write_points_csv(path: &Path, points: &[PointResult]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record(POINT_COLUMNS).map_err(csv_error)?;
    for p in points {
        w.write_record([
            p.index.to_string(),
            p.spec.n.to_string(),
            p.spec.lambda.to_string(),
            p.spec.alpha.to_string(),
            variant_name(p.spec.variant).to_string(),
            engine_name(p.spec.engine).to_string(),
            p.spec.replicas.to_string(),
            p.censored.to_string(),
            p.tau.mean.to_string(),
            p.tau.se.to_string(),
            p.psi.mean.to_string(),
            p.psi.se.to_string(),
            p.min_non_immune.mean.to_string(),
            p.min_non_immune.se.to_string(),
            p.scale.to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Write the per-state oracle CSV with the frozen [`ORACLE_COLUMNS`] layout.
pub fn write_oracle_csv(
    path: &Path,
    profile: &starsim_core::analytics::OracleProfile,
) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record(ORACLE_COLUMNS).map_err(csv_error)?;
    for (idx, state) in profile.states.iter().enumerate() {
        w.write_record([
            vertex_letter(state.root).to_string(),
            state.infected_leaves.to_string(),
            state.immune_leaves.to_string(),
            profile.expected_tau[idx].to_string(),
            profile.expected_psi[idx].to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Write per-round records with the frozen [`ROUND_COLUMNS`] layout.
pub fn write_rounds_csv(
    path: &Path,
    rounds: &[(u64, Vec<RoundRecord>)],
) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record(ROUND_COLUMNS).map_err(csv_error)?;
    for (replica, records) in rounds {
        for r in records {
            w.write_record([
                replica.to_string(),
                r.index.to_string(),
                r.tau_i.to_string(),
                r.xi_i.to_string(),
                r.zeta_i.to_string(),
                r.tau_i_r.to_string(),
                r.tau_i_s.to_string(),
                r.infected_at_start.to_string(),
                r.infected_at_recovery.to_string(),
                r.infected_at_immunity_end.to_string(),
                r.succeeded.to_string(),
            ])
            .map_err(csv_error)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Write one JSON line per coupled run.
pub fn write_coupled_jsonl(path: &Path, runs: &[CoupledRun]) -> Result<(), CliError> {
    let mut file = fs::File::create(path)?;
    for (k, run) in runs.iter().enumerate() {
        let line = serde_json::to_string(&CoupledRunJson::new(k as u64, run))
            .map_err(|e| CliError::Config(format!("serialization failed: {e}")))?;
        file.write_all(line.as_bytes())?;
        file.write_all(b"\n")?;
    }
    file.flush()?;
    Ok(())
}

/// Single-letter state name used in the oracle CSV.
fn vertex_letter(state: starsim_core::process::VertexState) -> &'static str {
    match state {
        starsim_core::process::VertexState::Susceptible => "S",
        starsim_core::process::VertexState::Infected => "I",
        starsim_core::process::VertexState::Recovered => "R",
    }
}

fn csv_error(e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::Io(io),
        other => CliError::Config(format!("csv: {other:?}")),
    }
}

/// Write the manifest next to the data files it describes; call last so the
/// digests cover the final bytes.
pub fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<PathBuf, CliError> {
    let path = dir.join("manifest.json");
    write_json(&path, manifest)?;
    Ok(path)
}
