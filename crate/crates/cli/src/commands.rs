//! Subcommand definitions and implementations.
//!
//! `simulate` and `formula` print JSON to stdout; the config-driven
//! commands (`sweep`, `oracle`, `audit`, `coupled`) write data files plus a
//! manifest into the resolved output directory.  Commands return a process
//! exit code: audits that complete but find violations return the audit
//! code rather than an error.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;
use starsim_core::analytics;
use starsim_core::coupling::DEFAULT_ROUND_CAP;
use starsim_core::experiment::{
    self, aggregate_point, fit_exponent, FitMode, PointSpec, DEFAULT_DOMINANCE_FACTOR,
};
use starsim_core::process::{
    EngineKind, ProcessParams, StarState, Variant, DEFAULT_HORIZON,
};

use crate::config::{
    engine_name, load_config, parse_engine, parse_fit_mode, parse_variant, resolve_out_dir,
    variant_name, AuditSection, ConfigFile,
};
use crate::output::{
    self, digest_file, unix_millis, write_json, FitJson, ManifestPoint, OutputDigest, PointJson,
    RunManifest,
};
use crate::runner;
use crate::{CliError, EXIT_AUDIT, EXIT_OK};

/// Exact stochastic simulation and analytics for epidemics on star graphs.
#[derive(Debug, Parser)]
#[command(name = "starsim", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Replicate survival runs at one parameter point and print a JSON
    /// summary.
    Simulate(SimulateArgs),
    /// Evaluate a closed-form quantity and print {operation, inputs,
    /// output}.
    Formula(FormulaArgs),
    /// Run a survival grid from a config file.
    Sweep(ConfigArgs),
    /// Export exact per-state expectations from the dense solver.
    Oracle(ConfigArgs),
    /// Run a consistency audit from a config file.
    Audit(ConfigArgs),
    /// Run coupled X/Y pairs and export per-run audit lines.
    Coupled(ConfigArgs),
}

/// Process variant flag.
#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum VariantArg {
    /// Full immunity: every vertex becomes immune after recovery.
    X,
    /// Root-only immunity.
    Y,
    /// No immunity (SIS).
    Sis,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::X => Variant::X,
            VariantArg::Y => Variant::Y,
            VariantArg::Sis => Variant::Sis,
        }
    }
}

/// Engine flag.
#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum EngineArg {
    /// Exact lumped chain on (root state, infected, immune).
    Lumped,
    /// Per-vertex graphical construction.
    General,
}

impl From<EngineArg> for EngineKind {
    fn from(e: EngineArg) -> Self {
        match e {
            EngineArg::Lumped => EngineKind::Lumped,
            EngineArg::General => EngineKind::General,
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Number of leaves.
    #[arg(long)]
    pub n: u32,
    /// Infection rate per edge.
    #[arg(long)]
    pub lambda: f64,
    /// De-immunization rate (ignored by sis).
    #[arg(long)]
    pub alpha: f64,
    /// Process variant.
    #[arg(long, value_enum)]
    pub variant: VariantArg,
    /// Number of independent replicas.
    #[arg(long)]
    pub replicas: u64,
    /// Master seed.
    #[arg(long)]
    pub seed: u64,
    /// Simulation engine.
    #[arg(long, value_enum, default_value_t = EngineArg::Lumped)]
    pub engine: EngineArg,
    /// Censoring horizon (default 1e8).
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Worker threads (0 = one per core); results do not depend on it.
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    /// Also write every replica's round decomposition to this CSV path.
    #[arg(long)]
    pub rounds_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FormulaArgs {
    /// Operation name: round-failure, pmf, gautschi, prop-s-b, gamma-tail,
    /// max-exp, scale, leaf-matrix, hop-window, deimmunize-window,
    /// ln-gamma.
    #[arg(long)]
    pub op: String,
    /// Infected-leaf count.
    #[arg(long)]
    pub a: Option<u32>,
    /// Count parameter (leaves or exponentials).
    #[arg(long)]
    pub n: Option<u64>,
    /// Infection rate.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// De-immunization rate.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Free numeric argument.
    #[arg(long)]
    pub x: Option<f64>,
    /// Exponential rate.
    #[arg(long)]
    pub rate: Option<f64>,
    /// Tail-bound slack.
    #[arg(long)]
    pub t: Option<f64>,
    /// Series tolerance.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// TOML configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides [output] dir and STARSIM_OUT_DIR).
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Worker threads (overrides [run] workers; 0 = one per core).
    #[arg(long)]
    pub workers: Option<usize>,
}

/// Run a parsed command line, returning the process exit code.
pub fn dispatch(cli: &Cli) -> Result<i32, CliError> {
    match &cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Formula(args) => cmd_formula(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Oracle(args) => cmd_oracle(args),
        Command::Audit(args) => cmd_audit(args),
        Command::Coupled(args) => cmd_coupled(args),
    }
}

#[derive(Serialize)]
struct SimulateJson {
    command: &'static str,
    seed: u64,
    horizon: f64,
    #[serde(flatten)]
    point: PointJson,
}

fn cmd_simulate(args: &SimulateArgs) -> Result<i32, CliError> {
    let spec = PointSpec {
        n: args.n,
        lambda: args.lambda,
        alpha: args.alpha,
        variant: args.variant.into(),
        engine: args.engine.into(),
        replicas: args.replicas,
        horizon: args.horizon.unwrap_or(DEFAULT_HORIZON),
    };
    spec.validate()?;
    let result = if let Some(path) = &args.rounds_csv {
        let (samples, rounds) = runner::run_point_with_rounds(&spec, args.seed, 0)?;
        output::write_rounds_csv(path, &rounds)?;
        aggregate_point(0, &spec, &samples)?
    } else {
        let pool = runner::build_pool(args.workers)?;
        let mut results = runner::run_points(&pool, std::slice::from_ref(&spec), args.seed)?;
        results.remove(0)
    };
    let summary = SimulateJson {
        command: "simulate",
        seed: args.seed,
        horizon: spec.horizon,
        point: PointJson::from(&result),
    };
    println!("{}", output::to_json_pretty(&summary)?.trim_end());
    Ok(EXIT_OK)
}

fn req<T: Copy>(value: Option<T>, flag: &'static str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::Usage(format!("{flag} is required for this operation")))
}

fn cmd_formula(args: &FormulaArgs) -> Result<i32, CliError> {
    let (inputs, output) = evaluate_formula(args)?;
    let doc = json!({
        "operation": args.op,
        "inputs": inputs,
        "output": output,
    });
    println!(
        "{}",
        serde_json::to_string_pretty(&doc)
            .map_err(|e| CliError::Config(format!("serialization failed: {e}")))?
    );
    Ok(EXIT_OK)
}

fn evaluate_formula(
    args: &FormulaArgs,
) -> Result<(serde_json::Value, serde_json::Value), CliError> {
    match args.op.as_str() {
        "round-failure" => {
            let a = req(args.a, "--a")?;
            let lambda = req(args.lambda, "--lambda")?;
            let alpha = req(args.alpha, "--alpha")?;
            let value = analytics::round_failure_prob(a, lambda, alpha)?;
            Ok((
                json!({"a": a, "lambda": lambda, "alpha": alpha}),
                json!(value),
            ))
        }
        "pmf" => {
            let a = req(args.a, "--a")?;
            let alpha = req(args.alpha, "--alpha")?;
            let values = analytics::immunity_survival_pmf(a, alpha)?;
            Ok((json!({"a": a, "alpha": alpha}), json!(values)))
        }
        "gautschi" => {
            let alpha = req(args.alpha, "--alpha")?;
            let x = req(args.x, "--x")?;
            let value = analytics::gautschi_series(alpha, x, args.tol)?;
            Ok((
                json!({"alpha": alpha, "x": x, "tol": args.tol}),
                json!(value),
            ))
        }
        "prop-s-b" => {
            let alpha = req(args.alpha, "--alpha")?;
            let value = analytics::prop_s_constant(alpha)?;
            Ok((json!({"alpha": alpha}), json!(value)))
        }
        "gamma-tail" => {
            let n = req(args.n, "--n")?;
            let rate = req(args.rate, "--rate")?;
            let t = req(args.t, "--t")?;
            let bound = analytics::gamma_tail_bound(n, rate, t)?;
            Ok((
                json!({"n": n, "rate": rate, "t": t}),
                json!({"threshold": bound.threshold, "bound": bound.bound}),
            ))
        }
        "max-exp" => {
            let n = req(args.n, "--n")?;
            let rate = req(args.rate, "--rate")?;
            let value = analytics::expected_max_exponentials(n, rate)?;
            Ok((
                json!({"n": n, "rate": rate}),
                json!({"mean": value.mean, "upper_bound": value.upper_bound}),
            ))
        }
        "scale" => {
            let n = req(args.n, "--n")?;
            let n = u32::try_from(n)
                .map_err(|_| CliError::Usage("--n is too large for scale".into()))?;
            let lambda = req(args.lambda, "--lambda")?;
            let alpha = req(args.alpha, "--alpha")?;
            let value = analytics::survival_scale(n, lambda, alpha)?;
            Ok((
                json!({"n": n, "lambda": lambda, "alpha": alpha}),
                json!(value),
            ))
        }
        "leaf-matrix" => {
            let x = req(args.x, "--x")?;
            let lambda = req(args.lambda, "--lambda")?;
            let alpha = req(args.alpha, "--alpha")?;
            let matrix = analytics::leaf_transition_matrix(x, lambda, alpha)?;
            Ok((
                json!({"x": x, "lambda": lambda, "alpha": alpha}),
                json!(matrix),
            ))
        }
        "hop-window" => {
            let x = req(args.x, "--x")?;
            let lambda = req(args.lambda, "--lambda")?;
            let value = analytics::single_hop_window_prob(x, lambda)?;
            Ok((json!({"x": x, "lambda": lambda}), json!(value)))
        }
        "deimmunize-window" => {
            let x = req(args.x, "--x")?;
            let lambda = req(args.lambda, "--lambda")?;
            let alpha = req(args.alpha, "--alpha")?;
            let value = analytics::deimmunize_hop_window_prob(x, lambda, alpha)?;
            Ok((
                json!({"x": x, "lambda": lambda, "alpha": alpha}),
                json!(value),
            ))
        }
        "ln-gamma" => {
            let x = req(args.x, "--x")?;
            let value = analytics::ln_gamma(x)?;
            Ok((json!({"x": x}), json!(value)))
        }
        other => Err(CliError::Usage(format!(
            "unknown formula operation {other:?}"
        ))),
    }
}

/// Shared scaffold for the config-driven commands.
struct CommandContext {
    cfg: ConfigFile,
    out_dir: PathBuf,
    workers: usize,
    started_unix_ms: u64,
}

impl CommandContext {
    fn new(args: &ConfigArgs) -> Result<Self, CliError> {
        let cfg = load_config(&args.config)?;
        let out_dir = resolve_out_dir(args.out_dir.as_deref(), cfg.output.as_ref());
        fs::create_dir_all(&out_dir)?;
        let workers = args.workers.or(cfg.run.workers).unwrap_or(0);
        Ok(CommandContext {
            cfg,
            out_dir,
            workers,
            started_unix_ms: unix_millis(),
        })
    }

    fn path(&self, file: &str) -> PathBuf {
        self.out_dir.join(file)
    }

    /// Write the manifest (always last: it digests the data files).
    fn finish(
        &self,
        command: &str,
        points: Vec<ManifestPoint>,
        data_files: &[&Path],
    ) -> Result<(), CliError> {
        let mut outputs: Vec<OutputDigest> = Vec::with_capacity(data_files.len());
        for file in data_files {
            outputs.push(digest_file(file)?);
        }
        let manifest = RunManifest {
            tool: "starsim",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            master_seed: self.cfg.run.master_seed,
            workers: self.workers,
            started_unix_ms: self.started_unix_ms,
            finished_unix_ms: unix_millis(),
            config: serde_json::to_value(&self.cfg)
                .map_err(|e| CliError::Config(format!("serialization failed: {e}")))?,
            points,
            outputs,
        };
        output::write_manifest(&self.out_dir, &manifest)?;
        Ok(())
    }
}

fn manifest_points(specs: &[PointSpec]) -> Vec<ManifestPoint> {
    specs
        .iter()
        .enumerate()
        .map(|(i, s)| ManifestPoint {
            point: i as u64,
            n: s.n,
            lambda: s.lambda,
            alpha: s.alpha,
            variant: variant_name(s.variant),
            engine: engine_name(s.engine),
            replicas: s.replicas,
        })
        .collect()
}

fn fit_mode_name(mode: FitMode) -> &'static str {
    match mode {
        FitMode::VaryLambdaFixedN => "vary-lambda-fixed-n",
        FitMode::VaryNFixedLambda => "vary-n-fixed-lambda",
    }
}

#[derive(Serialize)]
struct SweepSummary {
    command: &'static str,
    master_seed: u64,
    points: Vec<PointJson>,
    /// Max/min ratio of mean tau over the analytic scale across the grid.
    band_ratio_vs_scale: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fit: Option<FitJson>,
}

fn cmd_sweep(args: &ConfigArgs) -> Result<i32, CliError> {
    let ctx = CommandContext::new(args)?;
    let run = &ctx.cfg.run;
    let sweep = ctx
        .cfg
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Config("missing [sweep] section".into()))?;
    let replicas = run
        .replicas
        .ok_or_else(|| CliError::Config("[run] replicas is required for sweep".into()))?;
    let engine = parse_engine(run.engine.as_deref().unwrap_or("lumped"))?;
    let horizon = run.horizon.unwrap_or(DEFAULT_HORIZON);

    let mut specs = Vec::new();
    for v in &sweep.variants {
        let variant = parse_variant(v)?;
        for &alpha in &sweep.alpha {
            for &n in &sweep.n {
                for &lambda in &sweep.lambda {
                    specs.push(PointSpec {
                        n,
                        lambda,
                        alpha,
                        variant,
                        engine,
                        replicas,
                        horizon,
                    });
                }
            }
        }
    }
    if specs.is_empty() {
        return Err(CliError::Config("[sweep] grid is empty".into()));
    }

    let pool = runner::build_pool(ctx.workers)?;
    let results = runner::run_points(&pool, &specs, run.master_seed)?;

    let points_path = ctx.path("points.csv");
    output::write_points_csv(&points_path, &results)?;

    let fit = match &ctx.cfg.fit {
        Some(section) => {
            let mode = parse_fit_mode(&section.mode)?;
            let factor = section.dominance_factor.unwrap_or(DEFAULT_DOMINANCE_FACTOR);
            let fit = fit_exponent(&results, mode, factor)?;
            Some(FitJson::new(&fit, fit_mode_name(mode), factor))
        }
        None => None,
    };
    let ratios: Vec<f64> = results.iter().map(|r| r.tau.mean / r.scale).collect();
    let band_ratio_vs_scale = experiment::band_ratio(&ratios).ok();

    let summary = SweepSummary {
        command: "sweep",
        master_seed: run.master_seed,
        points: results.iter().map(PointJson::from).collect(),
        band_ratio_vs_scale,
        fit,
    };
    let summary_path = ctx.path("summary.json");
    write_json(&summary_path, &summary)?;

    ctx.finish("sweep", manifest_points(&specs), &[&points_path, &summary_path])?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct OracleSummary {
    command: &'static str,
    n: u32,
    lambda: f64,
    alpha: f64,
    variant: &'static str,
    states: usize,
    initial_expected_tau: f64,
    initial_expected_psi: f64,
}

fn cmd_oracle(args: &ConfigArgs) -> Result<i32, CliError> {
    let ctx = CommandContext::new(args)?;
    let section = ctx
        .cfg
        .oracle
        .as_ref()
        .ok_or_else(|| CliError::Config("missing [oracle] section".into()))?;
    let variant = parse_variant(section.variant.as_deref().unwrap_or("x"))?;
    let params = ProcessParams::new(section.n, section.lambda, section.alpha, variant)?;
    let profile = analytics::exact_survival_profile(&params)?;
    let initial = StarState::initial();
    let position = profile
        .position(&initial)
        .ok_or(CliError::Core(starsim_core::Error::Internal(
            "initial state missing from oracle profile",
        )))?;

    let oracle_path = ctx.path("oracle.csv");
    output::write_oracle_csv(&oracle_path, &profile)?;

    let summary = OracleSummary {
        command: "oracle",
        n: section.n,
        lambda: section.lambda,
        alpha: section.alpha,
        variant: variant_name(variant),
        states: profile.states.len(),
        initial_expected_tau: profile.expected_tau[position],
        initial_expected_psi: profile.expected_psi[position],
    };
    let summary_path = ctx.path("summary.json");
    write_json(&summary_path, &summary)?;

    ctx.finish("oracle", Vec::new(), &[&oracle_path, &summary_path])?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct CoupledSummaryJson {
    command: &'static str,
    kind: &'static str,
    n: u32,
    lambda: f64,
    alpha: f64,
    runs: u64,
    round_cap: u32,
    violations: u64,
    capped: u64,
    pass_rate: f64,
    mean_psi_x: f64,
    mean_psi_y: f64,
    ok: bool,
}

/// Shared implementation of the coupling audit and the coupled export.
fn run_coupled_command(
    ctx: &CommandContext,
    command: &'static str,
    jsonl_name: &str,
    n: u32,
    lambda: f64,
    alpha: f64,
    runs: u64,
    round_cap: u32,
) -> Result<i32, CliError> {
    let pool = runner::build_pool(ctx.workers)?;
    let collected = runner::run_coupled(
        &pool,
        n,
        lambda,
        alpha,
        runs,
        round_cap,
        ctx.cfg.run.master_seed,
    )?;
    let reduced = runner::summarize_coupled(&collected);

    let jsonl_path = ctx.path(jsonl_name);
    output::write_coupled_jsonl(&jsonl_path, &collected)?;

    let summary = CoupledSummaryJson {
        command,
        kind: "coupling",
        n,
        lambda,
        alpha,
        runs: reduced.runs,
        round_cap,
        violations: reduced.violations,
        capped: reduced.capped,
        pass_rate: (reduced.runs - reduced.violations) as f64 / reduced.runs as f64,
        mean_psi_x: reduced.mean_psi_x,
        mean_psi_y: reduced.mean_psi_y,
        ok: reduced.ok,
    };
    let summary_path = ctx.path("summary.json");
    write_json(&summary_path, &summary)?;

    ctx.finish(command, Vec::new(), &[&jsonl_path, &summary_path])?;
    Ok(if reduced.ok { EXIT_OK } else { EXIT_AUDIT })
}

#[derive(Serialize)]
struct FloorSummary {
    command: &'static str,
    kind: &'static str,
    n: u32,
    lambda: f64,
    alpha: f64,
    variant: &'static str,
    engine: &'static str,
    replicas: u64,
    above: u64,
    threshold: f64,
    fraction_above: f64,
    required_fraction: f64,
    ok: bool,
}

#[derive(Serialize)]
struct EnginesSummary {
    command: &'static str,
    kind: &'static str,
    n: u32,
    lambda: f64,
    alpha: f64,
    variant: &'static str,
    replicas: u64,
    ks_alpha: f64,
    mean_tau_lumped: f64,
    mean_tau_general: f64,
    z_tau: f64,
    z_psi: f64,
    ks_stat: f64,
    ks_critical: f64,
    ok: bool,
}

#[derive(Serialize)]
struct GridAuditSummary {
    command: &'static str,
    kind: &'static str,
    cells: usize,
    failed_cells: usize,
    ok: bool,
}

fn cmd_audit(args: &ConfigArgs) -> Result<i32, CliError> {
    let ctx = CommandContext::new(args)?;
    let section = ctx
        .cfg
        .audit
        .clone()
        .ok_or_else(|| CliError::Config("missing [audit] section".into()))?;
    let master = ctx.cfg.run.master_seed;
    match section {
        AuditSection::Coupling {
            n,
            lambda,
            alpha,
            runs,
            round_cap,
        } => run_coupled_command(
            &ctx,
            "audit",
            "audits.jsonl",
            n,
            lambda,
            alpha,
            runs,
            round_cap.unwrap_or(DEFAULT_ROUND_CAP),
        ),
        AuditSection::Floor {
            n,
            lambda,
            alpha,
            replicas,
            variant,
            engine,
            required_fraction,
        } => {
            let variant = parse_variant(variant.as_deref().unwrap_or("x"))?;
            let engine = parse_engine(engine.as_deref().unwrap_or("lumped"))?;
            let required = required_fraction.unwrap_or(0.999);
            let params = ProcessParams::new(n, lambda, alpha, variant)?;
            let audit =
                experiment::audit_floor(&params, engine, replicas, master, 0, required)?;
            let summary = FloorSummary {
                command: "audit",
                kind: "floor",
                n,
                lambda,
                alpha,
                variant: variant_name(variant),
                engine: engine_name(engine),
                replicas: audit.replicas,
                above: audit.above,
                threshold: audit.threshold,
                fraction_above: audit.fraction_above,
                required_fraction: audit.required_fraction,
                ok: audit.ok,
            };
            let summary_path = ctx.path("summary.json");
            write_json(&summary_path, &summary)?;
            ctx.finish("audit", Vec::new(), &[&summary_path])?;
            Ok(if audit.ok { EXIT_OK } else { EXIT_AUDIT })
        }
        AuditSection::Engines {
            n,
            lambda,
            alpha,
            replicas,
            variant,
            ks_alpha,
        } => {
            let variant = parse_variant(variant.as_deref().unwrap_or("x"))?;
            let ks_alpha = ks_alpha.unwrap_or(0.001);
            let params = ProcessParams::new(n, lambda, alpha, variant)?;
            let cmp = experiment::compare_engines(&params, replicas, master, ks_alpha)?;
            let summary = EnginesSummary {
                command: "audit",
                kind: "engines",
                n,
                lambda,
                alpha,
                variant: variant_name(variant),
                replicas: cmp.replicas,
                ks_alpha,
                mean_tau_lumped: cmp.mean_tau_lumped,
                mean_tau_general: cmp.mean_tau_general,
                z_tau: cmp.z_tau,
                z_psi: cmp.z_psi,
                ks_stat: cmp.ks_stat,
                ks_critical: cmp.ks_critical,
                ok: cmp.ok,
            };
            let summary_path = ctx.path("summary.json");
            write_json(&summary_path, &summary)?;
            ctx.finish("audit", Vec::new(), &[&summary_path])?;
            Ok(if cmp.ok { EXIT_OK } else { EXIT_AUDIT })
        }
        AuditSection::RoundFailure {
            a,
            lambda,
            alpha,
            trials,
        } => {
            let checks_path = ctx.path("checks.csv");
            let mut w = csv::Writer::from_path(&checks_path)
                .map_err(|e| CliError::Config(format!("csv: {e}")))?;
            w.write_record([
                "a",
                "lambda",
                "alpha",
                "trials",
                "failures",
                "fraction",
                "lower",
                "upper",
                "predicted",
                "ok",
            ])
            .map_err(|e| CliError::Config(format!("csv: {e}")))?;
            let mut cells = 0usize;
            let mut failed = 0usize;
            let mut point = 0u64;
            for &av in &a {
                for &lv in &lambda {
                    for &alv in &alpha {
                        let check = experiment::empirical_round_failure(
                            av, lv, alv, trials, master, point,
                        )?;
                        point += 1;
                        cells += 1;
                        if !check.ok {
                            failed += 1;
                        }
                        w.write_record([
                            check.a.to_string(),
                            check.lambda.to_string(),
                            check.alpha.to_string(),
                            check.trials.to_string(),
                            check.failures.to_string(),
                            check.fraction.to_string(),
                            check.lower.to_string(),
                            check.upper.to_string(),
                            check.predicted.to_string(),
                            check.ok.to_string(),
                        ])
                        .map_err(|e| CliError::Config(format!("csv: {e}")))?;
                    }
                }
            }
            w.flush()?;
            drop(w);
            let summary = GridAuditSummary {
                command: "audit",
                kind: "round-failure",
                cells,
                failed_cells: failed,
                ok: failed == 0,
            };
            let summary_path = ctx.path("summary.json");
            write_json(&summary_path, &summary)?;
            ctx.finish("audit", Vec::new(), &[&checks_path, &summary_path])?;
            Ok(if failed == 0 { EXIT_OK } else { EXIT_AUDIT })
        }
        AuditSection::Residual {
            n,
            lambda,
            alpha,
            replicas,
        } => {
            let checks_path = ctx.path("checks.csv");
            let mut w = csv::Writer::from_path(&checks_path)
                .map_err(|e| CliError::Config(format!("csv: {e}")))?;
            w.write_record([
                "n",
                "lambda",
                "alpha",
                "runs",
                "mean_residual",
                "mean_positive_residual",
                "bound",
                "ok",
            ])
            .map_err(|e| CliError::Config(format!("csv: {e}")))?;
            let mut cells = 0usize;
            let mut failed = 0usize;
            for (point, &nv) in n.iter().enumerate() {
                let params = ProcessParams::new(nv, lambda, alpha, Variant::X)?;
                let check =
                    experiment::residual_check(&params, replicas, master, point as u64)?;
                cells += 1;
                if !check.ok {
                    failed += 1;
                }
                w.write_record([
                    nv.to_string(),
                    lambda.to_string(),
                    alpha.to_string(),
                    check.runs.to_string(),
                    check.mean_residual.to_string(),
                    check.mean_positive_residual.to_string(),
                    check.bound.to_string(),
                    check.ok.to_string(),
                ])
                .map_err(|e| CliError::Config(format!("csv: {e}")))?;
            }
            w.flush()?;
            drop(w);
            let summary = GridAuditSummary {
                command: "audit",
                kind: "residual",
                cells,
                failed_cells: failed,
                ok: failed == 0,
            };
            let summary_path = ctx.path("summary.json");
            write_json(&summary_path, &summary)?;
            ctx.finish("audit", Vec::new(), &[&checks_path, &summary_path])?;
            Ok(if failed == 0 { EXIT_OK } else { EXIT_AUDIT })
        }
    }
}

fn cmd_coupled(args: &ConfigArgs) -> Result<i32, CliError> {
    let ctx = CommandContext::new(args)?;
    let section = ctx
        .cfg
        .coupled
        .clone()
        .ok_or_else(|| CliError::Config("missing [coupled] section".into()))?;
    run_coupled_command(
        &ctx,
        "coupled",
        "runs.jsonl",
        section.n,
        section.lambda,
        section.alpha,
        section.runs,
        section.round_cap.unwrap_or(DEFAULT_ROUND_CAP),
    )
}
