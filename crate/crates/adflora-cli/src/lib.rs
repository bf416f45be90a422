//! Command implementations behind the `adflora` binary.
//!
//! Four commands, stable exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | configuration/validation error |
//! | 2 | IO error |
//! | 3 | numeric failure during a run |
//! | 4 | verification failure |
//!
//! `run` executes one experiment per seed and writes
//! `<out>/run-<id>/trace_seed<k>.csv` plus a `summary.json`; `sweep-t`
//! repeats a battery across switching intervals; `compare` runs several
//! methods on the identical task/seed/topology set; `verify` runs the
//! check battery. Nothing outside the output directory is ever touched.

pub mod report;
pub mod summary;

use adflora::config::{parse_config_with_overrides, ExperimentConfig, MethodKind};
use adflora::engine::{run_experiment, write_trace_csv, RunOutput};
use adflora::error::Error;
use adflora::verify;
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_VERIFY: i32 = 4;

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "ADFLORA_OUT";

/// Map library errors onto the exit-code contract.
pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::InvalidConfig(_) | Error::Malformed { .. } | Error::Precondition(_) => EXIT_CONFIG,
        Error::Io { .. } => EXIT_IO,
        Error::NonFinite(_) | Error::NonConvergence { .. } => EXIT_NUMERIC,
        Error::InvalidMixingMatrix(_) => EXIT_CONFIG,
    }
}

fn read_config(path: &Path, overrides: &[String]) -> Result<ExperimentConfig, Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_config_with_overrides(&text, overrides)
}

/// Output root: `--out` beats the environment variable beats the config.
pub fn resolve_output_root(cfg: &ExperimentConfig, out_flag: Option<&Path>) -> PathBuf {
    if let Some(p) = out_flag {
        return p.to_path_buf();
    }
    if let Ok(env) = std::env::var(OUT_ENV) {
        if !env.is_empty() {
            return PathBuf::from(env);
        }
    }
    PathBuf::from(cfg.run.output_dir.as_deref().unwrap_or("runs"))
}

/// Deterministic run identifier: hash of the resolved config echo and the
/// seed list, so reruns land in the same directory.
pub fn run_id(cfg: &ExperimentConfig) -> String {
    let mut hasher = Sha256::new();
    hasher.update(cfg.to_toml().as_bytes());
    let digest = hasher.finalize();
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::io(path.display().to_string(), e)
}

/// Execute every seed of a config in parallel, each writing its own trace
/// file under `dir` when given. Outputs come back in seed-list order.
pub fn run_battery(
    cfg: &ExperimentConfig,
    trace_dir: Option<&Path>,
) -> Result<Vec<RunOutput>, Error> {
    let seeds = cfg.run.seeds.clone().unwrap_or_else(|| vec![0]);
    seeds
        .par_iter()
        .map(|&seed| {
            let out = run_experiment(cfg, seed)?;
            if let Some(dir) = trace_dir {
                let path = dir.join(format!("trace_seed{seed}.csv"));
                let mut buf = Vec::new();
                write_trace_csv(&mut buf, &out.trace).map_err(|e| io_err(&path, e))?;
                std::fs::write(&path, buf).map_err(|e| io_err(&path, e))?;
            }
            Ok(out)
        })
        .collect()
}

/// `run`: one battery, trace CSVs plus `summary.json`.
pub fn cmd_run(config_path: &Path, overrides: &[String], out_flag: Option<&Path>) -> i32 {
    match run_inner(config_path, overrides, out_flag) {
        Ok(dir) => {
            println!("wrote {}", dir.display());
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

fn run_inner(
    config_path: &Path,
    overrides: &[String],
    out_flag: Option<&Path>,
) -> Result<PathBuf, Error> {
    let cfg = read_config(config_path, overrides)?;
    let root = resolve_output_root(&cfg, out_flag);
    let dir = root.join(format!("run-{}", run_id(&cfg)));
    std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;

    let outputs = run_battery(&cfg, Some(&dir))?;
    let summary = summary::RunSummary::build(&cfg, &run_id(&cfg), &outputs);
    let path = dir.join("summary.json");
    std::fs::write(
        &path,
        serde_json::to_string_pretty(&summary).expect("summary serializes"),
    )
    .map_err(|e| io_err(&path, e))?;
    Ok(dir)
}

/// `sweep-t`: the battery per switching interval, one combined table.
pub fn cmd_sweep_t(
    config_path: &Path,
    overrides: &[String],
    t_values: &[usize],
    out_flag: Option<&Path>,
) -> i32 {
    match sweep_inner(config_path, overrides, t_values, out_flag) {
        Ok((dir, table)) => {
            println!("{table}");
            println!("wrote {}", dir.display());
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

/// The battery per interval value, in order.
pub fn run_sweep(
    base: &ExperimentConfig,
    t_values: &[usize],
) -> Result<Vec<report::SweepRow>, Error> {
    if !base.method.kind.is_alternating() {
        return Err(Error::InvalidConfig(vec![
            "method.kind: sweep-t needs an alternating method".into(),
        ]));
    }
    let mut rows = Vec::new();
    for &t in t_values {
        let mut cfg = base.clone();
        cfg.method.t = Some(t);
        cfg.validate()?;
        let outputs = run_battery(&cfg, None)?;
        rows.push(report::SweepRow::from_outputs(t, &outputs));
    }
    Ok(rows)
}

fn sweep_inner(
    config_path: &Path,
    overrides: &[String],
    t_values: &[usize],
    out_flag: Option<&Path>,
) -> Result<(PathBuf, String), Error> {
    let base = read_config(config_path, overrides)?;
    let rows = run_sweep(&base, t_values)?;

    let root = resolve_output_root(&base, out_flag);
    let dir = root.join(format!("sweep-{}", run_id(&base)));
    std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;

    let csv = report::sweep_csv(&rows);
    let text = report::sweep_table(&rows);
    let csv_path = dir.join("sweep_t.csv");
    std::fs::write(&csv_path, &csv).map_err(|e| io_err(&csv_path, e))?;
    let txt_path = dir.join("sweep_t.txt");
    std::fs::write(&txt_path, &text).map_err(|e| io_err(&txt_path, e))?;
    Ok((dir, text))
}

/// `compare`: several methods on the identical task, seeds, and topology.
pub fn cmd_compare(
    config_path: &Path,
    overrides: &[String],
    methods: &[String],
    out_flag: Option<&Path>,
) -> i32 {
    match compare_inner(config_path, overrides, methods, out_flag) {
        Ok((dir, table)) => {
            println!("{table}");
            println!("wrote {}", dir.display());
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

pub fn parse_method_name(name: &str) -> Result<MethodKind, Error> {
    match name.trim() {
        "naive" => Ok(MethodKind::Naive),
        "ffa" => Ok(MethodKind::Ffa),
        "rolora_cfl" => Ok(MethodKind::RoloraCfl),
        "rolora_dfl" => Ok(MethodKind::RoloraDfl),
        "adf" => Ok(MethodKind::Adf),
        other => Err(Error::InvalidConfig(vec![format!(
            "methods: unknown method `{other}` (expected naive | ffa | rolora_cfl | rolora_dfl | adf)"
        )])),
    }
}

/// Re-target a config at another method, dropping fields the new kind
/// does not use.
pub fn with_method(base: &ExperimentConfig, kind: MethodKind) -> ExperimentConfig {
    let mut cfg = base.clone();
    cfg.method.kind = kind;
    if !kind.is_alternating() {
        cfg.method.t = None;
    }
    if kind != MethodKind::Ffa {
        cfg.method.ffa_frozen_block = None;
    }
    cfg.normalize();
    cfg
}

fn compare_inner(
    config_path: &Path,
    overrides: &[String],
    methods: &[String],
    out_flag: Option<&Path>,
) -> Result<(PathBuf, String), Error> {
    let base = read_config(config_path, overrides)?;
    if methods.is_empty() {
        return Err(Error::InvalidConfig(vec![
            "methods: need at least one method to compare".into(),
        ]));
    }
    let mut rows = Vec::new();
    for name in methods {
        let kind = parse_method_name(name)?;
        let cfg = with_method(&base, kind);
        cfg.validate()?;
        let outputs = run_battery(&cfg, None)?;
        rows.push(report::CompareRow::from_outputs(name.trim(), &outputs));
    }

    let root = resolve_output_root(&base, out_flag);
    let dir = root.join(format!("compare-{}", run_id(&base)));
    std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;

    let csv = report::compare_csv(&rows);
    let text = report::compare_table(&rows);
    let csv_path = dir.join("compare.csv");
    std::fs::write(&csv_path, &csv).map_err(|e| io_err(&csv_path, e))?;
    let txt_path = dir.join("compare.txt");
    std::fs::write(&txt_path, &text).map_err(|e| io_err(&txt_path, e))?;
    Ok((dir, text))
}


/// `verify`: the named check battery; exit 0 only if everything passes.
pub fn cmd_verify(config_path: Option<&Path>, overrides: &[String]) -> i32 {
    let seed = match config_path {
        Some(path) => match read_config(path, overrides) {
            Ok(cfg) => cfg.run.seeds.as_ref().and_then(|s| s.first().copied()).unwrap_or(0),
            Err(e) => {
                eprintln!("error: {e}");
                return exit_code_for(&e);
            }
        },
        None => 0,
    };
    let reports = verify::full_battery(seed);
    let mut all_ok = true;
    for r in &reports {
        println!("{r}");
        all_ok &= r.passed;
    }
    if all_ok {
        println!("all {} checks passed (seed {seed})", reports.len());
        EXIT_OK
    } else {
        let failed: Vec<&str> = reports.iter().filter(|r| !r.passed).map(|r| r.name).collect();
        eprintln!("failed checks: {}", failed.join(", "));
        EXIT_VERIFY
    }
}
