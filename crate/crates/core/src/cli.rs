//! Command dispatch and durable outputs.
//!
//! Every subcommand writes its CSV files into the output directory and a
//! `<command>_manifest.json` listing them together with the config echo,
//! version, wall time, and measured diagnostics.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use crate::config::{parse_config, ContinuationKind, LabConfig};
use crate::diagnostics::ShellSpectrum;
use crate::error::{LabError, Result};
use crate::experiments::{
    find_viscosity_for_dissipation, run_longtime_family, run_thm1_scenario, run_thm2_scenario,
    sweep, sweep_csv, thm1_family_flags, thm2_family_flags, to_unit_torus, ScenarioResult,
    SweepCell,
};
use crate::glue::{Continuation, CutoffPair, GlueSchedule};
use crate::mixing_blocks::{block_initial_density, verify_block_estimates};
use crate::solver::{fmt17, run, run_pair, write_snapshot, RunLedger, CLOSURE_TOLERANCE};

pub const THREADS_ENV: &str = "ANOMALYLAB_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "anomalylab",
    version,
    about = "Dissipation-anomaly laboratory for a passive scalar on the torus"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Configuration file (flat `key = value`).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; falls back to ANOMALYLAB_THREADS, then `threads`.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Measure the block estimates for stages 0..=max(m).
    BlockVerify,
    /// One run of the configured schedule and viscosity.
    Run,
    /// Viscous and inviscid runs with the stability bound.
    Pair,
    /// Forward or reversed family over `stage.m` × `sweep.kinds`.
    Sweep,
    /// Viscosity search for each of `search.targets`.
    FindNu,
    /// Forward cascade family with the held continuation.
    Thm1,
    /// Reversed cascade family.
    Thm2,
    /// Long-time periodic drag family.
    Longtime,
    /// Summarize manifests found in a directory.
    Report {
        /// Directory to scan; defaults to the output directory.
        dir: Option<PathBuf>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::BlockVerify => "block-verify",
            Command::Run => "run",
            Command::Pair => "pair",
            Command::Sweep => "sweep",
            Command::FindNu => "find-nu",
            Command::Thm1 => "thm1",
            Command::Thm2 => "thm2",
            Command::Longtime => "longtime",
            Command::Report { .. } => "report",
        }
    }
}

/// Result of one dispatch: the manifest and a deferred invariant failure.
#[derive(Debug)]
pub struct Outcome {
    pub manifest: Value,
    pub manifest_path: Option<PathBuf>,
    pub failure: Option<LabError>,
    pub summary: Vec<String>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        self.failure.as_ref().map_or(0, LabError::exit_code)
    }
}

pub fn load_config(path: Option<&Path>) -> Result<LabConfig> {
    match path {
        None => Ok(LabConfig::default()),
        Some(p) => {
            let text =
                fs::read_to_string(p).map_err(|e| LabError::Io(format!("{}: {e}", p.display())))?;
            Ok(parse_config(&text)?)
        }
    }
}

/// `--threads`, then the environment, then the config.
pub fn resolve_threads(
    flag: Option<usize>,
    env: Option<&str>,
    cfg: &LabConfig,
) -> Result<Option<usize>> {
    if let Some(t) = flag {
        return Ok(Some(t));
    }
    if let Some(raw) = env {
        return raw
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&t| t > 0)
            .map(Some)
            .ok_or_else(|| {
                LabError::Config(format!(
                    "{THREADS_ENV}: expected a positive integer, got {raw:?}"
                ))
            });
    }
    Ok(cfg.experiment.threads)
}

struct Writer {
    dir: PathBuf,
    files: Vec<String>,
}

impl Writer {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| LabError::Io(format!("{}: {e}", dir.display())))?;
        Ok(Writer {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn text(&mut self, name: &str, body: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, body).map_err(|e| LabError::Io(format!("{}: {e}", path.display())))?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn snapshot(&mut self, name: &str, field: &crate::field::ScalarField2D, t: f64) -> Result<()> {
        write_snapshot(&self.dir.join(name), field, t)?;
        self.files.push(name.to_string());
        Ok(())
    }
}

fn continuation(cfg: &LabConfig) -> Result<Continuation> {
    Ok(match cfg.continuation {
        ContinuationKind::Hold => Continuation::Hold,
        ContinuationKind::Reversed => Continuation::Reversed,
        ContinuationKind::Periodized => {
            let tau = cfg.longtime.tau.ok_or(LabError::InvalidParameter {
                name: "longtime.tau",
                reason: "required by periodized continuation".into(),
            })?;
            Continuation::Periodized {
                cutoffs: CutoffPair::new(tau)?,
            }
        }
    })
}

fn tag(t: f64) -> String {
    format!("{t}").replace('.', "p")
}

fn localization(ledger: &RunLedger) -> Value {
    Value::Array(
        ledger
            .t
            .iter()
            .zip(&ledger.shells)
            .map(|(&t, e)| {
                let s = ShellSpectrum::from_energies(e.clone());
                json!({
                    "t": t,
                    "q_tilde": s.dominant,
                    "alpha": s.fit.map(|f| f.alpha),
                    "c": s.fit.map(|f| f.c),
                    "r2": s.fit.map(|f| f.r2),
                })
            })
            .collect(),
    )
}

fn closure_failure(ledgers: &[&RunLedger]) -> Option<LabError> {
    ledgers
        .iter()
        .find_map(|l| l.check_closure(CLOSURE_TOLERANCE).err())
}

fn flags_json(flags: &[(String, bool)]) -> Value {
    Value::Object(
        flags
            .iter()
            .map(|(k, v)| (k.clone(), Value::Bool(*v)))
            .collect(),
    )
}

fn scenario_json(r: &ScenarioResult) -> Value {
    let mut v = serde_json::to_value(r).unwrap_or(Value::Null);
    if let Value::Object(map) = &mut v {
        map.remove("profile");
        if !r.ledger.shells.is_empty() {
            map.insert("localization".into(), localization(&r.ledger));
        }
    }
    v
}

fn family(
    cfg: &LabConfig,
    w: &mut Writer,
    prefix: &str,
    reversed: bool,
) -> Result<(Value, Vec<(String, bool)>, Option<LabError>, Vec<String>)> {
    let exp = &cfg.experiment;
    let mut rows = Vec::new();
    for &m in &cfg.ms {
        let r = if reversed {
            run_thm2_scenario(m, cfg.viscosity, exp)?
        } else {
            run_thm1_scenario(m, cfg.viscosity, exp)?
        };
        w.text(&format!("{prefix}_m{m}.csv"), &r.ledger.to_csv())?;
        rows.push(r);
    }
    let flags = if reversed {
        thm2_family_flags(&rows, cfg.viscosity)
    } else {
        thm1_family_flags(&rows, cfg.viscosity)
    };
    let failure = closure_failure(&rows.iter().map(|r| &r.ledger).collect::<Vec<_>>());
    let summary = rows
        .iter()
        .map(|r| {
            format!(
                "m={} N={} nu={:.4e} D(1)={:.4} D(1+d)={:.4} D(2)={:.4} E(2)={:.4}",
                r.m, r.n, r.nu, r.d_at_1, r.d_at_1p_delta, r.d_at_2, r.e_at_2
            )
        })
        .collect();
    Ok((
        Value::Array(rows.iter().map(scenario_json).collect()),
        flags,
        failure,
        summary,
    ))
}

/// Runs one subcommand and writes its artifacts into `out`.
pub fn dispatch(
    command: &Command,
    cfg: &LabConfig,
    config_text: &str,
    out: &Path,
) -> Result<Outcome> {
    let started = Instant::now();
    if let Command::Report { dir } = command {
        return report(dir.as_deref().unwrap_or(out));
    }
    let mut w = Writer::new(out)?;
    let exp = &cfg.experiment;
    let m0 = cfg.ms[0];
    let mut flags: Vec<(String, bool)> = Vec::new();
    let mut failure = None;
    let mut summary = Vec::new();
    let diagnostics: Value = match command {
        Command::BlockVerify => {
            let max_m = cfg.ms.iter().copied().max().unwrap_or(0);
            let mut csv = String::from("n,lambda_n,sup_linf,grad_ratio,mixnorm_ratio,pass\n");
            let mut reports = Vec::new();
            for n in 0..=max_m {
                let r = verify_block_estimates(n, &exp.params, exp.grid_for(max_m)?, &cfg.caps)?;
                csv.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    r.n,
                    r.lambda_n,
                    fmt17(r.sup_linf),
                    fmt17(r.grad_ratio),
                    fmt17(r.mixnorm_ratio),
                    r.pass
                ));
                summary.push(format!(
                    "n={} linf={:.4} grad/lambda={:.4} mix*lambda={:.4} {}",
                    r.n,
                    r.sup_linf,
                    r.grad_ratio,
                    r.mixnorm_ratio,
                    if r.pass { "pass" } else { "fail" }
                ));
                flags.push((format!("block_{n}"), r.pass));
                reports.push(r);
            }
            w.text("block_verify.csv", &csv)?;
            serde_json::to_value(&reports).unwrap_or(Value::Null)
        }
        Command::Run | Command::Pair => {
            let nu = cfg.viscosity.value(m0, exp.params.base, exp.alpha_c)?;
            let n = exp.grid_for(m0)?;
            let schedule = GlueSchedule::new(m0, exp.params.clone(), continuation(cfg)?)?;
            let mut scfg = exp.solver(n, to_unit_torus(nu));
            scfg.snapshot_times = cfg.snapshots.clone();
            let theta0 = block_initial_density(n)?;
            if matches!(command, Command::Run) {
                let out = run(&schedule, &theta0, &scfg)?;
                w.text(&format!("run_m{m0}.csv"), &out.ledger.to_csv())?;
                for (t, f) in &out.snapshots {
                    w.snapshot(&format!("run_m{m0}_t{}.snap", tag(*t)), f, *t)?;
                }
                failure = closure_failure(&[&out.ledger]);
                flags.push(("closure".into(), failure.is_none()));
                let (res, at) = out.ledger.closure_residual();
                summary.push(format!(
                    "m={m0} N={n} nu={nu:.4e} E(end)={:.6} D(end)={:.6} closure={res:.2e} at t={at}",
                    out.ledger.energy.last().copied().unwrap_or(0.0),
                    out.ledger.dissipation.last().copied().unwrap_or(0.0)
                ));
                let mut v = json!({
                    "m": m0, "N": n, "nu": nu, "nu_unit": scfg.nu,
                    "closure_residual": res, "closure_t": at,
                    "schedule": schedule.summary(),
                });
                if !out.ledger.shells.is_empty() {
                    v["localization"] = localization(&out.ledger);
                }
                v
            } else {
                let p = run_pair(&schedule, &theta0, &scfg)?;
                let mut csv = String::from("t,difference,bound\n");
                for i in 0..p.t.len() {
                    csv.push_str(&format!(
                        "{},{},{}\n",
                        fmt17(p.t[i]),
                        fmt17(p.difference[i]),
                        fmt17(p.bound[i])
                    ));
                }
                w.text(&format!("pair_m{m0}.csv"), &csv)?;
                failure = closure_failure(&[&p.viscous, &p.inviscid]);
                flags.push(("closure".into(), failure.is_none()));
                flags.push(("stability_margin".into(), p.margin >= -1e-10));
                summary.push(format!(
                    "m={m0} N={n} nu={nu:.4e} sup|theta-rho|^2={:.4e} margin={:.4e}",
                    p.sup_difference, p.margin
                ));
                json!({"m": m0, "N": n, "nu": nu, "nu_unit": scfg.nu,
                       "sup_difference": p.sup_difference, "margin": p.margin})
            }
        }
        Command::Sweep => {
            let cells: Vec<SweepCell> = cfg
                .ms
                .iter()
                .flat_map(|&m| {
                    cfg.sweep_kinds
                        .iter()
                        .map(move |&v| SweepCell { m, viscosity: v })
                })
                .collect();
            let cont = continuation(cfg)?;
            let rows = sweep(&cells, cont, exp);
            w.text("sweep.csv", &sweep_csv(&cells, &rows, exp.params.base))?;
            let ledgers: Vec<&RunLedger> = rows
                .iter()
                .filter_map(|r| r.as_ref().ok())
                .map(|r| &r.ledger)
                .collect();
            failure = closure_failure(&ledgers);
            if failure.is_none() {
                failure = rows.iter().find_map(|r| r.as_ref().err().cloned());
            }
            flags.push(("closure".into(), closure_failure(&ledgers).is_none()));
            flags.push(("all_cells_ran".into(), rows.iter().all(|r| r.is_ok())));
            summary.push(format!("{} cells", cells.len()));
            Value::Array(
                rows.iter()
                    .map(|r| match r {
                        Ok(r) => scenario_json(r),
                        Err(e) => json!({"error": e.to_string()}),
                    })
                    .collect(),
            )
        }
        Command::FindNu => {
            let mut csv =
                String::from("m,target,t_star,nu,nu_unit,achieved,iterations,converged\n");
            let mut results = Vec::new();
            for &target in &cfg.search.targets {
                match find_viscosity_for_dissipation(
                    m0,
                    target,
                    cfg.search.t_star,
                    cfg.search.tol,
                    exp,
                ) {
                    Ok(s) => {
                        csv.push_str(&format!(
                            "{},{},{},{},{},{},{},{}\n",
                            m0,
                            fmt17(target),
                            fmt17(s.t_star),
                            fmt17(s.nu),
                            fmt17(s.nu_unit),
                            fmt17(s.achieved),
                            s.iterations,
                            s.converged
                        ));
                        summary.push(format!(
                            "target {target}: nu={:.4e} D={:.4} converged={}",
                            s.nu, s.achieved, s.converged
                        ));
                        flags.push((format!("target_{target}"), s.converged));
                        results.push(serde_json::to_value(&s).unwrap_or(Value::Null));
                    }
                    Err(e) => {
                        summary.push(format!("target {target}: {e}"));
                        flags.push((format!("target_{target}"), false));
                        results.push(json!({"target": target, "error": e.to_string()}));
                        failure.get_or_insert(e);
                    }
                }
            }
            w.text("find_nu.csv", &csv)?;
            Value::Array(results)
        }
        Command::Thm1 | Command::Thm2 => {
            let reversed = matches!(command, Command::Thm2);
            let prefix = format!(
                "{}_{}",
                command.name(),
                cfg.viscosity.label().replace('=', "_")
            );
            let (v, f, fail, s) = family(cfg, &mut w, &prefix, reversed)?;
            flags = f;
            failure = fail;
            summary = s;
            v
        }
        Command::Longtime => match run_longtime_family(&cfg.ms, exp, &cfg.longtime) {
            Ok(reports) => {
                let mut csv = String::from(
                    "m,tau,a_m,U,eps,Re,drag,c1_fit,c2_fit,bound_ok,work,identity_residual,drift_energy\n",
                );
                for r in &reports {
                    csv.push_str(&format!(
                        "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                        r.m,
                        fmt17(r.tau),
                        fmt17(r.a_m),
                        fmt17(r.u),
                        fmt17(r.eps),
                        fmt17(r.re),
                        fmt17(r.drag),
                        r.c1_fit.map(fmt17).unwrap_or_default(),
                        r.c2_fit.map(fmt17).unwrap_or_default(),
                        r.bound_ok.unwrap_or(false),
                        fmt17(r.work),
                        fmt17(r.identity_residual),
                        fmt17(r.drift_energy)
                    ));
                    summary.push(format!(
                        "m={} tau={:.4} a={:.4} drag={:.4} Re={:.3e} identity={:.2e}",
                        r.m, r.tau, r.a_m, r.drag, r.re, r.identity_residual
                    ));
                }
                w.text("longtime.csv", &csv)?;
                flags.push((
                    "identity".into(),
                    reports.iter().all(|r| r.identity_residual <= 1e-8),
                ));
                flags.push((
                    "drag_bound".into(),
                    reports.iter().all(|r| r.bound_ok == Some(true)),
                ));
                serde_json::to_value(&reports).unwrap_or(Value::Null)
            }
            Err(e) => {
                summary.push(e.to_string());
                flags.push(("calibration".into(), false));
                let v = json!({"error": e.to_string()});
                failure = Some(e);
                v
            }
        },
        Command::Report { .. } => unreachable!("handled above"),
    };
    let manifest = json!({
        "command": command.name(),
        "version": env!("CARGO_PKG_VERSION"),
        "config_text": config_text,
        "config": serde_json::to_value(cfg).unwrap_or(Value::Null),
        "wall_time_s": started.elapsed().as_secs_f64(),
        "files": w.files,
        "pass_flags": flags_json(&flags),
        "failure": failure.as_ref().map(|e| e.to_string()),
        "diagnostics": diagnostics,
    });
    let name = format!("{}_manifest.json", command.name().replace('-', "_"));
    let path = out.join(&name);
    let body = serde_json::to_string_pretty(&manifest).map_err(|e| LabError::Io(e.to_string()))?;
    fs::write(&path, body + "\n").map_err(|e| LabError::Io(format!("{}: {e}", path.display())))?;
    Ok(Outcome {
        manifest,
        manifest_path: Some(path),
        failure,
        summary,
    })
}

fn report(dir: &Path) -> Result<Outcome> {
    let mut manifests: Vec<PathBuf> = fs::read_dir(dir)
        .map(|rd| {
            rd.filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.to_string_lossy().ends_with("_manifest.json"))
                .collect()
        })
        .unwrap_or_default();
    manifests.sort();
    if manifests.is_empty() {
        return Err(LabError::Io(format!(
            "no input: no manifests in {}",
            dir.display()
        )));
    }
    let mut summary = Vec::new();
    let mut entries = Vec::new();
    for p in &manifests {
        let text =
            fs::read_to_string(p).map_err(|e| LabError::Io(format!("{}: {e}", p.display())))?;
        let v: Value = serde_json::from_str(&text)
            .map_err(|e| LabError::Io(format!("{}: {e}", p.display())))?;
        let flags = v["pass_flags"].as_object().cloned().unwrap_or_default();
        let rendered: Vec<String> = flags
            .iter()
            .map(|(k, ok)| {
                format!(
                    "{k}={}",
                    if ok.as_bool() == Some(true) {
                        "pass"
                    } else {
                        "fail"
                    }
                )
            })
            .collect();
        summary.push(format!(
            "{}: {}",
            v["command"].as_str().unwrap_or("?"),
            rendered.join(" ")
        ));
        entries.push(json!({"manifest": p.file_name().map(|f| f.to_string_lossy().to_string()), "pass_flags": flags}));
    }
    Ok(Outcome {
        manifest: Value::Array(entries),
        manifest_path: None,
        failure: None,
        summary,
    })
}

/// Entry point of the binary; returns the process exit code.
pub fn main_with(cli: Cli, env_threads: Option<String>) -> i32 {
    let (cfg, text) = match &cli.config {
        Some(p) => match fs::read_to_string(p) {
            Ok(t) => match parse_config(&t) {
                Ok(c) => (c, t),
                Err(v) => {
                    for violation in &v.0 {
                        eprintln!("config error: {violation}");
                    }
                    return 1;
                }
            },
            Err(e) => {
                eprintln!("error: {}: {e}", p.display());
                return 1;
            }
        },
        None => {
            let c = LabConfig::default();
            let t = c.to_text();
            (c, t)
        }
    };
    let threads = match resolve_threads(cli.threads, env_threads.as_deref(), &cfg) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    if let Some(t) = threads {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global();
    }
    let out = cli.out.clone().unwrap_or_else(|| cfg.out_dir.clone());
    match dispatch(&cli.command, &cfg, &text, &out) {
        Ok(o) => {
            if !cli.quiet {
                for line in &o.summary {
                    println!("{line}");
                }
                if let Some(p) = &o.manifest_path {
                    println!("manifest: {}", p.display());
                }
            }
            if let Some(e) = &o.failure {
                eprintln!("error: {e}");
            }
            o.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thread_resolution_order() {
        let mut cfg = LabConfig::default();
        cfg.experiment.threads = Some(3);
        assert_eq!(resolve_threads(Some(2), Some("5"), &cfg).unwrap(), Some(2));
        assert_eq!(resolve_threads(None, Some("5"), &cfg).unwrap(), Some(5));
        assert_eq!(resolve_threads(None, None, &cfg).unwrap(), Some(3));
        assert!(resolve_threads(None, Some("zero"), &cfg).is_err());
    }

    #[test]
    fn report_on_empty_directory() {
        let dir = tempfile::tempdir().unwrap();
        let err = report(dir.path()).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("no input"));
    }
}
