//! Flat `key = value` configuration with dotted sections.
//!
//! ```text
//! # comment
//! grid.n = 256
//! block.base = 2
//! stage.m = 4, 6, 8
//! viscosity.kind = high
//! run.continuation = hold
//! ```
//!
//! Parsing collects every violation before returning.

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::LabError;
use crate::experiments::{ExperimentConfig, LongtimeConfig, Viscosity};
use crate::field::check_grid;
use crate::mixing_blocks::{BlockCaps, PhaseRule};
use crate::solver::Splitting;

/// Continuation selected by `run.continuation`; the periodized variant
/// takes its period from `longtime.tau`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContinuationKind {
    Hold,
    Reversed,
    Periodized,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub targets: Vec<f64>,
    pub t_star: f64,
    pub tol: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            targets: vec![0.25, 0.5, 0.75],
            t_star: 1.0,
            tol: 0.02,
        }
    }
}

/// Everything a subcommand needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabConfig {
    pub experiment: ExperimentConfig,
    pub ms: Vec<u32>,
    pub viscosity: Viscosity,
    pub continuation: ContinuationKind,
    pub longtime: LongtimeConfig,
    pub search: SearchConfig,
    pub caps: BlockCaps,
    pub snapshots: Vec<f64>,
    pub sweep_kinds: Vec<Viscosity>,
    pub out_dir: PathBuf,
}

impl Default for LabConfig {
    fn default() -> Self {
        LabConfig {
            experiment: ExperimentConfig::default(),
            ms: vec![4],
            viscosity: Viscosity::High,
            continuation: ContinuationKind::Hold,
            longtime: LongtimeConfig::default(),
            search: SearchConfig::default(),
            caps: BlockCaps::default(),
            snapshots: Vec::new(),
            sweep_kinds: vec![Viscosity::Low, Viscosity::Intermediate, Viscosity::High],
            out_dir: PathBuf::from("out"),
        }
    }
}

/// One offending key.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub key: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violations(pub Vec<Violation>);

impl fmt::Display for Violations {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lines: Vec<String> = self.0.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", lines.join("; "))
    }
}

impl std::error::Error for Violations {}

impl From<Violations> for LabError {
    fn from(v: Violations) -> Self {
        LabError::Config(v.to_string())
    }
}

pub const KEYS: &[&str] = &[
    "grid.n",
    "block.base",
    "block.shears",
    "block.amplitude",
    "block.phase",
    "block.caps.linf",
    "block.caps.grad",
    "block.caps.mix",
    "stage.m",
    "viscosity.kind",
    "viscosity.value",
    "viscosity.c",
    "run.continuation",
    "run.delta",
    "run.snapshots",
    "solver.steps_per_stage",
    "solver.splitting",
    "solver.ledger_stride",
    "solver.shells",
    "mix.alpha_exponent",
    "mix.constant",
    "window.k",
    "search.targets",
    "search.t_star",
    "search.tol",
    "longtime.tau",
    "longtime.u_target",
    "longtime.c_target",
    "longtime.periods",
    "longtime.dt",
    "sweep.kinds",
    "output.dir",
    "threads",
];

struct Parser {
    violations: Vec<Violation>,
}

impl Parser {
    fn bad(&mut self, key: &str, message: impl Into<String>) {
        self.violations.push(Violation {
            key: key.to_string(),
            message: message.into(),
        });
    }

    fn num<T: std::str::FromStr>(&mut self, key: &str, raw: &str) -> Option<T> {
        match raw.parse::<T>() {
            Ok(v) => Some(v),
            Err(_) => {
                self.bad(
                    key,
                    format!("expected {}, got {raw:?}", std::any::type_name::<T>()),
                );
                None
            }
        }
    }

    fn float(&mut self, key: &str, raw: &str) -> Option<f64> {
        let v = self.num::<f64>(key, raw)?;
        if v.is_finite() {
            Some(v)
        } else {
            self.bad(key, "must be finite");
            None
        }
    }

    fn positive(&mut self, key: &str, raw: &str) -> Option<f64> {
        let v = self.float(key, raw)?;
        if v > 0.0 {
            Some(v)
        } else {
            self.bad(key, format!("must be positive, got {v}"));
            None
        }
    }

    fn list<T: std::str::FromStr>(&mut self, key: &str, raw: &str) -> Option<Vec<T>> {
        let mut out = Vec::new();
        for part in raw.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            out.push(self.num::<T>(key, part)?);
        }
        Some(out)
    }

    fn boolean(&mut self, key: &str, raw: &str) -> Option<bool> {
        match raw {
            "true" => Some(true),
            "false" => Some(false),
            _ => {
                self.bad(key, format!("expected true or false, got {raw:?}"));
                None
            }
        }
    }
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> std::result::Result<LabConfig, Violations> {
    let mut cfg = LabConfig::default();
    let mut p = Parser {
        violations: Vec::new(),
    };
    let mut grid_set = false;
    let mut kind: Option<String> = None;
    let mut value: Option<(f64, String)> = None;
    let mut seen = std::collections::HashSet::new();

    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, raw)) = line.split_once('=') else {
            p.bad(&format!("line {}", lineno + 1), "expected key = value");
            continue;
        };
        let (key, raw) = (key.trim(), raw.trim());
        if !seen.insert(key.to_string()) {
            p.bad(key, "duplicate key");
            continue;
        }
        let e = &mut cfg.experiment;
        match key {
            "grid.n" => {
                if let Some(n) = p.num::<usize>(key, raw) {
                    match check_grid(n) {
                        Ok(()) => {
                            e.grid = n;
                            grid_set = true;
                        }
                        Err(err) => p.bad(key, err.to_string()),
                    }
                }
            }
            "block.base" => {
                if let Some(b) = p.num::<u32>(key, raw) {
                    e.params.base = b;
                }
            }
            "block.shears" => {
                if let Some(k) = p.num::<usize>(key, raw) {
                    e.params.shears_per_block = k;
                }
            }
            "block.amplitude" => {
                if let Some(a) = p.float(key, raw) {
                    e.params.amplitude = a;
                }
            }
            "block.phase" => {
                let rule = if let Some(rest) = raw.strip_prefix("golden:") {
                    p.float(key, rest.trim())
                        .map(|offset| PhaseRule::Golden { offset })
                } else if let Some(rest) = raw.strip_prefix("constant:") {
                    p.float(key, rest.trim())
                        .map(|phase| PhaseRule::Constant { phase })
                } else {
                    p.list::<f64>(key, raw)
                        .map(|phases| PhaseRule::Cycle { phases })
                };
                if let Some(rule) = rule {
                    e.params.phase_rule = rule;
                }
            }
            "block.caps.linf" => {
                if let Some(v) = p.positive(key, raw) {
                    cfg.caps.linf = v;
                }
            }
            "block.caps.grad" => {
                if let Some(v) = p.positive(key, raw) {
                    cfg.caps.grad = v;
                }
            }
            "block.caps.mix" => {
                if let Some(v) = p.positive(key, raw) {
                    cfg.caps.mix = v;
                }
            }
            "stage.m" => {
                if let Some(ms) = p.list::<u32>(key, raw) {
                    if ms.is_empty() {
                        p.bad(key, "empty stage list");
                    } else {
                        cfg.ms = ms;
                    }
                }
            }
            "viscosity.kind" => kind = Some(raw.to_string()),
            "viscosity.value" => {
                if let Some(v) = p.float(key, raw) {
                    value = Some((v, raw.to_string()));
                }
            }
            "viscosity.c" => {
                if let Some(v) = p.positive(key, raw) {
                    e.alpha_c = v;
                }
            }
            "run.continuation" => match raw {
                "hold" => cfg.continuation = ContinuationKind::Hold,
                "reversed" => cfg.continuation = ContinuationKind::Reversed,
                "periodized" => cfg.continuation = ContinuationKind::Periodized,
                _ => p.bad(
                    key,
                    format!("expected hold, reversed or periodized, got {raw:?}"),
                ),
            },
            "run.delta" => {
                if let Some(d) = p.float(key, raw) {
                    if d > 0.0 && d < 1.0 {
                        e.delta = d;
                    } else {
                        p.bad(key, format!("must lie in (0, 1), got {d}"));
                    }
                }
            }
            "run.snapshots" => {
                if let Some(ts) = p.list::<f64>(key, raw) {
                    cfg.snapshots = ts;
                }
            }
            "solver.steps_per_stage" => {
                if let Some(s) = p.num::<usize>(key, raw) {
                    e.steps_per_stage = s;
                }
            }
            "solver.splitting" => match raw {
                "strang" => e.splitting = Splitting::Strang,
                "lie" => e.splitting = Splitting::Lie,
                _ => p.bad(key, format!("expected strang or lie, got {raw:?}")),
            },
            "solver.ledger_stride" => {
                if let Some(s) = p.num::<usize>(key, raw) {
                    e.ledger_stride = s;
                }
            }
            "solver.shells" => {
                if let Some(b) = p.boolean(key, raw) {
                    e.shells = b;
                }
            }
            "mix.alpha_exponent" => {
                if let Some(v) = p.float(key, raw) {
                    // α_m → 0 and α_m⁶m → ∞ need 0 < exponent < 1/6
                    if v > 0.0 && v < 1.0 / 6.0 {
                        e.alpha_exponent = v;
                    } else {
                        p.bad(key, format!("must lie in (0, 1/6), got {v}"));
                    }
                }
            }
            "mix.constant" => {
                if let Some(v) = p.positive(key, raw) {
                    e.mix_constant = v;
                }
            }
            "window.k" => {
                if let Some(v) = p.positive(key, raw) {
                    e.window_k = v;
                }
            }
            "search.targets" => {
                if let Some(ts) = p.list::<f64>(key, raw) {
                    if ts.iter().all(|t| (0.0..=1.0).contains(t)) {
                        cfg.search.targets = ts;
                    } else {
                        p.bad(key, "targets must lie in [0, 1]");
                    }
                }
            }
            "search.t_star" => {
                if let Some(t) = p.float(key, raw) {
                    if t > 0.0 && t <= 2.0 {
                        cfg.search.t_star = t;
                    } else {
                        p.bad(key, format!("must lie in (0, 2], got {t}"));
                    }
                }
            }
            "search.tol" => {
                if let Some(v) = p.positive(key, raw) {
                    cfg.search.tol = v;
                }
            }
            "longtime.tau" => {
                if let Some(t) = p.float(key, raw) {
                    if t > 0.0 && t < 1.0 {
                        cfg.longtime.tau = Some(t);
                    } else {
                        p.bad(key, format!("must lie in (0, 1), got {t}"));
                    }
                }
            }
            "longtime.u_target" => {
                if let Some(v) = p.positive(key, raw) {
                    cfg.longtime.u_target = v;
                }
            }
            "longtime.c_target" => {
                if let Some(v) = p.positive(key, raw) {
                    cfg.longtime.c_target = v;
                }
            }
            "longtime.periods" => {
                if let Some(v) = p.num::<usize>(key, raw) {
                    if v >= 3 {
                        cfg.longtime.periods = v;
                    } else {
                        p.bad(key, format!("need at least 3 periods, got {v}"));
                    }
                }
            }
            "longtime.dt" => {
                if let Some(v) = p.positive(key, raw) {
                    cfg.longtime.dt = v;
                }
            }
            "sweep.kinds" => {
                let mut kinds = Vec::new();
                for part in raw.split(',').map(str::trim).filter(|p| !p.is_empty()) {
                    match part {
                        "high" => kinds.push(Viscosity::High),
                        "intermediate" => kinds.push(Viscosity::Intermediate),
                        "low" => kinds.push(Viscosity::Low),
                        _ => p.bad(
                            key,
                            format!("expected high, intermediate or low, got {part:?}"),
                        ),
                    }
                }
                if kinds.is_empty() {
                    p.bad(key, "empty kind list");
                } else {
                    cfg.sweep_kinds = kinds;
                }
            }
            "output.dir" => cfg.out_dir = PathBuf::from(raw),
            "threads" => {
                if let Some(t) = p.num::<usize>(key, raw) {
                    if t == 0 {
                        p.bad(key, "must be >= 1");
                    } else {
                        e.threads = Some(t);
                    }
                }
            }
            _ => p.bad(key, "unknown key"),
        }
    }

    let nu_value = value.as_ref().map(|v| v.0);
    match kind.as_deref() {
        None | Some("high") => cfg.viscosity = Viscosity::High,
        Some("intermediate") => cfg.viscosity = Viscosity::Intermediate,
        Some("low") => cfg.viscosity = Viscosity::Low,
        Some(k @ ("fixed_k" | "alpha" | "explicit")) => match nu_value {
            Some(v) => {
                cfg.viscosity = match k {
                    "fixed_k" => Viscosity::FixedK(v),
                    "alpha" => Viscosity::Alpha(v),
                    _ => Viscosity::Explicit(v),
                }
            }
            None => p.bad(
                "viscosity.value",
                format!("required by viscosity.kind = {k}"),
            ),
        },
        Some(other) => p.bad(
            "viscosity.kind",
            format!("expected high, intermediate, low, fixed_k, alpha or explicit, got {other:?}"),
        ),
    }
    if value.is_some()
        && matches!(
            kind.as_deref(),
            None | Some("high" | "intermediate" | "low")
        )
    {
        p.bad(
            "viscosity.value",
            "only used with fixed_k, alpha or explicit",
        );
    }

    let e = &cfg.experiment;
    if let Err(err) = e.params.validate() {
        let key = match &err {
            LabError::InvalidParameter { name: "base", .. } => "block.base",
            LabError::InvalidParameter {
                name: "shears_per_block",
                ..
            } => "block.shears",
            LabError::InvalidParameter {
                name: "amplitude", ..
            } => "block.amplitude",
            _ => "block.phase",
        };
        p.bad(key, err.to_string());
    }
    if e.steps_per_stage == 0 {
        p.bad("solver.steps_per_stage", "must be >= 1");
    }
    if e.ledger_stride == 0 {
        p.bad("solver.ledger_stride", "must be >= 1");
    }
    if let Viscosity::Alpha(a) = cfg.viscosity {
        if !(a > 0.0 && a < 1.0) {
            p.bad(
                "viscosity.value",
                format!("alpha must lie in (0, 1), got {a}"),
            );
        }
    }
    if let Viscosity::FixedK(k) | Viscosity::Explicit(k) = cfg.viscosity {
        if k < 0.0 || (k == 0.0 && matches!(cfg.viscosity, Viscosity::FixedK(_))) {
            p.bad("viscosity.value", format!("out of range: {k}"));
        }
    }
    if cfg.continuation == ContinuationKind::Periodized && cfg.longtime.tau.is_none() {
        p.bad("longtime.tau", "required by run.continuation = periodized");
    }
    if grid_set && e.params.base >= 2 {
        for &m in &cfg.ms {
            let need = (e.params.base as u64)
                .checked_pow(m + 1)
                .and_then(|l| l.checked_mul(4));
            match need {
                Some(need) if need as u128 <= e.grid as u128 => {}
                _ => p.bad(
                    "grid.n",
                    format!(
                        "resolution guard: lambda_{} = {}^{} exceeds N/4 = {}",
                        m + 1,
                        e.params.base,
                        m + 1,
                        e.grid / 4
                    ),
                ),
            }
        }
    }
    if p.violations.is_empty() {
        Ok(cfg)
    } else {
        Err(Violations(p.violations))
    }
}

impl LabConfig {
    /// Canonical text form; `parse_config(c.to_text())` returns `c`.
    pub fn to_text(&self) -> String {
        let e = &self.experiment;
        let join = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x:?}"))
                .collect::<Vec<_>>()
                .join(", ")
        };
        let mut out = vec![
            format!("grid.n = {}", e.grid),
            format!("block.base = {}", e.params.base),
            format!("block.shears = {}", e.params.shears_per_block),
            format!("block.amplitude = {:?}", e.params.amplitude),
            format!(
                "block.phase = {}",
                match &e.params.phase_rule {
                    PhaseRule::Constant { phase } => format!("constant:{phase:?}"),
                    PhaseRule::Golden { offset } => format!("golden:{offset:?}"),
                    PhaseRule::Cycle { phases } => join(phases),
                }
            ),
            format!("block.caps.linf = {:?}", self.caps.linf),
            format!("block.caps.grad = {:?}", self.caps.grad),
            format!("block.caps.mix = {:?}", self.caps.mix),
            format!(
                "stage.m = {}",
                self.ms
                    .iter()
                    .map(|m| m.to_string())
                    .collect::<Vec<_>>()
                    .join(", ")
            ),
        ];
        match self.viscosity {
            Viscosity::High => out.push("viscosity.kind = high".into()),
            Viscosity::Intermediate => out.push("viscosity.kind = intermediate".into()),
            Viscosity::Low => out.push("viscosity.kind = low".into()),
            Viscosity::FixedK(k) => out.extend([
                "viscosity.kind = fixed_k".into(),
                format!("viscosity.value = {k:?}"),
            ]),
            Viscosity::Alpha(a) => out.extend([
                "viscosity.kind = alpha".into(),
                format!("viscosity.value = {a:?}"),
            ]),
            Viscosity::Explicit(v) => out.extend([
                "viscosity.kind = explicit".into(),
                format!("viscosity.value = {v:?}"),
            ]),
        }
        out.push(format!("viscosity.c = {:?}", e.alpha_c));
        out.push(format!(
            "run.continuation = {}",
            match self.continuation {
                ContinuationKind::Hold => "hold",
                ContinuationKind::Reversed => "reversed",
                ContinuationKind::Periodized => "periodized",
            }
        ));
        out.push(format!("run.delta = {:?}", e.delta));
        if !self.snapshots.is_empty() {
            out.push(format!("run.snapshots = {}", join(&self.snapshots)));
        }
        out.push(format!("solver.steps_per_stage = {}", e.steps_per_stage));
        out.push(format!(
            "solver.splitting = {}",
            match e.splitting {
                Splitting::Strang => "strang",
                Splitting::Lie => "lie",
            }
        ));
        out.push(format!("solver.ledger_stride = {}", e.ledger_stride));
        out.push(format!("solver.shells = {}", e.shells));
        out.push(format!("mix.alpha_exponent = {:?}", e.alpha_exponent));
        out.push(format!("mix.constant = {:?}", e.mix_constant));
        out.push(format!("window.k = {:?}", e.window_k));
        out.push(format!("search.targets = {}", join(&self.search.targets)));
        out.push(format!("search.t_star = {:?}", self.search.t_star));
        out.push(format!("search.tol = {:?}", self.search.tol));
        if let Some(t) = self.longtime.tau {
            out.push(format!("longtime.tau = {t:?}"));
        }
        out.push(format!("longtime.u_target = {:?}", self.longtime.u_target));
        out.push(format!("longtime.c_target = {:?}", self.longtime.c_target));
        out.push(format!("longtime.periods = {}", self.longtime.periods));
        out.push(format!("longtime.dt = {:?}", self.longtime.dt));
        let kinds: Vec<String> = self.sweep_kinds.iter().map(|v| v.label()).collect();
        out.push(format!("sweep.kinds = {}", kinds.join(", ")));
        out.push(format!("output.dir = {}", self.out_dir.display()));
        if let Some(t) = e.threads {
            out.push(format!("threads = {t}"));
        }
        out.join("\n") + "\n"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "grid.n = 256\nblock.base = 2\nstage.m = 4\nviscosity.kind = high\nrun.continuation = hold\n";

    #[test]
    fn minimal_document_fills_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.experiment.grid, 256);
        assert_eq!(c.ms, vec![4]);
        assert_eq!(c.viscosity, Viscosity::High);
        assert_eq!(c.continuation, ContinuationKind::Hold);
        assert_eq!(c.experiment.delta, 0.1);
        assert_eq!(c.longtime.periods, 3);
    }

    #[test]
    fn non_power_of_two_grid() {
        let err = parse_config(&MINIMAL.replace("256", "100")).unwrap_err();
        assert_eq!(err.0.len(), 1);
        assert_eq!(err.0[0].key, "grid.n");
    }

    #[test]
    fn resolution_guard_at_parse_time() {
        let err = parse_config("grid.n = 256\nblock.base = 5\nstage.m = 6\n").unwrap_err();
        assert_eq!(err.0.len(), 1);
        assert_eq!(err.0[0].key, "grid.n");
        assert!(err.0[0].message.contains("resolution"));
    }

    #[test]
    fn all_violations_reported() {
        let err = parse_config("grid.n = 100\nbogus = 1\nrun.delta = x\nviscosity.kind = alpha\n")
            .unwrap_err();
        let keys: Vec<&str> = err.0.iter().map(|v| v.key.as_str()).collect();
        assert_eq!(keys, ["grid.n", "bogus", "run.delta", "viscosity.value"]);
    }

    #[test]
    fn text_round_trip() {
        let mut c = parse_config(MINIMAL).unwrap();
        c.viscosity = Viscosity::Alpha(0.3);
        c.longtime.tau = Some(0.4);
        c.snapshots = vec![0.5, 1.0];
        c.experiment.threads = Some(2);
        assert_eq!(parse_config(&c.to_text()).unwrap(), c);
    }
}
