//! Scenario drivers: viscosity schedules, the forward-cascade family with
//! a held continuation, the reversed-cascade family, the viscosity search
//! for a target dissipation level, the long-time periodic drag
//! experiment, and parameter sweeps.
//!
//! Schedule viscosities are written for the `2π`-periodic torus, where
//! `‖P_{≤Λ}ρ‖ ≤ Λ‖P_{≤Λ}ρ‖_{Ḣ^{-1}}` holds without extra factors. The
//! solver works on the unit torus, so every driver hands it
//! [`to_unit_torus`]`(ν)`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{project_high, project_low, shell_spectrum, ShellSpectrum};
use crate::error::{LabError, Result};
use crate::field::ScalarField2D;
use crate::glue::{stage_times, Continuation, CutoffPair, GlueSchedule};
use crate::mixing_blocks::{block_initial_density, BlockParams};
use crate::smooth;
use crate::solver::{run, RunLedger, SolverConfig, Splitting, CLOSURE_TOLERANCE};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViscosityKind {
    High,
    Intermediate,
    Low,
    FixedK,
}

impl ViscosityKind {
    pub fn name(self) -> &'static str {
        match self {
            ViscosityKind::High => "high",
            ViscosityKind::Intermediate => "intermediate",
            ViscosityKind::Low => "low",
            ViscosityKind::FixedK => "fixed_k",
        }
    }
}

fn lambda(b: u32, m: u32) -> Result<f64> {
    (b as u64)
        .checked_pow(m)
        .map(|v| v as f64)
        .ok_or_else(|| LabError::InvalidParameter {
            name: "m",
            reason: format!("{b}^{m} overflows"),
        })
}

/// `ν^h = m^{5/2}λ_m^{-2}`, `ν^int = mλ_m^{-2}`, `ν^l = m^{-1}λ_m^{-2}`,
/// `ν^fixed = kλ_m^{-2}`, with `λ_m = b^m`.
pub fn viscosity_schedule(kind: ViscosityKind, m: u32, b: u32, k: Option<f64>) -> Result<f64> {
    if m == 0 {
        return Err(LabError::InvalidParameter {
            name: "m",
            reason: "viscosity schedules start at m = 1".into(),
        });
    }
    let inv_l2 = lambda(b, m)?.powi(-2);
    let mf = m as f64;
    Ok(match kind {
        ViscosityKind::High => mf.powf(2.5) * inv_l2,
        ViscosityKind::Intermediate => mf * inv_l2,
        ViscosityKind::Low => inv_l2 / mf,
        ViscosityKind::FixedK => {
            let k = k.ok_or(LabError::InvalidParameter {
                name: "k",
                reason: "fixed_k schedule needs k".into(),
            })?;
            if !(k > 0.0) {
                return Err(LabError::InvalidParameter {
                    name: "k",
                    reason: format!("must be positive, got {k}"),
                });
            }
            k * inv_l2
        }
    })
}

/// Converts a `2π`-torus viscosity to the unit torus.
pub fn to_unit_torus(nu: f64) -> f64 {
    nu / (4.0 * PI * PI)
}

/// Viscosity of one scenario run, in schedule units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Viscosity {
    High,
    Intermediate,
    Low,
    FixedK(f64),
    /// `ν^α = α⁴c^{-2}λ_m^{-2}m²`.
    Alpha(f64),
    Explicit(f64),
}

impl Viscosity {
    pub fn label(&self) -> String {
        match self {
            Viscosity::High => "high".into(),
            Viscosity::Intermediate => "intermediate".into(),
            Viscosity::Low => "low".into(),
            Viscosity::FixedK(k) => format!("fixed_k={k}"),
            Viscosity::Alpha(a) => format!("alpha={a}"),
            Viscosity::Explicit(nu) => format!("explicit={nu}"),
        }
    }

    pub fn value(&self, m: u32, b: u32, c_alpha: f64) -> Result<f64> {
        match *self {
            Viscosity::High => viscosity_schedule(ViscosityKind::High, m, b, None),
            Viscosity::Intermediate => viscosity_schedule(ViscosityKind::Intermediate, m, b, None),
            Viscosity::Low => viscosity_schedule(ViscosityKind::Low, m, b, None),
            Viscosity::FixedK(k) => viscosity_schedule(ViscosityKind::FixedK, m, b, Some(k)),
            Viscosity::Alpha(a) => {
                if !(a > 0.0 && a < 1.0) {
                    return Err(LabError::Domain {
                        what: "alpha",
                        value: a,
                        domain: "(0, 1)",
                    });
                }
                let mf = m as f64;
                Ok(a.powi(4) / (c_alpha * c_alpha) * lambda(b, m)?.powi(-2) * mf * mf)
            }
            Viscosity::Explicit(nu) => {
                if !(nu >= 0.0 && nu.is_finite()) {
                    return Err(LabError::InvalidParameter {
                        name: "nu",
                        reason: format!("must be finite and >= 0, got {nu}"),
                    });
                }
                Ok(nu)
            }
        }
    }
}

/// Shared scenario settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Base grid; runs use `max(grid, 4λ_{m+1})`.
    pub grid: usize,
    pub params: BlockParams,
    pub steps_per_stage: usize,
    pub splitting: Splitting,
    pub ledger_stride: usize,
    pub shells: bool,
    /// `δ` of the `D(1 + δ)` sample.
    pub delta: f64,
    /// `α_m = m^{-alpha_exponent}`.
    pub alpha_exponent: f64,
    /// `C` in `Λ_m = α_m λ_m / C`.
    pub mix_constant: f64,
    /// `c` in `ν^α`.
    pub alpha_c: f64,
    /// `k` of the reversed-branch energy window.
    pub window_k: f64,
    pub threads: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            grid: 128,
            params: BlockParams::default(),
            steps_per_stage: 64,
            splitting: Splitting::Strang,
            ledger_stride: 8,
            shells: false,
            delta: 0.1,
            alpha_exponent: 0.125,
            mix_constant: 1.0,
            alpha_c: 1.0,
            window_k: 1.0,
            threads: None,
        }
    }
}

impl ExperimentConfig {
    pub fn grid_for(&self, m: u32) -> Result<usize> {
        let need = self
            .params
            .base
            .checked_pow(m + 1)
            .and_then(|l| (l as usize).checked_mul(4))
            .ok_or_else(|| LabError::InvalidParameter {
                name: "m",
                reason: format!("grid for m = {m} overflows"),
            })?;
        Ok(self.grid.max(need))
    }

    pub fn solver(&self, n: usize, nu_unit: f64) -> SolverConfig {
        let mut s = SolverConfig::new(n, nu_unit);
        s.steps_per_stage = self.steps_per_stage;
        s.splitting = self.splitting;
        s.ledger_stride = self.ledger_stride;
        s.shells = self.shells;
        s
    }

    pub fn alpha_m(&self, m: u32) -> f64 {
        (m as f64).powf(-self.alpha_exponent)
    }
}

/// `‖P_{≤Λ}θ(1)‖` and `‖P_{>Λ}θ(1)‖`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeSplit {
    pub cutoff: f64,
    pub low: f64,
    pub high: f64,
}

/// `E(2)` against `[(1−α)², 1 − kα⁴(1−α)(√α−α)²]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaWindow {
    pub alpha: f64,
    pub lower: f64,
    pub upper: f64,
    pub inside: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub m: u32,
    pub b: u32,
    pub kind: String,
    pub continuation: String,
    /// Schedule-unit viscosity.
    pub nu: f64,
    /// Viscosity handed to the solver.
    pub nu_unit: f64,
    pub n: usize,
    pub d_at_1: f64,
    pub d_at_1p_delta: f64,
    pub d_at_2: f64,
    pub e_at_1: f64,
    pub e_at_1p_delta: f64,
    pub e_at_2: f64,
    /// `E(2)` of a reversed run.
    pub recovery: Option<f64>,
    /// Smallest sampled energy on `[t_m, 2 − t_m]` of a reversed run.
    pub min_energy_near_1: Option<f64>,
    pub mode_split: Option<ModeSplit>,
    pub alpha_window: Option<AlphaWindow>,
    pub profile: Vec<(f64, f64)>,
    pub flags: Vec<(String, bool)>,
    #[serde(skip)]
    pub ledger: RunLedger,
}

impl ScenarioResult {
    pub fn passed(&self) -> bool {
        self.flags.iter().all(|(_, ok)| *ok)
    }

    pub fn shell_spectra(&self) -> Vec<ShellSpectrum> {
        self.ledger
            .shells
            .iter()
            .map(|e| ShellSpectrum::from_energies(e.clone()))
            .collect()
    }
}

fn base_flags(ledger: &RunLedger) -> Vec<(String, bool)> {
    let e0 = ledger.e0();
    let dmax = ledger.dissipation.iter().cloned().fold(0.0, f64::max);
    vec![
        (
            "closure".into(),
            ledger.check_closure(CLOSURE_TOLERANCE).is_ok(),
        ),
        (
            "dissipated_fraction".into(),
            dmax >= 0.0 && dmax <= e0 * (1.0 + 1e-9),
        ),
    ]
}

fn scenario_run(
    m: u32,
    viscosity: Viscosity,
    continuation: Continuation,
    cfg: &ExperimentConfig,
    snapshot_at_1: bool,
) -> Result<(ScenarioResult, Option<ScalarField2D>)> {
    let b = cfg.params.base;
    let nu = viscosity.value(m, b, cfg.alpha_c)?;
    let nu_unit = to_unit_torus(nu);
    let n = cfg.grid_for(m)?;
    let schedule = GlueSchedule::new(m, cfg.params.clone(), continuation)?;
    let mut scfg = cfg.solver(n, nu_unit);
    scfg.sample_times = vec![1.0 + cfg.delta];
    if snapshot_at_1 {
        scfg.snapshot_times = vec![1.0];
    }
    let out = run(&schedule, &block_initial_density(n)?, &scfg)?;
    let l = out.ledger;
    let at = |t: f64| (l.energy_at(t), l.dissipation_at(t));
    let (e1, d1) = at(1.0);
    let (e1d, d1d) = at(1.0 + cfg.delta);
    let (e2, d2) = at(2.0);
    let result = ScenarioResult {
        m,
        b,
        kind: viscosity.label(),
        continuation: continuation.name().into(),
        nu,
        nu_unit,
        n,
        d_at_1: d1,
        d_at_1p_delta: d1d,
        d_at_2: d2,
        e_at_1: e1,
        e_at_1p_delta: e1d,
        e_at_2: e2,
        recovery: None,
        min_energy_near_1: None,
        mode_split: None,
        alpha_window: None,
        profile: l.t.iter().copied().zip(l.energy.iter().copied()).collect(),
        flags: base_flags(&l),
        ledger: l,
    };
    Ok((result, out.snapshots.into_iter().next().map(|(_, f)| f)))
}

/// Forward cascade with the held continuation over `[0, 2]`.
pub fn run_thm1_scenario(
    m: u32,
    viscosity: Viscosity,
    cfg: &ExperimentConfig,
) -> Result<ScenarioResult> {
    let high = matches!(viscosity, Viscosity::High);
    let (mut r, snap) = scenario_run(m, viscosity, Continuation::Hold, cfg, high)?;
    if let Some(theta1) = snap {
        let cutoff = cfg.alpha_m(m) * lambda(cfg.params.base, m)? / cfg.mix_constant;
        r.mode_split = Some(ModeSplit {
            cutoff,
            low: project_low(&theta1, cutoff).l2_norm(),
            high: project_high(&theta1, cutoff).l2_norm(),
        });
    }
    Ok(r)
}

/// Reversed cascade over `[0, 2]`.
pub fn run_thm2_scenario(
    m: u32,
    viscosity: Viscosity,
    cfg: &ExperimentConfig,
) -> Result<ScenarioResult> {
    let (mut r, _) = scenario_run(m, viscosity, Continuation::Reversed, cfg, false)?;
    r.recovery = Some(r.e_at_2);
    let (lo, hi) = (stage_times(m), 2.0 - stage_times(m));
    r.min_energy_near_1 = r
        .ledger
        .t
        .iter()
        .zip(&r.ledger.energy)
        .filter(|(t, _)| **t >= lo && **t <= hi)
        .map(|(_, e)| *e)
        .reduce(f64::min);
    if let Viscosity::Alpha(a) = viscosity {
        let k = cfg.window_k;
        let lower = (1.0 - a).powi(2);
        let upper = 1.0 - k * a.powi(4) * (1.0 - a) * (a.sqrt() - a).powi(2);
        r.alpha_window = Some(AlphaWindow {
            alpha: a,
            lower,
            upper,
            inside: r.e_at_2 >= lower && r.e_at_2 <= upper,
        });
    }
    Ok(r)
}

fn dissipation_at(m: u32, nu: f64, t_star: f64, cfg: &ExperimentConfig) -> Result<f64> {
    let n = cfg.grid_for(m)?;
    let schedule = GlueSchedule::new(m, cfg.params.clone(), Continuation::Hold)?;
    let mut scfg = cfg.solver(n, to_unit_torus(nu));
    scfg.t_end = Some(t_star);
    scfg.sample_times = vec![t_star];
    let out = run(&schedule, &block_initial_density(n)?, &scfg)?;
    out.ledger.check_closure(CLOSURE_TOLERANCE)?;
    Ok(out.ledger.dissipation_at(t_star))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViscositySearch {
    pub m: u32,
    pub target: f64,
    pub t_star: f64,
    /// Schedule-unit viscosity reached.
    pub nu: f64,
    pub nu_unit: f64,
    pub achieved: f64,
    pub iterations: usize,
    pub converged: bool,
    pub bracket: (f64, f64),
    pub bracket_dissipation: (f64, f64),
    pub warnings: Vec<String>,
}

pub const SEARCH_ITERATIONS: usize = 40;

/// Log-scale bisection for `ν` with `|D(t*) − e| ≤ tol`. The bracket is
/// `[ν^int, ν^h]` for `t* ≤ 1` and `[ν^l, ν^int]` otherwise.
pub fn find_viscosity_for_dissipation(
    m: u32,
    target: f64,
    t_star: f64,
    tol: f64,
    cfg: &ExperimentConfig,
) -> Result<ViscositySearch> {
    if !(0.0..=1.0).contains(&target) {
        return Err(LabError::Domain {
            what: "target",
            value: target,
            domain: "[0, 1]",
        });
    }
    if !(t_star > 0.0 && t_star <= 2.0) {
        return Err(LabError::Domain {
            what: "t_star",
            value: t_star,
            domain: "(0, 2]",
        });
    }
    let b = cfg.params.base;
    let (lo_kind, hi_kind) = if t_star <= 1.0 {
        (ViscosityKind::Intermediate, ViscosityKind::High)
    } else {
        (ViscosityKind::Low, ViscosityKind::Intermediate)
    };
    let (mut lo, mut hi) = (
        viscosity_schedule(lo_kind, m, b, None)?,
        viscosity_schedule(hi_kind, m, b, None)?,
    );
    let bracket = (lo, hi);
    let (mut d_lo, mut d_hi) = (
        dissipation_at(m, lo, t_star, cfg)?,
        dissipation_at(m, hi, t_star, cfg)?,
    );
    let bracket_dissipation = (d_lo, d_hi);
    let done = |nu: f64, d: f64, it: usize, warnings: Vec<String>| ViscositySearch {
        m,
        target,
        t_star,
        nu,
        nu_unit: to_unit_torus(nu),
        achieved: d,
        iterations: it,
        converged: (d - target).abs() <= tol,
        bracket,
        bracket_dissipation,
        warnings,
    };
    if (d_lo - target).abs() <= tol {
        return Ok(done(lo, d_lo, 0, Vec::new()));
    }
    if (d_hi - target).abs() <= tol {
        return Ok(done(hi, d_hi, 0, Vec::new()));
    }
    if (d_lo - target) * (d_hi - target) > 0.0 {
        return Err(LabError::BracketFailure { target, d_lo, d_hi });
    }
    let mut warnings = Vec::new();
    let (mut best_nu, mut best_d) = (lo, d_lo);
    for it in 1..=SEARCH_ITERATIONS {
        let mid = (lo * hi).sqrt();
        let d = dissipation_at(m, mid, t_star, cfg)?;
        if d < d_lo.min(d_hi) || d > d_lo.max(d_hi) {
            warnings.push(format!(
                "non-monotone: D({mid:e}) = {d} outside [{d_lo}, {d_hi}]"
            ));
        }
        if (d - target).abs() < (best_d - target).abs() {
            best_nu = mid;
            best_d = d;
        }
        if (d - target).abs() <= tol {
            return Ok(done(mid, d, it, warnings));
        }
        if (d - target) * (d_lo - target) > 0.0 {
            lo = mid;
            d_lo = d;
        } else {
            hi = mid;
            d_hi = d;
        }
    }
    warnings.push(format!(
        "no convergence after {SEARCH_ITERATIONS} iterations"
    ));
    Ok(done(best_nu, best_d, SEARCH_ITERATIONS, warnings))
}

/// Long-time experiment settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LongtimeConfig {
    pub u_target: f64,
    pub c_target: f64,
    pub periods: usize,
    /// Period; solved from `τ = a_m²/(2U³c)` when absent.
    pub tau: Option<f64>,
    pub viscosity: Viscosity,
    /// Step and sample spacing of the windowed scalar run.
    pub dt: f64,
}

impl Default for LongtimeConfig {
    fn default() -> Self {
        LongtimeConfig {
            u_target: 1.0,
            c_target: 0.5,
            periods: 3,
            tau: None,
            viscosity: Viscosity::High,
            dt: 1.0 / 1024.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DragReport {
    pub m: u32,
    pub tau: f64,
    pub a_m: f64,
    #[serde(rename = "U")]
    pub u: f64,
    pub eps: f64,
    #[serde(rename = "Re")]
    pub re: f64,
    pub drag: f64,
    pub c1_fit: Option<f64>,
    pub c2_fit: Option<f64>,
    pub bound_ok: Option<bool>,
    pub nu_unit: f64,
    /// Per-period average work of all forces.
    pub work: f64,
    /// `|ε − work| / ε`.
    pub identity_residual: f64,
    /// Period average of `‖v‖²`.
    pub drift_energy: f64,
    /// Period average of `‖θ‖²` before the amplitude.
    pub scalar_energy: f64,
    /// `|‖u‖²(start) − ‖u‖²(end)|` over each of the `P` periods.
    pub periodicity_drift: f64,
    pub periods: usize,
}

/// Windowed scalar solution `θ̃` and its drift, shared by every `τ`.
pub struct LongtimeState {
    pub m: u32,
    pub nu_unit: f64,
    pub ledger: RunLedger,
    params: BlockParams,
}

/// Runs `θ̃` under the uncut drift and the held continuation up to
/// `t = 4/3`, sampling every substep.
pub fn prepare_longtime(
    m: u32,
    cfg: &ExperimentConfig,
    lt: &LongtimeConfig,
) -> Result<LongtimeState> {
    let nu = lt.viscosity.value(m, cfg.params.base, cfg.alpha_c)?;
    let nu_unit = to_unit_torus(nu);
    let n = cfg.grid_for(m)?;
    let schedule = GlueSchedule::new(m, cfg.params.clone(), Continuation::Hold)?;
    let mut scfg = cfg.solver(n, nu_unit);
    scfg.ledger_stride = 1;
    scfg.dt_max = Some(lt.dt);
    scfg.hold_step = lt.dt;
    scfg.t_end = Some(4.0 / 3.0);
    let out = run(&schedule, &block_initial_density(n)?, &scfg)?;
    out.ledger.check_closure(CLOSURE_TOLERANCE)?;
    Ok(LongtimeState {
        m,
        nu_unit,
        ledger: out.ledger,
        params: cfg.params.clone(),
    })
}

const QUAD_PANEL: f64 = 1.0 / 32768.0;

/// Composite 8-point Gauss–Legendre between consecutive knots, each
/// piece split into at least four panels no longer than `h`.
fn integrate_pieces<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, knots: &[f64], h: f64) -> f64 {
    let mut pts = vec![a];
    pts.extend(knots.iter().copied().filter(|&k| k > a && k < b));
    pts.push(b);
    pts.sort_by(f64::total_cmp);
    let mut total = 0.0;
    for w in pts.windows(2) {
        let len = w[1] - w[0];
        let panels = ((len / h).ceil() as usize).max(4);
        let step = len / panels as f64;
        for p in 0..panels {
            let lo = w[0] + p as f64 * step;
            total += smooth::gauss_legendre(f, lo, lo + step);
        }
    }
    total
}

impl LongtimeState {
    fn schedule(&self, tau: f64) -> Result<GlueSchedule> {
        GlueSchedule::new(
            self.m,
            self.params.clone(),
            Continuation::Periodized {
                cutoffs: CutoffPair::new(tau)?,
            },
        )
    }

    fn knots(&self, schedule: &GlueSchedule, tau: f64) -> Vec<f64> {
        let mut k: Vec<f64> = schedule.segments().iter().map(|s| s.start).collect();
        k.extend([
            1.0 - tau / 2.0,
            1.0 - tau / 3.0,
            1.0 - tau / 4.0,
            1.0,
            1.0 + tau / 4.0,
            1.0 + tau / 3.0,
        ]);
        k
    }

    /// Period average of `‖v‖²`.
    pub fn drift_energy_average(&self, tau: f64) -> Result<f64> {
        let s = self.schedule(tau)?;
        let (a, b) = (1.0 - tau / 2.0, 1.0 + tau / 2.0);
        let knots = self.knots(&s, tau);
        Ok(integrate_pieces(
            &|t| 2.0 * s.drift_energy(t).expect("in horizon"),
            a,
            b,
            &knots,
            QUAD_PANEL,
        ) / tau)
    }

    /// Period averages `(⟨‖v‖²⟩, ν⟨‖∇v‖²⟩, ⟨(v, g)⟩)`.
    fn drift_averages(&self, tau: f64) -> Result<(f64, f64, f64)> {
        let s = self.schedule(tau)?;
        let (a, b) = (1.0 - tau / 2.0, 1.0 + tau / 2.0);
        let knots = self.knots(&s, tau);
        let nu = self.nu_unit;
        let energy = self.drift_energy_average(tau)?;
        let diss = integrate_pieces(
            &|t| {
                let d = s.glued_drift(t).expect("in horizon");
                let k = d.wavenumber as f64;
                nu * 2.0 * PI * PI * k * k * d.speed * d.speed
            },
            a,
            b,
            &knots,
            QUAD_PANEL,
        ) / tau;
        let work = integrate_pieces(
            &|t| {
                let (d, g) = s.drift_force(nu, t).expect("in horizon");
                0.5 * d.speed * g
            },
            a,
            b,
            &knots,
            QUAD_PANEL,
        ) / tau;
        Ok((energy, diss, work))
    }

    /// Period sums over the scalar ledger: `(∫η²E, ½∫η² dD, ∫ηη′E)`.
    fn scalar_sums(&self, tau: f64) -> Result<(f64, f64, f64)> {
        let cut = CutoffPair::new(tau)?;
        let l = &self.ledger;
        let w: Vec<f64> = l.t.iter().map(|&t| cut.window(t).powi(2)).collect();
        let (mut energy, mut diss, mut work) = (0.0, 0.0, 0.0);
        for i in 0..l.len() - 1 {
            let dt = l.t[i + 1] - l.t[i];
            let e_mid = 0.5 * (l.energy[i] + l.energy[i + 1]);
            energy += 0.5 * (w[i] * l.energy[i] + w[i + 1] * l.energy[i + 1]) * dt;
            diss += 0.25 * (w[i] + w[i + 1]) * (l.dissipation[i + 1] - l.dissipation[i]);
            work += 0.5 * (w[i + 1] - w[i]) * e_mid;
        }
        Ok((energy, diss, work))
    }

    /// Amplitude `a_m` giving period-average `‖u‖² = U²` at period `τ`.
    pub fn amplitude(&self, tau: f64, u_target: f64) -> Result<f64> {
        let v2 = self.drift_energy_average(tau)?;
        let (e, _, _) = self.scalar_sums(tau)?;
        let a2 = (u_target * u_target - v2) / (e / tau);
        if !(a2 > 0.0) {
            return Err(LabError::Calibration {
                reason: format!(
                    "drift energy {v2:.4} alone exceeds U² = {:.4} at tau = {tau}",
                    u_target * u_target
                ),
            });
        }
        Ok(a2.sqrt())
    }

    /// Solves `τ = a_m(τ)²/(2U³c)` on `(0, 1)`.
    pub fn solve_tau(&self, u_target: f64, c_target: f64) -> Result<f64> {
        let f = |tau: f64| -> Option<f64> {
            self.amplitude(tau, u_target)
                .ok()
                .map(|a| tau - a * a / (2.0 * u_target.powi(3) * c_target))
        };
        let grid: Vec<f64> = (1..50).map(|i| i as f64 / 50.0).collect();
        let vals: Vec<Option<f64>> = grid.iter().map(|&t| f(t)).collect();
        for i in 0..grid.len() - 1 {
            if let (Some(a), Some(b)) = (vals[i], vals[i + 1]) {
                if a * b <= 0.0 {
                    let (mut lo, mut hi, mut flo) = (grid[i], grid[i + 1], a);
                    for _ in 0..60 {
                        let mid = 0.5 * (lo + hi);
                        let fm = f(mid).ok_or(LabError::Calibration {
                            reason: format!("amplitude undefined at tau = {mid}"),
                        })?;
                        if fm * flo > 0.0 {
                            lo = mid;
                            flo = fm;
                        } else {
                            hi = mid;
                        }
                    }
                    return Ok(0.5 * (lo + hi));
                }
            }
        }
        let v2: Vec<f64> = grid
            .iter()
            .map(|&t| self.drift_energy_average(t))
            .collect::<Result<_>>()?;
        let (lo, hi) = v2
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
                (a.min(v), b.max(v))
            });
        Err(LabError::Calibration {
            reason: format!(
                "no tau in (0, 1) satisfies tau = a²/(2U³c) with U = {u_target}, c = {c_target}; \
                 drift energy alone spans [{lo:.3}, {hi:.3}] against U² = {:.3}",
                u_target * u_target
            ),
        })
    }

    /// Drag report at period `τ` (solved from the calibration when `None`).
    pub fn report(&self, tau: Option<f64>, lt: &LongtimeConfig) -> Result<DragReport> {
        if lt.periods < 3 {
            return Err(LabError::InvalidParameter {
                name: "periods",
                reason: format!("need at least 3 periods, got {}", lt.periods),
            });
        }
        let tau = match tau {
            Some(t) => t,
            None => self.solve_tau(lt.u_target, lt.c_target)?,
        };
        let a = self.amplitude(tau, lt.u_target)?;
        let (v2, eps_v, work_v) = self.drift_averages(tau)?;
        let (e_sum, d_sum, w_sum) = self.scalar_sums(tau)?;
        let a2 = a * a;
        let scalar_energy = e_sum / tau;
        let u = (v2 + a2 * scalar_energy).sqrt();
        let eps = eps_v + a2 * d_sum / tau;
        let work = work_v + a2 * w_sum / tau;
        // both cutoffs vanish at the period ends, so each period closes
        let cut = CutoffPair::new(tau)?;
        let s = self.schedule(tau)?;
        let mut periodicity_drift: f64 = 0.0;
        for p in 0..lt.periods {
            let start = 1.0 - tau / 2.0 + p as f64 * tau;
            let end = start + tau;
            let energy = |t: f64| -> Result<f64> {
                let tf = cut.fold(t);
                Ok(2.0 * s.drift_energy(t)?
                    + a2 * cut.window(tf).powi(2) * self.ledger.energy_at(tf))
            };
            periodicity_drift =
                periodicity_drift.max((energy(end - 1e-12)? - energy(start)?).abs());
        }
        Ok(DragReport {
            m: self.m,
            tau,
            a_m: a,
            u,
            eps,
            re: u / self.nu_unit,
            drag: eps / u.powi(3),
            c1_fit: None,
            c2_fit: None,
            bound_ok: None,
            nu_unit: self.nu_unit,
            work,
            identity_residual: (eps - work).abs() / eps.abs().max(f64::MIN_POSITIVE),
            drift_energy: v2,
            scalar_energy,
            periodicity_drift,
            periods: lt.periods,
        })
    }
}

pub fn run_longtime_scenario(
    m: u32,
    cfg: &ExperimentConfig,
    lt: &LongtimeConfig,
) -> Result<DragReport> {
    prepare_longtime(m, cfg, lt)?.report(lt.tau, lt)
}

/// Nonnegative `(c₁, c₂)` with `drag ≤ c₁ + c₂/Re` on every report:
/// least squares in `1/Re`, then `c₁` raised to the largest residual.
pub fn fit_drag_bound(reports: &mut [DragReport]) -> (f64, f64) {
    let pts: Vec<(f64, f64)> = reports.iter().map(|r| (1.0 / r.re, r.drag)).collect();
    let n = pts.len() as f64;
    let (mx, my) = (
        pts.iter().map(|p| p.0).sum::<f64>() / n,
        pts.iter().map(|p| p.1).sum::<f64>() / n,
    );
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let c2 = if sxx > 0.0 { (sxy / sxx).max(0.0) } else { 0.0 };
    let c1_ls = (my - c2 * mx).max(0.0);
    let excess = pts
        .iter()
        .map(|p| p.1 - (c1_ls + c2 * p.0))
        .fold(0.0, f64::max);
    let c1 = c1_ls + excess;
    for r in reports.iter_mut() {
        r.c1_fit = Some(c1);
        r.c2_fit = Some(c2);
        r.bound_ok = Some(r.drag <= (c1 + c2 / r.re) * (1.0 + 1e-12));
    }
    (c1, c2)
}

/// Long-time family over `ms` with the fitted drag bound.
pub fn run_longtime_family(
    ms: &[u32],
    cfg: &ExperimentConfig,
    lt: &LongtimeConfig,
) -> Result<Vec<DragReport>> {
    let mut reports = ms
        .iter()
        .map(|&m| run_longtime_scenario(m, cfg, lt))
        .collect::<Result<Vec<_>>>()?;
    fit_drag_bound(&mut reports);
    Ok(reports)
}

/// One sweep cell.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub m: u32,
    pub viscosity: Viscosity,
}

pub const SWEEP_HEADER: &str =
    "m,b,kind,nu,N,D_at_1,D_at_1p1,D_at_2,E_at_1,E_at_2,recovery,pass_flags";

/// Runs every cell (in parallel) and returns rows in cell order.
pub fn sweep(
    cells: &[SweepCell],
    continuation: Continuation,
    cfg: &ExperimentConfig,
) -> Vec<std::result::Result<ScenarioResult, LabError>> {
    let job = |c: &SweepCell| match continuation {
        Continuation::Reversed => run_thm2_scenario(c.m, c.viscosity, cfg),
        _ => run_thm1_scenario(c.m, c.viscosity, cfg),
    };
    let exec = || cells.par_iter().map(job).collect::<Vec<_>>();
    match cfg.threads {
        Some(t) => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
            Ok(pool) => pool.install(exec),
            Err(_) => exec(),
        },
        None => exec(),
    }
}

/// CSV rendering of sweep rows; failed cells carry the error in
/// `pass_flags`.
pub fn sweep_csv(
    cells: &[SweepCell],
    rows: &[std::result::Result<ScenarioResult, LabError>],
    b: u32,
) -> String {
    use crate::solver::fmt17;
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for (cell, row) in cells.iter().zip(rows) {
        match row {
            Ok(r) => {
                let flags: Vec<String> = r
                    .flags
                    .iter()
                    .map(|(k, ok)| format!("{k}={}", if *ok { "pass" } else { "fail" }))
                    .collect();
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{},{},{}\n",
                    r.m,
                    r.b,
                    r.kind,
                    fmt17(r.nu),
                    r.n,
                    fmt17(r.d_at_1),
                    fmt17(r.d_at_1p_delta),
                    fmt17(r.d_at_2),
                    fmt17(r.e_at_1),
                    fmt17(r.e_at_2),
                    r.recovery.map(fmt17).unwrap_or_default(),
                    flags.join(";")
                ));
            }
            Err(e) => {
                let msg = e.to_string().replace([',', '\n'], " ");
                out.push_str(&format!(
                    "{},{},{},,,,,,,,,error={}\n",
                    cell.m,
                    b,
                    cell.viscosity.label(),
                    msg
                ));
            }
        }
    }
    out
}

/// Validates that the closed intervals `[ν^l(m), ν^h(m)]` are pairwise
/// disjoint along the subsequence `ms`.
pub fn viscosity_intervals_disjoint(ms: &[u32], b: u32) -> Result<bool> {
    let mut iv = ms
        .iter()
        .map(|&m| {
            Ok((
                viscosity_schedule(ViscosityKind::Low, m, b, None)?,
                viscosity_schedule(ViscosityKind::High, m, b, None)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    iv.sort_by(|x, y| x.0.total_cmp(&y.0));
    Ok(iv.windows(2).all(|w| w[0].1 < w[1].0))
}

pub fn strictly_increasing(v: &[f64]) -> bool {
    v.len() >= 2 && v.windows(2).all(|w| w[1] > w[0])
}

pub fn strictly_decreasing(v: &[f64]) -> bool {
    v.len() >= 2 && v.windows(2).all(|w| w[1] < w[0])
}

/// Family flags of forward-cascade runs ordered by increasing `m`.
pub fn thm1_family_flags(rows: &[ScenarioResult], viscosity: Viscosity) -> Vec<(String, bool)> {
    let mut flags = vec![(
        "closure".to_string(),
        rows.iter().all(|r| r.flags.iter().all(|(_, ok)| *ok)),
    )];
    let d11: Vec<f64> = rows.iter().map(|r| r.d_at_1p_delta).collect();
    let d2: Vec<f64> = rows.iter().map(|r| r.d_at_2).collect();
    match viscosity {
        Viscosity::High => {
            flags.push(("d_1p_delta_increasing".into(), strictly_increasing(&d11)));
            flags.push((
                "d_1p_delta_ge_0.8".into(),
                d11.last().is_some_and(|&d| d >= 0.8),
            ));
        }
        Viscosity::Low => {
            flags.push(("d_2_decreasing".into(), strictly_decreasing(&d2)));
            flags.push(("d_2_le_0.2".into(), d2.last().is_some_and(|&d| d <= 0.2)));
        }
        _ => {}
    }
    flags
}

/// Family flags of reversed runs ordered by increasing `m`; `λ_m^{-2}` is
/// `FixedK(1)`.
pub fn thm2_family_flags(rows: &[ScenarioResult], viscosity: Viscosity) -> Vec<(String, bool)> {
    let mut flags = vec![(
        "closure".to_string(),
        rows.iter().all(|r| r.flags.iter().all(|(_, ok)| *ok)),
    )];
    let e2: Vec<f64> = rows.iter().map(|r| r.e_at_2).collect();
    match viscosity {
        Viscosity::FixedK(k) if k == 1.0 => {
            flags.push(("recovery_increasing".into(), strictly_increasing(&e2)));
            flags.push((
                "recovery_ge_0.8".into(),
                e2.last().is_some_and(|&e| e >= 0.8),
            ));
        }
        Viscosity::High => flags.push((
            "recovery_le_0.2".into(),
            e2.last().is_some_and(|&e| e <= 0.2),
        )),
        Viscosity::Alpha(_) => flags.push((
            "alpha_window".into(),
            rows.iter()
                .all(|r| r.alpha_window.is_some_and(|w| w.inside)),
        )),
        _ => {}
    }
    flags
}

/// Localization samples `(t, q̃, α)` of a ledger with shell columns.
pub fn localization_series(ledger: &RunLedger) -> Vec<(f64, usize, Option<f64>)> {
    ledger
        .t
        .iter()
        .zip(&ledger.shells)
        .map(|(&t, e)| {
            let s = ShellSpectrum::from_energies(e.clone());
            (t, s.dominant, s.fit.map(|f| f.alpha))
        })
        .collect()
}

/// Shell spectrum of a field at the final shell of its grid.
pub fn field_shells(theta: &ScalarField2D) -> ShellSpectrum {
    shell_spectrum(theta, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_examples() {
        let h = viscosity_schedule(ViscosityKind::High, 2, 5, None).unwrap();
        assert!((h - 2f64.powf(2.5) / 625.0).abs() < 1e-18);
        assert!((h - 0.0090510).abs() < 1e-7);
        assert_eq!(
            viscosity_schedule(ViscosityKind::Intermediate, 2, 5, None).unwrap(),
            2.0 / 625.0
        );
        assert_eq!(
            viscosity_schedule(ViscosityKind::Low, 2, 5, None).unwrap(),
            0.5 / 625.0
        );
        assert!(viscosity_schedule(ViscosityKind::High, 0, 2, None).is_err());
        assert!(viscosity_schedule(ViscosityKind::FixedK, 3, 2, None).is_err());
    }

    #[test]
    fn schedule_ordering() {
        for b in 2..6 {
            for m in 2..10 {
                let v = |k| viscosity_schedule(k, m, b, Some(1.0)).unwrap();
                assert!(v(ViscosityKind::Low) < v(ViscosityKind::FixedK));
                assert!(v(ViscosityKind::FixedK) < v(ViscosityKind::Intermediate));
                assert!(v(ViscosityKind::Intermediate) < v(ViscosityKind::High));
            }
        }
    }

    #[test]
    fn grid_follows_resolution_guard() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.grid_for(3).unwrap(), 128);
        assert_eq!(cfg.grid_for(6).unwrap(), 512);
        assert_eq!(cfg.grid_for(8).unwrap(), 2048);
    }

    #[test]
    fn drag_fit_covers_points() {
        let mk = |re: f64, drag: f64| DragReport {
            m: 0,
            tau: 0.5,
            a_m: 1.0,
            u: 1.0,
            eps: drag,
            re,
            drag,
            c1_fit: None,
            c2_fit: None,
            bound_ok: None,
            nu_unit: 1.0 / re,
            work: drag,
            identity_residual: 0.0,
            drift_energy: 0.0,
            scalar_energy: 0.0,
            periodicity_drift: 0.0,
            periods: 3,
        };
        let mut r = vec![mk(10.0, 1.2), mk(100.0, 0.7), mk(1000.0, 0.75)];
        let (c1, c2) = fit_drag_bound(&mut r);
        assert!(c1 >= 0.0 && c2 >= 0.0);
        assert!(r.iter().all(|x| x.bound_ok == Some(true)));
    }

    #[test]
    fn empty_sweep_is_header_only() {
        let cfg = ExperimentConfig::default();
        let rows = sweep(&[], Continuation::Hold, &cfg);
        assert_eq!(sweep_csv(&[], &rows, 2), format!("{SWEEP_HEADER}\n"));
    }

    #[test]
    fn disjoint_intervals() {
        assert!(viscosity_intervals_disjoint(&[4, 12, 24], 2).unwrap());
        assert!(!viscosity_intervals_disjoint(&[4, 8], 2).unwrap());
    }
}
