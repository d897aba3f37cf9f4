//! Split-step advection-diffusion under a glued shear drift.
//!
//! Each substep applies the exact heat multiplier and the exact shear
//! translation; dissipation is booked in closed form inside the heat
//! substep, so `E + D − E₀ − W` only measures rounding.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{shell_spectrum_of, ShellSpectrum};
use crate::error::{LabError, Result};
use crate::field::{ScalarField2D, Spectrum};
use crate::glue::{stage_length, GlueSchedule, Segment, SegmentKind};
use crate::mixing_blocks::shear_profile;

/// Relative ledger closure tolerance.
pub const CLOSURE_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Splitting {
    Lie,
    Strang,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub n: usize,
    pub nu: f64,
    /// Substeps per stage duration: `dt ≤ Δ_n / steps_per_stage`.
    pub steps_per_stage: usize,
    /// Optional global cap on the substep.
    pub dt_max: Option<f64>,
    /// Step used on zero-drift segments (pure heat, exact).
    pub hold_step: f64,
    pub splitting: Splitting,
    /// Ledger sample every `ledger_stride` substeps (plus landmarks).
    pub ledger_stride: usize,
    pub shells: bool,
    /// Extra forced sample times.
    pub sample_times: Vec<f64>,
    pub snapshot_times: Vec<f64>,
    /// End time; defaults to the schedule horizon.
    pub t_end: Option<f64>,
}

impl SolverConfig {
    pub fn new(n: usize, nu: f64) -> Self {
        SolverConfig {
            n,
            nu,
            steps_per_stage: 64,
            dt_max: None,
            hold_step: 1.0 / 64.0,
            splitting: Splitting::Strang,
            ledger_stride: 8,
            shells: false,
            sample_times: Vec::new(),
            snapshot_times: Vec::new(),
            t_end: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        crate::field::check_grid(self.n)?;
        if !(self.nu >= 0.0 && self.nu.is_finite()) {
            return Err(LabError::InvalidParameter {
                name: "nu",
                reason: format!("must be finite and >= 0, got {}", self.nu),
            });
        }
        if self.steps_per_stage == 0 || self.ledger_stride == 0 {
            return Err(LabError::InvalidParameter {
                name: "steps_per_stage",
                reason: "step counts must be positive".into(),
            });
        }
        if let Some(d) = self.dt_max {
            if !(d > 0.0) {
                return Err(LabError::InvalidParameter {
                    name: "dt_max",
                    reason: format!("must be positive, got {d}"),
                });
            }
        }
        if !(self.hold_step > 0.0) {
            return Err(LabError::InvalidParameter {
                name: "hold_step",
                reason: format!("must be positive, got {}", self.hold_step),
            });
        }
        Ok(())
    }
}

/// Time series of one run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunLedger {
    pub t: Vec<f64>,
    pub energy: Vec<f64>,
    pub dissipation: Vec<f64>,
    pub work: Vec<f64>,
    pub mixnorm: Vec<f64>,
    pub enstrophy: Vec<f64>,
    pub shells: Vec<Vec<f64>>,
    /// Energy on the Nyquist lines (under-resolution indicator).
    pub nyquist: Vec<f64>,
}

impl RunLedger {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn e0(&self) -> f64 {
        self.energy[0]
    }

    /// `max_i |E_i + D_i − E_0 − W_i|`.
    pub fn closure_residual(&self) -> (f64, f64) {
        let e0 = self.e0();
        let mut worst = (0.0, 0.0);
        for i in 0..self.len() {
            let r = (self.energy[i] + self.dissipation[i] - e0 - self.work[i]).abs();
            if r > worst.0 {
                worst = (r, self.t[i]);
            }
        }
        worst
    }

    /// Errors when the closure residual exceeds `tol · E₀`.
    pub fn check_closure(&self, tol: f64) -> Result<()> {
        let (r, t) = self.closure_residual();
        if r > tol * self.e0().max(f64::MIN_POSITIVE) {
            return Err(LabError::LedgerClosure { residual: r, t });
        }
        Ok(())
    }

    /// Index of the sample at time `t` (exact match required).
    pub fn index_of(&self, t: f64) -> Option<usize> {
        self.t.iter().position(|&s| s == t)
    }

    /// Linear interpolation of a column at `t`.
    pub fn interpolate(column: &[f64], times: &[f64], t: f64) -> f64 {
        match times.iter().position(|&s| s >= t) {
            Some(0) => column[0],
            Some(i) => {
                let w = (t - times[i - 1]) / (times[i] - times[i - 1]);
                column[i - 1] + w * (column[i] - column[i - 1])
            }
            None => *column.last().expect("non-empty ledger"),
        }
    }

    pub fn energy_at(&self, t: f64) -> f64 {
        Self::interpolate(&self.energy, &self.t, t)
    }

    pub fn dissipation_at(&self, t: f64) -> f64 {
        Self::interpolate(&self.dissipation, &self.t, t)
    }

    pub fn work_at(&self, t: f64) -> f64 {
        Self::interpolate(&self.work, &self.t, t)
    }

    /// CSV with columns `t,E,D,W,mixnorm[,shell_0..]`, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let q = self.shells.first().map(|s| s.len()).unwrap_or(0);
        let mut out = String::from("t,E,D,W,mixnorm");
        for i in 0..q {
            out.push_str(&format!(",shell_{i}"));
        }
        out.push('\n');
        for i in 0..self.len() {
            out.push_str(&format!(
                "{},{},{},{},{}",
                fmt17(self.t[i]),
                fmt17(self.energy[i]),
                fmt17(self.dissipation[i]),
                fmt17(self.work[i]),
                fmt17(self.mixnorm[i])
            ));
            if q > 0 {
                for e in &self.shells[i] {
                    out.push(',');
                    out.push_str(&fmt17(*e));
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Formats with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Result of [`run`].
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub ledger: RunLedger,
    pub snapshots: Vec<(f64, ScalarField2D)>,
    pub final_field: ScalarField2D,
}

impl RunOutput {
    pub fn shell_spectra(&self) -> Vec<ShellSpectrum> {
        self.ledger
            .shells
            .iter()
            .map(|e| ShellSpectrum::from_energies(e.clone()))
            .collect()
    }
}

/// One substep of the time grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Substep {
    pub segment: usize,
    pub ta: f64,
    pub tb: f64,
    /// Record a ledger sample at `tb`.
    pub sample: bool,
    pub snapshot: bool,
}

/// Time grid shared by every run on a schedule.
pub fn plan(schedule: &GlueSchedule, cfg: &SolverConfig) -> (Vec<Segment>, Vec<Substep>) {
    let t_end = cfg.t_end.unwrap_or_else(|| schedule.horizon());
    let segments = schedule.segments();
    let mut forced: Vec<f64> = schedule.landmarks();
    forced.extend(cfg.sample_times.iter().copied());
    forced.extend(cfg.snapshot_times.iter().copied());
    forced.retain(|&t| t > 0.0 && t <= t_end);
    forced.sort_by(f64::total_cmp);
    forced.dedup();
    let snaps = &cfg.snapshot_times;

    let mut steps = Vec::new();
    let mut count = 0usize;
    for (si, seg) in segments.iter().enumerate() {
        if seg.start >= t_end {
            break;
        }
        let end = seg.end.min(t_end);
        let mut dt = match seg.kind {
            SegmentKind::Shear { stage, .. } => stage_length(stage) / cfg.steps_per_stage as f64,
            SegmentKind::Zero => cfg.hold_step,
        };
        if let Some(cap) = cfg.dt_max {
            dt = dt.min(cap);
        }
        let mut cuts = vec![seg.start];
        cuts.extend(forced.iter().copied().filter(|&t| t > seg.start && t < end));
        cuts.push(end);
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b <= a {
                continue;
            }
            let pieces = ((b - a) / dt).ceil().max(1.0) as usize;
            for p in 0..pieces {
                let ta = a + (b - a) * p as f64 / pieces as f64;
                let tb = if p + 1 == pieces {
                    b
                } else {
                    a + (b - a) * (p + 1) as f64 / pieces as f64
                };
                count += 1;
                let landmark =
                    p + 1 == pieces && forced.binary_search_by(|x| x.total_cmp(&b)).is_ok();
                steps.push(Substep {
                    segment: si,
                    ta,
                    tb,
                    sample: landmark
                        || count.is_multiple_of(cfg.ledger_stride)
                        || (p + 1 == pieces && b == t_end),
                    snapshot: p + 1 == pieces && snaps.contains(&b),
                });
            }
        }
    }
    (segments, steps)
}

/// Mutable integrator state for one scalar.
pub struct Integrator {
    pub spec: Spectrum,
    pub nu: f64,
    pub dissipated: f64,
    pending_heat: f64,
}

impl Integrator {
    pub fn new(theta0: &ScalarField2D, nu: f64) -> Self {
        Integrator {
            spec: Spectrum::from_field(theta0),
            nu,
            dissipated: 0.0,
            pending_heat: 0.0,
        }
    }

    /// Queues a heat substep; consecutive heat substeps merge exactly.
    pub fn heat(&mut self, dt: f64) {
        if self.nu > 0.0 {
            self.pending_heat += dt;
        }
    }

    pub fn flush(&mut self) {
        if self.pending_heat > 0.0 {
            self.dissipated += self.spec.heat(self.nu, self.pending_heat);
            self.pending_heat = 0.0;
        }
    }

    pub fn advect(
        &mut self,
        schedule: &GlueSchedule,
        seg: &Segment,
        ta: f64,
        tb: f64,
    ) -> Result<()> {
        let d = schedule.displacement(seg, ta, tb)?;
        if d == 0.0 {
            return Ok(());
        }
        self.flush();
        let SegmentKind::Shear { stage, step, .. } = seg.kind else {
            return Ok(());
        };
        let st = &schedule.blocks[stage as usize][step];
        let prof: Vec<f64> = shear_profile(st.wavenumber, st.phase, self.spec.n())
            .into_iter()
            .map(|p| d * p)
            .collect();
        self.spec.translate(st.axis.translation(), &prof);
        Ok(())
    }

    pub fn substep(
        &mut self,
        schedule: &GlueSchedule,
        seg: &Segment,
        s: &Substep,
        splitting: Splitting,
    ) -> Result<()> {
        let dt = s.tb - s.ta;
        match splitting {
            Splitting::Strang => {
                self.heat(0.5 * dt);
                self.advect(schedule, seg, s.ta, s.tb)?;
                self.heat(0.5 * dt);
            }
            Splitting::Lie => {
                self.advect(schedule, seg, s.ta, s.tb)?;
                self.heat(dt);
            }
        }
        Ok(())
    }
}

fn record(ledger: &mut RunLedger, t: f64, it: &Integrator, shells: bool) {
    ledger.t.push(t);
    ledger.energy.push(it.spec.energy());
    ledger.dissipation.push(it.dissipated);
    ledger.work.push(0.0);
    ledger.mixnorm.push(it.spec.h_minus1_sq().sqrt());
    ledger.enstrophy.push(it.spec.grad_energy());
    ledger.nyquist.push(it.spec.nyquist_energy());
    if shells {
        ledger.shells.push(shell_spectrum_of(&it.spec).energies);
    }
}

fn check_inputs(schedule: &GlueSchedule, theta0: &ScalarField2D, cfg: &SolverConfig) -> Result<()> {
    cfg.validate()?;
    if theta0.n() != cfg.n {
        return Err(LabError::GridMismatch {
            expected: cfg.n,
            found: theta0.n(),
        });
    }
    if !schedule.zero_drift {
        schedule.check_resolution(cfg.n)?;
    }
    Ok(())
}

/// Evolves `theta0` under `schedule` with viscosity `cfg.nu`.
pub fn run(
    schedule: &GlueSchedule,
    theta0: &ScalarField2D,
    cfg: &SolverConfig,
) -> Result<RunOutput> {
    check_inputs(schedule, theta0, cfg)?;
    let (segments, steps) = plan(schedule, cfg);
    let mut it = Integrator::new(theta0, cfg.nu);
    let mut ledger = RunLedger::default();
    let mut snapshots = Vec::new();
    record(&mut ledger, 0.0, &it, cfg.shells);
    if cfg.snapshot_times.contains(&0.0) {
        snapshots.push((0.0, it.spec.to_field()));
    }
    for s in &steps {
        it.substep(schedule, &segments[s.segment], s, cfg.splitting)?;
        if s.sample || s.snapshot {
            it.flush();
        }
        if s.sample {
            record(&mut ledger, s.tb, &it, cfg.shells);
        }
        if s.snapshot {
            snapshots.push((s.tb, it.spec.to_field()));
        }
    }
    it.flush();
    Ok(RunOutput {
        ledger,
        snapshots,
        final_field: it.spec.to_field(),
    })
}

/// Viscous and inviscid runs side by side.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PairReport {
    pub viscous: RunLedger,
    pub inviscid: RunLedger,
    pub t: Vec<f64>,
    /// `‖θ(t) − ρ(t)‖²` at each sample.
    pub difference: Vec<f64>,
    /// `(2ν∫₀ᵗ‖∇ρ‖²)^{1/2} (2ν∫₀ᵗ‖∇θ‖²)^{1/2}` at each sample.
    pub bound: Vec<f64>,
    pub sup_difference: f64,
    /// `min_t (bound − difference)`.
    pub margin: f64,
}

/// Runs `θ` (viscosity `nu`) and `ρ` (inviscid) from the same data.
///
/// `∫‖∇ρ‖²` is accumulated by the trapezoid rule on the substep grid.
pub fn run_pair(
    schedule: &GlueSchedule,
    theta0: &ScalarField2D,
    cfg: &SolverConfig,
) -> Result<PairReport> {
    check_inputs(schedule, theta0, cfg)?;
    let (segments, steps) = plan(schedule, cfg);
    let mut th = Integrator::new(theta0, cfg.nu);
    let mut rh = Integrator::new(theta0, 0.0);
    let mut viscous = RunLedger::default();
    let mut inviscid = RunLedger::default();
    let (mut t, mut difference, mut bound) = (vec![0.0], vec![0.0], vec![0.0]);
    record(&mut viscous, 0.0, &th, cfg.shells);
    record(&mut inviscid, 0.0, &rh, cfg.shells);
    let mut rho_enstrophy_integral = 0.0;
    let mut prev = rh.spec.grad_energy();
    for s in &steps {
        let seg = &segments[s.segment];
        th.substep(schedule, seg, s, cfg.splitting)?;
        rh.substep(schedule, seg, s, cfg.splitting)?;
        let cur = rh.spec.grad_energy();
        rho_enstrophy_integral += 0.5 * (prev + cur) * (s.tb - s.ta);
        prev = cur;
        if s.sample {
            th.flush();
            record(&mut viscous, s.tb, &th, cfg.shells);
            record(&mut inviscid, s.tb, &rh, cfg.shells);
            t.push(s.tb);
            difference.push(th.spec.distance_sq(&rh.spec));
            let b = (2.0 * cfg.nu * rho_enstrophy_integral).sqrt() * th.dissipated.sqrt();
            bound.push(b);
        }
    }
    let sup_difference = difference.iter().cloned().fold(0.0, f64::max);
    let margin = bound
        .iter()
        .zip(difference.iter())
        .map(|(b, d)| b - d)
        .fold(f64::INFINITY, f64::min);
    Ok(PairReport {
        viscous,
        inviscid,
        t,
        difference,
        bound,
        sup_difference,
        margin,
    })
}

/// Exact heat substep on a field: returns the new field and the
/// dissipated energy.
pub fn heat_substep(theta: &ScalarField2D, nu: f64, dt: f64) -> (ScalarField2D, f64) {
    if nu == 0.0 || dt == 0.0 {
        return (theta.clone(), 0.0);
    }
    let mut s = Spectrum::from_field(theta);
    let d = s.heat(nu, dt);
    (s.to_field(), d)
}

/// Exact transport of `theta` over `[ta, tb]` inside segment `seg`.
pub fn advect_substep(
    theta: &ScalarField2D,
    schedule: &GlueSchedule,
    seg: &Segment,
    ta: f64,
    tb: f64,
) -> Result<ScalarField2D> {
    let d = schedule.displacement(seg, ta, tb)?;
    if d == 0.0 {
        return Ok(theta.clone());
    }
    let mut it = Integrator::new(theta, 0.0);
    it.advect(schedule, seg, ta, tb)?;
    Ok(it.spec.to_field())
}

const SNAPSHOT_MAGIC: &[u8; 8] = b"ANOMSNAP";

/// Writes a snapshot: 32-byte header (`ANOMSNAP`, `N` as u64, `t` as f64,
/// 8 reserved zero bytes) followed by `N²` little-endian f64 values in
/// row-major `[x₂][x₁]` order.
pub fn write_snapshot(path: &Path, field: &ScalarField2D, t: f64) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(SNAPSHOT_MAGIC)?;
    w.write_all(&(field.n() as u64).to_le_bytes())?;
    w.write_all(&t.to_le_bytes())?;
    w.write_all(&[0u8; 8])?;
    for v in field.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<(ScalarField2D, f64)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut header = [0u8; 32];
    r.read_exact(&mut header)?;
    if &header[..8] != SNAPSHOT_MAGIC {
        return Err(LabError::Io(format!(
            "{}: not a snapshot file",
            path.display()
        )));
    }
    let n = u64::from_le_bytes(header[8..16].try_into().expect("8 bytes")) as usize;
    let t = f64::from_le_bytes(header[16..24].try_into().expect("8 bytes"));
    crate::field::check_grid(n)?;
    let mut buf = vec![0u8; n * n * 8];
    r.read_exact(&mut buf)?;
    let values = buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((ScalarField2D::new(n, values)?, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glue::Continuation;
    use crate::mixing_blocks::{block_initial_density, BlockParams};
    use std::f64::consts::PI;

    #[test]
    fn heat_single_mode() {
        let f = ScalarField2D::from_fn(16, |x, _| 2f64.sqrt() * (2.0 * PI * x).sin()).unwrap();
        let (g, d) = heat_substep(&f, 0.01, 1.0);
        let e = (-8.0 * PI * PI * 0.01f64).exp();
        assert!((g.energy() - e).abs() < 1e-14);
        assert!((d - (1.0 - e)).abs() < 1e-14);
        assert!((e - 0.454041).abs() < 1e-6);
        let (h, d0) = heat_substep(&f, 0.0, 1.0);
        assert_eq!(h, f);
        assert_eq!(d0, 0.0);
    }

    #[test]
    fn inviscid_single_block_conserves_energy() {
        let s = GlueSchedule::new(0, BlockParams::default(), Continuation::Hold).unwrap();
        let out = run(
            &s,
            &block_initial_density(32).unwrap(),
            &SolverConfig::new(32, 0.0),
        )
        .unwrap();
        for (e, d) in out.ledger.energy.iter().zip(&out.ledger.dissipation) {
            assert!((e - 1.0).abs() < 1e-12);
            assert_eq!(*d, 0.0);
        }
    }

    #[test]
    fn samples_include_landmarks() {
        let s = GlueSchedule::new(2, BlockParams::default(), Continuation::Hold).unwrap();
        let mut cfg = SolverConfig::new(32, 0.001);
        cfg.sample_times = vec![1.1];
        let out = run(&s, &block_initial_density(32).unwrap(), &cfg).unwrap();
        for t in [0.75, 1.0 - 1.0 / 9.0, 0.9375, 1.0, 1.1, 2.0] {
            assert!(out.ledger.index_of(t).is_some(), "missing {t}");
        }
        out.ledger.check_closure(CLOSURE_TOLERANCE).unwrap();
    }

    #[test]
    fn snapshot_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.bin");
        let f = block_initial_density(16).unwrap();
        write_snapshot(&p, &f, 0.5).unwrap();
        let (g, t) = read_snapshot(&p).unwrap();
        assert_eq!(g, f);
        assert_eq!(t, 0.5);
        assert_eq!(std::fs::metadata(&p).unwrap().len(), 32 + 16 * 16 * 8);
    }
}
