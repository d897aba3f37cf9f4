//! Time-glued drift: stage `n` of the mixing cascade is played on the
//! warped window `[t_n, t_{n+1})`, `t_n = 1 − (n+1)^{-2}`, followed by a
//! continuation on `[1, 2]` (hold or time reversal) or by periodization
//! around `t = 1`.
//!
//! On `[t_n, t_{n+1}]` the warp is `η(t) = t_n + Δ_n S(u)` with
//! `u = (t − t_n)/Δ_n`; block time is `s = S(u)`. The displacement of
//! segment `j` is therefore `D_j · S_K(S(u))` in closed form, where
//! `S_K` is the segment ramp.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::mixing_blocks::{build_block_drift, Axis, BlockParams, ShearStep};
use crate::smooth;

/// Absolute tolerance of the quadratures used for cut displacements and
/// drift energy integrals.
pub const QUADRATURE_TOL: f64 = 1e-13;

/// `t_n = 1 − (n+1)^{-2}`.
pub fn stage_times(n: u32) -> f64 {
    let k = (n as f64) + 1.0;
    1.0 - 1.0 / (k * k)
}

/// Duration `t_{n+1} − t_n`.
pub fn stage_length(n: u32) -> f64 {
    stage_times(n + 1) - stage_times(n)
}

/// Stage containing `t ∈ [0, 1)`: the `n` with `t_n ≤ t < t_{n+1}`.
pub fn stage_of(t: f64) -> u32 {
    let guess = (1.0 / (1.0 - t).sqrt() - 1.0).floor().max(0.0) as u32;
    let mut n = guess;
    while n > 0 && stage_times(n) > t {
        n -= 1;
    }
    while stage_times(n + 1) <= t {
        n += 1;
    }
    n
}

/// Piecewise smooth-step warp fixing every `t_n`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TimeWarp;

impl TimeWarp {
    /// `(η(t), η'(t))` for `t ∈ [0, 1]`.
    pub fn eval(&self, t: f64) -> Result<(f64, f64)> {
        if !(0.0..=1.0).contains(&t) {
            return Err(LabError::Domain {
                what: "t",
                value: t,
                domain: "[0, 1]",
            });
        }
        if t == 1.0 {
            return Ok((1.0, 0.0));
        }
        let n = stage_of(t);
        let (tn, dn) = (stage_times(n), stage_length(n));
        let u = (t - tn) / dn;
        Ok((tn + dn * smooth::step(u), smooth::step_prime(u)))
    }
}

/// Smooth cutoffs of the periodization around `t = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutoffPair {
    pub tau: f64,
}

impl CutoffPair {
    pub fn new(tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(LabError::Domain {
                what: "tau",
                value: tau,
                domain: "(0, 1)",
            });
        }
        Ok(CutoffPair { tau })
    }

    /// Density window: 1 on `[1 − τ/4, 1 + τ/4]`, 0 outside `(1 − τ/3, 1 + τ/3)`.
    pub fn window(&self, t: f64) -> f64 {
        let tau = self.tau;
        if t <= 1.0 {
            smooth::ramp(t, 1.0 - tau / 3.0, 1.0 - tau / 4.0)
        } else {
            1.0 - smooth::ramp(t, 1.0 + tau / 4.0, 1.0 + tau / 3.0)
        }
    }

    pub fn window_prime(&self, t: f64) -> f64 {
        let tau = self.tau;
        if t <= 1.0 {
            smooth::ramp_prime(t, 1.0 - tau / 3.0, 1.0 - tau / 4.0)
        } else {
            -smooth::ramp_prime(t, 1.0 + tau / 4.0, 1.0 + tau / 3.0)
        }
    }

    /// Drift cutoff: 0 up to `1 − τ/2`, 1 from `1 − τ/3` on.
    pub fn drift_cut(&self, t: f64) -> f64 {
        smooth::ramp(t, 1.0 - self.tau / 2.0, 1.0 - self.tau / 3.0)
    }

    pub fn drift_cut_prime(&self, t: f64) -> f64 {
        smooth::ramp_prime(t, 1.0 - self.tau / 2.0, 1.0 - self.tau / 3.0)
    }

    /// Maps `t` to its representative in `[1 − τ/2, 1 + τ/2)`.
    pub fn fold(&self, t: f64) -> f64 {
        let k = ((t - 1.0) / self.tau + 0.5).floor();
        t - k * self.tau
    }
}

/// Behavior after the cascade completes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Continuation {
    /// Zero drift on `[1, 2]`.
    Hold,
    /// `v(t) = −v(2 − t)` on `(1, 2]`.
    Reversed,
    /// `τ`-periodic cut copy of the drift around `t = 1`.
    Periodized { cutoffs: CutoffPair },
}

impl Continuation {
    pub fn name(&self) -> &'static str {
        match self {
            Continuation::Hold => "hold",
            Continuation::Reversed => "reversed",
            Continuation::Periodized { .. } => "periodized",
        }
    }
}

/// Where the drift comes from on a time segment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SegmentKind {
    Zero,
    /// Segment `step` of stage `stage`; `mirrored` segments replay the
    /// forward one backwards in time with the opposite sign.
    Shear {
        stage: u32,
        step: usize,
        mirrored: bool,
    },
}

/// Maximal time interval on which the drift is one fixed shear (or zero).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub kind: SegmentKind,
}

/// Drift at one instant: `v = speed · sin(2π(k y + φ)) ê`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftSample {
    /// Active stage; `m + 1` once the cascade is frozen.
    pub stage: u32,
    pub step: Option<usize>,
    pub axis: Option<Axis>,
    pub wavenumber: u64,
    pub phase: f64,
    /// Time multiplier `η'(t)/Δ_n` from block time to physical time.
    pub rate: f64,
    pub speed: f64,
    /// `d speed / dt`.
    pub acceleration: f64,
}

impl DriftSample {
    fn zero(stage: u32) -> Self {
        DriftSample {
            stage,
            step: None,
            axis: None,
            wavenumber: 0,
            phase: 0.0,
            rate: 0.0,
            speed: 0.0,
            acceleration: 0.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.speed == 0.0 && self.acceleration == 0.0
    }
}

/// Inverse of the smooth step by bisection (exact to the last bits).
fn step_inverse(y: f64) -> f64 {
    if y <= 0.0 {
        return 0.0;
    }
    if y >= 1.0 {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if smooth::step(mid) < y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Immutable glued drift schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlueSchedule {
    pub m: u32,
    pub params: BlockParams,
    pub blocks: Vec<Vec<ShearStep>>,
    pub continuation: Continuation,
    /// Optional zero-drift override (heat-only baselines).
    pub zero_drift: bool,
}

impl GlueSchedule {
    pub fn new(m: u32, params: BlockParams, continuation: Continuation) -> Result<Self> {
        params.validate()?;
        let blocks = (0..=m)
            .map(|n| build_block_drift(n, &params))
            .collect::<Result<Vec<_>>>()?;
        Ok(GlueSchedule {
            m,
            params,
            blocks,
            continuation,
            zero_drift: false,
        })
    }

    /// Same horizon and breakpoints, but the drift is identically zero.
    pub fn without_drift(mut self) -> Self {
        self.zero_drift = true;
        self
    }

    /// Guard `λ_{m+1} ≤ N/4`.
    pub fn check_resolution(&self, grid: usize) -> Result<()> {
        self.params.check_resolution(self.m, grid)
    }

    /// The uncut forward cascade followed by zero drift.
    pub fn uncut(&self) -> GlueSchedule {
        GlueSchedule {
            continuation: Continuation::Hold,
            ..self.clone()
        }
    }

    /// End of the natural time horizon.
    pub fn horizon(&self) -> f64 {
        match self.continuation {
            Continuation::Hold | Continuation::Reversed => 2.0,
            Continuation::Periodized { cutoffs } => 1.0 + cutoffs.tau / 2.0,
        }
    }

    /// Stage boundaries and segment ends of the forward cascade on `[0, 1]`.
    fn forward_segments(&self) -> Vec<Segment> {
        let mut out = Vec::new();
        for n in 0..=self.m {
            let (tn, dn) = (stage_times(n), stage_length(n));
            let steps = &self.blocks[n as usize];
            for (j, st) in steps.iter().enumerate() {
                let a = if j == 0 {
                    tn
                } else {
                    tn + dn * step_inverse(st.start)
                };
                let b = if j + 1 == steps.len() {
                    stage_times(n + 1)
                } else {
                    tn + dn * step_inverse(st.end)
                };
                let kind = if self.zero_drift {
                    SegmentKind::Zero
                } else {
                    SegmentKind::Shear {
                        stage: n,
                        step: j,
                        mirrored: false,
                    }
                };
                out.push(Segment {
                    start: a,
                    end: b,
                    kind,
                });
            }
        }
        out.push(Segment {
            start: stage_times(self.m + 1),
            end: 1.0,
            kind: SegmentKind::Zero,
        });
        out
    }

    /// Ordered segments covering `[0, horizon]`.
    pub fn segments(&self) -> Vec<Segment> {
        let mut out = self.forward_segments();
        match self.continuation {
            Continuation::Hold => out.push(Segment {
                start: 1.0,
                end: 2.0,
                kind: SegmentKind::Zero,
            }),
            Continuation::Reversed => {
                let fwd = out.clone();
                for seg in fwd.iter().rev() {
                    let kind = match seg.kind {
                        SegmentKind::Shear { stage, step, .. } => SegmentKind::Shear {
                            stage,
                            step,
                            mirrored: true,
                        },
                        SegmentKind::Zero => SegmentKind::Zero,
                    };
                    out.push(Segment {
                        start: 2.0 - seg.end,
                        end: 2.0 - seg.start,
                        kind,
                    });
                }
            }
            Continuation::Periodized { cutoffs } => {
                let end = 1.0 + cutoffs.tau / 2.0;
                out.push(Segment {
                    start: 1.0,
                    end,
                    kind: SegmentKind::Zero,
                });
            }
        }
        out
    }

    /// Stage times `t_0..t_{m+1}`, 1, and (if applicable) their mirrors
    /// and 2, in increasing order.
    pub fn landmarks(&self) -> Vec<f64> {
        let mut v: Vec<f64> = (0..=self.m + 1).map(stage_times).collect();
        v.push(1.0);
        match self.continuation {
            Continuation::Hold => v.push(2.0),
            Continuation::Reversed => {
                let mirrored: Vec<f64> = (0..=self.m + 1)
                    .rev()
                    .map(|n| 2.0 - stage_times(n))
                    .collect();
                v.extend(mirrored);
            }
            Continuation::Periodized { cutoffs } => v.push(1.0 + cutoffs.tau / 2.0),
        }
        v.dedup();
        v
    }

    fn step(&self, stage: u32, step: usize) -> &ShearStep {
        &self.blocks[stage as usize][step]
    }

    /// Forward displacement amplitude of `(stage, step)` over `[ta, tb]`
    /// (both inside the stage window).
    fn forward_displacement(&self, stage: u32, step: usize, ta: f64, tb: f64) -> f64 {
        let (tn, dn) = (stage_times(stage), stage_length(stage));
        let sa = smooth::step((ta - tn) / dn);
        let sb = smooth::step((tb - tn) / dn);
        self.step(stage, step).displacement(sa, sb)
    }

    /// Forward amplitude `a(t)` and `a'(t)` on `[0, 1]` (uncut).
    fn forward_speed(&self, t: f64) -> DriftSample {
        if self.zero_drift || t >= stage_times(self.m + 1) || t < 0.0 {
            return DriftSample::zero(self.m + 1);
        }
        let n = stage_of(t);
        let (tn, dn) = (stage_times(n), stage_length(n));
        let u = (t - tn) / dn;
        let s = smooth::step(u);
        let (sp, spp) = (
            smooth::step_prime(u) / dn,
            smooth::step_second(u) / (dn * dn),
        );
        let steps = &self.blocks[n as usize];
        let k = steps.len();
        let j = ((s * k as f64).floor() as usize).min(k - 1);
        let st = &steps[j];
        let speed = st.speed(s) * sp;
        let acceleration = st.acceleration(s) * sp * sp + st.speed(s) * spp;
        DriftSample {
            stage: n,
            step: Some(j),
            axis: Some(st.axis),
            wavenumber: st.wavenumber,
            phase: st.phase,
            rate: sp,
            speed,
            acceleration,
        }
    }

    /// Drift descriptor at time `t`.
    pub fn glued_drift(&self, t: f64) -> Result<DriftSample> {
        let horizon = match self.continuation {
            Continuation::Periodized { .. } => f64::INFINITY,
            _ => 2.0,
        };
        if !(t >= 0.0 && t <= horizon) {
            return Err(LabError::Domain {
                what: "t",
                value: t,
                domain: "[0, horizon]",
            });
        }
        if t <= 1.0 && !matches!(self.continuation, Continuation::Periodized { .. }) {
            return Ok(self.forward_speed(t));
        }
        Ok(match self.continuation {
            Continuation::Hold => DriftSample::zero(self.m + 1),
            Continuation::Reversed => {
                let mut d = self.forward_speed(2.0 - t);
                d.speed = -d.speed;
                d
            }
            Continuation::Periodized { cutoffs } => {
                let tf = cutoffs.fold(t);
                let mut d = if tf < 1.0 {
                    self.forward_speed(tf)
                } else {
                    DriftSample::zero(self.m + 1)
                };
                let (c, cp) = (cutoffs.drift_cut(tf), cutoffs.drift_cut_prime(tf));
                d.acceleration = d.acceleration * c + d.speed * cp;
                d.speed *= c;
                d
            }
        })
    }

    /// Displacement amplitude of the drift over `[ta, tb] ⊆ seg`.
    ///
    /// Forward and mirrored segments are closed form; the cut part of a
    /// periodized drift uses adaptive quadrature.
    pub fn displacement(&self, seg: &Segment, ta: f64, tb: f64) -> Result<f64> {
        let eps = 1e-12 * (1.0 + seg.end.abs());
        if ta < seg.start - eps || tb > seg.end + eps || ta > tb {
            return Err(LabError::StraddlesStep {
                start: ta,
                end: tb,
                boundary: if ta < seg.start { seg.start } else { seg.end },
            });
        }
        let SegmentKind::Shear {
            stage,
            step,
            mirrored,
        } = seg.kind
        else {
            return Ok(0.0);
        };
        if ta == tb {
            return Ok(0.0);
        }
        if mirrored {
            return Ok(-self.forward_displacement(stage, step, 2.0 - tb, 2.0 - ta));
        }
        Ok(self.forward_displacement(stage, step, ta, tb))
    }

    /// Displacement of the cut periodized drift over `[ta, tb]` inside one
    /// forward segment (`t ≤ 1`).
    pub fn cut_displacement(&self, seg: &Segment, ta: f64, tb: f64) -> Result<f64> {
        let Continuation::Periodized { cutoffs } = self.continuation else {
            return self.displacement(seg, ta, tb);
        };
        let full = 1.0 - cutoffs.tau / 3.0;
        if ta >= full {
            return self.displacement(seg, ta, tb);
        }
        let f = |t: f64| self.forward_speed(t).speed * cutoffs.drift_cut(t);
        let mid = tb.min(full);
        let mut d = smooth::integrate(&f, ta, mid, QUADRATURE_TOL);
        if tb > full {
            d += self.displacement(seg, full, tb)?;
        }
        Ok(d)
    }

    /// Force on the drift, `g = (a' + 4π²k²ν a) sin(2π(k y + φ)) ê`,
    /// returned as (descriptor, `a' + 4π²k²ν a`).
    pub fn drift_force(&self, nu: f64, t: f64) -> Result<(DriftSample, f64)> {
        let d = self.glued_drift(t)?;
        let k = d.wavenumber as f64;
        Ok((d, d.acceleration + 4.0 * PI * PI * k * k * nu * d.speed))
    }

    /// `½‖v(t)‖²`.
    pub fn drift_energy(&self, t: f64) -> Result<f64> {
        let d = self.glued_drift(t)?;
        Ok(0.25 * d.speed * d.speed)
    }

    /// `∫_a^b ‖∇v‖² dt`, segment by segment.
    pub fn drift_enstrophy(&self, a: f64, b: f64) -> Result<f64> {
        let mut total = 0.0;
        let mut cuts: Vec<f64> = self
            .segments()
            .iter()
            .map(|s| s.start)
            .filter(|&s| s > a && s < b)
            .collect();
        if let Continuation::Periodized { cutoffs } = self.continuation {
            for k in [1.0 - cutoffs.tau / 2.0, 1.0 - cutoffs.tau / 3.0] {
                if k > a && k < b {
                    cuts.push(k);
                }
            }
            cuts.sort_by(f64::total_cmp);
        }
        let mut pts = vec![a];
        pts.extend(cuts);
        pts.push(b);
        for w in pts.windows(2) {
            let f = |t: f64| {
                let d = self.glued_drift(t).expect("inside horizon");
                let k = d.wavenumber as f64;
                2.0 * PI * PI * k * k * d.speed * d.speed
            };
            total += smooth::integrate(&f, w[0], w[1], QUADRATURE_TOL);
        }
        Ok(total)
    }

    /// Work of the drift force on `[0, t]`:
    /// `W_v = ½(‖v(t)‖² − ‖v(0)‖²) + ν ∫₀ᵗ ‖∇v‖²`.
    pub fn work_of_drift_force(&self, nu: f64, t: f64) -> Result<f64> {
        Ok(self.drift_energy(t)? - self.drift_energy(0.0)? + nu * self.drift_enstrophy(0.0, t)?)
    }

    /// Deterministic JSON summary.
    pub fn summary(&self) -> serde_json::Value {
        let stages: Vec<serde_json::Value> = (0..=self.m)
            .map(|n| {
                serde_json::json!({
                    "n": n,
                    "t_start": stage_times(n),
                    "t_end": stage_times(n + 1),
                    "wavenumber": self.params.lambda(n),
                    "phases": self.blocks[n as usize].iter().map(|s| s.phase).collect::<Vec<_>>(),
                })
            })
            .collect();
        let tau = match self.continuation {
            Continuation::Periodized { cutoffs } => Some(cutoffs.tau),
            _ => None,
        };
        serde_json::json!({
            "m": self.m,
            "base": self.params.base,
            "shears_per_block": self.params.shears_per_block,
            "amplitude": self.params.amplitude,
            "continuation": self.continuation.name(),
            "tau": tau,
            "zero_drift": self.zero_drift,
            "stages": stages,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schedule(m: u32, c: Continuation) -> GlueSchedule {
        GlueSchedule::new(m, BlockParams::default(), c).unwrap()
    }

    #[test]
    fn stage_time_values() {
        assert_eq!(stage_times(0), 0.0);
        assert_eq!(stage_times(1), 0.75);
        assert_eq!(stage_times(3), 0.9375);
        for &t in &[0.0, 0.1, 0.75, 0.8, 0.9375, 0.99] {
            let n = stage_of(t);
            assert!(stage_times(n) <= t && t < stage_times(n + 1));
        }
    }

    #[test]
    fn warp_fixes_stage_times() {
        let w = TimeWarp;
        for n in 0..6 {
            let (e, ep) = w.eval(stage_times(n)).unwrap();
            assert_eq!(e, stage_times(n));
            assert_eq!(ep, 0.0);
        }
        let (e, ep) = w.eval(0.375).unwrap();
        assert!((e - 0.375).abs() < 1e-15 && ep > 0.0);
        let h = 1e-6;
        let fd = (w.eval(0.5 + h).unwrap().0 - w.eval(0.5 - h).unwrap().0) / (2.0 * h);
        assert!((fd - w.eval(0.5).unwrap().1).abs() < 1e-8);
        assert!(w.eval(1.2).is_err());
    }

    #[test]
    fn continuations() {
        let hold = schedule(2, Continuation::Hold);
        assert!(hold.glued_drift(1.5).unwrap().is_zero());
        let rev = schedule(2, Continuation::Reversed);
        let a = rev.glued_drift(0.75 + 0.01).unwrap();
        let b = rev.glued_drift(1.25 - 0.01).unwrap();
        assert_eq!(a.speed, -b.speed);
        let tau = 0.2;
        let per = schedule(
            3,
            Continuation::Periodized {
                cutoffs: CutoffPair::new(tau).unwrap(),
            },
        );
        for &t in &[0.93, 0.95, 0.97, 1.0] {
            let x = per.glued_drift(t).unwrap();
            let y = per.glued_drift(t + tau).unwrap();
            assert!((x.speed - y.speed).abs() <= 1e-12 * (1.0 + x.speed.abs()));
        }
    }

    #[test]
    fn segments_tile_the_horizon() {
        for c in [Continuation::Hold, Continuation::Reversed] {
            let s = schedule(3, c).segments();
            assert_eq!(s[0].start, 0.0);
            assert_eq!(s.last().unwrap().end, 2.0);
            for w in s.windows(2) {
                assert_eq!(w[0].end, w[1].start);
            }
        }
    }

    #[test]
    fn displacement_matches_speed_integral() {
        let s = schedule(2, Continuation::Hold);
        for seg in s
            .segments()
            .iter()
            .filter(|g| matches!(g.kind, SegmentKind::Shear { .. }))
        {
            let f = |t: f64| s.glued_drift(t).unwrap().speed;
            let q = smooth::integrate(&f, seg.start, seg.end, 1e-15);
            let d = s.displacement(seg, seg.start, seg.end).unwrap();
            assert!((q - d).abs() < 1e-12, "{q} vs {d}");
        }
    }

    #[test]
    fn force_finite_difference() {
        let s = schedule(2, Continuation::Hold);
        let nu = 0.003;
        for &t in &[0.2, 0.6, 0.8, 0.85] {
            let h = 1e-5;
            let v = |x: f64| s.glued_drift(x).unwrap().speed;
            let fd = (8.0 * (v(t + h) - v(t - h)) - (v(t + 2.0 * h) - v(t - 2.0 * h))) / (12.0 * h);
            let (d, g) = s.drift_force(nu, t).unwrap();
            let k = d.wavenumber as f64;
            let expected = fd + 4.0 * PI * PI * k * k * nu * d.speed;
            assert!(
                (g - expected).abs() < 1e-8 * (1.0 + g.abs()),
                "t={t}: {g} vs {expected}"
            );
        }
        assert_eq!(s.drift_force(nu, 1.5).unwrap().1, 0.0);
    }

    #[test]
    fn cutoff_supports() {
        let c = CutoffPair::new(0.3).unwrap();
        assert_eq!(c.window(1.0 - 0.3 / 4.0), 1.0);
        assert_eq!(c.window(1.0 + 0.3 / 4.0), 1.0);
        assert_eq!(c.window(1.0 - 0.3 / 3.0), 0.0);
        assert_eq!(c.window(1.2), 0.0);
        assert_eq!(c.drift_cut(0.85), 0.0);
        assert_eq!(c.drift_cut(0.9), 1.0);
        assert!(CutoffPair::new(1.0).is_err());
    }
}
