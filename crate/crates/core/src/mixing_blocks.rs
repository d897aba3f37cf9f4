//! Unit-time mixing blocks built from alternating sinusoidal shears.
//!
//! Block `n` consists of `K` shear segments of equal block-time length
//! `1/K`, alternating horizontal and vertical. Segment `j` moves the fluid
//! by `d(s) · sin(2π(λ_n y + φ_{n,j}))`, where the displacement amplitude
//! `d(s) = (A/λ_n)(1/K) S(K s − j)` follows the smooth step so the
//! velocity vanishes to all orders at segment endpoints.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::diagnostics::h_minus1_norm;
use crate::error::{LabError, Result};
use crate::field::{check_grid, ScalarField2D, Spectrum, TranslateAlong};
use crate::smooth;

/// Direction of the shear velocity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    /// `v = (f(x₂), 0)`: rows translate along x₁.
    Horizontal,
    /// `v = (0, f(x₁))`: columns translate along x₂.
    Vertical,
}

impl Axis {
    pub fn translation(self) -> TranslateAlong {
        match self {
            Axis::Horizontal => TranslateAlong::X1,
            Axis::Vertical => TranslateAlong::X2,
        }
    }

    pub fn other(self) -> Axis {
        match self {
            Axis::Horizontal => Axis::Vertical,
            Axis::Vertical => Axis::Horizontal,
        }
    }
}

/// Phase of shear `j` in block `n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PhaseRule {
    /// Every shear uses the same phase.
    Constant { phase: f64 },
    /// `frac(offset + (nK + j)·g)` with `g` the golden-ratio conjugate.
    Golden { offset: f64 },
    /// Cycles through a fixed list, indexed by `j`.
    Cycle { phases: Vec<f64> },
}

impl PhaseRule {
    pub fn phase(&self, n: u32, j: usize, shears_per_block: usize) -> f64 {
        let raw = match self {
            PhaseRule::Constant { phase } => *phase,
            PhaseRule::Golden { offset } => {
                let g = 0.5 * (5f64.sqrt() - 1.0);
                offset + (n as usize * shears_per_block + j) as f64 * g
            }
            PhaseRule::Cycle { phases } => phases[j % phases.len()],
        };
        raw.rem_euclid(1.0)
    }
}

/// Parameters of the shear mixing blocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockParams {
    pub base: u32,
    pub shears_per_block: usize,
    /// `A` in the amplitude rule `A / λ_n`.
    pub amplitude: f64,
    pub phase_rule: PhaseRule,
}

impl Default for BlockParams {
    fn default() -> Self {
        BlockParams {
            base: 2,
            shears_per_block: 4,
            amplitude: 1.0,
            phase_rule: PhaseRule::Cycle {
                phases: vec![0.0, 0.0, 0.25, 0.25],
            },
        }
    }
}

impl BlockParams {
    pub fn validate(&self) -> Result<()> {
        if self.base < 2 {
            return Err(LabError::InvalidParameter {
                name: "base",
                reason: format!("must be >= 2, got {}", self.base),
            });
        }
        if self.shears_per_block < 2 || !self.shears_per_block.is_multiple_of(2) {
            return Err(LabError::InvalidParameter {
                name: "shears_per_block",
                reason: format!("must be even and >= 2, got {}", self.shears_per_block),
            });
        }
        if !(self.amplitude > 0.0 && self.amplitude.is_finite()) {
            return Err(LabError::InvalidParameter {
                name: "amplitude",
                reason: format!("must be positive, got {}", self.amplitude),
            });
        }
        if let PhaseRule::Cycle { phases } = &self.phase_rule {
            if phases.is_empty() {
                return Err(LabError::InvalidParameter {
                    name: "phase_rule",
                    reason: "empty phase cycle".into(),
                });
            }
        }
        Ok(())
    }

    /// `λ_n = b^n`, `None` on overflow.
    pub fn lambda(&self, n: u32) -> Option<u64> {
        (self.base as u64).checked_pow(n)
    }

    /// Velocity amplitude scale `A / λ_n`.
    pub fn amplitude_at(&self, n: u32) -> f64 {
        self.amplitude / self.lambda(n).map(|l| l as f64).unwrap_or(f64::INFINITY)
    }

    /// Rejects stages whose successor scale `λ_{n+1}` exceeds `N/4`.
    pub fn check_resolution(&self, n: u32, grid: usize) -> Result<()> {
        let limit = grid / 4;
        match self.lambda(n + 1) {
            Some(l) if l <= limit as u64 => Ok(()),
            other => Err(LabError::Resolution {
                wavenumber: other.unwrap_or(u64::MAX),
                limit,
                n: grid,
            }),
        }
    }
}

/// One unidirectional shear segment of a block, in block time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShearStep {
    pub axis: Axis,
    pub wavenumber: u64,
    pub phase: f64,
    /// Displacement accumulated over the whole segment.
    pub total_displacement: f64,
    pub start: f64,
    pub end: f64,
}

impl ShearStep {
    /// Fraction of the segment's displacement reached at block time `s`.
    pub fn progress(&self, s: f64) -> f64 {
        smooth::ramp(s, self.start, self.end)
    }

    /// Displacement amplitude accumulated over `[sa, sb]` (block time).
    pub fn displacement(&self, sa: f64, sb: f64) -> f64 {
        if sa == sb {
            return 0.0;
        }
        self.total_displacement * (self.progress(sb) - self.progress(sa))
    }

    /// Velocity amplitude at block time `s`.
    pub fn speed(&self, s: f64) -> f64 {
        self.total_displacement * smooth::ramp_prime(s, self.start, self.end)
    }

    /// Block-time derivative of [`ShearStep::speed`].
    pub fn acceleration(&self, s: f64) -> f64 {
        let len = self.end - self.start;
        self.total_displacement * smooth::step_second((s - self.start) / len) / (len * len)
    }

    /// `sin(2π(k x + φ))` on the `n`-point grid, with exact integer phase
    /// reduction of `k x`.
    pub fn profile(&self, n: usize) -> Vec<f64> {
        shear_profile(self.wavenumber, self.phase, n)
    }
}

pub fn shear_profile(wavenumber: u64, phase: f64, n: usize) -> Vec<f64> {
    let k = (wavenumber % n as u64) as usize;
    (0..n)
        .map(|j| {
            let turns = ((k * j) % n) as f64 / n as f64 + phase;
            (2.0 * PI * turns).sin()
        })
        .collect()
}

/// Initial density `2 sin(2πx₁) sin(2πx₂)`: zero mean, unit L².
pub fn block_initial_density(n: usize) -> Result<ScalarField2D> {
    ScalarField2D::from_fn(n, |x, y| 2.0 * (2.0 * PI * x).sin() * (2.0 * PI * y).sin())
}

/// The `K` shear segments of block `n`.
pub fn build_block_drift(n: u32, params: &BlockParams) -> Result<Vec<ShearStep>> {
    params.validate()?;
    let lambda = params.lambda(n).ok_or(LabError::Resolution {
        wavenumber: u64::MAX,
        limit: 0,
        n: 0,
    })?;
    let k = params.shears_per_block;
    let total = params.amplitude / (lambda as f64 * k as f64);
    Ok((0..k)
        .map(|j| ShearStep {
            axis: if j % 2 == 0 {
                Axis::Horizontal
            } else {
                Axis::Vertical
            },
            wavenumber: lambda,
            phase: params.phase_rule.phase(n, j, k),
            total_displacement: total,
            start: j as f64 / k as f64,
            end: (j + 1) as f64 / k as f64,
        })
        .collect())
}

/// Exact transport of `field` by `step` over the block-time sub-interval
/// `[sa, sb] ⊆ [step.start, step.end]`.
pub fn apply_shear_exact(
    field: &ScalarField2D,
    step: &ShearStep,
    sa: f64,
    sb: f64,
) -> Result<ScalarField2D> {
    if sa < step.start || sb > step.end || sa > sb {
        let boundary = if sa < step.start {
            step.start
        } else {
            step.end
        };
        return Err(LabError::StraddlesStep {
            start: sa,
            end: sb,
            boundary,
        });
    }
    let d = step.displacement(sa, sb);
    if d == 0.0 {
        return Ok(field.clone());
    }
    let mut spec = Spectrum::from_field(field);
    let amp: Vec<f64> = step.profile(field.n()).iter().map(|p| d * p).collect();
    spec.translate(step.axis.translation(), &amp);
    Ok(spec.to_field())
}

/// Advances a spectral state through a whole block inviscidly.
pub fn apply_block(spec: &mut Spectrum, steps: &[ShearStep]) {
    let n = spec.n();
    for step in steps {
        let amp: Vec<f64> = step
            .profile(n)
            .iter()
            .map(|p| step.total_displacement * p)
            .collect();
        spec.translate(step.axis.translation(), &amp);
    }
}

/// Stage-boundary densities `ρ(t_0), …, ρ(t_{n_max+1})` of the inviscid
/// cascade started from [`block_initial_density`].
pub fn cascade(params: &BlockParams, grid: usize, n_max: u32) -> Result<Vec<ScalarField2D>> {
    params.check_resolution(n_max, grid)?;
    let rho = block_initial_density(grid)?;
    let mut spec = Spectrum::from_field(&rho);
    let mut out = vec![rho];
    for n in 0..=n_max {
        let steps = build_block_drift(n, params)?;
        apply_block(&mut spec, &steps);
        out.push(spec.to_field());
    }
    Ok(out)
}

/// Caps against which block measurements are flagged.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockCaps {
    pub linf: f64,
    pub grad: f64,
    pub mix: f64,
}

impl Default for BlockCaps {
    fn default() -> Self {
        BlockCaps {
            linf: 10.0,
            grad: 40.0,
            mix: 2.0,
        }
    }
}

/// Measured block estimates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockReport {
    pub n: u32,
    pub lambda_n: u64,
    pub sup_linf: f64,
    pub grad_ratio: f64,
    pub mixnorm_ratio: f64,
    pub pass: bool,
}

/// Evolves the cascade density at the start of block `n` through that
/// block and compares the measured norms with `caps`. Norms are sampled
/// at every segment end.
pub fn verify_block_estimates(
    n: u32,
    params: &BlockParams,
    grid: usize,
    caps: &BlockCaps,
) -> Result<BlockReport> {
    check_grid(grid)?;
    params.check_resolution(n, grid)?;
    let rho = block_initial_density(grid)?;
    let mut spec = Spectrum::from_field(&rho);
    for j in 0..n {
        apply_block(&mut spec, &build_block_drift(j, params)?);
    }
    let steps = build_block_drift(n, params)?;
    let start = spec.to_field();
    let mut sup_linf = start.linf();
    let mut sup_grad = start.grad_linf();
    for step in &steps {
        apply_block(&mut spec, std::slice::from_ref(step));
        let f = spec.to_field();
        sup_linf = sup_linf.max(f.linf());
        sup_grad = sup_grad.max(f.grad_linf());
    }
    let end = spec.to_field();
    let next = params.lambda(n + 1).expect("checked by resolution guard") as f64;
    let grad_ratio = sup_grad / next;
    let mixnorm_ratio = h_minus1_norm(&end)? * next;
    let pass = sup_linf <= caps.linf && grad_ratio <= caps.grad && mixnorm_ratio <= caps.mix;
    Ok(BlockReport {
        n,
        lambda_n: params.lambda(n).expect("checked"),
        sup_linf,
        grad_ratio,
        mixnorm_ratio,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn initial_density_normalization() {
        let rho = block_initial_density(64).unwrap();
        assert!((rho.l2_norm() - 1.0).abs() < 1e-14);
        assert!(rho.mean().abs() < 1e-15);
        let h = h_minus1_norm(&rho).unwrap();
        assert!((h - 1.0 / (2.0 * PI * 2f64.sqrt())).abs() < 1e-14);
        assert!(matches!(
            block_initial_density(4),
            Err(LabError::GridUnsupported { .. })
        ));
    }

    #[test]
    fn block_structure() {
        let params = BlockParams {
            shears_per_block: 2,
            ..BlockParams::default()
        };
        let steps = build_block_drift(0, &params).unwrap();
        assert_eq!(steps.len(), 2);
        assert_eq!(steps[0].axis, Axis::Horizontal);
        assert_eq!(steps[1].axis, Axis::Vertical);
        assert_eq!((steps[0].start, steps[0].end), (0.0, 0.5));
        assert_eq!((steps[1].start, steps[1].end), (0.5, 1.0));
        assert!(steps.iter().all(|s| s.wavenumber == 1));

        let five = BlockParams {
            base: 5,
            ..BlockParams::default()
        };
        assert!(build_block_drift(2, &five)
            .unwrap()
            .iter()
            .all(|s| s.wavenumber == 25));
    }

    #[test]
    fn segment_displacement_is_envelope_integral() {
        let params = BlockParams {
            shears_per_block: 2,
            amplitude: 1.0,
            ..BlockParams::default()
        };
        let steps = build_block_drift(1, &params).unwrap();
        for s in &steps {
            // velocity (A/λ₁)·S'((s − start)/len)/len integrated over the segment
            let v = |t: f64| s.speed(t);
            let oracle = smooth::integrate(&v, s.start, s.end, 1e-15);
            assert!((oracle - 0.25).abs() < 1e-13);
            assert!((s.displacement(s.start, s.end) - 0.25).abs() < 1e-15);
            assert_eq!(s.displacement(0.3, 0.3), 0.0);
        }
    }

    #[test]
    fn zero_length_interval_is_identity() {
        let rho = block_initial_density(32).unwrap();
        let step = &build_block_drift(0, &BlockParams::default()).unwrap()[0];
        let out = apply_shear_exact(&rho, step, 0.1, 0.1).unwrap();
        assert_eq!(out, rho);
        assert!(matches!(
            apply_shear_exact(&rho, step, 0.1, 0.9),
            Err(LabError::StraddlesStep { .. })
        ));
    }

    #[test]
    fn resolution_guard() {
        let p = BlockParams::default();
        assert!(p.check_resolution(3, 64).is_ok());
        assert!(matches!(
            p.check_resolution(4, 64),
            Err(LabError::Resolution {
                wavenumber: 32,
                limit: 16,
                ..
            })
        ));
    }
}
