//! Measurement functionals: negative Sobolev norms, sharp projections,
//! dyadic shell spectra with localization fits, and energy-family
//! summaries.
//!
//! With wavenumbers counted in cycles, `∇` acts as `2πi k`, so
//! `‖θ‖²_{Ḣ^{-1}} = Σ_{k≠0} |θ̂_k|² / (4π²|k|²)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::field::{shell_count, shell_index, wavenumber, ScalarField2D, Spectrum};
use crate::solver::RunLedger;

/// Mean magnitude tolerated by the homogeneous norms.
pub const MEAN_TOLERANCE: f64 = 1e-10;

/// Shells below this energy are left out of the localization fit.
pub const FIT_FLOOR: f64 = 1e-14;

fn require_mean_zero(mean: f64) -> Result<()> {
    if mean.abs() > MEAN_TOLERANCE {
        return Err(LabError::NonzeroMean { mean });
    }
    Ok(())
}

/// `‖θ‖_{Ḣ^{-1}}`.
pub fn h_minus1_norm(theta: &ScalarField2D) -> Result<f64> {
    let n = theta.n();
    let c = theta.coefficients();
    require_mean_zero(c[0].re)?;
    let s: f64 = c
        .iter()
        .enumerate()
        .skip(1)
        .map(|(idx, z)| {
            let (k2, k1) = (wavenumber(idx / n, n), wavenumber(idx % n, n));
            z.norm_sqr() / (4.0 * PI * PI * (k1 * k1 + k2 * k2) as f64)
        })
        .sum();
    Ok(s.sqrt())
}

/// Same as [`h_minus1_norm`] on the solver state.
pub fn h_minus1_norm_spectrum(spec: &Spectrum) -> Result<f64> {
    require_mean_zero(spec.mean())?;
    Ok(spec.h_minus1_sq().sqrt())
}

/// `P_{≤Λ}θ`: keeps modes with Euclidean `|k| ≤ Λ`.
pub fn project_low(theta: &ScalarField2D, cutoff: f64) -> ScalarField2D {
    let c2 = cutoff * cutoff;
    theta.map_spectrum(|k1, k2| {
        if ((k1 * k1 + k2 * k2) as f64) <= c2 {
            1.0
        } else {
            0.0
        }
    })
}

/// `P_{>Λ}θ = θ − P_{≤Λ}θ`.
pub fn project_high(theta: &ScalarField2D, cutoff: f64) -> ScalarField2D {
    let c2 = cutoff * cutoff;
    theta.map_spectrum(|k1, k2| {
        if ((k1 * k1 + k2 * k2) as f64) <= c2 {
            0.0
        } else {
            1.0
        }
    })
}

/// Bernstein check `‖P_{≤Λ}ρ‖ ≤ 2πΛ ‖P_{≤Λ}ρ‖_{Ḣ^{-1}}`.
///
/// The `2π` is the derivative factor of cycle-counted wavenumbers, so a
/// single mode with `|k| = Λ` is the equality case.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowModeCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

pub fn low_mode_bound_check(rho: &ScalarField2D, cutoff: f64) -> Result<LowModeCheck> {
    let low = project_low(rho, cutoff);
    let lhs = low.l2_norm();
    let rhs = 2.0 * PI * cutoff * h_minus1_norm(&low)?;
    Ok(LowModeCheck {
        lhs,
        rhs,
        // absolute slack absorbs rounding when no mode lies below the cutoff
        pass: lhs <= rhs * (1.0 + 1e-10) + 1e-13 * rho.l2_norm(),
    })
}

/// Fit of `‖Δ_q θ‖ ≈ c · 2^{−α|q − q̃|}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizationFit {
    pub c: f64,
    pub alpha: f64,
    pub r2: f64,
}

/// Sharp dyadic shell energies of a scalar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShellSpectrum {
    pub energies: Vec<f64>,
    pub dominant: usize,
    /// `None` when fewer than two shells carry energy above the floor.
    pub fit: Option<LocalizationFit>,
}

impl ShellSpectrum {
    pub fn from_energies(energies: Vec<f64>) -> Self {
        let mut dominant = 0;
        for (q, &e) in energies.iter().enumerate() {
            if e > energies[dominant] {
                dominant = q;
            }
        }
        let fit = localization_fit(&energies, dominant);
        ShellSpectrum {
            energies,
            dominant,
            fit,
        }
    }

    pub fn total(&self) -> f64 {
        self.energies.iter().sum()
    }
}

/// Least squares of `log₂ √s_q = log₂ c − α |q − q̃|`.
fn localization_fit(energies: &[f64], dominant: usize) -> Option<LocalizationFit> {
    let pts: Vec<(f64, f64)> = energies
        .iter()
        .enumerate()
        .filter(|(_, &e)| e > FIT_FLOOR)
        .map(|(q, &e)| ((q as f64 - dominant as f64).abs(), 0.5 * e.log2()))
        .collect();
    let m = pts.len() as f64;
    if pts.len() < 2 {
        return None;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    Some(LocalizationFit {
        c: intercept.exp2(),
        alpha: -slope,
        r2,
    })
}

/// Shells `0..=q_max`; `None` covers every mode of the grid.
pub fn shell_spectrum(theta: &ScalarField2D, q_max: Option<usize>) -> ShellSpectrum {
    let n = theta.n();
    let q_max = q_max.unwrap_or(shell_count(n) - 1);
    let mut energies = vec![0.0; q_max + 1];
    for (idx, z) in theta.coefficients().iter().enumerate().skip(1) {
        let (k2, k1) = (wavenumber(idx / n, n), wavenumber(idx % n, n));
        let q = shell_index((k1 * k1 + k2 * k2) as u64);
        if q <= q_max {
            energies[q] += z.norm_sqr();
        }
    }
    ShellSpectrum::from_energies(energies)
}

/// Shell spectrum of the solver state, covering every mode.
pub fn shell_spectrum_of(spec: &Spectrum) -> ShellSpectrum {
    ShellSpectrum::from_energies(spec.shell_energies(shell_count(spec.n()) - 1))
}

/// Kolmogorov wavenumber `(ε/ν³)^{1/4}`.
pub fn kolmogorov_wavenumber(epsilon: f64, nu: f64) -> Result<f64> {
    if !(nu > 0.0) {
        return Err(LabError::Domain {
            what: "nu",
            value: nu,
            domain: "(0, inf)",
        });
    }
    Ok((epsilon / nu.powi(3)).powf(0.25))
}

/// Kolmogorov wavenumber from the mean dissipation rate of a ledger
/// window `[t_a, t_b]`; `ε = (D(t_b) − D(t_a)) / (2(t_b − t_a))`.
pub fn kolmogorov_from_ledger(ledger: &RunLedger, nu: f64, t_a: f64, t_b: f64) -> Result<f64> {
    if !(t_b > t_a) {
        return Err(LabError::InvalidParameter {
            name: "window",
            reason: format!("empty window [{t_a}, {t_b}]"),
        });
    }
    let eps = 0.5 * (ledger.dissipation_at(t_b) - ledger.dissipation_at(t_a)) / (t_b - t_a);
    kolmogorov_wavenumber(eps, nu)
}

/// Trend of a quantity as the viscosity decreases.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Increasing,
    Decreasing,
    Mixed,
    InsufficientData,
}

impl Trend {
    /// Strict trend of `values` in sequence order.
    pub fn of(values: &[f64]) -> Trend {
        if values.len() < 2 {
            return Trend::InsufficientData;
        }
        if values.windows(2).all(|w| w[1] > w[0]) {
            Trend::Increasing
        } else if values.windows(2).all(|w| w[1] < w[0]) {
            Trend::Decreasing
        } else {
            Trend::Mixed
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyRow {
    pub nu: f64,
    pub energy: Vec<f64>,
    pub dissipation: Vec<f64>,
    pub work: Vec<f64>,
    /// `0 ≤ D_ν(t) ≤ E_ν(0) + W_ν(t)` at every requested time.
    pub bounds_ok: bool,
}

/// Energy-family table across a descending list of viscosities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilySummary {
    pub times: Vec<f64>,
    pub rows: Vec<FamilyRow>,
    /// Smallest-ν values standing in for `E(t)` and `D(t)`.
    pub limit_energy: Vec<f64>,
    pub limit_dissipation: Vec<f64>,
    /// Trends along decreasing ν, per requested time.
    pub energy_trend: Vec<Trend>,
    pub dissipation_trend: Vec<Trend>,
}

pub fn family_summary(runs: &[(f64, RunLedger)], times: &[f64]) -> Result<FamilySummary> {
    if runs.is_empty() {
        return Err(LabError::FamilyMismatch {
            reason: "empty family".into(),
        });
    }
    if runs.windows(2).any(|w| !(w[1].0 < w[0].0)) {
        return Err(LabError::FamilyMismatch {
            reason: "viscosities must be strictly descending".into(),
        });
    }
    if runs.iter().any(|(_, l)| l.t != runs[0].1.t) {
        return Err(LabError::FamilyMismatch {
            reason: "runs sample different time grids".into(),
        });
    }
    let rows: Vec<FamilyRow> = runs
        .iter()
        .map(|(nu, l)| {
            let energy: Vec<f64> = times.iter().map(|&t| l.energy_at(t)).collect();
            let dissipation: Vec<f64> = times.iter().map(|&t| l.dissipation_at(t)).collect();
            let work: Vec<f64> = times.iter().map(|&t| l.work_at(t)).collect();
            let tol = 1e-9 * l.e0();
            let bounds_ok = dissipation
                .iter()
                .zip(&work)
                .all(|(d, w)| *d >= -tol && *d <= l.e0() + w + tol);
            FamilyRow {
                nu: *nu,
                energy,
                dissipation,
                work,
                bounds_ok,
            }
        })
        .collect();
    let column = |f: &dyn Fn(&FamilyRow) -> &Vec<f64>, i: usize| {
        rows.iter().map(|r| f(r)[i]).collect::<Vec<_>>()
    };
    let last = rows.last().expect("non-empty");
    Ok(FamilySummary {
        times: times.to_vec(),
        limit_energy: last.energy.clone(),
        limit_dissipation: last.dissipation.clone(),
        energy_trend: (0..times.len())
            .map(|i| Trend::of(&column(&|r| &r.energy, i)))
            .collect(),
        dissipation_trend: (0..times.len())
            .map(|i| Trend::of(&column(&|r| &r.dissipation, i)))
            .collect(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mode(n: usize, k1: f64, k2: f64) -> ScalarField2D {
        ScalarField2D::from_fn(n, |x, y| 2f64.sqrt() * (2.0 * PI * (k1 * x + k2 * y)).sin())
            .unwrap()
    }

    #[test]
    fn h_minus1_single_modes() {
        let f = mode(32, 5.0, 0.0);
        assert!((h_minus1_norm(&f).unwrap() - 1.0 / (10.0 * PI)).abs() < 1e-15);
        assert_eq!(
            h_minus1_norm(&ScalarField2D::zeros(16).unwrap()).unwrap(),
            0.0
        );
        let shifted = ScalarField2D::from_fn(16, |x, _| 1.0 + x.sin()).unwrap();
        assert!(matches!(
            h_minus1_norm(&shifted),
            Err(LabError::NonzeroMean { .. })
        ));
    }

    #[test]
    fn projections() {
        let f = mode(32, 5.0, 0.0);
        assert!(project_low(&f, 4.0).linf() < 1e-14);
        assert!(project_low(&f, 5.0).max_abs_difference(&f).unwrap() < 1e-14);
        let c = ScalarField2D::from_fn(16, |x, y| 0.3 + (2.0 * PI * (x + y)).cos()).unwrap();
        let p = project_low(&c, 0.0);
        assert!(p.values().iter().all(|v| (v - 0.3).abs() < 1e-14));
    }

    #[test]
    fn shells() {
        let s = shell_spectrum(&mode(32, 4.0, 0.0), None);
        assert!((s.energies[2] - 1.0).abs() < 1e-14);
        assert_eq!(s.dominant, 2);
        let two = ScalarField2D::from_fn(32, |x, _| {
            1.2 * (2.0 * PI * x).sin() + (2.0 * PI * 8.0 * x).sin()
        })
        .unwrap();
        let s = shell_spectrum(&two, None);
        assert!((s.energies[0] - 0.72).abs() < 1e-14);
        assert!((s.energies[3] - 0.5).abs() < 1e-14);
        assert_eq!(s.dominant, 0);
        let z = shell_spectrum(&ScalarField2D::zeros(16).unwrap(), None);
        assert_eq!(z.dominant, 0);
        assert!(z.fit.is_none());
    }

    #[test]
    fn low_mode_extremal_case() {
        let f = mode(32, 3.0, 4.0);
        let eq = low_mode_bound_check(&f, 5.0).unwrap();
        assert!((eq.lhs - eq.rhs).abs() < 1e-13 && eq.pass);
        let strict = low_mode_bound_check(&mode(32, 2.0, 0.0), 5.0).unwrap();
        assert!(strict.lhs < strict.rhs && strict.pass);
    }

    #[test]
    fn kolmogorov() {
        assert!((kolmogorov_wavenumber(0.001, 0.1).unwrap() - 1.0).abs() < 1e-12);
        assert!((kolmogorov_wavenumber(16.0, 1.0).unwrap() - 2.0).abs() < 1e-15);
        assert!(kolmogorov_wavenumber(1.0, 0.0).is_err());
    }

    fn heat_ledger(nu: f64) -> RunLedger {
        let times = [0.0, 0.5, 1.0];
        let d: Vec<f64> = times
            .iter()
            .map(|t| 1.0 - (-8.0 * PI * PI * nu * t).exp())
            .collect();
        RunLedger {
            t: times.to_vec(),
            energy: d.iter().map(|x| 1.0 - x).collect(),
            dissipation: d,
            work: vec![0.0; 3],
            ..Default::default()
        }
    }

    #[test]
    fn family_of_heat_runs() {
        let runs: Vec<(f64, RunLedger)> = [0.01, 0.005, 0.001]
            .iter()
            .map(|&nu| (nu, heat_ledger(nu)))
            .collect();
        let s = family_summary(&runs, &[1.0]).unwrap();
        assert_eq!(s.dissipation_trend, vec![Trend::Decreasing]);
        assert_eq!(s.energy_trend, vec![Trend::Increasing]);
        assert!(s.rows.iter().all(|r| r.bounds_ok));
        assert_eq!(s.limit_dissipation[0], s.rows[2].dissipation[0]);
        let one = family_summary(&runs[..1], &[1.0]).unwrap();
        assert_eq!(one.dissipation_trend, vec![Trend::InsufficientData]);
        let unsorted = vec![runs[2].clone(), runs[0].clone()];
        assert!(family_summary(&unsorted, &[1.0]).is_err());
    }

    #[test]
    fn kolmogorov_from_heat_ledger() {
        let l = heat_ledger(0.01);
        let eps = 0.5 * l.dissipation[2];
        let k = kolmogorov_from_ledger(&l, 0.01, 0.0, 1.0).unwrap();
        assert!((k - (eps / 1e-6f64).powf(0.25)).abs() < 1e-12);
    }
}
