//! Periodic scalar fields on the unit torus and their spectral state.
//!
//! Conventions (used everywhere in the crate):
//! * the grid is `N x N`, `values[i2 * N + i1]` samples `x = (i1/N, i2/N)`;
//! * wavenumbers count cycles per unit length, `k_i ∈ [-N/2, N/2)`;
//! * coefficients are `θ̂_k = N⁻² Σ_x θ(x) e^{-2πi k·x}`, so
//!   `‖θ‖²_{L²} = mean(θ²) = Σ_k |θ̂_k|²` and `‖∇θ‖² = Σ 4π²|k|² |θ̂_k|²`.
//!
//! [`Spectrum`] is the mutable working state of the solver. Its per-line
//! translations are orthogonal maps of the real grid data, so L² is
//! conserved and opposite translations cancel exactly. Energy reaching
//! the Nyquist lines (`k_1 = -N/2` or `k_2 = -N/2`) marks under-resolution
//! and is reported by [`Spectrum::nyquist_energy`].

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{LabError, Result};

pub type C64 = Complex<f64>;

/// Smallest supported grid.
pub const MIN_GRID: usize = 8;

/// Signed wavenumber of FFT index `j` on an `n`-point grid.
#[inline]
pub fn wavenumber(j: usize, n: usize) -> i64 {
    if j < n / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

pub fn check_grid(n: usize) -> Result<()> {
    if n < MIN_GRID || !n.is_power_of_two() {
        return Err(LabError::GridUnsupported { n, min: MIN_GRID });
    }
    Ok(())
}

/// Forward and inverse line transforms for one grid size.
pub struct LinePlan {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl LinePlan {
    /// Shared plan for grid size `n`.
    pub fn get(n: usize) -> Arc<LinePlan> {
        static PLANS: OnceLock<Mutex<HashMap<usize, Arc<LinePlan>>>> = OnceLock::new();
        let mut map = PLANS
            .get_or_init(|| Mutex::new(HashMap::new()))
            .lock()
            .expect("plan cache poisoned");
        map.entry(n)
            .or_insert_with(|| {
                let mut planner = FftPlanner::new();
                Arc::new(LinePlan {
                    n,
                    forward: planner.plan_fft_forward(n),
                    inverse: planner.plan_fft_inverse(n),
                })
            })
            .clone()
    }

    fn lines_per_task(&self) -> usize {
        let threads = rayon::current_num_threads().max(1);
        (self.n / (4 * threads)).max(1)
    }

    /// Forward transform of every contiguous line, scaled by `1/n`.
    pub fn forward_lines(&self, data: &mut [C64]) {
        let n = self.n;
        let scale = 1.0 / n as f64;
        data.par_chunks_mut(n * self.lines_per_task())
            .for_each(|chunk| {
                let mut scratch = vec![C64::default(); self.forward.get_inplace_scratch_len()];
                self.forward.process_with_scratch(chunk, &mut scratch);
                for c in chunk.iter_mut() {
                    *c *= scale;
                }
            });
    }

    /// Unnormalized inverse transform (synthesis) of every contiguous line.
    pub fn inverse_lines(&self, data: &mut [C64]) {
        let n = self.n;
        data.par_chunks_mut(n * self.lines_per_task())
            .for_each(|chunk| {
                let mut scratch = vec![C64::default(); self.inverse.get_inplace_scratch_len()];
                self.inverse.process_with_scratch(chunk, &mut scratch);
            });
    }

    fn forward_line(&self, line: &mut [C64], scratch: &mut [C64]) {
        self.forward.process_with_scratch(line, scratch);
        let scale = 1.0 / self.n as f64;
        for c in line.iter_mut() {
            *c *= scale;
        }
    }

    fn inverse_line(&self, line: &mut [C64], scratch: &mut [C64]) {
        self.inverse.process_with_scratch(line, scratch);
    }

    fn scratch_len(&self) -> usize {
        self.forward
            .get_inplace_scratch_len()
            .max(self.inverse.get_inplace_scratch_len())
    }
}

/// In-place transpose of a square `n x n` array.
pub fn transpose_square<T: Copy + Send>(data: &mut [T], n: usize) {
    const B: usize = 32;
    for bi in (0..n).step_by(B) {
        for bj in (bi..n).step_by(B) {
            for i in bi..(bi + B).min(n) {
                let j0 = if bi == bj { i + 1 } else { bj };
                for j in j0..(bj + B).min(n) {
                    data.swap(i * n + j, j * n + i);
                }
            }
        }
    }
}

/// Full 2D forward transform of real grid values, returned in the same
/// `[k2][k1]` layout as the values.
fn forward_2d(n: usize, values: &[f64]) -> Vec<C64> {
    let plan = LinePlan::get(n);
    let mut data: Vec<C64> = values.iter().map(|&v| C64::new(v, 0.0)).collect();
    plan.forward_lines(&mut data);
    transpose_square(&mut data, n);
    plan.forward_lines(&mut data);
    transpose_square(&mut data, n);
    data
}

/// Inverse of [`forward_2d`]; the imaginary part is discarded.
fn inverse_2d(n: usize, coeffs: &[C64]) -> Vec<f64> {
    let plan = LinePlan::get(n);
    let mut data = coeffs.to_vec();
    plan.inverse_lines(&mut data);
    transpose_square(&mut data, n);
    plan.inverse_lines(&mut data);
    transpose_square(&mut data, n);
    data.into_iter().map(|c| c.re).collect()
}

/// Real scalar on the `N x N` periodic grid of the unit torus.
#[derive(Clone, Debug)]
pub struct ScalarField2D {
    n: usize,
    values: Vec<f64>,
    coeffs: OnceLock<Vec<C64>>,
}

impl PartialEq for ScalarField2D {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.values == other.values
    }
}

impl ScalarField2D {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        check_grid(n)?;
        if values.len() != n * n {
            return Err(LabError::InvalidParameter {
                name: "values",
                reason: format!("expected {} samples, got {}", n * n, values.len()),
            });
        }
        Ok(ScalarField2D {
            n,
            values,
            coeffs: OnceLock::new(),
        })
    }

    pub fn zeros(n: usize) -> Result<Self> {
        Self::new(n, vec![0.0; n * n])
    }

    /// Samples `f(x1, x2)` on the grid.
    pub fn from_fn<F: Fn(f64, f64) -> f64>(n: usize, f: F) -> Result<Self> {
        check_grid(n)?;
        let h = 1.0 / n as f64;
        let values = (0..n * n)
            .map(|idx| {
                let (i2, i1) = (idx / n, idx % n);
                f(i1 as f64 * h, i2 as f64 * h)
            })
            .collect();
        Self::new(n, values)
    }

    /// Builds a field from coefficients in `[k2][k1]` layout.
    pub fn from_coefficients(n: usize, coeffs: Vec<C64>) -> Result<Self> {
        check_grid(n)?;
        if coeffs.len() != n * n {
            return Err(LabError::GridMismatch {
                expected: n * n,
                found: coeffs.len(),
            });
        }
        let values = inverse_2d(n, &coeffs);
        let field = ScalarField2D {
            n,
            values,
            coeffs: OnceLock::new(),
        };
        let _ = field.coeffs.set(coeffs);
        Ok(field)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, i1: usize, i2: usize) -> f64 {
        self.values[i2 * self.n + i1]
    }

    /// Spectral coefficients in `[k2][k1]` layout (computed once, cached).
    pub fn coefficients(&self) -> &[C64] {
        self.coeffs.get_or_init(|| forward_2d(self.n, &self.values))
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// `‖θ‖²_{L²}` per unit area.
    pub fn energy(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>() / self.values.len() as f64
    }

    pub fn l2_norm(&self) -> f64 {
        self.energy().sqrt()
    }

    pub fn linf(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// `‖∇θ‖²_{L²}`.
    pub fn grad_energy(&self) -> f64 {
        let n = self.n;
        self.coefficients()
            .iter()
            .enumerate()
            .map(|(idx, c)| {
                let (k2, k1) = (wavenumber(idx / n, n), wavenumber(idx % n, n));
                4.0 * PI * PI * ((k1 * k1 + k2 * k2) as f64) * c.norm_sqr()
            })
            .sum()
    }

    /// `sup_x |∇θ(x)|` of the trigonometric interpolant, evaluated on the grid.
    pub fn grad_linf(&self) -> f64 {
        let n = self.n;
        let c = self.coefficients();
        let mut d1 = vec![C64::default(); n * n];
        let mut d2 = vec![C64::default(); n * n];
        for (idx, coef) in c.iter().enumerate() {
            let (j2, j1) = (idx / n, idx % n);
            // the Nyquist mode has no consistent real derivative
            if j1 == n / 2 || j2 == n / 2 {
                continue;
            }
            let (k2, k1) = (wavenumber(j2, n), wavenumber(j1, n));
            let i2pi = C64::new(0.0, 2.0 * PI);
            d1[idx] = coef * i2pi * k1 as f64;
            d2[idx] = coef * i2pi * k2 as f64;
        }
        let g1 = inverse_2d(n, &d1);
        let g2 = inverse_2d(n, &d2);
        g1.iter()
            .zip(g2.iter())
            .fold(0.0f64, |m, (a, b)| m.max((a * a + b * b).sqrt()))
    }

    /// `‖self − other‖_{L²}`.
    pub fn l2_distance(&self, other: &ScalarField2D) -> Result<f64> {
        if self.n != other.n {
            return Err(LabError::GridMismatch {
                expected: self.n,
                found: other.n,
            });
        }
        let s: f64 = self
            .values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        Ok((s / self.values.len() as f64).sqrt())
    }

    pub fn max_abs_difference(&self, other: &ScalarField2D) -> Result<f64> {
        if self.n != other.n {
            return Err(LabError::GridMismatch {
                expected: self.n,
                found: other.n,
            });
        }
        Ok(self
            .values
            .iter()
            .zip(other.values.iter())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
    }

    /// Applies a real multiplier `m(k1, k2)` to every coefficient.
    pub fn map_spectrum<F: Fn(i64, i64) -> f64>(&self, m: F) -> ScalarField2D {
        let n = self.n;
        let coeffs = self
            .coefficients()
            .iter()
            .enumerate()
            .map(|(idx, c)| c * m(wavenumber(idx % n, n), wavenumber(idx / n, n)))
            .collect();
        ScalarField2D::from_coefficients(n, coeffs).expect("grid already validated")
    }
}

/// Which index of the stored array runs contiguously.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Layout {
    /// `data[k2][k1]`: lines run over `k1` (ready for translations along x₂).
    K2Major,
    /// `data[k1][k2]`: lines run over `k2` (ready for translations along x₁).
    K1Major,
}

/// Translation direction of a per-line phase shift.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TranslateAlong {
    /// Rows move along x₁ by `d(x₂)`.
    X1,
    /// Columns move along x₂ by `d(x₁)`.
    X2,
}

const PHASE_SPLIT: usize = 32;

/// Mutable spectral working state used by the solver.
#[derive(Clone)]
pub struct Spectrum {
    n: usize,
    data: Vec<C64>,
    layout: Layout,
}

impl Spectrum {
    pub fn from_field(field: &ScalarField2D) -> Self {
        Spectrum {
            n: field.n(),
            data: field.coefficients().to_vec(),
            layout: Layout::K2Major,
        }
    }

    /// Energy on the two Nyquist lines `k₁ = N/2` or `k₂ = N/2`; nonzero
    /// only when the state is under-resolved.
    pub fn nyquist_energy(&self) -> f64 {
        let n = self.n;
        let h = n / 2;
        let mut e = 0.0;
        for a in 0..n {
            e += self.data[a * n + h].norm_sqr();
            if a != h {
                e += self.data[h * n + a].norm_sqr();
            }
        }
        e
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn ensure(&mut self, layout: Layout) {
        if self.layout != layout {
            transpose_square(&mut self.data, self.n);
            self.layout = layout;
        }
    }

    /// Coefficients in the canonical `[k2][k1]` layout.
    pub fn coefficients(&self) -> Vec<C64> {
        let mut out = self.data.clone();
        if self.layout == Layout::K1Major {
            transpose_square(&mut out, self.n);
        }
        out
    }

    pub fn to_field(&self) -> ScalarField2D {
        ScalarField2D::from_coefficients(self.n, self.coefficients())
            .expect("grid validated at construction")
    }

    /// Iterates `(|k|², |θ̂_k|²)`; layout-independent because every
    /// consumer only depends on `|k|`.
    fn modes(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        let n = self.n;
        self.data.iter().enumerate().map(move |(idx, c)| {
            let (a, b) = (wavenumber(idx / n, n), wavenumber(idx % n, n));
            (a * a + b * b, c.norm_sqr())
        })
    }

    pub fn mean(&self) -> f64 {
        self.data[0].re
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn grad_energy(&self) -> f64 {
        4.0 * PI * PI * self.modes().map(|(k2, e)| k2 as f64 * e).sum::<f64>()
    }

    /// `‖θ‖²_{Ḣ^{-1}}` over the nonzero modes.
    pub fn h_minus1_sq(&self) -> f64 {
        self.modes()
            .filter(|&(k2, _)| k2 > 0)
            .map(|(k2, e)| e / (4.0 * PI * PI * k2 as f64))
            .sum()
    }

    /// Sharp dyadic shell energies `s_q`, `q = 0..=q_max`
    /// (shell 0 is `0 < |k| ≤ 1`, shell q is `2^{q-1} < |k| ≤ 2^q`).
    pub fn shell_energies(&self, q_max: usize) -> Vec<f64> {
        let mut shells = vec![0.0; q_max + 1];
        for (k2, e) in self.modes() {
            if k2 == 0 {
                continue;
            }
            let q = shell_index(k2 as u64);
            if q <= q_max {
                shells[q] += e;
            }
        }
        shells
    }

    /// Exact heat multiplier `exp(-4π² ν |k|² dt)`; returns the energy it
    /// removes, `Σ |θ̂_k|² (1 - exp(-8π² ν |k|² dt))`.
    pub fn heat(&mut self, nu: f64, dt: f64) -> f64 {
        if nu == 0.0 || dt == 0.0 {
            return 0.0;
        }
        let n = self.n;
        let rate = 4.0 * PI * PI * nu * dt;
        // separable factors: m = a(k_a) a(k_b); 1 - m² = (1 - a²) + a²(1 - b²)
        let factor: Vec<f64> = (0..n)
            .map(|j| {
                let k = wavenumber(j, n) as f64;
                (-rate * k * k).exp()
            })
            .collect();
        let loss: Vec<f64> = (0..n)
            .map(|j| {
                let k = wavenumber(j, n) as f64;
                -(-2.0 * rate * k * k).exp_m1()
            })
            .collect();
        self.data
            .par_chunks_mut(n)
            .enumerate()
            .map(|(a, line)| {
                let (fa, la) = (factor[a], loss[a]);
                let fa2 = fa * fa;
                let mut removed = 0.0;
                for (b, c) in line.iter_mut().enumerate() {
                    let e = c.norm_sqr();
                    removed += e * (la + fa2 * loss[b]);
                    *c *= fa * factor[b];
                }
                removed
            })
            // fixed reduction order regardless of scheduling
            .collect::<Vec<f64>>()
            .iter()
            .sum()
    }

    /// Exact translation of every line by `d(x_j)`, `x_j = j/N`, along the
    /// given axis.
    ///
    /// Modes `0 < |k| < N/2` along the translation are phase shifted; the
    /// Nyquist mode has no real shift and is left in place, so the map is
    /// orthogonal on real fields and `d` followed by `−d` is the identity.
    pub fn translate(&mut self, along: TranslateAlong, displacement: &[f64]) {
        let n = self.n;
        assert_eq!(displacement.len(), n, "displacement profile length");
        if displacement.iter().all(|&d| d == 0.0) {
            return;
        }
        self.ensure(match along {
            TranslateAlong::X1 => Layout::K1Major,
            TranslateAlong::X2 => Layout::K2Major,
        });
        let half = n / 2;
        let plan = LinePlan::get(n);

        // phase(k, j) = low[k % S][j] * high[k / S][j], S = PHASE_SPLIT
        let highs = (half - 1) / PHASE_SPLIT + 1;
        let cis = |turns: f64| {
            let (s, c) = (-2.0 * PI * turns).sin_cos();
            C64::new(c, s)
        };
        let low: Vec<Vec<C64>> = (0..PHASE_SPLIT)
            .map(|r| displacement.iter().map(|&d| cis(r as f64 * d)).collect())
            .collect();
        let high: Vec<Vec<C64>> = (0..highs)
            .map(|q| {
                displacement
                    .iter()
                    .map(|&d| cis((q * PHASE_SPLIT) as f64 * d))
                    .collect()
            })
            .collect();

        // positive lines 1..N/2-1 are transformed, negative ones mirrored
        let (pos, _) = self.data.split_at_mut(half * n);
        pos[n..]
            .par_chunks_mut(n)
            .enumerate()
            .for_each(|(i, line)| {
                let k = i + 1;
                let mut scratch = vec![C64::default(); plan.scratch_len()];
                plan.inverse_line(line, &mut scratch);
                let (lo, hi) = (&low[k % PHASE_SPLIT], &high[k / PHASE_SPLIT]);
                for ((c, l), h) in line.iter_mut().zip(lo.iter()).zip(hi.iter()) {
                    *c *= l * h;
                }
                plan.forward_line(line, &mut scratch);
            });

        // c(-k_a, -k_b) = conj c(k_a, k_b)
        let (pos, neg) = self.data.split_at_mut((half + 1) * n);
        neg.par_chunks_mut(n).enumerate().for_each(|(i, line)| {
            let a = half + 1 + i;
            let src = &pos[(n - a) * n..(n - a + 1) * n];
            for (b, c) in line.iter_mut().enumerate() {
                *c = src[(n - b) % n].conj();
            }
        });
    }

    /// `‖a − b‖²` between two states on the same grid.
    pub fn distance_sq(&self, other: &Spectrum) -> f64 {
        assert_eq!(self.n, other.n, "grid sizes differ");
        if self.layout == other.layout {
            self.data
                .iter()
                .zip(other.data.iter())
                .map(|(a, b)| (a - b).norm_sqr())
                .sum()
        } else {
            self.coefficients()
                .iter()
                .zip(other.coefficients().iter())
                .map(|(a, b)| (a - b).norm_sqr())
                .sum()
        }
    }
}

/// Dyadic shell of a nonzero squared wavenumber.
pub fn shell_index(k_sq: u64) -> usize {
    let mut q = 0usize;
    let mut bound = 1u64; // 4^q
    while k_sq > bound {
        q += 1;
        bound *= 4;
    }
    q
}

/// Number of shells needed to cover every mode of an `n`-point grid.
pub fn shell_count(n: usize) -> usize {
    let h = (n / 2) as u64;
    shell_index(2 * h * h) + 1
}
