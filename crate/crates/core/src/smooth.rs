//! Smooth step built from the integral of the standard bump
//! `exp(-1/(s(1-s)))`, plus the quadrature helpers used throughout.
//!
//! `step(s)` rises from 0 to 1 on `[0, 1]` with every derivative vanishing
//! at both endpoints, so shear envelopes and time warps built from it glue
//! together in C-infinity.

use std::sync::OnceLock;

const TABLE_CELLS: usize = 4096;

// 8-point Gauss-Legendre on [-1, 1].
const GL_NODES: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_26,
    0.222_381_034_453_374_47,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_47,
    0.101_228_536_290_376_26,
];

/// Unnormalized bump `exp(-1/(s(1-s)))` on `(0, 1)`, zero elsewhere.
#[inline]
pub fn bump(s: f64) -> f64 {
    if s <= 0.0 || s >= 1.0 {
        0.0
    } else {
        (-1.0 / (s * (1.0 - s))).exp()
    }
}

/// Derivative of [`bump`].
#[inline]
pub fn bump_prime(s: f64) -> f64 {
    if s <= 0.0 || s >= 1.0 {
        0.0
    } else {
        let b = bump(s);
        if b == 0.0 {
            return 0.0;
        }
        let q = s * (1.0 - s);
        b * (1.0 - 2.0 * s) / (q * q)
    }
}

/// Fixed 8-point Gauss-Legendre rule on `[a, b]`.
pub fn gauss_legendre<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    GL_NODES
        .iter()
        .zip(GL_WEIGHTS.iter())
        .map(|(x, w)| w * f(mid + half * x))
        .sum::<f64>()
        * half
}

/// Adaptive Gauss-Legendre quadrature: bisects until the one-panel and
/// two-panel estimates agree to `tol` (absolute).
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let mid = 0.5 * (a + b);
        let left = gauss_legendre(f, a, mid);
        let right = gauss_legendre(f, mid, b);
        if depth == 0 || (left + right - whole).abs() <= tol {
            left + right
        } else {
            rec(f, a, mid, left, 0.5 * tol, depth - 1) + rec(f, mid, b, right, 0.5 * tol, depth - 1)
        }
    }
    if a == b {
        return 0.0;
    }
    let whole = gauss_legendre(f, a, b);
    rec(f, a, b, whole, tol, 40)
}

struct StepTable {
    norm: f64,
    // cumulative[i] = step(i / TABLE_CELLS)
    cumulative: Vec<f64>,
}

fn table() -> &'static StepTable {
    static TABLE: OnceLock<StepTable> = OnceLock::new();
    TABLE.get_or_init(|| {
        let h = 1.0 / TABLE_CELLS as f64;
        let mut cumulative = Vec::with_capacity(TABLE_CELLS + 1);
        cumulative.push(0.0);
        let mut acc = 0.0;
        for i in 0..TABLE_CELLS {
            let a = i as f64 * h;
            acc += gauss_legendre(bump, a, a + h);
            cumulative.push(acc);
        }
        let norm = acc;
        for c in cumulative.iter_mut() {
            *c /= norm;
        }
        StepTable { norm, cumulative }
    })
}

/// `∫_0^1 bump`.
pub fn bump_integral() -> f64 {
    table().norm
}

/// Normalized smooth step `S(s) = ∫_0^s bump / ∫_0^1 bump`, clamped to
/// 0 below 0 and 1 above 1.
pub fn step(s: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    if s >= 1.0 {
        return 1.0;
    }
    let t = table();
    // integrate from the nearest table node, using antisymmetry around 1/2
    // so both halves carry the same relative accuracy.
    if s > 0.5 {
        return 1.0 - step(1.0 - s);
    }
    let pos = s * TABLE_CELLS as f64;
    let i = pos.floor() as usize;
    let node = i as f64 / TABLE_CELLS as f64;
    t.cumulative[i] + gauss_legendre(bump, node, s) / t.norm
}

/// `S'(s)`.
#[inline]
pub fn step_prime(s: f64) -> f64 {
    bump(s) / bump_integral()
}

/// `S''(s)`.
#[inline]
pub fn step_second(s: f64) -> f64 {
    bump_prime(s) / bump_integral()
}

/// Smooth ramp from 0 at `a` to 1 at `b` (`a < b`).
#[inline]
pub fn ramp(t: f64, a: f64, b: f64) -> f64 {
    step((t - a) / (b - a))
}

/// Derivative of [`ramp`] in `t`.
#[inline]
pub fn ramp_prime(t: f64, a: f64, b: f64) -> f64 {
    step_prime((t - a) / (b - a)) / (b - a)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_endpoints_and_symmetry() {
        assert_eq!(step(0.0), 0.0);
        assert_eq!(step(1.0), 1.0);
        assert!((step(0.5) - 0.5).abs() < 1e-15);
        for &s in &[0.1, 0.23, 0.377, 0.49] {
            assert!((step(s) + step(1.0 - s) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn step_matches_adaptive_quadrature() {
        let z = integrate(&bump, 0.0, 1.0, 1e-16);
        assert!((z - bump_integral()).abs() < 1e-15);
        for &s in &[0.05, 0.2, 0.3141, 0.5, 0.77, 0.999] {
            let direct = integrate(&bump, 0.0, s, 1e-16) / z;
            assert!((direct - step(s)).abs() < 1e-13, "s={s}");
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let h = 1e-5;
        for &s in &[0.2, 0.4, 0.5, 0.65, 0.9] {
            let fd = (step(s + h) - step(s - h)) / (2.0 * h);
            assert!((fd - step_prime(s)).abs() < 1e-8, "s={s}");
            let fd2 = (step_prime(s + h) - step_prime(s - h)) / (2.0 * h);
            assert!((fd2 - step_second(s)).abs() < 1e-6, "s={s}");
        }
    }

    #[test]
    fn flat_at_endpoints() {
        assert_eq!(step_prime(0.0), 0.0);
        assert_eq!(step_prime(1.0), 0.0);
        assert!(step_prime(1e-3) < 1e-300);
    }
}
