//! Exact expectation of the error along singular directions.
//!
//! For a consistent system and the smoothed-momentum iteration, the
//! expected signed error along right singular direction `v_l` obeys a
//! closed 2x2 linear recurrence: with `eta = sigma_l^2 / ||A||_F^2`,
//!
//! ```text
//! E<x_{k+1} - x, v_l> = [r  zeta] B^k [1, -1/(1-beta)]^T e0
//! r = 1 - eta + M (1 - beta),  zeta = M (1 - beta)^2
//! B = [[r, zeta], [-1, beta]]
//! ```
//!
//! where `e0 = <x_0 - x, v_l>`. Everything in this module is a view of
//! that recurrence: eigenvalues of `B` and the regime they imply, the
//! smoothing factor minimizing the spectral radius, the closed form at the
//! critically damped point, the oscillation parameters in the complex
//! regime, and long trajectories evaluated in a scaled representation so
//! geometric decay never flushes to zero.
//!
//! Indexing: trajectory entry `k` is the expectation after `k + 1` steps.
//! [`kaczmarz_expectation`] has no such shift; it is the plain one-step
//! geometric decay `(1 - eta)^k e0`.

use num_complex::Complex64;
use serde_json::{json, Value};
use thiserror::Error;

use crate::linalg::{eig2, mat2_apply, mat2_power_apply, Mat2, Vec2};
use crate::solvers::MomentumParams;

#[derive(Debug, Error, PartialEq)]
pub enum TheoryError {
    #[error("eta must lie in (0, 1], got {0}")]
    InvalidEta(f64),
    #[error("oscillation parameters exist only in the ComplexPair regime, got {0:?}")]
    NotOscillatory(Regime),
    #[error("initial directional error must be nonzero and finite, got {0}")]
    BadInitialError(f64),
}

/// Eigenvalue structure of the companion matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    /// Two real eigenvalues; decay is a mix of two geometric rates.
    RealDistinct,
    /// Repeated real eigenvalue (defective); geometric decay with a
    /// polynomial factor.
    RealRepeated,
    /// Conjugate pair; geometric decay with oscillation and sign flips.
    ComplexPair,
}

impl Regime {
    pub fn name(&self) -> &'static str {
        match self {
            Self::RealDistinct => "RealDistinct",
            Self::RealRepeated => "RealRepeated",
            Self::ComplexPair => "ComplexPair",
        }
    }
}

/// Companion recurrence for one singular direction and one parameter pair.
#[derive(Clone, Copy, Debug)]
pub struct CompanionAnalysis {
    pub eta: f64,
    pub mass: f64,
    pub beta: f64,
    pub r: f64,
    pub zeta: f64,
    pub b_matrix: Mat2,
    pub lambda1: Complex64,
    pub lambda2: Complex64,
    pub discriminant: f64,
    /// Smoothing factor where the discriminant's larger zero sits:
    /// `1 - eta / (1 - sqrt(M))^2`. Negative infinity at `M = 1`.
    pub beta0: f64,
    /// The smaller zero: `1 - eta / (1 + sqrt(M))^2`.
    pub beta1: f64,
    pub regime: Regime,
}

/// Relative tolerance deciding when the discriminant counts as zero:
/// `|D| <= 1e-12 * max(1, (r - beta)^2)`.
const REGIME_TOL: f64 = 1e-12;

/// Builds the companion recurrence for decay rate `eta` and momentum
/// parameters `params`.
pub fn analyze(eta: f64, params: &MomentumParams) -> Result<CompanionAnalysis, TheoryError> {
    if !eta.is_finite() || eta <= 0.0 || eta > 1.0 {
        return Err(TheoryError::InvalidEta(eta));
    }
    let mass = params.mass();
    let beta = params.beta();
    let one_minus_beta = 1.0 - beta;
    let r = 1.0 - eta + mass * one_minus_beta;
    let zeta = mass * one_minus_beta * one_minus_beta;
    let b_matrix: Mat2 = [[r, zeta], [-1.0, beta]];
    let eig = eig2(&b_matrix);
    // eig2's discriminant form (a - d)^2 + 4 b c is exactly
    // (r - beta)^2 - 4 zeta here, with no cancellation through the trace.
    let discriminant = eig.discriminant;
    let diff = r - beta;
    let regime = if discriminant.abs() <= REGIME_TOL * 1.0f64.max(diff * diff) {
        Regime::RealRepeated
    } else if discriminant > 0.0 {
        Regime::RealDistinct
    } else {
        Regime::ComplexPair
    };
    let sqrt_mass = mass.sqrt();
    let beta0 = 1.0 - eta / ((1.0 - sqrt_mass) * (1.0 - sqrt_mass));
    let beta1 = 1.0 - eta / ((1.0 + sqrt_mass) * (1.0 + sqrt_mass));
    Ok(CompanionAnalysis {
        eta,
        mass,
        beta,
        r,
        zeta,
        b_matrix,
        lambda1: eig.lambda1,
        lambda2: eig.lambda2,
        discriminant,
        beta0,
        beta1,
        regime,
    })
}

impl CompanionAnalysis {
    /// Initial state of the recurrence scaled to `e0 = 1`.
    fn seed_vector(&self) -> Vec2 {
        [1.0, -1.0 / (1.0 - self.beta)]
    }

    /// JSON view with the eigenvalues split into real and imaginary parts.
    /// Non-finite boundary values (`beta0` at `M = 1`) map to null.
    pub fn to_json(&self) -> Value {
        json!({
            "eta": self.eta,
            "mass": self.mass,
            "beta": self.beta,
            "r": self.r,
            "zeta": self.zeta,
            "lambda1": { "re": self.lambda1.re, "im": self.lambda1.im },
            "lambda2": { "re": self.lambda2.re, "im": self.lambda2.im },
            "discriminant": self.discriminant,
            "beta0": self.beta0,
            "beta1": self.beta1,
            "regime": self.regime.name(),
        })
    }
}

/// `E<x_{k+1} - x, v_l>` by `k` sequential applications of the companion
/// matrix. Exact in the defective case, where no eigendecomposition
/// shortcut exists.
pub fn expected_signed_error(analysis: &CompanionAnalysis, e0: f64, k: usize) -> f64 {
    let w = mat2_power_apply(&analysis.b_matrix, &analysis.seed_vector(), k);
    (analysis.r * w[0] + analysis.zeta * w[1]) * e0
}

/// Plain Kaczmarz expectation `(1 - eta)^k e0` (no index shift).
pub fn kaczmarz_expectation(eta: f64, e0: f64, k: usize) -> f64 {
    (1.0 - eta).powi(k as i32) * e0
}

/// Worst-case mean squared error bound `(1 - eta_min)^k * ||x0 - x||^2`
/// for plain Kaczmarz with squared-norm sampling.
pub fn sv_rate_bound(eta_min: f64, initial_l2_sq: f64, k: usize) -> f64 {
    (1.0 - eta_min).powi(k as i32) * initial_l2_sq
}

/// Smoothing factor minimizing the spectral radius of the companion
/// matrix over `beta` in `[0, 1)`, piecewise in the mass:
/// critically damped (`beta0`) while the mass is small, zero in the middle
/// band, and the lower discriminant zero (`beta1`) once the mass crowds 1.
pub fn optimal_beta(eta: f64, mass: f64) -> f64 {
    assert!(eta > 0.0 && eta <= 1.0, "eta must lie in (0, 1]");
    assert!((0.0..=1.0).contains(&mass), "mass must lie in [0, 1]");
    let sqrt_eta = eta.sqrt();
    let first_edge = (1.0 - sqrt_eta) * (1.0 - sqrt_eta);
    let sqrt_mass = mass.sqrt();
    if mass <= first_edge {
        1.0 - eta / ((1.0 - sqrt_mass) * (1.0 - sqrt_mass))
    } else if mass < 1.0 - eta {
        0.0
    } else {
        1.0 - eta / ((1.0 + sqrt_mass) * (1.0 + sqrt_mass))
    }
}

/// Closed form at the critically damped point `beta = beta0`:
/// `(1 - eta/(1 - sqrt(M)))^k * (1 + eta (sqrt(M)(k+1) - 1)/(1 - sqrt(M))) * e0`.
///
/// Requires `mass < 1`; meaningful when `eta <= (1 - sqrt(M))^2` so the
/// critically damped point exists at a nonnegative smoothing factor.
pub fn closed_form_repeated(eta: f64, mass: f64, e0: f64, k: usize) -> f64 {
    closed_form_repeated_scaled(eta, mass, e0, k).to_f64()
}

/// Scaled-arithmetic version of [`closed_form_repeated`] that stays
/// meaningful far below the smallest positive float.
pub fn closed_form_repeated_scaled(eta: f64, mass: f64, e0: f64, k: usize) -> ScaledReal {
    assert!(eta > 0.0 && eta <= 1.0, "eta must lie in (0, 1]");
    assert!((0.0..1.0).contains(&mass), "mass must lie in [0, 1)");
    let sqrt_mass = mass.sqrt();
    let base = 1.0 - eta / (1.0 - sqrt_mass);
    let bracket = 1.0 + eta * (sqrt_mass * (k as f64 + 1.0) - 1.0) / (1.0 - sqrt_mass);
    ScaledReal::from_f64(base).powi(k as u64) * ScaledReal::from_f64(bracket * e0)
}

/// A real number as `mantissa * 2^exp2` with `|mantissa|` in `[1, 2)` (or
/// zero), so quantities like `0.999^10_000_000` keep their magnitude and
/// sign instead of flushing to zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaledReal {
    mantissa: f64,
    exp2: i64,
}

impl ScaledReal {
    pub const ZERO: Self = Self { mantissa: 0.0, exp2: 0 };

    pub fn from_f64(value: f64) -> Self {
        assert!(value.is_finite(), "scaled representation needs finite input");
        if value == 0.0 {
            return Self::ZERO;
        }
        let (mantissa, exp2) = split_f64(value);
        Self { mantissa, exp2 }
    }

    pub fn is_zero(&self) -> bool {
        self.mantissa == 0.0
    }

    pub fn mantissa(&self) -> f64 {
        self.mantissa
    }

    pub fn exp2(&self) -> i64 {
        self.exp2
    }

    pub fn signum(&self) -> f64 {
        if self.mantissa == 0.0 {
            0.0
        } else {
            self.mantissa.signum()
        }
    }

    /// Conversion to plain f64; gradually underflows to zero or saturates
    /// to infinity outside the representable range.
    pub fn to_f64(&self) -> f64 {
        if self.mantissa == 0.0 {
            return 0.0;
        }
        if self.exp2 > 1100 {
            return f64::INFINITY * self.mantissa.signum();
        }
        if self.exp2 < -1130 {
            return 0.0 * self.mantissa.signum();
        }
        // Two-step rescale keeps each factor a representable power of two.
        let half = self.exp2 / 2;
        let rest = self.exp2 - half;
        self.mantissa * pow2(half) * pow2(rest)
    }

    pub fn log10_abs(&self) -> Option<f64> {
        if self.mantissa == 0.0 {
            None
        } else {
            Some(self.mantissa.abs().log10() + self.exp2 as f64 * std::f64::consts::LOG10_2)
        }
    }

    /// Binary exponentiation; rounding grows only with `log2(k)`.
    pub fn powi(self, mut k: u64) -> Self {
        let mut result = Self::from_f64(1.0);
        let mut base = self;
        while k > 0 {
            if k & 1 == 1 {
                result = result * base;
            }
            base = base * base;
            k >>= 1;
        }
        result
    }

    /// `self / other` as a plain float, for relative comparisons of two
    /// scaled values of similar magnitude.
    pub fn ratio(self, other: Self) -> f64 {
        if other.is_zero() {
            return if self.is_zero() { 1.0 } else { f64::INFINITY };
        }
        if self.is_zero() {
            return 0.0;
        }
        let diff = (self.exp2 - other.exp2).clamp(-1022, 1022);
        (self.mantissa / other.mantissa) * pow2(diff)
    }
}

impl std::ops::Mul for ScaledReal {
    type Output = Self;

    fn mul(self, other: Self) -> Self {
        if self.is_zero() || other.is_zero() {
            return Self::ZERO;
        }
        let raw = self.mantissa * other.mantissa;
        let (mantissa, extra) = split_f64(raw);
        Self { mantissa, exp2: self.exp2 + other.exp2 + extra }
    }
}

/// Relative difference `|a/b - 1|`, safe across the whole scaled range.
pub fn relative_diff(a: ScaledReal, b: ScaledReal) -> f64 {
    if b.is_zero() {
        return if a.is_zero() { 0.0 } else { f64::INFINITY };
    }
    (a.ratio(b) - 1.0).abs()
}

/// Exact decomposition `value = mantissa * 2^exp2`, `|mantissa|` in `[1, 2)`.
fn split_f64(value: f64) -> (f64, i64) {
    debug_assert!(value.is_finite() && value != 0.0);
    let bits = value.to_bits();
    let raw_exp = ((bits >> 52) & 0x7FF) as i64;
    if raw_exp == 0 {
        // Subnormal: scale into the normal range first.
        let scaled = value * pow2(200);
        let (m, e) = split_f64(scaled);
        return (m, e - 200);
    }
    let exp2 = raw_exp - 1023;
    let mantissa = f64::from_bits((bits & !(0x7FFu64 << 52)) | (1023u64 << 52));
    (mantissa, exp2)
}

/// `2^e` for |e| <= 1022, always exact.
fn pow2(e: i64) -> f64 {
    debug_assert!((-1022..=1023).contains(&e));
    f64::from_bits(((e + 1023) as u64) << 52)
}

/// Expectation series `E<x_{k+1} - x, v_l>` for `k = 0..=k_max`, evaluated
/// in scaled arithmetic.
///
/// Renormalization multiplies by exact powers of two only, so every entry
/// that fits in an f64 is bit-identical to [`expected_signed_error`].
#[derive(Clone, Debug)]
pub struct TheoryTrajectory {
    entries: Vec<ScaledReal>,
}

pub fn expected_error_trajectory(
    analysis: &CompanionAnalysis,
    e0: f64,
    k_max: usize,
) -> TheoryTrajectory {
    let b = analysis.b_matrix;
    let mut w = analysis.seed_vector();
    let mut exp2: i64 = 0;
    let mut entries = Vec::with_capacity(k_max + 1);
    for _ in 0..=k_max {
        let value = (analysis.r * w[0] + analysis.zeta * w[1]) * e0;
        let entry = if value == 0.0 {
            ScaledReal::ZERO
        } else {
            let (m, e) = split_f64(value);
            ScaledReal { mantissa: m, exp2: e + exp2 }
        };
        entries.push(entry);
        w = mat2_apply(&b, &w);
        // Keep the working vector around magnitude one; shifting by a power
        // of two is exact and cannot change subsequent rounding.
        let mag = w[0].abs().max(w[1].abs());
        if mag != 0.0 && !(0.5..2.0).contains(&mag) {
            let (_, e) = split_f64(mag);
            let scale = pow2((-e).clamp(-1022, 1023));
            w[0] *= scale;
            w[1] *= scale;
            exp2 += e;
        }
    }
    TheoryTrajectory { entries }
}

impl TheoryTrajectory {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, k: usize) -> ScaledReal {
        self.entries[k]
    }

    /// Plain float view; entries beyond float range underflow to zero.
    pub fn value(&self, k: usize) -> f64 {
        self.entries[k].to_f64()
    }

    pub fn values_f64(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.to_f64()).collect()
    }

    /// Signs of the entries, zero entries reported as 0.
    pub fn signs(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.signum()).collect()
    }

    /// `log10 |entry|`, `None` for exact zeros; finite even when the value
    /// underflows f64.
    pub fn log10_abs(&self, k: usize) -> Option<f64> {
        self.entries[k].log10_abs()
    }
}

/// Trigonometric description of the complex regime:
/// `E<x_{k+1} - x, v_l> = C rho^k cos(k theta + theta0)`.
#[derive(Clone, Copy, Debug)]
pub struct Oscillation {
    /// Positive amplitude.
    pub amplitude: f64,
    /// Modulus of the eigenvalue pair.
    pub rho: f64,
    /// Rotation per step, in `(0, pi)`.
    pub theta: f64,
    /// Phase in `[0, 2 pi)`; the normalization that keeps `amplitude > 0`.
    pub phase: f64,
}

impl Oscillation {
    pub fn value(&self, k: usize) -> f64 {
        self.amplitude * self.rho.powi(k as i32) * (k as f64 * self.theta + self.phase).cos()
    }

    /// Expected spacing between consecutive sign flips.
    pub fn flip_spacing(&self) -> f64 {
        std::f64::consts::PI / self.theta
    }
}

/// Extracts the oscillation parameters from a ComplexPair analysis.
///
/// The eigenvector matrix of the companion is `Q = [[beta - l1, beta - l2],
/// [1, 1]]`; projecting the seed vector onto the `lambda1` eigendirection
/// gives the complex amplitude `C1`, and the real series is `2 Re(C1
/// lambda1^k)`. Scaling `e0` by `s > 0` scales the amplitude by `s` and
/// leaves `rho`, `theta`, and the phase unchanged; flipping the sign of
/// `e0` moves the phase by pi.
pub fn oscillation_params(
    analysis: &CompanionAnalysis,
    e0: f64,
) -> Result<Oscillation, TheoryError> {
    if analysis.regime != Regime::ComplexPair {
        return Err(TheoryError::NotOscillatory(analysis.regime));
    }
    if !e0.is_finite() || e0 == 0.0 {
        return Err(TheoryError::BadInitialError(e0));
    }
    let l1 = analysis.lambda1;
    let l2 = analysis.lambda2;
    let beta = Complex64::new(analysis.beta, 0.0);
    let w = analysis.seed_vector();
    // First row of Q^{-1} applied to the seed, times e0.
    let det_q = l2 - l1;
    let c1 = (Complex64::new(w[0], 0.0) - (beta - l2) * w[1]) / det_q * e0;
    // [r zeta] Q [c1, 0]^T collapses to a scalar on the first eigencolumn.
    let big_c1 = (analysis.r * (beta - l1) + analysis.zeta) * c1;
    let amplitude = 2.0 * big_c1.norm();
    let mut phase = big_c1.arg();
    if phase < 0.0 {
        phase += 2.0 * std::f64::consts::PI;
    }
    Ok(Oscillation { amplitude, rho: l1.norm(), theta: l1.arg(), phase })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Decay rate of the flat-spectrum-plus-one-small-value system used
    /// throughout the experiments: 0.0004 / 19.0004.
    const ETA_SMALL: f64 = 0.0004 / 19.0004;

    fn params(mass: f64, beta: f64) -> MomentumParams {
        MomentumParams::new(mass, beta).unwrap()
    }

    #[test]
    fn analyze_rejects_bad_eta() {
        let p = params(0.5, 0.5);
        assert!(matches!(analyze(0.0, &p), Err(TheoryError::InvalidEta(_))));
        assert!(matches!(analyze(1.5, &p), Err(TheoryError::InvalidEta(_))));
        assert!(matches!(analyze(f64::NAN, &p), Err(TheoryError::InvalidEta(_))));
        assert!(analyze(1.0, &p).is_ok());
    }

    #[test]
    fn companion_entries_match_definitions() {
        let a = analyze(0.01, &params(0.8, 0.9)).unwrap();
        assert!((a.r - (1.0 - 0.01 + 0.8 * 0.1)).abs() < 1e-15);
        assert!((a.zeta - 0.8 * 0.01).abs() < 1e-15);
        assert_eq!(a.b_matrix[1][0], -1.0);
        assert_eq!(a.b_matrix[1][1], 0.9);
        // Eigenvalue sum and product against trace and determinant.
        let sum = a.lambda1 + a.lambda2;
        let prod = a.lambda1 * a.lambda2;
        assert!((sum.re - (a.r + a.beta)).abs() < 1e-12);
        assert!(sum.im.abs() < 1e-12);
        assert!((prod.re - (a.r * a.beta + a.zeta)).abs() < 1e-12);
    }

    #[test]
    fn optimal_beta_matches_documented_value() {
        // 1 - eta/(1 - sqrt(0.9))^2 with eta = 0.0004/19.0004, evaluated at
        // 50-digit precision: 0.99200571230900185764...
        let beta0 = optimal_beta(ETA_SMALL, 0.9);
        assert!((beta0 - 0.992005712309002).abs() < 1e-14, "beta0 {beta0}");
        let a = analyze(ETA_SMALL, &params(0.9, beta0)).unwrap();
        assert_eq!(a.regime, Regime::RealRepeated);
        assert!((a.beta0 - beta0).abs() < 1e-15);
    }

    #[test]
    fn regimes_split_around_the_critical_curve() {
        // Just below the critical smoothing: two real rates.
        let real = analyze(ETA_SMALL, &params(0.9, 0.992)).unwrap();
        assert_eq!(real.regime, Regime::RealDistinct);
        assert!(real.discriminant > 0.0);
        // Heavier mass at the same smoothing: conjugate pair.
        let complex = analyze(ETA_SMALL, &params(0.95, 0.992)).unwrap();
        assert_eq!(complex.regime, Regime::ComplexPair);
        assert!(complex.discriminant < 0.0);
        assert!(complex.lambda1.im > 0.0);
        assert!((complex.lambda1.norm() - complex.lambda2.norm()).abs() < 1e-15);
    }

    #[test]
    fn first_step_loses_exactly_eta() {
        // [r zeta] [1, -1/(1-beta)]^T = 1 - eta for every parameter pair.
        for (eta, mass, beta) in
            [(0.3, 0.7, 0.2), (ETA_SMALL, 0.9, 0.992), (0.05, 0.0, 0.0), (0.9, 1.0, 0.5)]
        {
            let a = analyze(eta, &params(mass, beta)).unwrap();
            let e0 = -1.7;
            let got = expected_signed_error(&a, e0, 0);
            assert!(
                (got - (1.0 - eta) * e0).abs() < 1e-14,
                "eta {eta} mass {mass} beta {beta}: {got}"
            );
        }
    }

    #[test]
    fn zero_mass_is_plain_geometric_decay() {
        let eta = 0.037;
        let a = analyze(eta, &params(0.0, 0.6)).unwrap();
        let e0 = 2.5;
        for k in 0..2000 {
            let got = expected_signed_error(&a, e0, k);
            let want = kaczmarz_expectation(eta, e0, k + 1);
            assert!(
                (got - want).abs() <= 1e-13 * want.abs(),
                "k={k}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn optimal_beta_covers_all_three_branches() {
        let eta = 0.19;
        // Small mass: critically damped point.
        let b = optimal_beta(eta, 0.2);
        let expect = 1.0 - eta / ((1.0 - 0.2f64.sqrt()) * (1.0 - 0.2f64.sqrt()));
        assert!((b - expect).abs() < 1e-15);
        // Middle band: zero smoothing.
        assert_eq!(optimal_beta(eta, 0.5), 0.0);
        // Heavy mass: the lower discriminant zero.
        let b = optimal_beta(eta, 0.9);
        let expect = 1.0 - eta / ((1.0 + 0.9f64.sqrt()) * (1.0 + 0.9f64.sqrt()));
        assert!((b - expect).abs() < 1e-15);
    }

    #[test]
    fn optimal_beta_beats_a_coarse_grid() {
        for (eta, mass) in [(0.1, 0.05), (0.1, 0.5), (0.1, 0.95), (ETA_SMALL, 0.9)] {
            let best = optimal_beta(eta, mass);
            let radius_at = |beta: f64| {
                analyze(eta, &params(mass, beta)).unwrap().lambda1.norm()
            };
            let best_radius = radius_at(best);
            for i in 0..1000 {
                let beta = i as f64 / 1000.0;
                assert!(
                    best_radius <= radius_at(beta) + 1e-12,
                    "eta {eta} mass {mass}: beta {beta} beats optimal"
                );
            }
        }
    }

    #[test]
    fn closed_form_matches_matrix_power_at_critical_damping() {
        let eta = ETA_SMALL;
        let mass = 0.9;
        let beta0 = optimal_beta(eta, mass);
        let a = analyze(eta, &params(mass, beta0)).unwrap();
        let e0 = 0.83;
        let trajectory = expected_error_trajectory(&a, e0, 2000);
        for k in (0..=2000).step_by(97) {
            let closed = closed_form_repeated_scaled(eta, mass, e0, k);
            let diff = relative_diff(closed, trajectory.entry(k));
            assert!(diff < 1e-10, "k={k}: relative difference {diff}");
        }
    }

    #[test]
    fn trajectory_is_bit_identical_to_pointwise_evaluation() {
        let a = analyze(0.02, &params(0.85, 0.97)).unwrap();
        let e0 = -0.4;
        let t = expected_error_trajectory(&a, e0, 400);
        for k in 0..=400 {
            let direct = expected_signed_error(&a, e0, k);
            assert_eq!(t.value(k), direct, "k={k}");
        }
    }

    #[test]
    fn trajectory_survives_deep_underflow() {
        // Strong decay: plain floats are exhausted near k ~ 10^4 while the
        // scaled form keeps a finite magnitude.
        let eta = 0.5;
        let a = analyze(eta, &params(0.0, 0.0)).unwrap();
        let t = expected_error_trajectory(&a, 1.0, 5000);
        let log_end = t.log10_abs(5000).unwrap();
        // (1 - 0.5)^(5001): log10 = -5001 * log10(2).
        let expect = -(5001.0) * std::f64::consts::LOG10_2;
        assert!((log_end - expect).abs() < 1e-6, "{log_end} vs {expect}");
        assert_eq!(t.value(5000), 0.0);
        assert!(t.entry(5000).signum() > 0.0);
    }

    #[test]
    fn oscillation_matches_trajectory_within_envelope() {
        let a = analyze(ETA_SMALL, &params(0.95, 0.992)).unwrap();
        assert_eq!(a.regime, Regime::ComplexPair);
        let e0 = 1.3;
        let osc = oscillation_params(&a, e0).unwrap();
        assert!(osc.amplitude > 0.0);
        assert!(osc.theta > 0.0 && osc.theta < std::f64::consts::PI);
        assert!((0.0..2.0 * std::f64::consts::PI).contains(&osc.phase));
        let t = expected_error_trajectory(&a, e0, 2000);
        for k in 0..=2000 {
            let envelope = osc.amplitude * osc.rho.powi(k as i32);
            let diff = (osc.value(k) - t.value(k)).abs();
            assert!(diff <= 1e-9 * envelope, "k={k}: diff {diff} envelope {envelope}");
        }
    }

    #[test]
    fn oscillation_scaling_moves_only_the_amplitude() {
        let a = analyze(0.001, &params(0.9, 0.995)).unwrap();
        assert_eq!(a.regime, Regime::ComplexPair);
        let base = oscillation_params(&a, 0.7).unwrap();
        let scaled = oscillation_params(&a, 2.1).unwrap();
        assert!((scaled.amplitude / base.amplitude - 3.0).abs() < 1e-12);
        assert_eq!(scaled.rho, base.rho);
        assert_eq!(scaled.theta, base.theta);
        assert!((scaled.phase - base.phase).abs() < 1e-12);
        // Sign flip of e0 shifts the phase by pi.
        let negated = oscillation_params(&a, -0.7).unwrap();
        let delta = (negated.phase - base.phase).rem_euclid(2.0 * std::f64::consts::PI);
        assert!((delta - std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn oscillation_requires_complex_regime() {
        let a = analyze(0.1, &params(0.0, 0.0)).unwrap();
        assert!(matches!(
            oscillation_params(&a, 1.0),
            Err(TheoryError::NotOscillatory(_))
        ));
        let c = analyze(0.001, &params(0.9, 0.995)).unwrap();
        assert!(matches!(
            oscillation_params(&c, 0.0),
            Err(TheoryError::BadInitialError(_))
        ));
    }

    #[test]
    fn trajectory_sign_flips_follow_the_rotation() {
        let beta0 = optimal_beta(ETA_SMALL, 0.9);
        let a = analyze(ETA_SMALL, &params(0.9, beta0 + 0.001)).unwrap();
        assert_eq!(a.regime, Regime::ComplexPair);
        let osc = oscillation_params(&a, 1.0).unwrap();
        let spacing = osc.flip_spacing();
        let t = expected_error_trajectory(&a, 1.0, 100_000);
        let signs = t.signs();
        let mut flips = Vec::new();
        let mut prev = signs[0];
        for (k, &s) in signs.iter().enumerate() {
            if s != 0.0 && prev != 0.0 && s != prev {
                flips.push(k);
            }
            if s != 0.0 {
                prev = s;
            }
        }
        assert!(flips.len() >= 2, "expected several flips, got {flips:?}");
        for pair in flips.windows(2) {
            let gap = (pair[1] - pair[0]) as f64;
            assert!(
                (gap - spacing).abs() <= 1.0,
                "gap {gap} vs spacing {spacing}"
            );
        }
    }

    #[test]
    fn bound_and_expectation_basics() {
        assert_eq!(kaczmarz_expectation(0.25, 4.0, 0), 4.0);
        assert!((kaczmarz_expectation(0.25, 4.0, 2) - 2.25).abs() < 1e-15);
        assert_eq!(sv_rate_bound(0.1, 9.0, 0), 9.0);
        assert!((sv_rate_bound(0.1, 9.0, 1) - 8.1).abs() < 1e-15);
    }

    #[test]
    fn json_view_has_documented_fields() {
        let beta0 = optimal_beta(ETA_SMALL, 0.9);
        let a = analyze(ETA_SMALL, &params(0.9, beta0)).unwrap();
        let v = a.to_json();
        for key in
            ["eta", "mass", "beta", "r", "zeta", "lambda1", "lambda2", "discriminant", "beta0", "beta1", "regime"]
        {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["regime"], "RealRepeated");
        assert!(v["lambda1"]["re"].is_f64());
        assert!(v["lambda1"]["im"].is_f64());
    }

    #[test]
    fn scaled_real_round_trips_and_multiplies() {
        for v in [1.0, -2.5, 3.7e-200, -8.1e250, 1.2345e-308] {
            let s = ScaledReal::from_f64(v);
            assert_eq!(s.to_f64(), v, "round trip of {v}");
        }
        let a = ScaledReal::from_f64(3.0);
        let b = ScaledReal::from_f64(-0.125);
        assert_eq!((a * b).to_f64(), -0.375);
        // Powers far outside f64 range keep exact exponent bookkeeping.
        let tiny = ScaledReal::from_f64(0.5).powi(3000);
        assert_eq!(tiny.exp2(), -3000);
        assert_eq!(tiny.mantissa(), 1.0);
        assert_eq!(tiny.to_f64(), 0.0);
        assert!((tiny.log10_abs().unwrap() + 3000.0 * std::f64::consts::LOG10_2).abs() < 1e-9);
    }
}
