//! Test systems with known spectra.
//!
//! A consistent system `Ax = b` is synthesized from its singular value
//! decomposition: two Haar-ish orthonormal factors are drawn from Gaussian
//! matrices, the requested spectrum is placed on the diagonal, and the
//! product is assembled. The synthesis factors themselves are recorded as
//! the system's decomposition, so the singular values and directions used
//! by the theory are exact by construction rather than recovered
//! numerically. Gaussian systems (no prescribed spectrum) record a computed
//! SVD instead.
//!
//! The named spectrum presets share one scale: largest value 1, smallest
//! value 1/50 unless the preset says otherwise. All directional error
//! indices in this module are 0-based; user-facing labels add one.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, DenseMatrix, LinalgError, SvdResult};
use crate::stochastics::{RngStream, RowSampler, SamplerError};

/// Smallest value used by the presets with a flat top: 1/50.
pub const PRESET_FLOOR: f64 = 0.02;

/// Spectrum shapes for synthesized systems.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "values")]
pub enum SpectrumPreset {
    /// `n - 1` values of 1, then 1/50.
    OneSmall,
    /// `n - 2` values of 1, then 1/50 twice.
    TwoSmall,
    /// 1, then `n - 1` values of 1/50.
    ManySmall,
    /// Linear decay `(n + 1 - i) / n`, from 1 down to `1/n`.
    Linear,
    /// Sixth-power decay that stays flat and then falls to 1/50 at i = 20:
    /// `1 - c * ((i - 1) / 20)^6`. Requires n = 20.
    ConvexPoly,
    /// Sixth power of a linear ramp, falling fast and then flattening to
    /// 1/50 at i = 20: `(1 - c * (i - 1) / 20)^6`. Requires n = 20.
    ConcavePoly,
    /// Explicit values, sorted into descending order.
    Explicit(Vec<f64>),
}

#[derive(Debug, Error)]
pub enum SystemError {
    #[error("preset {preset} needs dimension {required}, got {given}")]
    UnsupportedDimension { preset: String, required: String, given: usize },
    #[error("spectrum value {index} must be finite and positive, got {value}")]
    InvalidSpectrumValue { index: usize, value: f64 },
    #[error("system needs rows >= cols, got {rows} x {cols}")]
    BadShape { rows: usize, cols: usize },
    #[error("random factors stayed rank-deficient after {attempts} attempts")]
    GenerationFailed { attempts: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
}

impl SpectrumPreset {
    pub fn name(&self) -> &'static str {
        match self {
            Self::OneSmall => "one-small",
            Self::TwoSmall => "two-small",
            Self::ManySmall => "many-small",
            Self::Linear => "linear",
            Self::ConvexPoly => "convex-poly",
            Self::ConcavePoly => "concave-poly",
            Self::Explicit(_) => "explicit",
        }
    }

    /// Expands the preset to `n` descending singular values.
    pub fn expand(&self, n: usize) -> Result<Vec<f64>, SystemError> {
        let need = |min: usize, what: &str| -> Result<(), SystemError> {
            if n < min {
                Err(SystemError::UnsupportedDimension {
                    preset: self.name().to_string(),
                    required: what.to_string(),
                    given: n,
                })
            } else {
                Ok(())
            }
        };
        let sigma = match self {
            Self::OneSmall => {
                need(2, "n >= 2")?;
                let mut s = vec![1.0; n - 1];
                s.push(PRESET_FLOOR);
                s
            }
            Self::TwoSmall => {
                need(3, "n >= 3")?;
                let mut s = vec![1.0; n - 2];
                s.push(PRESET_FLOOR);
                s.push(PRESET_FLOOR);
                s
            }
            Self::ManySmall => {
                need(2, "n >= 2")?;
                let mut s = vec![1.0];
                s.extend(std::iter::repeat_n(PRESET_FLOOR, n - 1));
                s
            }
            Self::Linear => {
                need(2, "n >= 2")?;
                (1..=n).map(|i| (n + 1 - i) as f64 / n as f64).collect()
            }
            Self::ConvexPoly => {
                if n != 20 {
                    return Err(SystemError::UnsupportedDimension {
                        preset: self.name().to_string(),
                        required: "n = 20".to_string(),
                        given: n,
                    });
                }
                // Scale constant pins value 20 to the 1/50 floor.
                let c = (1.0 - PRESET_FLOOR) / 0.95f64.powi(6);
                (1..=20)
                    .map(|i| 1.0 - c * ((i - 1) as f64 / 20.0).powi(6))
                    .collect()
            }
            Self::ConcavePoly => {
                if n != 20 {
                    return Err(SystemError::UnsupportedDimension {
                        preset: self.name().to_string(),
                        required: "n = 20".to_string(),
                        given: n,
                    });
                }
                // Scale constant pins value 20 to the 1/50 floor.
                let c = (1.0 - PRESET_FLOOR.powf(1.0 / 6.0)) / 0.95;
                (1..=20)
                    .map(|i| (1.0 - c * (i - 1) as f64 / 20.0).powi(6))
                    .collect()
            }
            Self::Explicit(values) => {
                let mut s = values.clone();
                for (index, &value) in s.iter().enumerate() {
                    if !value.is_finite() || value <= 0.0 {
                        return Err(SystemError::InvalidSpectrumValue { index, value });
                    }
                }
                if s.len() != n {
                    return Err(SystemError::UnsupportedDimension {
                        preset: self.name().to_string(),
                        required: format!("n = {}", s.len()),
                        given: n,
                    });
                }
                s.sort_by(|a, b| b.partial_cmp(a).expect("finite values"));
                s
            }
        };
        Ok(sigma)
    }
}

/// A consistent linear system with its decomposition on record.
#[derive(Clone, Debug)]
pub struct LinearSystem {
    matrix: DenseMatrix,
    rhs: Vec<f64>,
    solution: Vec<f64>,
    spectrum: SvdResult,
    frobenius_sq: f64,
    row_norms_sq: Vec<f64>,
}

impl LinearSystem {
    fn assemble(
        matrix: DenseMatrix,
        solution: Vec<f64>,
        spectrum: SvdResult,
    ) -> Result<Self, SystemError> {
        let rhs = matrix.apply(&solution);
        let row_norms_sq: Vec<f64> = (0..matrix.rows())
            .map(|i| linalg::norm_sq(matrix.row(i)))
            .collect();
        if let Some(i) = row_norms_sq.iter().position(|&r| r <= 0.0) {
            return Err(SamplerError::NonPositive { index: i }.into());
        }
        let frobenius_sq = matrix.frobenius_norm_sq();
        Ok(Self { matrix, rhs, solution, spectrum, frobenius_sq, row_norms_sq })
    }

    pub fn rows(&self) -> usize {
        self.matrix.rows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.cols()
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn solution(&self) -> &[f64] {
        &self.solution
    }

    pub fn spectrum(&self) -> &SvdResult {
        &self.spectrum
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.frobenius_sq
    }

    pub fn row_norms_sq(&self) -> &[f64] {
        &self.row_norms_sq
    }

    /// `sigma_l^2 / ||A||_F^2` for 0-based `l`: the per-direction decay
    /// rate of the plain Kaczmarz expectation.
    pub fn eta(&self, l: usize) -> f64 {
        let s = self.spectrum.singular_values[l];
        s * s / self.frobenius_sq
    }

    /// `eta` of the smallest singular direction; governs the worst-case
    /// convergence bound.
    pub fn eta_min(&self) -> f64 {
        self.eta(self.cols() - 1)
    }

    /// Right singular direction `l`, 0-based.
    pub fn right_vector(&self, l: usize) -> Vec<f64> {
        self.spectrum.right_vector(l)
    }

    /// Sampler with row probabilities `||a_i||^2 / ||A||_F^2`.
    pub fn row_sampler(&self) -> RowSampler {
        RowSampler::from_weights(&self.row_norms_sq).expect("rows validated at construction")
    }
}

const GENERATION_ATTEMPTS: usize = 5;

/// Synthesizes a system with the exact spectrum `sigma`.
///
/// Draw order is fixed: left factor entries, right factor entries, then the
/// solution vector, all from `stream`. Rank-deficient Gaussian draws are
/// retried a few times; with continuous entries this is a probability-zero
/// event, but the retry keeps the constructor total.
pub fn generate_spectrum_system(
    sigma: &[f64],
    m: usize,
    n: usize,
    stream: &mut RngStream,
) -> Result<LinearSystem, SystemError> {
    if m < n {
        return Err(SystemError::BadShape { rows: m, cols: n });
    }
    assert_eq!(sigma.len(), n, "need one singular value per column");
    for (index, &value) in sigma.iter().enumerate() {
        if !value.is_finite() || value <= 0.0 {
            return Err(SystemError::InvalidSpectrumValue { index, value });
        }
    }
    for _ in 0..GENERATION_ATTEMPTS {
        let gu = DenseMatrix::standard_normal(m, n, stream);
        let gv = DenseMatrix::standard_normal(n, n, stream);
        let u = match linalg::orthonormal_columns(&gu) {
            Ok(u) => u,
            Err(LinalgError::RankDeficient { .. }) => continue,
            Err(e) => return Err(e.into()),
        };
        let v_cols = match linalg::orthonormal_columns(&gv) {
            Ok(v) => v,
            Err(LinalgError::RankDeficient { .. }) => continue,
            Err(e) => return Err(e.into()),
        };
        // Orthonormal columns of a square matrix make it orthogonal, so the
        // transpose has orthonormal rows: those rows are the singular
        // directions of the synthesized matrix, and the untransposed factor
        // is exactly the column-wise direction matrix the record wants.
        let matrix = linalg::synthesize_matrix(&u, sigma, &v_cols.transpose());
        let mut spectrum =
            SvdResult { left: u, singular_values: sigma.to_vec(), right: v_cols };
        spectrum.canonicalize();
        let solution = stream.normal_vec(n);
        return LinearSystem::assemble(matrix, solution, spectrum);
    }
    Err(SystemError::GenerationFailed { attempts: GENERATION_ATTEMPTS })
}

/// Expands a preset and synthesizes the system in one call.
pub fn generate_preset_system(
    preset: &SpectrumPreset,
    m: usize,
    n: usize,
    stream: &mut RngStream,
) -> Result<LinearSystem, SystemError> {
    let sigma = preset.expand(n)?;
    generate_spectrum_system(&sigma, m, n, stream)
}

/// A system with independent standard normal entries; the spectrum is
/// whatever the draw produced, recovered by a full SVD.
pub fn generate_gaussian_system(
    m: usize,
    n: usize,
    stream: &mut RngStream,
) -> Result<LinearSystem, SystemError> {
    if m < n {
        return Err(SystemError::BadShape { rows: m, cols: n });
    }
    let matrix = DenseMatrix::standard_normal(m, n, stream);
    let spectrum = linalg::svd(&matrix)?;
    let solution = stream.normal_vec(n);
    LinearSystem::assemble(matrix, solution, spectrum)
}

/// Signed error along right singular direction `l` (0-based):
/// `<x - solution, v_l>`.
pub fn directional_error(x: &[f64], system: &LinearSystem, l: usize) -> f64 {
    assert!(l < system.cols(), "direction index out of range");
    let v = system.right_vector(l);
    x.iter()
        .zip(system.solution())
        .zip(&v)
        .map(|((xi, si), vi)| (xi - si) * vi)
        .sum()
}

/// Euclidean distance to the solution. Stays finite for any finite state:
/// huge components are rescaled before squaring so a diverging run reports
/// its true error magnitude instead of overflowing to infinity.
pub fn l2_error(x: &[f64], system: &LinearSystem) -> f64 {
    let diff = x.iter().zip(system.solution()).map(|(xi, si)| xi - si);
    let peak = diff.clone().fold(0.0f64, |m, d| m.max(d.abs()));
    if peak == 0.0 {
        return 0.0;
    }
    if peak < 1e150 {
        return diff.map(|d| d * d).sum::<f64>().sqrt();
    }
    peak * diff.map(|d| (d / peak) * (d / peak)).sum::<f64>().sqrt()
}

/// Least-squares objective `0.5 * ||Ax - b||^2`; zero exactly at the
/// solution of a consistent system.
pub fn least_squares_loss(x: &[f64], system: &LinearSystem) -> f64 {
    let residual = system.matrix().apply(x);
    0.5 * residual
        .iter()
        .zip(system.rhs())
        .map(|(ri, bi)| (ri - bi) * (ri - bi))
        .sum::<f64>()
}
