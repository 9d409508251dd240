//! Iteration kernels and the instrumented run loop.
//!
//! All variants share the same projection core: sample row `i`, move to
//! `x + (b_i - <a_i, x>) / ||a_i||^2 * a_i`, then add whatever momentum the
//! method carries. One arithmetic path serves both the pure step functions
//! and [`run`]: the step functions clone and delegate to the in-place
//! kernels the loop uses, so a replayed index log reproduces a run exactly.
//!
//! Divergence is data, not an error: the loop watches for the first
//! non-finite state entry, records its iteration number, truncates the
//! trace, and returns normally.

use std::collections::BTreeMap;
use std::io::{self, Write};

use thiserror::Error;

use crate::linalg::dot;
use crate::stochastics::{uniform_index, RngStream, RowSampler};
use crate::systems::{directional_error, l2_error, LinearSystem};

#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    #[error("momentum mass must lie in [0, 1], got {0}")]
    InvalidMass(f64),
    #[error("smoothing factor must lie in [0, 1), got {0}")]
    InvalidBeta(f64),
}

/// Momentum configuration: `mass` scales the smoothed increment added to
/// each step, `beta` is the geometric smoothing factor of the increment
/// average.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MomentumParams {
    mass: f64,
    beta: f64,
}

impl MomentumParams {
    pub fn new(mass: f64, beta: f64) -> Result<Self, SolverError> {
        if !(0.0..=1.0).contains(&mass) || !mass.is_finite() {
            return Err(SolverError::InvalidMass(mass));
        }
        if !(0.0..1.0).contains(&beta) || !beta.is_finite() {
            return Err(SolverError::InvalidBeta(beta));
        }
        Ok(Self { mass, beta })
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

/// Iterate plus smoothed-increment buffer. The buffer starts at zero.
#[derive(Clone, Debug, PartialEq)]
pub struct KgsmState {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl KgsmState {
    pub fn new(x0: &[f64]) -> Self {
        Self { x: x0.to_vec(), y: vec![0.0; x0.len()] }
    }
}

/// Projection coefficient `(b_i - <a_i, x>) / ||a_i||^2`.
#[inline]
fn projection_coefficient(x: &[f64], row: &[f64], rhs_i: f64) -> f64 {
    let row_norm_sq = dot(row, row);
    assert!(row_norm_sq > 0.0, "zero row in projection step");
    (rhs_i - dot(row, x)) / row_norm_sq
}

#[inline]
fn kaczmarz_in_place(x: &mut [f64], row: &[f64], rhs_i: f64) {
    let coef = projection_coefficient(x, row, rhs_i);
    for (xi, ai) in x.iter_mut().zip(row) {
        *xi += coef * ai;
    }
}

#[inline]
fn kgsm_in_place(state: &mut KgsmState, row: &[f64], rhs_i: f64, params: &MomentumParams) {
    let coef = projection_coefficient(&state.x, row, rhs_i);
    let (mass, beta) = (params.mass, params.beta);
    for ((xi, yi), ai) in state.x.iter_mut().zip(&mut state.y).zip(row) {
        // dx is the full increment x_{k+1} - x_k, momentum included, so the
        // buffer update can reuse it.
        let dx = coef * ai + mass * *yi;
        *xi += dx;
        *yi = beta * *yi + (1.0 - beta) * dx;
    }
}

#[inline]
fn heavy_ball_in_place(state: &mut KgsmState, row: &[f64], rhs_i: f64, mass: f64) {
    let coef = projection_coefficient(&state.x, row, rhs_i);
    for ((xi, yi), ai) in state.x.iter_mut().zip(&mut state.y).zip(row) {
        let dx = coef * ai + mass * *yi;
        *xi += dx;
        *yi = dx;
    }
}

/// One plain Kaczmarz step: orthogonal projection onto the hyperplane of
/// row `i`.
pub fn kaczmarz_step(x: &[f64], row: &[f64], rhs_i: f64) -> Vec<f64> {
    let mut out = x.to_vec();
    kaczmarz_in_place(&mut out, row, rhs_i);
    out
}

/// One smoothed-momentum step. With `mass = 0` the momentum term
/// contributes exactly zero and the iterate matches [`kaczmarz_step`].
pub fn kgsm_step(
    state: &KgsmState,
    row: &[f64],
    rhs_i: f64,
    params: &MomentumParams,
) -> KgsmState {
    let mut out = state.clone();
    kgsm_in_place(&mut out, row, rhs_i, params);
    out
}

/// One batch-size-1 heavy ball step: the buffer holds the previous full
/// increment rather than a smoothed average. Identical to [`kgsm_step`]
/// with `beta = 0`.
pub fn heavy_ball_step(state: &KgsmState, row: &[f64], rhs_i: f64, mass: f64) -> KgsmState {
    let mut out = state.clone();
    heavy_ball_in_place(&mut out, row, rhs_i, mass);
    out
}

/// Step size for weighted SGD: either fixed or an arbitrary function of
/// the iteration counter.
pub enum LearningRate {
    Constant(f64),
    Schedule(Box<dyn Fn(usize) -> f64 + Send + Sync>),
}

impl LearningRate {
    pub fn at(&self, k: usize) -> f64 {
        match self {
            Self::Constant(a) => *a,
            Self::Schedule(f) => f(k),
        }
    }
}

/// One importance-weighted SGD step on the least-squares objective:
/// `x - alpha * (<a_i, x> - b_i) / p_i * a_i`, where `p_i` is the
/// probability row `i` was drawn with. Choosing `p_i` proportional to
/// `||a_i||^2` and `alpha = 1 / ||A||_F^2` recovers the Kaczmarz step up
/// to rounding.
pub fn sgd_step(x: &[f64], row: &[f64], rhs_i: f64, probability: f64, alpha: f64) -> Vec<f64> {
    assert!(probability > 0.0, "sampled row must have positive probability");
    let scale = alpha * (dot(row, x) - rhs_i) / probability;
    x.iter().zip(row).map(|(xi, ai)| xi - scale * ai).collect()
}

/// Iteration variant run by [`run`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Method {
    Kaczmarz,
    Kgsm(MomentumParams),
    HeavyBall { mass: f64 },
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Kaczmarz => "kaczmarz",
            Self::Kgsm(_) => "kgsm",
            Self::HeavyBall { .. } => "hbm",
        }
    }
}

/// Where row indices come from: fresh draws (weighted or uniform) or an
/// index log recorded by an earlier run, so method comparisons can share
/// one row sequence.
pub enum RowSource<'a> {
    Weighted { sampler: &'a RowSampler, stream: &'a mut RngStream },
    Uniform { stream: &'a mut RngStream },
    Replay(&'a [usize]),
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub iters: usize,
    /// Recording stride; `None` picks [`default_stride`].
    pub stride: Option<usize>,
    /// 0-based singular directions whose signed error is recorded.
    pub tracked_dirs: Vec<usize>,
    /// Record the sampled row index of every iteration for later replay.
    pub record_indices: bool,
}

impl RunOptions {
    pub fn new(iters: usize) -> Self {
        Self { iters, stride: None, tracked_dirs: Vec::new(), record_indices: false }
    }

    pub fn tracking(mut self, dirs: &[usize]) -> Self {
        self.tracked_dirs = dirs.to_vec();
        self
    }

    pub fn recording_indices(mut self) -> Self {
        self.record_indices = true;
        self
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = Some(stride);
        self
    }
}

/// Stride 1 up to 1e5 iterations, then the smallest stride that keeps at
/// most 1e5 recorded points.
pub fn default_stride(iters: usize) -> usize {
    const MAX_POINTS: usize = 100_000;
    if iters <= MAX_POINTS {
        1
    } else {
        iters.div_ceil(MAX_POINTS)
    }
}

/// Error series of one run.
///
/// `recorded_k[j]` is the iteration number of sample `j`; all series have
/// the same length and start at `k = 0`. A diverged run is truncated at
/// the last finite record and carries the first bad iteration in
/// `divergence`.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationTrace {
    pub stride: usize,
    pub recorded_k: Vec<usize>,
    pub l2: Vec<f64>,
    /// Signed directional errors keyed by 0-based direction index.
    pub directional: BTreeMap<usize, Vec<f64>>,
    pub index_log: Option<Vec<usize>>,
    pub divergence: Option<usize>,
    pub final_x: Vec<f64>,
}

impl IterationTrace {
    pub fn len(&self) -> usize {
        self.recorded_k.len()
    }

    pub fn is_empty(&self) -> bool {
        self.recorded_k.is_empty()
    }

    pub fn final_l2(&self) -> f64 {
        *self.l2.last().expect("trace always records k = 0")
    }

    /// Writes the trace as CSV: header `k,l2,dir_<label>,...` with 1-based
    /// direction labels, one row per recorded step, values at 17
    /// significant digits so parsing recovers them exactly.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "k,l2")?;
        for l in self.directional.keys() {
            write!(w, ",dir_{}", l + 1)?;
        }
        writeln!(w)?;
        for (j, &k) in self.recorded_k.iter().enumerate() {
            write!(w, "{k},{:.16e}", self.l2[j])?;
            for series in self.directional.values() {
                write!(w, ",{:.16e}", series[j])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Runs `iters` steps of `method` from `x0`, recording error series every
/// `stride` iterations.
pub fn run(
    system: &LinearSystem,
    method: &Method,
    x0: &[f64],
    opts: &RunOptions,
    mut source: RowSource,
) -> IterationTrace {
    assert_eq!(x0.len(), system.cols(), "start point has wrong dimension");
    for &d in &opts.tracked_dirs {
        assert!(d < system.cols(), "tracked direction {d} out of range");
    }
    if let RowSource::Replay(log) = &source {
        assert!(
            log.len() >= opts.iters,
            "replay log holds {} indices, need {}",
            log.len(),
            opts.iters
        );
    }

    let stride = opts.stride.unwrap_or_else(|| default_stride(opts.iters));
    assert!(stride > 0, "stride must be positive");
    let mut state = KgsmState::new(x0);
    let mut recorded_k = Vec::new();
    let mut l2 = Vec::new();
    let mut directional: BTreeMap<usize, Vec<f64>> =
        opts.tracked_dirs.iter().map(|&d| (d, Vec::new())).collect();
    let mut index_log = opts.record_indices.then(|| Vec::with_capacity(opts.iters));
    let mut divergence = None;

    let record = |k: usize,
                      x: &[f64],
                      recorded_k: &mut Vec<usize>,
                      l2: &mut Vec<f64>,
                      directional: &mut BTreeMap<usize, Vec<f64>>| {
        recorded_k.push(k);
        l2.push(l2_error(x, system));
        for (&d, series) in directional.iter_mut() {
            series.push(directional_error(x, system, d));
        }
    };
    record(0, &state.x, &mut recorded_k, &mut l2, &mut directional);

    for k in 1..=opts.iters {
        let i = match &mut source {
            RowSource::Weighted { sampler, stream } => sampler.sample(stream),
            RowSource::Uniform { stream } => uniform_index(stream, system.rows()),
            RowSource::Replay(log) => log[k - 1],
        };
        assert!(i < system.rows(), "row index {i} out of range");
        if let Some(log) = &mut index_log {
            log.push(i);
        }
        let row = system.matrix().row(i);
        let rhs_i = system.rhs()[i];
        match method {
            Method::Kaczmarz => kaczmarz_in_place(&mut state.x, row, rhs_i),
            Method::Kgsm(params) => kgsm_in_place(&mut state, row, rhs_i, params),
            Method::HeavyBall { mass } => heavy_ball_in_place(&mut state, row, rhs_i, *mass),
        }
        let finite = state.x.iter().all(|v| v.is_finite())
            && state.y.iter().all(|v| v.is_finite());
        if !finite {
            divergence = Some(k);
            break;
        }
        if k % stride == 0 {
            record(k, &state.x, &mut recorded_k, &mut l2, &mut directional);
        }
    }

    IterationTrace {
        stride,
        recorded_k,
        l2,
        directional,
        index_log,
        divergence,
        final_x: state.x,
    }
}
