//! Named, seeded experiment drivers.
//!
//! Every driver regenerates one study end to end: build the system, run the
//! solvers, write CSV traces and theory overlays, render SVG panels, and
//! record a manifest. Reruns with the same id and seed produce byte-identical
//! files. The module also houses the analytics the studies share: quartile
//! bands over repeated trials, sign-flip detection, parameter-plane sweeps,
//! and the single-step direction-persistence identity.
//!
//! Randomness policy: a driver never consumes the master seed directly. Each
//! concern (system synthesis, start point, row sampling, each trial) draws
//! from its own substream derived from the figure id and a fixed role number,
//! so adding a consumer never shifts the draws of another. Within one study,
//! all methods replay the same recorded row-index log; comparisons are
//! paired, never re-sampled.

use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::plot::{self, MarkerShape, PlotError, PlotSpec, Series, YScale};
use crate::solvers::{
    kaczmarz_step, run, IterationTrace, Method, MomentumParams, RowSource, RunOptions,
    SolverError,
};
use crate::stochastics::RngStream;
use crate::systems::{
    self, generate_gaussian_system, generate_preset_system, LinearSystem, SpectrumPreset,
    SystemError,
};
use crate::theory::{self, CompanionAnalysis, Regime, TheoryError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("unknown figure id {0:?}")]
    UnknownFigure(String),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Theory(#[from] TheoryError),
    #[error(transparent)]
    Plot(#[from] PlotError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("unusable trace set: {0}")]
    BadTraces(String),
    #[error("direction {0} is not tracked in this trace")]
    UntrackedDirection(usize),
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
}

/// Identifiers for the reproducible studies this crate ships.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FigureId {
    Fig01,
    Fig02,
    Fig03,
    Fig04,
    Fig05,
    Fig06,
    Fig07,
    FigManySmall,
    Fig08,
    Fig09,
    FigSign,
    GaussA1,
    HbmA2,
    SpectraA3,
    PhaseA4,
}

impl FigureId {
    pub const ALL: [FigureId; 15] = [
        FigureId::Fig01,
        FigureId::Fig02,
        FigureId::Fig03,
        FigureId::Fig04,
        FigureId::Fig05,
        FigureId::Fig06,
        FigureId::Fig07,
        FigureId::FigManySmall,
        FigureId::Fig08,
        FigureId::Fig09,
        FigureId::FigSign,
        FigureId::GaussA1,
        FigureId::HbmA2,
        FigureId::SpectraA3,
        FigureId::PhaseA4,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            FigureId::Fig01 => "fig01",
            FigureId::Fig02 => "fig02",
            FigureId::Fig03 => "fig03",
            FigureId::Fig04 => "fig04",
            FigureId::Fig05 => "fig05",
            FigureId::Fig06 => "fig06",
            FigureId::Fig07 => "fig07",
            FigureId::FigManySmall => "fig_manysmall",
            FigureId::Fig08 => "fig08",
            FigureId::Fig09 => "fig09",
            FigureId::FigSign => "fig_sign",
            FigureId::GaussA1 => "gauss_a1",
            FigureId::HbmA2 => "hbm_a2",
            FigureId::SpectraA3 => "spectra_a3",
            FigureId::PhaseA4 => "phase_a4",
        }
    }

    fn index(&self) -> u64 {
        FigureId::ALL.iter().position(|x| x == self).expect("listed") as u64
    }
}

impl fmt::Display for FigureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FigureId {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FigureId::ALL
            .iter()
            .find(|id| id.as_str() == s)
            .copied()
            .ok_or_else(|| ExperimentError::UnknownFigure(s.to_string()))
    }
}

/// Optional parameter overrides; `None` keeps the study's defaults.
#[derive(Clone, Copy, Debug, Default)]
pub struct Overrides {
    pub mass: Option<f64>,
    pub beta: Option<f64>,
    pub iters: Option<usize>,
    pub trials: Option<usize>,
}

#[derive(Clone, Copy, Debug)]
pub struct FigureSpec {
    pub id: FigureId,
    pub seed: u64,
    pub overrides: Overrides,
}

impl FigureSpec {
    pub fn new(id: FigureId, seed: u64) -> Self {
        FigureSpec { id, seed, overrides: Overrides::default() }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DivergenceFlag {
    pub trace: String,
    pub at: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub id: String,
    pub seed: u64,
    pub params: Value,
    pub files: Vec<String>,
    pub divergence_flags: Vec<DivergenceFlag>,
}

/// Substream for one role of one figure. Figures are spaced far apart in
/// role space so no two studies ever share a stream at the same master seed.
fn sub(spec: &FigureSpec, role: u64) -> RngStream {
    RngStream::derive_substream(spec.seed, (spec.id.index() + 1) * 10_000 + role)
}

const PRESET_ROWS: usize = 100;
const PRESET_COLS: usize = 20;
const SMALLEST: usize = PRESET_COLS - 1;

/// The four (M, beta) cells studied in the parameter-plane figures,
/// keyed by the marker that labels each panel.
const CELLS: [(&str, MarkerShape, f64, f64); 4] = [
    ("circle", MarkerShape::Circle, 0.9, 0.992),
    ("plus", MarkerShape::Plus, 0.95, 0.992),
    ("square", MarkerShape::Square, 0.85, 0.992),
    ("triangle", MarkerShape::Triangle, 0.965, 0.932),
];

/// Spectral ratio of the smallest direction straight from a preset,
/// independent of any synthesized instance.
fn preset_eta_min(preset: &SpectrumPreset) -> Result<f64, ExperimentError> {
    let sigma = preset.expand(PRESET_COLS)?;
    let frob_sq: f64 = sigma.iter().map(|s| s * s).sum();
    let last = sigma[PRESET_COLS - 1];
    Ok(last * last / frob_sq)
}

// ---------------------------------------------------------------------------
// Analytics shared by the drivers and the test suite.
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TraceMetric {
    L2,
    /// Absolute signed error along a 0-based direction index.
    Direction(usize),
}

/// Pointwise order statistics of one metric over repeated trials.
#[derive(Clone, Debug)]
pub struct QuartileBands {
    pub recorded_k: Vec<usize>,
    pub min: Vec<f64>,
    pub q1: Vec<f64>,
    pub median: Vec<f64>,
    pub q3: Vec<f64>,
    pub max: Vec<f64>,
    /// Traces contributing at each point; shrinks past divergence cutoffs.
    pub samples: Vec<usize>,
    /// Traces that ended early (divergence) and are excluded pointwise.
    pub excluded: usize,
}

/// Linear interpolation of order statistics on a sorted slice:
/// `q(p) = v[h] + frac(h) * (v[h+1] - v[h])` with `h = (n-1) * p`.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0 && (0.0..=1.0).contains(&p));
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    if lo + 1 == n {
        return sorted[lo];
    }
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
}

fn metric_value(trace: &IterationTrace, metric: TraceMetric, j: usize) -> Option<f64> {
    match metric {
        TraceMetric::L2 => trace.l2.get(j).copied(),
        TraceMetric::Direction(l) => trace.directional.get(&l)?.get(j).map(|v| v.abs()),
    }
}

pub fn quartile_bands(
    traces: &[IterationTrace],
    metric: TraceMetric,
) -> Result<QuartileBands, ExperimentError> {
    if traces.len() < 4 {
        return Err(ExperimentError::BadTraces(format!(
            "quartiles need at least 4 traces, got {}",
            traces.len()
        )));
    }
    let stride = traces[0].stride;
    if traces.iter().any(|t| t.stride != stride) {
        return Err(ExperimentError::BadTraces("traces have mixed strides".to_string()));
    }
    if let TraceMetric::Direction(l) = metric {
        if let Some(t) = traces.iter().find(|t| !t.directional.contains_key(&l)) {
            let _ = t;
            return Err(ExperimentError::UntrackedDirection(l));
        }
    }
    let longest = traces.iter().max_by_key(|t| t.len()).expect("nonempty");
    let points = longest.len();
    let excluded = traces.iter().filter(|t| t.len() < points).count();

    let mut bands = QuartileBands {
        recorded_k: longest.recorded_k.clone(),
        min: Vec::with_capacity(points),
        q1: Vec::with_capacity(points),
        median: Vec::with_capacity(points),
        q3: Vec::with_capacity(points),
        max: Vec::with_capacity(points),
        samples: Vec::with_capacity(points),
        excluded,
    };
    let mut column = Vec::with_capacity(traces.len());
    for j in 0..points {
        column.clear();
        for t in traces {
            if let Some(v) = metric_value(t, metric, j) {
                column.push(v);
            }
        }
        if column.is_empty() {
            return Err(ExperimentError::BadTraces(format!(
                "no trace reaches recorded point {j}"
            )));
        }
        column.sort_by(|a, b| a.partial_cmp(b).expect("finite metric values"));
        bands.min.push(column[0]);
        bands.q1.push(quantile_sorted(&column, 0.25));
        bands.median.push(quantile_sorted(&column, 0.5));
        bands.q3.push(quantile_sorted(&column, 0.75));
        bands.max.push(column[column.len() - 1]);
        bands.samples.push(column.len());
    }
    Ok(bands)
}

/// Indices where the sign of `values` changes; an exact zero inherits the
/// previous sign and can never flip on its own.
pub fn sign_flips_in(values: &[f64]) -> Vec<usize> {
    let mut flips = Vec::new();
    let mut prev = 0.0f64;
    for (i, &v) in values.iter().enumerate() {
        let s = if v > 0.0 {
            1.0
        } else if v < 0.0 {
            -1.0
        } else {
            prev
        };
        if prev != 0.0 && s != prev {
            flips.push(i);
        }
        if s != 0.0 {
            prev = s;
        }
    }
    flips
}

/// Iteration indices where the signed error along direction `l` changes
/// sign. Requires stride 1, since a flip between recorded points would
/// otherwise be invisible or mislocated.
pub fn sign_flip_events(
    trace: &IterationTrace,
    l: usize,
) -> Result<Vec<usize>, ExperimentError> {
    if trace.stride != 1 {
        return Err(ExperimentError::BadTraces(format!(
            "sign flips need stride 1, trace has stride {}",
            trace.stride
        )));
    }
    let series =
        trace.directional.get(&l).ok_or(ExperimentError::UntrackedDirection(l))?;
    Ok(sign_flips_in(series)
        .into_iter()
        .map(|j| trace.recorded_k[j])
        .collect())
}

/// Outcome of one (M, beta) cell of a parameter sweep.
#[derive(Clone, Debug)]
pub struct SweepCell {
    pub mass: f64,
    pub beta: f64,
    pub regime: Regime,
    pub diverged: Option<usize>,
    pub converged: bool,
    pub initial_abs: f64,
    pub final_abs: f64,
}

/// Runs one KGSM trial per (M, beta) grid cell and reports the regime next
/// to the empirical outcome. Divergence is data, not an error. A cell counts
/// as converged when no non-finite iterate appeared and the final recorded
/// error along the smallest direction is at most half the initial one.
pub fn parameter_sweep(
    system: &LinearSystem,
    m_grid: &[f64],
    beta_grid: &[f64],
    iters: usize,
    stream: &RngStream,
) -> Result<Vec<SweepCell>, ExperimentError> {
    if m_grid.is_empty() || beta_grid.is_empty() {
        return Err(ExperimentError::BadTraces("sweep grids must be nonempty".to_string()));
    }
    let l = system.cols() - 1;
    let eta = system.eta(l);
    let seed = stream.seed();
    let x0 = RngStream::derive_substream(seed, 0).normal_vec(system.cols());
    let sampler = system.row_sampler();

    let cells: Vec<(usize, f64, f64)> = m_grid
        .iter()
        .enumerate()
        .flat_map(|(i, &m)| {
            beta_grid.iter().enumerate().map(move |(j, &b)| (i * beta_grid.len() + j, m, b))
        })
        .collect();

    cells
        .into_par_iter()
        .map(|(cell, mass, beta)| {
            let params = MomentumParams::new(mass, beta)?;
            let analysis = theory::analyze(eta, &params)?;
            let mut idx = RngStream::derive_substream(seed, 1 + cell as u64);
            let opts = RunOptions::new(iters).tracking(&[l]);
            let trace = run(
                system,
                &Method::Kgsm(params),
                &x0,
                &opts,
                RowSource::Weighted { sampler: &sampler, stream: &mut idx },
            );
            let dir = &trace.directional[&l];
            let initial_abs = dir.first().copied().unwrap_or(0.0).abs();
            let final_abs = dir.last().copied().unwrap_or(f64::INFINITY).abs();
            let diverged = trace.divergence;
            let converged = diverged.is_none() && final_abs <= 0.5 * initial_abs;
            Ok(SweepCell { mass, beta, regime: analysis.regime, diverged, converged, initial_abs, final_abs })
        })
        .collect()
}

/// Exact single-step identity: the squared cosine between the error before
/// and after one Kaczmarz step, averaged over the row distribution, equals
/// `1 - ||A u||^2 / ||A||_F^2` for the unit error direction `u`. Both sides
/// are returned for comparison.
pub fn direction_persistence_check(
    system: &LinearSystem,
    xk: &[f64],
) -> Result<(f64, f64), ExperimentError> {
    assert_eq!(xk.len(), system.cols());
    let x = system.solution();
    let d: Vec<f64> = xk.iter().zip(x).map(|(a, b)| a - b).collect();
    let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(ExperimentError::PreconditionViolated(
            "state equals the solution".to_string(),
        ));
    }
    let u: Vec<f64> = d.iter().map(|v| v / norm).collect();

    let au = system.matrix().apply(&u);
    let au_sq: f64 = au.iter().map(|v| v * v).sum();
    let rhs = 1.0 - au_sq / system.frobenius_sq();

    let sampler = system.row_sampler();
    let mut lhs = 0.0;
    for i in 0..system.rows() {
        let next = kaczmarz_step(xk, system.matrix().row(i), system.rhs()[i]);
        let dn: Vec<f64> = next.iter().zip(x).map(|(a, b)| a - b).collect();
        let dn_norm = dn.iter().map(|v| v * v).sum::<f64>().sqrt();
        if dn_norm == 0.0 {
            return Err(ExperimentError::PreconditionViolated(format!(
                "row {i} maps the state onto the solution"
            )));
        }
        let cos = u.iter().zip(&dn).map(|(a, b)| a * b).sum::<f64>() / dn_norm;
        lhs += sampler.probability(i) * cos * cos;
    }
    Ok((lhs, rhs))
}

// ---------------------------------------------------------------------------
// CSV and SVG emission plumbing.
// ---------------------------------------------------------------------------

pub(crate) struct Emitter {
    dir: PathBuf,
    files: Vec<String>,
    flags: Vec<DivergenceFlag>,
}

impl Emitter {
    pub(crate) fn new(outdir: &Path, id: &str) -> Result<Self, ExperimentError> {
        let dir = outdir.join(id);
        fs::create_dir_all(&dir)?;
        Ok(Emitter { dir, files: Vec::new(), flags: Vec::new() })
    }

    pub(crate) fn trace(
        &mut self,
        name: &str,
        trace: &IterationTrace,
    ) -> Result<(), ExperimentError> {
        let file = File::create(self.dir.join(name))?;
        trace.write_csv(BufWriter::new(file))?;
        self.files.push(name.to_string());
        if let Some(at) = trace.divergence {
            self.flags.push(DivergenceFlag { trace: name.to_string(), at });
        }
        Ok(())
    }

    pub(crate) fn raw(&mut self, name: &str, content: &str) -> Result<(), ExperimentError> {
        fs::write(self.dir.join(name), content)?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub(crate) fn svg(&mut self, name: &str, spec: &PlotSpec) -> Result<(), ExperimentError> {
        plot::write_svg(spec, &self.dir.join(name))?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub(crate) fn flag(&mut self, trace: &str, at: usize) {
        self.flags.push(DivergenceFlag { trace: trace.to_string(), at });
    }

    pub(crate) fn finish(
        mut self,
        id: &str,
        seed: u64,
        params: Value,
    ) -> Result<Manifest, ExperimentError> {
        let manifest = Manifest {
            id: id.to_string(),
            seed,
            params,
            files: std::mem::take(&mut self.files),
            divergence_flags: std::mem::take(&mut self.flags),
        };
        let file = File::create(self.dir.join("manifest.json"))?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer_pretty(&mut w, &manifest)?;
        w.write_all(b"\n")?;
        Ok(manifest)
    }
}

impl From<serde_json::Error> for ExperimentError {
    fn from(e: serde_json::Error) -> Self {
        ExperimentError::Io(e.into())
    }
}

fn expectation_csv(rows: &[(usize, f64)]) -> String {
    let mut out = String::with_capacity(rows.len() * 28 + 16);
    out.push_str("k,expected\n");
    for &(k, v) in rows {
        out.push_str(&format!("{k},{v:.16e}\n"));
    }
    out
}

fn quartiles_csv(bands: &QuartileBands) -> String {
    let mut out = String::with_capacity(bands.recorded_k.len() * 120 + 48);
    out.push_str("k,min,q1,median,q3,max,samples\n");
    for j in 0..bands.recorded_k.len() {
        out.push_str(&format!(
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}\n",
            bands.recorded_k[j],
            bands.min[j],
            bands.q1[j],
            bands.median[j],
            bands.q3[j],
            bands.max[j],
            bands.samples[j]
        ));
    }
    out
}

fn sign_csv(trace: &IterationTrace, l: usize) -> String {
    let series = &trace.directional[&l];
    let mut out = String::with_capacity(series.len() * 32 + 16);
    out.push_str(&format!("k,dir_{},sign\n", l + 1));
    for (j, &v) in series.iter().enumerate() {
        let s = if v > 0.0 {
            1
        } else if v < 0.0 {
            -1
        } else {
            0
        };
        out.push_str(&format!("{},{v:.16e},{s}\n", trace.recorded_k[j]));
    }
    out
}

// Series extraction for plotting. SVG series are thinned to a few thousand
// points; the CSVs keep every recorded sample.

const MAX_PLOT_POINTS: usize = 2000;

fn thin(points: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    let n = points.len();
    if n <= MAX_PLOT_POINTS {
        return points;
    }
    let step = n.div_ceil(MAX_PLOT_POINTS);
    let mut out: Vec<(f64, f64)> = points.iter().copied().step_by(step).collect();
    if *out.last().expect("nonempty") != points[n - 1] {
        out.push(points[n - 1]);
    }
    out
}

fn dir_series(trace: &IterationTrace, l: usize) -> Vec<(f64, f64)> {
    thin(
        trace.recorded_k
            .iter()
            .zip(&trace.directional[&l])
            .map(|(&k, &v)| (k as f64, v.abs()))
            .collect(),
    )
}

fn l2_series(trace: &IterationTrace) -> Vec<(f64, f64)> {
    thin(trace.recorded_k.iter().zip(&trace.l2).map(|(&k, &v)| (k as f64, v)).collect())
}

fn rows_abs_series(rows: &[(usize, f64)]) -> Vec<(f64, f64)> {
    thin(rows.iter().map(|&(k, v)| (k as f64, v.abs())).collect())
}

// Theory overlays, indexed like the numeric traces: row k holds the
// expectation of the k-th iterate's signed error, row 0 the start error.

fn kaczmarz_theory_rows(eta: f64, e0: f64, iters: usize, stride: usize) -> Vec<(usize, f64)> {
    (0..=iters)
        .step_by(stride)
        .map(|k| (k, theory::kaczmarz_expectation(eta, e0, k)))
        .collect()
}

fn kgsm_theory_rows(
    analysis: &CompanionAnalysis,
    e0: f64,
    iters: usize,
    stride: usize,
) -> Vec<(usize, f64)> {
    let traj = theory::expected_error_trajectory(analysis, e0, iters.saturating_sub(1));
    (0..=iters)
        .step_by(stride)
        .map(|k| (k, if k == 0 { e0 } else { traj.value(k - 1) }))
        .collect()
}

fn critical_theory_rows(
    eta: f64,
    mass: f64,
    e0: f64,
    iters: usize,
    stride: usize,
) -> Vec<(usize, f64)> {
    (0..=iters)
        .step_by(stride)
        .map(|k| {
            let v = if k == 0 {
                e0
            } else {
                theory::closed_form_repeated_scaled(eta, mass, e0, k - 1).to_f64()
            };
            (k, v)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Drivers.
// ---------------------------------------------------------------------------

/// Runs the study named by `spec.id` and writes its artifacts under
/// `<outdir>/<id>/`. Returns the manifest that was also written there.
pub fn run_figure(spec: &FigureSpec, outdir: &Path) -> Result<Manifest, ExperimentError> {
    match spec.id {
        FigureId::Fig01 => drive_perturbed(spec, outdir),
        FigureId::Fig02 => drive_dir_study(spec, outdir, SpectrumPreset::OneSmall, 0.9, 100_000, false),
        FigureId::Fig03 => drive_perturbed(spec, outdir),
        FigureId::Fig04 => drive_boundary_map(spec, outdir),
        FigureId::Fig05 => drive_cells(spec, outdir, CellPanels::Dir20),
        FigureId::Fig06 => drive_dir_study(spec, outdir, SpectrumPreset::Linear, 0.85, 50_000, true),
        FigureId::Fig07 => drive_quartiles(spec, outdir),
        FigureId::FigManySmall => {
            drive_dir_study(spec, outdir, SpectrumPreset::ManySmall, 0.85, 50_000, true)
        }
        FigureId::Fig08 => drive_l2_compare(spec, outdir),
        FigureId::Fig09 => drive_two_small(spec, outdir),
        FigureId::FigSign => drive_sign_study(spec, outdir),
        FigureId::GaussA1 => drive_gauss(spec, outdir),
        FigureId::HbmA2 => hbm_comparison(spec, outdir),
        FigureId::SpectraA3 => drive_spectra(spec, outdir),
        FigureId::PhaseA4 => drive_cells(spec, outdir, CellPanels::V19AndL2),
    }
}

/// Preset system plus a standard-normal start point from fixed roles.
fn preset_setup(
    spec: &FigureSpec,
    base_role: u64,
    preset: &SpectrumPreset,
) -> Result<(LinearSystem, Vec<f64>), ExperimentError> {
    let mut sys_stream = sub(spec, base_role);
    let system = generate_preset_system(preset, PRESET_ROWS, PRESET_COLS, &mut sys_stream)?;
    let x0 = sub(spec, base_role + 1).normal_vec(PRESET_COLS);
    Ok((system, x0))
}

/// Kaczmarz first (recording the index log), then every other method
/// replaying it, so all comparisons face identical row draws.
fn paired_runs(
    system: &LinearSystem,
    x0: &[f64],
    opts: &RunOptions,
    others: &[(&str, Method)],
    idx_stream: &mut RngStream,
    uniform: bool,
) -> Vec<(String, IterationTrace)> {
    let record = opts.clone().recording_indices();
    let sampler = system.row_sampler();
    let first = if uniform {
        run(system, &Method::Kaczmarz, x0, &record, RowSource::Uniform { stream: idx_stream })
    } else {
        run(
            system,
            &Method::Kaczmarz,
            x0,
            &record,
            RowSource::Weighted { sampler: &sampler, stream: idx_stream },
        )
    };
    let log = first.index_log.clone().expect("recording was requested");
    let mut out = vec![("kaczmarz".to_string(), first)];
    for (label, method) in others {
        let trace = run(system, method, x0, opts, RowSource::Replay(&log));
        out.push(((*label).to_string(), trace));
    }
    out
}

/// Four-curve directional study: numeric Kaczmarz and KGSM at critical
/// smoothing, with both expectation overlays. Optionally an l2 panel.
fn drive_dir_study(
    spec: &FigureSpec,
    outdir: &Path,
    preset: SpectrumPreset,
    default_mass: f64,
    default_iters: usize,
    l2_panel: bool,
) -> Result<Manifest, ExperimentError> {
    let ov = &spec.overrides;
    let (system, x0) = preset_setup(spec, 0, &preset)?;
    let eta = system.eta(SMALLEST);
    let mass = ov.mass.unwrap_or(default_mass);
    let beta = ov.beta.unwrap_or_else(|| theory::optimal_beta(eta, mass));
    let iters = ov.iters.unwrap_or(default_iters);
    let params = MomentumParams::new(mass, beta)?;
    let analysis = theory::analyze(eta, &params)?;

    let opts = RunOptions::new(iters).tracking(&[SMALLEST]);
    let mut idx = sub(spec, 2);
    let runs = paired_runs(&system, &x0, &opts, &[("kgsm", Method::Kgsm(params))], &mut idx, false);

    let e0 = systems::directional_error(&x0, &system, SMALLEST);
    let stride = runs[0].1.stride;
    let kacz_rows = kaczmarz_theory_rows(eta, e0, iters, stride);
    // At the exact boundary the closed form applies; off it (an override)
    // fall back to the recurrence so the overlay stays truthful.
    let critical_rows = if analysis.regime == Regime::RealRepeated {
        critical_theory_rows(eta, mass, e0, iters, stride)
    } else {
        kgsm_theory_rows(&analysis, e0, iters, stride)
    };

    let mut em = Emitter::new(outdir, spec.id.as_str())?;
    for (label, trace) in &runs {
        em.trace(&format!("{label}.csv"), trace)?;
    }
    em.raw("theory_kaczmarz.csv", &expectation_csv(&kacz_rows))?;
    em.raw("theory_kgsm.csv", &expectation_csv(&critical_rows))?;

    let id = spec.id.as_str();
    let mut dir_plot = PlotSpec::new(
        &format!("{id}: error along the smallest direction ({})", preset.name()),
        "iteration k",
        "|<x_k - x, v_20>|",
        YScale::Log10,
    );
    dir_plot.series.push(Series::line("kaczmarz", dir_series(&runs[0].1, SMALLEST)));
    dir_plot.series.push(Series::line("kgsm", dir_series(&runs[1].1, SMALLEST)));
    dir_plot.series.push(Series::dashed_line("kaczmarz expectation", rows_abs_series(&kacz_rows)));
    dir_plot.series.push(Series::dashed_line("kgsm expectation", rows_abs_series(&critical_rows)));
    em.svg(&format!("{id}_dir.svg"), &dir_plot)?;

    if l2_panel {
        let mut l2_plot = PlotSpec::new(
            &format!("{id}: l2 error ({})", preset.name()),
            "iteration k",
            "||x_k - x||",
            YScale::Log10,
        );
        l2_plot.series.push(Series::line("kaczmarz", l2_series(&runs[0].1)));
        l2_plot.series.push(Series::line("kgsm", l2_series(&runs[1].1)));
        em.svg(&format!("{id}_l2.svg"), &l2_plot)?;
    }

    let params_json = json!({
        "spectrum": preset.name(),
        "rows": PRESET_ROWS,
        "cols": PRESET_COLS,
        "mass": mass,
        "beta": beta,
        "eta": eta,
        "regime": analysis.regime.name(),
        "iters": iters,
        "stride": stride,
        "e0": e0,
        "final_l2": { "kaczmarz": runs[0].1.final_l2(), "kgsm": runs[1].1.final_l2() },
    });
    em.finish(spec.id.as_str(), spec.seed, params_json)
}

/// Oscillatory study: smoothing perturbed 0.001 past the boundary into the
/// complex regime. The expectation overlay comes from the full recurrence.
fn drive_perturbed(spec: &FigureSpec, outdir: &Path) -> Result<Manifest, ExperimentError> {
    let ov = &spec.overrides;
    let (system, x0) = preset_setup(spec, 0, &SpectrumPreset::OneSmall)?;
    let eta = system.eta(SMALLEST);
    let mass = ov.mass.unwrap_or(0.9);
    let beta = ov.beta.unwrap_or_else(|| theory::optimal_beta(eta, mass) + 0.001);
    let iters = ov.iters.unwrap_or(100_000);
    let params = MomentumParams::new(mass, beta)?;
    let analysis = theory::analyze(eta, &params)?;

    let opts = RunOptions::new(iters).tracking(&[SMALLEST]);
    let mut idx = sub(spec, 2);
    let runs = paired_runs(&system, &x0, &opts, &[("kgsm", Method::Kgsm(params))], &mut idx, false);

    let e0 = systems::directional_error(&x0, &system, SMALLEST);
    let stride = runs[0].1.stride;
    let kacz_rows = kaczmarz_theory_rows(eta, e0, iters, stride);
    let kgsm_rows = kgsm_theory_rows(&analysis, e0, iters, stride);

    let mut em = Emitter::new(outdir, spec.id.as_str())?;
    for (label, trace) in &runs {
        em.trace(&format!("{label}.csv"), trace)?;
    }
    em.raw("theory_kaczmarz.csv", &expectation_csv(&kacz_rows))?;
    em.raw("theory_kgsm.csv", &expectation_csv(&kgsm_rows))?;

    let id = spec.id.as_str();
    let mut dir_plot = PlotSpec::new(
        &format!("{id}: oscillatory regime, smoothing past the boundary"),
        "iteration k",
        "|<x_k - x, v_20>|",
        YScale::Log10,
    );
    dir_plot.series.push(Series::line("kaczmarz", dir_series(&runs[0].1, SMALLEST)));
    dir_plot.series.push(Series::line("kgsm", dir_series(&runs[1].1, SMALLEST)));
    dir_plot.series.push(Series::dashed_line("kaczmarz expectation", rows_abs_series(&kacz_rows)));
    dir_plot.series.push(Series::dashed_line("kgsm expectation", rows_abs_series(&kgsm_rows)));
    em.svg(&format!("{id}_dir.svg"), &dir_plot)?;

    let mut params_json = json!({
        "spectrum": SpectrumPreset::OneSmall.name(),
        "rows": PRESET_ROWS,
        "cols": PRESET_COLS,
        "mass": mass,
        "beta": beta,
        "eta": eta,
        "regime": analysis.regime.name(),
        "iters": iters,
        "stride": stride,
        "e0": e0,
    });
    if analysis.regime == Regime::ComplexPair && e0 != 0.0 {
        let osc = theory::oscillation_params(&analysis, e0)?;
        params_json["flip_spacing"] = json!(osc.flip_spacing());
        params_json["theta"] = json!(osc.theta);
    }
    em.finish(spec.id.as_str(), spec.seed, params_json)
}

/// The boundary curve in the (M, beta) plane plus the four studied cells.
fn drive_boundary_map(spec: &FigureSpec, outdir: &Path) -> Result<Manifest, ExperimentError> {
    let eta = preset_eta_min(&SpectrumPreset::OneSmall)?;
    let mut curve = Vec::new();
    let mut m = 0.80f64;
    while m <= 0.9951 {
        let beta0 = 1.0 - eta / (1.0 - m.sqrt()).powi(2);
        curve.push((m, beta0));
        m += 0.0005;
    }

    let mut curve_csv = String::from("m,beta0\n");
    for &(m, b) in &curve {
        curve_csv.push_str(&format!("{m:.16e},{b:.16e}\n"));
    }

    let mut markers_csv = String::from("marker,m,beta,regime\n");
    let mut marker_series = Vec::new();
    let mut cells_json = Vec::new();
    for (name, shape, mass, beta) in CELLS {
        let analysis = theory::analyze(eta, &MomentumParams::new(mass, beta)?)?;
        markers_csv.push_str(&format!(
            "{name},{mass:.16e},{beta:.16e},{}\n",
            analysis.regime.name()
        ));
        marker_series.push(Series::scatter(
            &format!("{name} ({mass}, {beta})"),
            vec![(mass, beta)],
            shape,
        ));
        cells_json.push(json!({
            "marker": name, "mass": mass, "beta": beta, "regime": analysis.regime.name(),
        }));
    }

    let mut em = Emitter::new(outdir, spec.id.as_str())?;
    em.raw("boundary_curve.csv", &curve_csv)?;
    em.raw("markers.csv", &markers_csv)?;

    let mut map = PlotSpec::new(
        "fig04: regime boundary in the (M, beta) plane",
        "momentum M",
        "smoothing beta",
        YScale::Linear,
    );
    map.x_range = Some((0.80, 1.0));
    map.y_range = Some((0.92, 1.0));
    map.series.push(Series::line("boundary beta0(M)", curve.clone()));
    map.series.extend(marker_series);
    em.svg("fig04_plane.svg", &map)?;

    em.finish(spec.id.as_str(), spec.seed, json!({ "eta": eta, "cells": cells_json }))
}

enum CellPanels {
    /// One panel per cell: error along the smallest direction.
    Dir20,
    /// Two panels per cell: second-smallest direction and l2 error.
    V19AndL2,
}

/// Runs KGSM at each of the four studied (M, beta) cells on one shared
/// system, replaying one shared Kaczmarz index log.
fn drive_cells(
    spec: &FigureSpec,
    outdir: &Path,
    panels: CellPanels,
) -> Result<Manifest, ExperimentError> {
    let ov = &spec.overrides;
    let (system, x0) = preset_setup(spec, 0, &SpectrumPreset::OneSmall)?;
    let eta = system.eta(SMALLEST);
    let iters = ov.iters.unwrap_or(200_000);
    let tracked: &[usize] = match panels {
        CellPanels::Dir20 => &[SMALLEST],
        CellPanels::V19AndL2 => &[SMALLEST - 1, SMALLEST],
    };
    let opts = RunOptions::new(iters).tracking(tracked);

    let sampler = system.row_sampler();
    let mut idx = sub(spec, 2);
    let record = opts.clone().recording_indices();
    let kaczmarz = run(
        &system,
        &Method::Kaczmarz,
        &x0,
        &record,
        RowSource::Weighted { sampler: &sampler, stream: &mut idx },
    );
    let log = kaczmarz.index_log.clone().expect("recording was requested");

    let mut em = Emitter::new(outdir, spec.id.as_str())?;
    em.trace("kaczmarz.csv", &kaczmarz)?;

    let id = spec.id.as_str();
    let mut cells_json = Vec::new();
    for (name, _, mass, beta) in CELLS {
        let mass = ov.mass.unwrap_or(mass);
        let beta = ov.beta.unwrap_or(beta);
        let params = MomentumParams::new(mass, beta)?;
        let analysis = theory::analyze(eta, &params)?;
        let trace = run(&system, &Method::Kgsm(params), &x0, &opts, RowSource::Replay(&log));
        let csv_name = format!("{name}_kgsm.csv");
        em.trace(&csv_name, &trace)?;

        match panels {
            CellPanels::Dir20 => {
                let mut p = PlotSpec::new(
                    &format!("{id} [{name}]: (M, beta) = ({mass}, {beta})"),
                    "iteration k",
                    "|<x_k - x, v_20>|",
                    YScale::Log10,
                );
                p.series.push(Series::line("kaczmarz", dir_series(&kaczmarz, SMALLEST)));
                p.series.push(Series::line("kgsm", dir_series(&trace, SMALLEST)));
                em.svg(&format!("{id}_{name}.svg"), &p)?;
            }
            CellPanels::V19AndL2 => {
                let mut p19 = PlotSpec::new(
                    &format!("{id} [{name}]: second-smallest direction"),
                    "iteration k",
                    "|<x_k - x, v_19>|",
                    YScale::Log10,
                );
                p19.series.push(Series::line("kgsm", dir_series(&trace, SMALLEST - 1)));
                em.svg(&format!("{id}_{name}_v19.svg"), &p19)?;

                let mut pl2 = PlotSpec::new(
                    &format!("{id} [{name}]: l2 error"),
                    "iteration k",
                    "||x_k - x||",
                    YScale::Log10,
                );
                pl2.series.push(Series::line("kaczmarz", l2_series(&kaczmarz)));
                pl2.series.push(Series::line("kgsm", l2_series(&trace)));
                em.svg(&format!("{id}_{name}_l2.svg"), &pl2)?;
            }
        }

        cells_json.push(json!({
            "marker": name,
            "mass": mass,
            "beta": beta,
            "regime": analysis.regime.name(),
            "diverged_at": trace.divergence,
            "final_l2": trace.final_l2(),
        }));
    }

    em.finish(spec.id.as_str(), spec.seed,
        json!({
            "spectrum": SpectrumPreset::OneSmall.name(),
            "eta": eta,
            "iters": iters,
            "cells": cells_json,
        }),
    )
}

/// Quartile bands over repeated KGSM trials, one fresh system per trial.
fn drive_quartiles(spec: &FigureSpec, outdir: &Path) -> Result<Manifest, ExperimentError> {
    let ov = &spec.overrides;
    let preset = SpectrumPreset::Linear;
    let eta = preset_eta_min(&preset)?;
    let mass = ov.mass.unwrap_or(0.85);
    let beta = ov.beta.unwrap_or_else(|| theory::optimal_beta(eta, mass));
    let iters = ov.iters.unwrap_or(50_000);
    let trials = ov.trials.unwrap_or(100);
    let params = MomentumParams::new(mass, beta)?;

    let traces: Vec<IterationTrace> = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<IterationTrace, ExperimentError> {
            let base = 1_000 + 3 * t as u64;
            let mut sys_stream = sub(spec, base);
            let system =
                generate_preset_system(&preset, PRESET_ROWS, PRESET_COLS, &mut sys_stream)?;
            let x0 = sub(spec, base + 1).normal_vec(PRESET_COLS);
            let mut idx = sub(spec, base + 2);
            let sampler = system.row_sampler();
            let opts = RunOptions::new(iters).tracking(&[SMALLEST]);
            Ok(run(
                &system,
                &Method::Kgsm(params),
                &x0,
                &opts,
                RowSource::Weighted { sampler: &sampler, stream: &mut idx },
            ))
        })
        .collect::<Result<_, _>>()?;

    let dir_bands = quartile_bands(&traces, TraceMetric::Direction(SMALLEST))?;
    let l2_bands = quartile_bands(&traces, TraceMetric::L2)?;

    let mut em = Emitter::new(outdir, spec.id.as_str())?;
    em.raw("quartiles_dir20.csv", &quartiles_csv(&dir_bands))?;
    em.raw("quartiles_l2.csv", &quartiles_csv(&l2_bands))?;

    for (name, bands, ylab) in [
        ("fig07_dir.svg", &dir_bands, "|<x_k - x, v_20>|"),
        ("fig07_l2.svg", &l2_bands, "||x_k - x||"),
    ] {
        let k: Vec<f64> = bands.recorded_k.iter().map(|&v| v as f64).collect();
        let line = |vals: &[f64]| -> Vec<(f64, f64)> {
            thin(k.iter().copied().zip(vals.iter().copied()).collect())
        };
        let mut p = PlotSpec::new(
            &format!("fig07: quartiles over {trials} trials"),
            "iteration k",
            ylab,
            YScale::Log10,
        );
        p.series.push(Series::line("min", line(&bands.min)));
        p.series.push(Series::line("q1", line(&bands.q1)));
        p.series.push(Series::line("median", line(&bands.median)));
        p.series.push(Series::line("q3", line(&bands.q3)));
        p.series.push(Series::line("max", line(&bands.max)));
        em.svg(name, &p)?;
    }

    em.finish(spec.id.as_str(), spec.seed,
        json!({
            "spectrum": preset.name(),
            "mass": mass,
            "beta": beta,
            "eta": eta,
            "iters": iters,
            "trials": trials,
            "excluded_trials": dir_bands.excluded,
        }),
    )
}

/// Side-by-side directional and l2 panels for the oscillatory one-small
/// setting, numeric curves only.
fn drive_l2_compare(spec: &FigureSpec, outdir: &Path) -> Result<Manifest, ExperimentError> {
    let ov = &spec.overrides;
    let (system, x0) = preset_setup(spec, 0, &SpectrumPreset::OneSmall)?;
    let eta = system.eta(SMALLEST);
    let mass = ov.mass.unwrap_or(0.9);
    let beta = ov.beta.unwrap_or_else(|| theory::optimal_beta(eta, mass) + 0.001);
    let iters = ov.iters.unwrap_or(100_000);
    let params = MomentumParams::new(mass, beta)?;

    let opts = RunOptions::new(iters).tracking(&[SMALLEST]);
    let mut idx = sub(spec, 2);
    let runs = paired_runs(&system, &x0, &opts, &[("kgsm", Method::Kgsm(params))], &mut idx, false);

    let mut em = Emitter::new(outdir, spec.id.as_str())?;
    for (label, trace) in &runs {
        em.trace(&format!("{label}.csv"), trace)?;
    }

    let mut dir_plot = PlotSpec::new(
        "fig08: smallest-direction error",
        "iteration k",
        "|<x_k - x, v_20>|",
        YScale::Log10,
    );
    dir_plot.series.push(Series::line("kaczmarz", dir_series(&runs[0].1, SMALLEST)));
    dir_plot.series.push(Series::line("kgsm", dir_series(&runs[1].1, SMALLEST)));
    em.svg("fig08_dir.svg", &dir_plot)?;

    let mut l2_plot =
        PlotSpec::new("fig08: l2 error", "iteration k", "||x_k - x||", YScale::Log10);
    l2_plot.series.push(Series::line("kaczmarz", l2_series(&runs[0].1)));
    l2_plot.series.push(Series::line("kgsm", l2_series(&runs[1].1)));
    em.svg("fig08_l2.svg", &l2_plot)?;

    em.finish(spec.id.as_str(), spec.seed,
        json!({
            "spectrum": SpectrumPreset::OneSmall.name(),
            "mass": mass,
            "beta": beta,
            "eta": eta,
            "iters": iters,
        }),
    )
}

/// Two small directions: tracks both of them next to the l2 error.
fn drive_two_small(spec: &FigureSpec, outdir: &Path) -> Result<Manifest, ExperimentError> {
    let ov = &spec.overrides;
    let (system, x0) = preset_setup(spec, 0, &SpectrumPreset::TwoSmall)?;
    let eta = system.eta(SMALLEST);
    let mass = ov.mass.unwrap_or(0.9);
    let beta = ov.beta.unwrap_or_else(|| theory::optimal_beta(eta, mass) + 0.001);
    let iters = ov.iters.unwrap_or(100_000);
    let params = MomentumParams::new(mass, beta)?;

    let opts = RunOptions::new(iters).tracking(&[SMALLEST - 1, SMALLEST]);
    let mut idx = sub(spec, 2);
    let runs = paired_runs(&system, &x0, &opts, &[("kgsm", Method::Kgsm(params))], &mut idx, false);

    let mut em = Emitter::new(outdir, spec.id.as_str())?;
    for (label, trace) in &runs {
        em.trace(&format!("{label}.csv"), trace)?;
    }

    let mut dir_plot = PlotSpec::new(
        "fig09: both small directions",
        "iteration k",
        "|<x_k - x, v_l>|",
        YScale::Log10,
    );
    dir_plot.series.push(Series::line("kaczmarz v20", dir_series(&runs[0].1, SMALLEST)));
    dir_plot.series.push(Series::line("kgsm v20", dir_series(&runs[1].1, SMALLEST)));
    dir_plot
        .series
        .push(Series::line("kaczmarz v19", dir_series(&runs[0].1, SMALLEST - 1)));
    dir_plot.series.push(Series::line("kgsm v19", dir_series(&runs[1].1, SMALLEST - 1)));
    em.svg("fig09_dir.svg", &dir_plot)?;

    let mut l2_plot =
        PlotSpec::new("fig09: l2 error", "iteration k", "||x_k - x||", YScale::Log10);
    l2_plot.series.push(Series::line("kaczmarz", l2_series(&runs[0].1)));
    l2_plot.series.push(Series::line("kgsm", l2_series(&runs[1].1)));
    em.svg("fig09_l2.svg", &l2_plot)?;

    em.finish(spec.id.as_str(), spec.seed,
        json!({
            "spectrum": SpectrumPreset::TwoSmall.name(),
            "mass": mass,
            "beta": beta,
            "eta": eta,
            "iters": iters,
        }),
    )
}

/// Stride-1 sign studies for the two oscillatory settings. The CSVs carry
/// the signed error and its sign; flips land in the manifest.
fn drive_sign_study(spec: &FigureSpec, outdir: &Path) -> Result<Manifest, ExperimentError> {
    let ov = &spec.overrides;
    let (system, x0) = preset_setup(spec, 0, &SpectrumPreset::OneSmall)?;
    let eta = system.eta(SMALLEST);
    let iters = ov.iters.unwrap_or(100_000);
    let sampler = system.row_sampler();

    let beta_boundary = theory::optimal_beta(eta, 0.9);
    let cases: [(&str, f64, f64); 2] =
        [("perturbed", 0.9, beta_boundary + 0.001), ("complex_cell", 0.95, 0.992)];

    let mut em = Emitter::new(outdir, spec.id.as_str())?;
    let mut cases_json = Vec::new();
    for (c, (name, mass_default, beta_default)) in cases.into_iter().enumerate() {
        let mass = ov.mass.unwrap_or(mass_default);
        let beta = ov.beta.unwrap_or(beta_default);
        let params = MomentumParams::new(mass, beta)?;
        let analysis = theory::analyze(eta, &params)?;
        let mut idx = sub(spec, 10 + c as u64);
        let opts = RunOptions::new(iters).tracking(&[SMALLEST]).with_stride(1);
        let trace = run(
            &system,
            &Method::Kgsm(params),
            &x0,
            &opts,
            RowSource::Weighted { sampler: &sampler, stream: &mut idx },
        );
        let flips = sign_flip_events(&trace, SMALLEST)?;

        em.raw(&format!("{name}.csv"), &sign_csv(&trace, SMALLEST))?;
        if let Some(at) = trace.divergence {
            em.flag(&format!("{name}.csv"), at);
        }

        let mut err_plot = PlotSpec::new(
            &format!("fig_sign [{name}]: smallest-direction error"),
            "iteration k",
            "|<x_k - x, v_20>|",
            YScale::Log10,
        );
        err_plot.series.push(Series::line("kgsm", dir_series(&trace, SMALLEST)));
        em.svg(&format!("fig_sign_{name}_error.svg"), &err_plot)?;

        let sign_points: Vec<(f64, f64)> = thin(
            trace.recorded_k
                .iter()
                .zip(&trace.directional[&SMALLEST])
                .map(|(&k, &v)| {
                    (k as f64, if v > 0.0 { 1.0 } else if v < 0.0 { -1.0 } else { 0.0 })
                })
                .collect(),
        );
        let mut sign_plot = PlotSpec::new(
            &format!("fig_sign [{name}]: sign of the signed error"),
            "iteration k",
            "sign <x_k - x, v_20>",
            YScale::Linear,
        );
        sign_plot.y_range = Some((-1.5, 1.5));
        sign_plot.series.push(Series::line("sign", sign_points));
        em.svg(&format!("fig_sign_{name}_sign.svg"), &sign_plot)?;

        let mut case_json = json!({
            "case": name,
            "mass": mass,
            "beta": beta,
            "regime": analysis.regime.name(),
            "flip_count": flips.len(),
            "first_flips": flips.iter().take(8).collect::<Vec<_>>(),
        });
        if analysis.regime == Regime::ComplexPair {
            let e0 = systems::directional_error(&x0, &system, SMALLEST);
            if e0 != 0.0 {
                let osc = theory::oscillation_params(&analysis, e0)?;
                case_json["flip_spacing"] = json!(osc.flip_spacing());
            }
        }
        cases_json.push(case_json);
    }

    em.finish(spec.id.as_str(), spec.seed,
        json!({
            "spectrum": SpectrumPreset::OneSmall.name(),
            "eta": eta,
            "iters": iters,
            "stride": 1,
            "cases": cases_json,
        }),
    )
}

/// Elementary Gaussian example: uniform row choice, zero start, shared
/// index log, l2 error only.
fn drive_gauss(spec: &FigureSpec, outdir: &Path) -> Result<Manifest, ExperimentError> {
    let ov = &spec.overrides;
    let (m, n) = (60, 50);
    let mut sys_stream = sub(spec, 0);
    let system = generate_gaussian_system(m, n, &mut sys_stream)?;
    let x0 = vec![0.0; n];
    let mass = ov.mass.unwrap_or(0.8);
    let beta = ov.beta.unwrap_or(0.98);
    let iters = ov.iters.unwrap_or(15_000);
    let params = MomentumParams::new(mass, beta)?;

    let opts = RunOptions::new(iters);
    let mut idx = sub(spec, 2);
    let runs =
        paired_runs(&system, &x0, &opts, &[("kgsm", Method::Kgsm(params))], &mut idx, true);

    let mut em = Emitter::new(outdir, spec.id.as_str())?;
    for (label, trace) in &runs {
        em.trace(&format!("{label}.csv"), trace)?;
    }

    let mut p = PlotSpec::new(
        "gauss_a1: Gaussian system, uniform row choice",
        "iteration k",
        "||x_k - x||",
        YScale::Log10,
    );
    p.series.push(Series::line("kaczmarz", l2_series(&runs[0].1)));
    p.series.push(Series::line("kgsm", l2_series(&runs[1].1)));
    em.svg("gauss_a1_l2.svg", &p)?;

    em.finish(spec.id.as_str(), spec.seed,
        json!({
            "rows": m,
            "cols": n,
            "mass": mass,
            "beta": beta,
            "iters": iters,
            "sampling": "uniform",
            "final_l2": { "kaczmarz": runs[0].1.final_l2(), "kgsm": runs[1].1.final_l2() },
        }),
    )
}

/// Batch-1 heavy ball next to Kaczmarz and KGSM on two spectra, all three
/// replaying one index log per system.
pub fn hbm_comparison(spec: &FigureSpec, outdir: &Path) -> Result<Manifest, ExperimentError> {
    let ov = &spec.overrides;
    // Budgets sit where the plain method has shed one to two decades: heavy
    // ball halves the error exponent, so at these depths it stays within a
    // small factor of plain while the smoothed method separates by orders
    // of magnitude. Longer runs would let the doubled exponent compound
    // and bury that contrast.
    let parts: [(&str, SpectrumPreset, f64, usize); 2] = [
        ("onesmall", SpectrumPreset::OneSmall, 0.9, 60_000),
        ("linear", SpectrumPreset::Linear, 0.85, 5_000),
    ];
    let hbm_mass = 0.5;

    let mut em = Emitter::new(outdir, spec.id.as_str())?;
    let mut parts_json = Vec::new();
    for (p, (name, preset, kgsm_mass, default_iters)) in parts.into_iter().enumerate() {
        let base = 100 * p as u64;
        let (system, x0) = preset_setup(spec, base, &preset)?;
        let eta = system.eta(SMALLEST);
        let mass = ov.mass.unwrap_or(kgsm_mass);
        let beta = ov.beta.unwrap_or_else(|| theory::optimal_beta(eta, mass));
        let iters = ov.iters.unwrap_or(default_iters);
        let params = MomentumParams::new(mass, beta)?;

        let opts = RunOptions::new(iters).tracking(&[SMALLEST]);
        let mut idx = sub(spec, base + 2);
        let runs = paired_runs(
            &system,
            &x0,
            &opts,
            &[("kgsm", Method::Kgsm(params)), ("hbm", Method::HeavyBall { mass: hbm_mass })],
            &mut idx,
            false,
        );

        for (label, trace) in &runs {
            em.trace(&format!("{name}_{label}.csv"), trace)?;
        }

        let mut plot = PlotSpec::new(
            &format!("hbm_a2 [{name}]: l2 error of all three methods"),
            "iteration k",
            "||x_k - x||",
            YScale::Log10,
        );
        for (label, trace) in &runs {
            plot.series.push(Series::line(label, l2_series(trace)));
        }
        em.svg(&format!("hbm_a2_{name}.svg"), &plot)?;

        parts_json.push(json!({
            "system": name,
            "kgsm_mass": mass,
            "kgsm_beta": beta,
            "hbm_mass": hbm_mass,
            "eta": eta,
            "iters": iters,
            "final_l2": {
                "kaczmarz": runs[0].1.final_l2(),
                "kgsm": runs[1].1.final_l2(),
                "hbm": runs[2].1.final_l2(),
            },
        }));
    }

    em.finish(spec.id.as_str(), spec.seed, json!({ "parts": parts_json }))
}

/// Polynomial spectral decays with per-system momentum, l2 panels with the
/// expectation overlay along the smallest direction.
fn drive_spectra(spec: &FigureSpec, outdir: &Path) -> Result<Manifest, ExperimentError> {
    let ov = &spec.overrides;
    let parts: [(&str, SpectrumPreset, f64); 2] = [
        ("convex", SpectrumPreset::ConvexPoly, 0.95),
        ("concave", SpectrumPreset::ConcavePoly, 0.91),
    ];

    let mut em = Emitter::new(outdir, spec.id.as_str())?;
    let mut parts_json = Vec::new();
    for (p, (name, preset, default_mass)) in parts.into_iter().enumerate() {
        let base = 100 * p as u64;
        let (system, x0) = preset_setup(spec, base, &preset)?;
        let eta = system.eta(SMALLEST);
        let mass = ov.mass.unwrap_or(default_mass);
        let beta = ov.beta.unwrap_or_else(|| theory::optimal_beta(eta, mass));
        let iters = ov.iters.unwrap_or(100_000);
        let params = MomentumParams::new(mass, beta)?;
        let analysis = theory::analyze(eta, &params)?;

        let opts = RunOptions::new(iters).tracking(&[SMALLEST]);
        let mut idx = sub(spec, base + 2);
        let runs =
            paired_runs(&system, &x0, &opts, &[("kgsm", Method::Kgsm(params))], &mut idx, false);

        let e0 = systems::directional_error(&x0, &system, SMALLEST);
        let stride = runs[0].1.stride;
        let theory_rows = kgsm_theory_rows(&analysis, e0, iters, stride);

        for (label, trace) in &runs {
            em.trace(&format!("{name}_{label}.csv"), trace)?;
        }
        em.raw(&format!("{name}_theory.csv"), &expectation_csv(&theory_rows))?;

        let mut plot = PlotSpec::new(
            &format!("spectra_a3 [{name}]: l2 error with the expectation overlay"),
            "iteration k",
            "||x_k - x||",
            YScale::Log10,
        );
        plot.series.push(Series::line("kaczmarz", l2_series(&runs[0].1)));
        plot.series.push(Series::line("kgsm", l2_series(&runs[1].1)));
        plot.series
            .push(Series::dashed_line("kgsm expectation v20", rows_abs_series(&theory_rows)));
        em.svg(&format!("spectra_a3_{name}.svg"), &plot)?;

        parts_json.push(json!({
            "system": name,
            "spectrum": preset.name(),
            "mass": mass,
            "beta": beta,
            "eta": eta,
            "regime": analysis.regime.name(),
            "iters": iters,
        }));
    }

    em.finish(spec.id.as_str(), spec.seed, json!({ "parts": parts_json }))
}
