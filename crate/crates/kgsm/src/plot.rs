//! Hand-emitted SVG line charts for the experiment drivers.
//!
//! Charts are static and self-contained: a fixed canvas, one polyline or
//! marker set per series, a legend, and a linear or log10 vertical axis.
//! No scripts, fonts, or external assets, so the files render anywhere and
//! diff cleanly between runs.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

/// Magnitudes at or below this are clipped before taking log10. Exact zeros
/// would otherwise have no image on a log axis.
pub const LOG_CLIP: f64 = 1e-320;

/// Widest span a log axis will show. Theory overlays can decay hundreds of
/// decades below the numeric floor; the axis follows the data only this far
/// and clamps deeper values to the bottom edge.
const MAX_DECADES: f64 = 24.0;

const WIDTH: f64 = 960.0;
const HEIGHT: f64 = 600.0;
const MARGIN_LEFT: f64 = 82.0;
const MARGIN_RIGHT: f64 = 250.0;
const MARGIN_TOP: f64 = 56.0;
const MARGIN_BOTTOM: f64 = 66.0;

const PALETTE: [&str; 6] =
    ["#1f77b4", "#d62728", "#2ca02c", "#7f3fbf", "#e07f00", "#6b4e3d"];

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("plot has no series")]
    NoSeries,
    #[error("series {0:?} has no drawable points")]
    EmptySeries(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum YScale {
    Linear,
    Log10,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum MarkerShape {
    Circle,
    Plus,
    Square,
    Triangle,
}

#[derive(Clone, Debug)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
    /// `Some` draws markers at the points instead of a polyline.
    pub marker: Option<MarkerShape>,
}

impl Series {
    pub fn line(label: &str, points: Vec<(f64, f64)>) -> Self {
        Series { label: label.to_string(), points, dashed: false, marker: None }
    }

    pub fn dashed_line(label: &str, points: Vec<(f64, f64)>) -> Self {
        Series { label: label.to_string(), points, dashed: true, marker: None }
    }

    pub fn scatter(label: &str, points: Vec<(f64, f64)>, shape: MarkerShape) -> Self {
        Series { label: label.to_string(), points, dashed: false, marker: Some(shape) }
    }
}

#[derive(Clone, Debug)]
pub struct PlotSpec {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub y_scale: YScale,
    /// Explicit axis windows in data units; `None` fits the data.
    pub x_range: Option<(f64, f64)>,
    pub y_range: Option<(f64, f64)>,
    pub series: Vec<Series>,
}

impl PlotSpec {
    pub fn new(title: &str, x_label: &str, y_label: &str, y_scale: YScale) -> Self {
        PlotSpec {
            title: title.to_string(),
            x_label: x_label.to_string(),
            y_label: y_label.to_string(),
            y_scale,
            x_range: None,
            y_range: None,
            series: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RenderStats {
    /// Zero or sub-1e-320 magnitudes clipped to the log floor.
    pub clipped: usize,
    /// Points dropped because a coordinate was NaN or infinite.
    pub dropped: usize,
}

fn esc(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

/// Largest step of the form {1,2,5}*10^p not exceeding `raw`.
fn nice_step(raw: f64) -> f64 {
    assert!(raw > 0.0 && raw.is_finite());
    let mag = 10f64.powf(raw.log10().floor());
    let frac = raw / mag;
    let base = if frac >= 5.0 {
        5.0
    } else if frac >= 2.0 {
        2.0
    } else {
        1.0
    };
    base * mag
}

fn format_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    if (1e-4..1e7).contains(&a) {
        // Trim trailing zeros from a plain decimal rendering.
        let s = format!("{v:.6}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        s.to_string()
    } else {
        format!("{v:e}")
    }
}

struct Transformed {
    label: String,
    dashed: bool,
    marker: Option<MarkerShape>,
    points: Vec<(f64, f64)>,
}

/// Renders the chart into an SVG document string.
pub fn render_svg(spec: &PlotSpec) -> Result<(String, RenderStats), PlotError> {
    if spec.series.is_empty() {
        return Err(PlotError::NoSeries);
    }
    let mut stats = RenderStats::default();

    // Transform every point into axis units (log10 of magnitude when the
    // axis is logarithmic) and drop what cannot be drawn.
    let mut transformed = Vec::with_capacity(spec.series.len());
    for s in &spec.series {
        let mut pts = Vec::with_capacity(s.points.len());
        for &(x, y) in &s.points {
            if !x.is_finite() || !y.is_finite() {
                stats.dropped += 1;
                continue;
            }
            let ty = match spec.y_scale {
                YScale::Linear => y,
                YScale::Log10 => {
                    let mut mag = y.abs();
                    if mag <= LOG_CLIP {
                        mag = LOG_CLIP;
                        stats.clipped += 1;
                    }
                    mag.log10()
                }
            };
            pts.push((x, ty));
        }
        if pts.is_empty() {
            return Err(PlotError::EmptySeries(s.label.clone()));
        }
        transformed.push(Transformed {
            label: s.label.clone(),
            dashed: s.dashed,
            marker: s.marker,
            points: pts,
        });
    }

    let all = transformed.iter().flat_map(|t| t.points.iter());
    let (mut x_lo, mut x_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_lo, mut y_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x_lo = x_lo.min(x);
        x_hi = x_hi.max(x);
        y_lo = y_lo.min(y);
        y_hi = y_hi.max(y);
    }
    if let Some((lo, hi)) = spec.x_range {
        x_lo = lo;
        x_hi = hi;
    }
    match (spec.y_range, spec.y_scale) {
        (Some((lo, hi)), YScale::Linear) => {
            y_lo = lo;
            y_hi = hi;
        }
        (Some((lo, hi)), YScale::Log10) => {
            y_lo = lo.abs().max(LOG_CLIP).log10();
            y_hi = hi.abs().max(LOG_CLIP).log10();
        }
        (None, YScale::Log10) => {
            // Follow the data, but never more than MAX_DECADES below the
            // top or below 1e0, whichever is lower; clipped floors
            // otherwise stretch the axis to -320, while growth panels
            // must keep their full span.
            y_lo = y_lo.max(y_hi.min(0.0) - MAX_DECADES);
        }
        (None, YScale::Linear) => {}
    }
    if x_hi <= x_lo {
        let pad = x_lo.abs().max(1.0) * 0.05;
        x_lo -= pad;
        x_hi += pad;
    }
    if y_hi <= y_lo {
        let pad = match spec.y_scale {
            YScale::Linear => y_lo.abs().max(1.0) * 0.05,
            YScale::Log10 => 0.5,
        };
        y_lo -= pad;
        y_hi += pad;
    }

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let px = |x: f64| MARGIN_LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w;
    let py = |y: f64| MARGIN_TOP + (y_hi - y) / (y_hi - y_lo) * plot_h;
    let clamp_x = |x: f64| x.clamp(x_lo, x_hi);
    let clamp_y = |y: f64| y.clamp(y_lo, y_hi);

    let mut svg = String::with_capacity(1 << 16);
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
    );
    let _ = writeln!(svg, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"#ffffff\"/>");
    let _ = writeln!(
        svg,
        "<text x=\"{:.1}\" y=\"30\" font-family=\"sans-serif\" font-size=\"18\" \
         text-anchor=\"middle\">{}</text>",
        MARGIN_LEFT + plot_w / 2.0,
        esc(&spec.title)
    );

    // Horizontal gridlines and y tick labels.
    match spec.y_scale {
        YScale::Log10 => {
            let span = y_hi - y_lo;
            let step = (span / 12.0).ceil().max(1.0);
            let mut d = (y_lo / step).ceil() * step;
            while d <= y_hi + 1e-9 {
                let y = py(d);
                let _ = writeln!(
                    svg,
                    "<line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" \
                     stroke=\"#dddddd\" stroke-width=\"1\" data-decade=\"{}\"/>",
                    MARGIN_LEFT,
                    MARGIN_LEFT + plot_w,
                    d as i64
                );
                let _ = writeln!(
                    svg,
                    "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"12\" \
                     text-anchor=\"end\">1e{}</text>",
                    MARGIN_LEFT - 8.0,
                    y + 4.0,
                    d as i64
                );
                d += step;
            }
        }
        YScale::Linear => {
            let step = nice_step((y_hi - y_lo) / 6.0);
            let mut t = (y_lo / step).ceil() * step;
            while t <= y_hi + step * 1e-9 {
                let y = py(t);
                let _ = writeln!(
                    svg,
                    "<line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" \
                     stroke=\"#dddddd\" stroke-width=\"1\"/>",
                    MARGIN_LEFT,
                    MARGIN_LEFT + plot_w
                );
                let _ = writeln!(
                    svg,
                    "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"12\" \
                     text-anchor=\"end\">{}</text>",
                    MARGIN_LEFT - 8.0,
                    y + 4.0,
                    esc(&format_tick(t))
                );
                t += step;
            }
        }
    }

    // Vertical gridlines and x tick labels.
    {
        let step = nice_step((x_hi - x_lo) / 6.0);
        let mut t = (x_lo / step).ceil() * step;
        while t <= x_hi + step * 1e-9 {
            let x = px(t);
            let _ = writeln!(
                svg,
                "<line x1=\"{x:.2}\" y1=\"{:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" \
                 stroke=\"#eeeeee\" stroke-width=\"1\"/>",
                MARGIN_TOP,
                MARGIN_TOP + plot_h
            );
            let _ = writeln!(
                svg,
                "<text x=\"{x:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"12\" \
                 text-anchor=\"middle\">{}</text>",
                MARGIN_TOP + plot_h + 18.0,
                esc(&format_tick(t))
            );
            t += step;
        }
    }

    // Frame.
    let _ = writeln!(
        svg,
        "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{plot_w:.1}\" height=\"{plot_h:.1}\" \
         fill=\"none\" stroke=\"#333333\" stroke-width=\"1\"/>",
        MARGIN_LEFT, MARGIN_TOP
    );

    // Axis labels.
    let _ = writeln!(
        svg,
        "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"14\" \
         text-anchor=\"middle\">{}</text>",
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 18.0,
        esc(&spec.x_label)
    );
    let _ = writeln!(
        svg,
        "<text x=\"20\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"14\" \
         text-anchor=\"middle\" transform=\"rotate(-90 20 {:.1})\">{}</text>",
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0,
        esc(&spec.y_label)
    );

    // Series.
    for (i, t) in transformed.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        match t.marker {
            None => {
                let mut attr = String::new();
                for &(x, y) in &t.points {
                    let _ = write!(attr, "{:.2},{:.2} ", px(clamp_x(x)), py(clamp_y(y)));
                }
                let dash = if t.dashed { " stroke-dasharray=\"7 4\"" } else { "" };
                let _ = writeln!(
                    svg,
                    "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" \
                     stroke-width=\"1.5\"{dash}/>",
                    attr.trim_end()
                );
            }
            Some(shape) => {
                for &(x, y) in &t.points {
                    draw_marker(&mut svg, shape, px(clamp_x(x)), py(clamp_y(y)), color);
                }
            }
        }
    }

    // Legend.
    let legend_x = MARGIN_LEFT + plot_w + 16.0;
    for (i, t) in transformed.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let y = MARGIN_TOP + 14.0 + 24.0 * i as f64;
        match t.marker {
            None => {
                let dash = if t.dashed { " stroke-dasharray=\"7 4\"" } else { "" };
                let _ = writeln!(
                    svg,
                    "<line x1=\"{legend_x:.1}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" \
                     stroke=\"{color}\" stroke-width=\"2\"{dash}/>",
                    legend_x + 28.0
                );
            }
            Some(shape) => draw_marker(&mut svg, shape, legend_x + 14.0, y, color),
        }
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"13\">{}</text>",
            legend_x + 36.0,
            y + 4.0,
            esc(&t.label)
        );
    }

    let _ = writeln!(
        svg,
        "<!-- clipped-to-{LOG_CLIP:e}: {}; dropped-non-finite: {} -->",
        stats.clipped, stats.dropped
    );
    svg.push_str("</svg>\n");
    Ok((svg, stats))
}

fn draw_marker(svg: &mut String, shape: MarkerShape, x: f64, y: f64, color: &str) {
    match shape {
        MarkerShape::Circle => {
            let _ = writeln!(svg, "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"5\" fill=\"{color}\"/>");
        }
        MarkerShape::Plus => {
            let _ = writeln!(
                svg,
                "<path d=\"M {:.2} {y:.2} H {:.2} M {x:.2} {:.2} V {:.2}\" \
                 stroke=\"{color}\" stroke-width=\"3\" fill=\"none\"/>",
                x - 6.0,
                x + 6.0,
                y - 6.0,
                y + 6.0
            );
        }
        MarkerShape::Square => {
            let _ = writeln!(
                svg,
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"10\" height=\"10\" fill=\"{color}\"/>",
                x - 5.0,
                y - 5.0
            );
        }
        MarkerShape::Triangle => {
            let _ = writeln!(
                svg,
                "<path d=\"M {x:.2} {:.2} L {:.2} {:.2} L {:.2} {:.2} Z\" fill=\"{color}\"/>",
                y - 6.0,
                x - 6.0,
                y + 5.0,
                x + 6.0,
                y + 5.0
            );
        }
    }
}

/// Renders and writes the chart to `path`.
pub fn write_svg(spec: &PlotSpec, path: &Path) -> Result<RenderStats, PlotError> {
    let (svg, stats) = render_svg(spec)?;
    fs::write(path, svg)?;
    Ok(stats)
}
