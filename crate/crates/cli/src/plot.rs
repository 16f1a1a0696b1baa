//! SVG figures for experiment artifacts.

use svg::node::element::path::Data;
use svg::node::element::{Circle, Group, Line, Path, Polyline, Rectangle, Text};
use svg::Document;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 640.0;
const MARGIN: f64 = 56.0;

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2"];

pub fn color(k: usize) -> &'static str {
    PALETTE[k % PALETTE.len()]
}

/// Affine map from a data window to the drawing area.
#[derive(Debug, Clone, Copy)]
pub struct Frame {
    pub x: (f64, f64),
    pub y: (f64, f64),
}

impl Frame {
    pub fn new(x: (f64, f64), y: (f64, f64)) -> Self {
        let pad = |(a, b): (f64, f64)| if b > a { (a, b) } else { (a - 0.5, a + 0.5) };
        Self { x: pad(x), y: pad(y) }
    }

    /// Smallest frame holding every point.
    pub fn fit<'a>(points: impl IntoIterator<Item = &'a (f64, f64)>) -> Self {
        let (mut x, mut y) = ((f64::INFINITY, f64::NEG_INFINITY), (f64::INFINITY, f64::NEG_INFINITY));
        for &(a, b) in points {
            x = (x.0.min(a), x.1.max(a));
            y = (y.0.min(b), y.1.max(b));
        }
        if !x.0.is_finite() {
            return Self::new((0.0, 1.0), (0.0, 1.0));
        }
        Self::new(x, y)
    }

    pub fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - 2.0 * MARGIN)
    }

    pub fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - 2.0 * MARGIN)
    }

    /// Pixels per data unit along x.
    pub fn scale_x(&self) -> f64 {
        (WIDTH - 2.0 * MARGIN) / (self.x.1 - self.x.0)
    }

    pub fn scale_y(&self) -> f64 {
        (HEIGHT - 2.0 * MARGIN) / (self.y.1 - self.y.0)
    }
}

fn label(x: f64, y: f64, text: &str, anchor: &str) -> Text {
    Text::new(text)
        .set("x", x)
        .set("y", y)
        .set("font-family", "sans-serif")
        .set("font-size", 12)
        .set("text-anchor", anchor)
}

fn tick(v: f64) -> String {
    if v == 0.0 || (1e-2..1e4).contains(&v.abs()) {
        format!("{:.3}", v).trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.1e}")
    }
}

/// Blank canvas with a boxed frame, ticks at the corners and axis labels.
pub fn canvas(frame: &Frame, title: &str, xlabel: &str, ylabel: &str) -> Document {
    let (x0, x1, y0, y1) = (frame.px(frame.x.0), frame.px(frame.x.1), frame.py(frame.y.0), frame.py(frame.y.1));
    let border = Rectangle::new()
        .set("x", x0)
        .set("y", y1)
        .set("width", x1 - x0)
        .set("height", y0 - y1)
        .set("fill", "none")
        .set("stroke", "black");
    Document::new()
        .set("viewBox", (0, 0, WIDTH, HEIGHT))
        .set("width", WIDTH)
        .set("height", HEIGHT)
        .add(Rectangle::new().set("width", WIDTH).set("height", HEIGHT).set("fill", "white"))
        .add(border)
        .add(label(WIDTH / 2.0, 24.0, title, "middle"))
        .add(label(WIDTH / 2.0, HEIGHT - 12.0, xlabel, "middle"))
        .add(label(14.0, HEIGHT / 2.0, ylabel, "middle").set("transform", format!("rotate(-90 14 {})", HEIGHT / 2.0)))
        .add(label(x0, y0 + 16.0, &tick(frame.x.0), "start"))
        .add(label(x1, y0 + 16.0, &tick(frame.x.1), "end"))
        .add(label(x0 - 4.0, y0, &tick(frame.y.0), "end"))
        .add(label(x0 - 4.0, y1 + 10.0, &tick(frame.y.1), "end"))
}

/// Scatter of discs `(x, y, radius_px)`.
pub fn discs(frame: &Frame, points: &[(f64, f64, f64)], fill: &str) -> Group {
    points.iter().fold(Group::new().set("fill", fill).set("fill-opacity", 0.6), |g, &(x, y, r)| {
        g.add(Circle::new().set("cx", frame.px(x)).set("cy", frame.py(y)).set("r", r))
    })
}

/// One polyline per series.
pub fn lines(frame: &Frame, series: &[Vec<(f64, f64)>]) -> Group {
    series.iter().enumerate().fold(Group::new().set("fill", "none"), |g, (k, s)| {
        let pts: Vec<String> = s.iter().map(|&(x, y)| format!("{:.2},{:.2}", frame.px(x), frame.py(y))).collect();
        g.add(Polyline::new().set("points", pts.join(" ")).set("stroke", color(k)).set("stroke-width", 1.2))
    })
}

pub fn hline(frame: &Frame, y: f64, stroke: &str) -> Line {
    Line::new()
        .set("x1", frame.px(frame.x.0))
        .set("x2", frame.px(frame.x.1))
        .set("y1", frame.py(y))
        .set("y2", frame.py(y))
        .set("stroke", stroke)
        .set("stroke-dasharray", "4 3")
}

/// Filled region given as horizontal runs `(y_lo, y_hi, x_lo, x_hi)`.
pub fn runs(frame: &Frame, spans: &[(f64, f64, f64, f64)], fill: &str) -> Path {
    let data = spans.iter().fold(Data::new(), |d, &(ylo, yhi, xlo, xhi)| {
        let (a, b) = (frame.px(xlo), frame.px(xhi));
        let (top, bottom) = (frame.py(yhi), frame.py(ylo));
        d.move_to((a, top)).line_to((b, top)).line_to((b, bottom)).line_to((a, bottom)).close()
    });
    Path::new().set("d", data).set("fill", fill).set("fill-opacity", 0.35)
}

/// Row-major boolean mask over `[-half_width, half_width]^2`, row index along y.
pub fn mask_runs(mask: &[bool], n: usize, half_width: f64) -> Vec<(f64, f64, f64, f64)> {
    let h = 2.0 * half_width / n as f64;
    let mut spans = Vec::new();
    for row in 0..n {
        let y0 = -half_width + row as f64 * h;
        let mut col = 0;
        while col < n {
            if mask[row * n + col] {
                let start = col;
                while col < n && mask[row * n + col] {
                    col += 1;
                }
                spans.push((y0, y0 + h, -half_width + start as f64 * h, -half_width + col as f64 * h));
            } else {
                col += 1;
            }
        }
    }
    spans
}
