//! Small self-contained SVG 1.1 emitters.

use std::fmt::Write;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const W: f64 = 640.0;
const H: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_y: bool,
    pub series: Vec<Series>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScatterGroup {
    pub label: String,
    pub points: Vec<[f64; 2]>,
    pub radius: f64,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn header(out: &mut String, width: f64, height: f64) {
    let _ = writeln!(
        out,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" viewBox="0 0 {width} {height}">
<rect width="{width}" height="{height}" fill="white"/>"#
    );
}

/// Maps data coordinates into the plot frame.
struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn new(x: (f64, f64), y: (f64, f64)) -> Self {
        let widen = |(lo, hi): (f64, f64)| {
            if hi > lo {
                (lo, hi)
            } else {
                (lo - 0.5, hi + 0.5)
            }
        };
        Frame { x: widen(x), y: widen(y) }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (H - TOP - BOTTOM)
    }

    fn axes(&self, out: &mut String, title: &str, x_label: &str, y_label: &str, y_fmt: &dyn Fn(f64) -> String) {
        let (x0, x1, y0, y1) = (LEFT, W - RIGHT, H - BOTTOM, TOP);
        let _ = writeln!(
            out,
            r#"<g class="axes" stroke="black" stroke-width="1">
<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}"/>
<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}"/>
</g>"#
        );
        out.push_str("<g class=\"ticks\" font-family=\"sans-serif\" font-size=\"11\">\n");
        for i in 0..=4 {
            let t = i as f64 / 4.0;
            let xv = self.x.0 + t * (self.x.1 - self.x.0);
            let yv = self.y.0 + t * (self.y.1 - self.y.0);
            let (px, py) = (self.px(xv), self.py(yv));
            let _ = writeln!(
                out,
                r#"<line x1="{px:.2}" y1="{y0}" x2="{px:.2}" y2="{:.2}" stroke="black"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                y0 + 5.0,
                y0 + 18.0,
                short(xv)
            );
            let _ = writeln!(
                out,
                r#"<line x1="{:.2}" y1="{py:.2}" x2="{x0}" y2="{py:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
                x0 - 5.0,
                x0 - 8.0,
                py + 4.0,
                escape(&y_fmt(yv))
            );
        }
        out.push_str("</g>\n");
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="24" text-anchor="middle" font-family="sans-serif" font-size="15">{}</text>
<text x="{:.1}" y="{:.1}" text-anchor="middle" font-family="sans-serif" font-size="12">{}</text>
<text x="16" y="{:.1}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 16 {:.1})">{}</text>"#,
            (x0 + x1) / 2.0,
            escape(title),
            (x0 + x1) / 2.0,
            H - 12.0,
            escape(x_label),
            (y0 + y1) / 2.0,
            (y0 + y1) / 2.0,
            escape(y_label)
        );
    }
}

fn short(v: f64) -> String {
    if v == 0.0 || (v.abs() >= 1e-2 && v.abs() < 1e4) {
        format!("{}", (v * 1000.0).round() / 1000.0)
    } else {
        format!("{v:.1e}")
    }
}

fn span(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    values.fold(None, |acc, v| match acc {
        None => Some((v, v)),
        Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
    })
}

fn legend(out: &mut String, labels: &[&str], marker: &dyn Fn(usize, f64, f64) -> String) {
    out.push_str("<g class=\"legend\" font-family=\"sans-serif\" font-size=\"12\">\n");
    for (i, label) in labels.iter().enumerate() {
        let (x, y) = (W - RIGHT + 15.0, TOP + 10.0 + 20.0 * i as f64);
        let _ = writeln!(
            out,
            r#"{}<text x="{:.1}" y="{:.1}">{}</text>"#,
            marker(i, x, y),
            x + 26.0,
            y + 4.0,
            escape(label)
        );
    }
    out.push_str("</g>\n");
}

/// One `<polyline>` per series. With `log_y`, non-positive values are dropped and the
/// axis shows powers of ten.
pub fn render_line_svg(plot: &LinePlot) -> Result<String> {
    if plot.series.is_empty() {
        return Err(Error::invalid("line plot needs at least one series"));
    }
    let tf = |y: f64| if plot.log_y { y.log10() } else { y };
    let keep = |&&(x, y): &&(f64, f64)| x.is_finite() && y.is_finite() && (!plot.log_y || y > 0.0);
    let all = || plot.series.iter().flat_map(|s| s.points.iter().filter(keep));
    let xs = span(all().map(|p| p.0)).unwrap_or((0.0, 1.0));
    let ys = span(all().map(|p| tf(p.1))).unwrap_or((0.0, 1.0));
    let frame = Frame::new(xs, ys);
    let mut out = String::new();
    header(&mut out, W, H);
    let y_fmt = |v: f64| if plot.log_y { short(10f64.powf(v)) } else { short(v) };
    frame.axes(&mut out, &plot.title, &plot.x_label, &plot.y_label, &y_fmt);
    out.push_str("<g class=\"series\" fill=\"none\" stroke-width=\"1.5\">\n");
    for (i, s) in plot.series.iter().enumerate() {
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(keep)
            .map(|&(x, y)| format!("{:.2},{:.2}", frame.px(x), frame.py(tf(y))))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline stroke="{}" points="{}"><title>{}</title></polyline>"#,
            PALETTE[i % PALETTE.len()],
            pts.join(" "),
            escape(&s.label)
        );
    }
    out.push_str("</g>\n");
    let labels: Vec<&str> = plot.series.iter().map(|s| s.label.as_str()).collect();
    legend(&mut out, &labels, &|i, x, y| {
        format!(
            r#"<line x1="{x:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="{}" stroke-width="2"/>"#,
            x + 20.0,
            PALETTE[i % PALETTE.len()]
        )
    });
    out.push_str("</svg>\n");
    Ok(out)
}

/// Scatter plot over a fixed data box, one `<g class="group">` of circles per group.
pub fn render_scatter_svg(title: &str, x_range: (f64, f64), y_range: (f64, f64), groups: &[ScatterGroup]) -> String {
    let frame = Frame::new(x_range, y_range);
    let mut out = String::new();
    header(&mut out, W, H);
    frame.axes(&mut out, title, "x1", "x2", &short);
    for (i, g) in groups.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            out,
            r#"<g class="group" id="group{i}" fill="{color}"><title>{}</title>"#,
            escape(&g.label)
        );
        for p in &g.points {
            let _ = writeln!(
                out,
                r#"<circle cx="{:.2}" cy="{:.2}" r="{}"/>"#,
                frame.px(p[0]),
                frame.py(p[1]),
                g.radius
            );
        }
        out.push_str("</g>\n");
    }
    let labels: Vec<&str> = groups.iter().map(|g| g.label.as_str()).collect();
    legend(&mut out, &labels, &|i, x, y| {
        format!(
            r#"<circle cx="{:.1}" cy="{y:.1}" r="4" fill="{}"/>"#,
            x + 10.0,
            PALETTE[i % PALETTE.len()]
        )
    });
    out.push_str("</svg>\n");
    out
}

/// Every `[kh x kw]` kernel of a `[oc x ic x kh x kw]` weight tensor as a grayscale
/// tile, each tile rescaled to `[0, 255]` on its own range.
pub fn render_filter_grid_svg(weights: &Tensor, cell: usize) -> Result<String> {
    let [oc, ic, kh, kw] = match weights.shape() {
        &[a, b, c, d] => [a, b, c, d],
        s => return Err(Error::invalid(format!("filter grid expects a rank-4 tensor, got {s:?}"))),
    };
    let count = oc * ic;
    let cols = (count as f64).sqrt().ceil() as usize;
    let rows = count.div_ceil(cols);
    let (cell, gap) = (cell.max(1) as f64, 4.0);
    let (tile_w, tile_h) = (kw as f64 * cell, kh as f64 * cell);
    let width = gap + cols as f64 * (tile_w + gap);
    let height = gap + rows as f64 * (tile_h + gap);
    let mut out = String::new();
    header(&mut out, width, height);
    for (f, kernel) in weights.data().chunks_exact(kh * kw).enumerate() {
        let (lo, hi) = span(kernel.iter().copied()).expect("non-empty kernel");
        let (ox, oy) = (gap + (f % cols) as f64 * (tile_w + gap), gap + (f / cols) as f64 * (tile_h + gap));
        let _ = writeln!(out, r#"<g class="filter" id="filter{}_{}">"#, f / ic, f % ic);
        for (i, &v) in kernel.iter().enumerate() {
            let g = if hi > lo { ((v - lo) / (hi - lo) * 255.0).round() as u8 } else { 0 };
            let _ = writeln!(
                out,
                r#"<rect x="{:.1}" y="{:.1}" width="{cell}" height="{cell}" fill="rgb({g},{g},{g})"/>"#,
                ox + (i % kw) as f64 * cell,
                oy + (i / kw) as f64 * cell
            );
        }
        out.push_str("</g>\n");
    }
    out.push_str("</svg>\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(svg: &str) -> roxmltree::Document<'_> {
        roxmltree::Document::parse(svg).expect("well-formed svg")
    }

    #[test]
    fn line_plot_structure() {
        let plot = LinePlot {
            title: "loss & more".into(),
            x_label: "epoch".into(),
            y_label: "loss".into(),
            log_y: true,
            series: vec![
                Series {
                    label: "train".into(),
                    points: vec![(1.0, 1.0), (2.0, 0.1), (3.0, 0.01)],
                },
                Series {
                    label: "val".into(),
                    points: vec![(1.0, 2.0), (2.0, 0.0), (3.0, 0.5)],
                },
            ],
        };
        let svg = render_line_svg(&plot).unwrap();
        let doc = parse(&svg);
        let lines: Vec<_> = doc.descendants().filter(|n| n.has_tag_name("polyline")).collect();
        assert_eq!(lines.len(), 2);
        // the zero value is not representable on a log axis
        assert_eq!(lines[1].attribute("points").unwrap().split(' ').count(), 2);
        assert!(doc.descendants().any(|n| n.attribute("class") == Some("legend")));
        assert!(render_line_svg(&LinePlot { series: vec![], ..plot }).is_err());
    }

    #[test]
    fn scatter_structure() {
        let groups = vec![
            ScatterGroup {
                label: "surface".into(),
                points: vec![[0.0, 0.0], [0.1, 0.2]],
                radius: 1.0,
            },
            ScatterGroup {
                label: "class 1".into(),
                points: vec![[0.5, -0.5]],
                radius: 5.0,
            },
        ];
        let svg = render_scatter_svg("surface", (-0.5, 0.5), (-0.5, 0.5), &groups);
        let doc = parse(&svg);
        let g: Vec<_> = doc.descendants().filter(|n| n.attribute("class") == Some("group")).collect();
        assert_eq!(g.len(), 2);
        assert_eq!(g[0].children().filter(|c| c.has_tag_name("circle")).count(), 2);
    }

    #[test]
    fn filter_grid_normalization() {
        let w = Tensor::from_vec(vec![2, 1, 1, 3], vec![-1.0, 0.0, 1.0, 5.0, 5.0, 5.0]).unwrap();
        let svg = render_filter_grid_svg(&w, 10).unwrap();
        let doc = parse(&svg);
        let fills: Vec<_> = doc
            .descendants()
            .filter(|n| n.has_tag_name("rect") && n.parent().and_then(|p| p.attribute("class")) == Some("filter"))
            .map(|n| n.attribute("fill").unwrap().to_string())
            .collect();
        assert_eq!(fills[..3], ["rgb(0,0,0)", "rgb(128,128,128)", "rgb(255,255,255)"]);
        assert_eq!(fills.len(), 6);
        assert!(render_filter_grid_svg(&Tensor::zeros(&[2, 2]), 4).is_err());
    }
}
