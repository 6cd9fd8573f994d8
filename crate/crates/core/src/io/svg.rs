//! Plain SVG figures drawn from CSV tables.

use std::fmt::Write as _;
use std::path::Path as FsPath;

use crate::error::{Error, Result};
use crate::sim::Path;

use super::csv::{Schema, Table};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 50.0;

/// Maps data coordinates into the plot box.
#[derive(Clone, Copy, Debug)]
struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn from_points<'a>(points: impl IntoIterator<Item = &'a [f64; 2]>) -> Frame {
        let mut f = Frame {
            x0: f64::INFINITY,
            x1: f64::NEG_INFINITY,
            y0: f64::INFINITY,
            y1: f64::NEG_INFINITY,
        };
        for p in points {
            f.x0 = f.x0.min(p[0]);
            f.x1 = f.x1.max(p[0]);
            f.y0 = f.y0.min(p[1]);
            f.y1 = f.y1.max(p[1]);
        }
        if !f.x0.is_finite() {
            f = Frame {
                x0: 0.0,
                x1: 1.0,
                y0: 0.0,
                y1: 1.0,
            };
        }
        if f.x1 - f.x0 < 1e-12 {
            f.x0 -= 0.5;
            f.x1 += 0.5;
        }
        if f.y1 - f.y0 < 1e-12 {
            f.y0 -= 0.5;
            f.y1 += 0.5;
        }
        f
    }

    /// Grows the shorter axis so one data unit is the same length on both.
    fn equal_aspect(mut self) -> Frame {
        let sx = (self.x1 - self.x0) / (WIDTH - 2.0 * MARGIN);
        let sy = (self.y1 - self.y0) / (HEIGHT - 2.0 * MARGIN);
        if sx > sy {
            let pad = (sx * (HEIGHT - 2.0 * MARGIN) - (self.y1 - self.y0)) / 2.0;
            self.y0 -= pad;
            self.y1 += pad;
        } else {
            let pad = (sy * (WIDTH - 2.0 * MARGIN) - (self.x1 - self.x0)) / 2.0;
            self.x0 -= pad;
            self.x1 += pad;
        }
        self
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - 2.0 * MARGIN)
    }

    fn point(&self, p: [f64; 2]) -> String {
        format!("{:.2},{:.2}", self.px(p[0]), self.py(p[1]))
    }
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="25" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
}

fn axes(out: &mut String, frame: &Frame, x_label: &str, y_label: &str) {
    let (l, r, t, b) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        out,
        r#"<rect x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        r - l,
        b - t
    );
    let text = |out: &mut String, x: f64, y: f64, anchor: &str, s: &str| {
        let _ = writeln!(
            out,
            r#"<text x="{x:.1}" y="{y:.1}" text-anchor="{anchor}" font-family="sans-serif" font-size="11">{}</text>"#,
            escape(s)
        );
    };
    text(out, l, b + 15.0, "start", &format!("{:.3}", frame.x0));
    text(out, r, b + 15.0, "end", &format!("{:.3}", frame.x1));
    text(out, l - 5.0, b, "end", &format!("{:.3}", frame.y0));
    text(out, l - 5.0, t + 10.0, "end", &format!("{:.3}", frame.y1));
    text(out, WIDTH / 2.0, HEIGHT - 12.0, "middle", x_label);
    text(out, 14.0, HEIGHT / 2.0, "middle", y_label);
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn polyline(out: &mut String, frame: &Frame, points: &[[f64; 2]], stroke: &str, width: f64) {
    if points.is_empty() {
        return;
    }
    let pts: Vec<String> = points.iter().map(|p| frame.point(*p)).collect();
    let _ = writeln!(
        out,
        r#"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="{width}"/>"#,
        pts.join(" ")
    );
}

fn column(table: &Table, name: &str) -> Result<Vec<f64>> {
    table.column(name).ok_or_else(|| Error::Schema {
        schema: table.schema.name().into(),
        reason: format!("missing column {name}"),
    })
}

fn wrong_schema(table: &Table, wanted: &str) -> Error {
    Error::Schema {
        schema: table.schema.name().into(),
        reason: format!("cannot draw a {wanted} from this table"),
    }
}

/// Learning curve from a per-seed or aggregate table. Aggregates get a
/// shaded one-standard-error band.
pub fn learning_curve_svg(table: &Table, title: &str) -> Result<String> {
    let (x, y, band) = match table.schema {
        Schema::LearningCurve => (column(table, "iteration")?, column(table, "policy_return")?, None),
        Schema::Aggregate => (
            column(table, "iteration")?,
            column(table, "mean_return")?,
            Some(column(table, "stderr_return")?),
        ),
        _ => return Err(wrong_schema(table, "learning curve")),
    };
    let line: Vec<[f64; 2]> = x.iter().zip(&y).map(|(a, b)| [*a, *b]).collect();
    let mut extent = line.clone();
    if let Some(se) = &band {
        extent.extend(
            line.iter()
                .zip(se)
                .flat_map(|(p, s)| [[p[0], p[1] - s], [p[0], p[1] + s]]),
        );
    }
    let frame = Frame::from_points(&extent);

    let mut out = String::new();
    header(&mut out, title);
    if let Some(se) = &band {
        let upper = line.iter().zip(se).map(|(p, s)| frame.point([p[0], p[1] + s]));
        let lower = line.iter().zip(se).rev().map(|(p, s)| frame.point([p[0], p[1] - s]));
        let pts: Vec<String> = upper.chain(lower).collect();
        if !pts.is_empty() {
            let _ = writeln!(
                out,
                r#"<polygon points="{}" fill="steelblue" fill-opacity="0.25" stroke="none"/>"#,
                pts.join(" ")
            );
        }
    }
    polyline(&mut out, &frame, &line, "steelblue", 1.5);
    axes(&mut out, &frame, "iteration", "return");
    out.push_str("</svg>\n");
    Ok(out)
}

/// Body path over the corridor, with dots where the high level decided.
pub fn trajectory_svg(table: &Table, path: &Path, title: &str) -> Result<String> {
    if !matches!(table.schema, Schema::Trajectory { .. }) {
        return Err(wrong_schema(table, "trajectory"));
    }
    let xs = column(table, "x_m")?;
    let ys = column(table, "y_m")?;
    let flags = column(table, "decision_flag")?;
    let body: Vec<[f64; 2]> = xs.iter().zip(&ys).map(|(a, b)| [*a, *b]).collect();

    let hw = path.half_width();
    let mut extent = body.clone();
    for w in path.waypoints() {
        extent.push([w[0] - hw, w[1] - hw]);
        extent.push([w[0] + hw, w[1] + hw]);
    }
    let frame = Frame::from_points(&extent).equal_aspect();
    let unit = (WIDTH - 2.0 * MARGIN) / (frame.x1 - frame.x0);

    let mut out = String::new();
    header(&mut out, title);
    let centre: Vec<String> = path.waypoints().iter().map(|w| frame.point(*w)).collect();
    let _ = writeln!(
        out,
        r#"<polyline points="{}" fill="none" stroke="lightgray" stroke-width="{:.2}" stroke-linejoin="round"/>"#,
        centre.join(" "),
        2.0 * hw * unit
    );
    polyline(&mut out, &frame, path.waypoints(), "gray", 1.0);
    polyline(&mut out, &frame, &body, "firebrick", 1.5);
    for (p, f) in body.iter().zip(&flags) {
        if *f != 0.0 {
            let _ = writeln!(
                out,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="black"/>"#,
                frame.px(p[0]),
                frame.py(p[1])
            );
        }
    }
    let goal = path.goal();
    let _ = writeln!(
        out,
        r#"<circle cx="{:.2}" cy="{:.2}" r="5" fill="none" stroke="green" stroke-width="2"/>"#,
        frame.px(goal[0]),
        frame.py(goal[1])
    );
    axes(&mut out, &frame, "x (m)", "y (m)");
    out.push_str("</svg>\n");
    Ok(out)
}

/// Arrows from the origin to each sweep displacement, with the first two
/// latent coordinates written beside the arrow head.
pub fn latent_field_svg(table: &Table, title: &str) -> Result<String> {
    let latent_dim = match table.schema {
        Schema::Sweep { latent_dim } => latent_dim,
        _ => return Err(wrong_schema(table, "latent field")),
    };
    let dx = column(table, "dx_m")?;
    let dy = column(table, "dy_m")?;
    let tips: Vec<[f64; 2]> = dx.iter().zip(&dy).map(|(a, b)| [*a, *b]).collect();
    let mut extent = tips.clone();
    extent.push([0.0, 0.0]);
    let frame = Frame::from_points(&extent).equal_aspect();

    let mut out = String::new();
    header(&mut out, title);
    let _ = writeln!(
        out,
        r#"<defs><marker id="head" markerWidth="6" markerHeight="6" refX="5" refY="3" orient="auto"><path d="M0,0 L6,3 L0,6 z" fill="navy"/></marker></defs>"#
    );
    for (i, tip) in tips.iter().enumerate() {
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="navy" stroke-width="1" marker-end="url(#head)"/>"#,
            frame.px(0.0),
            frame.py(0.0),
            frame.px(tip[0]),
            frame.py(tip[1])
        );
        if latent_dim > 0 {
            let label: Vec<String> = (0..latent_dim.min(2))
                .map(|j| format!("{:.2}", table.rows[i][j]))
                .collect();
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="8" fill="gray">{}</text>"#,
                frame.px(tip[0]) + 3.0,
                frame.py(tip[1]) - 3.0,
                label.join(",")
            );
        }
    }
    axes(&mut out, &frame, "dx (m)", "dy (m)");
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn write_svg(svg: &str, file: &FsPath) -> Result<()> {
    std::fs::write(file, svg).map_err(|e| Error::io(file, e))
}
