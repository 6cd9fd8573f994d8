//! Corridor geometry and the plain-text path file format.
//!
//! ```text
//! # comment
//! half_width 0.35
//! 0.0 0.0
//! 1.2 0.4
//! ```

use std::fmt::Write as _;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

pub fn distance(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Polyline centerline with a half-width; the goal is the last waypoint.
#[derive(Clone, Debug, PartialEq)]
pub struct Path {
    waypoints: Vec<Point>,
    half_width: f64,
}

impl Path {
    pub fn new(waypoints: Vec<Point>, half_width: f64) -> Result<Self> {
        if waypoints.len() < 2 {
            return Err(Error::InvalidPath(format!(
                "need at least 2 waypoints, got {}",
                waypoints.len()
            )));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::InvalidPath(format!(
                "half_width must be positive, got {half_width}"
            )));
        }
        if waypoints.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidPath("non-finite waypoint".into()));
        }
        for (i, w) in waypoints.windows(2).enumerate() {
            if w[0] == w[1] {
                return Err(Error::InvalidPath(format!("waypoints {i} and {} coincide", i + 1)));
            }
        }
        Ok(Path { waypoints, half_width })
    }

    pub fn waypoints(&self) -> &[Point] {
        &self.waypoints
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn start(&self) -> Point {
        self.waypoints[0]
    }

    pub fn goal(&self) -> Point {
        self.waypoints[self.waypoints.len() - 1]
    }

    /// Direction of the first segment.
    pub fn initial_heading(&self) -> f64 {
        let [a, b] = [self.waypoints[0], self.waypoints[1]];
        (b[1] - a[1]).atan2(b[0] - a[0])
    }

    /// Centerline length.
    pub fn length(&self) -> f64 {
        self.waypoints.windows(2).map(|w| distance(w[0], w[1])).sum()
    }

    /// Largest achievable episode return: straight-line start-to-goal distance.
    pub fn progress_bound(&self) -> f64 {
        distance(self.start(), self.goal())
    }

    /// Minimum distance from `point` to the centerline.
    pub fn lateral_distance(&self, point: Point) -> f64 {
        self.waypoints
            .windows(2)
            .map(|w| point_segment_distance(point, w[0], w[1]))
            .fold(f64::INFINITY, f64::min)
    }

    /// Reflection about the line through the first waypoint along the
    /// initial heading.
    pub fn mirrored(&self) -> Path {
        let origin = self.start();
        let (s, c) = self.initial_heading().sin_cos();
        let waypoints = self
            .waypoints
            .iter()
            .map(|p| {
                let v = [p[0] - origin[0], p[1] - origin[1]];
                let along = v[0] * c + v[1] * s;
                let across = -v[0] * s + v[1] * c;
                // reflected: (along, -across) back in world frame
                [origin[0] + along * c + across * s, origin[1] + along * s - across * c]
            })
            .collect();
        Path {
            waypoints,
            half_width: self.half_width,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut half_width = None;
        let mut waypoints = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |what: &str| Error::InvalidPath(format!("line {}: {what}: '{raw}'", lineno + 1));
            let fields: Vec<&str> = line.split_whitespace().collect();
            if half_width.is_none() {
                match fields.as_slice() {
                    ["half_width", v] => {
                        half_width = Some(v.parse::<f64>().map_err(|_| bad("bad half_width"))?);
                    }
                    _ => return Err(bad("expected 'half_width <m>' first")),
                }
                continue;
            }
            match fields.as_slice() {
                [x, y] => {
                    let x = x.parse::<f64>().map_err(|_| bad("bad x"))?;
                    let y = y.parse::<f64>().map_err(|_| bad("bad y"))?;
                    waypoints.push([x, y]);
                }
                _ => return Err(bad("expected 'x y'")),
            }
        }
        let half_width = half_width.ok_or_else(|| Error::InvalidPath("missing half_width line".into()))?;
        Path::new(waypoints, half_width)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("half_width {}\n", self.half_width);
        for p in &self.waypoints {
            let _ = writeln!(out, "{} {}", p[0], p[1]);
        }
        out
    }
}

fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0);
    distance(p, [a[0] + t * ab[0], a[1] + t * ab[1]])
}

/// Distance to the centerline and whether the point is inside the corridor.
pub fn path_lateral_distance(point: Point, path: &Path) -> (f64, bool) {
    let d = path.lateral_distance(point);
    (d, d <= path.half_width)
}

const PATH1: &str = include_str!("../../data/path1.path");
const PATH2: &str = include_str!("../../data/path2.path");

/// Identifiers of the paths shipped with the crate.
pub const BUILTIN_PATHS: [&str; 2] = ["path1", "path2"];

/// Text of a shipped path.
pub fn builtin_path_text(id: &str) -> Option<&'static str> {
    match id {
        "path1" => Some(PATH1),
        "path2" => Some(PATH2),
        _ => None,
    }
}

/// Resolves a shipped path id or a path file on disk.
pub fn load_path(id_or_file: &str) -> Result<Path> {
    if let Some(text) = builtin_path_text(id_or_file) {
        return Path::parse(text);
    }
    let text = std::fs::read_to_string(id_or_file).map_err(|e| Error::io(id_or_file, e))?;
    Path::parse(&text)
}
