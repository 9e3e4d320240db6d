use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use super::Point;

/// Tolerance for "lies on the boundary" checks when validating maps.
const BOUNDARY_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum MapError {
    #[error("cannot read map file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid map: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub a: Point,
    pub b: Point,
}

impl Segment {
    pub const fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        Segment {
            a: Point::new(x1, y1),
            b: Point::new(x2, y2),
        }
    }

    pub fn length(&self) -> f64 {
        self.a.distance(self.b)
    }
}

/// A floorplan: an axis-aligned bounding box plus wall segments.
#[derive(Debug, Clone, PartialEq)]
pub struct MapSpec {
    pub name: String,
    pub width: f64,
    pub height: f64,
    pub segments: Vec<Segment>,
    /// Extra wall clearance (beyond the robot radius) required at spawn points.
    pub spawn_clearance: f64,
}

pub const DEFAULT_SPAWN_CLEARANCE: f64 = 0.1;

impl MapSpec {
    /// Axis-aligned closed room with no interior walls.
    pub fn empty_room(name: &str, width: f64, height: f64) -> Self {
        MapSpec {
            name: name.to_string(),
            width,
            height,
            segments: boundary_segments(width, height).to_vec(),
            spawn_clearance: DEFAULT_SPAWN_CLEARANCE,
        }
    }

    pub fn diagonal(&self) -> f64 {
        self.width.hypot(self.height)
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= 0.0 && p.x <= self.width && p.y >= 0.0 && p.y <= self.height
    }

    /// Parses the line-oriented map format.
    ///
    /// ```text
    /// bounds <width> <height> [closed]
    /// clearance <meters>            # optional
    /// wall <x1> <y1> <x2> <y2>
    /// ```
    pub fn parse(name: &str, text: &str) -> Result<MapSpec, MapError> {
        let mut bounds: Option<(f64, f64, bool)> = None;
        let mut segments = Vec::new();
        let mut clearance = DEFAULT_SPAWN_CLEARANCE;

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut tokens = line.split_whitespace();
            let keyword = tokens.next().unwrap_or_default();
            let rest: Vec<&str> = tokens.collect();
            let err = |message: String| MapError::Parse {
                line: line_no,
                message,
            };
            let numbers = |count: usize| -> Result<Vec<f64>, MapError> {
                if rest.len() < count {
                    return Err(err(format!(
                        "`{keyword}` expects {count} numbers, got {}",
                        rest.len()
                    )));
                }
                rest[..count]
                    .iter()
                    .map(|tok| {
                        tok.parse::<f64>()
                            .ok()
                            .filter(|v| v.is_finite())
                            .ok_or_else(|| err(format!("`{tok}` is not a finite number")))
                    })
                    .collect()
            };

            match keyword {
                "bounds" => {
                    if bounds.is_some() {
                        return Err(err("duplicate `bounds` header".into()));
                    }
                    if !segments.is_empty() {
                        return Err(err("`bounds` must precede all walls".into()));
                    }
                    let v = numbers(2)?;
                    let closed = match rest.get(2..) {
                        Some([]) | None => false,
                        Some(["closed"]) => true,
                        Some(extra) => {
                            return Err(err(format!("unexpected trailing tokens {extra:?}")))
                        }
                    };
                    bounds = Some((v[0], v[1], closed));
                }
                "wall" => {
                    if bounds.is_none() {
                        return Err(err("`wall` before `bounds` header".into()));
                    }
                    if rest.len() != 4 {
                        return Err(err(format!("`wall` expects 4 numbers, got {}", rest.len())));
                    }
                    let v = numbers(4)?;
                    segments.push(Segment::new(v[0], v[1], v[2], v[3]));
                }
                "clearance" => {
                    if rest.len() != 1 {
                        return Err(err("`clearance` expects 1 number".into()));
                    }
                    clearance = numbers(1)?[0];
                }
                other => return Err(err(format!("unknown directive `{other}`"))),
            }
        }

        let Some((width, height, closed)) = bounds else {
            return Err(MapError::Parse {
                line: text.lines().count().max(1),
                message: "missing `bounds` header".into(),
            });
        };
        if closed {
            let mut all = boundary_segments(width, height).to_vec();
            all.extend(segments);
            segments = all;
        }
        let map = MapSpec {
            name: name.to_string(),
            width,
            height,
            segments,
            spawn_clearance: clearance,
        };
        map.validate()?;
        Ok(map)
    }

    pub fn validate(&self) -> Result<(), MapError> {
        if !(self.width > 0.0 && self.width.is_finite()) {
            return Err(MapError::Invalid(format!("width must be > 0, got {}", self.width)));
        }
        if !(self.height > 0.0 && self.height.is_finite()) {
            return Err(MapError::Invalid(format!("height must be > 0, got {}", self.height)));
        }
        if !(self.spawn_clearance >= 0.0) {
            return Err(MapError::Invalid(format!(
                "spawn clearance must be >= 0, got {}",
                self.spawn_clearance
            )));
        }
        for (i, s) in self.segments.iter().enumerate() {
            for p in [s.a, s.b] {
                if p.x < -BOUNDARY_EPS
                    || p.x > self.width + BOUNDARY_EPS
                    || p.y < -BOUNDARY_EPS
                    || p.y > self.height + BOUNDARY_EPS
                {
                    return Err(MapError::Invalid(format!(
                        "wall {i} endpoint ({}, {}) lies outside [0,{}]x[0,{}]",
                        p.x, p.y, self.width, self.height
                    )));
                }
            }
            if s.length() == 0.0 {
                return Err(MapError::Invalid(format!("wall {i} has zero length")));
            }
        }
        for (side, covered) in ["bottom", "right", "top", "left"]
            .iter()
            .zip(self.boundary_coverage())
        {
            if !covered {
                return Err(MapError::Invalid(format!(
                    "boundary wall missing: {side} side is not fully walled (use `bounds ... closed`)"
                )));
            }
        }
        Ok(())
    }

    /// Whether each side (bottom, right, top, left) is fully covered by walls.
    fn boundary_coverage(&self) -> [bool; 4] {
        let (w, h) = (self.width, self.height);
        let on = |v: f64, target: f64| (v - target).abs() <= BOUNDARY_EPS;
        let mut out = [false; 4];
        // (side is horizontal, fixed coordinate, extent)
        let sides = [(true, 0.0, w), (false, w, h), (true, h, w), (false, 0.0, h)];
        for (k, &(horizontal, fixed, extent)) in sides.iter().enumerate() {
            let mut intervals: Vec<(f64, f64)> = self
                .segments
                .iter()
                .filter_map(|s| {
                    let (f1, f2, t1, t2) = if horizontal {
                        (s.a.y, s.b.y, s.a.x, s.b.x)
                    } else {
                        (s.a.x, s.b.x, s.a.y, s.b.y)
                    };
                    (on(f1, fixed) && on(f2, fixed)).then(|| (t1.min(t2), t1.max(t2)))
                })
                .collect();
            intervals.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut reach = 0.0;
            for (lo, hi) in intervals {
                if lo > reach + BOUNDARY_EPS {
                    break;
                }
                reach = f64::max(reach, hi);
            }
            out[k] = reach >= extent - BOUNDARY_EPS;
        }
        out
    }

    /// Serializes back to the text format (boundary walls written explicitly).
    pub fn to_text(&self) -> String {
        let mut out = format!("# {}\nbounds {} {}\n", self.name, self.width, self.height);
        if self.spawn_clearance != DEFAULT_SPAWN_CLEARANCE {
            let _ = writeln!(out, "clearance {}", self.spawn_clearance);
        }
        for s in &self.segments {
            let _ = writeln!(out, "wall {} {} {} {}", s.a.x, s.a.y, s.b.x, s.b.y);
        }
        out
    }

    /// Character-cell rendering; `#` marks cells touched by a wall.
    pub fn render_ascii(&self, columns: usize) -> String {
        let columns = columns.max(4);
        let cell = self.width / columns as f64;
        // Terminal cells are roughly twice as tall as wide.
        let rows = ((self.height / (2.0 * cell)).ceil() as usize).max(2);
        let cell_h = self.height / rows as f64;
        let mut out = String::new();
        for r in (0..rows).rev() {
            for c in 0..columns {
                let center = Point::new((c as f64 + 0.5) * cell, (r as f64 + 0.5) * cell_h);
                let half = 0.5 * cell.max(cell_h);
                let wall = self
                    .segments
                    .iter()
                    .any(|s| super::point_segment_distance(center, s) <= half);
                out.push(if wall { '#' } else { '.' });
            }
            out.push('\n');
        }
        out
    }
}

fn boundary_segments(width: f64, height: f64) -> [Segment; 4] {
    [
        Segment::new(0.0, 0.0, width, 0.0),
        Segment::new(width, 0.0, width, height),
        Segment::new(width, height, 0.0, height),
        Segment::new(0.0, height, 0.0, 0.0),
    ]
}

/// Reads and validates a map file; the map is named after the file stem.
pub fn load_map(path: impl AsRef<Path>) -> Result<MapSpec, MapError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| MapError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "map".to_string());
    MapSpec::parse(&name, &text)
}
