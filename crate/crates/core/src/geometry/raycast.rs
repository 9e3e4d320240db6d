use std::f64::consts::{PI, TAU};

use super::{MapSpec, Point, Pose, Segment, BEAM_COUNT, MAX_RANGE};

/// One full 360° sweep: beam `k` points at `omega − π + k·5°`.
#[derive(Debug, Clone, PartialEq)]
pub struct LaserScan {
    pub ranges: [f64; BEAM_COUNT],
}

impl LaserScan {
    pub fn min_range(&self) -> f64 {
        self.ranges.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Ranges divided by the sensor range, i.e. in `[0, 1]`.
    pub fn normalized(&self) -> Vec<f64> {
        self.ranges.iter().map(|r| r / MAX_RANGE).collect()
    }
}

pub fn beam_angle(omega: f64, beam_index: usize) -> f64 {
    omega - PI + beam_index as f64 * (TAU / BEAM_COUNT as f64)
}

fn cross(ax: f64, ay: f64, bx: f64, by: f64) -> f64 {
    ax * by - ay * bx
}

/// Distance along the ray `origin + t·(cos θ, sin θ)` to `segment`, if hit.
fn ray_segment(origin: Point, dx: f64, dy: f64, segment: &Segment) -> Option<f64> {
    let (ex, ey) = (segment.b.x - segment.a.x, segment.b.y - segment.a.y);
    let denom = cross(dx, dy, ex, ey);
    if denom.abs() < 1e-15 {
        return None;
    }
    let (wx, wy) = (segment.a.x - origin.x, segment.a.y - origin.y);
    let t = cross(wx, wy, ex, ey) / denom;
    let u = cross(wx, wy, dx, dy) / denom;
    (t >= 0.0 && (0.0..=1.0).contains(&u)).then_some(t)
}

/// Range reading of one beam, clipped to [`MAX_RANGE`].
pub fn raycast(map: &MapSpec, origin: &Pose, beam_index: usize) -> f64 {
    let theta = beam_angle(origin.omega(), beam_index);
    let (dx, dy) = (theta.cos(), theta.sin());
    let position = origin.position();
    map.segments
        .iter()
        .filter_map(|s| ray_segment(position, dx, dy, s))
        .fold(MAX_RANGE, f64::min)
}

pub fn scan(map: &MapSpec, pose: &Pose) -> LaserScan {
    let mut ranges = [0.0; BEAM_COUNT];
    for (k, r) in ranges.iter_mut().enumerate() {
        *r = raycast(map, pose, k);
    }
    LaserScan { ranges }
}

pub fn point_segment_distance(p: Point, s: &Segment) -> f64 {
    let (ex, ey) = (s.b.x - s.a.x, s.b.y - s.a.y);
    let len_sq = ex * ex + ey * ey;
    let t = if len_sq == 0.0 {
        0.0
    } else {
        (((p.x - s.a.x) * ex + (p.y - s.a.y) * ey) / len_sq).clamp(0.0, 1.0)
    };
    (p.x - (s.a.x + t * ex)).hypot(p.y - (s.a.y + t * ey))
}

/// True if a disk of `robot_radius` at the pose penetrates a wall (strictly
/// closer than the radius) or its center leaves the map bounds.
pub fn check_collision(map: &MapSpec, pose: &Pose, robot_radius: f64) -> bool {
    point_collides(map, pose.position(), robot_radius)
}

pub(crate) fn point_collides(map: &MapSpec, p: Point, radius: f64) -> bool {
    !map.contains(p)
        || map
            .segments
            .iter()
            .any(|s| point_segment_distance(p, s) < radius)
}
