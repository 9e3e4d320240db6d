use std::collections::VecDeque;

use super::raycast::point_collides;
use super::{MapSpec, Point};

/// Rasterized free space with 4-connected components.
///
/// A cell is free when a robot disk centered on the cell center does not
/// collide with any wall.
#[derive(Debug, Clone)]
pub struct OccupancyGrid {
    cell_size: f64,
    cols: usize,
    rows: usize,
    free: Vec<bool>,
    component: Vec<u32>,
}

const NO_COMPONENT: u32 = u32::MAX;

impl OccupancyGrid {
    pub const DEFAULT_CELL: f64 = 0.05;

    pub fn build(map: &MapSpec, robot_radius: f64, cell_size: f64) -> Self {
        let cols = (map.width / cell_size).ceil() as usize;
        let rows = (map.height / cell_size).ceil() as usize;
        let mut free = vec![false; cols * rows];
        for r in 0..rows {
            for c in 0..cols {
                let center = Point::new((c as f64 + 0.5) * cell_size, (r as f64 + 0.5) * cell_size);
                free[r * cols + c] = !point_collides(map, center, robot_radius);
            }
        }
        let mut grid = OccupancyGrid {
            cell_size,
            cols,
            rows,
            free,
            component: vec![NO_COMPONENT; cols * rows],
        };
        grid.label_components();
        grid
    }

    fn label_components(&mut self) {
        let mut next = 0;
        let mut queue = VecDeque::new();
        for start in 0..self.free.len() {
            if !self.free[start] || self.component[start] != NO_COMPONENT {
                continue;
            }
            self.component[start] = next;
            queue.push_back(start);
            while let Some(idx) = queue.pop_front() {
                for n in self.neighbors(idx) {
                    if self.free[n] && self.component[n] == NO_COMPONENT {
                        self.component[n] = next;
                        queue.push_back(n);
                    }
                }
            }
            next += 1;
        }
    }

    pub fn neighbors(&self, idx: usize) -> impl Iterator<Item = usize> {
        let (r, c) = (idx / self.cols, idx % self.cols);
        let (rows, cols) = (self.rows, self.cols);
        [
            (r > 0).then(|| idx - cols),
            (r + 1 < rows).then(|| idx + cols),
            (c > 0).then(|| idx - 1),
            (c + 1 < cols).then(|| idx + 1),
        ]
        .into_iter()
        .flatten()
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.cols, self.rows)
    }

    pub fn cell_of(&self, p: Point) -> Option<usize> {
        if p.x < 0.0 || p.y < 0.0 {
            return None;
        }
        let c = (p.x / self.cell_size) as usize;
        let r = (p.y / self.cell_size) as usize;
        (c < self.cols && r < self.rows).then(|| r * self.cols + c)
    }

    pub fn cell_center(&self, idx: usize) -> Point {
        let (r, c) = (idx / self.cols, idx % self.cols);
        Point::new(
            (c as f64 + 0.5) * self.cell_size,
            (r as f64 + 0.5) * self.cell_size,
        )
    }

    pub fn is_free(&self, idx: usize) -> bool {
        self.free[idx]
    }

    pub fn component(&self, idx: usize) -> Option<u32> {
        let label = self.component[idx];
        (label != NO_COMPONENT).then_some(label)
    }

    pub fn component_count(&self) -> usize {
        self.component
            .iter()
            .filter(|&&l| l != NO_COMPONENT)
            .max()
            .map_or(0, |&m| m as usize + 1)
    }

    /// Both points sit in free cells of the same component.
    pub fn connected(&self, a: Point, b: Point) -> bool {
        match (self.cell_of(a), self.cell_of(b)) {
            (Some(ca), Some(cb)) => {
                self.free[ca] && self.free[cb] && self.component[ca] == self.component[cb]
            }
            _ => false,
        }
    }

    /// BFS step distances from `goal` to every reachable cell.
    pub fn distance_field(&self, goal: usize) -> Vec<u32> {
        let mut dist = vec![u32::MAX; self.free.len()];
        if !self.free[goal] {
            return dist;
        }
        dist[goal] = 0;
        let mut queue = VecDeque::from([goal]);
        while let Some(idx) = queue.pop_front() {
            for n in self.neighbors(idx) {
                if self.free[n] && dist[n] == u32::MAX {
                    dist[n] = dist[idx] + 1;
                    queue.push_back(n);
                }
            }
        }
        dist
    }
}
