use std::collections::HashMap;

use nalgebra::Vector3;

use crate::geometry::PointCloud;

/// Disjoint clusters plus noise; together they partition the input indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClusterSet {
    pub clusters: Vec<Vec<usize>>,
    pub noise: Vec<usize>,
}

type Cell = (i64, i64, i64);

struct Grid {
    eps: f64,
    cells: HashMap<Cell, Vec<usize>>,
}

impl Grid {
    fn new(points: &[Vector3<f64>], eps: f64) -> Self {
        let mut cells: HashMap<Cell, Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::cell(p, eps)).or_default().push(i);
        }
        Self { eps, cells }
    }

    fn cell(p: &Vector3<f64>, eps: f64) -> Cell {
        (
            (p.x / eps).floor() as i64,
            (p.y / eps).floor() as i64,
            (p.z / eps).floor() as i64,
        )
    }

    /// Neighbours within `eps` (inclusive of `i` itself), sorted by index.
    fn neighbours(&self, points: &[Vector3<f64>], i: usize) -> Vec<usize> {
        let (cx, cy, cz) = Self::cell(&points[i], self.eps);
        let mut out = Vec::new();
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(members) = self.cells.get(&(cx + dx, cy + dy, cz + dz)) {
                        out.extend(
                            members
                                .iter()
                                .copied()
                                .filter(|&j| (points[j] - points[i]).norm() <= self.eps),
                        );
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// Density-based clustering. Points are visited in index order, so border
/// points reachable from two clusters join the one discovered first.
pub fn dbscan_cluster(cloud: &PointCloud, eps: f64, min_pts: usize) -> ClusterSet {
    assert!(eps > 0.0 && min_pts >= 1, "dbscan needs eps > 0 and min_pts >= 1");
    let points: Vec<Vector3<f64>> = cloud.positions().collect();
    let n = points.len();
    let grid = Grid::new(&points, eps);
    const UNVISITED: usize = usize::MAX;
    const NOISE: usize = usize::MAX - 1;
    let mut label = vec![UNVISITED; n];
    let mut clusters: Vec<Vec<usize>> = Vec::new();

    for i in 0..n {
        if label[i] != UNVISITED {
            continue;
        }
        let seeds = grid.neighbours(&points, i);
        if seeds.len() < min_pts {
            label[i] = NOISE;
            continue;
        }
        let id = clusters.len();
        let mut members = vec![i];
        label[i] = id;
        let mut queue: std::collections::VecDeque<usize> = seeds.into_iter().filter(|&j| j != i).collect();
        while let Some(j) = queue.pop_front() {
            if label[j] == NOISE {
                label[j] = id;
                members.push(j);
                continue;
            }
            if label[j] != UNVISITED {
                continue;
            }
            label[j] = id;
            members.push(j);
            let nb = grid.neighbours(&points, j);
            if nb.len() >= min_pts {
                queue.extend(nb.into_iter().filter(|&k| label[k] == UNVISITED || label[k] == NOISE));
            }
        }
        members.sort_unstable();
        clusters.push(members);
    }
    // a core point can lose neighbours to an earlier cluster; undersized remnants become noise
    let mut noise: Vec<usize> = (0..n).filter(|&i| label[i] == NOISE).collect();
    let (kept, dropped): (Vec<_>, Vec<_>) = clusters.into_iter().partition(|c| c.len() >= min_pts);
    if !dropped.is_empty() {
        noise.extend(dropped.into_iter().flatten());
        noise.sort_unstable();
    }
    ClusterSet { clusters: kept, noise }
}
