//! Spatial substrate: a regular cell lattice with Manhattan travel times and
//! the k-means region partition used by the hierarchical planner.
//!
//! The lattice stands in for a road network. Irregular geographies are
//! supported through a travel-time override matrix loaded from CSV; the
//! lattice geometry (centroids, neighborhoods) is kept either way.

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::incidents::IncidentTrace;
use crate::kmeans;

/// Index of a cell in its owning [`Grid`]; ids are dense `0..n`.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CellId(pub usize);

impl CellId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl std::fmt::Display for CellId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Cell {
    pub id: CellId,
    pub centroid_x_km: f64,
    pub centroid_y_km: f64,
}

/// Cell grid plus an `n x n` travel-time matrix in seconds.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Grid {
    rows: usize,
    cols: usize,
    cell_size_km: f64,
    cells: Vec<Cell>,
    /// Row-major `n*n` seconds; symmetric unless loaded from an override file.
    travel_seconds: Vec<f64>,
    overridden: bool,
}

/// Lattice grid with Manhattan centroid-to-centroid travel times.
pub fn build_grid(rows: usize, cols: usize, cell_size_km: f64, speed_kmh: f64) -> Result<Grid> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidArgument("grid dimensions must be positive".into()));
    }
    if !(cell_size_km > 0.0) || !cell_size_km.is_finite() {
        return Err(Error::InvalidArgument("cell size must be positive".into()));
    }
    if !(speed_kmh > 0.0) || !speed_kmh.is_finite() {
        return Err(Error::InvalidArgument("speed must be positive".into()));
    }
    let n = rows * cols;
    let mut cells = Vec::with_capacity(n);
    for r in 0..rows {
        for c in 0..cols {
            cells.push(Cell {
                id: CellId(r * cols + c),
                centroid_x_km: (c as f64 + 0.5) * cell_size_km,
                centroid_y_km: (r as f64 + 0.5) * cell_size_km,
            });
        }
    }
    let mut travel_seconds = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let dx = (cells[i].centroid_x_km - cells[j].centroid_x_km).abs();
            let dy = (cells[i].centroid_y_km - cells[j].centroid_y_km).abs();
            travel_seconds[i * n + j] = (dx + dy) / speed_kmh * 3600.0;
        }
    }
    Ok(Grid {
        rows,
        cols,
        cell_size_km,
        cells,
        travel_seconds,
        overridden: false,
    })
}

impl Grid {
    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cell_size_km(&self) -> f64 {
        self.cell_size_km
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn contains(&self, id: CellId) -> bool {
        id.0 < self.cells.len()
    }

    pub fn centroid(&self, id: CellId) -> (f64, f64) {
        let c = &self.cells[id.0];
        (c.centroid_x_km, c.centroid_y_km)
    }

    /// Checked travel-time lookup.
    pub fn travel_time(&self, from: CellId, to: CellId) -> Result<f64> {
        let n = self.n_cells();
        if from.0 >= n || to.0 >= n {
            return Err(Error::OutOfRange(format!(
                "cell ids ({from}, {to}) for a {n}-cell grid"
            )));
        }
        Ok(self.travel_seconds[from.0 * n + to.0])
    }

    /// Unchecked travel-time lookup for hot paths; panics on invalid ids.
    #[inline]
    pub fn travel(&self, from: CellId, to: CellId) -> f64 {
        let n = self.n_cells();
        self.travel_seconds[from.0 * n + to.0]
    }

    /// Euclidean centroid distance in km.
    pub fn centroid_distance_km(&self, a: CellId, b: CellId) -> f64 {
        let (ax, ay) = self.centroid(a);
        let (bx, by) = self.centroid(b);
        ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt()
    }

    /// Lattice 4-neighborhood (up, down, left, right), ascending index.
    pub fn neighbors4(&self, id: CellId) -> Vec<CellId> {
        let r = id.0 / self.cols;
        let c = id.0 % self.cols;
        let mut out = Vec::with_capacity(4);
        if r > 0 {
            out.push(CellId(id.0 - self.cols));
        }
        if c > 0 {
            out.push(CellId(id.0 - 1));
        }
        if c + 1 < self.cols {
            out.push(CellId(id.0 + 1));
        }
        if r + 1 < self.rows {
            out.push(CellId(id.0 + self.cols));
        }
        out
    }

    /// Cells within `steps` Manhattan lattice steps of `id`, ascending index.
    pub fn manhattan_ball(&self, id: CellId, steps: usize) -> Vec<CellId> {
        let r0 = (id.0 / self.cols) as isize;
        let c0 = (id.0 % self.cols) as isize;
        let s = steps as isize;
        let mut out = Vec::new();
        for r in (r0 - s).max(0)..=(r0 + s).min(self.rows as isize - 1) {
            for c in (c0 - s).max(0)..=(c0 + s).min(self.cols as isize - 1) {
                if (r - r0).abs() + (c - c0).abs() <= s {
                    out.push(CellId((r * self.cols as isize + c) as usize));
                }
            }
        }
        out
    }

    /// Position along the x-then-y Manhattan path between two centroids after
    /// covering `frac` of its length, snapped to the nearest cell centroid.
    /// Exact ties snap toward the origin end of the path.
    pub fn interpolate_manhattan(&self, from: CellId, to: CellId, frac: f64) -> CellId {
        if from == to {
            return from;
        }
        let f = frac.clamp(0.0, 1.0);
        let (x0, y0) = self.centroid(from);
        let (x1, y1) = self.centroid(to);
        let dx = x1 - x0;
        let dy = y1 - y0;
        let total = dx.abs() + dy.abs();
        let d = f * total;
        let (px, py) = if d <= dx.abs() {
            (x0 + dx.signum() * d, y0)
        } else {
            (x1, y0 + dy.signum() * (d - dx.abs()))
        };
        let mut best = from;
        let mut best_d = f64::INFINITY;
        let mut best_origin_d = f64::INFINITY;
        for cell in &self.cells {
            let dd = (cell.centroid_x_km - px).powi(2) + (cell.centroid_y_km - py).powi(2);
            let od = (cell.centroid_x_km - x0).powi(2) + (cell.centroid_y_km - y0).powi(2);
            if dd + 1e-12 < best_d || (dd <= best_d + 1e-12 && od < best_origin_d) {
                best_d = dd.min(best_d);
                best_origin_d = od;
                best = cell.id;
            }
        }
        best
    }

    /// Replace the travel matrix from a headerless `n x n` CSV of seconds.
    pub fn load_travel_override<R: Read>(&mut self, reader: R) -> Result<()> {
        let n = self.n_cells();
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut matrix = Vec::with_capacity(n * n);
        let mut rows = 0usize;
        for record in rdr.records() {
            let record = record?;
            if record.len() != n {
                return Err(Error::InvalidArgument(format!(
                    "travel override row {rows} has {} columns, expected {n}",
                    record.len()
                )));
            }
            for field in record.iter() {
                let v: f64 = field.parse().map_err(|_| {
                    Error::InvalidArgument(format!("non-numeric travel entry '{field}'"))
                })?;
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "travel entries must be finite and >= 0, got {v}"
                    )));
                }
                matrix.push(v);
            }
            rows += 1;
        }
        if rows != n {
            return Err(Error::InvalidArgument(format!(
                "travel override has {rows} rows, expected {n}"
            )));
        }
        for i in 0..n {
            if matrix[i * n + i] != 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "travel override diagonal entry {i} must be 0"
                )));
            }
        }
        self.travel_seconds = matrix;
        self.overridden = true;
        Ok(())
    }

    pub fn is_overridden(&self) -> bool {
        self.overridden
    }
}

/// Assignment of every cell to one of `k` regions.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RegionPartition {
    region_of: Vec<usize>,
    region_centroids: Vec<(f64, f64)>,
    k: usize,
}

impl RegionPartition {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn region_of(&self, cell: CellId) -> usize {
        self.region_of[cell.0]
    }

    pub fn region_centroids(&self) -> &[(f64, f64)] {
        &self.region_centroids
    }

    pub fn cells_in_region(&self, region: usize) -> Vec<CellId> {
        self.region_of
            .iter()
            .enumerate()
            .filter(|(_, &r)| r == region)
            .map(|(i, _)| CellId(i))
            .collect()
    }

    pub fn assignments(&self) -> &[usize] {
        &self.region_of
    }
}

fn assign_to_nearest(grid: &Grid, centroids: &[(f64, f64)]) -> Vec<usize> {
    grid.cells()
        .iter()
        .map(|cell| {
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (r, &(cx, cy)) in centroids.iter().enumerate() {
                let d = (cell.centroid_x_km - cx).powi(2) + (cell.centroid_y_km - cy).powi(2);
                if d + 1e-15 < best_d {
                    best_d = d;
                    best = r;
                }
            }
            best
        })
        .collect()
}

/// k-means region decomposition over historical incident locations.
///
/// Points are one `(x, y)` sample per incident (its cell's centroid), so
/// dense areas end up with smaller regions. With an empty trace, cell
/// centroids are clustered instead. Regions that capture no cell after the
/// nearest-centroid assignment are repaired by donating the farthest cell of
/// the largest region and moving the empty region's centroid onto it.
pub fn partition_regions(
    grid: &Grid,
    trace: &IncidentTrace,
    k: usize,
    seed: u64,
    max_iters: usize,
) -> Result<RegionPartition> {
    let n = grid.n_cells();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k must be in 1..={n}, got {k}")));
    }
    let points: Vec<Vec<f64>> = if trace.incidents.is_empty() {
        grid.cells()
            .iter()
            .map(|c| vec![c.centroid_x_km, c.centroid_y_km])
            .collect()
    } else {
        let mut occupied: std::collections::BTreeSet<usize> = std::collections::BTreeSet::new();
        for inc in &trace.incidents {
            if !grid.contains(inc.cell) {
                return Err(Error::OutOfRange(format!(
                    "incident {} references cell {} outside the grid",
                    inc.id, inc.cell
                )));
            }
            occupied.insert(inc.cell.0);
        }
        if k > occupied.len() {
            return Err(Error::InvalidArgument(format!(
                "k={k} exceeds the {} cells with incidents",
                occupied.len()
            )));
        }
        trace
            .incidents
            .iter()
            .map(|inc| {
                let (x, y) = grid.centroid(inc.cell);
                vec![x, y]
            })
            .collect()
    };

    let km = kmeans::kmeans(&points, k, seed, max_iters)?;
    let mut centroids: Vec<(f64, f64)> = km.centroids.iter().map(|c| (c[0], c[1])).collect();
    let mut region_of = assign_to_nearest(grid, &centroids);

    // Empty-region repair: donate the farthest cell of the largest region.
    for _ in 0..4 * k {
        let mut counts = vec![0usize; k];
        for &r in &region_of {
            counts[r] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            break;
        };
        let largest = (0..k).max_by_key(|&r| (counts[r], std::cmp::Reverse(r))).unwrap();
        let (lx, ly) = centroids[largest];
        let donor = grid
            .cells()
            .iter()
            .filter(|c| region_of[c.id.0] == largest)
            .max_by(|a, b| {
                let da = (a.centroid_x_km - lx).powi(2) + (a.centroid_y_km - ly).powi(2);
                let db = (b.centroid_x_km - lx).powi(2) + (b.centroid_y_km - ly).powi(2);
                da.partial_cmp(&db)
                    .unwrap()
                    .then(b.id.0.cmp(&a.id.0))
            })
            .unwrap()
            .id;
        centroids[empty] = grid.centroid(donor);
        region_of = assign_to_nearest(grid, &centroids);
    }

    Ok(RegionPartition {
        region_of,
        region_centroids: centroids,
        k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::incidents::{Incident, IncidentTrace};

    fn trace_from(cells: &[usize], horizon_hours: f64) -> IncidentTrace {
        let incidents = cells
            .iter()
            .enumerate()
            .map(|(i, &c)| Incident {
                id: i as u64,
                cell: CellId(c),
                time_s: i as f64,
                service_s: 60.0,
            })
            .collect();
        IncidentTrace {
            incidents,
            horizon_hours,
        }
    }

    #[test]
    fn single_cell_grid() {
        let g = build_grid(1, 1, 1.0, 60.0).unwrap();
        assert_eq!(g.n_cells(), 1);
        assert_eq!(g.travel_time(CellId(0), CellId(0)).unwrap(), 0.0);
    }

    #[test]
    fn one_km_at_60_kmh_is_60_seconds() {
        let g = build_grid(1, 2, 1.0, 60.0).unwrap();
        assert!((g.travel_time(CellId(0), CellId(1)).unwrap() - 60.0).abs() < 1e-9);
    }

    #[test]
    fn corner_to_corner_manhattan() {
        // 3x3 at 2 km cells, 40 km/h: (4+4) km / 40 km/h = 720 s
        let g = build_grid(3, 3, 2.0, 40.0).unwrap();
        assert!((g.travel_time(CellId(0), CellId(8)).unwrap() - 720.0).abs() < 1e-9);
    }

    #[test]
    fn invalid_arguments_rejected() {
        assert!(build_grid(0, 3, 1.0, 60.0).is_err());
        assert!(build_grid(3, 3, 0.0, 60.0).is_err());
        assert!(build_grid(3, 3, 1.0, -1.0).is_err());
    }

    #[test]
    fn travel_identity_and_out_of_range() {
        let g = build_grid(2, 2, 1.0, 30.0).unwrap();
        assert_eq!(g.travel_time(CellId(3), CellId(3)).unwrap(), 0.0);
        assert!(g.travel_time(CellId(0), CellId(4)).is_err());
    }

    #[test]
    fn override_matrix_passthrough() {
        let mut g = build_grid(1, 2, 1.0, 60.0).unwrap();
        let csv = "0,123.5\n7.25,0\n";
        g.load_travel_override(csv.as_bytes()).unwrap();
        assert_eq!(g.travel_time(CellId(0), CellId(1)).unwrap(), 123.5);
        assert_eq!(g.travel_time(CellId(1), CellId(0)).unwrap(), 7.25);
        assert!(g.is_overridden());
    }

    #[test]
    fn override_rejects_bad_shapes() {
        let mut g = build_grid(1, 2, 1.0, 60.0).unwrap();
        assert!(g.load_travel_override("0,1\n".as_bytes()).is_err());
        let mut g2 = build_grid(1, 2, 1.0, 60.0).unwrap();
        assert!(g2.load_travel_override("0,1\n2,3\n".as_bytes()).is_err()); // nonzero diagonal
        let mut g3 = build_grid(1, 2, 1.0, 60.0).unwrap();
        assert!(g3.load_travel_override("0,-1\n1,0\n".as_bytes()).is_err());
    }

    #[test]
    fn triangle_inequality_on_lattice() {
        let g = build_grid(4, 5, 1.5, 50.0).unwrap();
        let n = g.n_cells();
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    let ab = g.travel(CellId(a), CellId(b));
                    let bc = g.travel(CellId(b), CellId(c));
                    let ac = g.travel(CellId(a), CellId(c));
                    assert!(ac <= ab + bc + 1e-9);
                }
            }
        }
    }

    #[test]
    fn empty_trace_single_region() {
        let g = build_grid(2, 3, 1.0, 60.0).unwrap();
        let t = trace_from(&[], 24.0);
        let p = partition_regions(&g, &t, 1, 0, 50).unwrap();
        assert!(p.assignments().iter().all(|&r| r == 0));
    }

    #[test]
    fn two_separated_cells_two_regions() {
        let g = build_grid(1, 2, 1.0, 60.0).unwrap();
        let t = trace_from(&[0, 1, 0, 1], 24.0);
        let p = partition_regions(&g, &t, 2, 0, 50).unwrap();
        assert_ne!(p.region_of(CellId(0)), p.region_of(CellId(1)));
    }

    #[test]
    fn corners_split_matches_exhaustive_kmeans() {
        // 100 incidents split between opposite corners of a 3x3 grid.
        let g = build_grid(3, 3, 1.0, 60.0).unwrap();
        let mut cells = Vec::new();
        for i in 0..100 {
            cells.push(if i % 2 == 0 { 0 } else { 8 });
        }
        let t = trace_from(&cells, 24.0);
        let p = partition_regions(&g, &t, 2, 1, 100).unwrap();

        // Brute-force oracle: run Lloyd's to convergence from every pair of
        // distinct cell centroids, keep the best final WCSS, and derive the
        // cell partition it induces.
        let pts: Vec<(f64, f64)> = t.incidents.iter().map(|i| g.centroid(i.cell)).collect();
        let mut best: Option<(f64, Vec<usize>)> = None;
        for a in 0..9 {
            for b in (a + 1)..9 {
                let mut cents = [g.centroid(CellId(a)), g.centroid(CellId(b))];
                for _ in 0..100 {
                    let mut sums = [(0.0, 0.0); 2];
                    let mut counts = [0usize; 2];
                    for &(x, y) in &pts {
                        let d0 = (x - cents[0].0).powi(2) + (y - cents[0].1).powi(2);
                        let d1 = (x - cents[1].0).powi(2) + (y - cents[1].1).powi(2);
                        let c = if d0 <= d1 { 0 } else { 1 };
                        sums[c].0 += x;
                        sums[c].1 += y;
                        counts[c] += 1;
                    }
                    let mut new = cents;
                    for c in 0..2 {
                        if counts[c] > 0 {
                            new[c] = (sums[c].0 / counts[c] as f64, sums[c].1 / counts[c] as f64);
                        }
                    }
                    if new == cents {
                        break;
                    }
                    cents = new;
                }
                let wcss: f64 = pts
                    .iter()
                    .map(|&(x, y)| {
                        let d0 = (x - cents[0].0).powi(2) + (y - cents[0].1).powi(2);
                        let d1 = (x - cents[1].0).powi(2) + (y - cents[1].1).powi(2);
                        d0.min(d1)
                    })
                    .sum();
                let assign: Vec<usize> = (0..9)
                    .map(|i| {
                        let (x, y) = g.centroid(CellId(i));
                        let d0 = (x - cents[0].0).powi(2) + (y - cents[0].1).powi(2);
                        let d1 = (x - cents[1].0).powi(2) + (y - cents[1].1).powi(2);
                        if d0 <= d1 {
                            0
                        } else {
                            1
                        }
                    })
                    .collect();
                if best.as_ref().map_or(true, |(w, _)| wcss < *w) {
                    best = Some((wcss, assign));
                }
            }
        }
        let (_, oracle) = best.unwrap();
        // compare up to relabeling
        let same = (0..9).all(|i| (p.assignments()[i] == oracle[i]))
            || (0..9).all(|i| (p.assignments()[i] == 1 - oracle[i]));
        assert!(same, "partition {:?} vs oracle {:?}", p.assignments(), oracle);
        // the two corners themselves must be separated
        assert_ne!(p.region_of(CellId(0)), p.region_of(CellId(8)));
    }

    #[test]
    fn partition_invariants() {
        let g = build_grid(4, 4, 1.0, 60.0).unwrap();
        let cells: Vec<usize> = (0..200).map(|i| (i * 7) % 16).collect();
        let t = trace_from(&cells, 24.0);
        for k in 1..=4 {
            let p = partition_regions(&g, &t, k, 9, 100).unwrap();
            // totality + range
            assert!(p.assignments().iter().all(|&r| r < k));
            // non-empty regions
            for r in 0..k {
                assert!(!p.cells_in_region(r).is_empty(), "region {r} empty at k={k}");
            }
            // nearest-centroid consistency
            for cell in g.cells() {
                let own = p.region_centroids()[p.region_of(cell.id)];
                let own_d = (cell.centroid_x_km - own.0).powi(2) + (cell.centroid_y_km - own.1).powi(2);
                for &(cx, cy) in p.region_centroids() {
                    let d = (cell.centroid_x_km - cx).powi(2) + (cell.centroid_y_km - cy).powi(2);
                    assert!(own_d.sqrt() <= d.sqrt() + 1e-9);
                }
            }
        }
    }

    #[test]
    fn partition_deterministic() {
        let g = build_grid(3, 3, 1.0, 60.0).unwrap();
        let cells: Vec<usize> = (0..60).map(|i| (i * 5) % 9).collect();
        let t = trace_from(&cells, 24.0);
        let a = partition_regions(&g, &t, 3, 11, 100).unwrap();
        let b = partition_regions(&g, &t, 3, 11, 100).unwrap();
        assert_eq!(a.assignments(), b.assignments());
        assert_eq!(a.region_centroids(), b.region_centroids());
    }

    #[test]
    fn k_out_of_range_rejected() {
        let g = build_grid(2, 2, 1.0, 60.0).unwrap();
        let t = trace_from(&[0], 24.0);
        assert!(partition_regions(&g, &t, 0, 0, 10).is_err());
        assert!(partition_regions(&g, &t, 5, 0, 10).is_err());
        // k exceeding cells-with-incidents is rejected for non-empty traces
        assert!(partition_regions(&g, &t, 2, 0, 10).is_err());
    }

    #[test]
    fn interpolation_endpoints_and_midpath() {
        let g = build_grid(3, 3, 1.0, 60.0).unwrap();
        // path 0 -> 8 goes x-first: 0,1,2 then 5,8
        assert_eq!(g.interpolate_manhattan(CellId(0), CellId(8), 0.0), CellId(0));
        assert_eq!(g.interpolate_manhattan(CellId(0), CellId(8), 1.0), CellId(8));
        assert_eq!(g.interpolate_manhattan(CellId(0), CellId(8), 0.5), CellId(2));
        // exact tie between cells 0 and 1 snaps toward the origin
        assert_eq!(g.interpolate_manhattan(CellId(0), CellId(2), 0.25), CellId(0));
    }
}
