//! Periodic cell list for fixed-radius neighbor queries.
//!
//! The box `[0, L)^d` is cut into `n` cells per axis with `n = floor(L / r_c)`,
//! so every cell is at least `r_c` wide and a `3^d` block of cells contains
//! every candidate neighbor. Distances use the minimum-image convention and the
//! ball is closed (`|r_i - r_j| <= r_c`). A particle is its own neighbor.

use std::f64::consts::PI;

use nalgebra::Vector3;
use thiserror::Error;

use crate::params::Dimension;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NeighborError {
    #[error("interaction radius {r_c} exceeds half the box length {box_length}")]
    RadiusTooLarge { r_c: f64, box_length: f64 },
    #[error("invalid geometry: box length {box_length}, radius {r_c}")]
    InvalidGeometry { box_length: f64, r_c: f64 },
    #[error("particle {id} has a non-finite coordinate")]
    NonFinite { id: usize },
    #[error("particle {id} lies outside the periodic box")]
    OutsideBox { id: usize },
}

/// Volume of the interaction ball: `pi r^2` in 2D, `4 pi r^3 / 3` in 3D.
pub fn interaction_volume(r_c: f64, dims: Dimension) -> f64 {
    match dims {
        Dimension::Two => PI * r_c * r_c,
        Dimension::Three => 4.0 * PI * r_c.powi(3) / 3.0,
    }
}

/// Expected neighbor count `V_d rho`, self excluded.
pub fn expected_neighbor_count(rho: f64, r_c: f64, dims: Dimension) -> f64 {
    interaction_volume(r_c, dims) * rho
}

/// Minimum-image displacement on the periodic box.
#[inline]
pub fn minimum_image(mut d: Vector3<f64>, box_length: f64) -> Vector3<f64> {
    for c in d.iter_mut() {
        *c -= box_length * (*c / box_length).round();
    }
    d
}

/// Wrap a coordinate into `[0, L)`.
#[inline]
pub fn wrap(x: f64, box_length: f64) -> f64 {
    let w = x.rem_euclid(box_length);
    // rem_euclid rounds tiny negative inputs up to exactly L
    if w >= box_length {
        0.0
    } else {
        w
    }
}

#[derive(Debug, Clone)]
pub struct CellIndex {
    box_length: f64,
    cell_size: f64,
    grid_dims: [usize; 3],
    dims: Dimension,
    cell_start: Vec<usize>,
    entries: Vec<usize>,
    cell_of: Vec<usize>,
    /// Neighbor cell offsets per axis; fewer than three when an axis has < 3 cells.
    offsets: [Vec<isize>; 3],
}

impl CellIndex {
    pub fn build(
        positions: &[Vector3<f64>],
        box_length: f64,
        r_c: f64,
        dims: Dimension,
    ) -> Result<Self, NeighborError> {
        if !(box_length > 0.0 && box_length.is_finite() && r_c > 0.0 && r_c.is_finite()) {
            return Err(NeighborError::InvalidGeometry { box_length, r_c });
        }
        if r_c > box_length / 2.0 {
            return Err(NeighborError::RadiusTooLarge { r_c, box_length });
        }
        let n = ((box_length / r_c).floor() as usize).max(1);
        let grid_dims = match dims {
            Dimension::Two => [n, n, 1],
            Dimension::Three => [n, n, n],
        };
        let cell_size = box_length / n as f64;
        let offsets = grid_dims.map(|g| {
            if g >= 3 {
                vec![-1, 0, 1]
            } else {
                (0..g as isize).collect()
            }
        });

        let n_cells = grid_dims.iter().product::<usize>();
        let mut cell_of = Vec::with_capacity(positions.len());
        for (id, r) in positions.iter().enumerate() {
            if r.iter().any(|c| !c.is_finite()) {
                return Err(NeighborError::NonFinite { id });
            }
            let active = &r.as_slice()[..dims.get()];
            if active.iter().any(|&c| !(0.0..box_length).contains(&c)) {
                return Err(NeighborError::OutsideBox { id });
            }
            let mut cell = [0usize; 3];
            for a in 0..dims.get() {
                cell[a] = ((r[a] / cell_size) as usize).min(grid_dims[a] - 1);
            }
            cell_of.push((cell[0] * grid_dims[1] + cell[1]) * grid_dims[2] + cell[2]);
        }

        // counting sort of particle ids by cell
        let mut cell_start = vec![0usize; n_cells + 1];
        for &c in &cell_of {
            cell_start[c + 1] += 1;
        }
        for c in 0..n_cells {
            cell_start[c + 1] += cell_start[c];
        }
        let mut fill = cell_start.clone();
        let mut entries = vec![0usize; positions.len()];
        for (id, &c) in cell_of.iter().enumerate() {
            entries[fill[c]] = id;
            fill[c] += 1;
        }

        Ok(Self {
            box_length,
            cell_size,
            grid_dims,
            dims,
            cell_start,
            entries,
            cell_of,
            offsets,
        })
    }

    pub fn box_length(&self) -> f64 {
        self.box_length
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn grid_dims(&self) -> [usize; 3] {
        self.grid_dims
    }

    pub fn n_cells(&self) -> usize {
        self.cell_start.len() - 1
    }

    pub fn n_particles(&self) -> usize {
        self.entries.len()
    }

    /// Particle ids stored in cell `c`.
    pub fn cell(&self, c: usize) -> &[usize] {
        &self.entries[self.cell_start[c]..self.cell_start[c + 1]]
    }

    pub fn cell_of(&self, id: usize) -> usize {
        self.cell_of[id]
    }

    /// Calls `f(i)` for every `i` within `r_c` of particle `j`, including `j`.
    ///
    /// `r_c` must not exceed the cell size used at build time.
    #[inline]
    pub fn for_each_neighbor(
        &self,
        positions: &[Vector3<f64>],
        j: usize,
        r_c: f64,
        mut f: impl FnMut(usize),
    ) {
        assert!(
            r_c <= self.cell_size,
            "query radius {r_c} exceeds the cell size {}",
            self.cell_size
        );
        let r2 = r_c * r_c;
        let [gx, gy, gz] = self.grid_dims;
        let c = self.cell_of[j];
        let (cx, cy, cz) = (c / (gy * gz), (c / gz) % gy, c % gz);
        let shift = |base: usize, off: isize, g: usize| -> usize {
            if g >= 3 {
                (base as isize + off).rem_euclid(g as isize) as usize
            } else {
                off as usize
            }
        };
        let rj = positions[j];
        for &ox in &self.offsets[0] {
            let x = shift(cx, ox, gx);
            for &oy in &self.offsets[1] {
                let y = shift(cy, oy, gy);
                for &oz in &self.offsets[2] {
                    let z = shift(cz, oz, gz);
                    for &i in self.cell((x * gy + y) * gz + z) {
                        let d = minimum_image(positions[i] - rj, self.box_length);
                        if d.norm_squared() <= r2 {
                            f(i);
                        }
                    }
                }
            }
        }
    }

    /// Sorted neighbor ids of `j` (closed ball, self included).
    pub fn neighbors(&self, positions: &[Vector3<f64>], j: usize, r_c: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.for_each_neighbor(positions, j, r_c, |i| out.push(i));
        out.sort_unstable();
        out
    }

    /// Sum of neighbor spins and the neighbor count (self included).
    #[inline]
    pub fn neighbor_spin_sum(
        &self,
        positions: &[Vector3<f64>],
        spins: &[Vector3<f64>],
        j: usize,
        r_c: f64,
    ) -> (Vector3<f64>, usize) {
        let mut sum = Vector3::zeros();
        let mut count = 0;
        self.for_each_neighbor(positions, j, r_c, |i| {
            sum += spins[i];
            count += 1;
        });
        (sum, count)
    }

    /// Arithmetic mean of the neighbor spins, not re-normalized.
    pub fn local_mean_spin(
        &self,
        positions: &[Vector3<f64>],
        spins: &[Vector3<f64>],
        j: usize,
        r_c: f64,
    ) -> Vector3<f64> {
        let (sum, count) = self.neighbor_spin_sum(positions, spins, j, r_c);
        sum / count as f64
    }

    pub fn dims(&self) -> Dimension {
        self.dims
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, UnitSphere};

    fn v(x: f64, y: f64, z: f64) -> Vector3<f64> {
        Vector3::new(x, y, z)
    }

    #[test]
    fn single_particle() {
        let idx = CellIndex::build(&[v(3.0, 4.0, 5.0)], 32.0, 1.0, Dimension::Three).unwrap();
        let occupied = (0..idx.n_cells()).filter(|&c| !idx.cell(c).is_empty()).count();
        assert_eq!(occupied, 1);
        assert_eq!(idx.n_particles(), 1);
    }

    #[test]
    fn every_particle_in_exactly_one_cell() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pos: Vec<_> = (0..1000)
            .map(|_| v(rng.random::<f64>() * 32.0, rng.random::<f64>() * 32.0, rng.random::<f64>() * 32.0))
            .collect();
        let idx = CellIndex::build(&pos, 32.0, 1.0, Dimension::Three).unwrap();
        let mut seen = vec![0usize; pos.len()];
        for c in 0..idx.n_cells() {
            for &id in idx.cell(c) {
                seen[id] += 1;
            }
        }
        assert!(seen.iter().all(|&s| s == 1));
    }

    #[test]
    fn rejects_large_radius_and_bad_coordinates() {
        let pos = [v(1.0, 1.0, 1.0)];
        assert!(matches!(
            CellIndex::build(&pos, 4.0, 2.5, Dimension::Three),
            Err(NeighborError::RadiusTooLarge { .. })
        ));
        assert!(matches!(
            CellIndex::build(&[v(f64::NAN, 0.0, 0.0)], 4.0, 1.0, Dimension::Three),
            Err(NeighborError::NonFinite { id: 0 })
        ));
        assert!(matches!(
            CellIndex::build(&[v(4.0, 0.0, 0.0)], 4.0, 1.0, Dimension::Three),
            Err(NeighborError::OutsideBox { id: 0 })
        ));
    }

    #[test]
    fn close_pair_and_boundary_tie() {
        let pos = [v(5.0, 5.0, 5.0), v(5.5, 5.0, 5.0)];
        let idx = CellIndex::build(&pos, 32.0, 1.0, Dimension::Three).unwrap();
        assert_eq!(idx.neighbors(&pos, 0, 1.0), vec![0, 1]);
        assert_eq!(idx.neighbors(&pos, 1, 1.0), vec![0, 1]);

        let tie = [v(5.0, 5.0, 5.0), v(6.0, 5.0, 5.0)];
        let idx = CellIndex::build(&tie, 32.0, 1.0, Dimension::Three).unwrap();
        assert_eq!(idx.neighbors(&tie, 0, 1.0), vec![0, 1]);
    }

    #[test]
    fn periodic_wrap_pair() {
        let pos = [v(0.1, 0.0, 0.0), v(31.9, 0.0, 0.0)];
        let idx = CellIndex::build(&pos, 32.0, 1.0, Dimension::Three).unwrap();
        assert_eq!(idx.neighbors(&pos, 0, 1.0), vec![0, 1]);
        let d = minimum_image(pos[1] - pos[0], 32.0);
        assert!((d.norm() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn small_boxes_do_not_double_count() {
        // two cells per axis: the 3-cell stencil would visit cells twice
        let pos = [v(0.5, 0.5, 0.5), v(1.5, 0.5, 0.5), v(3.9, 3.9, 3.9)];
        let idx = CellIndex::build(&pos, 4.0, 2.0, Dimension::Three).unwrap();
        assert_eq!(idx.grid_dims(), [2, 2, 2]);
        assert_eq!(idx.neighbors(&pos, 0, 2.0), vec![0, 1, 2]);
    }

    #[test]
    fn local_mean_spin_cases() {
        let pos = [v(1.0, 1.0, 1.0)];
        let spins = [v(0.0, 0.6, 0.8)];
        let idx = CellIndex::build(&pos, 10.0, 1.0, Dimension::Three).unwrap();
        assert_eq!(idx.local_mean_spin(&pos, &spins, 0, 1.0), spins[0]);

        let pos = [v(1.0, 1.0, 1.0), v(1.2, 1.0, 1.0)];
        let spins = [v(1.0, 0.0, 0.0), v(-1.0, 0.0, 0.0)];
        let idx = CellIndex::build(&pos, 10.0, 1.0, Dimension::Three).unwrap();
        assert_eq!(idx.local_mean_spin(&pos, &spins, 0, 1.0), Vector3::zeros());

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pos: Vec<_> = (0..5).map(|k| v(2.0 + 0.05 * k as f64, 2.0, 2.0)).collect();
        let spins: Vec<Vector3<f64>> = (0..5)
            .map(|_| Vector3::from(UnitSphere.sample(&mut rng)))
            .collect();
        let idx = CellIndex::build(&pos, 10.0, 1.0, Dimension::Three).unwrap();
        let direct = spins.iter().sum::<Vector3<f64>>() / 5.0;
        let got = idx.local_mean_spin(&pos, &spins, 2, 1.0);
        assert!((got - direct).norm() < 1e-14);
        assert!(got.norm() <= 1.0);
    }

    #[test]
    fn expected_counts() {
        assert!((expected_neighbor_count(0.5, 1.0, Dimension::Three) - 2.0944).abs() < 1e-4);
        assert!((expected_neighbor_count(0.5, 1.0, Dimension::Two) - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn wrap_edge_cases() {
        assert_eq!(wrap(-1e-18, 32.0), 0.0);
        assert_eq!(wrap(32.0, 32.0), 0.0);
        assert_eq!(wrap(-0.5, 32.0), 31.5);
        assert_eq!(wrap(33.25, 32.0), 1.25);
    }
}
