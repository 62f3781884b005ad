//! Uniform grid over the periodic box for neighbor queries.
//!
//! Cell size is at least the query radius, so scanning the 3x3x3 block of
//! cells around a position is guaranteed to cover every neighbor. Boxes
//! smaller than three cells per axis wrap the scan onto duplicate cells,
//! which are visited once.

use crate::vec3::Vec3;
use crate::world::{min_image_delta, wrap1};

#[derive(Clone, Debug)]
pub struct UniformGrid {
    l: f64,
    dims: usize,
    cell: f64,
    cells: Vec<Vec<u32>>,
}

impl UniformGrid {
    /// Build a grid whose cells are at least `min_cell` wide.
    ///
    /// Positions must already be wrapped into `[0, L)^3`.
    pub fn build(positions: &[Vec3], l: f64, min_cell: f64) -> Self {
        assert!(l > 0.0 && min_cell > 0.0);
        let dims = ((l / min_cell).floor() as usize).max(1);
        let cell = l / dims as f64;
        let mut cells = vec![Vec::new(); dims * dims * dims];
        let mut grid = UniformGrid { l, dims, cell, cells: Vec::new() };
        for (i, p) in positions.iter().enumerate() {
            let idx = grid.cell_index(*p);
            cells[idx].push(i as u32);
        }
        grid.cells = cells;
        grid
    }

    pub fn cell_size(&self) -> f64 {
        self.cell
    }

    fn axis_cell(&self, x: f64) -> usize {
        let c = (wrap1(x, self.l) / self.cell) as usize;
        c.min(self.dims - 1)
    }

    fn cell_index(&self, p: Vec3) -> usize {
        let i = self.axis_cell(p.x);
        let j = self.axis_cell(p.y);
        let k = self.axis_cell(p.z);
        (i * self.dims + j) * self.dims + k
    }

    /// Unique wrapped cells covered by `{c-1, c, c+1}` along one axis.
    fn axis_neighborhood(&self, c: usize) -> ([usize; 3], usize) {
        let d = self.dims;
        if d >= 3 {
            ([(c + d - 1) % d, c, (c + 1) % d], 3)
        } else if d == 2 {
            ([0, 1, 0], 2)
        } else {
            ([0, 0, 0], 1)
        }
    }

    /// Push every index whose cell is within one cell of `p`'s cell.
    ///
    /// The result is a superset of the true neighbors within one cell size;
    /// it may include the query agent itself.
    pub fn candidates(&self, p: Vec3, out: &mut Vec<u32>) {
        let ci = self.axis_cell(p.x);
        let cj = self.axis_cell(p.y);
        let ck = self.axis_cell(p.z);
        let (is, ni) = self.axis_neighborhood(ci);
        let (js, nj) = self.axis_neighborhood(cj);
        let (ks, nk) = self.axis_neighborhood(ck);
        for &i in &is[..ni] {
            for &j in &js[..nj] {
                for &k in &ks[..nk] {
                    let cell = &self.cells[(i * self.dims + j) * self.dims + k];
                    out.extend_from_slice(cell);
                }
            }
        }
    }

    /// Exact neighbors of agent `i` within `radius` (toroidal), self excluded,
    /// sorted by agent index.
    ///
    /// Requires `radius <= cell_size()`.
    pub fn neighbors_within(
        &self,
        positions: &[Vec3],
        i: usize,
        radius: f64,
    ) -> Vec<(u32, Vec3, f64)> {
        assert!(
            radius <= self.cell * (1.0 + 1e-12),
            "query radius {radius} exceeds cell size {}",
            self.cell
        );
        let mut scratch = Vec::new();
        self.candidates(positions[i], &mut scratch);
        let r2 = radius * radius;
        let mut found: Vec<(u32, Vec3, f64)> = scratch
            .into_iter()
            .filter(|&j| j as usize != i)
            .filter_map(|j| {
                let delta = min_image_delta(positions[i], positions[j as usize], self.l);
                let d2 = delta.norm_squared();
                if d2 <= r2 {
                    Some((j, delta, d2.sqrt()))
                } else {
                    None
                }
            })
            .collect();
        found.sort_unstable_by_key(|&(j, _, _)| j);
        found
    }
}
