//! Uniform cell-centered grids on box domains and the discrete calculus
//! living on them.
//!
//! Cell values are stored row-major (the last axis varies fastest). Gradients
//! live on interior faces only; boundary faces carry no degrees of freedom,
//! which encodes the homogeneous Neumann condition. `div` is defined as the
//! negative adjoint of `grad` with respect to the cell-volume weighted inner
//! products, so `neumann_laplacian = -div(grad)` is symmetric positive
//! semidefinite with the constants as its null space.

use crate::error::{KwcError, Result};

/// Largest supported spatial dimension.
pub const MAX_DIM: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    dim: usize,
    cells: [usize; MAX_DIM],
    lengths: [f64; MAX_DIM],
    spacing: [f64; MAX_DIM],
    cell_volume: f64,
}

impl Grid {
    pub fn new(dim: usize, cells: &[usize], lengths: &[f64]) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(KwcError::Config(format!(
                "dimension {dim} not supported (expected 1 or 2)"
            )));
        }
        if cells.len() != dim || lengths.len() != dim {
            return Err(KwcError::Config(format!(
                "dimension {dim} needs {dim} cell counts and lengths, got {} and {}",
                cells.len(),
                lengths.len()
            )));
        }
        let mut c = [1usize; MAX_DIM];
        let mut l = [1.0f64; MAX_DIM];
        let mut h = [1.0f64; MAX_DIM];
        for k in 0..dim {
            if cells[k] < 2 {
                return Err(KwcError::Config(format!(
                    "axis {k}: need at least 2 cells, got {}",
                    cells[k]
                )));
            }
            if !(lengths[k] > 0.0) || !lengths[k].is_finite() {
                return Err(KwcError::Config(format!(
                    "axis {k}: length must be positive, got {}",
                    lengths[k]
                )));
            }
            c[k] = cells[k];
            l[k] = lengths[k];
            h[k] = lengths[k] / cells[k] as f64;
        }
        let cell_volume = h[..dim].iter().product();
        Ok(Grid {
            dim,
            cells: c,
            lengths: l,
            spacing: h,
            cell_volume,
        })
    }

    /// Uniform 1D grid on `(0, length)`.
    pub fn line(cells: usize, length: f64) -> Result<Self> {
        Self::new(1, &[cells], &[length])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells[..self.dim]
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths[..self.dim]
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing[..self.dim]
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_volume
    }

    pub fn num_cells(&self) -> usize {
        self.cells[0] * self.cells[1]
    }

    /// Measure of the domain.
    pub fn measure(&self) -> f64 {
        self.lengths[..self.dim].iter().product()
    }

    /// Number of interior faces normal to `axis`.
    pub fn num_faces(&self, axis: usize) -> usize {
        match axis {
            0 => (self.cells[0] - 1) * self.cells[1],
            1 => self.cells[0] * (self.cells[1] - 1),
            _ => 0,
        }
    }

    /// Cell-center coordinates of cell `idx`.
    pub fn center(&self, idx: usize) -> [f64; MAX_DIM] {
        let (i0, i1) = (idx / self.cells[1], idx % self.cells[1]);
        [
            (i0 as f64 + 0.5) * self.spacing[0],
            if self.dim > 1 {
                (i1 as f64 + 0.5) * self.spacing[1]
            } else {
                0.0
            },
        ]
    }

    /// Iterate over interior faces of `axis` as `(face, left_cell, right_cell)`.
    pub(crate) fn faces(&self, axis: usize) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let n1 = self.cells[1];
        let count = self.num_faces(axis);
        (0..count).map(move |f| match axis {
            0 => (f, f, f + n1),
            _ => {
                let (i0, j) = (f / (n1 - 1), f % (n1 - 1));
                let left = i0 * n1 + j;
                (f, left, left + 1)
            }
        })
    }

    /// Index of the face on `axis` whose left cell is `cell`, if any.
    pub(crate) fn right_face(&self, axis: usize, cell: usize) -> Option<usize> {
        let n1 = self.cells[1];
        let (i0, i1) = (cell / n1, cell % n1);
        match axis {
            0 if i0 + 1 < self.cells[0] => Some(cell),
            1 if self.dim > 1 && i1 + 1 < n1 => Some(i0 * (n1 - 1) + i1),
            _ => None,
        }
    }

    pub(crate) fn check_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(KwcError::GridMismatch(format!(
                "{:?} vs {:?}",
                self.cells(),
                other.cells()
            )))
        }
    }
}

/// Cell-centered scalar values on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.num_cells() {
            return Err(KwcError::GridMismatch(format!(
                "expected {} cell values, got {}",
                grid.num_cells(),
                values.len()
            )));
        }
        Ok(ScalarField {
            grid: *grid,
            values,
        })
    }

    pub fn constant(grid: &Grid, c: f64) -> Self {
        ScalarField {
            grid: *grid,
            values: vec![c; grid.num_cells()],
        }
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    /// Sample a function of the cell-center coordinates.
    pub fn from_fn(grid: &Grid, f: impl Fn([f64; MAX_DIM]) -> f64) -> Self {
        let values = (0..grid.num_cells()).map(|i| f(grid.center(i))).collect();
        ScalarField {
            grid: *grid,
            values,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        ScalarField {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.grid, other.grid);
        ScalarField {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn add(&self, other: &ScalarField) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ScalarField) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| s * v)
    }

    /// `self += s * other`
    pub fn axpy(&mut self, s: f64, other: &ScalarField) {
        debug_assert_eq!(self.grid, other.grid);
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += s * b;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Cellwise positive part `r ∨ 0`.
    pub fn positive_part(&self) -> Self {
        self.map(|v| v.max(0.0))
    }
}

/// Values on interior faces, one array per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceField {
    grid: Grid,
    axes: Vec<Vec<f64>>,
}

impl FaceField {
    pub fn zeros(grid: &Grid) -> Self {
        FaceField {
            grid: *grid,
            axes: (0..grid.dim())
                .map(|k| vec![0.0; grid.num_faces(k)])
                .collect(),
        }
    }

    pub fn from_axes(grid: &Grid, axes: Vec<Vec<f64>>) -> Result<Self> {
        if axes.len() != grid.dim()
            || axes
                .iter()
                .enumerate()
                .any(|(k, a)| a.len() != grid.num_faces(k))
        {
            return Err(KwcError::GridMismatch(
                "face component counts do not match the interior-face layout".into(),
            ));
        }
        Ok(FaceField { grid: *grid, axes })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn axis(&self, k: usize) -> &[f64] {
        &self.axes[k]
    }

    pub fn axis_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.axes[k]
    }

    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    pub fn zip_map(&self, other: &FaceField, f: impl Fn(f64, f64) -> f64) -> Self {
        FaceField {
            grid: self.grid,
            axes: self
                .axes
                .iter()
                .zip(&other.axes)
                .map(|(a, b)| a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect())
                .collect(),
        }
    }
}

/// Difference quotients across interior faces.
pub fn grad(z: &ScalarField) -> FaceField {
    let grid = z.grid();
    let v = z.values();
    let axes = (0..grid.dim())
        .map(|k| {
            let h = grid.spacing[k];
            grid.faces(k).map(|(_, l, r)| (v[r] - v[l]) / h).collect()
        })
        .collect();
    FaceField { grid: *grid, axes }
}

/// Discrete divergence, the negative adjoint of [`grad`].
pub fn div(w: &FaceField) -> ScalarField {
    let grid = w.grid();
    let mut out = vec![0.0; grid.num_cells()];
    for k in 0..grid.dim() {
        let h = grid.spacing[k];
        let wk = w.axis(k);
        for (f, l, r) in grid.faces(k) {
            let q = wk[f] / h;
            out[l] += q;
            out[r] -= q;
        }
    }
    ScalarField {
        grid: *grid,
        values: out,
    }
}

/// `A_N z = -div(grad z)` with homogeneous Neumann boundary conditions.
pub fn neumann_laplacian(z: &ScalarField) -> ScalarField {
    div(&grad(z)).scale(-1.0)
}

pub fn inner_h(a: &ScalarField, b: &ScalarField) -> Result<f64> {
    a.grid().check_same(b.grid())?;
    Ok(inner_h_unchecked(a, b))
}

pub(crate) fn inner_h_unchecked(a: &ScalarField, b: &ScalarField) -> f64 {
    a.grid().cell_volume()
        * a.values()
            .iter()
            .zip(b.values())
            .map(|(x, y)| x * y)
            .sum::<f64>()
}

pub fn norm_h(z: &ScalarField) -> f64 {
    inner_h_unchecked(z, z).sqrt()
}

pub fn inner_face(a: &FaceField, b: &FaceField) -> Result<f64> {
    a.grid().check_same(b.grid())?;
    let s: f64 = a
        .axes
        .iter()
        .zip(&b.axes)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
        .sum();
    Ok(a.grid().cell_volume() * s)
}

pub fn norm_face(w: &FaceField) -> f64 {
    let s: f64 = w.axes.iter().flatten().map(|x| x * x).sum();
    (w.grid().cell_volume() * s).sqrt()
}

/// `|z|_V^2 = |z|_H^2 + |grad z|^2`.
pub fn norm_v(z: &ScalarField) -> f64 {
    let h = norm_h(z);
    let g = norm_face(&grad(z));
    (h * h + g * g).sqrt()
}

/// Per-cell gradient vector built from the forward (right) face of each axis.
/// Cells on the upper boundary of an axis see a zero component there.
pub(crate) fn forward_cell_gradients(w: &FaceField) -> Vec<[f64; MAX_DIM]> {
    let grid = w.grid();
    (0..grid.num_cells())
        .map(|c| {
            let mut y = [0.0; MAX_DIM];
            for (k, yk) in y.iter_mut().enumerate().take(grid.dim()) {
                if let Some(f) = grid.right_face(k, c) {
                    *yk = w.axis(k)[f];
                }
            }
            y
        })
        .collect()
}

/// Adjoint of [`forward_cell_gradients`] (up to the cell-volume weight).
pub(crate) fn scatter_forward(grid: &Grid, per_cell: &[[f64; MAX_DIM]]) -> FaceField {
    let mut out = FaceField::zeros(grid);
    for (c, y) in per_cell.iter().enumerate() {
        for (k, yk) in y.iter().enumerate().take(grid.dim()) {
            if let Some(f) = grid.right_face(k, c) {
                out.axes[k][f] += yk;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn make_grid_examples() {
        let g = Grid::new(1, &[4], &[1.0]).unwrap();
        assert_eq!(g.spacing(), &[0.25]);
        assert_eq!(g.cell_volume(), 0.25);

        let g = Grid::new(2, &[3, 3], &[1.0, 1.0]).unwrap();
        assert_relative_eq!(g.spacing()[0], 1.0 / 3.0);
        assert_relative_eq!(g.spacing()[1], 1.0 / 3.0);
        assert_eq!(g.cell_volume(), g.spacing()[0] * g.spacing()[1]);

        assert!(Grid::new(3, &[2, 2, 2], &[1.0, 1.0, 1.0]).is_err());
        assert!(Grid::new(2, &[3], &[1.0]).is_err());
        assert!(Grid::new(1, &[1], &[1.0]).is_err());
        assert!(Grid::new(1, &[4], &[0.0]).is_err());
    }

    #[test]
    fn grad_div_hand_examples() {
        let g = Grid::line(3, 3.0).unwrap();
        let z = ScalarField::from_values(&g, vec![0.0, 1.0, 3.0]).unwrap();
        assert_eq!(grad(&z).axis(0), &[1.0, 2.0]);

        let w = FaceField::from_axes(&g, vec![vec![1.0, 2.0]]).unwrap();
        assert_eq!(div(&w).values(), &[1.0, 1.0, -2.0]);

        let z = ScalarField::from_values(&g, vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(neumann_laplacian(&z).values(), &[-1.0, 2.0, -1.0]);
    }

    #[test]
    fn constants_are_annihilated() {
        let g = Grid::new(2, &[4, 5], &[1.0, 2.0]).unwrap();
        let c = ScalarField::constant(&g, 3.7);
        assert!(grad(&c).axes().iter().flatten().all(|&v| v == 0.0));
        assert!(neumann_laplacian(&c).values().iter().all(|&v| v == 0.0));
        assert_eq!(div(&FaceField::zeros(&g)).max_abs(), 0.0);
    }

    #[test]
    fn norms() {
        let g = Grid::new(2, &[4, 4], &[1.0, 1.0]).unwrap();
        let one = ScalarField::constant(&g, 1.0);
        assert_relative_eq!(inner_h(&one, &one).unwrap(), 1.0, epsilon = 1e-15);
        assert_relative_eq!(norm_v(&one.scale(-2.5)), 2.5, epsilon = 1e-14);

        let g = Grid::line(2, 1.0).unwrap();
        let z = ScalarField::from_values(&g, vec![3.0, 4.0]).unwrap();
        assert_relative_eq!(norm_h(&z), (0.5f64 * 25.0).sqrt(), epsilon = 1e-15);

        let other = Grid::line(3, 1.0).unwrap();
        assert!(inner_h(&z, &ScalarField::zeros(&other)).is_err());
    }

    #[test]
    fn face_layout_2d() {
        let g = Grid::new(2, &[3, 4], &[1.0, 1.0]).unwrap();
        assert_eq!(g.num_faces(0), 2 * 4);
        assert_eq!(g.num_faces(1), 3 * 3);
        // axis-1 faces connect horizontally adjacent cells in a row
        let pairs: Vec<_> = g.faces(1).map(|(_, l, r)| (l, r)).take(4).collect();
        assert_eq!(pairs, vec![(0, 1), (1, 2), (2, 3), (4, 5)]);
        assert_eq!(g.right_face(1, 3), None);
        assert_eq!(g.right_face(0, 8), None);
    }

    #[test]
    fn forward_gradients_roundtrip_norm() {
        let g = Grid::new(2, &[3, 3], &[1.0, 1.0]).unwrap();
        let z = ScalarField::from_fn(&g, |x| x[0] * x[0] + 2.0 * x[1]);
        let w = grad(&z);
        let y = forward_cell_gradients(&w);
        let s: f64 = y.iter().map(|v| v[0] * v[0] + v[1] * v[1]).sum();
        assert_relative_eq!(
            s * g.cell_volume(),
            norm_face(&w).powi(2),
            max_relative = 1e-14
        );
        assert_eq!(scatter_forward(&g, &y), w);
    }
}
