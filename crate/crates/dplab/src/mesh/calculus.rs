//! Face-difference gradient, its adjoint divergence, and quadrature norms.

use super::{CellMask, Grid};

/// Face vector field: `comp[axis][c]` sits on the face on the positive side
/// of cell `c` along `axis`. On box grids the faces of the last cell along
/// each axis are outer-boundary slots and are kept at zero.
#[derive(Debug, Clone)]
pub struct FaceField {
    pub grid: Grid,
    pub comp: Vec<Vec<f64>>,
}

impl FaceField {
    pub fn zeros(grid: Grid) -> FaceField {
        FaceField { grid, comp: vec![vec![0.0; grid.cells()]; grid.dim] }
    }

    /// True when the positive face of `c` along `axis` is interior (has a
    /// neighbor cell).
    #[inline]
    pub fn face_exists(&self, axis: usize, c: usize) -> bool {
        self.grid.neighbor(c, axis, 1).is_some()
    }
}

/// Forward face differences `(u_nb - u_c)/h`.
pub fn gradient(grid: Grid, u: &[f64]) -> FaceField {
    assert_eq!(u.len(), grid.cells());
    let h = grid.h();
    let mut out = FaceField::zeros(grid);
    for axis in 0..grid.dim {
        let comp = &mut out.comp[axis];
        for c in 0..grid.cells() {
            if let Some(nb) = grid.neighbor(c, axis, 1) {
                comp[c] = (u[nb] - u[c]) / h;
            }
        }
    }
    out
}

/// Negative adjoint of [`gradient`]: `<grad u, G>_faces = -<u, div G>_cells`
/// holds exactly, with outer-boundary face values treated as zero.
pub fn divergence(g: &FaceField) -> Vec<f64> {
    let grid = g.grid;
    let h = grid.h();
    let mut out = vec![0.0; grid.cells()];
    for axis in 0..grid.dim {
        let comp = &g.comp[axis];
        for c in 0..grid.cells() {
            let right = if g.face_exists(axis, c) { comp[c] } else { 0.0 };
            let left = match grid.neighbor(c, axis, -1) {
                Some(lc) => comp[lc],
                None => 0.0,
            };
            out[c] += (right - left) / h;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormKind {
    L2,
    H1Semi,
    H1,
    Lp(f64),
}

/// Cell-sum quadrature norm over the whole grid.
pub fn norm(grid: Grid, u: &[f64], kind: NormKind) -> f64 {
    norm_masked(grid, u, None, kind)
}

/// Masked norm: the L^2/L^p parts sum over mask cells, the H^1 seminorm sums
/// faces whose two cells both lie in the mask. An empty mask yields 0.
pub fn norm_masked(grid: Grid, u: &[f64], mask: Option<&CellMask>, kind: NormKind) -> f64 {
    assert_eq!(u.len(), grid.cells());
    let vol = grid.cell_volume();
    let in_mask = |c: usize| mask.map_or(true, |m| m.contains(c));
    let cell_sum = |p: f64| -> f64 {
        let mut s = 0.0;
        match mask {
            Some(m) => {
                for &c in m.cells() {
                    s += u[c].abs().powf(p);
                }
            }
            None => {
                for &v in u {
                    s += v.abs().powf(p);
                }
            }
        }
        s * vol
    };
    let semi_sq = || -> f64 {
        let h = grid.h();
        let mut s = 0.0;
        for axis in 0..grid.dim {
            for c in 0..grid.cells() {
                if !in_mask(c) {
                    continue;
                }
                if let Some(nb) = grid.neighbor(c, axis, 1) {
                    if in_mask(nb) {
                        let g = (u[nb] - u[c]) / h;
                        s += g * g;
                    }
                }
            }
        }
        s * vol
    };
    match kind {
        NormKind::L2 => cell_sum(2.0).sqrt(),
        NormKind::Lp(p) => {
            assert!(p >= 1.0);
            cell_sum(p).powf(1.0 / p)
        }
        NormKind::H1Semi => semi_sq().sqrt(),
        NormKind::H1 => (cell_sum(2.0) + semi_sq()).sqrt(),
    }
}
