//! Finite-volume assembly into compressed sparse row storage.

use super::{CellMask, CoeffField, Grid};
use rayon::prelude::*;
use std::sync::Arc;

/// Symmetric sparse matrix in CSR form.
#[derive(Debug, Clone)]
pub struct SparseOperator {
    pub nrows: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<u32>,
    pub vals: Vec<f64>,
    pub symmetric: bool,
}

impl SparseOperator {
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.nrows);
        assert_eq!(y.len(), self.nrows);
        // Rows are independent, so a parallel split stays deterministic.
        y.par_chunks_mut(4096).enumerate().for_each(|(chunk, out)| {
            let base = chunk * 4096;
            for (k, yi) in out.iter_mut().enumerate() {
                let r = base + k;
                let mut acc = 0.0;
                for idx in self.row_ptr[r]..self.row_ptr[r + 1] {
                    acc += self.vals[idx] * x[self.cols[idx] as usize];
                }
                *yi = acc;
            }
        });
    }

    pub fn diag(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.nrows];
        for r in 0..self.nrows {
            for idx in self.row_ptr[r]..self.row_ptr[r + 1] {
                if self.cols[idx] as usize == r {
                    d[r] = self.vals[idx];
                }
            }
        }
        d
    }

    /// max |A - A^T| over stored entries (0 for a structurally symmetric build).
    pub fn symmetry_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for r in 0..self.nrows {
            for idx in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.cols[idx] as usize;
                let mut transposed = 0.0;
                for jdx in self.row_ptr[c]..self.row_ptr[c + 1] {
                    if self.cols[jdx] as usize == r {
                        transposed = self.vals[jdx];
                        break;
                    }
                }
                worst = worst.max((self.vals[idx] - transposed).abs());
            }
        }
        worst
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut a = vec![vec![0.0; self.nrows]; self.nrows];
        for r in 0..self.nrows {
            for idx in self.row_ptr[r]..self.row_ptr[r + 1] {
                a[r][self.cols[idx] as usize] += self.vals[idx];
            }
        }
        a
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.nrows)
            .map(|r| self.vals[self.row_ptr[r]..self.row_ptr[r + 1]].iter().sum())
            .collect()
    }
}

/// Treatment of faces from a mask cell into a non-mask cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskExterior {
    /// Value 0 imposed on the face at half-cell distance, using the cell's own
    /// coefficient on the boundary face.
    DirichletHalfCell,
    /// Zero flux: the face simply drops out.
    Neumann,
}

#[derive(Debug, Clone)]
pub enum AssemblyBc {
    Periodic,
    DirichletZero,
    Masked { mask: Arc<CellMask>, exterior: MaskExterior },
}

/// Assembled system: the operator acts on the dof vector described by `dofs`.
#[derive(Debug, Clone)]
pub struct Assembly {
    pub op: SparseOperator,
    pub grid: Grid,
    pub bc: AssemblyBc,
    /// Mask when dofs are restricted, `None` when every cell is a dof.
    pub mask: Option<Arc<CellMask>>,
}

impl Assembly {
    pub fn ndofs(&self) -> usize {
        self.op.nrows
    }

    #[inline]
    pub fn dof_of_cell(&self, cell: usize) -> Option<usize> {
        match &self.mask {
            Some(m) => m.dof(cell),
            None => Some(cell),
        }
    }

    pub fn cell_of_dof(&self, dof: usize) -> usize {
        match &self.mask {
            Some(m) => m.cells()[dof],
            None => dof,
        }
    }

    /// Volume-scaled right-hand side `f_c * h^d` on the dof set.
    pub fn rhs_from_cells(&self, f: &[f64]) -> Vec<f64> {
        let vol = self.grid.cell_volume();
        match &self.mask {
            Some(m) => m.cells().iter().map(|&c| f[c] * vol).collect(),
            None => f.iter().map(|&v| v * vol).collect(),
        }
    }
}

#[inline]
fn harmonic(a: f64, b: f64) -> f64 {
    let s = a + b;
    if s == 0.0 {
        0.0
    } else {
        2.0 * a * b / s
    }
}

/// Cell-centered finite-volume assembly of `u -> m u h^d - div(a grad u)`.
///
/// Interior face transmissibility is the harmonic mean of the adjacent cell
/// coefficients times `h^(d-2)`; a zero coefficient on either side decouples
/// the face. The result is a symmetric M-matrix for nonnegative `a`, `m`.
pub fn assemble(coeff: &CoeffField, bc: &AssemblyBc) -> Assembly {
    let grid = coeff.grid;
    match bc {
        AssemblyBc::Periodic => {
            assert!(grid.torus, "periodic assembly needs a torus grid");
        }
        AssemblyBc::DirichletZero => {
            assert!(!grid.torus, "dirichlet assembly needs a box grid");
        }
        AssemblyBc::Masked { .. } => {}
    }
    let (mask, exterior) = match bc {
        AssemblyBc::Masked { mask, exterior } => (Some(mask.clone()), Some(*exterior)),
        _ => (None, None),
    };
    let ndofs = mask.as_ref().map_or(grid.cells(), |m| m.len());
    let h = grid.h();
    let tfac = h.powi(grid.dim as i32 - 2);
    let vol = grid.cell_volume();

    let dof_cell = |d: usize| -> usize {
        match &mask {
            Some(m) => m.cells()[d],
            None => d,
        }
    };
    let cell_dof = |c: usize| -> Option<usize> {
        match &mask {
            Some(m) => m.dof(c),
            None => Some(c),
        }
    };

    let mut row_ptr = Vec::with_capacity(ndofs + 1);
    let mut cols: Vec<u32> = Vec::with_capacity(ndofs * (1 + 2 * grid.dim));
    let mut vals: Vec<f64> = Vec::with_capacity(ndofs * (1 + 2 * grid.dim));
    row_ptr.push(0);

    let mut entries: Vec<(u32, f64)> = Vec::with_capacity(2 * grid.dim + 1);
    for d in 0..ndofs {
        let c = dof_cell(d);
        entries.clear();
        let mut diag = coeff.m[c] * vol;
        for axis in 0..grid.dim {
            for dir in [-1i64, 1] {
                match grid.neighbor(c, axis, dir) {
                    Some(nb) => {
                        match cell_dof(nb) {
                            Some(nd) => {
                                let t = harmonic(coeff.a[c], coeff.a[nb]) * tfac;
                                if t != 0.0 {
                                    diag += t;
                                    entries.push((nd as u32, -t));
                                }
                            }
                            None => {
                                // face into the mask exterior
                                match exterior.expect("mask exterior rule") {
                                    MaskExterior::DirichletHalfCell => {
                                        diag += 2.0 * coeff.a[c] * tfac;
                                    }
                                    MaskExterior::Neumann => {}
                                }
                            }
                        }
                    }
                    None => {
                        // box boundary face
                        if matches!(bc, AssemblyBc::DirichletZero) {
                            diag += 2.0 * coeff.a[c] * tfac;
                        }
                        if let Some(MaskExterior::DirichletHalfCell) = exterior {
                            if !grid.torus {
                                diag += 2.0 * coeff.a[c] * tfac;
                            }
                        }
                    }
                }
            }
        }
        entries.push((d as u32, diag));
        entries.sort_unstable_by_key(|e| e.0);
        for &(col, val) in &entries {
            cols.push(col);
            vals.push(val);
        }
        row_ptr.push(cols.len());
    }

    Assembly {
        op: SparseOperator { nrows: ndofs, row_ptr, cols, vals, symmetric: true },
        grid,
        bc: bc.clone(),
        mask,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{self, RasterRule};
    use crate::mesh::{coefficient_field, MassRule};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_periodic_1d_stencil() {
        let grid = Grid::new(4, 1, 1.0, true);
        let coeff = CoeffField::uniform(grid, 1.0, 0.0);
        let asm = assemble(&coeff, &AssemblyBc::Periodic);
        let h = grid.h();
        // d=1: T = h^{-1}, row = (-1/h, 2/h, -1/h)
        let dense = asm.op.to_dense();
        for r in 0..4 {
            assert!((dense[r][r] - 2.0 / h).abs() < 1e-12);
            assert!((dense[r][(r + 1) % 4] + 1.0 / h).abs() < 1e-12);
            assert!((dense[r][(r + 3) % 4] + 1.0 / h).abs() < 1e-12);
        }
        // constant vector in the kernel when m = 0
        let x = vec![1.0; 4];
        let mut y = vec![0.0; 4];
        asm.op.matvec(&x, &mut y);
        for v in y {
            assert!(v.abs() < 1e-14);
        }
        for s in asm.op.row_sums() {
            assert!(s.abs() < 1e-14);
        }
    }

    #[test]
    fn soft_inclusion_rows_decouple() {
        let set = geometry::sample_periodic_lattice(0.25, 1.0).unwrap();
        let chi = geometry::rasterize(&set, 32, RasterRule::CenterSample).unwrap();
        let coeff = coefficient_field(&chi, 1.0, 0.0, MassRule::Constant(0.0)).unwrap();
        let asm = assemble(&coeff, &AssemblyBc::Periodic);
        // interior inclusion cells: every face has harmonic mean zero
        for c in 0..chi.grid.cells() {
            if !chi.cells[c] {
                continue;
            }
            let interior = (0..2).all(|ax| {
                [-1i64, 1].iter().all(|&d| chi.cells[chi.grid.neighbor(c, ax, d).unwrap()])
            });
            if interior {
                let r = c;
                let nnz: Vec<_> = (asm.op.row_ptr[r]..asm.op.row_ptr[r + 1])
                    .filter(|&i| asm.op.vals[i] != 0.0)
                    .collect();
                assert!(nnz.is_empty(), "interior soft cell must decouple");
            }
        }
    }

    #[test]
    fn random_coefficients_assemble_symmetric() {
        let grid = Grid::unit_torus(12, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a: Vec<f64> = (0..grid.cells()).map(|_| rng.gen_range(0.1..4.0)).collect();
        let m: Vec<f64> = (0..grid.cells()).map(|_| rng.gen_range(0.0..2.0)).collect();
        let coeff = CoeffField { grid, a, m };
        let asm = assemble(&coeff, &AssemblyBc::Periodic);
        assert_eq!(asm.op.symmetry_defect(), 0.0);

        let boxed = Grid::unit_box(12, 2);
        let coeff2 = CoeffField { grid: boxed, a: coeff.a.clone(), m: coeff.m.clone() };
        let asm2 = assemble(&coeff2, &AssemblyBc::DirichletZero);
        assert_eq!(asm2.op.symmetry_defect(), 0.0);
    }
}
