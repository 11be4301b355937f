//! Structured-grid discrete calculus: cell-centered fields, two-level
//! coefficient fields, finite-volume operators with harmonic face averaging,
//! face gradients/divergence and masked norms.

mod calculus;
mod operator;

pub use calculus::{divergence, gradient, norm, norm_masked, FaceField, NormKind};
pub use operator::{assemble, Assembly, AssemblyBc, MaskExterior, SparseOperator};

use crate::error::{Error, Result};
use crate::geometry::IndicatorGrid;
use std::sync::Arc;

/// Uniform cell-centered grid over a cube `[0, extent)^dim`.
///
/// `torus` selects periodic adjacency; otherwise the grid is a box and
/// faces on the outer boundary have no neighbor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub n: usize,
    pub dim: usize,
    pub extent: f64,
    pub torus: bool,
}

impl Grid {
    pub fn new(n: usize, dim: usize, extent: f64, torus: bool) -> Grid {
        assert!(dim == 1 || dim == 2, "only dim 1 and 2 are supported");
        assert!(n >= 2 && extent > 0.0);
        Grid { n, dim, extent, torus }
    }

    /// Unit-extent torus, the default habitat of cell problems.
    pub fn unit_torus(n: usize, dim: usize) -> Grid {
        Grid::new(n, dim, 1.0, true)
    }

    pub fn unit_box(n: usize, dim: usize) -> Grid {
        Grid::new(n, dim, 1.0, false)
    }

    #[inline]
    pub fn h(&self) -> f64 {
        self.extent / self.n as f64
    }

    #[inline]
    pub fn cells(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    #[inline]
    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.dim as i32)
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.n && (self.dim == 2 || j == 0));
        i + self.n * j
    }

    #[inline]
    pub fn coords(&self, c: usize) -> (usize, usize) {
        (c % self.n, c / self.n)
    }

    pub fn cell_center(&self, c: usize) -> [f64; 2] {
        let (i, j) = self.coords(c);
        let h = self.h();
        [(i as f64 + 0.5) * h, (j as f64 + 0.5) * h]
    }

    /// Neighbor of `c` along `axis` in direction `dir` (+1 / -1).
    /// Returns `None` across a box boundary.
    #[inline]
    pub fn neighbor(&self, c: usize, axis: usize, dir: i64) -> Option<usize> {
        let n = self.n;
        let (i, j) = self.coords(c);
        let x = if axis == 0 { i } else { j };
        let moved = if self.torus {
            Some(((x as i64 + dir).rem_euclid(n as i64)) as usize)
        } else {
            let t = x as i64 + dir;
            if t < 0 || t >= n as i64 {
                None
            } else {
                Some(t as usize)
            }
        }?;
        Some(if axis == 0 { self.index(moved, j) } else { self.index(i, moved) })
    }
}

/// Subset of grid cells carrying degrees of freedom, with a cell -> dof map.
#[derive(Debug, Clone)]
pub struct CellMask {
    pub grid: Grid,
    cells: Vec<usize>,
    dof_of_cell: Vec<i32>,
}

impl CellMask {
    pub fn from_cells(grid: Grid, mut cells: Vec<usize>) -> CellMask {
        cells.sort_unstable();
        cells.dedup();
        let mut dof_of_cell = vec![-1i32; grid.cells()];
        for (k, &c) in cells.iter().enumerate() {
            dof_of_cell[c] = k as i32;
        }
        CellMask { grid, cells, dof_of_cell }
    }

    /// Cells where the indicator equals `inside`.
    pub fn from_indicator(chi: &IndicatorGrid, inside: bool) -> CellMask {
        let cells = (0..chi.grid.cells()).filter(|&c| chi.cells[c] == inside).collect();
        CellMask::from_cells(chi.grid, cells)
    }

    pub fn full(grid: Grid) -> CellMask {
        CellMask::from_cells(grid, (0..grid.cells()).collect())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    #[inline]
    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    #[inline]
    pub fn dof(&self, cell: usize) -> Option<usize> {
        let d = self.dof_of_cell[cell];
        if d < 0 {
            None
        } else {
            Some(d as usize)
        }
    }

    #[inline]
    pub fn contains(&self, cell: usize) -> bool {
        self.dof_of_cell[cell] >= 0
    }
}

/// Boundary-condition tag of a grid function.
#[derive(Debug, Clone)]
pub enum Bc {
    Periodic,
    DirichletZero,
    /// Supported on the mask cells, implicitly zero outside.
    MaskedDirichlet(Arc<CellMask>),
}

/// Cell-centered scalar field. Masked functions store values only on the
/// mask cells; `value` and `dense` extend them by zero.
#[derive(Debug, Clone)]
pub struct GridFunction {
    pub grid: Grid,
    pub bc: Bc,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn dense(grid: Grid, bc: Bc, values: Vec<f64>) -> GridFunction {
        assert!(!matches!(bc, Bc::MaskedDirichlet(_)));
        assert_eq!(values.len(), grid.cells());
        GridFunction { grid, bc, values }
    }

    pub fn masked(mask: Arc<CellMask>, values: Vec<f64>) -> GridFunction {
        assert_eq!(values.len(), mask.len());
        GridFunction { grid: mask.grid, bc: Bc::MaskedDirichlet(mask), values }
    }

    pub fn zeros(grid: Grid, bc: Bc) -> GridFunction {
        match bc {
            Bc::MaskedDirichlet(m) => {
                let k = m.len();
                GridFunction::masked(m, vec![0.0; k])
            }
            other => GridFunction::dense(grid, other, vec![0.0; grid.cells()]),
        }
    }

    #[inline]
    pub fn value(&self, cell: usize) -> f64 {
        match &self.bc {
            Bc::MaskedDirichlet(mask) => match mask.dof(cell) {
                Some(d) => self.values[d],
                None => 0.0,
            },
            _ => self.values[cell],
        }
    }

    /// Raw storage: dense cell order, or mask order for masked functions.
    pub fn raw(&self) -> &[f64] {
        &self.values
    }

    pub fn dense_values(&self) -> Vec<f64> {
        match &self.bc {
            Bc::MaskedDirichlet(mask) => {
                let mut out = vec![0.0; self.grid.cells()];
                for (d, &c) in mask.cells().iter().enumerate() {
                    out[c] = self.values[d];
                }
                out
            }
            _ => self.values.clone(),
        }
    }

    /// Mean over all grid cells (masked values count as zero outside).
    pub fn grid_mean(&self) -> f64 {
        let sum: f64 = self.values.iter().sum();
        sum / self.grid.cells() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |m, &v| m.min(v))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v))
    }
}

/// Mass rule for [`coefficient_field`].
#[derive(Debug, Clone, Copy)]
pub enum MassRule {
    Constant(f64),
    /// Separate mass levels inside/outside the indicator.
    TwoLevel { inside: f64, outside: f64 },
}

/// Per-cell conductivity and mass built from an indicator grid.
#[derive(Debug, Clone)]
pub struct CoeffField {
    pub grid: Grid,
    pub a: Vec<f64>,
    pub m: Vec<f64>,
}

impl CoeffField {
    pub fn uniform(grid: Grid, a: f64, m: f64) -> CoeffField {
        CoeffField { grid, a: vec![a; grid.cells()], m: vec![m; grid.cells()] }
    }
}

/// Two-level conductivity: `outside` on complement cells, `inside` on
/// indicator cells; mass per the given rule.
pub fn coefficient_field(
    chi: &IndicatorGrid,
    outside: f64,
    inside: f64,
    mass: MassRule,
) -> Result<CoeffField> {
    if outside <= 0.0 {
        return Err(Error::Config(format!("outside conductivity must be > 0, got {outside}")));
    }
    if inside < 0.0 {
        return Err(Error::Config(format!("inside conductivity must be >= 0, got {inside}")));
    }
    let neg_mass = match mass {
        MassRule::Constant(v) => v < 0.0,
        MassRule::TwoLevel { inside, outside } => inside < 0.0 || outside < 0.0,
    };
    if neg_mass {
        return Err(Error::Config("mass must be nonnegative".into()));
    }
    let grid = chi.grid;
    let mut a = Vec::with_capacity(grid.cells());
    let mut m = Vec::with_capacity(grid.cells());
    for c in 0..grid.cells() {
        let is_in = chi.cells[c];
        a.push(if is_in { inside } else { outside });
        m.push(match mass {
            MassRule::Constant(v) => v,
            MassRule::TwoLevel { inside, outside } => {
                if is_in {
                    inside
                } else {
                    outside
                }
            }
        });
    }
    Ok(CoeffField { grid, a, m })
}
