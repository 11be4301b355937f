//! Periodic cell problems: the resonant inclusion solution, soft-inclusion
//! correctors, massive and Dirichlet approximate correctors, the homogenized
//! matrix through its two equivalent formulas, and the flux/inclusion
//! correctors with their divergence identities.

use crate::error::{Error, Result};
use crate::geometry::IndicatorGrid;
use crate::linalg::{cg_solve, mean_zero_solve};
use crate::mesh::{
    assemble, coefficient_field, gradient, Assembly, AssemblyBc, CellMask, CoeffField, FaceField,
    Grid, GridFunction, MaskExterior, MassRule, NormKind,
};
use rayon::prelude::*;
use std::sync::Arc;

/// Cell solves feed dual-formula and symmetry checks at the 1e-10 level, so
/// they run two orders tighter than the general solver default.
pub const CELL_TOL: f64 = 1e-12;

fn max_iter_for(n: usize) -> usize {
    20_000 + 60 * n
}

#[derive(Debug, Clone)]
pub struct ResonantCell {
    /// zero outside the inclusion cells
    pub v: GridFunction,
    /// grid mean of `v` over the whole cell
    pub mean_v: f64,
}

/// Solve `v - lap v = 1` on the inclusion cells with zero boundary data at
/// the half-cell interface; `v` extends by zero outside.
pub fn solve_resonant_cell(chi: &IndicatorGrid, tol: f64) -> Result<ResonantCell> {
    let grid = chi.grid;
    let mask = Arc::new(CellMask::from_indicator(chi, true));
    if mask.is_empty() {
        let v = GridFunction::masked(mask, vec![]);
        return Ok(ResonantCell { v, mean_v: 0.0 });
    }
    let coeff = CoeffField::uniform(grid, 1.0, 1.0);
    let asm = assemble(
        &coeff,
        &AssemblyBc::Masked { mask: mask.clone(), exterior: MaskExterior::DirichletHalfCell },
    );
    let b = vec![grid.cell_volume(); mask.len()];
    let sol = cg_solve(&asm.op, &b, tol, max_iter_for(grid.n))?;
    let v = GridFunction::masked(mask, sol.x);
    let mean_v = v.grid_mean();
    Ok(ResonantCell { v, mean_v })
}

#[derive(Debug, Clone)]
pub enum CorrectorVariant {
    SoftRestricted,
    Massive { eps: f64 },
    DirichletDomain { eps: f64 },
}

/// Correctors for every grid direction, with their face gradients.
///
/// For the soft variant only faces between two complement cells carry
/// meaningful gradient values; all consumers weight faces by the two-level
/// coefficient, which vanishes elsewhere.
#[derive(Debug, Clone)]
pub struct CorrectorSet {
    pub variant: CorrectorVariant,
    pub grid: Grid,
    pub phi: Vec<GridFunction>,
    pub grad_phi: Vec<FaceField>,
}

/// Harmonic face coefficient, falling back to the cell's own value on the
/// outer boundary of a Dirichlet box.
fn face_coeff(coeff: &CoeffField, c: usize, axis: usize, dir: i64) -> f64 {
    match coeff.grid.neighbor(c, axis, dir) {
        Some(nb) => {
            let s = coeff.a[c] + coeff.a[nb];
            if s == 0.0 {
                0.0
            } else {
                2.0 * coeff.a[c] * coeff.a[nb] / s
            }
        }
        None => coeff.a[c],
    }
}

/// Right-hand side of a corrector problem in direction `axis`: the discrete
/// divergence of the coefficient times the unit vector, volume-scaled.
fn corrector_rhs(coeff: &CoeffField, asm: &Assembly, axis: usize) -> Vec<f64> {
    let grid = coeff.grid;
    let area = grid.h().powi(grid.dim as i32 - 1);
    let mut b = vec![0.0; asm.ndofs()];
    for d in 0..asm.ndofs() {
        let c = asm.cell_of_dof(d);
        let right = face_coeff(coeff, c, axis, 1);
        let left = face_coeff(coeff, c, axis, -1);
        b[d] = (right - left) * area;
    }
    b
}

fn dense_gradients(grid: Grid, phis: &[GridFunction]) -> Vec<FaceField> {
    phis.iter().map(|p| gradient(grid, &p.dense_values())).collect()
}

/// Soft-inclusion corrector: degrees of freedom on the complement only, zero
/// transmissibility into the inclusions, normalized to mean zero over the
/// complement cells.
pub fn solve_corrector_soft(chi: &IndicatorGrid, tol: f64) -> Result<CorrectorSet> {
    let grid = chi.grid;
    let comps = chi.complement_components();
    if comps != 1 {
        return Err(Error::Connectivity { components: comps });
    }
    let mask = Arc::new(CellMask::from_indicator(chi, false));
    let coeff = coefficient_field(chi, 1.0, 0.0, MassRule::Constant(0.0))?;
    let asm = assemble(
        &coeff,
        &AssemblyBc::Masked { mask: mask.clone(), exterior: MaskExterior::Neumann },
    );
    let phi: Result<Vec<GridFunction>> = (0..grid.dim)
        .into_par_iter()
        .map(|axis| {
            let b = corrector_rhs(&coeff, &asm, axis);
            let sol = mean_zero_solve(&asm.op, &b, tol, max_iter_for(grid.n))?;
            Ok(GridFunction::masked(mask.clone(), sol.x))
        })
        .collect();
    let phi = phi?;
    let grad_phi = dense_gradients(grid, &phi);
    Ok(CorrectorSet { variant: CorrectorVariant::SoftRestricted, grid, phi, grad_phi })
}

/// Massive approximate corrector: full-grid coefficient (1 outside, eps^2
/// inside) with an eps^2 mass everywhere.
pub fn solve_corrector_massive(chi: &IndicatorGrid, eps: f64, tol: f64) -> Result<CorrectorSet> {
    if !(eps > 0.0) {
        return Err(Error::Config(format!("massive corrector needs eps > 0, got {eps}")));
    }
    let grid = chi.grid;
    let coeff = coefficient_field(chi, 1.0, eps * eps, MassRule::Constant(eps * eps))?;
    let asm = assemble(&coeff, &AssemblyBc::Periodic);
    let phi: Result<Vec<GridFunction>> = (0..grid.dim)
        .into_par_iter()
        .map(|axis| {
            let b = corrector_rhs(&coeff, &asm, axis);
            let sol = cg_solve(&asm.op, &b, tol, max_iter_for(grid.n))?;
            Ok(GridFunction::dense(grid, crate::mesh::Bc::Periodic, sol.x))
        })
        .collect();
    let phi = phi?;
    let grad_phi = dense_gradients(grid, &phi);
    Ok(CorrectorSet { variant: CorrectorVariant::Massive { eps }, grid, phi, grad_phi })
}

/// Approximate corrector with zero Dirichlet data on the boundary of the
/// scaled domain, realized by tiling the periodic cell `tiles` times per axis
/// into a box. Returns the corrector set together with its energy density
/// for the convergence-of-energies diagnostic.
pub struct DirichletCorrector {
    pub set: CorrectorSet,
    /// mean of eps^2 phi^2 + a |e_i + grad phi|^2 over the box, per direction
    pub energy_density: Vec<f64>,
}

pub fn solve_corrector_dirichlet(
    chi: &IndicatorGrid,
    eps: f64,
    tiles: usize,
    tol: f64,
) -> Result<DirichletCorrector> {
    if !(eps > 0.0) {
        return Err(Error::Config(format!("dirichlet corrector needs eps > 0, got {eps}")));
    }
    if tiles == 0 {
        return Err(Error::Config("tile count must be positive".into()));
    }
    let tiled = chi.tile(tiles);
    let grid = Grid::new(tiled.grid.n, tiled.grid.dim, tiled.grid.extent, false);
    let boxed = IndicatorGrid { grid, cells: tiled.cells, provenance: tiled.provenance };
    let coeff = coefficient_field(&boxed, 1.0, eps * eps, MassRule::Constant(eps * eps))?;
    let asm = assemble(&coeff, &AssemblyBc::DirichletZero);
    let volume = grid.extent.powi(grid.dim as i32);
    let vol_cell = grid.cell_volume();
    let mut phis = Vec::with_capacity(grid.dim);
    let mut energy_density = Vec::with_capacity(grid.dim);
    for axis in 0..grid.dim {
        let b = corrector_rhs(&coeff, &asm, axis);
        let sol = cg_solve(&asm.op, &b, tol, max_iter_for(grid.n))?;
        // constant term of the quadratic energy: sum over axis faces of
        // a_f * w_f, with half weight on the boundary half-faces
        let mut c0 = 0.0;
        for c in 0..grid.cells() {
            for dir in [-1i64, 1] {
                let w = match grid.neighbor(c, axis, dir) {
                    Some(_) => 0.5 * vol_cell, // each interior face visited twice
                    None => 0.5 * vol_cell,
                };
                let a_f = face_coeff(&coeff, c, axis, dir);
                c0 += a_f * w;
            }
        }
        let b_dot_phi: f64 = b.iter().zip(&sol.x).map(|(bi, xi)| bi * xi).sum();
        energy_density.push((c0 - b_dot_phi) / volume);
        phis.push(GridFunction::dense(grid, crate::mesh::Bc::DirichletZero, sol.x));
    }
    let grad_phi = dense_gradients(grid, &phis);
    Ok(DirichletCorrector {
        set: CorrectorSet {
            variant: CorrectorVariant::DirichletDomain { eps },
            grid,
            phi: phis,
            grad_phi,
        },
        energy_density,
    })
}

/// 2x2 symmetric matrix helpers (d=1 uses the top-left entry).
pub fn sym_eigenvalues(m: &[[f64; 2]; 2], dim: usize) -> Vec<f64> {
    if dim == 1 {
        return vec![m[0][0]];
    }
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = (tr * tr - 4.0 * det).max(0.0).sqrt();
    vec![(tr - disc) / 2.0, (tr + disc) / 2.0]
}

#[derive(Debug, Clone)]
pub struct EffectiveMatrix {
    /// symmetrized flux form, the returned value
    pub a_bar: [[f64; 2]; 2],
    pub energy_form: [[f64; 2]; 2],
    pub flux_form: [[f64; 2]; 2],
    /// relative disagreement between the two formulas
    pub form_gap: f64,
}

/// Both cell formulas for the effective matrix: the energy bilinear form and
/// the flux average. They agree up to solver tolerance; a gap above 1e-6
/// relative is an internal-consistency error.
pub fn homogenized_matrix(corr: &CorrectorSet, chi: &IndicatorGrid) -> Result<EffectiveMatrix> {
    if !matches!(corr.variant, CorrectorVariant::SoftRestricted) {
        return Err(Error::Config("effective matrix requires the soft corrector".into()));
    }
    let grid = chi.grid;
    let dim = grid.dim;
    let coeff = coefficient_field(chi, 1.0, 0.0, MassRule::Constant(0.0))?;
    let vol_cell = grid.cell_volume();
    let total = grid.extent.powi(dim as i32);

    let mut energy = [[0.0f64; 2]; 2];
    let mut flux = [[0.0f64; 2]; 2];
    for k in 0..dim {
        for c in 0..grid.cells() {
            let a_f = face_coeff(&coeff, c, k, 1);
            if a_f == 0.0 {
                continue;
            }
            let w = a_f * vol_cell;
            for i in 0..dim {
                let gi = corr.grad_phi[i].comp[k][c] + if k == i { 1.0 } else { 0.0 };
                flux[i][k] += w * gi;
                for j in i..dim {
                    let gj = corr.grad_phi[j].comp[k][c] + if k == j { 1.0 } else { 0.0 };
                    energy[i][j] += w * gi * gj;
                }
            }
        }
    }
    for i in 0..dim {
        for j in 0..dim {
            flux[i][j] /= total;
            if j >= i {
                energy[i][j] /= total;
            } else {
                energy[i][j] = energy[j][i];
            }
        }
    }

    let mut gap = 0.0f64;
    let mut scale = 0.0f64;
    for i in 0..dim {
        for j in 0..dim {
            gap = gap.max((energy[i][j] - flux[i][j]).abs());
            scale = scale.max(flux[i][j].abs());
        }
    }
    let form_gap = gap / scale.max(1e-300);
    if form_gap > 1e-6 {
        return Err(Error::Consistency(format!(
            "energy and flux formulas disagree: relative gap {form_gap:.3e}"
        )));
    }
    let mut a_bar = [[0.0f64; 2]; 2];
    for i in 0..dim {
        for j in 0..dim {
            a_bar[i][j] = 0.5 * (flux[i][j] + flux[j][i]);
        }
    }
    Ok(EffectiveMatrix { a_bar, energy_form: energy, flux_form: flux, form_gap })
}

/// Flux defect field `q_i = 1_complement (e_i + grad phi_i) - a_bar e_i` on
/// faces, with the face means removed (their size is reported).
pub fn flux_defect_field(
    chi: &IndicatorGrid,
    corr: &CorrectorSet,
    a_bar: &[[f64; 2]; 2],
    i: usize,
) -> Result<(FaceField, f64)> {
    let grid = chi.grid;
    let coeff = coefficient_field(chi, 1.0, 0.0, MassRule::Constant(0.0))?;
    let mut q = FaceField::zeros(grid);
    for k in 0..grid.dim {
        for c in 0..grid.cells() {
            let a_f = face_coeff(&coeff, c, k, 1);
            let gi = corr.grad_phi[i].comp[k][c] + if k == i { 1.0 } else { 0.0 };
            q.comp[k][c] = a_f * gi - a_bar[k][i];
        }
    }
    let mut defect = 0.0f64;
    for k in 0..grid.dim {
        let mean: f64 = q.comp[k].iter().sum::<f64>() / grid.cells() as f64;
        defect = defect.max(mean.abs());
        q.comp[k].iter_mut().for_each(|v| *v -= mean);
    }
    Ok((q, defect))
}

/// Flux correctors in two dimensions: one independent node-centered component
/// per direction, stored so that `sigma(i, 1, 2) = -sigma(i, 2, 1)` exactly.
#[derive(Debug, Clone)]
pub struct FluxCorrectors {
    pub grid: Grid,
    /// independent component sigma_{i 0 1} per direction i, node-centered
    pub s: Vec<GridFunction>,
    /// worst discrete-L2 residual of grad_k sigma_ijk = (q_i)_j
    pub identity_residual: f64,
    /// largest face mean removed from a flux defect component
    pub mean_defect: f64,
}

impl FluxCorrectors {
    /// Stored antisymmetric component: zero when `j == k`, signed otherwise.
    pub fn sigma(&self, i: usize, j: usize, k: usize) -> Option<GridFunction> {
        if j == k || i >= self.s.len() {
            return None;
        }
        let base = &self.s[i];
        if j < k {
            Some(base.clone())
        } else {
            let neg: Vec<f64> = base.raw().iter().map(|v| -v).collect();
            Some(GridFunction::dense(base.grid, crate::mesh::Bc::Periodic, neg))
        }
    }
}

/// Node-centered curl of a face field.
fn face_curl(grid: Grid, q: &FaceField) -> Vec<f64> {
    let n = grid.n;
    let h = grid.h();
    let mut curl = vec![0.0; grid.cells()];
    let wrap = |v: i64| -> usize { v.rem_euclid(n as i64) as usize };
    for node in 0..grid.cells() {
        let (i, j) = grid.coords(node);
        let (i, j) = (i as i64, j as i64);
        // d1 q2 at the node: horizontally adjacent top-faces of row j-1
        let f2_right = grid.index(wrap(i), wrap(j - 1));
        let f2_left = grid.index(wrap(i - 1), wrap(j - 1));
        let d1_q2 = (q.comp[1][f2_right] - q.comp[1][f2_left]) / h;
        // d2 q1 at the node: vertically adjacent right-faces of column i-1
        let f1_top = grid.index(wrap(i - 1), wrap(j));
        let f1_bot = grid.index(wrap(i - 1), wrap(j - 1));
        let d2_q1 = (q.comp[0][f1_top] - q.comp[0][f1_bot]) / h;
        curl[node] = d1_q2 - d2_q1;
    }
    curl
}

/// Solve the flux-corrector problems and verify the divergence identity.
pub fn solve_flux_correctors(
    chi: &IndicatorGrid,
    corr: &CorrectorSet,
    a_bar: &[[f64; 2]; 2],
    tol: f64,
) -> Result<FluxCorrectors> {
    let grid = chi.grid;
    if grid.dim != 2 {
        return Ok(FluxCorrectors {
            grid,
            s: vec![],
            identity_residual: 0.0,
            mean_defect: 0.0,
        });
    }
    let n = grid.n;
    let h = grid.h();
    let coeff = CoeffField::uniform(grid, 1.0, 0.0);
    let asm = assemble(&coeff, &AssemblyBc::Periodic);
    let vol = grid.cell_volume();
    let wrap = |v: i64| -> usize { v.rem_euclid(n as i64) as usize };

    let mut s_fields = Vec::with_capacity(grid.dim);
    let mut worst = 0.0f64;
    let mut mean_defect = 0.0f64;
    for i in 0..grid.dim {
        let (q, defect) = flux_defect_field(chi, corr, a_bar, i)?;
        mean_defect = mean_defect.max(defect);
        let curl = face_curl(grid, &q);
        let rhs: Vec<f64> = curl.iter().map(|v| v * vol).collect();
        let sol = mean_zero_solve(&asm.op, &rhs, tol, max_iter_for(n))?;
        let s = sol.x;

        // residual of the identity on faces
        let mut res_sq = 0.0;
        let mut qnorm_sq = 0.0;
        for c in 0..grid.cells() {
            let (cx, cy) = grid.coords(c);
            let (cx, cy) = (cx as i64, cy as i64);
            // j=1 component on the right x-face of c
            let top = s[grid.index(wrap(cx + 1), wrap(cy + 1))];
            let bot = s[grid.index(wrap(cx + 1), wrap(cy))];
            let d2s = (top - bot) / h;
            let r1 = d2s - q.comp[0][c];
            // j=2 component on the top y-face of c
            let right = s[grid.index(wrap(cx + 1), wrap(cy + 1))];
            let left = s[grid.index(wrap(cx), wrap(cy + 1))];
            let d1s = (right - left) / h;
            let r2 = -d1s - q.comp[1][c];
            res_sq += (r1 * r1 + r2 * r2) * vol;
            qnorm_sq += (q.comp[0][c] * q.comp[0][c] + q.comp[1][c] * q.comp[1][c]) * vol;
        }
        let res = res_sq.sqrt();
        worst = worst.max(res);
        if res > 1e-6 * qnorm_sq.sqrt().max(1e-300) {
            return Err(Error::Consistency(format!(
                "flux corrector divergence identity residual {res:.3e} too large"
            )));
        }
        s_fields.push(GridFunction::dense(grid, crate::mesh::Bc::Periodic, s));
    }
    Ok(FluxCorrectors { grid, s: s_fields, identity_residual: worst, mean_defect })
}

#[derive(Debug, Clone)]
pub struct InclusionCorrectors {
    pub grid: Grid,
    /// component i lives on the positive i-faces
    pub theta: Vec<GridFunction>,
    /// discrete-L2 residual of div theta = v - mean v
    pub identity_residual: f64,
}

/// Solve `lap theta_i = grad_i v` (face-indexed, mean zero) and verify
/// `div theta = v - mean v`.
pub fn solve_inclusion_correctors(v: &GridFunction, tol: f64) -> Result<InclusionCorrectors> {
    let grid = v.grid;
    let n = grid.n;
    let h = grid.h();
    let vol = grid.cell_volume();
    let dense = v.dense_values();
    let mean_v = v.grid_mean();
    let coeff = CoeffField::uniform(grid, 1.0, 0.0);
    let asm = assemble(&coeff, &AssemblyBc::Periodic);

    let mut theta = Vec::with_capacity(grid.dim);
    for axis in 0..grid.dim {
        let mut rhs = vec![0.0; grid.cells()];
        for c in 0..grid.cells() {
            let nb = grid.neighbor(c, axis, 1).expect("torus");
            // lap theta = grad v  =>  A theta = -(grad_i v) h^d
            rhs[c] = -(dense[nb] - dense[c]) / h * vol;
        }
        let sol = mean_zero_solve(&asm.op, &rhs, tol, max_iter_for(n))?;
        theta.push(GridFunction::dense(grid, crate::mesh::Bc::Periodic, sol.x));
    }

    let mut res_sq = 0.0;
    for c in 0..grid.cells() {
        let mut div = 0.0;
        for axis in 0..grid.dim {
            let prev = grid.neighbor(c, axis, -1).expect("torus");
            div += (theta[axis].raw()[c] - theta[axis].raw()[prev]) / h;
        }
        let r = div - (dense[c] - mean_v);
        res_sq += r * r * vol;
    }
    let identity_residual = res_sq.sqrt();
    if identity_residual > 1e-6 {
        return Err(Error::Consistency(format!(
            "inclusion corrector identity residual {identity_residual:.3e} too large"
        )));
    }
    Ok(InclusionCorrectors { grid, theta, identity_residual })
}

/// Grid-max second moments of the corrector family (diagnostic only).
#[derive(Debug, Clone, Default, serde::Serialize)]
pub struct MomentReport {
    pub phi_sq_max: f64,
    pub sigma_sq_max: f64,
    pub theta_sq_max: f64,
}

pub fn corrector_moment_report(
    phi: &CorrectorSet,
    sigma: Option<&FluxCorrectors>,
    theta: Option<&InclusionCorrectors>,
) -> MomentReport {
    let cells = phi.grid.cells();
    let mut report = MomentReport::default();
    for c in 0..cells {
        let p: f64 = phi.phi.iter().map(|f| f.value(c) * f.value(c)).sum();
        report.phi_sq_max = report.phi_sq_max.max(p);
        if let Some(s) = sigma {
            let v: f64 = s.s.iter().map(|f| 2.0 * f.value(c) * f.value(c)).sum();
            report.sigma_sq_max = report.sigma_sq_max.max(v);
        }
        if let Some(t) = theta {
            let v: f64 = t.theta.iter().map(|f| f.value(c) * f.value(c)).sum();
            report.theta_sq_max = report.theta_sq_max.max(v);
        }
    }
    report
}

/// Residuals carried along with the homogenized data for reporting.
#[derive(Debug, Clone, Default, serde::Serialize)]
pub struct ResidualTable {
    pub form_gap: f64,
    pub sigma_identity: f64,
    pub theta_identity: f64,
    pub flux_mean_defect: f64,
}

/// Everything the macroscopic solvers need from one periodic cell.
#[derive(Debug, Clone)]
pub struct HomogenizedData {
    pub a_bar: [[f64; 2]; 2],
    pub mean_v: f64,
    pub vol_frac: f64,
    pub v: GridFunction,
    pub correctors: CorrectorSet,
    pub sigma: Option<FluxCorrectors>,
    pub theta: Option<InclusionCorrectors>,
    pub residuals: ResidualTable,
}

impl HomogenizedData {
    pub fn dim(&self) -> usize {
        self.correctors.grid.dim
    }
}

/// Full cell pipeline: resonant solution, correctors, effective matrix, and
/// (optionally) the flux/inclusion correctors with identity checks.
pub fn compute_homogenized_data(
    chi: &IndicatorGrid,
    with_flux_correctors: bool,
    tol: f64,
) -> Result<HomogenizedData> {
    let resonant = solve_resonant_cell(chi, tol)?;
    let correctors = solve_corrector_soft(chi, tol)?;
    let eff = homogenized_matrix(&correctors, chi)?;
    let vol_frac = chi.volume_fraction();
    let mut residuals = ResidualTable { form_gap: eff.form_gap, ..Default::default() };
    let (sigma, theta) = if with_flux_correctors {
        let s = solve_flux_correctors(chi, &correctors, &eff.a_bar, tol)?;
        let t = solve_inclusion_correctors(&resonant.v, tol)?;
        residuals.sigma_identity = s.identity_residual;
        residuals.flux_mean_defect = s.mean_defect;
        residuals.theta_identity = t.identity_residual;
        (Some(s), Some(t))
    } else {
        (None, None)
    };
    Ok(HomogenizedData {
        a_bar: eff.a_bar,
        mean_v: resonant.mean_v,
        vol_frac,
        v: resonant.v,
        correctors,
        sigma,
        theta,
        residuals,
    })
}

/// Distance between the complement gradients of two corrector sets, the
/// convergence quantity for the massive approximation.
pub fn complement_gradient_distance(
    chi: &IndicatorGrid,
    a: &CorrectorSet,
    b: &CorrectorSet,
    i: usize,
) -> f64 {
    let grid = chi.grid;
    let coeff = coefficient_field(chi, 1.0, 0.0, MassRule::Constant(0.0)).expect("two-level");
    let vol = grid.cell_volume();
    let mut sum = 0.0;
    for k in 0..grid.dim {
        for c in 0..grid.cells() {
            let a_f = face_coeff(&coeff, c, k, 1);
            if a_f == 0.0 {
                continue;
            }
            let d = a.grad_phi[i].comp[k][c] - b.grad_phi[i].comp[k][c];
            sum += d * d * vol;
        }
    }
    sum.sqrt()
}

/// L2 norm over all cells of a grid function (convenience wrapper).
pub fn l2_norm(f: &GridFunction) -> f64 {
    crate::mesh::norm(f.grid, &f.dense_values(), NormKind::L2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{self, GeometryModel, InclusionSet, RasterRule};

    fn empty_chi(n: usize, dim: usize) -> IndicatorGrid {
        IndicatorGrid::empty(Grid::new(n, dim, 1.0, true))
    }

    fn disc_chi(n: usize) -> IndicatorGrid {
        let set = geometry::sample_periodic_lattice(0.25, 1.0).unwrap();
        geometry::rasterize(&set, n, RasterRule::AreaThreshold).unwrap()
    }

    #[test]
    fn resonant_empty_is_zero() {
        let chi = empty_chi(16, 2);
        let r = solve_resonant_cell(&chi, CELL_TOL).unwrap();
        assert_eq!(r.mean_v, 0.0);
        assert_eq!(r.v.grid_mean(), 0.0);
    }

    #[test]
    fn resonant_1d_cosh_oracle() {
        // interval (1,3) on a period-4 line: v = 1 - cosh(x-2)/cosh(1),
        // grid mean (1 - tanh 1)/2
        let set = geometry::sample_interval_lattice(1.0, 4.0).unwrap();
        let chi = geometry::rasterize(&set, 1024, RasterRule::CenterSample).unwrap();
        let r = solve_resonant_cell(&chi, CELL_TOL).unwrap();
        let exact = (1.0 - 1.0f64.tanh()) / 2.0;
        assert!(
            (r.mean_v - exact).abs() < 1e-4,
            "mean_v {} vs {}",
            r.mean_v,
            exact
        );
        // 0 <= v <= 1 inside
        assert!(r.v.min() >= -1e-12 && r.v.max() <= 1.0 + 1e-12);
        assert!(r.mean_v < chi.volume_fraction());
    }

    #[test]
    fn soft_corrector_empty_f_gives_identity() {
        let chi = empty_chi(16, 2);
        let corr = solve_corrector_soft(&chi, CELL_TOL).unwrap();
        for phi in &corr.phi {
            assert!(phi.max_abs() < 1e-12);
        }
        let eff = homogenized_matrix(&corr, &chi).unwrap();
        assert!((eff.a_bar[0][0] - 1.0).abs() < 1e-12);
        assert!((eff.a_bar[1][1] - 1.0).abs() < 1e-12);
        assert!(eff.a_bar[0][1].abs() < 1e-14);
    }

    #[test]
    fn one_dimensional_effective_matrix_vanishes() {
        let set = geometry::sample_interval_lattice(0.25, 1.0).unwrap();
        let chi = geometry::rasterize(&set, 256, RasterRule::CenterSample).unwrap();
        let corr = solve_corrector_soft(&chi, CELL_TOL).unwrap();
        let eff = homogenized_matrix(&corr, &chi).unwrap();
        assert!(
            eff.a_bar[0][0].abs() < 1e-10,
            "1-d effective coefficient should vanish, got {}",
            eff.a_bar[0][0]
        );
    }

    #[test]
    fn disc_corrector_odd_symmetry_and_isotropy() {
        let n = 128;
        let chi = disc_chi(n);
        let corr = solve_corrector_soft(&chi, CELL_TOL).unwrap();
        // phi_1(x, y) = -phi_1(-x, y) about the center x = 1/2
        let dense = corr.phi[0].dense_values();
        let g = chi.grid;
        let mut worst = 0.0f64;
        for c in 0..g.cells() {
            let (i, j) = g.coords(c);
            let mirrored = g.index(n - 1 - i, j);
            worst = worst.max((dense[c] + dense[mirrored]).abs());
        }
        assert!(worst < 1e-10, "odd symmetry defect {worst}");

        let eff = homogenized_matrix(&corr, &chi).unwrap();
        assert!((eff.a_bar[0][0] - eff.a_bar[1][1]).abs() < 1e-10);
        assert!(eff.a_bar[0][1].abs() < 1e-10);
        assert!(eff.form_gap < 1e-6);
        // eigenvalues inside (0, 1 - volume fraction]
        let evs = sym_eigenvalues(&eff.a_bar, 2);
        let upper = 1.0 - chi.volume_fraction();
        for ev in evs {
            assert!(ev > 0.0 && ev <= upper + 1e-12, "eigenvalue {ev} outside (0, {upper}]");
        }
    }

    #[test]
    fn massive_corrector_empty_and_bound() {
        let chi = empty_chi(16, 2);
        let corr = solve_corrector_massive(&chi, 1.0, CELL_TOL).unwrap();
        for phi in &corr.phi {
            assert!(phi.max_abs() < 1e-12);
        }
        // a-priori energy bound at eps = 1: eps^2 E[phi^2] + E[a|grad phi|^2] <~ 1
        let chi = disc_chi(64);
        let corr = solve_corrector_massive(&chi, 1.0, CELL_TOL).unwrap();
        let grid = chi.grid;
        let phi0 = corr.phi[0].dense_values();
        let l2_sq: f64 =
            phi0.iter().map(|v| v * v).sum::<f64>() * grid.cell_volume();
        let mut grad_sq = 0.0;
        for k in 0..2 {
            for c in 0..grid.cells() {
                let v = corr.grad_phi[0].comp[k][c];
                grad_sq += v * v * grid.cell_volume();
            }
        }
        assert!(l2_sq + grad_sq < 4.0, "energy bound violated: {}", l2_sq + grad_sq);
    }

    #[test]
    fn massive_gradient_distance_decreases() {
        let chi = disc_chi(64);
        let soft = solve_corrector_soft(&chi, CELL_TOL).unwrap();
        let mut prev = f64::INFINITY;
        for eps in [0.25, 0.125, 0.0625] {
            let massive = solve_corrector_massive(&chi, eps, CELL_TOL).unwrap();
            let d = complement_gradient_distance(&chi, &massive, &soft, 0);
            assert!(d < prev, "distance {d} did not decrease (prev {prev})");
            prev = d;
        }
    }

    #[test]
    fn dirichlet_corrector_empty_and_bc() {
        let chi = empty_chi(8, 2);
        let dc = solve_corrector_dirichlet(&chi, 0.25, 4, CELL_TOL).unwrap();
        for phi in &dc.set.phi {
            assert!(phi.max_abs() < 1e-12);
        }
        // nonempty: solution stays finite and the boundary row sees the
        // half-cell Dirichlet (operator strictly dominant there)
        let chi = disc_chi(16);
        let dc = solve_corrector_dirichlet(&chi, 0.25, 4, CELL_TOL).unwrap();
        assert!(dc.set.phi[0].max_abs() < 10.0);
        assert_eq!(dc.set.grid.n, 64);
        assert!(!dc.set.grid.torus);
    }

    #[test]
    fn sigma_theta_identities_on_disc() {
        let chi = disc_chi(64);
        let data = compute_homogenized_data(&chi, true, CELL_TOL).unwrap();
        let sigma = data.sigma.as_ref().unwrap();
        assert!(sigma.identity_residual <= 1e-8, "sigma residual {}", sigma.identity_residual);
        let theta = data.theta.as_ref().unwrap();
        assert!(theta.identity_residual <= 1e-8, "theta residual {}", theta.identity_residual);
        // antisymmetry is exact by storage
        let s12 = sigma.sigma(0, 0, 1).unwrap();
        let s21 = sigma.sigma(0, 1, 0).unwrap();
        for c in 0..s12.grid.cells() {
            assert_eq!(s12.value(c), -s21.value(c));
        }
        assert!(sigma.sigma(0, 0, 0).is_none());
        // 0 <= v <= 1 and mean_v < vol_frac
        assert!(data.v.min() >= -1e-12);
        assert!(data.v.max() <= 1.0 + 1e-12);
        assert!(data.mean_v > 0.0 && data.mean_v < data.vol_frac);
    }

    #[test]
    fn sigma_theta_trivial_inputs() {
        let chi = empty_chi(16, 2);
        let data = compute_homogenized_data(&chi, true, CELL_TOL).unwrap();
        let sigma = data.sigma.as_ref().unwrap();
        for s in &sigma.s {
            assert!(s.max_abs() < 1e-12);
        }
        let theta = data.theta.as_ref().unwrap();
        for t in &theta.theta {
            assert!(t.max_abs() < 1e-12);
        }
    }

    #[test]
    fn corrector_gradient_mean_is_zero() {
        let chi = disc_chi(32);
        let corr = solve_corrector_soft(&chi, CELL_TOL).unwrap();
        // dense periodic extension: every gradient component telescopes
        for i in 0..2 {
            for k in 0..2 {
                let mean: f64 = corr.grad_phi[i].comp[k].iter().sum::<f64>()
                    / chi.grid.cells() as f64;
                assert!(mean.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rotation_conjugates_effective_matrix() {
        // quarter-turn of the indicator conjugates a_bar by the rotation;
        // use an anisotropic two-disc geometry so the test is informative
        let set = InclusionSet {
            model: GeometryModel::Manual,
            seed: 0,
            period: 1.0,
            dim: 2,
            periodic: true,
            inclusions: vec![
                geometry::Inclusion {
                    id: 0,
                    shape: geometry::Shape::Disc { center: [0.3, 0.5], radius: 0.12 },
                },
                geometry::Inclusion {
                    id: 1,
                    shape: geometry::Shape::Disc { center: [0.7, 0.5], radius: 0.12 },
                },
            ],
            saturated: false,
            warnings: Vec::new(),
        };
        let n = 96;
        let chi = geometry::rasterize(&set, n, RasterRule::AreaThreshold).unwrap();
        let eff = homogenized_matrix(&solve_corrector_soft(&chi, CELL_TOL).unwrap(), &chi).unwrap();

        // rotate the raster by 90 degrees: (i, j) -> (n-1-j, i)
        let g = chi.grid;
        let mut rotated = IndicatorGrid::empty(g);
        for c in 0..g.cells() {
            let (i, j) = g.coords(c);
            rotated.cells[g.index(n - 1 - j, i)] = chi.cells[c];
        }
        let eff_rot =
            homogenized_matrix(&solve_corrector_soft(&rotated, CELL_TOL).unwrap(), &rotated)
                .unwrap();
        // R a R^T with R = [[0,-1],[1,0]] swaps the diagonal entries
        assert!((eff_rot.a_bar[0][0] - eff.a_bar[1][1]).abs() < 1e-10);
        assert!((eff_rot.a_bar[1][1] - eff.a_bar[0][0]).abs() < 1e-10);
        assert!((eff_rot.a_bar[0][1] + eff.a_bar[0][1]).abs() < 1e-10);
    }
}
