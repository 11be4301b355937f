//! Solvers: Jacobi-preconditioned conjugate gradient, a dense direct oracle,
//! and mean-zero solves for singular periodic systems.

use crate::error::{Error, Result};
use crate::mesh::SparseOperator;
use rayon::prelude::*;

pub const DEFAULT_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct CgSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub rel_residual: f64,
    pub history: Vec<f64>,
}

/// Deterministic dot product: fixed-size chunk sums combined in order, so the
/// result does not depend on the rayon thread count.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    const CHUNK: usize = 4096;
    if a.len() <= CHUNK {
        return a.iter().zip(b).map(|(x, y)| x * y).sum();
    }
    let partials: Vec<f64> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(ca, cb)| ca.iter().zip(cb).map(|(x, y)| x * y).sum::<f64>())
        .collect();
    partials.iter().sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.par_chunks_mut(4096).zip(x.par_chunks(4096)).for_each(|(yc, xc)| {
        for (yi, xi) in yc.iter_mut().zip(xc) {
            *yi += alpha * xi;
        }
    });
}

struct CgCore {
    x: Vec<f64>,
    history: Vec<f64>,
    converged: bool,
    indefinite: Option<f64>,
}

fn cg_core(a: &SparseOperator, b: &[f64], tol: f64, max_iter: usize) -> CgCore {
    let n = a.nrows;
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        return CgCore { x: vec![0.0; n], history: vec![], converged: true, indefinite: None };
    }
    let inv_diag: Vec<f64> =
        a.diag().iter().map(|&d| if d > 0.0 { 1.0 / d } else { 0.0 }).collect();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut history = Vec::new();
    for _ in 0..max_iter {
        a.matvec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return CgCore { x, history, converged: false, indefinite: Some(pap) };
        }
        let alpha = rz / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        let rnorm = dot(&r, &r).sqrt();
        history.push(rnorm / bnorm);
        if rnorm <= tol * bnorm {
            return CgCore { x, history, converged: true, indefinite: None };
        }
        z.par_chunks_mut(4096)
            .zip(r.par_chunks(4096))
            .zip(inv_diag.par_chunks(4096))
            .for_each(|((zc, rc), dc)| {
                for ((zi, ri), di) in zc.iter_mut().zip(rc).zip(dc) {
                    *zi = ri * di;
                }
            });
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        p.par_chunks_mut(4096).zip(z.par_chunks(4096)).for_each(|(pc, zc)| {
            for (pi, zi) in pc.iter_mut().zip(zc) {
                *pi = zi + beta * *pi;
            }
        });
    }
    CgCore { x, history, converged: false, indefinite: None }
}

/// Preconditioned CG for symmetric positive definite systems.
/// Terminates when ||b - Ax|| <= tol * ||b||.
pub fn cg_solve(a: &SparseOperator, b: &[f64], tol: f64, max_iter: usize) -> Result<CgSolution> {
    assert_eq!(b.len(), a.nrows);
    let core = cg_core(a, b, tol, max_iter);
    if let Some(pap) = core.indefinite {
        return Err(Error::Solver {
            message: format!("matrix not positive definite (p'Ap = {pap:.3e})"),
            history: core.history,
        });
    }
    if !core.converged {
        return Err(Error::Solver {
            message: format!(
                "cg did not reach {tol:.1e} in {max_iter} iterations (residual {:.3e})",
                core.history.last().copied().unwrap_or(f64::NAN)
            ),
            history: core.history,
        });
    }
    let rel_residual = core.history.last().copied().unwrap_or(0.0);
    Ok(CgSolution { x: core.x, iterations: core.history.len(), rel_residual, history: core.history })
}

/// Gaussian elimination with partial pivoting. Test oracle; refuses systems
/// larger than 4096 unknowns.
pub fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = a.len();
    if n > 4096 {
        return Err(Error::Config(format!("dense solve limited to 4096 unknowns, got {n}")));
    }
    assert_eq!(b.len(), n);
    let scale: f64 = a
        .iter()
        .flat_map(|row| row.iter())
        .fold(0.0f64, |m, &v| m.max(v.abs()));
    for k in 0..n {
        let (piv, pmax) = (k..n)
            .map(|r| (r, a[r][k].abs()))
            .max_by(|x, y| x.1.partial_cmp(&y.1).unwrap())
            .unwrap();
        if pmax <= scale * 1e-14 {
            return Err(Error::Solver {
                message: format!("matrix singular to working precision at column {k}"),
                history: vec![],
            });
        }
        a.swap(k, piv);
        b.swap(k, piv);
        for r in (k + 1)..n {
            let f = a[r][k] / a[k][k];
            if f == 0.0 {
                continue;
            }
            // split borrow of the pivot row
            let (top, bottom) = a.split_at_mut(k + 1);
            let pivot_row = &top[k];
            let row = &mut bottom[r - k - 1];
            for c in k..n {
                row[c] -= f * pivot_row[c];
            }
            b[r] -= f * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let mut s = b[k];
        for c in (k + 1)..n {
            s -= a[k][c] * x[c];
        }
        x[k] = s / a[k][k];
    }
    Ok(x)
}

#[derive(Debug, Clone)]
pub struct MeanZeroSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub rel_residual: f64,
    /// mean removed from the right-hand side before solving
    pub removed_mean: f64,
    /// set when the removed mean exceeded the compatibility threshold
    pub compatibility_warning: bool,
}

/// Solve `A x = b` for a singular operator whose kernel is the constants
/// (periodic pure-Neumann). The right-hand side is projected to mean zero and
/// the returned solution has grid mean exactly zero.
pub fn mean_zero_solve(
    a: &SparseOperator,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<MeanZeroSolution> {
    let n = a.nrows;
    assert_eq!(b.len(), n);
    let mean = b.iter().sum::<f64>() / n as f64;
    let bnorm = dot(b, b).sqrt();
    let compatibility_warning = mean.abs() * (n as f64).sqrt() > 1e-8 * bnorm && bnorm > 0.0;
    let mut rhs: Vec<f64> = b.iter().map(|v| v - mean).collect();
    // guard against drift out of the mean-zero subspace
    let project = |v: &mut Vec<f64>| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter_mut().for_each(|vi| *vi -= m);
    };
    project(&mut rhs);

    let rhsnorm = dot(&rhs, &rhs).sqrt();
    if rhsnorm == 0.0 {
        return Ok(MeanZeroSolution {
            x: vec![0.0; n],
            iterations: 0,
            rel_residual: 0.0,
            removed_mean: mean,
            compatibility_warning,
        });
    }

    let inv_diag: Vec<f64> =
        a.diag().iter().map(|&d| if d > 0.0 { 1.0 / d } else { 0.0 }).collect();
    let mut x = vec![0.0; n];
    let mut r = rhs.clone();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    project(&mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut history = Vec::new();
    for it in 0..max_iter {
        a.matvec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::Solver {
                message: format!("deflated operator not positive definite (p'Ap = {pap:.3e})"),
                history,
            });
        }
        let alpha = rz / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        project(&mut r);
        let rnorm = dot(&r, &r).sqrt();
        history.push(rnorm / rhsnorm);
        if rnorm <= tol * rhsnorm {
            project(&mut x);
            return Ok(MeanZeroSolution {
                x,
                iterations: it + 1,
                rel_residual: rnorm / rhsnorm,
                removed_mean: mean,
                compatibility_warning,
            });
        }
        for ((zi, ri), di) in z.iter_mut().zip(&r).zip(&inv_diag) {
            *zi = ri * di;
        }
        project(&mut z);
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    Err(Error::Solver {
        message: format!("mean-zero cg did not reach {tol:.1e} in {max_iter} iterations"),
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{assemble, AssemblyBc, CoeffField, Grid};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn identity_mass(n: usize) -> SparseOperator {
        SparseOperator {
            nrows: n,
            row_ptr: (0..=n).collect(),
            cols: (0..n as u32).collect(),
            vals: vec![1.0; n],
            symmetric: true,
        }
    }

    #[test]
    fn identity_system_returns_rhs() {
        let a = identity_mass(10);
        let b: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let sol = cg_solve(&a, &b, 1e-12, 100).unwrap();
        for (xi, bi) in sol.x.iter().zip(&b) {
            assert!((xi - bi).abs() < 1e-10);
        }
    }

    #[test]
    fn constant_solution_1d() {
        // u - u'' = 1 periodic has u = 1
        let grid = Grid::new(64, 1, 1.0, true);
        let coeff = CoeffField::uniform(grid, 1.0, 1.0);
        let asm = assemble(&coeff, &AssemblyBc::Periodic);
        let b = vec![grid.cell_volume(); grid.cells()];
        let sol = cg_solve(&asm.op, &b, 1e-12, 1000).unwrap();
        for v in &sol.x {
            assert!((v - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn cg_residual_history_monotone_enough() {
        // the A-norm error is monotone; check the recorded residuals reach
        // the tolerance and the energy error shrinks between restarts
        let grid = Grid::new(16, 2, 1.0, true);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a: Vec<f64> = (0..grid.cells()).map(|_| rng.gen_range(0.3..3.0)).collect();
        let coeff = CoeffField { grid, a, m: vec![1.0; grid.cells()] };
        let asm = assemble(&coeff, &AssemblyBc::Periodic);
        let b: Vec<f64> = (0..grid.cells()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let full = cg_solve(&asm.op, &b, 1e-12, 4000).unwrap();
        let exact = &full.x;
        let energy = |x: &[f64]| {
            let mut d: Vec<f64> = x.iter().zip(exact).map(|(a, b)| a - b).collect();
            let mut ad = vec![0.0; d.len()];
            asm.op.matvec(&d, &mut ad);
            let e = dot(&d, &ad);
            d.clear();
            e
        };
        let mut prev = f64::INFINITY;
        for k in [1usize, 2, 4, 8, 16, 32] {
            // rerunning from the same start reproduces the k-th iterate
            let partial = cg_core(&asm.op, &b, 0.0, k).x;
            let e = energy(&partial);
            assert!(e <= prev * (1.0 + 1e-12), "energy error grew at {k}");
            prev = e;
        }
    }

    #[test]
    fn dense_solve_2x2() {
        let x = dense_solve(vec![vec![2.0, 1.0], vec![1.0, 2.0]], vec![3.0, 3.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn dense_solve_hilbert4() {
        // H4 x = b with x = (1,1,1,1); b_i = sum_j 1/(i+j-1)
        let h: Vec<Vec<f64>> =
            (0..4).map(|i| (0..4).map(|j| 1.0 / ((i + j + 1) as f64)).collect()).collect();
        let b: Vec<f64> = h.iter().map(|row| row.iter().sum()).collect();
        let x = dense_solve(h, b).unwrap();
        for v in x {
            assert!((v - 1.0).abs() < 1e-9, "hilbert solve off: {v}");
        }
    }

    #[test]
    fn dense_solve_rejects_singular() {
        let a = vec![vec![1.0, 2.0], vec![2.0, 4.0]];
        assert!(dense_solve(a, vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn cg_matches_dense_on_random_spd() {
        let grid = Grid::new(32, 2, 1.0, false);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let a: Vec<f64> = (0..grid.cells()).map(|_| rng.gen_range(0.2..5.0)).collect();
            let m: Vec<f64> = (0..grid.cells()).map(|_| rng.gen_range(0.5..2.0)).collect();
            let coeff = CoeffField { grid, a, m };
            let asm = assemble(&coeff, &AssemblyBc::DirichletZero);
            let b: Vec<f64> = (0..grid.cells()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let cg = cg_solve(&asm.op, &b, 1e-14, 20000).unwrap();
            let direct = dense_solve(asm.op.to_dense(), b).unwrap();
            let num: f64 = cg.x.iter().zip(&direct).map(|(a, b)| (a - b) * (a - b)).sum();
            let den: f64 = direct.iter().map(|v| v * v).sum();
            assert!(num.sqrt() <= 1e-8 * den.sqrt(), "cg-dense gap {:.2e}", num.sqrt() / den.sqrt());
        }
    }

    #[test]
    fn mean_zero_fourier_oracle() {
        // -u'' = sin(2 pi x) => u = sin(2 pi x)/(4 pi^2), second order in h
        let n = 256;
        let grid = Grid::new(n, 1, 1.0, true);
        let coeff = CoeffField::uniform(grid, 1.0, 0.0);
        let asm = assemble(&coeff, &AssemblyBc::Periodic);
        let two_pi = 2.0 * std::f64::consts::PI;
        let b: Vec<f64> = (0..n)
            .map(|i| (two_pi * (i as f64 + 0.5) * grid.h()).sin() * grid.cell_volume())
            .collect();
        let sol = mean_zero_solve(&asm.op, &b, 1e-12, 4000).unwrap();
        assert!(!sol.compatibility_warning);
        let mut worst = 0.0f64;
        for i in 0..n {
            let exact = (two_pi * (i as f64 + 0.5) * grid.h()).sin() / (two_pi * two_pi);
            worst = worst.max((sol.x[i] - exact).abs());
        }
        assert!(worst < 5e-6, "fourier defect {worst}");
        let mean: f64 = sol.x.iter().sum::<f64>() / n as f64;
        let maxabs = sol.x.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        assert!(mean.abs() <= 1e-14 * maxabs.max(1e-300));
    }

    #[test]
    fn m_matrix_maximum_principle_random_coefficients() {
        // nonnegative data implies a nonnegative solution, and the energy
        // identity holds to round-off
        let grid = Grid::new(24, 2, 1.0, false);
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..5 {
            let a: Vec<f64> = (0..grid.cells()).map(|_| rng.gen_range(0.05..8.0)).collect();
            let m: Vec<f64> = (0..grid.cells()).map(|_| rng.gen_range(0.0..2.0)).collect();
            let coeff = CoeffField { grid, a, m };
            let asm = assemble(&coeff, &AssemblyBc::DirichletZero);
            let b: Vec<f64> =
                (0..grid.cells()).map(|_| rng.gen_range(0.0..1.0) * grid.cell_volume()).collect();
            let sol = cg_solve(&asm.op, &b, 1e-13, 50_000).unwrap();
            let max = sol.x.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()));
            let min = sol.x.iter().fold(f64::INFINITY, |acc, &v| acc.min(v));
            assert!(min >= -1e-10 * max, "maximum principle violated: min {min}, max {max}");
            let mut au = vec![0.0; b.len()];
            asm.op.matvec(&sol.x, &mut au);
            let ub: f64 = sol.x.iter().zip(&b).map(|(x, y)| x * y).sum();
            let uau: f64 = sol.x.iter().zip(&au).map(|(x, y)| x * y).sum();
            assert!((ub - uau).abs() <= 1e-10 * ub.abs().max(uau.abs()));
        }
    }

    #[test]
    fn mean_zero_zero_rhs() {
        let grid = Grid::new(16, 1, 1.0, true);
        let coeff = CoeffField::uniform(grid, 1.0, 0.0);
        let asm = assemble(&coeff, &AssemblyBc::Periodic);
        let sol = mean_zero_solve(&asm.op, &vec![0.0; 16], 1e-12, 100).unwrap();
        assert!(sol.x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mean_zero_constant_rhs_warns() {
        let grid = Grid::new(16, 1, 1.0, true);
        let coeff = CoeffField::uniform(grid, 1.0, 0.0);
        let asm = assemble(&coeff, &AssemblyBc::Periodic);
        let sol = mean_zero_solve(&asm.op, &vec![0.7; 16], 1e-12, 100).unwrap();
        assert!(sol.compatibility_warning);
        assert!((sol.removed_mean - 0.7).abs() < 1e-15);
        assert!(sol.x.iter().all(|&v| v.abs() < 1e-12));
    }
}
