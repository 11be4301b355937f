//! Verification suite: every release-gating check as a callable criterion,
//! shared by the `verify` subcommand and the acceptance test target.

use crate::cell::{
    complement_gradient_distance, compute_homogenized_data, solve_corrector_massive,
    solve_corrector_soft, solve_resonant_cell, sym_eigenvalues, CELL_TOL,
};
use crate::dporosity::{
    build_eps_problem, run_coupled_sweep, run_rate_sweep, solve_auxiliary, solve_eps_problem,
    solve_homogenized, verify_weak_limit, DomainKind, Forcing, SweepConfig, SweepGeometry,
    EPS_TOL,
};
use crate::error::{Error, Result};
use crate::extlab::{extension_constant_survey, SurveyOptions};
use crate::geometry::{
    self, rasterize, GeometryModel, Inclusion, InclusionSet, RasterRule, Shape,
};
use crate::linalg::{cg_solve, dense_solve, mean_zero_solve};
use crate::mesh::{assemble, AssemblyBc, CoeffField, Grid, NormKind};
use crate::stochastic::derive_seed;
use std::time::{Duration, Instant};

#[derive(Debug, Clone)]
pub struct CriterionResult {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub runtime: Duration,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!(
            "criterion {:02} [{}] {:<28} {:>7.1?}  {}",
            self.id,
            if self.passed { "pass" } else { "FAIL" },
            self.name,
            self.runtime,
            self.detail
        )
    }
}

fn finish(
    id: usize,
    name: &'static str,
    start: Instant,
    outcome: Result<(bool, String)>,
) -> CriterionResult {
    let (passed, detail) = match outcome {
        Ok((p, d)) => (p, d),
        Err(e) => (false, format!("error: {e}")),
    };
    CriterionResult { id, name, passed, detail, runtime: start.elapsed() }
}

/// Unit-period disc lattice with the disc off-center in the cell: breaks the
/// tile-boundary symmetry that otherwise cancels the boundary layer.
pub fn offcenter_disc_lattice() -> InclusionSet {
    InclusionSet {
        model: GeometryModel::Manual,
        seed: 0,
        period: 1.0,
        dim: 2,
        periodic: true,
        inclusions: vec![Inclusion {
            id: 0,
            shape: Shape::Disc { center: [0.3, 0.65], radius: 0.25 },
        }],
        saturated: false,
        warnings: Vec::new(),
    }
}

fn tangent_disc_pair() -> InclusionSet {
    InclusionSet {
        model: GeometryModel::Manual,
        seed: 0,
        period: 1.0,
        dim: 2,
        periodic: true,
        inclusions: vec![
            Inclusion { id: 0, shape: Shape::Disc { center: [0.3, 0.5], radius: 0.2 } },
            Inclusion { id: 1, shape: Shape::Disc { center: [0.7, 0.5], radius: 0.2 } },
        ],
        saturated: false,
        warnings: Vec::new(),
    }
}

fn sine_forcing(grid: Grid) -> Vec<f64> {
    let pi = std::f64::consts::PI;
    (0..grid.cells())
        .map(|c| {
            let x = grid.cell_center(c);
            (pi * x[0]).sin() * if grid.dim == 2 { (pi * x[1]).sin() } else { 1.0 }
        })
        .collect()
}

/// Modified Bessel functions of the first kind by power series (adequate for
/// arguments of order one).
fn bessel_i(order: usize, x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = half.powi(order as i32);
    for k in 1..=order {
        term /= k as f64;
    }
    let mut sum = term;
    for k in 1..40 {
        term *= half * half / (k as f64 * (k + order) as f64);
        sum += term;
        if term < 1e-18 * sum {
            break;
        }
    }
    sum
}

// ---------------------------------------------------------------------------

/// With no inclusions the scaled problem and the homogenized problem share
/// one operator; solutions agree to solver accuracy for distinct eps.
pub fn criterion_01_empty_identity(quick: bool) -> CriterionResult {
    let start = Instant::now();
    let run = || -> Result<(bool, String)> {
        let n = if quick { 64 } else { 256 };
        let empty = InclusionSet {
            model: GeometryModel::Manual,
            seed: 0,
            period: 1.0,
            dim: 2,
            periodic: true,
            inclusions: vec![],
            saturated: false,
            warnings: Vec::new(),
        };
        let grid = Grid::unit_box(n, 2);
        let f = sine_forcing(grid);
        let chi_cell = rasterize(&empty, 16, RasterRule::AreaThreshold)?;
        let hd = compute_homogenized_data(&chi_cell, false, CELL_TOL)?;
        let u_bar = solve_homogenized(&hd, &f, grid, EPS_TOL)?;
        let mut worst = 0.0f64;
        for eps in [0.25, 0.125] {
            let p = build_eps_problem(
                &empty,
                DomainKind::BoxDirichlet,
                eps,
                n,
                f.clone(),
                RasterRule::AreaThreshold,
            )?;
            let u_eps = solve_eps_problem(&p, EPS_TOL)?;
            let d: Vec<f64> =
                u_eps.raw().iter().zip(u_bar.raw()).map(|(a, b)| a - b).collect();
            worst = worst.max(crate::mesh::norm(grid, &d, NormKind::L2));
        }
        Ok((worst <= 1e-9, format!("max |u_eps - u_bar|_L2 = {worst:.3e} (tol 1e-9)")))
    };
    finish(1, "empty-geometry identity", start, run())
}

/// 1-D resonant cell against the closed-form solution.
pub fn criterion_02_resonant_1d(quick: bool) -> CriterionResult {
    let start = Instant::now();
    let run = || -> Result<(bool, String)> {
        let n = if quick { 1024 } else { 4096 };
        let set = geometry::sample_interval_lattice(1.0, 4.0)?;
        let chi = rasterize(&set, n, RasterRule::CenterSample)?;
        let r = solve_resonant_cell(&chi, CELL_TOL)?;
        let exact = (1.0 - 1.0f64.tanh()) / 2.0;
        let err = (r.mean_v - exact).abs();
        Ok((err < 1e-4, format!("mean_v = {:.8} vs {exact:.8}, |err| = {err:.2e}", r.mean_v)))
    };
    finish(2, "resonant cell 1-D oracle", start, run())
}

/// 2-D resonant cell: disc average against the radial Bessel solution.
pub fn criterion_03_resonant_2d(quick: bool) -> CriterionResult {
    let start = Instant::now();
    let run = || -> Result<(bool, String)> {
        let n = if quick { 256 } else { 1024 };
        let set = InclusionSet {
            model: GeometryModel::Manual,
            seed: 0,
            period: 4.0,
            dim: 2,
            periodic: true,
            inclusions: vec![Inclusion {
                id: 0,
                shape: Shape::Disc { center: [2.0, 2.0], radius: 1.0 },
            }],
            saturated: false,
            warnings: Vec::new(),
        };
        let chi = rasterize(&set, n, RasterRule::AreaThreshold)?;
        let r = solve_resonant_cell(&chi, CELL_TOL)?;
        let inside: Vec<usize> = (0..chi.grid.cells()).filter(|&c| chi.cells[c]).collect();
        let avg: f64 =
            inside.iter().map(|&c| r.v.value(c)).sum::<f64>() / inside.len() as f64;
        let exact = 1.0 - 2.0 * bessel_i(1, 1.0) / bessel_i(0, 1.0);
        let err = (avg - exact).abs();
        Ok((err < 5e-3, format!("disc average {avg:.6} vs {exact:.6}, |err| = {err:.2e}")))
    };
    finish(3, "resonant cell 2-D oracle", start, run())
}

/// Effective matrix of the centered disc: exact isotropy, spectral bounds,
/// dual-formula agreement.
pub fn criterion_04_effective_matrix(quick: bool) -> CriterionResult {
    let start = Instant::now();
    let run = || -> Result<(bool, String)> {
        let n = if quick { 128 } else { 512 };
        let set = geometry::sample_periodic_lattice(0.25, 1.0)?;
        let chi = rasterize(&set, n, RasterRule::AreaThreshold)?;
        let corr = solve_corrector_soft(&chi, CELL_TOL)?;
        let eff = crate::cell::homogenized_matrix(&corr, &chi)?;
        let aniso = (eff.a_bar[0][0] - eff.a_bar[1][1]).abs();
        let cross = eff.a_bar[0][1].abs();
        let evs = sym_eigenvalues(&eff.a_bar, 2);
        let upper = 1.0 - std::f64::consts::PI / 16.0;
        let spectral = evs.iter().all(|&e| e > 0.0 && e <= upper);
        let pass = aniso <= 1e-10 && cross <= 1e-10 && spectral && eff.form_gap <= 1e-6;
        Ok((
            pass,
            format!(
                "a=({:.6},{:.6}) |a00-a11|={aniso:.2e} |a01|={cross:.2e} gap={:.2e} evs={:?}",
                eff.a_bar[0][0], eff.a_bar[1][1], eff.form_gap, evs
            ),
        ))
    };
    finish(4, "effective-matrix structure", start, run())
}

/// The massive corrector's complement gradient approaches the restricted one
/// strictly monotonically along the mass sequence.
pub fn criterion_05_massive_convergence(quick: bool) -> CriterionResult {
    let start = Instant::now();
    let run = || -> Result<(bool, String)> {
        let n = if quick { 64 } else { 256 };
        let set = geometry::sample_periodic_lattice(0.25, 1.0)?;
        let chi = rasterize(&set, n, RasterRule::AreaThreshold)?;
        let soft = solve_corrector_soft(&chi, CELL_TOL)?;
        let mut dists = Vec::new();
        for eps in [0.25, 0.125, 0.0625, 0.03125] {
            let massive = solve_corrector_massive(&chi, eps, CELL_TOL)?;
            dists.push(complement_gradient_distance(&chi, &massive, &soft, 0));
        }
        let monotone = dists.windows(2).all(|w| w[1] < w[0]);
        Ok((monotone, format!("distances {dists:?}")))
    };
    finish(5, "massive-corrector convergence", start, run())
}

/// Flux and inclusion corrector identities at solver accuracy.
pub fn criterion_06_sigma_theta(quick: bool) -> CriterionResult {
    let start = Instant::now();
    let run = || -> Result<(bool, String)> {
        let n = if quick { 128 } else { 512 };
        let set = geometry::sample_periodic_lattice(0.25, 1.0)?;
        let chi = rasterize(&set, n, RasterRule::AreaThreshold)?;
        let hd = compute_homogenized_data(&chi, true, CELL_TOL)?;
        let sigma = hd.sigma.as_ref().expect("sigma computed");
        let theta = hd.theta.as_ref().expect("theta computed");
        // stored antisymmetry is exact
        let s12 = sigma.sigma(0, 0, 1).expect("independent component");
        let s21 = sigma.sigma(0, 1, 0).expect("negated component");
        let anti_exact =
            (0..s12.grid.cells()).all(|c| s12.value(c) == -s21.value(c));
        let pass = anti_exact
            && sigma.identity_residual <= 1e-8
            && theta.identity_residual <= 1e-8;
        Ok((
            pass,
            format!(
                "antisym exact: {anti_exact}, |grad.sigma - q| = {:.2e}, |div theta - (v - mean)| = {:.2e}",
                sigma.identity_residual, theta.identity_residual
            ),
        ))
    };
    finish(6, "flux/inclusion identities", start, run())
}

fn box_sweep_config(quick: bool) -> SweepConfig {
    SweepConfig {
        geometry: SweepGeometry::Exact(offcenter_disc_lattice()),
        domain: DomainKind::BoxDirichlet,
        eps_list: if quick {
            vec![0.125, 0.0625, 0.03125]
        } else {
            vec![0.125, 0.0625, 0.03125, 0.015625]
        },
        resolution: if quick { 256 } else { 1024 },
        forcing: Forcing::SineProduct,
        raster_rule: RasterRule::AreaThreshold,
        mollify_width_in_eps: None,
        inside_diagnostics: true,
    }
}

/// Bounded-domain two-scale error sweep: the boundary layer caps the rate at
/// the square-root regime.
pub fn criterion_07_bounded_rate(quick: bool) -> CriterionResult {
    let start = Instant::now();
    let run = || -> Result<(bool, String)> {
        let rep = run_rate_sweep(&box_sweep_config(quick))?;
        let slope = rep.fit.slope;
        // regression bound on the inside-resonance diagnostics, frozen from
        // the first verified run (ratios observed near 0.013)
        let worst_ratio = rep
            .inside
            .iter()
            .flatten()
            .map(|d| d.ratio)
            .fold(0.0f64, f64::max);
        let pass = (0.4..=0.75).contains(&slope) && worst_ratio <= 0.05;
        Ok((
            pass,
            format!(
                "slope {slope:.4} in [0.40, 0.75], inside-ratio max {worst_ratio:.4} (bound 0.05), errors {:?}",
                rep.rows.iter().map(|r| r.combined).collect::<Vec<_>>()
            ),
        ))
    };
    finish(7, "bounded-domain rate", start, run())
}

fn torus_sweep_config(quick: bool) -> Result<SweepConfig> {
    let base_res = if quick { 8 } else { 16 };
    let base = rasterize(&offcenter_disc_lattice(), base_res, RasterRule::AreaThreshold)?;
    Ok(SweepConfig {
        geometry: SweepGeometry::Snap(base),
        domain: DomainKind::Torus,
        eps_list: vec![0.125, 0.0625, 0.03125],
        resolution: if quick { 256 } else { 512 },
        forcing: Forcing::ManufacturedBump { center: [0.5, 0.5], radius: 0.3 },
        raster_rule: RasterRule::AreaThreshold,
        mollify_width_in_eps: None,
        inside_diagnostics: false,
    })
}

/// Periodic torus with a compactly supported macroscopic target: no boundary
/// layer, first-order rate.
pub fn criterion_08_torus_rate(quick: bool) -> CriterionResult {
    let start = Instant::now();
    let run = || -> Result<(bool, String)> {
        let rep = run_rate_sweep(&torus_sweep_config(quick)?)?;
        let slope = rep.fit.slope;
        Ok((
            slope >= 0.8,
            format!(
                "slope {slope:.4} (need >= 0.8), errors {:?}",
                rep.rows.iter().map(|r| r.combined).collect::<Vec<_>>()
            ),
        ))
    };
    finish(8, "torus (no boundary layer) rate", start, run())
}

/// The coupled effective two-scale system tracks the resolved solution at
/// first order in the inclusion scale.
pub fn criterion_09_coupled_rate(quick: bool) -> CriterionResult {
    let start = Instant::now();
    let run = || -> Result<(bool, String)> {
        let rep = run_coupled_sweep(&torus_sweep_config(quick)?)?;
        let slope = rep.fit.slope;
        let uniform = rep.rows.iter().map(|r| r.uniformity).fold(0.0f64, f64::max);
        let pass = slope >= 0.8 && uniform <= 25.0;
        Ok((
            pass,
            format!(
                "slope {slope:.4} (need >= 0.8), uniformity max {uniform:.3}, errors {:?}",
                rep.rows.iter().map(|r| r.l2_error).collect::<Vec<_>>()
            ),
        ))
    };
    finish(9, "coupled two-scale rate", start, run())
}

/// Weak-limit pairings decrease from the largest to the smallest eps for
/// every battery member.
pub fn criterion_10_weak_limits(quick: bool) -> CriterionResult {
    let start = Instant::now();
    let run = || -> Result<(bool, String)> {
        let cfg = SweepConfig {
            geometry: SweepGeometry::Exact(offcenter_disc_lattice()),
            domain: DomainKind::BoxDirichlet,
            eps_list: vec![0.125, 0.0625, 0.03125],
            resolution: if quick { 128 } else { 256 },
            forcing: Forcing::SineProduct,
            raster_rule: RasterRule::AreaThreshold,
            mollify_width_in_eps: None,
            inside_diagnostics: false,
        };
        let rep = verify_weak_limit(&cfg, 4)?;
        let state_first: f64 =
            rep.rows.iter().map(|r| r.state[0]).fold(0.0f64, f64::max);
        let state_last: f64 = rep
            .rows
            .iter()
            .map(|r| *r.state.last().unwrap())
            .fold(0.0f64, f64::max);
        Ok((
            rep.all_decreasing,
            format!(
                "all decreasing: {}, leading state defect {state_first:.3e} -> {state_last:.3e}",
                rep.all_decreasing
            ),
        ))
    };
    finish(10, "weak-limit defects", start, run())
}

/// Discrete maximum principles across random geometries.
pub fn criterion_11_max_principles(quick: bool) -> CriterionResult {
    let start = Instant::now();
    let run = || -> Result<(bool, String)> {
        let n = if quick { 128 } else { 256 };
        let count = if quick { 5 } else { 20 };
        let eps = if quick { 0.25 } else { 0.125 };
        let mut worst_u_min = 0.0f64;
        let mut checked = 0usize;
        let mut seed_stream = 0u64;
        while checked < count {
            seed_stream += 1;
            if seed_stream > 40 * count as u64 {
                return Err(Error::Geometry("too many raster rejections".into()));
            }
            let seed = derive_seed(0xD0_11, seed_stream);
            let set = match geometry::sample_hard_discs_rsa(
                8.0,
                geometry::RadiusLaw::Uniform(0.08, 0.13),
                0.4,
                1.0,
                seed,
            ) {
                Ok(s) => s,
                Err(Error::Geometry(_)) => continue,
                Err(e) => return Err(e),
            };
            // nonnegative smooth forcing
            let grid = Grid::unit_box(n, 2);
            let f: Vec<f64> =
                sine_forcing(grid).iter().map(|v| 0.3 + 0.7 * v).collect();
            let p = match build_eps_problem(
                &set,
                DomainKind::BoxDirichlet,
                eps,
                n,
                f.clone(),
                RasterRule::AreaThreshold,
            ) {
                Ok(p) => p,
                Err(Error::Connectivity { .. }) => continue,
                Err(e) => return Err(e),
            };
            let u_eps = solve_eps_problem(&p, EPS_TOL)?;
            worst_u_min = worst_u_min.min(u_eps.min() / u_eps.max_abs().max(1e-300));
            // resonant bounds on the cell
            let r = solve_resonant_cell(&p.chi_cell, CELL_TOL)?;
            if r.v.min() < -1e-9 || r.v.max() > 1.0 + 1e-9 {
                return Ok((
                    false,
                    format!("resonant bound violated: [{:.3e}, {:.3e}]", r.v.min(), r.v.max()),
                ));
            }
            // the auxiliary solve asserts its own maximum principle
            let hd = compute_homogenized_data(&p.chi_cell, false, CELL_TOL)?;
            let u_bar = solve_homogenized(&hd, &f, p.grid, EPS_TOL)?;
            let rhs: Vec<f64> =
                f.iter().zip(u_bar.raw()).map(|(a, b)| a - b).collect();
            let _ = solve_auxiliary(&p, &rhs, EPS_TOL)?;
            checked += 1;
        }
        let pass = worst_u_min >= -1e-9;
        Ok((
            pass,
            format!("{checked} geometries; min u / |u|_inf = {worst_u_min:.2e} (tol -1e-9)"),
        ))
    };
    finish(11, "maximum principles", start, run())
}

/// Every solver path agrees with dense elimination on small systems.
pub fn criterion_12_oracle_equivalence(quick: bool) -> CriterionResult {
    let start = Instant::now();
    let run = || -> Result<(bool, String)> {
        use rand::{Rng, SeedableRng};
        let fields = if quick { 10 } else { 50 };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0xACCE);
        let mut worst = 0.0f64;
        for case in 0..fields {
            let torus = case % 3 == 0;
            let grid = Grid::new(32, 2, 1.0, torus);
            let a: Vec<f64> = (0..grid.cells()).map(|_| rng.gen_range(0.2..5.0)).collect();
            let m: Vec<f64> = (0..grid.cells()).map(|_| rng.gen_range(0.5..2.0)).collect();
            let coeff = CoeffField { grid, a, m };
            let bc = if torus { AssemblyBc::Periodic } else { AssemblyBc::DirichletZero };
            let asm = assemble(&coeff, &bc);
            let b: Vec<f64> =
                (0..grid.cells()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let cg = cg_solve(&asm.op, &b, 1e-14, 60_000)?;
            let direct = dense_solve(asm.op.to_dense(), b.clone())?;
            let num: f64 = cg
                .x
                .iter()
                .zip(&direct)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            let den: f64 = direct.iter().map(|v| v * v).sum::<f64>().sqrt();
            worst = worst.max(num / den.max(1e-300));

            if case % 5 == 0 {
                // singular periodic path against the rank-one-corrected dense solve
                let grid = Grid::new(16, 2, 1.0, true);
                let a: Vec<f64> =
                    (0..grid.cells()).map(|_| rng.gen_range(0.2..5.0)).collect();
                let coeff = CoeffField { grid, a, m: vec![0.0; grid.cells()] };
                let asm = assemble(&coeff, &AssemblyBc::Periodic);
                let raw: Vec<f64> =
                    (0..grid.cells()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let mean = raw.iter().sum::<f64>() / raw.len() as f64;
                let b: Vec<f64> = raw.iter().map(|v| v - mean).collect();
                let mz = mean_zero_solve(&asm.op, &b, 1e-14, 60_000)?;
                let mut dense = asm.op.to_dense();
                let k = grid.cells() as f64;
                for row in dense.iter_mut() {
                    for v in row.iter_mut() {
                        *v += 1.0 / k;
                    }
                }
                let direct = dense_solve(dense, b)?;
                let num: f64 = mz
                    .x
                    .iter()
                    .zip(&direct)
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt();
                let den: f64 = direct.iter().map(|v| v * v).sum::<f64>().sqrt();
                worst = worst.max(num / den.max(1e-300));
            }
        }
        Ok((worst <= 1e-8, format!("{fields} systems, worst relative gap {worst:.2e}")))
    };
    finish(12, "dense-oracle equivalence", start, run())
}

/// Extension-constant trend between resolutions on the tangent-disc family.
pub fn criterion_13_extension_trend(quick: bool) -> CriterionResult {
    let start = Instant::now();
    let run = || -> Result<(bool, String)> {
        let (n_lo, n_hi) = if quick { (128, 256) } else { (256, 512) };
        let set = tangent_disc_pair();
        let ps = [2.0, 4.0 / 3.0];
        let mut c2 = Vec::new();
        let mut c43 = Vec::new();
        for n in [n_lo, n_hi] {
            let chi = rasterize(&set, n, RasterRule::AreaThreshold)?;
            let entries = extension_constant_survey(&chi, &ps, SurveyOptions::default())?;
            c2.push(entries[0].constant);
            c43.push(entries[1].constant);
        }
        let growth2 = c2[1] / c2[0];
        let change43 = (c43[1] / c43[0] - 1.0).abs();
        let pass = growth2 >= 1.25 && change43 <= 0.25;
        Ok((
            pass,
            format!(
                "C(2): {:.4} -> {:.4} (x{growth2:.3}, need >= 1.25); C(4/3): {:.4} -> {:.4} (change {:.1}%, need <= 25%)",
                c2[0], c2[1], c43[0], c43[1], change43 * 100.0
            ),
        ))
    };
    finish(13, "extension-constant trend", start, run())
}

/// Byte-identical artifacts on repeated runs of the same configuration.
pub fn criterion_14_reproducibility(quick: bool) -> CriterionResult {
    let start = Instant::now();
    let run = || -> Result<(bool, String)> {
        let mut artifacts = Vec::new();
        for _ in 0..2 {
            let set = geometry::sample_hard_discs_rsa(
                20.0,
                geometry::RadiusLaw::Uniform(0.03, 0.06),
                0.5,
                1.0,
                11,
            )?;
            let geo_json = serde_json::to_string_pretty(&set)
                .map_err(|e| Error::Config(e.to_string()))?;
            let chi = rasterize(&set, 64, RasterRule::AreaThreshold)?;
            let mut bitmap = Vec::new();
            crate::io::write_bitmap(&chi, &mut bitmap)?;
            let cfg = SweepConfig {
                geometry: SweepGeometry::Exact(offcenter_disc_lattice()),
                domain: DomainKind::BoxDirichlet,
                eps_list: vec![0.25, 0.125, 0.0625],
                resolution: 128,
                forcing: Forcing::SineProduct,
                raster_rule: RasterRule::AreaThreshold,
                mollify_width_in_eps: None,
                inside_diagnostics: false,
            };
            let _ = quick;
            let rep = run_rate_sweep(&cfg)?;
            let mut csv = Vec::new();
            crate::io::sweep_csv(&rep, &mut csv)?;
            let json =
                serde_json::to_string_pretty(&rep).map_err(|e| Error::Config(e.to_string()))?;
            let svg = crate::svg::LogLogPlot {
                title: "sweep".into(),
                points: rep.rows.iter().map(|r| (r.eps, r.combined)).collect(),
                fit_slope: rep.fit.slope,
                fit_intercept: rep.fit.intercept,
                reference_slopes: vec![0.5, 1.0],
                reproducible: true,
                timestamp: None,
            }
            .render();
            artifacts.push((geo_json, bitmap, csv, json, svg));
        }
        let pass = artifacts[0] == artifacts[1];
        Ok((pass, "geometry json, bitmap, sweep csv/json, svg byte-compared".into()))
    };
    finish(14, "byte reproducibility", start, run())
}

/// Run the whole suite in order; each criterion parallelizes internally.
pub fn run_all(quick: bool) -> Vec<CriterionResult> {
    let fns: Vec<fn(bool) -> CriterionResult> = vec![
        criterion_01_empty_identity,
        criterion_02_resonant_1d,
        criterion_03_resonant_2d,
        criterion_04_effective_matrix,
        criterion_05_massive_convergence,
        criterion_06_sigma_theta,
        criterion_07_bounded_rate,
        criterion_08_torus_rate,
        criterion_09_coupled_rate,
        criterion_10_weak_limits,
        criterion_11_max_principles,
        criterion_12_oracle_equivalence,
        criterion_13_extension_trend,
        criterion_14_reproducibility,
    ];
    fns.into_iter().map(|f| f(quick)).collect()
}
