//! Experiment orchestration for the homogenization laboratory: geometry
//! sampling, cell runs, scaled solves, convergence sweeps, extension surveys,
//! and the verification suite.

mod config;

use clap::{Parser, Subcommand};
use config::Config;
use dplab::dporosity::{
    build_eps_problem, error_report, run_coupled_sweep, run_rate_sweep, solve_eps_problem,
    two_scale_expansion, DomainKind, Forcing, SweepConfig, SweepGeometry, EPS_TOL,
};
use dplab::error::Error as LibError;
use dplab::geometry::{rasterize, IndicatorGrid, InclusionSet, RasterRule};
use dplab::{cell, extlab, geometry, io, svg};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "dplab", about = "high-contrast homogenization laboratory", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// experiment configuration (TOML)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// output directory (overridden by DPLB_OUT)
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// worker threads (default: all physical cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// reduced resolutions for a fast end-to-end pass
    #[arg(long, global = true)]
    quick: bool,
    /// suppress volatile output fields (timestamps, runtimes)
    #[arg(long, global = true)]
    reproducible: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample a geometry; write its JSON, indicator bitmap, separation CSV
    Geometry,
    /// Solve all cell problems; write the homogenized-data JSON
    Cell,
    /// Solve one scaled problem; write the field and a summary
    Solve,
    /// Convergence sweep over eps with slope fit, CSV and SVG
    Sweep,
    /// Extension-constant survey across resolutions
    Extlab,
    /// Run the verification suite
    Verify,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<LibError> for Failure {
    fn from(e: LibError) -> Self {
        let code = match &e {
            LibError::Config(_) | LibError::Io(_) => 2,
            LibError::Geometry(_)
            | LibError::Connectivity { .. }
            | LibError::Solver { .. }
            | LibError::Consistency(_) => 3,
        };
        Failure { code, message: e.to_string() }
    }
}

fn config_failure(msg: impl Into<String>) -> Failure {
    Failure { code: 2, message: msg.into() }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    match run(&cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn out_dir(cli: &Cli) -> Result<PathBuf, Failure> {
    let dir = match std::env::var_os("DPLB_OUT") {
        Some(v) => PathBuf::from(v),
        None => cli.out.clone(),
    };
    std::fs::create_dir_all(&dir)
        .map_err(|e| config_failure(format!("cannot create output dir: {e}")))?;
    Ok(dir)
}

struct LoadedConfig {
    parsed: Config,
    sha256: String,
}

fn load_config(cli: &Cli) -> Result<LoadedConfig, Failure> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| config_failure("missing --config PATH"))?;
    let raw = std::fs::read(path)
        .map_err(|e| config_failure(format!("cannot read {}: {e}", path.display())))?;
    let text = String::from_utf8(raw.clone())
        .map_err(|_| config_failure("config is not valid UTF-8"))?;
    let parsed: Config = toml::from_str(&text)
        .map_err(|e| config_failure(format!("{}: {e}", path.display())))?;
    let sha256 = hex_digest(&raw);
    Ok(LoadedConfig { parsed, sha256 })
}

fn hex_digest(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn parse_rule(rule: &str) -> Result<RasterRule, Failure> {
    match rule {
        "area_threshold" => Ok(RasterRule::AreaThreshold),
        "center_sample" => Ok(RasterRule::CenterSample),
        other => Err(config_failure(format!("unknown raster rule '{other}'"))),
    }
}

fn parse_domain(domain: &str) -> Result<DomainKind, Failure> {
    match domain {
        "box" => Ok(DomainKind::BoxDirichlet),
        "torus" => Ok(DomainKind::Torus),
        other => Err(config_failure(format!("unknown domain '{other}'"))),
    }
}

fn parse_forcing(forcing: &str) -> Result<Forcing, Failure> {
    match forcing {
        "sine" => Ok(Forcing::SineProduct),
        "constant" => Ok(Forcing::Constant),
        "bump" => Ok(Forcing::Bump { center: [0.5, 0.5], radius: 0.3 }),
        "manufactured_bump" => {
            Ok(Forcing::ManufacturedBump { center: [0.5, 0.5], radius: 0.3 })
        }
        other => Err(config_failure(format!("unknown forcing '{other}'"))),
    }
}

fn sample_geometry(section: &config::GeometrySection) -> Result<InclusionSet, Failure> {
    let need = |field: &str, v: Option<f64>| {
        v.ok_or_else(|| config_failure(format!("geometry.{field} required for this model")))
    };
    let set = match section.model.as_str() {
        "periodic_lattice" => geometry::sample_periodic_lattice(
            need("radius", section.radius)?,
            section.period,
        )?,
        "manual_disc" => {
            let center = section
                .center
                .ok_or_else(|| config_failure("geometry.center required for manual_disc"))?;
            let set = InclusionSet {
                model: geometry::GeometryModel::Manual,
                seed: section.seed,
                period: section.period,
                dim: 2,
                periodic: true,
                inclusions: vec![geometry::Inclusion {
                    id: 0,
                    shape: geometry::Shape::Disc {
                        center,
                        radius: need("radius", section.radius)?,
                    },
                }],
                saturated: false,
                warnings: Vec::new(),
            };
            set.check_invariants()?;
            set
        }
        "hard_discs_rsa" => {
            let law = match (section.radius, section.radius_min, section.radius_max) {
                (Some(r), None, None) => geometry::RadiusLaw::Fixed(r),
                (None, Some(a), Some(b)) => geometry::RadiusLaw::Uniform(a, b),
                _ => {
                    return Err(config_failure(
                        "rsa needs either geometry.radius or radius_min/radius_max",
                    ))
                }
            };
            geometry::sample_hard_discs_rsa(
                need("intensity", section.intensity)?,
                law,
                need("margin", section.margin)?,
                section.period,
                section.seed,
            )?
        }
        "poisson_halfgap" => geometry::sample_poisson_halfgap(
            need("intensity", section.intensity)?,
            section.period,
            section.seed,
        )?,
        "chess_percolation" => geometry::sample_chess_percolation(
            need("mu", section.mu)?,
            section
                .lattice_size
                .ok_or_else(|| config_failure("geometry.lattice_size required"))?,
            section.seed,
        )?,
        other => return Err(config_failure(format!("unknown geometry model '{other}'"))),
    };
    Ok(set)
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text)
        .map_err(|e| config_failure(format!("cannot write {}: {e}", path.display())))
}

fn run(cli: &Cli) -> Result<ExitCode, Failure> {
    match cli.cmd {
        Cmd::Geometry => cmd_geometry(cli),
        Cmd::Cell => cmd_cell(cli),
        Cmd::Solve => cmd_solve(cli),
        Cmd::Sweep => cmd_sweep(cli),
        Cmd::Extlab => cmd_extlab(cli),
        Cmd::Verify => cmd_verify(cli),
    }
}

fn geometry_and_raster(
    loaded: &LoadedConfig,
) -> Result<(InclusionSet, IndicatorGrid, RasterRule), Failure> {
    let gsec = loaded
        .parsed
        .geometry
        .as_ref()
        .ok_or_else(|| config_failure("missing [geometry] section"))?;
    let rsec = loaded
        .parsed
        .raster
        .as_ref()
        .ok_or_else(|| config_failure("missing [raster] section"))?;
    let rule = parse_rule(&rsec.rule)?;
    let set = sample_geometry(gsec)?;
    let chi = rasterize(&set, rsec.resolution, rule)?;
    Ok((set, chi, rule))
}

fn cmd_geometry(cli: &Cli) -> Result<ExitCode, Failure> {
    let loaded = load_config(cli)?;
    let dir = out_dir(cli)?;
    let (set, chi, _) = geometry_and_raster(&loaded)?;
    for w in &set.warnings {
        eprintln!("warning: {w}");
    }
    let mut json = serde_json::to_value(&set).map_err(|e| config_failure(e.to_string()))?;
    json["config_sha256"] = serde_json::Value::String(loaded.sha256.clone());
    write_text(
        &dir.join("geometry.json"),
        &serde_json::to_string_pretty(&json).map_err(|e| config_failure(e.to_string()))?,
    )?;
    let mut bitmap = Vec::new();
    io::write_bitmap(&chi, &mut bitmap)?;
    std::fs::write(dir.join("indicator.dplb"), &bitmap)
        .map_err(|e| config_failure(e.to_string()))?;
    // separation report needs at least two inclusions
    let alpha = loaded.parsed.geometry.as_ref().map(|g| g.alpha).unwrap_or(2.0);
    let mut csv = format!("# config_sha256 {}\n", loaded.sha256);
    csv.push_str("id,rho,diameter,nu,mu,moment_alpha,moment\n");
    if set.inclusions.len() >= 2 {
        let report = geometry::separation_moments(&set, alpha)?;
        for row in &report.rows {
            csv.push_str(&format!(
                "{},{:.12e},{:.12e},{:.12e},{},{},{}\n",
                row.id,
                row.rho,
                row.diameter,
                row.nu,
                row.mu.map(|m| format!("{m:.12e}")).unwrap_or_default(),
                report.alpha,
                report.moment
            ));
        }
    }
    write_text(&dir.join("separation.csv"), &csv)?;
    println!(
        "geometry: {} inclusions, raster fraction {:.6}, outputs in {}",
        set.inclusions.len(),
        chi.volume_fraction(),
        dir.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_cell(cli: &Cli) -> Result<ExitCode, Failure> {
    let loaded = load_config(cli)?;
    let dir = out_dir(cli)?;
    let gsec = loaded
        .parsed
        .geometry
        .as_ref()
        .ok_or_else(|| config_failure("missing [geometry] section"))?;
    let csec = loaded
        .parsed
        .cell
        .as_ref()
        .ok_or_else(|| config_failure("missing [cell] section"))?;
    let rule = parse_rule(&csec.rule)?;
    let set = sample_geometry(gsec)?;
    let chi = rasterize(&set, csec.resolution, rule)?;
    let hd = cell::compute_homogenized_data(&chi, csec.flux_correctors, cell::CELL_TOL)?;
    // the massive approximation cross-check, when requested
    let massive_gap = match csec.massive_eps {
        Some(eps) => {
            let massive = cell::solve_corrector_massive(&chi, eps, cell::CELL_TOL)?;
            Some(cell::complement_gradient_distance(&chi, &massive, &hd.correctors, 0))
        }
        None => None,
    };
    let summary = serde_json::json!({
        "config_sha256": loaded.sha256,
        "a_bar": hd.a_bar,
        "mean_v": hd.mean_v,
        "vol_frac": hd.vol_frac,
        "residuals": hd.residuals,
        "massive_gradient_gap": massive_gap,
        "moments": cell::corrector_moment_report(
            &hd.correctors, hd.sigma.as_ref(), hd.theta.as_ref()),
    });
    write_text(
        &dir.join("homogenized.json"),
        &serde_json::to_string_pretty(&summary).map_err(|e| config_failure(e.to_string()))?,
    )?;
    let mut vfile = Vec::new();
    io::write_field(&hd.v, &mut vfile)?;
    std::fs::write(dir.join("resonant_v.dpgf"), &vfile)
        .map_err(|e| config_failure(e.to_string()))?;
    println!(
        "cell: a_bar = [[{:.6},{:.6}],[{:.6},{:.6}]], mean_v = {:.6}, vol_frac = {:.6}",
        hd.a_bar[0][0], hd.a_bar[0][1], hd.a_bar[1][0], hd.a_bar[1][1], hd.mean_v, hd.vol_frac
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_solve(cli: &Cli) -> Result<ExitCode, Failure> {
    let loaded = load_config(cli)?;
    let dir = out_dir(cli)?;
    let gsec = loaded
        .parsed
        .geometry
        .as_ref()
        .ok_or_else(|| config_failure("missing [geometry] section"))?;
    let ssec = loaded
        .parsed
        .solve
        .as_ref()
        .ok_or_else(|| config_failure("missing [solve] section"))?;
    let rule = parse_rule(&ssec.rule)?;
    let domain = parse_domain(&ssec.domain)?;
    let forcing = parse_forcing(&ssec.forcing)?;
    let set = sample_geometry(gsec)?;
    let n = ssec.resolution;

    let zeros = vec![0.0; n * n];
    let mut p = build_eps_problem(&set, domain, ssec.eps, n, zeros, rule)?;
    for w in &p.warnings {
        eprintln!("warning: {w}");
    }
    let hd = cell::compute_homogenized_data(&p.chi_cell, false, cell::CELL_TOL)?;
    let cfg = SweepConfig {
        geometry: SweepGeometry::Exact(set),
        domain,
        eps_list: vec![ssec.eps],
        resolution: n,
        forcing,
        raster_rule: rule,
        mollify_width_in_eps: None,
        inside_diagnostics: false,
    };
    let (f, u_bar) = dplab::dporosity::forcing_and_macro_fields(&cfg, &p, &hd)?;
    p.f = f.clone();
    let u_eps = solve_eps_problem(&p, EPS_TOL)?;
    let mut field = Vec::new();
    io::write_field(&u_eps, &mut field)?;
    std::fs::write(dir.join("u_eps.dpgf"), &field).map_err(|e| config_failure(e.to_string()))?;
    let mut csv = Vec::new();
    io::field_csv(&u_eps, &mut csv)?;
    std::fs::write(dir.join("u_eps.csv"), &csv).map_err(|e| config_failure(e.to_string()))?;

    let mut summary = serde_json::json!({
        "config_sha256": loaded.sha256,
        "eps": ssec.eps,
        "kept_inclusions": p.kept_inclusions,
        "volume_fraction": p.chi_eps.volume_fraction(),
        "u_linf": u_eps.max_abs(),
    });
    if ssec.with_errors {
        let exp = two_scale_expansion(&u_bar, &hd, ssec.eps, &f, None)?;
        let row = error_report(&u_eps, &exp, &p);
        summary["errors"] =
            serde_json::to_value(&row).map_err(|e| config_failure(e.to_string()))?;
    }
    write_text(
        &dir.join("solve_summary.json"),
        &serde_json::to_string_pretty(&summary).map_err(|e| config_failure(e.to_string()))?,
    )?;
    println!("solve: eps = {}, |u|_inf = {:.6e}", ssec.eps, u_eps.max_abs());
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(cli: &Cli) -> Result<ExitCode, Failure> {
    let loaded = load_config(cli)?;
    let dir = out_dir(cli)?;
    let gsec = loaded
        .parsed
        .geometry
        .as_ref()
        .ok_or_else(|| config_failure("missing [geometry] section"))?;
    let wsec = loaded
        .parsed
        .sweep
        .as_ref()
        .ok_or_else(|| config_failure("missing [sweep] section"))?;
    let rule = parse_rule(&wsec.rule)?;
    let set = sample_geometry(gsec)?;
    let to_geometry = |set: InclusionSet| -> Result<SweepGeometry, Failure> {
        Ok(match wsec.snap_base {
            Some(base) => SweepGeometry::Snap(rasterize(&set, base, rule)?),
            None => SweepGeometry::Exact(set),
        })
    };
    let cfg = SweepConfig {
        geometry: to_geometry(set)?,
        domain: parse_domain(&wsec.domain)?,
        eps_list: wsec.eps.clone(),
        resolution: wsec.resolution,
        forcing: parse_forcing(&wsec.forcing)?,
        raster_rule: rule,
        mollify_width_in_eps: wsec.mollify_in_eps,
        inside_diagnostics: wsec.inside_diagnostics,
    };
    if let Some(realizations) = wsec.ensemble {
        let mut geometries = Vec::with_capacity(realizations);
        for i in 0..realizations as u64 {
            let mut section = gsec.clone();
            section.seed = dplab::stochastic::derive_seed(gsec.seed, i);
            geometries.push(to_geometry(sample_geometry(&section)?)?);
        }
        let ens = dplab::dporosity::run_rate_sweep_ensemble(&cfg, geometries)?;
        let mut json = serde_json::to_value(&ens).map_err(|e| config_failure(e.to_string()))?;
        json["config_sha256"] = serde_json::Value::String(loaded.sha256.clone());
        write_text(
            &dir.join("sweep_ensemble.json"),
            &serde_json::to_string_pretty(&json).map_err(|e| config_failure(e.to_string()))?,
        )?;
        println!(
            "ensemble sweep: slope {:.4} +- {:.4} over {} realizations",
            ens.slope_mean, ens.slope_stderr, realizations
        );
        return Ok(ExitCode::SUCCESS);
    }
    let report = run_rate_sweep(&cfg)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let mut csv = format!("# config_sha256 {}\n", loaded.sha256).into_bytes();
    io::sweep_csv(&report, &mut csv)?;
    std::fs::write(dir.join("sweep.csv"), &csv).map_err(|e| config_failure(e.to_string()))?;
    let mut json = serde_json::to_value(&report).map_err(|e| config_failure(e.to_string()))?;
    json["config_sha256"] = serde_json::Value::String(loaded.sha256.clone());
    write_text(
        &dir.join("sweep.json"),
        &serde_json::to_string_pretty(&json).map_err(|e| config_failure(e.to_string()))?,
    )?;
    let plot = svg::LogLogPlot {
        title: format!("two-scale expansion error, slope {:.3}", report.fit.slope),
        points: report.rows.iter().map(|r| (r.eps, r.combined)).collect(),
        fit_slope: report.fit.slope,
        fit_intercept: report.fit.intercept,
        reference_slopes: vec![0.5, 1.0],
        reproducible: cli.reproducible,
        timestamp: unix_timestamp(),
    };
    write_text(&dir.join("sweep.svg"), &plot.render())?;
    if wsec.coupled {
        let coupled = run_coupled_sweep(&cfg)?;
        let mut json =
            serde_json::to_value(&coupled).map_err(|e| config_failure(e.to_string()))?;
        json["config_sha256"] = serde_json::Value::String(loaded.sha256.clone());
        write_text(
            &dir.join("coupled.json"),
            &serde_json::to_string_pretty(&json).map_err(|e| config_failure(e.to_string()))?,
        )?;
        println!("coupled slope: {:.4}", coupled.fit.slope);
    }
    println!(
        "sweep: slope {:.4} (dropped largest: {}), rows {}",
        report.fit.slope,
        report.fit.dropped_largest,
        report.rows.len()
    );
    Ok(ExitCode::SUCCESS)
}

fn unix_timestamp() -> Option<String> {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .ok()
        .map(|d| format!("unix {}", d.as_secs()))
}

fn cmd_extlab(cli: &Cli) -> Result<ExitCode, Failure> {
    let loaded = load_config(cli)?;
    let dir = out_dir(cli)?;
    let gsec = loaded
        .parsed
        .geometry
        .as_ref()
        .ok_or_else(|| config_failure("missing [geometry] section"))?;
    let esec = loaded
        .parsed
        .extlab
        .as_ref()
        .ok_or_else(|| config_failure("missing [extlab] section"))?;
    let rule = parse_rule(&esec.rule)?;
    let set = sample_geometry(gsec)?;
    let mut csv = format!("# config_sha256 {}\n", loaded.sha256);
    // finite-grid surveys show trends only, never the exact critical exponent
    csv.push_str("# trend data: constants depend on the raster resolution\n");
    csv.push_str("family,p,resolution,constant\n");
    for &n in &esec.resolutions {
        let chi = rasterize(&set, n, rule)?;
        let entries = extlab::extension_constant_survey(
            &chi,
            &esec.p,
            extlab::SurveyOptions {
                trials: esec.trials,
                seed: esec.survey_seed,
                corrector_trials: esec.corrector_trials,
                tol: 1e-10,
            },
        )?;
        for e in entries {
            csv.push_str(&format!(
                "{},{},{},{:.12e}\n",
                gsec.model, e.p, e.resolution, e.constant
            ));
        }
    }
    write_text(&dir.join("extension_constants.csv"), &csv)?;
    println!("extlab: survey written to {}", dir.join("extension_constants.csv").display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(cli: &Cli) -> Result<ExitCode, Failure> {
    let dir = out_dir(cli)?;
    let results = dplab::acceptance::run_all(cli.quick);
    let mut all_pass = true;
    println!("--- verification suite ({}) ---", if cli.quick { "quick" } else { "full" });
    for r in &results {
        println!("{}", r.line());
        all_pass &= r.passed;
    }
    let json: Vec<serde_json::Value> = results
        .iter()
        .map(|r| {
            let mut v = serde_json::json!({
                "id": r.id,
                "name": r.name,
                "passed": r.passed,
                "detail": r.detail,
            });
            if !cli.reproducible {
                v["runtime_secs"] =
                    serde_json::Value::from(r.runtime.as_secs_f64());
            }
            v
        })
        .collect();
    write_text(
        &dir.join("verify.json"),
        &serde_json::to_string_pretty(&json).map_err(|e| config_failure(e.to_string()))?,
    )?;
    println!(
        "--- {} ---",
        if all_pass { "all criteria passed" } else { "ACCEPTANCE FAILURE" }
    );
    Ok(if all_pass { ExitCode::SUCCESS } else { ExitCode::from(1) })
}
