//! Realization management and ensemble averages of cell quantities: the
//! periodization proxy for ensemble expectations.

use crate::cell::{compute_homogenized_data, CELL_TOL};
use crate::error::{Error, Result};
use crate::geometry::{self, rasterize, InclusionSet, RadiusLaw, RasterRule};
use rayon::prelude::*;
use serde::Serialize;

/// Splittable counter-based seed derivation, so realization `i` is
/// reproducible in isolation.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(index.wrapping_mul(0x9E3779B97F4A7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Model whose realizations feed an ensemble.
#[derive(Debug, Clone, Serialize)]
pub enum EnsembleModel {
    HardDiscsRsa { intensity: f64, radius_law: RadiusLaw, separation_margin: f64 },
    PoissonHalfGap { intensity: f64 },
    ChessPercolation { mu: f64, lattice_size: usize },
    PeriodicLattice { radius: f64 },
}

#[derive(Debug, Clone, Serialize)]
pub struct EnsembleConfig {
    pub model: EnsembleModel,
    pub realizations: usize,
    /// torus side
    pub period: f64,
    pub base_seed: u64,
    pub resolution: usize,
    pub raster_rule: RasterRule,
    /// also solve the flux/inclusion correctors and report moment statistics
    #[serde(default)]
    pub with_flux_correctors: bool,
}

impl EnsembleConfig {
    pub fn seeds(&self) -> Result<Vec<u64>> {
        if self.realizations == 0 {
            return Err(Error::Config("ensemble needs at least one realization".into()));
        }
        let seeds: Vec<u64> =
            (0..self.realizations as u64).map(|i| derive_seed(self.base_seed, i)).collect();
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != seeds.len() {
            return Err(Error::Config("derived per-realization seeds collide".into()));
        }
        Ok(seeds)
    }

    fn sample(&self, seed: u64) -> Result<InclusionSet> {
        match &self.model {
            EnsembleModel::HardDiscsRsa { intensity, radius_law, separation_margin } => {
                geometry::sample_hard_discs_rsa(
                    *intensity,
                    *radius_law,
                    *separation_margin,
                    self.period,
                    seed,
                )
            }
            EnsembleModel::PoissonHalfGap { intensity } => {
                geometry::sample_poisson_halfgap(*intensity, self.period, seed)
            }
            EnsembleModel::ChessPercolation { mu, lattice_size } => {
                geometry::sample_chess_percolation(*mu, *lattice_size, seed)
            }
            EnsembleModel::PeriodicLattice { radius } => {
                geometry::sample_periodic_lattice(*radius, self.period)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct MeanStderr {
    pub mean: f64,
    pub stderr: f64,
}

fn mean_stderr(values: &[f64]) -> MeanStderr {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return MeanStderr { mean, stderr: 0.0 };
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    MeanStderr { mean, stderr: (var / n).sqrt() }
}

#[derive(Debug, Clone, Serialize)]
pub struct EnsembleReport {
    pub config_echo: EnsembleConfig,
    pub a_bar: [[MeanStderr; 2]; 2],
    pub mean_v: MeanStderr,
    pub vol_frac: MeanStderr,
    /// grid-max second moments of the corrector family across realizations
    pub phi_sq_max: MeanStderr,
    pub sigma_sq_max: MeanStderr,
    pub theta_sq_max: MeanStderr,
    pub used_seeds: Vec<u64>,
    pub rejected: usize,
}

/// Run the cell pipeline on each realization and aggregate mean and standard
/// error. Rejected samples (disconnected complement, no spanning cluster)
/// are resampled with fresh derived seeds; more than 50% rejections fail.
pub fn ensemble_cell_run(cfg: &EnsembleConfig) -> Result<EnsembleReport> {
    let base_seeds = cfg.seeds()?;
    // each slot retries on its own derived stream so parallel order cannot
    // change the outcome
    type Run = (u64, [[f64; 2]; 2], f64, f64, crate::cell::MomentReport, usize);
    let runs: Result<Vec<Run>> = base_seeds
        .par_iter()
        .map(|&slot_seed| {
            let mut rejected = 0usize;
            for attempt in 0..8u64 {
                let seed = if attempt == 0 { slot_seed } else { derive_seed(slot_seed, attempt) };
                let set = match cfg.sample(seed) {
                    Ok(s) => s,
                    Err(Error::Geometry(_)) => {
                        rejected += 1;
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                let chi = match rasterize(&set, cfg.resolution, cfg.raster_rule) {
                    Ok(c) => c,
                    Err(Error::Connectivity { .. }) | Err(Error::Geometry(_)) => {
                        rejected += 1;
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                let hd = compute_homogenized_data(&chi, cfg.with_flux_correctors, CELL_TOL)?;
                let moments = crate::cell::corrector_moment_report(
                    &hd.correctors,
                    hd.sigma.as_ref(),
                    hd.theta.as_ref(),
                );
                return Ok((seed, hd.a_bar, hd.mean_v, hd.vol_frac, moments, rejected));
            }
            Err(Error::Geometry(format!(
                "slot seed {slot_seed}: all resampling attempts rejected"
            )))
        })
        .collect();
    let mut runs = runs?;
    // deterministic reduction order
    runs.sort_by_key(|r| r.0);
    let rejected: usize = runs.iter().map(|r| r.5).sum();
    if 2 * rejected > cfg.realizations {
        return Err(Error::Geometry(format!(
            "model infeasible: {rejected} rejections for {} realizations",
            cfg.realizations
        )));
    }
    let mut a = [[MeanStderr { mean: 0.0, stderr: 0.0 }; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let vals: Vec<f64> = runs.iter().map(|r| r.1[i][j]).collect();
            a[i][j] = mean_stderr(&vals);
        }
    }
    let mean_v = mean_stderr(&runs.iter().map(|r| r.2).collect::<Vec<_>>());
    let vol_frac = mean_stderr(&runs.iter().map(|r| r.3).collect::<Vec<_>>());
    let phi_sq_max = mean_stderr(&runs.iter().map(|r| r.4.phi_sq_max).collect::<Vec<_>>());
    let sigma_sq_max = mean_stderr(&runs.iter().map(|r| r.4.sigma_sq_max).collect::<Vec<_>>());
    let theta_sq_max = mean_stderr(&runs.iter().map(|r| r.4.theta_sq_max).collect::<Vec<_>>());
    Ok(EnsembleReport {
        config_echo: cfg.clone(),
        a_bar: a,
        mean_v,
        vol_frac,
        phi_sq_max,
        sigma_sq_max,
        theta_sq_max,
        used_seeds: runs.iter().map(|r| r.0).collect(),
        rejected,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ErgodicRow {
    pub period: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ErgodicReport {
    pub quantity: String,
    pub rows: Vec<ErgodicRow>,
    /// variances nonincreasing in the period within the safety factor
    pub decays: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErgodicQuantity {
    VolFrac,
    MeanV,
}

/// Across-seed variance of a cell average as the torus grows: the spatial
/// average must stabilize.
pub fn ergodic_average_check(
    cfg: &EnsembleConfig,
    quantity: ErgodicQuantity,
    periods: &[f64],
) -> Result<ErgodicReport> {
    if periods.len() < 2 {
        return Err(Error::Config("ergodic check needs at least two periods".into()));
    }
    let mut rows = Vec::new();
    for &period in periods {
        // same cell size: resolution scales with the period
        let resolution =
            ((cfg.resolution as f64) * period / cfg.period).round() as usize;
        let sub = EnsembleConfig { period, resolution, ..cfg.clone() };
        let report = ensemble_cell_run(&sub)?;
        let ms = match quantity {
            ErgodicQuantity::VolFrac => &report.vol_frac,
            ErgodicQuantity::MeanV => &report.mean_v,
        };
        // stderr^2 * n = sample variance
        let variance = ms.stderr * ms.stderr * cfg.realizations as f64;
        rows.push(ErgodicRow { period, variance });
    }
    let mut decays = true;
    for w in rows.windows(2) {
        if w[1].variance > 1.5 * w[0].variance + 1e-30 {
            decays = false;
        }
    }
    Ok(ErgodicReport {
        quantity: match quantity {
            ErgodicQuantity::VolFrac => "vol_frac".into(),
            ErgodicQuantity::MeanV => "mean_v".into(),
        },
        rows,
        decays,
    })
}
