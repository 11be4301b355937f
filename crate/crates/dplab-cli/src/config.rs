//! Experiment configuration: one TOML file per experiment with full seed and
//! resolution capture.

use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub geometry: Option<GeometrySection>,
    pub raster: Option<RasterSection>,
    pub cell: Option<CellSection>,
    pub solve: Option<SolveSection>,
    pub sweep: Option<SweepSection>,
    pub extlab: Option<ExtlabSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    pub model: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub period: f64,
    // disc lattice / manual disc
    pub radius: Option<f64>,
    pub center: Option<[f64; 2]>,
    // rsa / poisson
    pub intensity: Option<f64>,
    pub radius_min: Option<f64>,
    pub radius_max: Option<f64>,
    pub margin: Option<f64>,
    // chess
    pub mu: Option<f64>,
    pub lattice_size: Option<usize>,
    /// separation-moment exponent for the geometry report
    #[serde(default = "two")]
    pub alpha: f64,
}

fn one() -> f64 {
    1.0
}
fn two() -> f64 {
    2.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RasterSection {
    pub resolution: usize,
    #[serde(default = "default_rule")]
    pub rule: String,
}

fn default_rule() -> String {
    "area_threshold".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSection {
    pub resolution: usize,
    #[serde(default = "default_rule")]
    pub rule: String,
    #[serde(default = "default_true")]
    pub flux_correctors: bool,
    /// mass scale for the approximate-corrector cross-check
    pub massive_eps: Option<f64>,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveSection {
    pub eps: f64,
    pub resolution: usize,
    #[serde(default = "default_domain")]
    pub domain: String,
    #[serde(default = "default_forcing")]
    pub forcing: String,
    #[serde(default = "default_rule")]
    pub rule: String,
    /// also solve the effective problem and report expansion errors
    #[serde(default)]
    pub with_errors: bool,
}

fn default_domain() -> String {
    "box".into()
}
fn default_forcing() -> String {
    "sine".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub eps: Vec<f64>,
    pub resolution: usize,
    #[serde(default = "default_domain")]
    pub domain: String,
    #[serde(default = "default_forcing")]
    pub forcing: String,
    #[serde(default = "default_rule")]
    pub rule: String,
    /// base raster resolution for the snap convention
    pub snap_base: Option<usize>,
    /// mollifier width as a multiple of eps
    pub mollify_in_eps: Option<f64>,
    #[serde(default)]
    pub inside_diagnostics: bool,
    /// also run the coupled-system sweep
    #[serde(default)]
    pub coupled: bool,
    /// average the sweep over this many geometry realizations (random
    /// models only; seeds derived from geometry.seed)
    pub ensemble: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtlabSection {
    pub p: Vec<f64>,
    pub resolutions: Vec<usize>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub corrector_trials: bool,
    #[serde(default)]
    pub survey_seed: u64,
    #[serde(default = "default_rule")]
    pub rule: String,
}

fn default_trials() -> usize {
    16
}
