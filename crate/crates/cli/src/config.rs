use std::path::{Path, PathBuf};

use serde::Deserialize;

/// Values read from a `--config` TOML file. Keys are the long flag names;
/// a flag given on the command line wins over the same key here.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct RunConfig {
    pub threads: Option<usize>,

    // file paths
    pub points: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub bins: Option<PathBuf>,
    pub grid: Option<PathBuf>,
    pub prediction: Option<PathBuf>,
    pub estimate: Option<PathBuf>,
    pub variance: Option<PathBuf>,
    pub kriged: Option<PathBuf>,
    pub fit_out: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub predicted: Option<PathBuf>,
    pub reference: Option<PathBuf>,

    // semivariogram
    pub bin_width: Option<f64>,
    pub max_lag: Option<f64>,
    pub azimuth: Option<f64>,
    pub tolerance: Option<f64>,
    pub beam: Option<String>,
    pub azimuth_class: Option<String>,
    pub subsample: Option<usize>,
    pub period: Option<f64>,

    // fitting and kriging
    pub kind: Option<String>,
    pub weighting: Option<String>,
    pub model: Option<String>,
    pub extent: Option<String>,
    pub cell_size: Option<f64>,
    pub neighborhood: Option<String>,
    pub k: Option<usize>,
    pub max_radius: Option<f64>,
    pub duplicates: Option<String>,
    pub jitter: Option<f64>,

    // residual kriging
    pub site: Option<Vec<String>>,
    pub buffer: Option<f64>,
    pub report: Option<bool>,

    // simulation
    pub seed: Option<u64>,
    pub truth_model: Option<String>,
    pub truth_mean: Option<f64>,
    pub error_model: Option<String>,
    pub prediction_bias: Option<f64>,
    pub passes: Option<String>,
    pub coverage_bias: Option<f64>,
    pub coverage_noise_sd: Option<f64>,
    pub noise_sd: Option<f64>,
    pub track_offset_sd: Option<f64>,
    pub track_value_offset_sd: Option<f64>,
    pub track_spacing: Option<f64>,
    pub footprint_spacing: Option<f64>,
    pub beams: Option<usize>,
    pub azimuth_nwd: Option<f64>,
    pub azimuth_swd: Option<f64>,

    // validation
    pub radii: Option<String>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        Self::parse(&text).map_err(|e| format!("config {}: {e}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.message().to_string())
    }
}
