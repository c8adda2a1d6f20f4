//! Residual kriging: krige the residuals of a regression map against point
//! references and add them back to the map.
//!
//! Per site the pipeline is: buffer the site extent, keep samples of the
//! configured beam class inside the buffer, take residuals against the
//! prediction raster, obtain a variogram model (given, or fitted on pooled
//! along-track directional semivariograms of the NWD and SWD subsets), krige
//! over the buffered grid, add the kriged residuals to the prediction, and
//! crop everything back to the site.

use std::fmt::Write as _;
use std::time::Instant;

use log::warn;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kriging::{Kriger, KrigingConfig};
use crate::model::{
    buffer_extent, crop, residuals, Aabb, BeamClass, Raster, Sample, TrackAzimuthClass,
};
use crate::semivariogram::{
    empirical_directional, filter_samples, DEFAULT_BIN_WIDTH, DEFAULT_MAX_LAG,
    DEFAULT_TOLERANCE_DEG,
};
use crate::validation::{pooled_metrics, MetricSet};
use crate::variogram::{fit, fit_combined, FitResult, ModelKind, VariogramModel, Weighting};

pub const DEFAULT_BUFFER_MARGIN: f64 = 3000.0;

/// Parameters for fitting the model from along-track semivariograms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlongTrackFit {
    pub bin_width: f64,
    pub max_lag: f64,
    pub tolerance_deg: f64,
    pub kind: ModelKind,
    pub weighting: Weighting,
    pub azimuth_nwd: f64,
    pub azimuth_swd: f64,
}

impl Default for AlongTrackFit {
    fn default() -> Self {
        Self {
            bin_width: DEFAULT_BIN_WIDTH,
            max_lag: DEFAULT_MAX_LAG,
            tolerance_deg: DEFAULT_TOLERANCE_DEG,
            kind: ModelKind::Exponential,
            weighting: Weighting::PairCount,
            azimuth_nwd: 36.0,
            azimuth_swd: 144.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VariogramSource {
    Provided(VariogramModel),
    FitAlongTrack(AlongTrackFit),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RkConfig {
    pub buffer_margin: f64,
    /// `None` keeps every beam.
    pub beam_filter: Option<BeamClass>,
    pub semivariogram_source: VariogramSource,
    pub kriging: KrigingConfig,
}

impl Default for RkConfig {
    fn default() -> Self {
        Self {
            buffer_margin: DEFAULT_BUFFER_MARGIN,
            beam_filter: Some(BeamClass::Power),
            semivariogram_source: VariogramSource::FitAlongTrack(AlongTrackFit::default()),
            kriging: KrigingConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RkDiagnostics {
    pub samples_in: usize,
    pub dropped_beam: usize,
    pub dropped_outside_buffer: usize,
    pub dropped_outside_raster: usize,
    pub dropped_nodata: usize,
    pub samples_used: usize,
    pub duplicates_merged: usize,
    /// The fitted semivariogram was flat; kriging used a pure-nugget model.
    pub degenerate_fit: bool,
    /// Site cells whose prediction is no-data.
    pub nodata_cells: usize,
    pub elapsed_ms: u128,
}

/// Observed value with the prediction before and after correction at a
/// sample inside the site.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleCheck {
    pub observed: f64,
    pub predicted: f64,
    pub corrected: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RkOutput {
    pub corrected: Raster,
    pub kriged_residuals: Raster,
    pub kriging_variance: Raster,
    pub model: VariogramModel,
    pub fit: Option<FitResult>,
    pub diagnostics: RkDiagnostics,
    pub sample_checks: Vec<SampleCheck>,
}

impl RkOutput {
    /// Plain-text diagnostics block.
    pub fn report(&self) -> String {
        let d = &self.diagnostics;
        let mut s = String::new();
        let _ = writeln!(s, "samples_in = {}", d.samples_in);
        let _ = writeln!(s, "dropped_beam = {}", d.dropped_beam);
        let _ = writeln!(s, "dropped_outside_buffer = {}", d.dropped_outside_buffer);
        let _ = writeln!(s, "dropped_outside_raster = {}", d.dropped_outside_raster);
        let _ = writeln!(s, "dropped_nodata = {}", d.dropped_nodata);
        let _ = writeln!(s, "samples_used = {}", d.samples_used);
        let _ = writeln!(s, "duplicates_merged = {}", d.duplicates_merged);
        let _ = writeln!(s, "nodata_cells = {}", d.nodata_cells);
        let _ = writeln!(s, "kind = {}", self.model.kind);
        let _ = writeln!(s, "nugget = {}", self.model.nugget);
        let _ = writeln!(s, "sill = {}", self.model.sill);
        let _ = writeln!(s, "range = {}", self.model.range);
        if let Some(f) = &self.fit {
            let _ = writeln!(s, "r_squared = {}", f.r_squared);
            let _ = writeln!(s, "bins_used = {}", f.bins_used);
        }
        let _ = writeln!(s, "degenerate_fit = {}", d.degenerate_fit);
        let _ = writeln!(s, "elapsed_ms = {}", d.elapsed_ms);
        s
    }
}

/// Fits one isotropic model from along-track semivariograms of each azimuth
/// class, pooled when both classes are present.
pub fn fit_along_track(residuals: &[Sample], params: &AlongTrackFit) -> Result<FitResult> {
    let mut svs = Vec::new();
    for (class, azimuth) in [
        (TrackAzimuthClass::Nwd, params.azimuth_nwd),
        (TrackAzimuthClass::Swd, params.azimuth_swd),
    ] {
        let subset = filter_samples(residuals, None, Some(class));
        if subset.len() < 2 {
            continue;
        }
        svs.push(empirical_directional(
            &subset,
            params.bin_width,
            params.max_lag,
            azimuth,
            params.tolerance_deg,
        )?);
    }
    match svs.as_slice() {
        [a, b] => fit_combined(a, b, params.kind, params.weighting),
        [a] => fit(a, params.kind, params.weighting),
        _ => Err(Error::InsufficientData(
            "no azimuth class has two or more residual samples".into(),
        )),
    }
}

/// Buffered, uncropped rasters of one site run.
#[derive(Debug, Clone)]
pub struct BufferedRun {
    pub prediction: Raster,
    pub corrected: Raster,
    pub kriged_residuals: Raster,
    pub kriging_variance: Raster,
    pub model: VariogramModel,
    pub fit: Option<FitResult>,
    pub residual_samples: Vec<Sample>,
    pub diagnostics: RkDiagnostics,
}

/// Runs every stage up to, but excluding, the final crop.
pub fn run_rk_buffered(
    observed: &[Sample],
    prediction: &Raster,
    site: &Aabb,
    config: &RkConfig,
) -> Result<BufferedRun> {
    let mut diag = RkDiagnostics {
        samples_in: observed.len(),
        ..Default::default()
    };
    let buffered = buffer_extent(site, config.buffer_margin)?;
    let prediction = crop(prediction, &buffered)?;

    let kept = filter_samples(observed, config.beam_filter, None);
    diag.dropped_beam = observed.len() - kept.len();
    let inside: Vec<Sample> = kept
        .into_iter()
        .filter(|s| buffered.contains(&s.position))
        .collect();
    diag.dropped_outside_buffer = observed.len() - diag.dropped_beam - inside.len();

    let res = residuals(&inside, &prediction);
    diag.dropped_outside_raster = res.dropped_outside;
    diag.dropped_nodata = res.dropped_nodata;
    diag.samples_used = res.samples.len();
    if res.samples.is_empty() {
        return Err(Error::Empty("no usable samples".into()));
    }

    let (model, fitted) = match &config.semivariogram_source {
        VariogramSource::Provided(m) => (*m, None),
        VariogramSource::FitAlongTrack(params) => {
            let f = fit_along_track(&res.samples, params)?;
            if f.degenerate {
                warn!("flat residual semivariogram; kriging with a pure-nugget model");
                diag.degenerate_fit = true;
            }
            (f.model, Some(f))
        }
    };

    let kriger = Kriger::new(&res.samples, &model, &config.kriging)?;
    diag.duplicates_merged = kriger.duplicates_merged;
    let (kriged, variance) = kriger.predict_grid(&prediction.geometry)?;

    let corrected_values = prediction
        .values
        .iter()
        .zip(&kriged.values)
        .map(|(&p, &k)| {
            if p == prediction.nodata {
                prediction.nodata
            } else {
                p + k
            }
        })
        .collect();
    let corrected = Raster::new(prediction.geometry, corrected_values, prediction.nodata)?;
    Ok(BufferedRun {
        prediction,
        corrected,
        kriged_residuals: kriged,
        kriging_variance: variance,
        model,
        fit: fitted,
        residual_samples: res.samples,
        diagnostics: diag,
    })
}

/// Residual kriging over one site.
pub fn run_rk(
    observed: &[Sample],
    prediction: &Raster,
    site: &Aabb,
    config: &RkConfig,
) -> Result<RkOutput> {
    let start = Instant::now();
    let run = run_rk_buffered(observed, prediction, site, config)?;
    let corrected = crop(&run.corrected, site)?;
    let kriged_residuals = crop(&run.kriged_residuals, site)?;
    let kriging_variance = crop(&run.kriging_variance, site)?;
    let cropped_prediction = crop(&run.prediction, site)?;

    let sample_checks = run
        .residual_samples
        .iter()
        .filter_map(|s| {
            let i = corrected.geometry.index_of(&s.position)?;
            let predicted = cropped_prediction.valid(i)?;
            Some(SampleCheck {
                observed: s.value + predicted,
                predicted,
                corrected: corrected.values[i],
            })
        })
        .collect();

    let mut diagnostics = run.diagnostics;
    diagnostics.nodata_cells = cropped_prediction.values.len() - cropped_prediction.valid_count();
    diagnostics.elapsed_ms = start.elapsed().as_millis();
    Ok(RkOutput {
        corrected,
        kriged_residuals,
        kriging_variance,
        model: run.model,
        fit: run.fit,
        diagnostics,
        sample_checks,
    })
}

/// One site of a multi-site run.
#[derive(Debug, Clone)]
pub struct SiteInput {
    pub observed: Vec<Sample>,
    pub prediction: Raster,
    pub site: Aabb,
}

#[derive(Debug)]
pub struct MultiRkOutput {
    pub sites: Vec<Result<RkOutput>>,
    /// Pooled `(prediction, observed)` pairs at samples inside the sites.
    pub pooled_before: Option<MetricSet>,
    /// Pooled `(corrected, observed)` pairs at samples inside the sites.
    pub pooled_after: Option<MetricSet>,
}

impl MultiRkOutput {
    pub fn failed(&self) -> usize {
        self.sites.iter().filter(|r| r.is_err()).count()
    }

    /// Per-site `(predicted, reference)` vectors before and after
    /// correction.
    #[allow(clippy::type_complexity)]
    pub fn error_vectors(&self) -> (Vec<Vec<(f64, f64)>>, Vec<Vec<(f64, f64)>>) {
        self.sites
            .iter()
            .filter_map(|r| r.as_ref().ok())
            .map(|o| {
                let before = o
                    .sample_checks
                    .iter()
                    .map(|c| (c.predicted, c.observed))
                    .collect();
                let after = o
                    .sample_checks
                    .iter()
                    .map(|c| (c.corrected, c.observed))
                    .collect();
                (before, after)
            })
            .unzip()
    }
}

/// Independent residual kriging per site, run concurrently, results in input
/// order. Fails only if every site fails.
pub fn run_rk_multi(sites: &[SiteInput], config: &RkConfig) -> Result<MultiRkOutput> {
    if sites.is_empty() {
        return Err(Error::InvalidArgument("no sites given".into()));
    }
    let results: Vec<Result<RkOutput>> = sites
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            run_rk(&s.observed, &s.prediction, &s.site, config).map_err(|e| match e {
                Error::Empty(m) => Error::Empty(format!("site {i}: {m}")),
                Error::Numerical(m) => Error::Numerical(format!("site {i}: {m}")),
                Error::InsufficientData(m) => Error::InsufficientData(format!("site {i}: {m}")),
                Error::InvalidArgument(m) => Error::InvalidArgument(format!("site {i}: {m}")),
                other => other,
            })
        })
        .collect();
    if results.iter().all(|r| r.is_err()) {
        let msgs: Vec<String> = results
            .iter()
            .filter_map(|r| r.as_ref().err().map(|e| e.to_string()))
            .collect();
        return Err(Error::Empty(format!(
            "every site failed: {}",
            msgs.join("; ")
        )));
    }
    let mut out = MultiRkOutput {
        sites: results,
        pooled_before: None,
        pooled_after: None,
    };
    let (before, after) = out.error_vectors();
    out.pooled_before = pooled_metrics(&before).ok();
    out.pooled_after = pooled_metrics(&after).ok();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{GridGeometry, Point2D};

    fn setup() -> (Raster, Aabb, Vec<Sample>) {
        let g = GridGeometry::new(Point2D::new(0.0, 0.0), 50.0, 40, 40).unwrap();
        let pred = Raster::from_fn(g, |p| 20.0 + 0.001 * p.x).unwrap();
        let site = Aabb::from_coords(500.0, 500.0, 1500.0, 1500.0).unwrap();
        let obs: Vec<Sample> = (0..30)
            .map(|i| {
                let p = Point2D::new(100.0 + 61.0 * i as f64, 80.0 + 57.0 * ((i * 7) % 30) as f64);
                Sample::at(p.x, p.y, pred.value_at(&p).unwrap())
            })
            .collect();
        (pred, site, obs)
    }

    fn provided() -> RkConfig {
        RkConfig {
            buffer_margin: 500.0,
            semivariogram_source: VariogramSource::Provided(
                VariogramModel::new(ModelKind::Exponential, 0.5, 5.0, 800.0).unwrap(),
            ),
            kriging: KrigingConfig::global(),
            ..Default::default()
        }
    }

    #[test]
    fn zero_residuals_leave_prediction() {
        let (pred, site, obs) = setup();
        let out = run_rk(&obs, &pred, &site, &provided()).unwrap();
        assert!(out.kriged_residuals.values.iter().all(|v| v.abs() < 1e-9));
        assert_eq!(out.corrected.geometry, out.kriged_residuals.geometry);
        let expected = crop(&pred, &site).unwrap();
        for (c, p) in out.corrected.values.iter().zip(&expected.values) {
            assert!((c - p).abs() < 1e-9);
        }
    }

    #[test]
    fn no_usable_samples() {
        let (pred, site, mut obs) = setup();
        obs.iter_mut().for_each(|s| s.beam = BeamClass::Coverage);
        let err = run_rk(&obs, &pred, &site, &provided()).unwrap_err();
        assert!(err.to_string().contains("no usable samples"));
    }

    #[test]
    fn nodata_propagates() {
        let (mut pred, site, obs) = setup();
        let i = pred
            .geometry
            .index_of(&Point2D::new(1000.0, 1000.0))
            .unwrap();
        pred.values[i] = pred.nodata;
        let out = run_rk(&obs, &pred, &site, &provided()).unwrap();
        let j = out
            .corrected
            .geometry
            .index_of(&Point2D::new(1000.0, 1000.0))
            .unwrap();
        assert_eq!(out.corrected.values[j], pred.nodata);
        assert_eq!(out.diagnostics.nodata_cells, 1);
    }

    #[test]
    fn multi_site_reports_failures() {
        let (pred, site, obs) = setup();
        let good = SiteInput {
            observed: obs.clone(),
            prediction: pred.clone(),
            site,
        };
        let bad = SiteInput {
            observed: vec![],
            prediction: pred.clone(),
            site,
        };
        let out = run_rk_multi(&[good.clone(), bad.clone()], &provided()).unwrap();
        assert_eq!(out.failed(), 1);
        assert!(out.sites[1]
            .as_ref()
            .unwrap_err()
            .to_string()
            .contains("site 1"));
        assert!(run_rk_multi(&[bad], &provided()).is_err());
        assert!(run_rk_multi(&[], &provided()).is_err());
    }
}
