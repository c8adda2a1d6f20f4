//! Synthetic ground truth and a replay of the spaceborne lidar sampling
//! geometry: parallel beam tracks per orbital pass, alternating power and
//! coverage beams, with an optional coverage-beam bias.

use std::collections::BTreeMap;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::linalg::{cholesky, dot};
use crate::model::{
    Aabb, BeamClass, GridGeometry, Point2D, Raster, Sample, TrackAzimuthClass, TrackId,
    DEFAULT_NODATA,
};
use crate::variogram::VariogramModel;

/// Largest point set accepted by the dense field generator.
pub const GRF_POINT_CAP: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrfSpec {
    pub model: VariogramModel,
    pub mean: f64,
    pub seed: u64,
}

/// One realization of a Gaussian field with covariance `sill - gamma(h)`
/// and the given mean, at each of `points`.
pub fn sample_grf_at(points: &[Point2D], spec: &GrfSpec) -> Result<Vec<f64>> {
    spec.model.validate()?;
    let n = points.len();
    if n > GRF_POINT_CAP {
        return invalid(format!(
            "{n} points exceed the dense field generator cap of {GRF_POINT_CAP}"
        ));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let model = &spec.model;
    let mut cov = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let c = model.covariance(points[i].distance(&points[j]));
            cov[i * n + j] = c;
            cov[j * n + i] = c;
        }
    }
    let mut factor = None;
    for jitter in [0.0, 1e-10, 1e-8, 1e-6] {
        let mut a = cov.clone();
        for i in 0..n {
            a[i * n + i] += jitter * model.sill;
        }
        if let Ok(l) = cholesky(&a, n) {
            factor = Some(l);
            break;
        }
    }
    let l = factor.ok_or_else(|| {
        Error::Numerical(format!(
            "{} covariance over {n} points is not positive definite after jitter escalation",
            model.kind
        ))
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    Ok((0..n)
        .map(|i| spec.mean + dot(&l[i * n..i * n + i + 1], &z))
        .collect())
}

/// Field realization at every cell center of `grid`.
pub fn sample_grf_grid(grid: &GridGeometry, spec: &GrfSpec) -> Result<Raster> {
    grid.validate()?;
    let centers: Vec<Point2D> = (0..grid.len()).map(|i| grid.center_of(i)).collect();
    Raster::new(*grid, sample_grf_at(&centers, spec)?, DEFAULT_NODATA)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pass {
    pub azimuth_class: TrackAzimuthClass,
    /// Perpendicular shift of the swath center from the extent center.
    pub cross_offset: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GediPatternSpec {
    pub extent: Aabb,
    pub track_spacing_cross: f64,
    pub footprint_spacing_along: f64,
    pub beams_per_pass: usize,
    pub azimuth_nwd: f64,
    pub azimuth_swd: f64,
    pub passes: Vec<Pass>,
    /// Added to coverage-beam observations.
    pub coverage_bias: f64,
    pub coverage_noise_sd: f64,
    /// Noise added to every observation regardless of beam.
    pub noise_sd: f64,
    /// Cross-track position jitter, one draw per track.
    pub per_track_offset_sd: f64,
    /// Additive value offset, one draw per track.
    pub track_value_offset_sd: f64,
    pub seed: u64,
}

impl GediPatternSpec {
    /// Default acquisition geometry over `extent` with a single centered
    /// NWD pass.
    pub fn new(extent: Aabb) -> Self {
        Self {
            extent,
            track_spacing_cross: 600.0,
            footprint_spacing_along: 60.0,
            beams_per_pass: 8,
            azimuth_nwd: 36.0,
            azimuth_swd: 144.0,
            passes: vec![Pass {
                azimuth_class: TrackAzimuthClass::Nwd,
                cross_offset: 0.0,
            }],
            coverage_bias: -3.0,
            coverage_noise_sd: 0.0,
            noise_sd: 0.0,
            per_track_offset_sd: 0.0,
            track_value_offset_sd: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.track_spacing_cross > 0.0 && self.footprint_spacing_along > 0.0) {
            return invalid("track and footprint spacings must be > 0");
        }
        if self.beams_per_pass == 0 || !self.beams_per_pass.is_multiple_of(2) {
            return invalid(format!(
                "beams per pass must be even and > 0, got {}",
                self.beams_per_pass
            ));
        }
        for (name, v) in [
            ("coverage noise sd", self.coverage_noise_sd),
            ("noise sd", self.noise_sd),
            ("per-track offset sd", self.per_track_offset_sd),
            ("track value offset sd", self.track_value_offset_sd),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return invalid(format!("{name} must be >= 0, got {v}"));
            }
        }
        Ok(())
    }

    pub fn azimuth_of(&self, class: TrackAzimuthClass) -> f64 {
        match class {
            TrackAzimuthClass::Nwd => self.azimuth_nwd,
            TrackAzimuthClass::Swd => self.azimuth_swd,
        }
    }

    /// Width of one pass from the first to the last beam track.
    pub fn swath_width(&self) -> f64 {
        (self.beams_per_pass as f64 - 1.0) * self.track_spacing_cross
    }
}

/// Beam class of track `j` within a pass: P P C C P P C C ...
pub fn beam_of_track(j: usize) -> BeamClass {
    if (j / 2).is_multiple_of(2) {
        BeamClass::Power
    } else {
        BeamClass::Coverage
    }
}

/// Unit vector pointing along azimuth `deg` (clockwise from north).
pub fn along_vector(deg: f64) -> Point2D {
    let (s, c) = deg.to_radians().sin_cos();
    Point2D::new(s, c)
}

/// Unit vector 90 degrees clockwise from [`along_vector`].
pub fn cross_vector(deg: f64) -> Point2D {
    let (s, c) = deg.to_radians().sin_cos();
    Point2D::new(c, -s)
}

/// Footprint positions for every pass, clipped to the extent. Values are 0.
pub fn generate_pattern(spec: &GediPatternSpec) -> Result<Vec<Sample>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let center = spec.extent.center();
    let half_diag = 0.5 * spec.extent.width().hypot(spec.extent.height());
    let beams = spec.beams_per_pass;
    let mut out = Vec::new();

    for (p, pass) in spec.passes.iter().enumerate() {
        let az = spec.azimuth_of(pass.azimuth_class);
        let (u, v) = (along_vector(az), cross_vector(az));
        let origin = Point2D::new(
            center.x + v.x * pass.cross_offset,
            center.y + v.y * pass.cross_offset,
        );
        let reach = half_diag + pass.cross_offset.abs() + spec.swath_width();
        let steps = (reach / spec.footprint_spacing_along).ceil() as i64;
        for j in 0..beams {
            let jitter: f64 = if spec.per_track_offset_sd > 0.0 {
                spec.per_track_offset_sd * rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            let cross = (j as f64 - 0.5 * (beams as f64 - 1.0)) * spec.track_spacing_cross + jitter;
            let track_id = TrackId((p * beams + j) as u64);
            for k in -steps..=steps {
                let t = k as f64 * spec.footprint_spacing_along;
                let pos = Point2D::new(
                    origin.x + u.x * t + v.x * cross,
                    origin.y + u.y * t + v.y * cross,
                );
                if spec.extent.contains(&pos) {
                    out.push(Sample {
                        position: pos,
                        value: 0.0,
                        beam: beam_of_track(j),
                        azimuth_class: pass.azimuth_class,
                        track_id,
                    });
                }
            }
        }
    }
    if out.is_empty() {
        warn!("sampling pattern produced no footprints inside the extent");
    }
    Ok(out)
}

/// Observes `truth_at` on the pattern: power beams see the truth, coverage
/// beams add `coverage_bias` and coverage noise; per-track offsets and the
/// global noise term apply to all beams.
pub fn observe(
    pattern: &[Sample],
    truth_at: impl Fn(&Point2D) -> f64,
    spec: &GediPatternSpec,
) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x6f62_7365_7276_6521);
    let mut offsets: BTreeMap<TrackId, f64> = pattern.iter().map(|s| (s.track_id, 0.0)).collect();
    if spec.track_value_offset_sd > 0.0 {
        for v in offsets.values_mut() {
            *v = spec.track_value_offset_sd * rng.sample::<f64, _>(StandardNormal);
        }
    }
    pattern
        .iter()
        .map(|s| {
            let mut v = truth_at(&s.position) + offsets[&s.track_id];
            if s.beam == BeamClass::Coverage {
                v += spec.coverage_bias;
                if spec.coverage_noise_sd > 0.0 {
                    v += spec.coverage_noise_sd * rng.sample::<f64, _>(StandardNormal);
                }
            }
            if spec.noise_sd > 0.0 {
                v += spec.noise_sd * rng.sample::<f64, _>(StandardNormal);
            }
            s.with_value(v)
        })
        .collect()
}

/// A complete synthetic dataset: a truth field on a grid, a prediction that
/// differs from it by a correlated error field plus a constant bias, and
/// footprint observations of the truth.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub grid: GridGeometry,
    pub truth: GrfSpec,
    /// Prediction error field; `None` means the prediction equals the truth
    /// up to `prediction_bias`.
    pub error: Option<GrfSpec>,
    pub prediction_bias: f64,
    pub pattern: GediPatternSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub truth: Raster,
    pub prediction: Raster,
    /// Observations of the truth raster at each footprint's cell.
    pub samples: Vec<Sample>,
}

/// Builds a scenario. Footprints that fall outside the grid (on its closed
/// max edges) are dropped.
pub fn simulate_scenario(spec: &ScenarioSpec) -> Result<Scenario> {
    let truth = sample_grf_grid(&spec.grid, &spec.truth)?;
    let mut values: Vec<f64> = truth
        .values
        .iter()
        .map(|v| v + spec.prediction_bias)
        .collect();
    if let Some(e) = &spec.error {
        let err = sample_grf_grid(&spec.grid, e)?;
        for (v, d) in values.iter_mut().zip(&err.values) {
            *v += d;
        }
    }
    let prediction = Raster::new(spec.grid, values, DEFAULT_NODATA)?;
    let pattern: Vec<Sample> = generate_pattern(&spec.pattern)?
        .into_iter()
        .filter(|s| spec.grid.index_of(&s.position).is_some())
        .collect();
    let samples = observe(
        &pattern,
        |p| truth.value_at(p).expect("footprint inside grid"),
        &spec.pattern,
    );
    Ok(Scenario {
        truth,
        prediction,
        samples,
    })
}
