use std::fmt;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use log::info;
use rkgeo::io;
use rkgeo::kriging::Kriger;
use rkgeo::rk::{AlongTrackFit, SiteInput, DEFAULT_BUFFER_MARGIN};
use rkgeo::semivariogram::{
    filter_samples, subsample, DEFAULT_BIN_WIDTH, DEFAULT_MAX_LAG, DEFAULT_TOLERANCE_DEG,
};
use rkgeo::synthetic::{simulate_scenario, Pass, ScenarioSpec};
use rkgeo::{
    crop, empirical, empirical_directional, periodicity_score, proximity_analysis, run_rk_multi,
    Aabb, BeamClass, DuplicatePolicy, Error, GediPatternSpec, GrfSpec, GridGeometry, KrigingConfig,
    ModelKind, Neighborhood, Raster, RkConfig, Sample, TrackAzimuthClass, VariogramModel,
    VariogramSource, Weighting,
};

use crate::config::RunConfig;
use crate::{
    FitArgs, KrigeArgs, KrigingArgs, PeriodicityArgs, RkArgs, SemivariogramArgs, SimulateArgs,
    ValidateArgs,
};

const DEFAULT_RADII: &str = "0,250,500,1000,inf";
const DEFAULT_TRUTH_MODEL: &str = "exponential:2,20,2500";

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(Error),
    /// Some sites of a multi-site run failed.
    Partial(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Data(Error::InvalidArgument(_)) => 1,
            CliError::Data(_) | CliError::Partial(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Partial(m) => f.write_str(m),
            CliError::Data(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Data(e)
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn pick<T: Clone>(flag: Option<T>, cfg: &Option<T>) -> Option<T> {
    flag.or_else(|| cfg.clone())
}

fn require<T>(v: Option<T>, flag: &str) -> CliResult<T> {
    v.ok_or_else(|| CliError::Usage(format!("missing required --{flag}")))
}

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(msg.into()))
}

fn parse_value<T: std::str::FromStr<Err = Error>>(text: &str, flag: &str) -> CliResult<T> {
    text.parse()
        .map_err(|e: Error| CliError::Usage(format!("--{flag}: {e}")))
}

/// `all` (or nothing) means no beam filter.
fn parse_beam(text: Option<String>, flag: &str) -> CliResult<Option<BeamClass>> {
    match text.as_deref() {
        None => Ok(None),
        Some(t) if t.eq_ignore_ascii_case("all") => Ok(None),
        Some(t) => parse_value(t, flag).map(Some),
    }
}

fn parse_list(text: &str, n: usize, flag: &str) -> CliResult<Vec<f64>> {
    let v: Vec<f64> = text
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Usage(format!("--{flag}: invalid number list '{text}'")))?;
    if v.len() != n {
        return usage(format!(
            "--{flag}: expected {n} comma-separated numbers, got '{text}'"
        ));
    }
    Ok(v)
}

fn parse_extent(text: &str, flag: &str) -> CliResult<Aabb> {
    let v = parse_list(text, 4, flag)?;
    Aabb::from_coords(v[0], v[1], v[2], v[3]).map_err(|e| CliError::Usage(format!("--{flag}: {e}")))
}

/// A model file, or inline `kind:nugget,sill,range`.
fn parse_model(text: &str, flag: &str) -> CliResult<VariogramModel> {
    let path = Path::new(text);
    if path.is_file() {
        return Ok(io::read_model(&io::read_to_string(path)?)?);
    }
    let Some((kind, params)) = text.split_once(':') else {
        return usage(format!(
            "--{flag}: '{text}' is neither a model file nor 'kind:nugget,sill,range'"
        ));
    };
    let kind: ModelKind = parse_value(kind.trim(), flag)?;
    let p = parse_list(params, 3, flag)?;
    VariogramModel::new(kind, p[0], p[1], p[2])
        .map_err(|e| CliError::Usage(format!("--{flag}: {e}")))
}

fn read_points(path: &Path) -> CliResult<Vec<Sample>> {
    Ok(io::read_points(&io::read_to_string(path)?)?)
}

fn read_grid(path: &Path) -> CliResult<Raster> {
    let file = std::fs::File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?;
    io::read_ascii_grid_from(file).map_err(|e| {
        match e {
            Error::Parse { line, message } => Error::Parse {
                line,
                message: format!("{}: {message}", path.display()),
            },
            other => other,
        }
        .into()
    })
}

fn emit(path: Option<&Path>, text: &str) -> CliResult {
    match path {
        Some(p) => Ok(io::write_file(p, text)?),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| CliError::Data(Error::Io(e)))
        }
    }
}

fn grid_from_extent(ext: &Aabb, cell: f64) -> CliResult<GridGeometry> {
    if !cell.is_finite() || cell <= 0.0 {
        return usage(format!("--cell-size must be > 0, got {cell}"));
    }
    let cols = (ext.width() / cell - 1e-9).ceil().max(1.0) as usize;
    let rows = (ext.height() / cell - 1e-9).ceil().max(1.0) as usize;
    Ok(GridGeometry::new(ext.min, cell, rows, cols)?)
}

fn kriging_config(
    a: KrigingArgs,
    cfg: &RunConfig,
    default_radius: Option<f64>,
) -> CliResult<KrigingConfig> {
    let mut kc = KrigingConfig::default();
    let k = pick(a.k, &cfg.k).unwrap_or(rkgeo::kriging::AUTO_NEAREST_K);
    let radius = pick(a.max_radius, &cfg.max_radius).or(default_radius);
    kc.neighborhood = match pick(a.neighborhood, &cfg.neighborhood).as_deref() {
        None | Some("auto") => Neighborhood::Auto,
        Some("global") => Neighborhood::Global,
        Some("nearest") => Neighborhood::Nearest {
            k,
            max_radius: require(radius, "max-radius")?,
        },
        Some(other) => {
            return usage(format!(
                "--neighborhood: expected auto, global or nearest, got '{other}'"
            ))
        }
    };
    kc.duplicate_policy = match pick(a.duplicates, &cfg.duplicates).as_deref() {
        None | Some("average") => DuplicatePolicy::Average,
        Some("error") => DuplicatePolicy::Error,
        Some(other) => {
            return usage(format!(
                "--duplicates: expected average or error, got '{other}'"
            ))
        }
    };
    kc.jitter = pick(a.jitter, &cfg.jitter).unwrap_or(0.0);
    kc.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(kc)
}

pub fn semivariogram(a: SemivariogramArgs, cfg: &RunConfig) -> CliResult {
    let points = require(pick(a.points, &cfg.points), "points")?;
    let bin_width = pick(a.bin_width, &cfg.bin_width).unwrap_or(DEFAULT_BIN_WIDTH);
    let max_lag = pick(a.max_lag, &cfg.max_lag).unwrap_or(DEFAULT_MAX_LAG);
    let beam = parse_beam(pick(a.beam, &cfg.beam), "beam")?;
    let class = match pick(a.azimuth_class, &cfg.azimuth_class) {
        Some(t) => Some(parse_value::<TrackAzimuthClass>(&t, "azimuth-class")?),
        None => None,
    };

    let mut samples = filter_samples(&read_points(&points)?, beam, class);
    if let Some(n) = pick(a.subsample, &cfg.subsample) {
        samples = subsample(&samples, n, pick(a.seed, &cfg.seed).unwrap_or(0));
    }
    let sv = match pick(a.azimuth, &cfg.azimuth) {
        Some(az) => {
            let tol = pick(a.tolerance, &cfg.tolerance).unwrap_or(DEFAULT_TOLERANCE_DEG);
            empirical_directional(&samples, bin_width, max_lag, az, tol)?
        }
        None => empirical(&samples, bin_width, max_lag)?,
    };
    info!(
        "{} samples, {} pairs binned, {} coincident pairs excluded",
        samples.len(),
        sv.total_pairs(),
        sv.coincident_pairs
    );
    emit(pick(a.out, &cfg.out).as_deref(), &io::write_bins(&sv))
}

pub fn fit(a: FitArgs, cfg: &RunConfig) -> CliResult {
    let bins = require(pick(a.bins, &cfg.bins), "bins")?;
    let kind: ModelKind = parse_value(
        &pick(a.kind, &cfg.kind).unwrap_or("exponential".into()),
        "kind",
    )?;
    let weighting: Weighting = parse_value(
        &pick(a.weighting, &cfg.weighting).unwrap_or("pair-count".into()),
        "weighting",
    )?;
    let sv = io::read_bins(&io::read_to_string(&bins)?)?;
    let result = rkgeo::fit(&sv, kind, weighting)?;
    if result.degenerate {
        log::warn!("flat semivariogram; reporting a pure-nugget model");
    }
    emit(pick(a.out, &cfg.out).as_deref(), &io::write_fit(&result))
}

pub fn krige(a: KrigeArgs, cfg: &RunConfig) -> CliResult {
    let points = require(pick(a.points, &cfg.points), "points")?;
    let model = parse_model(&require(pick(a.model, &cfg.model), "model")?, "model")?;
    let estimate = require(pick(a.estimate, &cfg.estimate), "estimate")?;
    let geometry = match (pick(a.grid, &cfg.grid), pick(a.extent, &cfg.extent)) {
        (Some(g), _) => read_grid(&g)?.geometry,
        (None, Some(e)) => grid_from_extent(
            &parse_extent(&e, "extent")?,
            require(pick(a.cell_size, &cfg.cell_size), "cell-size")?,
        )?,
        (None, None) => return usage("krige needs --grid or --extent with --cell-size"),
    };
    let kc = kriging_config(a.kriging, cfg, Some(model.range))?;
    let samples = read_points(&points)?;
    let kriger = Kriger::new(&samples, &model, &kc)?;
    if kriger.duplicates_merged > 0 {
        info!("{} coincident samples merged", kriger.duplicates_merged);
    }
    let (est, var) = kriger.predict_grid(&geometry)?;
    io::write_file(&estimate, &io::write_ascii_grid(&est))?;
    if let Some(v) = pick(a.variance, &cfg.variance) {
        io::write_file(&v, &io::write_ascii_grid(&var))?;
    }
    Ok(())
}

/// `out.asc` -> `out.site2.asc` for the second of several sites.
fn site_path(path: &Path, index: usize, n_sites: usize) -> PathBuf {
    if n_sites == 1 {
        return path.to_path_buf();
    }
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}.site{}.{}", index + 1, ext.to_string_lossy()),
        None => format!("{stem}.site{}", index + 1),
    };
    path.with_file_name(name)
}

pub fn rk(a: RkArgs, cfg: &RunConfig) -> CliResult {
    let points = require(pick(a.points, &cfg.points), "points")?;
    let prediction_path = require(pick(a.prediction, &cfg.prediction), "prediction")?;
    let out = require(pick(a.out, &cfg.out), "out")?;
    let buffer = pick(a.buffer, &cfg.buffer).unwrap_or(DEFAULT_BUFFER_MARGIN);
    let model = match pick(a.model, &cfg.model) {
        Some(m) => Some(parse_model(&m, "model")?),
        None => None,
    };
    let source = match model {
        Some(m) => VariogramSource::Provided(m),
        None => {
            let d = AlongTrackFit::default();
            VariogramSource::FitAlongTrack(AlongTrackFit {
                bin_width: pick(a.bin_width, &cfg.bin_width).unwrap_or(d.bin_width),
                max_lag: pick(a.max_lag, &cfg.max_lag).unwrap_or(d.max_lag),
                tolerance_deg: pick(a.tolerance, &cfg.tolerance).unwrap_or(d.tolerance_deg),
                kind: parse_value(
                    &pick(a.kind, &cfg.kind).unwrap_or(d.kind.to_string()),
                    "kind",
                )?,
                weighting: parse_value(
                    &pick(a.weighting, &cfg.weighting).unwrap_or(d.weighting.to_string()),
                    "weighting",
                )?,
                azimuth_nwd: pick(a.azimuth_nwd, &cfg.azimuth_nwd).unwrap_or(d.azimuth_nwd),
                azimuth_swd: pick(a.azimuth_swd, &cfg.azimuth_swd).unwrap_or(d.azimuth_swd),
            })
        }
    };
    let beam_filter = match pick(a.beam, &cfg.beam) {
        None => Some(BeamClass::Power),
        b => parse_beam(b, "beam")?,
    };
    // a fitted model's range is unknown up front; the buffer bounds the
    // useful search distance anyway
    let default_radius = model.map(|m| m.range).unwrap_or(buffer.max(1.0));
    let config = RkConfig {
        buffer_margin: buffer,
        beam_filter,
        semivariogram_source: source,
        kriging: kriging_config(a.kriging, cfg, Some(default_radius))?,
    };
    let report = a.report || cfg.report.unwrap_or(false);

    let observed = read_points(&points)?;
    let prediction = read_grid(&prediction_path)?;
    let site_args = if a.site.is_empty() {
        cfg.site.clone().unwrap_or_default()
    } else {
        a.site
    };
    let sites: Vec<Aabb> = if site_args.is_empty() {
        vec![prediction.geometry.extent()]
    } else {
        site_args
            .iter()
            .map(|s| parse_extent(s, "site"))
            .collect::<CliResult<_>>()?
    };
    let inputs: Vec<SiteInput> = sites
        .iter()
        .map(|s| SiteInput {
            observed: observed.clone(),
            prediction: prediction.clone(),
            site: *s,
        })
        .collect();

    let kriged = pick(a.kriged, &cfg.kriged);
    let variance = pick(a.variance, &cfg.variance);
    let fit_out = pick(a.fit_out, &cfg.fit_out);
    let multi = run_rk_multi(&inputs, &config)?;
    let n = sites.len();
    let mut failures = Vec::new();
    for (i, result) in multi.sites.iter().enumerate() {
        match result {
            Ok(o) => {
                io::write_file(&site_path(&out, i, n), &io::write_ascii_grid(&o.corrected))?;
                if let Some(p) = &kriged {
                    io::write_file(
                        &site_path(p, i, n),
                        &io::write_ascii_grid(&o.kriged_residuals),
                    )?;
                }
                if let Some(p) = &variance {
                    io::write_file(
                        &site_path(p, i, n),
                        &io::write_ascii_grid(&o.kriging_variance),
                    )?;
                }
                if let Some(p) = &fit_out {
                    let text = match &o.fit {
                        Some(f) => io::write_fit(f),
                        None => io::write_model(&o.model),
                    };
                    io::write_file(&site_path(p, i, n), &text)?;
                }
                if o.diagnostics.degenerate_fit {
                    log::warn!(
                        "site {}: flat residual semivariogram, pure-nugget model used",
                        i + 1
                    );
                }
                if report {
                    eprintln!("[site {}]\nstatus = ok\n{}", i + 1, o.report());
                }
            }
            Err(e) => {
                eprintln!("[site {}]\nstatus = failed\nerror = {e}\n", i + 1);
                failures.push(i + 1);
            }
        }
    }
    if report && n > 1 {
        for (label, m) in [
            ("before", multi.pooled_before),
            ("after", multi.pooled_after),
        ] {
            if let Some(m) = m {
                eprintln!(
                    "pooled_{label}: n = {} bias = {} rmse = {}",
                    m.n,
                    io::fmt_value(m.bias),
                    io::fmt_value(m.rmse)
                );
            }
        }
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Partial(format!(
            "{} of {n} sites failed: {failures:?}",
            failures.len()
        )))
    }
}

fn parse_passes(text: &str) -> CliResult<Vec<Pass>> {
    text.split(',')
        .map(|item| {
            let (class, offset) = item.split_once(':').unwrap_or((item, "0"));
            let offset: f64 = offset
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("--passes: invalid offset in '{item}'")))?;
            Ok(Pass {
                azimuth_class: parse_value(class.trim(), "passes")?,
                cross_offset: offset,
            })
        })
        .collect()
}

pub fn simulate(a: SimulateArgs, cfg: &RunConfig) -> CliResult {
    let points = require(pick(a.points, &cfg.points), "points")?;
    let truth_out = require(pick(a.truth, &cfg.truth), "truth")?;
    let seed = pick(a.seed, &cfg.seed).unwrap_or(0);
    let extent = parse_extent(
        &pick(a.extent, &cfg.extent).unwrap_or("0,0,6000,6000".into()),
        "extent",
    )?;
    let grid = grid_from_extent(&extent, pick(a.cell_size, &cfg.cell_size).unwrap_or(100.0))?;
    let truth = GrfSpec {
        model: parse_model(
            &pick(a.truth_model, &cfg.truth_model).unwrap_or(DEFAULT_TRUTH_MODEL.into()),
            "truth-model",
        )?,
        mean: pick(a.truth_mean, &cfg.truth_mean).unwrap_or(30.0),
        seed,
    };
    let error = match pick(a.error_model, &cfg.error_model) {
        Some(m) => Some(GrfSpec {
            model: parse_model(&m, "error-model")?,
            mean: 0.0,
            seed: seed.wrapping_add(1),
        }),
        None => None,
    };
    let mut pattern = GediPatternSpec::new(grid.extent());
    pattern.passes = parse_passes(&pick(a.passes, &cfg.passes).unwrap_or("nwd:0".into()))?;
    macro_rules! set {
        ($field:ident, $arg:ident) => {
            if let Some(v) = pick(a.$arg, &cfg.$arg) {
                pattern.$field = v;
            }
        };
    }
    set!(coverage_bias, coverage_bias);
    set!(coverage_noise_sd, coverage_noise_sd);
    set!(noise_sd, noise_sd);
    set!(per_track_offset_sd, track_offset_sd);
    set!(track_value_offset_sd, track_value_offset_sd);
    set!(track_spacing_cross, track_spacing);
    set!(footprint_spacing_along, footprint_spacing);
    set!(beams_per_pass, beams);
    set!(azimuth_nwd, azimuth_nwd);
    set!(azimuth_swd, azimuth_swd);
    pattern.seed = seed.wrapping_add(2);
    pattern
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;

    let spec = ScenarioSpec {
        grid,
        truth,
        error,
        prediction_bias: pick(a.prediction_bias, &cfg.prediction_bias).unwrap_or(0.0),
        pattern,
    };
    let sc = simulate_scenario(&spec)?;
    info!(
        "{} footprints over a {}x{} grid",
        sc.samples.len(),
        grid.n_cols,
        grid.n_rows
    );
    io::write_file(&points, &io::write_points(&sc.samples))?;
    io::write_file(&truth_out, &io::write_ascii_grid(&sc.truth))?;
    if let Some(p) = pick(a.prediction, &cfg.prediction) {
        io::write_file(&p, &io::write_ascii_grid(&sc.prediction))?;
    }
    Ok(())
}

/// Crops `reference` to the extent of `predicted` when their grids differ
/// but are aligned.
fn align(reference: Raster, predicted: &Raster) -> CliResult<Raster> {
    if reference.geometry == predicted.geometry {
        return Ok(reference);
    }
    let g = &predicted.geometry;
    let inner = Aabb::from_coords(
        g.origin.x + 0.5 * g.cell_size,
        g.origin.y + 0.5 * g.cell_size,
        g.origin.x + (g.n_cols as f64 - 0.5) * g.cell_size,
        g.origin.y + (g.n_rows as f64 - 0.5) * g.cell_size,
    )?;
    let cropped = crop(&reference, &inner).ok();
    match cropped {
        Some(c)
            if c.geometry.n_rows == g.n_rows
                && c.geometry.n_cols == g.n_cols
                && c.geometry.cell_size == g.cell_size
                && (c.geometry.origin.x - g.origin.x).abs() <= 1e-6 * g.cell_size
                && (c.geometry.origin.y - g.origin.y).abs() <= 1e-6 * g.cell_size =>
        {
            Ok(Raster { geometry: *g, ..c })
        }
        _ => usage(format!(
            "reference grid {:?} does not cover or align with predicted grid {:?}",
            reference.geometry, predicted.geometry
        )),
    }
}

pub fn validate(a: ValidateArgs, cfg: &RunConfig) -> CliResult {
    let predicted = read_grid(&require(pick(a.predicted, &cfg.predicted), "predicted")?)?;
    let reference = read_grid(&require(pick(a.reference, &cfg.reference), "reference")?)?;
    let reference = align(reference, &predicted)?;
    let out = pick(a.out, &cfg.out);
    let text = match pick(a.points, &cfg.points) {
        Some(p) => {
            let beam = parse_beam(pick(a.beam, &cfg.beam), "beam")?;
            let samples = filter_samples(&read_points(&p)?, beam, None);
            let radii = io::parse_radii(&pick(a.radii, &cfg.radii).unwrap_or(DEFAULT_RADII.into()))
                .map_err(|e| CliError::Usage(format!("--radii: {e}")))?;
            io::write_proximity(&proximity_analysis(
                &predicted, &reference, &samples, &radii,
            )?)
        }
        None => io::write_metrics(&rkgeo::metrics(&predicted, &reference)?),
    };
    emit(out.as_deref(), &text)
}

pub fn periodicity(a: PeriodicityArgs, cfg: &RunConfig) -> CliResult {
    let bins = require(pick(a.bins, &cfg.bins), "bins")?;
    let period = pick(a.period, &cfg.period).unwrap_or(600.0);
    let sv = io::read_bins(&io::read_to_string(&bins)?)?;
    let score = periodicity_score(&sv, period)?;
    emit(
        pick(a.out, &cfg.out).as_deref(),
        &io::write_periodicity(&score),
    )
}
