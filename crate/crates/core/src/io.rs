//! Text file formats: point CSV, ESRI ASCII grid, semivariogram bin CSV,
//! model/fit key-value blocks and metrics CSV.
//!
//! Values are written rounded to 6 fractional digits, in the shortest form
//! that parses back to the rounded value, so `read(write(x))` is exact for
//! any `x` already carrying at most 6 fractional digits.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use crate::error::{invalid, Error, Result};
use crate::model::{GridGeometry, Point2D, Raster, Sample, TrackId};
use crate::semivariogram::{Direction, EmpiricalSemivariogram, PeriodicityScore};
use crate::validation::{MetricSet, ProximityReport};
use crate::variogram::{FitResult, VariogramModel};

pub const POINT_HEADER: &str = "x,y,value,beam,azimuth_class,track_id";
pub const BIN_HEADER: &str = "lag_center,semivariance,pair_count";
pub const METRICS_HEADER: &str = "radius,n,bias,rmse,rrmse";

/// Rounds to 6 fractional digits; magnitudes beyond 1e9 are left alone.
pub fn round6(x: f64) -> f64 {
    if x.abs() >= 1e9 {
        x
    } else {
        (x * 1e6).round() / 1e6
    }
}

/// `round6(x)` in its shortest round-tripping decimal form, e.g. `8.0`.
pub fn fmt_value(x: f64) -> String {
    format!("{:?}", round6(x))
}

/// Like [`fmt_value`] but integral values print without a fraction.
pub fn fmt_lag(x: f64) -> String {
    format!("{}", round6(x))
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_f64(tok: &str, line: usize, what: &str) -> Result<f64> {
    let v: f64 = tok
        .trim()
        .parse()
        .map_err(|_| parse_err(line, format!("invalid {what} '{}'", tok.trim())))?;
    if !v.is_finite() {
        return Err(parse_err(line, format!("{what} is not finite")));
    }
    Ok(v)
}

/// Non-empty, non-comment lines with 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

// ---------------------------------------------------------------- points

pub fn write_points(samples: &[Sample]) -> String {
    let mut s = String::with_capacity(48 * (samples.len() + 1));
    s.push_str(POINT_HEADER);
    s.push('\n');
    for p in samples {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            fmt_value(p.position.x),
            fmt_value(p.position.y),
            fmt_value(p.value),
            p.beam,
            p.azimuth_class,
            p.track_id.0
        );
    }
    s
}

pub fn read_points(text: &str) -> Result<Vec<Sample>> {
    let mut lines = content_lines(text);
    let (hl, header) = lines.next().ok_or_else(|| parse_err(1, "missing header"))?;
    if !header.replace(' ', "").eq_ignore_ascii_case(POINT_HEADER) {
        return Err(parse_err(hl, format!("expected header '{POINT_HEADER}'")));
    }
    lines
        .map(|(ln, l)| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 6 {
                return Err(parse_err(ln, format!("expected 6 fields, got {}", f.len())));
            }
            Ok(Sample {
                position: Point2D::new(parse_f64(f[0], ln, "x")?, parse_f64(f[1], ln, "y")?),
                value: parse_f64(f[2], ln, "value")?,
                beam: f[3]
                    .parse()
                    .map_err(|e: Error| parse_err(ln, e.to_string()))?,
                azimuth_class: f[4]
                    .parse()
                    .map_err(|e: Error| parse_err(ln, e.to_string()))?,
                track_id: TrackId(
                    f[5].trim().parse().map_err(|_| {
                        parse_err(ln, format!("invalid track id '{}'", f[5].trim()))
                    })?,
                ),
            })
        })
        .collect()
}

// ---------------------------------------------------------------- ascii grid

const GRID_KEYS: [&str; 6] = [
    "ncols",
    "nrows",
    "xllcorner",
    "yllcorner",
    "cellsize",
    "nodata_value",
];

pub fn write_ascii_grid(r: &Raster) -> String {
    let g = &r.geometry;
    let mut s = String::with_capacity(g.len() * 10 + 128);
    let _ = writeln!(s, "ncols {}", g.n_cols);
    let _ = writeln!(s, "nrows {}", g.n_rows);
    let _ = writeln!(s, "xllcorner {:?}", g.origin.x);
    let _ = writeln!(s, "yllcorner {:?}", g.origin.y);
    let _ = writeln!(s, "cellsize {:?}", g.cell_size);
    let _ = writeln!(s, "nodata_value {}", fmt_value(r.nodata));
    for row in (0..g.n_rows).rev() {
        let vals = &r.values[row * g.n_cols..(row + 1) * g.n_cols];
        let line: Vec<String> = vals.iter().map(|&v| fmt_value(v)).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s
}

pub fn read_ascii_grid_from(reader: impl Read) -> Result<Raster> {
    let mut reader = BufReader::new(reader);
    let mut header = [0.0f64; 6];
    let mut line = String::new();
    for (i, key) in GRID_KEYS.iter().enumerate() {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            return Err(parse_err(i + 1, format!("missing header key '{key}'")));
        }
        let mut tok = line.split_whitespace();
        let k = tok.next().unwrap_or("");
        if !k.eq_ignore_ascii_case(key) {
            return Err(parse_err(
                i + 1,
                format!("expected header key '{key}', found '{k}'"),
            ));
        }
        let v = tok
            .next()
            .ok_or_else(|| parse_err(i + 1, format!("missing value for '{key}'")))?;
        header[i] = parse_f64(v, i + 1, key)?;
    }
    let (ncols, nrows) = (header[0], header[1]);
    if ncols < 1.0 || nrows < 1.0 || ncols.fract() != 0.0 || nrows.fract() != 0.0 {
        return Err(parse_err(1, "ncols and nrows must be positive integers"));
    }
    let (n_cols, n_rows) = (ncols as usize, nrows as usize);
    let geometry = GridGeometry::new(
        Point2D::new(header[2], header[3]),
        header[4],
        n_rows,
        n_cols,
    )
    .map_err(|e| parse_err(5, e.to_string()))?;
    let nodata = header[5];

    let mut values = vec![0.0; n_rows * n_cols];
    let mut count = 0usize;
    let mut ln = GRID_KEYS.len();
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            break;
        }
        ln += 1;
        for tok in line.split_whitespace() {
            if count >= values.len() {
                return Err(parse_err(ln, format!("more than {} values", values.len())));
            }
            // file rows run north to south
            let (r, c) = (n_rows - 1 - count / n_cols, count % n_cols);
            values[r * n_cols + c] = parse_f64(tok, ln, "cell value")?;
            count += 1;
        }
    }
    if count != values.len() {
        return Err(parse_err(
            ln,
            format!("expected {} values, found {count}", values.len()),
        ));
    }
    Raster::new(geometry, values, nodata)
}

pub fn read_ascii_grid(text: &str) -> Result<Raster> {
    read_ascii_grid_from(text.as_bytes())
}

// ---------------------------------------------------------------- bins

pub fn write_bins(sv: &EmpiricalSemivariogram) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# bin_width={:?}", sv.bin_width);
    let _ = writeln!(s, "# max_lag={:?}", sv.max_lag);
    if let Some(d) = &sv.direction {
        let _ = writeln!(s, "# azimuth={:?}", d.azimuth_deg);
        let _ = writeln!(s, "# tolerance={:?}", d.tolerance_deg);
    }
    s.push_str(BIN_HEADER);
    s.push('\n');
    for b in sv.populated() {
        let _ = writeln!(
            s,
            "{},{},{}",
            fmt_lag(b.lag_center),
            fmt_value(b.semivariance.unwrap_or(0.0)),
            b.pair_count
        );
    }
    s
}

/// Reads a bin CSV. Bin layout comes from the `# bin_width=` and
/// `# max_lag=` comments when present, otherwise it is inferred from the
/// spacing of the lag centers.
pub fn read_bins(text: &str) -> Result<EmpiricalSemivariogram> {
    let mut meta = std::collections::HashMap::new();
    for (i, l) in text.lines().enumerate() {
        if let Some(rest) = l.trim().strip_prefix('#') {
            if let Some((k, v)) = rest.split_once('=') {
                meta.insert(
                    k.trim().to_ascii_lowercase(),
                    parse_f64(v, i + 1, k.trim())?,
                );
            }
        }
    }
    let mut lines = content_lines(text);
    let (hl, header) = lines.next().ok_or_else(|| parse_err(1, "missing header"))?;
    if !header.replace(' ', "").eq_ignore_ascii_case(BIN_HEADER) {
        return Err(parse_err(hl, format!("expected header '{BIN_HEADER}'")));
    }
    let mut rows = Vec::new();
    for (ln, l) in lines {
        let f: Vec<&str> = l.split(',').collect();
        if f.len() != 3 {
            return Err(parse_err(ln, format!("expected 3 fields, got {}", f.len())));
        }
        let lag = parse_f64(f[0], ln, "lag_center")?;
        let gamma = parse_f64(f[1], ln, "semivariance")?;
        let count: u64 = f[2]
            .trim()
            .parse()
            .map_err(|_| parse_err(ln, format!("invalid pair_count '{}'", f[2].trim())))?;
        if lag < 0.0 || gamma < 0.0 {
            return Err(parse_err(ln, "lag and semivariance must be >= 0"));
        }
        rows.push((ln, lag, gamma, count));
    }
    let bin_width = match meta.get("bin_width") {
        Some(&w) => w,
        None => {
            let mut lags: Vec<f64> = rows.iter().map(|r| r.1).collect();
            lags.sort_by(f64::total_cmp);
            lags.windows(2)
                .map(|w| w[1] - w[0])
                .filter(|d| *d > 0.0)
                .fold(None, |m: Option<f64>, d| Some(m.map_or(d, |m| m.min(d))))
                .or_else(|| lags.first().map(|l| 2.0 * l))
                .ok_or_else(|| parse_err(hl, "cannot infer bin width from an empty table"))?
        }
    };
    let max_lag = match meta.get("max_lag") {
        Some(&m) => m,
        None => rows.iter().map(|r| r.1).fold(0.0, f64::max) + 0.5 * bin_width,
    };
    let mut bins = EmpiricalSemivariogram::empty_bins(bin_width, max_lag)
        .map_err(|e| parse_err(hl, e.to_string()))?;
    let mut sv_probe = EmpiricalSemivariogram {
        bins: Vec::new(),
        bin_width,
        max_lag,
        direction: None,
        coincident_pairs: 0,
    };
    sv_probe.bins = bins.clone();
    for (ln, lag, gamma, count) in rows {
        let k = sv_probe
            .bin_index(lag)
            .ok_or_else(|| parse_err(ln, format!("lag {lag} outside [0, {max_lag})")))?;
        if count > 0 {
            bins[k].semivariance = Some(gamma);
            bins[k].pair_count = count;
        }
    }
    let direction = match (meta.get("azimuth"), meta.get("tolerance")) {
        (Some(&a), Some(&t)) => Some(Direction::new(a, t)?),
        _ => None,
    };
    Ok(EmpiricalSemivariogram {
        bins,
        bin_width,
        max_lag,
        direction,
        coincident_pairs: 0,
    })
}

// ---------------------------------------------------------------- models

pub fn write_model(m: &VariogramModel) -> String {
    format!(
        "kind = {}\nnugget = {:?}\nsill = {:?}\nrange = {:?}\n",
        m.kind, m.nugget, m.sill, m.range
    )
}

pub fn write_fit(f: &FitResult) -> String {
    let mut s = write_model(&f.model);
    let _ = writeln!(s, "r_squared = {:?}", f.r_squared);
    let _ = writeln!(s, "residual_sum_squares = {:?}", f.residual_sum_squares);
    let _ = writeln!(s, "bins_used = {}", f.bins_used);
    let _ = writeln!(s, "degenerate = {}", f.degenerate);
    s
}

fn key_values(text: &str) -> Result<Vec<(usize, String, String)>> {
    content_lines(text)
        .map(|(ln, l)| {
            let (k, v) = l
                .split_once('=')
                .ok_or_else(|| parse_err(ln, "expected 'key = value'"))?;
            Ok((ln, k.trim().to_ascii_lowercase(), v.trim().to_string()))
        })
        .collect()
}

/// Reads a model block; fit-only keys (`r_squared`, ...) are accepted and
/// ignored, anything else is rejected.
pub fn read_model(text: &str) -> Result<VariogramModel> {
    let (mut kind, mut nugget, mut sill, mut range) = (None, None, None, None);
    for (ln, k, v) in key_values(text)? {
        match k.as_str() {
            "kind" => kind = Some(v.parse().map_err(|e: Error| parse_err(ln, e.to_string()))?),
            "nugget" => nugget = Some(parse_f64(&v, ln, "nugget")?),
            "sill" => sill = Some(parse_f64(&v, ln, "sill")?),
            "range" => range = Some(parse_f64(&v, ln, "range")?),
            "r_squared" | "residual_sum_squares" | "bins_used" | "degenerate" => {}
            other => return Err(parse_err(ln, format!("unknown key '{other}'"))),
        }
    }
    match (kind, nugget, sill, range) {
        (Some(k), Some(n), Some(s), Some(r)) => VariogramModel::new(k, n, s, r),
        _ => invalid("model block needs kind, nugget, sill and range"),
    }
}

/// Reads a full fit block as written by [`write_fit`].
pub fn read_fit(text: &str) -> Result<FitResult> {
    let model = read_model(text)?;
    let mut f = FitResult {
        model,
        r_squared: f64::NAN,
        residual_sum_squares: f64::NAN,
        bins_used: 0,
        degenerate: false,
    };
    for (ln, k, v) in key_values(text)? {
        match k.as_str() {
            "r_squared" => f.r_squared = parse_f64(&v, ln, "r_squared")?,
            "residual_sum_squares" => f.residual_sum_squares = parse_f64(&v, ln, "rss")?,
            "bins_used" => {
                f.bins_used = v.parse().map_err(|_| parse_err(ln, "invalid bins_used"))?
            }
            "degenerate" => {
                f.degenerate = v
                    .parse()
                    .map_err(|_| parse_err(ln, "invalid degenerate flag"))?
            }
            _ => {}
        }
    }
    Ok(f)
}

// ---------------------------------------------------------------- metrics

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), fmt_value)
}

fn fmt_radius(r: f64) -> String {
    if r.is_infinite() {
        "inf".into()
    } else {
        fmt_lag(r)
    }
}

fn metrics_row(radius: f64, n: usize, m: Option<&MetricSet>) -> String {
    format!(
        "{},{},{},{},{}\n",
        fmt_radius(radius),
        n,
        fmt_opt(m.map(|m| m.bias)),
        fmt_opt(m.map(|m| m.rmse)),
        fmt_opt(m.and_then(|m| m.rrmse)),
    )
}

pub fn write_metrics(m: &MetricSet) -> String {
    format!(
        "{METRICS_HEADER}\n{}",
        metrics_row(f64::INFINITY, m.n, Some(m))
    )
}

pub fn write_proximity(report: &ProximityReport) -> String {
    let mut s = format!("{METRICS_HEADER}\n");
    for row in &report.rows {
        s.push_str(&metrics_row(row.radius, row.n, row.metrics.as_ref()));
    }
    s
}

pub fn write_periodicity(p: &PeriodicityScore) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "period = {}", fmt_lag(p.period));
    let _ = writeln!(s, "score = {}", fmt_value(p.score));
    let peaks: Vec<String> = p.peak_lags.iter().map(|&l| fmt_lag(l)).collect();
    let _ = writeln!(s, "peak_lags = {}", peaks.join(","));
    s
}

/// Parses a radius list such as `0,250,500,inf`.
pub fn parse_radii(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|t| {
            let t = t.trim();
            if t.eq_ignore_ascii_case("inf") || t.eq_ignore_ascii_case("infinity") {
                Ok(f64::INFINITY)
            } else {
                t.parse::<f64>()
                    .map_err(|_| Error::InvalidArgument(format!("invalid radius '{t}'")))
            }
        })
        .collect()
}

// ---------------------------------------------------------------- files

pub fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}
