//! Parametric variogram models and weighted least-squares fitting.
//!
//! Ranges follow the practical-range convention: Exponential and Gaussian
//! models carry a factor 3 in the exponent so that `gamma(range)` is about
//! 95% of the way from nugget to sill. Sill is the total sill (nugget
//! included).

use std::f64::consts::PI;
use std::fmt;

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::semivariogram::{EmpiricalSemivariogram, LagBin};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Exponential,
    Spherical,
    Gaussian,
    Linear,
    Circular,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Exponential,
        ModelKind::Spherical,
        ModelKind::Gaussian,
        ModelKind::Linear,
        ModelKind::Circular,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Exponential => "exponential",
            ModelKind::Spherical => "spherical",
            ModelKind::Gaussian => "gaussian",
            ModelKind::Linear => "linear",
            ModelKind::Circular => "circular",
        }
    }

    /// Normalized structure function: 0 at 0, rising to 1 (or towards 1).
    fn structure(&self, x: f64) -> f64 {
        match self {
            ModelKind::Exponential => 1.0 - (-3.0 * x).exp(),
            ModelKind::Gaussian => 1.0 - (-3.0 * x * x).exp(),
            ModelKind::Spherical => {
                if x >= 1.0 {
                    1.0
                } else {
                    1.5 * x - 0.5 * x * x * x
                }
            }
            ModelKind::Linear => x.min(1.0),
            ModelKind::Circular => {
                if x >= 1.0 {
                    1.0
                } else {
                    1.0 - (2.0 / PI) * (x.acos() - x * (1.0 - x * x).sqrt())
                }
            }
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown model kind '{s}'")))
    }
}

/// Isotropic variogram model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariogramModel {
    pub kind: ModelKind,
    pub nugget: f64,
    /// Total sill.
    pub sill: f64,
    /// Practical range in meters; the Linear model reaches the sill here.
    pub range: f64,
}

impl VariogramModel {
    pub fn new(kind: ModelKind, nugget: f64, sill: f64, range: f64) -> Result<Self> {
        let m = Self {
            kind,
            nugget,
            sill,
            range,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nugget.is_finite() && self.sill.is_finite() && self.range.is_finite()) {
            return invalid("variogram parameters must be finite");
        }
        if self.nugget < 0.0 {
            return invalid(format!("nugget must be >= 0, got {}", self.nugget));
        }
        if self.sill < self.nugget {
            return invalid(format!(
                "sill {} must be >= nugget {}",
                self.sill, self.nugget
            ));
        }
        if !(self.range > 0.0) {
            return invalid(format!("range must be > 0, got {}", self.range));
        }
        Ok(())
    }

    pub fn partial_sill(&self) -> f64 {
        self.sill - self.nugget
    }

    /// `gamma(h)`, with `gamma(0) = 0` and the nugget as the limit at `0+`.
    /// `h` must be non-negative; see [`model_eval`] for the checked form.
    #[inline]
    pub fn gamma(&self, h: f64) -> f64 {
        if h <= 0.0 {
            return 0.0;
        }
        self.nugget + self.partial_sill() * self.kind.structure(h / self.range)
    }

    /// `C(h) = sill - gamma(h)`.
    #[inline]
    pub fn covariance(&self, h: f64) -> f64 {
        self.sill - self.gamma(h)
    }

    /// Same model with nugget and sill multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            nugget: self.nugget * factor,
            sill: self.sill * factor,
            ..*self
        }
    }
}

pub fn model_eval(model: &VariogramModel, h: f64) -> Result<f64> {
    if !(h >= 0.0) {
        return invalid(format!("lag must be >= 0, got {h}"));
    }
    Ok(model.gamma(h))
}

pub fn covariance_from_model(model: &VariogramModel, h: f64) -> Result<f64> {
    if !(h >= 0.0) {
        return invalid(format!("lag must be >= 0, got {h}"));
    }
    Ok(model.covariance(h))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Weighting {
    Uniform,
    #[default]
    PairCount,
}

impl std::str::FromStr for Weighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "uniform" => Ok(Weighting::Uniform),
            "pair-count" | "paircount" | "pairs" => Ok(Weighting::PairCount),
            other => invalid(format!("unknown weighting '{other}'")),
        }
    }
}

impl fmt::Display for Weighting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Weighting::Uniform => "uniform",
            Weighting::PairCount => "pair-count",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult {
    pub model: VariogramModel,
    pub r_squared: f64,
    pub residual_sum_squares: f64,
    pub bins_used: usize,
    /// Flat input: range is unidentifiable and set to the max lag.
    pub degenerate: bool,
}

/// Evaluation budget of one Nelder-Mead start (restarts included).
const MAX_EVALS: usize = 20_000;
const RANGE_BOUNDS: (f64, f64) = (1e-6, 100.0);

struct Problem<'a> {
    kind: ModelKind,
    lags: &'a [f64],
    gammas: &'a [f64],
    weights: &'a [f64],
}

impl Problem<'_> {
    /// Objective in normalized units: `p = [nugget, partial sill, range]`.
    fn rss(&self, p: &[f64; 3]) -> f64 {
        let m = VariogramModel {
            kind: self.kind,
            nugget: p[0],
            sill: p[0] + p[1],
            range: p[2],
        };
        self.lags
            .iter()
            .zip(self.gammas)
            .zip(self.weights)
            .map(|((&h, &g), &w)| {
                let r = m.gamma(h) - g;
                w * r * r
            })
            .sum()
    }
}

fn project(p: [f64; 3]) -> [f64; 3] {
    [
        p[0].max(0.0),
        p[1].max(0.0),
        p[2].clamp(RANGE_BOUNDS.0, RANGE_BOUNDS.1),
    ]
}

struct Minimum {
    point: [f64; 3],
    value: f64,
    evaluations: usize,
    converged: bool,
}

/// Nelder-Mead with box projection, restarted from the incumbent until a
/// restart no longer improves it.
fn nelder_mead(f: impl Fn(&[f64; 3]) -> f64, start: [f64; 3]) -> Minimum {
    const FTOL: f64 = 1e-16;
    const XTOL: f64 = 1e-11;
    let evals = std::cell::Cell::new(0usize);
    let eval = |p: &[f64; 3]| {
        evals.set(evals.get() + 1);
        f(p)
    };
    let mut best = project(start);
    let mut best_val = eval(&best);
    let mut converged = false;

    while evals.get() < MAX_EVALS {
        let mut simplex: Vec<([f64; 3], f64)> = Vec::with_capacity(4);
        simplex.push((best, best_val));
        for i in 0..3 {
            let mut p = best;
            p[i] += if p[i].abs() > 1e-3 { 0.1 * p[i] } else { 0.05 };
            let p = project(p);
            simplex.push((p, eval(&p)));
        }
        let run_start = best_val;
        let mut run_converged = false;
        while evals.get() < MAX_EVALS {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let (lo, hi) = (simplex[0].1, simplex[3].1);
            let diameter = simplex[1..]
                .iter()
                .map(|(p, _)| {
                    (0..3)
                        .map(|i| (p[i] - simplex[0].0[i]).abs())
                        .fold(0.0, f64::max)
                })
                .fold(0.0, f64::max);
            if (hi - lo) <= FTOL * (lo.abs() + 1e-300) + 1e-300 && diameter < XTOL
                || diameter < 1e-14
            {
                run_converged = true;
                break;
            }
            let mut centroid = [0.0; 3];
            for (p, _) in &simplex[..3] {
                for i in 0..3 {
                    centroid[i] += p[i] / 3.0;
                }
            }
            let along = |t: f64| {
                let w = simplex[3].0;
                project([
                    centroid[0] + t * (centroid[0] - w[0]),
                    centroid[1] + t * (centroid[1] - w[1]),
                    centroid[2] + t * (centroid[2] - w[2]),
                ])
            };
            let xr = along(1.0);
            let fr = eval(&xr);
            if fr < simplex[0].1 {
                let xe = along(2.0);
                let fe = eval(&xe);
                simplex[3] = if fe < fr { (xe, fe) } else { (xr, fr) };
            } else if fr < simplex[2].1 {
                simplex[3] = (xr, fr);
            } else {
                let (xc, fc) = if fr < simplex[3].1 {
                    let xc = along(0.5);
                    (xc, eval(&xc))
                } else {
                    let xc = along(-0.5);
                    (xc, eval(&xc))
                };
                if fc < simplex[3].1.min(fr) {
                    simplex[3] = (xc, fc);
                } else {
                    let x0 = simplex[0].0;
                    for v in simplex.iter_mut().skip(1) {
                        let p = project([
                            x0[0] + 0.5 * (v.0[0] - x0[0]),
                            x0[1] + 0.5 * (v.0[1] - x0[1]),
                            x0[2] + 0.5 * (v.0[2] - x0[2]),
                        ]);
                        *v = (p, eval(&p));
                    }
                }
            }
        }
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if simplex[0].1 < best_val {
            best = simplex[0].0;
            best_val = simplex[0].1;
        }
        if run_converged && best_val >= run_start * (1.0 - 1e-12) {
            converged = true;
            break;
        }
    }
    Minimum {
        point: best,
        value: best_val,
        evaluations: evals.get(),
        converged,
    }
}

/// Fits a model of `kind` to the populated bins of `sv`.
pub fn fit(
    sv: &EmpiricalSemivariogram,
    kind: ModelKind,
    weighting: Weighting,
) -> Result<FitResult> {
    let used: Vec<&LagBin> = sv.populated().collect();
    if used.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "fit needs at least 3 populated bins, got {}",
            used.len()
        )));
    }
    let lags: Vec<f64> = used.iter().map(|b| b.lag_center).collect();
    let gammas: Vec<f64> = used.iter().filter_map(|b| b.semivariance).collect();
    let raw_w: Vec<f64> = used
        .iter()
        .map(|b| match weighting {
            Weighting::Uniform => 1.0,
            Weighting::PairCount => b.pair_count as f64,
        })
        .collect();
    let w_total: f64 = raw_w.iter().sum();
    let weights: Vec<f64> = raw_w.iter().map(|w| w / w_total).collect();

    let g_min = gammas.iter().copied().fold(f64::INFINITY, f64::min);
    let g_max = gammas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean: f64 = gammas.iter().zip(&weights).map(|(g, w)| g * w).sum();
    let tss: f64 = gammas
        .iter()
        .zip(&weights)
        .map(|(g, w)| w * (g - mean) * (g - mean))
        .sum();

    if g_max - g_min <= 1e-12 * g_max.abs() {
        let model = VariogramModel::new(kind, g_max, g_max, sv.max_lag)?;
        return Ok(FitResult {
            model,
            r_squared: 1.0,
            residual_sum_squares: 0.0,
            bins_used: used.len(),
            degenerate: true,
        });
    }

    // normalize so that the search is scale free in both axes
    let h_scale = sv.max_lag;
    let g_scale = g_max;
    let n_lags: Vec<f64> = lags.iter().map(|h| h / h_scale).collect();
    let n_gammas: Vec<f64> = gammas.iter().map(|g| g / g_scale).collect();
    let problem = Problem {
        kind,
        lags: &n_lags,
        gammas: &n_gammas,
        weights: &weights,
    };

    let n_min = g_min / g_scale;
    let mut starts = Vec::new();
    for nugget in [0.0, n_min] {
        for range in [0.25, 0.5, 1.0, 2.0] {
            starts.push([nugget, 1.0 - nugget, range]);
        }
    }
    let results: Vec<Minimum> = starts
        .par_iter()
        .map(|s| nelder_mead(|p| problem.rss(p), *s))
        .collect();
    let evaluations = results.iter().map(|r| r.evaluations).sum();
    // first minimum in start order wins ties
    let best = results
        .iter()
        .fold(None::<&Minimum>, |acc, r| match acc {
            Some(a) if a.value <= r.value => Some(a),
            _ => Some(r),
        })
        .expect("non-empty start grid");
    let p = best.point;
    let model = VariogramModel {
        kind,
        nugget: p[0] * g_scale,
        sill: (p[0] + p[1]) * g_scale,
        range: p[2] * h_scale,
    };
    if !results.iter().any(|r| r.converged) {
        return Err(Error::Convergence {
            evaluations,
            best_rss: best.value * g_scale * g_scale * w_total,
            best: Box::new(model),
        });
    }
    let rss = best.value * g_scale * g_scale;
    let r_squared = 1.0 - rss / tss;
    Ok(FitResult {
        model,
        r_squared,
        residual_sum_squares: rss * w_total,
        bins_used: used.len(),
        degenerate: false,
    })
}

/// Pools two semivariograms on the same bin grid as pair-count weighted
/// averages per bin.
pub fn merge_semivariograms(
    a: &EmpiricalSemivariogram,
    b: &EmpiricalSemivariogram,
) -> Result<EmpiricalSemivariogram> {
    if a.bin_width != b.bin_width || a.max_lag != b.max_lag || a.bins.len() != b.bins.len() {
        return invalid(format!(
            "bin grids differ: width {} vs {}, max lag {} vs {}",
            a.bin_width, b.bin_width, a.max_lag, b.max_lag
        ));
    }
    let bins = a
        .bins
        .iter()
        .zip(&b.bins)
        .map(|(x, y)| {
            let n = x.pair_count + y.pair_count;
            let semivariance = match (x.semivariance, y.semivariance) {
                (Some(gx), Some(gy)) => {
                    let fx = x.pair_count as f64 / n as f64;
                    let fy = y.pair_count as f64 / n as f64;
                    Some(fx * gx + fy * gy)
                }
                (g, None) | (None, g) => g,
            };
            LagBin {
                semivariance,
                pair_count: n,
                ..*x
            }
        })
        .collect();
    Ok(EmpiricalSemivariogram {
        bins,
        bin_width: a.bin_width,
        max_lag: a.max_lag,
        direction: if a.direction == b.direction {
            a.direction
        } else {
            None
        },
        coincident_pairs: a.coincident_pairs + b.coincident_pairs,
    })
}

/// Fits a single model to the pooled bins of two semivariograms.
pub fn fit_combined(
    sv_a: &EmpiricalSemivariogram,
    sv_b: &EmpiricalSemivariogram,
    kind: ModelKind,
    weighting: Weighting,
) -> Result<FitResult> {
    fit(&merge_semivariograms(sv_a, sv_b)?, kind, weighting)
}
