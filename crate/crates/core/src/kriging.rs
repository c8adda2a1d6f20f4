//! Ordinary kriging.
//!
//! For the selected samples `y_1..y_n` the weights `lambda` and Lagrange
//! multiplier `mu` solve the bordered system
//!
//! ```text
//! | G   1 | | lambda |   | g0 |
//! | 1^T 0 | |   mu   | = | 1  |
//! ```
//!
//! with `G_ij = gamma(|y_i - y_j|)` and `g0_i = gamma(|y_i - y_0|)`. The
//! estimate is `sum lambda_i v_i` and the kriging variance is
//! `sum lambda_i g0_i + mu`. Because `gamma(0) = 0`, a target that coincides
//! with a sample is reproduced exactly even when the model has a nugget.

use std::collections::HashMap;

use log::{debug, info};
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::linalg::Lu;
use crate::model::{GridGeometry, Point2D, Raster, Sample, DEFAULT_NODATA};
use crate::spatial::GridIndex;
use crate::variogram::VariogramModel;

/// Sample count above which [`Neighborhood::Auto`] switches to a moving
/// neighborhood.
pub const AUTO_GLOBAL_LIMIT: usize = 5000;
pub const AUTO_NEAREST_K: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Neighborhood {
    /// Global below [`AUTO_GLOBAL_LIMIT`] samples, otherwise
    /// `Nearest(AUTO_NEAREST_K, model range)`.
    #[default]
    Auto,
    Global,
    Nearest {
        k: usize,
        max_radius: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DuplicatePolicy {
    /// Samples sharing a position are replaced by their mean.
    #[default]
    Average,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrigingConfig {
    pub neighborhood: Neighborhood,
    pub duplicate_policy: DuplicatePolicy,
    /// Initial ridge on the variogram block diagonal as a fraction of the
    /// sill. Escalated through `{1e-10, 1e-8, 1e-6}` when the system is
    /// singular.
    pub jitter: f64,
}

impl Default for KrigingConfig {
    fn default() -> Self {
        Self {
            neighborhood: Neighborhood::Auto,
            duplicate_policy: DuplicatePolicy::Average,
            jitter: 0.0,
        }
    }
}

impl KrigingConfig {
    pub fn global() -> Self {
        Self {
            neighborhood: Neighborhood::Global,
            ..Self::default()
        }
    }

    pub fn nearest(k: usize, max_radius: f64) -> Self {
        Self {
            neighborhood: Neighborhood::Nearest { k, max_radius },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Neighborhood::Nearest { k, max_radius } = self.neighborhood {
            if k == 0 {
                return invalid("nearest neighborhood needs k >= 1");
            }
            if !(max_radius > 0.0) || !max_radius.is_finite() {
                return invalid(format!(
                    "max radius must be finite and > 0, got {max_radius}"
                ));
            }
        }
        if !(self.jitter >= 0.0) || !self.jitter.is_finite() {
            return invalid(format!("jitter must be >= 0, got {}", self.jitter));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KrigingSolution {
    /// `(sample index, weight)`; indices refer to the caller's sample list
    /// (the first member of a merged duplicate group).
    pub weights: Vec<(usize, f64)>,
    pub lagrange: f64,
    pub estimate: f64,
    /// `sum(w_i * gamma_i0) + lagrange`, clamped at 0. Models that are not
    /// valid in 2D (the bounded linear one) can push it negative.
    pub variance: f64,
}

#[derive(Debug, Clone, Copy)]
struct Site {
    position: Point2D,
    value: f64,
    /// Index of the first input sample at this position.
    source: usize,
}

enum Strategy {
    Global(Lu),
    Nearest {
        index: GridIndex,
        k: usize,
        max_radius: f64,
    },
}

/// Samples, model and neighborhood prepared for repeated predictions.
pub struct Kriger {
    sites: Vec<Site>,
    /// The model divided by `scale`; weights do not depend on the scale.
    model: VariogramModel,
    scale: f64,
    jitter_levels: Vec<f64>,
    strategy: Strategy,
    /// Duplicate samples folded into an existing position.
    pub duplicates_merged: usize,
}

impl Kriger {
    pub fn new(samples: &[Sample], model: &VariogramModel, config: &KrigingConfig) -> Result<Self> {
        model.validate()?;
        config.validate()?;
        if let Some(i) = samples
            .iter()
            .position(|s| !s.position.is_finite() || !s.value.is_finite())
        {
            return invalid(format!("sample {i} has a non-finite position or value"));
        }
        let (sites, duplicates_merged) = dedup(samples, config.duplicate_policy)?;
        if duplicates_merged > 0 {
            debug!("merged {duplicates_merged} duplicate sample positions");
        }
        // a zero sill is a constant field: any weights summing to 1 will do,
        // and the jitter levels pick equal ones
        let scale = if model.sill > 0.0 { model.sill } else { 1.0 };
        let mut jitter_levels = vec![config.jitter];
        for j in [1e-10, 1e-8, 1e-6] {
            if j > jitter_levels[0] {
                jitter_levels.push(j);
            }
        }

        let neighborhood = match config.neighborhood {
            Neighborhood::Auto if sites.len() > AUTO_GLOBAL_LIMIT => {
                info!(
                    "{} samples exceed {AUTO_GLOBAL_LIMIT}; using nearest {AUTO_NEAREST_K} within {} m",
                    sites.len(),
                    model.range
                );
                Neighborhood::Nearest {
                    k: AUTO_NEAREST_K,
                    max_radius: model.range,
                }
            }
            Neighborhood::Auto => Neighborhood::Global,
            n => n,
        };
        let mut kriger = Self {
            sites,
            model: model.scaled(1.0 / scale),
            scale,
            jitter_levels,
            strategy: Strategy::Nearest {
                index: GridIndex::new(&[], 1.0),
                k: 1,
                max_radius: 1.0,
            },
            duplicates_merged,
        };
        kriger.strategy = match neighborhood {
            Neighborhood::Nearest { k, max_radius } => {
                let pts: Vec<Point2D> = kriger.sites.iter().map(|s| s.position).collect();
                Strategy::Nearest {
                    index: GridIndex::new(&pts, max_radius),
                    k,
                    max_radius,
                }
            }
            _ => {
                if kriger.sites.is_empty() {
                    return Err(Error::Empty("no samples to krige".into()));
                }
                let all: Vec<usize> = (0..kriger.sites.len()).collect();
                Strategy::Global(kriger.factor(&all)?)
            }
        };
        Ok(kriger)
    }

    /// Number of distinct sample positions.
    pub fn site_count(&self) -> usize {
        self.sites.len()
    }

    fn factor(&self, selected: &[usize]) -> Result<Lu> {
        let n = selected.len();
        let dim = n + 1;
        let mut last_err = None;
        for &jitter in &self.jitter_levels {
            let mut a = vec![0.0; dim * dim];
            for (r, &i) in selected.iter().enumerate() {
                for (c, &j) in selected.iter().enumerate() {
                    let h = self.sites[i].position.distance(&self.sites[j].position);
                    a[r * dim + c] = self.model.gamma(h) + if r == c { jitter } else { 0.0 };
                }
                a[r * dim + n] = 1.0;
                a[n * dim + r] = 1.0;
            }
            match Lu::factor(a, dim) {
                Ok(lu) => {
                    if jitter > 0.0 {
                        debug!(
                            "kriging system of {n} samples needed jitter {:e}",
                            jitter * self.scale
                        );
                    }
                    return Ok(lu);
                }
                Err(e) => last_err = Some(e),
            }
        }
        Err(Error::Numerical(format!(
            "kriging system with {n} samples is singular after jitter escalation to {:e} ({})",
            self.jitter_levels.last().copied().unwrap_or(0.0) * self.scale,
            last_err.map(|e| e.to_string()).unwrap_or_default()
        )))
    }

    fn solve_with(&self, lu: &Lu, selected: &[usize], target: &Point2D) -> KrigingSolution {
        let n = selected.len();
        let mut rhs: Vec<f64> = selected
            .iter()
            .map(|&i| self.model.gamma(self.sites[i].position.distance(target)))
            .collect();
        rhs.push(1.0);
        let x = lu.solve(&rhs);
        let lagrange = x[n] * self.scale;
        let estimate = selected
            .iter()
            .zip(&x)
            .map(|(&i, l)| l * self.sites[i].value)
            .sum();
        let variance =
            (x[..n].iter().zip(&rhs).map(|(l, g)| l * g).sum::<f64>() + x[n]) * self.scale;
        KrigingSolution {
            weights: selected
                .iter()
                .zip(&x)
                .map(|(&i, &l)| (self.sites[i].source, l))
                .collect(),
            lagrange,
            estimate,
            variance: variance.max(0.0),
        }
    }

    /// Solution at `target`, or `None` when the neighborhood is empty.
    pub fn solve(&self, target: &Point2D) -> Result<Option<KrigingSolution>> {
        match &self.strategy {
            Strategy::Global(lu) => {
                let all: Vec<usize> = (0..self.sites.len()).collect();
                Ok(Some(self.solve_with(lu, &all, target)))
            }
            Strategy::Nearest {
                index,
                k,
                max_radius,
            } => {
                let mut selected: Vec<usize> = index
                    .k_nearest(target, *k, *max_radius)
                    .into_iter()
                    .map(|(i, _)| i)
                    .collect();
                if selected.is_empty() {
                    return Ok(None);
                }
                selected.sort_unstable();
                let lu = self.factor(&selected).map_err(|e| {
                    Error::Numerical(format!("at ({}, {}): {e}", target.x, target.y))
                })?;
                Ok(Some(self.solve_with(&lu, &selected, target)))
            }
        }
    }

    pub fn predict(&self, target: &Point2D) -> Result<Option<(f64, f64)>> {
        Ok(self.solve(target)?.map(|s| (s.estimate, s.variance)))
    }

    /// Estimates and variances at every cell center of `grid`. Cells with an
    /// empty neighborhood get estimate 0 and a no-data variance.
    pub fn predict_grid(&self, grid: &GridGeometry) -> Result<(Raster, Raster)> {
        grid.validate()?;
        let cells: Vec<Option<(f64, f64)>> = (0..grid.len())
            .into_par_iter()
            .map(|i| self.predict(&grid.center_of(i)))
            .collect::<Result<_>>()?;
        let estimates = cells.iter().map(|c| c.map_or(0.0, |c| c.0)).collect();
        let variances = cells
            .iter()
            .map(|c| c.map_or(DEFAULT_NODATA, |c| c.1))
            .collect();
        Ok((
            Raster::new(*grid, estimates, DEFAULT_NODATA)?,
            Raster::new(*grid, variances, DEFAULT_NODATA)?,
        ))
    }
}

fn dedup(samples: &[Sample], policy: DuplicatePolicy) -> Result<(Vec<Site>, usize)> {
    let mut by_pos: HashMap<(u64, u64), usize> = HashMap::new();
    let mut groups: Vec<(Site, usize, f64)> = Vec::new();
    for (i, s) in samples.iter().enumerate() {
        // normalize -0.0 so it collides with 0.0
        let key = (
            (s.position.x + 0.0).to_bits(),
            (s.position.y + 0.0).to_bits(),
        );
        match by_pos.get(&key) {
            Some(&g) => {
                if policy == DuplicatePolicy::Error {
                    return invalid(format!(
                        "samples {} and {i} share position ({}, {})",
                        groups[g].0.source, s.position.x, s.position.y
                    ));
                }
                groups[g].1 += 1;
                groups[g].2 += s.value;
            }
            None => {
                by_pos.insert(key, groups.len());
                groups.push((
                    Site {
                        position: s.position,
                        value: s.value,
                        source: i,
                    },
                    1,
                    s.value,
                ));
            }
        }
    }
    let merged = samples.len() - groups.len();
    let sites = groups
        .into_iter()
        .map(|(mut site, count, sum)| {
            if count > 1 {
                site.value = sum / count as f64;
            }
            site
        })
        .collect();
    Ok((sites, merged))
}

/// Kriging weights at `target`; `None` signals an empty neighborhood.
pub fn solve_weights(
    samples: &[Sample],
    target: &Point2D,
    model: &VariogramModel,
    config: &KrigingConfig,
) -> Result<Option<KrigingSolution>> {
    match Kriger::new(samples, model, config) {
        Err(Error::Empty(_)) => Ok(None),
        Err(e) => Err(e),
        Ok(k) => k.solve(target),
    }
}

/// `(estimate, variance)` at `target`; `None` signals an empty neighborhood.
pub fn predict_point(
    samples: &[Sample],
    target: &Point2D,
    model: &VariogramModel,
    config: &KrigingConfig,
) -> Result<Option<(f64, f64)>> {
    Ok(solve_weights(samples, target, model, config)?.map(|s| (s.estimate, s.variance)))
}

/// Kriged estimate and variance rasters over `grid`.
pub fn predict_grid(
    samples: &[Sample],
    grid: &GridGeometry,
    model: &VariogramModel,
    config: &KrigingConfig,
) -> Result<(Raster, Raster)> {
    grid.validate()?;
    if samples.is_empty() {
        return Err(Error::Empty("no samples to krige".into()));
    }
    Kriger::new(samples, model, config)?.predict_grid(grid)
}
