//! Accuracy metrics and error stratification by distance to the nearest
//! sample.

use crate::error::{invalid, Error, Result};
use crate::model::{Raster, Sample};
use crate::spatial::GridIndex;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSet {
    /// Mean of predicted minus reference.
    pub bias: f64,
    pub rmse: f64,
    /// RMSE over the mean reference value; `None` when that mean is 0.
    pub rrmse: Option<f64>,
    pub n: usize,
}

/// Metrics over `(predicted, reference)` pairs.
pub fn metrics_from_pairs(pairs: impl IntoIterator<Item = (f64, f64)>) -> Result<MetricSet> {
    let (mut n, mut sum_e, mut sum_e2, mut sum_r) = (0usize, 0.0, 0.0, 0.0);
    for (p, r) in pairs {
        let e = p - r;
        n += 1;
        sum_e += e;
        sum_e2 += e * e;
        sum_r += r;
    }
    if n == 0 {
        return Err(Error::Empty("no overlapping valid values".into()));
    }
    let nf = n as f64;
    let rmse = (sum_e2 / nf).sqrt();
    let mean_r = sum_r / nf;
    Ok(MetricSet {
        bias: sum_e / nf,
        rmse,
        rrmse: (mean_r != 0.0).then(|| rmse / mean_r),
        n,
    })
}

fn check_geometry(a: &Raster, b: &Raster) -> Result<()> {
    if a.geometry != b.geometry {
        return invalid(format!(
            "raster geometries differ: {:?} vs {:?}",
            a.geometry, b.geometry
        ));
    }
    Ok(())
}

fn valid_pairs<'a>(
    predicted: &'a Raster,
    reference: &'a Raster,
    mask: impl Fn(usize) -> bool + 'a,
) -> impl Iterator<Item = (f64, f64)> + 'a {
    (0..predicted.values.len()).filter_map(move |i| {
        if !mask(i) {
            return None;
        }
        Some((predicted.valid(i)?, reference.valid(i)?))
    })
}

/// Bias, RMSE and rRMSE over cells valid in both rasters.
pub fn metrics(predicted: &Raster, reference: &Raster) -> Result<MetricSet> {
    check_geometry(predicted, reference)?;
    metrics_from_pairs(valid_pairs(predicted, reference, |_| true))
}

/// Metrics over the concatenation of every site's `(predicted, reference)`
/// pairs.
pub fn pooled_metrics(per_site: &[Vec<(f64, f64)>]) -> Result<MetricSet> {
    metrics_from_pairs(per_site.iter().flatten().copied())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProximityRow {
    /// Buffer radius in meters; `f64::INFINITY` for the full extent.
    pub radius: f64,
    /// Qualifying cells valid in both rasters.
    pub n: usize,
    /// `None` when no cell qualifies.
    pub metrics: Option<MetricSet>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProximityReport {
    pub rows: Vec<ProximityRow>,
}

/// Distance from every cell center to the nearest sample.
pub fn distance_to_nearest(raster: &Raster, samples: &[Sample]) -> Vec<f64> {
    let g = &raster.geometry;
    if samples.is_empty() {
        return vec![f64::INFINITY; g.len()];
    }
    let pts: Vec<_> = samples.iter().map(|s| s.position).collect();
    let ext = g.extent();
    let edge = (ext.width() * ext.height() / pts.len() as f64)
        .sqrt()
        .max(g.cell_size);
    let index = GridIndex::new(&pts, edge);
    (0..g.len())
        .map(|i| {
            index
                .nearest_distance(&g.center_of(i))
                .unwrap_or(f64::INFINITY)
        })
        .collect()
}

/// Metrics restricted to cells near samples, for each radius. Radius 0 is
/// the set of cells containing a sample; a positive radius adds every cell
/// whose center lies within it, and an infinite radius takes all cells.
pub fn proximity_analysis(
    predicted: &Raster,
    reference: &Raster,
    samples: &[Sample],
    radii: &[f64],
) -> Result<ProximityReport> {
    check_geometry(predicted, reference)?;
    if radii.iter().any(|r| r.is_nan() || *r < 0.0) {
        return invalid("radii must be >= 0");
    }
    if radii.windows(2).any(|w| w[0] >= w[1]) {
        return invalid(format!("radii must be strictly increasing, got {radii:?}"));
    }
    let g = &predicted.geometry;
    let mut contains = vec![false; g.len()];
    for s in samples {
        if let Some(i) = g.index_of(&s.position) {
            contains[i] = true;
        }
    }
    let dist = distance_to_nearest(predicted, samples);
    let mut rows = Vec::with_capacity(radii.len());
    for &radius in radii {
        let inside =
            |i: usize| radius.is_infinite() || contains[i] || (radius > 0.0 && dist[i] <= radius);
        let m = metrics_from_pairs(valid_pairs(predicted, reference, inside)).ok();
        rows.push(ProximityRow {
            radius,
            n: m.map_or(0, |m| m.n),
            metrics: m,
        });
    }
    Ok(ProximityReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{GridGeometry, Point2D, DEFAULT_NODATA};

    fn raster(values: Vec<f64>) -> Raster {
        let g = GridGeometry::new(Point2D::new(0.0, 0.0), 10.0, 2, values.len() / 2).unwrap();
        Raster::new(g, values, DEFAULT_NODATA).unwrap()
    }

    #[test]
    fn identity_and_offset() {
        let r = raster(vec![10.0, 20.0, 30.0, 40.0]);
        let m = metrics(&r, &r).unwrap();
        assert_eq!((m.bias, m.rmse, m.n), (0.0, 0.0, 4));
        let p = raster(r.values.iter().map(|v| v + 2.0).collect());
        let m = metrics(&p, &r).unwrap();
        assert_eq!((m.bias, m.rmse), (2.0, 2.0));
        assert_eq!(m.rrmse, Some(2.0 / 25.0));
    }

    #[test]
    fn nodata_and_errors() {
        let r = raster(vec![10.0, DEFAULT_NODATA, 30.0, 40.0]);
        let p = raster(vec![11.0, 5.0, DEFAULT_NODATA, 40.0]);
        let m = metrics(&p, &r).unwrap();
        assert_eq!(m.n, 2);
        let empty = raster(vec![DEFAULT_NODATA; 4]);
        assert!(matches!(metrics(&empty, &r), Err(Error::Empty(_))));
        let other = raster(vec![1.0; 6]);
        assert!(metrics(&other, &r).is_err());
        let zero = raster(vec![0.0; 4]);
        assert_eq!(metrics(&zero, &zero).unwrap().rrmse, None);
    }

    #[test]
    fn pooled_duplicate_invariance() {
        let v = vec![(1.0, 2.0), (5.0, 3.0), (-1.0, 0.5)];
        let one = pooled_metrics(std::slice::from_ref(&v)).unwrap();
        let two = pooled_metrics(&[v.clone(), v.clone()]).unwrap();
        assert!((one.bias - two.bias).abs() < 1e-15);
        assert!((one.rmse - two.rmse).abs() < 1e-15);
        assert!(pooled_metrics(&[vec![], vec![]]).is_err());
    }

    #[test]
    fn proximity_rows() {
        let r = raster(vec![10.0, 20.0, 30.0, 40.0, 50.0, 60.0]);
        let p = raster(vec![11.0, 20.0, 30.0, 44.0, 50.0, 66.0]);
        let s = [Sample::at(5.0, 5.0, 0.0)];
        let rep = proximity_analysis(&p, &r, &s, &[0.0, 10.0, 15.0, f64::INFINITY]).unwrap();
        let n: Vec<usize> = rep.rows.iter().map(|r| r.n).collect();
        assert_eq!(n, vec![1, 3, 4, 6]);
        assert_eq!(rep.rows[0].metrics.unwrap().rmse, 1.0);
        assert_eq!(rep.rows[3].metrics, Some(metrics(&p, &r).unwrap()));
        assert!(proximity_analysis(&p, &r, &s, &[10.0, 0.0]).is_err());
        let none = proximity_analysis(&p, &r, &[], &[0.0]).unwrap();
        assert_eq!(none.rows[0].n, 0);
        assert!(none.rows[0].metrics.is_none());
    }
}
