//! Uniform grid bucketing for neighbor queries over sample positions.

use std::collections::HashMap;

use crate::model::Point2D;

/// Buckets point indices into square cells of a fixed edge length.
#[derive(Debug, Clone)]
pub struct GridIndex {
    edge: f64,
    points: Vec<Point2D>,
    buckets: HashMap<(i64, i64), Vec<usize>>,
    // bucket coordinate bounds, used to stop ring searches
    lo: (i64, i64),
    hi: (i64, i64),
}

impl GridIndex {
    pub fn new(points: &[Point2D], edge: f64) -> Self {
        assert!(edge > 0.0 && edge.is_finite(), "bucket edge must be > 0");
        let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        let mut lo = (i64::MAX, i64::MAX);
        let mut hi = (i64::MIN, i64::MIN);
        for (i, p) in points.iter().enumerate() {
            let key = Self::key(edge, p);
            lo = (lo.0.min(key.0), lo.1.min(key.1));
            hi = (hi.0.max(key.0), hi.1.max(key.1));
            buckets.entry(key).or_default().push(i);
        }
        Self {
            edge,
            points: points.to_vec(),
            buckets,
            lo,
            hi,
        }
    }

    fn key(edge: f64, p: &Point2D) -> (i64, i64) {
        ((p.x / edge).floor() as i64, (p.y / edge).floor() as i64)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn ring(&self, center: (i64, i64), r: i64, mut f: impl FnMut(usize)) {
        for bx in center.0 - r..=center.0 + r {
            for by in center.1 - r..=center.1 + r {
                if (bx - center.0).abs() != r && (by - center.1).abs() != r {
                    continue;
                }
                if let Some(ids) = self.buckets.get(&(bx, by)) {
                    ids.iter().for_each(|&i| f(i));
                }
            }
        }
    }

    fn max_ring(&self, center: (i64, i64)) -> i64 {
        [
            center.0 - self.lo.0,
            self.hi.0 - center.0,
            center.1 - self.lo.1,
            self.hi.1 - center.1,
        ]
        .into_iter()
        .max()
        .unwrap_or(0)
        .max(0)
    }

    /// Up to `k` nearest points within `max_radius` (inclusive), sorted by
    /// distance with ties broken by index.
    pub fn k_nearest(&self, target: &Point2D, k: usize, max_radius: f64) -> Vec<(usize, f64)> {
        let center = Self::key(self.edge, target);
        let reach = ((max_radius / self.edge).ceil() as i64).min(self.max_ring(center));
        let mut found = Vec::new();
        for r in 0..=reach {
            self.ring(center, r, |i| {
                let d = self.points[i].distance(target);
                if d <= max_radius {
                    found.push((i, d));
                }
            });
        }
        found.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        found.truncate(k);
        found
    }

    /// Distance to the nearest indexed point, `None` when the index is empty.
    pub fn nearest_distance(&self, target: &Point2D) -> Option<f64> {
        if self.points.is_empty() {
            return None;
        }
        let center = Self::key(self.edge, target);
        let last = self.max_ring(center);
        let mut best = f64::INFINITY;
        for r in 0..=last {
            // every point in ring r is at least (r-1)*edge away
            if (r - 1) as f64 * self.edge > best {
                break;
            }
            self.ring(center, r, |i| {
                best = best.min(self.points[i].distance(target))
            });
        }
        Some(best)
    }
}
