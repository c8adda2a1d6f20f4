//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rkgeo::semivariogram::CHUNK_ROWS;
use rkgeo::{
    BeamClass, EmpiricalSemivariogram, GridGeometry, Point2D, Raster, Sample, TrackAzimuthClass,
    TrackId, VariogramModel,
};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform samples over `[0, size)^2` with values in `[0, 50)` and random
/// beam and pass metadata.
pub fn random_samples(n: usize, size: f64, seed: u64) -> Vec<Sample> {
    let mut r = rng(seed);
    (0..n)
        .map(|i| Sample {
            position: Point2D::new(r.gen_range(0.0..size), r.gen_range(0.0..size)),
            value: r.gen_range(0.0..50.0),
            beam: if r.gen_bool(0.5) {
                BeamClass::Power
            } else {
                BeamClass::Coverage
            },
            azimuth_class: if r.gen_bool(0.5) {
                TrackAzimuthClass::Nwd
            } else {
                TrackAzimuthClass::Swd
            },
            track_id: TrackId(i as u64 % 16),
        })
        .collect()
}

pub fn random_raster(geometry: GridGeometry, seed: u64) -> Raster {
    let mut r = rng(seed);
    let values = (0..geometry.len())
        .map(|_| r.gen_range(-20.0..60.0))
        .collect();
    Raster::new(geometry, values, -9999.0).unwrap()
}

/// Pair azimuth in degrees from north, folded to `[0, 180)`.
fn pair_azimuth(dx: f64, dy: f64) -> f64 {
    let mut a = dx.atan2(dy).to_degrees();
    while a < 0.0 {
        a += 180.0;
    }
    while a >= 180.0 {
        a -= 180.0;
    }
    a
}

fn within(dx: f64, dy: f64, azimuth: f64, tolerance: f64) -> bool {
    let mut off = pair_azimuth(dx, dy) - azimuth;
    while off < -90.0 {
        off += 180.0;
    }
    while off >= 90.0 {
        off -= 180.0;
    }
    -tolerance <= off && off < tolerance
}

/// Loops over every pair. Sums restart for each block of `CHUNK_ROWS`
/// first indices and blocks are added in order, which is the summation
/// order the library promises.
pub fn brute_semivariogram(
    samples: &[Sample],
    bin_width: f64,
    max_lag: f64,
    direction: Option<(f64, f64)>,
) -> (Vec<Option<f64>>, Vec<u64>, u64) {
    let n_bins = (max_lag / bin_width).ceil() as usize;
    let mut totals = vec![0.0; n_bins];
    let mut counts = vec![0u64; n_bins];
    let mut coincident = 0;
    let n = samples.len();
    let mut start = 0;
    while start < n {
        let mut block = vec![0.0; n_bins];
        for i in start..(start + CHUNK_ROWS).min(n) {
            for j in i + 1..n {
                let (a, b) = (&samples[i], &samples[j]);
                let dx = b.position.x - a.position.x;
                let dy = b.position.y - a.position.y;
                let d = (dx * dx + dy * dy).sqrt();
                if d == 0.0 {
                    coincident += 1;
                    continue;
                }
                if d >= max_lag {
                    continue;
                }
                if let Some((az, tol)) = direction {
                    if !within(dx, dy, az, tol) {
                        continue;
                    }
                }
                let k = ((d / bin_width).floor() as usize).min(n_bins - 1);
                block[k] += (a.value - b.value) * (a.value - b.value) / 2.0;
                counts[k] += 1;
            }
        }
        for k in 0..n_bins {
            totals[k] += block[k];
        }
        start += CHUNK_ROWS;
    }
    let gammas = totals
        .iter()
        .zip(&counts)
        .map(|(s, &c)| (c > 0).then(|| s / c as f64))
        .collect();
    (gammas, counts, coincident)
}

/// Compares an implementation semivariogram with the brute-force one bin by
/// bin, bit for bit.
pub fn assert_matches_brute(
    sv: &EmpiricalSemivariogram,
    samples: &[Sample],
    direction: Option<(f64, f64)>,
) {
    let (gammas, counts, coincident) =
        brute_semivariogram(samples, sv.bin_width, sv.max_lag, direction);
    assert_eq!(sv.bins.len(), gammas.len());
    assert_eq!(sv.coincident_pairs, coincident);
    for (k, bin) in sv.bins.iter().enumerate() {
        assert_eq!(bin.pair_count, counts[k], "bin {k} pair count");
        assert_eq!(
            bin.semivariance.map(f64::to_bits),
            gammas[k].map(f64::to_bits),
            "bin {k} semivariance {:?} vs {:?}",
            bin.semivariance,
            gammas[k]
        );
    }
}

pub struct OkOracle {
    pub weights: Vec<f64>,
    pub lagrange: f64,
    pub estimate: f64,
    pub variance: f64,
}

/// Ordinary kriging from the textbook bordered system solved with a dense
/// LU from nalgebra.
pub fn ok_oracle(samples: &[Sample], target: &Point2D, model: &VariogramModel) -> OkOracle {
    let n = samples.len();
    let gamma = |a: &Point2D, b: &Point2D| {
        let h = ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt();
        if h == 0.0 {
            0.0
        } else {
            model.gamma(h)
        }
    };
    let mut a = DMatrix::<f64>::zeros(n + 1, n + 1);
    let mut b = DVector::<f64>::zeros(n + 1);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = gamma(&samples[i].position, &samples[j].position);
        }
        a[(i, n)] = 1.0;
        a[(n, i)] = 1.0;
        b[i] = gamma(&samples[i].position, target);
    }
    b[n] = 1.0;
    let x = a.lu().solve(&b).expect("oracle system is singular");
    let weights: Vec<f64> = x.iter().take(n).copied().collect();
    let estimate = weights.iter().zip(samples).map(|(w, s)| w * s.value).sum();
    // the library reports max(0, variance); the bounded linear model is not
    // conditionally negative definite in 2D and can go below zero
    let variance = ((0..n).map(|i| x[i] * b[i]).sum::<f64>() + x[n]).max(0.0);
    OkOracle {
        weights,
        lagrange: x[n],
        estimate,
        variance,
    }
}

/// Ordinary kriging estimates at many targets from one dense factorization.
pub fn ok_oracle_estimates(
    samples: &[Sample],
    targets: &[Point2D],
    model: &VariogramModel,
) -> Vec<f64> {
    let n = samples.len();
    let gamma = |a: &Point2D, b: &Point2D| {
        let h = ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt();
        if h == 0.0 {
            0.0
        } else {
            model.gamma(h)
        }
    };
    let mut a = DMatrix::<f64>::zeros(n + 1, n + 1);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = gamma(&samples[i].position, &samples[j].position);
        }
        a[(i, n)] = 1.0;
        a[(n, i)] = 1.0;
    }
    let lu = a.lu();
    targets
        .iter()
        .map(|t| {
            let mut b = DVector::<f64>::zeros(n + 1);
            for i in 0..n {
                b[i] = gamma(&samples[i].position, t);
            }
            b[n] = 1.0;
            let x = lu.solve(&b).expect("oracle system is singular");
            (0..n).map(|i| x[i] * samples[i].value).sum()
        })
        .collect()
}

/// 2-norm condition number of the bordered kriging matrix.
pub fn condition_number(samples: &[Sample], model: &VariogramModel) -> f64 {
    let n = samples.len();
    let mut a = DMatrix::<f64>::zeros(n + 1, n + 1);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = model.gamma(samples[i].position.distance(&samples[j].position));
        }
        a[(i, n)] = 1.0;
        a[(n, i)] = 1.0;
    }
    let sv = a.singular_values();
    sv.max() / sv.min()
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

/// Root mean square of `(a - b)` over cells valid in both rasters and
/// selected by `keep`.
pub fn rmse_where(a: &Raster, b: &Raster, keep: impl Fn(usize) -> bool) -> f64 {
    let mut s = 0.0;
    let mut n = 0;
    for i in 0..a.values.len() {
        if !keep(i) || a.values[i] == a.nodata || b.values[i] == b.nodata {
            continue;
        }
        s += (a.values[i] - b.values[i]).powi(2);
        n += 1;
    }
    (s / n as f64).sqrt()
}

/// Per-cell distance to the nearest sample by exhaustive search.
pub fn brute_distances(geometry: &GridGeometry, samples: &[Sample]) -> Vec<f64> {
    (0..geometry.len())
        .map(|i| {
            let c = geometry.center_of(i);
            samples
                .iter()
                .map(|s| ((s.position.x - c.x).powi(2) + (s.position.y - c.y).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}
