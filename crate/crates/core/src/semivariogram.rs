//! Empirical semivariogram estimation, omnidirectional and directional, and
//! a periodicity diagnostic for sensor-induced spatial patterns.
//!
//! For every unordered pair of samples separated by `0 < d < max_lag` the
//! half squared difference `(v_i - v_j)^2 / 2` is accumulated into the bin
//! `[lag_lo, lag_hi)` containing `d`; a bin's semivariance is the mean over
//! its pairs.
//!
//! Accumulation is parallel but deterministic: pairs `(i, j), i < j` are
//! grouped by first index into consecutive chunks of [`CHUNK_ROWS`] rows.
//! Inside a chunk pairs are summed in lexicographic order; chunk partial sums
//! are then added to the totals in chunk order. The result is bit-identical
//! for any thread count.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::model::{BeamClass, Sample, TrackAzimuthClass};

/// Rows of the pair triangle handled by one accumulation chunk.
pub const CHUNK_ROWS: usize = 32;

pub const DEFAULT_BIN_WIDTH: f64 = 100.0;
pub const DEFAULT_MAX_LAG: f64 = 10_000.0;
pub const DEFAULT_TOLERANCE_DEG: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LagBin {
    pub lag_lo: f64,
    pub lag_hi: f64,
    pub lag_center: f64,
    /// `None` when the bin holds no pairs.
    pub semivariance: Option<f64>,
    pub pair_count: u64,
}

/// Direction filter: pair separation azimuth within `tolerance_deg` of
/// `azimuth_deg`, both folded modulo 180 degrees. Azimuths are degrees
/// clockwise from north.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Direction {
    pub azimuth_deg: f64,
    pub tolerance_deg: f64,
}

impl Direction {
    pub fn new(azimuth_deg: f64, tolerance_deg: f64) -> Result<Self> {
        if !azimuth_deg.is_finite() {
            return invalid("azimuth must be finite");
        }
        if !(tolerance_deg > 0.0 && tolerance_deg <= 90.0) {
            return invalid(format!("tolerance must be in (0, 90], got {tolerance_deg}"));
        }
        Ok(Self {
            azimuth_deg,
            tolerance_deg,
        })
    }

    /// Half-open window `[-tol, tol)` around the folded azimuth, so windows
    /// of width `2*tol` tile `[0, 180)` without overlap.
    pub fn accepts(&self, dx: f64, dy: f64) -> bool {
        let offset =
            (separation_azimuth(dx, dy) - self.azimuth_deg + 90.0).rem_euclid(180.0) - 90.0;
        offset >= -self.tolerance_deg && offset < self.tolerance_deg
    }
}

/// Azimuth of a separation vector in degrees clockwise from north, folded
/// into `[0, 180)`.
pub fn separation_azimuth(dx: f64, dy: f64) -> f64 {
    let a = dx.atan2(dy).to_degrees().rem_euclid(180.0);
    // rem_euclid can round up to exactly 180 for tiny negative inputs
    if a >= 180.0 {
        0.0
    } else {
        a
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalSemivariogram {
    pub bins: Vec<LagBin>,
    pub bin_width: f64,
    pub max_lag: f64,
    pub direction: Option<Direction>,
    /// Pairs at zero separation, excluded from every bin.
    pub coincident_pairs: u64,
}

impl EmpiricalSemivariogram {
    pub fn populated(&self) -> impl Iterator<Item = &LagBin> + '_ {
        self.bins.iter().filter(|b| b.pair_count > 0)
    }

    pub fn populated_count(&self) -> usize {
        self.populated().count()
    }

    pub fn total_pairs(&self) -> u64 {
        self.bins.iter().map(|b| b.pair_count).sum()
    }

    /// Index of the bin containing lag `h`, if `0 <= h < max_lag`.
    pub fn bin_index(&self, h: f64) -> Option<usize> {
        if !(h >= 0.0 && h < self.max_lag) {
            return None;
        }
        Some(((h / self.bin_width).floor() as usize).min(self.bins.len() - 1))
    }

    /// Builds an empty semivariogram with the standard bin layout.
    pub fn empty_bins(bin_width: f64, max_lag: f64) -> Result<Vec<LagBin>> {
        check_binning(bin_width, max_lag)?;
        let n = bin_count(bin_width, max_lag);
        Ok((0..n)
            .map(|i| {
                let lo = i as f64 * bin_width;
                let hi = ((i + 1) as f64 * bin_width).min(max_lag);
                LagBin {
                    lag_lo: lo,
                    lag_hi: hi,
                    lag_center: 0.5 * (lo + hi),
                    semivariance: None,
                    pair_count: 0,
                }
            })
            .collect())
    }
}

fn check_binning(bin_width: f64, max_lag: f64) -> Result<()> {
    if !(bin_width > 0.0) || !bin_width.is_finite() {
        return invalid(format!("bin width must be > 0, got {bin_width}"));
    }
    if !(max_lag >= bin_width) || !max_lag.is_finite() {
        return invalid(format!(
            "max lag {max_lag} must be >= bin width {bin_width}"
        ));
    }
    Ok(())
}

pub(crate) fn bin_count(bin_width: f64, max_lag: f64) -> usize {
    (max_lag / bin_width).ceil() as usize
}

/// Omnidirectional empirical semivariogram.
pub fn empirical(
    samples: &[Sample],
    bin_width: f64,
    max_lag: f64,
) -> Result<EmpiricalSemivariogram> {
    accumulate(samples, bin_width, max_lag, None)
}

/// Directional empirical semivariogram; only pairs whose separation azimuth
/// lies within `tolerance_deg` of `azimuth_deg` (modulo 180) contribute.
pub fn empirical_directional(
    samples: &[Sample],
    bin_width: f64,
    max_lag: f64,
    azimuth_deg: f64,
    tolerance_deg: f64,
) -> Result<EmpiricalSemivariogram> {
    let dir = Direction::new(azimuth_deg, tolerance_deg)?;
    accumulate(samples, bin_width, max_lag, Some(dir))
}

struct Partial {
    sums: Vec<f64>,
    counts: Vec<u64>,
    coincident: u64,
}

fn accumulate(
    samples: &[Sample],
    bin_width: f64,
    max_lag: f64,
    direction: Option<Direction>,
) -> Result<EmpiricalSemivariogram> {
    if samples.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "semivariogram needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    let mut bins = EmpiricalSemivariogram::empty_bins(bin_width, max_lag)?;
    let n_bins = bins.len();
    let n = samples.len();

    let chunk_partial = |chunk: usize| -> Partial {
        let mut p = Partial {
            sums: vec![0.0; n_bins],
            counts: vec![0; n_bins],
            coincident: 0,
        };
        let rows = chunk * CHUNK_ROWS..((chunk + 1) * CHUNK_ROWS).min(n);
        for i in rows {
            let a = &samples[i];
            for b in &samples[i + 1..] {
                let dx = b.position.x - a.position.x;
                let dy = b.position.y - a.position.y;
                let d = dx.hypot(dy);
                if d == 0.0 {
                    p.coincident += 1;
                    continue;
                }
                if d >= max_lag {
                    continue;
                }
                if let Some(dir) = &direction {
                    if !dir.accepts(dx, dy) {
                        continue;
                    }
                }
                let k = ((d / bin_width) as usize).min(n_bins - 1);
                let diff = a.value - b.value;
                p.sums[k] += 0.5 * diff * diff;
                p.counts[k] += 1;
            }
        }
        p
    };

    let n_chunks = n.div_ceil(CHUNK_ROWS);
    let partials: Vec<Partial> = (0..n_chunks).into_par_iter().map(chunk_partial).collect();

    let mut sums = vec![0.0; n_bins];
    let mut coincident = 0;
    for p in &partials {
        for k in 0..n_bins {
            sums[k] += p.sums[k];
            bins[k].pair_count += p.counts[k];
        }
        coincident += p.coincident;
    }
    for (bin, s) in bins.iter_mut().zip(sums) {
        if bin.pair_count > 0 {
            bin.semivariance = Some(s / bin.pair_count as f64);
        }
    }
    Ok(EmpiricalSemivariogram {
        bins,
        bin_width,
        max_lag,
        direction,
        coincident_pairs: coincident,
    })
}

/// Samples matching every provided criterion, original order preserved.
pub fn filter_samples(
    samples: &[Sample],
    beam: Option<BeamClass>,
    azimuth_class: Option<TrackAzimuthClass>,
) -> Vec<Sample> {
    samples
        .iter()
        .filter(|s| beam.is_none_or(|b| s.beam == b))
        .filter(|s| azimuth_class.is_none_or(|a| s.azimuth_class == a))
        .copied()
        .collect()
}

/// Uniform random subset of at most `max_samples`, original order preserved.
pub fn subsample(samples: &[Sample], max_samples: usize, seed: u64) -> Vec<Sample> {
    if samples.len() <= max_samples {
        return samples.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, samples.len(), max_samples).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| samples[i]).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicityScore {
    pub period: f64,
    /// Mean over multiples `k*period` of peak-bin semivariance divided by the
    /// local baseline.
    pub score: f64,
    /// Multiples of `period` whose ratio exceeds 1.
    pub peak_lags: Vec<f64>,
    /// Per-multiple `(lag, ratio)` detail.
    pub ratios: Vec<(f64, f64)>,
}

/// Scores how strongly semivariance peaks at multiples of `period`.
///
/// For each `k*period < max_lag` the bin containing the multiple is compared
/// with the mean of two baselines: the populated bin below it nearest to
/// `k*period - period/2`, and the populated bin above it nearest to
/// `k*period + period/2`. Where only one side exists it alone is the
/// baseline.
pub fn periodicity_score(sv: &EmpiricalSemivariogram, period: f64) -> Result<PeriodicityScore> {
    if !(period > sv.bin_width) || !period.is_finite() {
        return invalid(format!(
            "period {period} must exceed the bin width {}",
            sv.bin_width
        ));
    }
    if sv.populated_count() < 3 {
        return Err(Error::InsufficientData(format!(
            "periodicity needs at least 3 populated bins, got {}",
            sv.populated_count()
        )));
    }
    if sv.max_lag < 2.0 * period {
        return Err(Error::InsufficientData(format!(
            "semivariogram spans {} m, periodicity at {period} m needs at least {}",
            sv.max_lag,
            2.0 * period
        )));
    }

    let nearest_populated = |range: std::ops::Range<usize>, target: f64| -> Option<f64> {
        sv.bins[range]
            .iter()
            .filter(|b| b.pair_count > 0)
            .min_by(|a, b| {
                (a.lag_center - target)
                    .abs()
                    .total_cmp(&(b.lag_center - target).abs())
            })
            .and_then(|b| b.semivariance)
    };

    let mut ratios = Vec::new();
    let mut missing = Vec::new();
    let mut k = 1;
    while (k as f64) * period < sv.max_lag {
        let lag = k as f64 * period;
        k += 1;
        let Some(b) = sv.bin_index(lag) else { break };
        let Some(peak) = sv.bins[b].semivariance else {
            missing.push(lag);
            continue;
        };
        let lower = nearest_populated(0..b, lag - 0.5 * period);
        let upper = nearest_populated(b + 1..sv.bins.len(), lag + 0.5 * period);
        let baseline = match (lower, upper) {
            (Some(l), Some(u)) => 0.5 * (l + u),
            (Some(v), None) | (None, Some(v)) => v,
            (None, None) => {
                missing.push(lag);
                continue;
            }
        };
        let ratio = if baseline > 0.0 {
            peak / baseline
        } else if peak == 0.0 {
            1.0
        } else {
            return Err(Error::Numerical(format!(
                "zero baseline semivariance around lag {lag}"
            )));
        };
        ratios.push((lag, ratio));
    }
    if !missing.is_empty() {
        return Err(Error::InsufficientData(format!(
            "unpopulated bins required for periodicity at lags {missing:?}"
        )));
    }
    let score = ratios.iter().map(|r| r.1).sum::<f64>() / ratios.len() as f64;
    let peak_lags = ratios.iter().filter(|r| r.1 > 1.0).map(|r| r.0).collect();
    Ok(PeriodicityScore {
        period,
        score,
        peak_lags,
        ratios,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_samples(azimuth_deg: f64, n: usize) -> Vec<Sample> {
        let (s, c) = azimuth_deg.to_radians().sin_cos();
        (0..n)
            .map(|i| {
                let t = 37.0 * i as f64;
                Sample::at(t * s, t * c, (i as f64 * 0.7).sin() * 5.0)
            })
            .collect()
    }

    fn synthetic_sv(values: impl Fn(f64) -> f64) -> EmpiricalSemivariogram {
        let mut bins = EmpiricalSemivariogram::empty_bins(100.0, 3000.0).unwrap();
        for b in &mut bins {
            b.pair_count = 10;
            b.semivariance = Some(values(b.lag_lo));
        }
        EmpiricalSemivariogram {
            bins,
            bin_width: 100.0,
            max_lag: 3000.0,
            direction: None,
            coincident_pairs: 0,
        }
    }

    #[test]
    fn constant_field_has_zero_semivariance() {
        let s: Vec<Sample> = (0..40)
            .map(|i| Sample::at((i * 17 % 300) as f64, (i * 31 % 400) as f64, 7.0))
            .collect();
        let sv = empirical(&s, 100.0, 1000.0).unwrap();
        assert!(sv.populated().all(|b| b.semivariance == Some(0.0)));
    }

    #[test]
    fn two_point_example() {
        let s = [Sample::at(0.0, 0.0, 10.0), Sample::at(150.0, 0.0, 14.0)];
        let sv = empirical(&s, 100.0, 400.0).unwrap();
        assert_eq!(sv.bins.len(), 4);
        assert_eq!(sv.bins[1].semivariance, Some(8.0));
        assert_eq!(sv.bins[1].pair_count, 1);
        assert_eq!(sv.bins[1].lag_center, 150.0);
        assert_eq!(sv.total_pairs(), 1);
    }

    #[test]
    fn argument_errors() {
        let one = [Sample::at(0.0, 0.0, 1.0)];
        assert!(matches!(
            empirical(&one, 100.0, 400.0),
            Err(Error::InsufficientData(_))
        ));
        let two = [Sample::at(0.0, 0.0, 1.0), Sample::at(1.0, 0.0, 2.0)];
        assert!(empirical(&two, 0.0, 400.0).is_err());
        assert!(empirical(&two, -1.0, 400.0).is_err());
        assert!(empirical(&two, 100.0, 50.0).is_err());
        assert!(empirical_directional(&two, 100.0, 400.0, 0.0, 0.0).is_err());
        assert!(empirical_directional(&two, 100.0, 400.0, 0.0, 91.0).is_err());
    }

    #[test]
    fn coincident_pairs_are_excluded() {
        let s = [
            Sample::at(0.0, 0.0, 1.0),
            Sample::at(0.0, 0.0, 5.0),
            Sample::at(50.0, 0.0, 3.0),
        ];
        let sv = empirical(&s, 100.0, 200.0).unwrap();
        assert_eq!(sv.coincident_pairs, 1);
        assert_eq!(sv.total_pairs(), 2);
    }

    #[test]
    fn directional_line_examples() {
        let s = line_samples(36.0, 60);
        let omni = empirical(&s, 100.0, 2000.0).unwrap();
        let along = empirical_directional(&s, 100.0, 2000.0, 36.0, 1.0).unwrap();
        assert_eq!(along.bins, omni.bins);
        // the reverse orientation folds onto the same axis
        let back = empirical_directional(&s, 100.0, 2000.0, 216.0, 1.0).unwrap();
        assert_eq!(back.bins, omni.bins);
        let cross = empirical_directional(&s, 100.0, 2000.0, 126.0, 1.0).unwrap();
        assert_eq!(cross.total_pairs(), 0);
    }

    #[test]
    fn filter_examples() {
        let mut s = vec![Sample::at(0.0, 0.0, 1.0); 4];
        s[1].beam = BeamClass::Coverage;
        s[2].azimuth_class = TrackAzimuthClass::Swd;
        s[3].value = 9.0;
        let p = filter_samples(&s, Some(BeamClass::Power), None);
        assert_eq!(p, vec![s[0], s[2], s[3]]);
        assert_eq!(filter_samples(&s, None, None), s);
        let pn = filter_samples(&s, Some(BeamClass::Power), Some(TrackAzimuthClass::Nwd));
        assert_eq!(pn, vec![s[0], s[3]]);
    }

    #[test]
    fn subsample_keeps_order_and_size() {
        let s: Vec<Sample> = (0..100)
            .map(|i| Sample::at(i as f64, 0.0, i as f64))
            .collect();
        let sub = subsample(&s, 10, 3);
        assert_eq!(sub.len(), 10);
        assert!(sub.windows(2).all(|w| w[0].value < w[1].value));
        assert_eq!(sub, subsample(&s, 10, 3));
        assert_eq!(subsample(&s, 200, 3), s);
    }

    #[test]
    fn periodicity_flat_and_doubled() {
        let flat = periodicity_score(&synthetic_sv(|_| 4.0), 600.0).unwrap();
        assert_eq!(flat.score, 1.0);
        assert!(flat.peak_lags.is_empty());

        let peaks = synthetic_sv(|lo| {
            if (lo as u64).is_multiple_of(600) {
                6.0
            } else {
                3.0
            }
        });
        let p = periodicity_score(&peaks, 600.0).unwrap();
        assert_eq!(p.score, 2.0);
        assert_eq!(p.peak_lags, vec![600.0, 1200.0, 1800.0, 2400.0]);
    }

    #[test]
    fn periodicity_reports_missing_bins() {
        let mut sv = synthetic_sv(|_| 1.0);
        sv.bins[12].pair_count = 0;
        sv.bins[12].semivariance = None;
        let err = periodicity_score(&sv, 600.0).unwrap_err();
        assert!(err.to_string().contains("1200"), "{err}");
        assert!(periodicity_score(&sv, 50.0).is_err());
        assert!(periodicity_score(&synthetic_sv(|_| 1.0), 2000.0).is_err());
    }
}
