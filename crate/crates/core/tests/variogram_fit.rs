mod common;

use common::{random_samples, rng};
use rand::Rng;
use rkgeo::variogram::{covariance_from_model, merge_semivariograms, model_eval};
use rkgeo::{
    empirical, fit, fit_combined, EmpiricalSemivariogram, Error, ModelKind, VariogramModel,
    Weighting,
};

fn table(model: &VariogramModel, noise: impl Fn(usize) -> f64) -> EmpiricalSemivariogram {
    let mut bins = EmpiricalSemivariogram::empty_bins(100.0, 10_000.0).unwrap();
    for (i, b) in bins.iter_mut().enumerate() {
        b.pair_count = 50 + (i as u64 % 7) * 10;
        b.semivariance = Some(model.gamma(b.lag_center) + noise(i));
    }
    EmpiricalSemivariogram {
        bins,
        bin_width: 100.0,
        max_lag: 10_000.0,
        direction: None,
        coincident_pairs: 0,
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn assert_recovers(got: &VariogramModel, want: &VariogramModel, tol: f64) {
    assert!(
        rel(got.nugget, want.nugget) <= tol,
        "nugget {} vs {}",
        got.nugget,
        want.nugget
    );
    assert!(
        rel(got.sill, want.sill) <= tol,
        "sill {} vs {}",
        got.sill,
        want.sill
    );
    assert!(
        rel(got.range, want.range) <= tol,
        "range {} vs {}",
        got.range,
        want.range
    );
}

#[test]
fn table_ii_parameters_refit_noiselessly() {
    for (n, s, r) in [(21.0, 23.0, 2466.0), (22.4, 25.7, 3096.2)] {
        let truth = VariogramModel::new(ModelKind::Exponential, n, s, r).unwrap();
        let f = fit(
            &table(&truth, |_| 0.0),
            ModelKind::Exponential,
            Weighting::Uniform,
        )
        .unwrap();
        assert_recovers(&f.model, &truth, 0.01);
        assert!(f.r_squared >= 0.999, "r2 {}", f.r_squared);
        assert!(!f.degenerate);
        assert_eq!(f.bins_used, 100);
    }
}

#[test]
fn noisy_table_ii_parameters_refit_within_five_percent() {
    for (seed, (n, s, r)) in [(21.0, 23.0, 2466.0), (22.4, 25.7, 3096.2)]
        .into_iter()
        .enumerate()
    {
        let truth = VariogramModel::new(ModelKind::Exponential, n, s, r).unwrap();
        let mut g = rng(100 + seed as u64);
        let noise: Vec<f64> = (0..100).map(|_| g.gen_range(-0.1..0.1)).collect();
        let sv = table(&truth, |i| noise[i]);
        for w in [Weighting::Uniform, Weighting::PairCount] {
            let f = fit(&sv, ModelKind::Exponential, w).unwrap();
            assert_recovers(&f.model, &truth, 0.05);
        }
    }
}

#[test]
fn every_kind_is_identifiable() {
    for kind in ModelKind::ALL {
        for (n, s, r) in [(0.0, 10.0, 3000.0), (2.0, 20.0, 2500.0), (5.0, 6.0, 6000.0)] {
            let truth = VariogramModel::new(kind, n, s, r).unwrap();
            let f = fit(&table(&truth, |_| 0.0), kind, Weighting::PairCount).unwrap();
            assert!(
                (f.model.nugget - n).abs() <= 0.01 * s,
                "{kind} nugget {} vs {n}",
                f.model.nugget
            );
            assert!(
                rel(f.model.sill, s) <= 0.01,
                "{kind} sill {} vs {s}",
                f.model.sill
            );
            assert!(
                rel(f.model.range, r) <= 0.01,
                "{kind} range {} vs {r}",
                f.model.range
            );
        }
    }
}

#[test]
fn flat_input_is_flagged_degenerate() {
    let mut sv = table(
        &VariogramModel::new(ModelKind::Linear, 1.0, 1.0, 5.0).unwrap(),
        |_| 0.0,
    );
    for b in &mut sv.bins {
        b.semivariance = Some(3.5);
    }
    let f = fit(&sv, ModelKind::Exponential, Weighting::PairCount).unwrap();
    assert!(f.degenerate);
    assert_eq!(
        (f.model.nugget, f.model.sill, f.model.range),
        (3.5, 3.5, 10_000.0)
    );
}

#[test]
fn too_few_bins_is_insufficient_data() {
    let samples = [
        rkgeo::Sample::at(0.0, 0.0, 1.0),
        rkgeo::Sample::at(150.0, 0.0, 2.0),
    ];
    let sv = empirical(&samples, 100.0, 400.0).unwrap();
    assert!(matches!(
        fit(&sv, ModelKind::Exponential, Weighting::Uniform),
        Err(Error::InsufficientData(_))
    ));
}

#[test]
fn fit_is_scale_equivariant() {
    let truth = VariogramModel::new(ModelKind::Exponential, 3.0, 17.0, 2100.0).unwrap();
    let mut g = rng(9);
    let noise: Vec<f64> = (0..100).map(|_| g.gen_range(-0.5..0.5)).collect();
    let sv = table(&truth, |i| noise[i]);
    let base = fit(&sv, ModelKind::Exponential, Weighting::PairCount).unwrap();
    for a in [3.0f64, 0.1] {
        let mut scaled = sv.clone();
        for b in &mut scaled.bins {
            b.semivariance = b.semivariance.map(|v| v * a * a);
        }
        let f = fit(&scaled, ModelKind::Exponential, Weighting::PairCount).unwrap();
        assert!(rel(f.model.nugget, base.model.nugget * a * a) < 1e-6);
        assert!(rel(f.model.sill, base.model.sill * a * a) < 1e-6);
        assert!(rel(f.model.range, base.model.range) < 1e-6);
    }
}

#[test]
fn model_shape_properties() {
    for kind in ModelKind::ALL {
        let m = VariogramModel::new(kind, 1.5, 9.0, 1200.0).unwrap();
        let mut prev = 0.0;
        for i in 0..5000 {
            let h = i as f64 * 1.3;
            let g = model_eval(&m, h).unwrap();
            assert!(g >= prev, "{kind} decreases at {h}");
            assert!((0.0..=m.sill).contains(&g));
            assert_eq!(g + covariance_from_model(&m, h).unwrap(), m.sill);
            prev = g;
        }
        assert!(model_eval(&m, -1.0).is_err());
    }
}

#[test]
fn practical_range_convention() {
    let m = VariogramModel::new(ModelKind::Exponential, 1.0, 11.0, 2000.0).unwrap();
    let g = m.gamma(2000.0);
    assert!((g - (1.0 + 10.0 * (1.0 - (-3.0f64).exp()))).abs() < 1e-12);
    assert!(g > 1.0 + 0.95 * 10.0);
}

#[test]
fn combining_identical_semivariograms_changes_nothing() {
    let truth = VariogramModel::new(ModelKind::Exponential, 21.0, 23.0, 2466.0).unwrap();
    let sv = table(&truth, |i| (i as f64 * 0.37).sin() * 0.2);
    let single = fit(&sv, ModelKind::Exponential, Weighting::PairCount).unwrap();
    let combined = fit_combined(&sv, &sv, ModelKind::Exponential, Weighting::PairCount).unwrap();
    assert_recovers(&combined.model, &single.model, 1e-9);
}

#[test]
fn empty_bins_take_the_other_side() {
    let samples = random_samples(80, 3000.0, 2);
    let a = empirical(&samples[..40], 100.0, 3000.0).unwrap();
    let mut b = empirical(&samples[40..], 100.0, 3000.0).unwrap();
    b.bins[3].pair_count = 0;
    b.bins[3].semivariance = None;
    let merged = merge_semivariograms(&b, &a).unwrap();
    assert_eq!(merged.bins[3].semivariance, a.bins[3].semivariance);
    assert_eq!(merged.bins[3].pair_count, a.bins[3].pair_count);
}

#[test]
fn merged_halves_equal_pooled_intra_half_pairs() {
    let samples = random_samples(400, 6000.0, 12);
    let (left, right) = samples.split_at(230);
    let a = empirical(left, 100.0, 4000.0).unwrap();
    let b = empirical(right, 100.0, 4000.0).unwrap();
    let merged = merge_semivariograms(&a, &b).unwrap();

    let n_bins = 40;
    let mut sums = vec![0.0; n_bins];
    let mut counts = vec![0u64; n_bins];
    for half in [left, right] {
        for i in 0..half.len() {
            for j in i + 1..half.len() {
                let d = half[i].position.distance(&half[j].position);
                if d > 0.0 && d < 4000.0 {
                    let k = (d / 100.0) as usize;
                    sums[k] += 0.5 * (half[i].value - half[j].value).powi(2);
                    counts[k] += 1;
                }
            }
        }
    }
    for (k, bin) in merged.bins.iter().enumerate() {
        assert_eq!(bin.pair_count, counts[k]);
        if counts[k] > 0 {
            let want = sums[k] / counts[k] as f64;
            assert!(rel(bin.semivariance.unwrap(), want) < 1e-12);
        }
    }
    let f = fit_combined(&a, &b, ModelKind::Exponential, Weighting::PairCount).unwrap();
    let g = fit(&merged, ModelKind::Exponential, Weighting::PairCount).unwrap();
    assert_eq!(f, g);
}

#[test]
fn mismatched_bin_grids_are_rejected() {
    let samples = random_samples(50, 2000.0, 3);
    let a = empirical(&samples, 100.0, 2000.0).unwrap();
    let b = empirical(&samples, 50.0, 2000.0).unwrap();
    let c = empirical(&samples, 100.0, 1500.0).unwrap();
    assert!(matches!(
        fit_combined(&a, &b, ModelKind::Exponential, Weighting::Uniform),
        Err(Error::InvalidArgument(_))
    ));
    assert!(fit_combined(&a, &c, ModelKind::Exponential, Weighting::Uniform).is_err());
}
