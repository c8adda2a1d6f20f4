use proptest::prelude::*;
use rkgeo::io::{
    parse_radii, read_ascii_grid, read_bins, read_fit, read_model, read_points, round6,
    write_ascii_grid, write_bins, write_fit, write_model, write_points,
};
use rkgeo::{
    BeamClass, EmpiricalSemivariogram, Error, FitResult, GridGeometry, ModelKind, Point2D, Raster,
    Sample, TrackAzimuthClass, TrackId, VariogramModel,
};

fn dec6() -> impl Strategy<Value = f64> {
    (-1_000_000_000_000i64..1_000_000_000_000).prop_map(|m| round6(m as f64 / 1e6))
}

fn arb_sample() -> impl Strategy<Value = Sample> {
    (
        dec6(),
        dec6(),
        dec6(),
        any::<bool>(),
        any::<bool>(),
        0u64..10_000,
    )
        .prop_map(|(x, y, v, p, n, t)| Sample {
            position: Point2D::new(x, y),
            value: v,
            beam: if p {
                BeamClass::Power
            } else {
                BeamClass::Coverage
            },
            azimuth_class: if n {
                TrackAzimuthClass::Nwd
            } else {
                TrackAzimuthClass::Swd
            },
            track_id: TrackId(t),
        })
}

fn arb_raster() -> impl Strategy<Value = Raster> {
    (1usize..12, 1usize..12, dec6(), dec6(), 1u32..500_000).prop_flat_map(
        |(rows, cols, x0, y0, cs)| {
            let g = GridGeometry::new(Point2D::new(x0, y0), cs as f64 / 100.0, rows, cols).unwrap();
            prop::collection::vec(prop_oneof![dec6(), Just(-9999.0)], rows * cols)
                .prop_map(move |values| Raster::new(g, values, -9999.0).unwrap())
        },
    )
}

fn arb_bins() -> impl Strategy<Value = EmpiricalSemivariogram> {
    (1u32..40, 3usize..30).prop_flat_map(|(w, n)| {
        let width = w as f64 * 25.0;
        let max_lag = width * n as f64;
        prop::collection::vec(prop::option::of((dec6(), 1u64..100_000)), n).prop_map(move |cells| {
            let mut bins = EmpiricalSemivariogram::empty_bins(width, max_lag).unwrap();
            for (b, c) in bins.iter_mut().zip(&cells) {
                if let Some((g, count)) = c {
                    b.semivariance = Some(g.abs());
                    b.pair_count = *count;
                }
            }
            EmpiricalSemivariogram {
                bins,
                bin_width: width,
                max_lag,
                direction: None,
                coincident_pairs: 0,
            }
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn points_round_trip(samples in prop::collection::vec(arb_sample(), 0..40)) {
        let text = write_points(&samples);
        prop_assert_eq!(read_points(&text).unwrap(), samples.clone());
        prop_assert_eq!(write_points(&read_points(&text).unwrap()), text);
    }

    #[test]
    fn grids_round_trip(r in arb_raster()) {
        let text = write_ascii_grid(&r);
        let back = read_ascii_grid(&text).unwrap();
        prop_assert_eq!(&back, &r);
        prop_assert_eq!(write_ascii_grid(&back), text);
    }

    #[test]
    fn bins_round_trip(sv in arb_bins()) {
        let text = write_bins(&sv);
        let back = read_bins(&text).unwrap();
        prop_assert_eq!(back.bin_width, sv.bin_width);
        prop_assert_eq!(back.max_lag, sv.max_lag);
        prop_assert_eq!(&back.bins, &sv.bins);
        prop_assert_eq!(write_bins(&back), text);
    }

    #[test]
    fn models_round_trip(k in 0usize..5, n in 0.0..50.0f64, ps in 0.0..50.0f64, r in 1e-3..1e6f64, r2 in -1.0..1.0f64) {
        let model = VariogramModel::new(ModelKind::ALL[k], n, n + ps, r).unwrap();
        prop_assert_eq!(read_model(&write_model(&model)).unwrap(), model);
        let f = FitResult { model, r_squared: r2, residual_sum_squares: ps * 3.0, bins_used: k + 3, degenerate: k == 2 };
        prop_assert_eq!(read_fit(&write_fit(&f)).unwrap(), f);
    }
}

#[test]
fn directional_bins_keep_their_direction() {
    let s = [
        Sample::at(0.0, 0.0, 1.0),
        Sample::at(0.0, 150.0, 2.0),
        Sample::at(0.0, 320.0, 4.0),
    ];
    let sv = rkgeo::empirical_directional(&s, 100.0, 500.0, 0.0, 5.0).unwrap();
    let back = read_bins(&write_bins(&sv)).unwrap();
    assert_eq!(back.direction, sv.direction);
    assert_eq!(back.bins, sv.bins);
}

#[test]
fn bins_without_metadata_infer_the_layout() {
    let text = "lag_center,semivariance,pair_count\n50,1.0,3\n250,2.5,4\n350,3.0,1\n";
    let sv = read_bins(text).unwrap();
    assert_eq!(sv.bin_width, 100.0);
    assert_eq!(sv.max_lag, 400.0);
    assert_eq!(sv.populated_count(), 3);
    assert_eq!(sv.bins[1].pair_count, 0);
}

#[test]
fn parse_errors_name_the_line() {
    let bad = "x,y,value,beam,azimuth_class,track_id\n1,2,3,power,nwd,0\n1,2,oops,power,nwd,0\n";
    match read_points(bad) {
        Err(Error::Parse { line, message }) => {
            assert_eq!(line, 3);
            assert!(message.contains("oops"), "{message}");
        }
        other => panic!("expected a parse error, got {other:?}"),
    }
    assert!(read_ascii_grid("ncols 2\nnrows 1\n").is_err());
    assert!(
        read_model("kind = exponential\nnugget = 1\nsill = 2\nrange = 3\ncolour = red\n").is_err()
    );
}

#[test]
fn radii_accept_infinity() {
    assert_eq!(
        parse_radii("0, 250,inf").unwrap(),
        vec![0.0, 250.0, f64::INFINITY]
    );
    assert!(parse_radii("1,x").is_err());
}
