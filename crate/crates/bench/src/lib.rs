//! Benchmark fixtures shared by the criterion benches.

use rkgeo::{ModelKind, Sample, VariogramModel};

/// `n` samples spread over `[0, size)^2` on an additive recurrence, with a
/// smooth value field. Deterministic and cheap.
pub fn samples(n: usize, size: f64) -> Vec<Sample> {
    const A: f64 = 0.754_877_666_246_692_8;
    const B: f64 = 0.569_840_290_998_053_3;
    (0..n)
        .map(|i| {
            let (x, y) = (
                (0.5 + A * i as f64).fract() * size,
                (0.5 + B * i as f64).fract() * size,
            );
            Sample::at(
                x,
                y,
                30.0 + 5.0 * (x / 1300.0).sin() * (y / 1700.0).cos() + (i % 7) as f64 * 0.3,
            )
        })
        .collect()
}

pub fn model() -> VariogramModel {
    VariogramModel::new(ModelKind::Exponential, 2.0, 20.0, 2500.0).unwrap()
}
