//! Small numeric helpers: compensated accumulation and symmetry utilities.

use nalgebra::{DMatrix, DVector};

/// Neumaier-compensated accumulator.
///
/// Keeps the running error term separate so that the final sum is insensitive
/// to the order of the inputs to roughly machine precision, which the loss
/// accumulation relies on (sample order must not change the loss beyond 1e-12
/// relative).
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Compensated sum of a slice.
pub fn compensated_sum(values: &[f64]) -> f64 {
    let mut acc = CompensatedSum::new();
    for &v in values {
        acc.add(v);
    }
    acc.value()
}

/// Replaces `m` with its symmetric part (m + m^T) / 2 in place.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    debug_assert_eq!(n, m.ncols());
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Maximum absolute difference between two matrices of equal shape.
pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    debug_assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Relative error of `actual` against `expected`, guarded by `floor` so that
/// values near zero are compared absolutely.
pub fn relative_error(actual: f64, expected: f64, floor: f64) -> f64 {
    (actual - expected).abs() / expected.abs().max(floor)
}

/// Relative vector error || actual - expected || / max(|| expected ||, floor).
pub fn relative_vec_error(actual: &DVector<f64>, expected: &DVector<f64>, floor: f64) -> f64 {
    (actual - expected).norm() / expected.norm().max(floor)
}
