//! Summary statistics used by the diagnostics.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec::Vec;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub p90: f64,
    pub max: f64,
    pub rms: f64,
}

impl Summary {
    /// Summary of `|v|` over the finite samples.
    pub fn of_abs(values: &[f64]) -> Summary {
        let mut abs: Vec<f64> = values
            .iter()
            .filter(|v| v.is_finite())
            .map(|v| v.abs())
            .collect();
        if abs.is_empty() {
            return Summary::default();
        }
        abs.sort_by(f64::total_cmp);
        let n = abs.len();
        let sum: f64 = abs.iter().sum();
        let sq: f64 = abs.iter().map(|v| v * v).sum();
        Summary {
            count: n,
            mean: sum / n as f64,
            median: quantile_sorted(&abs, 0.5),
            p90: quantile_sorted(&abs, 0.9),
            max: abs[n - 1],
            rms: (sq / n as f64).sqrt(),
        }
    }
}

/// Linear-interpolated quantile of already sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            let frac = pos - lo as f64;
            sorted[lo] * (1.0 - frac) + sorted[hi] * frac
        }
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, 0.5)
}
