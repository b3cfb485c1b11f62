//! Standard normal distribution helpers.

use statrs::distribution::{ContinuousCDF, Normal};

fn standard() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal is valid")
}

pub fn cdf(x: f64) -> f64 {
    standard().cdf(x)
}

pub fn quantile(p: f64) -> f64 {
    standard().inverse_cdf(p)
}

/// Two-sided critical value for a confidence level in `(0, 1)`.
pub fn critical_value(level: f64) -> f64 {
    quantile(1.0 - (1.0 - level) / 2.0)
}
