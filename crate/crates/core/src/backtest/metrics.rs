//! Performance metrics of a realized return series.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cumulative return, risk, Sharpe ratio and maximum drawdown.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Sum of the per-period returns.
    pub cr: f64,
    /// Sample standard deviation (divisor `n - 1`).
    pub risk: f64,
    /// `cr / (n * risk)`; signed infinity when `risk` is zero.
    #[serde(with = "extended_float")]
    pub sr: f64,
    /// Largest loss over any contiguous interval, floored at zero.
    pub mdd: f64,
}

/// Computes [`Metrics`] from a return series of length at least 2.
pub fn metrics(returns: &[f64]) -> Result<Metrics> {
    let n = returns.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("metrics need at least 2 returns, got {n}")));
    }
    if returns.iter().any(|r| !r.is_finite()) {
        return Err(Error::NonFinite("portfolio returns"));
    }
    let cr: f64 = returns.iter().sum();
    let mean = cr / n as f64;
    let ss: f64 = returns.iter().map(|r| (r - mean).powi(2)).sum();
    let risk = (ss / (n - 1) as f64).sqrt();
    let sr = if risk > 0.0 {
        cr / (n as f64 * risk)
    } else if cr > 0.0 {
        f64::INFINITY
    } else if cr < 0.0 {
        f64::NEG_INFINITY
    } else {
        f64::NAN
    };
    // Drawdown over partial sums S_0 = 0, S_1, ..., S_n: max_{i<j} S_i - S_j.
    let mut peak = 0.0_f64;
    let mut sum = 0.0_f64;
    let mut mdd = 0.0_f64;
    for r in returns {
        sum += r;
        mdd = mdd.max(peak - sum);
        peak = peak.max(sum);
    }
    Ok(Metrics { cr, risk, sr, mdd })
}

/// Serializes non-finite floats as the strings `"inf"`, `"-inf"` and
/// `"nan"`, which JSON numbers cannot represent.
pub mod extended_float {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(de::Error::custom(format!("unrecognized float {other:?}"))),
            },
        }
    }
}
