//! Error metrics and prediction clipping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bound a raw prediction to the grade range [0, 4].
pub fn clip_prediction(raw: f64) -> Result<f64> {
    if !raw.is_finite() {
        return Err(Error::NonFinite(format!("raw prediction {raw}")));
    }
    Ok(raw.clamp(0.0, 4.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub count: usize,
    pub rmse: f64,
    pub mae: f64,
    /// Population standard deviation of the absolute errors.
    pub mae_std: f64,
}

/// Metrics over (true, predicted) pairs.
pub fn compute_metrics(pairs: &[(f64, f64)]) -> Result<Metrics> {
    if pairs.is_empty() {
        return Err(Error::InvalidConfig("metrics need at least one prediction".into()));
    }
    let n = pairs.len() as f64;
    let (mut sq, mut abs) = (0.0, 0.0);
    for (t, p) in pairs {
        let e = p - t;
        sq += e * e;
        abs += e.abs();
    }
    let mae = abs / n;
    let var = pairs.iter().map(|(t, p)| ((p - t).abs() - mae).powi(2)).sum::<f64>() / n;
    Ok(Metrics {
        count: pairs.len(),
        rmse: (sq / n).sqrt(),
        mae,
        mae_std: var.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clipping() {
        assert_eq!(clip_prediction(4.7).unwrap(), 4.0);
        assert_eq!(clip_prediction(-0.3).unwrap(), 0.0);
        assert_eq!(clip_prediction(2.5).unwrap(), 2.5);
        assert!(clip_prediction(f64::NAN).is_err());
        assert!(clip_prediction(f64::INFINITY).is_err());
    }

    #[test]
    fn simple_metrics() {
        let m = compute_metrics(&[(3.0, 3.0), (2.0, 2.0)]).unwrap();
        assert_eq!((m.rmse, m.mae, m.mae_std), (0.0, 0.0, 0.0));
        let m = compute_metrics(&[(4.0, 2.0)]).unwrap();
        assert_eq!((m.rmse, m.mae, m.mae_std, m.count), (2.0, 2.0, 0.0, 1));
        let m = compute_metrics(&[(0.0, 1.0), (0.0, 3.0)]).unwrap();
        assert_eq!((m.rmse, m.mae, m.mae_std), (5f64.sqrt(), 2.0, 1.0));
        assert!(compute_metrics(&[]).is_err());
    }
}
