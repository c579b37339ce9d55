use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("LengthMismatch: {0} observations vs {1} predictions")]
    LengthMismatch(usize, usize),
    #[error("Empty: no samples")]
    Empty,
    #[error("ZeroEol: end-of-life cycle must be positive")]
    ZeroEol,
}

/// Root-mean-square error.
pub fn rmse(y: &[f64], y_hat: &[f64]) -> Result<f64, MetricError> {
    if y.len() != y_hat.len() {
        return Err(MetricError::LengthMismatch(y.len(), y_hat.len()));
    }
    if y.is_empty() {
        return Err(MetricError::Empty);
    }
    let sse: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b).powi(2)).sum();
    Ok((sse / y.len() as f64).sqrt())
}

/// Mean absolute error as a percentage of each sample's end-of-life cycle.
pub fn mape(y: &[f64], y_hat: &[f64], eol: &[f64]) -> Result<f64, MetricError> {
    if y.len() != y_hat.len() {
        return Err(MetricError::LengthMismatch(y.len(), y_hat.len()));
    }
    if eol.len() != y.len() {
        return Err(MetricError::LengthMismatch(y.len(), eol.len()));
    }
    if y.is_empty() {
        return Err(MetricError::Empty);
    }
    if eol.iter().any(|e| !(*e > 0.0)) {
        return Err(MetricError::ZeroEol);
    }
    let total: f64 = y
        .iter()
        .zip(y_hat)
        .zip(eol)
        .map(|((a, b), e)| 100.0 * (a - b).abs() / e)
        .sum();
    Ok(total / y.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 12.5f64.sqrt());
        assert_eq!(rmse(&[10.0], &[13.0]).unwrap(), 3.0);
        assert_eq!(rmse(&[], &[]), Err(MetricError::Empty));
        assert_eq!(rmse(&[1.0], &[]), Err(MetricError::LengthMismatch(1, 0)));
    }

    #[test]
    fn mape_examples() {
        assert_eq!(
            mape(&[0.0, 0.0], &[10.0, 20.0], &[100.0, 100.0]).unwrap(),
            15.0
        );
        assert_eq!(mape(&[5.0], &[55.0], &[500.0]).unwrap(), 10.0);
        assert_eq!(mape(&[5.0], &[5.0], &[500.0]).unwrap(), 0.0);
        assert_eq!(mape(&[5.0], &[5.0], &[0.0]), Err(MetricError::ZeroEol));
    }
}
