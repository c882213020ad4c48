//! Normal-approximation safety margins for a portfolio of identical,
//! independent policies.

use nalgebra::DMatrix;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Margins {
    /// Standard normal quantile at the requested confidence.
    pub z: f64,
    /// Margin per contract, `z sqrt(Sigma_ll / N)`.
    pub per_contract: Vec<f64>,
    /// Margin for the sum of all contracts, `z sqrt(1' Sigma 1 / N)`.
    pub aggregate: f64,
}

/// Margins of the average present value over `policies` policies, given the
/// per-policy covariance matrix `cov`.
pub fn clt_margins(cov: &DMatrix<f64>, policies: u64, confidence: f64) -> Result<Margins> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::invalid(format!(
            "confidence must lie in (0, 1), got {confidence}"
        )));
    }
    if policies == 0 {
        return Err(Error::invalid("number of policies must be positive"));
    }
    if !cov.is_square() {
        return Err(Error::invalid("covariance matrix must be square"));
    }
    let z = Normal::standard().inverse_cdf(confidence);
    let n = policies as f64;
    let per_contract = cov
        .diagonal()
        .iter()
        .map(|&v| z * (v.max(0.0) / n).sqrt())
        .collect();
    let aggregate = z * (cov.sum().max(0.0) / n).sqrt();
    Ok(Margins {
        z,
        per_contract,
        aggregate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_quantile() {
        let cov = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 9.0]);
        let m = clt_margins(&cov, 100, 0.975).unwrap();
        assert!((m.z - 1.959_963_984_540_054).abs() < 1e-9);
        assert!((m.per_contract[0] - m.z * 0.2).abs() < 1e-12);
        assert!((m.aggregate - m.z * (15.0f64 / 100.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn bad_confidence() {
        let cov = DMatrix::identity(1, 1);
        assert!(clt_margins(&cov, 10, 1.0).is_err());
        assert!(clt_margins(&cov, 10, 0.0).is_err());
        assert!(clt_margins(&cov, 10, f64::NAN).is_err());
    }
}
