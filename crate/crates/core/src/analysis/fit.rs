//! Least-squares polynomial fits.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyFit {
    /// Highest degree first.
    pub coefficients: Vec<f64>,
    /// Sum of squared residuals.
    pub residual: f64,
}

impl PolyFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.coefficients.iter().fold(0.0, |acc, c| acc * x + c)
    }
}

pub fn fit_polynomial(points: &[(f64, f64)], degree: usize) -> Result<PolyFit> {
    let n_coef = degree + 1;
    if points.len() < n_coef {
        return Err(Error::Fit(format!("{} points cannot determine a degree-{degree} polynomial", points.len())));
    }
    let a = DMatrix::from_fn(points.len(), n_coef, |r, c| points[r].0.powi((degree - c) as i32));
    let y = DVector::from_iterator(points.len(), points.iter().map(|p| p.1));
    let svd = a.clone().svd(true, true);
    let max = svd.singular_values.max();
    let eps = 1e-12 * max.max(f64::MIN_POSITIVE) * points.len() as f64;
    if svd.rank(eps) < n_coef {
        return Err(Error::Fit(format!("design matrix for degree {degree} is rank deficient")));
    }
    let coef = svd.solve(&y, eps).map_err(|e| Error::Fit(e.to_string()))?;
    let residual = (&a * &coef - &y).norm_squared();
    Ok(PolyFit { coefficients: coef.iter().copied().collect(), residual })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_parabola() {
        let pts: Vec<(f64, f64)> = (-3..=3).map(|x| (x as f64, (x * x) as f64)).collect();
        let f = fit_polynomial(&pts, 2).unwrap();
        for (c, e) in f.coefficients.iter().zip([1.0, 0.0, 0.0]) {
            assert!((c - e).abs() < 1e-12, "{:?}", f.coefficients);
        }
        assert!(f.residual < 1e-20);
    }

    #[test]
    fn constant_fit_is_mean() {
        let pts = [(0.0, 1.0), (1.0, 2.0), (2.0, 6.0)];
        let f = fit_polynomial(&pts, 0).unwrap();
        assert!((f.coefficients[0] - 3.0).abs() < 1e-12);
        assert!((f.residual - 14.0).abs() < 1e-12);
    }

    #[test]
    fn cubic_recovers_coefficients() {
        let c = [0.1143, -0.7563, 1.7492, -0.0658];
        let truth = PolyFit { coefficients: c.to_vec(), residual: 0.0 };
        let pts: Vec<(f64, f64)> = (0..12).map(|i| {
            let x = 0.4 + 0.1 * i as f64;
            (x, truth.eval(x))
        }).collect();
        let f = fit_polynomial(&pts, 3).unwrap();
        for (a, b) in f.coefficients.iter().zip(c) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn degenerate_designs_fail() {
        assert!(matches!(fit_polynomial(&[(1.0, 1.0), (2.0, 2.0)], 2), Err(Error::Fit(_))));
        let same_x = [(1.0, 1.0), (1.0, 2.0), (1.0, 3.0)];
        assert!(matches!(fit_polynomial(&same_x, 1), Err(Error::Fit(_))));
    }
}
