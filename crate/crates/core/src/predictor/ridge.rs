//! Ridge regression with an unpenalised intercept.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeWeights {
    pub intercept: f64,
    pub coef: Vec<f64>,
}

impl RidgeWeights {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + self.coef.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }

    pub fn is_finite(&self) -> bool {
        self.intercept.is_finite() && self.coef.iter().all(|w| w.is_finite())
    }
}

/// Relative residual allowed on the solved normal equations.
const NORMAL_EQ_TOL: f64 = 1e-8;
const SINGULAR_PIVOT: f64 = 1e-12;

/// Minimise `‖Xw + b − y‖² + λ‖w‖²` by centring and a Cholesky solve.
pub fn fit_ridge(x: &[Vec<f64>], y: &[f64], lambda: f64) -> Result<RidgeWeights> {
    let n = x.len();
    if n == 0 || n != y.len() {
        return Err(Error::Input(format!(
            "ridge needs n >= 1 rows with matching targets (rows {n}, targets {})",
            y.len()
        )));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Input(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    let d = x[0].len();
    if x.iter().any(|r| r.len() != d) {
        return Err(Error::Input("ragged design matrix".into()));
    }
    if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Input("design matrix or targets contain non-finite values".into()));
    }

    let mean_x: Vec<f64> = (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let mean_y = y.iter().sum::<f64>() / n as f64;
    let xc = DMatrix::from_fn(n, d, |i, j| x[i][j] - mean_x[j]);
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - mean_y));

    let gram = xc.transpose() * &xc;
    let a = &gram + DMatrix::identity(d, d) * lambda;
    let rhs = xc.transpose() * &yc;
    let chol = a.clone().cholesky().ok_or_else(|| {
        Error::Numeric(format!(
            "normal equations are singular at lambda = {lambda}; collinear features need lambda > 0"
        ))
    })?;
    // A pivot that is negligible against the diagonal means rank deficiency.
    let l = chol.l_dirty();
    let max_diag = a.diagonal().max().max(f64::MIN_POSITIVE);
    let min_pivot = (0..d).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
    if d > 0 && min_pivot <= SINGULAR_PIVOT * max_diag {
        return Err(Error::Numeric(format!(
            "normal equations are singular at lambda = {lambda}; collinear features need lambda > 0"
        )));
    }
    let w = chol.solve(&rhs);

    let residual = (&a * &w - &rhs).norm();
    let scale = rhs.norm().max(a.norm() * w.norm()).max(f64::MIN_POSITIVE);
    if !(residual / scale <= NORMAL_EQ_TOL) {
        return Err(Error::Numeric(format!(
            "normal equations ill-conditioned at lambda = {lambda} (relative residual {:e}); try lambda > 0",
            residual / scale
        )));
    }

    let coef: Vec<f64> = w.iter().copied().collect();
    let intercept = mean_y - coef.iter().zip(&mean_x).map(|(c, m)| c * m).sum::<f64>();
    Ok(RidgeWeights { intercept, coef })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_interpolation() {
        let w = fit_ridge(&[vec![1.0], vec![2.0]], &[2.0, 4.0], 0.0).unwrap();
        assert!((w.coef[0] - 2.0).abs() < 1e-12);
        assert!(w.intercept.abs() < 1e-12);
    }

    #[test]
    fn huge_penalty_shrinks_to_mean() {
        let x: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64 - 2.5, (i * i) as f64 - 5.0]).collect();
        let y = [1.0, 3.0, 2.0, 5.0, 4.0, 6.0];
        let w = fit_ridge(&x, &y, 1e12).unwrap();
        assert!(w.coef.iter().all(|c| c.abs() < 1e-9));
        assert!((w.intercept - 3.5).abs() < 1e-6);
    }

    #[test]
    fn collinear_without_penalty_is_numeric_error() {
        let x: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let y = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert!(matches!(fit_ridge(&x, &y, 0.0), Err(Error::Numeric(_))));
        assert!(fit_ridge(&x, &y, 0.1).is_ok());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(fit_ridge(&[], &[], 1.0).is_err());
        assert!(fit_ridge(&[vec![f64::NAN]], &[1.0], 1.0).is_err());
        assert!(fit_ridge(&[vec![1.0]], &[1.0], -1.0).is_err());
    }

    /// Plain gradient descent on the same objective, independent of the
    /// closed-form solve.
    fn gradient_descent_oracle(x: &[Vec<f64>], y: &[f64], lambda: f64) -> (f64, Vec<f64>) {
        let d = x[0].len();
        let mut w = vec![0.0; d];
        let mut b = 0.0;
        // Step below 1/L for L = 2·(max row-norm² · n + λ).
        let lip = 2.0 * (x.iter().map(|r| r.iter().map(|v| v * v).sum::<f64>() + 1.0).sum::<f64>() + lambda);
        let step = 1.0 / lip;
        for _ in 0..200_000 {
            let mut gw = vec![0.0; d];
            let mut gb = 0.0;
            for (r, &t) in x.iter().zip(y) {
                let e = b + r.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>() - t;
                gb += 2.0 * e;
                for j in 0..d {
                    gw[j] += 2.0 * e * r[j];
                }
            }
            for j in 0..d {
                gw[j] += 2.0 * lambda * w[j];
                w[j] -= step * gw[j];
            }
            b -= step * gb;
        }
        (b, w)
    }

    #[test]
    fn matches_gradient_descent_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let x: Vec<Vec<f64>> = (0..50).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|r| 1.5 * r[0] - 2.0 * r[1] + 0.5 * r[2] + 0.7 + rng.random_range(-0.1..0.1))
            .collect();
        let fit = fit_ridge(&x, &y, 0.1).unwrap();
        let (b, w) = gradient_descent_oracle(&x, &y, 0.1);
        assert!((fit.intercept - b).abs() < 1e-6, "{} vs {b}", fit.intercept);
        for (a, o) in fit.coef.iter().zip(&w) {
            assert!((a - o).abs() < 1e-6, "{a} vs {o}");
        }
    }
}
