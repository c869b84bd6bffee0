//! Special functions and distribution tails, backed by `statrs`.

use statrs::function::{beta, erf, gamma};

use crate::error::{Error, Result};

fn domain(msg: String) -> Error {
    Error::Domain(msg)
}

/// `ln Γ(x)` for `x > 0` (Lanczos approximation).
pub fn ln_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(domain(format!("ln_gamma requires finite x > 0, got {x}")));
    }
    Ok(gamma::ln_gamma(x))
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn reg_incomplete_beta(a: f64, b: f64, x: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) || !(0.0..=1.0).contains(&x) {
        return Err(domain(format!(
            "reg_incomplete_beta requires a, b > 0 and x in [0, 1], got ({a}, {b}, {x})"
        )));
    }
    beta::checked_beta_reg(a, b, x).map_err(|e| domain(e.to_string()))
}

/// Regularized lower incomplete gamma `P(s, x)`.
pub fn reg_incomplete_gamma(s: f64, x: f64) -> Result<f64> {
    if !(s > 0.0 && s.is_finite()) || !(x >= 0.0) {
        return Err(domain(format!("reg_incomplete_gamma requires s > 0 and x >= 0, got ({s}, {x})")));
    }
    if x.is_infinite() {
        return Ok(1.0);
    }
    gamma::checked_gamma_lr(s, x).map_err(|e| domain(e.to_string()))
}

/// Student t CDF.
pub fn student_t_cdf(t: f64, df: f64) -> Result<f64> {
    if !(df > 0.0) || t.is_nan() {
        return Err(domain(format!("student t needs df > 0 and a number, got t={t}, df={df}")));
    }
    if t.is_infinite() {
        return Ok(if t > 0.0 { 1.0 } else { 0.0 });
    }
    let tail = 0.5 * reg_incomplete_beta(df / 2.0, 0.5, df / (df + t * t))?;
    Ok(if t >= 0.0 { 1.0 - tail } else { tail })
}

/// Two-sided Student t p-value.
pub fn student_t_two_sided(t: f64, df: f64) -> Result<f64> {
    if t.is_infinite() {
        return Ok(0.0);
    }
    if !(df > 0.0) || t.is_nan() {
        return Err(domain(format!("student t needs df > 0 and a number, got t={t}, df={df}")));
    }
    Ok(reg_incomplete_beta(df / 2.0, 0.5, df / (df + t * t))?.clamp(0.0, 1.0))
}

/// Upper tail of chi-square with `k` degrees of freedom.
pub fn chi_square_sf(x: f64, k: f64) -> Result<f64> {
    if x <= 0.0 {
        return Ok(1.0);
    }
    Ok((1.0 - reg_incomplete_gamma(k / 2.0, x / 2.0)?).clamp(0.0, 1.0))
}

/// Upper tail of the F distribution.
pub fn f_sf(f: f64, d1: f64, d2: f64) -> Result<f64> {
    if !(d1 > 0.0 && d2 > 0.0) {
        return Err(domain(format!("F distribution needs positive df, got ({d1}, {d2})")));
    }
    if f <= 0.0 {
        return Ok(1.0);
    }
    Ok(reg_incomplete_beta(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f))?.clamp(0.0, 1.0))
}

/// Two-sided standard-normal p-value.
pub fn normal_two_sided(z: f64) -> f64 {
    erf::erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
}
