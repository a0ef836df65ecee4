//! Ordinary least squares with classical t-test p-values, solved by
//! Householder QR. Small fixed designs only (a handful of regressors).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fitted OLS model summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub coefficients: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub t_values: Vec<f64>,
    pub p_values: Vec<f64>,
    pub r_squared: f64,
    pub n_samples: usize,
}

/// Fit `response = design * beta` by least squares.
///
/// The design matrix rows must all have the same arity (include the
/// intercept column explicitly) and full column rank; p-values are
/// two-sided, from the t distribution with n - p degrees of freedom.
pub fn ols_regression(design: &[Vec<f64>], response: &[f64]) -> Result<RegressionReport> {
    let n = design.len();
    if n != response.len() {
        return Err(Error::InvalidArgument(format!(
            "{n} design rows vs {} responses",
            response.len()
        )));
    }
    let p = design.first().map_or(0, Vec::len);
    if p == 0 || design.iter().any(|row| row.len() != p) {
        return Err(Error::InvalidArgument("ragged design matrix".into()));
    }
    if n < p + 1 {
        return Err(Error::InvalidArgument(format!(
            "need at least {} rows for {p} regressors, got {n}",
            p + 1
        )));
    }

    // Householder QR in place: `a` becomes R in its upper triangle while
    // the reflections are applied to `y` as they are built.
    let mut a: Vec<Vec<f64>> = design.to_vec();
    let mut y = response.to_vec();
    for col in 0..p {
        let norm_x: f64 = (col..n).map(|i| a[i][col] * a[i][col]).sum::<f64>().sqrt();
        if norm_x == 0.0 {
            return Err(Error::RankDeficient(col));
        }
        let alpha = if a[col][col] > 0.0 { -norm_x } else { norm_x };
        let mut v: Vec<f64> = (col..n).map(|i| a[i][col]).collect();
        v[0] -= alpha;
        let v_norm_sq: f64 = v.iter().map(|x| x * x).sum();
        if v_norm_sq > 0.0 {
            for j in col..p {
                let dot: f64 = (col..n).map(|i| v[i - col] * a[i][j]).sum();
                let scale = 2.0 * dot / v_norm_sq;
                for i in col..n {
                    a[i][j] -= scale * v[i - col];
                }
            }
            let dot: f64 = (col..n).map(|i| v[i - col] * y[i]).sum();
            let scale = 2.0 * dot / v_norm_sq;
            for i in col..n {
                y[i] -= scale * v[i - col];
            }
        }
        a[col][col] = alpha;
    }

    let max_diag = (0..p).map(|j| a[j][j].abs()).fold(0.0, f64::max);
    for j in 0..p {
        if a[j][j].abs() <= max_diag * 1e-12 {
            return Err(Error::RankDeficient(j));
        }
    }

    // Back-substitution for beta.
    let mut beta = vec![0.0; p];
    for j in (0..p).rev() {
        let mut sum = y[j];
        for k in j + 1..p {
            sum -= a[j][k] * beta[k];
        }
        beta[j] = sum / a[j][j];
    }

    let residual_ss: f64 = design
        .iter()
        .zip(response)
        .map(|(row, &yi)| {
            let fit: f64 = row.iter().zip(&beta).map(|(x, b)| x * b).sum();
            (yi - fit) * (yi - fit)
        })
        .sum();
    let mean_y = response.iter().sum::<f64>() / n as f64;
    let total_ss: f64 = response.iter().map(|&yi| (yi - mean_y) * (yi - mean_y)).sum();
    let r_squared = if total_ss == 0.0 {
        1.0
    } else {
        1.0 - residual_ss / total_ss
    };

    // (X'X)^-1 = R^-1 R^-T; only the diagonal is needed. Invert the upper
    // triangular R column by column.
    let mut r_inv = vec![vec![0.0; p]; p];
    for j in 0..p {
        r_inv[j][j] = 1.0 / a[j][j];
        for i in (0..j).rev() {
            let mut sum = 0.0;
            for k in i + 1..=j {
                sum += a[i][k] * r_inv[k][j];
            }
            r_inv[i][j] = -sum / a[i][i];
        }
    }
    let dof = (n - p) as f64;
    let sigma_sq = residual_ss / dof;
    let mut standard_errors = Vec::with_capacity(p);
    let mut t_values = Vec::with_capacity(p);
    let mut p_values = Vec::with_capacity(p);
    for j in 0..p {
        let xtx_inv_jj: f64 = (j..p).map(|k| r_inv[j][k] * r_inv[j][k]).sum();
        let se = (sigma_sq * xtx_inv_jj).sqrt();
        let t = if se == 0.0 {
            f64::INFINITY * beta[j].signum()
        } else {
            beta[j] / se
        };
        standard_errors.push(se);
        t_values.push(t);
        p_values.push(2.0 * student_t_sf(t.abs(), dof));
    }

    Ok(RegressionReport {
        coefficients: beta,
        standard_errors,
        t_values,
        p_values,
        r_squared,
        n_samples: n,
    })
}

/// Survival function P(T > t) of Student's t with `dof` degrees of
/// freedom, via the regularized incomplete beta function:
/// `sf(t) = I_x(dof/2, 1/2) / 2` with `x = dof / (dof + t^2)` for t >= 0.
pub fn student_t_sf(t: f64, dof: f64) -> f64 {
    if !t.is_finite() {
        return if t > 0.0 { 0.0 } else { 1.0 };
    }
    let x = dof / (dof + t * t);
    let half = 0.5 * regularized_incomplete_beta(0.5 * dof, 0.5, x);
    if t >= 0.0 {
        half
    } else {
        1.0 - half
    }
}

/// Regularized incomplete beta I_x(a, b) by the Lentz continued fraction,
/// switched at the symmetry point for convergence.
fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front =
        ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - ln_front.exp() * beta_continued_fraction(b, a, 1.0 - x) / b
    }
}

fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-15;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=300 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Lanczos approximation (g = 7, 9 terms), accurate to ~1e-13 for
/// positive arguments.
fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection for the left half plane.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut sum = COEFFS[0];
    for (i, &c) in COEFFS.iter().enumerate().skip(1) {
        sum += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + sum.ln()
}
