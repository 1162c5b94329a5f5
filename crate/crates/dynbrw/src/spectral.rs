//! Spectral radius estimation and the recurrence/transience classification.
//!
//! The spectral radius is rho = limsup p^(n)(e,e)^(1/n). The even-step roots
//! (p^(2n)(e,e))^(1/2n) form a nondecreasing lower-bound sequence by
//! supermultiplicativity, but converge slowly because of the polynomial
//! correction p^(2n) ~ rho^(2n) n^(-lambda). The point estimate therefore
//! comes from a three-parameter least-squares fit of
//! log p^(2n) = (2n) log rho + b log n + c over the upper half of the
//! computed range, which removes the polynomial bias.

use serde::Serialize;

use crate::group::{return_probabilities, GroupFamily, StepLaw};
use crate::{Error, Result};

/// Spectral radius estimate with its monotone lower-bound sequence and fit
/// diagnostics.
#[derive(Clone, Debug, Serialize)]
pub struct RhoEstimate {
    pub estimate: f64,
    /// (p^(2n)(e,e))^(1/2n) for n = 1.. (zero-probability steps skipped).
    pub lower_bounds: Vec<f64>,
    pub fit: FitDiagnostics,
}

#[derive(Clone, Debug, Serialize)]
pub struct FitDiagnostics {
    /// Coefficient of n in the log-return fit; rho = exp(slope).
    pub slope: f64,
    /// Estimated exponent lambda of the n^(-lambda) correction.
    pub poly_exponent: f64,
    pub intercept: f64,
    /// Root-mean-square fit residual.
    pub residual: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Regime {
    Transient,
    Recurrent,
}

/// Outcome of the Theorem-style dichotomy: transient iff m <= 1/rho, the
/// boundary belonging to transience.
#[derive(Clone, Debug, Serialize)]
pub struct RegimeClassification {
    pub regime: Regime,
    pub m: f64,
    pub rho: f64,
    /// m - 1/rho; negative or zero means transient.
    pub margin: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SeriesTag {
    Converges,
    Diverges,
    Inconclusive,
}

/// Numerical probe of the series sum_n n p^(n)(e,e) m^n.
#[derive(Clone, Debug, Serialize)]
pub struct SeriesVerdict {
    pub verdict: SeriesTag,
    pub partial_sum: f64,
    pub n_max: usize,
    /// Ratio a_{n+2}/a_n statistics over the last quartile of even terms.
    pub tail_ratio_min: f64,
    pub tail_ratio_max: f64,
}

/// Solves the 3x3 normal equations of the least-squares fit
/// y ~ a*x1 + b*x2 + c.
fn fit3(rows: &[(f64, f64, f64)], ys: &[f64]) -> Option<[f64; 3]> {
    let mut ata = [[0.0f64; 3]; 3];
    let mut aty = [0.0f64; 3];
    for ((x1, x2, x3), &y) in rows.iter().zip(ys) {
        let x = [*x1, *x2, *x3];
        for i in 0..3 {
            for j in 0..3 {
                ata[i][j] += x[i] * x[j];
            }
            aty[i] += x[i] * y;
        }
    }
    // Gaussian elimination with partial pivoting
    let mut a = ata;
    let mut b = aty;
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for j in col..3 {
                a[row][j] -= f * a[col][j];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0f64; 3];
    for row in (0..3).rev() {
        let mut acc = b[row];
        for j in row + 1..3 {
            acc -= a[row][j] * x[j];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

/// Estimates rho(P) from exact even-step return probabilities up to n_max.
pub fn estimate_rho(family: &GroupFamily, law: &StepLaw, n_max: usize) -> Result<RhoEstimate> {
    estimate_rho_capped(family, law, n_max, crate::group::DEFAULT_DEPTH_CAP)
}

pub fn estimate_rho_capped(
    family: &GroupFamily,
    law: &StepLaw,
    n_max: usize,
    cap: usize,
) -> Result<RhoEstimate> {
    if n_max < 10 {
        return Err(Error::InvalidParameter("n_max must be >= 10".into()));
    }
    let p = return_probabilities(family, law, n_max, cap)?;
    let mut points: Vec<(usize, f64)> = Vec::new(); // (n, p^(2n))
    for n in 1..=n_max / 2 {
        if p[2 * n] > 0.0 {
            points.push((n, p[2 * n]));
        }
    }
    if points.len() < 3 {
        return Err(Error::DegenerateLaw(format!(
            "only {} nonzero even-step return probabilities up to {n_max}",
            points.len()
        )));
    }
    let lower_bounds: Vec<f64> = points
        .iter()
        .map(|&(n, p2n)| p2n.powf(1.0 / (2.0 * n as f64)))
        .collect();

    // fit over the upper half of the step range to suppress small-n bias
    let cutoff = n_max / 4;
    let fit_points: Vec<&(usize, f64)> =
        points.iter().filter(|&&(n, _)| n >= cutoff.max(1)).collect();
    let fit_points = if fit_points.len() >= 3 {
        fit_points
    } else {
        points.iter().collect()
    };
    let rows: Vec<(f64, f64, f64)> = fit_points
        .iter()
        .map(|&&(n, _)| (2.0 * n as f64, (n as f64).ln(), 1.0))
        .collect();
    let ys: Vec<f64> = fit_points.iter().map(|&&(_, p2n)| p2n.ln()).collect();
    let [slope, log_coef, intercept] = fit3(&rows, &ys).ok_or_else(|| {
        Error::DegenerateLaw("return-probability fit is singular".into())
    })?;
    let residual = {
        let mut ss = 0.0;
        for ((x1, x2, x3), &y) in rows.iter().zip(&ys) {
            let pred = slope * x1 + log_coef * x2 + intercept * x3;
            ss += (y - pred).powi(2);
        }
        (ss / rows.len() as f64).sqrt()
    };
    Ok(RhoEstimate {
        estimate: slope.exp(),
        lower_bounds,
        fit: FitDiagnostics {
            slope,
            poly_exponent: -log_coef,
            intercept,
            residual,
        },
    })
}

/// Classifies the BRW regime: transient iff m <= 1/rho (equivalently
/// m*rho <= 1), recurrent otherwise.
pub fn classify(m: f64, rho: f64) -> Result<RegimeClassification> {
    if !(m > 1.0) {
        return Err(Error::InvalidParameter(format!(
            "mean offspring m={m} must exceed 1"
        )));
    }
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "spectral radius rho={rho} must lie in (0, 1]"
        )));
    }
    let regime = if m * rho <= 1.0 {
        Regime::Transient
    } else {
        Regime::Recurrent
    };
    Ok(RegimeClassification {
        regime,
        m,
        rho,
        margin: m - 1.0 / rho,
    })
}

/// Probes convergence of sum_n n p^(n)(e,e) m^n numerically: the even-term
/// ratios a_{n+2}/a_n over the last quartile must stay below 1-delta to call
/// convergence or above 1+delta to call divergence; anything else is
/// inconclusive.
pub fn series_condition(
    family: &GroupFamily,
    law: &StepLaw,
    m: f64,
    n_max: usize,
    delta: f64,
) -> Result<SeriesVerdict> {
    if !(m > 1.0) {
        return Err(Error::InvalidParameter(format!(
            "mean offspring m={m} must exceed 1"
        )));
    }
    if !(delta > 0.0 && delta < 0.5) {
        return Err(Error::InvalidParameter(format!(
            "delta={delta} must lie in (0, 0.5)"
        )));
    }
    let p = return_probabilities(family, law, n_max, crate::group::DEFAULT_DEPTH_CAP)?;
    let mut terms: Vec<(usize, f64)> = Vec::new();
    let mut partial_sum = 0.0;
    for (n, &pn) in p.iter().enumerate().take(n_max + 1).skip(1) {
        let a = n as f64 * pn * m.powi(n as i32);
        partial_sum += a;
        if n % 2 == 0 && a > 0.0 {
            terms.push((n, a));
        }
    }
    if terms.len() < 4 {
        return Ok(SeriesVerdict {
            verdict: SeriesTag::Inconclusive,
            partial_sum,
            n_max,
            tail_ratio_min: f64::NAN,
            tail_ratio_max: f64::NAN,
        });
    }
    let ratios: Vec<f64> = terms.windows(2).map(|w| w[1].1 / w[0].1).collect();
    let tail = &ratios[ratios.len() - (ratios.len() / 4).max(1)..];
    let tail_ratio_min = tail.iter().copied().fold(f64::INFINITY, f64::min);
    let tail_ratio_max = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let verdict = if tail_ratio_max < 1.0 - delta {
        SeriesTag::Converges
    } else if tail_ratio_min > 1.0 + delta {
        SeriesTag::Diverges
    } else {
        SeriesTag::Inconclusive
    };
    Ok(SeriesVerdict {
        verdict,
        partial_sum,
        n_max,
        tail_ratio_min,
        tail_ratio_max,
    })
}
