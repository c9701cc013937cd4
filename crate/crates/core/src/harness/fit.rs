use faer::linalg::solvers::SolveLstsq;
use faer::Mat;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitModel {
    /// `y = c0 + c1 x`
    Linear,
    /// `y = c0 + c1 x + c2 x²`
    Quadratic,
    /// `y = c0 x^c1`, fitted as a line in `ln x`, `ln y`.
    PowerLaw,
}

impl FitModel {
    pub fn n_coefficients(self) -> usize {
        match self {
            FitModel::Linear | FitModel::PowerLaw => 2,
            FitModel::Quadratic => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: FitModel,
    pub coefficients: Vec<f64>,
    /// Coefficient of determination in the space the fit is done in
    /// (log-log for power laws), clamped to `[0, 1]`.
    pub r_squared: f64,
    /// Observed minus fitted, in the fit space.
    pub residuals: Vec<f64>,
}

impl FitResult {
    pub fn eval(&self, x: f64) -> f64 {
        let c = &self.coefficients;
        match self.model {
            FitModel::Linear => c[0] + c[1] * x,
            FitModel::Quadratic => c[0] + c[1] * x + c[2] * x * x,
            FitModel::PowerLaw => c[0] * x.powf(c[1]),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("need at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("xs and ys differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("x values must be distinct")]
    DuplicateX,
    #[error("non-finite data")]
    NonFinite,
    #[error("power-law fit needs positive data")]
    NonPositive,
    #[error("singular design matrix")]
    Singular,
}

/// Ordinary least squares of `ys` against `xs` in the basis of `model`.
pub fn fit_scaling(xs: &[f64], ys: &[f64], model: FitModel) -> Result<FitResult, FitError> {
    if xs.len() != ys.len() {
        return Err(FitError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 3 {
        return Err(FitError::TooFewPoints(xs.len()));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(FitError::NonFinite);
    }
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(FitError::DuplicateX);
    }
    let (u, v): (Vec<f64>, Vec<f64>) = match model {
        FitModel::PowerLaw => {
            if xs.iter().chain(ys).any(|&x| x <= 0.0) {
                return Err(FitError::NonPositive);
            }
            (xs.iter().map(|x| x.ln()).collect(), ys.iter().map(|y| y.ln()).collect())
        }
        _ => (xs.to_vec(), ys.to_vec()),
    };
    let degree = if model == FitModel::Quadratic { 2 } else { 1 };
    // fit in a centred, scaled variable for conditioning
    let mid = 0.5 * (sorted[0] + sorted[sorted.len() - 1]);
    let (mid, half) = if model == FitModel::PowerLaw {
        let lo = u.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (0.5 * (lo + hi), 0.5 * (hi - lo))
    } else {
        (mid, 0.5 * (sorted[sorted.len() - 1] - sorted[0]))
    };
    let s: Vec<f64> = u.iter().map(|x| (x - mid) / half).collect();
    let n = s.len();
    let a = Mat::<f64>::from_fn(n, degree + 1, |i, j| s[i].powi(j as i32));
    let b = Mat::<f64>::from_fn(n, 1, |i, _| v[i]);
    let qr = a.qr();
    let diag_min = (0..=degree).map(|j| qr.R()[(j, j)].abs()).fold(f64::INFINITY, f64::min);
    if diag_min.is_nan() || diag_min <= 1e-12 * (n as f64).sqrt() {
        return Err(FitError::Singular);
    }
    let sol = qr.solve_lstsq(&b);
    let p: Vec<f64> = (0..=degree).map(|j| sol[(j, 0)]).collect();
    // undo the substitution s = (x - mid)/half
    let coeffs_in_u = match degree {
        1 => vec![p[0] - p[1] * mid / half, p[1] / half],
        _ => {
            let (a0, a1, a2) = (p[0], p[1] / half, p[2] / (half * half));
            vec![a0 - a1 * mid + a2 * mid * mid, a1 - 2.0 * a2 * mid, a2]
        }
    };
    let fitted: Vec<f64> = s.iter().map(|x| p.iter().enumerate().map(|(j, c)| c * x.powi(j as i32)).sum()).collect();
    let residuals: Vec<f64> = v.iter().zip(&fitted).map(|(o, f)| o - f).collect();
    let mean = v.iter().sum::<f64>() / n as f64;
    let ss_tot: f64 = v.iter().map(|y| (y - mean).powi(2)).sum();
    let ss_res: f64 = residuals.iter().map(|r| r * r).sum();
    let r_squared = if ss_tot == 0.0 { 1.0 } else { (1.0 - ss_res / ss_tot).clamp(0.0, 1.0) };
    let coefficients = match model {
        FitModel::PowerLaw => vec![coeffs_in_u[0].exp(), coeffs_in_u[1]],
        _ => coeffs_in_u,
    };
    Ok(FitResult { model, coefficients, r_squared, residuals })
}
