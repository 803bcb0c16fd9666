//! Ordinary least squares with stable numerics and full diagnostics.
//!
//! The regression y = b₀ + Σ βⱼxⱼ + ε is solved through an orthogonal
//! decomposition rather than the normal equations: non-intercept columns are
//! centered and scaled to unit sample standard deviation, the centered system
//! is solved by SVD, and coefficients are transformed back to the original
//! scale. Centering makes the intercept exact (b₀ = ȳ − Σ βⱼx̄ⱼ) and scaling
//! keeps the singular-value spectrum honest when columns live on wildly
//! different magnitudes (degree-3 monomials vs. raw factors).
//!
//! Rank deficiency is detected from the singular values; the error names the
//! columns loading on the near-null space so a collinear candidate pool can
//! be fixed rather than guessed at.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A fitted least-squares model with the diagnostics stepwise selection and
/// model reporting need. Coefficient order matches the design columns.
#[derive(Debug, Clone)]
pub struct OlsFit {
    /// [intercept, β₁, …, β_k] in the original column scale.
    pub coefficients: Vec<f64>,
    /// Coefficient of determination, in [0, 1].
    pub r_squared: f64,
    /// R² penalized for parameter count: 1 − (1−R²)(n−1)/(n−p).
    pub adjusted_r_squared: f64,
    /// Per-coefficient t-statistics, aligned with `coefficients`.
    pub t_statistics: Vec<f64>,
    /// Unbiased residual variance, SSR/(n − p).
    pub residual_variance: f64,
    /// y − ŷ per observation.
    pub residuals: Vec<f64>,
}

/// Relative singular-value cutoff below which a direction is treated as
/// null. Scaled columns have unit norm order, so this is a dimensionless
/// conditioning threshold, far above f64 noise yet far below any honest
/// regressor's contribution.
const RANK_TOLERANCE: f64 = 1e-10;

/// Fits y on an explicit design matrix whose FIRST column must be the
/// all-ones intercept; `names` labels the remaining k columns for error
/// reporting. Requires strictly more observations than parameters.
pub fn fit_ols(design: &DMatrix<f64>, targets: &[f64], names: &[String]) -> Result<OlsFit> {
    let n = design.nrows();
    let p = design.ncols();
    let k = p - 1;
    if targets.len() != n {
        return Err(Error::Shape(format!(
            "{n} design rows against {} targets",
            targets.len()
        )));
    }
    if names.len() != k {
        return Err(Error::Shape(format!("{k} term columns against {} names", names.len())));
    }
    if n <= p {
        return Err(Error::Shape(format!(
            "least squares needs more observations than parameters ({n} rows, {p} parameters)"
        )));
    }
    debug_assert!(
        design.column(0).iter().all(|&v| v == 1.0),
        "first design column must be the intercept"
    );

    let y = DVector::from_column_slice(targets);
    let y_mean = y.mean();
    let y_centered = y.map(|v| v - y_mean);
    let sst: f64 = y_centered.iter().map(|v| v * v).sum();

    // Center and scale the term columns; a zero-variance column is constant,
    // i.e. collinear with the intercept — report it by name immediately.
    let mut means = Vec::with_capacity(k);
    let mut scales = Vec::with_capacity(k);
    let mut z = DMatrix::zeros(n, k);
    for j in 0..k {
        let col = design.column(j + 1);
        let mean = col.mean();
        let var: f64 = col.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let scale = var.sqrt();
        if scale < 1e-300 {
            return Err(Error::SingularDesign { columns: vec![names[j].clone()] });
        }
        for i in 0..n {
            z[(i, j)] = (design[(i, j + 1)] - mean) / scale;
        }
        means.push(mean);
        scales.push(scale);
    }

    // Solve the centered system by SVD; γ are the standardized slopes.
    let (gamma, gamma_var_unscaled) = if k == 0 {
        (DVector::zeros(0), DMatrix::zeros(0, 0))
    } else {
        let svd = z.clone().svd(true, true);
        let u = svd.u.as_ref().expect("svd computed with u");
        let v_t = svd.v_t.as_ref().expect("svd computed with v_t");
        let sv = &svd.singular_values;
        let max_sv = sv.iter().cloned().fold(0.0, f64::max);
        if max_sv <= 0.0 || sv.iter().any(|&s| s < RANK_TOLERANCE * max_sv) {
            return Err(Error::SingularDesign { columns: collinear_columns(v_t, sv, max_sv, names) });
        }
        // γ = V Σ⁻¹ Uᵀ ỹ
        let uty = u.transpose() * &y_centered;
        let mut scaled = uty;
        for (i, v) in scaled.iter_mut().enumerate() {
            *v /= sv[i];
        }
        let gamma = v_t.transpose() * scaled;
        // (ZᵀZ)⁻¹ = V Σ⁻² Vᵀ, the unscaled covariance of γ.
        let mut vs = v_t.transpose();
        for j in 0..vs.ncols() {
            let s = sv[j];
            for i in 0..vs.nrows() {
                vs[(i, j)] /= s;
            }
        }
        let cov = &vs * vs.transpose();
        (gamma, cov)
    };

    // Back-transform: βⱼ = γⱼ/sⱼ, b₀ = ȳ − Σ βⱼ·mⱼ.
    let mut coefficients = Vec::with_capacity(p);
    let mut b0 = y_mean;
    for j in 0..k {
        let beta = gamma[j] / scales[j];
        b0 -= beta * means[j];
        coefficients.push(beta);
    }
    coefficients.insert(0, b0);

    // Residuals and goodness of fit.
    let mut residuals = Vec::with_capacity(n);
    let mut ssr = 0.0;
    for i in 0..n {
        let mut fitted = y_mean;
        for j in 0..k {
            fitted += gamma[j] * z[(i, j)];
        }
        let r = targets[i] - fitted;
        residuals.push(r);
        ssr += r * r;
    }
    let r_squared = if sst <= 1e-300 { 1.0 } else { (1.0 - ssr / sst).clamp(0.0, 1.0) };
    let dof = (n - p) as f64;
    let residual_variance = ssr / dof;
    let adjusted_r_squared = 1.0 - (1.0 - r_squared) * (n as f64 - 1.0) / dof;

    // t-statistics. Var(βⱼ) = σ̂²·(ZᵀZ)⁻¹ⱼⱼ/sⱼ²; the intercept picks up the
    // ȳ term plus the back-transformation: Var(b₀) = σ̂²/n + m̃ᵀVar(γ)m̃ with
    // m̃ⱼ = mⱼ/sⱼ (cov(ȳ, γ) = 0 because the columns are centered).
    let mut t_statistics = Vec::with_capacity(p);
    {
        let mut var0 = residual_variance / n as f64;
        for a in 0..k {
            for b in 0..k {
                var0 += residual_variance
                    * (means[a] / scales[a])
                    * (means[b] / scales[b])
                    * gamma_var_unscaled[(a, b)];
            }
        }
        t_statistics.push(t_from(coefficients[0], var0));
        for j in 0..k {
            let var = residual_variance * gamma_var_unscaled[(j, j)] / (scales[j] * scales[j]);
            t_statistics.push(t_from(coefficients[j + 1], var));
        }
    }

    Ok(OlsFit {
        coefficients,
        r_squared,
        adjusted_r_squared,
        t_statistics,
        residual_variance,
        residuals,
    })
}

fn t_from(coef: f64, var: f64) -> f64 {
    if var <= 0.0 {
        // An exact fit has zero residual variance; the conventional report is
        // an infinite statistic for nonzero coefficients, zero otherwise.
        if coef == 0.0 {
            0.0
        } else {
            f64::INFINITY * coef.signum()
        }
    } else {
        coef / var.sqrt()
    }
}

/// Names the columns loading on the near-null singular directions.
fn collinear_columns(
    v_t: &DMatrix<f64>,
    sv: &DVector<f64>,
    max_sv: f64,
    names: &[String],
) -> Vec<String> {
    let mut flagged = vec![false; names.len()];
    for (i, &s) in sv.iter().enumerate() {
        if s < RANK_TOLERANCE * max_sv {
            for j in 0..names.len() {
                if v_t[(i, j)].abs() > 0.1 {
                    flagged[j] = true;
                }
            }
        }
    }
    let out: Vec<String> = names
        .iter()
        .zip(&flagged)
        .filter(|(_, &f)| f)
        .map(|(n, _)| n.clone())
        .collect();
    if out.is_empty() {
        names.to_vec()
    } else {
        out
    }
}
