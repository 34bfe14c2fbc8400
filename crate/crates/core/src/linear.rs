//! Covariance and regression algebra for linear structural models, and the
//! linear-model closed forms of the four biases.
//!
//! Two covariance conventions are used and never mixed inside a comparison:
//! [`Convention::Sample`] (divide by `n - 1`) for estimation from data, and
//! [`Convention::Population`] (divide by `n`) for standardization. The
//! closed forms are population identities.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::graph::{CausalGraph, Edge, Node, Role};

/// Relative size below which a regression denominator counts as zero.
pub const COLLINEARITY_THRESHOLD: f64 = 1e-12;

/// Tolerance for the positive semidefinite check on estimated matrices.
pub const PSD_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Convention {
    /// Unbiased, divides by `n - 1`.
    #[default]
    Sample,
    /// Divides by `n`.
    Population,
}

/// Labeled symmetric second-moment matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrix {
    variables: Vec<String>,
    entries: DMatrix<f64>,
    means: Vec<f64>,
}

impl CovMatrix {
    pub fn new(variables: Vec<String>, entries: DMatrix<f64>, means: Option<Vec<f64>>) -> Result<Self> {
        let k = variables.len();
        if entries.nrows() != k || entries.ncols() != k {
            return Err(Error::InvalidData(format!(
                "{k} variables but a {}x{} matrix",
                entries.nrows(),
                entries.ncols()
            )));
        }
        let means = means.unwrap_or_else(|| vec![0.0; k]);
        if means.len() != k {
            return Err(Error::InvalidData("means length does not match variables".into()));
        }
        for i in 0..k {
            let d = entries[(i, i)];
            if !(d.is_finite() && d > 0.0) {
                return Err(Error::InvalidData(format!(
                    "variance of `{}` must be positive, got {d}",
                    variables[i]
                )));
            }
            for j in 0..i {
                let (a, b) = (entries[(i, j)], entries[(j, i)]);
                let scale = (entries[(i, i)] * entries[(j, j)]).sqrt();
                if !a.is_finite() || (a - b).abs() > 1e-12 * scale.max(1.0) {
                    return Err(Error::InvalidData(format!(
                        "matrix is not symmetric at ({}, {})",
                        variables[i], variables[j]
                    )));
                }
            }
        }
        Ok(CovMatrix {
            variables,
            entries,
            means,
        })
    }

    pub fn from_rows(variables: Vec<String>, rows: Vec<Vec<f64>>, means: Option<Vec<f64>>) -> Result<Self> {
        let k = variables.len();
        if rows.len() != k || rows.iter().any(|r| r.len() != k) {
            return Err(Error::InvalidData("covariance rows must form a square matrix".into()));
        }
        let entries = DMatrix::from_fn(k, k, |i, j| rows[i][j]);
        CovMatrix::new(variables, entries, means)
    }

    /// Means and covariances of every column of `data`.
    ///
    /// Rejects constant columns and matrices that fail the PSD check.
    pub fn sample_moments(data: &Dataset, convention: Convention) -> Result<Self> {
        let n = data.n_rows();
        if n < 2 {
            return Err(Error::InvalidData(format!("need at least 2 rows, got {n}")));
        }
        let k = data.n_cols();
        let means: Vec<f64> = data
            .columns()
            .iter()
            .map(|c| c.iter().sum::<f64>() / n as f64)
            .collect();
        let divisor = match convention {
            Convention::Sample => (n - 1) as f64,
            Convention::Population => n as f64,
        };
        let mut entries = DMatrix::zeros(k, k);
        for i in 0..k {
            let ci = &data.columns()[i];
            if ci.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidData(format!("column `{}` has non-finite values", data.names()[i])));
            }
            for j in 0..=i {
                let cj = &data.columns()[j];
                let s: f64 = ci
                    .iter()
                    .zip(cj)
                    .map(|(a, b)| (a - means[i]) * (b - means[j]))
                    .sum();
                entries[(i, j)] = s / divisor;
                entries[(j, i)] = s / divisor;
            }
            if entries[(i, i)] <= 0.0 {
                return Err(Error::InvalidData(format!(
                    "column `{}` is constant (zero variance)",
                    data.names()[i]
                )));
            }
        }
        let cov = CovMatrix::new(data.names().to_vec(), entries, Some(means))?;
        if !cov.is_psd(PSD_TOLERANCE) {
            return Err(Error::InvalidData("sample covariance is not positive semidefinite".into()));
        }
        Ok(cov)
    }

    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn index(&self, name: &str) -> Result<usize> {
        self.variables
            .iter()
            .position(|v| v == name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn cov(&self, x: &str, y: &str) -> Result<f64> {
        Ok(self.entries[(self.index(x)?, self.index(y)?)])
    }

    pub fn var(&self, x: &str) -> Result<f64> {
        self.cov(x, x)
    }

    pub fn is_psd(&self, tol: f64) -> bool {
        let scale = (0..self.entries.nrows())
            .map(|i| self.entries[(i, i)])
            .fold(0.0_f64, f64::max);
        let eig = self.entries.clone().symmetric_eigen();
        eig.eigenvalues.iter().all(|&l| l >= -tol * scale.max(1.0))
    }

    /// The correlation matrix (covariances of the standardized variables).
    pub fn correlation(&self) -> CovMatrix {
        let k = self.variables.len();
        let sd: Vec<f64> = (0..k).map(|i| self.entries[(i, i)].sqrt()).collect();
        let entries = DMatrix::from_fn(k, k, |i, j| {
            if i == j {
                1.0
            } else {
                self.entries[(i, j)] / (sd[i] * sd[j])
            }
        });
        CovMatrix {
            variables: self.variables.clone(),
            entries,
            means: vec![0.0; k],
        }
    }

    pub fn submatrix(&self, names: &[&str]) -> Result<CovMatrix> {
        let idx = names.iter().map(|n| self.index(n)).collect::<Result<Vec<_>>>()?;
        let entries = DMatrix::from_fn(idx.len(), idx.len(), |i, j| self.entries[(idx[i], idx[j])]);
        Ok(CovMatrix {
            variables: names.iter().map(|s| s.to_string()).collect(),
            entries,
            means: idx.iter().map(|&i| self.means[i]).collect(),
        })
    }

    /// True when every variance is 1 within `tol`.
    pub fn is_standardized(&self, tol: f64) -> bool {
        (0..self.entries.nrows()).all(|i| (self.entries[(i, i)] - 1.0).abs() <= tol)
    }
}

/// Rescales every column to mean 0 and population variance 1.
pub fn standardize(data: &Dataset) -> Result<Dataset> {
    let n = data.n_rows();
    if n < 2 {
        return Err(Error::InvalidData("standardization needs at least 2 rows".into()));
    }
    let columns = data
        .columns()
        .iter()
        .zip(data.names())
        .map(|(col, name)| {
            let mean = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            if var <= 0.0 {
                return Err(Error::InvalidData(format!("column `{name}` is constant (zero variance)")));
            }
            let sd = var.sqrt();
            Ok(col.iter().map(|v| (v - mean) / sd).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(data.names().to_vec(), columns)
}

/// Simple regression coefficient of `y` on `x`: sigma_yx / sigma_x^2.
pub fn beta(cov: &CovMatrix, y: &str, x: &str) -> Result<f64> {
    let vx = cov.var(x)?;
    if vx <= 0.0 {
        return Err(Error::Collinear(format!("`{x}` has zero variance")));
    }
    Ok(cov.cov(y, x)? / vx)
}

/// Partial regression coefficient of `y` on `x` controlling for `z`, from
/// pairwise covariances.
pub fn beta_partial1(cov: &CovMatrix, y: &str, x: &str, z: &str) -> Result<f64> {
    let (vx, vz) = (cov.var(x)?, cov.var(z)?);
    let (sxy, syz, sxz) = (cov.cov(x, y)?, cov.cov(y, z)?, cov.cov(x, z)?);
    let den = vx * vz - sxz * sxz;
    if den <= COLLINEARITY_THRESHOLD * vx * vz {
        return Err(Error::Collinear(format!("`{x}` and `{z}` are collinear")));
    }
    Ok((vz * sxy - syz * sxz) / den)
}

/// Intermediate quantities of the cofactor route to beta_{ya.zw}.
///
/// Cofactors are taken in the correlation matrix ordered (y, a, z, w).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Partial2 {
    pub c_ya: f64,
    pub c_yy: f64,
    pub c_aa: f64,
    /// rho_{ya.zw} = -C_ya / sqrt(C_yy C_aa); `None` when `y` is an exact
    /// linear function of the controls.
    pub partial_correlation: Option<f64>,
    /// sigma_{y.zw} / sigma_{a.zw}.
    pub residual_sd_ratio: Option<f64>,
    pub coefficient: f64,
}

/// Partial regression coefficient of `y` on `a` controlling for `z` and `w`,
/// via correlation-matrix cofactors.
pub fn beta_partial2(cov: &CovMatrix, y: &str, a: &str, z: &str, w: &str) -> Result<f64> {
    Ok(partial2_cofactors(cov, y, a, z, w)?.coefficient)
}

pub fn partial2_cofactors(cov: &CovMatrix, y: &str, a: &str, z: &str, w: &str) -> Result<Partial2> {
    let r = |u: &str, v: &str| -> Result<f64> { Ok(cov.cov(u, v)? / (cov.var(u)? * cov.var(v)?).sqrt()) };
    let (r_ya, r_yz, r_yw) = (r(y, a)?, r(y, z)?, r(y, w)?);
    let (r_za, r_wa, r_zw) = (r(z, a)?, r(w, a)?, r(z, w)?);

    let c_ya = -(r_ya - r_ya * r_zw * r_zw - r_za * r_yz - r_wa * r_yw
        + r_za * r_yw * r_zw
        + r_wa * r_yz * r_zw);
    let c_yy = 1.0 - r_zw * r_zw - r_za * r_za - r_wa * r_wa + 2.0 * r_za * r_wa * r_zw;
    let c_aa = 1.0 - r_zw * r_zw - r_yz * r_yz - r_yw * r_yw + 2.0 * r_yz * r_yw * r_zw;

    if c_yy <= COLLINEARITY_THRESHOLD {
        return Err(Error::Collinear(format!(
            "`{a}` is (nearly) a linear function of `{z}` and `{w}` (C_yy = {c_yy:e})"
        )));
    }
    let sd_ratio = (cov.var(y)? / cov.var(a)?).sqrt();
    let coefficient = -c_ya / c_yy * sd_ratio;
    let (partial_correlation, residual_sd_ratio) = if c_aa > COLLINEARITY_THRESHOLD {
        (
            Some(-c_ya / (c_yy * c_aa).sqrt()),
            Some(sd_ratio * (c_aa / c_yy).sqrt()),
        )
    } else {
        (None, None)
    };
    Ok(Partial2 {
        c_ya,
        c_yy,
        c_aa,
        partial_correlation,
        residual_sd_ratio,
        coefficient,
    })
}

/// Coefficient of `x` in the population regression of `y` on `x` and
/// `controls`, by solving the normal equations on the covariance matrix.
pub fn partial_regression(cov: &CovMatrix, y: &str, x: &str, controls: &[&str]) -> Result<f64> {
    let mut regressors = vec![x];
    regressors.extend_from_slice(controls);
    let coefs = regression_coefficients(cov, y, &regressors)?;
    Ok(coefs[0])
}

/// All slopes of the population regression of `y` on `regressors`.
pub fn regression_coefficients(cov: &CovMatrix, y: &str, regressors: &[&str]) -> Result<Vec<f64>> {
    let idx = regressors.iter().map(|r| cov.index(r)).collect::<Result<Vec<_>>>()?;
    let iy = cov.index(y)?;
    let p = idx.len();
    let s = DMatrix::from_fn(p, p, |i, j| cov.entries[(idx[i], idx[j])]);
    let rhs = DVector::from_fn(p, |i, _| cov.entries[(idx[i], iy)]);
    solve_normal_equations(s, rhs, regressors).map(|b| b.iter().copied().collect())
}

fn solve_normal_equations(s: DMatrix<f64>, rhs: DVector<f64>, names: &[&str]) -> Result<DVector<f64>> {
    let p = s.nrows();
    let sd: Vec<f64> = (0..p).map(|i| s[(i, i)].sqrt()).collect();
    if sd.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::Collinear("a regressor has zero variance".into()));
    }
    // Judge rank on the scale-free correlation matrix.
    let corr = DMatrix::from_fn(p, p, |i, j| s[(i, j)] / (sd[i] * sd[j]));
    let min_eig = corr.clone().symmetric_eigen().eigenvalues.min();
    if min_eig <= COLLINEARITY_THRESHOLD {
        return Err(Error::Collinear(format!(
            "design over [{}] is rank deficient",
            names.join(", ")
        )));
    }
    let scaled_rhs = DVector::from_fn(p, |i, _| rhs[i] / sd[i]);
    let chol = corr
        .cholesky()
        .ok_or_else(|| Error::Collinear(format!("design over [{}] is not positive definite", names.join(", "))))?;
    let z = chol.solve(&scaled_rhs);
    Ok(DVector::from_fn(p, |i, _| z[i] / sd[i]))
}

/// Least-squares fit with intercept.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OlsFit {
    pub intercept: f64,
    /// Slopes in predictor order; the interaction column, when requested, is
    /// last and named `A*B`.
    pub coefficients: Vec<(String, f64)>,
}

impl OlsFit {
    pub fn coefficient(&self, name: &str) -> Result<f64> {
        self.coefficients
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, c)| *c)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }
}

/// Ordinary least squares of `response` on `predictors` (plus the product of
/// `interaction` when given), via centered normal equations.
pub fn ols_fit(
    data: &Dataset,
    response: &str,
    predictors: &[&str],
    interaction: Option<(&str, &str)>,
) -> Result<OlsFit> {
    let n = data.n_rows();
    let mut columns: Vec<Vec<f64>> = predictors
        .iter()
        .map(|p| data.column(p).map(<[f64]>::to_vec))
        .collect::<Result<_>>()?;
    let mut names: Vec<String> = predictors.iter().map(|s| s.to_string()).collect();
    if let Some((a, b)) = interaction {
        let ca = data.column(a)?;
        let cb = data.column(b)?;
        columns.push(ca.iter().zip(cb).map(|(x, y)| x * y).collect());
        names.push(format!("{a}*{b}"));
    }
    let y = data.column(response)?;
    let p = columns.len();
    if n <= p + 1 {
        return Err(Error::InvalidData(format!("{n} rows cannot identify {} coefficients", p + 1)));
    }
    let mean = |c: &[f64]| c.iter().sum::<f64>() / n as f64;
    let xm: Vec<f64> = columns.iter().map(|c| mean(c)).collect();
    let ym = mean(y);
    let mut s = DMatrix::zeros(p, p);
    let mut rhs = DVector::zeros(p);
    for i in 0..p {
        for j in 0..=i {
            let v: f64 = columns[i]
                .iter()
                .zip(&columns[j])
                .map(|(a, b)| (a - xm[i]) * (b - xm[j]))
                .sum();
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
        rhs[i] = columns[i].iter().zip(y).map(|(a, b)| (a - xm[i]) * (b - ym)).sum();
    }
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let b = solve_normal_equations(s, rhs, &name_refs)?;
    let intercept = ym - (0..p).map(|i| b[i] * xm[i]).sum::<f64>();
    Ok(OlsFit {
        intercept,
        coefficients: names.into_iter().zip(b.iter().copied()).collect(),
    })
}

// ---------------------------------------------------------------------------
// Closed forms
// ---------------------------------------------------------------------------

/// Confounding bias beta_ya - beta_ya.z written in covariances.
pub fn conf_bias_from_cov(cov: &CovMatrix, y: &str, a: &str, z: &str) -> Result<f64> {
    let (va, vz) = (cov.var(a)?, cov.var(z)?);
    let (s_za, s_yz, s_ya) = (cov.cov(z, a)?, cov.cov(y, z)?, cov.cov(y, a)?);
    let den = va * vz - s_za * s_za;
    if den <= COLLINEARITY_THRESHOLD * va * vz {
        return Err(Error::Collinear(format!("`{a}` and `{z}` are collinear")));
    }
    Ok((s_za * s_yz - s_ya / va * s_za * s_za) / den)
}

/// Confounding bias from path coefficients: (sigma_z^2 / sigma_a^2) beta gamma.
pub fn conf_bias_coefficients(var_z: f64, var_a: f64, beta: f64, gamma: f64) -> f64 {
    var_z / var_a * beta * gamma
}

/// Standardized variables: the bias is the product of the two confounding paths.
pub fn conf_bias_standardized(beta: f64, gamma: f64) -> f64 {
    beta * gamma
}

/// Bias with two independent confounders on standardized variables, in
/// covariances. Fails unless the matrix is standardized and sigma_zw is 0
/// within `tol`.
pub fn conf_bias_two_from_cov(cov: &CovMatrix, y: &str, a: &str, z: &str, w: &str, tol: f64) -> Result<f64> {
    let sub = cov.submatrix(&[y, a, z, w])?;
    if !sub.is_standardized(tol) {
        return Err(Error::InvalidParams(
            "two-confounder covariance form requires standardized variables".into(),
        ));
    }
    let s_zw = cov.cov(z, w)?;
    if s_zw.abs() > tol {
        return Err(Error::Dependence(format!(
            "confounders `{z}` and `{w}` must be uncorrelated, sigma_zw = {s_zw}"
        )));
    }
    let (s_za, s_wa, s_yz, s_yw, s_ya) = (
        cov.cov(z, a)?,
        cov.cov(w, a)?,
        cov.cov(y, z)?,
        cov.cov(y, w)?,
        cov.cov(y, a)?,
    );
    let den = 1.0 - s_za * s_za - s_wa * s_wa;
    if den <= COLLINEARITY_THRESHOLD {
        return Err(Error::Collinear(format!("`{a}` is determined by `{z}` and `{w}`")));
    }
    Ok((s_za * s_yz + s_wa * s_yw - s_ya * (s_za * s_za + s_wa * s_wa)) / den)
}

/// Two independent confounders in coefficient form, for arbitrary variances:
/// (sigma_z^2 beta gamma + sigma_w^2 delta lambda) / sigma_a^2. Reduces to
/// beta gamma + delta lambda for standardized variables.
pub fn conf_bias_two_coefficients(
    var_z: f64,
    var_w: f64,
    var_a: f64,
    beta: f64,
    gamma: f64,
    delta: f64,
    lambda: f64,
) -> f64 {
    (var_z * beta * gamma + var_w * delta * lambda) / var_a
}

/// Selection bias beta_ya.w - beta_ya written in covariances.
pub fn sel_bias_from_cov(cov: &CovMatrix, y: &str, a: &str, w: &str) -> Result<f64> {
    let (va, vw) = (cov.var(a)?, cov.var(w)?);
    let (s_wa, s_yw, s_ya) = (cov.cov(w, a)?, cov.cov(y, w)?, cov.cov(y, a)?);
    let den = va * vw - s_wa * s_wa;
    if den <= COLLINEARITY_THRESHOLD * va * vw {
        return Err(Error::Collinear(format!("`{a}` and `{w}` are collinear")));
    }
    Ok((s_ya / va * s_wa * s_wa - s_wa * s_yw) / den)
}

/// Selection bias from the colliding structure's coefficients (A -> Y is
/// `alpha`, A -> W is `eta`, Y -> W is `epsilon`) and total variances.
pub fn sel_bias_coefficients(var_a: f64, var_y: f64, var_w: f64, alpha: f64, eta: f64, epsilon: f64) -> Result<f64> {
    let va2 = var_a * var_a;
    let s_wa = var_a * eta + var_a * alpha * epsilon;
    let den = var_a * var_w - s_wa * s_wa;
    if den <= COLLINEARITY_THRESHOLD * var_a * var_w {
        return Err(Error::singular("sigma_a^2 sigma_w^2 - sigma_wa^2", "A and W are collinear"));
    }
    let num = va2 * alpha * alpha * eta + va2 * alpha.powi(3) * epsilon
        - var_y * var_a * eta
        - var_y * var_a * alpha * epsilon;
    Ok(epsilon * num / den)
}

/// Standardized colliding structure.
pub fn sel_bias_standardized(alpha: f64, eta: f64, epsilon: f64) -> Result<f64> {
    let s = eta + alpha * epsilon;
    let den = 1.0 - s * s;
    if den.abs() <= COLLINEARITY_THRESHOLD {
        return Err(Error::singular("1 - (eta + alpha epsilon)^2", "A and W are collinear"));
    }
    Ok(epsilon * (alpha * alpha * eta + alpha.powi(3) * epsilon - eta - alpha * epsilon) / den)
}

/// Measurement bias beta_ya.t - beta_ya.z from the measurement structure's
/// coefficients: Z -> A is `beta`, Z -> Y is `gamma`, Z -> T is `lambda`.
pub fn meas_bias_coefficients(var_z: f64, var_a: f64, var_t: f64, beta: f64, gamma: f64, lambda: f64) -> Result<f64> {
    let den = var_a * var_t - var_z * var_z * lambda * lambda * beta * beta;
    if den <= COLLINEARITY_THRESHOLD * var_a * var_t {
        return Err(Error::singular(
            "sigma_a^2 sigma_t^2 - sigma_z^4 lambda^2 beta^2",
            "A and T are collinear",
        ));
    }
    Ok(var_z * beta * gamma * (var_t - var_z * lambda * lambda) / den)
}

pub fn meas_bias_standardized(beta: f64, gamma: f64, lambda: f64) -> Result<f64> {
    let den = 1.0 - lambda * lambda * beta * beta;
    if den.abs() <= COLLINEARITY_THRESHOLD {
        return Err(Error::singular("1 - lambda^2 beta^2", "A and T are collinear"));
    }
    Ok(beta * gamma * (1.0 - lambda * lambda) / den)
}

/// Measurement bias from a covariance matrix containing the unobserved
/// confounder: plugs the estimated path coefficients into the closed form.
pub fn meas_bias_from_cov(cov: &CovMatrix, y: &str, a: &str, z: &str, t: &str) -> Result<f64> {
    let vz = cov.var(z)?;
    let beta_za = cov.cov(z, a)? / vz;
    let lambda = cov.cov(z, t)? / vz;
    let gamma = beta_partial1(cov, y, z, a)?;
    meas_bias_coefficients(vz, cov.var(a)?, cov.var(t)?, beta_za, gamma, lambda)
}

// ---------------------------------------------------------------------------
// Path models
// ---------------------------------------------------------------------------

/// Canonical linear structures. Variable names are fixed: `Z`, `W` for
/// confounders, `W` for the collider, `T` for the proxy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "structure", rename_all = "snake_case")]
pub enum PathStructure {
    /// Z -> A (beta), Z -> Y (gamma), A -> Y (alpha).
    Confounding { alpha: f64, beta: f64, gamma: f64 },
    /// Confounding through independent Z and W: Z -> A (beta), Z -> Y
    /// (gamma), W -> A (delta), W -> Y (lambda), A -> Y (alpha).
    TwoConfounder {
        alpha: f64,
        beta: f64,
        gamma: f64,
        delta: f64,
        lambda: f64,
    },
    /// A -> Y (alpha), A -> W (eta), Y -> W (epsilon); W is the selection node.
    Colliding { alpha: f64, eta: f64, epsilon: f64 },
    /// Confounding structure plus proxy Z -> T (lambda).
    Measurement {
        alpha: f64,
        beta: f64,
        gamma: f64,
        lambda: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearBiasKind {
    Confounding,
    Selection,
    Measurement,
}

impl PathStructure {
    pub fn bias_kind(&self) -> LinearBiasKind {
        match self {
            PathStructure::Confounding { .. } | PathStructure::TwoConfounder { .. } => LinearBiasKind::Confounding,
            PathStructure::Colliding { .. } => LinearBiasKind::Selection,
            PathStructure::Measurement { .. } => LinearBiasKind::Measurement,
        }
    }

    fn coefficients(&self) -> Vec<f64> {
        match *self {
            PathStructure::Confounding { alpha, beta, gamma } => vec![alpha, beta, gamma],
            PathStructure::TwoConfounder {
                alpha,
                beta,
                gamma,
                delta,
                lambda,
            } => vec![alpha, beta, gamma, delta, lambda],
            PathStructure::Colliding { alpha, eta, epsilon } => vec![alpha, eta, epsilon],
            PathStructure::Measurement {
                alpha,
                beta,
                gamma,
                lambda,
            } => vec![alpha, beta, gamma, lambda],
        }
    }

    /// Variables in topological order.
    pub fn variables(&self) -> &'static [&'static str] {
        match self {
            PathStructure::Confounding { .. } => &["Z", "A", "Y"],
            PathStructure::TwoConfounder { .. } => &["Z", "W", "A", "Y"],
            PathStructure::Colliding { .. } => &["A", "Y", "W"],
            PathStructure::Measurement { .. } => &["Z", "A", "Y", "T"],
        }
    }

    fn edges(&self) -> Vec<Edge> {
        match *self {
            PathStructure::Confounding { alpha, beta, gamma } => vec![
                Edge::linear("Z", "A", beta),
                Edge::linear("Z", "Y", gamma),
                Edge::linear("A", "Y", alpha),
            ],
            PathStructure::TwoConfounder {
                alpha,
                beta,
                gamma,
                delta,
                lambda,
            } => vec![
                Edge::linear("Z", "A", beta),
                Edge::linear("Z", "Y", gamma),
                Edge::linear("W", "A", delta),
                Edge::linear("W", "Y", lambda),
                Edge::linear("A", "Y", alpha),
            ],
            PathStructure::Colliding { alpha, eta, epsilon } => vec![
                Edge::linear("A", "Y", alpha),
                Edge::linear("A", "W", eta),
                Edge::linear("Y", "W", epsilon),
            ],
            PathStructure::Measurement {
                alpha,
                beta,
                gamma,
                lambda,
            } => vec![
                Edge::linear("Z", "A", beta),
                Edge::linear("Z", "Y", gamma),
                Edge::linear("A", "Y", alpha),
                Edge::linear("Z", "T", lambda),
            ],
        }
    }
}

/// A linear structure together with the exogenous variance of every variable.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathModel {
    pub structure: PathStructure,
    /// Exogenous (noise) variance per variable; missing entries are 1.
    pub noise: BTreeMap<String, f64>,
}

impl PathModel {
    /// All structural noise terms have unit variance.
    pub fn unit_noise(structure: PathStructure) -> Result<Self> {
        let m = PathModel {
            structure,
            noise: BTreeMap::new(),
        };
        m.check()?;
        Ok(m)
    }

    pub fn with_noise(structure: PathStructure, noise: BTreeMap<String, f64>) -> Result<Self> {
        let m = PathModel { structure, noise };
        m.check()?;
        Ok(m)
    }

    /// Chooses noise variances so every variable has unit total variance.
    /// Fails when the coefficients already transmit variance >= 1 into some
    /// variable.
    pub fn standardized(structure: PathStructure) -> Result<Self> {
        let mut noise = BTreeMap::new();
        for &v in structure.variables() {
            noise.insert(v.to_string(), 1.0);
        }
        // Variables are listed parents-first, so one sweep suffices.
        for &v in structure.variables() {
            let mut probe = noise.clone();
            probe.insert(v.to_string(), f64::MIN_POSITIVE);
            let m = PathModel {
                structure,
                noise: probe,
            };
            let transmitted = m.graph().total_variances()?[m.position(v)] - f64::MIN_POSITIVE;
            let residual = 1.0 - transmitted;
            if residual <= 0.0 {
                return Err(Error::InvalidParams(format!(
                    "coefficients transmit variance {transmitted} >= 1 into `{v}`; cannot standardize"
                )));
            }
            noise.insert(v.to_string(), residual);
        }
        PathModel::with_noise(structure, noise)
    }

    fn check(&self) -> Result<()> {
        if self.structure.coefficients().iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParams("path coefficients must be finite".into()));
        }
        for (k, v) in &self.noise {
            if !self.structure.variables().contains(&k.as_str()) {
                return Err(Error::UnknownVariable(k.clone()));
            }
            if !(v.is_finite() && *v > 0.0) {
                return Err(Error::InvalidParams(format!("noise variance of `{k}` must be positive")));
            }
        }
        Ok(())
    }

    fn position(&self, v: &str) -> usize {
        self.structure.variables().iter().position(|x| *x == v).unwrap()
    }

    pub fn noise_variance(&self, v: &str) -> f64 {
        self.noise.get(v).copied().unwrap_or(1.0)
    }

    pub fn graph(&self) -> CausalGraph {
        let mut g = CausalGraph::new();
        for &v in self.structure.variables() {
            let role = match v {
                "A" => Role::Sensitive,
                "Y" => Role::Outcome,
                "T" => Role::Proxy,
                _ => Role::Covariate,
            };
            let mut node = Node::new(v, role).with_variance(self.noise_variance(v));
            if matches!(self.structure, PathStructure::Colliding { .. }) && v == "W" {
                node = node.conditioned();
            }
            if matches!(self.structure, PathStructure::Measurement { .. }) && v == "Z" {
                node = node.latent();
            }
            g.add_node(node);
        }
        for e in self.structure.edges() {
            g.add_edge(e);
        }
        g
    }

    /// Model-implied covariance matrix by Wright's path rule.
    pub fn covariance(&self) -> Result<CovMatrix> {
        let g = self.graph();
        let vars = self.structure.variables();
        let total = g.total_variances()?;
        let k = vars.len();
        let mut rows = vec![vec![0.0; k]; k];
        for i in 0..k {
            rows[i][i] = total[i];
            for j in 0..i {
                let c = g.wright_covariance(vars[i], vars[j])?;
                rows[i][j] = c;
                rows[j][i] = c;
            }
        }
        CovMatrix::from_rows(vars.iter().map(|s| s.to_string()).collect(), rows, None)
    }

    fn total_variance(&self, v: &str) -> Result<f64> {
        Ok(self.graph().total_variances()?[self.position(v)])
    }

    /// The bias from the coefficient-form closed expression.
    pub fn closed_form_bias(&self) -> Result<f64> {
        match self.structure {
            PathStructure::Confounding { beta, gamma, .. } => Ok(conf_bias_coefficients(
                self.total_variance("Z")?,
                self.total_variance("A")?,
                beta,
                gamma,
            )),
            PathStructure::TwoConfounder {
                beta,
                gamma,
                delta,
                lambda,
                ..
            } => Ok(conf_bias_two_coefficients(
                self.total_variance("Z")?,
                self.total_variance("W")?,
                self.total_variance("A")?,
                beta,
                gamma,
                delta,
                lambda,
            )),
            PathStructure::Colliding { alpha, eta, epsilon } => sel_bias_coefficients(
                self.total_variance("A")?,
                self.total_variance("Y")?,
                self.total_variance("W")?,
                alpha,
                eta,
                epsilon,
            ),
            PathStructure::Measurement {
                beta, gamma, lambda, ..
            } => meas_bias_coefficients(
                self.total_variance("Z")?,
                self.total_variance("A")?,
                self.total_variance("T")?,
                beta,
                gamma,
                lambda,
            ),
        }
    }

    /// The bias as the defining difference of regression coefficients,
    /// evaluated on any covariance matrix over this structure's variables.
    pub fn regression_bias_on(&self, cov: &CovMatrix) -> Result<f64> {
        regression_bias(self.structure.bias_kind(), self.structure, cov)
    }

    /// [`PathModel::regression_bias_on`] at the model-implied covariances.
    pub fn regression_bias(&self) -> Result<f64> {
        self.regression_bias_on(&self.covariance()?)
    }
}

fn regression_bias(kind: LinearBiasKind, structure: PathStructure, cov: &CovMatrix) -> Result<f64> {
    match (kind, structure) {
        (LinearBiasKind::Confounding, PathStructure::TwoConfounder { .. }) => {
            Ok(beta(cov, "Y", "A")? - beta_partial2(cov, "Y", "A", "Z", "W")?)
        }
        (LinearBiasKind::Confounding, _) => Ok(beta(cov, "Y", "A")? - beta_partial1(cov, "Y", "A", "Z")?),
        (LinearBiasKind::Selection, _) => Ok(beta_partial1(cov, "Y", "A", "W")? - beta(cov, "Y", "A")?),
        (LinearBiasKind::Measurement, _) => {
            Ok(beta_partial1(cov, "Y", "A", "T")? - beta_partial1(cov, "Y", "A", "Z")?)
        }
    }
}

// ---------------------------------------------------------------------------
// Interaction
// ---------------------------------------------------------------------------

/// Y = beta0 + beta1 A + beta2 B + beta3 AB + beta4 C with binary A, B.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InteractionLinearSpec {
    pub beta0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub beta4: f64,
    pub p_a1: f64,
    pub p_b1: f64,
}

impl InteractionLinearSpec {
    pub fn new(beta: [f64; 5], p_a1: f64, p_b1: f64) -> Result<Self> {
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidParams("coefficients must be finite".into()));
        }
        for (name, p) in [("P(A=1)", p_a1), ("P(B=1)", p_b1)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidParams(format!("{name} = {p} is not a probability")));
            }
        }
        Ok(InteractionLinearSpec {
            beta0: beta[0],
            beta1: beta[1],
            beta2: beta[2],
            beta3: beta[3],
            beta4: beta[4],
            p_a1,
            p_b1,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionScope {
    /// Joint effect of the intersectional group (A=1, B=1).
    Intersectional,
    /// Effect of one attribute alone.
    Individual(Target),
}

/// Bias from leaving the AB term out of the fitted model.
pub fn int_bias_linear(spec: &InteractionLinearSpec, scope: InteractionScope) -> f64 {
    match scope {
        InteractionScope::Intersectional => spec.beta3,
        InteractionScope::Individual(Target::A) => spec.beta3 * spec.p_b1,
        InteractionScope::Individual(Target::B) => spec.beta3 * spec.p_a1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cov3(rows: [[f64; 3]; 3], names: [&str; 3]) -> CovMatrix {
        CovMatrix::from_rows(
            names.iter().map(|s| s.to_string()).collect(),
            rows.iter().map(|r| r.to_vec()).collect(),
            None,
        )
        .unwrap()
    }

    #[test]
    fn two_point_moments() {
        let d = Dataset::from_rows(vec!["x".into(), "y".into()], &[vec![0.0, 0.0], vec![2.0, 2.0]]).unwrap();
        let c = CovMatrix::sample_moments(&d, Convention::Sample).unwrap();
        assert_eq!(c.cov("x", "y").unwrap(), 2.0);
        assert_eq!(c.var("x").unwrap(), 2.0);
        assert_eq!(c.means(), &[1.0, 1.0]);
    }

    #[test]
    fn constant_column_rejected() {
        let d = Dataset::from_rows(vec!["x".into(), "y".into()], &[vec![1.0, 0.0], vec![1.0, 2.0]]).unwrap();
        assert!(CovMatrix::sample_moments(&d, Convention::Sample).is_err());
        assert!(standardize(&d).is_err());
    }

    #[test]
    fn standardize_two_points() {
        let d = Dataset::from_rows(vec!["x".into()], &[vec![0.0], vec![2.0]]).unwrap();
        let s = standardize(&d).unwrap();
        assert_eq!(s.column("x").unwrap(), &[-1.0, 1.0]);
        let again = standardize(&s).unwrap();
        assert_eq!(again, s);
    }

    #[test]
    fn asymmetric_matrix_rejected() {
        let r = CovMatrix::from_rows(
            vec!["a".into(), "b".into()],
            vec![vec![1.0, 0.2], vec![0.3, 1.0]],
            None,
        );
        assert!(r.is_err());
    }

    #[test]
    fn simple_beta_cases() {
        let c = cov3([[2.0, 2.0, 0.0], [2.0, 2.0, 0.0], [0.0, 0.0, 1.0]], ["x", "y", "u"]);
        assert!((beta(&c, "y", "x").unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(beta(&c, "u", "x").unwrap(), 0.0);
    }

    #[test]
    fn partial1_without_control_correlation_is_simple_beta() {
        let c = cov3([[1.5, 0.6, 0.0], [0.6, 2.0, 0.3], [0.0, 0.3, 1.0]], ["x", "y", "z"]);
        let b1 = beta_partial1(&c, "y", "x", "z").unwrap();
        assert!((b1 - beta(&c, "y", "x").unwrap()).abs() < 1e-15);
    }

    #[test]
    fn partial1_collinear_rejected() {
        let c = cov3([[1.0, 0.5, 1.0], [0.5, 1.0, 0.5], [1.0, 0.5, 1.0]], ["x", "y", "z"]);
        assert!(matches!(beta_partial1(&c, "y", "x", "z"), Err(Error::Collinear(_))));
    }

    #[test]
    fn partial1_recovers_direct_effect_in_confounding_model() {
        let m = PathModel::unit_noise(PathStructure::Confounding {
            alpha: 0.3,
            beta: 0.5,
            gamma: 0.5,
        })
        .unwrap();
        let c = m.covariance().unwrap();
        assert!((beta_partial1(&c, "Y", "A", "Z").unwrap() - 0.3).abs() < 1e-14);
        // (alpha (1 + beta^2) + beta gamma) / (1 + beta^2)
        assert!((beta(&c, "Y", "A").unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn conf_bias_closed_forms() {
        let m = PathModel::unit_noise(PathStructure::Confounding {
            alpha: 0.3,
            beta: 0.5,
            gamma: 0.5,
        })
        .unwrap();
        assert!((m.closed_form_bias().unwrap() - 0.2).abs() < 1e-15);
        assert!((m.regression_bias().unwrap() - 0.2).abs() < 1e-14);
        let c = m.covariance().unwrap();
        assert!((conf_bias_from_cov(&c, "Y", "A", "Z").unwrap() - 0.2).abs() < 1e-14);
        assert_eq!(conf_bias_coefficients(1.0, 1.0, 0.0, 0.7), 0.0);
        assert_eq!(conf_bias_standardized(1.0, 1.0), 1.0);
    }

    #[test]
    fn sel_bias_closed_forms() {
        let m = PathModel::unit_noise(PathStructure::Colliding {
            alpha: 0.5,
            eta: 0.3,
            epsilon: 0.6,
        })
        .unwrap();
        let expected = -0.6 * (0.3 + 0.5 * 0.6) / (1.0 + 0.36);
        assert!((m.closed_form_bias().unwrap() - expected).abs() < 1e-15);
        assert!((m.regression_bias().unwrap() - expected).abs() < 1e-14);
        let zero = PathModel::unit_noise(PathStructure::Colliding {
            alpha: 0.5,
            eta: 0.3,
            epsilon: 0.0,
        })
        .unwrap();
        assert_eq!(zero.closed_form_bias().unwrap(), 0.0);
        let no_eta = PathModel::unit_noise(PathStructure::Colliding {
            alpha: 0.5,
            eta: 0.0,
            epsilon: 0.6,
        })
        .unwrap();
        assert!(no_eta.closed_form_bias().unwrap().abs() > 0.1);
    }

    #[test]
    fn meas_bias_closed_forms() {
        let useless = PathModel::unit_noise(PathStructure::Measurement {
            alpha: 0.3,
            beta: 0.5,
            gamma: 0.5,
            lambda: 0.0,
        })
        .unwrap();
        assert!((useless.closed_form_bias().unwrap() - 0.2).abs() < 1e-15);
        let good = PathModel::unit_noise(PathStructure::Measurement {
            alpha: 0.3,
            beta: 0.5,
            gamma: 0.5,
            lambda: 1.0,
        })
        .unwrap();
        assert!((good.closed_form_bias().unwrap() - 0.25 / 2.25).abs() < 1e-15);
        assert!((good.regression_bias().unwrap() - 0.25 / 2.25).abs() < 1e-14);
        assert_eq!(meas_bias_standardized(0.5, 0.5, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn two_confounder_forms() {
        let m = PathModel::standardized(PathStructure::TwoConfounder {
            alpha: 0.2,
            beta: 0.5,
            gamma: 0.5,
            delta: 0.5,
            lambda: 0.5,
        })
        .unwrap();
        let c = m.covariance().unwrap();
        assert!(c.is_standardized(1e-12));
        let cov_form = conf_bias_two_from_cov(&c, "Y", "A", "Z", "W", 1e-9).unwrap();
        assert!((cov_form - 0.5).abs() < 1e-12, "{cov_form}");
        assert!((m.closed_form_bias().unwrap() - 0.5).abs() < 1e-12);
        assert!((m.regression_bias().unwrap() - 0.5).abs() < 1e-12);

        let cancel = PathModel::standardized(PathStructure::TwoConfounder {
            alpha: 0.2,
            beta: 0.4,
            gamma: 0.5,
            delta: -0.4,
            lambda: 0.5,
        })
        .unwrap();
        assert!(cancel.closed_form_bias().unwrap().abs() < 1e-15);
    }

    #[test]
    fn two_confounder_rejects_correlated_confounders() {
        let names = ["Y", "A", "Z", "W"].iter().map(|s| s.to_string()).collect();
        let rows = vec![
            vec![1.0, 0.5, 0.3, 0.3],
            vec![0.5, 1.0, 0.4, 0.4],
            vec![0.3, 0.4, 1.0, 0.2],
            vec![0.3, 0.4, 0.2, 1.0],
        ];
        let c = CovMatrix::from_rows(names, rows, None).unwrap();
        assert!(matches!(
            conf_bias_two_from_cov(&c, "Y", "A", "Z", "W", 1e-9),
            Err(Error::Dependence(_))
        ));
    }

    #[test]
    fn cofactor_route_specializes_to_uncorrelated_controls() {
        let names = ["Y", "A", "Z", "W"].iter().map(|s| s.to_string()).collect();
        let rows = vec![
            vec![1.0, 0.5, 0.3, 0.25],
            vec![0.5, 1.0, 0.4, 0.35],
            vec![0.3, 0.4, 1.0, 0.0],
            vec![0.25, 0.35, 0.0, 1.0],
        ];
        let c = CovMatrix::from_rows(names, rows, None).unwrap();
        let (s_ya, s_za, s_yz, s_wy, s_wa) = (0.5, 0.4, 0.3, 0.25, 0.35);
        let simple = (s_ya - s_za * s_yz - s_wy * s_wa) / (1.0 - s_za * s_za - s_wa * s_wa);
        let got = beta_partial2(&c, "Y", "A", "Z", "W").unwrap();
        assert!((got - simple).abs() < 1e-15, "{got} vs {simple}");
    }

    #[test]
    fn cofactor_route_without_control_correlation_is_covariance() {
        let names = ["Y", "A", "Z", "W"].iter().map(|s| s.to_string()).collect();
        let rows = vec![
            vec![1.0, 0.45, 0.3, 0.25],
            vec![0.45, 1.0, 0.0, 0.0],
            vec![0.3, 0.0, 1.0, 0.0],
            vec![0.25, 0.0, 0.0, 1.0],
        ];
        let c = CovMatrix::from_rows(names, rows, None).unwrap();
        assert!((beta_partial2(&c, "Y", "A", "Z", "W").unwrap() - 0.45).abs() < 1e-15);
    }

    #[test]
    fn ols_noiseless_and_duplicate() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let d = Dataset::new(vec!["x".into(), "x2".into(), "y".into()], vec![x.clone(), x, y]).unwrap();
        let fit = ols_fit(&d, "y", &["x"], None).unwrap();
        assert!((fit.coefficient("x").unwrap() - 2.0).abs() < 1e-12);
        assert!(fit.intercept.abs() < 1e-12);
        assert!(matches!(ols_fit(&d, "y", &["x", "x2"], None), Err(Error::Collinear(_))));
    }

    #[test]
    fn int_bias_linear_scopes() {
        let spec = InteractionLinearSpec::new([0.0, 0.3, 0.2, 0.4, 0.1], 0.3, 0.5).unwrap();
        assert_eq!(int_bias_linear(&spec, InteractionScope::Intersectional), 0.4);
        assert!((int_bias_linear(&spec, InteractionScope::Individual(Target::A)) - 0.2).abs() < 1e-15);
        assert!((int_bias_linear(&spec, InteractionScope::Individual(Target::B)) - 0.12).abs() < 1e-15);
        let none = InteractionLinearSpec::new([0.0, 0.3, 0.2, 0.0, 0.1], 0.3, 0.5).unwrap();
        assert_eq!(int_bias_linear(&none, InteractionScope::Individual(Target::A)), 0.0);
        assert!(InteractionLinearSpec::new([0.0; 5], 1.2, 0.5).is_err());
    }

    #[test]
    fn standardization_fails_when_variance_saturates() {
        assert!(PathModel::standardized(PathStructure::TwoConfounder {
            alpha: 0.0,
            beta: 0.8,
            gamma: 0.1,
            delta: 0.8,
            lambda: 0.1,
        })
        .is_err());
    }
}
