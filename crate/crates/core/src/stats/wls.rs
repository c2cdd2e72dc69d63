use super::{NeumaierSum, StatsError};

/// Dense row-major matrix, sized for the handful of regressors used here.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, StatsError> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != cols) {
            return Err(StatsError::DimensionMismatch(format!("row {bad} has {} entries, expected {cols}", rows[bad].len())));
        }
        Ok(Matrix { rows: rows.len(), cols, data: rows.concat() })
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut m = Matrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.data[i * cols + j] = f(i, j);
            }
        }
        m
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WlsSolution {
    pub coefficients: Vec<f64>,
    /// `(XᵀWX)⁻¹`, the coefficient covariance when the weights are known
    /// inverse variances.
    pub normal_inverse: Matrix,
    /// `(XᵀWX)⁻¹` scaled by the residual variance estimate.
    pub covariance: Matrix,
    /// `Σ wᵢ rᵢ² / residual_df`; NaN when `residual_df == 0`.
    pub residual_variance: f64,
    pub weighted_rss: f64,
    pub residual_df: usize,
}

const RANK_TOL: f64 = 1e-12;

/// Minimizes `Σ wᵢ (yᵢ − xᵢᵀβ)²` by Householder QR of `√W·X`.
pub fn wls_solve(design: &Matrix, response: &[f64], weights: &[f64]) -> Result<WlsSolution, StatsError> {
    let n = design.nrows();
    let k = design.ncols();
    if response.len() != n || weights.len() != n {
        return Err(StatsError::DimensionMismatch(format!(
            "design has {n} rows, response {} and weights {}",
            response.len(),
            weights.len()
        )));
    }
    if k == 0 {
        return Err(StatsError::DimensionMismatch("design has no columns".into()));
    }
    if n < k {
        return Err(StatsError::Underdetermined { rows: n, cols: k });
    }
    if let Some(i) = weights.iter().position(|&w| !(w > 0.0) || !w.is_finite()) {
        return Err(StatsError::NonPositiveWeight(i));
    }
    if design.data.iter().chain(response).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }

    // Column-major working copy of √W·X and √W·y.
    let mut a: Vec<Vec<f64>> = (0..k).map(|j| (0..n).map(|i| weights[i].sqrt() * design.get(i, j)).collect()).collect();
    let mut b: Vec<f64> = (0..n).map(|i| weights[i].sqrt() * response[i]).collect();
    let col_norms: Vec<f64> = a.iter().map(|c| norm(c)).collect();

    for j in 0..k {
        let alpha = norm(&a[j][j..]);
        if col_norms[j] == 0.0 || alpha <= RANK_TOL * col_norms[j] {
            return Err(StatsError::SingularDesign(j));
        }
        let sign = if a[j][j] >= 0.0 { 1.0 } else { -1.0 };
        let mut v: Vec<f64> = a[j][j..].to_vec();
        v[0] += sign * alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        let reflect = |col: &mut [f64]| {
            let dot: f64 = v.iter().zip(col.iter()).map(|(p, q)| p * q).sum();
            let s = 2.0 * dot / vnorm2;
            for (c, vi) in col.iter_mut().zip(&v) {
                *c -= s * vi;
            }
        };
        for col in a.iter_mut().skip(j) {
            reflect(&mut col[j..]);
        }
        reflect(&mut b[j..]);
    }

    // R is upper triangular: r[i][j] = a[j][i] for i <= j.
    let r = |i: usize, j: usize| a[j][i];
    for j in 0..k {
        if r(j, j).abs() <= RANK_TOL * col_norms[j] {
            return Err(StatsError::SingularDesign(j));
        }
    }
    let mut coef = vec![0.0; k];
    for i in (0..k).rev() {
        let mut s = b[i];
        for j in i + 1..k {
            s -= r(i, j) * coef[j];
        }
        coef[i] = s / r(i, i);
    }

    // R⁻¹ by back substitution, then (XᵀWX)⁻¹ = R⁻¹ R⁻ᵀ.
    let mut rinv = Matrix::zeros(k, k);
    for col in 0..k {
        for i in (0..=col).rev() {
            let mut s = if i == col { 1.0 } else { 0.0 };
            for j in i + 1..=col {
                s -= r(i, j) * rinv.get(j, col);
            }
            rinv.set(i, col, s / r(i, i));
        }
    }
    let normal_inverse = Matrix::from_fn(k, k, |i, j| (i.max(j)..k).map(|l| rinv.get(i, l) * rinv.get(j, l)).sum());

    let weighted_rss = (0..n)
        .map(|i| {
            let fit: f64 = design.row(i).iter().zip(&coef).map(|(x, c)| x * c).sum();
            weights[i] * (response[i] - fit).powi(2)
        })
        .collect::<NeumaierSum>()
        .total();
    let residual_df = n - k;
    let residual_variance = if residual_df > 0 { weighted_rss / residual_df as f64 } else { f64::NAN };
    let covariance = Matrix::from_fn(k, k, |i, j| normal_inverse.get(i, j) * residual_variance);

    Ok(WlsSolution { coefficients: coef, normal_inverse, covariance, residual_variance, weighted_rss, residual_df })
}

fn norm(v: &[f64]) -> f64 {
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    scale * v.iter().map(|x| (x / scale).powi(2)).sum::<f64>().sqrt()
}
