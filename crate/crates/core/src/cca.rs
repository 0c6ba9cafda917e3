//! Classical two-view CCA on flat vectors, used as the Euclidean baseline.
//!
//! Reconstructions live in the ambient space and are not projected back
//! onto the group.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Ridge added to both covariance matrices before whitening.
pub const RIDGE: f64 = 1e-8;
const SINGULAR_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct CcaComponent {
    /// Unit-norm canonical direction in X space.
    pub a: Vec<f64>,
    /// Unit-norm canonical direction in Y space.
    pub b: Vec<f64>,
    pub correlation: f64,
    /// Least-squares line from the X score to the Y score.
    pub slope: f64,
    pub intercept: f64,
    /// Least-squares map from the predicted Y score back to Y space.
    pub loading: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CcaModel {
    pub mean_x: Vec<f64>,
    pub mean_y: Vec<f64>,
    pub components: Vec<CcaComponent>,
}

fn to_matrix(rows: &[Vec<f64>]) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if d == 0 {
        return Err(Error::InvalidInput("empty view".into()));
    }
    if let Some(r) = rows.iter().find(|r| r.len() != d) {
        return Err(Error::LengthMismatch { left: r.len(), right: d });
    }
    let m = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
    let mean = m.row_mean().transpose();
    let centered = DMatrix::from_fn(n, d, |i, j| m[(i, j)] - mean[j]);
    Ok((centered, mean))
}

/// `(C + ridge·I)^{-1/2}` of a symmetric covariance.
fn inv_sqrt(c: DMatrix<f64>) -> DMatrix<f64> {
    let d = c.nrows();
    let eig = SymmetricEigen::new(c + DMatrix::identity(d, d) * RIDGE);
    let scale = eig.eigenvalues.map(|l| 1.0 / l.max(RIDGE).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&scale) * eig.eigenvectors.transpose()
}

fn unit(v: DVector<f64>) -> Vec<f64> {
    let n = v.norm();
    v.iter().map(|c| c / n).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

/// Top-`k` canonical pairs with score regressions and loadings.
pub fn fit_euclidean_cca(x: &[Vec<f64>], y: &[Vec<f64>], k: usize) -> Result<CcaModel> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::DegenerateData(format!("CCA needs at least 2 samples, got {n}")));
    }
    let (xc, mean_x) = to_matrix(x)?;
    let (yc, mean_y) = to_matrix(y)?;
    let max_k = xc.ncols().min(yc.ncols());
    if k == 0 || k > max_k {
        return Err(Error::InvalidInput(format!("K = {k} must be in 1..={max_k}")));
    }
    let nf = (n - 1) as f64;
    let cxx = xc.transpose() * &xc / nf;
    let cyy = yc.transpose() * &yc / nf;
    let cxy = xc.transpose() * &yc / nf;
    let wx = inv_sqrt(cxx);
    let wy = inv_sqrt(cyy);
    let svd = (&wx * cxy * &wy).svd(true, true);
    let (u, vt) = (svd.u.expect("requested U"), svd.v_t.expect("requested Vᵀ"));

    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));

    let mut components = Vec::with_capacity(k);
    let mut scores_hat = DMatrix::zeros(n, k);
    for (c, &j) in order.iter().take(k).enumerate() {
        let rho = svd.singular_values[j];
        if !(rho > SINGULAR_TOL) {
            return Err(Error::DegenerateData(format!(
                "canonical correlation {c} is {rho:e}; views are uncorrelated or rank deficient"
            )));
        }
        let mut a = unit(&wx * u.column(j));
        let mut b = unit(&wy * vt.row(j).transpose());
        if crate::ipca::canonicalize(&mut a) {
            b.iter_mut().for_each(|c| *c = -*c);
        }
        let t: Vec<f64> = (0..n).map(|i| dot(&a, xc.row(i).transpose().as_slice())).collect();
        let s: Vec<f64> = (0..n).map(|i| dot(&b, yc.row(i).transpose().as_slice())).collect();
        let mt = t.iter().sum::<f64>() / n as f64;
        let ms = s.iter().sum::<f64>() / n as f64;
        let stt: f64 = t.iter().map(|v| (v - mt).powi(2)).sum();
        let sts: f64 = t.iter().zip(&s).map(|(p, q)| (p - mt) * (q - ms)).sum();
        if !(stt > 0.0) {
            return Err(Error::DegenerateData("zero-variance canonical score".into()));
        }
        let slope = sts / stt;
        let intercept = ms - slope * mt;
        for i in 0..n {
            scores_hat[(i, c)] = slope * t[i] + intercept;
        }
        components.push(CcaComponent {
            a,
            b,
            correlation: rho,
            slope,
            intercept,
            loading: Vec::new(),
        });
    }

    // joint least squares Yc ≈ Ŝ L
    let gram = scores_hat.transpose() * &scores_hat;
    let rhs = scores_hat.transpose() * &yc;
    let loadings = gram
        .cholesky()
        .ok_or_else(|| Error::DegenerateData("predicted scores are collinear".into()))?
        .solve(&rhs);
    for (c, comp) in components.iter_mut().enumerate() {
        comp.loading = loadings.row(c).iter().copied().collect();
    }
    Ok(CcaModel {
        mean_x: mean_x.iter().copied().collect(),
        mean_y: mean_y.iter().copied().collect(),
        components,
    })
}

impl CcaModel {
    /// `ŷ = mean_y + Σₖ ŝₖ loadingₖ` with `ŝₖ = slopeₖ aₖ·(x − mean_x) + interceptₖ`.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.mean_x.len() {
            return Err(Error::LengthMismatch {
                left: x.len(),
                right: self.mean_x.len(),
            });
        }
        let centered: Vec<f64> = x.iter().zip(&self.mean_x).map(|(a, m)| a - m).collect();
        let mut y = self.mean_y.clone();
        for comp in &self.components {
            let s_hat = comp.slope * dot(&comp.a, &centered) + comp.intercept;
            y.iter_mut().zip(&comp.loading).for_each(|(v, l)| *v += s_hat * l);
        }
        Ok(y)
    }

    pub fn predict_many(&self, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        xs.iter().map(|x| self.predict(x)).collect()
    }
}
