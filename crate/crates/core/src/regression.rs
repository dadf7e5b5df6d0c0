//! Multivariate linear regression `Y = X M + tau Z` reduced to the additive model on
//! `Q = U'Y`, where `U` spans the column space of `X`.

use crate::density::MarginalDensity;
use crate::df::{df_for_penalty, df_reduced_rank, sure_from_residual, DfEstimate};
use crate::error::{Error, Result};
use crate::penalty::PenaltySpec;
use crate::spectral::{apply_spectral, svd, thin_svd, truncate_rank, Mat, Prox, SvdDecomposition};

/// Relative cutoff below which singular values of `X` count as zero.
pub const RANK_TOL: f64 = 1e-10;

/// Thin SVD of the design restricted to its numerical rank `r`.
#[derive(Clone, Debug)]
pub struct DesignFactorization {
    /// `m x r`
    pub u: Mat,
    pub d: Vec<f64>,
    /// `p x r`
    pub v: Mat,
    pub m: usize,
    pub p: usize,
}

impl DesignFactorization {
    pub fn new(x: &Mat) -> Result<DesignFactorization> {
        let (m, p) = x.shape();
        if m == 0 || p == 0 {
            return Err(Error::ShapeMismatch("design must be nonempty".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let (u0, s, v0) = thin_svd(x)?;
        let smax = s.iter().fold(0.0f64, |a, &b| a.max(b));
        let mut keep: Vec<usize> = (0..s.len()).filter(|&i| s[i] > RANK_TOL * smax).collect();
        keep.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
        if keep.is_empty() {
            return Err(Error::InvalidArgument("design matrix is zero".into()));
        }
        let u = u0.select_columns(keep.iter());
        let v = v0.select_columns(keep.iter());
        let d = keep.iter().map(|&i| s[i]).collect();
        Ok(DesignFactorization { u, d, v, m, p })
    }

    pub fn rank(&self) -> usize {
        self.d.len()
    }

    fn check_response(&self, y: &Mat) -> Result<()> {
        if y.nrows() != self.m {
            return Err(Error::ShapeMismatch(format!(
                "response has {} rows, design has {}",
                y.nrows(),
                self.m
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(())
    }

    /// `Q = U'Y`, an `r x n` matrix.
    pub fn project(&self, y: &Mat) -> Result<Mat> {
        self.check_response(y)?;
        Ok(self.u.tr_mul(y))
    }

    /// Coefficients `V D^{-1} U' F` for a fitted value `F` in the column space of `X`;
    /// only defined when `X` has full column rank.
    pub fn coefficients(&self, fitted: &Mat) -> Option<Mat> {
        if self.rank() < self.p {
            return None;
        }
        let mut w = self.u.tr_mul(fitted);
        for (i, &di) in self.d.iter().enumerate() {
            w.row_mut(i).scale_mut(1.0 / di);
        }
        Some(&self.v * w)
    }
}

/// Least squares fitted value `U U' Y`.
pub fn least_squares_fit(fact: &DesignFactorization, y: &Mat) -> Result<Mat> {
    Ok(&fact.u * fact.project(y)?)
}

#[derive(Clone, Debug)]
pub struct RegressionFit {
    /// `X M_hat`, `m x n`.
    pub fitted: Mat,
    /// `M_hat` when `X` has full column rank.
    pub coefficients: Option<Mat>,
    pub df: DfEstimate,
    /// SVD of `Q = U'Y`.
    pub q_svd: SvdDecomposition,
}

impl RegressionFit {
    /// SURE for the prediction error `||X M_hat - X M||_F^2`.
    pub fn sure(&self, y: &Mat, tau: f64) -> Result<f64> {
        if y.shape() != self.fitted.shape() {
            return Err(Error::ShapeMismatch("response does not match fit".into()));
        }
        Ok(sure_from_residual((&self.fitted - y).norm_squared(), y.len(), self.df.value, tau))
    }
}

/// Reduced rank regression: `X M_K = U C_K(U'Y)`. Ranks at or above `min(r, n)` give
/// the least squares fit.
pub fn reduced_rank_regression(fact: &DesignFactorization, y: &Mat, k: usize) -> Result<RegressionFit> {
    let q = fact.project(y)?;
    let q_svd = svd(&q)?;
    let k = k.min(q_svd.n());
    let fitted = &fact.u * truncate_rank(&q_svd, k)?;
    let df = df_reduced_rank(&q_svd, k)?;
    Ok(RegressionFit { coefficients: fact.coefficients(&fitted), fitted, df, q_svd })
}

/// Degrees of freedom of reduced rank regression.
pub fn df_reduced_rank_regression(fact: &DesignFactorization, y: &Mat, k: usize) -> Result<DfEstimate> {
    Ok(reduced_rank_regression(fact, y, k)?.df)
}

/// Spectral regularized regression `X M_theta = U S_theta(U'Y)`.
pub fn spectral_regression<D: MarginalDensity + ?Sized>(
    fact: &DesignFactorization,
    y: &Mat,
    spec: &PenaltySpec,
    density: Option<&D>,
) -> Result<RegressionFit> {
    spec.validate()?;
    let q = fact.project(y)?;
    let q_svd = svd(&q)?;
    let fitted = &fact.u * apply_spectral(&q_svd, &Prox(*spec))?;
    let df = df_for_penalty(&q_svd, spec, density)?;
    Ok(RegressionFit { coefficients: fact.coefficients(&fitted), fitted, df, q_svd })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_design_reduces_to_truncation() {
        let x = Mat::identity(4, 4);
        let y = Mat::from_fn(4, 3, |i, j| ((i * 3 + j) as f64 * 1.3).sin() + if i == j { 3.0 } else { 0.0 });
        let f = DesignFactorization::new(&x).unwrap();
        let fit = reduced_rank_regression(&f, &y, 1).unwrap();
        let direct = truncate_rank(&svd(&y).unwrap(), 1).unwrap();
        assert!((&fit.fitted - &direct).amax() < 1e-12);
        let d = crate::df::df_reduced_rank(&svd(&y).unwrap(), 1).unwrap();
        assert!((fit.df.value - d.value).abs() < 1e-10);
    }

    #[test]
    fn full_rank_k_gives_rn() {
        let x = Mat::from_fn(6, 3, |i, j| ((i + 4 * j) as f64).cos() + if i == j { 2.0 } else { 0.0 });
        let y = Mat::from_fn(6, 2, |i, j| ((2 * i + j) as f64 * 0.7).sin());
        let f = DesignFactorization::new(&x).unwrap();
        let fit = reduced_rank_regression(&f, &y, 5).unwrap();
        assert_eq!(fit.df.value, 6.0);
        let ls = least_squares_fit(&f, &y).unwrap();
        assert!((&fit.fitted - ls).amax() < 1e-12);
        let coef = fit.coefficients.unwrap();
        assert!((&x * coef - &fit.fitted).amax() < 1e-10);
    }

    #[test]
    fn shape_mismatch() {
        let f = DesignFactorization::new(&Mat::identity(3, 2)).unwrap();
        assert!(matches!(f.project(&Mat::zeros(4, 2)), Err(Error::ShapeMismatch(_))));
    }
}
