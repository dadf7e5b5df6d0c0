//! Closed-form degrees-of-freedom estimates and SURE for spectral estimators.

use crate::density::MarginalDensity;
use crate::error::{Error, Result};
use crate::penalty::{bridge_discontinuity, bridge_prox, bridge_prox_derivative, Penalty, PenaltySpec};
use crate::spectral::{Mat, Spectrum, GROUP_TOL, ZERO_TOL};

/// Additive pieces of a degrees-of-freedom estimate.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DfComponents {
    /// Sum of derivatives of the thresholding function.
    pub deriv_term: f64,
    /// `(m - n) sum f(sigma_i) / sigma_i`.
    pub shape_term: f64,
    /// Interaction between distinct singular values.
    pub cross_term: f64,
    /// Contribution of a zero singular value block.
    pub zero_block_term: f64,
    /// Correction for a discontinuous thresholding function.
    pub density_term: f64,
}

impl DfComponents {
    pub fn total(&self) -> f64 {
        self.deriv_term + self.shape_term + self.cross_term + self.zero_block_term + self.density_term
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DfEstimate {
    pub value: f64,
    pub components: DfComponents,
    /// Whether Stein's lemma applies directly (no density correction needed).
    pub applicable: bool,
    pub reason: Option<String>,
}

impl DfEstimate {
    fn from_components(c: DfComponents, applicable: bool, reason: Option<String>) -> DfEstimate {
        DfEstimate { value: c.total(), components: c, applicable, reason }
    }

    /// The same estimate without the density correction.
    pub fn without_density(&self) -> DfEstimate {
        let mut c = self.components;
        c.density_term = 0.0;
        DfEstimate::from_components(c, self.applicable, self.reason.clone())
    }
}

/// Requires nonincreasing, distinct, positive singular values.
pub fn check_distinct_positive(sp: &Spectrum) -> Result<()> {
    let s = &sp.sigma;
    let Some(&s1) = s.first() else {
        return Err(Error::ShapeMismatch("empty spectrum".into()));
    };
    let last = *s.last().unwrap();
    if !(last > ZERO_TOL * s1) || last <= 0.0 {
        return Err(Error::RepeatedOrZero(format!("smallest singular value is {last}")));
    }
    let tol = GROUP_TOL * s1.max(1.0);
    if let Some(w) = s.windows(2).find(|w| w[0] - w[1] <= tol) {
        return Err(Error::RepeatedOrZero(format!("{} and {} coincide", w[0], w[1])));
    }
    Ok(())
}

fn cross_sum(sigma: &[f64], f: &[f64]) -> f64 {
    // Each unordered pair contributes (s_i f_i - s_j f_j) / (s_i^2 - s_j^2), twice.
    let mut out = 0.0;
    for i in 0..sigma.len() {
        for j in i + 1..sigma.len() {
            let (si, sj) = (sigma[i], sigma[j]);
            let num = si * f[i] - sj * f[j];
            if num != 0.0 {
                out += num / (si * si - sj * sj);
            }
        }
    }
    2.0 * out
}

/// Degrees of freedom of `U S_theta(Sigma) V'` for a penalty whose proximal map is
/// Lipschitz. Derivatives at a kink are taken just above it.
pub fn df_spectral<S: AsRef<Spectrum>>(svd: &S, spec: &PenaltySpec) -> Result<DfEstimate> {
    let sp = svd.as_ref();
    spec.validate()?;
    if !spec.stein_applicable() {
        return Err(Error::NotApplicable(format!(
            "{spec}: concavity bound {} is not above -1, so the thresholding map is not Lipschitz",
            spec.concavity_bound()
        )));
    }
    check_distinct_positive(sp)?;
    let mn = sp.m as f64 - sp.n as f64;
    let mut c = DfComponents::default();
    let mut vals = Vec::with_capacity(sp.n);
    for &s in &sp.sigma {
        let v = spec.prox(s)?;
        let d = match spec.prox_derivative(s) {
            Err(Error::AtKink { .. }) => spec.prox_derivative(s + 1e-9 * s.max(1.0))?,
            r => r?,
        };
        c.deriv_term += d;
        c.shape_term += mn * v / s;
        vals.push(v);
    }
    c.cross_term = cross_sum(&sp.sigma, &vals);
    Ok(DfEstimate::from_components(c, true, None))
}

fn check_density<D: MarginalDensity + ?Sized>(d: &D, n: usize) -> Result<()> {
    if d.len() != n {
        return Err(Error::ShapeMismatch(format!("density covers {} values, need {n}", d.len())));
    }
    Ok(())
}

/// Degrees of freedom of bridge thresholding with `q` in `[0, 1]`, including the
/// density correction for the jump at the threshold.
pub fn df_bridge<S, D>(svd: &S, theta: f64, q: f64, density: &D) -> Result<DfEstimate>
where
    S: AsRef<Spectrum>,
    D: MarginalDensity + ?Sized,
{
    let sp = svd.as_ref();
    if !(theta.is_finite() && theta >= 0.0) || !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidSpec(format!("bridge needs theta >= 0, q in [0,1]; got {theta}, {q}")));
    }
    check_distinct_positive(sp)?;
    check_density(density, sp.n)?;
    let disc = bridge_discontinuity(theta, q);
    let mn = sp.m as f64 - sp.n as f64;
    let mut c = DfComponents::default();
    let mut vals = Vec::with_capacity(sp.n);
    for &s in &sp.sigma {
        if disc.jump > 0.0 && (s - disc.location).abs() <= crate::penalty::KINK_TOL * disc.location.max(1.0) {
            return Err(Error::AtKink { sigma: s, kink: disc.location });
        }
        let v = bridge_prox(s, theta, q)?;
        c.deriv_term += bridge_prox_derivative(s, theta, q)?;
        c.shape_term += mn * v / s;
        vals.push(v);
    }
    c.cross_term = cross_sum(&sp.sigma, &vals);
    if disc.jump > 0.0 {
        let mut total = 0.0;
        for i in 0..sp.n {
            total += density.density(i, disc.location)?;
        }
        c.density_term = disc.jump * total;
    }
    Ok(DfEstimate::from_components(
        c,
        false,
        Some("thresholding map jumps; density correction included".into()),
    ))
}

/// Degrees of freedom of hard thresholding at `sqrt(2 theta)` (rank penalty).
pub fn df_rank_regularized<S, D>(svd: &S, theta: f64, density: &D) -> Result<DfEstimate>
where
    S: AsRef<Spectrum>,
    D: MarginalDensity + ?Sized,
{
    df_bridge(svd, theta, 0.0, density)
}

/// Degrees of freedom of the best rank-`k` approximation.
pub fn df_reduced_rank<S: AsRef<Spectrum>>(svd: &S, k: usize) -> Result<DfEstimate> {
    let sp = svd.as_ref();
    let n = sp.n;
    if k > n {
        return Err(Error::RankOutOfRange { k, max: n });
    }
    let s = &sp.sigma;
    if k > 0 && k < n && s[k - 1] - s[k] <= GROUP_TOL * s[0].max(1.0) {
        return Err(Error::TiedAtCut(k));
    }
    let kf = k as f64;
    let mut sum = 0.0;
    for i in 0..k {
        let si2 = s[i] * s[i];
        for sj in &s[k..] {
            let sj2 = sj * sj;
            sum += sj2 / (si2 - sj2);
        }
    }
    let c = DfComponents {
        deriv_term: kf,
        shape_term: (sp.m as f64 - n as f64) * kf,
        cross_term: kf * (kf - 1.0) + 2.0 * kf * (n as f64 - kf) + 2.0 * sum,
        zero_block_term: 0.0,
        density_term: 0.0,
    };
    Ok(DfEstimate::from_components(
        c,
        false,
        Some("truncation is not weakly differentiable everywhere; estimate is unbiased".into()),
    ))
}

/// Dispatches to the estimator matching the penalty family.
pub fn df_for_penalty<S, D>(svd: &S, spec: &PenaltySpec, density: Option<&D>) -> Result<DfEstimate>
where
    S: AsRef<Spectrum>,
    D: MarginalDensity + ?Sized,
{
    match spec.penalty {
        Penalty::Bridge { q } => df_bridge(svd, spec.theta, q, density.ok_or(Error::MissingDensity)?),
        Penalty::Rank => df_rank_regularized(svd, spec.theta, density.ok_or(Error::MissingDensity)?),
        _ => df_spectral(svd, spec),
    }
}

/// Stein's unbiased risk estimate `-tau^2 mn + ||fit - Y||^2 + 2 tau^2 df`.
pub fn sure_risk(y: &Mat, fit: &Mat, df: f64, tau: f64) -> Result<f64> {
    if y.shape() != fit.shape() {
        return Err(Error::ShapeMismatch(format!("Y is {:?}, fit is {:?}", y.shape(), fit.shape())));
    }
    Ok(sure_from_residual((fit - y).norm_squared(), y.len(), df, tau))
}

/// SURE from a precomputed squared residual norm over `mn` entries.
pub fn sure_from_residual(rss: f64, mn: usize, df: f64, tau: f64) -> f64 {
    let t2 = tau * tau;
    -t2 * mn as f64 + rss + 2.0 * t2 * df
}
